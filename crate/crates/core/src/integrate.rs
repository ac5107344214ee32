//! Lie group integrators for ẏ = ρ(f(y))(y) on a manifold carrying a right action.
//!
//! Steps are taken in the algebra and pushed to M through the group action, so every
//! action-based iterate stays on M up to roundoff.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::Action;
use crate::error::{check_dim, Error, Result};
use crate::Point;

pub type CoefficientMap = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;

/// ẏ = f(y)_M(y), y(0) = y₀, integrated up to `horizon`.
#[derive(Clone)]
pub struct ActionODE {
    pub name: String,
    action: Arc<Action>,
    f: CoefficientMap,
    pub y0: Point,
    pub horizon: f64,
}

impl std::fmt::Debug for ActionODE {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ActionODE({}, y0 = {:?}, T = {})", self.name, self.y0.as_slice(), self.horizon)
    }
}

const TANGENCY_TOL: f64 = 1e-10;

impl ActionODE {
    pub fn new(
        name: impl Into<String>,
        action: Arc<Action>,
        f: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
        y0: Point,
        horizon: f64,
    ) -> Result<Self> {
        let m = action.manifold().clone();
        m.check_point(&y0)?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        let f: CoefficientMap = Arc::new(f);
        for x in m.sample_points(11, 20).iter().chain(std::iter::once(&y0)) {
            let xi = f(x);
            check_dim(action.algebra().dim(), xi.len())?;
            let v = action.fundamental_field(&xi, x);
            let normal = (&v - m.tangent_project(x, &v)).norm();
            if normal > TANGENCY_TOL * (1.0 + v.norm()) {
                return Err(Error::invalid(format!(
                    "generated vector field is not tangent at {:?} (normal part {normal:.2e})",
                    x.as_slice()
                )));
            }
        }
        Ok(ActionODE { name: name.into(), action, f, y0, horizon })
    }

    /// S² test problem f(y) = (1, y₃/2, y₁/3) under the so(3) action, T = 1.
    pub fn sphere_builtin() -> Self {
        let y0 = DVector::from_vec(vec![1.0, 1.0, 1.0]).normalize();
        Self::new(
            "sphere_varying",
            Arc::new(Action::so3_sphere()),
            |y| DVector::from_vec(vec![1.0, 0.5 * y[2], y[0] / 3.0]),
            y0,
            1.0,
        )
        .expect("builtin problem is well formed")
    }

    /// Constant coefficients: the exact solution is a one-parameter subgroup orbit.
    pub fn constant(action: Arc<Action>, a: DVector<f64>, y0: Point, horizon: f64) -> Result<Self> {
        Self::new("constant", action, move |_| a.clone(), y0, horizon)
    }

    pub fn action(&self) -> &Arc<Action> {
        &self.action
    }

    pub fn coefficients(&self, y: &Point) -> DVector<f64> {
        (self.f)(y)
    }

    /// The ambient vector field x ↦ ρ(f(x), x).
    pub fn vector_field(&self, y: &Point) -> DVector<f64> {
        self.action.fundamental_field(&(self.f)(y), y)
    }

    /// Same problem with a different initial point and horizon.
    pub fn with_initial(&self, y0: Point, horizon: f64) -> Result<Self> {
        self.action.manifold().check_point(&y0)?;
        Ok(ActionODE { y0, horizon, ..self.clone() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LieEuler,
    Rkmk4 { dexpinv_order: u32 },
    Rk4Ambient,
}

impl Method {
    pub const RKMK4: Method = Method::Rkmk4 { dexpinv_order: 2 };

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lie_euler" => Some(Method::LieEuler),
            "rkmk4" => Some(Method::RKMK4),
            "rk4_ambient" => Some(Method::Rk4Ambient),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Method::LieEuler => "lie_euler".into(),
            Method::Rkmk4 { dexpinv_order: 2 } => "rkmk4".into(),
            Method::Rkmk4 { dexpinv_order } => format!("rkmk4 (dexpinv order {dexpinv_order})"),
            Method::Rk4Ambient => "rk4_ambient".into(),
        }
    }

    pub fn is_action_based(&self) -> bool {
        !matches!(self, Method::Rk4Ambient)
    }
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("step size must be non-negative, got {h}")))
    }
}

/// Λ(exp(h f(y)), y).
pub fn lie_euler_step(p: &ActionODE, y: &Point, h: f64) -> Result<Point> {
    check_step(h)?;
    if h == 0.0 {
        return Ok(y.clone());
    }
    p.action.flow(&(p.coefficients(y) * h), y)
}

pub fn rkmk4_step(p: &ActionODE, y: &Point, h: f64) -> Result<Point> {
    rkmk4_step_with_order(p, y, h, 2)
}

/// Four-stage RKMK in algebra coordinates. For a right action Θ' = dexp⁻¹_{−Θ}(f).
pub fn rkmk4_step_with_order(p: &ActionODE, y: &Point, h: f64, order: u32) -> Result<Point> {
    check_step(h)?;
    if order > 2 {
        return Err(Error::invalid(format!("dexpinv order must be 0, 1 or 2 (got {order})")));
    }
    if h == 0.0 {
        return Ok(y.clone());
    }
    let g = p.action.algebra();
    let stage = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let yi = p.action.flow(theta, y)?;
        Ok(g.dexpinv_vec(&-theta, &p.coefficients(&yi), order) * h)
    };
    let k1 = p.coefficients(y) * h;
    let k2 = stage(&(&k1 * 0.5))?;
    let k3 = stage(&(&k2 * 0.5))?;
    let k4 = stage(&k3)?;
    let theta = (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0;
    p.action.flow(&theta, y)
}

/// Classical RK4 on the ambient field, without retraction.
pub fn rk4_ambient_step(p: &ActionODE, y: &Point, h: f64) -> Result<Point> {
    check_step(h)?;
    if h == 0.0 {
        return Ok(y.clone());
    }
    let k1 = p.vector_field(y);
    let k2 = p.vector_field(&(y + &k1 * (h / 2.0)));
    let k3 = p.vector_field(&(y + &k2 * (h / 2.0)));
    let k4 = p.vector_field(&(y + &k3 * h));
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

pub fn step(p: &ActionODE, method: Method, y: &Point, h: f64) -> Result<Point> {
    match method {
        Method::LieEuler => lie_euler_step(p, y, h),
        Method::Rkmk4 { dexpinv_order } => rkmk4_step_with_order(p, y, h, dexpinv_order),
        Method::Rk4Ambient => rk4_ambient_step(p, y, h),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub method: String,
    pub h: f64,
    pub steps: usize,
    pub final_point: Vec<f64>,
    /// Largest constraint violation over all iterates.
    pub max_drift: f64,
}

pub fn integrate(p: &ActionODE, method: Method, h: f64, steps: usize) -> Result<Trajectory> {
    check_step(h)?;
    let m = p.action.manifold();
    let mut y = p.y0.clone();
    let mut drift = m.constraint_norm(&y);
    for _ in 0..steps {
        y = step(p, method, &y, h)?;
        drift = drift.max(m.constraint_norm(&y));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!("{} produced non-finite values at h = {h}", method.name())));
    }
    Ok(Trajectory { method: method.name(), h, steps, final_point: y.as_slice().to_vec(), max_drift: drift })
}

/// Number of steps of size h covering the horizon exactly.
pub fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    let n = (horizon / h).round();
    if (n * h - horizon).abs() > 1e-9 * horizon.max(1.0) || n < 1.0 {
        return Err(Error::invalid(format!("step {h} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Geometric ladder h₀·2^{−j}, j = 0..n.
pub fn halving_ladder(h0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| h0 * 0.5f64.powi(j as i32)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub method: String,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub drifts: Vec<f64>,
    /// Least-squares slope of log error against log h; absent when every error is at roundoff.
    pub slope: Option<f64>,
    pub exact: bool,
    pub reference_h: f64,
}

const ROUNDOFF_FLOOR: f64 = 1e-13;

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Terminal point of tiny-step RKMK4.
pub fn reference_solution(p: &ActionODE, h_ref: f64) -> Result<Point> {
    let n = steps_for(p.horizon, h_ref)?;
    let t = integrate(p, Method::RKMK4, h_ref, n)?;
    Ok(DVector::from_vec(t.final_point))
}

pub fn convergence_study(p: &ActionODE, method: Method, ladder: &[f64]) -> Result<ConvergenceTable> {
    if ladder.len() < 4 {
        return Err(Error::invalid(format!("ladder needs at least 4 step sizes, got {}", ladder.len())));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) || ladder.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("ladder step sizes must be positive and strictly decreasing"));
    }
    let h_ref = ladder[ladder.len() - 1] / 64.0;
    let reference = reference_solution(p, h_ref)?;
    let runs: Vec<Result<Trajectory>> = ladder
        .par_iter()
        .map(|&h| integrate(p, method, h, steps_for(p.horizon, h)?))
        .collect();
    let mut errors = Vec::new();
    let mut drifts = Vec::new();
    for r in runs {
        let t = r?;
        errors.push((DVector::from_vec(t.final_point) - &reference).norm());
        drifts.push(t.max_drift);
    }
    let exact = errors.iter().all(|e| *e < ROUNDOFF_FLOOR);
    let slope = if exact {
        None
    } else {
        let lx: Vec<f64> = ladder.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
        Some(least_squares_slope(&lx, &ly))
    };
    Ok(ConvergenceTable {
        method: method.name(),
        step_sizes: ladder.to_vec(),
        errors,
        drifts,
        slope,
        exact,
        reference_h: h_ref,
    })
}

/// Distance between the RKMK4 reference and tiny-step ambient RK4 with retraction after every step.
pub fn cross_check_reference(p: &ActionODE, h_ref: f64) -> Result<f64> {
    let reference = reference_solution(p, h_ref)?;
    let m = p.action.manifold();
    let mut y = p.y0.clone();
    for _ in 0..steps_for(p.horizon, h_ref)? {
        y = m.retract(&rk4_ambient_step(p, &y, h_ref)?);
    }
    Ok((y - reference).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_core::LieAlgebra;

    #[test]
    fn zero_step_is_identity() {
        let p = ActionODE::sphere_builtin();
        for m in [Method::LieEuler, Method::RKMK4, Method::Rk4Ambient] {
            assert_eq!(step(&p, m, &p.y0, 0.0).unwrap(), p.y0);
        }
        assert!(step(&p, Method::LieEuler, &p.y0, -0.1).unwrap_err().is_input_error());
    }

    #[test]
    fn constant_coefficients_follow_the_subgroup() {
        let a = DVector::from_vec(vec![0.3, -0.2, 0.7]);
        let action = Arc::new(Action::so3_sphere());
        let y0 = DVector::from_vec(vec![0.0, 0.6, 0.8]);
        let p = ActionODE::constant(action.clone(), a.clone(), y0.clone(), 1.0).unwrap();
        let (h, n) = (0.05, 20);
        let exact = action.flow(&(&a * (h * n as f64)), &y0).unwrap();
        for m in [Method::LieEuler, Method::RKMK4] {
            let t = integrate(&p, m, h, n).unwrap();
            assert!((DVector::from_vec(t.final_point) - &exact).norm() < 1e-13);
        }
        // the subgroup orbit also solves the ODE: compare with its derivative
        let e = 1e-6;
        let dy = (action.flow(&(&a * e), &y0).unwrap() - action.flow(&(&a * -e), &y0).unwrap()) / (2.0 * e);
        assert!((dy - p.vector_field(&y0)).norm() < 1e-8);
    }

    #[test]
    fn lie_euler_first_order_and_rkmk4_fourth_order() {
        let p = ActionODE::sphere_builtin();
        let ladder = halving_ladder(0.1, 5);
        let le = convergence_study(&p, Method::LieEuler, &ladder).unwrap();
        let rk = convergence_study(&p, Method::RKMK4, &ladder).unwrap();
        let (s1, s4) = (le.slope.unwrap(), rk.slope.unwrap());
        assert!((0.8..=1.2).contains(&s1), "{s1}");
        assert!((3.7..=4.3).contains(&s4), "{s4}");
    }

    #[test]
    fn uncorrected_rkmk4_loses_order() {
        let p = ActionODE::sphere_builtin();
        let ladder = halving_ladder(0.1, 5);
        let t = convergence_study(&p, Method::Rkmk4 { dexpinv_order: 0 }, &ladder).unwrap();
        assert!(t.slope.unwrap() <= 2.5, "{:?}", t.slope);
    }

    #[test]
    fn reference_agrees_with_ambient_baseline() {
        let p = ActionODE::sphere_builtin();
        assert!(cross_check_reference(&p, 0.1 / 16.0 / 64.0).unwrap() < 1e-10);
    }

    #[test]
    fn ladder_validation() {
        let p = ActionODE::sphere_builtin();
        assert!(convergence_study(&p, Method::LieEuler, &[0.1, 0.05, 0.025]).is_err());
        assert!(convergence_study(&p, Method::LieEuler, &[0.1, 0.1, 0.05, 0.025]).is_err());
        assert!(steps_for(1.0, 0.3).is_err());
    }

    #[test]
    fn action_without_group_exponential() {
        let alg = Arc::new(LieAlgebra::so3());
        let m = Arc::new(crate::manifold::EmbeddedManifold::sphere2());
        let action = Action::custom("cross", alg, m, |xi, x| {
            let v = nalgebra::Vector3::new(x[0], x[1], x[2]).cross(&nalgebra::Vector3::new(xi[0], xi[1], xi[2]));
            DVector::from_vec(vec![v[0], v[1], v[2]])
        }, |xi, _, v| {
            let w = nalgebra::Vector3::new(v[0], v[1], v[2]).cross(&nalgebra::Vector3::new(xi[0], xi[1], xi[2]));
            DVector::from_vec(vec![w[0], w[1], w[2]])
        });
        let p = ActionODE::constant(Arc::new(action), DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 0.0, 1.0]), 1.0).unwrap();
        assert!(matches!(lie_euler_step(&p, &p.y0, 0.1), Err(Error::Unsupported(_))));
        assert!(rk4_ambient_step(&p, &p.y0, 0.1).is_ok());
    }
}
