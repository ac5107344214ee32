//! Recovering a Lie algebra action from a flat TM-connection on a transitive algebroid.
//!
//! A frame of parallel sections is built by transporting the standard basis from a base point.
//! The bracket of frame sections defines structure functions; they are constant exactly when the
//! dual connection is flat, in which case they define a Lie algebra acting through the anchor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::{make_action_algebroid, Action, Algebroid, AlgebroidKind, ConstantsField};
use crate::connection::{AConnection, ConnectionKind, TmConnection};
use crate::error::{check_dim, Error, Result};
use crate::lie_core::{Invariants, LieAlgebra};
use crate::manifold::{jacobi_lie_bracket, EmbeddedManifold, Polynomial, Section};
use crate::probes::ProbeBattery;
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReconstructOptions {
    pub flatness_tol: f64,
    pub loop_tol: f64,
    pub constancy_tol: f64,
    pub num_loops: usize,
    pub loop_size: f64,
    pub steps: usize,
    /// Longest ambient chord integrated in one piece; longer chords are split at retracted midpoints.
    pub max_chord: f64,
    pub num_points: usize,
    pub seed: u64,
    /// Skipping the curvature precheck leaves the loop diagnostic as the only guard.
    pub check_flatness: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            flatness_tol: 1e-6,
            loop_tol: 1e-6,
            constancy_tol: 1e-4,
            num_loops: 10,
            loop_size: 0.05,
            steps: 64,
            max_chord: 0.5,
            num_points: 20,
            seed: 7,
            check_flatness: true,
        }
    }
}

/// Solves dE/dt = −Γ(γ, γ̇) E along retracted chords.
#[derive(Debug)]
struct Transporter {
    tm: Arc<TmConnection>,
    manifold: Arc<EmbeddedManifold>,
    steps: usize,
    max_chord: f64,
}

const STEP_DOUBLING_TOL: f64 = 1e-11;
const MAX_STEPS: usize = 4096;

impl Transporter {
    fn rhs(&self, p: &Point, q: &Point, t: f64, e: &DMatrix<f64>) -> DMatrix<f64> {
        let dir = q - p;
        let z = p + &dir * t;
        let y = self.manifold.retract(&z);
        let v = self.manifold.retract_differential(&z, &dir);
        -(self.tm.gamma_matrix(&y, &v) * e)
    }

    fn rk4(&self, p: &Point, q: &Point, e0: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
        let h = 1.0 / n as f64;
        let mut e = e0.clone();
        for s in 0..n {
            let t = s as f64 * h;
            let k1 = self.rhs(p, q, t, &e);
            let k2 = self.rhs(p, q, t + h / 2.0, &(&e + &k1 * (h / 2.0)));
            let k3 = self.rhs(p, q, t + h / 2.0, &(&e + &k2 * (h / 2.0)));
            let k4 = self.rhs(p, q, t + h, &(&e + &k3 * h));
            e += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        e
    }

    fn chord(&self, p: &Point, q: &Point, e0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.tm.is_flat_trivial() {
            return Ok(e0.clone());
        }
        let mut n = self.steps;
        let mut coarse = self.rk4(p, q, e0, n);
        loop {
            let fine = self.rk4(p, q, e0, 2 * n);
            let err = (&fine - &coarse).norm();
            if !err.is_finite() {
                return Err(Error::Numerical("transport produced non-finite values".into()));
            }
            if err <= STEP_DOUBLING_TOL * (1.0 + fine.norm()) || 2 * n >= MAX_STEPS {
                return Ok(fine);
            }
            n *= 2;
            coarse = fine;
        }
    }

    fn path(&self, p: &Point, q: &Point, e0: &DMatrix<f64>, depth: u32) -> Result<DMatrix<f64>> {
        if (q - p).norm() <= self.max_chord || depth > 12 {
            return self.chord(p, q, e0);
        }
        let mid = (p + q) * 0.5;
        if mid.norm() < 1e-3 * (p.norm() + q.norm()) {
            return Err(Error::Numerical("transport chord passes through the origin".into()));
        }
        let m = self.manifold.retract(&mid);
        let e1 = self.path(p, &m, e0, depth + 1)?;
        self.path(&m, q, &e1, depth + 1)
    }

    fn transport(&self, p: &Point, q: &Point, e0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.path(p, q, e0, 0)
    }
}

/// Frame matrices keyed by the bit pattern of the point.
type FrameCache = Mutex<HashMap<Vec<u64>, DMatrix<f64>>>;

#[derive(Debug)]
struct FrameInner {
    transporter: Transporter,
    base_point: Point,
    k: usize,
    cache: FrameCache,
}

impl FrameInner {
    fn matrix(&self, x: &Point) -> DMatrix<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(m) = self.cache.lock().expect("frame cache poisoned").get(&key) {
            return m.clone();
        }
        let id = DMatrix::identity(self.k, self.k);
        let m = self
            .transporter
            .transport(&self.base_point, x, &id)
            .unwrap_or_else(|_| DMatrix::from_element(self.k, self.k, f64::NAN));
        self.cache.lock().expect("frame cache poisoned").insert(key, m.clone());
        m
    }

    /// D E[v] = −Γ(x, v) E for a parallel frame.
    fn matrix_derivative(&self, x: &Point, v: &DVector<f64>) -> DMatrix<f64> {
        -(self.transporter.tm.gamma_matrix(x, v) * self.matrix(x))
    }
}

/// Parallel sections e₁..e_k equal to the standard basis at `base_point`.
#[derive(Clone, Debug)]
pub struct Frame {
    inner: Arc<FrameInner>,
    pub sections: Vec<Section>,
    pub base_point: Point,
    pub flatness_residual: f64,
    pub loop_residual: f64,
}

impl Frame {
    /// Columns e_i(x).
    pub fn matrix(&self, x: &Point) -> DMatrix<f64> {
        self.inner.matrix(x)
    }

    pub fn dim(&self) -> usize {
        self.inner.k
    }

    /// The section Σ a_i e_i for fiber coefficients a.
    pub fn combine(&self, coeffs: &Section) -> Section {
        let (f1, f2, a1, a2) = (self.inner.clone(), self.inner.clone(), coeffs.clone(), coeffs.clone());
        Section::analytic(
            self.inner.k,
            coeffs.depth(),
            coeffs.derivative_depth(),
            move |x| f1.matrix(x) * a1.eval(x),
            move |d, x, v| f2.matrix_derivative(x, v) * a2.eval(x) + f2.matrix(x) * a2.derivative(d, x, v),
        )
    }
}

/// Relative TM-curvature residual over random fields, with the worst point.
pub fn tm_curvature_residual(tm: &Arc<TmConnection>, alg: &Algebroid, points: &[Point], seed: u64) -> (f64, Point) {
    let m = alg.manifold();
    let n = m.ambient_dim();
    let d = alg.differentiator();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, points.first().cloned().unwrap_or_else(|| DVector::zeros(n)));
    for _ in 0..3 {
        let tangent = |rng: &mut ChaCha8Rng| {
            Section::projected(m.clone(), (0..n).map(|_| Polynomial::random(n, 1, -1.0, 1.0, rng)).collect())
        };
        let u = tangent(&mut rng);
        let w = tangent(&mut rng);
        let y = Section::polynomial((0..tm.fiber_dim()).map(|_| Polynomial::random(n, 2, -1.0, 1.0, &mut rng)).collect());
        let scale = u.sup_norm(points) * w.sup_norm(points) * y.sup_norm(points);
        for x in points {
            let r = tm.curvature_at(d, &u, &w, &y, x).norm() / scale.max(1e-300);
            if r > worst.0 || r.is_nan() {
                worst = (r, x.clone());
            }
        }
    }
    worst
}

/// Largest ‖P − I‖ for parallel transport around small squares at the given points.
pub fn loop_residual(tm: &Arc<TmConnection>, manifold: &Arc<EmbeddedManifold>, points: &[Point], size: f64) -> Result<f64> {
    if manifold.intrinsic_dim() < 2 {
        return Ok(0.0);
    }
    let tr = Transporter { tm: tm.clone(), manifold: manifold.clone(), steps: 64, max_chord: 0.5 };
    let k = tm.fiber_dim();
    let mut worst = 0.0f64;
    for x in points {
        let basis = manifold.tangent_basis(x);
        let u = basis.column(0).into_owned() * size;
        let w = basis.column(1).into_owned() * size;
        let corners = [
            x.clone(),
            manifold.retract(&(x + &u)),
            manifold.retract(&(x + &u + &w)),
            manifold.retract(&(x + &w)),
            x.clone(),
        ];
        let mut e = DMatrix::identity(k, k);
        for pair in corners.windows(2) {
            e = tr.transport(&pair[0], &pair[1], &e)?;
        }
        worst = worst.max((e - DMatrix::identity(k, k)).norm());
    }
    Ok(worst)
}

fn check_reconstructible(alg: &Algebroid, tm: &TmConnection) -> Result<()> {
    alg.require_bracket()?;
    check_dim(alg.fiber_dim(), tm.fiber_dim())?;
    check_dim(alg.manifold().ambient_dim(), tm.ambient_dim())?;
    if alg.is_tangent() && alg.manifold().intrinsic_dim() != alg.manifold().ambient_dim() {
        return Err(Error::unsupported(
            "ambient-coordinate tangent bundles have no pointwise frame; use an action or trivialized algebroid",
        ));
    }
    Ok(())
}

pub fn parallel_frame(tm: &TmConnection, alg: &Algebroid, base_point: &Point, opts: &ReconstructOptions) -> Result<Frame> {
    check_reconstructible(alg, tm)?;
    let m = alg.manifold().clone();
    m.check_point(base_point)?;
    let tm = Arc::new(tm.clone());
    let points = m.sample_points(opts.seed, opts.num_points);
    let flatness_residual = if opts.check_flatness {
        let (r, witness) = tm_curvature_residual(&tm, alg, &points, opts.seed);
        if !(r <= opts.flatness_tol) {
            return Err(Error::NotFlat { residual: r, witness: witness.as_slice().to_vec() });
        }
        r
    } else {
        f64::NAN
    };
    let loop_points: Vec<Point> = m.sample_points(opts.seed.wrapping_add(1), opts.num_loops);
    let loop_res = loop_residual(&tm, &m, &loop_points, opts.loop_size)?;
    if !(loop_res <= opts.loop_tol) {
        return Err(Error::PathDependent { residual: loop_res });
    }
    let k = tm.fiber_dim();
    let inner = Arc::new(FrameInner {
        transporter: Transporter { tm: tm.clone(), manifold: m.clone(), steps: opts.steps, max_chord: opts.max_chord },
        base_point: base_point.clone(),
        k,
        cache: Mutex::new(HashMap::new()),
    });
    let sections = (0..k)
        .map(|i| {
            let (f1, f2) = (inner.clone(), inner.clone());
            Section::analytic(
                k,
                0,
                0,
                move |x| f1.matrix(x).column(i).into_owned(),
                move |_, x, v| f2.matrix_derivative(x, v).column(i).into_owned(),
            )
        })
        .collect();
    Ok(Frame { inner, sections, base_point: base_point.clone(), flatness_residual, loop_residual: loop_res })
}

/// Constants averaged over the probes together with their pointwise spread.
#[derive(Clone, Debug)]
pub struct StructureData {
    /// Antisymmetrized mean, flat layout c[(i*k+j)*k+l].
    pub constants: Vec<f64>,
    pub constancy_residual: f64,
    pub pointwise: Vec<Vec<f64>>,
}

pub fn structure_constants(frame: &Frame, alg: &Algebroid, points: &[Point]) -> Result<StructureData> {
    alg.require_bracket()?;
    let k = frame.dim();
    let pointwise: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .map(|x| {
            let e = frame.matrix(x);
            let sv = e.clone().singular_values();
            let min_sv = sv.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min_sv > 1e-6) {
                return Err(Error::DegenerateFrame { point: x.as_slice().to_vec(), min_singular: min_sv });
            }
            let lu = e.lu();
            let mut c = vec![0.0; k * k * k];
            for i in 0..k {
                for j in i + 1..k {
                    let b = alg.bracket_at(&frame.sections[i], &frame.sections[j], x);
                    let sol = lu.solve(&b).ok_or_else(|| Error::DegenerateFrame {
                        point: x.as_slice().to_vec(),
                        min_singular: min_sv,
                    })?;
                    for l in 0..k {
                        c[(i * k + j) * k + l] = sol[l];
                        c[(j * k + i) * k + l] = -sol[l];
                    }
                }
            }
            Ok(c)
        })
        .collect();
    let pointwise: Vec<Vec<f64>> = pointwise.into_iter().collect::<Result<_>>()?;
    let n = pointwise.len().max(1) as f64;
    let mut mean = vec![0.0; k * k * k];
    for c in &pointwise {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v / n;
        }
    }
    let mut constants = vec![0.0; k * k * k];
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                constants[(i * k + j) * k + l] = 0.5 * (mean[(i * k + j) * k + l] - mean[(j * k + i) * k + l]);
            }
        }
    }
    let constancy_residual = pointwise
        .iter()
        .flat_map(|c| c.iter().zip(&mean).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    if !constancy_residual.is_finite() {
        return Err(Error::Numerical("structure functions are not finite".into()));
    }
    Ok(StructureData { constants, constancy_residual, pointwise })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionResult {
    #[serde(skip)]
    pub recovered: LieAlgebra,
    /// Nested c[i][j][l].
    pub constants: Vec<Vec<Vec<f64>>>,
    pub constancy_residual: f64,
    pub jacobi_residual: f64,
    /// max ‖[ρe_i, ρe_j] − Σ c_ij^l ρe_l‖: the recovered fields form a representation of the recovered algebra.
    pub action_match_residual: f64,
    /// Distance of ρ(e_i) to the fundamental fields of the action the algebroid was built from, if any.
    pub original_anchor_residual: Option<f64>,
    /// max ‖∇_{e_i} e_j‖ for the induced connection.
    pub frame_parallel_residual: f64,
    pub flatness_residual: f64,
    pub loop_residual: f64,
    pub abelian: bool,
    pub invariants: Invariants,
    #[serde(skip)]
    pub frame: Frame,
}

const ABELIAN_TOL: f64 = 1e-8;

/// The action the algebroid was built from, when it has one.
fn source_action(alg: &Algebroid) -> Option<Arc<Action>> {
    match alg.kind() {
        AlgebroidKind::Action { action, .. } => Some(action.clone()),
        AlgebroidKind::Gauged { inner, .. } => source_action(inner),
        _ => None,
    }
}

pub fn reconstruct_action(alg: &Arc<Algebroid>, tm: &TmConnection, opts: &ReconstructOptions) -> Result<ReconstructionResult> {
    check_reconstructible(alg, tm)?;
    let m = alg.manifold().clone();
    let points = m.sample_points(opts.seed.wrapping_add(2), opts.num_points);
    if let Some((p, ratio)) = alg.rank_deficiency(&points) {
        return Err(Error::NonTransitive { point: p.as_slice().to_vec(), ratio });
    }
    let base = m.default_base_point();
    let frame = parallel_frame(tm, alg, &base, opts)?;
    let sd = structure_constants(&frame, alg, &points)?;
    if sd.constancy_residual > opts.constancy_tol {
        return Err(Error::NonConstantStructure { residual: sd.constancy_residual });
    }
    let k = frame.dim();
    let recovered = LieAlgebra::from_flat("recovered", k, sd.constants.clone())?;
    let jacobi_residual = recovered.verify_jacobi();

    let d = alg.differentiator();
    let fields: Vec<Section> = frame.sections.iter().map(|e| alg.anchor_field(e)).collect();
    let mut action_match: f64 = 0.0;
    let mut parallel: f64 = 0.0;
    let conn = AConnection::induced_from_tm(tm.clone(), alg.clone())?;
    for x in &points {
        let rho: Vec<DVector<f64>> = fields.iter().map(|f| f.eval(x)).collect();
        for i in 0..k {
            for j in 0..k {
                parallel = parallel.max(conn.product_at(&frame.sections[i], &frame.sections[j], x).norm());
                if j <= i {
                    continue;
                }
                let jl = m.tangent_project(x, &jacobi_lie_bracket(d, &fields[i], &fields[j], x)?);
                let mut expected = DVector::zeros(m.ambient_dim());
                for (l, r) in rho.iter().enumerate() {
                    expected += r * recovered.c(i, j, l);
                }
                action_match = action_match.max((jl - expected).norm());
            }
        }
    }
    let original_anchor_residual = source_action(alg).filter(|a| a.algebra().dim() == k).map(|a| {
        let mut worst: f64 = 0.0;
        for x in &points {
            for (i, f) in fields.iter().enumerate() {
                let e = crate::algebroid::unit(k, i);
                worst = worst.max((f.eval(x) - a.fundamental_field(&e, x)).norm());
            }
        }
        worst
    });
    let abelian = sd.constants.iter().all(|c| c.abs() <= ABELIAN_TOL);
    Ok(ReconstructionResult {
        constants: recovered.constants_nested(),
        invariants: recovered.invariants(),
        recovered,
        constancy_residual: sd.constancy_residual,
        jacobi_residual,
        action_match_residual: action_match,
        original_anchor_residual,
        frame_parallel_residual: parallel,
        flatness_residual: frame.flatness_residual,
        loop_residual: frame.loop_residual,
        abelian,
        frame,
    })
}

impl ReconstructionResult {
    /// The recovered algebra acting through ξ ↦ ρ(Σ ξ_i e_i).
    pub fn recovered_action(&self, alg: &Arc<Algebroid>) -> Action {
        let (a1, a2) = (alg.clone(), alg.clone());
        let (f1, f2) = (self.frame.inner.clone(), self.frame.inner.clone());
        Action::custom(
            "recovered",
            Arc::new(self.recovered.clone()),
            alg.manifold().clone(),
            move |xi, x| a1.anchor(&(f1.matrix(x) * xi), x),
            move |xi, x, v| {
                let a = f2.matrix(x) * xi;
                a2.anchor_dx(&a, x, v) + a2.anchor(&(f2.matrix_derivative(x, v) * xi), x)
            },
        )
    }

    /// Builds the action algebroid of the recovered action and compares anchor and bracket with the
    /// input, transported through the frame. Returns (anchor residual, bracket residual).
    pub fn round_trip_residual(&self, alg: &Arc<Algebroid>, battery: &ProbeBattery) -> Result<(f64, f64)> {
        let rec = make_action_algebroid(self.recovered_action(alg))?;
        let mut anchor: f64 = 0.0;
        let mut bracket: f64 = 0.0;
        for (t, tuple) in battery.tuples.iter().enumerate() {
            let (a, b) = (&tuple[0], &tuple[1]);
            let (fa, fb) = (self.frame.combine(a), self.frame.combine(b));
            let scale = battery.scale(t, 2);
            for x in &battery.points {
                let e = self.frame.matrix(x);
                anchor = anchor.max((rec.anchor(&a.eval(x), x) - alg.anchor(&fa.eval(x), x)).norm() / battery.norms[t][0]);
                let lhs = alg.bracket_at(&fa, &fb, x);
                let rhs = &e * rec.bracket_at(a, b, x);
                bracket = bracket.max((lhs - rhs).norm() / scale);
            }
        }
        Ok((anchor, bracket))
    }
}

/// The TM-connection an A-connection is induced from, when it is of that form.
pub fn tm_connection_of(conn: &AConnection) -> Option<TmConnection> {
    let alg = conn.algebroid();
    let n = alg.manifold().ambient_dim();
    match conn.kind() {
        ConnectionKind::CanonicalFlat | ConnectionKind::Zero => Some(TmConnection::flat(alg.fiber_dim(), n)),
        ConnectionKind::InducedFromTm(tm) => Some(tm.clone()),
        _ => None,
    }
}

/// Named reconstruction inputs with known outcomes.
pub fn fixture(name: &str) -> Option<(Arc<Algebroid>, TmConnection)> {
    use crate::algebroid::{gauge_twisted_so3, make_bundle_of_lie_algebras};
    use crate::lie_core::hat;
    let gauge = || TmConnection::gauge(hat(&crate::algebroid::unit(3, 2)), 0, 3).expect("valid gauge");
    match name {
        "so3_sphere" => {
            let alg = make_action_algebroid(Action::so3_sphere()).ok()?;
            Some((Arc::new(alg), TmConnection::flat(3, 3)))
        }
        "gauge_twisted_so3" => Some((Arc::new(gauge_twisted_so3()), gauge())),
        // a flat connection whose dual is curved: the twist applied to the untwisted algebroid
        "dual_curved_so3" => {
            let alg = make_action_algebroid(Action::so3_sphere()).ok()?;
            Some((Arc::new(alg), gauge()))
        }
        "abelian_torus" => {
            let alg = make_action_algebroid(Action::abelian_torus()).ok()?;
            Some((Arc::new(alg), TmConnection::flat(2, 4)))
        }
        "zero_anchor_sphere" => {
            let alg = make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), ConstantsField::constant(&LieAlgebra::abelian(2))).ok()?;
            Some((Arc::new(alg), TmConnection::flat(2, 3)))
        }
        _ => None,
    }
}

pub const FIXTURES: [&str; 5] = ["so3_sphere", "gauge_twisted_so3", "dual_curved_so3", "abelian_torus", "zero_anchor_sphere"];

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ReconstructOptions {
        ReconstructOptions::default()
    }

    #[test]
    fn flat_frame_is_constant_basis() {
        let (alg, tm) = fixture("so3_sphere").unwrap();
        let frame = parallel_frame(&tm, &alg, &alg.manifold().default_base_point(), &opts()).unwrap();
        for x in alg.manifold().sample_points(3, 5) {
            assert!((frame.matrix(&x) - DMatrix::identity(3, 3)).norm() < 1e-14);
        }
    }

    #[test]
    fn gauge_frame_matches_twist() {
        let (alg, tm) = fixture("gauge_twisted_so3").unwrap();
        let frame = parallel_frame(&tm, &alg, &alg.manifold().default_base_point(), &opts()).unwrap();
        for x in alg.manifold().sample_points(4, 8) {
            let twist = alg.gauge(&x);
            assert!((frame.matrix(&x) - twist).norm() < 1e-6);
        }
    }

    #[test]
    fn far_points_are_reached_through_waypoints() {
        let (alg, tm) = fixture("gauge_twisted_so3").unwrap();
        let frame = parallel_frame(&tm, &alg, &alg.manifold().default_base_point(), &opts()).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.0, -0.8]);
        assert!((frame.matrix(&x) - alg.gauge(&x)).norm() < 1e-6);
    }

    #[test]
    fn curved_connection_is_not_flat() {
        let (alg, tm) = fixture("gauge_twisted_so3").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let curved = tm.plus(TmConnection::random(3, 3, 1, 0.5, &mut rng)).unwrap();
        let err = parallel_frame(&curved, &alg, &alg.manifold().default_base_point(), &opts()).unwrap_err();
        assert!(matches!(err, Error::NotFlat { .. }), "{err}");
        assert!(err.to_string().contains("connection not flat; reconstruction inapplicable"));
        let o = ReconstructOptions { check_flatness: false, ..opts() };
        let err = parallel_frame(&curved, &alg, &alg.manifold().default_base_point(), &o).unwrap_err();
        assert!(matches!(err, Error::PathDependent { .. }), "{err}");
    }

    #[test]
    fn recovers_so3() {
        let (alg, tm) = fixture("so3_sphere").unwrap();
        let r = reconstruct_action(&alg, &tm, &opts()).unwrap();
        let so3 = LieAlgebra::so3();
        for (a, b) in r.recovered.constants_flat().iter().zip(so3.constants_flat()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(r.constancy_residual < 1e-6);
        assert!(r.action_match_residual < 1e-6);
        assert_eq!(r.invariants.killing, so3.killing_signature());
    }

    #[test]
    fn dual_curved_fixture_is_rejected() {
        let (alg, tm) = fixture("dual_curved_so3").unwrap();
        let frame = parallel_frame(&tm, &alg, &alg.manifold().default_base_point(), &opts()).unwrap();
        let sd = structure_constants(&frame, &alg, &alg.manifold().sample_points(2, 10)).unwrap();
        assert!(sd.constancy_residual > 1e-2);
        assert!(matches!(reconstruct_action(&alg, &tm, &opts()), Err(Error::NonConstantStructure { .. })));
    }

    #[test]
    fn zero_anchor_is_non_transitive() {
        let (alg, tm) = fixture("zero_anchor_sphere").unwrap();
        assert!(matches!(reconstruct_action(&alg, &tm, &opts()), Err(Error::NonTransitive { .. })));
    }

    #[test]
    fn tm_connection_of_connections() {
        let (alg, _) = fixture("gauge_twisted_so3").unwrap();
        let c = AConnection::canonical_flat(alg.clone()).unwrap();
        assert!(matches!(tm_connection_of(&c), Some(tm) if !tm.is_flat_trivial()));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(tm_connection_of(&AConnection::random_coefficient(alg, 1, 1.0, &mut rng)).is_none());
    }

    #[test]
    fn gauge_twisted_reconstruction() {
        let (alg, tm) = fixture("gauge_twisted_so3").unwrap();
        let r = reconstruct_action(&alg, &tm, &opts()).unwrap();
        assert!(r.constancy_residual <= 1e-4);
        assert!(r.loop_residual <= 1e-6);
        assert_eq!(r.invariants.killing, LieAlgebra::so3().killing_signature());
        assert!(r.original_anchor_residual.unwrap() <= 1e-4);
        assert!(r.action_match_residual <= 1e-4);
        let battery = ProbeBattery::generate(&alg, crate::probes::ProbeConfig { num_sections: 3, num_points: 6, ..Default::default() }).unwrap();
        let (a, b) = r.round_trip_residual(&alg, &battery).unwrap();
        assert!(a <= 1e-4 && b <= 1e-4);
    }

    #[test]
    fn abelian_torus_reconstruction() {
        let (alg, tm) = fixture("abelian_torus").unwrap();
        let r = reconstruct_action(&alg, &tm, &opts()).unwrap();
        assert!(r.abelian);
        assert!(r.constants.iter().flatten().flatten().all(|c| c.abs() <= 1e-8));
    }
}
