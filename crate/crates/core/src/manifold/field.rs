use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::{EmbeddedManifold, Polynomial};
use crate::error::{check_dim, Error, Result};
use crate::Point;

/// A map from points of M to ℝᵐ that can be differentiated along tangent vectors.
///
/// `depth` counts how many finite differences were needed to evaluate the field;
/// it selects the step size used when the field itself is differentiated numerically.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &Point) -> DVector<f64>;

    fn derivative(&self, d: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        d.central_difference(self, x, v)
    }

    fn depth(&self) -> u32 {
        0
    }

    fn derivative_depth(&self) -> u32 {
        self.depth() + 1
    }
}

/// Finite-difference configuration bound to a base manifold.
#[derive(Clone, Debug)]
pub struct Differentiator {
    manifold: Arc<EmbeddedManifold>,
    pub h1: f64,
    pub h2: f64,
}

impl Differentiator {
    pub fn new(manifold: Arc<EmbeddedManifold>) -> Self {
        Differentiator { manifold, h1: 1e-4, h2: 1e-3 }
    }

    pub fn with_steps(mut self, h1: f64, h2: f64) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }

    pub fn manifold(&self) -> &EmbeddedManifold {
        &self.manifold
    }

    pub fn manifold_arc(&self) -> &Arc<EmbeddedManifold> {
        &self.manifold
    }

    pub fn step_for_depth(&self, depth: u32) -> f64 {
        if depth == 0 {
            self.h1
        } else {
            self.h2
        }
    }

    /// Central difference of t ↦ F(retract(x + t v)), with the step measured along v/‖v‖.
    pub fn central_difference<F: Field + ?Sized>(&self, f: &F, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        let s = v.norm();
        if s == 0.0 {
            return DVector::zeros(f.dim());
        }
        let h = self.step_for_depth(f.depth());
        let u = v * (h / s);
        let xp = self.manifold.retract(&(x + &u));
        let xm = self.manifold.retract(&(x - &u));
        (f.eval(&xp) - f.eval(&xm)) * (s / (2.0 * h))
    }

    /// Derivative of `f` at `x` along the tangent vector `v`, exact where the field allows it.
    pub fn derivative(&self, f: &Section, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        f.0.derivative(self, x, v)
    }

    /// Checked form of [`Differentiator::derivative`] that rejects non-tangent directions.
    pub fn directional_derivative(&self, f: &Section, x: &Point, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.manifold.check_point(x)?;
        self.manifold.require_tangent(x, v)?;
        Ok(self.derivative(f, x, v))
    }
}

/// Cheaply clonable handle to a field.
#[derive(Clone)]
pub struct Section(Arc<dyn Field>);

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Section(dim={}, depth={})", self.dim(), self.depth())
    }
}

impl Section {
    pub fn new(field: impl Field + 'static) -> Self {
        Section(Arc::new(field))
    }

    pub fn constant(v: DVector<f64>) -> Self {
        Section::new(ConstantField(v))
    }

    pub fn zero(dim: usize) -> Self {
        Section::constant(DVector::zeros(dim))
    }

    pub fn polynomial(components: Vec<Polynomial>) -> Self {
        Section::new(PolyField(components))
    }

    /// Pointwise tangent projection of an ambient polynomial field.
    pub fn projected(manifold: Arc<EmbeddedManifold>, components: Vec<Polynomial>) -> Self {
        Section::new(ProjectedPolyField { manifold, components })
    }

    /// Field known only by its values; derivatives are taken by finite differences.
    pub fn from_fn(
        dim: usize,
        depth: u32,
        f: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Section::new(ClosureField { dim, depth, f: Box::new(f) })
    }

    /// Field with an explicit derivative.
    pub fn analytic(
        dim: usize,
        depth: u32,
        derivative_depth: u32,
        f: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
        df: impl Fn(&Differentiator, &Point, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Section::new(AnalyticField {
            dim,
            depth,
            derivative_depth,
            f: Box::new(f),
            df: Box::new(df),
        })
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn depth(&self) -> u32 {
        self.0.depth()
    }

    pub fn derivative_depth(&self) -> u32 {
        self.0.derivative_depth()
    }

    pub fn eval(&self, x: &Point) -> DVector<f64> {
        self.0.eval(x)
    }

    pub fn derivative(&self, d: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        self.0.derivative(d, x, v)
    }

    pub fn scaled_by(&self, f: &SmoothScalar) -> Section {
        Section::new(ScaledField { f: f.clone(), inner: self.clone() })
    }

    pub fn scale(&self, s: f64) -> Section {
        Section::new(LinearCombination(vec![(s, self.clone())]))
    }

    pub fn add(&self, other: &Section) -> Section {
        Section::new(LinearCombination(vec![(1.0, self.clone()), (1.0, other.clone())]))
    }

    pub fn sub(&self, other: &Section) -> Section {
        Section::new(LinearCombination(vec![(1.0, self.clone()), (-1.0, other.clone())]))
    }

    pub fn linear_combination(terms: Vec<(f64, Section)>) -> Section {
        Section::new(LinearCombination(terms))
    }

    pub fn sup_norm(&self, points: &[Point]) -> f64 {
        points.iter().map(|x| self.eval(x).norm()).fold(0.0, f64::max)
    }
}

struct ConstantField(DVector<f64>);

impl Field for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn eval(&self, _: &Point) -> DVector<f64> {
        self.0.clone()
    }
    fn derivative(&self, _: &Differentiator, _: &Point, _: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.0.len())
    }
    fn derivative_depth(&self) -> u32 {
        0
    }
}

struct PolyField(Vec<Polynomial>);

impl Field for PolyField {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn eval(&self, x: &Point) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|p| p.eval(x.as_slice())))
    }
    fn derivative(&self, _: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.0.len(),
            self.0.iter().map(|p| p.directional(x.as_slice(), v.as_slice())),
        )
    }
    fn derivative_depth(&self) -> u32 {
        0
    }
}

struct ProjectedPolyField {
    manifold: Arc<EmbeddedManifold>,
    components: Vec<Polynomial>,
}

impl ProjectedPolyField {
    fn raw(&self, x: &Point) -> DVector<f64> {
        DVector::from_iterator(
            self.components.len(),
            self.components.iter().map(|p| p.eval(x.as_slice())),
        )
    }
}

impl Field for ProjectedPolyField {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn eval(&self, x: &Point) -> DVector<f64> {
        self.manifold.tangent_project(x, &self.raw(x))
    }
    fn derivative(&self, _: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        let dp = DVector::from_iterator(
            self.components.len(),
            self.components
                .iter()
                .map(|p| p.directional(x.as_slice(), v.as_slice())),
        );
        self.manifold.project_derivative(x, v, &self.raw(x)) + self.manifold.tangent_project(x, &dp)
    }
    fn derivative_depth(&self) -> u32 {
        0
    }
}

struct ScaledField {
    f: SmoothScalar,
    inner: Section,
}

impl Field for ScaledField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &Point) -> DVector<f64> {
        self.inner.eval(x) * self.f.eval(x)
    }
    fn derivative(&self, d: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        self.inner.eval(x) * self.f.derivative(x, v) + self.inner.derivative(d, x, v) * self.f.eval(x)
    }
    fn depth(&self) -> u32 {
        self.inner.depth()
    }
    fn derivative_depth(&self) -> u32 {
        self.inner.derivative_depth()
    }
}

struct LinearCombination(Vec<(f64, Section)>);

impl Field for LinearCombination {
    fn dim(&self) -> usize {
        self.0.first().map(|(_, s)| s.dim()).unwrap_or(0)
    }
    fn eval(&self, x: &Point) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (c, s) in &self.0 {
            out += s.eval(x) * *c;
        }
        out
    }
    fn derivative(&self, d: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (c, s) in &self.0 {
            out += s.derivative(d, x, v) * *c;
        }
        out
    }
    fn depth(&self) -> u32 {
        self.0.iter().map(|(_, s)| s.depth()).max().unwrap_or(0)
    }
    fn derivative_depth(&self) -> u32 {
        self.0.iter().map(|(_, s)| s.derivative_depth()).max().unwrap_or(0)
    }
}

type PointFn = Box<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
type DerivFn = Box<dyn Fn(&Differentiator, &Point, &DVector<f64>) -> DVector<f64> + Send + Sync>;

struct ClosureField {
    dim: usize,
    depth: u32,
    f: PointFn,
}

impl Field for ClosureField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Point) -> DVector<f64> {
        (self.f)(x)
    }
    fn depth(&self) -> u32 {
        self.depth
    }
}

struct AnalyticField {
    dim: usize,
    depth: u32,
    derivative_depth: u32,
    f: PointFn,
    df: DerivFn,
}

impl Field for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Point) -> DVector<f64> {
        (self.f)(x)
    }
    fn derivative(&self, d: &Differentiator, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        (self.df)(d, x, v)
    }
    fn depth(&self) -> u32 {
        self.depth
    }
    fn derivative_depth(&self) -> u32 {
        self.derivative_depth
    }
}

/// Named closed-form scalar function with its gradient.
#[derive(Clone)]
pub struct ClosedForm {
    name: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>,
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClosedForm({})", self.name)
    }
}

impl ClosedForm {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        ClosedForm { name: name.into(), f: Arc::new(f), grad: Arc::new(grad) }
    }

    /// Parses `exp(xi)`, `sin(xi)` or `cos(xi)` over `nvars` ambient coordinates.
    pub fn named(nvars: usize, name: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown closed-form scalar '{name}'"));
        let (head, rest) = name.split_once('(').ok_or_else(bad)?;
        let var = rest.strip_suffix(')').ok_or_else(bad)?;
        let i: usize = var
            .strip_prefix('x')
            .and_then(|s| s.parse().ok())
            .filter(|&i| i >= 1 && i <= nvars)
            .ok_or_else(bad)?;
        let i = i - 1;
        let unit = move |x: &[f64], g: f64| {
            let mut v = DVector::zeros(x.len());
            v[i] = g;
            v
        };
        let label = name.to_string();
        Ok(match head {
            "exp" => ClosedForm::new(label, move |x| x[i].exp(), move |x| unit(x, x[i].exp())),
            "sin" => ClosedForm::new(label, move |x| x[i].sin(), move |x| unit(x, x[i].cos())),
            "cos" => ClosedForm::new(label, move |x| x[i].cos(), move |x| unit(x, -x[i].sin())),
            _ => return Err(bad()),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Real-valued function on M.
#[derive(Clone, Debug)]
pub enum SmoothScalar {
    Polynomial(Polynomial),
    ClosedForm(ClosedForm),
}

impl SmoothScalar {
    pub fn constant(nvars: usize, c: f64) -> Self {
        SmoothScalar::Polynomial(Polynomial::constant(nvars, c))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            SmoothScalar::Polynomial(p) => p.eval(x.as_slice()),
            SmoothScalar::ClosedForm(c) => (c.f)(x.as_slice()),
        }
    }

    pub fn gradient(&self, x: &Point) -> DVector<f64> {
        match self {
            SmoothScalar::Polynomial(p) => p.gradient(x.as_slice()),
            SmoothScalar::ClosedForm(c) => (c.grad)(x.as_slice()),
        }
    }

    /// Exact derivative along v; valid for tangent v since any ambient extension agrees on M.
    pub fn derivative(&self, x: &Point, v: &DVector<f64>) -> f64 {
        self.gradient(x).dot(v)
    }

    pub fn sup_abs(&self, points: &[Point]) -> f64 {
        points.iter().map(|x| self.eval(x).abs()).fold(0.0, f64::max)
    }

    pub fn as_section(&self) -> Section {
        let s = self.clone();
        let s2 = self.clone();
        Section::analytic(
            1,
            0,
            0,
            move |x| DVector::from_element(1, s.eval(x)),
            move |_, x, v| DVector::from_element(1, s2.derivative(x, v)),
        )
    }
}

/// Jacobi–Lie bracket [X,Y](x) = P(DY[X(x)] − DX[Y(x)]).
pub fn jacobi_lie_bracket(d: &Differentiator, x_field: &Section, y_field: &Section, x: &Point) -> Result<DVector<f64>> {
    let m = d.manifold();
    m.check_point(x)?;
    check_dim(m.ambient_dim(), x_field.dim())?;
    check_dim(m.ambient_dim(), y_field.dim())?;
    Ok(jacobi_lie_bracket_unchecked(d, x_field, y_field, x))
}

pub(crate) fn jacobi_lie_bracket_unchecked(d: &Differentiator, xf: &Section, yf: &Section, x: &Point) -> DVector<f64> {
    let m = d.manifold();
    let xv = m.tangent_project(x, &xf.eval(x));
    let yv = m.tangent_project(x, &yf.eval(x));
    let raw = yf.derivative(d, x, &xv) - xf.derivative(d, x, &yv);
    m.tangent_project(x, &raw)
}

/// The Jacobi–Lie bracket as a field, differentiable by finite differences.
pub fn jacobi_lie_bracket_field(d: &Differentiator, xf: &Section, yf: &Section) -> Section {
    let (d2, a, b) = (d.clone(), xf.clone(), yf.clone());
    let depth = xf.derivative_depth().max(yf.derivative_depth()).max(xf.depth()).max(yf.depth());
    Section::from_fn(xf.dim(), depth, move |x| jacobi_lie_bracket_unchecked(&d2, &a, &b, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_core::hat;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere() -> Differentiator {
        Differentiator::new(Arc::new(EmbeddedManifold::sphere2()))
    }

    fn linear_field(a: DMatrix<f64>) -> Section {
        let polys = (0..3)
            .map(|i| {
                Polynomial::from_terms(
                    3,
                    (0..3).map(|j| {
                        let mut e = vec![0; 3];
                        e[j] = 1;
                        (e, a[(i, j)])
                    }),
                )
                .unwrap()
            })
            .collect();
        Section::polynomial(polys)
    }

    fn x1x2() -> Section {
        Section::polynomial(vec![Polynomial::from_terms(3, [(vec![1, 1, 0], 1.0)]).unwrap()])
    }

    #[test]
    fn constant_and_linear_derivatives() {
        let d = sphere();
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let c = Section::constant(DVector::from_vec(vec![2.0, 3.0]));
        assert_eq!(d.directional_derivative(&c, &x, &v).unwrap(), DVector::zeros(2));
        let x1 = Section::polynomial(vec![Polynomial::coordinate(3, 0)]);
        assert_abs_diff_eq!(d.directional_derivative(&x1, &x, &v).unwrap()[0], 1.0);
        let closure = Section::from_fn(1, 0, |p| DVector::from_element(1, p[0]));
        assert_abs_diff_eq!(d.directional_derivative(&closure, &x, &v).unwrap()[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn non_tangent_direction_is_input_error() {
        let d = sphere();
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let err = d.directional_derivative(&x1x2(), &x, &x).unwrap_err();
        assert!(err.is_input_error());
    }

    #[test]
    fn finite_difference_agrees_with_richardson_oracle() {
        let d = sphere();
        let m = d.manifold().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = x1x2();
        let fd = Section::from_fn(1, 0, move |p| DVector::from_element(1, p[0] * p[1]));
        for _ in 0..10 {
            let x = m.sample(&mut rng);
            let v = m.random_tangent(&x, &mut rng);
            let curve = |t: f64| {
                let y = m.retract(&(&x + &v * t));
                y[0] * y[1]
            };
            let cd = |h: f64| (curve(h) - curve(-h)) / (2.0 * h);
            let h = 1e-3;
            let oracle = (4.0 * cd(h / 2.0) - cd(h)) / 3.0;
            // central differences at h = 1e-4 carry an O(h²‖v‖³) truncation error
            let tol = 1e-7 * (1.0 + v.norm().powi(3));
            assert_abs_diff_eq!(d.derivative(&fd, &x, &v)[0], oracle, epsilon = tol);
            assert_abs_diff_eq!(d.derivative(&f, &x, &v)[0], oracle, epsilon = 1e-8 * (1.0 + v.norm().powi(3)));
        }
    }

    #[test]
    fn bracket_of_linear_fields() {
        let d = sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let skew = |rng: &mut ChaCha8Rng| {
            hat(&DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
        };
        let a = skew(&mut rng);
        let b = skew(&mut rng);
        let xa = linear_field(a.clone());
        let xb = linear_field(b.clone());
        for x in d.manifold().sample_points(6, 20) {
            let got = jacobi_lie_bracket(&d, &xa, &xb, &x).unwrap();
            let expected = (&b * &a - &a * &b) * &x;
            assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(jacobi_lie_bracket(&d, &xa, &xa, &x).unwrap(), DVector::zeros(3), epsilon = 1e-15);
        }
    }

    #[test]
    fn bracket_is_commutator_of_derivations() {
        let d = sphere();
        let m = d.manifold_arc().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rand_field = |rng: &mut ChaCha8Rng| {
            Section::projected(
                m.clone(),
                (0..3).map(|_| Polynomial::random(3, 2, -1.0, 1.0, rng)).collect(),
            )
        };
        let xf = rand_field(&mut rng);
        let yf = rand_field(&mut rng);
        let f = SmoothScalar::Polynomial(Polynomial::from_terms(3, [(vec![1, 1, 0], 1.0)]).unwrap());
        // X[f] and Y[f] as fields, then differentiated again numerically
        let mk = |field: Section| {
            let f = f.clone();
            Section::from_fn(1, 0, move |p| DVector::from_element(1, f.derivative(p, &field.eval(p))))
        };
        let xf_f = mk(xf.clone());
        let yf_f = mk(yf.clone());
        for x in m.sample_points(8, 20) {
            let br = jacobi_lie_bracket(&d, &xf, &yf, &x).unwrap();
            let lhs = f.derivative(&x, &br);
            let rhs = d.derivative(&yf_f, &x, &xf.eval(&x))[0] - d.derivative(&xf_f, &x, &yf.eval(&x))[0];
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-6);
        }
    }
}
