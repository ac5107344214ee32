//! Anchored bundles and Lie algebroids over embedded manifolds, globally trivialized.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::lie_core::{hat, AlgebraElement, LieAlgebra};
use crate::manifold::{
    jacobi_lie_bracket_field, Differentiator, EmbeddedManifold, Polynomial, Section,
    SmoothScalar,
};
use crate::Point;

const HOMOMORPHISM_TOL: f64 = 1e-4;
const PROBE_SEED: u64 = 0x0a1b_2c3d;
const PROBE_POINTS: usize = 20;

type FieldFn = Arc<dyn Fn(&DVector<f64>, &Point) -> DVector<f64> + Send + Sync>;
type FieldDxFn = Arc<dyn Fn(&DVector<f64>, &Point, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
enum FundamentalField {
    /// ξ_M(x) = Σ ξ_i G_i x, optionally in homogeneous coordinates (x; 1).
    Linear { generators: Vec<DMatrix<f64>>, homogeneous: bool },
    Custom { f: FieldFn, dx: FieldDxFn },
}

/// How a group element exp(ξ) moves points, for the builtin matrix actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupAction {
    /// y ↦ gᵀ y for rotations g.
    Transpose,
    /// p ↦ g⁻¹ (p; 1) for affine matrices g.
    InverseAffine,
    /// R ↦ R g on SO(3).
    RightMultiply,
    /// x ↦ exp(Σ ξ_i G_i) x using the generators directly.
    GeneratorExp,
}

/// A right action of a Lie algebra on M, i.e. a homomorphism ξ ↦ ξ_M for the
/// Jacobi–Lie bracket [X,Y] = DY[X] − DX[Y].
#[derive(Clone)]
pub struct Action {
    name: String,
    algebra: Arc<LieAlgebra>,
    manifold: Arc<EmbeddedManifold>,
    field: FundamentalField,
    group: Option<GroupAction>,
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Action({} of {} on {})", self.name, self.algebra.name(), self.manifold.name())
    }
}

impl Action {
    /// Linear action ξ_M(x) = Σ ξ_i G_i x on the ambient coordinates.
    pub fn linear(
        name: impl Into<String>,
        algebra: LieAlgebra,
        manifold: EmbeddedManifold,
        generators: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        check_dim(algebra.dim(), generators.len())?;
        let n = manifold.ambient_dim();
        for g in &generators {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::invalid(format!(
                    "generator must be {n}x{n}, got {}x{}",
                    g.nrows(),
                    g.ncols()
                )));
            }
        }
        Ok(Action {
            name: name.into(),
            algebra: Arc::new(algebra),
            manifold: Arc::new(manifold),
            field: FundamentalField::Linear { generators, homogeneous: false },
            group: Some(GroupAction::GeneratorExp),
        })
    }

    /// Action given by arbitrary fundamental-field closures (no group exponential).
    pub fn custom(
        name: impl Into<String>,
        algebra: Arc<LieAlgebra>,
        manifold: Arc<EmbeddedManifold>,
        f: impl Fn(&DVector<f64>, &Point) -> DVector<f64> + Send + Sync + 'static,
        dx: impl Fn(&DVector<f64>, &Point, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Action {
            name: name.into(),
            algebra,
            manifold,
            field: FundamentalField::Custom { f: Arc::new(f), dx: Arc::new(dx) },
            group: None,
        }
    }

    /// so(3) on S² with ξ_M(x) = x × ξ.
    pub fn so3_sphere() -> Self {
        let generators = (0..3).map(|i| -hat(&unit(3, i))).collect();
        Action {
            name: "so3_sphere".into(),
            algebra: Arc::new(LieAlgebra::so3()),
            manifold: Arc::new(EmbeddedManifold::sphere2()),
            field: FundamentalField::Linear { generators, homogeneous: false },
            group: Some(GroupAction::Transpose),
        }
    }

    /// The sign-flipped map ξ_M(x) = ξ × x, which reverses brackets.
    pub fn so3_sphere_opposite_sign() -> Self {
        let generators = (0..3).map(|i| hat(&unit(3, i))).collect();
        Action {
            name: "so3_sphere_opposite".into(),
            algebra: Arc::new(LieAlgebra::so3()),
            manifold: Arc::new(EmbeddedManifold::sphere2()),
            field: FundamentalField::Linear { generators, homogeneous: false },
            group: None,
        }
    }

    /// so(3) on SO(3) by right multiplication, ξ_M(R) = R ξ̂.
    pub fn so3_group_right() -> Self {
        let generators = (0..3)
            .map(|i| {
                let h = hat(&unit(3, i));
                // row-major R ↦ R h
                DMatrix::from_fn(9, 9, |r, c| {
                    let (ri, rj) = (r / 3, r % 3);
                    let (ci, cj) = (c / 3, c % 3);
                    if ri == ci {
                        h[(cj, rj)]
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Action {
            name: "so3_group_right".into(),
            algebra: Arc::new(LieAlgebra::so3()),
            manifold: Arc::new(EmbeddedManifold::so3_group()),
            field: FundamentalField::Linear { generators, homogeneous: false },
            group: Some(GroupAction::RightMultiply),
        }
    }

    /// Abelian ℝ² rotating the two circle factors of T² independently.
    pub fn abelian_torus() -> Self {
        let block = |b: usize| {
            let mut g = DMatrix::zeros(4, 4);
            g[(b, b + 1)] = -1.0;
            g[(b + 1, b)] = 1.0;
            g
        };
        Action {
            name: "abelian_torus".into(),
            algebra: Arc::new(LieAlgebra::abelian(2)),
            manifold: Arc::new(EmbeddedManifold::torus2()),
            field: FundamentalField::Linear { generators: vec![block(0), block(2)], homogeneous: false },
            group: Some(GroupAction::GeneratorExp),
        }
    }

    /// Affine action on ℝⁿ of an algebra realized by (n+1)×(n+1) affine matrices.
    pub fn affine(algebra: LieAlgebra) -> Result<Self> {
        let r = algebra.realization().ok_or_else(|| {
            Error::unsupported(format!("algebra '{}' has no matrix realization", algebra.name()))
        })?;
        let n = r.matrix_dim() - 1;
        let generators = r.basis().iter().map(|m| -m).collect();
        Ok(Action {
            name: format!("{}_affine", algebra.name()),
            algebra: Arc::new(algebra),
            manifold: Arc::new(EmbeddedManifold::euclidean(n)),
            field: FundamentalField::Linear { generators, homogeneous: true },
            group: Some(GroupAction::InverseAffine),
        })
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "so3_sphere" => Some(Self::so3_sphere()),
            "so3_group_right" => Some(Self::so3_group_right()),
            "abelian_torus" => Some(Self::abelian_torus()),
            "se2_plane" => Self::affine(LieAlgebra::se2()).ok(),
            "heisenberg_plane" => Self::affine(LieAlgebra::heisenberg3()).ok(),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn algebra(&self) -> &LieAlgebra {
        &self.algebra
    }

    pub fn algebra_arc(&self) -> &Arc<LieAlgebra> {
        &self.algebra
    }

    pub fn manifold(&self) -> &Arc<EmbeddedManifold> {
        &self.manifold
    }

    pub fn group_action(&self) -> Option<GroupAction> {
        self.group
    }

    pub fn fundamental_field(&self, xi: &DVector<f64>, x: &Point) -> DVector<f64> {
        match &self.field {
            FundamentalField::Linear { generators, homogeneous } => {
                let n = x.len();
                let xt = if *homogeneous { homogeneous_point(x) } else { x.clone() };
                let mut out = DVector::zeros(xt.len());
                for (c, g) in xi.iter().zip(generators) {
                    if *c != 0.0 {
                        out += g * &xt * *c;
                    }
                }
                out.rows(0, n).into_owned()
            }
            FundamentalField::Custom { f, .. } => f(xi, x),
        }
    }

    /// Derivative of x ↦ ξ_M(x) along v at fixed ξ.
    pub fn fundamental_field_dx(&self, xi: &DVector<f64>, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        match &self.field {
            FundamentalField::Linear { generators, homogeneous } => {
                let n = x.len();
                let vt = if *homogeneous {
                    let mut t = DVector::zeros(n + 1);
                    t.rows_mut(0, n).copy_from(v);
                    t
                } else {
                    v.clone()
                };
                let mut out = DVector::zeros(vt.len());
                for (c, g) in xi.iter().zip(generators) {
                    if *c != 0.0 {
                        out += g * &vt * *c;
                    }
                }
                out.rows(0, n).into_owned()
            }
            FundamentalField::Custom { dx, .. } => dx(xi, x, v),
        }
    }

    /// Time-one flow of ξ_M, i.e. the action of exp(ξ).
    pub fn flow(&self, xi: &DVector<f64>, y: &Point) -> Result<Point> {
        let group = self.group.ok_or_else(|| {
            Error::unsupported(format!("action '{}' has no group exponential", self.name))
        })?;
        let el = AlgebraElement(xi.clone());
        Ok(match group {
            GroupAction::Transpose => self.algebra.exp_matrix(&el)?.transpose() * y,
            GroupAction::RightMultiply => {
                let g = self.algebra.exp_matrix(&el)?;
                let r = DMatrix::from_row_slice(3, 3, y.as_slice());
                let out = r * g;
                DVector::from_iterator(9, out.transpose().iter().copied())
            }
            GroupAction::InverseAffine => {
                let g = self.algebra.exp_matrix(&AlgebraElement(-xi))?;
                let n = y.len();
                (g * homogeneous_point(y)).rows(0, n).into_owned()
            }
            GroupAction::GeneratorExp => match &self.field {
                FundamentalField::Linear { generators, homogeneous: false } => {
                    let n = y.len();
                    let mut m = DMatrix::zeros(n, n);
                    for (c, g) in xi.iter().zip(generators) {
                        m += g * *c;
                    }
                    m.exp() * y
                }
                _ => return Err(Error::unsupported("generator exponential needs linear generators")),
            },
        })
    }

    /// Max relative residual of ([e_i,e_j])_M − [e_i_M, e_j_M] over basis pairs and points,
    /// together with the residual of the sign-reversed relation and a witness point.
    pub fn homomorphism_residual(&self, points: &[Point]) -> (f64, f64, Point) {
        let k = self.algebra.dim();
        let m = &self.manifold;
        let mut scale: f64 = 0.0;
        for x in points {
            for i in 0..k {
                scale = scale.max(self.fundamental_field(&unit(k, i), x).norm());
            }
        }
        let scale = (scale * scale).max(1e-300);
        let (mut worst, mut worst_anti) = (0.0f64, 0.0f64);
        let mut witness = points.first().cloned().unwrap_or_else(|| DVector::zeros(0));
        for x in points {
            for i in 0..k {
                for j in i + 1..k {
                    let (ei, ej) = (unit(k, i), unit(k, j));
                    let xi = self.fundamental_field(&ei, x);
                    let xj = self.fundamental_field(&ej, x);
                    let jl = m.tangent_project(
                        x,
                        &(self.fundamental_field_dx(&ej, x, &xi) - self.fundamental_field_dx(&ei, x, &xj)),
                    );
                    let lhs = self.fundamental_field(&self.algebra.bracket_vec(&ei, &ej), x);
                    let r = (&lhs - &jl).norm() / scale;
                    if r > worst {
                        worst = r;
                        witness = x.clone();
                    }
                    worst_anti = worst_anti.max((&lhs + &jl).norm() / scale);
                }
            }
        }
        (worst, worst_anti, witness)
    }
}

/// Pointwise structure constants of a bundle of Lie algebras.
#[derive(Clone)]
pub struct ConstantsField {
    dim: usize,
    description: String,
    f: Arc<dyn Fn(&Point) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for ConstantsField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConstantsField({})", self.description)
    }
}

impl ConstantsField {
    pub fn constant(algebra: &LieAlgebra) -> Self {
        let c = algebra.constants_flat().to_vec();
        ConstantsField {
            dim: algebra.dim(),
            description: algebra.name().to_string(),
            f: Arc::new(move |_| c.clone()),
        }
    }

    /// c(x) = s(x) · c.
    pub fn scaled(algebra: &LieAlgebra, scale: SmoothScalar) -> Self {
        let c = algebra.constants_flat().to_vec();
        ConstantsField {
            dim: algebra.dim(),
            description: format!("scaled {}", algebra.name()),
            f: Arc::new(move |x| {
                let s = scale.eval(x);
                c.iter().map(|v| v * s).collect()
            }),
        }
    }

    pub fn from_fn(dim: usize, description: impl Into<String>, f: impl Fn(&Point) -> Vec<f64> + Send + Sync + 'static) -> Self {
        ConstantsField { dim, description: description.into(), f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, x: &Point) -> Vec<f64> {
        (self.f)(x)
    }

    fn bracket(&self, x: &Point, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let c = self.at(x);
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let w = a[i] * b[j];
                if w != 0.0 {
                    for k in 0..n {
                        out[k] += w * c[(i * n + j) * n + k];
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum AlgebroidKind {
    Action { action: Arc<Action>, derivative_scale: f64 },
    Tangent,
    BundleOfLieAlgebras { constants: ConstantsField },
    /// Base algebroid re-expressed in the moving trivialization G(x) = exp(x_c K).
    Gauged { inner: Arc<Algebroid>, generator: DMatrix<f64>, coordinate: usize },
}

/// Trivialized bundle M × ℝᵏ with anchor and, for algebroids, a section bracket.
#[derive(Clone, Debug)]
pub struct Algebroid {
    name: String,
    manifold: Arc<EmbeddedManifold>,
    fiber_dim: usize,
    kind: AlgebroidKind,
    has_bracket: bool,
    transitive: bool,
    diff: Differentiator,
}

/// Anchored bundles share the representation; they are algebroids without a bracket.
pub type AnchoredBundle = Algebroid;

impl Algebroid {
    fn finish(name: String, manifold: Arc<EmbeddedManifold>, fiber_dim: usize, kind: AlgebroidKind) -> Self {
        let diff = Differentiator::new(manifold.clone());
        let mut alg = Algebroid {
            name,
            manifold,
            fiber_dim,
            kind,
            has_bracket: true,
            transitive: false,
            diff,
        };
        let points = alg.manifold.sample_points(PROBE_SEED, PROBE_POINTS);
        alg.transitive = alg.rank_deficiency(&points).is_none();
        alg
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manifold(&self) -> &Arc<EmbeddedManifold> {
        &self.manifold
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn kind(&self) -> &AlgebroidKind {
        &self.kind
    }

    pub fn differentiator(&self) -> &Differentiator {
        &self.diff
    }

    pub fn has_bracket(&self) -> bool {
        self.has_bracket
    }

    pub fn is_transitive(&self) -> bool {
        self.transitive
    }

    pub fn is_tangent(&self) -> bool {
        matches!(self.kind, AlgebroidKind::Tangent)
    }

    pub fn has_trivial_anchor(&self) -> bool {
        match &self.kind {
            AlgebroidKind::BundleOfLieAlgebras { .. } => true,
            AlgebroidKind::Gauged { inner, .. } => inner.has_trivial_anchor(),
            _ => self.manifold.intrinsic_dim() == 0,
        }
    }

    pub fn action(&self) -> Option<&Arc<Action>> {
        match &self.kind {
            AlgebroidKind::Action { action, .. } => Some(action),
            _ => None,
        }
    }

    pub fn with_steps(mut self, h1: f64, h2: f64) -> Self {
        self.diff = self.diff.with_steps(h1, h2);
        if let AlgebroidKind::Gauged { inner, .. } = &mut self.kind {
            *inner = Arc::new((**inner).clone().with_steps(h1, h2));
        }
        self
    }

    /// The same anchored bundle with its bracket forgotten.
    pub fn forget_bracket(mut self) -> AnchoredBundle {
        self.has_bracket = false;
        self.name = format!("{} (anchored bundle)", self.name);
        self
    }

    pub(crate) fn require_bracket(&self) -> Result<()> {
        if self.has_bracket {
            Ok(())
        } else {
            Err(Error::unsupported(format!("'{}' has no section bracket", self.name)))
        }
    }

    pub fn anchor(&self, a: &DVector<f64>, x: &Point) -> DVector<f64> {
        match &self.kind {
            AlgebroidKind::Action { action, .. } => action.fundamental_field(a, x),
            AlgebroidKind::Tangent => self.manifold.tangent_project(x, a),
            AlgebroidKind::BundleOfLieAlgebras { .. } => DVector::zeros(self.manifold.ambient_dim()),
            AlgebroidKind::Gauged { inner, .. } => inner.anchor(&(self.gauge_inverse(x) * a), x),
        }
    }

    /// Derivative of x ↦ ρ(a, x) along v at fixed fiber coordinates a.
    pub fn anchor_dx(&self, a: &DVector<f64>, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            AlgebroidKind::Action { action, .. } => action.fundamental_field_dx(a, x, v),
            AlgebroidKind::Tangent => self.manifold.project_derivative(x, v, a),
            AlgebroidKind::BundleOfLieAlgebras { .. } => DVector::zeros(self.manifold.ambient_dim()),
            AlgebroidKind::Gauged { inner, generator, coordinate } => {
                let ginv_a = self.gauge_inverse(x) * a;
                let d = -(generator * &ginv_a) * v[*coordinate];
                inner.anchor(&d, x) + inner.anchor_dx(&ginv_a, x, v)
            }
        }
    }

    /// Columns ρ(e_i, x).
    pub fn anchor_matrix(&self, x: &Point) -> DMatrix<f64> {
        let n = self.manifold.ambient_dim();
        let mut m = DMatrix::zeros(n, self.fiber_dim);
        for i in 0..self.fiber_dim {
            m.set_column(i, &self.anchor(&unit(self.fiber_dim, i), x));
        }
        m
    }

    /// The vector field ρ(X), with an exact derivative whenever X has one.
    pub fn anchor_field(self: &Arc<Self>, xs: &Section) -> Section {
        let (a1, a2, s1, s2) = (self.clone(), self.clone(), xs.clone(), xs.clone());
        Section::analytic(
            self.manifold.ambient_dim(),
            xs.depth(),
            xs.derivative_depth(),
            move |x| a1.anchor(&s1.eval(x), x),
            move |d, x, v| a2.anchor_dx(&s2.eval(x), x, v) + a2.anchor(&s2.derivative(d, x, v), x),
        )
    }

    pub fn fiber_project(&self, x: &Point, a: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            AlgebroidKind::Tangent => self.manifold.tangent_project(x, a),
            _ => a.clone(),
        }
    }

    pub fn gauge(&self, x: &Point) -> DMatrix<f64> {
        match &self.kind {
            AlgebroidKind::Gauged { generator, coordinate, .. } => (generator * x[*coordinate]).exp(),
            _ => DMatrix::identity(self.fiber_dim, self.fiber_dim),
        }
    }

    pub fn gauge_inverse(&self, x: &Point) -> DMatrix<f64> {
        match &self.kind {
            AlgebroidKind::Gauged { generator, coordinate, .. } => (generator * -x[*coordinate]).exp(),
            _ => DMatrix::identity(self.fiber_dim, self.fiber_dim),
        }
    }

    /// Section bracket evaluated at a point.
    pub fn bracket(&self, xs: &Section, ys: &Section, x: &Point) -> Result<DVector<f64>> {
        self.require_bracket()?;
        check_dim(self.fiber_dim, xs.dim())?;
        check_dim(self.fiber_dim, ys.dim())?;
        Ok(self.bracket_at(xs, ys, x))
    }

    pub(crate) fn bracket_at(&self, xs: &Section, ys: &Section, x: &Point) -> DVector<f64> {
        let d = &self.diff;
        match &self.kind {
            AlgebroidKind::Action { action, derivative_scale } => {
                let a = xs.eval(x);
                let b = ys.eval(x);
                let alg = action.algebra();
                let ra = action.fundamental_field(&a, x);
                let rb = action.fundamental_field(&b, x);
                alg.bracket_vec(&a, &b)
                    + (ys.derivative(d, x, &ra) - xs.derivative(d, x, &rb)) * *derivative_scale
            }
            AlgebroidKind::Tangent => {
                let xv = xs.eval(x);
                let yv = ys.eval(x);
                let raw = ys.derivative(d, x, &xv) - xs.derivative(d, x, &yv);
                self.manifold.tangent_project(x, &raw)
            }
            AlgebroidKind::BundleOfLieAlgebras { constants } => constants.bracket(x, &xs.eval(x), &ys.eval(x)),
            AlgebroidKind::Gauged { inner, .. } => {
                let xi = self.ungauge(xs);
                let yi = self.ungauge(ys);
                self.gauge(x) * inner.bracket_at(&xi, &yi, x)
            }
        }
    }

    /// G⁻¹ X as a section of the inner algebroid, with exact derivative.
    fn ungauge(&self, xs: &Section) -> Section {
        let AlgebroidKind::Gauged { generator, coordinate, .. } = &self.kind else {
            return xs.clone();
        };
        let (k, c) = (generator.clone(), *coordinate);
        let (k1, k2, s1, s2) = (k.clone(), k, xs.clone(), xs.clone());
        Section::analytic(
            self.fiber_dim,
            xs.depth(),
            xs.derivative_depth(),
            move |x| (&k1 * -x[c]).exp() * s1.eval(x),
            move |d, x, v| {
                let ginv = (&k2 * -x[c]).exp();
                let gx = &ginv * s2.eval(x);
                -(&k2 * gx) * v[c] + ginv * s2.derivative(d, x, v)
            },
        )
    }

    pub(crate) fn bracket_depth(&self, xs: &Section, ys: &Section) -> u32 {
        let base = xs.depth().max(ys.depth());
        if self.has_trivial_anchor() {
            base
        } else {
            base.max(xs.derivative_depth()).max(ys.derivative_depth())
        }
    }

    /// The bracket as a section, differentiated by finite differences.
    pub fn bracket_field(self: &Arc<Self>, xs: &Section, ys: &Section) -> Section {
        if self.is_tangent() {
            return jacobi_lie_bracket_field(&self.diff, xs, ys);
        }
        let (a, s, t) = (self.clone(), xs.clone(), ys.clone());
        Section::from_fn(self.fiber_dim, self.bracket_depth(xs, ys), move |x| a.bracket_at(&s, &t, x))
    }

    pub fn constant_section(&self, a: DVector<f64>) -> Section {
        if self.is_tangent() {
            let n = self.manifold.ambient_dim();
            let polys = a.iter().map(|c| Polynomial::constant(n, *c)).collect();
            Section::projected(self.manifold.clone(), polys)
        } else {
            Section::constant(a)
        }
    }

    /// Random polynomial section with coefficients uniform in [−1, 1].
    pub fn random_section<R: Rng + ?Sized>(&self, degree: u32, rng: &mut R) -> Section {
        let n = self.manifold.ambient_dim();
        let polys: Vec<Polynomial> = (0..self.fiber_dim)
            .map(|_| Polynomial::random(n, degree, -1.0, 1.0, rng))
            .collect();
        if self.is_tangent() {
            Section::projected(self.manifold.clone(), polys)
        } else {
            Section::polynomial(polys)
        }
    }

    /// First point where the anchor fails to span T_xM, with its singular-value ratio.
    pub fn rank_deficiency(&self, points: &[Point]) -> Option<(Point, f64)> {
        let d = self.manifold.intrinsic_dim();
        if d == 0 {
            return None;
        }
        for x in points {
            let a = self.anchor_matrix(x);
            let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
            sv.sort_by(|p, q| q.total_cmp(p));
            let top = sv.first().copied().unwrap_or(0.0);
            let sd = sv.get(d - 1).copied().unwrap_or(0.0);
            let ratio = if top > 0.0 { sd / top } else { 0.0 };
            if top == 0.0 || ratio <= 1e-8 {
                return Some((x.clone(), ratio));
            }
        }
        None
    }

    /// Default probe points for this algebroid's base.
    pub fn probe_points(&self, seed: u64, count: usize) -> Vec<Point> {
        self.manifold.sample_points(seed, count)
    }
}

pub fn make_action_algebroid(action: Action) -> Result<Algebroid> {
    let points = action.manifold.sample_points(PROBE_SEED, PROBE_POINTS);
    let (res, anti, witness) = action.homomorphism_residual(&points);
    if res > HOMOMORPHISM_TOL {
        let reason = if anti <= HOMOMORPHISM_TOL {
            "anti-homomorphism detected: ξ ↦ ξ_M reverses brackets".to_string()
        } else {
            format!("action '{}' fails the homomorphism probe", action.name)
        };
        return Err(Error::Construction { reason, residual: res, witness: witness.as_slice().to_vec() });
    }
    let name = format!("{}⋉{}", action.algebra.name(), action.manifold.name());
    let k = action.algebra.dim();
    let m = action.manifold.clone();
    Ok(Algebroid::finish(
        name,
        m,
        k,
        AlgebroidKind::Action { action: Arc::new(action), derivative_scale: 1.0 },
    ))
}

/// Action algebroid whose derivative terms are scaled by `s` (a deliberately broken bracket for s ≠ 1).
#[doc(hidden)]
pub fn make_corrupted_action_algebroid(action: Action, s: f64) -> Result<Algebroid> {
    let mut alg = make_action_algebroid(action)?;
    if let AlgebroidKind::Action { derivative_scale, .. } = &mut alg.kind {
        *derivative_scale = s;
    }
    alg.name = format!("{} (derivative terms ×{s})", alg.name);
    Ok(alg)
}

pub fn make_tangent_algebroid(manifold: EmbeddedManifold) -> Algebroid {
    let name = format!("T{}", manifold.name());
    let n = manifold.ambient_dim();
    Algebroid::finish(name, Arc::new(manifold), n, AlgebroidKind::Tangent)
}

pub fn make_bundle_of_lie_algebras(manifold: EmbeddedManifold, constants: ConstantsField) -> Result<Algebroid> {
    let points = manifold.sample_points(PROBE_SEED, PROBE_POINTS);
    let n = constants.dim();
    for x in &points {
        let c = constants.at(x);
        let alg = LieAlgebra::from_flat("fiber", n, c.clone()).map_err(|e| Error::Construction {
            reason: format!("fiber constants invalid: {e}"),
            residual: f64::NAN,
            witness: x.as_slice().to_vec(),
        })?;
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let r = alg.verify_jacobi();
        if r > 1e-10 * scale * scale {
            return Err(Error::Construction {
                reason: "pointwise Jacobi identity fails".into(),
                residual: r,
                witness: x.as_slice().to_vec(),
            });
        }
    }
    let name = format!("bundle({})→{}", constants.description, manifold.name());
    Ok(Algebroid::finish(name, Arc::new(manifold), n, AlgebroidKind::BundleOfLieAlgebras { constants }))
}

/// A Lie algebra as an algebroid over a point.
pub fn lie_algebra_over_point(algebra: &LieAlgebra) -> Algebroid {
    let c = ConstantsField::constant(algebra);
    let name = algebra.name().to_string();
    Algebroid::finish(name, Arc::new(EmbeddedManifold::euclidean(0)), algebra.dim(), AlgebroidKind::BundleOfLieAlgebras { constants: c })
}

/// Re-express `inner` in the trivialization whose frame is G(x) = exp(x_c K) applied to the standard basis.
pub fn make_gauged(inner: Algebroid, generator: DMatrix<f64>, coordinate: usize) -> Result<Algebroid> {
    let k = inner.fiber_dim;
    if generator.nrows() != k || generator.ncols() != k {
        return Err(Error::invalid(format!("gauge generator must be {k}x{k}")));
    }
    if coordinate >= inner.manifold.ambient_dim() {
        return Err(Error::invalid(format!("gauge coordinate x{} out of range", coordinate + 1)));
    }
    let name = format!("gauged {}", inner.name);
    let m = inner.manifold.clone();
    Ok(Algebroid::finish(name, m, k, AlgebroidKind::Gauged { inner: Arc::new(inner), generator, coordinate }))
}

/// so(3)⋉S² written in the frame exp(x₁ K) e_i with K = ê₃.
pub fn gauge_twisted_so3() -> Algebroid {
    let inner = make_action_algebroid(Action::so3_sphere()).expect("builtin action is a homomorphism");
    let k = hat(&unit(3, 2));
    make_gauged(inner, k, 0).expect("valid builtin gauge")
}

fn norm_scale(s: &Section, points: &[Point]) -> f64 {
    s.sup_norm(points).max(1e-300)
}

/// max ‖ρ⟦X,Y⟧ − [ρX, ρY]‖ relative to ‖X‖‖Y‖.
pub fn check_anchor_homomorphism(alg: &Arc<Algebroid>, xs: &Section, ys: &Section, points: &[Point]) -> Result<f64> {
    alg.require_bracket()?;
    let d = alg.differentiator();
    let m = alg.manifold();
    let rx = alg.anchor_field(xs);
    let ry = alg.anchor_field(ys);
    let scale = norm_scale(xs, points) * norm_scale(ys, points);
    let mut worst: f64 = 0.0;
    for x in points {
        let lhs = alg.anchor(&alg.bracket_at(xs, ys, x), x);
        let jl = m.tangent_project(x, &(ry.derivative(d, x, &rx.eval(x)) - rx.derivative(d, x, &ry.eval(x))));
        worst = worst.max((lhs - jl).norm() / scale);
    }
    Ok(worst)
}

/// max ‖⟦X,fY⟧ − ρ(X)[f]Y − f⟦X,Y⟧‖ relative to ‖X‖‖Y‖ max|f|.
pub fn check_leibniz(alg: &Arc<Algebroid>, xs: &Section, f: &SmoothScalar, ys: &Section, points: &[Point]) -> Result<f64> {
    alg.require_bracket()?;
    let fy = ys.scaled_by(f);
    let scale = norm_scale(xs, points) * norm_scale(ys, points) * f.sup_abs(points).max(1.0);
    let mut worst: f64 = 0.0;
    for x in points {
        let lhs = alg.bracket_at(xs, &fy, x);
        let rho_x = alg.anchor(&xs.eval(x), x);
        let rhs = ys.eval(x) * f.derivative(x, &rho_x) + alg.bracket_at(xs, ys, x) * f.eval(x);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    Ok(worst)
}

/// Cyclic-sum Jacobi residual of the section bracket relative to ‖X‖‖Y‖‖Z‖.
pub fn check_bracket_jacobi(alg: &Arc<Algebroid>, xs: &Section, ys: &Section, zs: &Section, points: &[Point]) -> Result<f64> {
    alg.require_bracket()?;
    let yz = alg.bracket_field(ys, zs);
    let zx = alg.bracket_field(zs, xs);
    let xy = alg.bracket_field(xs, ys);
    let scale = norm_scale(xs, points) * norm_scale(ys, points) * norm_scale(zs, points);
    let mut worst: f64 = 0.0;
    for x in points {
        let s = alg.bracket_at(xs, &yz, x) + alg.bracket_at(ys, &zx, x) + alg.bracket_at(zs, &xy, x);
        worst = worst.max(s.norm() / scale);
    }
    Ok(worst)
}

/// Linearity and tangency of the anchor on random fiber vectors.
pub fn check_anchor_linearity<R: Rng + ?Sized>(alg: &Algebroid, points: &[Point], rng: &mut R) -> (f64, f64) {
    let k = alg.fiber_dim();
    let m = alg.manifold();
    let (mut lin, mut tan) = (0.0f64, 0.0f64);
    for x in points {
        let a = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let s: f64 = rng.random_range(-2.0..2.0);
        let lhs = alg.anchor(&(&a * s + &b), x);
        let rhs = alg.anchor(&a, x) * s + alg.anchor(&b, x);
        lin = lin.max((&lhs - rhs).norm());
        tan = tan.max((m.tangent_project(x, &lhs) - &lhs).norm());
    }
    (lin, tan)
}

pub(crate) fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

fn homogeneous_point(x: &Point) -> DVector<f64> {
    let n = x.len();
    let mut t = DVector::zeros(n + 1);
    t.rows_mut(0, n).copy_from(x);
    t[n] = 1.0;
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn so3_sphere() -> Arc<Algebroid> {
        Arc::new(make_action_algebroid(Action::so3_sphere()).unwrap())
    }

    #[test]
    fn so3_sphere_anchor_is_cross_product() {
        let alg = so3_sphere();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let a = alg.anchor(&unit(3, 2), &x);
        assert_abs_diff_eq!(a, DVector::from_vec(vec![0.0, -1.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn opposite_sign_action_is_rejected() {
        let err = make_action_algebroid(Action::so3_sphere_opposite_sign()).unwrap_err();
        match err {
            Error::Construction { reason, residual, witness } => {
                assert!(reason.contains("anti-homomorphism"));
                assert!(residual > 1e-2);
                assert_eq!(witness.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn builtin_actions_are_homomorphisms() {
        for name in ["so3_sphere", "so3_group_right", "abelian_torus", "se2_plane", "heisenberg_plane"] {
            let a = Action::builtin(name).unwrap();
            let pts = a.manifold().sample_points(1, 10);
            let (r, _, _) = a.homomorphism_residual(&pts);
            assert!(r <= 1e-12, "{name}: {r}");
        }
    }

    #[test]
    fn flow_matches_fundamental_field_derivative() {
        for name in ["so3_sphere", "so3_group_right", "abelian_torus", "se2_plane", "heisenberg_plane"] {
            let a = Action::builtin(name).unwrap();
            let y = a.manifold().sample_points(2, 1).remove(0);
            let xi = DVector::from_fn(a.algebra().dim(), |i, _| 0.3 + 0.2 * i as f64);
            let h = 1e-6;
            let fd = (a.flow(&(&xi * h), &y).unwrap() - a.flow(&(&xi * -h), &y).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(fd, a.fundamental_field(&xi, &y), epsilon = 1e-8);
            let z = a.flow(&xi, &y).unwrap();
            assert!(a.manifold().constraint_norm(&z) <= 1e-12, "{name}");
        }
    }

    #[test]
    fn constant_sections_bracket_in_algebra() {
        let alg = so3_sphere();
        let xi = Section::constant(DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let eta = Section::constant(DVector::from_vec(vec![0.0, 1.0, 0.0]));
        for x in alg.probe_points(3, 5) {
            assert_abs_diff_eq!(alg.bracket(&xi, &eta, &x).unwrap(), unit(3, 2), epsilon = 1e-15);
        }
    }

    #[test]
    fn transitivity_flags() {
        assert!(so3_sphere().is_transitive());
        assert!(make_tangent_algebroid(EmbeddedManifold::sphere2()).is_transitive());
        let bla = make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), ConstantsField::constant(&LieAlgebra::so3())).unwrap();
        assert!(!bla.is_transitive());
        assert!(gauge_twisted_so3().is_transitive());
    }

    #[test]
    fn tangent_anchor_is_identity_on_tangent_sections() {
        let alg = Arc::new(make_tangent_algebroid(EmbeddedManifold::sphere2()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = alg.random_section(2, &mut rng);
        for x in alg.probe_points(4, 10) {
            assert_abs_diff_eq!(alg.anchor(&s.eval(&x), &x), s.eval(&x), epsilon = 1e-15);
        }
    }

    #[test]
    fn scaled_constants_form_bundle_of_lie_algebras() {
        let scale = SmoothScalar::Polynomial(
            Polynomial::constant(3, 1.0).add(&Polynomial::coordinate(3, 0).mul(&Polynomial::coordinate(3, 0))),
        );
        let bla = make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), ConstantsField::scaled(&LieAlgebra::so3(), scale)).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        assert_abs_diff_eq!(bla.anchor(&unit(3, 0), &x), DVector::zeros(3));
        let c = ConstantsField::from_fn(2, "broken", |_| vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        assert!(make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), c).is_ok());
        let bad = ConstantsField::from_fn(3, "non-jacobi", |_| {
            let mut c = vec![0.0; 27];
            for (i, j, k, v) in [(0, 1, 2, 1.0), (1, 2, 2, 1.0), (0, 2, 0, 1.0)] {
                c[(i * 3 + j) * 3 + k] = v;
                c[(j * 3 + i) * 3 + k] = -v;
            }
            c
        });
        assert!(matches!(
            make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), bad),
            Err(Error::Construction { .. })
        ));
    }

    #[test]
    fn forgotten_bracket_is_unsupported() {
        let alg = Arc::new(make_tangent_algebroid(EmbeddedManifold::sphere2()).forget_bracket());
        let s = Section::zero(3);
        assert!(matches!(alg.bracket(&s, &s, &DVector::from_vec(vec![0.0, 0.0, 1.0])), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gauge_inverse_inverts() {
        let g = gauge_twisted_so3();
        let x = DVector::from_vec(vec![0.48, 0.6, 0.64]);
        let p = g.gauge(&x) * g.gauge_inverse(&x);
        assert_abs_diff_eq!(p, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn anchor_dx_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for alg in [
            (*so3_sphere()).clone(),
            gauge_twisted_so3(),
            make_tangent_algebroid(EmbeddedManifold::so3_group()),
        ] {
            let m = alg.manifold().clone();
            let x = m.sample(&mut rng);
            let v = m.random_tangent(&x, &mut rng);
            let a = DVector::from_fn(alg.fiber_dim(), |_, _| rng.random_range(-1.0..1.0));
            let h = 1e-6;
            let fd = (alg.anchor(&a, &m.retract(&(&x + &v * h))) - alg.anchor(&a, &m.retract(&(&x - &v * h)))) / (2.0 * h);
            assert_abs_diff_eq!(alg.anchor_dx(&a, &x, &v), fd, epsilon = 1e-7);
        }
    }
}
