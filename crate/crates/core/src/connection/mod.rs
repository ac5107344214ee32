//! A-connections on algebroids and the tensors derived from them.

mod identities;
mod tm;

pub use identities::{
    bianchi1_residual, bianchi2_residual, first_bianchi_residual, second_bianchi_residual,
    triple_residual, Identity, TensorReport,
};
pub use tm::{TmConnection, TmTerm};

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::algebroid::{Algebroid, AlgebroidKind};
use crate::error::{check_dim, Error, Result};
use crate::manifold::{ManifoldKind, Polynomial, Section};
use crate::Point;

/// Pointwise bilinear map Γ(x)(a, b) on fiber coordinates.
pub trait ConnectionCoefficients: Send + Sync + fmt::Debug {
    fn apply(&self, x: &Point, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64>;
}

/// Γ(x)(a,b)^l = Σ a_i b_j Γ_ij^l(x) with polynomial entries.
#[derive(Clone, Debug)]
pub struct PolynomialGamma {
    k: usize,
    table: Vec<Polynomial>,
}

impl PolynomialGamma {
    /// `table[(i*k + j)*k + l]` holds Γ_ij^l.
    pub fn new(k: usize, table: Vec<Polynomial>) -> Result<Self> {
        check_dim(k * k * k, table.len())?;
        Ok(PolynomialGamma { k, table })
    }

    pub fn random<R: Rng + ?Sized>(k: usize, nvars: usize, degree: u32, scale: f64, rng: &mut R) -> Self {
        let table = (0..k * k * k)
            .map(|_| Polynomial::random(nvars, degree, -scale, scale, rng))
            .collect();
        PolynomialGamma { k, table }
    }

    /// Constant antisymmetric part only: Γ_ij^l = −Γ_ji^l.
    pub fn constant_antisymmetric<R: Rng + ?Sized>(k: usize, nvars: usize, scale: f64, rng: &mut R) -> Self {
        let mut table = vec![Polynomial::zero(nvars); k * k * k];
        for i in 0..k {
            for j in i + 1..k {
                for l in 0..k {
                    let c = rng.random_range(-scale..=scale);
                    table[(i * k + j) * k + l] = Polynomial::constant(nvars, c);
                    table[(j * k + i) * k + l] = Polynomial::constant(nvars, -c);
                }
            }
        }
        PolynomialGamma { k, table }
    }
}

impl ConnectionCoefficients for PolynomialGamma {
    fn apply(&self, x: &Point, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let k = self.k;
        let mut out = DVector::zeros(k);
        for i in 0..k {
            for j in 0..k {
                let w = a[i] * b[j];
                if w == 0.0 {
                    continue;
                }
                for l in 0..k {
                    let p = &self.table[(i * k + j) * k + l];
                    if !p.is_zero() {
                        out[l] += w * p.eval(x.as_slice());
                    }
                }
            }
        }
        out
    }
}

type GammaFn = Arc<dyn Fn(&Point, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub struct ClosureGamma {
    name: String,
    f: GammaFn,
}

impl ClosureGamma {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&Point, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        ClosureGamma { name: name.into(), f: Arc::new(f) }
    }
}

impl fmt::Debug for ClosureGamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClosureGamma({})", self.name)
    }
}

impl ConnectionCoefficients for ClosureGamma {
    fn apply(&self, x: &Point, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, a, b)
    }
}

#[derive(Clone, Debug)]
pub enum ConnectionKind {
    /// ∇_X Y = DY[ρX]: componentwise derivative in the trivialization.
    CanonicalFlat,
    Zero,
    /// ∇_X Y = DY[ρX] + Γ(X, Y).
    Coefficient(Arc<dyn ConnectionCoefficients>),
    /// ∇_X Y = ∇^TM_{ρX} Y.
    InducedFromTm(TmConnection),
    Dual(Box<AConnection>),
    Symmetrized(Box<AConnection>),
}

/// The product X ▷ Y = ∇_X Y on sections of an algebroid.
#[derive(Clone, Debug)]
pub struct AConnection {
    algebroid: Arc<Algebroid>,
    kind: ConnectionKind,
    name: String,
    torsion_sign: f64,
}

impl AConnection {
    fn new(algebroid: Arc<Algebroid>, kind: ConnectionKind, name: impl Into<String>) -> Self {
        AConnection { algebroid, kind, name: name.into(), torsion_sign: 1.0 }
    }

    /// Componentwise derivative along the anchor. On a gauge-twisted algebroid this is the
    /// canonical flat connection of the untwisted one, written in the twisted frame.
    pub fn canonical_flat(alg: Arc<Algebroid>) -> Result<Self> {
        match alg.kind() {
            AlgebroidKind::Action { .. } | AlgebroidKind::BundleOfLieAlgebras { .. } => {
                Ok(Self::new(alg, ConnectionKind::CanonicalFlat, "canonical_flat"))
            }
            AlgebroidKind::Tangent if matches!(alg.manifold().kind(), ManifoldKind::Euclidean(_)) => {
                Ok(Self::new(alg, ConnectionKind::CanonicalFlat, "canonical_flat"))
            }
            AlgebroidKind::Gauged { generator, coordinate, .. } => {
                let tm = TmConnection::gauge(generator.clone(), *coordinate, alg.manifold().ambient_dim())?;
                Ok(Self::new(alg, ConnectionKind::InducedFromTm(tm), "canonical_flat (gauged)"))
            }
            AlgebroidKind::Tangent => Err(Error::invalid(format!(
                "the componentwise derivative is not a connection on {}; use a coefficient connection",
                alg.name()
            ))),
        }
    }

    /// ∇ ≡ 0, allowed only when the anchor vanishes.
    pub fn zero(alg: Arc<Algebroid>) -> Result<Self> {
        if !alg.has_trivial_anchor() {
            return Err(Error::invalid(format!(
                "the zero connection requires a trivial anchor, but '{}' has a nonzero anchor",
                alg.name()
            )));
        }
        Ok(Self::new(alg, ConnectionKind::Zero, "zero"))
    }

    pub fn coefficient(alg: Arc<Algebroid>, gamma: Arc<dyn ConnectionCoefficients>) -> Self {
        Self::new(alg, ConnectionKind::Coefficient(gamma), "coefficient")
    }

    pub fn random_coefficient<R: Rng + ?Sized>(alg: Arc<Algebroid>, degree: u32, scale: f64, rng: &mut R) -> Self {
        let g = PolynomialGamma::random(alg.fiber_dim(), alg.manifold().ambient_dim(), degree, scale, rng);
        Self::coefficient(alg, Arc::new(g)).named("random_coefficient")
    }

    pub fn induced_from_tm(tm: TmConnection, alg: Arc<Algebroid>) -> Result<Self> {
        check_dim(alg.fiber_dim(), tm.fiber_dim())?;
        check_dim(alg.manifold().ambient_dim(), tm.ambient_dim())?;
        Ok(Self::new(alg, ConnectionKind::InducedFromTm(tm), "induced_from_tm"))
    }

    /// The (−)-connection on SO(3): left-invariant fields are parallel.
    pub fn so3_minus(alg: Arc<Algebroid>) -> Result<Self> {
        if !(alg.is_tangent() && alg.manifold().kind() == ManifoldKind::So3Group) {
            return Err(Error::invalid("the (−)-connection is defined on the tangent algebroid of so3_group"));
        }
        let gamma = ClosureGamma::new("R Xᵀ Y", |x, a, b| {
            let r = nalgebra::DMatrix::from_row_slice(3, 3, x.as_slice());
            let xa = nalgebra::DMatrix::from_row_slice(3, 3, a.as_slice());
            let yb = nalgebra::DMatrix::from_row_slice(3, 3, b.as_slice());
            let m = r * xa.transpose() * yb;
            DVector::from_iterator(9, m.transpose().iter().copied())
        });
        Ok(Self::coefficient(alg, Arc::new(gamma)).named("minus"))
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Torsion computed with the bracket sign flipped; a deliberately wrong implementation.
    #[doc(hidden)]
    pub fn with_mis_signed_torsion(mut self) -> Self {
        self.torsion_sign = -1.0;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ConnectionKind {
        &self.kind
    }

    pub fn algebroid(&self) -> &Arc<Algebroid> {
        &self.algebroid
    }

    /// ∇̄_X Y = ∇_Y X + ⟦X,Y⟧.
    pub fn dual(&self) -> Result<Self> {
        self.algebroid.require_bracket()?;
        Ok(self.dual_unchecked())
    }

    pub(crate) fn dual_unchecked(&self) -> Self {
        AConnection {
            algebroid: self.algebroid.clone(),
            kind: ConnectionKind::Dual(Box::new(self.clone())),
            name: format!("dual({})", self.name),
            torsion_sign: self.torsion_sign,
        }
    }

    /// ½(∇ + ∇̄).
    pub fn symmetrize(&self) -> Result<Self> {
        self.algebroid.require_bracket()?;
        Ok(AConnection {
            algebroid: self.algebroid.clone(),
            kind: ConnectionKind::Symmetrized(Box::new(self.clone())),
            name: format!("sym({})", self.name),
            torsion_sign: self.torsion_sign,
        })
    }

    fn check_sections(&self, sections: &[&Section]) -> Result<()> {
        for s in sections {
            check_dim(self.algebroid.fiber_dim(), s.dim())?;
        }
        Ok(())
    }

    fn check_tensor(&self, sections: &[&Section], x: &Point) -> Result<()> {
        self.algebroid.require_bracket()?;
        self.algebroid.manifold().check_point(x)?;
        self.check_sections(sections)
    }

    pub fn covariant(&self, xs: &Section, ys: &Section, x: &Point) -> Result<DVector<f64>> {
        self.algebroid.manifold().check_point(x)?;
        self.check_sections(&[xs, ys])?;
        if matches!(self.kind, ConnectionKind::Dual(_) | ConnectionKind::Symmetrized(_)) {
            self.algebroid.require_bracket()?;
        }
        Ok(self.product_at(xs, ys, x))
    }

    pub fn torsion(&self, xs: &Section, ys: &Section, x: &Point) -> Result<DVector<f64>> {
        self.check_tensor(&[xs, ys], x)?;
        Ok(self.torsion_at(xs, ys, x))
    }

    pub fn curvature(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
        self.check_tensor(&[xs, ys, zs], x)?;
        Ok(self.curvature_at(xs, ys, zs, x))
    }

    /// (∇_Z T)(X, Y).
    pub fn nabla_torsion(&self, zs: &Section, xs: &Section, ys: &Section, x: &Point) -> Result<DVector<f64>> {
        self.check_tensor(&[zs, xs, ys], x)?;
        Ok(self.nabla_torsion_at(zs, xs, ys, x))
    }

    /// (∇_Z R)(X, Y) W.
    pub fn nabla_curvature(&self, zs: &Section, xs: &Section, ys: &Section, ws: &Section, x: &Point) -> Result<DVector<f64>> {
        self.check_tensor(&[zs, xs, ys, ws], x)?;
        Ok(self.nabla_curvature_at(zs, xs, ys, ws, x))
    }

    pub fn associator(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
        self.algebroid.manifold().check_point(x)?;
        self.check_sections(&[xs, ys, zs])?;
        Ok(self.associator_at(xs, ys, zs, x))
    }

    pub fn triple_bracket(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
        self.algebroid.manifold().check_point(x)?;
        self.check_sections(&[xs, ys, zs])?;
        Ok(self.triple_bracket_at(xs, ys, zs, x))
    }

    // Unchecked pointwise evaluators. Callers guarantee dimensions and bracket presence.

    pub(crate) fn product_at(&self, xs: &Section, ys: &Section, x: &Point) -> DVector<f64> {
        let alg = &self.algebroid;
        let d = alg.differentiator();
        match &self.kind {
            ConnectionKind::CanonicalFlat => {
                let v = alg.anchor(&xs.eval(x), x);
                alg.fiber_project(x, &ys.derivative(d, x, &v))
            }
            ConnectionKind::Zero => DVector::zeros(alg.fiber_dim()),
            ConnectionKind::Coefficient(g) => {
                let a = xs.eval(x);
                let v = alg.anchor(&a, x);
                let raw = ys.derivative(d, x, &v) + g.apply(x, &a, &ys.eval(x));
                alg.fiber_project(x, &raw)
            }
            ConnectionKind::InducedFromTm(tm) => {
                let v = alg.anchor(&xs.eval(x), x);
                let raw = ys.derivative(d, x, &v) + tm.gamma(x, &v, &ys.eval(x));
                alg.fiber_project(x, &raw)
            }
            ConnectionKind::Dual(inner) => inner.product_at(ys, xs, x) + alg.bracket_at(xs, ys, x),
            ConnectionKind::Symmetrized(inner) => {
                (inner.product_at(xs, ys, x) + inner.product_at(ys, xs, x) + alg.bracket_at(xs, ys, x)) * 0.5
            }
        }
    }

    pub(crate) fn product_depth(&self, xs: &Section, ys: &Section) -> u32 {
        let plain = xs.depth().max(ys.depth()).max(ys.derivative_depth());
        match &self.kind {
            ConnectionKind::Zero => 0,
            ConnectionKind::CanonicalFlat | ConnectionKind::Coefficient(_) | ConnectionKind::InducedFromTm(_) => plain,
            ConnectionKind::Dual(inner) => inner.product_depth(ys, xs).max(self.algebroid.bracket_depth(xs, ys)),
            ConnectionKind::Symmetrized(inner) => inner
                .product_depth(xs, ys)
                .max(inner.product_depth(ys, xs))
                .max(self.algebroid.bracket_depth(xs, ys)),
        }
    }

    /// X ▷ Y as a section.
    pub fn product(&self, xs: &Section, ys: &Section) -> Section {
        let (c, a, b) = (self.clone(), xs.clone(), ys.clone());
        Section::from_fn(self.algebroid.fiber_dim(), self.product_depth(xs, ys), move |x| c.product_at(&a, &b, x))
    }

    pub(crate) fn bracket_at(&self, xs: &Section, ys: &Section, x: &Point) -> DVector<f64> {
        self.algebroid.bracket_at(xs, ys, x)
    }

    pub(crate) fn bracket_field(&self, xs: &Section, ys: &Section) -> Section {
        self.algebroid.bracket_field(xs, ys)
    }

    pub(crate) fn torsion_at(&self, xs: &Section, ys: &Section, x: &Point) -> DVector<f64> {
        self.product_at(xs, ys, x) - self.product_at(ys, xs, x) - self.bracket_at(xs, ys, x) * self.torsion_sign
    }

    pub(crate) fn torsion_field(&self, xs: &Section, ys: &Section) -> Section {
        let depth = self
            .product_depth(xs, ys)
            .max(self.product_depth(ys, xs))
            .max(self.algebroid.bracket_depth(xs, ys));
        let (c, a, b) = (self.clone(), xs.clone(), ys.clone());
        Section::from_fn(self.algebroid.fiber_dim(), depth, move |x| c.torsion_at(&a, &b, x))
    }

    pub(crate) fn curvature_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        let yz = self.product(ys, zs);
        let xz = self.product(xs, zs);
        let xy = self.bracket_field(xs, ys);
        self.product_at(xs, &yz, x) - self.product_at(ys, &xz, x) - self.product_at(&xy, zs, x)
    }

    pub(crate) fn curvature_field(&self, xs: &Section, ys: &Section, zs: &Section) -> Section {
        let yz = self.product(ys, zs);
        let xz = self.product(xs, zs);
        let xy = self.bracket_field(xs, ys);
        let depth = self
            .product_depth(xs, &yz)
            .max(self.product_depth(ys, &xz))
            .max(self.product_depth(&xy, zs));
        let (c, a, b, z) = (self.clone(), xs.clone(), ys.clone(), zs.clone());
        Section::from_fn(self.algebroid.fiber_dim(), depth, move |x| c.curvature_at(&a, &b, &z, x))
    }

    pub(crate) fn nabla_torsion_at(&self, zs: &Section, xs: &Section, ys: &Section, x: &Point) -> DVector<f64> {
        let t = self.torsion_field(xs, ys);
        let zx = self.product(zs, xs);
        let zy = self.product(zs, ys);
        self.product_at(zs, &t, x) - self.torsion_at(&zx, ys, x) - self.torsion_at(xs, &zy, x)
    }

    pub(crate) fn nabla_curvature_at(&self, zs: &Section, xs: &Section, ys: &Section, ws: &Section, x: &Point) -> DVector<f64> {
        let r = self.curvature_field(xs, ys, ws);
        let zx = self.product(zs, xs);
        let zy = self.product(zs, ys);
        let zw = self.product(zs, ws);
        self.product_at(zs, &r, x)
            - self.curvature_at(&zx, ys, ws, x)
            - self.curvature_at(xs, &zy, ws, x)
            - self.curvature_at(xs, ys, &zw, x)
    }

    pub(crate) fn associator_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        let yz = self.product(ys, zs);
        let xy = self.product(xs, ys);
        self.product_at(xs, &yz, x) - self.product_at(&xy, zs, x)
    }

    pub(crate) fn triple_bracket_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        self.associator_at(xs, ys, zs, x) - self.associator_at(ys, xs, zs, x)
    }
}
