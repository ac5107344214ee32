use nalgebra::DVector;
use serde::Serialize;

use super::AConnection;
use crate::error::Result;
use crate::manifold::Section;
use crate::probes::Witness;
use crate::Point;

/// Tensors and identities tracked in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Curvature,
    Torsion,
    NablaCurvature,
    NablaTorsion,
    DualCurvature,
    DualTorsion,
    /// (∇_Z T)(X,Y) = R̄(X,Y)Z + R(Y,Z)X + R(Z,X)Y
    Bianchi1,
    /// ∮ T(X,T(Y,Z)) = ∮ R(X,Y)Z + ∮ R̄(X,Y)Z
    Bianchi2,
    /// ∮ (∇_X T)(Y,Z) = ∮ R(X,Y)Z + ∮ T(X,T(Y,Z))
    FirstBianchi,
    /// ∮ (∇_X R)(Y,Z) = ∮ R(X,T(Y,Z))
    SecondBianchi,
    /// [X,Y,Z] = R(X,Y)Z − T(X,Y) ▷ Z
    Triple,
}

impl Identity {
    pub fn label(self) -> &'static str {
        match self {
            Identity::Curvature => "R",
            Identity::Torsion => "T",
            Identity::NablaCurvature => "nabla_R",
            Identity::NablaTorsion => "nabla_T",
            Identity::DualCurvature => "R_bar",
            Identity::DualTorsion => "T_bar",
            Identity::Bianchi1 => "bianchi1",
            Identity::Bianchi2 => "bianchi2",
            Identity::FirstBianchi => "first_bianchi",
            Identity::SecondBianchi => "second_bianchi",
            Identity::Triple => "triple",
        }
    }

    pub const IDENTITIES: [Identity; 5] = [
        Identity::Bianchi1,
        Identity::Bianchi2,
        Identity::FirstBianchi,
        Identity::SecondBianchi,
        Identity::Triple,
    ];
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorReport {
    pub id: Identity,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub witness: Option<Witness>,
}

fn csum<F>(xs: &Section, ys: &Section, zs: &Section, mut f: F) -> DVector<f64>
where
    F: FnMut(&Section, &Section, &Section) -> DVector<f64>,
{
    f(xs, ys, zs) + f(ys, zs, xs) + f(zs, xs, ys)
}

impl AConnection {
    pub(crate) fn bianchi1_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        let dual = self.dual_unchecked();
        self.nabla_torsion_at(zs, xs, ys, x)
            - dual.curvature_at(xs, ys, zs, x)
            - self.curvature_at(ys, zs, xs, x)
            - self.curvature_at(zs, xs, ys, x)
    }

    pub(crate) fn bianchi2_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        let dual = self.dual_unchecked();
        csum(xs, ys, zs, |a, b, c| {
            let tbc = self.torsion_field(b, c);
            self.torsion_at(a, &tbc, x) - self.curvature_at(a, b, c, x) - dual.curvature_at(a, b, c, x)
        })
    }

    pub(crate) fn first_bianchi_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        csum(xs, ys, zs, |a, b, c| {
            let tbc = self.torsion_field(b, c);
            self.nabla_torsion_at(a, b, c, x) - self.curvature_at(a, b, c, x) - self.torsion_at(a, &tbc, x)
        })
    }

    pub(crate) fn second_bianchi_at(&self, xs: &Section, ys: &Section, zs: &Section, ws: &Section, x: &Point) -> DVector<f64> {
        csum(xs, ys, zs, |a, b, c| {
            let tbc = self.torsion_field(b, c);
            self.nabla_curvature_at(a, b, c, ws, x) - self.curvature_at(a, &tbc, ws, x)
        })
    }

    pub(crate) fn triple_identity_at(&self, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> DVector<f64> {
        let txy = self.torsion_field(xs, ys);
        self.triple_bracket_at(xs, ys, zs, x) - self.curvature_at(xs, ys, zs, x) + self.product_at(&txy, zs, x)
    }

    pub(crate) fn identity_at(&self, id: Identity, s: &[Section; 4], x: &Point) -> DVector<f64> {
        let [a, b, c, w] = s;
        match id {
            Identity::Curvature => self.curvature_at(a, b, c, x),
            Identity::Torsion => self.torsion_at(a, b, x),
            Identity::NablaCurvature => self.nabla_curvature_at(a, b, c, w, x),
            Identity::NablaTorsion => self.nabla_torsion_at(a, b, c, x),
            Identity::DualCurvature => self.dual_unchecked().curvature_at(a, b, c, x),
            Identity::DualTorsion => self.dual_unchecked().torsion_at(a, b, x),
            Identity::Bianchi1 => self.bianchi1_at(a, b, c, x),
            Identity::Bianchi2 => self.bianchi2_at(a, b, c, x),
            Identity::FirstBianchi => self.first_bianchi_at(a, b, c, x),
            Identity::SecondBianchi => self.second_bianchi_at(a, b, c, w, x),
            Identity::Triple => self.triple_identity_at(a, b, c, x),
        }
    }

    /// Number of section arguments the quantity is multilinear in.
    pub(crate) fn arity(id: Identity) -> usize {
        match id {
            Identity::Torsion | Identity::DualTorsion => 2,
            Identity::NablaCurvature | Identity::SecondBianchi => 4,
            _ => 3,
        }
    }
}

pub fn bianchi1_residual(c: &AConnection, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
    c.check_tensor(&[xs, ys, zs], x)?;
    Ok(c.bianchi1_at(xs, ys, zs, x))
}

pub fn bianchi2_residual(c: &AConnection, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
    c.check_tensor(&[xs, ys, zs], x)?;
    Ok(c.bianchi2_at(xs, ys, zs, x))
}

pub fn first_bianchi_residual(c: &AConnection, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
    c.check_tensor(&[xs, ys, zs], x)?;
    Ok(c.first_bianchi_at(xs, ys, zs, x))
}

pub fn second_bianchi_residual(
    c: &AConnection,
    xs: &Section,
    ys: &Section,
    zs: &Section,
    ws: &Section,
    x: &Point,
) -> Result<DVector<f64>> {
    c.check_tensor(&[xs, ys, zs, ws], x)?;
    Ok(c.second_bianchi_at(xs, ys, zs, ws, x))
}

pub fn triple_residual(c: &AConnection, xs: &Section, ys: &Section, zs: &Section, x: &Point) -> Result<DVector<f64>> {
    c.check_tensor(&[xs, ys, zs], x)?;
    Ok(c.triple_identity_at(xs, ys, zs, x))
}
