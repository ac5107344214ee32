//! Embedded base manifolds, sections over them and their differentiation.

mod field;
mod polynomial;

pub use field::{
    jacobi_lie_bracket, jacobi_lie_bracket_field, ClosedForm, Differentiator, Field, Section,
    SmoothScalar,
};
pub use polynomial::Polynomial;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::SeedableRng;

use crate::error::{check_dim, Error, Result};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    /// Unit sphere in ℝ³.
    Sphere2,
    /// Product of two unit circles in ℝ⁴, coordinates (x1,x2) and (x3,x4).
    Torus2,
    /// Rotation matrices, stored row-major in ℝ⁹.
    So3Group,
    Euclidean(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedManifold {
    kind: ManifoldKind,
}

impl EmbeddedManifold {
    pub fn new(kind: ManifoldKind) -> Self {
        EmbeddedManifold { kind }
    }

    pub fn sphere2() -> Self {
        Self::new(ManifoldKind::Sphere2)
    }

    pub fn torus2() -> Self {
        Self::new(ManifoldKind::Torus2)
    }

    pub fn so3_group() -> Self {
        Self::new(ManifoldKind::So3Group)
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(ManifoldKind::Euclidean(n))
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "sphere2" => Some(Self::sphere2()),
            "torus2" => Some(Self::torus2()),
            "so3_group" => Some(Self::so3_group()),
            "point" => Some(Self::euclidean(0)),
            _ => name
                .strip_prefix("euclidean")
                .and_then(|n| n.parse().ok())
                .map(Self::euclidean),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn name(&self) -> String {
        match self.kind {
            ManifoldKind::Sphere2 => "sphere2".into(),
            ManifoldKind::Torus2 => "torus2".into(),
            ManifoldKind::So3Group => "so3_group".into(),
            ManifoldKind::Euclidean(n) => format!("euclidean{n}"),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere2 => 3,
            ManifoldKind::Torus2 => 4,
            ManifoldKind::So3Group => 9,
            ManifoldKind::Euclidean(n) => n,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere2 | ManifoldKind::Torus2 => 2,
            ManifoldKind::So3Group => 3,
            ManifoldKind::Euclidean(n) => n,
        }
    }

    pub fn constraint(&self, x: &Point) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere2 => DVector::from_element(1, x.norm_squared() - 1.0),
            ManifoldKind::Torus2 => DVector::from_vec(vec![
                x[0] * x[0] + x[1] * x[1] - 1.0,
                x[2] * x[2] + x[3] * x[3] - 1.0,
            ]),
            ManifoldKind::So3Group => {
                let r = as_mat3(x);
                let g = r.transpose() * r - Matrix3::identity();
                let mut v: Vec<f64> = g.iter().copied().collect();
                v.push(r.determinant() - 1.0);
                DVector::from_vec(v)
            }
            ManifoldKind::Euclidean(_) => DVector::zeros(0),
        }
    }

    pub fn constraint_norm(&self, x: &Point) -> f64 {
        let c = self.constraint(x);
        if c.is_empty() {
            0.0
        } else {
            c.amax()
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        check_dim(self.ambient_dim(), x.len())?;
        Ok(())
    }

    pub fn retract(&self, z: &Point) -> Point {
        match self.kind {
            ManifoldKind::Sphere2 => z / z.norm(),
            ManifoldKind::Torus2 => {
                let a = (z[0] * z[0] + z[1] * z[1]).sqrt();
                let b = (z[2] * z[2] + z[3] * z[3]).sqrt();
                DVector::from_vec(vec![z[0] / a, z[1] / a, z[2] / b, z[3] / b])
            }
            ManifoldKind::So3Group => {
                let (q, _, _) = polar(&as_mat3(z));
                from_mat3(&q)
            }
            ManifoldKind::Euclidean(_) => z.clone(),
        }
    }

    /// Differential of the retraction at an ambient point `z` applied to `w`.
    pub fn retract_differential(&self, z: &Point, w: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere2 => {
                let r = z.norm();
                let u = z / r;
                (w - &u * u.dot(w)) / r
            }
            ManifoldKind::Torus2 => {
                let mut out = DVector::zeros(4);
                for b in [0usize, 2] {
                    let r = (z[b] * z[b] + z[b + 1] * z[b + 1]).sqrt();
                    let (u0, u1) = (z[b] / r, z[b + 1] / r);
                    let d = u0 * w[b] + u1 * w[b + 1];
                    out[b] = (w[b] - u0 * d) / r;
                    out[b + 1] = (w[b + 1] - u1 * d) / r;
                }
                out
            }
            ManifoldKind::So3Group => {
                let (q, v, s) = polar(&as_mat3(z));
                let dz = as_mat3(w);
                let a = q.transpose() * dz - dz.transpose() * q;
                let at = v.transpose() * a * v;
                let mut om = Matrix3::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        if i != j {
                            om[(i, j)] = at[(i, j)] / (s[i] + s[j]);
                        }
                    }
                }
                from_mat3(&(q * v * om * v.transpose()))
            }
            ManifoldKind::Euclidean(_) => w.clone(),
        }
    }

    /// Orthogonal projection onto T_xM.
    pub fn tangent_project(&self, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere2 => v - x * (x.dot(v) / x.norm_squared()),
            ManifoldKind::Torus2 => {
                let mut out = v.clone();
                for b in [0usize, 2] {
                    let r2 = x[b] * x[b] + x[b + 1] * x[b + 1];
                    let d = (x[b] * v[b] + x[b + 1] * v[b + 1]) / r2;
                    out[b] -= x[b] * d;
                    out[b + 1] -= x[b + 1] * d;
                }
                out
            }
            ManifoldKind::So3Group => {
                let r = as_mat3(x);
                let m = as_mat3(v);
                from_mat3(&((m - r * m.transpose() * r) * 0.5))
            }
            ManifoldKind::Euclidean(_) => v.clone(),
        }
    }

    /// Derivative of the projector along `v`: d/dt P(x + t v) p at t = 0.
    pub fn project_derivative(&self, x: &Point, v: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere2 => sphere_projector_derivative(x.as_slice(), v.as_slice(), p.as_slice()),
            ManifoldKind::Torus2 => {
                let mut out = DVector::zeros(4);
                for b in [0usize, 2] {
                    let d = sphere_projector_derivative(&x.as_slice()[b..b + 2], &v.as_slice()[b..b + 2], &p.as_slice()[b..b + 2]);
                    out[b] = d[0];
                    out[b + 1] = d[1];
                }
                out
            }
            ManifoldKind::So3Group => {
                let r = as_mat3(x);
                let w = as_mat3(v);
                let m = as_mat3(p);
                from_mat3(&((w * m.transpose() * r + r * m.transpose() * w) * -0.5))
            }
            ManifoldKind::Euclidean(n) => DVector::zeros(n),
        }
    }

    pub fn is_tangent(&self, x: &Point, v: &DVector<f64>, tol: f64) -> bool {
        let p = self.tangent_project(x, v);
        (p - v).amax() <= tol * (1.0 + v.amax())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let n = self.ambient_dim();
        loop {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let ok = match self.kind {
                ManifoldKind::Sphere2 => z.norm() > 1e-3,
                ManifoldKind::Torus2 => z.rows(0, 2).norm() > 1e-3 && z.rows(2, 2).norm() > 1e-3,
                ManifoldKind::So3Group => as_mat3(&z).determinant().abs() > 1e-3,
                ManifoldKind::Euclidean(_) => true,
            };
            if ok {
                return self.retract(&z);
            }
        }
    }

    pub fn sample_points(&self, seed: u64, count: usize) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample(&mut rng)).collect()
    }

    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.ambient_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.tangent_project(x, &z)
    }

    /// Orthonormal basis of T_xM as columns.
    pub fn tangent_basis(&self, x: &Point) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let p = DMatrix::from_fn(n, n, |i, j| {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            self.tangent_project(x, &e)[i]
        });
        let eig = nalgebra::SymmetricEigen::new(p);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let cols: Vec<DVector<f64>> = idx
            .iter()
            .take(self.intrinsic_dim())
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// A fixed base point used by fixtures and reconstruction.
    pub fn default_base_point(&self) -> Point {
        match self.kind {
            ManifoldKind::Sphere2 => DVector::from_vec(vec![0.0, 0.0, 1.0]),
            ManifoldKind::Torus2 => DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]),
            ManifoldKind::So3Group => from_mat3(&Matrix3::identity()),
            ManifoldKind::Euclidean(n) => DVector::zeros(n),
        }
    }

    /// Tangent check used by public entry points that accept user vectors.
    pub fn require_tangent(&self, x: &Point, v: &DVector<f64>) -> Result<()> {
        check_dim(self.ambient_dim(), v.len())?;
        if self.is_tangent(x, v, 1e-8) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "vector {:?} is not tangent to {} at {:?}",
                v.as_slice(),
                self.name(),
                x.as_slice()
            )))
        }
    }
}

fn sphere_projector_derivative(x: &[f64], v: &[f64], p: &[f64]) -> DVector<f64> {
    let r2: f64 = x.iter().map(|a| a * a).sum();
    let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    let xp: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
    let vp: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
    DVector::from_fn(x.len(), |i, _| {
        -(v[i] * xp + x[i] * vp) / r2 + 2.0 * xv * xp * x[i] / (r2 * r2)
    })
}

pub(crate) fn as_mat3(x: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::from_row_slice(x.as_slice())
}

pub(crate) fn from_mat3(m: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_iterator(9, m.transpose().iter().copied())
}

/// Polar factor Q ∈ SO(3) of z = Q H, the right singular vectors and the signed singular values.
fn polar(z: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>, [f64; 3]) {
    let svd = z.svd(true, true);
    let mut u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut s = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    if (u * vt).determinant() < 0.0 {
        let k = (0..3).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        for r in 0..3 {
            u[(r, k)] = -u[(r, k)];
        }
        s[k] = -s[k];
    }
    (u * vt, vt.transpose(), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn all() -> Vec<EmbeddedManifold> {
        vec![
            EmbeddedManifold::sphere2(),
            EmbeddedManifold::torus2(),
            EmbeddedManifold::so3_group(),
            EmbeddedManifold::euclidean(2),
        ]
    }

    #[test]
    fn samples_satisfy_constraint_and_are_fixed_by_retraction() {
        for m in all() {
            for x in m.sample_points(3, 50) {
                assert!(m.constraint_norm(&x) <= 1e-12, "{}", m.name());
                assert!((m.retract(&x) - &x).amax() <= 1e-12, "{}", m.name());
            }
        }
    }

    #[test]
    fn so3_retraction_fixes_determinant_sign() {
        let m = EmbeddedManifold::so3_group();
        let z = DVector::from_vec(vec![-1.0, 0.1, 0.0, 0.0, 1.0, 0.2, 0.0, 0.0, 1.0]);
        let q = m.retract(&z);
        assert!(m.constraint_norm(&q) <= 1e-12);
    }

    #[test]
    fn retraction_differential_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in all() {
            let x = m.sample(&mut rng);
            let z = &x + DVector::from_fn(m.ambient_dim(), |_, _| 0.1 * rng.random_range(-1.0..1.0));
            let w = DVector::from_fn(m.ambient_dim(), |_, _| rng.random_range(-1.0..1.0));
            let h = 1e-6;
            let fd = (m.retract(&(&z + &w * h)) - m.retract(&(&z - &w * h))) / (2.0 * h);
            assert_abs_diff_eq!(m.retract_differential(&z, &w), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn projector_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for m in all() {
            let x = m.sample(&mut rng);
            let v = m.random_tangent(&x, &mut rng);
            let p = DVector::from_fn(m.ambient_dim(), |_, _| rng.random_range(-1.0..1.0));
            let h = 1e-6;
            let fd = (m.tangent_project(&m.retract(&(&x + &v * h)), &p)
                - m.tangent_project(&m.retract(&(&x - &v * h)), &p))
                / (2.0 * h);
            assert_abs_diff_eq!(m.project_derivative(&x, &v, &p), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn tangent_basis_spans_tangent_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for m in all() {
            let x = m.sample(&mut rng);
            let b = m.tangent_basis(&x);
            assert_eq!(b.ncols(), m.intrinsic_dim());
            let gram = b.transpose() * &b;
            assert_abs_diff_eq!(gram, DMatrix::identity(b.ncols(), b.ncols()), epsilon = 1e-10);
            for c in b.column_iter() {
                assert!(m.is_tangent(&x, &c.into_owned(), 1e-10));
            }
        }
    }

    #[test]
    fn non_tangent_vector_rejected() {
        let m = EmbeddedManifold::sphere2();
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(m.require_tangent(&x, &DVector::from_vec(vec![0.0, 0.0, 1.0])).is_err());
        assert!(m.require_tangent(&x, &DVector::from_vec(vec![1.0, 0.0, 0.0])).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projector_idempotent_linearized_and_contractive(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for m in all() {
                let x = m.sample(&mut rng);
                let n = m.ambient_dim();
                let v = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
                let w = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
                let pv = m.tangent_project(&x, &v);
                prop_assert!((m.tangent_project(&x, &pv) - &pv).amax() <= 1e-10);
                prop_assert!(pv.norm() <= (1.0 + 1e-12) * v.norm() + 1e-15);
                let lin = m.tangent_project(&x, &(&v * 2.0 - &w)) - (&pv * 2.0 - m.tangent_project(&x, &w));
                prop_assert!(lin.amax() <= 1e-12);
                // linearized constraint: d/dt constraint(x + t pv) = 0
                let h = 1e-6;
                let dc = (m.constraint(&(&x + &pv * h)) - m.constraint(&(&x - &pv * h))) / (2.0 * h);
                if !dc.is_empty() {
                    prop_assert!(dc.amax() <= 1e-8 * (1.0 + pv.norm()));
                }
            }
        }
    }
}
