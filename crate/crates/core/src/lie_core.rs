//! Finite-dimensional real Lie algebras given by structure constants.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

const ANTISYMMETRY_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-12;

/// Coordinates of an element of a Lie algebra in its basis `e_1..e_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement(pub DVector<f64>);

impl AlgebraElement {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        AlgebraElement(DVector::from_vec(coeffs.into()))
    }

    pub fn zeros(dim: usize) -> Self {
        AlgebraElement(DVector::zeros(dim))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        AlgebraElement(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for AlgebraElement {
    fn from(v: DVector<f64>) -> Self {
        AlgebraElement(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ExpRule {
    Rodrigues,
    Pade,
}

/// Faithful matrix representation used for group exponentials.
#[derive(Clone, Debug)]
pub struct Realization {
    basis: Vec<DMatrix<f64>>,
    rule: ExpRule,
}

impl Realization {
    pub fn new(basis: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = basis
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| Error::invalid("empty matrix realization"))?;
        if basis.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::invalid("realization matrices must be square and equally sized"));
        }
        Ok(Realization { basis, rule: ExpRule::Pade })
    }

    pub fn matrix_dim(&self) -> usize {
        self.basis[0].nrows()
    }

    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    pub fn realize(&self, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let n = self.matrix_dim();
        let mut m = DMatrix::zeros(n, n);
        for (c, b) in coeffs.iter().zip(&self.basis) {
            m += b * *c;
        }
        m
    }
}

/// Killing-form signature as counts of positive, negative and zero eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Isomorphism invariants sufficient to separate the builtin algebras of dimension ≤ 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Invariants {
    pub dim: usize,
    pub killing: Signature,
    pub derived_dim: usize,
}

#[derive(Clone, Debug)]
pub struct LieAlgebra {
    name: String,
    dim: usize,
    constants: Vec<f64>,
    realization: Option<Realization>,
}

impl LieAlgebra {
    /// Builds an algebra from `c[i][j][k]`, rejecting non-antisymmetric tables.
    /// Jacobi is not enforced here; see [`LieAlgebra::new_checked`].
    pub fn new(name: impl Into<String>, constants: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = constants.len();
        if dim == 0 {
            return Err(Error::invalid("Lie algebra dimension must be positive"));
        }
        let mut flat = Vec::with_capacity(dim * dim * dim);
        for (i, row) in constants.iter().enumerate() {
            check_dim(dim, row.len()).map_err(|_| {
                Error::invalid(format!("structure constants row {i} has wrong length"))
            })?;
            for (j, col) in row.iter().enumerate() {
                check_dim(dim, col.len()).map_err(|_| {
                    Error::invalid(format!("structure constants entry [{i}][{j}] has wrong length"))
                })?;
                flat.extend_from_slice(col);
            }
        }
        Self::from_flat(name, dim, flat)
    }

    pub fn from_flat(name: impl Into<String>, dim: usize, constants: Vec<f64>) -> Result<Self> {
        check_dim(dim * dim * dim, constants.len())?;
        if constants.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("structure constants must be finite"));
        }
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let a = constants[(i * dim + j) * dim + k];
                    let b = constants[(j * dim + i) * dim + k];
                    if (a + b).abs() > ANTISYMMETRY_TOL {
                        return Err(Error::invalid(format!(
                            "structure constants not antisymmetric: c[{i}][{j}][{k}] = {a}, c[{j}][{i}][{k}] = {b}"
                        )));
                    }
                }
            }
        }
        Ok(LieAlgebra {
            name: name.into(),
            dim,
            constants,
            realization: None,
        })
    }

    /// Like [`LieAlgebra::new`] but also rejects tables violating Jacobi.
    pub fn new_checked(name: impl Into<String>, constants: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let alg = Self::new(name, constants)?;
        let r = alg.verify_jacobi();
        if r > JACOBI_TOL {
            return Err(Error::invalid(format!(
                "structure constants violate the Jacobi identity (residual {r:.3e})"
            )));
        }
        Ok(alg)
    }

    pub fn with_realization(mut self, realization: Realization) -> Result<Self> {
        check_dim(self.dim, realization.basis.len())?;
        self.realization = Some(realization);
        Ok(self)
    }

    pub fn so3() -> Self {
        let mut c = vec![0.0; 27];
        for (i, j, k, s) in [
            (0, 1, 2, 1.0),
            (1, 2, 0, 1.0),
            (2, 0, 1, 1.0),
            (1, 0, 2, -1.0),
            (2, 1, 0, -1.0),
            (0, 2, 1, -1.0),
        ] {
            c[(i * 3 + j) * 3 + k] = s;
        }
        let basis = (0..3)
            .map(|i| {
                let mut e = DVector::zeros(3);
                e[i] = 1.0;
                hat(&e)
            })
            .collect();
        LieAlgebra {
            name: "so3".into(),
            dim: 3,
            constants: c,
            realization: Some(Realization { basis, rule: ExpRule::Rodrigues }),
        }
    }

    /// se(2) in the basis (J, Tx, Ty): [J,Tx] = Ty, [J,Ty] = −Tx.
    pub fn se2() -> Self {
        let mut c = vec![0.0; 27];
        c[(1) * 3 + 2] = 1.0;
        c[(3) * 3 + 2] = -1.0;
        c[(2) * 3 + 1] = -1.0;
        c[(6) * 3 + 1] = 1.0;
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 1)] = -1.0;
        j[(1, 0)] = 1.0;
        let mut tx = DMatrix::zeros(3, 3);
        tx[(0, 2)] = 1.0;
        let mut ty = DMatrix::zeros(3, 3);
        ty[(1, 2)] = 1.0;
        LieAlgebra {
            name: "se2".into(),
            dim: 3,
            constants: c,
            realization: Some(Realization { basis: vec![j, tx, ty], rule: ExpRule::Pade }),
        }
    }

    /// Heisenberg algebra [e1,e2] = e3, realized by strictly upper triangular 3×3 matrices.
    pub fn heisenberg3() -> Self {
        let mut c = vec![0.0; 27];
        c[(1) * 3 + 2] = 1.0;
        c[(3) * 3 + 2] = -1.0;
        let unit = |r: usize, s: usize| {
            let mut m = DMatrix::zeros(3, 3);
            m[(r, s)] = 1.0;
            m
        };
        LieAlgebra {
            name: "heisenberg3".into(),
            dim: 3,
            constants: c,
            realization: Some(Realization {
                basis: vec![unit(0, 1), unit(1, 2), unit(0, 2)],
                rule: ExpRule::Pade,
            }),
        }
    }

    /// Abelian ℝⁿ, realized by translations of ℝⁿ in homogeneous coordinates.
    pub fn abelian(n: usize) -> Self {
        assert!(n > 0, "abelian algebra needs positive dimension");
        let basis = (0..n)
            .map(|i| {
                let mut m = DMatrix::zeros(n + 1, n + 1);
                m[(i, n)] = 1.0;
                m
            })
            .collect();
        LieAlgebra {
            name: format!("abelian{n}"),
            dim: n,
            constants: vec![0.0; n * n * n],
            realization: Some(Realization { basis, rule: ExpRule::Pade }),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "so3" => Some(Self::so3()),
            "se2" => Some(Self::se2()),
            "heisenberg3" => Some(Self::heisenberg3()),
            _ => name
                .strip_prefix("abelian")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n > 0)
                .map(Self::abelian),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn realization(&self) -> Option<&Realization> {
        self.realization.as_ref()
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.constants[(i * self.dim + j) * self.dim + k]
    }

    pub fn constants_flat(&self) -> &[f64] {
        &self.constants
    }

    pub fn constants_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| (0..self.dim).map(|k| self.c(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn is_abelian(&self, tol: f64) -> bool {
        self.constants.iter().all(|c| c.abs() <= tol)
    }

    pub fn bracket(&self, a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
        check_dim(self.dim, a.dim())?;
        check_dim(self.dim, b.dim())?;
        Ok(AlgebraElement(self.bracket_vec(&a.0, &b.0)))
    }

    /// Unchecked bracket on raw coordinate vectors of length `dim`.
    pub fn bracket_vec(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let w = a[i] * b[j];
                if w == 0.0 {
                    continue;
                }
                let base = (i * n + j) * n;
                for k in 0..n {
                    out[k] += w * self.constants[base + k];
                }
            }
        }
        out
    }

    /// Matrix of ad_a in the basis: column j is [a, e_j].
    pub fn ad(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |k, j| (0..n).map(|i| a[i] * self.c(i, j, k)).sum())
    }

    pub fn verify_jacobi(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += self.c(i, j, m) * self.c(m, k, l)
                                + self.c(j, k, m) * self.c(m, i, l)
                                + self.c(k, i, m) * self.c(m, j, l);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn realize(&self, xi: &AlgebraElement) -> Result<DMatrix<f64>> {
        check_dim(self.dim, xi.dim())?;
        let r = self.realization.as_ref().ok_or_else(|| {
            Error::unsupported(format!("algebra '{}' has no matrix realization", self.name))
        })?;
        Ok(r.realize(&xi.0))
    }

    pub fn exp_matrix(&self, xi: &AlgebraElement) -> Result<DMatrix<f64>> {
        let m = self.realize(xi)?;
        let rule = self.realization.as_ref().map(|r| r.rule);
        Ok(match rule {
            Some(ExpRule::Rodrigues) => rodrigues(&xi.0),
            _ => m.exp(),
        })
    }

    /// Truncated inverse differential of exp: v − ½[u,v] + (1/12)[u,[u,v]].
    pub fn dexpinv(&self, u: &AlgebraElement, v: &AlgebraElement, order: u32) -> Result<AlgebraElement> {
        check_dim(self.dim, u.dim())?;
        check_dim(self.dim, v.dim())?;
        if order > 2 {
            return Err(Error::invalid(format!(
                "dexpinv order must be 0, 1 or 2 (got {order})"
            )));
        }
        Ok(AlgebraElement(self.dexpinv_vec(&u.0, &v.0, order)))
    }

    pub(crate) fn dexpinv_vec(&self, u: &DVector<f64>, v: &DVector<f64>, order: u32) -> DVector<f64> {
        let mut out = v.clone();
        if order >= 1 {
            let uv = self.bracket_vec(u, v);
            out -= &uv * 0.5;
            if order >= 2 {
                out += self.bracket_vec(u, &uv) / 12.0;
            }
        }
        out
    }

    pub fn killing_form(&self) -> DMatrix<f64> {
        let n = self.dim;
        let ads: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                self.ad(&e)
            })
            .collect();
        DMatrix::from_fn(n, n, |i, j| (&ads[i] * &ads[j]).trace())
    }

    pub fn killing_signature(&self) -> Signature {
        let k = self.killing_form();
        let eig = SymmetricEigen::new(k);
        let scale = eig.eigenvalues.amax().max(1.0);
        let tol = 1e-8 * scale;
        let mut s = Signature { positive: 0, negative: 0, zero: 0 };
        for &l in eig.eigenvalues.iter() {
            if l > tol {
                s.positive += 1;
            } else if l < -tol {
                s.negative += 1;
            } else {
                s.zero += 1;
            }
        }
        s
    }

    pub fn derived_dimension(&self) -> usize {
        let n = self.dim;
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        if pairs.is_empty() {
            return 0;
        }
        let m = DMatrix::from_fn(n, pairs.len(), |k, p| self.c(pairs[p].0, pairs[p].1, k));
        let sv = m.singular_values();
        let top = sv.max();
        if top <= 1e-12 {
            return 0;
        }
        sv.iter().filter(|&&s| s > 1e-8 * top).count()
    }

    pub fn invariants(&self) -> Invariants {
        Invariants {
            dim: self.dim,
            killing: self.killing_signature(),
            derived_dim: self.derived_dimension(),
        }
    }
}

/// so(3) hat map: hat(a) b = a × b.
pub fn hat(a: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0])
}

pub fn vee(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ])
}

fn rodrigues(xi: &DVector<f64>) -> DMatrix<f64> {
    let w = nalgebra::Vector3::new(xi[0], xi[1], xi[2]);
    let theta = w.norm();
    let k = w.cross_matrix();
    let (a, b) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let r: Matrix3<f64> = Matrix3::identity() + k * a + k * k * b;
    DMatrix::from_iterator(3, 3, r.iter().copied())
}
