use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::manifold::{Differentiator, Polynomial, Section};
use crate::Point;

#[derive(Clone, Debug)]
pub enum TmTerm {
    /// Γ(v, y) = −v_c K y: the flat connection whose parallel frame is exp(x_c K).
    Gauge { generator: DMatrix<f64>, coordinate: usize },
    /// Γ(v, y)^l = Σ v_m y_j Γ_mj^l(x), stored at `table[(m*k + j)*k + l]`.
    Polynomial { table: Vec<Polynomial> },
}

/// A TM-connection on the trivial bundle M × ℝᵏ: ∇_v y = Dy[v] + Γ(x)(v, y).
#[derive(Clone, Debug)]
pub struct TmConnection {
    fiber_dim: usize,
    ambient_dim: usize,
    terms: Vec<TmTerm>,
}

impl TmConnection {
    /// The componentwise derivative.
    pub fn flat(fiber_dim: usize, ambient_dim: usize) -> Self {
        TmConnection { fiber_dim, ambient_dim, terms: Vec::new() }
    }

    pub fn gauge(generator: DMatrix<f64>, coordinate: usize, ambient_dim: usize) -> Result<Self> {
        let k = generator.nrows();
        if generator.ncols() != k {
            return Err(Error::invalid("gauge generator must be square"));
        }
        if coordinate >= ambient_dim {
            return Err(Error::invalid(format!("gauge coordinate x{} out of range", coordinate + 1)));
        }
        Ok(TmConnection {
            fiber_dim: k,
            ambient_dim,
            terms: vec![TmTerm::Gauge { generator, coordinate }],
        })
    }

    pub fn polynomial(fiber_dim: usize, ambient_dim: usize, table: Vec<Polynomial>) -> Result<Self> {
        check_dim(ambient_dim * fiber_dim * fiber_dim, table.len())?;
        if table.iter().any(|p| p.nvars() != ambient_dim) {
            return Err(Error::invalid("TM-connection polynomial entries must use the ambient coordinates"));
        }
        Ok(TmConnection { fiber_dim, ambient_dim, terms: vec![TmTerm::Polynomial { table }] })
    }

    /// Random polynomial coefficients; generically curved.
    pub fn random<R: Rng + ?Sized>(fiber_dim: usize, ambient_dim: usize, degree: u32, scale: f64, rng: &mut R) -> Self {
        let table = (0..ambient_dim * fiber_dim * fiber_dim)
            .map(|_| Polynomial::random(ambient_dim, degree, -scale, scale, rng))
            .collect();
        TmConnection { fiber_dim, ambient_dim, terms: vec![TmTerm::Polynomial { table }] }
    }

    /// Sum of the connection forms of two connections on the same bundle.
    pub fn plus(mut self, other: TmConnection) -> Result<Self> {
        check_dim(self.fiber_dim, other.fiber_dim)?;
        check_dim(self.ambient_dim, other.ambient_dim)?;
        self.terms.extend(other.terms);
        Ok(self)
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn terms(&self) -> &[TmTerm] {
        &self.terms
    }

    pub fn is_flat_trivial(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn gamma(&self, x: &Point, v: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let k = self.fiber_dim;
        let mut out = DVector::zeros(k);
        for t in &self.terms {
            match t {
                TmTerm::Gauge { generator, coordinate } => out -= (generator * y) * v[*coordinate],
                TmTerm::Polynomial { table } => {
                    for m in 0..v.len() {
                        if v[m] == 0.0 {
                            continue;
                        }
                        for j in 0..k {
                            let w = v[m] * y[j];
                            if w == 0.0 {
                                continue;
                            }
                            for l in 0..k {
                                let p = &table[(m * k + j) * k + l];
                                if !p.is_zero() {
                                    out[l] += w * p.eval(x.as_slice());
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Matrix of y ↦ Γ(x)(v, y).
    pub fn gamma_matrix(&self, x: &Point, v: &DVector<f64>) -> DMatrix<f64> {
        let k = self.fiber_dim;
        let mut m = DMatrix::zeros(k, k);
        for j in 0..k {
            let mut e = DVector::zeros(k);
            e[j] = 1.0;
            m.set_column(j, &self.gamma(x, v, &e));
        }
        m
    }

    pub fn covariant(&self, d: &Differentiator, ys: &Section, v: &DVector<f64>, x: &Point) -> DVector<f64> {
        ys.derivative(d, x, v) + self.gamma(x, v, &ys.eval(x))
    }

    /// ∇_W Y as a section, for a tangent field W.
    pub fn covariant_field(self: &Arc<Self>, d: &Differentiator, ws: &Section, ys: &Section) -> Section {
        let (c, d2, w, y) = (self.clone(), d.clone(), ws.clone(), ys.clone());
        let depth = ws.depth().max(ys.depth()).max(ys.derivative_depth());
        Section::from_fn(self.fiber_dim, depth, move |x| c.covariant(&d2, &y, &w.eval(x), x))
    }

    /// R(U, W) Y = ∇_U ∇_W Y − ∇_W ∇_U Y − ∇_[U,W] Y.
    pub fn curvature_at(
        self: &Arc<Self>,
        d: &Differentiator,
        us: &Section,
        ws: &Section,
        ys: &Section,
        x: &Point,
    ) -> DVector<f64> {
        let m = d.manifold();
        let u = us.eval(x);
        let w = ws.eval(x);
        let wy = self.covariant_field(d, ws, ys);
        let uy = self.covariant_field(d, us, ys);
        let bracket = m.tangent_project(x, &(ws.derivative(d, x, &u) - us.derivative(d, x, &w)));
        self.covariant(d, &wy, &u, x) - self.covariant(d, &uy, &w, x) - self.covariant(d, ys, &bracket, x)
    }
}
