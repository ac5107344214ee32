use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

/// Sparse polynomial in ambient coordinates x1..xn.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function x_{i+1}.
    pub fn coordinate(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::invalid(format!(
                    "monomial exponent vector has length {}, expected {nvars}",
                    e.len()
                )));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    /// Parses a monomial map such as `{"x1^2 x3": 0.5, "1": -1}`.
    pub fn from_monomial_map<'a>(
        nvars: usize,
        map: impl IntoIterator<Item = (&'a String, &'a f64)>,
    ) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (key, &c) in map {
            if !c.is_finite() {
                return Err(Error::invalid(format!("coefficient of '{key}' is not finite")));
            }
            p.add_term(parse_monomial(nvars, key)?, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(e).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    /// All monomials of total degree ≤ `degree` with coefficients uniform in [lo, hi].
    pub fn random<R: Rng + ?Sized>(nvars: usize, degree: u32, lo: f64, hi: f64, rng: &mut R) -> Self {
        let mut p = Self::zero(nvars);
        for e in monomials(nvars, degree) {
            p.add_term(e, rng.random_range(lo..=hi));
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.nvars);
        for (e, c) in &self.terms {
            for i in 0..self.nvars {
                if e[i] == 0 {
                    continue;
                }
                let mut t = c * e[i] as f64;
                for (j, (&k, &xj)) in e.iter().zip(x).enumerate() {
                    let p = if j == i { k - 1 } else { k };
                    t *= xj.powi(p as i32);
                }
                g[i] += t;
            }
        }
        g
    }

    pub fn directional(&self, x: &[f64], v: &[f64]) -> f64 {
        self.gradient(x).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (e, c) in &other.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                p.add_term(e, ca * cb);
            }
        }
        p
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| format!("{c}*{}", monomial_name(e)))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

fn monomial_name(e: &[u32]) -> String {
    let factors: Vec<String> = e
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| if k == 1 { format!("x{}", i + 1) } else { format!("x{}^{k}", i + 1) })
        .collect();
    if factors.is_empty() {
        "1".into()
    } else {
        factors.join(" ")
    }
}

fn parse_monomial(nvars: usize, key: &str) -> Result<Vec<u32>> {
    let mut e = vec![0u32; nvars];
    let key = key.trim();
    if key.is_empty() || key == "1" {
        return Ok(e);
    }
    for factor in key.split(|c: char| c.is_whitespace() || c == '*').filter(|s| !s.is_empty()) {
        let (var, pow) = match factor.split_once('^') {
            Some((v, p)) => (
                v,
                p.parse::<u32>()
                    .map_err(|_| Error::invalid(format!("bad exponent in monomial '{key}'")))?,
            ),
            None => (factor, 1),
        };
        let idx: usize = var
            .strip_prefix('x')
            .and_then(|s| s.parse().ok())
            .filter(|&i| i >= 1 && i <= nvars)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown variable '{var}' in monomial '{key}' (expected x1..x{nvars})"
                ))
            })?;
        e[idx - 1] += pow;
    }
    Ok(e)
}

/// Exponent vectors of all monomials of total degree ≤ `degree`, in a fixed order.
pub(crate) fn monomials(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[i] = k;
            rec(i + 1, left - k, cur, out);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    rec(0, degree, &mut vec![0; nvars], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn parses_monomial_maps() {
        let mut m = BTreeMap::new();
        m.insert("x1^2 x3".to_string(), 0.5);
        m.insert("1".to_string(), -1.0);
        m.insert("x2".to_string(), 2.0);
        let p = Polynomial::from_monomial_map(3, &m).unwrap();
        assert_abs_diff_eq!(p.eval(&[2.0, 1.0, 3.0]), 0.5 * 4.0 * 3.0 - 1.0 + 2.0);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn rejects_unknown_variables() {
        let mut m = BTreeMap::new();
        m.insert("x4".to_string(), 1.0);
        assert!(Polynomial::from_monomial_map(3, &m).is_err());
        let mut m = BTreeMap::new();
        m.insert("y1".to_string(), 1.0);
        assert!(Polynomial::from_monomial_map(3, &m).is_err());
    }

    #[test]
    fn gradient_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Polynomial::random(3, 3, -1.0, 1.0, &mut rng);
        let x = [0.3, -0.7, 0.4];
        let g = p.gradient(&x);
        for i in 0..3 {
            let h = 1e-6;
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            assert_abs_diff_eq!(g[i], (p.eval(&a) - p.eval(&b)) / (2.0 * h), epsilon = 1e-8);
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(4, 2).len(), 15);
        assert_eq!(monomials(0, 2).len(), 1);
    }

    #[test]
    fn product_evaluates_as_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Polynomial::random(2, 2, -1.0, 1.0, &mut rng);
        let q = Polynomial::random(2, 1, -1.0, 1.0, &mut rng);
        let x = [0.2, 1.3];
        assert_abs_diff_eq!(p.mul(&q).eval(&x), p.eval(&x) * q.eval(&x), epsilon = 1e-14);
        assert_abs_diff_eq!(p.add(&q).eval(&x), p.eval(&x) + q.eval(&x), epsilon = 1e-14);
    }
}
