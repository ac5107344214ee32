//! Seeded probe batteries: random polynomial sections and sample points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebroid::Algebroid;
use crate::error::{Error, Result};
use crate::manifold::Section;
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeConfig {
    pub num_sections: usize,
    pub degree: u32,
    pub num_points: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { num_sections: 10, degree: 2, num_points: 20, seed: 20_240_601 }
    }
}

/// Where a maximal residual was attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub tuple: usize,
    pub point_index: usize,
    pub point: Vec<f64>,
}

/// Tuples of four random sections evaluated on a shared set of points.
#[derive(Clone, Debug)]
pub struct ProbeBattery {
    pub config: ProbeConfig,
    pub points: Vec<Point>,
    pub tuples: Vec<[Section; 4]>,
    pub norms: Vec<[f64; 4]>,
}

fn tuple_seed(seed: u64, i: usize) -> u64 {
    seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))
}

impl ProbeBattery {
    pub fn generate(alg: &Algebroid, config: ProbeConfig) -> Result<Self> {
        if config.num_sections == 0 || config.num_points == 0 {
            return Err(Error::invalid("probe battery must contain at least one section tuple and one point"));
        }
        let points = alg.manifold().sample_points(config.seed, config.num_points);
        let tuples: Vec<[Section; 4]> = (0..config.num_sections)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(tuple_seed(config.seed, i));
                std::array::from_fn(|_| alg.random_section(config.degree, &mut rng))
            })
            .collect();
        Ok(Self::from_parts(config, points, tuples))
    }

    pub fn from_parts(config: ProbeConfig, points: Vec<Point>, tuples: Vec<[Section; 4]>) -> Self {
        let norms = tuples
            .iter()
            .map(|t| std::array::from_fn(|j| t[j].sup_norm(&points).max(1e-300)))
            .collect();
        ProbeBattery { config, points, tuples, norms }
    }

    /// Product of the first `arity` section norms of a tuple.
    pub fn scale(&self, tuple: usize, arity: usize) -> f64 {
        self.norms[tuple][..arity].iter().product()
    }
}

/// Running max/mean of residuals with the witness of the maximum.
#[derive(Clone, Debug, Default)]
pub struct Accumulator {
    pub max: f64,
    pub sum: f64,
    pub count: usize,
    pub witness: Option<Witness>,
}

impl Accumulator {
    pub fn push(&mut self, value: f64, tuple: usize, point_index: usize, point: &Point) {
        let value = if value.is_nan() { f64::INFINITY } else { value };
        self.sum += value;
        self.count += 1;
        if self.witness.is_none() || value > self.max {
            self.max = value;
            self.witness = Some(Witness { tuple, point_index, point: point.as_slice().to_vec() });
        }
    }

    pub fn merge(&mut self, other: Accumulator) {
        self.sum += other.sum;
        self.count += other.count;
        if other.witness.is_some() && (self.witness.is_none() || other.max > self.max) {
            self.max = other.max;
            self.witness = other.witness;
        }
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}
