//! Scenario documents and their translation into core objects.

use std::collections::BTreeMap;
use std::sync::Arc;

use algebroid_lab_core::algebroid::{
    gauge_twisted_so3, lie_algebra_over_point, make_action_algebroid, make_bundle_of_lie_algebras,
    make_tangent_algebroid, Action, Algebroid, ConstantsField,
};
use algebroid_lab_core::classify::Tolerances;
use algebroid_lab_core::connection::{AConnection, PolynomialGamma, TmConnection};
use algebroid_lab_core::integrate::{ActionODE, Method};
use algebroid_lab_core::lie_core::{hat, LieAlgebra};
use algebroid_lab_core::manifold::{EmbeddedManifold, Polynomial, SmoothScalar};
use algebroid_lab_core::probes::ProbeConfig;
use algebroid_lab_core::reconstruct::ReconstructOptions;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type MonomialMap = BTreeMap<String, f64>;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub algebra: Option<AlgebraSpec>,
    #[serde(default)]
    pub manifold: Option<String>,
    #[serde(default)]
    pub algebroid: Option<AlgebroidSpec>,
    #[serde(default)]
    pub connection: Option<ConnectionSpec>,
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    pub job: JobSpec,
    #[serde(default)]
    pub expect: Option<Expect>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum AlgebraSpec {
    Builtin(String),
    Inline {
        #[serde(default)]
        name: Option<String>,
        /// c[i][j][k] with [e_i, e_j] = Σ c[i][j][k] e_k.
        constants: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgebroidSpec {
    Action { action: String },
    Tangent {},
    BundleOfLieAlgebras {
        /// Fiber constants multiplied by this polynomial.
        #[serde(default)]
        scale: Option<MonomialMap>,
    },
    LieAlgebra {},
    GaugeTwistedSo3 {},
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GammaEntry {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub poly: MonomialMap,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    /// Square matrix K, row-major rows.
    pub generator: Vec<Vec<f64>>,
    /// Zero-based ambient coordinate c in exp(x_c K).
    pub coordinate: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConnectionSpec {
    CanonicalFlat {},
    Trivial {},
    /// Γ_ij^l entries; unlisted entries vanish.
    Coefficient { entries: Vec<GammaEntry> },
    RandomCoefficient {
        #[serde(default = "default_degree")]
        degree: u32,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Γ(v, y)^l = Σ v_m y_j Γ_mj^l plus an optional gauge term; `i` of each entry indexes the ambient direction m.
    InducedFromTm {
        #[serde(default)]
        gauge: Option<GaugeSpec>,
        #[serde(default)]
        entries: Vec<GammaEntry>,
    },
    GaugeTwisted {},
    So3Minus {},
    Dual { base: Box<ConnectionSpec> },
    Symmetrized { base: Box<ConnectionSpec> },
}

fn default_degree() -> u32 {
    1
}

fn default_scale() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "ProbeSpec::default_sections")]
    pub num_sections: usize,
    #[serde(default = "ProbeSpec::default_degree")]
    pub degree: u32,
    #[serde(default = "ProbeSpec::default_points")]
    pub num_points: usize,
    #[serde(default = "ProbeSpec::default_seed")]
    pub seed: u64,
}

impl ProbeSpec {
    fn default_sections() -> usize {
        ProbeConfig::default().num_sections
    }
    fn default_degree() -> u32 {
        ProbeConfig::default().degree
    }
    fn default_points() -> usize {
        ProbeConfig::default().num_points
    }
    fn default_seed() -> u64 {
        ProbeConfig::default().seed
    }
}

impl Default for ProbeSpec {
    fn default() -> Self {
        let c = ProbeConfig::default();
        ProbeSpec { num_sections: c.num_sections, degree: c.degree, num_points: c.num_points, seed: c.seed }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "ToleranceSpec::hold")]
    pub tol_hold: f64,
    #[serde(default = "ToleranceSpec::fail")]
    pub tol_fail: f64,
    #[serde(default = "ToleranceSpec::hold_derivative")]
    pub tol_hold_derivative: f64,
    #[serde(default = "ToleranceSpec::h1")]
    pub h1: f64,
    #[serde(default = "ToleranceSpec::h2")]
    pub h2: f64,
}

impl ToleranceSpec {
    fn hold() -> f64 {
        Tolerances::default().tol_hold
    }
    fn fail() -> f64 {
        Tolerances::default().tol_fail
    }
    fn hold_derivative() -> f64 {
        Tolerances::default().tol_hold_derivative
    }
    fn h1() -> f64 {
        1e-4
    }
    fn h2() -> f64 {
        1e-3
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { tol_hold: self.tol_hold, tol_fail: self.tol_fail, tol_hold_derivative: self.tol_hold_derivative }
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            tol_hold: Self::hold(),
            tol_fail: Self::fail(),
            tol_hold_derivative: Self::hold_derivative(),
            h1: Self::h1(),
            h2: Self::h2(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    SphereVarying {},
    Constant {
        action: String,
        coefficients: Vec<f64>,
        y0: Vec<f64>,
        horizon: f64,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum LadderSpec {
    Explicit(Vec<f64>),
    Halving { h0: f64, levels: usize },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JobSpec {
    Identities {},
    Classify {},
    Reconstruct {
        #[serde(default)]
        check_flatness: Option<bool>,
    },
    Integrate {
        method: String,
        h: f64,
        steps: usize,
        #[serde(default = "default_problem")]
        problem: ProblemSpec,
    },
    Convergence {
        method: String,
        ladder: LadderSpec,
        #[serde(default = "default_problem")]
        problem: ProblemSpec,
    },
}

fn default_problem() -> ProblemSpec {
    ProblemSpec::SphereVarying {}
}

impl JobSpec {
    pub fn name(&self) -> &'static str {
        match self {
            JobSpec::Identities {} => "identities",
            JobSpec::Classify {} => "classify",
            JobSpec::Reconstruct { .. } => "reconstruct",
            JobSpec::Integrate { .. } => "integrate",
            JobSpec::Convergence { .. } => "convergence",
        }
    }
}

/// Assertions checked after a run; any mismatch yields exit code 1.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    /// predicate name → holds | fails | inconclusive
    #[serde(default)]
    pub verdicts: BTreeMap<String, String>,
    #[serde(default)]
    pub post_lie_agreement: Option<bool>,
    #[serde(default)]
    pub max_residual: Option<f64>,
    /// ok | not_flat | path_dependent | non_transitive | non_constant_structure
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub abelian: Option<bool>,
    #[serde(default)]
    pub killing_signature: Option<[usize; 3]>,
    #[serde(default)]
    pub slope: Option<[f64; 2]>,
    #[serde(default)]
    pub max_drift: Option<f64>,
}

/// Parses a scenario, naming the offending field on failure.
pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Input(format!("scenario field '{path}': {}", e.into_inner()))
    })
}

fn input(e: algebroid_lab_core::Error) -> CliError {
    if e.is_input_error() {
        CliError::Input(e.to_string())
    } else {
        CliError::Numeric(e.to_string())
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        self.tolerances
            .tolerances()
            .validate()
            .map_err(|e| CliError::Input(format!("tolerances: {e}")))?;
        if !(t.h1 > 0.0 && t.h2 > 0.0) {
            return Err(CliError::Input("tolerances: h1 and h2 must be positive".into()));
        }
        if let Some(e) = &self.expect {
            for (k, v) in &e.verdicts {
                if algebroid_lab_core::classify::Predicate::from_name(k).is_none() {
                    return Err(CliError::Input(format!("expect.verdicts: unknown predicate '{k}'")));
                }
                if !matches!(v.as_str(), "holds" | "fails" | "inconclusive") {
                    return Err(CliError::Input(format!("expect.verdicts.{k}: unknown verdict '{v}'")));
                }
            }
            if let Some(o) = &e.outcome {
                if !OUTCOMES.contains(&o.as_str()) {
                    return Err(CliError::Input(format!("expect.outcome: unknown outcome '{o}'")));
                }
            }
        }
        Ok(())
    }

    pub fn probe_config(&self, seed: u64) -> ProbeConfig {
        ProbeConfig { num_sections: self.probes.num_sections, degree: self.probes.degree, num_points: self.probes.num_points, seed }
    }

    fn manifold(&self, field: &str) -> Result<EmbeddedManifold, CliError> {
        let name = self
            .manifold
            .as_deref()
            .ok_or_else(|| CliError::Input(format!("'manifold' is required for {field}")))?;
        EmbeddedManifold::builtin(name).ok_or_else(|| CliError::Input(format!("manifold: unknown builtin '{name}'")))
    }

    fn algebra(&self, field: &str) -> Result<LieAlgebra, CliError> {
        match &self.algebra {
            None => Err(CliError::Input(format!("'algebra' is required for {field}"))),
            Some(AlgebraSpec::Builtin(name)) => {
                LieAlgebra::builtin(name).ok_or_else(|| CliError::Input(format!("algebra: unknown builtin '{name}'")))
            }
            Some(AlgebraSpec::Inline { name, constants }) => {
                LieAlgebra::new_checked(name.clone().unwrap_or_else(|| "inline".into()), constants.clone())
                    .map_err(|e| CliError::Input(format!("algebra.constants: {e}")))
            }
        }
    }

    pub fn build_algebroid(&self) -> Result<Arc<Algebroid>, CliError> {
        let spec = self.algebroid.as_ref().ok_or_else(|| CliError::Input(format!("'algebroid' is required for job '{}'", self.job.name())))?;
        let alg = match spec {
            AlgebroidSpec::Action { action } => {
                let a = Action::builtin(action)
                    .ok_or_else(|| CliError::Input(format!("algebroid.action: unknown builtin '{action}'")))?;
                make_action_algebroid(a).map_err(|e| CliError::Input(format!("algebroid.action: {e}")))?
            }
            AlgebroidSpec::Tangent {} => make_tangent_algebroid(self.manifold("algebroid 'tangent'")?),
            AlgebroidSpec::BundleOfLieAlgebras { scale } => {
                let m = self.manifold("algebroid 'bundle_of_lie_algebras'")?;
                let g = self.algebra("algebroid 'bundle_of_lie_algebras'")?;
                let constants = match scale {
                    None => ConstantsField::constant(&g),
                    Some(map) => {
                        let p = Polynomial::from_monomial_map(m.ambient_dim(), map)
                            .map_err(|e| CliError::Input(format!("algebroid.scale: {e}")))?;
                        ConstantsField::scaled(&g, SmoothScalar::Polynomial(p))
                    }
                };
                make_bundle_of_lie_algebras(m, constants).map_err(|e| CliError::Input(format!("algebroid: {e}")))?
            }
            AlgebroidSpec::LieAlgebra {} => lie_algebra_over_point(&self.algebra("algebroid 'lie_algebra'")?),
            AlgebroidSpec::GaugeTwistedSo3 {} => gauge_twisted_so3(),
        };
        let t = &self.tolerances;
        Ok(Arc::new(alg.with_steps(t.h1, t.h2)))
    }

    pub fn build_connection(&self, alg: &Arc<Algebroid>, seed: u64) -> Result<AConnection, CliError> {
        let spec = self
            .connection
            .as_ref()
            .ok_or_else(|| CliError::Input(format!("'connection' is required for job '{}'", self.job.name())))?;
        build_connection(spec, alg, seed, "connection")
    }

    pub fn reconstruct_options(&self, seed: u64) -> ReconstructOptions {
        let check_flatness = match &self.job {
            JobSpec::Reconstruct { check_flatness } => check_flatness.unwrap_or(true),
            _ => true,
        };
        ReconstructOptions { seed, num_points: self.probes.num_points, check_flatness, ..ReconstructOptions::default() }
    }
}

pub const OUTCOMES: [&str; 6] = ["ok", "not_flat", "path_dependent", "non_transitive", "non_constant_structure", "degenerate_frame"];

fn polys(entries: &[GammaEntry], k_first: usize, k: usize, nvars: usize, field: &str) -> Result<Vec<Polynomial>, CliError> {
    let mut table = vec![Polynomial::zero(nvars); k_first * k * k];
    for (n, e) in entries.iter().enumerate() {
        if e.i >= k_first || e.j >= k || e.l >= k {
            return Err(CliError::Input(format!("{field}.entries[{n}]: index out of range")));
        }
        let p = Polynomial::from_monomial_map(nvars, &e.poly)
            .map_err(|err| CliError::Input(format!("{field}.entries[{n}].poly: {err}")))?;
        let slot = &mut table[(e.i * k + e.j) * k + e.l];
        *slot = slot.add(&p);
    }
    Ok(table)
}

fn build_connection(spec: &ConnectionSpec, alg: &Arc<Algebroid>, seed: u64, field: &str) -> Result<AConnection, CliError> {
    let k = alg.fiber_dim();
    let n = alg.manifold().ambient_dim();
    let wrap = |e: algebroid_lab_core::Error| CliError::Input(format!("{field}: {e}"));
    Ok(match spec {
        ConnectionSpec::CanonicalFlat {} => AConnection::canonical_flat(alg.clone()).map_err(wrap)?,
        ConnectionSpec::Trivial {} => AConnection::zero(alg.clone()).map_err(wrap)?,
        ConnectionSpec::Coefficient { entries } => {
            let g = PolynomialGamma::new(k, polys(entries, k, k, n, field)?).map_err(wrap)?;
            AConnection::coefficient(alg.clone(), Arc::new(g))
        }
        ConnectionSpec::RandomCoefficient { degree, scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0ef);
            AConnection::random_coefficient(alg.clone(), *degree, *scale, &mut rng)
        }
        ConnectionSpec::InducedFromTm { gauge, entries } => {
            let mut tm = TmConnection::polynomial(k, n, polys(entries, n, k, n, field)?).map_err(wrap)?;
            if let Some(g) = gauge {
                let rows = g.generator.len();
                if g.generator.iter().any(|r| r.len() != rows) {
                    return Err(CliError::Input(format!("{field}.gauge.generator must be square")));
                }
                let flat: Vec<f64> = g.generator.iter().flatten().copied().collect();
                let m = DMatrix::from_row_slice(rows, rows, &flat);
                tm = tm.plus(TmConnection::gauge(m, g.coordinate, n).map_err(wrap)?).map_err(wrap)?;
            }
            AConnection::induced_from_tm(tm, alg.clone()).map_err(wrap)?
        }
        ConnectionSpec::GaugeTwisted {} => {
            let k3 = hat(&DVector::from_vec(vec![0.0, 0.0, 1.0]));
            let tm = TmConnection::gauge(k3, 0, n).map_err(wrap)?;
            AConnection::induced_from_tm(tm, alg.clone()).map_err(wrap)?.named("gauge_twisted")
        }
        ConnectionSpec::So3Minus {} => AConnection::so3_minus(alg.clone()).map_err(wrap)?,
        ConnectionSpec::Dual { base } => build_connection(base, alg, seed, &format!("{field}.base"))?.dual().map_err(wrap)?,
        ConnectionSpec::Symmetrized { base } => {
            build_connection(base, alg, seed, &format!("{field}.base"))?.symmetrize().map_err(wrap)?
        }
    })
}

pub fn parse_method(s: &str) -> Result<Method, CliError> {
    Method::parse(s).ok_or_else(|| CliError::Input(format!("job.method: unknown method '{s}' (lie_euler, rkmk4, rk4_ambient)")))
}

pub fn build_problem(spec: &ProblemSpec) -> Result<ActionODE, CliError> {
    match spec {
        ProblemSpec::SphereVarying {} => Ok(ActionODE::sphere_builtin()),
        ProblemSpec::Constant { action, coefficients, y0, horizon } => {
            let a = Action::builtin(action)
                .ok_or_else(|| CliError::Input(format!("job.problem.action: unknown builtin '{action}'")))?;
            ActionODE::constant(Arc::new(a), DVector::from_vec(coefficients.clone()), DVector::from_vec(y0.clone()), *horizon)
                .map_err(|e| CliError::Input(format!("job.problem: {e}")))
        }
    }
}

pub fn ladder(spec: &LadderSpec) -> Vec<f64> {
    match spec {
        LadderSpec::Explicit(v) => v.clone(),
        LadderSpec::Halving { h0, levels } => algebroid_lab_core::integrate::halving_ladder(*h0, *levels),
    }
}

pub(crate) fn core_error(e: algebroid_lab_core::Error) -> CliError {
    input(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let sc = parse(r#"{"job":{"type":"classify"}}"#).unwrap();
        assert_eq!(sc.probes.seed, ProbeConfig::default().seed);
        assert_eq!(sc.tolerances.tol_hold, 1e-5);
        assert!(sc.validate().is_ok());
    }

    #[test]
    fn inline_algebra_must_satisfy_jacobi() {
        // [e1,e2]=e1 is fine; adding [e1,e3]=e2 and [e2,e3]=e1 breaks Jacobi
        let sc = parse(
            r#"{"algebra":{"constants":[[[0,0,0],[1,0,0],[0,1,0]],[[-1,0,0],[0,0,0],[1,0,0]],[[0,-1,0],[-1,0,0],[0,0,0]]]},
                "algebroid":{"type":"lie_algebra"},"job":{"type":"classify"}}"#,
        )
        .unwrap();
        match sc.build_algebroid() {
            Err(CliError::Input(m)) => assert!(m.starts_with("algebra.constants"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_monomial_names_the_entry() {
        let sc = parse(
            r#"{"algebroid":{"type":"action","action":"so3_sphere"},
                "connection":{"type":"coefficient","entries":[{"i":0,"j":0,"l":0,"poly":{"x4":1}}]},
                "job":{"type":"classify"}}"#,
        )
        .unwrap();
        let alg = sc.build_algebroid().unwrap();
        match sc.build_connection(&alg, 1) {
            Err(CliError::Input(m)) => assert!(m.contains("connection.entries[0].poly"), "{m}"),
            other => panic!("{:?}", other.map(|c| c.name().to_string())),
        }
    }

    #[test]
    fn halving_ladder_spec() {
        let l = ladder(&LadderSpec::Halving { h0: 0.2, levels: 4 });
        assert_eq!(l, vec![0.2, 0.1, 0.05, 0.025]);
    }

    #[test]
    fn nested_dual_path() {
        let sc = parse(
            r#"{"algebroid":{"type":"action","action":"so3_sphere"},
                "connection":{"type":"dual","base":{"type":"symmetrized","base":{"type":"canonical_flat"}}},
                "job":{"type":"classify"}}"#,
        )
        .unwrap();
        let alg = sc.build_algebroid().unwrap();
        assert!(sc.build_connection(&alg, 0).is_ok());
    }
}
