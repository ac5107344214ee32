//! Verdicts on the algebraic structure a connection induces on Γ(A), plus the identity suite.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{AConnection, Identity, TensorReport};
use crate::error::{Error, Result};
use crate::manifold::{Section, SmoothScalar};
use crate::probes::{Accumulator, ProbeBattery, ProbeConfig, Witness};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_hold: f64,
    pub tol_fail: f64,
    /// Relaxed hold threshold for predicates built on ∇T or ∇R.
    pub tol_hold_derivative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_hold: 1e-5, tol_fail: 1e-2, tol_hold_derivative: 1e-4 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tol_hold, self.tol_fail, self.tol_hold_derivative];
        if all.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("tolerances must be positive and finite"));
        }
        if self.tol_hold >= self.tol_fail || self.tol_hold_derivative >= self.tol_fail {
            return Err(Error::invalid("tol_hold must be smaller than tol_fail"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn decide(residual: f64, tol_hold: f64, tol_fail: f64) -> Self {
        if residual < tol_hold {
            Verdict::Holds
        } else if residual > tol_fail {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    LieAdmissible,
    PreLie,
    PostLie,
    Flat,
    DualFlat,
    TorsionFree,
    ParallelTorsion,
    ParallelCurvature,
    Invariant,
    RhoTorsionFree,
}

impl Predicate {
    pub const ALL: [Predicate; 10] = [
        Predicate::LieAdmissible,
        Predicate::PreLie,
        Predicate::PostLie,
        Predicate::Flat,
        Predicate::DualFlat,
        Predicate::TorsionFree,
        Predicate::ParallelTorsion,
        Predicate::ParallelCurvature,
        Predicate::Invariant,
        Predicate::RhoTorsionFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::LieAdmissible => "lie_admissible",
            Predicate::PreLie => "pre_lie",
            Predicate::PostLie => "post_lie",
            Predicate::Flat => "flat",
            Predicate::DualFlat => "dual_flat",
            Predicate::TorsionFree => "torsion_free",
            Predicate::ParallelTorsion => "parallel_torsion",
            Predicate::ParallelCurvature => "parallel_curvature",
            Predicate::Invariant => "invariant",
            Predicate::RhoTorsionFree => "rho_torsion_free",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn uses_derivative_tolerance(self) -> bool {
        matches!(self, Predicate::ParallelTorsion | Predicate::ParallelCurvature | Predicate::Invariant)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PredicateResult {
    pub residual: f64,
    pub mean_residual: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub tol_hold: f64,
    pub tol_fail: f64,
}

impl PredicateResult {
    fn from_acc(acc: &Accumulator, tol_hold: f64, tol_fail: f64) -> Self {
        PredicateResult {
            residual: acc.max,
            mean_residual: acc.mean(),
            verdict: Verdict::decide(acc.max, tol_hold, tol_fail),
            witness: acc.witness.clone(),
            tol_hold,
            tol_fail,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub algebroid: String,
    pub connection: String,
    pub predicates: BTreeMap<Predicate, PredicateResult>,
    /// Post-Lie decided through R = R̄ = 0 instead of the defining relations.
    pub post_lie_via_curvatures: PredicateResult,
    pub post_lie_agreement: bool,
    pub implication_violations: Vec<String>,
    pub probes: ProbeConfig,
    pub tolerances: Tolerances,
}

impl ClassificationReport {
    pub fn get(&self, p: Predicate) -> &PredicateResult {
        &self.predicates[&p]
    }

    pub fn verdict(&self, p: Predicate) -> Verdict {
        self.get(p).verdict
    }
}

/// Implications between verdicts that any correct classification must respect.
pub fn implication_violations(v: &BTreeMap<Predicate, PredicateResult>) -> Vec<String> {
    let holds = |p: Predicate| v.get(&p).map(|r| r.verdict == Verdict::Holds).unwrap_or(false);
    let mut out = Vec::new();
    if holds(Predicate::PreLie) && !holds(Predicate::LieAdmissible) {
        out.push("pre_lie holds but lie_admissible does not".to_string());
    }
    if holds(Predicate::Flat) && holds(Predicate::TorsionFree) && !holds(Predicate::PreLie) {
        out.push("flat and torsion_free hold but pre_lie does not".to_string());
    }
    if holds(Predicate::Flat) && holds(Predicate::ParallelTorsion) && !holds(Predicate::PostLie) {
        out.push("flat and parallel_torsion hold but post_lie does not".to_string());
    }
    out
}

/// Evaluates `f` on every (tuple, point), scaling the k-th output by the product of the first
/// `arities[k]` section norms. Tuples run in parallel; the reduction order is fixed.
fn sweep<F>(battery: &ProbeBattery, arities: &[usize], f: F) -> Result<Vec<Accumulator>>
where
    F: Fn(&[Section; 4], &Point) -> Vec<f64> + Sync,
{
    let per_tuple: Vec<Result<Vec<Accumulator>>> = battery
        .tuples
        .par_iter()
        .enumerate()
        .map(|(t, sections)| {
            let mut accs = vec![Accumulator::default(); arities.len()];
            for (pi, x) in battery.points.iter().enumerate() {
                let vals = f(sections, x);
                for (k, v) in vals.into_iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Probe {
                            probe: t,
                            message: format!("non-finite residual at point {pi} ({:?})", x.as_slice()),
                        });
                    }
                    accs[k].push(v / battery.scale(t, arities[k]), t, pi, x);
                }
            }
            Ok(accs)
        })
        .collect();
    let mut total = vec![Accumulator::default(); arities.len()];
    for r in per_tuple {
        for (k, a) in r?.into_iter().enumerate() {
            total[k].merge(a);
        }
    }
    Ok(total)
}

fn require_bracket(conn: &AConnection) -> Result<()> {
    if conn.algebroid().has_bracket() {
        Ok(())
    } else {
        Err(Error::unsupported(format!("'{}' has no section bracket", conn.algebroid().name())))
    }
}

pub fn classify(conn: &AConnection, battery: &ProbeBattery, tol: &Tolerances) -> Result<ClassificationReport> {
    tol.validate()?;
    require_bracket(conn)?;
    let dual = conn.dual()?;
    let alg = conn.algebroid().clone();
    // order: lie_adm, pre_lie, post_lie_direct, R, R̄, T, ∇T, ∇R, ρT
    let arities = [3, 3, 3, 3, 3, 2, 3, 4, 2];
    let accs = sweep(battery, &arities, |s, x| {
        let [a, b, c, w] = s;
        let t_ab = conn.triple_bracket_at(a, b, c, x);
        let lie_adm = t_ab.clone() + conn.triple_bracket_at(b, c, a, x) + conn.triple_bracket_at(c, a, b, x);
        // post-Lie relations with [U,V] := −T(U,V)
        let ab = conn.product(a, b);
        let ac = conn.product(a, c);
        let tbc = conn.torsion_field(b, c);
        let rel_torsion = -conn.product_at(a, &tbc, x) + conn.torsion_at(&ab, c, x) + conn.torsion_at(b, &ac, x);
        let tab = conn.torsion_field(a, b);
        let rel_curvature = -conn.product_at(&tab, c, x) - &t_ab;
        let tca = conn.torsion_field(c, a);
        let t_jacobi = conn.torsion_at(a, &tbc, x) + conn.torsion_at(b, &tca, x) + conn.torsion_at(c, &tab, x);
        let direct = rel_torsion.norm().max(rel_curvature.norm()).max(t_jacobi.norm());
        let t = conn.torsion_at(a, b, x);
        vec![
            lie_adm.norm(),
            t_ab.norm(),
            direct,
            conn.curvature_at(a, b, c, x).norm(),
            dual.curvature_at(a, b, c, x).norm(),
            t.norm(),
            conn.nabla_torsion_at(a, b, c, x).norm(),
            conn.nabla_curvature_at(a, b, c, w, x).norm(),
            alg.anchor(&t, x).norm(),
        ]
    })?;
    let mut predicates = BTreeMap::new();
    let hold_for = |p: Predicate| if p.uses_derivative_tolerance() { tol.tol_hold_derivative } else { tol.tol_hold };
    let mk = |p: Predicate, acc: &Accumulator| PredicateResult::from_acc(acc, hold_for(p), tol.tol_fail);
    predicates.insert(Predicate::LieAdmissible, mk(Predicate::LieAdmissible, &accs[0]));
    predicates.insert(Predicate::PreLie, mk(Predicate::PreLie, &accs[1]));
    predicates.insert(Predicate::PostLie, mk(Predicate::PostLie, &accs[2]));
    predicates.insert(Predicate::Flat, mk(Predicate::Flat, &accs[3]));
    predicates.insert(Predicate::DualFlat, mk(Predicate::DualFlat, &accs[4]));
    predicates.insert(Predicate::TorsionFree, mk(Predicate::TorsionFree, &accs[5]));
    predicates.insert(Predicate::ParallelTorsion, mk(Predicate::ParallelTorsion, &accs[6]));
    predicates.insert(Predicate::ParallelCurvature, mk(Predicate::ParallelCurvature, &accs[7]));
    let mut inv = accs[6].clone();
    inv.merge(accs[7].clone());
    predicates.insert(Predicate::Invariant, mk(Predicate::Invariant, &inv));
    predicates.insert(Predicate::RhoTorsionFree, mk(Predicate::RhoTorsionFree, &accs[8]));

    let mut curv = accs[3].clone();
    curv.merge(accs[4].clone());
    let via = PredicateResult::from_acc(&curv, tol.tol_hold, tol.tol_fail);
    let agreement = via.verdict == predicates[&Predicate::PostLie].verdict;
    let implication_violations = implication_violations(&predicates);
    Ok(ClassificationReport {
        algebroid: alg.name().to_string(),
        connection: conn.name().to_string(),
        predicates,
        post_lie_via_curvatures: via,
        post_lie_agreement: agreement,
        implication_violations,
        probes: battery.config,
        tolerances: *tol,
    })
}

fn report(id: Identity, acc: Accumulator) -> TensorReport {
    TensorReport { id, max_residual: acc.max, mean_residual: acc.mean(), witness: acc.witness }
}

/// Relative norms of the given tensors (or identity residuals) over the battery.
pub fn tensor_norms(conn: &AConnection, battery: &ProbeBattery, ids: &[Identity]) -> Result<Vec<TensorReport>> {
    require_bracket(conn)?;
    let arities: Vec<usize> = ids.iter().map(|&id| AConnection::arity(id)).collect();
    let accs = sweep(battery, &arities, |s, x| ids.iter().map(|&id| conn.identity_at(id, s, x).norm()).collect())?;
    Ok(ids.iter().zip(accs).map(|(&id, a)| report(id, a)).collect())
}

/// Residuals of every identity that holds for any connection.
pub fn verify_identity_suite(conn: &AConnection, battery: &ProbeBattery) -> Result<Vec<TensorReport>> {
    tensor_norms(conn, battery, &Identity::IDENTITIES)
}

/// max ‖ρ(T(X,Y))‖ relative to ‖X‖‖Y‖.
pub fn check_rho_torsion(conn: &AConnection, battery: &ProbeBattery) -> Result<f64> {
    require_bracket(conn)?;
    let alg = conn.algebroid();
    let acc = sweep(battery, &[2], |s, x| vec![alg.anchor(&conn.torsion_at(&s[0], &s[1], x), x).norm()])?;
    Ok(acc[0].max)
}

/// max ‖(X▷Y − Y▷X) − [X,Y]_J‖ for a connection on a tangent algebroid.
pub fn check_commutator_is_jacobi_lie(conn: &AConnection, battery: &ProbeBattery) -> Result<f64> {
    let alg = conn.algebroid();
    if !alg.is_tangent() {
        return Err(Error::invalid(format!(
            "commutator check needs a tangent algebroid, got '{}'",
            alg.name()
        )));
    }
    let d = alg.differentiator().clone();
    let acc = sweep(battery, &[2], |s, x| {
        let jl = crate::manifold::jacobi_lie_bracket(&d, &s[0], &s[1], x).expect("dimensions checked");
        let comm = conn.product_at(&s[0], &s[1], x) - conn.product_at(&s[1], &s[0], x);
        vec![(comm - jl).norm()]
    })?;
    Ok(acc[0].max)
}

/// Residuals of ‖R(fX,Y)Z − fR‖, ‖R(X,fY)Z − fR‖, ‖R(X,Y)fZ − fR‖, ‖T(fX,Y) − fT‖, ‖T(X,fY) − fT‖.
pub fn tensoriality_residuals(conn: &AConnection, battery: &ProbeBattery, f: &SmoothScalar) -> Result<[f64; 5]> {
    require_bracket(conn)?;
    let fmax = f.sup_abs(&battery.points).max(1.0);
    let accs = sweep(battery, &[3, 3, 3, 2, 2], |s, x| {
        let [a, b, c, _] = s;
        let fv = f.eval(x);
        let r = conn.curvature_at(a, b, c, x) * fv;
        let t = conn.torsion_at(a, b, x) * fv;
        let (fa, fb, fc) = (a.scaled_by(f), b.scaled_by(f), c.scaled_by(f));
        vec![
            (conn.curvature_at(&fa, b, c, x) - &r).norm() / fmax,
            (conn.curvature_at(a, &fb, c, x) - &r).norm() / fmax,
            (conn.curvature_at(a, b, &fc, x) - &r).norm() / fmax,
            (conn.torsion_at(&fa, b, x) - &t).norm() / fmax,
            (conn.torsion_at(a, &fb, x) - &t).norm() / fmax,
        ]
    })?;
    Ok([accs[0].max, accs[1].max, accs[2].max, accs[3].max, accs[4].max])
}

/// First-slot C∞-linearity and second-slot Leibniz residuals of ∇.
pub fn connection_axioms_residual(conn: &AConnection, battery: &ProbeBattery, f: &SmoothScalar) -> Result<(f64, f64)> {
    let alg = conn.algebroid().clone();
    let fmax = f.sup_abs(&battery.points).max(1.0);
    let accs = sweep(battery, &[2, 2], |s, x| {
        let [a, b, _, _] = s;
        let fv = f.eval(x);
        let ab = conn.product_at(a, b, x);
        let lin = conn.product_at(&a.scaled_by(f), b, x) - &ab * fv;
        let rho_a = alg.anchor(&a.eval(x), x);
        let leib = conn.product_at(a, &b.scaled_by(f), x) - b.eval(x) * f.derivative(x, &rho_a) - &ab * fv;
        vec![lin.norm() / fmax, leib.norm() / fmax]
    })?;
    Ok((accs[0].max, accs[1].max))
}

/// max ‖(∇̄)‾_X Y − ∇_X Y‖ relative.
pub fn dual_involution_residual(conn: &AConnection, battery: &ProbeBattery) -> Result<f64> {
    let dd = conn.dual()?.dual()?;
    let acc = sweep(battery, &[2], |s, x| vec![(dd.product_at(&s[0], &s[1], x) - conn.product_at(&s[0], &s[1], x)).norm()])?;
    Ok(acc[0].max)
}

/// max ‖T̃(X,Y)‖ for the symmetrized connection.
pub fn symmetrized_torsion_residual(conn: &AConnection, battery: &ProbeBattery) -> Result<f64> {
    let sym = conn.symmetrize()?;
    let acc = sweep(battery, &[2], |s, x| vec![sym.torsion_at(&s[0], &s[1], x).norm()])?;
    Ok(acc[0].max)
}

/// For post-Lie connections: Jacobi residual of X▷Y − Y▷X − T(X,Y) and its distance to ⟦X,Y⟧.
pub fn post_lie_bracket_check(conn: &AConnection, battery: &ProbeBattery) -> Result<(f64, f64)> {
    require_bracket(conn)?;
    let c = conn.clone();
    let derived = move |a: &Section, b: &Section| {
        let (c1, a1, b1) = (c.clone(), a.clone(), b.clone());
        let depth = c.product_depth(a, b).max(c.product_depth(b, a)).max(c.algebroid().bracket_depth(a, b));
        Section::from_fn(c.algebroid().fiber_dim(), depth, move |x| {
            c1.product_at(&a1, &b1, x) - c1.product_at(&b1, &a1, x) - c1.torsion_at(&a1, &b1, x)
        })
    };
    let alg = conn.algebroid();
    let accs = sweep(battery, &[3, 2], |s, x| {
        let [a, b, cc, _] = s;
        let eval = |u: &Section, v: &Section| derived(u, v).eval(x);
        let jac = eval(a, &derived(b, cc)) + eval(b, &derived(cc, a)) + eval(cc, &derived(a, b));
        let diff: DVector<f64> = eval(a, b) - alg.bracket_at(a, b, x);
        vec![jac.norm(), diff.norm()]
    })?;
    Ok((accs[0].max, accs[1].max))
}

/// Generates the default battery for a connection's algebroid.
pub fn default_battery(conn: &AConnection, config: ProbeConfig) -> Result<ProbeBattery> {
    ProbeBattery::generate(conn.algebroid(), config)
}

/// Convenience wrapper used by fixtures that hold the algebroid behind an `Arc`.
pub fn battery_for(alg: &Arc<crate::algebroid::Algebroid>, config: ProbeConfig) -> Result<ProbeBattery> {
    ProbeBattery::generate(alg, config)
}
