//! One PASS/FAIL line per acceptance criterion. Run with `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use algebroid_lab_core::algebroid::{
    check_anchor_homomorphism, gauge_twisted_so3, make_action_algebroid, make_bundle_of_lie_algebras,
    make_tangent_algebroid, Action, Algebroid, ConstantsField,
};
use algebroid_lab_core::classify::{
    classify, dual_involution_residual, symmetrized_torsion_residual, tensor_norms, tensoriality_residuals,
    verify_identity_suite, Predicate, Tolerances, Verdict,
};
use algebroid_lab_core::connection::{AConnection, Identity};
use algebroid_lab_core::integrate::{convergence_study, halving_ladder, integrate, steps_for, ActionODE, Method};
use algebroid_lab_core::lie_core::LieAlgebra;
use algebroid_lab_core::manifold::{EmbeddedManifold, Polynomial, SmoothScalar};
use algebroid_lab_core::probes::{ProbeBattery, ProbeConfig};
use algebroid_lab_core::reconstruct::{fixture, reconstruct_action, ReconstructOptions};
use algebroid_lab_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A named check with its measured value.
struct Check {
    what: String,
    ok: bool,
}

impl Check {
    fn le(what: impl Into<String>, value: f64, bound: f64) -> Self {
        let what = what.into();
        Check { ok: value <= bound, what: format!("{what} = {value:.3e} <= {bound:.0e}") }
    }

    fn is(what: impl Into<String>, ok: bool) -> Self {
        Check { what: what.into(), ok }
    }
}

type Outcome = Result<Vec<Check>, String>;

fn criterion(id: u32, title: &str, budget_s: f64, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = body();
    let secs = start.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Err(e) => (false, format!("error: {e}")),
        Ok(checks) => {
            for c in &checks {
                println!("    [{}] {}", if c.ok { "ok" } else { "!!" }, c.what);
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.ok).map(|c| c.what.as_str()).collect();
            (failed.is_empty(), if failed.is_empty() { String::new() } else { format!("failed: {}", failed.join("; ")) })
        }
    };
    let in_time = secs <= budget_s;
    let pass = ok && in_time;
    println!(
        "{} criterion {id}: {title} ({secs:.1}s of {budget_s:.0}s){}{}",
        if pass { "PASS" } else { "FAIL" },
        if in_time { "" } else { " over budget" },
        if detail.is_empty() { String::new() } else { format!(" {detail}") }
    );
    pass
}

fn poly(n: usize, terms: &[(&str, f64)]) -> SmoothScalar {
    let m: BTreeMap<String, f64> = terms.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    SmoothScalar::Polynomial(Polynomial::from_monomial_map(n, &m).expect("valid monomials"))
}

fn action(name: &str) -> Arc<Algebroid> {
    Arc::new(make_action_algebroid(Action::builtin(name).expect("builtin")).expect("valid action"))
}

fn scaled_bundle() -> Arc<Algebroid> {
    let c = ConstantsField::scaled(&LieAlgebra::so3(), poly(3, &[("1", 1.0), ("x3^2", 1.0)]));
    Arc::new(make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), c).expect("valid bundle"))
}

fn induced(name: &str) -> Result<AConnection, Error> {
    let (alg, tm) = fixture(name).expect("fixture");
    AConnection::induced_from_tm(tm, alg)
}

fn err(e: Error) -> String {
    e.to_string()
}

fn identity_suite() -> Outcome {
    let algebroids = [
        action("so3_sphere"),
        action("se2_plane"),
        Arc::new(make_tangent_algebroid(EmbeddedManifold::sphere2())),
        scaled_bundle(),
    ];
    let mut checks = Vec::new();
    for alg in algebroids {
        let battery = ProbeBattery::generate(&alg, ProbeConfig::default()).map_err(err)?;
        let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let conn = AConnection::random_coefficient(alg.clone(), 1, 1.0, &mut rng);
            for r in verify_identity_suite(&conn, &battery).map_err(err)? {
                let w = worst.entry(r.id.label()).or_insert(0.0);
                *w = w.max(r.max_residual);
            }
        }
        for (label, value) in worst {
            let bound = if label == Identity::SecondBianchi.label() { 1e-3 } else { 1e-4 };
            checks.push(Check::le(format!("{} {label}", alg.name()), value, bound));
        }
    }
    Ok(checks)
}

fn canonical_flat() -> Outcome {
    let mut checks = Vec::new();
    for name in ["so3_sphere", "abelian_torus"] {
        let alg = action(name);
        let conn = AConnection::canonical_flat(alg.clone()).map_err(err)?;
        let battery = ProbeBattery::generate(&alg, ProbeConfig::default()).map_err(err)?;
        for r in tensor_norms(&conn, &battery, &[Identity::Curvature, Identity::DualCurvature]).map_err(err)? {
            checks.push(Check::le(format!("{name} {}", r.id.label()), r.max_residual, 1e-6));
        }
    }
    Ok(checks)
}

fn classification() -> Outcome {
    let tol = Tolerances::default();
    let run = |conn: &AConnection| -> Result<_, String> {
        let b = ProbeBattery::generate(conn.algebroid(), ProbeConfig::default()).map_err(err)?;
        classify(conn, &b, &tol).map_err(err)
    };
    let verdict = |r: &algebroid_lab_core::classify::ClassificationReport, p: Predicate, want: Verdict, label: &str| {
        Check::is(format!("{label}: {} = {} (residual {:.2e})", p.name(), r.verdict(p).as_str(), r.get(p).residual), r.verdict(p) == want)
    };
    let mut checks = Vec::new();

    let so3 = run(&AConnection::canonical_flat(action("so3_sphere")).map_err(err)?)?;
    checks.push(verdict(&so3, Predicate::PostLie, Verdict::Holds, "so3 sphere"));
    checks.push(verdict(&so3, Predicate::PreLie, Verdict::Fails, "so3 sphere"));

    let torus = run(&AConnection::canonical_flat(action("abelian_torus")).map_err(err)?)?;
    checks.push(verdict(&torus, Predicate::PreLie, Verdict::Holds, "torus"));

    let bundle = Arc::new(
        make_bundle_of_lie_algebras(EmbeddedManifold::sphere2(), ConstantsField::constant(&LieAlgebra::so3())).map_err(err)?,
    );
    let trivial = run(&AConnection::zero(bundle).map_err(err)?)?;
    checks.push(verdict(&trivial, Predicate::PreLie, Verdict::Holds, "bundle trivial"));
    checks.push(verdict(&trivial, Predicate::TorsionFree, Verdict::Fails, "bundle trivial"));

    let mut fixtures = vec![("so3 sphere", so3), ("torus", torus), ("bundle trivial", trivial)];
    for name in ["gauge_twisted_so3", "dual_curved_so3"] {
        fixtures.push((name, run(&induced(name).map_err(err)?)?));
    }
    let se2 = AConnection::canonical_flat(action("se2_plane")).map_err(err)?;
    fixtures.push(("se2 plane", run(&se2)?));
    for (label, r) in &fixtures {
        checks.push(Check::is(
            format!(
                "{label}: direct post-Lie {} agrees with R/R-bar {}",
                r.verdict(Predicate::PostLie).as_str(),
                r.post_lie_via_curvatures.verdict.as_str()
            ),
            r.post_lie_agreement,
        ));
    }
    Ok(checks)
}

fn reconstruction() -> Outcome {
    let opts = ReconstructOptions::default();
    let mut checks = Vec::new();

    let (alg, tm) = fixture("gauge_twisted_so3").expect("fixture");
    let r = reconstruct_action(&alg, &tm, &opts).map_err(err)?;
    checks.push(Check::le("twisted flatness", r.flatness_residual, opts.flatness_tol));
    checks.push(Check::le("twisted loop transport", r.loop_residual, 1e-6));
    checks.push(Check::le("twisted constancy", r.constancy_residual, 1e-4));
    let so3 = LieAlgebra::so3().killing_signature();
    checks.push(Check::is(format!("twisted Killing signature {:?}", r.invariants.killing), r.invariants.killing == so3));
    checks.push(Check::le("twisted anchor vs original", r.original_anchor_residual.unwrap_or(f64::INFINITY), 1e-4));

    let (alg, tm) = fixture("abelian_torus").expect("fixture");
    let r = reconstruct_action(&alg, &tm, &opts).map_err(err)?;
    let biggest = r.constants.iter().flatten().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    checks.push(Check::le("abelian constants", biggest, 1e-8));

    let (alg, tm) = fixture("dual_curved_so3").expect("fixture");
    let e = reconstruct_action(&alg, &tm, &opts);
    checks.push(Check::is(
        format!("dual-curved rejected ({})", e.as_ref().err().map(|e| e.to_string()).unwrap_or_else(|| "accepted".into())),
        matches!(e, Err(Error::NonConstantStructure { .. })),
    ));

    let (alg, tm) = fixture("zero_anchor_sphere").expect("fixture");
    let e = reconstruct_action(&alg, &tm, &opts);
    checks.push(Check::is(
        format!("zero anchor rejected ({})", e.as_ref().err().map(|e| e.to_string()).unwrap_or_else(|| "accepted".into())),
        matches!(e, Err(Error::NonTransitive { .. })),
    ));
    Ok(checks)
}

fn integration() -> Outcome {
    let p = ActionODE::sphere_builtin();
    let ladder = halving_ladder(0.1, 5);
    let mut checks = Vec::new();
    for (m, lo, hi) in [(Method::LieEuler, 0.8, 1.2), (Method::RKMK4, 3.7, 4.3)] {
        let t = convergence_study(&p, m, &ladder).map_err(err)?;
        let s = t.slope.unwrap_or(f64::NAN);
        checks.push(Check::is(format!("{} slope {s:.3} in [{lo}, {hi}]", m.name()), (lo..=hi).contains(&s)));
    }
    let mut action_drift: f64 = 0.0;
    for m in [Method::LieEuler, Method::RKMK4] {
        let t = integrate(&p, m, 0.1, 10_000).map_err(err)?;
        checks.push(Check::le(format!("{} drift over 1e4 steps", m.name()), t.max_drift, 1e-12));
    }
    let long = p.with_initial(p.y0.clone(), 10.0).map_err(err)?;
    let n = steps_for(10.0, 0.1).map_err(err)?;
    for m in [Method::LieEuler, Method::RKMK4] {
        action_drift = action_drift.max(integrate(&long, m, 0.1, n).map_err(err)?.max_drift);
    }
    let ambient = integrate(&long, Method::Rk4Ambient, 0.1, n).map_err(err)?.max_drift;
    // an exact-zero action drift would make the ratio infinite; floor it at one ulp of the unit sphere
    let ratio = ambient / action_drift.max(f64::EPSILON);
    checks.push(Check::is(
        format!("ambient drift {ambient:.2e} vs action-based {action_drift:.2e}: ratio {ratio:.1e} >= 1e3"),
        ratio >= 1e3,
    ));
    Ok(checks)
}

fn builtin_connections() -> Result<Vec<AConnection>, Error> {
    let mut v = Vec::new();
    for name in ["so3_sphere", "so3_group_right", "abelian_torus", "se2_plane", "heisenberg_plane"] {
        v.push(AConnection::canonical_flat(action(name))?);
    }
    let twisted = Arc::new(gauge_twisted_so3());
    v.push(AConnection::canonical_flat(twisted)?);
    v.push(induced("gauge_twisted_so3")?);
    v.push(induced("dual_curved_so3")?);
    v.push(AConnection::zero(scaled_bundle())?);
    let tso3 = Arc::new(make_tangent_algebroid(EmbeddedManifold::so3_group()));
    let minus = AConnection::so3_minus(tso3)?;
    v.push(minus.symmetrize()?);
    v.push(minus);
    let ts2 = Arc::new(make_tangent_algebroid(EmbeddedManifold::sphere2()));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let random = AConnection::random_coefficient(ts2, 1, 1.0, &mut rng);
    v.push(random.symmetrize()?);
    v.push(random);
    Ok(v)
}

fn structural() -> Outcome {
    let mut checks = Vec::new();
    for conn in builtin_connections().map_err(err)? {
        let alg = conn.algebroid().clone();
        let n = alg.manifold().ambient_dim();
        let b = ProbeBattery::generate(&alg, ProbeConfig::default()).map_err(err)?;
        let f = poly(n, &[("1", 1.0), ("x1^2", 1.0)]);
        let label = format!("{} / {}", alg.name(), conn.name());
        let tens = tensoriality_residuals(&conn, &b, &f).map_err(err)?.into_iter().fold(0.0, f64::max);
        checks.push(Check::le(format!("{label} tensoriality"), tens, 1e-4));
        let mut hom: f64 = 0.0;
        for t in &b.tuples {
            hom = hom.max(check_anchor_homomorphism(&alg, &t[0], &t[1], &b.points).map_err(err)?);
        }
        checks.push(Check::le(format!("{label} anchor homomorphism"), hom, 1e-4));
        checks.push(Check::le(format!("{label} dual involution"), dual_involution_residual(&conn, &b).map_err(err)?, 1e-8));
        checks.push(Check::le(format!("{label} symmetrized torsion"), symmetrized_torsion_residual(&conn, &b).map_err(err)?, 1e-6));
    }
    Ok(checks)
}

fn main() -> ExitCode {
    let results = [
        criterion(1, "identity suite on random connections", 60.0, identity_suite),
        criterion(2, "canonical flat connection has R = R-bar = 0", 5.0, canonical_flat),
        criterion(3, "classification regressions", 30.0, classification),
        criterion(4, "reconstruction fixtures", 60.0, reconstruction),
        criterion(5, "integration orders and drift", 120.0, integration),
        criterion(6, "tensoriality and structural invariants", 60.0, structural),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
