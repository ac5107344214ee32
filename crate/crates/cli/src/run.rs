//! Job execution and report assembly.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use algebroid_lab_core::classify::{classify, verify_identity_suite, Predicate, Verdict};
use algebroid_lab_core::integrate::{convergence_study, integrate};
use algebroid_lab_core::probes::ProbeBattery;
use algebroid_lab_core::reconstruct::{reconstruct_action, tm_connection_of};
use algebroid_lab_core::Error as CoreError;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{build_problem, core_error, ladder, parse_method, JobSpec, Scenario};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rows of a CSV file, header first.
pub type Table = Vec<Vec<String>>;

#[derive(Debug)]
pub struct RunOutput {
    pub report: Value,
    pub tables: Vec<(String, Table)>,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct Check {
    check: String,
    expected: Value,
    actual: Value,
    passed: bool,
}

fn witness_string(w: Option<&algebroid_lab_core::probes::Witness>) -> String {
    w.map(|w| w.point.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report values serialize")
}

fn reconstruct_outcome(e: &CoreError) -> Option<&'static str> {
    Some(match e {
        CoreError::NotFlat { .. } => "not_flat",
        CoreError::PathDependent { .. } => "path_dependent",
        CoreError::NonTransitive { .. } => "non_transitive",
        CoreError::NonConstantStructure { .. } => "non_constant_structure",
        CoreError::DegenerateFrame { .. } => "degenerate_frame",
        _ => return None,
    })
}

/// Job result, any tables, and the checks requested by the scenario.
type Executed = (Value, Vec<(String, Table)>, Vec<Check>);

fn execute(sc: &Scenario, seed: u64) -> Result<Executed, CliError> {
    let expect = sc.expect.clone().unwrap_or_default();
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let result = match &sc.job {
        JobSpec::Identities {} => {
            let alg = sc.build_algebroid()?;
            let conn = sc.build_connection(&alg, seed)?;
            let battery = ProbeBattery::generate(&alg, sc.probe_config(seed)).map_err(core_error)?;
            let reports = verify_identity_suite(&conn, &battery).map_err(core_error)?;
            let mut rows = vec![vec!["identity".into(), "max_residual".into(), "mean_residual".into(), "witness_point".into()]];
            for r in &reports {
                rows.push(vec![
                    r.id.label().into(),
                    format!("{:.6e}", r.max_residual),
                    format!("{:.6e}", r.mean_residual),
                    witness_string(r.witness.as_ref()),
                ]);
            }
            tables.push(("identities.csv".into(), rows));
            if let Some(tol) = expect.max_residual {
                for r in &reports {
                    checks.push(Check {
                        check: format!("{} max_residual <=", r.id.label()),
                        expected: json!(tol),
                        actual: json!(r.max_residual),
                        passed: r.max_residual <= tol,
                    });
                }
            }
            json!({ "algebroid": alg.name(), "connection": conn.name(), "identities": reports })
        }
        JobSpec::Classify {} => {
            let alg = sc.build_algebroid()?;
            let conn = sc.build_connection(&alg, seed)?;
            let battery = ProbeBattery::generate(&alg, sc.probe_config(seed)).map_err(core_error)?;
            let report = classify(&conn, &battery, &sc.tolerances.tolerances()).map_err(core_error)?;
            let mut rows = vec![vec!["predicate".into(), "residual".into(), "verdict".into(), "witness_point".into()]];
            for p in Predicate::ALL {
                let r = report.get(p);
                rows.push(vec![p.name().into(), format!("{:.6e}", r.residual), r.verdict.as_str().into(), witness_string(r.witness.as_ref())]);
            }
            tables.push(("classification.csv".into(), rows));
            for (name, want) in &expect.verdicts {
                let p = Predicate::from_name(name).expect("validated");
                let got: Verdict = report.verdict(p);
                checks.push(Check {
                    check: format!("verdict {name}"),
                    expected: json!(want),
                    actual: json!(got.as_str()),
                    passed: got.as_str() == want,
                });
            }
            if let Some(want) = expect.post_lie_agreement {
                checks.push(Check {
                    check: "post_lie_agreement".into(),
                    expected: json!(want),
                    actual: json!(report.post_lie_agreement),
                    passed: report.post_lie_agreement == want,
                });
            }
            to_value(&report)
        }
        JobSpec::Reconstruct { .. } => {
            let alg = sc.build_algebroid()?;
            let conn = sc.build_connection(&alg, seed)?;
            let tm = tm_connection_of(&conn).ok_or_else(|| {
                CliError::Input("connection: reconstruction needs a connection induced from a TM-connection".into())
            })?;
            let opts = sc.reconstruct_options(seed);
            let (outcome, body) = match reconstruct_action(&alg, &tm, &opts) {
                Ok(r) => ("ok", to_value(&r)),
                Err(e) => match reconstruct_outcome(&e) {
                    Some(o) if expect.outcome.is_some() => (o, json!({ "error": e.to_string() })),
                    _ => return Err(core_error(e)),
                },
            };
            if let Some(want) = &expect.outcome {
                checks.push(Check { check: "outcome".into(), expected: json!(want), actual: json!(outcome), passed: want == outcome });
            }
            if let Some(want) = expect.abelian {
                let got = body.get("abelian").and_then(Value::as_bool);
                checks.push(Check { check: "abelian".into(), expected: json!(want), actual: json!(got), passed: got == Some(want) });
            }
            if let Some(want) = expect.killing_signature {
                let got = body.pointer("/invariants/killing").map(|k| {
                    [k["positive"].as_u64().unwrap_or(0), k["negative"].as_u64().unwrap_or(0), k["zero"].as_u64().unwrap_or(0)]
                });
                let passed = got.map(|g| g.iter().zip(want).all(|(a, b)| *a as usize == b)).unwrap_or(false);
                checks.push(Check { check: "killing_signature".into(), expected: json!(want), actual: json!(got), passed });
            }
            json!({ "algebroid": alg.name(), "connection": conn.name(), "outcome": outcome, "options": opts, "result": body })
        }
        JobSpec::Integrate { method, h, steps, problem } => {
            let m = parse_method(method)?;
            let p = build_problem(problem)?;
            let t = integrate(&p, m, *h, *steps).map_err(core_error)?;
            if let Some(tol) = expect.max_drift {
                checks.push(Check { check: "max_drift <=".into(), expected: json!(tol), actual: json!(t.max_drift), passed: t.max_drift <= tol });
            }
            json!({ "problem": p.name, "trajectory": t })
        }
        JobSpec::Convergence { method, ladder: spec, problem } => {
            let m = parse_method(method)?;
            let p = build_problem(problem)?;
            let table = convergence_study(&p, m, &ladder(spec)).map_err(core_error)?;
            let mut rows = vec![vec!["h".into(), "error".into(), "drift".into()]];
            for ((h, e), d) in table.step_sizes.iter().zip(&table.errors).zip(&table.drifts) {
                rows.push(vec![format!("{h:.6e}"), format!("{e:.6e}"), format!("{d:.6e}")]);
            }
            tables.push(("convergence.csv".into(), rows));
            if let Some([lo, hi]) = expect.slope {
                let passed = table.slope.map(|s| s >= lo && s <= hi).unwrap_or(false);
                checks.push(Check { check: "slope in".into(), expected: json!([lo, hi]), actual: json!(table.slope), passed });
            }
            if let Some(tol) = expect.max_drift {
                let d = table.drifts.iter().copied().fold(0.0, f64::max);
                checks.push(Check { check: "max_drift <=".into(), expected: json!(tol), actual: json!(d), passed: d <= tol });
            }
            json!({ "problem": p.name, "convergence": table })
        }
    };
    Ok((result, tables, checks))
}

/// Runs a parsed scenario. Input errors propagate; numeric failures become a report with exit code 3.
pub fn run_scenario(sc: &Scenario, seed: u64) -> Result<RunOutput, CliError> {
    sc.validate()?;
    let start = Instant::now();
    let outcome = execute(sc, seed);
    let wall = start.elapsed().as_secs_f64();
    let mut report = json!({
        "artifact_version": VERSION,
        "scenario": to_value(sc),
        "seed": seed,
        "job": sc.job.name(),
        "wall_time_seconds": wall,
    });
    let (exit_code, tables) = match outcome {
        Ok((result, tables, checks)) => {
            let all = checks.iter().all(|c| c.passed);
            report["result"] = result;
            report["expectations"] = to_value(&checks);
            report["status"] = json!(if all { "ok" } else { "expectation_mismatch" });
            (if all { 0 } else { 1 }, tables)
        }
        Err(CliError::Numeric(msg)) => {
            report["status"] = json!("numeric_failure");
            report["error"] = json!(msg);
            (3, Vec::new())
        }
        Err(e) => return Err(e),
    };
    Ok(RunOutput { report, tables, exit_code })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut json = serde_json::to_vec_pretty(&out.report).map_err(|e| CliError::Io(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&dir.join("report.json"), &json)?;
    for (name, rows) in &out.tables {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}
