//! End-to-end tests of the `ordsum` binary: every command, every documented
//! exit code, and the reproducibility guarantees.

use std::path::Path;
use std::process::{Command, Output};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use ordsum_cli::ingest::{read_trial_csv, write_trial_csv, ColumnSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ordsum"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    let out = cmd.output().expect("binary runs");
    out.status.code().unwrap_or(-1)
}

/// Writes a two-arm trial CSV by sampling each arm's outcome distribution.
fn write_sampled_csv(
    path: &Path,
    control: &[f64],
    treatment: &[f64],
    n_control: usize,
    n_treatment: usize,
    seed: u64,
) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows = String::from("outcome,arm\n");
    let mut push_arm = |probs: &[f64], label: &str, n: usize, rng: &mut StdRng| {
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut level = probs.len();
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    level = k + 1;
                    break;
                }
            }
            if level > probs.len() {
                level = probs.len();
            }
            rows.push_str(&format!("{level},{label}\n"));
        }
    };
    push_arm(control, "soc", n_control, &mut rng);
    push_arm(treatment, "active", n_treatment, &mut rng);
    std::fs::write(path, rows).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[test]
fn analyze_null_data_reports_no_significant_effects() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trial.csv");
    // Two arms with (near-)identical skewed five-level compositions, written
    // as explicit counts so the data themselves carry no accidental signal.
    let mut rows = String::from("outcome,arm\n");
    for (counts, label) in [([464, 119, 59, 13, 7], "soc"), ([463, 119, 59, 13, 7], "active")] {
        for (k, count) in counts.iter().enumerate() {
            for _ in 0..*count {
                rows.push_str(&format!("{},{label}\n", k + 1));
            }
        }
    }
    std::fs::write(&csv, rows).unwrap();
    let report_path = dir.path().join("analysis.json");

    run_ok(bin()
        .arg("analyze")
        .args(["--input", csv.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--seed", "7"])
        .args(["--output", report_path.to_str().unwrap()]));

    let report = read_json(&report_path);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["data"]["n"], 1323);
    assert_eq!(report["sampler"]["converged"], true);
    let measures = report["measures"].as_array().unwrap();
    assert_eq!(measures.len(), 4);
    for m in measures {
        assert_eq!(
            m["significant"], false,
            "null data must not flag {} as significant",
            m["measure"]
        );
        let lower = m["aggregate_lower"].as_f64().unwrap();
        let upper = m["aggregate_upper"].as_f64().unwrap();
        assert!(
            lower < 0.0 && 0.0 < upper,
            "interval for {} should contain the null: [{lower}, {upper}]",
            m["measure"]
        );
    }

    // The plot CSV sits next to the report: one row per break point and
    // effect scale, plus one per summary measure.
    let plot = std::fs::read_to_string(dir.path().join("analysis_breakpoints.csv")).unwrap();
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "kind,measure,breakpoint,point,lower,upper");
    assert_eq!(lines.len(), 1 + 4 * 4 + 4);
}

#[test]
fn analyze_two_levels_collapses_to_the_single_breakpoint_effect() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("binary.csv");
    let mut rows = String::from("outcome,arm\n");
    for (count, level, arm) in [(30, 1, "soc"), (70, 2, "soc"), (45, 1, "active"), (55, 2, "active")] {
        for _ in 0..count {
            rows.push_str(&format!("{level},{arm}\n"));
        }
    }
    std::fs::write(&csv, rows).unwrap();
    let report_path = dir.path().join("analysis.json");

    run_ok(bin()
        .arg("analyze")
        .args(["--input", csv.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--family", "po"])
        .args(["--seed", "11"])
        .args(["--measures", "wOR,wRD"])
        .args(["--output", report_path.to_str().unwrap()]));

    let report = read_json(&report_path);
    let breakpoints = report["breakpoints"].as_array().unwrap();
    assert_eq!(breakpoints.len(), 1, "two levels mean one break point");
    let measures = report["measures"].as_array().unwrap();

    // With a single break point the weighted summary IS the cumulative
    // effect: identical draws, identical quantiles, bit for bit.
    let bp = &breakpoints[0];
    let wor = &measures[0];
    let wrd = &measures[1];
    for (summary, cumulative) in [(wor, &bp["log_or"]), (wrd, &bp["rd"])] {
        for (s_key, b_key) in [
            ("aggregate_point", "point"),
            ("aggregate_lower", "lower"),
            ("aggregate_upper", "upper"),
        ] {
            assert_eq!(
                summary[s_key].as_f64().unwrap(),
                cumulative[b_key].as_f64().unwrap(),
                "{} must equal the lone cumulative effect's {b_key} exactly",
                summary["measure"]
            );
        }
    }
}

#[test]
fn analyze_reports_larger_aor_when_odds_ratios_increase_with_severity() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ppo.csv");
    // Cumulative odds ratios 1.1, 1.8, 3.0 over a skewed four-level control:
    // rare severe outcomes carry the big effects, so uniform averaging
    // overstates the typical patient's benefit.
    let control = [0.70, 0.18, 0.09, 0.03];
    let treatment = [0.719_626_168, 0.209_951_297, 0.060_218_454, 0.010_204_082];
    write_sampled_csv(&csv, &control, &treatment, 650, 650, 8);
    let report_path = dir.path().join("analysis.json");

    run_ok(bin()
        .arg("analyze")
        .args(["--input", csv.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--seed", "12"])
        .args(["--measures", "AOR,wOR"])
        .args(["--output", report_path.to_str().unwrap()]));

    let report = read_json(&report_path);
    let measures = report["measures"].as_array().unwrap();
    assert_eq!(measures[0]["measure"], "AOR");
    assert_eq!(measures[1]["measure"], "wOR");
    let aor = measures[0]["aggregate_point"].as_f64().unwrap();
    let wor = measures[1]["aggregate_point"].as_f64().unwrap();
    assert!(
        aor > wor,
        "uniform averaging should exceed the weighted summary here: AOR {aor:.4} vs wOR {wor:.4}"
    );
}

#[test]
fn analyze_maps_string_levels_and_honors_the_output_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("labeled.csv");
    let mut rows = String::from("status,group,age\n");
    let mut rng = StdRng::seed_from_u64(3);
    for i in 0..120 {
        let group = if i % 2 == 0 { "ctl" } else { "rx" };
        let status = match rng.random_range(0..3) {
            0 => "well",
            1 => "sick",
            _ => "dead",
        };
        // Age enters standardized; short test chains mix poorly on the
        // intercept-slope ridge a raw 40-70 scale would create.
        rows.push_str(&format!("{status},{group},{:.2}\n", (i % 30) as f64 / 10.0 - 1.45));
    }
    std::fs::write(&csv, rows).unwrap();

    let out_dir = dir.path().join("outputs");
    run_ok(bin()
        .env("ORDSUM_OUTPUT_DIR", &out_dir)
        .arg("analyze")
        .args(["--input", csv.to_str().unwrap()])
        .args(["--outcome", "status"])
        .args(["--arm", "group"])
        .args(["--control-label", "ctl"])
        .args(["--levels", "well,sick,dead"])
        .args(["--covariates", "age"])
        .args(["--seed", "4"])
        .args(["--chains", "2"])
        .args(["--warmup", "400"])
        .args(["--draws", "400"]));

    let report = read_json(&out_dir.join("analysis.json"));
    assert_eq!(report["config"]["levels"], serde_json::json!(["well", "sick", "dead"]));
    assert_eq!(report["config"]["marginalization"], "bootstrap-adjusted");
    assert_eq!(report["data"]["levels"], 3);
    assert!(out_dir.join("analysis_breakpoints.csv").exists());
}

#[test]
fn analyze_exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();

    // Missing arm column: schema violation.
    let no_arm = dir.path().join("no_arm.csv");
    std::fs::write(&no_arm, "outcome\n1\n2\n").unwrap();
    let code = exit_code(bin()
        .arg("analyze")
        .args(["--input", no_arm.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--output", dir.path().join("a.json").to_str().unwrap()]));
    assert_eq!(code, 3, "missing column should be a schema violation");

    // A label outside the --levels list: unmapped outcome.
    let bad_label = dir.path().join("bad_label.csv");
    std::fs::write(
        &bad_label,
        "outcome,arm\ngood,soc\nbad,active\nugly,soc\ngood,active\n",
    )
    .unwrap();
    let code = exit_code(bin()
        .arg("analyze")
        .args(["--input", bad_label.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--levels", "good,bad"])
        .args(["--output", dir.path().join("b.json").to_str().unwrap()]));
    assert_eq!(code, 4, "a label missing from --levels is an unmapped outcome");

    // Unknown measure name: schema violation before any fitting.
    let tiny = dir.path().join("tiny.csv");
    std::fs::write(&tiny, "outcome,arm\n1,soc\n2,active\n1,active\n2,soc\n").unwrap();
    let code = exit_code(bin()
        .arg("analyze")
        .args(["--input", tiny.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--measures", "wXYZ"])
        .args(["--output", dir.path().join("c.json").to_str().unwrap()]));
    assert_eq!(code, 3);
}

#[test]
fn usage_errors_exit_with_code_two() {
    // Unknown subcommand and missing required flag are both usage errors.
    assert_eq!(exit_code(bin().arg("frobnicate")), 2);
    assert_eq!(exit_code(bin().arg("analyze").args(["--input", "x.csv"])), 2);
}

#[test]
fn analyze_flags_a_failed_convergence_gate_but_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trial.csv");
    let dist = [0.4, 0.3, 0.2, 0.1];
    write_sampled_csv(&csv, &dist, &dist, 150, 150, 99);
    let report_path = dir.path().join("analysis.json");

    // No warmup and four retained draws per chain: the chains never leave
    // their jittered starting points, so split R-hat stays far above 1.1.
    let out = bin()
        .arg("analyze")
        .args(["--input", csv.to_str().unwrap()])
        .args(["--control-label", "soc"])
        .args(["--seed", "5"])
        .args(["--chains", "4"])
        .args(["--warmup", "0"])
        .args(["--draws", "4"])
        .args(["--output", report_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = read_json(&report_path);
    assert_eq!(report["sampler"]["converged"], false);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[test]
fn simulate_null_scenario_controls_type_one_error_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{
            "scenarios": ["Setting1/Null"],
            "methods": ["po"],
            "replicates": 100,
            "n": 200,
            "seed": 9,
            "chains": 2,
            "warmup": 300,
            "draws_per_chain": 300
        }"#,
    )
    .unwrap();

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(bin()
        .arg("simulate")
        .args(["--config", config.to_str().unwrap()])
        .args(["--out-dir", out_a.to_str().unwrap()]));
    run_ok(bin()
        .arg("simulate")
        .args(["--config", config.to_str().unwrap()])
        .args(["--out-dir", out_b.to_str().unwrap()]));

    let csv_a = std::fs::read(out_a.join("power.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("power.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "identical config + seed must give identical CSV bytes");
    let json_a = std::fs::read(out_a.join("power.json")).unwrap();
    let json_b = std::fs::read(out_b.join("power.json")).unwrap();
    assert_eq!(json_a, json_b);

    let text = String::from_utf8(csv_a).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("Setting1/Null,1,po,"))
        .expect("result row present");
    let rate: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert!(
        (0.0..=0.12).contains(&rate),
        "null rejection rate {rate} outside [0, 0.12]"
    );
}

#[test]
fn simulate_rejects_unknown_names_as_schema_violations() {
    let dir = tempfile::tempdir().unwrap();

    let bad_scenario = dir.path().join("bad_scenario.json");
    std::fs::write(&bad_scenario, r#"{"scenarios": ["Setting9/Mystery"], "replicates": 5}"#).unwrap();
    let code = exit_code(bin()
        .arg("simulate")
        .args(["--config", bad_scenario.to_str().unwrap()])
        .args(["--out-dir", dir.path().to_str().unwrap()]));
    assert_eq!(code, 3);

    let bad_method = dir.path().join("bad_method.json");
    std::fs::write(
        &bad_method,
        r#"{"scenarios": ["Setting1/Null"], "methods": ["telepathy"], "replicates": 5}"#,
    )
    .unwrap();
    let code = exit_code(bin()
        .arg("simulate")
        .args(["--config", bad_method.to_str().unwrap()])
        .args(["--out-dir", dir.path().to_str().unwrap()]));
    assert_eq!(code, 3);

    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, r#"{"scenarios": ["Setting1/Null"], "replicate": 5}"#).unwrap();
    let code = exit_code(bin()
        .arg("simulate")
        .args(["--config", typo.to_str().unwrap()])
        .args(["--out-dir", dir.path().to_str().unwrap()]));
    assert_eq!(code, 3, "unknown config keys must be rejected");
}

// ---------------------------------------------------------------------------
// scenarios / true-values
// ---------------------------------------------------------------------------

#[test]
fn scenario_listing_shows_distributions_and_true_values() {
    let out = run_ok(bin().arg("scenarios"));
    let text = String::from_utf8(out.stdout).unwrap();

    let high_po = text
        .lines()
        .find(|l| l.starts_with("Setting2/HighPO"))
        .expect("Setting2/HighPO listed");
    assert!(high_po.contains("0.7000, 0.1800, 0.0900, 0.0200, 0.0100"));

    for null_row in ["Setting1/Null", "Setting2/Null"] {
        let row = text.lines().find(|l| l.starts_with(null_row)).unwrap();
        assert!(row.trim_end().ends_with("0.000"), "null true value must be zero: {row}");
    }

    let low_rr = text
        .lines()
        .find(|l| l.starts_with("Setting1/LowRR"))
        .expect("Setting1/LowRR listed");
    assert!(low_rr.contains("0.35"), "LowRR log wOR prints as 0.351: {low_rr}");
}

#[test]
fn true_value_table_covers_every_weighting() {
    let out = run_ok(bin().arg("true-values"));
    let text = String::from_utf8(out.stdout).unwrap();
    let np6 = text
        .lines()
        .find(|l| l.starts_with("Setting2/NP6"))
        .expect("Setting2/NP6 listed");
    // Proportional-odds projection, then control / cumulative-only /
    // sum-only / overall weightings.
    for v in ["0.126", "0.218", "0.596", "0.463", "0.144"] {
        assert!(np6.contains(v), "expected {v} in: {np6}");
    }
}

// ---------------------------------------------------------------------------
// ingestion round trip
// ---------------------------------------------------------------------------

#[test]
fn csv_ingestion_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let original = dir.path().join("orig.csv");
    std::fs::write(
        &original,
        "outcome,arm,age,bmi\n\
         well,soc,63.5,27.25\n\
         dead,active,41.0,-0.5\n\
         sick,active,55.125,31.0000001\n\
         well,soc,77.25,22.125\n\
         sick,soc,60.0,0.1\n",
    )
    .unwrap();
    let spec = ColumnSpec {
        outcome: "outcome".into(),
        arm: "arm".into(),
        control_label: "soc".into(),
        levels: Some(vec!["well".into(), "sick".into(), "dead".into()]),
        covariates: vec!["age".into(), "bmi".into()],
    };
    let first = read_trial_csv(&original, &spec).unwrap();

    let exported = dir.path().join("export.csv");
    write_trial_csv(&exported, &first, &spec).unwrap();
    let second = read_trial_csv(&exported, &spec).unwrap();
    assert_eq!(first, second, "export must re-ingest to an identical dataset");

    // Integer levels without a label mapping round-trip the same way.
    let numeric = dir.path().join("numeric.csv");
    std::fs::write(&numeric, "outcome,arm\n1,soc\n3,active\n2,soc\n3,soc\n1,active\n").unwrap();
    let spec = ColumnSpec {
        outcome: "outcome".into(),
        arm: "arm".into(),
        control_label: "soc".into(),
        levels: None,
        covariates: vec![],
    };
    let first = read_trial_csv(&numeric, &spec).unwrap();
    assert_eq!(first.level_labels, vec!["1", "2", "3"]);
    let exported = dir.path().join("numeric_export.csv");
    write_trial_csv(&exported, &first, &spec).unwrap();
    let second = read_trial_csv(&exported, &spec).unwrap();
    assert_eq!(first, second);
}
