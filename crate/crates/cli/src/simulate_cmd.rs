//! The `simulate` command: run a power / type-I-error study from a JSON
//! config and write the results as CSV + JSON, byte-identical across runs
//! with the same config and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ordsum::simulate::{find_scenario, parse_scenarios, run_study, Method, PowerTable, ScenarioSpec, SimConfig};

use crate::error::{CliError, Result};
use crate::report::ToolInfo;

/// JSON config schema. Unknown keys are rejected so typos surface as schema
/// violations instead of silently running defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFileConfig {
    /// Built-in scenario names (see `ordsum scenarios`).
    #[serde(default)]
    pub scenarios: Vec<String>,
    /// Optional JSON file with custom scenarios.
    #[serde(default)]
    pub scenario_file: Option<PathBuf>,
    /// Method labels; defaults to po, nb, AOR, wOR.
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub treatment_fraction: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub chains: Option<usize>,
    #[serde(default)]
    pub warmup: Option<usize>,
    #[serde(default)]
    pub draws_per_chain: Option<usize>,
    #[serde(default)]
    pub rhat_threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    schema_version: u32,
    tool: ToolInfo,
    scenario_names: Vec<&'a str>,
    config: &'a SimConfig,
    results: &'a PowerTable,
}

pub fn resolve(config: &SimulateFileConfig) -> Result<(Vec<ScenarioSpec>, SimConfig)> {
    let mut cfg = SimConfig::new(config.seed.unwrap_or(0));
    if let Some(r) = config.replicates {
        cfg.replicates = r;
    }
    if let Some(n) = config.n {
        cfg.n = n;
    }
    if let Some(f) = config.treatment_fraction {
        cfg.treatment_fraction = f;
    }
    if let Some(c) = config.chains {
        cfg.chains = c;
    }
    if let Some(w) = config.warmup {
        cfg.warmup = w;
    }
    if let Some(d) = config.draws_per_chain {
        cfg.draws_per_chain = d;
    }
    if let Some(t) = config.rhat_threshold {
        cfg.rhat_threshold = t;
    }
    if let Some(methods) = &config.methods {
        cfg.methods = methods
            .iter()
            .map(|m| {
                m.parse::<Method>()
                    .map_err(|_| CliError::schema(format!("unknown method: {m}")))
            })
            .collect::<Result<_>>()?;
        if cfg.methods.is_empty() {
            return Err(CliError::schema("the method list is empty"));
        }
    }

    let mut scenarios = Vec::new();
    for name in &config.scenarios {
        scenarios.push(find_scenario(name).map_err(|e| CliError::schema(e.to_string()))?);
    }
    if let Some(path) = &config.scenario_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::schema(format!("cannot read {}: {e}", path.display())))?;
        scenarios.extend(parse_scenarios(&text).map_err(|e| CliError::schema(e.to_string()))?);
    }
    if scenarios.is_empty() {
        return Err(CliError::schema(
            "no scenarios: list built-in names under \"scenarios\" or point \"scenario_file\" \
             at a scenario JSON",
        ));
    }
    Ok((scenarios, cfg))
}

pub fn run_simulate(config_path: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::schema(format!("cannot read {}: {e}", config_path.display())))?;
    let file_cfg: SimulateFileConfig =
        serde_json::from_str(&text).map_err(|e| CliError::schema(e.to_string()))?;
    let (scenarios, cfg) = resolve(&file_cfg)?;

    let table = run_study(&scenarios, &cfg)?;

    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("power.csv");
    let json_path = out_dir.join("power.json");
    std::fs::write(&csv_path, table.to_csv_string()?)?;
    let report = SimulateReport {
        schema_version: crate::report::REPORT_SCHEMA_VERSION,
        tool: ToolInfo::current(),
        scenario_names: scenarios.iter().map(|s| s.name.as_str()).collect(),
        config: &cfg,
        results: &table,
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::other(e.to_string()))?;
    json.push('\n');
    std::fs::write(&json_path, json)?;

    for row in &table.scenarios {
        for m in &row.methods {
            println!(
                "{} {}: rejection rate {:.3} (mc se {:.3}, {} used, {} failures)",
                row.scenario, m.method, m.rejection_rate, m.mc_se, m.used, m.failures
            );
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
