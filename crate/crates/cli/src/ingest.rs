//! CSV ingestion: maps a header-labeled trial export onto the typed dataset
//! the estimators consume, and exports it back out losslessly.

use std::collections::BTreeSet;
use std::path::Path;

use ordsum::ppo::{Arm, TrialDataset, TrialRecord};

use crate::error::{CliError, Result};

/// Which columns hold what, plus the label dictionaries.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub outcome: String,
    pub arm: String,
    pub control_label: String,
    /// Ordered outcome labels (best to worst). When absent, the outcome
    /// column must hold integer levels 1..K.
    pub levels: Option<Vec<String>>,
    /// Numeric covariate columns, in model order.
    pub covariates: Vec<String>,
}

/// A dataset together with the label dictionaries needed to print or
/// re-export it.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedData {
    pub dataset: TrialDataset,
    /// Ordered outcome labels, index = 0-based level.
    pub level_labels: Vec<String>,
    pub control_label: String,
    pub treatment_label: String,
}

impl IngestedData {
    pub fn n_in_arm(&self, arm: Arm) -> usize {
        self.dataset
            .records()
            .iter()
            .filter(|r| r.arm == arm)
            .count()
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::schema(format!("column '{name}' not found in the CSV header")))
}

/// Reads a trial CSV into a dataset.
///
/// Arm labels are arbitrary strings; the control label is given explicitly
/// and exactly one other label must appear. Outcomes are either mapped
/// through the ordered `levels` list or parsed as integer levels 1..K.
pub fn read_trial_csv(path: &Path, spec: &ColumnSpec) -> Result<IngestedData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::schema(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();

    let outcome_col = column_index(&headers, &spec.outcome)?;
    let arm_col = column_index(&headers, &spec.arm)?;
    let covariate_cols: Vec<usize> = spec
        .covariates
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;

    // First pass: collect raw rows so level bounds can be validated before
    // records are built.
    let mut raw: Vec<(String, String, Vec<f64>)> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2; // 1-based, after the header
        let outcome = row
            .get(outcome_col)
            .ok_or_else(|| CliError::schema(format!("line {line}: missing outcome field")))?
            .to_string();
        let arm = row
            .get(arm_col)
            .ok_or_else(|| CliError::schema(format!("line {line}: missing arm field")))?
            .to_string();
        let mut covs = Vec::with_capacity(covariate_cols.len());
        for (&col, name) in covariate_cols.iter().zip(&spec.covariates) {
            let field = row
                .get(col)
                .ok_or_else(|| CliError::schema(format!("line {line}: missing '{name}' field")))?;
            let value: f64 = field.parse().map_err(|_| {
                CliError::schema(format!(
                    "line {line}: covariate '{name}' value '{field}' is not numeric"
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::schema(format!(
                    "line {line}: covariate '{name}' value '{field}' is not finite"
                )));
            }
            covs.push(value);
        }
        raw.push((outcome, arm, covs));
    }
    if raw.is_empty() {
        return Err(CliError::schema("the CSV holds no data rows"));
    }

    // Outcome mapping.
    type LevelMapper = Box<dyn Fn(&str) -> Result<usize>>;
    let (level_labels, level_of): (Vec<String>, LevelMapper) =
        match &spec.levels {
            Some(labels) => {
                if labels.len() < 2 {
                    return Err(CliError::schema(
                        "--levels must list at least two ordered outcome labels",
                    ));
                }
                let unique: BTreeSet<&String> = labels.iter().collect();
                if unique.len() != labels.len() {
                    return Err(CliError::schema("--levels contains a repeated label"));
                }
                let labels = labels.clone();
                let lookup = labels.clone();
                (
                    labels,
                    Box::new(move |s: &str| {
                        lookup.iter().position(|l| l == s).ok_or_else(|| {
                            CliError::UnmappedOutcome(format!(
                                "outcome label '{s}' is not in the --levels list"
                            ))
                        })
                    }),
                )
            }
            None => {
                let mut max_level = 0i64;
                for (outcome, _, _) in &raw {
                    let v: i64 = outcome.parse().map_err(|_| {
                        CliError::UnmappedOutcome(format!(
                            "outcome '{outcome}' is not an integer level; pass --levels to map labels"
                        ))
                    })?;
                    if v < 1 {
                        return Err(CliError::UnmappedOutcome(format!(
                            "outcome level {v} is outside 1..K"
                        )));
                    }
                    max_level = max_level.max(v);
                }
                if max_level < 2 {
                    return Err(CliError::schema(
                        "the outcome column never exceeds level 1, so there is no ordinal scale",
                    ));
                }
                let labels: Vec<String> = (1..=max_level).map(|v| v.to_string()).collect();
                (
                    labels,
                    Box::new(move |s: &str| {
                        let v: i64 = s.parse().map_err(|_| {
                            CliError::UnmappedOutcome(format!("outcome '{s}' is not an integer level"))
                        })?;
                        if v < 1 || v > max_level {
                            return Err(CliError::UnmappedOutcome(format!(
                                "outcome level {v} is outside 1..{max_level}"
                            )));
                        }
                        Ok((v - 1) as usize)
                    }),
                )
            }
        };

    // Arm mapping.
    let mut other_labels: BTreeSet<String> = BTreeSet::new();
    let mut control_seen = false;
    for (_, arm, _) in &raw {
        if *arm == spec.control_label {
            control_seen = true;
        } else {
            other_labels.insert(arm.clone());
        }
    }
    if !control_seen {
        return Err(CliError::schema(format!(
            "control label '{}' never appears in the arm column",
            spec.control_label
        )));
    }
    let treatment_label = match other_labels.len() {
        0 => {
            return Err(CliError::schema(
                "only the control label appears in the arm column; a treatment arm is required",
            ))
        }
        1 => other_labels.into_iter().next().unwrap(),
        n => {
            return Err(CliError::schema(format!(
                "expected exactly two arm labels, found {} besides the control label",
                n
            )))
        }
    };

    let records: Vec<TrialRecord> = raw
        .iter()
        .map(|(outcome, arm, covs)| {
            Ok(TrialRecord {
                arm: if *arm == spec.control_label {
                    Arm::Control
                } else {
                    Arm::Treatment
                },
                level: level_of(outcome)?,
                covariates: covs.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let dataset = TrialDataset::new(level_labels.len(), spec.covariates.len(), records)
        .map_err(|e| CliError::schema(e.to_string()))?;
    Ok(IngestedData {
        dataset,
        level_labels,
        control_label: spec.control_label.clone(),
        treatment_label,
    })
}

/// Exports an ingested dataset back to CSV with the same label dictionaries,
/// so that re-ingesting the file reproduces the dataset exactly.
pub fn write_trial_csv(path: &Path, data: &IngestedData, spec: &ColumnSpec) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::other(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec![spec.outcome.clone(), spec.arm.clone()];
    header.extend(spec.covariates.iter().cloned());
    writer.write_record(&header)?;
    for record in data.dataset.records() {
        let mut row = vec![
            data.level_labels[record.level].clone(),
            match record.arm {
                Arm::Control => data.control_label.clone(),
                Arm::Treatment => data.treatment_label.clone(),
            },
        ];
        // `{}` prints the shortest representation that parses back to the
        // same f64, which is what makes the round-trip exact.
        row.extend(record.covariates.iter().map(|v| format!("{v}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
