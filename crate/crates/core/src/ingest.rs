//! Ingestion of rollout outcome files (JSONL or CSV) into [`BenchmarkTree`]s.
//!
//! Format is sniffed from content: a first non-whitespace byte of `{` means
//! JSON Lines, anything else is parsed as headered CSV. Records for multiple
//! models may be interleaved; one tree per model comes back, keyed by model
//! name.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{
    Axis, AxisMask, BenchmarkTree, ConfigKey, ModelError, OutcomeRecord, TreeBuilder,
    ValidationReport, DEFAULT_AXIS_VALUE,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("input contains no records")]
    Empty,
    #[error(
        "conflicting duplicate at line {line}: {key} already recorded with the opposite outcome"
    )]
    ConflictingDuplicate { line: usize, key: String },
}

/// Result of one ingest pass: per-model trees plus a validation report.
#[derive(Debug)]
pub struct IngestOutput {
    pub trees: BTreeMap<String, BenchmarkTree>,
    pub report: ValidationReport,
    /// Records accepted after deduplication.
    pub record_count: usize,
}

/// Reads a file, sniffing JSONL vs CSV from its first non-whitespace byte.
pub fn ingest_path(path: impl AsRef<Path>) -> Result<IngestOutput, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_str(&text)
}

/// Ingests from an in-memory string, sniffing the format.
pub fn ingest_str(text: &str) -> Result<IngestOutput, IngestError> {
    let first = text.trim_start().chars().next();
    let records = match first {
        None => return Err(IngestError::Empty),
        Some('{') => parse_jsonl(text)?,
        Some(_) => parse_csv(text)?,
    };
    build_trees(records)
}

/// Parses JSON Lines: one record object per non-empty line.
pub fn parse_jsonl(text: &str) -> Result<Vec<OutcomeRecord>, IngestError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: OutcomeRecord =
            serde_json::from_str(line).map_err(|e| IngestError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Parses headered CSV. Missing axis columns default to `"default"`.
pub fn parse_csv(text: &str) -> Result<Vec<OutcomeRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (idx, row) in reader.deserialize::<OutcomeRecord>().enumerate() {
        let record = row.map_err(|e| IngestError::Parse {
            line: idx + 2, // header occupies line 1
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Assembles parsed records into per-model trees.
///
/// Duplicate (model, app, scenario, config, rollout) keys: identical outcomes
/// are dropped with a warning, conflicting outcomes are a hard error. Axis
/// masks are inferred per model from the values actually seen.
pub fn build_trees(records: Vec<OutcomeRecord>) -> Result<IngestOutput, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Empty);
    }

    let mut report = ValidationReport {
        is_balanced: true,
        ..ValidationReport::default()
    };

    // (model, app, scenario, config, rollout) -> (first line, outcome)
    type SlotKey = (String, String, String, ConfigKey, u32);
    let mut seen: BTreeMap<SlotKey, (usize, bool)> = BTreeMap::new();
    let mut deduped: Vec<OutcomeRecord> = Vec::with_capacity(records.len());
    for (idx, record) in records.into_iter().enumerate() {
        let line = idx + 1;
        let key = (
            record.model.clone(),
            record.app.clone(),
            record.scenario.clone(),
            record.config_key(),
            record.rollout,
        );
        match seen.get(&key) {
            Some(&(first_line, outcome)) => {
                let name = format!(
                    "{}/{}/{}/{}#{}",
                    key.0, key.1, key.2, key.3, key.4
                );
                if outcome == record.success {
                    report.warnings.push(format!(
                        "dropped exact duplicate of {name} (first seen at record {first_line})"
                    ));
                } else {
                    return Err(IngestError::ConflictingDuplicate { line, key: name });
                }
            }
            None => {
                seen.insert(key, (line, record.success));
                deduped.push(record);
            }
        }
    }

    // Axis masks per model: an axis is enabled if any record sets it to a
    // non-default value.
    let mut masks: BTreeMap<String, [bool; 4]> = BTreeMap::new();
    for record in &deduped {
        let mask = masks.entry(record.model.clone()).or_default();
        let key = record.config_key();
        for axis in Axis::ALL {
            if key.get(axis) != DEFAULT_AXIS_VALUE {
                mask[axis.index()] = true;
            }
        }
    }

    let record_count = deduped.len();
    let mut builders: BTreeMap<String, TreeBuilder> = BTreeMap::new();

    // Leaves are filled in rollout-index order so that to_records round-trips.
    deduped.sort_by(|a, b| {
        (&a.model, &a.app, &a.scenario, a.config_key(), a.rollout).cmp(&(
            &b.model,
            &b.app,
            &b.scenario,
            b.config_key(),
            b.rollout,
        ))
    });

    for record in deduped {
        let mask = masks[&record.model];
        let axes: Vec<Axis> = Axis::ALL
            .iter()
            .copied()
            .filter(|a| mask[a.index()])
            .collect();
        let key = record.config_key();
        builders
            .entry(record.model.clone())
            .or_insert_with(|| TreeBuilder::new(record.model.clone(), AxisMask::from_axes(&axes)))
            .push_outcome(record.app, record.scenario, key, record.success);
    }

    let mut trees = BTreeMap::new();
    for (model, builder) in builders {
        let tree = builder.build();
        report.merge(tree.validate());
        trees.insert(model, tree);
    }

    Ok(IngestOutput {
        trees,
        report,
        record_count,
    })
}
