//! Feasibility constraints a profile store must satisfy before a task
//! instance can run against it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::integrity::store::{ProfileStore, Record};
use crate::integrity::template::{find_templates, parse_template};
use crate::integrity::value::Value;
use crate::integrity::IntegrityError;

/// Comparison operator, written with its usual symbol in serialized form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Ge => ">=",
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Gt => ">",
            Cmp::Lt => "<",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Cmp> {
        Some(match symbol {
            ">=" => Cmp::Ge,
            "<=" => Cmp::Le,
            "=" => Cmp::Eq,
            ">" => Cmp::Gt,
            "<" => Cmp::Lt,
            _ => return None,
        })
    }

    pub fn holds(self, ordering: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Cmp::Ge => ordering != Less,
            Cmp::Le => ordering != Greater,
            Cmp::Eq => ordering == Equal,
            Cmp::Gt => ordering == Greater,
            Cmp::Lt => ordering == Less,
        }
    }

    /// NaN on either side fails every comparison.
    pub fn holds_f64(self, lhs: f64, rhs: f64) -> bool {
        lhs.partial_cmp(&rhs).is_some_and(|ord| self.holds(ord))
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// One field comparison inside a constraint's record filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCond {
    pub field: String,
    pub cmp: Cmp,
    pub value: Value,
}

impl FieldCond {
    pub fn matches(&self, record: &Record) -> bool {
        record
            .get(&self.field)
            .and_then(|v| v.compare(&self.value))
            .is_some_and(|ord| self.cmp.holds(ord))
    }
}

pub(crate) fn record_matches(record: &Record, filter: &[FieldCond]) -> bool {
    filter.iter().all(|cond| cond.matches(record))
}

/// A numeric threshold, either literal or naming an instance parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintValue {
    Num(f64),
    Ref(String),
}

impl ConstraintValue {
    /// Looks the threshold up in the instance parameters when it is a
    /// reference.
    pub fn resolve(
        &self,
        params: &BTreeMap<String, serde_json::Value>,
    ) -> Result<f64, IntegrityError> {
        match self {
            ConstraintValue::Num(n) => Ok(*n),
            ConstraintValue::Ref(name) => {
                let value = params
                    .get(name)
                    .ok_or_else(|| IntegrityError::MissingParam(name.clone()))?;
                value
                    .as_f64()
                    .ok_or_else(|| IntegrityError::BadParam(name.clone()))
            }
        }
    }
}

impl fmt::Display for ConstraintValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintValue::Num(n) => write!(f, "{n}"),
            ConstraintValue::Ref(name) => write!(f, "${name}"),
        }
    }
}

fn default_min_count() -> u64 {
    1
}

/// A machine-checkable precondition on a profile store. Filters narrow the
/// records considered; counts and the balance aggregate run over the
/// filtered set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// At least `min_count` matching rows exist.
    EntityExists {
        table: String,
        #[serde(default = "default_min_count")]
        min_count: u64,
        #[serde(default)]
        filter: Vec<FieldCond>,
    },
    /// Matching row count compares as stated.
    DataVolume {
        table: String,
        cmp: Cmp,
        count: u64,
        #[serde(default)]
        filter: Vec<FieldCond>,
    },
    /// Sum of a numeric field over matching rows compares against a
    /// threshold (single-row tables reduce to that row's value).
    Balance {
        table: String,
        field: String,
        cmp: Cmp,
        threshold: ConstraintValue,
        #[serde(default)]
        filter: Vec<FieldCond>,
    },
    /// At most `limit` matching rows exist.
    MaxCount {
        table: String,
        limit: u64,
        #[serde(default)]
        filter: Vec<FieldCond>,
    },
}

impl Constraint {
    pub fn table(&self) -> &str {
        match self {
            Constraint::EntityExists { table, .. }
            | Constraint::DataVolume { table, .. }
            | Constraint::Balance { table, .. }
            | Constraint::MaxCount { table, .. } => table,
        }
    }

    fn filter(&self) -> &[FieldCond] {
        match self {
            Constraint::EntityExists { filter, .. }
            | Constraint::DataVolume { filter, .. }
            | Constraint::Balance { filter, .. }
            | Constraint::MaxCount { filter, .. } => filter,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::EntityExists {
                table, min_count, ..
            } => write!(f, "entity_exists({table} >= {min_count})")?,
            Constraint::DataVolume {
                table, cmp, count, ..
            } => write!(f, "data_volume({table} {cmp} {count})")?,
            Constraint::Balance {
                table,
                field,
                cmp,
                threshold,
                ..
            } => write!(f, "balance({table}.{field} {cmp} {threshold})")?,
            Constraint::MaxCount { table, limit, .. } => {
                write!(f, "max_count({table} <= {limit})")?
            }
        }
        if !self.filter().is_empty() {
            let conds: Vec<String> = self
                .filter()
                .iter()
                .map(|c| format!("{} {} {}", c.field, c.cmp, c.value))
                .collect();
            write!(f, " where {}", conds.join(" and "))?;
        }
        Ok(())
    }
}

/// Whether one constraint holds on one store, plus anything worth flagging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutcome {
    pub satisfied: bool,
    pub warnings: Vec<String>,
}

impl EvalOutcome {
    fn ok(satisfied: bool) -> EvalOutcome {
        EvalOutcome {
            satisfied,
            warnings: Vec::new(),
        }
    }
}

/// Evaluates a constraint against one store. A referenced table that does
/// not exist fails the constraint with a warning — absence is itself an
/// integrity gap. Unresolvable parameter references are hard errors.
pub fn eval_constraint(
    constraint: &Constraint,
    store: &ProfileStore,
    params: &BTreeMap<String, serde_json::Value>,
) -> Result<EvalOutcome, IntegrityError> {
    let table = constraint.table();
    let Some(records) = store.table(table) else {
        return Ok(EvalOutcome {
            satisfied: false,
            warnings: vec![format!(
                "profile '{}': table '{table}' is absent",
                store.profile_id
            )],
        });
    };
    let matching: Vec<&Record> = records
        .iter()
        .filter(|r| record_matches(r, constraint.filter()))
        .collect();
    match constraint {
        Constraint::EntityExists { min_count, .. } => {
            Ok(EvalOutcome::ok(matching.len() as u64 >= *min_count))
        }
        Constraint::DataVolume { cmp, count, .. } => {
            Ok(EvalOutcome::ok(cmp.holds_f64(matching.len() as f64, *count as f64)))
        }
        Constraint::MaxCount { limit, .. } => {
            Ok(EvalOutcome::ok(matching.len() as u64 <= *limit))
        }
        Constraint::Balance {
            field,
            cmp,
            threshold,
            ..
        } => {
            let target = threshold.resolve(params)?;
            let mut warnings = Vec::new();
            let mut sum = 0.0;
            let mut numeric = 0usize;
            for record in &matching {
                match record.get(field) {
                    Some(value) => match value.as_num() {
                        Some(n) => {
                            sum += n;
                            numeric += 1;
                        }
                        None => warnings.push(format!(
                            "profile '{}': {table}.{field} has non-numeric value '{value}'",
                            store.profile_id
                        )),
                    },
                    None => warnings.push(format!(
                        "profile '{}': a '{table}' record lacks field '{field}'",
                        store.profile_id
                    )),
                }
            }
            if numeric == 0 {
                warnings.push(format!(
                    "profile '{}': no numeric '{table}.{field}' values to balance",
                    store.profile_id
                ));
                return Ok(EvalOutcome {
                    satisfied: false,
                    warnings,
                });
            }
            Ok(EvalOutcome {
                satisfied: cmp.holds_f64(sum, target),
                warnings,
            })
        }
    }
}

/// Scans mockdata for selection templates and derives one
/// `EntityExists(table, 1)` per distinct table, filters dropped.
pub fn derive_constraints(mockdata: &serde_json::Value) -> Vec<Constraint> {
    let mut tables = BTreeSet::new();
    collect_tables(mockdata, &mut tables);
    tables
        .into_iter()
        .map(|table| Constraint::EntityExists {
            table,
            min_count: 1,
            filter: Vec::new(),
        })
        .collect()
}

fn collect_tables(json: &serde_json::Value, tables: &mut BTreeSet<String>) {
    match json {
        serde_json::Value::String(text) => {
            for token in find_templates(text) {
                if let Ok(expr) = parse_template(&token) {
                    if let Some(table) = expr.table() {
                        tables.insert(table);
                    }
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                collect_tables(item, tables);
            }
        }
        serde_json::Value::Object(map) => {
            for value in map.values() {
                collect_tables(value, tables);
            }
        }
        _ => {}
    }
}
