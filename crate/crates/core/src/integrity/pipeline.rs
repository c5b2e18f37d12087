//! End-to-end integrity pipeline: which profiles can host which task
//! instances (feasibility), and which pairings are already solved in the
//! initial state (triviality).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::integrity::constraint::{derive_constraints, eval_constraint, Constraint};
use crate::integrity::predicate::{eval_predicate, parse_predicate};
use crate::integrity::store::ProfileStore;
use crate::integrity::IntegrityError;

/// One task instance: parameters, mockdata (possibly holding templates),
/// explicit constraints, and an optional verification predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub mockdata: serde_json::Value,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub predicate: Option<String>,
}

impl InstanceSpec {
    /// Loads either a single instance object or an array of them.
    pub fn load_many(path: impl AsRef<Path>) -> Result<Vec<InstanceSpec>, IntegrityError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IntegrityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let json: serde_json::Value = serde_json::from_str(&text)?;
        if json.is_array() {
            Ok(serde_json::from_value(json)?)
        } else {
            Ok(vec![serde_json::from_value(json)?])
        }
    }

    /// Explicit constraints plus the ones derived from mockdata templates,
    /// skipping derived constraints the explicit list already states.
    pub fn all_constraints(&self) -> Vec<Constraint> {
        let mut constraints = self.constraints.clone();
        for derived in derive_constraints(&self.mockdata) {
            if !constraints.contains(&derived) {
                constraints.push(derived);
            }
        }
        constraints
    }
}

/// Outcome of one instance × profile pairing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub feasible: bool,
    /// Display form of each failed constraint.
    pub failed: Vec<String>,
}

/// Instance × profile feasibility, row-major by instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityMatrix {
    pub instances: Vec<String>,
    pub profiles: Vec<String>,
    pub cells: Vec<Vec<CellOutcome>>,
    pub warnings: Vec<String>,
}

impl FeasibilityMatrix {
    pub fn cell(&self, instance: usize, profile: usize) -> &CellOutcome {
        &self.cells[instance][profile]
    }

    /// Per-instance list of compatible profile ids.
    pub fn compatible(&self, instance: usize) -> Vec<&str> {
        self.cells[instance]
            .iter()
            .zip(&self.profiles)
            .filter(|(cell, _)| cell.feasible)
            .map(|(_, profile)| profile.as_str())
            .collect()
    }
}

/// Evaluates every instance's explicit and derived constraints against
/// every profile. A cell is feasible when all constraints hold.
pub fn feasibility_matrix(
    instances: &[InstanceSpec],
    profiles: &[ProfileStore],
) -> Result<FeasibilityMatrix, IntegrityError> {
    let mut cells = Vec::with_capacity(instances.len());
    let mut warnings = Vec::new();
    for instance in instances {
        let constraints = instance.all_constraints();
        let mut row = Vec::with_capacity(profiles.len());
        for profile in profiles {
            let mut failed = Vec::new();
            for constraint in &constraints {
                let outcome = eval_constraint(constraint, profile, &instance.params)?;
                warnings.extend(
                    outcome
                        .warnings
                        .into_iter()
                        .map(|w| format!("instance '{}': {w}", instance.id)),
                );
                if !outcome.satisfied {
                    failed.push(constraint.to_string());
                }
            }
            row.push(CellOutcome {
                feasible: failed.is_empty(),
                failed,
            });
        }
        cells.push(row);
    }
    Ok(FeasibilityMatrix {
        instances: instances.iter().map(|i| i.id.clone()).collect(),
        profiles: profiles.iter().map(|p| p.profile_id.clone()).collect(),
        cells,
        warnings,
    })
}

/// Which instance × profile pairings are excluded because the verification
/// predicate already holds on the initial store.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivialityReport {
    pub instances: Vec<String>,
    pub profiles: Vec<String>,
    /// Pairings excluded as already solved, as (instance, profile).
    pub trivial: Vec<(String, String)>,
    /// Pairings whose predicate is still unmet (or absent).
    pub survivors: Vec<(String, String)>,
}

/// A pairing survives iff its predicate evaluates false on the initial
/// store; instances without a predicate always survive. Predicate parse
/// failures are hard errors.
pub fn triviality_filter(
    instances: &[InstanceSpec],
    profiles: &[ProfileStore],
) -> Result<TrivialityReport, IntegrityError> {
    let mut trivial = Vec::new();
    let mut survivors = Vec::new();
    for instance in instances {
        let ast = instance
            .predicate
            .as_deref()
            .map(parse_predicate)
            .transpose()?;
        for profile in profiles {
            let solved = match &ast {
                None => false,
                Some(ast) => eval_predicate(ast, profile)?,
            };
            let pairing = (instance.id.clone(), profile.profile_id.clone());
            if solved {
                trivial.push(pairing);
            } else {
                survivors.push(pairing);
            }
        }
    }
    Ok(TrivialityReport {
        instances: instances.iter().map(|i| i.id.clone()).collect(),
        profiles: profiles.iter().map(|p| p.profile_id.clone()).collect(),
        trivial,
        survivors,
    })
}
