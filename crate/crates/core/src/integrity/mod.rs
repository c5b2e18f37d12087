//! Environment integrity pipeline for profile-backed task stores: typed
//! values, mock-data templates, feasibility constraints, and triviality
//! predicates.

pub mod constraint;
pub mod pipeline;
pub mod predicate;
pub mod store;
pub mod template;
pub mod value;

pub use constraint::{derive_constraints, eval_constraint, Cmp, Constraint, ConstraintValue, EvalOutcome};
pub use pipeline::{
    feasibility_matrix, triviality_filter, CellOutcome, FeasibilityMatrix, InstanceSpec,
    TrivialityReport,
};
pub use predicate::{eval_predicate, parse_predicate, Cond, PredicateAst, Subject};
pub use store::{ProfileStore, Record};
pub use template::{find_templates, parse_template, pluralize, resolve_templates, Position, TemplateExpr};
pub use value::Value;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error("store '{store}': {message}")]
    BadStore { store: String, message: String },
    #[error("template '{token}': {message}")]
    BadTemplate { token: String, message: String },
    #[error("predicate parse error at byte {position}: {message}")]
    PredicateParse { position: usize, message: String },
    #[error("missing parameter '{0}'")]
    MissingParam(String),
    #[error("parameter '{0}' must be numeric")]
    BadParam(String),
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
