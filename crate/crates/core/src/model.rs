//! Hierarchical outcome model: model → app → scenario → configuration → rollouts.
//!
//! A leaf holds the ordered success/failure outcomes of repeated rollouts of
//! one (app, scenario, configuration) cell. Configurations are keyed by four
//! environmental axes; axes a benchmark does not vary carry the sentinel
//! value `"default"`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentinel value for environmental axes a record does not set.
pub const DEFAULT_AXIS_VALUE: &str = "default";

/// The four environmental axes a configuration can vary over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Instance,
    Profile,
    Theme,
    UiState,
}

impl Axis {
    /// All axes in canonical order.
    pub const ALL: [Axis; 4] = [Axis::Instance, Axis::Profile, Axis::Theme, Axis::UiState];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Instance => "instance",
            Axis::Profile => "profile",
            Axis::Theme => "theme",
            Axis::UiState => "ui_state",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::Instance => 0,
            Axis::Profile => 1,
            Axis::Theme => 2,
            Axis::UiState => 3,
        }
    }

    pub fn from_name(name: &str) -> Option<Axis> {
        Axis::ALL.iter().copied().find(|a| a.name() == name)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The set of environmental axes a dataset actually varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AxisMask([bool; 4]);

impl AxisMask {
    /// No axis enabled: every configuration collapses to the default key.
    pub fn none() -> Self {
        AxisMask([false; 4])
    }

    /// All four axes enabled.
    pub fn all() -> Self {
        AxisMask([true; 4])
    }

    pub fn from_axes(axes: &[Axis]) -> Self {
        let mut mask = [false; 4];
        for axis in axes {
            mask[axis.index()] = true;
        }
        AxisMask(mask)
    }

    pub fn enabled(&self, axis: Axis) -> bool {
        self.0[axis.index()]
    }

    pub fn axes(&self) -> Vec<Axis> {
        Axis::ALL.iter().copied().filter(|a| self.enabled(*a)).collect()
    }
}

impl Serialize for AxisMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.axes().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AxisMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let axes = Vec::<Axis>::deserialize(d)?;
        Ok(AxisMask::from_axes(&axes))
    }
}

/// Identifies one configuration cell: a value per environmental axis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigKey {
    pub instance: String,
    pub profile: String,
    pub theme: String,
    pub ui_state: String,
}

impl ConfigKey {
    /// The all-default key used when no axis is varied.
    pub fn default_key() -> Self {
        ConfigKey {
            instance: DEFAULT_AXIS_VALUE.into(),
            profile: DEFAULT_AXIS_VALUE.into(),
            theme: DEFAULT_AXIS_VALUE.into(),
            ui_state: DEFAULT_AXIS_VALUE.into(),
        }
    }

    pub fn get(&self, axis: Axis) -> &str {
        match axis {
            Axis::Instance => &self.instance,
            Axis::Profile => &self.profile,
            Axis::Theme => &self.theme,
            Axis::UiState => &self.ui_state,
        }
    }

    pub fn set(&mut self, axis: Axis, value: impl Into<String>) {
        let slot = match axis {
            Axis::Instance => &mut self.instance,
            Axis::Profile => &mut self.profile,
            Axis::Theme => &mut self.theme,
            Axis::UiState => &mut self.ui_state,
        };
        *slot = value.into();
    }

    /// Copy of this key with one axis replaced.
    pub fn with_axis(&self, axis: Axis, value: impl Into<String>) -> Self {
        let mut key = self.clone();
        key.set(axis, value);
        key
    }
}

impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.instance, self.profile, self.theme, self.ui_state
        )
    }
}

fn default_axis_value() -> String {
    DEFAULT_AXIS_VALUE.into()
}

/// One rollout outcome as it appears in an input line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub model: String,
    pub app: String,
    pub scenario: String,
    #[serde(default = "default_axis_value")]
    pub instance: String,
    #[serde(default = "default_axis_value")]
    pub profile: String,
    #[serde(default = "default_axis_value")]
    pub theme: String,
    #[serde(default = "default_axis_value")]
    pub ui_state: String,
    pub rollout: u32,
    #[serde(deserialize_with = "deserialize_flag")]
    pub success: bool,
}

impl OutcomeRecord {
    pub fn config_key(&self) -> ConfigKey {
        ConfigKey {
            instance: self.instance.clone(),
            profile: self.profile.clone(),
            theme: self.theme.clone(),
            ui_state: self.ui_state.clone(),
        }
    }
}

/// Accepts `true`/`false`, `1`/`0` (numeric or string) for the success flag.
fn deserialize_flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(i64),
        Text(String),
    }
    match Flag::deserialize(d)? {
        Flag::Bool(b) => Ok(b),
        Flag::Int(1) => Ok(true),
        Flag::Int(0) => Ok(false),
        Flag::Int(other) => Err(serde::de::Error::custom(format!(
            "success flag must be a boolean or 0/1, got {other}"
        ))),
        Flag::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(serde::de::Error::custom(format!(
                "success flag must be a boolean or 0/1, got '{other}'"
            ))),
        },
    }
}

/// Errors from building or querying the outcome model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no records")]
    EmptyDataset,
    #[error("conflicting duplicate record for {key} (both success and failure reported)")]
    ConflictingDuplicate { key: String },
    #[error("unknown app '{0}'")]
    UnknownApp(String),
    #[error("unknown scenario '{scenario}' in app '{app}'")]
    UnknownScenario { app: String, scenario: String },
    #[error("no outcomes recorded at {app}/{scenario}/{config}")]
    UnknownLeaf {
        app: String,
        scenario: String,
        config: String,
    },
    #[error("leaf outcome vector must be non-empty at {app}/{scenario}/{config}")]
    EmptyLeaf {
        app: String,
        scenario: String,
        config: String,
    },
}

/// Success count, trial count, and rate of one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeafRate {
    pub successes: u32,
    pub trials: u32,
    pub rate: f64,
}

/// Rollout outcomes of one configuration cell, ordered by rollout index.
pub type Leaf = Vec<bool>;

/// One scenario: its configuration cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    cells: BTreeMap<ConfigKey, Leaf>,
}

impl ScenarioData {
    pub fn cells(&self) -> &BTreeMap<ConfigKey, Leaf> {
        &self.cells
    }

    pub fn config_count(&self) -> usize {
        self.cells.len()
    }

    /// Sorted distinct values this scenario exhibits on `axis`.
    pub fn axis_values(&self, axis: Axis) -> Vec<&str> {
        let mut values: Vec<&str> = self.cells.keys().map(|k| k.get(axis)).collect();
        values.sort_unstable();
        values.dedup();
        values
    }

    /// Whether the observed cells form the full Cartesian product of the
    /// observed per-axis values.
    pub fn is_factorial(&self) -> bool {
        let product: usize = Axis::ALL
            .iter()
            .map(|&axis| self.axis_values(axis).len())
            .product();
        product == self.cells.len()
    }

    /// Pooled (successes, trials) over all cells.
    pub fn pooled_counts(&self) -> (u64, u64) {
        let mut successes = 0u64;
        let mut trials = 0u64;
        for outcomes in self.cells.values() {
            successes += outcomes.iter().filter(|&&s| s).count() as u64;
            trials += outcomes.len() as u64;
        }
        (successes, trials)
    }
}

/// One app: its scenarios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppData {
    scenarios: BTreeMap<String, ScenarioData>,
}

impl AppData {
    pub fn scenarios(&self) -> &BTreeMap<String, ScenarioData> {
        &self.scenarios
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioData> {
        self.scenarios.get(name)
    }

    pub fn scenario_count(&self) -> usize {
        self.scenarios.len()
    }

    /// Pooled (successes, trials) over all scenarios.
    pub fn pooled_counts(&self) -> (u64, u64) {
        let mut successes = 0u64;
        let mut trials = 0u64;
        for scenario in self.scenarios.values() {
            let (s, t) = scenario.pooled_counts();
            successes += s;
            trials += t;
        }
        (successes, trials)
    }
}

/// Outcome of validating a tree or an ingest pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    /// True when every leaf has the same rollout count.
    pub is_balanced: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
        self.is_balanced &= other.is_balanced;
    }
}

/// All outcomes of one model over a benchmark suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTree {
    model: String,
    axis_mask: AxisMask,
    apps: BTreeMap<String, AppData>,
}

impl BenchmarkTree {
    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn axis_mask(&self) -> AxisMask {
        self.axis_mask
    }

    pub fn apps(&self) -> &BTreeMap<String, AppData> {
        &self.apps
    }

    pub fn app_count(&self) -> usize {
        self.apps.len()
    }

    pub fn app(&self, name: &str) -> Result<&AppData, ModelError> {
        self.apps
            .get(name)
            .ok_or_else(|| ModelError::UnknownApp(name.to_string()))
    }

    pub fn leaf(
        &self,
        app: &str,
        scenario: &str,
        config: &ConfigKey,
    ) -> Result<&Leaf, ModelError> {
        let app_data = self.app(app)?;
        let scenario_data =
            app_data
                .scenario(scenario)
                .ok_or_else(|| ModelError::UnknownScenario {
                    app: app.to_string(),
                    scenario: scenario.to_string(),
                })?;
        scenario_data
            .cells
            .get(config)
            .ok_or_else(|| ModelError::UnknownLeaf {
                app: app.to_string(),
                scenario: scenario.to_string(),
                config: config.to_string(),
            })
    }

    /// Success count, trial count, and rate of one leaf.
    pub fn leaf_rate(
        &self,
        app: &str,
        scenario: &str,
        config: &ConfigKey,
    ) -> Result<LeafRate, ModelError> {
        let outcomes = self.leaf(app, scenario, config)?;
        let successes = outcomes.iter().filter(|&&s| s).count() as u32;
        let trials = outcomes.len() as u32;
        Ok(LeafRate {
            successes,
            trials,
            rate: f64::from(successes) / f64::from(trials),
        })
    }

    /// Total rollout count across all leaves.
    pub fn total_rollouts(&self) -> u64 {
        self.apps.values().map(|a| a.pooled_counts().1).sum()
    }

    /// Flattens the tree back into one record per rollout. Together with
    /// ingestion this round-trips exactly.
    pub fn to_records(&self) -> Vec<OutcomeRecord> {
        let mut records = Vec::new();
        for (app, app_data) in &self.apps {
            for (scenario, scenario_data) in &app_data.scenarios {
                for (key, outcomes) in &scenario_data.cells {
                    for (rollout, &success) in outcomes.iter().enumerate() {
                        records.push(OutcomeRecord {
                            model: self.model.clone(),
                            app: app.clone(),
                            scenario: scenario.clone(),
                            instance: key.instance.clone(),
                            profile: key.profile.clone(),
                            theme: key.theme.clone(),
                            ui_state: key.ui_state.clone(),
                            rollout: rollout as u32,
                            success,
                        });
                    }
                }
            }
        }
        records
    }

    /// Structural validation: empty apps/scenarios are errors, unbalanced
    /// rollout counts, non-factorial scenarios, and out-of-mask axis values
    /// are warnings or errors as appropriate.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            is_balanced: true,
            ..ValidationReport::default()
        };
        if self.apps.is_empty() {
            report.errors.push(format!("model '{}' has no apps", self.model));
        }
        let mut rollout_counts: Vec<usize> = Vec::new();
        for (app, app_data) in &self.apps {
            if app_data.scenarios.is_empty() {
                report.errors.push(format!("app '{app}' has no scenarios"));
            }
            for (scenario, scenario_data) in &app_data.scenarios {
                if scenario_data.cells.is_empty() {
                    report
                        .errors
                        .push(format!("scenario '{app}/{scenario}' has no configurations"));
                }
                if !scenario_data.is_factorial() {
                    report.warnings.push(format!(
                        "scenario '{app}/{scenario}' does not cover the full product of its observed axis values"
                    ));
                }
                for (key, outcomes) in &scenario_data.cells {
                    if outcomes.is_empty() {
                        report.errors.push(format!(
                            "leaf '{app}/{scenario}/{key}' has no rollouts"
                        ));
                    }
                    rollout_counts.push(outcomes.len());
                    for axis in Axis::ALL {
                        if !self.axis_mask.enabled(axis) && key.get(axis) != DEFAULT_AXIS_VALUE {
                            report.errors.push(format!(
                                "leaf '{app}/{scenario}/{key}' sets disabled axis '{axis}'"
                            ));
                        }
                    }
                }
            }
        }
        rollout_counts.sort_unstable();
        rollout_counts.dedup();
        if rollout_counts.len() > 1 {
            report.is_balanced = false;
            report.warnings.push(format!(
                "unbalanced rollout counts across leaves: {rollout_counts:?}"
            ));
        }
        report
    }
}

/// Incremental constructor for [`BenchmarkTree`].
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    model: String,
    axis_mask: AxisMask,
    apps: BTreeMap<String, AppData>,
}

impl TreeBuilder {
    pub fn new(model: impl Into<String>, axis_mask: AxisMask) -> Self {
        TreeBuilder {
            model: model.into(),
            axis_mask,
            apps: BTreeMap::new(),
        }
    }

    /// Appends one rollout outcome to a leaf (creating it if needed).
    pub fn push_outcome(
        &mut self,
        app: impl Into<String>,
        scenario: impl Into<String>,
        config: ConfigKey,
        success: bool,
    ) -> &mut Self {
        self.apps
            .entry(app.into())
            .or_default()
            .scenarios
            .entry(scenario.into())
            .or_default()
            .cells
            .entry(config)
            .or_default()
            .push(success);
        self
    }

    /// Replaces a whole leaf. Empty outcome vectors are rejected.
    pub fn set_leaf(
        &mut self,
        app: impl Into<String>,
        scenario: impl Into<String>,
        config: ConfigKey,
        outcomes: Vec<bool>,
    ) -> Result<&mut Self, ModelError> {
        let app = app.into();
        let scenario = scenario.into();
        if outcomes.is_empty() {
            return Err(ModelError::EmptyLeaf {
                app,
                scenario,
                config: config.to_string(),
            });
        }
        self.apps
            .entry(app)
            .or_default()
            .scenarios
            .entry(scenario)
            .or_default()
            .cells
            .insert(config, outcomes);
        Ok(self)
    }

    /// Creates an app node even if no outcomes follow (surfaces in validate).
    pub fn touch_app(&mut self, app: impl Into<String>) -> &mut Self {
        self.apps.entry(app.into()).or_default();
        self
    }

    /// Creates a scenario node even if no outcomes follow.
    pub fn touch_scenario(
        &mut self,
        app: impl Into<String>,
        scenario: impl Into<String>,
    ) -> &mut Self {
        self.apps
            .entry(app.into())
            .or_default()
            .scenarios
            .entry(scenario.into())
            .or_default();
        self
    }

    pub fn build(self) -> BenchmarkTree {
        BenchmarkTree {
            model: self.model,
            axis_mask: self.axis_mask,
            apps: self.apps,
        }
    }
}
