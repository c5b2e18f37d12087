//! Hierarchical bootstrap over the app → scenario → configuration → rollout
//! tree.
//!
//! Apps are fixed strata and are never resampled; uncertainty enters through
//! three optional rungs below them. Within one replicate each distinct node is
//! redrawn once and reused wherever resampling multiplicity lands on it:
//!
//! * scenarios: draw S slots with replacement over an app's S scenarios;
//! * configuration axes: redraw each axis's value list with replacement and
//!   form cell multiplicities from the product of per-axis counts (or redraw
//!   whole cells under [`AxisMechanics::FlatCells`]);
//! * rollouts: one Binomial(n, observed rate) success-count redraw per
//!   distinct cell, shared across that cell's multiplicity.
//!
//! Degenerate stages consume no randomness: an axis with one observed value,
//! a scenario list of length one, or a disabled rung leave their substream
//! untouched, so enabling a rung that has nothing to resample reproduces the
//! smaller ladder bit for bit.
//!
//! Every replicate derives its own RNG substreams from (seed, replicate
//! index, app index, rung), so results are independent of thread count and
//! the first B replicates of a longer run equal a run of length B.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    app_mean, trimmed_mean_of_sorted, ConfidenceInterval, ConfidenceLevel, IntervalMethod,
    PoolingMode, StatsError,
};
use crate::model::{BenchmarkTree, ModelError};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("replicate count must be positive")]
    NoReplicates,
    #[error("tree has no apps")]
    EmptyTree,
    #[error("leaf at {0} has no rollouts")]
    EmptyLeaf(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which levels of the hierarchy are resampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleLadder {
    pub scenarios: bool,
    pub config_axes: bool,
    pub rollouts: bool,
}

impl ResampleLadder {
    /// All three rungs: the recommended default.
    pub fn full() -> Self {
        ResampleLadder {
            scenarios: true,
            config_axes: true,
            rollouts: true,
        }
    }

    pub fn rollouts_only() -> Self {
        ResampleLadder {
            scenarios: false,
            config_axes: false,
            rollouts: true,
        }
    }

    pub fn rollouts_and_axes() -> Self {
        ResampleLadder {
            scenarios: false,
            config_axes: true,
            rollouts: true,
        }
    }

    pub fn scenarios_and_rollouts() -> Self {
        ResampleLadder {
            scenarios: true,
            config_axes: false,
            rollouts: true,
        }
    }

    /// Human-readable rung list, e.g. `scenarios+axes+rollouts`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.scenarios {
            parts.push("scenarios");
        }
        if self.config_axes {
            parts.push("axes");
        }
        if self.rollouts {
            parts.push("rollouts");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}

impl Default for ResampleLadder {
    fn default() -> Self {
        ResampleLadder::full()
    }
}

/// How the configuration rung resamples a scenario's cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisMechanics {
    /// Resample each axis's observed value list independently; a cell's
    /// multiplicity is the product of its values' counts.
    #[default]
    ValueProduct,
    /// Resample the flat cell list with replacement, ignoring axis structure.
    FlatCells,
}

/// The suite-level statistic recomputed on every replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteStatistic {
    #[default]
    Mean,
    TrimmedMean(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub ladder: ResampleLadder,
    pub replicates: usize,
    pub level: ConfidenceLevel,
    pub seed: u64,
    pub statistic: SuiteStatistic,
    pub mechanics: AxisMechanics,
    pub pooling: PoolingMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            ladder: ResampleLadder::full(),
            replicates: 500,
            level: ConfidenceLevel::ninety_five(),
            seed: 0,
            statistic: SuiteStatistic::Mean,
            mechanics: AxisMechanics::ValueProduct,
            pooling: PoolingMode::RolloutWeighted,
        }
    }
}

/// A percentile interval plus the replicate values it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub interval: ConfidenceInterval,
    /// Suite statistic per replicate, in replicate order.
    pub replicates: Vec<f64>,
    /// Times a non-factorial scenario exhausted its redraw budget and fell
    /// back to the observed cells.
    pub degenerate_fallbacks: u64,
}

// ---------------------------------------------------------------------------
// Flattened views of the tree, prepared once per bootstrap call.

struct CellView {
    successes: u64,
    trials: u64,
    /// Index of this cell's value within the scenario's per-axis value list.
    axis_value_idx: [usize; 4],
}

struct ScenView {
    cells: Vec<CellView>,
    /// Distinct observed values per axis.
    axis_value_counts: [usize; 4],
}

struct AppView {
    name: String,
    scenarios: Vec<ScenView>,
}

fn build_views(tree: &BenchmarkTree) -> Result<Vec<AppView>, BootstrapError> {
    let mut views = Vec::with_capacity(tree.app_count());
    for (app_name, app) in tree.apps() {
        let mut scenarios = Vec::with_capacity(app.scenario_count());
        for (scen_name, scen) in app.scenarios() {
            let mut value_lists: [Vec<&str>; 4] = Default::default();
            for (axis_idx, axis) in crate::model::Axis::ALL.iter().enumerate() {
                value_lists[axis_idx] = scen.axis_values(*axis);
            }
            let mut cells = Vec::with_capacity(scen.config_count());
            for (key, outcomes) in scen.cells() {
                if outcomes.is_empty() {
                    return Err(BootstrapError::EmptyLeaf(format!(
                        "{app_name}/{scen_name}/{key}"
                    )));
                }
                let mut axis_value_idx = [0usize; 4];
                for (axis_idx, axis) in crate::model::Axis::ALL.iter().enumerate() {
                    axis_value_idx[axis_idx] = value_lists[axis_idx]
                        .binary_search(&key.get(*axis))
                        .expect("every cell value appears in the axis value list");
                }
                cells.push(CellView {
                    successes: outcomes.iter().filter(|&&s| s).count() as u64,
                    trials: outcomes.len() as u64,
                    axis_value_idx,
                });
            }
            scenarios.push(ScenView {
                cells,
                axis_value_counts: [
                    value_lists[0].len(),
                    value_lists[1].len(),
                    value_lists[2].len(),
                    value_lists[3].len(),
                ],
            });
        }
        views.push(AppView {
            name: app_name.clone(),
            scenarios,
        });
    }
    Ok(views)
}

// ---------------------------------------------------------------------------
// One replicate of one app.

const MAX_AXIS_REDRAWS: usize = 100;

/// Per-axis value redraw; multiplicities are products of per-axis counts.
/// Axes with one observed value consume no randomness. Non-factorial
/// scenarios can land every count on unobserved combinations; retry up to
/// [`MAX_AXIS_REDRAWS`] times, then fall back to the observed cells.
fn value_product_multiplicities<R: Rng>(
    scen: &ScenView,
    rng: &mut R,
    fallbacks: &mut u64,
) -> Vec<u64> {
    let mut counts: [Vec<u64>; 4] = Default::default();
    for _ in 0..MAX_AXIS_REDRAWS {
        for (slot, &v) in counts.iter_mut().zip(&scen.axis_value_counts) {
            slot.clear();
            slot.resize(v, 0);
            if v == 1 {
                slot[0] = 1;
            } else {
                for _ in 0..v {
                    slot[rng.random_range(0..v)] += 1;
                }
            }
        }
        let mults: Vec<u64> = scen
            .cells
            .iter()
            .map(|cell| {
                (0..4)
                    .map(|axis_idx| counts[axis_idx][cell.axis_value_idx[axis_idx]])
                    .product()
            })
            .collect();
        if mults.iter().any(|&m| m > 0) {
            return mults;
        }
    }
    *fallbacks += 1;
    vec![1; scen.cells.len()]
}

/// Flat cell redraw: sample the cell list with replacement. A single cell
/// consumes no randomness.
fn flat_multiplicities<R: Rng>(cell_count: usize, rng: &mut R) -> Vec<u64> {
    if cell_count == 1 {
        return vec![1];
    }
    let mut mults = vec![0u64; cell_count];
    for _ in 0..cell_count {
        mults[rng.random_range(0..cell_count)] += 1;
    }
    mults
}

fn replicate_app_rate(
    view: &AppView,
    cfg: &BootstrapConfig,
    replicate: u64,
    app_idx: u64,
) -> (f64, u64) {
    let mut rng_scen = substream(cfg.seed, &[replicate, app_idx, 0]);
    let mut rng_axes = substream(cfg.seed, &[replicate, app_idx, 1]);
    let mut rng_roll = substream(cfg.seed, &[replicate, app_idx, 2]);

    let s_count = view.scenarios.len();
    let mut fallbacks = 0u64;
    // Per scenario: pooled (successes, trials) and (rate sum, cell count)
    // over the resampled cells, so both pooling modes can be served.
    let mut nums = Vec::with_capacity(s_count);
    let mut dens = Vec::with_capacity(s_count);
    let mut rate_sums = Vec::with_capacity(s_count);
    let mut cell_totals = Vec::with_capacity(s_count);

    for scen in &view.scenarios {
        let mults: Vec<u64> = if cfg.ladder.config_axes {
            match cfg.mechanics {
                AxisMechanics::ValueProduct => {
                    value_product_multiplicities(scen, &mut rng_axes, &mut fallbacks)
                }
                AxisMechanics::FlatCells => flat_multiplicities(scen.cells.len(), &mut rng_axes),
            }
        } else {
            vec![1; scen.cells.len()]
        };

        let mut num_sum = 0.0;
        let mut den_sum = 0.0;
        let mut rate_sum = 0.0;
        let mut cell_total = 0u64;
        for (cell, &m) in scen.cells.iter().zip(&mults) {
            // One shared redraw per distinct cell; drawn even at zero
            // multiplicity so the rollout substream advances identically
            // whatever the axis rung produced.
            let num = if cfg.ladder.rollouts {
                let p_hat = cell.successes as f64 / cell.trials as f64;
                Binomial::new(cell.trials, p_hat)
                    .expect("observed rate lies in [0, 1]")
                    .sample(&mut rng_roll) as f64
            } else {
                cell.successes as f64
            };
            if m > 0 {
                let mf = m as f64;
                num_sum += mf * num;
                den_sum += mf * cell.trials as f64;
                rate_sum += mf * (num / cell.trials as f64);
                cell_total += m;
            }
        }
        nums.push(num_sum);
        dens.push(den_sum);
        rate_sums.push(rate_sum);
        cell_totals.push(cell_total as f64);
    }

    // Scenario slots with replacement; a single scenario consumes nothing.
    let mut slots = vec![1u64; s_count];
    if cfg.ladder.scenarios && s_count >= 2 {
        slots.iter_mut().for_each(|w| *w = 0);
        for _ in 0..s_count {
            slots[rng_scen.random_range(0..s_count)] += 1;
        }
    }

    let rate = match cfg.pooling {
        PoolingMode::RolloutWeighted => {
            let mut num = 0.0;
            let mut den = 0.0;
            for s in 0..s_count {
                num += slots[s] as f64 * nums[s];
                den += slots[s] as f64 * dens[s];
            }
            num / den
        }
        PoolingMode::LeafWeighted => {
            let mut num = 0.0;
            let mut den = 0.0;
            for s in 0..s_count {
                num += slots[s] as f64 * rate_sums[s];
                den += slots[s] as f64 * cell_totals[s];
            }
            num / den
        }
    };
    (rate, fallbacks)
}

// ---------------------------------------------------------------------------
// Replicate matrix and public entry points.

fn check_config(cfg: &BootstrapConfig) -> Result<(), BootstrapError> {
    if cfg.replicates == 0 {
        return Err(BootstrapError::NoReplicates);
    }
    if let SuiteStatistic::TrimmedMean(trim) = cfg.statistic {
        if !(0.0..0.5).contains(&trim) {
            return Err(BootstrapError::Stats(StatsError::BadTrim(trim)));
        }
    }
    Ok(())
}

/// Per-replicate per-app rates, row-major in replicate order.
fn replicate_matrix(
    views: &[AppView],
    cfg: &BootstrapConfig,
) -> (Vec<Vec<f64>>, u64) {
    let rows: Vec<(Vec<f64>, u64)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rates = Vec::with_capacity(views.len());
            let mut fallbacks = 0u64;
            for (app_idx, view) in views.iter().enumerate() {
                let (rate, f) = replicate_app_rate(view, cfg, b, app_idx as u64);
                rates.push(rate);
                fallbacks += f;
            }
            (rates, fallbacks)
        })
        .collect();
    let mut matrix = Vec::with_capacity(rows.len());
    let mut fallbacks = 0u64;
    for (rates, f) in rows {
        matrix.push(rates);
        fallbacks += f;
    }
    (matrix, fallbacks)
}

fn apply_statistic(rates: &[f64], statistic: SuiteStatistic) -> f64 {
    match statistic {
        SuiteStatistic::Mean => rates.iter().sum::<f64>() / rates.len() as f64,
        SuiteStatistic::TrimmedMean(trim) => {
            let mut sorted = rates.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
            trimmed_mean_of_sorted(&sorted, trim)
        }
    }
}

/// Percentile interval from replicate values using 1-based nearest-rank
/// (ceiling) indices at alpha/2 and 1 - alpha/2.
pub fn percentile_interval(
    replicates: &[f64],
    estimate: f64,
    level: ConfidenceLevel,
) -> Result<ConfidenceInterval, BootstrapError> {
    if replicates.is_empty() {
        return Err(BootstrapError::NoReplicates);
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("replicates are finite"));
    let alpha = level.alpha();
    Ok(ConfidenceInterval {
        estimate,
        lower: sorted[nearest_rank(alpha / 2.0, sorted.len())],
        upper: sorted[nearest_rank(1.0 - alpha / 2.0, sorted.len())],
        method: IntervalMethod::BootstrapPercentile,
        level: level.level(),
    })
}

/// 0-based index of the 1-based rank ceil(q * n), clamped to [1, n].
fn nearest_rank(q: f64, n: usize) -> usize {
    let rank = (q * n as f64).ceil() as usize;
    rank.clamp(1, n) - 1
}

/// Bootstrap interval for the suite-level statistic.
pub fn hierarchical_bootstrap(
    tree: &BenchmarkTree,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, BootstrapError> {
    check_config(cfg)?;
    let views = build_views(tree)?;
    if views.is_empty() {
        return Err(BootstrapError::EmptyTree);
    }
    let (matrix, degenerate_fallbacks) = replicate_matrix(&views, cfg);
    let replicates: Vec<f64> = matrix
        .iter()
        .map(|rates| apply_statistic(rates, cfg.statistic))
        .collect();

    let mut observed: Vec<f64> = Vec::with_capacity(views.len());
    for view in &views {
        observed.push(app_mean(&tree.apps()[view.name.as_str()], cfg.pooling)?);
    }
    let estimate = apply_statistic(&observed, cfg.statistic);
    let interval = percentile_interval(&replicates, estimate, cfg.level)?;
    Ok(BootstrapResult {
        interval,
        replicates,
        degenerate_fallbacks,
    })
}

/// Per-app bootstrap intervals from the same engine: apps stay fixed strata,
/// each one's interval comes from its own replicate rates.
pub fn per_app_bootstrap(
    tree: &BenchmarkTree,
    cfg: &BootstrapConfig,
) -> Result<BTreeMap<String, ConfidenceInterval>, BootstrapError> {
    check_config(cfg)?;
    let views = build_views(tree)?;
    if views.is_empty() {
        return Err(BootstrapError::EmptyTree);
    }
    let (matrix, _) = replicate_matrix(&views, cfg);
    let mut intervals = BTreeMap::new();
    for (app_idx, view) in views.iter().enumerate() {
        let rates: Vec<f64> = matrix.iter().map(|row| row[app_idx]).collect();
        let estimate = app_mean(&tree.apps()[view.name.as_str()], cfg.pooling)?;
        intervals.insert(
            view.name.clone(),
            percentile_interval(&rates, estimate, cfg.level)?,
        );
    }
    Ok(intervals)
}
