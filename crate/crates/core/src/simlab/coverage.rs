//! Coverage studies: do intervals contain the truth as often as advertised?

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bootstrap::{
    hierarchical_bootstrap, percentile_interval, AxisMechanics, BootstrapConfig, BootstrapError,
    ResampleLadder,
};
use crate::estimators::{
    wald_interval, wilson_interval, ConfidenceLevel, IntervalMethod, StatsError,
};
use crate::rng::{mix, substream};
use crate::simlab::calibration::{
    sample_synthetic_tree_with_truth, BaseCalibration, SimError, SuiteCalibration,
};

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("rollout grid must be non-empty")]
    EmptyGrid,
    #[error("trial count must be positive")]
    NoTrials,
    #[error("experiment count must be positive")]
    NoExperiments,
    #[error("variant list must be non-empty")]
    NoVariants,
    #[error("replicate grid entries must be positive")]
    BadReplicateGrid,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

// ---------------------------------------------------------------------------
// Per-leaf coverage of closed-form intervals.

/// Coverage and width of one interval method at one rollout depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseCoverageRow {
    pub rollouts: u32,
    pub method: IntervalMethod,
    pub coverage: f64,
    pub mean_width: f64,
    pub trials: usize,
}

/// Draws a true rate per trial from the base calibration, observes a
/// binomial count at each rollout depth, and scores Wilson and Wald
/// intervals against the drawn truth.
pub fn coverage_study_base(
    cal: &BaseCalibration,
    r_values: &[u32],
    n_trials: usize,
    level: ConfidenceLevel,
    seed: u64,
) -> Result<Vec<BaseCoverageRow>, CoverageError> {
    cal.validate()?;
    if r_values.is_empty() {
        return Err(CoverageError::EmptyGrid);
    }
    if r_values.contains(&0) {
        return Err(CoverageError::Sim(SimError::NoRollouts));
    }
    if n_trials == 0 {
        return Err(CoverageError::NoTrials);
    }
    // Accumulator: per (rollout depth, method): hits and width sum. Trials
    // are processed in fixed blocks and block partials added in block order,
    // so the float sums never depend on how rayon schedules the work.
    let slots = r_values.len() * 2;
    const BLOCK: u64 = 1024;
    let n = n_trials as u64;
    let partials: Vec<(Vec<u64>, Vec<f64>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut hits = vec![0u64; slots];
            let mut widths = vec![0f64; slots];
            for t in block * BLOCK..((block + 1) * BLOCK).min(n) {
                let mut rng = substream(seed, &[t]);
                let p = cal.draw_true_rate(&mut rng);
                for (ri, &r) in r_values.iter().enumerate() {
                    let k = Binomial::new(u64::from(r), p)
                        .expect("rate lies in [0, 1]")
                        .sample(&mut rng);
                    let intervals = [
                        wilson_interval(k, u64::from(r), level).expect("counts are valid"),
                        wald_interval(k, u64::from(r), level).expect("counts are valid"),
                    ];
                    for (mi, ci) in intervals.iter().enumerate() {
                        let slot = ri * 2 + mi;
                        hits[slot] += u64::from(ci.contains(p));
                        widths[slot] += ci.width();
                    }
                }
            }
            (hits, widths)
        })
        .collect();
    let mut hits = vec![0u64; slots];
    let mut widths = vec![0f64; slots];
    for (block_hits, block_widths) in partials {
        for i in 0..slots {
            hits[i] += block_hits[i];
            widths[i] += block_widths[i];
        }
    }
    let mut rows = Vec::with_capacity(slots);
    for (ri, &r) in r_values.iter().enumerate() {
        for (mi, method) in [IntervalMethod::Wilson, IntervalMethod::Wald]
            .into_iter()
            .enumerate()
        {
            let slot = ri * 2 + mi;
            rows.push(BaseCoverageRow {
                rollouts: r,
                method,
                coverage: hits[slot] as f64 / n_trials as f64,
                mean_width: widths[slot] / n_trials as f64,
                trials: n_trials,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Suite-level coverage of bootstrap ladders.

/// A named bootstrap configuration under study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderVariant {
    pub name: String,
    pub ladder: ResampleLadder,
    pub mechanics: AxisMechanics,
}

impl LadderVariant {
    pub fn new(name: impl Into<String>, ladder: ResampleLadder, mechanics: AxisMechanics) -> Self {
        LadderVariant {
            name: name.into(),
            ladder,
            mechanics,
        }
    }
}

/// What "the truth" means for a coverage study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimand {
    /// The population two-stage mean from the calibration.
    SuperPopulation,
    /// The realized two-stage mean of each sampled tree's drawn cell rates.
    RealizedSample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCoverageRow {
    pub variant: String,
    pub ladder: String,
    pub coverage: f64,
    pub mean_width: f64,
    pub experiments: usize,
    pub replicates: usize,
    /// Mean of the targets the intervals were scored against.
    pub mean_target: f64,
}

/// Samples fresh trees from the calibrated condition and scores each ladder
/// variant's bootstrap interval against the chosen estimand.
pub fn coverage_study_suite(
    cal: &SuiteCalibration,
    variants: &[LadderVariant],
    n_experiments: usize,
    replicates: usize,
    level: ConfidenceLevel,
    estimand: Estimand,
    seed: u64,
) -> Result<Vec<SuiteCoverageRow>, CoverageError> {
    if variants.is_empty() {
        return Err(CoverageError::NoVariants);
    }
    if n_experiments == 0 {
        return Err(CoverageError::NoExperiments);
    }
    let mut hits = vec![0u64; variants.len()];
    let mut width_sums = vec![0f64; variants.len()];
    let mut target_sum = 0.0;
    for e in 0..n_experiments as u64 {
        let (tree, realized) =
            sample_synthetic_tree_with_truth(&cal.params, mix(seed, &[e, 0]))?;
        let target = match estimand {
            Estimand::SuperPopulation => cal.theta_true,
            Estimand::RealizedSample => realized,
        };
        target_sum += target;
        for (v_idx, variant) in variants.iter().enumerate() {
            let cfg = BootstrapConfig {
                ladder: variant.ladder,
                mechanics: variant.mechanics,
                replicates,
                level,
                seed: mix(seed, &[e, 1 + v_idx as u64]),
                ..BootstrapConfig::default()
            };
            let result = hierarchical_bootstrap(&tree, &cfg)?;
            hits[v_idx] += u64::from(result.interval.contains(target));
            width_sums[v_idx] += result.interval.width();
        }
    }
    Ok(variants
        .iter()
        .enumerate()
        .map(|(v_idx, variant)| SuiteCoverageRow {
            variant: variant.name.clone(),
            ladder: variant.ladder.label(),
            coverage: hits[v_idx] as f64 / n_experiments as f64,
            mean_width: width_sums[v_idx] / n_experiments as f64,
            experiments: n_experiments,
            replicates,
            mean_target: target_sum / n_experiments as f64,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Replicate-count sensitivity.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BSensitivityRow {
    pub replicates: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub experiments: usize,
}

/// Runs each experiment once at the largest replicate count, then scores
/// every entry of `b_grid` on prefixes of the same replicate stream, which
/// the engine guarantees to be nested.
pub fn bootstrap_b_sensitivity(
    cal: &SuiteCalibration,
    variant: &LadderVariant,
    b_grid: &[usize],
    n_experiments: usize,
    level: ConfidenceLevel,
    seed: u64,
) -> Result<Vec<BSensitivityRow>, CoverageError> {
    if b_grid.is_empty() {
        return Err(CoverageError::EmptyGrid);
    }
    if b_grid.contains(&0) {
        return Err(CoverageError::BadReplicateGrid);
    }
    if n_experiments == 0 {
        return Err(CoverageError::NoExperiments);
    }
    let b_max = *b_grid.iter().max().expect("grid is non-empty");
    let mut hits = vec![0u64; b_grid.len()];
    let mut width_sums = vec![0f64; b_grid.len()];
    for e in 0..n_experiments as u64 {
        let (tree, _) = sample_synthetic_tree_with_truth(&cal.params, mix(seed, &[e, 0]))?;
        let cfg = BootstrapConfig {
            ladder: variant.ladder,
            mechanics: variant.mechanics,
            replicates: b_max,
            level,
            seed: mix(seed, &[e, 1]),
            ..BootstrapConfig::default()
        };
        let result = hierarchical_bootstrap(&tree, &cfg)?;
        for (bi, &b) in b_grid.iter().enumerate() {
            let ci = percentile_interval(
                &result.replicates[..b],
                result.interval.estimate,
                level,
            )?;
            hits[bi] += u64::from(ci.contains(cal.theta_true));
            width_sums[bi] += ci.width();
        }
    }
    Ok(b_grid
        .iter()
        .enumerate()
        .map(|(bi, &b)| BSensitivityRow {
            replicates: b,
            coverage: hits[bi] as f64 / n_experiments as f64,
            mean_width: width_sums[bi] / n_experiments as f64,
            experiments: n_experiments,
        })
        .collect())
}
