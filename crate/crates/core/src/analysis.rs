//! Cross-model analyses: performance profiles, split-half decision regret,
//! and significance-gated regret accounting.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bootstrap::{per_app_bootstrap, BootstrapConfig, BootstrapError};
use crate::estimators::{
    app_mean, wald_interval, ConfidenceInterval, ConfidenceLevel, PoolingMode, StatsError,
};
use crate::model::{BenchmarkTree, ConfigKey, ModelError};
use crate::rng::{mix, substream};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("threshold list must be non-empty")]
    EmptyThresholds,
    #[error("duplicate model name '{0}'")]
    DuplicateModel(String),
    #[error("models '{0}' and '{1}' share no usable apps")]
    NoSharedApps(String, String),
    #[error("simulation count must be positive")]
    NoSims,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// Performance profiles.

/// Fraction of apps at or above each threshold, per model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceProfile {
    /// Ascending threshold grid shared by all series.
    pub thresholds: Vec<f64>,
    /// series[model][i] = fraction of the model's apps with success rate
    /// >= thresholds[i].
    pub series: BTreeMap<String, Vec<f64>>,
}

pub fn performance_profile(
    trees: &[&BenchmarkTree],
    thresholds: &[f64],
) -> Result<PerformanceProfile, AnalysisError> {
    if thresholds.is_empty() {
        return Err(AnalysisError::EmptyThresholds);
    }
    let mut grid = thresholds.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("thresholds are finite"));
    let mut series = BTreeMap::new();
    for tree in trees {
        let estimate = crate::estimators::suite_mean(tree)?;
        let rates: Vec<f64> = estimate.per_app.values().copied().collect();
        let fractions: Vec<f64> = grid
            .iter()
            .map(|&tau| rates.iter().filter(|&&r| r >= tau).count() as f64 / rates.len() as f64)
            .collect();
        if series.insert(tree.model().to_string(), fractions).is_some() {
            return Err(AnalysisError::DuplicateModel(tree.model().to_string()));
        }
    }
    Ok(PerformanceProfile {
        thresholds: grid,
        series,
    })
}

// ---------------------------------------------------------------------------
// Split-half decision regret.

/// Regret accounting for one app.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretEntry {
    /// Model with the higher pooled rate on the full data (ties go to the
    /// first model).
    pub full_winner: String,
    /// Share of split-half simulations that picked the other model.
    pub p_wrong: f64,
    /// |full-data rate difference| between the two models.
    pub gap: f64,
    /// p_wrong * gap.
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub model_a: String,
    pub model_b: String,
    pub n_sims: usize,
    pub per_app: BTreeMap<String, RegretEntry>,
    /// Sum of per-app regrets.
    pub total_regret: f64,
    /// Apps left out, with reasons.
    pub skipped: Vec<String>,
}

/// Shared data of one app prepared for simulation.
struct SharedApp {
    name: String,
    /// Per usable scenario: both models' leaf rates at each shared config,
    /// index-aligned.
    scenarios: Vec<(Vec<f64>, Vec<f64>)>,
    full_a: f64,
    full_b: f64,
}

fn shared_apps(
    a: &BenchmarkTree,
    b: &BenchmarkTree,
    skipped: &mut Vec<String>,
) -> Result<Vec<SharedApp>, AnalysisError> {
    let mut apps = Vec::new();
    for (name, app_a) in a.apps() {
        let Some(app_b) = b.apps().get(name) else {
            skipped.push(format!("{name}: only present in '{}'", a.model()));
            continue;
        };
        let mut scenarios = Vec::new();
        for (scen_name, scen_a) in app_a.scenarios() {
            let Some(scen_b) = app_b.scenario(scen_name) else {
                continue;
            };
            let shared: Vec<&ConfigKey> = scen_a
                .cells()
                .keys()
                .filter(|k| scen_b.cells().contains_key(*k))
                .collect();
            if shared.is_empty() {
                continue;
            }
            let rates = |scen: &crate::model::ScenarioData, keys: &[&ConfigKey]| {
                keys.iter()
                    .map(|k| {
                        let outcomes = &scen.cells()[*k];
                        outcomes.iter().filter(|&&s| s).count() as f64 / outcomes.len() as f64
                    })
                    .collect::<Vec<f64>>()
            };
            scenarios.push((rates(scen_a, &shared), rates(scen_b, &shared)));
        }
        if scenarios.len() < 2 {
            skipped.push(format!(
                "{name}: fewer than two scenarios with shared configurations"
            ));
            continue;
        }
        apps.push(SharedApp {
            name: name.clone(),
            scenarios,
            full_a: app_mean(app_a, PoolingMode::RolloutWeighted)?,
            full_b: app_mean(app_b, PoolingMode::RolloutWeighted)?,
        });
    }
    for name in b.apps().keys() {
        if !a.apps().contains_key(name) {
            skipped.push(format!("{name}: only present in '{}'", b.model()));
        }
    }
    Ok(apps)
}

/// Probability-weighted cost of picking the wrong model from half the data.
///
/// Each simulation draws floor(S/2) scenarios without replacement, then one
/// shared configuration per drawn scenario (the same cell for both models),
/// and declares the model with the higher mean of the sampled leaf rates the
/// winner; exact ties are settled by a fair coin. An app's regret is the
/// probability this split-half winner contradicts the full-data winner,
/// multiplied by the full-data gap.
pub fn split_half_regret(
    a: &BenchmarkTree,
    b: &BenchmarkTree,
    n_sims: usize,
    seed: u64,
) -> Result<RegretReport, AnalysisError> {
    if n_sims == 0 {
        return Err(AnalysisError::NoSims);
    }
    let mut skipped = Vec::new();
    let apps = shared_apps(a, b, &mut skipped)?;
    if apps.is_empty() {
        return Err(AnalysisError::NoSharedApps(
            a.model().to_string(),
            b.model().to_string(),
        ));
    }

    let mut per_app = BTreeMap::new();
    for (app_idx, app) in apps.iter().enumerate() {
        let a_wins_full = app.full_a >= app.full_b;
        let wrong: usize = (0..n_sims as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, &[t, app_idx as u64]);
                let s_count = app.scenarios.len();
                let half = s_count / 2;
                // Partial Fisher-Yates: first `half` slots hold the sample.
                let mut order: Vec<usize> = (0..s_count).collect();
                for i in 0..half {
                    let j = rng.random_range(i..s_count);
                    order.swap(i, j);
                }
                let mut score_a = 0.0;
                let mut score_b = 0.0;
                for &s in &order[..half] {
                    let (rates_a, rates_b) = &app.scenarios[s];
                    let c = rng.random_range(0..rates_a.len());
                    score_a += rates_a[c];
                    score_b += rates_b[c];
                }
                let a_wins_half = if score_a > score_b {
                    true
                } else if score_a < score_b {
                    false
                } else {
                    rng.random_range(0..2u32) == 0
                };
                usize::from(a_wins_half != a_wins_full)
            })
            .sum();
        let p_wrong = wrong as f64 / n_sims as f64;
        let gap = (app.full_a - app.full_b).abs();
        per_app.insert(
            app.name.clone(),
            RegretEntry {
                full_winner: if a_wins_full {
                    a.model().to_string()
                } else {
                    b.model().to_string()
                },
                p_wrong,
                gap,
                regret: p_wrong * gap,
            },
        );
    }
    let total_regret = per_app.values().map(|e| e.regret).sum();
    Ok(RegretReport {
        model_a: a.model().to_string(),
        model_b: b.model().to_string(),
        n_sims,
        per_app,
        total_regret,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Significance gating.

/// How per-app significance is decided before acting on a difference.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignificanceMethod {
    /// Wald intervals on each model's pooled per-app counts; flag when
    /// strictly disjoint.
    WaldPooled { level: f64 },
    /// Per-app bootstrap intervals from the hierarchical engine; flag when
    /// strictly disjoint.
    BootstrapPerApp(BootstrapConfigSummary),
}

/// Serializable digest of the bootstrap settings used for gating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapConfigSummary {
    pub ladder: String,
    pub replicates: usize,
    pub level: f64,
}

/// One app's significance verdict with the intervals behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceFlag {
    pub app: String,
    pub interval_a: ConfidenceInterval,
    pub interval_b: ConfidenceInterval,
    pub significant: bool,
}

/// Wald-on-pooled-counts gating.
pub fn wald_significance(
    a: &BenchmarkTree,
    b: &BenchmarkTree,
    level: ConfidenceLevel,
) -> Result<Vec<SignificanceFlag>, AnalysisError> {
    let mut flags = Vec::new();
    for (name, app_a) in a.apps() {
        let Some(app_b) = b.apps().get(name) else {
            continue;
        };
        let (ka, na) = app_a.pooled_counts();
        let (kb, nb) = app_b.pooled_counts();
        let interval_a = wald_interval(ka, na, level)?;
        let interval_b = wald_interval(kb, nb, level)?;
        let significant = interval_a.disjoint(&interval_b);
        flags.push(SignificanceFlag {
            app: name.clone(),
            interval_a,
            interval_b,
            significant,
        });
    }
    Ok(flags)
}

/// Bootstrap gating: per-app percentile intervals for both models, flagged
/// when strictly disjoint. The two models get decorrelated substreams derived
/// from the configured seed.
pub fn bootstrap_significance(
    a: &BenchmarkTree,
    b: &BenchmarkTree,
    cfg: &BootstrapConfig,
) -> Result<Vec<SignificanceFlag>, AnalysisError> {
    let cfg_a = BootstrapConfig {
        seed: mix(cfg.seed, &[0]),
        ..*cfg
    };
    let cfg_b = BootstrapConfig {
        seed: mix(cfg.seed, &[1]),
        ..*cfg
    };
    let intervals_a = per_app_bootstrap(a, &cfg_a)?;
    let intervals_b = per_app_bootstrap(b, &cfg_b)?;
    let mut flags = Vec::new();
    for (name, interval_a) in intervals_a {
        let Some(interval_b) = intervals_b.get(&name) else {
            continue;
        };
        let significant = interval_a.disjoint(interval_b);
        flags.push(SignificanceFlag {
            app: name,
            interval_b: interval_b.clone(),
            interval_a,
            significant,
        });
    }
    Ok(flags)
}

/// Label for a gated regret report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionMethod {
    /// Act on every observed difference.
    SplitHalf,
    /// Act only on apps the Wald gate flags.
    WaldDecision,
    /// Act only on apps the bootstrap gate flags.
    BootstrapDecision,
}

/// Regret restricted to apps a significance gate flagged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatedRegretReport {
    pub method: DecisionMethod,
    pub flagged_apps: Vec<String>,
    pub per_app: BTreeMap<String, RegretEntry>,
    /// Sum of regrets over flagged apps only.
    pub total_regret: f64,
}

pub fn gated_regret(
    report: &RegretReport,
    flags: &[SignificanceFlag],
    method: DecisionMethod,
) -> GatedRegretReport {
    let mut per_app = BTreeMap::new();
    let mut flagged_apps = Vec::new();
    for flag in flags {
        if !flag.significant {
            continue;
        }
        if let Some(entry) = report.per_app.get(&flag.app) {
            flagged_apps.push(flag.app.clone());
            per_app.insert(flag.app.clone(), entry.clone());
        }
    }
    // + 0.0 turns the -0.0 of an empty sum into plain zero.
    let total_regret = per_app.values().map(|e| e.regret).sum::<f64>() + 0.0;
    GatedRegretReport {
        method,
        flagged_apps,
        per_app,
        total_regret,
    }
}
