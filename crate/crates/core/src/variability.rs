//! Configuration-sensitivity decomposition via matched pairs.
//!
//! A matched pair is two configuration cells in the same scenario that differ
//! on exactly one axis. The pair's delta is a paired contrast of leaf success
//! rates, so scenario difficulty cancels and what remains is the effect of
//! flipping that one axis value.
//!
//! Sign convention: the two values are ordered lexicographically and delta is
//! rate(first) - rate(second), which makes deltas reproducible regardless of
//! input order.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Axis, BenchmarkTree, ConfigKey, ModelError};

#[derive(Debug, Error)]
pub enum VariabilityError {
    #[error("axis '{0}' is not varied in this dataset")]
    AxisDisabled(Axis),
    #[error("no matched pairs found for axis '{0}'")]
    NoPairs(Axis),
    #[error("delta list must be non-empty")]
    EmptyDeltas,
    #[error("threshold list must be non-empty")]
    EmptyThresholds,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One matched pair: two cells differing only on `axis`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub app: String,
    pub scenario: String,
    pub axis: Axis,
    /// The held-fixed values of the other axes, in canonical axis order.
    pub fixed: Vec<(Axis, String)>,
    /// Lexicographically first value of the varied axis.
    pub value_a: String,
    pub value_b: String,
    pub rate_a: f64,
    pub rate_b: f64,
}

impl MatchedPair {
    /// rate(value_a) - rate(value_b), value_a being the lexicographically
    /// smaller value.
    pub fn delta(&self) -> f64 {
        self.rate_a - self.rate_b
    }
}

fn leaf_rate(outcomes: &[bool]) -> f64 {
    outcomes.iter().filter(|&&s| s).count() as f64 / outcomes.len() as f64
}

/// All matched pairs for `axis`, plus warnings for cells that found no
/// partner (non-factorial scenarios).
pub fn matched_pairs(
    tree: &BenchmarkTree,
    axis: Axis,
) -> Result<(Vec<MatchedPair>, Vec<String>), VariabilityError> {
    if !tree.axis_mask().enabled(axis) {
        return Err(VariabilityError::AxisDisabled(axis));
    }
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (app_name, app) in tree.apps() {
        for (scen_name, scen) in app.scenarios() {
            // Group cells by the values of the other axes.
            let mut groups: BTreeMap<ConfigKey, BTreeMap<&str, f64>> = BTreeMap::new();
            for (key, outcomes) in scen.cells() {
                let blanked = key.with_axis(axis, "");
                groups
                    .entry(blanked)
                    .or_default()
                    .insert(key.get(axis), leaf_rate(outcomes));
            }
            let varied = scen.axis_values(axis).len() > 1;
            for (blanked, members) in groups {
                if members.len() < 2 {
                    if varied {
                        warnings.push(format!(
                            "{app_name}/{scen_name}: cell with {} has no partner on axis '{axis}'",
                            describe_fixed(&blanked, axis)
                        ));
                    }
                    continue;
                }
                let values: Vec<&str> = members.keys().copied().collect(); // BTreeMap: sorted
                for i in 0..values.len() {
                    for j in (i + 1)..values.len() {
                        let fixed: Vec<(Axis, String)> = Axis::ALL
                            .iter()
                            .filter(|&&a| a != axis)
                            .map(|&a| (a, blanked.get(a).to_string()))
                            .collect();
                        pairs.push(MatchedPair {
                            app: app_name.clone(),
                            scenario: scen_name.clone(),
                            axis,
                            fixed,
                            value_a: values[i].to_string(),
                            value_b: values[j].to_string(),
                            rate_a: members[values[i]],
                            rate_b: members[values[j]],
                        });
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(VariabilityError::NoPairs(axis));
    }
    Ok((pairs, warnings))
}

fn describe_fixed(blanked: &ConfigKey, axis: Axis) -> String {
    Axis::ALL
        .iter()
        .filter(|&&a| a != axis)
        .map(|&a| format!("{a}={}", blanked.get(a)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Signed deltas of a pair list, in pair order.
pub fn pair_deltas(pairs: &[MatchedPair]) -> Vec<f64> {
    pairs.iter().map(MatchedPair::delta).collect()
}

/// Mean absolute delta.
pub fn mad_of_deltas(deltas: &[f64]) -> Result<f64, VariabilityError> {
    if deltas.is_empty() {
        return Err(VariabilityError::EmptyDeltas);
    }
    Ok(deltas.iter().map(|d| d.abs()).sum::<f64>() / deltas.len() as f64)
}

/// 90th percentile of absolute deltas, using the smallest value with at most
/// 10% of the sample strictly above it: 1-based rank floor(0.9 n) + 1, capped
/// at n.
pub fn q90_of_deltas(deltas: &[f64]) -> Result<f64, VariabilityError> {
    if deltas.is_empty() {
        return Err(VariabilityError::EmptyDeltas);
    }
    let mut magnitudes: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
    magnitudes.sort_by(|a, b| a.partial_cmp(b).expect("deltas are finite"));
    let n = magnitudes.len();
    let rank = ((0.9 * n as f64).floor() as usize + 1).min(n);
    Ok(magnitudes[rank - 1])
}

/// Summary of one axis's effect across all of a tree's matched pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityProfile {
    pub axis: Axis,
    pub pair_count: usize,
    pub mad: f64,
    pub q90: f64,
}

/// Pairs, MAD, and q90 for one axis.
pub fn sensitivity_profile(
    tree: &BenchmarkTree,
    axis: Axis,
) -> Result<(SensitivityProfile, Vec<String>), VariabilityError> {
    let (pairs, warnings) = matched_pairs(tree, axis)?;
    let deltas = pair_deltas(&pairs);
    Ok((
        SensitivityProfile {
            axis,
            pair_count: pairs.len(),
            mad: mad_of_deltas(&deltas)?,
            q90: q90_of_deltas(&deltas)?,
        },
        warnings,
    ))
}

/// Per-app, per-axis MAD cell of the sensitivity grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppAxisMad {
    pub app: String,
    pub axis: Axis,
    pub pair_count: usize,
    /// None when the app has no pairs on this axis.
    pub mad: Option<f64>,
}

/// App x axis MAD table over all enabled axes.
pub fn sensitivity_grid(
    tree: &BenchmarkTree,
) -> Result<(Vec<AppAxisMad>, Vec<String>), VariabilityError> {
    let axes = tree.axis_mask().axes();
    if axes.is_empty() {
        return Err(VariabilityError::NoPairs(Axis::Instance));
    }
    let mut rows = Vec::new();
    let mut all_warnings = Vec::new();
    for &axis in &axes {
        let (pairs, warnings) = match matched_pairs(tree, axis) {
            Ok(v) => v,
            Err(VariabilityError::NoPairs(_)) => (Vec::new(), Vec::new()),
            Err(e) => return Err(e),
        };
        all_warnings.extend(warnings);
        let mut by_app: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for pair in &pairs {
            by_app.entry(pair.app.as_str()).or_default().push(pair.delta());
        }
        for app_name in tree.apps().keys() {
            let deltas = by_app.get(app_name.as_str());
            rows.push(AppAxisMad {
                app: app_name.clone(),
                axis,
                pair_count: deltas.map_or(0, Vec::len),
                mad: deltas.map(|d| mad_of_deltas(d).expect("non-empty")),
            });
        }
    }
    Ok((rows, all_warnings))
}

/// Fraction of axis contrasts exceeding each threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceCurve {
    pub axis: Axis,
    pub thresholds: Vec<f64>,
    /// fractions[i] = share of contrasts with |delta| strictly above
    /// thresholds[i].
    pub fractions: Vec<f64>,
    pub pair_count: usize,
}

/// Exceedance curve over per-scenario axis contrasts.
///
/// Pooling differs from matched pairs: within each scenario, each value of
/// `axis` first gets a marginal rate (unweighted mean of its cells' rates
/// over the other axes), then every unordered pair of marginal rates
/// contributes one |delta|. Thresholds are sorted ascending.
pub fn exceedance_curve(
    tree: &BenchmarkTree,
    axis: Axis,
    thresholds: &[f64],
) -> Result<ExceedanceCurve, VariabilityError> {
    if thresholds.is_empty() {
        return Err(VariabilityError::EmptyThresholds);
    }
    if !tree.axis_mask().enabled(axis) {
        return Err(VariabilityError::AxisDisabled(axis));
    }
    let mut contrasts: Vec<f64> = Vec::new();
    for app in tree.apps().values() {
        for scen in app.scenarios().values() {
            let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for (key, outcomes) in scen.cells() {
                let entry = sums.entry(key.get(axis)).or_insert((0.0, 0));
                entry.0 += leaf_rate(outcomes);
                entry.1 += 1;
            }
            let marginals: Vec<f64> = sums
                .values()
                .map(|&(total, count)| total / count as f64)
                .collect();
            for i in 0..marginals.len() {
                for j in (i + 1)..marginals.len() {
                    contrasts.push((marginals[i] - marginals[j]).abs());
                }
            }
        }
    }
    if contrasts.is_empty() {
        return Err(VariabilityError::NoPairs(axis));
    }
    let mut sorted_thresholds = thresholds.to_vec();
    sorted_thresholds.sort_by(|a, b| a.partial_cmp(b).expect("thresholds are finite"));
    let fractions = sorted_thresholds
        .iter()
        .map(|&tau| {
            contrasts.iter().filter(|&&c| c > tau).count() as f64 / contrasts.len() as f64
        })
        .collect();
    Ok(ExceedanceCurve {
        axis,
        thresholds: sorted_thresholds,
        fractions,
        pair_count: contrasts.len(),
    })
}
