//! Calibrated generators for synthetic benchmark suites.
//!
//! The base generator draws per-leaf true rates from a two-point success
//! mixture smoothed through a Jeffreys posterior, mimicking the strongly
//! bimodal outcomes of agentic benchmarks at small rollout counts.
//!
//! The suite generator builds whole trees around a fixed roster of app
//! difficulty levels, adding clipped Gaussian scenario and configuration
//! effects, so bootstrap procedures can be scored against a known estimand.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimators::jeffreys_draw;
use crate::model::{Axis, AxisMask, BenchmarkTree, ConfigKey, TreeBuilder};
use crate::rng::substream;

/// Q1-to-median difficulty roster of 15 synthetic apps; mean is 0.41.
pub const DEFAULT_APP_RATES: [f64; 15] = [
    0.16, 0.22, 0.26, 0.31, 0.33, 0.37, 0.39, 0.41, 0.44, 0.46, 0.50, 0.53, 0.56, 0.59, 0.62,
];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("app rate list must be non-empty")]
    NoApps,
    #[error("rates must lie in [0, 1], got {0}")]
    BadRate(f64),
    #[error("scenario count must be at least 1")]
    NoScenarios,
    #[error("standard deviations must be nonnegative and finite, got {0}")]
    BadSigma(f64),
    #[error("axis cardinalities must be at least 1")]
    BadCardinality,
    #[error("rollout count must be at least 1")]
    NoRollouts,
    #[error("probability mass must lie in [0, 1], got {0}")]
    BadMass(f64),
    #[error("estimand draw count must be positive")]
    NoDraws,
}

/// Two-point mixture over observed success counts at a reference rollout
/// depth, smoothed into a continuous rate via the Jeffreys posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaseCalibration {
    /// Probability that a leaf shows zero successes at the reference depth.
    pub mass_at_zero: f64,
    /// Reference rollout depth of the mixture.
    pub rollouts: u32,
}

impl Default for BaseCalibration {
    fn default() -> Self {
        BaseCalibration {
            mass_at_zero: 0.68,
            rollouts: 3,
        }
    }
}

impl BaseCalibration {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.mass_at_zero) {
            return Err(SimError::BadMass(self.mass_at_zero));
        }
        if self.rollouts == 0 {
            return Err(SimError::NoRollouts);
        }
        Ok(())
    }

    /// One true leaf rate: pick the all-fail or all-pass arm, then draw from
    /// the Jeffreys posterior of that count.
    pub fn draw_true_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let r = u64::from(self.rollouts);
        let k = if rng.random::<f64>() < self.mass_at_zero {
            0
        } else {
            r
        };
        jeffreys_draw(k, r, rng).expect("rollouts is positive")
    }
}

/// Generative settings for one synthetic suite condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteParams {
    /// Per-app base success rates.
    pub app_rates: Vec<f64>,
    pub scenarios_per_app: usize,
    /// SD of the additive scenario effect (clipped to [0, 1] afterwards).
    pub sigma_scenario: f64,
    /// SD of the additive configuration effect on top of the scenario rate.
    pub sigma_config: f64,
    /// Distinct values of the instance, profile, and theme axes.
    pub axis_cardinalities: [usize; 3],
    pub rollouts: u32,
}

impl SuiteParams {
    /// Default condition: moderate scenario heterogeneity.
    pub fn corrected() -> Self {
        SuiteParams {
            app_rates: DEFAULT_APP_RATES.to_vec(),
            scenarios_per_app: 8,
            sigma_scenario: 0.25,
            sigma_config: 0.05,
            axis_cardinalities: [3, 3, 3],
            rollouts: 3,
        }
    }

    /// No scenario or configuration effects at all.
    pub fn homogeneous() -> Self {
        SuiteParams {
            scenarios_per_app: 10,
            sigma_scenario: 0.0,
            sigma_config: 0.0,
            ..SuiteParams::corrected()
        }
    }

    /// Mild effects: enough to break rollout-only intervals, not enough to
    /// move the estimand far.
    pub fn low_heterogeneity() -> Self {
        SuiteParams {
            scenarios_per_app: 10,
            sigma_scenario: 0.08,
            sigma_config: 0.03,
            ..SuiteParams::corrected()
        }
    }

    /// Strong scenario heterogeneity.
    pub fn main_heterogeneous() -> Self {
        SuiteParams {
            sigma_scenario: 0.39,
            ..SuiteParams::corrected()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.app_rates.is_empty() {
            return Err(SimError::NoApps);
        }
        for &r in &self.app_rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(SimError::BadRate(r));
            }
        }
        if self.scenarios_per_app == 0 {
            return Err(SimError::NoScenarios);
        }
        for sigma in [self.sigma_scenario, self.sigma_config] {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(SimError::BadSigma(sigma));
            }
        }
        if self.axis_cardinalities.contains(&0) {
            return Err(SimError::BadCardinality);
        }
        if self.rollouts == 0 {
            return Err(SimError::NoRollouts);
        }
        Ok(())
    }

    pub fn cells_per_scenario(&self) -> usize {
        self.axis_cardinalities.iter().product()
    }
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams::corrected()
    }
}

/// A suite condition with its Monte Carlo estimand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCalibration {
    pub params: SuiteParams,
    /// Two-stage population mean: expectation of the clipped cell rate,
    /// averaged over apps.
    pub theta_true: f64,
    /// Monte Carlo standard error of `theta_true` (zero when exact).
    pub theta_true_se: f64,
    /// Draws per app behind the estimand (zero when exact).
    pub estimand_draws: u64,
}

/// Computes the estimand for `params` with `draws` Monte Carlo samples per
/// app. Without scenario and configuration effects the estimand is the exact
/// mean of the app rates and no sampling happens.
pub fn build_calibration(
    params: SuiteParams,
    draws: u64,
    seed: u64,
) -> Result<SuiteCalibration, SimError> {
    params.validate()?;
    if params.sigma_scenario == 0.0 && params.sigma_config == 0.0 {
        let theta_true =
            params.app_rates.iter().sum::<f64>() / params.app_rates.len() as f64;
        return Ok(SuiteCalibration {
            params,
            theta_true,
            theta_true_se: 0.0,
            estimand_draws: 0,
        });
    }
    if draws == 0 {
        return Err(SimError::NoDraws);
    }
    // Mean and variance of the clipped cell rate per app, independent MC.
    let stats: Vec<(f64, f64)> = params
        .app_rates
        .par_iter()
        .enumerate()
        .map(|(a, &mu)| {
            let mut rng = substream(seed, &[a as u64]);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..draws {
                let pc = draw_cell_rate(&mut rng, mu, params.sigma_scenario, params.sigma_config);
                sum += pc;
                sum_sq += pc * pc;
            }
            let n = draws as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            (mean, var)
        })
        .collect();
    let a = params.app_rates.len() as f64;
    let theta_true = stats.iter().map(|(m, _)| m).sum::<f64>() / a;
    let variance_of_mean =
        stats.iter().map(|(_, v)| v / draws as f64).sum::<f64>() / (a * a);
    Ok(SuiteCalibration {
        params,
        theta_true,
        theta_true_se: variance_of_mean.sqrt(),
        estimand_draws: draws,
    })
}

/// One cell rate: clip(clip(mu + scenario effect) + config effect). Zero
/// sigmas skip their draw entirely.
fn draw_cell_rate<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma_s: f64, sigma_c: f64) -> f64 {
    let ps = if sigma_s > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        (mu + sigma_s * z).clamp(0.0, 1.0)
    } else {
        mu
    };
    if sigma_c > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        (ps + sigma_c * z).clamp(0.0, 1.0)
    } else {
        ps
    }
}

/// Samples one synthetic tree.
pub fn sample_synthetic_tree(params: &SuiteParams, seed: u64) -> Result<BenchmarkTree, SimError> {
    sample_synthetic_tree_with_truth(params, seed).map(|(tree, _)| tree)
}

/// Samples one synthetic tree together with the realized two-stage mean of
/// its drawn cell rates (the finite-sample truth for this tree).
pub fn sample_synthetic_tree_with_truth(
    params: &SuiteParams,
    seed: u64,
) -> Result<(BenchmarkTree, f64), SimError> {
    params.validate()?;
    let [n_inst, n_prof, n_theme] = params.axis_cardinalities;
    let mut enabled = Vec::new();
    if n_inst > 1 {
        enabled.push(Axis::Instance);
    }
    if n_prof > 1 {
        enabled.push(Axis::Profile);
    }
    if n_theme > 1 {
        enabled.push(Axis::Theme);
    }
    let mut builder = TreeBuilder::new("synthetic", AxisMask::from_axes(&enabled));
    let r = u64::from(params.rollouts);
    let cells = params.cells_per_scenario() as f64;
    let mut realized_total = 0.0;
    for (a, &mu) in params.app_rates.iter().enumerate() {
        let mut rng = substream(seed, &[a as u64]);
        let app = format!("app{:03}", a + 1);
        let mut app_rate_sum = 0.0;
        for s in 0..params.scenarios_per_app {
            let scen = format!("s{:03}", s + 1);
            let ps = if params.sigma_scenario > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                (mu + params.sigma_scenario * z).clamp(0.0, 1.0)
            } else {
                mu
            };
            for inst in 0..n_inst {
                for prof in 0..n_prof {
                    for theme in 0..n_theme {
                        let pc = if params.sigma_config > 0.0 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (ps + params.sigma_config * z).clamp(0.0, 1.0)
                        } else {
                            ps
                        };
                        app_rate_sum += pc;
                        let successes = Binomial::new(r, pc)
                            .expect("cell rate lies in [0, 1]")
                            .sample(&mut rng);
                        let outcomes: Vec<bool> =
                            (0..r).map(|i| i < successes).collect();
                        let mut key = ConfigKey::default_key();
                        key.set(Axis::Instance, format!("i{:02}", inst + 1));
                        key.set(Axis::Profile, format!("p{:02}", prof + 1));
                        key.set(Axis::Theme, format!("t{:02}", theme + 1));
                        builder
                            .set_leaf(app.clone(), scen.clone(), key, outcomes)
                            .expect("rollouts is positive");
                    }
                }
            }
        }
        realized_total += app_rate_sum / (params.scenarios_per_app as f64 * cells);
    }
    let realized = realized_total / params.app_rates.len() as f64;
    Ok((builder.build(), realized))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_roster_means_are_locked() {
        let mean = DEFAULT_APP_RATES.iter().sum::<f64>() / DEFAULT_APP_RATES.len() as f64;
        assert!((mean - 0.41).abs() < 1e-12);
        assert_eq!(DEFAULT_APP_RATES.len(), 15);
        assert!((DEFAULT_APP_RATES[0] - 0.16).abs() < 1e-12);
        assert!((DEFAULT_APP_RATES[14] - 0.62).abs() < 1e-12);
    }

    #[test]
    fn base_calibration_mixes_the_two_arms() {
        let cal = BaseCalibration::default();
        cal.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50_000;
        let rates: Vec<f64> = (0..n).map(|_| cal.draw_true_rate(&mut rng)).collect();
        let mean = rates.iter().sum::<f64>() / n as f64;
        // Mixture mean: 0.68 * 1/8 + 0.32 * 7/8 = 0.365.
        assert!((mean - 0.365).abs() < 0.01, "mixture mean {mean}");
        // Both arms appear.
        assert!(rates.iter().any(|&p| p < 0.05));
        assert!(rates.iter().any(|&p| p > 0.95));
        assert!(rates.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn exact_estimand_when_effects_vanish() {
        let cal = build_calibration(SuiteParams::homogeneous(), 0, 1).unwrap();
        assert!((cal.theta_true - 0.41).abs() < 1e-12);
        assert_eq!(cal.theta_true_se, 0.0);
        assert_eq!(cal.estimand_draws, 0);
    }

    #[test]
    fn monte_carlo_estimand_shrinks_under_clipping() {
        // Strong scenario noise on a roster with mean 0.41 pushes more mass
        // into the lower clip, so the estimand moves slightly off 0.41 and
        // carries a nonzero standard error.
        let cal = build_calibration(SuiteParams::main_heterogeneous(), 200_000, 1).unwrap();
        assert!(cal.theta_true_se > 0.0);
        assert!(cal.theta_true_se < 1e-3);
        assert!((cal.theta_true - 0.41).abs() < 0.03);
        // Reproducible.
        let again = build_calibration(SuiteParams::main_heterogeneous(), 200_000, 1).unwrap();
        assert_eq!(cal.theta_true, again.theta_true);
    }

    #[test]
    fn synthetic_tree_has_the_declared_shape() {
        let params = SuiteParams::corrected();
        let tree = sample_synthetic_tree(&params, 5).unwrap();
        assert_eq!(tree.app_count(), 15);
        for app in tree.apps().values() {
            assert_eq!(app.scenario_count(), 8);
            for scen in app.scenarios().values() {
                assert_eq!(scen.config_count(), 27);
                assert!(scen.is_factorial());
                for outcomes in scen.cells().values() {
                    assert_eq!(outcomes.len(), 3);
                }
            }
        }
        assert!(tree.axis_mask().enabled(Axis::Instance));
        assert!(tree.axis_mask().enabled(Axis::Profile));
        assert!(tree.axis_mask().enabled(Axis::Theme));
        assert!(!tree.axis_mask().enabled(Axis::UiState));
        assert!(tree.validate().is_ok());
    }

    #[test]
    fn synthetic_tree_is_seed_deterministic() {
        let params = SuiteParams::low_heterogeneity();
        let t1 = sample_synthetic_tree(&params, 9).unwrap();
        let t2 = sample_synthetic_tree(&params, 9).unwrap();
        assert_eq!(t1, t2);
        let t3 = sample_synthetic_tree(&params, 10).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn realized_truth_tracks_the_homogeneous_mean() {
        let (_, realized) =
            sample_synthetic_tree_with_truth(&SuiteParams::homogeneous(), 3).unwrap();
        assert!((realized - 0.41).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut params = SuiteParams::corrected();
        params.app_rates.clear();
        assert!(matches!(params.validate(), Err(SimError::NoApps)));
        let mut params = SuiteParams::corrected();
        params.app_rates[0] = 1.2;
        assert!(matches!(params.validate(), Err(SimError::BadRate(_))));
        let mut params = SuiteParams::corrected();
        params.sigma_scenario = -0.1;
        assert!(matches!(params.validate(), Err(SimError::BadSigma(_))));
        let mut params = SuiteParams::corrected();
        params.axis_cardinalities = [3, 0, 3];
        assert!(matches!(params.validate(), Err(SimError::BadCardinality)));
        assert!(matches!(
            build_calibration(SuiteParams::corrected(), 0, 1),
            Err(SimError::NoDraws)
        ));
    }
}
