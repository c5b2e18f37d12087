//! A planted two-model suite for decision-procedure studies.
//!
//! Twelve "clear" apps give one model a solid, consistent edge; three
//! "fragile" apps are bimodal per scenario (nearly solved or nearly unsolved,
//! independently per model) with only a hair's difference in means. Pooled
//! per-app counts look precise on fragile apps while the scenario mixture
//! makes the half-data winner nearly a coin flip, so gates that ignore
//! scenario-level dispersion get charged regret there.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::Serialize;

use crate::model::{AxisMask, BenchmarkTree, ConfigKey, TreeBuilder};
use crate::rng::substream;

/// Tunables of the planted suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedParams {
    pub fragile_apps: usize,
    pub clear_apps: usize,
    pub scenarios_per_app: usize,
    pub rollouts: u32,
    /// SD of the per-scenario jitter.
    pub jitter: f64,
    /// Mean shift against the second model on fragile apps.
    pub fragile_shift: f64,
    /// Half-gap between the models on clear apps.
    pub clear_margin: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        PlantedParams {
            fragile_apps: 3,
            clear_apps: 12,
            scenarios_per_app: 6,
            rollouts: 200,
            jitter: 0.05,
            fragile_shift: 0.02,
            clear_margin: 0.15,
        }
    }
}

/// Samples the planted suite with default tunables.
pub fn planted_two_model_suite(seed: u64) -> (BenchmarkTree, BenchmarkTree) {
    planted_suite_with(&PlantedParams::default(), seed)
}

/// Samples the planted suite: returns (model-a, model-b) trees over the same
/// apps and scenarios, one configuration per scenario.
pub fn planted_suite_with(params: &PlantedParams, seed: u64) -> (BenchmarkTree, BenchmarkTree) {
    let mut builder_a = TreeBuilder::new("model-a", AxisMask::none());
    let mut builder_b = TreeBuilder::new("model-b", AxisMask::none());
    let s_count = params.scenarios_per_app;
    let r = u64::from(params.rollouts);

    let fill =
        |builder: &mut TreeBuilder, app: &str, rates: &[f64], rng: &mut dyn rand::RngCore| {
            for (s, &rate) in rates.iter().enumerate() {
                let successes = Binomial::new(r, rate)
                    .expect("rates are clipped into [0, 1]")
                    .sample(rng);
                let outcomes: Vec<bool> = (0..r).map(|i| i < successes).collect();
                builder
                    .set_leaf(app, format!("s{:02}", s + 1), ConfigKey::default_key(), outcomes)
                    .expect("rollouts is positive");
            }
        };

    for a in 0..params.fragile_apps {
        let mut rng = substream(seed, &[a as u64]);
        let app = format!("fragile{:02}", a + 1);
        // Each model draws its own easy/hard split: near-solved or
        // near-unsolved per scenario, with jitter breaking exact ties.
        let draw_rates = |shift: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..s_count)
                .map(|_| {
                    let mode = if rng.random::<f64>() < 0.5 { 0.9 } else { 0.1 };
                    let z: f64 = StandardNormal.sample(rng);
                    (mode + params.jitter * z - shift).clamp(0.01, 0.99)
                })
                .collect()
        };
        let rates_a = draw_rates(0.0, &mut rng);
        let rates_b = draw_rates(params.fragile_shift, &mut rng);
        fill(&mut builder_a, &app, &rates_a, &mut rng);
        fill(&mut builder_b, &app, &rates_b, &mut rng);
    }

    for a in 0..params.clear_apps {
        let mut rng = substream(seed, &[(params.fragile_apps + a) as u64]);
        let app = format!("clear{:02}", a + 1);
        let base = 0.35 + 0.25 * rng.random::<f64>();
        // Shared scenario noise: the margin is the only systematic difference.
        let noise: Vec<f64> = (0..s_count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.jitter * z
            })
            .collect();
        let rates_a: Vec<f64> = noise
            .iter()
            .map(|n| (base + params.clear_margin + n).clamp(0.02, 0.98))
            .collect();
        let rates_b: Vec<f64> = noise
            .iter()
            .map(|n| (base - params.clear_margin + n).clamp(0.02, 0.98))
            .collect();
        fill(&mut builder_a, &app, &rates_a, &mut rng);
        fill(&mut builder_b, &app, &rates_b, &mut rng);
    }

    (builder_a.build(), builder_b.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{app_mean, PoolingMode};

    #[test]
    fn planted_suite_has_the_declared_shape() {
        let (a, b) = planted_two_model_suite(1);
        assert_eq!(a.model(), "model-a");
        assert_eq!(b.model(), "model-b");
        for tree in [&a, &b] {
            assert_eq!(tree.app_count(), 15);
            for app in tree.apps().values() {
                assert_eq!(app.scenario_count(), 6);
                for scen in app.scenarios().values() {
                    assert_eq!(scen.config_count(), 1);
                    for outcomes in scen.cells().values() {
                        assert_eq!(outcomes.len(), 200);
                    }
                }
            }
            assert!(tree.validate().is_ok());
        }
        assert_eq!(
            a.apps().keys().collect::<Vec<_>>(),
            b.apps().keys().collect::<Vec<_>>()
        );
        assert!(a.apps().contains_key("fragile01"));
        assert!(a.apps().contains_key("clear12"));
    }

    #[test]
    fn clear_apps_favor_the_first_model() {
        let (a, b) = planted_two_model_suite(2);
        for (name, app_a) in a.apps() {
            if !name.starts_with("clear") {
                continue;
            }
            let mean_a = app_mean(app_a, PoolingMode::RolloutWeighted).unwrap();
            let mean_b = app_mean(&b.apps()[name.as_str()], PoolingMode::RolloutWeighted).unwrap();
            assert!(
                mean_a > mean_b + 0.15,
                "{name}: {mean_a} vs {mean_b} should be clearly separated"
            );
        }
    }

    #[test]
    fn fragile_apps_are_bimodal_and_close() {
        let (a, b) = planted_two_model_suite(3);
        for (name, app_a) in a.apps() {
            if !name.starts_with("fragile") {
                continue;
            }
            // Scenario rates split into a near-solved and a near-unsolved
            // cluster.
            let rates: Vec<f64> = app_a
                .scenarios()
                .values()
                .flat_map(|s| {
                    s.cells().values().map(|o| {
                        o.iter().filter(|&&x| x).count() as f64 / o.len() as f64
                    })
                })
                .collect();
            assert!(rates.iter().all(|&r| !(0.35..=0.65).contains(&r)));
            let mean_a = app_mean(app_a, PoolingMode::RolloutWeighted).unwrap();
            let mean_b = app_mean(&b.apps()[name.as_str()], PoolingMode::RolloutWeighted).unwrap();
            assert!((mean_a - mean_b).abs() < 0.45);
        }
    }

    #[test]
    fn planted_suite_is_seed_deterministic() {
        let (a1, b1) = planted_two_model_suite(7);
        let (a2, b2) = planted_two_model_suite(7);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let (a3, _) = planted_two_model_suite(8);
        assert_ne!(a1, a3);
    }
}
