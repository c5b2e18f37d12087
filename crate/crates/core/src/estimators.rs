//! Point and interval estimators for success rates and suite-level means.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppData, BenchmarkTree, ModelError};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    BadLevel(f64),
    #[error("quantile probability must lie strictly between 0 and 1, got {0}")]
    BadProbability(f64),
    #[error("trials must be positive")]
    NoTrials,
    #[error("successes ({successes}) exceed trials ({trials})")]
    TooManySuccesses { successes: u64, trials: u64 },
    #[error("rates must lie in [0, 1], got {0}")]
    BadRate(f64),
    #[error("k must be at least 1")]
    BadK,
    #[error("input must be non-empty")]
    EmptyInput,
    #[error("trim fraction must lie in [0, 0.5), got {0}")]
    BadTrim(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Quantile of the standard normal distribution (inverse CDF).
///
/// Wichura's PPND16 rational approximations, accurate to full double
/// precision across (0, 1).
// Coefficients kept at full published precision, beyond what f64 resolves.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::BadProbability(p));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        const A: [f64; 8] = [
            3.387_132_872_796_366_608,
            1.331_416_678_917_843_774_5e2,
            1.971_590_950_306_551_442_7e3,
            1.373_169_376_550_946_112_5e4,
            4.592_195_393_154_987_145_7e4,
            6.726_577_092_700_870_085_3e4,
            3.343_057_558_358_812_810_5e4,
            2.509_080_928_730_122_672_7e3,
        ];
        const B: [f64; 8] = [
            1.0,
            4.231_333_070_160_091_125_2e1,
            6.871_870_074_920_579_083e2,
            5.394_196_021_424_751_107_7e3,
            2.121_379_430_158_659_586_7e4,
            3.930_789_580_009_271_061e4,
            2.872_908_573_572_194_267_4e4,
            5.226_495_278_852_854_561e3,
        ];
        return Ok(q * horner(&A, r) / horner(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        const C: [f64; 8] = [
            1.423_437_110_749_683_577_3,
            4.630_337_846_156_545_295_9,
            5.769_497_221_460_691_405_5,
            3.647_848_324_763_204_605,
            1.270_458_252_452_368_382_6,
            2.417_807_251_774_506_117_7e-1,
            2.272_384_498_926_918_458_3e-2,
            7.745_450_142_783_414_076_4e-4,
        ];
        const D: [f64; 8] = [
            1.0,
            2.053_191_626_637_758_821_9,
            1.676_384_830_183_803_849_4,
            6.897_673_349_851_000_045_5e-1,
            1.481_039_764_274_800_745_9e-1,
            1.519_866_656_361_645_719_7e-2,
            5.475_938_084_995_344_946e-4,
            1.050_750_071_644_416_843_2e-9,
        ];
        horner(&C, r) / horner(&D, r)
    } else {
        r -= 5.0;
        const E: [f64; 8] = [
            6.657_904_643_501_103_777_2,
            5.463_784_911_164_114_369_9,
            1.784_826_539_917_291_335_8,
            2.965_605_718_285_048_912_3e-1,
            2.653_218_952_657_612_309_3e-2,
            1.242_660_947_388_078_438_6e-3,
            2.711_555_568_743_487_578_2e-5,
            2.010_334_399_292_288_132_6e-7,
        ];
        const F: [f64; 8] = [
            1.0,
            5.998_322_065_558_879_376_9e-1,
            1.369_298_809_227_358_053_1e-1,
            1.487_536_129_085_061_485_2e-2,
            7.868_691_311_456_132_591e-4,
            1.846_318_317_510_054_681_8e-5,
            1.421_511_758_316_445_888_7e-7,
            2.044_263_103_389_939_785_6e-15,
        ];
        horner(&E, r) / horner(&F, r)
    };
    Ok(if q < 0.0 { -x } else { x })
}

fn horner(coeffs: &[f64; 8], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

/// A two-sided confidence level with its precomputed normal critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceLevel {
    level: f64,
    z: f64,
}

impl ConfidenceLevel {
    pub fn new(level: f64) -> Result<Self, StatsError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(StatsError::BadLevel(level));
        }
        let z = normal_quantile(1.0 - (1.0 - level) / 2.0)?;
        Ok(ConfidenceLevel { level, z })
    }

    pub fn ninety_five() -> Self {
        ConfidenceLevel::new(0.95).expect("0.95 is a valid level")
    }

    pub fn level(self) -> f64 {
        self.level
    }

    pub fn alpha(self) -> f64 {
        1.0 - self.level
    }

    /// Two-sided normal critical value z_{1-alpha/2}.
    pub fn z(self) -> f64 {
        self.z
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        ConfidenceLevel::ninety_five()
    }
}

/// How an interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    Wilson,
    Wald,
    BootstrapPercentile,
}

/// A two-sided confidence interval around a point estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: IntervalMethod,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    /// Strict separation: the intervals share no point.
    pub fn disjoint(&self, other: &ConfidenceInterval) -> bool {
        self.upper < other.lower || other.upper < self.lower
    }
}

fn check_counts(successes: u64, trials: u64) -> Result<(f64, f64), StatsError> {
    if trials == 0 {
        return Err(StatsError::NoTrials);
    }
    if successes > trials {
        return Err(StatsError::TooManySuccesses { successes, trials });
    }
    Ok((successes as f64, trials as f64))
}

/// Wilson score interval for a binomial proportion.
///
/// The center is shrunk toward 1/2 and the half-width keeps a floor from the
/// z²/(4R²) term, so the interval never collapses at k = 0 or k = R. Ends are
/// clipped to [0, 1] after the center ± half-width step.
pub fn wilson_interval(
    successes: u64,
    trials: u64,
    level: ConfidenceLevel,
) -> Result<ConfidenceInterval, StatsError> {
    let (k, r) = check_counts(successes, trials)?;
    let p_hat = k / r;
    let z = level.z();
    let z2 = z * z;
    let denom = 1.0 + z2 / r;
    let center = (p_hat + z2 / (2.0 * r)) / denom;
    let half_width =
        (z / denom) * (p_hat * (1.0 - p_hat) / r + z2 / (4.0 * r * r)).sqrt();
    // At the extremes, center equals half-width exactly in real arithmetic;
    // pin the endpoint so rounding cannot push it past the point estimate.
    let lower = if successes == 0 {
        0.0
    } else {
        (center - half_width).max(0.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        (center + half_width).min(1.0)
    };
    Ok(ConfidenceInterval {
        estimate: p_hat,
        lower,
        upper,
        method: IntervalMethod::Wilson,
        level: level.level(),
    })
}

/// Wald (normal approximation) interval, clipped to [0, 1].
///
/// Degenerates to zero width at k = 0 and k = R because the plug-in standard
/// error vanishes there.
pub fn wald_interval(
    successes: u64,
    trials: u64,
    level: ConfidenceLevel,
) -> Result<ConfidenceInterval, StatsError> {
    let (k, r) = check_counts(successes, trials)?;
    let p_hat = k / r;
    let half_width = level.z() * (p_hat * (1.0 - p_hat) / r).sqrt();
    Ok(ConfidenceInterval {
        estimate: p_hat,
        lower: (p_hat - half_width).max(0.0),
        upper: (p_hat + half_width).min(1.0),
        method: IntervalMethod::Wald,
        level: level.level(),
    })
}

/// One posterior draw of the success rate under the Jeffreys Beta(1/2, 1/2)
/// prior: Beta(k + 1/2, R - k + 1/2).
pub fn jeffreys_draw<R: Rng + ?Sized>(
    successes: u64,
    trials: u64,
    rng: &mut R,
) -> Result<f64, StatsError> {
    let (k, r) = check_counts(successes, trials)?;
    let beta = Beta::new(k + 0.5, r - k + 0.5).expect("parameters are positive");
    Ok(beta.sample(rng))
}

/// Expected best-of-k success over a task set: mean over tasks of
/// 1 - (1 - p_i)^k, assuming independent attempts within a task.
pub fn pass_at_k(rates: &[f64], k: u32) -> Result<f64, StatsError> {
    if rates.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if k == 0 {
        return Err(StatsError::BadK);
    }
    let mut total = 0.0;
    for &p in rates {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::BadRate(p));
        }
        total += 1.0 - (1.0 - p).powi(k as i32);
    }
    Ok(total / rates.len() as f64)
}

/// How rollouts are pooled into a single per-app success rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// Every rollout counts equally: pooled successes over pooled trials.
    #[default]
    RolloutWeighted,
    /// Every leaf counts equally: unweighted mean of leaf success rates.
    LeafWeighted,
}

/// A suite-level estimate with its per-app components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEstimate {
    /// Unweighted mean of the per-app rates.
    pub theta_hat: f64,
    pub per_app: BTreeMap<String, f64>,
}

/// Success rate of one app under the given pooling mode.
pub fn app_mean(app: &AppData, mode: PoolingMode) -> Result<f64, StatsError> {
    match mode {
        PoolingMode::RolloutWeighted => {
            let (successes, trials) = app.pooled_counts();
            if trials == 0 {
                return Err(StatsError::NoTrials);
            }
            Ok(successes as f64 / trials as f64)
        }
        PoolingMode::LeafWeighted => {
            let mut total = 0.0;
            let mut leaves = 0usize;
            for scenario in app.scenarios().values() {
                for outcomes in scenario.cells().values() {
                    if outcomes.is_empty() {
                        return Err(StatsError::NoTrials);
                    }
                    let successes = outcomes.iter().filter(|&&s| s).count();
                    total += successes as f64 / outcomes.len() as f64;
                    leaves += 1;
                }
            }
            if leaves == 0 {
                return Err(StatsError::EmptyInput);
            }
            Ok(total / leaves as f64)
        }
    }
}

/// Two-stage suite mean: pool within each app, then average apps equally.
pub fn suite_mean(tree: &BenchmarkTree) -> Result<SuiteEstimate, StatsError> {
    suite_mean_pooled(tree, PoolingMode::RolloutWeighted)
}

/// Two-stage suite mean with an explicit within-app pooling mode.
pub fn suite_mean_pooled(
    tree: &BenchmarkTree,
    mode: PoolingMode,
) -> Result<SuiteEstimate, StatsError> {
    if tree.apps().is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut per_app = BTreeMap::new();
    for (name, app) in tree.apps() {
        per_app.insert(name.clone(), app_mean(app, mode)?);
    }
    let theta_hat = per_app.values().sum::<f64>() / per_app.len() as f64;
    Ok(SuiteEstimate { theta_hat, per_app })
}

/// Symmetrically trimmed suite mean: drop floor(trim * A) apps from each tail
/// of the sorted per-app rates, then average the rest.
pub fn trimmed_suite_mean(tree: &BenchmarkTree, trim: f64) -> Result<f64, StatsError> {
    if !(0.0..0.5).contains(&trim) {
        return Err(StatsError::BadTrim(trim));
    }
    let estimate = suite_mean(tree)?;
    let mut rates: Vec<f64> = estimate.per_app.values().copied().collect();
    rates.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    Ok(trimmed_mean_of_sorted(&rates, trim))
}

/// Trimmed mean over an already-sorted slice; shared with the bootstrap.
pub(crate) fn trimmed_mean_of_sorted(sorted: &[f64], trim: f64) -> f64 {
    let cut = (trim * sorted.len() as f64).floor() as usize;
    let kept = &sorted[cut..sorted.len() - cut];
    kept.iter().sum::<f64>() / kept.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Axis, AxisMask, ConfigKey, TreeBuilder};
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normal_quantile_matches_reference_values() {
        // Reference values computed with an independent high-precision
        // implementation and frozen here.
        let cases = [
            (0.5, 0.0),
            (0.6, 0.2533471031357997),
            (0.75, 0.6744897501960817),
            (0.9, 1.2815515655446004),
            (0.95, 1.6448536269514722),
            (0.975, 1.959963984540054),
            (0.99, 2.3263478740408408),
            (0.995, 2.5758293035489004),
            (0.999, 3.090232306167813),
            (0.9999, 3.719016485455709),
            (1.0 - 1e-6, 4.753424308817087),
            (1.0 - 1e-9, 5.997807019601637),
            (0.025, -1.9599639845400545),
            (1e-6, -4.753424308822899),
            (0.3, -0.5244005127080409),
        ];
        for (p, expected) in cases {
            let got = normal_quantile(p).unwrap();
            assert!(
                close(got, expected, 1e-9),
                "quantile({p}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn normal_quantile_rejects_boundaries() {
        for p in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err(), "p = {p} should be rejected");
        }
    }

    #[test]
    fn wilson_matches_reference_values() {
        let level = ConfidenceLevel::ninety_five();
        let ci = wilson_interval(0, 3, level).unwrap();
        assert!(close(ci.lower, 0.0, 1e-12));
        assert!(close(ci.upper, 0.5614970317550455, 1e-9));

        let ci = wilson_interval(2, 5, level).unwrap();
        assert!(close(ci.lower, 0.11762077423264783, 1e-9));
        assert!(close(ci.upper, 0.769275718723987, 1e-9));

        let ci = wilson_interval(1, 1, level).unwrap();
        assert!(close(ci.lower, 0.20654931437723745, 1e-9));
        assert!(close(ci.upper, 1.0, 1e-12));
    }

    #[test]
    fn wald_matches_reference_and_degenerates_at_extremes() {
        let level = ConfidenceLevel::ninety_five();
        let ci = wald_interval(1, 4, level).unwrap();
        assert!(close(ci.lower, 0.0, 1e-12));
        assert!(close(ci.upper, 0.6743446502785644, 1e-9));

        for (k, r) in [(0u64, 3u64), (3, 3), (0, 1), (7, 7)] {
            let ci = wald_interval(k, r, level).unwrap();
            assert!(
                ci.width().abs() < 1e-15,
                "wald({k},{r}) should be zero-width, got {}",
                ci.width()
            );
        }
    }

    #[test]
    fn wilson_always_contains_the_point_estimate() {
        let level = ConfidenceLevel::ninety_five();
        for r in 1..=30u64 {
            for k in 0..=r {
                let ci = wilson_interval(k, r, level).unwrap();
                assert!(ci.contains(ci.estimate), "wilson({k},{r}) excludes p-hat");
                assert!(ci.width() > 0.0, "wilson({k},{r}) collapsed");
            }
        }
    }

    #[test]
    fn wilson_widens_with_level() {
        let lo = ConfidenceLevel::new(0.8).unwrap();
        let hi = ConfidenceLevel::new(0.99).unwrap();
        for (k, r) in [(0u64, 3u64), (2, 5), (5, 10), (9, 10)] {
            let narrow = wilson_interval(k, r, lo).unwrap();
            let wide = wilson_interval(k, r, hi).unwrap();
            assert!(wide.lower <= narrow.lower + 1e-12);
            assert!(wide.upper >= narrow.upper - 1e-12);
            assert!(wide.width() > narrow.width());
        }
    }

    #[test]
    fn interval_input_validation() {
        let level = ConfidenceLevel::ninety_five();
        assert!(matches!(
            wilson_interval(0, 0, level),
            Err(StatsError::NoTrials)
        ));
        assert!(matches!(
            wald_interval(4, 3, level),
            Err(StatsError::TooManySuccesses { .. })
        ));
        assert!(matches!(
            ConfidenceLevel::new(1.0),
            Err(StatsError::BadLevel(_))
        ));
    }

    #[test]
    fn disjoint_is_strict() {
        let a = ConfidenceInterval {
            estimate: 0.2,
            lower: 0.1,
            upper: 0.3,
            method: IntervalMethod::Wald,
            level: 0.95,
        };
        let mut b = a.clone();
        b.lower = 0.3;
        b.upper = 0.5;
        assert!(!a.disjoint(&b), "shared endpoint is not disjoint");
        b.lower = 0.300001;
        assert!(a.disjoint(&b));
    }

    #[test]
    fn jeffreys_draw_mean_matches_posterior_mean() {
        // Beta(0.5, 3.5) has mean 1/8.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| jeffreys_draw(0, 3, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        // sd of Beta(0.5, 3.5) is sqrt(1.75/80); allow 4 standard errors.
        let se = (1.75f64 / 80.0).sqrt() / (n as f64).sqrt();
        assert!(
            close(mean, 0.125, 4.0 * se),
            "jeffreys mean {mean} too far from 0.125"
        );
    }

    #[test]
    fn pass_at_k_matches_closed_form() {
        let got = pass_at_k(&[0.3], 5).unwrap();
        assert!(close(got, 0.8319300000000001, 1e-12));
        // k = 1 is the plain mean.
        let rates = [0.1, 0.5, 0.9];
        assert!(close(pass_at_k(&rates, 1).unwrap(), 0.5, 1e-12));
        // Monotone in k.
        let mut last = 0.0;
        for k in 1..=64 {
            let v = pass_at_k(&rates, k).unwrap();
            assert!(v >= last - 1e-15);
            last = v;
        }
        assert!(pass_at_k(&[], 1).is_err());
        assert!(pass_at_k(&[0.5], 0).is_err());
        assert!(pass_at_k(&[1.2], 3).is_err());
    }

    fn pooling_tree() -> crate::model::BenchmarkTree {
        let mut builder = TreeBuilder::new("m", AxisMask::from_axes(&[Axis::Theme]));
        let base = ConfigKey::default_key();
        builder
            .set_leaf("a1", "s1", base.with_axis(Axis::Theme, "dark"), vec![true])
            .unwrap();
        builder
            .set_leaf(
                "a1",
                "s1",
                base.with_axis(Axis::Theme, "light"),
                vec![false, false, false],
            )
            .unwrap();
        builder
            .set_leaf("a2", "s1", base.with_axis(Axis::Theme, "dark"), vec![true, true])
            .unwrap();
        builder.build()
    }

    #[test]
    fn pooling_modes_differ_on_unbalanced_leaves() {
        let tree = pooling_tree();
        let rollout = suite_mean_pooled(&tree, PoolingMode::RolloutWeighted).unwrap();
        // a1 pools 1/4; a2 pools 2/2.
        assert!(close(rollout.per_app["a1"], 0.25, 1e-12));
        assert!(close(rollout.per_app["a2"], 1.0, 1e-12));
        assert!(close(rollout.theta_hat, 0.625, 1e-12));

        let leaf = suite_mean_pooled(&tree, PoolingMode::LeafWeighted).unwrap();
        // a1 averages leaf rates (1.0 + 0.0) / 2.
        assert!(close(leaf.per_app["a1"], 0.5, 1e-12));
        assert!(close(leaf.theta_hat, 0.75, 1e-12));
    }

    #[test]
    fn trimmed_mean_drops_floor_per_tail() {
        let mut builder = TreeBuilder::new("m", AxisMask::none());
        let rates = [(0u32, 10u32), (1, 10), (5, 10), (9, 10), (10, 10)];
        for (i, (k, n)) in rates.iter().enumerate() {
            let outcomes: Vec<bool> = (0..*n).map(|j| j < *k).collect();
            builder
                .set_leaf(format!("a{i}"), "s", ConfigKey::default_key(), outcomes)
                .unwrap();
        }
        let tree = builder.build();
        // trim = 0.2, A = 5: floor(1.0) = 1 app per tail.
        let trimmed = trimmed_suite_mean(&tree, 0.2).unwrap();
        assert!(close(trimmed, (0.1 + 0.5 + 0.9) / 3.0, 1e-12));
        // trim = 0 reproduces the plain mean.
        let plain = trimmed_suite_mean(&tree, 0.0).unwrap();
        assert!(close(plain, suite_mean(&tree).unwrap().theta_hat, 1e-12));
        assert!(trimmed_suite_mean(&tree, 0.5).is_err());
    }
}
