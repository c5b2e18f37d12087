//! Replay equivalence: does attempt-level simulation of best-of-k selection
//! reproduce the closed-form expected success rate?

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::estimators::pass_at_k;
use crate::rng::substream;
use crate::simlab::calibration::SimError;

/// Environment the recorded attempts are replayed into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ReplayEnv {
    /// Replay against the recording environment itself.
    Static,
    /// Each attempt first has to land in a matching environment state; a
    /// mismatch fails the attempt outright. `match_prob` = 1 never draws the
    /// match coin, so it reproduces [`ReplayEnv::Static`] exactly.
    Multifactorial { match_prob: f64 },
}

/// One replay study: a task-rate vector replayed with best-of-k selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySpec {
    /// Per-task success rates of a single attempt.
    pub task_rates: Vec<f64>,
    /// Attempts per task; success means any attempt succeeds.
    pub k: u32,
    /// Monte Carlo trials (each trial replays every task).
    pub n_mc: usize,
    pub env: ReplayEnv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayResult {
    /// Mean simulated per-trial success rate.
    pub empirical: f64,
    /// Closed-form expected best-of-k success rate in this environment.
    pub analytic: f64,
    /// Standard error of the empirical estimate.
    pub mc_se: f64,
    pub trials: usize,
}

fn validate(spec: &ReplaySpec) -> Result<(), SimError> {
    if spec.task_rates.is_empty() {
        return Err(SimError::NoApps);
    }
    for &p in &spec.task_rates {
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::BadRate(p));
        }
    }
    if spec.k == 0 {
        return Err(SimError::NoRollouts);
    }
    if spec.n_mc == 0 {
        return Err(SimError::NoDraws);
    }
    if let ReplayEnv::Multifactorial { match_prob } = spec.env {
        if !(0.0..=1.0).contains(&match_prob) {
            return Err(SimError::BadMass(match_prob));
        }
    }
    Ok(())
}

/// Draws `n_vectors` task-rate vectors uniformly from `[lo, hi]`.
///
/// Vector `v` is read from its own substream, so the same seed reproduces the
/// same vectors no matter how many are requested or in what order they are
/// consumed. The streams are tagged to stay disjoint from the per-trial
/// streams of [`replay_study`] under a shared seed.
pub fn random_task_rates(
    n_vectors: usize,
    n_tasks: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    if n_tasks == 0 {
        return Err(SimError::NoApps);
    }
    for bound in [lo, hi] {
        if !(0.0..=1.0).contains(&bound) {
            return Err(SimError::BadRate(bound));
        }
    }
    if lo > hi {
        return Err(SimError::BadRate(lo));
    }
    const RATES_TAG: u64 = 0x0052_4154_4553; // disambiguates from trial paths
    Ok((0..n_vectors as u64)
        .map(|v| {
            let mut rng = substream(seed, &[RATES_TAG, v]);
            (0..n_tasks)
                .map(|_| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        })
        .collect())
}

/// Simulates attempt-level replay and compares with the analytic rate.
pub fn replay_study(spec: &ReplaySpec, seed: u64) -> Result<ReplayResult, SimError> {
    validate(spec)?;
    let analytic = match spec.env {
        ReplayEnv::Static => pass_at_k(&spec.task_rates, spec.k).expect("validated"),
        ReplayEnv::Multifactorial { match_prob } => {
            let effective: Vec<f64> =
                spec.task_rates.iter().map(|p| p * match_prob).collect();
            pass_at_k(&effective, spec.k).expect("validated")
        }
    };
    let n_tasks = spec.task_rates.len() as f64;
    // Per-trial success fraction; one substream per trial. Trials run in
    // fixed blocks with block partials added in block order, so the float
    // sums never depend on how rayon schedules the work.
    const BLOCK: u64 = 2048;
    let n = spec.n_mc as u64;
    let partials: Vec<(f64, f64)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for t in block * BLOCK..((block + 1) * BLOCK).min(n) {
                let mut rng = substream(seed, &[t]);
                let mut successes = 0u32;
                for &p in &spec.task_rates {
                    'attempts: for _ in 0..spec.k {
                        let matched = match spec.env {
                            ReplayEnv::Static => true,
                            ReplayEnv::Multifactorial { match_prob } => {
                                // match_prob = 1 must not consume randomness
                                // so the trial replays the static stream
                                // exactly.
                                match_prob >= 1.0 || rng.random::<f64>() < match_prob
                            }
                        };
                        if matched && rng.random::<f64>() < p {
                            successes += 1;
                            break 'attempts;
                        }
                    }
                }
                let fraction = f64::from(successes) / n_tasks;
                sum += fraction;
                sum_sq += fraction * fraction;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = spec.n_mc as f64;
    let empirical = sum / n;
    let variance = (sum_sq / n - empirical * empirical).max(0.0);
    // Sample SD over trials, scaled to the mean.
    let mc_se = if spec.n_mc > 1 {
        (variance * n / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(ReplayResult {
        empirical,
        analytic,
        mc_se,
        trials: spec.n_mc,
    })
}
