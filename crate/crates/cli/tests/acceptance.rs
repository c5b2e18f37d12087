//! Acceptance studies: quantitative behavior of the estimators, the
//! resampling ladder, the simulation laboratory, the decision-gating
//! comparison, and the CLI determinism contract. Each test prints a single
//! PASS/FAIL line (visible with `--nocapture`) and asserts the same verdict.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use strata_core::analysis::{
    bootstrap_significance, gated_regret, split_half_regret, wald_significance, DecisionMethod,
};
use strata_core::bootstrap::{hierarchical_bootstrap, BootstrapConfig, ResampleLadder};
use strata_core::estimators::{
    jeffreys_draw, pass_at_k, wald_interval, wilson_interval, ConfidenceLevel, IntervalMethod,
};
use strata_core::integrity::{
    eval_constraint, eval_predicate, feasibility_matrix, parse_predicate, triviality_filter,
    InstanceSpec, ProfileStore,
};
use strata_core::model::{Axis, AxisMask, ConfigKey, TreeBuilder};
use strata_core::rng::derive_seed;
use strata_core::simlab::{
    bootstrap_b_sensitivity, build_calibration, coverage_study_base, coverage_study_suite,
    planted_two_model_suite, random_task_rates, replay_study, BaseCalibration, Estimand,
    LadderVariant, ReplayEnv, ReplaySpec, SuiteParams,
};
use strata_core::variability::{exceedance_curve, mad_of_deltas, matched_pairs};

fn report(criterion: &str, pass: bool, details: &str) {
    println!("{} — {criterion}: {details}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion}: {details}");
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// ---------------------------------------------------------------------------
// 1. Closed-form interval coverage at shallow rollout depths.

#[test]
fn shallow_depth_coverage_separates_the_interval_methods() {
    let started = Instant::now();
    let rows = coverage_study_base(
        &BaseCalibration::default(),
        &[1, 3, 5, 10],
        10_000,
        ConfidenceLevel::ninety_five(),
        0xB1,
    )
    .unwrap();
    let coverage = |r: u32, method: IntervalMethod| {
        rows.iter()
            .find(|row| row.rollouts == r && row.method == method)
            .map(|row| row.coverage)
            .unwrap()
    };
    let wald3 = coverage(3, IntervalMethod::Wald);
    let wilson_min = [1u32, 3, 5, 10]
        .into_iter()
        .map(|r| coverage(r, IntervalMethod::Wilson))
        .fold(f64::INFINITY, f64::min);
    let elapsed = started.elapsed();
    let pass = within(wald3, 0.25, 0.06) && wilson_min >= 0.90 && elapsed < Duration::from_secs(120);
    report(
        "shallow-depth interval coverage",
        pass,
        &format!(
            "wald@3 {wald3:.4} (target 0.25±0.06), min wilson {wilson_min:.4} (floor 0.90), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Ladder coverage on the calibrated homogeneous and heterogeneous suites.

#[test]
fn ladder_coverage_matches_the_calibrated_conditions() {
    let started = Instant::now();
    let level = ConfidenceLevel::ninety_five();
    let seed = 0xB2;

    let homogeneous = build_calibration(SuiteParams::homogeneous(), 0, 0).unwrap();
    let variants = vec![
        LadderVariant::new("rollouts", ResampleLadder::rollouts_only(), Default::default()),
        LadderVariant::new("full", ResampleLadder::full(), Default::default()),
    ];
    let homog_rows = coverage_study_suite(
        &homogeneous,
        &variants,
        200,
        500,
        level,
        Estimand::SuperPopulation,
        derive_seed(seed, &[0]),
    )
    .unwrap();
    let (roll, full) = (&homog_rows[0], &homog_rows[1]);

    let heterogeneous = build_calibration(
        SuiteParams::low_heterogeneity(),
        200_000,
        derive_seed(seed, &[1]),
    )
    .unwrap();
    let het_rows = coverage_study_suite(
        &heterogeneous,
        &variants[..1],
        200,
        500,
        level,
        Estimand::SuperPopulation,
        derive_seed(seed, &[2]),
    )
    .unwrap();
    let het_roll = &het_rows[0];

    let elapsed = started.elapsed();
    let pass = full.coverage >= 0.97
        && within(full.mean_width, 0.061, 0.02)
        && within(roll.coverage, 0.86, 0.06)
        && within(roll.mean_width, 0.013, 0.006)
        && within(het_roll.coverage, 0.60, 0.08)
        && elapsed < Duration::from_secs(900);
    report(
        "ladder coverage on calibrated suites",
        pass,
        &format!(
            "homogeneous full {:.3}/{:.4} (>=0.97, 0.061±0.02), rollout-only {:.3}/{:.4} \
             (0.86±0.06, 0.013±0.006), heterogeneous rollout-only {:.3} (0.60±0.08), {:.0}s",
            full.coverage,
            full.mean_width,
            roll.coverage,
            roll.mean_width,
            het_roll.coverage,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Coverage climbs rung by rung under strong scenario heterogeneity.

#[test]
fn coverage_climbs_rung_by_rung_under_heterogeneity() {
    let seed = 0xB3;
    let cal = build_calibration(
        SuiteParams::main_heterogeneous(),
        200_000,
        derive_seed(seed, &[0]),
    )
    .unwrap();
    let variants = vec![
        LadderVariant::new("rollouts", ResampleLadder::rollouts_only(), Default::default()),
        LadderVariant::new(
            "rollouts+axes",
            ResampleLadder::rollouts_and_axes(),
            Default::default(),
        ),
        LadderVariant::new("full", ResampleLadder::full(), Default::default()),
    ];
    let rows = coverage_study_suite(
        &cal,
        &variants,
        200,
        500,
        ConfidenceLevel::ninety_five(),
        Estimand::SuperPopulation,
        derive_seed(seed, &[1]),
    )
    .unwrap();
    let (c0, c1, c2) = (rows[0].coverage, rows[1].coverage, rows[2].coverage);
    let pass = c0 < c1 && c1 < c2 && c0 <= 0.30 && (0.40..=0.70).contains(&c1) && c2 >= 0.90;
    report(
        "rung-by-rung coverage ordering",
        pass,
        &format!("rollouts {c0:.3} (<=0.30) < +axes {c1:.3} (0.40..0.70) < full {c2:.3} (>=0.90)"),
    );
}

// ---------------------------------------------------------------------------
// 4. Interval width stabilizes in the replicate count; coverage stays high.

#[test]
fn interval_width_stabilizes_with_replicate_count() {
    let grid = [100usize, 150, 200, 300, 400, 500, 600, 800, 1000, 1200, 1600, 2000];
    let cal = build_calibration(SuiteParams::homogeneous(), 0, 0).unwrap();
    let variant = LadderVariant::new("full", ResampleLadder::full(), Default::default());
    let rows = bootstrap_b_sensitivity(
        &cal,
        &variant,
        &grid,
        200,
        ConfidenceLevel::ninety_five(),
        0xB4,
    )
    .unwrap();
    let width: BTreeMap<usize, f64> = rows.iter().map(|r| (r.replicates, r.mean_width)).collect();
    let mut max_step = 0.0f64;
    for &b in &grid {
        if b >= 300 {
            if let Some(&doubled) = width.get(&(2 * b)) {
                max_step = max_step.max((width[&b] - doubled).abs());
            }
        }
    }
    let min_coverage = rows.iter().map(|r| r.coverage).fold(f64::INFINITY, f64::min);
    let pass = max_step < 0.002 && min_coverage >= 0.95;
    report(
        "replicate-count stability",
        pass,
        &format!(
            "max |width(B)-width(2B)| {max_step:.5} (<0.002 for B>=300), min coverage {min_coverage:.3} (>=0.95)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Attempt-level replay reproduces the analytic best-of-k rate.

#[test]
fn replay_reproduces_the_analytic_best_of_k_rate() {
    let started = Instant::now();
    let seed = 0xB5_01;
    let vectors = random_task_rates(20, 5, 0.05, 0.95, derive_seed(seed, &[0])).unwrap();
    let mut max_z = 0.0f64;
    let mut strict_gap = true;
    for (vi, rates) in vectors.iter().enumerate() {
        let single = pass_at_k(rates, 1).unwrap();
        for (ki, k) in [1u32, 2, 5, 20].into_iter().enumerate() {
            let spec = ReplaySpec {
                task_rates: rates.clone(),
                k,
                n_mc: 100_000,
                env: ReplayEnv::Static,
            };
            let result =
                replay_study(&spec, derive_seed(seed, &[1, vi as u64, ki as u64])).unwrap();
            // Binomial scale of the mean fraction: every sample can succeed
            // at high rates, zeroing the sample-based se, so floor it with
            // the closed-form one.
            let analytic_se = (rates
                .iter()
                .map(|&p| {
                    let q = pass_at_k(&[p], k).unwrap();
                    q * (1.0 - q)
                })
                .sum::<f64>()
                / (rates.len() as f64).powi(2)
                / spec.n_mc as f64)
                .sqrt();
            let se = result.mc_se.max(analytic_se);
            max_z = max_z.max((result.empirical - result.analytic).abs() / se);
            if k > 1 && result.analytic <= single {
                strict_gap = false;
            }
        }
    }

    // Floor-rate corollary: ten attempts-rich studies with every rate >= 0.1.
    let floored = random_task_rates(10, 5, 0.1, 0.95, derive_seed(seed, &[2])).unwrap();
    let mut min_high_k = f64::INFINITY;
    for (vi, rates) in floored.iter().enumerate() {
        assert!(pass_at_k(rates, 64).unwrap() >= 0.99);
        if vi < 3 {
            let spec = ReplaySpec {
                task_rates: rates.clone(),
                k: 64,
                n_mc: 20_000,
                env: ReplayEnv::Static,
            };
            let result = replay_study(&spec, derive_seed(seed, &[3, vi as u64])).unwrap();
            min_high_k = min_high_k.min(result.empirical);
        }
    }
    let elapsed = started.elapsed();
    let pass =
        max_z < 3.0 && strict_gap && min_high_k >= 0.99 && elapsed < Duration::from_secs(60);
    report(
        "replay equivalence",
        pass,
        &format!(
            "max |empirical-analytic|/se {max_z:.2} (<3), strict gap {strict_gap}, \
             min replay@64 {min_high_k:.4} (>=0.99), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Frozen closed-form oracles for the leaf estimators.

#[test]
fn closed_form_estimators_match_frozen_oracles() {
    let level = ConfidenceLevel::ninety_five();
    let wilson = wilson_interval(0, 3, level).unwrap();
    let wilson_ok = wilson.lower == 0.0 && within(wilson.upper, 0.5615, 1e-3);

    let mut wald_ok = true;
    for r in [1u64, 3, 10] {
        wald_ok &= wald_interval(0, r, level).unwrap().width() == 0.0;
        wald_ok &= wald_interval(r, r, level).unwrap().width() == 0.0;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xB6);
    let draws = 200_000;
    let mean = (0..draws)
        .map(|_| jeffreys_draw(0, 3, &mut rng).unwrap())
        .sum::<f64>()
        / draws as f64;
    // Beta(1/2, 7/2): mean 1/8, variance 7/320.
    let se = (7.0f64 / 320.0 / draws as f64).sqrt();
    let jeffreys_ok = within(mean, 0.125, 3.0 * se);

    let pass = wilson_ok && wald_ok && jeffreys_ok;
    report(
        "closed-form estimator oracles",
        pass,
        &format!(
            "wilson(0,3) [{:.4}, {:.4}] (upper 0.5615±1e-3), wald extremes zero-width {wald_ok}, \
             jeffreys mean {mean:.4} (0.125±{:.4})",
            wilson.lower,
            wilson.upper,
            3.0 * se
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Small-instance equivalence: resampling vs enumeration, feasibility vs
//    hand evaluation.

#[test]
fn small_instances_match_exhaustive_enumeration() {
    // One leaf with outcomes [1, 0, 0]: rollout-only resampling draws
    // Binomial(3, 1/3), whose 27 equally likely resamples put mass
    // [8, 12, 6, 1]/27 on suite means {0, 1/3, 2/3, 1}.
    let mut builder = TreeBuilder::new("m", AxisMask::none());
    builder
        .set_leaf("app", "s", ConfigKey::default_key(), vec![true, false, false])
        .unwrap();
    let tree = builder.build();
    let cfg = BootstrapConfig {
        ladder: ResampleLadder::rollouts_only(),
        replicates: 100_000,
        seed: 0xB7,
        ..BootstrapConfig::default()
    };
    let result = hierarchical_bootstrap(&tree, &cfg).unwrap();
    let mut counts = [0u64; 4];
    for &value in &result.replicates {
        counts[(value * 3.0).round() as usize] += 1;
    }
    let exact = [8.0, 12.0, 6.0, 1.0].map(|n| n / 27.0);
    let tv: f64 = counts
        .iter()
        .zip(exact)
        .map(|(&c, p)| (c as f64 / cfg.replicates as f64 - p).abs())
        .sum::<f64>()
        / 2.0;

    // Bundled feasibility fixtures against an independent hand-derived
    // truth table, then a re-evaluation pass over every verdict.
    let instances = InstanceSpec::load_many(fixture("instances.json")).unwrap();
    let profiles: Vec<ProfileStore> = ["profiles/p1.json", "profiles/p2.json"]
        .iter()
        .flat_map(|p| ProfileStore::load_many(fixture(p)).unwrap())
        .collect();
    let matrix = feasibility_matrix(&instances, &profiles).unwrap();
    let expected = [[true, false], [true, false], [false, true]];
    let mut matrix_ok = true;
    for (i, row) in expected.iter().enumerate() {
        for (p, &want) in row.iter().enumerate() {
            matrix_ok &= matrix.cell(i, p).feasible == want;
            // Re-evaluate the cell constraint by constraint.
            let brute = instances[i]
                .all_constraints()
                .iter()
                .all(|c| {
                    eval_constraint(c, &profiles[p], &instances[i].params)
                        .unwrap()
                        .satisfied
                });
            matrix_ok &= brute == matrix.cell(i, p).feasible;
        }
    }
    let triviality = triviality_filter(&instances, &profiles).unwrap();
    let trivial_ok = triviality.trivial
        == vec![
            ("pay-rent".to_string(), "household".to_string()),
            ("standup-check".to_string(), "office".to_string()),
        ]
        && triviality.survivors.len() == 4;
    // Every survivor's predicate must still evaluate false.
    let mut survivors_ok = true;
    for (instance_id, profile_id) in &triviality.survivors {
        let instance = instances.iter().find(|i| &i.id == instance_id).unwrap();
        let profile = profiles.iter().find(|p| &p.profile_id == profile_id).unwrap();
        if let Some(predicate) = &instance.predicate {
            let ast = parse_predicate(predicate).unwrap();
            survivors_ok &= !eval_predicate(&ast, profile).unwrap();
        }
    }

    let pass = tv < 0.01 && matrix_ok && trivial_ok && survivors_ok;
    report(
        "small-instance enumeration equivalence",
        pass,
        &format!(
            "resample TV vs 27-fold enumeration {tv:.4} (<0.01), matrix vs hand table {matrix_ok}, \
             exclusions {trivial_ok}, survivors re-check {survivors_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Gating direction: per-app bootstrap gates act on fewer fragile apps
//    than pooled closed-form gates, so their regret is lower.

#[test]
fn bootstrap_gating_cuts_regret_against_pooled_gating() {
    let master = 0xB8_06;
    let level = ConfidenceLevel::ninety_five();
    let reps = 50;
    let mut bootstrap_wins = 0;
    for rep in 0..reps {
        let seed = derive_seed(master, &[rep]);
        let (tree_a, tree_b) = planted_two_model_suite(derive_seed(seed, &[0]));
        let regret =
            split_half_regret(&tree_a, &tree_b, 1000, derive_seed(seed, &[1])).unwrap();
        let wald_flags = wald_significance(&tree_a, &tree_b, level).unwrap();
        let boot_cfg = BootstrapConfig {
            replicates: 500,
            level,
            seed: derive_seed(seed, &[2]),
            ..BootstrapConfig::default()
        };
        let boot_flags = bootstrap_significance(&tree_a, &tree_b, &boot_cfg).unwrap();
        let wald = gated_regret(&regret, &wald_flags, DecisionMethod::WaldDecision);
        let boot = gated_regret(&regret, &boot_flags, DecisionMethod::BootstrapDecision);
        if wald.total_regret > boot.total_regret {
            bootstrap_wins += 1;
        }
    }
    let pass = bootstrap_wins >= 48;
    report(
        "gating regret direction",
        pass,
        &format!("bootstrap gate beats pooled gate in {bootstrap_wins}/{reps} repetitions (>=48)"),
    );
}

// ---------------------------------------------------------------------------
// 9. Stochastic CLI commands are byte-stable across worker-thread caps.

#[test]
fn json_envelopes_are_identical_across_thread_caps() {
    let results = fixture("results.jsonl").display().to_string();
    let cases: Vec<Vec<String>> = vec![
        vec!["ci".into(), "--input".into(), results.clone()],
        vec!["per-app-ci".into(), "--input".into(), results.clone()],
        vec!["regret".into(), "--input".into(), results.clone()],
        vec!["simulate-coverage-base".into()],
        vec![
            "simulate-coverage-suite".into(),
            "--condition".into(),
            "homogeneous".into(),
            "--experiments".into(),
            "20".into(),
            "--replicates".into(),
            "200".into(),
        ],
        vec![
            "simulate-b-sensitivity".into(),
            "--experiments".into(),
            "10".into(),
            "--b-grid".into(),
            "100,200,400".into(),
        ],
        vec![
            "simulate-replay".into(),
            "--mc".into(),
            "50000".into(),
            "--vectors".into(),
            "5".into(),
        ],
    ];
    let mut diverged = Vec::new();
    for case in &cases {
        let mut runs = Vec::new();
        for threads in ["1", "4"] {
            let output = Command::new(env!("CARGO_BIN_EXE_strata"))
                .args(case)
                .args(["--seed", "31", "--format", "json", "--threads", threads])
                .env_remove("STRATA_SEED")
                .env_remove("STRATA_THREADS")
                .output()
                .unwrap();
            assert!(output.status.success(), "{} failed: {output:?}", case[0]);
            runs.push(output.stdout);
        }
        if runs[0] != runs[1] {
            diverged.push(case[0].clone());
        }
    }
    let pass = diverged.is_empty();
    report(
        "thread-cap determinism",
        pass,
        &format!(
            "{} stochastic commands byte-identical at caps 1 and 4{}",
            cases.len(),
            if pass {
                String::new()
            } else {
                format!("; diverged: {}", diverged.join(", "))
            }
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Dispersion fixtures: exact MAD, monotone exceedance, pair counting.

#[test]
fn dispersion_summaries_match_hand_computed_fixtures() {
    let mad = mad_of_deltas(&[0.2, -0.1, 0.1]).unwrap();
    let mad_ok = within(mad, 0.4 / 3.0, 1e-9);

    // 100 randomized trees: exceedance fractions never increase in the
    // threshold.
    let mut monotone = true;
    for f in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0 + f);
        let tree = random_two_axis_tree(&mut rng);
        let mut thresholds: Vec<f64> =
            (0..4).map(|_| rand::Rng::random_range(&mut rng, 0.0..0.6)).collect();
        thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let curve = exceedance_curve(&tree, Axis::Instance, &thresholds).unwrap();
        monotone &= curve.fractions.windows(2).all(|w| w[1] <= w[0]);
    }

    // Full 4x3 factorial, two scenarios: pair counts count one comparison
    // per value pair per fixed context.
    let mut builder = TreeBuilder::new(
        "m",
        AxisMask::from_axes(&[Axis::Instance, Axis::Theme]),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for scenario in ["s1", "s2"] {
        for i in 0..4 {
            for t in 0..3 {
                let mut key = ConfigKey::default_key();
                key.set(Axis::Instance, format!("i{i}"));
                key.set(Axis::Theme, format!("t{t}"));
                let outcomes: Vec<bool> =
                    (0..2).map(|_| rand::Rng::random::<bool>(&mut rng)).collect();
                builder.set_leaf("app", scenario, key, outcomes).unwrap();
            }
        }
    }
    let tree = builder.build();
    let instance_pairs = matched_pairs(&tree, Axis::Instance).unwrap().0.len();
    let theme_pairs = matched_pairs(&tree, Axis::Theme).unwrap().0.len();
    // 2 scenarios x C(4,2) x 3 contexts; 2 scenarios x C(3,2) x 4 contexts.
    let counts_ok = instance_pairs == 2 * 6 * 3 && theme_pairs == 2 * 3 * 4;

    let pass = mad_ok && monotone && counts_ok;
    report(
        "dispersion fixtures",
        pass,
        &format!(
            "MAD {mad:.10} (1/7.5±1e-9), exceedance monotone on 100 fixtures {monotone}, \
             pair counts {instance_pairs}/{theme_pairs} (36/24)"
        ),
    );
}

/// Random factorial tree with instance and theme axes for the monotonicity
/// sweep.
fn random_two_axis_tree(rng: &mut ChaCha8Rng) -> strata_core::model::BenchmarkTree {
    use rand::Rng;
    let mut builder = TreeBuilder::new(
        "m",
        AxisMask::from_axes(&[Axis::Instance, Axis::Theme]),
    );
    let apps = rng.random_range(1..=3usize);
    for a in 0..apps {
        let scenarios = rng.random_range(1..=2usize);
        let instances = rng.random_range(2..=4usize);
        let themes = rng.random_range(1..=3usize);
        let rollouts = rng.random_range(1..=4usize);
        for s in 0..scenarios {
            for i in 0..instances {
                for t in 0..themes {
                    let mut key = ConfigKey::default_key();
                    key.set(Axis::Instance, format!("i{i}"));
                    key.set(Axis::Theme, format!("t{t}"));
                    let outcomes: Vec<bool> =
                        (0..rollouts).map(|_| rng.random::<bool>()).collect();
                    builder
                        .set_leaf(format!("a{a}"), format!("s{s}"), key, outcomes)
                        .unwrap();
                }
            }
        }
    }
    builder.build()
}
