use repcov::coverage::Coverage;
use repcov::energy::{cell_avg_wasted, EnergyParams};
use repcov::interference::{InterferenceCdf, LaplaceSpec};
use repcov::model::{cell_constant, dbm_to_watts, CellConfig, Channel, CombinerKind, RepetitionProfile};
use repcov::montecarlo::*;

fn table_cell(channel: Channel, threshold: f64) -> CellConfig<f64> {
    CellConfig {
        density: 2e-4,
        radius: 1000.0,
        path_loss_exp: 3.5,
        tx_power: 0.1,
        noise_power: dbm_to_watts(-118.0),
        threshold,
        channel,
    }
}

fn no_rep() -> RepetitionProfile<f64> {
    RepetitionProfile::no_repetition(0.01).unwrap()
}

fn law(profile: RepetitionProfile<f64>, cell: CellConfig<f64>) -> InterferenceCdf<f64> {
    InterferenceCdf::new(LaplaceSpec::with_default_tolerance(profile, cell).unwrap(), 35)
        .unwrap()
        .with_cache_spanning(1024, 1e-10)
        .unwrap()
}

fn within_3se(mc: &McEstimate, analytic: f64) -> bool {
    (mc.mean - analytic).abs() <= 3.0 * mc.std_error()
}

#[test]
fn void_probability_matches_closed_form() {
    let mc = McConfig::for_combiner(
        CombinerKind::NoRepetition,
        1_000_000,
        2024,
        table_cell(Channel::PathLossOnly, 1.0),
        no_rep(),
    )
    .unwrap();
    let samples = interference_samples(&mc, mc.trials).unwrap();
    let empty = samples.iter().take_while(|&&x| x == 0.0).count() as f64 / mc.trials as f64;
    let p = (-2.0 * std::f64::consts::PI).exp();
    let sigma = (p * (1.0 - p) / mc.trials as f64).sqrt();
    assert!((empty - p).abs() <= 3.0 * sigma, "{empty} vs {p}");
}

#[test]
fn active_count_mean_matches_cell_constant() {
    let cell = table_cell(Channel::RayleighFading, 1.0);
    let profile = RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap();
    let trials = 100_000u64;
    let total: u64 = (0..trials)
        .map(|t| sample_field(&mut trial_rng(9, t), &cell, &profile).0)
        .sum();
    let mean = total as f64 / trials as f64;
    let want = cell.density * cell_constant(&profile, &cell).unwrap();
    let sigma = (want / trials as f64).sqrt();
    assert!((mean - want).abs() <= 3.0 * sigma, "{mean} vs {want}");
}

#[test]
fn half_width_shrinks_with_root_trials() {
    let cell = table_cell(Channel::RayleighFading, 1.0);
    let est = |trials| {
        let mc = McConfig::for_combiner(CombinerKind::NoRepetition, trials, 77, cell, no_rep()).unwrap();
        estimate_coverage(&mc, 300.0, CombinerKind::NoRepetition).unwrap()
    };
    let ratio = est(1_000).half_width_95 / est(100_000).half_width_95;
    assert!((ratio - 10.0).abs() < 1.5, "ratio {ratio}");
}

#[test]
fn empirical_cdf_within_dkw_band() {
    let n = 100_000u64;
    // P(sup |F_n - F| > ε) ≤ 2 exp(-2 n ε²) = 1e-3
    let eps = ((2.0f64 / 1e-3).ln() / (2.0 * n as f64)).sqrt();
    for channel in [Channel::PathLossOnly, Channel::RayleighFading] {
        let cell = table_cell(channel, 1.0);
        let profile = RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap();
        let cdf = law(profile, cell);
        let mc = McConfig::for_combiner(CombinerKind::NoRepetition, n, 5, cell, profile).unwrap();
        let samples = interference_samples(&mc, n).unwrap();
        let mut worst = 0.0f64;
        for (i, &x) in samples.iter().enumerate().step_by(97) {
            if x == 0.0 {
                continue;
            }
            let f = cdf.eval(x).unwrap();
            let below = i as f64 / n as f64;
            let upto = (i + 1) as f64 / n as f64;
            worst = worst.max((f - below).abs()).max((f - upto).abs());
        }
        assert!(worst <= eps, "{channel:?}: {worst} > {eps}");
    }
}

#[test]
fn single_repetition_sc_is_indistinguishable_from_no_repetition() {
    let cell = table_cell(Channel::RayleighFading, 1.0);
    let flat = RepetitionProfile::logistic(25.0, 2000.0, 0.01).unwrap();
    assert_eq!(flat.repetitions(500.0), 1);
    let n = 100_000;
    let sc = McConfig::for_combiner(CombinerKind::SelectionCombining, n, 1, cell, flat).unwrap();
    let nr = McConfig::for_combiner(CombinerKind::NoRepetition, n, 2, cell, flat).unwrap();
    let a = estimate_coverage(&sc, 500.0, CombinerKind::SelectionCombining)
        .unwrap()
        .mean;
    let b = estimate_coverage(&nr, 500.0, CombinerKind::NoRepetition).unwrap().mean;
    let pooled = 0.5 * (a + b);
    let z = (a - b) / (pooled * (1.0 - pooled) * 2.0 / n as f64).sqrt();
    // two-sided p > 0.01
    assert!(z.abs() < 2.576, "z = {z}");
}

#[test]
fn coverage_matches_analytic() {
    let cell = table_cell(Channel::RayleighFading, 1.0);
    let nr = no_rep();
    let nr_law = law(nr, cell);
    let cov = Coverage::new(&nr, &cell, &nr_law).unwrap();
    let mc = McConfig::for_combiner(CombinerKind::NoRepetition, 1_000_000, 11, cell, nr).unwrap();
    let est = estimate_coverage(&mc, 500.0, CombinerKind::NoRepetition).unwrap();
    let p = cov.success(CombinerKind::NoRepetition, 500.0, None).unwrap();
    assert!(within_3se(&est, p), "no repetition: {est:?} vs {p}");

    let profile = RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap();
    let rep_law = law(profile, cell);
    let cov = Coverage::new(&profile, &cell, &rep_law).unwrap();
    for (combiner, r, trials) in [
        (CombinerKind::MaximalRatioCombining, 900.0, 1_000_000),
        (CombinerKind::SelectionCombining, 950.0, 200_000),
    ] {
        let mc = McConfig::for_combiner(combiner, trials, 12, cell, profile).unwrap();
        let est = estimate_coverage(&mc, r, combiner).unwrap();
        let p = cov.success(combiner, r, None).unwrap();
        assert!(within_3se(&est, p), "{combiner:?}: {est:?} vs {p}");
    }
}

#[test]
fn shared_interference_lowers_selection_combining() {
    // selection over repetitions that share one interferer field gains less
    // than the independent-branch model credits
    let cell = table_cell(Channel::RayleighFading, 0.02);
    let profile = RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap();
    let run = |model| {
        let mc = McConfig::new(50_000, 3, model, cell, profile).unwrap();
        estimate_coverage(&mc, 950.0, CombinerKind::SelectionCombining).unwrap()
    };
    let independent = run(BranchModel::IndependentPerRepetition);
    let shared = run(BranchModel::SharedInterference);
    assert!(
        independent.mean - shared.mean > independent.half_width_95 + shared.half_width_95,
        "{independent:?} vs {shared:?}"
    );
}

#[test]
fn wasted_energy_matches_analytic_without_repetition() {
    let cell = table_cell(Channel::RayleighFading, 1.0);
    let nr = no_rep();
    let nr_law = law(nr, cell);
    let cov = Coverage::new(&nr, &cell, &nr_law).unwrap();
    let ep = EnergyParams::new(4.0, 0.1, 0.21, 1.0).unwrap();
    let analytic = cell_avg_wasted(CombinerKind::NoRepetition, &ep, &cov).unwrap();
    let mc = McConfig::for_combiner(CombinerKind::NoRepetition, 100_000, 13, cell, nr).unwrap();
    let est = estimate_wasted_energy(&mc, CombinerKind::NoRepetition, &ep).unwrap();
    assert!(within_3se(&est, analytic), "{est:?} vs {analytic}");
}

#[test]
fn moderate_repetition_wastes_less_than_none() {
    let cell = table_cell(Channel::RayleighFading, 0.01);
    let profile = RepetitionProfile::logistic(25.0, 1300.0, 0.01).unwrap();
    let ep = EnergyParams::new(4.0, 0.1, 0.21, 1.0).unwrap();
    let sc = McConfig::for_combiner(CombinerKind::SelectionCombining, 100_000, 21, cell, profile).unwrap();
    let sc = estimate_wasted_energy(&sc, CombinerKind::SelectionCombining, &ep).unwrap();
    let nr = McConfig::for_combiner(CombinerKind::NoRepetition, 100_000, 22, cell, profile).unwrap();
    let nr = estimate_wasted_energy(&nr, CombinerKind::NoRepetition, &ep).unwrap();
    assert!(
        sc.mean + sc.half_width_95 < nr.mean - nr.half_width_95,
        "{sc:?} vs {nr:?}"
    );
}
