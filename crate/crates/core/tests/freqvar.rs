use rayon::prelude::*;

use refmi::analysis::analyze_and_pool;
use refmi::freqvar::{boot_then_impute, simplified_mle_variance, simplified_point, vonhippel_pool, BootMiGrid, SimplifiedStats};
use refmi::impute::impute_dataset;
use refmi::sim::{generate_trial, DropoutSpec, EstimatorKind, Hazard, Mechanism, ModelSpec, ScenarioConfig};
use refmi::{AnalysisMethod, SeedStream, Strategy, TrialDataset};

fn scenario(n: usize, rate: f64) -> ScenarioConfig {
    let unit = ModelSpec { mu: vec![0.0, 0.0], sigma: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
    ScenarioConfig {
        name: None,
        n_a: n,
        n_r: n,
        last_visit: 1,
        true_ref: unit.clone(),
        true_act: ModelSpec { mu: vec![0.0, 0.5], ..unit },
        dropout: DropoutSpec {
            reference: Mechanism::None,
            active: if rate > 0.0 { Mechanism::Mcar { rate: Hazard::Constant(rate) } } else { Mechanism::None },
        },
        strategy: Strategy::J2r,
        estimators: vec![EstimatorKind::Rubin],
        m: 10,
        b: 0,
        boot_m: 2,
        reps: 1,
        alpha: 0.05,
        seed: 1,
        analysis: AnalysisMethod::DiffMeans,
        proper: true,
        bayes_draws: 1000,
        true_theta: None,
    }
}

fn trial(n: usize, rate: f64, seed: u64) -> TrialDataset {
    generate_trial(&scenario(n, rate), &mut SeedStream::new(seed).rng()).unwrap()
}

/// Monte-Carlo standard error of a grid's grand mean about its expectation
/// given the data.
fn grid_mean_se(grid: &BootMiGrid) -> f64 {
    let e = vonhippel_pool(grid, 0.05).unwrap();
    let (b, m) = (grid.bootstraps() as f64, grid.imputations() as f64);
    (e.sigma2_b / b + e.sigma2_w / (b * m)).sqrt()
}

#[test]
fn complete_data_rows_are_constant() {
    let d = trial(40, 0.0, 1);
    let grid = boot_then_impute(&d, Strategy::J2r, AnalysisMethod::DiffMeans, 20, 3, SeedStream::new(2)).unwrap();
    for b in 0..20 {
        let row = grid.row(b);
        assert!(row.iter().all(|v| *v == row[0]));
    }
    assert_eq!(grid.failed_attempts, 0);
}

#[test]
fn fixed_seed_gives_identical_grid() {
    let d = trial(40, 0.4, 3);
    let a = boot_then_impute(&d, Strategy::J2r, AnalysisMethod::DiffMeans, 30, 2, SeedStream::new(4)).unwrap();
    let b = boot_then_impute(&d, Strategy::J2r, AnalysisMethod::DiffMeans, 30, 2, SeedStream::new(4)).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| boot_then_impute(&d, Strategy::J2r, AnalysisMethod::DiffMeans, 30, 2, SeedStream::new(4)).unwrap());
    assert_eq!(a, c);
}

#[test]
fn large_grid_mean_matches_observed_data_mle() {
    let d = trial(300, 0.5, 5);
    let grid = boot_then_impute(&d, Strategy::J2r, AnalysisMethod::DiffMeans, 2000, 2, SeedStream::new(6)).unwrap();
    let target = simplified_point(&d).unwrap();
    let se = grid_mean_se(&grid);
    let gap = (grid.grand_mean() - target).abs();
    assert!(gap <= 3.0 * se, "grid mean {} vs {target}: gap {gap} > 3 x {se}", grid.grand_mean());
}

#[test]
fn total_variance_approaches_between_component() {
    let d = trial(150, 0.5, 7);
    let excess = |b: usize, m: usize| {
        let grid = boot_then_impute(&d, Strategy::J2r, AnalysisMethod::DiffMeans, b, m, SeedStream::new(8)).unwrap();
        let e = vonhippel_pool(&grid, 0.05).unwrap();
        (e.v_hat - e.sigma2_b) / e.v_hat
    };
    let small = excess(50, 2);
    let large = excess(800, 4);
    assert!(large < small, "{large} !< {small}");
    assert!(large < 0.01, "{large}");
}

#[test]
fn closed_form_variance_below_analyst_variance_at_heavy_dropout() {
    let cfg = scenario(250, 0.9);
    let root = SeedStream::new(909);
    let pairs: Vec<(f64, f64)> = (0..500u64)
        .into_par_iter()
        .map(|r| {
            let s = root.child(r);
            let data = generate_trial(&cfg, &mut s.child(0).rng()).unwrap();
            let done = impute_dataset(&data, Strategy::J2r, 5, true, s.child(1)).unwrap();
            let analyst = analyze_and_pool(&done, AnalysisMethod::DiffMeans, 0.05).unwrap().w_bar;
            let closed = done
                .iter()
                .map(|c| simplified_mle_variance(&SimplifiedStats::from_completed(&data, c).unwrap()))
                .sum::<f64>()
                / done.len() as f64;
            (closed, analyst)
        })
        .collect();
    let closed = pairs.iter().map(|p| p.0).sum::<f64>() / 500.0;
    let analyst = pairs.iter().map(|p| p.1).sum::<f64>() / 500.0;
    assert!(closed < analyst, "{closed} !< {analyst}");
}
