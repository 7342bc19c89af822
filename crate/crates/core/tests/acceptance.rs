//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use refmi::analysis::{analyze_and_pool, analyze_diff_means};
use refmi::freqvar::{boot_then_impute, embedded_variance, simplified_var_active, vonhippel_pool, SimplifiedStats,
    simplified_mle_variance};
use refmi::impute::{build_j2r_joint, complete_dataset, fit_arms, impute_dataset};
use refmi::mvn::{condition, CovMatrix, Matrix, MeanVector};
use refmi::sim::{generate_trial, run_scenario, EstimatorKind, Mechanism, ScenarioConfig, SimReport};
use refmi::{AnalysisMethod, Arm, ArmModel, PatientRecord, SeedStream, Strategy, TrialDataset};

use common::{frobenius, frobenius_diff, rat_condition, schur};

const NULL_SCENARIO: &str = include_str!("../scenarios/null_j2r.toml");
const EXTREME_SCENARIO: &str = include_str!("../scenarios/extreme_dropout.toml");

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Check {
    Check { pass, detail }
}

fn random_pd(dim: usize, rng: &mut impl Rng) -> CovMatrix {
    let g = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    CovMatrix::new(g.matmul(&g.transpose()).add(&Matrix::identity(dim).scale(0.5))).unwrap()
}

fn random_model(dim: usize, rng: &mut impl Rng) -> ArmModel {
    let mu = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    ArmModel::new(MeanVector::new(mu).unwrap(), random_pd(dim, rng)).unwrap()
}

fn uncongeniality(report: &SimReport, elapsed: f64) -> Check {
    let rubin = report.estimator(EstimatorKind::Rubin).unwrap();
    let simp = report.estimator(EstimatorKind::SimplifiedMle).unwrap();
    check(
        rubin.variance_ratio > 1.2 && (0.9..=1.1).contains(&simp.variance_ratio) && elapsed < 300.0,
        format!(
            "rubin T/var = {:.3} (se {:.3}) > 1.2; simplified ratio = {:.3} (se {:.3}) in [0.9, 1.1]; {} reps in {:.0}s",
            rubin.variance_ratio, rubin.variance_ratio_se, simp.variance_ratio, simp.variance_ratio_se,
            report.replications, elapsed
        ),
    )
}

fn type_one_error(report: &SimReport) -> Check {
    let rubin = report.estimator(EstimatorKind::Rubin).unwrap();
    let boot = report.estimator(EstimatorKind::BootMi).unwrap();
    check(
        rubin.rejection_rate < 0.04 && (0.035..=0.065).contains(&boot.rejection_rate),
        format!(
            "rubin rejection = {:.4} < 0.04; boot_mi (B={}, M={}) rejection = {:.4} (se {:.4}) in [0.035, 0.065]",
            rubin.rejection_rate, report.scenario.b, report.scenario.boot_m, boot.rejection_rate, boot.rejection_rate_se
        ),
    )
}

fn vonhippel_calibration(report: &SimReport) -> Check {
    let boot = report.estimator(EstimatorKind::BootMi).unwrap();
    let rel = boot.mean_variance / boot.empirical_variance - 1.0;
    check(
        rel.abs() <= 0.10,
        format!(
            "mean v = {:.6}, empirical var = {:.6}, relative difference {:+.3} within 10%",
            boot.mean_variance, boot.empirical_variance, rel
        ),
    )
}

/// One `J = 1` dataset whose observed reference-arm baseline is orthogonal
/// to the follow-up outcome, so the fitted reference regression has slope 0.
fn orthogonal_dataset() -> TrialDataset {
    let mut rng = SeedStream::new(303).rng();
    let mut patients = Vec::new();
    for (arm, n, drop) in [(Arm::Active, 120, 0.4), (Arm::Reference, 120, 0.3)] {
        let rows: Vec<(f64, f64, bool)> = (0..n)
            .map(|_| {
                let y0: f64 = rng.sample(StandardNormal);
                let y1: f64 = 0.6 * y0 + rng.sample::<f64, _>(StandardNormal) + if arm == Arm::Active { 0.8 } else { 0.0 };
                (y0, y1, rng.random::<f64>() < drop)
            })
            .collect();
        let rows = if arm == Arm::Reference {
            let obs: Vec<&(f64, f64, bool)> = rows.iter().filter(|r| !r.2).collect();
            let k = obs.len() as f64;
            let m0 = obs.iter().map(|r| r.0).sum::<f64>() / k;
            let m1 = obs.iter().map(|r| r.1).sum::<f64>() / k;
            let sxy: f64 = obs.iter().map(|r| (r.0 - m0) * (r.1 - m1)).sum();
            let syy: f64 = obs.iter().map(|r| (r.1 - m1).powi(2)).sum();
            let b = sxy / syy;
            rows.iter().map(|&(y0, y1, d)| if d { (y0, y1, d) } else { (y0 - b * (y1 - m1), y1, d) }).collect()
        } else {
            rows
        };
        for (i, (y0, y1, d)) in rows.into_iter().enumerate() {
            let id = format!("{}{i}", if arm == Arm::Active { "a" } else { "r" });
            patients.push(PatientRecord::new(id, arm, vec![Some(y0), (!d).then_some(y1)]).unwrap());
        }
    }
    TrialDataset::new(1, patients).unwrap()
}

fn mi_convergence() -> Check {
    let data = orthogonal_dataset();
    let obs_mean = |arm| {
        let v: Vec<f64> = data.arm(arm).filter_map(|p| p.outcome(1)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let n_a = data.count(Arm::Active) as f64;
    let pi = data.arm(Arm::Active).filter(|p| p.dropout() == 0).count() as f64 / n_a;
    let target = (obs_mean(Arm::Active) - obs_mean(Arm::Reference)) * (1.0 - pi);

    let (reference, active) = fit_arms(&data).unwrap();
    let m = 10_000u64;
    let stream = SeedStream::new(304);
    let estimates: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|k| {
            let done = complete_dataset(&data, &reference, &active, Strategy::J2r, stream.child(k)).unwrap();
            analyze_diff_means(&done).unwrap().theta_hat
        })
        .collect();
    let mf = m as f64;
    let mean = estimates.iter().sum::<f64>() / mf;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt();
    let se = sd / mf.sqrt();
    let gap = (mean - target).abs();
    check(
        gap <= 3.0 * se,
        format!("M = {m}: MI mean = {mean:.6}, observed-data MLE = {target:.6}, |gap| = {gap:.2e} <= 3 x {se:.2e}"),
    )
}

fn extreme_missingness() -> Check {
    let cfg = ScenarioConfig::from_toml(EXTREME_SCENARIO).unwrap();
    let root = SeedStream::new(cfg.seed);
    let per_rep: Vec<[f64; 5]> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let s = root.child(r);
            let data = generate_trial(&cfg, &mut s.child(0).rng()).unwrap();
            let done = impute_dataset(&data, Strategy::J2r, cfg.m, true, s.child(1)).unwrap();
            let pooled = analyze_and_pool(&done, AnalysisMethod::DiffMeans, cfg.alpha).unwrap();
            let plain = done
                .iter()
                .map(|c| simplified_mle_variance(&SimplifiedStats::from_completed(&data, c).unwrap()))
                .sum::<f64>()
                / done.len() as f64;
            let embedded = embedded_variance(&data, &done).unwrap().total;
            [pooled.theta_bar, pooled.t_total, pooled.w_bar, plain, embedded]
        })
        .collect();
    let n = per_rep.len() as f64;
    let avg = |k: usize| per_rep.iter().map(|v| v[k]).sum::<f64>() / n;
    let theta = avg(0);
    let theta_sd = (per_rep.iter().map(|v| (v[0] - theta).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = theta_sd / n.sqrt();
    let (t, w, plain, embedded) = (avg(1), avg(2), avg(3), avg(4));
    check(
        theta.abs() <= 3.0 * se && plain < 0.1 * w && embedded < 0.1 * w && t > 0.5 * w,
        format!(
            "{} reps: mean estimate = {theta:.5} (3 se = {:.5}); closed-form var = {plain:.2e} (with imputation term {embedded:.2e}) < 0.1 x W = {:.2e}; T = {t:.2e} > 0.5 x W",
            cfg.reps,
            3.0 * se,
            0.1 * w
        ),
    )
}

fn j2r_identities() -> Check {
    let mut rng = SeedStream::new(505).rng();
    let (mut exact, mut worst) = (true, 0.0f64);
    for _ in 0..1000 {
        let dim = rng.random_range(2..=8);
        let d = rng.random_range(0..dim - 1);
        let reference = random_model(dim, &mut rng);
        let active = random_model(dim, &mut rng);
        let joint = build_j2r_joint(&reference, &active, d).unwrap();
        let obs: Vec<usize> = (0..=d).collect();
        exact &= joint.sigma_tilde.matrix().select(&obs, &obs) == active.sigma.matrix().select(&obs, &obs);
        let got = schur(&joint.sigma_tilde.matrix().to_rows(), d);
        let want = schur(&reference.sigma.matrix().to_rows(), d);
        worst = worst.max(frobenius_diff(&got, &want) / frobenius(&want));
    }
    check(
        exact && worst <= 1e-10,
        format!("1000 pairs: observed block identical = {exact}; worst relative Schur error = {worst:.2e} <= 1e-10"),
    )
}

fn conditioning_oracle() -> Check {
    let mut rng = SeedStream::new(606).rng();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let model = random_model(3, &mut rng);
        let k = rng.random_range(1..=2);
        let mut obs: Vec<usize> = (0..3).collect();
        while obs.len() > k {
            obs.remove(rng.random_range(0..obs.len()));
        }
        let y: Vec<f64> = obs.iter().map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let got = condition(&model.mu, &model.sigma, &obs, &y).unwrap();
        let (mean, cov) = rat_condition(model.mu.as_slice(), &model.sigma.matrix().to_rows(), &obs, &y);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        for (a, b) in got.mean.iter().zip(&mean) {
            worst = worst.max(rel(*a, *b));
        }
        for (a, b) in got.cov.to_rows().iter().flatten().zip(cov.iter().flatten()) {
            worst = worst.max(rel(*a, *b));
        }
    }
    check(worst <= 1e-10, format!("200 cases vs exact rational oracle: worst error = {worst:.2e} <= 1e-10"))
}

fn no_missingness() -> Check {
    let mut cfg = ScenarioConfig::from_toml(NULL_SCENARIO).unwrap();
    cfg.dropout.active = Mechanism::None;
    let data = generate_trial(&cfg, &mut SeedStream::new(707).rng()).unwrap();
    let single = analyze_diff_means(&data).unwrap();
    let done = impute_dataset(&data, Strategy::J2r, 10, true, SeedStream::new(708)).unwrap();
    let pooled = analyze_and_pool(&done, AnalysisMethod::DiffMeans, 0.05).unwrap();
    let d_theta = (pooled.theta_bar - single.theta_hat).abs();
    let d_t = (pooled.t_total - single.w).abs();
    let grid = boot_then_impute(&data, Strategy::J2r, AnalysisMethod::DiffMeans, 2000, 2, SeedStream::new(709)).unwrap();
    let v = vonhippel_pool(&grid, 0.05).unwrap().v_hat;
    let rel = v / single.w - 1.0;
    check(
        d_theta <= 1e-12 && d_t <= 1e-12 && rel.abs() <= 0.10,
        format!(
            "|pooled - single| = {d_theta:.1e}, |T - W| = {d_t:.1e} (<= 1e-12); bootstrap v at B=2000 = {v:.6} vs W = {:.6} ({rel:+.3})",
            single.w
        ),
    )
}

fn mixture_variance() -> Check {
    let settings: [(f64, f64, f64, f64, f64); 5] = [
        (0.0, 0.0, 1.0, 1.0, 0.5),
        (1.0, 0.0, 1.0, 1.0, 0.3),
        (2.0, -1.0, 0.5, 2.0, 0.2),
        (-0.5, 1.5, 3.0, 0.25, 0.7),
        (0.3, 0.2, 1.5, 1.0, 0.9),
    ];
    let n = 1_000_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, &(mu_a, mu_r, s2a, s2r, pi)) in settings.iter().enumerate() {
        let mut rng = SeedStream::new(808).child(i as u64).rng();
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < pi { mu_r + s2r.sqrt() * z } else { mu_a + s2a.sqrt() * z }
            })
            .collect();
        let nf = n as f64;
        let mean = draws.iter().sum::<f64>() / nf;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let se = ((m4 - var * var) / nf).sqrt();
        let want = simplified_var_active(mu_a, mu_r, s2a, s2r, pi);
        let z = (var - want) / se;
        pass &= z.abs() <= 3.0;
        lines.push(format!("{want:.4}/{var:.4} (z={z:+.2})"));
    }
    check(pass, format!("formula/empirical over 1e6 draws: {}", lines.join(", ")))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let mut run = |id: usize, label: &'static str, f: &dyn Fn() -> Check| {
        let start = Instant::now();
        let c = f();
        println!(
            "[{}] criterion {id}: {label}: {} ({:.1}s)",
            if c.pass { "PASS" } else { "FAIL" },
            c.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, label, c));
    };

    run(5, "J2R covariance identities", &j2r_identities);
    run(6, "conditioning vs exact oracle", &conditioning_oracle);
    run(8, "mixture variance of the active arm", &mixture_variance);
    run(3, "MI convergence to the observed-data MLE", &mi_convergence);
    run(7, "no-missingness identity", &no_missingness);
    run(4, "extreme missingness limit", &extreme_missingness);

    let cfg = ScenarioConfig::from_toml(NULL_SCENARIO).unwrap();
    let start = Instant::now();
    let report = run_scenario(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    run(1, "Rubin variance bias under uncongeniality", &|| uncongeniality(&report, elapsed));
    run(2, "type I error under the null", &|| type_one_error(&report));
    run(9, "bootstrap variance calibration", &|| vonhippel_calibration(&report));

    results.sort_by_key(|r| r.0);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
