mod common;

use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::Rng;
use rand_distr::StandardNormal;

use refmi::analysis::analyze_ancova;
use refmi::mvn::{condition, CovMatrix, Matrix, MeanVector};
use refmi::{Arm, PatientRecord, SeedStream, TrialDataset};

use common::{rat, rat_condition, rat_inverse, rat_least_squares, rat_matrix, to_f64};

fn trial(seed: u64, n: usize) -> TrialDataset {
    let mut rng = SeedStream::new(seed).rng();
    let patients = (0..2 * n)
        .map(|i| {
            let arm = if i % 2 == 0 { Arm::Active } else { Arm::Reference };
            let y0: f64 = rng.sample(StandardNormal);
            let y1 = 0.4 + 0.7 * y0 + if arm == Arm::Active { 0.9 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal);
            PatientRecord::complete(format!("p{i}"), arm, &[y0, y1]).unwrap()
        })
        .collect();
    TrialDataset::new(1, patients).unwrap()
}

#[test]
fn ancova_matches_exact_normal_equations() {
    for seed in 0..5 {
        let d = trial(seed, 60);
        let x: Vec<Vec<f64>> = d
            .patients()
            .iter()
            .map(|p| vec![1.0, p.outcome(0).unwrap(), p.arm().indicator() as f64])
            .collect();
        let y: Vec<f64> = d.patients().iter().map(|p| p.outcome(1).unwrap()).collect();
        let beta = rat_least_squares(&x, &y);
        let rss: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, yi)| (yi - r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2))
            .sum();
        let s2 = rss / (y.len() - 3) as f64;
        let xr = rat_matrix(&x);
        let xtx: Vec<Vec<_>> = (0..3)
            .map(|a| (0..3).map(|b| xr.iter().fold(rat(0.0), |acc, r| acc + &r[a] * &r[b])).collect())
            .collect();
        let w = s2 * to_f64(&rat_inverse(&xtx)[2][2]);

        let got = analyze_ancova(&d).unwrap();
        assert!((got.theta_hat - beta[2]).abs() < 1e-10 * beta[2].abs().max(1.0), "{} vs {}", got.theta_hat, beta[2]);
        assert!((got.w - w).abs() < 1e-10 * w, "{} vs {w}", got.w);
    }
}

fn random_case(seed: u64, dim: usize) -> (MeanVector, CovMatrix, Vec<usize>, Vec<f64>) {
    let mut rng = SeedStream::new(seed).rng();
    let g = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = CovMatrix::new(g.matmul(&g.transpose()).add(&Matrix::identity(dim).scale(0.2))).unwrap();
    let mu = MeanVector::new((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap();
    let mut obs: Vec<usize> = (0..dim).filter(|_| rng.random::<bool>()).collect();
    if obs.is_empty() || obs.len() == dim {
        obs = vec![0];
    }
    let y = obs.iter().map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    (mu, sigma, obs, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn conditioning_matches_exact_oracle(seed in 0u64..1_000_000, dim in 2usize..6) {
        let (mu, sigma, obs, y) = random_case(seed, dim);
        let got = condition(&mu, &sigma, &obs, &y).unwrap();
        let (mean, cov) = rat_condition(mu.as_slice(), &sigma.matrix().to_rows(), &obs, &y);
        for (a, b) in got.mean.iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "mean {} vs {}", a, b);
        }
        for (a, b) in got.cov.to_rows().iter().flatten().zip(cov.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "cov {} vs {}", a, b);
        }
    }
}
