//! Independent reference computations for integration tests.
#![allow(dead_code)]

use num::{BigRational, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(x: f64) -> Rat {
    BigRational::from_float(x).expect("finite")
}

pub fn to_f64(x: &Rat) -> f64 {
    x.to_f64().expect("representable")
}

pub fn rat_matrix(rows: &[Vec<f64>]) -> Vec<Vec<Rat>> {
    rows.iter().map(|r| r.iter().copied().map(rat).collect()).collect()
}

/// Exact inverse by Gauss-Jordan elimination.
pub fn rat_inverse(a: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rat::from_integer(1.into()) } else { Rat::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero()).expect("singular");
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(&pivot_row) {
                    *v = &*v - &(&f * pv);
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn rat_matmul(a: &[Vec<Rat>], b: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let inner = b.len();
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| (0..inner).fold(Rat::zero(), |acc, k| acc + &row[k] * &b[k][j]))
                .collect()
        })
        .collect()
}

pub fn select(m: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&i| cols.iter().map(|&j| m[i][j]).collect()).collect()
}

/// Conditional mean and covariance of the coordinates not in `obs` given
/// `y_obs`, from the explicit-inverse formulas in exact arithmetic.
pub fn rat_condition(mu: &[f64], sigma: &[Vec<f64>], obs: &[usize], y_obs: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mis: Vec<usize> = (0..mu.len()).filter(|i| !obs.contains(i)).collect();
    let s_oo = rat_matrix(&select(sigma, obs, obs));
    let s_mo = rat_matrix(&select(sigma, &mis, obs));
    let s_om = rat_matrix(&select(sigma, obs, &mis));
    let s_mm = rat_matrix(&select(sigma, &mis, &mis));
    let k = rat_matmul(&s_mo, &rat_inverse(&s_oo));
    let resid: Vec<Vec<Rat>> = obs.iter().zip(y_obs).map(|(&i, &y)| vec![rat(y) - rat(mu[i])]).collect();
    let shift = rat_matmul(&k, &resid);
    let mean = mis.iter().enumerate().map(|(a, &i)| to_f64(&(rat(mu[i]) + &shift[a][0]))).collect();
    let reduce = rat_matmul(&k, &s_om);
    let cov = (0..mis.len())
        .map(|a| (0..mis.len()).map(|b| to_f64(&(&s_mm[a][b] - &reduce[a][b]))).collect())
        .collect();
    (mean, cov)
}

/// Least squares by exact normal equations.
pub fn rat_least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let xr = rat_matrix(x);
    let p = x[0].len();
    let xtx: Vec<Vec<Rat>> = (0..p)
        .map(|a| (0..p).map(|b| xr.iter().fold(Rat::zero(), |acc, r| acc + &r[a] * &r[b])).collect())
        .collect();
    let xty: Vec<Vec<Rat>> = (0..p)
        .map(|a| vec![xr.iter().zip(y).fold(Rat::zero(), |acc, (r, &yi)| acc + &r[a] * rat(yi))])
        .collect();
    rat_matmul(&rat_inverse(&xtx), &xty).iter().map(|r| to_f64(&r[0])).collect()
}

/// Inverse by Gauss-Jordan with partial pivoting in `f64`.
pub fn f64_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn f64_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

/// `S22 − S21 S11⁻¹ S12` for the split `0..=d | d+1..`.
pub fn schur(s: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let n = s.len();
    let o: Vec<usize> = (0..=d).collect();
    let m: Vec<usize> = (d + 1..n).collect();
    let reduce = f64_matmul(&f64_matmul(&select(s, &m, &o), &f64_inverse(&select(s, &o, &o))), &select(s, &o, &m));
    let s22 = select(s, &m, &m);
    s22.iter().zip(&reduce).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect()
}

pub fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn frobenius_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
