//! MAR and jump-to-reference (J2R) imputation of monotone missing outcomes.
//!
//! Under J2R an active-arm patient who drops out after visit `D` is treated as
//! having marginal mean `(μ_a,0..μ_a,D, μ_r,D+1..μ_r,J)` and a covariance whose
//! observed block is the active arm's while the conditional covariance of the
//! missing block given the observed block is the reference arm's.

use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, PatientRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::fit::{fit_mle, posterior_draw, ArmModel};
use crate::mvn::{cholesky_matrix, ConditionalPlan, CovMatrix, Matrix, MeanVector};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mar,
    J2r,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mar" => Ok(Strategy::Mar),
            "j2r" => Ok(Strategy::J2r),
            other => Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Pattern-specific joint distribution for an active-arm patient last seen at `dropout`.
#[derive(Debug, Clone, PartialEq)]
pub struct J2rJoint {
    pub mu_tilde: MeanVector,
    pub sigma_tilde: CovMatrix,
    pub dropout: usize,
}

pub fn build_j2r_joint(reference: &ArmModel, active: &ArmModel, dropout: usize) -> Result<J2rJoint> {
    let dim = reference.dim();
    if active.dim() != dim {
        return Err(Error::Dimension("reference and active models differ in dimension".into()));
    }
    if dropout + 1 >= dim {
        return Err(Error::InvalidInput(format!(
            "dropout index {dropout} leaves nothing to impute for J = {}",
            dim - 1
        )));
    }
    let obs: Vec<usize> = (0..=dropout).collect();
    let mis: Vec<usize> = (dropout + 1..dim).collect();
    let r = reference.sigma.matrix();
    let a = active.sigma.matrix();
    let r11 = r.select(&obs, &obs);
    let r12 = r.select(&obs, &mis);
    let r22 = r.select(&mis, &mis);
    let a11 = a.select(&obs, &obs);

    let chol = cholesky_matrix(&r11)?;
    // Gᵀ = R11⁻¹ R12, so G = R21 R11⁻¹.
    let g = chol.solve_matrix(&r12).transpose();
    let s21 = g.matmul(&a11);
    let s22 = r22.sub(&g.matmul(&r11.sub(&a11)).matmul(&g.transpose()));

    let mut sigma = Matrix::zeros(dim, dim);
    for (i, &oi) in obs.iter().enumerate() {
        for (j, &oj) in obs.iter().enumerate() {
            sigma[(oi, oj)] = a11[(i, j)];
        }
    }
    for (i, &mi) in mis.iter().enumerate() {
        for (j, &oj) in obs.iter().enumerate() {
            sigma[(mi, oj)] = s21[(i, j)];
            sigma[(oj, mi)] = s21[(i, j)];
        }
        for (j, &mj) in mis.iter().enumerate() {
            sigma[(mi, mj)] = s22[(i, j)];
        }
    }
    let sigma_tilde = CovMatrix::new(sigma.symmetrized())?;
    cholesky_matrix(sigma_tilde.matrix())?;

    let mut mu = active.mu.as_slice()[..=dropout].to_vec();
    mu.extend_from_slice(&reference.mu.as_slice()[dropout + 1..]);
    Ok(J2rJoint {
        mu_tilde: MeanVector::new(mu)?,
        sigma_tilde,
        dropout,
    })
}

/// Conditional sampling plans for every dropout pattern of both arms under one
/// pair of parameter values. Plans are built on first use and reused.
pub struct Imputer<'m> {
    reference: &'m ArmModel,
    active: &'m ArmModel,
    strategy: Strategy,
    /// Indexed by `2 D + arm indicator`.
    plans: Vec<Option<ConditionalPlan>>,
}

impl<'m> Imputer<'m> {
    pub fn new(reference: &'m ArmModel, active: &'m ArmModel, strategy: Strategy) -> Self {
        Imputer {
            reference,
            active,
            strategy,
            plans: Vec::new(),
        }
    }

    fn plan(&mut self, arm: Arm, dropout: usize) -> Result<&ConditionalPlan> {
        let slot = 2 * dropout + arm.indicator() as usize;
        if self.plans.len() <= slot {
            self.plans.resize_with(slot + 1, || None);
        }
        if self.plans[slot].is_none() {
            let obs: Vec<usize> = (0..=dropout).collect();
            let plan = match (arm, self.strategy) {
                (Arm::Active, Strategy::J2r) => {
                    let joint = build_j2r_joint(self.reference, self.active, dropout)?;
                    ConditionalPlan::new(&joint.mu_tilde, &joint.sigma_tilde, &obs)?
                }
                (Arm::Active, Strategy::Mar) => {
                    ConditionalPlan::new(&self.active.mu, &self.active.sigma, &obs)?
                }
                (Arm::Reference, _) => {
                    ConditionalPlan::new(&self.reference.mu, &self.reference.sigma, &obs)?
                }
            };
            self.plans[slot] = Some(plan);
        }
        Ok(self.plans[slot].as_ref().expect("plan just built"))
    }

    /// Draws the missing tail of `rec`; complete records are returned as is.
    pub fn impute<R: Rng + ?Sized>(&mut self, rec: &PatientRecord, rng: &mut R) -> Result<PatientRecord> {
        if rec.is_complete() {
            return Ok(rec.clone());
        }
        if rec.last_visit() + 1 != self.reference.dim() {
            return Err(Error::Dimension(format!(
                "record {} does not match the model dimension",
                rec.id()
            )));
        }
        let plan = self.plan(rec.arm(), rec.dropout())?;
        let tail = plan.draw(&rec.observed(), rng)?;
        Ok(rec.completed_with(&tail))
    }

    /// Conditional mean of the missing tail of `rec`.
    pub fn conditional_mean(&mut self, rec: &PatientRecord) -> Result<Vec<f64>> {
        if rec.is_complete() {
            return Ok(Vec::new());
        }
        self.plan(rec.arm(), rec.dropout())?.mean(&rec.observed())
    }
}

pub fn impute_patient<R: Rng + ?Sized>(
    rec: &PatientRecord,
    reference: &ArmModel,
    active: &ArmModel,
    strategy: Strategy,
    rng: &mut R,
) -> Result<PatientRecord> {
    Imputer::new(reference, active, strategy).impute(rec, rng)
}

/// Completes every record of `data` under one parameter pair. Patient `i`
/// draws from `stream.child(i)`.
pub fn complete_dataset(
    data: &TrialDataset,
    reference: &ArmModel,
    active: &ArmModel,
    strategy: Strategy,
    stream: SeedStream,
) -> Result<TrialDataset> {
    let mut imputer = Imputer::new(reference, active, strategy);
    let patients = data
        .patients()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.is_complete() {
                Ok(p.clone())
            } else {
                imputer.impute(p, &mut stream.child(i as u64).rng())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialDataset::from_parts_unchecked(data.last_visit(), patients))
}

pub fn fit_arms(data: &TrialDataset) -> Result<(ArmModel, ArmModel)> {
    let j = data.last_visit();
    Ok((
        fit_mle(j, data.arm(Arm::Reference))?,
        fit_mle(j, data.arm(Arm::Active))?,
    ))
}

/// `m` completed copies of `data`.
///
/// `proper`: each imputation conditions on a fresh posterior draw of both arm
/// models. Otherwise every imputation conditions on the arm MLEs.
///
/// Imputation `k` (0-based) uses `stream.child(k)`; within it the arm draws
/// use children `0` (reference) and `1` (active) of `child(k).child(0)`, and
/// patient `i` uses `child(k).child(1).child(i)`.
pub fn impute_dataset(
    data: &TrialDataset,
    strategy: Strategy,
    m: usize,
    proper: bool,
    stream: SeedStream,
) -> Result<Vec<TrialDataset>> {
    if m == 0 {
        return Err(Error::InvalidInput("number of imputations must be at least 1".into()));
    }
    if data.count(Arm::Reference) == 0 {
        return Err(Error::EmptyArm(Arm::Reference));
    }
    if data.count(Arm::Active) == 0 {
        return Err(Error::EmptyArm(Arm::Active));
    }
    if data.is_complete() {
        return Ok(vec![data.clone(); m]);
    }
    let mle = if proper { None } else { Some(fit_arms(data)?) };
    let j = data.last_visit();
    (0..m)
        .into_par_iter()
        .map(|k| {
            let s = stream.child(k as u64);
            let drawn;
            let (reference, active) = match &mle {
                Some((r, a)) => (r, a),
                None => {
                    let params = s.child(0);
                    drawn = (
                        posterior_draw(j, data.arm(Arm::Reference), &mut params.child(0).rng())?,
                        posterior_draw(j, data.arm(Arm::Active), &mut params.child(1).rng())?,
                    );
                    (&drawn.0, &drawn.1)
                }
            };
            complete_dataset(data, reference, active, strategy, s.child(1))
        })
        .collect()
}
