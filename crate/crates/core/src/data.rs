//! Trial datasets with monotone missingness.
//!
//! CSV layout: header `id,arm,y0,...,yJ`, one row per patient, arm `0`
//! (reference) or `1` (active), blank cells for missing outcomes.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Reference,
    Active,
}

impl Arm {
    pub fn indicator(self) -> u8 {
        match self {
            Arm::Reference => 0,
            Arm::Active => 1,
        }
    }

    pub fn from_indicator(x: u8) -> Option<Arm> {
        match x {
            0 => Some(Arm::Reference),
            1 => Some(Arm::Active),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Reference => Arm::Active,
            Arm::Active => Arm::Reference,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Reference => "reference",
            Arm::Active => "active",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    id: Arc<str>,
    arm: Arm,
    dropout: usize,
    outcomes: Vec<Option<f64>>,
}

impl PatientRecord {
    /// Builds a record; the dropout index is the last observed visit.
    pub fn new(id: impl Into<String>, arm: Arm, outcomes: Vec<Option<f64>>) -> Result<Self> {
        let id = id.into();
        if outcomes.is_empty() {
            return Err(Error::InvalidInput(format!("record {id} has no visits")));
        }
        if outcomes[0].is_none() {
            return Err(Error::MissingBaseline { ids: vec![id] });
        }
        if outcomes.iter().flatten().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput(format!("record {id} has a non-finite outcome")));
        }
        let dropout = outcomes.iter().rposition(Option::is_some).unwrap_or(0);
        if outcomes[..dropout].iter().any(Option::is_none) {
            return Err(Error::NonMonotoneMissingness { ids: vec![id] });
        }
        Ok(PatientRecord {
            id: id.into(),
            arm,
            dropout,
            outcomes,
        })
    }

    /// Fully observed record.
    pub fn complete(id: impl Into<String>, arm: Arm, outcomes: &[f64]) -> Result<Self> {
        PatientRecord::new(id, arm, outcomes.iter().copied().map(Some).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    /// Index of the last observed visit.
    pub fn dropout(&self) -> usize {
        self.dropout
    }

    pub fn last_visit(&self) -> usize {
        self.outcomes.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.dropout == self.last_visit()
    }

    pub fn outcomes(&self) -> &[Option<f64>] {
        &self.outcomes
    }

    pub fn outcome(&self, visit: usize) -> Option<f64> {
        self.outcomes.get(visit).copied().flatten()
    }

    /// Observed prefix `y_0..=y_D`.
    pub fn observed(&self) -> Vec<f64> {
        self.outcomes[..=self.dropout].iter().map(|y| y.unwrap()).collect()
    }

    /// Copy with the missing tail filled in. `tail` must have length `J - D`.
    pub fn completed_with(&self, tail: &[f64]) -> PatientRecord {
        assert_eq!(tail.len(), self.last_visit() - self.dropout);
        let mut outcomes = self.outcomes.clone();
        for (slot, &v) in outcomes[self.dropout + 1..].iter_mut().zip(tail) {
            *slot = Some(v);
        }
        PatientRecord {
            id: self.id.clone(),
            arm: self.arm,
            dropout: self.last_visit(),
            outcomes,
        }
    }

    fn relabeled(&self, id: String) -> PatientRecord {
        PatientRecord { id: id.into(), ..self.clone() }
    }
}

/// Patients sharing one visit schedule `0..=J`.
///
/// Arm sizes are not constrained here; operations that need both arms (or a
/// minimum per-arm size) check for themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    last_visit: usize,
    patients: Vec<PatientRecord>,
}

impl TrialDataset {
    pub fn new(last_visit: usize, patients: Vec<PatientRecord>) -> Result<Self> {
        if let Some(p) = patients.iter().find(|p| p.last_visit() != last_visit) {
            return Err(Error::Dimension(format!(
                "record {} has {} visits, expected {}",
                p.id,
                p.outcomes.len(),
                last_visit + 1
            )));
        }
        let mut seen = HashSet::with_capacity(patients.len());
        let mut dups: Vec<String> = patients
            .iter()
            .filter(|p| !seen.insert(&*p.id))
            .map(|p| p.id.to_string())
            .collect();
        if !dups.is_empty() {
            dups.dedup();
            return Err(Error::DuplicateIds { ids: dups });
        }
        Ok(TrialDataset {
            last_visit,
            patients,
        })
    }

    pub(crate) fn from_parts_unchecked(last_visit: usize, patients: Vec<PatientRecord>) -> Self {
        TrialDataset {
            last_visit,
            patients,
        }
    }

    /// `J`, the index of the final visit.
    pub fn last_visit(&self) -> usize {
        self.last_visit
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.patients.iter().filter(|p| p.arm == arm).count()
    }

    pub fn n_active(&self) -> usize {
        self.count(Arm::Active)
    }

    pub fn n_reference(&self) -> usize {
        self.count(Arm::Reference)
    }

    pub fn is_complete(&self) -> bool {
        self.patients.iter().all(PatientRecord::is_complete)
    }

    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &PatientRecord> + '_ {
        self.patients.iter().filter(move |p| p.arm == arm)
    }

    /// Partition into (reference, active).
    pub fn split_by_arm(&self) -> Result<(TrialDataset, TrialDataset)> {
        let (active, reference): (Vec<_>, Vec<_>) =
            self.patients.iter().cloned().partition(|p| p.arm == Arm::Active);
        if reference.is_empty() {
            return Err(Error::EmptyArm(Arm::Reference));
        }
        if active.is_empty() {
            return Err(Error::EmptyArm(Arm::Active));
        }
        Ok((
            TrialDataset::from_parts_unchecked(self.last_visit, reference),
            TrialDataset::from_parts_unchecked(self.last_visit, active),
        ))
    }

    /// Stratified nonparametric bootstrap: each position is refilled with a
    /// uniformly drawn patient of the same arm, so arm sizes and the arm
    /// ordering are preserved. Resampled patients get ids `<orig>#<position>`.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialDataset {
        let patients = self
            .resample_indices(rng)
            .into_iter()
            .enumerate()
            .map(|(pos, i)| {
                let src = &self.patients[i];
                src.relabeled(format!("{}#{}", src.id, pos))
            })
            .collect();
        TrialDataset::from_parts_unchecked(self.last_visit, patients)
    }

    /// Same draw as [`TrialDataset::resample`] but keeps the source ids, so
    /// ids may repeat. For internal analyses that never look at ids.
    pub(crate) fn resample_shared<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialDataset {
        let patients = self.resample_indices(rng).into_iter().map(|i| self.patients[i].clone()).collect();
        TrialDataset::from_parts_unchecked(self.last_visit, patients)
    }

    fn resample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut by_arm: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, p) in self.patients.iter().enumerate() {
            by_arm[p.arm.indicator() as usize].push(i);
        }
        self.patients
            .iter()
            .map(|p| {
                let pool = &by_arm[p.arm.indicator() as usize];
                pool[rng.random_range(0..pool.len())]
            })
            .collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::MalformedRow { line: 1, reason: e.to_string() })?
            .clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 3 || names[0] != "id" || names[1] != "arm" {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "header must be id,arm,y0,...,yJ".into(),
            });
        }
        for (j, name) in names[2..].iter().enumerate() {
            if *name != format!("y{j}") {
                return Err(Error::MalformedRow {
                    line: 1,
                    reason: format!("expected column y{j}, found {name}"),
                });
            }
        }
        let last_visit = names.len() - 3;
        let mut patients = Vec::new();
        let mut non_monotone = Vec::new();
        let mut missing_baseline = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let line = k + 2;
            let row = row.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
            if row.len() != names.len() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("{} fields, expected {}", row.len(), names.len()),
                });
            }
            let id = row[0].to_string();
            if id.is_empty() {
                return Err(Error::MalformedRow { line, reason: "empty id".into() });
            }
            let arm = row[1]
                .parse::<u8>()
                .ok()
                .and_then(Arm::from_indicator)
                .ok_or_else(|| Error::MalformedRow {
                    line,
                    reason: format!("arm must be 0 or 1, found {:?}", &row[1]),
                })?;
            let outcomes = row
                .iter()
                .skip(2)
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|_| Error::MalformedRow {
                            line,
                            reason: format!("not a number: {cell:?}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            match PatientRecord::new(id, arm, outcomes) {
                Ok(p) => patients.push(p),
                Err(Error::NonMonotoneMissingness { ids }) => non_monotone.extend(ids),
                Err(Error::MissingBaseline { ids }) => missing_baseline.extend(ids),
                Err(Error::InvalidInput(reason)) => return Err(Error::MalformedRow { line, reason }),
                Err(e) => return Err(e),
            }
        }
        if !missing_baseline.is_empty() {
            return Err(Error::MissingBaseline { ids: missing_baseline });
        }
        if !non_monotone.is_empty() {
            return Err(Error::NonMonotoneMissingness { ids: non_monotone });
        }
        TrialDataset::new(last_visit, patients)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        TrialDataset::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec!["id".to_string(), "arm".to_string()];
        header.extend((0..=self.last_visit).map(|j| format!("y{j}")));
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&header).map_err(io)?;
        for p in &self.patients {
            let mut row = vec![p.id.to_string(), p.arm.indicator().to_string()];
            // `{}` on f64 prints the shortest string that parses back exactly.
            row.extend(p.outcomes.iter().map(|y| y.map_or_else(String::new, |v| v.to_string())));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
