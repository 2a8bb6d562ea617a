//! Trajectory data: validation, long-format CSV ingestion, and subject-level folds.
//!
//! The CSV layout is one row per subject-stage:
//!
//! ```text
//! subject,stage,a,r,mu,x1,...,xd
//! ```
//!
//! Stages run `1..=T` without gaps for every subject, `a` is `-1` or `1`, and
//! `mu` is the behavior probability of the observed action.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A binary treatment in `{-1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Minus,
    Plus,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Plus, Action::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Action::Plus => 1.0,
            Action::Minus => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Action::Plus)
        } else if v == -1.0 {
            Ok(Action::Minus)
        } else {
            Err(Error::Domain(format!("action must be -1 or 1, got {v}")))
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Action::Plus => Action::Minus,
            Action::Minus => Action::Plus,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Plus => write!(f, "1"),
            Action::Minus => write!(f, "-1"),
        }
    }
}

/// One stage of one subject: features, action, reward and the behavior
/// probability of the action that was taken.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub x: Vec<f64>,
    pub a: Action,
    pub r: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub subject: String,
    pub stages: Vec<StageRecord>,
}

/// An immutable collection of equal-length trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    d: usize,
    horizon: usize,
}

fn validate_stage(subject: &str, stage: usize, rec: &StageRecord, d: usize) -> Result<()> {
    if rec.x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: rec.x.len(),
        });
    }
    if let Some(bad) = rec.x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite feature {bad} for subject {subject}, stage {stage}"
        )));
    }
    if !rec.r.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite reward for subject {subject}, stage {stage}"
        )));
    }
    if !(rec.mu > 0.0 && rec.mu <= 1.0) {
        return Err(Error::Positivity {
            subject: subject.to_string(),
            stage,
            mu: rec.mu,
        });
    }
    Ok(())
}

impl Dataset {
    /// Builds a dataset, checking that every trajectory has the same horizon
    /// and feature dimension. Validated files additionally require `n >= 2`
    /// (see [`load_dataset`]); programmatic construction accepts `n >= 1`.
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no trajectories".into()))?;
        let horizon = first.stages.len();
        if horizon == 0 {
            return Err(Error::MalformedTrajectory {
                subject: first.subject.clone(),
                reason: "no stages".into(),
            });
        }
        let d = first.stages[0].x.len();
        if d == 0 {
            return Err(Error::Schema("feature dimension must be at least 1".into()));
        }
        for traj in &trajectories {
            if traj.stages.len() != horizon {
                return Err(Error::MalformedTrajectory {
                    subject: traj.subject.clone(),
                    reason: format!("has {} stages, expected {horizon}", traj.stages.len()),
                });
            }
            for (t, rec) in traj.stages.iter().enumerate() {
                validate_stage(&traj.subject, t + 1, rec, d)?;
            }
        }
        Ok(Dataset {
            trajectories,
            d,
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// The dataset restricted to (possibly repeated) subject indices.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            trajectories: indices
                .iter()
                .map(|&i| self.trajectories[i].clone())
                .collect(),
            d: self.d,
            horizon: self.horizon,
        }
    }

    /// Mean total reward over subjects.
    pub fn mean_total_reward(&self) -> f64 {
        let total: f64 = self
            .trajectories
            .iter()
            .map(|t| t.stages.iter().map(|s| s.r).sum::<f64>())
            .sum();
        total / self.n() as f64
    }
}

fn parse_f64(field: &str, column: &str, line: u64) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Schema(format!(
            "line {line}: column {column} is not a number: {field:?}"
        ))
    })
}

/// Reads a long-format CSV dataset from any reader.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    for (pos, required) in ["subject", "stage", "a", "r", "mu"].iter().enumerate() {
        if names.get(pos) != Some(required) {
            return Err(Error::Schema(format!(
                "missing column {required:?} at position {}",
                pos + 1
            )));
        }
    }
    let d = names.len() - 5;
    if d == 0 {
        return Err(Error::Schema("no feature columns x1..xd".into()));
    }
    for (j, name) in names[5..].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::Schema(format!(
                "expected column x{}, found {name:?}",
                j + 1
            )));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, StageRecord)>> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(Error::Schema(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                names.len()
            )));
        }
        let subject = record[0].trim().to_string();
        let stage: usize = record[1].trim().parse().map_err(|_| {
            Error::Schema(format!(
                "line {line}: stage is not a positive integer: {:?}",
                &record[1]
            ))
        })?;
        let a = Action::from_sign(parse_f64(&record[2], "a", line)?)?;
        let r = parse_f64(&record[3], "r", line)?;
        let mu = parse_f64(&record[4], "mu", line)?;
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Positivity { subject, stage, mu });
        }
        let x = (0..d)
            .map(|j| parse_f64(&record[5 + j], names[5 + j], line))
            .collect::<Result<Vec<_>>>()?;
        if !rows.contains_key(&subject) {
            order.push(subject.clone());
        }
        rows.entry(subject)
            .or_default()
            .push((stage, StageRecord { x, a, r, mu }));
    }

    let mut trajectories = Vec::with_capacity(order.len());
    for subject in order {
        let mut stages = rows.remove(&subject).unwrap_or_default();
        stages.sort_by_key(|(s, _)| *s);
        for (expected, (stage, _)) in (1..).zip(&stages) {
            if *stage != expected {
                return Err(Error::MalformedTrajectory {
                    subject,
                    reason: format!(
                        "stages are not contiguous from 1 (found {stage}, expected {expected})"
                    ),
                });
            }
        }
        trajectories.push(Trajectory {
            subject,
            stages: stages.into_iter().map(|(_, r)| r).collect(),
        });
    }
    if trajectories.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a dataset needs at least 2 subjects, found {}",
            trajectories.len()
        )));
    }
    Dataset::new(trajectories)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?)
}

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header = vec![
        "subject".to_string(),
        "stage".into(),
        "a".into(),
        "r".into(),
        "mu".into(),
    ];
    header.extend((1..=ds.d()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for traj in ds.trajectories() {
        for (t, rec) in traj.stages.iter().enumerate() {
            let mut row = vec![
                traj.subject.clone(),
                (t + 1).to_string(),
                rec.a.to_string(),
                fmt_f64(rec.r),
                fmt_f64(rec.mu),
            ];
            row.extend(rec.x.iter().map(|&v| fmt_f64(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, std::fs::File::create(path)?)
}

/// One cross-validation fold over subject indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Partitions `0..n` into `k` validation sets whose sizes differ by at most one.
pub fn split_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} must lie in [2, {n}]"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, "folds", n as u64, k as u64));
    let mut buckets = vec![Vec::new(); k];
    for (pos, &i) in perm.iter().enumerate() {
        buckets[pos % k].push(i);
    }
    Ok(buckets
        .into_iter()
        .map(|mut validation| {
            validation.sort_unstable();
            let mut in_val = vec![false; n];
            for &i in &validation {
                in_val[i] = true;
            }
            let train = (0..n).filter(|&i| !in_val[i]).collect();
            Fold { train, validation }
        })
        .collect())
}

pub fn split_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    split_indices(ds.n(), k, seed)
}
