//! CIR samples, windowing, normalisation, splits and PCA diagnostics.

mod io;
mod pca;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{import_csv, write_csv, write_pca_csv, ColumnMap, ImportReport, RowError};
pub use pca::{pca_project, Pca};
pub use synth::{synthesize, synthesize_measurement, SynthConfig};

use crate::error::{Error, Result};
use crate::model::Example;
use crate::rng;

/// Samples kept before the detected first path.
pub const PRE_PEAK: usize = 5;
/// Window length: the first path plus 151 samples after it, and `PRE_PEAK` before.
pub const WINDOW_LEN: usize = 157;
/// First-path threshold as a fraction of the trace maximum.
pub const DEFAULT_PEAK_FRAC: f64 = 0.4;
/// Labels with |Δd| at or above this are rejected as outliers.
pub const MAX_ABS_LABEL: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    BigRoom,
    MediumRoom,
    SmallRoom,
    Outdoor,
    Ttw,
}

impl Environment {
    pub const ALL: [Environment; 5] = [
        Environment::BigRoom,
        Environment::MediumRoom,
        Environment::SmallRoom,
        Environment::Outdoor,
        Environment::Ttw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Environment::BigRoom => "big_room",
            Environment::MediumRoom => "medium_room",
            Environment::SmallRoom => "small_room",
            Environment::Outdoor => "outdoor",
            Environment::Ttw => "ttw",
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Environment::ALL
            .into_iter()
            .find(|e| e.name() == key)
            .ok_or_else(|| Error::Data(format!("unknown environment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Obstacle {
    None,
    Aluminium,
    Plastic,
    Wood,
    Glass,
    Other,
}

impl Obstacle {
    pub const ALL: [Obstacle; 6] = [
        Obstacle::None,
        Obstacle::Aluminium,
        Obstacle::Plastic,
        Obstacle::Wood,
        Obstacle::Glass,
        Obstacle::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Obstacle::None => "none",
            Obstacle::Aluminium => "aluminium",
            Obstacle::Plastic => "plastic",
            Obstacle::Wood => "wood",
            Obstacle::Glass => "glass",
            Obstacle::Other => "other",
        }
    }
}

impl fmt::Display for Obstacle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Obstacle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "los" | "" => Ok(Obstacle::None),
            "aluminum" => Ok(Obstacle::Aluminium),
            _ => Obstacle::ALL
                .into_iter()
                .find(|o| o.name() == key)
                .ok_or_else(|| Error::Data(format!("unknown obstacle '{s}'"))),
        }
    }
}

/// One ranging measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirSample {
    pub cir: Vec<f64>,
    pub measured_range: f64,
    pub true_range: f64,
    pub environment: Environment,
    pub obstacle: Obstacle,
    pub los: bool,
}

impl CirSample {
    /// Validated constructor.
    pub fn new(
        cir: Vec<f64>,
        measured_range: f64,
        true_range: f64,
        environment: Environment,
        obstacle: Obstacle,
        los: bool,
    ) -> Result<Self> {
        let s = CirSample {
            cir,
            measured_range,
            true_range,
            environment,
            obstacle,
            los,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cir.len() != WINDOW_LEN {
            return Err(Error::Data(format!(
                "CIR has {} samples, expected {WINDOW_LEN}",
                self.cir.len()
            )));
        }
        if let Some(v) = self.cir.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Data(format!(
                "CIR amplitude {v} is not a finite non-negative value"
            )));
        }
        if !(self.true_range > 0.0 && self.true_range.is_finite()) {
            return Err(Error::Data(format!(
                "true range {} must be positive",
                self.true_range
            )));
        }
        if !self.measured_range.is_finite() {
            return Err(Error::Data("measured range is not finite".into()));
        }
        let label = self.label();
        if label.abs() >= MAX_ABS_LABEL {
            return Err(Error::Data(format!(
                "range error {label:.3} m exceeds the ±{MAX_ABS_LABEL} m sanity bound"
            )));
        }
        Ok(())
    }

    /// Range error Δd = d̂ − d.
    pub fn label(&self) -> f64 {
        self.measured_range - self.true_range
    }
}

/// First index with `raw[i] ≥ frac · max(raw)`.
pub fn first_path_index(raw: &[f64], frac: f64) -> Result<usize> {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return Err(Error::Data("CIR trace has no positive maximum".into()));
    }
    let thr = frac * max;
    Ok(raw
        .iter()
        .position(|&v| v >= thr)
        .expect("max itself crosses"))
}

/// `raw[i−5 .. i+151]` around the first path `i`, zero-padded at the edges.
pub fn window_cir(raw: &[f64], frac: f64) -> Result<Vec<f64>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "peak fraction {frac} outside (0, 1]"
        )));
    }
    let i = first_path_index(raw, frac)?;
    Ok((0..WINDOW_LEN)
        .map(|j| {
            let src = i as isize - PRE_PEAK as isize + j as isize;
            if src < 0 || src as usize >= raw.len() {
                0.0
            } else {
                raw[src as usize]
            }
        })
        .collect())
}

/// Scales the CIR so its largest amplitude is 1.
pub fn normalize(sample: &CirSample) -> Result<CirSample> {
    let max = sample.cir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max.is_nan() || max <= 0.0 {
        return Err(Error::Data("cannot normalize an all-zero CIR".into()));
    }
    let mut out = sample.clone();
    out.cir.iter_mut().for_each(|v| *v /= max);
    Ok(out)
}

/// The first `k` entries of the window.
pub fn truncate_to_k(cir: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > cir.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} outside 1..={}",
            cir.len()
        )));
    }
    Ok(cir[..k].to_vec())
}

/// Normalised, truncated regression examples (target Δd).
pub fn to_examples(samples: &[CirSample], k: usize) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| {
            Ok(Example::new(
                truncate_to_k(&normalize(s)?.cir, k)?,
                s.label(),
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPolicy {
    /// Train on big and small rooms, test on the medium room; outdoor and
    /// through-the-wall samples are left out.
    PaperDefault,
    /// Train on one environment, test on all others.
    ByEnvironment(Environment),
    /// Train on one obstacle class, test on all others.
    ByObstacle(Obstacle),
    /// Per (environment, LoS) stratum, a seeded `frac` goes to train.
    Stratified { frac: f64, seed: u64 },
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPolicy::PaperDefault => write!(f, "paper_default"),
            SplitPolicy::ByEnvironment(e) => write!(f, "by_environment({e})"),
            SplitPolicy::ByObstacle(o) => write!(f, "by_obstacle({o})"),
            SplitPolicy::Stratified { frac, seed } => write!(f, "stratified({frac},{seed})"),
        }
    }
}

impl FromStr for SplitPolicy {
    type Err = Error;

    /// `paper_default`, `env:<name>`, `obstacle:<name>`, `stratified:<frac>[:<seed>]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().splitn(3, ':');
        let head = parts.next().unwrap_or_default();
        let arg = parts.next();
        match (head, arg) {
            ("paper_default", None) => Ok(SplitPolicy::PaperDefault),
            ("env", Some(e)) => Ok(SplitPolicy::ByEnvironment(e.parse()?)),
            ("obstacle", Some(o)) => Ok(SplitPolicy::ByObstacle(o.parse()?)),
            ("stratified", Some(fr)) => {
                let frac: f64 = fr
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad fraction '{fr}'")))?;
                if !(0.0..=1.0).contains(&frac) {
                    return Err(Error::InvalidArgument(format!(
                        "fraction {frac} outside [0, 1]"
                    )));
                }
                let seed = match parts.next() {
                    Some(v) => v
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad seed '{v}'")))?,
                    None => 0,
                };
                Ok(SplitPolicy::Stratified { frac, seed })
            }
            _ => Err(Error::InvalidArgument(format!(
                "unknown split policy '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<CirSample>,
    pub test: Vec<CirSample>,
    pub policy: String,
}

const SPLIT_STREAM: u64 = 0x5B117;

/// Partitions samples; relative order inside each side follows the input.
pub fn split(samples: &[CirSample], policy: SplitPolicy) -> DatasetSplit {
    let mut train = Vec::new();
    let mut test = Vec::new();
    match policy {
        SplitPolicy::PaperDefault => {
            for s in samples {
                match s.environment {
                    Environment::BigRoom | Environment::SmallRoom => train.push(s.clone()),
                    Environment::MediumRoom => test.push(s.clone()),
                    Environment::Outdoor | Environment::Ttw => {}
                }
            }
        }
        SplitPolicy::ByEnvironment(e) => {
            for s in samples {
                if s.environment == e {
                    train.push(s.clone())
                } else {
                    test.push(s.clone())
                }
            }
        }
        SplitPolicy::ByObstacle(o) => {
            for s in samples {
                if s.obstacle == o {
                    train.push(s.clone())
                } else {
                    test.push(s.clone())
                }
            }
        }
        SplitPolicy::Stratified { frac, seed } => {
            let mut to_train = vec![false; samples.len()];
            let mut strata: std::collections::BTreeMap<(Environment, bool), Vec<usize>> =
                Default::default();
            for (i, s) in samples.iter().enumerate() {
                strata.entry((s.environment, s.los)).or_default().push(i);
            }
            for (n, (_, mut idx)) in strata.into_iter().enumerate() {
                rng::shuffle(
                    &mut idx,
                    &mut rng::seeded(rng::derive_seed(seed, SPLIT_STREAM, n as u64)),
                );
                let take = (frac * idx.len() as f64).round() as usize;
                for &i in &idx[..take] {
                    to_train[i] = true;
                }
            }
            for (s, t) in samples.iter().zip(to_train) {
                if t {
                    train.push(s.clone())
                } else {
                    test.push(s.clone())
                }
            }
        }
    }
    DatasetSplit {
        train,
        test,
        policy: policy.to_string(),
    }
}

#[cfg(test)]
mod tests;
