//! CSV import and export.
//!
//! Canonical schema: `d_meas,d_true,env,obstacle,los,cir_0,…,cir_156`.
//! CIR columns are every header `<prefix><index>`; with exactly 157 of
//! them the trace is taken as already windowed, otherwise it is treated
//! as a raw trace and windowed around its first path.

use std::fmt::Write as _;
use std::path::Path;

use super::{window_cir, CirSample, Environment, Obstacle, DEFAULT_PEAK_FRAC, WINDOW_LEN};
use crate::error::{Error, Result};

/// Binds CSV headers to sample fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub measured_range: String,
    pub true_range: String,
    pub environment: String,
    pub obstacle: String,
    /// When `None`, LoS is derived from `obstacle == none`.
    pub los: Option<String>,
    pub cir_prefix: String,
    pub peak_frac: f64,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            measured_range: "d_meas".into(),
            true_range: "d_true".into(),
            environment: "env".into(),
            obstacle: "obstacle".into(),
            los: Some("los".into()),
            cir_prefix: "cir_".into(),
            peak_frac: DEFAULT_PEAK_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ImportReport {
    pub samples: Vec<CirSample>,
    pub rejected: Vec<RowError>,
    /// Whether the CIR columns were raw traces that got windowed.
    pub windowed: bool,
}

impl ImportReport {
    pub fn error_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "accepted {} rows, rejected {}",
            self.samples.len(),
            self.rejected.len()
        );
        for e in &self.rejected {
            let _ = writeln!(s, "line {}: {}", e.line, e.reason);
        }
        s
    }
}

fn parse_los(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "los" | "yes" => Ok(true),
        "0" | "false" | "nlos" | "no" => Ok(false),
        _ => Err(Error::Data(format!("bad los flag '{s}'"))),
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("{what}: '{s}' is not a number")))
}

/// Reads and validates a CSV; bad rows land in `rejected`.
pub fn import_csv(path: &Path, map: &ColumnMap) -> Result<ImportReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("{}: missing column '{name}'", path.display())))
    };
    let c_meas = col(&map.measured_range)?;
    let c_true = col(&map.true_range)?;
    let c_env = col(&map.environment)?;
    let c_obs = col(&map.obstacle)?;
    let c_los = map.los.as_deref().map(col).transpose()?;
    let mut cir_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.trim()
                .strip_prefix(map.cir_prefix.as_str())?
                .parse::<usize>()
                .ok()
                .map(|n| (n, i))
        })
        .collect();
    cir_cols.sort_unstable();
    if cir_cols.is_empty() {
        return Err(Error::Data(format!(
            "{}: no '{}<n>' CIR columns",
            path.display(),
            map.cir_prefix
        )));
    }
    if cir_cols.iter().enumerate().any(|(i, &(n, _))| i != n) {
        return Err(Error::Data(format!(
            "{}: CIR columns are not numbered 0..{}",
            path.display(),
            cir_cols.len()
        )));
    }
    let windowed = cir_cols.len() != WINDOW_LEN;

    let mut report = ImportReport {
        windowed,
        ..Default::default()
    };
    for (row, record) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let parsed = record
            .map_err(Error::Csv)
            .and_then(|r| -> Result<CirSample> {
                let d_meas = parse_f64(&r[c_meas], "d_meas")?;
                let d_true = parse_f64(&r[c_true], "d_true")?;
                let env: Environment = r[c_env].parse()?;
                let obstacle: Obstacle = r[c_obs].parse()?;
                let los = match c_los {
                    Some(c) => parse_los(&r[c])?,
                    None => obstacle == Obstacle::None,
                };
                let mut cir = Vec::with_capacity(cir_cols.len());
                for &(n, c) in &cir_cols {
                    cir.push(parse_f64(&r[c], &format!("cir_{n}"))?);
                }
                if windowed {
                    cir = window_cir(&cir, map.peak_frac)?;
                }
                CirSample::new(cir, d_meas, d_true, env, obstacle, los)
            });
        match parsed {
            Ok(s) => report.samples.push(s),
            Err(e) => report.rejected.push(RowError {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes samples in the canonical schema.
pub fn write_csv(path: &Path, samples: &[CirSample]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["d_meas", "d_true", "env", "obstacle", "los"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..WINDOW_LEN).map(|i| format!("cir_{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![
            s.measured_range.to_string(),
            s.true_range.to_string(),
            s.environment.to_string(),
            s.obstacle.to_string(),
            (s.los as u8).to_string(),
        ];
        rec.extend(s.cir.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `x,y,z,env,obstacle` rows (first three projections).
pub fn write_pca_csv(path: &Path, projections: &[Vec<f64>], samples: &[CirSample]) -> Result<()> {
    if projections.len() != samples.len() {
        return Err(Error::shape(
            "pca csv",
            format!(
                "{} projections for {} samples",
                projections.len(),
                samples.len()
            ),
        ));
    }
    let mut w = writer(path)?;
    w.write_record(["x", "y", "z", "env", "obstacle"])?;
    for (p, s) in projections.iter().zip(samples) {
        let c = |i: usize| p.get(i).copied().unwrap_or(0.0).to_string();
        w.write_record([
            c(0),
            c(1),
            c(2),
            s.environment.to_string(),
            s.obstacle.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
