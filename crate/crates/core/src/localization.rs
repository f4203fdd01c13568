//! Trilateration: range measurements from four or more anchors to a 3D
//! position by Gauss-Newton least squares with Levenberg damping.
//!
//! Cost `Σ (‖p − aᵢ‖ − dᵢ)²`. Each iteration solves
//! `(JᵀJ + λI) δ = −Jᵀr`; `λ` starts at 0 (pure Gauss-Newton) and is
//! engaged at 1e-3 when `JᵀJ` is ill-conditioned or a step raises the
//! cost, ×10 on each rejected step and ÷10 on each accepted one.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::dataset::{synthesize_measurement, Environment, Obstacle};
use crate::error::{Error, Result};
use crate::rng;

pub type Point3 = [f64; 3];

/// Anchors closer than this are treated as coincident.
const COINCIDENT: f64 = 1e-9;
/// Offset applied when an iterate lands on an anchor.
pub const ANCHOR_PERTURBATION: f64 = 1e-9;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Point3>,
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl AnchorSet {
    pub fn new(anchors: Vec<Point3>) -> Result<Self> {
        if anchors.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "{} anchors; at least 4 needed",
                anchors.len()
            )));
        }
        if anchors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "anchor coordinate is not finite".into(),
            ));
        }
        for i in 0..anchors.len() {
            for j in i + 1..anchors.len() {
                if dist(&anchors[i], &anchors[j]) < COINCIDENT {
                    return Err(Error::InvalidArgument(format!(
                        "anchors {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(AnchorSet { anchors })
    }

    pub fn anchors(&self) -> &[Point3] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.anchors.len() as f64;
        let mut c = [0.0; 3];
        for a in &self.anchors {
            for k in 0..3 {
                c[k] += a[k] / n;
            }
        }
        c
    }

    /// All anchors within 1e-6 of the extent of a common plane.
    pub fn is_coplanar(&self) -> bool {
        let c = self.centroid();
        let mut m = Matrix3::zeros();
        for a in &self.anchors {
            let v = Vector3::new(a[0] - c[0], a[1] - c[1], a[2] - c[2]);
            m += v * v.transpose();
        }
        let eig = m.symmetric_eigenvalues();
        let max = eig.max();
        eig.min() <= 1e-12 * max.max(f64::MIN_POSITIVE)
    }

    /// Non-fatal geometry notes.
    pub fn warnings(&self) -> Vec<String> {
        if self.is_coplanar() {
            vec![
                "anchors are coplanar: the position is ambiguous across their plane (z mirror)"
                    .into(),
            ]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Centroid,
    Explicit(Point3),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub position: Point3,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub final_step_norm: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

fn residuals(anchors: &[Point3], ranges: &[f64], p: &Point3) -> Vec<f64> {
    anchors
        .iter()
        .zip(ranges)
        .map(|(a, d)| dist(p, a) - d)
        .collect()
}

fn cost(anchors: &[Point3], ranges: &[f64], p: &Point3) -> f64 {
    residuals(anchors, ranges, p).iter().map(|r| r * r).sum()
}

pub fn gauss_newton_solve(
    anchors: &AnchorSet,
    ranges: &[f64],
    init: Init,
    opts: SolverOptions,
) -> Result<PositionFix> {
    let a = anchors.anchors();
    if ranges.len() != a.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ranges for {} anchors",
            ranges.len(),
            a.len()
        )));
    }
    if let Some(d) = ranges.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "range {d} must be positive"
        )));
    }
    let mut p = match init {
        Init::Centroid => anchors.centroid(),
        Init::Explicit(p) => p,
    };
    let mut diagnostics = anchors.warnings();
    let mut c = cost(a, ranges, &p);
    let mut lambda = 0.0f64;
    let mut step_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        if a.iter().any(|ai| dist(&p, ai) < COINCIDENT) {
            p[0] += ANCHOR_PERTURBATION;
            diagnostics.push(format!("iteration {iterations}: iterate on an anchor, perturbed by {ANCHOR_PERTURBATION} m"));
            c = cost(a, ranges, &p);
        }
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (ai, d) in a.iter().zip(ranges) {
            let diff = Vector3::new(p[0] - ai[0], p[1] - ai[1], p[2] - ai[2]);
            let n = diff.norm();
            let j = diff / n;
            jtj += j * j.transpose();
            jtr += j * (n - d);
        }
        if lambda == 0.0 {
            let eig = jtj.symmetric_eigenvalues();
            if eig.min() <= eig.max() / MAX_CONDITION {
                lambda = LAMBDA_START;
            }
        }
        // inner loop: raise damping until the step is accepted
        let accepted = loop {
            let m = jtj + Matrix3::identity() * lambda;
            let delta = match m.cholesky() {
                Some(ch) => ch.solve(&(-jtr)),
                None => {
                    lambda = if lambda == 0.0 {
                        LAMBDA_START
                    } else {
                        lambda * 10.0
                    };
                    if lambda > LAMBDA_MAX {
                        break None;
                    }
                    continue;
                }
            };
            step_norm = delta.norm();
            let cand = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
            let cc = cost(a, ranges, &cand);
            if cc <= c {
                break Some((cand, cc));
            }
            if step_norm <= opts.tol {
                // at the numerical floor: the cost can no longer decrease
                break Some((p, c));
            }
            lambda = if lambda == 0.0 {
                LAMBDA_START
            } else {
                lambda * 10.0
            };
            if lambda > LAMBDA_MAX {
                break None;
            }
        };
        match accepted {
            Some((np, nc)) => {
                p = np;
                c = nc;
                lambda /= 10.0;
                if lambda < 1e-12 {
                    lambda = 0.0;
                }
                if step_norm <= opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                diagnostics.push(format!(
                    "iteration {iterations}: normal equations singular after damping"
                ));
                break;
            }
        }
    }
    if !converged && diagnostics.iter().all(|d| !d.contains("singular")) {
        diagnostics.push(format!(
            "no convergence in {} iterations (last step {step_norm:.3e} m)",
            opts.max_iter
        ));
    }
    Ok(PositionFix {
        position: p,
        iterations,
        final_residual_norm: c.sqrt(),
        final_step_norm: step_norm,
        converged,
        diagnostics,
    })
}

/// One measurement epoch: the true tag position, a range per anchor and,
/// optionally, the CIR behind each range.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeEpoch {
    pub truth: Point3,
    pub ranges: Vec<f64>,
    pub cirs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    pub truth: Point3,
    pub raw: Point3,
    pub mitigated: Point3,
    pub raw_error: f64,
    pub mitigated_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub raw_mae: f64,
    pub mitigated_mae: f64,
    pub epochs: Vec<EpochResult>,
}

/// Estimated range error of anchor `i` in an epoch; subtracted from the range.
pub type Mitigator<'a> = dyn Fn(&RangeEpoch, usize) -> Result<f64> + 'a;

/// Solves every epoch with raw and with mitigated ranges (from the
/// centroid) and reports the mean 3D position error of each.
pub fn position_experiment(
    anchors: &AnchorSet,
    epochs: &[RangeEpoch],
    mitigator: Option<&Mitigator<'_>>,
) -> Result<ExperimentResult> {
    if epochs.is_empty() {
        return Err(Error::InvalidArgument("no epochs".into()));
    }
    let opts = SolverOptions::default();
    let mut out = Vec::with_capacity(epochs.len());
    for e in epochs {
        let raw = gauss_newton_solve(anchors, &e.ranges, Init::Centroid, opts)?.position;
        let mitigated = match mitigator {
            None => raw,
            Some(m) => {
                let corrected = e
                    .ranges
                    .iter()
                    .enumerate()
                    .map(|(i, r)| Ok((r - m(e, i)?).max(1e-6)))
                    .collect::<Result<Vec<f64>>>()?;
                gauss_newton_solve(anchors, &corrected, Init::Centroid, opts)?.position
            }
        };
        out.push(EpochResult {
            truth: e.truth,
            raw,
            mitigated,
            raw_error: dist(&raw, &e.truth),
            mitigated_error: dist(&mitigated, &e.truth),
        });
    }
    let n = out.len() as f64;
    Ok(ExperimentResult {
        raw_mae: out.iter().map(|e| e.raw_error).sum::<f64>() / n,
        mitigated_mae: out.iter().map(|e| e.mitigated_error).sum::<f64>() / n,
        epochs: out,
    })
}

/// Synthetic positioning capture: a tag moving inside the anchors' box,
/// with anchors in `nlos` ranged through `obstacle`. Ranges and CIRs come
/// from the multipath surrogate.
pub fn synthetic_scenario(
    anchors: &AnchorSet,
    epochs: usize,
    nlos: &[usize],
    obstacle: Obstacle,
    seed: u64,
) -> Result<Vec<RangeEpoch>> {
    let a = anchors.anchors();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in a {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(epochs);
    while out.len() < epochs {
        let truth: Point3 = std::array::from_fn(|k| {
            let span = hi[k] - lo[k];
            rng::uniform_range(&mut r, lo[k] + 0.2 * span, hi[k] - 0.2 * span)
        });
        if a.iter().any(|ai| dist(&truth, ai) < 0.5) {
            continue;
        }
        let mut ranges = Vec::with_capacity(a.len());
        let mut cirs = Vec::with_capacity(a.len());
        for (i, ai) in a.iter().enumerate() {
            let obs = if nlos.contains(&i) {
                obstacle
            } else {
                Obstacle::None
            };
            let s = synthesize_measurement(
                Environment::MediumRoom,
                obs,
                Some(dist(&truth, ai)),
                &mut r,
            )?;
            ranges.push(s.measured_range.max(1e-3));
            cirs.push(s.cir);
        }
        out.push(RangeEpoch {
            truth,
            ranges,
            cirs: Some(cirs),
        });
    }
    Ok(out)
}

/// Scenario file, headerless CSV with a kind in the first column:
///
/// ```text
/// anchor,x,y,z
/// epoch,true_x,true_y,true_z,r_0,…,r_{n−1}
/// cir,anchor_index,v_0,…,v_156      (optional, belongs to the last epoch)
/// ```
pub fn read_scenario(path: &Path) -> Result<(AnchorSet, Vec<RangeEpoch>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut anchors = Vec::new();
    let mut epochs: Vec<RangeEpoch> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| Error::Data(format!("{}:{}: {m}", path.display(), n + 1));
        let mut fields = line.split(',').map(str::trim);
        let kind = fields.next().unwrap_or_default();
        let nums: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad(format!("'{f}' is not a number")))
            })
            .collect::<Result<_>>()?;
        match kind {
            "anchor" if nums.len() == 3 => anchors.push([nums[0], nums[1], nums[2]]),
            "epoch" if nums.len() == 3 + anchors.len() && !anchors.is_empty() => {
                epochs.push(RangeEpoch {
                    truth: [nums[0], nums[1], nums[2]],
                    ranges: nums[3..].to_vec(),
                    cirs: None,
                })
            }
            "cir" if !nums.is_empty() => {
                let e = epochs
                    .last_mut()
                    .ok_or_else(|| bad("cir row before any epoch".into()))?;
                let idx = nums[0] as usize;
                if nums[0] != idx as f64 || idx >= anchors.len() {
                    return Err(bad(format!("bad anchor index {}", nums[0])));
                }
                let cirs = e
                    .cirs
                    .get_or_insert_with(|| vec![Vec::new(); anchors.len()]);
                cirs[idx] = nums[1..].to_vec();
            }
            _ => {
                return Err(bad(format!(
                    "malformed '{kind}' row with {} values",
                    nums.len()
                )))
            }
        }
    }
    if let Some(e) = epochs
        .iter()
        .find(|e| e.cirs.as_ref().is_some_and(|c| c.iter().any(Vec::is_empty)))
    {
        return Err(Error::Data(format!(
            "{}: epoch at {:?} lacks a CIR for some anchor",
            path.display(),
            e.truth
        )));
    }
    let anchors =
        AnchorSet::new(anchors).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if epochs.is_empty() {
        return Err(Error::Data(format!("{}: no epochs", path.display())));
    }
    Ok((anchors, epochs))
}

pub fn write_scenario(path: &Path, anchors: &AnchorSet, epochs: &[RangeEpoch]) -> Result<()> {
    let mut s = String::new();
    for a in anchors.anchors() {
        s.push_str(&format!("anchor,{},{},{}\n", a[0], a[1], a[2]));
    }
    for e in epochs {
        s.push_str(&format!(
            "epoch,{},{},{}",
            e.truth[0], e.truth[1], e.truth[2]
        ));
        for r in &e.ranges {
            s.push_str(&format!(",{r}"));
        }
        s.push('\n');
        if let Some(cirs) = &e.cirs {
            for (i, c) in cirs.iter().enumerate() {
                s.push_str(&format!("cir,{i}"));
                for v in c {
                    s.push_str(&format!(",{v}"));
                }
                s.push('\n');
            }
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Per-epoch results as CSV.
pub fn write_results_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut s = String::from(
        "true_x,true_y,true_z,raw_x,raw_y,raw_z,raw_error,mit_x,mit_y,mit_z,mit_error\n",
    );
    for e in &result.epochs {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            e.truth[0],
            e.truth[1],
            e.truth[2],
            e.raw[0],
            e.raw[1],
            e.raw[2],
            e.raw_error,
            e.mitigated[0],
            e.mitigated[1],
            e.mitigated[2],
            e.mitigated_error
        ));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_anchors() -> AnchorSet {
        AnchorSet::new(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    fn exact(anchors: &AnchorSet, p: &Point3) -> Vec<f64> {
        anchors.anchors().iter().map(|a| dist(a, p)).collect()
    }

    #[test]
    fn recovers_exact_position() {
        let a = unit_anchors();
        let t = [0.2, 0.3, 0.4];
        let fix = gauss_newton_solve(&a, &exact(&a, &t), Init::Centroid, SolverOptions::default())
            .unwrap();
        assert!(fix.converged);
        assert!(dist(&fix.position, &t) < 1e-6, "{:?}", fix.position);
        assert!(fix.final_residual_norm < 1e-9);
    }

    #[test]
    fn random_scenes_converge_fast() {
        let mut r = rng::seeded(11);
        let mut worst = 0;
        for _ in 0..1000 {
            let a = AnchorSet::new(
                (0..4)
                    .map(|_| std::array::from_fn(|_| rng::uniform_range(&mut r, -5.0, 5.0)))
                    .collect(),
            )
            .unwrap();
            if a.is_coplanar() {
                continue;
            }
            // tag inside the anchors' convex hull
            let w: Vec<f64> = (0..4)
                .map(|_| -rng::uniform(&mut r).max(1e-12).ln())
                .collect();
            let s: f64 = w.iter().sum();
            let t: Point3 =
                std::array::from_fn(|k| (0..4).map(|i| w[i] / s * a.anchors()[i][k]).sum());
            let fix =
                gauss_newton_solve(&a, &exact(&a, &t), Init::Centroid, SolverOptions::default())
                    .unwrap();
            assert!(fix.converged);
            assert!(
                dist(&fix.position, &t) <= 1e-6,
                "{:?} vs {t:?}",
                fix.position
            );
            worst = worst.max(fix.iterations);
        }
        assert!(worst <= 25, "{worst} iterations");
    }

    #[test]
    fn rejects_bad_input() {
        let a = unit_anchors();
        let opts = SolverOptions::default();
        assert!(gauss_newton_solve(&a, &[1.0, 1.0, 1.0], Init::Centroid, opts).is_err());
        assert!(gauss_newton_solve(&a, &[0.0, 1.0, 1.0, 1.0], Init::Centroid, opts).is_err());
        assert!(AnchorSet::new(vec![[0.0; 3]; 3]).is_err());
        assert!(
            AnchorSet::new(vec![[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).is_err()
        );
    }

    #[test]
    fn anchor_order_does_not_matter() {
        let a = unit_anchors();
        let t = [0.6, -0.2, 0.9];
        let r: Vec<f64> = exact(&a, &t).iter().map(|d| d + 0.01).collect();
        let f1 = gauss_newton_solve(&a, &r, Init::Centroid, SolverOptions::default()).unwrap();
        let perm = [2, 0, 3, 1];
        let pa = AnchorSet::new(perm.iter().map(|&i| a.anchors()[i]).collect()).unwrap();
        let pr: Vec<f64> = perm.iter().map(|&i| r[i]).collect();
        let f2 = gauss_newton_solve(&pa, &pr, Init::Centroid, SolverOptions::default()).unwrap();
        assert!(dist(&f1.position, &f2.position) < 1e-8);
    }

    #[test]
    fn rigid_motion_equivariance() {
        let a = AnchorSet::new(vec![
            [0.0, 0.0, 0.0],
            [5.0, 0.0, 0.5],
            [0.0, 4.0, 1.0],
            [4.0, 4.0, 3.0],
        ])
        .unwrap();
        let t = [1.5, 2.0, 1.2];
        let r: Vec<f64> = exact(&a, &t)
            .iter()
            .enumerate()
            .map(|(i, d)| d + 0.05 * i as f64)
            .collect();
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        let mv = |p: &Point3| {
            [
                c * p[0] - s * p[1] + 3.0,
                s * p[0] + c * p[1] - 1.0,
                p[2] + 2.0,
            ]
        };
        let b = AnchorSet::new(a.anchors().iter().map(mv).collect()).unwrap();
        let fa = gauss_newton_solve(&a, &r, Init::Centroid, SolverOptions::default()).unwrap();
        let fb = gauss_newton_solve(&b, &r, Init::Centroid, SolverOptions::default()).unwrap();
        assert!(dist(&mv(&fa.position), &fb.position) < 1e-8);
    }

    #[test]
    fn iterate_on_anchor_is_perturbed() {
        let a = unit_anchors();
        let t = [0.2, 0.3, 0.4];
        let fix = gauss_newton_solve(
            &a,
            &exact(&a, &t),
            Init::Explicit([1.0, 0.0, 0.0]),
            SolverOptions::default(),
        )
        .unwrap();
        assert!(fix.diagnostics.iter().any(|d| d.contains("perturbed")));
        assert!(dist(&fix.position, &t) < 1e-6);
    }

    #[test]
    fn coplanar_anchors_warn() {
        let a = AnchorSet::new(vec![
            [0.0, 0.0, 2.0],
            [4.0, 0.0, 2.0],
            [0.0, 4.0, 2.0],
            [4.0, 4.0, 2.0],
        ])
        .unwrap();
        assert!(a.is_coplanar());
        assert!(!unit_anchors().is_coplanar());
        let t = [1.0, 2.0, 1.0];
        let fix = gauss_newton_solve(
            &a,
            &exact(&a, &t),
            Init::Explicit([1.0, 1.0, 1.5]),
            SolverOptions::default(),
        )
        .unwrap();
        assert!(!fix.diagnostics.is_empty());
        assert!(dist(&fix.position, &t) < 1e-6);
    }

    #[test]
    fn cost_never_increases() {
        let a = unit_anchors();
        let r = [0.9, 0.2, 1.4, 0.3];
        let mut p = Init::Explicit([3.0, -2.0, 5.0]);
        let mut last = f64::INFINITY;
        for _ in 0..30 {
            let fix = gauss_newton_solve(
                &a,
                &r,
                p,
                SolverOptions {
                    max_iter: 1,
                    ..Default::default()
                },
            )
            .unwrap();
            let c = fix.final_residual_norm;
            assert!(c <= last + 1e-15);
            last = c;
            p = Init::Explicit(fix.position);
        }
    }

    #[test]
    fn oracle_mitigation_beats_raw() {
        let a = AnchorSet::new(vec![
            [0.0, 0.0, 0.0],
            [6.0, 0.0, 0.3],
            [0.0, 5.0, 2.5],
            [6.0, 5.0, 1.0],
        ])
        .unwrap();
        let mut r = rng::seeded(4);
        let epochs: Vec<RangeEpoch> = (0..50)
            .map(|_| {
                let t = [
                    rng::uniform_range(&mut r, 1.0, 5.0),
                    rng::uniform_range(&mut r, 1.0, 4.0),
                    1.2,
                ];
                let ranges = exact(&a, &t)
                    .iter()
                    .enumerate()
                    .map(|(i, d)| d + if i < 2 { 0.3 } else { 0.0 })
                    .collect();
                RangeEpoch {
                    truth: t,
                    ranges,
                    cirs: None,
                }
            })
            .collect();
        let clean: Vec<RangeEpoch> = epochs
            .iter()
            .map(|e| RangeEpoch {
                ranges: exact(&a, &e.truth),
                ..e.clone()
            })
            .collect();
        assert!(position_experiment(&a, &clean, None).unwrap().raw_mae < 1e-6);
        let oracle = |_: &RangeEpoch, i: usize| Ok(if i < 2 { 0.3 } else { 0.0 });
        let res = position_experiment(&a, &epochs, Some(&oracle)).unwrap();
        assert!(res.mitigated_mae < res.raw_mae);
        assert!(res.mitigated_mae < 1e-6);
    }

    #[test]
    fn scenario_round_trip() {
        let a = AnchorSet::new(vec![
            [0.0, 0.0, 0.0],
            [6.0, 0.0, 0.3],
            [0.0, 5.0, 2.5],
            [6.0, 5.0, 1.0],
        ])
        .unwrap();
        let epochs = synthetic_scenario(&a, 3, &[0, 1], Obstacle::Wood, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_scenario(&p, &a, &epochs).unwrap();
        let (a2, e2) = read_scenario(&p).unwrap();
        assert_eq!(a2, a);
        assert_eq!(e2, epochs);
        std::fs::write(&p, "anchor,0,0,0\nepoch,1,1,1,2\n").unwrap();
        assert!(read_scenario(&p).is_err());
    }
}
