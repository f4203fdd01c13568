//! Principal components by power iteration with deflation.

use crate::error::{Error, Result};

pub const PCA_TOL: f64 = 1e-9;
pub const PCA_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit eigenvectors, strongest first; the largest-magnitude entry of
    /// each is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue / total variance, descending.
    pub explained_variance: Vec<f64>,
    /// Per sample, its coordinates along each component.
    pub projections: Vec<Vec<f64>>,
}

fn mat_vec(c: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = c[i * d..(i + 1) * d]
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn pca_project(data: &[Vec<f64>], dims: usize) -> Result<Pca> {
    let n = data.len();
    if dims == 0 {
        return Err(Error::InvalidArgument(
            "PCA needs at least one component".into(),
        ));
    }
    if n < dims || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples is fewer than {dims} components"
        )));
    }
    let d = data[0].len();
    if dims > d {
        return Err(Error::InvalidArgument(format!(
            "{dims} components from {d}-dimensional data"
        )));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != d) {
        return Err(Error::shape(
            "pca",
            format!("row of length {} among rows of {d}", bad.len()),
        ));
    }
    let mut mean = vec![0.0; d];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    let mut centred = vec![0.0; d];
    for x in data {
        for ((c, v), m) in centred.iter_mut().zip(x).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centred[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            for (r, cj) in row[i..].iter_mut().zip(&centred[i..]) {
                *r += ci * cj;
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut components = Vec::with_capacity(dims);
    let mut eigenvalues = Vec::with_capacity(dims);
    let mut next = vec![0.0; d];
    for _ in 0..dims {
        // deterministic start with no special symmetry
        let mut v: Vec<f64> = (0..d)
            .map(|i| 1.0 + (i as f64 * 0.618_033_988_7).fract())
            .collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITER {
            mat_vec(&cov, d, &v, &mut next);
            let nn = norm(&next);
            if nn == 0.0 {
                lambda = 0.0;
                break;
            }
            next.iter_mut().for_each(|x| *x /= nn);
            let delta = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            std::mem::swap(&mut v, &mut next);
            lambda = nn;
            if delta < PCA_TOL {
                break;
            }
        }
        let big = v
            .iter()
            .cloned()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        // Rayleigh quotient is a better eigenvalue estimate than the last norm
        mat_vec(&cov, d, &v, &mut next);
        let rq: f64 = v.iter().zip(&next).map(|(a, b)| a * b).sum();
        lambda = if lambda == 0.0 { 0.0 } else { rq.max(0.0) };
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let explained_variance = eigenvalues
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    let projections = data
        .iter()
        .map(|x| {
            components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(x)
                        .zip(&mean)
                        .map(|((ci, xi), mi)| ci * (xi - mi))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        explained_variance,
        projections,
    })
}
