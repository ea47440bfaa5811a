//! Principal component projection fitted on the training split.
//!
//! Features are z-scored with training statistics (optional), the sample
//! covariance is diagonalised with cyclic Jacobi rotations, and the smallest
//! number of leading components reaching the variance target is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    feature_names: Vec<String>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// k x n_features, row-major; each row is a unit component.
    components: Vec<f64>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
    variance_target: f64,
    standardized: bool,
}

impl PcaModel {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.components[i * p..(i + 1) * p]
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn variance_target(&self) -> f64 {
        self.variance_target
    }

    pub fn standardized(&self) -> bool {
        self.standardized
    }

    /// Fraction of total variance carried by the kept components.
    pub fn explained_ratio(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }

    pub fn component_names(&self) -> Vec<String> {
        (1..=self.n_components()).map(|i| format!("pc{i}")).collect()
    }
}

/// Fits with z-scoring on.
pub fn fit_pca(train: &FeatureTable, variance_target: f64) -> Result<PcaModel> {
    fit_pca_with(train, variance_target, true)
}

pub fn fit_pca_with(train: &FeatureTable, variance_target: f64, standardize: bool) -> Result<PcaModel> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::invalid(format!(
            "variance target {variance_target} outside (0, 1]"
        )));
    }
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let p = train.n_features();
    if p == 0 {
        return Err(Error::ZeroVariance);
    }

    let mut mean = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let (lo, hi) = train
            .column(j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo == hi {
            // exact mean; a summed mean of a constant column can be off by an ulp
            mean[j] = lo;
            continue;
        }
        mean[j] = train.column(j).sum::<f64>() / n as f64;
        if standardize {
            let ss: f64 = train.column(j).map(|v| (v - mean[j]).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                scale[j] = sd;
            }
        }
    }

    let mut cov = vec![0.0; p * p];
    let mut z = vec![0.0; p];
    for row in train.rows() {
        for j in 0..p {
            z[j] = (row[j] - mean[j]) / scale[j];
        }
        for a in 0..p {
            if z[a] == 0.0 {
                continue;
            }
            for b in a..p {
                cov[a * p + b] += z[a] * z[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[a * p + b] / denom;
            cov[a * p + b] = v;
            cov[b * p + a] = v;
        }
    }
    let trace: f64 = (0..p).map(|j| cov[j * p + j]).sum();
    if trace <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let (eigenvalues, vectors) = symmetric_eigen(cov, p);
    // Rounding leaves rank-deficient directions at ~1e-16 rather than 0.
    let floor = trace * 1e-12;
    let mut pairs: Vec<(f64, Vec<f64>)> = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mut v: Vec<f64> = (0..p).map(|r| vectors[r * p + i]).collect();
            fix_sign(&mut v);
            (if lambda > floor { lambda } else { 0.0 }, v)
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| first_nonzero(&a.1).cmp(&first_nonzero(&b.1)))
    });

    let total: f64 = pairs.iter().map(|(l, _)| l).sum();
    let mut cumulative = 0.0;
    let mut k = pairs.len();
    for (i, (lambda, _)) in pairs.iter().enumerate() {
        cumulative += lambda;
        if cumulative / total >= variance_target {
            k = i + 1;
            break;
        }
    }

    let mut components = Vec::with_capacity(k * p);
    let mut kept = Vec::with_capacity(k);
    for (lambda, v) in pairs.into_iter().take(k) {
        components.extend(v);
        kept.push(lambda);
    }
    Ok(PcaModel {
        feature_names: train.feature_names().to_vec(),
        mean,
        scale,
        components,
        eigenvalues: kept,
        total_variance: total,
        variance_target,
        standardized: standardize,
    })
}

/// Maps rows to component scores. Output columns are `pc1..pck`; labels,
/// timestamps and group keys carry through.
pub fn project(table: &FeatureTable, model: &PcaModel) -> Result<FeatureTable> {
    if table.feature_names() != model.feature_names.as_slice() {
        return Err(Error::SchemaMismatch {
            expected: model.feature_names.clone(),
            found: table.feature_names().to_vec(),
        });
    }
    let p = model.n_features();
    let k = model.n_components();
    let mut values = Vec::with_capacity(table.n_rows() * k);
    let mut z = vec![0.0; p];
    for row in table.rows() {
        for j in 0..p {
            z[j] = (row[j] - model.mean[j]) / model.scale[j];
        }
        for i in 0..k {
            let c = model.component(i);
            values.push(c.iter().zip(&z).map(|(a, b)| a * b).sum());
        }
    }
    table.with_features(model.component_names(), values)
}

/// Largest-magnitude entry made positive. Magnitudes within `SIGN_TIE` of the
/// maximum count as tied (two z-scored columns give exactly (1, ±1)/√2, which
/// rounding splits either way); ties go to the lowest index.
fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let best = v
        .iter()
        .position(|x| x.abs() >= max - SIGN_TIE * max)
        .unwrap_or(0);
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

const SIGN_TIE: f64 = 1e-12;

fn first_nonzero(v: &[f64]) -> usize {
    v.iter().position(|&x| x != 0.0).unwrap_or(v.len())
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric `n x n` row-major matrix.
/// Returns eigenvalues (unsorted) and the eigenvector matrix with one
/// eigenvector per column.
pub(crate) fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm_sq: f64 = a.iter().map(|x| x * x).sum();
    let tol = norm_sq * f64::EPSILON * f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}
