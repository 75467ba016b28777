//! Diagonal-covariance Gaussian mixtures fit by EM, and Fisher vector
//! encoding of descriptor sets against a fitted mixture.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CpdError, Result};
use crate::matrix::Matrix;

use super::kmeans::kmeanspp_indices;

const MAX_ITERATIONS: usize = 100;
const REL_TOLERANCE: f64 = 1e-6;
/// Variance floor factor, applied to each dimension's sample variance.
const FLOOR_FACTOR: f64 = 1e-6;

/// Mixture weights, means, and per-dimension variances; `means` and
/// `variances` are component-per-row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Matrix,
    variances: Matrix,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Matrix, variances: Matrix) -> Result<Self> {
        let k = means.rows();
        if k == 0 {
            return Err(CpdError::EmptyInput {
                what: "mixture components".into(),
            });
        }
        if weights.len() != k || variances.rows() != k || variances.cols() != means.cols() {
            return Err(CpdError::ShapeMismatch {
                left: format!("{} weights, means {}x{}", weights.len(), k, means.cols()),
                right: format!("variances {}x{}", variances.rows(), variances.cols()),
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w <= 0.0) {
            return Err(CpdError::InvalidParam {
                reason: format!("mixture weights must be positive and sum to 1, sum is {sum}"),
            });
        }
        if variances.data().iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(CpdError::InvalidParam {
                reason: "every variance must be strictly positive".into(),
            });
        }
        Ok(GmmModel {
            weights,
            means,
            variances,
        })
    }

    pub fn k(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    /// Posterior component probabilities for one descriptor, plus its log
    /// density under the mixture. Computed in log space and normalized with
    /// log-sum-exp, so the posteriors sum to 1.
    pub fn responsibilities(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let k = self.k();
        let mut logs = vec![0.0f64; k];
        for c in 0..k {
            let mu = self.means.row(c);
            let var = self.variances.row(c);
            let mut l = self.weights[c].ln();
            for ((&v, &m), &s2) in x.iter().zip(mu).zip(var) {
                let d = v - m;
                l -= 0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + d * d / s2);
            }
            logs[c] = l;
        }
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logs.iter_mut() {
            *l = (*l - peak).exp();
            total += *l;
        }
        let log_density = peak + total.ln();
        for l in logs.iter_mut() {
            *l /= total;
        }
        (logs, log_density)
    }

    /// Average log density of the rows of `m` under the mixture.
    pub fn mean_log_likelihood(&self, m: &Matrix) -> Result<f64> {
        if m.rows() == 0 {
            return Err(CpdError::EmptyInput {
                what: "descriptor set for likelihood".into(),
            });
        }
        if m.cols() != self.dim() {
            return Err(CpdError::ShapeMismatch {
                left: format!("descriptors with {} dimensions", m.cols()),
                right: format!("mixture with {} dimensions", self.dim()),
            });
        }
        let mut total = 0.0;
        for row in m.iter_rows() {
            total += self.responsibilities(row).1;
        }
        Ok(total / m.rows() as f64)
    }
}

/// Fit a `k`-component diagonal GMM on the rows of `sample` and return the
/// model together with the per-iteration total log-likelihood trace.
///
/// Deterministic for a given seed: k-means++ means, uniform weights, and
/// per-dimension sample variance to start; EM stops when the relative
/// log-likelihood change drops below 1e-6 or after 100 iterations. Variances
/// are floored at 1e-6 times the per-dimension sample variance, and an
/// emptied component is reseeded from the point farthest from its assigned
/// component's mean.
pub fn gmm_fit_trace(sample: &Matrix, k: usize, seed: u64) -> Result<(GmmModel, Vec<f64>)> {
    let rows = sample.rows();
    let cols = sample.cols();
    if k == 0 {
        return Err(CpdError::InvalidParam {
            reason: "component count must be positive".into(),
        });
    }
    if rows < k {
        return Err(CpdError::InvalidParam {
            reason: format!("cannot fit {k} components on {rows} rows"),
        });
    }

    // Per-dimension sample variance; also the source of the variance floor.
    let mut dim_mean = vec![0.0f64; cols];
    for row in sample.iter_rows() {
        for (m, &v) in dim_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in dim_mean.iter_mut() {
        *m /= rows as f64;
    }
    let mut dim_var = vec![0.0f64; cols];
    for row in sample.iter_rows() {
        for ((s, &v), &m) in dim_var.iter_mut().zip(row).zip(&dim_mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in dim_var.iter_mut() {
        *s /= rows as f64;
    }
    let floor: Vec<f64> = dim_var
        .iter()
        .map(|&v| {
            let f = FLOOR_FACTOR * v;
            if f > 0.0 {
                f
            } else {
                1e-12 // constant dimension; keep the density finite
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Matrix::zeros(k, cols);
    for (c, &row) in kmeanspp_indices(sample, k, &mut rng).iter().enumerate() {
        means.row_mut(c).copy_from_slice(sample.row(row));
    }
    let mut variances = Matrix::zeros(k, cols);
    for c in 0..k {
        for (d, dst) in variances.row_mut(c).iter_mut().enumerate() {
            *dst = dim_var[d].max(floor[d]);
        }
    }
    let mut weights = vec![1.0 / k as f64; k];

    let mut model = GmmModel::new(weights.clone(), means.clone(), variances.clone())?;
    let mut trace: Vec<f64> = Vec::new();
    let mut best_component = vec![0usize; rows];

    for _ in 0..MAX_ITERATIONS {
        // E-step pass 1: responsibilities drive the weight and mean updates.
        let mut nk = vec![0.0f64; k];
        let mut sum_x = Matrix::zeros(k, cols);
        let mut ll = 0.0;
        for (i, row) in sample.iter_rows().enumerate() {
            let (gamma, logp) = model.responsibilities(row);
            ll += logp;
            let mut best = 0usize;
            for c in 0..k {
                if gamma[c] > gamma[best] {
                    best = c;
                }
                nk[c] += gamma[c];
                for (s, &v) in sum_x.row_mut(c).iter_mut().zip(row) {
                    *s += gamma[c] * v;
                }
            }
            best_component[i] = best;
        }
        if let Some(&prev) = trace.last() {
            let rel = (ll - prev).abs() / prev.abs().max(1e-12);
            if rel < REL_TOLERANCE {
                trace.push(ll);
                return Ok((model, trace));
            }
        }
        trace.push(ll);

        let mut new_means = Matrix::zeros(k, cols);
        let empty: Vec<usize> = (0..k).filter(|&c| nk[c] < 1e-10).collect();
        for c in 0..k {
            if nk[c] >= 1e-10 {
                let inv = 1.0 / nk[c];
                for (dst, &s) in new_means.row_mut(c).iter_mut().zip(sum_x.row(c)) {
                    *dst = s * inv;
                }
            } else {
                new_means.row_mut(c).copy_from_slice(model.means.row(c));
            }
        }

        // E-step pass 2 recomputes the same responsibilities so variances can
        // use the refreshed means without holding a rows-by-k table.
        let mut sum_sq = Matrix::zeros(k, cols);
        for row in sample.iter_rows() {
            let (gamma, _) = model.responsibilities(row);
            for c in 0..k {
                for ((s, &v), &m) in sum_sq.row_mut(c).iter_mut().zip(row).zip(new_means.row(c)) {
                    let d = v - m;
                    *s += gamma[c] * d * d;
                }
            }
        }
        let mut new_vars = Matrix::zeros(k, cols);
        for c in 0..k {
            if nk[c] >= 1e-10 {
                let inv = 1.0 / nk[c];
                for ((dst, &s), &f) in new_vars.row_mut(c).iter_mut().zip(sum_sq.row(c)).zip(&floor)
                {
                    *dst = (s * inv).max(f);
                }
            }
        }

        if empty.is_empty() {
            for c in 0..k {
                weights[c] = nk[c] / rows as f64;
            }
        } else {
            // Reseed each dead component from the point farthest from its
            // assigned component's new mean, then renormalize the weights.
            let mut dist: Vec<f64> = (0..rows)
                .map(|i| {
                    let row = sample.row(i);
                    let mu = new_means.row(best_component[i]);
                    row.iter().zip(mu).map(|(&a, &b)| (a - b) * (a - b)).sum()
                })
                .collect();
            for &c in &empty {
                let mut far = 0usize;
                for i in 1..rows {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                new_means.row_mut(c).copy_from_slice(sample.row(far));
                for (d, dst) in new_vars.row_mut(c).iter_mut().enumerate() {
                    *dst = dim_var[d].max(floor[d]);
                }
                nk[c] = 1.0;
                dist[far] = -1.0;
            }
            let total: f64 = nk.iter().sum();
            for c in 0..k {
                weights[c] = nk[c] / total;
            }
        }

        means = new_means;
        variances = new_vars;
        model = GmmModel::new(weights.clone(), means.clone(), variances.clone())?;
    }

    Ok((model, trace))
}

/// `gmm_fit_trace` without the log-likelihood trace.
pub fn gmm_fit(sample: &Matrix, k: usize, seed: u64) -> Result<GmmModel> {
    gmm_fit_trace(sample, k, seed).map(|(m, _)| m)
}

/// Fisher vector of a descriptor set: for each component, the normalized
/// gradients of the average log-likelihood with respect to the component's
/// means and standard deviations, laid out as
/// `[u_1, v_1, u_2, v_2, ...]` with `u` the mean block and `v` the
/// deviation block. Length is `2 * k * dim`.
pub fn fisher_encode(model: &GmmModel, descriptors: &Matrix) -> Result<Vec<f64>> {
    let m = descriptors.rows();
    if m == 0 {
        return Err(CpdError::EmptyInput {
            what: "descriptor set for Fisher encoding".into(),
        });
    }
    if descriptors.cols() != model.dim() {
        return Err(CpdError::ShapeMismatch {
            left: format!("descriptors with {} dimensions", descriptors.cols()),
            right: format!("mixture with {} dimensions", model.dim()),
        });
    }
    let k = model.k();
    let d = model.dim();
    let mut acc_u = Matrix::zeros(k, d);
    let mut acc_v = Matrix::zeros(k, d);
    for row in descriptors.iter_rows() {
        let (gamma, _) = model.responsibilities(row);
        for c in 0..k {
            let g = gamma[c];
            let mu = model.means.row(c);
            let var = model.variances.row(c);
            let u = acc_u.row_mut(c);
            for i in 0..d {
                let dx = (row[i] - mu[i]) / var[i].sqrt();
                u[i] += g * dx;
            }
            let v = acc_v.row_mut(c);
            for i in 0..d {
                let dx = (row[i] - mu[i]) / var[i].sqrt();
                v[i] += g * (dx * dx - 1.0);
            }
        }
    }
    let mf = m as f64;
    let mut out = Vec::with_capacity(2 * k * d);
    for c in 0..k {
        let denom_u = mf * model.weights[c].sqrt();
        for &s in acc_u.row(c) {
            out.push(s / denom_u);
        }
        let denom_v = mf * (2.0 * model.weights[c]).sqrt();
        for &s in acc_v.row(c) {
            out.push(s / denom_v);
        }
    }
    Ok(out)
}
