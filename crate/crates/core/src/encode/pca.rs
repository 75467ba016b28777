//! PCA dimensionality reduction fit on pooled descriptors.
//!
//! The covariance eigendecomposition is delegated to nalgebra's symmetric
//! eigensolver; everything around it (centering, ordering, sign fixing,
//! rank handling) is pinned here so fitted bases are reproducible.

use nalgebra::DMatrix;

use crate::error::{CpdError, Result};
use crate::matrix::Matrix;

/// Mean vector plus an orthonormal projection basis, highest-variance
/// directions first. `basis` has one row per input dimension and one column
/// per retained component.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    basis: Matrix,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Rebuild from stored parameters, re-checking orthonormality and the
    /// descending eigenvalue order.
    pub fn new(mean: Vec<f64>, basis: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        let d_in = basis.rows();
        let d_out = basis.cols();
        if mean.len() != d_in {
            return Err(CpdError::ShapeMismatch {
                left: format!("mean of length {}", mean.len()),
                right: format!("basis with {d_in} input dimensions"),
            });
        }
        if eigenvalues.len() != d_out {
            return Err(CpdError::ShapeMismatch {
                left: format!("{} eigenvalues", eigenvalues.len()),
                right: format!("basis with {d_out} components"),
            });
        }
        if d_out > d_in {
            return Err(CpdError::InvalidDims {
                reason: format!("basis keeps {d_out} components from only {d_in} dimensions"),
            });
        }
        for w in eigenvalues.windows(2) {
            if w[1] > w[0] {
                return Err(CpdError::InvalidParam {
                    reason: "eigenvalues must be in descending order".into(),
                });
            }
        }
        for a in 0..d_out {
            for b in a..d_out {
                let mut dot = 0.0;
                for r in 0..d_in {
                    dot += basis.get(r, a) * basis.get(r, b);
                }
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return Err(CpdError::InvalidParam {
                        reason: format!(
                            "basis columns {a} and {b} are not orthonormal (dot {dot})"
                        ),
                    });
                }
            }
        }
        Ok(PcaModel {
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Center and project one descriptor.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(CpdError::ShapeMismatch {
                left: format!("descriptor of length {}", x.len()),
                right: format!("model with {} input dimensions", self.input_dim()),
            });
        }
        let mut out = vec![0.0f64; self.output_dim()];
        for (r, (&v, &m)) in x.iter().zip(&self.mean).enumerate() {
            let c = v - m;
            let row = self.basis.row(r);
            for (o, &b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        Ok(out)
    }

    /// Transform every row of a descriptor matrix.
    pub fn transform_matrix(&self, m: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::new(self.output_dim());
        for row in m.iter_rows() {
            out.push_row(&self.transform(row)?);
        }
        Ok(out)
    }
}

/// Fit a PCA basis with `d_out` components on the rows of `sample`.
/// Components are eigenvectors of the sample covariance, ordered by
/// descending eigenvalue; each is sign-fixed so its largest-magnitude entry
/// (first such entry on ties) is positive.
pub fn pca_fit(sample: &Matrix, d_out: usize) -> Result<PcaModel> {
    let rows = sample.rows();
    let cols = sample.cols();
    if d_out == 0 {
        return Err(CpdError::InvalidParam {
            reason: "PCA must keep at least one component".into(),
        });
    }
    if d_out > cols {
        return Err(CpdError::InvalidDims {
            reason: format!("cannot keep {d_out} components from {cols} dimensions"),
        });
    }
    if rows < 2 {
        return Err(CpdError::RankDeficient {
            requested: d_out,
            achievable: 0,
        });
    }

    let mut mean = vec![0.0f64; cols];
    for row in sample.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= rows as f64;
    }

    let centered = DMatrix::from_fn(rows, cols, |r, c| sample.get(r, c) - mean[c]);
    let cov = (centered.transpose() * &centered) / (rows as f64 - 1.0);
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    // Rank is judged relative to the largest eigenvalue; anything below that
    // scale is noise from the solver, not signal.
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let threshold = lambda_max * 1e-9;
    let achievable = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > threshold && eig.eigenvalues[i] > 0.0)
        .count();
    if achievable < d_out {
        return Err(CpdError::RankDeficient {
            requested: d_out,
            achievable,
        });
    }

    let mut basis = Matrix::zeros(cols, d_out);
    let mut eigenvalues = Vec::with_capacity(d_out);
    for (j, &src) in order.iter().take(d_out).enumerate() {
        eigenvalues.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut peak = 0usize;
        for r in 1..cols {
            if col[r].abs() > col[peak].abs() {
                peak = r;
            }
        }
        let flip = if col[peak] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..cols {
            basis.set(r, j, flip * col[r]);
        }
    }

    PcaModel::new(mean, basis, eigenvalues)
}
