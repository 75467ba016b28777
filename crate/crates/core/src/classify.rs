//! One-vs-rest linear SVM training, raw-score computation, score fusion by
//! summation, and argmax prediction.
//!
//! Each binary problem minimizes `||w||^2 / 2 + (C / M) * sum_i hinge_i`,
//! i.e. the hinge loss is averaged over the M training rows, so duplicating
//! the training set leaves the optimum unchanged. The solver is dual
//! coordinate descent with a seeded per-epoch shuffle; the bias is an
//! implicit constant-1 feature appended to every row.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{CpdError, Result};
use crate::matrix::Matrix;
use crate::seed::derive_seed;

pub const DEFAULT_SVM_C: f64 = 100.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;

/// One-vs-rest weight vectors. `weights` has one row per class in ascending
/// label order; the last column is the bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    class_labels: Vec<u32>,
    weights: Matrix,
    c_reg: f64,
}

impl LinearSvmModel {
    pub fn new(class_labels: Vec<u32>, weights: Matrix, c_reg: f64) -> Result<Self> {
        if class_labels.len() < 2 {
            return Err(CpdError::SingleClass);
        }
        if class_labels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CpdError::InvalidParam {
                reason: "class labels must be strictly ascending".into(),
            });
        }
        if weights.rows() != class_labels.len() {
            return Err(CpdError::ShapeMismatch {
                left: format!("{} classes", class_labels.len()),
                right: format!("{} weight rows", weights.rows()),
            });
        }
        if weights.cols() < 2 {
            return Err(CpdError::InvalidDims {
                reason: "weight rows need at least one feature plus the bias".into(),
            });
        }
        if !(c_reg.is_finite() && c_reg > 0.0) {
            return Err(CpdError::InvalidParam {
                reason: format!("regularization constant must be positive, got {c_reg}"),
            });
        }
        Ok(LinearSvmModel {
            class_labels,
            weights,
            c_reg,
        })
    }

    pub fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    /// Feature dimension excluding the bias column.
    pub fn dim(&self) -> usize {
        self.weights.cols() - 1
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn c_reg(&self) -> f64 {
        self.c_reg
    }

    /// Raw per-class scores `w . x + b` for one representation.
    pub fn decision(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(CpdError::ShapeMismatch {
                left: format!("representation of length {}", x.len()),
                right: format!("model with {} features", self.dim()),
            });
        }
        let d = self.dim();
        Ok((0..self.class_labels.len())
            .map(|c| {
                let row = self.weights.row(c);
                let mut s = row[d];
                for (&w, &v) in row[..d].iter().zip(x) {
                    s += w * v;
                }
                s
            })
            .collect())
    }
}

/// Raw scores for a set of representations, tagged with the class labels and
/// a provenance string naming what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub class_labels: Vec<u32>,
    pub scores: Matrix,
    pub provenance: String,
}

fn solve_binary(
    features: &Matrix,
    y: &[f64],
    c_reg: f64,
    tolerance: f64,
    max_epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let m = features.rows();
    let d = features.cols();
    let per_sample_cost = c_reg / m as f64;
    let q_diag: Vec<f64> = (0..m)
        .map(|i| {
            let row = features.row(i);
            row.iter().map(|&v| v * v).sum::<f64>() + 1.0
        })
        .collect();
    let mut alpha = vec![0.0f64; m];
    let mut w = vec![0.0f64; d + 1];
    let mut order: Vec<usize> = (0..m).collect();

    for _ in 0..max_epochs {
        order.shuffle(rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let row = features.row(i);
            let mut wx = w[d];
            for (&wj, &v) in w[..d].iter().zip(row) {
                wx += wj * v;
            }
            let g = y[i] * wx - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= per_sample_cost {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let next = (a - g / q_diag[i]).clamp(0.0, per_sample_cost);
                let delta = (next - a) * y[i];
                for (wj, &v) in w[..d].iter_mut().zip(row) {
                    *wj += delta * v;
                }
                w[d] += delta;
                alpha[i] = next;
            }
        }
        if pg_max - pg_min < tolerance {
            break;
        }
    }
    w
}

/// Train one-vs-rest linear SVMs with the default stopping parameters.
pub fn svm_train(
    features: &Matrix,
    labels: &[u32],
    c_reg: f64,
    seed: u64,
) -> Result<LinearSvmModel> {
    svm_train_with(
        features,
        labels,
        c_reg,
        seed,
        DEFAULT_TOLERANCE,
        DEFAULT_MAX_EPOCHS,
    )
}

/// Train one-vs-rest linear SVMs. One binary problem per distinct label in
/// ascending order; each problem gets its own seeded shuffle stream, so the
/// result is deterministic for a given `(data, seed)`.
pub fn svm_train_with(
    features: &Matrix,
    labels: &[u32],
    c_reg: f64,
    seed: u64,
    tolerance: f64,
    max_epochs: usize,
) -> Result<LinearSvmModel> {
    if features.rows() == 0 {
        return Err(CpdError::EmptyInput {
            what: "training representations".into(),
        });
    }
    if labels.len() != features.rows() {
        return Err(CpdError::ShapeMismatch {
            left: format!("{} rows", features.rows()),
            right: format!("{} labels", labels.len()),
        });
    }
    if !(c_reg.is_finite() && c_reg > 0.0) {
        return Err(CpdError::InvalidParam {
            reason: format!("regularization constant must be positive, got {c_reg}"),
        });
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(CpdError::SingleClass);
    }

    let mut weights = Matrix::new(features.cols() + 1);
    let mut y = vec![0.0f64; labels.len()];
    for &class in &classes {
        for (yi, &l) in y.iter_mut().zip(labels) {
            *yi = if l == class { 1.0 } else { -1.0 };
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &["svm", &class.to_string()]));
        let w = solve_binary(features, &y, c_reg, tolerance, max_epochs, &mut rng);
        weights.push_row(&w);
    }
    LinearSvmModel::new(classes, weights, c_reg)
}

/// Score every row of `features` with the model.
pub fn svm_score(
    model: &LinearSvmModel,
    features: &Matrix,
    provenance: impl Into<String>,
) -> Result<ScoreMatrix> {
    let mut scores = Matrix::new(model.class_labels().len());
    for row in features.iter_rows() {
        scores.push_row(&model.decision(row)?);
    }
    Ok(ScoreMatrix {
        class_labels: model.class_labels().to_vec(),
        scores,
        provenance: provenance.into(),
    })
}

/// Element-wise sum of raw score tables. All parts must agree on shape and
/// class labels; summation runs in the order given.
pub fn fuse_scores(parts: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = parts.first().ok_or(CpdError::EmptyInput {
        what: "score tables to fuse".into(),
    })?;
    let mut scores = first.scores.clone();
    let mut provenance = first.provenance.clone();
    for part in &parts[1..] {
        if part.class_labels != first.class_labels {
            return Err(CpdError::InvalidParam {
                reason: format!(
                    "score tables disagree on classes: {:?} vs {:?}",
                    first.class_labels, part.class_labels
                ),
            });
        }
        if part.scores.rows() != scores.rows() || part.scores.cols() != scores.cols() {
            return Err(CpdError::ShapeMismatch {
                left: format!("{}x{}", scores.rows(), scores.cols()),
                right: format!("{}x{}", part.scores.rows(), part.scores.cols()),
            });
        }
        for r in 0..scores.rows() {
            for (dst, &v) in scores.row_mut(r).iter_mut().zip(part.scores.row(r)) {
                *dst += v;
            }
        }
        provenance.push('+');
        provenance.push_str(&part.provenance);
    }
    Ok(ScoreMatrix {
        class_labels: first.class_labels.clone(),
        scores,
        provenance,
    })
}

/// Predicted label per row: the class with the highest score, lowest class
/// index on exact ties.
pub fn predict(scores: &ScoreMatrix) -> Vec<u32> {
    scores
        .scores
        .iter_rows()
        .map(|row| {
            let mut best = 0usize;
            for (c, &s) in row.iter().enumerate().skip(1) {
                if s > row[best] {
                    best = c;
                }
            }
            scores.class_labels[best]
        })
        .collect()
}

/// Fraction of predictions matching the reference labels.
pub fn accuracy(predicted: &[u32], truth: &[u32]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / predicted.len() as f64
}
