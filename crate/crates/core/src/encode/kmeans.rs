//! Seeded k-means clustering (Lloyd iterations over a k-means++ start) and
//! VLAD encoding of descriptor sets against a fitted codebook.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CpdError, Result};
use crate::matrix::Matrix;

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansModel {
    centroids: Matrix,
}

impl KmeansModel {
    pub fn new(centroids: Matrix) -> Result<Self> {
        if centroids.rows() == 0 {
            return Err(CpdError::EmptyInput {
                what: "centroid matrix".into(),
            });
        }
        if let Some(i) = centroids.data().iter().position(|v| !v.is_finite()) {
            return Err(CpdError::NonFinite { index: i });
        }
        Ok(KmeansModel { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..self.k() {
            let d = sq_dist(x, self.centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// k-means++ seeding: returns the indices of the chosen sample rows. The
/// first pick is uniform; each later pick is drawn with probability
/// proportional to the squared distance to the nearest centroid so far.
pub(crate) fn kmeanspp_indices(sample: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rows = sample.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..rows));
    let mut d2: Vec<f64> = (0..rows)
        .map(|i| sq_dist(sample.row(i), sample.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = rows - 1;
            for (i, &d) in d2.iter().enumerate() {
                cum += d;
                if cum > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Every row coincides with a centroid; any row works.
            rng.random_range(0..rows)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(sample.row(i), sample.row(next));
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen
}

fn assign_all(sample: &Matrix, centroids: &Matrix) -> Vec<usize> {
    let model = KmeansModel {
        centroids: centroids.clone(),
    };
    (0..sample.rows()).map(|i| model.assign(sample.row(i))).collect()
}

/// Fit `k` centroids on the rows of `sample`. Deterministic for a given
/// seed: k-means++ start, then Lloyd updates until assignments stop changing
/// or 100 update rounds have run. An emptied cluster is reseeded to the
/// point farthest from its currently assigned centroid.
pub fn kmeans_fit(sample: &Matrix, k: usize, seed: u64) -> Result<KmeansModel> {
    let rows = sample.rows();
    if k == 0 {
        return Err(CpdError::InvalidParam {
            reason: "cluster count must be positive".into(),
        });
    }
    if rows < k {
        return Err(CpdError::InvalidParam {
            reason: format!("cannot fit {k} clusters on {rows} rows"),
        });
    }
    let cols = sample.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = Matrix::zeros(k, cols);
    for (c, &row) in kmeanspp_indices(sample, k, &mut rng).iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(sample.row(row));
    }

    let mut assignments = assign_all(sample, &centroids);
    for _ in 0..MAX_ITERATIONS {
        let mut sums = Matrix::zeros(k, cols);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(sample.row(i)) {
                *s += v;
            }
        }
        let mut reseeded = false;
        // Distances under the pre-update centroids, used to reseed empties.
        let mut dist: Vec<f64> = (0..rows)
            .map(|i| sq_dist(sample.row(i), centroids.row(assignments[i])))
            .collect();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                let mut far = 0usize;
                for i in 1..rows {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                centroids.row_mut(c).copy_from_slice(sample.row(far));
                dist[far] = -1.0; // keep later empties from picking the same row
                reseeded = true;
            }
        }
        let next = assign_all(sample, &centroids);
        if !reseeded && next == assignments {
            break;
        }
        assignments = next;
    }

    KmeansModel::new(centroids)
}

/// VLAD: per centroid, the summed residuals of the descriptors assigned to
/// it, concatenated in centroid order. Descriptors are consumed in row order.
pub fn vlad_encode(model: &KmeansModel, descriptors: &Matrix) -> Result<Vec<f64>> {
    if descriptors.rows() == 0 {
        return Err(CpdError::EmptyInput {
            what: "descriptor set for VLAD encoding".into(),
        });
    }
    if descriptors.cols() != model.dim() {
        return Err(CpdError::ShapeMismatch {
            left: format!("descriptors with {} dimensions", descriptors.cols()),
            right: format!("codebook with {} dimensions", model.dim()),
        });
    }
    let d = model.dim();
    let mut out = vec![0.0f64; model.k() * d];
    for row in descriptors.iter_rows() {
        let a = model.assign(row);
        let centroid = model.centroids.row(a);
        let block = &mut out[a * d..(a + 1) * d];
        for ((o, &x), &c) in block.iter_mut().zip(row).zip(centroid) {
            *o += x - c;
        }
    }
    Ok(out)
}
