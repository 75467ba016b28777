//! Descriptor encoding: PCA reduction, codebook fitting (GMM or k-means),
//! Fisher vector and VLAD aggregation, and the shared post-normalization and
//! layer assembly steps.

mod gmm;
mod kmeans;
mod pca;

pub use gmm::{fisher_encode, gmm_fit, gmm_fit_trace, GmmModel};
pub use kmeans::{kmeans_fit, vlad_encode, KmeansModel};
pub use pca::{pca_fit, PcaModel};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CpdError, Result};
use crate::matrix::Matrix;
use crate::tensor::NormMode;

/// Upper bound on codebook training rows; larger pools are subsampled.
pub const DEFAULT_SAMPLE_CAP: usize = 256_000;

/// Which aggregation encodes a video's descriptors into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    Fv,
    Vlad,
}

impl Encoder {
    /// Default (PCA dimension, codebook size) pair for this encoder.
    pub fn default_dims(self) -> (usize, usize) {
        match self {
            Encoder::Fv => (64, 128),
            Encoder::Vlad => (128, 64),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoder::Fv => "fv",
            Encoder::Vlad => "vlad",
        }
    }
}

impl std::fmt::Display for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Encoder {
    type Err = CpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fv" => Ok(Encoder::Fv),
            "vlad" => Ok(Encoder::Vlad),
            other => Err(CpdError::InvalidParam {
                reason: format!("unknown encoder {other:?}, expected fv or vlad"),
            }),
        }
    }
}

/// Cap a training pool at `cap` rows. Row indices are chosen without
/// replacement by a seeded shuffle, then restored to ascending order so the
/// surviving rows keep their original relative order.
pub fn subsample_rows(m: &Matrix, cap: usize, seed: u64) -> Result<Matrix> {
    if cap == 0 {
        return Err(CpdError::InvalidParam {
            reason: "sample cap must be positive".into(),
        });
    }
    if m.rows() <= cap {
        return Ok(m.clone());
    }
    let mut indices: Vec<usize> = (0..m.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut keep = indices[..cap].to_vec();
    keep.sort_unstable();
    let mut out = Matrix::new(m.cols());
    for i in keep {
        out.push_row(m.row(i));
    }
    Ok(out)
}

/// Signed square root followed by L2 normalization. An all-zero vector is
/// returned unchanged rather than divided by zero.
pub fn postnormalize(v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = v
        .iter()
        .map(|&z| if z < 0.0 { -(-z).sqrt() } else { z.sqrt() })
        .collect();
    let norm = out.iter().map(|&z| z * z).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in out.iter_mut() {
            *z /= norm;
        }
    }
    out
}

/// One concatenated block of a layer representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepBlock {
    pub mode: NormMode,
    pub offset: usize,
    pub len: usize,
}

/// A layer's final representation: the two normalization branches
/// concatenated, with a map recording where each block lives.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRepresentation {
    pub values: Vec<f64>,
    pub blocks: Vec<RepBlock>,
}

/// Concatenate the spatiotemporally-normalized branch followed by the
/// channel-normalized branch.
pub fn assemble_layer(st: &[f64], ch: &[f64]) -> Result<LayerRepresentation> {
    if st.is_empty() || ch.is_empty() {
        return Err(CpdError::EmptyInput {
            what: "layer representation block".into(),
        });
    }
    let mut values = Vec::with_capacity(st.len() + ch.len());
    values.extend_from_slice(st);
    values.extend_from_slice(ch);
    Ok(LayerRepresentation {
        values,
        blocks: vec![
            RepBlock {
                mode: NormMode::Spatiotemporal,
                offset: 0,
                len: st.len(),
            },
            RepBlock {
                mode: NormMode::Channel,
                offset: st.len(),
                len: ch.len(),
            },
        ],
    })
}

/// Encode one video's (already PCA-reduced) descriptors with the chosen
/// aggregation, then postnormalize.
pub fn encode_video(
    encoder: Encoder,
    gmm: Option<&GmmModel>,
    kmeans: Option<&KmeansModel>,
    descriptors: &Matrix,
) -> Result<Vec<f64>> {
    let raw = match encoder {
        Encoder::Fv => {
            let model = gmm.ok_or(CpdError::InvalidParam {
                reason: "Fisher encoding needs a fitted mixture".into(),
            })?;
            fisher_encode(model, descriptors)?
        }
        Encoder::Vlad => {
            let model = kmeans.ok_or(CpdError::InvalidParam {
                reason: "VLAD encoding needs a fitted centroid codebook".into(),
            })?;
            vlad_encode(model, descriptors)?
        }
    };
    Ok(postnormalize(&raw))
}
