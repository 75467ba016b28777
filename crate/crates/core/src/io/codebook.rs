//! Codebook container (`CPDC`) for fitted models.
//!
//! Layout: magic `CPDC`, version u16, a kind byte, kind-specific u32
//! dimensions, then all parameters as f64. Kinds: 1 PCA (input dim, output
//! dim; mean, basis row-major, eigenvalues), 2 GMM (components, dim;
//! weights, means, variances), 3 k-means (centroid count, dim; centroids),
//! 4 SVM (classes, feature dim; the regularization constant, the u32 class
//! labels, then per-class weights with the bias last).

use std::path::Path;

use crate::classify::LinearSvmModel;
use crate::encode::{GmmModel, KmeansModel, PcaModel};
use crate::error::{CpdError, Result};
use crate::io::{read_all, write_atomic, ByteReader};
use crate::matrix::Matrix;

pub const MAGIC: &str = "CPDC";
pub const VERSION: u16 = 1;

const KIND_PCA: u8 = 1;
const KIND_GMM: u8 = 2;
const KIND_KMEANS: u8 = 3;
const KIND_SVM: u8 = 4;

fn kind_name(kind: u8) -> String {
    match kind {
        KIND_PCA => "pca".into(),
        KIND_GMM => "gmm".into(),
        KIND_KMEANS => "kmeans".into(),
        KIND_SVM => "svm".into(),
        other => format!("unknown({other})"),
    }
}

fn header(kind: u8) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn open_kind<'a>(path: &'a Path, bytes: &'a [u8], want: u8) -> Result<ByteReader<'a>> {
    let mut r = ByteReader::new(path, bytes);
    r.magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(CpdError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let kind = r.u8()?;
    if kind != want {
        return Err(CpdError::CodebookKind {
            path: path.to_path_buf(),
            expected: kind_name(want),
            found: kind_name(kind),
        });
    }
    Ok(r)
}

fn read_f64s(r: &mut ByteReader<'_>, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(r.f64()?);
    }
    Ok(out)
}

pub fn save_pca(path: &Path, model: &PcaModel) -> Result<()> {
    let mut out = header(KIND_PCA);
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.output_dim() as u32).to_le_bytes());
    push_f64s(&mut out, model.mean());
    push_f64s(&mut out, model.basis().data());
    push_f64s(&mut out, model.eigenvalues());
    write_atomic(path, &out)
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    let bytes = read_all(path)?;
    let mut r = open_kind(path, &bytes, KIND_PCA)?;
    let d_in = r.u32()? as usize;
    let d_out = r.u32()? as usize;
    let mean = read_f64s(&mut r, d_in)?;
    let basis = Matrix::from_flat(d_in, d_out, read_f64s(&mut r, d_in * d_out)?)?;
    let eigenvalues = read_f64s(&mut r, d_out)?;
    PcaModel::new(mean, basis, eigenvalues)
}

pub fn save_gmm(path: &Path, model: &GmmModel) -> Result<()> {
    let mut out = header(KIND_GMM);
    out.extend_from_slice(&(model.k() as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    push_f64s(&mut out, model.weights());
    push_f64s(&mut out, model.means().data());
    push_f64s(&mut out, model.variances().data());
    write_atomic(path, &out)
}

pub fn load_gmm(path: &Path) -> Result<GmmModel> {
    let bytes = read_all(path)?;
    let mut r = open_kind(path, &bytes, KIND_GMM)?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let weights = read_f64s(&mut r, k)?;
    let means = Matrix::from_flat(k, d, read_f64s(&mut r, k * d)?)?;
    let variances = Matrix::from_flat(k, d, read_f64s(&mut r, k * d)?)?;
    GmmModel::new(weights, means, variances)
}

pub fn save_kmeans(path: &Path, model: &KmeansModel) -> Result<()> {
    let mut out = header(KIND_KMEANS);
    out.extend_from_slice(&(model.k() as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    push_f64s(&mut out, model.centroids().data());
    write_atomic(path, &out)
}

pub fn load_kmeans(path: &Path) -> Result<KmeansModel> {
    let bytes = read_all(path)?;
    let mut r = open_kind(path, &bytes, KIND_KMEANS)?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let centroids = Matrix::from_flat(k, d, read_f64s(&mut r, k * d)?)?;
    KmeansModel::new(centroids)
}

pub fn save_svm(path: &Path, model: &LinearSvmModel) -> Result<()> {
    let mut out = header(KIND_SVM);
    out.extend_from_slice(&(model.class_labels().len() as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    out.extend_from_slice(&model.c_reg().to_le_bytes());
    for &label in model.class_labels() {
        out.extend_from_slice(&label.to_le_bytes());
    }
    push_f64s(&mut out, model.weights().data());
    write_atomic(path, &out)
}

pub fn load_svm(path: &Path) -> Result<LinearSvmModel> {
    let bytes = read_all(path)?;
    let mut r = open_kind(path, &bytes, KIND_SVM)?;
    let classes = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let c_reg = r.f64()?;
    let mut labels = Vec::with_capacity(classes);
    for _ in 0..classes {
        labels.push(r.u32()?);
    }
    let weights = Matrix::from_flat(classes, dim + 1, read_f64s(&mut r, classes * (dim + 1))?)?;
    LinearSvmModel::new(labels, weights, c_reg)
}
