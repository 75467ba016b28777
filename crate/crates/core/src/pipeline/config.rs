//! Pipeline configuration: builtin defaults, optional TOML file overlay, and
//! validation. Precedence is handled by the caller: explicit flags beat the
//! file, the file beats the environment, the environment beats the builtins.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::encode::Encoder;
use crate::error::{CpdError, Result};
use crate::tensor::NormMode;
use crate::trajectory::DescriptorKind;

pub const DEFAULT_TRAJECTORY_LEN: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub layers: Vec<String>,
    pub norm_modes: Vec<NormMode>,
    pub kinds: Vec<DescriptorKind>,
    pub encoder: Encoder,
    /// PCA output dimension; `None` means the encoder's default.
    pub d_pca: Option<usize>,
    /// Codebook size; `None` means the encoder's default.
    pub codebook_size: Option<usize>,
    pub seed: u64,
    pub svm_c: f64,
    pub sample_cap: usize,
    /// Train one SVM per `(layer, stream, kind)` on the concatenated
    /// normalization branches instead of one SVM per branch.
    pub concat_norms: bool,
}

impl PipelineConfig {
    pub fn new(corpus: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            corpus: corpus.into(),
            out: out.into(),
            layers: vec!["conv3".into(), "conv4".into(), "conv5".into()],
            norm_modes: vec![NormMode::Spatiotemporal, NormMode::Channel],
            kinds: vec![DescriptorKind::Tdd, DescriptorKind::Cpd],
            encoder: Encoder::Vlad,
            d_pca: None,
            codebook_size: None,
            seed: 0,
            svm_c: crate::classify::DEFAULT_SVM_C,
            sample_cap: crate::encode::DEFAULT_SAMPLE_CAP,
            concat_norms: false,
        }
    }

    pub fn resolved_d_pca(&self) -> usize {
        self.d_pca.unwrap_or(self.encoder.default_dims().0)
    }

    pub fn resolved_codebook_size(&self) -> usize {
        self.codebook_size.unwrap_or(self.encoder.default_dims().1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CpdError::Config {
                reason: "layer list is empty".into(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for layer in &self.layers {
            if layer.is_empty() || !seen.insert(layer) {
                return Err(CpdError::Config {
                    reason: format!("layer names must be unique and non-empty, got {layer:?}"),
                });
            }
        }
        if self.norm_modes.is_empty() || self.kinds.is_empty() {
            return Err(CpdError::Config {
                reason: "normalization modes and descriptor kinds must be non-empty".into(),
            });
        }
        if has_dupes(&self.norm_modes) || has_dupes(&self.kinds) {
            return Err(CpdError::Config {
                reason: "normalization modes and descriptor kinds must be unique".into(),
            });
        }
        if self.concat_norms && self.norm_modes.len() != 2 {
            return Err(CpdError::Config {
                reason: "concatenating branches requires both normalization modes".into(),
            });
        }
        if self.resolved_d_pca() == 0 || self.resolved_codebook_size() == 0 {
            return Err(CpdError::Config {
                reason: "PCA dimension and codebook size must be positive".into(),
            });
        }
        if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
            return Err(CpdError::Config {
                reason: format!("svm_c must be positive, got {}", self.svm_c),
            });
        }
        if self.sample_cap == 0 {
            return Err(CpdError::Config {
                reason: "sample cap must be positive".into(),
            });
        }
        Ok(())
    }
}

fn has_dupes<T: Ord + Copy>(items: &[T]) -> bool {
    let set: std::collections::BTreeSet<T> = items.iter().copied().collect();
    set.len() != items.len()
}

/// Optional overrides loaded from a TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub layers: Option<Vec<String>>,
    pub norm_modes: Option<Vec<NormMode>>,
    pub kinds: Option<Vec<DescriptorKind>>,
    pub encoder: Option<Encoder>,
    pub d_pca: Option<usize>,
    pub codebook_size: Option<usize>,
    pub seed: Option<u64>,
    pub svm_c: Option<f64>,
    pub sample_cap: Option<usize>,
    pub concat_norms: Option<bool>,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CpdError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CpdError::Config {
        reason: format!("{}: {e}", path.display()),
    })
}

impl PipelineConfig {
    /// Apply every field the file sets.
    pub fn overlay(&mut self, file: &ConfigFile) {
        if let Some(v) = &file.corpus {
            self.corpus = v.clone();
        }
        if let Some(v) = &file.out {
            self.out = v.clone();
        }
        if let Some(v) = &file.layers {
            self.layers = v.clone();
        }
        if let Some(v) = &file.norm_modes {
            self.norm_modes = v.clone();
        }
        if let Some(v) = &file.kinds {
            self.kinds = v.clone();
        }
        if let Some(v) = file.encoder {
            self.encoder = v;
        }
        if let Some(v) = file.d_pca {
            self.d_pca = Some(v);
        }
        if let Some(v) = file.codebook_size {
            self.codebook_size = Some(v);
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.svm_c {
            self.svm_c = v;
        }
        if let Some(v) = file.sample_cap {
            self.sample_cap = v;
        }
        if let Some(v) = file.concat_norms {
            self.concat_norms = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_encoder() {
        let mut cfg = PipelineConfig::new("corpus", "out");
        assert_eq!(cfg.encoder, Encoder::Vlad);
        assert_eq!(cfg.resolved_d_pca(), 128);
        assert_eq!(cfg.resolved_codebook_size(), 64);
        cfg.encoder = Encoder::Fv;
        assert_eq!(cfg.resolved_d_pca(), 64);
        assert_eq!(cfg.resolved_codebook_size(), 128);
        cfg.d_pca = Some(16);
        assert_eq!(cfg.resolved_d_pca(), 16);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn overlay_applies_only_set_fields() {
        let mut cfg = PipelineConfig::new("corpus", "out");
        let file: ConfigFile = toml::from_str(
            r#"
            encoder = "fv"
            seed = 9
            layers = ["conv5"]
            norm_modes = ["st"]
            kinds = ["cpd"]
            "#,
        )
        .unwrap();
        cfg.overlay(&file);
        assert_eq!(cfg.encoder, Encoder::Fv);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.layers, vec!["conv5".to_string()]);
        assert_eq!(cfg.norm_modes, vec![NormMode::Spatiotemporal]);
        assert_eq!(cfg.kinds, vec![DescriptorKind::Cpd]);
        assert_eq!(cfg.svm_c, 100.0); // untouched
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<ConfigFile, _> = toml::from_str("svm_sea = 1.0");
        assert!(r.is_err());
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = PipelineConfig::new("c", "o");
        cfg.layers = vec!["a".into(), "a".into()];
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::new("c", "o");
        cfg.concat_norms = true;
        cfg.norm_modes = vec![NormMode::Spatiotemporal];
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::new("c", "o");
        cfg.svm_c = -1.0;
        assert!(cfg.validate().is_err());
    }
}
