//! End-to-end driver: load a corpus, pool descriptors, fit codebooks on the
//! training split, encode every video, train one-vs-rest SVMs per block,
//! fuse raw scores, and write models, representations, score tables, and a
//! line-oriented report. Everything is deterministic for a given config.

mod config;

pub use config::{load_config_file, ConfigFile, PipelineConfig, DEFAULT_TRAJECTORY_LEN};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::classify::{accuracy, fuse_scores, predict, svm_score, svm_train, ScoreMatrix};
use crate::encode::{
    encode_video, gmm_fit, kmeans_fit, pca_fit, subsample_rows, Encoder, GmmModel, KmeansModel,
};
use crate::error::{CpdError, Result};
use crate::io::{codebook, matrix_file, scores_file, tensor_file, trajectory_file, write_atomic};
use crate::matrix::Matrix;
use crate::seed::derive_seed;
use crate::tensor::{NormMode, Stream};
use crate::trajectory::{pool_all, DescriptorKind, PreparedMaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoEntry {
    pub id: String,
    pub label: u32,
    pub split: Split,
}

/// Manifest: one `<id> <label> <train|test>` line per video.
pub fn read_manifest(path: &Path) -> Result<Vec<VideoEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CpdError::io(path, e))?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CpdError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("expected '<id> <label> <train|test>', found {line:?}"),
            });
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(CpdError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("duplicate video id {:?}", fields[0]),
            });
        }
        let label = fields[1].parse::<u32>().map_err(|_| CpdError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("bad label {:?}", fields[1]),
        })?;
        let split = match fields[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(CpdError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: format!("bad split {other:?}, expected train or test"),
                })
            }
        };
        out.push(VideoEntry {
            id: fields[0].to_string(),
            label,
            split,
        });
    }
    if out.is_empty() {
        return Err(CpdError::EmptyInput {
            what: format!("manifest {}", path.display()),
        });
    }
    Ok(out)
}

type UnitKey = (usize, Stream, NormMode, DescriptorKind);

fn unit_name(layers: &[String], key: &UnitKey) -> String {
    format!(
        "{}_{}_{}_{}",
        layers[key.0],
        key.1.as_str(),
        key.2.as_str(),
        key.3.as_str()
    )
}

/// One trained-and-scored SVM block.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub name: String,
    pub layer: String,
    pub stream: Stream,
    /// `None` when both normalization branches were concatenated.
    pub mode: Option<NormMode>,
    pub kind: DescriptorKind,
    pub scores: ScoreMatrix,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Score sum over every block of one descriptor kind.
#[derive(Debug, Clone)]
pub struct KindOutcome {
    pub kind: DescriptorKind,
    pub scores: ScoreMatrix,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub videos: Vec<VideoEntry>,
    pub blocks: Vec<BlockOutcome>,
    pub kinds: Vec<KindOutcome>,
    pub fused: ScoreMatrix,
    pub fused_train_accuracy: f64,
    pub fused_test_accuracy: f64,
    pub report: String,
}

fn split_accuracies(scores: &ScoreMatrix, videos: &[VideoEntry]) -> (f64, f64) {
    let preds = predict(scores);
    let by_split = |want: Split| {
        let pairs: Vec<(u32, u32)> = preds
            .iter()
            .zip(videos)
            .filter(|(_, v)| v.split == want)
            .map(|(&p, v)| (p, v.label))
            .collect();
        if pairs.is_empty() {
            return 0.0;
        }
        let p: Vec<u32> = pairs.iter().map(|&(p, _)| p).collect();
        let t: Vec<u32> = pairs.iter().map(|&(_, t)| t).collect();
        accuracy(&p, &t)
    };
    (by_split(Split::Train), by_split(Split::Test))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let videos = read_manifest(&cfg.corpus.join("manifest.txt"))?;
    let train_indices: Vec<usize> = videos
        .iter()
        .enumerate()
        .filter(|(_, v)| v.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if train_indices.is_empty() {
        return Err(CpdError::EmptyInput {
            what: "training split".into(),
        });
    }
    let train_labels: Vec<u32> = train_indices.iter().map(|&i| videos[i].label).collect();

    // Pool descriptors for every video and unit. A unit is one
    // (layer, stream, mode, kind) combination; blocks may later merge the
    // two normalization branches of a unit pair.
    let mut units: Vec<UnitKey> = Vec::new();
    for layer_idx in 0..cfg.layers.len() {
        for &stream in &[Stream::Spatial, Stream::Temporal] {
            for &mode in &cfg.norm_modes {
                for &kind in &cfg.kinds {
                    units.push((layer_idx, stream, mode, kind));
                }
            }
        }
    }
    let mut pooled: BTreeMap<UnitKey, Vec<Matrix>> = BTreeMap::new();
    for v in &videos {
        let vdir = cfg.corpus.join("videos").join(&v.id);
        let set = trajectory_file::load_trajectories(&vdir.join("trajectories.txt"))?;
        for (layer_idx, layer) in cfg.layers.iter().enumerate() {
            let spatial =
                tensor_file::load_feature_map(&vdir.join(format!("{layer}_spatial.cpdt")))?;
            let temporal =
                tensor_file::load_feature_map(&vdir.join(format!("{layer}_temporal.cpdt")))?;
            for (map, want) in [(&spatial, Stream::Spatial), (&temporal, Stream::Temporal)] {
                if map.stream() != want {
                    return Err(CpdError::InvalidParam {
                        reason: format!(
                            "video {}: {layer} {} tensor is tagged {}",
                            v.id,
                            want,
                            map.stream()
                        ),
                    });
                }
            }
            let maps = PreparedMaps::build(&spatial, &temporal, &cfg.norm_modes)?;
            for ds in pool_all(&set, &maps, &cfg.norm_modes, &cfg.kinds)? {
                pooled
                    .entry((layer_idx, ds.stream, ds.mode, ds.kind))
                    .or_default()
                    .push(ds.to_matrix());
            }
        }
    }

    let models_dir = cfg.out.join("models");
    let reps_dir = cfg.out.join("representations");
    let scores_dir = cfg.out.join("scores");
    for dir in [&cfg.out, &models_dir, &reps_dir, &scores_dir] {
        std::fs::create_dir_all(dir).map_err(|e| CpdError::io(dir.as_path(), e))?;
    }

    // Fit PCA plus a codebook per unit on the training split, then encode
    // every video into one representation row per unit.
    let d_pca = cfg.resolved_d_pca();
    let k_codebook = cfg.resolved_codebook_size();
    let mut unit_reps: BTreeMap<UnitKey, Matrix> = BTreeMap::new();
    for unit in &units {
        let name = unit_name(&cfg.layers, unit);
        let per_video = &pooled[unit];
        let channels = per_video[0].cols();
        let mut pool = Matrix::new(channels);
        for &vi in &train_indices {
            for row in per_video[vi].iter_rows() {
                pool.push_row(row);
            }
        }
        let pool = subsample_rows(
            &pool,
            cfg.sample_cap,
            derive_seed(cfg.seed, &["sample", &name]),
        )?;
        let pca = pca_fit(&pool, d_pca)?;
        codebook::save_pca(&models_dir.join(format!("{name}.pca.cpdc")), &pca)?;
        let reduced_pool = pca.transform_matrix(&pool)?;
        let codebook_seed = derive_seed(cfg.seed, &["codebook", &name]);
        let (gmm, kmeans): (Option<GmmModel>, Option<KmeansModel>) = match cfg.encoder {
            Encoder::Fv => {
                let g = gmm_fit(&reduced_pool, k_codebook, codebook_seed)?;
                codebook::save_gmm(&models_dir.join(format!("{name}.gmm.cpdc")), &g)?;
                (Some(g), None)
            }
            Encoder::Vlad => {
                let km = kmeans_fit(&reduced_pool, k_codebook, codebook_seed)?;
                codebook::save_kmeans(&models_dir.join(format!("{name}.kmeans.cpdc")), &km)?;
                (None, Some(km))
            }
        };
        let rep_dim = match cfg.encoder {
            Encoder::Fv => 2 * k_codebook * d_pca,
            Encoder::Vlad => k_codebook * d_pca,
        };
        let mut reps = Matrix::new(rep_dim);
        for per in per_video {
            let reduced = pca.transform_matrix(per)?;
            let rep = encode_video(cfg.encoder, gmm.as_ref(), kmeans.as_ref(), &reduced)?;
            reps.push_row(&rep);
        }
        unit_reps.insert(*unit, reps);
    }

    // Assemble SVM blocks: one per unit, or one per (layer, stream, kind)
    // with the spatiotemporal branch concatenated before the channel branch.
    struct BlockInput {
        name: String,
        layer: String,
        stream: Stream,
        mode: Option<NormMode>,
        kind: DescriptorKind,
        reps: Matrix,
    }
    let mut block_inputs: Vec<BlockInput> = Vec::new();
    if cfg.concat_norms {
        for layer_idx in 0..cfg.layers.len() {
            for &stream in &[Stream::Spatial, Stream::Temporal] {
                for &kind in &cfg.kinds {
                    let st = &unit_reps[&(layer_idx, stream, NormMode::Spatiotemporal, kind)];
                    let ch = &unit_reps[&(layer_idx, stream, NormMode::Channel, kind)];
                    let mut reps = Matrix::new(st.cols() + ch.cols());
                    for (a, b) in st.iter_rows().zip(ch.iter_rows()) {
                        let assembled = crate::encode::assemble_layer(a, b)?;
                        reps.push_row(&assembled.values);
                    }
                    block_inputs.push(BlockInput {
                        name: format!(
                            "{}_{}_stch_{}",
                            cfg.layers[layer_idx],
                            stream.as_str(),
                            kind.as_str()
                        ),
                        layer: cfg.layers[layer_idx].clone(),
                        stream,
                        mode: None,
                        kind,
                        reps,
                    });
                }
            }
        }
    } else {
        for unit in &units {
            block_inputs.push(BlockInput {
                name: unit_name(&cfg.layers, unit),
                layer: cfg.layers[unit.0].clone(),
                stream: unit.1,
                mode: Some(unit.2),
                kind: unit.3,
                reps: unit_reps[unit].clone(),
            });
        }
    }

    let ids: Vec<String> = videos.iter().map(|v| v.id.clone()).collect();
    let mut blocks: Vec<BlockOutcome> = Vec::new();
    for input in &block_inputs {
        let mut train_rows = Matrix::new(input.reps.cols());
        for &vi in &train_indices {
            train_rows.push_row(input.reps.row(vi));
        }
        let svm = svm_train(
            &train_rows,
            &train_labels,
            cfg.svm_c,
            derive_seed(cfg.seed, &["svm", &input.name]),
        )?;
        codebook::save_svm(&models_dir.join(format!("{}.svm.cpdc", input.name)), &svm)?;
        matrix_file::save_matrix(&reps_dir.join(format!("{}.cpdd", input.name)), &input.reps)?;
        let scores = svm_score(&svm, &input.reps, input.name.clone())?;
        scores_file::save_scores(
            &scores_dir.join(format!("{}.scores.txt", input.name)),
            &scores,
            &ids,
        )?;
        let (train_acc, test_acc) = split_accuracies(&scores, &videos);
        blocks.push(BlockOutcome {
            name: input.name.clone(),
            layer: input.layer.clone(),
            stream: input.stream,
            mode: input.mode,
            kind: input.kind,
            scores,
            train_accuracy: train_acc,
            test_accuracy: test_acc,
        });
    }

    // Fuse per descriptor kind, then across everything.
    let mut kinds: Vec<KindOutcome> = Vec::new();
    for &kind in &cfg.kinds {
        let parts: Vec<ScoreMatrix> = blocks
            .iter()
            .filter(|b| b.kind == kind)
            .map(|b| b.scores.clone())
            .collect();
        let fusedk = fuse_scores(&parts)?;
        scores_file::save_scores(
            &scores_dir.join(format!("kind_{}.scores.txt", kind.as_str())),
            &fusedk,
            &ids,
        )?;
        let (train_acc, test_acc) = split_accuracies(&fusedk, &videos);
        kinds.push(KindOutcome {
            kind,
            scores: fusedk,
            train_accuracy: train_acc,
            test_accuracy: test_acc,
        });
    }
    let all_scores: Vec<ScoreMatrix> = blocks.iter().map(|b| b.scores.clone()).collect();
    let fused = fuse_scores(&all_scores)?;
    scores_file::save_scores(&scores_dir.join("fused.scores.txt"), &fused, &ids)?;
    let (fused_train, fused_test) = split_accuracies(&fused, &videos);

    // Line-oriented report; every float at fixed precision so reruns are
    // byte-identical.
    let mut report = String::new();
    let layer_list = cfg.layers.join(",");
    let mode_list: Vec<&str> = cfg.norm_modes.iter().map(|m| m.as_str()).collect();
    let kind_list: Vec<&str> = cfg.kinds.iter().map(|k| k.as_str()).collect();
    let _ = writeln!(
        report,
        "config encoder={} d_pca={} codebook={} svm_c={:.6} seed={} sample_cap={} concat={} layers={} modes={} kinds={}",
        cfg.encoder,
        d_pca,
        k_codebook,
        cfg.svm_c,
        cfg.seed,
        cfg.sample_cap,
        cfg.concat_norms,
        layer_list,
        mode_list.join(","),
        kind_list.join(",")
    );
    let classes: std::collections::BTreeSet<u32> = videos.iter().map(|v| v.label).collect();
    let _ = writeln!(
        report,
        "corpus videos={} train={} test={} classes={}",
        videos.len(),
        train_indices.len(),
        videos.len() - train_indices.len(),
        classes.len()
    );
    for b in &blocks {
        let _ = writeln!(
            report,
            "block name={} train_acc={:.6} test_acc={:.6}",
            b.name, b.train_accuracy, b.test_accuracy
        );
    }
    for k in &kinds {
        let _ = writeln!(
            report,
            "kind name={} train_acc={:.6} test_acc={:.6}",
            k.kind, k.train_accuracy, k.test_accuracy
        );
    }
    let _ = writeln!(
        report,
        "fused train_acc={:.6} test_acc={:.6}",
        fused_train, fused_test
    );
    let fused_preds = predict(&fused);
    for (v, &p) in videos.iter().zip(&fused_preds) {
        let _ = writeln!(
            report,
            "video id={} label={} split={} predicted={}",
            v.id,
            v.label,
            v.split.as_str(),
            p
        );
    }
    write_atomic(&cfg.out.join("report.txt"), report.as_bytes())?;

    Ok(PipelineOutcome {
        videos,
        blocks,
        kinds,
        fused,
        fused_train_accuracy: fused_train,
        fused_test_accuracy: fused_test,
        report,
    })
}
