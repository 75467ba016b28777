//! `cpd`: command line front end for the cross-stream pooled descriptor
//! pipeline. Each subcommand wraps one pipeline stage; `pipeline` runs the
//! whole chain over a corpus directory. Errors map to stable exit codes
//! (documented in the README); successful commands print one `ok ...` line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpd_core::encode::{encode_video, gmm_fit, kmeans_fit, pca_fit, subsample_rows, Encoder};
use cpd_core::io::{codebook, matrix_file, pgm, scores_file, tensor_file, trajectory_file};
use cpd_core::pipeline::{load_config_file, run_pipeline, PipelineConfig};
use cpd_core::synth::{generate_corpus, SynthSpec};
use cpd_core::tensor::{
    cross_stream_with, normalize, weight_map, CrossStreamMap, MapDims, NormMode, NormalizedMap,
    VideoDims,
};
use cpd_core::trajectory::{pool_cpd_direct, pool_cpd_weighted_with, pool_tdd, DescriptorKind};
use cpd_core::{CpdError, Matrix, Result};

#[derive(Parser)]
#[command(name = "cpd", version, about = "Cross-stream pooled descriptor pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw feature-map tensor (st or ch mode).
    Normalize(NormalizeArgs),
    /// Sum a normalized tensor's channels into a per-position weight map.
    Weightmap(WeightmapArgs),
    /// Multiply a normalized tensor by the other stream's weight map.
    Cross(CrossArgs),
    /// Pool a map along each trajectory into per-trajectory descriptors.
    Pool(PoolArgs),
    /// Fit PCA and a codebook (GMM or k-means) on descriptor files.
    FitCodebook(FitCodebookArgs),
    /// Encode one descriptor file into a single representation row.
    Encode(EncodeArgs),
    /// Train one-vs-rest linear SVMs on representation rows.
    Train(TrainArgs),
    /// Score representations with a trained SVM model.
    Score(ScoreArgs),
    /// Sum score tables element-wise.
    Fuse(FuseArgs),
    /// Run the full pipeline over a corpus directory.
    Pipeline(PipelineArgs),
    /// Generate a synthetic two-stream corpus.
    Synth(SynthArgs),
    /// Export one weight-map frame as a PGM image.
    ExportWm(ExportWmArgs),
}

#[derive(Args)]
struct NormalizeArgs {
    /// Raw tensor file.
    #[arg(long)]
    input: PathBuf,
    /// Normalization mode: st or ch.
    #[arg(long)]
    mode: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct WeightmapArgs {
    /// Normalized tensor file (values in [0, 1]).
    #[arg(long)]
    input: PathBuf,
    /// Mode the input was normalized with (metadata only).
    #[arg(long, default_value = "st")]
    mode: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CrossArgs {
    /// Normalized tensor file for the stream keeping its channels.
    #[arg(long)]
    map: PathBuf,
    /// Mode the map was normalized with (metadata only).
    #[arg(long, default_value = "st")]
    mode: String,
    /// Weight map derived from the other stream.
    #[arg(long)]
    weights: PathBuf,
    /// Permit weighting a stream with its own weights (ablation only).
    #[arg(long)]
    allow_same_stream: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    trajectories: PathBuf,
    /// Normalized tensor (kind tdd, or cpd with --weights) or an already
    /// crossed tensor (kind cpd without --weights).
    #[arg(long)]
    map: PathBuf,
    /// Descriptor kind: tdd or cpd.
    #[arg(long)]
    kind: String,
    /// Mode the map was normalized with (metadata only).
    #[arg(long, default_value = "st")]
    mode: String,
    /// Weight map from the other stream; enables the weighted cpd route.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Permit same-stream weighting (ablation only).
    #[arg(long)]
    allow_same_stream: bool,
    /// Output descriptor matrix, one row per trajectory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FitCodebookArgs {
    /// Descriptor matrix file; repeat to pool several.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Encoder the codebook is for: fv or vlad.
    #[arg(long)]
    encoder: String,
    /// PCA output dimension (defaults to the encoder's standard size).
    #[arg(long)]
    d_pca: Option<usize>,
    /// Codebook size (defaults to the encoder's standard size).
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on training rows; larger pools are subsampled.
    #[arg(long, default_value_t = cpd_core::DEFAULT_SAMPLE_CAP)]
    sample_cap: usize,
    #[arg(long)]
    pca_out: PathBuf,
    #[arg(long)]
    codebook_out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    /// Descriptor matrix for one video.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    pca: PathBuf,
    #[arg(long)]
    codebook: PathBuf,
    /// Encoder: fv or vlad.
    #[arg(long)]
    encoder: String,
    /// Output representation (a 1-row matrix file).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Representation matrix, one row per video.
    #[arg(long)]
    reps: PathBuf,
    /// Text file with one integer label per representation row.
    #[arg(long)]
    labels: PathBuf,
    /// Hinge-loss cost; the loss is averaged over rows.
    #[arg(long, default_value_t = cpd_core::classify::DEFAULT_SVM_C)]
    svm_c: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    reps: PathBuf,
    /// Text file with one row id per representation row (defaults to 0..N).
    #[arg(long)]
    ids: Option<PathBuf>,
    /// Provenance string recorded in the score table.
    #[arg(long, default_value = "scores")]
    provenance: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Score table; repeat at least twice.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Corpus directory (manifest.txt plus videos/).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory for models, representations, scores, and the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; flags override it, it overrides CPD_SEED.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Encoder: fv or vlad.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    d_pca: Option<usize>,
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long)]
    svm_c: Option<f64>,
    /// Comma-separated layer names, e.g. conv3,conv4,conv5.
    #[arg(long)]
    layers: Option<String>,
    /// Comma-separated normalization modes, e.g. st,ch.
    #[arg(long)]
    modes: Option<String>,
    /// Comma-separated descriptor kinds, e.g. tdd,cpd.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    sample_cap: Option<usize>,
    /// Concatenate the st and ch branches into one SVM block per stream.
    #[arg(long)]
    concat_norms: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 14)]
    videos_per_class: usize,
    #[arg(long, default_value_t = 8)]
    train_per_class: usize,
    /// Comma-separated layer names.
    #[arg(long, default_value = "conv3")]
    layers: String,
    #[arg(long, default_value_t = 14)]
    map_width: usize,
    #[arg(long, default_value_t = 14)]
    map_height: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 56)]
    video_width: u32,
    #[arg(long, default_value_t = 56)]
    video_height: u32,
    #[arg(long, default_value_t = 60)]
    trajectories: usize,
    #[arg(long, default_value_t = cpd_core::pipeline::DEFAULT_TRAJECTORY_LEN)]
    trajectory_len: usize,
}

#[derive(Args)]
struct ExportWmArgs {
    /// Weight-map tensor (single channel).
    #[arg(long)]
    input: PathBuf,
    /// Frame index to export.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    output: PathBuf,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("CPD_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CpdError::Config {
                reason: format!("CPD_SEED must be an unsigned integer, got {v:?}"),
            }),
        Err(_) => Ok(None),
    }
}

/// Flag beats CPD_SEED beats 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    Ok(env_seed()?.unwrap_or(0))
}

fn load_normalized(path: &Path, mode: NormMode) -> Result<NormalizedMap> {
    let (dims, video, stream, data) = tensor_file::load_feature_map(path)?.into_parts();
    NormalizedMap::from_parts(dims, video, stream, mode, data)
}

fn parse_list<T: std::str::FromStr<Err = CpdError>>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|item| item.trim().parse::<T>())
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Normalize(a) => {
            let mode: NormMode = a.mode.parse()?;
            let map = tensor_file::load_feature_map(&a.input)?;
            let out = normalize(&map, mode);
            tensor_file::write_tensor(&a.output, out.dims(), out.video(), out.stream(), out.data())?;
            println!(
                "ok normalize mode={mode} dims={} output={}",
                out.dims(),
                a.output.display()
            );
        }
        Command::Weightmap(a) => {
            let mode: NormMode = a.mode.parse()?;
            let map = load_normalized(&a.input, mode)?;
            let w = weight_map(&map);
            tensor_file::save_weight_map(&a.output, &w)?;
            println!(
                "ok weightmap stream={} dims={}x{}x{} output={}",
                w.stream(),
                w.width(),
                w.height(),
                w.frames(),
                a.output.display()
            );
        }
        Command::Cross(a) => {
            let mode: NormMode = a.mode.parse()?;
            let map = load_normalized(&a.map, mode)?;
            let weights = tensor_file::load_weight_map(&a.weights)?;
            let crossed = cross_stream_with(&map, &weights, a.allow_same_stream)?;
            tensor_file::write_tensor(
                &a.output,
                crossed.dims(),
                crossed.video(),
                crossed.stream(),
                crossed.data(),
            )?;
            println!(
                "ok cross stream={} weighted_by={} output={}",
                crossed.stream(),
                weights.stream(),
                a.output.display()
            );
        }
        Command::Pool(a) => {
            let kind: DescriptorKind = a.kind.parse()?;
            let mode: NormMode = a.mode.parse()?;
            let set = trajectory_file::load_trajectories(&a.trajectories)?;
            let (dims, video, stream, data) = tensor_file::load_feature_map(&a.map)?.into_parts();
            let mut descriptors = Matrix::new(dims.channels);
            match (kind, &a.weights) {
                (DescriptorKind::Tdd, _) => {
                    let map = NormalizedMap::from_parts(dims, video, stream, mode, data)?;
                    for traj in set.trajectories() {
                        descriptors.push_row(&pool_tdd(traj, &map, &set)?.values);
                    }
                }
                (DescriptorKind::Cpd, Some(weights)) => {
                    let map = NormalizedMap::from_parts(dims, video, stream, mode, data)?;
                    let w = tensor_file::load_weight_map(weights)?;
                    for traj in set.trajectories() {
                        descriptors.push_row(
                            &pool_cpd_weighted_with(traj, &map, &w, &set, a.allow_same_stream)?
                                .values,
                        );
                    }
                }
                (DescriptorKind::Cpd, None) => {
                    let map = CrossStreamMap::from_parts(dims, video, stream, mode, data)?;
                    for traj in set.trajectories() {
                        descriptors.push_row(&pool_cpd_direct(traj, &map, &set)?.values);
                    }
                }
            }
            matrix_file::save_matrix(&a.output, &descriptors)?;
            println!(
                "ok pool kind={kind} trajectories={} channels={} output={}",
                descriptors.rows(),
                descriptors.cols(),
                a.output.display()
            );
        }
        Command::FitCodebook(a) => {
            let encoder: Encoder = a.encoder.parse()?;
            let seed = resolve_seed(a.seed)?;
            let mut pool: Option<Matrix> = None;
            for path in &a.inputs {
                let m = matrix_file::load_matrix(path)?;
                match &mut pool {
                    None => pool = Some(m),
                    Some(p) => {
                        if m.cols() != p.cols() {
                            return Err(CpdError::ShapeMismatch {
                                left: format!("{} columns", p.cols()),
                                right: format!("{}: {} columns", path.display(), m.cols()),
                            });
                        }
                        for row in m.iter_rows() {
                            p.push_row(row);
                        }
                    }
                }
            }
            let pool = pool.expect("clap enforces at least one input");
            let pool = subsample_rows(&pool, a.sample_cap, seed)?;
            let (d_default, k_default) = encoder.default_dims();
            let d_pca = a.d_pca.unwrap_or(d_default);
            let k = a.codebook_size.unwrap_or(k_default);
            let pca = pca_fit(&pool, d_pca)?;
            codebook::save_pca(&a.pca_out, &pca)?;
            let reduced = pca.transform_matrix(&pool)?;
            match encoder {
                Encoder::Fv => {
                    let g = gmm_fit(&reduced, k, seed)?;
                    codebook::save_gmm(&a.codebook_out, &g)?;
                }
                Encoder::Vlad => {
                    let km = kmeans_fit(&reduced, k, seed)?;
                    codebook::save_kmeans(&a.codebook_out, &km)?;
                }
            }
            println!(
                "ok fit-codebook encoder={encoder} rows={} d_pca={d_pca} codebook={k} pca={} codebook_out={}",
                pool.rows(),
                a.pca_out.display(),
                a.codebook_out.display()
            );
        }
        Command::Encode(a) => {
            let encoder: Encoder = a.encoder.parse()?;
            let descriptors = matrix_file::load_matrix(&a.input)?;
            let pca = codebook::load_pca(&a.pca)?;
            let reduced = pca.transform_matrix(&descriptors)?;
            let rep = match encoder {
                Encoder::Fv => {
                    let g = codebook::load_gmm(&a.codebook)?;
                    encode_video(encoder, Some(&g), None, &reduced)?
                }
                Encoder::Vlad => {
                    let km = codebook::load_kmeans(&a.codebook)?;
                    encode_video(encoder, None, Some(&km), &reduced)?
                }
            };
            let mut out = Matrix::new(rep.len());
            out.push_row(&rep);
            matrix_file::save_matrix(&a.output, &out)?;
            println!(
                "ok encode encoder={encoder} length={} output={}",
                rep.len(),
                a.output.display()
            );
        }
        Command::Train(a) => {
            let reps = matrix_file::load_matrix(&a.reps)?;
            let text = std::fs::read_to_string(&a.labels).map_err(|e| CpdError::io(&a.labels, e))?;
            let mut labels = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                labels.push(line.trim().parse::<u32>().map_err(|_| CpdError::Parse {
                    path: a.labels.clone(),
                    line: idx + 1,
                    reason: format!("bad label {line:?}"),
                })?);
            }
            let seed = resolve_seed(a.seed)?;
            let model = cpd_core::svm_train(&reps, &labels, a.svm_c, seed)?;
            codebook::save_svm(&a.output, &model)?;
            println!(
                "ok train classes={} dim={} output={}",
                model.class_labels().len(),
                model.dim(),
                a.output.display()
            );
        }
        Command::Score(a) => {
            let model = codebook::load_svm(&a.model)?;
            let reps = matrix_file::load_matrix(&a.reps)?;
            let scores = cpd_core::svm_score(&model, &reps, a.provenance.clone())?;
            let ids: Vec<String> = match &a.ids {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|e| CpdError::io(path, e))?;
                    text.lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| l.trim().to_string())
                        .collect()
                }
                None => (0..reps.rows()).map(|i| i.to_string()).collect(),
            };
            scores_file::save_scores(&a.output, &scores, &ids)?;
            println!(
                "ok score rows={} classes={} output={}",
                reps.rows(),
                model.class_labels().len(),
                a.output.display()
            );
        }
        Command::Fuse(a) => {
            let mut parts = Vec::new();
            let mut ids: Option<Vec<String>> = None;
            for path in &a.inputs {
                let (scores, file_ids) = scores_file::load_scores(path)?;
                match &ids {
                    None => ids = Some(file_ids),
                    Some(existing) => {
                        if *existing != file_ids {
                            return Err(CpdError::InvalidParam {
                                reason: format!(
                                    "{} lists different row ids than the first table",
                                    path.display()
                                ),
                            });
                        }
                    }
                }
                parts.push(scores);
            }
            let fused = cpd_core::fuse_scores(&parts)?;
            let ids = ids.expect("clap enforces at least one input");
            scores_file::save_scores(&a.output, &fused, &ids)?;
            println!(
                "ok fuse tables={} rows={} output={}",
                parts.len(),
                ids.len(),
                a.output.display()
            );
        }
        Command::Pipeline(a) => {
            // Builtins, then CPD_SEED, then the config file, then flags.
            let mut cfg = PipelineConfig::new("", "");
            if let Some(seed) = env_seed()? {
                cfg.seed = seed;
            }
            if let Some(path) = &a.config {
                let file = load_config_file(path)?;
                cfg.overlay(&file);
            }
            if let Some(corpus) = &a.corpus {
                cfg.corpus = corpus.clone();
            }
            if let Some(out) = &a.out {
                cfg.out = out.clone();
            }
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if let Some(encoder) = &a.encoder {
                cfg.encoder = encoder.parse()?;
            }
            if let Some(d) = a.d_pca {
                cfg.d_pca = Some(d);
            }
            if let Some(k) = a.codebook_size {
                cfg.codebook_size = Some(k);
            }
            if let Some(c) = a.svm_c {
                cfg.svm_c = c;
            }
            if let Some(layers) = &a.layers {
                cfg.layers = layers.split(',').map(|s| s.trim().to_string()).collect();
            }
            if let Some(modes) = &a.modes {
                cfg.norm_modes = parse_list(modes)?;
            }
            if let Some(kinds) = &a.kinds {
                cfg.kinds = parse_list(kinds)?;
            }
            if let Some(cap) = a.sample_cap {
                cfg.sample_cap = cap;
            }
            if a.concat_norms {
                cfg.concat_norms = true;
            }
            if cfg.corpus.as_os_str().is_empty() {
                return Err(CpdError::Config {
                    reason: "no corpus directory (use --corpus or the config file)".into(),
                });
            }
            if cfg.out.as_os_str().is_empty() {
                return Err(CpdError::Config {
                    reason: "no output directory (use --out or the config file)".into(),
                });
            }
            let outcome = run_pipeline(&cfg)?;
            println!(
                "ok pipeline videos={} blocks={} fused_train_acc={:.6} fused_test_acc={:.6} report={}",
                outcome.videos.len(),
                outcome.blocks.len(),
                outcome.fused_train_accuracy,
                outcome.fused_test_accuracy,
                cfg.out.join("report.txt").display()
            );
        }
        Command::Synth(a) => {
            let seed = resolve_seed(a.seed)?;
            let spec = SynthSpec {
                classes: a.classes,
                videos_per_class: a.videos_per_class,
                train_per_class: a.train_per_class,
                layers: a.layers.split(',').map(|s| s.trim().to_string()).collect(),
                map_dims: MapDims {
                    width: a.map_width,
                    height: a.map_height,
                    channels: a.channels,
                    frames: a.frames,
                },
                video_dims: VideoDims {
                    width: a.video_width,
                    height: a.video_height,
                },
                trajectories_per_video: a.trajectories,
                trajectory_len: a.trajectory_len,
                ..SynthSpec::default()
            };
            let summary = generate_corpus(&spec, seed, &a.out)?;
            println!(
                "ok synth videos={} train={} test={} classes={} out={}",
                summary.videos,
                summary.train,
                summary.test,
                summary.classes,
                a.out.display()
            );
        }
        Command::ExportWm(a) => {
            let map = tensor_file::load_weight_map(&a.input)?;
            pgm::export_weight_frame(&a.output, &map, a.frame)?;
            println!(
                "ok export-wm frame={} size={}x{} output={}",
                a.frame,
                map.width(),
                map.height(),
                a.output.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
