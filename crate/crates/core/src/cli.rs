//! The `tben` command line: dataset generation, encoding, training,
//! evaluation, fusion and benchmarking. Commands talk to each other only
//! through files.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 partial failure (some videos failed to encode).

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use crate::bench::{run_bench, BenchConfig};
use crate::classifier::{train_with, HeadMode, Hierarchy, Label, LinearHead, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureStore, IndexEntry, TimingEntry, TimingReport, TIMING_FILE};
use crate::manifest::{write_json, LabelSet, Manifest, ManifestEntry, Split};
use crate::metrics::{evaluate, HitTable};
use crate::model::{load_model, save_model, SavedModel};
use crate::pooling::{PipelineKind, PoolingPipeline, ProjectorConfig};
use crate::predictions::{fuse_predictions, read_predictions, scored, write_predictions, Prediction};
use crate::rm::Normalization;
use crate::synth::{gen_covariance_classes, gen_hier_dataset, gen_second_modality, HierSynthSpec, SynthSpec};
use crate::tbnf::{read_tensor, write_tensor};
use crate::tensor::{Axis, FeatureSequence, Tensor};

pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tben", version, about = "Temporal bilinear encoding toolkit")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset: TBNF tensors plus manifest.json.
    GenSynth(GenSynthArgs),
    /// Encode every video of a manifest into one vector per modality.
    Encode(EncodeArgs),
    /// Train a linear head on encoded features.
    Train(TrainArgs),
    /// Evaluate a trained head, optionally writing per-video predictions.
    Eval(EvalArgs),
    /// Late-fuse prediction files and evaluate the result.
    Fuse(FuseArgs),
    /// Time each pooling pipeline on seeded random videos.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// Classes differ only in channel covariance.
    Covariance,
    /// Parent/child labels with coarse and fine mean offsets.
    Hier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Flat,
    Hier,
}

fn parse_norm(s: &str) -> std::result::Result<Normalization, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pipeline(s: &str) -> std::result::Result<PipelineKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[arg(long, value_enum, default_value = "covariance")]
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frames per video [default: 20 covariance, 10 hier].
    #[arg(long)]
    frames: Option<usize>,
    /// Channels per descriptor [default: 32 covariance, 128 hier].
    #[arg(long)]
    channels: Option<usize>,

    #[arg(long, default_value_t = 4, help_heading = "Covariance")]
    classes: usize,
    #[arg(long, default_value_t = 50, help_heading = "Covariance")]
    videos_per_class: usize,
    #[arg(long, default_value_t = 1.5, help_heading = "Covariance")]
    strength: f64,
    #[arg(long, default_value_t = 0.0, help_heading = "Covariance")]
    mean_offset: f64,
    #[arg(long, default_value_t = 1, help_heading = "Covariance")]
    height: usize,
    #[arg(long, default_value_t = 1, help_heading = "Covariance")]
    width: usize,

    #[arg(long, default_value_t = 8, help_heading = "Hier")]
    parents: usize,
    #[arg(long, default_value_t = 4, help_heading = "Hier")]
    children_per_parent: usize,
    #[arg(long, default_value_t = 20, help_heading = "Hier")]
    videos_per_child: usize,
    #[arg(long, default_value_t = 4.0, help_heading = "Hier")]
    parent_scale: f64,
    #[arg(long, default_value_t = 2.0, help_heading = "Hier")]
    child_scale: f64,
    #[arg(long, default_value_t = 4.0, help_heading = "Hier")]
    noise: f64,

    /// Length of a second "audio" modality vector per video; 0 disables it.
    #[arg(long, default_value_t = 0, help_heading = "Second modality")]
    audio_dim: usize,
    #[arg(long, default_value_t = 0.5, help_heading = "Second modality")]
    audio_snr: f64,
}

#[derive(Debug, Args)]
struct ProjectorArgs {
    #[arg(long, value_parser = parse_pipeline, default_value = "sap+tcbp")]
    pipeline: PipelineKind,
    #[arg(long, default_value_t = 4096)]
    proj_dim: usize,
    #[arg(long, default_value_t = 0)]
    proj_seed: u64,
    /// identity, ssqrt, sigmoid or scale:<k>.
    #[arg(long, value_parser = parse_norm, default_value = "ssqrt")]
    norm: Normalization,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    projector: ProjectorArgs,
    /// Modalities to encode [default: all in the manifest].
    #[arg(long, value_delimiter = ',')]
    modalities: Vec<String>,
    /// Record per-video encode wall time in timing.json.
    #[arg(long)]
    timing: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory written by `tben encode`.
    #[arg(long)]
    features: PathBuf,
    /// Model output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "flat")]
    mode: ModeArg,
    /// Modalities to concatenate, in order [default: all encoded].
    #[arg(long, value_delimiter = ',')]
    modalities: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    /// Validation Hit@k reported per epoch.
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    ks: Vec<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory written by `tben train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    ks: Vec<usize>,
    /// Write per-video predictions (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Prediction files to fuse.
    #[arg(required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// One nonnegative weight per input [default: all 1].
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    ks: Vec<usize>,
    /// Write fused predictions (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Pipelines to time [default: all five].
    #[arg(long, value_delimiter = ',', value_parser = parse_pipeline)]
    pipelines: Vec<PipelineKind>,
    #[arg(long, default_value_t = 130)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    height: usize,
    #[arg(long, default_value_t = 7)]
    width: usize,
    #[arg(long, default_value_t = 2048)]
    channels: usize,
    #[arg(long, default_value_t = 4096)]
    proj_dim: usize,
    #[arg(long, default_value_t = 0)]
    proj_seed: u64,
    #[arg(long, value_parser = parse_norm, default_value = "ssqrt")]
    norm: Normalization,
    /// Timed repetitions per pipeline (at least 10).
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Untimed repetitions before timing.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Seed of the random input video.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// How a command finished when it did not fail outright.
#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Success,
    Partial { failed: usize },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(&a),
        Command::Encode(a) => encode(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Fuse(a) => fuse(&a),
        Command::Bench(a) => bench(&a),
    };
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Partial { failed }) => {
            eprintln!("{failed} item(s) failed");
            EXIT_PARTIAL
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Position `i` of `n` videos in a class: first 70% train, next 10% val,
/// rest test.
fn split_for(i: usize, n: usize) -> Split {
    if i < n * 7 / 10 {
        Split::Train
    } else if i < n * 8 / 10 {
        Split::Val
    } else {
        Split::Test
    }
}

fn gen_synth(a: &GenSynthArgs) -> Result<Outcome> {
    // (sequence, labels, split), class-major.
    let mut videos: Vec<(FeatureSequence, LabelSet, Split)> = Vec::new();
    let mut hierarchy = None;
    let num_classes;
    match a.kind {
        SynthKind::Covariance => {
            let spec = SynthSpec {
                num_classes: a.classes,
                videos_per_class: a.videos_per_class,
                t: a.frames.unwrap_or(20),
                c: a.channels.unwrap_or(32),
                seed: a.seed,
                covariance_strength: a.strength,
                mean_offset: a.mean_offset,
                height: a.height,
                width: a.width,
            };
            num_classes = spec.num_classes;
            for (i, (seq, class)) in gen_covariance_classes(&spec)?.into_iter().enumerate() {
                let labels = LabelSet {
                    flat: Some(class),
                    ..LabelSet::default()
                };
                videos.push((seq, labels, split_for(i % spec.videos_per_class, spec.videos_per_class)));
            }
        }
        SynthKind::Hier => {
            let spec = HierSynthSpec {
                parents: a.parents,
                children_per_parent: a.children_per_parent,
                videos_per_child: a.videos_per_child,
                t: a.frames.unwrap_or(10),
                c: a.channels.unwrap_or(128),
                seed: a.seed,
                parent_scale: a.parent_scale,
                child_scale: a.child_scale,
                noise: a.noise,
            };
            let ds = gen_hier_dataset(&spec)?;
            num_classes = ds.hierarchy.num_children();
            for (i, (seq, label)) in ds.samples.into_iter().enumerate() {
                let Label::Hier { parent, child } = label else {
                    unreachable!("hierarchical generator yields hierarchical labels")
                };
                let labels = LabelSet {
                    flat: Some(child),
                    parent: Some(parent),
                    child: Some(child),
                };
                videos.push((seq, labels, split_for(i % spec.videos_per_child, spec.videos_per_child)));
            }
            hierarchy = Some(ds.hierarchy);
        }
    }

    // The second modality draws from its own stream, seeded one past the
    // dataset seed.
    let audio = if a.audio_dim > 0 {
        let classes: Vec<usize> = videos.iter().map(|(_, l, _)| l.flat.unwrap()).collect();
        Some(gen_second_modality(&classes, num_classes, a.audio_snr, a.audio_dim, a.seed.wrapping_add(1))?)
    } else {
        None
    };

    create_dir(&a.out.join("videos"))?;
    if audio.is_some() {
        create_dir(&a.out.join("audio"))?;
    }
    let mut manifest = Manifest::default();
    if let Some(h) = &hierarchy {
        write_json(a.out.join("hierarchy.json"), h)?;
        manifest.hierarchy_path = Some("hierarchy.json".into());
    }
    let mut counts = BTreeMap::new();
    for (i, (seq, labels, split)) in videos.into_iter().enumerate() {
        let id = format!("v{i:05}");
        let rel = PathBuf::from("videos").join(format!("{id}.tbnf"));
        write_tensor(seq.tensor(), a.out.join(&rel))?;
        let mut modalities = BTreeMap::from([("rgb".to_string(), rel)]);
        if let Some(audio) = &audio {
            let rel = PathBuf::from("audio").join(format!("{id}.tbnf"));
            write_tensor(&Tensor::vector(audio[i].values().to_vec())?, a.out.join(&rel))?;
            modalities.insert("audio".to_string(), rel);
        }
        *counts.entry(split).or_insert(0usize) += 1;
        manifest.entries.push(ManifestEntry {
            video_id: id,
            split,
            labels,
            modalities,
        });
    }
    manifest.save(a.out.join("manifest.json"))?;

    let count = |s| counts.get(&s).copied().unwrap_or(0);
    println!(
        "wrote {} videos, {num_classes} classes (train {}, val {}, test {}) to {}",
        manifest.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        a.out.display()
    );
    Ok(Outcome::Success)
}

/// A `(T, C)` file is a video on a 1x1 grid.
fn as_video(t: Tensor) -> Result<FeatureSequence> {
    if t.axes() == [Axis::T, Axis::C] {
        let (frames, c) = (t.dims()[0], t.dims()[1]);
        let lifted = Tensor::new(
            vec![frames, 1, 1, c],
            vec![Axis::T, Axis::H, Axis::W, Axis::C],
            t.into_data(),
        )?;
        return FeatureSequence::from_tensor(lifted);
    }
    FeatureSequence::from_tensor(t)
}

struct EncodeJob<'a> {
    video_id: &'a str,
    modality: &'a str,
    input: PathBuf,
}

fn encode(a: &EncodeArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&a.manifest)?;
    let available = manifest.modalities();
    let modalities = if a.modalities.is_empty() {
        available.clone()
    } else {
        for m in &a.modalities {
            if !available.contains(m) {
                return Err(Error::Config(format!("modality {m:?} not in manifest")));
            }
        }
        a.modalities.clone()
    };
    let cfg = ProjectorConfig {
        dim: a.projector.proj_dim,
        seed: a.projector.proj_seed,
        norm: a.projector.norm,
    };

    let mut entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    entries.sort_by(|x, y| x.video_id.cmp(&y.video_id));

    // One shared pipeline per modality, sized by the first readable
    // multi-frame tensor. Rank-1 tensors are already video-level vectors.
    let mut pipelines: BTreeMap<&str, (usize, PoolingPipeline)> = BTreeMap::new();
    for m in &modalities {
        let channels = entries.iter().find_map(|e| {
            let t = read_tensor(manifest.resolve(e.modalities.get(m)?)).ok()?;
            (t.rank() > 1).then(|| *t.dims().last().unwrap())
        });
        if let Some(c) = channels {
            pipelines.insert(m.as_str(), (c, PoolingPipeline::build(a.projector.pipeline, c, cfg)?));
        }
    }

    let manifest = &manifest;
    let jobs: Vec<EncodeJob> = entries
        .iter()
        .flat_map(|e| {
            modalities.iter().filter_map(move |m| {
                Some(EncodeJob {
                    video_id: &e.video_id,
                    modality: m,
                    input: manifest.resolve(e.modalities.get(m)?),
                })
            })
        })
        .collect();
    for m in &modalities {
        create_dir(&a.out.join(m))?;
    }

    let run_job = |job: &EncodeJob| -> Result<(IndexEntry, u64)> {
        let tensor = read_tensor(&job.input)?;
        let start = Instant::now();
        let vector = if tensor.rank() == 1 {
            tensor.into_data()
        } else {
            let (c, pipeline) = pipelines
                .get(job.modality)
                .expect("a readable multi-frame tensor sized this modality");
            let seq = as_video(tensor)?;
            if seq.channels() != *c {
                return Err(Error::Dimension(format!(
                    "{} channels, expected {c}",
                    seq.channels()
                )));
            }
            pipeline.run(&seq)?
        };
        let elapsed = start.elapsed().as_nanos() as u64;
        let rel = PathBuf::from(job.modality).join(format!("{}.tbnf", job.video_id));
        let dim = vector.len();
        write_tensor(&Tensor::vector(vector)?, a.out.join(&rel))?;
        let entry = IndexEntry {
            video_id: job.video_id.to_string(),
            modality: job.modality.to_string(),
            path: rel,
            dim,
        };
        Ok((entry, elapsed))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(IndexEntry, u64)>> = pool.install(|| jobs.par_iter().map(run_job).collect());

    let mut index = FeatureIndex {
        pipeline: a.projector.pipeline.name().to_string(),
        proj_dim: a.projector.proj_dim,
        proj_seed: a.projector.proj_seed,
        norm: a.projector.norm.to_string(),
        entries: Vec::with_capacity(jobs.len()),
    };
    let mut timings = Vec::new();
    let mut failed = 0;
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok((entry, ns)) => {
                timings.push(TimingEntry {
                    video_id: entry.video_id.clone(),
                    modality: entry.modality.clone(),
                    encode_ns: ns,
                });
                index.entries.push(entry);
            }
            Err(e) => {
                eprintln!("error: video {} [{}]: {e}", job.video_id, job.modality);
                failed += 1;
            }
        }
    }
    if index.entries.is_empty() && failed > 0 {
        return Err(Error::Data(format!("all {failed} encode jobs failed")));
    }
    index.save(&a.out)?;
    if a.timing {
        let mut ns: Vec<u64> = timings.iter().map(|t| t.encode_ns).collect();
        ns.sort_unstable();
        let median_ns = if ns.is_empty() { 0 } else { crate::bench::median(&ns) };
        write_json(
            a.out.join(TIMING_FILE),
            &TimingReport {
                median_ns,
                entries: timings,
            },
        )?;
        println!("median encode time {:.3} ms/video", median_ns as f64 / 1e6);
    }
    println!(
        "encoded {} vectors with {} into {}",
        index.entries.len(),
        a.projector.pipeline,
        a.out.display()
    );
    Ok(if failed > 0 {
        Outcome::Partial { failed }
    } else {
        Outcome::Success
    })
}

fn list_ids(ids: &[&str]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(" and {} more", ids.len() - SHOWN));
    }
    s
}

/// Features and labels of one split, failing with the ids that lack
/// features.
fn gather(
    manifest: &Manifest,
    store: &FeatureStore,
    split: Split,
    modalities: &[String],
    hierarchical: bool,
) -> Result<Vec<(String, Vec<f64>, Label)>> {
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for e in manifest.split(split) {
        match store.concat(&e.video_id, modalities) {
            Some(x) => out.push((e.video_id.clone(), x, e.label(hierarchical)?)),
            None => missing.push(e.video_id.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{split} videos without encoded {} features: {}",
            modalities.join("+"),
            list_ids(&missing)
        )));
    }
    Ok(out)
}

fn head_mode(manifest: &Manifest, mode: ModeArg) -> Result<HeadMode> {
    let hierarchy = manifest.hierarchy()?;
    match mode {
        ModeArg::Hier => hierarchy
            .map(|hierarchy| HeadMode::Hier { hierarchy })
            .ok_or_else(|| Error::Config("hier mode needs a hierarchy_path in the manifest".into())),
        ModeArg::Flat => {
            let num_classes = match hierarchy {
                Some(h) => h.num_children(),
                None => manifest
                    .entries
                    .iter()
                    .filter_map(|e| e.labels.flat)
                    .max()
                    .map_or(0, |m| m + 1),
            };
            if num_classes == 0 {
                return Err(Error::Label("manifest carries no flat labels".into()));
            }
            Ok(HeadMode::Flat { num_classes })
        }
    }
}

fn check_labels(samples: &[(String, Vec<f64>, Label)], mode: &HeadMode) -> Result<()> {
    for (id, _, label) in samples {
        let ok = match (mode, label) {
            (HeadMode::Flat { num_classes }, Label::Flat(c)) => c < num_classes,
            (HeadMode::Hier { hierarchy }, Label::Hier { parent, child }) => {
                hierarchy.check_label(*parent, *child).is_ok()
            }
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!(
                "video {id}: label {label:?} outside the model's label space"
            )));
        }
    }
    Ok(())
}

/// `ks` restricted to the label count.
fn usable_ks(ks: &[usize], labels: usize) -> Vec<usize> {
    let mut out: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= labels).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Like [`usable_ks`] but warns about dropped values and fails if none is
/// left.
fn report_ks(ks: &[usize], labels: usize) -> Result<Vec<usize>> {
    let usable = usable_ks(ks, labels);
    if usable.is_empty() {
        return Err(Error::Config(format!(
            "no k in {ks:?} lies between 1 and the {labels} labels"
        )));
    }
    if usable.len() < ks.len() {
        warn!("skipping k values outside 1..={labels}");
    }
    Ok(usable)
}

fn predict(head: &LinearHead, samples: &[(String, Vec<f64>, Label)]) -> Result<Vec<Prediction>> {
    samples
        .iter()
        .map(|(id, x, label)| {
            let parent = match label {
                Label::Hier { parent, .. } => Some(*parent),
                Label::Flat(_) => None,
            };
            Ok(Prediction {
                id: id.clone(),
                label: label.class(),
                parent,
                scores: head.scores(x)?,
            })
        })
        .collect()
}

fn fmt_table(table: &HitTable) -> String {
    table
        .iter()
        .map(|(k, v)| format!("hit@{k} {v:.2}"))
        .collect::<Vec<_>>()
        .join("  ")
}

fn train_cmd(a: &TrainArgs) -> Result<Outcome> {
    let cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        weight_init_scale: a.init_scale,
    };
    cfg.validate()?;
    let manifest = Manifest::load(&a.manifest)?;
    let mode = head_mode(&manifest, a.mode)?;
    let hierarchical = a.mode == ModeArg::Hier;
    let modalities = if a.modalities.is_empty() {
        let index = FeatureIndex::load(&a.features)?;
        index
            .entries
            .iter()
            .map(|e| e.modality.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        a.modalities.clone()
    };
    let store = FeatureStore::load(&a.features)?;

    let train_set = gather(&manifest, &store, Split::Train, &modalities, hierarchical)?;
    if train_set.is_empty() {
        return Err(Error::Data("the manifest has no train videos".into()));
    }
    check_labels(&train_set, &mode)?;
    let val_set = gather(&manifest, &store, Split::Val, &modalities, hierarchical)?;
    check_labels(&val_set, &mode)?;
    let ks = usable_ks(&a.ks, mode.num_labels());

    let data: Vec<(Vec<f64>, Label)> = train_set.into_iter().map(|(_, x, l)| (x, l)).collect();
    let mut log_lines = String::new();
    let mut val_error = None;
    let outcome = train_with(&data, &cfg, mode, |epoch, head, loss| {
        let mut line = format!("epoch {:>3}/{}  loss {loss:.4}", epoch + 1, cfg.epochs);
        let mut record = serde_json::json!({ "epoch": epoch + 1, "loss": loss });
        if !val_set.is_empty() && !ks.is_empty() {
            let table = predict(head, &val_set)
                .and_then(|p| evaluate(&scored(&p), &ks));
            match table {
                Ok(table) => {
                    line.push_str(&format!("  val {}", fmt_table(&table)));
                    record["val"] = serde_json::json!(table
                        .iter()
                        .map(|(k, v)| (format!("hit@{k}"), *v))
                        .collect::<BTreeMap<_, _>>());
                }
                Err(e) => {
                    val_error.get_or_insert(e);
                }
            }
        }
        println!("{line}");
        log_lines.push_str(&record.to_string());
        log_lines.push('\n');
    })?;
    if let Some(e) = val_error {
        return Err(e);
    }

    create_dir(&a.out)?;
    let log_path = a.out.join("train_log.jsonl");
    fs::write(&log_path, log_lines).map_err(|e| Error::io(&log_path, e))?;
    save_model(
        &a.out,
        &SavedModel {
            head: outcome.head,
            modalities,
            config: cfg,
        },
    )?;
    println!("model written to {}", a.out.display());
    Ok(Outcome::Success)
}

fn eval(a: &EvalArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let manifest = Manifest::load(&a.manifest)?;
    let mode = model.head.mode().clone();
    let hierarchical = matches!(mode, HeadMode::Hier { .. });
    if let HeadMode::Hier { hierarchy } = &mode {
        let theirs: Option<Hierarchy> = manifest.hierarchy()?;
        if theirs.as_ref() != Some(hierarchy) {
            return Err(Error::Config(
                "the manifest's hierarchy differs from the model's".into(),
            ));
        }
    }
    let store = FeatureStore::load(&a.features)?;
    let samples = gather(&manifest, &store, a.split, &model.modalities, hierarchical)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("the manifest has no {} videos", a.split)));
    }
    check_labels(&samples, &mode)?;
    if let Some((id, x, _)) = samples.iter().find(|(_, x, _)| x.len() != model.head.input_dim()) {
        return Err(Error::Config(format!(
            "video {id}: feature length {} but the model expects {}",
            x.len(),
            model.head.input_dim()
        )));
    }
    let ks = report_ks(&a.ks, mode.num_labels())?;
    let preds = predict(&model.head, &samples)?;
    let table = evaluate(&scored(&preds), &ks)?;
    print_table(&table, preds.len());
    if let Some(out) = &a.out {
        write_predictions(out, &preds)?;
    }
    Ok(Outcome::Success)
}

fn print_table(table: &HitTable, n: usize) {
    println!("videos {n}");
    for (k, v) in table {
        println!("hit@{k} {v:.2}");
    }
}

fn fuse(a: &FuseArgs) -> Result<Outcome> {
    let sets = a
        .inputs
        .iter()
        .map(read_predictions)
        .collect::<Result<Vec<_>>>()?;
    let weights = (!a.weights.is_empty()).then_some(a.weights.as_slice());
    let fused = fuse_predictions(&sets, weights)?;
    let ks = report_ks(&a.ks, fused[0].scores.len())?;
    let table = evaluate(&scored(&fused), &ks)?;
    print_table(&table, fused.len());
    if let Some(out) = &a.out {
        write_predictions(out, &fused)?;
    }
    Ok(Outcome::Success)
}

fn bench(a: &BenchArgs) -> Result<Outcome> {
    let cfg = BenchConfig {
        pipelines: if a.pipelines.is_empty() {
            PipelineKind::ALL.to_vec()
        } else {
            a.pipelines.clone()
        },
        t: a.frames,
        h: a.height,
        w: a.width,
        c: a.channels,
        projector: ProjectorConfig {
            dim: a.proj_dim,
            seed: a.proj_seed,
            norm: a.norm,
        },
        reps: a.reps,
        warmup: a.warmup,
        seed: a.seed,
    };
    info!(
        "timing t={} h={} w={} c={} d={} with {} reps",
        cfg.t, cfg.h, cfg.w, cfg.c, cfg.projector.dim, cfg.reps
    );
    if rayon::current_num_threads() > 1 {
        warn!("timings run on one thread; other load on the machine still skews them");
    }
    let mut header = false;
    let rows = run_bench(&cfg, |r| {
        if !std::mem::replace(&mut header, true) {
            println!("{:<10} {:>6} {:>12} {:>12}", "pipeline", "dim", "median ms", "p90 ms");
        }
        println!(
            "{:<10} {:>6} {:>12.3} {:>12.3}",
            r.pipeline,
            r.output_dim,
            r.median_ns as f64 / 1e6,
            r.p90_ns as f64 / 1e6
        );
    })?;
    if let Some(out) = &a.out {
        write_json(out, &rows)?;
    }
    Ok(Outcome::Success)
}
