//! Command-line surface of the `dvc` binary.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::captioner::Vocabulary;
use crate::dataio::{
    curve_to_csv, dense_captions, generate, load_dataset, ranked_segments, read_predictions, write_corpus,
    write_predictions, Checkpoint, Dataset, PredictionFile, RngState, RunConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{ar_an_curve, dense_caption_map};
use crate::tensor_engine::OptimizerState;
use crate::trainer::{self, ground_truth_captions, ground_truth_segments, Model, StepKind};

pub const STAGE_PRETRAINED: &str = "pretrained";
pub const STAGE_JOINT: &str = "joint";

#[derive(Debug, Parser)]
#[command(name = "dvc", version, about = "Dense video captioning: event proposals and captions")]
struct Cli {
    /// JSON file of dotted configuration keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed` and the synthetic corpus seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint to start from or evaluate.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus.
    GenSynth,
    /// Train the captioner on ground-truth segments.
    PretrainSg(DataArg),
    /// Joint training from a pretrained captioner checkpoint.
    Train(DataArg),
    /// Write ranked proposals.
    Propose {
        #[command(flatten)]
        data: DataArg,
        /// Proposals kept per video.
        #[arg(long, default_value_t = 100)]
        top_k: usize,
    },
    /// Write captioned proposals.
    Caption(DataArg),
    /// Dense-captioning scores of a caption file.
    EvalDense {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// AR-AN curve of a proposal file.
    EvalProposals {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, required_unless_present = "ground_truth")]
        predictions: Option<PathBuf>,
        /// Score the ground truth itself as predictions.
        #[arg(long)]
        ground_truth: bool,
    },
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for
/// usage or validation errors, 1 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

fn load_data(cfg: &RunConfig, manifest: &Path) -> Result<Dataset> {
    let mut data = load_dataset(manifest)?;
    if let Some(p) = &cfg.vocab_path {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let tokens: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        data.vocab = Vocabulary::from_tokens(tokens)?;
    }
    Ok(data)
}

/// Model dimensions follow the data.
fn fit_to_data(cfg: &mut RunConfig, data: &Dataset) -> Result<()> {
    if (cfg.tep.input_len, cfg.tep.input_dim, cfg.sg.attr_dim) != (data.num_clips, data.feature_dim, data.attr_dim) {
        info!(
            "using data dimensions T_f={}, D0={}, K={}",
            data.num_clips, data.feature_dim, data.attr_dim
        );
    }
    cfg.tep.input_len = data.num_clips;
    cfg.tep.input_dim = data.feature_dim;
    cfg.sg.attr_dim = data.attr_dim;
    cfg.validate()
}

struct Loaded {
    model: Model,
    checkpoint: Checkpoint,
    cfg: RunConfig,
}

fn load_model(cli: &Cli, path: &Path) -> Result<Loaded> {
    let ckpt = Checkpoint::load(path)?;
    let stored = Model::stored_config(&ckpt).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut cfg = match &cli.config {
        Some(_) => base_config(cli)?,
        None => stored.clone(),
    };
    if cli.config.is_some() {
        cfg.tep.input_len = stored.tep.input_len;
        cfg.tep.input_dim = stored.tep.input_dim;
        cfg.sg.attr_dim = stored.sg.attr_dim;
        if let Some(seed) = cli.seed {
            cfg.train.seed = seed;
        }
    }
    if cfg.model_hash() != ckpt.config_hash {
        warn!(
            "configuration hash {} differs from the checkpoint's {}; proceeding",
            cfg.model_hash(),
            ckpt.config_hash
        );
    }
    let model = Model::from_checkpoint(&ckpt, &cfg).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(Loaded {
        model,
        checkpoint: ckpt,
        cfg,
    })
}

fn make_checkpoint(model: &Model, cfg: &RunConfig, opt: &OptimizerState<f32>, rng: &ChaCha8Rng, stage: &str) -> Checkpoint {
    let mut metadata = BTreeMap::new();
    metadata.insert("config".into(), cfg.to_json_string());
    metadata.insert("vocab".into(), serde_json::to_string(&model.vocab).expect("vocab serializes"));
    metadata.insert("stage".into(), stage.into());
    Checkpoint {
        params: model.params.clone(),
        optimizer: opt.clone(),
        config_hash: cfg.model_hash(),
        rng: RngState::capture(rng),
        metadata,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynth => {
            let cfg = base_config(&cli)?;
            let dir = out_dir(&cli)?;
            let videos = generate(&cfg.synth)?;
            write_corpus(&videos, &dir)?;
            println!("wrote {} videos to {}", videos.len(), dir.join("manifest.json").display());
        }
        Command::PretrainSg(d) => {
            let mut cfg = base_config(&cli)?;
            let data = load_data(&cfg, &d.data)?;
            fit_to_data(&mut cfg, &data)?;
            let dir = out_dir(&cli)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            let mut model = Model::new(cfg.tep.clone(), cfg.sg.clone(), data.vocab.clone(), &mut rng)?;
            let mut opt = OptimizerState::new(cfg.train.adam);
            let log_path = dir.join("pretrain_log.jsonl");
            let mut log = create(&log_path)?;
            let every = cfg.train.checkpoint_every;
            trainer::pretrain_sg(&mut model, &data, &cfg.train, &mut opt, &mut rng, |l, m, o, r| {
                writeln!(log, "{}", l.to_json_line()).map_err(|e| Error::io(&log_path, e))?;
                if every > 0 && l.step % every == 0 {
                    make_checkpoint(m, &cfg, o, r, STAGE_PRETRAINED).save(&dir.join(format!("pretrain_step{}.dvck", l.step)))?;
                }
                Ok(())
            })?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            let path = dir.join("sg_pretrained.dvck");
            make_checkpoint(&model, &cfg, &opt, &rng, STAGE_PRETRAINED).save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Train(d) => {
            let Some(ckpt_path) = cli.checkpoint.clone() else {
                return Err(Error::InvalidInput(
                    "train needs --checkpoint with a pretrained captioner; run pretrain-sg first".into(),
                ));
            };
            let loaded = load_model(&cli, &ckpt_path)?;
            let stage = loaded.checkpoint.metadata.get("stage").cloned();
            if !matches!(stage.as_deref(), Some(STAGE_PRETRAINED | STAGE_JOINT)) {
                return Err(Error::InvalidInput(format!(
                    "{} is not a pretrained captioner checkpoint; run pretrain-sg first",
                    ckpt_path.display()
                )));
            }
            let Loaded {
                mut model,
                checkpoint,
                cfg,
            } = loaded;
            let data = load_data(&cfg, &d.data)?;
            if data.vocab != model.vocab {
                warn!("corpus vocabulary differs from the checkpoint's; using the checkpoint's");
            }
            let dir = out_dir(&cli)?;
            // Joint training starts with fresh moments; a joint checkpoint resumes.
            let (mut opt, mut rng) = if stage.as_deref() == Some(STAGE_JOINT) {
                (checkpoint.optimizer.clone(), checkpoint.rng.restore())
            } else {
                (OptimizerState::new(cfg.train.adam), ChaCha8Rng::seed_from_u64(cfg.train.seed))
            };
            let log_path = dir.join("train_log.jsonl");
            let mut log = create(&log_path)?;
            let every = cfg.train.checkpoint_every;
            trainer::train_joint(&mut model, &data, &cfg.train, &mut opt, &mut rng, StepKind::Joint, |l, m, o, r| {
                writeln!(log, "{}", l.to_json_line()).map_err(|e| Error::io(&log_path, e))?;
                if every > 0 && l.step % every == 0 {
                    make_checkpoint(m, &cfg, o, r, STAGE_JOINT).save(&dir.join(format!("step{}.dvck", l.step)))?;
                }
                Ok(())
            })?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            let path = dir.join("model.dvck");
            make_checkpoint(&model, &cfg, &opt, &rng, STAGE_JOINT).save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Propose { data: d, top_k } => {
            let loaded = load_model(&cli, require_checkpoint(&cli)?)?;
            let data = load_data(&loaded.cfg, &d.data)?;
            let mut file = PredictionFile::new();
            for v in &data.videos {
                file.insert(v.id.clone(), trainer::propose(&loaded.model, v, *top_k)?);
            }
            let path = out_dir(&cli)?.join("proposals.json");
            write_predictions(&path, &file)?;
            println!("wrote {}", path.display());
        }
        Command::Caption(d) => {
            let loaded = load_model(&cli, require_checkpoint(&cli)?)?;
            let data = load_data(&loaded.cfg, &d.data)?;
            let mut file = PredictionFile::new();
            for v in &data.videos {
                file.insert(v.id.clone(), trainer::caption_video(&loaded.model, v, loaded.cfg.eval.top_k)?);
            }
            let path = out_dir(&cli)?.join("captions.json");
            write_predictions(&path, &file)?;
            println!("wrote {}", path.display());
        }
        Command::EvalDense { data: d, predictions } => {
            let cfg = base_config(&cli)?;
            let data = load_data(&cfg, &d.data)?;
            let preds = dense_captions(&read_predictions(predictions)?)?;
            let gt = ground_truth_captions(&data);
            for &m in &cfg.eval.metrics {
                let r = dense_caption_map(&preds, &gt, m, &cfg.eval.thresholds, cfg.eval.top_k)?;
                let per: Vec<String> = r.per_threshold.iter().map(|(t, v)| format!("{t}:{v:.4}")).collect();
                println!("{:<12} {:.4}  [{}]", m.name(), r.mean, per.join(" "));
            }
        }
        Command::EvalProposals {
            data: d,
            predictions,
            ground_truth,
        } => {
            let cfg = base_config(&cli)?;
            let data = load_data(&cfg, &d.data)?;
            let gt = ground_truth_segments(&data);
            let preds = match predictions {
                Some(p) if !*ground_truth => ranked_segments(&read_predictions(p)?),
                _ => gt.clone(),
            };
            let curve = ar_an_curve(&preds, &gt, &cfg.eval.an_grid())?;
            let path = out_dir(&cli)?.join("ar_an.csv");
            std::fs::write(&path, curve_to_csv(&curve)).map_err(|e| Error::io(&path, e))?;
            println!("AUC {:.4}", curve.auc);
        }
    }
    Ok(())
}

fn require_checkpoint(cli: &Cli) -> Result<&Path> {
    cli.checkpoint
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("this command needs --checkpoint".into()))
}
