//! Argument parsing, config/flag merging, and the exit-code policy.
//!
//! Flags override the config file, and the merged result is validated
//! before any stage runs. Exit codes: 0 on success, 1 when arguments,
//! configuration, or required input files are invalid, 2 when a valid
//! run fails while executing.

use std::path::PathBuf;

use anyhow::Result;
use biofuse_core::data::{ModalityKind, TaskKind};
use biofuse_core::eval::EnrollMode;
use biofuse_core::fusion::FusionMode;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::{invalid, is_validation_error, pipeline};

/// Tolerance the gradcheck command enforces on the max relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "biofuse",
    version,
    about = "Passive smartphone authentication from touch and motion streams"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Output directory for models, scores, and reports.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for every random draw in the pipeline.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fusion weighting: "simple" or "weighted".
    #[arg(long, global = true)]
    pub fusion_mode: Option<String>,
    /// Enrollment windows per session: "all" or "one".
    #[arg(long, global = true)]
    pub enroll_windows: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth,
    /// Validate a dataset root and report what loads.
    Ingest,
    /// Train one encoder per modality (or a single one).
    Train {
        /// Train only this modality (slug, e.g. "accelerometer").
        #[arg(long)]
        modality: Option<String>,
    },
    /// Score test and validation subjects against trained models.
    Eval {
        /// Evaluate only this modality (slug).
        #[arg(long)]
        modality: Option<String>,
        /// Evaluate only this task (slug, e.g. "scroll_up").
        #[arg(long)]
        task: Option<String>,
    },
    /// Rank every fused modality subset per task.
    Fuse {
        /// Fuse only this task (slug).
        #[arg(long)]
        task: Option<String>,
    },
    /// Aggregate EERs and fusion rankings into the text report.
    Report,
    /// Compare analytic gradients against numeric differentiation.
    Gradcheck,
}

fn parse_modality(slug: &str) -> Result<ModalityKind> {
    ModalityKind::from_slug(slug).ok_or_else(|| {
        invalid(format!(
            "unknown modality {:?}; expected one of {}",
            slug,
            ModalityKind::ALL.map(|m| m.slug()).join(", ")
        ))
    })
}

fn parse_task(slug: &str) -> Result<TaskKind> {
    TaskKind::from_slug(slug).ok_or_else(|| {
        invalid(format!(
            "unknown task {:?}; expected one of {}",
            slug,
            TaskKind::ALL.map(|t| t.slug()).join(", ")
        ))
    })
}

fn parse_fusion_mode(name: &str) -> Result<FusionMode> {
    match name {
        "simple" => Ok(FusionMode::Simple),
        "weighted" => Ok(FusionMode::Weighted),
        other => Err(invalid(format!(
            "unknown fusion mode {other:?}; expected \"simple\" or \"weighted\""
        ))),
    }
}

fn parse_enroll_windows(name: &str) -> Result<EnrollMode> {
    match name {
        "all" => Ok(EnrollMode::All),
        "one" => Ok(EnrollMode::One),
        other => Err(invalid(format!(
            "unknown enrollment mode {other:?}; expected \"all\" or \"one\""
        ))),
    }
}

/// Loads the config file (or defaults), applies flag overrides, validates.
pub fn build_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dataset) = &common.dataset {
        cfg.dataset = Some(dataset.clone());
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    if let Some(mode) = &common.fusion_mode {
        cfg.fusion_mode = parse_fusion_mode(mode)?;
    }
    if let Some(mode) = &common.enroll_windows {
        cfg.enroll_windows = parse_enroll_windows(mode)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<String> {
    let cfg = build_config(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    pool.install(|| match &cli.command {
        Command::Synth => pipeline::run_synth(&cfg),
        Command::Ingest => pipeline::run_ingest(&cfg),
        Command::Train { modality } => {
            let only = modality.as_deref().map(parse_modality).transpose()?;
            pipeline::run_train(&cfg, only)
        }
        Command::Eval { modality, task } => {
            let only_modality = modality.as_deref().map(parse_modality).transpose()?;
            let only_task = task.as_deref().map(parse_task).transpose()?;
            pipeline::run_eval(&cfg, only_modality, only_task)
        }
        Command::Fuse { task } => {
            let only_task = task.as_deref().map(parse_task).transpose()?;
            pipeline::run_fuse(&cfg, only_task)
        }
        Command::Report => pipeline::run_report(&cfg),
        Command::Gradcheck => {
            let (text, max_rel_error) = pipeline::run_gradcheck(&cfg)?;
            if max_rel_error >= GRADCHECK_TOLERANCE {
                anyhow::bail!(
                    "{text}\ngradient check failed: {max_rel_error:.3e} is not below {GRADCHECK_TOLERANCE:e}"
                );
            }
            Ok(text)
        }
    })
}

/// Parses arguments, runs the selected command, and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation_error(&err) {
                1
            } else {
                2
            }
        }
    }
}
