//! The pipeline stages behind the CLI subcommands.
//!
//! Every stage reads its inputs from disk and writes its outputs under the
//! configured out directory, so stages compose through the filesystem:
//! `synth` (or an existing dataset) feeds `train`, whose models feed
//! `eval`, whose score tables feed `fuse`, whose rankings feed `report`.
//! A stage rerun with the same inputs and configuration produces
//! byte-identical files regardless of the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::invalid;
use biofuse_core::data::{split_dataset, Dataset, DatasetSplit, ModalityKind, TaskKind};
use biofuse_core::eval::{build_score_table, det_curve, EvalOptions, ScoreTable};
use biofuse_core::fusion::{
    compute_weights, enumerate_subsets_of, fuse_tables, znorm_table, FusionMode, FusionWeights,
};
use biofuse_core::nn::encoder::EncoderModel;
use biofuse_core::nn::gradcheck::{gradient_check, GradCheckSpec};
use biofuse_core::seed;
use biofuse_core::train::train_modality;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::ingest::{self, LoadWarning};
use crate::model_io;
use crate::reports::{self, EerRow, FusionRow};
use crate::synthgen;

/// Locations of every artifact a run writes, rooted at the out directory.
pub struct OutPaths {
    out: PathBuf,
}

impl OutPaths {
    pub fn new(out: &Path) -> OutPaths {
        OutPaths { out: out.to_path_buf() }
    }

    pub fn effective_config(&self) -> PathBuf {
        self.out.join("config.effective.toml")
    }

    pub fn profiles(&self) -> PathBuf {
        self.out.join("profiles.json")
    }

    pub fn oracle_csv(&self) -> PathBuf {
        self.out.join("oracle_distances.csv")
    }

    pub fn ingest_report(&self) -> PathBuf {
        self.out.join("ingest.txt")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out.join("models")
    }

    pub fn model(&self, modality: ModalityKind) -> PathBuf {
        model_io::model_path(&self.models_dir(), modality)
    }

    pub fn history(&self, modality: ModalityKind) -> PathBuf {
        self.models_dir().join(format!("history_{}.csv", modality.slug()))
    }

    pub fn scores_dir(&self, task: TaskKind) -> PathBuf {
        self.out.join("scores").join(task.slug())
    }

    pub fn score_csv(&self, task: TaskKind, modality: ModalityKind) -> PathBuf {
        self.scores_dir(task).join(format!("{}.csv", modality.slug()))
    }

    pub fn det_csv(&self, task: TaskKind, modality: ModalityKind) -> PathBuf {
        self.scores_dir(task).join(format!("det_{}.csv", modality.slug()))
    }

    pub fn eers_csv(&self) -> PathBuf {
        self.out.join("eers.csv")
    }

    pub fn val_eers_csv(&self) -> PathBuf {
        self.out.join("val_eers.csv")
    }

    pub fn fusion_csv(&self, task: TaskKind, mode: FusionMode) -> PathBuf {
        self.out
            .join("fusion")
            .join(format!("{}_{}.csv", task.slug(), mode.as_str()))
    }

    pub fn report_txt(&self) -> PathBuf {
        self.out.join("report.txt")
    }
}

/// Creates the out directory and records the effective configuration.
pub fn prepare_out(cfg: &RunConfig) -> Result<OutPaths> {
    let paths = OutPaths::new(&cfg.out);
    fs::create_dir_all(&paths.out)
        .with_context(|| format!("cannot create out directory {}", paths.out.display()))?;
    fs::write(paths.effective_config(), cfg.effective_toml()?)
        .with_context(|| format!("cannot write {}", paths.effective_config().display()))?;
    Ok(paths)
}

/// Loads the configured dataset, using `<root>/manifest.txt` when present.
fn load_dataset_for(cfg: &RunConfig) -> Result<(Dataset, Vec<LoadWarning>)> {
    let root = cfg.existing_dataset_root()?;
    let manifest = root.join("manifest.txt");
    let manifest = manifest.is_file().then_some(manifest);
    let outcome = ingest::load_dataset(root, manifest.as_deref())?;
    if outcome.dataset.is_empty() {
        return Err(invalid(format!("no usable subjects under {}", root.display())));
    }
    Ok((outcome.dataset, outcome.warnings))
}

fn split_for(cfg: &RunConfig, dataset: &Dataset) -> Result<DatasetSplit> {
    let ids: Vec<String> = dataset.subject_ids().cloned().collect();
    Ok(split_dataset(
        &ids,
        seed::derive(cfg.seed, "split"),
        cfg.n_validation,
        cfg.n_test,
    )?)
}

/// Generates a synthetic dataset into the dataset root and stores the
/// ground-truth profiles and oracle distances under the out directory.
pub fn run_synth(cfg: &RunConfig) -> Result<String> {
    let synth_cfg = cfg.synth_config()?;
    let root = cfg.dataset_root()?;
    if root.exists() {
        let non_empty = fs::read_dir(root)
            .with_context(|| format!("cannot read {}", root.display()))?
            .next()
            .is_some();
        if non_empty {
            return Err(invalid(format!(
                "dataset root {} already exists and is not empty; refusing to mix datasets",
                root.display()
            )));
        }
    }
    let paths = prepare_out(cfg)?;
    let output = synthgen::generate_dataset(&synth_cfg)?;
    ingest::write_dataset(root, &output.dataset)?;

    let profiles_json = serde_json::to_string_pretty(&output.profiles)?;
    fs::write(paths.profiles(), profiles_json)
        .with_context(|| format!("cannot write {}", paths.profiles().display()))?;

    let mut oracle = csv::Writer::from_path(paths.oracle_csv())?;
    oracle.write_record(["subject_a", "subject_b", "distance"])?;
    for (i, a) in output.profiles.iter().enumerate() {
        for b in output.profiles.iter().skip(i + 1) {
            oracle.write_record([
                a.subject_id.as_str(),
                b.subject_id.as_str(),
                &synthgen::oracle_distance(a, b).to_string(),
            ])?;
        }
    }
    oracle.flush()?;

    Ok(format!(
        "generated {} subjects x 5 sessions at separability {} under {}",
        synth_cfg.n_subjects,
        synth_cfg.separability,
        root.display()
    ))
}

/// Validates a dataset root and writes a load report.
pub fn run_ingest(cfg: &RunConfig) -> Result<String> {
    let root = cfg.existing_dataset_root()?;
    let manifest = root.join("manifest.txt");
    let manifest = manifest.is_file().then_some(manifest);
    let outcome = ingest::load_dataset(root, manifest.as_deref())?;
    let paths = prepare_out(cfg)?;

    let mut text = String::new();
    text.push_str(&format!("dataset root: {}\n", root.display()));
    text.push_str(&format!("subjects loaded: {}\n", outcome.dataset.len()));
    for id in outcome.dataset.subject_ids() {
        let sessions = outcome.dataset.sessions(id).map_or(0, |s| s.len());
        text.push_str(&format!("  {id}: {sessions} sessions\n"));
    }
    text.push_str(&format!("warnings: {}\n", outcome.warnings.len()));
    for warning in &outcome.warnings {
        text.push_str(&format!("  {warning}\n"));
    }
    fs::write(paths.ingest_report(), &text)
        .with_context(|| format!("cannot write {}", paths.ingest_report().display()))?;

    Ok(format!(
        "loaded {} subjects, {} warnings (details in {})",
        outcome.dataset.len(),
        outcome.warnings.len(),
        paths.ingest_report().display()
    ))
}

/// Trains one encoder per modality (or a single one) and saves the models.
pub fn run_train(cfg: &RunConfig, only: Option<ModalityKind>) -> Result<String> {
    let (dataset, _) = load_dataset_for(cfg)?;
    let split = split_for(cfg, &dataset)?;
    let train_cfg = cfg.train_config()?;
    let paths = prepare_out(cfg)?;
    fs::create_dir_all(paths.models_dir())?;

    let modalities: Vec<ModalityKind> = match only {
        Some(m) => vec![m],
        None => ModalityKind::ALL.to_vec(),
    };
    let results: Vec<_> = modalities
        .par_iter()
        .map(|&modality| (modality, train_modality(&dataset, &split, modality, &train_cfg)))
        .collect();

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (modality, result) in results {
        match result {
            Ok(outcome) => {
                model_io::save_model(&paths.model(modality), modality, &outcome.model)?;
                reports::write_history_csv(&paths.history(modality), &outcome.history)?;
                lines.push(format!(
                    "trained {}: best epoch {}, validation EER {:.2}%",
                    modality.slug(),
                    outcome.best_epoch,
                    outcome.best_val_eer
                ));
            }
            Err(err) => failures.push(format!("{}: {err}", modality.slug())),
        }
    }
    if only.is_some() {
        if let Some(failure) = failures.first() {
            bail!("training failed for {failure}");
        }
    }
    if lines.is_empty() {
        bail!("training failed for every modality: {}", failures.join("; "));
    }
    for failure in failures {
        lines.push(format!("skipped {failure}"));
    }
    Ok(lines.join("\n"))
}

struct EvalJob {
    task: TaskKind,
    modality: ModalityKind,
}

struct EvalResult {
    task: TaskKind,
    modality: ModalityKind,
    test_table: ScoreTable,
    det: Vec<(f64, f64)>,
    test_eer: f64,
    val_eer: Option<f64>,
}

/// Scores the test and validation subjects against every trained model.
pub fn run_eval(
    cfg: &RunConfig,
    only_modality: Option<ModalityKind>,
    only_task: Option<TaskKind>,
) -> Result<String> {
    let (dataset, _) = load_dataset_for(cfg)?;
    let split = split_for(cfg, &dataset)?;
    let options = EvalOptions { mode: cfg.enroll_windows, windows: cfg.window_overrides()? };
    let paths = prepare_out(cfg)?;

    let tasks: Vec<TaskKind> = match only_task {
        Some(t) => vec![t],
        None => TaskKind::ALL.to_vec(),
    };
    let mut jobs = Vec::new();
    for &task in &tasks {
        for modality in task.modalities() {
            if only_modality.is_none_or(|m| m == modality) {
                jobs.push(EvalJob { task, modality });
            }
        }
    }
    if jobs.is_empty() {
        return Err(invalid(
            "no (task, modality) pairs selected; the chosen modality does not occur in the chosen task"
                .to_string(),
        ));
    }

    let mut models: BTreeMap<ModalityKind, EncoderModel> = BTreeMap::new();
    let mut missing = Vec::new();
    for job in &jobs {
        if models.contains_key(&job.modality) || missing.contains(&job.modality) {
            continue;
        }
        let path = paths.model(job.modality);
        if path.is_file() {
            let (loaded_modality, model) = model_io::load_model(&path)?;
            if loaded_modality != job.modality {
                bail!(
                    "{} holds a {} model, expected {}",
                    path.display(),
                    loaded_modality.slug(),
                    job.modality.slug()
                );
            }
            models.insert(job.modality, model);
        } else {
            missing.push(job.modality);
        }
    }
    if models.is_empty() {
        return Err(invalid(format!(
            "no trained model found at {}; run the train stage first",
            paths.model(missing[0]).display()
        )));
    }
    if only_modality.is_some() && !missing.is_empty() {
        return Err(invalid(format!(
            "no trained model found at {}",
            paths.model(missing[0]).display()
        )));
    }

    let test_seed = seed::derive(cfg.seed, "eval.test");
    let val_seed = seed::derive(cfg.seed, "eval.val");
    let results: Vec<Result<EvalResult>> = jobs
        .par_iter()
        .filter(|job| models.contains_key(&job.modality))
        .map(|job| {
            let model = &models[&job.modality];
            let test_table = build_score_table(
                &dataset,
                &split.test_subjects,
                job.task,
                job.modality,
                model,
                &options,
                test_seed,
            )?;
            let det = det_curve(&test_table.genuine_scores(), &test_table.impostor_scores(), 0)?;
            let test_eer = test_table.eer()?.eer_percent;
            let val_eer = if split.validation_subjects.len() >= 2 {
                let val_table = build_score_table(
                    &dataset,
                    &split.validation_subjects,
                    job.task,
                    job.modality,
                    model,
                    &options,
                    val_seed,
                )?;
                Some(val_table.eer()?.eer_percent)
            } else {
                None
            };
            Ok(EvalResult { task: job.task, modality: job.modality, test_table, det, test_eer, val_eer })
        })
        .collect();

    let mut eer_rows = Vec::new();
    let mut val_rows = Vec::new();
    let mut lines = Vec::new();
    for result in results {
        let r = result?;
        fs::create_dir_all(paths.scores_dir(r.task))?;
        reports::write_score_csv(&paths.score_csv(r.task, r.modality), &r.test_table)?;
        reports::write_det_csv(&paths.det_csv(r.task, r.modality), &r.det)?;
        eer_rows.push(EerRow { task: r.task, modality: r.modality, eer_percent: r.test_eer });
        if let Some(val_eer) = r.val_eer {
            val_rows.push(EerRow { task: r.task, modality: r.modality, eer_percent: val_eer });
        }
        let skipped = r.test_table.skipped_subjects.len();
        lines.push(format!(
            "{} / {}: test EER {:.2}%{}",
            r.task.slug(),
            r.modality.slug(),
            r.test_eer,
            if skipped > 0 { format!(" ({skipped} subjects skipped)") } else { String::new() }
        ));
    }
    reports::write_eer_csv(&paths.eers_csv(), &eer_rows)?;
    if !val_rows.is_empty() {
        reports::write_eer_csv(&paths.val_eers_csv(), &val_rows)?;
    }
    for modality in missing {
        lines.push(format!("skipped {}: no model at {}", modality.slug(), paths.model(modality).display()));
    }
    Ok(lines.join("\n"))
}

/// Fuses every subset of each task's scored modalities and ranks them.
pub fn run_fuse(cfg: &RunConfig, only_task: Option<TaskKind>) -> Result<String> {
    let paths = prepare_out(cfg)?;
    let mode = cfg.fusion_mode;
    let tasks: Vec<TaskKind> = match only_task {
        Some(t) => vec![t],
        None => TaskKind::ALL.to_vec(),
    };

    let val_eers: BTreeMap<(TaskKind, ModalityKind), f64> = if mode == FusionMode::Weighted {
        let path = paths.val_eers_csv();
        if !path.is_file() {
            return Err(invalid(format!(
                "weighted fusion needs validation EERs at {}; run the eval stage first",
                path.display()
            )));
        }
        reports::read_eer_csv(&path)?
            .into_iter()
            .map(|row| ((row.task, row.modality), row.eer_percent))
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut lines = Vec::new();
    for task in tasks {
        let mut tables = Vec::new();
        for modality in task.modalities() {
            let path = paths.score_csv(task, modality);
            if path.is_file() {
                tables.push(reports::read_score_csv(&path, task)?);
            }
        }
        if tables.is_empty() {
            return Err(invalid(format!(
                "no score tables under {}; run the eval stage first",
                paths.scores_dir(task).display()
            )));
        }
        if cfg.score_norm {
            tables = tables.iter().map(znorm_table).collect();
        }
        let universe: Vec<ModalityKind> = tables.iter().map(|t| t.modality).collect();
        let task_val_eers: BTreeMap<ModalityKind, f64> = universe
            .iter()
            .filter_map(|&m| val_eers.get(&(task, m)).map(|&e| (m, e)))
            .collect();

        let mut rows = Vec::new();
        for subset in enumerate_subsets_of(task, &universe)? {
            let weights = match mode {
                FusionMode::Simple => FusionWeights::uniform(&subset),
                FusionMode::Weighted => compute_weights(&subset, &task_val_eers)
                    .with_context(|| format!("cannot weight subset {}", subset.acronyms()))?,
            };
            let fused = fuse_tables(&subset, &tables, &weights, mode)?;
            rows.push(FusionRow {
                task,
                mode,
                subset: subset.acronyms(),
                eer_percent: fused.eer()?.eer_percent,
                coverage_percent: fused.coverage_percent,
            });
        }
        rows.sort_by(|a, b| a.eer_percent.partial_cmp(&b.eer_percent).expect("EERs are finite"));
        fs::create_dir_all(paths.fusion_csv(task, mode).parent().expect("fusion path has a parent"))?;
        reports::write_fusion_csv(&paths.fusion_csv(task, mode), &rows)?;
        let best = &rows[0];
        lines.push(format!(
            "{} ({} fusion): best subset {} at EER {:.2}% over {} subsets",
            task.slug(),
            mode.as_str(),
            best.subset,
            best.eer_percent,
            rows.len()
        ));
    }
    Ok(lines.join("\n"))
}

/// Aggregates per-modality EERs and fusion rankings into the text report.
pub fn run_report(cfg: &RunConfig) -> Result<String> {
    let paths = prepare_out(cfg)?;
    let eers_path = paths.eers_csv();
    if !eers_path.is_file() {
        return Err(invalid(format!(
            "no per-modality EERs at {}; run the eval stage first",
            eers_path.display()
        )));
    }
    let eers = reports::read_eer_csv(&eers_path)?;
    let mut fusion = Vec::new();
    for task in TaskKind::ALL {
        for mode in [FusionMode::Simple, FusionMode::Weighted] {
            let path = paths.fusion_csv(task, mode);
            if path.is_file() {
                fusion.extend(reports::read_fusion_csv(&path)?);
            }
        }
    }
    let report = reports::render_report(&eers, &fusion);
    fs::write(paths.report_txt(), &report)
        .with_context(|| format!("cannot write {}", paths.report_txt().display()))?;
    Ok(report)
}

/// Runs analytic-vs-numeric gradient checks over a small battery of
/// encoder shapes and reports the worst relative error.
pub fn run_gradcheck(cfg: &RunConfig) -> Result<(String, f64)> {
    let battery = [
        (ModalityKind::GravitySensor, 4, 10, 2, false),
        (ModalityKind::Accelerometer, 3, 8, 2, true),
        (ModalityKind::TouchKeystroke, 5, 12, 3, false),
    ];
    let mut lines = Vec::new();
    let mut max_rel_error = 0.0_f64;
    for (i, (modality, hidden_units, window_len, n_triplets, with_dropout)) in
        battery.into_iter().enumerate()
    {
        let spec = GradCheckSpec {
            modality,
            hidden_units,
            window_len,
            n_triplets,
            with_dropout,
            seed: cfg.seed.wrapping_add(i as u64),
            ..GradCheckSpec::default()
        };
        let report = gradient_check(&spec)?;
        max_rel_error = max_rel_error.max(report.max_rel_error);
        lines.push(format!(
            "{} h={} m={}{}: max rel error {:.3e} (worst block {}, {} params)",
            modality.slug(),
            hidden_units,
            window_len,
            if with_dropout { " dropout" } else { "" },
            report.max_rel_error,
            report.worst_block,
            report.params_checked
        ));
    }
    lines.push(format!("max relative error: {max_rel_error:.3e}"));
    Ok((lines.join("\n"), max_rel_error))
}
