//! Per-modality training: triplet sampling from random windows, epoch
//! batching with Adam, and validation-EER early stopping. Background sensors
//! draw their windows round-robin across the five touch tasks so every task
//! contributes equally per epoch.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngExt};

use crate::data::{Dataset, DatasetSplit, ModalityKind, TaskKind};
use crate::error::CoreError;
use crate::eval::{protocol_eer, EnrollMode, EvalOptions};
use crate::nn::{
    adam_step, AdamState, DropoutMasks, EncoderConfig, EncoderModel, OptimizerConfig,
    TripletLossConfig,
};
use crate::preprocess::{session_features, FeatureMatrix};
use crate::seed;
use crate::window::{extract_random_window, FeatureWindow, WindowOverrides, WindowSpec};
use crate::Result;

/// A training window with its identity labels attached.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub subject_id: String,
    pub session_index: u8,
    pub task: TaskKind,
    pub window: FeatureWindow,
}

/// Anchor and positive share a subject; the negative is a different subject.
/// All three share the pool's modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: LabeledWindow,
    pub positive: LabeledWindow,
    pub negative: LabeledWindow,
}

/// Settings for one per-modality training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub hidden_units: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without a validation-EER improvement before the
    /// run stops early.
    pub patience: usize,
    pub triplets_per_epoch: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub loss: TripletLossConfig,
    /// Prefer negatives inside the margin instead of uniform sampling.
    pub semi_hard: bool,
    /// Enrollment mode used for the per-epoch validation protocol.
    pub enroll_mode: EnrollMode,
    /// Window geometry overrides, applied to training and validation alike.
    pub windows: WindowOverrides,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_units: 64,
            max_epochs: 200,
            patience: 10,
            triplets_per_epoch: 2048,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            loss: TripletLossConfig::default(),
            semi_hard: false,
            enroll_mode: EnrollMode::All,
            windows: WindowOverrides::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.hidden_units == 0 {
            return Err(CoreError::InvalidConfig(String::from(
                "hidden_units must be positive",
            )));
        }
        if self.patience > self.max_epochs {
            return Err(CoreError::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.triplets_per_epoch < self.optimizer.batch_size {
            return Err(CoreError::InvalidConfig(format!(
                "triplets_per_epoch {} is below the batch size {}",
                self.triplets_per_epoch, self.optimizer.batch_size
            )));
        }
        if !(self.loss.margin > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "triplet margin must be positive, got {}",
                self.loss.margin
            )));
        }
        Ok(())
    }
}

struct PoolEntry {
    session_index: u8,
    task: TaskKind,
    features: FeatureMatrix,
}

struct SubjectPool {
    id: String,
    entries: Vec<PoolEntry>,
}

/// Feature matrices available for triplet sampling, grouped by subject.
pub struct TrainPool {
    modality: ModalityKind,
    spec: WindowSpec,
    subjects: Vec<SubjectPool>,
    tasks: Vec<TaskKind>,
}

impl TrainPool {
    /// Extracts features for every usable (subject, session, task) of the
    /// modality. Touch modalities use only their owning task. Subjects
    /// without any usable stream are left out of the pool.
    pub fn build(
        dataset: &Dataset,
        subjects: &BTreeSet<String>,
        modality: ModalityKind,
        windows: &WindowOverrides,
    ) -> Result<TrainPool> {
        let tasks: Vec<TaskKind> = match modality.task() {
            Some(task) => alloc::vec![task],
            None => TaskKind::ALL.to_vec(),
        };
        let mut pools = Vec::new();
        for id in subjects {
            let Some(sessions) = dataset.sessions(id) else {
                continue;
            };
            let mut entries = Vec::new();
            for record in sessions {
                for &task in &tasks {
                    match session_features(record, task, modality) {
                        Ok(features) => entries.push(PoolEntry {
                            session_index: record.session_index,
                            task,
                            features,
                        }),
                        Err(CoreError::NoUsableData(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            if !entries.is_empty() {
                pools.push(SubjectPool {
                    id: id.clone(),
                    entries,
                });
            }
        }
        Self::from_subject_pools(modality, windows.spec_for(modality), pools)
    }

    /// Builds a pool directly from feature matrices, with default windows.
    pub fn from_entries(
        modality: ModalityKind,
        entries: Vec<(String, u8, TaskKind, FeatureMatrix)>,
    ) -> Result<TrainPool> {
        let mut pools: Vec<SubjectPool> = Vec::new();
        for (id, session_index, task, features) in entries {
            if features.modality() != modality {
                return Err(CoreError::InvalidConfig(format!(
                    "pool entry for {id} carries {} features, expected {modality}",
                    features.modality()
                )));
            }
            let entry = PoolEntry {
                session_index,
                task,
                features,
            };
            match pools.iter_mut().find(|p| p.id == id) {
                Some(p) => p.entries.push(entry),
                None => pools.push(SubjectPool {
                    id,
                    entries: alloc::vec![entry],
                }),
            }
        }
        pools.sort_by(|a, b| a.id.cmp(&b.id));
        Self::from_subject_pools(
            modality,
            WindowOverrides::default().spec_for(modality),
            pools,
        )
    }

    fn from_subject_pools(
        modality: ModalityKind,
        spec: WindowSpec,
        pools: Vec<SubjectPool>,
    ) -> Result<TrainPool> {
        if pools.len() < 2 {
            return Err(CoreError::InsufficientSubjects(format!(
                "triplet sampling needs at least 2 subjects with usable {modality} data, got {}",
                pools.len()
            )));
        }
        let mut tasks: Vec<TaskKind> = TaskKind::ALL
            .into_iter()
            .filter(|t| pools.iter().any(|p| p.entries.iter().any(|e| e.task == *t)))
            .collect();
        tasks.shrink_to_fit();
        Ok(TrainPool {
            modality,
            spec,
            subjects: pools,
            tasks,
        })
    }

    pub fn modality(&self) -> ModalityKind {
        self.modality
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        self.subjects.iter().map(|p| p.id.as_str()).collect()
    }

    /// Tasks with usable data, in fixed task order.
    pub fn tasks(&self) -> &[TaskKind] {
        &self.tasks
    }

    /// A fresh round-robin cursor over the pool's tasks.
    pub fn task_cursor(&self) -> TaskCursor {
        TaskCursor {
            tasks: self.tasks.clone(),
            next: 0,
        }
    }

    /// Draws one random window from a subject, preferring the given task and
    /// avoiding `exclude_session` whenever other sessions are usable.
    fn draw_window<R: Rng>(
        &self,
        subject_idx: usize,
        task: TaskKind,
        exclude_session: Option<u8>,
        rng: &mut R,
    ) -> Result<LabeledWindow> {
        fn pick<'a, R: Rng>(candidates: &[&'a PoolEntry], rng: &mut R) -> &'a PoolEntry {
            candidates[rng.random_range(0..candidates.len())]
        }
        let pool = &self.subjects[subject_idx];
        let in_task: Vec<&PoolEntry> = pool.entries.iter().filter(|e| e.task == task).collect();
        let scope: Vec<&PoolEntry> = if in_task.is_empty() {
            pool.entries.iter().collect()
        } else {
            in_task
        };
        let entry = match exclude_session {
            Some(session) => {
                let fresh: Vec<&PoolEntry> = scope
                    .iter()
                    .copied()
                    .filter(|e| e.session_index != session)
                    .collect();
                if !fresh.is_empty() {
                    pick(&fresh, rng)
                } else {
                    let any_fresh: Vec<&PoolEntry> = pool
                        .entries
                        .iter()
                        .filter(|e| e.session_index != session)
                        .collect();
                    if !any_fresh.is_empty() {
                        pick(&any_fresh, rng)
                    } else {
                        pick(&scope, rng)
                    }
                }
            }
            None => pick(&scope, rng),
        };
        let window = extract_random_window(&entry.features, self.spec, rng)?;
        Ok(LabeledWindow {
            subject_id: pool.id.clone(),
            session_index: entry.session_index,
            task: entry.task,
            window,
        })
    }
}

/// Cycles through the pool's tasks, one step per drawn window.
#[derive(Debug, Clone)]
pub struct TaskCursor {
    tasks: Vec<TaskKind>,
    next: usize,
}

impl TaskCursor {
    fn advance(&mut self) -> TaskKind {
        let task = self.tasks[self.next % self.tasks.len()];
        self.next += 1;
        task
    }
}

/// Draws one triplet: anchor and positive from the same random subject
/// (different sessions when the subject has more than one), negative from a
/// uniformly chosen other subject. Each window draw advances the task
/// cursor, keeping the per-epoch task histogram balanced.
pub fn sample_triplet<R: Rng>(
    pool: &TrainPool,
    cursor: &mut TaskCursor,
    rng: &mut R,
) -> Result<Triplet> {
    let n = pool.n_subjects();
    if n < 2 {
        return Err(CoreError::InsufficientSubjects(String::from(
            "triplet sampling needs at least 2 subjects",
        )));
    }
    let anchor_idx = rng.random_range(0..n);
    let mut negative_idx = rng.random_range(0..n - 1);
    if negative_idx >= anchor_idx {
        negative_idx += 1;
    }
    let anchor = pool.draw_window(anchor_idx, cursor.advance(), None, rng)?;
    let positive = pool.draw_window(
        anchor_idx,
        cursor.advance(),
        Some(anchor.session_index),
        rng,
    )?;
    let negative = pool.draw_window(negative_idx, cursor.advance(), None, rng)?;
    Ok(Triplet {
        anchor,
        positive,
        negative,
    })
}

/// One row of the per-epoch training history.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_eer: f64,
}

/// A finished per-modality run: the best-validation model and its history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub modality: ModalityKind,
    pub model: EncoderModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose model was kept; 0 means the initialized model.
    pub best_epoch: usize,
    pub best_val_eer: f64,
}

fn batch_from_triplets(triplets: Vec<Triplet>) -> (Vec<FeatureWindow>, Vec<[usize; 3]>) {
    let mut windows = Vec::with_capacity(triplets.len() * 3);
    let mut index = Vec::with_capacity(triplets.len());
    for t in triplets {
        let base = windows.len();
        windows.push(t.anchor.window);
        windows.push(t.positive.window);
        windows.push(t.negative.window);
        index.push([base, base + 1, base + 2]);
    }
    (windows, index)
}

/// Re-draws the negative up to a few times, keeping the first candidate whose
/// distance to the anchor falls inside the margin (semi-hard); falls back to
/// the last draw.
fn semi_hard_negative<R: Rng>(
    pool: &TrainPool,
    model: &EncoderModel,
    loss: TripletLossConfig,
    anchor: &LabeledWindow,
    positive: &LabeledWindow,
    negative_idx: usize,
    cursor_task: TaskKind,
    rng: &mut R,
) -> Result<LabeledWindow> {
    const CANDIDATES: usize = 4;
    let va = model.forward_infer(&anchor.window)?;
    let vp = model.forward_infer(&positive.window)?;
    let ap = va.distance(&vp);
    let d_ap = ap * ap;
    let mut fallback = None;
    for _ in 0..CANDIDATES {
        let candidate = pool.draw_window(negative_idx, cursor_task, None, rng)?;
        let an = va.distance(&model.forward_infer(&candidate.window)?);
        let d_an = an * an;
        if d_an > d_ap && d_an < d_ap + loss.margin {
            return Ok(candidate);
        }
        fallback = Some(candidate);
    }
    Ok(fallback.expect("at least one candidate drawn"))
}

/// Trains one modality's encoder. Returns the model with the best validation
/// EER seen (the initialized model counts as epoch 0); ties on validation EER
/// go to the epoch with the lower mean training loss, so a saturated
/// validation set still selects well-fitted weights. Patience counts epochs
/// without a strict EER improvement. Deterministic under `cfg.seed`.
pub fn train_modality(
    dataset: &Dataset,
    split: &DatasetSplit,
    modality: ModalityKind,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = TrainPool::build(dataset, &split.train_subjects, modality, &cfg.windows)?;
    let val_task = pool.tasks()[0];
    let eval_seed = seed::derive(cfg.seed, "train.val");
    let options = EvalOptions {
        mode: cfg.enroll_mode,
        windows: cfg.windows.clone(),
    };

    let config = EncoderConfig::with_hidden(modality.feature_columns(), cfg.hidden_units)?;
    let init_seed = seed::derive(cfg.seed, &format!("train.init.{}", modality.slug()));
    let mut model = EncoderModel::new(config, init_seed)?;
    let validate = |m: &EncoderModel| {
        protocol_eer(
            dataset,
            &split.validation_subjects,
            val_task,
            modality,
            m,
            &options,
            eval_seed,
        )
    };

    let mut best_model = model.clone();
    let mut best_val_eer = validate(&model)?;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut history = Vec::new();
    let mut adam = AdamState::new(config.param_len());
    let n_batches = cfg.triplets_per_epoch / cfg.optimizer.batch_size;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let tag = format!("train.epoch.{}.{}", modality.slug(), epoch);
        let mut rng = seed::derived_rng(cfg.seed, &tag);
        let mut cursor = pool.task_cursor();
        let mut loss_sum = 0.0;
        for batch_idx in 0..n_batches {
            let mut triplets = Vec::with_capacity(cfg.optimizer.batch_size);
            for _ in 0..cfg.optimizer.batch_size {
                let mut triplet = sample_triplet(&pool, &mut cursor, &mut rng)?;
                if cfg.semi_hard {
                    let negative_idx = pool
                        .subjects
                        .iter()
                        .position(|p| p.id == triplet.negative.subject_id)
                        .expect("sampled subject is in the pool");
                    triplet.negative = semi_hard_negative(
                        &pool,
                        &model,
                        cfg.loss,
                        &triplet.anchor,
                        &triplet.positive,
                        negative_idx,
                        triplet.negative.task,
                        &mut rng,
                    )?;
                }
                triplets.push(triplet);
            }
            let (windows, index) = batch_from_triplets(triplets);
            let masks = DropoutMasks::sample(&config, windows.len(), &mut rng);
            let out = match model.train_batch(&windows, &index, &masks, cfg.loss) {
                Ok(out) => out,
                Err(CoreError::NonFiniteEmbedding(_)) => {
                    return Err(CoreError::TrainingDiverged {
                        epoch,
                        batch: batch_idx,
                    })
                }
                Err(e) => return Err(e),
            };
            if !out.mean_loss.is_finite() {
                return Err(CoreError::TrainingDiverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            adam_step(model.params_mut(), &out.grads, &mut adam, &cfg.optimizer)?;
            model.update_running_stats(&out.bn_means, &out.bn_vars);
            loss_sum += out.mean_loss;
        }
        let mean_loss = loss_sum / n_batches as f64;
        let val_eer = validate(&model)?;
        history.push(EpochRecord {
            epoch,
            mean_loss,
            val_eer,
        });
        if val_eer < best_val_eer {
            best_val_eer = val_eer;
            best_loss = mean_loss;
            best_model = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            if val_eer == best_val_eer && mean_loss < best_loss {
                best_loss = mean_loss;
                best_model = model.clone();
                best_epoch = epoch;
            }
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        modality,
        model: best_model,
        history,
        best_epoch,
        best_val_eer,
    })
}

/// Outcome of training all ten modalities: per-modality failures are
/// collected instead of aborting the rest.
pub struct TrainAllOutcome {
    pub outcomes: Vec<TrainOutcome>,
    pub failures: Vec<(ModalityKind, CoreError)>,
}

pub fn train_all(dataset: &Dataset, split: &DatasetSplit, cfg: &TrainConfig) -> TrainAllOutcome {
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for modality in ModalityKind::ALL {
        match train_modality(dataset, split, modality, cfg) {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => failures.push((modality, e)),
        }
    }
    TrainAllOutcome { outcomes, failures }
}

/// Writes the history as `epoch, mean_loss, val_eer` CSV lines.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,val_eer\n");
    for row in history {
        out.push_str(&format!("{},{},{}\n", row.epoch, row.mean_loss, row.val_eer));
    }
    out
}
