//! Score-level fusion: enumerates the 63 modality subsets of a task,
//! derives validation-based weights, fuses score tables by weighted
//! summation over identical comparison pairs, and ranks subsets by EER.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{ModalityKind, TaskKind};
use crate::error::CoreError;
use crate::eval::{EerResult, GenuineScore, ImpostorScore, ScoreTable};
use crate::math;
use crate::Result;

/// One non-empty subset of a task's modalities. The bitmask maps bit `i` to
/// the `i`-th entry of the enumeration universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionSubset {
    pub task: TaskKind,
    pub mask: u8,
    pub modalities: Vec<ModalityKind>,
}

impl FusionSubset {
    /// Short label like `K+A+M`, in enumeration order.
    pub fn acronyms(&self) -> String {
        let mut out = String::new();
        for (k, m) in self.modalities.iter().enumerate() {
            if k > 0 {
                out.push('+');
            }
            out.push_str(m.acronym());
        }
        out
    }
}

/// All 63 non-empty subsets of the task's touch modality plus the five
/// background sensors, in ascending bitmask order.
pub fn enumerate_subsets(task: TaskKind) -> Vec<FusionSubset> {
    enumerate_subsets_of(task, &task.modalities()).expect("task universe is valid")
}

/// All non-empty subsets of an explicit modality universe (at most 8
/// distinct entries), in ascending bitmask order.
pub fn enumerate_subsets_of(
    task: TaskKind,
    universe: &[ModalityKind],
) -> Result<Vec<FusionSubset>> {
    if universe.is_empty() || universe.len() > 8 {
        return Err(CoreError::InvalidConfig(format!(
            "subset universe must hold 1..=8 modalities, got {}",
            universe.len()
        )));
    }
    for (i, m) in universe.iter().enumerate() {
        if universe[..i].contains(m) {
            return Err(CoreError::InvalidConfig(format!(
                "subset universe repeats {m}"
            )));
        }
    }
    let n = universe.len();
    Ok((1u16..(1u16 << n))
        .map(|mask| FusionSubset {
            task,
            mask: mask as u8,
            modalities: universe
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &m)| m)
                .collect(),
        })
        .collect())
}

/// Normalized per-modality weights; non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    weights: BTreeMap<ModalityKind, f64>,
}

impl FusionWeights {
    /// Equal weights 1/N over the subset (simple fusion).
    pub fn uniform(subset: &FusionSubset) -> FusionWeights {
        let n = subset.modalities.len() as f64;
        FusionWeights {
            weights: subset.modalities.iter().map(|&m| (m, 1.0 / n)).collect(),
        }
    }

    pub fn get(&self, modality: ModalityKind) -> Option<f64> {
        self.weights.get(&modality).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModalityKind, f64)> + '_ {
        self.weights.iter().map(|(&m, &w)| (m, w))
    }
}

/// Inverse-EER weights: each modality gets (1/EER) normalized over the
/// subset. Modalities with a perfect (zero) validation EER split the whole
/// weight evenly among themselves.
pub fn compute_weights(
    subset: &FusionSubset,
    validation_eers: &BTreeMap<ModalityKind, f64>,
) -> Result<FusionWeights> {
    let mut eers = Vec::with_capacity(subset.modalities.len());
    for &m in &subset.modalities {
        let eer = *validation_eers.get(&m).ok_or_else(|| {
            CoreError::InvalidConfig(format!("no validation EER for {m}"))
        })?;
        if !eer.is_finite() || eer < 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "validation EER for {m} must be a finite non-negative percent, got {eer}"
            )));
        }
        eers.push((m, eer));
    }
    let zeros = eers.iter().filter(|(_, e)| *e == 0.0).count();
    let weights = if zeros > 0 {
        eers.iter()
            .map(|&(m, e)| (m, if e == 0.0 { 1.0 / zeros as f64 } else { 0.0 }))
            .collect()
    } else {
        let total: f64 = eers.iter().map(|(_, e)| 1.0 / e).sum();
        eers.iter().map(|&(m, e)| (m, (1.0 / e) / total)).collect()
    };
    Ok(FusionWeights { weights })
}

/// Whether fused scores use equal or validation-derived weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FusionMode {
    Simple,
    Weighted,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::Simple => "simple",
            FusionMode::Weighted => "weighted",
        }
    }
}

/// S_W = sum of w_n * s_n over the subset. Every subset modality must have
/// a score.
pub fn fuse_scores(
    subset: &FusionSubset,
    weights: &FusionWeights,
    scores: &BTreeMap<ModalityKind, f64>,
) -> Result<f64> {
    let mut fused = 0.0;
    for &m in &subset.modalities {
        let w = weights.get(m).ok_or_else(|| {
            CoreError::InvalidConfig(format!("weights are missing {m}"))
        })?;
        let s = scores.get(&m).ok_or_else(|| {
            CoreError::NoUsableData(format!("no {m} score for this comparison pair"))
        })?;
        fused += w * s;
    }
    Ok(fused)
}

/// A fused score table plus how much of the pair universe survived pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTable {
    pub subset: FusionSubset,
    pub mode: FusionMode,
    pub genuine: Vec<GenuineScore>,
    pub impostor: Vec<ImpostorScore>,
    /// Percentage of all comparison pairs (union over the subset's tables)
    /// that had a score in every modality.
    pub coverage_percent: f64,
}

impl FusedTable {
    pub fn eer(&self) -> Result<EerResult> {
        let genuine: Vec<f64> = self.genuine.iter().map(|g| g.score).collect();
        let impostor: Vec<f64> = self.impostor.iter().map(|i| i.score).collect();
        crate::eval::compute_eer(&genuine, &impostor)
    }
}

fn table_for(
    tables: &[ScoreTable],
    task: TaskKind,
    modality: ModalityKind,
) -> Result<&ScoreTable> {
    tables
        .iter()
        .find(|t| t.task == task && t.modality == modality)
        .ok_or_else(|| {
            CoreError::NoUsableData(format!("no score table for {modality} during {task}"))
        })
}

/// Fuses one table per subset modality. Genuine scores pair by (subject,
/// session); impostor scores pair by (claimed, actual, session). Pairs
/// missing a score in any modality are dropped and reflected in coverage.
pub fn fuse_tables(
    subset: &FusionSubset,
    tables: &[ScoreTable],
    weights: &FusionWeights,
    mode: FusionMode,
) -> Result<FusedTable> {
    let mut genuine_maps = Vec::with_capacity(subset.modalities.len());
    let mut impostor_maps = Vec::with_capacity(subset.modalities.len());
    for &m in &subset.modalities {
        let table = table_for(tables, subset.task, m)?;
        let g: BTreeMap<(String, u8), f64> = table
            .genuine
            .iter()
            .map(|x| ((x.subject_id.clone(), x.session_index), x.score))
            .collect();
        let i: BTreeMap<(String, String, u8), f64> = table
            .impostor
            .iter()
            .map(|x| {
                (
                    (x.claimed_id.clone(), x.actual_id.clone(), x.session_index),
                    x.score,
                )
            })
            .collect();
        genuine_maps.push((m, g));
        impostor_maps.push((m, i));
    }

    let mut union = 0usize;
    let mut kept = 0usize;

    let mut genuine_union: Vec<(String, u8)> =
        genuine_maps.iter().flat_map(|(_, m)| m.keys().cloned()).collect();
    genuine_union.sort();
    genuine_union.dedup();
    let mut genuine = Vec::with_capacity(genuine_union.len());
    for key in genuine_union {
        union += 1;
        let mut scores = BTreeMap::new();
        for (m, map) in &genuine_maps {
            if let Some(&s) = map.get(&key) {
                scores.insert(*m, s);
            }
        }
        if scores.len() == subset.modalities.len() {
            kept += 1;
            genuine.push(GenuineScore {
                subject_id: key.0,
                session_index: key.1,
                score: fuse_scores(subset, weights, &scores)?,
            });
        }
    }

    let mut impostor_union: Vec<(String, String, u8)> =
        impostor_maps.iter().flat_map(|(_, m)| m.keys().cloned()).collect();
    impostor_union.sort();
    impostor_union.dedup();
    let mut impostor = Vec::with_capacity(impostor_union.len());
    for key in impostor_union {
        union += 1;
        let mut scores = BTreeMap::new();
        for (m, map) in &impostor_maps {
            if let Some(&s) = map.get(&key) {
                scores.insert(*m, s);
            }
        }
        if scores.len() == subset.modalities.len() {
            kept += 1;
            impostor.push(ImpostorScore {
                claimed_id: key.0,
                actual_id: key.1,
                session_index: key.2,
                score: fuse_scores(subset, weights, &scores)?,
            });
        }
    }

    if union == 0 {
        return Err(CoreError::EmptyScores(String::from(
            "no comparison pairs to fuse",
        )));
    }
    Ok(FusedTable {
        subset: subset.clone(),
        mode,
        genuine,
        impostor,
        coverage_percent: 100.0 * kept as f64 / union as f64,
    })
}

/// Z-normalizes a table's scores (genuine and impostor pooled). A zero
/// spread maps every score to 0. EER is unchanged because the map is a
/// positive affine transform.
pub fn znorm_table(table: &ScoreTable) -> ScoreTable {
    let all: Vec<f64> = table
        .genuine
        .iter()
        .map(|g| g.score)
        .chain(table.impostor.iter().map(|i| i.score))
        .collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let std = math::sqrt(var);
    let map = |s: f64| if std > 0.0 { (s - mean) / std } else { 0.0 };
    let mut out = table.clone();
    for g in &mut out.genuine {
        g.score = map(g.score);
    }
    for i in &mut out.impostor {
        i.score = map(i.score);
    }
    out
}

/// Fuses and scores every subset of the task, sorted by EER ascending with
/// the bitmask as a deterministic tiebreak.
pub fn rank_subsets(
    task: TaskKind,
    tables: &[ScoreTable],
    validation_eers: &BTreeMap<ModalityKind, f64>,
    mode: FusionMode,
) -> Result<Vec<(FusionSubset, f64)>> {
    let mut out = Vec::with_capacity(63);
    for subset in enumerate_subsets(task) {
        let weights = match mode {
            FusionMode::Simple => FusionWeights::uniform(&subset),
            FusionMode::Weighted => compute_weights(&subset, validation_eers)?,
        };
        let fused = fuse_tables(&subset, tables, &weights, mode)?;
        out.push((subset, fused.eer()?.eer_percent));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.mask.cmp(&b.0.mask)));
    Ok(out)
}
