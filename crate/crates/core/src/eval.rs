//! The verification protocol and its metrics: templates enrolled from
//! sessions 1-3, probes drawn from sessions 4-5, genuine/impostor score
//! tables, equal error rate with interpolated crossing, and DET curves.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, ModalityKind, SessionRecord, TaskKind};
use crate::error::CoreError;
use crate::nn::{Embedding, EncoderModel};
use crate::preprocess::session_features;
use crate::seed;
use crate::window::{
    extract_enrollment_windows, extract_random_window, FeatureWindow, WindowOverrides,
};
use crate::Result;

/// Sessions whose windows form the enrollment template.
pub const ENROLL_SESSIONS: [u8; 3] = [1, 2, 3];
/// Sessions providing verification probes.
pub const VERIFY_SESSIONS: [u8; 2] = [4, 5];

/// Which enrollment windows form the template: every overlapped window, or
/// only the first window of each enrollment session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EnrollMode {
    #[default]
    All,
    One,
}

/// Protocol knobs shared by enrollment, scoring, and validation.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalOptions {
    pub mode: EnrollMode,
    pub windows: WindowOverrides,
}

impl EvalOptions {
    pub fn with_mode(mode: EnrollMode) -> Self {
        EvalOptions {
            mode,
            windows: WindowOverrides::default(),
        }
    }
}

/// A subject's enrolled reference: embeddings of all enrollment windows.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentTemplate {
    pub subject_id: String,
    pub task: TaskKind,
    pub modality: ModalityKind,
    pub embeddings: Vec<Embedding>,
}

/// One genuine comparison: a subject's probe against their own template.
#[derive(Debug, Clone, PartialEq)]
pub struct GenuineScore {
    pub subject_id: String,
    pub session_index: u8,
    pub score: f64,
}

/// One impostor comparison: `actual_id`'s probe against `claimed_id`'s
/// template.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpostorScore {
    pub claimed_id: String,
    pub actual_id: String,
    pub session_index: u8,
    pub score: f64,
}

/// All comparisons of one (task, modality) pair over a subject set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub task: TaskKind,
    pub modality: ModalityKind,
    pub genuine: Vec<GenuineScore>,
    pub impostor: Vec<ImpostorScore>,
    /// Subjects excluded for lack of usable enrollment or probe data.
    pub skipped_subjects: Vec<String>,
}

impl ScoreTable {
    pub fn genuine_scores(&self) -> Vec<f64> {
        self.genuine.iter().map(|g| g.score).collect()
    }

    pub fn impostor_scores(&self) -> Vec<f64> {
        self.impostor.iter().map(|i| i.score).collect()
    }

    pub fn eer(&self) -> Result<EerResult> {
        compute_eer(&self.genuine_scores(), &self.impostor_scores())
    }
}

/// Embeds every enrollment window of sessions 1-3. Sessions without usable
/// data are skipped; the template errors only when nothing was usable.
pub fn enroll(
    sessions: &[SessionRecord],
    task: TaskKind,
    modality: ModalityKind,
    model: &EncoderModel,
    options: &EvalOptions,
) -> Result<EnrollmentTemplate> {
    let subject_id = sessions
        .first()
        .map(|s| s.subject_id.clone())
        .ok_or_else(|| CoreError::NoUsableData(String::from("subject has no sessions")))?;
    let spec = options.windows.spec_for(modality);
    let mut embeddings = Vec::new();
    for record in sessions
        .iter()
        .filter(|r| ENROLL_SESSIONS.contains(&r.session_index))
    {
        let fm = match session_features(record, task, modality) {
            Ok(fm) => fm,
            Err(CoreError::NoUsableData(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut windows = extract_enrollment_windows(&fm, spec)?;
        if options.mode == EnrollMode::One {
            windows.truncate(1);
        }
        for window in &windows {
            embeddings.push(model.forward_infer(window)?);
        }
    }
    if embeddings.is_empty() {
        return Err(CoreError::NoUsableData(format!(
            "subject {subject_id} has no usable {modality} enrollment data for task {task}"
        )));
    }
    Ok(EnrollmentTemplate {
        subject_id,
        task,
        modality,
        embeddings,
    })
}

fn mean_distance(template: &EnrollmentTemplate, probe: &Embedding) -> f64 {
    let total: f64 = template.embeddings.iter().map(|e| e.distance(probe)).sum();
    total / template.embeddings.len() as f64
}

/// Scores a probe window against a template: the Euclidean distance to the
/// probe's embedding, averaged over all template embeddings. Lower means
/// more genuine.
pub fn verify_score(
    template: &EnrollmentTemplate,
    probe: &FeatureWindow,
    model: &EncoderModel,
) -> Result<f64> {
    if template.embeddings.is_empty() {
        return Err(CoreError::EmptySequence(String::from(
            "enrollment template has no embeddings",
        )));
    }
    if probe.modality() != template.modality {
        return Err(CoreError::InvalidConfig(format!(
            "probe modality {} does not match template modality {}",
            probe.modality(),
            template.modality
        )));
    }
    let emb = model.forward_infer(probe)?;
    Ok(mean_distance(template, &emb))
}

struct SubjectEval {
    id: String,
    template: EnrollmentTemplate,
    probes: Vec<(u8, Embedding)>,
}

/// Extracts one probe window from a verification session: touch tasks have a
/// single deterministic window, background sensors one seeded random window.
fn probe_window(
    record: &SessionRecord,
    task: TaskKind,
    modality: ModalityKind,
    options: &EvalOptions,
    eval_seed: u64,
) -> Result<FeatureWindow> {
    let fm = session_features(record, task, modality)?;
    let spec = options.windows.spec_for(modality);
    if modality.is_background() {
        let tag = format!(
            "probe.{}.{}.{}.{}",
            task.slug(),
            modality.slug(),
            record.subject_id,
            record.session_index
        );
        let mut rng = seed::derived_rng(eval_seed, &tag);
        extract_random_window(&fm, spec, &mut rng)
    } else {
        Ok(extract_enrollment_windows(&fm, spec)?.swap_remove(0))
    }
}

/// Builds the full genuine/impostor table for one (task, modality) pair:
/// per kept subject, 2 genuine scores and 2 x (N - 1) impostor scores, where
/// N is the number of subjects with usable enrollment and probe data.
pub fn build_score_table(
    dataset: &Dataset,
    subjects: &BTreeSet<String>,
    task: TaskKind,
    modality: ModalityKind,
    model: &EncoderModel,
    options: &EvalOptions,
    eval_seed: u64,
) -> Result<ScoreTable> {
    if subjects.len() < 2 {
        return Err(CoreError::InsufficientSubjects(format!(
            "verification needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let mut enrolled: Vec<SubjectEval> = Vec::new();
    let mut skipped_subjects = Vec::new();
    'subjects: for id in subjects {
        let Some(sessions) = dataset.sessions(id) else {
            skipped_subjects.push(id.clone());
            continue;
        };
        let template = match enroll(sessions, task, modality, model, options) {
            Ok(t) => t,
            Err(CoreError::NoUsableData(_)) => {
                skipped_subjects.push(id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut probes = Vec::with_capacity(VERIFY_SESSIONS.len());
        for &session_index in &VERIFY_SESSIONS {
            let Some(record) = sessions.iter().find(|r| r.session_index == session_index) else {
                skipped_subjects.push(id.clone());
                continue 'subjects;
            };
            let window = match probe_window(record, task, modality, options, eval_seed) {
                Ok(w) => w,
                Err(CoreError::NoUsableData(_)) => {
                    skipped_subjects.push(id.clone());
                    continue 'subjects;
                }
                Err(e) => return Err(e),
            };
            probes.push((session_index, model.forward_infer(&window)?));
        }
        enrolled.push(SubjectEval {
            id: id.clone(),
            template,
            probes,
        });
    }
    if enrolled.len() < 2 {
        return Err(CoreError::InsufficientSubjects(format!(
            "only {} subjects have usable data for {modality} during {task}",
            enrolled.len()
        )));
    }

    let mut genuine = Vec::with_capacity(enrolled.len() * VERIFY_SESSIONS.len());
    let mut impostor =
        Vec::with_capacity(enrolled.len() * (enrolled.len() - 1) * VERIFY_SESSIONS.len());
    for subject in &enrolled {
        for (session_index, emb) in &subject.probes {
            genuine.push(GenuineScore {
                subject_id: subject.id.clone(),
                session_index: *session_index,
                score: mean_distance(&subject.template, emb),
            });
        }
    }
    for claimed in &enrolled {
        for actual in &enrolled {
            if claimed.id == actual.id {
                continue;
            }
            for (session_index, emb) in &actual.probes {
                impostor.push(ImpostorScore {
                    claimed_id: claimed.id.clone(),
                    actual_id: actual.id.clone(),
                    session_index: *session_index,
                    score: mean_distance(&claimed.template, emb),
                });
            }
        }
    }
    Ok(ScoreTable {
        task,
        modality,
        genuine,
        impostor,
        skipped_subjects,
    })
}

/// Equal error rate (percent) and the threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer_percent: f64,
    pub threshold: f64,
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(CoreError::EmptyScores(format!("{name} score list is empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::InvalidSeries(format!(
            "{name} scores contain a non-finite value"
        )));
    }
    Ok(())
}

/// All candidate thresholds: the distinct scores plus the midpoints between
/// consecutive distinct scores, ascending.
fn candidate_thresholds(sorted_genuine: &[f64], sorted_impostor: &[f64]) -> Vec<f64> {
    let mut values: Vec<f64> = sorted_genuine
        .iter()
        .chain(sorted_impostor)
        .copied()
        .collect();
    values.sort_unstable_by(f64::total_cmp);
    values.dedup();
    let mut out = Vec::with_capacity(values.len() * 2);
    for (k, &v) in values.iter().enumerate() {
        out.push(v);
        if let Some(&next) = values.get(k + 1) {
            out.push(0.5 * (v + next));
        }
    }
    out
}

/// FAR(t) = fraction of impostor scores <= t; FRR(t) = fraction of genuine
/// scores > t. Scores are distances, so genuine are expected smaller.
fn far_frr(sorted_genuine: &[f64], sorted_impostor: &[f64], t: f64) -> (f64, f64) {
    let far = sorted_impostor.partition_point(|&s| s <= t) as f64 / sorted_impostor.len() as f64;
    let accepted = sorted_genuine.partition_point(|&s| s <= t);
    let frr = (sorted_genuine.len() - accepted) as f64 / sorted_genuine.len() as f64;
    (far, frr)
}

/// Sweeps all candidate thresholds for the FAR/FRR crossing. An exact
/// crossing reports the plateau's midpoint threshold; otherwise the two
/// adjacent operating points are linearly interpolated.
pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<EerResult> {
    check_scores("genuine", genuine)?;
    check_scores("impostor", impostor)?;
    let mut gen_sorted = genuine.to_vec();
    gen_sorted.sort_unstable_by(f64::total_cmp);
    let mut imp_sorted = impostor.to_vec();
    imp_sorted.sort_unstable_by(f64::total_cmp);
    let candidates = candidate_thresholds(&gen_sorted, &imp_sorted);

    let mut prev_t = candidates[0] - 1.0;
    let mut prev_far = 0.0;
    let mut prev_frr = 1.0;
    let mut i = 0;
    while i < candidates.len() {
        let t = candidates[i];
        let (far, frr) = far_frr(&gen_sorted, &imp_sorted, t);
        if far == frr {
            let mut j = i;
            while j + 1 < candidates.len() {
                let next = far_frr(&gen_sorted, &imp_sorted, candidates[j + 1]);
                if next == (far, frr) {
                    j += 1;
                } else {
                    break;
                }
            }
            return Ok(EerResult {
                eer_percent: far * 100.0,
                threshold: 0.5 * (candidates[i] + candidates[j]),
            });
        }
        if far > frr {
            let gap = (prev_frr - prev_far) + (far - frr);
            let u = (prev_frr - prev_far) / gap;
            return Ok(EerResult {
                eer_percent: (prev_far + u * (far - prev_far)) * 100.0,
                threshold: prev_t + u * (t - prev_t),
            });
        }
        prev_t = t;
        prev_far = far;
        prev_frr = frr;
        i += 1;
    }
    unreachable!("FAR reaches 1 and FRR reaches 0 at the largest score")
}

/// Operating points (FAR, FRR) over the full threshold sweep, FAR ascending.
/// `n_points = 0` keeps every distinct point; otherwise the curve is evenly
/// subsampled to at most `n_points` points, keeping both endpoints.
pub fn det_curve(genuine: &[f64], impostor: &[f64], n_points: usize) -> Result<Vec<(f64, f64)>> {
    check_scores("genuine", genuine)?;
    check_scores("impostor", impostor)?;
    let mut gen_sorted = genuine.to_vec();
    gen_sorted.sort_unstable_by(f64::total_cmp);
    let mut imp_sorted = impostor.to_vec();
    imp_sorted.sort_unstable_by(f64::total_cmp);
    let mut values: Vec<f64> = gen_sorted.iter().chain(&imp_sorted).copied().collect();
    values.sort_unstable_by(f64::total_cmp);
    values.dedup();

    let mut points = Vec::with_capacity(values.len() + 1);
    points.push((0.0, 1.0));
    for &v in &values {
        let p = far_frr(&gen_sorted, &imp_sorted, v);
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    if n_points >= 2 && points.len() > n_points {
        let last = points.len() - 1;
        let picked: Vec<(f64, f64)> = (0..n_points)
            .map(|i| points[i * last / (n_points - 1)])
            .collect();
        let mut out = picked;
        out.dedup();
        return Ok(out);
    }
    Ok(points)
}

/// 100 x (eer_base - eer_new) / eer_base.
pub fn relative_error_reduction(eer_base: f64, eer_new: f64) -> Result<f64> {
    if eer_base <= 0.0 {
        return Err(CoreError::InvalidConfig(format!(
            "relative error reduction needs a positive base EER, got {eer_base}"
        )));
    }
    Ok(100.0 * (eer_base - eer_new) / eer_base)
}

/// The full protocol on one subject set, reduced to a single EER percent.
pub fn protocol_eer(
    dataset: &Dataset,
    subjects: &BTreeSet<String>,
    task: TaskKind,
    modality: ModalityKind,
    model: &EncoderModel,
    options: &EvalOptions,
    eval_seed: u64,
) -> Result<f64> {
    let table = build_score_table(dataset, subjects, task, modality, model, options, eval_seed)?;
    Ok(table.eer()?.eer_percent)
}

/// A denser, deterministic EER over every verification window.
///
/// Where the protocol draws one probe per verification session, this scores
/// all of its windows, giving a finer-grained signal with no sampling noise.
/// Used for epoch selection during training; reported metrics stay on the
/// protocol.
pub fn windowed_eer(
    dataset: &Dataset,
    subjects: &BTreeSet<String>,
    task: TaskKind,
    modality: ModalityKind,
    model: &EncoderModel,
    options: &EvalOptions,
) -> Result<f64> {
    let spec = options.windows.spec_for(modality);
    let mut entries: Vec<(String, EnrollmentTemplate, Vec<Embedding>)> = Vec::new();
    'subjects: for id in subjects {
        let Some(sessions) = dataset.sessions(id) else {
            continue;
        };
        let template = match enroll(sessions, task, modality, model, options) {
            Ok(t) => t,
            Err(CoreError::NoUsableData(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut probes = Vec::new();
        for &session_index in &VERIFY_SESSIONS {
            let Some(record) = sessions.iter().find(|r| r.session_index == session_index) else {
                continue 'subjects;
            };
            let fm = match session_features(record, task, modality) {
                Ok(fm) => fm,
                Err(CoreError::NoUsableData(_)) => continue 'subjects,
                Err(e) => return Err(e),
            };
            for window in extract_enrollment_windows(&fm, spec)? {
                probes.push(model.forward_infer(&window)?);
            }
        }
        if probes.is_empty() {
            continue;
        }
        entries.push((id.clone(), template, probes));
    }
    if entries.len() < 2 {
        return Err(CoreError::InsufficientSubjects(format!(
            "windowed EER needs at least 2 usable subjects, got {}",
            entries.len()
        )));
    }
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (claimed_id, template, _) in &entries {
        for (actual_id, _, probes) in &entries {
            let scores = probes.iter().map(|p| mean_distance(template, p));
            if actual_id == claimed_id {
                genuine.extend(scores);
            } else {
                impostor.extend(scores);
            }
        }
    }
    Ok(compute_eer(&genuine, &impostor)?.eer_percent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DeviceMeta, RawSeries};
    use crate::math;
    use crate::nn::encoder::{EncoderConfig, BN_EPS, BN_MOMENTUM};
    use crate::window::FeatureWindow;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eer_hand_derived_three_by_three() {
        let r = compute_eer(&[0.1, 0.4, 0.6], &[0.3, 0.5, 0.9]).unwrap();
        assert_abs_diff_eq!(r.eer_percent, 100.0 / 3.0, epsilon = 1e-9);
        assert!(r.threshold > 0.4 && r.threshold < 0.5, "{}", r.threshold);
    }

    #[test]
    fn eer_perfect_separation_is_zero() {
        let r = compute_eer(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
        assert_eq!(r.eer_percent, 0.0);
        assert!(r.threshold >= 0.2 && r.threshold < 0.8);
    }

    #[test]
    fn eer_identical_distributions_is_chance() {
        let r = compute_eer(&[0.2, 0.8], &[0.2, 0.8]).unwrap();
        assert_abs_diff_eq!(r.eer_percent, 50.0, epsilon = 1e-12);
        let single = compute_eer(&[0.4], &[0.4]).unwrap();
        assert_abs_diff_eq!(single.eer_percent, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn eer_rejects_empty_and_non_finite() {
        assert!(compute_eer(&[], &[0.5]).is_err());
        assert!(compute_eer(&[0.5], &[]).is_err());
        assert!(compute_eer(&[f64::NAN], &[0.5]).is_err());
    }

    /// Brute-force reference: FAR/FRR by direct counting at every distinct
    /// score, with the same interpolation rule at the crossing.
    fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
        let mut values: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
        values.sort_unstable_by(f64::total_cmp);
        values.dedup();
        let count_far = |t: f64| {
            impostor.iter().filter(|&&s| s <= t).count() as f64 / impostor.len() as f64
        };
        let count_frr =
            |t: f64| genuine.iter().filter(|&&s| s > t).count() as f64 / genuine.len() as f64;
        let mut prev = (0.0, 1.0);
        for &t in &values {
            let far = count_far(t);
            let frr = count_frr(t);
            if far == frr {
                return far * 100.0;
            }
            if far > frr {
                let (pf, pr) = prev;
                let u = (pr - pf) / ((pr - pf) + (far - frr));
                return (pf + u * (far - pf)) * 100.0;
            }
            prev = (far, frr);
        }
        unreachable!()
    }

    #[test]
    fn eer_matches_brute_force_oracle() {
        let mut rng = crate::seed::rng_from_seed(41);
        use rand::RngExt;
        for round in 0..200 {
            let n_g = rng.random_range(1..40);
            let n_i = rng.random_range(1..40);
            let shift = rng.random_range(0.0..1.5);
            let genuine: Vec<f64> = (0..n_g).map(|_| rng.random_range(0.0..2.0)).collect();
            let impostor: Vec<f64> = (0..n_i)
                .map(|_| rng.random_range(0.0..2.0) + shift)
                .collect();
            let fast = compute_eer(&genuine, &impostor).unwrap().eer_percent;
            let slow = brute_force_eer(&genuine, &impostor);
            assert!(
                (fast - slow).abs() <= 1e-12,
                "round {round}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn det_curve_endpoints_and_monotonicity() {
        let mut rng = crate::seed::rng_from_seed(99);
        use rand::RngExt;
        for _ in 0..100 {
            let genuine: Vec<f64> = (0..rng.random_range(1..30))
                .map(|_| rng.random_range(0.0..2.0))
                .collect();
            let impostor: Vec<f64> = (0..rng.random_range(1..30))
                .map(|_| rng.random_range(0.5..2.5))
                .collect();
            let curve = det_curve(&genuine, &impostor, 0).unwrap();
            for pair in curve.windows(2) {
                assert!(pair[1].0 >= pair[0].0);
                assert!(pair[1].1 <= pair[0].1);
            }
            assert_eq!(*curve.first().unwrap(), (0.0, 1.0));
            assert_eq!(*curve.last().unwrap(), (1.0, 0.0));
        }
    }

    #[test]
    fn det_curve_reference_points() {
        let separated = det_curve(&[0.1, 0.2], &[0.8, 0.9], 0).unwrap();
        assert!(separated.contains(&(0.0, 0.0)));
        let chance = det_curve(&[0.2, 0.8], &[0.2, 0.8], 0).unwrap();
        assert!(chance.contains(&(0.5, 0.5)));
        let full = det_curve(&[0.1, 0.4, 0.6], &[0.3, 0.5, 0.9], 0).unwrap();
        let sampled = det_curve(&[0.1, 0.4, 0.6], &[0.3, 0.5, 0.9], 3).unwrap();
        assert!(sampled.len() <= 3);
        assert_eq!(sampled.first(), full.first());
        assert_eq!(sampled.last(), full.last());
    }

    #[test]
    fn relative_reduction_examples() {
        assert_abs_diff_eq!(
            relative_error_reduction(21.46, 7.12).unwrap(),
            66.82,
            epsilon = 0.005
        );
        assert_eq!(relative_error_reduction(10.0, 5.0).unwrap(), 50.0);
        assert_eq!(relative_error_reduction(8.0, 8.0).unwrap(), 0.0);
        assert!(relative_error_reduction(0.0, 1.0).is_err());
    }

    fn zero_model(input_dim: usize, hidden: usize) -> EncoderModel {
        let cfg = EncoderConfig::with_hidden(input_dim, hidden).unwrap();
        EncoderModel::from_parts(
            cfg,
            vec![0.0; cfg.param_len()],
            vec![vec![0.0; hidden]],
            vec![vec![1.0; hidden]],
            BN_MOMENTUM,
            BN_EPS,
        )
        .unwrap()
    }

    #[test]
    fn verify_score_mean_and_invariance() {
        let model = zero_model(2, 3);
        let probe =
            FeatureWindow::from_raw(ModalityKind::TouchKeystroke, 4, vec![0.0; 8]).unwrap();
        let e1 = Embedding {
            v: vec![1.0, 0.0, 0.0],
        };
        let e2 = Embedding {
            v: vec![3.0, 0.0, 0.0],
        };
        let mut template = EnrollmentTemplate {
            subject_id: "u1".to_string(),
            task: TaskKind::Keystroke,
            modality: ModalityKind::TouchKeystroke,
            embeddings: vec![e1.clone(), e2.clone()],
        };
        assert_abs_diff_eq!(
            verify_score(&template, &probe, &model).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        template.embeddings = vec![e2, e1];
        assert_abs_diff_eq!(
            verify_score(&template, &probe, &model).unwrap(),
            2.0,
            epsilon = 1e-12
        );

        template.embeddings = vec![Embedding { v: vec![0.0; 3] }];
        assert_eq!(verify_score(&template, &probe, &model).unwrap(), 0.0);

        template.embeddings.clear();
        assert!(verify_score(&template, &probe, &model).is_err());
    }

    /// Builds a dataset where each subject's signals carry a subject-specific
    /// offset: scroll-up task with a simultaneous accelerometer stream, plus
    /// a keystroke task.
    fn protocol_dataset(n_subjects: usize) -> Dataset {
        let mut dataset = Dataset::new();
        for s in 0..n_subjects {
            let offset = s as f64;
            let sessions: Vec<SessionRecord> = (1..=5)
                .map(|idx| {
                    let jitter = idx as f64 * 0.01;
                    let mut scroll_task = BTreeMap::new();
                    let touch_ts: Vec<i64> = (0..360).map(|t| t * 20).collect();
                    let touch_values: Vec<f64> = (0..360)
                        .flat_map(|t| {
                            let phase = t as f64 / 40.0 + offset + jitter;
                            [
                                500.0 + 100.0 * math::sin(phase),
                                900.0 + 200.0 * math::cos(phase),
                                0.5 + 0.1 * math::sin(phase * 2.0),
                            ]
                        })
                        .collect();
                    scroll_task.insert(
                        ModalityKind::TouchScrollUp,
                        RawSeries::new(touch_ts, touch_values, 3).unwrap(),
                    );
                    let acc_ts: Vec<i64> = (0..350).map(|t| t * 20).collect();
                    let acc_values: Vec<f64> = (0..350)
                        .flat_map(|t| {
                            let phase = t as f64 / 9.0 + offset + jitter;
                            [math::sin(phase), math::cos(phase), 0.3 * math::sin(phase)]
                        })
                        .collect();
                    scroll_task.insert(
                        ModalityKind::Accelerometer,
                        RawSeries::new(acc_ts, acc_values, 3).unwrap(),
                    );

                    let mut key_task = BTreeMap::new();
                    let key_ts: Vec<i64> =
                        (0..20).map(|t| t * (100 + 5 * s as i64 + idx as i64)).collect();
                    let keycodes: Vec<f64> = (0..20).map(|k| (65 + (k + s) % 20) as f64).collect();
                    key_task.insert(
                        ModalityKind::TouchKeystroke,
                        RawSeries::new(key_ts, keycodes, 1).unwrap(),
                    );

                    let mut streams = BTreeMap::new();
                    streams.insert(TaskKind::ScrollUp, scroll_task);
                    streams.insert(TaskKind::Keystroke, key_task);
                    SessionRecord {
                        subject_id: format!("subj{s:02}"),
                        session_index: idx,
                        device: DeviceMeta::new(1080, 1920, "synth".to_string()).unwrap(),
                        streams,
                    }
                })
                .collect();
            dataset.insert_subject(sessions).unwrap();
        }
        dataset
    }

    #[test]
    fn enrollment_window_counts_follow_protocol() {
        let dataset = protocol_dataset(1);
        let model = zero_model(12, 3);
        let sessions = dataset.sessions("subj00").unwrap();
        // 350 sensor samples at 50 Hz: D = 1, so 3 overlapped windows per
        // session and 9 embeddings over the 3 enrollment sessions.
        let background = enroll(
            sessions,
            TaskKind::ScrollUp,
            ModalityKind::Accelerometer,
            &model,
            &EvalOptions::with_mode(EnrollMode::All),
        )
        .unwrap();
        assert_eq!(background.embeddings.len(), 9);
        let single = enroll(
            sessions,
            TaskKind::ScrollUp,
            ModalityKind::Accelerometer,
            &model,
            &EvalOptions::with_mode(EnrollMode::One),
        )
        .unwrap();
        assert_eq!(single.embeddings.len(), 3);
        let touch = enroll(
            sessions,
            TaskKind::ScrollUp,
            ModalityKind::TouchScrollUp,
            &model,
            &EvalOptions::with_mode(EnrollMode::All),
        )
        .unwrap();
        assert_eq!(touch.embeddings.len(), 3);

        // Overriding the accelerometer window to 100 samples without overlap
        // turns the 350-sample sessions into 4 windows each.
        let mut options = EvalOptions::with_mode(EnrollMode::All);
        options.windows.set(
            ModalityKind::Accelerometer,
            crate::window::WindowSpec::new(100, 0).unwrap(),
        );
        let overridden = enroll(
            sessions,
            TaskKind::ScrollUp,
            ModalityKind::Accelerometer,
            &model,
            &options,
        )
        .unwrap();
        assert_eq!(overridden.embeddings.len(), 12);
        assert!(overridden.embeddings.iter().all(|e| e.v.len() == 3));
    }

    #[test]
    fn score_table_cardinalities() {
        let dataset = protocol_dataset(3);
        let subjects: BTreeSet<String> = dataset.subject_ids().cloned().collect();
        let model = EncoderModel::new(EncoderConfig::with_hidden(12, 4).unwrap(), 5).unwrap();
        let table = build_score_table(
            &dataset,
            &subjects,
            TaskKind::ScrollUp,
            ModalityKind::Accelerometer,
            &model,
            &EvalOptions::with_mode(EnrollMode::All),
            77,
        )
        .unwrap();
        assert_eq!(table.genuine.len(), 3 * 2);
        assert_eq!(table.impostor.len(), 3 * 2 * 2);
        for id in &subjects {
            let g = table.genuine.iter().filter(|x| &x.subject_id == id).count();
            let i = table.impostor.iter().filter(|x| &x.claimed_id == id).count();
            assert_eq!((g, i), (2, 4), "{id}");
        }
        assert!(table
            .impostor
            .iter()
            .all(|x| x.claimed_id != x.actual_id));
        assert!(table.genuine.iter().all(|x| x.score >= 0.0));
        assert!(table.skipped_subjects.is_empty());
    }

    #[test]
    fn score_table_is_seed_deterministic() {
        let dataset = protocol_dataset(3);
        let subjects: BTreeSet<String> = dataset.subject_ids().cloned().collect();
        let model = EncoderModel::new(EncoderConfig::with_hidden(12, 4).unwrap(), 5).unwrap();
        let build = |seed: u64| {
            build_score_table(
                &dataset,
                &subjects,
                TaskKind::ScrollUp,
                ModalityKind::Accelerometer,
                &model,
                &EvalOptions::with_mode(EnrollMode::All),
                seed,
            )
            .unwrap()
        };
        assert_eq!(build(7), build(7));
        let key_model = EncoderModel::new(EncoderConfig::with_hidden(2, 4).unwrap(), 5).unwrap();
        let keystroke = |seed: u64| {
            build_score_table(
                &dataset,
                &subjects,
                TaskKind::Keystroke,
                ModalityKind::TouchKeystroke,
                &key_model,
                &EvalOptions::with_mode(EnrollMode::All),
                seed,
            )
            .unwrap()
        };
        let a = keystroke(7);
        let b = keystroke(8);
        assert_eq!(a, b);
    }

    #[test]
    fn score_table_skips_unusable_subjects() {
        let mut dataset = protocol_dataset(3);
        let sessions: Vec<SessionRecord> = (1..=5)
            .map(|idx| {
                let mut streams = BTreeMap::new();
                streams.insert(TaskKind::Keystroke, BTreeMap::new());
                SessionRecord {
                    subject_id: "empty".to_string(),
                    session_index: idx,
                    device: DeviceMeta::new(1080, 1920, "synth".to_string()).unwrap(),
                    streams,
                }
            })
            .collect();
        dataset.insert_subject(sessions).unwrap();
        let subjects: BTreeSet<String> = dataset.subject_ids().cloned().collect();
        let model = EncoderModel::new(EncoderConfig::with_hidden(2, 4).unwrap(), 5).unwrap();
        let table = build_score_table(
            &dataset,
            &subjects,
            TaskKind::Keystroke,
            ModalityKind::TouchKeystroke,
            &model,
            &EvalOptions::with_mode(EnrollMode::All),
            1,
        )
        .unwrap();
        assert_eq!(table.skipped_subjects, vec!["empty".to_string()]);
        assert_eq!(table.genuine.len(), 6);
        assert_eq!(table.impostor.len(), 12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn eer_invariant_under_monotone_transform(
                genuine in prop::collection::vec(0.0f64..2.0, 1..25),
                impostor in prop::collection::vec(0.0f64..2.0, 1..25),
                scale in 0.1f64..4.0,
                offset in -1.0f64..1.0,
                curve in 0.0f64..2.0,
            ) {
                let transform = |x: f64| offset + scale * x + curve * math::exp(x / 4.0);
                let tg: Vec<f64> = genuine.iter().map(|&x| transform(x)).collect();
                let ti: Vec<f64> = impostor.iter().map(|&x| transform(x)).collect();
                let base = compute_eer(&genuine, &impostor).unwrap().eer_percent;
                let mapped = compute_eer(&tg, &ti).unwrap().eer_percent;
                prop_assert!((base - mapped).abs() <= 1e-9, "{base} vs {mapped}");
            }
        }
    }
}
