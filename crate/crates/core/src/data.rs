//! Session-level data model: raw sensor/touch streams, device metadata,
//! sampling-frequency estimation, subject validation, and dataset splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::CoreError;
use crate::seed;
use crate::Result;

/// One source of biometric information: a touch task's screen stream or a
/// background sensor sampled while a task runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModalityKind {
    Accelerometer,
    GravitySensor,
    Gyroscope,
    LinearAccelerometer,
    Magnetometer,
    TouchKeystroke,
    TouchScrollUp,
    TouchScrollDown,
    TouchDraw8,
    TouchTap,
}

/// The five touch tasks of an acquisition session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TaskKind {
    Keystroke,
    ScrollUp,
    ScrollDown,
    Draw8,
    Tap,
}

impl ModalityKind {
    /// The five background sensors, in canonical order.
    pub const BACKGROUND: [ModalityKind; 5] = [
        ModalityKind::Accelerometer,
        ModalityKind::GravitySensor,
        ModalityKind::Gyroscope,
        ModalityKind::LinearAccelerometer,
        ModalityKind::Magnetometer,
    ];

    /// All ten modalities, touch tasks first.
    pub const ALL: [ModalityKind; 10] = [
        ModalityKind::TouchKeystroke,
        ModalityKind::TouchScrollUp,
        ModalityKind::TouchScrollDown,
        ModalityKind::TouchDraw8,
        ModalityKind::TouchTap,
        ModalityKind::Accelerometer,
        ModalityKind::GravitySensor,
        ModalityKind::Gyroscope,
        ModalityKind::LinearAccelerometer,
        ModalityKind::Magnetometer,
    ];

    pub fn is_background(self) -> bool {
        matches!(
            self,
            ModalityKind::Accelerometer
                | ModalityKind::GravitySensor
                | ModalityKind::Gyroscope
                | ModalityKind::LinearAccelerometer
                | ModalityKind::Magnetometer
        )
    }

    pub fn is_touch(self) -> bool {
        !self.is_background()
    }

    /// The task a touch modality belongs to; `None` for background sensors.
    pub fn task(self) -> Option<TaskKind> {
        match self {
            ModalityKind::TouchKeystroke => Some(TaskKind::Keystroke),
            ModalityKind::TouchScrollUp => Some(TaskKind::ScrollUp),
            ModalityKind::TouchScrollDown => Some(TaskKind::ScrollDown),
            ModalityKind::TouchDraw8 => Some(TaskKind::Draw8),
            ModalityKind::TouchTap => Some(TaskKind::Tap),
            _ => None,
        }
    }

    /// Number of raw value columns this modality's series carries.
    pub fn raw_columns(self) -> usize {
        match self {
            ModalityKind::GravitySensor => 1,
            ModalityKind::TouchKeystroke => 1,
            _ => 3,
        }
    }

    /// Stable lowercase identifier used in file names and reports.
    pub fn slug(self) -> &'static str {
        match self {
            ModalityKind::Accelerometer => "accelerometer",
            ModalityKind::GravitySensor => "gravity",
            ModalityKind::Gyroscope => "gyroscope",
            ModalityKind::LinearAccelerometer => "linear_accelerometer",
            ModalityKind::Magnetometer => "magnetometer",
            ModalityKind::TouchKeystroke => "touch_keystroke",
            ModalityKind::TouchScrollUp => "touch_scroll_up",
            ModalityKind::TouchScrollDown => "touch_scroll_down",
            ModalityKind::TouchDraw8 => "touch_draw8",
            ModalityKind::TouchTap => "touch_tap",
        }
    }

    /// Short acronym used in fusion reports (K, SU, SD, TD, T, A, Gr, Gy, L, M).
    pub fn acronym(self) -> &'static str {
        match self {
            ModalityKind::Accelerometer => "A",
            ModalityKind::GravitySensor => "Gr",
            ModalityKind::Gyroscope => "Gy",
            ModalityKind::LinearAccelerometer => "L",
            ModalityKind::Magnetometer => "M",
            ModalityKind::TouchKeystroke => "K",
            ModalityKind::TouchScrollUp => "SU",
            ModalityKind::TouchScrollDown => "SD",
            ModalityKind::TouchDraw8 => "TD",
            ModalityKind::TouchTap => "T",
        }
    }

    pub fn from_slug(s: &str) -> Option<ModalityKind> {
        ModalityKind::ALL.into_iter().find(|m| m.slug() == s)
    }
}

impl TaskKind {
    /// All five tasks in canonical order.
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Keystroke,
        TaskKind::ScrollUp,
        TaskKind::ScrollDown,
        TaskKind::Draw8,
        TaskKind::Tap,
    ];

    /// The touch modality captured during this task.
    pub fn touch_modality(self) -> ModalityKind {
        match self {
            TaskKind::Keystroke => ModalityKind::TouchKeystroke,
            TaskKind::ScrollUp => ModalityKind::TouchScrollUp,
            TaskKind::ScrollDown => ModalityKind::TouchScrollDown,
            TaskKind::Draw8 => ModalityKind::TouchDraw8,
            TaskKind::Tap => ModalityKind::TouchTap,
        }
    }

    /// The six modalities observable during this task: its touch stream plus
    /// the five background sensors, in canonical order.
    pub fn modalities(self) -> [ModalityKind; 6] {
        let b = ModalityKind::BACKGROUND;
        [self.touch_modality(), b[0], b[1], b[2], b[3], b[4]]
    }

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Keystroke => "keystroke",
            TaskKind::ScrollUp => "scroll_up",
            TaskKind::ScrollDown => "scroll_down",
            TaskKind::Draw8 => "draw8",
            TaskKind::Tap => "tap",
        }
    }

    pub fn from_slug(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.slug() == s)
    }
}

impl core::fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.slug())
    }
}

impl core::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.slug())
    }
}

/// Screen geometry and model identifier of the acquisition device.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceMeta {
    pub screen_width: u32,
    pub screen_height: u32,
    pub device_model: String,
}

impl DeviceMeta {
    pub fn new(screen_width: u32, screen_height: u32, device_model: String) -> Result<Self> {
        if screen_width == 0 || screen_height == 0 {
            return Err(CoreError::InvalidDevice(format!(
                "screen dimensions must be positive, got {screen_width}x{screen_height}"
            )));
        }
        Ok(DeviceMeta {
            screen_width,
            screen_height,
            device_model,
        })
    }
}

/// One raw stream: millisecond timestamps plus a `[T x cols]` value matrix
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
    cols: usize,
}

impl RawSeries {
    /// Builds a series, checking the structural invariants: at least one
    /// sample, sorted timestamps, finite values, consistent row width.
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 {
            return Err(CoreError::InvalidSeries("zero columns".into()));
        }
        if timestamps.is_empty() {
            return Err(CoreError::InvalidSeries("empty series".into()));
        }
        if values.len() != timestamps.len() * cols {
            return Err(CoreError::InvalidSeries(format!(
                "value count {} does not match {} rows x {} cols",
                values.len(),
                timestamps.len(),
                cols
            )));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(CoreError::InvalidSeries(
                "timestamps must be non-decreasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidSeries(
                "values contain NaN or infinity".into(),
            ));
        }
        Ok(RawSeries {
            timestamps,
            values,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row `t` of the value matrix.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.cols..(t + 1) * self.cols]
    }

    /// Column `c` as an owned vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.values[t * self.cols + c]).collect()
    }

    /// True when every stored value equals zero (an acquisition error).
    pub fn is_all_zeros(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Keeps only samples with timestamps inside `[start_ms, end_ms]`.
    /// Returns `None` when nothing falls in the range.
    pub fn clip_to_time_range(&self, start_ms: i64, end_ms: i64) -> Option<RawSeries> {
        let from = self.timestamps.partition_point(|&t| t < start_ms);
        let to = self.timestamps.partition_point(|&t| t <= end_ms);
        if from >= to {
            return None;
        }
        Some(RawSeries {
            timestamps: self.timestamps[from..to].to_vec(),
            values: self.values[from * self.cols..to * self.cols].to_vec(),
            cols: self.cols,
        })
    }

    /// Checks modality-specific value constraints (touch coordinates within
    /// the screen, keystroke codes within one byte).
    pub fn check_for_modality(&self, kind: ModalityKind, device: &DeviceMeta) -> Result<()> {
        if self.cols != kind.raw_columns() {
            return Err(CoreError::InvalidSeries(format!(
                "{kind} series has {} columns, expected {}",
                self.cols,
                kind.raw_columns()
            )));
        }
        if kind.is_touch() && kind != ModalityKind::TouchKeystroke {
            let w = device.screen_width as f64;
            let h = device.screen_height as f64;
            for t in 0..self.len() {
                let row = self.row(t);
                if row[0] < 0.0 || row[0] > w || row[1] < 0.0 || row[1] > h {
                    return Err(CoreError::InvalidSeries(format!(
                        "touch sample {t} at ({}, {}) outside {w}x{h} screen",
                        row[0], row[1]
                    )));
                }
            }
        }
        if kind == ModalityKind::TouchKeystroke {
            for &v in &self.values {
                if !(0.0..=255.0).contains(&v) {
                    return Err(CoreError::InvalidKeycode(v));
                }
            }
        }
        Ok(())
    }
}

/// Estimated sampling frequency of one acquisition stream, in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingInfo {
    pub f_s: f64,
}

/// Estimates the sampling frequency from the first and last timestamp.
pub fn estimate_sampling_frequency(series: &RawSeries) -> Result<SamplingInfo> {
    let n = series.len();
    if n < 2 {
        return Err(CoreError::SamplingUndefined(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let span_ms = series.timestamps[n - 1] - series.timestamps[0];
    if span_ms <= 0 {
        return Err(CoreError::SamplingUndefined(
            "zero duration between first and last sample".into(),
        ));
    }
    Ok(SamplingInfo {
        f_s: (n - 1) as f64 / (span_ms as f64 / 1000.0),
    })
}

/// All streams recorded for one subject in one acquisition session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub subject_id: String,
    pub session_index: u8,
    pub device: DeviceMeta,
    /// Per task: the touch stream plus any simultaneous background sensors.
    pub streams: BTreeMap<TaskKind, BTreeMap<ModalityKind, RawSeries>>,
}

impl SessionRecord {
    pub fn stream(&self, task: TaskKind, modality: ModalityKind) -> Option<&RawSeries> {
        self.streams.get(&task).and_then(|m| m.get(&modality))
    }
}

/// True iff the subject has exactly sessions 1..=5 and every required stream
/// (the touch stream of each task, plus the five background sensors during
/// the keystroke task) is present, non-empty, and not all zeros.
pub fn validate_subject(sessions: &[SessionRecord]) -> bool {
    if sessions.len() != 5 {
        return false;
    }
    let indices: BTreeSet<u8> = sessions.iter().map(|s| s.session_index).collect();
    if indices != BTreeSet::from([1, 2, 3, 4, 5]) {
        return false;
    }
    sessions.iter().all(|session| {
        let tasks_ok = TaskKind::ALL.iter().all(|&task| {
            session
                .stream(task, task.touch_modality())
                .is_some_and(|s| !s.is_all_zeros())
        });
        let sensors_ok = ModalityKind::BACKGROUND.iter().all(|&sensor| {
            session
                .stream(TaskKind::Keystroke, sensor)
                .is_some_and(|s| !s.is_all_zeros())
        });
        tasks_ok && sensors_ok
    })
}

/// Disjoint train/validation/test subject sets. The validation and test sets
/// are shared across all modalities.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetSplit {
    pub train_subjects: BTreeSet<String>,
    pub validation_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
}

/// Splits subjects into train/validation/test sets, deterministically under
/// `seed`. Subjects not drawn for validation or test form the training set.
pub fn split_dataset(
    subjects: &[String],
    seed: u64,
    n_val: usize,
    n_test: usize,
) -> Result<DatasetSplit> {
    let mut unique: Vec<String> = subjects.to_vec();
    unique.sort();
    unique.dedup();
    if n_val + n_test > unique.len() {
        return Err(CoreError::InsufficientSubjects(format!(
            "need {} subjects for validation+test, have {}",
            n_val + n_test,
            unique.len()
        )));
    }
    let mut rng = seed::rng_from_seed(seed);
    unique.shuffle(&mut rng);
    let validation_subjects: BTreeSet<String> = unique[..n_val].iter().cloned().collect();
    let test_subjects: BTreeSet<String> = unique[n_val..n_val + n_test].iter().cloned().collect();
    let train_subjects: BTreeSet<String> = unique[n_val + n_test..].iter().cloned().collect();
    Ok(DatasetSplit {
        train_subjects,
        validation_subjects,
        test_subjects,
    })
}

/// An in-memory dataset: session records grouped by subject, sessions sorted
/// by index. Iteration order is the subject id order, so downstream stages
/// are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    subjects: BTreeMap<String, Vec<SessionRecord>>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    /// Adds one subject's sessions. Sessions are sorted by index; duplicate
    /// indices, mixed subject ids, and empty session lists are rejected.
    pub fn insert_subject(&mut self, mut sessions: Vec<SessionRecord>) -> Result<()> {
        let first = sessions
            .first()
            .ok_or_else(|| CoreError::NoUsableData(String::from("subject has no sessions")))?;
        let id = first.subject_id.clone();
        if sessions.iter().any(|s| s.subject_id != id) {
            return Err(CoreError::InvalidSeries(format!(
                "mixed subject ids under '{id}'"
            )));
        }
        sessions.sort_by_key(|s| s.session_index);
        if sessions.windows(2).any(|w| w[0].session_index == w[1].session_index) {
            return Err(CoreError::InvalidSeries(format!(
                "duplicate session index for subject '{id}'"
            )));
        }
        if self.subjects.insert(id.clone(), sessions).is_some() {
            return Err(CoreError::InvalidSeries(format!(
                "subject '{id}' inserted twice"
            )));
        }
        Ok(())
    }

    pub fn subject_ids(&self) -> impl Iterator<Item = &String> {
        self.subjects.keys()
    }

    pub fn sessions(&self, subject_id: &str) -> Option<&[SessionRecord]> {
        self.subjects.get(subject_id).map(Vec::as_slice)
    }

    pub fn session(&self, subject_id: &str, index: u8) -> Option<&SessionRecord> {
        self.sessions(subject_id)?
            .iter()
            .find(|s| s.session_index == index)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}
