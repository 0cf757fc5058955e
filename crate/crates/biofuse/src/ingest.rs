//! On-disk dataset layout: loading, per-session validation, and write-out.
//!
//! A dataset root holds one directory per subject, each with numbered
//! session directories:
//!
//! ```text
//! <root>/<subject_id>/session_<k>/device.csv
//! <root>/<subject_id>/session_<k>/<task>/<modality>.csv
//! ```
//!
//! `device.csv` has the header `screen_width,screen_height,model`. Stream
//! files are named by modality slug and carry one of four headers:
//! `timestamp,x,y,z` for triaxial sensors, `timestamp,v` for the gravity
//! magnitude, `timestamp,x,y,p` for touch gestures, and
//! `timestamp,keycode` for keystrokes. Timestamps are integer
//! milliseconds; all other fields are decimal numbers.
//!
//! Loading is forgiving at the session level and strict at the subject
//! level: a malformed file invalidates only its session, but a subject
//! that ends up without the full five-session protocol is excluded from
//! the returned dataset and reported in the [`LoadOutcome`].

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use biofuse_core::data::{
    validate_subject, Dataset, DeviceMeta, ModalityKind, RawSeries, SessionRecord, TaskKind,
};

/// Highest session index kept per subject; later recordings are dropped.
pub const MAX_SESSIONS: usize = 5;

/// A subject or session that was left out of the loaded dataset, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub subject_id: String,
    pub detail: String,
}

impl core::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.subject_id, self.detail)
    }
}

/// The usable dataset plus a report of everything that was skipped.
#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<LoadWarning>,
}

/// Column headers for one modality's stream file.
fn stream_header(modality: ModalityKind) -> &'static [&'static str] {
    match modality {
        ModalityKind::GravitySensor => &["timestamp", "v"],
        ModalityKind::TouchKeystroke => &["timestamp", "keycode"],
        m if m.is_touch() => &["timestamp", "x", "y", "p"],
        _ => &["timestamp", "x", "y", "z"],
    }
}

/// Loads a dataset root, optionally restricted to the subject ids listed
/// in a manifest file (one id per line; blank lines ignored).
///
/// Sessions with unreadable or malformed files are dropped with a warning
/// and loading continues. Subjects whose surviving sessions do not satisfy
/// the five-session protocol are excluded and reported. An unreadable root
/// or manifest is an error.
pub fn load_dataset(root: &Path, manifest: Option<&Path>) -> Result<LoadOutcome> {
    let requested = match manifest {
        Some(path) => Some(read_manifest(path)?),
        None => None,
    };
    let mut present = BTreeSet::new();
    let entries = fs::read_dir(root)
        .with_context(|| format!("cannot read dataset root {}", root.display()))?;
    for entry in entries {
        let entry = entry.with_context(|| format!("cannot list {}", root.display()))?;
        if entry.path().is_dir() {
            present.insert(entry.file_name().to_string_lossy().into_owned());
        }
    }

    let mut warnings = Vec::new();
    let subject_ids: Vec<String> = match &requested {
        Some(ids) => {
            for id in ids {
                if !present.contains(id) {
                    warnings.push(LoadWarning {
                        subject_id: id.clone(),
                        detail: "listed in manifest but not found under the dataset root"
                            .to_string(),
                    });
                }
            }
            ids.iter().filter(|id| present.contains(*id)).cloned().collect()
        }
        None => present.into_iter().collect(),
    };

    let mut dataset = Dataset::new();
    for subject_id in subject_ids {
        let subject_dir = root.join(&subject_id);
        let mut sessions = Vec::new();
        for (index, session_dir) in session_dirs(&subject_dir)? {
            match load_session(&session_dir, &subject_id, index) {
                Ok(record) => sessions.push(record),
                Err(err) => warnings.push(LoadWarning {
                    subject_id: subject_id.clone(),
                    detail: format!("session {index} dropped: {err:#}"),
                }),
            }
        }
        if sessions.is_empty() {
            warnings.push(LoadWarning {
                subject_id,
                detail: "excluded: no loadable sessions".to_string(),
            });
            continue;
        }
        if !validate_subject(&sessions) {
            warnings.push(LoadWarning {
                subject_id,
                detail: "excluded: sessions do not satisfy the five-session protocol"
                    .to_string(),
            });
            continue;
        }
        dataset.insert_subject(sessions)?;
    }
    Ok(LoadOutcome { dataset, warnings })
}

fn read_manifest(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(str::to_string)
        .collect())
}

/// Session directories sorted by index, truncated to [`MAX_SESSIONS`].
fn session_dirs(subject_dir: &Path) -> Result<Vec<(u8, PathBuf)>> {
    let mut found = Vec::new();
    let entries = fs::read_dir(subject_dir)
        .with_context(|| format!("cannot read {}", subject_dir.display()))?;
    for entry in entries {
        let entry = entry.with_context(|| format!("cannot list {}", subject_dir.display()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !entry.path().is_dir() {
            continue;
        }
        if let Some(index) = name.strip_prefix("session_").and_then(|s| s.parse::<u8>().ok()) {
            found.push((index, entry.path()));
        }
    }
    found.sort_by_key(|(index, _)| *index);
    found.truncate(MAX_SESSIONS);
    Ok(found)
}

fn load_session(dir: &Path, subject_id: &str, session_index: u8) -> Result<SessionRecord> {
    let device = read_device(&dir.join("device.csv"))?;
    let mut record = SessionRecord {
        subject_id: subject_id.to_string(),
        session_index,
        device,
        streams: Default::default(),
    };
    for task in TaskKind::ALL {
        let task_dir = dir.join(task.slug());
        if !task_dir.is_dir() {
            continue;
        }
        let mut streams = std::collections::BTreeMap::new();
        for entry in fs::read_dir(&task_dir)
            .with_context(|| format!("cannot read {}", task_dir.display()))?
        {
            let path = entry
                .with_context(|| format!("cannot list {}", task_dir.display()))?
                .path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let stem = match path.file_stem().and_then(|s| s.to_str()) {
                Some(stem) => stem,
                None => continue,
            };
            let modality = match ModalityKind::from_slug(stem) {
                Some(m) => m,
                None => continue,
            };
            if modality.is_touch() && modality.task() != Some(task) {
                bail!(
                    "{} holds {}, which belongs to the {} task",
                    path.display(),
                    modality.slug(),
                    modality.task().map(TaskKind::slug).unwrap_or("?")
                );
            }
            let series = read_stream(&path, modality, &record.device)
                .with_context(|| format!("bad stream file {}", path.display()))?;
            streams.insert(modality, series);
        }
        if !streams.is_empty() {
            record.streams.insert(task, streams);
        }
    }
    Ok(record)
}

fn read_device(path: &Path) -> Result<DeviceMeta> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let header = reader.headers()?.clone();
    let expected = ["screen_width", "screen_height", "model"];
    if header.iter().ne(expected) {
        bail!("{}: expected header {}", path.display(), expected.join(","));
    }
    let row = reader
        .records()
        .next()
        .ok_or_else(|| anyhow!("{}: missing device row", path.display()))??;
    if row.len() != 3 {
        bail!("{}: device row has {} fields, expected 3", path.display(), row.len());
    }
    let width: u32 = row[0].parse().context("bad screen_width")?;
    let height: u32 = row[1].parse().context("bad screen_height")?;
    Ok(DeviceMeta::new(width, height, row[2].to_string())?)
}

fn read_stream(path: &Path, modality: ModalityKind, device: &DeviceMeta) -> Result<RawSeries> {
    let expected = stream_header(modality);
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        bail!("expected header {}", expected.join(","));
    }
    let cols = expected.len() - 1;
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != cols + 1 {
            bail!("row {} has {} fields, expected {}", i + 2, row.len(), cols + 1);
        }
        let ts: i64 = row[0]
            .parse()
            .with_context(|| format!("row {}: bad timestamp {:?}", i + 2, &row[0]))?;
        timestamps.push(ts);
        for c in 0..cols {
            let v: f64 = row[c + 1]
                .parse()
                .with_context(|| format!("row {}: bad value {:?}", i + 2, &row[c + 1]))?;
            values.push(v);
        }
    }
    let series = RawSeries::new(timestamps, values, cols)?;
    series.check_for_modality(modality, device)?;
    Ok(series)
}

/// Writes a dataset under `root` in the canonical layout. Numbers are
/// written with the shortest representation that parses back to the same
/// value, so a write followed by a load reproduces the dataset exactly.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    for subject_id in dataset.subject_ids() {
        let sessions = dataset
            .sessions(subject_id)
            .ok_or_else(|| anyhow!("subject {subject_id} vanished while writing"))?;
        for record in sessions {
            let dir = root
                .join(subject_id)
                .join(format!("session_{}", record.session_index));
            fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            write_device(&dir.join("device.csv"), &record.device)?;
            for (task, streams) in &record.streams {
                let task_dir = dir.join(task.slug());
                fs::create_dir_all(&task_dir)
                    .with_context(|| format!("cannot create {}", task_dir.display()))?;
                for (modality, series) in streams {
                    let path = task_dir.join(format!("{}.csv", modality.slug()));
                    write_stream(&path, *modality, series)
                        .with_context(|| format!("cannot write {}", path.display()))?;
                }
            }
        }
    }
    Ok(())
}

fn write_device(path: &Path, device: &DeviceMeta) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["screen_width", "screen_height", "model"])?;
    writer.write_record([
        device.screen_width.to_string(),
        device.screen_height.to_string(),
        device.device_model.clone(),
    ])?;
    writer.flush()?;
    Ok(())
}

fn write_stream(path: &Path, modality: ModalityKind, series: &RawSeries) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(stream_header(modality).iter().copied())?;
    let cols = series.cols();
    for i in 0..series.len() {
        let mut row = Vec::with_capacity(cols + 1);
        row.push(series.timestamps()[i].to_string());
        for v in series.row(i) {
            row.push(v.to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn meta() -> DeviceMeta {
        DeviceMeta::new(1080, 1920, "unit, test".to_string()).unwrap()
    }

    fn triaxial(n: usize, step: i64, scale: f64) -> RawSeries {
        let timestamps: Vec<i64> = (0..n as i64).map(|i| i * step).collect();
        let mut values = Vec::with_capacity(n * 3);
        for i in 0..n {
            let t = i as f64 * 0.01;
            values.push(scale * (t.sin() + 0.1));
            values.push(scale * (1.3 * t).cos());
            values.push(scale * 0.217 + t / 3.0);
        }
        RawSeries::new(timestamps, values, 3).unwrap()
    }

    fn gravity(n: usize, step: i64) -> RawSeries {
        let timestamps: Vec<i64> = (0..n as i64).map(|i| i * step).collect();
        let values: Vec<f64> = (0..n).map(|i| 9.81 + 0.01 * (i as f64 * 0.2).sin()).collect();
        RawSeries::new(timestamps, values, 1).unwrap()
    }

    fn touch(n: usize, step: i64) -> RawSeries {
        let timestamps: Vec<i64> = (0..n as i64).map(|i| i * step).collect();
        let mut values = Vec::with_capacity(n * 3);
        for i in 0..n {
            let p = i as f64 / n as f64;
            values.push(540.0 + 300.0 * (p * 6.0).sin());
            values.push(1700.0 - 1400.0 * p);
            values.push(0.4 + 0.1 * (p * 9.0).cos());
        }
        RawSeries::new(timestamps, values, 3).unwrap()
    }

    fn keystroke(n: usize) -> RawSeries {
        let timestamps: Vec<i64> = (0..n as i64).map(|i| 200 * i + (i % 3) * 40).collect();
        let values: Vec<f64> = (0..n).map(|i| (65 + (i % 26)) as f64).collect();
        RawSeries::new(timestamps, values, 1).unwrap()
    }

    fn session(subject: &str, index: u8) -> SessionRecord {
        let mut record = SessionRecord {
            subject_id: subject.to_string(),
            session_index: index,
            device: meta(),
            streams: Default::default(),
        };
        for task in TaskKind::ALL {
            let mut streams = std::collections::BTreeMap::new();
            let touch_modality = task.touch_modality();
            let touch_series = if touch_modality == ModalityKind::TouchKeystroke {
                keystroke(70)
            } else {
                touch(160, 20)
            };
            let span = *touch_series.timestamps().last().unwrap();
            let n_sensor = (span / 10) as usize + 1;
            streams.insert(touch_modality, touch_series);
            for modality in ModalityKind::BACKGROUND {
                let series = if modality == ModalityKind::GravitySensor {
                    gravity(n_sensor, 10)
                } else {
                    triaxial(n_sensor, 10, 1.0 + index as f64)
                };
                streams.insert(modality, series);
            }
            record.streams.insert(task, streams);
        }
        record
    }

    fn dataset(subjects: &[&str]) -> Dataset {
        let mut dataset = Dataset::new();
        for id in subjects {
            let sessions: Vec<SessionRecord> = (1..=5).map(|k| session(id, k)).collect();
            dataset.insert_subject(sessions).unwrap();
        }
        dataset
    }

    #[test]
    fn round_trip_preserves_every_sample() {
        let dir = tempfile::tempdir().unwrap();
        let original = dataset(&["alpha", "beta"]);
        write_dataset(dir.path(), &original).unwrap();
        let outcome = load_dataset(dir.path(), None).unwrap();
        assert!(outcome.warnings.is_empty(), "{:?}", outcome.warnings);
        let loaded_ids: Vec<&String> = outcome.dataset.subject_ids().collect();
        assert_eq!(loaded_ids, original.subject_ids().collect::<Vec<_>>());
        for id in original.subject_ids() {
            assert_eq!(outcome.dataset.sessions(id), original.sessions(id));
        }
    }

    #[test]
    fn non_finite_sample_drops_the_session_and_excludes_the_subject() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset(&["alpha", "beta"])).unwrap();
        let victim = dir
            .path()
            .join("alpha/session_3/scroll_up/accelerometer.csv");
        let mut text = fs::read_to_string(&victim).unwrap();
        let pos = text.rfind(',').unwrap();
        text.replace_range(pos + 1.., "NaN\n");
        fs::write(&victim, text).unwrap();

        let outcome = load_dataset(dir.path(), None).unwrap();
        let ids: Vec<String> = outcome.dataset.subject_ids().cloned().collect();
        assert_eq!(ids, vec!["beta".to_string()]);
        assert_eq!(outcome.warnings.len(), 2);
        assert!(outcome.warnings[0].detail.contains("session 3 dropped"));
        assert!(outcome.warnings[1].detail.contains("five-session protocol"));
        assert!(outcome.warnings.iter().all(|w| w.subject_id == "alpha"));
    }

    #[test]
    fn extra_sessions_beyond_five_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset(&["alpha"])).unwrap();
        let extra = dir.path().join("alpha/session_6");
        fs::create_dir_all(&extra).unwrap();
        fs::write(extra.join("device.csv"), "not,a,valid\nfile\n").unwrap();

        let outcome = load_dataset(dir.path(), None).unwrap();
        assert!(outcome.warnings.is_empty(), "{:?}", outcome.warnings);
        assert_eq!(outcome.dataset.sessions("alpha").unwrap().len(), 5);
    }

    #[test]
    fn manifest_restricts_and_reports_missing_subjects() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset(&["alpha", "beta", "gamma"])).unwrap();
        let manifest = dir.path().join("manifest.txt");
        fs::write(&manifest, "beta\n\n  gamma\nmissing\n").unwrap();

        let outcome = load_dataset(dir.path(), Some(&manifest)).unwrap();
        let ids: Vec<String> = outcome.dataset.subject_ids().cloned().collect();
        assert_eq!(ids, vec!["beta".to_string(), "gamma".to_string()]);
        assert_eq!(outcome.warnings.len(), 1);
        assert_eq!(outcome.warnings[0].subject_id, "missing");
    }

    #[test]
    fn empty_root_loads_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = load_dataset(dir.path(), None).unwrap();
        assert!(outcome.dataset.is_empty());
        assert!(outcome.warnings.is_empty());
    }

    #[test]
    fn missing_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nowhere");
        let err = load_dataset(&missing, None).unwrap_err();
        assert!(format!("{err:#}").contains("nowhere"));
    }

    #[test]
    fn misplaced_touch_stream_invalidates_the_session() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset(&["alpha"])).unwrap();
        let source = dir.path().join("alpha/session_1/tap/touch_tap.csv");
        let target = dir.path().join("alpha/session_1/scroll_up/touch_tap.csv");
        fs::copy(&source, &target).unwrap();

        let outcome = load_dataset(dir.path(), None).unwrap();
        assert!(outcome.dataset.is_empty());
        assert!(outcome
            .warnings
            .iter()
            .any(|w| w.detail.contains("belongs to the tap task")));
    }

    #[test]
    fn wrong_header_invalidates_the_session() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset(&["alpha"])).unwrap();
        let victim = dir.path().join("alpha/session_2/draw8/gravity.csv");
        fs::write(&victim, "timestamp,x,y,z\n0,1.0,2.0,3.0\n").unwrap();

        let outcome = load_dataset(dir.path(), None).unwrap();
        assert!(outcome.dataset.is_empty());
        assert!(outcome
            .warnings
            .iter()
            .any(|w| w.detail.contains("expected header timestamp,v")));
    }
}
