//! CSV score tables, DET curves, fusion rankings, and the text report.
//!
//! Every file is written with a fixed column order and fully sorted or
//! input-ordered rows, and floats use the shortest representation that
//! parses back exactly, so reruns produce byte-identical outputs and
//! downstream stages can reload scores without precision loss.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use biofuse_core::data::{ModalityKind, TaskKind};
use biofuse_core::eval::{GenuineScore, ImpostorScore, ScoreTable};
use biofuse_core::fusion::FusionMode;
use biofuse_core::train::EpochRecord;

fn parse_task(slug: &str) -> Result<TaskKind> {
    TaskKind::from_slug(slug).ok_or_else(|| anyhow!("unknown task {slug:?}"))
}

fn parse_modality(slug: &str) -> Result<ModalityKind> {
    ModalityKind::from_slug(slug).ok_or_else(|| anyhow!("unknown modality {slug:?}"))
}

fn parse_mode(name: &str) -> Result<FusionMode> {
    match name {
        "simple" => Ok(FusionMode::Simple),
        "weighted" => Ok(FusionMode::Weighted),
        other => bail!("unknown fusion mode {other:?}"),
    }
}

/// Writes one (task, modality) score table. Genuine rows repeat the
/// subject id in both id columns; impostor rows carry the claimed and
/// actual ids.
pub fn write_score_csv(path: &Path, table: &ScoreTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["modality", "kind", "claimed_id", "actual_id", "session", "score"])?;
    let modality = table.modality.slug();
    for g in &table.genuine {
        writer.write_record([
            modality,
            "genuine",
            &g.subject_id,
            &g.subject_id,
            &g.session_index.to_string(),
            &g.score.to_string(),
        ])?;
    }
    for i in &table.impostor {
        writer.write_record([
            modality,
            "impostor",
            &i.claimed_id,
            &i.actual_id,
            &i.session_index.to_string(),
            &i.score.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a score table back; the task is carried by the file's location,
/// not its contents, so the caller supplies it.
pub fn read_score_csv(path: &Path, task: TaskKind) -> Result<ScoreTable> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read score table {}", path.display()))?;
    let expected = ["modality", "kind", "claimed_id", "actual_id", "session", "score"];
    if reader.headers()?.iter().ne(expected) {
        bail!("{}: expected header {}", path.display(), expected.join(","));
    }
    let mut modality: Option<ModalityKind> = None;
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for row in reader.records() {
        let row = row?;
        let m = parse_modality(&row[0])?;
        if *modality.get_or_insert(m) != m {
            bail!("{}: mixed modalities in one score table", path.display());
        }
        let session_index: u8 = row[4].parse().context("bad session index")?;
        let score: f64 = row[5].parse().context("bad score")?;
        match &row[1] {
            "genuine" => genuine.push(GenuineScore {
                subject_id: row[2].to_string(),
                session_index,
                score,
            }),
            "impostor" => impostor.push(ImpostorScore {
                claimed_id: row[2].to_string(),
                actual_id: row[3].to_string(),
                session_index,
                score,
            }),
            other => bail!("{}: unknown score kind {other:?}", path.display()),
        }
    }
    let modality = modality
        .ok_or_else(|| anyhow!("{}: score table has no rows", path.display()))?;
    Ok(ScoreTable { task, modality, genuine, impostor, skipped_subjects: Vec::new() })
}

/// Writes a training history using the core CSV layout.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    fs::write(path, biofuse_core::train::history_csv(history))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Writes a DET curve as `far,frr` pairs, both as fractions in [0, 1].
pub fn write_det_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["far", "frr"])?;
    for (far, frr) in curve {
        writer.write_record([far.to_string(), frr.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// One per-(task, modality) equal-error-rate row.
#[derive(Debug, Clone, PartialEq)]
pub struct EerRow {
    pub task: TaskKind,
    pub modality: ModalityKind,
    pub eer_percent: f64,
}

pub fn write_eer_csv(path: &Path, rows: &[EerRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["task", "modality", "eer_percent"])?;
    for row in rows {
        writer.write_record([
            row.task.slug(),
            row.modality.slug(),
            &row.eer_percent.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_eer_csv(path: &Path) -> Result<Vec<EerRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let expected = ["task", "modality", "eer_percent"];
    if reader.headers()?.iter().ne(expected) {
        bail!("{}: expected header {}", path.display(), expected.join(","));
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        rows.push(EerRow {
            task: parse_task(&row[0])?,
            modality: parse_modality(&row[1])?,
            eer_percent: row[2].parse().context("bad eer_percent")?,
        });
    }
    Ok(rows)
}

/// One fused subset's result.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionRow {
    pub task: TaskKind,
    pub mode: FusionMode,
    pub subset: String,
    pub eer_percent: f64,
    pub coverage_percent: f64,
}

pub fn write_fusion_csv(path: &Path, rows: &[FusionRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["task", "mode", "subset", "eer_percent", "coverage_percent"])?;
    for row in rows {
        writer.write_record([
            row.task.slug(),
            row.mode.as_str(),
            &row.subset,
            &row.eer_percent.to_string(),
            &row.coverage_percent.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_fusion_csv(path: &Path) -> Result<Vec<FusionRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let expected = ["task", "mode", "subset", "eer_percent", "coverage_percent"];
    if reader.headers()?.iter().ne(expected) {
        bail!("{}: expected header {}", path.display(), expected.join(","));
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        rows.push(FusionRow {
            task: parse_task(&row[0])?,
            mode: parse_mode(&row[1])?,
            subset: row[2].to_string(),
            eer_percent: row[3].parse().context("bad eer_percent")?,
            coverage_percent: row[4].parse().context("bad coverage_percent")?,
        });
    }
    Ok(rows)
}

/// Renders the final text report from per-modality EERs and fusion rows.
pub fn render_report(eers: &[EerRow], fusion: &[FusionRow]) -> String {
    let mut out = String::new();
    out.push_str("Passive authentication results\n");
    out.push_str("==============================\n\n");

    out.push_str("Per-modality EER on test subjects (%)\n");
    out.push_str(&format!("{:<12} {:<22} {:>8}\n", "task", "modality", "EER"));
    for row in eers {
        out.push_str(&format!(
            "{:<12} {:<22} {:>8.2}\n",
            row.task.slug(),
            row.modality.slug(),
            row.eer_percent
        ));
    }
    out.push('\n');

    for task in TaskKind::ALL {
        let best_single = eers
            .iter()
            .filter(|r| r.task == task)
            .map(|r| r.eer_percent)
            .fold(f64::INFINITY, f64::min);
        for mode in [FusionMode::Simple, FusionMode::Weighted] {
            let mut rows: Vec<&FusionRow> = fusion
                .iter()
                .filter(|r| r.task == task && r.mode == mode)
                .collect();
            if rows.is_empty() {
                continue;
            }
            rows.sort_by(|a, b| {
                a.eer_percent
                    .partial_cmp(&b.eer_percent)
                    .expect("EERs are finite")
                    .then_with(|| a.subset.cmp(&b.subset))
            });
            out.push_str(&format!("Top fused subsets, {} task, {} fusion\n", task.slug(), mode.as_str()));
            out.push_str(&format!(
                "{:<24} {:>8} {:>10}\n",
                "subset", "EER", "coverage"
            ));
            for row in rows.iter().take(3) {
                out.push_str(&format!(
                    "{:<24} {:>8.2} {:>9.1}%\n",
                    row.subset, row.eer_percent, row.coverage_percent
                ));
            }
            let best_fused = rows[0].eer_percent;
            if best_single.is_finite() && best_single > 0.0 {
                let reduction = 100.0 * (best_single - best_fused) / best_single;
                out.push_str(&format!(
                    "best single {:.2}%, best fused {:.2}%, error reduction {:.2}%\n",
                    best_single, best_fused, reduction
                ));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> ScoreTable {
        ScoreTable {
            task: TaskKind::ScrollUp,
            modality: ModalityKind::Accelerometer,
            genuine: vec![
                GenuineScore { subject_id: "a".into(), session_index: 4, score: 0.25 },
                GenuineScore { subject_id: "a".into(), session_index: 5, score: 0.1 + 0.2 },
            ],
            impostor: vec![ImpostorScore {
                claimed_id: "a".into(),
                actual_id: "b".into(),
                session_index: 4,
                score: 0.7071067811865476,
            }],
            skipped_subjects: Vec::new(),
        }
    }

    #[test]
    fn score_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let table = sample_table();
        write_score_csv(&path, &table).unwrap();
        let loaded = read_score_csv(&path, TaskKind::ScrollUp).unwrap();
        assert_eq!(loaded, table);
    }

    #[test]
    fn score_csv_rejects_foreign_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_score_csv(&path, TaskKind::Tap).is_err());
    }

    #[test]
    fn eer_and_fusion_csvs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let eer_path = dir.path().join("eers.csv");
        let eers = vec![
            EerRow { task: TaskKind::Tap, modality: ModalityKind::TouchTap, eer_percent: 21.46 },
            EerRow { task: TaskKind::Tap, modality: ModalityKind::Magnetometer, eer_percent: 33.0 },
        ];
        write_eer_csv(&eer_path, &eers).unwrap();
        assert_eq!(read_eer_csv(&eer_path).unwrap(), eers);

        let fusion_path = dir.path().join("fusion.csv");
        let rows = vec![FusionRow {
            task: TaskKind::Tap,
            mode: FusionMode::Weighted,
            subset: "T+A+M".into(),
            eer_percent: 7.12,
            coverage_percent: 100.0,
        }];
        write_fusion_csv(&fusion_path, &rows).unwrap();
        assert_eq!(read_fusion_csv(&fusion_path).unwrap(), rows);
    }

    #[test]
    fn det_csv_has_far_frr_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.csv");
        write_det_csv(&path, &[(0.0, 1.0), (0.5, 0.25), (1.0, 0.0)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("far,frr\n0,1\n"));
    }

    #[test]
    fn report_names_the_best_subsets_and_reduction() {
        let eers = vec![EerRow {
            task: TaskKind::Tap,
            modality: ModalityKind::TouchTap,
            eer_percent: 21.46,
        }];
        let fusion = vec![
            FusionRow {
                task: TaskKind::Tap,
                mode: FusionMode::Weighted,
                subset: "T+A".into(),
                eer_percent: 7.12,
                coverage_percent: 100.0,
            },
            FusionRow {
                task: TaskKind::Tap,
                mode: FusionMode::Weighted,
                subset: "T".into(),
                eer_percent: 21.46,
                coverage_percent: 100.0,
            },
        ];
        let report = render_report(&eers, &fusion);
        assert!(report.contains("T+A"));
        assert!(report.contains("error reduction 66.82%"));
        let again = render_report(&eers, &fusion);
        assert_eq!(report, again);
    }
}
