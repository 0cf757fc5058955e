//! Synthetic dataset generator with a ground-truth identity oracle.
//!
//! Each subject is a point in a generative parameter space: per-sensor
//! sinusoid frequencies, amplitudes, and phases, plus typing rhythm, tap
//! cadence, and gesture geometry. A single `separability` knob scales how
//! far subjects spread around a shared center: at 0.0 every subject has
//! identical parameters and verification can only perform at chance, at
//! 1.0 subjects are maximally spread. Sessions add small jitter and noise
//! on top, so the within-subject variation is always smaller than the
//! between-subject variation the knob allows.
//!
//! The generator is not a simulator of human behavior. Its purpose is to
//! give the pipeline a dataset where the *true* pairwise subject
//! similarity is known exactly ([`oracle_distance`]), so learned
//! embedding distances can be checked against ground truth.

use anyhow::{bail, Result};
use biofuse_core::data::{Dataset, DeviceMeta, ModalityKind, RawSeries, SessionRecord, TaskKind};
use biofuse_core::seed;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

/// Sensor sampling rates the generator supports, in Hz. Each divides
/// 1000 ms evenly, so timestamps stay integral.
pub const SUPPORTED_RATES: [u32; 3] = [50, 100, 200];

/// Touch digitizer rate in Hz, fixed across configurations.
const TOUCH_RATE_HZ: u32 = 50;

/// Every synthetic subject types this sentence once per keystroke task.
pub const TYPING_SENTENCE: &str = "En un lugar de la Mancha, de cuyo nombre no quiero acordarme";

/// One sinusoidal component of a background sensor axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub freq_hz: f64,
    pub amp: f64,
    pub phase_rad: f64,
}

/// The generative parameters of one synthetic subject.
///
/// `waves` holds one [`Wave`] per raw column of each background sensor, in
/// [`ModalityKind::BACKGROUND`] order. The remaining fields drive the
/// touch tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub waves: Vec<Vec<Wave>>,
    pub key_rhythm_mean_s: f64,
    pub key_rhythm_std_s: f64,
    /// Relative strength of the key-conditioned latency pattern.
    pub key_mod_depth: f64,
    /// Cycles of that pattern across the keycode range.
    pub key_mod_freq: f64,
    pub key_mod_phase: f64,
    pub tap_cadence_s: f64,
    pub touch_speed: f64,
    pub touch_pressure: f64,
    pub touch_curve: f64,
    pub noise_level: f64,
}

/// Configuration for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Must be 5: the enrollment/verification protocol needs exactly five.
    pub sessions_per_subject: usize,
    /// Recording length of each scroll, draw, and tap task, in seconds.
    pub session_duration_s: f64,
    pub sensor_rate_hz: u32,
    /// 0.0 collapses all subjects onto one profile; 1.0 spreads them fully.
    pub separability: f64,
    pub seed: u64,
    /// Background sensors generated as pure noise, carrying no identity.
    pub noise_modalities: Vec<ModalityKind>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 20,
            sessions_per_subject: 5,
            session_duration_s: 12.0,
            sensor_rate_hz: 100,
            separability: 0.7,
            seed: 0,
            noise_modalities: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            bail!("n_subjects must be positive");
        }
        if self.sessions_per_subject != 5 {
            bail!(
                "sessions_per_subject must be 5, got {} (the protocol enrolls on sessions 1-3 and verifies on 4-5)",
                self.sessions_per_subject
            );
        }
        if !SUPPORTED_RATES.contains(&self.sensor_rate_hz) {
            bail!(
                "sensor_rate_hz must be one of {:?}, got {}",
                SUPPORTED_RATES,
                self.sensor_rate_hz
            );
        }
        if !(0.0..=1.0).contains(&self.separability) {
            bail!("separability must lie in [0, 1], got {}", self.separability);
        }
        if !self.session_duration_s.is_finite()
            || !(4.0..=600.0).contains(&self.session_duration_s)
        {
            bail!(
                "session_duration_s must lie in [4, 600], got {}",
                self.session_duration_s
            );
        }
        for m in &self.noise_modalities {
            if !m.is_background() {
                bail!("noise_modalities accepts background sensors only, got {}", m.slug());
            }
        }
        Ok(())
    }
}

/// A generated dataset together with the profiles that produced it.
#[derive(Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub profiles: Vec<SubjectProfile>,
}

/// One generative parameter slot: the shared center and the full width the
/// subject population spreads over at separability 1.
#[derive(Clone, Copy)]
struct Slot {
    center: f64,
    span: f64,
}

const FREQ_SPAN: f64 = 1.2;
const PHASE_SLOT: Slot = Slot { center: PI, span: 1.8 * PI };

fn freq_slot(sensor_idx: usize) -> Slot {
    Slot { center: 0.9 + 0.35 * sensor_idx as f64, span: FREQ_SPAN }
}

fn amp_slot(sensor_idx: usize) -> Slot {
    let center = match ModalityKind::BACKGROUND[sensor_idx] {
        ModalityKind::Accelerometer => 1.0,
        ModalityKind::GravitySensor => 0.12,
        ModalityKind::Gyroscope => 0.8,
        ModalityKind::LinearAccelerometer => 0.9,
        ModalityKind::Magnetometer => 8.0,
        _ => unreachable!("BACKGROUND holds background sensors only"),
    };
    Slot { center, span: center }
}

const SCALAR_SLOTS: [Slot; 10] = [
    Slot { center: 0.26, span: 0.24 },  // key_rhythm_mean_s
    Slot { center: 0.045, span: 0.05 }, // key_rhythm_std_s
    Slot { center: 0.3, span: 0.25 },   // key_mod_depth
    Slot { center: 3.0, span: 4.0 },    // key_mod_freq
    Slot { center: PI, span: 1.8 * PI },// key_mod_phase
    Slot { center: 0.5, span: 0.4 },    // tap_cadence_s
    Slot { center: 1.0, span: 1.0 },    // touch_speed
    Slot { center: 0.5, span: 0.4 },    // touch_pressure
    Slot { center: 0.12, span: 0.16 },  // touch_curve
    Slot { center: 0.04, span: 0.04 },  // noise_level
];

/// Constant offset added to each sensor axis, identical for all subjects.
fn sensor_base(modality: ModalityKind, axis: usize) -> f64 {
    match modality {
        ModalityKind::Accelerometer => [0.3, -0.2, 9.81][axis],
        ModalityKind::GravitySensor => 9.81,
        ModalityKind::Gyroscope => 0.0,
        ModalityKind::LinearAccelerometer => 0.0,
        ModalityKind::Magnetometer => [22.0, -5.0, 38.0][axis],
        _ => 0.0,
    }
}

fn slot_layout() -> Vec<Slot> {
    let mut slots = Vec::new();
    for (s, modality) in ModalityKind::BACKGROUND.iter().enumerate() {
        for _axis in 0..modality.raw_columns() {
            slots.push(freq_slot(s));
            slots.push(amp_slot(s));
            slots.push(PHASE_SLOT);
        }
    }
    slots.extend(SCALAR_SLOTS);
    slots
}

impl SubjectProfile {
    /// Flattens the profile into the fixed slot order used by
    /// [`oracle_distance`].
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for axes in &self.waves {
            for wave in axes {
                out.push(wave.freq_hz);
                out.push(wave.amp);
                out.push(wave.phase_rad);
            }
        }
        out.extend([
            self.key_rhythm_mean_s,
            self.key_rhythm_std_s,
            self.key_mod_depth,
            self.key_mod_freq,
            self.key_mod_phase,
            self.tap_cadence_s,
            self.touch_speed,
            self.touch_pressure,
            self.touch_curve,
            self.noise_level,
        ]);
        out
    }
}

/// Ground-truth distance between two subjects' generative parameters.
///
/// Each coordinate is normalized by its population span before the
/// Euclidean norm, so the result is 0 for identical parameters, symmetric,
/// satisfies the triangle inequality, and stays in [0, 1].
pub fn oracle_distance(a: &SubjectProfile, b: &SubjectProfile) -> f64 {
    let (fa, fb) = (a.flatten(), b.flatten());
    let slots = slot_layout();
    assert_eq!(fa.len(), slots.len(), "profile does not match the slot layout");
    assert_eq!(fb.len(), slots.len(), "profile does not match the slot layout");
    let sum: f64 = fa
        .iter()
        .zip(&fb)
        .zip(&slots)
        .map(|((x, y), slot)| {
            let d = (x - y) / slot.span;
            d * d
        })
        .sum();
    (sum / slots.len() as f64).sqrt()
}

fn sample_profile(cfg: &SynthConfig, subject_idx: usize) -> SubjectProfile {
    let mut rng = seed::derived_rng(cfg.seed, &format!("synth.profile.{subject_idx}"));
    let slots = slot_layout();
    let params: Vec<f64> = slots
        .iter()
        .map(|slot| {
            let t: f64 = rng.random();
            slot.center + (t - 0.5) * cfg.separability * slot.span
        })
        .collect();

    let mut it = params.into_iter();
    let mut waves = Vec::with_capacity(ModalityKind::BACKGROUND.len());
    for modality in ModalityKind::BACKGROUND {
        let mut axes = Vec::with_capacity(modality.raw_columns());
        for _ in 0..modality.raw_columns() {
            axes.push(Wave {
                freq_hz: it.next().unwrap(),
                amp: it.next().unwrap(),
                phase_rad: it.next().unwrap(),
            });
        }
        waves.push(axes);
    }
    let scalars: Vec<f64> = it.collect();
    SubjectProfile {
        subject_id: format!("s{:03}", subject_idx + 1),
        waves,
        key_rhythm_mean_s: scalars[0],
        key_rhythm_std_s: scalars[1],
        key_mod_depth: scalars[2],
        key_mod_freq: scalars[3],
        key_mod_phase: scalars[4],
        tap_cadence_s: scalars[5],
        touch_speed: scalars[6],
        touch_pressure: scalars[7],
        touch_curve: scalars[8],
        noise_level: scalars[9],
    }
}

/// The profiles a configuration generates, without the streams.
pub fn generate_profiles(cfg: &SynthConfig) -> Result<Vec<SubjectProfile>> {
    cfg.validate()?;
    Ok((0..cfg.n_subjects).map(|i| sample_profile(cfg, i)).collect())
}

/// Session-to-session wobble applied on top of a subject's profile.
struct SessionJitter {
    phase: Vec<Vec<f64>>,
    amp_factor: Vec<Vec<f64>>,
    rhythm_offset_s: f64,
    speed_factor: f64,
}

fn sample_jitter<R: Rng>(rng: &mut R) -> SessionJitter {
    let mut phase = Vec::new();
    let mut amp_factor = Vec::new();
    for modality in ModalityKind::BACKGROUND {
        let cols = modality.raw_columns();
        phase.push((0..cols).map(|_| rng.random_range(-0.1..0.1)).collect());
        amp_factor.push((0..cols).map(|_| rng.random_range(0.97..1.03)).collect());
    }
    SessionJitter {
        phase,
        amp_factor,
        rhythm_offset_s: rng.random_range(-0.004..0.004),
        speed_factor: rng.random_range(0.97..1.03),
    }
}

/// Standard normal draw via the Box-Muller transform.
fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Phase offset distinguishing the same sensor across tasks.
fn task_phase(task: TaskKind) -> f64 {
    match task {
        TaskKind::Keystroke => 0.0,
        TaskKind::ScrollUp => 0.9,
        TaskKind::ScrollDown => 1.8,
        TaskKind::Draw8 => 2.7,
        TaskKind::Tap => 3.6,
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Generates the touch stream of one task recording.
fn touch_stream<R: Rng>(
    task: TaskKind,
    profile: &SubjectProfile,
    jitter: &SessionJitter,
    device: &DeviceMeta,
    duration_s: f64,
    rng: &mut R,
) -> RawSeries {
    let w = device.screen_width as f64;
    let h = device.screen_height as f64;
    let speed = profile.touch_speed * jitter.speed_factor;
    let step_ms = (1000 / TOUCH_RATE_HZ) as i64;

    match task {
        TaskKind::Keystroke => {
            let mean = (profile.key_rhythm_mean_s + jitter.rhythm_offset_s).max(0.08);
            let std = profile.key_rhythm_std_s;
            let mut timestamps = Vec::new();
            let mut values = Vec::new();
            let mut t_s = 0.0_f64;
            for byte in TYPING_SENTENCE.bytes() {
                timestamps.push((t_s * 1000.0).round() as i64);
                values.push(byte as f64);
                let code = byte as f64 / 255.0;
                let pattern = 1.0
                    + profile.key_mod_depth
                        * (TAU * profile.key_mod_freq * code + profile.key_mod_phase).sin();
                t_s += (mean * pattern + std * gauss(rng)).max(0.05);
            }
            RawSeries::new(timestamps, values, 1).expect("keystroke stream is well formed")
        }
        TaskKind::Tap => {
            let cadence = profile.tap_cadence_s;
            let n_taps = ((duration_s / cadence).floor() as usize).max(5);
            let mut timestamps = Vec::new();
            let mut values = Vec::new();
            for j in 0..n_taps {
                let cell = j % 9;
                let cx = w * (0.22 + 0.28 * (cell % 3) as f64) + 0.01 * w * gauss(rng);
                let cy = h * (0.25 + 0.25 * (cell / 3) as f64) + 0.01 * h * gauss(rng);
                let start = (j as f64 * cadence * 1000.0).round() as i64;
                for k in 0..4 {
                    timestamps.push(start + k * step_ms);
                    values.push(clamp(cx + 1.5 * k as f64, 0.0, w));
                    values.push(clamp(cy - 1.1 * k as f64, 0.0, h));
                    values.push(clamp(
                        profile.touch_pressure + 0.02 * gauss(rng),
                        0.05,
                        0.98,
                    ));
                }
            }
            RawSeries::new(timestamps, values, 3).expect("tap stream is well formed")
        }
        _ => {
            let n = (duration_s * TOUCH_RATE_HZ as f64) as usize;
            let period_s = 1.4 / speed;
            let mut timestamps = Vec::with_capacity(n);
            let mut values = Vec::with_capacity(n * 3);
            for i in 0..n {
                let t_s = i as f64 / TOUCH_RATE_HZ as f64;
                timestamps.push((i as i64) * step_ms);
                let phase = (t_s / period_s).fract();
                let (x, y) = match task {
                    TaskKind::ScrollUp => (
                        w * (0.5 + profile.touch_curve * (2.0 * PI * phase).sin()),
                        h * (0.85 - 0.7 * phase),
                    ),
                    TaskKind::ScrollDown => (
                        w * (0.5 + profile.touch_curve * (2.0 * PI * phase).sin()),
                        h * (0.15 + 0.7 * phase),
                    ),
                    TaskKind::Draw8 => {
                        let omega = 2.0 * PI * 0.4 * speed;
                        (
                            w * (0.5 + (0.16 + profile.touch_curve) * (2.0 * omega * t_s).sin()),
                            h * (0.5 + 0.3 * (omega * t_s).sin()),
                        )
                    }
                    _ => unreachable!("scroll and draw tasks only"),
                };
                values.push(clamp(x + 0.002 * w * gauss(rng), 0.0, w));
                values.push(clamp(y + 0.002 * h * gauss(rng), 0.0, h));
                values.push(clamp(
                    profile.touch_pressure + 0.06 * (4.0 * PI * phase).sin() + 0.02 * gauss(rng),
                    0.05,
                    0.98,
                ));
            }
            RawSeries::new(timestamps, values, 3).expect("gesture stream is well formed")
        }
    }
}

/// Generates one background sensor stream spanning `span_ms`.
fn sensor_stream<R: Rng>(
    sensor_idx: usize,
    task: TaskKind,
    profile: &SubjectProfile,
    jitter: &SessionJitter,
    rate_hz: u32,
    span_ms: i64,
    informative: bool,
    rng: &mut R,
) -> RawSeries {
    let modality = ModalityKind::BACKGROUND[sensor_idx];
    let cols = modality.raw_columns();
    let step_ms = (1000 / rate_hz) as i64;
    let n = (span_ms / step_ms) as usize + 1;
    let mut timestamps = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * cols);
    for i in 0..n {
        let ts = i as i64 * step_ms;
        timestamps.push(ts);
        let t_s = ts as f64 / 1000.0;
        for axis in 0..cols {
            let base = sensor_base(modality, axis);
            let v = if informative {
                let wave = profile.waves[sensor_idx][axis];
                let amp = wave.amp * jitter.amp_factor[sensor_idx][axis];
                let phase = wave.phase_rad + jitter.phase[sensor_idx][axis] + task_phase(task);
                base + amp * (2.0 * PI * wave.freq_hz * t_s + phase).sin()
                    + 0.3 * amp * (2.0 * PI * 2.3 * wave.freq_hz * t_s + 2.1 * phase).sin()
                    + profile.noise_level * gauss(rng)
            } else {
                base + 0.5 * amp_slot(sensor_idx).center * gauss(rng)
            };
            values.push(v);
        }
    }
    RawSeries::new(timestamps, values, cols).expect("sensor stream is well formed")
}

fn generate_session(
    cfg: &SynthConfig,
    profile: &SubjectProfile,
    subject_idx: usize,
    session_index: u8,
    device: &DeviceMeta,
) -> SessionRecord {
    let mut jitter_rng = seed::derived_rng(
        cfg.seed,
        &format!("synth.session.{subject_idx}.{session_index}"),
    );
    let jitter = sample_jitter(&mut jitter_rng);
    let mut streams = BTreeMap::new();
    for task in TaskKind::ALL {
        let mut rng = seed::derived_rng(
            cfg.seed,
            &format!("synth.stream.{subject_idx}.{session_index}.{}", task.slug()),
        );
        let touch = touch_stream(task, profile, &jitter, device, cfg.session_duration_s, &mut rng);
        let span_ms = *touch.timestamps().last().expect("touch stream is non-empty");
        let mut task_streams = BTreeMap::new();
        task_streams.insert(task.touch_modality(), touch);
        for (sensor_idx, modality) in ModalityKind::BACKGROUND.iter().enumerate() {
            let informative = !cfg.noise_modalities.contains(modality);
            task_streams.insert(
                *modality,
                sensor_stream(
                    sensor_idx,
                    task,
                    profile,
                    &jitter,
                    cfg.sensor_rate_hz,
                    span_ms,
                    informative,
                    &mut rng,
                ),
            );
        }
        streams.insert(task, task_streams);
    }
    SessionRecord {
        subject_id: profile.subject_id.clone(),
        session_index,
        device: device.clone(),
        streams,
    }
}

/// Generates a full dataset plus the ground-truth profiles behind it.
///
/// The output is a pure function of the configuration: the same
/// [`SynthConfig`] always yields bit-identical streams.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthOutput> {
    let profiles = generate_profiles(cfg)?;
    let device = DeviceMeta::new(1080, 1920, "synthdevice".to_string())?;
    let mut dataset = Dataset::new();
    for (subject_idx, profile) in profiles.iter().enumerate() {
        let sessions: Vec<SessionRecord> = (1..=cfg.sessions_per_subject as u8)
            .map(|k| generate_session(cfg, profile, subject_idx, k, &device))
            .collect();
        dataset.insert_subject(sessions)?;
    }
    Ok(SynthOutput { dataset, profiles })
}
