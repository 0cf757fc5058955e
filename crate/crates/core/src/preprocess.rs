//! Converts raw streams into per-timestamp feature matrices: variable
//! down-sampling, per-session z-normalization, first/second backward
//! differences, DFT magnitude channels, screen-normalized touch coordinates,
//! and keystroke inter-press features.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{
    estimate_sampling_frequency, DeviceMeta, ModalityKind, RawSeries, SamplingInfo,
    SessionRecord, TaskKind,
};
use crate::error::CoreError;
use crate::math;
use crate::Result;

/// Guard below which a signal is treated as constant and normalized to zeros.
pub const EPS_STD: f64 = 1e-8;

/// Inter-press times are clipped to this many seconds.
pub const MAX_INTER_PRESS_S: f64 = 5.0;

/// Down-sampling ratio derived from the sampling frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownsampleRatio {
    pub d: u32,
}

/// D = 1 below 75 Hz, D = 2 in [75, 150) Hz, D = 4 at 150 Hz and above.
pub fn downsample_ratio(info: SamplingInfo) -> DownsampleRatio {
    debug_assert!(info.f_s > 0.0);
    let d = if info.f_s < 75.0 {
        1
    } else if info.f_s < 150.0 {
        2
    } else {
        4
    };
    DownsampleRatio { d }
}

/// Keeps the first sample of every run of `D` samples (indices 0, D, 2D, ...).
pub fn downsample(series: &RawSeries, ratio: DownsampleRatio) -> RawSeries {
    let d = ratio.d as usize;
    if d <= 1 {
        return series.clone();
    }
    let cols = series.cols();
    let mut timestamps = Vec::with_capacity(series.len().div_ceil(d));
    let mut values = Vec::with_capacity(timestamps.capacity() * cols);
    for t in (0..series.len()).step_by(d) {
        timestamps.push(series.timestamps()[t]);
        values.extend_from_slice(series.row(t));
    }
    RawSeries::new(timestamps, values, cols).expect("downsample preserves series invariants")
}

/// Z-normalizes with the population standard deviation; constant signals
/// (std <= EPS_STD) map to all zeros.
pub fn znorm(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let var = signal.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let std = math::sqrt(var);
    if std <= EPS_STD {
        return vec![0.0; n];
    }
    signal.iter().map(|&x| (x - mean) / std).collect()
}

/// Backward difference with d[0] = 0; order 2 applies the rule twice.
pub fn derivative(signal: &[f64], order: u8) -> Vec<f64> {
    debug_assert!(order == 1 || order == 2);
    let mut out = Vec::with_capacity(signal.len());
    out.push(0.0);
    for t in 1..signal.len() {
        out.push(signal[t] - signal[t - 1]);
    }
    if order == 2 {
        return derivative(&out, 1);
    }
    out
}

/// Magnitude of the length-T discrete Fourier transform:
/// entry k = |sum_t s[t] * exp(-2*pi*i*k*t/T)|.
pub fn fft_magnitude(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let step = core::f64::consts::TAU / n as f64;
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let a = step * j as f64;
            (math::cos(a), math::sin(a))
        })
        .collect();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &s) in signal.iter().enumerate() {
                let (c, w) = twiddle[(k * t) % n];
                re += s * c;
                im -= s * w;
            }
            math::hypot(re, im)
        })
        .collect()
}

/// A `[rows x cols]` per-timestamp feature matrix for one modality, stored
/// row-major. Column order follows `ModalityKind::channel_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    modality: ModalityKind,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Assembles a matrix from per-channel columns of equal length, in
    /// `ModalityKind::channel_labels` order.
    pub fn from_columns(modality: ModalityKind, columns: &[Vec<f64>]) -> Result<Self> {
        let labels = modality.channel_labels();
        if columns.len() != labels.len() || columns.is_empty() {
            return Err(CoreError::DimensionMismatch(alloc::format!(
                "{modality} needs {} feature columns, got {}",
                labels.len(),
                columns.len()
            )));
        }
        if columns.iter().any(|c| c.len() != columns[0].len()) {
            return Err(CoreError::DimensionMismatch(String::from(
                "feature columns have unequal lengths",
            )));
        }
        let rows = columns[0].len();
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for col in columns {
                data.push(col[t]);
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidSeries(String::from(
                "feature matrix contains NaN or infinity",
            )));
        }
        Ok(FeatureMatrix {
            modality,
            rows,
            cols,
            data,
        })
    }

    pub fn modality(&self) -> ModalityKind {
        self.modality
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self.data[t * self.cols + c]).collect()
    }
}

impl ModalityKind {
    /// Ordered channel labels of this modality's feature matrix. Part of the
    /// model-file contract.
    pub fn channel_labels(self) -> &'static [&'static str] {
        match self {
            ModalityKind::GravitySensor => &["v", "v'", "v''", "fft_v"],
            ModalityKind::TouchKeystroke => &["inter_press_time", "normalized_keycode"],
            m if m.is_background() => &[
                "x", "y", "z", "x'", "y'", "z'", "x''", "y''", "z''", "fft_x", "fft_y", "fft_z",
            ],
            _ => &[
                "x", "y", "p", "x'", "y'", "p'", "x''", "y''", "p''", "fft_x", "fft_y", "fft_p",
            ],
        }
    }

    /// Number of feature channels (12 triaxial/touch, 4 gravity, 2 keystroke).
    pub fn feature_columns(self) -> usize {
        self.channel_labels().len()
    }

    /// Number of leading base channels whose spectra form the trailing FFT
    /// channels (0 for keystroke, which has none).
    pub fn fft_base_channels(self) -> usize {
        match self {
            ModalityKind::TouchKeystroke => 0,
            ModalityKind::GravitySensor => 1,
            _ => 3,
        }
    }
}

/// Stacks base channels with their derivatives and spectra in canonical order:
/// all bases, all first derivatives, all second derivatives, all spectra.
fn assemble(modality: ModalityKind, bases: Vec<Vec<f64>>) -> Result<FeatureMatrix> {
    let mut columns = Vec::with_capacity(modality.feature_columns());
    columns.extend(bases.iter().cloned());
    for base in &bases {
        columns.push(derivative(base, 1));
    }
    for base in &bases {
        columns.push(derivative(base, 2));
    }
    for base in &bases {
        columns.push(fft_magnitude(base));
    }
    FeatureMatrix::from_columns(modality, &columns)
}

/// Builds features for a background sensor: downsample, per-axis znorm, then
/// derivatives and spectra of the normalized axes.
pub fn build_background_features(
    series: &RawSeries,
    kind: ModalityKind,
    info: SamplingInfo,
) -> Result<FeatureMatrix> {
    debug_assert!(kind.is_background());
    let ds = downsample(series, downsample_ratio(info));
    let bases: Vec<Vec<f64>> = (0..ds.cols()).map(|c| znorm(&ds.column(c))).collect();
    assemble(kind, bases)
}

/// Builds features for a scroll/draw/tap stream: x and y divided by the
/// screen dimensions, znorm(p), then derivatives and spectra. No downsampling.
pub fn build_touch_features(
    series: &RawSeries,
    kind: ModalityKind,
    device: &DeviceMeta,
) -> Result<FeatureMatrix> {
    debug_assert!(kind.is_touch() && kind != ModalityKind::TouchKeystroke);
    if device.screen_width == 0 || device.screen_height == 0 {
        return Err(CoreError::InvalidDevice(String::from(
            "screen dimensions must be positive",
        )));
    }
    let w = device.screen_width as f64;
    let h = device.screen_height as f64;
    let bases = vec![
        series.column(0).iter().map(|&x| x / w).collect(),
        series.column(1).iter().map(|&y| y / h).collect(),
        znorm(&series.column(2)),
    ];
    assemble(kind, bases)
}

/// Builds keystroke features: inter-press time in seconds (0 for the first
/// press, clipped to [0, 5]) and keycode / 255.
pub fn build_keystroke_features(series: &RawSeries) -> Result<FeatureMatrix> {
    let ts = series.timestamps();
    let mut inter = Vec::with_capacity(series.len());
    inter.push(0.0);
    for t in 1..series.len() {
        let dt = (ts[t] - ts[t - 1]) as f64 / 1000.0;
        inter.push(dt.clamp(0.0, MAX_INTER_PRESS_S));
    }
    let mut codes = Vec::with_capacity(series.len());
    for &k in &series.column(0) {
        if !(0.0..=255.0).contains(&k) {
            return Err(CoreError::InvalidKeycode(k));
        }
        codes.push(k / 255.0);
    }
    FeatureMatrix::from_columns(ModalityKind::TouchKeystroke, &[inter, codes])
}

/// Builds the feature matrix of one modality within one session. Touch
/// modalities use their own task's stream directly; background sensors are
/// first clipped to the time range spanned by the task's touch stream, with
/// the sampling frequency estimated on the clipped samples.
pub fn session_features(
    record: &SessionRecord,
    task: TaskKind,
    modality: ModalityKind,
) -> Result<FeatureMatrix> {
    if let Some(owner) = modality.task() {
        if owner != task {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "modality {modality} belongs to task {owner}, not {task}"
            )));
        }
        let series = record.stream(task, modality).ok_or_else(|| {
            CoreError::NoUsableData(alloc::format!(
                "subject {} session {} has no {modality} stream",
                record.subject_id,
                record.session_index
            ))
        })?;
        if series.is_all_zeros() {
            return Err(CoreError::NoUsableData(alloc::format!(
                "subject {} session {} {modality} stream is all zeros",
                record.subject_id,
                record.session_index
            )));
        }
        return match modality {
            ModalityKind::TouchKeystroke => build_keystroke_features(series),
            _ => build_touch_features(series, modality, &record.device),
        };
    }

    let touch = record.stream(task, task.touch_modality()).ok_or_else(|| {
        CoreError::NoUsableData(alloc::format!(
            "subject {} session {} has no touch stream for task {task}",
            record.subject_id,
            record.session_index
        ))
    })?;
    let sensor = record.stream(task, modality).ok_or_else(|| {
        CoreError::NoUsableData(alloc::format!(
            "subject {} session {} has no {modality} stream during task {task}",
            record.subject_id,
            record.session_index
        ))
    })?;
    let ts = touch.timestamps();
    let clipped = sensor
        .clip_to_time_range(ts[0], ts[ts.len() - 1])
        .ok_or_else(|| {
            CoreError::NoUsableData(alloc::format!(
                "no {modality} samples inside the {task} touch time range"
            ))
        })?;
    let info = estimate_sampling_frequency(&clipped)?;
    build_background_features(&clipped, modality, info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;
    use alloc::string::ToString;
    use approx::assert_abs_diff_eq;

    fn info(f_s: f64) -> SamplingInfo {
        SamplingInfo { f_s }
    }

    fn series(cols: usize, values: Vec<f64>) -> RawSeries {
        let n = values.len() / cols;
        let ts: Vec<i64> = (0..n as i64).map(|t| t * 10).collect();
        RawSeries::new(ts, values, cols).unwrap()
    }

    /// Independent mean/std via Welford's algorithm, for cross-checking znorm.
    fn welford(xs: &[f64]) -> (f64, f64) {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        (mean, (m2 / xs.len() as f64).sqrt())
    }

    #[test]
    fn ratio_rule_and_boundaries() {
        assert_eq!(downsample_ratio(info(50.0)).d, 1);
        assert_eq!(downsample_ratio(info(100.0)).d, 2);
        assert_eq!(downsample_ratio(info(200.0)).d, 4);
        assert_eq!(downsample_ratio(info(74.99)).d, 1);
        assert_eq!(downsample_ratio(info(75.0)).d, 2);
        assert_eq!(downsample_ratio(info(149.99)).d, 2);
        assert_eq!(downsample_ratio(info(150.0)).d, 4);
    }

    #[test]
    fn downsample_takes_first_of_every_run() {
        let s = series(1, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let d2 = downsample(&s, DownsampleRatio { d: 2 });
        assert_eq!(d2.column(0), vec![1.0, 3.0, 5.0]);
        assert_eq!(d2.timestamps(), &[0, 20, 40]);

        let d1 = downsample(&s, DownsampleRatio { d: 1 });
        assert_eq!(d1, s);

        let s8 = series(1, (1..=8).map(f64::from).collect());
        let d4 = downsample(&s8, DownsampleRatio { d: 4 });
        assert_eq!(d4.column(0), vec![1.0, 5.0]);
    }

    #[test]
    fn znorm_population_std() {
        let out = znorm(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(out[0], -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2], 1.224744871391589, epsilon = 1e-12);

        let (mean, std) = welford(&out);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(std, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn znorm_constant_guard_and_idempotence() {
        assert_eq!(znorm(&[5.0, 5.0, 5.0, 5.0]), vec![0.0; 4]);
        let once = znorm(&[0.3, -1.2, 4.0, 0.0, 2.2]);
        let twice = znorm(&once);
        for (a, b) in once.iter().zip(&twice) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn derivative_backward_difference() {
        assert_eq!(derivative(&[1.0, 3.0, 6.0], 1), vec![0.0, 2.0, 3.0]);
        assert_eq!(derivative(&[1.0, 3.0, 6.0], 2), vec![0.0, 2.0, 1.0]);
        assert_eq!(derivative(&[4.0, 4.0, 4.0, 4.0], 1), vec![0.0; 4]);
        assert_eq!(derivative(&[7.0], 1), vec![0.0]);
    }

    #[test]
    fn fft_magnitude_known_signals() {
        let dc = fft_magnitude(&[1.0, 1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(dc[0], 4.0, epsilon = 1e-9);
        for &m in &dc[1..] {
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-9);
        }

        let cosine = fft_magnitude(&[1.0, 0.0, -1.0, 0.0]);
        let expected = [0.0, 2.0, 0.0, 2.0];
        for (m, e) in cosine.iter().zip(expected) {
            assert_abs_diff_eq!(m, &e, epsilon = 1e-9);
        }

        assert_eq!(fft_magnitude(&[0.0; 8]), vec![0.0; 8]);
    }

    #[test]
    fn fft_energy_identity() {
        let signal: Vec<f64> = (0..150)
            .map(|t| (t as f64 * 0.37).sin() + 0.25 * (t as f64 * 1.91).cos())
            .collect();
        let spec = fft_magnitude(&signal);
        let spectral: f64 = spec.iter().map(|m| m * m).sum();
        let time: f64 = signal.iter().map(|s| s * s).sum();
        let expected = signal.len() as f64 * time;
        assert!((spectral - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn background_triaxial_shape() {
        let s = series(3, (0..900).map(|v| (v as f64 * 0.01).sin()).collect());
        let fm = build_background_features(&s, ModalityKind::Accelerometer, info(100.0)).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (150, 12));
    }

    #[test]
    fn background_gravity_shape() {
        let s = series(1, (0..100).map(|v| v as f64 * 0.1).collect());
        let fm = build_background_features(&s, ModalityKind::GravitySensor, info(50.0)).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (100, 4));
        assert_eq!(fm.modality().channel_labels(), &["v", "v'", "v''", "fft_v"]);
    }

    #[test]
    fn background_constant_series_zeroes_out() {
        let s = series(3, vec![9.81; 90]);
        let fm = build_background_features(&s, ModalityKind::Accelerometer, info(50.0)).unwrap();
        assert!(fm.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn touch_features_scale_and_shape() {
        let device = DeviceMeta::new(1080, 1920, "t".to_string()).unwrap();
        let mut values = Vec::new();
        for t in 0..40 {
            values.extend_from_slice(&[540.0, 960.0 + t as f64, 0.4 + 0.01 * t as f64]);
        }
        let s = series(3, values);
        let fm = build_touch_features(&s, ModalityKind::TouchScrollUp, &device).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (40, 12));
        assert_abs_diff_eq!(fm.row(0)[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn touch_constant_pressure_zeroes_p_channels() {
        let device = DeviceMeta::new(1000, 2000, "t".to_string()).unwrap();
        let mut values = Vec::new();
        for t in 0..20 {
            values.extend_from_slice(&[t as f64 * 10.0, t as f64 * 20.0, 0.7]);
        }
        let s = series(3, values);
        let fm = build_touch_features(&s, ModalityKind::TouchTap, &device).unwrap();
        for (c, label) in fm.modality().channel_labels().iter().enumerate() {
            if label.contains('p') {
                assert!(fm.column(c).iter().all(|&v| v == 0.0), "channel {label}");
            }
        }
    }

    #[test]
    fn keystroke_features_example() {
        let s = RawSeries::new(vec![0, 200, 500], vec![72.0, 105.0, 33.0], 1).unwrap();
        let fm = build_keystroke_features(&s).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (3, 2));
        let expected = [(0.0, 0.2824), (0.2, 0.4118), (0.3, 0.1294)];
        for (t, (ipt, code)) in expected.iter().enumerate() {
            assert_abs_diff_eq!(fm.row(t)[0], ipt, epsilon = 1e-12);
            assert_abs_diff_eq!(fm.row(t)[1], code, epsilon = 5e-5);
        }
    }

    #[test]
    fn keystroke_single_press_and_clipping() {
        let one = RawSeries::new(vec![123], vec![65.0], 1).unwrap();
        let fm = build_keystroke_features(&one).unwrap();
        assert_eq!(fm.row(0), &[0.0, 65.0 / 255.0]);

        let gap = RawSeries::new(vec![0, 12_000], vec![65.0, 66.0], 1).unwrap();
        let fm = build_keystroke_features(&gap).unwrap();
        assert_eq!(fm.row(1)[0], 5.0);
    }

    #[test]
    fn keystroke_rejects_bad_keycode() {
        let s = RawSeries::new(vec![0, 100], vec![65.0, 256.0], 1).unwrap();
        assert!(matches!(
            build_keystroke_features(&s),
            Err(CoreError::InvalidKeycode(_))
        ));
    }

    #[test]
    fn channel_counts_per_modality() {
        for m in ModalityKind::ALL {
            let expect = match m {
                ModalityKind::GravitySensor => 4,
                ModalityKind::TouchKeystroke => 2,
                _ => 12,
            };
            assert_eq!(m.feature_columns(), expect, "{m}");
        }
        let _ = TaskKind::ALL;
    }

    fn session_fixture() -> SessionRecord {
        use alloc::collections::BTreeMap;
        let device = DeviceMeta::new(1080, 1920, "fixture".to_string()).unwrap();
        let mut per_task = BTreeMap::new();
        // Keystroke touch stream: 20 presses, 100 ms apart, spanning 100..2000.
        let key_ts: Vec<i64> = (1..=20).map(|t| t * 100).collect();
        let keycodes: Vec<f64> = (0..20).map(|k| (60 + k % 10) as f64).collect();
        per_task.insert(
            ModalityKind::TouchKeystroke,
            RawSeries::new(key_ts, keycodes, 1).unwrap(),
        );
        // Accelerometer at 100 Hz spanning 0..2500: samples outside the touch
        // range must be clipped away.
        let acc_ts: Vec<i64> = (0..=250).map(|t| t * 10).collect();
        let acc_values: Vec<f64> = (0..=250)
            .flat_map(|t| {
                let x = math::sin(t as f64 / 7.0);
                [x, 0.5 * x + 0.1, -x]
            })
            .collect();
        per_task.insert(
            ModalityKind::Accelerometer,
            RawSeries::new(acc_ts, acc_values, 3).unwrap(),
        );
        let mut streams = BTreeMap::new();
        streams.insert(TaskKind::Keystroke, per_task);
        SessionRecord {
            subject_id: "u1".to_string(),
            session_index: 1,
            device,
            streams,
        }
    }

    #[test]
    fn session_features_for_touch_modality() {
        let record = session_fixture();
        let fm = session_features(&record, TaskKind::Keystroke, ModalityKind::TouchKeystroke)
            .unwrap();
        assert_eq!((fm.rows(), fm.cols()), (20, 2));
        assert_abs_diff_eq!(fm.row(1)[0], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn session_features_clips_background_to_touch_range() {
        let record = session_fixture();
        let fm =
            session_features(&record, TaskKind::Keystroke, ModalityKind::Accelerometer).unwrap();
        // Touch range is [100, 2000]: 191 of the 251 sensor samples survive;
        // 100 Hz lands in [75, 150) so D = 2 keeps ceil(191/2) = 96 rows.
        assert_eq!((fm.rows(), fm.cols()), (96, 12));
    }

    #[test]
    fn session_features_reports_missing_streams() {
        let record = session_fixture();
        assert!(matches!(
            session_features(&record, TaskKind::Keystroke, ModalityKind::Gyroscope),
            Err(CoreError::NoUsableData(_))
        ));
        assert!(matches!(
            session_features(&record, TaskKind::Tap, ModalityKind::TouchKeystroke),
            Err(CoreError::InvalidConfig(_))
        ));
        assert!(matches!(
            session_features(&record, TaskKind::Tap, ModalityKind::Accelerometer),
            Err(CoreError::NoUsableData(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ratio_is_step_function(f_s in 0.01f64..300.0) {
                let d = downsample_ratio(info(f_s)).d;
                let expect = if f_s < 75.0 { 1 } else if f_s < 150.0 { 2 } else { 4 };
                prop_assert_eq!(d, expect);
            }

            #[test]
            fn parseval_energy_identity(signal in prop::collection::vec(-10.0f64..10.0, 1..64)) {
                let spec = fft_magnitude(&signal);
                let spectral: f64 = spec.iter().map(|m| m * m).sum();
                let time: f64 = signal.iter().map(|s| s * s).sum();
                let expected = signal.len() as f64 * time;
                let tol = 1e-9 * expected.max(1.0);
                prop_assert!((spectral - expected).abs() <= tol);
            }

            #[test]
            fn znorm_is_standardizing(signal in prop::collection::vec(-100.0f64..100.0, 2..80)) {
                let out = znorm(&signal);
                let n = out.len() as f64;
                let mean = out.iter().sum::<f64>() / n;
                let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                let input_std = {
                    let m = signal.iter().sum::<f64>() / n;
                    (signal.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
                };
                if input_std > EPS_STD {
                    prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
                } else {
                    prop_assert!(out.iter().all(|&v| v == 0.0));
                }
            }

            #[test]
            fn derivative_of_ramp_is_constant(len in 2usize..50, slope in -5.0f64..5.0) {
                let ramp: Vec<f64> = (0..len).map(|t| slope * t as f64).collect();
                let d = derivative(&ramp, 1);
                prop_assert_eq!(d[0], 0.0);
                for &v in &d[1..] {
                    prop_assert!((v - slope).abs() < 1e-9);
                }
            }
        }
    }
}
