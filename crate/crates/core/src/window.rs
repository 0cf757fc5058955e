//! Fixed-length window extraction from feature matrices: random offsets for
//! training, overlapped strides for enrollment, zero-padding for short
//! sequences, and per-window recomputation of the spectral channels.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngExt};

use crate::data::ModalityKind;
use crate::error::CoreError;
use crate::preprocess::{fft_magnitude, FeatureMatrix};
use crate::Result;

/// Window length and enrollment overlap for one modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowSpec {
    pub m: usize,
    pub overlap: usize,
}

impl WindowSpec {
    pub fn new(m: usize, overlap: usize) -> Result<Self> {
        if m == 0 || overlap >= m {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "window spec needs 0 <= overlap < M, got M={m} overlap={overlap}"
            )));
        }
        Ok(WindowSpec { m, overlap })
    }

    pub fn stride(&self) -> usize {
        self.m - self.overlap
    }
}

/// Default window geometry: background sensors use 150 samples with a
/// 50-sample enrollment overlap; scrolls and draw use 100; tap 15;
/// keystroke 60. Touch tasks never overlap (one enrollment window each).
pub fn window_spec_for(modality: ModalityKind) -> WindowSpec {
    let (m, overlap) = match modality {
        m if m.is_background() => (150, 50),
        ModalityKind::TouchScrollUp | ModalityKind::TouchScrollDown => (100, 0),
        ModalityKind::TouchDraw8 => (100, 0),
        ModalityKind::TouchTap => (15, 0),
        _ => (60, 0),
    };
    WindowSpec { m, overlap }
}

/// Per-modality overrides of the default window geometry; unlisted
/// modalities keep `window_spec_for`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowOverrides {
    overrides: BTreeMap<ModalityKind, WindowSpec>,
}

impl WindowOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, modality: ModalityKind, spec: WindowSpec) {
        self.overrides.insert(modality, spec);
    }

    pub fn spec_for(&self, modality: ModalityKind) -> WindowSpec {
        self.overrides
            .get(&modality)
            .copied()
            .unwrap_or_else(|| window_spec_for(modality))
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModalityKind, WindowSpec)> + '_ {
        self.overrides.iter().map(|(&m, &s)| (m, s))
    }
}

/// One M-row window of a feature matrix. Rows past `valid_rows` are zero in
/// the time-domain channels; the trailing FFT channels are recomputed over
/// the padded window, so they reflect the padded length-M spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    modality: ModalityKind,
    m: usize,
    cols: usize,
    valid_rows: usize,
    data: Vec<f64>,
}

impl FeatureWindow {
    pub fn modality(&self) -> ModalityKind {
        self.modality
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of rows that came from real data (the rest is padding).
    pub fn valid_rows(&self) -> usize {
        self.valid_rows
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// Builds a window directly from raw data; used by model inference on
    /// externally supplied matrices.
    pub fn from_raw(modality: ModalityKind, m: usize, data: Vec<f64>) -> Result<Self> {
        let cols = modality.feature_columns();
        if m == 0 || data.len() != m * cols {
            return Err(CoreError::DimensionMismatch(alloc::format!(
                "window data length {} does not match {m} rows x {cols} cols",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidSeries(String::from(
                "window contains NaN or infinity",
            )));
        }
        Ok(FeatureWindow {
            modality,
            m,
            cols,
            valid_rows: m,
            data,
        })
    }
}

/// Copies rows `[start, start+m)` of `fm`, zero-padding past the end, and
/// recomputes the spectral channels over the padded window.
fn slice_window(fm: &FeatureMatrix, start: usize, m: usize) -> FeatureWindow {
    let cols = fm.cols();
    let valid_rows = fm.rows().saturating_sub(start).min(m);
    let mut data = vec![0.0; m * cols];
    for t in 0..valid_rows {
        data[t * cols..(t + 1) * cols].copy_from_slice(fm.row(start + t));
    }
    let nb = fm.modality().fft_base_channels();
    for b in 0..nb {
        let base: Vec<f64> = (0..m).map(|t| data[t * cols + b]).collect();
        let spectrum = fft_magnitude(&base);
        let dst = cols - nb + b;
        for t in 0..m {
            data[t * cols + dst] = spectrum[t];
        }
    }
    FeatureWindow {
        modality: fm.modality(),
        m,
        cols,
        valid_rows,
        data,
    }
}

/// Extracts one training window at a uniformly random start index. Sequences
/// shorter than M are taken whole and zero-padded.
pub fn extract_random_window<R: Rng>(
    fm: &FeatureMatrix,
    spec: WindowSpec,
    rng: &mut R,
) -> Result<FeatureWindow> {
    if fm.rows() == 0 {
        return Err(CoreError::EmptySequence(String::from(
            "cannot window an empty feature matrix",
        )));
    }
    let start = if fm.rows() >= spec.m {
        rng.random_range(0..=fm.rows() - spec.m)
    } else {
        0
    };
    Ok(slice_window(fm, start, spec.m))
}

/// Extracts enrollment windows: touch tasks yield exactly one window starting
/// at row 0; background sensors yield strided windows (stride = M − overlap)
/// starting at 0, keeping a zero-padded trailing window when data remains.
pub fn extract_enrollment_windows(fm: &FeatureMatrix, spec: WindowSpec) -> Result<Vec<FeatureWindow>> {
    if fm.rows() == 0 {
        return Err(CoreError::EmptySequence(String::from(
            "cannot window an empty feature matrix",
        )));
    }
    if fm.modality().is_touch() {
        return Ok(vec![slice_window(fm, 0, spec.m)]);
    }
    let count = enrollment_window_count(fm.rows(), spec);
    Ok((0..count)
        .map(|k| slice_window(fm, k * spec.stride(), spec.m))
        .collect())
}

/// Closed-form enrollment window count for a background sequence of length
/// `t_prime`: ceil((T' − overlap) / stride), with a minimum of one window.
pub fn enrollment_window_count(t_prime: usize, spec: WindowSpec) -> usize {
    if t_prime <= spec.overlap {
        1
    } else {
        (t_prime - spec.overlap).div_ceil(spec.stride())
    }
}

/// Mean and standard deviation of per-subject-per-modality enrollment window
/// counts for one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mean_windows: f64,
    pub std_windows: f64,
}

impl WindowStats {
    /// Population statistics over the pooled counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(CoreError::EmptySequence(String::from(
                "window statistics need at least one count",
            )));
        }
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var = counts
            .iter()
            .map(|&c| (c as f64 - mean) * (c as f64 - mean))
            .sum::<f64>()
            / n;
        Ok(WindowStats {
            mean_windows: mean,
            std_windows: crate::math::sqrt(var),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RawSeries, SamplingInfo};
    use crate::preprocess::build_background_features;
    use crate::seed;
    use approx::assert_abs_diff_eq;

    fn background_matrix(rows: usize) -> FeatureMatrix {
        // f_s = 50 keeps D = 1, so the matrix length equals the raw length.
        let ts: Vec<i64> = (0..rows as i64).map(|t| t * 20).collect();
        let values: Vec<f64> = (0..rows * 3).map(|v| (v as f64 * 0.13).sin()).collect();
        let series = RawSeries::new(ts, values, 3).unwrap();
        build_background_features(&series, ModalityKind::Accelerometer, SamplingInfo { f_s: 50.0 })
            .unwrap()
    }

    fn touch_matrix(rows: usize) -> FeatureMatrix {
        let ts: Vec<i64> = (0..rows as i64).map(|t| t * 20).collect();
        let mut values = Vec::new();
        for t in 0..rows {
            values.extend_from_slice(&[
                500.0 + (t as f64 * 0.3).sin() * 100.0,
                900.0 + (t as f64 * 0.2).cos() * 200.0,
                0.5 + 0.001 * t as f64,
            ]);
        }
        let series = RawSeries::new(ts, values, 3).unwrap();
        let device = crate::data::DeviceMeta::new(1080, 1920, "t".into()).unwrap();
        crate::preprocess::build_touch_features(&series, ModalityKind::TouchScrollUp, &device)
            .unwrap()
    }

    #[test]
    fn default_specs() {
        for m in ModalityKind::BACKGROUND {
            assert_eq!(window_spec_for(m), WindowSpec { m: 150, overlap: 50 });
        }
        assert_eq!(window_spec_for(ModalityKind::TouchScrollUp).m, 100);
        assert_eq!(window_spec_for(ModalityKind::TouchScrollDown).m, 100);
        assert_eq!(window_spec_for(ModalityKind::TouchDraw8).m, 100);
        assert_eq!(window_spec_for(ModalityKind::TouchTap).m, 15);
        assert_eq!(window_spec_for(ModalityKind::TouchKeystroke).m, 60);
    }

    #[test]
    fn forced_window_reproduces_matrix() {
        let fm = background_matrix(150);
        let spec = WindowSpec { m: 150, overlap: 50 };
        let mut rng = seed::rng_from_seed(1);
        let w = extract_random_window(&fm, spec, &mut rng).unwrap();
        assert_eq!(w.valid_rows(), 150);
        for (a, b) in w.data().iter().zip(fm.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn short_sequence_pads_time_channels() {
        let fm = touch_matrix(40);
        let spec = WindowSpec { m: 100, overlap: 0 };
        let mut rng = seed::rng_from_seed(2);
        let w = extract_random_window(&fm, spec, &mut rng).unwrap();
        assert_eq!((w.m(), w.valid_rows()), (100, 40));
        let nb = fm.modality().fft_base_channels();
        for t in 40..100 {
            for c in 0..w.cols() - nb {
                assert_eq!(w.row(t)[c], 0.0);
            }
        }
        // Spectral channels are recomputed over the padded window.
        let base: Vec<f64> = (0..100).map(|t| w.row(t)[0]).collect();
        let spectrum = crate::preprocess::fft_magnitude(&base);
        for t in 0..100 {
            assert_abs_diff_eq!(w.row(t)[9], spectrum[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn random_start_is_uniform() {
        let fm = background_matrix(300);
        let spec = WindowSpec { m: 150, overlap: 50 };
        let mut rng = seed::rng_from_seed(7);
        let draws = 6000;
        let bins = 151;
        let mut histogram = vec![0usize; bins];
        for _ in 0..draws {
            let w = extract_random_window(&fm, spec, &mut rng).unwrap();
            // Recover the start index by matching the first row against the source.
            let start = (0..bins)
                .find(|&s| {
                    fm.row(s)
                        .iter()
                        .take(9)
                        .zip(w.row(0))
                        .all(|(a, b)| (a - b).abs() < 1e-12)
                })
                .expect("window row must come from the source matrix");
            histogram[start] += 1;
        }
        let expected = draws as f64 / bins as f64;
        let chi2: f64 = histogram
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // Wilson-Hilferty upper 0.99 quantile of chi-squared with k dof.
        let k = (bins - 1) as f64;
        let z = 2.3263478740408408;
        let critical = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
        assert!(chi2 < critical, "chi2 {chi2:.1} >= critical {critical:.1}");
        assert!(histogram.iter().all(|&c| c > 0));
    }

    #[test]
    fn random_extraction_is_reproducible() {
        let fm = background_matrix(400);
        let spec = WindowSpec { m: 150, overlap: 50 };
        let mut a = seed::rng_from_seed(9);
        let mut b = seed::rng_from_seed(9);
        for _ in 0..20 {
            let wa = extract_random_window(&fm, spec, &mut a).unwrap();
            let wb = extract_random_window(&fm, spec, &mut b).unwrap();
            assert_eq!(wa, wb);
        }
    }

    #[test]
    fn enrollment_stride_arithmetic() {
        let fm = background_matrix(350);
        let spec = WindowSpec { m: 150, overlap: 50 };
        let windows = extract_enrollment_windows(&fm, spec).unwrap();
        assert_eq!(windows.len(), 3);
        for w in &windows {
            assert_eq!(w.m(), 150);
        }
        assert_eq!(windows[0].valid_rows(), 150);
        assert_eq!(windows[1].valid_rows(), 150);
        assert_eq!(windows[2].valid_rows(), 150);
        // Starts are 0, 100, 200: check row identity against the source.
        for (k, w) in windows.iter().enumerate() {
            for c in 0..9 {
                assert_abs_diff_eq!(w.row(0)[c], fm.row(k * 100)[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn enrollment_touch_single_window() {
        let fm = touch_matrix(260);
        let spec = window_spec_for(ModalityKind::TouchScrollUp);
        let windows = extract_enrollment_windows(&fm, spec).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].m(), 100);
        assert_eq!(windows[0].valid_rows(), 100);
    }

    #[test]
    fn enrollment_short_background_pads() {
        let fm = background_matrix(80);
        let spec = WindowSpec { m: 150, overlap: 50 };
        let windows = extract_enrollment_windows(&fm, spec).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].valid_rows(), 80);
    }

    #[test]
    fn empty_matrix_rejected() {
        let fm = background_matrix(10);
        let spec = WindowSpec { m: 0, overlap: 0 };
        assert!(WindowSpec::new(spec.m, spec.overlap).is_err());
        assert!(WindowSpec::new(100, 100).is_err());
        let _ = fm;
    }

    #[test]
    fn window_stats_from_counts() {
        let stats = WindowStats::from_counts(&[2, 4, 6]).unwrap();
        assert_abs_diff_eq!(stats.mean_windows, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.std_windows, (8.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert!(WindowStats::from_counts(&[]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn count_formula_matches_extraction(t_prime in 1usize..400) {
                let fm = background_matrix(t_prime);
                let spec = WindowSpec { m: 150, overlap: 50 };
                let windows = extract_enrollment_windows(&fm, spec).unwrap();
                prop_assert_eq!(windows.len(), enrollment_window_count(t_prime, spec));
                for w in &windows {
                    prop_assert_eq!(w.m(), 150);
                }
            }

            #[test]
            fn random_windows_have_m_rows(t_prime in 1usize..320, seed in 0u64..64) {
                let fm = background_matrix(t_prime);
                let spec = WindowSpec { m: 150, overlap: 50 };
                let mut rng = seed::rng_from_seed(seed);
                let w = extract_random_window(&fm, spec, &mut rng).unwrap();
                prop_assert_eq!(w.m(), 150);
                prop_assert_eq!(w.data().len(), 150 * w.cols());
                prop_assert!(w.valid_rows() == t_prime.min(150));
            }
        }
    }
}
