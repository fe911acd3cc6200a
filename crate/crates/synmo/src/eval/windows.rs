//! Sliding-window segmentation of IMU signals.

use ndarray::Array2;

use crate::error::{Result, SynmoError};
use crate::imu::ImuSignal;

/// One fixed-length slice of a signal with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// W×C values; the channel layout is [ax, ay, az, gx, gy, gz].
    pub data: Array2<f64>,
    pub label: String,
    pub source: String,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub window_len: usize,
    pub overlap: f64,
}

/// Cut a signal into windows of `w` samples at stride ⌈w·(1−overlap)⌉.
/// The trailing partial window is dropped; the count is
/// ⌊(len−w)/stride⌋ + 1.
pub fn segment_windows(
    signal: &ImuSignal,
    w: usize,
    overlap: f64,
    label: &str,
    source: &str,
) -> Result<WindowedDataset> {
    if w < 1 {
        return Err(SynmoError::InvalidValue("window length must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(SynmoError::InvalidValue(format!(
            "overlap {overlap} outside [0, 1)"
        )));
    }
    let len = signal.len();
    if len < w {
        return Err(SynmoError::Length(format!(
            "signal has {len} samples, window needs {w}"
        )));
    }
    let stride = ((w as f64) * (1.0 - overlap)).ceil() as usize;
    let stride = stride.max(1);
    let count = (len - w) / stride + 1;
    let mut windows = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        let mut data = Array2::zeros((w, 6));
        for i in 0..w {
            let a = signal.accel[start + i];
            let g = signal.gyro[start + i];
            for c in 0..3 {
                data[[i, c]] = a[c];
                data[[i, 3 + c]] = g[c];
            }
        }
        windows.push(Window {
            data,
            label: label.to_string(),
            source: source.to_string(),
            start,
        });
    }
    Ok(WindowedDataset {
        windows,
        window_len: w,
        overlap,
    })
}

/// Concatenate window sets with the same geometry.
pub fn merge_windows(sets: Vec<WindowedDataset>) -> Result<WindowedDataset> {
    let mut iter = sets.into_iter();
    let mut merged = iter
        .next()
        .ok_or_else(|| SynmoError::Data("no window sets to merge".into()))?;
    for set in iter {
        if set.window_len != merged.window_len {
            return Err(SynmoError::Dimension(format!(
                "window length {} vs {}",
                set.window_len, merged.window_len
            )));
        }
        merged.windows.extend(set.windows);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal_of_len(len: usize) -> ImuSignal {
        ImuSignal {
            accel: (0..len).map(|i| [i as f64, 0.0, 0.0]).collect(),
            gyro: vec![[0.0; 3]; len],
            fps: 20.0,
            placement_name: "t".into(),
        }
    }

    #[test]
    fn hundred_samples_w40_half_overlap() {
        let ds = segment_windows(&signal_of_len(100), 40, 0.5, "x", "s").unwrap();
        assert_eq!(ds.windows.len(), 4);
        let starts: Vec<usize> = ds.windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 20, 40, 60]);
    }

    #[test]
    fn exact_length_yields_one_window() {
        let ds = segment_windows(&signal_of_len(40), 40, 0.5, "x", "s").unwrap();
        assert_eq!(ds.windows.len(), 1);
        assert_eq!(ds.windows[0].start, 0);
    }

    #[test]
    fn zero_overlap_disjoint_windows() {
        let ds = segment_windows(&signal_of_len(120), 40, 0.0, "x", "s").unwrap();
        assert_eq!(ds.windows.len(), 3);
        let starts: Vec<usize> = ds.windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 40, 80]);
    }

    #[test]
    fn count_formula_exact_over_grid() {
        for len in 40..200 {
            for overlap in [0.0, 0.25, 0.5, 0.75] {
                let ds = segment_windows(&signal_of_len(len), 40, overlap, "x", "s").unwrap();
                let stride = ((40.0 * (1.0 - overlap)).ceil() as usize).max(1);
                assert_eq!(ds.windows.len(), (len - 40) / stride + 1, "len {len}");
                // no window reads out of bounds
                for w in &ds.windows {
                    assert!(w.start + 40 <= len);
                    assert_eq!(w.data[[0, 0]], w.start as f64);
                }
            }
        }
    }

    #[test]
    fn short_signal_rejected() {
        assert!(segment_windows(&signal_of_len(39), 40, 0.5, "x", "s").is_err());
    }
}
