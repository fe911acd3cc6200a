//! Fixed 22-feature descriptor per signal axis.
//!
//! The set covers location, spread, roughness, autocorrelation structure,
//! and spectral shape, and is defined (with fallbacks) for constant
//! windows so every output is finite. Order is part of the contract:
//!
//!  0 mean                      11 autocorrelation lag 1
//!  1 standard deviation        12 autocorrelation lag 5
//!  2 minimum                   13 autocorrelation lag 10
//!  3 maximum                   14 first lag with autocorr < 1/e
//!  4 median                    15 dominant DFT frequency (cycles/window)
//!  5 interquartile range       16 dominant DFT amplitude fraction
//!  6 root mean square          17 spectral centroid (cycles/window)
//!  7 mean |first difference|   18 spectral entropy (8 bands, normalized)
//!  8 mean |second difference|  19 longest run above the mean
//!  9 zero-crossing rate        20 count of local maxima
//! 10 signal line length        21 skewness proxy (mean−median)/std

use ndarray::{Array2, ArrayView1};

use crate::error::{Result, SynmoError};

pub const FEATURES_PER_AXIS: usize = 22;

/// 66-dimensional feature vector of a W×3 window: 22 features per axis,
/// concatenated in axis order.
pub fn extract_features(window: &Array2<f64>) -> Result<Vec<f64>> {
    let (w, c) = window.dim();
    if c != 3 {
        return Err(SynmoError::Dimension(format!(
            "feature extraction expects 3 axes, got {c}"
        )));
    }
    if w < 4 {
        return Err(SynmoError::Length(format!(
            "feature extraction needs W >= 4, got {w}"
        )));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(SynmoError::InvalidValue(
            "window contains non-finite values".into(),
        ));
    }
    let mut out = Vec::with_capacity(3 * FEATURES_PER_AXIS);
    for axis in 0..3 {
        out.extend_from_slice(&axis_features(window.column(axis)));
    }
    Ok(out)
}

/// The 22 features of a single axis (see the module docs for order).
pub fn axis_features(x: ArrayView1<f64>) -> [f64; FEATURES_PER_AXIS] {
    let w = x.len();
    let n = w as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let median = quantile(&sorted, 0.5);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);

    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();

    let mut abs_d1 = 0.0;
    let mut line_length = 0.0;
    for i in 0..w - 1 {
        let d = x[i + 1] - x[i];
        abs_d1 += d.abs();
        line_length += d.abs();
    }
    let mean_abs_d1 = abs_d1 / (w - 1) as f64;

    let mut abs_d2 = 0.0;
    for i in 0..w - 2 {
        abs_d2 += (x[i + 2] - 2.0 * x[i + 1] + x[i]).abs();
    }
    let mean_abs_d2 = abs_d2 / (w - 2) as f64;

    // zero crossings of the mean-removed signal
    let mut crossings = 0usize;
    for i in 0..w - 1 {
        let a = x[i] - mean;
        let b = x[i + 1] - mean;
        if (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0) {
            crossings += 1;
        }
    }
    let zcr = crossings as f64 / (w - 1) as f64;

    let ac1 = autocorr(&x, mean, var, 1);
    let ac5 = autocorr(&x, mean, var, 5);
    let ac10 = autocorr(&x, mean, var, 10);
    let inv_e = 1.0 / std::f64::consts::E;
    let first_below = if var == 0.0 {
        0.0
    } else {
        let mut found = w as f64;
        for lag in 1..w {
            if autocorr(&x, mean, var, lag) < inv_e {
                found = lag as f64;
                break;
            }
        }
        found
    };

    // spectral features from the mean-removed DFT magnitudes
    let mags = dft_magnitudes(&x, mean);
    let total_mag: f64 = mags.iter().skip(1).sum();
    let (mut dom_bin, mut dom_mag) = (0usize, 0.0f64);
    for (bin, &m) in mags.iter().enumerate().skip(1) {
        if m > dom_mag {
            dom_mag = m;
            dom_bin = bin;
        }
    }
    let dom_freq = dom_bin as f64;
    let dom_frac = if total_mag > 0.0 { dom_mag / total_mag } else { 0.0 };
    let centroid = if total_mag > 0.0 {
        mags.iter()
            .enumerate()
            .skip(1)
            .map(|(bin, &m)| bin as f64 * m)
            .sum::<f64>()
            / total_mag
    } else {
        0.0
    };
    let entropy = spectral_entropy(&mags);

    // longest run strictly above the mean
    let mut longest_run = 0usize;
    let mut run = 0usize;
    for &v in x.iter() {
        if v > mean {
            run += 1;
            longest_run = longest_run.max(run);
        } else {
            run = 0;
        }
    }

    let mut local_maxima = 0usize;
    for i in 1..w - 1 {
        if x[i] > x[i - 1] && x[i] > x[i + 1] {
            local_maxima += 1;
        }
    }

    let skew_proxy = if std > 0.0 { (mean - median) / std } else { 0.0 };

    [
        mean,
        std,
        min,
        max,
        median,
        iqr,
        rms,
        mean_abs_d1,
        mean_abs_d2,
        zcr,
        line_length,
        ac1,
        ac5,
        ac10,
        first_below,
        dom_freq,
        dom_frac,
        centroid,
        entropy,
        longest_run as f64,
        local_maxima as f64,
        skew_proxy,
    ]
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn autocorr(x: &ArrayView1<f64>, mean: f64, var: f64, lag: usize) -> f64 {
    let w = x.len();
    if var == 0.0 || lag >= w {
        return 0.0;
    }
    let num: f64 = (0..w - lag)
        .map(|i| (x[i] - mean) * (x[i + lag] - mean))
        .sum();
    num / (var * w as f64)
}

/// Magnitudes of bins 0..=W/2 of the mean-removed signal.
fn dft_magnitudes(x: &ArrayView1<f64>, mean: f64) -> Vec<f64> {
    let w = x.len();
    let bins = w / 2 + 1;
    let mut mags = Vec::with_capacity(bins);
    for bin in 0..bins {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * bin as f64 * i as f64 / w as f64;
            re += (v - mean) * phase.cos();
            im += (v - mean) * phase.sin();
        }
        mags.push((re * re + im * im).sqrt());
    }
    mags
}

/// Entropy of the power distribution over 8 equal bands of the positive
/// spectrum, normalized to [0, 1].
fn spectral_entropy(mags: &[f64]) -> f64 {
    let bands = 8;
    let positive = &mags[1..];
    if positive.is_empty() {
        return 0.0;
    }
    let mut power = vec![0.0; bands];
    for (i, &m) in positive.iter().enumerate() {
        let band = (i * bands / positive.len()).min(bands - 1);
        power[band] += m * m;
    }
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &p in &power {
        if p > 0.0 {
            let frac = p / total;
            h -= frac * frac.ln();
        }
    }
    h / (bands as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn col(values: Vec<f64>) -> Array1<f64> {
        Array1::from_vec(values)
    }

    #[test]
    fn constant_window_is_finite_with_zero_spread() {
        let window = Array2::from_elem((40, 3), 2.5);
        let feats = extract_features(&window).unwrap();
        assert_eq!(feats.len(), 66);
        assert!(feats.iter().all(|v| v.is_finite()));
        for axis in 0..3 {
            let f = &feats[axis * FEATURES_PER_AXIS..(axis + 1) * FEATURES_PER_AXIS];
            assert_eq!(f[0], 2.5); // mean
            assert_eq!(f[1], 0.0); // std
            assert_eq!(f[9], 0.0); // zero crossings
            assert_eq!(f[16], 0.0); // dominant amplitude fraction
            assert_eq!(f[21], 0.0); // skew fallback
        }
    }

    #[test]
    fn pure_sine_one_period_dominates_bin_one() {
        let w = 40;
        let xs = col(
            (0..w)
                .map(|i| (2.0 * std::f64::consts::PI * i as f64 / w as f64).sin())
                .collect(),
        );
        let f = axis_features(xs.view());
        assert_eq!(f[15], 1.0, "dominant frequency {}", f[15]);
        assert!(f[16] > 0.9, "amplitude fraction {}", f[16]);
    }

    #[test]
    fn three_periods_map_to_bin_three() {
        let w = 40;
        let xs = col(
            (0..w)
                .map(|i| (2.0 * std::f64::consts::PI * 3.0 * i as f64 / w as f64).sin())
                .collect(),
        );
        let f = axis_features(xs.view());
        assert_eq!(f[15], 3.0);
    }

    #[test]
    fn axis_independence_of_concatenation() {
        let mut window = Array2::zeros((20, 3));
        for i in 0..20 {
            window[[i, 0]] = (i as f64 * 0.3).sin();
            window[[i, 1]] = i as f64;
            window[[i, 2]] = -1.0;
        }
        let feats = extract_features(&window).unwrap();
        for axis in 0..3 {
            let per_axis = axis_features(window.column(axis));
            assert_eq!(
                &feats[axis * FEATURES_PER_AXIS..(axis + 1) * FEATURES_PER_AXIS],
                &per_axis
            );
        }
    }

    #[test]
    fn hand_checked_basics() {
        let xs = col(vec![1.0, 2.0, 3.0, 4.0]);
        let f = axis_features(xs.view());
        assert_eq!(f[0], 2.5); // mean
        assert_eq!(f[2], 1.0); // min
        assert_eq!(f[3], 4.0); // max
        assert_eq!(f[4], 2.5); // median
        assert_eq!(f[7], 1.0); // mean abs first diff
        assert_eq!(f[8], 0.0); // second diffs vanish for linear input
        assert_eq!(f[10], 3.0); // line length
    }

    #[test]
    fn short_window_rejected() {
        let window = Array2::zeros((3, 3));
        assert!(extract_features(&window).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut window = Array2::zeros((10, 3));
        window[[4, 1]] = f64::NAN;
        assert!(extract_features(&window).is_err());
    }
}
