//! Deterministic 2-D projection onto the top two principal axes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SynmoError};

/// Center the data and project onto the two leading eigenvectors of the
/// sample covariance. Each principal axis is sign-fixed so its
/// largest-magnitude loading is positive, which makes the output
/// deterministic across runs.
pub fn project_2d(features: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = features.len();
    if n < 2 {
        return Err(SynmoError::Data(format!(
            "projection needs at least 2 points, got {n}"
        )));
    }
    let d = features[0].len();
    if d < 2 {
        return Err(SynmoError::Dimension(format!(
            "projection needs at least 2 dims, got {d}"
        )));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != d {
            return Err(SynmoError::Dimension(format!(
                "feature row {i} has {} dims, expected {d}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SynmoError::InvalidValue(format!(
                "non-finite feature in row {i}"
            )));
        }
    }
    let mut mean = vec![0.0; d];
    for row in features {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    if cov.iter().all(|v| v.abs() < 1e-300) {
        return Err(SynmoError::Data(
            "projection input has zero variance (rank 0)".into(),
        ));
    }
    let eig = cov.symmetric_eigen();
    // order eigenpairs by descending eigenvalue
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let mut axes: Vec<DVector<f64>> = Vec::with_capacity(2);
    for &idx in order.iter().take(2) {
        let mut axis: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        // sign convention: largest-magnitude loading positive
        let mut max_idx = 0;
        for (k, v) in axis.iter().enumerate() {
            if v.abs() > axis[max_idx].abs() {
                max_idx = k;
            }
        }
        if axis[max_idx] < 0.0 {
            axis = -axis;
        }
        axes.push(axis);
    }
    let out = (0..n)
        .map(|i| {
            let row = centered.row(i).transpose();
            [row.dot(&axes[0]), row.dot(&axes[1])]
        })
        .collect();
    Ok(out)
}
