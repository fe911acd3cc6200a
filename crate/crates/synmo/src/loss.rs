//! Training loss terms for the motion denoiser: the plain reconstruction
//! loss, three geometric losses (positions, foot contact, velocities), the
//! acceleration (second-difference) term, and their weighted total.
//!
//! Every loss is a squared L2 penalty over full J×D frame vectors with a
//! per-frame normalization:
//!
//! - simple: (1/N)     Σ_i ‖x0_i − x̂0_i‖²
//! - pos:    (1/N)     Σ_i ‖FK(x0_i) − FK(x̂0_i)‖²
//! - foot:   (1/(N−1)) Σ_i ‖(FK(x̂0_{i+1}) − FK(x̂0_i)) ⊙ f_i‖²
//! - vel:    (1/(N−1)) Σ_i ‖Δx0_i − Δx̂0_i‖²
//! - acc:    (1/(N−1)) Σ_i ‖Δ²x0_i − Δ²x̂0_i‖²   (N−2 summands; the 1/(N−1)
//!   factor is kept as printed rather than renormalized)
//!
//! The reconstruction loss is normalized by N so its scale matches the
//! per-frame geometric terms; this is a constant factor that does not move
//! the minimizer. Analytic gradients with respect to x̂0 are hand-written
//! linear maps (each loss is quadratic in x̂0 for position-representation
//! motion); rotation-representation gradients are not provided.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::motion::{
    forward_kinematics, FootContactMask, MotionSequence, Representation, Skeleton,
};

/// Multipliers for the geometric and acceleration terms in the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_pos: f64,
    pub lambda_vel: f64,
    pub lambda_foot: f64,
    pub lambda_acc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_pos: 1.0,
            lambda_vel: 1.0,
            lambda_foot: 1.0,
            lambda_acc: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_pos", self.lambda_pos),
            ("lambda_vel", self.lambda_vel),
            ("lambda_foot", self.lambda_foot),
            ("lambda_acc", self.lambda_acc),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynmoError::InvalidValue(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn without_acc(mut self) -> Self {
        self.lambda_acc = 0.0;
        self
    }
}

/// Per-term values of one total-loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub simple: f64,
    pub pos: f64,
    pub foot: f64,
    pub vel: f64,
    pub acc: f64,
    pub total: f64,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossId {
    Simple,
    Pos,
    Vel,
    Foot,
    Acc,
    Total,
}

fn check_pair(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<()> {
    if x0.dims() != x0_hat.dims() {
        return Err(SynmoError::Dimension(format!(
            "loss inputs differ in shape: {:?} vs {:?}",
            x0.dims(),
            x0_hat.dims()
        )));
    }
    if x0.representation != x0_hat.representation {
        return Err(SynmoError::Dimension(
            "loss inputs differ in representation".into(),
        ));
    }
    Ok(())
}

/// FK for loss purposes: identity on positions, skeleton-driven on rotations.
fn fk_for_loss(motion: &MotionSequence, skeleton: Option<&Skeleton>) -> Result<MotionSequence> {
    match motion.representation {
        Representation::JointPositions3D => Ok(motion.clone()),
        Representation::JointRotations => {
            let skel = skeleton.ok_or_else(|| {
                SynmoError::InvalidValue(
                    "rotation-representation loss needs a skeleton for FK".into(),
                )
            })?;
            forward_kinematics(skel, motion)
        }
    }
}

fn sum_sq(a: &Array3<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Mean over frames of the squared frame-vector error.
pub fn loss_simple(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<f64> {
    check_pair(x0, x0_hat)?;
    let n = x0.num_frames() as f64;
    Ok(sum_sq(&(&x0_hat.frames - &x0.frames)) / n)
}

/// Position loss: squared error after forward kinematics.
pub fn loss_pos(
    x0: &MotionSequence,
    x0_hat: &MotionSequence,
    skeleton: Option<&Skeleton>,
) -> Result<f64> {
    check_pair(x0, x0_hat)?;
    let p0 = fk_for_loss(x0, skeleton)?;
    let p1 = fk_for_loss(x0_hat, skeleton)?;
    let n = p0.num_frames() as f64;
    Ok(sum_sq(&(&p1.frames - &p0.frames)) / n)
}

/// Foot-contact loss: squared masked velocities of the prediction. The mask
/// entry for a frame multiplies that joint's whole velocity vector; only the
/// first N−1 mask rows are consulted.
pub fn loss_foot(
    x0_hat: &MotionSequence,
    mask: &FootContactMask,
    skeleton: Option<&Skeleton>,
) -> Result<f64> {
    let p = fk_for_loss(x0_hat, skeleton)?;
    let (n, j, d) = p.dims();
    if n < 2 {
        return Err(SynmoError::Length("foot loss needs N >= 2".into()));
    }
    let (mn, mj) = mask.mask.dim();
    if mn < n - 1 || mj != j {
        return Err(SynmoError::Dimension(format!(
            "mask {mn}x{mj} does not cover motion with {n} frames x {j} joints"
        )));
    }
    let mut acc = 0.0;
    for i in 0..n - 1 {
        for jj in 0..j {
            let m = mask.mask[[i, jj]];
            if m == 0.0 {
                continue;
            }
            for k in 0..d {
                let v = (p.frames[[i + 1, jj, k]] - p.frames[[i, jj, k]]) * m;
                acc += v * v;
            }
        }
    }
    Ok(acc / (n as f64 - 1.0))
}

/// Velocity loss: squared error of first differences.
pub fn loss_vel(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<f64> {
    check_pair(x0, x0_hat)?;
    let (n, j, d) = x0.dims();
    if n < 2 {
        return Err(SynmoError::Length("velocity loss needs N >= 2".into()));
    }
    let mut acc = 0.0;
    for i in 0..n - 1 {
        for jj in 0..j {
            for k in 0..d {
                let d0 = x0.frames[[i + 1, jj, k]] - x0.frames[[i, jj, k]];
                let d1 = x0_hat.frames[[i + 1, jj, k]] - x0_hat.frames[[i, jj, k]];
                let e = d1 - d0;
                acc += e * e;
            }
        }
    }
    Ok(acc / (n as f64 - 1.0))
}

/// Acceleration loss: squared error of second differences, normalized by
/// N−1 over its N−2 summands.
pub fn loss_acc(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<f64> {
    check_pair(x0, x0_hat)?;
    let (n, j, d) = x0.dims();
    if n < 3 {
        return Err(SynmoError::Length("acceleration loss needs N >= 3".into()));
    }
    let mut acc = 0.0;
    for i in 0..n - 2 {
        for jj in 0..j {
            for k in 0..d {
                let a0 = x0.frames[[i + 2, jj, k]] - 2.0 * x0.frames[[i + 1, jj, k]]
                    + x0.frames[[i, jj, k]];
                let a1 = x0_hat.frames[[i + 2, jj, k]] - 2.0 * x0_hat.frames[[i + 1, jj, k]]
                    + x0_hat.frames[[i, jj, k]];
                let e = a1 - a0;
                acc += e * e;
            }
        }
    }
    Ok(acc / (n as f64 - 1.0))
}

/// All five terms and their weighted total.
pub fn total_loss(
    x0: &MotionSequence,
    x0_hat: &MotionSequence,
    mask: &FootContactMask,
    skeleton: Option<&Skeleton>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let simple = loss_simple(x0, x0_hat)?;
    let pos = loss_pos(x0, x0_hat, skeleton)?;
    let foot = loss_foot(x0_hat, mask, skeleton)?;
    let vel = loss_vel(x0, x0_hat)?;
    let acc = loss_acc(x0, x0_hat)?;
    let total = simple
        + weights.lambda_pos * pos
        + weights.lambda_vel * vel
        + weights.lambda_foot * foot
        + weights.lambda_acc * acc;
    Ok(LossBreakdown {
        simple,
        pos,
        foot,
        vel,
        acc,
        total,
        weights: *weights,
    })
}

// ---------------------------------------------------------------------------
// Analytic gradients with respect to x̂0 (position representation only).
// ---------------------------------------------------------------------------

fn require_positions(m: &MotionSequence) -> Result<()> {
    if m.representation != Representation::JointPositions3D {
        return Err(SynmoError::InvalidValue(
            "analytic loss gradients are defined for position motion only".into(),
        ));
    }
    Ok(())
}

pub fn grad_simple(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<Array3<f64>> {
    check_pair(x0, x0_hat)?;
    require_positions(x0)?;
    let n = x0.num_frames() as f64;
    Ok((&x0_hat.frames - &x0.frames) * (2.0 / n))
}

/// With identity FK the position loss coincides with the simple loss.
pub fn grad_pos(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<Array3<f64>> {
    grad_simple(x0, x0_hat)
}

pub fn grad_vel(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<Array3<f64>> {
    check_pair(x0, x0_hat)?;
    require_positions(x0)?;
    let (n, j, d) = x0.dims();
    if n < 2 {
        return Err(SynmoError::Length("velocity loss needs N >= 2".into()));
    }
    let mut grad = Array3::zeros((n, j, d));
    let scale = 2.0 / (n as f64 - 1.0);
    for i in 0..n - 1 {
        for jj in 0..j {
            for k in 0..d {
                let e = (x0_hat.frames[[i + 1, jj, k]] - x0_hat.frames[[i, jj, k]])
                    - (x0.frames[[i + 1, jj, k]] - x0.frames[[i, jj, k]]);
                grad[[i + 1, jj, k]] += scale * e;
                grad[[i, jj, k]] -= scale * e;
            }
        }
    }
    Ok(grad)
}

pub fn grad_acc(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<Array3<f64>> {
    check_pair(x0, x0_hat)?;
    require_positions(x0)?;
    let (n, j, d) = x0.dims();
    if n < 3 {
        return Err(SynmoError::Length("acceleration loss needs N >= 3".into()));
    }
    let mut grad = Array3::zeros((n, j, d));
    let scale = 2.0 / (n as f64 - 1.0);
    for i in 0..n - 2 {
        for jj in 0..j {
            for k in 0..d {
                let e = (x0_hat.frames[[i + 2, jj, k]] - 2.0 * x0_hat.frames[[i + 1, jj, k]]
                    + x0_hat.frames[[i, jj, k]])
                    - (x0.frames[[i + 2, jj, k]] - 2.0 * x0.frames[[i + 1, jj, k]]
                        + x0.frames[[i, jj, k]]);
                grad[[i + 2, jj, k]] += scale * e;
                grad[[i + 1, jj, k]] -= 2.0 * scale * e;
                grad[[i, jj, k]] += scale * e;
            }
        }
    }
    Ok(grad)
}

pub fn grad_foot(x0_hat: &MotionSequence, mask: &FootContactMask) -> Result<Array3<f64>> {
    require_positions(x0_hat)?;
    let (n, j, d) = x0_hat.dims();
    if n < 2 {
        return Err(SynmoError::Length("foot loss needs N >= 2".into()));
    }
    let (mn, mj) = mask.mask.dim();
    if mn < n - 1 || mj != j {
        return Err(SynmoError::Dimension(format!(
            "mask {mn}x{mj} does not cover motion with {n} frames x {j} joints"
        )));
    }
    let mut grad = Array3::zeros((n, j, d));
    let scale = 2.0 / (n as f64 - 1.0);
    for i in 0..n - 1 {
        for jj in 0..j {
            let m = mask.mask[[i, jj]];
            if m == 0.0 {
                continue;
            }
            let m2 = m * m;
            for k in 0..d {
                let v = x0_hat.frames[[i + 1, jj, k]] - x0_hat.frames[[i, jj, k]];
                grad[[i + 1, jj, k]] += scale * m2 * v;
                grad[[i, jj, k]] -= scale * m2 * v;
            }
        }
    }
    Ok(grad)
}

pub fn grad_total(
    x0: &MotionSequence,
    x0_hat: &MotionSequence,
    mask: &FootContactMask,
    weights: &LossWeights,
) -> Result<Array3<f64>> {
    weights.validate()?;
    let mut grad = grad_simple(x0, x0_hat)?;
    grad = grad + grad_pos(x0, x0_hat)? * weights.lambda_pos;
    grad = grad + grad_vel(x0, x0_hat)? * weights.lambda_vel;
    grad = grad + grad_foot(x0_hat, mask)? * weights.lambda_foot;
    grad = grad + grad_acc(x0, x0_hat)? * weights.lambda_acc;
    Ok(grad)
}

fn eval_loss(
    id: LossId,
    x0: &MotionSequence,
    x0_hat: &MotionSequence,
    mask: &FootContactMask,
    skeleton: Option<&Skeleton>,
    weights: &LossWeights,
) -> Result<f64> {
    match id {
        LossId::Simple => loss_simple(x0, x0_hat),
        LossId::Pos => loss_pos(x0, x0_hat, skeleton),
        LossId::Vel => loss_vel(x0, x0_hat),
        LossId::Foot => loss_foot(x0_hat, mask, skeleton),
        LossId::Acc => loss_acc(x0, x0_hat),
        LossId::Total => Ok(total_loss(x0, x0_hat, mask, skeleton, weights)?.total),
    }
}

fn eval_grad(
    id: LossId,
    x0: &MotionSequence,
    x0_hat: &MotionSequence,
    mask: &FootContactMask,
    weights: &LossWeights,
) -> Result<Array3<f64>> {
    match id {
        LossId::Simple => grad_simple(x0, x0_hat),
        LossId::Pos => grad_pos(x0, x0_hat),
        LossId::Vel => grad_vel(x0, x0_hat),
        LossId::Foot => grad_foot(x0_hat, mask),
        LossId::Acc => grad_acc(x0, x0_hat),
        LossId::Total => grad_total(x0, x0_hat, mask, weights),
    }
}

/// Compare the analytic gradient of a loss against central finite
/// differences, element by element, and return the largest relative error
/// (denominator floored at 1e-8).
pub fn grad_check(
    id: LossId,
    x0: &MotionSequence,
    x0_hat: &MotionSequence,
    mask: &FootContactMask,
    skeleton: Option<&Skeleton>,
    weights: &LossWeights,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SynmoError::InvalidValue(format!("step h must be > 0, got {h}")));
    }
    let analytic = eval_grad(id, x0, x0_hat, mask, weights)?;
    let (n, j, d) = x0_hat.dims();
    let mut worst: f64 = 0.0;
    let mut probe = x0_hat.clone();
    for i in 0..n {
        for jj in 0..j {
            for k in 0..d {
                let orig = probe.frames[[i, jj, k]];
                probe.frames[[i, jj, k]] = orig + h;
                let up = eval_loss(id, x0, &probe, mask, skeleton, weights)?;
                probe.frames[[i, jj, k]] = orig - h;
                let down = eval_loss(id, x0, &probe, mask, skeleton, weights)?;
                probe.frames[[i, jj, k]] = orig;
                if !up.is_finite() || !down.is_finite() {
                    return Err(SynmoError::Divergence(
                        "non-finite loss during gradient check".into(),
                    ));
                }
                let numeric = (up - down) / (2.0 * h);
                let ana = analytic[[i, jj, k]];
                let rel = (numeric - ana).abs() / (numeric.abs() + ana.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
