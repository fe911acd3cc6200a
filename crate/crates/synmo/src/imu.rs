//! Virtual inertial sensors: attach sensor frames to skeleton joints,
//! differentiate their trajectories into accelerometer and gyroscope
//! readings, and resample the resulting signals.
//!
//! An ideal accelerometer reads specific force in its own frame: the
//! dynamic acceleration of the mounting point rotated into the sensor
//! frame, plus the gravity reaction g rotated the same way. A static,
//! level sensor therefore reads +g along the up axis and a free-falling
//! one reads zero. The gyroscope reading is the body-frame angular
//! velocity 2·vec(q* ⊗ q̇) extracted from the orientation quaternions,
//! with consecutive quaternions sign-aligned so double-cover flips do not
//! produce spikes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::motion::{MotionSequence, Representation, Skeleton};
use crate::quat::{add3, cross3, norm3, normalize3, scale3, sub3, Quat, Vec3};

/// Gravity magnitude and the unit up direction of the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityConfig {
    pub g: f64,
    pub up_axis: Vec3,
}

impl Default for GravityConfig {
    fn default() -> Self {
        GravityConfig {
            g: 9.81,
            up_axis: [0.0, 1.0, 0.0],
        }
    }
}

impl GravityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(SynmoError::InvalidValue(format!(
                "gravity must be positive, got {}",
                self.g
            )));
        }
        if (norm3(self.up_axis) - 1.0).abs() > 1e-9 {
            return Err(SynmoError::InvalidValue(
                "up axis must be a unit vector".into(),
            ));
        }
        Ok(())
    }
}

/// Position and orientation of one attached sensor over time. Orientations
/// are sensor-to-global unit quaternions.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrajectory {
    pub positions: Vec<Vec3>,
    pub orientations: Vec<Quat>,
    pub fps: f64,
    pub placement_name: String,
}

const UNIT_TOL: f64 = 1e-9;

impl SensorTrajectory {
    pub fn new(
        positions: Vec<Vec3>,
        orientations: Vec<Quat>,
        fps: f64,
        placement_name: String,
    ) -> Result<Self> {
        let traj = SensorTrajectory {
            positions,
            orientations,
            fps,
            placement_name,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() < 3 {
            return Err(SynmoError::Length(format!(
                "sensor trajectory needs N >= 3, got {}",
                self.positions.len()
            )));
        }
        if self.orientations.len() != self.positions.len() {
            return Err(SynmoError::Dimension(format!(
                "{} orientations for {} positions",
                self.orientations.len(),
                self.positions.len()
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(SynmoError::InvalidValue("fps must be > 0".into()));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(SynmoError::InvalidValue(format!(
                    "non-finite position at frame {i}"
                )));
            }
        }
        for (i, q) in self.orientations.iter().enumerate() {
            if !q.is_finite() || (q.norm() - 1.0).abs() > UNIT_TOL {
                return Err(SynmoError::InvalidValue(format!(
                    "orientation at frame {i} is not unit norm (|q| = {})",
                    q.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Time-aligned accelerometer and gyroscope streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSignal {
    pub accel: Vec<Vec3>,
    pub gyro: Vec<Vec3>,
    pub fps: f64,
    pub placement_name: String,
}

impl ImuSignal {
    pub fn validate(&self) -> Result<()> {
        if self.accel.len() != self.gyro.len() {
            return Err(SynmoError::Dimension(format!(
                "accel has {} rows, gyro {}",
                self.accel.len(),
                self.gyro.len()
            )));
        }
        if self
            .accel
            .iter()
            .chain(self.gyro.iter())
            .any(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(SynmoError::InvalidValue("non-finite signal value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }
}

/// Binding of a named virtual sensor to a skeleton joint, with a rigid
/// offset and orientation in the joint's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPlacement {
    pub name: String,
    pub joint: String,
    pub local_offset: Vec3,
    pub local_orientation: Quat,
}

impl SensorPlacement {
    pub fn on_joint(name: &str, joint: &str) -> Self {
        SensorPlacement {
            name: name.into(),
            joint: joint.into(),
            local_offset: [0.0; 3],
            local_orientation: Quat::identity(),
        }
    }
}

/// The default nine body sites, bound to joints of the default skeleton.
pub fn default_placements() -> Vec<SensorPlacement> {
    [
        ("head", "head"),
        ("chest", "spine3"),
        ("waist", "pelvis"),
        ("left_upper_arm", "l_elbow"),
        ("right_upper_arm", "r_elbow"),
        ("left_forearm", "l_wrist"),
        ("right_forearm", "r_wrist"),
        ("left_shin", "l_ankle"),
        ("right_shin", "r_ankle"),
    ]
    .iter()
    .map(|(name, joint)| SensorPlacement::on_joint(name, joint))
    .collect()
}

/// Orthonormal joint frame from the bone direction and the world up.
/// Local +Y runs along the bone (parent to joint); the root joint uses
/// the up direction as its bone.
fn joint_frame(bone: Vec3, up: Vec3) -> Quat {
    let y = if norm3(bone) < 1e-12 {
        up
    } else {
        normalize3(bone)
    };
    let mut x = cross3(up, y);
    if norm3(x) < 1e-8 {
        // bone parallel to up; fall back to the world x axis
        x = cross3([1.0, 0.0, 0.0], y);
        if norm3(x) < 1e-8 {
            x = cross3([0.0, 0.0, 1.0], y);
        }
    }
    let x = normalize3(x);
    let z = cross3(x, y);
    Quat::from_basis(x, y, z)
}

/// Rigidly attach virtual sensors to joints of a position motion. Sensor
/// position is the joint position plus the frame-oriented offset; sensor
/// orientation is the joint frame composed with the placement's local
/// orientation.
pub fn attach_sensors(
    motion: &MotionSequence,
    skeleton: &Skeleton,
    placements: &[SensorPlacement],
) -> Result<Vec<SensorTrajectory>> {
    if motion.representation != Representation::JointPositions3D {
        return Err(SynmoError::InvalidValue(
            "sensor attachment needs position motion".into(),
        ));
    }
    let (n, j, _) = motion.dims();
    if skeleton.num_joints() != j {
        return Err(SynmoError::Dimension(format!(
            "skeleton has {} joints, motion {}",
            skeleton.num_joints(),
            j
        )));
    }
    let up = crate::motion::UP_AXIS;
    let mut out = Vec::with_capacity(placements.len());
    for placement in placements {
        let joint = motion
            .joint_names
            .iter()
            .position(|name| name == &placement.joint)
            .ok_or_else(|| {
                SynmoError::Index(format!(
                    "placement '{}' references unknown joint '{}'",
                    placement.name, placement.joint
                ))
            })?;
        let mut positions = Vec::with_capacity(n);
        let mut orientations = Vec::with_capacity(n);
        for i in 0..n {
            let joint_pos = motion.pos(i, joint);
            let bone = match skeleton.parent_of(joint) {
                Some(p) => sub3(joint_pos, motion.pos(i, p)),
                None => up,
            };
            let frame = joint_frame(bone, up);
            positions.push(add3(joint_pos, frame.rotate(placement.local_offset)));
            orientations.push(frame.mul(placement.local_orientation).normalize());
        }
        out.push(SensorTrajectory::new(
            positions,
            orientations,
            motion.fps,
            placement.name.clone(),
        )?);
    }
    Ok(out)
}

/// Global-frame dynamic acceleration by central second differences,
/// aligned to interior frames 1..N−1: (N−2)×3 in m/s².
pub fn dynamic_acceleration(traj: &SensorTrajectory) -> Result<Vec<Vec3>> {
    traj.validate()?;
    let n = traj.len();
    let scale = traj.fps * traj.fps;
    let mut out = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let p_prev = traj.positions[i - 1];
        let p = traj.positions[i];
        let p_next = traj.positions[i + 1];
        out.push(scale3(
            sub3(sub3(p_next, p), sub3(p, p_prev)),
            scale,
        ));
    }
    Ok(out)
}

/// Per-frame gravity reading in the sensor frame: g · (q⁻¹ rotating the
/// up direction). N×3 in m/s²; every row has norm g.
pub fn gravity_component(traj: &SensorTrajectory, cfg: &GravityConfig) -> Result<Vec<Vec3>> {
    traj.validate()?;
    cfg.validate()?;
    Ok(traj
        .orientations
        .iter()
        .map(|q| scale3(q.conjugate().rotate(cfg.up_axis), cfg.g))
        .collect())
}

/// Accelerometer synthesis: sensor-frame dynamic acceleration plus the
/// gravity reading, per interior frame ((N−2)×3).
pub fn synthesize_accelerometer(
    traj: &SensorTrajectory,
    cfg: &GravityConfig,
) -> Result<Vec<Vec3>> {
    let dynamic = dynamic_acceleration(traj)?;
    cfg.validate()?;
    let mut out = Vec::with_capacity(dynamic.len());
    for (i, a_global) in dynamic.iter().enumerate() {
        let q = traj.orientations[i + 1];
        let inv = q.conjugate();
        out.push(add3(
            inv.rotate(*a_global),
            scale3(inv.rotate(cfg.up_axis), cfg.g),
        ));
    }
    Ok(out)
}

/// Gyroscope synthesis: body-frame angular velocity 2·vec(q* ⊗ q̇) with
/// q̇ from forward differences, (N−1)×3 in rad/s. Consecutive quaternions
/// are sign-aligned before differencing.
pub fn synthesize_gyroscope(traj: &SensorTrajectory) -> Result<Vec<Vec3>> {
    traj.validate()?;
    if traj.len() < 2 {
        return Err(SynmoError::Length("gyroscope needs N >= 2".into()));
    }
    let n = traj.len();
    let mut out = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let q_a = traj.orientations[i];
        let mut q_b = traj.orientations[i + 1];
        if q_a.dot(q_b) < 0.0 {
            q_b = q_b.negate();
        }
        let q_dot = q_b.sub(q_a).scale(traj.fps);
        let omega = q_a.conjugate().mul(q_dot);
        out.push(scale3(omega.vec(), 2.0));
    }
    Ok(out)
}

/// Combined IMU stream over interior frames 1..N−1: accelerometer rows as
/// synthesized, gyroscope rows as the mean of the two adjacent forward
/// differences (a central estimate at the same frames).
pub fn synthesize_imu(traj: &SensorTrajectory, cfg: &GravityConfig) -> Result<ImuSignal> {
    let accel = synthesize_accelerometer(traj, cfg)?;
    let gyro_fwd = synthesize_gyroscope(traj)?;
    let gyro: Vec<Vec3> = (1..traj.len() - 1)
        .map(|i| scale3(add3(gyro_fwd[i - 1], gyro_fwd[i]), 0.5))
        .collect();
    let signal = ImuSignal {
        accel,
        gyro,
        fps: traj.fps,
        placement_name: traj.placement_name.clone(),
    };
    signal.validate()?;
    Ok(signal)
}

/// Resample onto a uniform grid at `target_fps` by linear interpolation.
/// Downsampling by more than 2x first applies a moving-average prefilter
/// of width round(source/target) samples.
pub fn resample(signal: &ImuSignal, target_fps: f64) -> Result<ImuSignal> {
    signal.validate()?;
    if signal.is_empty() {
        return Err(SynmoError::Length("cannot resample an empty signal".into()));
    }
    if !(target_fps > 0.0 && target_fps.is_finite()) {
        return Err(SynmoError::InvalidValue(format!(
            "target fps must be > 0, got {target_fps}"
        )));
    }
    if target_fps == signal.fps {
        return Ok(signal.clone());
    }
    let ratio = signal.fps / target_fps;
    let (accel_src, gyro_src) = if ratio > 2.0 {
        let width = ratio.round() as usize;
        (
            moving_average(&signal.accel, width),
            moving_average(&signal.gyro, width),
        )
    } else {
        (signal.accel.clone(), signal.gyro.clone())
    };
    let m = signal.len();
    let duration = (m - 1) as f64 / signal.fps;
    let out_len = (duration * target_fps).floor() as usize + 1;
    let mut accel = Vec::with_capacity(out_len);
    let mut gyro = Vec::with_capacity(out_len);
    for k in 0..out_len {
        let t = k as f64 / target_fps;
        let pos = (t * signal.fps).min((m - 1) as f64);
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let lerp = |rows: &[Vec3]| -> Vec3 {
            if i + 1 >= rows.len() {
                rows[rows.len() - 1]
            } else {
                add3(
                    scale3(rows[i], 1.0 - frac),
                    scale3(rows[i + 1], frac),
                )
            }
        };
        accel.push(lerp(&accel_src));
        gyro.push(lerp(&gyro_src));
    }
    Ok(ImuSignal {
        accel,
        gyro,
        fps: target_fps,
        placement_name: signal.placement_name.clone(),
    })
}

/// Centered moving average with edge shrinkage.
fn moving_average(rows: &[Vec3], width: usize) -> Vec<Vec3> {
    if width <= 1 {
        return rows.to_vec();
    }
    let half = width / 2;
    let n = rows.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut sum = [0.0; 3];
        for row in &rows[lo..=hi] {
            sum = add3(sum, *row);
        }
        out.push(scale3(sum, 1.0 / (hi - lo + 1) as f64));
    }
    out
}

/// Additive Gaussian sensor noise (augmentation; off by default).
pub fn add_noise(
    signal: &ImuSignal,
    sigma_accel: f64,
    sigma_gyro: f64,
    seed: u64,
) -> Result<ImuSignal> {
    signal.validate()?;
    if sigma_accel < 0.0 || sigma_gyro < 0.0 {
        return Err(SynmoError::InvalidValue("noise sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |sigma: f64, rows: &[Vec3]| -> Vec<Vec3> {
        rows.iter()
            .map(|r| {
                let mut out = *r;
                for v in out.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma * e;
                }
                out
            })
            .collect()
    };
    Ok(ImuSignal {
        accel: draw(sigma_accel, &signal.accel),
        gyro: draw(sigma_gyro, &signal.gyro),
        fps: signal.fps,
        placement_name: signal.placement_name.clone(),
    })
}

// ---------------------------------------------------------------------------
// Signal files: CSV `t,ax,ay,az,gx,gy,gz` plus a JSON manifest sidecar.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImuManifest {
    pub fps: f64,
    pub placement: String,
    pub source_motion: String,
    pub gravity_config: GravityConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn write_imu_csv(path: &Path, signal: &ImuSignal) -> Result<()> {
    signal.validate()?;
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,ax,ay,az,gx,gy,gz")?;
    for (i, (a, g)) in signal.accel.iter().zip(signal.gyro.iter()).enumerate() {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            i as f64 / signal.fps,
            a[0],
            a[1],
            a[2],
            g[0],
            g[1],
            g[2]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu_csv(path: &Path, fps: f64, placement_name: &str) -> Result<ImuSignal> {
    let text = fs::read_to_string(path)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", path.display())))?;
    let mut accel = Vec::new();
    let mut gyro = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    SynmoError::Data(format!("{}: line {}: {e}", path.display(), i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(SynmoError::Data(format!(
                "{}: line {} has {} columns, expected 7",
                path.display(),
                i + 1,
                vals.len()
            )));
        }
        accel.push([vals[1], vals[2], vals[3]]);
        gyro.push([vals[4], vals[5], vals[6]]);
    }
    let signal = ImuSignal {
        accel,
        gyro,
        fps,
        placement_name: placement_name.to_string(),
    };
    signal.validate()?;
    Ok(signal)
}

/// Write `<stem>.csv` and `<stem>.manifest.json` into `dir`.
pub fn write_imu_with_manifest(
    dir: &Path,
    stem: &str,
    signal: &ImuSignal,
    manifest: &ImuManifest,
) -> Result<()> {
    write_imu_csv(&dir.join(format!("{stem}.csv")), signal)?;
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join(format!("{stem}.manifest.json")), json)?;
    Ok(())
}

/// Load a signal via its manifest sidecar.
pub fn read_imu_with_manifest(dir: &Path, stem: &str) -> Result<(ImuSignal, ImuManifest)> {
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", manifest_path.display())))?;
    let manifest: ImuManifest = serde_json::from_str(&text)?;
    let signal = read_imu_csv(
        &dir.join(format!("{stem}.csv")),
        manifest.fps,
        &manifest.placement,
    )?;
    Ok((signal, manifest))
}
