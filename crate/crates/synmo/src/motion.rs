//! Motion sequences, skeleton forward kinematics, finite-difference
//! derivatives, and foot-contact mask derivation.
//!
//! A motion is an N×J×D array of per-frame joint values. For
//! [`Representation::JointPositions3D`] the values are meters in a global
//! frame with +Y up by default. For [`Representation::JointRotations`]
//! each frame holds a root translation channel at row 0 followed by one
//! axis-angle vector per skeleton joint, so the array is N×(J+1)×3 for a
//! J-joint skeleton.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::quat::{add3, norm3, sub3, Quat, Vec3};

/// World up direction used for foot-contact heights and joint frames.
pub const UP_AXIS: Vec3 = [0.0, 1.0, 0.0];
/// Index of the vertical coordinate within a joint position.
pub const UP_COORD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    JointPositions3D,
    JointRotations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    /// N×J×D joint values over time.
    pub frames: Array3<f64>,
    /// Frames per second.
    pub fps: f64,
    pub representation: Representation,
    /// One identifier per row of the J axis.
    pub joint_names: Vec<String>,
}

impl MotionSequence {
    pub fn new(
        frames: Array3<f64>,
        fps: f64,
        representation: Representation,
        joint_names: Vec<String>,
    ) -> Result<Self> {
        let (n, j, d) = frames.dim();
        if n < 3 {
            return Err(SynmoError::Length(format!(
                "motion needs at least 3 frames, got {n}"
            )));
        }
        if representation == Representation::JointPositions3D && d != 3 {
            return Err(SynmoError::Dimension(format!(
                "position motion needs D = 3, got {d}"
            )));
        }
        if joint_names.len() != j {
            return Err(SynmoError::Dimension(format!(
                "{} joint names for {} joint rows",
                joint_names.len(),
                j
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SynmoError::InvalidValue(format!("fps must be > 0, got {fps}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(SynmoError::InvalidValue(
                "motion frames contain non-finite values".into(),
            ));
        }
        Ok(MotionSequence {
            frames,
            fps,
            representation,
            joint_names,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn num_joints(&self) -> usize {
        self.frames.dim().1
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames.dim()
    }

    /// Position of joint `j` at frame `i` (positions representation).
    pub fn pos(&self, i: usize, j: usize) -> Vec3 {
        [
            self.frames[[i, j, 0]],
            self.frames[[i, j, 1]],
            self.frames[[i, j, 2]],
        ]
    }

    /// Same motion restricted to its first `n` frames.
    pub fn crop(&self, n: usize) -> Result<MotionSequence> {
        if n > self.num_frames() {
            return Err(SynmoError::Length(format!(
                "cannot crop {} frames to {n}",
                self.num_frames()
            )));
        }
        MotionSequence::new(
            self.frames.slice(ndarray::s![..n, .., ..]).to_owned(),
            self.fps,
            self.representation,
            self.joint_names.clone(),
        )
    }
}

/// Kinematic tree: a parent index per joint (-1 marks the single root)
/// and a bone offset from the parent, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub parent: Vec<i64>,
    pub offsets: Vec<[f64; 3]>,
}

impl Skeleton {
    pub fn new(parent: Vec<i64>, offsets: Vec<[f64; 3]>) -> Result<Self> {
        let j = parent.len();
        if offsets.len() != j {
            return Err(SynmoError::Dimension(format!(
                "{} offsets for {} joints",
                offsets.len(),
                j
            )));
        }
        let roots = parent.iter().filter(|&&p| p < 0).count();
        if roots != 1 {
            return Err(SynmoError::InvalidValue(format!(
                "skeleton needs exactly one root, found {roots}"
            )));
        }
        for (joint, &p) in parent.iter().enumerate() {
            if p >= 0 {
                let p = p as usize;
                if p >= j {
                    return Err(SynmoError::Index(format!(
                        "joint {joint} has parent {p} outside 0..{j}"
                    )));
                }
            }
            // Walk to the root; more than J hops means a cycle.
            let mut cur = joint;
            let mut hops = 0;
            while parent[cur] >= 0 {
                cur = parent[cur] as usize;
                hops += 1;
                if hops > j {
                    return Err(SynmoError::InvalidValue(format!(
                        "parent array has a cycle through joint {joint}"
                    )));
                }
            }
        }
        if offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SynmoError::InvalidValue("non-finite skeleton offset".into()));
        }
        Ok(Skeleton { parent, offsets })
    }

    pub fn num_joints(&self) -> usize {
        self.parent.len()
    }

    pub fn parent_of(&self, joint: usize) -> Option<usize> {
        let p = self.parent[joint];
        if p < 0 {
            None
        } else {
            Some(p as usize)
        }
    }

    /// Joints ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let j = self.num_joints();
        let mut order = Vec::with_capacity(j);
        let mut placed = vec![false; j];
        while order.len() < j {
            for joint in 0..j {
                if placed[joint] {
                    continue;
                }
                match self.parent_of(joint) {
                    None => {
                        placed[joint] = true;
                        order.push(joint);
                    }
                    Some(p) if placed[p] => {
                        placed[joint] = true;
                        order.push(joint);
                    }
                    _ => {}
                }
            }
        }
        order
    }
}

/// Per-frame binary foot-contact indicators, nonzero only at foot joints.
#[derive(Debug, Clone, PartialEq)]
pub struct FootContactMask {
    /// N×J entries in {0, 1}.
    pub mask: Array2<f64>,
    /// Joint columns that may carry contact flags.
    pub foot_joints: Vec<usize>,
}

impl FootContactMask {
    pub fn new(mask: Array2<f64>, foot_joints: Vec<usize>) -> Result<Self> {
        let (_, j) = mask.dim();
        for &fj in &foot_joints {
            if fj >= j {
                return Err(SynmoError::Index(format!(
                    "foot joint {fj} outside 0..{j}"
                )));
            }
        }
        for ((i, col), &v) in mask.indexed_iter() {
            if v != 0.0 && v != 1.0 {
                return Err(SynmoError::InvalidValue(format!(
                    "mask[{i}][{col}] = {v}, entries must be 0 or 1"
                )));
            }
            if v == 1.0 && !foot_joints.contains(&col) {
                return Err(SynmoError::InvalidValue(format!(
                    "mask[{i}][{col}] set outside declared foot joints"
                )));
            }
        }
        Ok(FootContactMask { mask, foot_joints })
    }

    /// All-zero mask (no contacts anywhere).
    pub fn zeros(n: usize, j: usize) -> Self {
        FootContactMask {
            mask: Array2::zeros((n, j)),
            foot_joints: Vec::new(),
        }
    }
}

/// Thresholds for deriving contacts from positions. Defaults: a foot joint
/// is in contact when it is below 0.05 m and moving slower than 0.1 m/s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FootContactParams {
    pub foot_joints: Vec<usize>,
    pub height_eps: f64,
    pub speed_eps: f64,
}

impl FootContactParams {
    pub fn new(foot_joints: Vec<usize>) -> Self {
        FootContactParams {
            foot_joints,
            height_eps: 0.05,
            speed_eps: 0.1,
        }
    }
}

/// Map joint rotations through the skeleton to 3-D joint positions.
///
/// Position input is returned unchanged. Rotation input must have J+1 rows
/// per frame: row 0 is the root translation, rows 1..=J are axis-angle
/// rotations for skeleton joints 0..J. The returned sequence has J rows.
pub fn forward_kinematics(skeleton: &Skeleton, motion: &MotionSequence) -> Result<MotionSequence> {
    match motion.representation {
        Representation::JointPositions3D => Ok(motion.clone()),
        Representation::JointRotations => {
            let (n, rows, d) = motion.dims();
            let j = skeleton.num_joints();
            if rows != j + 1 {
                return Err(SynmoError::Dimension(format!(
                    "rotation motion has {rows} rows per frame, skeleton with {j} joints needs {}",
                    j + 1
                )));
            }
            if d != 3 {
                return Err(SynmoError::Dimension(format!(
                    "axis-angle rotations need D = 3, got {d}"
                )));
            }
            let order = skeleton.topological_order();
            let mut out = Array3::zeros((n, j, 3));
            let mut global_rot = vec![Quat::identity(); j];
            let mut global_pos = vec![[0.0; 3]; j];
            for i in 0..n {
                let root_translation = [
                    motion.frames[[i, 0, 0]],
                    motion.frames[[i, 0, 1]],
                    motion.frames[[i, 0, 2]],
                ];
                for &joint in &order {
                    let aa = [
                        motion.frames[[i, joint + 1, 0]],
                        motion.frames[[i, joint + 1, 1]],
                        motion.frames[[i, joint + 1, 2]],
                    ];
                    let local = Quat::from_axis_angle(aa);
                    match skeleton.parent_of(joint) {
                        None => {
                            global_rot[joint] = local;
                            global_pos[joint] =
                                add3(root_translation, skeleton.offsets[joint]);
                        }
                        Some(p) => {
                            global_rot[joint] = global_rot[p].mul(local);
                            global_pos[joint] = add3(
                                global_pos[p],
                                global_rot[p].rotate(skeleton.offsets[joint]),
                            );
                        }
                    }
                }
                for joint in 0..j {
                    for k in 0..3 {
                        out[[i, joint, k]] = global_pos[joint][k];
                    }
                }
            }
            let names = if motion.joint_names.len() == j + 1 {
                motion.joint_names[1..].to_vec()
            } else {
                (0..j).map(|k| format!("joint_{k}")).collect()
            };
            MotionSequence::new(out, motion.fps, Representation::JointPositions3D, names)
        }
    }
}

/// First differences: out[i] = frames[i+1] − frames[i], (N−1)×J×D.
///
/// Values are per-frame; multiply by fps for physical units.
pub fn finite_diff_velocity(motion: &MotionSequence) -> Result<Array3<f64>> {
    let (n, j, d) = motion.dims();
    if n < 2 {
        return Err(SynmoError::Length(format!(
            "first differences need N >= 2, got {n}"
        )));
    }
    let mut out = Array3::zeros((n - 1, j, d));
    for i in 0..n - 1 {
        for jj in 0..j {
            for k in 0..d {
                out[[i, jj, k]] = motion.frames[[i + 1, jj, k]] - motion.frames[[i, jj, k]];
            }
        }
    }
    Ok(out)
}

/// Second differences: out[i] = frames[i+2] − 2·frames[i+1] + frames[i],
/// (N−2)×J×D.
pub fn finite_diff_acceleration(motion: &MotionSequence) -> Result<Array3<f64>> {
    let (n, j, d) = motion.dims();
    if n < 3 {
        return Err(SynmoError::Length(format!(
            "second differences need N >= 3, got {n}"
        )));
    }
    let mut out = Array3::zeros((n - 2, j, d));
    for i in 0..n - 2 {
        for jj in 0..j {
            for k in 0..d {
                // Difference of first differences; identical kernel to
                // x[i+2] − 2x[i+1] + x[i] and exactly equal to applying
                // finite_diff_velocity twice.
                out[[i, jj, k]] = (motion.frames[[i + 2, jj, k]] - motion.frames[[i + 1, jj, k]])
                    - (motion.frames[[i + 1, jj, k]] - motion.frames[[i, jj, k]]);
            }
        }
    }
    Ok(out)
}

/// Derive a contact mask from positions: a declared foot joint is in
/// contact when its height is below `height_eps` and its speed is below
/// `speed_eps` (m/s). The last frame copies the previous frame's decision
/// because it has no forward difference.
pub fn derive_foot_contact(
    motion: &MotionSequence,
    params: &FootContactParams,
) -> Result<FootContactMask> {
    if motion.representation != Representation::JointPositions3D {
        return Err(SynmoError::InvalidValue(
            "foot contact derivation needs position motion".into(),
        ));
    }
    if !(params.height_eps > 0.0 && params.speed_eps > 0.0) {
        return Err(SynmoError::InvalidValue(
            "contact thresholds must be positive".into(),
        ));
    }
    let (n, j, _) = motion.dims();
    for &fj in &params.foot_joints {
        if fj >= j {
            return Err(SynmoError::Index(format!("foot joint {fj} outside 0..{j}")));
        }
    }
    let mut mask = Array2::zeros((n, j));
    for &fj in &params.foot_joints {
        for i in 0..n - 1 {
            let height = motion.frames[[i, fj, UP_COORD]];
            let speed = norm3(sub3(motion.pos(i + 1, fj), motion.pos(i, fj))) * motion.fps;
            if height < params.height_eps && speed < params.speed_eps {
                mask[[i, fj]] = 1.0;
            }
        }
        mask[[n - 1, fj]] = mask[[n - 2, fj]];
    }
    FootContactMask::new(mask, params.foot_joints.clone())
}

// ---------------------------------------------------------------------------
// Motion file format: one JSON header line, then N CSV rows of J·D values in
// joint-major order. Floats are written with 17 fractional digits of
// scientific notation so the round-trip is bit-exact.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct MotionHeader {
    fps: f64,
    representation: Representation,
    joint_names: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skeleton: Option<Skeleton>,
}

pub fn write_motion_file(
    path: &Path,
    motion: &MotionSequence,
    skeleton: Option<&Skeleton>,
) -> Result<()> {
    let header = MotionHeader {
        fps: motion.fps,
        representation: motion.representation,
        joint_names: motion.joint_names.clone(),
        skeleton: skeleton.cloned(),
    };
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    let (n, j, d) = motion.dims();
    for i in 0..n {
        let mut row = String::with_capacity(j * d * 26);
        for jj in 0..j {
            for k in 0..d {
                if !(jj == 0 && k == 0) {
                    row.push(',');
                }
                row.push_str(&format!("{:.17e}", motion.frames[[i, jj, k]]));
            }
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_motion_file(path: &Path) -> Result<(MotionSequence, Option<Skeleton>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| SynmoError::Data(format!("{}: empty motion file", path.display())))?;
    let header: MotionHeader = serde_json::from_str(header_line)?;
    let j = header.joint_names.len();
    if j == 0 {
        return Err(SynmoError::Data(format!(
            "{}: header lists no joints",
            path.display()
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    SynmoError::Data(format!(
                        "{}: row {}: bad float ({e})",
                        path.display(),
                        lineno + 2
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() % j != 0 {
            return Err(SynmoError::Data(format!(
                "{}: row {} has {} values, not a multiple of {} joints",
                path.display(),
                lineno + 2,
                vals.len(),
                j
            )));
        }
        rows.push(vals);
    }
    let n = rows.len();
    if n == 0 {
        return Err(SynmoError::Data(format!(
            "{}: no frame rows",
            path.display()
        )));
    }
    let d = rows[0].len() / j;
    let mut frames = Array3::zeros((n, j, d));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != j * d {
            return Err(SynmoError::Data(format!(
                "{}: inconsistent row width at frame {i}",
                path.display()
            )));
        }
        for jj in 0..j {
            for k in 0..d {
                frames[[i, jj, k]] = row[jj * d + k];
            }
        }
    }
    let motion = MotionSequence::new(frames, header.fps, header.representation, header.joint_names)?;
    Ok((motion, header.skeleton))
}

/// Write a contact mask as a CSV of 0/1 entries, N rows × J columns, with a
/// first line listing the declared foot-joint columns.
pub fn write_contact_file(path: &Path, mask: &FootContactMask) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let joints: Vec<String> = mask.foot_joints.iter().map(|v| v.to_string()).collect();
    writeln!(w, "# foot_joints: {}", joints.join(","))?;
    let (n, j) = mask.mask.dim();
    for i in 0..n {
        let row: Vec<String> = (0..j)
            .map(|jj| if mask.mask[[i, jj]] == 1.0 { "1" } else { "0" }.to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_contact_file(path: &Path) -> Result<FootContactMask> {
    let text = fs::read_to_string(path)?;
    let mut foot_joints = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# foot_joints:") {
            foot_joints = rest
                .trim()
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| SynmoError::Data(format!("bad foot joint index: {e}")))
                })
                .collect::<Result<_>>()?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            line.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| SynmoError::Data(format!("bad mask entry: {e}")))
                })
                .collect::<Result<_>>()?,
        );
    }
    if rows.is_empty() {
        return Err(SynmoError::Data(format!(
            "{}: empty contact file",
            path.display()
        )));
    }
    let j = rows[0].len();
    let mut mask = Array2::zeros((rows.len(), j));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != j {
            return Err(SynmoError::Data(format!(
                "{}: ragged contact row {i}",
                path.display()
            )));
        }
        for (jj, &v) in row.iter().enumerate() {
            mask[[i, jj]] = v;
        }
    }
    FootContactMask::new(mask, foot_joints)
}
