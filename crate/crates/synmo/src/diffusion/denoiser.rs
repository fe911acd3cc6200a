//! The denoiser: a residual multilayer perceptron over the flattened
//! motion window, a sinusoidal timestep embedding, and the condition
//! embedding. Forward and backward passes are hand-written so the whole
//! training loop stays dependency-free and bit-reproducible.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};

/// Architecture and I/O shape of the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Motion window length the network is built for.
    pub n_frames: usize,
    pub joints: usize,
    pub dim: usize,
    /// Length of the condition embedding vector.
    pub cond_dim: usize,
    /// Width of the hidden layers.
    pub hidden_width: usize,
    /// Number of residual blocks after the input layer.
    pub hidden_blocks: usize,
    /// Sinusoidal timestep embedding length (even).
    pub time_embed_dim: usize,
    /// Frame rate stamped onto generated motion.
    pub fps: f64,
    /// Joint names stamped onto generated motion; empty means generic.
    #[serde(default)]
    pub joint_names: Vec<String>,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 3 || self.joints == 0 || self.dim == 0 {
            return Err(SynmoError::InvalidValue(
                "denoiser needs n_frames >= 3 and nonzero joints/dim".into(),
            ));
        }
        if self.hidden_width == 0 {
            return Err(SynmoError::InvalidValue("hidden width must be > 0".into()));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(SynmoError::InvalidValue(
                "time embedding length must be positive and even".into(),
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SynmoError::InvalidValue("fps must be > 0".into()));
        }
        if !self.joint_names.is_empty() && self.joint_names.len() != self.joints {
            return Err(SynmoError::Dimension(format!(
                "{} joint names for {} joints",
                self.joint_names.len(),
                self.joints
            )));
        }
        Ok(())
    }

    pub fn flat_motion_dim(&self) -> usize {
        self.n_frames * self.joints * self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.flat_motion_dim() + self.time_embed_dim + self.cond_dim
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden_width;
        let din = self.input_dim();
        let dout = self.flat_motion_dim();
        h * din + h + self.hidden_blocks * (h * h + h) + dout * h + dout
    }

    pub fn joint_names(&self) -> Vec<String> {
        if self.joint_names.is_empty() {
            (0..self.joints).map(|j| format!("joint_{j}")).collect()
        } else {
            self.joint_names.clone()
        }
    }
}

/// All trainable parameters of the denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    config: DenoiserConfig,
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub blocks: Vec<(Array2<f64>, Array1<f64>)>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Parameter-shaped gradients (also used as optimizer velocity).
#[derive(Debug, Clone)]
pub struct DenoiserGrads {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub blocks: Vec<(Array2<f64>, Array1<f64>)>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

pub(crate) struct ForwardCache {
    input: Array1<f64>,
    /// Pre-activations of the input layer and each block.
    pre_acts: Vec<Array1<f64>>,
    /// Hidden states h_0 ..= h_L.
    hidden: Vec<Array1<f64>>,
}

fn time_embedding(t: usize, dim: usize) -> Array1<f64> {
    let mut emb = Array1::zeros(dim);
    let half = dim / 2;
    for k in 0..half {
        let freq = (10_000f64).powf(-(k as f64) / half as f64);
        let angle = t as f64 * freq;
        emb[2 * k] = angle.sin();
        emb[2 * k + 1] = angle.cos();
    }
    emb
}

impl DenoiserParams {
    /// Seeded initialization: uniform Xavier weights, zero biases.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_width;
        let din = config.input_dim();
        let dout = config.flat_motion_dim();
        let mut init_mat = |rows: usize, cols: usize, scale: f64| {
            let bound = scale * (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let w_in = init_mat(h, din, 1.0);
        let blocks = (0..config.hidden_blocks)
            .map(|_| (init_mat(h, h, 1.0), Array1::zeros(h)))
            .collect();
        let w_out = init_mat(dout, h, 0.1);
        Ok(DenoiserParams {
            b_in: Array1::zeros(h),
            b_out: Array1::zeros(dout),
            w_in,
            blocks,
            w_out,
            config,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    fn build_input(&self, frames: &Array3<f64>, t: usize, cond: &[f64]) -> Result<Array1<f64>> {
        let cfg = &self.config;
        let shape = (cfg.n_frames, cfg.joints, cfg.dim);
        if frames.dim() != shape {
            return Err(SynmoError::Dimension(format!(
                "denoiser expects {:?}, got {:?}",
                shape,
                frames.dim()
            )));
        }
        if cond.len() != cfg.cond_dim {
            return Err(SynmoError::Dimension(format!(
                "condition embedding has {} values, expected {}",
                cond.len(),
                cfg.cond_dim
            )));
        }
        let mut u = Array1::zeros(cfg.input_dim());
        for (i, v) in frames.iter().enumerate() {
            u[i] = *v;
        }
        let temb = time_embedding(t, cfg.time_embed_dim);
        let base = cfg.flat_motion_dim();
        for (i, v) in temb.iter().enumerate() {
            u[base + i] = *v;
        }
        for (i, v) in cond.iter().enumerate() {
            u[base + cfg.time_embed_dim + i] = *v;
        }
        Ok(u)
    }

    pub(crate) fn forward_cached(
        &self,
        frames: &Array3<f64>,
        t: usize,
        cond: &[f64],
    ) -> Result<(Array3<f64>, ForwardCache)> {
        let cfg = &self.config;
        let u = self.build_input(frames, t, cond)?;
        let mut pre_acts = Vec::with_capacity(1 + cfg.hidden_blocks);
        let mut hidden = Vec::with_capacity(1 + cfg.hidden_blocks);
        let a0 = self.w_in.dot(&u) + &self.b_in;
        let h0 = a0.mapv(f64::tanh);
        pre_acts.push(a0);
        hidden.push(h0);
        for (w, b) in &self.blocks {
            let prev = hidden.last().unwrap();
            let a = w.dot(prev) + b;
            let h = prev + &a.mapv(f64::tanh);
            pre_acts.push(a);
            hidden.push(h);
        }
        let y = self.w_out.dot(hidden.last().unwrap()) + &self.b_out;
        let out = Array3::from_shape_vec((cfg.n_frames, cfg.joints, cfg.dim), y.to_vec())
            .expect("output length matches configured shape");
        Ok((
            out,
            ForwardCache {
                input: u,
                pre_acts,
                hidden,
            },
        ))
    }

    /// Predicted clean motion for a noised input. Deterministic.
    pub fn forward(&self, frames: &Array3<f64>, t: usize, cond: &[f64]) -> Result<Array3<f64>> {
        Ok(self.forward_cached(frames, t, cond)?.0)
    }

    /// Backpropagate dL/dŷ through the network, returning parameter grads.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: &Array3<f64>) -> DenoiserGrads {
        let dout_flat = Array1::from_iter(d_out.iter().copied());
        let h_last = cache.hidden.last().unwrap();
        let gw_out = outer(&dout_flat, h_last);
        let gb_out = dout_flat.clone();
        let mut dh = self.w_out.t().dot(&dout_flat);
        let mut gblocks: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.blocks.len());
        for (l, (w, _b)) in self.blocks.iter().enumerate().rev() {
            let a = &cache.pre_acts[l + 1];
            let da = &dh * &a.mapv(|v| 1.0 - v.tanh() * v.tanh());
            let h_prev = &cache.hidden[l];
            gblocks.push((outer(&da, h_prev), da.clone()));
            dh = dh + w.t().dot(&da);
        }
        gblocks.reverse();
        let a0 = &cache.pre_acts[0];
        let da0 = &dh * &a0.mapv(|v| 1.0 - v.tanh() * v.tanh());
        let gw_in = outer(&da0, &cache.input);
        DenoiserGrads {
            w_in: gw_in,
            b_in: da0,
            blocks: gblocks,
            w_out: gw_out,
            b_out: gb_out,
        }
    }

    /// Flat parameter vector in a fixed order for checkpoints and checks.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.w_in.iter());
        out.extend(self.b_in.iter());
        for (w, b) in &self.blocks {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.w_out.iter());
        out.extend(self.b_out.iter());
        out
    }

    pub fn from_flat(config: DenoiserConfig, flat: &[f64]) -> Result<Self> {
        config.validate()?;
        if flat.len() != config.param_count() {
            return Err(SynmoError::Dimension(format!(
                "flat parameter vector has {} values, config needs {}",
                flat.len(),
                config.param_count()
            )));
        }
        let h = config.hidden_width;
        let din = config.input_dim();
        let dout = config.flat_motion_dim();
        let mut cursor = 0;
        let mut take_mat = |rows: usize, cols: usize| {
            let m = Array2::from_shape_vec(
                (rows, cols),
                flat[cursor..cursor + rows * cols].to_vec(),
            )
            .expect("sizes checked above");
            cursor += rows * cols;
            m
        };
        let w_in = take_mat(h, din);
        let b_in = Array1::from_vec(flat[cursor..cursor + h].to_vec());
        cursor += h;
        let mut blocks = Vec::with_capacity(config.hidden_blocks);
        for _ in 0..config.hidden_blocks {
            let w = Array2::from_shape_vec((h, h), flat[cursor..cursor + h * h].to_vec())
                .expect("sizes checked above");
            cursor += h * h;
            let b = Array1::from_vec(flat[cursor..cursor + h].to_vec());
            cursor += h;
            blocks.push((w, b));
        }
        let w_out = Array2::from_shape_vec((dout, h), flat[cursor..cursor + dout * h].to_vec())
            .expect("sizes checked above");
        cursor += dout * h;
        let b_out = Array1::from_vec(flat[cursor..cursor + dout].to_vec());
        cursor += dout;
        debug_assert_eq!(cursor, flat.len());
        Ok(DenoiserParams {
            config,
            w_in,
            b_in,
            blocks,
            w_out,
            b_out,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// In-place SGD step: p -= lr · v.
    pub fn step(&mut self, velocity: &DenoiserGrads, lr: f64) {
        self.w_in.scaled_add(-lr, &velocity.w_in);
        self.b_in.scaled_add(-lr, &velocity.b_in);
        for ((w, b), (gw, gb)) in self.blocks.iter_mut().zip(velocity.blocks.iter()) {
            w.scaled_add(-lr, gw);
            b.scaled_add(-lr, gb);
        }
        self.w_out.scaled_add(-lr, &velocity.w_out);
        self.b_out.scaled_add(-lr, &velocity.b_out);
    }
}

impl DenoiserGrads {
    pub fn zeros(config: &DenoiserConfig) -> Self {
        let h = config.hidden_width;
        DenoiserGrads {
            w_in: Array2::zeros((h, config.input_dim())),
            b_in: Array1::zeros(h),
            blocks: (0..config.hidden_blocks)
                .map(|_| (Array2::zeros((h, h)), Array1::zeros(h)))
                .collect(),
            w_out: Array2::zeros((config.flat_motion_dim(), h)),
            b_out: Array1::zeros(config.flat_motion_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &DenoiserGrads) {
        self.w_in += &other.w_in;
        self.b_in += &other.b_in;
        for ((w, b), (ow, ob)) in self.blocks.iter_mut().zip(other.blocks.iter()) {
            *w += ow;
            *b += ob;
        }
        self.w_out += &other.w_out;
        self.b_out += &other.b_out;
    }

    pub fn scale(&mut self, c: f64) {
        self.w_in *= c;
        self.b_in *= c;
        for (w, b) in self.blocks.iter_mut() {
            *w *= c;
            *b *= c;
        }
        self.w_out *= c;
        self.b_out *= c;
    }

    /// v = momentum · v + g
    pub fn accumulate_momentum(&mut self, grads: &DenoiserGrads, momentum: f64) {
        self.scale(momentum);
        self.add_assign(grads);
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w_in.iter());
        out.extend(self.b_in.iter());
        for (w, b) in &self.blocks {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.w_out.iter());
        out.extend(self.b_out.iter());
        out
    }
}

fn outer(col: &Array1<f64>, row: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((col.len(), row.len()));
    for (i, &c) in col.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            out[[i, j]] = c * r;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> DenoiserConfig {
        DenoiserConfig {
            n_frames: 4,
            joints: 2,
            dim: 3,
            cond_dim: 4,
            hidden_width: 6,
            hidden_blocks: 1,
            time_embed_dim: 4,
            fps: 20.0,
            joint_names: Vec::new(),
        }
    }

    #[test]
    fn tiny_network_stays_under_500_params() {
        assert!(tiny_config().param_count() <= 500, "{}", tiny_config().param_count());
    }

    #[test]
    fn forward_is_deterministic_and_shape_preserving() {
        let params = DenoiserParams::init(tiny_config(), 5).unwrap();
        let x = Array3::from_shape_fn((4, 2, 3), |(i, j, k)| (i + j + k) as f64 * 0.1);
        let cond = vec![0.5, -0.5, 0.25, 0.0];
        let a = params.forward(&x, 3, &cond).unwrap();
        let b = params.forward(&x, 3, &cond).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (4, 2, 3));
    }

    #[test]
    fn forward_rejects_wrong_shapes() {
        let params = DenoiserParams::init(tiny_config(), 5).unwrap();
        let bad = Array3::zeros((5, 2, 3));
        assert!(params.forward(&bad, 1, &[0.0; 4]).is_err());
        let ok = Array3::zeros((4, 2, 3));
        assert!(params.forward(&ok, 1, &[0.0; 3]).is_err());
    }

    #[test]
    fn flat_round_trip_is_exact() {
        let params = DenoiserParams::init(tiny_config(), 11).unwrap();
        let flat = params.to_flat();
        let back = DenoiserParams::from_flat(tiny_config(), &flat).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn backward_matches_finite_differences_on_scalar_objective() {
        // Objective: f(params) = Σ y²/2, so dL/dy = y.
        let config = tiny_config();
        let params = DenoiserParams::init(config.clone(), 3).unwrap();
        let x = Array3::from_shape_fn((4, 2, 3), |(i, j, k)| {
            ((i * 7 + j * 3 + k) % 5) as f64 * 0.2 - 0.4
        });
        let cond = vec![0.3, -0.2, 0.8, 0.1];
        let t = 7;
        let (y, cache) = params.forward_cached(&x, t, &cond).unwrap();
        let grads = params.backward(&cache, &y);
        let analytic = grads.to_flat();

        let f = |p: &DenoiserParams| -> f64 {
            let out = p.forward(&x, t, &cond).unwrap();
            out.iter().map(|v| v * v).sum::<f64>() / 2.0
        };
        let flat = params.to_flat();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            up[i] += h;
            let mut dn = flat.clone();
            dn[i] -= h;
            let fu = f(&DenoiserParams::from_flat(config.clone(), &up).unwrap());
            let fd = f(&DenoiserParams::from_flat(config.clone(), &dn).unwrap());
            let numeric = (fu - fd) / (2.0 * h);
            let rel = (numeric - analytic[i]).abs() / (numeric.abs() + analytic[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "max rel error {worst}");
    }
}
