//! Dense tanh networks with hand-written reverse mode, Gaussian policy
//! densities, Adam and the checkpoint format.
//!
//! Parameters of one network live in a single flat `Vec<f64>`: for each layer
//! the row-major weight matrix (`out x in`) followed by the bias vector.
//! Batched passes loop samples in index order so summed gradients have a fixed
//! floating-point evaluation order.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden width of every policy, value and Q network.
pub const HIDDEN: usize = 64;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const CHECKPOINT_SCHEMA: &str = "doorsim_checkpoint_v1";
pub const ARCH: &str = "mlp-tanh";

/// ½·ln(2π).
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut t = (s[0] + s[1]) + (s[2] + s[3]);
    for (x, y) in ra.iter().zip(rb) {
        t += x * y;
    }
    t
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Feed-forward network: tanh on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of a batched forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub n: usize,
    /// `acts[0]` is the input batch, `acts[l]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has layers")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Contract(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Standard `[input, 64, 64, output]` shape.
    pub fn standard_sizes(input: usize, output: usize) -> Vec<usize> {
        vec![input, HIDDEN, HIDDEN, output]
    }

    /// Gaussian weights with std `gain/sqrt(fan_in)` (gain √2 on hidden
    /// layers, `out_gain` on the last), zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { out_gain } else { 2f64.sqrt() };
            let std = gain / (fan_in as f64).sqrt();
            for w in &mut net.params[off..off + fan_in * fan_out] {
                let z: f64 = StandardNormal.sample(rng);
                *w = std * z;
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Contract(format!(
                "network {sizes:?} needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NumericalBlowup {
                quantity: format!("parameter[{i}]"),
                value: params[i],
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l` in the flat parameter vector.
    fn offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// Weight and bias slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.offset(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, 1)?.acts.pop().unwrap())
    }

    /// Forward pass over `n` row-major samples.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Result<MlpCache> {
        if x.len() != n * self.input_dim() {
            return Err(Error::Contract(format!(
                "network input has {} values, expected {} x {}",
                x.len(),
                n,
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let hidden = l + 1 < self.n_layers();
            let input = &acts[l];
            let mut out = vec![0.0; n * fo];
            for s in 0..n {
                let xs = &input[s * fi..(s + 1) * fi];
                let ys = &mut out[s * fo..(s + 1) * fo];
                for o in 0..fo {
                    let z = b[o] + dot(&w[o * fi..(o + 1) * fi], xs);
                    ys[o] = if hidden { z.tanh() } else { z };
                }
            }
            acts.push(out);
        }
        Ok(MlpCache { n, acts })
    }

    /// Accumulates parameter gradients of `sum_s dy_s · y_s` into `grad` and
    /// returns the gradient with respect to the input batch.
    ///
    /// # Panics
    /// If `dy` or `grad` do not match the cache and the network.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        self.backward_impl(cache, dy, grad, true)
    }

    /// [`Mlp::backward`] without the input gradient.
    pub fn backward_params(&self, cache: &MlpCache, dy: &[f64], grad: &mut [f64]) {
        self.backward_impl(cache, dy, grad, false);
    }

    fn backward_impl(&self, cache: &MlpCache, dy: &[f64], grad: &mut [f64], input_grad: bool) -> Vec<f64> {
        let n = cache.n;
        assert_eq!(dy.len(), n * self.output_dim(), "upstream gradient shape");
        assert_eq!(grad.len(), self.params.len(), "gradient buffer shape");
        let mut delta = dy.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let (w, _) = self.layer(l);
            let input = &cache.acts[l];
            let (gw, gb) = grad[off..off + fi * fo + fo].split_at_mut(fi * fo);
            let need_dx = l > 0 || input_grad;
            let mut dx = if need_dx { vec![0.0; n * fi] } else { Vec::new() };
            for s in 0..n {
                let xs = &input[s * fi..(s + 1) * fi];
                let ds = &delta[s * fo..(s + 1) * fo];
                for o in 0..fo {
                    let d = ds[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    axpy(&mut gw[o * fi..(o + 1) * fi], d, xs);
                    if need_dx {
                        axpy(&mut dx[s * fi..(s + 1) * fi], d, &w[o * fi..(o + 1) * fi]);
                    }
                }
            }
            if l > 0 {
                // Through the tanh of the previous layer.
                for (d, a) in dx.iter_mut().zip(input) {
                    *d *= 1.0 - a * a;
                }
            }
            delta = dx;
        }
        delta
    }
}

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..a.len() {
        let z = (a[i] - mean[i]) * (-log_std[i]).exp();
        lp += -0.5 * z * z - log_std[i] - HALF_LN_2PI;
    }
    lp
}

/// Gradients of [`gaussian_log_prob`] with respect to mean and log-std,
/// written into `d_mean` and `d_log_std` scaled by `scale`.
pub fn gaussian_log_prob_grad(mean: &[f64], log_std: &[f64], a: &[f64], scale: f64, d_mean: &mut [f64], d_log_std: &mut [f64]) {
    for i in 0..a.len() {
        let inv = (-log_std[i]).exp();
        let z = (a[i] - mean[i]) * inv;
        d_mean[i] += scale * z * inv;
        d_log_std[i] += scale * (z * z - 1.0);
    }
}

/// Differential entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|l| l + 0.5 + HALF_LN_2PI).sum()
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Log density of `tanh(u)` where `u` is drawn from the Gaussian; `u` is the
/// pre-squash sample.
pub fn squashed_gaussian_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    gaussian_log_prob(mean, log_std, u) - u.iter().map(|&x| log_one_minus_tanh_sq(x)).sum::<f64>()
}

/// Clamps a log-std head into its admissible range.
pub fn clamp_log_std(x: f64) -> f64 {
    x.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Bias-corrected Adam over one or more parameter groups that share a
/// single global gradient-norm clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update. Returns the global gradient norm before clipping.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64, max_grad_norm: Option<f64>) -> Result<f64> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        let glen: usize = grads.iter().map(|g| g.len()).sum();
        if params.len() != grads.len() || total != self.m.len() || glen != total {
            return Err(Error::Contract(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                total,
                glen
            )));
        }
        let norm = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NumericalBlowup {
                quantity: "gradient norm".into(),
                value: norm,
            });
        }
        let scale = match max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                let g = gi * scale;
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let mh = self.m[k] / bc1;
                let vh = self.v[k] / bc2;
                *pi -= lr * mh / (vh.sqrt() + self.eps);
                k += 1;
            }
        }
        Ok(norm)
    }
}

/// Running mean and variance merged batch by batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
        }
    }

    /// Merges a row-major batch of `n` samples.
    pub fn update(&mut self, batch: &[f64], n: usize) {
        if n == 0 {
            return;
        }
        let dim = self.mean.len();
        let nb = n as f64;
        for j in 0..dim {
            let mut m = 0.0;
            for s in 0..n {
                m += batch[s * dim + j];
            }
            m /= nb;
            let mut v = 0.0;
            for s in 0..n {
                let d = batch[s * dim + j] - m;
                v += d * d;
            }
            v /= nb;
            let delta = m - self.mean[j];
            let tot = self.count + nb;
            let new_mean = self.mean[j] + delta * nb / tot;
            let m2 = self.var[j] * self.count + v * nb + delta * delta * self.count * nb / tot;
            self.mean[j] = new_mean;
            self.var[j] = m2 / tot;
        }
        self.count += nb;
    }

    /// Standardizes `x` in place and clips to `±clip`.
    pub fn normalize(&self, x: &mut [f64], clip: f64) {
        let dim = self.mean.len();
        for (k, v) in x.iter_mut().enumerate() {
            let j = k % dim;
            *v = ((*v - self.mean[j]) / (self.var[j] + 1e-8).sqrt()).clamp(-clip, clip);
        }
    }
}

/// Bit-exact little-endian encoding of an f64 array.
pub fn encode_f64s(data: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(text).map_err(|e| Error::Checkpoint(format!("bad base64 tensor: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("tensor byte length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

/// Checkpoint file: JSON header plus named base64 tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: String,
    pub arch: String,
    pub algorithm: String,
    pub step: u64,
    /// Layer sizes of every stored network.
    pub sizes: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(algorithm: &str, step: u64) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA.into(),
            arch: ARCH.into(),
            algorithm: algorithm.into(),
            step,
            sizes: BTreeMap::new(),
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn put_vec(&mut self, name: &str, shape: Vec<usize>, data: &[f64]) {
        self.tensors.retain(|t| t.name != name);
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data: encode_f64s(data),
        });
    }

    pub fn vec(&self, name: &str) -> Result<Vec<f64>> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        let data = decode_f64s(&t.data)?;
        if data.len() != t.shape.iter().product::<usize>() {
            return Err(Error::Checkpoint(format!("tensor `{name}` does not match its shape {:?}", t.shape)));
        }
        Ok(data)
    }

    pub fn has(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    /// Stores a network as one weight and one bias tensor per layer.
    pub fn put_mlp(&mut self, name: &str, net: &Mlp) {
        self.sizes.insert(name.into(), net.sizes().to_vec());
        for l in 0..net.n_layers() {
            let (w, b) = net.layer(l);
            let (i, o) = (net.sizes()[l], net.sizes()[l + 1]);
            self.put_vec(&format!("{name}.{l}.weight"), vec![o, i], w);
            self.put_vec(&format!("{name}.{l}.bias"), vec![o], b);
        }
    }

    pub fn mlp(&self, name: &str) -> Result<Mlp> {
        let sizes = self
            .sizes
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing network `{name}`")))?;
        let mut params = Vec::new();
        for l in 0..sizes.len().saturating_sub(1) {
            let w = self.vec(&format!("{name}.{l}.weight"))?;
            let b = self.vec(&format!("{name}.{l}.bias"))?;
            if w.len() != sizes[l] * sizes[l + 1] || b.len() != sizes[l + 1] {
                return Err(Error::Checkpoint(format!("layer {l} of `{name}` does not match sizes {sizes:?}")));
            }
            params.extend(w);
            params.extend(b);
        }
        Mlp::from_params(sizes, params)
    }

    pub fn set_meta(&mut self, key: &str, value: impl Serialize) {
        self.meta.insert(key.into(), serde_json::to_value(value).expect("meta serializes"));
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(|v| v.as_str())
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::schema("checkpoint", e.to_string()))?;
        match raw.get("schema_version").and_then(|v| v.as_str()) {
            Some(CHECKPOINT_SCHEMA) => {}
            Some(other) => {
                return Err(Error::Version {
                    found: other.into(),
                    expected: CHECKPOINT_SCHEMA.into(),
                })
            }
            None => return Err(Error::schema("schema_version", "missing checkpoint schema version")),
        }
        let ck: Checkpoint = serde_json::from_value(raw).map_err(|e| Error::schema("checkpoint", e.to_string()))?;
        if ck.arch != ARCH {
            return Err(Error::Checkpoint(format!("unsupported architecture `{}`", ck.arch)));
        }
        Ok(ck)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// Draws a standard normal vector of length `n`.
pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `ln(2π)/2`, exposed for tests and density bookkeeping.
pub fn half_ln_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}
