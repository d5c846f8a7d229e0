//! Generative maps `x = f(Bz)` and their reverse-mode derivatives.
//!
//! Four families are supported:
//!
//! * `identity`: `f(v) = v`,
//! * `one-layer`: `f(v) = act(Wv + b)` with a square `W`,
//! * `rnvp`: a stack of affine coupling layers,
//! * `gauss-cdf`: the elementwise standard normal CDF.
//!
//! Every map records a [`ForwardTrace`] during evaluation, from which the
//! vector-Jacobian product is pulled back exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{check_len, Error, Result};
use crate::numerics::{gaussian_matrix, Matrix, RngStream};

/// Pre-activations of `exp` units are clamped to `[-EXP_CLAMP, EXP_CLAMP]`
/// before exponentiation.
pub const EXP_CLAMP: f64 = 10.0;

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Exp,
    Selu,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Identity => a,
            Activation::Sigmoid => 1.0 / (1.0 + (-a).exp()),
            Activation::Exp => a.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            Activation::Selu => {
                if a > 0.0 {
                    SELU_LAMBDA * a
                } else {
                    SELU_LAMBDA * SELU_ALPHA * a.exp_m1()
                }
            }
        }
    }

    /// Pre-activation values where the derivative jumps.
    fn kinks(self) -> &'static [f64] {
        match self {
            Activation::Exp => &[-EXP_CLAMP, EXP_CLAMP],
            Activation::Selu => &[0.0],
            Activation::Identity | Activation::Sigmoid => &[],
        }
    }

    /// Derivative at pre-activation `a` given the already computed output.
    #[inline]
    fn derivative(self, a: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Exp => {
                if a.abs() < EXP_CLAMP {
                    out
                } else {
                    0.0
                }
            }
            Activation::Selu => {
                if a > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * a.exp()
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            "exp" => Ok(Activation::Exp),
            "selu" => Ok(Activation::Selu),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Identity,
    OneLayer,
    Rnvp,
    GaussCdf,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ModelKind::Identity),
            "one-layer" => Ok(ModelKind::OneLayer),
            "rnvp" => Ok(ModelKind::Rnvp),
            "gauss-cdf" => Ok(ModelKind::GaussCdf),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Identity => "identity",
            ModelKind::OneLayer => "one-layer",
            ModelKind::Rnvp => "rnvp",
            ModelKind::GaussCdf => "gauss-cdf",
        })
    }
}

/// Recipe for [`GenerativeMap::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Dimension of the mixed vector `Bz` (and of the output).
    pub dim: usize,
    /// Number of coupling layers (`rnvp` only).
    #[serde(default)]
    pub coupling_layers: usize,
    /// Output activation (`one-layer` only).
    #[serde(default)]
    pub activation: Option<Activation>,
}

impl ModelSpec {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: ModelKind::Identity,
            dim,
            coupling_layers: 0,
            activation: None,
        }
    }

    pub fn one_layer(dim: usize, activation: Activation) -> Self {
        Self {
            kind: ModelKind::OneLayer,
            dim,
            coupling_layers: 0,
            activation: Some(activation),
        }
    }

    pub fn rnvp(dim: usize, coupling_layers: usize) -> Self {
        Self {
            kind: ModelKind::Rnvp,
            dim,
            coupling_layers,
            activation: None,
        }
    }

    pub fn gauss_cdf(dim: usize) -> Self {
        Self {
            kind: ModelKind::GaussCdf,
            dim,
            coupling_layers: 0,
            activation: None,
        }
    }
}

/// `m × M` mixing matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix(Matrix);

impl MixingMatrix {
    pub fn identity(n: usize) -> Self {
        MixingMatrix(Matrix::identity(n))
    }

    /// Gaussian entries, then column-normalized.
    pub fn random(rows: usize, cols: usize, rng: &mut RngStream) -> Result<Self> {
        normalize_columns(&gaussian_matrix(rows, cols, 1.0, rng)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Rows of `B` (dimension of `Bz`).
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    /// Columns of `B` (latent dimension).
    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn mix(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("MixingMatrix::mix", self.cols(), z.len())?;
        Ok(self.0.matvec_unchecked(z))
    }
}

/// Scales every column of `b` to unit ℓ2 norm.
pub fn normalize_columns(b: &Matrix) -> Result<MixingMatrix> {
    let mut out = b.clone();
    for c in 0..b.cols() {
        let norm = b.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroColumn(c));
        }
        for r in 0..b.rows() {
            out.set(r, c, b.get(r, c) / norm);
        }
    }
    Ok(MixingMatrix(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        check_len("DenseLayer bias", weights.rows(), bias.len())?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Weights `N(0, 1/fan_in)`, zero bias.
    fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut RngStream) -> Result<Self> {
        let weights = gaussian_matrix(outputs, inputs, (1.0 / inputs as f64).sqrt(), rng)?;
        Self::new(weights, vec![0.0; outputs], activation)
    }

    fn zeroed(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pre = self.weights.matvec_unchecked(x);
        for (p, b) in pre.iter_mut().zip(&self.bias) {
            *p += b;
        }
        let out = pre.iter().map(|&a| self.activation.apply(a)).collect();
        (pre, out)
    }

    fn backward(&self, pre: &[f64], out: &[f64], g_out: &[f64]) -> Vec<f64> {
        let g_pre: Vec<f64> = g_out
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&a, &o))| g * self.activation.derivative(a, o))
            .collect();
        self.weights.matvec_transpose_unchecked(&g_pre)
    }

    fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.as_slice().iter().chain(&self.bias).copied()
    }
}

type NetCache = Vec<(Vec<f64>, Vec<f64>)>;

fn net_forward(net: &[DenseLayer], x: &[f64]) -> (NetCache, Vec<f64>) {
    let mut cache = Vec::with_capacity(net.len());
    let mut h = x.to_vec();
    for layer in net {
        let (pre, out) = layer.forward(&h);
        cache.push((pre, out.clone()));
        h = out;
    }
    (cache, h)
}

fn net_eval(net: &[DenseLayer], x: &[f64]) -> Vec<f64> {
    net.iter().fold(x.to_vec(), |h, layer| layer.forward(&h).1)
}

fn net_backward(net: &[DenseLayer], cache: &NetCache, g_out: &[f64]) -> Vec<f64> {
    net.iter()
        .zip(cache)
        .rev()
        .fold(g_out.to_vec(), |g, (layer, (pre, out))| layer.backward(pre, out, &g))
}

/// Affine coupling: coordinates with `mask[i] == true` pass through,
/// the rest become `v ⊙ exp(tanh(s(v_pass))) + t(v_pass)`. The `tanh`
/// bounds each layer's per-coordinate gain to `[1/e, e]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    pub mask: Vec<bool>,
    pub scale_net: Vec<DenseLayer>,
    pub shift_net: Vec<DenseLayer>,
    #[serde(skip)]
    split: Split,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Split {
    pass: Vec<usize>,
    trans: Vec<usize>,
}

impl Split {
    fn from_mask(mask: &[bool]) -> Self {
        let (pass, trans): (Vec<usize>, Vec<usize>) = (0..mask.len()).partition(|&i| mask[i]);
        Self { pass, trans }
    }
}

impl CouplingLayer {
    pub fn new(mask: Vec<bool>, scale_net: Vec<DenseLayer>, shift_net: Vec<DenseLayer>) -> Result<Self> {
        let split = Split::from_mask(&mask);
        if split.pass.len() != split.trans.len() {
            return Err(Error::InvalidArgument(format!(
                "coupling mask must split evenly, got {} pass / {} transformed",
                split.pass.len(),
                split.trans.len()
            )));
        }
        let half = split.pass.len();
        for net in [&scale_net, &shift_net] {
            let first_in = net.first().map_or(half, |l| l.weights.cols());
            let last_out = net.last().map_or(half, |l| l.weights.rows());
            check_len("coupling net input", half, first_in)?;
            check_len("coupling net output", half, last_out)?;
            for w in net.windows(2) {
                check_len("coupling net chain", w[0].weights.rows(), w[1].weights.cols())?;
            }
        }
        Ok(Self {
            mask,
            scale_net,
            shift_net,
            split,
        })
    }

    /// Mask passing the first half through when `first_half_passes`.
    pub fn half_mask(dim: usize, first_half_passes: bool) -> Vec<bool> {
        (0..dim).map(|i| (i < dim / 2) == first_half_passes).collect()
    }

    fn dim(&self) -> usize {
        self.mask.len()
    }

    fn restore_split(&mut self) {
        self.split = Split::from_mask(&self.mask);
    }

    fn inverse(&self, x: &[f64]) -> Vec<f64> {
        let Split { pass, trans } = &self.split;
        let x_pass: Vec<f64> = pass.iter().map(|&i| x[i]).collect();
        let s = net_eval(&self.scale_net, &x_pass);
        let t = net_eval(&self.shift_net, &x_pass);
        let mut v = x.to_vec();
        for (k, &i) in trans.iter().enumerate() {
            v[i] = (x[i] - t[k]) * (-s[k].tanh()).exp();
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Layer {
    Dense(DenseLayer),
    Coupling(CouplingLayer),
    NormalCdf,
}

enum LayerCache {
    Dense {
        pre: Vec<f64>,
        out: Vec<f64>,
    },
    Coupling {
        v_trans: Vec<f64>,
        raw_scale: Vec<f64>,
        exp_scale: Vec<f64>,
        scale_cache: NetCache,
        shift_cache: NetCache,
    },
    NormalCdf {
        input: Vec<f64>,
    },
}

/// Intermediate values of one forward pass, sufficient for exact pullback.
pub struct ForwardTrace<'a> {
    map: &'a GenerativeMap,
    caches: Vec<LayerCache>,
    output: Vec<f64>,
}

impl ForwardTrace<'_> {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }

    /// Smallest distance from any hidden pre-activation to a point where
    /// its activation is not differentiable; infinite for smooth stacks.
    /// Finite-difference checks are only meaningful when perturbations stay
    /// well inside this margin.
    pub fn kink_margin(&self) -> f64 {
        fn net_margin(net: &[DenseLayer], cache: &NetCache) -> f64 {
            net.iter()
                .zip(cache)
                .map(|(layer, (pre, _))| pre_margin(layer.activation, pre))
                .fold(f64::INFINITY, f64::min)
        }
        fn pre_margin(act: Activation, pre: &[f64]) -> f64 {
            act.kinks()
                .iter()
                .flat_map(|k| pre.iter().map(move |a| (a - k).abs()))
                .fold(f64::INFINITY, f64::min)
        }
        self.map
            .layers
            .iter()
            .zip(&self.caches)
            .map(|(layer, cache)| match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense { pre, .. }) => pre_margin(d.activation, pre),
                (
                    Layer::Coupling(c),
                    LayerCache::Coupling {
                        scale_cache,
                        shift_cache,
                        ..
                    },
                ) => net_margin(&c.scale_net, scale_cache).min(net_margin(&c.shift_net, shift_cache)),
                _ => f64::INFINITY,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `J_f(v)ᵀ u` at the traced input `v`.
    pub fn pullback(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("ForwardTrace::pullback", self.output.len(), u.len())?;
        let mut g: Vec<f64> = u.iter().map(|x| x * self.map.output_gain).collect();
        for (layer, cache) in self.map.layers.iter().zip(&self.caches).rev() {
            g = match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense { pre, out }) => d.backward(pre, out, &g),
                (
                    Layer::Coupling(c),
                    LayerCache::Coupling {
                        v_trans,
                        raw_scale,
                        exp_scale,
                        scale_cache,
                        shift_cache,
                    },
                ) => {
                    let Split { pass, trans } = &c.split;
                    let g_trans: Vec<f64> = trans.iter().map(|&i| g[i]).collect();
                    let g_scale: Vec<f64> = (0..trans.len())
                        .map(|k| {
                            let th = raw_scale[k].tanh();
                            g_trans[k] * v_trans[k] * exp_scale[k] * (1.0 - th * th)
                        })
                        .collect();
                    let from_scale = net_backward(&c.scale_net, scale_cache, &g_scale);
                    let from_shift = net_backward(&c.shift_net, shift_cache, &g_trans);
                    let mut g_in = vec![0.0; g.len()];
                    for (k, &i) in pass.iter().enumerate() {
                        g_in[i] = g[i] + from_scale[k] + from_shift[k];
                    }
                    for (k, &i) in trans.iter().enumerate() {
                        g_in[i] = g_trans[k] * exp_scale[k];
                    }
                    g_in
                }
                (Layer::NormalCdf, LayerCache::NormalCdf { input }) => {
                    g.iter().zip(input).map(|(gi, &a)| gi * normal_pdf(a)).collect()
                }
                _ => unreachable!("trace does not match layer stack"),
            };
        }
        Ok(g)
    }
}

/// A differentiable generative map `f`; evaluation with a [`MixingMatrix`]
/// gives `f(Bz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeMap {
    kind: ModelKind,
    dim: usize,
    coupling_layers: usize,
    layers: Vec<Layer>,
    #[serde(default = "unit_gain")]
    output_gain: f64,
    seed: Option<(u64, u64)>,
}

fn unit_gain() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format: String,
    version: u32,
    model: GenerativeMap,
}

impl GenerativeMap {
    /// Draws a model from `spec`. Dense weights are `N(0, 1/fan_in)` with
    /// zero biases; coupling nets are `half → half (SELU) → half (linear)`
    /// with masks alternating between the two halves.
    pub fn build(spec: &ModelSpec, rng: &mut RngStream) -> Result<Self> {
        let dim = spec.dim;
        if dim == 0 {
            return Err(Error::InvalidArgument("model dimension must be positive".into()));
        }
        let mut coupling_layers = 0;
        let layers = match spec.kind {
            ModelKind::Identity => Vec::new(),
            ModelKind::GaussCdf => vec![Layer::NormalCdf],
            ModelKind::OneLayer => {
                let act = spec
                    .activation
                    .ok_or_else(|| Error::InvalidArgument("one-layer model needs an activation".into()))?;
                vec![Layer::Dense(DenseLayer::random(dim, dim, act, rng)?)]
            }
            ModelKind::Rnvp => {
                if !dim.is_multiple_of(2) {
                    return Err(Error::InvalidArgument(format!(
                        "rnvp needs an even dimension, got {dim}"
                    )));
                }
                if spec.coupling_layers == 0 {
                    return Err(Error::InvalidArgument("rnvp needs at least one coupling layer".into()));
                }
                coupling_layers = spec.coupling_layers;
                let half = dim / 2;
                let mut layers = Vec::with_capacity(coupling_layers);
                for l in 0..coupling_layers {
                    let mut net = || -> Result<Vec<DenseLayer>> {
                        Ok(vec![
                            DenseLayer::random(half, half, Activation::Selu, rng)?,
                            DenseLayer::random(half, half, Activation::Identity, rng)?,
                        ])
                    };
                    let scale_net = net()?;
                    let shift_net = net()?;
                    let mask = CouplingLayer::half_mask(dim, l % 2 == 0);
                    layers.push(Layer::Coupling(CouplingLayer::new(mask, scale_net, shift_net)?));
                }
                layers
            }
        };
        Ok(Self {
            kind: spec.kind,
            dim,
            coupling_layers,
            layers,
            output_gain: 1.0,
            seed: Some((rng.seed(), rng.stream_id())),
        })
    }

    /// A coupling stack whose nets are all zero, i.e. the identity map.
    pub fn zero_rnvp(dim: usize, coupling_layers: usize) -> Result<Self> {
        if !dim.is_multiple_of(2) || coupling_layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "rnvp needs an even dimension and at least one layer, got {dim}, {coupling_layers}"
            )));
        }
        let half = dim / 2;
        let layers = (0..coupling_layers)
            .map(|l| {
                let net = || {
                    vec![
                        DenseLayer::zeroed(half, half, Activation::Selu),
                        DenseLayer::zeroed(half, half, Activation::Identity),
                    ]
                };
                CouplingLayer::new(CouplingLayer::half_mask(dim, l % 2 == 0), net(), net()).map(Layer::Coupling)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            kind: ModelKind::Rnvp,
            dim,
            coupling_layers,
            layers,
            output_gain: 1.0,
            seed: None,
        })
    }

    /// Assembles a map from explicit layers.
    pub fn from_layers(kind: ModelKind, dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut coupling_layers = 0;
        for layer in &layers {
            match layer {
                Layer::Dense(d) => {
                    check_len("dense layer input", dim, d.weights.cols())?;
                    check_len("dense layer output", dim, d.weights.rows())?;
                }
                Layer::Coupling(c) => {
                    check_len("coupling layer", dim, c.dim())?;
                    coupling_layers += 1;
                }
                Layer::NormalCdf => {}
            }
        }
        Ok(Self {
            kind,
            dim,
            coupling_layers,
            layers,
            output_gain: 1.0,
            seed: None,
        })
    }

    /// The same map followed by multiplication with `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        let mut m = self.clone();
        m.output_gain *= gain;
        m
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coupling_layers(&self) -> usize {
        self.coupling_layers
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_gain(&self) -> f64 {
        self.output_gain
    }

    /// `(seed, stream)` of the stream that drew the parameters.
    pub fn seed(&self) -> Option<(u64, u64)> {
        self.seed
    }

    /// Every weight and bias, in layer order.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => out.extend(d.parameters()),
                Layer::Coupling(c) => {
                    for d in c.scale_net.iter().chain(&c.shift_net) {
                        out.extend(d.parameters());
                    }
                }
                Layer::NormalCdf => {}
            }
        }
        out
    }

    /// `f(v)` without mixing.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(v)?.into_output())
    }

    /// Evaluates `f(v)` and keeps what the pullback needs.
    pub fn trace(&self, v: &[f64]) -> Result<ForwardTrace<'_>> {
        check_len("GenerativeMap input", self.dim, v.len())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = v.to_vec();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    let (pre, out) = d.forward(&h);
                    h = out.clone();
                    caches.push(LayerCache::Dense { pre, out });
                }
                Layer::Coupling(c) => {
                    let Split { pass, trans } = &c.split;
                    let v_pass: Vec<f64> = pass.iter().map(|&i| h[i]).collect();
                    let v_trans: Vec<f64> = trans.iter().map(|&i| h[i]).collect();
                    let (scale_cache, raw_scale) = net_forward(&c.scale_net, &v_pass);
                    let (shift_cache, shift) = net_forward(&c.shift_net, &v_pass);
                    let exp_scale: Vec<f64> = raw_scale.iter().map(|s| s.tanh().exp()).collect();
                    for (k, &i) in trans.iter().enumerate() {
                        h[i] = v_trans[k] * exp_scale[k] + shift[k];
                    }
                    caches.push(LayerCache::Coupling {
                        v_trans,
                        raw_scale,
                        exp_scale,
                        scale_cache,
                        shift_cache,
                    });
                }
                Layer::NormalCdf => {
                    let out = h.iter().map(|&a| normal_cdf(a)).collect();
                    caches.push(LayerCache::NormalCdf { input: h });
                    h = out;
                }
            }
        }
        if self.output_gain != 1.0 {
            h.iter_mut().for_each(|x| *x *= self.output_gain);
        }
        Ok(ForwardTrace {
            map: self,
            caches,
            output: h,
        })
    }

    fn check_mixing(&self, b: &MixingMatrix, z: &[f64]) -> Result<()> {
        check_len("mixing matrix rows", self.dim, b.rows())?;
        check_len("latent length", b.cols(), z.len())
    }

    /// `x = f(Bz)`.
    pub fn forward(&self, b: &MixingMatrix, z: &[f64]) -> Result<Vec<f64>> {
        self.check_mixing(b, z)?;
        self.apply(&b.matrix().matvec_unchecked(z))
    }

    /// Gradient of `⟨u, f(Bz)⟩` with respect to `z`, i.e. `Bᵀ J_f(Bz)ᵀ u`.
    pub fn vjp(&self, b: &MixingMatrix, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_mixing(b, z)?;
        let trace = self.trace(&b.matrix().matvec_unchecked(z))?;
        let g = trace.pullback(u)?;
        Ok(b.matrix().matvec_transpose_unchecked(&g))
    }

    /// `f⁻¹(x)` for maps that are invertible by construction.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("GenerativeMap::inverse", self.dim, x.len())?;
        if !matches!(self.kind, ModelKind::Rnvp | ModelKind::GaussCdf | ModelKind::Identity) {
            return Err(Error::NotInvertible(self.kind.to_string()));
        }
        let mut h: Vec<f64> = x.iter().map(|v| v / self.output_gain).collect();
        for layer in self.layers.iter().rev() {
            h = match layer {
                Layer::Coupling(c) => c.inverse(&h),
                Layer::NormalCdf => {
                    if let Some((index, &value)) = h.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p < 1.0)) {
                        return Err(Error::OutOfRange { index, value });
                    }
                    h.iter().map(|&p| normal_quantile(p)).collect()
                }
                Layer::Dense(_) => return Err(Error::NotInvertible(self.kind.to_string())),
            };
        }
        Ok(h)
    }

    /// Versioned JSON record; floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&ModelRecord {
            format: "gsl-generative-map".into(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: ModelRecord = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if rec.version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                rec.version
            )));
        }
        let mut model = rec.model;
        for layer in &mut model.layers {
            if let Layer::Coupling(c) = layer {
                c.restore_split();
            }
        }
        Self::from_layers(model.kind, model.dim, model.layers.clone())?;
        Ok(model)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile, `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
