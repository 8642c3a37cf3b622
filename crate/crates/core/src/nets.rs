//! Representation networks and the radius network.
//!
//! A [`RepresentationModel`] maps static edge features through a static net,
//! the call-time context through a context net, and fuses both in a cross
//! net into a `d`-dimensional edge embedding `φ[e]`. Edge travel times are
//! `‖φ[e]‖²`. Reverse mode is written out by hand for these three MLPs.
//!
//! Parameters are addressed through one flat vector laid out as
//! `[static | context | cross]`, each net as `[W₁, b₁, W₂, b₂, ...]` with
//! row-major weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{PathVec, RoadNetwork, EDGE_FEATURES};
use crate::rng::rng_for;

/// Context width: 5 weather values, hour, 7 weekday flags, 12 month flags,
/// holiday and holiday-eve flags.
pub const CONTEXT_DIM: usize = 27;
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Swish,
    Softplus,
    Tanh,
    Identity,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * sigmoid(x),
            Activation::Softplus => softplus(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(x),
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    /// Row-major `output × input`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(dims: &[usize], acts: &[Activation], rng: &mut R) -> Self {
        assert_eq!(dims.len(), acts.len() + 1, "one activation per layer");
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(w, &activation)| {
                let (input, output) = (w[0], w[1]);
                let limit = (6.0 / (input + output) as f64).sqrt();
                let weights = (0..input * output).map(|_| rng.random_range(-limit..=limit)).collect();
                Layer { input, output, activation, weights, bias: vec![0.0; output] }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize], acts: &[Activation]) -> Self {
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(w, &activation)| Layer {
                input: w[0],
                output: w[1],
                activation,
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    fn check(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[0].output != w[1].input {
                return Err(Error::DimMismatch { expected: w[0].output, got: w[1].input });
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.input * l.output || l.bias.len() != l.output {
                return Err(Error::DimMismatch { expected: l.input * l.output, got: l.weights.len() });
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &self.layers {
            h = (0..l.output)
                .map(|o| {
                    let row = &l.weights[o * l.input..(o + 1) * l.input];
                    let z = l.bias[o] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
                    l.activation.apply(z)
                })
                .collect();
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in &self.layers {
            let z: Vec<f64> = (0..l.output)
                .map(|o| {
                    let row = &l.weights[o * l.input..(o + 1) * l.input];
                    l.bias[o] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let next = z.iter().map(|&v| l.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        Trace { inputs, pre, output: h }
    }

    /// Accumulates `∂/∂params` of `grad_out · output` into `grad_params`
    /// (this net's slice of the flat layout) and returns `∂/∂input`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad_params.len(), self.num_params());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }
        let mut g = grad_out.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let delta: Vec<f64> = g
                .iter()
                .zip(&trace.pre[li])
                .map(|(gv, &z)| gv * l.activation.derivative(z))
                .collect();
            let x = &trace.inputs[li];
            let base = offsets[li];
            let (wgrad, bgrad) = grad_params[base..base + l.num_params()].split_at_mut(l.weights.len());
            for o in 0..l.output {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                bgrad[o] += d;
                for (wg, xv) in wgrad[o * l.input..(o + 1) * l.input].iter_mut().zip(x) {
                    *wg += d * xv;
                }
            }
            let mut gin = vec![0.0; l.input];
            for o in 0..l.output {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (gi, w) in gin.iter_mut().zip(&l.weights[o * l.input..(o + 1) * l.input]) {
                    *gi += d * w;
                }
            }
            g = gin;
        }
        g
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    /// Reads parameters from the front of `src`; returns the number consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&src[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[off..off + nb]);
            off += nb;
        }
        off
    }
}

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    pub fn fit<'a>(n: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let mut count = 0usize;
        for r in rows {
            for i in 0..n {
                sum[i] += r[i];
                sq[i] += r[i] * r[i];
            }
            count += 1;
        }
        if count == 0 {
            return Self::identity(n);
        }
        let c = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let v = (q / c - m * m).max(0.0).sqrt();
                if v > 1e-9 {
                    v
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d: usize,
    pub hidden: usize,
    pub radius_hidden: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d: 8, hidden: 32, radius_hidden: 16, activation: Activation::Swish }
    }
}

/// Static, context and cross networks sharing the embedding dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationModel {
    pub version: u32,
    pub d: usize,
    pub seed: u64,
    pub static_net: Mlp,
    pub context_net: Mlp,
    pub cross_net: Mlp,
    pub edge_norm: Standardizer,
    pub context_norm: Standardizer,
}

/// Edge embeddings `Φ`, row-major `|E| × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub d: usize,
    pub data: Vec<f64>,
}

impl Embeddings {
    pub fn new(d: usize, data: Vec<f64>) -> Self {
        assert!(d > 0 && data.len() % d == 0, "embedding data must be |E| x d");
        Self { d, data }
    }

    pub fn num_edges(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn row(&self, e: usize) -> &[f64] {
        &self.data[e * self.d..(e + 1) * self.d]
    }
}

/// Nominal edge costs `ĉ[e] = ‖Φ[e]‖²`.
pub fn edge_costs(phi: &Embeddings) -> Vec<f64> {
    (0..phi.num_edges()).map(|e| phi.row(e).iter().map(|x| x * x).sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    Squared,
    Huber { delta_s: f64 },
}

/// Travel-time matching loss `ℓ(x, t) = ψ(x − t) / s²` with `ψ(r) = r²/2`
/// (squared) or the Huber function; `s` is a fixed time scale in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub kind: LossKind,
    pub scale_s: f64,
}

impl Default for Loss {
    fn default() -> Self {
        Self { kind: LossKind::Squared, scale_s: 60.0 }
    }
}

impl Loss {
    pub fn value(&self, pred: f64, t: f64) -> f64 {
        let r = pred - t;
        let psi = match self.kind {
            LossKind::Squared => 0.5 * r * r,
            LossKind::Huber { delta_s } => {
                if r.abs() <= delta_s {
                    0.5 * r * r
                } else {
                    delta_s * (r.abs() - 0.5 * delta_s)
                }
            }
        };
        psi / (self.scale_s * self.scale_s)
    }

    /// `∂ℓ/∂x`.
    pub fn derivative(&self, pred: f64, t: f64) -> f64 {
        let r = pred - t;
        let dpsi = match self.kind {
            LossKind::Squared => r,
            LossKind::Huber { delta_s } => r.clamp(-delta_s, delta_s),
        };
        dpsi / (self.scale_s * self.scale_s)
    }
}

impl RepresentationModel {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, "init");
        let h = cfg.hidden;
        let d = cfg.d;
        let act = cfg.activation;
        Self {
            version: MODEL_VERSION,
            d,
            seed,
            static_net: Mlp::new(&[EDGE_FEATURES, h, d], &[act, act], &mut rng),
            context_net: Mlp::new(&[CONTEXT_DIM, h, d], &[act, act], &mut rng),
            cross_net: Mlp::new(&[2 * d, h, d], &[act, Activation::Identity], &mut rng),
            edge_norm: Standardizer::identity(EDGE_FEATURES),
            context_norm: Standardizer::identity(CONTEXT_DIM),
        }
    }

    /// Fits input standardization to the network's edge features and the given contexts.
    pub fn fit_normalization<'a>(&mut self, net: &RoadNetwork, contexts: impl Iterator<Item = &'a [f64]>) {
        self.edge_norm = Standardizer::fit(EDGE_FEATURES, net.edges().iter().map(|e| e.features.as_slice()));
        self.context_norm = Standardizer::fit(CONTEXT_DIM, contexts);
    }

    pub fn validate(&self) -> Result<()> {
        for m in [&self.static_net, &self.context_net, &self.cross_net] {
            m.check()?;
        }
        let checks = [
            (self.static_net.input_dim(), EDGE_FEATURES),
            (self.context_net.input_dim(), CONTEXT_DIM),
            (self.cross_net.input_dim(), 2 * self.d),
            (self.static_net.output_dim(), self.d),
            (self.context_net.output_dim(), self.d),
            (self.cross_net.output_dim(), self.d),
            (self.edge_norm.mean.len(), EDGE_FEATURES),
            (self.context_norm.mean.len(), CONTEXT_DIM),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(Error::DimMismatch { expected, got });
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.static_net.num_params() + self.context_net.num_params() + self.cross_net.num_params()
    }

    /// Length of the static-net block at the front of the flat layout.
    pub fn static_len(&self) -> usize {
        self.static_net.num_params()
    }

    fn ranges(&self) -> (usize, usize, usize) {
        let s = self.static_net.num_params();
        let c = self.context_net.num_params();
        (s, s + c, s + c + self.cross_net.num_params())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.static_net.write_params(&mut out);
        self.context_net.write_params(&mut out);
        self.cross_net.write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let mut off = self.static_net.read_params(p);
        off += self.context_net.read_params(&p[off..]);
        self.cross_net.read_params(&p[off..]);
    }

    /// Static edge embeddings `ϑ[e]` for every edge.
    pub fn static_embeddings(&self, net: &RoadNetwork) -> Vec<Vec<f64>> {
        net.edges().iter().map(|e| self.static_net.forward(&self.edge_norm.apply(&e.features))).collect()
    }

    /// Contextual representation `θ(T)`.
    pub fn context_embedding(&self, context: &[f64]) -> Result<Vec<f64>> {
        if context.len() != CONTEXT_DIM {
            return Err(Error::DimMismatch { expected: CONTEXT_DIM, got: context.len() });
        }
        Ok(self.context_net.forward(&self.context_norm.apply(context)))
    }

    /// Edge embeddings `Φ` with rows `ψ(ϑ[e], θ(T))`.
    pub fn embed_edges(&self, net: &RoadNetwork, context: &[f64]) -> Result<Embeddings> {
        let statics = self.static_embeddings(net);
        self.embed_with_statics(&statics, context)
    }

    pub fn embed_with_statics(&self, statics: &[Vec<f64>], context: &[f64]) -> Result<Embeddings> {
        let theta = self.context_embedding(context)?;
        let mut data = Vec::with_capacity(statics.len() * self.d);
        let mut input = vec![0.0; 2 * self.d];
        input[self.d..].copy_from_slice(&theta);
        for s in statics {
            input[..self.d].copy_from_slice(s);
            data.extend(self.cross_net.forward(&input));
        }
        Ok(Embeddings::new(self.d, data))
    }

    /// Graph regularizer `Σ ‖ϑ[e₁]/√l[e₁] − ϑ[e₂]/√l[e₂]‖²` over adjacent pairs
    /// and its gradient in the flat layout (context and cross blocks are zero).
    pub fn regularizer(&self, net: &RoadNetwork, pairs: &[(usize, usize)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.num_params()];
        if pairs.is_empty() {
            return (0.0, grad);
        }
        let traces: Vec<Trace> =
            net.edges().iter().map(|e| self.static_net.forward_trace(&self.edge_norm.apply(&e.features))).collect();
        let inv_sqrt: Vec<f64> = net.edges().iter().map(|e| 1.0 / e.length.sqrt()).collect();
        let mut value = 0.0;
        let mut g_static = vec![vec![0.0; self.d]; net.num_edges()];
        for &(a, b) in pairs {
            for j in 0..self.d {
                let diff = traces[a].output[j] * inv_sqrt[a] - traces[b].output[j] * inv_sqrt[b];
                value += diff * diff;
                g_static[a][j] += 2.0 * diff * inv_sqrt[a];
                g_static[b][j] -= 2.0 * diff * inv_sqrt[b];
            }
        }
        let s_len = self.static_len();
        for (e, g) in g_static.iter().enumerate() {
            if g.iter().any(|&v| v != 0.0) {
                self.static_net.backward(&traces[e], g, &mut grad[..s_len]);
            }
        }
        (value, grad)
    }

    /// Loss value and gradient of `ℓ(ĉ·z, t)` with the path `z` held fixed.
    pub fn path_loss_grad(&self, net: &RoadNetwork, context: &[f64], path: &PathVec, t_obs: f64, loss: &Loss) -> Result<(f64, f64, Vec<f64>)> {
        let ctx_in = {
            if context.len() != CONTEXT_DIM {
                return Err(Error::DimMismatch { expected: CONTEXT_DIM, got: context.len() });
            }
            self.context_norm.apply(context)
        };
        let ctx_trace = self.context_net.forward_trace(&ctx_in);
        let mut per_edge = Vec::with_capacity(path.edges.len());
        let mut pred = 0.0;
        for &k in &path.edges {
            let st = self.static_net.forward_trace(&self.edge_norm.apply(&net.edge(k).features));
            let mut input = st.output.clone();
            input.extend_from_slice(&ctx_trace.output);
            let ct = self.cross_net.forward_trace(&input);
            pred += ct.output.iter().map(|x| x * x).sum::<f64>();
            per_edge.push((st, ct));
        }
        let value = loss.value(pred, t_obs);
        let dl = loss.derivative(pred, t_obs);
        let mut grad = vec![0.0; self.num_params()];
        if dl == 0.0 {
            return Ok((value, pred, grad));
        }
        let (s_end, c_end, x_end) = self.ranges();
        let mut g_theta = vec![0.0; self.d];
        for (st, ct) in &per_edge {
            let g_phi: Vec<f64> = ct.output.iter().map(|&v| 2.0 * dl * v).collect();
            let g_in = self.cross_net.backward(ct, &g_phi, &mut grad[c_end..x_end]);
            self.static_net.backward(st, &g_in[..self.d], &mut grad[..s_end]);
            for (a, b) in g_theta.iter_mut().zip(&g_in[self.d..]) {
                *a += b;
            }
        }
        self.context_net.backward(&ctx_trace, &g_theta, &mut grad[s_end..c_end]);
        Ok((value, pred, grad))
    }

    /// Gradient of `ℓ(ĉ·z, t) + β R(ϑ)` with the path `z` frozen.
    pub fn backward_through_path(
        &self,
        net: &RoadNetwork,
        context: &[f64],
        path: &PathVec,
        t_obs: f64,
        loss: &Loss,
        beta: f64,
        pairs: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let (_, _, mut grad) = self.path_loss_grad(net, context, path, t_obs, loss)?;
        if beta != 0.0 {
            let (_, rg) = self.regularizer(net, pairs);
            for (g, r) in grad.iter_mut().zip(&rg) {
                *g += beta * r;
            }
        }
        Ok(grad)
    }
}

/// Radius network: context representation `θ(T)` to a nonnegative radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusModel {
    pub version: u32,
    pub seed: u64,
    pub net: Mlp,
}

impl RadiusModel {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, "radius-init");
        Self {
            version: MODEL_VERSION,
            seed,
            net: Mlp::new(&[cfg.d, cfg.radius_hidden, 1], &[cfg.activation, Activation::Softplus], &mut rng),
        }
    }

    pub fn zeros(d: usize, hidden: usize) -> Self {
        Self {
            version: MODEL_VERSION,
            seed: 0,
            net: Mlp::zeros(&[d, hidden, 1], &[Activation::Swish, Activation::Softplus]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.check()?;
        if self.net.output_dim() != 1 {
            return Err(Error::DimMismatch { expected: 1, got: self.net.output_dim() });
        }
        if self.net.layers.last().map(|l| l.activation) != Some(Activation::Softplus) {
            return Err(Error::InvalidConfig("radius head must be softplus".into()));
        }
        Ok(())
    }

    pub fn predict(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.net.input_dim() {
            return Err(Error::DimMismatch { expected: self.net.input_dim(), got: theta.len() });
        }
        Ok(self.net.forward(theta)[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_network, tests as g};

    #[test]
    fn activations_match_finite_differences() {
        for act in [Activation::Swish, Activation::Softplus, Activation::Tanh, Activation::Identity] {
            for &x in &[-3.0, -0.4, 0.0, 0.7, 5.0] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn zero_model_embeds_to_zero() {
        let net = g::diamond();
        let mut m = RepresentationModel::new(&ModelConfig::default(), 1);
        let zeros = vec![0.0; m.num_params()];
        m.set_params(&zeros);
        let phi = m.embed_edges(&net, &[0.3; CONTEXT_DIM]).unwrap();
        assert!(phi.data.iter().all(|&v| v == 0.0));
        assert!(edge_costs(&phi).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn embedding_shape_and_determinism() {
        let net = g::diamond();
        let m = RepresentationModel::new(&ModelConfig::default(), 3);
        let ctx: Vec<f64> = (0..CONTEXT_DIM).map(|i| i as f64 * 0.1).collect();
        let a = m.embed_edges(&net, &ctx).unwrap();
        let b = m.embed_edges(&net, &ctx).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_edges(), 4);
        assert_eq!(a.d, 8);
        assert!(a.data.iter().all(|v| v.is_finite()));
        assert!(matches!(m.embed_edges(&net, &[0.0; 3]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn edge_cost_arithmetic() {
        let phi = Embeddings::new(2, vec![3.0, 4.0, 0.0, 0.0]);
        assert_eq!(edge_costs(&phi), vec![25.0, 0.0]);
    }

    #[test]
    fn regularizer_zero_for_identical_edges() {
        let net = build_network(vec![g::node("a"), g::node("b"), g::node("c")], vec![g::edge(0, "a", "b"), g::edge(1, "b", "c")]).unwrap();
        let m = RepresentationModel::new(&ModelConfig::default(), 5);
        let (v, grad) = m.regularizer(&net, &net.adjacent_pairs());
        assert!(v.abs() < 1e-20);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
        let (v, _) = m.regularizer(&net, &[]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn radius_zero_net_is_ln2() {
        let r = RadiusModel::zeros(8, 16);
        assert!((r.predict(&[0.5; 8]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn huber_inside_zone_matches_squared() {
        let sq = Loss { kind: LossKind::Squared, scale_s: 60.0 };
        let hu = Loss { kind: LossKind::Huber { delta_s: 30.0 }, scale_s: 60.0 };
        assert_eq!(sq.derivative(110.0, 100.0), hu.derivative(110.0, 100.0));
        assert!(hu.derivative(200.0, 100.0) < sq.derivative(200.0, 100.0));
        assert_eq!(hu.derivative(200.0, 100.0), 30.0 / 3600.0);
    }

    #[test]
    fn params_round_trip() {
        let mut m = RepresentationModel::new(&ModelConfig::default(), 9);
        let p = m.params();
        assert_eq!(p.len(), m.num_params());
        let shifted: Vec<f64> = p.iter().map(|x| x + 1.0).collect();
        m.set_params(&shifted);
        assert_eq!(m.params(), shifted);
    }
}
