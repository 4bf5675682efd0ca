use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Identity => a,
            Activation::Relu => a.max(0.0),
            Activation::Sigmoid => stable_sigmoid(a),
        }
    }

    /// Derivative expressed through the pre-activation `a` and output `z`.
    #[inline]
    fn derivative(self, a: f64, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => z * (1.0 - z),
        }
    }

    /// Tangents pass through exactly only when the second derivative
    /// vanishes almost everywhere.
    fn supports_tangents(self) -> bool {
        !matches!(self, Activation::Sigmoid)
    }
}

#[inline]
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    fn layer_dims(&self) -> Vec<(usize, usize, Activation)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut n_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((n_in, self.hidden_width, self.hidden_activation));
            n_in = self.hidden_width;
        }
        dims.push((n_in, self.output_dim, self.output_activation));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o, _)| i * o + o).sum()
    }
}

#[derive(Clone, Debug)]
struct Layer {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
    act: Activation,
}

/// Fully connected network whose weights live in a [`ParamStore`].
/// Weights are row-major `n_out x n_in`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Activations saved by [`Mlp::forward`], plus scratch for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpTape {
    n_tan: usize,
    /// acts[0] is the input; acts[i + 1] the output of layer i.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    /// Tangents of acts[i], `n_tan` vectors laid end to end.
    tans: Vec<Vec<f64>>,
    g: Vec<f64>,
    g_next: Vec<f64>,
    gt: Vec<f64>,
    gt_next: Vec<f64>,
}

impl MlpTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Tangent `k` of the output.
    pub fn output_tangent(&self, k: usize) -> &[f64] {
        let t = self.tans.last().expect("forward not run");
        let d = self.output().len();
        &t[k * d..(k + 1) * d]
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

impl Mlp {
    /// Registers `<prefix>.l<i>.weight` / `.bias` blocks with He-uniform
    /// weights and zero biases.
    pub fn new(spec: MlpSpec, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::new();
        for (i, (n_in, n_out, act)) in spec.layer_dims().into_iter().enumerate() {
            let w = store.add_block(&format!("{prefix}.l{i}.weight"), n_in * n_out);
            let b = store.add_block(&format!("{prefix}.l{i}.bias"), n_out);
            let bound = (6.0 / n_in.max(1) as f64).sqrt();
            for v in store.values_mut(w, n_in * n_out) {
                *v = rng.gen_range(-bound..bound);
            }
            layers.push(Layer { w, b, n_in, n_out, act });
        }
        Mlp { spec, layers }
    }

    pub fn attach(spec: MlpSpec, store: &ParamStore, prefix: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, (n_in, n_out, act)) in spec.layer_dims().into_iter().enumerate() {
            let get = |name: String, len: usize| -> Result<usize> {
                let (off, l) = store.block(&name).ok_or_else(|| Error::Format(format!("missing parameter block {name}")))?;
                if l != len {
                    return Err(Error::Format(format!("block {name}: length {l}, expected {len}")));
                }
                Ok(off)
            };
            let w = get(format!("{prefix}.l{i}.weight"), n_in * n_out)?;
            let b = get(format!("{prefix}.l{i}.bias"), n_out)?;
            layers.push(Layer { w, b, n_in, n_out, act });
        }
        Ok(Mlp { spec, layers })
    }

    /// Offset and length of the final layer's bias.
    pub fn output_bias(&self) -> (usize, usize) {
        let l = self.layers.last().unwrap();
        (l.b, l.n_out)
    }

    /// Offsets of every weight and bias block, in layer order.
    pub fn param_blocks(&self) -> Vec<(usize, usize)> {
        self.layers.iter().flat_map(|l| [(l.w, l.n_in * l.n_out), (l.b, l.n_out)]).collect()
    }

    /// Runs the network on `x`, propagating `tangents` (forward-mode
    /// directions of the input) alongside.
    pub fn forward(&self, params: &[f64], x: &[f64], tangents: &[&[f64]], tape: &mut MlpTape) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Dimension { expected: self.spec.input_dim, got: x.len() });
        }
        let k = tangents.len();
        for t in tangents {
            if t.len() != self.spec.input_dim {
                return Err(Error::Dimension { expected: self.spec.input_dim, got: t.len() });
            }
        }
        let nl = self.layers.len();
        tape.n_tan = k;
        tape.acts.resize_with(nl + 1, Vec::new);
        tape.pre.resize_with(nl, Vec::new);
        tape.tans.resize_with(nl + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        tape.tans[0].clear();
        for t in tangents {
            tape.tans[0].extend_from_slice(t);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if k > 0 && !layer.act.supports_tangents() {
                return Err(Error::Config("tangent propagation through sigmoid layers is unsupported".into()));
            }
            let (before, after) = tape.acts.split_at_mut(i + 1);
            let input = &before[i];
            let out = &mut after[0];
            let pre = &mut tape.pre[i];
            pre.clear();
            out.clear();
            let w = &params[layer.w..layer.w + layer.n_in * layer.n_out];
            let b = &params[layer.b..layer.b + layer.n_out];
            for o in 0..layer.n_out {
                let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
                let a = b[o] + dot(row, input);
                pre.push(a);
                out.push(layer.act.apply(a));
            }
            if k > 0 {
                let (tb, ta) = tape.tans.split_at_mut(i + 1);
                let tin = &tb[i];
                let tout = &mut ta[0];
                tout.clear();
                tout.resize(k * layer.n_out, 0.0);
                for kk in 0..k {
                    let tv = &tin[kk * layer.n_in..(kk + 1) * layer.n_in];
                    for o in 0..layer.n_out {
                        let d = layer.act.derivative(pre[o], out[o]);
                        if d != 0.0 {
                            let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
                            tout[kk * layer.n_out + o] = d * dot(row, tv);
                        }
                    }
                }
            } else {
                tape.tans[i + 1].clear();
            }
        }
        Ok(())
    }

    /// Reverse pass. `g_out` is the upstream gradient on the output,
    /// `g_out_tan` on each output tangent (must match the forward's tangent
    /// count, or be empty). Parameter gradients are accumulated into `grads`;
    /// input gradients are written (not accumulated) into `g_in` / `g_in_tan`.
    pub fn backward(
        &self,
        params: &[f64],
        tape: &mut MlpTape,
        g_out: &[f64],
        g_out_tan: &[&[f64]],
        grads: &mut [f64],
        g_in: Option<&mut [f64]>,
        g_in_tan: Option<&mut [f64]>,
    ) {
        let k = if g_out_tan.is_empty() { 0 } else { tape.n_tan };
        debug_assert!(g_out_tan.is_empty() || g_out_tan.len() == tape.n_tan);
        let nl = self.layers.len();
        let MlpTape { acts, pre, tans, g, g_next, gt, gt_next, .. } = tape;
        g.clear();
        g.extend_from_slice(g_out);
        gt.clear();
        for t in g_out_tan {
            gt.extend_from_slice(t);
        }
        for i in (0..nl).rev() {
            let layer = &self.layers[i];
            let (n_in, n_out) = (layer.n_in, layer.n_out);
            let pre_i = &pre[i];
            let out_i = &acts[i + 1];
            // through the activation
            for o in 0..n_out {
                let d = layer.act.derivative(pre_i[o], out_i[o]);
                g[o] *= d;
                for kk in 0..k {
                    gt[kk * n_out + o] *= d;
                }
            }
            let input = &acts[i];
            let tin = &tans[i];
            let w = &params[layer.w..layer.w + n_in * n_out];
            {
                let gw = &mut grads[layer.w..layer.w + n_in * n_out];
                for o in 0..n_out {
                    let go = g[o];
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    if go != 0.0 {
                        axpy(go, input, row);
                    }
                    for kk in 0..k {
                        let gto = gt[kk * n_out + o];
                        if gto != 0.0 {
                            axpy(gto, &tin[kk * n_in..(kk + 1) * n_in], row);
                        }
                    }
                }
            }
            {
                let gb = &mut grads[layer.b..layer.b + n_out];
                for o in 0..n_out {
                    gb[o] += g[o];
                }
            }
            let need_input_grad = i > 0 || g_in.is_some() || g_in_tan.is_some();
            if need_input_grad {
                g_next.clear();
                g_next.resize(n_in, 0.0);
                gt_next.clear();
                gt_next.resize(k * n_in, 0.0);
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    if g[o] != 0.0 {
                        axpy(g[o], row, g_next);
                    }
                    for kk in 0..k {
                        let gto = gt[kk * n_out + o];
                        if gto != 0.0 {
                            axpy(gto, row, &mut gt_next[kk * n_in..(kk + 1) * n_in]);
                        }
                    }
                }
                std::mem::swap(g, g_next);
                std::mem::swap(gt, gt_next);
            }
        }
        if let Some(gi) = g_in {
            gi.copy_from_slice(&g[..self.spec.input_dim]);
        }
        if let Some(git) = g_in_tan {
            if k > 0 {
                git[..k * self.spec.input_dim].copy_from_slice(&gt[..k * self.spec.input_dim]);
            } else {
                git.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Forward pass without tape bookkeeping beyond the output.
    pub fn eval(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = MlpTape::new();
        self.forward(params, x, &[], &mut tape)?;
        Ok(tape.output().to_vec())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
