use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::real::{gemm, Real};
use crate::data::ImageShape;
use crate::{seeded, Error, Result};

/// Backbone family. The embedding is always the input of the final linear head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    /// 3×3 same-padded conv + ReLU + 2×2 max-pool blocks, then a ReLU hidden layer and the head.
    Conv { channels: Vec<usize>, hidden: usize },
    /// Fully connected ReLU layers then the head; with no hidden layer the embedding is the raw input.
    Mlp { hidden: Vec<usize> },
}

impl Arch {
    pub fn small_conv() -> Self {
        Arch::Conv {
            channels: vec![8, 16],
            hidden: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    Conv {
        cin: usize,
        cout: usize,
        h: usize,
        w: usize,
        offset: usize,
    },
    Relu,
    MaxPool {
        c: usize,
        h: usize,
        w: usize,
    },
    Dense {
        nin: usize,
        nout: usize,
        offset: usize,
    },
}

const KSIZE: usize = 3;

impl Layer {
    fn n_params(&self) -> usize {
        match *self {
            Layer::Conv { cin, cout, .. } => cout * cin * KSIZE * KSIZE + cout,
            Layer::Dense { nin, nout, .. } => nout * nin + nout,
            _ => 0,
        }
    }

    fn out_len(&self, in_len: usize) -> usize {
        match *self {
            Layer::Conv { cout, h, w, .. } => cout * h * w,
            Layer::Relu => in_len,
            Layer::MaxPool { c, h, w } => c * (h / 2) * (w / 2),
            Layer::Dense { nout, .. } => nout,
        }
    }
}

/// Cached intermediate values of one batched forward pass.
pub struct ForwardPass<S> {
    pub(crate) n: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub(crate) acts: Vec<Vec<S>>,
    cols: Vec<Vec<S>>,
    argmax: Vec<Vec<u32>>,
}

impl<S: Real> ForwardPass<S> {
    pub fn logits(&self) -> &[S] {
        self.acts.last().expect("nonempty network")
    }

    /// Penultimate features, N × embed_dim.
    pub fn embeddings(&self) -> &[S] {
        &self.acts[self.acts.len() - 2]
    }
}

/// Feed-forward network with all parameters in one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    arch: Arch,
    input: ImageShape,
    layers: Vec<Layer>,
    params: Vec<S>,
}

impl<S: Real> Network<S> {
    /// Builds the network and draws He-normal weights (zero biases) from `seed`.
    pub fn new(arch: &Arch, input: ImageShape, n_out: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(arch, input, n_out)?;
        let mut rng = seeded(seed);
        for layer in &net.layers {
            let (offset, n_w, fan_in) = match *layer {
                Layer::Conv { cin, cout, offset, .. } => (offset, cout * cin * KSIZE * KSIZE, cin * KSIZE * KSIZE),
                Layer::Dense { nin, nout, offset } => (offset, nout * nin, nin),
                _ => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut net.params[offset..offset + n_w] {
                *p = S::lit(normal.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn zeroed(arch: &Arch, input: ImageShape, n_out: usize) -> Result<Self> {
        if n_out == 0 || input.is_empty() {
            return Err(Error::Parameter("network needs nonempty input and output".into()));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |layer: Layer, layers: &mut Vec<Layer>| {
            let n = layer.n_params();
            let layer = match layer {
                Layer::Conv { cin, cout, h, w, .. } => Layer::Conv { cin, cout, h, w, offset },
                Layer::Dense { nin, nout, .. } => Layer::Dense { nin, nout, offset },
                other => other,
            };
            offset += n;
            layers.push(layer);
        };
        let mut features = input.len();
        match arch {
            Arch::Conv { channels, hidden } => {
                let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
                for &cout in channels {
                    if h < 2 || w < 2 {
                        return Err(Error::Parameter(format!(
                            "input {}×{} too small for {} pooling blocks",
                            input.height,
                            input.width,
                            channels.len()
                        )));
                    }
                    push(Layer::Conv { cin: c, cout, h, w, offset: 0 }, &mut layers);
                    push(Layer::Relu, &mut layers);
                    push(Layer::MaxPool { c: cout, h, w }, &mut layers);
                    c = cout;
                    h /= 2;
                    w /= 2;
                }
                features = c * h * w;
                push(Layer::Dense { nin: features, nout: *hidden, offset: 0 }, &mut layers);
                push(Layer::Relu, &mut layers);
                features = *hidden;
            }
            Arch::Mlp { hidden } => {
                for &width in hidden {
                    push(Layer::Dense { nin: features, nout: width, offset: 0 }, &mut layers);
                    push(Layer::Relu, &mut layers);
                    features = width;
                }
            }
        }
        push(Layer::Dense { nin: features, nout: n_out, offset: 0 }, &mut layers);
        Ok(Self {
            arch: arch.clone(),
            input,
            layers,
            params: vec![S::zero(); offset],
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn input_shape(&self) -> ImageShape {
        self.input
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_out(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { nout, .. }) => *nout,
            _ => unreachable!("network ends in a dense head"),
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { nin, .. }) => *nin,
            _ => unreachable!("network ends in a dense head"),
        }
    }

    /// Converts to another element type (f32 ↔ f64).
    pub fn cast<T: Real>(&self) -> Network<T> {
        Network {
            arch: self.arch.clone(),
            input: self.input,
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| T::lit(p.as_f64())).collect(),
        }
    }

    /// Appends `extra` output units: existing head rows are kept, new rows and biases are zero.
    pub fn extend_head(&mut self, extra: usize) {
        if extra == 0 {
            return;
        }
        let Some(Layer::Dense { nin, nout, offset }) = self.layers.last_mut() else {
            unreachable!("network ends in a dense head");
        };
        let (nin_, nout_, off) = (*nin, *nout, *offset);
        *nout += extra;
        let w_end = off + nout_ * nin_;
        let mut params = Vec::with_capacity(self.params.len() + extra * (nin_ + 1));
        params.extend_from_slice(&self.params[..w_end]);
        params.extend(std::iter::repeat_n(S::zero(), extra * nin_));
        params.extend_from_slice(&self.params[w_end..]);
        params.extend(std::iter::repeat_n(S::zero(), extra));
        self.params = params;
    }

    /// Batched forward pass; `x` holds `n` flattened inputs back to back.
    pub fn forward(&self, x: Vec<S>, n: usize) -> ForwardPass<S> {
        assert_eq!(x.len(), n * self.input.len(), "input batch has wrong length");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut cols = Vec::new();
        let mut argmax = Vec::new();
        acts.push(x);
        for layer in &self.layers {
            let input = acts.last().expect("input present");
            let in_len = input.len() / n.max(1);
            let out_len = layer.out_len(in_len);
            let mut out = vec![S::zero(); n * out_len];
            match *layer {
                Layer::Conv { cin, cout, h, w, offset } => {
                    let hw = h * w;
                    let kk = cin * KSIZE * KSIZE;
                    let weights = &self.params[offset..offset + cout * kk];
                    let bias = &self.params[offset + cout * kk..offset + cout * kk + cout];
                    let mut col = vec![S::zero(); n * kk * hw];
                    for s in 0..n {
                        let col_s = &mut col[s * kk * hw..(s + 1) * kk * hw];
                        im2col(&input[s * cin * hw..(s + 1) * cin * hw], cin, h, w, col_s);
                        let out_s = &mut out[s * cout * hw..(s + 1) * cout * hw];
                        for (co, row) in out_s.chunks_exact_mut(hw).enumerate() {
                            row.fill(bias[co]);
                        }
                        gemm(false, false, cout, hw, kk, S::one(), weights, col_s, S::one(), out_s);
                    }
                    cols.push(col);
                }
                Layer::Relu => {
                    for (o, &i) in out.iter_mut().zip(input.iter()) {
                        *o = if i > S::zero() { i } else { S::zero() };
                    }
                }
                Layer::MaxPool { c, h, w } => {
                    let (oh, ow) = (h / 2, w / 2);
                    let mut idx = vec![0u32; n * c * oh * ow];
                    for sc in 0..n * c {
                        let plane = &input[sc * h * w..(sc + 1) * h * w];
                        for y in 0..oh {
                            for x in 0..ow {
                                let mut best = (2 * y) * w + 2 * x;
                                for cand in [best + 1, best + w, best + w + 1] {
                                    if plane[cand] > plane[best] {
                                        best = cand;
                                    }
                                }
                                let o = sc * oh * ow + y * ow + x;
                                out[o] = plane[best];
                                idx[o] = best as u32;
                            }
                        }
                    }
                    argmax.push(idx);
                }
                Layer::Dense { nin, nout, offset } => {
                    let weights = &self.params[offset..offset + nout * nin];
                    let bias = &self.params[offset + nout * nin..offset + nout * nin + nout];
                    for row in out.chunks_exact_mut(nout) {
                        row.copy_from_slice(bias);
                    }
                    gemm(false, true, n, nout, nin, S::one(), input, weights, S::one(), &mut out);
                }
            }
            acts.push(out);
        }
        ForwardPass { n, acts, cols, argmax }
    }

    /// Back-propagates `dlogits` (N × n_out) and accumulates into `grads`.
    pub fn backward(&self, pass: &ForwardPass<S>, dlogits: &[S], grads: &mut [S]) {
        assert_eq!(grads.len(), self.params.len());
        let n = pass.n;
        let mut delta = dlogits.to_vec();
        let mut conv_i = pass.cols.len();
        let mut pool_i = pass.argmax.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &pass.acts[li];
            let need_input_grad = li > 0;
            match *layer {
                Layer::Conv { cin, cout, h, w, offset } => {
                    conv_i -= 1;
                    let col = &pass.cols[conv_i];
                    let hw = h * w;
                    let kk = cin * KSIZE * KSIZE;
                    let weights = &self.params[offset..offset + cout * kk];
                    let (gw, rest) = grads[offset..].split_at_mut(cout * kk);
                    let gb = &mut rest[..cout];
                    let mut din = if need_input_grad { vec![S::zero(); n * cin * hw] } else { Vec::new() };
                    let mut dcol = vec![S::zero(); kk * hw];
                    for s in 0..n {
                        let d_s = &delta[s * cout * hw..(s + 1) * cout * hw];
                        let col_s = &col[s * kk * hw..(s + 1) * kk * hw];
                        gemm(false, true, cout, kk, hw, S::one(), d_s, col_s, S::one(), gw);
                        for (co, row) in d_s.chunks_exact(hw).enumerate() {
                            gb[co] += row.iter().copied().sum();
                        }
                        if need_input_grad {
                            gemm(true, false, kk, hw, cout, S::one(), weights, d_s, S::zero(), &mut dcol);
                            col2im(&dcol, cin, h, w, &mut din[s * cin * hw..(s + 1) * cin * hw]);
                        }
                    }
                    delta = din;
                }
                Layer::Relu => {
                    for (d, &i) in delta.iter_mut().zip(input.iter()) {
                        if i <= S::zero() {
                            *d = S::zero();
                        }
                    }
                }
                Layer::MaxPool { c, h, w } => {
                    pool_i -= 1;
                    let idx = &pass.argmax[pool_i];
                    let (oh, ow) = (h / 2, w / 2);
                    let mut din = vec![S::zero(); n * c * h * w];
                    for sc in 0..n * c {
                        for o in 0..oh * ow {
                            let k = sc * oh * ow + o;
                            din[sc * h * w + idx[k] as usize] += delta[k];
                        }
                    }
                    delta = din;
                }
                Layer::Dense { nin, nout, offset } => {
                    let weights = &self.params[offset..offset + nout * nin];
                    let (gw, rest) = grads[offset..].split_at_mut(nout * nin);
                    let gb = &mut rest[..nout];
                    gemm(true, false, nout, nin, n, S::one(), &delta, input, S::one(), gw);
                    for row in delta.chunks_exact(nout) {
                        for (g, &d) in gb.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                    if need_input_grad {
                        let mut din = vec![S::zero(); n * nin];
                        gemm(false, false, n, nin, nout, S::one(), &delta, weights, S::zero(), &mut din);
                        delta = din;
                    }
                }
            }
        }
    }

    pub(crate) fn from_parts(arch: Arch, input: ImageShape, n_out: usize, params: Vec<S>) -> Result<Self> {
        let mut net = Self::zeroed(&arch, input, n_out)?;
        if params.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }
}

fn im2col<S: Real>(input: &[S], cin: usize, h: usize, w: usize, col: &mut [S]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let row = &mut col[((ci * KSIZE + ky) * KSIZE + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(S::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = S::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = S::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im<S: Real>(col: &[S], cin: usize, h: usize, w: usize, out: &mut [S]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let row = &col[((ci * KSIZE + ky) * KSIZE + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] += src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] += src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] += src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}
