//! Sequential layer stack with exact reverse-mode gradients.
//!
//! Tensors are batched: axis 0 is the sample index. Per-sample shapes are
//! `[features]` for dense data and `[channels, height, width]` for images.
//! All shape composition is checked once, in [`Network::build`]; at run time
//! only the input is checked.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::activation::{
    asau_forward, asau_partials, baseline_derivative, baseline_forward, baseline_slope_derivative, AsauParams,
    BaselineKind,
};
use crate::error::{Error, Result};
use crate::nn::layer::{ActivationSpec, Granularity, LayerSpec};
use crate::nn::param::{ParamId, ParamRole, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Upper bound on values per sample at any layer boundary.
const MAX_SAMPLE_ELEMS: usize = 1 << 28;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
enum Act {
    Fixed(BaselineKind),
    /// Leaky/parametric ReLU whose slope lives in the store.
    Slope(ParamId),
    /// Slots hold `channels` values each (1 for per-layer).
    Asau {
        ids: [ParamId; 4],
        channels: usize,
    },
}

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        in_dim: usize,
        out_dim: usize,
        weight: ParamId,
        bias: ParamId,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        weight: ParamId,
        bias: ParamId,
    },
    MaxPool2x2,
    Flatten,
    Upsample2x,
    Activation(Act),
}

/// Values saved by [`Network::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    network_id: u64,
    revision: u64,
    inputs: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
}

impl Cache {
    /// Winning input index of every pooling window, per pooling layer.
    pub fn pool_argmax(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.argmax.iter().flatten()
    }
}

#[derive(Debug)]
pub struct Network {
    id: u64,
    revision: u64,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    /// Per-sample shape entering each layer; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    params: ParamStore,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            id: fresh_id(),
            revision: 0,
            specs: self.specs.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self.params.clone(),
        }
    }
}

fn glorot(rng: &mut SplitMix64, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.uniform(-limit, limit)).collect()
}

fn shape_err(layer: usize, expected: &[usize], got: &[usize]) -> Error {
    Error::ShapeMismatch {
        layer,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

impl Network {
    /// Builds the stack for per-sample `input_shape`, drawing weights from
    /// `rng` in layer order. Activation parameters do not consume random
    /// numbers, so networks that differ only in activations share weights.
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], rng: &mut SplitMix64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Empty("layer list".into()));
        }
        if input_shape.is_empty()
            || input_shape.contains(&0)
            || input_shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .is_none_or(|e| e > MAX_SAMPLE_ELEMS)
        {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = vec![input_shape.to_vec()];
        for (i, spec) in specs.iter().enumerate() {
            let shape = shapes.last().unwrap().clone();
            let (layer, out) = match *spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    if in_dim == 0 || out_dim == 0 {
                        return Err(Error::param(format!("layer {i}: dense dims must be positive")));
                    }
                    if shape != [in_dim] {
                        return Err(shape_err(i, &[in_dim], &shape));
                    }
                    let w = glorot(rng, in_dim * out_dim, in_dim, out_dim);
                    let weight = params.add(format!("layer{i}.weight"), ParamRole::Weight, true, w)?;
                    let bias = params.add(format!("layer{i}.bias"), ParamRole::Bias, true, vec![0.0; out_dim])?;
                    (
                        Layer::Dense {
                            in_dim,
                            out_dim,
                            weight,
                            bias,
                        },
                        vec![out_dim],
                    )
                }
                LayerSpec::Conv2d { in_ch, out_ch } => {
                    if in_ch == 0 || out_ch == 0 {
                        return Err(Error::param(format!("layer {i}: conv channels must be positive")));
                    }
                    if shape.len() != 3 || shape[0] != in_ch {
                        return Err(Error::ShapeMismatch {
                            layer: i,
                            expected: vec![
                                in_ch,
                                shape.get(1).copied().unwrap_or(0),
                                shape.get(2).copied().unwrap_or(0),
                            ],
                            got: shape,
                        });
                    }
                    let w = glorot(rng, out_ch * in_ch * 9, in_ch * 9, out_ch * 9);
                    let weight = params.add(format!("layer{i}.weight"), ParamRole::Weight, true, w)?;
                    let bias = params.add(format!("layer{i}.bias"), ParamRole::Bias, true, vec![0.0; out_ch])?;
                    (
                        Layer::Conv2d {
                            in_ch,
                            out_ch,
                            weight,
                            bias,
                        },
                        vec![out_ch, shape[1], shape[2]],
                    )
                }
                LayerSpec::MaxPool2x2 => {
                    if shape.len() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
                        return Err(Error::Shape(format!(
                            "layer {i}: 2x2 pooling needs [C, H, W] with even H and W, got {shape:?}"
                        )));
                    }
                    (Layer::MaxPool2x2, vec![shape[0], shape[1] / 2, shape[2] / 2])
                }
                LayerSpec::Upsample2x => {
                    if shape.len() != 3 {
                        return Err(Error::Shape(format!(
                            "layer {i}: upsampling needs [C, H, W], got {shape:?}"
                        )));
                    }
                    (Layer::Upsample2x, vec![shape[0], shape[1] * 2, shape[2] * 2])
                }
                LayerSpec::Flatten => (Layer::Flatten, vec![shape.iter().product()]),
                LayerSpec::Activation(act) => {
                    act.validate()?;
                    (
                        Layer::Activation(build_activation(i, &act, &shape, &mut params)?),
                        shape.clone(),
                    )
                }
            };
            let elems = out.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d));
            if !matches!(elems, Some(e) if e <= MAX_SAMPLE_ELEMS) {
                return Err(Error::Shape(format!(
                    "layer {i}: per-sample output {out:?} is too large"
                )));
            }
            layers.push(layer);
            shapes.push(out);
        }
        Ok(Self {
            id: fresh_id(),
            revision: 0,
            specs: specs.to_vec(),
            layers,
            shapes,
            params,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Mutable access to parameters; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        self.revision += 1;
        &mut self.params
    }

    /// Clamps every ASAU `alpha` and `beta` to at least `min`.
    pub fn clamp_asau_gains(&mut self, min: f64) {
        for p in self.params_mut().iter_mut() {
            if matches!(p.role, ParamRole::AsauAlpha | ParamRole::AsauBeta) {
                p.values.iter_mut().for_each(|v| *v = v.max(min));
            }
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape()[1..] != self.shapes[0][..] {
            let mut expected = vec![input.shape()[0]];
            expected.extend_from_slice(&self.shapes[0]);
            return Err(shape_err(0, &expected, input.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Cache)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut argmax = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, am) = self.layer_forward(i, layer, &x);
            inputs.push(x);
            argmax.push(am);
            x = y;
        }
        Ok((
            x,
            Cache {
                network_id: self.id,
                revision: self.revision,
                inputs,
                argmax,
            },
        ))
    }

    /// Forward pass without keeping intermediate values.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = self.layer_forward(i, layer, &x).0;
        }
        Ok(x)
    }

    /// Zeroes all parameter gradients, then accumulates the gradients of the
    /// scalar whose derivative with respect to the output is `output_grad`.
    /// Returns the gradient with respect to the network input.
    pub fn backward(&mut self, cache: &Cache, output_grad: &Tensor) -> Result<Tensor> {
        if cache.network_id != self.id {
            return Err(Error::StaleCache("cache was produced by a different network".into()));
        }
        if cache.revision != self.revision {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache("cache layer count differs".into()));
        }
        let batch = cache.inputs[0].rows();
        let mut expected = vec![batch];
        expected.extend_from_slice(self.output_shape());
        if output_grad.shape() != expected.as_slice() {
            return Err(shape_err(self.layers.len() - 1, &expected, output_grad.shape()));
        }
        self.params.zero_grads();
        let mut g = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            g = self.layer_backward(i, &cache.inputs[i], cache.argmax[i].as_deref(), &g);
        }
        Ok(g)
    }

    fn layer_forward(&self, i: usize, layer: &Layer, x: &Tensor) -> (Tensor, Option<Vec<usize>>) {
        let n = x.rows();
        match layer {
            Layer::Dense {
                in_dim,
                out_dim,
                weight,
                bias,
            } => {
                let w = &self.params.get(*weight).values;
                let b = &self.params.get(*bias).values;
                let mut out = Vec::with_capacity(n * out_dim);
                for s in 0..n {
                    let row = x.row(s);
                    for o in 0..*out_dim {
                        let wr = &w[o * in_dim..(o + 1) * in_dim];
                        out.push(b[o] + wr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
                    }
                }
                (Tensor::new(vec![n, *out_dim], out).unwrap(), None)
            }
            Layer::Conv2d {
                in_ch,
                out_ch,
                weight,
                bias,
            } => {
                let w = &self.params.get(*weight).values;
                let b = &self.params.get(*bias).values;
                let (h, wd) = (x.shape()[2], x.shape()[3]);
                let mut out = Tensor::zeros(&[n, *out_ch, h, wd]);
                conv3x3_forward(x.data(), w, b, out.data_mut(), n, *in_ch, *out_ch, h, wd);
                (out, None)
            }
            Layer::MaxPool2x2 => {
                let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
                let (oh, ow) = (h / 2, w / 2);
                let xd = x.data();
                let mut out = Vec::with_capacity(n * c * oh * ow);
                let mut idx = Vec::with_capacity(n * c * oh * ow);
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for r in 0..oh {
                        for col in 0..ow {
                            // Row-major scan, strict '>' so ties keep the first index.
                            let mut best = base + 2 * r * w + 2 * col;
                            for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                                let k = base + (2 * r + dr) * w + 2 * col + dc;
                                if xd[k] > xd[best] {
                                    best = k;
                                }
                            }
                            out.push(xd[best]);
                            idx.push(best);
                        }
                    }
                }
                (Tensor::new(vec![n, c, oh, ow], out).unwrap(), Some(idx))
            }
            Layer::Upsample2x => {
                let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
                let (oh, ow) = (2 * h, 2 * w);
                let xd = x.data();
                let mut out = Vec::with_capacity(n * c * oh * ow);
                for plane in 0..n * c {
                    for r in 0..oh {
                        let src = plane * h * w + (r / 2) * w;
                        for col in 0..ow {
                            out.push(xd[src + col / 2]);
                        }
                    }
                }
                (Tensor::new(vec![n, c, oh, ow], out).unwrap(), None)
            }
            Layer::Flatten => {
                let mut shape = vec![n];
                shape.extend_from_slice(&self.shapes[i + 1]);
                (x.clone().reshape(shape).unwrap(), None)
            }
            Layer::Activation(act) => (self.act_forward(act, x), None),
        }
    }

    fn layer_backward(&mut self, i: usize, x: &Tensor, argmax: Option<&[usize]>, g: &Tensor) -> Tensor {
        let n = x.rows();
        match &self.layers[i] {
            Layer::Dense {
                in_dim,
                out_dim,
                weight,
                bias,
            } => {
                let (in_dim, out_dim, weight, bias) = (*in_dim, *out_dim, *weight, *bias);
                let w = self.params.get(weight).values.clone();
                let mut gx = vec![0.0; n * in_dim];
                {
                    let gw = &mut self.params.get_mut(weight).grads;
                    for s in 0..n {
                        let row = x.row(s);
                        let gr = g.row(s);
                        for o in 0..out_dim {
                            let go = gr[o];
                            if go == 0.0 {
                                continue;
                            }
                            let gwr = &mut gw[o * in_dim..(o + 1) * in_dim];
                            for (gwv, xv) in gwr.iter_mut().zip(row) {
                                *gwv += go * xv;
                            }
                            let wr = &w[o * in_dim..(o + 1) * in_dim];
                            for (gxv, wv) in gx[s * in_dim..(s + 1) * in_dim].iter_mut().zip(wr) {
                                *gxv += go * wv;
                            }
                        }
                    }
                }
                let gb = &mut self.params.get_mut(bias).grads;
                for s in 0..n {
                    for (gbv, gv) in gb.iter_mut().zip(g.row(s)) {
                        *gbv += gv;
                    }
                }
                Tensor::new(x.shape().to_vec(), gx).unwrap()
            }
            Layer::Conv2d {
                in_ch,
                out_ch,
                weight,
                bias,
            } => {
                let (in_ch, out_ch, weight, bias) = (*in_ch, *out_ch, *weight, *bias);
                let (h, wd) = (x.shape()[2], x.shape()[3]);
                let w = self.params.get(weight).values.clone();
                let mut gx = Tensor::zeros(x.shape());
                conv3x3_backward_input(g.data(), &w, gx.data_mut(), n, in_ch, out_ch, h, wd);
                conv3x3_backward_weight(
                    x.data(),
                    g.data(),
                    &mut self.params.get_mut(weight).grads,
                    n,
                    in_ch,
                    out_ch,
                    h,
                    wd,
                );
                let gb = &mut self.params.get_mut(bias).grads;
                let plane = h * wd;
                for s in 0..n {
                    for (o, gbv) in gb.iter_mut().enumerate() {
                        let start = (s * out_ch + o) * plane;
                        *gbv += g.data()[start..start + plane].iter().sum::<f64>();
                    }
                }
                gx
            }
            Layer::MaxPool2x2 => {
                let mut gx = Tensor::zeros(x.shape());
                let idx = argmax.expect("pooling cache");
                for (k, gv) in idx.iter().zip(g.data()) {
                    gx.data_mut()[*k] += gv;
                }
                gx
            }
            Layer::Upsample2x => {
                let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
                let ow = 2 * w;
                let gd = g.data();
                let mut gx = Tensor::zeros(x.shape());
                let gxd = gx.data_mut();
                for plane in 0..n * c {
                    for r in 0..2 * h {
                        for col in 0..ow {
                            gxd[plane * h * w + (r / 2) * w + col / 2] += gd[plane * 4 * h * w + r * ow + col];
                        }
                    }
                }
                gx
            }
            Layer::Flatten => g.clone().reshape(x.shape().to_vec()).unwrap(),
            Layer::Activation(act) => {
                let act = act.clone();
                self.act_backward(&act, x, g)
            }
        }
    }

    fn act_forward(&self, act: &Act, x: &Tensor) -> Tensor {
        match act {
            Act::Fixed(kind) => x.map(|v| baseline_forward(*kind, v)),
            Act::Slope(id) => {
                let slope = self.params.get(*id).values[0];
                x.map(|v| baseline_forward(BaselineKind::Prelu { slope }, v))
            }
            Act::Asau { ids, channels } => {
                let ps = self.asau_params(ids, *channels);
                let inner = x.row_len() / channels;
                let mut out = x.clone();
                for (k, chunk) in out.data_mut().chunks_mut(inner).enumerate() {
                    let p = &ps[k % channels];
                    chunk.iter_mut().for_each(|v| *v = asau_forward(*v, p));
                }
                out
            }
        }
    }

    fn act_backward(&mut self, act: &Act, x: &Tensor, g: &Tensor) -> Tensor {
        match act {
            Act::Fixed(kind) => {
                let mut gx = g.clone();
                for (gv, xv) in gx.data_mut().iter_mut().zip(x.data()) {
                    *gv *= baseline_derivative(*kind, *xv);
                }
                gx
            }
            Act::Slope(id) => {
                let slope = self.params.get(*id).values[0];
                let kind = BaselineKind::Prelu { slope };
                let mut gx = g.clone();
                let mut gs = 0.0;
                for (gv, xv) in gx.data_mut().iter_mut().zip(x.data()) {
                    gs += *gv * baseline_slope_derivative(*xv);
                    *gv *= baseline_derivative(kind, *xv);
                }
                let p = self.params.get_mut(*id);
                if p.trainable {
                    p.grads[0] += gs;
                }
                gx
            }
            Act::Asau { ids, channels } => {
                let channels = *channels;
                let ps = self.asau_params(ids, channels);
                let inner = x.row_len() / channels;
                let mut gx = g.clone();
                let mut acc = vec![[0.0f64; 4]; channels];
                for (k, (gc, xc)) in gx.data_mut().chunks_mut(inner).zip(x.data().chunks(inner)).enumerate() {
                    let c = k % channels;
                    let a = &mut acc[c];
                    for (gv, xv) in gc.iter_mut().zip(xc) {
                        let d = asau_partials(*xv, &ps[c]);
                        let up = *gv;
                        a[0] += up * d.d_a;
                        a[1] += up * d.d_b;
                        a[2] += up * d.d_alpha;
                        a[3] += up * d.d_beta;
                        *gv = up * d.d_x;
                    }
                }
                for (j, id) in ids.iter().enumerate() {
                    let p = self.params.get_mut(*id);
                    if p.trainable {
                        for (c, a) in acc.iter().enumerate() {
                            p.grads[c] += a[j];
                        }
                    }
                }
                gx
            }
        }
    }

    fn asau_params(&self, ids: &[ParamId; 4], channels: usize) -> Vec<AsauParams> {
        let v = ids.map(|id| &self.params.get(id).values);
        (0..channels)
            .map(|c| AsauParams::from_array([v[0][c], v[1][c], v[2][c], v[3][c]]))
            .collect()
    }
}

fn build_activation(i: usize, spec: &ActivationSpec, shape: &[usize], params: &mut ParamStore) -> Result<Act> {
    match *spec {
        ActivationSpec::Baseline { kind, trainable_slope } => match kind.slope() {
            Some(slope) => {
                let id = params.add(
                    format!("layer{i}.slope"),
                    ParamRole::Slope,
                    trainable_slope,
                    vec![slope],
                )?;
                Ok(Act::Slope(id))
            }
            None => Ok(Act::Fixed(kind)),
        },
        ActivationSpec::Asau {
            params: p,
            trainable,
            granularity,
        } => {
            let channels = match granularity {
                Granularity::PerLayer => 1,
                Granularity::PerChannel => shape[0],
            };
            let mask = trainable.as_array();
            let init = p.as_array();
            let names = ["a", "b", "alpha", "beta"];
            let roles = [
                ParamRole::AsauA,
                ParamRole::AsauB,
                ParamRole::AsauAlpha,
                ParamRole::AsauBeta,
            ];
            let mut ids = [ParamId(0); 4];
            for j in 0..4 {
                ids[j] = params.add(
                    format!("layer{i}.asau.{}", names[j]),
                    roles[j],
                    mask[j],
                    vec![init[j]; channels],
                )?;
            }
            Ok(Act::Asau { ids, channels })
        }
    }
}

/// `out[n, o, r, c] = b[o] + sum_{i, kr, kc} w[o, i, kr, kc] x[n, i, r + kr - 1, c + kc - 1]`
#[allow(clippy::too_many_arguments)]
fn conv3x3_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    out: &mut [f64],
    n: usize,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    wd: usize,
) {
    let plane = h * wd;
    for s in 0..n {
        for o in 0..out_ch {
            let dst = &mut out[(s * out_ch + o) * plane..(s * out_ch + o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..in_ch {
                let src = &x[(s * in_ch + i) * plane..(s * in_ch + i + 1) * plane];
                let k = &w[(o * in_ch + i) * 9..(o * in_ch + i + 1) * 9];
                for kr in 0..3 {
                    for kc in 0..3 {
                        let wv = k[kr * 3 + kc];
                        let (c0, c1) = col_range(kc, wd);
                        for r in row_range(kr, h) {
                            let sr = r + kr - 1;
                            let drow = &mut dst[r * wd + c0..r * wd + c1];
                            let srow = &src[sr * wd + c0 + kc - 1..sr * wd + c1 + kc - 1];
                            for (d, sv) in drow.iter_mut().zip(srow) {
                                *d += wv * sv;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward_input(
    g: &[f64],
    w: &[f64],
    gx: &mut [f64],
    n: usize,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    wd: usize,
) {
    let plane = h * wd;
    for s in 0..n {
        for o in 0..out_ch {
            let go = &g[(s * out_ch + o) * plane..(s * out_ch + o + 1) * plane];
            for i in 0..in_ch {
                let dst = &mut gx[(s * in_ch + i) * plane..(s * in_ch + i + 1) * plane];
                let k = &w[(o * in_ch + i) * 9..(o * in_ch + i + 1) * 9];
                for kr in 0..3 {
                    for kc in 0..3 {
                        let wv = k[kr * 3 + kc];
                        let (c0, c1) = col_range(kc, wd);
                        for r in row_range(kr, h) {
                            let sr = r + kr - 1;
                            let grow = &go[r * wd + c0..r * wd + c1];
                            let xrow = &mut dst[sr * wd + c0 + kc - 1..sr * wd + c1 + kc - 1];
                            for (xv, gv) in xrow.iter_mut().zip(grow) {
                                *xv += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward_weight(
    x: &[f64],
    g: &[f64],
    gw: &mut [f64],
    n: usize,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    wd: usize,
) {
    let plane = h * wd;
    for s in 0..n {
        for o in 0..out_ch {
            let go = &g[(s * out_ch + o) * plane..(s * out_ch + o + 1) * plane];
            for i in 0..in_ch {
                let src = &x[(s * in_ch + i) * plane..(s * in_ch + i + 1) * plane];
                let k = &mut gw[(o * in_ch + i) * 9..(o * in_ch + i + 1) * 9];
                for kr in 0..3 {
                    for kc in 0..3 {
                        let (c0, c1) = col_range(kc, wd);
                        let mut acc = 0.0;
                        for r in row_range(kr, h) {
                            let sr = r + kr - 1;
                            let grow = &go[r * wd + c0..r * wd + c1];
                            let xrow = &src[sr * wd + c0 + kc - 1..sr * wd + c1 + kc - 1];
                            acc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                        k[kr * 3 + kc] += acc;
                    }
                }
            }
        }
    }
}

/// Output rows `r` for which input row `r + kr - 1` is inside the image.
fn row_range(kr: usize, h: usize) -> std::ops::Range<usize> {
    match kr {
        0 => 1..h,
        1 => 0..h,
        _ => 0..h.saturating_sub(1),
    }
}

fn col_range(kc: usize, w: usize) -> (usize, usize) {
    match kc {
        0 => (1, w),
        1 => (0, w),
        _ => (0, w.saturating_sub(1)),
    }
}
