//! Small feed-forward classifiers with hand-written backpropagation.
//!
//! All parameters live in one flat `f64` vector. Each parametrized layer owns
//! a contiguous slice laid out as its weights (row-major, output index
//! slowest) followed by its biases. Activations travel between layers as
//! `batch × features` matrices; convolutional feature maps are flattened as
//! `channel × row × column`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZooError};

/// Network architecture. Hidden activations are ReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Arch {
    /// Fully connected layers `sizes[0] → sizes[1] → … → sizes[last]`.
    Mlp { sizes: Vec<usize> },
    /// conv3×3(`conv1`) → ReLU → maxpool2 → conv3×3(`conv2`) → ReLU → maxpool2 → dense.
    /// Convolutions use zero padding 1 and stride 1.
    SmallCnn { channels: usize, height: usize, width: usize, classes: usize, conv1: usize, conv2: usize },
}

impl Arch {
    pub fn mlp(sizes: &[usize]) -> Self {
        Arch::Mlp { sizes: sizes.to_vec() }
    }

    pub fn small_cnn(channels: usize, height: usize, width: usize, classes: usize) -> Self {
        Arch::SmallCnn { channels, height, width, classes, conv1: 16, conv2: 32 }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Arch::Mlp { sizes } => sizes[0],
            Arch::SmallCnn { channels, height, width, .. } => channels * height * width,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Arch::Mlp { sizes } => *sizes.last().unwrap(),
            Arch::SmallCnn { classes, .. } => *classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Mean softmax cross-entropy.
    #[default]
    CrossEntropy,
    /// Mean over the batch of `Σ_k (output_k − onehot_k)²`.
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    Dense { inp: usize, out: usize },
    Conv3x3 { cin: usize, cout: usize, h: usize, w: usize },
    Relu,
    MaxPool2 { c: usize, h: usize, w: usize },
}

impl Layer {
    fn num_params(&self) -> usize {
        match *self {
            Layer::Dense { inp, out } => inp * out + out,
            Layer::Conv3x3 { cin, cout, .. } => cout * cin * 9 + cout,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inp, .. } => inp,
            Layer::Conv3x3 { cin, .. } => cin * 9,
            _ => 0,
        }
    }

    fn weight_count(&self) -> usize {
        self.num_params() - self.bias_count()
    }

    fn bias_count(&self) -> usize {
        match *self {
            Layer::Dense { out, .. } => out,
            Layer::Conv3x3 { cout, .. } => cout,
            _ => 0,
        }
    }
}

/// Weights and biases of one parametrized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `out × fan_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// A mini-batch: one input row per sample, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Architecture plus loss, with the parameter layout resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Arch,
    loss: Loss,
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    num_params: usize,
}

/// Flat parameters together with the architecture and the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub model: Model,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl ModelState {
    pub fn init(arch: Arch, loss: Loss, seed: u64) -> Result<Self> {
        let model = Model::new(arch, loss)?;
        let params = model.init_params(seed);
        Ok(Self { model, params, seed })
    }
}

impl Model {
    pub fn new(arch: Arch, loss: Loss) -> Result<Self> {
        let layers = match &arch {
            Arch::Mlp { sizes } => {
                if sizes.len() < 2 || sizes.contains(&0) {
                    return Err(ZooError::InvalidArgument(format!("bad MLP sizes {sizes:?}")));
                }
                let mut layers = Vec::new();
                for (i, w) in sizes.windows(2).enumerate() {
                    if i > 0 {
                        layers.push(Layer::Relu);
                    }
                    layers.push(Layer::Dense { inp: w[0], out: w[1] });
                }
                layers
            }
            &Arch::SmallCnn { channels, height, width, classes, conv1, conv2 } => {
                if channels == 0 || classes == 0 || conv1 == 0 || conv2 == 0 {
                    return Err(ZooError::InvalidArgument(format!("bad CNN shape {arch:?}")));
                }
                if height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0 {
                    return Err(ZooError::InvalidArgument(format!(
                        "CNN input {height}x{width} must be a positive multiple of 4"
                    )));
                }
                let (h2, w2) = (height / 2, width / 2);
                vec![
                    Layer::Conv3x3 { cin: channels, cout: conv1, h: height, w: width },
                    Layer::Relu,
                    Layer::MaxPool2 { c: conv1, h: height, w: width },
                    Layer::Conv3x3 { cin: conv1, cout: conv2, h: h2, w: w2 },
                    Layer::Relu,
                    Layer::MaxPool2 { c: conv2, h: h2, w: w2 },
                    Layer::Dense { inp: conv2 * (h2 / 2) * (w2 / 2), out: classes },
                ]
            }
        };
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.num_params();
        }
        Ok(Self { arch, loss, layers, offsets, num_params: total })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// Kaiming-uniform weights `U(±√(6/fan_in))`, biases `U(±1/√fan_in)`.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.num_params);
        for l in self.layers.iter().filter(|l| l.num_params() > 0) {
            let fan_in = l.fan_in() as f64;
            let wb = (6.0 / fan_in).sqrt();
            let bb = 1.0 / fan_in.sqrt();
            params.extend((0..l.weight_count()).map(|_| rng.random_range(-wb..wb)));
            params.extend((0..l.bias_count()).map(|_| rng.random_range(-bb..bb)));
        }
        params
    }

    /// Splits a flat vector into per-layer weights and biases.
    pub fn unflatten(&self, params: &[f64]) -> Result<Vec<LayerParams>> {
        self.check_params(params)?;
        Ok(self
            .param_layers()
            .map(|(l, off)| {
                let (w, b) = layer_views(l, &params[off..off + l.num_params()]);
                LayerParams { weights: w.to_owned(), bias: Array1::from(b.to_vec()) }
            })
            .collect())
    }

    pub fn flatten(&self, layers: &[LayerParams]) -> Result<Vec<f64>> {
        let expected: Vec<_> = self.param_layers().collect();
        if layers.len() != expected.len() {
            return Err(ZooError::ShapeMismatch { expected: expected.len(), got: layers.len() });
        }
        let mut out = Vec::with_capacity(self.num_params);
        for (lp, (l, _)) in layers.iter().zip(expected) {
            if lp.weights.len() != l.weight_count() || lp.bias.len() != l.bias_count() {
                return Err(ZooError::ShapeMismatch { expected: l.num_params(), got: lp.weights.len() + lp.bias.len() });
            }
            out.extend(lp.weights.iter());
            out.extend(lp.bias.iter());
        }
        Ok(out)
    }

    fn param_layers(&self) -> impl Iterator<Item = (&Layer, usize)> {
        self.layers.iter().zip(self.offsets.iter().copied()).filter(|(l, _)| l.num_params() > 0)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(ZooError::ShapeMismatch { expected: self.num_params, got: params.len() });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Err(ZooError::InvalidArgument("empty batch".into()));
        }
        if batch.inputs.nrows() != batch.labels.len() {
            return Err(ZooError::ShapeMismatch { expected: batch.labels.len(), got: batch.inputs.nrows() });
        }
        if batch.inputs.ncols() != self.arch.input_size() {
            return Err(ZooError::ShapeMismatch { expected: self.arch.input_size(), got: batch.inputs.ncols() });
        }
        let classes = self.arch.num_classes();
        if let Some(&label) = batch.labels.iter().find(|&&l| l >= classes) {
            return Err(ZooError::LabelOutOfRange { label, classes });
        }
        Ok(())
    }

    fn forward_cached(&self, params: &[f64], inputs: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Vec<usize>>) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_idx = Vec::new();
        acts.push(inputs.clone());
        for (l, &off) in self.layers.iter().zip(&self.offsets) {
            let x = acts.last().unwrap();
            let p = &params[off..off + l.num_params()];
            let y = match *l {
                Layer::Dense { .. } => {
                    let (w, b) = layer_views(l, p);
                    let mut y = x.dot(&w.t());
                    y += &ArrayView1::from(b);
                    y
                }
                Layer::Conv3x3 { cin, cout, h, w } => conv_forward(x, p, cin, cout, h, w),
                Layer::Relu => x.mapv(|v| v.max(0.0)),
                Layer::MaxPool2 { c, h, w } => {
                    let (y, idx) = pool_forward(x, c, h, w);
                    pool_idx.push(idx);
                    y
                }
            };
            acts.push(y);
        }
        (acts, pool_idx)
    }

    /// Output-layer values (logits for cross-entropy).
    pub fn logits(&self, params: &[f64], inputs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_params(params)?;
        if inputs.ncols() != self.arch.input_size() {
            return Err(ZooError::ShapeMismatch { expected: self.arch.input_size(), got: inputs.ncols() });
        }
        Ok(self.forward_cached(params, inputs).0.pop().unwrap())
    }

    /// Mean batch loss and the output-layer values.
    pub fn forward_loss(&self, params: &[f64], batch: &Batch) -> Result<(f64, Array2<f64>)> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        let logits = self.forward_cached(params, &batch.inputs).0.pop().unwrap();
        let (loss, _) = loss_and_delta(self.loss, &logits, &batch.labels, false);
        Ok((loss, logits))
    }

    /// Mean batch loss and its exact gradient with respect to the flat parameters.
    pub fn loss_and_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        let (acts, mut pool_idx) = self.forward_cached(params, &batch.inputs);
        let (loss, delta) = loss_and_delta(self.loss, acts.last().unwrap(), &batch.labels, true);
        let mut delta = delta.unwrap();
        let mut grad = vec![0.0; self.num_params];

        for (i, (l, &off)) in self.layers.iter().zip(&self.offsets).enumerate().rev() {
            let x = &acts[i];
            let p = &params[off..off + l.num_params()];
            let need_input_grad = i > 0;
            delta = match *l {
                Layer::Dense { inp, out } => {
                    let (w, _) = layer_views(l, p);
                    let (gw, gb) = grad[off..off + l.num_params()].split_at_mut(inp * out);
                    let mut gw = ArrayViewMut2::from_shape((out, inp), gw).unwrap();
                    gw.assign(&delta.t().dot(x));
                    for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                        *g = s;
                    }
                    if need_input_grad {
                        delta.dot(&w)
                    } else {
                        delta
                    }
                }
                Layer::Conv3x3 { cin, cout, h, w } => conv_backward(
                    x,
                    &delta,
                    p,
                    &mut grad[off..off + l.num_params()],
                    cin,
                    cout,
                    h,
                    w,
                    need_input_grad,
                ),
                Layer::Relu => {
                    let mut d = delta;
                    d.zip_mut_with(x, |g, &xv| {
                        if xv <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    d
                }
                Layer::MaxPool2 { .. } => {
                    let idx = pool_idx.pop().unwrap();
                    pool_backward(&delta, &idx, x.ncols())
                }
            };
        }
        Ok((loss, grad))
    }

    /// Mean loss and fraction of correct argmax predictions.
    pub fn evaluate(&self, params: &[f64], batch: &Batch) -> Result<(f64, f64)> {
        let (loss, logits) = self.forward_loss(params, batch)?;
        let correct = logits
            .outer_iter()
            .zip(&batch.labels)
            .filter(|(row, &label)| argmax(row.as_slice().unwrap()) == label)
            .count();
        Ok((loss, correct as f64 / batch.len() as f64))
    }
}

fn layer_views<'a>(l: &Layer, p: &'a [f64]) -> (ArrayView2<'a, f64>, &'a [f64]) {
    let (out, fan_in) = match *l {
        Layer::Dense { inp, out } => (out, inp),
        Layer::Conv3x3 { cin, cout, .. } => (cout, cin * 9),
        _ => unreachable!("layer has no parameters"),
    };
    let (w, b) = p.split_at(out * fan_in);
    (ArrayView2::from_shape((out, fan_in), w).unwrap(), b)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and, if requested, its gradient with respect to the outputs.
fn loss_and_delta(loss: Loss, out: &Array2<f64>, labels: &[usize], with_delta: bool) -> (f64, Option<Array2<f64>>) {
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut delta = with_delta.then(|| Array2::zeros(out.raw_dim()));
    for (i, (row, &label)) in out.outer_iter().zip(labels).enumerate() {
        match loss {
            Loss::CrossEntropy => {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                let log_z = max + sum.ln();
                total += log_z - row[label];
                if let Some(d) = delta.as_mut() {
                    for (k, &v) in row.iter().enumerate() {
                        let p = (v - log_z).exp();
                        d[[i, k]] = (p - if k == label { 1.0 } else { 0.0 }) / n;
                    }
                }
            }
            Loss::SquaredError => {
                for (k, &v) in row.iter().enumerate() {
                    let e = v - if k == label { 1.0 } else { 0.0 };
                    total += e * e;
                    if let Some(d) = delta.as_mut() {
                        d[[i, k]] = 2.0 * e / n;
                    }
                }
            }
        }
    }
    (total / n, delta)
}

/// Columns of the zero-padded 3×3 neighbourhoods: `(cin·9) × (h·w)`.
fn im2col(x: &[f64], cin: usize, h: usize, w: usize) -> Array2<f64> {
    let mut cols = Array2::zeros((cin * 9, h * w));
    for c in 0..cin {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let mut row = cols.row_mut(c * 9 + ky * 3 + kx);
                let row = row.as_slice_mut().unwrap();
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            row[y * w + xx] = plane[sy as usize * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`], accumulated into `dx`.
fn col2im(cols: &Array2<f64>, dx: &mut [f64], cin: usize, h: usize, w: usize) {
    for c in 0..cin {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = cols.row(c * 9 + ky * 3 + kx);
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward(x: &Array2<f64>, p: &[f64], cin: usize, cout: usize, h: usize, w: usize) -> Array2<f64> {
    let (wk, b) = layer_views(&Layer::Conv3x3 { cin, cout, h, w }, p);
    let mut y = Array2::zeros((x.nrows(), cout * h * w));
    for (xs, mut ys) in x.outer_iter().zip(y.outer_iter_mut()) {
        let cols = im2col(xs.as_slice().unwrap(), cin, h, w);
        let mut out = wk.dot(&cols);
        for (mut r, &bias) in out.outer_iter_mut().zip(b) {
            r += bias;
        }
        ys.assign(&ArrayView1::from(out.as_slice().unwrap()));
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Array2<f64>,
    delta: &Array2<f64>,
    p: &[f64],
    grad: &mut [f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    need_input_grad: bool,
) -> Array2<f64> {
    let (wk, _) = layer_views(&Layer::Conv3x3 { cin, cout, h, w }, p);
    let (gw, gb) = grad.split_at_mut(cout * cin * 9);
    let mut gw = ArrayViewMut2::from_shape((cout, cin * 9), gw).unwrap();
    let mut dx = if need_input_grad { Array2::zeros(x.raw_dim()) } else { Array2::zeros((0, 0)) };
    for (s, (xs, ds)) in x.outer_iter().zip(delta.outer_iter()).enumerate() {
        let cols = im2col(xs.as_slice().unwrap(), cin, h, w);
        let d = ArrayView2::from_shape((cout, h * w), ds.as_slice().unwrap()).unwrap();
        gw += &d.dot(&cols.t());
        for (g, row) in gb.iter_mut().zip(d.outer_iter()) {
            *g += row.sum();
        }
        if need_input_grad {
            let dcols = wk.t().dot(&d);
            let mut dxs = dx.row_mut(s);
            col2im(&dcols, dxs.as_slice_mut().unwrap(), cin, h, w);
        }
    }
    dx
}

/// 2×2 max pooling with stride 2; also returns the flat input index of each maximum.
fn pool_forward(x: &Array2<f64>, c: usize, h: usize, w: usize) -> (Array2<f64>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let fo = c * ho * wo;
    let mut y = Array2::zeros((x.nrows(), fo));
    let mut idx = vec![0usize; x.nrows() * fo];
    for (s, xs) in x.outer_iter().enumerate() {
        let xs = xs.as_slice().unwrap();
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = ch * h * w + 2 * oy * w + 2 * ox;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if xs[cand] > xs[best] {
                            best = cand;
                        }
                    }
                    let o = ch * ho * wo + oy * wo + ox;
                    y[[s, o]] = xs[best];
                    idx[s * fo + o] = best;
                }
            }
        }
    }
    (y, idx)
}

fn pool_backward(delta: &Array2<f64>, idx: &[usize], in_features: usize) -> Array2<f64> {
    let fo = delta.ncols();
    let mut dx = Array2::zeros((delta.nrows(), in_features));
    for (s, ds) in delta.outer_iter().enumerate() {
        for (o, &g) in ds.iter().enumerate() {
            dx[[s, idx[s * fo + o]]] += g;
        }
    }
    dx
}

/// Largest relative disagreement between central finite differences and
/// backpropagation over the given coordinates:
/// `max |g_fd − g_bp| / max(|g_fd|, |g_bp|, 1e-8)`.
pub fn fd_check(model: &Model, params: &[f64], batch: &Batch, coords: &[usize], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ZooError::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    if let Some(&c) = coords.iter().find(|&&c| c >= model.num_params()) {
        return Err(ZooError::InvalidArgument(format!("coordinate {c} out of range")));
    }
    let (_, grad) = model.loss_and_grad(params, batch)?;
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &c in coords {
        let orig = p[c];
        p[c] = orig + h;
        let (up, _) = model.forward_loss(&p, batch)?;
        p[c] = orig - h;
        let (down, _) = model.forward_loss(&p, batch)?;
        p[c] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[c]).abs() / fd.abs().max(grad[c].abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
