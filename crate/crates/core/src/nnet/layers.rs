//! Layer kernels with hand-written backward passes.
//!
//! Forward passes take their input by value and hand back a [`Cache`] holding
//! whatever the backward pass needs; backward passes accumulate parameter
//! gradients into each [`Param`] and return the gradient for the layer input.

use rand::Rng as _;

use super::lstm::{Lstm, LstmCache};
use super::tensor::Tensor;
use super::NnetError;
use crate::seed::Rng;

/// A trainable parameter block and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Param { value, grad }
    }

    pub fn zeros(n: usize) -> Self {
        Param::new(vec![0.0; n])
    }

    pub fn uniform(n: usize, limit: f64, rng: &mut Rng) -> Self {
        Param::new((0..n).map(|_| rng.gen_range(-limit..=limit)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// He-uniform bound for a ReLU layer with `fan_in` inputs.
pub fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Glorot-uniform bound.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fully connected layer; flattens everything after the batch dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, limit: f64, rng: &mut Rng) -> Self {
        Dense {
            inputs,
            outputs,
            weight: Param::uniform(inputs * outputs, limit, rng),
            bias: Param::zeros(outputs),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        if x.item_len() != self.inputs {
            return Err(NnetError::Shape(format!(
                "dense layer expects {} inputs per item, got shape {:?}",
                self.inputs,
                x.shape()
            )));
        }
        let batch = x.batch();
        let mut out = vec![0.0; batch * self.outputs];
        for (xrow, orow) in x
            .data()
            .chunks_exact(self.inputs)
            .zip(out.chunks_exact_mut(self.outputs))
        {
            for (o, (wrow, b)) in orow
                .iter_mut()
                .zip(self.weight.value.chunks_exact(self.inputs).zip(&self.bias.value))
            {
                *o = b + dot(wrow, xrow);
            }
        }
        Tensor::new(vec![batch, self.outputs], out)
    }

    fn backward(&mut self, x: &Tensor, grad: &Tensor) -> Tensor {
        let mut dx = vec![0.0; x.data().len()];
        for ((xrow, grow), dxrow) in x
            .data()
            .chunks_exact(self.inputs)
            .zip(grad.data().chunks_exact(self.outputs))
            .zip(dx.chunks_exact_mut(self.inputs))
        {
            for (o, &g) in grow.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                self.bias.grad[o] += g;
                let wrow = &self.weight.value[o * self.inputs..(o + 1) * self.inputs];
                let dwrow = &mut self.weight.grad[o * self.inputs..(o + 1) * self.inputs];
                axpy(g, xrow, dwrow);
                axpy(g, wrow, dxrow);
            }
        }
        Tensor::new(x.shape().to_vec(), dx).expect("same shape as input")
    }
}

/// Inner product with eight independent partial sums, which lets the
/// compiler vectorize the reduction.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 8];
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a · x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// 2-D convolution, stride 1, "same" padding (extra padding after for even kernels).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `out × in × k × k`
    pub weight: Param,
    pub bias: Param,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, limit: f64, rng: &mut Rng) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            weight: Param::uniform(out_channels * in_channels * kernel * kernel, limit, rng),
            bias: Param::zeros(out_channels),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize, usize), NnetError> {
        match x.shape() {
            [_, c, h, w] if *c == self.in_channels => Ok((x.batch(), *h, *w)),
            other => Err(NnetError::Shape(format!(
                "conv2d expects (B, {}, H, W), got {other:?}",
                self.in_channels
            ))),
        }
    }

    /// For kernel offset `d`, the output positions whose input tap `pos + d - pad`
    /// is in range, together with that signed offset.
    fn tap_range(&self, d: usize, len: usize) -> (usize, usize, isize) {
        let pad = (self.kernel - 1) / 2;
        let off = d as isize - pad as isize;
        let lo = (-off).max(0) as usize;
        let hi = (len as isize - off).min(len as isize).max(0) as usize;
        (lo, hi.max(lo), off)
    }

    /// Unrolls the batch into a `K × (B·H·W)` patch matrix, `K = C_in·k·k`,
    /// so that the convolution becomes one long multiply-accumulate per
    /// (output channel, tap) pair.
    fn im2col(&self, x: &[f64], batch: usize, h: usize, w: usize) -> Vec<f64> {
        let (cin, k) = (self.in_channels, self.kernel);
        let plane = h * w;
        let cols = batch * plane;
        let mut col = vec![0.0; cin * k * k * cols];
        for ci in 0..cin {
            for dy in 0..k {
                let (y0, y1, oy) = self.tap_range(dy, h);
                for dx in 0..k {
                    let (x0, x1, ox) = self.tap_range(dx, w);
                    let row = &mut col[((ci * k + dy) * k + dx) * cols..][..cols];
                    for n in 0..batch {
                        let inp = &x[(n * cin + ci) * plane..][..plane];
                        for y in y0..y1 {
                            let iy = (y as isize + oy) as usize;
                            let ix0 = (x0 as isize + ox) as usize;
                            row[n * plane + y * w + x0..n * plane + y * w + x1]
                                .copy_from_slice(&inp[iy * w + ix0..iy * w + ix0 + (x1 - x0)]);
                        }
                    }
                }
            }
        }
        col
    }

    /// Adjoint of [`Conv2d::im2col`]: scatter-adds patch gradients into `dx`.
    fn col2im(&self, dcol: &[f64], dx: &mut [f64], batch: usize, h: usize, w: usize) {
        let (cin, k) = (self.in_channels, self.kernel);
        let plane = h * w;
        let cols = batch * plane;
        for ci in 0..cin {
            for dy in 0..k {
                let (y0, y1, oy) = self.tap_range(dy, h);
                for ddx in 0..k {
                    let (x0, x1, ox) = self.tap_range(ddx, w);
                    let row = &dcol[((ci * k + dy) * k + ddx) * cols..][..cols];
                    for n in 0..batch {
                        let dinp = &mut dx[(n * cin + ci) * plane..][..plane];
                        for y in y0..y1 {
                            let iy = (y as isize + oy) as usize;
                            let ix0 = (x0 as isize + ox) as usize;
                            let src = &row[n * plane + y * w + x0..n * plane + y * w + x1];
                            for (d, s) in dinp[iy * w + ix0..iy * w + ix0 + (x1 - x0)].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        let (batch, h, w) = self.dims(x)?;
        let cout = self.out_channels;
        let taps = self.in_channels * self.kernel * self.kernel;
        let plane = h * w;
        let cols = batch * plane;
        let col = self.im2col(x.data(), batch, h, w);
        // channel-major result, transposed to (B, C_out, H, W) at the end
        let mut acc = vec![0.0; cout * cols];
        for start in (0..cols).step_by(COL_BLOCK) {
            let end = (start + COL_BLOCK).min(cols);
            for co in 0..cout {
                let out = &mut acc[co * cols + start..co * cols + end];
                out.iter_mut().for_each(|v| *v = self.bias.value[co]);
                for t in 0..taps {
                    let wv = self.weight.value[co * taps + t];
                    axpy(wv, &col[t * cols + start..t * cols + end], out);
                }
            }
        }
        let mut out = vec![0.0; cout * cols];
        for n in 0..batch {
            for co in 0..cout {
                out[(n * cout + co) * plane..][..plane]
                    .copy_from_slice(&acc[co * cols + n * plane..][..plane]);
            }
        }
        Tensor::new(vec![batch, cout, h, w], out)
    }

    fn backward(&mut self, x: &Tensor, grad: &Tensor) -> Tensor {
        let (batch, h, w) = self.dims(x).expect("validated in forward");
        let cout = self.out_channels;
        let taps = self.in_channels * self.kernel * self.kernel;
        let plane = h * w;
        let cols = batch * plane;
        let col = self.im2col(x.data(), batch, h, w);
        let gd = grad.data();
        let mut g = vec![0.0; cout * cols];
        for n in 0..batch {
            for co in 0..cout {
                g[co * cols + n * plane..][..plane].copy_from_slice(&gd[(n * cout + co) * plane..][..plane]);
            }
        }
        let mut dcol = vec![0.0; taps * cols];
        for start in (0..cols).step_by(COL_BLOCK) {
            let end = (start + COL_BLOCK).min(cols);
            for co in 0..cout {
                let gr = &g[co * cols + start..co * cols + end];
                self.bias.grad[co] += gr.iter().sum::<f64>();
                for t in 0..taps {
                    let c = &col[t * cols + start..t * cols + end];
                    self.weight.grad[co * taps + t] += dot(gr, c);
                    axpy(
                        self.weight.value[co * taps + t],
                        gr,
                        &mut dcol[t * cols + start..t * cols + end],
                    );
                }
            }
        }
        let mut dx = vec![0.0; x.data().len()];
        self.col2im(&dcol, &mut dx, batch, h, w);
        Tensor::new(x.shape().to_vec(), dx).expect("same shape as input")
    }
}

/// Columns processed per pass so that the patch rows being read stay in cache.
const COL_BLOCK: usize = 256;

/// Residual block: `out = shortcut(x) + branch(x)`, with an optional 1×1
/// projection shortcut when the channel count changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub branch: Vec<Layer>,
    pub shortcut: Option<Conv2d>,
}

#[derive(Debug)]
pub struct ResidualCache {
    branch: Vec<Cache>,
    shortcut_input: Option<Tensor>,
}

/// Per-layer state saved by the forward pass.
#[derive(Debug)]
pub enum Cache {
    Input(Tensor),
    Pool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Relu { active: Vec<bool> },
    Dropout { mask: Option<Vec<f64>> },
    Lstm(Box<LstmCache>),
    Residual(Box<ResidualCache>),
    Shape(Vec<usize>),
}

/// Network layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    /// 2×2 max pooling with stride 2 (trailing odd rows/columns dropped).
    MaxPool2d,
    Relu,
    /// Inverted dropout: active only when a training RNG is supplied.
    Dropout { rate: f64 },
    Lstm(Lstm),
    Residual(ResidualBlock),
    /// (B, C, H, W) → (B, C)
    GlobalAvgPool,
    /// Reshapes every batch item to `shape`.
    Reshape { shape: Vec<usize> },
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d => "maxpool2d",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::Lstm(_) => "lstm",
            Layer::Residual(_) => "residual",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Reshape { .. } => "reshape",
        }
    }

    /// Runs the layer. Dropout masks are drawn from `rng` when it is present
    /// (training); without it the layer runs in inference mode.
    pub fn forward(&self, x: Tensor, rng: &mut Option<&mut Rng>) -> Result<(Tensor, Cache), NnetError> {
        let out = match self {
            Layer::Dense(d) => {
                let y = d.forward(&x)?;
                (y, Cache::Input(x))
            }
            Layer::Conv2d(c) => {
                let y = c.forward(&x)?;
                (y, Cache::Input(x))
            }
            Layer::MaxPool2d => max_pool_forward(x)?,
            Layer::Relu => {
                let active: Vec<bool> = x.data().iter().map(|v| *v > 0.0).collect();
                let mut y = x;
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                (y, Cache::Relu { active })
            }
            Layer::Dropout { rate } => match rng.as_deref_mut() {
                Some(r) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..x.data().len())
                        .map(|_| if r.gen::<f64>() >= *rate { 1.0 / keep } else { 0.0 })
                        .collect();
                    let mut y = x;
                    y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    (y, Cache::Dropout { mask: Some(mask) })
                }
                _ => (x, Cache::Dropout { mask: None }),
            },
            Layer::Lstm(l) => {
                let (y, cache) = l.forward(x)?;
                (y, Cache::Lstm(Box::new(cache)))
            }
            Layer::Residual(block) => {
                let shortcut_out;
                let shortcut_input;
                match &block.shortcut {
                    Some(conv) => {
                        shortcut_out = conv.forward(&x)?;
                        shortcut_input = Some(x.clone());
                    }
                    None => {
                        shortcut_out = x.clone();
                        shortcut_input = None;
                    }
                }
                let mut h = x;
                let mut caches = Vec::with_capacity(block.branch.len());
                for layer in &block.branch {
                    let (y, c) = layer.forward(h, rng)?;
                    h = y;
                    caches.push(c);
                }
                if h.shape() != shortcut_out.shape() {
                    return Err(NnetError::Shape(format!(
                        "residual branch output {:?} does not match shortcut {:?}",
                        h.shape(),
                        shortcut_out.shape()
                    )));
                }
                h.data_mut()
                    .iter_mut()
                    .zip(shortcut_out.data())
                    .for_each(|(a, b)| *a += b);
                (
                    h,
                    Cache::Residual(Box::new(ResidualCache {
                        branch: caches,
                        shortcut_input,
                    })),
                )
            }
            Layer::GlobalAvgPool => {
                let (batch, ch, plane) = match x.shape() {
                    [b, c, h, w] => (*b, *c, h * w),
                    other => {
                        return Err(NnetError::Shape(format!(
                            "global average pool expects (B, C, H, W), got {other:?}"
                        )))
                    }
                };
                let out: Vec<f64> = x
                    .data()
                    .chunks_exact(plane)
                    .map(|p| p.iter().sum::<f64>() / plane as f64)
                    .collect();
                let shape = x.shape().to_vec();
                (Tensor::new(vec![batch, ch], out)?, Cache::Shape(shape))
            }
            Layer::Reshape { shape } => {
                let input_shape = x.shape().to_vec();
                let mut full = vec![x.batch()];
                full.extend(shape);
                (x.reshape(full)?, Cache::Shape(input_shape))
            }
        };
        Ok(out)
    }

    /// Backpropagates `grad` (gradient w.r.t. this layer's output).
    pub fn backward(&mut self, cache: Cache, grad: Tensor) -> Tensor {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => d.backward(&x, &grad),
            (Layer::Conv2d(c), Cache::Input(x)) => c.backward(&x, &grad),
            (Layer::MaxPool2d, Cache::Pool { argmax, input_shape }) => {
                let mut dx = Tensor::zeros(input_shape);
                let d = dx.data_mut();
                for (&src, g) in argmax.iter().zip(grad.data()) {
                    d[src] += g;
                }
                dx
            }
            (Layer::Relu, Cache::Relu { active }) => {
                let mut g = grad;
                g.data_mut()
                    .iter_mut()
                    .zip(&active)
                    .for_each(|(v, a)| if !a { *v = 0.0 });
                g
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                let mut g = grad;
                if let Some(mask) = mask {
                    g.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                }
                g
            }
            (Layer::Lstm(l), Cache::Lstm(cache)) => l.backward(*cache, &grad),
            (Layer::Residual(block), Cache::Residual(cache)) => {
                let ResidualCache {
                    branch,
                    shortcut_input,
                } = *cache;
                let mut g = grad.clone();
                for (layer, c) in block.branch.iter_mut().zip(branch).rev() {
                    g = layer.backward(c, g);
                }
                let skip = match (&mut block.shortcut, shortcut_input) {
                    (Some(conv), Some(x)) => conv.backward(&x, &grad),
                    _ => grad,
                };
                g.data_mut()
                    .iter_mut()
                    .zip(skip.data())
                    .for_each(|(a, b)| *a += b);
                g
            }
            (Layer::GlobalAvgPool, Cache::Shape(shape)) => {
                let plane = shape[2] * shape[3];
                let data: Vec<f64> = grad
                    .data()
                    .iter()
                    .flat_map(|g| std::iter::repeat_n(g / plane as f64, plane))
                    .collect();
                Tensor::new(shape, data).expect("input shape")
            }
            (Layer::Reshape { .. }, Cache::Shape(shape)) => {
                grad.reshape(shape).expect("reshape back to input")
            }
            (layer, cache) => panic!("cache {cache:?} does not belong to layer {}", layer.name()),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Lstm(l) => vec![&l.w_input, &l.w_hidden, &l.bias],
            Layer::Residual(block) => {
                let mut out: Vec<&Param> = block.branch.iter().flat_map(Layer::params).collect();
                if let Some(c) = &block.shortcut {
                    out.extend([&c.weight, &c.bias]);
                }
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Lstm(l) => vec![&mut l.w_input, &mut l.w_hidden, &mut l.bias],
            Layer::Residual(block) => {
                let mut out: Vec<&mut Param> =
                    block.branch.iter_mut().flat_map(Layer::params_mut).collect();
                if let Some(c) = &mut block.shortcut {
                    out.extend([&mut c.weight, &mut c.bias]);
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

fn max_pool_forward(x: Tensor) -> Result<(Tensor, Cache), NnetError> {
    let (batch, ch, h, w) = match x.shape() {
        [b, c, h, w] => (*b, *c, *h, *w),
        other => {
            return Err(NnetError::Shape(format!(
                "max pool expects (B, C, H, W), got {other:?}"
            )))
        }
    };
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(NnetError::Shape(format!(
            "max pool needs at least 2×2 input, got {h}×{w}"
        )));
    }
    let xd = x.data();
    let mut out = Vec::with_capacity(batch * ch * oh * ow);
    let mut argmax = Vec::with_capacity(batch * ch * oh * ow);
    for plane in 0..batch * ch {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    let input_shape = x.shape().to_vec();
    Ok((
        Tensor::new(vec![batch, ch, oh, ow], out)?,
        Cache::Pool {
            argmax,
            input_shape,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let x = Tensor::new(
            vec![1, 1, 2, 4],
            vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 8.0],
        )
        .unwrap();
        let mut layer = Layer::MaxPool2d;
        let (y, cache) = layer.forward(x, &mut None).unwrap();
        assert_eq!(y.data(), &[5.0, 9.0]);
        let dx = layer.backward(cache, Tensor::new(vec![1, 1, 1, 2], vec![10.0, 20.0]).unwrap());
        assert_eq!(dx.data(), &[0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0]);
    }

    #[test]
    fn max_pool_brute_force_routing() {
        let mut rng = rng_from_seed(3);
        let data: Vec<f64> = (0..2 * 3 * 5 * 7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![2, 3, 5, 7], data.clone()).unwrap();
        let mut layer = Layer::MaxPool2d;
        let (y, cache) = layer.forward(x, &mut None).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 3]);
        let g: Vec<f64> = (0..y.data().len()).map(|i| i as f64 + 1.0).collect();
        let dx = layer.backward(cache, Tensor::new(y.shape().to_vec(), g.clone()).unwrap());
        // every non-zero input gradient sits at the max of its window
        let mut expected = vec![0.0; data.len()];
        let mut o = 0;
        for plane in 0..6 {
            for wy in 0..2 {
                for wx in 0..3 {
                    let idx: Vec<usize> = (0..2)
                        .flat_map(|dy| (0..2).map(move |dx| (dy, dx)))
                        .map(|(dy, dx)| plane * 35 + (2 * wy + dy) * 7 + 2 * wx + dx)
                        .collect();
                    let best = *idx
                        .iter()
                        .max_by(|a, b| data[**a].total_cmp(&data[**b]))
                        .unwrap();
                    expected[best] += g[o];
                    o += 1;
                }
            }
        }
        assert_eq!(dx.data(), &expected[..]);
    }

    #[test]
    fn dropout_is_identity_without_rng() {
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = Layer::Dropout { rate: 0.5 }.forward(x.clone(), &mut None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let n = 200_000;
        let x = Tensor::new(vec![1, n], vec![2.0; n]).unwrap();
        let mut rng = rng_from_seed(11);
        for rate in [0.1, 0.3, 0.5] {
            let (y, _) = Layer::Dropout { rate }
                .forward(x.clone(), &mut Some(&mut rng))
                .unwrap();
            let mean = y.data().iter().sum::<f64>() / n as f64;
            assert!((mean - 2.0).abs() < 0.02, "rate {rate}: mean {mean}");
        }
    }

    #[test]
    fn zero_branch_residual_is_identity() {
        let mut rng = rng_from_seed(5);
        let mut conv_a = Conv2d::new(3, 3, 3, 0.0, &mut rng);
        let mut conv_b = Conv2d::new(3, 3, 3, 0.0, &mut rng);
        conv_a.bias.value.iter_mut().for_each(|b| *b = 0.0);
        conv_b.bias.value.iter_mut().for_each(|b| *b = 0.0);
        let block = Layer::Residual(ResidualBlock {
            branch: vec![Layer::Conv2d(conv_a), Layer::Relu, Layer::Conv2d(conv_b)],
            shortcut: None,
        });
        let data: Vec<f64> = (0..2 * 3 * 4 * 5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = Tensor::new(vec![2, 3, 4, 5], data).unwrap();
        let (y, _) = block.forward(x.clone(), &mut None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn same_padding_keeps_spatial_shape() {
        let mut rng = rng_from_seed(1);
        for k in [1, 2, 3] {
            let conv = Layer::Conv2d(Conv2d::new(2, 4, k, 0.5, &mut rng));
            let (y, _) = conv.forward(Tensor::zeros(vec![3, 2, 5, 13]), &mut None).unwrap();
            assert_eq!(y.shape(), &[3, 4, 5, 13]);
        }
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = rng_from_seed(9);
        for k in [2, 3] {
            let conv = Conv2d::new(2, 3, k, 1.0, &mut rng);
            let (h, w) = (4, 6);
            let data: Vec<f64> = (0..2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Tensor::new(vec![1, 2, h, w], data.clone()).unwrap();
            let y = conv.forward(&x).unwrap();
            let pad = (k - 1) as isize / 2;
            for co in 0..3 {
                for oy in 0..h {
                    for ox in 0..w {
                        let mut acc = conv.bias.value[co];
                        for ci in 0..2 {
                            for dy in 0..k {
                                for dx in 0..k {
                                    let iy = oy as isize + dy as isize - pad;
                                    let ix = ox as isize + dx as isize - pad;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += conv.weight.value[((co * 2 + ci) * k + dy) * k + dx]
                                        * data[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        let got = y.data()[(co * h + oy) * w + ox];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
