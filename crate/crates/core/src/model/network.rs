use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scalar::Strided;
use super::{Dual, Param, ParamSet, Real};
use crate::data::{ImageTensor, PairedSample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean absolute error.
    L1,
    /// Mean squared error.
    SquaredL2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    /// Adds the input to the network output.
    pub residual: bool,
    pub loss: LossKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 5,
            hidden_channels: 16,
            kernel: 3,
            residual: true,
            loss: LossKind::L1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::Config(format!(
                "model.num_layers must be >= 2, got {}",
                self.num_layers
            )));
        }
        if self.hidden_channels == 0 {
            return Err(Error::Config("model.hidden_channels must be positive".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "model.kernel must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// Loss of one sample, its per-parameter gradients and its input gradient.
type SampleGrad<S> = (S, Vec<Vec<S>>, Vec<S>);

/// Plain convolutional restoration network: `num_layers` same-padded
/// convolutions with ReLU between them and an optional global skip.
/// Parameters are passed explicitly to every call.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
}

/// Layer inputs recorded during a forward pass.
struct Trace<S> {
    activations: Vec<Vec<S>>,
    output: Vec<S>,
}

struct Conv<'a, S> {
    weight: &'a [S],
    bias: &'a [S],
    cin: usize,
    cout: usize,
    k: usize,
}

/// Row range `[lo, hi)` of output positions whose tap at offset `d` lands
/// inside `[0, n)`.
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo, hi)
}

impl<S: Real> Conv<'_, S> {
    fn offsets(&self) -> impl Iterator<Item = (usize, isize, isize)> + '_ {
        let r = (self.k / 2) as isize;
        let k = self.k;
        (0..k * k).map(move |t| (t, (t / k) as isize - r, (t % k) as isize - r))
    }

    /// Patch matrix with row `ci * k² + tap` and one column per pixel;
    /// taps falling outside the image read zero.
    fn im2col(&self, input: &[S], h: usize, w: usize) -> Vec<S> {
        let hw = h * w;
        let kk = self.k * self.k;
        let mut col = vec![S::zero(); self.cin * kk * hw];
        for ci in 0..self.cin {
            let inp = &input[ci * hw..(ci + 1) * hw];
            for (t, dy, dx) in self.offsets() {
                let row = &mut col[(ci * kk + t) * hw..][..hw];
                let (y0, y1) = valid_range(h, dy);
                let (x0, x1) = valid_range(w, dx);
                for y in y0..y1 {
                    let src = ((y as isize + dy) as usize) * w;
                    let start = (src as isize + x0 as isize + dx) as usize;
                    row[y * w + x0..y * w + x1].copy_from_slice(&inp[start..start + (x1 - x0)]);
                }
            }
        }
        col
    }

    /// Adds each patch-matrix entry back onto the pixel it was read from.
    fn col2im(&self, col: &[S], grad_in: &mut [S], h: usize, w: usize) {
        let hw = h * w;
        let kk = self.k * self.k;
        for ci in 0..self.cin {
            let gin = &mut grad_in[ci * hw..(ci + 1) * hw];
            for (t, dy, dx) in self.offsets() {
                let row = &col[(ci * kk + t) * hw..][..hw];
                let (y0, y1) = valid_range(h, dy);
                let (x0, x1) = valid_range(w, dx);
                for y in y0..y1 {
                    let src = ((y as isize + dy) as usize) * w;
                    let start = (src as isize + x0 as isize + dx) as usize;
                    for (a, &b) in gin[start..start + (x1 - x0)]
                        .iter_mut()
                        .zip(&row[y * w + x0..y * w + x1])
                    {
                        *a += b;
                    }
                }
            }
        }
    }

    fn forward(&self, input: &[S], h: usize, w: usize) -> Vec<S> {
        let hw = h * w;
        let depth = self.cin * self.k * self.k;
        let col = self.im2col(input, h, w);
        let mut out = vec![S::zero(); self.cout * hw];
        for (o, &b) in out.chunks_mut(hw).zip(self.bias) {
            o.fill(b);
        }
        S::gemm(
            (self.cout, depth, hw),
            Strided::new(self.weight, depth, 1),
            Strided::new(&col, hw, 1),
            &mut out,
            true,
        );
        out
    }

    /// Returns `(grad_input, grad_weight, grad_bias)`; the input gradient is
    /// skipped when `need_input` is false.
    fn backward(
        &self,
        input: &[S],
        grad_out: &[S],
        h: usize,
        w: usize,
        need_input: bool,
    ) -> (Vec<S>, Vec<S>, Vec<S>) {
        let hw = h * w;
        let depth = self.cin * self.k * self.k;
        let col = self.im2col(input, h, w);
        let mut grad_w = vec![S::zero(); self.weight.len()];
        S::gemm(
            (self.cout, hw, depth),
            Strided::new(grad_out, hw, 1),
            Strided::new(&col, 1, hw),
            &mut grad_w,
            false,
        );
        let grad_b = grad_out
            .chunks(hw)
            .map(|g| g.iter().fold(S::zero(), |acc, &v| acc + v))
            .collect();
        let mut grad_in = Vec::new();
        if need_input {
            let mut grad_col = vec![S::zero(); depth * hw];
            S::gemm(
                (depth, self.cout, hw),
                Strided::new(self.weight, 1, depth),
                Strided::new(grad_out, hw, 1),
                &mut grad_col,
                false,
            );
            grad_in = vec![S::zero(); self.cin * hw];
            self.col2im(&grad_col, &mut grad_in, h, w);
        }
        (grad_in, grad_w, grad_b)
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// `(in_channels, out_channels)` of layer `i`.
    pub fn layer_channels(&self, i: usize) -> (usize, usize) {
        let last = self.config.num_layers - 1;
        let cin = if i == 0 { 1 } else { self.config.hidden_channels };
        let cout = if i == last { 1 } else { self.config.hidden_channels };
        (cin, cout)
    }

    /// He-normal weights (fan-in scaling) and zero biases.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.config.kernel;
        let mut params = Vec::with_capacity(2 * self.config.num_layers);
        for i in 0..self.config.num_layers {
            let (cin, cout) = self.layer_channels(i);
            let std = (2.0 / (cin * k * k) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let n = cout * cin * k * k;
            params.push(Param {
                name: format!("conv{i}.weight"),
                shape: vec![cout, cin, k, k],
                values: (0..n).map(|_| normal.sample(&mut rng)).collect(),
            });
            params.push(Param {
                name: format!("conv{i}.bias"),
                shape: vec![cout],
                values: vec![0.0; cout],
            });
        }
        ParamSet::new(params).expect("consistent shapes")
    }

    pub fn check_params<S: Real>(&self, params: &ParamSet<S>) -> Result<()> {
        let k = self.config.kernel;
        let expected: Vec<(String, Vec<usize>)> = (0..self.config.num_layers)
            .flat_map(|i| {
                let (cin, cout) = self.layer_channels(i);
                [
                    (format!("conv{i}.weight"), vec![cout, cin, k, k]),
                    (format!("conv{i}.bias"), vec![cout]),
                ]
            })
            .collect();
        let matches = params.params().len() == expected.len()
            && params
                .iter()
                .zip(&expected)
                .all(|(p, (name, shape))| &p.name == name && &p.shape == shape);
        if matches {
            Ok(())
        } else {
            Err(Error::arg("parameter set does not match the model architecture"))
        }
    }

    fn conv<'a, S: Real>(&self, params: &'a ParamSet<S>, i: usize) -> Conv<'a, S> {
        let (cin, cout) = self.layer_channels(i);
        Conv {
            weight: &params.params()[2 * i].values,
            bias: &params.params()[2 * i + 1].values,
            cin,
            cout,
            k: self.config.kernel,
        }
    }

    fn trace<S: Real>(&self, params: &ParamSet<S>, input: Vec<S>, h: usize, w: usize) -> Trace<S> {
        let last = self.config.num_layers - 1;
        let mut activations = Vec::with_capacity(self.config.num_layers);
        activations.push(input);
        for i in 0..last {
            let mut a = self.conv(params, i).forward(&activations[i], h, w);
            for v in &mut a {
                if v.value() <= 0.0 {
                    *v = S::zero();
                }
            }
            activations.push(a);
        }
        let mut output = self.conv(params, last).forward(&activations[last], h, w);
        if self.config.residual {
            for (o, &x) in output.iter_mut().zip(&activations[0]) {
                *o += x;
            }
        }
        Trace { activations, output }
    }

    /// Back-propagates `grad_out` (gradient w.r.t. the network output).
    /// Returns parameter gradients per layer and the input gradient.
    fn backprop<S: Real>(
        &self,
        params: &ParamSet<S>,
        trace: &Trace<S>,
        grad_out: Vec<S>,
        h: usize,
        w: usize,
        need_input: bool,
    ) -> (Vec<Vec<S>>, Vec<S>) {
        let layers = self.config.num_layers;
        let mut grads: Vec<Vec<S>> = vec![Vec::new(); 2 * layers];
        let skip = if self.config.residual && need_input {
            Some(grad_out.clone())
        } else {
            None
        };
        let mut g = grad_out;
        for i in (0..layers).rev() {
            let input = &trace.activations[i];
            let (mut gin, gw, gb) = self
                .conv(params, i)
                .backward(input, &g, h, w, i > 0 || need_input);
            grads[2 * i] = gw;
            grads[2 * i + 1] = gb;
            if i > 0 {
                for (gv, a) in gin.iter_mut().zip(input) {
                    if a.value() <= 0.0 {
                        *gv = S::zero();
                    }
                }
            }
            g = gin;
        }
        if let Some(s) = skip {
            for (a, b) in g.iter_mut().zip(s) {
                *a += b;
            }
        }
        (grads, g)
    }

    fn check_batch_shapes(&self, shapes: impl Iterator<Item = (usize, usize)>) -> Result<(usize, usize)> {
        let mut shapes = shapes.peekable();
        let first = *shapes
            .peek()
            .ok_or_else(|| Error::arg("batch must not be empty"))?;
        for s in shapes {
            if s != first {
                return Err(Error::arg(format!(
                    "batch mixes image shapes {first:?} and {s:?}"
                )));
            }
        }
        Ok(first)
    }

    fn lift<S: Real>(image: &ImageTensor) -> Vec<S> {
        image.pixels().iter().map(|&p| S::from_f64(p as f64)).collect()
    }

    /// Raw network outputs for a batch of single-channel images.
    pub fn forward(&self, params: &ParamSet, images: &[ImageTensor]) -> Result<Vec<ImageTensor>> {
        self.check_params(params)?;
        let (h, w) = self.check_batch_shapes(images.iter().map(|i| i.shape()))?;
        images
            .par_iter()
            .map(|img| {
                let trace = self.trace(params, Self::lift(img), h, w);
                let out: Vec<f32> = trace.output.iter().map(|&v| v as f32).collect();
                ImageTensor::new(h, w, out)
                    .map_err(|_| Error::Numeric("network produced a non-finite output".into()))
            })
            .collect()
    }

    /// Network output clipped to `[0, 1]`, as used for evaluation.
    pub fn predict(&self, params: &ParamSet, image: &ImageTensor) -> Result<ImageTensor> {
        let out = self.forward(params, std::slice::from_ref(image))?;
        Ok(out[0].map(|p| p.clamp(0.0, 1.0)))
    }

    /// Loss and per-output gradients `(loss contribution, dloss/doutput)`.
    fn output_loss<S: Real>(&self, out: &[S], target: &ImageTensor, norm: f64) -> (S, Vec<S>) {
        let mut loss = S::zero();
        let grad = out
            .iter()
            .zip(target.pixels())
            .map(|(&o, &t)| {
                let d = o - S::from_f64(t as f64);
                match self.config.loss {
                    LossKind::L1 => {
                        loss += d.abs();
                        let sign = d.value().partial_cmp(&0.0).map_or(0.0, |c| c as i8 as f64);
                        S::from_f64(sign / norm)
                    }
                    LossKind::SquaredL2 => {
                        loss += d * d;
                        d.scale(2.0 / norm)
                    }
                }
            })
            .collect();
        (loss.scale(1.0 / norm), grad)
    }

    pub fn loss(&self, params: &ParamSet, batch: &[PairedSample]) -> Result<f64> {
        self.check_params(params)?;
        let (h, w) = self.check_batch_shapes(batch.iter().map(|s| s.shape()))?;
        let norm = (batch.len() * h * w) as f64;
        let parts: Vec<f64> = batch
            .par_iter()
            .map(|s| {
                let trace = self.trace(params, Self::lift(&s.degraded), h, w);
                self.output_loss(&trace.output, &s.clean, norm).0
            })
            .collect();
        Ok(parts.iter().sum())
    }

    fn per_sample<S: Real>(
        &self,
        params: &ParamSet<S>,
        batch: &[PairedSample],
        need_input: bool,
    ) -> Result<Vec<SampleGrad<S>>> {
        self.check_params(params)?;
        let (h, w) = self.check_batch_shapes(batch.iter().map(|s| s.shape()))?;
        let norm = (batch.len() * h * w) as f64;
        Ok(batch
            .par_iter()
            .map(|s| {
                let trace = self.trace(params, Self::lift(&s.degraded), h, w);
                let (loss, grad_out) = self.output_loss(&trace.output, &s.clean, norm);
                let (grads, gin) = self.backprop(params, &trace, grad_out, h, w, need_input);
                (loss, grads, gin)
            })
            .collect())
    }

    /// Mean loss over all pixels of the batch and its parameter gradient.
    pub fn loss_and_grad<S: Real>(
        &self,
        params: &ParamSet<S>,
        batch: &[PairedSample],
    ) -> Result<(S, ParamSet<S>)> {
        let parts = self.per_sample(params, batch, false)?;
        let mut grad = params.zeros_like();
        let mut loss = S::zero();
        let mut flat: Vec<Vec<S>> = grad.params().iter().map(|p| p.values.clone()).collect();
        for (l, grads, _) in parts {
            loss += l;
            for (acc, g) in flat.iter_mut().zip(grads) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        grad = ParamSet::new(
            grad.params()
                .iter()
                .zip(flat)
                .map(|(p, values)| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values,
                })
                .collect(),
        )?;
        Ok((loss, grad))
    }

    /// Gradient of the batch loss with respect to each degraded input.
    pub fn loss_input_gradient(&self, params: &ParamSet, batch: &[PairedSample]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .per_sample(params, batch, true)?
            .into_iter()
            .map(|(_, _, gin)| gin)
            .collect())
    }

    /// Gradient `g` and Hessian-vector product `H v` of the batch loss at
    /// `params`, computed by forward-mode differentiation of the gradient.
    pub fn grad_and_hvp(
        &self,
        params: &ParamSet,
        direction: &ParamSet,
        batch: &[PairedSample],
    ) -> Result<(ParamSet, ParamSet)> {
        let lifted: ParamSet<Dual> = params.zip_map(direction, Dual::new)?;
        let (_, grad) = self.loss_and_grad(&lifted, batch)?;
        Ok((grad.map(|d| d.re), grad.map(|d| d.eps)))
    }
}
