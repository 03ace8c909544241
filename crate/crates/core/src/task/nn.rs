//! Fully connected networks with hand-written backprop.
//!
//! Parameters are laid out layer by layer: the `fan_in × fan_out` weight
//! matrix (row-major) followed by the `fan_out` bias vector.

use crate::error::Result;
use crate::linalg::random_orthogonal;
use crate::rng::{KeyStream, RngKey};
use crate::sample;

use super::config::{Activation, AeLoss, AeOutput, Initializer, Reduction};

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Cos => z.cos(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Swish => z * sigmoid(z),
            Activation::LeakyRelu4 => leaky(z, 0.4),
            Activation::LeakyRelu2 => leaky(z, 0.2),
            Activation::LeakyRelu1 => leaky(z, 0.1),
        }
    }

    /// Derivative at pre-activation `z` (given the activation value `a`).
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Cos => -z.sin(),
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Swish => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
            Activation::LeakyRelu4 => leaky_slope(z, 0.4),
            Activation::LeakyRelu2 => leaky_slope(z, 0.2),
            Activation::LeakyRelu1 => leaky_slope(z, 0.1),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn leaky(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        alpha * z
    }
}

#[inline]
fn leaky_slope(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        alpha
    }
}

impl Initializer {
    /// Fill a `fan_in × fan_out` weight block.
    pub fn fill(&self, key: &RngKey, fan_in: usize, fan_out: usize, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), fan_in * fan_out);
        let mut rng = key.stream();
        let (fi, fo) = (fan_in as f64, fan_out as f64);
        match *self {
            Initializer::HeNormal => normal_fill(&mut rng, (2.0 / fi).sqrt(), out),
            Initializer::HeUniform => uniform_fill(&mut rng, (6.0 / fi).sqrt(), out),
            Initializer::GlorotNormal => normal_fill(&mut rng, (2.0 / (fi + fo)).sqrt(), out),
            Initializer::GlorotUniform => uniform_fill(&mut rng, (6.0 / (fi + fo)).sqrt(), out),
            Initializer::RandomUniform { scale } => uniform_fill(&mut rng, scale, out),
            Initializer::RandomNormal { std } => normal_fill(&mut rng, std, out),
            Initializer::TruncatedNormal { std } => {
                for o in out.iter_mut() {
                    *o = loop {
                        let x = sample::normal(&mut rng);
                        if x.abs() <= 2.0 {
                            break x * std;
                        }
                    };
                }
            }
            Initializer::VarianceScaling { scale } => normal_fill(&mut rng, (scale / fi).sqrt(), out),
            Initializer::Orthogonal { gain } => {
                let n = fan_in.max(fan_out);
                let q = random_orthogonal(key, n)?;
                for r in 0..fan_in {
                    for c in 0..fan_out {
                        out[r * fan_out + c] = gain * q.get(r, c);
                    }
                }
            }
        }
        Ok(())
    }
}

fn normal_fill(rng: &mut KeyStream, std: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = std * sample::normal(rng);
    }
}

fn uniform_fill(rng: &mut KeyStream, limit: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = sample::uniform(rng, -limit, limit);
    }
}

/// What the network's output is compared against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Head {
    /// Softmax cross-entropy against integer labels; logits are linear.
    Softmax,
    /// Reconstruction of the (optionally recentred) input.
    Reconstruct {
        output: AeOutput,
        loss: AeLoss,
        reduction: Reduction,
    },
}

#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    head: Head,
}

pub enum Targets<'a> {
    Labels(&'a [usize]),
    Inputs,
}

impl Mlp {
    /// `sizes` runs from input width to output width.
    pub fn new(sizes: Vec<usize>, activation: Activation, head: Head) -> Self {
        assert!(sizes.len() >= 2);
        Mlp {
            sizes,
            activation,
            head,
        }
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Multiply-adds for one example through the network.
    pub fn macs(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn units(&self) -> usize {
        self.sizes[1..].iter().sum()
    }

    pub fn init(&self, init: &Initializer, key: &RngKey) -> Result<Vec<f64>> {
        let mut params = vec![0.0; self.param_count()];
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fi, fo) = (w[0], w[1]);
            init.fill(&key.child(l as u64), fi, fo, &mut params[off..off + fi * fo])?;
            off += fi * fo + fo;
        }
        Ok(params)
    }

    /// Mean loss over the batch and, if `grad` is given, its gradient.
    /// `inputs` is `bs × sizes[0]` row-major.
    pub fn loss_grad(
        &self,
        params: &[f64],
        inputs: &[f64],
        bs: usize,
        targets: Targets<'_>,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let n_layers = self.sizes.len() - 1;
        // pre-activations and activations per layer, each bs × width
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + fi * fo];
            let b = &params[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            let input: &[f64] = if l == 0 { inputs } else { &acts[l - 1] };
            let mut z = vec![0.0; bs * fo];
            for r in 0..bs {
                let zr = &mut z[r * fo..(r + 1) * fo];
                zr.copy_from_slice(b);
                for (k, &x) in input[r * fi..(r + 1) * fi].iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for (zc, &wc) in zr.iter_mut().zip(&w[k * fo..(k + 1) * fo]) {
                        *zc += x * wc;
                    }
                }
            }
            let last = l + 1 == n_layers;
            let a: Vec<f64> = if !last {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                match self.head {
                    Head::Softmax => z.clone(),
                    Head::Reconstruct { output, .. } => z.iter().map(|&v| output_apply(output, v)).collect(),
                }
            };
            zs.push(z);
            acts.push(a);
        }

        let out_w = self.sizes[n_layers];
        let out = &acts[n_layers - 1];
        // dL/d(output pre-activation), bs × out_w
        let mut delta = vec![0.0; bs * out_w];
        let inv_bs = 1.0 / bs as f64;
        let mut total = 0.0;
        match (self.head, targets) {
            (Head::Softmax, Targets::Labels(labels)) => {
                for r in 0..bs {
                    let logits = &out[r * out_w..(r + 1) * out_w];
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = logits.iter().map(|&v| (v - m).exp()).sum();
                    let lse = m + s.ln();
                    total += lse - logits[labels[r]];
                    let d = &mut delta[r * out_w..(r + 1) * out_w];
                    for (c, dc) in d.iter_mut().enumerate() {
                        *dc = ((logits[c] - lse).exp() - if c == labels[r] { 1.0 } else { 0.0 }) * inv_bs;
                    }
                }
            }
            (
                Head::Reconstruct {
                    output,
                    loss,
                    reduction,
                },
                Targets::Inputs,
            ) => {
                let per_dim = match reduction {
                    Reduction::ReduceMean => 1.0 / out_w as f64,
                    Reduction::ReduceSum => 1.0,
                };
                let z_out = &zs[n_layers - 1];
                for r in 0..bs {
                    for c in 0..out_w {
                        let i = r * out_w + c;
                        let t = reconstruct_target(output, inputs[r * self.sizes[0] + c]);
                        let e = out[i] - t;
                        let (l, dl) = match loss {
                            AeLoss::L2 => (e * e, 2.0 * e),
                            AeLoss::L1 => (e.abs(), sign(e)),
                        };
                        total += l * per_dim;
                        delta[i] = dl * per_dim * inv_bs * output_derivative(output, z_out[i], out[i]);
                    }
                }
            }
            _ => panic!("targets do not match the network head"),
        }
        let loss = total * inv_bs;

        let Some(grad) = grad else {
            return loss;
        };
        debug_assert_eq!(grad.len(), params.len());
        let mut off = params.len();
        for l in (0..n_layers).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            off -= fi * fo + fo;
            let input: &[f64] = if l == 0 { inputs } else { &acts[l - 1] };
            let (gw, gb) = grad[off..off + fi * fo + fo].split_at_mut(fi * fo);
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            for r in 0..bs {
                let dr = &delta[r * fo..(r + 1) * fo];
                for (gbc, &d) in gb.iter_mut().zip(dr) {
                    *gbc += d;
                }
                for (k, &x) in input[r * fi..(r + 1) * fi].iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for (g, &d) in gw[k * fo..(k + 1) * fo].iter_mut().zip(dr) {
                        *g += x * d;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &params[off..off + fi * fo];
            let mut prev = vec![0.0; bs * fi];
            let (zp, ap) = (&zs[l - 1], &acts[l - 1]);
            for r in 0..bs {
                let dr = &delta[r * fo..(r + 1) * fo];
                for k in 0..fi {
                    let s = crate::linalg::dot(&w[k * fo..(k + 1) * fo], dr);
                    let i = r * fi + k;
                    prev[i] = s * self.activation.derivative(zp[i], ap[i]);
                }
            }
            delta = prev;
        }
        loss
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn output_apply(o: AeOutput, z: f64) -> f64 {
    match o {
        AeOutput::Tanh => z.tanh(),
        AeOutput::Sigmoid => sigmoid(z),
        AeOutput::LinearCenter | AeOutput::Linear => z,
    }
}

fn output_derivative(o: AeOutput, _z: f64, a: f64) -> f64 {
    match o {
        AeOutput::Tanh => 1.0 - a * a,
        AeOutput::Sigmoid => a * (1.0 - a),
        AeOutput::LinearCenter | AeOutput::Linear => 1.0,
    }
}

/// Inputs live in (0, 1); centred heads reconstruct `2x − 1`.
fn reconstruct_target(o: AeOutput, x: f64) -> f64 {
    match o {
        AeOutput::Tanh | AeOutput::LinearCenter => 2.0 * x - 1.0,
        AeOutput::Sigmoid | AeOutput::Linear => x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::{finite_diff_gradient_scaled, max_relative_error};

    fn check(mlp: &Mlp, inputs: &[f64], bs: usize, labels: Option<&[usize]>) {
        let params = mlp.init(&Initializer::GlorotNormal, &RngKey::from_seed(2)).unwrap();
        let targets = || match labels {
            Some(l) => Targets::Labels(l),
            None => Targets::Inputs,
        };
        let mut g = vec![0.0; params.len()];
        mlp.loss_grad(&params, inputs, bs, targets(), Some(&mut g));
        let fd = finite_diff_gradient_scaled(|p| mlp.loss_grad(p, inputs, bs, targets(), None), &params, 1e-5).unwrap();
        let err = max_relative_error(&g, &fd);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn softmax_gradient_matches_fd() {
        let mlp = Mlp::new(vec![3, 5, 4, 2], Activation::Tanh, Head::Softmax);
        assert_eq!(mlp.param_count(), 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
        let inputs = [0.3, -1.2, 0.5, 1.0, 0.1, -0.4, -0.7, 0.9, 2.0];
        check(&mlp, &inputs, 3, Some(&[0, 1, 1]));
    }

    #[test]
    fn autoencoder_gradient_matches_fd() {
        for output in [
            AeOutput::Tanh,
            AeOutput::Sigmoid,
            AeOutput::LinearCenter,
            AeOutput::Linear,
        ] {
            let head = Head::Reconstruct {
                output,
                loss: AeLoss::L2,
                reduction: Reduction::ReduceSum,
            };
            let mlp = Mlp::new(vec![4, 3, 4], Activation::Swish, head);
            let inputs = [0.2, 0.7, 0.4, 0.9, 0.1, 0.5, 0.6, 0.3];
            check(&mlp, &inputs, 2, None);
        }
    }

    #[test]
    fn every_activation_derivative() {
        for (act, _) in Activation::WEIGHTED {
            for z in [-1.7, -0.3, 0.4, 2.2] {
                let a = act.apply(z);
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((act.derivative(z, a) - fd).abs() < 1e-6, "{act:?} at {z}");
            }
        }
    }

    #[test]
    fn orthogonal_init_rectangular() {
        let mut w = vec![0.0; 6];
        Initializer::Orthogonal { gain: 1.0 }
            .fill(&RngKey::from_seed(1), 2, 3, &mut w)
            .unwrap();
        // rows of a 2x3 slice of an orthogonal matrix are orthonormal
        let r0 = &w[0..3];
        let r1 = &w[3..6];
        assert!((crate::linalg::dot(r0, r0) - 1.0).abs() < 1e-12);
        assert!(crate::linalg::dot(r0, r1).abs() < 1e-12);
    }
}
