//! Closed-form objectives and their analytic gradients.
//!
//! Every function returns the loss and, when `grad` is `Some`, overwrites it
//! with the gradient.

use std::f64::consts::{E, PI};

use crate::linalg::{dot, DenseMatrix};

use super::config::TwodTask;
use super::nn::sigmoid;

type Grad<'a> = Option<&'a mut [f64]>;

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

/// `½(x₁² + κ·x₂²)`.
pub fn bowl(kappa: f64, x: &[f64], grad: Grad<'_>) -> f64 {
    if let Some(g) = grad {
        g[0] = x[0];
        g[1] = kappa * x[1];
    }
    0.5 * (x[0] * x[0] + kappa * x[1] * x[1])
}

pub fn twod(task: TwodTask, x: &[f64], grad: Grad<'_>) -> f64 {
    let (a, b) = (x[0], x[1]);
    match task {
        TwodTask::Bowl1 => bowl(1.0, x, grad),
        TwodTask::Bowl10 => bowl(10.0, x, grad),
        TwodTask::Bowl100 => bowl(100.0, x, grad),
        TwodTask::Bowl1000 => bowl(1000.0, x, grad),
        TwodTask::Rosenbrock => {
            let r = b - a * a;
            if let Some(g) = grad {
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * r;
                g[1] = 200.0 * r;
            }
            (1.0 - a).powi(2) + 100.0 * r * r
        }
        TwodTask::StyblinskiTang => {
            if let Some(g) = grad {
                for i in 0..2 {
                    g[i] = 0.5 * (4.0 * x[i].powi(3) - 32.0 * x[i] + 5.0);
                }
            }
            0.5 * x.iter().map(|&v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>()
        }
        TwodTask::Ackley => {
            let r = (0.5 * (a * a + b * b)).sqrt();
            let c = 0.5 * ((2.0 * PI * a).cos() + (2.0 * PI * b).cos());
            let e1 = (-0.2 * r).exp();
            let e2 = c.exp();
            if let Some(g) = grad {
                for i in 0..2 {
                    let radial = if r > 0.0 { 2.0 * e1 * x[i] / r } else { 0.0 };
                    g[i] = radial + PI * e2 * (2.0 * PI * x[i]).sin();
                }
            }
            -20.0 * e1 - e2 + E + 20.0
        }
        TwodTask::Beale => {
            let t1 = 1.5 - a + a * b;
            let t2 = 2.25 - a + a * b * b;
            let t3 = 2.625 - a + a * b * b * b;
            if let Some(g) = grad {
                g[0] = 2.0 * t1 * (b - 1.0) + 2.0 * t2 * (b * b - 1.0) + 2.0 * t3 * (b * b * b - 1.0);
                g[1] = 2.0 * t1 * a + 4.0 * t2 * a * b + 6.0 * t3 * a * b * b;
            }
            t1 * t1 + t2 * t2 + t3 * t3
        }
    }
}

/// `½‖Wx − y‖²`.
pub fn least_squares(w: &DenseMatrix, y: &[f64], x: &[f64], grad: Grad<'_>) -> f64 {
    let mut r = w.matvec(x);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    if let Some(g) = grad {
        w.matvec_t_into(&r, g);
    }
    0.5 * dot(&r, &r)
}

/// `(Σⱼ |(Wx − y)ⱼ|^p)^(1/p)`.
pub fn p_norm(w: &DenseMatrix, y: &[f64], p: f64, x: &[f64], grad: Grad<'_>) -> f64 {
    let mut r = w.matvec(x);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    let s: f64 = r.iter().map(|v| v.abs().powf(p)).sum();
    let f = s.powf(1.0 / p);
    if let Some(g) = grad {
        // ∂f/∂rⱼ = S^(1/p − 1) · |rⱼ|^(p−1) · sign(rⱼ)
        let outer = s.powf(1.0 / p - 1.0);
        for ri in r.iter_mut() {
            *ri = if *ri == 0.0 {
                0.0
            } else {
                outer * ri.abs().powf(p - 1.0) * sign(*ri)
            };
        }
        w.matvec_t_into(&r, g);
    }
    f
}

/// Gate threshold of the dependency chain.
pub const CHAIN_TAU: f64 = 0.1;
const CHAIN_SHARPNESS: f64 = 10.0;

/// `x₀² + Σᵢ₌₁ σ(10·(τ − |xᵢ₋₁|))·xᵢ²`: coordinate `i` only carries weight once
/// coordinate `i − 1` is near zero.
pub fn dependency_chain(x: &[f64], grad: Grad<'_>) -> f64 {
    let n = x.len();
    let mut f = x[0] * x[0];
    let gate = |v: f64| sigmoid(CHAIN_SHARPNESS * (CHAIN_TAU - v.abs()));
    for i in 1..n {
        f += gate(x[i - 1]) * x[i] * x[i];
    }
    if let Some(g) = grad {
        g[0] = 2.0 * x[0];
        for i in 1..n {
            g[i] = 2.0 * gate(x[i - 1]) * x[i];
        }
        for i in 0..n.saturating_sub(1) {
            let s = gate(x[i]);
            g[i] += x[i + 1] * x[i + 1] * s * (1.0 - s) * CHAIN_SHARPNESS * -sign(x[i]);
        }
    }
    f
}

/// Mean over weight rows `w_b` of
/// `−w_b0·‖x‖ + Σᵢ₌₁ w_bi·(xᵢ − π·cos xᵢ₋₁)²`: a periodic valley along which the
/// loss falls with constant slope as `‖x‖` grows.
pub fn outward_snake(weights: &[f64], rows: usize, x: &[f64], grad: Grad<'_>) -> f64 {
    let d = x.len();
    let mut mean_w = vec![0.0; d];
    for r in 0..rows {
        for (m, w) in mean_w.iter_mut().zip(&weights[r * d..(r + 1) * d]) {
            *m += w;
        }
    }
    mean_w.iter_mut().for_each(|m| *m /= rows as f64);
    let radius = dot(x, x).sqrt();
    let mut f = -mean_w[0] * radius;
    for i in 1..d {
        let e = x[i] - PI * x[i - 1].cos();
        f += mean_w[i] * e * e;
    }
    if let Some(g) = grad {
        for i in 0..d {
            g[i] = if radius > 0.0 { -mean_w[0] * x[i] / radius } else { 0.0 };
        }
        for i in 1..d {
            let e = x[i] - PI * x[i - 1].cos();
            g[i] += 2.0 * mean_w[i] * e;
            g[i - 1] += 2.0 * mean_w[i] * e * PI * x[i - 1].sin();
        }
    }
    f
}

/// `max|xᵢ| + 1/min|xᵢ| − 2`, zero at the all-ones point.
pub fn min_max_well(x: &[f64], grad: Grad<'_>) -> f64 {
    let (mut imax, mut imin) = (0, 0);
    for i in 1..x.len() {
        if x[i].abs() > x[imax].abs() {
            imax = i;
        }
        if x[i].abs() < x[imin].abs() {
            imin = i;
        }
    }
    let (hi, lo) = (x[imax].abs(), x[imin].abs());
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v = 0.0);
        g[imax] += sign(x[imax]);
        g[imin] -= sign(x[imin]) / (lo * lo);
    }
    hi + 1.0 / lo - 2.0
}

/// Mean squared error of a linear model `aᵀx` against scalar targets.
pub fn linear_regression(inputs: &[f64], targets: &[f64], x: &[f64], grad: Grad<'_>) -> f64 {
    let d = x.len();
    let rows = targets.len();
    let mut f = 0.0;
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    for r in 0..rows {
        let a = &inputs[r * d..(r + 1) * d];
        let e = dot(a, x) - targets[r];
        f += e * e;
        if let Some(g) = g.as_deref_mut() {
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += 2.0 * e * ai / rows as f64;
            }
        }
    }
    f / rows as f64
}

/// Quadratic-like objective on the rescaled variable `X = weight_rescale·param`:
/// `loss_scale · output_fn(Σ(AX − B)² + C)`.
pub struct QuadraticLike<'a> {
    pub a: &'a DenseMatrix,
    pub b: &'a [f64],
    pub c: f64,
    pub weight_rescale: f64,
    pub loss_scale: f64,
    pub log_output: bool,
}

/// Floor applied before every `log` of a loss.
pub const LOG_EPS: f64 = 1e-20;

impl QuadraticLike<'_> {
    pub fn eval(&self, param: &[f64], grad: Grad<'_>) -> f64 {
        let xs: Vec<f64> = param.iter().map(|p| p * self.weight_rescale).collect();
        let mut r = self.a.matvec(&xs);
        for (ri, bi) in r.iter_mut().zip(self.b) {
            *ri -= bi;
        }
        let s = dot(&r, &r) + self.c;
        let (f, df) = if self.log_output {
            if s > LOG_EPS {
                (s.ln(), 1.0 / s)
            } else {
                (LOG_EPS.ln(), 0.0)
            }
        } else {
            (s, 1.0)
        };
        if let Some(g) = grad {
            self.a.matvec_t_into(&r, g);
            let k = self.loss_scale * df * 2.0 * self.weight_rescale;
            g.iter_mut().for_each(|v| *v *= k);
        }
        self.loss_scale * f
    }
}
