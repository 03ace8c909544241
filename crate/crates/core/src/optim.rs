//! Adam-style optimizer families, their schedules and search spaces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RngKey;
use crate::sample::{bernoulli, log_uniform, uniform, weighted_index};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerFamily {
    Adam1p,
    Adam4p,
    Adam6p,
    Adam8p,
    Nadamw,
}

impl OptimizerFamily {
    pub const ALL: [OptimizerFamily; 5] = [
        OptimizerFamily::Adam1p,
        OptimizerFamily::Adam4p,
        OptimizerFamily::Adam6p,
        OptimizerFamily::Adam8p,
        OptimizerFamily::Nadamw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerFamily::Adam1p => "adam1p",
            OptimizerFamily::Adam4p => "adam4p",
            OptimizerFamily::Adam6p => "adam6p",
            OptimizerFamily::Adam8p => "adam8p",
            OptimizerFamily::Nadamw => "nadamw",
        }
    }
}

impl fmt::Display for OptimizerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "family",
                    format!("unknown optimizer family `{s}`; valid: adam1p, adam4p, adam6p, adam8p, nadamw"),
                )
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHparams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub linear_decay: f64,
    pub exp_decay: f64,
    pub l1: f64,
    pub l2: f64,
}

impl AdamHparams {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    /// Family defaults with the given learning rate.
    pub fn with_lr(lr: f64) -> Self {
        AdamHparams {
            lr,
            beta1: Self::DEFAULT_BETA1,
            beta2: Self::DEFAULT_BETA2,
            epsilon: Self::DEFAULT_EPSILON,
            linear_decay: 0.0,
            exp_decay: 0.0,
            l1: 0.0,
            l2: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NadamwHparams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub use_nesterov: bool,
    /// Coupled l2 penalty, added to the gradient.
    pub l2_wd: f64,
    /// Decoupled weight decay, scaled by the scheduled learning rate.
    pub l2_adamw: f64,
    pub warmup: f64,
    pub constant: f64,
    pub min_lr_mult: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Hparams {
    Adam(AdamHparams),
    Nadamw(NadamwHparams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    optimizer_id: String,
    family: OptimizerFamily,
    hparams: Hparams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerConfigRepr {
    #[serde(default)]
    optimizer_id: Option<String>,
    family: OptimizerFamily,
    hparams: serde_json::Value,
}

fn check_range(path: &str, v: f64, ok: bool) -> Result<()> {
    if ok && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("value {v} out of range")))
    }
}

impl OptimizerConfig {
    pub fn new(family: OptimizerFamily, hparams: Hparams) -> Result<Self> {
        match (&hparams, family) {
            (Hparams::Nadamw(_), OptimizerFamily::Nadamw) => {}
            (Hparams::Adam(_), f) if f != OptimizerFamily::Nadamw => {}
            _ => {
                return Err(Error::config(
                    "hparams",
                    format!("hyperparameters do not match family {family}"),
                ))
            }
        }
        match &hparams {
            Hparams::Adam(h) => {
                check_range("hparams.lr", h.lr, h.lr > 0.0)?;
                check_range("hparams.beta1", h.beta1, (0.0..1.0).contains(&h.beta1))?;
                check_range("hparams.beta2", h.beta2, (0.0..1.0).contains(&h.beta2))?;
                check_range("hparams.epsilon", h.epsilon, h.epsilon >= 0.0)?;
                check_range("hparams.linear_decay", h.linear_decay, h.linear_decay >= 0.0)?;
                check_range("hparams.exp_decay", h.exp_decay, h.exp_decay >= 0.0)?;
                check_range("hparams.l1", h.l1, h.l1 >= 0.0)?;
                check_range("hparams.l2", h.l2, h.l2 >= 0.0)?;
            }
            Hparams::Nadamw(h) => {
                check_range("hparams.lr", h.lr, h.lr > 0.0)?;
                check_range("hparams.beta1", h.beta1, (0.0..1.0).contains(&h.beta1))?;
                check_range("hparams.beta2", h.beta2, (0.0..1.0).contains(&h.beta2))?;
                check_range("hparams.epsilon", h.epsilon, h.epsilon >= 0.0)?;
                check_range("hparams.l2_wd", h.l2_wd, h.l2_wd >= 0.0)?;
                check_range("hparams.l2_adamw", h.l2_adamw, h.l2_adamw >= 0.0)?;
                check_range("hparams.warmup", h.warmup, (0.0..=1.0).contains(&h.warmup))?;
                check_range("hparams.constant", h.constant, (0.0..=1.0).contains(&h.constant))?;
                check_range("hparams.min_lr_mult", h.min_lr_mult, h.min_lr_mult >= 0.0)?;
            }
        }
        let hv = hparams_value(&hparams);
        let canonical = serde_json::to_vec(&(family, &hv)).expect("serializable");
        let digest = Sha256::digest(&canonical);
        let optimizer_id = format!("{}-{}", family.name(), &hex::encode(digest)[..12]);
        Ok(OptimizerConfig {
            optimizer_id,
            family,
            hparams,
        })
    }

    pub fn adam(family: OptimizerFamily, h: AdamHparams) -> Result<Self> {
        Self::new(family, Hparams::Adam(h))
    }

    pub fn nadamw(h: NadamwHparams) -> Result<Self> {
        Self::new(OptimizerFamily::Nadamw, Hparams::Nadamw(h))
    }

    pub fn optimizer_id(&self) -> &str {
        &self.optimizer_id
    }

    pub fn family(&self) -> OptimizerFamily {
        self.family
    }

    pub fn hparams(&self) -> &Hparams {
        &self.hparams
    }

    /// Base learning rate.
    pub fn lr(&self) -> f64 {
        match &self.hparams {
            Hparams::Adam(h) => h.lr,
            Hparams::Nadamw(h) => h.lr,
        }
    }

    /// Named numeric hyperparameters (booleans as 0/1), in a fixed order.
    pub fn numeric_fields(&self) -> Vec<(&'static str, f64)> {
        match &self.hparams {
            Hparams::Adam(h) => vec![
                ("lr", h.lr),
                ("beta1", h.beta1),
                ("beta2", h.beta2),
                ("epsilon", h.epsilon),
                ("linear_decay", h.linear_decay),
                ("exp_decay", h.exp_decay),
                ("l1", h.l1),
                ("l2", h.l2),
            ],
            Hparams::Nadamw(h) => vec![
                ("lr", h.lr),
                ("warmup", h.warmup),
                ("constant", h.constant),
                ("min_lr_mult", h.min_lr_mult),
                ("beta1", h.beta1),
                ("beta2", h.beta2),
                ("epsilon", h.epsilon),
                ("nesterov", if h.use_nesterov { 1.0 } else { 0.0 }),
                ("l2_reg", h.l2_wd),
                ("l2_weight_decay", h.l2_adamw),
            ],
        }
    }

    /// True when every hyperparameter except the learning rate sits at the
    /// adam1p defaults.
    pub fn is_lr_only(&self) -> bool {
        match &self.hparams {
            Hparams::Adam(h) => *h == AdamHparams::with_lr(h.lr),
            Hparams::Nadamw(_) => false,
        }
    }

    /// True when the decay and regularization fields are all zero.
    pub fn is_adam4p_like(&self) -> bool {
        match &self.hparams {
            Hparams::Adam(h) => h.linear_decay == 0.0 && h.exp_decay == 0.0 && h.l1 == 0.0 && h.l2 == 0.0,
            Hparams::Nadamw(_) => false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("optimizer config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config("optimizer", e.to_string()))
    }
}

fn hparams_value(h: &Hparams) -> serde_json::Value {
    match h {
        Hparams::Adam(h) => serde_json::to_value(h),
        Hparams::Nadamw(h) => serde_json::to_value(h),
    }
    .expect("hparams serialize")
}

impl Serialize for OptimizerConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OptimizerConfigRepr {
            optimizer_id: Some(self.optimizer_id.clone()),
            family: self.family,
            hparams: hparams_value(&self.hparams),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OptimizerConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = OptimizerConfigRepr::deserialize(d)?;
        let hparams = match repr.family {
            OptimizerFamily::Nadamw => serde_json::from_value(repr.hparams).map(Hparams::Nadamw),
            _ => serde_json::from_value(repr.hparams).map(Hparams::Adam),
        }
        .map_err(|e| D::Error::custom(format!("hparams: {e}")))?;
        let cfg = OptimizerConfig::new(repr.family, hparams).map_err(D::Error::custom)?;
        match repr.optimizer_id {
            Some(id) if id != cfg.optimizer_id => Err(D::Error::custom(format!(
                "optimizer_id `{id}` does not match derived id `{}`",
                cfg.optimizer_id
            ))),
            _ => Ok(cfg),
        }
    }
}

fn lu(rng: &mut crate::rng::KeyStream, lo: f64, hi: f64) -> f64 {
    log_uniform(rng, lo, hi).expect("constant range")
}

/// Draw a configuration from the family's search space.
pub fn sample_optimizer(family: OptimizerFamily, key: &RngKey) -> OptimizerConfig {
    let rng = &mut key.stream();
    let hparams = match family {
        OptimizerFamily::Nadamw => {
            let lr = lu(rng, 1e-5, 1.0);
            let beta1 = 1.0 - lu(rng, 1e-3, 1.0);
            let beta2 = 1.0 - lu(rng, 1e-5, 1.0);
            let epsilon = lu(rng, 1e-8, 1e4);
            let use_nesterov = bernoulli(rng, 0.5);
            let wd = lu(rng, 1e-5, 1e-1);
            let adamw = lu(rng, 1e-5, 1e-1);
            let (l2_wd, l2_adamw) = match weighted_index(rng, &[1.0, 1.0, 1.0]) {
                0 => (wd, adamw),
                1 => (0.0, adamw),
                _ => (wd, 0.0),
            };
            let min_lr_mult = if bernoulli(rng, 0.5) { lu(rng, 1e-5, 1.0) } else { 0.0 };
            let warmup = if bernoulli(rng, 0.5) { lu(rng, 1e-5, 1e-1) } else { 0.0 };
            let constant = uniform(rng, 0.0, 1.0);
            Hparams::Nadamw(NadamwHparams {
                lr,
                beta1,
                beta2,
                epsilon,
                use_nesterov,
                l2_wd,
                l2_adamw,
                warmup,
                constant,
                min_lr_mult,
            })
        }
        _ => {
            let mut h = AdamHparams::with_lr(lu(rng, 1e-8, 10.0));
            if family != OptimizerFamily::Adam1p {
                h.beta1 = 1.0 - lu(rng, 1e-4, 1.0);
                h.beta2 = 1.0 - lu(rng, 1e-6, 1.0);
                h.epsilon = lu(rng, 1e-8, 1e4);
            }
            if matches!(family, OptimizerFamily::Adam6p | OptimizerFamily::Adam8p) {
                h.linear_decay = lu(rng, 1e-7, 1e-4);
                h.exp_decay = lu(rng, 1e-6, 1e-3);
            }
            if family == OptimizerFamily::Adam8p {
                h.l1 = lu(rng, 1e-8, 1e1);
                h.l2 = lu(rng, 1e-8, 1e1);
            }
            Hparams::Adam(h)
        }
    };
    OptimizerConfig::new(family, hparams).expect("sampled hyperparameters are in range")
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleContext {
    pub t: usize,
    pub total: usize,
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

/// Gradient of the loss plus the family's coupled penalty terms.
pub fn regularized_gradient(config: &OptimizerConfig, params: &[f64], raw_grad: &[f64]) -> Result<Vec<f64>> {
    if params.len() != raw_grad.len() {
        return Err(Error::Shape {
            expected: params.len(),
            got: raw_grad.len(),
        });
    }
    let mut g = raw_grad.to_vec();
    add_penalties(config, params, &mut g);
    Ok(g)
}

fn add_penalties(config: &OptimizerConfig, params: &[f64], g: &mut [f64]) {
    match &config.hparams {
        Hparams::Adam(h) => {
            if h.l1 != 0.0 || h.l2 != 0.0 {
                for (gi, &p) in g.iter_mut().zip(params) {
                    *gi += 2.0 * h.l2 * p + h.l1 * sign(p);
                }
            }
        }
        Hparams::Nadamw(h) => {
            if h.l2_wd != 0.0 {
                for (gi, &p) in g.iter_mut().zip(params) {
                    *gi += 2.0 * h.l2_wd * p;
                }
            }
        }
    }
}

/// Warmup, hold, then single-cycle cosine decay to the floor.
pub fn nadamw_learning_rate(h: &NadamwHparams, ctx: ScheduleContext) -> f64 {
    let t = ctx.t as f64;
    let total = ctx.total as f64;
    let warm_end = h.warmup * total;
    if t < warm_end {
        return h.lr * t / warm_end;
    }
    let t_c = (h.constant * total).max(warm_end);
    if t < t_c {
        return h.lr;
    }
    let floor = h.min_lr_mult.min(h.lr);
    let span = total - t_c;
    let frac = if span > 0.0 {
        ((t - t_c) / span).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (h.lr - floor) * (0.5 * (std::f64::consts::PI * frac).cos() + 0.5) + floor
}

/// Adam decay multiplier `max(1 − t·λ_lin, 0)·exp(−t·λ_exp)`.
pub fn adam_schedule(h: &AdamHparams, t: usize) -> f64 {
    let t = t as f64;
    (1.0 - t * h.linear_decay).max(0.0) * (-t * h.exp_decay).exp()
}

/// One optimizer step in place. `grad` is the raw loss gradient and is
/// overwritten with the regularized one.
pub fn step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut [f64],
    grad: &mut [f64],
    ctx: ScheduleContext,
) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: grad.len(),
        });
    }
    if state.t != ctx.t {
        return Err(Error::InvalidInput(format!(
            "state at step {} but schedule at step {}",
            state.t, ctx.t
        )));
    }
    add_penalties(config, params, grad);
    let t1 = (ctx.t + 1) as i32;
    match &config.hparams {
        Hparams::Adam(h) => {
            let (b1, b2) = (h.beta1, h.beta2);
            let c1 = 1.0 - b1.powi(t1);
            let c2 = 1.0 - b2.powi(t1);
            let rate = h.lr * adam_schedule(h, ctx.t);
            for i in 0..n {
                let g = grad[i];
                let m = b1 * state.m[i] + (1.0 - b1) * g;
                let v = b2 * state.v[i] + (1.0 - b2) * g * g;
                state.m[i] = m;
                state.v[i] = v;
                let u = (m / c1) / ((v / c2).sqrt() + h.epsilon);
                params[i] -= rate * u;
            }
        }
        Hparams::Nadamw(h) => {
            let (b1, b2) = (h.beta1, h.beta2);
            let c1 = 1.0 - b1.powi(t1);
            let c2 = 1.0 - b2.powi(t1);
            let rate = nadamw_learning_rate(h, ctx);
            for i in 0..n {
                let g = grad[i];
                let m = b1 * state.m[i] + (1.0 - b1) * g;
                let v = b2 * state.v[i] + (1.0 - b2) * g * g;
                state.m[i] = m;
                state.v[i] = v;
                let m_hat = m / c1;
                let num = if h.use_nesterov {
                    b1 * m_hat + (1.0 - b1) * g
                } else {
                    m_hat
                };
                let u = num / ((v / c2).sqrt() + h.epsilon);
                let p = params[i];
                params[i] = p - rate * u - rate * h.l2_adamw * p;
            }
        }
    }
    state.t += 1;
    Ok(())
}

/// Functional form of [`step`]: returns the new parameters and state.
pub fn apply_update(
    config: &OptimizerConfig,
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
    ctx: ScheduleContext,
) -> Result<(Vec<f64>, OptimizerState)> {
    let mut p = params.to_vec();
    let mut g = grad.to_vec();
    let mut s = state.clone();
    step(config, &mut s, &mut p, &mut g, ctx)?;
    Ok((p, s))
}
