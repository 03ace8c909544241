//! Instantiated tasks: initialization, data generation, loss and gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, DenseMatrix};
use crate::rng::{label_of, RngKey};
use crate::sample;

use super::config::*;
use super::nn::{sigmoid, Head, Mlp, Targets};
use super::objectives::{self, QuadraticLike, LOG_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchTargets {
    None,
    Labels(Vec<usize>),
    Values(DenseMatrix),
}

/// One minibatch. Data-free tasks receive an empty batch that still carries a
/// seed for gradient noise and sparsity masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: DenseMatrix,
    pub targets: BatchTargets,
    pub batch_seed: u64,
}

impl Batch {
    pub fn empty(batch_seed: u64) -> Self {
        Batch {
            inputs: DenseMatrix::empty(),
            targets: BatchTargets::None,
            batch_seed,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Dataset {
    rows: usize,
    cols: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Model {
    Twod(TwodTask),
    Bowl(f64),
    LeastSquares {
        w: DenseMatrix,
        y: Vec<f64>,
    },
    Norm {
        w: DenseMatrix,
        y: Vec<f64>,
        p: f64,
    },
    DependencyChain,
    OutwardSnake,
    MinMaxWell,
    LinearRegression,
    QuadraticLike {
        a: DenseMatrix,
        b: Vec<f64>,
        c: f64,
        initial: VectorDist,
        weight_rescale: f64,
        loss_scale: f64,
        log_output: bool,
    },
    Mlp {
        net: Mlp,
        init: Initializer,
        labels: bool,
    },
}

#[derive(Clone, Debug)]
pub struct TaskInstance {
    config: TaskConfig,
    param_count: usize,
    just_train: bool,
    bs: usize,
    noise: Option<f64>,
    model: Model,
    /// One dataset per split (a single shared one when `just_train`).
    data: Vec<Dataset>,
}

fn latent(config: &TaskConfig, name: &str) -> RngKey {
    RngKey::from_seed(config.config_seed()).child_named(name)
}

fn normal_matrix(key: &RngKey, rows: usize, cols: usize, mean: f64, std: f64) -> DenseMatrix {
    let mut rng = key.stream();
    DenseMatrix::from_fn(rows, cols, |_, _| mean + std * sample::normal(&mut rng))
}

fn vector_from(dist: &VectorDist, key: &RngKey, n: usize) -> Vec<f64> {
    let mut rng = key.stream();
    (0..n)
        .map(|_| match *dist {
            VectorDist::Normal { mean, std } => mean + std * sample::normal(&mut rng),
            VectorDist::Uniform { min, max } => sample::uniform(&mut rng, min, max),
        })
        .collect()
}

fn eigen_matrix(key: &RngKey, eig: &[f64]) -> Result<DenseMatrix> {
    let n = eig.len();
    let q = random_orthogonal(key, n)?;
    // Q Λ Qᵀ
    let mut scaled = q.clone();
    for r in 0..n {
        for c in 0..n {
            scaled.set(r, c, q.get(r, c) * eig[c]);
        }
    }
    scaled.matmul(&q.transpose())
}

fn quadratic_like_a(dist: &MatrixDist, key: &RngKey, n: usize) -> Result<DenseMatrix> {
    Ok(match *dist {
        MatrixDist::Normal { mean, std } => normal_matrix(key, n, n, mean, std),
        MatrixDist::Uniform { min, max } => {
            let mut rng = key.stream();
            DenseMatrix::from_fn(n, n, |_, _| sample::uniform(&mut rng, min, max))
        }
        MatrixDist::LinspaceEigen { min, max } => {
            let eig: Vec<f64> = (0..n)
                .map(|i| {
                    if n == 1 {
                        min
                    } else {
                        min + (max - min) * i as f64 / (n - 1) as f64
                    }
                })
                .collect();
            eigen_matrix(key, &eig)?
        }
        MatrixDist::LogspaceEigen { min, max } => {
            let (a, b) = (min.ln(), max.ln());
            let eig: Vec<f64> = (0..n)
                .map(|i| {
                    if n == 1 {
                        min
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect();
            eigen_matrix(key, &eig)?
        }
    })
}

/// Class-conditional gaussian blobs around centres drawn once per task.
fn blobs(centres: &[f64], n_classes: usize, dim: usize, rows: usize, key: &RngKey, squash: bool) -> Dataset {
    let mut rng = key.stream();
    let mut inputs = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let y = sample::uniform_int(&mut rng, 0, n_classes - 1);
        for j in 0..dim {
            let v = centres[y * dim + j] + sample::normal(&mut rng);
            inputs.push(if squash { sigmoid(v) } else { v });
        }
        labels.push(y);
    }
    Dataset {
        rows,
        cols: dim,
        inputs,
        labels,
        values: Vec::new(),
    }
}

const BLOB_SPREAD: f64 = 2.0;

impl TaskInstance {
    pub fn new(config: TaskConfig) -> Result<Self> {
        config.params().validate()?;
        let mut bs = 0;
        let mut noise = None;
        let mut just_train = false;
        let split_keys = |cfg: &TaskConfig| -> Vec<RngKey> {
            Split::ALL
                .iter()
                .map(|s| latent(cfg, "data").child_named(s.name()))
                .collect()
        };
        let mut data = Vec::new();
        let (model, param_count) = match config.params() {
            TaskParams::TwodFixed(p) => (Model::Twod(p.name), 2),
            TaskParams::LosgBowl(p) => {
                noise = p.noise;
                (Model::Bowl(p.condition_number), 2)
            }
            TaskParams::LosgQuadratic(p) => {
                noise = p.noise;
                let d = p.dim;
                let w = normal_matrix(&latent(&config, "W"), d, d, 0.0, 1.0 / (d as f64).sqrt());
                let y = vector_from(&VectorDist::Normal { mean: 0.0, std: 1.0 }, &latent(&config, "y"), d);
                (Model::LeastSquares { w, y }, d)
            }
            TaskParams::LosgNorm(p) => {
                let d = p.dim;
                let w = normal_matrix(&latent(&config, "W"), d, d, 0.0, 1.0);
                let y = vector_from(&VectorDist::Normal { mean: 0.0, std: 1.0 }, &latent(&config, "y"), d);
                (Model::Norm { w, y, p: p.p }, d)
            }
            TaskParams::LosgDependencyChain(p) => (Model::DependencyChain, p.dim),
            TaskParams::LosgMinMaxWell(p) => {
                noise = p.noise;
                (Model::MinMaxWell, p.dim)
            }
            TaskParams::LosgOutwardSnake(p) => {
                bs = p.bs;
                for key in split_keys(&config) {
                    let mut rng = key.stream();
                    let inputs = (0..p.n_samples * p.dim)
                        .map(|_| sample::uniform(&mut rng, 0.5, 1.5))
                        .collect();
                    data.push(Dataset {
                        rows: p.n_samples,
                        cols: p.dim,
                        inputs,
                        labels: Vec::new(),
                        values: Vec::new(),
                    });
                }
                (Model::OutwardSnake, p.dim)
            }
            TaskParams::LosgSumOfQuadratics(p) => {
                bs = p.bs;
                let w_star = vector_from(
                    &VectorDist::Normal { mean: 0.0, std: 1.0 },
                    &latent(&config, "w_star"),
                    p.dim,
                );
                for key in split_keys(&config) {
                    let mut rng = key.stream();
                    let mut inputs = Vec::with_capacity(p.n_samples * p.dim);
                    let mut values = Vec::with_capacity(p.n_samples);
                    for _ in 0..p.n_samples {
                        let start = inputs.len();
                        inputs.extend((0..p.dim).map(|_| sample::normal(&mut rng)));
                        let t = crate::linalg::dot(&inputs[start..], &w_star) + 0.1 * sample::normal(&mut rng);
                        values.push(t);
                    }
                    data.push(Dataset {
                        rows: p.n_samples,
                        cols: p.dim,
                        inputs,
                        labels: Vec::new(),
                        values,
                    });
                }
                (Model::LinearRegression, p.dim)
            }
            TaskParams::QuadraticLike(p) => {
                noise = p.noise.map(|s| s * p.loss_scale);
                let a = quadratic_like_a(&p.a_dist, &latent(&config, "A"), p.dims)?;
                let b = vector_from(&p.b_dist, &latent(&config, "B"), p.dims);
                let c = sample::uniform(&mut latent(&config, "C").stream(), 0.0, 1.0);
                let model = Model::QuadraticLike {
                    a,
                    b,
                    c,
                    initial: p.initial_dist.clone(),
                    weight_rescale: p.weight_rescale,
                    loss_scale: p.loss_scale,
                    log_output: p.output_fn == OutputFn::Log,
                };
                (model, p.dims)
            }
            TaskParams::LosgFullyConnected(p) => {
                bs = p.bs;
                let mut sizes = vec![p.n_features];
                sizes.extend(&p.hidden_sizes);
                sizes.push(p.n_classes);
                let net = Mlp::new(sizes, p.activation, Head::Softmax);
                let centres = normal_matrix(&latent(&config, "centres"), p.n_classes, p.n_features, 0.0, BLOB_SPREAD);
                for key in split_keys(&config) {
                    data.push(blobs(
                        centres.data(),
                        p.n_classes,
                        p.n_features,
                        p.n_samples,
                        &key,
                        false,
                    ));
                }
                let n = net.param_count();
                (
                    Model::Mlp {
                        net,
                        init: p.w_init.clone(),
                        labels: true,
                    },
                    n,
                )
            }
            TaskParams::MlpClassificationSynthetic(p) => {
                let ds = &p.dataset;
                bs = ds.bs;
                just_train = ds.just_train;
                let mut sizes = vec![ds.n_features];
                sizes.extend(&p.layer_sizes);
                sizes.push(ds.n_classes);
                let net = Mlp::new(sizes, p.activation, Head::Softmax);
                let centres = normal_matrix(
                    &latent(&config, "centres"),
                    ds.n_classes,
                    ds.n_features,
                    0.0,
                    BLOB_SPREAD,
                );
                for key in split_keys(&config).iter().take(if just_train { 1 } else { 3 }) {
                    data.push(blobs(
                        centres.data(),
                        ds.n_classes,
                        ds.n_features,
                        ds.n_samples,
                        key,
                        false,
                    ));
                }
                let n = net.param_count();
                (
                    Model::Mlp {
                        net,
                        init: p.w_init.clone(),
                        labels: true,
                    },
                    n,
                )
            }
            TaskParams::MlpAeSynthetic(p) => {
                let ds = &p.dataset;
                bs = ds.bs;
                just_train = ds.just_train;
                let mut sizes = vec![ds.n_features];
                sizes.extend(&p.hidden_units);
                sizes.push(ds.n_features);
                let head = Head::Reconstruct {
                    output: p.output_type,
                    loss: p.loss_type,
                    reduction: p.reduction_type,
                };
                let net = Mlp::new(sizes, p.activation, head);
                let centres = normal_matrix(
                    &latent(&config, "centres"),
                    ds.n_classes,
                    ds.n_features,
                    0.0,
                    BLOB_SPREAD,
                );
                for key in split_keys(&config).iter().take(if just_train { 1 } else { 3 }) {
                    data.push(blobs(
                        centres.data(),
                        ds.n_classes,
                        ds.n_features,
                        ds.n_samples,
                        key,
                        true,
                    ));
                }
                let n = net.param_count();
                (
                    Model::Mlp {
                        net,
                        init: p.w_init.clone(),
                        labels: false,
                    },
                    n,
                )
            }
        };
        if param_count == 0 {
            return Err(Error::config("params", "task has no parameters"));
        }
        Ok(TaskInstance {
            config,
            param_count,
            just_train,
            bs,
            noise,
            model,
            data,
        })
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn task_id(&self) -> &str {
        self.config.task_id()
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn just_train(&self) -> bool {
        self.just_train
    }

    /// Whether batches carry data (as opposed to the empty sentinel).
    pub fn uses_data(&self) -> bool {
        !self.data.is_empty()
    }

    /// Whether loss or gradient depend on the batch seed (noise or sparsity).
    pub fn is_stochastic(&self) -> bool {
        self.noise.is_some() || matches!(self.config.transform(), Some(Transform::SparseProblems { .. }))
    }

    pub fn batch_size(&self) -> usize {
        self.bs
    }

    pub fn initial_params(&self, seed: u64) -> Vec<f64> {
        let key = latent(&self.config, "init").child(seed);
        let mut rng = key.stream();
        let n = self.param_count;
        match &self.model {
            Model::Twod(t) => {
                let r = match t {
                    TwodTask::StyblinskiTang => 5.0,
                    _ => 2.0,
                };
                vec![sample::uniform(&mut rng, -r, r), sample::uniform(&mut rng, -r, r)]
            }
            Model::Bowl(_)
            | Model::LeastSquares { .. }
            | Model::Norm { .. }
            | Model::OutwardSnake
            | Model::LinearRegression => (0..n).map(|_| sample::normal(&mut rng)).collect(),
            Model::DependencyChain => (0..n).map(|_| sample::uniform(&mut rng, 0.5, 1.5)).collect(),
            Model::MinMaxWell => (0..n).map(|_| sample::uniform(&mut rng, 0.5, 2.0)).collect(),
            Model::QuadraticLike {
                initial,
                weight_rescale,
                ..
            } => vector_from(initial, &key, n)
                .into_iter()
                .map(|v| v / weight_rescale)
                .collect(),
            Model::Mlp { net, init, .. } => net
                .init(init, &key)
                .expect("initializer dimensions validated at instantiation"),
        }
    }

    /// Draw a minibatch for `split`. Just-train tasks serve every split from
    /// the training data.
    pub fn batch(&self, split: Split, key: &RngKey) -> Batch {
        let batch_seed = key.seed_u64();
        if self.data.is_empty() {
            return Batch::empty(batch_seed);
        }
        let ds = if self.just_train {
            &self.data[0]
        } else {
            &self.data[split.index()]
        };
        let mut rng = key.stream();
        let mut inputs = Vec::with_capacity(self.bs * ds.cols);
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for _ in 0..self.bs {
            let r = sample::uniform_int(&mut rng, 0, ds.rows - 1);
            inputs.extend_from_slice(&ds.inputs[r * ds.cols..(r + 1) * ds.cols]);
            if !ds.labels.is_empty() {
                labels.push(ds.labels[r]);
            }
            if !ds.values.is_empty() {
                values.push(ds.values[r]);
            }
        }
        let targets = if !labels.is_empty() {
            BatchTargets::Labels(labels)
        } else if !values.is_empty() {
            BatchTargets::Values(DenseMatrix::new(self.bs, 1, values).expect("finite targets"))
        } else {
            BatchTargets::None
        };
        Batch {
            inputs: DenseMatrix::new(self.bs, ds.cols, inputs).expect("finite inputs"),
            targets,
            batch_seed,
        }
    }

    fn check(&self, params: &[f64], batch: &Batch) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::Shape {
                expected: self.param_count,
                got: params.len(),
            });
        }
        if self.uses_data() {
            let cols = self.data[0].cols;
            if batch.inputs.rows() == 0 || batch.inputs.cols() != cols {
                return Err(Error::Shape {
                    expected: cols,
                    got: batch.inputs.cols(),
                });
            }
            let rows = match &batch.targets {
                BatchTargets::None => batch.inputs.rows(),
                BatchTargets::Labels(l) => l.len(),
                BatchTargets::Values(v) => v.rows(),
            };
            if rows != batch.inputs.rows() {
                return Err(Error::Shape {
                    expected: batch.inputs.rows(),
                    got: rows,
                });
            }
        }
        Ok(())
    }

    fn base(&self, params: &[f64], batch: &Batch, grad: Option<&mut [f64]>) -> Result<f64> {
        Ok(match &self.model {
            Model::Twod(t) => objectives::twod(*t, params, grad),
            Model::Bowl(k) => objectives::bowl(*k, params, grad),
            Model::LeastSquares { w, y } => objectives::least_squares(w, y, params, grad),
            Model::Norm { w, y, p } => objectives::p_norm(w, y, *p, params, grad),
            Model::DependencyChain => objectives::dependency_chain(params, grad),
            Model::MinMaxWell => objectives::min_max_well(params, grad),
            Model::OutwardSnake => objectives::outward_snake(batch.inputs.data(), batch.inputs.rows(), params, grad),
            Model::LinearRegression => {
                let BatchTargets::Values(t) = &batch.targets else {
                    return Err(Error::InvalidInput("regression batch needs value targets".into()));
                };
                objectives::linear_regression(batch.inputs.data(), t.data(), params, grad)
            }
            Model::QuadraticLike {
                a,
                b,
                c,
                weight_rescale,
                loss_scale,
                log_output,
                ..
            } => QuadraticLike {
                a,
                b,
                c: *c,
                weight_rescale: *weight_rescale,
                loss_scale: *loss_scale,
                log_output: *log_output,
            }
            .eval(params, grad),
            Model::Mlp { net, labels, .. } => {
                let targets = if *labels {
                    match &batch.targets {
                        BatchTargets::Labels(l) => Targets::Labels(l),
                        _ => return Err(Error::InvalidInput("classification batch needs labels".into())),
                    }
                } else {
                    Targets::Inputs
                };
                net.loss_grad(params, batch.inputs.data(), batch.inputs.rows(), targets, grad)
            }
        })
    }

    /// Loss with any rescale/log transform applied. Non-finite values are
    /// returned as-is and mark divergence.
    pub fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.check(params, batch)?;
        let f = self.base(params, batch, None)?;
        Ok(match self.config.transform() {
            Some(Transform::RescaleProblems { scale }) => f * scale,
            Some(Transform::LogObjective) => f.max(LOG_EPS).ln(),
            _ => f,
        })
    }

    /// Loss before any transform.
    pub fn untransformed_loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.check(params, batch)?;
        self.base(params, batch, None)
    }

    pub fn gradient(&self, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.param_count];
        self.gradient_into(params, batch, &mut g)?;
        Ok(g)
    }

    /// Gradient written into `out`; allocation-free for the closed-form families.
    pub fn gradient_into(&self, params: &[f64], batch: &Batch, out: &mut [f64]) -> Result<()> {
        self.check(params, batch)?;
        if out.len() != self.param_count {
            return Err(Error::Shape {
                expected: self.param_count,
                got: out.len(),
            });
        }
        let f = self.base(params, batch, Some(out))?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(batch.batch_seed ^ label_of("grad-noise"));
        if let Some(std) = self.noise {
            out.iter_mut().for_each(|g| *g += std * sample::normal(&mut noise_rng));
        }
        match self.config.transform() {
            Some(Transform::RescaleProblems { scale }) => out.iter_mut().for_each(|g| *g *= scale),
            Some(Transform::LogObjective) => {
                let k = if f > LOG_EPS { 1.0 / f } else { 0.0 };
                out.iter_mut().for_each(|g| *g *= k);
            }
            Some(Transform::SparseProblems { zero_prob, noise }) => {
                let mut mask = ChaCha8Rng::seed_from_u64(batch.batch_seed ^ label_of("sparse-mask"));
                out.iter_mut().for_each(|g| {
                    if sample::bernoulli(&mut mask, *zero_prob) {
                        *g = 0.0;
                    }
                });
                if let Some(std) = noise {
                    out.iter_mut().for_each(|g| *g += std * sample::normal(&mut noise_rng));
                }
            }
            None => {}
        }
        Ok(())
    }
}
