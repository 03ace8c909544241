//! Task configurations: the serializable description of a sampled task.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    QuadraticLike,
    LosgQuadratic,
    LosgBowl,
    LosgNorm,
    LosgDependencyChain,
    LosgOutwardSnake,
    LosgMinMaxWell,
    LosgSumOfQuadratics,
    LosgFullyConnected,
    MlpClassificationSynthetic,
    MlpAeSynthetic,
    TwodFixed,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::QuadraticLike,
        Family::LosgQuadratic,
        Family::LosgBowl,
        Family::LosgNorm,
        Family::LosgDependencyChain,
        Family::LosgOutwardSnake,
        Family::LosgMinMaxWell,
        Family::LosgSumOfQuadratics,
        Family::LosgFullyConnected,
        Family::MlpClassificationSynthetic,
        Family::MlpAeSynthetic,
        Family::TwodFixed,
    ];

    /// Families drawn by the task sampler (everything except the fixed 2D set).
    pub const SAMPLED: [Family; 11] = [
        Family::QuadraticLike,
        Family::LosgQuadratic,
        Family::LosgBowl,
        Family::LosgNorm,
        Family::LosgDependencyChain,
        Family::LosgOutwardSnake,
        Family::LosgMinMaxWell,
        Family::LosgSumOfQuadratics,
        Family::LosgFullyConnected,
        Family::MlpClassificationSynthetic,
        Family::MlpAeSynthetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::QuadraticLike => "quadratic_like",
            Family::LosgQuadratic => "losg_quadratic",
            Family::LosgBowl => "losg_bowl",
            Family::LosgNorm => "losg_norm",
            Family::LosgDependencyChain => "losg_dependency_chain",
            Family::LosgOutwardSnake => "losg_outward_snake",
            Family::LosgMinMaxWell => "losg_min_max_well",
            Family::LosgSumOfQuadratics => "losg_sum_of_quadratics",
            Family::LosgFullyConnected => "losg_fully_connected",
            Family::MlpClassificationSynthetic => "mlp_classification_synthetic",
            Family::MlpAeSynthetic => "mlp_ae_synthetic",
            Family::TwodFixed => "twod_fixed",
        }
    }

    pub fn is_losg(self) -> bool {
        self.name().starts_with("losg_")
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.iter().copied().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<_> = Family::ALL.iter().map(|f| f.name()).collect();
            Error::config("family", format!("unknown family `{s}`; valid: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Cos,
    Elu,
    Sigmoid,
    Swish,
    /// leaky relu with slope 0.4
    LeakyRelu4,
    /// leaky relu with slope 0.2
    LeakyRelu2,
    /// leaky relu with slope 0.1
    LeakyRelu1,
}

impl Activation {
    pub const WEIGHTED: [(Activation, f64); 9] = [
        (Activation::Relu, 6.0),
        (Activation::Tanh, 3.0),
        (Activation::Cos, 1.0),
        (Activation::Elu, 1.0),
        (Activation::Sigmoid, 1.0),
        (Activation::Swish, 1.0),
        (Activation::LeakyRelu4, 1.0),
        (Activation::LeakyRelu2, 1.0),
        (Activation::LeakyRelu1, 1.0),
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Initializer {
    HeNormal,
    HeUniform,
    GlorotNormal,
    GlorotUniform,
    Orthogonal { gain: f64 },
    RandomUniform { scale: f64 },
    RandomNormal { std: f64 },
    TruncatedNormal { std: f64 },
    VarianceScaling { scale: f64 },
}

impl Default for Initializer {
    fn default() -> Self {
        Initializer::GlorotUniform
    }
}

/// Distribution over the quadratic-like `A` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixDist {
    Normal { mean: f64, std: f64 },
    Uniform { min: f64, max: f64 },
    LinspaceEigen { min: f64, max: f64 },
    LogspaceEigen { min: f64, max: f64 },
}

/// Elementwise distribution for vectors (`B`, initial values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorDist {
    Normal { mean: f64, std: f64 },
    Uniform { min: f64, max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFn {
    Identity,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeOutput {
    Tanh,
    Sigmoid,
    LinearCenter,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeLoss {
    L2,
    L1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    ReduceMean,
    ReduceSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwodTask {
    #[serde(rename = "TwoD_Bowl1")]
    Bowl1,
    #[serde(rename = "TwoD_Bowl10")]
    Bowl10,
    #[serde(rename = "TwoD_Bowl100")]
    Bowl100,
    #[serde(rename = "TwoD_Bowl1000")]
    Bowl1000,
    #[serde(rename = "TwoD_Rosenbrock")]
    Rosenbrock,
    #[serde(rename = "TwoD_StyblinskiTang")]
    StyblinskiTang,
    #[serde(rename = "TwoD_Ackley")]
    Ackley,
    #[serde(rename = "TwoD_Beale")]
    Beale,
}

impl TwodTask {
    pub const ALL: [TwodTask; 8] = [
        TwodTask::Bowl1,
        TwodTask::Bowl10,
        TwodTask::Bowl100,
        TwodTask::Bowl1000,
        TwodTask::Rosenbrock,
        TwodTask::StyblinskiTang,
        TwodTask::Ackley,
        TwodTask::Beale,
    ];
}

/// Gaussian-blob dataset used by the synthetic MLP families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataset {
    pub n_features: usize,
    pub n_classes: usize,
    pub n_samples: usize,
    pub bs: usize,
    pub just_train: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticLikeParams {
    pub dims: usize,
    #[serde(rename = "A_dist")]
    pub a_dist: MatrixDist,
    #[serde(rename = "B_dist")]
    pub b_dist: VectorDist,
    pub initial_dist: VectorDist,
    pub output_fn: OutputFn,
    pub loss_scale: f64,
    pub weight_rescale: f64,
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimNoiseParams {
    pub dim: usize,
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BowlParams {
    pub condition_number: f64,
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormParams {
    pub dim: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimParams {
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimDataParams {
    pub dim: usize,
    pub bs: usize,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullyConnectedParams {
    pub n_features: usize,
    pub n_classes: usize,
    pub activation: Activation,
    pub bs: usize,
    pub n_samples: usize,
    pub hidden_sizes: Vec<usize>,
    #[serde(default)]
    pub w_init: Initializer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub w_init: Initializer,
    pub dataset: SyntheticDataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpAeParams {
    pub hidden_units: Vec<usize>,
    pub activation: Activation,
    pub w_init: Initializer,
    pub output_type: AeOutput,
    pub loss_type: AeLoss,
    pub reduction_type: Reduction,
    pub dataset: SyntheticDataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwodParams {
    pub name: TwodTask,
}

/// Family-specific parameters. Serialized without a tag; the family field of
/// [`TaskConfig`] selects the variant.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskParams {
    QuadraticLike(QuadraticLikeParams),
    LosgQuadratic(DimNoiseParams),
    LosgBowl(BowlParams),
    LosgNorm(NormParams),
    LosgDependencyChain(DimParams),
    LosgOutwardSnake(DimDataParams),
    LosgMinMaxWell(DimNoiseParams),
    LosgSumOfQuadratics(DimDataParams),
    LosgFullyConnected(FullyConnectedParams),
    MlpClassificationSynthetic(MlpParams),
    MlpAeSynthetic(MlpAeParams),
    TwodFixed(TwodParams),
}

impl TaskParams {
    pub fn family(&self) -> Family {
        match self {
            TaskParams::QuadraticLike(_) => Family::QuadraticLike,
            TaskParams::LosgQuadratic(_) => Family::LosgQuadratic,
            TaskParams::LosgBowl(_) => Family::LosgBowl,
            TaskParams::LosgNorm(_) => Family::LosgNorm,
            TaskParams::LosgDependencyChain(_) => Family::LosgDependencyChain,
            TaskParams::LosgOutwardSnake(_) => Family::LosgOutwardSnake,
            TaskParams::LosgMinMaxWell(_) => Family::LosgMinMaxWell,
            TaskParams::LosgSumOfQuadratics(_) => Family::LosgSumOfQuadratics,
            TaskParams::LosgFullyConnected(_) => Family::LosgFullyConnected,
            TaskParams::MlpClassificationSynthetic(_) => Family::MlpClassificationSynthetic,
            TaskParams::MlpAeSynthetic(_) => Family::MlpAeSynthetic,
            TaskParams::TwodFixed(_) => Family::TwodFixed,
        }
    }

    fn to_value(&self) -> serde_json::Value {
        let v = match self {
            TaskParams::QuadraticLike(p) => serde_json::to_value(p),
            TaskParams::LosgQuadratic(p) | TaskParams::LosgMinMaxWell(p) => serde_json::to_value(p),
            TaskParams::LosgBowl(p) => serde_json::to_value(p),
            TaskParams::LosgNorm(p) => serde_json::to_value(p),
            TaskParams::LosgDependencyChain(p) => serde_json::to_value(p),
            TaskParams::LosgOutwardSnake(p) | TaskParams::LosgSumOfQuadratics(p) => serde_json::to_value(p),
            TaskParams::LosgFullyConnected(p) => serde_json::to_value(p),
            TaskParams::MlpClassificationSynthetic(p) => serde_json::to_value(p),
            TaskParams::MlpAeSynthetic(p) => serde_json::to_value(p),
            TaskParams::TwodFixed(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }

    fn from_value(family: Family, v: serde_json::Value) -> Result<Self> {
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| Error::config("params", e.to_string()))
        }
        Ok(match family {
            Family::QuadraticLike => TaskParams::QuadraticLike(parse(v)?),
            Family::LosgQuadratic => TaskParams::LosgQuadratic(parse(v)?),
            Family::LosgBowl => TaskParams::LosgBowl(parse(v)?),
            Family::LosgNorm => TaskParams::LosgNorm(parse(v)?),
            Family::LosgDependencyChain => TaskParams::LosgDependencyChain(parse(v)?),
            Family::LosgOutwardSnake => TaskParams::LosgOutwardSnake(parse(v)?),
            Family::LosgMinMaxWell => TaskParams::LosgMinMaxWell(parse(v)?),
            Family::LosgSumOfQuadratics => TaskParams::LosgSumOfQuadratics(parse(v)?),
            Family::LosgFullyConnected => TaskParams::LosgFullyConnected(parse(v)?),
            Family::MlpClassificationSynthetic => TaskParams::MlpClassificationSynthetic(parse(v)?),
            Family::MlpAeSynthetic => TaskParams::MlpAeSynthetic(parse(v)?),
            Family::TwodFixed => TaskParams::TwodFixed(parse(v)?),
        })
    }

    /// Schema checks beyond what the types enforce.
    pub fn validate(&self) -> Result<()> {
        fn positive(path: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be positive and finite, got {v}")))
            }
        }
        fn at_least(path: &str, v: usize, min: usize) -> Result<()> {
            if v >= min {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be >= {min}, got {v}")))
            }
        }
        fn noise(path: &str, v: Option<f64>) -> Result<()> {
            match v {
                Some(s) if !(s.is_finite() && s >= 0.0) => {
                    Err(Error::config(path, format!("noise must be finite and >= 0, got {s}")))
                }
                _ => Ok(()),
            }
        }
        fn vector_dist(path: &str, d: &VectorDist) -> Result<()> {
            match *d {
                VectorDist::Normal { mean, std } if mean.is_finite() && std.is_finite() && std >= 0.0 => Ok(()),
                VectorDist::Uniform { min, max } if min.is_finite() && max.is_finite() && min <= max => Ok(()),
                _ => Err(Error::config(path, format!("invalid distribution {d:?}"))),
            }
        }
        fn init(path: &str, i: &Initializer) -> Result<()> {
            match *i {
                Initializer::Orthogonal { gain: s }
                | Initializer::RandomUniform { scale: s }
                | Initializer::RandomNormal { std: s }
                | Initializer::TruncatedNormal { std: s }
                | Initializer::VarianceScaling { scale: s } => positive(path, s),
                _ => Ok(()),
            }
        }
        fn sizes(path: &str, v: &[usize], allow_empty: bool) -> Result<()> {
            if !allow_empty && v.is_empty() {
                return Err(Error::config(path, "must not be empty"));
            }
            match v.iter().position(|&s| s == 0) {
                Some(i) => Err(Error::config(format!("{path}[{i}]"), "layer size must be >= 1")),
                None => Ok(()),
            }
        }
        fn dataset(d: &SyntheticDataset) -> Result<()> {
            at_least("params.dataset.n_features", d.n_features, 1)?;
            at_least("params.dataset.n_classes", d.n_classes, 2)?;
            at_least("params.dataset.n_samples", d.n_samples, 1)?;
            at_least("params.dataset.bs", d.bs, 1)
        }
        match self {
            TaskParams::QuadraticLike(p) => {
                at_least("params.dims", p.dims, 1)?;
                match p.a_dist {
                    MatrixDist::Normal { mean, std } if mean.is_finite() && std.is_finite() && std >= 0.0 => {}
                    MatrixDist::Uniform { min, max } if min.is_finite() && max.is_finite() && min <= max => {}
                    MatrixDist::LinspaceEigen { min, max } if min.is_finite() && max.is_finite() && min <= max => {}
                    MatrixDist::LogspaceEigen { min, max } if min > 0.0 && max.is_finite() && min <= max => {}
                    ref d => return Err(Error::config("params.A_dist", format!("invalid distribution {d:?}"))),
                }
                vector_dist("params.B_dist", &p.b_dist)?;
                vector_dist("params.initial_dist", &p.initial_dist)?;
                positive("params.loss_scale", p.loss_scale)?;
                positive("params.weight_rescale", p.weight_rescale)?;
                noise("params.noise", p.noise)
            }
            TaskParams::LosgQuadratic(p) | TaskParams::LosgMinMaxWell(p) => {
                at_least("params.dim", p.dim, 1)?;
                noise("params.noise", p.noise)
            }
            TaskParams::LosgBowl(p) => {
                positive("params.condition_number", p.condition_number)?;
                noise("params.noise", p.noise)
            }
            TaskParams::LosgNorm(p) => {
                at_least("params.dim", p.dim, 1)?;
                positive("params.p", p.p)
            }
            TaskParams::LosgDependencyChain(p) => at_least("params.dim", p.dim, 1),
            TaskParams::LosgOutwardSnake(p) | TaskParams::LosgSumOfQuadratics(p) => {
                at_least("params.dim", p.dim, 1)?;
                at_least("params.bs", p.bs, 1)?;
                at_least("params.n_samples", p.n_samples, 1)
            }
            TaskParams::LosgFullyConnected(p) => {
                at_least("params.n_features", p.n_features, 1)?;
                at_least("params.n_classes", p.n_classes, 2)?;
                at_least("params.bs", p.bs, 1)?;
                at_least("params.n_samples", p.n_samples, 1)?;
                sizes("params.hidden_sizes", &p.hidden_sizes, true)?;
                init("params.w_init", &p.w_init)
            }
            TaskParams::MlpClassificationSynthetic(p) => {
                sizes("params.layer_sizes", &p.layer_sizes, true)?;
                init("params.w_init", &p.w_init)?;
                dataset(&p.dataset)
            }
            TaskParams::MlpAeSynthetic(p) => {
                sizes("params.hidden_units", &p.hidden_units, false)?;
                init("params.w_init", &p.w_init)?;
                dataset(&p.dataset)
            }
            TaskParams::TwodFixed(_) => Ok(()),
        }
    }
}

/// Optional loss/gradient transformation applied on top of a base task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Each gradient coordinate is zeroed with probability `zero_prob`;
    /// optional additive gaussian gradient noise.
    SparseProblems { zero_prob: f64, noise: Option<f64> },
    /// Loss multiplied by `scale`.
    RescaleProblems { scale: f64 },
    /// `log(max(1e-20, loss))`.
    LogObjective,
}

impl Transform {
    fn validate(&self) -> Result<()> {
        match *self {
            Transform::SparseProblems { zero_prob, noise } => {
                if !(0.0..=1.0).contains(&zero_prob) {
                    return Err(Error::config("transform.zero_prob", "must be in [0, 1]"));
                }
                if let Some(s) = noise {
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(Error::config("transform.noise", "must be finite and >= 0"));
                    }
                }
                Ok(())
            }
            Transform::RescaleProblems { scale } if !(scale.is_finite() && scale > 0.0) => {
                Err(Error::config("transform.scale", "must be positive and finite"))
            }
            _ => Ok(()),
        }
    }
}

/// A fully specified task. `task_id` is derived from the other fields.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig {
    task_id: String,
    params: TaskParams,
    transform: Option<Transform>,
    config_seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskConfigRepr {
    #[serde(default)]
    task_id: Option<String>,
    family: Family,
    config_seed: u64,
    transform: Option<Transform>,
    params: serde_json::Value,
}

#[derive(Serialize)]
struct IdSource<'a> {
    family: Family,
    params: &'a serde_json::Value,
    transform: &'a Option<Transform>,
    config_seed: u64,
}

impl TaskConfig {
    pub fn new(params: TaskParams, transform: Option<Transform>, config_seed: u64) -> Result<Self> {
        params.validate()?;
        if let Some(t) = &transform {
            t.validate()?;
        }
        let task_id = Self::derive_id(&params, &transform, config_seed);
        Ok(TaskConfig {
            task_id,
            params,
            transform,
            config_seed,
        })
    }

    fn derive_id(params: &TaskParams, transform: &Option<Transform>, config_seed: u64) -> String {
        let family = params.family();
        let value = params.to_value();
        let canonical = serde_json::to_vec(&IdSource {
            family,
            params: &value,
            transform,
            config_seed,
        })
        .expect("id source serializes");
        let digest = Sha256::digest(&canonical);
        format!("{}-{}", family.name(), &hex::encode(digest)[..12])
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn params(&self) -> &TaskParams {
        &self.params
    }

    pub fn transform(&self) -> Option<&Transform> {
        self.transform.as_ref()
    }

    pub fn config_seed(&self) -> u64 {
        self.config_seed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("task config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config("task", e.to_string()))
    }
}

impl Serialize for TaskConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TaskConfigRepr {
            task_id: Some(self.task_id.clone()),
            family: self.family(),
            config_seed: self.config_seed,
            transform: self.transform.clone(),
            params: self.params.to_value(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TaskConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TaskConfigRepr::deserialize(d)?;
        TaskConfig::try_from(repr).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<TaskConfigRepr> for TaskConfig {
    type Error = Error;

    fn try_from(repr: TaskConfigRepr) -> Result<Self> {
        let params = TaskParams::from_value(repr.family, repr.params)?;
        let config = TaskConfig::new(params, repr.transform, repr.config_seed)?;
        match repr.task_id {
            Some(id) if id != config.task_id => Err(Error::config(
                "task_id",
                format!("`{id}` does not match derived id `{}`", config.task_id),
            )),
            _ => Ok(config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_fully_connected_listing() {
        let json = r#"{"family":"losg_fully_connected","config_seed":36641,"transform":null,
            "params":{"n_features":16,"n_classes":2,"activation":"leaky_relu2","bs":7,
            "n_samples":12,"hidden_sizes":[32,8,5,9,8]}}"#;
        let cfg = TaskConfig::from_json(json).unwrap();
        assert_eq!(cfg.family(), Family::LosgFullyConnected);
        assert!(cfg.task_id().starts_with("losg_fully_connected-"));
        let back = TaskConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_schema_violations_with_path() {
        let json = r#"{"family":"losg_norm","config_seed":1,"transform":null,"params":{"dim":0,"p":2.0}}"#;
        match TaskConfig::from_json(json) {
            Err(Error::Config { message, .. }) => assert!(message.contains("params.dim"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
        let json = r#"{"family":"losg_norm","config_seed":1,"transform":null,"params":{"dim":3,"p":2.0,"q":1}}"#;
        assert!(TaskConfig::from_json(json).is_err());
    }

    #[test]
    fn tampered_id_is_rejected() {
        let cfg = TaskConfig::new(TaskParams::LosgDependencyChain(DimParams { dim: 4 }), None, 9).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["config_seed"] = 10.into();
        assert!(TaskConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.name()));
        }
        let err = "bogus".parse::<Family>().unwrap_err().to_string();
        assert!(err.contains("quadratic_like"));
    }
}
