//! Per-family task samplers.

use rand::Rng;

use crate::rng::{KeyStream, RngKey};
use crate::sample::{bernoulli, log_uniform, log_uniform_int, uniform, uniform_int, weighted_index};

use super::config::*;

/// Probability that a sampled losg task carries one of the transforms.
pub const TRANSFORM_PROB: f64 = 0.3;
/// Probability that a synthetic MLP dataset serves train data for every split.
pub const JUST_TRAIN_PROB: f64 = 0.1;

fn lu(rng: &mut KeyStream, lo: f64, hi: f64) -> f64 {
    log_uniform(rng, lo, hi).expect("constant range")
}

fn optional_noise(rng: &mut KeyStream) -> Option<f64> {
    if bernoulli(rng, 0.5) {
        Some(lu(rng, 0.01, 10.0))
    } else {
        None
    }
}

fn activation(rng: &mut KeyStream) -> Activation {
    let w: Vec<f64> = Activation::WEIGHTED.iter().map(|(_, w)| *w).collect();
    Activation::WEIGHTED[weighted_index(rng, &w)].0
}

fn initializer(rng: &mut KeyStream) -> Initializer {
    let w = [2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    match weighted_index(rng, &w) {
        0 => Initializer::HeNormal,
        1 => Initializer::HeUniform,
        2 => Initializer::GlorotNormal,
        3 => Initializer::GlorotUniform,
        4 => Initializer::Orthogonal {
            gain: lu(rng, 0.5, 2.0),
        },
        5 => Initializer::RandomUniform {
            scale: lu(rng, 0.01, 1.0),
        },
        6 => Initializer::RandomNormal {
            std: lu(rng, 0.01, 1.0),
        },
        7 => Initializer::TruncatedNormal {
            std: lu(rng, 0.01, 1.0),
        },
        _ => Initializer::VarianceScaling {
            scale: lu(rng, 0.1, 10.0),
        },
    }
}

fn data_sizes(rng: &mut KeyStream) -> (usize, usize) {
    let bs = log_uniform_int(rng, 4, 128);
    let n_samples = log_uniform_int(rng, 64, 4096);
    (bs, n_samples)
}

fn hidden_layers(rng: &mut KeyStream, min_layers: usize) -> Vec<usize> {
    let n = uniform_int(rng, min_layers, 6);
    (0..n).map(|_| log_uniform_int(rng, 16, 128)).collect()
}

fn dataset(rng: &mut KeyStream) -> SyntheticDataset {
    let (bs, n_samples) = data_sizes(rng);
    SyntheticDataset {
        n_features: log_uniform_int(rng, 2, 32),
        n_classes: if bernoulli(rng, 0.5) { 2 } else { 10 },
        n_samples,
        bs,
        just_train: bernoulli(rng, JUST_TRAIN_PROB),
    }
}

fn vector_dist(rng: &mut KeyStream) -> VectorDist {
    if bernoulli(rng, 0.5) {
        VectorDist::Normal {
            mean: crate::sample::normal(rng),
            std: uniform(rng, 0.0, 2.0),
        }
    } else {
        let min = uniform(rng, -5.0, 2.5);
        VectorDist::Uniform {
            min,
            max: min + uniform(rng, 0.0, 5.0),
        }
    }
}

fn matrix_dist(rng: &mut KeyStream) -> MatrixDist {
    match uniform_int(rng, 0, 3) {
        0 => MatrixDist::Normal {
            mean: uniform(rng, -0.1, 0.1),
            std: uniform(rng, 0.0, 0.05),
        },
        1 => {
            let min = uniform(rng, -0.1, 0.1);
            MatrixDist::Uniform {
                min,
                max: min + uniform(rng, 0.0, 0.1),
            }
        }
        2 => {
            let min = lu(rng, 0.01, 100.0);
            MatrixDist::LinspaceEigen {
                min,
                max: min * lu(rng, 1.0, 1000.0),
            }
        }
        _ => {
            let min = lu(rng, 0.01, 100.0);
            MatrixDist::LogspaceEigen {
                min,
                max: min * lu(rng, 1.0, 1000.0),
            }
        }
    }
}

fn transform(rng: &mut KeyStream) -> Option<Transform> {
    if !bernoulli(rng, TRANSFORM_PROB) {
        return None;
    }
    Some(match uniform_int(rng, 0, 2) {
        0 => Transform::SparseProblems {
            zero_prob: uniform(rng, 0.9, 0.99),
            noise: optional_noise(rng),
        },
        1 => Transform::RescaleProblems {
            scale: lu(rng, 1e-3, 1e3),
        },
        _ => Transform::LogObjective,
    })
}

/// Draw family parameters from their documented ranges.
pub fn sample_params(family: Family, key: &RngKey) -> TaskParams {
    let rng = &mut key.stream();
    match family {
        Family::LosgQuadratic => TaskParams::LosgQuadratic(DimNoiseParams {
            dim: log_uniform_int(rng, 10, 1000),
            noise: optional_noise(rng),
        }),
        Family::LosgBowl => TaskParams::LosgBowl(BowlParams {
            condition_number: lu(rng, 0.01, 100.0),
            noise: optional_noise(rng),
        }),
        Family::LosgNorm => TaskParams::LosgNorm(NormParams {
            dim: log_uniform_int(rng, 3, 1000),
            p: uniform(rng, 0.1, 5.0),
        }),
        Family::LosgDependencyChain => TaskParams::LosgDependencyChain(DimParams {
            dim: log_uniform_int(rng, 3, 100),
        }),
        Family::LosgOutwardSnake => {
            let dim = log_uniform_int(rng, 3, 100);
            let (bs, n_samples) = data_sizes(rng);
            TaskParams::LosgOutwardSnake(DimDataParams { dim, bs, n_samples })
        }
        Family::LosgMinMaxWell => TaskParams::LosgMinMaxWell(DimNoiseParams {
            dim: log_uniform_int(rng, 10, 1000),
            noise: optional_noise(rng),
        }),
        Family::LosgSumOfQuadratics => {
            let dim = log_uniform_int(rng, 3, 100);
            let (bs, n_samples) = data_sizes(rng);
            TaskParams::LosgSumOfQuadratics(DimDataParams { dim, bs, n_samples })
        }
        Family::LosgFullyConnected => {
            let n_features = log_uniform_int(rng, 1, 16);
            let layers = uniform_int(rng, 2, 5);
            let hidden_sizes = (0..layers).map(|_| log_uniform_int(rng, 4, 32)).collect();
            let activation = activation(rng);
            let (bs, n_samples) = data_sizes(rng);
            TaskParams::LosgFullyConnected(FullyConnectedParams {
                n_features,
                n_classes: 2,
                activation,
                bs,
                n_samples,
                hidden_sizes,
                w_init: initializer(rng),
            })
        }
        Family::QuadraticLike => {
            let dims = log_uniform_int(rng, 2, 3000);
            TaskParams::QuadraticLike(QuadraticLikeParams {
                dims,
                a_dist: matrix_dist(rng),
                b_dist: vector_dist(rng),
                initial_dist: vector_dist(rng),
                output_fn: if bernoulli(rng, 0.5) {
                    OutputFn::Identity
                } else {
                    OutputFn::Log
                },
                loss_scale: lu(rng, 1e-5, 1e3),
                weight_rescale: lu(rng, 0.1, 10.0),
                noise: optional_noise(rng),
            })
        }
        Family::MlpClassificationSynthetic => TaskParams::MlpClassificationSynthetic(MlpParams {
            layer_sizes: hidden_layers(rng, 1),
            activation: activation(rng),
            w_init: initializer(rng),
            dataset: dataset(rng),
        }),
        Family::MlpAeSynthetic => {
            let hidden_units = hidden_layers(rng, 1);
            let activation = activation(rng);
            let w_init = initializer(rng);
            let output_type = match weighted_index(rng, &[2.0, 1.0, 1.0, 1.0]) {
                0 => AeOutput::Tanh,
                1 => AeOutput::Sigmoid,
                2 => AeOutput::LinearCenter,
                _ => AeOutput::Linear,
            };
            let loss_type = if weighted_index(rng, &[2.0, 1.0]) == 0 {
                AeLoss::L2
            } else {
                AeLoss::L1
            };
            let reduction_type = if bernoulli(rng, 0.5) {
                Reduction::ReduceMean
            } else {
                Reduction::ReduceSum
            };
            TaskParams::MlpAeSynthetic(MlpAeParams {
                hidden_units,
                activation,
                w_init,
                output_type,
                loss_type,
                reduction_type,
                dataset: dataset(rng),
            })
        }
        Family::TwodFixed => TaskParams::TwodFixed(TwodParams {
            name: TwodTask::ALL[uniform_int(rng, 0, TwodTask::ALL.len() - 1)],
        }),
    }
}

/// Sample a complete task config for `family`. Losg families may carry a
/// transform; no transform is applied to the other families.
pub fn sample_task_config(family: Family, key: &RngKey) -> TaskConfig {
    let params = sample_params(family, &key.child_named("params"));
    let transform = if family.is_losg() {
        transform(&mut key.child_named("transform").stream())
    } else {
        None
    };
    let config_seed = u64::from(key.child_named("config_seed").stream().random::<u32>());
    TaskConfig::new(params, transform, config_seed).expect("sampled params satisfy their schema")
}

/// Config for one of the fixed 2D test functions.
pub fn fixed_twod(task: TwodTask) -> TaskConfig {
    TaskConfig::new(TaskParams::TwodFixed(TwodParams { name: task }), None, 0).expect("fixed config")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_ranges() {
        let root = RngKey::from_seed(42);
        for i in 0..300 {
            let key = root.child(i);
            match sample_task_config(Family::LosgMinMaxWell, &key).params() {
                TaskParams::LosgMinMaxWell(p) => assert!((10..=1000).contains(&p.dim)),
                _ => unreachable!(),
            }
            match sample_task_config(Family::LosgNorm, &key).params() {
                TaskParams::LosgNorm(p) => assert!((0.1..=5.0).contains(&p.p) && (3..=1000).contains(&p.dim)),
                _ => unreachable!(),
            }
            match sample_task_config(Family::QuadraticLike, &key).params() {
                TaskParams::QuadraticLike(p) => {
                    assert!((2..=3000).contains(&p.dims));
                    assert!((1e-5..=1e3).contains(&p.loss_scale));
                }
                _ => unreachable!(),
            }
            match sample_task_config(Family::LosgBowl, &key).params() {
                TaskParams::LosgBowl(p) => {
                    assert!((0.01..=100.0).contains(&p.condition_number));
                    if let Some(s) = p.noise {
                        assert!((0.01..=10.0).contains(&s));
                    }
                }
                _ => unreachable!(),
            }
            match sample_task_config(Family::MlpClassificationSynthetic, &key).params() {
                TaskParams::MlpClassificationSynthetic(p) => {
                    assert!((1..=6).contains(&p.layer_sizes.len()));
                    assert!(p.layer_sizes.iter().all(|h| (16..=128).contains(h)));
                    assert!((64..=4096).contains(&p.dataset.n_samples));
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn both_output_fns_occur() {
        let root = RngKey::from_seed(1);
        let mut seen = [false; 2];
        for i in 0..100 {
            if let TaskParams::QuadraticLike(p) = sample_task_config(Family::QuadraticLike, &root.child(i)).params() {
                seen[(p.output_fn == OutputFn::Log) as usize] = true;
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let key = RngKey::from_seed(3);
        for f in Family::ALL {
            assert_eq!(sample_task_config(f, &key), sample_task_config(f, &key));
        }
    }
}
