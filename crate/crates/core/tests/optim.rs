use optlist::optim::{
    apply_update, nadamw_learning_rate, sample_optimizer, AdamHparams, NadamwHparams, ScheduleContext,
};
use optlist::{OptimizerConfig, OptimizerFamily, OptimizerState, RngKey};
use proptest::prelude::*;

fn ctx(t: usize, total: usize) -> ScheduleContext {
    ScheduleContext { t, total }
}

fn any_family() -> impl Strategy<Value = OptimizerFamily> {
    prop::sample::select(vec![
        OptimizerFamily::Adam1p,
        OptimizerFamily::Adam4p,
        OptimizerFamily::Adam6p,
        OptimizerFamily::Adam8p,
        OptimizerFamily::Nadamw,
    ])
}

fn vectors(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-5.0f64..5.0, n),
        prop::collection::vec(-5.0f64..5.0, n),
    )
}

proptest! {
    #[test]
    fn update_is_permutation_equivariant(
        family in any_family(),
        seed in any::<u64>(),
        (params, grad) in vectors(6),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        t in 0usize..50,
    ) {
        let cfg = sample_optimizer(family, &RngKey::from_seed(seed));
        let mut state = OptimizerState::new(6);
        state.t = t;
        let (p, _) = apply_update(&cfg, &state, &params, &grad, ctx(t, 100)).unwrap();
        let pp: Vec<f64> = perm.iter().map(|&i| params[i]).collect();
        let pg: Vec<f64> = perm.iter().map(|&i| grad[i]).collect();
        let (q, _) = apply_update(&cfg, &state, &pp, &pg, ctx(t, 100)).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            prop_assert_eq!(q[j].to_bits(), p[i].to_bits());
        }
    }

    #[test]
    fn adam_step_is_bounded_for_comparable_gradients(
        lr in 1e-6f64..1.0,
        grads in prop::collection::vec(prop::collection::vec((1.0f64..2.0, any::<bool>()), 3), 2..30),
    ) {
        // |m̂| ≤ max|g| and √v̂ ≥ min|g|, so the ratio stays under 2
        let cfg = OptimizerConfig::adam(OptimizerFamily::Adam4p, AdamHparams::with_lr(lr)).unwrap();
        let mut state = OptimizerState::new(3);
        let mut params = vec![0.0; 3];
        for (t, g) in grads.iter().enumerate() {
            let g: Vec<f64> = g.iter().map(|&(m, neg)| if neg { -m } else { m }).collect();
            let (p, s) = apply_update(&cfg, &state, &params, &g, ctx(t, 1000)).unwrap();
            if t >= 1 {
                for (a, b) in p.iter().zip(&params) {
                    prop_assert!((a - b).abs() <= 2.0 * lr, "step {} moved {}", t, (a - b).abs());
                }
            }
            params = p;
            state = s;
        }
    }

    #[test]
    fn adam_step_obeys_cauchy_schwarz_bound(
        lr in 1e-6f64..1.0,
        grads in prop::collection::vec(-100.0f64..100.0, 1..60),
    ) {
        let cfg = OptimizerConfig::adam(OptimizerFamily::Adam4p, AdamHparams::with_lr(lr)).unwrap();
        let (b1, b2) = (AdamHparams::DEFAULT_BETA1, AdamHparams::DEFAULT_BETA2);
        let mut state = OptimizerState::new(1);
        let mut params = vec![0.0];
        for (t, &g) in grads.iter().enumerate() {
            let (p, s) = apply_update(&cfg, &state, &params, &[g], ctx(t, 1000)).unwrap();
            // m = Σ w_i g_i, v = Σ u_i g_i², so |m| ≤ sqrt(Σ w_i²/u_i)·sqrt(v)
            let k = (t + 1) as i32;
            let ratio: f64 = (0..k)
                .map(|i| (1.0 - b1).powi(2) * b1.powi(2 * i) / ((1.0 - b2) * b2.powi(i)))
                .sum();
            let bound = lr * ratio.sqrt() * (1.0 - b2.powi(k)).sqrt() / (1.0 - b1.powi(k));
            prop_assert!((p[0] - params[0]).abs() <= bound * (1.0 + 1e-12));
            params = p;
            state = s;
        }
    }

    #[test]
    fn adam8p_with_zero_extras_is_adam4p(
        seed in any::<u64>(),
        grads in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..40),
    ) {
        let base = sample_optimizer(OptimizerFamily::Adam4p, &RngKey::from_seed(seed));
        let optlist::optim::Hparams::Adam(h) = base.hparams().clone() else { unreachable!() };
        let a4 = OptimizerConfig::adam(OptimizerFamily::Adam4p, h.clone()).unwrap();
        let a8 = OptimizerConfig::adam(OptimizerFamily::Adam8p, h).unwrap();
        let (mut s4, mut s8) = (OptimizerState::new(4), OptimizerState::new(4));
        let (mut p4, mut p8) = (vec![1.0; 4], vec![1.0; 4]);
        for (t, g) in grads.iter().enumerate() {
            (p4, s4) = apply_update(&a4, &s4, &p4, g, ctx(t, 100)).unwrap();
            (p8, s8) = apply_update(&a8, &s8, &p8, g, ctx(t, 100)).unwrap();
            prop_assert_eq!(&p4, &p8);
        }
    }

    #[test]
    fn nadamw_rate_stays_in_schedule_bounds(
        lr in 1e-5f64..1.0,
        warmup in 0.0f64..0.1,
        constant in 0.0f64..1.0,
        min_lr_mult in prop::option::of(1e-5f64..1.0),
        total in 10usize..2000,
        frac in 0.0f64..1.0,
    ) {
        let h = NadamwHparams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            use_nesterov: false,
            l2_wd: 0.0,
            l2_adamw: 0.0,
            warmup,
            constant,
            min_lr_mult: min_lr_mult.unwrap_or(0.0),
        };
        let t = ((frac * total as f64) as usize).min(total - 1);
        let rate = nadamw_learning_rate(&h, ctx(t, total));
        prop_assert!(rate <= lr * (1.0 + 1e-15));
        prop_assert!(rate >= 0.0);
        if (t as f64) >= warmup * total as f64 {
            prop_assert!(rate >= h.min_lr_mult.min(lr) * (1.0 - 1e-15));
        }
    }
}

#[test]
fn nesterov_changes_the_update() {
    let mk = |nesterov| {
        OptimizerConfig::nadamw(NadamwHparams {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            use_nesterov: nesterov,
            l2_wd: 0.0,
            l2_adamw: 0.0,
            warmup: 0.0,
            constant: 1.0,
            min_lr_mult: 0.0,
        })
        .unwrap()
    };
    let state = OptimizerState::new(1);
    let (a, _) = apply_update(&mk(false), &state, &[1.0], &[1.0], ctx(0, 10)).unwrap();
    let (b, _) = apply_update(&mk(true), &state, &[1.0], &[1.0], ctx(0, 10)).unwrap();
    // first step: m̂ = g, so both give u = 1/(1+ε)
    assert_eq!(a, b);
    let (a2, _) = apply_update(
        &mk(false),
        &OptimizerState {
            m: vec![0.5],
            v: vec![0.1],
            t: 1,
        },
        &[1.0],
        &[2.0],
        ctx(1, 10),
    )
    .unwrap();
    let (b2, _) = apply_update(
        &mk(true),
        &OptimizerState {
            m: vec![0.5],
            v: vec![0.1],
            t: 1,
        },
        &[1.0],
        &[2.0],
        ctx(1, 10),
    )
    .unwrap();
    assert_ne!(a2, b2);
}

#[test]
fn decoupled_weight_decay_shrinks_params_without_gradient() {
    let cfg = OptimizerConfig::nadamw(NadamwHparams {
        lr: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
        use_nesterov: false,
        l2_wd: 0.0,
        l2_adamw: 0.5,
        warmup: 0.0,
        constant: 1.0,
        min_lr_mult: 0.0,
    })
    .unwrap();
    let (p, _) = apply_update(&cfg, &OptimizerState::new(1), &[2.0], &[0.0], ctx(0, 10)).unwrap();
    // u = 0, so only the decay term acts: 2 - 0.1·0.5·2
    assert!((p[0] - 1.9).abs() < 1e-15);
}

#[test]
fn shape_mismatch_is_an_error() {
    let cfg = OptimizerConfig::adam(OptimizerFamily::Adam1p, AdamHparams::with_lr(0.1)).unwrap();
    assert!(apply_update(&cfg, &OptimizerState::new(2), &[0.0, 0.0], &[1.0], ctx(0, 10)).is_err());
}
