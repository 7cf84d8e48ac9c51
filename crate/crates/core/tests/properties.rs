mod common;

use common::*;
use proptest::prelude::*;
use vmcis::estimators::effective_sample_size;
use vmcis::*;

fn kind_strategy() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::LogLinear { complex: false }),
        Just(ModelKind::LogLinear { complex: true }),
        Just(ModelKind::ComplexRbm { n_hidden: 3 }),
        Just(ModelKind::MeanFieldProduct),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_weights_form_a_distribution(kind in kind_strategy(), seed in any::<u64>(), alpha in 0.0f64..2.5) {
        let model = WavefunctionModel::random(kind, 5, 0.8, seed).unwrap();
        let basis = enumerate_basis(5, None).unwrap();
        let batch = sample_exact(&model, alpha, &basis).unwrap();
        let q: f64 = batch.exact_probs().unwrap().iter().sum();
        prop_assert!((q - 1.0).abs() < 1e-12);
        let w = compute_weights(&batch).unwrap();
        prop_assert!(w.w_tilde().iter().all(|&x| x >= 0.0));
        prop_assert!((w.w_tilde().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // in exact mode the normalized weights are the Born probabilities whatever alpha is
        let born = sample_exact(&model, 2.0, &basis).unwrap();
        for (a, b) in w.w_tilde().iter().zip(born.exact_probs().unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mcmc_weights_normalize_and_ess_fraction_is_bounded(kind in kind_strategy(), seed in any::<u64>(), alpha in 0.1f64..2.5) {
        let model = WavefunctionModel::random(kind, 6, 0.8, seed).unwrap();
        let basis = enumerate_basis(6, None).unwrap();
        let configs: Vec<SpinConfig> = (0..40).map(|k| basis.configs()[(k * 7 + seed as usize % 13) % basis.len()]).collect();
        let batch = SampleBatch::from_configs(&model, alpha, configs).unwrap();
        let w = compute_weights(&batch).unwrap();
        prop_assert!((w.w_tilde().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ess = effective_sample_size(&w);
        prop_assert!(ess >= 1.0 / 40.0 - 1e-12 && ess <= 1.0 + 1e-12, "ess {}", ess);
    }

    #[test]
    fn born_batches_have_uniform_weights(kind in kind_strategy(), seed in any::<u64>()) {
        let model = WavefunctionModel::random(kind, 6, 0.8, seed).unwrap();
        let basis = enumerate_basis(6, None).unwrap();
        let configs: Vec<SpinConfig> = basis.configs().iter().step_by(3).copied().collect();
        let n = configs.len() as f64;
        let batch = SampleBatch::from_configs(&model, 2.0, configs).unwrap();
        let w = compute_weights(&batch).unwrap();
        prop_assert!(w.w_tilde().iter().all(|&x| (x - 1.0 / n).abs() < 1e-12));
    }

    #[test]
    fn snis_mean_of_a_constant_is_the_constant(seed in any::<u64>(), alpha in 0.0f64..2.5, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let model = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 2 }, 5, 1.0, seed).unwrap();
        let batch = sample_exact(&model, alpha, &enumerate_basis(5, None).unwrap()).unwrap();
        let w = compute_weights(&batch).unwrap();
        let c = num_complex::Complex64::new(re, im);
        let m = snis_mean(&vec![c; batch.len()], &w).unwrap();
        prop_assert!((m - c).norm() < 1e-10);
    }

    #[test]
    fn local_energy_is_hermitian_in_expectation(kind in kind_strategy(), seed in any::<u64>()) {
        let (_, op) = tfim_chain8();
        let model = WavefunctionModel::random(kind, 8, 0.5, seed).unwrap();
        let batch = sample_exact(&model, 2.0, &enumerate_basis(8, None).unwrap()).unwrap();
        let w = compute_weights(&batch).unwrap();
        let e = snis_mean(&local_values(&op, &model, &batch).unwrap(), &w).unwrap();
        prop_assert!(e.im.abs() < 1e-10);
    }

    #[test]
    fn kl_divergence_is_nonnegative(a in prop::collection::vec(0.01f64..1.0, 6), b in prop::collection::vec(0.01f64..1.0, 6)) {
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let (a, b) = (norm(&a), norm(&b));
        prop_assert!(kl_divergence(&a, &b).unwrap() >= -1e-12);
        prop_assert!(kl_divergence(&a, &a).unwrap().abs() < 1e-12);
    }
}
