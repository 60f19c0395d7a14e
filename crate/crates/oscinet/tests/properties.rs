//! Property tests for the model-evaluation algebra and the file formats.

use proptest::prelude::*;

use oscinet::data::greens_function;
use oscinet::io::{checkpoint_from_bytes, checkpoint_to_bytes};
use oscinet::nets::{
    branch_eval, init_parameters, trunk_eval, BranchStack, DeepOnetSpec, MlpSpec, ModelNodes,
    ScaleSet,
};
use oscinet::tensor::{Activation, Tape, Tensor};

fn small_spec_strategy() -> impl Strategy<Value = (DeepOnetSpec, u64)> {
    (
        2usize..6,  // sensors
        1usize..4,  // hidden width seed
        1usize..3,  // s_branch
        1usize..4,  // s_trunk
        1usize..4,  // n_t
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        0u64..1000,
    )
        .prop_map(
            |(m, h, s_b, s_t, n_t, complex_output, final_bias, input_bias, seed)| {
                let mut branch = MlpSpec::new(vec![m, 3 + h, s_t * n_t + 1], Activation::Tanh);
                branch.final_bias = final_bias;
                let mut trunk = MlpSpec::new(vec![1, 2 + h, n_t], Activation::Sin);
                trunk.input_bias = input_bias;
                let spec = DeepOnetSpec {
                    branch,
                    trunk,
                    branch_scales: ScaleSet::new((1..=s_b).map(|i| i as f64).collect()).unwrap(),
                    trunk_scales: ScaleSet::dyadic(s_t).unwrap(),
                    n_t,
                    complex_output,
                };
                (spec, seed)
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_roundtrip_any_small_model((spec, seed) in small_spec_strategy()) {
        let params = init_parameters(&spec, seed).unwrap();
        let bytes = checkpoint_to_bytes(&spec, &params).unwrap();
        let (spec2, params2) = checkpoint_from_bytes(&bytes).unwrap();
        prop_assert_eq!(spec, spec2);
        prop_assert_eq!(params, params2);
    }

    #[test]
    fn greens_symmetric_with_fixed_modulus(
        k in 0.1f64..200.0,
        x in -1.0f64..1.0,
        xp in -1.0f64..1.0,
    ) {
        let a = greens_function(k, x, xp);
        let b = greens_function(k, xp, x);
        prop_assert_eq!(a, b);
        prop_assert!((a.norm() - 1.0 / (2.0 * k)).abs() <= 1e-12 / k);
    }

    #[test]
    fn pairing_is_bilinear(seed in 0u64..500, scale_a in -3.0f64..3.0, scale_b in -3.0f64..3.0) {
        // Output is linear in branch coefficients for a fixed trunk basis:
        // combine(a*c1 + b*c2, T) == a*combine(c1, T) + b*combine(c2, T)
        // up to 1e-12 relative.
        let spec = DeepOnetSpec {
            branch: MlpSpec::new(vec![4, 5, 7], Activation::Tanh),
            trunk: MlpSpec::new(vec![1, 4, 3], Activation::Sin),
            branch_scales: ScaleSet::unit(),
            trunk_scales: ScaleSet::dyadic(2).unwrap(),
            n_t: 3,
            complex_output: false,
        };
        let params = init_parameters(&spec, seed).unwrap();
        let sensors1 = Tensor::new(vec![2, 4], (0..8).map(|i| ((seed + i) as f64).sin()).collect()).unwrap();
        let sensors2 = Tensor::new(vec![2, 4], (0..8).map(|i| ((seed + i) as f64).cos()).collect()).unwrap();
        let x = Tensor::new(vec![5, 1], (0..5).map(|i| -1.0 + 0.5 * i as f64).collect()).unwrap();

        let mut tape = Tape::new();
        let model = ModelNodes::stage(&mut tape, &params, false);
        let s1 = tape.leaf(sensors1);
        let s2 = tape.leaf(sensors2);
        let xq = tape.leaf(x);
        let c1 = branch_eval(&mut tape, &spec, &model, BranchStack::Real, s1).unwrap();
        let c2 = branch_eval(&mut tape, &spec, &model, BranchStack::Real, s2).unwrap();
        let basis = trunk_eval(&mut tape, &spec, &model, xq).unwrap();

        // a*c1 + b*c2 as raw data
        let mixed = Tensor::new(
            vec![2, 7],
            tape.value(c1)
                .data()
                .iter()
                .zip(tape.value(c2).data())
                .map(|(u, v)| scale_a * u + scale_b * v)
                .collect(),
        ).unwrap();
        let mixed_node = tape.leaf(mixed);
        let out_mixed = tape.combine(mixed_node, basis).unwrap();
        let out1 = tape.combine(c1, basis).unwrap();
        let out2 = tape.combine(c2, basis).unwrap();

        for i in 0..tape.value(out_mixed).len() {
            let got = tape.value(out_mixed).data()[i];
            let expect = scale_a * tape.value(out1).data()[i] + scale_b * tape.value(out2).data()[i];
            let tol = 1e-12 * (1.0 + expect.abs());
            prop_assert!((got - expect).abs() <= tol, "{} vs {}", got, expect);
        }
    }

    #[test]
    fn corrupted_checkpoints_never_panic(
        (spec, seed) in small_spec_strategy(),
        cut in 0usize..64,
        flip in 0usize..64,
        byte in 0u8..=255,
    ) {
        let params = init_parameters(&spec, seed).unwrap();
        let mut bytes = checkpoint_to_bytes(&spec, &params).unwrap();
        if !bytes.is_empty() {
            let idx = flip % bytes.len();
            bytes[idx] = byte;
            let keep = bytes.len().saturating_sub(cut);
            let _ = checkpoint_from_bytes(&bytes[..keep]);
        }
    }
}
