use proptest::prelude::*;
use qtape::compile::{cancel_inverses, merge_rotations, Pipeline};
use qtape::gradients::{gradient, DiffMethod};
use qtape::sim::{Device, Executor};

mod common;
use common::CircuitSpec;

const PIPELINES: [&str; 4] = [
    "commute_controlled:left,cancel_inverses,merge_rotations",
    "cnot_to_cz,commute_controlled:right,cancel_inverses,merge_rotations",
    "merge_rotations,single_qubit_fusion,cancel_inverses",
    "single_qubit_fusion,commute_controlled,merge_rotations,cnot_to_cz",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pipelines_preserve_the_state(seed in any::<u64>(), which in 0usize..4) {
        let (tape, inputs) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let out = Pipeline::parse(PIPELINES[which]).unwrap().run(&tape).unwrap();
        let d = common::phase_distance(&common::amplitudes(&tape, &inputs), &common::amplitudes(&out, &inputs));
        prop_assert!(d < 1e-9, "distance {d}");
    }

    #[test]
    fn pipelines_preserve_gradients(seed in any::<u64>(), which in 0usize..4) {
        let (tape, inputs) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let out = Pipeline::parse(PIPELINES[which]).unwrap().run(&tape).unwrap();
        let dev = Device::statevector(tape.num_wires());
        let a = gradient(&dev, &tape, &inputs, DiffMethod::ParamShift).unwrap();
        let b = gradient(&dev, &out, &inputs, DiffMethod::ParamShift).unwrap();
        prop_assert!(common::max_abs_diff(&a.jacobian, &b.jacobian) < 1e-6);
        prop_assert!((a.value[0] - b.value[0]).abs() < 1e-9);
        prop_assert_eq!(dev.execute(&out, &inputs).unwrap().len(), 1);
    }

    #[test]
    fn cancel_and_merge_are_idempotent(seed in any::<u64>()) {
        let (tape, _) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let once = cancel_inverses(&tape).unwrap();
        prop_assert_eq!(cancel_inverses(&once).unwrap(), once);
        let once = merge_rotations(&tape).unwrap();
        prop_assert_eq!(merge_rotations(&once).unwrap(), once);
    }

    #[test]
    fn passes_never_grow_the_parameter_count(seed in any::<u64>()) {
        let (tape, _) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let before = qtape::ir::collect_trainable_params(&tape).len();
        let out = Pipeline::default_pipeline().run(&tape).unwrap();
        prop_assert!(qtape::ir::collect_trainable_params(&out).len() <= before);
        prop_assert!(out.operations().len() <= tape.operations().len());
    }
}
