use proptest::prelude::*;
use qtape::compile::{pass_by_name, Pipeline};
use qtape::ir::Measurement;
use qtape::sim::{Device, Executor};
use qtape::transform::{compose, hamiltonian_expand, SingleTransform};

mod common;
use common::CircuitSpec;

const PASSES: [&str; 6] = [
    "cnot_to_cz",
    "merge_rotations",
    "cancel_inverses",
    "commute_controlled:left",
    "commute_controlled:right",
    "single_qubit_fusion",
];

fn pass(i: usize) -> SingleTransform {
    Pipeline::parse(PASSES[i % PASSES.len()]).unwrap().passes()[0].clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn compose_is_associative(seed in any::<u64>(), a in 0usize..6, b in 0usize..6, c in 0usize..6) {
        let (tape, _) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let (ta, tb, tc) = (pass(a), pass(b), pass(c));
        let left = compose(&compose(&ta, &tb), &tc);
        let right = compose(&ta, &compose(&tb, &tc));
        prop_assert_eq!(left.hyperparams(), right.hyperparams());
        prop_assert_eq!(left.apply(&tape).unwrap(), right.apply(&tape).unwrap());
        prop_assert_eq!(left.apply(&tape).unwrap(), tc.apply(&tb.apply(&ta.apply(&tape).unwrap()).unwrap()).unwrap());
    }

    #[test]
    fn builtin_passes_keep_inputs_and_measurements(seed in any::<u64>()) {
        let (tape, _) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        for name in PASSES {
            let (name, opt) = match name.split_once(':') {
                Some((n, o)) => (n, Some(o)),
                None => (name, None),
            };
            let out = pass_by_name(name, opt).unwrap().apply(&tape).unwrap();
            prop_assert_eq!(out.num_inputs(), tape.num_inputs());
            prop_assert_eq!(out.num_wires(), tape.num_wires());
            prop_assert_eq!(out.measurements(), tape.measurements());
        }
    }

    #[test]
    fn hamiltonian_expansion_matches_direct_execution(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (tape, inputs) = common::random_circuit(&mut rng, CircuitSpec::default());
        let h = common::random_hamiltonian(&mut rng, tape.num_wires(), 5);
        let tape = tape.with_measurements(vec![Measurement::ExpvalHamiltonian(h)]).unwrap();
        let dev = Device::statevector(tape.num_wires());
        let direct = dev.execute(&tape, &inputs).unwrap();
        let batch = hamiltonian_expand(&tape).unwrap();
        prop_assert!(batch.tapes.len() <= 5);
        let expanded = batch.execute(&dev, &inputs).unwrap();
        prop_assert!((direct[0] - expanded[0]).abs() < 1e-10);
    }
}
