use proptest::prelude::*;
use qtape::expr::Expr;
use qtape::ir::{gate_matrix, kraus_operators, op_adjoint, CMatrix, GateKind, Operation};
use qtape::sim::{simulate, Backend, Device, Executor, Shots};

mod common;
use common::CircuitSpec;

fn max_dev(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn params_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-7.0f64..7.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gates_are_unitary(ps in params_strategy(), adjoint in any::<bool>()) {
        for kind in GateKind::ALL.iter().copied().filter(|k| !k.is_channel()) {
            let u = gate_matrix(kind, &ps[..kind.num_params()], adjoint).unwrap();
            let dim = u.nrows();
            prop_assert!(max_dev(&(u.adjoint() * &u), &CMatrix::identity(dim, dim)) < 1e-12, "{kind}");
        }
    }

    #[test]
    fn kraus_sets_are_complete(p in 0.0f64..=1.0) {
        for kind in [GateKind::DepolarizingChannel, GateKind::AmplitudeDamping] {
            let sum = kraus_operators(kind, &[p]).unwrap().iter().fold(CMatrix::zeros(2, 2), |acc, k| acc + k.adjoint() * k);
            prop_assert!(max_dev(&sum, &CMatrix::identity(2, 2)) < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_an_involution(ps in params_strategy(), flag in any::<bool>()) {
        for kind in GateKind::ALL.iter().copied().filter(|k| !k.is_channel()) {
            let wires = if kind.num_wires() == 2 { vec![0, 1] } else { vec![0] };
            let params = ps[..kind.num_params()].iter().map(|&v| Expr::constant(v)).collect();
            let adjoint = flag && matches!(kind, GateKind::S | GateKind::T);
            let op = Operation::with_adjoint(kind, wires, params, adjoint).unwrap();
            let twice = op_adjoint(&op_adjoint(&op).unwrap()).unwrap();
            prop_assert!(max_dev(&twice.matrix(&[]).unwrap(), &op.matrix(&[]).unwrap()) < 1e-12);
            let once = op_adjoint(&op).unwrap();
            prop_assert!(max_dev(&once.matrix(&[]).unwrap(), &op.matrix(&[]).unwrap().adjoint()) < 1e-12);
        }
    }

    #[test]
    fn backends_agree_and_preserve_norm(seed in any::<u64>()) {
        let (tape, inputs) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let sv = simulate(Backend::Statevector, &tape, &inputs).unwrap();
        let dm = simulate(Backend::DensityMatrix, &tape, &inputs).unwrap();
        prop_assert!((sv.norm_or_trace() - 1.0).abs() < 1e-10);
        prop_assert!((dm.norm_or_trace() - 1.0).abs() < 1e-10);
        prop_assert!(dm.hermiticity_error() < 1e-10);
        let a = Device::statevector(tape.num_wires()).execute(&tape, &inputs).unwrap();
        let b = Device::density_matrix(tape.num_wires()).execute(&tape, &inputs).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-10);
        prop_assert!((-1.0..=1.0).contains(&a[0]));
    }

    #[test]
    fn seeded_shots_reproduce(seed in any::<u64>(), dev_seed in any::<u64>()) {
        let (tape, inputs) = common::random_circuit(&mut common::rng(seed), CircuitSpec::default());
        let run = || {
            let dev = Device::statevector(tape.num_wires()).with_shots(Shots::Shots(50)).with_seed(dev_seed);
            (0..3).map(|_| dev.execute(&tape, &inputs).unwrap()[0].to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn counter_counts_tapes(k in 0usize..6) {
        let tape = qtape::Tape::builder(1, 0).h(0).expval("Z0".parse().unwrap()).build().unwrap();
        let dev = Device::statevector(1);
        dev.execute_batch(&vec![tape; k], &[]).unwrap();
        prop_assert_eq!(dev.executions(), k);
    }
}

#[test]
fn channels_preserve_trace_after_every_operation() {
    let mut rng = common::rng(99);
    for _ in 0..20 {
        let (tape, inputs) = common::random_circuit(&mut rng, CircuitSpec { max_wires: 3, ..Default::default() });
        let policy = qtape::mitigation::InsertPolicy::new(
            GateKind::AmplitudeDamping,
            0.2,
            qtape::mitigation::InsertPosition::AfterEachGate,
        )
        .unwrap();
        let noisy = qtape::mitigation::insert_noise(&tape, &policy, None).unwrap();
        for end in 0..=noisy.operations().len() {
            let prefix = noisy.with_operations(noisy.operations()[..end].to_vec()).unwrap();
            let state = simulate(Backend::DensityMatrix, &prefix, &inputs).unwrap();
            assert!((state.norm_or_trace() - 1.0).abs() < 1e-10);
            assert!(state.hermiticity_error() < 1e-10);
        }
    }
}
