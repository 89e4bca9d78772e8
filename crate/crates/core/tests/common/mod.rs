//! Random circuits and helpers shared by the integration suites.
#![allow(dead_code)]

use num_complex::Complex64;
use qtape::expr::Expr;
use qtape::ir::{GateKind, Hamiltonian, Measurement, Operation, Pauli, PauliWord, Tape};
use qtape::sim::{simulate, Backend, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct CircuitSpec {
    pub max_wires: usize,
    pub max_ops: usize,
    pub max_inputs: usize,
    /// Allow gates outside {RX, RY, RZ, Rot, CNOT, CZ}.
    pub fixed_gates: bool,
    /// Allow parameters that combine several inputs.
    pub composite_params: bool,
}

impl Default for CircuitSpec {
    fn default() -> Self {
        CircuitSpec { max_wires: 4, max_ops: 12, max_inputs: 6, fixed_gates: true, composite_params: true }
    }
}

fn random_param(rng: &mut ChaCha8Rng, num_inputs: usize, composite: bool) -> Expr {
    let input = |rng: &mut ChaCha8Rng| Expr::input(rng.random_range(0..num_inputs));
    match rng.random_range(0..if composite { 5 } else { 3 }) {
        0 => Expr::constant(rng.random_range(-3.0..3.0)),
        1 | 2 => input(rng),
        3 => input(rng) + input(rng),
        _ => input(rng) * rng.random_range(-2.0..2.0) + rng.random_range(-1.0..1.0),
    }
}

fn random_word(rng: &mut ChaCha8Rng, num_wires: usize) -> PauliWord {
    loop {
        let factors: Vec<(usize, Pauli)> = (0..num_wires)
            .filter_map(|w| match rng.random_range(0..5) {
                0 => Some((w, Pauli::X)),
                1 => Some((w, Pauli::Y)),
                2 | 3 => Some((w, Pauli::Z)),
                _ => None,
            })
            .collect();
        if !factors.is_empty() {
            return PauliWord::new(factors).unwrap();
        }
    }
}

/// A random channel-free circuit, its inputs and one Pauli expectation.
pub fn random_circuit(rng: &mut ChaCha8Rng, spec: CircuitSpec) -> (Tape, Vec<f64>) {
    let num_wires = rng.random_range(1..=spec.max_wires);
    let num_inputs = rng.random_range(1..=spec.max_inputs);
    let num_ops = rng.random_range(0..=spec.max_ops);
    let mut kinds = vec![GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::Rot];
    if num_wires > 1 {
        kinds.extend([GateKind::CNOT, GateKind::CZ]);
    }
    if spec.fixed_gates {
        kinds.extend([GateKind::H, GateKind::X, GateKind::Y, GateKind::Z, GateKind::S, GateKind::T]);
    }
    let mut ops = Vec::with_capacity(num_ops);
    for _ in 0..num_ops {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let wires = if kind.num_wires() == 2 {
            let a = rng.random_range(0..num_wires);
            let b = (a + rng.random_range(1..num_wires)) % num_wires;
            vec![a, b]
        } else {
            vec![rng.random_range(0..num_wires)]
        };
        let params = (0..kind.num_params()).map(|_| random_param(rng, num_inputs, spec.composite_params)).collect();
        let adjoint = matches!(kind, GateKind::S | GateKind::T) && rng.random_bool(0.5);
        ops.push(Operation::with_adjoint(kind, wires, params, adjoint).unwrap());
    }
    let inputs = (0..num_inputs).map(|_| rng.random_range(-3.0..3.0)).collect();
    let word = random_word(rng, num_wires);
    (Tape::new(num_wires, num_inputs, ops, vec![Measurement::Expval(word)]).unwrap(), inputs)
}

pub fn random_hamiltonian(rng: &mut ChaCha8Rng, num_wires: usize, max_terms: usize) -> Hamiltonian {
    let n = rng.random_range(1..=max_terms);
    Hamiltonian::new((0..n).map(|_| (rng.random_range(-2.0..2.0), random_word(rng, num_wires))).collect()).unwrap()
}

pub fn amplitudes(tape: &Tape, inputs: &[f64]) -> Vec<Complex64> {
    match simulate(Backend::Statevector, tape, inputs).unwrap() {
        SimState::Pure { amplitudes, .. } => amplitudes,
        SimState::Mixed { .. } => unreachable!("statevector backend"),
    }
}

/// Largest amplitude deviation after aligning the global phase.
pub fn phase_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let k = (0..a.len()).max_by(|&i, &j| a[i].norm().total_cmp(&a[j].norm())).unwrap();
    let phase = if b[k].norm() > 0.0 { a[k] / b[k] } else { Complex64::new(1.0, 0.0) };
    let phase = phase / phase.norm();
    a.iter().zip(b).map(|(x, y)| (x - phase * y).norm()).fold(0.0, f64::max)
}

/// Central differences of every output of `f` with step `h`.
pub fn central_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let m = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        for r in 0..m {
            jac[r][i] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    jac
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
