//! Execution backends.
//!
//! States are dense. A pure state on `n` wires is a vector of `2^n`
//! amplitudes; a mixed state is a `2^n x 2^n` density matrix stored row-major,
//! which the kernels treat as a `2n`-qubit vector (ket wires first, bra wires
//! second) so one local-matrix kernel serves both backends. Wire 0 is the most
//! significant bit of a basis index.
//!
//! Shot sampling draws from a ChaCha8 stream seeded per execution with
//! `splitmix64(seed ^ splitmix64(execution_index))`, so results depend only on
//! the device seed and how many tapes the device has already run.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::ExprError;
use crate::ir::{kraus_operators, CMatrix, IrError, Measurement, Pauli, PauliWord, Tape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{gate} is a channel; the statevector backend only runs unitary tapes")]
    ChannelOnPureBackend { gate: crate::GateKind },
    #[error("tape uses {tape} wire(s) but the device has {device}")]
    WidthMismatch { tape: usize, device: usize },
    #[error("tape expects {expected} input(s), got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("parameter evaluation failed: {0}")]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("device uses shot batches; call execute_rows")]
    BatchedShots,
    #[error("invalid shot configuration: {0}")]
    InvalidShots(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Statevector,
    DensityMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shots {
    Exact,
    Shots(usize),
    /// `(shots_per_batch, num_batches)` pairs; one result row per batch.
    ShotBatches(Vec<(usize, usize)>),
}

/// Anything that turns a tape plus inputs into result rows.
///
/// Exact and fixed-shot execution yield one row; shot batches yield one row
/// per batch.
pub trait Executor {
    fn execute_rows(&self, tape: &Tape, inputs: &[f64]) -> Result<Vec<Vec<f64>>, SimError>;

    /// Number of tapes executed so far.
    fn executions(&self) -> usize;

    fn execute(&self, tape: &Tape, inputs: &[f64]) -> Result<Vec<f64>, SimError> {
        let mut rows = self.execute_rows(tape, inputs)?;
        if rows.len() != 1 {
            return Err(SimError::BatchedShots);
        }
        Ok(rows.pop().unwrap_or_default())
    }

    fn execute_batch(&self, tapes: &[Tape], inputs: &[f64]) -> Result<Vec<Vec<f64>>, SimError> {
        tapes.iter().map(|t| self.execute(t, inputs)).collect()
    }
}

impl<E: Executor + ?Sized> Executor for &E {
    fn execute_rows(&self, tape: &Tape, inputs: &[f64]) -> Result<Vec<Vec<f64>>, SimError> {
        (**self).execute_rows(tape, inputs)
    }

    fn executions(&self) -> usize {
        (**self).executions()
    }
}

/// A simulator with an execution counter.
#[derive(Debug)]
pub struct Device {
    backend: Backend,
    num_wires: usize,
    shots: Shots,
    seed: u64,
    executions: AtomicUsize,
}

impl Device {
    pub fn new(backend: Backend, num_wires: usize) -> Self {
        Device { backend, num_wires, shots: Shots::Exact, seed: rand::random(), executions: AtomicUsize::new(0) }
    }

    pub fn statevector(num_wires: usize) -> Self {
        Self::new(Backend::Statevector, num_wires)
    }

    pub fn density_matrix(num_wires: usize) -> Self {
        Self::new(Backend::DensityMatrix, num_wires)
    }

    pub fn with_shots(mut self, shots: Shots) -> Self {
        self.shots = shots;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn num_wires(&self) -> usize {
        self.num_wires
    }

    pub fn shots(&self) -> &Shots {
        &self.shots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(index as u64)))
    }
}

impl Executor for Device {
    fn execute_rows(&self, tape: &Tape, inputs: &[f64]) -> Result<Vec<Vec<f64>>, SimError> {
        if tape.num_wires() > self.num_wires {
            return Err(SimError::WidthMismatch { tape: tape.num_wires(), device: self.num_wires });
        }
        let state = simulate(self.backend, tape, inputs)?;
        let index = self.executions.fetch_add(1, Ordering::SeqCst);
        match &self.shots {
            Shots::Exact => Ok(vec![exact_results(&state, tape)]),
            Shots::Shots(n) => {
                if *n == 0 {
                    return Err(SimError::InvalidShots("zero shots".into()));
                }
                let mut rng = self.stream(index);
                Ok(vec![sampled_results(&state, tape, *n, &mut rng)])
            }
            Shots::ShotBatches(batches) => {
                if batches.is_empty() || batches.iter().any(|&(s, b)| s == 0 || b == 0) {
                    return Err(SimError::InvalidShots(format!("{batches:?}")));
                }
                let mut rng = self.stream(index);
                let mut rows = Vec::new();
                for &(shots, count) in batches {
                    for _ in 0..count {
                        rows.push(sampled_results(&state, tape, shots, &mut rng));
                    }
                }
                Ok(rows)
            }
        }
    }

    fn executions(&self) -> usize {
        self.executions.load(Ordering::SeqCst)
    }

    fn execute_batch(&self, tapes: &[Tape], inputs: &[f64]) -> Result<Vec<Vec<f64>>, SimError> {
        tapes.iter().map(|t| self.execute(t, inputs)).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A pure or mixed simulator state.
#[derive(Debug, Clone, PartialEq)]
pub enum SimState {
    Pure { num_wires: usize, amplitudes: Vec<Complex64> },
    Mixed { num_wires: usize, rho: Vec<Complex64> },
}

impl SimState {
    pub fn zero(backend: Backend, num_wires: usize) -> Self {
        let dim = 1usize << num_wires;
        match backend {
            Backend::Statevector => {
                let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
                amplitudes[0] = Complex64::new(1.0, 0.0);
                SimState::Pure { num_wires, amplitudes }
            }
            Backend::DensityMatrix => {
                let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
                rho[0] = Complex64::new(1.0, 0.0);
                SimState::Mixed { num_wires, rho }
            }
        }
    }

    pub fn num_wires(&self) -> usize {
        match self {
            SimState::Pure { num_wires, .. } | SimState::Mixed { num_wires, .. } => *num_wires,
        }
    }

    pub fn apply_unitary(&mut self, wires: &[usize], m: &CMatrix) {
        match self {
            SimState::Pure { num_wires, amplitudes } => apply_local(amplitudes, *num_wires, wires, m),
            SimState::Mixed { num_wires, rho } => {
                let n = *num_wires;
                apply_local(rho, 2 * n, wires, m);
                let bra: Vec<usize> = wires.iter().map(|w| w + n).collect();
                apply_local(rho, 2 * n, &bra, &m.map(|z| z.conj()));
            }
        }
    }

    /// Applies `rho -> sum_k K rho K^dagger` on a single wire.
    pub fn apply_kraus(&mut self, wire: usize, kraus: &[CMatrix]) -> Result<(), SimError> {
        let SimState::Mixed { num_wires, rho } = self else {
            return Err(SimError::Ir(IrError::InvalidRequest("channels need a density matrix".into())));
        };
        let n = *num_wires;
        let mut total = vec![Complex64::new(0.0, 0.0); rho.len()];
        for k in kraus {
            let mut term = rho.clone();
            apply_local(&mut term, 2 * n, &[wire], k);
            apply_local(&mut term, 2 * n, &[wire + n], &k.map(|z| z.conj()));
            total.iter_mut().zip(&term).for_each(|(t, v)| *t += v);
        }
        *rho = total;
        Ok(())
    }

    /// `<P>` for a Pauli word; always in `[-1, 1]`.
    pub fn expval_pauli(&self, word: &PauliWord) -> f64 {
        let n = self.num_wires();
        let mut flip = 0usize;
        let factors: Vec<(usize, Pauli)> = word
            .factors()
            .map(|(w, p)| {
                let mask = 1usize << (n - 1 - w);
                if p != Pauli::Z {
                    flip |= mask;
                }
                (mask, p)
            })
            .collect();
        // P|i> = phase(i) |i ^ flip>
        let phase = |i: usize| {
            let mut ph = Complex64::new(1.0, 0.0);
            for &(mask, p) in &factors {
                let bit = i & mask != 0;
                ph *= match (p, bit) {
                    (Pauli::X, _) => Complex64::new(1.0, 0.0),
                    (Pauli::Y, false) => Complex64::new(0.0, 1.0),
                    (Pauli::Y, true) => Complex64::new(0.0, -1.0),
                    (Pauli::Z, false) => Complex64::new(1.0, 0.0),
                    (Pauli::Z, true) => Complex64::new(-1.0, 0.0),
                };
            }
            ph
        };
        let value: Complex64 = match self {
            SimState::Pure { amplitudes, .. } => amplitudes
                .iter()
                .enumerate()
                .map(|(i, a)| amplitudes[i ^ flip].conj() * phase(i) * a)
                .sum(),
            SimState::Mixed { rho, .. } => {
                let dim = 1usize << n;
                (0..dim).map(|i| phase(i) * rho[i * dim + (i ^ flip)]).sum()
            }
        };
        value.re.clamp(-1.0, 1.0)
    }

    fn basis_probabilities(&self) -> Vec<f64> {
        match self {
            SimState::Pure { amplitudes, .. } => amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            SimState::Mixed { num_wires, rho } => {
                let dim = 1usize << num_wires;
                (0..dim).map(|i| rho[i * dim + i].re.max(0.0)).collect()
            }
        }
    }

    /// Marginal distribution over `wires`, first listed wire most significant.
    pub fn probs(&self, wires: &[usize]) -> Vec<f64> {
        let n = self.num_wires();
        let mut out = vec![0.0; 1 << wires.len()];
        for (i, p) in self.basis_probabilities().into_iter().enumerate() {
            let key = wires
                .iter()
                .fold(0usize, |acc, &w| (acc << 1) | ((i >> (n - 1 - w)) & 1));
            out[key] += p;
        }
        out
    }

    /// `n` independent eigenvalue draws (+1 or -1) of a Pauli word.
    pub fn sample_word<R: Rng + ?Sized>(&self, word: &PauliWord, n: usize, rng: &mut R) -> Vec<i8> {
        let p_plus = ((1.0 + self.expval_pauli(word)) / 2.0).clamp(0.0, 1.0);
        (0..n).map(|_| if rng.random::<f64>() < p_plus { 1 } else { -1 }).collect()
    }

    pub fn norm_or_trace(&self) -> f64 {
        self.basis_probabilities().iter().sum()
    }

    /// Largest deviation from Hermiticity; zero for pure states.
    pub fn hermiticity_error(&self) -> f64 {
        match self {
            SimState::Pure { .. } => 0.0,
            SimState::Mixed { num_wires, rho } => {
                let dim = 1usize << num_wires;
                let mut worst: f64 = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        worst = worst.max((rho[i * dim + j] - rho[j * dim + i].conj()).norm());
                    }
                }
                worst
            }
        }
    }
}

/// Applies a `2^k x 2^k` matrix to `qubits` of a `num_qubits` register.
fn apply_local(state: &mut [Complex64], num_qubits: usize, qubits: &[usize], m: &CMatrix) {
    let k = qubits.len();
    let sub = 1usize << k;
    let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (num_qubits - 1 - q)).collect();
    let all: usize = masks.iter().fold(0, |a, m| a | m);
    let entries: Vec<Complex64> = (0..sub).flat_map(|r| (0..sub).map(move |c| (r, c))).map(|rc| m[rc]).collect();
    let offsets: Vec<usize> = (0..sub)
        .map(|s| {
            masks
                .iter()
                .enumerate()
                .filter(|(j, _)| (s >> (k - 1 - j)) & 1 == 1)
                .fold(0, |acc, (_, m)| acc | m)
        })
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); sub];
    for base in (0..state.len()).filter(|b| b & all == 0) {
        for s in 0..sub {
            buf[s] = state[base | offsets[s]];
        }
        for r in 0..sub {
            let row = &entries[r * sub..(r + 1) * sub];
            state[base | offsets[r]] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
        }
    }
}

/// Runs the operations of `tape` from `|0...0>` without counting an execution.
pub fn simulate(backend: Backend, tape: &Tape, inputs: &[f64]) -> Result<SimState, SimError> {
    if inputs.len() != tape.num_inputs() {
        return Err(SimError::InputLength { expected: tape.num_inputs(), got: inputs.len() });
    }
    if backend == Backend::Statevector {
        if let Some(op) = tape.operations().iter().find(|op| op.kind.is_channel()) {
            return Err(SimError::ChannelOnPureBackend { gate: op.kind });
        }
    }
    let mut state = SimState::zero(backend, tape.num_wires());
    for op in tape.operations() {
        let values = op.param_values(inputs)?;
        if op.kind.is_channel() {
            let kraus = kraus_operators(op.kind, &values)?;
            state.apply_kraus(op.wires[0], &kraus)?;
        } else {
            let m = crate::ir::gate_matrix(op.kind, &values, op.adjoint)?;
            state.apply_unitary(&op.wires, &m);
        }
    }
    Ok(state)
}

fn exact_results(state: &SimState, tape: &Tape) -> Vec<f64> {
    let mut row = Vec::with_capacity(tape.result_len());
    for m in tape.measurements() {
        match m {
            Measurement::Expval(word) => row.push(state.expval_pauli(word)),
            Measurement::ExpvalHamiltonian(h) => {
                row.push(h.terms().iter().map(|(c, w)| c * state.expval_pauli(w)).sum())
            }
            Measurement::Probs(wires) => row.extend(state.probs(wires)),
        }
    }
    row
}

fn sample_mean<R: Rng + ?Sized>(state: &SimState, word: &PauliWord, shots: usize, rng: &mut R) -> f64 {
    let total: i64 = state.sample_word(word, shots, rng).into_iter().map(i64::from).sum();
    total as f64 / shots as f64
}

fn sampled_results<R: Rng + ?Sized>(state: &SimState, tape: &Tape, shots: usize, rng: &mut R) -> Vec<f64> {
    let mut row = Vec::with_capacity(tape.result_len());
    for m in tape.measurements() {
        match m {
            Measurement::Expval(word) => row.push(sample_mean(state, word, shots, rng)),
            Measurement::ExpvalHamiltonian(h) => {
                row.push(h.terms().iter().map(|(c, w)| c * sample_mean(state, w, shots, rng)).sum())
            }
            Measurement::Probs(wires) => {
                let probs = state.probs(wires);
                let mut cdf = Vec::with_capacity(probs.len());
                let mut acc = 0.0;
                for p in &probs {
                    acc += p;
                    cdf.push(acc);
                }
                let mut counts = vec![0usize; probs.len()];
                for _ in 0..shots {
                    let u = rng.random::<f64>() * acc;
                    let k = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
                    counts[k] += 1;
                }
                row.extend(counts.into_iter().map(|c| c as f64 / shots as f64));
            }
        }
    }
    row
}
