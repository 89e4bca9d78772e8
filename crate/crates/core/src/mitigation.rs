//! Noise insertion, unitary folding, zero-noise extrapolation and noise
//! learning.

use crate::expr::Expr;
use crate::gradients::gd_step;
use crate::ir::{op_adjoint, GateKind, IrError, Operation, Tape};
use crate::sim::{Device, Executor, SimError};
use crate::transform::{BatchResult, BatchTransform};
use crate::{Error, Result};

/// Where [`insert_noise`] places channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertPosition {
    /// After every gate, on each of the gate's wires.
    AfterEachGate,
    /// After every single-wire gate.
    AfterSingleQubitGates,
    /// Once per wire after the last operation.
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertPolicy {
    pub channel: GateKind,
    pub param: f64,
    pub position: InsertPosition,
}

fn check_probability(kind: GateKind, value: f64) -> Result<(), IrError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(IrError::ChannelDomain { kind, value })
    }
}

impl InsertPolicy {
    pub fn new(channel: GateKind, param: f64, position: InsertPosition) -> Result<Self> {
        if !channel.is_channel() {
            return Err(Error::InvalidRequest(format!("{channel} is not a channel")));
        }
        check_probability(channel, param)?;
        Ok(InsertPolicy { channel, param, position })
    }
}

fn insert_noise_ir(tape: &Tape, policy: &InsertPolicy, per_wire: Option<&[f64]>) -> Result<Tape, IrError> {
    if !policy.channel.is_channel() {
        return Err(IrError::InvalidRequest(format!("{} is not a channel", policy.channel)));
    }
    check_probability(policy.channel, policy.param)?;
    if let Some(ps) = per_wire {
        if ps.len() != tape.num_wires() {
            return Err(IrError::InvalidRequest(format!(
                "{} per-wire parameter(s) for a {}-wire tape",
                ps.len(),
                tape.num_wires()
            )));
        }
        for &p in ps {
            check_probability(policy.channel, p)?;
        }
    }
    let channel = |wire: usize| {
        let p = per_wire.map_or(policy.param, |ps| ps[wire]);
        Operation::new(policy.channel, vec![wire], vec![Expr::constant(p)])
    };
    let mut ops = Vec::new();
    for op in tape.operations() {
        ops.push(op.clone());
        if op.kind.is_channel() {
            continue;
        }
        match policy.position {
            InsertPosition::AfterEachGate => {
                for &w in &op.wires {
                    ops.push(channel(w)?);
                }
            }
            InsertPosition::AfterSingleQubitGates if op.wires.len() == 1 => ops.push(channel(op.wires[0])?),
            _ => {}
        }
    }
    if policy.position == InsertPosition::End {
        for w in 0..tape.num_wires() {
            ops.push(channel(w)?);
        }
    }
    tape.with_operations(ops)
}

/// Appends `policy.channel` at the positions it names. `per_wire`, when
/// given, overrides the policy parameter wire by wire.
pub fn insert_noise(tape: &Tape, policy: &InsertPolicy, per_wire: Option<&[f64]>) -> Result<Tape> {
    Ok(insert_noise_ir(tape, policy, per_wire)?)
}

/// Runs every tape through [`insert_noise`] before handing it to `inner`.
#[derive(Debug)]
pub struct NoisyExecutor<E> {
    inner: E,
    policy: InsertPolicy,
    per_wire: Option<Vec<f64>>,
}

impl<E: Executor> NoisyExecutor<E> {
    pub fn new(inner: E, policy: InsertPolicy, per_wire: Option<Vec<f64>>) -> Self {
        NoisyExecutor { inner, policy, per_wire }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Executor> Executor for NoisyExecutor<E> {
    fn execute_rows(&self, tape: &Tape, inputs: &[f64]) -> Result<Vec<Vec<f64>>, SimError> {
        let noisy = insert_noise_ir(tape, &self.policy, self.per_wire.as_deref())?;
        self.inner.execute_rows(&noisy, inputs)
    }

    fn executions(&self) -> usize {
        self.inner.executions()
    }
}

/// `round((λ - 1) / 2)` with halves rounded away from zero.
pub fn fold_count(scale_factor: f64) -> Result<usize> {
    if !(scale_factor >= 1.0) || !scale_factor.is_finite() {
        return Err(Error::Domain(format!("scale factor must be a finite value >= 1, got {scale_factor}")));
    }
    Ok(((scale_factor - 1.0) / 2.0).round() as usize)
}

/// `U` followed by `n_f` repetitions of `U† U`.
pub fn unitary_folding(tape: &Tape, scale_factor: f64) -> Result<Tape> {
    if tape.has_channels() {
        return Err(Error::InvalidRequest("cannot fold a tape that contains channels".into()));
    }
    let folds = fold_count(scale_factor)?;
    let forward = tape.operations();
    let inverse = forward.iter().rev().map(op_adjoint).collect::<Result<Vec<_>, _>>()?;
    let mut ops = forward.to_vec();
    for _ in 0..folds {
        ops.extend_from_slice(&inverse);
        ops.extend_from_slice(forward);
    }
    Ok(tape.with_operations(ops)?)
}

/// Least-squares intercept as an expression over `Input(i) = energies[i]`.
pub fn fit_zne_expr(scale_factors: &[f64]) -> Result<Expr> {
    fit_zne_strided(scale_factors, 1, 0)
}

/// Intercept over `Input(k * stride + offset)`, the energy at scale `k`.
fn fit_zne_strided(scale_factors: &[f64], stride: usize, offset: usize) -> Result<Expr> {
    let n = scale_factors.len();
    if n < 2 {
        return Err(Error::Domain("extrapolation needs at least two scale factors".into()));
    }
    let nf = n as f64;
    let sum_s: f64 = scale_factors.iter().sum();
    let sum_s2: f64 = scale_factors.iter().map(|s| s * s).sum();
    let denominator = nf * sum_s2 - sum_s * sum_s;
    if denominator.abs() <= 1e-12 * nf * sum_s2.max(1.0) {
        return Err(Error::Domain("scale factors are all equal; the fit is degenerate".into()));
    }
    let energies: Vec<Expr> = (0..n).map(|k| Expr::input(k * stride + offset)).collect();
    let sum_e = energies.iter().cloned().reduce(|a, b| a + b).expect("n >= 2");
    let sum_se = energies
        .iter()
        .zip(scale_factors)
        .map(|(e, &s)| e * s)
        .reduce(|a, b| a + b)
        .expect("n >= 2");
    let slope = (sum_se * nf - &sum_e * sum_s) / denominator;
    Ok((sum_e - slope * sum_s) / nf)
}

/// Intercept of the ordinary least-squares line through `(scale, energy)`.
pub fn fit_zne(scale_factors: &[f64], energies: &[f64]) -> Result<f64> {
    if scale_factors.len() != energies.len() {
        return Err(Error::InvalidRequest(format!(
            "{} scale factor(s) but {} energies",
            scale_factors.len(),
            energies.len()
        )));
    }
    Ok(fit_zne_expr(scale_factors)?.evaluate(energies)?)
}

/// One folded tape per scale factor, extrapolated to zero noise. Each output
/// of the tape is extrapolated independently.
pub fn zne<F>(tape: &Tape, fold: F, scale_factors: &[f64]) -> Result<BatchResult>
where
    F: Fn(&Tape, f64) -> Result<Tape>,
{
    for &s in scale_factors {
        fold_count(s)?;
    }
    let m = tape.result_len();
    let outputs = (0..m)
        .map(|r| fit_zne_strided(scale_factors, m, r))
        .collect::<Result<Vec<_>>>()?;
    let tapes = scale_factors.iter().map(|&s| fold(tape, s)).collect::<Result<Vec<_>>>()?;
    Ok(BatchResult::new(tapes, move |_| Ok(outputs.clone())))
}

/// [`zne`] with unitary folding as a batch transform whose hyperparameters
/// are the scale factors. Fold counts are piecewise constant in the scale
/// factors, so these hyperparameters are configuration rather than
/// differentiable quantities.
pub fn zne_transform(scale_factors: Vec<f64>) -> BatchTransform {
    BatchTransform::new("zne", scale_factors, |tape, scales| zne(tape, unitary_folding, scales))
}

/// Observed values for the current iteration of [`learn_noise`].
pub type Provider<'a> = dyn FnMut() -> Result<Vec<f64>> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLearning {
    /// Channel-free circuit whose measurements are compared.
    pub template: Tape,
    /// Circuit inputs the template is evaluated at.
    pub inputs: Vec<f64>,
    pub channel: GateKind,
    pub position: InsertPosition,
    pub init: Vec<f64>,
    pub iters: usize,
    pub stepsize: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedNoise {
    pub params: Vec<f64>,
    /// Cost of the final parameters against one more provider call.
    pub cost: f64,
    /// Parameters before each update, then the final parameters.
    pub trace: Vec<Vec<f64>>,
}

const LEARN_FD_STEP: f64 = 1e-4;

impl NoiseLearning {
    fn model(&self, params: &[f64]) -> Result<Vec<f64>> {
        let policy = InsertPolicy::new(self.channel, 0.0, self.position)?;
        let noisy = insert_noise(&self.template, &policy, Some(params))?;
        Ok(Device::density_matrix(self.template.num_wires()).execute(&noisy, &self.inputs)?)
    }

    /// `sum_i (model(params)_i - observed_i)^2`.
    pub fn cost(&self, params: &[f64], observed: &[f64]) -> Result<f64> {
        let model = self.model(params)?;
        if model.len() != observed.len() {
            return Err(Error::InvalidRequest(format!(
                "provider returned {} value(s), the template measures {}",
                observed.len(),
                model.len()
            )));
        }
        Ok(model.iter().zip(observed).map(|(m, o)| (m - o).powi(2)).sum())
    }

    /// Central differences with step `1e-4`, one-sided within a step of the
    /// `[0, 1]` boundary.
    pub fn cost_gradient(&self, params: &[f64], observed: &[f64]) -> Result<Vec<f64>> {
        let mut point = params.to_vec();
        let mut grad = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let v = params[i];
            let lo = (v - LEARN_FD_STEP).max(0.0);
            let hi = (v + LEARN_FD_STEP).min(1.0);
            point[i] = hi;
            let up = self.cost(&point, observed)?;
            point[i] = lo;
            let down = self.cost(&point, observed)?;
            point[i] = v;
            grad.push((up - down) / (hi - lo));
        }
        Ok(grad)
    }

    /// Gradient descent on the per-wire channel parameters, clipped to
    /// `[0, 1]` after every step. `provider` is called once per iteration.
    pub fn run(&self, provider: &mut Provider<'_>) -> Result<LearnedNoise> {
        if self.template.has_channels() {
            return Err(Error::InvalidRequest("the template must be channel-free".into()));
        }
        if self.init.len() != self.template.num_wires() {
            return Err(Error::InvalidRequest(format!(
                "{} initial parameter(s) for a {}-wire template",
                self.init.len(),
                self.template.num_wires()
            )));
        }
        if let Some(&bad) = self.init.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("initial parameter {bad} is outside [0, 1]")));
        }
        let bounds = vec![(0.0, 1.0); self.init.len()];
        let mut params = self.init.clone();
        let mut trace = Vec::with_capacity(self.iters + 1);
        for _ in 0..self.iters {
            trace.push(params.clone());
            let observed = provider()?;
            let grad = self.cost_gradient(&params, &observed)?;
            params = gd_step(&params, &grad, self.stepsize, Some(&bounds))?;
        }
        trace.push(params.clone());
        let cost = self.cost(&params, &provider()?)?;
        Ok(LearnedNoise { params, cost, trace })
    }
}

/// Learns per-wire channel parameters from observations of `template` at
/// `inputs`, with channels after every single-qubit gate.
pub fn learn_noise(
    template: &Tape,
    inputs: &[f64],
    provider: &mut Provider<'_>,
    init: &[f64],
    iters: usize,
    stepsize: f64,
) -> Result<LearnedNoise> {
    NoiseLearning {
        template: template.clone(),
        inputs: inputs.to_vec(),
        channel: GateKind::DepolarizingChannel,
        position: InsertPosition::AfterSingleQubitGates,
        init: init.to_vec(),
        iters,
        stepsize,
    }
    .run(provider)
}

/// A provider backed by a noisy executor: each call executes the template.
pub fn executor_provider<'a, E: Executor>(
    exec: &'a E,
    template: &'a Tape,
    inputs: &'a [f64],
) -> impl FnMut() -> Result<Vec<f64>> + 'a {
    move || Ok(exec.execute(template, inputs)?)
}
