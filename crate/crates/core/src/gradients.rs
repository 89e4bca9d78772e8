//! Gradient batch transforms and the gradient engine.
//!
//! [`param_shift`] and [`finite_diff`] emit shifted tapes whose post-processing
//! returns the jacobian `d(results)/d(inputs)` flattened row-major. The
//! quantum part differentiates each gate parameter; the classical part chains
//! through that parameter's [`Expr`] with backprop. A gate parameter built from
//! several inputs (for example a merged rotation angle) therefore costs one
//! set of shifted tapes, not one per input.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::expr::Expr;
use crate::ir::{collect_trainable_params, GateKind, Measurement, PauliWord, Tape, TrainableParam};
use crate::sim::{Backend, Device, Executor, Shots};
use crate::transform::BatchResult;
use crate::{Error, Result};

/// How the derivative of a gate parameter is obtained from shifted circuits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftRule {
    /// `df/dθ = c * (f(aθ + s) - f(aθ - s))`.
    TwoTerm { shift: f64, scale: f64, prescale: f64 },
    /// `2r` evaluations at equidistant shifts for a generator with `r`
    /// equidistant positive frequencies.
    Equidistant { r: usize },
    None,
}

impl ShiftRule {
    pub const STANDARD: ShiftRule = ShiftRule::TwoTerm { shift: PI / 2.0, scale: 0.5, prescale: 1.0 };

    /// `(coefficient, prescale, shift)` for every shifted evaluation.
    pub fn terms(&self) -> Vec<(f64, f64, f64)> {
        match *self {
            ShiftRule::TwoTerm { shift, scale, prescale } => {
                vec![(scale, prescale, shift), (-scale, prescale, -shift)]
            }
            ShiftRule::Equidistant { r } => {
                let rf = r as f64;
                (1..=2 * r)
                    .map(|mu| {
                        let k = (2 * mu - 1) as f64;
                        let sign = if mu % 2 == 1 { 1.0 } else { -1.0 };
                        let coef = sign / (4.0 * rf * (k * PI / (4.0 * rf)).sin().powi(2));
                        (coef, 1.0, k * PI / (2.0 * rf))
                    })
                    .collect()
            }
            ShiftRule::None => Vec::new(),
        }
    }
}

/// Per-gate shift rules with overrides on top of the defaults.
#[derive(Debug, Clone, Default)]
pub struct ShiftRules {
    overrides: HashMap<GateKind, ShiftRule>,
}

impl ShiftRules {
    pub fn default_rule(kind: GateKind) -> ShiftRule {
        match kind {
            GateKind::RX | GateKind::RY | GateKind::RZ | GateKind::Rot => ShiftRule::STANDARD,
            _ => ShiftRule::None,
        }
    }

    pub fn with_rule(mut self, kind: GateKind, rule: ShiftRule) -> Self {
        self.overrides.insert(kind, rule);
        self
    }

    pub fn get(&self, kind: GateKind) -> ShiftRule {
        self.overrides.get(&kind).copied().unwrap_or_else(|| Self::default_rule(kind))
    }
}

/// Replaces one gate parameter, keeping the tape over the same inputs.
fn substitute(tape: &Tape, tp: &TrainableParam, expr: Expr) -> Result<Tape> {
    let mut ops = tape.operations().to_vec();
    ops[tp.op_index].params[tp.slot] = expr;
    Ok(tape.with_operations(ops)?)
}

fn shifted_expr(expr: &Expr, prescale: f64, shift: f64) -> Expr {
    if prescale == 1.0 {
        expr + shift
    } else {
        expr * prescale + shift
    }
}

/// Builds `jac[r][i] = sum_k weight_k(i) * row_{tape_k}[r]`, flattened.
///
/// `terms` holds `(tape index, parameter index, coefficient)`, and the weight
/// of a term is its coefficient times `d(param)/d(input i)`.
fn chained_jacobian(
    params: &[TrainableParam],
    terms: &[(usize, usize, f64)],
    m: usize,
    inputs: &[f64],
) -> Result<Vec<Expr>> {
    let n = inputs.len();
    let dparams = params
        .iter()
        .map(|p| p.expr.backprop(inputs, 1.0))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(m * n);
    for r in 0..m {
        for i in 0..n {
            let mut acc: Option<Expr> = None;
            for &(tape, param, coef) in terms {
                let w = coef * dparams[param][i];
                if w == 0.0 {
                    continue;
                }
                let term = Expr::input(tape * m + r) * w;
                acc = Some(match acc {
                    Some(a) => a + term,
                    None => term,
                });
            }
            out.push(acc.unwrap_or_else(|| Expr::constant(0.0)));
        }
    }
    Ok(out)
}

/// Parameter-shift gradient with the default rules.
pub fn param_shift(tape: &Tape) -> Result<BatchResult> {
    param_shift_with(tape, &ShiftRules::default())
}

/// Parameter-shift gradient. The forward tape is not part of the batch; a
/// tape without trainable parameters yields an empty batch whose
/// post-processing returns an all-zero jacobian.
pub fn param_shift_with(tape: &Tape, rules: &ShiftRules) -> Result<BatchResult> {
    let params = collect_trainable_params(tape);
    let mut tapes = Vec::new();
    let mut terms = Vec::new();
    for (j, tp) in params.iter().enumerate() {
        let kind = tape.operations()[tp.op_index].kind;
        let rule = rules.get(kind);
        if rule == ShiftRule::None {
            return Err(Error::UnsupportedRule { gate: kind, op_index: tp.op_index });
        }
        for (coef, prescale, shift) in rule.terms() {
            terms.push((tapes.len(), j, coef));
            tapes.push(substitute(tape, tp, shifted_expr(&tp.expr, prescale, shift))?);
        }
    }
    let m = tape.result_len();
    Ok(BatchResult::new(tapes, move |inputs| chained_jacobian(&params, &terms, m, inputs)))
}

/// Forward differences `(f(θ + h) - f(θ)) / h`. Tape 0 is the unshifted tape.
pub fn finite_diff(tape: &Tape, h: f64) -> Result<BatchResult> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let params = collect_trainable_params(tape);
    let mut tapes = vec![tape.clone()];
    let mut terms = Vec::new();
    for (j, tp) in params.iter().enumerate() {
        terms.push((tapes.len(), j, 1.0 / h));
        terms.push((0, j, -1.0 / h));
        tapes.push(substitute(tape, tp, &tp.expr + h)?);
    }
    let m = tape.result_len();
    Ok(BatchResult::new(tapes, move |inputs| chained_jacobian(&params, &terms, m, inputs)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffMethod {
    ParamShift,
    FiniteDiff(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub value: Vec<f64>,
    /// `jacobian[r][i] = d value[r] / d inputs[i]`.
    pub jacobian: Vec<Vec<f64>>,
    pub executions_used: usize,
}

fn unflatten(flat: Vec<f64>, cols: usize) -> Vec<Vec<f64>> {
    if cols == 0 {
        return Vec::new();
    }
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

/// Value and jacobian of a tape, counting device executions.
pub fn gradient<E: Executor + ?Sized>(exec: &E, tape: &Tape, inputs: &[f64], method: DiffMethod) -> Result<GradientResult> {
    let before = exec.executions();
    let m = tape.result_len();
    let (value, jac_flat) = match method {
        DiffMethod::ParamShift => {
            let batch = param_shift(tape)?;
            let value = exec.execute(tape, inputs)?;
            let rows = exec.execute_batch(&batch.tapes, inputs)?;
            (value, batch.apply(&rows, inputs)?)
        }
        DiffMethod::FiniteDiff(h) => {
            let batch = finite_diff(tape, h)?;
            let rows = exec.execute_batch(&batch.tapes, inputs)?;
            let jac = batch.apply(&rows, inputs)?;
            (rows.into_iter().next().unwrap_or_default(), jac)
        }
    };
    let mut jacobian = unflatten(jac_flat, inputs.len());
    if jacobian.is_empty() {
        jacobian = vec![Vec::new(); m];
    }
    Ok(GradientResult { value, jacobian, executions_used: exec.executions() - before })
}

/// Value and jacobian of a batch transform's output.
///
/// Each tape is differentiated with `method`, and the tape jacobians are
/// chained through the post-processing jacobian. Post-processing that depends
/// on the inputs only through constant weights (Hamiltonian expansion, ZNE,
/// gradients of circuits whose parameters are affine in the inputs) is
/// differentiated exactly.
pub fn batch_gradient<E: Executor + ?Sized>(
    exec: &E,
    batch: &BatchResult,
    inputs: &[f64],
    method: DiffMethod,
) -> Result<GradientResult> {
    let n = inputs.len();
    let mut rows = Vec::with_capacity(batch.tapes.len());
    let mut tape_jacs = Vec::with_capacity(batch.tapes.len());
    let mut executions_used = 0;
    for tape in &batch.tapes {
        let g = gradient(exec, tape, inputs, method)?;
        executions_used += g.executions_used;
        rows.push(g.value);
        tape_jacs.extend(g.jacobian);
    }
    let (value, post_jac) = batch.apply_with_jacobian(&rows, inputs)?;
    let jacobian = post_jac
        .iter()
        .map(|dpost| {
            let mut row = vec![0.0; n];
            for (w, tj) in dpost.iter().zip(&tape_jacs) {
                if *w != 0.0 {
                    row.iter_mut().zip(tj).for_each(|(r, d)| *r += w * d);
                }
            }
            row
        })
        .collect();
    Ok(GradientResult { value, jacobian, executions_used })
}

/// `h* = (2 σ0² / (N f''²))^(1/4)`, the MSE-optimal forward-difference step.
pub fn optimal_step(sigma0: f64, n_shots: usize, f2: f64) -> Result<f64> {
    if f2 == 0.0 || !f2.is_finite() {
        return Err(Error::Domain(format!("second derivative must be nonzero and finite, got {f2}")));
    }
    if !(sigma0 > 0.0) || n_shots == 0 {
        return Err(Error::Domain("sigma0 and the shot count must be positive".into()));
    }
    Ok((2.0 * sigma0 * sigma0 / (n_shots as f64 * f2 * f2)).powf(0.25))
}

/// One gradient-descent update `params - stepsize * grads`, optionally
/// clipped per parameter to `[lo, hi]`.
pub fn gd_step(params: &[f64], grads: &[f64], stepsize: f64, clip: Option<&[(f64, f64)]>) -> Result<Vec<f64>> {
    if params.len() != grads.len() {
        return Err(Error::InvalidRequest(format!(
            "{} parameter(s) but {} gradient component(s)",
            params.len(),
            grads.len()
        )));
    }
    if let Some(bounds) = clip {
        if bounds.len() != params.len() {
            return Err(Error::InvalidRequest(format!(
                "{} parameter(s) but {} clip range(s)",
                params.len(),
                bounds.len()
            )));
        }
    }
    Ok(params
        .iter()
        .zip(grads)
        .enumerate()
        .map(|(i, (p, g))| {
            let v = p - stepsize * g;
            match clip {
                Some(b) => v.clamp(b[i].0, b[i].1),
                None => v,
            }
        })
        .collect())
}

/// How the finite-difference step evolves in [`adaptive_fd_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// `h` is trained by gradient descent on the cost alongside `x`.
    Adaptive,
    /// `h` stays at its initial value.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdExperiment {
    pub seed: u64,
    pub iters: usize,
    pub shots: usize,
    pub x0: f64,
    pub h0: f64,
    pub stepsize: f64,
    pub mode: StepMode,
    /// Lower clip bound for `h`; forward differences need `h > 0`.
    pub h_floor: f64,
}

impl Default for FdExperiment {
    fn default() -> Self {
        FdExperiment {
            seed: 0,
            iters: 300,
            shots: 1000,
            x0: 0.1,
            h0: 1e-7,
            stepsize: 0.05,
            mode: StepMode::Adaptive,
            h_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub h: f64,
    pub x: f64,
    /// Shot estimate of the circuit value at `x`.
    pub cost: f64,
}

/// `H⊗H`, then `SingleExcitation(x)` on wires (0, 1), measuring `X0 X1`.
/// Its exact value is `(1 + cos x) / 2`.
pub fn fd_experiment_circuit() -> Tape {
    Tape::builder(2, 1)
        .h(0)
        .h(1)
        .op(GateKind::SingleExcitation, &[0, 1], vec![Expr::input(0)])
        .measure(Measurement::Expval(PauliWord::new([(0, crate::Pauli::X), (1, crate::Pauli::X)]).expect("valid word")))
        .build()
        .expect("valid circuit")
}

fn derive_seed(seed: u64, iteration: usize, salt: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64 * 4 + salt);
    rng.next_u64()
}

fn shot_device(shots: Shots, seed: u64) -> Device {
    Device::new(Backend::Statevector, 2).with_shots(shots).with_seed(seed)
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Returns `(cost, mean(g1))` with `cost = f(x) + var(g1)/N + h`, where `g1`
/// holds N single-shot forward-difference gradients and `f(x)` is an N-shot
/// estimate. All sampling is driven by `seed`, so calls with the same seed
/// share random numbers.
fn cost_and_grad(tape: &Tape, x: f64, h: f64, shots: usize, seed: u64) -> Result<(f64, f64)> {
    let fd = finite_diff(tape, h)?;
    let batches = shot_device(Shots::ShotBatches(vec![(1, shots)]), seed);
    let base = batches.execute_rows(&fd.tapes[0], &[x])?;
    let shifted = batches.execute_rows(&fd.tapes[1], &[x])?;
    let dfdx = fd.outputs(&[x])?.remove(0);
    let g1: Vec<f64> = base
        .iter()
        .zip(&shifted)
        .map(|(b, s)| dfdx.evaluate(&[b[0], s[0]]))
        .collect::<Result<_, _>>()?;
    let mean = g1.iter().sum::<f64>() / shots as f64;
    let f = shot_device(Shots::Shots(shots), seed ^ 0x5EED).execute(tape, &[x])?[0];
    Ok((f + variance(&g1) / shots as f64 + h, mean))
}

/// Gradient descent on `x` with single-shot finite differences, optionally
/// training the step `h` on the cost `f(x) + var(g1)/N + h`.
///
/// The trace holds `iters + 1` points: the clipped state before each update
/// and after the last one.
pub fn adaptive_fd_experiment(cfg: &FdExperiment) -> Result<Vec<TracePoint>> {
    let tape = fd_experiment_circuit();
    let mut x = cfg.x0;
    let mut h = cfg.h0;
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    let clip_h = |h: f64| h.clamp(cfg.h_floor, 5.0);
    for it in 0..=cfg.iters {
        h = clip_h(h);
        x = x.clamp(0.0, 2.0 * PI);
        let track = shot_device(Shots::Shots(cfg.shots), derive_seed(cfg.seed, it, 0)).execute(&tape, &[x])?[0];
        trace.push(TracePoint { h, x, cost: track });
        if it == cfg.iters {
            break;
        }
        let seed = derive_seed(cfg.seed, it, 1);
        let (_, x_grad) = cost_and_grad(&tape, x, h, cfg.shots, seed)?;
        let h_grad = match cfg.mode {
            StepMode::Adaptive => {
                let dh = (0.05 * h).max(1e-9);
                let up = cost_and_grad(&tape, x, h + dh, cfg.shots, seed)?.0;
                let down = cost_and_grad(&tape, x, (h - dh).max(f64::MIN_POSITIVE), cfg.shots, seed)?.0;
                (up - down) / (2.0 * dh)
            }
            StepMode::Fixed => 0.0,
        };
        let next = gd_step(&[x, h], &[x_grad, h_grad], cfg.stepsize, None)?;
        x = next[0];
        h = next[1];
    }
    Ok(trace)
}

/// Exact value of [`fd_experiment_circuit`] at `x`.
pub fn fd_experiment_exact(x: f64) -> Result<f64> {
    Ok(Device::statevector(2).execute(&fd_experiment_circuit(), &[x])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Device;

    fn z0() -> PauliWord {
        "Z0".parse().unwrap()
    }

    fn rx_tape(param: Expr, inputs: usize) -> Tape {
        Tape::builder(1, inputs).rx(0, param).expval(z0()).build().unwrap()
    }

    #[test]
    fn rx_gradient() {
        let dev = Device::statevector(1);
        let g = gradient(&dev, &rx_tape(Expr::input(0), 1), &[0.3], DiffMethod::ParamShift).unwrap();
        assert!((g.jacobian[0][0] + 0.3f64.sin()).abs() < 1e-12);
        assert!((g.jacobian[0][0] + 0.2955).abs() < 1e-4);
        assert_eq!(g.executions_used, 3);
    }

    #[test]
    fn sqrt_rx_gradient() {
        let dev = Device::statevector(1);
        let g = gradient(&dev, &rx_tape(Expr::input(0).sqrt(), 1), &[0.3], DiffMethod::ParamShift).unwrap();
        let x = 0.3f64;
        let exact = -x.sqrt().sin() / (2.0 * x.sqrt());
        assert!((g.jacobian[0][0] - exact).abs() < 1e-12);
        assert!((g.jacobian[0][0] + 0.4754).abs() < 1e-4);
    }

    #[test]
    fn equidistant_r1_is_two_term() {
        let rule = ShiftRule::Equidistant { r: 1 };
        let t = rule.terms();
        assert_eq!(t.len(), 2);
        assert!((t[0].0 - 0.5).abs() < 1e-15 && (t[0].2 - PI / 2.0).abs() < 1e-15);
        assert!((t[1].0 + 0.5).abs() < 1e-15 && (t[1].2 - 1.5 * PI).abs() < 1e-15);

        let tape = Tape::builder(1, 1).ry(0, Expr::input(0)).rx(0, 0.4).expval(z0()).build().unwrap();
        let dev = Device::statevector(1);
        let two = param_shift(&tape).unwrap().execute(&dev, &[0.7]).unwrap();
        let rules = ShiftRules::default().with_rule(GateKind::RY, rule);
        let eq = param_shift_with(&tape, &rules).unwrap().execute(&dev, &[0.7]).unwrap();
        assert!((two[0] - eq[0]).abs() < 1e-10);
    }

    #[test]
    fn equidistant_r2_on_doubled_frequency() {
        // RX(2x) has frequencies {1, 2}, i.e. two equidistant frequencies in x.
        let tape = rx_tape(Expr::input(0) * 2.0, 1);
        let dev = Device::statevector(1);
        let exact = -2.0 * (2.0 * 0.4f64).sin();
        // Shift the raw gate parameter with R = 1 and chain through the factor 2.
        let g = param_shift(&tape).unwrap().execute(&dev, &[0.4]).unwrap();
        assert!((g[0] - exact).abs() < 1e-12);
        // Treating the composite as a single-parameter function of x with R = 2.
        let coeffs = ShiftRule::Equidistant { r: 2 }.terms();
        let f = |x: f64| (2.0 * x).cos();
        let est: f64 = coeffs.iter().map(|(c, _, s)| c * f(0.4 + s)).sum();
        assert!((est - exact).abs() < 1e-12);
    }

    #[test]
    fn unsupported_rule_names_gate() {
        let err = param_shift(&fd_experiment_circuit()).unwrap_err();
        assert_eq!(err, Error::UnsupportedRule { gate: GateKind::SingleExcitation, op_index: 2 });
        assert!(err.to_string().contains("SingleExcitation"));
    }

    #[test]
    fn finite_diff_rx() {
        let dev = Device::statevector(1);
        let g = gradient(&dev, &rx_tape(Expr::input(0), 1), &[0.3], DiffMethod::FiniteDiff(1e-6)).unwrap();
        assert!((g.jacobian[0][0] + 0.3f64.sin()).abs() < 1e-5);
        assert_eq!(g.executions_used, 2);
        assert!(matches!(finite_diff(&rx_tape(Expr::input(0), 1), 0.0), Err(Error::Domain(_))));
        assert!(matches!(finite_diff(&rx_tape(Expr::input(0), 1), -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_tape() {
        let tape = rx_tape(Expr::constant(0.2), 1);
        let fd = finite_diff(&tape, 1e-3).unwrap();
        assert_eq!(fd.tapes.len(), 1);
        assert!(param_shift(&tape).unwrap().tapes.is_empty());
        let dev = Device::statevector(1);
        let g = gradient(&dev, &tape, &[0.5], DiffMethod::ParamShift).unwrap();
        assert_eq!(g.jacobian, vec![vec![0.0]]);
        assert_eq!(g.executions_used, 1);
    }

    #[test]
    fn shared_parameter_columns_match() {
        let tape = rx_tape(Expr::input(0) + Expr::input(1), 2);
        let g = gradient(&Device::statevector(1), &tape, &[0.2, 0.5], DiffMethod::ParamShift).unwrap();
        assert!((g.jacobian[0][0] - g.jacobian[0][1]).abs() < 1e-12);
        assert_eq!(g.executions_used, 3);
    }

    #[test]
    fn probs_jacobian_shape() {
        let tape = Tape::builder(1, 1)
            .rx(0, Expr::input(0))
            .measure(Measurement::Probs(vec![0]))
            .build()
            .unwrap();
        let g = gradient(&Device::statevector(1), &tape, &[0.3], DiffMethod::ParamShift).unwrap();
        assert_eq!(g.jacobian.len(), 2);
        // p0 = cos²(x/2) so dp0/dx = -sin(x)/2
        assert!((g.jacobian[0][0] + 0.3f64.sin() / 2.0).abs() < 1e-12);
        assert!((g.jacobian[1][0] - 0.3f64.sin() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn second_derivative_by_nesting() {
        let tape = rx_tape(Expr::input(0), 1);
        let dev = Device::statevector(1);
        let hess = batch_gradient(&dev, &param_shift(&tape).unwrap(), &[0.3], DiffMethod::ParamShift).unwrap();
        assert!((hess.value[0] + 0.3f64.sin()).abs() < 1e-12);
        assert!((hess.jacobian[0][0] + 0.3f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn optimal_step_values() {
        let h = optimal_step(1.0, 1000, 1.0).unwrap();
        assert!((h - 0.002f64.powf(0.25)).abs() < 1e-15);
        assert!((h - 0.21147).abs() < 1e-5);
        // Grid oracle: h minimizes h²f''²/4 + σ²/(2N h²). The variant with a
        // 2σ²/(N h²) variance term is minimized at √2 h.
        let grid_min = |mse: &dyn Fn(f64) -> f64| {
            (1..50_000).map(|k| k as f64 * 1e-5).min_by(|a, b| mse(*a).total_cmp(&mse(*b))).unwrap()
        };
        assert!((grid_min(&|h| h * h / 4.0 + 1.0 / (2.0 * 1000.0 * h * h)) - h).abs() < 2e-5);
        assert!((grid_min(&|h| h * h / 4.0 + 2.0 / (1000.0 * h * h)) - 2f64.sqrt() * h).abs() < 2e-5);
        assert!((optimal_step(1.0, 16_000, 1.0).unwrap() - h / 2.0).abs() < 1e-15);
        assert!((optimal_step(2.0, 1000, 1.0).unwrap() / h - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(optimal_step(1.0, 1000, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gd_step_examples() {
        assert_eq!(gd_step(&[1.0], &[2.0], 0.05, None).unwrap(), vec![0.9]);
        assert_eq!(gd_step(&[1.0, -3.0], &[0.0, 0.0], 0.05, None).unwrap(), vec![1.0, -3.0]);
        assert_eq!(gd_step(&[0.0], &[2.0], 0.05, Some(&[(0.0, 1.0)])).unwrap(), vec![0.0]);
        assert!(gd_step(&[1.0], &[], 0.1, None).is_err());
    }

    #[test]
    fn experiment_zero_iterations() {
        let cfg = FdExperiment { iters: 0, seed: 4, ..Default::default() };
        let trace = adaptive_fd_experiment(&cfg).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].h, 1e-7);
        assert_eq!(trace[0].x, 0.1);
        // 1000-shot estimate of (1 + cos 0.1) / 2.
        assert!((trace[0].cost - fd_experiment_exact(0.1).unwrap()).abs() < 0.1);
        assert!((fd_experiment_exact(0.1).unwrap() - (1.0 + 0.1f64.cos()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn experiment_is_seed_reproducible() {
        let cfg = FdExperiment { iters: 5, seed: 9, ..Default::default() };
        assert_eq!(adaptive_fd_experiment(&cfg).unwrap(), adaptive_fd_experiment(&cfg).unwrap());
    }
}
