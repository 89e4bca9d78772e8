//! The transform abstraction.
//!
//! A [`SingleTransform`] maps one tape to one tape. A [`BatchTransform`] maps
//! one tape to a [`BatchResult`]: several tapes plus a classical
//! post-processing step. Post-processing is expressed as [`Expr`] graphs over
//! the flattened result rows, so it can be differentiated with respect to the
//! results exactly.
//!
//! Hyperparameters are a flat `Vec<f64>` per transform. Derivatives with
//! respect to them come from [`hyperparam_gradient`], a central difference
//! that re-runs whatever pipeline the caller closes over.

use std::fmt;
use std::sync::Arc;

use crate::expr::Expr;
use crate::ir::{Measurement, Tape};
use crate::sim::Executor;
use crate::{Error, Result};

type TapeFn = Arc<dyn Fn(&Tape, &[f64]) -> Result<Tape> + Send + Sync>;
type BatchFn = Arc<dyn Fn(&Tape, &[f64]) -> Result<BatchResult> + Send + Sync>;

/// Builds the output expressions of a batch given the circuit inputs.
///
/// `Input(k)` in a returned expression refers to position `k` of the
/// concatenated result rows of the batch's tapes.
pub type Postprocess = Arc<dyn Fn(&[f64]) -> Result<Vec<Expr>> + Send + Sync>;

/// Tape to tape.
#[derive(Clone)]
pub struct SingleTransform {
    name: String,
    hyperparams: Vec<f64>,
    apply: TapeFn,
}

impl SingleTransform {
    pub fn new<F>(name: impl Into<String>, hyperparams: Vec<f64>, f: F) -> Self
    where
        F: Fn(&Tape, &[f64]) -> Result<Tape> + Send + Sync + 'static,
    {
        SingleTransform { name: name.into(), hyperparams, apply: Arc::new(f) }
    }

    /// A transform without hyperparameters.
    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Tape) -> Result<Tape> + Send + Sync + 'static,
    {
        Self::new(name, Vec::new(), move |t, _| f(t))
    }

    pub fn identity() -> Self {
        Self::from_fn("identity", |t| Ok(t.clone()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hyperparams(&self) -> &[f64] {
        &self.hyperparams
    }

    pub fn with_hyperparams(&self, hyperparams: Vec<f64>) -> Result<Self> {
        if hyperparams.len() != self.hyperparams.len() {
            return Err(Error::InvalidRequest(format!(
                "{} takes {} hyperparameter(s), got {}",
                self.name,
                self.hyperparams.len(),
                hyperparams.len()
            )));
        }
        Ok(SingleTransform { hyperparams, ..self.clone() })
    }

    pub fn apply(&self, tape: &Tape) -> Result<Tape> {
        self.apply_with(tape, &self.hyperparams)
    }

    /// Applies with explicit hyperparameters, leaving `self` untouched.
    pub fn apply_with(&self, tape: &Tape, hyperparams: &[f64]) -> Result<Tape> {
        let out = (self.apply)(tape, hyperparams)?;
        if out.num_inputs() != tape.num_inputs() {
            return Err(Error::Internal(format!(
                "{} changed the input count from {} to {}",
                self.name,
                tape.num_inputs(),
                out.num_inputs()
            )));
        }
        Ok(out)
    }

    pub fn map_over(&self, tapes: &[Tape]) -> Result<Vec<Tape>> {
        tapes.iter().map(|t| self.apply(t)).collect()
    }
}

impl fmt::Debug for SingleTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SingleTransform")
            .field("name", &self.name)
            .field("hyperparams", &self.hyperparams)
            .finish()
    }
}

/// `compose(t1, t2).apply(tape) == t2.apply(t1.apply(tape))`.
pub fn compose(t1: &SingleTransform, t2: &SingleTransform) -> SingleTransform {
    let split = t1.hyperparams.len();
    let mut hyperparams = t1.hyperparams.clone();
    hyperparams.extend_from_slice(&t2.hyperparams);
    let (a, b) = (t1.clone(), t2.clone());
    SingleTransform::new(format!("{}|{}", t1.name, t2.name), hyperparams, move |tape, hp| {
        let mid = a.apply_with(tape, &hp[..split])?;
        b.apply_with(&mid, &hp[split..])
    })
}

pub fn map_over(t: &SingleTransform, tapes: &[Tape]) -> Result<Vec<Tape>> {
    t.map_over(tapes)
}

/// Tapes plus the classical step that combines their results.
#[derive(Clone)]
pub struct BatchResult {
    pub tapes: Vec<Tape>,
    pub postprocess: Postprocess,
}

impl BatchResult {
    pub fn new<F>(tapes: Vec<Tape>, postprocess: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<Expr>> + Send + Sync + 'static,
    {
        BatchResult { tapes, postprocess: Arc::new(postprocess) }
    }

    pub fn row_lengths(&self) -> Vec<usize> {
        self.tapes.iter().map(Tape::result_len).collect()
    }

    /// Post-processing expressions over the flattened result rows.
    pub fn outputs(&self, inputs: &[f64]) -> Result<Vec<Expr>> {
        (self.postprocess)(inputs)
    }

    fn flatten(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rows.len() != self.tapes.len() {
            return Err(Error::InvalidRequest(format!(
                "post-processing expects {} result row(s), got {}",
                self.tapes.len(),
                rows.len()
            )));
        }
        for (i, (row, len)) in rows.iter().zip(self.row_lengths()).enumerate() {
            if row.len() != len {
                return Err(Error::InvalidRequest(format!(
                    "result row {i} has {} value(s), tape produces {len}",
                    row.len()
                )));
            }
        }
        Ok(rows.concat())
    }

    pub fn apply(&self, rows: &[Vec<f64>], inputs: &[f64]) -> Result<Vec<f64>> {
        let flat = self.flatten(rows)?;
        self.outputs(inputs)?
            .iter()
            .map(|e| e.evaluate(&flat).map_err(Error::from))
            .collect()
    }

    /// Outputs and `d(outputs)/d(flattened rows)`.
    pub fn apply_with_jacobian(&self, rows: &[Vec<f64>], inputs: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let flat = self.flatten(rows)?;
        let outputs = self.outputs(inputs)?;
        let mut values = Vec::with_capacity(outputs.len());
        let mut jac = Vec::with_capacity(outputs.len());
        for e in &outputs {
            values.push(e.evaluate(&flat)?);
            jac.push(e.backprop(&flat, 1.0)?);
        }
        Ok((values, jac))
    }

    /// Executes every tape and post-processes the results.
    pub fn execute<E: Executor + ?Sized>(&self, exec: &E, inputs: &[f64]) -> Result<Vec<f64>> {
        let rows = exec.execute_batch(&self.tapes, inputs)?;
        self.apply(&rows, inputs)
    }
}

impl fmt::Debug for BatchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BatchResult").field("tapes", &self.tapes.len()).finish_non_exhaustive()
    }
}

/// Tape to [`BatchResult`].
#[derive(Clone)]
pub struct BatchTransform {
    name: String,
    hyperparams: Vec<f64>,
    apply: BatchFn,
}

impl BatchTransform {
    pub fn new<F>(name: impl Into<String>, hyperparams: Vec<f64>, f: F) -> Self
    where
        F: Fn(&Tape, &[f64]) -> Result<BatchResult> + Send + Sync + 'static,
    {
        BatchTransform { name: name.into(), hyperparams, apply: Arc::new(f) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hyperparams(&self) -> &[f64] {
        &self.hyperparams
    }

    pub fn with_hyperparams(&self, hyperparams: Vec<f64>) -> Result<Self> {
        if hyperparams.len() != self.hyperparams.len() {
            return Err(Error::InvalidRequest(format!(
                "{} takes {} hyperparameter(s), got {}",
                self.name,
                self.hyperparams.len(),
                hyperparams.len()
            )));
        }
        Ok(BatchTransform { hyperparams, ..self.clone() })
    }

    pub fn apply(&self, tape: &Tape) -> Result<BatchResult> {
        self.apply_with(tape, &self.hyperparams)
    }

    pub fn apply_with(&self, tape: &Tape, hyperparams: &[f64]) -> Result<BatchResult> {
        let out = (self.apply)(tape, hyperparams)?;
        if let Some(bad) = out.tapes.iter().find(|t| t.num_inputs() != tape.num_inputs()) {
            return Err(Error::Internal(format!(
                "{} produced a tape over {} input(s) from one over {}",
                self.name,
                bad.num_inputs(),
                tape.num_inputs()
            )));
        }
        Ok(out)
    }

    pub fn map_over(&self, tapes: &[Tape]) -> Result<Vec<BatchResult>> {
        tapes.iter().map(|t| self.apply(t)).collect()
    }
}

impl fmt::Debug for BatchTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BatchTransform")
            .field("name", &self.name)
            .field("hyperparams", &self.hyperparams)
            .finish()
    }
}

/// One tape per Hamiltonian term, recombined as `sum_i c_i <P_i>`.
pub fn hamiltonian_expand(tape: &Tape) -> Result<BatchResult> {
    let h = match tape.measurements() {
        [Measurement::ExpvalHamiltonian(h)] => h.clone(),
        _ => {
            return Err(Error::InvalidRequest(
                "hamiltonian_expand needs a single Hamiltonian expectation".into(),
            ))
        }
    };
    let tapes = h
        .terms()
        .iter()
        .map(|(_, word)| tape.with_measurements(vec![Measurement::Expval(word.clone())]))
        .collect::<Result<Vec<_>, _>>()?;
    let coeffs: Vec<f64> = h.terms().iter().map(|(c, _)| *c).collect();
    Ok(BatchResult::new(tapes, move |_| {
        let total = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| Expr::input(i) * c)
            .reduce(|a, b| a + b)
            .unwrap_or_else(|| Expr::constant(0.0));
        Ok(vec![total])
    }))
}

pub fn hamiltonian_expand_transform() -> BatchTransform {
    BatchTransform::new("hamiltonian_expand", Vec::new(), |t, _| hamiltonian_expand(t))
}

/// Central-difference gradient of a scalar function of hyperparameters.
///
/// The step for component `v` is `1e-6 * max(1, |v|)`.
pub fn hyperparam_gradient<F>(f: F, hyperparams: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut point = hyperparams.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let v = hyperparams[i];
        let step = 1e-6 * v.abs().max(1.0);
        point[i] = v + step;
        let up = f(&point)?;
        point[i] = v - step;
        let down = f(&point)?;
        point[i] = v;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{GateKind, Hamiltonian, Operation, PauliWord};
    use crate::sim::Device;

    fn word(s: &str) -> PauliWord {
        s.parse().unwrap()
    }

    fn bell_like_tape() -> Tape {
        let h = Hamiltonian::new(vec![(1.0, word("Z0 Z1")), (1.0, word("Y0 Y1")), (1.0, word("X0 X1"))]).unwrap();
        Tape::builder(2, 0)
            .ry(0, 0.3)
            .ry(1, 0.4)
            .cnot(0, 1)
            .cnot(1, 0)
            .measure(Measurement::ExpvalHamiltonian(h))
            .build()
            .unwrap()
    }

    #[test]
    fn expand_matches_direct() {
        let tape = bell_like_tape();
        let batch = hamiltonian_expand(&tape).unwrap();
        assert_eq!(batch.tapes.len(), 3);
        let dev = Device::statevector(2);
        let expanded = batch.execute(&dev, &[]).unwrap()[0];
        let direct = dev.execute(&tape, &[]).unwrap()[0];
        assert!((expanded - 0.972_729_28).abs() < 1e-6);
        assert!((expanded - direct).abs() < 1e-10);
    }

    #[test]
    fn expand_single_term_and_zero_coefficient() {
        let h = Hamiltonian::new(vec![(2.0, word("Z0"))]).unwrap();
        let tape = Tape::builder(1, 0).measure(Measurement::ExpvalHamiltonian(h)).build().unwrap();
        let batch = hamiltonian_expand(&tape).unwrap();
        assert_eq!(batch.tapes.len(), 1);
        assert_eq!(batch.apply(&[vec![1.0]], &[]).unwrap(), vec![2.0]);

        let h = Hamiltonian::new(vec![(0.0, word("Z0")), (1.0, word("X0"))]).unwrap();
        let tape = Tape::builder(1, 0).measure(Measurement::ExpvalHamiltonian(h)).build().unwrap();
        let batch = hamiltonian_expand(&tape).unwrap();
        assert_eq!(batch.apply(&[vec![123.0], vec![0.5]], &[]).unwrap(), vec![0.5]);
    }

    #[test]
    fn expand_rejects_plain_expval() {
        let tape = Tape::builder(1, 0).expval(word("Z0")).build().unwrap();
        assert!(matches!(hamiltonian_expand(&tape), Err(Error::InvalidRequest(_))));
    }

    #[test]
    fn postprocess_checks_row_shapes() {
        let batch = hamiltonian_expand(&bell_like_tape()).unwrap();
        assert!(batch.apply(&[vec![1.0]], &[]).is_err());
        assert!(batch.apply(&[vec![1.0], vec![1.0], vec![1.0, 2.0]], &[]).is_err());
        let (v, j) = batch.apply_with_jacobian(&[vec![0.1], vec![0.2], vec![0.3]], &[]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert_eq!(j, vec![vec![1.0, 1.0, 1.0]]);
    }

    #[test]
    fn composition_and_mapping() {
        let tape = Tape::builder(1, 1).rx(0, Expr::input(0)).expval(word("Z0")).build().unwrap();
        let id = compose(&SingleTransform::identity(), &SingleTransform::identity());
        assert_eq!(id.apply(&tape).unwrap(), tape);

        let append_h = SingleTransform::from_fn("append_h", |t: &Tape| {
            let mut ops = t.operations().to_vec();
            ops.push(Operation::new(GateKind::H, vec![0], vec![]).unwrap());
            Ok(t.with_operations(ops)?)
        });
        let twice = compose(&append_h, &append_h);
        assert_eq!(twice.apply(&tape).unwrap().operations().len(), 3);
        assert!(map_over(&append_h, &[]).unwrap().is_empty());
        let other = Tape::builder(1, 1).ry(0, Expr::input(0)).build().unwrap();
        let mapped = map_over(&append_h, &[tape.clone(), other.clone()]).unwrap();
        assert_eq!(mapped[0], append_h.apply(&tape).unwrap());
        assert_eq!(mapped[1], append_h.apply(&other).unwrap());
    }

    #[test]
    fn composed_hyperparams_split() {
        let shift = |name: &str| {
            SingleTransform::new(name, vec![0.0], |t: &Tape, hp: &[f64]| {
                let ops = t
                    .operations()
                    .iter()
                    .map(|op| {
                        let params = op.params.iter().map(|p| p + hp[0]).collect();
                        Operation::new(op.kind, op.wires.clone(), params)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(t.with_operations(ops)?)
            })
        };
        let both = compose(&shift("a"), &shift("b")).with_hyperparams(vec![0.1, 0.2]).unwrap();
        assert_eq!(both.hyperparams(), &[0.1, 0.2]);
        let tape = Tape::builder(1, 0).rx(0, 0.0).build().unwrap();
        let out = both.apply(&tape).unwrap();
        assert!((out.operations()[0].param_values(&[]).unwrap()[0] - 0.3).abs() < 1e-15);
        assert!(both.with_hyperparams(vec![1.0]).is_err());
    }

    #[test]
    fn input_count_is_guarded() {
        let bad = SingleTransform::from_fn("widen", |_: &Tape| Ok(Tape::builder(1, 5).build()?));
        let tape = Tape::builder(1, 1).build().unwrap();
        assert!(matches!(bad.apply(&tape), Err(Error::Internal(_))));
    }

    #[test]
    fn hyperparam_gradient_of_quadratic() {
        let g = hyperparam_gradient(|h| Ok(h[0] * h[0] + 3.0 * h[1]), &[2.0, -1.0]).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }
}
