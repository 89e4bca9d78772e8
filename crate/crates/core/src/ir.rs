//! Gate vocabulary, observables, measurements and the [`Tape`] itself.
//!
//! A tape holds two separate lists, operations and terminal measurements.
//! Gate parameters are [`Expr`] nodes over a flat input vector of length
//! `num_inputs`; nothing on a tape carries concrete parameter values.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::expr::Expr;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrError {
    #[error("{kind} takes {expected} parameter(s), got {got}")]
    Arity { kind: GateKind, expected: usize, got: usize },
    #[error("{kind} acts on {expected} wire(s), got {got}")]
    WireCount { kind: GateKind, expected: usize, got: usize },
    #[error("repeated wire {0}")]
    RepeatedWire(usize),
    #[error("wire {wire} out of range for {num_wires} wire(s)")]
    WireOutOfRange { wire: usize, num_wires: usize },
    #[error("input ${index} out of range for {num_inputs} input(s)")]
    InputOutOfRange { index: usize, num_inputs: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{kind} parameter {value} outside [0, 1]")]
    ChannelDomain { kind: GateKind, value: f64 },
    #[error("invalid observable: {0}")]
    Observable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    T,
    RX,
    RY,
    RZ,
    Rot,
    CNOT,
    CZ,
    SingleExcitation,
    DepolarizingChannel,
    AmplitudeDamping,
}

impl GateKind {
    pub const ALL: [GateKind; 15] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::T,
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::Rot,
        GateKind::CNOT,
        GateKind::CZ,
        GateKind::SingleExcitation,
        GateKind::DepolarizingChannel,
        GateKind::AmplitudeDamping,
    ];

    pub fn num_params(self) -> usize {
        use GateKind::*;
        match self {
            Rot => 3,
            RX | RY | RZ | SingleExcitation | DepolarizingChannel | AmplitudeDamping => 1,
            _ => 0,
        }
    }

    pub fn num_wires(self) -> usize {
        match self {
            GateKind::CNOT | GateKind::CZ | GateKind::SingleExcitation => 2,
            _ => 1,
        }
    }

    pub fn is_channel(self) -> bool {
        matches!(self, GateKind::DepolarizingChannel | GateKind::AmplitudeDamping)
    }

    pub fn is_self_inverse(self) -> bool {
        use GateKind::*;
        matches!(self, H | X | Y | Z | CNOT | CZ)
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::RX | GateKind::RY | GateKind::RZ)
    }

    /// Display name, as used by the circuit drawer.
    pub fn name(self) -> &'static str {
        use GateKind::*;
        match self {
            H => "H",
            X => "X",
            Y => "Y",
            Z => "Z",
            S => "S",
            T => "T",
            RX => "RX",
            RY => "RY",
            RZ => "RZ",
            Rot => "Rot",
            CNOT => "CNOT",
            CZ => "CZ",
            SingleExcitation => "SingleExcitation",
            DepolarizingChannel => "DepolarizingChannel",
            AmplitudeDamping => "AmplitudeDamping",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn mat(dim: usize, entries: &[Complex64]) -> CMatrix {
    DMatrix::from_row_slice(dim, dim, entries)
}

/// Unitary matrix of a gate, wire order as listed on the operation with the
/// first wire as the most significant bit.
///
/// `Rot(phi, theta, omega)` is `RZ(omega) * RY(theta) * RZ(phi)`.
/// `SingleExcitation(theta)` rotates by `theta / 2` inside span{|01>, |10>}.
pub fn gate_matrix(kind: GateKind, params: &[f64], adjoint: bool) -> Result<CMatrix, IrError> {
    use GateKind::*;
    if kind.is_channel() {
        return Err(IrError::InvalidRequest(format!("{kind} is a channel and has no unitary matrix")));
    }
    if params.len() != kind.num_params() {
        return Err(IrError::Arity { kind, expected: kind.num_params(), got: params.len() });
    }
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let m = match kind {
        H => mat(2, &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)]),
        X => mat(2, &[o, l, l, o]),
        Y => mat(2, &[o, c(0.0, -1.0), c(0.0, 1.0), o]),
        Z => mat(2, &[l, o, o, -l]),
        S => mat(2, &[l, o, o, c(0.0, 1.0)]),
        T => mat(2, &[l, o, o, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)]),
        RX => {
            let (s, co) = (params[0] / 2.0).sin_cos();
            mat(2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
        }
        RY => {
            let (s, co) = (params[0] / 2.0).sin_cos();
            mat(2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
        }
        RZ => {
            let half = params[0] / 2.0;
            mat(2, &[Complex64::from_polar(1.0, -half), o, o, Complex64::from_polar(1.0, half)])
        }
        Rot => rot_matrix(params[0], params[1], params[2]),
        CNOT => mat(4, &[l, o, o, o, o, l, o, o, o, o, o, l, o, o, l, o]),
        CZ => mat(4, &[l, o, o, o, o, l, o, o, o, o, l, o, o, o, o, -l]),
        SingleExcitation => {
            let (s, co) = (params[0] / 2.0).sin_cos();
            mat(
                4,
                &[l, o, o, o, o, c(co, 0.0), c(-s, 0.0), o, o, c(s, 0.0), c(co, 0.0), o, o, o, o, l],
            )
        }
        DepolarizingChannel | AmplitudeDamping => unreachable!(),
    };
    Ok(if adjoint { m.adjoint() } else { m })
}

/// `RZ(omega) * RY(theta) * RZ(phi)` in closed form.
pub fn rot_matrix(phi: f64, theta: f64, omega: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    mat(
        2,
        &[
            Complex64::from_polar(co, -(phi + omega) / 2.0),
            Complex64::from_polar(-s, (phi - omega) / 2.0),
            Complex64::from_polar(s, -(phi - omega) / 2.0),
            Complex64::from_polar(co, (phi + omega) / 2.0),
        ],
    )
}

/// Kraus operators of a single-qubit channel.
///
/// `DepolarizingChannel(p)` maps `rho -> (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)`.
/// Operators with zero weight are omitted.
pub fn kraus_operators(kind: GateKind, params: &[f64]) -> Result<Vec<CMatrix>, IrError> {
    if !kind.is_channel() {
        return Err(IrError::InvalidRequest(format!("{kind} is not a channel")));
    }
    if params.len() != 1 {
        return Err(IrError::Arity { kind, expected: 1, got: params.len() });
    }
    let p = params[0];
    if !(0.0..=1.0).contains(&p) {
        return Err(IrError::ChannelDomain { kind, value: p });
    }
    let o = c(0.0, 0.0);
    let mut ops = Vec::new();
    match kind {
        GateKind::DepolarizingChannel => {
            let a = (1.0 - p).sqrt();
            let b = (p / 3.0).sqrt();
            if a > 0.0 {
                ops.push(mat(2, &[c(a, 0.0), o, o, c(a, 0.0)]));
            }
            if b > 0.0 {
                ops.push(mat(2, &[o, c(b, 0.0), c(b, 0.0), o]));
                ops.push(mat(2, &[o, c(0.0, -b), c(0.0, b), o]));
                ops.push(mat(2, &[c(b, 0.0), o, o, c(-b, 0.0)]));
            }
        }
        GateKind::AmplitudeDamping => {
            ops.push(mat(2, &[c(1.0, 0.0), o, o, c((1.0 - p).sqrt(), 0.0)]));
            if p > 0.0 {
                ops.push(mat(2, &[o, c(p.sqrt(), 0.0), o, o]));
            }
        }
        _ => unreachable!(),
    }
    Ok(ops)
}

/// A gate or channel applied to specific wires.
#[derive(Debug, Clone, PartialEq)]
pub struct Operation {
    pub kind: GateKind,
    pub wires: Vec<usize>,
    pub params: Vec<Expr>,
    /// Set only on `S` and `T`, which have no parameter to negate.
    pub adjoint: bool,
}

impl Operation {
    pub fn new(kind: GateKind, wires: Vec<usize>, params: Vec<Expr>) -> Result<Self, IrError> {
        Self::with_adjoint(kind, wires, params, false)
    }

    pub fn with_adjoint(
        kind: GateKind,
        wires: Vec<usize>,
        params: Vec<Expr>,
        adjoint: bool,
    ) -> Result<Self, IrError> {
        if params.len() != kind.num_params() {
            return Err(IrError::Arity { kind, expected: kind.num_params(), got: params.len() });
        }
        if wires.len() != kind.num_wires() {
            return Err(IrError::WireCount { kind, expected: kind.num_wires(), got: wires.len() });
        }
        if wires.len() == 2 && wires[0] == wires[1] {
            return Err(IrError::RepeatedWire(wires[0]));
        }
        if adjoint && kind.is_channel() {
            return Err(IrError::InvalidRequest(format!("{kind} has no adjoint")));
        }
        Ok(Operation { kind, wires, params, adjoint })
    }

    /// Evaluates every parameter against `inputs`.
    pub fn param_values(&self, inputs: &[f64]) -> Result<Vec<f64>, crate::expr::ExprError> {
        self.params.iter().map(|p| p.evaluate(inputs)).collect()
    }

    pub fn matrix(&self, inputs: &[f64]) -> Result<CMatrix, crate::Error> {
        let values = self.param_values(inputs)?;
        Ok(gate_matrix(self.kind, &values, self.adjoint)?)
    }

    pub fn acts_on(&self, wire: usize) -> bool {
        self.wires.contains(&wire)
    }

    pub fn shares_wire(&self, other: &Operation) -> bool {
        self.wires.iter().any(|w| other.wires.contains(w))
    }
}

/// The operation whose matrix is the conjugate transpose of `op`'s.
pub fn op_adjoint(op: &Operation) -> Result<Operation, IrError> {
    use GateKind::*;
    let kind = op.kind;
    match kind {
        DepolarizingChannel | AmplitudeDamping => {
            Err(IrError::InvalidRequest(format!("{kind} is a channel and has no adjoint")))
        }
        H | X | Y | Z | CNOT | CZ => Ok(op.clone()),
        S | T => Ok(Operation { adjoint: !op.adjoint, ..op.clone() }),
        RX | RY | RZ | SingleExcitation => Ok(Operation {
            params: vec![-&op.params[0]],
            ..op.clone()
        }),
        Rot => Ok(Operation {
            params: vec![-&op.params[2], -&op.params[1], -&op.params[0]],
            ..op.clone()
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn symbol(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A tensor product of single-qubit Paulis on distinct wires.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliWord {
    factors: BTreeMap<usize, Pauli>,
}

impl PauliWord {
    pub fn new<I: IntoIterator<Item = (usize, Pauli)>>(factors: I) -> Result<Self, IrError> {
        let mut map = BTreeMap::new();
        for (wire, p) in factors {
            if map.insert(wire, p).is_some() {
                return Err(IrError::Observable(format!("wire {wire} appears twice")));
            }
        }
        if map.is_empty() {
            return Err(IrError::Observable("empty Pauli word".into()));
        }
        Ok(PauliWord { factors: map })
    }

    pub fn single(wire: usize, p: Pauli) -> Self {
        PauliWord { factors: BTreeMap::from([(wire, p)]) }
    }

    /// `Z` on every listed wire.
    pub fn zs(wires: &[usize]) -> Result<Self, IrError> {
        Self::new(wires.iter().map(|&w| (w, Pauli::Z)))
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.factors.iter().map(|(&w, &p)| (w, p))
    }

    pub fn wires(&self) -> Vec<usize> {
        self.factors.keys().copied().collect()
    }

    pub fn max_wire(&self) -> usize {
        *self.factors.keys().next_back().expect("nonempty")
    }
}

impl fmt::Display for PauliWord {
    /// Space separated factors, e.g. `Z0 Z1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (w, p)) in self.factors().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", p.symbol(), w)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PauliWord {
    type Err = IrError;

    fn from_str(s: &str) -> Result<Self, IrError> {
        let mut factors = Vec::new();
        for tok in s.split(|ch: char| ch.is_whitespace() || ch == '@').filter(|t| !t.is_empty()) {
            let mut chars = tok.chars();
            let p = match chars.next() {
                Some('X') => Pauli::X,
                Some('Y') => Pauli::Y,
                Some('Z') => Pauli::Z,
                _ => return Err(IrError::Observable(format!("bad factor `{tok}`"))),
            };
            let wire: usize = chars
                .as_str()
                .parse()
                .map_err(|_| IrError::Observable(format!("bad wire in `{tok}`")))?;
            factors.push((wire, p));
        }
        PauliWord::new(factors)
    }
}

/// A real-weighted sum of Pauli words.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    terms: Vec<(f64, PauliWord)>,
}

impl Hamiltonian {
    pub fn new(terms: Vec<(f64, PauliWord)>) -> Result<Self, IrError> {
        if terms.is_empty() {
            return Err(IrError::Observable("Hamiltonian needs at least one term".into()));
        }
        if let Some((c, _)) = terms.iter().find(|(c, _)| !c.is_finite()) {
            return Err(IrError::Observable(format!("non-finite coefficient {c}")));
        }
        Ok(Hamiltonian { terms })
    }

    pub fn terms(&self) -> &[(f64, PauliWord)] {
        &self.terms
    }

    pub fn max_wire(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.max_wire()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Expval(PauliWord),
    ExpvalHamiltonian(Hamiltonian),
    Probs(Vec<usize>),
}

impl Measurement {
    /// Number of real values this measurement contributes to a result row.
    pub fn result_len(&self) -> usize {
        match self {
            Measurement::Probs(w) => 1 << w.len(),
            _ => 1,
        }
    }

    pub fn wires(&self) -> Vec<usize> {
        match self {
            Measurement::Expval(w) => w.wires(),
            Measurement::ExpvalHamiltonian(h) => {
                let mut ws: Vec<usize> = h.terms().iter().flat_map(|(_, w)| w.wires()).collect();
                ws.sort_unstable();
                ws.dedup();
                ws
            }
            Measurement::Probs(w) => w.clone(),
        }
    }
}

/// A quantum program: operations followed by terminal measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    num_wires: usize,
    num_inputs: usize,
    operations: Vec<Operation>,
    measurements: Vec<Measurement>,
}

impl Tape {
    pub fn new(
        num_wires: usize,
        num_inputs: usize,
        operations: Vec<Operation>,
        measurements: Vec<Measurement>,
    ) -> Result<Self, IrError> {
        if num_wires == 0 {
            return Err(IrError::InvalidRequest("a tape needs at least one wire".into()));
        }
        let check_wire = |wire: usize| {
            if wire >= num_wires {
                Err(IrError::WireOutOfRange { wire, num_wires })
            } else {
                Ok(())
            }
        };
        for op in &operations {
            op.wires.iter().try_for_each(|&w| check_wire(w))?;
            for p in &op.params {
                if let Some(&index) = p.inputs().last() {
                    if index >= num_inputs {
                        return Err(IrError::InputOutOfRange { index, num_inputs });
                    }
                }
            }
        }
        for m in &measurements {
            m.wires().into_iter().try_for_each(check_wire)?;
            if let Measurement::Probs(ws) = m {
                let mut sorted = ws.clone();
                sorted.sort_unstable();
                if let Some(w) = sorted.windows(2).find(|p| p[0] == p[1]) {
                    return Err(IrError::RepeatedWire(w[0]));
                }
            }
        }
        Ok(Tape { num_wires, num_inputs, operations, measurements })
    }

    pub fn builder(num_wires: usize, num_inputs: usize) -> TapeBuilder {
        TapeBuilder { num_wires, num_inputs, ops: Vec::new(), meas: Vec::new() }
    }

    pub fn num_wires(&self) -> usize {
        self.num_wires
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn operations(&self) -> &[Operation] {
        &self.operations
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    /// Same wires, inputs and measurements with a new operation list.
    pub fn with_operations(&self, operations: Vec<Operation>) -> Result<Self, IrError> {
        Tape::new(self.num_wires, self.num_inputs, operations, self.measurements.clone())
    }

    pub fn with_measurements(&self, measurements: Vec<Measurement>) -> Result<Self, IrError> {
        Tape::new(self.num_wires, self.num_inputs, self.operations.clone(), measurements)
    }

    /// Length of one result row produced by executing this tape.
    pub fn result_len(&self) -> usize {
        self.measurements.iter().map(Measurement::result_len).sum()
    }

    pub fn has_channels(&self) -> bool {
        self.operations.iter().any(|op| op.kind.is_channel())
    }
}

/// A gate parameter that depends on at least one input.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableParam {
    pub op_index: usize,
    pub slot: usize,
    pub expr: Expr,
}

/// Every gate-parameter expression that reads an input, in tape order.
pub fn collect_trainable_params(tape: &Tape) -> Vec<TrainableParam> {
    tape.operations()
        .iter()
        .enumerate()
        .flat_map(|(op_index, op)| {
            op.params.iter().enumerate().filter(|(_, p)| p.is_trainable()).map(move |(slot, p)| {
                TrainableParam { op_index, slot, expr: p.clone() }
            })
        })
        .collect()
}

/// Incremental tape construction. Validation happens in [`TapeBuilder::build`].
#[derive(Debug, Clone)]
pub struct TapeBuilder {
    num_wires: usize,
    num_inputs: usize,
    ops: Vec<Result<Operation, IrError>>,
    meas: Vec<Measurement>,
}

impl TapeBuilder {
    pub fn op(mut self, kind: GateKind, wires: &[usize], params: Vec<Expr>) -> Self {
        self.ops.push(Operation::new(kind, wires.to_vec(), params));
        self
    }

    pub fn push(mut self, op: Operation) -> Self {
        self.ops.push(Ok(op));
        self
    }

    pub fn h(self, w: usize) -> Self {
        self.op(GateKind::H, &[w], vec![])
    }

    pub fn x(self, w: usize) -> Self {
        self.op(GateKind::X, &[w], vec![])
    }

    pub fn s(self, w: usize) -> Self {
        self.op(GateKind::S, &[w], vec![])
    }

    pub fn t(self, w: usize) -> Self {
        self.op(GateKind::T, &[w], vec![])
    }

    pub fn rx(self, w: usize, p: impl Into<Expr>) -> Self {
        self.op(GateKind::RX, &[w], vec![p.into()])
    }

    pub fn ry(self, w: usize, p: impl Into<Expr>) -> Self {
        self.op(GateKind::RY, &[w], vec![p.into()])
    }

    pub fn rz(self, w: usize, p: impl Into<Expr>) -> Self {
        self.op(GateKind::RZ, &[w], vec![p.into()])
    }

    pub fn rot(self, w: usize, phi: impl Into<Expr>, theta: impl Into<Expr>, omega: impl Into<Expr>) -> Self {
        self.op(GateKind::Rot, &[w], vec![phi.into(), theta.into(), omega.into()])
    }

    pub fn cnot(self, control: usize, target: usize) -> Self {
        self.op(GateKind::CNOT, &[control, target], vec![])
    }

    pub fn cz(self, a: usize, b: usize) -> Self {
        self.op(GateKind::CZ, &[a, b], vec![])
    }

    pub fn measure(mut self, m: Measurement) -> Self {
        self.meas.push(m);
        self
    }

    pub fn expval(self, word: PauliWord) -> Self {
        self.measure(Measurement::Expval(word))
    }

    pub fn build(self) -> Result<Tape, IrError> {
        let ops = self.ops.into_iter().collect::<Result<Vec<_>, _>>()?;
        Tape::new(self.num_wires, self.num_inputs, ops, self.meas)
    }
}
