//! Peephole compilation passes.
//!
//! Adjacency is wire-local: the "next" operation after `i` is the first later
//! operation sharing a wire with it. Every pass builds new parameter
//! expressions from the old ones, so compiled tapes stay differentiable with
//! respect to the original inputs.

use std::f64::consts::PI;

use crate::expr::Expr;
use crate::ir::{GateKind, Operation, Tape};
use crate::transform::{compose, SingleTransform};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(Error::InvalidRequest(format!("unknown direction {other:?} (expected left or right)"))),
        }
    }
}

fn next_sharing(ops: &[Operation], i: usize) -> Option<usize> {
    (i + 1..ops.len()).find(|&j| ops[j].shares_wire(&ops[i]))
}

fn next_on_wire(ops: &[Operation], i: usize, wire: usize) -> Option<usize> {
    (i + 1..ops.len()).find(|&j| ops[j].acts_on(wire))
}

fn prev_on_wire(ops: &[Operation], i: usize, wire: usize) -> Option<usize> {
    (0..i).rev().find(|&j| ops[j].acts_on(wire))
}

fn sweep_cap(ops: &[Operation]) -> usize {
    10 * ops.len().max(1)
}

fn cap_exceeded(pass: &str) -> Error {
    Error::Internal(format!("{pass} did not reach a fixpoint within its sweep cap"))
}

/// `CNOT(c, t)` becomes `H(t) CZ(c, t) H(t)`.
pub fn cnot_to_cz(tape: &Tape) -> Result<Tape> {
    let mut ops = Vec::with_capacity(tape.operations().len());
    for op in tape.operations() {
        if op.kind == GateKind::CNOT {
            let (c, t) = (op.wires[0], op.wires[1]);
            ops.push(Operation::new(GateKind::H, vec![t], vec![])?);
            ops.push(Operation::new(GateKind::CZ, vec![c, t], vec![])?);
            ops.push(Operation::new(GateKind::H, vec![t], vec![])?);
        } else {
            ops.push(op.clone());
        }
    }
    Ok(tape.with_operations(ops)?)
}

/// Collapses runs of same-kind rotations on one wire into one rotation whose
/// angle is the sum of the originals.
pub fn merge_rotations(tape: &Tape) -> Result<Tape> {
    let mut ops = tape.operations().to_vec();
    let mut i = 0;
    while i < ops.len() {
        if matches!(ops[i].kind, GateKind::RX | GateKind::RY | GateKind::RZ) {
            let wire = ops[i].wires[0];
            while let Some(j) = next_on_wire(&ops, i, wire) {
                if ops[j].kind != ops[i].kind {
                    break;
                }
                let merged = &ops[i].params[0] + &ops[j].params[0];
                ops[i].params[0] = merged;
                ops.remove(j);
            }
        }
        i += 1;
    }
    Ok(tape.with_operations(ops)?)
}

fn same_wires(a: &Operation, b: &Operation) -> bool {
    if a.kind == GateKind::CZ {
        let mut x = a.wires.clone();
        let mut y = b.wires.clone();
        x.sort_unstable();
        y.sort_unstable();
        x == y
    } else {
        a.wires == b.wires
    }
}

fn are_inverses(a: &Operation, b: &Operation) -> bool {
    if a.kind != b.kind || !same_wires(a, b) {
        return false;
    }
    match a.kind {
        k if k.is_self_inverse() => !a.adjoint && !b.adjoint,
        GateKind::S | GateKind::T => a.adjoint != b.adjoint,
        _ => false,
    }
}

/// Removes adjacent mutually inverse pairs until none remain.
pub fn cancel_inverses(tape: &Tape) -> Result<Tape> {
    let mut ops = tape.operations().to_vec();
    let cap = sweep_cap(&ops);
    for _ in 0..=cap {
        let hit = (0..ops.len()).find_map(|i| {
            let j = next_sharing(&ops, i)?;
            are_inverses(&ops[i], &ops[j]).then_some((i, j))
        });
        match hit {
            Some((i, j)) => {
                ops.remove(j);
                ops.remove(i);
            }
            None => return Ok(tape.with_operations(ops)?),
        }
    }
    Err(cap_exceeded("cancel_inverses"))
}

fn is_diagonal(kind: GateKind) -> bool {
    matches!(kind, GateKind::Z | GateKind::S | GateKind::T | GateKind::RZ)
}

/// Whether single-qubit `gate` on `wire` commutes with controlled `ctrl`.
fn commutes_through(gate: &Operation, ctrl: &Operation, wire: usize) -> bool {
    match ctrl.kind {
        GateKind::CZ => is_diagonal(gate.kind),
        GateKind::CNOT if ctrl.wires[0] == wire => is_diagonal(gate.kind),
        GateKind::CNOT => matches!(gate.kind, GateKind::X | GateKind::RX),
        _ => false,
    }
}

fn movable(op: &Operation) -> bool {
    op.wires.len() == 1 && !op.kind.is_channel()
}

/// Pushes single-qubit gates through the controls and targets of CNOT/CZ
/// gates they commute with.
pub fn commute_controlled(tape: &Tape, direction: Direction) -> Result<Tape> {
    let mut ops = tape.operations().to_vec();
    let cap = sweep_cap(&ops);
    for _ in 0..=cap {
        let mut moved = false;
        match direction {
            Direction::Left => {
                for k in 0..ops.len() {
                    if !movable(&ops[k]) {
                        continue;
                    }
                    let wire = ops[k].wires[0];
                    if let Some(p) = prev_on_wire(&ops, k, wire) {
                        if commutes_through(&ops[k], &ops[p], wire) {
                            let op = ops.remove(k);
                            ops.insert(p, op);
                            moved = true;
                        }
                    }
                }
            }
            Direction::Right => {
                for k in (0..ops.len()).rev() {
                    if !movable(&ops[k]) {
                        continue;
                    }
                    let wire = ops[k].wires[0];
                    if let Some(n) = next_on_wire(&ops, k, wire) {
                        if commutes_through(&ops[k], &ops[n], wire) {
                            let op = ops.remove(k);
                            ops.insert(n, op);
                            moved = true;
                        }
                    }
                }
            }
        }
        if !moved {
            return Ok(tape.with_operations(ops)?);
        }
    }
    Err(cap_exceeded("commute_controlled"))
}

/// Adds with constant folding, so fixed-gate angles stay literal.
fn add(a: &Expr, b: &Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x + y),
        (Some(0.0), None) => b.clone(),
        (None, Some(0.0)) => a.clone(),
        _ => a + b,
    }
}

fn is_zero(e: &Expr) -> bool {
    e.as_const() == Some(0.0)
}

/// `(φ, θ, ω)` with `Rot(φ, θ, ω) = RZ(ω) RY(θ) RZ(φ)`, equal to the gate up
/// to global phase.
fn rot_angles(op: &Operation) -> Option<[Expr; 3]> {
    let c = Expr::constant;
    let sign = if op.adjoint { -1.0 } else { 1.0 };
    Some(match op.kind {
        GateKind::RZ => [op.params[0].clone(), c(0.0), c(0.0)],
        GateKind::RY => [c(0.0), op.params[0].clone(), c(0.0)],
        GateKind::RX => [c(PI / 2.0), op.params[0].clone(), c(-PI / 2.0)],
        GateKind::Rot => [op.params[0].clone(), op.params[1].clone(), op.params[2].clone()],
        GateKind::H => [c(PI), c(PI / 2.0), c(0.0)],
        GateKind::X => [c(PI / 2.0), c(PI), c(-PI / 2.0)],
        GateKind::Y => [c(0.0), c(PI), c(0.0)],
        GateKind::Z => [c(PI), c(0.0), c(0.0)],
        GateKind::S => [c(sign * PI / 2.0), c(0.0), c(0.0)],
        GateKind::T => [c(sign * PI / 4.0), c(0.0), c(0.0)],
        _ => return None,
    })
}

/// Angles of `next · acc` (acc applied first).
///
/// The general case rewrites `RY(θ2) RZ(δ) RY(θ1)` as `RZ(β) RY(θ) RZ(α)`
/// from its first column `(a, b)`: `θ = 2 atan2(|b|, |a|)`,
/// `α = -arg a - arg b`, `β = arg b - arg a`. At `θ ∈ {0, π}` one of the
/// arguments is `atan2(0, 0) = 0`, which still yields a valid split of the
/// Z rotation, but the angles are not differentiable there.
fn compose_angles(acc: &[Expr; 3], next: &[Expr; 3]) -> [Expr; 3] {
    let [phi1, theta1, omega1] = acc;
    let [phi2, theta2, omega2] = next;
    if is_zero(theta2) {
        return [phi1.clone(), theta1.clone(), add(&add(omega1, phi2), omega2)];
    }
    if is_zero(theta1) {
        return [add(&add(phi1, omega1), phi2), theta2.clone(), omega2.clone()];
    }
    let delta = add(omega1, phi2);
    if is_zero(&delta) {
        return [phi1.clone(), add(theta1, theta2), omega2.clone()];
    }
    let half_sum = (theta1 + theta2) * 0.5;
    let half_diff = (theta1 - theta2) * 0.5;
    let cd = (&delta * 0.5).cos();
    let sd = (&delta * 0.5).sin();
    let a_re = &cd * half_sum.cos();
    let a_im = -(&sd * half_diff.cos());
    let b_re = &cd * half_sum.sin();
    let b_im = &sd * half_diff.sin();
    let a_abs = (a_re.square() + a_im.square()).sqrt();
    let b_abs = (b_re.square() + b_im.square()).sqrt();
    let theta = b_abs.atan2(&a_abs) * 2.0;
    let arg_a = a_im.atan2(&a_re);
    let arg_b = b_im.atan2(&b_re);
    let alpha = -(&arg_a + &arg_b);
    let beta = &arg_b - &arg_a;
    [add(phi1, &alpha), theta, add(&beta, omega2)]
}

/// Replaces every maximal run of single-qubit gates on a wire with one `Rot`
/// placed where the run started.
pub fn single_qubit_fusion(tape: &Tape) -> Result<Tape> {
    let mut ops: Vec<Option<Operation>> = tape.operations().iter().cloned().map(Some).collect();
    let fusible = |op: &Operation| op.wires.len() == 1 && rot_angles(op).is_some();
    let mut out = Vec::with_capacity(ops.len());
    for i in 0..ops.len() {
        let Some(op) = ops[i].take() else { continue };
        if !fusible(&op) {
            out.push(op);
            continue;
        }
        let wire = op.wires[0];
        let mut angles = rot_angles(&op).expect("fusible");
        let mut j = i + 1;
        while j < ops.len() {
            match &ops[j] {
                Some(next) if next.acts_on(wire) => {
                    if !fusible(next) {
                        break;
                    }
                    angles = compose_angles(&angles, &rot_angles(next).expect("fusible"));
                    ops[j] = None;
                }
                _ => {}
            }
            j += 1;
        }
        out.push(Operation::new(GateKind::Rot, vec![wire], angles.to_vec())?);
    }
    Ok(tape.with_operations(out)?)
}

pub fn cnot_to_cz_transform() -> SingleTransform {
    SingleTransform::from_fn("cnot_to_cz", cnot_to_cz)
}

pub fn merge_rotations_transform() -> SingleTransform {
    SingleTransform::from_fn("merge_rotations", merge_rotations)
}

pub fn cancel_inverses_transform() -> SingleTransform {
    SingleTransform::from_fn("cancel_inverses", cancel_inverses)
}

pub fn commute_controlled_transform(direction: Direction) -> SingleTransform {
    let name = match direction {
        Direction::Left => "commute_controlled:left",
        Direction::Right => "commute_controlled:right",
    };
    SingleTransform::from_fn(name, move |t| commute_controlled(t, direction))
}

pub fn single_qubit_fusion_transform() -> SingleTransform {
    SingleTransform::from_fn("single_qubit_fusion", single_qubit_fusion)
}

/// Looks up a pass by name with an optional option string (`left`/`right`
/// for `commute_controlled`).
pub fn pass_by_name(name: &str, option: Option<&str>) -> Result<SingleTransform> {
    let no_option = |t: SingleTransform| match option {
        None => Ok(t),
        Some(o) => Err(Error::InvalidRequest(format!("pass {name} takes no option, got {o:?}"))),
    };
    match name {
        "cnot_to_cz" => no_option(cnot_to_cz_transform()),
        "merge_rotations" => no_option(merge_rotations_transform()),
        "cancel_inverses" => no_option(cancel_inverses_transform()),
        "single_qubit_fusion" => no_option(single_qubit_fusion_transform()),
        "commute_controlled" => {
            let dir = option.map(str::parse).transpose()?.unwrap_or(Direction::Right);
            Ok(commute_controlled_transform(dir))
        }
        other => Err(Error::InvalidRequest(format!("unknown pass {other:?}"))),
    }
}

/// An ordered list of passes applied left to right.
#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    passes: Vec<SingleTransform>,
}

impl Pipeline {
    pub fn new(passes: Vec<SingleTransform>) -> Self {
        Pipeline { passes }
    }

    /// `commute_controlled(left)`, `cancel_inverses`, `merge_rotations`.
    pub fn default_pipeline() -> Self {
        Pipeline::new(vec![
            commute_controlled_transform(Direction::Left),
            cancel_inverses_transform(),
            merge_rotations_transform(),
        ])
    }

    /// Parses `pass[:option],pass[:option],...`; an empty string is the
    /// empty pipeline.
    pub fn parse(spec: &str) -> Result<Self> {
        let passes = spec
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| match item.split_once(':') {
                Some((name, opt)) => pass_by_name(name.trim(), Some(opt.trim())),
                None => pass_by_name(item, None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline::new(passes))
    }

    pub fn passes(&self) -> &[SingleTransform] {
        &self.passes
    }

    pub fn run(&self, tape: &Tape) -> Result<Tape> {
        self.passes.iter().try_fold(tape.clone(), |t, pass| pass.apply(&t))
    }

    /// The whole pipeline as one composed transform.
    pub fn as_transform(&self) -> SingleTransform {
        self.passes.iter().fold(SingleTransform::identity(), |acc, p| compose(&acc, p))
    }
}

pub fn run_pipeline(pipeline: &Pipeline, tape: &Tape) -> Result<Tape> {
    pipeline.run(tape)
}

/// Greedy layering depth; with `expand_rot` each `Rot` counts as three layers.
pub fn depth(tape: &Tape, expand_rot: bool) -> usize {
    let mut wire_depth = vec![0usize; tape.num_wires()];
    for op in tape.operations() {
        let weight = if expand_rot && op.kind == GateKind::Rot { 3 } else { 1 };
        let start = op.wires.iter().map(|&w| wire_depth[w]).max().unwrap_or(0);
        for &w in &op.wires {
            wire_depth[w] = start + weight;
        }
    }
    wire_depth.into_iter().max().unwrap_or(0)
}
