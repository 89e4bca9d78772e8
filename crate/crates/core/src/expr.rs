//! Scalar expression graphs with reverse-mode differentiation.
//!
//! Every gate parameter on a [`Tape`](crate::ir::Tape) is an [`Expr`]. Transforms
//! that combine parameters (merging rotations, fusing single-qubit runs, taking
//! adjoints) build new nodes on top of the originals, so the derivative of any
//! gate parameter with respect to the flat input vector is always recoverable
//! with [`Expr::backprop`].
//!
//! Nodes are reference counted and immutable. Subgraphs may be shared freely;
//! evaluation and backprop visit each distinct node once.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

/// Errors raised while evaluating or differentiating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("input index {index} out of range for {len} inputs")]
    InputOutOfRange { index: usize, len: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op} is not defined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("{op} is not differentiable at {value}")]
    NotDifferentiable { op: &'static str, value: f64 },
}

/// The node kinds an expression graph is built from.
#[derive(Debug, Clone)]
pub enum ExprKind {
    Input(usize),
    Const(f64),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Sqrt(Expr),
    Sin(Expr),
    Cos(Expr),
    /// `atan2(y, x)`, with `atan2(0, 0) = 0`.
    Atan2(Expr, Expr),
    Acos(Expr),
    Square(Expr),
}

impl ExprKind {
    /// Direct operands, left to right.
    pub fn children(&self) -> impl Iterator<Item = &Expr> + '_ {
        use ExprKind::*;
        match self {
            Input(_) | Const(_) => ChildIter([None, None], 0),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Atan2(a, b) => {
                ChildIter([Some(a), Some(b)], 0)
            }
            Neg(a) | Sqrt(a) | Sin(a) | Cos(a) | Acos(a) | Square(a) => ChildIter([Some(a), None], 0),
        }
    }
}

struct ChildIter<'a>([Option<&'a Expr>; 2], usize);

impl<'a> Iterator for ChildIter<'a> {
    type Item = &'a Expr;

    fn next(&mut self) -> Option<&'a Expr> {
        while self.1 < 2 {
            let item = self.0[self.1];
            self.1 += 1;
            if item.is_some() {
                return item;
            }
        }
        None
    }
}

/// A node in an immutable scalar expression graph.
#[derive(Clone)]
pub struct Expr(Arc<ExprKind>);

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr(Arc::new(kind))
    }

    pub fn input(index: usize) -> Self {
        Self::new(ExprKind::Input(index))
    }

    pub fn constant(value: f64) -> Self {
        Self::new(ExprKind::Const(value))
    }

    pub fn kind(&self) -> &ExprKind {
        &self.0
    }

    pub fn sqrt(&self) -> Self {
        Self::new(ExprKind::Sqrt(self.clone()))
    }

    pub fn sin(&self) -> Self {
        Self::new(ExprKind::Sin(self.clone()))
    }

    pub fn cos(&self) -> Self {
        Self::new(ExprKind::Cos(self.clone()))
    }

    pub fn acos(&self) -> Self {
        Self::new(ExprKind::Acos(self.clone()))
    }

    pub fn square(&self) -> Self {
        Self::new(ExprKind::Square(self.clone()))
    }

    /// `atan2(self, x)`: the angle of the point `(x, self)`.
    pub fn atan2(&self, x: &Expr) -> Self {
        Self::new(ExprKind::Atan2(self.clone(), x.clone()))
    }

    /// Returns the value if this node is a literal constant.
    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            ExprKind::Const(v) => Some(v),
            _ => None,
        }
    }

    /// True when the two handles point at the same node.
    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Identity of the underlying node; equal for handles that share it.
    pub fn node_id(&self) -> usize {
        self.id() as usize
    }

    fn id(&self) -> *const ExprKind {
        Arc::as_ptr(&self.0)
    }

    /// Distinct nodes in post-order (children before parents).
    fn post_order(&self) -> Vec<&Expr> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const ExprKind> = HashSet::new();
        let mut stack: Vec<(&Expr, bool)> = vec![(self, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !seen.insert(node.id()) {
                continue;
            }
            stack.push((node, true));
            for child in node.kind().children() {
                if !seen.contains(&child.id()) {
                    stack.push((child, false));
                }
            }
        }
        order
    }

    /// Sorted list of the input indices this expression reads.
    pub fn inputs(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .post_order()
            .into_iter()
            .filter_map(|n| match *n.0 {
                ExprKind::Input(i) => Some(i),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// True if any `Input` node is reachable.
    pub fn is_trainable(&self) -> bool {
        self.post_order().iter().any(|n| matches!(*n.0, ExprKind::Input(_)))
    }

    /// Number of distinct nodes in the graph.
    pub fn node_count(&self) -> usize {
        self.post_order().len()
    }

    pub fn evaluate(&self, inputs: &[f64]) -> Result<f64, ExprError> {
        let order = self.post_order();
        let values = forward(&order, inputs)?;
        Ok(values[order.len() - 1])
    }

    /// Returns `seed * d(self)/d(inputs[i])` for every input slot.
    ///
    /// Subgraphs that do not read any input are skipped, so singular points
    /// inside purely constant subexpressions never raise.
    pub fn backprop(&self, inputs: &[f64], seed: f64) -> Result<Vec<f64>, ExprError> {
        let order = self.post_order();
        let values = forward(&order, inputs)?;
        let index: HashMap<*const ExprKind, usize> =
            order.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();

        let mut live = vec![false; order.len()];
        for (i, node) in order.iter().enumerate() {
            live[i] = match node.kind() {
                ExprKind::Input(_) => true,
                kind => kind.children().any(|c| live[index[&c.id()]]),
            };
        }

        let mut adjoint = vec![0.0; order.len()];
        let mut grad = vec![0.0; inputs.len()];
        let last = order.len() - 1;
        adjoint[last] = seed;

        for i in (0..order.len()).rev() {
            if !live[i] {
                continue;
            }
            let adj = adjoint[i];
            let val = |e: &Expr| values[index[&e.id()]];
            let mut push = |e: &Expr, d: f64| {
                let j = index[&e.id()];
                if live[j] {
                    adjoint[j] += d;
                }
            };
            match order[i].kind() {
                ExprKind::Input(k) => grad[*k] += adj,
                ExprKind::Const(_) => {}
                ExprKind::Add(a, b) => {
                    push(a, adj);
                    push(b, adj);
                }
                ExprKind::Sub(a, b) => {
                    push(a, adj);
                    push(b, -adj);
                }
                ExprKind::Mul(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    push(a, adj * vb);
                    push(b, adj * va);
                }
                ExprKind::Div(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    push(a, adj / vb);
                    push(b, -adj * va / (vb * vb));
                }
                ExprKind::Neg(a) => push(a, -adj),
                ExprKind::Sqrt(a) => {
                    let va = val(a);
                    if va <= 0.0 {
                        return Err(ExprError::NotDifferentiable { op: "sqrt", value: va });
                    }
                    push(a, adj * 0.5 / va.sqrt());
                }
                ExprKind::Sin(a) => push(a, adj * val(a).cos()),
                ExprKind::Cos(a) => push(a, -adj * val(a).sin()),
                ExprKind::Atan2(y, x) => {
                    let (vy, vx) = (val(y), val(x));
                    let r2 = vx * vx + vy * vy;
                    if r2 == 0.0 {
                        return Err(ExprError::NotDifferentiable { op: "atan2", value: 0.0 });
                    }
                    push(y, adj * vx / r2);
                    push(x, -adj * vy / r2);
                }
                ExprKind::Acos(a) => {
                    let va = val(a);
                    if va.abs() >= 1.0 {
                        return Err(ExprError::NotDifferentiable { op: "acos", value: va });
                    }
                    push(a, -adj / (1.0 - va * va).sqrt());
                }
                ExprKind::Square(a) => push(a, 2.0 * adj * val(a)),
            }
        }
        Ok(grad)
    }
}

fn forward(order: &[&Expr], inputs: &[f64]) -> Result<Vec<f64>, ExprError> {
    let index: HashMap<*const ExprKind, usize> =
        order.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();
    let mut values: Vec<f64> = Vec::with_capacity(order.len());
    for node in order {
        let val = |e: &Expr| values[index[&e.id()]];
        let v = match node.kind() {
            ExprKind::Input(i) => *inputs
                .get(*i)
                .ok_or(ExprError::InputOutOfRange { index: *i, len: inputs.len() })?,
            ExprKind::Const(c) => *c,
            ExprKind::Add(a, b) => val(a) + val(b),
            ExprKind::Sub(a, b) => val(a) - val(b),
            ExprKind::Mul(a, b) => val(a) * val(b),
            ExprKind::Div(a, b) => {
                let d = val(b);
                if d == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                val(a) / d
            }
            ExprKind::Neg(a) => -val(a),
            ExprKind::Sqrt(a) => {
                let x = val(a);
                if x < 0.0 {
                    return Err(ExprError::Domain { op: "sqrt", value: x });
                }
                x.sqrt()
            }
            ExprKind::Sin(a) => val(a).sin(),
            ExprKind::Cos(a) => val(a).cos(),
            ExprKind::Atan2(y, x) => {
                let (vy, vx) = (val(y), val(x));
                if vy == 0.0 && vx == 0.0 {
                    0.0
                } else {
                    vy.atan2(vx)
                }
            }
            ExprKind::Acos(a) => {
                let x = val(a);
                if !(-1.0..=1.0).contains(&x) {
                    return Err(ExprError::Domain { op: "acos", value: x });
                }
                x.acos()
            }
            ExprKind::Square(a) => {
                let x = val(a);
                x * x
            }
        };
        values.push(v);
    }
    Ok(values)
}

impl PartialEq for Expr {
    /// Structural equality. Shared subgraphs are compared once.
    fn eq(&self, other: &Self) -> bool {
        let mut proven: HashSet<(*const ExprKind, *const ExprKind)> = HashSet::new();
        structural_eq(self, other, &mut proven)
    }
}

fn structural_eq(
    a: &Expr,
    b: &Expr,
    proven: &mut HashSet<(*const ExprKind, *const ExprKind)>,
) -> bool {
    if a.ptr_eq(b) || proven.contains(&(a.id(), b.id())) {
        return true;
    }
    use ExprKind::*;
    let same = match (a.kind(), b.kind()) {
        (Input(i), Input(j)) => i == j,
        (Const(x), Const(y)) => x.to_bits() == y.to_bits(),
        (Add(a1, a2), Add(b1, b2))
        | (Sub(a1, a2), Sub(b1, b2))
        | (Mul(a1, a2), Mul(b1, b2))
        | (Div(a1, a2), Div(b1, b2))
        | (Atan2(a1, a2), Atan2(b1, b2)) => {
            structural_eq(a1, b1, proven) && structural_eq(a2, b2, proven)
        }
        (Neg(x), Neg(y))
        | (Sqrt(x), Sqrt(y))
        | (Sin(x), Sin(y))
        | (Cos(x), Cos(y))
        | (Acos(x), Acos(y))
        | (Square(x), Square(y)) => structural_eq(x, y, proven),
        _ => false,
    };
    if same {
        proven.insert((a.id(), b.id()));
    }
    same
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

/// Binding strength used when printing, higher binds tighter.
fn precedence(kind: &ExprKind) -> u8 {
    match kind {
        ExprKind::Add(..) | ExprKind::Sub(..) => 1,
        ExprKind::Mul(..) | ExprKind::Div(..) => 2,
        ExprKind::Neg(_) => 3,
        // A negative literal prints with a leading minus and must be wrapped
        // wherever a unary operand is expected.
        ExprKind::Const(v) if v.is_sign_negative() => 3,
        _ => 4,
    }
}

impl fmt::Display for Expr {
    /// Infix form accepted by the circuit-file expression parser.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_infix(self, f, &mut |_e, _f| Ok(false))
    }
}

/// Writes `expr` in infix notation. `hook` may print a node itself (for
/// example as a named reference) and return `true` to skip the default.
pub fn write_infix<W: fmt::Write>(
    expr: &Expr,
    out: &mut W,
    hook: &mut dyn FnMut(&Expr, &mut W) -> Result<bool, fmt::Error>,
) -> fmt::Result {
    if hook(expr, out)? {
        return Ok(());
    }
    let wrap = |out: &mut W, child: &Expr, min: u8, hook: &mut dyn FnMut(&Expr, &mut W) -> Result<bool, fmt::Error>| -> fmt::Result {
        if precedence(child.kind()) < min {
            out.write_char('(')?;
            write_infix(child, out, hook)?;
            out.write_char(')')
        } else {
            write_infix(child, out, hook)
        }
    };
    let func = |out: &mut W, name: &str, args: &[&Expr], hook: &mut dyn FnMut(&Expr, &mut W) -> Result<bool, fmt::Error>| -> fmt::Result {
        write!(out, "{name}(")?;
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                out.write_str(", ")?;
            }
            write_infix(a, out, hook)?;
        }
        out.write_char(')')
    };
    match expr.kind() {
        ExprKind::Input(i) => write!(out, "${i}"),
        ExprKind::Const(v) => write!(out, "{v:?}"),
        ExprKind::Add(a, b) | ExprKind::Sub(a, b) | ExprKind::Mul(a, b) | ExprKind::Div(a, b) => {
            let (sym, p) = match expr.kind() {
                ExprKind::Add(..) => (" + ", 1),
                ExprKind::Sub(..) => (" - ", 1),
                ExprKind::Mul(..) => (" * ", 2),
                _ => (" / ", 2),
            };
            wrap(out, a, p, hook)?;
            out.write_str(sym)?;
            wrap(out, b, p + 1, hook)
        }
        ExprKind::Neg(a) => {
            out.write_char('-')?;
            // Literals always get parentheses so `-(0.5)` stays a negation node.
            if a.as_const().is_some() {
                out.write_char('(')?;
                write_infix(a, out, hook)?;
                out.write_char(')')
            } else {
                wrap(out, a, 4, hook)
            }
        }
        ExprKind::Sqrt(a) => func(out, "sqrt", &[a], hook),
        ExprKind::Sin(a) => func(out, "sin", &[a], hook),
        ExprKind::Cos(a) => func(out, "cos", &[a], hook),
        ExprKind::Acos(a) => func(out, "acos", &[a], hook),
        ExprKind::Square(a) => func(out, "square", &[a], hook),
        ExprKind::Atan2(y, x) => func(out, "atan2", &[y, x], hook),
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::new(ExprKind::$variant(self, rhs))
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::new(ExprKind::$variant(self.clone(), rhs.clone()))
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::new(ExprKind::$variant(self, rhs.clone()))
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::new(ExprKind::$variant(self.clone(), rhs))
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::new(ExprKind::$variant(self, Expr::constant(rhs)))
            }
        }
        impl ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::new(ExprKind::$variant(self.clone(), Expr::constant(rhs)))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(ExprKind::Neg(self))
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(ExprKind::Neg(self.clone()))
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(e: &Expr, x: &[f64], i: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (e.evaluate(&xp).unwrap() - e.evaluate(&xm).unwrap()) / (2.0 * h)
    }

    #[test]
    fn evaluates_basic_nodes() {
        let sum = Expr::input(0) + Expr::input(1);
        assert!((sum.evaluate(&[0.1, 0.2]).unwrap() - 0.3).abs() < 1e-15);
        let root = Expr::input(0).sqrt();
        assert!((root.evaluate(&[0.3]).unwrap() - 0.547_722_557_505_166).abs() < 1e-12);
        assert_eq!(Expr::constant(5.0).evaluate(&[]).unwrap(), 5.0);
    }

    #[test]
    fn backprop_basic_nodes() {
        let sum = Expr::input(0) + Expr::input(1);
        assert_eq!(sum.backprop(&[0.1, 0.2], 1.0).unwrap(), vec![1.0, 1.0]);
        assert!(Expr::constant(5.0).backprop(&[], 1.0).unwrap().is_empty());

        let root = Expr::input(0).sqrt();
        let oracle = central_diff(&root, &[0.3], 0, 1e-6);
        let g = root.backprop(&[0.3], 1.0).unwrap();
        assert!((g[0] - oracle).abs() < 1e-8);
        assert!((g[0] - 0.912_871).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            Expr::input(3).evaluate(&[1.0]),
            Err(ExprError::InputOutOfRange { index: 3, len: 1 })
        ));
        assert!(matches!(Expr::input(0).sqrt().evaluate(&[-1.0]), Err(ExprError::Domain { .. })));
        assert!(matches!(Expr::input(0).acos().evaluate(&[1.5]), Err(ExprError::Domain { .. })));
        assert_eq!((Expr::input(0) / Expr::input(1)).evaluate(&[1.0, 0.0]), Err(ExprError::DivisionByZero));
        // Evaluable but not differentiable.
        assert!(matches!(
            Expr::input(0).sqrt().backprop(&[0.0], 1.0),
            Err(ExprError::NotDifferentiable { op: "sqrt", .. })
        ));
        assert!(matches!(
            Expr::input(0).acos().backprop(&[1.0], 1.0),
            Err(ExprError::NotDifferentiable { op: "acos", .. })
        ));
        let at = Expr::input(0).atan2(&Expr::input(1));
        assert_eq!(at.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(at.backprop(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn constant_subgraphs_skip_singularities() {
        let singular = Expr::constant(0.0).atan2(&Expr::constant(0.0));
        let e = singular + Expr::input(0);
        assert_eq!(e.backprop(&[0.4], 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn shared_children_accumulate() {
        let x = Expr::input(0);
        let y = &x * &x; // shared child
        let z = &y + &y;
        assert_eq!(z.node_count(), 3);
        let g = z.backprop(&[3.0], 1.0).unwrap();
        assert!((g[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn deep_sharing_is_linear() {
        let mut e = Expr::input(0);
        for _ in 0..200 {
            e = (&e * &e).sin() + &e;
        }
        assert!(e.node_count() < 1000);
        assert!(e.evaluate(&[0.1]).unwrap().is_finite());
        assert_eq!(e.backprop(&[0.1], 1.0).unwrap().len(), 1);
    }

    #[test]
    fn double_negation_is_exact() {
        let e = (Expr::input(0) * 1.7).sin();
        let nn = -(-e.clone());
        assert_eq!(nn.evaluate(&[0.3]).unwrap(), e.evaluate(&[0.3]).unwrap());
    }

    #[test]
    fn display_round_trips_through_sign_rules() {
        let e = -Expr::constant(0.3);
        assert_eq!(e.to_string(), "-(0.3)");
        assert_eq!(Expr::constant(-0.3).to_string(), "-0.3");
        let e = (Expr::input(0) + Expr::input(1)) * Expr::input(2) - (Expr::input(0) - Expr::input(1));
        assert_eq!(e.to_string(), "($0 + $1) * $2 - ($0 - $1)");
        let e = Expr::input(0) * Expr::constant(-2.0);
        assert_eq!(e.to_string(), "$0 * -2.0");
    }

    #[test]
    fn structural_equality() {
        let a = (Expr::input(0) + 1.0).sqrt();
        let b = (Expr::input(0) + 1.0).sqrt();
        assert_eq!(a, b);
        assert_ne!(a, (Expr::input(1) + 1.0).sqrt());
        assert_eq!(a.inputs(), vec![0]);
        assert!(a.is_trainable());
        assert!(!Expr::constant(2.0).sin().is_trainable());
    }
}
