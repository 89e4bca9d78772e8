//! TOML circuit files.
//!
//! ```toml
//! wires = 2
//! inputs = 1
//! defs = ["sin($0)"]          # optional shared subexpressions, `%0`, `%1`, ...
//!
//! [[ops]]
//! gate = "RX"
//! wires = [0]
//! params = ["%0 * 2"]
//!
//! [[measurements]]
//! type = "expval"
//! observable = "Z0 Z1"
//! ```
//!
//! Measurement types are `expval` (`observable`), `hamiltonian`
//! (`coeffs` and `observables`) and `probs` (`wires`).

use std::collections::HashMap;
use std::ops::Range;

use qtape::expr::{write_infix, Expr};
use qtape::{GateKind, Hamiltonian, Measurement, Operation, PauliWord, Tape};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::expr_parse::parse_expr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn locate(text: &str, offset: usize, message: impl Into<String>) -> FormatError {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    FormatError { line, column, message: message.into() }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCircuit {
    wires: usize,
    inputs: usize,
    #[serde(default)]
    defs: Vec<Spanned<RawParam>>,
    #[serde(default)]
    ops: Vec<Spanned<RawOp>>,
    #[serde(default)]
    measurements: Vec<Spanned<RawMeasurement>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOp {
    gate: Spanned<String>,
    wires: Spanned<Vec<usize>>,
    #[serde(default)]
    params: Vec<Spanned<RawParam>>,
    #[serde(default)]
    adjoint: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawParam {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasurement {
    #[serde(rename = "type")]
    kind: Spanned<String>,
    observable: Option<Spanned<String>>,
    coeffs: Option<Vec<f64>>,
    observables: Option<Vec<Spanned<String>>>,
    wires: Option<Vec<usize>>,
}

fn gate_by_name(name: &str) -> Option<GateKind> {
    GateKind::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
}

struct Reader<'a> {
    text: &'a str,
    num_inputs: usize,
    defs: Vec<Expr>,
}

impl Reader<'_> {
    fn err(&self, span: Range<usize>, msg: impl Into<String>) -> FormatError {
        locate(self.text, span.start, msg)
    }

    fn param(&self, raw: &Spanned<RawParam>) -> Result<Expr, FormatError> {
        match raw.get_ref() {
            RawParam::Int(v) => Ok(Expr::constant(*v as f64)),
            RawParam::Float(v) => Ok(Expr::constant(*v)),
            RawParam::Text(src) => parse_expr(src, self.num_inputs, &self.defs).map_err(|e| {
                // Point inside the quoted string when the value is a plain basic string.
                let inner = raw.span().start + 1 + e.pos;
                locate(self.text, inner, format!("in expression `{src}`: {}", e.msg))
            }),
        }
    }

    fn measurement(&self, raw: &Spanned<RawMeasurement>) -> Result<Measurement, FormatError> {
        let m = raw.get_ref();
        let at = |msg: String| self.err(m.kind.span(), msg);
        let word = |s: &Spanned<String>| -> Result<PauliWord, FormatError> {
            s.get_ref().parse().map_err(|e| self.err(s.span(), format!("bad observable `{}`: {e}", s.get_ref())))
        };
        match m.kind.get_ref().to_ascii_lowercase().as_str() {
            "expval" => {
                let obs = m.observable.as_ref().ok_or_else(|| at("expval needs an `observable`".into()))?;
                Ok(Measurement::Expval(word(obs)?))
            }
            "hamiltonian" => {
                let coeffs = m.coeffs.as_ref().ok_or_else(|| at("hamiltonian needs `coeffs`".into()))?;
                let words = m.observables.as_ref().ok_or_else(|| at("hamiltonian needs `observables`".into()))?;
                if coeffs.len() != words.len() {
                    return Err(at(format!("{} coefficient(s) but {} observable(s)", coeffs.len(), words.len())));
                }
                let terms = coeffs.iter().zip(words).map(|(&c, w)| Ok((c, word(w)?))).collect::<Result<_, _>>()?;
                Hamiltonian::new(terms).map(Measurement::ExpvalHamiltonian).map_err(|e| at(e.to_string()))
            }
            "probs" => Ok(Measurement::Probs(m.wires.clone().ok_or_else(|| at("probs needs `wires`".into()))?)),
            other => Err(at(format!("unknown measurement type `{other}`"))),
        }
    }
}

/// Parses a circuit file, reporting the line and column of the first problem.
pub fn parse_circuit(text: &str) -> Result<Tape, FormatError> {
    let raw: RawCircuit = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        locate(text, offset, e.message().to_string())
    })?;
    let mut reader = Reader { text, num_inputs: raw.inputs, defs: Vec::new() };
    for d in &raw.defs {
        let e = reader.param(d)?;
        reader.defs.push(e);
    }
    let mut ops = Vec::with_capacity(raw.ops.len());
    for op in &raw.ops {
        let op = op.get_ref();
        let name = op.gate.get_ref();
        let kind = gate_by_name(name).ok_or_else(|| reader.err(op.gate.span(), format!("unknown gate `{name}`")))?;
        if let Some(&w) = op.wires.get_ref().iter().find(|&&w| w >= raw.wires) {
            return Err(reader.err(op.wires.span(), format!("wire {w} out of range ({} wires)", raw.wires)));
        }
        let params = op.params.iter().map(|p| reader.param(p)).collect::<Result<Vec<_>, _>>()?;
        let built = Operation::with_adjoint(kind, op.wires.get_ref().clone(), params, op.adjoint)
            .map_err(|e| reader.err(op.gate.span(), e.to_string()))?;
        ops.push(built);
    }
    let mut measurements = Vec::with_capacity(raw.measurements.len());
    for m in &raw.measurements {
        let parsed = reader.measurement(m)?;
        if let Some(&w) = parsed.wires().iter().find(|&&w| w >= raw.wires) {
            return Err(reader.err(m.span(), format!("measured wire {w} out of range ({} wires)", raw.wires)));
        }
        measurements.push(parsed);
    }
    Tape::new(raw.wires, raw.inputs, ops, measurements).map_err(|e| locate(text, 0, e.to_string()))
}

#[derive(Serialize)]
struct OutCircuit {
    wires: usize,
    inputs: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    defs: Vec<String>,
    ops: Vec<OutOp>,
    measurements: Vec<OutMeasurement>,
}

#[derive(Serialize)]
struct OutOp {
    gate: &'static str,
    wires: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    params: Vec<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    adjoint: bool,
}

#[derive(Serialize, Default)]
struct OutMeasurement {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    observable: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observables: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wires: Option<Vec<usize>>,
}

/// Shared non-leaf nodes become named definitions so that fused circuits,
/// whose angles reuse subexpressions heavily, stay linear in size.
struct Definitions {
    names: HashMap<usize, usize>,
    texts: Vec<String>,
}

impl Definitions {
    fn collect(tape: &Tape) -> Self {
        let roots: Vec<&Expr> = tape.operations().iter().flat_map(|op| &op.params).collect();
        let mut uses: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<Expr> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for root in &roots {
            *uses.entry(root.node_id()).or_default() += 1;
            // Iterative post-order over distinct nodes.
            let mut stack = vec![((*root).clone(), false)];
            while let Some((node, expanded)) = stack.pop() {
                if expanded {
                    order.push(node);
                    continue;
                }
                if !seen.insert(node.node_id()) {
                    continue;
                }
                for child in node.kind().children() {
                    *uses.entry(child.node_id()).or_default() += 1;
                }
                stack.push((node.clone(), true));
                let children: Vec<Expr> = node.kind().children().cloned().collect();
                for child in children.into_iter().rev() {
                    stack.push((child, false));
                }
            }
        }
        let mut defs = Definitions { names: HashMap::new(), texts: Vec::new() };
        for node in order {
            let shared = uses.get(&node.node_id()).copied().unwrap_or(0) > 1;
            if shared && node.kind().children().next().is_some() {
                let text = defs.render(&node, true);
                defs.names.insert(node.node_id(), defs.texts.len());
                defs.texts.push(text);
            }
        }
        defs
    }

    fn render(&self, expr: &Expr, skip_root: bool) -> String {
        let root = expr.node_id();
        let mut out = String::new();
        write_infix(expr, &mut out, &mut |e, out| {
            if skip_root && e.node_id() == root {
                return Ok(false);
            }
            match self.names.get(&e.node_id()) {
                Some(k) => {
                    use std::fmt::Write;
                    write!(out, "%{k}")?;
                    Ok(true)
                }
                None => Ok(false),
            }
        })
        .expect("writing to a String cannot fail");
        out
    }
}

/// Serializes a tape; [`parse_circuit`] of the result reproduces it exactly.
pub fn serialize_circuit(tape: &Tape) -> String {
    let defs = Definitions::collect(tape);
    let ops = tape
        .operations()
        .iter()
        .map(|op| OutOp {
            gate: op.kind.name(),
            wires: op.wires.clone(),
            params: op.params.iter().map(|p| defs.render(p, false)).collect(),
            adjoint: op.adjoint,
        })
        .collect();
    let measurements = tape
        .measurements()
        .iter()
        .map(|m| match m {
            Measurement::Expval(w) => OutMeasurement { kind: "expval", observable: Some(w.to_string()), ..Default::default() },
            Measurement::ExpvalHamiltonian(h) => OutMeasurement {
                kind: "hamiltonian",
                coeffs: Some(h.terms().iter().map(|t| t.0).collect()),
                observables: Some(h.terms().iter().map(|t| t.1.to_string()).collect()),
                ..Default::default()
            },
            Measurement::Probs(w) => OutMeasurement { kind: "probs", wires: Some(w.clone()), ..Default::default() },
        })
        .collect();
    let out = OutCircuit {
        wires: tape.num_wires(),
        inputs: tape.num_inputs(),
        defs: defs.texts,
        ops,
        measurements,
    };
    toml::to_string(&out).expect("circuit documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
wires = 1
inputs = 1

[[ops]]
gate = "rx"
wires = [0]
params = ["$0"]

[[measurements]]
type = "expval"
observable = "Z0"
"#;

    #[test]
    fn minimal_file() {
        let tape = parse_circuit(MINIMAL).unwrap();
        assert_eq!(tape.operations().len(), 1);
        assert_eq!(tape.operations()[0].kind, GateKind::RX);
        assert_eq!(tape.operations()[0].params[0], Expr::input(0));
        assert_eq!(parse_circuit(&serialize_circuit(&tape)).unwrap(), tape);
    }

    #[test]
    fn unknown_gate_is_located() {
        let text = MINIMAL.replace("\"rx\"", "\"foo\"");
        let e = parse_circuit(&text).unwrap_err();
        assert!(e.message.contains("foo"), "{e}");
        assert_eq!((e.line, e.column), (6, 8));
    }

    #[test]
    fn expression_errors_point_into_the_string() {
        let text = MINIMAL.replace("\"$0\"", "\"$0 + bar($0)\"");
        let e = parse_circuit(&text).unwrap_err();
        assert_eq!((e.line, e.column), (8, 17), "{e}");
    }

    #[test]
    fn structural_errors() {
        let cases = [
            MINIMAL.replace("wires = [0]", "wires = [3]"),
            MINIMAL.replace("params = [\"$0\"]", "params = []"),
            MINIMAL.replace("\"$0\"", "\"$1\""),
            MINIMAL.replace("\"Z0\"", "\"Q0\""),
            MINIMAL.replace("\"Z0\"", "\"Z4\""),
            MINIMAL.replace("\"expval\"", "\"variance\""),
            MINIMAL.replace("wires = 1", "wires = \"one\""),
            MINIMAL.replace("gate = ", "color = "),
        ];
        for text in cases {
            assert!(parse_circuit(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn numeric_params_and_sharing() {
        let text = r#"
wires = 1
inputs = 2
defs = ["$0 + $1", "sin(%0)"]

[[ops]]
gate = "Rot"
wires = [0]
params = [0.5, 2, "%1 * %0"]

[[ops]]
gate = "S"
wires = [0]
adjoint = true
"#;
        let tape = parse_circuit(text).unwrap();
        let p = &tape.operations()[0].params;
        assert_eq!(p[1], Expr::constant(2.0));
        let sum = Expr::input(0) + Expr::input(1);
        assert_eq!(p[2], sum.sin() * sum.clone());
        assert!(tape.operations()[1].adjoint);
        let text = serialize_circuit(&tape);
        assert!(text.contains("defs"), "{text}");
        assert_eq!(parse_circuit(&text).unwrap(), tape);
    }

    #[test]
    fn deep_sharing_stays_small() {
        let mut e = Expr::input(0);
        for _ in 0..60 {
            e = &e * &e.sin();
        }
        let tape = Tape::builder(1, 1).rx(0, e).build().unwrap();
        let text = serialize_circuit(&tape);
        assert!(text.len() < 10_000, "{} bytes", text.len());
        assert_eq!(parse_circuit(&text).unwrap(), tape);
    }
}
