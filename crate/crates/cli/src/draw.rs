//! Text rendering of circuits, one line per wire.

use qtape::{GateKind, Measurement, Operation, Tape};

use crate::fmt_sig;

fn values(op: &Operation, inputs: &[f64]) -> String {
    let vals: Vec<String> = op
        .params
        .iter()
        .map(|p| p.evaluate(inputs).map_or_else(|_| "?".to_string(), |v| fmt_sig(v, 4)))
        .collect();
    if vals.is_empty() {
        String::new()
    } else {
        format!("({})", vals.join(", "))
    }
}

/// Label of `op` on each of its wires.
fn labels(op: &Operation, inputs: &[f64]) -> Vec<String> {
    match op.kind {
        GateKind::CNOT => vec!["●".into(), "⊕".into()],
        GateKind::CZ => vec!["●".into(), "●".into()],
        kind => {
            let dagger = if op.adjoint { "†" } else { "" };
            let label = format!("{}{dagger}{}", kind.name(), values(op, inputs));
            vec![label; op.wires.len()]
        }
    }
}

fn measurement_label(m: &Measurement) -> String {
    match m {
        Measurement::Expval(w) => format!("<{w}>"),
        Measurement::ExpvalHamiltonian(_) => "<H>".into(),
        Measurement::Probs(_) => "Probs".into(),
    }
}

/// Draws `tape` with parameters evaluated at `inputs`, e.g.
/// `0: --RX(-0.6)--S--| Probs`. Operations share a column when their wire
/// spans do not overlap; multi-wire operations are vertically aligned.
pub fn draw(tape: &Tape, inputs: &[f64]) -> String {
    let n = tape.num_wires();
    // columns[c][w] holds the cell text, None for an idle wire.
    let mut columns: Vec<Vec<Option<String>>> = Vec::new();
    let mut next_free = vec![0usize; n];
    for op in tape.operations() {
        let lo = *op.wires.iter().min().expect("operations act on wires");
        let hi = *op.wires.iter().max().expect("operations act on wires");
        let col = (lo..=hi).map(|w| next_free[w]).max().unwrap_or(0);
        if col == columns.len() {
            columns.push(vec![None; n]);
        }
        for (w, label) in op.wires.iter().zip(labels(op, inputs)) {
            columns[col][*w] = Some(label);
        }
        for w in lo..=hi {
            if columns[col][w].is_none() {
                columns[col][w] = Some("│".into());
            }
            next_free[w] = col + 1;
        }
    }
    let mut tails = vec![Vec::new(); n];
    for m in tape.measurements() {
        for w in m.wires() {
            tails[w].push(measurement_label(m));
        }
    }
    let widths: Vec<usize> =
        columns.iter().map(|c| c.iter().flatten().map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let label_width = n.saturating_sub(1).to_string().len();
    let mut lines = Vec::with_capacity(n);
    for w in 0..n {
        let mut line = format!("{w:>label_width$}: ");
        for (col, width) in columns.iter().zip(&widths) {
            line.push_str("--");
            let cell = col[w].as_deref().unwrap_or("");
            line.push_str(cell);
            line.push_str(&"-".repeat(width - cell.chars().count()));
        }
        line.push_str("--|");
        if !tails[w].is_empty() {
            line.push(' ');
            line.push_str(&tails[w].join(", "));
        }
        lines.push(line);
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use qtape::Expr;

    #[test]
    fn single_wire_chain() {
        let tape = Tape::builder(1, 1)
            .rx(0, Expr::input(0))
            .op(GateKind::AmplitudeDamping, &[0], vec![Expr::constant(0.05)])
            .s(0)
            .op(GateKind::AmplitudeDamping, &[0], vec![Expr::constant(0.05)])
            .measure(Measurement::Probs(vec![0]))
            .build()
            .unwrap();
        assert_eq!(
            draw(&tape, &[-0.6]),
            "0: --RX(-0.6)--AmplitudeDamping(0.05)--S--AmplitudeDamping(0.05)--| Probs"
        );
    }

    #[test]
    fn empty_tape() {
        let tape = Tape::builder(1, 0).measure(Measurement::Probs(vec![0])).build().unwrap();
        assert_eq!(draw(&tape, &[]), "0: --| Probs");
    }

    #[test]
    fn controlled_gates_align() {
        let tape = Tape::builder(3, 0).h(0).cnot(0, 2).rx(1, 0.25).build().unwrap();
        let text = draw(&tape, &[]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "0: --H--●------------|");
        assert_eq!(lines[1], "1: -----│--RX(0.25)--|");
        assert_eq!(lines[2], "2: -----⊕------------|");
    }
}
