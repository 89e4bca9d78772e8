//! Command-line front-end for qtape: circuit files, drawing, resource
//! reports and the subcommands behind the `qtape` binary.

pub mod commands;
pub mod draw;
mod expr_parse;
pub mod format;
pub mod specs;

pub use expr_parse::{parse_expr, ParseError};
pub use format::{parse_circuit, serialize_circuit, FormatError};

/// `v` rounded to `digits` significant digits, printed in its shortest
/// round-trip form (`1.0`, `-0.6`, `1e-7`).
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v).parse().expect("valid float");
    // Avoid printing a negative zero.
    format!("{:?}", if rounded == 0.0 { 0.0 } else { rounded })
}

/// Eight significant digits, the precision of all numeric CLI output.
pub fn fmt_num(v: f64) -> String {
    fmt_sig(v, 8)
}

/// `[a, b, c]` with [`fmt_num`] entries.
pub fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fmt_num(x)).collect();
    format!("[{}]", items.join(", "))
}
