//! Resource reports.

use std::collections::BTreeMap;
use std::fmt;

use qtape::compile::depth;
use qtape::ir::collect_trainable_params;
use qtape::Tape;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Specs {
    /// Operation counts keyed by gate name.
    pub gate_counts: BTreeMap<&'static str, usize>,
    pub num_operations: usize,
    pub num_trainable_params: usize,
    pub depth: usize,
}

/// Gate counts, trainable parameters and depth; with `expand_rot` each
/// `Rot` counts as three layers.
pub fn specs(tape: &Tape, expand_rot: bool) -> Specs {
    let mut gate_counts = BTreeMap::new();
    for op in tape.operations() {
        *gate_counts.entry(op.kind.name()).or_default() += 1;
    }
    Specs {
        gate_counts,
        num_operations: tape.operations().len(),
        num_trainable_params: collect_trainable_params(tape).len(),
        depth: depth(tape, expand_rot),
    }
}

impl fmt::Display for Specs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "operations: {}", self.num_operations)?;
        writeln!(f, "trainable parameters: {}", self.num_trainable_params)?;
        writeln!(f, "depth: {}", self.depth)?;
        write!(f, "gate counts:")?;
        for (name, count) in &self.gate_counts {
            write!(f, "\n  {name}: {count}")?;
        }
        Ok(())
    }
}
