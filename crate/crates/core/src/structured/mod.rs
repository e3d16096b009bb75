//! Structured operations: indexing maps, iterator kinds and iteration domains.

pub mod domain;
pub mod fm;
pub mod named;

use crate::ir::{Attr, BlockId, Function, IndexingMap, OpId, ValueId};

pub use domain::{derive_iteration_domain, enumerate_domain, IterationDomain};
pub use named::{build_generic, make_named_op, materialize_named};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IteratorKind {
    Parallel,
    Reduction,
}

impl IteratorKind {
    pub fn name(self) -> &'static str {
        match self {
            IteratorKind::Parallel => "parallel",
            IteratorKind::Reduction => "reduction",
        }
    }
}

pub fn encode_iterators(its: &[IteratorKind]) -> Attr {
    Attr::Str(its.iter().map(|i| i.name()).collect::<Vec<_>>().join(","))
}

pub fn decode_iterators(s: &str) -> Vec<IteratorKind> {
    s.split(',')
        .filter(|x| !x.is_empty())
        .map(|x| if x == "reduction" { IteratorKind::Reduction } else { IteratorKind::Parallel })
        .collect()
}

/// Read-only view over `linalg.generic` or a named structured op.
#[derive(Debug, Clone)]
pub struct StructuredView {
    pub op: OpId,
    pub inputs: Vec<ValueId>,
    pub outputs: Vec<ValueId>,
    pub maps: Vec<IndexingMap>,
    pub iterators: Vec<IteratorKind>,
    pub body: BlockId,
}

impl StructuredView {
    pub fn new(f: &Function, op: OpId) -> StructuredView {
        let d = f.op(op);
        let n_in = d.int_attr("n_inputs").unwrap_or(0) as usize;
        StructuredView {
            op,
            inputs: d.operands[..n_in].to_vec(),
            outputs: d.operands[n_in..].to_vec(),
            maps: d.attr("indexing_maps").and_then(|a| a.as_maps()).unwrap_or(&[]).to_vec(),
            iterators: decode_iterators(d.str_attr("iterator_types").unwrap_or("")),
            body: d.regions[0],
        }
    }

    pub fn operands(&self) -> Vec<ValueId> {
        let mut v = self.inputs.clone();
        v.extend(&self.outputs);
        v
    }

    pub fn n_iters(&self) -> usize {
        self.iterators.len()
    }

    pub fn output_maps(&self) -> &[IndexingMap] {
        &self.maps[self.inputs.len()..]
    }
}
