//! Execution traces: visited iteration points and buffer accesses.

use super::exec::{run_function, Observer};
use super::value::Dense;
use crate::error::{Error, Result};
use crate::ir::{Module, OpId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointVisit {
    pub op: OpId,
    pub point: Vec<i64>,
    /// Enclosing `scf.for` induction values, outermost first.
    pub loops: Vec<(OpId, i64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemEvent {
    pub op: OpId,
    pub alloc: usize,
    pub offset: i64,
    pub write: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecTrace {
    pub visits: Vec<PointVisit>,
    pub mem: Vec<MemEvent>,
    /// Accesses outside a buffer; these abort execution, so a completed run reports zero.
    pub oob_reads: usize,
    pub oob_writes: usize,
    loop_stack: Vec<(OpId, i64)>,
}

impl Observer for ExecTrace {
    fn on_loop_enter(&mut self, op: OpId) {
        self.loop_stack.push((op, 0));
    }
    fn on_loop_iter(&mut self, _op: OpId, iv: i64) {
        if let Some(top) = self.loop_stack.last_mut() {
            top.1 = iv;
        }
    }
    fn on_loop_exit(&mut self, _op: OpId) {
        self.loop_stack.pop();
    }
    fn on_point(&mut self, op: OpId, point: &[i64]) {
        self.visits.push(PointVisit { op, point: point.to_vec(), loops: self.loop_stack.clone() });
    }
    fn on_mem(&mut self, op: OpId, alloc: usize, offset: i64, write: bool) {
        self.mem.push(MemEvent { op, alloc, offset, write });
    }
}

pub fn run_traced(m: &Module, name: &str, inputs: &[Dense]) -> Result<(Vec<Dense>, ExecTrace)> {
    let f = m.function(name).ok_or_else(|| Error::Runtime(format!("no function @{name}")))?;
    let mut t = ExecTrace::default();
    let out = run_function(f, inputs, Some(&mut t))?;
    Ok((out, t))
}
