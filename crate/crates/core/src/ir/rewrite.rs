//! Greedy pattern-rewrite driver with dead-code elimination.

use std::collections::BTreeMap;

use super::func::{Function, OpId};
use super::ops::is_pure;
use crate::error::{Error, Result};

/// Upper bound on pattern applications per driver run.
pub const MAX_APPLICATIONS: usize = 10_000;

pub trait Pattern {
    fn name(&self) -> &str;
    /// Restricts matching to ops with this name.
    fn root(&self) -> Option<&str> {
        None
    }
    /// Rewrites `op` in place; returns whether the IR changed.
    fn apply(&self, f: &mut Function, op: OpId) -> Result<bool>;
}

/// Pattern built from a closure.
pub struct FnPattern<F> {
    pub name: &'static str,
    pub root: Option<&'static str>,
    pub func: F,
}

impl<F: Fn(&mut Function, OpId) -> Result<bool>> Pattern for FnPattern<F> {
    fn name(&self) -> &str {
        self.name
    }
    fn root(&self) -> Option<&str> {
        self.root
    }
    fn apply(&self, f: &mut Function, op: OpId) -> Result<bool> {
        (self.func)(f, op)
    }
}

pub fn pattern<F>(name: &'static str, root: Option<&'static str>, func: F) -> Box<dyn Pattern>
where
    F: Fn(&mut Function, OpId) -> Result<bool> + 'static,
{
    Box::new(FnPattern { name, root, func })
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RewriteStats {
    pub applications: BTreeMap<String, usize>,
    pub erased_dead: usize,
}

impl RewriteStats {
    pub fn total(&self) -> usize {
        self.applications.values().sum()
    }

    pub fn merge(&mut self, other: &RewriteStats) {
        for (k, v) in &other.applications {
            *self.applications.entry(k.clone()).or_default() += v;
        }
        self.erased_dead += other.erased_dead;
    }
}

fn live(f: &Function, op: OpId) -> bool {
    let d = f.op(op);
    !d.erased && d.parent.is_some()
}

/// Applies `patterns` until fixpoint, erasing dead pure ops between sweeps.
pub fn apply_greedily(f: &mut Function, patterns: &[Box<dyn Pattern>]) -> Result<RewriteStats> {
    let mut stats = RewriteStats::default();
    let mut total = 0;
    loop {
        let mut changed = false;
        for op in f.walk() {
            if !live(f, op) {
                continue;
            }
            for p in patterns {
                if p.root().is_some_and(|r| r != f.op(op).name) {
                    continue;
                }
                if p.apply(f, op)? {
                    *stats.applications.entry(p.name().to_string()).or_default() += 1;
                    total += 1;
                    changed = true;
                    if total > MAX_APPLICATIONS {
                        return Err(Error::Transform(format!(
                            "rewrite did not converge after {MAX_APPLICATIONS} pattern applications"
                        )));
                    }
                    if !live(f, op) {
                        break;
                    }
                }
            }
        }
        stats.erased_dead += eliminate_dead_code(f);
        if !changed {
            return Ok(stats);
        }
    }
}

/// Erases pure ops whose results are all unused. Returns the number erased.
pub fn eliminate_dead_code(f: &mut Function) -> usize {
    let mut erased = 0;
    loop {
        let mut used = std::collections::HashSet::new();
        let ops = f.walk();
        for &op in &ops {
            used.extend(f.op(op).operands.iter().copied());
        }
        let mut round = 0;
        for &op in ops.iter().rev() {
            if !live(f, op) || !is_pure(f, op) {
                continue;
            }
            if f.op(op).results.iter().all(|r| !used.contains(r)) {
                f.erase_op(op);
                round += 1;
            }
        }
        if round == 0 {
            return erased;
        }
        erased += round;
    }
}
