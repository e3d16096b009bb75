//! Structural verifier: dominance, terminators, region signatures and per-op type rules.

use std::collections::HashSet;
use std::fmt;

use super::func::{ArgAnnotation, BlockId, Function, Module, OpId, ValueId};
use super::ops::{is_registered, is_structured, is_terminator, ELEMENTWISE_BINARY};
use super::types::{ElemType, Type};
use crate::error::{Error, Result};

/// One verifier finding: offending op (if any), rule name and message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub function: String,
    pub op: Option<OpId>,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            Some(op) => write!(f, "[{}] @{} op#{}: {}", self.rule, self.function, op.0, self.message),
            None => write!(f, "[{}] @{}: {}", self.rule, self.function, self.message),
        }
    }
}

type Check = std::result::Result<(), Diagnostic>;

pub fn verify_module(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for f in &m.functions {
        if !seen.insert(f.name.as_str()) {
            out.push(Diagnostic {
                function: f.name.clone(),
                op: None,
                rule: "duplicate-function",
                message: "function name already defined".into(),
            });
        }
        out.extend(verify_function(f));
    }
    out
}

/// Fails with the first diagnostic, if any.
pub fn check_module(m: &Module) -> Result<()> {
    match verify_module(m).into_iter().next() {
        None => Ok(()),
        Some(d) => Err(Error::Verify(d.to_string())),
    }
}

pub fn check_function(f: &Function) -> Result<()> {
    match verify_function(f).into_iter().next() {
        None => Ok(()),
        Some(d) => Err(Error::Verify(d.to_string())),
    }
}

pub fn verify_function(f: &Function) -> Vec<Diagnostic> {
    let mut v = Verifier { f, visible: f.args().iter().copied().collect(), diags: Vec::new() };
    v.block(f.body);
    let fdiag = |rule, message: String| Diagnostic { function: f.name.clone(), op: None, rule, message };
    match f.terminator(f.body) {
        Some(t) if f.op(t).name == "func.return" => {
            let got: Vec<Type> = f.op(t).operands.iter().map(|&x| f.ty(x).clone()).collect();
            if got != f.result_types {
                v.diags.push(err(
                    f,
                    t,
                    "return-type",
                    format!("returns {} but function declares {}", types(&got), types(&f.result_types)),
                ));
            }
        }
        _ => v.diags.push(fdiag("terminator", "function body must end with func.return".into())),
    }
    let outs: Vec<usize> = (0..f.args().len())
        .filter(|&i| f.annotations.get(i).copied().flatten() == Some(ArgAnnotation::Out))
        .collect();
    for (k, &i) in outs.iter().enumerate() {
        let t = f.ty(f.args()[i]);
        if !t.is_tensor() {
            v.diags.push(fdiag("annotation", format!("out-annotated argument #{i} must be a tensor")));
        } else if f.result_types.get(k) != Some(t) {
            v.diags.push(fdiag("annotation", format!("out-annotated argument #{i} is not tied to result #{k}")));
        }
    }
    for (i, a) in f.annotations.iter().enumerate() {
        if a.is_some() && !f.ty(f.args()[i]).is_tensor() {
            v.diags.push(fdiag("annotation", format!("argument #{i} annotated but not a tensor")));
        }
    }
    v.diags
}

fn err(f: &Function, op: OpId, rule: &'static str, msg: String) -> Diagnostic {
    Diagnostic { function: f.name.clone(), op: Some(op), rule, message: format!("'{}': {msg}", f.op(op).name) }
}

fn types(ts: &[Type]) -> String {
    format!("({})", ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "))
}

struct Verifier<'a> {
    f: &'a Function,
    visible: HashSet<ValueId>,
    diags: Vec<Diagnostic>,
}

impl Verifier<'_> {
    fn block(&mut self, b: BlockId) {
        let f = self.f;
        let saved = self.visible.clone();
        self.visible.extend(f.block(b).args.iter().copied());
        let ops = &f.block(b).ops;
        for (i, &op) in ops.iter().enumerate() {
            let d = f.op(op);
            if is_terminator(&d.name) && i + 1 != ops.len() {
                self.diags.push(err(f, op, "terminator", "terminator must be the last op of its block".into()));
            }
            for (k, &o) in d.operands.iter().enumerate() {
                if !self.visible.contains(&o) {
                    self.diags.push(err(f, op, "dominance", format!("operand #{k} does not dominate its use")));
                }
            }
            for &r in &d.regions {
                self.block(r);
            }
            if let Err(e) = check_op(f, op) {
                self.diags.push(e);
            }
            self.visible.extend(d.results.iter().copied());
        }
        self.visible = saved;
    }
}

fn expect_counts(f: &Function, op: OpId, operands: Option<usize>, results: Option<usize>) -> Check {
    let d = f.op(op);
    if let Some(n) = operands {
        if d.operands.len() != n {
            return Err(err(f, op, "signature", format!("expected {n} operands, got {}", d.operands.len())));
        }
    }
    if let Some(n) = results {
        if d.results.len() != n {
            return Err(err(f, op, "signature", format!("expected {n} results, got {}", d.results.len())));
        }
    }
    Ok(())
}

fn region_yield(f: &Function, op: OpId, region: BlockId, yield_name: &str, expected: &[Type]) -> Check {
    let Some(t) = f.terminator(region) else {
        return Err(err(f, op, "terminator", format!("region must end with {yield_name}")));
    };
    if f.op(t).name != yield_name {
        return Err(err(f, op, "terminator", format!("region must end with {yield_name}, found {}", f.op(t).name)));
    }
    let got: Vec<Type> = f.op(t).operands.iter().map(|&v| f.ty(v).clone()).collect();
    if got != expected {
        return Err(err(f, op, "yield-type", format!("yield types {} do not match expected {}", types(&got), types(expected))));
    }
    Ok(())
}

fn check_op(f: &Function, op: OpId) -> Check {
    let d = f.op(op);
    let name = d.name.as_str();
    if !is_registered(name) {
        return Err(err(f, op, "unknown-op", "unknown op".into()));
    }
    let ot = |i: usize| f.ty(d.operands[i]);
    let rt = |i: usize| f.ty(d.results[i]);
    if ELEMENTWISE_BINARY.contains(&name) {
        expect_counts(f, op, Some(2), Some(1))?;
        if ot(0) != ot(1) || ot(0) != rt(0) {
            return Err(err(f, op, "signature", format!("operand/result types differ: {}, {} -> {}", ot(0), ot(1), rt(0))));
        }
        let is_f = name.ends_with('f');
        if is_f != ot(0).elem().is_float() {
            return Err(err(f, op, "signature", format!("element type {} not allowed", ot(0).elem().name())));
        }
        return Ok(());
    }
    if is_structured(name) {
        return check_structured(f, op);
    }
    match name {
        "arith.constant" => {
            expect_counts(f, op, Some(0), Some(1))?;
            if d.attr("value").is_none() {
                return Err(err(f, op, "signature", "missing 'value' attribute".into()));
            }
        }
        "arith.cmpi" | "arith.cmpf" => {
            expect_counts(f, op, Some(2), Some(1))?;
            if ot(0) != ot(1) || rt(0).elem() != ElemType::I1 {
                return Err(err(f, op, "signature", "comparison operands must match and produce i1".into()));
            }
            if d.str_attr("predicate").is_none() {
                return Err(err(f, op, "signature", "missing 'predicate' attribute".into()));
            }
        }
        "arith.select" => {
            expect_counts(f, op, Some(3), Some(1))?;
            if ot(0).elem() != ElemType::I1 || ot(1) != ot(2) || ot(1) != rt(0) {
                return Err(err(f, op, "signature", "select expects (i1, T, T) -> T".into()));
            }
        }
        "tc.min" => {
            expect_counts(f, op, Some(2), Some(1))?;
            if !ot(0).is_index() || !ot(1).is_index() {
                return Err(err(f, op, "signature", "operands must be index".into()));
            }
        }
        "scf.for" => {
            if d.operands.len() < 3 || d.regions.len() != 1 {
                return Err(err(f, op, "signature", "expects lb, ub, step operands and one region".into()));
            }
            if (0..3).any(|i| !ot(i).is_index()) {
                return Err(err(f, op, "signature", "bounds must be index".into()));
            }
            let inits: Vec<Type> = d.operands[3..].iter().map(|&v| f.ty(v).clone()).collect();
            let res: Vec<Type> = d.results.iter().map(|&v| f.ty(v).clone()).collect();
            if inits != res {
                return Err(err(f, op, "signature", "result types must match iter_args".into()));
            }
            let args: Vec<Type> = f.block(d.regions[0]).args.iter().map(|&v| f.ty(v).clone()).collect();
            if args.is_empty() || !args[0].is_index() || args[1..] != inits[..] {
                return Err(err(f, op, "signature", "body arguments must be (index, iter_args...)".into()));
            }
            region_yield(f, op, d.regions[0], "scf.yield", &inits)?;
        }
        "scf.if" => {
            if d.operands.len() != 1 || ot(0).elem() != ElemType::I1 || !ot(0).is_scalar() {
                return Err(err(f, op, "signature", "condition must be a single i1".into()));
            }
            if d.regions.is_empty() || d.regions.len() > 2 {
                return Err(err(f, op, "signature", "expects then and optional else region".into()));
            }
            let res: Vec<Type> = d.results.iter().map(|&v| f.ty(v).clone()).collect();
            if !res.is_empty() && d.regions.len() != 2 {
                return Err(err(f, op, "signature", "results require an else region".into()));
            }
            for &r in &d.regions {
                region_yield(f, op, r, "scf.yield", &res)?;
            }
        }
        "scf.yield" | "linalg.yield" | "func.return" => {
            if let Some(p) = f.op(op).parent.and_then(|b| f.block_parent_op(b)) {
                let pn = f.op(p).name.as_str();
                let ok = match name {
                    "scf.yield" => pn == "scf.for" || pn == "scf.if",
                    "linalg.yield" => is_structured(pn),
                    _ => false,
                };
                if !ok {
                    return Err(err(f, op, "signature", format!("not allowed inside '{pn}'")));
                }
            } else if name != "func.return" {
                return Err(err(f, op, "signature", "not allowed at function level".into()));
            }
        }
        "tensor.empty" | "memref.alloc" | "memref.alloca" => {
            expect_counts(f, op, None, Some(1))?;
            let dynamic = rt(0).dims().iter().filter(|x| x.is_dynamic()).count();
            if d.operands.len() != dynamic {
                return Err(err(f, op, "signature", format!("expects {dynamic} dynamic size operands")));
            }
        }
        "tensor.extract_slice" | "memref.subview" | "tensor.insert_slice" => {
            let sizes = d.ints_attr("static_sizes").ok_or_else(|| err(f, op, "signature", "missing static_sizes".into()))?;
            let insert = name == "tensor.insert_slice";
            let big = if insert { ot(1) } else { ot(0) };
            let small = if insert { ot(0) } else { rt(0) };
            let n_dyn = sizes.iter().filter(|&&s| s < 0).count();
            let base = if insert { 2 } else { 1 };
            expect_counts(f, op, Some(base + sizes.len() + n_dyn), Some(1))?;
            if sizes.len() != big.rank() {
                return Err(err(f, op, "signature", format!("{} sizes for rank-{} source", sizes.len(), big.rank())));
            }
            if small.rank() > big.rank() || small.elem() != big.elem() {
                return Err(err(f, op, "signature", format!("slice type {small} incompatible with {big}")));
            }
            let drop = big.rank() - small.rank();
            if sizes[..drop].iter().any(|&s| s != 1) {
                return Err(err(f, op, "signature", "rank reduction may only drop unit dims".into()));
            }
            for (s, dim) in sizes[drop..].iter().zip(small.dims()) {
                if *s >= 0 && dim.as_static().is_some_and(|x| x != *s) {
                    return Err(err(f, op, "signature", format!("static size {s} disagrees with slice type {small}")));
                }
            }
            if insert && rt(0) != ot(1) {
                return Err(err(f, op, "signature", "result type must equal destination type".into()));
            }
        }
        "tensor.pad" => {
            let rank = ot(0).rank();
            expect_counts(f, op, Some(1 + 2 * rank), Some(1))?;
            if rt(0).rank() != rank || rt(0).elem() != ot(0).elem() {
                return Err(err(f, op, "signature", "result must have source rank and element type".into()));
            }
        }
        "tensor.extract" | "memref.load" => {
            expect_counts(f, op, Some(1 + ot(0).rank()), Some(1))?;
            if rt(0) != &Type::scalar(ot(0).elem()) {
                return Err(err(f, op, "signature", "result must be the element type".into()));
            }
        }
        "tensor.insert" => {
            expect_counts(f, op, Some(2 + ot(1).rank()), Some(1))?;
            if rt(0) != ot(1) {
                return Err(err(f, op, "signature", "result type must equal destination type".into()));
            }
        }
        "memref.store" => expect_counts(f, op, Some(2 + ot(1).rank()), Some(0))?,
        "vector.transfer_read" | "vector.transfer_write" => {
            let read = name == "vector.transfer_read";
            let (src, vec) = if read { (ot(0), rt(0)) } else { (ot(1), ot(0)) };
            // read: source, indices, padding; write: vector, dest, indices
            let n = 2 + src.rank();
            expect_counts(f, op, Some(n), None)?;
            let map = d.attr("permutation_map").and_then(|a| a.as_maps()).and_then(|m| m.first());
            let Some(map) = map else {
                return Err(err(f, op, "signature", "missing permutation_map".into()));
            };
            if map.n_dims != src.rank() || map.n_results() != vec.rank() {
                return Err(err(f, op, "signature", format!("permutation_map {map} incompatible with {src} and {vec}")));
            }
            if d.ints_attr("in_bounds").map(|x| x.len()) != Some(vec.rank()) {
                return Err(err(f, op, "signature", "in_bounds must have one entry per vector dim".into()));
            }
            if !vec.is_vector() {
                return Err(err(f, op, "signature", "transfer vector must have vector type".into()));
            }
            if !read {
                let want = if src.is_tensor() { 1 } else { 0 };
                expect_counts(f, op, None, Some(want))?;
            }
        }
        "vector.contract" => {
            expect_counts(f, op, Some(3), Some(1))?;
            let maps = d.attr("indexing_maps").and_then(|a| a.as_maps());
            let its = d.str_attr("iterator_types");
            match (maps, its) {
                (Some(m), Some(it)) if m.len() == 3 => {
                    let n = it.split(',').count();
                    for (i, map) in m.iter().enumerate() {
                        let t = if i < 2 { ot(i) } else { rt(0) };
                        if map.n_dims != n || map.n_results() != t.rank() {
                            return Err(err(f, op, "signature", format!("indexing map #{i} does not match operand rank")));
                        }
                    }
                    if ot(2) != rt(0) {
                        return Err(err(f, op, "signature", "accumulator and result types must match".into()));
                    }
                }
                _ => return Err(err(f, op, "signature", "needs three indexing_maps and iterator_types".into())),
            }
        }
        "vector.transpose" => {
            expect_counts(f, op, Some(1), Some(1))?;
            let perm = d.ints_attr("permutation").unwrap_or(&[]);
            let mut sorted = perm.to_vec();
            sorted.sort();
            if sorted != (0..ot(0).rank() as i64).collect::<Vec<_>>() {
                return Err(err(f, op, "signature", "permutation must be a permutation of the source dims".into()));
            }
            let expected: Vec<_> = perm.iter().map(|&p| ot(0).dims()[p as usize]).collect();
            if rt(0).dims() != expected.as_slice() {
                return Err(err(f, op, "signature", "result shape must be the permuted source shape".into()));
            }
        }
        "vector.shape_cast" => {
            expect_counts(f, op, Some(1), Some(1))?;
            let n = |t: &Type| t.static_shape().map(|s| s.iter().product::<i64>());
            if n(ot(0)) != n(rt(0)) {
                return Err(err(f, op, "signature", "shape_cast must preserve element count".into()));
            }
        }
        _ => {}
    }
    Ok(())
}

fn check_structured(f: &Function, op: OpId) -> Check {
    let d = f.op(op);
    let n_inputs = d.int_attr("n_inputs").ok_or_else(|| err(f, op, "signature", "missing n_inputs".into()))? as usize;
    let maps = d
        .attr("indexing_maps")
        .and_then(|a| a.as_maps())
        .ok_or_else(|| err(f, op, "signature", "missing indexing_maps".into()))?;
    let its = d.str_attr("iterator_types").ok_or_else(|| err(f, op, "signature", "missing iterator_types".into()))?;
    let n_iters = its.split(',').filter(|s| !s.is_empty()).count();
    if n_inputs > d.operands.len() || maps.len() != d.operands.len() {
        return Err(err(f, op, "signature", format!("{} indexing maps for {} operands", maps.len(), d.operands.len())));
    }
    for s in its.split(',') {
        if s != "parallel" && s != "reduction" {
            return Err(err(f, op, "signature", format!("unknown iterator type '{s}'")));
        }
    }
    for (i, (m, &v)) in maps.iter().zip(&d.operands).enumerate() {
        if m.n_dims != n_iters {
            return Err(err(f, op, "signature", format!("map #{i} has {} dims but op has {n_iters} iterators", m.n_dims)));
        }
        let t = f.ty(v);
        if m.n_results() != t.rank() {
            return Err(err(f, op, "signature", format!("map #{i} has {} results for rank-{} operand", m.n_results(), t.rank())));
        }
    }
    let outs = &d.operands[n_inputs..];
    let tensor_outs: Vec<Type> = outs.iter().map(|&v| f.ty(v).clone()).filter(|t| t.is_tensor()).collect();
    let res: Vec<Type> = d.results.iter().map(|&v| f.ty(v).clone()).collect();
    if res != tensor_outs {
        return Err(err(f, op, "signature", format!("results {} must match tensor outputs {}", types(&res), types(&tensor_outs))));
    }
    if d.regions.len() != 1 {
        return Err(err(f, op, "signature", "expects one region".into()));
    }
    let args: Vec<Type> = f.block(d.regions[0]).args.iter().map(|&v| f.ty(v).clone()).collect();
    let want: Vec<Type> = d.operands.iter().map(|&v| Type::scalar(f.ty(v).elem())).collect();
    if args != want {
        return Err(err(f, op, "signature", format!("region arguments {} must be operand element types {}", types(&args), types(&want))));
    }
    let yields: Vec<Type> = outs.iter().map(|&v| Type::scalar(f.ty(v).elem())).collect();
    region_yield(f, op, d.regions[0], "linalg.yield", &yields)
}
