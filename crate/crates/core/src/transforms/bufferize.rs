//! Bufferization: read-after-write conflict analysis over tensor SSA, then rewriting to memrefs.

use std::collections::{HashMap, HashSet};

use crate::error::{transform_err, Error, Result};
use crate::interp::{run_function, Dense, Interp, Observer, RValue};
use crate::ir::ops::{encode_sizes, is_structured, ForView, PadView, SizeRef, SliceView};
use crate::ir::rewrite::eliminate_dead_code;
use crate::ir::{attrs, const_int, ArgAnnotation, Attr, Builder, Dim, Function, IndexingMap, Layout, OpId, Type, ValueDef, ValueId};
use crate::structured::make_named_op;

/// Order in which in-place candidates are analyzed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalysisOrder {
    Forward,
    #[default]
    Reverse,
}

impl AnalysisOrder {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisOrder::Forward => "forward",
            AnalysisOrder::Reverse => "reverse",
        }
    }

    pub fn parse(s: &str) -> Option<AnalysisOrder> {
        match s {
            "forward" => Some(AnalysisOrder::Forward),
            "reverse" => Some(AnalysisOrder::Reverse),
            _ => None,
        }
    }
}

/// Disjoint sets over values.
#[derive(Debug, Clone, Default)]
pub struct AliasSets {
    parent: HashMap<ValueId, ValueId>,
}

impl AliasSets {
    pub fn find(&self, v: ValueId) -> ValueId {
        let mut c = v;
        while let Some(&p) = self.parent.get(&c) {
            c = p;
        }
        c
    }

    pub fn union(&mut self, a: ValueId, b: ValueId) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent.insert(rb, ra);
        }
    }

    pub fn same(&self, a: ValueId, b: ValueId) -> bool {
        self.find(a) == self.find(b)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BufferizationState {
    pub order: AnalysisOrder,
    /// Decision per aliasing `(op, operand)`: `true` writes into the operand's buffer.
    pub in_place: HashMap<(OpId, usize), bool>,
    /// Per `(loop, iter index)`: the yielded value already lives in the iteration buffer.
    pub yield_in_place: HashMap<(OpId, usize), bool>,
    /// Values sharing one whole buffer.
    pub equivalent: AliasSets,
    /// Values whose buffers may overlap.
    pub aliases: AliasSets,
    /// Pads written directly into the destination of the insert_slice consuming them.
    pub pad_into: HashMap<OpId, OpId>,
}

impl BufferizationState {
    pub fn out_of_place(&self) -> usize {
        self.in_place.values().filter(|&&b| !b).count()
    }
}

/// `(operand, result)` pairs whose buffers are shared when bufferized in place.
pub fn aliasing_operands(f: &Function, op: OpId) -> Vec<(usize, usize)> {
    let d = f.op(op);
    match d.name.as_str() {
        "tensor.insert_slice" | "tensor.insert" => vec![(1, 0)],
        "vector.transfer_write" if !d.results.is_empty() => vec![(1, 0)],
        "scf.for" => (3..d.operands.len()).filter(|&i| f.ty(d.operands[i]).is_tensor()).map(|i| (i, i - 3)).collect(),
        n if is_structured(n) => {
            let n_in = d.int_attr("n_inputs").unwrap_or(0) as usize;
            (n_in..d.operands.len()).filter(|&i| f.ty(d.operands[i]).is_tensor()).enumerate().map(|(j, i)| (i, j)).collect()
        }
        _ => Vec::new(),
    }
}

/// A transfer_write that overwrites its whole destination.
fn full_overwrite(f: &Function, op: OpId) -> bool {
    let d = f.op(op);
    let (vec, dest) = (f.ty(d.operands[0]), f.ty(d.operands[1]));
    let rank = dest.rank();
    let map = &d.attr("permutation_map").and_then(|a| a.as_maps()).unwrap()[0];
    vec.static_shape().is_some()
        && vec.static_shape() == dest.static_shape()
        && *map == IndexingMap::identity(rank)
        && d.ints_attr("in_bounds").unwrap_or(&[]).iter().all(|&b| b != 0)
        && d.operands[2..2 + rank].iter().all(|&i| const_int(f, i) == Some(0))
}

/// Whether operand `idx` of `op` reads the contents of its tensor.
pub fn is_read(f: &Function, op: OpId, idx: usize) -> bool {
    let d = f.op(op);
    match d.name.as_str() {
        "tensor.extract_slice" | "tensor.cast" | "tensor.dim" | "scf.for" | "scf.yield" => false,
        "vector.transfer_write" => idx != 1 || !full_overwrite(f, op),
        n if is_structured(n) => {
            let n_in = d.int_attr("n_inputs").unwrap_or(0) as usize;
            if idx < n_in {
                return true;
            }
            let body = d.regions[0];
            let arg = f.block(body).args[idx];
            f.block(body).ops.iter().any(|&o| f.op(o).operands.contains(&arg))
        }
        _ => true,
    }
}

/// The value whose write defines the contents of `v`: views and casts are skipped, loop-carried
/// values follow their yields, and function arguments stand for themselves.
pub fn last_write(f: &Function, v: ValueId) -> ValueId {
    let mut v = v;
    let mut seen = HashSet::new();
    while seen.insert(v) {
        let yielded = |l: OpId, k: usize| f.op(f.terminator(f.op(l).regions[0]).unwrap()).operands[k];
        match f.def(v) {
            ValueDef::OpResult(op, i) => match f.op(op).name.as_str() {
                "tensor.cast" | "tensor.extract_slice" => v = f.op(op).operands[0],
                "scf.for" => v = yielded(op, i),
                _ => return v,
            },
            ValueDef::BlockArg(b, i) => match f.block(b).parent {
                Some(l) if f.op(l).name == "scf.for" && i > 0 => v = yielded(l, i - 1),
                _ => return v,
            },
            ValueDef::Pending => return v,
        }
    }
    v
}

/// Program point at which a tensor's contents were last defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Def {
    Arg,
    Op(OpId),
    LoopStart(OpId),
    LoopEnd(OpId),
}

fn def_point(f: &Function, mut v: ValueId) -> Def {
    loop {
        match f.def(v) {
            ValueDef::OpResult(op, _) => match f.op(op).name.as_str() {
                "tensor.cast" | "tensor.extract_slice" => v = f.op(op).operands[0],
                "scf.for" => return Def::LoopEnd(op),
                _ => return Def::Op(op),
            },
            ValueDef::BlockArg(b, _) => {
                return match f.block(b).parent {
                    Some(l) => Def::LoopStart(l),
                    None => Def::Arg,
                }
            }
            ValueDef::Pending => return Def::Arg,
        }
    }
}

struct Analyzer<'a> {
    f: &'a Function,
    paths: HashMap<OpId, Vec<usize>>,
    uses: HashMap<ValueId, Vec<(OpId, usize)>>,
    tensors: Vec<ValueId>,
    read_only: HashSet<ValueId>,
    st: BufferizationState,
}

impl Analyzer<'_> {
    fn path(&self, op: OpId) -> &[usize] {
        &self.paths[&op]
    }

    fn defined_inside(&self, v: ValueId, l: OpId) -> bool {
        self.f.def_block(v).is_some_and(|b| self.f.block_is_nested_in(b, l))
    }

    /// `r` may execute after `w`: later in program order, or in a later iteration of a loop
    /// enclosing both when the value read is defined outside that loop.
    fn happens_after(&self, r: OpId, w: OpId, x: ValueId) -> bool {
        if self.path(r) > self.path(w) {
            return true;
        }
        let mut l = self.f.parent_op(w);
        while let Some(lp) = l {
            if self.f.op(lp).name == "scf.for" && self.f.is_nested_in(r, lp) && !self.defined_inside(x, lp) {
                return true;
            }
            l = self.f.parent_op(lp);
        }
        false
    }

    fn def_before(&self, d: Def, w: OpId) -> bool {
        let f = self.f;
        match d {
            Def::Arg => true,
            Def::Op(o) => o != w && self.path(o) < self.path(w),
            Def::LoopStart(l) => l != w && (f.is_nested_in(w, l) || self.path(l) < self.path(w)),
            Def::LoopEnd(l) => l != w && !f.is_nested_in(w, l) && self.path(l) < self.path(w),
        }
    }

    /// `v` is, through in-place writes and casts, the extract_slice matching `insert`'s subset of
    /// (a value equivalent to) its destination.
    fn matching_extract(&self, mut v: ValueId, insert: OpId) -> bool {
        let f = self.f;
        let ins = f.op(insert);
        let dest = ins.operands[1];
        let mut seen = HashSet::new();
        while seen.insert(v) {
            let ValueDef::OpResult(op, ri) = f.def(v) else { return false };
            let d = f.op(op);
            match d.name.as_str() {
                "tensor.extract_slice" => {
                    return self.st.equivalent.same(d.operands[0], dest)
                        && d.operands[1..] == ins.operands[2..]
                        && d.ints_attr("static_sizes") == ins.ints_attr("static_sizes");
                }
                "tensor.cast" => v = d.operands[0],
                _ => {
                    let next = aliasing_operands(f, op)
                        .into_iter()
                        .find(|&(i, r)| r == ri && self.st.in_place.get(&(op, i)) == Some(&true));
                    match next {
                        Some((i, _)) => v = d.operands[i],
                        None => return false,
                    }
                }
            }
        }
        false
    }

    /// Would writing operand `k` of `w` in place (sharing its buffer with result `r`) let some
    /// read observe clobbered data?
    fn conflicts(&self, w: OpId, k: usize, r: ValueId) -> bool {
        let f = self.f;
        let v = f.op(w).operands[k];
        let (ra, rb) = (self.st.aliases.find(v), self.st.aliases.find(r));
        for &x in &self.tensors {
            let rx = self.st.aliases.find(x);
            if rx != ra && rx != rb {
                continue;
            }
            if self.read_only.contains(&x) {
                return true;
            }
            for &(rd, j) in self.uses.get(&x).map_or(&[][..], |u| &u[..]) {
                if !is_read(f, rd, j) {
                    continue;
                }
                if rd == w {
                    let own_subset = f.op(w).name == "tensor.insert_slice" && j == 0 && self.matching_extract(x, w);
                    if j != k && !own_subset {
                        return true;
                    }
                    continue;
                }
                if !self.happens_after(rd, w, x) || !self.def_before(def_point(f, x), w) {
                    continue;
                }
                let exempt = f.op(rd).name == "tensor.insert_slice" && j == 1 && self.matching_extract(v, rd);
                if !exempt {
                    return true;
                }
            }
        }
        false
    }

    fn decide(&mut self, w: OpId, k: usize, res: usize) {
        let r = self.f.op(w).results[res];
        let ok = !self.conflicts(w, k, r);
        self.st.in_place.insert((w, k), ok);
        if ok {
            let v = self.f.op(w).operands[k];
            self.st.equivalent.union(v, r);
            self.st.aliases.union(v, r);
        }
    }

    /// A pad whose only use is an in-place insert_slice in the same block, with no tensor traffic in
    /// between, can be materialized directly in the insert destination.
    fn pad_target(&self, pad: OpId) -> Option<OpId> {
        let f = self.f;
        let res = f.op(pad).results[0];
        let [(ins, 0)] = self.uses.get(&res)?.as_slice() else { return None };
        let ins = *ins;
        let d = f.op(ins);
        if d.name != "tensor.insert_slice" || self.st.in_place.get(&(ins, 1)) != Some(&true) {
            return None;
        }
        if f.op(pad).parent != d.parent || self.st.aliases.same(f.op(pad).operands[0], d.operands[1]) {
            return None;
        }
        let sv = SliceView::new(f, ins);
        let shape = f.ty(res).static_shape()?;
        let sizes: Vec<i64> = sv.sizes.iter().map(|s| if let SizeRef::Static(n) = s { Some(*n) } else { None }).collect::<Option<_>>()?;
        if sizes[sizes.len() - shape.len()..] != shape[..] {
            return None;
        }
        let ops = &f.block(d.parent?).ops;
        let (a, b) = (ops.iter().position(|&o| o == pad)?, ops.iter().position(|&o| o == ins)?);
        let quiet = ops[a + 1..b].iter().all(|&o| {
            let od = f.op(o);
            od.regions.is_empty() && od.operands.iter().chain(&od.results).all(|&v| !f.ty(v).is_tensor())
        });
        quiet.then_some(ins)
    }
}

/// Decides, for every aliasing tensor operand, whether it can be written in place.
pub fn analyze(f: &Function, order: AnalysisOrder) -> BufferizationState {
    let ops = f.walk();
    let mut a = Analyzer {
        f,
        paths: ops.iter().map(|&o| (o, f.path(o))).collect(),
        uses: HashMap::new(),
        tensors: Vec::new(),
        read_only: HashSet::new(),
        st: BufferizationState { order, ..Default::default() },
    };
    for (i, &arg) in f.args().iter().enumerate() {
        if f.ty(arg).is_tensor() {
            a.tensors.push(arg);
            if f.annotations.get(i).copied().flatten() == Some(ArgAnnotation::In) {
                a.read_only.insert(arg);
            }
        }
    }
    for &op in &ops {
        let d = f.op(op);
        for (j, &v) in d.operands.iter().enumerate() {
            a.uses.entry(v).or_default().push((op, j));
        }
        for &r in &d.regions {
            a.tensors.extend(f.block(r).args.iter().copied().filter(|&v| f.ty(v).is_tensor()));
        }
        a.tensors.extend(d.results.iter().copied().filter(|&v| f.ty(v).is_tensor()));
        match d.name.as_str() {
            "tensor.cast" => {
                a.st.equivalent.union(d.operands[0], d.results[0]);
                a.st.aliases.union(d.operands[0], d.results[0]);
            }
            "tensor.extract_slice" => a.st.aliases.union(d.operands[0], d.results[0]),
            "scf.for" => {
                let fv = ForView::new(f, op);
                for (k, (&ia, &r)) in fv.iter_args.iter().zip(&fv.results).enumerate() {
                    if f.ty(fv.inits[k]).is_tensor() {
                        a.st.equivalent.union(ia, r);
                        a.st.aliases.union(ia, r);
                    }
                }
            }
            _ => {}
        }
    }
    let mut candidates: Vec<OpId> =
        ops.iter().copied().filter(|&o| f.op(o).name != "scf.for" && !aliasing_operands(f, o).is_empty()).collect();
    if order == AnalysisOrder::Reverse {
        candidates.reverse();
    }
    for w in candidates {
        for (k, r) in aliasing_operands(f, w) {
            a.decide(w, k, r);
        }
    }
    // loops last, innermost first, once their bodies are decided
    for l in ops.iter().rev().copied().filter(|&o| f.op(o).name == "scf.for") {
        let fv = ForView::new(f, l);
        let ys = fv.yielded(f);
        for (k, r) in aliasing_operands(f, l) {
            let same = a.st.equivalent.same(ys[r], fv.iter_args[r]);
            a.st.yield_in_place.insert((l, r), same);
            a.decide(l, k, r);
        }
    }
    for &op in &ops {
        if f.op(op).name == "tensor.pad" {
            if let Some(ins) = a.pad_target(op) {
                a.st.pad_into.insert(op, ins);
            }
        }
    }
    a.st
}

fn memref_of(t: &Type) -> Type {
    Type::memref(t.dims().to_vec(), t.elem(), None)
}

/// Result type of a subview of `src`.
fn subview_type(f: &Function, src: ValueId, offsets: &[ValueId], sizes: &[SizeRef], drop: usize) -> Type {
    let st = f.ty(src);
    let parent = st.layout().cloned().unwrap_or_else(|| Layout::identity(st.dims()));
    let offset = (|| {
        let mut o = parent.offset?;
        for (k, &v) in offsets.iter().enumerate() {
            o += const_int(f, v)? * parent.strides[k]?;
        }
        Some(o)
    })();
    let dims = sizes[drop..]
        .iter()
        .map(|s| match s {
            SizeRef::Static(n) => Dim::Static(*n),
            SizeRef::Dynamic(_) => Dim::Dynamic,
        })
        .collect();
    Type::memref(dims, st.elem(), Some(Layout { offset, strides: parent.strides[drop..].to_vec() }))
}

pub fn build_subview(b: &mut Builder, src: ValueId, offsets: Vec<ValueId>, sizes: &[SizeRef], drop: usize) -> ValueId {
    let ty = subview_type(b.f, src, &offsets, sizes, drop);
    let (stat, dynv) = encode_sizes(b.f, sizes);
    let mut operands = vec![src];
    operands.extend(offsets);
    operands.extend(dynv);
    b.value("memref.subview", operands, ty, attrs(&[("static_sizes", Attr::Ints(stat))]))
}

/// Base allocation or argument behind a chain of views.
fn base_of(f: &Function, mut v: ValueId) -> ValueId {
    while let Some(op) = f.defining_op(v) {
        match f.op(op).name.as_str() {
            "memref.subview" | "memref.cast" => v = f.op(op).operands[0],
            _ => break,
        }
    }
    v
}

struct Rewriter<'s> {
    st: &'s BufferizationState,
    /// Aliasing pairs computed on the tensor form.
    pairs: HashMap<OpId, Vec<(usize, usize)>>,
    buf: HashMap<ValueId, ValueId>,
    outs: Vec<usize>,
}

impl Rewriter<'_> {
    fn buf(&self, f: &Function, v: ValueId) -> Result<ValueId> {
        self.buf.get(&v).copied().ok_or_else(|| Error::Transform(format!("no buffer for tensor value of type {}", f.ty(v))))
    }

    /// A fresh buffer shaped like tensor `v`, sizing dynamic dims from `like`.
    fn alloc_like(&self, f: &mut Function, before: OpId, v: ValueId, like: ValueId) -> ValueId {
        let t = f.ty(v).clone();
        let mut b = Builder::before(f, before);
        let dyns: Vec<ValueId> = t.dims().iter().enumerate().filter(|(_, d)| d.is_dynamic()).map(|(i, _)| b.dim(like, i)).collect();
        b.value("memref.alloc", dyns, memref_of(&t), Default::default())
    }

    fn copy(f: &mut Function, before: OpId, src: ValueId, dst: ValueId) {
        Builder::before(f, before).create("memref.copy", vec![src, dst], vec![], Default::default());
    }

    /// Buffer that operand `i` of `op` writes into: its own, or a fresh (optionally copied) one.
    fn target(&mut self, f: &mut Function, op: OpId, i: usize, copy: bool, allocs: &mut Vec<ValueId>) -> Result<ValueId> {
        let v = f.op(op).operands[i];
        let b = self.buf(f, v)?;
        if self.st.in_place.get(&(op, i)).copied().unwrap_or(false) {
            return Ok(b);
        }
        let a = self.alloc_like(f, op, v, b);
        if copy {
            Self::copy(f, op, b, a);
        }
        allocs.push(a);
        Ok(a)
    }

    /// Fills `dest` with the pad value and copies the pad source into its interior.
    fn materialize_pad(&self, f: &mut Function, before: OpId, pad: OpId, dest: ValueId) -> Result<()> {
        let p = PadView::new(f, pad);
        let src = self.buf(f, p.source)?;
        let src_ty = f.ty(p.source).clone();
        let mut b = Builder::before(f, before);
        make_named_op(&mut b, "fill", &[], &[dest], attrs(&[("value", p.pad_value.clone())]))?;
        let sizes: Vec<SizeRef> = src_ty
            .dims()
            .iter()
            .enumerate()
            .map(|(d, dim)| match dim {
                Dim::Static(n) => SizeRef::Static(*n),
                Dim::Dynamic => SizeRef::Dynamic(b.dim(src, d)),
            })
            .collect();
        let inner = build_subview(&mut b, dest, p.low.clone(), &sizes, 0);
        b.create("memref.copy", vec![src, inner], vec![], Default::default());
        Ok(())
    }

    fn block(&mut self, f: &mut Function, blk: crate::ir::BlockId) -> Result<()> {
        let mut allocs = Vec::new();
        for op in f.block(blk).ops.clone() {
            match f.op(op).name.as_str() {
                "scf.yield" => self.yield_(f, op, &allocs)?,
                "func.return" => self.return_(f, op, &allocs)?,
                _ => self.op(f, op, &mut allocs)?,
            }
        }
        Ok(())
    }

    fn dealloc(f: &mut Function, before: OpId, allocs: &[ValueId], keep: &HashSet<ValueId>) {
        for &a in allocs {
            if !keep.contains(&a) {
                Builder::before(f, before).create("memref.dealloc", vec![a], vec![], Default::default());
            }
        }
    }

    fn yield_(&mut self, f: &mut Function, op: OpId, allocs: &[ValueId]) -> Result<()> {
        let Some(l) = f.parent_op(op) else { return transform_err("yield outside a loop") };
        let args = f.block(f.op(l).regions[0]).args.clone();
        for (k, y) in f.op(op).operands.clone().into_iter().enumerate() {
            let Some(&yb) = self.buf.get(&y) else { continue };
            let it = args[k + 1];
            if yb != it {
                Self::copy(f, op, yb, it);
            }
            f.op_mut(op).operands[k] = it;
        }
        Self::dealloc(f, op, allocs, &HashSet::new());
        Ok(())
    }

    fn return_(&mut self, f: &mut Function, op: OpId, allocs: &[ValueId]) -> Result<()> {
        let args = f.args().to_vec();
        let mut ties = Vec::new();
        let mut keep = Vec::new();
        let mut escaping = HashSet::new();
        for (k, x) in f.op(op).operands.clone().into_iter().enumerate() {
            let Some(&xb) = self.buf.get(&x) else {
                keep.push(x);
                ties.push(-1);
                continue;
            };
            match self.outs.get(k) {
                Some(&j) => {
                    if xb != args[j] {
                        Self::copy(f, op, xb, args[j]);
                    }
                    ties.push(j as i64);
                }
                None => {
                    escaping.insert(base_of(f, xb));
                    keep.push(xb);
                    ties.push(-1);
                }
            }
        }
        Self::dealloc(f, op, allocs, &escaping);
        f.result_types = keep.iter().map(|&v| f.ty(v).clone()).collect();
        f.op_mut(op).operands = keep;
        f.attrs.insert("results".into(), Attr::Ints(ties));
        Ok(())
    }

    fn op(&mut self, f: &mut Function, op: OpId, allocs: &mut Vec<ValueId>) -> Result<()> {
        let d = f.op(op).clone();
        let res = d.results.first().copied();
        match d.name.as_str() {
            "tensor.empty" => {
                let t = memref_of(f.ty(res.unwrap()));
                let a = Builder::before(f, op).value("memref.alloc", d.operands.clone(), t, Default::default());
                allocs.push(a);
                self.buf.insert(res.unwrap(), a);
                f.erase_op(op);
            }
            "tensor.cast" => {
                let b = self.buf(f, d.operands[0])?;
                self.buf.insert(res.unwrap(), b);
                f.erase_op(op);
            }
            "tensor.extract_slice" => {
                let sv = SliceView::new(f, op);
                let src = self.buf(f, sv.source)?;
                let drop = sv.sizes.len() - sv.small_rank;
                let sub = build_subview(&mut Builder::before(f, op), src, sv.offsets.clone(), &sv.sizes, drop);
                self.buf.insert(res.unwrap(), sub);
                f.erase_op(op);
            }
            "tensor.dim" | "tensor.extract" => {
                let b = self.buf(f, d.operands[0])?;
                let o = f.op_mut(op);
                o.name = if d.name == "tensor.dim" { "memref.dim" } else { "memref.load" }.into();
                o.operands[0] = b;
            }
            "tensor.insert" => {
                let t = self.target(f, op, 1, true, allocs)?;
                let o = f.op_mut(op);
                o.name = "memref.store".into();
                o.operands[1] = t;
                o.results.clear();
                self.buf.insert(res.unwrap(), t);
            }
            "tensor.insert_slice" => {
                let sv = SliceView::new(f, op);
                let t = self.target(f, op, 1, true, allocs)?;
                let drop = sv.sizes.len() - sv.small_rank;
                let pad = f.defining_op(sv.source).filter(|p| self.st.pad_into.get(p) == Some(&op));
                let src = match pad {
                    Some(p) => {
                        let sub = build_subview(&mut Builder::before(f, op), t, sv.offsets.clone(), &sv.sizes, drop);
                        self.materialize_pad(f, op, p, sub)?;
                        f.erase_op(p);
                        sub
                    }
                    None => self.buf(f, sv.source)?,
                };
                let same = f.defining_op(src).is_some_and(|s| {
                    let sd = f.op(s);
                    sd.name == "memref.subview"
                        && sd.operands[0] == t
                        && sd.operands[1..] == d.operands[2..]
                        && sd.ints_attr("static_sizes") == d.ints_attr("static_sizes")
                });
                if !same {
                    let sub = build_subview(&mut Builder::before(f, op), t, sv.offsets.clone(), &sv.sizes, drop);
                    Self::copy(f, op, src, sub);
                }
                self.buf.insert(res.unwrap(), t);
                f.erase_op(op);
            }
            "tensor.pad" => {
                if self.st.pad_into.contains_key(&op) {
                    return Ok(());
                }
                let p = PadView::new(f, op);
                let src = self.buf(f, p.source)?;
                let rty = f.ty(res.unwrap()).clone();
                let mut b = Builder::before(f, op);
                let mut dyns = Vec::new();
                for (k, dim) in rty.dims().iter().enumerate() {
                    if dim.is_dynamic() {
                        let s = b.dim(src, k);
                        let s = b.addi(s, p.low[k]);
                        dyns.push(b.addi(s, p.high[k]));
                    }
                }
                let a = b.value("memref.alloc", dyns, memref_of(&rty), Default::default());
                allocs.push(a);
                self.materialize_pad(f, op, op, a)?;
                self.buf.insert(res.unwrap(), a);
                f.erase_op(op);
            }
            "vector.transfer_read" => {
                let b = self.buf(f, d.operands[0])?;
                f.op_mut(op).operands[0] = b;
            }
            "vector.transfer_write" if res.is_some() => {
                let copy = is_read(f, op, 1);
                let t = self.target(f, op, 1, copy, allocs)?;
                let o = f.op_mut(op);
                o.operands[1] = t;
                o.results.clear();
                self.buf.insert(res.unwrap(), t);
            }
            n if is_structured(n) => {
                let pairs = self.pairs.get(&op).cloned().unwrap_or_default();
                let n_in = d.int_attr("n_inputs").unwrap_or(0) as usize;
                for i in 0..n_in {
                    if f.ty(d.operands[i]).is_tensor() || self.buf.contains_key(&d.operands[i]) {
                        let b = self.buf(f, d.operands[i])?;
                        f.op_mut(op).operands[i] = b;
                    }
                }
                for (i, r) in pairs {
                    let copy = is_read(f, op, i);
                    let t = self.target(f, op, i, copy, allocs)?;
                    f.op_mut(op).operands[i] = t;
                    self.buf.insert(d.results[r], t);
                }
                f.op_mut(op).results.clear();
            }
            "scf.for" => {
                let fv = ForView::new(f, op);
                for (i, k) in self.pairs.get(&op).cloned().unwrap_or_default() {
                    let t = self.target(f, op, i, true, allocs)?;
                    f.op_mut(op).operands[i] = t;
                    let ty = f.ty(t).clone();
                    f.set_ty(fv.iter_args[k], ty.clone());
                    f.set_ty(fv.results[k], ty);
                    self.buf.insert(fv.iter_args[k], fv.iter_args[k]);
                    self.buf.insert(fv.results[k], t);
                }
                self.block(f, fv.body)?;
            }
            _ => {
                let touches = d.operands.iter().chain(&d.results).any(|&v| f.ty(v).is_tensor() || self.buf.contains_key(&v));
                if touches {
                    return transform_err(format!("cannot bufferize '{}'", d.name));
                }
            }
        }
        Ok(())
    }
}

/// Rewrites tensor-form `f` into memref form following `st`.
pub fn apply(f: &mut Function, st: &BufferizationState) -> Result<()> {
    let outs: Vec<usize> =
        (0..f.args().len()).filter(|&i| f.annotations.get(i).copied().flatten() == Some(ArgAnnotation::Out)).collect();
    let pairs = f.walk().into_iter().map(|o| (o, aliasing_operands(f, o))).collect();
    let mut rw = Rewriter { st, pairs, buf: HashMap::new(), outs };
    for a in f.args().to_vec() {
        if f.ty(a).is_tensor() {
            let t = memref_of(f.ty(a));
            f.set_ty(a, t);
            rw.buf.insert(a, a);
        }
    }
    let body = f.body;
    rw.block(f, body)?;
    f.annotations = vec![None; f.args().len()];
    eliminate_dead_code(f);
    Ok(())
}

/// Analyzes and rewrites `f`; returns the decisions taken.
pub fn bufferize(f: &mut Function, order: AnalysisOrder) -> Result<BufferizationState> {
    if f.args().iter().any(|&a| f.ty(a).is_memref()) {
        return transform_err("function is already bufferized");
    }
    let st = analyze(f, order);
    apply(f, &st)?;
    Ok(st)
}

/// Snapshots of tensor operands read by each op execution, in order.
#[derive(Default)]
struct Recorder {
    seen: HashMap<OpId, Vec<Vec<(usize, Dense)>>>,
}

impl Observer for Recorder {
    fn before_op(&mut self, it: &Interp, op: OpId) {
        let f = it.f;
        let d = f.op(op);
        let mut snap = Vec::new();
        for (j, &v) in d.operands.iter().enumerate() {
            if f.ty(v).is_tensor() && is_read(f, op, j) {
                if let Some(RValue::Tensor(t)) = it.value(v) {
                    snap.push((j, t.clone()));
                }
            }
        }
        self.seen.entry(op).or_default().push(snap);
    }
}

struct Checker {
    expected: HashMap<OpId, Vec<Vec<(usize, Dense)>>>,
    count: HashMap<OpId, usize>,
    clobbered: usize,
}

impl Observer for Checker {
    fn before_op(&mut self, it: &Interp, op: OpId) {
        let Some(runs) = self.expected.get(&op) else { return };
        let n = self.count.entry(op).or_default();
        let Some(snap) = runs.get(*n) else { return };
        *n += 1;
        let d = it.f.op(op);
        for (j, want) in snap {
            let Some(&v) = d.operands.get(*j) else { continue };
            if let Some(RValue::Buffer(b)) = it.value(v) {
                if !it.read_view(b).bitwise_eq(want) {
                    self.clobbered += 1;
                }
            }
        }
    }
}

/// Runs tensor-form `before` and its bufferized form `after` on `inputs` and counts operand reads
/// in `after` whose buffer contents differ from the tensor value read at the same op execution.
pub fn clobbered_reads(before: &Function, after: &Function, inputs: &[Dense]) -> Result<usize> {
    let mut rec = Recorder::default();
    run_function(before, inputs, Some(&mut rec))?;
    let mut chk = Checker { expected: rec.seen, count: HashMap::new(), clobbered: 0 };
    run_function(after, inputs, Some(&mut chk))?;
    Ok(chk.clobbered)
}
