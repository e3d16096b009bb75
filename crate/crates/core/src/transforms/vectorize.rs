//! Vectorization of statically shaped structured ops and pads.

use std::collections::HashMap;

use crate::error::{transform_err, Result};
use crate::ir::ops::{build_transfer_read, build_transfer_write, is_pure, is_structured, PadView, ELEMENTWISE_BINARY};
use crate::ir::{attrs, const_int, Attr, BlockId, Builder, Function, IndexingMap, OpId, Type, ValueDef, ValueId};
use crate::structured::domain::{derive_iteration_domain, for_each_point};
use crate::structured::{encode_iterators, IteratorKind, StructuredView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VectorizeOptions {
    pub vectorize_padding: bool,
}

/// Which of the five body/shape cases applies to an op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorCase {
    /// Identity maps and an elementwise body.
    Elementwise,
    /// Some operand has fewer dims than the domain.
    Broadcast,
    /// Some operand map permutes iterators.
    Transpose,
    /// Reduction iterators: `vector.contract` or `vector.multi_reduction`.
    Reduction,
    /// Convolution-style maps with multi-iterator index expressions.
    Convolution,
}

fn projected_dims(m: &IndexingMap) -> Option<Vec<usize>> {
    if m.is_projected_permutation() {
        m.result_dims()
    } else {
        None
    }
}

pub fn classify(f: &Function, op: OpId) -> Result<VectorCase> {
    let v = StructuredView::new(f, op);
    if v.maps.iter().any(|m| m.results.iter().any(|e| e.coeffs.len() > 1 || (e.as_dim().is_none() && !e.is_constant()))) {
        return Ok(VectorCase::Convolution);
    }
    let dims: Vec<Vec<usize>> = match v.maps.iter().map(projected_dims).collect::<Option<Vec<_>>>() {
        Some(d) => d,
        None => return transform_err("indexing maps are not projected permutations"),
    };
    if v.iterators.contains(&IteratorKind::Reduction) {
        return Ok(VectorCase::Reduction);
    }
    if dims.iter().any(|d| d.windows(2).any(|w| w[0] > w[1])) {
        return Ok(VectorCase::Transpose);
    }
    if dims.iter().any(|d| d.len() < v.n_iters()) {
        return Ok(VectorCase::Broadcast);
    }
    Ok(VectorCase::Elementwise)
}

pub(crate) fn vty(shape: &[i64], like: &Type) -> Type {
    Type::vector(shape, like.elem())
}

pub(crate) fn shape_of(f: &Function, v: ValueId) -> Vec<i64> {
    f.ty(v).static_shape().expect("static shape")
}

/// Reads a whole static tensor or memref into a vector.
pub fn read_full(b: &mut Builder, src: ValueId) -> ValueId {
    let ty = b.f.ty(src).clone();
    let shape = ty.static_shape().expect("static source");
    let zero = b.const_index(0);
    let pad = b.constant(0.0, Type::scalar(ty.elem()));
    let map = IndexingMap::identity(shape.len());
    build_transfer_read(b, src, vec![zero; shape.len()], pad, vty(&shape, &ty), map, &vec![true; shape.len()])
}

/// Writes `vec` over the whole of `dest`; returns the new tensor (or `dest` for memrefs).
pub fn write_full(b: &mut Builder, vec: ValueId, dest: ValueId) -> ValueId {
    let rank = b.f.ty(dest).rank();
    let zero = b.const_index(0);
    build_transfer_write(b, vec, dest, vec![zero; rank], IndexingMap::identity(rank), &vec![true; rank]).unwrap_or(dest)
}

pub(crate) fn transpose(b: &mut Builder, v: ValueId, perm: &[usize]) -> ValueId {
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return v;
    }
    let ty = b.f.ty(v).clone();
    let s = shape_of(b.f, v);
    let shape: Vec<i64> = perm.iter().map(|&p| s[p]).collect();
    let a = attrs(&[("permutation", Attr::Ints(perm.iter().map(|&p| p as i64).collect()))]);
    b.value("vector.transpose", vec![v], vty(&shape, &ty), a)
}

pub(crate) fn shape_cast(b: &mut Builder, v: ValueId, shape: &[i64]) -> ValueId {
    if shape_of(b.f, v) == shape {
        return v;
    }
    let ty = vty(shape, b.f.ty(v));
    b.value("vector.shape_cast", vec![v], ty, Default::default())
}

pub(crate) fn broadcast(b: &mut Builder, v: ValueId, shape: &[i64]) -> ValueId {
    let ty = b.f.ty(v).clone();
    if ty.is_vector() && ty.static_shape().as_deref() == Some(shape) {
        return v;
    }
    b.value("vector.broadcast", vec![v], Type::vector(shape, ty.elem()), Default::default())
}

/// Brings an operand vector indexed by iterators `dims` into the domain space `sizes` (iterator order).
fn to_domain(b: &mut Builder, v: ValueId, dims: &[usize], sizes: &[i64]) -> ValueId {
    let mut order: Vec<usize> = (0..dims.len()).collect();
    order.sort_by_key(|&j| dims[j]);
    let t = transpose(b, v, &order);
    let sorted: Vec<usize> = order.iter().map(|&j| dims[j]).collect();
    if sorted.len() == sizes.len() {
        return t;
    }
    let unit: Vec<i64> = (0..sizes.len()).map(|i| if sorted.contains(&i) { sizes[i] } else { 1 }).collect();
    let c = shape_cast(b, t, &unit);
    broadcast(b, c, sizes)
}

/// Inverse of `to_domain` for a vector over the sorted iterator subset `dims`.
fn from_sorted(b: &mut Builder, v: ValueId, dims: &[usize]) -> ValueId {
    let mut sorted = dims.to_vec();
    sorted.sort_unstable();
    let perm: Vec<usize> = dims.iter().map(|d| sorted.iter().position(|s| s == d).unwrap()).collect();
    transpose(b, v, &perm)
}

/// `(input a, input b)` block-arg positions when the body is `out + a * b`.
fn match_mul_add(f: &Function, body: BlockId, n_in: usize) -> Option<(usize, usize)> {
    let args = &f.block(body).args;
    let y = f.terminator(body)?;
    let &[r] = f.op(y).operands.as_slice() else { return None };
    let add = f.defining_op(r)?;
    let ad = f.op(add);
    if ad.name != "arith.addf" && ad.name != "arith.addi" {
        return None;
    }
    let out = args[n_in];
    let other = if ad.operands[0] == out { ad.operands[1] } else if ad.operands[1] == out { ad.operands[0] } else { return None };
    let mul = f.defining_op(other)?;
    let md = f.op(mul);
    if md.name != "arith.mulf" && md.name != "arith.muli" {
        return None;
    }
    let pos = |v: ValueId| args[..n_in].iter().position(|&a| a == v);
    Some((pos(md.operands[0])?, pos(md.operands[1])?))
}

/// `(kind, contribution)` when the body yields `comb(out, x)` with `x` independent of `out`.
fn match_reduction(f: &Function, body: BlockId, n_in: usize) -> Option<(&'static str, ValueId)> {
    let args = &f.block(body).args;
    let y = f.terminator(body)?;
    let &[r] = f.op(y).operands.as_slice() else { return None };
    let c = f.defining_op(r)?;
    let d = f.op(c);
    let kind = match d.name.as_str() {
        "arith.addf" | "arith.addi" => "add",
        "arith.mulf" | "arith.muli" => "mul",
        "arith.maxf" | "arith.maxsi" => "max",
        "arith.minf" | "arith.minsi" => "min",
        _ => return None,
    };
    let out = args[n_in];
    let x = if d.operands[0] == out { d.operands[1] } else if d.operands[1] == out { d.operands[0] } else { return None };
    if depends_on(f, x, out) {
        return None;
    }
    Some((kind, x))
}

fn depends_on(f: &Function, v: ValueId, target: ValueId) -> bool {
    if v == target {
        return true;
    }
    match f.def(v) {
        ValueDef::OpResult(op, _) => f.op(op).operands.iter().any(|&o| depends_on(f, o, target)),
        _ => false,
    }
}

/// Emits the body elementwise over domain vectors of shape `sizes`; `env` maps block args to vectors.
fn emit_body(
    b: &mut Builder,
    body: BlockId,
    env: &mut HashMap<ValueId, ValueId>,
    sizes: &[i64],
    upto: Option<ValueId>,
) -> Result<()> {
    let ops = b.f.block(body).ops.clone();
    for op in ops {
        let d = b.f.op(op).clone();
        if d.name == "linalg.yield" {
            break;
        }
        let elem_ty = b.f.ty(d.results[0]).clone();
        let res_ty = Type::vector(sizes, elem_ty.elem());
        let mut operands = Vec::new();
        for &o in &d.operands {
            let v = match env.get(&o) {
                Some(&v) => v,
                None if b.f.def_block(o) != Some(body) => {
                    let bv = broadcast(b, o, sizes);
                    env.insert(o, bv);
                    bv
                }
                None => return transform_err(format!("body value used before definition in '{}'", d.name)),
            };
            operands.push(v);
        }
        let v = match d.name.as_str() {
            n if ELEMENTWISE_BINARY.contains(&n) || n == "arith.select" => b.value(n, operands, res_ty, d.attrs.clone()),
            "arith.cmpi" | "arith.cmpf" => b.value(&d.name, operands, res_ty, d.attrs.clone()),
            "arith.constant" => b.value("arith.constant", vec![], res_ty, d.attrs.clone()),
            other => return transform_err(format!("unsupported body op '{other}'")),
        };
        env.insert(d.results[0], v);
        if Some(d.results[0]) == upto {
            break;
        }
    }
    Ok(())
}

/// Computes output vectors from operand vectors over a domain whose maps are projected permutations.
fn emit_compute(
    b: &mut Builder,
    view: &StructuredView,
    vecs: &[ValueId],
    dims: &[Vec<usize>],
    iterators: &[IteratorKind],
    sizes: &[i64],
    maps: &[IndexingMap],
    fused: bool,
) -> Result<Vec<ValueId>> {
    let n_in = view.inputs.len();
    let n_out = vecs.len() - n_in;
    let args = b.f.block(view.body).args.clone();
    let has_red = iterators.contains(&IteratorKind::Reduction);
    if has_red || fused {
        if n_out != 1 {
            return transform_err("reductions with several outputs are not supported");
        }
        let out_dims = &dims[n_in];
        if out_dims.iter().any(|&d| iterators[d] == IteratorKind::Reduction) {
            return transform_err("output indexed by a reduction iterator");
        }
        if let Some((x, y)) = match_mul_add(b.f, view.body, n_in) {
            if has_red {
                let a = attrs(&[
                    ("indexing_maps", Attr::Maps(vec![maps[x].clone(), maps[y].clone(), maps[n_in].clone()])),
                    ("iterator_types", encode_iterators(iterators)),
                ]);
                let ty = b.f.ty(vecs[n_in]).clone();
                return Ok(vec![b.value("vector.contract", vec![vecs[x], vecs[y], vecs[n_in]], ty, a)]);
            }
            // all-parallel multiply-accumulate: one fused fma in domain space
            let l = to_domain(b, vecs[x], &dims[x], sizes);
            let r = to_domain(b, vecs[y], &dims[y], sizes);
            let acc = to_domain(b, vecs[n_in], out_dims, sizes);
            let ty = b.f.ty(acc).clone();
            let fma = b.value("vector.fma", vec![l, r, acc], ty, Default::default());
            return Ok(vec![from_sorted(b, fma, out_dims)]);
        }
        let Some((kind, x)) = match_reduction(b.f, view.body, n_in) else {
            return transform_err("reduction body is neither multiply-add nor a single combinator");
        };
        let mut env = HashMap::new();
        for k in 0..n_in {
            let dv = to_domain(b, vecs[k], &dims[k], sizes);
            env.insert(args[k], dv);
        }
        let xv = if let Some(&v) = env.get(&x) {
            v
        } else {
            emit_body(b, view.body, &mut env, sizes, Some(x))?;
            match env.get(&x) {
                Some(&v) => v,
                None => broadcast(b, x, sizes),
            }
        };
        let mut sorted = out_dims.clone();
        sorted.sort_unstable();
        let mut order: Vec<usize> = (0..out_dims.len()).collect();
        order.sort_by_key(|&j| out_dims[j]);
        let acc = transpose(b, vecs[n_in], &order);
        let red: Vec<i64> = (0..sizes.len()).filter(|i| !sorted.contains(i)).map(|i| i as i64).collect();
        let ty = b.f.ty(acc).clone();
        let a = attrs(&[("kind", Attr::Str(kind.into())), ("reduction_dims", Attr::Ints(red))]);
        let r = b.value("vector.multi_reduction", vec![xv, acc], ty, a);
        return Ok(vec![from_sorted(b, r, out_dims)]);
    }
    let mut env = HashMap::new();
    for k in 0..vecs.len() {
        let dv = to_domain(b, vecs[k], &dims[k], sizes);
        env.insert(args[k], dv);
    }
    emit_body(b, view.body, &mut env, sizes, None)?;
    let yielded = b.f.op(b.f.terminator(view.body).unwrap()).operands.clone();
    let mut outs = Vec::new();
    for (j, y) in yielded.iter().enumerate() {
        let od = &dims[n_in + j];
        if od.len() != sizes.len() {
            return transform_err("parallel op output must index every iterator");
        }
        let v = match env.get(y) {
            Some(&v) => v,
            None => broadcast(b, *y, sizes),
        };
        outs.push(from_sorted(b, v, od));
    }
    Ok(outs)
}

/// Vectorizes one structured op with static operand types; returns the case used.
pub fn vectorize_structured(f: &mut Function, op: OpId) -> Result<VectorCase> {
    let view = StructuredView::new(f, op);
    let operands = view.operands();
    if operands.iter().any(|&v| !f.ty(v).has_static_shape()) {
        return transform_err("vectorization requires static operand shapes");
    }
    if operands.iter().any(|&v| f.ty(v).rank() == 0) {
        return transform_err("vectorization of rank-0 operands is not supported");
    }
    let case = classify(f, op)?;
    let sizes = derive_iteration_domain(f, op)?.static_sizes().expect("static domain");
    let n_in = view.inputs.len();
    let mut b = Builder::before(f, op);
    let vecs: Vec<ValueId> = operands.iter().map(|&v| read_full(&mut b, v)).collect();
    let outs = if case == VectorCase::Convolution {
        emit_convolution(&mut b, &view, &vecs, &sizes)?
    } else {
        let dims: Vec<Vec<usize>> = view.maps.iter().map(|m| projected_dims(m).unwrap()).collect();
        emit_compute(&mut b, &view, &vecs, &dims, &view.iterators, &sizes, &view.maps, false)?
    };
    let mut results = Vec::new();
    for (j, &v) in outs.iter().enumerate() {
        results.push(write_full(&mut b, v, operands[n_in + j]));
    }
    let tensor_results: Vec<ValueId> =
        results.iter().zip(&view.outputs).filter(|(_, &o)| f.ty(o).is_tensor()).map(|(&r, _)| r).collect();
    f.replace_op(op, &tensor_results);
    Ok(case)
}

/// Case 5: unroll window, strided and unit iterators, then one contract/fma per slice.
fn emit_convolution(b: &mut Builder, view: &StructuredView, vecs: &[ValueId], sizes: &[i64]) -> Result<Vec<ValueId>> {
    let n = sizes.len();
    let mut unrolled = vec![false; n];
    for m in &view.maps {
        for e in &m.results {
            for (&d, &c) in &e.coeffs {
                if (e.coeffs.len() > 1 && view.iterators[d] == IteratorKind::Reduction) || c != 1 {
                    unrolled[d] = true;
                }
            }
        }
    }
    let forced = unrolled.clone();
    for i in 0..n {
        unrolled[i] |= sizes[i] == 1;
    }
    // keep unit iterators when nothing else is left to vectorize
    if unrolled.iter().all(|&u| u) {
        unrolled = forced;
    }
    // Each remaining iterator may appear at most once per expression with coefficient 1.
    let kept: Vec<usize> = (0..n).filter(|&i| !unrolled[i]).collect();
    if kept.is_empty() {
        return transform_err("convolution tile has no vectorizable dimension");
    }
    let renum: HashMap<usize, usize> = kept.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let sub_sizes: Vec<i64> = kept.iter().map(|&i| sizes[i]).collect();
    let sub_iters: Vec<IteratorKind> = kept.iter().map(|&i| view.iterators[i]).collect();
    let mut sub_dims = Vec::new();
    let mut sub_maps = Vec::new();
    for m in &view.maps {
        let mut ds = Vec::new();
        for e in &m.results {
            let ks: Vec<usize> = e.coeffs.keys().copied().filter(|d| !unrolled[*d]).collect();
            match ks.as_slice() {
                [] => {}
                [d] => ds.push(renum[d]),
                _ => return transform_err("index expression combines several vectorized iterators"),
            }
        }
        sub_maps.push(IndexingMap::from_dims(kept.len(), &ds));
        sub_dims.push(ds);
    }
    let unrolled_sizes: Vec<i64> = (0..n).map(|i| if unrolled[i] { sizes[i] } else { 1 }).collect();
    let n_in = view.inputs.len();
    let mut cur: Vec<ValueId> = vecs[n_in..].to_vec();
    let mut points = Vec::new();
    for_each_point(&unrolled_sizes, |p| points.push(p.to_vec()));
    for p in points {
        let mut subs = Vec::new();
        let mut slices = Vec::new();
        for (k, m) in view.maps.iter().enumerate() {
            let src = if k < n_in { vecs[k] } else { cur[k - n_in] };
            let mut offs = Vec::new();
            let mut lens = Vec::new();
            for e in &m.results {
                let fixed: i64 = e.constant + e.coeffs.iter().filter(|(d, _)| unrolled[**d]).map(|(&d, &c)| c * p[d]).sum::<i64>();
                offs.push(fixed);
                lens.push(e.coeffs.keys().find(|d| !unrolled[**d]).map_or(1, |&d| sizes[d]));
            }
            let ty = b.f.ty(src).clone();
            let a = attrs(&[("offsets", Attr::Ints(offs.clone())), ("sizes", Attr::Ints(lens.clone()))]);
            let full = shape_of(b.f, src) == lens;
            let s = if full { src } else { b.value("vector.extract_strided_slice", vec![src], vty(&lens, &ty), a) };
            let squeezed: Vec<i64> = sub_dims[k].iter().map(|&d| sub_sizes[d]).collect();
            subs.push(shape_cast(b, s, &squeezed));
            slices.push((offs, lens));
        }
        let fused = !sub_iters.contains(&IteratorKind::Reduction);
        let outs = emit_compute(b, view, &subs, &sub_dims, &sub_iters, &sub_sizes, &sub_maps, fused)?;
        for (j, v) in outs.into_iter().enumerate() {
            let (offs, lens) = &slices[n_in + j];
            let back = shape_cast(b, v, lens);
            let dest = cur[j];
            cur[j] = if shape_of(b.f, dest) == *lens {
                back
            } else {
                let ty = b.f.ty(dest).clone();
                let a = attrs(&[("offsets", Attr::Ints(offs.clone()))]);
                b.value("vector.insert_strided_slice", vec![back, dest], ty, a)
            };
        }
    }
    Ok(cur)
}

/// Rewrites a statically shaped `tensor.pad` into a masked transfer read and a write into a fresh tensor.
pub fn vectorize_pad(f: &mut Function, pad: OpId) -> Result<()> {
    let p = PadView::new(f, pad);
    let rty = f.ty(f.op(pad).results[0]).clone();
    let Some(shape) = rty.static_shape() else {
        return transform_err("pad vectorization requires a static result type");
    };
    let src_ty = f.ty(p.source).clone();
    if p.low.iter().any(|&l| const_int(f, l) != Some(0)) {
        return transform_err("pad vectorization supports only high padding");
    }
    let in_bounds: Vec<bool> = (0..shape.len())
        .map(|d| src_ty.dims()[d].as_static().is_some() && const_int(f, p.high[d]) == Some(0))
        .collect();
    let mut b = Builder::before(f, pad);
    let zero = b.const_index(0);
    let pv = b.constant_attr(p.pad_value.clone(), Type::scalar(rty.elem()));
    let map = IndexingMap::identity(shape.len());
    let v = build_transfer_read(&mut b, p.source, vec![zero; shape.len()], pv, vty(&shape, &rty), map.clone(), &in_bounds);
    let dest = b.value("tensor.empty", vec![], rty.clone(), Default::default());
    let w = build_transfer_write(&mut b, v, dest, vec![zero; shape.len()], map, &vec![true; shape.len()]).unwrap();
    f.replace_op(pad, &[w]);
    Ok(())
}

/// Moves pure, region-free ops whose operands are all defined outside their loop in front of it.
pub fn hoist_loop_invariants(f: &mut Function) -> usize {
    let mut moved = 0;
    loop {
        let mut changed = false;
        for op in f.walk() {
            let d = f.op(op);
            if d.erased || d.parent.is_none() || !d.regions.is_empty() || !is_pure(f, op) {
                continue;
            }
            let Some(parent) = f.parent_op(op) else { continue };
            if f.op(parent).name != "scf.for" {
                continue;
            }
            let invariant = d.operands.iter().all(|&v| match f.def_block(v) {
                Some(bl) => !f.block_is_nested_in(bl, parent),
                None => true,
            });
            if invariant {
                f.move_before(op, parent);
                moved += 1;
                changed = true;
            }
        }
        if !changed {
            return moved;
        }
    }
}

/// Vectorizes every statically shaped structured op (and pads, when requested), then hoists invariants.
pub fn vectorize(f: &mut Function, opts: VectorizeOptions) -> Result<usize> {
    let mut count = 0;
    for op in f.walk() {
        let d = f.op(op);
        if d.erased || !is_structured(&d.name) {
            continue;
        }
        let all_static = d.operands.iter().all(|&v| f.ty(v).has_static_shape());
        if all_static && d.operands.iter().all(|&v| f.ty(v).is_tensor()) {
            vectorize_structured(f, op)?;
            count += 1;
        }
    }
    if opts.vectorize_padding {
        for op in f.find_ops("tensor.pad") {
            if f.ty(f.op(op).results[0]).has_static_shape() {
                vectorize_pad(f, op)?;
                count += 1;
            }
        }
    }
    super::vector_folds::fold_vectors(f)?;
    hoist_loop_invariants(f);
    Ok(count)
}
