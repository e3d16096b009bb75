//! Padding of tile operands to static shapes and hoisting of pads into packed tensors.

use std::collections::{HashMap, HashSet};

use crate::error::{transform_err, Result};
use crate::ir::ops::{build_extract_slice, build_for, build_insert_slice, is_pure, ForView, SizeRef};
use crate::ir::{attrs, const_int, Attr, Builder, Dim, Function, IndexingMap, OpId, Type, ValueDef, ValueId};
use crate::structured::StructuredView;

/// Static padded shape of an operand: the image of the static tile under its indexing map.
fn padded_shape(map: &IndexingMap, tile: &[i64]) -> Vec<i64> {
    map.results.iter().map(|e| 1 + e.coeffs.iter().map(|(&d, &c)| c * (tile[d] - 1)).sum::<i64>()).collect()
}

fn pad_attr(value: f64, elem_is_float: bool) -> Attr {
    if elem_is_float {
        Attr::Float(value)
    } else {
        Attr::Int(value as i64)
    }
}

/// Emits `tensor.pad` of `src` with `low = 0` and the given high amounts.
pub fn build_pad(b: &mut Builder, src: ValueId, high: Vec<ValueId>, result: Type, value: Attr, nofold: bool) -> ValueId {
    let zero = b.const_index(0);
    let mut operands = vec![src];
    operands.extend(std::iter::repeat_n(zero, high.len()));
    operands.extend(high);
    let a = attrs(&[("pad_value", value), ("nofold", Attr::Bool(nofold))]);
    b.value("tensor.pad", operands, result, a)
}

/// Pads every operand of tiled op `op` to the static tile shape recorded by tiling.
///
/// Returns the pad op created for each operand, if any. Padded outputs are sliced back to the valid
/// region after the op, so stored results are unchanged.
pub fn pad_operands(f: &mut Function, op: OpId, pad_values: &[f64], nofold: &[bool]) -> Result<Vec<Option<OpId>>> {
    let view = StructuredView::new(f, op);
    let Some(tile) = f.op(op).ints_attr("tile_sizes").map(|t| t.to_vec()) else {
        return transform_err("padding requires an op produced by tiling");
    };
    if tile.iter().any(|&t| t < 0) {
        return transform_err("cannot pad: tile has a dynamic untiled extent");
    }
    let operands = view.operands();
    let n_in = view.inputs.len();
    let mut pads = Vec::new();
    let mut new_operands = operands.clone();
    for (k, (&v, m)) in operands.iter().zip(&view.maps).enumerate() {
        let ty = f.ty(v).clone();
        let target = padded_shape(m, &tile);
        let keep = nofold.get(k).copied().unwrap_or(false);
        if ty.static_shape().as_deref() == Some(&target[..]) && !keep {
            pads.push(None);
            continue;
        }
        if ty.dims().iter().zip(&target).any(|(d, &t)| d.as_static().is_some_and(|n| n > t)) {
            return transform_err(format!("operand {k} of type {ty} exceeds padded shape {target:?}"));
        }
        let Some(&value) = pad_values.get(k) else {
            return transform_err(format!("missing pad value for operand {k}"));
        };
        let mut b = Builder::before(f, op);
        let mut high = Vec::new();
        for (d, &t) in target.iter().enumerate() {
            let sz = b.dim(v, d);
            let tv = b.const_index(t);
            high.push(b.subi(tv, sz));
        }
        let result = Type::static_tensor(&target, ty.elem());
        let p = build_pad(&mut b, v, high, result, pad_attr(value, ty.elem().is_float()), keep);
        new_operands[k] = p;
        pads.push(f.defining_op(p));
    }
    f.op_mut(op).operands = new_operands.clone();

    let results = f.op(op).results.clone();
    for (j, &r) in results.iter().enumerate() {
        let orig = operands[n_in + j];
        let padded_ty = f.ty(new_operands[n_in + j]).clone();
        if *f.ty(orig) == padded_ty {
            continue;
        }
        f.set_ty(r, padded_ty.clone());
        let mut b = Builder::new(f, f.after(op));
        let zero = b.const_index(0);
        let orig_ty = b.f.ty(orig).clone();
        let sizes: Vec<SizeRef> = (0..orig_ty.rank())
            .map(|d| match orig_ty.dims()[d] {
                Dim::Static(n) => SizeRef::Static(n),
                Dim::Dynamic => SizeRef::Dynamic(b.dim(orig, d)),
            })
            .collect();
        let valid = build_extract_slice(&mut b, r, vec![zero; sizes.len()], &sizes, 0);
        let ex = f.defining_op(valid).unwrap();
        f.replace_uses_where(r, valid, |_, o| o != ex);
    }
    Ok(pads)
}

/// The ops computing `pad` inside `outer`, in program order, and the hoisted induction variables used.
fn backward_slice(f: &Function, pad: OpId, outer: OpId, hoisted: &[ForView]) -> Result<(Vec<OpId>, HashSet<ValueId>)> {
    let ivs: HashSet<ValueId> = hoisted.iter().map(|l| l.iv).collect();
    let mut ops = HashSet::new();
    let mut used_ivs = HashSet::new();
    let mut stack = vec![pad];
    while let Some(o) = stack.pop() {
        if !ops.insert(o) {
            continue;
        }
        if !f.op(o).regions.is_empty() || (o != pad && !is_pure(f, o)) {
            return transform_err(format!("pad depends on non-hoistable op '{}'", f.op(o).name));
        }
        for &v in &f.op(o).operands {
            if !inside(f, v, outer) {
                continue;
            }
            match f.def(v) {
                ValueDef::OpResult(d, _) => stack.push(d),
                _ if ivs.contains(&v) => {
                    used_ivs.insert(v);
                }
                _ => return transform_err("pad depends on a value that varies inside the hoisted loops"),
            }
        }
    }
    let mut ordered: Vec<OpId> = ops.into_iter().collect();
    ordered.sort_by_key(|&o| f.path(o));
    Ok((ordered, used_ivs))
}

/// `true` if `v` is defined inside `op`.
fn inside(f: &Function, v: ValueId, op: OpId) -> bool {
    match f.def_block(v) {
        Some(b) => f.block_is_nested_in(b, op),
        None => false,
    }
}

fn tile_index(b: &mut Builder, l: &ForView, iv: ValueId) -> ValueId {
    let off = b.subi(iv, l.lb);
    b.divsi(off, l.step)
}

/// Hoists `pad` out of its `n_loops` innermost enclosing loops into a packed tensor.
///
/// Returns the packed tensor, or `None` when `n_loops` is 0.
pub fn hoist_padding(f: &mut Function, pad: OpId, n_loops: usize) -> Result<Option<ValueId>> {
    if n_loops == 0 {
        return Ok(None);
    }
    let loops = f.enclosing_loops(pad);
    if n_loops > loops.len() {
        return transform_err(format!("cannot hoist by {n_loops} loops: nesting depth is {}", loops.len()));
    }
    let pad_ty = f.ty(f.op(pad).results[0]).clone();
    let Some(tile_shape) = pad_ty.static_shape() else {
        return transform_err("hoisted pad must have a static result type");
    };
    let outer = loops[n_loops - 1];
    let hoisted: Vec<ForView> = loops[..n_loops].iter().rev().map(|&l| ForView::new(f, l)).collect();
    let (slice, used) = backward_slice(f, pad, outer, &hoisted)?;
    let packed_loops: Vec<ForView> = hoisted.into_iter().filter(|l| used.contains(&l.iv)).collect();
    for l in &packed_loops {
        if [l.lb, l.ub, l.step].iter().any(|&v| inside(f, v, outer)) {
            return transform_err("hoisted loop bounds must be defined outside the hoisted nest");
        }
    }

    // Prologue: compute every padded tile once into the packed tensor.
    let mut b = Builder::before(f, outer);
    let counts: Vec<ValueId> = packed_loops
        .iter()
        .map(|l| {
            let span = b.subi(l.ub, l.lb);
            let s1 = match const_int(b.f, l.step) {
                Some(s) => b.add_const(span, s - 1),
                None => {
                    let one = b.const_index(1);
                    let sm1 = b.subi(l.step, one);
                    b.addi(span, sm1)
                }
            };
            b.divsi(s1, l.step)
        })
        .collect();
    let mut dims: Vec<Dim> = vec![Dim::Dynamic; counts.len()];
    dims.extend(tile_shape.iter().map(|&n| Dim::Static(n)));
    let packed_ty = Type::tensor(dims, pad_ty.elem());
    let mut packed = b.value("tensor.empty", counts, packed_ty, Default::default());
    let mut map: HashMap<ValueId, ValueId> = HashMap::new();
    let mut fills: Vec<ForView> = Vec::new();
    for l in &packed_loops {
        let nl = build_for(&mut b, l.lb, l.ub, l.step, vec![packed]);
        map.insert(l.iv, nl.iv);
        packed = nl.iter_args[0];
        let body = nl.body;
        fills.push(nl);
        b = Builder::at_end(b.f, body);
    }
    for &o in &slice {
        let c = b.f.clone_op_detached(o, &mut map);
        b.insert(c);
    }
    let tile = map[&f.op(pad).results[0]];
    let mut b = match fills.last() {
        Some(l) => Builder::at_end(f, l.body),
        None => Builder::before(f, outer),
    };
    let mut offsets: Vec<ValueId> = packed_loops.iter().map(|l| tile_index(&mut b, l, map[&l.iv])).collect();
    let zero = b.const_index(0);
    offsets.extend(std::iter::repeat_n(zero, tile_shape.len()));
    let mut sizes: Vec<SizeRef> = vec![SizeRef::Static(1); packed_loops.len()];
    sizes.extend(tile_shape.iter().map(|&n| SizeRef::Static(n)));
    let packed_result = if fills.is_empty() {
        tile
    } else {
        let ins = build_insert_slice(&mut b, tile, packed, offsets, &sizes);
        b.yield_("scf.yield", vec![ins]);
        for w in (1..fills.len()).rev() {
            let r = fills[w].results.clone();
            Builder::at_end(f, fills[w - 1].body).yield_("scf.yield", r);
        }
        fills[0].results[0]
    };

    // Inside the nest the pad becomes a slice of the packed tensor.
    let mut b = Builder::before(f, pad);
    let replacement = if packed_loops.is_empty() {
        packed_result
    } else {
        let mut offsets: Vec<ValueId> = packed_loops.iter().map(|l| tile_index(&mut b, l, l.iv)).collect();
        let zero = b.const_index(0);
        offsets.extend(std::iter::repeat_n(zero, tile_shape.len()));
        build_extract_slice(&mut b, packed_result, offsets, &sizes, packed_loops.len())
    };
    f.replace_op(pad, &[replacement]);
    crate::ir::rewrite::eliminate_dead_code(f);
    Ok(Some(packed_result))
}
