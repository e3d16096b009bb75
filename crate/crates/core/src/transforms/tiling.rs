//! Tiling of structured ops into `scf.for` nests over tensor slices, plus peeling and loop unrolling.

use std::collections::HashMap;

use super::canonicalize::canonicalize;
use crate::error::{transform_err, Result};
use crate::ir::ops::{build_extract_slice, build_for, build_insert_slice, ForView, SizeRef};
use crate::ir::{const_int, Attr, Builder, Function, IndexingMap, OpId, ValueId};
use crate::structured::domain::{derive_iteration_domain, DomainSize};
use crate::structured::StructuredView;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TileConfig {
    /// One size per iterator; 0 leaves the iterator untiled.
    pub sizes: Vec<i64>,
    /// Order of the generated loops as indices into the tiled iterators; empty means identity.
    pub interchange: Vec<usize>,
    /// Positions in the generated nest (outermost = 0) to peel.
    pub peel: Vec<usize>,
    /// The nest will be padded to static tile shapes afterwards.
    pub pad: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopNest {
    /// Outermost first.
    pub loops: Vec<OpId>,
    pub inner: OpId,
}

/// Per-iterator position and extent of the current tile.
#[derive(Debug, Clone, Copy)]
pub struct TileDim {
    pub offset: ValueId,
    pub size: SizeRef,
}

/// Builds `1 + sum c_d * (s_d - 1)`: the extent of an index expression over a tile.
fn image_size(b: &mut Builder, e: &crate::ir::IndexExpr, dims: &[TileDim]) -> Result<SizeRef> {
    if e.coeffs.values().any(|&c| c < 0) {
        return transform_err("negative index coefficient in indexing map");
    }
    if let Some(d) = e.as_dim() {
        return Ok(dims[d].size);
    }
    let mut stat = 1i64;
    let mut acc: Option<ValueId> = None;
    for (&d, &c) in &e.coeffs {
        match dims[d].size {
            SizeRef::Static(n) => stat += c * (n - 1),
            SizeRef::Dynamic(v) => {
                stat -= c;
                let t = b.mul_const(v, c);
                acc = Some(match acc {
                    Some(a) => b.addi(a, t),
                    None => t,
                });
            }
        }
    }
    Ok(match acc {
        None => SizeRef::Static(stat),
        Some(a) => SizeRef::Dynamic(b.add_const(a, stat)),
    })
}

fn image_offset(b: &mut Builder, e: &crate::ir::IndexExpr, dims: &[TileDim]) -> ValueId {
    let mut acc = b.const_index(e.constant);
    for (&d, &c) in &e.coeffs {
        let t = b.mul_const(dims[d].offset, c);
        acc = b.addi(acc, t);
    }
    acc
}

/// Slices `v` to the image of the tile under `map`.
pub fn slice_operand(b: &mut Builder, v: ValueId, map: &IndexingMap, dims: &[TileDim]) -> Result<(ValueId, Vec<ValueId>, Vec<SizeRef>)> {
    let mut offsets = Vec::new();
    let mut sizes = Vec::new();
    for e in &map.results {
        offsets.push(image_offset(b, e, dims));
        sizes.push(image_size(b, e, dims)?);
    }
    let s = build_extract_slice(b, v, offsets.clone(), &sizes, 0);
    Ok((s, offsets, sizes))
}

fn validate(cfg: &TileConfig, n_iters: usize) -> Result<Vec<usize>> {
    if cfg.sizes.len() != n_iters {
        return transform_err(format!("expected {n_iters} tile sizes, got {}", cfg.sizes.len()));
    }
    if let Some(s) = cfg.sizes.iter().find(|&&s| s < 0) {
        return transform_err(format!("negative tile size {s}"));
    }
    let tiled: Vec<usize> = (0..n_iters).filter(|&i| cfg.sizes[i] > 0).collect();
    let order: Vec<usize> = if cfg.interchange.is_empty() {
        (0..tiled.len()).collect()
    } else {
        cfg.interchange.clone()
    };
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (0..tiled.len()).collect::<Vec<_>>() {
        return transform_err(format!("interchange {:?} is not a permutation of the {} tiled loops", order, tiled.len()));
    }
    if let Some(p) = cfg.peel.iter().find(|&&p| p >= tiled.len()) {
        return transform_err(format!("peel index {p} exceeds the {} tiled loops", tiled.len()));
    }
    Ok(order.iter().map(|&k| tiled[k]).collect())
}

/// Tiles structured op `op` according to `cfg`.
pub fn tile_op(f: &mut Function, op: OpId, cfg: &TileConfig) -> Result<LoopNest> {
    let view = StructuredView::new(f, op);
    let n = view.n_iters();
    let loop_dims = validate(cfg, n)?;
    let domain = derive_iteration_domain(f, op)?;
    if view.outputs.iter().any(|&o| !f.ty(o).is_tensor()) {
        return transform_err("tiling requires tensor operands");
    }
    for &p in &cfg.peel {
        let i = loop_dims[p];
        let divisible = domain.sizes[i].as_static().is_some_and(|e| e % cfg.sizes[i] == 0);
        if cfg.pad && !divisible {
            return transform_err(format!("peel and pad both requested on non-divisible loop {p}"));
        }
    }
    if loop_dims.is_empty() {
        return Ok(LoopNest { loops: vec![], inner: op });
    }
    let operands = view.operands();
    let mut b = Builder::before(f, op);
    let extents: Vec<ValueId> = domain
        .sizes
        .iter()
        .map(|s| match *s {
            DomainSize::Static(e) => b.const_index(e),
            DomainSize::Dynamic { operand, dim } => b.dim(operands[operand], dim),
        })
        .collect();
    let zero = b.const_index(0);
    let steps: Vec<ValueId> = loop_dims.iter().map(|&i| b.const_index(cfg.sizes[i])).collect();

    // Loop nest threading the full output tensors.
    let mut loops: Vec<ForView> = Vec::new();
    let mut carried = view.outputs.clone();
    let mut ivs = vec![None; n];
    for (&i, &step) in loop_dims.iter().zip(&steps) {
        let l = build_for(&mut b, zero, extents[i], step, carried.clone());
        carried = l.iter_args.clone();
        ivs[i] = Some(l.iv);
        let body = l.body;
        loops.push(l);
        b = Builder::at_end(b.f, body);
    }

    let mut dims = Vec::with_capacity(n);
    let mut tile_sizes = Vec::with_capacity(n);
    for i in 0..n {
        let ext = domain.sizes[i].as_static();
        let d = match ivs[i] {
            Some(iv) => {
                let ts = cfg.sizes[i];
                tile_sizes.push(ts);
                let size = match ext {
                    Some(e) if e % ts == 0 => SizeRef::Static(ts),
                    _ => {
                        let rem = b.subi(extents[i], iv);
                        let t = b.const_index(ts);
                        SizeRef::Dynamic(b.min(t, rem))
                    }
                };
                TileDim { offset: iv, size }
            }
            None => {
                tile_sizes.push(ext.unwrap_or(-1));
                let size = match ext {
                    Some(e) => SizeRef::Static(e),
                    None => SizeRef::Dynamic(extents[i]),
                };
                TileDim { offset: zero, size }
            }
        };
        dims.push(d);
    }

    let n_in = view.inputs.len();
    let mut slices = Vec::new();
    let mut out_slices = Vec::new();
    for (k, (&v, m)) in operands.iter().zip(&view.maps).enumerate() {
        let src = if k < n_in { v } else { carried[k - n_in] };
        let (s, offs, sizes) = slice_operand(&mut b, src, m, &dims)?;
        slices.push(s);
        if k >= n_in {
            out_slices.push((offs, sizes));
        }
    }
    let inner = b.f.clone_op_detached(op, &mut HashMap::new());
    b.f.op_mut(inner).operands = slices;
    b.insert(inner);
    let new_outs: Vec<ValueId> = b.f.op(inner).operands[n_in..].to_vec();
    let results = b.f.op(inner).results.clone();
    for (&r, &o) in results.iter().zip(&new_outs) {
        let t = b.f.ty(o).clone();
        b.f.set_ty(r, t);
    }
    b.f.op_mut(inner).attrs.insert("tile_sizes".into(), Attr::Ints(tile_sizes));

    let mut yielded = Vec::new();
    for (k, &r) in results.iter().enumerate() {
        let (offs, sizes) = &out_slices[k];
        yielded.push(build_insert_slice(&mut b, r, carried[k], offs.clone(), sizes));
    }
    b.yield_("scf.yield", yielded);
    for w in (1..loops.len()).rev() {
        let inner_results = loops[w].results.clone();
        let mut yb = Builder::at_end(f, loops[w - 1].body);
        yb.yield_("scf.yield", inner_results);
    }
    let outer = loops[0].results.clone();
    f.replace_op(op, &outer);

    let mut nest = LoopNest { loops: loops.iter().map(|l| l.op).collect(), inner };
    for &p in &cfg.peel {
        nest = peel_partial_tiles(f, &nest, p)?;
    }
    Ok(nest)
}

/// Splits loop `loop_index` of `nest` into a main loop over full tiles and a straight-line remainder.
pub fn peel_partial_tiles(f: &mut Function, nest: &LoopNest, loop_index: usize) -> Result<LoopNest> {
    let Some(&lop) = nest.loops.get(loop_index) else {
        return transform_err(format!("peel index {loop_index} exceeds nest depth {}", nest.loops.len()));
    };
    let l = ForView::new(f, lop);
    let Some((lb, ub, step)) = l.const_bounds(f) else {
        return transform_err("cannot peel a loop with dynamic bounds");
    };
    let main_ub = lb + step * ((ub - lb).max(0) / step);
    if main_ub == ub {
        return Ok(nest.clone());
    }
    let mut b = Builder::before(f, lop);
    let main_ub_v = b.const_index(main_ub);
    f.op_mut(lop).operands[1] = main_ub_v;

    // Remainder: the body once more at iv = main_ub, fed by the main loop's results.
    let uses: Vec<Vec<(OpId, usize)>> = l.results.iter().map(|&r| f.uses(r)).collect();
    let mut map = HashMap::new();
    map.insert(l.iv, main_ub_v);
    for (&a, &r) in l.iter_args.iter().zip(&l.results) {
        map.insert(a, r);
    }
    let mut ip = f.after(lop);
    let body_ops = f.block(l.body).ops.clone();
    let (term, body_ops) = body_ops.split_last().expect("loop body without terminator");
    for &o in body_ops {
        f.clone_op(o, ip, &mut map);
        ip.index += 1;
    }
    let tail_vals: Vec<ValueId> = f.op(*term).operands.iter().map(|v| *map.get(v).unwrap_or(v)).collect();
    for (us, &t) in uses.iter().zip(&tail_vals) {
        for &(o, i) in us {
            f.op_mut(o).operands[i] = t;
        }
    }
    // Inside the main loop every tile is full: tc.min(step, ub - iv) == step.
    for o in f.walk_nested(lop) {
        let d = f.op(o);
        if d.name != "tc.min" || d.erased || const_int(f, d.operands[0]) != Some(step) {
            continue;
        }
        let Some(sub) = f.defining_op(d.operands[1]) else { continue };
        let s = f.op(sub);
        if s.name == "arith.subi" && s.operands[1] == l.iv && const_int(f, s.operands[0]) == Some(ub) {
            let c = d.operands[0];
            f.replace_op(o, &[c]);
        }
    }

    canonicalize(f)?;
    Ok(nest.clone())
}

/// Unrolls the `parent_loop_num`-th enclosing loop of `op` (1 = innermost) by `amount`.
pub fn unroll_parent_loop(f: &mut Function, op: OpId, parent_loop_num: usize, amount: i64) -> Result<()> {
    let loops = f.enclosing_loops(op);
    if parent_loop_num == 0 || parent_loop_num > loops.len() {
        return transform_err(format!("parent loop {parent_loop_num} exceeds nesting depth {}", loops.len()));
    }
    if amount < 1 {
        return transform_err(format!("unroll amount must be positive, got {amount}"));
    }
    let lop = loops[parent_loop_num - 1];
    unroll_loop(f, lop, amount)
}

/// Unrolls `scf.for` `lop` by `amount`, emitting a remainder loop when the trip count is not divisible.
pub fn unroll_loop(f: &mut Function, lop: OpId, amount: i64) -> Result<()> {
    if amount == 1 {
        return Ok(());
    }
    let l = ForView::new(f, lop);
    let (Some((lb, _, step)), Some(trip)) = (l.const_bounds(f), l.trip_count(f)) else {
        return transform_err("cannot unroll a loop with non-constant trip count");
    };
    let main_trips = trip / amount * amount;
    if main_trips == 0 {
        return Ok(());
    }
    if main_trips != trip {
        let split = lb + main_trips * step;
        let uses: Vec<Vec<(OpId, usize)>> = l.results.iter().map(|&r| f.uses(r)).collect();
        let mut map = HashMap::new();
        let rem = f.clone_op(lop, f.after(lop), &mut map);
        let split_v = Builder::before(f, lop).const_index(split);
        f.op_mut(lop).operands[1] = split_v;
        f.op_mut(rem).operands[0] = split_v;
        for (k, &r) in l.results.iter().enumerate() {
            f.op_mut(rem).operands[3 + k] = r;
        }
        let rem_results = f.op(rem).results.clone();
        for (us, &t) in uses.iter().zip(&rem_results) {
            for &(o, i) in us {
                f.op_mut(o).operands[i] = t;
            }
        }
    }
    let mut b = Builder::before(f, lop);
    let new_step = b.const_index(step * amount);
    f.op_mut(lop).operands[2] = new_step;

    let body_ops = f.block(l.body).ops.clone();
    let (&term, body_ops) = body_ops.split_last().expect("loop body without terminator");
    let yielded: Vec<ValueId> = f.op(term).operands.clone();
    let mut carried = yielded.clone();
    for k in 1..amount {
        let mut b = Builder::before(f, term);
        let iv_k = b.add_const(l.iv, k * step);
        let mut map = HashMap::new();
        map.insert(l.iv, iv_k);
        for (&a, &c) in l.iter_args.iter().zip(&carried) {
            map.insert(a, c);
        }
        for &o in body_ops {
            f.clone_op(o, f.before(term), &mut map);
        }
        carried = yielded.iter().map(|v| *map.get(v).unwrap_or(v)).collect();
    }
    f.op_mut(term).operands = carried;
    Ok(())
}
