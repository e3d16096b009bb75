//! Canonicalization patterns: index-arithmetic folding, partial-tile size folding and type refinement.

use crate::error::Result;
use crate::ir::ops::{decode_sizes, encode_sizes, is_structured, PadView, SizeRef};
use crate::ir::rewrite::{apply_greedily, pattern, Pattern, RewriteStats};
use crate::ir::{const_int, Attr, Builder, Dim, Function, OpId};

fn fold_int(name: &str, a: i64, b: i64) -> Option<i64> {
    Some(match name {
        "arith.addi" => a.wrapping_add(b),
        "arith.subi" => a.wrapping_sub(b),
        "arith.muli" => a.wrapping_mul(b),
        "arith.divsi" if b != 0 => a / b,
        "arith.remsi" if b != 0 => a % b,
        "arith.minsi" | "tc.min" => a.min(b),
        "arith.maxsi" => a.max(b),
        _ => return None,
    })
}

/// Folds binary index ops and `tc.min` whose operands are all constant.
fn fold_constant_index(f: &mut Function, op: OpId) -> Result<bool> {
    let d = f.op(op);
    if d.operands.len() != 2 || d.results.len() != 1 || !f.ty(d.results[0]).is_index() {
        return Ok(false);
    }
    let (Some(a), Some(b)) = (const_int(f, d.operands[0]), const_int(f, d.operands[1])) else {
        return Ok(false);
    };
    let Some(v) = fold_int(&d.name, a, b) else {
        return Ok(false);
    };
    let mut bld = Builder::before(f, op);
    let c = bld.const_index(v);
    f.replace_op(op, &[c]);
    Ok(true)
}

/// `tc.min(x, x) -> x`.
fn fold_min_same(f: &mut Function, op: OpId) -> Result<bool> {
    let d = f.op(op);
    if d.operands[0] != d.operands[1] {
        return Ok(false);
    }
    let v = d.operands[0];
    f.replace_op(op, &[v]);
    Ok(true)
}

/// `tensor.dim` / `memref.dim` of a static dimension.
fn fold_static_dim(f: &mut Function, op: OpId) -> Result<bool> {
    let d = f.op(op);
    let k = d.int_attr("dim").unwrap_or(0) as usize;
    let Some(n) = f.ty(d.operands[0]).dims().get(k).and_then(|x| x.as_static()) else {
        return Ok(false);
    };
    let mut bld = Builder::before(f, op);
    let c = bld.const_index(n);
    f.replace_op(op, &[c]);
    Ok(true)
}

/// Moves constant dynamic slice sizes into `static_sizes`, refining the extract result type.
fn refine_slice(f: &mut Function, op: OpId) -> Result<bool> {
    let d = f.op(op).clone();
    let stat = d.ints_attr("static_sizes").unwrap_or(&[]).to_vec();
    let rank = stat.len();
    let n_dyn = stat.iter().filter(|&&s| s < 0).count();
    if n_dyn == 0 {
        return Ok(false);
    }
    let fixed = if d.name == "tensor.insert_slice" { 2 } else { 1 } + rank;
    let dyn_ops = &d.operands[fixed..];
    if dyn_ops.iter().all(|&v| const_int(f, v).is_none()) {
        return Ok(false);
    }
    let sizes: Vec<SizeRef> = decode_sizes(&stat, dyn_ops);
    let (new_stat, new_dyn) = encode_sizes(f, &sizes);
    let o = f.op_mut(op);
    o.operands.truncate(fixed);
    o.operands.extend(new_dyn);
    o.attrs.insert("static_sizes".into(), Attr::Ints(new_stat.clone()));
    if d.name != "tensor.insert_slice" {
        let r = d.results[0];
        let ty = f.ty(r).clone();
        let drop = rank - ty.rank();
        let dims = new_stat[drop..].iter().map(|&s| if s < 0 { Dim::Dynamic } else { Dim::Static(s) }).collect();
        f.set_ty(r, ty.with_dims(dims));
    }
    Ok(true)
}

/// Recomputes a `tensor.pad` result type from its source type and constant amounts.
fn refine_pad(f: &mut Function, op: OpId) -> Result<bool> {
    let p = PadView::new(f, op);
    let r = f.op(op).results[0];
    let src = f.ty(p.source).clone();
    let dims: Vec<Dim> = src
        .dims()
        .iter()
        .zip(p.low.iter().zip(&p.high))
        .map(|(d, (&l, &h))| match (d.as_static(), const_int(f, l), const_int(f, h)) {
            (Some(n), Some(l), Some(h)) => Dim::Static(n + l + h),
            _ => Dim::Dynamic,
        })
        .collect();
    let old = f.ty(r).dims().to_vec();
    let refined: Vec<Dim> = dims.iter().zip(&old).map(|(n, o)| if o.is_dynamic() { *n } else { *o }).collect();
    if refined == old {
        return Ok(false);
    }
    let t = f.ty(r).with_dims(refined);
    f.set_ty(r, t);
    Ok(true)
}

/// Keeps structured-op result types equal to their tensor output types.
fn refine_structured_results(f: &mut Function, op: OpId) -> Result<bool> {
    let d = f.op(op).clone();
    if !is_structured(&d.name) {
        return Ok(false);
    }
    let n_in = d.int_attr("n_inputs").unwrap_or(0) as usize;
    let outs: Vec<_> = d.operands[n_in..].iter().filter(|&&v| f.ty(v).is_tensor()).copied().collect();
    let mut changed = false;
    for (&r, o) in d.results.iter().zip(outs) {
        let t = f.ty(o).clone();
        if *f.ty(r) != t {
            f.set_ty(r, t);
            changed = true;
        }
    }
    Ok(changed)
}

pub fn canonicalization_patterns() -> Vec<Box<dyn Pattern>> {
    vec![
        pattern("fold-constant-index", None, fold_constant_index),
        pattern("fold-min-same", Some("tc.min"), fold_min_same),
        pattern("fold-static-dim", Some("tensor.dim"), fold_static_dim),
        pattern("fold-static-dim", Some("memref.dim"), fold_static_dim),
        pattern("refine-slice-type", Some("tensor.extract_slice"), refine_slice),
        pattern("refine-slice-type", Some("tensor.insert_slice"), refine_slice),
        pattern("refine-pad-type", Some("tensor.pad"), refine_pad),
        pattern("refine-structured-results", None, refine_structured_results),
    ]
}

pub fn canonicalize(f: &mut Function) -> Result<RewriteStats> {
    apply_greedily(f, &canonicalization_patterns())
}
