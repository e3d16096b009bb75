//! Folding patterns for vector ops produced by vectorization and unrolling.

use crate::error::Result;
use crate::ir::ops::TransferView;
use crate::ir::rewrite::{apply_greedily, pattern, Pattern, RewriteStats};
use crate::ir::{attrs, Attr, Builder, Function, OpId};

fn ints(f: &Function, op: OpId, k: &str) -> Vec<i64> {
    f.op(op).ints_attr(k).unwrap_or(&[]).to_vec()
}

fn shape(f: &Function, v: crate::ir::ValueId) -> Vec<i64> {
    f.ty(v).static_shape().unwrap_or_default()
}

/// A read of exactly what an in-bounds tensor write just stored yields the written vector.
fn forward_write_to_read(f: &mut Function, op: OpId) -> Result<bool> {
    let r = TransferView::new(f, op);
    let Some(w) = f.defining_op(r.source) else { return Ok(false) };
    if f.op(w).name != "vector.transfer_write" {
        return Ok(false);
    }
    let w = TransferView::new(f, w);
    let same = w.indices == r.indices
        && w.map == r.map
        && w.vector_type == r.vector_type
        && w.in_bounds.iter().all(|&b| b)
        && r.in_bounds.iter().all(|&b| b);
    if !same {
        return Ok(false);
    }
    f.replace_op(op, &[w.vector.unwrap()]);
    Ok(true)
}

/// `extract_strided_slice(insert_strided_slice(src, dest))`: the same window yields `src`;
/// a disjoint window reads through to `dest`.
fn extract_of_insert(f: &mut Function, op: OpId) -> Result<bool> {
    let src = f.op(op).operands[0];
    let Some(ins) = f.defining_op(src) else { return Ok(false) };
    if f.op(ins).name != "vector.insert_strided_slice" {
        return Ok(false);
    }
    let (e_off, e_len) = (ints(f, op, "offsets"), ints(f, op, "sizes"));
    let (inserted, dest) = (f.op(ins).operands[0], f.op(ins).operands[1]);
    let i_len = shape(f, inserted);
    let lead = e_off.len().saturating_sub(i_len.len());
    let i_off = ints(f, ins, "offsets");
    let i_len: Vec<i64> = std::iter::repeat_n(1, lead).chain(i_len).collect();
    if e_off == i_off && e_len == i_len && f.ty(inserted) == f.ty(f.op(op).results[0]) {
        f.replace_op(op, &[inserted]);
        return Ok(true);
    }
    let disjoint = (0..e_off.len()).any(|d| e_off[d] + e_len[d] <= i_off[d] || i_off[d] + i_len[d] <= e_off[d]);
    if disjoint {
        f.op_mut(op).operands[0] = dest;
        return Ok(true);
    }
    Ok(false)
}

fn full_extract(f: &mut Function, op: OpId) -> Result<bool> {
    let src = f.op(op).operands[0];
    if f.ty(src) != f.ty(f.op(op).results[0]) {
        return Ok(false);
    }
    f.replace_op(op, &[src]);
    Ok(true)
}

/// An insert covering the whole destination is its source.
fn full_insert(f: &mut Function, op: OpId) -> Result<bool> {
    let src = f.op(op).operands[0];
    if f.ty(src) != f.ty(f.op(op).results[0]) {
        return Ok(false);
    }
    f.replace_op(op, &[src]);
    Ok(true)
}

fn transpose_fold(f: &mut Function, op: OpId) -> Result<bool> {
    let perm = ints(f, op, "permutation");
    let src = f.op(op).operands[0];
    if perm.iter().enumerate().all(|(i, &p)| i as i64 == p) {
        f.replace_op(op, &[src]);
        return Ok(true);
    }
    let Some(inner) = f.defining_op(src) else { return Ok(false) };
    if f.op(inner).name != "vector.transpose" {
        return Ok(false);
    }
    let ip = ints(f, inner, "permutation");
    let composed: Vec<i64> = perm.iter().map(|&p| ip[p as usize]).collect();
    let s = f.op(inner).operands[0];
    let o = f.op_mut(op);
    o.operands[0] = s;
    o.attrs.insert("permutation".into(), Attr::Ints(composed));
    Ok(true)
}

fn shape_cast_fold(f: &mut Function, op: OpId) -> Result<bool> {
    let src = f.op(op).operands[0];
    if f.ty(src) == f.ty(f.op(op).results[0]) {
        f.replace_op(op, &[src]);
        return Ok(true);
    }
    let Some(inner) = f.defining_op(src) else { return Ok(false) };
    if f.op(inner).name != "vector.shape_cast" {
        return Ok(false);
    }
    let s = f.op(inner).operands[0];
    f.op_mut(op).operands[0] = s;
    Ok(true)
}

fn broadcast_fold(f: &mut Function, op: OpId) -> Result<bool> {
    let src = f.op(op).operands[0];
    if f.ty(src) != f.ty(f.op(op).results[0]) {
        return Ok(false);
    }
    f.replace_op(op, &[src]);
    Ok(true)
}

/// `extract(insert(v, dest, p), p) -> v`.
fn extract_of_insert_elem(f: &mut Function, op: OpId) -> Result<bool> {
    let src = f.op(op).operands[0];
    let Some(ins) = f.defining_op(src) else { return Ok(false) };
    if f.op(ins).name != "vector.insert" || ints(f, ins, "position") != ints(f, op, "position") {
        return Ok(false);
    }
    let v = f.op(ins).operands[0];
    if f.ty(v) != f.ty(f.op(op).results[0]) {
        return Ok(false);
    }
    f.replace_op(op, &[v]);
    Ok(true)
}

pub fn vector_fold_patterns() -> Vec<Box<dyn Pattern>> {
    vec![
        pattern("forward-write-to-read", Some("vector.transfer_read"), forward_write_to_read),
        pattern("extract-of-insert", Some("vector.extract_strided_slice"), extract_of_insert),
        pattern("full-extract", Some("vector.extract_strided_slice"), full_extract),
        pattern("full-insert", Some("vector.insert_strided_slice"), full_insert),
        pattern("fold-transpose", Some("vector.transpose"), transpose_fold),
        pattern("fold-shape-cast", Some("vector.shape_cast"), shape_cast_fold),
        pattern("fold-broadcast", Some("vector.broadcast"), broadcast_fold),
        pattern("extract-of-insert", Some("vector.extract"), extract_of_insert_elem),
    ]
}

pub fn fold_vectors(f: &mut Function) -> Result<RewriteStats> {
    apply_greedily(f, &vector_fold_patterns())
}

/// Number of `extract_strided_slice(insert_strided_slice)` pairs over the same window.
pub fn cancelling_pairs(f: &Function) -> usize {
    f.find_ops("vector.extract_strided_slice")
        .into_iter()
        .filter(|&op| {
            let Some(ins) = f.defining_op(f.op(op).operands[0]) else { return false };
            f.op(ins).name == "vector.insert_strided_slice" && ints(f, ins, "offsets") == ints(f, op, "offsets")
        })
        .count()
}

/// Builds a `vector.extract_strided_slice`.
pub fn build_extract_strided(b: &mut Builder, v: crate::ir::ValueId, offsets: &[i64], sizes: &[i64]) -> crate::ir::ValueId {
    let ty = crate::ir::Type::vector(sizes, b.f.ty(v).elem());
    let a = attrs(&[("offsets", Attr::Ints(offsets.to_vec())), ("sizes", Attr::Ints(sizes.to_vec()))]);
    b.value("vector.extract_strided_slice", vec![v], ty, a)
}

/// Builds a `vector.insert_strided_slice`.
pub fn build_insert_strided(b: &mut Builder, src: crate::ir::ValueId, dest: crate::ir::ValueId, offsets: &[i64]) -> crate::ir::ValueId {
    let ty = b.f.ty(dest).clone();
    b.value("vector.insert_strided_slice", vec![src, dest], ty, attrs(&[("offsets", Attr::Ints(offsets.to_vec()))]))
}
