//! Unrolling of n-D vector ops into pieces of a target shape.

use std::collections::HashMap;

use crate::error::{transform_err, Result};
use crate::ir::ops::{build_transfer_read, build_transfer_write, TransferView};
use crate::ir::{Builder, Function, OpId, Type, ValueId};
use crate::structured::domain::for_each_point;
use crate::transforms::vector_folds::{build_extract_strided, build_insert_strided, fold_vectors};
use crate::transforms::vectorize::vty;

/// Which ops an unrolling applies to and the piece shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrollTarget {
    /// One of `contract`, `transfer_read`, `transfer_write`, `transpose`, `multi_reduction`, `elementwise`.
    pub op: String,
    /// Only ops of this unroll shape; `None` matches all.
    pub source: Option<Vec<i64>>,
    pub target: Vec<i64>,
}

pub(crate) fn is_elementwise_vector(f: &Function, op: OpId) -> bool {
    let d = f.op(op);
    let vector_result = d.results.len() == 1 && f.ty(d.results[0]).is_vector();
    vector_result && (d.name == "vector.fma" || (d.name.starts_with("arith.") && d.name != "arith.constant"))
}

/// Unroll category of `op`, if any.
pub fn unroll_kind(f: &Function, op: OpId) -> Option<&'static str> {
    Some(match f.op(op).name.as_str() {
        "vector.contract" => "contract",
        "vector.transfer_read" => "transfer_read",
        "vector.transfer_write" => "transfer_write",
        "vector.transpose" => "transpose",
        "vector.multi_reduction" => "multi_reduction",
        _ if is_elementwise_vector(f, op) => "elementwise",
        _ => return None,
    })
}

/// Iteration sizes of a contraction, in domain order.
pub(crate) fn contract_sizes(f: &Function, op: OpId) -> Vec<i64> {
    let d = f.op(op);
    let maps = d.attr("indexing_maps").and_then(|a| a.as_maps()).unwrap();
    let mut sizes = vec![1; maps[0].n_dims];
    for (m, &v) in maps.iter().zip(&d.operands) {
        if let Some(s) = f.ty(v).static_shape() {
            for (e, n) in m.results.iter().zip(s) {
                if let Some(dim) = e.as_dim() {
                    sizes[dim] = n;
                }
            }
        }
    }
    sizes
}

/// Shape that `target` is matched against for `op`.
pub fn unroll_shape(f: &Function, op: OpId) -> Option<Vec<i64>> {
    let d = f.op(op);
    match unroll_kind(f, op)? {
        "contract" => Some(contract_sizes(f, op)),
        "transfer_write" | "multi_reduction" => f.ty(d.operands[0]).static_shape(),
        _ => f.ty(d.results[0]).static_shape(),
    }
}

/// Lexicographic ceil-div grid of `shape` by `target`: `(offsets, sizes)` per piece.
pub fn unroll_grid(shape: &[i64], target: &[i64]) -> Vec<(Vec<i64>, Vec<i64>)> {
    let counts: Vec<i64> = shape.iter().zip(target).map(|(&s, &t)| (s + t - 1) / t).collect();
    let mut out = Vec::new();
    for_each_point(&counts, |g| {
        let offs: Vec<i64> = g.iter().zip(target).map(|(&i, &t)| i * t).collect();
        let sizes = offs.iter().zip(shape).zip(target).map(|((&o, &s), &t)| t.min(s - o)).collect();
        out.push((offs, sizes));
    });
    out
}

fn pick(v: &[i64], dims: &[usize]) -> Vec<i64> {
    dims.iter().map(|&d| v[d]).collect()
}

fn zero_vector(b: &mut Builder, shape: &[i64], like: &Type) -> ValueId {
    b.constant(0.0, vty(shape, like))
}

/// Unrolls `op` into pieces of `target`; returns false when the op already has the target shape.
pub fn unroll_vector(f: &mut Function, op: OpId, target: &[i64]) -> Result<bool> {
    let Some(kind) = unroll_kind(f, op) else {
        return transform_err(format!("'{}' cannot be unrolled", f.op(op).name));
    };
    let Some(shape) = unroll_shape(f, op) else { return transform_err("unrolling needs static vector shapes") };
    if target.len() != shape.len() {
        return transform_err(format!("target rank {} does not match op rank {}", target.len(), shape.len()));
    }
    if target.iter().any(|&t| t <= 0) {
        return transform_err("target sizes must be positive");
    }
    let target: Vec<i64> = target.iter().zip(&shape).map(|(&t, &s)| t.min(s)).collect();
    if target == shape {
        return Ok(false);
    }
    let grid = unroll_grid(&shape, &target);
    let d = f.op(op).clone();
    let mut b = Builder::before(f, op);
    let new = match kind {
        "elementwise" => {
            let rty = b.f.ty(d.results[0]).clone();
            let mut acc = zero_vector(&mut b, &shape, &rty);
            for (offs, sizes) in &grid {
                let parts: Vec<ValueId> = d
                    .operands
                    .iter()
                    .map(|&v| if b.f.ty(v).is_vector() { build_extract_strided(&mut b, v, offs, sizes) } else { v })
                    .collect();
                let piece = b.value(&d.name, parts, vty(sizes, &rty), d.attrs.clone());
                acc = build_insert_strided(&mut b, piece, acc, offs);
            }
            vec![acc]
        }
        "transpose" => {
            let perm: Vec<usize> = d.ints_attr("permutation").unwrap().iter().map(|&p| p as usize).collect();
            let rty = b.f.ty(d.results[0]).clone();
            let mut acc = zero_vector(&mut b, &shape, &rty);
            for (offs, sizes) in &grid {
                let mut so = vec![0; perm.len()];
                let mut ss = vec![0; perm.len()];
                for (j, &p) in perm.iter().enumerate() {
                    so[p] = offs[j];
                    ss[p] = sizes[j];
                }
                let piece = build_extract_strided(&mut b, d.operands[0], &so, &ss);
                let t = b.value(&d.name, vec![piece], vty(sizes, &rty), d.attrs.clone());
                acc = build_insert_strided(&mut b, t, acc, offs);
            }
            vec![acc]
        }
        "contract" | "multi_reduction" => {
            let is_contract = kind == "contract";
            let acc_in = d.operands[if is_contract { 2 } else { 1 }];
            let acc_ty = b.f.ty(acc_in).clone();
            // dims of the unrolled space read by each vector operand and by the accumulator
            let (operand_dims, acc_dims): (Vec<Vec<usize>>, Vec<usize>) = if is_contract {
                let maps = d.attr("indexing_maps").and_then(|a| a.as_maps()).unwrap();
                let dims: Vec<Vec<usize>> = maps.iter().map(|m| m.results.iter().map(|e| e.as_dim().unwrap()).collect()).collect();
                (dims[..2].to_vec(), dims[2].clone())
            } else {
                let red: Vec<usize> = d.ints_attr("reduction_dims").unwrap().iter().map(|&x| x as usize).collect();
                (vec![(0..shape.len()).collect()], (0..shape.len()).filter(|i| !red.contains(i)).collect())
            };
            let mut chains: Vec<(Vec<i64>, Vec<i64>, ValueId)> = Vec::new();
            let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
            for (offs, sizes) in &grid {
                let key = pick(offs, &acc_dims);
                let acc_sizes = pick(sizes, &acc_dims);
                let slot = *index.entry(key.clone()).or_insert_with(|| {
                    chains.push((key.clone(), acc_sizes.clone(), acc_in));
                    chains.len() - 1
                });
                let cur = chains[slot].2;
                let cur = if cur == acc_in && acc_ty.is_vector() {
                    build_extract_strided(&mut b, acc_in, &key, &acc_sizes)
                } else {
                    cur
                };
                let mut operands: Vec<ValueId> = operand_dims
                    .iter()
                    .zip(&d.operands)
                    .map(|(dims, &v)| build_extract_strided(&mut b, v, &pick(offs, dims), &pick(sizes, dims)))
                    .collect();
                operands.push(cur);
                let ty = if acc_ty.is_vector() { vty(&acc_sizes, &acc_ty) } else { acc_ty.clone() };
                chains[slot].2 = b.value(&d.name, operands, ty, d.attrs.clone());
            }
            if acc_ty.is_vector() {
                let mut acc = acc_in;
                for (key, _, v) in &chains {
                    acc = build_insert_strided(&mut b, *v, acc, key);
                }
                vec![acc]
            } else {
                vec![chains[0].2]
            }
        }
        "transfer_read" => {
            let t = TransferView::new(b.f, op);
            let rty = t.vector_type.clone();
            let mut acc = zero_vector(&mut b, &shape, &rty);
            for (offs, sizes) in &grid {
                let idx = shifted(&mut b, &t, offs);
                let piece = build_transfer_read(&mut b, t.source, idx, t.padding.unwrap(), vty(sizes, &rty), t.map.clone(), &t.in_bounds);
                acc = build_insert_strided(&mut b, piece, acc, offs);
            }
            vec![acc]
        }
        _ => {
            let t = TransferView::new(b.f, op);
            let mut dest = t.source;
            for (offs, sizes) in &grid {
                let idx = shifted(&mut b, &t, offs);
                let piece = build_extract_strided(&mut b, t.vector.unwrap(), offs, sizes);
                if let Some(nd) = build_transfer_write(&mut b, piece, dest, idx, t.map.clone(), &t.in_bounds) {
                    dest = nd;
                }
            }
            if d.results.is_empty() {
                vec![]
            } else {
                vec![dest]
            }
        }
    };
    f.replace_op(op, &new);
    Ok(true)
}

/// Transfer indices moved by vector offsets `offs` along the mapped source dims.
fn shifted(b: &mut Builder, t: &TransferView, offs: &[i64]) -> Vec<ValueId> {
    let mut idx = t.indices.clone();
    for (r, e) in t.map.results.iter().enumerate() {
        if let Some(dim) = e.as_dim() {
            idx[dim] = b.add_const(idx[dim], offs[r]);
        }
    }
    idx
}

/// Unrolls every op matching `t`, then folds slice pairs; returns the number of ops unrolled.
pub fn unroll_vectors(f: &mut Function, t: &UnrollTarget) -> Result<usize> {
    let mut n = 0;
    for op in f.walk() {
        if f.op(op).erased || unroll_kind(f, op) != Some(t.op.as_str()) {
            continue;
        }
        if t.source.as_ref().is_some_and(|s| unroll_shape(f, op).as_ref() != Some(s)) {
            continue;
        }
        if unroll_vector(f, op, &t.target)? {
            n += 1;
        }
    }
    fold_vectors(f)?;
    Ok(n)
}
