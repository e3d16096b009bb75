//! Progressive lowering of n-D vector ops to 1-D loads, stores, fmas, reductions and shuffles.

use std::collections::HashMap;

use crate::error::{transform_err, Error, Result};
use crate::ir::ops::{build_for, build_transfer_read, build_transfer_write, TransferView};
use crate::ir::rewrite::eliminate_dead_code;
use crate::ir::{attrs, Attr, Builder, ElemType, Function, IndexingMap, OpId, Type, ValueId};
use crate::structured::domain::for_each_point;
use crate::structured::{decode_iterators, IteratorKind};
use crate::transforms::vector_folds::fold_vectors;
use crate::transforms::vector_unroll::{contract_sizes, is_elementwise_vector};
use crate::transforms::vectorize::{broadcast, shape_cast, shape_of, transpose, vty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContractionLowering {
    #[default]
    OuterProduct,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiReductionLowering {
    #[default]
    InnerParallel,
    OuterParallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransposeLowering {
    #[default]
    Elementwise,
    Shuffle,
}

impl ContractionLowering {
    pub fn name(self) -> &'static str {
        match self {
            ContractionLowering::OuterProduct => "outerproduct",
            ContractionLowering::Dot => "dot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "outerproduct" => Ok(ContractionLowering::OuterProduct),
            "dot" => Ok(ContractionLowering::Dot),
            _ => transform_err(format!("unknown contraction lowering '{s}'")),
        }
    }
}

impl MultiReductionLowering {
    pub fn name(self) -> &'static str {
        match self {
            MultiReductionLowering::InnerParallel => "inner_parallel",
            MultiReductionLowering::OuterParallel => "outer_parallel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inner_parallel" => Ok(MultiReductionLowering::InnerParallel),
            "outer_parallel" => Ok(MultiReductionLowering::OuterParallel),
            _ => transform_err(format!("unknown multi_reduction lowering '{s}'")),
        }
    }
}

impl TransposeLowering {
    pub fn name(self) -> &'static str {
        match self {
            TransposeLowering::Elementwise => "elementwise",
            TransposeLowering::Shuffle => "shuffle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "elementwise" => Ok(TransposeLowering::Elementwise),
            "shuffle" => Ok(TransposeLowering::Shuffle),
            "flat" => transform_err("transpose lowering 'flat' is not supported"),
            _ => transform_err(format!("unknown transpose lowering '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoweringStrategy {
    pub contraction: ContractionLowering,
    pub multi_reduction: MultiReductionLowering,
    pub transpose: TransposeLowering,
}

fn extract(b: &mut Builder, v: ValueId, pos: &[i64]) -> ValueId {
    let ty = b.f.ty(v).clone();
    let shape = shape_of(b.f, v);
    let rty = if pos.len() == shape.len() { Type::scalar(ty.elem()) } else { vty(&shape[pos.len()..], &ty) };
    b.value("vector.extract", vec![v], rty, attrs(&[("position", Attr::Ints(pos.to_vec()))]))
}

fn insert(b: &mut Builder, src: ValueId, dest: ValueId, pos: &[i64]) -> ValueId {
    let ty = b.f.ty(dest).clone();
    b.value("vector.insert", vec![src, dest], ty, attrs(&[("position", Attr::Ints(pos.to_vec()))]))
}

fn binop(b: &mut Builder, name: &str, x: ValueId, y: ValueId) -> ValueId {
    let ty = b.f.ty(x).clone();
    b.value(name, vec![x, y], ty, Default::default())
}

fn reduction(b: &mut Builder, kind: &str, v: ValueId, acc: ValueId) -> ValueId {
    let ty = Type::scalar(b.f.ty(v).elem());
    b.value("vector.reduction", vec![v, acc], ty, attrs(&[("kind", Attr::Str(kind.into()))]))
}

fn combiner(kind: &str, elem: ElemType) -> Result<&'static str> {
    Ok(match (kind, elem.is_float()) {
        ("add", true) => "arith.addf",
        ("add", false) => "arith.addi",
        ("mul", true) => "arith.mulf",
        ("mul", false) => "arith.muli",
        ("max", true) => "arith.maxf",
        ("max", false) => "arith.maxsi",
        ("min", true) => "arith.minf",
        ("min", false) => "arith.minsi",
        _ => return transform_err(format!("unknown combining kind '{kind}'")),
    })
}

fn product(s: &[i64]) -> i64 {
    s.iter().product()
}

/// Transposes `v`, whose dims carry labels `labels`, so that they follow `order`, then flattens to `flat`.
fn arrange(b: &mut Builder, v: ValueId, labels: &[usize], order: &[usize], flat: &[i64]) -> ValueId {
    let perm: Vec<usize> = order.iter().map(|d| labels.iter().position(|l| l == d).unwrap()).collect();
    let t = transpose(b, v, &perm);
    shape_cast(b, t, flat)
}

/// Inverse of [`arrange`]: unflattens to the `order` shape and transposes back to `labels` order.
fn unarrange(b: &mut Builder, v: ValueId, labels: &[usize], order: &[usize], sizes: &HashMap<usize, i64>) -> ValueId {
    let shape: Vec<i64> = order.iter().map(|d| sizes[d]).collect();
    let t = shape_cast(b, v, &shape);
    let perm: Vec<usize> = labels.iter().map(|l| order.iter().position(|d| d == l).unwrap()).collect();
    transpose(b, t, &perm)
}

fn ops_named(f: &Function, name: &str) -> Vec<OpId> {
    f.walk().into_iter().filter(|&o| f.op(o).name == name).collect()
}

/// Rewrites a `vector.contract` with parallel dims present in exactly one operand (M or N) and
/// reduction dims present in both (K) into outer products or dot products.
pub fn lower_contract(f: &mut Function, op: OpId, strategy: ContractionLowering) -> Result<()> {
    let d = f.op(op).clone();
    let maps = d.attr("indexing_maps").and_then(|a| a.as_maps()).unwrap().to_vec();
    let iters = decode_iterators(d.str_attr("iterator_types").unwrap_or(""));
    let dims: Vec<Vec<usize>> = maps
        .iter()
        .map(|m| m.results.iter().map(|e| e.as_dim()).collect::<Option<Vec<_>>>())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Transform("contraction maps must be projected permutations".into()))?;
    let all = contract_sizes(f, op);
    let sizes: HashMap<usize, i64> = all.iter().copied().enumerate().collect();
    let (mut ms, mut ns, mut ks) = (Vec::new(), Vec::new(), Vec::new());
    for (dim, it) in iters.iter().enumerate() {
        let (l, r, a) = (dims[0].contains(&dim), dims[1].contains(&dim), dims[2].contains(&dim));
        match (it, l, r, a) {
            (IteratorKind::Parallel, true, false, true) => ms.push(dim),
            (IteratorKind::Parallel, false, true, true) => ns.push(dim),
            (IteratorKind::Reduction, true, true, false) => ks.push(dim),
            _ => return transform_err("unsupported iterator structure in contraction"),
        }
    }
    let size = |g: &[usize]| product(&g.iter().map(|x| sizes[x]).collect::<Vec<_>>());
    let (mp, np, kp) = (size(&ms), size(&ns), size(&ks));
    let (has_m, has_n) = (!ms.is_empty(), !ns.is_empty());
    let elem = f.ty(d.operands[0]).elem();
    let mul = if elem.is_float() { "arith.mulf" } else { "arith.muli" };
    let acc_is_vec = f.ty(d.operands[2]).is_vector();
    let mn: Vec<usize> = ms.iter().chain(&ns).copied().collect();
    let acc_flat: Vec<i64> = [(has_m, mp), (has_n, np)].iter().filter(|x| x.0).map(|x| x.1).collect();
    let mut b = Builder::before(f, op);
    let acc = if acc_is_vec { arrange(&mut b, d.operands[2], &dims[2], &mn, &acc_flat) } else { d.operands[2] };
    let grouped = |g: &[usize], h: &[usize]| -> Vec<usize> { g.iter().chain(h).copied().collect() };
    let flat2 = |has: bool, p: i64, q: i64| if has { vec![p, q] } else { vec![p] };
    let res = if !has_m && !has_n {
        let l = arrange(&mut b, d.operands[0], &dims[0], &ks, &[kp]);
        let r = arrange(&mut b, d.operands[1], &dims[1], &ks, &[kp]);
        let p = binop(&mut b, mul, l, r);
        let acc0 = if acc_is_vec { extract(&mut b, acc, &[0]) } else { acc };
        let s = reduction(&mut b, "add", p, acc0);
        if acc_is_vec {
            insert(&mut b, s, acc, &[0])
        } else {
            s
        }
    } else {
        match strategy {
            ContractionLowering::OuterProduct => {
                let l = arrange(&mut b, d.operands[0], &dims[0], &grouped(&ks, &ms), &flat2(has_m, kp, mp));
                let r = arrange(&mut b, d.operands[1], &dims[1], &grouped(&ks, &ns), &flat2(has_n, kp, np));
                let mut acc = acc;
                let ty = b.f.ty(acc).clone();
                for k in 0..kp {
                    let a = extract(&mut b, l, &[k]);
                    let c = extract(&mut b, r, &[k]);
                    let operands = if has_m { vec![a, c, acc] } else { vec![c, a, acc] };
                    acc = b.value("vector.outerproduct", operands, ty.clone(), Default::default());
                }
                acc
            }
            ContractionLowering::Dot => {
                let l = arrange(&mut b, d.operands[0], &dims[0], &grouped(&ms, &ks), &flat2(has_m, mp, kp));
                let r = arrange(&mut b, d.operands[1], &dims[1], &grouped(&ns, &ks), &flat2(has_n, np, kp));
                let mut res = acc;
                for i in 0..if has_m { mp } else { 1 } {
                    for j in 0..if has_n { np } else { 1 } {
                        let a = if has_m { extract(&mut b, l, &[i]) } else { l };
                        let c = if has_n { extract(&mut b, r, &[j]) } else { r };
                        let p = binop(&mut b, mul, a, c);
                        let pos: Vec<i64> = [(has_m, i), (has_n, j)].iter().filter(|x| x.0).map(|x| x.1).collect();
                        let cur = extract(&mut b, acc, &pos);
                        let s = reduction(&mut b, "add", p, cur);
                        res = insert(&mut b, s, res, &pos);
                    }
                }
                res
            }
        }
    };
    let out = if acc_is_vec { unarrange(&mut b, res, &dims[2], &mn, &sizes) } else { res };
    f.replace_op(op, &[out]);
    Ok(())
}

pub fn lower_contractions(f: &mut Function, strategy: ContractionLowering) -> Result<usize> {
    let ops = ops_named(f, "vector.contract");
    for &op in &ops {
        lower_contract(f, op, strategy)?;
    }
    Ok(ops.len())
}

/// `outerproduct(a, b, acc)` becomes one broadcast and fma per row of `a`; the axpy form
/// (scalar `b`) becomes a single broadcast and fma.
pub fn lower_outerproduct(f: &mut Function, op: OpId) -> Result<()> {
    let d = f.op(op).clone();
    let rty = f.ty(d.results[0]).clone();
    let mut b = Builder::before(f, op);
    let acc = match d.operands.get(2) {
        Some(&a) => a,
        None => b.constant(0.0, rty.clone()),
    };
    let (a, c) = (d.operands[0], d.operands[1]);
    let out = if !b.f.ty(c).is_vector() {
        let m = shape_of(b.f, a);
        let bc = broadcast(&mut b, c, &m);
        b.value("vector.fma", vec![a, bc, acc], rty, Default::default())
    } else {
        let (m, n) = (shape_of(b.f, a)[0], shape_of(b.f, c)[0]);
        let row_ty = vty(&[n], &rty);
        let mut res = acc;
        for i in 0..m {
            let s = extract(&mut b, a, &[i]);
            let bc = broadcast(&mut b, s, &[n]);
            let ai = extract(&mut b, acc, &[i]);
            let r = b.value("vector.fma", vec![bc, c, ai], row_ty.clone(), Default::default());
            res = insert(&mut b, r, res, &[i]);
        }
        res
    };
    f.replace_op(op, &[out]);
    Ok(())
}

pub fn lower_outerproducts(f: &mut Function) -> Result<usize> {
    let ops = ops_named(f, "vector.outerproduct");
    for &op in &ops {
        lower_outerproduct(f, op)?;
    }
    Ok(ops.len())
}

pub fn lower_multi_reduction(f: &mut Function, op: OpId, strategy: MultiReductionLowering) -> Result<()> {
    let d = f.op(op).clone();
    let kind = d.str_attr("kind").unwrap_or("add").to_string();
    let src = d.operands[0];
    let shape = shape_of(f, src);
    let rank = shape.len();
    let red: Vec<usize> = d.ints_attr("reduction_dims").unwrap_or(&[]).iter().map(|&x| x as usize).collect();
    if let Some(&bad) = red.iter().find(|&&x| x >= rank) {
        return transform_err(format!("reduction dim {bad} out of range for rank {rank}"));
    }
    let kept: Vec<usize> = (0..rank).filter(|i| !red.contains(i)).collect();
    let labels: Vec<usize> = (0..rank).collect();
    let rs = product(&red.iter().map(|&i| shape[i]).collect::<Vec<_>>());
    let kept_shape: Vec<i64> = kept.iter().map(|&i| shape[i]).collect();
    let ps = product(&kept_shape);
    let acc = d.operands[1];
    let comb = combiner(&kind, f.ty(src).elem())?;
    let mut b = Builder::before(f, op);
    let out = if rs == 1 {
        // unit reduction dims: only a reshape and a combine with the accumulator
        if kept.is_empty() {
            let s = extract(&mut b, src, &vec![0; rank]);
            binop(&mut b, comb, acc, s)
        } else {
            let t = shape_cast(&mut b, src, &kept_shape);
            binop(&mut b, comb, acc, t)
        }
    } else if kept.is_empty() {
        let t = shape_cast(&mut b, src, &[rs]);
        reduction(&mut b, &kind, t, acc)
    } else {
        let accf = shape_cast(&mut b, acc, &[ps]);
        let res = match strategy {
            MultiReductionLowering::InnerParallel => {
                let order: Vec<usize> = kept.iter().chain(&red).copied().collect();
                let t = arrange(&mut b, src, &labels, &order, &[ps, rs]);
                let mut res = accf;
                for p in 0..ps {
                    let row = extract(&mut b, t, &[p]);
                    let a = extract(&mut b, accf, &[p]);
                    let s = reduction(&mut b, &kind, row, a);
                    res = insert(&mut b, s, res, &[p]);
                }
                res
            }
            MultiReductionLowering::OuterParallel => {
                let order: Vec<usize> = red.iter().chain(&kept).copied().collect();
                let t = arrange(&mut b, src, &labels, &order, &[rs, ps]);
                let mut s = accf;
                for q in 0..rs {
                    let row = extract(&mut b, t, &[q]);
                    s = binop(&mut b, comb, s, row);
                }
                s
            }
        };
        shape_cast(&mut b, res, &kept_shape)
    };
    f.replace_op(op, &[out]);
    Ok(())
}

pub fn lower_multi_reductions(f: &mut Function, strategy: MultiReductionLowering) -> Result<usize> {
    let ops = ops_named(f, "vector.multi_reduction");
    for &op in &ops {
        lower_multi_reduction(f, op, strategy)?;
    }
    Ok(ops.len())
}

/// Source position of result point `p` under `perm`.
fn permuted(p: &[i64], perm: &[usize]) -> Vec<i64> {
    let mut s = vec![0; perm.len()];
    for (j, &pj) in perm.iter().enumerate() {
        s[pj] = p[j];
    }
    s
}

/// One scalar extract/insert pair per element, for any rank.
fn transpose_elementwise(b: &mut Builder, src: ValueId, perm: &[usize], rty: &Type) -> ValueId {
    let shape = rty.static_shape().unwrap();
    let mut res = b.constant(0.0, rty.clone());
    let mut pts = Vec::new();
    for_each_point(&shape, |p| pts.push(p.to_vec()));
    for p in pts {
        let e = extract(b, src, &permuted(&p, perm));
        res = insert(b, e, res, &p);
    }
    res
}

fn shuffle(b: &mut Builder, x: ValueId, y: ValueId, mask: Vec<i64>) -> ValueId {
    let ty = vty(&[mask.len() as i64], b.f.ty(x));
    b.value("vector.shuffle", vec![x, y], ty, attrs(&[("mask", Attr::Ints(mask))]))
}

/// Rows are concatenated pairwise in a log-depth shuffle tree, then one gather shuffle permutes
/// the flattened elements.
fn transpose_shuffle(b: &mut Builder, src: ValueId, perm: &[usize], rty: &Type) -> ValueId {
    let sshape = shape_of(b.f, src);
    let mut rows: Vec<(ValueId, i64)> = (0..sshape[0]).map(|j| (extract(b, src, &[j]), sshape[1])).collect();
    while rows.len() > 1 {
        let mut next = Vec::new();
        for pair in rows.chunks(2) {
            match pair {
                [(x, lx), (y, ly)] => next.push((shuffle(b, *x, *y, (0..lx + ly).collect()), lx + ly)),
                [single] => next.push(*single),
                _ => unreachable!(),
            }
        }
        rows = next;
    }
    let flat = rows[0].0;
    let shape = rty.static_shape().unwrap();
    let mut mask = Vec::new();
    for_each_point(&shape, |p| {
        let s = permuted(p, perm);
        mask.push(s[0] * sshape[1] + s[1]);
    });
    let g = shuffle(b, flat, flat, mask);
    shape_cast(b, g, &shape)
}

pub fn lower_transpose(f: &mut Function, op: OpId, strategy: TransposeLowering) -> Result<()> {
    let d = f.op(op).clone();
    let rty = f.ty(d.results[0]).clone();
    if rty.rank() != 2 {
        return transform_err(format!("transpose lowering needs rank 2, got rank {}", rty.rank()));
    }
    let perm: Vec<usize> = d.ints_attr("permutation").unwrap().iter().map(|&p| p as usize).collect();
    let mut b = Builder::before(f, op);
    let out = match strategy {
        TransposeLowering::Elementwise => transpose_elementwise(&mut b, d.operands[0], &perm, &rty),
        TransposeLowering::Shuffle => transpose_shuffle(&mut b, d.operands[0], &perm, &rty),
    };
    f.replace_op(op, &[out]);
    Ok(())
}

/// Rank-2 transposes follow `strategy`; higher ranks are expanded elementwise.
pub fn lower_transposes(f: &mut Function, strategy: TransposeLowering) -> Result<usize> {
    let ops = ops_named(f, "vector.transpose");
    for &op in &ops {
        let rank = f.ty(f.op(op).results[0]).rank();
        if rank == 2 {
            lower_transpose(f, op, strategy)?;
        } else {
            let d = f.op(op).clone();
            let rty = f.ty(d.results[0]).clone();
            let perm: Vec<usize> = d.ints_attr("permutation").unwrap().iter().map(|&p| p as usize).collect();
            let out = transpose_elementwise(&mut Builder::before(f, op), d.operands[0], &perm, &rty);
            f.replace_op(op, &[out]);
        }
    }
    Ok(ops.len())
}

/// n-D broadcasts become 1-D broadcasts of rows inserted into the result.
pub fn lower_broadcasts(f: &mut Function) -> Result<usize> {
    let mut n = 0;
    for op in ops_named(f, "vector.broadcast") {
        let d = f.op(op).clone();
        let rty = f.ty(d.results[0]).clone();
        let shape = rty.static_shape().unwrap();
        let r = shape.len();
        if r <= 1 {
            continue;
        }
        let src = d.operands[0];
        let last = shape[r - 1];
        let mut b = Builder::before(f, op);
        let sshape = if b.f.ty(src).is_vector() { Some(shape_of(b.f, src)) } else { None };
        let mut rows: HashMap<Vec<i64>, ValueId> = HashMap::new();
        let mut res = b.constant(0.0, rty.clone());
        let mut pts = Vec::new();
        for_each_point(&shape[..r - 1], |p| pts.push(p.to_vec()));
        for p in pts {
            let spos: Vec<i64> = match &sshape {
                None => vec![],
                Some(s) => {
                    let lead = r - s.len();
                    (0..s.len() - 1).map(|j| if s[j] == 1 { 0 } else { p[lead + j] }).collect()
                }
            };
            let row = match rows.get(&spos) {
                Some(&v) => v,
                None => {
                    let v = match &sshape {
                        None => broadcast(&mut b, src, &[last]),
                        Some(s) => {
                            let srow = if s.len() == 1 { src } else { extract(&mut b, src, &spos) };
                            if s[s.len() - 1] == last {
                                srow
                            } else {
                                let e = extract(&mut b, srow, &[0]);
                                broadcast(&mut b, e, &[last])
                            }
                        }
                    };
                    rows.insert(spos, v);
                    v
                }
            };
            res = insert(&mut b, row, res, &p);
        }
        f.replace_op(op, &[res]);
        n += 1;
    }
    Ok(n)
}

/// n-D elementwise ops (including fma) become one 1-D op per row.
pub fn split_rows(f: &mut Function) -> Result<usize> {
    let mut n = 0;
    for op in f.walk() {
        if f.op(op).erased || !is_elementwise_vector(f, op) {
            continue;
        }
        let d = f.op(op).clone();
        let rty = f.ty(d.results[0]).clone();
        let shape = rty.static_shape().unwrap();
        let r = shape.len();
        if r <= 1 {
            continue;
        }
        let mut b = Builder::before(f, op);
        let mut res = b.constant(0.0, rty.clone());
        let mut pts = Vec::new();
        for_each_point(&shape[..r - 1], |p| pts.push(p.to_vec()));
        for p in pts {
            let parts: Vec<ValueId> =
                d.operands.iter().map(|&v| if b.f.ty(v).is_vector() { extract(&mut b, v, &p) } else { v }).collect();
            let row = b.value(&d.name, parts, vty(&shape[r - 1..], &rty), d.attrs.clone());
            res = insert(&mut b, row, res, &p);
        }
        f.replace_op(op, &[res]);
        n += 1;
    }
    Ok(n)
}

fn transfer_ops(f: &Function) -> Vec<OpId> {
    f.walk().into_iter().filter(|&o| matches!(f.op(o).name.as_str(), "vector.transfer_read" | "vector.transfer_write")).collect()
}

/// Removes broadcast dims and permutations from a transfer map; returns whether `op` was rewritten.
fn normalize_transfer(f: &mut Function, op: OpId) -> Result<bool> {
    let t = TransferView::new(f, op);
    let vshape = shape_of(f, t.vector.unwrap_or_else(|| f.op(op).results[0]));
    let dims: Vec<Option<usize>> = t.map.results.iter().map(|e| e.as_dim()).collect();
    let n_dims = t.map.n_dims;
    let mut b = Builder::before(f, op);
    if dims.iter().any(|x| x.is_none()) {
        if !t.is_read {
            return transform_err("broadcast dims in a transfer_write map");
        }
        let kept: Vec<usize> = (0..dims.len()).filter(|&r| dims[r].is_some()).collect();
        let out = if kept.is_empty() {
            let mut operands = vec![t.source];
            operands.extend(t.indices.clone());
            let s = b.value(if b.f.ty(t.source).is_memref() { "memref.load" } else { "tensor.extract" }, operands, Type::scalar(t.vector_type.elem()), Default::default());
            broadcast(&mut b, s, &vshape)
        } else {
            let map = IndexingMap::new(n_dims, kept.iter().map(|&r| t.map.results[r].clone()).collect());
            let kshape: Vec<i64> = kept.iter().map(|&r| vshape[r]).collect();
            let kin: Vec<bool> = kept.iter().map(|&r| t.in_bounds[r]).collect();
            let v = build_transfer_read(&mut b, t.source, t.indices.clone(), t.padding.unwrap(), vty(&kshape, &t.vector_type), map, &kin);
            let unit: Vec<i64> = (0..dims.len()).map(|r| if dims[r].is_some() { vshape[r] } else { 1 }).collect();
            let c = shape_cast(&mut b, v, &unit);
            broadcast(&mut b, c, &vshape)
        };
        f.replace_op(op, &[out]);
        return Ok(true);
    }
    let dims: Vec<usize> = dims.into_iter().map(Option::unwrap).collect();
    if dims.windows(2).all(|w| w[0] < w[1]) {
        return Ok(false);
    }
    let mut order: Vec<usize> = (0..dims.len()).collect();
    order.sort_by_key(|&r| dims[r]);
    let map = IndexingMap::new(n_dims, order.iter().map(|&r| t.map.results[r].clone()).collect());
    let sshape: Vec<i64> = order.iter().map(|&r| vshape[r]).collect();
    let sin: Vec<bool> = order.iter().map(|&r| t.in_bounds[r]).collect();
    if t.is_read {
        let v = build_transfer_read(&mut b, t.source, t.indices.clone(), t.padding.unwrap(), vty(&sshape, &t.vector_type), map, &sin);
        let inv: Vec<usize> = (0..dims.len()).map(|j| order.iter().position(|&r| r == j).unwrap()).collect();
        let out = transpose(&mut b, v, &inv);
        f.replace_op(op, &[out]);
    } else {
        let v = transpose(&mut b, t.vector.unwrap(), &order);
        match build_transfer_write(&mut b, v, t.source, t.indices.clone(), map, &sin) {
            Some(nd) => f.replace_op(op, &[nd]),
            None => f.erase_op(op),
        }
    }
    Ok(true)
}

/// Stage (b): transfer permutations become explicit transposes and broadcast dims explicit broadcasts.
pub fn materialize_transfer_permutations(f: &mut Function) -> Result<usize> {
    let mut n = 0;
    for op in transfer_ops(f) {
        if normalize_transfer(f, op)? {
            n += 1;
        }
    }
    Ok(n)
}

fn and_all(b: &mut Builder, conds: Vec<ValueId>) -> ValueId {
    let mut it = conds.into_iter();
    let first = it.next().expect("at least one condition");
    it.fold(first, |acc, c| b.andi(acc, c))
}

/// Builds `scf.for` loops over `shape` at `b`; calls `body` with the innermost builder and the induction values.
fn loop_nest(f: &mut Function, before: OpId, shape: &[i64], body: &mut dyn FnMut(&mut Builder, &[ValueId])) {
    fn rec(f: &mut Function, blk: crate::ir::BlockId, shape: &[i64], ivs: &mut Vec<ValueId>, body: &mut dyn FnMut(&mut Builder, &[ValueId])) {
        let mut b = Builder::at_end(f, blk);
        if shape.is_empty() {
            body(&mut b, ivs);
            return;
        }
        let (lb, ub, st) = (b.const_index(0), b.const_index(shape[0]), b.const_index(1));
        let l = build_for(&mut b, lb, ub, st, vec![]);
        ivs.push(l.iv);
        rec(f, l.body, &shape[1..], ivs, body);
        ivs.pop();
        Builder::at_end(f, l.body).yield_("scf.yield", vec![]);
    }
    let blk = f.new_block(vec![]);
    rec(f, blk, shape, &mut Vec::new(), body);
    // splice the nest before `before`
    let ops = f.block(blk).ops.clone();
    for o in ops {
        f.move_before(o, before);
    }
}

/// Full/partial split: a fast path when the whole vector is in bounds, otherwise a scalar copy
/// loop through a temporary buffer.
fn split_transfer(f: &mut Function, op: OpId) -> Result<()> {
    let t = TransferView::new(f, op);
    let vshape = shape_of(f, t.vector.unwrap_or_else(|| f.op(op).results[0]));
    let r = vshape.len();
    let dims: Vec<usize> = t.map.results.iter().map(|e| e.as_dim().unwrap()).collect();
    let masked: Vec<usize> = (0..r).filter(|&j| !t.in_bounds[j]).collect();
    let elem = t.vector_type.elem();
    let mut b = Builder::before(f, op);
    let mut conds = Vec::new();
    for &j in &masked {
        let end = b.add_const(t.indices[dims[j]], vshape[j]);
        let sz = b.dim(t.source, dims[j]);
        conds.push(b.cmpi("le", end, sz));
    }
    let cond = and_all(&mut b, conds);
    let then_blk = b.f.new_block(vec![]);
    let else_blk = b.f.new_block(vec![]);
    let rtys = if t.is_read { vec![t.vector_type.clone()] } else { vec![] };
    let if_op = b.create_with_regions("scf.if", vec![cond], rtys, Default::default(), vec![then_blk, else_blk]);
    let all_in = vec![true; r];

    // fast path
    let mut tb = Builder::at_end(f, then_blk);
    if t.is_read {
        let v = build_transfer_read(&mut tb, t.source, t.indices.clone(), t.padding.unwrap(), t.vector_type.clone(), t.map.clone(), &all_in);
        tb.yield_("scf.yield", vec![v]);
    } else {
        build_transfer_write(&mut tb, t.vector.unwrap(), t.source, t.indices.clone(), t.map.clone(), &all_in);
        tb.yield_("scf.yield", vec![]);
    }

    // slow path
    let mut eb = Builder::at_end(f, else_blk);
    let tmp = eb.value("memref.alloc", vec![], Type::memref(vshape.iter().map(|&n| crate::ir::Dim::Static(n)).collect(), elem, None), Default::default());
    let zero = eb.const_index(0);
    let ident = IndexingMap::identity(r);
    if !t.is_read {
        build_transfer_write(&mut eb, t.vector.unwrap(), tmp, vec![zero; r], ident.clone(), &all_in);
    }
    let anchor = eb.yield_("scf.yield", vec![]);
    let (src, indices, padding, is_read) = (t.source, t.indices.clone(), t.padding, t.is_read);
    loop_nest(f, anchor, &vshape, &mut |ib, ivs| {
        let mut idx = indices.clone();
        for (j, &dm) in dims.iter().enumerate() {
            idx[dm] = ib.addi(idx[dm], ivs[j]);
        }
        let checks: Vec<ValueId> = masked
            .iter()
            .map(|&j| {
                let sz = ib.dim(src, dims[j]);
                ib.cmpi("lt", idx[dims[j]], sz)
            })
            .collect();
        let inb = and_all(ib, checks);
        let then_blk = ib.f.new_block(vec![]);
        if is_read {
            let else_blk = ib.f.new_block(vec![]);
            let sty = Type::scalar(elem);
            let pick = ib.create_with_regions("scf.if", vec![inb], vec![sty.clone()], Default::default(), vec![then_blk, else_blk]);
            let mut ops = vec![src];
            ops.extend(idx.clone());
            let mut tb = Builder::at_end(ib.f, then_blk);
            let v = tb.value("memref.load", ops, sty, Default::default());
            tb.yield_("scf.yield", vec![v]);
            Builder::at_end(ib.f, else_blk).yield_("scf.yield", vec![padding.unwrap()]);
            let v = ib.f.op(pick).results[0];
            let mut so = vec![v, tmp];
            so.extend(ivs.iter().copied());
            ib.no_result("memref.store", so, Default::default());
        } else {
            ib.create_with_regions("scf.if", vec![inb], vec![], Default::default(), vec![then_blk]);
            let mut lo = vec![tmp];
            lo.extend(ivs.iter().copied());
            let mut tb = Builder::at_end(ib.f, then_blk);
            let v = tb.value("memref.load", lo, Type::scalar(elem), Default::default());
            let mut so = vec![v, src];
            so.extend(idx.clone());
            tb.no_result("memref.store", so, Default::default());
            tb.yield_("scf.yield", vec![]);
        }
    });
    let mut eb = Builder::before(f, anchor);
    if t.is_read {
        let zero = eb.const_index(0);
        let v = build_transfer_read(&mut eb, tmp, vec![zero; r], padding.unwrap(), t.vector_type.clone(), ident, &all_in);
        eb.no_result("memref.dealloc", vec![tmp], Default::default());
        f.op_mut(anchor).operands = vec![v];
        let res = f.op(if_op).results[0];
        f.replace_op(op, &[res]);
    } else {
        eb.no_result("memref.dealloc", vec![tmp], Default::default());
        f.erase_op(op);
    }
    Ok(())
}

/// Stage (c): in-bounds transfers with ascending maps become 1-D `vector.load`/`vector.store` along
/// the contiguous innermost dim, or scalar accesses when the innermost vector dim is strided.
fn unroll_to_1d(f: &mut Function, op: OpId) -> Result<()> {
    let t = TransferView::new(f, op);
    let vshape = shape_of(f, t.vector.unwrap_or_else(|| f.op(op).results[0]));
    let r = vshape.len();
    let dims: Vec<usize> = t.map.results.iter().map(|e| e.as_dim().unwrap()).collect();
    let sty = f.ty(t.source).clone();
    let n = sty.rank();
    let unit_stride = sty.layout().is_none_or(|l| l.strides.last().copied().flatten() == Some(1));
    let contiguous = dims[r - 1] == n - 1 && unit_stride;
    let mut b = Builder::before(f, op);
    let lead = if contiguous { &vshape[..r - 1] } else { &vshape[..] };
    let mut pts = Vec::new();
    for_each_point(lead, |p| pts.push(p.to_vec()));
    let at = |b: &mut Builder, p: &[i64]| -> Vec<ValueId> {
        let mut idx = t.indices.clone();
        for (j, &x) in p.iter().enumerate() {
            idx[dims[j]] = b.add_const(idx[dims[j]], x);
        }
        idx
    };
    if t.is_read {
        let mut res = if contiguous && r == 1 { None } else { Some(b.constant(0.0, t.vector_type.clone())) };
        let row_ty = vty(&vshape[r - 1..], &t.vector_type);
        for p in pts {
            let mut operands = vec![t.source];
            operands.extend(at(&mut b, &p));
            let v = if contiguous {
                b.value("vector.load", operands, row_ty.clone(), Default::default())
            } else {
                b.value("memref.load", operands, Type::scalar(t.vector_type.elem()), Default::default())
            };
            res = Some(match res {
                Some(acc) => insert(&mut b, v, acc, &p),
                None => v,
            });
        }
        let out = res.unwrap();
        f.replace_op(op, &[out]);
    } else {
        let vec = t.vector.unwrap();
        for p in pts {
            let idx = at(&mut b, &p);
            let v = if p.is_empty() && contiguous { vec } else { extract(&mut b, vec, &p) };
            let mut operands = vec![v, t.source];
            operands.extend(idx);
            b.no_result(if contiguous { "vector.store" } else { "memref.store" }, operands, Default::default());
        }
        f.erase_op(op);
    }
    Ok(())
}

/// Stages (b) and (c) on memref-form transfers, including full/partial splitting.
pub fn lower_transfers(f: &mut Function) -> Result<usize> {
    let mut n = 0;
    loop {
        let ops = transfer_ops(f);
        if ops.is_empty() {
            return Ok(n);
        }
        for op in ops {
            let src = TransferView::new(f, op).source;
            if !f.ty(src).is_memref() {
                return transform_err("transfers must be bufferized before lowering");
            }
            if normalize_transfer(f, op)? {
                continue;
            }
            if TransferView::new(f, op).in_bounds.iter().any(|&x| !x) {
                split_transfer(f, op)?;
            } else {
                unroll_to_1d(f, op)?;
                n += 1;
            }
        }
    }
}

/// Full lowering to 1-D vector ops.
pub fn lower_vectors(f: &mut Function, s: LoweringStrategy) -> Result<()> {
    lower_transfers(f)?;
    lower_contractions(f, s.contraction)?;
    lower_outerproducts(f)?;
    lower_multi_reductions(f, s.multi_reduction)?;
    lower_transposes(f, s.transpose)?;
    lower_broadcasts(f)?;
    split_rows(f)?;
    fold_vectors(f)?;
    eliminate_dead_code(f);
    Ok(())
}

/// Largest vector rank among ops that must be 1-D after lowering.
pub fn max_lowered_rank(f: &Function) -> usize {
    const ONE_D: &[&str] =
        &["vector.load", "vector.store", "vector.fma", "vector.broadcast", "vector.shuffle", "vector.reduction", "vector.outerproduct"];
    f.walk()
        .into_iter()
        .filter(|&o| ONE_D.contains(&f.op(o).name.as_str()))
        .flat_map(|o| f.op(o).operands.iter().chain(&f.op(o).results).copied().collect::<Vec<_>>())
        .filter(|&v| f.ty(v).is_vector())
        .map(|v| f.ty(v).rank())
        .max()
        .unwrap_or(0)
}
