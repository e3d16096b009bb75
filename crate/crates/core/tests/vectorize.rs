mod common;

use common::{assert_same, kernel, parse_fn};
use proptest::prelude::*;
use tlc::interp::Policy;
use tlc::ir::ops::build_for;
use tlc::ir::{print_function, verify_function, Builder, ElemType, Function, IndexExpr, IndexingMap, Type};
use tlc::structured::{build_generic, IteratorKind};
use tlc::transforms::{
    classify, hoist_loop_invariants, pad_operands, tile_op, vectorize, TileConfig, VectorCase, VectorizeOptions,
};

fn check(f: &Function) {
    assert!(verify_function(f).is_empty(), "{:?}\n{}", verify_function(f), print_function(f));
}

fn vectorized(f: &Function) -> Function {
    let mut g = f.clone();
    vectorize(&mut g, VectorizeOptions::default()).unwrap();
    check(&g);
    g
}

fn count(f: &Function, name: &str) -> usize {
    f.count_ops(name)
}

fn structured_op(f: &Function) -> tlc::ir::OpId {
    f.walk().into_iter().find(|&o| f.op(o).name.starts_with("linalg.")).unwrap()
}

#[test]
fn copy_becomes_one_read_and_one_write() {
    let f = parse_fn(&kernel("copy_2d", &[vec![4, 8]], &[4, 8], "f32", ""));
    assert_eq!(classify(&f, structured_op(&f)).unwrap(), VectorCase::Elementwise);
    let g = vectorized(&f);
    assert_eq!((count(&g, "vector.transfer_read"), count(&g, "vector.transfer_write")), (1, 1));
    assert_eq!(count(&g, "linalg.copy_2d"), 0);
    assert_same(&f, &g, Policy::Exact);
}

#[test]
fn conv_window_unrolls_into_one_contract_per_tap() {
    let f = parse_fn(&kernel("conv_1d_nwc_wcf", &[vec![1, 10, 4], vec![3, 4, 8]], &[1, 8, 8], "f32", ""));
    assert_eq!(classify(&f, structured_op(&f)).unwrap(), VectorCase::Convolution);
    let g = vectorized(&f);
    assert_eq!(count(&g, "vector.contract"), 3);
    assert_eq!(count(&g, "vector.transfer_write"), 1);
    assert_same(&f, &g, Policy::RelTol(1e-6));
}

#[test]
fn matmul_becomes_a_single_contract() {
    let f = parse_fn(&kernel("matmul", &[vec![4, 3], vec![3, 5]], &[4, 5], "f32", ""));
    let g = vectorized(&f);
    assert_eq!(count(&g, "vector.contract"), 1);
    assert_same(&f, &g, Policy::RelTol(1e-6));
    let f = parse_fn(&kernel("matmul", &[vec![4, 3], vec![3, 5]], &[4, 5], "i32", ""));
    assert_same(&f, &vectorized(&f), Policy::Exact);
}

/// Builds `@k` around one generic over the given operand shapes.
fn generic_fn(
    ins: &[Vec<i64>],
    out: &[i64],
    maps: Vec<IndexingMap>,
    iters: &[IteratorKind],
    body: impl FnOnce(&mut Builder, &[tlc::ir::ValueId]) -> Vec<tlc::ir::ValueId>,
) -> Function {
    let t = |s: &[i64]| Type::static_tensor(s, ElemType::F32);
    let mut args: Vec<Type> = ins.iter().map(|s| t(s)).collect();
    args.push(t(out));
    let mut f = Function::new("k", args, vec![t(out)]);
    let a = f.args().to_vec();
    let entry = f.body;
    let mut b = Builder::at_end(&mut f, entry);
    let op = build_generic(&mut b, &a[..ins.len()], &a[ins.len()..], maps, iters, body);
    let r = b.f.op(op).results[0];
    b.yield_("func.return", vec![r]);
    check(&f);
    f
}

#[test]
fn lower_rank_operand_is_broadcast() {
    let maps = vec![IndexingMap::identity(2), IndexingMap::from_dims(2, &[1]), IndexingMap::identity(2)];
    let p = IteratorKind::Parallel;
    let f = generic_fn(&[vec![3, 4], vec![4]], &[3, 4], maps, &[p, p], |b, a| {
        vec![b.value("arith.addf", vec![a[0], a[1]], Type::scalar(ElemType::F32), Default::default())]
    });
    assert_eq!(classify(&f, structured_op(&f)).unwrap(), VectorCase::Broadcast);
    let g = vectorized(&f);
    assert_eq!(count(&g, "vector.broadcast"), 1);
    assert_same(&f, &g, Policy::Exact);
}

#[test]
fn permuted_operand_is_transposed() {
    let f = parse_fn(&kernel("transpose_2d", &[vec![3, 5]], &[5, 3], "f32", ""));
    assert_eq!(classify(&f, structured_op(&f)).unwrap(), VectorCase::Transpose);
    let g = vectorized(&f);
    assert!(count(&g, "vector.transpose") >= 1);
    assert_same(&f, &g, Policy::Exact);
}

#[test]
fn max_reduction_uses_multi_reduction() {
    let maps = vec![IndexingMap::identity(2), IndexingMap::from_dims(2, &[1])];
    let its = [IteratorKind::Reduction, IteratorKind::Parallel];
    let f = generic_fn(&[vec![3, 4]], &[4], maps, &its, |b, a| {
        vec![b.value("arith.maxf", vec![a[1], a[0]], Type::scalar(ElemType::F32), Default::default())]
    });
    let g = vectorized(&f);
    assert_eq!(count(&g, "vector.multi_reduction"), 1);
    assert_same(&f, &g, Policy::Exact);
}

#[test]
fn strided_window_is_not_a_vector_dim() {
    let (p, r) = (IteratorKind::Parallel, IteratorKind::Reduction);
    // O[w] += I[2w + k] * K[k]
    let maps = vec![
        IndexingMap::new(2, vec![IndexExpr::term(0, 2).add(&IndexExpr::dim(1))]),
        IndexingMap::from_dims(2, &[1]),
        IndexingMap::from_dims(2, &[0]),
    ];
    let f = generic_fn(&[vec![9], vec![3]], &[4], maps, &[p, r], |b, a| {
        let e = Type::scalar(ElemType::F32);
        let m = b.value("arith.mulf", vec![a[0], a[1]], e.clone(), Default::default());
        vec![b.value("arith.addf", vec![a[2], m], e, Default::default())]
    });
    assert!(vectorize(&mut f.clone(), VectorizeOptions::default()).is_err());
}

fn named_case(kind: usize, a: i64, b: i64, c: i64, s: i64) -> (&'static str, Vec<Vec<i64>>, Vec<i64>, String) {
    let sa = |n: usize| {
        let st = vec![s.to_string(); n].join(", ");
        let one = vec!["1"; n].join(", ");
        format!(" {{dilations = [{one}], strides = [{st}]}}")
    };
    match kind {
        0 => ("matmul", vec![vec![a, c], vec![c, b]], vec![a, b], String::new()),
        1 => ("matmul_atb", vec![vec![c, a], vec![c, b]], vec![a, b], String::new()),
        2 => ("matmul_abt", vec![vec![a, c], vec![b, c]], vec![a, b], String::new()),
        3 => ("conv_1d_nwc_wcf", vec![vec![1, a * s + 3, c], vec![3, c, b]], vec![1, a + 1, b], sa(1)),
        4 => ("depthwise_conv_2d_nhwc_hwc", vec![vec![1, (a - 1) * s + 2, (b - 1) * s + 3, c], vec![2, 3, c]], vec![1, a, b, c], sa(2)),
        5 => ("conv_2d_nhwc_hwcf", vec![vec![1, (a - 1) * s + 2, (b - 1) * s + 2, c], vec![2, 2, c, 2]], vec![1, a, b, 2], sa(2)),
        6 => ("transpose_2d", vec![vec![a, b]], vec![b, a], String::new()),
        7 => ("row_reduction_2d", vec![vec![a, b]], vec![a], String::new()),
        8 => ("col_reduction_2d", vec![vec![a, b]], vec![b], String::new()),
        9 => ("copy_2d", vec![vec![a, b]], vec![a, b], String::new()),
        10 => ("depthwise_conv_1d_nwc_wc", vec![vec![1, (a - 1) * s + 3, c]], vec![1, a, c], sa(1)),
        _ => ("fill", vec![], vec![a, b], " {value = 2.5}".into()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every named op with static shapes vectorizes and keeps its values.
    #[test]
    fn vectorization_is_total_on_named_ops(kind in 0usize..12, a in 2i64..5, b in 2i64..5, c in 1i64..4, s in 1i64..3, float in any::<bool>()) {
        let (name, mut ins, out, attrs) = named_case(kind, a, b, c, s);
        if kind == 10 {
            ins.push(vec![3, c]);
        }
        let elem = if float { "f32" } else { "i32" };
        let f = parse_fn(&kernel(name, &ins, &out, elem, &attrs));
        let g = vectorized(&f);
        prop_assert_eq!(g.walk().into_iter().filter(|&o| g.op(o).name.starts_with("linalg.")).count(), 0);
        let policy = if float { Policy::RelTol(1e-6) } else { Policy::Exact };
        assert_same(&f, &g, policy);
    }
}

fn padded_conv() -> (Function, Function) {
    let orig = parse_fn(&kernel("conv_1d_nwc_wcf", &[vec![1, 10, 4], vec![3, 4, 8]], &[1, 8, 8], "f32", ""));
    let mut f = orig.clone();
    let cfg = TileConfig { sizes: vec![1, 8, 32, 1, 8], pad: true, ..Default::default() };
    let op = structured_op(&f);
    let nest = tile_op(&mut f, op, &cfg).unwrap();
    pad_operands(&mut f, nest.inner, &[0.0; 3], &[false; 3]).unwrap();
    (orig, f)
}

#[test]
fn padded_tile_vectorizes_with_and_without_pad_vectorization() {
    let (orig, f) = padded_conv();
    let mut g = f.clone();
    vectorize(&mut g, VectorizeOptions::default()).unwrap();
    check(&g);
    assert_eq!(count(&g, "tensor.pad"), 3);
    assert_eq!(count(&g, "vector.contract"), 1);
    assert_same(&orig, &g, Policy::RelTol(1e-6));

    let mut h = f.clone();
    vectorize(&mut h, VectorizeOptions { vectorize_padding: true }).unwrap();
    check(&h);
    assert_eq!(count(&h, "tensor.pad"), 0);
    let masked = h
        .find_ops("vector.transfer_read")
        .into_iter()
        .filter(|&o| h.op(o).ints_attr("in_bounds").unwrap().contains(&0))
        .count();
    assert_eq!(masked, 3);
    assert_same(&orig, &h, Policy::RelTol(1e-6));
}

#[test]
fn invariant_reads_leave_the_loop() {
    let t = Type::static_tensor(&[4], ElemType::F32);
    let mut f = Function::new("k", vec![t.clone(), t.clone()], vec![t.clone()]);
    let (src, init) = (f.args()[0], f.args()[1]);
    let entry = f.body;
    let mut b = Builder::at_end(&mut f, entry);
    let (lb, ub, st) = (b.const_index(0), b.const_index(3), b.const_index(1));
    let l = build_for(&mut b, lb, ub, st, vec![init]);
    let mut ib = Builder::at_end(b.f, l.body);
    let v = tlc::transforms::vectorize::read_full(&mut ib, src);
    let acc = tlc::transforms::vectorize::read_full(&mut ib, l.iter_args[0]);
    let s = ib.value("arith.addf", vec![v, acc], Type::vector(&[4], ElemType::F32), Default::default());
    let w = tlc::transforms::vectorize::write_full(&mut ib, s, l.iter_args[0]);
    ib.yield_("scf.yield", vec![w]);
    let r = l.results[0];
    Builder::at_end(&mut f, entry).yield_("func.return", vec![r]);
    check(&f);
    let mut g = f.clone();
    assert!(hoist_loop_invariants(&mut g) >= 1);
    check(&g);
    let inside = g.walk_nested(l.op).into_iter().filter(|&o| g.op(o).name == "vector.transfer_read").count();
    assert_eq!(inside, 1);
    assert_same(&f, &g, Policy::Exact);
}
