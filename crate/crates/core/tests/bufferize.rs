mod common;

use common::{inputs_for, kernel, parse_fn, CONFLICT};
use tlc::interp::{diff_check, run_function, Policy};
use tlc::ir::{print_function, verify_function, Function, OpId};
use tlc::transforms::{
    analyze, bufferize, clobbered_reads, hoist_padding, last_write, pad_operands, tile_op, vectorize, AnalysisOrder,
    TileConfig, VectorizeOptions,
};

const ORDERS: [AnalysisOrder; 2] = [AnalysisOrder::Forward, AnalysisOrder::Reverse];

fn check(f: &Function) {
    assert!(verify_function(f).is_empty(), "{:?}\n{}", verify_function(f), print_function(f));
}

fn structured_op(f: &Function) -> OpId {
    f.walk().into_iter().find(|&o| f.op(o).name.starts_with("linalg.")).unwrap()
}

/// Bufferizes under `order`, checks values and clobbered reads against the tensor form.
fn bufferized(f: &Function, order: AnalysisOrder, policy: Policy) -> Function {
    let mut g = f.clone();
    bufferize(&mut g, order).unwrap();
    check(&g);
    assert!(g.walk().iter().all(|&o| g.op(o).results.iter().chain(&g.op(o).operands).all(|&v| !g.ty(v).is_tensor())));
    let inputs = inputs_for(f);
    let want = run_function(f, &inputs, None).unwrap();
    let got = run_function(&g, &inputs, None).unwrap();
    assert_eq!(want.len(), got.len());
    for (w, x) in want.iter().zip(&got) {
        let r = diff_check(x, w, policy);
        assert!(r.pass, "{} order: {r}\n{}", order.name(), print_function(&g));
    }
    assert_eq!(clobbered_reads(f, &g, &inputs).unwrap(), 0, "{}", print_function(&g));
    g
}

fn counts(f: &Function) -> (usize, usize) {
    (f.count_ops("memref.alloc"), f.count_ops("memref.copy"))
}

#[test]
fn read_after_write_forces_one_copy() {
    let f = parse_fn(CONFLICT);
    for order in ORDERS {
        let st = analyze(&f, order);
        assert_eq!(st.out_of_place(), 1);
        let g = bufferized(&f, order, Policy::Exact);
        assert_eq!(counts(&g), (1, 1), "{}", print_function(&g));
        assert_eq!(g.count_ops("memref.dealloc"), 0);
    }
}

#[test]
fn insert_without_later_read_is_in_place() {
    let src = CONFLICT.replace("%4 = tensor.extract(%0, %2)", "%4 = tensor.extract(%3, %2)");
    let f = parse_fn(&src);
    for order in ORDERS {
        assert_eq!(counts(&bufferized(&f, order, Policy::Exact)), (0, 0));
    }
}

#[test]
fn read_only_argument_is_never_written() {
    let src = CONFLICT
        .replace("%0: tensor<4xf32>", "%0: tensor<4xf32> {bufferize = in}")
        .replace("%4 = tensor.extract(%0, %2)", "%4 = tensor.extract(%3, %2)");
    let f = parse_fn(&src);
    for order in ORDERS {
        assert_eq!(counts(&bufferized(&f, order, Policy::Exact)), (1, 1));
    }
}

fn annotate(src: &str, n_in: usize) -> String {
    let mut s = src.to_string();
    for i in 0..=n_in {
        let ann = if i < n_in { "in" } else { "out" };
        let start = s.find(&format!("%{i}: tensor<")).unwrap();
        let end = start + s[start..].find('>').unwrap() + 1;
        s.insert_str(end, &format!(" {{bufferize = {ann}}}"));
    }
    s
}

#[test]
fn tiled_vectorized_matmul_needs_no_buffers() {
    let f = parse_fn(&annotate(&kernel("matmul", &[vec![8, 16], vec![16, 12]], &[8, 12], "f32", ""), 2));
    let mut t = f.clone();
    let op = structured_op(&t);
    tile_op(&mut t, op, &TileConfig { sizes: vec![4, 4, 8], ..Default::default() }).unwrap();
    vectorize(&mut t, VectorizeOptions::default()).unwrap();
    check(&t);
    for order in ORDERS {
        let g = bufferized(&t, order, Policy::RelTol(1e-6));
        assert_eq!(counts(&g), (0, 0), "{}", print_function(&g));
        assert_eq!(g.result_types.len(), 0);
    }
}

#[test]
fn unannotated_output_is_returned_as_a_buffer() {
    let f = parse_fn(&kernel("matmul", &[vec![3, 4], vec![4, 5]], &[3, 5], "i32", ""));
    for order in ORDERS {
        let g = bufferized(&f, order, Policy::Exact);
        assert_eq!(counts(&g), (0, 0));
        assert_eq!(g.result_types.len(), 1);
    }
}

#[test]
fn pads_become_fill_and_copy() {
    let orig = parse_fn(&kernel("conv_1d_nwc_wcf", &[vec![1, 10, 4], vec![3, 4, 8]], &[1, 8, 8], "f32", ""));
    let mut f = orig.clone();
    let cfg = TileConfig { sizes: vec![1, 8, 32, 1, 8], pad: true, ..Default::default() };
    let op = structured_op(&f);
    let nest = tile_op(&mut f, op, &cfg).unwrap();
    pad_operands(&mut f, nest.inner, &[0.0; 3], &[false; 3]).unwrap();
    for order in ORDERS {
        let g = bufferized(&f, order, Policy::Exact);
        assert_eq!(g.count_ops("memref.alloc"), 3);
        assert_eq!(g.count_ops("memref.dealloc"), 3);
        assert_eq!(g.count_ops("linalg.fill"), 3);
    }
}

#[test]
fn hoisted_packing_allocates_one_packed_buffer() {
    let orig = parse_fn(&kernel("conv_1d_nwc_wcf", &[vec![1, 10, 4], vec![3, 4, 8]], &[1, 8, 8], "f32", ""));
    let mut f = orig.clone();
    let cfg = TileConfig { sizes: vec![1, 8, 32, 1, 8], pad: true, ..Default::default() };
    let op = structured_op(&f);
    let nest = tile_op(&mut f, op, &cfg).unwrap();
    let pads = pad_operands(&mut f, nest.inner, &[0.0; 3], &[false; 3]).unwrap();
    let packed = hoist_padding(&mut f, pads[0].unwrap(), 3).unwrap().unwrap();
    let prologue = f.defining_op(packed).unwrap();
    check(&f);
    for order in ORDERS {
        let st = analyze(&f, order);
        assert_eq!(st.pad_into.len(), 1);
        let g = bufferized(&f, order, Policy::Exact);
        let packed_allocs = g.find_ops("memref.alloc").into_iter().filter(|&o| g.ty(g.op(o).results[0]).rank() == 5).count();
        assert_eq!(packed_allocs, 1, "{}", print_function(&g));
        assert_eq!(g.walk_nested(prologue).iter().filter(|&&o| g.op(o).name == "memref.alloc").count(), 0);
    }
}

#[test]
fn last_write_skips_views_and_follows_loops() {
    let f = parse_fn(CONFLICT);
    let insert = f.find_ops("tensor.insert")[0];
    let r = f.op(insert).results[0];
    assert_eq!(last_write(&f, r), r);
    assert_eq!(last_write(&f, f.args()[0]), f.args()[0]);

    let mut t = parse_fn(&kernel("matmul", &[vec![8, 8], vec![8, 8]], &[8, 8], "f32", ""));
    let op = structured_op(&t);
    let nest = tile_op(&mut t, op, &TileConfig { sizes: vec![4, 4, 0], ..Default::default() }).unwrap();
    let outer = tlc::ir::ops::ForView::new(&t, nest.loops[0]);
    let inserts = t.find_ops("tensor.insert_slice");
    assert_eq!(inserts.len(), 1);
    let written = t.op(inserts[0]).results[0];
    assert_eq!(last_write(&t, outer.results[0]), written);
    assert_eq!(last_write(&t, outer.iter_args[0]), written);
    let slice = t.find_ops("tensor.extract_slice").into_iter().map(|o| t.op(o).results[0]).find(|&v| {
        t.op(t.defining_op(v).unwrap()).operands[0] != t.args()[0] && t.op(t.defining_op(v).unwrap()).operands[0] != t.args()[1]
    });
    assert_eq!(last_write(&t, slice.unwrap()), written);
}

#[test]
fn bufferizing_twice_is_rejected() {
    let mut f = parse_fn(CONFLICT);
    bufferize(&mut f, AnalysisOrder::Reverse).unwrap();
    assert!(bufferize(&mut f, AnalysisOrder::Reverse).is_err());
}

/// Straight-line program over `tensor<6xf32>` values mixing element and slice inserts with reads of
/// older versions. `steps` entries are (kind, source pick, index).
fn random_program(steps: &[(u8, usize, i64)], annotate_in: bool) -> String {
    let t = "tensor<6xf32>";
    let ann = if annotate_in { " {bufferize = in}" } else { "" };
    let mut body = vec!["    %2 = arith.constant() {value = 0} : () -> index".to_string()];
    let mut tensors = vec!["%0".to_string()];
    let mut scalars = Vec::new();
    let mut n = 3;
    for &(kind, pick, idx) in steps {
        let src = tensors[pick % tensors.len()].clone();
        body.push(format!("    %{n} = arith.constant() {{value = {idx}}} : () -> index"));
        let c = n;
        n += 1;
        match kind % 4 {
            0 => {
                body.push(format!("    %{n} = tensor.insert(%1, {src}, %{c}) : (f32, {t}, index) -> {t}"));
                tensors.push(format!("%{n}"));
            }
            1 => {
                body.push(format!("    %{n} = tensor.extract({src}, %{c}) : ({t}, index) -> f32"));
                scalars.push(format!("%{n}"));
            }
            2 => {
                // copy a 2-wide window of an older version into the newest one
                let dest = tensors.last().unwrap().clone();
                let off = idx.min(4);
                body.push(format!("    %{n} = arith.constant() {{value = {off}}} : () -> index"));
                let o = n;
                n += 1;
                body.push(format!(
                    "    %{n} = tensor.extract_slice({src}, %{o}) {{static_sizes = [2]}} : ({t}, index) -> tensor<2xf32>"
                ));
                let s = n;
                n += 1;
                body.push(format!(
                    "    %{n} = tensor.insert_slice(%{s}, {dest}, %2) {{static_sizes = [2]}} : (tensor<2xf32>, {t}, index) -> {t}"
                ));
                tensors.push(format!("%{n}"));
            }
            _ => {
                let v = scalars.last().cloned().unwrap_or("%1".into());
                body.push(format!("    %{n} = tensor.insert({v}, {src}, %{c}) : (f32, {t}, index) -> {t}"));
                tensors.push(format!("%{n}"));
            }
        }
        n += 1;
    }
    let mut rets: Vec<String> = tensors.iter().skip(1).step_by(2).cloned().collect();
    rets.push(tensors.last().unwrap().clone());
    let mut tys: Vec<&str> = vec![t; rets.len()];
    rets.extend(scalars.iter().cloned());
    tys.extend(std::iter::repeat_n("f32", scalars.len()));
    format!(
        "module {{\n  func @k(%0: {t}{ann}, %1: f32) -> ({}) {{\n{}\n    func.return({}) : ({}) -> ()\n  }}\n}}\n",
        tys.join(", "),
        body.join("\n"),
        rets.join(", "),
        tys.join(", ")
    )
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(96))]

    /// Either analysis order yields a program computing the tensor semantics that never reads a
    /// clobbered buffer.
    #[test]
    fn bufferization_never_reads_clobbered_data(
        steps in proptest::collection::vec((0u8..4, 0usize..8, 0i64..6), 1..9),
        annotate_in in proptest::bool::ANY,
    ) {
        let f = parse_fn(&random_program(&steps, annotate_in));
        check(&f);
        for order in ORDERS {
            bufferized(&f, order, Policy::Exact);
        }
    }
}
