//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test fails if any criterion fails.

mod common;

use std::fmt::Display;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{add12, domain_mismatches, inputs_for, kernel, parse_fn, random_case, KernelCase, CONFLICT, KERNEL_KINDS};
use num_rational::Ratio;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tlc::interp::{diff_check, oracle_eval, run_function, Dense, ExecTrace, OracleParams};
use tlc::ir::{parse_module, print_module, verify_module, Dim, ElemType, Function, Module};
use tlc::metrics::{estimate_depthwise_volume, DepthwiseParams};
use tlc::pipeline::{parse_pipeline, policy_for, run_pipeline, Stage};
use tlc::transforms::{
    analyze, bufferize, cancelling_pairs, canonicalize, clobbered_reads, lower_contractions, lower_multi_reductions,
    lower_outerproducts, lower_transposes, tile_op, unroll_vector, unroll_vectors, vectorize, AnalysisOrder,
    ContractionLowering, MultiReductionLowering, TileConfig, TransposeLowering, UnrollTarget, VectorizeOptions,
};

type Outcome = Result<String, String>;

const ORDERS: [AnalysisOrder; 2] = [AnalysisOrder::Forward, AnalysisOrder::Reverse];
const TOL: f64 = 1e-6;
const CONV_PIPELINE: &str = "tile{sizes=[1,8,32,1,8]},pad{hoist=[3,0,0]},vectorize,bufferize,lower-vectors{contraction=outerproduct}";

fn s<T, E: Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: u64) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < Duration::from_secs(limit), || format!("took {t:.2?}, limit {limit}s"))?;
    Ok(t)
}

fn structured_op(f: &Function) -> tlc::ir::OpId {
    f.walk().into_iter().find(|&o| f.op(o).name.starts_with("linalg.")).unwrap()
}

/// Multiples of 1/8 in [-4, 4] (floats) or integers in [-32, 32]: every partial sum below is exact.
fn exact_inputs(f: &Function, rng: &mut StdRng) -> Vec<Dense> {
    f.args()
        .iter()
        .map(|&a| {
            let t = f.ty(a);
            let shape = t.static_shape().unwrap();
            let n: i64 = shape.iter().product();
            let ks: Vec<i64> = (0..n).map(|_| rng.gen_range(-32..=32)).collect();
            if t.elem().is_float() {
                Dense::from_f64(t.elem(), shape, &ks.iter().map(|&k| k as f64 / 8.0).collect::<Vec<_>>())
            } else {
                Dense::from_i64(t.elem(), shape, &ks)
            }
        })
        .collect()
}

fn conv_module(elem: &str) -> Module {
    parse_module(&kernel("conv_1d_nwc_wcf", &[vec![1, 10, 4], vec![3, 4, 8]], &[1, 8, 8], elem, "")).unwrap()
}

fn executability() -> Outcome {
    let start = Instant::now();
    let spec = s(parse_pipeline(CONV_PIPELINE))?;
    let mut runs = 0;
    let mut worst: f64 = 0.0;
    for elem in ["i32", "f32"] {
        let m = conv_module(elem);
        let (_, stages) = s(run_pipeline(&m, &spec, true))?;
        ensure(stages.len() == 6, || format!("{} stages", stages.len()))?;
        let f0 = &m.functions[0];
        let mut rng = StdRng::seed_from_u64(1);
        let mut sets = vec![inputs_for(f0)];
        sets.extend((0..4).map(|_| exact_inputs(f0, &mut rng)));
        for inputs in &sets {
            let want = s(oracle_eval("conv_1d_nwc_wcf", inputs, &OracleParams::default()))?;
            for (i, st) in stages.iter().enumerate() {
                let got = s(run_function(&st.module.functions[0], inputs, None))?;
                let r = diff_check(&got[0], &want, policy_for(&want, TOL));
                ensure(r.pass, || format!("{elem} stage {i} ({}): {r}", st.label))?;
                worst = worst.max(r.max_rel_err);
                runs += 1;
            }
        }
    }
    let t = within(start, 10)?;
    Ok(format!("{runs} stage runs (i32 exact, f32 max rel err {worst:e}) in {t:.2?}"))
}

fn domain_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let cases = 600;
    let (mut points, mut mismatches) = (0usize, 0usize);
    for i in 0..cases {
        let case = random_case(KERNEL_KINDS[i % KERNEL_KINDS.len()], &mut rng, 6);
        let f = parse_fn(&case.source("f32"));
        let (sizes, m) = domain_mismatches(&f);
        ensure(sizes == case.extents, || format!("{}: derived {sizes:?}, built from {:?}", case.kind, case.extents))?;
        mismatches += m;
        points += sizes.iter().map(|s| (s + 1) as usize).product::<usize>();
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatching points"))?;
    let t = within(start, 30)?;
    Ok(format!("{cases} cases, {points} points scanned, 0 mismatches in {t:.2?}"))
}

/// Dims of the tiled op's operands are dynamic exactly where a non-divisible iterator indexes them.
fn dynamic_dims_follow_divisibility(case: &KernelCase, tiles: &[i64]) -> Result<(), String> {
    let orig = parse_fn(&case.source("i32"));
    let mut f = orig.clone();
    let op = structured_op(&f);
    let nest = s(tile_op(&mut f, op, &TileConfig { sizes: tiles.to_vec(), ..Default::default() }))?;
    s(canonicalize(&mut f))?;
    let v = tlc::structured::StructuredView::new(&f, nest.inner);
    let ragged: Vec<bool> = case.extents.iter().zip(tiles).map(|(&e, &t)| t != 0 && e % t != 0).collect();
    for (k, (&x, m)) in v.operands().iter().zip(&v.maps).enumerate() {
        for (d, (e, dim)) in m.results.iter().zip(f.ty(x).dims()).enumerate() {
            let want_dynamic = e.dims().any(|i| ragged[i]);
            ensure(dim.is_dynamic() == want_dynamic, || {
                format!("{} tiles {tiles:?}: operand {k} dim {d} is {dim:?}", case.kind)
            })?;
        }
    }
    let inputs = inputs_for(&orig);
    let (a, b) = (s(run_function(&orig, &inputs, None))?, s(run_function(&f, &inputs, None))?);
    ensure(a[0].bitwise_eq(&b[0]), || format!("{} tiles {tiles:?}: values differ", case.kind))
}

fn tiling_partial_tiles() -> Outcome {
    // extent 10, tile 8: the inner op runs on an 8-row tile, then a 2-row tile
    let orig = parse_fn(&kernel("copy_2d", &[vec![10, 4]], &[10, 4], "f32", ""));
    let mut f = orig.clone();
    let op = structured_op(&f);
    let nest = s(tile_op(&mut f, op, &TileConfig { sizes: vec![8, 0], ..Default::default() }))?;
    let mut t = ExecTrace::default();
    s(run_function(&f, &inputs_for(&f), Some(&mut t)))?;
    let mut rows: Vec<(i64, usize)> = Vec::new();
    for v in t.visits.iter().filter(|v| v.op == nest.inner) {
        match rows.last_mut() {
            Some(r) if r.0 == v.loops[0].1 => r.1 += 1,
            _ => rows.push((v.loops[0].1, 1)),
        }
    }
    let sizes: Vec<i64> = rows.iter().map(|r| r.1 as i64 / 4).collect();
    ensure(sizes == [8, 2], || format!("tile sizes {sizes:?}"))?;
    let dims = f.ty(f.op(nest.inner).operands[0]).dims().to_vec();
    ensure(dims == [Dim::Dynamic, Dim::Static(4)], || format!("partial tile type dims {dims:?}"))?;

    // divisible extents are refined to static types
    let mut g = parse_fn(&kernel("copy_2d", &[vec![16, 4]], &[16, 4], "f32", ""));
    let op = structured_op(&g);
    let nest = s(tile_op(&mut g, op, &TileConfig { sizes: vec![8, 2], ..Default::default() }))?;
    s(canonicalize(&mut g))?;
    ensure(g.op(nest.inner).operands.iter().all(|&v| g.ty(v).has_static_shape()), || "divisible tile not static".into())?;

    // the running conv tile and random kernels with random tile sizes
    let conv = KernelCase {
        kind: "conv_1d_nwc_wcf",
        ins: vec![vec![1, 10, 4], vec![3, 4, 8]],
        out: vec![1, 8, 8],
        attrs: String::new(),
        extents: vec![1, 8, 8, 3, 4],
    };
    dynamic_dims_follow_divisibility(&conv, &[1, 8, 32, 1, 8])?;
    let mut rng = StdRng::seed_from_u64(3);
    let mut n = 1;
    for i in 0..60 {
        let case = random_case(KERNEL_KINDS[i % KERNEL_KINDS.len()], &mut rng, 5);
        let tiles: Vec<i64> = case.extents.iter().map(|&e| rng.gen_range(0..=e + 1)).collect();
        if tiles.iter().all(|&t| t == 0) {
            continue;
        }
        dynamic_dims_follow_divisibility(&case, &tiles)?;
        n += 1;
    }
    Ok(format!("min rule gives [8, 2]; dynamic dims match divisibility on {n} tiled kernels"))
}

fn counts(f: &Function) -> (usize, usize) {
    (f.count_ops("memref.alloc"), f.count_ops("memref.copy"))
}

fn annotated_matmul() -> Function {
    let src = kernel("matmul", &[vec![8, 16], vec![16, 12]], &[8, 12], "f32", "")
        .replace("%0: tensor<8x16xf32>", "%0: tensor<8x16xf32> {bufferize = in}")
        .replace("%1: tensor<16x12xf32>", "%1: tensor<16x12xf32> {bufferize = in}")
        .replace("%2: tensor<8x12xf32>", "%2: tensor<8x12xf32> {bufferize = out}");
    let mut f = parse_fn(&src);
    let op = structured_op(&f);
    tile_op(&mut f, op, &TileConfig { sizes: vec![4, 4, 8], ..Default::default() }).unwrap();
    vectorize(&mut f, VectorizeOptions::default()).unwrap();
    f
}

/// Tile sizes for corpus pipelines: 2 everywhere, 1 on window dims and on the conv row dim.
fn corpus_tiles(case: &KernelCase) -> Vec<i64> {
    let ones: &[usize] = match case.kind {
        "conv_1d_nwc_wcf" => &[3],
        "conv_2d_nhwc_hwcf" => &[1, 4, 5],
        "depthwise_conv_1d_nwc_wc" => &[3],
        "depthwise_conv_2d_nhwc_hwc" => &[1, 4, 5],
        _ => &[],
    };
    (0..case.extents.len()).map(|i| if ones.contains(&i) { 1 } else { 2 }).collect()
}

fn tiles_str(t: &[i64]) -> String {
    t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Programs and the pipelines run on them.
fn corpus() -> Vec<(String, Module, Vec<String>)> {
    let mut out = Vec::new();
    let mut rng = StdRng::seed_from_u64(4);
    for &kind in KERNEL_KINDS {
        for elem in ["f32", "i32"] {
            let case = random_case(kind, &mut rng, 4);
            let t = tiles_str(&corpus_tiles(&case));
            let pipelines = vec![
                String::new(),
                "bufferize".to_string(),
                format!("tile{{sizes=[{t}]}},bufferize"),
                format!("tile{{sizes=[{t}], pad=true}},vectorize,bufferize,lower-vectors"),
                format!("tile{{sizes=[{t}], pad=true}},vectorize,bufferize,lower-vectors{{contraction=dot, multi_reduction=outer_parallel, transpose=shuffle}}"),
            ];
            out.push((format!("{kind}:{elem}"), parse_module(&case.source(elem)).unwrap(), pipelines));
        }
    }
    out.push(("conv running example".into(), conv_module("f32"), vec![CONV_PIPELINE.to_string()]));
    let matmul = kernel("matmul", &[vec![8, 16], vec![16, 12]], &[8, 12], "f32", "");
    out.push((
        "matmul unrolled".into(),
        parse_module(&matmul).unwrap(),
        vec!["tile{sizes=[4,4,8]},vectorize,bufferize,unroll-vector{op=contract, target=[2,4,4]},unroll-vector{op=transfer_read, target=[2,4]},lower-vectors".into()],
    ));
    let insert_later = CONFLICT.replace("%4 = tensor.extract(%0, %2)", "%4 = tensor.extract(%3, %2)");
    let read_only = insert_later.replace("%0: tensor<4xf32>", "%0: tensor<4xf32> {bufferize = in}");
    for (name, src) in [("conflict", CONFLICT.to_string()), ("insert then read", insert_later), ("read-only arg", read_only)] {
        out.push((name.into(), parse_module(&src).unwrap(), vec!["bufferize".into()]));
    }
    out
}

/// Every (program, pipeline, order) expanded into its stages.
fn corpus_runs() -> Result<Vec<(String, Vec<Stage>)>, String> {
    let mut runs = Vec::new();
    for (name, m, pipelines) in corpus() {
        for p in pipelines {
            for order in ORDERS {
                let text = if p.contains("bufferize") { p.replace("bufferize", &format!("bufferize{{order={}}}", order.name())) } else { p.clone() };
                let spec = s(parse_pipeline(&text))?;
                let (_, stages) = run_pipeline(&m, &spec, true).map_err(|e| format!("{name} [{text}]: {e}"))?;
                runs.push((format!("{name} [{text}]"), stages));
                if !p.contains("bufferize") {
                    break;
                }
            }
        }
    }
    Ok(runs)
}

fn bufferization_decisions() -> Outcome {
    let conflict = parse_fn(CONFLICT);
    let matmul = annotated_matmul();
    for order in ORDERS {
        let mut g = conflict.clone();
        s(bufferize(&mut g, order))?;
        ensure(counts(&g) == (1, 1), || format!("conflict under {}: (allocs, copies) = {:?}", order.name(), counts(&g)))?;
        ensure(analyze(&matmul, order).out_of_place() == 0, || "matmul has out-of-place operands".into())?;
        let mut g = matmul.clone();
        s(bufferize(&mut g, order))?;
        ensure(counts(&g) == (0, 0), || format!("matmul under {}: (allocs, copies) = {:?}", order.name(), counts(&g)))?;
    }
    let mut checked = 0;
    for (name, stages) in corpus_runs()? {
        let Some(k) = stages.iter().position(|st| st.label.starts_with("bufferize")) else { continue };
        let (before, after) = (&stages[k - 1].module.functions[0], &stages[k].module.functions[0]);
        let mut rng = StdRng::seed_from_u64(checked as u64);
        for inputs in [inputs_for(before), exact_inputs(before, &mut rng)] {
            let n = clobbered_reads(before, after, &inputs).map_err(|e| format!("{name}: {e}"))?;
            ensure(n == 0, || format!("{name}: {n} clobbered reads"))?;
        }
        checked += 1;
    }
    Ok(format!("conflict 1 alloc + 1 copy; annotated matmul 0 + 0; 0 clobbered reads over {checked} bufferized corpus runs"))
}

fn unrolling_arithmetic() -> Outcome {
    let mut f = parse_fn(&kernel("matmul", &[vec![4, 2], vec![2, 8]], &[4, 8], "f32", ""));
    s(vectorize(&mut f, VectorizeOptions::default()))?;
    let op = f.find_ops("vector.contract")[0];
    ensure(tlc::transforms::unroll_shape(&f, op) == Some(vec![4, 8, 2]), || "contract shape".into())?;
    s(unroll_vector(&mut f, op, &[2, 8, 2]))?;
    let contracts = f.count_ops("vector.contract");
    ensure(contracts == 2, || format!("{contracts} contracts"))?;

    let mut g = add12();
    let op = g.find_ops("arith.addf")[0];
    s(unroll_vector(&mut g, op, &[4]))?;
    let adds = g.count_ops("arith.addf");
    ensure(adds == 3, || format!("{adds} adds"))?;

    // the unrolled matmul pipeline leaves no insert/extract pair behind
    let orig = annotated_matmul();
    let mut h = orig.clone();
    s(bufferize(&mut h, AnalysisOrder::Reverse))?;
    let targets = [("contract", vec![2, 4, 4]), ("transfer_read", vec![2, 4]), ("transfer_write", vec![2, 4])];
    for (op, target) in targets {
        s(unroll_vectors(&mut h, &UnrollTarget { op: op.into(), source: None, target }))?;
    }
    let pairs = cancelling_pairs(&h);
    ensure(pairs == 0, || format!("{pairs} cancelling pairs"))?;
    let inputs = inputs_for(&orig);
    let (a, b) = (s(run_function(&orig, &inputs, None))?, s(run_function(&h, &inputs, None))?);
    let r = diff_check(&b[0], &a[0], policy_for(&a[0], TOL));
    ensure(r.pass, || r.to_string())?;
    Ok(format!("4x8x2 -> {contracts} contracts; vector<12> -> {adds} ops; 0 cancelling pairs after folding"))
}

fn vectorized(src: &str) -> Function {
    let mut f = parse_fn(src);
    vectorize(&mut f, VectorizeOptions::default()).unwrap();
    f
}

fn strategy_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(6);
    let instances = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (m, n, k) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8));
        let f = vectorized(&kernel("matmul", &[vec![m, k], vec![k, n]], &[m, n], "f32", ""));
        let inputs = exact_inputs(&f, &mut rng);
        let mut outs = Vec::new();
        for st in [ContractionLowering::OuterProduct, ContractionLowering::Dot] {
            let mut g = f.clone();
            s(lower_contractions(&mut g, st))?;
            s(lower_outerproducts(&mut g))?;
            outs.push(s(run_function(&g, &inputs, None))?.remove(0));
        }
        let r = diff_check(&outs[0], &outs[1], policy_for(&outs[1], TOL));
        ensure(r.pass, || format!("contract {m}x{n}x{k}: {r}"))?;
        worst = worst.max(r.max_rel_err);
    }
    for _ in 0..instances {
        let (a, b) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let (kind, out) = if rng.gen_bool(0.5) { ("row_reduction_2d", a) } else { ("col_reduction_2d", b) };
        let f = vectorized(&kernel(kind, &[vec![a, b]], &[out], "f32", ""));
        let inputs = exact_inputs(&f, &mut rng);
        let mut outs = Vec::new();
        for st in [MultiReductionLowering::InnerParallel, MultiReductionLowering::OuterParallel] {
            let mut g = f.clone();
            s(lower_multi_reductions(&mut g, st))?;
            outs.push(s(run_function(&g, &inputs, None))?.remove(0));
        }
        let r = diff_check(&outs[0], &outs[1], policy_for(&outs[1], TOL));
        ensure(r.pass, || format!("{kind} {a}x{b}: {r}"))?;
        worst = worst.max(r.max_rel_err);
    }
    for _ in 0..instances {
        let (a, b) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let f = vectorized(&kernel("transpose_2d", &[vec![b, a]], &[a, b], "f32", ""));
        let inputs: Vec<Dense> = f
            .args()
            .iter()
            .map(|&x| {
                let shape = f.ty(x).static_shape().unwrap();
                let data: Vec<f64> = (0..shape.iter().product::<i64>()).map(|_| rng.gen_range(-1e3..1e3)).collect();
                Dense::from_f64(ElemType::F32, shape, &data)
            })
            .collect();
        let mut outs = Vec::new();
        for st in [TransposeLowering::Elementwise, TransposeLowering::Shuffle] {
            let mut g = f.clone();
            s(lower_transposes(&mut g, st))?;
            outs.push(s(run_function(&g, &inputs, None))?.remove(0));
        }
        ensure(outs[0].bitwise_eq(&outs[1]), || format!("transpose {a}x{b} differs"))?;
    }
    let t = within(start, 30)?;
    Ok(format!("{instances} instances per strategy pair, max rel err {worst:e}, transposes bitwise equal, {t:.2?}"))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn depthwise_volume() -> Outcome {
    #[rustfmt::skip]
    let sets: [(i64, i64, i64, i64, i64, i64, [i64; 2], [i64; 2]); 20] = [
        (1, 32, 1, 8, 1, 3, [1, 2], [1, 1]),
        (1, 32, 1, 8, 1, 3, [1, 1], [1, 1]),
        (1, 32, 1, 8, 1, 3, [1, 2], [1, 2]),
        (1, 16, 1, 16, 1, 5, [1, 3], [1, 3]),
        (2, 8, 1, 10, 1, 3, [1, 4], [1, 2]),
        (1, 64, 1, 7, 1, 7, [1, 2], [1, 4]),
        (4, 4, 1, 9, 1, 2, [1, 6], [1, 4]),
        (1, 3, 1, 5, 1, 4, [1, 1], [1, 3]),
        (1, 32, 8, 8, 3, 3, [1, 1], [1, 1]),
        (1, 32, 8, 8, 3, 3, [2, 2], [1, 1]),
        (1, 32, 8, 8, 3, 3, [2, 2], [2, 2]),
        (2, 16, 6, 5, 3, 5, [2, 3], [2, 3]),
        (1, 8, 4, 4, 2, 2, [4, 4], [2, 2]),
        (1, 8, 7, 3, 5, 5, [3, 1], [3, 2]),
        (3, 2, 5, 5, 2, 3, [2, 4], [4, 2]),
        (1, 1, 1, 1, 1, 1, [1, 1], [1, 1]),
        (1, 12, 10, 12, 3, 3, [1, 2], [2, 1]),
        (2, 6, 3, 9, 4, 2, [6, 2], [4, 6]),
        (1, 24, 2, 2, 7, 7, [2, 2], [2, 2]),
        (1, 5, 9, 4, 3, 1, [3, 5], [3, 5]),
    ];
    let mut gcd_gt1 = 0;
    let mut lines = Vec::new();
    for &(n, c, h, w, kh, kw, st, dl) in &sets {
        let p = DepthwiseParams { n, c, h, w, kh, kw, strides: st, dilations: dl, elem_bytes: 4 };
        let r = estimate_depthwise_volume(&p);
        let h_in = (h - 1) * st[0] + (kh - 1) * dl[0] + 1;
        let w_in = (w - 1) * st[1] + (kw - 1) * dl[1] + 1;
        let g = gcd(st[0], dl[0]) * gcd(st[1], dl[1]);
        // elements * g = g * (N C H W + Kh Kw C) + N C H_in W_in, in integers
        let scaled = g * (n * c * h * w + kh * kw * c) + n * c * h_in * w_in;
        ensure(r.gcd_factor == g && r.elements * g == Ratio::from_integer(scaled), || format!("{p:?}: {} vs {scaled}/{g}", r.elements))?;
        ensure(r.bytes == r.elements * 4, || "bytes".into())?;
        if g > 1 {
            gcd_gt1 += 1;
        }
        let approx = *r.elements.numer() as f64 / *r.elements.denom() as f64;
        lines.push(format!("{approx:.1}/{}", r.enumerated_elements));
    }
    ensure(gcd_gt1 >= 5, || format!("only {gcd_gt1} sets with gcd > 1"))?;
    Ok(format!("20 sets exact ({gcd_gt1} with gcd > 1); formula/enumerated: {}", lines.join(" ")))
}

fn round_trip_and_verify() -> Outcome {
    let mut modules = 0;
    for (name, stages) in corpus_runs()? {
        for st in &stages {
            let text = print_module(&st.module);
            let again = parse_module(&text).map_err(|e| format!("{name} / {}: {e}", st.label))?;
            ensure(print_module(&again) == text, || format!("{name} / {}: print is not canonical", st.label))?;
            let diags = verify_module(&again);
            ensure(diags.is_empty(), || format!("{name} / {}: {}", st.label, diags[0]))?;
            modules += 1;
        }
    }
    Ok(format!("{modules} stage modules round-trip bytewise and verify"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("executability at every stage of the conv pipeline", executability),
        ("iteration domains match brute force", domain_correctness),
        ("partial tiles and dynamic tile types", tiling_partial_tiles),
        ("bufferization decisions and safety", bufferization_decisions),
        ("vector unrolling arithmetic", unrolling_arithmetic),
        ("lowering strategies agree", strategy_agreement),
        ("depthwise volume formula", depthwise_volume),
        ("round trip and verifier", round_trip_and_verify),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (title, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let line = match &outcome {
            Ok(detail) => format!("criterion {}: PASS {title}: {detail}\n", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("criterion {}: FAIL {title}: {why}\n", i + 1)
            }
        };
        out.write_all(line.as_bytes()).unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// Every stage of every corpus run computes what the input program computes.
#[test]
fn corpus_stages_preserve_values() {
    let runs = corpus_runs().unwrap();
    for (name, stages) in &runs {
        let f0 = &stages[0].module.functions[0];
        let reports = tlc::pipeline::check_stages(stages, &f0.name, &inputs_for(f0), TOL).unwrap();
        for r in reports {
            assert!(r.pass(), "{name} stage {} ({}): {:?}", r.stage, r.label, r.outcome);
        }
    }
}
