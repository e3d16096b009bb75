mod common;

use common::{inputs_for, kernel, CONFLICT};
use proptest::prelude::*;
use tlc::interp::{oracle_eval, OracleParams, Policy};
use tlc::ir::{parse_module, print_module, Module};
use tlc::metrics::{estimate_depthwise_volume, report_metrics, DepthwiseParams};
use tlc::pipeline::{check_stages, parse_pipeline, run_pipeline, OptValue};

const CONV_PIPELINE: &str = "tile{sizes=[1,8,32,1,8]},pad{hoist=[3,0,0]},vectorize,bufferize,lower-vectors{contraction=outerproduct}";

fn conv_module(elem: &str) -> Module {
    parse_module(&kernel("conv_1d_nwc_wcf", &[vec![1, 10, 4], vec![3, 4, 8]], &[1, 8, 8], elem, "")).unwrap()
}

#[test]
fn parses_pass_lists() {
    assert_eq!(parse_pipeline("tile{sizes=[2,2,2]},vectorize,bufferize").unwrap().passes.len(), 3);
    let p = parse_pipeline("tile{sizes=[1,8,32,1,8], pad=true, hoist=[3,0,0]},vectorize,bufferize,lower-vectors{contraction=outerproduct}").unwrap();
    let names: Vec<&str> = p.passes.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["tile", "vectorize", "bufferize", "lower-vectors"]);
    assert_eq!(p.passes[0].get("hoist"), Some(&OptValue::Ints(vec![3, 0, 0])));
    assert_eq!(p.passes[0].get("pad"), Some(&OptValue::Bool(true)));
    assert!(parse_pipeline("").unwrap().passes.is_empty());
}

#[test]
fn rejects_bad_pipelines() {
    let e = parse_pipeline("frobnicate").unwrap_err().to_string();
    assert!(e.contains("unknown pass 'frobnicate'") && e.contains("lower-vectors"), "{e}");
    let e = parse_pipeline("tile{size=[2]}").unwrap_err().to_string();
    assert!(e.contains("valid options") && e.contains("sizes"), "{e}");
    let e = parse_pipeline("tile{sizes=4}").unwrap_err().to_string();
    assert!(e.contains("int list"), "{e}");
    let e = parse_pipeline("vectorize{padding=yes}").unwrap_err().to_string();
    assert!(e.contains("bool"), "{e}");
    let e = parse_pipeline("tile{sizes=[2,2}").unwrap_err().to_string();
    assert!(e.contains(":16:"), "{e}");
    assert!(parse_pipeline("tile{sizes=[2], sizes=[3]}").is_err());
    assert!(parse_pipeline("vectorize bufferize").is_err());
}

#[test]
fn canonical_form_is_stable() {
    let s = "unroll-vector{target=[2,8,2],  op=contract,source=[4,8,2]} , lower-vectors{transpose=shuffle,contraction=outerproduct,multi_reduction=inner_parallel}";
    let p = parse_pipeline(s).unwrap();
    let printed = p.to_string();
    assert_eq!(
        printed,
        "unroll-vector{op=contract, source=[4,8,2], target=[2,8,2]},lower-vectors{contraction=outerproduct, multi_reduction=inner_parallel, transpose=shuffle}"
    );
    assert_eq!(parse_pipeline(&printed).unwrap(), p);
    let q = parse_pipeline("pad{values=[0,1.5,-2e3]}").unwrap();
    assert_eq!(q.to_string(), "pad{values=[0.0,1.5,-2000.0]}");
}

fn arb_pass() -> impl Strategy<Value = String> {
    let ints = || proptest::collection::vec(0i64..40, 0..5).prop_map(|v| format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
    prop_oneof![
        (ints(), any::<bool>(), ints()).prop_map(|(s, p, h)| format!("tile{{hoist={h}, pad={p}, sizes={s}}}")),
        (proptest::collection::vec(-1000i32..1000, 1..4), ints()).prop_map(|(v, n)| {
            let vals: Vec<String> = v.iter().map(|x| format!("{}", *x as f64 / 4.0)).collect();
            format!("pad{{nofold={n}, values=[{}]}}", vals.join(","))
        }),
        any::<bool>().prop_map(|b| format!("vectorize{{padding={b}}}")),
        (1i64..4, 1i64..5).prop_map(|(p, a)| format!("unroll-loop{{amount={a}, parent={p}}}")),
        (ints(), ints()).prop_map(|(s, t)| format!("unroll-vector{{target={t}, source={s}}}")),
        prop_oneof![Just("forward"), Just("reverse")].prop_map(|o| format!("bufferize{{order={o}}}")),
        (prop_oneof![Just("dot"), Just("outerproduct")], prop_oneof![Just("shuffle"), Just("elementwise")])
            .prop_map(|(c, t)| format!("lower-vectors{{transpose={t},contraction={c}}}")),
        Just("canonicalize".to_string()),
    ]
}

proptest! {
    #[test]
    fn printed_pipelines_reparse_identically(passes in proptest::collection::vec(arb_pass(), 0..6)) {
        let p = parse_pipeline(&passes.join(" , ")).unwrap();
        let printed = p.to_string();
        let q = parse_pipeline(&printed).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert_eq!(q.to_string(), printed);
    }
}

#[test]
fn empty_pipeline_leaves_the_module_unchanged() {
    let m = conv_module("f32");
    let (out, stages) = run_pipeline(&m, &parse_pipeline("").unwrap(), true).unwrap();
    assert_eq!(print_module(&out), print_module(&m));
    assert_eq!(stages.len(), 1);
}

#[test]
fn conv_pipeline_matches_the_oracle_at_every_stage() {
    for (elem, policy) in [("i32", Policy::Exact), ("f32", Policy::RelTol(1e-6))] {
        let m = conv_module(elem);
        let (out, stages) = run_pipeline(&m, &parse_pipeline(CONV_PIPELINE).unwrap(), true).unwrap();
        assert_eq!(stages.len(), 6);
        let inputs = inputs_for(&m.functions[0]);
        let reports = check_stages(&stages, "k", &inputs, 1e-6).unwrap();
        assert_eq!(reports.len(), 5);
        for r in &reports {
            assert!(r.pass(), "stage {} ({}): {:?}", r.stage, r.label, r.outcome);
        }
        let want = oracle_eval("conv_1d_nwc_wcf", &inputs, &OracleParams::default()).unwrap();
        let got = tlc::interp::run(&out, "k", &inputs).unwrap();
        let r = tlc::interp::diff_check(&got[0], &want, policy);
        assert!(r.pass, "{r}");
        let metrics = report_metrics(&out);
        assert_eq!(metrics.op_counts.get("vector.contract"), None);
        assert!(metrics.op_counts.get("vector.fma").is_some_and(|&n| n > 0));
        assert_eq!(metrics.max_vector_rank, 1);
    }
}

#[test]
fn tile_sizes_must_match_the_iterators() {
    let e = run_pipeline(&conv_module("f32"), &parse_pipeline("tile{sizes=[2,2]},vectorize").unwrap(), false).unwrap_err();
    assert!(e.to_string().contains("stage 0"), "{e}");
}

#[test]
fn metrics_count_allocations_and_copies() {
    let conflict = parse_module(CONFLICT).unwrap();
    let (m, _) = run_pipeline(&conflict, &parse_pipeline("bufferize").unwrap(), false).unwrap();
    let r = report_metrics(&m);
    assert_eq!((r.allocs, r.copies), (1, 1));

    let src = kernel("matmul", &[vec![8, 16], vec![16, 12]], &[8, 12], "f32", "")
        .replace("%0: tensor<8x16xf32>", "%0: tensor<8x16xf32> {bufferize = in}")
        .replace("%1: tensor<16x12xf32>", "%1: tensor<16x12xf32> {bufferize = in}")
        .replace("%2: tensor<8x12xf32>", "%2: tensor<8x12xf32> {bufferize = out}");
    let matmul = parse_module(&src).unwrap();
    let spec = parse_pipeline("tile{sizes=[4,4,8]},vectorize,bufferize").unwrap();
    let (m, _) = run_pipeline(&matmul, &spec, false).unwrap();
    let r = report_metrics(&m);
    assert_eq!((r.allocs, r.copies), (0, 0));
    assert_eq!(r.max_vector_rank, 2);

    let spec = parse_pipeline("tile{sizes=[4,4,8]},vectorize,bufferize,unroll-vector{op=contract, target=[2,4,4]},lower-vectors").unwrap();
    let (m, _) = run_pipeline(&matmul, &spec, false).unwrap();
    assert_eq!(report_metrics(&m).max_vector_rank, 1);
}

fn dw(n: i64, c: i64, h: i64, w: i64, kh: i64, kw: i64, s: [i64; 2], d: [i64; 2]) -> DepthwiseParams {
    DepthwiseParams { n, c, h, w, kh, kw, strides: s, dilations: d, elem_bytes: 4 }
}

#[test]
fn depthwise_volume_examples() {
    let r = estimate_depthwise_volume(&dw(1, 32, 1, 8, 1, 3, [1, 2], [1, 1]));
    assert_eq!(r.gcd_factor, 1);
    assert_eq!(r.elements, 896.into());
    assert_eq!(r.bytes, (4 * 896).into());
    assert_eq!(r.touched_inputs, 32 * 17);

    // gcd(2, 2) = 2 halves the input term: W_in = 7*2 + 2*2 + 1 = 19
    let r = estimate_depthwise_volume(&dw(1, 32, 1, 8, 1, 3, [1, 2], [1, 2]));
    assert_eq!(r.gcd_factor, 2);
    assert_eq!(r.elements, num_rational::Ratio::new(32 * 8 * 2 + 32 * 19 + 96 * 2, 2));
    // the even lattice 0, 2, .., 18 has 10 points; 19 / 2 = 9.5 is the approximation
    assert_eq!(r.touched_inputs, 32 * 10);
}
