mod common;

use common::{kernel, ramp};
use proptest::prelude::*;
use tlc::interp::{diff_check, oracle_eval, run, run_traced, Dense, OracleParams, Policy, Scalar};
use tlc::ir::{parse_module, ElemType};

#[test]
fn matmul_of_ones_sums_reduction_extent() {
    let m = parse_module(&kernel("matmul", &[vec![2, 3], vec![3, 4]], &[2, 4], "f32", "")).unwrap();
    let ones = |s: Vec<i64>| Dense::splat(ElemType::F32, s, Scalar::F(1.0));
    let out = run(&m, "k", &[ones(vec![2, 3]), ones(vec![3, 4]), Dense::zeros(ElemType::F32, vec![2, 4])]).unwrap();
    assert_eq!(out[0].to_f64(), vec![3.0; 8]);
}

#[test]
fn conv_1d_is_a_windowed_sum() {
    let m = parse_module(&kernel("conv_1d_nwc_wcf", &[vec![1, 6, 1], vec![3, 1, 1]], &[1, 4, 1], "i32", "")).unwrap();
    let i = Dense::from_i64(ElemType::I32, vec![1, 6, 1], &[1, 2, 4, 8, 16, 32]);
    let k = Dense::from_i64(ElemType::I32, vec![3, 1, 1], &[1, 1, 1]);
    let out = run(&m, "k", &[i, k, Dense::zeros(ElemType::I32, vec![1, 4, 1])]).unwrap();
    assert_eq!(out[0].data, [7, 14, 28, 56].map(Scalar::I).to_vec());
}

#[test]
fn fill_writes_constant() {
    let src = "module {
  func @k(%0: tensor<2x3xf32>) -> (tensor<2x3xf32>) {
    %1 = linalg.fill(%0) {value = 5.0} : (tensor<2x3xf32>) -> tensor<2x3xf32>
    func.return(%1) : (tensor<2x3xf32>) -> ()
  }
}
";
    let m = parse_module(src).unwrap();
    let out = run(&m, "k", &[Dense::zeros(ElemType::F32, vec![2, 3])]).unwrap();
    assert_eq!(out[0].to_f64(), vec![5.0; 6]);
}

#[test]
fn trace_visits_every_point_in_lexicographic_order() {
    let m = parse_module(&kernel("matmul", &[vec![2, 2], vec![2, 3]], &[2, 3], "f32", "")).unwrap();
    let z = |s: Vec<i64>| Dense::zeros(ElemType::F32, s);
    let (_, t) = run_traced(&m, "k", &[z(vec![2, 2]), z(vec![2, 3]), z(vec![2, 3])]).unwrap();
    assert_eq!(t.visits.len(), 12);
    assert!(t.visits.windows(2).all(|w| w[0].point < w[1].point));
    assert_eq!((t.oob_reads, t.oob_writes), (0, 0));
}

#[test]
fn wrong_input_shape_is_a_runtime_error() {
    let m = parse_module(&kernel("copy_2d", &[vec![2, 2]], &[2, 2], "f32", "")).unwrap();
    let z = |s: Vec<i64>| Dense::zeros(ElemType::F32, s);
    assert!(run(&m, "k", &[z(vec![3, 2]), z(vec![2, 2])]).is_err());
}

/// `(kind, input shapes, output shape, attrs, oracle params)` for small random sizes.
fn case(kind: usize, a: i64, b: i64, c: i64, s: i64) -> (&'static str, Vec<Vec<i64>>, Vec<i64>, String, OracleParams) {
    let sp = |v: Vec<i64>| OracleParams { strides: v.clone(), dilations: vec![1; v.len()], ..Default::default() };
    let attrs = |v: &[i64]| {
        let d: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        let ones = vec!["1"; v.len()].join(", ");
        format!(" {{dilations = [{ones}], strides = [{}]}}", d.join(", "))
    };
    match kind {
        0 => ("matmul", vec![vec![a, c], vec![c, b]], vec![a, b], String::new(), OracleParams::default()),
        1 => ("matmul_atb", vec![vec![c, a], vec![c, b]], vec![a, b], String::new(), OracleParams::default()),
        2 => ("matmul_abt", vec![vec![a, c], vec![b, c]], vec![a, b], String::new(), OracleParams::default()),
        3 => {
            let (w, kw) = (a + 1, 2);
            let wi = (w - 1) * s + kw;
            ("conv_1d_nwc_wcf", vec![vec![1, wi, c], vec![kw, c, b]], vec![1, w, b], attrs(&[s]), sp(vec![s]))
        }
        4 => {
            let (h, w) = (a, b);
            let (hi, wi) = ((h - 1) * s + 2, (w - 1) * s + 3);
            let out = vec![1, h, w, c];
            ("depthwise_conv_2d_nhwc_hwc", vec![vec![1, hi, wi, c], vec![2, 3, c]], out, attrs(&[s, s]), sp(vec![s, s]))
        }
        5 => {
            let (h, w) = (a, b);
            let (hi, wi) = ((h - 1) * s + 2, (w - 1) * s + 2);
            ("conv_2d_nhwc_hwcf", vec![vec![1, hi, wi, c], vec![2, 2, c, 2]], vec![1, h, w, 2], attrs(&[s, s]), sp(vec![s, s]))
        }
        6 => ("transpose_2d", vec![vec![a, b]], vec![b, a], String::new(), OracleParams::default()),
        7 => ("row_reduction_2d", vec![vec![a, b]], vec![a], String::new(), OracleParams::default()),
        _ => ("col_reduction_2d", vec![vec![a, b]], vec![b], String::new(), OracleParams::default()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn named_ops_agree_with_oracle(kind in 0usize..9, a in 1i64..5, b in 1i64..5, c in 1i64..4, s in 1i64..3, float in any::<bool>()) {
        let (name, ins, out, attrs, params) = case(kind, a, b, c, s);
        let (elem, es) = if float { (ElemType::F32, "f32") } else { (ElemType::I32, "i32") };
        let m = parse_module(&kernel(name, &ins, &out, es, &attrs)).unwrap();
        let mut inputs: Vec<Dense> = ins.iter().enumerate().map(|(i, s)| ramp(elem, s.clone(), i as i64)).collect();
        inputs.push(ramp(elem, out.clone(), 3));
        let got = run(&m, "k", &inputs).unwrap();
        let want = oracle_eval(name, &inputs, &params).unwrap();
        let policy = if float { Policy::RelTol(1e-6) } else { Policy::Exact };
        let r = diff_check(&got[0], &want, policy);
        prop_assert!(r.pass, "{name}: {r}");
    }
}
