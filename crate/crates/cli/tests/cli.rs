use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const MATMUL: &str = "module {
  func @mm(%0: tensor<2x3xf32>, %1: tensor<3x4xf32>, %2: tensor<2x4xf32>) -> (tensor<2x4xf32>) {
    %3 = linalg.matmul(%0, %1, %2) : (tensor<2x3xf32>, tensor<3x4xf32>, tensor<2x4xf32>) -> tensor<2x4xf32>
    func.return(%3) : (tensor<2x4xf32>) -> ()
  }
}
";

const CONV: &str = "module {
  func @conv(%0: tensor<1x10x4xi32>, %1: tensor<3x4x8xi32>, %2: tensor<1x8x8xi32>) -> (tensor<1x8x8xi32>) {
    %3 = linalg.conv_1d_nwc_wcf(%0, %1, %2) : (tensor<1x10x4xi32>, tensor<3x4x8xi32>, tensor<1x8x8xi32>) -> tensor<1x8x8xi32>
    func.return(%3) : (tensor<1x8x8xi32>) -> ()
  }
}
";

const CONFLICT: &str = "module {
  func @k(%0: tensor<4xf32>, %1: f32) -> (tensor<4xf32>, f32) {
    %2 = arith.constant() {value = 0} : () -> index
    %3 = tensor.insert(%1, %0, %2) : (f32, tensor<4xf32>, index) -> tensor<4xf32>
    %4 = tensor.extract(%0, %2) : (tensor<4xf32>, index) -> f32
    func.return(%3, %4) : (tensor<4xf32>, f32) -> ()
  }
}
";

fn tlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlc")).args(args).output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn ones(dir: &TempDir, name: &str, ty: &str, n: usize) -> String {
    write(dir, name, &serde_json::json!({ "type": ty, "data": vec![1.0; n] }).to_string())
}

#[test]
fn run_matmul_of_ones() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "mm.tlc", MATMUL);
    let a = ones(&d, "a.json", "tensor<2x3xf32>", 6);
    let b = ones(&d, "b.json", "tensor<3x4xf32>", 12);
    let c = write(&d, "c.json", r#"{"type": "tensor<2x4xf32>", "data": [0,0,0,0,0,0,0,0]}"#);
    let inputs = format!("{a},{b},{c}");
    for pipeline in ["", "tile{sizes=[1,2,0]},vectorize,bufferize,lower-vectors"] {
        let v = stdout_json(&tlc(&["run", &m, "--pipeline", pipeline, "--inputs", &inputs]));
        assert_eq!(v[0]["type"], "tensor<2x4xf32>");
        assert_eq!(v[0]["data"], serde_json::json!(vec![3.0; 8]));
    }
    let v = stdout_json(&tlc(&["run", &m, "--inputs", &inputs, "--trace", "--pipeline", "bufferize"]));
    assert_eq!(v["trace"]["oob_reads"], 0);
    // one write per reduction step: 2 * 4 * 3
    assert_eq!(v["trace"]["writes"], 24);
}

#[test]
fn bad_inputs_are_reported() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "mm.tlc", MATMUL);
    let a = write(&d, "a.json", r#"{"type": "tensor<2x3xf32>", "data": [1, 2]}"#);
    let o = tlc(&["run", &m, "--inputs", &format!("{a},{a},{a}")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("holds 6 elements"));
    let o = tlc(&["run", &m, "--inputs", &a]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("takes 3 arguments"));
}

#[test]
fn opt_output_reparses_and_checkpoints_print_every_stage() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "mm.tlc", MATMUL);
    let o = tlc(&["opt", &m, "--pipeline", "tile{sizes=[1,2,0]},vectorize"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("vector.contract"));
    let again = write(&d, "again.tlc", &text);
    let o2 = tlc(&["opt", &again]);
    assert_eq!(String::from_utf8(o2.stdout).unwrap(), text);

    let o = tlc(&["opt", &m, "--checkpoints", "--pipeline", "tile{sizes=[1,2,0]},vectorize,bufferize"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("// stage ").count(), 4);
}

#[test]
fn check_reports_every_stage() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "conv.tlc", CONV);
    let pipeline = "tile{sizes=[1,8,32,1,8]},pad{hoist=[3,0,0]},vectorize,bufferize,lower-vectors{contraction=outerproduct}";
    for order in ["forward", "reverse"] {
        let o = tlc(&["check", &m, "--pipeline", pipeline, "--order", order]);
        let v = stdout_json(&o);
        assert_eq!(v["pass"], true);
        assert_eq!(v["stages"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn pipeline_errors_exit_with_status_2() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "conv.tlc", CONV);
    let o = tlc(&["opt", &m, "--pipeline", "frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("valid passes"));
    let o = tlc(&["check", &m, "--pipeline", "tile{sizes=[2,2]}"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage 0"));
    assert!(!Path::new(&m).with_extension("out").exists());
}

#[test]
fn metrics_of_the_conflict_program() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "conflict.tlc", CONFLICT);
    let v = stdout_json(&tlc(&["metrics", &m, "--pipeline", "bufferize"]));
    assert_eq!((v["allocs"].as_u64(), v["copies"].as_u64()), (Some(1), Some(1)));
    let v = stdout_json(&tlc(&["metrics", &m]));
    assert_eq!(v["copies"], 0);
    assert_eq!(v["op_counts"]["tensor.insert"], 1);
}

#[test]
fn depthwise_volume() {
    let v = stdout_json(&tlc(&["volume", "--c", "32", "--w", "8", "--kw", "3", "--strides", "1,2"]));
    assert_eq!(v["elements"], "896");
    assert_eq!(v["bytes"], "3584");
    assert_eq!(v["w_in"], 17);
    // W_in = 7*2 + 2*2 + 1 = 19; 8 + 19/2 + 3 = 41/2, while only 10 inputs are touched
    let v = stdout_json(&tlc(&["volume", "--c", "1", "--w", "8", "--kw", "3", "--strides", "2", "--dilations", "2"]));
    assert_eq!(v["gcd_factor"], 2);
    assert_eq!(v["elements"], "41/2");
    assert_eq!(v["touched_inputs"], 10);
    assert_eq!(v["enumerated_elements"], 21);
    assert_eq!(tlc(&["volume", "--c", "0", "--w", "8", "--kw", "3"]).status.code(), Some(2));
}
