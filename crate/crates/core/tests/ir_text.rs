use tlc::ir::{parse_module, print_module, verify_module};
use tlc::Error;

const MATMUL: &str = "module {
  func @matmul(%0: tensor<4x8xf32> {bufferize = in}, %1: tensor<8x16xf32> {bufferize = in}, %2: tensor<4x16xf32> {bufferize = out}) -> (tensor<4x16xf32>) {
    %3 = linalg.matmul(%0, %1, %2) : (tensor<4x8xf32>, tensor<8x16xf32>, tensor<4x16xf32>) -> tensor<4x16xf32>
    func.return(%3) : (tensor<4x16xf32>) -> ()
  }
}
";

const LOOP: &str = "module {
  func @acc(%0: tensor<8xf32>) -> (tensor<8xf32>) {
    %1 = arith.constant() {value = 0} : () -> index
    %2 = arith.constant() {value = 4} : () -> index
    %3 = arith.constant() {value = 1} : () -> index
    %4 = scf.for(%1, %2, %3, %0) ({
      ^bb(%5: index, %6: tensor<8xf32>):
      %7 = arith.addf(%6, %6) : (tensor<8xf32>, tensor<8xf32>) -> tensor<8xf32>
      scf.yield(%7) : (tensor<8xf32>) -> ()
    }) : (index, index, index, tensor<8xf32>) -> tensor<8xf32>
    func.return(%4) : (tensor<8xf32>) -> ()
  }
}
";

#[test]
fn empty_module_prints_canonically() {
    let m = parse_module("module {\n}\n").unwrap();
    assert_eq!(print_module(&m), "module {\n}\n");
}

#[test]
fn round_trip_is_byte_identical() {
    for src in [MATMUL, LOOP] {
        let m = parse_module(src).unwrap();
        assert!(verify_module(&m).is_empty(), "{:?}", verify_module(&m));
        let printed = print_module(&m);
        assert_eq!(printed, src);
        assert_eq!(print_module(&parse_module(&printed).unwrap()), printed);
    }
}

#[test]
fn named_op_expands_to_generic_structure() {
    let m = parse_module(MATMUL).unwrap();
    let f = &m.functions[0];
    let op = f.find_ops("linalg.matmul")[0];
    let maps = f.op(op).attr("indexing_maps").unwrap().as_maps().unwrap();
    let shown: Vec<String> = maps.iter().map(|m| m.to_string()).collect();
    assert_eq!(shown, ["(d0,d1,d2)->(d0,d2)", "(d0,d1,d2)->(d2,d1)", "(d0,d1,d2)->(d0,d1)"]);
    assert_eq!(f.op(op).str_attr("iterator_types"), Some("parallel,parallel,reduction"));
}

#[test]
fn source_names_are_renumbered() {
    let src = MATMUL.replace("%3", "%acc").replace("%0", "%lhs");
    let m = parse_module(&src).unwrap();
    assert_eq!(print_module(&m), MATMUL);
}

#[test]
fn use_before_definition_is_a_dominance_diagnostic() {
    let src = LOOP.replace("%7 = arith.addf(%6, %6)", "%7 = arith.addf(%6, %9)").replace(
        "      scf.yield(%7)",
        "      %9 = arith.addf(%6, %6) : (tensor<8xf32>, tensor<8xf32>) -> tensor<8xf32>\n      scf.yield(%7)",
    );
    let m = parse_module(&src).unwrap();
    let diags = verify_module(&m);
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert_eq!(diags[0].rule, "dominance");
}

#[test]
fn mismatched_yield_is_a_yield_type_diagnostic() {
    let src = LOOP.replace(
        "      scf.yield(%7) : (tensor<8xf32>) -> ()",
        "      %9 = arith.constant() {value = 1.0} : () -> f32\n      scf.yield(%9) : (f32) -> ()",
    );
    let m = parse_module(&src).unwrap();
    let diags = verify_module(&m);
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert_eq!(diags[0].rule, "yield-type");
}

fn parse_err(src: &str) -> (usize, usize, String) {
    match parse_module(src) {
        Err(Error::Parse { line, col, msg }) => (line, col, msg),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn unbalanced_braces_are_syntax_errors() {
    let src = LOOP.trim_end().trim_end_matches('}');
    let (_, _, msg) = parse_err(src);
    assert!(msg.contains("unbalanced"), "{msg}");
}

#[test]
fn unknown_op_reports_position() {
    let src = MATMUL.replace("linalg.matmul(", "linalg.frobnicate(");
    let (line, col, msg) = parse_err(&src);
    assert_eq!((line, col), (3, 10));
    assert!(msg.contains("unknown op"), "{msg}");
}

#[test]
fn operand_type_mismatch_is_rejected() {
    let src = MATMUL.replace("(tensor<4x8xf32>, tensor<8x16xf32>, tensor<4x16xf32>) -> tensor<4x16xf32>", "(tensor<4x9xf32>, tensor<8x16xf32>, tensor<4x16xf32>) -> tensor<4x16xf32>");
    let (_, _, msg) = parse_err(&src);
    assert!(msg.contains("type mismatch"), "{msg}");
}

#[test]
fn undefined_value_is_rejected() {
    let src = MATMUL.replace("func.return(%3)", "func.return(%42)");
    let (line, _, msg) = parse_err(&src);
    assert_eq!(line, 4);
    assert!(msg.contains("%42"), "{msg}");
}

#[test]
fn functions_print_in_insertion_order() {
    let two = MATMUL.replace("}\n}\n", "}\n") + &LOOP["module {\n".len()..];
    let m = parse_module(&two).unwrap();
    let names: Vec<&str> = m.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["matmul", "acc"]);
    assert_eq!(print_module(&m), two);
    assert_eq!(print_module(&m), print_module(&m));
}

#[test]
fn memref_layout_types_round_trip() {
    let t = tlc::ir::parse_type("memref<4x?xf32, strides:[?,1], offset:?>").unwrap();
    assert_eq!(t.to_string(), "memref<4x?xf32, strides:[?,1], offset:?>");
    assert_eq!(tlc::ir::parse_type("vector<4x8xf32>").unwrap().to_string(), "vector<4x8xf32>");
    assert!(tlc::ir::parse_type("vector<?xf32>").is_err());
}
