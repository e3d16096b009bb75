#![allow(dead_code)]

use tlc::interp::{diff_check, run_function, Dense, Policy};
use tlc::ir::{parse_module, ElemType, Function, Type};

pub fn ty(shape: &[i64], elem: &str) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("tensor<{}x{elem}>", dims.join("x"))
}

/// One-op module `@k` applying `kind` to inputs and an init output.
pub fn kernel(kind: &str, ins: &[Vec<i64>], out: &[i64], elem: &str, attrs: &str) -> String {
    let mut args = Vec::new();
    let mut tys = Vec::new();
    for (i, s) in ins.iter().chain(std::iter::once(&out.to_vec())).enumerate() {
        args.push(format!("%{i}: {}", ty(s, elem)));
        tys.push(ty(s, elem));
    }
    let operands: Vec<String> = (0..tys.len()).map(|i| format!("%{i}")).collect();
    let ot = ty(out, elem);
    let n = tys.len();
    format!(
        "module {{\n  func @k({}) -> ({ot}) {{\n    %{n} = linalg.{kind}({}){attrs} : ({}) -> {ot}\n    func.return(%{n}) : ({ot}) -> ()\n  }}\n}}\n",
        args.join(", "),
        operands.join(", "),
        tys.join(", ")
    )
}

pub fn ramp(elem: ElemType, shape: Vec<i64>, seed: i64) -> Dense {
    let n: i64 = shape.iter().product();
    let data: Vec<i64> = (0..n).map(|i| (i * 7 + seed) % 11 - 5).collect();
    Dense::from_i64(elem, shape, &data)
}

/// Deterministic inputs for every argument of `f`.
pub fn inputs_for(f: &Function) -> Vec<Dense> {
    f.args()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let t: &Type = f.ty(a);
            ramp(t.elem(), t.static_shape().expect("static argument"), i as i64)
        })
        .collect()
}

pub fn parse_fn(src: &str) -> Function {
    parse_module(src).unwrap().functions.remove(0)
}

/// Runs `before` and `after` on the same inputs and compares every result under `policy`.
pub fn assert_same(before: &Function, after: &Function, policy: Policy) {
    let inputs = inputs_for(before);
    let a = run_function(before, &inputs, None).unwrap();
    let b = run_function(after, &inputs, None).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        let r = diff_check(y, x, policy);
        assert!(r.pass, "{r}");
    }
}

/// An insert into `%0` followed by a read of the original `%0`.
pub const CONFLICT: &str = "module {
  func @k(%0: tensor<4xf32>, %1: f32) -> (tensor<4xf32>, f32) {
    %2 = arith.constant() {value = 0} : () -> index
    %3 = tensor.insert(%1, %0, %2) : (f32, tensor<4xf32>, index) -> tensor<4xf32>
    %4 = tensor.extract(%0, %2) : (tensor<4xf32>, index) -> f32
    func.return(%3, %4) : (tensor<4xf32>, f32) -> ()
  }
}
";

/// A named-kernel instance with consistent operand shapes and the iterator extents it was built from.
#[derive(Debug, Clone)]
pub struct KernelCase {
    pub kind: &'static str,
    pub ins: Vec<Vec<i64>>,
    pub out: Vec<i64>,
    pub attrs: String,
    pub extents: Vec<i64>,
}

impl KernelCase {
    pub fn source(&self, elem: &str) -> String {
        kernel(self.kind, &self.ins, &self.out, elem, &self.attrs)
    }
}

pub const KERNEL_KINDS: &[&str] = &[
    "matmul",
    "matmul_atb",
    "matmul_abt",
    "conv_1d_nwc_wcf",
    "conv_2d_nhwc_hwcf",
    "depthwise_conv_1d_nwc_wc",
    "depthwise_conv_2d_nhwc_hwc",
    "copy_2d",
    "transpose_2d",
    "row_reduction_2d",
    "col_reduction_2d",
    "fill",
];

/// Random instance of `kind` with every iterator extent in `1..=max_dim` and strides, dilations in {1, 2}.
/// Convolution inputs sometimes carry one unused trailing element per window dim.
pub fn random_case(kind: &'static str, rng: &mut impl rand::Rng, max_dim: i64) -> KernelCase {
    let mut d = || rng.gen_range(1..=max_dim);
    let mut e: Vec<i64> = (0..7).map(|_| d()).collect();
    let mut sd = || (rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(0..=1));
    let win = |out: i64, k: i64, (s, dl, slack): (i64, i64, i64)| (out - 1) * s + (k - 1) * dl + 1 + slack;
    let conv_attrs = |p: &[(i64, i64, i64)]| {
        let s: Vec<String> = p.iter().map(|x| x.0.to_string()).collect();
        let dl: Vec<String> = p.iter().map(|x| x.1.to_string()).collect();
        format!(" {{dilations = [{}], strides = [{}]}}", dl.join(", "), s.join(", "))
    };
    let (ins, out, attrs, n) = match kind {
        "matmul" | "matmul_atb" | "matmul_abt" => {
            let (m, n, k) = (e[0], e[1], e[2]);
            let a = if kind == "matmul_atb" { vec![k, m] } else { vec![m, k] };
            let b = if kind == "matmul_abt" { vec![n, k] } else { vec![k, n] };
            (vec![a, b], vec![m, n], String::new(), 3)
        }
        "conv_1d_nwc_wcf" => {
            let p = [sd()];
            let (n, w, f, kw, c) = (e[0], e[1], e[2], e[3], e[4]);
            (vec![vec![n, win(w, kw, p[0]), c], vec![kw, c, f]], vec![n, w, f], conv_attrs(&p), 5)
        }
        "conv_2d_nhwc_hwcf" => {
            let p = [sd(), sd()];
            let (n, h, w, f, kh, kw, c) = (e[0], e[1], e[2], e[3], e[4], e[5], e[6]);
            let i = vec![n, win(h, kh, p[0]), win(w, kw, p[1]), c];
            (vec![i, vec![kh, kw, c, f]], vec![n, h, w, f], conv_attrs(&p), 7)
        }
        "depthwise_conv_1d_nwc_wc" => {
            let p = [sd()];
            let (n, w, c, kw) = (e[0], e[1], e[2], e[3]);
            (vec![vec![n, win(w, kw, p[0]), c], vec![kw, c]], vec![n, w, c], conv_attrs(&p), 4)
        }
        "depthwise_conv_2d_nhwc_hwc" => {
            let p = [sd(), sd()];
            let (n, h, w, c, kh, kw) = (e[0], e[1], e[2], e[3], e[4], e[5]);
            let i = vec![n, win(h, kh, p[0]), win(w, kw, p[1]), c];
            (vec![i, vec![kh, kw, c]], vec![n, h, w, c], conv_attrs(&p), 6)
        }
        "copy_2d" => (vec![vec![e[0], e[1]]], vec![e[0], e[1]], String::new(), 2),
        "transpose_2d" => (vec![vec![e[1], e[0]]], vec![e[0], e[1]], String::new(), 2),
        "row_reduction_2d" => (vec![vec![e[0], e[1]]], vec![e[0]], String::new(), 2),
        "col_reduction_2d" => (vec![vec![e[0], e[1]]], vec![e[1]], String::new(), 2),
        "fill" => {
            let r = 1 + (e[6] % 3) as usize;
            (vec![], e[..r].to_vec(), String::new(), r)
        }
        other => panic!("unknown kernel {other}"),
    };
    e.truncate(n);
    KernelCase { kind, ins, out, attrs, extents: e }
}

/// Compares the derived iteration domain of the first structured op with a brute-force scan.
///
/// Every point of the box `[0, S_i]` (one past each derived extent) is tested against all operand
/// accesses; a point is a mismatch when "all accesses in bounds" disagrees with "inside the domain".
/// Access expressions have non-negative coefficients, so points beyond the box dominate a point on
/// its outer faces and cannot be in bounds either. Returns (derived extents, mismatches).
pub fn domain_mismatches(f: &Function) -> (Vec<i64>, usize) {
    use tlc::structured::domain::{derive_iteration_domain, for_each_point};
    use tlc::structured::StructuredView;
    let op = f.walk().into_iter().find(|&o| f.op(o).name.starts_with("linalg.")).unwrap();
    let sizes = derive_iteration_domain(f, op).unwrap().static_sizes().unwrap();
    let v = StructuredView::new(f, op);
    let shapes: Vec<Vec<i64>> = v.operands().iter().map(|&x| f.ty(x).static_shape().unwrap()).collect();
    for m in &v.maps {
        assert!(m.results.iter().all(|e| (0..sizes.len()).all(|d| e.coeff(d) >= 0)));
    }
    let boxed: Vec<i64> = sizes.iter().map(|s| s + 1).collect();
    let mut mismatches = 0;
    for_each_point(&boxed, |p| {
        let in_bounds = v.maps.iter().zip(&shapes).all(|(m, s)| m.apply(p).iter().zip(s).all(|(&i, &n)| 0 <= i && i < n));
        let inside = p.iter().zip(&sizes).all(|(&i, &n)| i < n);
        if in_bounds != inside {
            mismatches += 1;
        }
    });
    (sizes, mismatches)
}

/// `k(a, b, c) = write(read(a) + read(b), c)` on `vector<12xf32>`.
pub fn add12() -> Function {
    use tlc::ir::{verify_function, Builder};
    use tlc::transforms::vectorize::{read_full, write_full};
    let t = Type::static_tensor(&[12], ElemType::F32);
    let mut f = Function::new("k", vec![t.clone(), t.clone(), t.clone()], vec![t]);
    let a = f.args().to_vec();
    let entry = f.body;
    let mut b = Builder::at_end(&mut f, entry);
    let x = read_full(&mut b, a[0]);
    let y = read_full(&mut b, a[1]);
    let s = b.value("arith.addf", vec![x, y], Type::vector(&[12], ElemType::F32), Default::default());
    let w = write_full(&mut b, s, a[2]);
    b.yield_("func.return", vec![w]);
    assert!(verify_function(&f).is_empty());
    f
}
