//! Direct nested-loop evaluation of named kernels from their index notation.
//!
//! Independent of the IR: floats accumulate in `f64` and are rounded once at the end; integers
//! accumulate with wrapping `i64` arithmetic.

use super::value::{Dense, Scalar};
use crate::error::{Error, Result};
use crate::ir::ElemType;

#[derive(Debug, Clone, Default)]
pub struct OracleParams {
    pub strides: Vec<i64>,
    pub dilations: Vec<i64>,
    /// Fill value or pad value.
    pub value: f64,
    pub low: Vec<i64>,
    pub high: Vec<i64>,
    /// Output shape for `fill` when no init is given.
    pub shape: Vec<i64>,
}

/// Accumulator in the oracle's wide arithmetic.
#[derive(Clone, Copy)]
enum Acc {
    F(f64),
    I(i64),
}

impl Acc {
    fn of(s: Scalar) -> Acc {
        match s {
            Scalar::F(x) => Acc::F(x),
            Scalar::I(x) => Acc::I(x),
        }
    }
    fn mul_add(self, a: Scalar, b: Scalar) -> Acc {
        match self {
            Acc::F(x) => Acc::F(x + a.as_f64() * b.as_f64()),
            Acc::I(x) => Acc::I(x.wrapping_add(a.as_i64().wrapping_mul(b.as_i64()))),
        }
    }
    fn add(self, a: Scalar) -> Acc {
        match self {
            Acc::F(x) => Acc::F(x + a.as_f64()),
            Acc::I(x) => Acc::I(x.wrapping_add(a.as_i64())),
        }
    }
    fn finish(self, elem: ElemType) -> Scalar {
        match self {
            Acc::F(x) => Scalar::F(x).cast(elem),
            Acc::I(x) => Scalar::I(x).cast(elem),
        }
    }
}

fn param(v: &[i64], i: usize) -> i64 {
    v.get(i).copied().unwrap_or(1)
}

fn expect_rank(kind: &str, inputs: &[&Dense], ranks: &[usize]) -> Result<()> {
    if inputs.len() < ranks.len() || inputs.iter().zip(ranks).any(|(d, &r)| d.rank() != r) {
        return Err(Error::Runtime(format!("{kind}: expected operand ranks {ranks:?}")));
    }
    Ok(())
}

/// Evaluates kernel `kind` on `inputs`. An extra trailing input, when present, is the initial output.
pub fn oracle_eval(kind: &str, inputs: &[Dense], p: &OracleParams) -> Result<Dense> {
    let kind = kind.strip_prefix("linalg.").unwrap_or(kind);
    let ins: Vec<&Dense> = inputs.iter().collect();
    let init = |n_in: usize, elem: ElemType, shape: Vec<i64>| -> Result<Dense> {
        match inputs.get(n_in) {
            Some(o) if o.shape == shape => Ok(o.clone()),
            Some(o) => Err(Error::Runtime(format!("{kind}: init shape {:?} != expected {shape:?}", o.shape))),
            None => Ok(Dense::zeros(elem, shape)),
        }
    };
    match kind {
        "matmul" | "matmul_atb" | "matmul_abt" => {
            expect_rank(kind, &ins, &[2, 2])?;
            let (a, b) = (ins[0], ins[1]);
            let (m, k) = if kind == "matmul_atb" { (a.shape[1], a.shape[0]) } else { (a.shape[0], a.shape[1]) };
            let n = if kind == "matmul_abt" { b.shape[0] } else { b.shape[1] };
            let mut c = init(2, a.elem, vec![m, n])?;
            for i in 0..m {
                for j in 0..n {
                    let mut acc = Acc::of(c.get(&[i, j]));
                    for kk in 0..k {
                        let x = if kind == "matmul_atb" { a.get(&[kk, i]) } else { a.get(&[i, kk]) };
                        let y = if kind == "matmul_abt" { b.get(&[j, kk]) } else { b.get(&[kk, j]) };
                        acc = acc.mul_add(x, y);
                    }
                    c.set(&[i, j], acc.finish(c.elem));
                }
            }
            Ok(c)
        }
        "conv_1d_nwc_wcf" => {
            expect_rank(kind, &ins, &[3, 3])?;
            let (inp, ker) = (ins[0], ins[1]);
            let (s, d) = (param(&p.strides, 0), param(&p.dilations, 0));
            let (n, wi, c) = (inp.shape[0], inp.shape[1], inp.shape[2]);
            let (kw, f) = (ker.shape[0], ker.shape[2]);
            let w = (wi - (kw - 1) * d - 1) / s + 1;
            let mut o = init(2, inp.elem, vec![n, w, f])?;
            for b in 0..n {
                for x in 0..o.shape[1] {
                    for ff in 0..f {
                        let mut acc = Acc::of(o.get(&[b, x, ff]));
                        for k in 0..kw {
                            for cc in 0..c {
                                acc = acc.mul_add(inp.get(&[b, x * s + k * d, cc]), ker.get(&[k, cc, ff]));
                            }
                        }
                        o.set(&[b, x, ff], acc.finish(o.elem));
                    }
                }
            }
            Ok(o)
        }
        "conv_2d_nhwc_hwcf" => {
            expect_rank(kind, &ins, &[4, 4])?;
            let (inp, ker) = (ins[0], ins[1]);
            let (sh, sw) = (param(&p.strides, 0), param(&p.strides, 1));
            let (dh, dw) = (param(&p.dilations, 0), param(&p.dilations, 1));
            let (n, hi, wi, c) = (inp.shape[0], inp.shape[1], inp.shape[2], inp.shape[3]);
            let (kh, kw, f) = (ker.shape[0], ker.shape[1], ker.shape[3]);
            let h = (hi - (kh - 1) * dh - 1) / sh + 1;
            let w = (wi - (kw - 1) * dw - 1) / sw + 1;
            let mut o = init(2, inp.elem, vec![n, h, w, f])?;
            let (h, w) = (o.shape[1], o.shape[2]);
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        for ff in 0..f {
                            let mut acc = Acc::of(o.get(&[b, y, x, ff]));
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    for cc in 0..c {
                                        let i = inp.get(&[b, y * sh + ky * dh, x * sw + kx * dw, cc]);
                                        acc = acc.mul_add(i, ker.get(&[ky, kx, cc, ff]));
                                    }
                                }
                            }
                            o.set(&[b, y, x, ff], acc.finish(o.elem));
                        }
                    }
                }
            }
            Ok(o)
        }
        "depthwise_conv_1d_nwc_wc" => {
            expect_rank(kind, &ins, &[3, 2])?;
            let (inp, ker) = (ins[0], ins[1]);
            let (s, d) = (param(&p.strides, 0), param(&p.dilations, 0));
            let (n, wi, c) = (inp.shape[0], inp.shape[1], inp.shape[2]);
            let kw = ker.shape[0];
            let w = (wi - (kw - 1) * d - 1) / s + 1;
            let mut o = init(2, inp.elem, vec![n, w, c])?;
            for b in 0..n {
                for x in 0..o.shape[1] {
                    for cc in 0..c {
                        let mut acc = Acc::of(o.get(&[b, x, cc]));
                        for k in 0..kw {
                            acc = acc.mul_add(inp.get(&[b, x * s + k * d, cc]), ker.get(&[k, cc]));
                        }
                        o.set(&[b, x, cc], acc.finish(o.elem));
                    }
                }
            }
            Ok(o)
        }
        "depthwise_conv_2d_nhwc_hwc" => {
            expect_rank(kind, &ins, &[4, 3])?;
            let (inp, ker) = (ins[0], ins[1]);
            let (sh, sw) = (param(&p.strides, 0), param(&p.strides, 1));
            let (dh, dw) = (param(&p.dilations, 0), param(&p.dilations, 1));
            let (n, hi, wi, c) = (inp.shape[0], inp.shape[1], inp.shape[2], inp.shape[3]);
            let (kh, kw) = (ker.shape[0], ker.shape[1]);
            let h = (hi - (kh - 1) * dh - 1) / sh + 1;
            let w = (wi - (kw - 1) * dw - 1) / sw + 1;
            let mut o = init(2, inp.elem, vec![n, h, w, c])?;
            let (h, w) = (o.shape[1], o.shape[2]);
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        for cc in 0..c {
                            let mut acc = Acc::of(o.get(&[b, y, x, cc]));
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let i = inp.get(&[b, y * sh + ky * dh, x * sw + kx * dw, cc]);
                                    acc = acc.mul_add(i, ker.get(&[ky, kx, cc]));
                                }
                            }
                            o.set(&[b, y, x, cc], acc.finish(o.elem));
                        }
                    }
                }
            }
            Ok(o)
        }
        "copy_2d" | "transpose_2d" => {
            expect_rank(kind, &ins, &[2])?;
            let a = ins[0];
            let shape = if kind == "copy_2d" { a.shape.clone() } else { vec![a.shape[1], a.shape[0]] };
            let mut o = init(1, a.elem, shape)?;
            for i in 0..o.shape[0] {
                for j in 0..o.shape[1] {
                    let v = if kind == "copy_2d" { a.get(&[i, j]) } else { a.get(&[j, i]) };
                    o.set(&[i, j], v);
                }
            }
            Ok(o)
        }
        "row_reduction_2d" | "col_reduction_2d" => {
            expect_rank(kind, &ins, &[2])?;
            let a = ins[0];
            let rows = kind == "row_reduction_2d";
            let len = if rows { a.shape[0] } else { a.shape[1] };
            let mut o = init(1, a.elem, vec![len])?;
            for i in 0..len {
                let mut acc = Acc::of(o.get(&[i]));
                let other = if rows { a.shape[1] } else { a.shape[0] };
                for j in 0..other {
                    acc = acc.add(if rows { a.get(&[i, j]) } else { a.get(&[j, i]) });
                }
                o.set(&[i], acc.finish(o.elem));
            }
            Ok(o)
        }
        "fill" => {
            let (elem, shape) = match inputs.first() {
                Some(o) => (o.elem, o.shape.clone()),
                None => (ElemType::F32, p.shape.clone()),
            };
            Ok(Dense::splat(elem, shape, Scalar::F(p.value)))
        }
        "pad" => {
            let a = ins.first().ok_or_else(|| Error::Runtime("pad: missing source".into()))?;
            let r = a.rank();
            let low = if p.low.is_empty() { vec![0; r] } else { p.low.clone() };
            let high = if p.high.is_empty() { vec![0; r] } else { p.high.clone() };
            let shape: Vec<i64> = (0..r).map(|i| a.shape[i] + low[i] + high[i]).collect();
            let mut o = Dense::splat(a.elem, shape, Scalar::F(p.value));
            let mut idx = vec![0i64; r];
            for k in 0..a.len() {
                let mut rem = k as i64;
                for i in (0..r).rev() {
                    idx[i] = rem % a.shape[i] + low[i];
                    rem /= a.shape[i];
                }
                o.set(&idx, a.data[k]);
            }
            Ok(o)
        }
        _ => Err(Error::Runtime(format!("no oracle for kernel '{kind}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_and_matmul_atb() {
        let f = oracle_eval("fill", &[], &OracleParams { value: 5.0, shape: vec![2, 2], ..Default::default() }).unwrap();
        assert_eq!(f.to_f64(), vec![5.0; 4]);

        // A^T B with A = [[1,2],[3,4],[5,6]] (3x2), B = 3x1 of ones
        let a = Dense::from_i64(ElemType::I32, vec![3, 2], &[1, 2, 3, 4, 5, 6]);
        let b = Dense::from_i64(ElemType::I32, vec![3, 1], &[1, 1, 1]);
        let c = oracle_eval("matmul_atb", &[a, b], &OracleParams::default()).unwrap();
        assert_eq!(c.shape, vec![2, 1]);
        assert_eq!(c.data, vec![Scalar::I(9), Scalar::I(12)]);
    }

    #[test]
    fn depthwise_stride_two_by_hand() {
        // W_in = 4, Kw = 2, stride 2: out[x] = in[2x] * k0 + in[2x+1] * k1
        let i = Dense::from_i64(ElemType::I32, vec![1, 4, 1], &[1, 2, 3, 4]);
        let k = Dense::from_i64(ElemType::I32, vec![2, 1], &[10, 1]);
        let p = OracleParams { strides: vec![2], dilations: vec![1], ..Default::default() };
        let o = oracle_eval("depthwise_conv_1d_nwc_wc", &[i, k], &p).unwrap();
        assert_eq!(o.data, vec![Scalar::I(12), Scalar::I(34)]);
    }
}
