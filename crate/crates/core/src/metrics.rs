//! Static module metrics and the depthwise-convolution data-volume estimate.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use num_rational::Ratio;

use crate::ir::Module;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metrics {
    pub op_counts: BTreeMap<String, usize>,
    pub allocs: usize,
    pub copies: usize,
    /// Highest vector rank produced or consumed by a compute or memory op.
    ///
    /// Aggregate plumbing (constants, insert/extract, strided slices, shape casts, region yields)
    /// only assembles rows and is not counted.
    pub max_vector_rank: usize,
}

const AGGREGATE_OPS: &[&str] = &[
    "arith.constant",
    "vector.insert",
    "vector.extract",
    "vector.insert_strided_slice",
    "vector.extract_strided_slice",
    "vector.shape_cast",
];

fn is_plumbing(name: &str) -> bool {
    AGGREGATE_OPS.contains(&name) || name.starts_with("scf.") || name.starts_with("func.")
}

pub fn report_metrics(m: &Module) -> Metrics {
    let mut out = Metrics::default();
    for f in &m.functions {
        for op in f.walk() {
            let d = f.op(op);
            *out.op_counts.entry(d.name.clone()).or_default() += 1;
            if is_plumbing(&d.name) {
                continue;
            }
            for &v in d.results.iter().chain(&d.operands) {
                let t = f.ty(v);
                if t.is_vector() {
                    out.max_vector_rank = out.max_vector_rank.max(t.rank());
                }
            }
        }
    }
    out.allocs = out.op_counts.get("memref.alloc").copied().unwrap_or(0);
    out.copies = out.op_counts.get("memref.copy").copied().unwrap_or(0);
    out
}

/// Depthwise convolution geometry; the 1-D case has `h = kh = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthwiseParams {
    pub n: i64,
    pub c: i64,
    pub h: i64,
    pub w: i64,
    pub kh: i64,
    pub kw: i64,
    /// (height, width)
    pub strides: [i64; 2],
    pub dilations: [i64; 2],
    pub elem_bytes: i64,
}

impl DepthwiseParams {
    /// Input extent feeding `out` outputs: `(out - 1) * stride + (k - 1) * dilation + 1`.
    pub fn input_extent(out: i64, k: i64, stride: i64, dilation: i64) -> i64 {
        (out - 1) * stride + (k - 1) * dilation + 1
    }
    pub fn h_in(&self) -> i64 {
        Self::input_extent(self.h, self.kh, self.strides[0], self.dilations[0])
    }
    pub fn w_in(&self) -> i64 {
        Self::input_extent(self.w, self.kw, self.strides[1], self.dilations[1])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeReport {
    /// Formula value in elements.
    pub elements: Ratio<i64>,
    /// Formula value in bytes.
    pub bytes: Ratio<i64>,
    /// Product of per-dim `gcd(stride, dilation)`.
    pub gcd_factor: i64,
    /// Elements of the input actually read, counted by enumerating every window.
    pub touched_inputs: i64,
    /// Output + kernel + touched inputs, in elements.
    pub enumerated_elements: i64,
}

/// Evaluates `N*C*(H*W + H_in*W_in / prod gcd(s_i, d_i)) + Kh*Kw*C` and an enumerated count.
pub fn estimate_depthwise_volume(p: &DepthwiseParams) -> VolumeReport {
    let g = p.strides[0].gcd(&p.dilations[0]) * p.strides[1].gcd(&p.dilations[1]);
    let (out, ker) = (p.n * p.c * p.h * p.w, p.kh * p.kw * p.c);
    let input = Ratio::new(p.n * p.c * p.h_in() * p.w_in(), g);
    let elements = Ratio::from_integer(out + ker) + input;
    let rows = touched(p.h, p.kh, p.strides[0], p.dilations[0]);
    let cols = touched(p.w, p.kw, p.strides[1], p.dilations[1]);
    let touched_inputs = p.n * p.c * rows * cols;
    VolumeReport {
        elements,
        bytes: elements * p.elem_bytes,
        gcd_factor: g,
        touched_inputs,
        enumerated_elements: out + ker + touched_inputs,
    }
}

fn touched(out: i64, k: i64, stride: i64, dilation: i64) -> i64 {
    let mut seen = BTreeSet::new();
    for o in 0..out {
        for j in 0..k {
            seen.insert(o * stride + j * dilation);
        }
    }
    seen.len() as i64
}
