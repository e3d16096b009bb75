//! Static op registry and typed views over common operations.

use super::affine::IndexingMap;
use super::attr::Attr;
use super::builder::{attrs, const_int, Builder};
use super::func::{BlockId, Function, OpId, ValueId};
use super::types::Type;

pub const ELEMENTWISE_BINARY: &[&str] = &[
    "arith.addf", "arith.subf", "arith.mulf", "arith.divf", "arith.maxf", "arith.minf", "arith.addi",
    "arith.subi", "arith.muli", "arith.divsi", "arith.remsi", "arith.maxsi", "arith.minsi", "arith.andi",
    "arith.ori",
];

pub const NAMED_STRUCTURED: &[&str] = &[
    "linalg.matmul",
    "linalg.matmul_atb",
    "linalg.matmul_abt",
    "linalg.conv_1d_nwc_wcf",
    "linalg.conv_2d_nhwc_hwcf",
    "linalg.depthwise_conv_1d_nwc_wc",
    "linalg.depthwise_conv_2d_nhwc_hwc",
    "linalg.copy_2d",
    "linalg.transpose_2d",
    "linalg.row_reduction_2d",
    "linalg.col_reduction_2d",
    "linalg.fill",
];

const OTHER_OPS: &[&str] = &[
    "func.return",
    "arith.constant",
    "arith.cmpi",
    "arith.cmpf",
    "arith.select",
    "tc.min",
    "scf.for",
    "scf.if",
    "scf.yield",
    "linalg.generic",
    "linalg.yield",
    "tensor.empty",
    "tensor.extract_slice",
    "tensor.insert_slice",
    "tensor.extract",
    "tensor.insert",
    "tensor.pad",
    "tensor.cast",
    "tensor.dim",
    "vector.transfer_read",
    "vector.transfer_write",
    "vector.contract",
    "vector.multi_reduction",
    "vector.reduction",
    "vector.transpose",
    "vector.broadcast",
    "vector.fma",
    "vector.outerproduct",
    "vector.extract_strided_slice",
    "vector.insert_strided_slice",
    "vector.extract",
    "vector.insert",
    "vector.shape_cast",
    "vector.shuffle",
    "vector.load",
    "vector.store",
    "memref.alloc",
    "memref.alloca",
    "memref.dealloc",
    "memref.copy",
    "memref.load",
    "memref.store",
    "memref.subview",
    "memref.cast",
    "memref.dim",
];

pub fn is_registered(name: &str) -> bool {
    ELEMENTWISE_BINARY.contains(&name) || NAMED_STRUCTURED.contains(&name) || OTHER_OPS.contains(&name)
}

pub fn is_structured(name: &str) -> bool {
    name == "linalg.generic" || NAMED_STRUCTURED.contains(&name)
}

pub fn is_named_structured(name: &str) -> bool {
    NAMED_STRUCTURED.contains(&name)
}

pub fn is_terminator(name: &str) -> bool {
    matches!(name, "func.return" | "scf.yield" | "linalg.yield")
}

/// Ops without side effects whose unused results may be erased and which may be hoisted.
pub fn is_pure(f: &Function, op: OpId) -> bool {
    let d = f.op(op);
    let n = d.name.as_str();
    if d.results.is_empty() {
        return false;
    }
    if n.starts_with("arith.") || n == "tc.min" || n.starts_with("tensor.") {
        return true;
    }
    if is_structured(n) {
        return true;
    }
    match n {
        "vector.transfer_read" => !f.ty(d.operands[0]).is_memref(),
        "vector.load" => false,
        "vector.transfer_write" => true,
        n if n.starts_with("vector.") => true,
        "memref.dim" | "memref.subview" | "memref.cast" => true,
        _ => false,
    }
}

/// View over `scf.for`: operands `[lb, ub, step, inits...]`, body args `[iv, iter_args...]`.
#[derive(Debug, Clone)]
pub struct ForView {
    pub op: OpId,
    pub lb: ValueId,
    pub ub: ValueId,
    pub step: ValueId,
    pub inits: Vec<ValueId>,
    pub body: BlockId,
    pub iv: ValueId,
    pub iter_args: Vec<ValueId>,
    pub results: Vec<ValueId>,
}

impl ForView {
    pub fn new(f: &Function, op: OpId) -> ForView {
        let d = f.op(op);
        let body = d.regions[0];
        let args = &f.block(body).args;
        ForView {
            op,
            lb: d.operands[0],
            ub: d.operands[1],
            step: d.operands[2],
            inits: d.operands[3..].to_vec(),
            body,
            iv: args[0],
            iter_args: args[1..].to_vec(),
            results: d.results.clone(),
        }
    }

    pub fn yield_op(&self, f: &Function) -> OpId {
        f.terminator(self.body).expect("loop body without terminator")
    }

    pub fn yielded(&self, f: &Function) -> Vec<ValueId> {
        f.op(self.yield_op(f)).operands.clone()
    }

    /// `(lb, ub, step)` when all constant.
    pub fn const_bounds(&self, f: &Function) -> Option<(i64, i64, i64)> {
        Some((const_int(f, self.lb)?, const_int(f, self.ub)?, const_int(f, self.step)?))
    }

    pub fn trip_count(&self, f: &Function) -> Option<i64> {
        let (lb, ub, step) = self.const_bounds(f)?;
        Some(if ub <= lb { 0 } else { (ub - lb + step - 1) / step })
    }
}

/// Creates an `scf.for` with an empty body block; caller fills it and adds the yield.
pub fn build_for(
    b: &mut Builder,
    lb: ValueId,
    ub: ValueId,
    step: ValueId,
    inits: Vec<ValueId>,
) -> ForView {
    let mut arg_types = vec![Type::index()];
    arg_types.extend(inits.iter().map(|&v| b.f.ty(v).clone()));
    let body = b.f.new_block(arg_types);
    let result_types = inits.iter().map(|&v| b.f.ty(v).clone()).collect();
    let mut operands = vec![lb, ub, step];
    operands.extend(inits);
    let op = b.create_with_regions("scf.for", operands, result_types, Default::default(), vec![body]);
    ForView::new(b.f, op)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeRef {
    Static(i64),
    Dynamic(ValueId),
}

impl SizeRef {
    pub fn as_static(self) -> Option<i64> {
        match self {
            SizeRef::Static(n) => Some(n),
            SizeRef::Dynamic(_) => None,
        }
    }
}

/// Splits sizes into the `static_sizes` attribute and dynamic operands.
pub fn encode_sizes(f: &Function, sizes: &[SizeRef]) -> (Vec<i64>, Vec<ValueId>) {
    let mut stat = Vec::new();
    let mut dynv = Vec::new();
    for s in sizes {
        match *s {
            SizeRef::Static(n) => stat.push(n),
            SizeRef::Dynamic(v) => match const_int(f, v) {
                Some(n) => stat.push(n),
                None => {
                    stat.push(-1);
                    dynv.push(v);
                }
            },
        }
    }
    (stat, dynv)
}

pub fn decode_sizes(static_sizes: &[i64], dynamic: &[ValueId]) -> Vec<SizeRef> {
    let mut it = dynamic.iter();
    static_sizes
        .iter()
        .map(|&s| if s < 0 { SizeRef::Dynamic(*it.next().expect("missing dynamic size")) } else { SizeRef::Static(s) })
        .collect()
}

/// Shared view of `tensor.extract_slice`, `memref.subview` and `tensor.insert_slice`.
#[derive(Debug, Clone)]
pub struct SliceView {
    pub source: ValueId,
    /// Destination for inserts; the sliced value for extracts.
    pub base: ValueId,
    pub offsets: Vec<ValueId>,
    pub sizes: Vec<SizeRef>,
    /// Rank of the small (sliced) side: extract result or insert source.
    pub small_rank: usize,
}

impl SliceView {
    pub fn new(f: &Function, op: OpId) -> SliceView {
        let d = f.op(op);
        let static_sizes = d.ints_attr("static_sizes").expect("slice without static_sizes").to_vec();
        let rank = static_sizes.len();
        let (source, base, rest) = if d.name == "tensor.insert_slice" {
            (d.operands[0], d.operands[1], &d.operands[2..])
        } else {
            (d.operands[0], d.operands[0], &d.operands[1..])
        };
        let offsets = rest[..rank].to_vec();
        let sizes = decode_sizes(&static_sizes, &rest[rank..]);
        let small_rank = if d.name == "tensor.insert_slice" {
            f.ty(d.operands[0]).rank()
        } else {
            f.ty(d.results[0]).rank()
        };
        SliceView { source, base, offsets, sizes, small_rank }
    }

    /// Number of leading unit dims dropped between the full slice shape and the small side.
    pub fn dropped_dims(&self) -> usize {
        self.sizes.len() - self.small_rank
    }
}

pub fn slice_attrs(static_sizes: Vec<i64>) -> super::attr::AttrMap {
    attrs(&[("static_sizes", Attr::Ints(static_sizes))])
}

/// Result type of slicing `src_ty` with `sizes`, dropping `drop` leading dims.
pub fn sliced_type(src_ty: &Type, sizes: &[SizeRef], drop: usize) -> Type {
    use super::types::Dim;
    let dims: Vec<Dim> = sizes[drop..]
        .iter()
        .map(|s| match s {
            SizeRef::Static(n) => Dim::Static(*n),
            SizeRef::Dynamic(_) => Dim::Dynamic,
        })
        .collect();
    Type::tensor(dims, src_ty.elem())
}

pub fn build_extract_slice(
    b: &mut Builder,
    source: ValueId,
    offsets: Vec<ValueId>,
    sizes: &[SizeRef],
    drop: usize,
) -> ValueId {
    let ty = sliced_type(b.f.ty(source), sizes, drop);
    let (stat, dynv) = encode_sizes(b.f, sizes);
    let ty = {
        // constants in dynamic positions become static dims
        let dims = stat[drop..]
            .iter()
            .map(|&s| if s < 0 { super::types::Dim::Dynamic } else { super::types::Dim::Static(s) })
            .collect();
        ty.with_dims(dims)
    };
    let mut operands = vec![source];
    operands.extend(offsets);
    operands.extend(dynv);
    b.value("tensor.extract_slice", operands, ty, slice_attrs(stat))
}

pub fn build_insert_slice(
    b: &mut Builder,
    source: ValueId,
    dest: ValueId,
    offsets: Vec<ValueId>,
    sizes: &[SizeRef],
) -> ValueId {
    let ty = b.f.ty(dest).clone();
    let (stat, dynv) = encode_sizes(b.f, sizes);
    let mut operands = vec![source, dest];
    operands.extend(offsets);
    operands.extend(dynv);
    b.value("tensor.insert_slice", operands, ty, slice_attrs(stat))
}

/// View of `vector.transfer_read` / `vector.transfer_write`.
#[derive(Debug, Clone)]
pub struct TransferView {
    pub is_read: bool,
    pub source: ValueId,
    pub indices: Vec<ValueId>,
    pub padding: Option<ValueId>,
    /// Written vector for writes.
    pub vector: Option<ValueId>,
    pub vector_type: Type,
    pub map: IndexingMap,
    pub in_bounds: Vec<bool>,
}

impl TransferView {
    pub fn new(f: &Function, op: OpId) -> TransferView {
        let d = f.op(op);
        let is_read = d.name == "vector.transfer_read";
        let map = d.attr("permutation_map").and_then(|a| a.as_maps()).expect("transfer without map")[0].clone();
        let in_bounds = d.ints_attr("in_bounds").expect("transfer without in_bounds").iter().map(|&x| x != 0).collect();
        if is_read {
            let source = d.operands[0];
            let rank = f.ty(source).rank();
            TransferView {
                is_read,
                source,
                indices: d.operands[1..1 + rank].to_vec(),
                padding: Some(d.operands[1 + rank]),
                vector: None,
                vector_type: f.ty(d.results[0]).clone(),
                map,
                in_bounds,
            }
        } else {
            let vector = d.operands[0];
            let source = d.operands[1];
            let rank = f.ty(source).rank();
            TransferView {
                is_read,
                source,
                indices: d.operands[2..2 + rank].to_vec(),
                padding: None,
                vector: Some(vector),
                vector_type: f.ty(vector).clone(),
                map,
                in_bounds,
            }
        }
    }
}

pub fn transfer_attrs(map: IndexingMap, in_bounds: &[bool]) -> super::attr::AttrMap {
    attrs(&[
        ("permutation_map", Attr::Maps(vec![map])),
        ("in_bounds", Attr::Ints(in_bounds.iter().map(|&b| b as i64).collect())),
    ])
}

pub fn build_transfer_read(
    b: &mut Builder,
    source: ValueId,
    indices: Vec<ValueId>,
    padding: ValueId,
    vector_ty: Type,
    map: IndexingMap,
    in_bounds: &[bool],
) -> ValueId {
    let mut operands = vec![source];
    operands.extend(indices);
    operands.push(padding);
    b.value("vector.transfer_read", operands, vector_ty, transfer_attrs(map, in_bounds))
}

/// Returns the new tensor for tensor destinations, `None` for memrefs.
pub fn build_transfer_write(
    b: &mut Builder,
    vector: ValueId,
    dest: ValueId,
    indices: Vec<ValueId>,
    map: IndexingMap,
    in_bounds: &[bool],
) -> Option<ValueId> {
    let mut operands = vec![vector, dest];
    operands.extend(indices);
    let dest_ty = b.f.ty(dest).clone();
    if dest_ty.is_tensor() {
        Some(b.value("vector.transfer_write", operands, dest_ty, transfer_attrs(map, in_bounds)))
    } else {
        b.create("vector.transfer_write", operands, vec![], transfer_attrs(map, in_bounds));
        None
    }
}

/// View of `tensor.pad`: operands `[source, low..., high...]`.
#[derive(Debug, Clone)]
pub struct PadView {
    pub source: ValueId,
    pub low: Vec<ValueId>,
    pub high: Vec<ValueId>,
    pub pad_value: Attr,
    pub nofold: bool,
}

impl PadView {
    pub fn new(f: &Function, op: OpId) -> PadView {
        let d = f.op(op);
        let rank = f.ty(d.operands[0]).rank();
        PadView {
            source: d.operands[0],
            low: d.operands[1..1 + rank].to_vec(),
            high: d.operands[1 + rank..1 + 2 * rank].to_vec(),
            pad_value: d.attr("pad_value").cloned().unwrap_or(Attr::Float(0.0)),
            nofold: d.bool_attr("nofold").unwrap_or(false),
        }
    }
}
