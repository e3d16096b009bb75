//! Named kernels and their generic expansion.

use super::{encode_iterators, IteratorKind};
use crate::error::{Error, Result};
use crate::ir::builder::attrs;
use crate::ir::{Attr, AttrMap, Builder, Dim, Function, IndexExpr, IndexingMap, OpId, Type, ValueId};

use IteratorKind::{Parallel as P, Reduction as R};

/// Scalar payload of a named kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyKind {
    /// `out + in0 * in1`
    MulAdd,
    /// `out + in0`
    Add,
    /// `in0`
    Identity,
    /// The `value` attribute.
    Constant(Attr),
}

#[derive(Debug, Clone)]
pub struct NamedSpec {
    pub maps: Vec<IndexingMap>,
    pub iterators: Vec<IteratorKind>,
    pub n_inputs: usize,
    pub body: BodyKind,
}

fn d(i: usize) -> IndexExpr {
    IndexExpr::dim(i)
}

/// `out * stride + k * dilation`
fn conv_expr(out: usize, k: usize, stride: i64, dilation: i64) -> IndexExpr {
    IndexExpr::term(out, stride).add(&IndexExpr::term(k, dilation))
}

fn map(n: usize, rs: Vec<IndexExpr>) -> IndexingMap {
    IndexingMap::new(n, rs)
}

fn conv_params(a: &AttrMap, spatial: usize) -> Result<(Vec<i64>, Vec<i64>)> {
    let get = |k: &str| -> Result<Vec<i64>> {
        match a.get(k) {
            None => Ok(vec![1; spatial]),
            Some(v) => {
                let v = v.as_ints().ok_or_else(|| Error::Verify(format!("'{k}' must be an int array")))?;
                if v.len() != spatial || v.iter().any(|&x| x < 1) {
                    return Err(Error::Verify(format!("'{k}' needs {spatial} positive entries")));
                }
                Ok(v.to_vec())
            }
        }
    };
    Ok((get("strides")?, get("dilations")?))
}

/// Maps, iterators and body for a named op with the given operand ranks and attributes.
pub fn named_spec(name: &str, ranks: &[usize], a: &AttrMap) -> Result<NamedSpec> {
    let kind = name.strip_prefix("linalg.").unwrap_or(name);
    let is_conv = kind.contains("conv");
    if !is_conv && (a.contains_key("strides") || a.contains_key("dilations")) {
        return Err(Error::Verify(format!("strides/dilations given for non-convolution '{name}'")));
    }
    let (expect, spec): (Vec<usize>, NamedSpec) = match kind {
        "matmul" | "matmul_atb" | "matmul_abt" => {
            // (m, n, k)
            let lhs = if kind == "matmul_atb" { vec![d(2), d(0)] } else { vec![d(0), d(2)] };
            let rhs = if kind == "matmul_abt" { vec![d(1), d(2)] } else { vec![d(2), d(1)] };
            (
                vec![2, 2, 2],
                NamedSpec {
                    maps: vec![map(3, lhs), map(3, rhs), map(3, vec![d(0), d(1)])],
                    iterators: vec![P, P, R],
                    n_inputs: 2,
                    body: BodyKind::MulAdd,
                },
            )
        }
        "conv_1d_nwc_wcf" => {
            // (n, w, f, kw, c)
            let (s, dl) = conv_params(a, 1)?;
            (
                vec![3, 3, 3],
                NamedSpec {
                    maps: vec![
                        map(5, vec![d(0), conv_expr(1, 3, s[0], dl[0]), d(4)]),
                        map(5, vec![d(3), d(4), d(2)]),
                        map(5, vec![d(0), d(1), d(2)]),
                    ],
                    iterators: vec![P, P, P, R, R],
                    n_inputs: 2,
                    body: BodyKind::MulAdd,
                },
            )
        }
        "conv_2d_nhwc_hwcf" => {
            // (n, h, w, f, kh, kw, c)
            let (s, dl) = conv_params(a, 2)?;
            (
                vec![4, 4, 4],
                NamedSpec {
                    maps: vec![
                        map(7, vec![d(0), conv_expr(1, 4, s[0], dl[0]), conv_expr(2, 5, s[1], dl[1]), d(6)]),
                        map(7, vec![d(4), d(5), d(6), d(3)]),
                        map(7, vec![d(0), d(1), d(2), d(3)]),
                    ],
                    iterators: vec![P, P, P, P, R, R, R],
                    n_inputs: 2,
                    body: BodyKind::MulAdd,
                },
            )
        }
        "depthwise_conv_1d_nwc_wc" => {
            // (n, w, c, kw)
            let (s, dl) = conv_params(a, 1)?;
            (
                vec![3, 2, 3],
                NamedSpec {
                    maps: vec![
                        map(4, vec![d(0), conv_expr(1, 3, s[0], dl[0]), d(2)]),
                        map(4, vec![d(3), d(2)]),
                        map(4, vec![d(0), d(1), d(2)]),
                    ],
                    iterators: vec![P, P, P, R],
                    n_inputs: 2,
                    body: BodyKind::MulAdd,
                },
            )
        }
        "depthwise_conv_2d_nhwc_hwc" => {
            // (n, h, w, c, kh, kw)
            let (s, dl) = conv_params(a, 2)?;
            (
                vec![4, 3, 4],
                NamedSpec {
                    maps: vec![
                        map(6, vec![d(0), conv_expr(1, 4, s[0], dl[0]), conv_expr(2, 5, s[1], dl[1]), d(3)]),
                        map(6, vec![d(4), d(5), d(3)]),
                        map(6, vec![d(0), d(1), d(2), d(3)]),
                    ],
                    iterators: vec![P, P, P, P, R, R],
                    n_inputs: 2,
                    body: BodyKind::MulAdd,
                },
            )
        }
        "copy_2d" | "transpose_2d" => {
            let src = if kind == "copy_2d" { vec![d(0), d(1)] } else { vec![d(1), d(0)] };
            (
                vec![2, 2],
                NamedSpec {
                    maps: vec![map(2, src), IndexingMap::identity(2)],
                    iterators: vec![P, P],
                    n_inputs: 1,
                    body: BodyKind::Identity,
                },
            )
        }
        "row_reduction_2d" => (
            vec![2, 1],
            NamedSpec {
                maps: vec![IndexingMap::identity(2), map(2, vec![d(0)])],
                iterators: vec![P, R],
                n_inputs: 1,
                body: BodyKind::Add,
            },
        ),
        "col_reduction_2d" => (
            vec![2, 1],
            NamedSpec {
                maps: vec![IndexingMap::identity(2), map(2, vec![d(1)])],
                iterators: vec![R, P],
                n_inputs: 1,
                body: BodyKind::Add,
            },
        ),
        "fill" => {
            let r = *ranks.first().unwrap_or(&0);
            let v = a.get("value").cloned().unwrap_or(Attr::Float(0.0));
            (
                vec![r],
                NamedSpec {
                    maps: vec![IndexingMap::identity(r)],
                    iterators: vec![P; r],
                    n_inputs: 0,
                    body: BodyKind::Constant(v),
                },
            )
        }
        _ => return Err(Error::Verify(format!("unknown named op '{name}'"))),
    };
    if ranks != expect.as_slice() {
        return Err(Error::Verify(format!("'{name}' expects operand ranks {expect:?}, got {ranks:?}")));
    }
    Ok(spec)
}

fn build_body(b: &mut Builder, kind: &BodyKind, args: &[ValueId], out_elem: &Type) -> Vec<ValueId> {
    let float = out_elem.elem().is_float();
    let (add, mul) = if float { ("arith.addf", "arith.mulf") } else { ("arith.addi", "arith.muli") };
    match kind {
        BodyKind::MulAdd => {
            let p = b.value(mul, vec![args[0], args[1]], out_elem.clone(), AttrMap::new());
            vec![b.value(add, vec![args[2], p], out_elem.clone(), AttrMap::new())]
        }
        BodyKind::Add => vec![b.value(add, vec![args[1], args[0]], out_elem.clone(), AttrMap::new())],
        BodyKind::Identity => vec![args[0]],
        BodyKind::Constant(v) => {
            let v = match (v, float) {
                (Attr::Int(i), true) => Attr::Float(*i as f64),
                (Attr::Float(x), false) => Attr::Int(*x as i64),
                _ => v.clone(),
            };
            vec![b.constant_attr(v, out_elem.clone())]
        }
    }
}

/// Fills in the derived attributes and scalar body of a named op created with only operands and parameters.
pub fn materialize_named(f: &mut Function, op: OpId) -> Result<()> {
    let d = f.op(op);
    let ranks: Vec<usize> = d.operands.iter().map(|&v| f.ty(v).rank()).collect();
    let spec = named_spec(&d.name.clone(), &ranks, &d.attrs.clone())?;
    let operands = f.op(op).operands.clone();
    let elem_types: Vec<Type> = operands.iter().map(|&v| Type::scalar(f.ty(v).elem())).collect();
    let out_elem = elem_types.last().cloned().ok_or_else(|| Error::Verify("named op without operands".into()))?;
    let body = f.new_block(elem_types);
    let args = f.block(body).args.clone();
    let mut b = Builder::at_end(f, body);
    let ys = build_body(&mut b, &spec.body, &args, &out_elem);
    b.yield_("linalg.yield", ys);
    let o = f.op_mut(op);
    o.regions = vec![body];
    o.attrs.insert("indexing_maps".into(), Attr::Maps(spec.maps));
    o.attrs.insert("iterator_types".into(), encode_iterators(&spec.iterators));
    o.attrs.insert("n_inputs".into(), Attr::Int(spec.n_inputs as i64));
    f.block_mut(body).parent = Some(op);
    Ok(())
}

fn result_types(f: &Function, outputs: &[ValueId]) -> Vec<Type> {
    outputs.iter().map(|&v| f.ty(v).clone()).filter(|t| t.is_tensor()).collect()
}

/// Creates a named structured op (or `tensor.pad` for kind `pad`) at the builder's insertion point.
///
/// `pad` takes the source as its single input and `low`/`high` int arrays plus `pad_value` in `params`.
pub fn make_named_op(
    b: &mut Builder,
    kind: &str,
    inputs: &[ValueId],
    outputs: &[ValueId],
    params: AttrMap,
) -> Result<OpId> {
    let kind = kind.strip_prefix("linalg.").unwrap_or(kind);
    if kind == "pad" {
        return make_pad(b, inputs, params);
    }
    let name = format!("linalg.{kind}");
    if !crate::ir::ops::is_named_structured(&name) {
        return Err(Error::Verify(format!("unknown named op '{kind}'")));
    }
    let mut operands = inputs.to_vec();
    operands.extend_from_slice(outputs);
    let rt = result_types(b.f, outputs);
    let op = b.f.create_op(&name, operands, rt, params, Vec::new());
    if let Err(e) = materialize_named(b.f, op) {
        b.f.op_mut(op).erased = true;
        return Err(e);
    }
    b.insert(op);
    Ok(op)
}

fn make_pad(b: &mut Builder, inputs: &[ValueId], params: AttrMap) -> Result<OpId> {
    let [src] = inputs else {
        return Err(Error::Verify("pad takes exactly one input".into()));
    };
    let src_ty = b.f.ty(*src).clone();
    let rank = src_ty.rank();
    let low = params.get("low").and_then(|a| a.as_ints()).map(|v| v.to_vec()).unwrap_or(vec![0; rank]);
    let high = params.get("high").and_then(|a| a.as_ints()).map(|v| v.to_vec()).unwrap_or(vec![0; rank]);
    if low.len() != rank || high.len() != rank || low.iter().chain(&high).any(|&x| x < 0) {
        return Err(Error::Verify(format!("pad amounts must be {rank} non-negative entries")));
    }
    let dims: Vec<Dim> = src_ty
        .dims()
        .iter()
        .zip(low.iter().zip(&high))
        .map(|(dim, (l, h))| match dim {
            Dim::Static(n) => Dim::Static(n + l + h),
            Dim::Dynamic => Dim::Dynamic,
        })
        .collect();
    let mut operands = vec![*src];
    for &x in low.iter().chain(&high) {
        operands.push(b.const_index(x));
    }
    let pad_value = params.get("pad_value").cloned().unwrap_or(Attr::Float(0.0));
    let nofold = params.get("nofold").and_then(|a| a.as_bool()).unwrap_or(false);
    let a = attrs(&[("pad_value", pad_value), ("nofold", Attr::Bool(nofold))]);
    Ok(b.create("tensor.pad", operands, vec![src_ty.with_dims(dims)], a))
}

/// Creates a `linalg.generic`; `body` receives the scalar block arguments and returns the yielded values.
pub fn build_generic(
    b: &mut Builder,
    inputs: &[ValueId],
    outputs: &[ValueId],
    maps: Vec<IndexingMap>,
    iterators: &[IteratorKind],
    body: impl FnOnce(&mut Builder, &[ValueId]) -> Vec<ValueId>,
) -> OpId {
    let mut operands = inputs.to_vec();
    operands.extend_from_slice(outputs);
    let elem_types: Vec<Type> = operands.iter().map(|&v| Type::scalar(b.f.ty(v).elem())).collect();
    let blk = b.f.new_block(elem_types);
    let args = b.f.block(blk).args.clone();
    {
        let mut bb = Builder::at_end(b.f, blk);
        let ys = body(&mut bb, &args);
        bb.yield_("linalg.yield", ys);
    }
    let rt = result_types(b.f, outputs);
    let a = attrs(&[
        ("indexing_maps", Attr::Maps(maps)),
        ("iterator_types", encode_iterators(iterators)),
        ("n_inputs", Attr::Int(inputs.len() as i64)),
    ]);
    b.create_with_regions("linalg.generic", operands, rt, a, vec![blk])
}

/// Rewrites a named op into the equivalent `linalg.generic`.
pub fn generalize(f: &mut Function, op: OpId) {
    let o = f.op_mut(op);
    if crate::ir::ops::is_named_structured(&o.name) {
        o.name = "linalg.generic".into();
        for k in ["strides", "dilations", "value"] {
            o.attrs.remove(k);
        }
    }
}
