//! Reference interpreter for every IR level: tensors, vectors and buffers.

use std::collections::HashMap;

use super::value::{num_elements, row_major_strides, BufView, Dense, RValue, Scalar};
use crate::error::{Error, Result};
use crate::ir::ops::{decode_sizes, SizeRef};
use crate::ir::{Attr, BlockId, Dim, ElemType, Function, IndexingMap, Module, OpId, Type, ValueId};
use crate::structured::domain::{domain_from_shapes, for_each_point};
use crate::structured::StructuredView;

/// Instrumentation hooks; all default to no-ops.
pub trait Observer {
    fn on_loop_enter(&mut self, _op: OpId) {}
    fn on_loop_iter(&mut self, _op: OpId, _iv: i64) {}
    fn on_loop_exit(&mut self, _op: OpId) {}
    /// One point of a structured op's iteration domain, in the op's local coordinates.
    fn on_point(&mut self, _op: OpId, _point: &[i64]) {}
    /// A load from or store to allocation `alloc` at linear element `offset`.
    fn on_mem(&mut self, _op: OpId, _alloc: usize, _offset: i64, _write: bool) {}
    /// Called before every op, terminators included, with operands available.
    fn before_op(&mut self, _interp: &Interp, _op: OpId) {}
    fn after_op(&mut self, _interp: &Interp, _op: OpId) {}
}

#[derive(Debug, Clone)]
pub struct Allocation {
    pub elem: ElemType,
    pub data: Vec<Scalar>,
    pub live: bool,
}

pub struct Interp<'a> {
    pub f: &'a Function,
    pub env: Vec<Option<RValue>>,
    pub mem: Vec<Allocation>,
    obs: Option<&'a mut dyn Observer>,
    domain_cache: HashMap<(OpId, Vec<Vec<i64>>), Vec<i64>>,
}

fn rt_err<T>(f: &Function, op: OpId, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Runtime(format!("op#{} '{}': {msg}", op.0, f.op(op).name)))
}

/// Runs `name` from `m` on dense inputs, returning the logical results as dense arrays.
pub fn run(m: &Module, name: &str, inputs: &[Dense]) -> Result<Vec<Dense>> {
    let f = m.function(name).ok_or_else(|| Error::Runtime(format!("no function @{name}")))?;
    run_function(f, inputs, None)
}

pub fn run_function<'a>(f: &'a Function, inputs: &[Dense], obs: Option<&'a mut dyn Observer>) -> Result<Vec<Dense>> {
    let mut it = Interp::new(f, obs);
    it.call(inputs)
}

fn shape_matches(ty: &Type, shape: &[i64]) -> bool {
    ty.rank() == shape.len() && ty.dims().iter().zip(shape).all(|(d, &n)| d.as_static().is_none_or(|s| s == n))
}

impl<'a> Interp<'a> {
    pub fn new(f: &'a Function, obs: Option<&'a mut dyn Observer>) -> Interp<'a> {
        Interp { f, env: vec![None; f.values.len()], mem: Vec::new(), obs, domain_cache: HashMap::new() }
    }

    pub fn value(&self, v: ValueId) -> Option<&RValue> {
        self.env.get(v.0 as usize).and_then(|x| x.as_ref())
    }

    fn get(&self, v: ValueId) -> &RValue {
        self.env[v.0 as usize].as_ref().unwrap_or_else(|| panic!("value {v} used before definition"))
    }

    fn set(&mut self, v: ValueId, r: RValue) {
        self.env[v.0 as usize] = Some(r);
    }

    fn idx(&self, v: ValueId) -> i64 {
        self.get(v).index()
    }

    pub fn allocate(&mut self, elem: ElemType, shape: &[i64]) -> BufView {
        let n = num_elements(shape);
        self.mem.push(Allocation { elem, data: vec![Scalar::zero(elem); n], live: true });
        BufView { alloc: self.mem.len() - 1, elem, offset: 0, shape: shape.to_vec(), strides: row_major_strides(shape) }
    }

    /// Reads a whole buffer view into a dense array.
    pub fn read_view(&self, b: &BufView) -> Dense {
        let mut out = Dense::zeros(b.elem, b.shape.clone());
        let data = &self.mem[b.alloc].data;
        let mut k = 0;
        for_each_point(&b.shape, |p| {
            out.data[k] = data[b.linear(p) as usize];
            k += 1;
        });
        out
    }

    fn call(&mut self, inputs: &[Dense]) -> Result<Vec<Dense>> {
        let f = self.f;
        let args = f.args().to_vec();
        if inputs.len() != args.len() {
            return Err(Error::Runtime(format!("@{} expects {} inputs, got {}", f.name, args.len(), inputs.len())));
        }
        for (i, (&a, d)) in args.iter().zip(inputs).enumerate() {
            let ty = f.ty(a).clone();
            if ty.elem() != d.elem {
                return Err(Error::Runtime(format!("input #{i}: element type {} does not match {ty}", d.elem)));
            }
            let v = match &ty {
                Type::Scalar(_) => {
                    if d.len() != 1 {
                        return Err(Error::Runtime(format!("input #{i}: expected a scalar")));
                    }
                    RValue::Scalar(d.data[0])
                }
                _ => {
                    if !shape_matches(&ty, &d.shape) {
                        return Err(Error::Runtime(format!("input #{i}: shape {:?} does not match {ty}", d.shape)));
                    }
                    if ty.is_memref() {
                        let b = self.allocate(d.elem, &d.shape);
                        self.mem[b.alloc].data = d.data.clone();
                        RValue::Buffer(b)
                    } else if ty.is_vector() {
                        RValue::Vector(d.clone())
                    } else {
                        RValue::Tensor(d.clone())
                    }
                }
            };
            self.set(a, v);
        }
        let returned = self.exec_block(f.body)?;
        let to_dense = |s: &Self, r: &RValue, ty: Option<&Type>| -> Dense {
            match r {
                RValue::Scalar(x) => {
                    let elem = if let Some(Type::Scalar(e)) = ty { *e } else { ElemType::F64 };
                    Dense { elem, shape: vec![], data: vec![*x] }
                }
                RValue::Tensor(d) | RValue::Vector(d) => d.clone(),
                RValue::Buffer(b) => s.read_view(b),
            }
        };
        let mut out = Vec::new();
        let mut it = returned.iter().zip(f.result_types.iter().map(Some).chain(std::iter::repeat(None)));
        match f.attrs.get("results").and_then(|a| a.as_ints()) {
            Some(ties) => {
                for &t in ties {
                    if t >= 0 {
                        out.push(to_dense(self, self.get(args[t as usize]), None));
                    } else {
                        let (r, ty) = it.next().ok_or_else(|| Error::Runtime("missing returned buffer".into()))?;
                        out.push(to_dense(self, r, ty));
                    }
                }
            }
            None => out = it.map(|(r, ty)| to_dense(self, r, ty)).collect(),
        }
        Ok(out)
    }

    /// Executes a block; returns the terminator's operand values.
    fn exec_block(&mut self, b: BlockId) -> Result<Vec<RValue>> {
        let ops = self.f.block(b).ops.clone();
        for op in ops {
            if let Some(o) = self.obs.take() {
                o.before_op(self, op);
                self.obs = Some(o);
            }
            let name = self.f.op(op).name.as_str();
            if matches!(name, "scf.yield" | "linalg.yield" | "func.return") {
                return Ok(self.f.op(op).operands.iter().map(|&v| self.get(v).clone()).collect());
            }
            self.exec_op(op)?;
            if let Some(o) = self.obs.take() {
                o.after_op(self, op);
                self.obs = Some(o);
            }
        }
        Ok(Vec::new())
    }

    fn result_shape(&self, ty: &Type, dyn_operands: &[ValueId]) -> Vec<i64> {
        let mut it = dyn_operands.iter();
        ty.dims()
            .iter()
            .map(|d| match d {
                Dim::Static(n) => *n,
                Dim::Dynamic => self.idx(*it.next().expect("missing dynamic size")),
            })
            .collect()
    }

    fn mem_read(&mut self, op: OpId, b: &BufView, idx: &[i64]) -> Result<Scalar> {
        if !b.in_bounds(idx) {
            return rt_err(self.f, op, format!("out-of-bounds read at {idx:?} of buffer shape {:?}", b.shape));
        }
        let l = b.linear(idx);
        let a = &self.mem[b.alloc];
        if !a.live {
            return rt_err(self.f, op, "read from deallocated buffer");
        }
        if l < 0 || l as usize >= a.data.len() {
            return rt_err(self.f, op, "view escapes its allocation");
        }
        let v = a.data[l as usize];
        if let Some(o) = self.obs.as_mut() {
            o.on_mem(op, b.alloc, l, false);
        }
        Ok(v)
    }

    fn mem_write(&mut self, op: OpId, b: &BufView, idx: &[i64], v: Scalar) -> Result<()> {
        if !b.in_bounds(idx) {
            return rt_err(self.f, op, format!("out-of-bounds write at {idx:?} of buffer shape {:?}", b.shape));
        }
        let l = b.linear(idx);
        let a = &mut self.mem[b.alloc];
        if !a.live {
            return rt_err(self.f, op, "write to deallocated buffer");
        }
        if l < 0 || l as usize >= a.data.len() {
            return rt_err(self.f, op, "view escapes its allocation");
        }
        a.data[l as usize] = v.cast(a.elem);
        if let Some(o) = self.obs.as_mut() {
            o.on_mem(op, b.alloc, l, true);
        }
        Ok(())
    }

    /// Element of a tensor, vector or buffer; `None` when out of bounds.
    fn read_any(&mut self, op: OpId, src: &RValue, idx: &[i64]) -> Result<Option<Scalar>> {
        match src {
            RValue::Tensor(d) | RValue::Vector(d) => Ok(d.in_bounds(idx).then(|| d.get(idx))),
            RValue::Buffer(b) => {
                if !b.in_bounds(idx) {
                    return Ok(None);
                }
                self.mem_read(op, b, idx).map(Some)
            }
            RValue::Scalar(_) => rt_err(self.f, op, "cannot index a scalar"),
        }
    }

    fn shape_of(&self, v: &RValue) -> Vec<i64> {
        match v {
            RValue::Tensor(d) | RValue::Vector(d) => d.shape.clone(),
            RValue::Buffer(b) => b.shape.clone(),
            RValue::Scalar(_) => vec![],
        }
    }

    fn exec_op(&mut self, op: OpId) -> Result<()> {
        let f = self.f;
        let d = f.op(op);
        let name = d.name.as_str();
        let ops = &d.operands;
        let res = &d.results;
        if crate::ir::ops::ELEMENTWISE_BINARY.contains(&name) {
            let a = self.get(ops[0]).clone();
            let b = self.get(ops[1]).clone();
            let elem = f.ty(res[0]).elem();
            let r = self.elementwise(op, &a, &b, |x, y| binary(name, x, y, elem))?;
            self.set(res[0], r);
            return Ok(());
        }
        if crate::ir::ops::is_structured(name) {
            return self.exec_structured(op);
        }
        match name {
            "arith.constant" => {
                let ty = f.ty(res[0]).clone();
                let a = d.attr("value").unwrap();
                let s = Scalar::from_attr(a, ty.elem()).ok_or_else(|| Error::Runtime("bad constant".into()))?;
                let v = match &ty {
                    Type::Scalar(_) => RValue::Scalar(s),
                    _ if ty.is_vector() => RValue::Vector(Dense::splat(ty.elem(), ty.static_shape().unwrap(), s)),
                    _ => RValue::Tensor(Dense::splat(ty.elem(), ty.static_shape().unwrap(), s)),
                };
                self.set(res[0], v);
            }
            "arith.cmpi" | "arith.cmpf" => {
                let pred = d.str_attr("predicate").unwrap().to_string();
                let a = self.get(ops[0]).clone();
                let b = self.get(ops[1]).clone();
                let r = self.elementwise(op, &a, &b, |x, y| compare(&pred, x, y))?;
                let r = match r {
                    RValue::Vector(mut dd) => {
                        dd.elem = ElemType::I1;
                        RValue::Vector(dd)
                    }
                    RValue::Tensor(mut dd) => {
                        dd.elem = ElemType::I1;
                        RValue::Tensor(dd)
                    }
                    other => other,
                };
                self.set(res[0], r);
            }
            "arith.select" => {
                let c = self.get(ops[0]).clone();
                let a = self.get(ops[1]).clone();
                let b = self.get(ops[2]).clone();
                let r = match c {
                    RValue::Scalar(s) => {
                        if s.as_i64() != 0 {
                            a
                        } else {
                            b
                        }
                    }
                    RValue::Vector(cd) | RValue::Tensor(cd) => {
                        let mut out = a.dense().clone();
                        for (i, s) in cd.data.iter().enumerate() {
                            if s.as_i64() == 0 {
                                out.data[i] = b.dense().data[i];
                            }
                        }
                        if a.dense().rank() > 0 && matches!(a, RValue::Tensor(_)) {
                            RValue::Tensor(out)
                        } else {
                            RValue::Vector(out)
                        }
                    }
                    RValue::Buffer(_) => return rt_err(f, op, "select on buffer"),
                };
                self.set(res[0], r);
            }
            "tc.min" => {
                let r = self.idx(ops[0]).min(self.idx(ops[1]));
                self.set(res[0], RValue::Scalar(Scalar::I(r)));
            }
            "scf.for" => self.exec_for(op)?,
            "scf.if" => {
                let c = self.get(ops[0]).scalar().as_i64() != 0;
                let region = if c { Some(d.regions[0]) } else { d.regions.get(1).copied() };
                let vals = match region {
                    Some(r) => self.exec_block(r)?,
                    None => Vec::new(),
                };
                for (&r, v) in res.iter().zip(vals) {
                    self.set(r, v);
                }
            }
            "tensor.empty" => {
                let ty = f.ty(res[0]).clone();
                let shape = self.result_shape(&ty, ops);
                self.set(res[0], RValue::Tensor(Dense::zeros(ty.elem(), shape)));
            }
            "tensor.extract_slice" => {
                let (offsets, sizes) = self.slice_geometry(op, 1);
                let src = self.get(ops[0]).dense().clone();
                let rank = f.ty(res[0]).rank();
                let mut out = Dense::zeros(src.elem, sizes[sizes.len() - rank..].to_vec());
                let mut k = 0;
                let mut full = vec![0i64; sizes.len()];
                let mut oob = false;
                for_each_point(&sizes, |p| {
                    for i in 0..p.len() {
                        full[i] = p[i] + offsets[i];
                    }
                    if !src.in_bounds(&full) {
                        oob = true;
                        return;
                    }
                    out.data[k] = src.get(&full);
                    k += 1;
                });
                if oob {
                    return rt_err(f, op, format!("slice at {offsets:?} of size {sizes:?} exceeds {:?}", src.shape));
                }
                self.check_type(op, res[0], &out.shape)?;
                self.set(res[0], RValue::Tensor(out));
            }
            "tensor.insert_slice" => {
                let (offsets, sizes) = self.slice_geometry(op, 2);
                let src = self.get(ops[0]).dense().clone();
                let mut dest = self.get(ops[1]).dense().clone();
                if num_elements(&sizes) != src.len() {
                    return rt_err(f, op, format!("source shape {:?} does not match sizes {sizes:?}", src.shape));
                }
                let mut k = 0;
                let mut full = vec![0i64; sizes.len()];
                let mut oob = false;
                for_each_point(&sizes, |p| {
                    for i in 0..p.len() {
                        full[i] = p[i] + offsets[i];
                    }
                    if !dest.in_bounds(&full) {
                        oob = true;
                        return;
                    }
                    dest.set(&full, src.data[k]);
                    k += 1;
                });
                if oob {
                    return rt_err(f, op, format!("slice at {offsets:?} of size {sizes:?} exceeds {:?}", dest.shape));
                }
                self.set(res[0], RValue::Tensor(dest));
            }
            "tensor.extract" => {
                let idx: Vec<i64> = ops[1..].iter().map(|&v| self.idx(v)).collect();
                let t = self.get(ops[0]).dense();
                if !t.in_bounds(&idx) {
                    return rt_err(f, op, format!("index {idx:?} out of bounds"));
                }
                let s = t.get(&idx);
                self.set(res[0], RValue::Scalar(s));
            }
            "tensor.insert" => {
                let s = self.get(ops[0]).scalar();
                let idx: Vec<i64> = ops[2..].iter().map(|&v| self.idx(v)).collect();
                let mut t = self.get(ops[1]).dense().clone();
                if !t.in_bounds(&idx) {
                    return rt_err(f, op, format!("index {idx:?} out of bounds"));
                }
                t.set(&idx, s);
                self.set(res[0], RValue::Tensor(t));
            }
            "tensor.pad" => {
                let src = self.get(ops[0]).dense().clone();
                let rank = src.rank();
                let low: Vec<i64> = ops[1..1 + rank].iter().map(|&v| self.idx(v)).collect();
                let high: Vec<i64> = ops[1 + rank..].iter().map(|&v| self.idx(v)).collect();
                if low.iter().chain(&high).any(|&x| x < 0) {
                    return rt_err(f, op, "negative pad amount");
                }
                let shape: Vec<i64> = (0..rank).map(|i| src.shape[i] + low[i] + high[i]).collect();
                let pv = Scalar::from_attr(d.attr("pad_value").unwrap_or(&Attr::Float(0.0)), src.elem).unwrap();
                let mut out = Dense::splat(src.elem, shape, pv);
                let mut k = 0;
                let mut full = vec![0i64; rank];
                for_each_point(&src.shape, |p| {
                    for i in 0..rank {
                        full[i] = p[i] + low[i];
                    }
                    out.set(&full, src.data[k]);
                    k += 1;
                });
                self.check_type(op, res[0], &out.shape)?;
                self.set(res[0], RValue::Tensor(out));
            }
            "tensor.cast" | "memref.cast" => {
                let v = self.get(ops[0]).clone();
                let shape = self.shape_of(&v);
                self.check_type(op, res[0], &shape)?;
                self.set(res[0], v);
            }
            "tensor.dim" | "memref.dim" => {
                let k = d.int_attr("dim").unwrap() as usize;
                let n = self.shape_of(self.get(ops[0]))[k];
                self.set(res[0], RValue::Scalar(Scalar::I(n)));
            }
            "memref.alloc" | "memref.alloca" => {
                let ty = f.ty(res[0]).clone();
                let shape = self.result_shape(&ty, ops);
                let b = self.allocate(ty.elem(), &shape);
                self.set(res[0], RValue::Buffer(b));
            }
            "memref.dealloc" => {
                let b = self.get(ops[0]).buffer().clone();
                if !self.mem[b.alloc].live {
                    return rt_err(f, op, "double deallocation");
                }
                self.mem[b.alloc].live = false;
            }
            "memref.subview" => {
                let (offsets, sizes) = self.slice_geometry(op, 1);
                let src = self.get(ops[0]).buffer().clone();
                for i in 0..sizes.len() {
                    if offsets[i] < 0 || offsets[i] + sizes[i] > src.shape[i] {
                        return rt_err(f, op, format!("subview at {offsets:?} of size {sizes:?} exceeds {:?}", src.shape));
                    }
                }
                let rank = f.ty(res[0]).rank();
                let drop = sizes.len() - rank;
                let offset = src.offset + offsets.iter().zip(&src.strides).map(|(o, s)| o * s).sum::<i64>();
                let view = BufView {
                    alloc: src.alloc,
                    elem: src.elem,
                    offset,
                    shape: sizes[drop..].to_vec(),
                    strides: src.strides[drop..].to_vec(),
                };
                self.set(res[0], RValue::Buffer(view));
            }
            "memref.copy" => {
                let src = self.get(ops[0]).buffer().clone();
                let dst = self.get(ops[1]).buffer().clone();
                if src.shape != dst.shape {
                    return rt_err(f, op, format!("copy shape mismatch {:?} vs {:?}", src.shape, dst.shape));
                }
                let mut pts = Vec::new();
                for_each_point(&src.shape, |p| pts.push(p.to_vec()));
                for p in pts {
                    let v = self.mem_read(op, &src, &p)?;
                    self.mem_write(op, &dst, &p, v)?;
                }
            }
            "memref.load" => {
                let b = self.get(ops[0]).buffer().clone();
                let idx: Vec<i64> = ops[1..].iter().map(|&v| self.idx(v)).collect();
                let v = self.mem_read(op, &b, &idx)?;
                self.set(res[0], RValue::Scalar(v));
            }
            "memref.store" => {
                let v = self.get(ops[0]).scalar();
                let b = self.get(ops[1]).buffer().clone();
                let idx: Vec<i64> = ops[2..].iter().map(|&v| self.idx(v)).collect();
                self.mem_write(op, &b, &idx, v)?;
            }
            _ if name.starts_with("vector.") => self.exec_vector(op)?,
            _ => return rt_err(f, op, "not executable"),
        }
        Ok(())
    }

    fn check_type(&self, op: OpId, v: ValueId, shape: &[i64]) -> Result<()> {
        let ty = self.f.ty(v);
        if !shape_matches(ty, shape) {
            return rt_err(self.f, op, format!("runtime shape {shape:?} does not match declared {ty}"));
        }
        Ok(())
    }

    /// Offsets and full-rank sizes of a slice op whose offsets start at operand `first`.
    fn slice_geometry(&self, op: OpId, first: usize) -> (Vec<i64>, Vec<i64>) {
        let d = self.f.op(op);
        let stat = d.ints_attr("static_sizes").unwrap();
        let rank = stat.len();
        let offsets: Vec<i64> = d.operands[first..first + rank].iter().map(|&v| self.idx(v)).collect();
        let sizes = decode_sizes(stat, &d.operands[first + rank..])
            .into_iter()
            .map(|s| match s {
                SizeRef::Static(n) => n,
                SizeRef::Dynamic(v) => self.idx(v),
            })
            .collect();
        (offsets, sizes)
    }

    fn elementwise(
        &self,
        op: OpId,
        a: &RValue,
        b: &RValue,
        g: impl Fn(Scalar, Scalar) -> Result<Scalar>,
    ) -> Result<RValue> {
        match (a, b) {
            (RValue::Scalar(x), RValue::Scalar(y)) => Ok(RValue::Scalar(g(*x, *y)?)),
            (RValue::Vector(x), RValue::Vector(y)) | (RValue::Tensor(x), RValue::Tensor(y)) => {
                if x.shape != y.shape {
                    return rt_err(self.f, op, format!("shape mismatch {:?} vs {:?}", x.shape, y.shape));
                }
                let data = x.data.iter().zip(&y.data).map(|(p, q)| g(*p, *q)).collect::<Result<Vec<_>>>()?;
                let out = Dense { elem: x.elem, shape: x.shape.clone(), data };
                Ok(if matches!(a, RValue::Vector(_)) { RValue::Vector(out) } else { RValue::Tensor(out) })
            }
            _ => rt_err(self.f, op, "operand kinds differ"),
        }
    }

    fn exec_for(&mut self, op: OpId) -> Result<()> {
        let f = self.f;
        let d = f.op(op);
        let (lb, ub, step) = (self.idx(d.operands[0]), self.idx(d.operands[1]), self.idx(d.operands[2]));
        if step <= 0 {
            return rt_err(f, op, format!("non-positive step {step}"));
        }
        let body = d.regions[0];
        let args = f.block(body).args.clone();
        let mut iters: Vec<RValue> = d.operands[3..].iter().map(|&v| self.get(v).clone()).collect();
        if let Some(o) = self.obs.as_mut() {
            o.on_loop_enter(op);
        }
        let mut iv = lb;
        while iv < ub {
            if let Some(o) = self.obs.as_mut() {
                o.on_loop_iter(op, iv);
            }
            self.set(args[0], RValue::Scalar(Scalar::I(iv)));
            for (&a, v) in args[1..].iter().zip(iters.drain(..)) {
                self.set(a, v);
            }
            iters = self.exec_block(body)?;
            iv += step;
        }
        if let Some(o) = self.obs.as_mut() {
            o.on_loop_exit(op);
        }
        for (&r, v) in d.results.iter().zip(iters) {
            self.set(r, v);
        }
        Ok(())
    }

    fn exec_structured(&mut self, op: OpId) -> Result<()> {
        let f = self.f;
        let v = StructuredView::new(f, op);
        let operands = v.operands();
        let vals: Vec<RValue> = operands.iter().map(|&x| self.get(x).clone()).collect();
        let shapes: Vec<Vec<i64>> = vals.iter().map(|x| self.shape_of(x)).collect();
        let key = (op, shapes.clone());
        let sizes = match self.domain_cache.get(&key) {
            Some(s) => s.clone(),
            None => {
                let s = domain_from_shapes(&v.maps, v.n_iters(), &shapes).or_else(|e| rt_err(f, op, e))?;
                self.domain_cache.insert(key, s.clone());
                s
            }
        };
        let n_in = v.inputs.len();
        let mut outs: Vec<RValue> = vals[n_in..].to_vec();
        let args = f.block(v.body).args.clone();
        let mut pts = Vec::new();
        for_each_point(&sizes, |p| pts.push(p.to_vec()));
        for p in pts {
            if let Some(o) = self.obs.as_mut() {
                o.on_point(op, &p);
            }
            for (k, m) in v.maps.iter().enumerate() {
                let idx = m.apply(&p);
                let src = if k < n_in { vals[k].clone() } else { outs[k - n_in].clone() };
                let s = match &src {
                    RValue::Tensor(d) => {
                        if !d.in_bounds(&idx) {
                            return rt_err(f, op, format!("operand #{k} subscript {idx:?} out of bounds"));
                        }
                        d.get(&idx)
                    }
                    RValue::Buffer(b) => self.mem_read(op, b, &idx)?,
                    RValue::Scalar(s) => *s,
                    RValue::Vector(_) => return rt_err(f, op, "vector operand"),
                };
                self.set(args[k], RValue::Scalar(s));
            }
            let ys = self.exec_block(v.body)?;
            for (j, y) in ys.into_iter().enumerate() {
                let idx = v.maps[n_in + j].apply(&p);
                let y = y.scalar();
                match &mut outs[j] {
                    RValue::Tensor(d) => d.set(&idx, y),
                    RValue::Buffer(b) => {
                        let b = b.clone();
                        self.mem_write(op, &b, &idx, y)?;
                    }
                    _ => return rt_err(f, op, "bad output operand"),
                }
            }
        }
        let mut r = f.op(op).results.iter();
        for o in outs {
            if let RValue::Tensor(_) = o {
                let rv = *r.next().unwrap();
                self.set(rv, o);
            }
        }
        Ok(())
    }

    fn exec_vector(&mut self, op: OpId) -> Result<()> {
        let f = self.f;
        let d = f.op(op);
        let name = d.name.as_str();
        let ops = &d.operands;
        let res = &d.results;
        let rty = res.first().map(|&r| f.ty(r).clone());
        let vec_of = |dd: Dense| RValue::Vector(dd);
        match name {
            "vector.transfer_read" | "vector.transfer_write" => {
                let read = name == "vector.transfer_read";
                let src_v = if read { ops[0] } else { ops[1] };
                let src = self.get(src_v).clone();
                let rank = self.shape_of(&src).len();
                let base = if read { 1 } else { 2 };
                let start: Vec<i64> = ops[base..base + rank].iter().map(|&v| self.idx(v)).collect();
                let map: IndexingMap = d.attr("permutation_map").unwrap().as_maps().unwrap()[0].clone();
                let in_bounds: Vec<bool> = d.ints_attr("in_bounds").unwrap().iter().map(|&x| x != 0).collect();
                let vshape = if read {
                    rty.clone().unwrap().static_shape().unwrap()
                } else {
                    self.get(ops[0]).dense().shape.clone()
                };
                let src_index = |vi: &[i64]| -> Vec<i64> {
                    let mut idx = start.clone();
                    for (r, e) in map.results.iter().enumerate() {
                        if let Some(dim) = e.as_dim() {
                            idx[dim] += vi[r];
                        }
                    }
                    idx
                };
                let mut points = Vec::new();
                for_each_point(&vshape, |p| points.push(p.to_vec()));
                let src_shape = self.shape_of(&src);
                let masked_ok = |idx: &[i64]| -> bool {
                    // out-of-bounds only along dims transferred with in_bounds = false
                    idx.iter().enumerate().all(|(dim, &i)| {
                        (i >= 0 && i < src_shape[dim])
                            || map.results.iter().enumerate().any(|(r, e)| e.as_dim() == Some(dim) && !in_bounds[r])
                    })
                };
                if read {
                    let elem = rty.as_ref().unwrap().elem();
                    let pad = self.get(ops[base + rank]).scalar().cast(elem);
                    let mut out = Dense::zeros(elem, vshape.clone());
                    for (k, p) in points.iter().enumerate() {
                        let idx = src_index(p);
                        let v = self.read_any(op, &src, &idx)?;
                        out.data[k] = match v {
                            Some(s) => s,
                            None if masked_ok(&idx) => pad,
                            None => return rt_err(f, op, format!("out-of-bounds read at {idx:?}")),
                        };
                    }
                    self.set(res[0], vec_of(out));
                } else {
                    let vecv = self.get(ops[0]).dense().clone();
                    match src {
                        RValue::Tensor(mut t) => {
                            for (k, p) in points.iter().enumerate() {
                                let idx = src_index(p);
                                if t.in_bounds(&idx) {
                                    t.set(&idx, vecv.data[k]);
                                } else if !masked_ok(&idx) {
                                    return rt_err(f, op, format!("out-of-bounds write at {idx:?}"));
                                }
                            }
                            self.set(res[0], RValue::Tensor(t));
                        }
                        RValue::Buffer(b) => {
                            for (k, p) in points.iter().enumerate() {
                                let idx = src_index(p);
                                if b.in_bounds(&idx) {
                                    self.mem_write(op, &b, &idx, vecv.data[k])?;
                                } else if !masked_ok(&idx) {
                                    return rt_err(f, op, format!("out-of-bounds write at {idx:?}"));
                                }
                            }
                        }
                        _ => return rt_err(f, op, "bad transfer destination"),
                    }
                }
            }
            "vector.load" | "vector.store" => {
                let load = name == "vector.load";
                let b = self.get(if load { ops[0] } else { ops[1] }).buffer().clone();
                let start: Vec<i64> = ops[if load { 1 } else { 2 }..].iter().map(|&v| self.idx(v)).collect();
                let vshape = if load { rty.clone().unwrap().static_shape().unwrap() } else { self.get(ops[0]).dense().shape.clone() };
                let lead = start.len() - vshape.len();
                let mut points = Vec::new();
                for_each_point(&vshape, |p| points.push(p.to_vec()));
                let at = |p: &[i64]| -> Vec<i64> {
                    let mut idx = start.clone();
                    for (k, &x) in p.iter().enumerate() {
                        idx[lead + k] += x;
                    }
                    idx
                };
                if load {
                    let mut out = Dense::zeros(b.elem, vshape);
                    for (k, p) in points.iter().enumerate() {
                        out.data[k] = self.mem_read(op, &b, &at(p))?;
                    }
                    self.set(res[0], vec_of(out));
                } else {
                    let v = self.get(ops[0]).dense().clone();
                    for (k, p) in points.iter().enumerate() {
                        self.mem_write(op, &b, &at(p), v.data[k])?;
                    }
                }
            }
            "vector.contract" => {
                let maps = d.attr("indexing_maps").unwrap().as_maps().unwrap().to_vec();
                let lhs = self.get(ops[0]).dense().clone();
                let rhs = self.get(ops[1]).dense().clone();
                let acc = self.get(ops[2]).clone();
                let n = maps[0].n_dims;
                let mut sizes = vec![1i64; n];
                for (m, sh) in [(&maps[0], &lhs.shape), (&maps[1], &rhs.shape)] {
                    for (e, &s) in m.results.iter().zip(sh.iter()) {
                        if let Some(dim) = e.as_dim() {
                            sizes[dim] = s;
                        }
                    }
                }
                let elem = lhs.elem;
                let (float, mut out) = match &acc {
                    RValue::Scalar(s) => (elem.is_float(), Dense { elem, shape: vec![], data: vec![*s] }),
                    other => (elem.is_float(), other.dense().clone()),
                };
                let (add, mul) = if float { ("arith.addf", "arith.mulf") } else { ("arith.addi", "arith.muli") };
                let mut pts = Vec::new();
                for_each_point(&sizes, |p| pts.push(p.to_vec()));
                for p in pts {
                    let a = lhs.get(&maps[0].apply(&p));
                    let b = rhs.get(&maps[1].apply(&p));
                    let oi = maps[2].apply(&p);
                    let prod = binary(mul, a, b, out.elem)?;
                    let cur = out.get(&oi);
                    out.set(&oi, binary(add, cur, prod, out.elem)?);
                }
                let r = if matches!(acc, RValue::Scalar(_)) { RValue::Scalar(out.data[0]) } else { vec_of(out) };
                self.set(res[0], r);
            }
            "vector.multi_reduction" => {
                let kind = d.str_attr("kind").unwrap_or("add").to_string();
                let red: Vec<usize> = d.ints_attr("reduction_dims").unwrap().iter().map(|&x| x as usize).collect();
                let src = self.get(ops[0]).dense().clone();
                let acc = self.get(ops[1]).clone();
                let keep: Vec<usize> = (0..src.rank()).filter(|i| !red.contains(i)).collect();
                let mut out = match &acc {
                    RValue::Scalar(s) => Dense { elem: src.elem, shape: vec![], data: vec![*s] },
                    other => other.dense().clone(),
                };
                let mut pts = Vec::new();
                for_each_point(&src.shape, |p| pts.push(p.to_vec()));
                for (k, p) in pts.iter().enumerate() {
                    let oi: Vec<i64> = keep.iter().map(|&i| p[i]).collect();
                    let cur = out.get(&oi);
                    out.set(&oi, combine(&kind, cur, src.data[k], src.elem)?);
                }
                let r = if matches!(acc, RValue::Scalar(_)) { RValue::Scalar(out.data[0]) } else { vec_of(out) };
                self.set(res[0], r);
            }
            "vector.reduction" => {
                let kind = d.str_attr("kind").unwrap_or("add").to_string();
                let src = self.get(ops[0]).dense().clone();
                let mut r = self.get(ops[1]).scalar();
                for &x in &src.data {
                    r = combine(&kind, r, x, src.elem)?;
                }
                self.set(res[0], RValue::Scalar(r));
            }
            "vector.transpose" => {
                let perm: Vec<usize> = d.ints_attr("permutation").unwrap().iter().map(|&x| x as usize).collect();
                let src = self.get(ops[0]).dense().clone();
                let shape: Vec<i64> = perm.iter().map(|&p| src.shape[p]).collect();
                let mut out = Dense::zeros(src.elem, shape.clone());
                let mut k = 0;
                let mut si = vec![0i64; perm.len()];
                for_each_point(&shape, |p| {
                    for (j, &pj) in perm.iter().enumerate() {
                        si[pj] = p[j];
                    }
                    out.data[k] = src.get(&si);
                    k += 1;
                });
                self.set(res[0], vec_of(out));
            }
            "vector.broadcast" => {
                let ty = rty.unwrap();
                let shape = ty.static_shape().unwrap();
                let src = self.get(ops[0]).clone();
                let out = match src {
                    RValue::Scalar(s) => Dense::splat(ty.elem(), shape, s),
                    RValue::Vector(sv) => {
                        let lead = shape.len() - sv.rank();
                        let mut out = Dense::zeros(ty.elem(), shape.clone());
                        let mut k = 0;
                        let mut si = vec![0i64; sv.rank()];
                        for_each_point(&shape, |p| {
                            for j in 0..sv.rank() {
                                si[j] = if sv.shape[j] == 1 { 0 } else { p[lead + j] };
                            }
                            out.data[k] = sv.get(&si);
                            k += 1;
                        });
                        out
                    }
                    _ => return rt_err(f, op, "bad broadcast source"),
                };
                self.set(res[0], vec_of(out));
            }
            "vector.fma" => {
                let a = self.get(ops[0]).dense().clone();
                let b = self.get(ops[1]).dense().clone();
                let c = self.get(ops[2]).dense().clone();
                let mut out = c.clone();
                for i in 0..out.len() {
                    out.data[i] = fma(a.data[i], b.data[i], c.data[i], out.elem);
                }
                self.set(res[0], vec_of(out));
            }
            "vector.outerproduct" => {
                let lhs = self.get(ops[0]).dense().clone();
                let rhs = self.get(ops[1]).clone();
                let acc = ops.get(2).map(|&v| self.get(v).dense().clone());
                let elem = lhs.elem;
                let out = match rhs {
                    RValue::Vector(r) => {
                        let (m, n) = (lhs.shape[0], r.shape[0]);
                        let mut out = acc.unwrap_or_else(|| Dense::zeros(elem, vec![m, n]));
                        for i in 0..m {
                            for j in 0..n {
                                let k = (i * n + j) as usize;
                                out.data[k] = fma(lhs.data[i as usize], r.data[j as usize], out.data[k], elem);
                            }
                        }
                        out
                    }
                    RValue::Scalar(s) => {
                        let mut out = acc.unwrap_or_else(|| Dense::zeros(elem, lhs.shape.clone()));
                        for i in 0..lhs.len() {
                            out.data[i] = fma(lhs.data[i], s, out.data[i], elem);
                        }
                        out
                    }
                    _ => return rt_err(f, op, "bad outerproduct operand"),
                };
                self.set(res[0], vec_of(out));
            }
            "vector.extract_strided_slice" => {
                let src = self.get(ops[0]).dense().clone();
                let offs = d.ints_attr("offsets").unwrap().to_vec();
                let sizes = d.ints_attr("sizes").unwrap().to_vec();
                let mut shape = sizes.clone();
                shape.extend_from_slice(&src.shape[sizes.len()..]);
                let mut out = Dense::zeros(src.elem, shape.clone());
                let mut k = 0;
                let mut si = vec![0i64; shape.len()];
                let mut oob = false;
                for_each_point(&shape, |p| {
                    for j in 0..p.len() {
                        si[j] = p[j] + offs.get(j).copied().unwrap_or(0);
                    }
                    if !src.in_bounds(&si) {
                        oob = true;
                        return;
                    }
                    out.data[k] = src.get(&si);
                    k += 1;
                });
                if oob {
                    return rt_err(f, op, "strided slice out of bounds");
                }
                self.set(res[0], vec_of(out));
            }
            "vector.insert_strided_slice" => {
                let src = self.get(ops[0]).dense().clone();
                let mut dest = self.get(ops[1]).dense().clone();
                let offs = d.ints_attr("offsets").unwrap().to_vec();
                let lead = dest.rank() - src.rank();
                let mut k = 0;
                let mut di = vec![0i64; dest.rank()];
                let mut oob = false;
                for_each_point(&src.shape, |p| {
                    di[..lead].copy_from_slice(&offs[..lead]);
                    for j in 0..p.len() {
                        di[lead + j] = offs[lead + j] + p[j];
                    }
                    if !dest.in_bounds(&di) {
                        oob = true;
                        return;
                    }
                    dest.set(&di, src.data[k]);
                    k += 1;
                });
                if oob {
                    return rt_err(f, op, "strided slice out of bounds");
                }
                self.set(res[0], vec_of(dest));
            }
            "vector.extract" => {
                let src = self.get(ops[0]).dense().clone();
                let pos = d.ints_attr("position").unwrap().to_vec();
                let Some(sub) = sub_block(&src, &pos) else {
                    return rt_err(f, op, "position out of bounds");
                };
                let r = if pos.len() == src.rank() { RValue::Scalar(sub.data[0]) } else { vec_of(sub) };
                self.set(res[0], r);
            }
            "vector.insert" => {
                let src = self.get(ops[0]).clone();
                let mut dest = self.get(ops[1]).dense().clone();
                let pos = d.ints_attr("position").unwrap().to_vec();
                let inner: i64 = dest.shape[pos.len()..].iter().product();
                let mut start = 0i64;
                for (j, &p) in pos.iter().enumerate() {
                    if p < 0 || p >= dest.shape[j] {
                        return rt_err(f, op, "position out of bounds");
                    }
                    start = start * dest.shape[j] + p;
                }
                let start = (start * inner) as usize;
                match src {
                    RValue::Scalar(s) => dest.data[start] = s.cast(dest.elem),
                    RValue::Vector(v) => dest.data[start..start + v.len()].copy_from_slice(&v.data),
                    _ => return rt_err(f, op, "bad insert source"),
                }
                self.set(res[0], vec_of(dest));
            }
            "vector.shape_cast" => {
                let mut v = self.get(ops[0]).dense().clone();
                v.shape = rty.unwrap().static_shape().unwrap();
                self.set(res[0], vec_of(v));
            }
            "vector.shuffle" => {
                let a = self.get(ops[0]).dense().clone();
                let b = self.get(ops[1]).dense().clone();
                let mask = d.ints_attr("mask").unwrap().to_vec();
                let inner: usize = a.shape[1..].iter().product::<i64>() as usize;
                let mut data = Vec::new();
                for &mi in &mask {
                    let (src, i) = if mi < a.shape[0] { (&a, mi) } else { (&b, mi - a.shape[0]) };
                    if i < 0 || i >= src.shape[0] {
                        return rt_err(f, op, "shuffle mask out of range");
                    }
                    let s = i as usize * inner;
                    data.extend_from_slice(&src.data[s..s + inner]);
                }
                let mut shape = a.shape.clone();
                shape[0] = mask.len() as i64;
                self.set(res[0], vec_of(Dense { elem: a.elem, shape, data }));
            }
            _ => return rt_err(f, op, "not executable"),
        }
        Ok(())
    }
}

/// Sub-array at a leading-dims position.
fn sub_block(src: &Dense, pos: &[i64]) -> Option<Dense> {
    let inner: i64 = src.shape[pos.len()..].iter().product();
    let mut start = 0i64;
    for (j, &p) in pos.iter().enumerate() {
        if p < 0 || p >= src.shape[j] {
            return None;
        }
        start = start * src.shape[j] + p;
    }
    let s = (start * inner) as usize;
    Some(Dense { elem: src.elem, shape: src.shape[pos.len()..].to_vec(), data: src.data[s..s + inner as usize].to_vec() })
}

fn fma(a: Scalar, b: Scalar, c: Scalar, elem: ElemType) -> Scalar {
    match (a, b, c) {
        (Scalar::I(x), Scalar::I(y), Scalar::I(z)) => Scalar::I(x.wrapping_mul(y).wrapping_add(z)).cast(elem),
        _ => Scalar::F(a.as_f64().mul_add(b.as_f64(), c.as_f64())).cast(elem),
    }
}

pub fn binary(name: &str, a: Scalar, b: Scalar, elem: ElemType) -> Result<Scalar> {
    let fl = |g: fn(f64, f64) -> f64| Scalar::F(g(a.as_f64(), b.as_f64())).cast(elem);
    let (x, y) = (a.as_i64(), b.as_i64());
    let r = match name {
        "arith.addf" => fl(|p, q| p + q),
        "arith.subf" => fl(|p, q| p - q),
        "arith.mulf" => fl(|p, q| p * q),
        "arith.divf" => fl(|p, q| p / q),
        "arith.maxf" => fl(f64::max),
        "arith.minf" => fl(f64::min),
        "arith.addi" => Scalar::I(x.wrapping_add(y)).cast(elem),
        "arith.subi" => Scalar::I(x.wrapping_sub(y)).cast(elem),
        "arith.muli" => Scalar::I(x.wrapping_mul(y)).cast(elem),
        "arith.divsi" | "arith.remsi" => {
            if y == 0 {
                return Err(Error::Runtime("integer division by zero".into()));
            }
            let v = if name == "arith.divsi" { x.wrapping_div(y) } else { x.wrapping_rem(y) };
            Scalar::I(v).cast(elem)
        }
        "arith.maxsi" => Scalar::I(x.max(y)),
        "arith.minsi" => Scalar::I(x.min(y)),
        "arith.andi" => Scalar::I(x & y).cast(elem),
        "arith.ori" => Scalar::I(x | y).cast(elem),
        _ => return Err(Error::Runtime(format!("unknown binary op {name}"))),
    };
    Ok(r)
}

/// Reduction combinator by kind name.
pub fn combine(kind: &str, acc: Scalar, x: Scalar, elem: ElemType) -> Result<Scalar> {
    let float = elem.is_float();
    let name = match (kind, float) {
        ("add", true) => "arith.addf",
        ("add", false) => "arith.addi",
        ("mul", true) => "arith.mulf",
        ("mul", false) => "arith.muli",
        ("max", true) | ("maxf", _) => "arith.maxf",
        ("max", false) => "arith.maxsi",
        ("min", true) | ("minf", _) => "arith.minf",
        ("min", false) => "arith.minsi",
        _ => return Err(Error::Runtime(format!("unknown combining kind '{kind}'"))),
    };
    binary(name, acc, x, elem)
}

fn compare(pred: &str, a: Scalar, b: Scalar) -> Result<Scalar> {
    let ord = match (a, b) {
        (Scalar::I(x), Scalar::I(y)) => x.partial_cmp(&y),
        _ => a.as_f64().partial_cmp(&b.as_f64()),
    };
    use std::cmp::Ordering::*;
    let r = match (pred.trim_start_matches(['o', 's', 'u']), ord) {
        // unordered comparison (NaN operand)
        (_, None) => pred.starts_with('u'),
        ("eq", Some(o)) => o == Equal,
        ("ne", Some(o)) => o != Equal,
        ("lt", Some(o)) => o == Less,
        ("le", Some(o)) => o != Greater,
        ("gt", Some(o)) => o == Greater,
        ("ge", Some(o)) => o != Less,
        _ => return Err(Error::Runtime(format!("unknown predicate '{pred}'"))),
    };
    Ok(Scalar::I(r as i64))
}
