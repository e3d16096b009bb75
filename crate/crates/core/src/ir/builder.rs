//! Convenience builder for emitting operations at an insertion point.

use super::attr::{Attr, AttrMap};
use super::func::{BlockId, Function, InsertPoint, OpId, ValueId};
use super::types::{ElemType, Type};

pub fn attrs(items: &[(&str, Attr)]) -> AttrMap {
    items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Constant integer value of `v` if defined by `arith.constant`.
pub fn const_int(f: &Function, v: ValueId) -> Option<i64> {
    let op = f.defining_op(v)?;
    let d = f.op(op);
    if d.name != "arith.constant" || !f.ty(v).is_scalar() || f.ty(v).elem().is_float() {
        return None;
    }
    d.int_attr("value")
}

pub fn const_float(f: &Function, v: ValueId) -> Option<f64> {
    let op = f.defining_op(v)?;
    let d = f.op(op);
    if d.name != "arith.constant" {
        return None;
    }
    d.attr("value").and_then(|a| a.as_float())
}

pub struct Builder<'a> {
    pub f: &'a mut Function,
    pub ip: InsertPoint,
}

impl<'a> Builder<'a> {
    pub fn new(f: &'a mut Function, ip: InsertPoint) -> Self {
        Builder { f, ip }
    }

    pub fn at_end(f: &'a mut Function, block: BlockId) -> Self {
        let index = f.block(block).ops.len();
        Builder { f, ip: InsertPoint { block, index } }
    }

    pub fn before(f: &'a mut Function, op: OpId) -> Self {
        let ip = f.position(op);
        Builder { f, ip }
    }

    pub fn insert(&mut self, op: OpId) -> OpId {
        self.f.insert_op(self.ip, op);
        self.ip.index += 1;
        op
    }

    pub fn create(&mut self, name: &str, operands: Vec<ValueId>, result_types: Vec<Type>, attrs: AttrMap) -> OpId {
        let op = self.f.create_op(name, operands, result_types, attrs, Vec::new());
        self.insert(op)
    }

    pub fn create_with_regions(
        &mut self,
        name: &str,
        operands: Vec<ValueId>,
        result_types: Vec<Type>,
        attrs: AttrMap,
        regions: Vec<BlockId>,
    ) -> OpId {
        let op = self.f.create_op(name, operands, result_types, attrs, regions);
        self.insert(op)
    }

    /// Single-result op.
    pub fn value(&mut self, name: &str, operands: Vec<ValueId>, ty: Type, attrs: AttrMap) -> ValueId {
        let op = self.create(name, operands, vec![ty], attrs);
        self.f.op(op).results[0]
    }

    pub fn no_result(&mut self, name: &str, operands: Vec<ValueId>, attrs: AttrMap) -> OpId {
        self.create(name, operands, vec![], attrs)
    }

    pub fn const_index(&mut self, n: i64) -> ValueId {
        self.value("arith.constant", vec![], Type::index(), attrs(&[("value", Attr::Int(n))]))
    }

    /// Scalar or splat constant of type `ty`.
    pub fn constant(&mut self, value: f64, ty: Type) -> ValueId {
        let a = if ty.elem().is_float() { Attr::Float(value) } else { Attr::Int(value as i64) };
        self.value("arith.constant", vec![], ty, attrs(&[("value", a)]))
    }

    pub fn constant_attr(&mut self, value: Attr, ty: Type) -> ValueId {
        self.value("arith.constant", vec![], ty, attrs(&[("value", value)]))
    }

    fn index_binop(&mut self, name: &str, a: ValueId, b: ValueId, fold: fn(i64, i64) -> i64) -> ValueId {
        if let (Some(x), Some(y)) = (const_int(self.f, a), const_int(self.f, b)) {
            return self.const_index(fold(x, y));
        }
        self.value(name, vec![a, b], Type::index(), AttrMap::new())
    }

    pub fn addi(&mut self, a: ValueId, b: ValueId) -> ValueId {
        if const_int(self.f, b) == Some(0) {
            return a;
        }
        if const_int(self.f, a) == Some(0) {
            return b;
        }
        self.index_binop("arith.addi", a, b, |x, y| x + y)
    }

    pub fn subi(&mut self, a: ValueId, b: ValueId) -> ValueId {
        if const_int(self.f, b) == Some(0) {
            return a;
        }
        self.index_binop("arith.subi", a, b, |x, y| x - y)
    }

    pub fn muli(&mut self, a: ValueId, b: ValueId) -> ValueId {
        if const_int(self.f, b) == Some(1) {
            return a;
        }
        if const_int(self.f, a) == Some(1) {
            return b;
        }
        self.index_binop("arith.muli", a, b, |x, y| x * y)
    }

    pub fn divsi(&mut self, a: ValueId, b: ValueId) -> ValueId {
        if const_int(self.f, b) == Some(1) {
            return a;
        }
        self.index_binop("arith.divsi", a, b, |x, y| x.div_euclid(y))
    }

    pub fn add_const(&mut self, a: ValueId, c: i64) -> ValueId {
        if c == 0 {
            return a;
        }
        let k = self.const_index(c);
        self.addi(a, k)
    }

    pub fn mul_const(&mut self, a: ValueId, c: i64) -> ValueId {
        if c == 1 {
            return a;
        }
        let k = self.const_index(c);
        self.muli(a, k)
    }

    /// `tc.min(a, b)` partial-tile size.
    pub fn min(&mut self, a: ValueId, b: ValueId) -> ValueId {
        if let (Some(x), Some(y)) = (const_int(self.f, a), const_int(self.f, b)) {
            return self.const_index(x.min(y));
        }
        self.value("tc.min", vec![a, b], Type::index(), AttrMap::new())
    }

    pub fn cmpi(&mut self, pred: &str, a: ValueId, b: ValueId) -> ValueId {
        self.value(
            "arith.cmpi",
            vec![a, b],
            Type::scalar(ElemType::I1),
            attrs(&[("predicate", Attr::Str(pred.to_string()))]),
        )
    }

    pub fn andi(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.value("arith.andi", vec![a, b], Type::scalar(ElemType::I1), AttrMap::new())
    }

    pub fn dim(&mut self, src: ValueId, d: usize) -> ValueId {
        if let Some(n) = self.f.ty(src).dims()[d].as_static() {
            return self.const_index(n);
        }
        let name = if self.f.ty(src).is_memref() { "memref.dim" } else { "tensor.dim" };
        self.value(name, vec![src], Type::index(), attrs(&[("dim", Attr::Int(d as i64))]))
    }

    pub fn yield_(&mut self, name: &str, vals: Vec<ValueId>) -> OpId {
        self.create(name, vals, vec![], AttrMap::new())
    }
}
