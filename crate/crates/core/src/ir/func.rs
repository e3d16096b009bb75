//! Arena storage for functions: values, operations and single-block regions.

use std::collections::HashMap;
use std::fmt;

use super::attr::{Attr, AttrMap};
use super::types::Type;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub u32);
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub u32);

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDef {
    OpResult(OpId, usize),
    BlockArg(BlockId, usize),
    /// Referenced before definition while parsing.
    Pending,
}

#[derive(Debug, Clone)]
pub struct ValueData {
    pub ty: Type,
    pub def: ValueDef,
}

#[derive(Debug, Clone)]
pub struct OpData {
    pub name: String,
    pub operands: Vec<ValueId>,
    pub results: Vec<ValueId>,
    pub attrs: AttrMap,
    pub regions: Vec<BlockId>,
    pub parent: Option<BlockId>,
    pub erased: bool,
}

impl OpData {
    pub fn attr(&self, k: &str) -> Option<&Attr> {
        self.attrs.get(k)
    }
    pub fn int_attr(&self, k: &str) -> Option<i64> {
        self.attrs.get(k).and_then(|a| a.as_int())
    }
    pub fn ints_attr(&self, k: &str) -> Option<&[i64]> {
        self.attrs.get(k).and_then(|a| a.as_ints())
    }
    pub fn bool_attr(&self, k: &str) -> Option<bool> {
        self.attrs.get(k).and_then(|a| a.as_bool())
    }
    pub fn str_attr(&self, k: &str) -> Option<&str> {
        self.attrs.get(k).and_then(|a| a.as_str())
    }
    pub fn result(&self) -> ValueId {
        self.results[0]
    }
}

#[derive(Debug, Clone, Default)]
pub struct BlockData {
    pub args: Vec<ValueId>,
    pub ops: Vec<OpId>,
    pub parent: Option<OpId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArgAnnotation {
    In,
    Out,
}

impl ArgAnnotation {
    pub fn name(self) -> &'static str {
        match self {
            ArgAnnotation::In => "in",
            ArgAnnotation::Out => "out",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub annotations: Vec<Option<ArgAnnotation>>,
    pub result_types: Vec<Type>,
    pub attrs: AttrMap,
    pub values: Vec<ValueData>,
    pub ops: Vec<OpData>,
    pub blocks: Vec<BlockData>,
    pub body: BlockId,
}

/// Position before which new operations are inserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertPoint {
    pub block: BlockId,
    pub index: usize,
}

impl Function {
    pub fn new(name: &str, arg_types: Vec<Type>, result_types: Vec<Type>) -> Function {
        let mut f = Function {
            name: name.to_string(),
            annotations: vec![None; arg_types.len()],
            result_types,
            attrs: AttrMap::new(),
            values: Vec::new(),
            ops: Vec::new(),
            blocks: Vec::new(),
            body: BlockId(0),
        };
        let body = f.new_block(arg_types);
        f.body = body;
        f
    }

    pub fn args(&self) -> &[ValueId] {
        &self.blocks[self.body.0 as usize].args
    }

    pub fn arg_types(&self) -> Vec<Type> {
        self.args().iter().map(|&a| self.ty(a).clone()).collect()
    }

    pub fn new_value(&mut self, ty: Type, def: ValueDef) -> ValueId {
        self.values.push(ValueData { ty, def });
        ValueId(self.values.len() as u32 - 1)
    }

    pub fn new_block(&mut self, arg_types: Vec<Type>) -> BlockId {
        let id = BlockId(self.blocks.len() as u32);
        self.blocks.push(BlockData::default());
        for (i, t) in arg_types.into_iter().enumerate() {
            let v = self.new_value(t, ValueDef::BlockArg(id, i));
            self.blocks[id.0 as usize].args.push(v);
        }
        id
    }

    pub fn add_block_arg(&mut self, b: BlockId, ty: Type) -> ValueId {
        let i = self.block(b).args.len();
        let v = self.new_value(ty, ValueDef::BlockArg(b, i));
        self.block_mut(b).args.push(v);
        v
    }

    pub fn ty(&self, v: ValueId) -> &Type {
        &self.values[v.0 as usize].ty
    }

    pub fn set_ty(&mut self, v: ValueId, t: Type) {
        self.values[v.0 as usize].ty = t;
    }

    pub fn def(&self, v: ValueId) -> ValueDef {
        self.values[v.0 as usize].def
    }

    pub fn defining_op(&self, v: ValueId) -> Option<OpId> {
        match self.def(v) {
            ValueDef::OpResult(op, _) => Some(op),
            _ => None,
        }
    }

    pub fn op(&self, id: OpId) -> &OpData {
        &self.ops[id.0 as usize]
    }

    pub fn op_mut(&mut self, id: OpId) -> &mut OpData {
        &mut self.ops[id.0 as usize]
    }

    pub fn block(&self, id: BlockId) -> &BlockData {
        &self.blocks[id.0 as usize]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut BlockData {
        &mut self.blocks[id.0 as usize]
    }

    /// Name of the defining op, if `v` is an op result.
    pub fn def_name(&self, v: ValueId) -> Option<&str> {
        self.defining_op(v).map(|o| self.op(o).name.as_str())
    }

    /// Creates a detached operation.
    pub fn create_op(
        &mut self,
        name: &str,
        operands: Vec<ValueId>,
        result_types: Vec<Type>,
        attrs: AttrMap,
        regions: Vec<BlockId>,
    ) -> OpId {
        let id = OpId(self.ops.len() as u32);
        self.ops.push(OpData {
            name: name.to_string(),
            operands,
            results: Vec::new(),
            attrs,
            regions: regions.clone(),
            parent: None,
            erased: false,
        });
        for (i, t) in result_types.into_iter().enumerate() {
            let v = self.new_value(t, ValueDef::OpResult(id, i));
            self.ops[id.0 as usize].results.push(v);
        }
        for r in regions {
            self.block_mut(r).parent = Some(id);
        }
        id
    }

    pub fn insert_op(&mut self, ip: InsertPoint, op: OpId) {
        self.block_mut(ip.block).ops.insert(ip.index, op);
        self.op_mut(op).parent = Some(ip.block);
    }

    pub fn append_op(&mut self, block: BlockId, op: OpId) {
        let index = self.block(block).ops.len();
        self.insert_op(InsertPoint { block, index }, op);
    }

    /// Position of an attached op inside its parent block.
    pub fn position(&self, op: OpId) -> InsertPoint {
        let block = self.op(op).parent.expect("detached op");
        let index = self.block(block).ops.iter().position(|&o| o == op).expect("op not in parent");
        InsertPoint { block, index }
    }

    pub fn before(&self, op: OpId) -> InsertPoint {
        self.position(op)
    }

    pub fn after(&self, op: OpId) -> InsertPoint {
        let mut p = self.position(op);
        p.index += 1;
        p
    }

    /// Detaches `op` from its block without erasing it.
    pub fn detach(&mut self, op: OpId) {
        if let Some(b) = self.op(op).parent {
            self.block_mut(b).ops.retain(|&o| o != op);
            self.op_mut(op).parent = None;
        }
    }

    pub fn move_before(&mut self, op: OpId, anchor: OpId) {
        self.detach(op);
        let ip = self.position(anchor);
        self.insert_op(ip, op);
    }

    /// Erases an op and everything nested in it.
    pub fn erase_op(&mut self, op: OpId) {
        self.detach(op);
        let regions = self.op(op).regions.clone();
        for r in regions {
            let ops = self.block(r).ops.clone();
            for o in ops {
                self.erase_op(o);
            }
        }
        self.op_mut(op).erased = true;
    }

    pub fn parent_op(&self, op: OpId) -> Option<OpId> {
        self.op(op).parent.and_then(|b| self.block(b).parent)
    }

    pub fn block_parent_op(&self, b: BlockId) -> Option<OpId> {
        self.block(b).parent
    }

    /// Block that contains the definition of `v`.
    pub fn def_block(&self, v: ValueId) -> Option<BlockId> {
        match self.def(v) {
            ValueDef::OpResult(op, _) => self.op(op).parent,
            ValueDef::BlockArg(b, _) => Some(b),
            ValueDef::Pending => None,
        }
    }

    /// `true` if `op` is (transitively) nested inside `ancestor`.
    pub fn is_nested_in(&self, op: OpId, ancestor: OpId) -> bool {
        let mut cur = self.parent_op(op);
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parent_op(p);
        }
        false
    }

    /// `true` if block `b` is inside `ancestor`'s regions (at any depth).
    pub fn block_is_nested_in(&self, b: BlockId, ancestor: OpId) -> bool {
        match self.block(b).parent {
            Some(p) => p == ancestor || self.is_nested_in(p, ancestor),
            None => false,
        }
    }

    /// `true` if `v` is defined outside of `op` (not by it and not within its regions).
    pub fn defined_outside(&self, v: ValueId, op: OpId) -> bool {
        match self.def(v) {
            ValueDef::OpResult(d, _) => d != op && !self.is_nested_in(d, op),
            ValueDef::BlockArg(b, _) => !self.block_is_nested_in(b, op),
            ValueDef::Pending => false,
        }
    }

    /// Pre-order walk: each op precedes the ops of its regions.
    pub fn walk(&self) -> Vec<OpId> {
        let mut out = Vec::new();
        self.walk_block(self.body, &mut out);
        out
    }

    pub fn walk_block(&self, b: BlockId, out: &mut Vec<OpId>) {
        for &op in &self.block(b).ops {
            out.push(op);
            for &r in &self.op(op).regions {
                self.walk_block(r, out);
            }
        }
    }

    /// Ops nested within `op` (excluding itself), pre-order.
    pub fn walk_nested(&self, op: OpId) -> Vec<OpId> {
        let mut out = Vec::new();
        for &r in &self.op(op).regions {
            self.walk_block(r, &mut out);
        }
        out
    }

    pub fn find_ops(&self, name: &str) -> Vec<OpId> {
        self.walk().into_iter().filter(|&o| self.op(o).name == name).collect()
    }

    pub fn count_ops(&self, name: &str) -> usize {
        self.find_ops(name).len()
    }

    pub fn uses(&self, v: ValueId) -> Vec<(OpId, usize)> {
        let mut out = Vec::new();
        for op in self.walk() {
            for (i, &o) in self.op(op).operands.iter().enumerate() {
                if o == v {
                    out.push((op, i));
                }
            }
        }
        out
    }

    pub fn has_uses(&self, v: ValueId) -> bool {
        self.walk().into_iter().any(|op| self.op(op).operands.contains(&v))
    }

    pub fn replace_all_uses(&mut self, old: ValueId, new: ValueId) {
        for op in self.walk() {
            for o in self.op_mut(op).operands.iter_mut() {
                if *o == old {
                    *o = new;
                }
            }
        }
    }

    /// Replaces uses of `old` only inside ops for which `pred` holds.
    pub fn replace_uses_where(&mut self, old: ValueId, new: ValueId, pred: impl Fn(&Function, OpId) -> bool) {
        for op in self.walk() {
            if !pred(self, op) {
                continue;
            }
            for o in self.op_mut(op).operands.iter_mut() {
                if *o == old {
                    *o = new;
                }
            }
        }
    }

    pub fn replace_op(&mut self, op: OpId, new_values: &[ValueId]) {
        let results = self.op(op).results.clone();
        assert_eq!(results.len(), new_values.len(), "replace_op arity");
        for (r, &n) in results.iter().zip(new_values) {
            self.replace_all_uses(*r, n);
        }
        self.erase_op(op);
    }

    /// Deep-clones `op` to `ip`, remapping operands through `map` and recording new values.
    pub fn clone_op(&mut self, op: OpId, ip: InsertPoint, map: &mut HashMap<ValueId, ValueId>) -> OpId {
        let new = self.clone_op_detached(op, map);
        self.insert_op(ip, new);
        new
    }

    pub fn clone_op_detached(&mut self, op: OpId, map: &mut HashMap<ValueId, ValueId>) -> OpId {
        let data = self.op(op).clone();
        let operands = data.operands.iter().map(|v| *map.get(v).unwrap_or(v)).collect();
        let mut regions = Vec::new();
        for &r in &data.regions {
            regions.push(self.clone_block(r, map));
        }
        let result_types = data.results.iter().map(|&r| self.ty(r).clone()).collect();
        let new = self.create_op(&data.name, operands, result_types, data.attrs.clone(), regions);
        let new_results = self.op(new).results.clone();
        for (a, b) in data.results.iter().zip(new_results) {
            map.insert(*a, b);
        }
        new
    }

    pub fn clone_block(&mut self, b: BlockId, map: &mut HashMap<ValueId, ValueId>) -> BlockId {
        let arg_types: Vec<Type> = self.block(b).args.iter().map(|&a| self.ty(a).clone()).collect();
        let nb = self.new_block(arg_types);
        let old_args = self.block(b).args.clone();
        let new_args = self.block(nb).args.clone();
        for (a, n) in old_args.iter().zip(new_args) {
            map.insert(*a, n);
        }
        let ops = self.block(b).ops.clone();
        for o in ops {
            let c = self.clone_op_detached(o, map);
            self.append_op(nb, c);
        }
        nb
    }

    pub fn terminator(&self, b: BlockId) -> Option<OpId> {
        self.block(b).ops.last().copied()
    }

    /// Ancestor chain from the function body down to `op` as (block, index) steps.
    pub fn path(&self, op: OpId) -> Vec<usize> {
        let mut steps = Vec::new();
        let mut cur = Some(op);
        while let Some(o) = cur {
            let p = self.position(o);
            steps.push(p.index);
            cur = self.block(p.block).parent;
            if let Some(parent) = cur {
                let ri = self.op(parent).regions.iter().position(|&r| r == p.block).unwrap();
                steps.push(ri);
            }
        }
        steps.reverse();
        steps
    }

    /// Lexical program order of two attached ops.
    pub fn is_before(&self, a: OpId, b: OpId) -> bool {
        self.path(a) < self.path(b)
    }

    /// Enclosing ops of `op`, innermost first.
    pub fn enclosing_ops(&self, op: OpId) -> Vec<OpId> {
        let mut out = Vec::new();
        let mut cur = self.parent_op(op);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent_op(p);
        }
        out
    }

    pub fn enclosing_loops(&self, op: OpId) -> Vec<OpId> {
        self.enclosing_ops(op).into_iter().filter(|&o| self.op(o).name == "scf.for").collect()
    }

    /// Drops erased ops and unreachable values by rebuilding the arena compactly.
    pub fn compact(&self) -> Function {
        let mut out = Function::new(&self.name, self.arg_types(), self.result_types.clone());
        out.annotations = self.annotations.clone();
        out.attrs = self.attrs.clone();
        let mut map: HashMap<ValueId, ValueId> = HashMap::new();
        for (a, b) in self.args().iter().zip(out.args().to_vec()) {
            map.insert(*a, b);
        }
        let body = out.body;
        copy_block_ops(self, self.body, &mut out, body, &mut map);
        out
    }
}

fn copy_block_ops(src: &Function, sb: BlockId, dst: &mut Function, db: BlockId, map: &mut HashMap<ValueId, ValueId>) {
    for &op in &src.block(sb).ops {
        let d = src.op(op);
        let mut regions = Vec::new();
        for &r in &d.regions {
            let arg_types = src.block(r).args.iter().map(|&a| src.ty(a).clone()).collect();
            let nb = dst.new_block(arg_types);
            for (a, n) in src.block(r).args.iter().zip(dst.block(nb).args.clone()) {
                map.insert(*a, n);
            }
            regions.push(nb);
        }
        let operands = d.operands.iter().map(|v| *map.get(v).unwrap_or(v)).collect();
        let rtypes = d.results.iter().map(|&r| src.ty(r).clone()).collect();
        let new = dst.create_op(&d.name, operands, rtypes, d.attrs.clone(), regions.clone());
        for (a, b) in d.results.iter().zip(dst.op(new).results.clone()) {
            map.insert(*a, b);
        }
        dst.append_op(db, new);
        for (&r, nb) in d.regions.iter().zip(regions) {
            copy_block_ops(src, r, dst, nb, map);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Module {
    pub functions: Vec<Function>,
}

impl Module {
    pub fn new() -> Module {
        Module::default()
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }
}
