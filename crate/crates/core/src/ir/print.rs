//! Canonical textual form. Values are renumbered `%0, %1, ...` in definition order.

use std::collections::HashMap;
use std::fmt::Write;

use super::attr::{format_attr_dict, AttrMap};
use super::func::{BlockId, Function, Module, OpId, ValueId};
use super::ops::is_named_structured;
use super::types::Type;

/// Attributes that named structured ops derive from their kind and therefore do not print.
pub const DERIVED_STRUCTURED_ATTRS: &[&str] = &["indexing_maps", "iterator_types", "n_inputs"];

pub fn print_module(m: &Module) -> String {
    let mut out = String::from("module {\n");
    for f in &m.functions {
        out.push_str(&print_function(f));
    }
    out.push_str("}\n");
    out
}

pub fn print_function(f: &Function) -> String {
    let mut p = Printer { f, names: HashMap::new(), next: 0, out: String::new() };
    p.function();
    p.out
}

fn type_list(ts: &[Type]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

struct Printer<'a> {
    f: &'a Function,
    names: HashMap<ValueId, usize>,
    next: usize,
    out: String,
}

impl Printer<'_> {
    fn name(&mut self, v: ValueId) -> String {
        if let Some(n) = self.names.get(&v) {
            return format!("%{n}");
        }
        // Use before definition (invalid IR): still print deterministically.
        let n = self.define(v);
        format!("%{n}")
    }

    fn define(&mut self, v: ValueId) -> usize {
        let n = self.next;
        self.names.insert(v, n);
        self.next += 1;
        n
    }

    fn function(&mut self) {
        let f = self.f;
        let mut args = Vec::new();
        for (i, &a) in f.args().iter().enumerate() {
            let n = self.define(a);
            let mut s = format!("%{n}: {}", f.ty(a));
            if let Some(Some(ann)) = f.annotations.get(i) {
                write!(s, " {{bufferize = {}}}", ann.name()).unwrap();
            }
            args.push(s);
        }
        write!(self.out, "  func @{}({})", f.name, args.join(", ")).unwrap();
        if !f.result_types.is_empty() {
            write!(self.out, " -> ({})", type_list(&f.result_types)).unwrap();
        }
        if !f.attrs.is_empty() {
            write!(self.out, " {}", format_attr_dict(&f.attrs)).unwrap();
        }
        self.out.push_str(" {\n");
        self.block_ops(f.body, 2);
        self.out.push_str("  }\n");
    }

    fn block_ops(&mut self, b: BlockId, depth: usize) {
        for &op in &self.f.block(b).ops.clone() {
            self.op(op, depth);
        }
    }

    fn op(&mut self, op: OpId, depth: usize) {
        let f = self.f;
        let d = f.op(op);
        let indent = "  ".repeat(depth);
        let named = is_named_structured(&d.name);
        let mut line = indent.clone();
        if !d.results.is_empty() {
            let rs: Vec<String> = d.results.iter().map(|&r| format!("%{}", self.define(r))).collect();
            write!(line, "{} = ", rs.join(", ")).unwrap();
        }
        let operands: Vec<String> = d.operands.iter().map(|&v| self.name(v)).collect();
        write!(line, "{}({})", d.name, operands.join(", ")).unwrap();
        let attrs: AttrMap = if named {
            d.attrs
                .iter()
                .filter(|(k, _)| !DERIVED_STRUCTURED_ATTRS.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        } else {
            d.attrs.clone()
        };
        if !attrs.is_empty() {
            write!(line, " {}", format_attr_dict(&attrs)).unwrap();
        }
        let sig = {
            let ins: Vec<Type> = d.operands.iter().map(|&v| f.ty(v).clone()).collect();
            let outs: Vec<Type> = d.results.iter().map(|&v| f.ty(v).clone()).collect();
            let out = match outs.len() {
                0 => "()".to_string(),
                1 => outs[0].to_string(),
                _ => format!("({})", type_list(&outs)),
            };
            format!("({}) -> {}", type_list(&ins), out)
        };
        if named || d.regions.is_empty() {
            writeln!(line, " : {sig}").unwrap();
            self.out.push_str(&line);
            return;
        }
        line.push_str(" (");
        self.out.push_str(&line);
        for (i, &r) in d.regions.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.out.push_str("{\n");
            let args: Vec<String> = f
                .block(r)
                .args
                .clone()
                .into_iter()
                .map(|a| format!("%{}: {}", self.define(a), f.ty(a)))
                .collect();
            writeln!(self.out, "{indent}  ^bb({}):", args.join(", ")).unwrap();
            self.block_ops(r, depth + 1);
            write!(self.out, "{indent}}}").unwrap();
        }
        writeln!(self.out, ") : {sig}").unwrap();
    }
}
