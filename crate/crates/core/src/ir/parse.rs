//! Recursive-descent parser for the canonical textual form.

use std::collections::HashMap;

use super::affine::{IndexExpr, IndexingMap};
use super::attr::{Attr, AttrMap};
use super::func::{ArgAnnotation, BlockId, Function, Module, ValueDef, ValueId};
use super::ops::{is_named_structured, is_registered};
use super::types::{Dim, ElemType, Layout, ShapedKind, Type};
use crate::error::{Error, Result};

pub fn parse_module(text: &str) -> Result<Module> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let m = p.module()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input after module"));
    }
    Ok(m)
}

/// Parses a standalone type such as `tensor<2x?xf32>`.
pub fn parse_type(text: &str) -> Result<Type> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let t = p.ty()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input after type"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

struct Scope {
    names: HashMap<String, ValueId>,
    pending: HashMap<ValueId, Option<ValueId>>,
    /// Source offset of the first use of each pending value.
    first_use: HashMap<ValueId, usize>,
}

impl<'a> Parser<'a> {
    fn line_col(&self) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for &c in &self.src[..self.pos.min(self.src.len())] {
            if c == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.line_col();
        Error::Parse { line, col, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() {
                self.pos += 1;
            } else if c == b'/' && self.src.get(self.pos + 1) == Some(&b'/') {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn peek_str(&mut self, s: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.peek_str(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self.src.get(self.pos).map(|&c| (c as char).to_string()).unwrap_or("end of input".into());
            Err(self.err(format!("expected '{s}', found '{found}'")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(self.err("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn int(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        s.parse().map_err(|_| {
            self.pos = start;
            self.err("expected integer")
        })
    }

    fn module(&mut self) -> Result<Module> {
        self.expect("module")?;
        self.expect("{")?;
        let mut m = Module::new();
        while !self.eat("}") {
            if self.peek().is_none() {
                return Err(self.err("unbalanced braces: missing '}' closing module"));
            }
            m.functions.push(self.function()?);
        }
        Ok(m)
    }

    fn value_name(&mut self) -> Result<String> {
        self.expect("%")?;
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected value name"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn function(&mut self) -> Result<Function> {
        self.expect("func")?;
        self.expect("@")?;
        let name = self.ident()?;
        self.expect("(")?;
        let mut arg_names = Vec::new();
        let mut arg_types = Vec::new();
        let mut anns = Vec::new();
        if !self.eat(")") {
            loop {
                arg_names.push(self.value_name()?);
                self.expect(":")?;
                arg_types.push(self.ty()?);
                let mut ann = None;
                if self.eat("{") {
                    self.expect("bufferize")?;
                    self.expect("=")?;
                    ann = Some(match self.ident()?.as_str() {
                        "in" => ArgAnnotation::In,
                        "out" => ArgAnnotation::Out,
                        other => return Err(self.err(format!("unknown bufferize annotation '{other}'"))),
                    });
                    self.expect("}")?;
                }
                anns.push(ann);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        let mut results = Vec::new();
        if self.eat("->") {
            self.expect("(")?;
            results = self.type_list_until(")")?;
        }
        let mut f = Function::new(&name, arg_types, results);
        f.annotations = anns;
        if self.is_attr_dict_start() {
            f.attrs = self.attr_dict()?;
        }
        let mut scope = Scope { names: HashMap::new(), pending: HashMap::new(), first_use: HashMap::new() };
        for (n, &a) in arg_names.iter().zip(f.args().to_vec().iter()) {
            scope.names.insert(n.clone(), a);
        }
        self.expect("{")?;
        let body = f.body;
        self.ops_until_close(&mut f, body, &mut scope)?;
        self.resolve_pending(&mut f, &scope)?;
        Ok(f)
    }

    fn resolve_pending(&mut self, f: &mut Function, scope: &Scope) -> Result<()> {
        let mut pending: Vec<_> = scope.pending.iter().collect();
        pending.sort_by_key(|(p, _)| scope.first_use[p]);
        for (&p, target) in pending {
            let Some(t) = target else {
                let name = scope.names.iter().find(|(_, &v)| v == p).map(|(n, _)| n.as_str()).unwrap_or("?");
                self.pos = scope.first_use[&p];
                return Err(self.err(format!("use of undefined value %{name}")));
            };
            for op in f.ops.iter_mut() {
                for o in op.operands.iter_mut() {
                    if *o == p {
                        *o = *t;
                    }
                }
            }
        }
        Ok(())
    }

    /// `{` followed by `ident =` starts an attribute dictionary.
    fn is_attr_dict_start(&mut self) -> bool {
        if !self.peek_str("{") {
            return false;
        }
        let save = self.pos;
        self.pos += 1;
        let ok = match self.ident() {
            Ok(_) => self.peek_str("="),
            Err(_) => self.peek_str("}"),
        };
        self.pos = save;
        ok
    }

    fn ops_until_close(&mut self, f: &mut Function, block: BlockId, scope: &mut Scope) -> Result<()> {
        loop {
            match self.peek() {
                None => return Err(self.err("unbalanced braces: missing '}' closing region")),
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => self.op(f, block, scope)?,
            }
        }
    }

    fn use_value(&mut self, f: &mut Function, scope: &mut Scope, name: &str, ty: &Type) -> Result<ValueId> {
        if let Some(&v) = scope.names.get(name) {
            if f.ty(v) != ty {
                return Err(self.err(format!(
                    "type mismatch for %{name}: declared {} but used as {ty}",
                    f.ty(v)
                )));
            }
            return Ok(v);
        }
        let v = f.new_value(ty.clone(), ValueDef::Pending);
        scope.names.insert(name.to_string(), v);
        scope.pending.insert(v, None);
        scope.first_use.insert(v, self.pos);
        Ok(v)
    }

    fn define_value(&mut self, f: &mut Function, scope: &mut Scope, name: &str, v: ValueId) -> Result<()> {
        if let Some(&old) = scope.names.get(name) {
            match scope.pending.get_mut(&old) {
                Some(slot @ None) => {
                    if f.ty(old) != f.ty(v) {
                        return Err(self.err(format!("type mismatch for %{name}")));
                    }
                    *slot = Some(v);
                }
                _ => return Err(self.err(format!("redefinition of %{name}"))),
            }
        }
        scope.names.insert(name.to_string(), v);
        Ok(())
    }

    fn op(&mut self, f: &mut Function, block: BlockId, scope: &mut Scope) -> Result<()> {
        let mut result_names = Vec::new();
        if self.peek() == Some(b'%') {
            loop {
                result_names.push(self.value_name()?);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("=")?;
        }
        self.skip_ws();
        let op_start = self.pos;
        let name = self.ident()?;
        if !is_registered(&name) {
            self.pos = op_start;
            return Err(self.err(format!("unknown op '{name}'")));
        }
        self.expect("(")?;
        let mut operand_names = Vec::new();
        if !self.eat(")") {
            loop {
                operand_names.push(self.value_name()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        let attrs = if self.is_attr_dict_start() { self.attr_dict()? } else { AttrMap::new() };
        // Regions are parsed before the signature is known; operands are resolved afterwards.
        let mut regions = Vec::new();
        if self.eat("(") {
            loop {
                self.expect("{")?;
                self.expect("^bb")?;
                self.expect("(")?;
                let mut names = Vec::new();
                let mut types = Vec::new();
                if !self.eat(")") {
                    loop {
                        names.push(self.value_name()?);
                        self.expect(":")?;
                        types.push(self.ty()?);
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                self.expect(":")?;
                let b = f.new_block(types);
                for (n, a) in names.iter().zip(f.block(b).args.clone()) {
                    self.define_value(f, scope, n, a)?;
                }
                self.ops_until_close(f, b, scope)?;
                regions.push(b);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect(":")?;
        self.expect("(")?;
        let in_types = self.type_list_until(")")?;
        self.expect("->")?;
        let out_types = if self.eat("(") { self.type_list_until(")")? } else { vec![self.ty()?] };
        if in_types.len() != operand_names.len() {
            return Err(self.err(format!(
                "'{name}' has {} operands but signature lists {}",
                operand_names.len(),
                in_types.len()
            )));
        }
        if out_types.len() != result_names.len() {
            return Err(self.err(format!(
                "'{name}' has {} results but signature lists {}",
                result_names.len(),
                out_types.len()
            )));
        }
        let mut operands = Vec::new();
        for (n, t) in operand_names.iter().zip(&in_types) {
            operands.push(self.use_value(f, scope, n, t)?);
        }
        let op = f.create_op(&name, operands, out_types, attrs, regions);
        if is_named_structured(&name) {
            crate::structured::named::materialize_named(f, op).map_err(|e| self.err(e.to_string()))?;
        }
        f.append_op(block, op);
        for (n, r) in result_names.iter().zip(f.op(op).results.clone()) {
            self.define_value(f, scope, n, r)?;
        }
        Ok(())
    }

    fn type_list_until(&mut self, close: &str) -> Result<Vec<Type>> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.ty()?);
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn ty(&mut self) -> Result<Type> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident()?;
        if let Some(e) = ElemType::from_name(&name) {
            return Ok(Type::Scalar(e));
        }
        let kind = match name.as_str() {
            "tensor" => ShapedKind::Tensor,
            "memref" => ShapedKind::Memref,
            "vector" => ShapedKind::Vector,
            _ => {
                self.pos = start;
                return Err(self.err(format!("unknown type '{name}'")));
            }
        };
        self.expect("<")?;
        let mut dims = Vec::new();
        let elem = loop {
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b'?') => {
                    self.pos += 1;
                    dims.push(Dim::Dynamic);
                    self.expect("x")?;
                }
                Some(c) if c.is_ascii_digit() => {
                    let n = self.int()?;
                    dims.push(Dim::Static(n));
                    if self.src.get(self.pos) != Some(&b'x') {
                        return Err(self.err("expected 'x' after dimension"));
                    }
                    self.pos += 1;
                }
                _ => {
                    let e = self.ident()?;
                    break ElemType::from_name(&e).ok_or_else(|| self.err(format!("unknown element type '{e}'")))?;
                }
            }
        };
        let mut layout = None;
        if kind == ShapedKind::Memref && self.eat(",") {
            self.expect("strides:[")?;
            let mut strides = Vec::new();
            if !self.eat("]") {
                loop {
                    strides.push(self.opt_int()?);
                    if self.eat("]") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
            self.expect(",")?;
            self.expect("offset:")?;
            let offset = self.opt_int()?;
            layout = Some(Layout { offset, strides });
        }
        self.expect(">")?;
        if kind == ShapedKind::Vector && dims.iter().any(|d| d.is_dynamic()) {
            return Err(self.err("vector dims must be static"));
        }
        Ok(Type::Shaped { kind, dims, elem, layout })
    }

    fn opt_int(&mut self) -> Result<Option<i64>> {
        if self.eat("?") {
            Ok(None)
        } else {
            Ok(Some(self.int()?))
        }
    }

    fn attr_dict(&mut self) -> Result<AttrMap> {
        self.expect("{")?;
        let mut m = AttrMap::new();
        if self.eat("}") {
            return Ok(m);
        }
        loop {
            let k = self.ident()?;
            self.expect("=")?;
            let v = self.attr_value()?;
            m.insert(k, v);
            if self.eat("}") {
                return Ok(m);
            }
            self.expect(",")?;
        }
    }

    fn attr_value(&mut self) -> Result<Attr> {
        match self.peek() {
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos] != b'"' {
                    self.pos += 1;
                }
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.expect("\"")?;
                Ok(Attr::Str(s))
            }
            Some(b'[') => {
                self.pos += 1;
                let mut v = Vec::new();
                if !self.eat("]") {
                    loop {
                        v.push(self.int()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Attr::Ints(v))
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => self.number(),
            _ => {
                if self.eat("true") {
                    return Ok(Attr::Bool(true));
                }
                if self.eat("false") {
                    return Ok(Attr::Bool(false));
                }
                if self.eat("affine_maps<") {
                    let mut maps = Vec::new();
                    loop {
                        maps.push(self.affine_map()?);
                        if self.eat(">") {
                            break;
                        }
                        self.expect(";")?;
                    }
                    return Ok(Attr::Maps(maps));
                }
                if self.eat("type(") {
                    let t = self.ty()?;
                    self.expect(")")?;
                    return Ok(Attr::Type(t));
                }
                Err(self.err("expected attribute value"))
            }
        }
    }

    fn number(&mut self) -> Result<Attr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_alphanumeric() || c == b'.' || c == b'-' || c == b'+' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
            s.parse::<f64>().map(Attr::Float).map_err(|_| self.err(format!("bad float '{s}'")))
        } else {
            s.parse::<i64>().map(Attr::Int).map_err(|_| self.err(format!("bad integer '{s}'")))
        }
    }

    fn affine_map(&mut self) -> Result<IndexingMap> {
        self.expect("(")?;
        let mut n_dims = 0;
        if !self.eat(")") {
            loop {
                self.expect("d")?;
                let d = self.int()?;
                if d as usize != n_dims {
                    return Err(self.err("affine map dims must be d0, d1, ... in order"));
                }
                n_dims += 1;
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect("->")?;
        self.expect("(")?;
        let mut results = Vec::new();
        if !self.eat(")") {
            loop {
                results.push(self.index_expr(n_dims)?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(IndexingMap::new(n_dims, results))
    }

    fn index_expr(&mut self, n_dims: usize) -> Result<IndexExpr> {
        let mut e = IndexExpr::default();
        let mut sign = if self.eat("-") { -1 } else { 1 };
        loop {
            if self.eat("d") {
                let d = self.int()? as usize;
                if d >= n_dims {
                    return Err(self.err(format!("dim d{d} out of range")));
                }
                let c = if self.eat("*") { self.int()? } else { 1 };
                e = e.add(&IndexExpr::term(d, sign * c));
            } else {
                let c = self.int()?;
                e = e.add(&IndexExpr::constant(sign * c));
            }
            if self.eat("+") {
                sign = 1;
            } else if self.eat("-") {
                sign = -1;
            } else {
                return Ok(e);
            }
        }
    }
}
