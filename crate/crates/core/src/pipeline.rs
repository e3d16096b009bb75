//! Textual transformation pipelines: `pass{key=value, key=[..]},pass2,...`.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::interp::{diff_check, run_function, Dense, DiffReport, Policy};
use crate::ir::ops::is_structured;
use crate::ir::{verify_function, Function, Module};
use crate::transforms::{
    bufferize, canonicalize, hoist_padding, lower_vectors, pad_operands, tile_op, unroll_loop, unroll_vectors, vectorize,
    AnalysisOrder, ContractionLowering, LoweringStrategy, MultiReductionLowering, TileConfig, TransposeLowering,
    UnrollTarget, VectorizeOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub enum OptValue {
    Bool(bool),
    Int(i64),
    Word(String),
    Ints(Vec<i64>),
    Floats(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Bool,
    Int,
    Word,
    Ints,
    Floats,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Bool => "bool",
            Kind::Int => "int",
            Kind::Word => "name",
            Kind::Ints => "int list",
            Kind::Floats => "number list",
        }
    }
}

/// Registered passes and their options, in canonical print order.
const PASSES: &[(&str, &[(&str, Kind)])] = &[
    (
        "tile",
        &[
            ("op", Kind::Word),
            ("sizes", Kind::Ints),
            ("interchange", Kind::Ints),
            ("peel", Kind::Ints),
            ("pad", Kind::Bool),
            ("values", Kind::Floats),
            ("nofold", Kind::Ints),
            ("hoist", Kind::Ints),
        ],
    ),
    ("pad", &[("values", Kind::Floats), ("nofold", Kind::Ints), ("hoist", Kind::Ints)]),
    ("vectorize", &[("padding", Kind::Bool)]),
    ("unroll-loop", &[("op", Kind::Word), ("parent", Kind::Int), ("amount", Kind::Int)]),
    ("unroll-vector", &[("op", Kind::Word), ("source", Kind::Ints), ("target", Kind::Ints)]),
    ("bufferize", &[("order", Kind::Word)]),
    ("lower-vectors", &[("contraction", Kind::Word), ("multi_reduction", Kind::Word), ("transpose", Kind::Word)]),
    ("canonicalize", &[]),
];

fn schema(name: &str) -> Option<&'static [(&'static str, Kind)]> {
    PASSES.iter().find(|p| p.0 == name).map(|p| p.1)
}

pub fn pass_names() -> Vec<&'static str> {
    PASSES.iter().map(|p| p.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassSpec {
    pub name: String,
    /// Options in schema order.
    pub options: Vec<(String, OptValue)>,
}

impl PassSpec {
    pub fn get(&self, key: &str) -> Option<&OptValue> {
        self.options.iter().find(|o| o.0 == key).map(|o| &o.1)
    }
    fn ints(&self, key: &str) -> Option<&[i64]> {
        match self.get(key) {
            Some(OptValue::Ints(v)) => Some(v),
            _ => None,
        }
    }
    fn floats(&self, key: &str) -> Option<&[f64]> {
        match self.get(key) {
            Some(OptValue::Floats(v)) => Some(v),
            _ => None,
        }
    }
    fn word(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(OptValue::Word(v)) => Some(v),
            _ => None,
        }
    }
    fn int(&self, key: &str) -> Option<i64> {
        match self.get(key) {
            Some(OptValue::Int(v)) => Some(*v),
            _ => None,
        }
    }
    fn flag(&self, key: &str) -> bool {
        matches!(self.get(key), Some(OptValue::Bool(true)))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineSpec {
    pub passes: Vec<PassSpec>,
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for OptValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptValue::Bool(b) => write!(f, "{b}"),
            OptValue::Int(i) => write!(f, "{i}"),
            OptValue::Word(w) => write!(f, "{w}"),
            OptValue::Ints(v) => write!(f, "[{}]", join(v)),
            OptValue::Floats(v) => write!(f, "[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")),
        }
    }
}

impl fmt::Display for PassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.options.is_empty() {
            let opts: Vec<String> = self.options.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "{{{}}}", opts.join(", "))?;
        }
        Ok(())
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", join(&self.passes))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Raw {
    Atom(String),
    List(Vec<String>),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Lexer<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: 1, col: self.pos + 1, msg: msg.into() })
    }
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }
    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }
    fn word(&mut self, what: &str) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && matches!(self.src[self.pos], b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_' | b'-' | b'.' | b'+') {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(format!("expected {what}"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }
    fn value(&mut self) -> Result<Raw> {
        if !self.eat(b'[') {
            return Ok(Raw::Atom(self.word("option value")?));
        }
        let mut items = Vec::new();
        if !self.eat(b']') {
            loop {
                items.push(self.word("list element")?);
                if self.eat(b']') {
                    break;
                }
                self.expect(b',')?;
            }
        }
        Ok(Raw::List(items))
    }
}

fn typed(pass: &str, key: &str, kind: Kind, raw: Raw) -> Result<OptValue> {
    let bad = || Error::Pipeline(format!("option '{key}' of pass '{pass}' expects a {}", kind.name()));
    let int = |s: &str| s.parse::<i64>().map_err(|_| bad());
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad());
    Ok(match (kind, raw) {
        (Kind::Bool, Raw::Atom(s)) => OptValue::Bool(s.parse().map_err(|_| bad())?),
        (Kind::Int, Raw::Atom(s)) => OptValue::Int(int(&s)?),
        (Kind::Word, Raw::Atom(s)) if s.starts_with(|c: char| c.is_ascii_alphabetic()) => OptValue::Word(s),
        (Kind::Ints, Raw::List(v)) => OptValue::Ints(v.iter().map(|s| int(s)).collect::<Result<_>>()?),
        (Kind::Floats, Raw::List(v)) => OptValue::Floats(v.iter().map(|s| float(s)).collect::<Result<_>>()?),
        _ => return Err(bad()),
    })
}

pub fn parse_pipeline(text: &str) -> Result<PipelineSpec> {
    let mut lx = Lexer { src: text.as_bytes(), pos: 0 };
    let mut passes = Vec::new();
    if lx.peek().is_none() {
        return Ok(PipelineSpec { passes });
    }
    loop {
        let at = lx.pos;
        let name = lx.word("pass name")?;
        let Some(sch) = schema(&name) else {
            return Err(Error::Pipeline(format!("unknown pass '{name}' at column {}; valid passes: {}", at + 1, pass_names().join(", "))));
        };
        let mut given: Vec<(String, Raw)> = Vec::new();
        if lx.eat(b'{') && !lx.eat(b'}') {
            loop {
                let key = lx.word("option name")?;
                if !sch.iter().any(|o| o.0 == key) {
                    let valid: Vec<&str> = sch.iter().map(|o| o.0).collect();
                    return Err(Error::Pipeline(format!(
                        "unknown option '{key}' for pass '{name}'; valid options: {}",
                        if valid.is_empty() { "none".to_string() } else { valid.join(", ") }
                    )));
                }
                if given.iter().any(|g| g.0 == key) {
                    return lx.err(format!("duplicate option '{key}'"));
                }
                lx.expect(b'=')?;
                given.push((key, lx.value()?));
                if lx.eat(b'}') {
                    break;
                }
                lx.expect(b',')?;
            }
        }
        let mut options = Vec::new();
        for &(key, kind) in sch {
            if let Some(pos) = given.iter().position(|g| g.0 == key) {
                let raw = given.remove(pos).1;
                options.push((key.to_string(), typed(&name, key, kind, raw)?));
            }
        }
        passes.push(PassSpec { name, options });
        match lx.peek() {
            None => break,
            Some(b',') => lx.pos += 1,
            Some(c) => return lx.err(format!("unexpected '{}'", c as char)),
        }
    }
    Ok(PipelineSpec { passes })
}

fn stage_err(stage: usize, pass: &PassSpec, e: Error) -> Error {
    Error::Pipeline(format!("stage {stage} ({pass}): {e}"))
}

/// Structured ops not yet nested in a loop, optionally filtered by name.
fn untiled_ops(f: &Function, name: Option<&str>) -> Vec<crate::ir::OpId> {
    f.walk()
        .into_iter()
        .filter(|&o| {
            let d = f.op(o);
            is_structured(&d.name) && f.enclosing_loops(o).is_empty() && name.is_none_or(|n| d.name == n)
        })
        .collect()
}

fn pad_and_hoist(f: &mut Function, op: crate::ir::OpId, p: &PassSpec) -> Result<()> {
    let n = f.op(op).operands.len();
    let values = p.floats("values").map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut nofold = vec![false; n];
    for &k in p.ints("nofold").unwrap_or(&[]) {
        match nofold.get_mut(k as usize) {
            Some(slot) => *slot = true,
            None => return Err(Error::Pipeline(format!("nofold operand {k} out of range"))),
        }
    }
    let pads = pad_operands(f, op, &values, &nofold)?;
    for (k, &depth) in p.ints("hoist").unwrap_or(&[]).iter().enumerate() {
        if depth > 0 {
            if let Some(Some(pad)) = pads.get(k) {
                hoist_padding(f, *pad, depth as usize)?;
            }
        }
    }
    Ok(())
}

fn strategy(p: &PassSpec) -> Result<LoweringStrategy> {
    let mut s = LoweringStrategy::default();
    if let Some(w) = p.word("contraction") {
        s.contraction = ContractionLowering::parse(w)?;
    }
    if let Some(w) = p.word("multi_reduction") {
        s.multi_reduction = MultiReductionLowering::parse(w)?;
    }
    if let Some(w) = p.word("transpose") {
        s.transpose = TransposeLowering::parse(w)?;
    }
    Ok(s)
}

/// Applies one pass to one function.
pub fn apply_pass(f: &mut Function, p: &PassSpec) -> Result<()> {
    match p.name.as_str() {
        "tile" => {
            let Some(sizes) = p.ints("sizes") else { return Err(Error::Pipeline("tile requires 'sizes'".into())) };
            let cfg = TileConfig {
                sizes: sizes.to_vec(),
                interchange: p.ints("interchange").unwrap_or(&[]).iter().map(|&i| i as usize).collect(),
                peel: p.ints("peel").unwrap_or(&[]).iter().map(|&i| i as usize).collect(),
                pad: p.flag("pad"),
            };
            for op in untiled_ops(f, p.word("op")) {
                let nest = tile_op(f, op, &cfg)?;
                if cfg.pad {
                    pad_and_hoist(f, nest.inner, p)?;
                }
            }
        }
        "pad" => {
            let tiled: Vec<_> = f.walk().into_iter().filter(|&o| f.op(o).ints_attr("tile_sizes").is_some()).collect();
            for op in tiled {
                pad_and_hoist(f, op, p)?;
            }
        }
        "vectorize" => {
            vectorize(f, VectorizeOptions { vectorize_padding: p.flag("padding") })?;
        }
        "unroll-loop" => {
            let anchor = p.word("op").unwrap_or("vector.contract");
            let parent = p.int("parent").unwrap_or(1);
            let amount = p.int("amount").unwrap_or(2);
            if parent < 1 || amount < 1 {
                return Err(Error::Pipeline("unroll-loop needs parent >= 1 and amount >= 1".into()));
            }
            let mut loops = BTreeSet::new();
            for op in f.find_ops(anchor) {
                let enclosing = f.enclosing_loops(op);
                match enclosing.get(parent as usize - 1) {
                    Some(&l) => loops.insert(l),
                    None => return Err(Error::Pipeline(format!("'{anchor}' has no parent loop {parent}"))),
                };
            }
            for l in loops {
                unroll_loop(f, l, amount)?;
            }
        }
        "unroll-vector" => {
            let t = UnrollTarget {
                op: p.word("op").unwrap_or("contract").to_string(),
                source: p.ints("source").map(|s| s.to_vec()),
                target: p.ints("target").ok_or_else(|| Error::Pipeline("unroll-vector requires 'target'".into()))?.to_vec(),
            };
            unroll_vectors(f, &t)?;
        }
        "bufferize" => {
            let order = match p.word("order") {
                Some(w) => AnalysisOrder::parse(w).ok_or_else(|| Error::Pipeline(format!("unknown analysis order '{w}'; valid: forward, reverse")))?,
                None => AnalysisOrder::default(),
            };
            bufferize(f, order)?;
        }
        "lower-vectors" => lower_vectors(f, strategy(p)?)?,
        "canonicalize" => {
            canonicalize(f)?;
        }
        other => return Err(Error::Pipeline(format!("unknown pass '{other}'"))),
    }
    Ok(())
}

/// One pipeline stage: stage 0 is the input, stage `i` follows pass `i - 1`.
#[derive(Debug, Clone)]
pub struct Stage {
    pub label: String,
    pub module: Module,
}

/// Runs every pass over every function. Each stage is verified; with `checkpoints` all stages are kept.
pub fn run_pipeline(m: &Module, spec: &PipelineSpec, checkpoints: bool) -> Result<(Module, Vec<Stage>)> {
    let mut cur = m.clone();
    let mut stages = Vec::new();
    if checkpoints {
        stages.push(Stage { label: "input".into(), module: cur.clone() });
    }
    for (i, p) in spec.passes.iter().enumerate() {
        for f in &mut cur.functions {
            apply_pass(f, p).map_err(|e| stage_err(i, p, e))?;
            let diags = verify_function(f);
            if let Some(d) = diags.first() {
                return Err(stage_err(i, p, Error::Verify(d.to_string())));
            }
        }
        if checkpoints {
            stages.push(Stage { label: p.to_string(), module: cur.clone() });
        }
    }
    Ok((cur, stages))
}

/// Differential result of one stage against stage 0.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: usize,
    pub label: String,
    /// One report per function result, or the execution error.
    pub outcome: std::result::Result<Vec<DiffReport>, String>,
}

impl StageReport {
    pub fn pass(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.iter().all(|d| d.pass))
    }
}

/// Exact comparison for integer payloads, relative tolerance `tol` for floats.
pub fn policy_for(d: &Dense, tol: f64) -> Policy {
    if d.elem.is_float() {
        Policy::RelTol(tol)
    } else {
        Policy::Exact
    }
}

/// Runs function `name` of every stage on `inputs` and compares each against stage 0.
///
/// Stages are interpreted on separate threads; reports come back in stage order.
pub fn check_stages(stages: &[Stage], name: &str, inputs: &[Dense], tol: f64) -> Result<Vec<StageReport>> {
    let run = |s: &Stage| -> Result<Vec<Dense>> {
        let f = s.module.function(name).ok_or_else(|| Error::Runtime(format!("no function @{name}")))?;
        run_function(f, inputs, None)
    };
    let outputs: Vec<Result<Vec<Dense>>> =
        std::thread::scope(|sc| stages.iter().map(|s| sc.spawn(move || run(s))).collect::<Vec<_>>().into_iter().map(|h| h.join().unwrap()).collect());
    let mut it = outputs.into_iter();
    let Some(reference) = it.next() else { return Ok(Vec::new()) };
    let reference = reference?;
    Ok(it
        .zip(stages.iter().enumerate().skip(1))
        .map(|(out, (i, s))| StageReport {
            stage: i,
            label: s.label.clone(),
            outcome: match out {
                Ok(got) if got.len() == reference.len() => Ok(got.iter().zip(&reference).map(|(g, r)| diff_check(g, r, policy_for(r, tol))).collect()),
                Ok(got) => Err(format!("{} results, expected {}", got.len(), reference.len())),
                Err(e) => Err(e.to_string()),
            },
        })
        .collect())
}
