use std::collections::BTreeMap;
use std::fmt;

use super::affine::IndexingMap;
use super::types::Type;

/// Closed attribute set. Floats compare bitwise so structural equality is exact.
#[derive(Debug, Clone)]
pub enum Attr {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Ints(Vec<i64>),
    Maps(Vec<IndexingMap>),
    Type(Type),
}

impl PartialEq for Attr {
    fn eq(&self, other: &Self) -> bool {
        use Attr::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => a.to_bits() == b.to_bits(),
            (Bool(a), Bool(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            (Ints(a), Ints(b)) => a == b,
            (Maps(a), Maps(b)) => a == b,
            (Type(a), Type(b)) => a == b,
            _ => false,
        }
    }
}

impl Attr {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Attr::Int(v) => Some(*v),
            _ => None,
        }
    }
    pub fn as_float(&self) -> Option<f64> {
        match self {
            Attr::Float(v) => Some(*v),
            Attr::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Attr::Bool(v) => Some(*v),
            _ => None,
        }
    }
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Attr::Str(v) => Some(v),
            _ => None,
        }
    }
    pub fn as_ints(&self) -> Option<&[i64]> {
        match self {
            Attr::Ints(v) => Some(v),
            _ => None,
        }
    }
    pub fn as_maps(&self) -> Option<&[IndexingMap]> {
        match self {
            Attr::Maps(v) => Some(v),
            _ => None,
        }
    }
    pub fn as_type(&self) -> Option<&Type> {
        match self {
            Attr::Type(v) => Some(v),
            _ => None,
        }
    }
}

pub fn format_float(v: f64) -> String {
    // `{:?}` always keeps a `.` or exponent, so floats never re-parse as ints.
    format!("{v:?}")
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attr::Int(v) => write!(f, "{v}"),
            Attr::Float(v) => f.write_str(&format_float(*v)),
            Attr::Bool(v) => write!(f, "{v}"),
            Attr::Str(s) => write!(f, "\"{s}\""),
            Attr::Ints(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(","))
            }
            Attr::Maps(ms) => {
                let parts: Vec<String> = ms.iter().map(|m| m.to_string()).collect();
                write!(f, "affine_maps<{}>", parts.join("; "))
            }
            Attr::Type(t) => write!(f, "type({t})"),
        }
    }
}

pub type AttrMap = BTreeMap<String, Attr>;

pub fn format_attr_dict(attrs: &AttrMap) -> String {
    let parts: Vec<String> = attrs.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    format!("{{{}}}", parts.join(", "))
}
