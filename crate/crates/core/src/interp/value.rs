//! Runtime values of the reference interpreter.

use std::fmt;

use crate::ir::{Attr, ElemType};

/// A scalar payload; floats are kept in `f64` and rounded to the declared precision after each op.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    F(f64),
    I(i64),
}

impl Scalar {
    pub fn zero(elem: ElemType) -> Scalar {
        if elem.is_float() {
            Scalar::F(0.0)
        } else {
            Scalar::I(0)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::F(x) => x,
            Scalar::I(x) => x as f64,
        }
    }

    pub fn as_i64(self) -> i64 {
        match self {
            Scalar::F(x) => x as i64,
            Scalar::I(x) => x,
        }
    }

    pub fn from_attr(a: &Attr, elem: ElemType) -> Option<Scalar> {
        let s = match a {
            Attr::Int(i) => Scalar::I(*i),
            Attr::Float(x) => Scalar::F(*x),
            Attr::Bool(b) => Scalar::I(*b as i64),
            _ => return None,
        };
        Some(s.cast(elem))
    }

    /// Converts and rounds to `elem`.
    pub fn cast(self, elem: ElemType) -> Scalar {
        match elem {
            ElemType::F32 => Scalar::F(self.as_f64() as f32 as f64),
            ElemType::F64 => Scalar::F(self.as_f64()),
            ElemType::I1 => Scalar::I(self.as_i64() & 1),
            ElemType::I8 => Scalar::I(self.as_i64() as i8 as i64),
            ElemType::I32 => Scalar::I(self.as_i64() as i32 as i64),
            ElemType::I64 | ElemType::Index => Scalar::I(self.as_i64()),
        }
    }

    /// Bitwise equality (so `NaN == NaN` and `0.0 != -0.0`).
    pub fn same_bits(self, other: Scalar) -> bool {
        match (self, other) {
            (Scalar::F(a), Scalar::F(b)) => a.to_bits() == b.to_bits(),
            (Scalar::I(a), Scalar::I(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::F(x) => write!(f, "{x}"),
            Scalar::I(x) => write!(f, "{x}"),
        }
    }
}

/// Row-major dense array used for tensors and vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub elem: ElemType,
    pub shape: Vec<i64>,
    pub data: Vec<Scalar>,
}

pub fn num_elements(shape: &[i64]) -> usize {
    shape.iter().product::<i64>().max(0) as usize
}

pub fn row_major_strides(shape: &[i64]) -> Vec<i64> {
    let mut s = vec![1i64; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl Dense {
    pub fn splat(elem: ElemType, shape: Vec<i64>, v: Scalar) -> Dense {
        let n = num_elements(&shape);
        Dense { elem, shape, data: vec![v.cast(elem); n] }
    }

    pub fn zeros(elem: ElemType, shape: Vec<i64>) -> Dense {
        Dense::splat(elem, shape, Scalar::zero(elem))
    }

    pub fn from_f64(elem: ElemType, shape: Vec<i64>, data: &[f64]) -> Dense {
        assert_eq!(data.len(), num_elements(&shape), "payload length does not match shape");
        Dense { elem, shape, data: data.iter().map(|&x| Scalar::F(x).cast(elem)).collect() }
    }

    pub fn from_i64(elem: ElemType, shape: Vec<i64>, data: &[i64]) -> Dense {
        assert_eq!(data.len(), num_elements(&shape), "payload length does not match shape");
        Dense { elem, shape, data: data.iter().map(|&x| Scalar::I(x).cast(elem)).collect() }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn in_bounds(&self, idx: &[i64]) -> bool {
        idx.len() == self.shape.len() && idx.iter().zip(&self.shape).all(|(&i, &n)| i >= 0 && i < n)
    }

    pub fn linear(&self, idx: &[i64]) -> usize {
        let mut off = 0i64;
        for (&i, &n) in idx.iter().zip(&self.shape) {
            off = off * n + i;
        }
        off as usize
    }

    pub fn get(&self, idx: &[i64]) -> Scalar {
        self.data[self.linear(idx)]
    }

    pub fn set(&mut self, idx: &[i64], v: Scalar) {
        let l = self.linear(idx);
        self.data[l] = v.cast(self.elem);
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|s| s.as_f64()).collect()
    }

    pub fn bitwise_eq(&self, other: &Dense) -> bool {
        self.shape == other.shape && self.data.iter().zip(&other.data).all(|(a, b)| a.same_bits(*b))
    }
}

/// A strided window into an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct BufView {
    pub alloc: usize,
    pub elem: ElemType,
    pub offset: i64,
    pub shape: Vec<i64>,
    pub strides: Vec<i64>,
}

impl BufView {
    pub fn in_bounds(&self, idx: &[i64]) -> bool {
        idx.len() == self.shape.len() && idx.iter().zip(&self.shape).all(|(&i, &n)| i >= 0 && i < n)
    }

    pub fn linear(&self, idx: &[i64]) -> i64 {
        self.offset + idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum::<i64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RValue {
    Scalar(Scalar),
    Tensor(Dense),
    Vector(Dense),
    Buffer(BufView),
}

impl RValue {
    pub fn scalar(&self) -> Scalar {
        match self {
            RValue::Scalar(s) => *s,
            other => panic!("expected scalar, found {other:?}"),
        }
    }

    pub fn index(&self) -> i64 {
        self.scalar().as_i64()
    }

    pub fn dense(&self) -> &Dense {
        match self {
            RValue::Tensor(d) | RValue::Vector(d) => d,
            other => panic!("expected tensor or vector, found {other:?}"),
        }
    }

    pub fn into_dense(self) -> Dense {
        match self {
            RValue::Tensor(d) | RValue::Vector(d) => d,
            other => panic!("expected tensor or vector, found {other:?}"),
        }
    }

    pub fn buffer(&self) -> &BufView {
        match self {
            RValue::Buffer(b) => b,
            other => panic!("expected buffer, found {other:?}"),
        }
    }
}
