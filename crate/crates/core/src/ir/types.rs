//! Element, shaped and scalar types.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElemType {
    F32,
    F64,
    I1,
    I8,
    I32,
    I64,
    Index,
}

impl ElemType {
    pub fn is_float(self) -> bool {
        matches!(self, ElemType::F32 | ElemType::F64)
    }

    pub fn is_int(self) -> bool {
        !self.is_float()
    }

    pub fn byte_width(self) -> usize {
        match self {
            ElemType::I1 | ElemType::I8 => 1,
            ElemType::F32 | ElemType::I32 => 4,
            ElemType::F64 | ElemType::I64 | ElemType::Index => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::F32 => "f32",
            ElemType::F64 => "f64",
            ElemType::I1 => "i1",
            ElemType::I8 => "i8",
            ElemType::I32 => "i32",
            ElemType::I64 => "i64",
            ElemType::Index => "index",
        }
    }

    pub fn from_name(s: &str) -> Option<ElemType> {
        Some(match s {
            "f32" => ElemType::F32,
            "f64" => ElemType::F64,
            "i1" => ElemType::I1,
            "i8" => ElemType::I8,
            "i32" => ElemType::I32,
            "i64" => ElemType::I64,
            "index" => ElemType::Index,
            _ => return None,
        })
    }
}

impl fmt::Display for ElemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A dimension size, static or dynamic (`?`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    Static(i64),
    Dynamic,
}

impl Dim {
    pub fn as_static(self) -> Option<i64> {
        match self {
            Dim::Static(n) => Some(n),
            Dim::Dynamic => None,
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, Dim::Dynamic)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Static(n) => write!(f, "{n}"),
            Dim::Dynamic => f.write_str("?"),
        }
    }
}

/// Strided memref layout. `None` entries are dynamic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    pub offset: Option<i64>,
    pub strides: Vec<Option<i64>>,
}

impl Layout {
    /// Row-major layout for a fully static shape; dynamic strides past a dynamic dim.
    pub fn identity(dims: &[Dim]) -> Layout {
        let mut strides = vec![Some(1); dims.len()];
        let mut acc = Some(1i64);
        for d in (0..dims.len()).rev() {
            strides[d] = acc;
            acc = match (acc, dims[d]) {
                (Some(a), Dim::Static(n)) => Some(a * n),
                _ => None,
            };
        }
        Layout { offset: Some(0), strides }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapedKind {
    Tensor,
    Memref,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Scalar(ElemType),
    Shaped {
        kind: ShapedKind,
        dims: Vec<Dim>,
        elem: ElemType,
        layout: Option<Layout>,
    },
}

impl Type {
    pub fn scalar(e: ElemType) -> Type {
        Type::Scalar(e)
    }

    pub fn index() -> Type {
        Type::Scalar(ElemType::Index)
    }

    pub fn tensor(dims: Vec<Dim>, elem: ElemType) -> Type {
        Type::Shaped { kind: ShapedKind::Tensor, dims, elem, layout: None }
    }

    pub fn static_tensor(shape: &[i64], elem: ElemType) -> Type {
        Type::tensor(shape.iter().map(|&n| Dim::Static(n)).collect(), elem)
    }

    pub fn vector(shape: &[i64], elem: ElemType) -> Type {
        Type::Shaped {
            kind: ShapedKind::Vector,
            dims: shape.iter().map(|&n| Dim::Static(n)).collect(),
            elem,
            layout: None,
        }
    }

    pub fn memref(dims: Vec<Dim>, elem: ElemType, layout: Option<Layout>) -> Type {
        Type::Shaped { kind: ShapedKind::Memref, dims, elem, layout }
    }

    pub fn elem(&self) -> ElemType {
        match self {
            Type::Scalar(e) => *e,
            Type::Shaped { elem, .. } => *elem,
        }
    }

    pub fn kind(&self) -> Option<ShapedKind> {
        match self {
            Type::Scalar(_) => None,
            Type::Shaped { kind, .. } => Some(*kind),
        }
    }

    pub fn is_tensor(&self) -> bool {
        self.kind() == Some(ShapedKind::Tensor)
    }

    pub fn is_memref(&self) -> bool {
        self.kind() == Some(ShapedKind::Memref)
    }

    pub fn is_vector(&self) -> bool {
        self.kind() == Some(ShapedKind::Vector)
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Type::Scalar(_))
    }

    pub fn is_index(&self) -> bool {
        matches!(self, Type::Scalar(ElemType::Index))
    }

    pub fn dims(&self) -> &[Dim] {
        match self {
            Type::Scalar(_) => &[],
            Type::Shaped { dims, .. } => dims,
        }
    }

    pub fn rank(&self) -> usize {
        self.dims().len()
    }

    /// All dims static; scalars count as static.
    pub fn static_shape(&self) -> Option<Vec<i64>> {
        self.dims().iter().map(|d| d.as_static()).collect()
    }

    pub fn has_static_shape(&self) -> bool {
        self.dims().iter().all(|d| !d.is_dynamic())
    }

    pub fn layout(&self) -> Option<&Layout> {
        match self {
            Type::Shaped { layout, .. } => layout.as_ref(),
            _ => None,
        }
    }

    pub fn with_dims(&self, new_dims: Vec<Dim>) -> Type {
        match self {
            Type::Scalar(e) => Type::Scalar(*e),
            Type::Shaped { kind, elem, layout, .. } => Type::Shaped {
                kind: *kind,
                dims: new_dims,
                elem: *elem,
                layout: layout.clone(),
            },
        }
    }

    pub fn with_kind(&self, kind: ShapedKind) -> Type {
        Type::Shaped { kind, dims: self.dims().to_vec(), elem: self.elem(), layout: None }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Scalar(e) => write!(f, "{e}"),
            Type::Shaped { kind, dims, elem, layout } => {
                let name = match kind {
                    ShapedKind::Tensor => "tensor",
                    ShapedKind::Memref => "memref",
                    ShapedKind::Vector => "vector",
                };
                write!(f, "{name}<")?;
                for d in dims {
                    write!(f, "{d}x")?;
                }
                write!(f, "{elem}")?;
                if let Some(l) = layout {
                    let opt = |v: &Option<i64>| v.map_or("?".to_string(), |n| n.to_string());
                    let strides: Vec<String> = l.strides.iter().map(opt).collect();
                    write!(f, ", strides:[{}], offset:{}", strides.join(","), opt(&l.offset))?;
                }
                write!(f, ">")
            }
        }
    }
}
