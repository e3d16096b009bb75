//! SSA-with-regions intermediate representation.

pub mod affine;
pub mod attr;
pub mod builder;
pub mod func;
pub mod ops;
pub mod parse;
pub mod print;
pub mod rewrite;
pub mod types;
pub mod verify;

pub use affine::{IndexExpr, IndexingMap};
pub use attr::{Attr, AttrMap};
pub use builder::{attrs, const_float, const_int, Builder};
pub use func::{ArgAnnotation, BlockId, Function, InsertPoint, Module, OpId, ValueDef, ValueId};
pub use parse::{parse_module, parse_type};
pub use print::{print_function, print_module};
pub use types::{Dim, ElemType, Layout, ShapedKind, Type};
pub use verify::{check_function, check_module, verify_function, verify_module, Diagnostic};
