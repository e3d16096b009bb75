//! JSON tensor files: `{"type": "tensor<2x3xf32>", "data": [..]}` with row-major data.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tlc::interp::Dense;
use tlc::ir::{parse_type, Type};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    #[serde(rename = "type")]
    pub ty: String,
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn to_dense(&self) -> Result<Dense> {
        let ty = parse_type(&self.ty).with_context(|| format!("bad tensor type '{}'", self.ty))?;
        let shape = if ty.is_scalar() {
            vec![]
        } else {
            match ty.static_shape() {
                Some(s) => s,
                None => bail!("tensor file type '{}' must be static", self.ty),
            }
        };
        let n: i64 = shape.iter().product();
        if self.data.len() as i64 != n {
            bail!("'{}' holds {n} elements but data has {}", self.ty, self.data.len());
        }
        Ok(Dense::from_f64(ty.elem(), shape, &self.data))
    }

    pub fn from_dense(d: &Dense) -> TensorFile {
        let ty = if d.shape.is_empty() { Type::scalar(d.elem) } else { Type::static_tensor(&d.shape, d.elem) };
        TensorFile { ty: ty.to_string(), data: d.to_f64() }
    }
}

pub fn read(path: &str) -> Result<Dense> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let file: TensorFile = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
    file.to_dense().with_context(|| path.to_string())
}
