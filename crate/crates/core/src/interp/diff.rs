//! Comparison of interpreter results.

use std::fmt;

use super::value::Dense;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Exact,
    /// `|a - b| <= tol * max(|a|, |b|)` per element.
    RelTol(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffReport {
    pub pass: bool,
    /// Largest relative error observed.
    pub max_rel_err: f64,
    /// Multi-index of the worst element, if any element differs.
    pub worst_index: Option<Vec<i64>>,
    pub message: String,
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", if self.pass { "pass" } else { "FAIL" }, self.message)
    }
}

fn unravel(mut k: usize, shape: &[i64]) -> Vec<i64> {
    let mut idx = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        let n = shape[i].max(1) as usize;
        idx[i] = (k % n) as i64;
        k /= n;
    }
    idx
}

pub fn diff_check(a: &Dense, b: &Dense, policy: Policy) -> DiffReport {
    let fail = |message: String| DiffReport { pass: false, max_rel_err: f64::INFINITY, worst_index: None, message };
    if a.shape != b.shape {
        return fail(format!("shape mismatch {:?} vs {:?}", a.shape, b.shape));
    }
    if a.elem != b.elem {
        return fail(format!("element type mismatch {} vs {}", a.elem, b.elem));
    }
    let mut worst: Option<(usize, f64)> = None;
    let mut pass = true;
    for (k, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
        if x.same_bits(*y) {
            continue;
        }
        let (p, q) = (x.as_f64(), y.as_f64());
        let rel = if p == q { 0.0 } else { (p - q).abs() / p.abs().max(q.abs()) };
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        let ok = match policy {
            Policy::Exact => false,
            Policy::RelTol(t) => rel <= t,
        };
        pass &= ok;
        if worst.is_none_or(|(_, r)| rel > r) {
            worst = Some((k, rel));
        }
    }
    let (worst_index, max_rel_err) = match worst {
        Some((k, r)) => (Some(unravel(k, &a.shape)), r),
        None => (None, 0.0),
    };
    let message = match (&worst_index, pass) {
        (None, _) => format!("{} elements identical", a.len()),
        (Some(i), true) => format!("max relative error {max_rel_err:.3e} at {i:?}"),
        (Some(i), false) => format!(
            "max relative error {max_rel_err:.3e} at {i:?}: {} vs {}",
            a.get(i),
            b.get(i)
        ),
    };
    DiffReport { pass, max_rel_err, worst_index, message }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::ElemType;

    #[test]
    fn policies() {
        let a = Dense::from_i64(ElemType::I32, vec![2, 2], &[1, 2, 3, 4]);
        assert!(diff_check(&a, &a.clone(), Policy::Exact).pass);

        let x = Dense::from_f64(ElemType::F64, vec![3], &[1.0, 2.0, 3.0]);
        let y = Dense::from_f64(ElemType::F64, vec![3], &[1.0, 2.0 * (1.0 + 1e-9), 3.0]);
        assert!(diff_check(&x, &y, Policy::RelTol(1e-6)).pass);
        assert!(!diff_check(&x, &y, Policy::Exact).pass);

        let z = Dense::from_f64(ElemType::F64, vec![3], &[1.0, 2.0, 3.03]);
        let r = diff_check(&x, &z, Policy::RelTol(1e-6));
        assert!(!r.pass);
        assert_eq!(r.worst_index, Some(vec![2]));

        let w = Dense::from_f64(ElemType::F64, vec![1, 3], &[1.0, 2.0, 3.0]);
        assert!(!diff_check(&x, &w, Policy::Exact).pass);
    }
}
