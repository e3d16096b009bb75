//! Iteration domains of structured ops.

use super::fm::{fourier_motzkin, single_var_bounds, Inequality};
use super::StructuredView;
use crate::error::{Error, Result};
use crate::ir::{Dim, Function, IndexExpr, IndexingMap, OpId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainSize {
    Static(i64),
    /// Equal to dimension `dim` of operand `operand`.
    Dynamic { operand: usize, dim: usize },
}

impl DomainSize {
    pub fn as_static(self) -> Option<i64> {
        match self {
            DomainSize::Static(n) => Some(n),
            DomainSize::Dynamic { .. } => None,
        }
    }
}

/// Per-iterator `[0, size)` bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationDomain {
    pub sizes: Vec<DomainSize>,
}

impl IterationDomain {
    pub fn static_sizes(&self) -> Option<Vec<i64>> {
        self.sizes.iter().map(|s| s.as_static()).collect()
    }
}

/// `{0 <= map(iter) <= shape - 1}` for every operand dimension.
pub fn inequality_system(maps: &[IndexingMap], shapes: &[Vec<i64>]) -> Vec<Inequality> {
    let mut sys = Vec::new();
    for (m, shape) in maps.iter().zip(shapes) {
        for (e, &n) in m.results.iter().zip(shape) {
            sys.push(e.clone());
            let neg = IndexExpr { coeffs: e.coeffs.iter().map(|(&d, &c)| (d, -c)).collect(), constant: -e.constant };
            sys.push(neg.add(&IndexExpr::constant(n - 1)));
        }
    }
    sys
}

/// Domain sizes from concrete operand shapes via Fourier-Motzkin elimination.
pub fn domain_from_shapes(maps: &[IndexingMap], n_iters: usize, shapes: &[Vec<i64>]) -> Result<Vec<i64>> {
    let sys = inequality_system(maps, shapes);
    let mut lo = vec![0; n_iters];
    let mut hi = vec![0; n_iters];
    for i in 0..n_iters {
        let mut reduced = sys.clone();
        for j in (0..n_iters).filter(|&j| j != i) {
            reduced = fourier_motzkin(&reduced, j);
        }
        if reduced.iter().any(|e| e.is_constant() && e.constant < 0) {
            // infeasible system: empty domain
            return Ok(vec![0; n_iters]);
        }
        match single_var_bounds(&reduced, i) {
            (Some(l), Some(h)) => {
                lo[i] = l;
                hi[i] = h;
            }
            _ => return Err(Error::Transform(format!("unbounded iterator d{i}: no operand constrains it"))),
        }
    }
    if (0..n_iters).any(|i| hi[i] < lo[i]) {
        return Ok(vec![0; n_iters]);
    }
    if lo.iter().any(|&l| l != 0) {
        return Err(Error::Transform("non-rectangular domain: iterator lower bound is not 0".into()));
    }
    // The box is exactly the domain iff every corner satisfies every constraint.
    let mut corner = vec![0i64; n_iters];
    for mask in 0u64..(1 << n_iters) {
        for (i, c) in corner.iter_mut().enumerate() {
            *c = if mask >> i & 1 == 1 { hi[i] } else { lo[i] };
        }
        if sys.iter().any(|e| e.eval(&corner) < 0) {
            return Err(Error::Transform("non-rectangular domain".into()));
        }
    }
    Ok(hi.iter().map(|h| h + 1).collect())
}

pub fn derive_iteration_domain(f: &Function, op: OpId) -> Result<IterationDomain> {
    let v = StructuredView::new(f, op);
    let operands = v.operands();
    let types: Vec<_> = operands.iter().map(|&x| f.ty(x).clone()).collect();
    if let Some(shapes) = types.iter().map(|t| t.static_shape()).collect::<Option<Vec<_>>>() {
        let sizes = domain_from_shapes(&v.maps, v.n_iters(), &shapes)?;
        return Ok(IterationDomain { sizes: sizes.into_iter().map(DomainSize::Static).collect() });
    }
    // Dynamic shapes: each iterator must be pinned by some operand dimension indexed by it alone.
    let mut sizes = Vec::new();
    for i in 0..v.n_iters() {
        let mut found = None;
        for (k, (m, t)) in v.maps.iter().zip(&types).enumerate() {
            for (dim, e) in m.results.iter().enumerate() {
                if e.as_dim() != Some(i) {
                    continue;
                }
                match t.dims()[dim] {
                    Dim::Static(n) => found = Some(DomainSize::Static(n)),
                    Dim::Dynamic => {
                        if found.is_none() {
                            found = Some(DomainSize::Dynamic { operand: k, dim })
                        }
                    }
                }
            }
            if matches!(found, Some(DomainSize::Static(_))) {
                break;
            }
        }
        sizes.push(found.ok_or_else(|| Error::Transform(format!("unbounded iterator d{i}: no operand constrains it")))?);
    }
    Ok(IterationDomain { sizes })
}

/// All points of `[0, sizes)` in lexicographic order.
pub fn enumerate_domain(sizes: &[i64]) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for_each_point(sizes, |p| out.push(p.to_vec()));
    out
}

/// Visits all points of `[0, sizes)` in lexicographic order.
pub fn for_each_point(sizes: &[i64], mut visit: impl FnMut(&[i64])) {
    if sizes.iter().any(|&s| s <= 0) {
        return;
    }
    let mut p = vec![0i64; sizes.len()];
    loop {
        visit(&p);
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            p[k] += 1;
            if p[k] < sizes[k] {
                break;
            }
            p[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_enumeration() {
        assert_eq!(enumerate_domain(&[2, 2]), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert!(enumerate_domain(&[3, 0]).is_empty());
        assert_eq!(enumerate_domain(&[1, 8, 8, 3, 4]).len(), 768);
        assert_eq!(enumerate_domain(&[]), vec![Vec::<i64>::new()]);
    }
}
