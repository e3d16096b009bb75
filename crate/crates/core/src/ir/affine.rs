//! Integer-linear index expressions and indexing maps.

use std::collections::BTreeMap;
use std::fmt;

/// `sum(coeff * d_i) + constant` over iterator dims `d_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct IndexExpr {
    pub coeffs: BTreeMap<usize, i64>,
    pub constant: i64,
}

impl IndexExpr {
    pub fn dim(d: usize) -> Self {
        Self::term(d, 1)
    }

    pub fn term(d: usize, c: i64) -> Self {
        let mut coeffs = BTreeMap::new();
        if c != 0 {
            coeffs.insert(d, c);
        }
        IndexExpr { coeffs, constant: 0 }
    }

    pub fn constant(c: i64) -> Self {
        IndexExpr { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn add(&self, other: &IndexExpr) -> IndexExpr {
        let mut out = self.clone();
        for (&d, &c) in &other.coeffs {
            let e = out.coeffs.entry(d).or_insert(0);
            *e += c;
            if *e == 0 {
                out.coeffs.remove(&d);
            }
        }
        out.constant += other.constant;
        out
    }

    pub fn coeff(&self, d: usize) -> i64 {
        self.coeffs.get(&d).copied().unwrap_or(0)
    }

    /// The single dim this expression equals, if it is exactly `d_i`.
    pub fn as_dim(&self) -> Option<usize> {
        if self.constant != 0 || self.coeffs.len() != 1 {
            return None;
        }
        let (&d, &c) = self.coeffs.iter().next()?;
        (c == 1).then_some(d)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn eval(&self, point: &[i64]) -> i64 {
        self.constant + self.coeffs.iter().map(|(&d, &c)| c * point[d]).sum::<i64>()
    }

    /// Renames dims through `f`.
    pub fn remap(&self, f: impl Fn(usize) -> usize) -> IndexExpr {
        let mut out = IndexExpr::constant(self.constant);
        for (&d, &c) in &self.coeffs {
            out = out.add(&IndexExpr::term(f(d), c));
        }
        out
    }
}

impl fmt::Display for IndexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (&d, &c) in &self.coeffs {
            let (sign, mag) = if c < 0 { ("-", -c) } else { ("+", c) };
            if first {
                if c < 0 {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(sign)?;
            }
            write!(f, "d{d}")?;
            if mag != 1 {
                write!(f, "*{mag}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, "+{}", self.constant)
        } else if self.constant < 0 {
            write!(f, "-{}", -self.constant)
        } else {
            Ok(())
        }
    }
}

/// Maps an iteration point (`n_dims` iterators) to one subscript per result.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexingMap {
    pub n_dims: usize,
    pub results: Vec<IndexExpr>,
}

impl IndexingMap {
    pub fn new(n_dims: usize, results: Vec<IndexExpr>) -> Self {
        IndexingMap { n_dims, results }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_dims(n, &(0..n).collect::<Vec<_>>())
    }

    pub fn from_dims(n_dims: usize, dims: &[usize]) -> Self {
        IndexingMap { n_dims, results: dims.iter().map(|&d| IndexExpr::dim(d)).collect() }
    }

    /// Identity on the trailing `n_results` dims.
    pub fn minor_identity(n_dims: usize, n_results: usize) -> Self {
        Self::from_dims(n_dims, &(n_dims - n_results..n_dims).collect::<Vec<_>>())
    }

    pub fn n_results(&self) -> usize {
        self.results.len()
    }

    pub fn is_identity(&self) -> bool {
        self.results.len() == self.n_dims
            && self.results.iter().enumerate().all(|(i, e)| e.as_dim() == Some(i))
    }

    pub fn is_minor_identity(&self) -> bool {
        let k = self.results.len();
        k <= self.n_dims
            && self
                .results
                .iter()
                .enumerate()
                .all(|(i, e)| e.as_dim() == Some(self.n_dims - k + i))
    }

    /// Every result is a plain dim (no constants, no compound terms).
    pub fn result_dims(&self) -> Option<Vec<usize>> {
        self.results.iter().map(|e| e.as_dim()).collect()
    }

    /// Results are distinct dims (a projected permutation).
    pub fn is_projected_permutation(&self) -> bool {
        match self.result_dims() {
            Some(ds) => {
                let mut seen = vec![false; self.n_dims];
                ds.iter().all(|&d| !std::mem::replace(&mut seen[d], true))
            }
            None => false,
        }
    }

    pub fn is_permutation(&self) -> bool {
        self.results.len() == self.n_dims && self.is_projected_permutation()
    }

    pub fn apply(&self, point: &[i64]) -> Vec<i64> {
        self.results.iter().map(|e| e.eval(point)).collect()
    }

    pub fn uses_dim(&self, d: usize) -> bool {
        self.results.iter().any(|e| e.coeff(d) != 0)
    }
}

impl fmt::Display for IndexingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = (0..self.n_dims).map(|d| format!("d{d}")).collect();
        let res: Vec<String> = self.results.iter().map(|e| e.to_string()).collect();
        write!(f, "({})->({})", dims.join(","), res.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expr_display() {
        let e = IndexExpr::term(0, 2).add(&IndexExpr::dim(3)).add(&IndexExpr::constant(-1));
        assert_eq!(e.to_string(), "d0*2+d3-1");
        assert_eq!(IndexExpr::term(1, -1).to_string(), "-d1");
        assert_eq!(IndexExpr::constant(0).to_string(), "0");
        assert_eq!(e.eval(&[3, 0, 0, 4]), 9);
    }

    #[test]
    fn map_predicates() {
        assert!(IndexingMap::identity(3).is_identity());
        let m = IndexingMap::from_dims(3, &[1, 2]);
        assert!(m.is_minor_identity());
        assert!(m.is_projected_permutation());
        assert!(!m.is_permutation());
        let t = IndexingMap::from_dims(2, &[1, 0]);
        assert!(t.is_permutation());
        assert!(!t.is_identity());
        assert_eq!(t.to_string(), "(d0,d1)->(d1,d0)");
    }
}
