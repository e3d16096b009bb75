//! Fourier-Motzkin elimination over integer-linear inequalities `expr >= 0`.

use num_integer::Integer;

use crate::ir::IndexExpr;

/// `expr >= 0`.
pub type Inequality = IndexExpr;

/// Divides by the gcd of all coefficients and the constant.
pub fn normalize(e: &Inequality) -> Inequality {
    let g = e.coeffs.values().chain(std::iter::once(&e.constant)).fold(0i64, |g, &c| g.gcd(&c));
    if g <= 1 {
        return e.clone();
    }
    let mut out = e.clone();
    out.constant /= g;
    for c in out.coeffs.values_mut() {
        *c /= g;
    }
    out
}

fn scale(e: &Inequality, k: i64) -> Inequality {
    let mut out = e.clone();
    out.constant *= k;
    for c in out.coeffs.values_mut() {
        *c *= k;
    }
    out
}

fn push_unique(out: &mut Vec<Inequality>, e: Inequality) {
    if !out.contains(&e) {
        out.push(e);
    }
}

/// Projects `var` out of `system`; tautologies and duplicates are dropped.
pub fn fourier_motzkin(system: &[Inequality], var: usize) -> Vec<Inequality> {
    let mut out = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for e in system {
        match e.coeff(var) {
            0 => push_unique(&mut out, normalize(e)),
            c if c > 0 => lower.push(e),
            _ => upper.push(e),
        }
    }
    for l in &lower {
        for u in &upper {
            let a = l.coeff(var);
            let b = -u.coeff(var);
            let combined = normalize(&scale(l, b).add(&scale(u, a)));
            debug_assert_eq!(combined.coeff(var), 0);
            if combined.is_constant() && combined.constant >= 0 {
                continue;
            }
            push_unique(&mut out, combined);
        }
    }
    out
}

/// Tightest integer bounds `[lo, hi]` on `var` from single-variable constraints.
pub fn single_var_bounds(system: &[Inequality], var: usize) -> (Option<i64>, Option<i64>) {
    let mut lo: Option<i64> = None;
    let mut hi: Option<i64> = None;
    for e in system {
        if e.coeffs.len() != 1 {
            continue;
        }
        let a = e.coeff(var);
        if a > 0 {
            // a*x + c >= 0  =>  x >= ceil(-c / a)
            let b = Integer::div_ceil(&-e.constant, &a);
            lo = Some(lo.map_or(b, |x| x.max(b)));
        } else if a < 0 {
            // c - |a|*x >= 0  =>  x <= floor(c / |a|)
            let b = Integer::div_floor(&e.constant, &-a);
            hi = Some(hi.map_or(b, |x| x.min(b)));
        }
    }
    (lo, hi)
}
