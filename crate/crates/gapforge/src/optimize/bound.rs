//! Smallest admissible excess cost from the winding/shell chain.

use crate::domain::Instance;

/// Terms summed directly before switching to the Euler–Maclaurin tail.
const DIRECT_TERMS: u64 = 10_000;

/// `Σ_{j>=n} j^{-3/2}` for `n >= 1`.
pub fn tail_sum(n: u64) -> f64 {
    let n = n.max(1);
    let m = n + DIRECT_TERMS;
    let direct: f64 = (n..m).rev().map(|j| (j as f64).powf(-1.5)).sum();
    let mf = m as f64;
    direct + 2.0 / mf.sqrt() + 0.5 * mf.powf(-1.5) + 1.5 * mf.powf(-2.5) / 12.0
}

/// First shell index that may be occupied at excess `eps`: `ceil(1/(5ε^{1/4}))`.
pub fn first_shell(eps: f64) -> u64 {
    (1.0 / (5.0 * eps.powf(0.25))).ceil().max(1.0) as u64
}

/// Right-hand side `Σ_{j>=1/(5ε^{1/4})} 6aC̄/j^{3/2}`.
pub fn chain_rhs(inst: &Instance, cbar: f64, eps: f64) -> f64 {
    6.0 * inst.a * cbar * tail_sum(first_shell(eps))
}

/// Largest `ε` for which the chain applies: `5^{5/2} ε^{5/8} < s₀` with `s₀ = (2/b)/√2`, and `ε <= 1`.
pub fn validity_cap(inst: &Instance) -> f64 {
    let s0 = 2.0 / inst.b / std::f64::consts::SQRT_2;
    (s0 / 5f64.powf(2.5)).powf(1.6).min(1.0)
}

/// `ε_min`: classical costs below `2a + ε` are ruled out for every `ε < ε_min`.
/// Returns 0 when the bound is vacuous and the validity cap when it binds everywhere.
pub fn gap_lower_bound_eps(inst: &Instance, cbar: f64) -> f64 {
    let target = inst.a * inst.b - 2.0 * std::f64::consts::PI;
    let cap = validity_cap(inst);
    if !(cbar > 0.0) || target <= 0.0 {
        return 0.0;
    }
    let violated = |eps: f64| chain_rhs(inst, cbar, eps) < target;
    if violated(cap) {
        return cap;
    }
    let mut lo = 1e-30f64;
    if !violated(lo) {
        return 0.0;
    }
    let mut hi = cap;
    for _ in 0..200 {
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        if violated(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
