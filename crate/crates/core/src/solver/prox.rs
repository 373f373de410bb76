//! Pointwise proximal maps.

use crate::error::{Error, Result};
use crate::problem::Coupling;

/// Largest root of `(m - mt)(m + sigma)^2 = sigma w2 / 2`, clipped to 0.
///
/// On `m > max(mt, -sigma)` the cubic is convex and increasing, so Newton from
/// an upper bound decreases monotonically onto the root.
pub(crate) fn kinetic_root(mt: f64, w2: f64, sigma: f64) -> f64 {
    let lo = mt.max(-sigma);
    if w2 == 0.0 {
        return lo.max(0.0);
    }
    let rhs = 0.5 * sigma * w2;
    let mut m = lo + rhs.cbrt();
    for _ in 0..200 {
        let a = m - mt;
        let b = m + sigma;
        let f = a * b * b - rhs;
        let fp = b * b + 2.0 * a * b;
        if f <= 0.0 || fp <= 0.0 {
            break;
        }
        let next = m - f / fp;
        if !(next < m) || next <= lo {
            break;
        }
        m = next;
    }
    m.max(0.0)
}

/// Proximal map of `|w|^2 / (2m)` with step `sigma`.
///
/// Returns `(m*, w*)` with `w* = m* w / (m* + sigma)`, or `(0, 0)` when the
/// largest root of the optimality cubic is not positive.
pub fn kinetic_prox(m_tilde: f64, w_tilde: &[f64], sigma: f64) -> Result<(f64, Vec<f64>)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("prox step must be positive, got {sigma}")));
    }
    if !m_tilde.is_finite() || w_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("kinetic prox received non-finite input".into()));
    }
    let w2: f64 = w_tilde.iter().map(|v| v * v).sum();
    let m = kinetic_root(m_tilde, w2, sigma);
    if m <= 0.0 {
        return Ok((0.0, vec![0.0; w_tilde.len()]));
    }
    let f = m / (m + sigma);
    Ok((m, w_tilde.iter().map(|v| v * f).collect()))
}

/// `|w|^2 / (2m)` extended by 0 at the cone tip and `+inf` elsewhere off `m > 0`.
pub fn kinetic_energy(m: f64, w2: f64) -> f64 {
    if m > 0.0 {
        0.5 * w2 / m
    } else if w2 == 0.0 && m == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Proximal map of `G(m) - V m` on `m >= 0` with step `sigma`.
///
/// Solves `sigma g(m) + m = m_tilde + sigma V`.
pub fn coupling_prox(m_tilde: f64, sigma: f64, coupling: &Coupling, v: f64) -> f64 {
    let b = m_tilde + sigma * v;
    if let Some(alpha) = coupling.alpha() {
        if alpha == 1.0 {
            return (b / (1.0 + sigma)).max(0.0);
        }
    }
    let h = |m: f64| sigma * coupling.g(m) + m;
    if b <= h(0.0) {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = b.abs().max(1.0);
    while h(hi) < b {
        lo = hi;
        hi *= 2.0;
    }
    let mut m = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = h(m) - b;
        if r == 0.0 {
            return m;
        }
        if r > 0.0 {
            hi = m;
        } else {
            lo = m;
        }
        let step = r / (sigma * coupling.g_prime(m) + 1.0);
        let newton = m - step;
        if step.abs() <= 1e-15 * m.max(1.0) {
            return newton.clamp(lo, hi);
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            return 0.5 * (lo + hi);
        }
        m = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    m
}
