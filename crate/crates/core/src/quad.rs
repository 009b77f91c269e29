//! Tanh–sinh quadrature for transit-time integrals
//! `∫ (E - φ(u))^{-1/2} du` with inverse square-root endpoint singularities.
//!
//! Nodes are generated together with their exact distance to the nearer
//! endpoint, so the integrand can be evaluated as
//! `(E - φ(r)) + (φ(r) - φ(r + d))` without cancellation next to a turning
//! point `r`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Well;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSettings {
    /// Stop doubling once successive levels agree to this relative change.
    pub level_tol: f64,
    pub max_levels: u32,
    /// Largest accepted relative error estimate.
    pub accept_tol: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            level_tol: 1e-10,
            max_levels: 12,
            accept_tol: 1e-9,
        }
    }
}

const T_MAX: f64 = 4.5;

/// Integrate `f` over `[a, b]`. `f` receives `(u, side, d)`: the node, the
/// nearer endpoint (`false` for `a`) and the distance to it, `d > 0`.
///
/// Returns the estimate and the last level-to-level change.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, settings: &QuadSettings) -> Result<(f64, f64)>
where
    F: Fn(f64, bool, f64) -> Result<f64>,
{
    let half = 0.5 * (b - a);
    if half == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mid = 0.5 * (a + b);
    // one node pair at abscissa t > 0, plus the center at t = 0
    let pair = |t: f64| -> Result<f64> {
        let s = FRAC_PI_2 * t.sinh();
        let ch = s.cosh();
        let w = FRAC_PI_2 * t.cosh() / (ch * ch);
        // distance from the nearer endpoint, in units of the half width
        let dist = 2.0 / (1.0 + (2.0 * s).exp());
        let d = half * dist;
        if d <= 0.0 || w == 0.0 {
            return Ok(0.0);
        }
        let lo = f(a + d, false, d)?;
        let hi = f(b - d, true, d)?;
        Ok(w * (lo + hi))
    };
    let mut h = 0.5;
    let mut sum = FRAC_PI_2 * f(mid, false, half)?;
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        sum += pair(k as f64 * h)?;
        k += 1;
    }
    let mut estimate = half * h * sum;
    let mut change = f64::INFINITY;
    for level in 1..=settings.max_levels {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            sum += pair(k as f64 * h)?;
            k += 2;
        }
        let next = half * h * sum;
        change = (next - estimate).abs();
        estimate = next;
        if level >= 3 && change <= settings.level_tol * estimate.abs() {
            break;
        }
    }
    Ok((estimate, change))
}

/// `∫_{u_lo}^{u_hi} (E - φ(u))^{-1/2} du` for the central well.
///
/// `singular_lo` / `singular_hi` mark endpoints that are turning points
/// (`φ = E` there); every other point of the closed interval must have
/// `E - φ > 0`.
pub fn transit_integral(
    u_lo: f64,
    u_hi: f64,
    energy: f64,
    well: &Well,
    singular_lo: bool,
    singular_hi: bool,
) -> Result<f64> {
    transit_integral_with(u_lo, u_hi, energy, well, singular_lo, singular_hi, &QuadSettings::default())
}

pub fn transit_integral_with(
    u_lo: f64,
    u_hi: f64,
    energy: f64,
    well: &Well,
    singular_lo: bool,
    singular_hi: bool,
    settings: &QuadSettings,
) -> Result<f64> {
    if !(u_lo >= 0.0 && u_hi >= u_lo && u_hi.is_finite() && energy.is_finite()) {
        return Err(Error::InvalidBracket(format!(
            "[{u_lo}, {u_hi}] at E = {energy}"
        )));
    }
    if u_hi == u_lo {
        return Ok(0.0);
    }
    if let Ok(bottom) = well.center_energy() {
        if singular_lo && energy > -1e-12 * bottom.abs() {
            return Err(Error::Quadrature(format!(
                "energy {energy} too close to the homoclinic level"
            )));
        }
    }
    // |φ'| near a simple turning point is of order |λ| r; it vanishes at Ω
    let slope_scale = well.lambda.abs() * u_hi;
    let base = |r: f64, singular: bool| -> Result<f64> {
        let gap = energy - well.potential(r);
        if singular {
            let slope = well.dpotential(r).abs();
            if slope <= 1e-9 * slope_scale {
                return Err(Error::SingularityOrder(format!(
                    "turning point {r} is not simple (φ' = {})",
                    well.dpotential(r)
                )));
            }
            // the turning point is exact up to rounding; the residual gap
            // is noise that would dominate tiny orbits
            Ok(0.0)
        } else if gap > 0.0 {
            Ok(gap)
        } else {
            Err(Error::InvalidBracket(format!(
                "E - φ = {gap} at endpoint {r} not flagged singular"
            )))
        }
    };
    let gap_lo = base(u_lo, singular_lo)?;
    let gap_hi = base(u_hi, singular_hi)?;
    if singular_lo != singular_hi {
        return substituted(u_lo, u_hi, singular_lo, well, settings);
    }
    let integrand = |u: f64, upper: bool, d: f64| -> Result<f64> {
        let g = if upper {
            gap_hi + well.potential_drop(u_hi, -d)
        } else if u_lo > 0.0 {
            gap_lo + well.potential_drop(u_lo, d)
        } else {
            energy - well.potential(u)
        };
        if g > 0.0 {
            Ok(1.0 / g.sqrt())
        } else {
            Err(Error::InvalidBracket(format!(
                "E - φ = {g} <= 0 at interior point {u} of [{u_lo}, {u_hi}]"
            )))
        }
    };
    let (value, change) = tanh_sinh(integrand, u_lo, u_hi, settings)?;
    if !(value.is_finite() && change <= settings.accept_tol * value.abs()) {
        return Err(Error::Quadrature(format!(
            "estimate {value} with level change {change} on [{u_lo}, {u_hi}]"
        )));
    }
    Ok(value)
}

/// One singular endpoint `r`: with `u = r ∓ s²` the integrand
/// `2s / √(E - φ)` is smooth on `[0, √|ξ - r|]`, also when the regular
/// endpoint `ξ` lies next to the turning point.
fn substituted(
    u_lo: f64,
    u_hi: f64,
    singular_lo: bool,
    well: &Well,
    settings: &QuadSettings,
) -> Result<f64> {
    let (r, sign) = if singular_lo { (u_lo, 1.0) } else { (u_hi, -1.0) };
    let s_end = (u_hi - u_lo).sqrt();
    let integrand = |_s: f64, upper: bool, d: f64| -> Result<f64> {
        let s = if upper { s_end - d } else { d };
        let g = well.potential_drop(r, sign * s * s);
        if g > 0.0 {
            Ok(2.0 * s / g.sqrt())
        } else if s == 0.0 {
            Ok(2.0 / well.dpotential(r).abs().sqrt())
        } else {
            Err(Error::InvalidBracket(format!(
                "E - φ = {g} <= 0 at u = {} inside [{u_lo}, {u_hi}]",
                r + sign * s * s
            )))
        }
    };
    let (value, change) = tanh_sinh(integrand, 0.0, s_end, settings)?;
    if !(value.is_finite() && change <= settings.accept_tol * value.abs()) {
        return Err(Error::Quadrature(format!(
            "estimate {value} with level change {change} on [{u_lo}, {u_hi}]"
        )));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn arcsine_integral() {
        // ∫_{-1}^{1} (1 - u²)^{-1/2} = π
        let f = |_u: f64, _upper: bool, d: f64| Ok(1.0 / (d * (2.0 - d)).sqrt());
        let (v, _) = tanh_sinh(f, -1.0, 1.0, &QuadSettings::default()).unwrap();
        assert!((v - PI).abs() < 1e-13);
    }

    #[test]
    fn smooth_polynomial() {
        let (v, _) = tanh_sinh(|u, _, _| Ok(u * u), 0.0, 3.0, &QuadSettings::default()).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_well_half_period() {
        // E - φ(Ω) = 1e-6 |φ(Ω)|
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let e = w.center_energy().unwrap() + 1e-6 * w.center_energy().unwrap().abs();
        let (xm, xmax) = crate::timemap::turning_points(e, &w).unwrap();
        let t = 2.0 * transit_integral(xm, xmax, e, &w, true, true).unwrap();
        assert!((t - w.small_oscillation_period()).abs() < 1e-3, "{t}");
    }

    #[test]
    fn additivity_at_center() {
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let e = -1.0 / 12.0;
        let (xm, xmax) = crate::timemap::turning_points(e, &w).unwrap();
        let whole = transit_integral(xm, xmax, e, &w, true, true).unwrap();
        let a = transit_integral(xm, 1.0, e, &w, true, false).unwrap();
        let b = transit_integral(1.0, xmax, e, &w, false, true).unwrap();
        assert!((whole - a - b).abs() < 1e-12 * whole);
    }

    #[test]
    fn rejects_bad_brackets() {
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let e = -1.0 / 12.0;
        // u = 1 is inside the orbit, u = 0.1 outside: E - φ(0.1) < 0
        assert!(matches!(
            transit_integral(0.1, 1.0, e, &w, false, false),
            Err(Error::InvalidBracket(_))
        ));
        // degenerate center orbit
        let bottom = w.center_energy().unwrap();
        assert!(matches!(
            transit_integral(1.0, 1.2, bottom, &w, true, false),
            Err(Error::SingularityOrder(_))
        ));
    }
}
