//! Problem definition and the closed-form quantities of the central
//! Hamiltonian flow.
//!
//! The boundary value problem is
//!
//! ```text
//!   -u'' = λ u + a(t) u^p   on (0, 1),   u(0) = u(1) = M,
//! ```
//!
//! with the piecewise-constant weight `a = (-c, b, -νc)` on
//! `[0, α) ∪ [α, 1-α] ∪ (1-α, 1]`. On the central interval the equation is
//! autonomous with first integral `E(u, v) = v² + φ(u)`,
//! `φ(u) = λu² + 2b/(p+1) u^{p+1}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All scalar parameters of the boundary value problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Linear coefficient, strictly negative.
    pub lambda: f64,
    /// Superlinearity exponent, `p > 1`.
    pub p: f64,
    /// Width of each outer interval, `0 < α < 1/2`.
    pub alpha: f64,
    /// Weight on the central interval.
    pub b: f64,
    /// Magnitude of the weight on the left outer interval.
    pub c: f64,
    /// Asymmetry factor; the right outer weight is `-ν c`.
    pub nu: f64,
    /// Boundary value `u(0) = u(1) = M`.
    #[serde(rename = "M", alias = "m")]
    pub m: f64,
}

impl ProblemParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.lambda.is_finite() && self.lambda < 0.0) {
            return fail(format!("lambda must be finite and < 0, got {}", self.lambda));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return fail(format!("p must be finite and > 1, got {}", self.p));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return fail(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return fail(format!("b must be finite and >= 0, got {}", self.b));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return fail(format!("c must be finite and > 0, got {}", self.c));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return fail(format!("nu must be finite and > 0, got {}", self.nu));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return fail(format!("M must be finite and > 0, got {}", self.m));
        }
        Ok(())
    }

    pub fn with_b(self, b: f64) -> Self {
        Self { b, ..self }
    }

    pub fn with_nu(self, nu: f64) -> Self {
        Self { nu, ..self }
    }

    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// Parameters of the problem solved by `ũ(t) = u(1 - t)`: the outer
    /// weights swap, so `c̃ = ν c` and `ν̃ = 1/ν`.
    pub fn reflected(self) -> Self {
        Self {
            c: self.nu * self.c,
            nu: 1.0 / self.nu,
            ..self
        }
    }

    /// Length of the central interval, `1 - 2α`.
    pub fn central_length(&self) -> f64 {
        1.0 - 2.0 * self.alpha
    }

    /// Effective weight magnitude on the right outer interval.
    pub fn right_c(&self) -> f64 {
        self.nu * self.c
    }

    pub fn well(&self) -> Well {
        Well {
            lambda: self.lambda,
            b: self.b,
            p: self.p,
        }
    }

    pub fn well_at(&self, b: f64) -> Well {
        Well {
            lambda: self.lambda,
            b,
            p: self.p,
        }
    }
}

/// A state of the central flow in the `(u, u')` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub u: f64,
    pub v: f64,
}

impl PhasePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn mirrored(self) -> Self {
        Self { u: self.u, v: -self.v }
    }
}

/// One level set of the first integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevel {
    pub energy: f64,
    pub well: Well,
}

impl EnergyLevel {
    /// Closed orbits around the center have `φ(Ω) < E < 0`.
    pub fn is_closed(&self) -> bool {
        match self.well.center_energy() {
            Ok(bottom) => self.energy > bottom && self.energy < 0.0,
            Err(_) => false,
        }
    }
}

/// `u^e` for `u ≥ 0`; the caller guarantees the sign.
#[inline]
pub(crate) fn pow_nonneg(u: f64, e: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.powf(e)
    }
}

/// The central potential well `φ(u) = λu² + 2b/(p+1) u^{p+1}` and the
/// autonomous flow `u' = v, v' = -λu - b u^p` it generates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub lambda: f64,
    pub b: f64,
    pub p: f64,
}

impl Well {
    pub fn new(lambda: f64, b: f64, p: f64) -> Result<Self> {
        if !(lambda < 0.0 && p > 1.0 && b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "well needs lambda < 0, p > 1, b >= 0 (lambda={lambda}, p={p}, b={b})"
            )));
        }
        Ok(Self { lambda, b, p })
    }

    #[inline]
    pub fn potential(&self, u: f64) -> f64 {
        debug_assert!(u >= 0.0);
        self.lambda * u * u + 2.0 * self.b / (self.p + 1.0) * pow_nonneg(u, self.p + 1.0)
    }

    /// `φ'(u) = 2λu + 2b u^p`.
    #[inline]
    pub fn dpotential(&self, u: f64) -> f64 {
        2.0 * self.lambda * u + 2.0 * self.b * pow_nonneg(u, self.p)
    }

    /// `φ''(u) = 2λ + 2bp u^{p-1}`.
    #[inline]
    pub fn d2potential(&self, u: f64) -> f64 {
        2.0 * self.lambda + 2.0 * self.b * self.p * pow_nonneg(u, self.p - 1.0)
    }

    #[inline]
    pub fn energy(&self, pt: PhasePoint) -> f64 {
        pt.v * pt.v + self.potential(pt.u)
    }

    /// Right-hand side of the first-order central system.
    #[inline]
    pub fn field(&self, u: f64, v: f64) -> (f64, f64) {
        (v, -self.lambda * u - self.b * signed_pow(u, self.p))
    }

    /// `φ(r) - φ(r + d)` evaluated without cancellation for small `d`.
    ///
    /// `r > 0` and `r + d ≥ 0`.
    pub fn potential_drop(&self, r: f64, d: f64) -> f64 {
        let q = self.p + 1.0;
        let linear = -self.lambda * d * (2.0 * r + d);
        let ratio = d / r;
        let power = if ratio <= -1.0 {
            -pow_nonneg(r, q)
        } else {
            pow_nonneg(r, q) * (q * ratio.ln_1p()).exp_m1()
        };
        linear - 2.0 * self.b / q * power
    }

    /// The center `Ω = (-λ/b)^{1/(p-1)}`.
    pub fn center(&self) -> Result<f64> {
        if self.b <= 0.0 {
            return Err(Error::NoCenter(self.b));
        }
        Ok((-self.lambda / self.b).powf(1.0 / (self.p - 1.0)))
    }

    /// `φ(Ω)`, the bottom of the well.
    pub fn center_energy(&self) -> Result<f64> {
        Ok(self.potential(self.center()?))
    }

    /// Largest abscissa reached by the homoclinic loop,
    /// `(-λ(p+1)/(2b))^{1/(p-1)}`.
    pub fn homoclinic_extent(&self) -> Result<f64> {
        if self.b <= 0.0 {
            return Err(Error::NoCenter(self.b));
        }
        Ok((-self.lambda * (self.p + 1.0) / (2.0 * self.b)).powf(1.0 / (self.p - 1.0)))
    }

    /// Period of small oscillations around the center; independent of `b`.
    pub fn small_oscillation_period(&self) -> f64 {
        small_oscillation_period(self.lambda, self.p)
    }
}

/// `sign(u)|u|^p`, used only by the full-interval shooting where a trial
/// trajectory may step marginally below zero before the terminal event.
#[inline]
pub(crate) fn signed_pow(u: f64, p: f64) -> f64 {
    if u >= 0.0 {
        pow_nonneg(u, p)
    } else {
        -pow_nonneg(-u, p)
    }
}

fn check_nonneg(u: f64) -> Result<()> {
    if u < 0.0 || u.is_nan() {
        Err(Error::Domain(format!("state u = {u} is negative")))
    } else {
        Ok(())
    }
}

/// The weight `a_ν(t)`: `-c` on `[0, α)`, `b` on `[α, 1-α]`, `-νc` on `(1-α, 1]`.
pub fn weight_at(t: f64, params: &ProblemParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    let w = if t < params.alpha {
        -params.c
    } else if t <= 1.0 - params.alpha {
        params.b
    } else {
        -params.nu * params.c
    };
    Ok(w)
}

pub fn energy_of(pt: PhasePoint, b: f64, lambda: f64, p: f64) -> Result<f64> {
    check_nonneg(pt.u)?;
    Ok(Well { lambda, b, p }.energy(pt))
}

pub fn potential(u: f64, b: f64, lambda: f64, p: f64) -> Result<f64> {
    check_nonneg(u)?;
    Ok(Well { lambda, b, p }.potential(u))
}

pub fn center_abscissa(b: f64, lambda: f64, p: f64) -> Result<f64> {
    Well { lambda, b, p }.center()
}

pub fn homoclinic_extent(b: f64, lambda: f64, p: f64) -> Result<f64> {
    Well { lambda, b, p }.homoclinic_extent()
}

/// Both branches `±√(-λu² - 2b/(p+1) u^{p+1})` of the homoclinic loop.
pub fn homoclinic_branch(u: f64, b: f64, lambda: f64, p: f64) -> Result<(f64, f64)> {
    check_nonneg(u)?;
    let well = Well { lambda, b, p };
    let extent = well.homoclinic_extent()?;
    if u > extent * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::Domain(format!(
            "u = {u} beyond the homoclinic extent {extent}"
        )));
    }
    let v = (-well.potential(u)).max(0.0).sqrt();
    Ok((v, -v))
}

/// `λ_j = (2πj/(1-2α))² / (1-p)`.
pub fn lambda_threshold(j: u32, p: f64, alpha: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::Domain("lambda threshold index must be >= 1".into()));
    }
    let w = 2.0 * PI * f64::from(j) / (1.0 - 2.0 * alpha);
    Ok(w * w / (1.0 - p))
}

/// `2π / √(-λ(p-1))`.
pub fn small_oscillation_period(lambda: f64, p: f64) -> f64 {
    2.0 * PI / (-lambda * (p - 1.0)).sqrt()
}

/// `b* = -λ / m0^{p-1}`, the weight that puts the center at `m0`.
pub fn critical_b_star(m0: f64, lambda: f64, p: f64) -> Result<f64> {
    if !(m0 > 0.0) {
        return Err(Error::Domain(format!("m0 = {m0} must be positive")));
    }
    Ok(-lambda / m0.powf(p - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ProblemParams {
        ProblemParams {
            lambda: -1.0,
            p: 2.0,
            alpha: 0.25,
            b: 2.0,
            c: 1.0,
            nu: 3.0,
            m: 1.0,
        }
    }

    #[test]
    fn weight_pieces() {
        let p = reference();
        assert_eq!(weight_at(0.1, &p).unwrap(), -1.0);
        assert_eq!(weight_at(0.5, &p).unwrap(), 2.0);
        assert_eq!(weight_at(0.9, &p).unwrap(), -3.0);
        // closed on [α, 1-α]
        assert_eq!(weight_at(0.25, &p).unwrap(), 2.0);
        assert_eq!(weight_at(0.75, &p).unwrap(), 2.0);
        assert_eq!(weight_at(0.0, &p).unwrap(), -1.0);
        assert_eq!(weight_at(1.0, &p).unwrap(), -3.0);
        assert!(matches!(weight_at(1.5, &p), Err(Error::Domain(_))));
        assert!(matches!(weight_at(-0.1, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn energy_values() {
        assert_eq!(energy_of(PhasePoint::new(0.0, 0.0), 1.0, -1.0, 2.0).unwrap(), 0.0);
        let e = energy_of(PhasePoint::new(1.0, 0.0), 1.0, -1.0, 2.0).unwrap();
        assert!((e + 1.0 / 3.0).abs() < 1e-15);
        let e = energy_of(PhasePoint::new(1.0, 0.5), 1.0, -1.0, 2.0).unwrap();
        assert!((e + 1.0 / 12.0).abs() < 1e-15);
        assert!(energy_of(PhasePoint::new(-1.0, 0.0), 1.0, -1.0, 2.0).is_err());
    }

    #[test]
    fn potential_values() {
        assert_eq!(potential(0.0, 1.0, -1.0, 2.0).unwrap(), 0.0);
        let om = center_abscissa(1.0, -1.0, 2.0).unwrap();
        assert!((potential(om, 1.0, -1.0, 2.0).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        let ext = homoclinic_extent(1.0, -1.0, 2.0).unwrap();
        assert!((ext - 1.5).abs() < 1e-15);
        assert!(potential(ext, 1.0, -1.0, 2.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn center_values() {
        assert!((center_abscissa(1.0, -1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((center_abscissa(1.0, -4.0, 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(center_abscissa(0.0, -1.0, 2.0), Err(Error::NoCenter(_))));
        let w = Well::new(-3.7, 0.8, 2.6).unwrap();
        let om = w.center().unwrap();
        assert!(w.dpotential(om).abs() < 1e-13);
        assert!(w.d2potential(om) > 0.0);
    }

    #[test]
    fn homoclinic_endpoints() {
        assert_eq!(homoclinic_branch(0.0, 1.0, -1.0, 2.0).unwrap(), (0.0, -0.0));
        let (vp, vm) = homoclinic_branch(1.5, 1.0, -1.0, 2.0).unwrap();
        assert!(vp.abs() < 1e-7 && vm.abs() < 1e-7);
        assert!(homoclinic_branch(1.6, 1.0, -1.0, 2.0).is_err());
        let (vp, _) = homoclinic_branch(0.7, 1.0, -1.0, 2.0).unwrap();
        assert!(energy_of(PhasePoint::new(0.7, vp), 1.0, -1.0, 2.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lambda_thresholds() {
        let l1 = lambda_threshold(1, 2.0, 0.25).unwrap();
        let l2 = lambda_threshold(2, 2.0, 0.25).unwrap();
        assert!((l1 + 16.0 * PI * PI).abs() < 1e-10);
        assert!((l1 + 157.913_670_417_429_7).abs() < 1e-9);
        assert!((l2 + 64.0 * PI * PI).abs() < 1e-9);
        assert!(l2 < l1 && l1 < 0.0);
        assert!(lambda_threshold(0, 2.0, 0.25).is_err());
    }

    #[test]
    fn small_oscillations() {
        assert!((small_oscillation_period(-1.0, 2.0) - 2.0 * PI).abs() < 1e-15);
        for (p, alpha) in [(2.0, 0.25), (3.0, 0.1), (1.5, 0.4)] {
            let l1 = lambda_threshold(1, p, alpha).unwrap();
            let tau = small_oscillation_period(l1, p);
            assert!((tau - (1.0 - 2.0 * alpha)).abs() < 1e-14);
        }
    }

    #[test]
    fn b_star_puts_center_at_m0() {
        assert!((critical_b_star(1.0, -1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        for (m0, lambda, p) in [(0.3, -5.0, 2.0), (0.0139, -394.8, 2.0), (2.0, -1.0, 3.5)] {
            let bs = critical_b_star(m0, lambda, p).unwrap();
            let om = center_abscissa(bs, lambda, p).unwrap();
            assert!((om - m0).abs() < 1e-13 * m0.max(1.0));
        }
    }

    #[test]
    fn potential_drop_matches_direct() {
        let w = Well::new(-394.784, 28_356.7, 2.0).unwrap();
        let r = 0.0087;
        for d in [1e-3, -2e-3, 3e-9, -4e-12] {
            let direct = w.potential(r) - w.potential(r + d);
            let stable = w.potential_drop(r, d);
            assert!((direct - stable).abs() <= 1e-15 + 1e-9 * direct.abs());
        }
    }

    #[test]
    fn params_validation() {
        let mut p = reference();
        assert!(p.validate().is_ok());
        p.m = f64::INFINITY;
        assert!(p.validate().is_err());
        let mut p = reference();
        p.lambda = 0.5;
        assert!(p.validate().is_err());
        let mut p = reference();
        p.alpha = 0.5;
        assert!(p.validate().is_err());
        let r = reference().reflected();
        assert_eq!(r.c, 3.0);
        assert!((r.nu - 1.0 / 3.0).abs() < 1e-16);
    }
}
