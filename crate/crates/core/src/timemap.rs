//! Orbit geometry and transit times of the central flow between the
//! boundary curves.
//!
//! Every closed orbit is parametrised by its flow phase, measured from the
//! left turning point `(x_m, 0)`: a point `ξ` on the upper branch has phase
//! `∫_{x_m}^{ξ} (E-φ)^{-1/2}`, one on the lower branch `T - ∫_{x_m}^{ξ}`.
//! Transit times to the curve hits are phase differences modulo the period
//! `T`, so every configuration of signs and every hit count is handled by
//! the same composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{tangent_orbit, Curves, GammaCurve};
use crate::problem::Well;
use crate::quad::{transit_integral_with, QuadSettings};
use crate::roots;

/// Roots of `φ(u) = E` on either side of the center, for `φ(Ω) ≤ E < 0`.
pub fn turning_points(energy: f64, well: &Well) -> Result<(f64, f64)> {
    let omega = well.center()?;
    let bottom = well.potential(omega);
    if energy < bottom {
        return Err(Error::Domain(format!(
            "energy {energy} below the well bottom {bottom}: no orbit"
        )));
    }
    if energy >= 0.0 {
        return Err(Error::NotReachable(format!(
            "energy {energy} >= 0: open orbit without a left turning point"
        )));
    }
    if energy == bottom {
        return Ok((omega, omega));
    }
    let lo = solve_potential(well, energy, 0.0, omega)?;
    let hi = solve_potential(well, energy, omega, well.homoclinic_extent()?)?;
    Ok((lo, hi))
}

/// Right turning point `x_M`, defined for every `E ≥ φ(Ω)`.
pub fn right_turning_point(energy: f64, well: &Well) -> Result<f64> {
    let omega = well.center()?;
    if energy < well.potential(omega) {
        return Err(Error::Domain(format!("energy {energy} below the well bottom")));
    }
    let mut hi = well.homoclinic_extent()?;
    while well.potential(hi) <= energy {
        hi *= 2.0;
    }
    solve_potential(well, energy, omega, hi)
}

/// Root of `φ = E` on a bracket: Brent, then Newton polish.
fn solve_potential(well: &Well, energy: f64, a: f64, b: f64) -> Result<f64> {
    let f = |u: f64| well.potential(u) - energy;
    let mut x = roots::brent(f, a, b, 1e-16 * b)?;
    for _ in 0..3 {
        let d = well.dpotential(x);
        if d == 0.0 {
            break;
        }
        let nx = x - f(x) / d;
        if nx > a && nx < b && f(nx).abs() < f(x).abs() {
            x = nx;
        } else {
            break;
        }
    }
    Ok(x)
}

/// Period `T(E) = 2 ∫_{x_m}^{x_M} (E-φ)^{-1/2}` of a closed orbit.
pub fn period(energy: f64, well: &Well) -> Result<f64> {
    Ok(Orbit::new(energy, well, &QuadSettings::default())?.period())
}

/// One energy level with its turning points and half period.
#[derive(Debug, Clone, Copy)]
pub struct Orbit {
    pub energy: f64,
    pub well: Well,
    /// `None` for open orbits (`E ≥ 0`).
    pub x_min: Option<f64>,
    pub x_max: f64,
    half: f64,
    quad: QuadSettings,
}

impl Orbit {
    pub fn new(energy: f64, well: &Well, quad: &QuadSettings) -> Result<Self> {
        let omega = well.center()?;
        if energy >= 0.0 {
            let x_max = right_turning_point(energy, well)?;
            return Ok(Self {
                energy,
                well: *well,
                x_min: None,
                x_max,
                half: f64::INFINITY,
                quad: *quad,
            });
        }
        let (x_min, x_max) = turning_points(energy, well)?;
        let half = transit_integral_with(x_min, omega, energy, well, true, false, quad)?
            + transit_integral_with(omega, x_max, energy, well, false, true, quad)?;
        Ok(Self {
            energy,
            well: *well,
            x_min: Some(x_min),
            x_max,
            half,
            quad: *quad,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.x_min.is_some()
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half
    }

    fn integral(&self, lo: f64, hi: f64, sing_lo: bool, sing_hi: bool) -> Result<f64> {
        transit_integral_with(lo, hi, self.energy, &self.well, sing_lo, sing_hi, &self.quad)
    }

    /// `∫_ξ^{x_M}`, with `ξ` clamped onto the orbit.
    fn to_right(&self, xi: f64) -> Result<f64> {
        let lo = self.x_min.unwrap_or(0.0);
        let xi = xi.clamp(lo, self.x_max);
        if self.energy - self.well.potential(xi) <= 0.0 {
            // ξ is a turning point up to rounding
            return Ok(if xi < self.well.center()? { self.half } else { 0.0 });
        }
        self.integral(xi, self.x_max, false, true)
    }

    /// `∫_{x_m}^{ξ}` for closed orbits.
    fn from_left(&self, xi: f64) -> Result<f64> {
        let x_min = self.x_min.expect("closed orbit");
        let omega = self.well.center()?;
        let xi = xi.clamp(x_min, self.x_max);
        if self.energy - self.well.potential(xi) <= 0.0 {
            return Ok(if xi < omega { 0.0 } else { self.half });
        }
        if xi <= omega {
            self.integral(x_min, xi, true, false)
        } else {
            Ok(self.half - self.integral(xi, self.x_max, false, true)?)
        }
    }

    /// Flow phase of the orbit point above (`upper`) or below `ξ`.
    ///
    /// Closed orbits: in `[0, T)` from `(x_m, 0)`. Open orbits: signed time
    /// from `(x_M, 0)`, negative on the upper branch.
    pub fn phase(&self, xi: f64, upper: bool) -> Result<f64> {
        if self.is_closed() {
            let a = self.from_left(xi)?;
            Ok(if upper { a } else { 2.0 * self.half - a })
        } else {
            let r = self.to_right(xi)?;
            Ok(if upper { -r } else { r })
        }
    }
}

/// An intersection of an orbit with a boundary curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveHit {
    pub x: f64,
    /// Sign of `v` at the hit: `+1` upper branch, `-1` lower.
    pub branch: i8,
    /// Tangential (double) intersection.
    pub double: bool,
}

/// One energy level together with its intersections with both curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitGeometry {
    pub energy: f64,
    pub x_m: Option<f64>,
    pub x_max: f64,
    pub gamma0_hits: Vec<CurveHit>,
    pub gamma1_hits: Vec<CurveHit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Tau,
    Theta1,
    Theta2,
    Period,
    TauNu,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Tau => "tau",
            SampleKind::Theta1 => "theta1",
            SampleKind::Theta2 => "theta2",
            SampleKind::Period => "period",
            SampleKind::TauNu => "tau_nu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMapSample {
    pub x: f64,
    pub j: u32,
    pub kind: SampleKind,
    pub value: f64,
    pub energy: f64,
}

/// Tangency as seen by the interpolant, so hit detection and energies
/// are mutually consistent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveTangency {
    pub x: f64,
    pub energy: f64,
    pub y: f64,
    pub is_unique: bool,
}

fn interp_tangency(curve: &GammaCurve, well: &Well) -> Option<CurveTangency> {
    let t = tangent_orbit(curve, well.b).ok()?;
    let w = 1e-3 * t.x_t;
    let (lo, hi) = ((t.x_t - w).max(curve.x_range().0), (t.x_t + w).min(curve.x_range().1));
    let (x, e) = roots::minimize(|x| curve.energy(x, well).unwrap_or(f64::INFINITY), lo, hi, 1e-16 * hi);
    Some(CurveTangency {
        x,
        energy: e,
        y: curve.y(x).ok()?,
        is_unique: t.is_unique,
    })
}

/// Forward arrival times at Γ₁,ν from one start point on Γ₀.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrivals {
    pub x: f64,
    pub energy: f64,
    /// `None` for open orbits.
    pub period: Option<f64>,
    /// Sorted first-round arrival times, tangential hits counted twice.
    pub times: Vec<f64>,
}

impl Arrivals {
    /// `τ_j`: the `j`-th arrival, adding whole periods after the first round.
    pub fn tau(&self, j: u32) -> Result<f64> {
        if j == 0 {
            return Err(Error::Domain("hit index j must be >= 1".into()));
        }
        let n = self.times.len();
        if n == 0 {
            return Err(Error::NotReachable(format!(
                "orbit through x = {} never meets the right curve",
                self.x
            )));
        }
        let k = (j - 1) as usize;
        match self.period {
            Some(t) => Ok(self.times[k % n] + t * (k / n) as f64),
            None if k < n && j == 1 => Ok(self.times[0]),
            None => Err(Error::NotReachable(format!(
                "open orbit through x = {} defines only the first transit",
                self.x
            ))),
        }
    }
}

/// Time maps at fixed `b` over the curves of one parameter set.
pub struct TimeMaps<'a> {
    pub curves: &'a Curves,
    pub well: Well,
    pub left_tangency: Option<CurveTangency>,
    pub right_tangency: Option<CurveTangency>,
    pub quad: QuadSettings,
}

impl<'a> TimeMaps<'a> {
    pub fn new(curves: &'a Curves, b: f64) -> Result<Self> {
        Self::with_quad(curves, b, QuadSettings::default())
    }

    pub fn with_quad(curves: &'a Curves, b: f64, quad: QuadSettings) -> Result<Self> {
        let well = curves.params.well_at(b);
        well.center()?;
        let (left_tangency, right_tangency) = rayon::join(
            || interp_tangency(&curves.left, &well),
            || interp_tangency(&curves.right, &well),
        );
        Ok(Self {
            curves,
            well,
            left_tangency,
            right_tangency,
            quad,
        })
    }

    pub fn symmetric(&self) -> bool {
        self.curves.params.nu == 1.0
    }

    pub fn b(&self) -> f64 {
        self.well.b
    }

    /// `x_t` on Γ₀ (consistent with the interpolant).
    pub fn x_t(&self) -> Result<f64> {
        self.left_tangency
            .map(|t| t.x)
            .ok_or_else(|| Error::Resolution("no tangency inside the curve range".into()))
    }

    /// Energy of the orbit through `(x, y₀(x))`.
    pub fn energy_at(&self, x: f64) -> Result<f64> {
        self.curves.left.energy(x, &self.well)
    }

    fn hits_on(&self, curve: &GammaCurve, tangency: Option<CurveTangency>, energy: f64) -> Vec<CurveHit> {
        let split = tangency.map(|t| t.x);
        let mut raw: Vec<(f64, bool)> = curve
            .level_crossings(&self.well, energy, split)
            .into_iter()
            .map(|r| (r.x, r.double))
            .collect();
        if let Some(t) = tangency {
            let tol = 1e-14 * energy.abs().max(t.energy.abs()).max(1e-300);
            if (energy - t.energy).abs() <= tol {
                let w = 1e-4 * t.x;
                raw.retain(|(x, _)| (x - t.x).abs() > w);
                raw.push((t.x, true));
                raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        raw.into_iter()
            .map(|(x, double)| {
                let y = curve.y(x).unwrap_or(0.0);
                CurveHit {
                    x,
                    branch: if y >= 0.0 { 1 } else { -1 },
                    double,
                }
            })
            .collect()
    }

    /// Intersections of the level `energy` with Γ₀.
    pub fn gamma0_hits(&self, energy: f64) -> Vec<CurveHit> {
        self.hits_on(&self.curves.left, self.left_tangency, energy)
    }

    /// Intersections of the level `energy` with Γ₁,ν.
    pub fn gamma1_hits(&self, energy: f64) -> Vec<CurveHit> {
        self.hits_on(&self.curves.right, self.right_tangency, energy)
    }

    pub fn geometry(&self, x: f64) -> Result<OrbitGeometry> {
        let energy = self.energy_at(x)?;
        let orbit = Orbit::new(energy, &self.well, &self.quad)?;
        Ok(OrbitGeometry {
            energy,
            x_m: orbit.x_min,
            x_max: orbit.x_max,
            gamma0_hits: self.gamma0_hits(energy),
            gamma1_hits: self.gamma1_hits(energy),
        })
    }

    /// True when the start abscissa is so close to the tangency that the
    /// right-curve hits are taken as mirrors of the left-curve ones.
    fn tangency_adjacent(&self, x: f64) -> bool {
        match (self.symmetric(), self.left_tangency) {
            (true, Some(t)) => (x - t.x).abs() <= 1e-6 * t.x,
            _ => false,
        }
    }

    /// The other intersection of the orbit through `x` with Γ₀, and
    /// whether the orbit is tangent (then the partner is `x` itself).
    pub fn x0_partner(&self, x: f64) -> Result<(f64, bool)> {
        let t = self
            .left_tangency
            .ok_or_else(|| Error::Resolution("no tangency inside the curve range".into()))?;
        if (x - t.x).abs() <= 1e-12 * t.x {
            return Ok((x, true));
        }
        let energy = self.energy_at(x)?;
        let hits = self.gamma0_hits(energy);
        let partner = if x < t.x {
            hits.iter().filter(|h| h.x > t.x).min_by(|a, b| a.x.total_cmp(&b.x))
        } else {
            hits.iter().filter(|h| h.x < t.x).max_by(|a, b| a.x.total_cmp(&b.x))
        };
        match partner {
            Some(h) if h.double => Ok((t.x, true)),
            Some(h) => Ok((h.x, false)),
            None if energy - t.energy <= 1e-13 * energy.abs() => Ok((t.x, true)),
            None => Err(Error::NotReachable(format!(
                "orbit through x = {x} meets Γ₀ only once inside the curve range"
            ))),
        }
    }

    /// Phase of a start point on Γ₀.
    fn start_phase(&self, orbit: &Orbit, x: f64) -> Result<f64> {
        let y = self.curves.left.y(x)?;
        orbit.phase(x, y >= 0.0)
    }

    /// Forward times from `(x, y₀(x))` to the first round of Γ₁,ν hits.
    pub fn arrivals(&self, x: f64) -> Result<Arrivals> {
        let energy = self.energy_at(x)?;
        let orbit = Orbit::new(energy, &self.well, &self.quad)?;
        let s0 = self.start_phase(&orbit, x)?;
        let mut phases = Vec::new();
        let mirror = self.tangency_adjacent(x);
        let hits = if mirror { Vec::new() } else { self.gamma1_hits(energy) };
        if mirror || (self.symmetric() && orbit.is_closed() && hits.is_empty()) {
            // at the tangency both targets coincide: a double hit
            for (xi, upper) in self.mirror_targets(x)? {
                phases.push(orbit.phase(xi, upper)?);
            }
            return Ok(self.collect(x, energy, &orbit, s0, phases));
        }
        for h in &hits {
            let s = orbit.phase(h.x, h.branch > 0)?;
            phases.push(s);
            if h.double {
                phases.push(s);
            }
        }
        Ok(self.collect(x, energy, &orbit, s0, phases))
    }

    fn collect(&self, x: f64, energy: f64, orbit: &Orbit, s0: f64, phases: Vec<f64>) -> Arrivals {
        let mut times: Vec<f64> = if orbit.is_closed() {
            let t = orbit.period();
            phases
                .into_iter()
                .map(|s| {
                    let d = (s - s0).rem_euclid(t);
                    if d <= 1e-12 * t || t - d <= 1e-12 * t {
                        t
                    } else {
                        d
                    }
                })
                .collect()
        } else {
            phases.into_iter().map(|s| s - s0).filter(|&d| d > 0.0).collect()
        };
        times.sort_by(f64::total_cmp);
        Arrivals {
            x,
            energy,
            period: orbit.is_closed().then(|| orbit.period()),
            times,
        }
    }

    /// Mirror images on Γ₁,₁ of the Γ₀ hits of the orbit through `x`:
    /// `(x, -y₀(x))` then `(x₀(x), -y₀(x₀))`, as `(abscissa, upper)`.
    fn mirror_targets(&self, x: f64) -> Result<Vec<(f64, bool)>> {
        let (x0, _) = self.x0_partner(x)?;
        let left = &self.curves.left;
        Ok(vec![(x, left.y(x)? <= 0.0), (x0, left.y(x0)? <= 0.0)])
    }

    /// `τ_j(x, b)` (or `τ_{j,ν}` when `ν ≠ 1`).
    pub fn tau(&self, x: f64, j: u32) -> Result<TimeMapSample> {
        let arr = self.arrivals(x)?;
        Ok(TimeMapSample {
            x,
            j,
            kind: if self.symmetric() { SampleKind::Tau } else { SampleKind::TauNu },
            value: arr.tau(j)?,
            energy: arr.energy,
        })
    }

    /// `θ₁` (to the mirror of the start point) or `θ₂` (to the mirror of
    /// its Γ₀ partner). Defined for `ν = 1` only.
    pub fn theta(&self, x: f64, which: u8) -> Result<TimeMapSample> {
        if !self.symmetric() {
            return Err(Error::Domain("theta maps need nu = 1".into()));
        }
        let energy = self.energy_at(x)?;
        let orbit = Orbit::new(energy, &self.well, &self.quad)?;
        if !orbit.is_closed() {
            return Err(Error::Domain(format!("orbit through x = {x} is not closed")));
        }
        let s0 = self.start_phase(&orbit, x)?;
        let targets = self.mirror_targets(x)?;
        let (xi, upper) = match which {
            1 => targets[0],
            2 => targets[1],
            _ => return Err(Error::Domain(format!("theta index {which} must be 1 or 2"))),
        };
        let t = orbit.period();
        let mut d = (orbit.phase(xi, upper)? - s0).rem_euclid(t);
        if d <= 1e-12 * t {
            d = t;
        }
        Ok(TimeMapSample {
            x,
            j: u32::from(which),
            kind: if which == 1 { SampleKind::Theta1 } else { SampleKind::Theta2 },
            value: d,
            energy,
        })
    }

    /// Period of the orbit through `(x, y₀(x))`.
    pub fn period_at(&self, x: f64) -> Result<TimeMapSample> {
        let energy = self.energy_at(x)?;
        let orbit = Orbit::new(energy, &self.well, &self.quad)?;
        if !orbit.is_closed() {
            return Err(Error::Domain(format!("orbit through x = {x} is not closed")));
        }
        Ok(TimeMapSample {
            x,
            j: 0,
            kind: SampleKind::Period,
            value: orbit.period(),
            energy,
        })
    }

    /// Closed-orbit domain on Γ₀: the interval around the tangency where
    /// `E_x < 0`, shrunk away from the homoclinic level by the quadrature
    /// guard.
    pub fn closed_domain(&self) -> Result<(f64, f64)> {
        let t = self
            .left_tangency
            .ok_or_else(|| Error::Resolution("no tangency inside the curve range".into()))?;
        if t.energy >= 0.0 {
            return Err(Error::NotReachable(format!(
                "no closed orbit meets Γ₀ at b = {}",
                self.well.b
            )));
        }
        let guard = -2e-12 * self.well.center_energy()?.abs();
        let hits = self.gamma0_hits(guard);
        let lo = hits.iter().filter(|h| h.x < t.x).map(|h| h.x).fold(f64::NAN, f64::max);
        let hi = hits.iter().filter(|h| h.x > t.x).map(|h| h.x).fold(f64::NAN, f64::min);
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::Resolution(format!(
                "closed-orbit domain at b = {} exceeds the curve range",
                self.well.b
            )));
        }
        Ok((lo, hi))
    }
}

/// Rows of the time-map CSV `x,j,kind,value,E`.
pub fn samples_to_csv(samples: &[TimeMapSample]) -> String {
    use crate::export::fmt_f64;
    crate::export::csv(
        "x,j,kind,value,E",
        samples.iter().map(|s| {
            vec![
                fmt_f64(s.x),
                s.j.to_string(),
                s.kind.as_str().to_string(),
                fmt_f64(s.value),
                fmt_f64(s.energy),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turning_points_of_reference_well() {
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let (a, b) = turning_points(-1.0 / 12.0, &w).unwrap();
        assert!(a > 0.0 && a < 1.0 && b > 1.0 && b < 1.5);
        for r in [a, b] {
            assert!((w.potential(r) + 1.0 / 12.0).abs() < 1e-15);
        }
        // cross-check by plain bisection
        let f = |u: f64| w.potential(u) + 1.0 / 12.0;
        let a2 = roots::bisect(f, 0.0, 1.0, 1e-12).unwrap();
        let b2 = roots::bisect(f, 1.0, 1.5, 1e-12).unwrap();
        assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        let (c, d) = turning_points(w.center_energy().unwrap(), &w).unwrap();
        assert_eq!((c, d), (1.0, 1.0));
        assert!(matches!(turning_points(0.0, &w), Err(Error::NotReachable(_))));
        assert!(matches!(turning_points(-1.0, &w), Err(Error::Domain(_))));
    }

    #[test]
    fn period_limits() {
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let bottom = w.center_energy().unwrap();
        let t0 = period(bottom * (1.0 - 1e-6), &w).unwrap();
        assert!((t0 - w.small_oscillation_period()).abs() < 1e-3);
        let mut last = 0.0;
        for k in 1..10 {
            let e = bottom * (1.0 - 0.1 * k as f64);
            let t = period(e, &w).unwrap();
            assert!(t > last);
            last = t;
        }
        // logarithmic blow-up toward the homoclinic
        let ts: Vec<f64> = [1e-3, 1e-6, 1e-9].iter().map(|f| period(bottom * f, &w).unwrap()).collect();
        assert!(ts[0] > last && ts[1] > ts[0] + 1.0 && ts[2] > ts[1] + 1.0, "{ts:?}");
    }

    #[test]
    fn phase_matches_ode_transit() {
        use crate::ode::{integrate_central, Direction, EventSpec, OdeSettings};
        use crate::problem::PhasePoint;
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let e = -0.2;
        let orbit = Orbit::new(e, &w, &QuadSettings::default()).unwrap();
        let xi = 0.8;
        let v = (e - w.potential(xi)).sqrt();
        // from (ξ, v) upper branch to (1.2, lower branch)
        let target = 1.2;
        let s0 = orbit.phase(xi, true).unwrap();
        let s1 = orbit.phase(target, false).unwrap();
        let quad_time = (s1 - s0).rem_euclid(orbit.period());
        let ev = [EventSpec::crossing(move |_t, p: PhasePoint| p.u - target, Direction::Down, 1)];
        let tr = integrate_central(PhasePoint::new(xi, v), 1.0, -1.0, 2.0, (0.0, 50.0), &ev, &OdeSettings::default())
            .unwrap();
        assert!((tr.end().0 - quad_time).abs() < 1e-8);
    }
}
