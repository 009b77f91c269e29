//! The positive-solution set at fixed `(b, ν)`.
//!
//! Solutions correspond to start abscissas `x` on Γ₀ whose transit time
//! to the `j`-th hit of Γ₁,ν equals the central length `1 - 2α`. Roots of
//! `τ_j(x) - (1-2α)` are bracketed on a clustered grid, each root is
//! turned into a profile on `[0, 1]`, and an independent full-interval
//! shooting scan serves as the oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::Curves;
use crate::ode::{integrate_full, OdeSettings};
use crate::problem::ProblemParams;
use crate::quad::QuadSettings;
use crate::roots;
use crate::timemap::{Arrivals, TimeMaps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Grid points on each time-map branch before refinement.
    pub n_grid: usize,
    /// Sub-cells inserted into grid cells that look like they hold roots.
    pub refine: usize,
    /// Scan size of the shooting oracle.
    pub n_scan: usize,
    /// Relative widening of the Γ₀ slope range for the oracle window.
    pub window_widen: f64,
    /// Accepted `|u(0) - M|`, `|u(1) - M|`, relative to `max(1, M)`.
    pub residual_tol: f64,
    /// Roots closer than this (relative to `m0`) on one branch are merged.
    pub dedup_tol: f64,
    pub ode: OdeSettings,
    pub quad: QuadSettings,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            n_grid: 400,
            refine: 8,
            n_scan: 4000,
            window_widen: 0.2,
            residual_tol: 1e-7,
            dedup_tol: 1e-8,
            ode: OdeSettings::precise(),
            quad: QuadSettings::default(),
        }
    }
}

/// A positive solution of the boundary value problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvpSolution {
    pub x_alpha: f64,
    #[serde(rename = "x_1ma")]
    pub x_one_minus_alpha: f64,
    /// Time-map branch; 0 for the equilibrium central piece and for
    /// solutions found by shooting alone.
    pub j: u32,
    pub slope0: f64,
    pub residual: f64,
    /// `[t, u, u']` samples.
    pub profile: Vec<[f64; 3]>,
    /// 2 for a root sitting on a tangential hit.
    #[serde(skip_serializing_if = "is_one", default = "one")]
    pub multiplicity: u8,
}

fn is_one(m: &u8) -> bool {
    *m == 1
}

fn one() -> u8 {
    1
}

impl BvpSolution {
    pub fn min_u(&self) -> f64 {
        self.profile.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min)
    }

    /// Profile thinned to at most `n` samples (endpoints kept).
    pub fn downsampled(&self, n: usize) -> Self {
        let mut out = self.clone();
        let len = self.profile.len();
        if n >= 2 && len > n {
            out.profile = (0..n)
                .map(|k| self.profile[k * (len - 1) / (n - 1)])
                .collect();
        } else if n < 2 {
            out.profile.clear();
        }
        out
    }
}

/// A time-map root whose reconstruction failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suspect {
    pub x: f64,
    pub j: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub b: f64,
    pub nu: f64,
    pub solutions: Vec<BvpSolution>,
    pub suspects: Vec<Suspect>,
}

/// A root of `τ_j - (1-2α)` before reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMapRoot {
    pub x: f64,
    pub j: u32,
    pub double: bool,
}

/// Largest useful hit index: `τ_j ≥ T·⌊(j-1)/n⌋` with `T` at least the
/// small-oscillation period and `n` hits per revolution.
pub fn j_cap(length: f64, t_min: f64, hits_per_round: usize) -> u32 {
    let rounds = (length / t_min).floor() as usize + 1;
    (hits_per_round.max(1) * rounds) as u32
}

/// Largest `|τ_j - (1-2α)|`, relative, accepted at a converged root.
const JUMP_TOL: f64 = 1e-6;

/// Decades of geometric refinement toward the tangency abscissa.
const TANGENCY_DECADES: usize = 8;

/// Decades of geometric refinement toward the homoclinic ends of the
/// closed-orbit domain, relative to its width.
const EDGE_DECADES: usize = 10;

/// Chebyshev–Lobatto nodes strictly inside `(a, b)`.
fn cluster_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(3);
    (1..n)
        .map(|k| {
            let c = (std::f64::consts::PI * k as f64 / n as f64).cos();
            0.5 * (a + b) - 0.5 * (b - a) * c
        })
        .collect()
}

/// All roots of the time maps at the configured `b`.
pub fn time_map_roots(maps: &TimeMaps<'_>, settings: &SolverSettings) -> Result<Vec<TimeMapRoot>> {
    let params = &maps.curves.params;
    let length = params.central_length();
    let left = &maps.curves.left;
    let (x_lo, x_hi) = left.x_range();
    let t_min = maps.well.small_oscillation_period();

    // branch intervals: the closed-orbit domain and the open part above it
    let mut intervals: Vec<(f64, f64, bool)> = Vec::new();
    match maps.closed_domain() {
        Ok((a, b)) => {
            intervals.push((a, b, true));
            intervals.push((b, x_hi, false));
        }
        Err(Error::NotReachable(_)) => {
            intervals.push((left.m0().max(x_lo), x_hi, false));
        }
        Err(e) => return Err(e),
    }

    let mut found = Vec::new();
    for (a, b, closed) in intervals {
        let mut grid = cluster_grid(a, b, settings.n_grid);
        if closed {
            // transit times diverge logarithmically at the homoclinic
            // levels, so roots crowd against both ends
            for k in 0..=EDGE_DECADES * 3 {
                let d = (b - a) * 10f64.powf(-4.0 - k as f64 / 3.0);
                grid.extend([a + d, b - d]);
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
        if let Some(t) = maps.left_tangency.filter(|t| closed && t.x > a && t.x < b) {
            // near b* the orbits around x_t shrink onto the center and the
            // maps vary on scales far below the Chebyshev spacing
            grid.push(t.x);
            for k in 0..=TANGENCY_DECADES * 3 {
                let d = t.x * 10f64.powf(-2.0 - k as f64 / 3.0);
                grid.extend([t.x - d, t.x + d].into_iter().filter(|&x| x > a && x < b));
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
        let arrivals = eval_grid(maps, &grid);
        let j_max = if closed {
            let n = arrivals.iter().flatten().map(|a| a.times.len()).max().unwrap_or(2);
            j_cap(length, t_min, n)
        } else {
            1
        };
        if !closed {
            match arrivals.iter().rev().find_map(|a| a.as_ref()?.tau(1).ok()) {
                Some(t) if t < length => {}
                _ => {
                    return Err(Error::Resolution(format!(
                        "first transit time near the curve end x = {b} is not below {length}; \
                         raise the curve range"
                    )))
                }
            }
        }
        // refine cells around sign changes and near-touching extrema
        let mut fine = grid.clone();
        let mut extra = Vec::new();
        for j in 1..=j_max {
            let vals: Vec<Option<f64>> = arrivals
                .iter()
                .map(|a| a.as_ref().and_then(|a| a.tau(j).ok()).map(|t| t - length))
                .collect();
            for i in 0..grid.len().saturating_sub(1) {
                let suspicious = match (vals[i], vals[i + 1]) {
                    (Some(f0), Some(f1)) => {
                        f0.signum() != f1.signum()
                            || (i > 0
                                && vals[i - 1].map(|fm| fm.abs() > f0.abs()).unwrap_or(false)
                                && f0.abs() <= f1.abs())
                            || (i + 2 < vals.len()
                                && vals[i + 2].map(|fp| fp.abs() > f1.abs()).unwrap_or(false)
                                && f1.abs() <= f0.abs())
                    }
                    _ => false,
                };
                if suspicious {
                    for k in 1..settings.refine {
                        extra.push(grid[i] + (grid[i + 1] - grid[i]) * k as f64 / settings.refine as f64);
                    }
                }
            }
        }
        if !extra.is_empty() {
            fine.extend(extra);
            fine.sort_by(f64::total_cmp);
            fine.dedup();
        }
        let arrivals = if fine.len() == grid.len() { arrivals } else { eval_grid(maps, &fine) };
        let per_j: Vec<Vec<TimeMapRoot>> = (1..=j_max)
            .into_par_iter()
            .map(|j| {
                let f = |x: f64| maps.arrivals(x).ok().and_then(|a| a.tau(j).ok()).map(|t| t - length);
                let vals: Vec<Option<f64>> = arrivals
                    .iter()
                    .map(|a| a.as_ref().and_then(|a| a.tau(j).ok()).map(|t| t - length))
                    .collect();
                roots::grid_roots(f, &fine, &vals, 1e-15 * left.m0())
                    .into_iter()
                    // sign changes across a jump (start point on Γ₁,ν, or
                    // the degenerate orbit at the center) are not roots
                    .filter(|r| f(r.x).is_some_and(|v| v.abs() <= JUMP_TOL * length))
                    .map(|r| TimeMapRoot { x: r.x, j, double: r.double })
                    .collect()
            })
            .collect();
        found.extend(per_j.into_iter().flatten());
    }

    // merge roots that coincide on one branch
    found.sort_by(|a, b| a.j.cmp(&b.j).then(a.x.total_cmp(&b.x)));
    let tol = settings.dedup_tol * left.m0();
    found.dedup_by(|a, b| a.j == b.j && (a.x - b.x).abs() <= tol);
    Ok(found)
}

fn eval_grid(maps: &TimeMaps<'_>, grid: &[f64]) -> Vec<Option<Arrivals>> {
    grid.par_iter().map(|&x| maps.arrivals(x).ok()).collect()
}

/// Solutions at `b` (the curves carry `ν` and the other parameters).
pub fn solve_at(curves: &Curves, b: f64, settings: &SolverSettings) -> Result<SolutionSet> {
    let maps = TimeMaps::with_quad(curves, b, settings.quad)?;
    let roots = time_map_roots(&maps, settings)?;
    let params = curves.params.with_b(b);
    let mut roots = roots;
    if let Some(x) = center_on_curve(&maps)? {
        roots.push(TimeMapRoot { x, j: 0, double: false });
    }
    let results: Vec<(TimeMapRoot, Result<BvpSolution>)> = roots
        .par_iter()
        .map(|r| (*r, reconstruct_on(curves, r.x, r.j, &params, settings)))
        .collect();
    let mut solutions: Vec<BvpSolution> = Vec::new();
    let mut suspects = Vec::new();
    for (root, res) in results {
        match res {
            Ok(mut sol) => {
                // the same solution reached from two hit indices agrees to
                // root precision; distinct ones near a pitchfork can be close
                let dup = solutions.iter_mut().find(|s| {
                    (s.slope0 - sol.slope0).abs() <= 1e-10 * sol.slope0.abs().max(1.0)
                        && (s.x_alpha - sol.x_alpha).abs() <= 1e-9 * sol.x_alpha
                });
                match dup {
                    // a tangential hit: the same solution on two branches
                    Some(s) => s.multiplicity = 2,
                    None => {
                        if root.double {
                            sol.multiplicity = 2;
                        }
                        solutions.push(sol)
                    }
                }
            }
            Err(e) => suspects.push(Suspect {
                x: root.x,
                j: root.j,
                reason: e.to_string(),
            }),
        }
    }
    solutions.sort_by(|a, b| a.x_alpha.total_cmp(&b.x_alpha));
    Ok(SolutionSet {
        b,
        nu: curves.params.nu,
        solutions,
        suspects,
    })
}

/// The center `Ω` when it lies on Γ₀ (at `b = b*`): the solution that
/// rests at the equilibrium on the whole central piece.
fn center_on_curve(maps: &TimeMaps<'_>) -> Result<Option<f64>> {
    let omega = maps.well.center()?;
    let bottom = maps.well.center_energy()?;
    if !maps.curves.left.contains(omega) {
        return Ok(None);
    }
    let gap = maps.curves.left.energy(omega, &maps.well)? - bottom;
    Ok((gap <= 1e-10 * bottom.abs()).then_some(omega))
}

/// Profile of the solution with `u(α) = x` on branch `j`.
pub fn reconstruct(curves: &Curves, x: f64, j: u32, b: f64, settings: &SolverSettings) -> Result<BvpSolution> {
    reconstruct_on(curves, x, j, &curves.params.with_b(b), settings)
}

fn reconstruct_on(
    curves: &Curves,
    x: f64,
    j: u32,
    params: &ProblemParams,
    settings: &SolverSettings,
) -> Result<BvpSolution> {
    let ode = &settings.ode;
    let tol = settings.residual_tol * params.m.max(1.0);
    // the fresh Γ₀ shot fixes the left piece; integrate on through the
    // central and right pieces from its boundary slope
    let slope0 = curves.left.shoot_at(x)?.slope0;
    let residual = shooting_residual(slope0, params, ode).map(f64::abs).unwrap_or(f64::INFINITY);
    // the polished slope first; at a degenerate root the polish may slide
    // to a neighbouring solution, then the fresh slope stands
    let mut candidates = Vec::new();
    if let Ok(p) = polish_slope(slope0, params, ode) {
        let r = shooting_residual(p, params, ode).map(f64::abs).unwrap_or(f64::INFINITY);
        if r < residual && (p - slope0).abs() <= 1e-6 * slope0.abs().max(1.0) {
            candidates.push(p);
        }
    }
    candidates.push(slope0);
    let tol = tol.max(rounding_floor(slope0, params, ode).min(CONDITIONED_TOL_CAP * params.m.max(1.0)));
    let mut last = None;
    for s in candidates {
        match checked_profile(s, x, j, params, ode, tol) {
            Ok(sol) => return Ok(sol),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least the fresh slope was tried"))
}

/// Largest residual accepted for an ill-conditioned shot, relative to
/// `max(1, M)`.
const CONDITIONED_TOL_CAP: f64 = 1e-5;

/// Residual that a slope error of a few ulps produces: near-homoclinic
/// profiles amplify the last bits of `u'(0)` far beyond `residual_tol`.
fn rounding_floor(slope0: f64, params: &ProblemParams, ode: &OdeSettings) -> f64 {
    let h = 1e-10 * slope0.abs().max(1.0);
    match (
        shooting_residual(slope0 + h, params, ode),
        shooting_residual(slope0 - h, params, ode),
    ) {
        (Some(hi), Some(lo)) => 64.0 * f64::EPSILON * slope0.abs().max(1.0) * ((hi - lo) / (2.0 * h)).abs(),
        _ => 0.0,
    }
}

fn checked_profile(
    slope0: f64,
    x: f64,
    j: u32,
    params: &ProblemParams,
    ode: &OdeSettings,
    tol: f64,
) -> Result<BvpSolution> {
    let mut sol = profile_from_slope(slope0, params, ode)?;
    sol.j = j;
    if (sol.x_alpha - x).abs() > 1e-8 * x {
        return Err(Error::InconsistentRoot(format!(
            "reconstructed u(α) = {} differs from root x = {x}",
            sol.x_alpha
        )));
    }
    if sol.residual > tol {
        return Err(Error::InconsistentRoot(format!(
            "whole-interval residual {:e} at x = {x}, j = {j}",
            sol.residual
        )));
    }
    if !(sol.min_u() > 0.0) {
        return Err(Error::InconsistentRoot(format!("profile at x = {x} is not positive")));
    }
    Ok(sol)
}

/// `u(1; s) - M`, or `None` if the trajectory leaves `u > 0`.
pub fn shooting_residual(slope0: f64, params: &ProblemParams, ode: &OdeSettings) -> Option<f64> {
    let tr = integrate_full(slope0, params, ode).ok()?;
    if tr.left_positive_region() {
        return None;
    }
    Some(tr.end().1[0] - params.m)
}

fn polish_slope(s: f64, params: &ProblemParams, ode: &OdeSettings) -> Result<f64> {
    let f = |s: f64| shooting_residual(s, params, ode).unwrap_or(f64::NAN);
    let (mut s0, mut f0) = (s, f(s));
    let mut s1 = s * (1.0 + 1e-10) + 1e-12;
    let mut f1 = f(s1);
    for _ in 0..30 {
        if !(f0.is_finite() && f1.is_finite()) {
            return Err(Error::InconsistentRoot(format!("shooting polish left u > 0 near s = {s}")));
        }
        if f1 == 0.0 || f1 == f0 {
            break;
        }
        let s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = f(s1);
        if (s1 - s0).abs() <= 1e-15 * s1.abs().max(1.0) {
            break;
        }
    }
    Ok(s1)
}

/// Whole-interval profile from a boundary slope.
pub fn profile_from_slope(slope0: f64, params: &ProblemParams, ode: &OdeSettings) -> Result<BvpSolution> {
    let tr = integrate_full(slope0, params, ode)?;
    if tr.left_positive_region() {
        return Err(Error::NotReachable(format!("slope {slope0} leaves u > 0")));
    }
    let at = |t: f64| -> f64 {
        tr.samples
            .iter()
            .find(|(ts, _)| *ts == t)
            .map(|(_, y)| y[0])
            .unwrap_or(f64::NAN)
    };
    let (_, end) = tr.end();
    Ok(BvpSolution {
        x_alpha: at(params.alpha),
        x_one_minus_alpha: at(1.0 - params.alpha),
        j: 0,
        slope0,
        residual: (end[0] - params.m).abs(),
        profile: tr.samples.iter().map(|(t, y)| [*t, y[0], y[1]]).collect(),
        multiplicity: 1,
    })
}

/// Default oracle window: the slope range of Γ₀ samples, widened.
pub fn oracle_window(curves: &Curves, widen: f64) -> (f64, f64) {
    let s = curves.left.samples();
    let lo = s.iter().map(|c| c.slope0).fold(f64::INFINITY, f64::min);
    let hi = s.iter().map(|c| c.slope0).fold(f64::NEG_INFINITY, f64::max);
    let w = hi - lo;
    (lo - 0.5 * widen * w, hi + 0.5 * widen * w)
}

/// Independent solution count by whole-interval shooting: scan
/// `u(1; s) - M` over `n_scan` slopes, subdivide cells where the residual
/// jumps (solutions near the homoclinic crowd into tiny slope intervals),
/// bracket sign changes including pairs hidden inside one cell, and
/// refine to `1e-12` in `s`.
pub fn shooting_oracle(
    params: &ProblemParams,
    window: (f64, f64),
    n_scan: usize,
    ode: &OdeSettings,
) -> Result<Vec<BvpSolution>> {
    params.validate()?;
    let n = n_scan.max(4);
    let cell = (window.1 - window.0) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|k| window.0 + cell * k as f64).collect();
    let mut vals: Vec<Option<f64>> = grid.par_iter().map(|&s| shooting_residual(s, params, ode)).collect();
    let steep = 0.1 * params.m;
    let min_width = 1e-12 * window.0.abs().max(window.1.abs()).max(1.0);
    for _ in 0..MAX_REFINE_PASSES {
        let new: Vec<f64> = (0..grid.len() - 1)
            .filter(|&i| grid[i + 1] - grid[i] > min_width)
            .filter(|&i| match (vals[i], vals[i + 1]) {
                (Some(a), Some(b)) => (a - b).abs() > steep,
                (None, None) => false,
                _ => true,
            })
            .flat_map(|i| {
                let (a, b) = (grid[i], grid[i + 1]);
                (1..REFINE_SPLIT).map(move |k| a + (b - a) * k as f64 / REFINE_SPLIT as f64)
            })
            .collect();
        if new.is_empty() {
            break;
        }
        let new_vals: Vec<Option<f64>> = new.par_iter().map(|&s| shooting_residual(s, params, ode)).collect();
        let mut merged: Vec<(f64, Option<f64>)> = grid.into_iter().zip(vals).chain(new.into_iter().zip(new_vals)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        (grid, vals) = merged.into_iter().unzip();
    }
    let f = |s: f64| shooting_residual(s, params, ode);
    let found = roots::grid_roots(f, &grid, &vals, 1e-12);
    let mut out = Vec::new();
    for r in found {
        if r.x - window.0 < cell || window.1 - r.x < cell {
            return Err(Error::WindowTooSmall(format!(
                "root s = {} at the edge of [{}, {}]",
                r.x, window.0, window.1
            )));
        }
        let sol = profile_from_slope(r.x, params, ode)?;
        if sol.min_u() > 0.0 {
            out.push(sol);
        }
    }
    out.sort_by(|a, b| a.x_alpha.total_cmp(&b.x_alpha));
    Ok(out)
}

const MAX_REFINE_PASSES: usize = 8;
const REFINE_SPLIT: usize = 8;

/// Match two solution lists one-to-one by `u(α)`; returns the largest
/// mismatch, or `None` if the counts differ or a pairing fails `tol`.
pub fn match_solutions(a: &[BvpSolution], b: &[BvpSolution], tol: f64) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (p, q) in a.iter().zip(b) {
        let d = (p.x_alpha - q.x_alpha).abs();
        if d > tol {
            return None;
        }
        worst = worst.max(d);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_cap_bounds_hit_index() {
        // with 2 hits per round, τ_5 ≥ 2T
        assert_eq!(j_cap(0.5, 0.3, 2), 4);
        assert_eq!(j_cap(0.5, 0.2, 2), 6);
        assert_eq!(j_cap(0.1, 0.3, 2), 2);
    }

    #[test]
    fn cluster_grid_is_interior_and_sorted() {
        let g = cluster_grid(1.0, 2.0, 10);
        assert_eq!(g.len(), 9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g[0] > 1.0 && *g.last().unwrap() < 2.0);
        // denser near the ends
        assert!(g[1] - g[0] < g[5] - g[4]);
    }

    #[test]
    fn downsampling_keeps_endpoints() {
        let sol = BvpSolution {
            x_alpha: 0.0,
            x_one_minus_alpha: 0.0,
            j: 1,
            slope0: 0.0,
            residual: 0.0,
            profile: (0..11).map(|k| [k as f64 / 10.0, 1.0, 0.0]).collect(),
            multiplicity: 1,
        };
        let d = sol.downsampled(3);
        assert_eq!(d.profile.len(), 3);
        assert_eq!(d.profile[0][0], 0.0);
        assert_eq!(d.profile[2][0], 1.0);
        assert!(sol.downsampled(0).profile.is_empty());
    }
}
