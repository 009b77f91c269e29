//! Boundary curves Γ₀ (states reachable at `t = α`) and Γ₁,ν (states at
//! `t = 1-α`), built by shooting the outer problems from `u = M`.
//!
//! Each shot also integrates the variational equations, so every sample
//! carries the exact curve slope `dy/dx`. The curves are stored as cubic
//! Hermite interpolants in `x` with those slopes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeSettings, Side};
use crate::problem::{pow_nonneg, signed_pow, ProblemParams, Well};
use crate::roots::{self, GridRoot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaSettings {
    /// Largest sample spacing in `x`, as a fraction of `m0`.
    pub x_resolution: f64,
    /// Upper end of the sampled range, as a multiple of `m0`.
    pub x_max_factor: f64,
    pub initial_shots: usize,
    pub max_samples: usize,
    /// Largest Hermite midpoint error accepted without refinement.
    pub interp_tol: f64,
    pub ode: OdeSettings,
}

impl Default for GammaSettings {
    fn default() -> Self {
        Self {
            x_resolution: 0.02,
            x_max_factor: 4.0,
            initial_shots: 65,
            max_samples: 40_000,
            interp_tol: 1e-13,
            ode: OdeSettings::precise(),
        }
    }
}

/// One outer-problem shot: the end state `(x, y)` and its derivatives
/// with respect to the boundary slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub slope0: f64,
    pub x: f64,
    pub y: f64,
    pub dx_ds: f64,
    pub dy_ds: f64,
}

impl Shot {
    pub fn dydx(&self) -> f64 {
        self.dy_ds / self.dx_ds
    }
}

/// Parameters of one outer problem.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outer {
    side: Side,
    weight: f64,
    lambda: f64,
    p: f64,
    m: f64,
    t0: f64,
    t1: f64,
}

impl Outer {
    fn new(side: Side, params: &ProblemParams) -> Self {
        let (weight, t0, t1) = match side {
            Side::Left => (params.c, 0.0, params.alpha),
            Side::Right => (params.right_c(), 1.0, 1.0 - params.alpha),
        };
        Self {
            side,
            weight,
            lambda: params.lambda,
            p: params.p,
            m: params.m,
            t0,
            t1,
        }
    }

    /// `σ = ±s`, oriented so that `x` increases with `σ` on both sides.
    fn orientation(&self) -> f64 {
        match self.side {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    /// Shoot with boundary slope `s`; `None` if `u` reaches zero.
    fn shoot(&self, s: f64, settings: &OdeSettings) -> Result<Option<Shot>> {
        let (lam, c, p) = (self.lambda, self.weight, self.p);
        let rhs = move |_t: f64, y: &[f64; 4]| {
            let u = y[0];
            let jac = -lam + c * p * pow_nonneg(u.max(0.0), p - 1.0);
            [y[1], -lam * u + c * signed_pow(u, p), y[3], jac * y[2]]
        };
        let tr = ode::solve(rhs, self.t0, [self.m, s, 0.0, 1.0], self.t1, &[], Some(0), settings)?;
        if tr.left_positive_region() {
            return Ok(None);
        }
        let (_, y) = tr.end();
        // backward integration: d/ds of the end state is the same system
        Ok(Some(Shot {
            slope0: s,
            x: y[0],
            y: y[1],
            dx_ds: y[2],
            dy_ds: y[3],
        }))
    }

    fn shoot_sigma(&self, sigma: f64, settings: &OdeSettings) -> Result<Option<Shot>> {
        self.shoot(self.orientation() * sigma, settings)
    }
}

/// A curve sample: the end state of one admissible shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub x: f64,
    pub y: f64,
    pub dydx: f64,
    pub slope0: f64,
    pub dx_ds: f64,
}

impl From<Shot> for CurveSample {
    fn from(s: Shot) -> Self {
        Self {
            x: s.x,
            y: s.y,
            dydx: s.dydx(),
            slope0: s.slope0,
            dx_ds: s.dx_ds,
        }
    }
}

/// `(value, derivative)` of the cubic Hermite interpolant on one cell.
#[inline]
fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dv = ((6.0 * t2 - 6.0 * t) * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * d0
        + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * h * d1)
        / h;
    (v, dv)
}

/// Fritsch–Carlson limiting of node derivatives so each cell stays
/// monotone. With exact slopes of a monotone curve it rarely acts.
fn limit_monotone(xs: &[f64], ys: &[f64], ds: &mut [f64]) {
    for i in 0..xs.len().saturating_sub(1) {
        let delta = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        if delta == 0.0 {
            ds[i] = 0.0;
            ds[i + 1] = 0.0;
            continue;
        }
        let a = ds[i] / delta;
        let b = ds[i + 1] / delta;
        if a < 0.0 {
            ds[i] = 0.0;
        }
        if b < 0.0 {
            ds[i + 1] = 0.0;
        }
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            ds[i] = tau * a * delta;
            ds[i + 1] = tau * b * delta;
        }
    }
}

/// Γ₀ (`side = Left`, graph of `y₀^c`) or Γ₁,ν (`side = Right`, graph of
/// `-y₀^{νc}`).
#[derive(Debug, Clone)]
pub struct GammaCurve {
    side: Side,
    outer_weight: f64,
    params: ProblemParams,
    samples: Vec<CurveSample>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    dys: Vec<f64>,
    m0: f64,
    ode: OdeSettings,
}

impl GammaCurve {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    /// The outer weight magnitude this curve was shot with (`c` or `νc`).
    pub fn outer_weight(&self) -> f64 {
        self.outer_weight
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().expect("non-empty"))
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.x_range();
        x >= lo && x <= hi
    }

    fn cell(&self, x: f64) -> Result<usize> {
        if !self.contains(x) {
            let (lo, hi) = self.x_range();
            return Err(Error::Domain(format!("x = {x} outside curve range [{lo}, {hi}]")));
        }
        let i = self.xs.partition_point(|&xi| xi <= x);
        Ok(i.clamp(1, self.xs.len() - 1) - 1)
    }

    /// Interpolated `(y(x), y'(x))`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let i = self.cell(x)?;
        Ok(hermite(
            self.xs[i],
            self.xs[i + 1],
            self.ys[i],
            self.ys[i + 1],
            self.dys[i],
            self.dys[i + 1],
            x,
        ))
    }

    pub fn y(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.0)
    }

    /// Interpolated boundary slope that produces the curve point at `x`.
    pub fn slope0_at(&self, x: f64) -> Result<f64> {
        let i = self.cell(x)?;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        Ok(hermite(a.x, b.x, a.slope0, b.slope0, 1.0 / a.dx_ds, 1.0 / b.dx_ds, x).0)
    }

    /// A fresh shot landing on abscissa `x`, found by Newton iteration on
    /// the boundary slope.
    pub fn shoot_at(&self, x: f64) -> Result<Shot> {
        let outer = Outer::new(self.side, &self.params);
        let mut s = self.slope0_at(x)?;
        let mut last = None;
        for _ in 0..12 {
            let shot = outer
                .shoot(s, &self.ode)?
                .ok_or_else(|| Error::Domain(format!("slope {s} leaves u > 0")))?;
            let dx = shot.x - x;
            last = Some(shot);
            if dx.abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
                break;
            }
            let step = dx / shot.dx_ds;
            s -= step;
            if step.abs() <= f64::EPSILON * s.abs() {
                break;
            }
        }
        last.ok_or_else(|| Error::Resolution("no shot".into()))
    }

    /// Energy `E_x = y(x)² + φ(x)` of the central orbit through the curve
    /// point at `x`.
    pub fn energy(&self, x: f64, well: &Well) -> Result<f64> {
        let y = self.y(x)?;
        Ok(y * y + well.potential(x))
    }

    /// `dE_x/dx` from the interpolant.
    pub fn energy_slope(&self, x: f64, well: &Well) -> Result<f64> {
        let (y, dy) = self.eval(x)?;
        Ok(2.0 * y * dy + well.dpotential(x))
    }

    /// All abscissas where the orbit of energy `level` meets the curve,
    /// i.e. the roots of `E_x = level`. `split` (usually the tangency
    /// abscissa) is inserted into the search grid.
    pub fn level_crossings(&self, well: &Well, level: f64, split: Option<f64>) -> Vec<GridRoot> {
        let mut grid = self.xs.clone();
        if let Some(xs) = split.filter(|&x| self.contains(x)) {
            let i = grid.partition_point(|&g| g < xs);
            if grid.get(i) != Some(&xs) {
                grid.insert(i, xs);
            }
        }
        let f = |x: f64| self.energy(x, well).ok().map(|e| e - level);
        let values: Vec<_> = grid.iter().map(|&x| f(x)).collect();
        let scale = self.m0.max(1e-300);
        roots::grid_roots(f, &grid, &values, 1e-15 * scale)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,slope0\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::export::fmt_f64(s.x),
                crate::export::fmt_f64(s.y),
                crate::export::fmt_f64(s.slope0)
            ));
        }
        out
    }
}

/// Shoot the outer problem on `side` and assemble its boundary curve.
///
/// Slopes are sampled from the positivity edge (where `x = 0`) up to
/// `x = x_max_factor · m0`, refining until neighbouring samples are closer
/// than `x_resolution · m0` and the Hermite interpolant reproduces every
/// midpoint shot to `interp_tol`.
pub fn build_curve(side: Side, params: &ProblemParams, settings: &GammaSettings) -> Result<GammaCurve> {
    params.validate()?;
    let outer = Outer::new(side, params);
    let ode = &settings.ode;
    let admissible = |sigma: f64| -> Result<Option<Shot>> { outer.shoot_sigma(sigma, ode) };

    // positivity edge: shots with σ below it reach u = 0
    let mut hi = 0.0;
    if admissible(hi)?.is_none() {
        return Err(Error::Resolution("zero boundary slope is not admissible".into()));
    }
    let mut step = 1.0;
    let mut lo = -step;
    while admissible(lo)?.is_some() {
        hi = lo;
        step *= 2.0;
        lo = hi - step;
        if step > 1e12 {
            return Err(Error::Resolution("no positivity edge found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if admissible(mid)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma_edge = hi;
    let edge = admissible(sigma_edge)?.expect("edge is admissible");

    // zero of y in σ
    let y_of = |sigma: f64| -> f64 {
        match admissible(sigma) {
            Ok(Some(s)) => s.y,
            _ => f64::NAN,
        }
    };
    let sigma_m0 = roots::brent(y_of, sigma_edge, 0.0, 1e-15)
        .map_err(|e| Error::NotBracketed(format!("curve has no zero crossing: {e}")))?;
    let m0_shot = admissible(sigma_m0)?.ok_or_else(|| Error::Resolution("m0 shot failed".into()))?;
    let x_max = settings.x_max_factor * m0_shot.x;

    let x_of = |sigma: f64| -> f64 {
        match admissible(sigma) {
            Ok(Some(s)) => s.x - x_max,
            _ => f64::NAN,
        }
    };
    let mut top = 0.0;
    let mut width = 1.0;
    while x_of(top) < 0.0 {
        top += width;
        width *= 2.0;
        if width > 1e12 {
            return Err(Error::Resolution("cannot reach x_max".into()));
        }
    }
    let sigma_max = roots::brent(x_of, sigma_m0, top, 1e-15)?;

    // initial uniform grid in σ, then midpoint refinement
    let n0 = settings.initial_shots.max(3);
    let sigmas: Vec<f64> = (0..n0)
        .map(|i| sigma_edge + (sigma_max - sigma_edge) * i as f64 / (n0 - 1) as f64)
        .collect();
    let mut pts: Vec<(f64, Shot)> = shoot_many(&outer, &sigmas, ode)?
        .into_iter()
        .zip(sigmas)
        .map(|(s, sig)| (sig, s))
        .collect();
    pts[0] = (sigma_edge, edge);
    let x_res = settings.x_resolution * m0_shot.x;
    let mut pending: Vec<bool> = vec![true; pts.len() - 1];
    loop {
        let cells: Vec<usize> = (0..pending.len()).filter(|&i| pending[i]).collect();
        if cells.is_empty() {
            break;
        }
        if pts.len() + cells.len() > settings.max_samples {
            return Err(Error::Resolution(format!(
                "curve needs more than {} samples",
                settings.max_samples
            )));
        }
        let mids: Vec<f64> = cells.iter().map(|&i| 0.5 * (pts[i].0 + pts[i + 1].0)).collect();
        let shots = shoot_many(&outer, &mids, ode)?;
        let mut next_pts = Vec::with_capacity(pts.len() + cells.len());
        let mut next_pending = Vec::with_capacity(pending.len() + cells.len());
        let mut k = 0;
        for i in 0..pts.len() {
            next_pts.push(pts[i]);
            if i + 1 == pts.len() {
                break;
            }
            if k < cells.len() && cells[k] == i {
                let (a, b, m) = (pts[i].1, pts[i + 1].1, shots[k]);
                let (ym, _) = hermite(a.x, b.x, a.y, b.y, a.dydx(), b.dydx(), m.x);
                let err = (ym - m.y).abs();
                let refine = (b.x - a.x) > x_res || err > settings.interp_tol;
                next_pts.push((mids[k], m));
                next_pending.push(refine);
                next_pending.push(refine);
                k += 1;
            } else {
                next_pending.push(false);
            }
        }
        pts = next_pts;
        pending = next_pending;
    }

    let samples: Vec<CurveSample> = pts.iter().map(|(_, s)| CurveSample::from(*s)).collect();
    assemble(side, params, samples, outer.weight, *ode)
}

fn shoot_many(outer: &Outer, sigmas: &[f64], ode: &OdeSettings) -> Result<Vec<Shot>> {
    sigmas
        .par_iter()
        .map(|&sig| {
            outer
                .shoot_sigma(sig, ode)?
                .ok_or_else(|| Error::Resolution(format!("shot σ = {sig} inside the window left u > 0")))
        })
        .collect()
}

fn assemble(
    side: Side,
    params: &ProblemParams,
    samples: Vec<CurveSample>,
    outer_weight: f64,
    ode: OdeSettings,
) -> Result<GammaCurve> {
    if samples.len() < 3 {
        return Err(Error::Resolution(format!("only {} admissible samples", samples.len())));
    }
    let increasing = side == Side::Left;
    for w in samples.windows(2) {
        if !(w[1].x > w[0].x) {
            return Err(Error::Invariant(format!(
                "curve abscissas not increasing at x = {}",
                w[0].x
            )));
        }
        let up = w[1].y > w[0].y;
        if up != increasing || w[1].y == w[0].y {
            return Err(Error::Invariant(format!(
                "curve ordinate not strictly {} at x = {}",
                if increasing { "increasing" } else { "decreasing" },
                w[0].x
            )));
        }
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let mut dys: Vec<f64> = samples.iter().map(|s| s.dydx).collect();
    limit_monotone(&xs, &ys, &mut dys);
    let mut curve = GammaCurve {
        side,
        outer_weight,
        params: *params,
        samples,
        xs,
        ys,
        dys,
        m0: f64::NAN,
        ode,
    };
    curve.m0 = find_m0(&curve)?;
    Ok(curve)
}

/// The unique zero of the curve ordinate: a root of the interpolant,
/// polished by secant iteration on fresh shots.
pub fn find_m0(curve: &GammaCurve) -> Result<f64> {
    let signs: Vec<usize> = curve
        .ys
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].signum() != w[1].signum() || w[1] == 0.0)
        .map(|(i, _)| i)
        .collect();
    let i = match signs.as_slice() {
        [] => return Err(Error::NotBracketed("curve ordinate has no sign change".into())),
        [i] => *i,
        _ => return Err(Error::Invariant("curve ordinate changes sign more than once".into())),
    };
    let (a, b) = (curve.xs[i], curve.xs[i + 1]);
    let x_interp = roots::brent(|x| curve.y(x).unwrap_or(f64::NAN), a, b, 1e-16 * b)?;
    let fresh = |x: f64| -> Result<f64> { Ok(curve.shoot_at(x)?.y) };
    let (mut x0, mut f0) = (x_interp, fresh(x_interp)?);
    let mut x1 = x_interp * (1.0 + 1e-7);
    let mut f1 = fresh(x1)?;
    for _ in 0..20 {
        if f1 == 0.0 || f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = fresh(x1)?;
        if (x1 - x0).abs() <= 4.0 * f64::EPSILON * x1 {
            break;
        }
    }
    if f1.abs() > 1e-10 {
        return Err(Error::Resolution(format!("m0 residual {f1}")));
    }
    Ok(x1)
}

pub fn energy_on_curve(curve: &GammaCurve, x: f64, b: f64) -> Result<f64> {
    let well = curve.params.well_at(b);
    curve.energy(x, &well)
}

/// The orbit of least energy touching a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyData {
    pub x_t: f64,
    pub e_t: f64,
    pub y_t: f64,
    pub is_unique: bool,
    pub b: f64,
}

/// The tangent orbit: the minimizer of `E_x` along the curve.
///
/// Sampled local minima are refined by Brent's minimizer on the
/// interpolant and then by solving `dE_x/dx = 0` on fresh shots.
pub fn tangent_orbit(curve: &GammaCurve, b: f64) -> Result<TangencyData> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("tangency needs b > 0, got {b}")));
    }
    let well = curve.params.well_at(b);
    let es: Vec<f64> = curve
        .samples
        .iter()
        .map(|s| s.y * s.y + well.potential(s.x))
        .collect();
    let n = es.len();
    let imin = (0..n).min_by(|&a, &b| es[a].total_cmp(&es[b])).expect("non-empty");
    if imin == 0 || imin == n - 1 {
        return Err(Error::Resolution(format!(
            "energy along the curve is minimal at the range boundary x = {} (b = {b})",
            curve.xs[imin]
        )));
    }
    let refine = |i: usize| -> Result<(f64, f64)> {
        let (lo, hi) = (curve.xs[i - 1], curve.xs[i + 1]);
        let (x_c, _) = roots::minimize(|x| curve.energy(x, &well).unwrap_or(f64::INFINITY), lo, hi, 1e-15 * hi);
        let fresh_slope = |x: f64| -> f64 {
            match curve.shoot_at(x) {
                Ok(s) => 2.0 * s.y * s.dydx() + well.dpotential(x),
                Err(_) => f64::NAN,
            }
        };
        let h = 0.25 * (hi - lo);
        let (a, c) = ((x_c - h).max(lo), (x_c + h).min(hi));
        let x_t = match roots::brent(fresh_slope, a, c, 1e-16 * c) {
            Ok(x) => x,
            Err(_) => x_c,
        };
        let shot = curve.shoot_at(x_t)?;
        Ok((x_t, shot.y))
    };
    let (x_t, y_t) = refine(imin)?;
    let e_t = y_t * y_t + well.potential(x_t);

    // other separated local minima at (numerically) the same level
    let cell = (curve.xs[imin + 1] - curve.xs[imin - 1]).abs();
    let mut is_unique = true;
    for i in 1..n - 1 {
        if i == imin || !(es[i] <= es[i - 1] && es[i] <= es[i + 1]) {
            continue;
        }
        if (curve.xs[i] - x_t).abs() <= 2.0 * cell {
            continue;
        }
        let (x_o, _) = roots::minimize(
            |x| curve.energy(x, &well).unwrap_or(f64::INFINITY),
            curve.xs[i - 1],
            curve.xs[i + 1],
            1e-15,
        );
        let e_o = curve.energy(x_o, &well)?;
        if (e_o - e_t).abs() <= 1e-9 {
            is_unique = false;
        }
    }
    Ok(TangencyData { x_t, e_t, y_t, is_unique, b })
}

/// Critical weights at which the homoclinic level touches each curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicTangency {
    pub left: f64,
    pub right: f64,
    /// The smaller of the two.
    pub effective: f64,
    pub is_unique: bool,
}

/// Root in `b` of `E_t(b) = 0` for one curve.
pub fn find_b_h_curve(curve: &GammaCurve, bracket: (f64, f64)) -> Result<(f64, bool)> {
    let et = |b: f64| tangent_orbit(curve, b).map(|t| t.e_t).unwrap_or(f64::NAN);
    let (lo, hi) = bracket;
    let (flo, fhi) = (et(lo), et(hi));
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::NotBracketed(format!(
            "tangent energy {flo} at b = {lo}, {fhi} at b = {hi}"
        )));
    }
    let b_h = roots::brent_with(et, lo, hi, flo, fhi, 1e-13 * hi)?;
    let unique = tangent_orbit(curve, b_h)?.is_unique;
    Ok((b_h, unique))
}

/// `b_h` for both curves. Without a bracket one is grown upward from the
/// weight that puts the center at the curve's zero.
pub fn find_b_h(curves: &Curves, bracket: Option<(f64, f64)>) -> Result<HomoclinicTangency> {
    let one = |curve: &GammaCurve| -> Result<(f64, bool)> {
        let br = match bracket {
            Some(b) => b,
            None => {
                let lo = crate::problem::critical_b_star(curve.m0, curve.params.lambda, curve.params.p)?;
                let mut hi = 1.5 * lo;
                while tangent_orbit(curve, hi)?.e_t <= 0.0 {
                    hi *= 1.5;
                    if hi > 1e6 * lo {
                        return Err(Error::NotBracketed("no b with positive tangent energy".into()));
                    }
                }
                (lo, hi)
            }
        };
        find_b_h_curve(curve, br)
    };
    let (left, ul) = one(&curves.left)?;
    let (right, ur) = if curves.params.nu == 1.0 { (left, ul) } else { one(&curves.right)? };
    Ok(HomoclinicTangency {
        left,
        right,
        effective: left.min(right),
        is_unique: ul && ur,
    })
}

/// The two intersections `x_h^- < x_t < x_h^+` of the homoclinic with
/// the curve.
pub fn homoclinic_hits(curve: &GammaCurve, b: f64) -> Result<(f64, f64)> {
    let t = tangent_orbit(curve, b)?;
    if t.e_t >= 0.0 {
        return Err(Error::NotReachable(format!(
            "homoclinic does not meet the curve at b = {b} (tangent energy {})",
            t.e_t
        )));
    }
    let well = curve.params.well_at(b);
    let hits = curve.level_crossings(&well, 0.0, Some(t.x_t));
    let lo = hits.iter().rev().find(|r| r.x < t.x_t);
    let hi = hits.iter().find(|r| r.x > t.x_t);
    match (lo, hi) {
        (Some(a), Some(c)) => {
            let polish = |x0: f64| -> Result<f64> {
                let fresh = |x: f64| match curve.shoot_at(x) {
                    Ok(s) => s.y * s.y + well.potential(x),
                    Err(_) => f64::NAN,
                };
                let h = 1e-6 * x0;
                roots::brent(fresh, x0 - h, x0 + h, 1e-16 * x0).or(Ok(x0))
            };
            Ok((polish(a.x)?, polish(c.x)?))
        }
        _ => Err(Error::Resolution(format!(
            "homoclinic intersections at b = {b} lie outside the curve range"
        ))),
    }
}

/// Both boundary curves of one parameter set.
#[derive(Debug, Clone)]
pub struct Curves {
    pub params: ProblemParams,
    pub left: GammaCurve,
    pub right: GammaCurve,
}

impl Curves {
    pub fn build(params: &ProblemParams, settings: &GammaSettings) -> Result<Self> {
        let (left, right) = rayon::join(
            || build_curve(Side::Left, params, settings),
            || build_curve(Side::Right, params, settings),
        );
        Ok(Self {
            params: *params,
            left: left?,
            right: right?,
        })
    }

    /// `b* = -λ / m0^{p-1}` with `m0` of Γ₀.
    pub fn b_star(&self) -> f64 {
        -self.params.lambda / self.left.m0.powf(self.params.p - 1.0)
    }

    pub fn with_b(&self, b: f64) -> Self {
        let mut c = self.clone();
        c.params.b = b;
        c.left.params.b = b;
        c.right.params.b = b;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference() -> ProblemParams {
        ProblemParams {
            lambda: -200.0,
            p: 2.0,
            alpha: 0.25,
            b: 0.0,
            c: 0.1,
            nu: 1.0,
            m: 1.0,
        }
    }

    fn coarse() -> GammaSettings {
        GammaSettings {
            x_resolution: 0.1,
            interp_tol: 1e-11,
            ..GammaSettings::default()
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let (v, d) = hermite(0.5, 1.5, f(0.5), f(1.5), df(0.5), df(1.5), 1.2);
        assert!((v - f(1.2)).abs() < 1e-14);
        assert!((d - df(1.2)).abs() < 1e-13);
    }

    #[test]
    fn left_curve_is_increasing_graph_with_zero() {
        let c = build_curve(Side::Left, &reference(), &coarse()).unwrap();
        assert!(c.samples().windows(2).all(|w| w[1].y > w[0].y));
        assert!(c.y(c.m0()).unwrap().abs() < 1e-10);
        let (lo, hi) = c.x_range();
        assert!(lo < 1e-6 * c.m0() && (hi / c.m0() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn samples_match_fresh_outer_integrations() {
        let params = reference();
        let c = build_curve(Side::Left, &params, &coarse()).unwrap();
        for s in c.samples().iter().step_by(7) {
            let tr = ode::integrate_outer(Side::Left, s.slope0, &params, &OdeSettings::precise()).unwrap();
            let (_, end) = tr.end_point();
            assert!((end.u - s.x).abs() < 1e-8 && (end.v - s.y).abs() < 1e-8);
        }
    }

    #[test]
    fn mirror_law_at_nu_one() {
        let params = reference();
        let l = build_curve(Side::Left, &params, &coarse()).unwrap();
        let r = build_curve(Side::Right, &params, &coarse()).unwrap();
        assert!((l.m0() - r.m0()).abs() < 1e-8);
        for k in 1..40 {
            let x = l.m0() * 0.1 * k as f64;
            assert!((l.y(x).unwrap() + r.y(x).unwrap()).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn tangency_near_b_star_approaches_m0() {
        let params = reference();
        let c = build_curve(Side::Left, &params, &coarse()).unwrap();
        let bs = crate::problem::critical_b_star(c.m0(), params.lambda, params.p).unwrap();
        let t = tangent_orbit(&c, bs * 1.0001).unwrap();
        assert!(t.is_unique);
        assert!((t.x_t - c.m0()).abs() < 1e-3 * c.m0());
        let well = params.well_at(bs * 1.0001);
        // level E_t touches once, E_t + ε crosses twice
        let eps = 1e-6 * t.e_t.abs();
        let above = c.level_crossings(&well, t.e_t + eps, Some(t.x_t));
        assert_eq!(above.len(), 2);
        let below = c.level_crossings(&well, t.e_t - eps, Some(t.x_t));
        assert!(below.is_empty());
    }
}
