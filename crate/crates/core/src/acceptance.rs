//! The acceptance suite: ten numbered checks on the reference
//! configuration, each reported as one pass/fail line.

use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagram::{self, BifpointSettings, BifurcationPoint, Figure6Case, ImperfectSettings, Sign};
use crate::error::{Error, Result};
use crate::gamma::{build_curve, Curves, GammaSettings};
use crate::ode::{integrate_central, integrate_full, Direction, EventSpec, OdeSettings, Side};
use crate::problem::{lambda_threshold, PhasePoint, ProblemParams, Well};
use crate::solver::{self, SolverSettings};
use crate::timemap::{self, CurveHit, TimeMaps};

/// `p = 2, α = 0.25, c = 0.1, M = 1, ν = 1` with `λ` midway between
/// `λ₁` and `λ₂`.
pub fn reference_params() -> ProblemParams {
    let l1 = lambda_threshold(1, 2.0, 0.25).expect("valid j");
    let l2 = lambda_threshold(2, 2.0, 0.25).expect("valid j");
    ProblemParams {
        lambda: 0.5 * (l1 + l2),
        p: 2.0,
        alpha: 0.25,
        b: 0.0,
        c: 0.1,
        nu: 1.0,
        m: 1.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} {:>7.1}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const NAMES: [&str; 10] = [
    "energy conservation",
    "quadrature vs ode",
    "harmonic limit",
    "multiplicity at b*",
    "symmetry suite",
    "bifurcation point",
    "perturbation chains",
    "imperfect bifurcation",
    "reflection equivalence",
    "boundary curve structure",
];

/// Shared state for the suite; curves and `b_b` are built once.
pub struct Suite {
    pub params: ProblemParams,
    pub gamma: GammaSettings,
    pub solver: SolverSettings,
    pub seed: u64,
    curves: OnceLock<Result<Curves>>,
    bifpoint: OnceLock<Result<BifurcationPoint>>,
}

impl Suite {
    pub fn new(params: ProblemParams, gamma: GammaSettings, solver: SolverSettings, seed: u64) -> Self {
        Self {
            params: params.with_nu(1.0),
            gamma,
            solver,
            seed,
            curves: OnceLock::new(),
            bifpoint: OnceLock::new(),
        }
    }

    pub fn reference() -> Self {
        Self::new(reference_params(), GammaSettings::default(), SolverSettings::default(), 20_240_917)
    }

    fn curves(&self) -> Result<&Curves> {
        self.curves
            .get_or_init(|| Curves::build(&self.params, &self.gamma))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn bifpoint(&self) -> Result<&BifurcationPoint> {
        self.bifpoint
            .get_or_init(|| {
                let curves = self.curves()?;
                diagram::find_bifurcation_point(curves, 1, Sign::Plus, &BifpointSettings::default())
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn rng(&self, id: u8) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ u64::from(id).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    /// Run check `id` (1 to 10).
    pub fn run(&self, id: u8) -> Check {
        let start = Instant::now();
        let outcome = match id {
            1 => self.conservation(),
            2 => self.quadrature_vs_ode(),
            3 => self.harmonic_limit(),
            4 => self.multiplicity(),
            5 => self.symmetry(),
            6 => self.bifurcation_point(),
            7 => self.perturbation_chains(),
            8 => self.imperfect(),
            9 => self.reflection(),
            10 => self.curve_structure(),
            _ => Err(Error::Domain(format!("no acceptance check {id}"))),
        };
        let (passed, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        Check {
            id,
            name: NAMES.get(usize::from(id).wrapping_sub(1)).copied().unwrap_or("unknown"),
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    pub fn run_all(&self) -> Vec<Check> {
        (1..=10).map(|id| self.run(id)).collect()
    }

    fn conservation(&self) -> Result<(bool, String)> {
        let well = Well::new(-1.0, 1.0, 2.0)?;
        let bottom = well.center_energy()?;
        let mut rng = self.rng(1);
        let starts: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.gen_range(0.02..0.98), rng.gen_range(0.0..1.0)))
            .collect();
        let ode = OdeSettings::default();
        let worst = starts
            .par_iter()
            .map(|&(fe, fu)| -> Result<f64> {
                let e0 = bottom * fe;
                let (xm, xmax) = timemap::turning_points(e0, &well)?;
                let u = xm + fu * (xmax - xm);
                let v = (e0 - well.potential(u)).max(0.0).sqrt();
                let start = PhasePoint::new(u, v);
                let e0 = well.energy(start);
                let tr = integrate_central(start, 1.0, -1.0, 2.0, (0.0, 10.0), &[], &ode)?;
                Ok(tr
                    .points()
                    .map(|(_, p)| (well.energy(p) - e0).abs() / e0.abs().max(1.0))
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok((worst <= 1e-8, format!("100 orbits, max |ΔE| = {worst:.2e} (tol 1e-8)")))
    }

    fn quadrature_vs_ode(&self) -> Result<(bool, String)> {
        let curves = self.curves()?;
        let b_star = curves.b_star();
        let mut rng = self.rng(2);
        let draws: Vec<(f64, f64, u32)> = (0..50)
            .map(|_| (rng.gen_range(0.6..1.7) * b_star, rng.gen_range(0.0..1.0), rng.gen_range(1..=4)))
            .collect();
        let diffs = draws
            .par_iter()
            .map(|&(b, fx, j)| transit_check(curves, b, fx, j))
            .collect::<Result<Vec<f64>>>()?;
        let worst = diffs.iter().cloned().fold(0.0, f64::max);
        Ok((worst <= 1e-6, format!("50 samples, max |τ_quad - τ_ode| = {worst:.2e} (tol 1e-6)")))
    }

    fn harmonic_limit(&self) -> Result<(bool, String)> {
        let curves = self.curves()?;
        let wells = [Well::new(-1.0, 1.0, 2.0)?, self.params.well_at(curves.b_star())];
        let mut worst: f64 = 0.0;
        for w in &wells {
            let bottom = w.center_energy()?;
            let t = timemap::period(bottom + 1e-6 * bottom.abs(), w)?;
            worst = worst.max((t - w.small_oscillation_period()).abs());
        }
        Ok((worst <= 1e-3, format!("|T - 2π/√(-λ(p-1))| = {worst:.2e} (tol 1e-3)")))
    }

    fn multiplicity(&self) -> Result<(bool, String)> {
        let curves = self.curves()?;
        let b = curves.b_star();
        let set = solver::solve_at(curves, b, &self.solver)?;
        let window = solver::oracle_window(curves, self.solver.window_widen);
        let oracle = solver::shooting_oracle(&self.params.with_b(b), window, self.solver.n_scan, &self.solver.ode)?;
        let m = solver::match_solutions(&set.solutions, &oracle, 1e-6);
        let n = set.solutions.len();
        let passed = n >= 4 && m.is_some() && set.suspects.is_empty();
        Ok((
            passed,
            format!(
                "solve_at {n}, oracle {}, max |Δu(α)| = {} (tol 1e-6)",
                oracle.len(),
                m.map_or("unmatched".into(), |v| format!("{v:.2e}"))
            ),
        ))
    }

    fn symmetry(&self) -> Result<(bool, String)> {
        let curves = self.curves()?;
        let b_star = curves.b_star();
        let b = 1.5 * b_star;
        let maps = TimeMaps::new(curves, b)?;
        let x_t = maps.x_t()?;
        let (lo, hi) = maps.closed_domain()?;
        let mut failures = Vec::new();

        // hit identities and reflection identity on a sample across the domain
        let mut hit_err: f64 = 0.0;
        let mut theta_err: f64 = 0.0;
        for k in 1..20 {
            let x = lo + (hi - lo) * (0.05 + 0.9 * k as f64 / 20.0);
            if (x - x_t).abs() < 1e-3 * x_t {
                continue;
            }
            let (x0, _) = maps.x0_partner(x)?;
            let (minus, plus) = hit_pair(&maps.gamma1_hits(maps.energy_at(x)?), x_t)?;
            let (want_minus, want_plus) = if x < x_t { (x, x0) } else { (x0, x) };
            hit_err = hit_err.max((minus - want_minus).abs().max((plus - want_plus).abs()) / x_t);
            let t2 = maps.theta(x, 2)?.value;
            let t2p = maps.theta(x0, 2)?.value;
            theta_err = theta_err.max((t2 - t2p).abs());
        }
        if hit_err > 1e-8 {
            failures.push(format!("hit identity off by {hit_err:.1e}"));
        }
        if theta_err > 1e-7 {
            failures.push(format!("θ₂ reflection off by {theta_err:.1e}"));
        }

        // strict ordering next to the tangency
        for k in 2..7 {
            for s in [-1.0, 1.0] {
                let x = x_t * (1.0 + s * 10f64.powi(-k));
                let a = maps.arrivals(x)?;
                if !(a.tau(1)? < a.tau(2)?) {
                    failures.push(format!("τ₁ < τ₂ fails at x = {x}"));
                }
            }
        }

        // Γ₁,₁ is the mirror image of Γ₀
        let (l0, l1) = curves.left.x_range();
        let (r0, r1) = curves.right.x_range();
        let (a, z) = (l0.max(r0), l1.min(r1));
        let scale = curves.left.samples().iter().map(|s| s.y.abs()).fold(0.0, f64::max);
        let mut mirror: f64 = 0.0;
        for k in 0..=200 {
            let x = a + (z - a) * k as f64 / 200.0;
            mirror = mirror.max((curves.left.y(x)? + curves.right.y(x)?).abs() / scale);
        }
        if mirror > 1e-8 {
            failures.push(format!("mirror law off by {mirror:.1e}"));
        }

        // symmetric solutions are even about t = 1/2
        let mut n_sym = 0;
        let mut even: f64 = 0.0;
        for bf in [0.5, 1.0, 1.5] {
            let set = solver::solve_at(curves, bf * b_star, &self.solver)?;
            for s in set.solutions.iter().filter(|s| (s.x_alpha - s.x_one_minus_alpha).abs() <= 1e-6 * s.x_alpha) {
                n_sym += 1;
                let tr = integrate_full(s.slope0, &self.params.with_b(bf * b_star), &self.solver.ode)?;
                for k in 0..=100 {
                    let t = 0.5 * k as f64 / 100.0;
                    let (Some(u), Some(w)) = (tr.eval(t), tr.eval(1.0 - t)) else {
                        return Err(Error::Invariant("profile does not cover [0, 1]".into()));
                    };
                    even = even.max((u[0] - w[0]).abs());
                }
            }
        }
        if n_sym == 0 || even > 1e-7 {
            failures.push(format!("{n_sym} symmetric profiles, max |u(t) - u(1-t)| = {even:.1e}"));
        }
        let detail = format!(
            "hits {hit_err:.1e}, θ₂ {theta_err:.1e}, mirror {mirror:.1e}, {n_sym} symmetric profiles {even:.1e}"
        );
        Ok(if failures.is_empty() {
            (true, detail)
        } else {
            (false, failures.join("; "))
        })
    }

    fn bifurcation_point(&self) -> Result<(bool, String)> {
        let bp = *self.bifpoint()?;
        let curves = self.curves()?;
        let b_star = curves.b_star();
        let settings = ImperfectSettings::default();
        let local = diagram::local_diagram(&self.params, &self.gamma, bp.b, &settings, &self.solver)?;
        let nearest = local
            .diagram
            .attachments()
            .iter()
            .map(|a| (a.b - bp.b).abs())
            .fold(f64::INFINITY, f64::min);
        let pattern = bp.flank.0 < 0.0 && bp.flank.1 > 0.0;
        let off = nearest / b_star;
        Ok((
            pattern && off <= 1e-4,
            format!(
                "b_b = {:.10}·b*, flank ({:.1e}, {:.1e}), attachment off by {off:.1e}·b* (tol 1e-4)",
                bp.b / b_star,
                bp.flank.0,
                bp.flank.1
            ),
        ))
    }

    fn perturbation_chains(&self) -> Result<(bool, String)> {
        let bp = *self.bifpoint()?;
        let sym = self.curves()?;
        let b_star = sym.b_star();
        let pert = Curves::build(&self.params.with_nu(1.05), &self.gamma)?;
        let mut rng = self.rng(7);
        let draws: Vec<(f64, f64)> = (0..20)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let bad = draws
            .par_iter()
            .map(|&(fx, fb)| -> Result<Option<String>> {
                let b = bp.b + 1e-4 * b_star * fb;
                let m1 = TimeMaps::new(sym, b)?;
                let mn = TimeMaps::new(&pert, b)?;
                let x_t = m1.x_t()?;
                let x = x_t * (1.0 + 1e-3 * fx);
                let e = m1.energy_at(x)?;
                let (x1m, x1p) = hit_pair(&m1.gamma1_hits(e), x_t)?;
                let (xnm, xnp) = hit_pair(&mn.gamma1_hits(e), x_t)?;
                let slack = 1e-12 * x_t;
                let hits_ok = xnm < x1m && x1m <= x_t + slack && x_t <= x1p + slack && x1p < xnp;
                let (a1, an) = (m1.arrivals(x)?, mn.arrivals(x)?);
                let (t1, t2) = (a1.tau(1)?, a1.tau(2)?);
                let (tn1, tn2) = (an.tau(1)?, an.tau(2)?);
                let times_ok = tn1 < t1 && t1 <= t2 && t2 < tn2;
                Ok((!(hits_ok && times_ok)).then(|| {
                    format!("x = {x:.6e}, b = {b:.6e}: hits {xnm:.6e} {x1m:.6e} {x1p:.6e} {xnp:.6e}, τ {tn1:.6e} {t1:.6e} {t2:.6e} {tn2:.6e}")
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let failures: Vec<String> = bad.into_iter().flatten().collect();
        Ok(match failures.first() {
            None => (true, "hit and time chains strict at 20 samples (ν = 1.05)".into()),
            Some(f) => (false, format!("{} of 20 samples fail; first {f}", failures.len())),
        })
    }

    fn imperfect(&self) -> Result<(bool, String)> {
        let r = diagram::imperfect_analysis(&self.params, &self.gamma, &ImperfectSettings::default(), &self.solver)?;
        let below = r.turning_b.is_some_and(|b| b < r.b_b);
        let passed = r.components == 2 && below && r.figure6_case != Figure6Case::Other && r.consistent && r.gap_monotone;
        let gaps: Vec<String> = r.gaps.iter().map(|(n, g)| format!("{n}:{g:.2e}")).collect();
        Ok((
            passed,
            format!(
                "ν = {}, {} components, b_T - b_b = {}, case {:?} vs {:?}, gaps {}",
                r.nu,
                r.components,
                r.turning_b.map_or("none".into(), |b| format!("{:.2e}", b - r.b_b)),
                r.figure6_case,
                r.nu_one_type,
                gaps.join(" ")
            ),
        ))
    }

    fn reflection(&self) -> Result<(bool, String)> {
        let params = self.params.with_nu(0.8).with_c(0.1);
        let direct = Curves::build(&params, &self.gamma)?;
        let b_star = direct.b_star();
        let mut lines = Vec::new();
        let mut passed = true;
        for f in [1.0, 1.5] {
            let r = diagram::reflection_check(&params, &self.gamma, f * b_star, &self.solver, 1e-6)?;
            passed &= r.agree && r.direct_count == r.reflected_count && r.direct_count == r.reflected_oracle_count;
            lines.push(format!(
                "b = {f}·b*: {}/{}/{} solutions, max |Δ| = {}",
                r.direct_count,
                r.reflected_count,
                r.reflected_oracle_count,
                r.max_mismatch.map_or("unmatched".into(), |v| format!("{v:.1e}"))
            ));
        }
        Ok((passed, lines.join("; ")))
    }

    fn curve_structure(&self) -> Result<(bool, String)> {
        let cs = [0.05, 0.1, 0.2];
        let built = cs
            .par_iter()
            .map(|&c| build_curve(Side::Left, &self.params.with_c(c), &self.gamma))
            .collect::<Result<Vec<_>>>()?;
        let mut failures = Vec::new();
        for (c, curve) in cs.iter().zip(&built) {
            let s = curve.samples();
            if !s.windows(2).all(|w| w[1].x > w[0].x && w[1].y > w[0].y) {
                failures.push(format!("Γ₀ not increasing for c = {c}"));
            }
            let zeros = s.windows(2).filter(|w| (w[0].y < 0.0) != (w[1].y < 0.0)).count();
            if zeros != 1 {
                failures.push(format!("{zeros} sign changes for c = {c}"));
            }
        }
        let lo = built.iter().map(|c| c.x_range().0).fold(f64::NEG_INFINITY, f64::max);
        let hi = built.iter().map(|c| c.x_range().1).fold(f64::INFINITY, f64::min);
        let mut margin = f64::INFINITY;
        for k in 0..=400 {
            let x = lo + (hi - lo) * k as f64 / 400.0;
            for w in built.windows(2) {
                margin = margin.min(w[1].y(x)? - w[0].y(x)?);
            }
        }
        if margin <= 0.0 {
            failures.push(format!("y₀ not increasing in c: margin {margin:.2e}"));
        }
        let m0s: Vec<String> = built.iter().map(|c| format!("{:.6e}", c.m0())).collect();
        Ok(if failures.is_empty() {
            (true, format!("monotone graphs, m0 = [{}], min y gap {margin:.2e}", m0s.join(", ")))
        } else {
            (false, failures.join("; "))
        })
    }
}

/// The two hits nearest the tangency, lower then upper; a double hit is
/// returned twice.
fn hit_pair(hits: &[CurveHit], x_t: f64) -> Result<(f64, f64)> {
    let below = hits.iter().filter(|h| h.x <= x_t || h.double).map(|h| h.x).fold(f64::NAN, f64::max);
    let above = hits.iter().filter(|h| h.x >= x_t || h.double).map(|h| h.x).fold(f64::NAN, f64::min);
    if below.is_nan() || above.is_nan() {
        return Err(Error::Invariant(format!("orbit misses the curve near x_t = {x_t}: {hits:?}")));
    }
    Ok((below, above))
}

/// `|τ_j|` by quadrature against the time of the `j`-th crossing of Γ₁,ν
/// found by integrating the central flow from `(x, y₀(x))`.
fn transit_check(curves: &Curves, b: f64, fx: f64, j: u32) -> Result<f64> {
    let maps = TimeMaps::new(curves, b)?;
    let x_t = maps.x_t()?;
    let (lo, hi) = maps.closed_domain()?;
    // stay clear of the homoclinic edges and of the tangential hit
    let mut x = lo + (hi - lo) * (0.1 + 0.8 * fx);
    if (x - x_t).abs() < 1e-2 * x_t {
        x = x_t + 1e-2 * x_t * (x - x_t).signum();
    }
    let quad = maps.arrivals(x)?.tau(j)?;
    let right = &curves.right;
    let (r0, r1) = right.x_range();
    let (y0, y1) = (right.y(r0)?, right.y(r1)?);
    // continuous extension of v - y₁(u) beyond the sampled range
    let gap = move |_t: f64, p: PhasePoint| -> f64 {
        if p.u < r0 {
            p.v - y0
        } else if p.u > r1 {
            p.v - y1
        } else {
            p.v - right.y(p.u).unwrap_or(f64::NAN)
        }
    };
    let well = maps.well;
    let span = quad + 0.25 * well.small_oscillation_period();
    let start = PhasePoint::new(x, curves.left.y(x)?);
    let ode = OdeSettings::precise();
    let events = [EventSpec::crossing(gap, Direction::Any, 1).recording()];
    let p = curves.params;
    let tr = integrate_central(start, b, p.lambda, p.p, (0.0, span), &events, &ode)?;
    let t = tr
        .events
        .iter()
        .filter(|e| e.t > 0.0 && e.state[0] >= r0 && e.state[0] <= r1)
        .nth(j as usize - 1)
        .map(|e| e.t)
        .ok_or_else(|| Error::EventNotFound { index: 0, t_end: span })?;
    Ok((t - quad).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reference_lambda_is_midway() {
        let p = reference_params();
        assert!((p.lambda + 40.0 * PI * PI).abs() < 1e-9);
        p.with_b(1.0).validate().unwrap();
    }

    #[test]
    fn hit_pair_duplicates_double_hits() {
        let h = [CurveHit { x: 1.0, branch: 1, double: true }];
        assert_eq!(hit_pair(&h, 1.0).unwrap(), (1.0, 1.0));
        let h = [
            CurveHit { x: 0.5, branch: 1, double: false },
            CurveHit { x: 2.0, branch: -1, double: false },
        ];
        assert_eq!(hit_pair(&h, 1.0).unwrap(), (0.5, 2.0));
        assert!(hit_pair(&h[..1], 1.0).is_err());
    }
}
