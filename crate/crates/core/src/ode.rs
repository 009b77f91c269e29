//! Adaptive Dormand–Prince 5(4) integration with dense output and event
//! location, specialised to the three pieces of the indefinite problem.
//!
//! The integrator is deterministic: the step sequence depends only on the
//! inputs. Weight discontinuities at `α` and `1-α` are never stepped over;
//! [`integrate_full`] integrates each piece separately and restarts at the
//! breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{signed_pow, PhasePoint, ProblemParams, Well};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 500_000,
        }
    }
}

impl OdeSettings {
    /// Tighter tolerances for shooting and reconstruction, where errors
    /// are amplified by the outer intervals.
    pub fn precise() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            ..Self::default()
        }
    }

    pub fn with_max_step(self, max_step: f64) -> Self {
        Self { max_step, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_steps > 0 && self.max_step > 0.0)
        {
            return Err(Error::InvalidParams(format!(
                "ODE tolerances and limits must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Crossing direction filter for zero-crossing events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Any,
    /// From negative to non-negative.
    Up,
    /// From positive to non-positive.
    Down,
}

impl Direction {
    fn accepts(self, g0: f64, g1: f64) -> bool {
        let crossed = (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0);
        crossed
            && match self {
                Direction::Any => true,
                Direction::Up => g0 < 0.0,
                Direction::Down => g0 > 0.0,
            }
    }
}

type EventFn<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> f64 + Send + Sync + 'a>;

pub enum EventKind<'a, const N: usize> {
    ZeroCrossing(EventFn<'a, N>),
    TimeTarget(f64),
}

/// An event to locate during integration.
///
/// The integration stops at the `count`-th occurrence when `terminal` is
/// set; otherwise every occurrence is only recorded.
pub struct EventSpec<'a, const N: usize = 2> {
    pub kind: EventKind<'a, N>,
    pub direction: Direction,
    pub count: usize,
    pub terminal: bool,
}

impl<'a> EventSpec<'a, 2> {
    /// Zero crossing of a scalar function of a phase-plane state.
    pub fn crossing<F>(g: F, direction: Direction, count: usize) -> Self
    where
        F: Fn(f64, PhasePoint) -> f64 + Send + Sync + 'a,
    {
        Self {
            kind: EventKind::ZeroCrossing(Box::new(move |t, y: &[f64; 2]| {
                g(t, PhasePoint::new(y[0], y[1]))
            })),
            direction,
            count: count.max(1),
            terminal: true,
        }
    }
}

impl<'a, const N: usize> EventSpec<'a, N> {
    pub fn raw<F>(g: F, direction: Direction, count: usize) -> Self
    where
        F: Fn(f64, &[f64; N]) -> f64 + Send + Sync + 'a,
    {
        Self {
            kind: EventKind::ZeroCrossing(Box::new(g)),
            direction,
            count: count.max(1),
            terminal: true,
        }
    }

    pub fn time(target: f64) -> Self {
        Self {
            kind: EventKind::TimeTarget(target),
            direction: Direction::Any,
            count: 1,
            terminal: false,
        }
    }

    pub fn recording(mut self) -> Self {
        self.terminal = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord<const N: usize = 2> {
    pub t: f64,
    pub state: [f64; N],
    pub index: usize,
}

impl EventRecord<2> {
    pub fn point(&self) -> PhasePoint {
        PhasePoint::new(self.state[0], self.state[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Completed,
    Stopped { event: usize },
    /// The guarded component crossed zero; the trajectory ends there.
    LeftPositiveRegion { t: f64 },
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    t0: f64,
    h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        std::array::from_fn(|i| {
            r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
        })
    }

    fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h >= 0.0 {
            (self.t0, self.t0 + self.h)
        } else {
            (self.t0 + self.h, self.t0)
        };
        t >= lo && t <= hi
    }
}

/// Output of an integration: accepted step endpoints, located events and
/// the dense output.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize = 2> {
    pub samples: Vec<(f64, [f64; N])>,
    pub events: Vec<EventRecord<N>>,
    pub status: Status,
    pub steps: usize,
    segments: Vec<Segment<N>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn end(&self) -> (f64, [f64; N]) {
        *self.samples.last().expect("trajectory has at least its start sample")
    }

    pub fn start(&self) -> (f64, [f64; N]) {
        self.samples[0]
    }

    /// Dense-output state at time `t` inside the integrated span.
    pub fn eval(&self, t: f64) -> Option<[f64; N]> {
        let seg = self.segments.iter().find(|s| s.contains(t))?;
        Some(seg.eval(t))
    }

    pub fn left_positive_region(&self) -> bool {
        matches!(self.status, Status::LeftPositiveRegion { .. })
    }

    /// Time of the `occurrence`-th (1-based) record of event `index`.
    pub fn event_time(&self, index: usize, occurrence: usize) -> Option<f64> {
        self.events
            .iter()
            .filter(|e| e.index == index)
            .nth(occurrence.checked_sub(1)?)
            .map(|e| e.t)
    }

    fn append(&mut self, mut other: Trajectory<N>) {
        if let (Some(last), Some(first)) = (self.samples.last(), other.samples.first()) {
            if last.0 == first.0 {
                other.samples.remove(0);
            }
        }
        self.samples.extend(other.samples);
        self.events.extend(other.events);
        self.segments.extend(other.segments);
        self.steps += other.steps;
        self.status = other.status;
    }
}

impl Trajectory<2> {
    pub fn points(&self) -> impl Iterator<Item = (f64, PhasePoint)> + '_ {
        self.samples.iter().map(|(t, y)| (*t, PhasePoint::new(y[0], y[1])))
    }

    pub fn end_point(&self) -> (f64, PhasePoint) {
        let (t, y) = self.end();
        (t, PhasePoint::new(y[0], y[1]))
    }

    pub fn eval_point(&self, t: f64) -> Option<PhasePoint> {
        self.eval(t).map(|y| PhasePoint::new(y[0], y[1]))
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension (Hairer, Nørsett & Wanner)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

struct StepResult<const N: usize> {
    y1: [f64; N],
    k7: [f64; N],
    err: f64,
    rcont: [[f64; N]; 5],
}

fn dopri_step<const N: usize, F>(
    rhs: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    settings: &OdeSettings,
    dense: bool,
) -> StepResult<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = rhs(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = rhs(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = rhs(t + h, &y1);
    let mut sq = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = settings.abs_tol + settings.rel_tol * y[i].abs().max(y1[i].abs());
        sq += (e / sc) * (e / sc);
    }
    let err = (sq / N as f64).sqrt();
    let mut rcont = [[0.0; N]; 5];
    if dense {
        for i in 0..N {
            let dy = y1[i] - y[i];
            let bspl = h * k1[i] - dy;
            rcont[0][i] = y[i];
            rcont[1][i] = dy;
            rcont[2][i] = bspl;
            rcont[3][i] = dy - h * k7[i] - bspl;
            rcont[4][i] = h
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
    }
    StepResult { y1, k7, err, rcont }
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t_end` (either direction).
///
/// `guard` names a component that must stay non-negative; crossing below
/// zero ends the integration with [`Status::LeftPositiveRegion`].
pub fn solve<const N: usize, F>(
    rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    events: &[EventSpec<'_, N>],
    guard: Option<usize>,
    settings: &OdeSettings,
) -> Result<Trajectory<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    settings.validate()?;
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut traj = Trajectory {
        samples: vec![(t0, y0)],
        events: Vec::new(),
        status: Status::Completed,
        steps: 0,
        segments: Vec::new(),
    };
    if span == 0.0 {
        return Ok(traj);
    }

    let mut counts = vec![0usize; events.len()];
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);

    // initial step (Hairer's heuristic)
    let mut h = {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = settings.abs_tol + settings.rel_tol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(&y, dir * h0, &[(1.0, &k1)]);
        let k2 = rhs(t + dir * h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sc = settings.abs_tol + settings.rel_tol * y[i].abs();
            d2 += ((k2[i] - k1[i]) / sc).powi(2);
        }
        let d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(settings.max_step)
    };

    let mut rejected_last = false;
    let mut steps = 0usize;
    loop {
        let remaining = (t_end - t).abs();
        if remaining <= 1e-14 * t_end.abs().max(1.0) {
            break;
        }
        if steps >= settings.max_steps {
            return Err(Error::StepLimit { t, steps });
        }
        // land exactly on time targets and the endpoint
        let mut h_try = h.min(remaining).min(settings.max_step);
        let mut hits_target = h_try >= remaining;
        for ev in events {
            if let EventKind::TimeTarget(tt) = ev.kind {
                let d = (tt - t) * dir;
                if d > 1e-14 * tt.abs().max(1.0) && d <= h_try {
                    h_try = d;
                    hits_target = false;
                }
            }
        }
        if h_try < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let hs = dir * h_try;
        let st = dopri_step(&rhs, t, &y, &k1, hs, settings, true);
        steps += 1;
        if !st.err.is_finite() {
            h = 0.2 * h_try;
            rejected_last = true;
            continue;
        }
        if st.err > 1.0 {
            let fac = (0.9 * st.err.powf(-0.2)).clamp(0.2, 0.9);
            h = h_try * fac;
            rejected_last = true;
            continue;
        }
        let t1 = if hits_target { t_end } else { t + hs };
        let seg = Segment {
            t0: t,
            h: t1 - t,
            rcont: st.rcont,
        };

        // events inside (t, t1]
        let mut found: Vec<(f64, [f64; N], usize)> = Vec::new();
        for (idx, ev) in events.iter().enumerate() {
            match &ev.kind {
                EventKind::TimeTarget(tt) => {
                    if (*tt - t1).abs() <= 1e-14 * tt.abs().max(1.0) {
                        found.push((t1, st.y1, idx));
                    }
                }
                EventKind::ZeroCrossing(g) => {
                    locate_crossings(&rhs, g, ev.direction, &seg, &y, &k1, &st.y1, t1, settings, idx, &mut found);
                }
            }
        }
        if let Some(gi) = guard {
            let g = |_: f64, s: &[f64; N]| s[gi];
            locate_crossings(&rhs, &g, Direction::Down, &seg, &y, &k1, &st.y1, t1, settings, usize::MAX, &mut found);
        }
        found.sort_by(|a, b| ((a.0 - t) * dir).total_cmp(&((b.0 - t) * dir)));

        let mut stop: Option<(f64, [f64; N], Status)> = None;
        for (te, ye, idx) in found {
            if idx == usize::MAX {
                stop = Some((te, ye, Status::LeftPositiveRegion { t: te }));
                break;
            }
            counts[idx] += 1;
            traj.events.push(EventRecord { t: te, state: ye, index: idx });
            let ev = &events[idx];
            if ev.terminal && counts[idx] >= ev.count {
                stop = Some((te, ye, Status::Stopped { event: idx }));
                break;
            }
        }
        if let Some((te, ye, status)) = stop {
            traj.segments.push(Segment { h: te - t, ..seg });
            traj.samples.push((te, ye));
            traj.status = status;
            traj.steps = steps;
            return Ok(traj);
        }

        traj.segments.push(seg);
        traj.samples.push((t1, st.y1));
        t = t1;
        y = st.y1;
        k1 = st.k7;
        let mut fac = 0.9 * st.err.max(1e-10).powf(-0.2);
        fac = fac.clamp(0.2, 5.0);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;
        h = (h_try * fac).min(settings.max_step);
    }
    traj.steps = steps;
    Ok(traj)
}

/// Find zero crossings of `g` over one accepted step: sign changes are
/// checked at quarter points of the dense output, bracketed by Brent on
/// the interpolant, then polished by re-stepping from the step start.
#[allow(clippy::too_many_arguments)]
fn locate_crossings<const N: usize, F, G>(
    rhs: &F,
    g: &G,
    direction: Direction,
    seg: &Segment<N>,
    y0: &[f64; N],
    k1: &[f64; N],
    y1: &[f64; N],
    t1: f64,
    settings: &OdeSettings,
    idx: usize,
    out: &mut Vec<(f64, [f64; N], usize)>,
) where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: Fn(f64, &[f64; N]) -> f64 + ?Sized,
{
    let t0 = seg.t0;
    let h = t1 - t0;
    let mut ts = [0.0; 5];
    let mut gs = [0.0; 5];
    for (k, frac) in [0.0, 0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
        let tk = if k == 4 { t1 } else { t0 + frac * h };
        let yk = match k {
            0 => *y0,
            4 => *y1,
            _ => seg.eval(tk),
        };
        ts[k] = tk;
        gs[k] = g(tk, &yk);
    }
    for k in 0..4 {
        if !direction.accepts(gs[k], gs[k + 1]) {
            continue;
        }
        let gd = |tt: f64| g(tt, &seg.eval(tt));
        let t_dense = match roots::brent_with(gd, ts[k], ts[k + 1], gs[k], gs[k + 1], 1e-15 * t1.abs().max(1.0)) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let (te, ye) = polish_event(rhs, g, t0, y0, k1, t_dense, (ts[k], ts[k + 1]), settings)
            .unwrap_or((t_dense, seg.eval(t_dense)));
        out.push((te, ye, idx));
    }
}

fn polish_event<const N: usize, F, G>(
    rhs: &F,
    g: &G,
    t0: f64,
    y0: &[f64; N],
    k1: &[f64; N],
    t_guess: f64,
    bracket: (f64, f64),
    settings: &OdeSettings,
) -> Option<(f64, [f64; N])>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: Fn(f64, &[f64; N]) -> f64 + ?Sized,
{
    let eval = |tt: f64| -> ([f64; N], f64) {
        if tt == t0 {
            return (*y0, g(tt, y0));
        }
        let st = dopri_step(rhs, t0, y0, k1, tt - t0, settings, false);
        (st.y1, g(tt, &st.y1))
    };
    let (lo, hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let width = (hi - lo).abs();
    let (mut ta, (mut ya, mut ga)) = (t_guess, eval(t_guess));
    if ga == 0.0 {
        return Some((ta, ya));
    }
    let dt = (width * 1e-6).max(1e-12 * t_guess.abs().max(1.0));
    let mut tb = t_guess + dt;
    let (mut yb, mut gb) = eval(tb);
    for _ in 0..8 {
        if gb == ga {
            break;
        }
        let tn = tb - gb * (tb - ta) / (gb - ga);
        if !(tn >= lo - width && tn <= hi + width) {
            return None;
        }
        ta = tb;
        ya = yb;
        ga = gb;
        tb = tn;
        let r = eval(tb);
        yb = r.0;
        gb = r.1;
        if (tb - ta).abs() <= 4.0 * f64::EPSILON * tb.abs().max(1e-300) || gb == 0.0 {
            break;
        }
    }
    let _ = ya;
    if (tb - t_guess).abs() > width.max(1e-12) {
        return None;
    }
    Some((tb, yb))
}

/// Which outer interval an outer integration covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `(0, α)` with weight `-c`, integrated forward from `t = 0`.
    Left,
    /// `(1-α, 1)` with weight `-νc`, integrated backward from `t = 1`.
    Right,
}

/// Right-hand side of `-u'' = λu + w u^p` as a first-order system.
#[inline]
pub(crate) fn piece_rhs(lambda: f64, w: f64, p: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + Copy {
    move |_t, y| [y[1], -lambda * y[0] - w * signed_pow(y[0], p)]
}

fn check_start(u: f64) -> Result<()> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::Domain(format!("start state u = {u} is negative")));
    }
    Ok(())
}

/// Central flow `u' = v, v' = -λu - b u^p` from `start` over `t_span`.
///
/// Leaving `u > 0` ends the integration. If terminal events were given
/// and none fired, [`Error::EventNotFound`] is returned.
pub fn integrate_central(
    start: PhasePoint,
    b: f64,
    lambda: f64,
    p: f64,
    t_span: (f64, f64),
    events: &[EventSpec<'_, 2>],
    settings: &OdeSettings,
) -> Result<Trajectory> {
    check_start(start.u)?;
    Well::new(lambda, b, p)?;
    let traj = solve(
        piece_rhs(lambda, b, p),
        t_span.0,
        [start.u, start.v],
        t_span.1,
        events,
        Some(0),
        settings,
    )?;
    if matches!(traj.status, Status::Completed) {
        if let Some(idx) = events.iter().position(|e| e.terminal) {
            return Err(Error::EventNotFound { index: idx, t_end: t_span.1 });
        }
    }
    Ok(traj)
}

/// Outer problem from the boundary value `M` with initial slope `slope0`.
///
/// Left: forward from `(M, slope0)` at `t = 0` to `t = α` under weight
/// `-c`. Right: backward from `(M, slope0)` at `t = 1` to `t = 1-α` under
/// weight `-νc`. Hitting `u = 0` ends the trajectory early, which the
/// status reports.
pub fn integrate_outer(
    side: Side,
    slope0: f64,
    params: &ProblemParams,
    settings: &OdeSettings,
) -> Result<Trajectory> {
    let (w, t0, t1) = match side {
        Side::Left => (-params.c, 0.0, params.alpha),
        Side::Right => (-params.nu * params.c, 1.0, 1.0 - params.alpha),
    };
    if !(params.m > 0.0 && params.m.is_finite()) {
        return Err(Error::InvalidParams(format!("M = {} must be finite and > 0", params.m)));
    }
    solve(piece_rhs(params.lambda, w, params.p), t0, [params.m, slope0], t1, &[], Some(0), settings)
}

/// Whole-interval shooting trajectory from `(M, slope0)` at `t = 0`.
///
/// The three weight pieces are integrated separately with restarts at
/// `α` and `1-α`.
pub fn integrate_full(slope0: f64, params: &ProblemParams, settings: &OdeSettings) -> Result<Trajectory> {
    if !(params.m > 0.0 && params.m.is_finite()) {
        return Err(Error::InvalidParams(format!("M = {} must be finite and > 0", params.m)));
    }
    let a = params.alpha;
    let pieces = [
        (-params.c, 0.0, a),
        (params.b, a, 1.0 - a),
        (-params.nu * params.c, 1.0 - a, 1.0),
    ];
    let mut state = [params.m, slope0];
    let mut traj: Option<Trajectory> = None;
    for (w, t0, t1) in pieces {
        let piece = solve(piece_rhs(params.lambda, w, params.p), t0, state, t1, &[], Some(0), settings)?;
        state = piece.end().1;
        let stop = piece.left_positive_region();
        match traj.as_mut() {
            None => traj = Some(piece),
            Some(tr) => tr.append(piece),
        }
        if stop {
            break;
        }
    }
    Ok(traj.expect("three pieces"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let tr = solve(harmonic, 0.0, [1.0, 0.0], 10.0, &[], None, &OdeSettings::default()).unwrap();
        let (t, y) = tr.end();
        assert_eq!(t, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
        assert!((y[1] + 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn dense_output_matches_restep() {
        let s = OdeSettings::default();
        let tr = solve(harmonic, 0.0, [1.0, 0.0], 5.0, &[], None, &s).unwrap();
        for w in tr.samples.windows(2) {
            let (ta, ya) = w[0];
            let (tb, _) = w[1];
            let tm = 0.5 * (ta + tb);
            let dense = tr.eval(tm).unwrap();
            let fresh = solve(harmonic, ta, ya, tm, &[], None, &s).unwrap().end().1;
            for i in 0..2 {
                assert!(
                    (dense[i] - fresh[i]).abs() < 10.0 * s.rel_tol,
                    "dense {} vs fresh {}",
                    dense[i],
                    fresh[i]
                );
            }
        }
    }

    #[test]
    fn event_time_of_axis_crossing() {
        // u = cos t crosses zero downward at π/2
        let ev = [EventSpec::raw(|_t, y: &[f64; 2]| y[0], Direction::Down, 1)];
        let tr = solve(harmonic, 0.0, [1.0, 0.0], 10.0, &ev, None, &OdeSettings::default()).unwrap();
        assert!(matches!(tr.status, Status::Stopped { event: 0 }));
        assert!((tr.end().0 - PI / 2.0).abs() < 1e-10);
        // third crossing in any direction is at 5π/2
        let ev = [EventSpec::raw(|_t, y: &[f64; 2]| y[0], Direction::Any, 3)];
        let tr = solve(harmonic, 0.0, [1.0, 0.0], 10.0, &ev, None, &OdeSettings::default()).unwrap();
        assert!((tr.end().0 - 2.5 * PI).abs() < 1e-9);
        assert_eq!(tr.events.len(), 3);
    }

    #[test]
    fn event_times_stable_under_max_step_halving() {
        let ev = |ms: f64| {
            let e = [EventSpec::raw(|_t, y: &[f64; 2]| y[1] - 0.3, Direction::Any, 4)];
            let s = OdeSettings::default().with_max_step(ms);
            solve(harmonic, 0.0, [1.0, 0.0], 20.0, &e, None, &s).unwrap().end().0
        };
        let a = ev(0.5);
        let b = ev(0.25);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn time_targets_are_hit_exactly() {
        let ev = [EventSpec::time(1.2345), EventSpec::time(3.0)];
        let tr = solve(harmonic, 0.0, [1.0, 0.0], 4.0, &ev, None, &OdeSettings::default()).unwrap();
        assert!(tr.samples.iter().any(|(t, _)| *t == 1.2345));
        assert_eq!(tr.events.len(), 2);
        assert_eq!(tr.events[0].t, 1.2345);
    }

    #[test]
    fn backward_integration_reverses() {
        let w = Well::new(-1.0, 1.0, 2.0).unwrap();
        let start = PhasePoint::new(1.2, 0.1);
        let s = OdeSettings::default();
        let fwd = integrate_central(start, w.b, w.lambda, w.p, (0.0, 3.0), &[], &s).unwrap();
        let (_, mid) = fwd.end_point();
        let back = integrate_central(mid, w.b, w.lambda, w.p, (3.0, 0.0), &[], &s).unwrap();
        let (_, end) = back.end_point();
        assert!((end.u - start.u).abs() < 1e-8 && (end.v - start.v).abs() < 1e-8);
    }

    #[test]
    fn central_equilibrium_is_constant() {
        let tr = integrate_central(PhasePoint::new(1.0, 0.0), 1.0, -1.0, 2.0, (0.0, 5.0), &[], &OdeSettings::default())
            .unwrap();
        for (_, p) in tr.points() {
            assert!((p.u - 1.0).abs() < 1e-15 && p.v.abs() < 1e-15);
        }
    }

    #[test]
    fn central_halts_when_leaving_positive_region() {
        // outside the homoclinic: E > 0, heading left, reaches u = 0
        let tr = integrate_central(PhasePoint::new(0.5, -1.0), 1.0, -1.0, 2.0, (0.0, 10.0), &[], &OdeSettings::default())
            .unwrap();
        assert!(tr.left_positive_region());
        assert!(tr.end().1[0].abs() < 1e-10);
    }

    #[test]
    fn central_missing_event_is_reported() {
        let ev = [EventSpec::crossing(|_t, p| p.u - 10.0, Direction::Any, 1)];
        let r = integrate_central(PhasePoint::new(1.1, 0.0), 1.0, -1.0, 2.0, (0.0, 5.0), &ev, &OdeSettings::default());
        assert!(matches!(r, Err(Error::EventNotFound { .. })));
    }

    #[test]
    fn step_limit_is_reported() {
        let s = OdeSettings { max_steps: 3, ..OdeSettings::default() };
        let r = solve(harmonic, 0.0, [1.0, 0.0], 100.0, &[], None, &s);
        assert!(matches!(r, Err(Error::StepLimit { .. })));
    }
}
