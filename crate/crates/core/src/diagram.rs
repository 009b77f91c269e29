//! Bifurcation diagrams in `b`: sweeps with branch assembly, the
//! bifurcation points `b_b^{i,±}`, the `ν = 1` classification and the
//! imperfect bifurcation for `ν ≠ 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{csv, fmt_f64};
use crate::gamma::{find_b_h, Curves, GammaSettings};
use crate::problem::ProblemParams;
use crate::roots;
use crate::solver::{self, BvpSolution, SolverSettings};
use crate::timemap::TimeMaps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    /// Initial uniform grid size in `b`.
    pub n_b: usize,
    /// Event resolution in units of `b*`.
    pub b_tol: f64,
    /// Hard cap on `solve_at` calls per sweep.
    pub max_solves: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_b: 41,
            b_tol: 1e-6,
            max_solves: 4000,
        }
    }
}

/// One accepted solution placed in the diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub b: f64,
    pub u_alpha: f64,
    pub u_one_minus_alpha: f64,
    pub j: u32,
    pub branch_id: usize,
    pub component_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndKind {
    /// The branch merges with another ending branch.
    Fold,
    /// The branch merges into a branch that continues.
    Attachment,
    /// The branch leaves the swept range.
    Boundary,
    /// No partner found near the end.
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchEnd {
    pub branch_id: usize,
    /// `true` for the low-`b` end.
    pub start: bool,
    /// Midpoint of the last bracketing `b` interval.
    pub b: f64,
    pub kind: EndKind,
    pub partner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub component_id: usize,
    pub b_range: (f64, f64),
    /// Hit indices seen along the branch.
    pub js: Vec<u32>,
    /// `|u(α) - u(1-α)|` stays below `1e-6·u(α)` everywhere.
    pub symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub branch_id: usize,
    pub partner_id: usize,
    pub b: f64,
    pub kind: Criticality,
    /// Hit index on the branch next to the fold.
    pub j: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub branch_id: usize,
    pub onto: usize,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagram {
    pub params: ProblemParams,
    pub b_star: f64,
    pub points: Vec<DiagramPoint>,
    pub branches: Vec<Branch>,
    pub ends: Vec<BranchEnd>,
    pub components: usize,
    /// `b` values where linking stayed ambiguous after refinement.
    pub ambiguous: Vec<f64>,
    /// `b` values where some time-map root failed reconstruction.
    pub suspect_b: Vec<f64>,
    pub solves: usize,
}

impl Diagram {
    pub fn turning_points(&self) -> Vec<TurningPoint> {
        let mut out = Vec::new();
        for e in &self.ends {
            if e.kind != EndKind::Fold {
                continue;
            }
            let Some(p) = e.partner else { continue };
            if p < e.branch_id {
                continue;
            }
            out.push(TurningPoint {
                branch_id: e.branch_id,
                partner_id: p,
                b: e.b,
                kind: if e.start { Criticality::Supercritical } else { Criticality::Subcritical },
                j: self.end_j(e.branch_id, e.start).max(self.end_j(p, e.start)),
            });
        }
        out
    }

    pub fn attachments(&self) -> Vec<Attachment> {
        self.ends
            .iter()
            .filter(|e| e.kind == EndKind::Attachment)
            .filter_map(|e| {
                Some(Attachment {
                    branch_id: e.branch_id,
                    onto: e.partner?,
                    b: e.b,
                })
            })
            .collect()
    }

    fn end_j(&self, branch: usize, start: bool) -> u32 {
        let mut pts = self.points.iter().filter(|p| p.branch_id == branch);
        let p = if start { pts.next() } else { pts.last() };
        p.map(|p| p.j).unwrap_or(0)
    }

    /// Smallest distance in `(b/b*, u(α)/m0)` between two components.
    pub fn component_gap(&self, a: usize, b: usize, m0: f64) -> f64 {
        let pa: Vec<_> = self.points.iter().filter(|p| p.component_id == a).collect();
        let pb: Vec<_> = self.points.iter().filter(|p| p.component_id == b).collect();
        let mut best = f64::INFINITY;
        for p in &pa {
            for q in &pb {
                let db = (p.b - q.b) / self.b_star;
                let du = (p.u_alpha - q.u_alpha) / m0;
                best = best.min(db.hypot(du));
            }
        }
        best
    }

    /// Separation of components `a` and `b`: at each fold of one of them,
    /// the `u(α)` distance (over `m0`) from the fold tip (midpoint of the
    /// merging pair) to the nearest point of the other at the same `b`.
    pub fn fold_gap(&self, a: usize, b: usize, m0: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for tp in self.turning_points() {
            let comp = self.branches[tp.branch_id].component_id;
            let other = if comp == a {
                b
            } else if comp == b {
                a
            } else {
                continue;
            };
            let tip_of = |id: usize| {
                let mut pts = self.points.iter().filter(|p| p.branch_id == id);
                match tp.kind {
                    Criticality::Subcritical => pts.last(),
                    Criticality::Supercritical => pts.next(),
                }
                .copied()
            };
            let (Some(p), Some(q)) = (tip_of(tp.branch_id), tip_of(tp.partner_id)) else { continue };
            let tip = 0.5 * (p.u_alpha + q.u_alpha);
            let near = self
                .points
                .iter()
                .filter(|r| r.component_id == other && r.b == p.b)
                .map(|r| (r.u_alpha - tip).abs() / m0)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
            if let Some(d) = near {
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
        best
    }

    /// CSV `b,u_alpha,j,branch_id,component_id`.
    pub fn to_csv(&self) -> String {
        csv(
            "b,u_alpha,j,branch_id,component_id",
            self.points.iter().map(|p| {
                vec![
                    fmt_f64(p.b),
                    fmt_f64(p.u_alpha),
                    p.j.to_string(),
                    p.branch_id.to_string(),
                    p.component_id.to_string(),
                ]
            }),
        )
    }
}

/// Compact per-level record of a solution.
#[derive(Debug, Clone, Copy)]
struct Node {
    ua: f64,
    ub: f64,
    j: u32,
}

struct Level {
    b: f64,
    nodes: Vec<Node>,
    suspect: bool,
}

fn nodes_of(solutions: &[BvpSolution]) -> Vec<Node> {
    solutions
        .iter()
        .map(|s| Node {
            ua: s.x_alpha,
            ub: s.x_one_minus_alpha,
            j: s.j,
        })
        .collect()
}

/// Linking result over all levels.
struct Linked {
    /// Per branch: `(level, node)` in increasing level.
    branches: Vec<Vec<(usize, usize)>>,
    /// Intervals `(k, k+1)` holding an event or an ambiguity.
    events: Vec<usize>,
    ambiguous: Vec<usize>,
}

fn dist(a: (f64, f64), b: (f64, f64), scale: f64) -> f64 {
    ((a.0 - b.0) / scale).hypot((a.1 - b.1) / scale)
}

/// Default matching radius for a branch with one point, in units of `m0`.
const FRESH_RADIUS: f64 = 0.05;

/// Slope `|du(α)/db|` always granted to a branch, in `m0` per `b*`.
const MAX_DRIFT: f64 = 10.0;

fn link(levels: &[Level], scale: f64, b_star: f64) -> Linked {
    let mut branches: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let mut events = Vec::new();
    let mut ambiguous = Vec::new();
    let z = |k: usize, n: usize| (levels[k].nodes[n].ua, levels[k].nodes[n].ub);
    for (n, _) in levels.first().map(|l| l.nodes.as_slice()).unwrap_or(&[]).iter().enumerate() {
        branches.push(vec![(0, n)]);
        active.push(branches.len() - 1);
    }
    for k in 1..levels.len() {
        let b = levels[k].b;
        let mut cand: Vec<(f64, usize, usize)> = Vec::new();
        let mut per_branch = vec![0usize; active.len()];
        let mut per_node = vec![0usize; levels[k].nodes.len()];
        for (ai, &br) in active.iter().enumerate() {
            let pts = &branches[br];
            let (k1, n1) = pts[pts.len() - 1];
            let z1 = z(k1, n1);
            let (pred, radius) = if pts.len() >= 2 {
                let (k0, n0) = pts[pts.len() - 2];
                let z0 = z(k0, n0);
                let r = (b - levels[k1].b) / (levels[k1].b - levels[k0].b);
                let pred = (z1.0 + (z1.0 - z0.0) * r, z1.1 + (z1.1 - z0.1) * r);
                let step = dist(z1, z0, scale) * r;
                // near an extremum of u(α) in b the secant step understates
                // the extrapolation error; allow a bounded slope as well
                let drift = MAX_DRIFT * (b - levels[k1].b) / b_star;
                (pred, (3.0 * step).max(drift).max(1e-7))
            } else {
                (z1, FRESH_RADIUS)
            };
            let fresh = pts.len() < 2;
            for n in 0..levels[k].nodes.len() {
                let d = dist(pred, z(k, n), scale);
                if d <= radius {
                    cand.push((d, ai, n));
                    // a fresh branch has no step estimate to be ambiguous about
                    if !fresh {
                        per_branch[ai] += 1;
                        per_node[n] += 1;
                    }
                }
            }
        }
        if per_branch.iter().any(|&c| c > 1) || per_node.iter().any(|&c| c > 1) {
            ambiguous.push(k - 1);
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut taken_b = vec![false; active.len()];
        let mut taken_n = vec![false; levels[k].nodes.len()];
        for (_, ai, n) in cand {
            if !taken_b[ai] && !taken_n[n] {
                taken_b[ai] = true;
                taken_n[n] = true;
                branches[active[ai]].push((k, n));
            }
        }
        let mut next = Vec::new();
        for (ai, &br) in active.iter().enumerate() {
            if taken_b[ai] {
                next.push(br);
            } else {
                events.push(k - 1);
            }
        }
        for n in 0..levels[k].nodes.len() {
            if !taken_n[n] {
                branches.push(vec![(k, n)]);
                next.push(branches.len() - 1);
                events.push(k - 1);
            }
        }
        active = next;
    }
    events.sort_unstable();
    events.dedup();
    ambiguous.sort_unstable();
    ambiguous.dedup();
    Linked {
        branches,
        events,
        ambiguous,
    }
}

/// Solve on a `b` grid over `[b_lo, b_hi]`, refine intervals holding
/// births, deaths or ambiguous links down to `b_tol·b*`, and assemble
/// branches and components.
pub fn sweep(
    curves: &Curves,
    b_lo: f64,
    b_hi: f64,
    settings: &SweepSettings,
    solver_settings: &SolverSettings,
) -> Result<Diagram> {
    if !(b_lo > 0.0 && b_hi > b_lo) {
        return Err(Error::InvalidParams(format!("b range [{b_lo}, {b_hi}] must satisfy 0 < lo < hi")));
    }
    let b_star = curves.b_star();
    let scale = curves.left.m0();
    let tol = settings.b_tol * b_star;
    let n = settings.n_b.max(2);
    let solve = |b: f64| -> Result<Level> {
        let set = solver::solve_at(curves, b, solver_settings)?;
        Ok(Level {
            b,
            nodes: nodes_of(&set.solutions),
            suspect: !set.suspects.is_empty(),
        })
    };
    let grid: Vec<f64> = (0..n).map(|k| b_lo + (b_hi - b_lo) * k as f64 / (n - 1) as f64).collect();
    let mut levels: Vec<Level> = grid.par_iter().map(|&b| solve(b)).collect::<Result<_>>()?;
    let mut solves = levels.len();
    let linked = loop {
        let linked = link(&levels, scale, b_star);
        let mut todo: Vec<f64> = linked
            .events
            .iter()
            .chain(&linked.ambiguous)
            .filter(|&&k| levels[k + 1].b - levels[k].b > tol)
            .map(|&k| 0.5 * (levels[k].b + levels[k + 1].b))
            .collect();
        todo.sort_by(f64::total_cmp);
        todo.dedup();
        if todo.is_empty() || solves + todo.len() > settings.max_solves {
            break linked;
        }
        solves += todo.len();
        let fresh: Vec<Level> = todo.par_iter().map(|&b| solve(b)).collect::<Result<_>>()?;
        levels.extend(fresh);
        levels.sort_by(|a, b| a.b.total_cmp(&b.b));
    };
    Ok(assemble(&curves.params, b_star, scale, &levels, linked, solves))
}

fn assemble(
    params: &ProblemParams,
    b_star: f64,
    scale: f64,
    levels: &[Level],
    linked: Linked,
    solves: usize,
) -> Diagram {
    let nb = linked.branches.len();
    let last = levels.len().saturating_sub(1);
    // owner of each (level, node)
    let mut owner: Vec<Vec<usize>> = levels.iter().map(|l| vec![usize::MAX; l.nodes.len()]).collect();
    for (id, pts) in linked.branches.iter().enumerate() {
        for &(k, n) in pts {
            owner[k][n] = id;
        }
    }
    let node = |k: usize, n: usize| levels[k].nodes[n];
    let mut ends = Vec::new();
    for (id, pts) in linked.branches.iter().enumerate() {
        for start in [true, false] {
            let (k, n) = if start { pts[0] } else { pts[pts.len() - 1] };
            let boundary = if start { k == 0 } else { k == last };
            let b = if boundary {
                levels[k].b
            } else if start {
                0.5 * (levels[k - 1].b + levels[k].b)
            } else {
                0.5 * (levels[k].b + levels[k + 1].b)
            };
            if boundary {
                ends.push(BranchEnd { branch_id: id, start, b, kind: EndKind::Boundary, partner: None });
                continue;
            }
            let me = node(k, n);
            let partner = (0..levels[k].nodes.len())
                .filter(|&m| m != n)
                .map(|m| (dist((me.ua, me.ub), (node(k, m).ua, node(k, m).ub), scale), m))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            // the step toward the end bounds how far a merging partner can be
            let reach = if pts.len() >= 2 {
                let (k2, n2) = if start { pts[1] } else { pts[pts.len() - 2] };
                let z2 = node(k2, n2);
                10.0 * dist((me.ua, me.ub), (z2.ua, z2.ub), scale)
            } else {
                FRESH_RADIUS
            };
            let (kind, partner) = match partner {
                Some((d, m)) if d <= reach.max(1e-6) => {
                    let p = owner[k][m];
                    let p_pts = &linked.branches[p];
                    let p_ends_here = if start { p_pts[0].0 == k } else { p_pts[p_pts.len() - 1].0 == k };
                    (if p_ends_here { EndKind::Fold } else { EndKind::Attachment }, Some(p))
                }
                _ => (EndKind::Lost, None),
            };
            ends.push(BranchEnd { branch_id: id, start, b, kind, partner });
        }
    }
    // union-find over merges
    let mut parent: Vec<usize> = (0..nb).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let next = p[i];
            p[i] = r;
            i = next;
        }
        r
    }
    for e in &ends {
        if let Some(p) = e.partner {
            let (a, b) = (find(&mut parent, e.branch_id), find(&mut parent, p));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comp_of_root = vec![usize::MAX; nb];
    let mut components = 0;
    let mut comp = vec![0; nb];
    for id in 0..nb {
        let r = find(&mut parent, id);
        if comp_of_root[r] == usize::MAX {
            comp_of_root[r] = components;
            components += 1;
        }
        comp[id] = comp_of_root[r];
    }
    let mut points = Vec::new();
    let mut branches = Vec::new();
    for (id, pts) in linked.branches.iter().enumerate() {
        let mut js: Vec<u32> = Vec::new();
        let mut symmetric = true;
        for &(k, n) in pts {
            let nd = node(k, n);
            points.push(DiagramPoint {
                b: levels[k].b,
                u_alpha: nd.ua,
                u_one_minus_alpha: nd.ub,
                j: nd.j,
                branch_id: id,
                component_id: comp[id],
            });
            if !js.contains(&nd.j) {
                js.push(nd.j);
            }
            // near-homoclinic profiles carry ~1e-7 forward-integration error
            symmetric &= (nd.ua - nd.ub).abs() <= 1e-6 * nd.ua;
        }
        branches.push(Branch {
            id,
            component_id: comp[id],
            b_range: (levels[pts[0].0].b, levels[pts[pts.len() - 1].0].b),
            js,
            symmetric,
        });
    }
    points.sort_by(|a, b| a.b.total_cmp(&b.b).then(a.u_alpha.total_cmp(&b.u_alpha)));
    let mut ambiguous: Vec<f64> = linked.ambiguous.iter().map(|&k| levels[k].b).collect();
    ambiguous.dedup();
    Diagram {
        params: *params,
        b_star,
        points,
        branches,
        ends,
        components,
        ambiguous,
        suspect_b: levels.iter().filter(|l| l.suspect).map(|l| l.b).collect(),
        solves,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub i: u32,
    pub sign: Sign,
    pub b: f64,
    /// `x_t` at the returned `b`.
    pub x_t: f64,
    /// `G(b ∓ δ)` and `G(b ± δ)`, ordered by `b`.
    pub flank: (f64, f64),
    pub crossings: usize,
}

/// `G(b) = τ_{2i}(x_t(b), b) - (1 - 2α)` at `ν = 1`.
pub fn tangency_gap(curves: &Curves, b: f64, i: u32) -> Result<f64> {
    let maps = TimeMaps::new(curves, b)?;
    let x_t = maps.x_t()?;
    Ok(maps.arrivals(x_t)?.tau(2 * i)? - curves.params.central_length())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifpointSettings {
    /// Scan size on each side of `b*`.
    pub n_scan: usize,
    /// Lower end of the `-` scan, in units of `b*`.
    pub b_min: f64,
    /// Closest approach of the `+` scan to `b_h`, relative to `b_h - b*`.
    pub b_h_gap: f64,
    /// Flank offset for the sign check, in units of `b*`.
    pub flank: f64,
}

impl Default for BifpointSettings {
    fn default() -> Self {
        Self {
            n_scan: 48,
            b_min: 1e-3,
            b_h_gap: 1e-6,
            flank: 1e-6,
        }
    }
}

/// `b_b^{i,±}`: `+` is the largest up-crossing of `G` on `(b*, b_h)`, `-`
/// the smallest down-crossing on `(b_min·b*, b*)`.
pub fn find_bifurcation_point(curves: &Curves, i: u32, sign: Sign, settings: &BifpointSettings) -> Result<BifurcationPoint> {
    if curves.params.nu != 1.0 {
        return Err(Error::Domain("bifurcation points b_b are defined for nu = 1".into()));
    }
    if i == 0 {
        return Err(Error::Domain("loop index i must be >= 1".into()));
    }
    let b_star = curves.b_star();
    let n = settings.n_scan.max(4);
    let grid: Vec<f64> = match sign {
        Sign::Plus => {
            // geometric toward b_h, where the tangent orbit nears the homoclinic
            let b_h = find_b_h(curves, None)?.effective;
            let lo = settings.b_h_gap.ln();
            (0..n)
                .map(|k| b_h - (b_h - b_star) * (lo * k as f64 / n as f64).exp())
                .skip(1)
                .collect()
        }
        Sign::Minus => {
            let (lo, hi) = (settings.b_min.ln(), 0.0f64);
            (0..n).map(|k| b_star * (lo + (hi - lo) * k as f64 / n as f64).exp()).collect()
        }
    };
    let vals: Vec<Option<f64>> = grid.par_iter().map(|&b| tangency_gap(curves, b, i).ok()).collect();
    let mut crossings = Vec::new();
    for k in 0..grid.len() - 1 {
        let (Some(g0), Some(g1)) = (vals[k], vals[k + 1]) else { continue };
        let up = g0 < 0.0 && g1 > 0.0;
        let down = g0 > 0.0 && g1 < 0.0;
        if (sign == Sign::Plus && up) || (sign == Sign::Minus && down) {
            crossings.push((grid[k], grid[k + 1]));
        }
    }
    let bracket = match sign {
        Sign::Plus => crossings.last(),
        Sign::Minus => crossings.first(),
    }
    .copied()
    .ok_or_else(|| {
        Error::NotBracketed(format!(
            "no {} crossing of τ_{}(x_t) = 1-2α; the configuration does not support b_b^({i},{})",
            if sign == Sign::Plus { "upward" } else { "downward" },
            2 * i,
            if sign == Sign::Plus { "+" } else { "-" }
        ))
    })?;
    let g = |b: f64| tangency_gap(curves, b, i).unwrap_or(f64::NAN);
    let b = roots::brent(g, bracket.0, bracket.1, 1e-13 * b_star)?;
    let d = settings.flank * b_star;
    let flank = (g(b - d), g(b + d));
    let ok = match sign {
        Sign::Plus => flank.0 < 0.0 && flank.1 > 0.0,
        Sign::Minus => flank.0 > 0.0 && flank.1 < 0.0,
    };
    if !ok {
        return Err(Error::Invariant(format!(
            "crossing direction at b = {b} not confirmed: G(b-δ) = {}, G(b+δ) = {}",
            flank.0, flank.1
        )));
    }
    Ok(BifurcationPoint {
        i,
        sign,
        b,
        x_t: TimeMaps::new(curves, b)?.x_t()?,
        flank,
        crossings: crossings.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuOneType {
    TranscriticalNondegeneratePitchfork,
    TranscriticalDegeneratePitchfork,
    DoublePitchfork,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDerivatives {
    pub h: f64,
    pub theta: f64,
    pub theta1_slope: f64,
    pub theta2_slope: f64,
    pub theta1_curvature: f64,
    pub theta2_curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: NuOneType,
    pub b: f64,
    pub x_t: f64,
    pub coarse: ThetaDerivatives,
    pub fine: ThetaDerivatives,
}

fn theta_derivatives(maps: &TimeMaps<'_>, x_t: f64, h: f64) -> Result<ThetaDerivatives> {
    let th = |x: f64, w: u8| maps.theta(x, w).map(|s| s.value);
    let (a1, c1, b1) = (th(x_t - h, 1)?, th(x_t, 1)?, th(x_t + h, 1)?);
    let (a2, c2, b2) = (th(x_t - h, 2)?, th(x_t, 2)?, th(x_t + h, 2)?);
    Ok(ThetaDerivatives {
        h,
        theta: c1,
        theta1_slope: (b1 - a1) / (2.0 * h),
        theta2_slope: (b2 - a2) / (2.0 * h),
        theta1_curvature: (b1 - 2.0 * c1 + a1) / (h * h),
        theta2_curvature: (b2 - 2.0 * c2 + a2) / (h * h),
    })
}

fn classify(d: &ThetaDerivatives, x_t: f64) -> NuOneType {
    // natural units: θ/x_t for slopes, θ/x_t² for curvatures
    let slope_unit = d.theta / x_t;
    let curv_unit = d.theta / (x_t * x_t);
    let slope_tol = 1e-3 * slope_unit;
    // quadrature noise ~1e-10 θ amplified by the second difference
    let curv_noise = (1e-8 * d.theta / (d.h * d.h)).max(1e-6 * curv_unit);
    if d.theta2_slope.abs() > slope_tol || d.theta2_curvature.abs() <= curv_noise {
        return NuOneType::Undetermined;
    }
    if d.theta1_slope - d.theta2_slope > slope_tol {
        NuOneType::TranscriticalNondegeneratePitchfork
    } else if d.theta1_slope.abs() <= slope_tol {
        if d.theta1_curvature.abs() > curv_noise {
            NuOneType::DoublePitchfork
        } else {
            NuOneType::TranscriticalDegeneratePitchfork
        }
    } else {
        NuOneType::Undetermined
    }
}

/// Configuration of the `θ` maps at `x_t(b)`, from centered differences
/// with step `h = 1e-3·x_t` and again with `h/2`; disagreement between
/// the two steps gives `Undetermined`.
pub fn classify_nu1_point(curves: &Curves, b: f64) -> Result<Classification> {
    let maps = TimeMaps::new(curves, b)?;
    if !maps.symmetric() {
        return Err(Error::Domain("classification needs nu = 1".into()));
    }
    let x_t = maps.x_t()?;
    let h = 1e-3 * x_t;
    let coarse = theta_derivatives(&maps, x_t, h)?;
    let fine = theta_derivatives(&maps, x_t, 0.5 * h)?;
    let (k1, k2) = (classify(&coarse, x_t), classify(&fine, x_t));
    Ok(Classification {
        kind: if k1 == k2 { k1 } else { NuOneType::Undetermined },
        b,
        x_t,
        coarse,
        fine,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure6Case {
    Left,
    Right,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImperfectSettings {
    pub nu_start: f64,
    /// Give up once `ν - 1` falls below this.
    pub nu_min_gap: f64,
    /// Half-width of the `x` neighbourhood of `x_t`, relative to `x_t`.
    pub x_window: f64,
    pub n_x: usize,
    /// `δ` of the proof inequalities, in units of `b*`.
    pub delta: f64,
    /// Half-width of the swept `b` window, in units of `b*`.
    pub b_window: f64,
    pub sweep: SweepSettings,
}

impl Default for ImperfectSettings {
    fn default() -> Self {
        Self {
            nu_start: 1.05,
            nu_min_gap: 1e-4,
            x_window: 1e-3,
            n_x: 41,
            delta: 1e-5,
            b_window: 1e-4,
            sweep: SweepSettings {
                n_b: 21,
                ..SweepSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProofChecks {
    /// `min τ_{2,ν}(·, b_b) - (1-2α)` over the neighbourhood.
    pub above_at_bb: f64,
    /// Largest `min τ_{2,ν}(·, b) - (1-2α)` over `b ∈ [b_b - 2δ, b_b - δ]`.
    pub below_before: f64,
    pub unique_minimum: bool,
}

impl ProofChecks {
    pub fn hold(&self) -> bool {
        self.above_at_bb > 0.0 && self.below_before < 0.0 && self.unique_minimum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImperfectReport {
    pub nu: f64,
    pub b_b: f64,
    pub checks: ProofChecks,
    /// Second difference of `θ₂` at `(x_t, b_b)` for `ν = 1`.
    pub theta2_curvature: f64,
    pub degenerate: bool,
    pub components: usize,
    pub turning_b: Option<f64>,
    pub turning_points: Vec<TurningPoint>,
    pub separated: bool,
    pub figure6_case: Figure6Case,
    pub nu_one_type: NuOneType,
    pub consistent: bool,
    /// `(ν, gap)` for `ν - 1` halved twice, gap in `(b/b*, u(α)/m0)`.
    pub gaps: Vec<(f64, f64)>,
    pub gap_monotone: bool,
}

fn x_grid(x_t: f64, settings: &ImperfectSettings) -> Vec<f64> {
    let n = settings.n_x.max(5);
    let w = settings.x_window * x_t;
    (0..n).map(|k| x_t - w + 2.0 * w * k as f64 / (n - 1) as f64).collect()
}

fn tau_profile(curves: &Curves, b: f64, j: u32, xs: &[f64]) -> Result<Vec<f64>> {
    let maps = TimeMaps::new(curves, b)?;
    xs.par_iter()
        .map(|&x| maps.arrivals(x)?.tau(j))
        .collect()
}

fn interior_minima(v: &[f64]) -> usize {
    (1..v.len() - 1).filter(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1]).count()
}

fn proof_checks(curves: &Curves, b_b: f64, x_t: f64, settings: &ImperfectSettings) -> Result<ProofChecks> {
    let length = curves.params.central_length();
    let xs = x_grid(x_t, settings);
    let d = settings.delta * curves.b_star();
    let at = tau_profile(curves, b_b, 2, &xs)?;
    let above = at.iter().cloned().fold(f64::INFINITY, f64::min) - length;
    let mut below = f64::NEG_INFINITY;
    for f in [2.0, 1.5, 1.0] {
        let v = tau_profile(curves, b_b - f * d, 2, &xs)?;
        below = below.max(v.iter().cloned().fold(f64::INFINITY, f64::min) - length);
    }
    Ok(ProofChecks {
        above_at_bb: above,
        below_before: below,
        unique_minimum: interior_minima(&at) == 1,
    })
}

/// `τ_{1,ν}` strictly increasing across `x_t ± half_width` for every probed
/// `b` gives the left case; an interior minimum that drops below
/// `1 - 2α` for some `b > b_b` gives the right case.
fn figure6_case(
    curves: &Curves,
    b_b: f64,
    x_t: f64,
    half_width: f64,
    settings: &ImperfectSettings,
) -> Result<Figure6Case> {
    let length = curves.params.central_length();
    let n = settings.n_x.max(5);
    let xs: Vec<f64> = (0..n)
        .map(|k| x_t - half_width + 2.0 * half_width * k as f64 / (n - 1) as f64)
        .collect();
    let w = settings.b_window * curves.b_star();
    let mut increasing = true;
    let mut right = false;
    for f in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let b = b_b + f * w;
        let v = tau_profile(curves, b, 1, &xs)?;
        increasing &= v.windows(2).all(|p| p[1] > p[0]);
        if f > 0.0 && interior_minima(&v) >= 1 && v.iter().cloned().fold(f64::INFINITY, f64::min) < length {
            right = true;
        }
    }
    Ok(if increasing {
        Figure6Case::Left
    } else if right {
        Figure6Case::Right
    } else {
        Figure6Case::Other
    })
}

/// Local diagram near `b_b` at a given `ν` and its structure.
pub struct LocalDiagram {
    pub diagram: Diagram,
    pub components: usize,
    pub gap: f64,
}

pub fn local_diagram(
    params: &ProblemParams,
    gamma: &GammaSettings,
    b_b: f64,
    settings: &ImperfectSettings,
    solver_settings: &SolverSettings,
) -> Result<LocalDiagram> {
    let curves = Curves::build(params, gamma)?;
    let w = settings.b_window * curves.b_star();
    let diagram = sweep(&curves, b_b - w, b_b + w, &settings.sweep, solver_settings)?;
    let mut gap = 0.0;
    if diagram.components >= 2 {
        gap = f64::INFINITY;
        for a in 0..diagram.components {
            for b in a + 1..diagram.components {
                let g = diagram
                    .fold_gap(a, b, curves.left.m0())
                    .unwrap_or_else(|| diagram.component_gap(a, b, curves.left.m0()));
                gap = gap.min(g);
            }
        }
    }
    Ok(LocalDiagram {
        components: diagram.components,
        diagram,
        gap,
    })
}

/// Imperfect bifurcation near `b_b^{1,+}` for `ν > 1`: the `ν = 1`
/// point fixes `b_b`, `x_t` and `δ`; `ν - 1` is halved from `nu_start`
/// until the proof inequalities hold, then the local diagram is swept.
pub fn imperfect_analysis(
    params: &ProblemParams,
    gamma: &GammaSettings,
    settings: &ImperfectSettings,
    solver_settings: &SolverSettings,
) -> Result<ImperfectReport> {
    let sym = Curves::build(&params.with_nu(1.0), gamma)?;
    let bp = find_bifurcation_point(&sym, 1, Sign::Plus, &BifpointSettings::default())?;
    let b_b = bp.b;
    let class = classify_nu1_point(&sym, b_b)?;
    let curvature = class.fine.theta2_curvature;
    let degenerate = class.kind == NuOneType::Undetermined
        || class.kind == NuOneType::TranscriticalDegeneratePitchfork;
    let x_t = bp.x_t;

    let mut nu = settings.nu_start;
    let (curves, checks) = loop {
        let curves = Curves::build(&params.with_nu(nu), gamma)?;
        let checks = proof_checks(&curves, b_b, x_t, settings)?;
        if checks.hold() {
            break (curves, checks);
        }
        nu = 1.0 + 0.5 * (nu - 1.0);
        if nu - 1.0 < settings.nu_min_gap {
            return Err(Error::Degenerate(format!(
                "imperfect-bifurcation inequalities fail down to nu = {nu}: {checks:?}"
            )));
        }
    };
    // stay well inside the nearest critical point of θ₁ at ν = 1
    let d = class.fine;
    let mut half_width = settings.x_window * x_t;
    if d.theta1_curvature != 0.0 && d.theta1_slope != 0.0 {
        half_width = half_width.min(0.25 * (d.theta1_slope / d.theta1_curvature).abs());
    }
    let case = figure6_case(&curves, b_b, x_t, half_width, settings)?;
    let local = local_diagram(&params.with_nu(nu), gamma, b_b, settings, solver_settings)?;
    let tps = local.diagram.turning_points();
    let turning_b = tps
        .iter()
        .filter(|t| t.kind == Criticality::Subcritical && t.j == 2 && t.b < b_b)
        .map(|t| t.b)
        .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.max(b))));
    let mut gaps = vec![(nu, local.gap)];
    for k in 1..3 {
        let nu_k = 1.0 + (nu - 1.0) / f64::from(1u32 << k);
        let l = local_diagram(&params.with_nu(nu_k), gamma, b_b, settings, solver_settings)?;
        gaps.push((nu_k, if l.components >= 2 { l.gap } else { 0.0 }));
    }
    let gap_monotone = gaps.windows(2).all(|w| w[1].1 < w[0].1);
    let consistent = matches!(
        (case, class.kind),
        (Figure6Case::Left, NuOneType::TranscriticalNondegeneratePitchfork)
            | (Figure6Case::Right, NuOneType::DoublePitchfork)
    );
    Ok(ImperfectReport {
        nu,
        b_b,
        checks,
        theta2_curvature: curvature,
        degenerate,
        components: local.components,
        turning_b,
        turning_points: tps,
        separated: local.components >= 2 && local.gap > 0.0,
        figure6_case: case,
        nu_one_type: class.kind,
        consistent,
        gaps,
        gap_monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub b: f64,
    pub nu: f64,
    pub direct_count: usize,
    pub reflected_count: usize,
    pub reflected_oracle_count: usize,
    /// Largest `|u(α) - ũ(1-α)|` after matching; `None` on count mismatch.
    pub max_mismatch: Option<f64>,
    pub agree: bool,
}

/// Solutions of `(ν, c)` against the `t → 1-t` images of the
/// `(1/ν, νc)` problem at the same `b`: shooting on the direct problem,
/// time maps and shooting on the reflected one.
pub fn reflection_check(
    params: &ProblemParams,
    gamma: &GammaSettings,
    b: f64,
    solver_settings: &SolverSettings,
    tol: f64,
) -> Result<ReflectionReport> {
    let direct_params = params.with_b(b);
    let refl_params = direct_params.reflected();
    let direct_curves = Curves::build(&direct_params, gamma)?;
    let refl_curves = Curves::build(&refl_params, gamma)?;
    let window = |c: &Curves| solver::oracle_window(c, solver_settings.window_widen);
    let (w0, w1) = (window(&direct_curves), window(&refl_curves));
    let ode = &solver_settings.ode;
    let direct = solver::shooting_oracle(&direct_params, w0, solver_settings.n_scan, ode)?;
    let refl_oracle = solver::shooting_oracle(&refl_params, w1, solver_settings.n_scan, ode)?;
    let refl = solver::solve_at(&refl_curves, b, solver_settings)?.solutions;
    // map the reflected solutions back: ũ(α) = u(1-α)
    let mut back: Vec<BvpSolution> = refl
        .iter()
        .map(|s| BvpSolution {
            x_alpha: s.x_one_minus_alpha,
            x_one_minus_alpha: s.x_alpha,
            ..s.clone()
        })
        .collect();
    back.sort_by(|a, b| a.x_alpha.total_cmp(&b.x_alpha));
    let mut back_oracle: Vec<BvpSolution> = refl_oracle
        .iter()
        .map(|s| BvpSolution {
            x_alpha: s.x_one_minus_alpha,
            x_one_minus_alpha: s.x_alpha,
            ..s.clone()
        })
        .collect();
    back_oracle.sort_by(|a, b| a.x_alpha.total_cmp(&b.x_alpha));
    let m1 = solver::match_solutions(&direct, &back, tol);
    let m2 = solver::match_solutions(&direct, &back_oracle, tol);
    let max_mismatch = match (m1, m2) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    };
    Ok(ReflectionReport {
        b,
        nu: params.nu,
        direct_count: direct.len(),
        reflected_count: back.len(),
        reflected_oracle_count: back_oracle.len(),
        agree: max_mismatch.is_some(),
        max_mismatch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub b_star: f64,
    pub b_h: f64,
    pub b_points: Vec<BifurcationPoint>,
    pub turning_points: Vec<TurningPoint>,
    pub attachments: Vec<Attachment>,
    pub nu_one_type: NuOneType,
    pub components: usize,
    pub imperfect: Option<ImperfectReport>,
}

/// Sweep `[b_lo, b_hi]` at the curves' `ν` and collect the report.
///
/// Bifurcation points and the `ν = 1` type are taken from symmetric
/// curves built with `gamma`; `b_b^{1,-}` is included when it exists.
/// With `imperfect` set the `ν > 1` analysis is added.
pub fn bifurcation_report(
    curves: &Curves,
    gamma: &GammaSettings,
    b_lo: f64,
    b_hi: f64,
    sweep_settings: &SweepSettings,
    solver_settings: &SolverSettings,
    imperfect: Option<&ImperfectSettings>,
) -> Result<(Diagram, BifurcationReport)> {
    let diagram = sweep(curves, b_lo, b_hi, sweep_settings, solver_settings)?;
    let sym_owned;
    let sym = if curves.params.nu == 1.0 {
        curves
    } else {
        sym_owned = Curves::build(&curves.params.with_nu(1.0), gamma)?;
        &sym_owned
    };
    let b_h = find_b_h(curves, None)?.effective;
    let plus = find_bifurcation_point(sym, 1, Sign::Plus, &BifpointSettings::default())?;
    let nu_one_type = classify_nu1_point(sym, plus.b)?.kind;
    let mut b_points = vec![plus];
    match find_bifurcation_point(sym, 1, Sign::Minus, &BifpointSettings::default()) {
        Ok(minus) => b_points.insert(0, minus),
        Err(Error::NotBracketed(_)) => {}
        Err(e) => return Err(e),
    }
    let imperfect = match imperfect {
        Some(settings) => Some(imperfect_analysis(&curves.params, gamma, settings, solver_settings)?),
        None => None,
    };
    let report = BifurcationReport {
        b_star: curves.b_star(),
        b_h,
        b_points,
        turning_points: diagram.turning_points(),
        attachments: diagram.attachments(),
        nu_one_type,
        components: diagram.components,
        imperfect,
    };
    Ok((diagram, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(b: f64, xs: &[(f64, f64)]) -> Level {
        Level {
            b,
            nodes: xs.iter().map(|&(ua, ub)| Node { ua, ub, j: 1 }).collect(),
            suspect: false,
        }
    }

    #[test]
    fn linking_follows_smooth_branches() {
        let levels: Vec<Level> = (0..5)
            .map(|k| {
                let b = k as f64;
                level(b, &[(1.0 + 0.01 * b, 1.0 + 0.01 * b), (2.0 - 0.01 * b, 2.0)])
            })
            .collect();
        let l = link(&levels, 1.0, 1e3);
        assert_eq!(l.branches.len(), 2);
        assert!(l.events.is_empty());
        assert!(l.branches.iter().all(|b| b.len() == 5));
    }

    #[test]
    fn fold_pairs_and_components() {
        // two branches meeting at a fold near b = 3.5, plus an unrelated one
        let mut levels = Vec::new();
        for k in 0..6 {
            let b = k as f64;
            let mut xs = vec![(5.0, 5.0)];
            if b < 3.5 {
                let s = (3.5 - b).sqrt() * 0.01;
                xs.push((1.0 - s, 1.0 - s));
                xs.push((1.0 + s, 1.0 + s));
            }
            xs.sort_by(|a, b| a.0.total_cmp(&b.0));
            levels.push(level(b, &xs));
        }
        let linked = link(&levels, 1.0, 1e3);
        assert_eq!(linked.events, vec![3]);
        let params = ProblemParams {
            lambda: -200.0,
            p: 2.0,
            alpha: 0.25,
            b: 0.0,
            c: 0.1,
            nu: 1.0,
            m: 1.0,
        };
        let d = assemble(&params, 1.0, 1.0, &levels, linked, levels.len());
        assert_eq!(d.components, 2);
        let tps = d.turning_points();
        assert_eq!(tps.len(), 1);
        assert_eq!(tps[0].kind, Criticality::Subcritical);
        assert!((tps[0].b - 3.5).abs() < 1e-12);
        assert!(d.attachments().is_empty());
    }

    #[test]
    fn interior_minimum_count() {
        assert_eq!(interior_minima(&[3.0, 2.0, 1.0, 2.0, 3.0]), 1);
        assert_eq!(interior_minima(&[1.0, 2.0, 3.0]), 0);
        assert_eq!(interior_minima(&[3.0, 1.0, 2.0, 1.0, 3.0]), 2);
    }

    #[test]
    fn classification_rules() {
        let base = ThetaDerivatives {
            h: 1e-5,
            theta: 0.5,
            theta1_slope: 30.0,
            theta2_slope: 0.0,
            theta1_curvature: 0.0,
            theta2_curvature: 1e6,
        };
        assert_eq!(classify(&base, 0.01), NuOneType::TranscriticalNondegeneratePitchfork);
        let flat = ThetaDerivatives { theta1_slope: 0.0, theta1_curvature: 1e6, ..base };
        assert_eq!(classify(&flat, 0.01), NuOneType::DoublePitchfork);
        let odd = ThetaDerivatives { theta1_slope: 0.0, ..base };
        assert_eq!(classify(&odd, 0.01), NuOneType::TranscriticalDegeneratePitchfork);
        let tilted = ThetaDerivatives { theta2_slope: 5.0, ..base };
        assert_eq!(classify(&tilted, 0.01), NuOneType::Undetermined);
    }
}
