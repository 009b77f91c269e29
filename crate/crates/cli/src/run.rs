//! Subcommands.

use indefinite::acceptance::{Check, Suite};
use indefinite::diagram::{self, BifpointSettings, BifurcationPoint, Classification, Sign};
use indefinite::export::{csv, fmt_f64};
use indefinite::gamma::{tangent_orbit, Curves, HomoclinicTangency};
use indefinite::problem::homoclinic_branch;
use indefinite::solver::{self, BvpSolution, Suspect};
use indefinite::timemap::{self, samples_to_csv, TimeMapSample, TimeMaps};
use serde::Serialize;

use crate::config::{Profiles, RunConfig};
use crate::error::CliError;
use crate::manifest::{Derived, Manifest, Output, Stages};
use crate::Command;

/// Run `command` with an already resolved configuration; artifacts and
/// the manifest go to `cfg.outputs.dir`.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Output::new(&cfg.outputs.dir)?;
    let mut stages = Stages::default();
    let params = cfg.params.problem();
    let curves = stages.run("curves", || Curves::build(&params, &cfg.gamma()))?;
    let b = cfg.params.b.resolve(curves.b_star());
    let derived = stages.run("constants", || Derived::compute(&curves, b))?;

    let outcome = match command {
        Command::Gamma => {
            out.write("gamma0.csv", &curves.left.to_csv())?;
            out.write("gamma1.csv", &curves.right.to_csv())?;
            Ok(())
        }
        Command::Phase => phase(&curves, b, cfg, &mut out, &mut stages),
        Command::Timemap => timemap(&curves, b, cfg, &mut out, &mut stages),
        Command::Solve => solve(&curves, b, cfg, &mut out, &mut stages),
        Command::Bifpoint => bifpoint(&curves, cfg, &mut out, &mut stages),
        Command::Diagram => diagram(&curves, cfg, &mut out, &mut stages),
        Command::Verify => verify(cfg, &mut out, &mut stages),
        Command::Config => Ok(()),
    };
    let config = cfg.fingerprint();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.name().to_string(),
        config_sha256: crate::manifest::sha256_hex(config.as_bytes()),
        config,
        derived,
        artifacts: out.artifacts.clone(),
        timings: stages.timings,
    };
    manifest.write(&out)?;
    outcome
}

/// Equilibria, the homoclinic loop, the tangent orbit and a few closed
/// orbits of the central flow at `b`, as `kind,E,u,v` rows.
fn phase(curves: &Curves, b: f64, cfg: &RunConfig, out: &mut Output, stages: &mut Stages) -> Result<(), CliError> {
    let params = curves.params;
    let well = params.well_at(b);
    let n = cfg.grids.n_x;
    let rows = stages.run("phase", || -> Result<Vec<Vec<String>>, CliError> {
        let mut rows = Vec::new();
        let mut push = |kind: &str, e: f64, u: f64, v: f64| {
            rows.push(vec![kind.to_string(), fmt_f64(e), fmt_f64(u), fmt_f64(v)]);
        };
        let omega = well.center()?;
        push("saddle", 0.0, 0.0, 0.0);
        push("center", well.potential(omega), omega, 0.0);
        let extent = well.homoclinic_extent()?;
        let nodes = cosine_nodes(0.0, extent, n);
        for &u in &nodes {
            push("homoclinic", 0.0, u, homoclinic_branch(u, b, params.lambda, params.p)?.0);
        }
        for &u in nodes.iter().rev() {
            push("homoclinic", 0.0, u, homoclinic_branch(u, b, params.lambda, params.p)?.1);
        }
        let bottom = well.potential(omega);
        let mut levels: Vec<(String, f64)> = (1..=4).map(|k| (format!("orbit{k}"), bottom * (1.0 - 0.2 * k as f64))).collect();
        if let Ok(t) = tangent_orbit(&curves.left, b) {
            if t.e_t < 0.0 && t.e_t > bottom {
                levels.push(("tangent".into(), t.e_t));
            }
        }
        for (kind, e) in levels {
            let (lo, hi) = timemap::turning_points(e, &well)?;
            let nodes = cosine_nodes(lo, hi, n);
            let v = |u: f64| (e - well.potential(u)).max(0.0).sqrt();
            for &u in &nodes {
                push(&kind, e, u, v(u));
            }
            for &u in nodes.iter().rev() {
                push(&kind, e, u, -v(u));
            }
        }
        Ok(rows)
    })?;
    out.write("phase.csv", &csv("kind,E,u,v", rows))
}

/// `n` Chebyshev–Lobatto nodes on `[a, b]`, endpoints included.
fn cosine_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| {
            let c = (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            0.5 * (a + b) - 0.5 * (b - a) * c
        })
        .collect()
}

fn timemap(curves: &Curves, b: f64, cfg: &RunConfig, out: &mut Output, stages: &mut Stages) -> Result<(), CliError> {
    let maps = TimeMaps::with_quad(curves, b, cfg.solver().quad)?;
    let samples = stages.run("timemap", || -> Result<Vec<TimeMapSample>, CliError> {
        let (a, z) = maps.closed_domain()?;
        // interior nodes: the maps diverge at the homoclinic ends
        let nodes: Vec<f64> = cosine_nodes(a, z, cfg.grids.n_x + 2)[1..=cfg.grids.n_x].to_vec();
        let symmetric = maps.symmetric();
        let per_x: Vec<Vec<TimeMapSample>> = {
            use rayon::prelude::*;
            nodes
                .par_iter()
                .map(|&x| {
                    let mut v: Vec<TimeMapSample> =
                        (1..=cfg.grids.j_max).filter_map(|j| maps.tau(x, j).ok()).collect();
                    v.extend(maps.period_at(x).ok());
                    if symmetric {
                        v.extend([1, 2].into_iter().filter_map(|w| maps.theta(x, w).ok()));
                    }
                    v
                })
                .collect()
        };
        Ok(per_x.into_iter().flatten().collect())
    })?;
    if samples.is_empty() {
        return Err(CliError::Numerical(indefinite::Error::Resolution(format!(
            "no time-map value could be evaluated at b = {b}"
        ))));
    }
    out.write("timemap.csv", &samples_to_csv(&samples))
}

fn shape_profiles(solutions: &[BvpSolution], cfg: &RunConfig) -> Vec<BvpSolution> {
    solutions
        .iter()
        .map(|s| match cfg.outputs.profiles {
            Profiles::Full => s.clone(),
            Profiles::Sparse => s.downsampled(cfg.outputs.sparse_points),
            Profiles::None => s.downsampled(0),
        })
        .collect()
}

fn report_suspects(suspects: &[Suspect]) -> Result<(), CliError> {
    if suspects.is_empty() {
        return Ok(());
    }
    for s in suspects {
        eprintln!("suspect root x = {} (j = {}): {}", fmt_f64(s.x), s.j, s.reason);
    }
    Err(CliError::Invariant(format!(
        "{} time-map root(s) failed reconstruction",
        suspects.len()
    )))
}

fn solve(curves: &Curves, b: f64, cfg: &RunConfig, out: &mut Output, stages: &mut Stages) -> Result<(), CliError> {
    let set = stages.run("solve", || solver::solve_at(curves, b, &cfg.solver()))?;
    eprintln!("{} solutions at b = {}", set.solutions.len(), fmt_f64(b));
    out.write_json("solutions.json", &shape_profiles(&set.solutions, cfg))?;
    report_suspects(&set.suspects)
}

#[derive(Serialize)]
struct BifpointReport {
    b_star: f64,
    b_h: HomoclinicTangency,
    points: Vec<BifurcationPoint>,
    /// Loop index and sign of each point that does not exist.
    missing: Vec<(u32, Sign, String)>,
    classification: Option<Classification>,
}

fn bifpoint(curves: &Curves, cfg: &RunConfig, out: &mut Output, stages: &mut Stages) -> Result<(), CliError> {
    // the points are defined on the symmetric problem
    let sym_owned;
    let sym = if curves.params.nu == 1.0 {
        curves
    } else {
        sym_owned = stages.run("curves nu=1", || Curves::build(&curves.params.with_nu(1.0), &cfg.gamma()))?;
        &sym_owned
    };
    let report = stages.run("bifpoint", || -> Result<BifpointReport, CliError> {
        let settings = BifpointSettings::default();
        let mut points = Vec::new();
        let mut missing = Vec::new();
        for i in 1..=cfg.bifpoint.loops {
            for sign in [Sign::Minus, Sign::Plus] {
                match diagram::find_bifurcation_point(sym, i, sign, &settings) {
                    Ok(p) => points.push(p),
                    Err(e @ indefinite::Error::NotBracketed(_)) => missing.push((i, sign, e.to_string())),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let classification = points
            .iter()
            .find(|p| p.i == 1 && p.sign == Sign::Plus)
            .map(|p| diagram::classify_nu1_point(sym, p.b))
            .transpose()?;
        Ok(BifpointReport {
            b_star: sym.b_star(),
            b_h: indefinite::gamma::find_b_h(sym, None)?,
            points,
            missing,
            classification,
        })
    })?;
    for (i, sign, why) in &report.missing {
        eprintln!("b_b^({i},{}) not found: {why}", if *sign == Sign::Plus { "+" } else { "-" });
    }
    out.write_json("report.json", &report)
}

fn diagram(curves: &Curves, cfg: &RunConfig, out: &mut Output, stages: &mut Stages) -> Result<(), CliError> {
    let b_star = curves.b_star();
    let [lo, hi] = cfg.grids.b_range;
    let imperfect = cfg.imperfect();
    let (d, report) = stages.run("diagram", || {
        diagram::bifurcation_report(
            curves,
            &cfg.gamma(),
            lo * b_star,
            hi * b_star,
            &cfg.sweep(),
            &cfg.solver(),
            cfg.diagram.imperfect.then_some(&imperfect),
        )
    })?;
    eprintln!(
        "{} points, {} branches, {} components, {} solves",
        d.points.len(),
        d.branches.len(),
        d.components,
        d.solves
    );
    for e in d.ends.iter().filter(|e| e.kind == diagram::EndKind::Lost) {
        eprintln!("branch {} lost near b/b* = {}", e.branch_id, fmt_f64(e.b / b_star));
    }
    for b in &d.ambiguous {
        eprintln!("ambiguous linking near b/b* = {}", fmt_f64(b / b_star));
    }
    out.write("diagram.csv", &d.to_csv())?;
    out.write_json("report.json", &report)?;
    if !d.suspect_b.is_empty() {
        return Err(CliError::Invariant(format!(
            "time-map roots failed reconstruction at {} b level(s)",
            d.suspect_b.len()
        )));
    }
    Ok(())
}

fn verify(cfg: &RunConfig, out: &mut Output, stages: &mut Stages) -> Result<(), CliError> {
    let suite = Suite::new(cfg.params.problem(), cfg.gamma(), cfg.solver(), cfg.verify.seed);
    let mut checks: Vec<Check> = Vec::new();
    for id in 1..=10u8 {
        let c = stages.run(&format!("check {id}"), || suite.run(id));
        println!("{c}");
        checks.push(c);
    }
    // wall times stay out of the artifact
    let table: Vec<_> = checks.iter().map(|c| (c.id, c.name, c.passed, c.detail.as_str())).collect();
    out.write_json("verify.json", &table)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Invariant(format!("{failed} of {} acceptance checks failed", checks.len())));
    }
    Ok(())
}
