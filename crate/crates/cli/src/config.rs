//! Run configuration: a TOML file whose sections mirror the engine's
//! settings. Every key has a default, so an empty file is the reference
//! configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indefinite::diagram::{ImperfectSettings, SweepSettings};
use indefinite::gamma::GammaSettings;
use indefinite::ode::OdeSettings;
use indefinite::quad::QuadSettings;
use indefinite::solver::SolverSettings;
use indefinite::ProblemParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A weight `b`, absolute or as a multiple of `b*` (which is only known
/// once the boundary curve is built).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BValue {
    Absolute(f64),
    Star(f64),
}

impl BValue {
    pub fn resolve(self, b_star: f64) -> f64 {
        match self {
            BValue::Absolute(b) => b,
            BValue::Star(f) => f * b_star,
        }
    }
}

impl FromStr for BValue {
    type Err = String;

    /// `2500`, `bstar`, `1.5*bstar` or `1.5bstar`.
    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let bad = || format!("cannot read b = {s:?}; expected a number, `bstar` or `<factor>*bstar`");
        let value = match t.strip_suffix("bstar") {
            Some(head) => {
                let head = head.trim().trim_end_matches('*').trim();
                let f = if head.is_empty() { 1.0 } else { head.parse::<f64>().map_err(|_| bad())? };
                BValue::Star(f)
            }
            None => BValue::Absolute(t.parse::<f64>().map_err(|_| bad())?),
        };
        let v = match value {
            BValue::Absolute(v) | BValue::Star(v) => v,
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("b = {s:?} must be finite and >= 0"));
        }
        Ok(value)
    }
}

impl fmt::Display for BValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BValue::Absolute(b) => write!(f, "{b:?}"),
            BValue::Star(k) if *k == 1.0 => write!(f, "bstar"),
            BValue::Star(k) => write!(f, "{k:?}*bstar"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawB {
    Number(f64),
    Text(String),
}

impl Serialize for BValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BValue::Absolute(b) => RawB::Number(*b),
            BValue::Star(_) => RawB::Text(self.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawB::deserialize(d)? {
            RawB::Number(b) => format!("{b:?}").parse().map_err(serde::de::Error::custom),
            RawB::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub lambda: f64,
    pub p: f64,
    pub alpha: f64,
    pub c: f64,
    pub nu: f64,
    #[serde(rename = "M", alias = "m")]
    pub m: f64,
    /// Central weight for single-`b` commands.
    pub b: BValue,
}

impl Default for Params {
    fn default() -> Self {
        let r = indefinite::acceptance::reference_params();
        Self {
            lambda: r.lambda,
            p: r.p,
            alpha: r.alpha,
            c: r.c,
            nu: r.nu,
            m: r.m,
            b: BValue::Star(1.0),
        }
    }
}

impl Params {
    /// Engine parameters with `b` left at zero.
    pub fn problem(&self) -> ProblemParams {
        ProblemParams {
            lambda: self.lambda,
            p: self.p,
            alpha: self.alpha,
            b: 0.0,
            c: self.c,
            nu: self.nu,
            m: self.m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    /// Boundary-curve sample spacing, as a fraction of `m0`.
    pub x_resolution: f64,
    /// Boundary-curve range, as a multiple of `m0`.
    pub x_max_factor: f64,
    /// Time-map grid per branch in `solve`.
    pub n_grid: usize,
    /// Points per exported time-map or orbit curve.
    pub n_x: usize,
    /// Largest hit index in `timemap`.
    pub j_max: u32,
    /// Initial `b` levels of a diagram sweep.
    pub n_b: usize,
    /// Diagram range in units of `b*`.
    pub b_range: [f64; 2],
    /// Event resolution of the sweep in units of `b*`.
    pub b_tol: f64,
    /// Relative widening of the shooting-oracle slope window.
    pub slope_window: f64,
    pub n_scan: usize,
}

impl Default for Grids {
    fn default() -> Self {
        let solver = SolverSettings::default();
        let sweep = SweepSettings::default();
        Self {
            x_resolution: 0.02,
            x_max_factor: 4.0,
            n_grid: solver.n_grid,
            n_x: 201,
            j_max: 4,
            n_b: sweep.n_b,
            b_range: [0.5, 2.0],
            b_tol: sweep.b_tol,
            slope_window: solver.window_widen,
            n_scan: solver.n_scan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Accepted relative error estimate of transit-time quadrature.
    pub quadrature: f64,
    /// Accepted boundary residual of a reconstructed solution.
    pub root: f64,
    /// Largest `u(α)` mismatch when solution lists are paired.
    #[serde(rename = "match")]
    pub match_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            quadrature: QuadSettings::default().accept_tol,
            root: SolverSettings::default().residual_tol,
            match_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profiles {
    Full,
    Sparse,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: PathBuf,
    pub profiles: Profiles,
    /// Samples kept per profile with `profiles = "sparse"`.
    pub sparse_points: usize,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            profiles: Profiles::Sparse,
            sparse_points: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagramSection {
    /// Add the `ν > 1` imperfect-bifurcation analysis to the report.
    pub imperfect: bool,
    pub nu_start: f64,
}

impl Default for DiagramSection {
    fn default() -> Self {
        Self {
            imperfect: false,
            nu_start: ImperfectSettings::default().nu_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bifpoint {
    /// Loop indices `1..=loops` are searched.
    pub loops: u32,
}

impl Default for Bifpoint {
    fn default() -> Self {
        Self { loops: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Verify {
    pub seed: u64,
}

impl Default for Verify {
    fn default() -> Self {
        Self { seed: 20_240_917 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: Params,
    pub ode: OdeSettings,
    pub grids: Grids,
    pub tolerances: Tolerances,
    pub outputs: Outputs,
    pub bifpoint: Bifpoint,
    pub diagram: DiagramSection,
    pub verify: Verify,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: Params::default(),
            ode: OdeSettings::precise(),
            grids: Grids::default(),
            tolerances: Tolerances::default(),
            outputs: Outputs::default(),
            bifpoint: Bifpoint::default(),
            diagram: DiagramSection::default(),
            verify: Verify::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are representable in TOML")
    }

    /// Everything an artifact can depend on: the config without the
    /// output directory.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.outputs.dir = PathBuf::new();
        c.to_toml()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.params.problem().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ode.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let g = &self.grids;
        if !(g.x_resolution > 0.0 && g.x_resolution < 1.0) {
            return bad(format!("grids.x_resolution must lie in (0, 1), got {}", g.x_resolution));
        }
        if !(g.x_max_factor > 1.0 && g.x_max_factor.is_finite()) {
            return bad(format!("grids.x_max_factor must exceed 1, got {}", g.x_max_factor));
        }
        let [lo, hi] = g.b_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("grids.b_range must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
        }
        if g.n_grid < 3 || g.n_x < 2 || g.n_b < 3 || g.n_scan < 4 || g.j_max == 0 {
            return bad("grids: n_grid >= 3, n_x >= 2, n_b >= 3, n_scan >= 4 and j_max >= 1 are required".into());
        }
        if !(g.b_tol > 0.0 && g.slope_window >= 0.0) {
            return bad("grids.b_tol must be positive and grids.slope_window nonnegative".into());
        }
        let t = &self.tolerances;
        if !(t.quadrature > 0.0 && t.root > 0.0 && t.match_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.outputs.sparse_points < 2 {
            return bad("outputs.sparse_points must be at least 2".into());
        }
        if self.bifpoint.loops == 0 {
            return bad("bifpoint.loops must be at least 1".into());
        }
        if !(self.diagram.nu_start > 1.0 && self.diagram.nu_start.is_finite()) {
            return bad(format!("diagram.nu_start must exceed 1, got {}", self.diagram.nu_start));
        }
        Ok(())
    }

    pub fn gamma(&self) -> GammaSettings {
        GammaSettings {
            x_resolution: self.grids.x_resolution,
            x_max_factor: self.grids.x_max_factor,
            ode: self.ode,
            ..GammaSettings::default()
        }
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            n_grid: self.grids.n_grid,
            n_scan: self.grids.n_scan,
            window_widen: self.grids.slope_window,
            residual_tol: self.tolerances.root,
            ode: self.ode,
            quad: QuadSettings {
                accept_tol: self.tolerances.quadrature,
                ..QuadSettings::default()
            },
            ..SolverSettings::default()
        }
    }

    pub fn sweep(&self) -> SweepSettings {
        SweepSettings {
            n_b: self.grids.n_b,
            b_tol: self.grids.b_tol,
            ..SweepSettings::default()
        }
    }

    pub fn imperfect(&self) -> ImperfectSettings {
        ImperfectSettings {
            nu_start: self.diagram.nu_start,
            ..ImperfectSettings::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_values_parse() {
        assert_eq!("bstar".parse::<BValue>().unwrap(), BValue::Star(1.0));
        assert_eq!("1.5*bstar".parse::<BValue>().unwrap(), BValue::Star(1.5));
        assert_eq!(" 0.5 bstar".parse::<BValue>().unwrap(), BValue::Star(0.5));
        assert_eq!("2500".parse::<BValue>().unwrap(), BValue::Absolute(2500.0));
        assert!("-1".parse::<BValue>().is_err());
        assert!("two*bstar".parse::<BValue>().is_err());
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn fingerprint_ignores_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.outputs.dir = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
