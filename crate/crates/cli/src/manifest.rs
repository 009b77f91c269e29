//! Artifact writing and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use indefinite::export::to_json;
use indefinite::gamma::{find_b_h, tangent_orbit, Curves, HomoclinicTangency};
use indefinite::problem::{lambda_threshold, small_oscillation_period};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Output directory that remembers what was written to it.
pub struct Output {
    dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        self.write_untracked(name, contents)?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    fn write_untracked(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = to_json(value).map_err(|e| CliError::Invariant(format!("serializing {name}: {e}")))?;
        self.write(name, &text)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Wall time per stage, logged to stderr as each stage ends.
#[derive(Default)]
pub struct Stages {
    pub timings: Vec<Timing>,
}

impl Stages {
    pub fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        eprintln!("{stage:<12} {seconds:>8.2} s");
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds,
        });
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyAt {
    pub b_over_b_star: f64,
    pub b: f64,
    pub x_t: Option<f64>,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Derived {
    pub m0: f64,
    pub m0_right: f64,
    pub b_star: f64,
    /// Center abscissa at `b*`; equals `m0`.
    pub center_at_b_star: f64,
    pub b_h: Option<HomoclinicTangency>,
    pub tangency: Vec<TangencyAt>,
    /// `λ_1 .. λ_4`.
    pub lambda_thresholds: Vec<f64>,
    pub small_oscillation_period: f64,
    pub central_length: f64,
}

impl Derived {
    pub fn compute(curves: &Curves, b: f64) -> Result<Self, CliError> {
        let params = &curves.params;
        let b_star = curves.b_star();
        let mut factors = vec![1.0, 1.5];
        let own = b / b_star;
        if !factors.contains(&own) {
            factors.push(own);
        }
        let tangency = factors
            .into_iter()
            .map(|f| {
                let t = tangent_orbit(&curves.left, f * b_star).ok();
                TangencyAt {
                    b_over_b_star: f,
                    b: f * b_star,
                    x_t: t.map(|t| t.x_t),
                    energy: t.map(|t| t.e_t),
                }
            })
            .collect();
        let lambda_thresholds = (1..=4)
            .map(|j| lambda_threshold(j, params.p, params.alpha))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            m0: curves.left.m0(),
            m0_right: curves.right.m0(),
            b_star,
            center_at_b_star: params.well_at(b_star).center()?,
            b_h: find_b_h(curves, None).ok(),
            tangency,
            lambda_thresholds,
            small_oscillation_period: small_oscillation_period(params.lambda, params.p),
            central_length: params.central_length(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    /// The resolved configuration, without the output directory.
    pub config: String,
    pub derived: Derived,
    pub artifacts: Vec<Artifact>,
    /// The only entries that differ between identical runs.
    pub timings: Vec<Timing>,
}

impl Manifest {
    pub fn write(&self, out: &Output) -> Result<(), CliError> {
        let text = to_json(self).map_err(|e| CliError::Invariant(format!("serializing manifest: {e}")))?;
        out.write_untracked("manifest.json", &text)
    }
}
