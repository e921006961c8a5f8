//! Command-line arguments and their resolution into a run specification.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qclab::catalog::{chart_samples, load_config, Catalog};
use qclab::chart::QCChart;
use qclab::{NumericSettings, Tolerances};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::table::Format;

#[derive(Debug, Parser)]
#[command(
    name = "qclab",
    version,
    about = "Quaternionic contact structures: invariants, identities and twistor normality"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the chart catalog.
    List(ListArgs),
    /// Check structure recovery, the Reeb system and frame invariants per point.
    Validate(RunArgs),
    /// T0, U, Scal, tau and the Ricci residuals per point.
    Invariants(RunArgs),
    /// Normality of the twistor CR structure per twistor point.
    Normality(NormalityArgs),
    /// Named identity suite with pass/fail per check.
    Identities(RunArgs),
    /// Base points x fibre points, one CSV row per evaluation.
    Sweep(RunArgs),
}

#[derive(Debug, Args)]
pub struct ListArgs {
    /// Extra directory of chart configs (*.toml, *.json).
    #[arg(long)]
    pub config_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct NormalityArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also run the direct coordinate oracle and report its agreement.
    #[arg(long)]
    pub oracle: bool,
    /// Tangent pairs per twistor point for the oracle.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub oracle_pairs: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Catalog chart name.
    #[arg(long, conflicts_with = "config")]
    pub chart: Option<String>,
    /// Chart config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra directory of chart configs searched by --chart.
    #[arg(long)]
    pub config_dir: Option<PathBuf>,
    /// Skip validation when loading --config.
    #[arg(long)]
    pub no_validate: bool,
    /// Number of sampled base points (default: the chart's sampling).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub points: Option<u64>,
    /// Explicit base point, comma separated; repeatable. Overrides --points.
    #[arg(long = "at", value_name = "COORDS")]
    pub at: Vec<String>,
    /// Fibre points per base point.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub fiber: Option<u64>,
    /// Sampling seed (default: the chart's sampling).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Finite-difference stencil; each comes with its own default steps.
    #[arg(long = "fd-scheme", default_value = "central4")]
    pub scheme: String,
    /// Step for brackets of the frame field.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Step for derivatives of the connection.
    #[arg(long)]
    pub curv_step: Option<f64>,
    #[command(flatten)]
    pub tol: TolArgs,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, env = "QCLAB_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TolArgs {
    #[arg(long)]
    pub tol_exact: Option<f64>,
    #[arg(long)]
    pub tol_frame: Option<f64>,
    #[arg(long)]
    pub tol_levi: Option<f64>,
    #[arg(long)]
    pub tol_bi1: Option<f64>,
    #[arg(long)]
    pub tol_quaternion: Option<f64>,
    #[arg(long)]
    pub tol_q_preserve: Option<f64>,
    #[arg(long)]
    pub tol_torsion: Option<f64>,
    /// Normality residual bound.
    #[arg(long)]
    pub tol_normal: Option<f64>,
    /// ‖T0‖ bound.
    #[arg(long)]
    pub tol_t0: Option<f64>,
    /// Ricci decomposition and I-defect.
    #[arg(long)]
    pub tol_ricci: Option<f64>,
    #[arg(long)]
    pub tol_alpha: Option<f64>,
    /// Closed-form dη^Z against differencing.
    #[arg(long)]
    pub tol_deta: Option<f64>,
    /// CR Nijenhuis residual.
    #[arg(long)]
    pub tol_cr: Option<f64>,
    /// Levi-form J-invariance.
    #[arg(long)]
    pub tol_levi_j: Option<f64>,
    /// MTE residuals on torsion-free points.
    #[arg(long)]
    pub tol_mte: Option<f64>,
    /// Direct oracle against the closed forms.
    #[arg(long)]
    pub tol_oracle: Option<f64>,
}

/// Bounds for the identity suite and the oracle, beyond the pipeline tolerances.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckTolerances {
    pub ricci: f64,
    pub alpha: f64,
    pub d_eta: f64,
    pub cr: f64,
    pub levi_j: f64,
    pub mte: f64,
    pub oracle: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            ricci: 1e-4,
            alpha: 1e-5,
            d_eta: 1e-5,
            cr: 1e-4,
            levi_j: 1e-5,
            mte: 1e-4,
            oracle: 1e-4,
        }
    }
}

/// Bad input rather than a failed check.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct RunSpec {
    pub chart: QCChart,
    pub source: String,
    pub points: Vec<Vec<f64>>,
    pub fiber: usize,
    pub seed: u64,
    pub settings: NumericSettings,
    pub checks: CheckTolerances,
    pub format: Format,
    pub threads: usize,
}

fn positive(label: &str, v: Option<f64>, default: f64) -> Result<f64> {
    match v {
        None => Ok(default),
        Some(x) if x.is_finite() && x > 0.0 => Ok(x),
        Some(x) => Err(usage(format!("--{label} must be positive, got {x}"))),
    }
}

fn parse_point(text: &str, m: usize) -> Result<Vec<f64>> {
    let p: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| usage(format!("bad coordinate `{s}` in --at: {e}")))
        })
        .collect::<Result<_>>()?;
    if p.len() != m {
        bail!(usage(format!(
            "--at `{text}` has {} coordinates, the chart needs {m}",
            p.len()
        )));
    }
    Ok(p)
}

impl RunArgs {
    pub fn settings(&self) -> Result<(NumericSettings, CheckTolerances)> {
        let base = match self.scheme.as_str() {
            "central2" => NumericSettings::central2(),
            name => NumericSettings::default()
                .with_scheme(name)
                .map_err(|e| usage(e.to_string()))?,
        };
        let d = Tolerances::default();
        let t = &self.tol;
        let tol = Tolerances {
            exact: positive("tol-exact", t.tol_exact, d.exact)?,
            frame: positive("tol-frame", t.tol_frame, d.frame)?,
            levi: positive("tol-levi", t.tol_levi, d.levi)?,
            bi1: positive("tol-bi1", t.tol_bi1, d.bi1)?,
            quaternion: positive("tol-quaternion", t.tol_quaternion, d.quaternion)?,
            q_preserve: positive("tol-q-preserve", t.tol_q_preserve, d.q_preserve)?,
            torsion: positive("tol-torsion", t.tol_torsion, d.torsion)?,
            normal: positive("tol-normal", t.tol_normal, d.normal)?,
            t0: positive("tol-t0", t.tol_t0, d.t0)?,
        };
        let c = CheckTolerances::default();
        let checks = CheckTolerances {
            ricci: positive("tol-ricci", t.tol_ricci, c.ricci)?,
            alpha: positive("tol-alpha", t.tol_alpha, c.alpha)?,
            d_eta: positive("tol-deta", t.tol_deta, c.d_eta)?,
            cr: positive("tol-cr", t.tol_cr, c.cr)?,
            levi_j: positive("tol-levi-j", t.tol_levi_j, c.levi_j)?,
            mte: positive("tol-mte", t.tol_mte, c.mte)?,
            oracle: positive("tol-oracle", t.tol_oracle, c.oracle)?,
        };
        let settings = NumericSettings {
            h_fd: positive("fd-step", self.fd_step, base.h_fd)?,
            h_curv: positive("curv-step", self.curv_step, base.h_curv)?,
            tol,
            ..base
        };
        Ok((settings, checks))
    }

    /// `validate` wants to run the checks itself, so it loads configs unvalidated.
    pub fn resolve(&self, default_format: Format, default_fiber: usize, load_validated: bool) -> Result<RunSpec> {
        let (settings, checks) = self.settings()?;
        let (chart, sampling, source) = match &self.config {
            Some(path) => {
                let (chart, s) = load_config(path, load_validated && !self.no_validate, &settings)
                    .with_context(|| format!("loading {}", path.display()))?;
                (chart, s, path.display().to_string())
            }
            None => {
                let catalog = match &self.config_dir {
                    Some(dir) => Catalog::with_config_dir(dir)?,
                    None => Catalog::builtin(),
                };
                let entry = catalog.get(self.chart.as_deref().unwrap_or("heisenberg-1"))?;
                (entry.build()?, entry.sampling(), "catalog".to_string())
            }
        };
        let seed = self.seed.unwrap_or(sampling.seed);
        let points = if self.at.is_empty() {
            let count = self.points.map_or(sampling.samples, |p| p as usize);
            chart_samples(&chart, count, seed)
        } else {
            self.at
                .iter()
                .map(|s| parse_point(s, chart.m()))
                .collect::<Result<_>>()?
        };
        Ok(RunSpec {
            chart,
            source,
            points,
            fiber: self.fiber.map_or(default_fiber, |f| f as usize),
            seed,
            settings,
            checks,
            format: self.format.unwrap_or(default_format),
            threads: self.threads,
        })
    }
}

impl RunSpec {
    /// Report metadata. Deliberately excludes the thread count.
    pub fn meta(&self, fibre: bool) -> Map<String, Value> {
        let mut settings = json!({
            "scheme": self.settings.stencil.name(),
            "fd_step": self.settings.h_fd,
            "curv_step": self.settings.h_curv,
            "seed": self.seed,
            "points": self.points.len(),
        });
        if fibre {
            settings["fiber"] = self.fiber.into();
        }
        let mut meta = Map::new();
        meta.insert(
            "chart".into(),
            json!({ "name": self.chart.name(), "n": self.chart.n(), "source": self.source }),
        );
        meta.insert("settings".into(), settings);
        meta.insert("tolerances".into(), json!(self.settings.tol));
        meta.insert("check_tolerances".into(), json!(self.checks));
        meta
    }

    pub fn coord_columns(&self) -> Vec<String> {
        self.chart.coords().to_vec()
    }

    /// Runs `f` on every base point in the pool; results keep point order.
    pub fn map_points<T: Send>(&self, f: impl Fn(usize, &[f64]) -> T + Sync) -> Result<Vec<T>> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .context("building the thread pool")?;
        Ok(pool.install(|| self.points.par_iter().enumerate().map(|(k, p)| f(k, p)).collect()))
    }
}
