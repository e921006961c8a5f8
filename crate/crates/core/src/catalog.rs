//! Built-in charts and the chart configuration format.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::QuaternionTriple;
use crate::chart::{frame_field, QCChart};
use crate::error::{QcError, Result};
use crate::exprlang::{parse, parse_with_names, ScalarFieldExpr};
use crate::settings::NumericSettings;

pub const CONFIG_VERSION: u32 = 1;

/// Heisenberg coordinates `x1..x4n, t1, t2, t3`.
pub fn heisenberg_coords(n: usize) -> Vec<String> {
    let mut c: Vec<String> = (1..=4 * n).map(|a| format!("x{a}")).collect();
    c.extend(["t1", "t2", "t3"].map(String::from));
    c
}

/// `η_s = ½ dt_s + Σ_{a,b} (J_s)_{ab} x^a dx^b` with `J_s = −I_s` for the
/// left-multiplication triple, so that `dη_s(X,Y) = 2⟨I_sX, Y⟩` on H and
/// `ξ_s = 2∂/∂t_s`.
pub fn heisenberg(n: usize) -> Result<QCChart> {
    if !(1..=2).contains(&n) {
        return Err(QcError::UnsupportedDimension(n));
    }
    let n4 = 4 * n;
    let m = n4 + 3;
    let coords = heisenberg_coords(n);
    let names: Vec<&str> = coords.iter().map(String::as_str).collect();
    let triple = QuaternionTriple::standard(n);
    let mut rows: [Vec<ScalarFieldExpr>; 3] = Default::default();
    for s in 0..3 {
        let i_s = triple.get(s);
        for b in 0..m {
            let text = if b < n4 {
                let mut t = String::new();
                for a in 0..n4 {
                    let j = -i_s[(a, b)];
                    if j == 0.0 {
                        continue;
                    }
                    let sign = if j > 0.0 { "+" } else { "-" };
                    if t.is_empty() {
                        t = if j > 0.0 {
                            coords[a].clone()
                        } else {
                            format!("-{}", coords[a])
                        };
                    } else {
                        t = format!("{t} {sign} {}", coords[a]);
                    }
                }
                if t.is_empty() {
                    "0".to_string()
                } else {
                    t
                }
            } else if b - n4 == s {
                "0.5".to_string()
            } else {
                "0".to_string()
            };
            rows[s].push(parse_with_names(&text, m, &names)?);
        }
    }
    QCChart::new(format!("heisenberg-{n}"), n, rows)?
        .with_coords(coords)
        .with_domain(vec![(-1.0, 1.0); m])
}

/// `μ·η`, after checking μ > 0 at the box centre, corners of a coarse grid and
/// 64 seeded interior points.
pub fn conformal(base: &QCChart, mu: &ScalarFieldExpr) -> Result<QCChart> {
    let m = base.m();
    if mu.dim() != m {
        return Err(QcError::SizeMismatch {
            expected: m,
            got: mu.dim(),
        });
    }
    let mut probes = vec![match base.domain() {
        Some(d) => d.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
        None => vec![0.0; m],
    }];
    if let Some(d) = base.domain() {
        probes.extend(sample_points(d, 64, 0));
        // Vertices along each axis.
        for r in 0..m {
            for end in [d[r].0, d[r].1] {
                let mut p = probes[0].clone();
                p[r] = end;
                probes.push(p);
            }
        }
    }
    for p in probes {
        let v = mu.eval(&p)?;
        if !(v > 0.0) {
            return Err(QcError::NonPositiveFactor { point: p, value: v });
        }
    }
    let name = format!("{}*({})", base.name(), mu);
    Ok(base.scaled_by(mu).with_name(name))
}

/// Uniform points in a box, reproducible from the seed.
pub fn sample_points(domain: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
        .collect()
}

/// Sample points of a chart (its domain, or [-1,1]^m).
pub fn chart_samples(chart: &QCChart, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let default = vec![(-1.0, 1.0); chart.m()];
    sample_points(chart.domain().unwrap_or(&default), count, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { samples: 20, seed: 1 }
    }
}

/// A named chart that can be built on demand.
pub trait CatalogEntry: Send + Sync {
    fn name(&self) -> &str;
    fn description(&self) -> &str;
    fn n(&self) -> usize;
    fn build(&self) -> Result<QCChart>;
    fn sampling(&self) -> Sampling {
        Sampling::default()
    }
}

struct Heisenberg {
    n: usize,
    name: String,
    description: String,
}

impl CatalogEntry for Heisenberg {
    fn name(&self) -> &str {
        &self.name
    }
    fn description(&self) -> &str {
        &self.description
    }
    fn n(&self) -> usize {
        self.n
    }
    fn build(&self) -> Result<QCChart> {
        Ok(heisenberg(self.n)?.with_name(self.name.clone()))
    }
}

struct Conformal {
    n: usize,
    name: String,
    factor: String,
    description: String,
}

impl CatalogEntry for Conformal {
    fn name(&self) -> &str {
        &self.name
    }
    fn description(&self) -> &str {
        &self.description
    }
    fn n(&self) -> usize {
        self.n
    }
    fn build(&self) -> Result<QCChart> {
        let base = heisenberg(self.n)?;
        let coords = base.coords().to_vec();
        let names: Vec<&str> = coords.iter().map(String::as_str).collect();
        let mu = parse_with_names(&self.factor, base.m(), &names)?;
        Ok(conformal(&base, &mu)?.with_name(self.name.clone()))
    }
}

/// A chart loaded from a configuration file.
pub struct ConfigEntry {
    config: ChartConfig,
    description: String,
}

impl ConfigEntry {
    pub fn new(config: ChartConfig, source: &Path) -> Self {
        Self {
            description: format!("config file {}", source.display()),
            config,
        }
    }
}

impl CatalogEntry for ConfigEntry {
    fn name(&self) -> &str {
        &self.config.name
    }
    fn description(&self) -> &str {
        &self.description
    }
    fn n(&self) -> usize {
        self.config.n
    }
    fn build(&self) -> Result<QCChart> {
        self.config.to_chart()
    }
    fn sampling(&self) -> Sampling {
        Sampling {
            samples: self.config.samples,
            seed: self.config.seed,
        }
    }
}

pub struct Catalog {
    entries: BTreeMap<String, Box<dyn CatalogEntry>>,
}

impl Catalog {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut c = Self::empty();
        for n in [1, 2] {
            c.register(Box::new(Heisenberg {
                n,
                name: format!("heisenberg-{n}"),
                description: format!("flat quaternionic Heisenberg group, dimension {}", 4 * n + 3),
            }));
        }
        c.register(Box::new(Conformal {
            n: 1,
            name: "heisenberg-1-homothetic".into(),
            factor: "2".into(),
            description: "heisenberg-1 scaled by the constant factor 2".into(),
        }));
        c.register(Box::new(Conformal {
            n: 1,
            name: "heisenberg-1-conformal".into(),
            factor: "exp(0.2*x1)".into(),
            description: "heisenberg-1 scaled by exp(0.2 x1); carries torsion".into(),
        }));
        c.register(Box::new(Conformal {
            n: 1,
            name: "heisenberg-1-cayley".into(),
            factor: "1/((1 + x1^2 + x2^2 + x3^2 + x4^2)^2 + t1^2 + t2^2 + t3^2)".into(),
            description: "heisenberg-1 under the Cayley factor; torsion-free with constant positive Scal".into(),
        }));
        c.register(Box::new(Conformal {
            n: 2,
            name: "heisenberg-2-conformal".into(),
            factor: "exp(0.2*x1)".into(),
            description: "heisenberg-2 scaled by exp(0.2 x1); carries torsion".into(),
        }));
        c
    }

    /// Built-ins plus every `*.toml` / `*.json` config in `dir`.
    pub fn with_config_dir(dir: &Path) -> Result<Self> {
        let mut c = Self::builtin();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("toml" | "json")))
            .collect();
        paths.sort();
        for p in paths {
            let cfg = read_config(&p)?;
            c.register(Box::new(ConfigEntry::new(cfg, &p)));
        }
        Ok(c)
    }

    /// Registers an entry, replacing any entry of the same name.
    pub fn register(&mut self, entry: Box<dyn CatalogEntry>) {
        self.entries.insert(entry.name().to_string(), entry);
    }

    pub fn get(&self, name: &str) -> Result<&dyn CatalogEntry> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| QcError::UnknownName {
                kind: "chart",
                name: name.to_string(),
            })
    }

    pub fn entries(&self) -> impl Iterator<Item = &dyn CatalogEntry> {
        self.entries.values().map(|b| b.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn default_samples() -> usize {
    20
}

fn default_seed() -> u64 {
    1
}

/// On-disk chart description (TOML, or JSON with the same fields).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub version: u32,
    pub name: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<String>>,
    pub eta1: Vec<String>,
    pub eta2: Vec<String>,
    pub eta3: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<String>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
}

impl ChartConfig {
    pub fn from_chart(chart: &QCChart, sampling: Sampling) -> Self {
        let row = |s: usize| chart.coeffs()[s].iter().map(|e| e.to_string()).collect();
        Self {
            version: CONFIG_VERSION,
            name: chart.name().to_string(),
            n: chart.n(),
            coords: Some(chart.coords().to_vec()),
            eta1: row(0),
            eta2: row(1),
            eta3: row(2),
            factor: None,
            samples: sampling.samples,
            seed: sampling.seed,
            domain: chart.domain().map(|d| DomainConfig {
                lower: d.iter().map(|x| x.0).collect(),
                upper: d.iter().map(|x| x.1).collect(),
            }),
        }
    }

    /// Schema checks that do not need the expressions.
    pub fn check_schema(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(QcError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.n == 0 || self.n > crate::chart::MAX_N {
            return Err(QcError::Config(format!(
                "n = {} is outside 1..={}",
                self.n,
                crate::chart::MAX_N
            )));
        }
        let m = 4 * self.n + 3;
        let mut lens = vec![
            ("eta1", self.eta1.len()),
            ("eta2", self.eta2.len()),
            ("eta3", self.eta3.len()),
        ];
        if let Some(c) = &self.coords {
            lens.push(("coords", c.len()));
        }
        if let Some(d) = &self.domain {
            lens.push(("domain.lower", d.lower.len()));
            lens.push(("domain.upper", d.upper.len()));
        }
        for (field, len) in lens {
            if len != m {
                return Err(QcError::Config(format!(
                    "`{field}` has {len} entries but m = 4n+3 = {m}"
                )));
            }
        }
        if self.samples == 0 {
            return Err(QcError::Config("`samples` must be positive".into()));
        }
        if let Some(c) = &self.coords {
            for (i, name) in c.iter().enumerate() {
                let ok_ident = name
                    .chars()
                    .next()
                    .is_some_and(|ch| ch.is_ascii_alphabetic() || ch == '_')
                    && name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
                if !ok_ident {
                    return Err(QcError::Config(format!(
                        "coordinate name `{name}` is not an identifier"
                    )));
                }
                let shadows = name
                    .strip_prefix('u')
                    .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    && *name != format!("u{}", i + 1);
                if shadows || crate::exprlang::Func::from_name(name).is_some() {
                    return Err(QcError::Config(format!("coordinate name `{name}` is reserved")));
                }
            }
        }
        Ok(())
    }

    pub fn to_chart(&self) -> Result<QCChart> {
        self.check_schema()?;
        let m = 4 * self.n + 3;
        let located = |field: String, e: QcError| match e {
            QcError::Expr(x) => QcError::Config(format!("{field}: {x}")),
            other => other,
        };
        let coords = self.coords.clone();
        let names: Vec<String> = coords.clone().unwrap_or_else(|| crate::chart::default_coords(m));
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        for (label, row) in [("eta1", &self.eta1), ("eta2", &self.eta2), ("eta3", &self.eta3)] {
            for (r, text) in row.iter().enumerate() {
                parse_with_names(text, m, &name_refs).map_err(|e| located(format!("{label}[{r}]"), e.into()))?;
            }
        }
        let mut chart = QCChart::from_strings(
            self.name.clone(),
            self.n,
            coords,
            [&self.eta1[..], &self.eta2[..], &self.eta3[..]],
        )?;
        if let Some(d) = &self.domain {
            chart = chart.with_domain(d.lower.iter().copied().zip(d.upper.iter().copied()).collect())?;
        }
        if let Some(f) = &self.factor {
            let mu = parse_with_names(f, m, &name_refs).map_err(|e| located("factor".into(), e.into()))?;
            chart = conformal(&chart, &mu)?.with_name(self.name.clone());
        }
        Ok(chart)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("json")
}

/// Reads and schema-checks a config without building the chart.
pub fn read_config(path: &Path) -> Result<ChartConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ChartConfig = if is_json(path) {
        serde_json::from_str(&text).map_err(|e| QcError::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| QcError::Config(format!("{}: {e}", path.display())))?
    };
    cfg.check_schema()?;
    Ok(cfg)
}

/// Recover + Reeb solve + frame invariants at the configured sample points.
pub fn validate_chart(chart: &QCChart, sampling: Sampling, settings: &NumericSettings) -> Result<()> {
    for u in chart_samples(chart, sampling.samples, sampling.seed) {
        frame_field(chart, &u, settings)?;
    }
    Ok(())
}

/// Loads a chart; validates it at its sample points unless `validate` is false.
pub fn load_config(path: &Path, validate: bool, settings: &NumericSettings) -> Result<(QCChart, Sampling)> {
    let cfg = read_config(path)?;
    let chart = cfg.to_chart()?;
    let sampling = Sampling {
        samples: cfg.samples,
        seed: cfg.seed,
    };
    if validate {
        validate_chart(&chart, sampling, settings)?;
    }
    Ok((chart, sampling))
}

pub fn save_config(chart: &QCChart, sampling: Sampling, path: &Path) -> Result<()> {
    let cfg = ChartConfig::from_chart(chart, sampling);
    let text = if is_json(path) {
        serde_json::to_string_pretty(&cfg).map_err(|e| QcError::Config(e.to_string()))?
    } else {
        toml::to_string(&cfg).map_err(|e| QcError::Config(e.to_string()))?
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses a factor expression in u-variables for a chart of dimension m.
pub fn parse_factor(text: &str, chart: &QCChart) -> Result<ScalarFieldExpr> {
    let names: Vec<&str> = chart.coords().iter().map(String::as_str).collect();
    match parse_with_names(text, chart.m(), &names) {
        Ok(e) => Ok(e),
        Err(_) => Ok(parse(text, chart.m())?),
    }
}
