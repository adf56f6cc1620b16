use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use manpg::RetractionKind;
use serde::{Deserialize, Deserializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Spca,
    Cm,
    McpSpca,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Spca => "spca",
            ProblemKind::Cm => "cm",
            ProblemKind::McpSpca => "mcp-spca",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spca" => Ok(ProblemKind::Spca),
            "cm" => Ok(ProblemKind::Cm),
            "mcp-spca" => Ok(ProblemKind::McpSpca),
            _ => bail!("unknown problem '{s}' (expected spca, cm or mcp-spca)"),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Manpg,
    ManpgAda,
    Soc,
    Subgrad,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Manpg => "manpg",
            SolverKind::ManpgAda => "manpg-ada",
            SolverKind::Soc => "soc",
            SolverKind::Subgrad => "subgrad",
        }
    }
}

impl FromStr for SolverKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manpg" => Ok(SolverKind::Manpg),
            "manpg-ada" => Ok(SolverKind::ManpgAda),
            "soc" => Ok(SolverKind::Soc),
            "subgrad" => Ok(SolverKind::Subgrad),
            _ => bail!("unknown solver '{s}' (expected manpg, manpg-ada, soc or subgrad)"),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One sweep over a grid of `(n, r, mu)`.
///
/// Read from a flat TOML document; every key is optional. Grid keys accept
/// either a scalar or an array.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub r: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub mu: Vec<f64>,
    pub instances: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub solvers: Vec<SolverKind>,
    pub seed: u64,
    /// Rows of the sparse PCA data matrix.
    pub m: usize,
    pub max_iter: usize,
    /// Multiplies the default outer tolerance `1e-8 n r`.
    pub tol_scale: f64,
    #[serde(deserialize_with = "retraction")]
    pub retraction: RetractionKind,
    pub warm_start_iters: usize,
    pub mcp_lambda: f64,
    pub mcp_gamma: f64,
    /// Fixed data matrix (A for sparse PCA, H for compressed modes) instead of generated data.
    pub matrix: Option<PathBuf>,
    /// When false, `cpu_s` is written as 0 so output depends only on the spec.
    pub timing: bool,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Cm,
            n: vec![128],
            r: vec![4],
            mu: vec![0.1],
            instances: 50,
            solvers: vec![SolverKind::Manpg, SolverKind::ManpgAda, SolverKind::Soc],
            seed: 0,
            m: 50,
            max_iter: 30000,
            tol_scale: 1.0,
            retraction: RetractionKind::Polar,
            warm_start_iters: 500,
            mcp_lambda: 1.0,
            mcp_gamma: 3.0,
            matrix: None,
            timing: true,
            threads: None,
            out: PathBuf::from("results"),
        }
    }
}

/// Command-line values that replace those of the config file.
#[derive(Clone, Debug, Default)]
pub struct SpecOverrides {
    pub problem: Option<ProblemKind>,
    pub n: Option<Vec<usize>>,
    pub r: Option<Vec<usize>>,
    pub mu: Option<Vec<f64>>,
    pub instances: Option<usize>,
    pub solvers: Option<Vec<SolverKind>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub tol_scale: Option<f64>,
    pub retraction: Option<RetractionKind>,
    pub timing: Option<bool>,
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).context("invalid experiment config")?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: SpecOverrides) {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = o.$field { self.$field = v; })* };
        }
        set!(problem, n, r, mu, instances, solvers, seed, out, max_iter, tol_scale, retraction, timing);
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.r.is_empty() || self.mu.is_empty() {
            bail!("grids for n, r and mu must be non-empty");
        }
        if self.solvers.is_empty() {
            bail!("solver list must be non-empty");
        }
        if self.instances == 0 {
            bail!("instance count must be at least 1");
        }
        for &n in &self.n {
            for &r in &self.r {
                if r == 0 || r > n {
                    bail!("need 1 <= r <= n, got n = {n}, r = {r}");
                }
            }
            if self.problem == ProblemKind::Cm && n < 3 {
                bail!("compressed modes needs n >= 3, got {n}");
            }
        }
        if self.mu.iter().any(|&mu| !(mu >= 0.0 && mu.is_finite())) {
            bail!("mu must be finite and non-negative");
        }
        if self.problem != ProblemKind::Cm && self.m < 2 {
            bail!("sparse PCA needs m >= 2 data rows");
        }
        if !(self.tol_scale > 0.0 && self.tol_scale.is_finite()) {
            bail!("tol_scale must be positive");
        }
        if self.max_iter == 0 {
            bail!("max_iter must be at least 1");
        }
        if self.problem == ProblemKind::McpSpca {
            if !(self.mcp_lambda > 0.0 && self.mcp_gamma > 0.0) {
                bail!("mcp_lambda and mcp_gamma must be positive");
            }
            if self.solvers.contains(&SolverKind::Soc) {
                bail!("soc applies only to the l1 problems spca and cm");
            }
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    /// Grid points in sweep order.
    pub fn grid(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &r in &self.r {
                for &mu in &self.mu {
                    out.push((n, r, mu));
                }
            }
        }
        out
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn retraction<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<RetractionKind, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}
