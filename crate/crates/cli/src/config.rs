use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use rwre_core::env_model::{DistKind, EnvDistribution};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Distribution flag: `two_point:0.25`, `uniform:0.1`, `constant:0.5` or
/// `finite:0.2@1,0.8@3` (value@weight pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistSpec(pub DistKind);

impl FromStr for DistSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| format!("expected kind:parameter, got {s:?}"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        let k = match kind.trim() {
            "two_point" => DistKind::TwoPoint { p: num(arg)? },
            "uniform" => DistKind::Uniform { eps0: num(arg)? },
            "constant" => DistKind::Constant { p: num(arg)? },
            "finite" => {
                let (mut support, mut weights) = (Vec::new(), Vec::new());
                for pair in arg.split(',') {
                    let (v, w) = pair
                        .split_once('@')
                        .ok_or_else(|| format!("expected value@weight, got {pair:?}"))?;
                    support.push(num(v)?);
                    weights.push(num(w)?);
                }
                DistKind::Finite { support, weights }
            }
            other => return Err(format!("unknown distribution kind {other:?}")),
        };
        Ok(DistSpec(k))
    }
}

impl DistSpec {
    pub fn build(&self) -> Result<EnvDistribution, CliError> {
        Ok(EnvDistribution::new(self.0.clone()).map_err(rwre_core::Error::from)?)
    }
}

/// Every experiment parameter, settable from a TOML file or from flags.
/// Flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Command run by `rwre run`, e.g. "rate continuous".
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Environment law, e.g. two_point:0.25.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Scale as log n.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_n: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<i64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<i64>,
    /// Lower absorbing site.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<i64>,
    /// Upper absorbing site.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<i64>,
    /// Starting sites.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<i64>>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    /// Speeds for the continuous rate function.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    /// Order range `min,max` (log-spaced).
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_points: Option<usize>,
    /// Argument range `min,max` (log-spaced).
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_points: Option<usize>,
    /// Walk lengths.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u64>>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Walk replicas per estimate.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_samples: Option<u64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_tries: Option<u64>,
    /// Site window (depth for Laplace transforms, extent for simulations).
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    /// Sinai window as a multiple of (log n)^2.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_c: Option<f64>,
    /// right (first passage to +1) or left (to -1).
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    /// Also run the homogeneous control walk.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<bool>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn overlay(mut self, flags: &ExperimentConfig) -> Self {
        overlay!(self, flags; command, dist, eps, log_n, lo, hi, a, b, sites, r, velocity,
            kappa, x, lambda, nu, nu_points, y, y_points, n_list, alpha, reps, env_samples,
            env_tries, window, window_c, direction, control, tol, confidence, seed, threads, out);
        self
    }

    /// Thread count: flag, then `RWRE_THREADS`, then config file, then 1.
    pub fn resolve_threads(&mut self, flag: Option<usize>) {
        let env = std::env::var("RWRE_THREADS").ok().and_then(|s| s.parse().ok());
        self.threads = Some(flag.or(env).or(self.threads).unwrap_or(1).max(1));
    }

    pub fn require<T: Clone>(v: &Option<T>, name: &str) -> Result<T, CliError> {
        v.clone().ok_or_else(|| CliError::Config(format!("missing required parameter `{name}`")))
    }
}
