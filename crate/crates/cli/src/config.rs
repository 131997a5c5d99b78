//! Flag and config-file settings.
//!
//! Config files are flat `key = value` lines using the flag names; flags given
//! on the command line win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use netdual::network::Activation;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Standard,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Act {
    Linear,
    Relu,
}

impl From<Act> for Activation {
    fn from(a: Act) -> Self {
        match a {
            Act::Linear => Activation::Linear,
            Act::Relu => Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Synthetic {
    /// `X = I₂`, `Y = diag(2, 1)`.
    Diag,
    /// `X = I₄`, one-hot labels for two classes of two points.
    WhitenedOnehot,
    /// Rank-one data with scalar labels reachable by the data.
    Rank1,
    /// Gaussian `X` (6×4) and `Y = X W₀` with three outputs.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand; all optional so a config file can fill
/// the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    #[arg(long, value_enum)]
    pub act: Option<Act>,
    /// Network depth.
    #[arg(long = "L")]
    pub depth: Option<usize>,
    /// Scale bound on the hidden weights.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub branches: Option<usize>,
    /// Hidden width (per branch for parallel networks).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Matrix file with the data blocks.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Matrix file for weights or atoms produced by the command.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Constraint samples for ReLU dual checks.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Gradient steps per penalty stage.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Flat `key = value` file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub arch: Arch,
    pub act: Act,
    pub depth: usize,
    pub t: f64,
    pub branches: usize,
    pub hidden: Option<usize>,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub synthetic: Option<Synthetic>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub weights: Option<PathBuf>,
    pub trials: usize,
    pub steps: usize,
    pub restarts: usize,
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {} is not key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::usage(format!("invalid value `{v}` for `{key}`")))
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> Result<T, CliError> {
    T::from_str(v, true).map_err(|_| CliError::usage(format!("invalid value `{v}` for `{key}`")))
}

/// Applies config entries to every flag the command line left unset.
fn merge(
    mut args: CommonArgs,
    cfg: &BTreeMap<String, String>,
    base: &Path,
) -> Result<CommonArgs, CliError> {
    let path = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    for (k, v) in cfg {
        match k.as_str() {
            "arch" => args.arch = args.arch.or(Some(parse_enum(k, v)?)),
            "act" => args.act = args.act.or(Some(parse_enum(k, v)?)),
            "L" => args.depth = args.depth.or(Some(parse_value(k, v)?)),
            "t" => args.t = args.t.or(Some(parse_value(k, v)?)),
            "branches" => args.branches = args.branches.or(Some(parse_value(k, v)?)),
            "hidden" => args.hidden = args.hidden.or(Some(parse_value(k, v)?)),
            "seed" => args.seed = args.seed.or(Some(parse_value(k, v)?)),
            "data" => args.data = args.data.or(Some(path(v))),
            "synthetic" => args.synthetic = args.synthetic.or(Some(parse_enum(k, v)?)),
            "out" => args.out = args.out.or(Some(path(v))),
            "format" => args.format = args.format.or(Some(parse_enum(k, v)?)),
            "weights" => args.weights = args.weights.or(Some(path(v))),
            "trials" => args.trials = args.trials.or(Some(parse_value(k, v)?)),
            "steps" => args.steps = args.steps.or(Some(parse_value(k, v)?)),
            "restarts" => args.restarts = args.restarts.or(Some(parse_value(k, v)?)),
            _ => return Err(CliError::usage(format!("unknown config key `{k}`"))),
        }
    }
    Ok(args)
}

pub fn resolve(args: CommonArgs, default_format: Format) -> Result<Settings, CliError> {
    let args = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            merge(args.clone(), &parse_config(&text)?, &base)?
        }
        None => args,
    };
    if args.data.is_some() && args.synthetic.is_some() {
        return Err(CliError::usage(
            "use either --data or --synthetic, not both",
        ));
    }
    let s = Settings {
        arch: args.arch.unwrap_or(Arch::Standard),
        act: args.act.unwrap_or(Act::Linear),
        depth: args.depth.unwrap_or(3),
        t: args.t.unwrap_or(1.0),
        branches: args.branches.unwrap_or(8),
        hidden: args.hidden,
        seed: args.seed.unwrap_or(0),
        data: args.data,
        synthetic: args.synthetic,
        out: args.out,
        format: args.format.unwrap_or(default_format),
        weights: args.weights,
        trials: args.trials.unwrap_or(10_000),
        steps: args.steps.unwrap_or(2000),
        restarts: args.restarts.unwrap_or(8),
    };
    if !(s.t.is_finite() && s.t > 0.0) {
        return Err(CliError::usage(format!(
            "--t must be positive, got {}",
            s.t
        )));
    }
    if s.depth < 2 {
        return Err(CliError::usage("--L must be at least 2"));
    }
    if s.branches == 0 || s.restarts == 0 || s.hidden == Some(0) {
        return Err(CliError::usage(
            "--branches, --restarts and --hidden must be positive",
        ));
    }
    Ok(s)
}
