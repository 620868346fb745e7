//! Flags shared by every subcommand. The same struct is the JSON config
//! file format: a file supplies defaults and explicit flags override it.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use dvqa::attacks::{CorruptionMode, ShiftScope};
use dvqa::hamiltonian::LatticeSpec;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An angle in radians. Parses `pi`, `pi/N`, `K*pi/N`, `-pi/N` or a float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle(pub f64);

impl FromStr for Angle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().to_ascii_lowercase();
        let bad = || format!("cannot read {s:?} as an angle");
        if let Ok(v) = t.parse::<f64>() {
            return if v.is_finite() { Ok(Angle(v)) } else { Err(bad()) };
        }
        let (sign, body) = match t.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, t.as_str()),
        };
        let (num, den) = match body.split_once('/') {
            Some((n, d)) => (n, d.parse::<f64>().map_err(|_| bad())?),
            None => (body, 1.0),
        };
        let factor = match num.strip_suffix("pi") {
            Some("") => 1.0,
            Some(k) => k.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
            None => return Err(bad()),
        };
        if den == 0.0 {
            return Err(bad());
        }
        Ok(Angle(sign * factor * std::f64::consts::PI / den))
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Angle(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Lattice written as `RxC`, in flags and in config files alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice(pub LatticeSpec);

impl FromStr for Lattice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<LatticeSpec>().map(Lattice).map_err(|e| e.to_string())
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for Lattice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Lattice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Inproc,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Output,
    All,
}

impl From<Scope> for ShiftScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Output => ShiftScope::Output,
            Scope::All => ShiftScope::All,
        }
    }
}

/// Adversary used by the descent experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Uniform noise of magnitude `--delta` on the gradient with probability `--p-attack`.
    Gradient,
    /// Flip every sample of an attacked round.
    WorstCase,
    /// Flip each sample of an attacked round with probability one half.
    RandomFlip,
}

impl AttackKind {
    pub fn corruption_mode(self) -> Option<CorruptionMode> {
        match self {
            AttackKind::Gradient => None,
            AttackKind::WorstCase => Some(CorruptionMode::WorstCase),
            AttackKind::RandomFlip => Some(CorruptionMode::RandomFlip),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Lattice as RxC.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
    /// Transverse field.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    /// Shots per cost evaluation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Relative gradient error threshold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_th: Option<f64>,
    /// Assumed lower bound on the exact gradient one-norm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    /// Slack of the test-round analysis (defaults to w/2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    /// Colors of the pattern graph (computed when absent).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub colors: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackKind>,
    /// Attack probability; a comma-separated grid for verify-step.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_attack: Option<Vec<f64>>,
    /// Gradient perturbation magnitude.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Measurement-angle shift; a comma-separated grid for verify-step.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_shift: Option<Vec<Angle>>,
    /// Vertices hit by an angle shift.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<Scope>,
    /// Test rounds per step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_rounds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_reruns: Option<usize>,
    /// Accepted steps inspected by the convergence check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Gradient-norm tolerance of the convergence check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_g: Option<f64>,
    /// Cap on delegated rounds over a whole run.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_budget: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Runs per grid setting.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<Transport>,
    /// Address to listen on.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    /// Peer addresses: REFEREE,SERVER for verify-step, REFEREE for serve-server.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connect: Option<Vec<String>>,
    /// Connections the referee accepts before exiting.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connections: Option<usize>,
    /// Override the observable one-norm in the bounds report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub one_norm: Option<f64>,
    /// Strong-convexity constant.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Lipschitz constant of the gradient.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Shot-noise variance of the gradient estimator.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Run independent jobs one after another.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequential: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $over:ident; $($f:ident),* $(,)?) => {
        Settings { $($f: $over.$f.or($base.$f)),* }
    };
}

impl Settings {
    /// Fields set in `over` win.
    pub fn overlay(self, over: Settings) -> Settings {
        let base = self;
        overlay!(base, over;
            lattice, h, layers, shots, lr, e_th, eps0, eps1, colors, attack, p_attack, delta,
            angle_shift, scope, t_rounds, n_iter, max_reruns, window, tol_g, round_budget, seeds,
            runs, out, transport, listen, connect, connections, one_norm, mu, lipschitz, sigma2,
            sequential,
        )
    }

    pub fn from_json(text: &str) -> serde_json::Result<Settings> {
        serde_json::from_str(text)
    }
}
