//! Experiment configuration files.
//!
//! ```toml
//! n_devices = 12
//! antennas = 4
//! snr_db = 20.0
//! lambdas = 0.5              # or [0.5, 0.6, ...] or "asym:0.9,0.1"
//! omegas = 1.0               # or a list
//! horizon = 20000
//! runs = 200
//! seed = 1
//! policies = ["ds", "fs", "mwa"]
//!
//! [sweep]
//! parameter = "lambda"       # lambda | snr_db | antennas | n_devices
//! values = [0.1, 0.2, 0.3]
//! ```
//!
//! `distance`, `path_loss_tau` and `gamma_th` default to 5, 2 and 1; the
//! path gain is `distance^-path_loss_tau`. `"asym:base,step"` gives device
//! `i` (1-based) the rate `base / (1 + step (i - 1))`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::report::fmt_float;
use crate::sim::NetworkConfig;

/// Arrival rates as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub enum RateSpec {
    Uniform(f64),
    PerDevice(Vec<f64>),
    /// `base / (1 + step (i - 1))` for device `i = 1..=N`.
    Decreasing {
        base: f64,
        step: f64,
    },
}

/// Device weights as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub enum WeightSpec {
    Uniform(f64),
    PerDevice(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawSpec {
    Scalar(f64),
    List(Vec<f64>),
    Text(String),
}

impl TryFrom<RawSpec> for RateSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        match raw {
            RawSpec::Scalar(v) => Ok(RateSpec::Uniform(v)),
            RawSpec::List(v) => Ok(RateSpec::PerDevice(v)),
            RawSpec::Text(s) => s.parse(),
        }
    }
}

impl From<RateSpec> for RawSpec {
    fn from(spec: RateSpec) -> Self {
        match spec {
            RateSpec::Uniform(v) => RawSpec::Scalar(v),
            RateSpec::PerDevice(v) => RawSpec::List(v),
            // Shortest round-trip formatting, unlike the 9-digit display form.
            RateSpec::Decreasing { base, step } => RawSpec::Text(format!("asym:{base},{step}")),
        }
    }
}

impl TryFrom<RawSpec> for WeightSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        match raw {
            RawSpec::Scalar(v) => Ok(WeightSpec::Uniform(v)),
            RawSpec::List(v) => Ok(WeightSpec::PerDevice(v)),
            RawSpec::Text(s) => Err(format!("expected a number or a list of numbers, got \"{s}\"")),
        }
    }
}

impl From<WeightSpec> for RawSpec {
    fn from(spec: WeightSpec) -> Self {
        match spec {
            WeightSpec::Uniform(v) => RawSpec::Scalar(v),
            WeightSpec::PerDevice(v) => RawSpec::List(v),
        }
    }
}

impl std::str::FromStr for RateSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("expected \"asym:base,step\", got \"{s}\"");
        let body = s.trim().strip_prefix("asym:").ok_or_else(bad)?;
        let (base, step) = body.split_once(',').ok_or_else(bad)?;
        let base = base.trim().parse().map_err(|_| bad())?;
        let step = step.trim().parse().map_err(|_| bad())?;
        Ok(RateSpec::Decreasing { base, step })
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_float(v)).collect::<Vec<_>>().join(";")
}

impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateSpec::Uniform(v) => f.write_str(&fmt_float(*v)),
            RateSpec::PerDevice(v) => f.write_str(&join(v)),
            RateSpec::Decreasing { base, step } => write!(f, "asym:{},{}", fmt_float(*base), fmt_float(*step)),
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Uniform(v) => f.write_str(&fmt_float(*v)),
            WeightSpec::PerDevice(v) => f.write_str(&join(v)),
        }
    }
}

impl RateSpec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            RateSpec::Uniform(v) => Ok(vec![*v; n]),
            RateSpec::PerDevice(v) if v.len() == n => Ok(v.clone()),
            RateSpec::PerDevice(v) => Err(Error::LengthMismatch {
                what: "lambdas",
                expected: n,
                got: v.len(),
            }),
            RateSpec::Decreasing { base, step } => Ok((0..n).map(|i| base / (1.0 + step * i as f64)).collect()),
        }
    }
}

impl WeightSpec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            WeightSpec::Uniform(v) => Ok(vec![*v; n]),
            WeightSpec::PerDevice(v) if v.len() == n => Ok(v.clone()),
            WeightSpec::PerDevice(v) => Err(Error::LengthMismatch {
                what: "omegas",
                expected: n,
                got: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Lambda,
    SnrDb,
    Antennas,
    NDevices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Settings of the `verify-belief` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub samples: usize,
    pub max_runs: u64,
    /// Arrival rate of the single-device distribution check.
    pub theta_lambda: f64,
    pub theta_targets: Vec<[u32; 3]>,
    /// Slot of the joint check, which uses the main network settings.
    pub joint_slot: usize,
    pub joint_targets: Vec<[u32; 3]>,
    pub joint_points: Vec<Vec<u32>>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            samples: 80_000,
            max_runs: 500_000_000,
            theta_lambda: 0.7,
            theta_targets: vec![[5, 1, 4], [3, 2, 3], [8, 3, 2], [1, 4, 1]],
            joint_slot: 5,
            joint_targets: vec![[1, 1, 4], [1, 1, 4], [1, 2, 3]],
            joint_points: vec![vec![1, 1, 1], vec![1, 2, 3], vec![3, 2, 1]],
        }
    }
}

fn default_distance() -> f64 {
    5.0
}

fn default_tau() -> f64 {
    2.0
}

fn default_gamma_th() -> f64 {
    1.0
}

fn default_omegas() -> WeightSpec {
    WeightSpec::Uniform(1.0)
}

fn default_horizon() -> usize {
    10_000
}

fn default_runs() -> usize {
    100
}

fn default_policies() -> Vec<String> {
    ["ds", "fs", "mwa"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub n_devices: usize,
    pub antennas: usize,
    pub snr_db: f64,
    #[serde(default = "default_distance")]
    pub distance: f64,
    #[serde(default = "default_tau")]
    pub path_loss_tau: f64,
    #[serde(default = "default_gamma_th")]
    pub gamma_th: f64,
    pub lambdas: RateSpec,
    #[serde(default = "default_omegas")]
    pub omegas: WeightSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySettings>,
}

/// One fully resolved sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub snr_db: f64,
    pub lambda_spec: RateSpec,
    pub omega_spec: WeightSpec,
    pub network: NetworkConfig,
}

impl Scenario {
    pub fn n_devices(&self) -> usize {
        self.network.n_devices
    }

    pub fn antennas(&self) -> usize {
        self.network.channel.antennas()
    }
}

/// `10^(db / 10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn as_count(name: &'static str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::invalid(
            name,
            format!("sweep value {v} is not a positive integer"),
        ))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>> {
        self.policies.iter().map(|p| p.parse()).collect()
    }

    /// Checks everything that does not depend on the sweep point, then
    /// resolves every point.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("distance", self.distance),
            ("path_loss_tau", self.path_loss_tau),
            ("gamma_th", self.gamma_th),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and positive, got {v}")));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db", "must be finite"));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("policies", "list at least one policy"));
        }
        self.policy_kinds()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::invalid("sweep", "values must not be empty"));
            }
        }
        self.scenarios().map(|_| ())
    }

    /// Sweep points in file order; a config without a sweep is one point.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let values: Vec<Option<f64>> = match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        values
            .into_iter()
            .map(|v| {
                let mut n = self.n_devices;
                let mut m = self.antennas;
                let mut snr_db = self.snr_db;
                let mut lambdas = self.lambdas.clone();
                if let (Some(s), Some(v)) = (&self.sweep, v) {
                    match s.parameter {
                        SweepParameter::Lambda => lambdas = RateSpec::Uniform(v),
                        SweepParameter::SnrDb => snr_db = v,
                        SweepParameter::Antennas => m = as_count("antennas", v)?,
                        SweepParameter::NDevices => n = as_count("n_devices", v)?,
                    }
                }
                self.scenario(n, m, snr_db, lambdas)
            })
            .collect()
    }

    fn scenario(&self, n: usize, m: usize, snr_db: f64, lambda_spec: RateSpec) -> Result<Scenario> {
        if n == 0 {
            return Err(Error::invalid("n_devices", "need at least one device"));
        }
        if m > n {
            return Err(Error::invalid("antennas", format!("M = {m} exceeds N = {n}")));
        }
        if !snr_db.is_finite() {
            return Err(Error::invalid("snr_db", "must be finite"));
        }
        let omega = self.distance.powf(-self.path_loss_tau);
        let channel = ChannelParams::new(m, db_to_linear(snr_db), omega, self.gamma_th)?;
        let network = NetworkConfig::new(
            channel,
            lambda_spec.expand(n)?,
            self.omegas.expand(n)?,
            self.horizon,
            self.runs,
            self.seed,
        )?;
        Ok(Scenario {
            snr_db,
            lambda_spec,
            omega_spec: self.omegas.clone(),
            network,
        })
    }
}
