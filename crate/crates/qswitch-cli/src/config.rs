//! Experiment configuration in human units.
//!
//! Every field name carries its unit. Conversions to SI happen once, in
//! [`NetworkConfig::to_spec`], [`NoiseConfig::to_spec`], [`micros`] and
//! [`nanos`]:
//!
//! | field | conversion |
//! |---|---|
//! | `carrier_ghz` | `ω_tr = 2π·10⁹·x` rad/s |
//! | `kappa_mhz` | `κ = 2π·10⁶·x` rad/s |
//! | `chi_over_kappa` | `χ = x·κ` |
//! | `mode_window_over_kappa` | half width `x·κ` around the carrier |
//! | `group_velocity_over_c` | `v_g = x·c` |
//! | `t1_us`, `switch_t1_us` | `x/10⁶` s |
//! | `attenuation_db_per_km` | `p_loss = 1 − 10^(−x·L/10)`, `L` in km |
//! | `tau_ns` | `x/10⁹` s |

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use qswitch::network::{ModeSelection, NetworkSpec, SPEED_OF_LIGHT};
use qswitch::noise::NoiseSpec;
use qswitch::protocols::RouteOrder;
use serde::{Deserialize, Serialize};

use crate::schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Written by the runner into manifests; ignored on input.
    #[serde(default, skip_serializing)]
    pub derived: Option<toml::Table>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            noise: NoiseConfig::default(),
            protocol: ProtocolConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            output: OutputConfig::default(),
            derived: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: usize,
    pub carrier_ghz: f64,
    /// `κ/2π`.
    pub kappa_mhz: f64,
    pub length_m: f64,
    pub broad_wall_m: f64,
    /// One entry per switch; absent means `χ = κ` everywhere, or the W
    /// schedule for the `w` protocol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_over_kappa: Option<Vec<f64>>,
    pub mode_window_over_kappa: f64,
    /// Takes precedence over the window when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_velocity_over_c: Option<f64>,
    pub self_energy_compensation: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            nodes: 3,
            carrier_ghz: 8.0,
            kappa_mhz: 10.0,
            length_m: 10.0,
            broad_wall_m: 0.0286,
            chi_over_kappa: None,
            mode_window_over_kappa: 40.0,
            mode_count: None,
            group_velocity_over_c: None,
            self_energy_compensation: true,
        }
    }
}

impl NetworkConfig {
    pub fn kappa(&self) -> f64 {
        2.0 * PI * 1e6 * self.kappa_mhz
    }

    pub fn switches(&self) -> usize {
        2 * self.nodes.saturating_sub(1)
    }

    /// Ratios with the default filled in.
    pub fn chi_ratios(&self) -> Vec<f64> {
        self.chi_over_kappa
            .clone()
            .unwrap_or_else(|| vec![1.0; self.switches()])
    }

    pub fn to_spec(&self) -> NetworkSpec {
        let kappa = self.kappa();
        NetworkSpec {
            nodes: self.nodes,
            omega_tr: 2.0 * PI * 1e9 * self.carrier_ghz,
            kappa,
            length: self.length_m,
            broad_wall: self.broad_wall_m,
            chi: self.chi_ratios().iter().map(|x| x * kappa).collect(),
            modes: match self.mode_count {
                Some(count) => ModeSelection::Count { count },
                None => ModeSelection::Window {
                    half_width: self.mode_window_over_kappa * kappa,
                },
            },
            v_g_override: self.group_velocity_over_c.map(|x| x * SPEED_OF_LIGHT),
            self_energy_compensation: self.self_energy_compensation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Node qubit relaxation time; `inf` disables relaxation.
    pub t1_us: f64,
    /// Switch qubit relaxation time; defaults to `t1_us`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_t1_us: Option<f64>,
    /// Direct loss probability per link traversal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_loss: Option<f64>,
    /// Line attenuation; exclusive with `p_loss`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_db_per_km: Option<f64>,
}

pub const DEFAULT_P_LOSS: f64 = 1.2e-3;

/// Microseconds to seconds, correctly rounded.
pub fn micros(x: f64) -> f64 {
    x / 1e6
}

/// Nanoseconds to seconds, correctly rounded.
pub fn nanos(x: f64) -> f64 {
    x / 1e9
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            t1_us: 100.0,
            switch_t1_us: None,
            p_loss: None,
            attenuation_db_per_km: None,
        }
    }
}

/// `1 − 10^(−a·L/10)` for attenuation `a` (dB/km) over `length_m` metres.
pub fn loss_from_attenuation(db_per_km: f64, length_m: f64) -> f64 {
    1.0 - 10f64.powf(-db_per_km * (length_m / 1000.0) / 10.0)
}

impl NoiseConfig {
    pub fn loss_probability(&self, length_m: f64) -> f64 {
        match (self.p_loss, self.attenuation_db_per_km) {
            (Some(p), _) => p,
            (None, Some(a)) => loss_from_attenuation(a, length_m),
            (None, None) => DEFAULT_P_LOSS,
        }
    }

    pub fn to_spec(&self, length_m: f64) -> NoiseSpec {
        NoiseSpec {
            t1: micros(self.t1_us),
            switch_t1: self.switch_t1_us.map(micros),
            p_loss: self.loss_probability(length_m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Qst,
    Bell,
    Ghz,
    W,
    Route,
    SweepTau,
    SweepChi,
    SweepT1,
    EmitterCheck,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 9] = [
        Self::Qst,
        Self::Bell,
        Self::Ghz,
        Self::W,
        Self::Route,
        Self::SweepTau,
        Self::SweepChi,
        Self::SweepT1,
        Self::EmitterCheck,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Qst => "qst",
            Self::Bell => "bell",
            Self::Ghz => "ghz",
            Self::W => "w",
            Self::Route => "route",
            Self::SweepTau => "sweep-tau",
            Self::SweepChi => "sweep-chi",
            Self::SweepT1 => "sweep-t1",
            Self::EmitterCheck => "emitter-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Entangling protocol swept by `sweep-t1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    Bell,
    Ghz,
    W,
}

impl SweepTarget {
    pub fn experiment(self) -> ExperimentName {
        match self {
            Self::Bell => ExperimentName::Bell,
            Self::Ghz => ExperimentName::Ghz,
            Self::W => ExperimentName::W,
        }
    }
}

/// Protocol duration: a fixed value or the decay-limited optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Auto,
    Ns(f64),
}

impl Serialize for Tau {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Tau::Auto => s.serialize_str("auto"),
            Tau::Ns(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Tau {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Int(i64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(Tau::Ns(x)),
            Repr::Int(x) => Ok(Tau::Ns(x as f64)),
            Repr::Word(w) if w == "auto" => Ok(Tau::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a duration in ns or \"auto\", got \"{w}\""
            ))),
        }
    }
}

/// Duration grid for `τ_opt` searches, in units of `1/κ`, optionally
/// offset by the propagation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauGrid {
    pub start_over_kappa: f64,
    pub stop_over_kappa: f64,
    pub step_over_kappa: f64,
    pub add_propagation_time: bool,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            start_over_kappa: 6.0,
            stop_over_kappa: 40.0,
            step_over_kappa: 0.5,
            add_propagation_time: true,
        }
    }
}

impl TauGrid {
    pub fn points(&self, kappa: f64, propagation_time: f64) -> Vec<f64> {
        let n = ((self.stop_over_kappa - self.start_over_kappa) / self.step_over_kappa + 1e-9).floor() as usize;
        let offset = if self.add_propagation_time {
            propagation_time
        } else {
            0.0
        };
        (0..=n)
            .map(|i| (self.start_over_kappa + self.step_over_kappa * i as f64) / kappa + offset)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ExperimentName,
    pub tau_ns: Tau,
    pub order: RouteOrder,
    /// Bits of the central node's left and right switches for `route`.
    pub open: [bool; 2],
    pub target: SweepTarget,
    pub t1_us_list: Vec<f64>,
    pub chi_over_kappa_list: Vec<f64>,
    pub tau_grid: TauGrid,
    /// Samples of the population trace written by `qst`.
    pub trace_points: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            name: ExperimentName::Bell,
            tau_ns: Tau::Auto,
            order: RouteOrder::LeftFirst,
            open: [true, true],
            target: SweepTarget::Bell,
            t1_us_list: vec![1.0, 10.0, 100.0, 400.0, 1000.0, 10_000.0],
            chi_over_kappa_list: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            tau_grid: TauGrid::default(),
            trace_points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub trajectories: usize,
    pub resamples: usize,
    /// Defaults to `min(500, trajectories)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    pub seed: u64,
    /// Worker threads; absent uses every core. Results do not depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trajectories: 1000,
            resamples: 100,
            sample_size: None,
            seed: 1,
            threads: None,
        }
    }
}

impl MonteCarloConfig {
    pub fn sample_size(&self) -> usize {
        self.sample_size.unwrap_or(self.trajectories.min(500))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `QSWITCH_OUT`, then `qswitch-out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec!["csv".into()],
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a document, reporting every violation.
    pub fn from_toml(text: &str) -> Result<Self, schema::SchemaErrors> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| schema::SchemaErrors(vec![format!("syntax: {}", e.message())]))?;
        Self::from_table(table)
    }

    pub fn from_table(mut table: toml::Table) -> Result<Self, schema::SchemaErrors> {
        schema::check_and_normalize(&mut table)?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| schema::SchemaErrors(vec![e.message().to_string()]))?;
        let errors = cfg.semantic_errors();
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(schema::SchemaErrors(errors))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Range and consistency checks on an already typed configuration.
    pub fn semantic_errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        let n = &self.network;
        let positive = |e: &mut Vec<String>, key: &str, x: f64| {
            if !(x > 0.0 && x.is_finite()) {
                e.push(format!("{key}: must be positive and finite, got {x}"));
            }
        };
        if !(2..=16).contains(&n.nodes) {
            e.push(format!("network.nodes: must lie in 2..=16, got {}", n.nodes));
        }
        positive(&mut e, "network.carrier_ghz", n.carrier_ghz);
        positive(&mut e, "network.kappa_mhz", n.kappa_mhz);
        positive(&mut e, "network.length_m", n.length_m);
        positive(&mut e, "network.broad_wall_m", n.broad_wall_m);
        positive(&mut e, "network.mode_window_over_kappa", n.mode_window_over_kappa);
        if let Some(v) = n.group_velocity_over_c {
            if !(v > 0.0 && v <= 1.0) {
                e.push(format!("network.group_velocity_over_c: must lie in (0, 1], got {v}"));
            }
        }
        if n.mode_count == Some(0) {
            e.push("network.mode_count: must be at least 1".into());
        }
        if let Some(chi) = &n.chi_over_kappa {
            if chi.len() != n.switches() {
                e.push(format!(
                    "network.chi_over_kappa: expected {} entries for {} nodes, got {}",
                    n.switches(),
                    n.nodes,
                    chi.len()
                ));
            }
            if let Some(x) = chi.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                e.push(format!("network.chi_over_kappa: entries must be non-negative and finite, got {x}"));
            }
        }
        let t_ok = |t: f64| t > 0.0 && !t.is_nan();
        if !t_ok(self.noise.t1_us) {
            e.push(format!("noise.t1_us: must be positive or inf, got {}", self.noise.t1_us));
        }
        if let Some(t) = self.noise.switch_t1_us {
            if !t_ok(t) {
                e.push(format!("noise.switch_t1_us: must be positive or inf, got {t}"));
            }
        }
        if self.noise.p_loss.is_some() && self.noise.attenuation_db_per_km.is_some() {
            e.push("noise: set either p_loss or attenuation_db_per_km, not both".into());
        }
        if let Some(p) = self.noise.p_loss {
            if !(0.0..1.0).contains(&p) {
                e.push(format!("noise.p_loss: must lie in [0, 1), got {p}"));
            }
        }
        if let Some(a) = self.noise.attenuation_db_per_km {
            if !(a >= 0.0 && a.is_finite()) {
                e.push(format!("noise.attenuation_db_per_km: must be non-negative and finite, got {a}"));
            }
        }
        let p = &self.protocol;
        if let Tau::Ns(t) = p.tau_ns {
            positive(&mut e, "protocol.tau_ns", t);
        }
        if p.t1_us_list.is_empty() {
            e.push("protocol.t1_us_list: must not be empty".into());
        }
        if let Some(t) = p.t1_us_list.iter().find(|t| !t_ok(**t)) {
            e.push(format!("protocol.t1_us_list: entries must be positive, got {t}"));
        }
        if p.chi_over_kappa_list.is_empty() {
            e.push("protocol.chi_over_kappa_list: must not be empty".into());
        }
        if let Some(x) = p.chi_over_kappa_list.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
            e.push(format!("protocol.chi_over_kappa_list: entries must be non-negative and finite, got {x}"));
        }
        let g = &p.tau_grid;
        positive(&mut e, "protocol.tau_grid.start_over_kappa", g.start_over_kappa);
        positive(&mut e, "protocol.tau_grid.step_over_kappa", g.step_over_kappa);
        if !(g.stop_over_kappa >= g.start_over_kappa + 2.0 * g.step_over_kappa) {
            e.push(format!(
                "protocol.tau_grid: needs at least three points between {} and {}",
                g.start_over_kappa, g.stop_over_kappa
            ));
        } else if (g.stop_over_kappa - g.start_over_kappa) / g.step_over_kappa > 10_000.0 {
            e.push("protocol.tau_grid: more than 10000 points".into());
        }
        if p.trace_points < 2 || p.trace_points > 1_000_000 {
            e.push(format!("protocol.trace_points: must lie in 2..=1000000, got {}", p.trace_points));
        }
        if p.name == ExperimentName::Route && n.nodes != 3 {
            e.push(format!("protocol.name: route needs network.nodes = 3, got {}", n.nodes));
        }
        let mc = &self.monte_carlo;
        if mc.trajectories == 0 {
            e.push("monte_carlo.trajectories: must be at least 1".into());
        }
        if mc.resamples == 0 {
            e.push("monte_carlo.resamples: must be at least 1".into());
        }
        if mc.sample_size() == 0 || mc.sample_size() > mc.trajectories {
            e.push(format!(
                "monte_carlo.sample_size: must lie in 1..={}, got {}",
                mc.trajectories,
                mc.sample_size()
            ));
        }
        if mc.seed > i64::MAX as u64 {
            e.push(format!("monte_carlo.seed: must not exceed {}", i64::MAX));
        }
        if mc.threads == Some(0) {
            e.push("monte_carlo.threads: must be at least 1".into());
        }
        if let Some(f) = self.output.formats.iter().find(|f| f.as_str() != "csv") {
            e.push(format!("output.formats: unsupported format \"{f}\"; only \"csv\" is available"));
        }
        e
    }
}
