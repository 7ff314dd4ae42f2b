//! Flat key-value configuration for the whole pipeline.
//!
//! The format is `key = value` per line, dotted keys for grouping,
//! `#` comments. Parsing starts from a base config (usually a preset),
//! applies the file, then any inline overrides, then validates. Unknown
//! keys are rejected so typos cannot silently fall back to defaults.
//!
//! ```text
//! switch.users = 3
//! switch.architecture = PS
//! link.p = 0.9
//! ```

use crate::bell::{swap_fidelity, NoiseClass, ProtocolId};
use crate::capacity::Architecture;
use crate::sim::ArrivalProcess;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for '{key}': {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("invalid configuration: {msg}")]
    Validation { msg: String },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

/// Purification protocol family; combined with [`NoiseClass`] it picks
/// the concrete [`ProtocolId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    Dejmps,
    Bbpssw,
    Pumping,
}

impl ProtocolChoice {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolChoice::Dejmps => "dejmps",
            ProtocolChoice::Bbpssw => "bbpssw",
            ProtocolChoice::Pumping => "pumping",
        }
    }

    /// Resolves the concrete protocol for a noise class. BBPSSW assumes
    /// Werner inputs and has no binary variant.
    pub fn protocol_id(self, noise: NoiseClass) -> Result<ProtocolId, ConfigError> {
        match (self, noise) {
            (ProtocolChoice::Dejmps, NoiseClass::Werner) => Ok(ProtocolId::DejmpsBellDiagonal),
            (ProtocolChoice::Dejmps, NoiseClass::Binary) => Ok(ProtocolId::DejmpsBinary),
            (ProtocolChoice::Bbpssw, NoiseClass::Werner) => Ok(ProtocolId::BbpsswWerner),
            (ProtocolChoice::Bbpssw, NoiseClass::Binary) => Err(ConfigError::Validation {
                msg: "bbpssw assumes werner noise; switch.noise = binary is not supported".into(),
            }),
            (ProtocolChoice::Pumping, class) => Ok(ProtocolId::Pumping(class)),
        }
    }
}

/// Complete run configuration. One scalar per physical parameter: the
/// model is homogeneous across links and pairs, matching the studied
/// switch.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchConfig {
    pub users: usize,
    pub alpha_max: usize,
    pub architecture: Architecture,
    pub protocol: ProtocolChoice,
    pub noise: NoiseClass,
    pub p: f64,
    pub f_link: f64,
    /// Attenuation coefficient (1/km), metadata tied to `length`.
    pub attenuation: Option<f64>,
    /// Link length (km).
    pub length: Option<f64>,
    pub q: f64,
    pub f_threshold: f64,
    /// Arrival rates: one value (broadcast to all pairs) or one per pair.
    pub rates: Vec<f64>,
    pub arrival_process: ArrivalProcess,
    pub horizon: u64,
    pub replicas: usize,
    pub seed: u64,
    pub x_max: usize,
    pub column_cap: usize,
    pub p_cut: f64,
    pub max_rounds: usize,
    /// Slot duration in seconds; reporting metadata only.
    pub slot_duration: f64,
}

impl Default for SwitchConfig {
    /// The `table4` preset: the parameter set of the numerical studies.
    fn default() -> Self {
        Self {
            users: 3,
            alpha_max: 10,
            architecture: Architecture::PurifySwap,
            protocol: ProtocolChoice::Dejmps,
            noise: NoiseClass::Werner,
            p: 0.9,
            f_link: 0.90,
            attenuation: None,
            length: None,
            q: 0.9,
            f_threshold: 0.85,
            rates: vec![0.0],
            arrival_process: ArrivalProcess::Poisson,
            horizon: 100_000,
            replicas: 3,
            seed: 1,
            x_max: 64,
            column_cap: 1_000_000,
            p_cut: 1e-12,
            max_rounds: 32,
            slot_duration: 1.0,
        }
    }
}

impl SwitchConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "table4" => Ok(Self::default()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    /// Number of unordered user pairs.
    pub fn pair_count(&self) -> usize {
        crate::pairs::pair_count(self.users)
    }

    /// Arrival rates expanded to one value per pair.
    pub fn expanded_rates(&self) -> Vec<f64> {
        if self.rates.len() == 1 {
            vec![self.rates[0]; self.pair_count()]
        } else {
            self.rates.clone()
        }
    }

    pub fn protocol_id(&self) -> Result<ProtocolId, ConfigError> {
        self.protocol.protocol_id(self.noise)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Validation { msg });
        if self.users < 2 {
            return fail(format!("switch.users = {} must be >= 2", self.users));
        }
        if self.alpha_max < 1 {
            return fail("switch.alpha_max must be >= 1".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return fail(format!("link.p = {} must be in (0, 1]", self.p));
        }
        if !(self.f_link > 0.25 && self.f_link <= 1.0) {
            return fail(format!("link.fidelity = {} must be in (0.25, 1]", self.f_link));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return fail(format!("swap.q = {} must be in (0, 1]", self.q));
        }
        if !(self.f_threshold > 0.5 && self.f_threshold < 1.0) {
            return fail(format!(
                "app.fidelity_threshold = {} must be in (0.5, 1)",
                self.f_threshold
            ));
        }
        let np = self.pair_count();
        if self.rates.len() != 1 && self.rates.len() != np {
            return fail(format!(
                "arrivals.rate needs 1 or {np} values, got {}",
                self.rates.len()
            ));
        }
        if self.rates.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return fail("arrivals.rate values must be >= 0".into());
        }
        if self.horizon < 1 {
            return fail("sim.horizon must be >= 1".into());
        }
        if self.replicas < 1 {
            return fail("sim.replicas must be >= 1".into());
        }
        if self.x_max < self.alpha_max {
            return fail(format!(
                "tables.x_max = {} must cover switch.alpha_max = {}",
                self.x_max, self.alpha_max
            ));
        }
        if self.column_cap < 1 {
            return fail("lp.column_cap must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.p_cut) {
            return fail(format!("lp.p_cut = {} must be in [0, 1)", self.p_cut));
        }
        if self.max_rounds < 1 {
            return fail("purify.max_rounds must be >= 1".into());
        }
        if self.slot_duration.is_nan() || self.slot_duration <= 0.0 {
            return fail("slot.duration must be > 0".into());
        }
        match (self.attenuation, self.length) {
            (Some(theta), Some(d)) => {
                if theta < 0.0 || d < 0.0 {
                    return fail("link.attenuation and link.length must be >= 0".into());
                }
                let expected = (-theta * d).exp();
                if (self.p - expected).abs() > 1e-12 {
                    return fail(format!(
                        "link.p = {} inconsistent with exp(-attenuation*length) = {expected}",
                        self.p
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return fail(
                    "link.attenuation and link.length must be given together".into(),
                )
            }
        }
        // Protocol/noise combination must resolve.
        self.protocol_id()?;
        if self.architecture == Architecture::SwapPurify {
            let eta = swap_fidelity(self.f_link).map_err(|e| ConfigError::Validation {
                msg: format!("link.fidelity out of swap domain: {e}"),
            })?;
            if eta <= 0.5 {
                return fail(format!(
                    "SP needs swapped fidelity > 0.5, but eta({}) = {eta:.6}",
                    self.f_link
                ));
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse` of the output reproduces `self`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("switch.users", self.users.to_string());
        push("switch.alpha_max", self.alpha_max.to_string());
        push("switch.architecture", self.architecture.label().to_string());
        push("switch.protocol", self.protocol.name().to_string());
        push("switch.noise", self.noise.name().to_string());
        push("link.p", self.p.to_string());
        push("link.fidelity", self.f_link.to_string());
        if let Some(theta) = self.attenuation {
            push("link.attenuation", theta.to_string());
        }
        if let Some(d) = self.length {
            push("link.length", d.to_string());
        }
        push("swap.q", self.q.to_string());
        push("app.fidelity_threshold", self.f_threshold.to_string());
        push(
            "arrivals.rate",
            self.rates
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push(
            "arrivals.process",
            match self.arrival_process {
                ArrivalProcess::Poisson => "poisson".to_string(),
                ArrivalProcess::Deterministic => "deterministic".to_string(),
            },
        );
        push("sim.horizon", self.horizon.to_string());
        push("sim.replicas", self.replicas.to_string());
        push("sim.seed", self.seed.to_string());
        push("tables.x_max", self.x_max.to_string());
        push("lp.column_cap", self.column_cap.to_string());
        push("lp.p_cut", self.p_cut.to_string());
        push("purify.max_rounds", self.max_rounds.to_string());
        push("slot.duration", self.slot_duration.to_string());
        out
    }

    /// Applies `key = value` lines from `text` on top of `self`, then
    /// validates. Errors carry 1-based line numbers.
    pub fn parse(mut self, text: &str) -> Result<Self, ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                msg: format!("expected 'key = value', got '{content}'"),
            })?;
            self.set(key.trim(), value.trim(), line)?;
        }
        self.validate()?;
        Ok(self)
    }

    /// Applies one `key=value` override (CLI `--set`); call
    /// [`SwitchConfig::validate`] after the last override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse {
                line: 0,
                msg: format!("override '{assignment}' is not key=value"),
            })?;
        self.set(key.trim(), value.trim(), 0)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(
            key: &str,
            value: &str,
            line: usize,
        ) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg: format!("cannot parse '{value}'"),
            })
        }
        let bad = |msg: String| ConfigError::BadValue {
            line,
            key: key.to_string(),
            msg,
        };
        match key {
            "switch.users" => self.users = num(key, value, line)?,
            "switch.alpha_max" => self.alpha_max = num(key, value, line)?,
            "switch.architecture" => {
                self.architecture = match value {
                    "PS" => Architecture::PurifySwap,
                    "SP" => Architecture::SwapPurify,
                    "NoiseLess" => Architecture::NoiseLess,
                    other => return Err(bad(format!("'{other}' is not PS, SP, or NoiseLess"))),
                }
            }
            "switch.protocol" => {
                self.protocol = match value {
                    "dejmps" => ProtocolChoice::Dejmps,
                    "bbpssw" => ProtocolChoice::Bbpssw,
                    "pumping" => ProtocolChoice::Pumping,
                    other => {
                        return Err(bad(format!("'{other}' is not dejmps, bbpssw, or pumping")))
                    }
                }
            }
            "switch.noise" => {
                self.noise = match value {
                    "werner" => NoiseClass::Werner,
                    "binary" => NoiseClass::Binary,
                    other => return Err(bad(format!("'{other}' is not werner or binary"))),
                }
            }
            "link.p" => self.p = num(key, value, line)?,
            "link.fidelity" => self.f_link = num(key, value, line)?,
            "link.attenuation" => self.attenuation = Some(num(key, value, line)?),
            "link.length" => self.length = Some(num(key, value, line)?),
            "swap.q" => self.q = num(key, value, line)?,
            "app.fidelity_threshold" => self.f_threshold = num(key, value, line)?,
            "arrivals.rate" => {
                self.rates = value
                    .split(',')
                    .map(|v| num::<f64>(key, v.trim(), line))
                    .collect::<Result<_, _>>()?;
            }
            "arrivals.process" => {
                self.arrival_process = match value {
                    "poisson" => ArrivalProcess::Poisson,
                    "deterministic" => ArrivalProcess::Deterministic,
                    other => return Err(bad(format!("'{other}' is not poisson or deterministic"))),
                }
            }
            "sim.horizon" => self.horizon = num(key, value, line)?,
            "sim.replicas" => self.replicas = num(key, value, line)?,
            "sim.seed" => self.seed = num(key, value, line)?,
            "tables.x_max" => self.x_max = num(key, value, line)?,
            "lp.column_cap" => self.column_cap = num(key, value, line)?,
            "lp.p_cut" => self.p_cut = num(key, value, line)?,
            "purify.max_rounds" => self.max_rounds = num(key, value, line)?,
            "slot.duration" => self.slot_duration = num(key, value, line)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }
}
