//! Scenario files: a TOML description of one parameter sweep.

use std::collections::HashSet;

use serde::Deserialize;
use thiserror::Error;

use crate::netsim::{CpuModel, LinkConfig, Protocol};
use crate::transport::TransportConfig;

/// Scenario presets shipped with the crate, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("throughput-vs-loss", include_str!("../../scenarios/throughput-vs-loss.toml")),
    ("latency-vs-window", include_str!("../../scenarios/latency-vs-window.toml")),
    ("decode-delay-pc", include_str!("../../scenarios/decode-delay-pc.toml")),
    ("decode-delay-embedded", include_str!("../../scenarios/decode-delay-embedded.toml")),
    ("first-vs-all-decode", include_str!("../../scenarios/first-vs-all-decode.toml")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.to_string(), reason: reason.into() }
}

/// The parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// End-to-end loss probability, split evenly over the links.
    LossRate,
    /// Coding window in bytes; the window holds `max(1, value / mss)`
    /// segments.
    CodingWindowBytes,
    /// Coding window in segments.
    GenerationSize,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::LossRate => "loss_rate",
            SweepVariable::CodingWindowBytes => "coding_window_bytes",
            SweepVariable::GenerationSize => "generation_size",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Protocol),
    Many(Vec<Protocol>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(alias = "protocol")]
    protocols: OneOrMany,
    sweep: Sweep,
    #[serde(default = "one")]
    repetitions: usize,
    seeds: Option<Vec<u64>>,
    #[serde(default = "one_u64")]
    base_seed: u64,
    workload_bytes: usize,
    #[serde(default = "default_time_limit")]
    time_limit_s: f64,
    #[serde(default)]
    cpu: CpuModel,
    links: Option<Vec<LinkConfig>>,
    #[serde(default)]
    transport: TransportConfig,
}

fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn default_time_limit() -> f64 {
    600.0
}

/// A validated sweep description.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub protocols: Vec<Protocol>,
    pub sweep: Sweep,
    pub repetitions: usize,
    /// Exactly `repetitions` distinct seeds.
    pub seeds: Vec<u64>,
    pub workload_bytes: usize,
    pub time_limit_s: f64,
    pub cpu: CpuModel,
    /// Loss rates in these are replaced when the sweep varies loss.
    pub links: Vec<LinkConfig>,
    pub transport: TransportConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::validate(raw)
    }

    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) =
            PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
        Self::from_toml(text)
    }

    /// Regenerates seeds from `base` (`base, base+1, ...`).
    pub fn reseed(&mut self, base: u64) {
        self.seeds = (0..self.repetitions as u64).map(|i| base.wrapping_add(i)).collect();
    }

    fn validate(raw: RawScenario) -> Result<Self, ScenarioError> {
        if raw.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let protocols = match raw.protocols {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        };
        if protocols.is_empty() {
            return Err(invalid("protocols", "must name at least one protocol"));
        }
        if raw.sweep.values.is_empty() {
            return Err(invalid("sweep values", "must list at least one value"));
        }
        for &v in &raw.sweep.values {
            let ok = match raw.sweep.variable {
                SweepVariable::LossRate => (0.0..1.0).contains(&v),
                SweepVariable::CodingWindowBytes | SweepVariable::GenerationSize => {
                    v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64
                }
            };
            if !ok {
                let want = match raw.sweep.variable {
                    SweepVariable::LossRate => "a loss probability in [0, 1)",
                    _ => "a positive integer",
                };
                return Err(invalid("sweep values", format!("{v} is not {want}")));
            }
        }
        if raw.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        let seeds = match raw.seeds {
            Some(seeds) => {
                if seeds.len() != raw.repetitions {
                    return Err(invalid(
                        "seeds",
                        format!("{} seeds given for {} repetitions", seeds.len(), raw.repetitions),
                    ));
                }
                if seeds.iter().collect::<HashSet<_>>().len() != seeds.len() {
                    return Err(invalid("seeds", "must be distinct"));
                }
                seeds
            }
            None => (0..raw.repetitions as u64).map(|i| raw.base_seed.wrapping_add(i)).collect(),
        };
        if raw.workload_bytes == 0 {
            return Err(invalid("workload_bytes", "must be positive"));
        }
        if !(raw.time_limit_s > 0.0 && raw.time_limit_s.is_finite()) {
            return Err(invalid("time_limit_s", "must be positive"));
        }
        if let CpuModel::Custom(rate) = raw.cpu {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(invalid("cpu", "custom rate must be positive"));
            }
        }
        let links = raw.links.unwrap_or_else(|| vec![LinkConfig::default(); 2]);
        if links.is_empty() {
            return Err(invalid("links", "must describe at least one link"));
        }
        for (i, l) in links.iter().enumerate() {
            l.validate(i).map_err(|e| invalid("links", e.to_string()))?;
        }
        raw.transport.validate().map_err(|e| invalid("transport", e))?;
        Ok(Scenario {
            name: raw.name,
            description: raw.description,
            protocols,
            sweep: raw.sweep,
            repetitions: raw.repetitions,
            seeds,
            workload_bytes: raw.workload_bytes,
            time_limit_s: raw.time_limit_s,
            cpu: raw.cpu,
            links,
            transport: raw.transport,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
protocols = ["tcp-forward", "arq-baseline"]
workload_bytes = 1000
[sweep]
variable = "loss_rate"
values = [0.0, 0.5]
"#;

    #[test]
    fn minimal_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.repetitions, 1);
        assert_eq!(s.seeds, vec![1]);
        assert_eq!(s.links.len(), 2);
        assert_eq!(s.cpu, CpuModel::Pc);
        assert_eq!(s.protocols, vec![Protocol::TcpForward, Protocol::ArqBaseline]);
    }

    #[test]
    fn single_protocol_key() {
        let text = MINIMAL.replace(r#"protocols = ["tcp-forward", "arq-baseline"]"#, r#"protocol = "tcp-nc-baseline""#);
        let s = Scenario::from_toml(&text).unwrap();
        assert_eq!(s.protocols, vec![Protocol::TcpNcBaseline]);
    }

    #[test]
    fn empty_sweep_names_field() {
        let text = MINIMAL.replace("values = [0.0, 0.5]", "values = []");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("sweep values"), "{err}");
    }

    #[test]
    fn seeds_must_match_and_differ() {
        let text = MINIMAL.replace("workload_bytes", "repetitions = 2\nseeds = [4, 4]\nworkload_bytes");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("`seeds`"), "{err}");
        let text = MINIMAL.replace("workload_bytes", "repetitions = 3\nseeds = [4, 5]\nworkload_bytes");
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let text = MINIMAL.replace("values = [0.0, 0.5]", "values = [1.0]");
        assert!(Scenario::from_toml(&text).unwrap_err().to_string().contains("sweep values"));
        let text = MINIMAL.replace("\"loss_rate\"", "\"generation_size\"").replace("[0.0, 0.5]", "[2.5]");
        assert!(Scenario::from_toml(&text).is_err());
        let text = MINIMAL.replace("workload_bytes", "repetitions = 0\nworkload_bytes");
        assert!(Scenario::from_toml(&text).unwrap_err().to_string().contains("repetitions"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("bogus = 1\n{MINIMAL}");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn transport_overrides_apply() {
        let text = format!("{MINIMAL}\n[transport]\nmss = 536\ncoding_window = 4\n");
        let s = Scenario::from_toml(&text).unwrap();
        assert_eq!(s.transport.mss, 536);
        assert_eq!(s.transport.coding_window, 4);
        assert_eq!(s.transport.vegas_beta, TransportConfig::default().vegas_beta);
    }

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            Scenario::preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(Scenario::preset("nope").is_err());
    }
}
