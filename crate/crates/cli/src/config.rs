//! Scenario configuration: JSON, unknown keys rejected, errors carry the
//! offending path.

use nrbundle::hilbert::{build_space, SpaceDescriptor};
use nrbundle::model::{mean_field_steady, DriveSide, LabParams, ModelParams, ResonanceKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Spectrum,
    ClosedDynamics,
    OpenDynamics,
    Trajectory,
    CorrelationSweep,
    WitnessSweep,
    ResonanceTable,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Spectrum => "spectrum",
            ScenarioKind::ClosedDynamics => "closed_dynamics",
            ScenarioKind::OpenDynamics => "open_dynamics",
            ScenarioKind::Trajectory => "trajectory",
            ScenarioKind::CorrelationSweep => "correlation_sweep",
            ScenarioKind::WitnessSweep => "witness_sweep",
            ScenarioKind::ResonanceTable => "resonance_table",
        }
    }
}

/// Either explicit values or an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
}

impl Grid {
    pub fn resolve(&self, path: &str) -> Result<Vec<f64>, ConfigError> {
        let v = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    return Err(invalid(&format!("{path}.points"), "must be >= 1"));
                }
                if n == 1 {
                    vec![a]
                } else {
                    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
                }
            }
            _ => return Err(invalid(path, "give either `values` or all of `start`, `stop`, `points`")),
        };
        if v.is_empty() {
            return Err(invalid(path, "grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid(path, "grid values must be finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    pub photon: usize,
    pub phonon: usize,
    pub magnon: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self { photon: 4, phonon: 3, magnon: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceMethod {
    /// Anticrossing of the truncated Hamiltonian.
    Located,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceTarget {
    pub kind: ResonanceKind,
    pub side: DriveSide,
    pub method: Option<ResonanceMethod>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// |0 0 0⟩ ⊗ |+⟩.
    DressedPlus,
    /// |0 0 0⟩ ⊗ |g⟩.
    Ground,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<ScenarioKind>,
    pub model: Option<ModelParams>,
    pub lab: Option<LabParams>,
    pub linearize: Option<bool>,
    pub cutoffs: Option<Cutoffs>,
    pub sides: Option<Vec<DriveSide>>,
    pub resonance: Option<ResonanceTarget>,
    pub detuning: Option<Grid>,
    pub kappa: Option<Grid>,
    pub time: Option<Grid>,
    pub tau: Option<Grid>,
    pub initial_state: Option<InitialState>,
    /// Dressed labels such as "101-".
    pub populations: Option<Vec<String>>,
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub max_step: Option<f64>,
}

/// Validated configuration with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Option<ScenarioKind>,
    pub params: ModelParams,
    pub space: SpaceDescriptor,
    pub cutoffs: Cutoffs,
    pub sides: Vec<DriveSide>,
    pub resonance: Option<ResonanceTarget>,
    pub detuning: Option<Vec<f64>>,
    pub kappa: Option<Vec<f64>>,
    pub time: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub initial_state: InitialState,
    pub populations: Vec<PopulationLabel>,
    pub trajectories: usize,
    pub seed: Option<u64>,
    pub max_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PopulationLabel {
    pub na: usize,
    pub nb: usize,
    pub nm: usize,
    pub plus: bool,
}

impl PopulationLabel {
    pub fn parse(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        if b.len() != 4 || !b[..3].iter().all(u8::is_ascii_digit) {
            return None;
        }
        let plus = match b[3] {
            b'+' => true,
            b'-' => false,
            _ => return None,
        };
        Some(Self { na: (b[0] - b'0') as usize, nb: (b[1] - b'0') as usize, nm: (b[2] - b'0') as usize, plus })
    }

    pub fn column(&self) -> String {
        format!("P_{}{}{}{}", self.na, self.nb, self.nm, if self.plus { "plus" } else { "minus" })
    }
}

/// Canonical JSON of the raw config (sorted keys, no whitespace).
pub fn canonical_json(text: &str) -> Result<String, ConfigError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid("<root>", e.to_string()))?;
    Ok(v.to_string())
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
    })?;
    validate(raw)
}

fn validate(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    let params = match (raw.model, raw.lab) {
        (Some(m), None) => {
            if raw.linearize.is_some() {
                return Err(invalid("linearize", "only meaningful together with `lab`"));
            }
            m.validate().map_err(|e| invalid(&format!("model.{}", field_of(&e.to_string())), e.to_string()))?;
            m
        }
        (None, Some(lab)) => {
            if raw.linearize == Some(false) {
                return Err(invalid("linearize", "lab parameters are only simulated after linearization"));
            }
            lab.validate().map_err(|e| invalid(&format!("lab.{}", field_of(&e.to_string())), e.to_string()))?;
            mean_field_steady(&lab).map_err(|e| invalid("lab", e.to_string()))?.effective
        }
        _ => return Err(invalid("<root>", "exactly one of `model` or `lab` is required")),
    };
    let cutoffs = raw.cutoffs.unwrap_or_default();
    let space = build_space(cutoffs.photon, cutoffs.phonon, cutoffs.magnon).map_err(|e| invalid("cutoffs", e.to_string()))?;
    let sides = raw.sides.unwrap_or_else(|| vec![params.side()]);
    if sides.is_empty() {
        return Err(invalid("sides", "list is empty"));
    }
    let grid = |g: &Option<Grid>, name: &str| g.as_ref().map(|g| g.resolve(name)).transpose();
    let kappa = grid(&raw.kappa, "kappa")?;
    if let Some(k) = &kappa {
        if k.iter().any(|&x| x < 0.0) {
            return Err(invalid("kappa", "decay rates must be >= 0"));
        }
    }
    let time = grid(&raw.time, "time")?;
    for (name, g) in [("time", &time), ("tau", &grid(&raw.tau, "tau")?)] {
        if let Some(t) = g {
            if t.iter().any(|&x| x < 0.0) || t.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid(name, "must be nonnegative and nondecreasing"));
            }
        }
    }
    let populations = raw
        .populations
        .unwrap_or_else(|| vec!["000+".into(), "101-".into(), "110-".into()])
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let l = PopulationLabel::parse(s).ok_or_else(|| invalid(&format!("populations[{i}]"), format!("expected a label like \"101-\", got {s:?}")))?;
            if l.na > cutoffs.photon || l.nb > cutoffs.phonon || l.nm > cutoffs.magnon {
                return Err(invalid(&format!("populations[{i}]"), "label exceeds the cutoffs"));
            }
            Ok(l)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let trajectories = raw.trajectories.unwrap_or(1);
    if trajectories == 0 {
        return Err(invalid("trajectories", "must be >= 1"));
    }
    let max_step = raw.max_step.unwrap_or(1.0);
    if !(max_step > 0.0) || !max_step.is_finite() {
        return Err(invalid("max_step", "must be positive"));
    }
    Ok(ScenarioConfig {
        scenario: raw.scenario,
        params,
        space,
        cutoffs,
        sides,
        resonance: raw.resonance,
        detuning: grid(&raw.detuning, "detuning")?,
        kappa,
        time,
        tau: grid(&raw.tau, "tau")?,
        initial_state: raw.initial_state.unwrap_or(InitialState::DressedPlus),
        populations,
        trajectories,
        seed: raw.seed,
        max_step,
    })
}

/// Leading identifier of a validation message ("kappa_a must be ..." → "kappa_a").
fn field_of(message: &str) -> &str {
    let message = message.rsplit(": ").next().unwrap_or(message);
    message.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).next().unwrap_or("")
}

impl ScenarioConfig {
    pub fn require<'a>(&self, grid: &'a Option<Vec<f64>>, name: &str) -> Result<&'a [f64], ConfigError> {
        grid.as_deref().ok_or_else(|| invalid(name, format!("required by the {} scenario", self.scenario.map(|s| s.as_str()).unwrap_or("selected"))))
    }
}
