//! JSON run configuration: model ingestion, partition / performance /
//! synthesis / simulation parameters, defaults, and strict schema checking
//! (unknown keys are rejected, errors name the offending field path).

use crate::bench_pendulum::{self, BenchError, PendulumParams};
use crate::dissipativity::{DissipativityError, PerformanceSpec};
use crate::fou_partition::{StateBox, DEFAULT_MARGIN};
use crate::fuzzy_model::{
    ControllerRuleBase, IT2Set, LargeScaleSystem, MembershipFn, ModelError, PlantRule, Subsystem,
    TypeReduction,
};
use crate::simulate::DisturbanceSpec;
use crate::synthesis::SynthesisOptions;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid config value: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Performance(#[from] DissipativityError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

fn dmatrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError::Invalid(format!("{what}: matrix has no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError::Invalid(format!(
            "{what}: rows must be nonempty and equally long"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// One IT2 antecedent: the premise variable index and the bounding
/// membership functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntecedentConfig {
    pub state_index: usize,
    pub lower: MembershipFn,
    pub upper: MembershipFn,
}

impl AntecedentConfig {
    fn to_set(&self) -> Result<(usize, IT2Set), ConfigError> {
        Ok((
            self.state_index,
            IT2Set::new(self.lower.clone(), self.upper.clone())?,
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d1: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    /// Interconnection matrices keyed by the driving subsystem index.
    #[serde(default)]
    pub interconnections: BTreeMap<usize, Vec<Vec<f64>>>,
    pub antecedents: Vec<AntecedentConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub rules: Vec<RuleConfig>,
    /// Weight on the lower firing bound in type reduction.
    #[serde(default = "default_half")]
    pub alpha_lower_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub rules: Vec<Vec<AntecedentConfig>>,
    #[serde(default = "default_half")]
    pub beta_lower_weight: f64,
}

fn default_half() -> f64 {
    0.5
}

/// Explicit model: subsystems plus decentralized controller rule bases.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub subsystems: Vec<SubsystemConfig>,
    pub controllers: Vec<ControllerConfig>,
}

impl SystemConfig {
    pub fn to_system(&self) -> Result<LargeScaleSystem, ConfigError> {
        let mut subsystems = Vec::with_capacity(self.subsystems.len());
        for (i, sc) in self.subsystems.iter().enumerate() {
            if sc.rules.is_empty() {
                return Err(ConfigError::Invalid(format!(
                    "subsystem {i}: needs at least one rule"
                )));
            }
            let mut rules = Vec::with_capacity(sc.rules.len());
            for (l, rc) in sc.rules.iter().enumerate() {
                let what = |m: &str| format!("subsystem {i} rule {l} matrix {m}");
                let mut inter = BTreeMap::new();
                for (&k, m) in &rc.interconnections {
                    inter.insert(k, dmatrix(m, &what("interconnection"))?);
                }
                let mut antecedents = Vec::with_capacity(rc.antecedents.len());
                for ac in &rc.antecedents {
                    antecedents.push(ac.to_set()?);
                }
                rules.push(PlantRule {
                    a: dmatrix(&rc.a, &what("a"))?,
                    b: dmatrix(&rc.b, &what("b"))?,
                    d1: dmatrix(&rc.d1, &what("d1"))?,
                    c: dmatrix(&rc.c, &what("c"))?,
                    d2: dmatrix(&rc.d2, &what("d2"))?,
                    interconnections: inter,
                    antecedents,
                });
            }
            let first = &rules[0];
            subsystems.push(Subsystem {
                index: i,
                state_dim: first.a.nrows(),
                input_dim: first.b.ncols(),
                disturbance_dim: first.d1.ncols(),
                output_dim: first.c.nrows(),
                rules,
                alpha: TypeReduction::Constant {
                    lower_weight: sc.alpha_lower_weight,
                },
            });
        }
        let mut controllers = Vec::with_capacity(self.controllers.len());
        for cc in &self.controllers {
            let mut rules = Vec::with_capacity(cc.rules.len());
            for rule in &cc.rules {
                let mut sets = Vec::with_capacity(rule.len());
                for ac in rule {
                    sets.push(ac.to_set()?);
                }
                rules.push(sets);
            }
            controllers.push(ControllerRuleBase {
                rules,
                beta: TypeReduction::Constant {
                    lower_weight: cc.beta_lower_weight,
                },
            });
        }
        Ok(LargeScaleSystem::new(subsystems, controllers)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinModel {
    Pendulum,
}

/// Model source: exactly one of `builtin` or `system`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinModel>,
    /// Physical parameters for the builtin pendulum benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pendulum_params: Option<PendulumParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<LargeScaleSystem, ConfigError> {
        match (&self.builtin, &self.system) {
            (Some(BuiltinModel::Pendulum), None) => {
                let params = self.pendulum_params.clone().unwrap_or_default();
                Ok(bench_pendulum::build_system(&params)?)
            }
            (None, Some(sys)) => sys.to_system(),
            (None, None) => Err(ConfigError::Invalid(
                "model: set either `builtin` or `system`".into(),
            )),
            (Some(_), Some(_)) => Err(ConfigError::Invalid(
                "model: `builtin` and `system` are mutually exclusive".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells_per_dim: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    /// Explicit per-subsystem operating boxes; when omitted the builtin
    /// model's default boxes are used.
    pub boxes: Option<Vec<BoxConfig>>,
    /// Cells per dimension for the builtin default boxes.
    pub cells_per_dim: usize,
    /// Velocity half-range for the builtin pendulum's default boxes.
    pub velocity_bound: f64,
    /// Number of sub-FOU splits (tau).
    pub tau: usize,
    pub samples_per_cell: usize,
    pub margin: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            boxes: None,
            cells_per_dim: 2,
            velocity_bound: 10.0,
            tau: 0,
            samples_per_cell: 8,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl PartitionConfig {
    /// Resolve the operating boxes for `model`.
    pub fn state_boxes(&self, model: &ModelConfig) -> Result<Vec<StateBox>, ConfigError> {
        if let Some(boxes) = &self.boxes {
            return Ok(boxes
                .iter()
                .map(|b| StateBox {
                    lower: b.lower.clone(),
                    upper: b.upper.clone(),
                    cells_per_dim: b.cells_per_dim.clone(),
                })
                .collect());
        }
        match model.builtin {
            Some(BuiltinModel::Pendulum) => {
                let params = model.pendulum_params.clone().unwrap_or_default();
                Ok(bench_pendulum::default_boxes(
                    &params,
                    self.cells_per_dim,
                    self.velocity_bound,
                ))
            }
            None => Err(ConfigError::Invalid(
                "partition.boxes is required for explicit (non-builtin) models".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    HInfinity,
    EnergyToPeak,
    Passivity,
    VeryStrictPassivity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerformanceConfig {
    pub preset: PresetName,
    /// Attenuation level; when omitted for the H-infinity preset the level
    /// is minimized by bisection.
    pub gamma: Option<f64>,
    /// Strictness parameter for very strict passivity.
    pub epsilon: f64,
}

impl Default for PerformanceConfig {
    fn default() -> Self {
        Self {
            preset: PresetName::HInfinity,
            gamma: None,
            epsilon: 0.1,
        }
    }
}

impl PerformanceConfig {
    /// Build the spec at an explicit level (required unless H-infinity
    /// minimization is intended).
    pub fn to_spec(&self, n_z: usize, m_w: usize) -> Result<PerformanceSpec, ConfigError> {
        let gamma = self.gamma.unwrap_or(1.0);
        Ok(match self.preset {
            PresetName::HInfinity => PerformanceSpec::h_infinity(gamma, n_z, m_w)?,
            PresetName::EnergyToPeak => PerformanceSpec::energy_to_peak(gamma, n_z, m_w)?,
            PresetName::Passivity => PerformanceSpec::passivity(gamma, n_z, m_w)?,
            PresetName::VeryStrictPassivity => {
                PerformanceSpec::very_strict_passivity(self.epsilon, gamma, n_z, m_w)?
            }
        })
    }

    /// True when the level should be found by bisection.
    pub fn minimize(&self) -> bool {
        self.preset == PresetName::HInfinity && self.gamma.is_none()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub tau0: f64,
    pub tau: Option<Vec<f64>>,
    pub epsilon: f64,
    pub gamma_bracket: (f64, f64),
    pub gamma_rel_tol: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        Self {
            tau0: o.tau0,
            tau: o.tau,
            epsilon: o.epsilon,
            gamma_bracket: o.gamma_bracket,
            gamma_rel_tol: o.gamma_rel_tol,
        }
    }
}

impl SynthesisConfig {
    pub fn to_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            tau0: self.tau0,
            tau: self.tau.clone(),
            epsilon: self.epsilon,
            gamma_bracket: self.gamma_bracket,
            gamma_rel_tol: self.gamma_rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub dt: f64,
    pub blow_up: f64,
    /// RK4 sub-steps per sample; omitted = choose from closed-loop
    /// stiffness automatically.
    pub substeps: Option<usize>,
    /// Per-subsystem initial states; when omitted the builtin model's
    /// reference initial states are used.
    pub initial_states: Option<Vec<Vec<f64>>>,
    /// Per-subsystem disturbance signals; when omitted the builtin model's
    /// reference disturbances (zero for explicit models).
    pub disturbances: Option<Vec<DisturbanceSpec>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_final: 20.0,
            dt: 1e-3,
            blow_up: 1e8,
            substeps: None,
            initial_states: None,
            disturbances: None,
        }
    }
}

impl SimulationConfig {
    pub fn initial_states(&self, model: &ModelConfig) -> Result<Vec<DVector<f64>>, ConfigError> {
        if let Some(xs) = &self.initial_states {
            return Ok(xs.iter().map(|x| DVector::from_vec(x.clone())).collect());
        }
        match model.builtin {
            Some(BuiltinModel::Pendulum) => Ok(bench_pendulum::default_initial_states()),
            None => Err(ConfigError::Invalid(
                "simulation.initial_states is required for explicit models".into(),
            )),
        }
    }

    pub fn disturbances(&self, model: &ModelConfig, n_sub: usize) -> Vec<DisturbanceSpec> {
        if let Some(d) = &self.disturbances {
            return d.clone();
        }
        match model.builtin {
            Some(BuiltinModel::Pendulum) => bench_pendulum::default_disturbances(),
            None => vec![DisturbanceSpec::Zero; n_sub],
        }
    }
}

/// Top-level run configuration; every section has defaults, `model` is the
/// only required key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub performance: PerformanceConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.simulation.dt <= 0.0 || self.simulation.t_final < self.simulation.dt {
            return Err(ConfigError::Invalid(
                "simulation: need dt > 0 and t_final >= dt".into(),
            ));
        }
        if self.partition.samples_per_cell < 8 {
            return Err(ConfigError::Invalid(
                "partition.samples_per_cell must be at least 8".into(),
            ));
        }
        if let Some(g) = self.performance.gamma {
            if !(g > 0.0) {
                return Err(ConfigError::Invalid(
                    "performance.gamma must be positive".into(),
                ));
            }
        }
        let (lo, hi) = self.synthesis.gamma_bracket;
        if !(lo > 0.0 && lo < hi) {
            return Err(ConfigError::Invalid(
                "synthesis.gamma_bracket must satisfy 0 < low < high".into(),
            ));
        }
        Ok(())
    }
}
