//! Declarative experiment configuration.
//!
//! Configs are JSON with a fixed schema; unknown keys are rejected at
//! parse time and every build step revalidates its inputs. See the README
//! for the full field reference and per-subcommand examples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeSpec, Mark, NodeId};
use crate::optional_process::{make_obstacle, Obstacle};
use crate::picard::Driver;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    pub obstacle: ObstacleConfig,
    #[serde(default)]
    pub driver: DriverConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub num_steps: usize,
    pub horizon: f64,
    #[serde(default = "default_branching")]
    pub branching: String,
    #[serde(default)]
    pub marks: Vec<MarkConfig>,
}

fn default_branching() -> String {
    "binary".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkConfig {
    pub label: String,
    pub intensity: f64,
    #[serde(default)]
    pub value: f64,
}

impl LatticeConfig {
    pub fn build(&self) -> Result<Lattice> {
        if self.branching != "binary" {
            return Err(Error::ConfigInvalid(format!(
                "unsupported branching '{}' (only 'binary' exists)",
                self.branching
            )));
        }
        let marks = self
            .marks
            .iter()
            .map(|m| Mark {
                label: m.label.clone(),
                value: m.value,
                intensity: m.intensity,
            })
            .collect();
        Lattice::build(&LatticeSpec {
            num_steps: self.num_steps,
            horizon: self.horizon,
            marks,
        })
    }
}

/// Obstacle builders selectable by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleConfig {
    /// Flat barrier at `level`.
    Constant { level: f64 },
    /// Piecewise-constant barrier with right jumps at chosen grid indices:
    /// at `jump_times[i]` the right limit moves by `jump_sizes[i]`.
    Step {
        initial: f64,
        jump_times: Vec<usize>,
        jump_sizes: Vec<f64>,
    },
    /// Payoff on the running maximum of the Brownian path,
    /// `scale * max(0, running_max - strike)`.
    PathMax {
        scale: f64,
        #[serde(default)]
        strike: f64,
    },
    /// Indicator payoff that drops from `high` to `low` right after the
    /// deadline, creating a genuine right discontinuity at in-the-money
    /// nodes: pays `high` while `W >= threshold` and `t <= deadline`.
    Digital {
        deadline_index: usize,
        threshold: f64,
        high: f64,
        low: f64,
    },
}

impl ObstacleConfig {
    pub fn build(&self, lat: &Lattice) -> Result<Obstacle> {
        match self {
            ObstacleConfig::Constant { level } => {
                Ok(make_obstacle(lat, |_| (*level, *level), |_| *level))
            }
            ObstacleConfig::Step {
                initial,
                jump_times,
                jump_sizes,
            } => {
                if jump_times.len() != jump_sizes.len() {
                    return Err(Error::ConfigInvalid(
                        "jump_times and jump_sizes must have equal length".into(),
                    ));
                }
                if let Some(&bad) = jump_times.iter().find(|&&k| k >= lat.num_steps()) {
                    return Err(Error::ConfigInvalid(format!(
                        "jump time index {bad} beyond the last internal level"
                    )));
                }
                // level held on [t_k, t_{k+1}) as a function of the time index
                let level_at = |k: usize, after: bool| -> f64 {
                    let mut level = *initial;
                    for (&jk, &sz) in jump_times.iter().zip(jump_sizes) {
                        if jk < k || (jk == k && after) {
                            level += sz;
                        }
                    }
                    level
                };
                Ok(make_obstacle(
                    lat,
                    |id| {
                        let k = lat.time_index(id);
                        (level_at(k, false), level_at(k, true))
                    },
                    |id| level_at(lat.time_index(id), false),
                ))
            }
            ObstacleConfig::PathMax { scale, strike } => {
                let payoff = |id: NodeId| {
                    let mut w = 0.0f64;
                    let mut running = 0.0f64;
                    let path = lat.path_to(id);
                    for pair in path.windows(2) {
                        let parent = pair[0];
                        let child = pair[1];
                        let branch = lat
                            .node(parent)
                            .branches
                            .iter()
                            .find(|b| b.child == child)
                            .expect("path edge");
                        w += branch.dw;
                        running = running.max(w);
                    }
                    scale * (running - strike).max(0.0)
                };
                Ok(make_obstacle(lat, |id| (payoff(id), payoff(id)), payoff))
            }
            ObstacleConfig::Digital {
                deadline_index,
                threshold,
                high,
                low,
            } => {
                let w_at = |id: NodeId| {
                    let path = lat.path_to(id);
                    path.windows(2)
                        .map(|pair| {
                            lat.node(pair[0])
                                .branches
                                .iter()
                                .find(|b| b.child == pair[1])
                                .expect("path edge")
                                .dw
                        })
                        .sum::<f64>()
                };
                let deadline = *deadline_index;
                Ok(make_obstacle(
                    lat,
                    |id| {
                        let k = lat.time_index(id);
                        let in_money = w_at(id) >= *threshold;
                        let v = if in_money && k <= deadline { *high } else { *low };
                        let vplus = if in_money && k < deadline { *high } else { *low };
                        (v, vplus)
                    },
                    |id| {
                        let in_money = w_at(id) >= *threshold;
                        if in_money && lat.time_index(id) <= deadline {
                            *high
                        } else {
                            *low
                        }
                    },
                ))
            }
        }
    }
}

/// Driver registry keyed by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    #[serde(default = "default_driver_name")]
    pub name: String,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, f64>,
}

fn default_driver_name() -> String {
    "zero".into()
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            name: default_driver_name(),
            params: Default::default(),
        }
    }
}

impl DriverConfig {
    pub fn build(&self, lat: &Lattice) -> Result<Driver> {
        let p = |key: &str| self.params.get(key).copied().unwrap_or(0.0);
        match self.name.as_str() {
            "zero" => Ok(Driver::zero()),
            "linear" => Ok(Driver::linear(
                p("rho"),
                p("a"),
                p("b"),
                &lat.marks().intensities(),
            )),
            "bounded_nonlinear" => Ok(Driver::bounded_nonlinear(p("kappa"))),
            other => Err(Error::ConfigInvalid(format!(
                "unknown driver '{other}' (expected zero | linear | bounded_nonlinear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Solve,
    Oracle,
    Penalize,
    Stop,
    Risk,
    Glcheck,
    Sweep,
}

impl std::fmt::Display for Subcommand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Subcommand::Solve => "solve",
            Subcommand::Oracle => "oracle",
            Subcommand::Penalize => "penalize",
            Subcommand::Stop => "stop",
            Subcommand::Risk => "risk",
            Subcommand::Glcheck => "glcheck",
            Subcommand::Sweep => "sweep",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Penalty levels for `penalize`.
    #[serde(default = "default_n_list")]
    pub n_list: Vec<f64>,
    /// Evaluation nodes for `stop`; empty means the root.
    #[serde(default)]
    pub nodes: Vec<usize>,
    /// Epsilons for `stop`; empty means `[epsilon]`.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Number of random instances per `sweep` suite.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Solver tolerance on the combined squared norm distance.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Second obstacle for the paired `risk` mode.
    #[serde(default)]
    pub paired_obstacle: Option<ObstacleConfig>,
    /// Betas checked by `glcheck`.
    #[serde(default = "default_glcheck_betas")]
    pub glcheck_betas: Vec<f64>,
}

fn default_beta() -> f64 {
    4.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_n_list() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}
fn default_instances() -> usize {
    50
}
fn default_tol() -> f64 {
    crate::picard::DEFAULT_TOL
}
fn default_max_iter() -> usize {
    crate::picard::DEFAULT_MAX_ITER
}
fn default_glcheck_betas() -> Vec<f64> {
    vec![0.0, 1.0, 5.0]
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Artifact directory; overridable with `--out`.
    #[serde(default)]
    pub dir: Option<std::path::PathBuf>,
}
