//! JSON run files: which case to load, how to prepare it, and how to run it.
//!
//! ```json
//! {
//!   "case": "case39",
//!   "synthesis": { "seed": 1, "damping": { "4": -3.0, "5": -3.0 } },
//!   "method": "bem_pc",
//!   "outages": [21],
//!   "output_dir": "out/case39_21"
//! }
//! ```
//!
//! `case` is a bundled case name or a path (relative to the run file) to a
//! native JSON or MATPOWER-style case. `outages` is either a list of bus ids
//! or `{ "random": { "count": 2, "seed": 7 } }`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::case_io::{
    assign_flow_based_ratings, builtin_case, parse_case, solve_power_flow, synthesize_dynamics,
    BuiltinCase, CaseDefinition, PowerFlowOptions, SynthesisOptions,
};
use crate::engine::{PcConfig, RunConfig, RunMethod, StopConfig};
use crate::error::{Error, Result};
use crate::integrators::IntegratorConfig;
use crate::metrics::{sample_outages, McOptions};
use crate::protection::RelayConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synthesis {
    pub seed: u64,
    /// Machine id -> damping on the machine rating (may be negative).
    #[serde(default)]
    pub damping: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRatings {
    /// Limit as a multiple of the base-case current.
    pub margin: f64,
    /// Smallest limit, pu.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomOutages {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outages {
    Buses(Vec<u32>),
    Random { random: RandomOutages },
}

impl Default for Outages {
    fn default() -> Self {
        Outages::Buses(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub case: String,
    /// Draw machine data when present; required for cases without dynamics.
    #[serde(default)]
    pub synthesis: Option<Synthesis>,
    /// Replace branch limits by multiples of base-case currents.
    #[serde(default)]
    pub flow_ratings: Option<FlowRatings>,
    #[serde(default = "default_method")]
    pub method: RunMethod,
    #[serde(default)]
    pub outages: Outages,
    #[serde(default = "default_outage_time")]
    pub outage_time: f64,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    /// Replaces the case's relay settings.
    #[serde(default)]
    pub relays: Option<RelayConfig>,
    #[serde(default)]
    pub pc: PcConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub wall_budget: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Settings for `mc`; ignored by the other commands.
    #[serde(default)]
    pub monte_carlo: Option<McOptions>,
    /// Directory the run file was read from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_method() -> RunMethod {
    RunMethod::BemPc
}

fn default_outage_time() -> f64 {
    3.0
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidArgument(format!("cannot read run file {}: {e}", path.display()))
        })?;
        let mut rf = Self::parse(&text)?;
        rf.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(rf)
    }

    /// Loads the case and applies synthesis, relay and rating options.
    pub fn load_case(&self) -> Result<CaseDefinition> {
        let mut case = match BuiltinCase::from_name(&self.case) {
            Some(which) => builtin_case(which),
            None => {
                let path = self.base_dir.join(&self.case);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::InvalidArgument(format!("cannot read case {}: {e}", path.display()))
                })?;
                parse_case(&text)?
            }
        };
        if let Some(s) = &self.synthesis {
            let opts = SynthesisOptions {
                seed: s.seed,
                damping_overrides: s.damping.clone(),
            };
            case = synthesize_dynamics(&case, &opts);
        }
        if let Some(r) = &self.relays {
            r.validate()?;
            case.relays = r.clone();
        }
        if let Some(fr) = &self.flow_ratings {
            let pf = solve_power_flow(&case, &PowerFlowOptions::default())?;
            case = assign_flow_based_ratings(&case, &pf, fr.margin, fr.floor);
        }
        Ok(case)
    }

    /// Bus ids of the initial outage, drawing them when random.
    pub fn outage_buses(&self, case: &CaseDefinition) -> Result<Vec<u32>> {
        match &self.outages {
            Outages::Buses(b) => Ok(b.clone()),
            Outages::Random { random } => {
                let ids: Vec<u32> = case.buses.iter().map(|b| b.id).collect();
                Ok(sample_outages(&ids, random.count, random.seed, 1)?.remove(0))
            }
        }
    }

    pub fn run_config(&self, case: &CaseDefinition) -> Result<RunConfig> {
        Ok(RunConfig {
            method: self.method,
            integrator: self.integrator.clone(),
            initial_outages: self.outage_buses(case)?,
            outage_time: self.outage_time,
            stop: self.stop.clone(),
            pc: self.pc.clone(),
            wall_budget: self.wall_budget,
        })
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output_dir.as_ref().map(|d| self.base_dir.join(d))
    }
}
