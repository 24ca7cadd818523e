//! Scenario files: one JSON document holding every section a command needs.
//!
//! Unknown keys are rejected, and both parse errors and range errors are
//! reported against the line of the offending key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beaconsim::{SimConfig, TopologySpec};
use crate::conditions::BeaconConfig;
use crate::error::{Error, Result};
use crate::layout::{ApPlacement, BuildingLayout, MirrorPolicy, PlacementKind};
use crate::mitigation::MitigationSpec;
use crate::propagation::RadioConfig;

pub const SCHEMA_VERSION: &str = "1";

fn default_inset() -> f64 {
    ApPlacement::new(PlacementKind::Center).corner_inset_m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSection {
    pub kind: PlacementKind,
    #[serde(default = "default_inset")]
    pub corner_inset_m: f64,
    #[serde(default)]
    pub mirror_policy: MirrorPolicy,
}

impl PlacementSection {
    pub fn placement(&self) -> ApPlacement {
        ApPlacement {
            kind: self.kind,
            corner_inset_m: self.corner_inset_m,
        }
    }
}

fn default_duration() -> f64 {
    600.0
}
fn default_streak() -> u32 {
    10
}
fn default_warmup() -> u32 {
    1
}
fn default_runs() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_streak")]
    pub disassociation_streak: u32,
    #[serde(default)]
    pub skips_count_as_missed: bool,
    #[serde(default = "default_warmup")]
    pub warmup_intervals: u32,
    #[serde(default)]
    pub topology: TopologySpec,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            seed: 0,
            runs: default_runs(),
            duration_s: default_duration(),
            disassociation_streak: default_streak(),
            skips_count_as_missed: false,
            warmup_intervals: default_warmup(),
            topology: TopologySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: String,
    #[serde(default)]
    pub name: String,
    pub layout: BuildingLayout,
    pub radio: RadioConfig,
    #[serde(default)]
    pub beacons: BeaconConfig,
    pub placement: PlacementSection,
    #[serde(default)]
    pub mitigation: Vec<MitigationSpec>,
    #[serde(default)]
    pub simulation: SimulationSection,
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses and validates `text`; `path` only labels error messages.
    pub fn parse(text: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let scenario: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        scenario.validate().map_err(|e| match e {
            Error::Invalid { field, reason } => Error::Config {
                path: path.to_path_buf(),
                line: key_line(text, &field),
                message: format!("invalid {field}: {reason}"),
            },
            other => Error::Config {
                path: path.to_path_buf(),
                line: 1,
                message: other.to_string(),
            },
        })?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("unsupported version {:?}, expected {SCHEMA_VERSION:?}", self.schema_version),
            ));
        }
        if self.simulation.runs < 1 {
            return Err(Error::invalid("simulation.runs", "must be at least 1"));
        }
        self.sim_config().validate()
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            layout: self.layout,
            radio: self.radio,
            beacons: self.beacons,
            placement: self.placement.placement(),
            mirror: self.placement.mirror_policy,
            topology: self.simulation.topology.clone(),
            mitigation: self.mitigation.clone(),
            seed: self.simulation.seed,
            duration_s: self.simulation.duration_s,
            disassociation_streak: self.simulation.disassociation_streak,
            skips_count_as_missed: self.simulation.skips_count_as_missed,
            warmup_intervals: self.simulation.warmup_intervals,
        }
    }

    /// Radio config seen by analysis, with any DSC offset applied.
    pub fn effective_radio(&self) -> RadioConfig {
        self.sim_config().effective_radio()
    }
}

/// Line of the key named by a dotted field path, found by locating each
/// segment in turn after the previous one. Falls back to line 1.
fn key_line(text: &str, field: &str) -> usize {
    let mut pos = 0;
    let mut found = None;
    for seg in field.split('.') {
        let needle = format!("\"{seg}\"");
        if let Some(off) = text[pos..].find(&needle) {
            pos += off;
            found = Some(pos);
        }
    }
    found.map_or(1, |p| text[..p].matches('\n').count() + 1)
}
