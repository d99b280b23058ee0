use std::str::FromStr;

use super::{pad_baseline, pad_strategy, color_windows, BaselineConfig, BaselineKind, DdError, PadMode, StrategySet};
use crate::circuit::ScheduledCircuit;
use crate::device::{detect_all_collisions, CollisionConfig, DeviceModel};
use crate::sim::PulseEvent;

/// How idle windows of a target circuit are filled.
#[derive(Debug, Clone, PartialEq)]
pub enum DdMode {
    Baseline(BaselineKind),
    Learned { set: StrategySet, mode: PadMode },
}

impl DdMode {
    pub fn none() -> Self {
        Self::Baseline(BaselineKind::NoDD)
    }

    pub fn learned(set: StrategySet) -> Self {
        Self::Learned { set, mode: PadMode::Matched }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Baseline(k) => k.to_string(),
            Self::Learned { mode: PadMode::Matched, .. } => "gadd".into(),
            Self::Learned { mode: PadMode::Unaware(_), .. } => "gadd-unaware".into(),
            Self::Learned { mode: PadMode::Scrambled(_), .. } => "gadd-scrambled".into(),
        }
    }
}

impl FromStr for DdMode {
    type Err = String;

    /// `none`, `xpxm`, `mdd`, `ffdd` or `gadd:<strategies.json>`.
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(path) = s.strip_prefix("gadd:") {
            let set = StrategySet::load(path).map_err(|e| e.to_string())?;
            return Ok(Self::learned(set));
        }
        s.parse().map(Self::Baseline)
    }
}

pub fn dd_pulses(sched: &ScheduledCircuit, device: &DeviceModel, mode: &DdMode) -> Result<Vec<PulseEvent>, DdError> {
    dd_pulses_with(sched, device, mode, &BaselineConfig::default(), &CollisionConfig::default())
}

pub fn dd_pulses_with(
    sched: &ScheduledCircuit,
    device: &DeviceModel,
    mode: &DdMode,
    baseline: &BaselineConfig,
    collisions: &CollisionConfig,
) -> Result<Vec<PulseEvent>, DdError> {
    match mode {
        DdMode::Baseline(kind) => Ok(pad_baseline(sched, device, *kind, baseline)),
        DdMode::Learned { set, mode } => {
            let strategies = set.strategies();
            let k = strategies.first().map_or(1, |s| s.k());
            let coloring = color_windows(sched, device, k);
            let flags = detect_all_collisions(device, collisions);
            pad_strategy(sched, device, &coloring, &set.as_motifs(), &strategies, &flags, *mode)
        }
    }
}
