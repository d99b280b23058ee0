use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::motif::{assign_windows, Motif};
use super::{constrained_collision_sequence, DdError, DdSequence, DdStrategy};
use crate::circuit::{IdleWindow, Ns, ScheduledCircuit};
use crate::device::{CollisionFlag, DeviceModel};
use crate::sim::{PulseEvent, PulseLabel};

/// Color per idle window, keyed by the window's index in `sched.idle_windows`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub k: usize,
    pub colors: BTreeMap<usize, usize>,
}

impl Coloring {
    pub fn color(&self, window: usize) -> Option<usize> {
        self.colors.get(&window).copied()
    }
}

/// Colors every during-MCM window by its graph distance to the nearest qubit
/// measured at the same time, mod `k`. Windows with no measured qubit reachable
/// stay uncolored.
pub fn color_windows(sched: &ScheduledCircuit, device: &DeviceModel, k: usize) -> Coloring {
    assert!(k >= 1, "k must be at least 1");
    let mut colors = BTreeMap::new();
    for (i, w) in sched.idle_windows.iter().enumerate() {
        if !w.context.during_mcm {
            continue;
        }
        let dist = device.distances_from(w.qubit);
        let d = w.context.measured_qubits.iter().filter_map(|&m| dist.get(m).copied().flatten()).min();
        if let Some(d) = d {
            colors.insert(i, d % k);
        }
    }
    Coloring { k, colors }
}

fn ff_of(window: &IdleWindow) -> Ns {
    window.context.ff_boundary.unwrap_or(window.end).clamp(window.start, window.end)
}

/// Places `P_1..P_{L-1}` uniformly on `[start, ff)` and `P_L` at the
/// feedforward boundary.
pub fn schedule_sequence(window: &IdleWindow, seq: &DdSequence) -> Result<Vec<PulseEvent>, DdError> {
    let l = seq.len();
    let ff = ff_of(window);
    let span = ff - window.start;
    if l == 0 {
        return Ok(Vec::new());
    }
    if span < l as Ns {
        return Err(DdError::WindowTooShort { qubit: window.qubit, start: window.start, end: ff, len: l });
    }
    let mut out: Vec<PulseEvent> = seq.pulses[..l - 1]
        .iter()
        .enumerate()
        .map(|(i, &pulse)| PulseEvent {
            time: window.start + ((i as u128 + 1) * span as u128 / l as u128) as Ns,
            qubit: window.qubit,
            pulse,
        })
        .collect();
    out.push(PulseEvent { time: ff, qubit: window.qubit, pulse: seq.pulses[l - 1] });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    NoDD,
    XpXm,
    MDD,
    FFDD,
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nodd" | "none" => Ok(Self::NoDD),
            "xpxm" => Ok(Self::XpXm),
            "mdd" => Ok(Self::MDD),
            "ffdd" => Ok(Self::FFDD),
            _ => Err(format!("unknown DD mode `{s}`")),
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NoDD => "nodd",
            Self::XpXm => "xpxm",
            Self::MDD => "mdd",
            Self::FFDD => "ffdd",
        })
    }
}

/// Pulse positions as fractions of the sub-window they occupy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Two X pulses on `[start, ff)`; FFDD reuses them on `[ff, end)`.
    pub x2: (f64, f64),
    /// `X_p`, `X_m` on even colors, fractions of `[start, ff]`.
    pub xpxm_even: (f64, f64),
    pub xpxm_odd: (f64, f64),
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { x2: (0.25, 0.75), xpxm_even: (0.25, 0.75), xpxm_odd: (0.5, 1.0) }
    }
}

fn pair(window: &IdleWindow, a: Ns, b: Ns, fr: (f64, f64), labels: [PulseLabel; 2]) -> Vec<PulseEvent> {
    if b < a + 2 {
        return Vec::new();
    }
    let at = |f: f64| a + ((b - a) as f64 * f.clamp(0.0, 1.0)).round() as Ns;
    vec![
        PulseEvent { time: at(fr.0), qubit: window.qubit, pulse: labels[0] },
        PulseEvent { time: at(fr.1), qubit: window.qubit, pulse: labels[1] },
    ]
}

/// Pulses a baseline strategy puts into one during-MCM window.
pub fn baseline_pulses(window: &IdleWindow, kind: BaselineKind, color: usize, cfg: &BaselineConfig) -> Vec<PulseEvent> {
    let ff = ff_of(window);
    let xx = [PulseLabel::Xp, PulseLabel::Xp];
    match kind {
        BaselineKind::NoDD => Vec::new(),
        BaselineKind::MDD => pair(window, window.start, ff, cfg.x2, xx),
        BaselineKind::FFDD => {
            let mut v = pair(window, window.start, ff, cfg.x2, xx);
            v.extend(pair(window, ff, window.end, cfg.x2, xx));
            v
        }
        BaselineKind::XpXm => {
            let fr = if color % 2 == 0 { cfg.xpxm_even } else { cfg.xpxm_odd };
            pair(window, window.start, ff, fr, [PulseLabel::Xp, PulseLabel::Xm])
        }
    }
}

/// Baseline pulses for every during-MCM window of `sched`.
pub fn pad_baseline(
    sched: &ScheduledCircuit,
    device: &DeviceModel,
    kind: BaselineKind,
    cfg: &BaselineConfig,
) -> Vec<PulseEvent> {
    let coloring = color_windows(sched, device, 2);
    let mut out: Vec<PulseEvent> = sched
        .idle_windows
        .iter()
        .enumerate()
        .filter(|(_, w)| w.context.during_mcm)
        .flat_map(|(i, w)| baseline_pulses(w, kind, coloring.color(i).unwrap_or(0), cfg))
        .collect();
    out.sort();
    out
}

/// Which strategy each motif receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    Matched,
    /// Strategy of the given motif index on every window.
    Unaware(usize),
    /// Seeded permutation with no motif keeping its own strategy.
    Scrambled(u64),
}

fn strategy_map(mode: PadMode, n: usize) -> Vec<usize> {
    match mode {
        PadMode::Matched => (0..n).collect(),
        PadMode::Unaware(d) => vec![d; n],
        PadMode::Scrambled(seed) => {
            let mut perm: Vec<usize> = (0..n).collect();
            if n < 2 {
                return perm;
            }
            let mut rng = crate::rng::stream(seed, "scramble", &[n as u64]);
            loop {
                perm.shuffle(&mut rng);
                if perm.iter().enumerate().all(|(i, &p)| i != p) {
                    return perm;
                }
            }
        }
    }
}

enum Substitution {
    Constrained,
    Identity,
}

fn collision_substitutions(
    sched: &ScheduledCircuit,
    device: &DeviceModel,
    coloring: &Coloring,
    flags: &[CollisionFlag],
) -> BTreeMap<usize, Substitution> {
    let windows = &sched.idle_windows;
    let flagged: BTreeSet<usize> = coloring
        .colors
        .keys()
        .copied()
        .filter(|&i| {
            let w = &windows[i];
            flags.iter().any(|f| f.unitary == w.qubit && w.context.measured_qubits.contains(&f.measured))
        })
        .collect();
    let mut subs: BTreeMap<usize, Substitution> = flagged.iter().map(|&i| (i, Substitution::Constrained)).collect();
    for &i in &flagged {
        let w = &windows[i];
        let partners: Vec<usize> = device
            .neighbors(w.qubit)
            .into_iter()
            .filter(|v| !w.context.measured_qubits.contains(v))
            .collect();
        for &j in coloring.colors.keys() {
            let o = &windows[j];
            if partners.contains(&o.qubit) && o.start < w.end && w.start < o.end && !flagged.contains(&j) {
                subs.insert(j, Substitution::Identity);
            }
        }
    }
    subs
}

/// Pads learned strategies into `sched`. Each colored window takes its
/// color's sequence from the strategy of its motif (see [`assign_windows`]),
/// frame-corrected so the sequence multiplies to the identity. Windows of a
/// collision-flagged pair get the constrained sequence and their coupled
/// neighbours get identities. Windows too short for `L` pulses are skipped.
pub fn pad_strategy(
    sched: &ScheduledCircuit,
    device: &DeviceModel,
    coloring: &Coloring,
    motifs: &[Motif],
    strategies: &[DdStrategy],
    flags: &[CollisionFlag],
    mode: PadMode,
) -> Result<Vec<PulseEvent>, DdError> {
    if strategies.len() < motifs.len() {
        return Err(DdError::MissingStrategy(strategies.len()));
    }
    let map = strategy_map(mode, motifs.len());
    if let Some(&bad) = map.iter().find(|&&s| s >= strategies.len()) {
        return Err(DdError::MissingStrategy(bad));
    }
    let owner = assign_windows(sched, motifs, device);
    let subs = collision_substitutions(sched, device, coloring, flags);
    let mut out = Vec::new();
    for (&i, &color) in &coloring.colors {
        let w = &sched.idle_windows[i];
        let motif = owner[i].ok_or(DdError::UnassignedWindow { qubit: w.qubit, start: w.start })?;
        let strategy = &strategies[map[motif]];
        let l = strategy.l();
        let seq = match subs.get(&i) {
            Some(Substitution::Constrained) => constrained_collision_sequence(l),
            Some(Substitution::Identity) => DdSequence::identity(l),
            None => strategy.sequence(color).frame_corrected(),
        };
        match schedule_sequence(w, &seq) {
            Ok(p) => out.extend(p),
            Err(DdError::WindowTooShort { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    out.sort();
    Ok(out)
}
