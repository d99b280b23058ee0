//! Mid-circuit-measurement and dynamic-circuit randomized benchmarking.

mod clifford;
mod fit;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use clifford::CliffordGroup;
pub use fit::{bootstrap_epl, fit_circuits, fit_rb_decay, BootstrapEpl, RbFit};

use crate::circuit::{build_schedule, DynamicCircuit, Gate, Ns, ScheduleError};
use crate::dd::{dd_pulses, DdError, DdMode, Motif};
use crate::device::DeviceModel;
use crate::gadd::{TrainingCircuit, TrainingUnit, UtilityTarget};
use crate::sim::{run_shots, SimError};
use crate::{exec, rng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RbError {
    #[error("fit needs at least 3 distinct lengths, got {0}")]
    TooFewPoints(usize),
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dd(#[from] DdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RbKind {
    McmRb,
    DcRbZ,
    DcRbI,
}

impl fmt::Display for RbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RbKind::McmRb => "mcm-rb",
            RbKind::DcRbZ => "dc-rb-z",
            RbKind::DcRbI => "dc-rb-i",
        })
    }
}

impl FromStr for RbKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mcm-rb" => Ok(RbKind::McmRb),
            "dc-rb-z" => Ok(RbKind::DcRbZ),
            "dc-rb-i" => Ok(RbKind::DcRbI),
            _ => Err(format!("unknown benchmark `{s}` (expected mcm-rb, dc-rb-z or dc-rb-i)")),
        }
    }
}

/// Which qubits are measured mid-circuit and which receive Cliffords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbRoles {
    pub measured: Vec<usize>,
    pub unitary: Vec<usize>,
}

impl RbRoles {
    pub fn pair(measured: usize, unitary: usize) -> Self {
        Self { measured: vec![measured], unitary: vec![unitary] }
    }

    pub fn all(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.measured.iter().chain(&self.unitary).copied().collect();
        v.sort_unstable();
        v
    }

    fn validate(&self, n_qubits: usize) -> Result<(), RbError> {
        let all = self.all();
        if self.measured.is_empty() || self.unitary.is_empty() {
            return Err(RbError::Spec("need at least one measured and one unitary qubit".into()));
        }
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(RbError::Spec("measured and unitary qubits must be distinct".into()));
        }
        if let Some(q) = all.iter().find(|&&q| q >= n_qubits) {
            return Err(RbError::Spec(format!("qubit {q} is not on the device")));
        }
        Ok(())
    }

    /// For each unitary qubit, the index into `measured` of the nearest
    /// measured qubit (ties to the lower index).
    pub fn controls(&self, device: &DeviceModel) -> Vec<usize> {
        self.unitary
            .iter()
            .map(|&u| {
                let d = device.distances_from(u);
                (0..self.measured.len()).min_by_key(|&i| (d[self.measured[i]].unwrap_or(usize::MAX), i)).unwrap()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbExperimentSpec {
    pub kind: RbKind,
    pub lengths: Vec<usize>,
    pub n_randomizations: usize,
    pub shots: u64,
    pub roles: RbRoles,
}

impl RbExperimentSpec {
    /// MCM-RB: l = 2..12 step 2, 60 circuits per length. DC-RB: ten lengths up
    /// to 35, 7 circuits per length. 300 shots each.
    pub fn defaults(kind: RbKind, roles: RbRoles) -> Self {
        let (lengths, n_randomizations) = match kind {
            RbKind::McmRb => (vec![2, 4, 6, 8, 10, 12], 60),
            RbKind::DcRbZ | RbKind::DcRbI => (vec![0, 1, 2, 3, 4, 5, 10, 15, 20, 35], 7),
        };
        Self { kind, lengths, n_randomizations, shots: 300, roles }
    }

    pub fn validate(&self, device: &DeviceModel) -> Result<(), RbError> {
        if self.lengths.len() < 2 || self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RbError::Spec("lengths must be strictly increasing with at least two values".into()));
        }
        if self.n_randomizations == 0 || self.shots == 0 {
            return Err(RbError::Spec("randomizations and shots must be positive".into()));
        }
        self.roles.validate(device.n_qubits)
    }

    /// Qubits whose final-readout survival is reported.
    pub fn reported_qubits(&self) -> Vec<usize> {
        match self.kind {
            RbKind::McmRb => self.roles.all(),
            RbKind::DcRbZ | RbKind::DcRbI => self.roles.unitary.clone(),
        }
    }
}

/// An RB circuit and the clbit holding each reported qubit's final readout.
#[derive(Debug, Clone, PartialEq)]
pub struct RbCircuit {
    pub circuit: DynamicCircuit,
    pub readout: BTreeMap<usize, usize>,
}

fn random_cliffords<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..24)).collect()
}

/// Unitary qubits get `l` random Cliffords and their recovery; between each
/// adjacent pair every measured qubit is measured, then idles for `tau_ff`.
/// Every qubit is read out at the end.
pub fn build_mcm_rb<R: Rng>(roles: &RbRoles, l: usize, n_qubits: usize, tau_ff: Ns, rng: &mut R) -> RbCircuit {
    let g = CliffordGroup::get();
    let all = roles.all();
    let n_mcm = l.saturating_sub(1) * roles.measured.len();
    let mut c = DynamicCircuit::new(n_qubits, n_mcm + all.len());
    let mut net = vec![0usize; roles.unitary.len()];
    let mut bit = 0;
    for layer in 0..l {
        if layer > 0 {
            c.barrier(all.iter().copied());
            for &m in &roles.measured {
                c.measure(m, bit);
                bit += 1;
            }
            for &m in &roles.measured {
                c.delay(m, tau_ff);
            }
            c.barrier(all.iter().copied());
        }
        for (k, (&u, cl)) in roles.unitary.iter().zip(random_cliffords(roles.unitary.len(), rng)).enumerate() {
            for gate in g.gates(cl, u) {
                c.gate(gate);
            }
            net[k] = g.then(net[k], cl);
        }
    }
    for (k, &u) in roles.unitary.iter().enumerate() {
        for gate in g.gates(g.inverse(net[k]), u) {
            c.gate(gate);
        }
    }
    let mut readout = BTreeMap::new();
    for &q in &all {
        c.measure(q, bit);
        readout.insert(q, bit);
        bit += 1;
    }
    RbCircuit { circuit: c, readout }
}

/// One dynamic-circuit block: X on each measured qubit, measure into
/// `clbit_offset + i`, conditional Z (or identity) on each unitary qubit keyed
/// on its controlling measurement, X to reset. `controls[k]` indexes
/// `roles.measured` for unitary `k`.
pub fn build_dc_rb_block(
    kind: RbKind,
    roles: &RbRoles,
    controls: &[usize],
    n_qubits: usize,
    n_clbits: usize,
    clbit_offset: usize,
) -> DynamicCircuit {
    let mut c = DynamicCircuit::new(n_qubits, n_clbits);
    c.barrier(roles.all());
    for &m in &roles.measured {
        c.gate(Gate::X { qubit: m });
    }
    for (i, &m) in roles.measured.iter().enumerate() {
        c.measure(m, clbit_offset + i);
    }
    for (&u, &ctl) in roles.unitary.iter().zip(controls) {
        let gate = match kind {
            RbKind::DcRbZ => Gate::Z { qubit: u },
            _ => Gate::RZ { qubit: u, theta: 0.0 },
        };
        c.conditional(gate, clbit_offset + ctl, 1);
    }
    for &m in &roles.measured {
        c.gate(Gate::X { qubit: m });
    }
    c
}

/// `l` rounds of (random Clifford layer on the unitaries, block), then the
/// recovery that inverts the ideal net operation, then unitary readout.
pub fn build_dc_rb<R: Rng>(kind: RbKind, roles: &RbRoles, controls: &[usize], l: usize, n_qubits: usize, rng: &mut R) -> RbCircuit {
    let g = CliffordGroup::get();
    let nm = roles.measured.len();
    let n_clbits = l * nm + roles.unitary.len();
    let mut c = DynamicCircuit::new(n_qubits, n_clbits);
    let identity: Vec<usize> = (0..n_qubits).collect();
    let z = g.pauli('Z');
    let mut net = vec![0usize; roles.unitary.len()];
    for round in 0..l {
        for (k, (&u, cl)) in roles.unitary.iter().zip(random_cliffords(roles.unitary.len(), rng)).enumerate() {
            for gate in g.gates(cl, u) {
                c.gate(gate);
            }
            net[k] = g.then(net[k], cl);
            if kind == RbKind::DcRbZ {
                net[k] = g.then(net[k], z);
            }
        }
        c.append_mapped(&build_dc_rb_block(kind, roles, controls, n_qubits, n_clbits, round * nm), &identity, 0);
    }
    let mut readout = BTreeMap::new();
    for (k, &u) in roles.unitary.iter().enumerate() {
        for gate in g.gates(g.inverse(net[k]), u) {
            c.gate(gate);
        }
        let bit = l * nm + k;
        c.measure(u, bit);
        readout.insert(u, bit);
    }
    RbCircuit { circuit: c, readout }
}

/// Randomization `r` of length index `li`; independent of the DD mode.
pub fn build_rb_circuit(spec: &RbExperimentSpec, device: &DeviceModel, li: usize, r: usize, seed: u64) -> RbCircuit {
    let mut rng = rng::stream(seed, "rb-circuit", &[li as u64, r as u64]);
    let l = spec.lengths[li];
    match spec.kind {
        RbKind::McmRb => build_mcm_rb(&spec.roles, l, device.n_qubits, device.timing.tau_ff, &mut rng),
        kind => build_dc_rb(kind, &spec.roles, &spec.roles.controls(device), l, device.n_qubits, &mut rng),
    }
}

/// Survival of one reported qubit in one circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitSurvival {
    pub l: usize,
    pub randomization: usize,
    pub qubit: usize,
    pub p0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub qubit: usize,
    pub l: usize,
    pub mean_p0: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    pub kind: RbKind,
    pub dd_mode: String,
    pub circuits: Vec<CircuitSurvival>,
}

impl RbResult {
    pub fn qubits(&self) -> Vec<usize> {
        let mut q: Vec<usize> = self.circuits.iter().map(|c| c.qubit).collect();
        q.sort_unstable();
        q.dedup();
        q
    }

    /// `(l, p̂)` for every circuit of `qubit`.
    pub fn per_circuit(&self, qubit: usize) -> Vec<(usize, f64)> {
        self.circuits.iter().filter(|c| c.qubit == qubit).map(|c| (c.l, c.p0)).collect()
    }

    pub fn table(&self) -> Vec<SurvivalRow> {
        let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for c in &self.circuits {
            groups.entry((c.qubit, c.l)).or_default().push(c.p0);
        }
        groups
            .into_iter()
            .map(|((qubit, l), v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = if v.len() > 1 { v.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                SurvivalRow { qubit, l, mean_p0: mean, stderr: (var / n).sqrt() }
            })
            .collect()
    }

    pub fn fit(&self, qubit: usize) -> Result<RbFit, RbError> {
        fit_circuits(&self.per_circuit(qubit))
    }

    /// Fit plus bootstrap error bar for every reported qubit.
    pub fn fit_reports(&self, n_resamples: usize, resample_size: usize, seed: u64) -> Vec<FitReport> {
        self.qubits()
            .into_iter()
            .map(|q| {
                let circuits = self.per_circuit(q);
                let fit = fit_circuits(&circuits).ok();
                let boot = bootstrap_epl(&circuits, n_resamples, resample_size, rng::derive(seed, "rb-boot", &[q as u64])).ok();
                FitReport {
                    experiment: self.kind,
                    qubit: q,
                    dd_mode: self.dd_mode.clone(),
                    fit,
                    epl_sigma: boot.map(|b| b.sigma),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_survival_csv(std::slice::from_ref(self), out)
    }
}

/// Fit JSON record per (qubit, DD mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub experiment: RbKind,
    pub qubit: usize,
    pub dd_mode: String,
    /// `None` when the fit failed; the survival table still holds the data.
    pub fit: Option<RbFit>,
    pub epl_sigma: Option<f64>,
}

pub fn write_survival_csv<W: Write>(results: &[RbResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "qubit", "dd_mode", "l", "mean_p0", "stderr"])?;
    for res in results {
        for row in res.table() {
            w.write_record([
                res.kind.to_string(),
                row.qubit.to_string(),
                res.dd_mode.clone(),
                row.l.to_string(),
                format!("{:.6}", row.mean_p0),
                format!("{:.6}", row.stderr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs every (length, randomization) circuit with DD on the unitary qubits.
/// Circuits and shot seeds depend only on `seed`, so different modes see the
/// same randomizations.
pub fn run_rb(spec: &RbExperimentSpec, device: &DeviceModel, dd: &DdMode, seed: u64) -> Result<RbResult, RbError> {
    spec.validate(device)?;
    let reported = spec.reported_qubits();
    let jobs: Vec<(usize, usize)> =
        (0..spec.lengths.len()).flat_map(|li| (0..spec.n_randomizations).map(move |r| (li, r))).collect();
    let runs = exec::map_indexed(jobs.len(), |j| -> Result<Vec<CircuitSurvival>, RbError> {
        let (li, r) = jobs[j];
        let rb = build_rb_circuit(spec, device, li, r, seed);
        let sched = build_schedule(&rb.circuit, &device.timing)?;
        let mut pulses = dd_pulses(&sched, device, dd)?;
        pulses.retain(|p| spec.roles.unitary.contains(&p.qubit));
        let dist = run_shots(&sched, &pulses, device, spec.shots, rng::derive(seed, "rb-shots", &[li as u64, r as u64]))?;
        Ok(reported
            .iter()
            .map(|&q| CircuitSurvival { l: spec.lengths[li], randomization: r, qubit: q, p0: dist.prob_zero(rb.readout[&q]) })
            .collect())
    });
    let mut circuits = Vec::with_capacity(jobs.len() * reported.len());
    for run in runs {
        circuits.extend(run?);
    }
    Ok(RbResult { kind: spec.kind, dd_mode: dd.label(), circuits })
}

/// A single randomization of length `l` as a one-motif training unit scored by
/// mean unitary survival; pulses go on unitary qubits only.
pub fn rb_training_unit(
    kind: RbKind,
    roles: &RbRoles,
    l: usize,
    device: &DeviceModel,
    seed: u64,
) -> Result<TrainingUnit, RbError> {
    roles.validate(device.n_qubits)?;
    let mut r = rng::stream(seed, "rb-train", &[l as u64]);
    let rb = match kind {
        RbKind::McmRb => build_mcm_rb(roles, l, device.n_qubits, device.timing.tau_ff, &mut r),
        _ => build_dc_rb(kind, roles, &roles.controls(device), l, device.n_qubits, &mut r),
    };
    let sched = build_schedule(&rb.circuit, &device.timing)?;
    let clbits = roles.unitary.iter().map(|u| rb.readout[u]).collect();
    let motif = Motif {
        id: (1, 1),
        interval: (0, sched.total_duration),
        register: roles.all(),
        subcircuit: rb.circuit.clone(),
        has_mcm: true,
    };
    Ok(TrainingUnit {
        motif,
        training: TrainingCircuit { circuit: rb.circuit, target: UtilityTarget::UnitarySurvival { clbits } },
        dd_qubits: roles.unitary.clone(),
    })
}
