use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    evaluate_utility, init_population, reproduce, select_parents, survivors, GaddConfig, GaddError, Population,
};
use crate::circuit::{build_schedule, DynamicCircuit, Instruction, ScheduledCircuit};
use crate::dd::{
    color_windows, pad_strategy, parallel_groups, partition_motifs, DdStrategy, Motif, MotifStrategy, PadMode,
    StrategySet,
};
use crate::device::{detect_all_collisions, DeviceModel};
use crate::sim::{exact_distribution, marginal_exact, run_shots, ExactDistribution};
use crate::{exec, qft, rng};

/// What a training run is scored against; clbits index the training circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum UtilityTarget {
    OneNorm { clbits: Vec<usize>, dist: ExactDistribution },
    UnitarySurvival { clbits: Vec<usize> },
}

impl UtilityTarget {
    fn shifted(&self, offset: usize) -> UtilityTarget {
        let shift = |c: &[usize]| c.iter().map(|b| b + offset).collect();
        match self {
            Self::OneNorm { clbits, dist } => Self::OneNorm { clbits: shift(clbits), dist: dist.clone() },
            Self::UnitarySurvival { clbits } => Self::UnitarySurvival { clbits: shift(clbits) },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCircuit {
    /// Indexed by device qubit.
    pub circuit: DynamicCircuit,
    pub target: UtilityTarget,
}

/// One motif to learn a strategy for.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingUnit {
    pub motif: Motif,
    pub training: TrainingCircuit,
    /// Only these qubits receive pulses.
    pub dd_qubits: Vec<usize>,
}

/// Input state put in front of a motif subcircuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingPrep {
    None,
    /// `QFT†|0…0⟩` on the register, so a QFT+M motif ideally returns all zeros.
    QftDagger,
}

/// The motif subcircuit on its register, with clbits renumbered from 0 and any
/// conditional on a bit measured outside the motif dropped. The target is the
/// exact noiseless outcome distribution.
pub fn motif_training_circuit(
    motif: &Motif,
    device: &DeviceModel,
    prep: TrainingPrep,
) -> Result<TrainingCircuit, GaddError> {
    let mut clbit_map = BTreeMap::new();
    for inst in &motif.subcircuit.instructions {
        if let Instruction::Measure { clbit, .. } = inst {
            let next = clbit_map.len();
            clbit_map.entry(*clbit).or_insert(next);
        }
    }
    let mut c = DynamicCircuit::new(device.n_qubits, clbit_map.len());
    if prep == TrainingPrep::QftDagger {
        let mut reg = motif.register.clone();
        reg.sort_unstable();
        c.append_mapped(&qft::prepare_qft_dagger_basis(reg.len(), 0), &reg, 0);
    }
    for inst in &motif.subcircuit.instructions {
        let keep = match inst {
            Instruction::Conditional { clbit, .. } => clbit_map.contains_key(clbit),
            _ => true,
        };
        if keep {
            c.push(inst.remapped(|q| q, |b| clbit_map[&b]));
        }
    }
    let clbits: Vec<usize> = (0..clbit_map.len()).collect();
    let sched = build_schedule(&c, &device.timing)?;
    let dist = marginal_exact(&exact_distribution(&sched)?, &clbits);
    Ok(TrainingCircuit { circuit: c, target: UtilityTarget::OneNorm { clbits, dist } })
}

/// All units side by side from t = 0, clbits concatenated. Returns the merged
/// circuit and each unit's target with its clbits shifted.
pub fn merge_units(units: &[&TrainingUnit], n_qubits: usize) -> (DynamicCircuit, Vec<UtilityTarget>) {
    let total: usize = units.iter().map(|u| u.training.circuit.n_clbits).sum();
    let mut c = DynamicCircuit::new(n_qubits, total);
    let identity: Vec<usize> = (0..n_qubits).collect();
    let mut offset = 0;
    let mut targets = Vec::new();
    for u in units {
        c.append_mapped(&u.training.circuit, &identity, offset);
        targets.push(u.training.target.shifted(offset));
        offset += u.training.circuit.n_clbits;
    }
    (c, targets)
}

/// Progress of one parallel group; persisted between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    pub units: Vec<usize>,
    pub iterations_done: usize,
    /// One per unit, empty until initialized.
    pub populations: Vec<Population>,
    /// `[unit][iteration][3N]`.
    pub history: Vec<Vec<Vec<f64>>>,
    pub init_seconds: f64,
    pub iteration_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub config: GaddConfig,
    pub groups: Vec<GroupState>,
}

impl TrainingState {
    fn fresh(cfg: &GaddConfig, groups: &[Vec<usize>]) -> Self {
        let groups = groups
            .iter()
            .map(|g| GroupState {
                units: g.clone(),
                iterations_done: 0,
                populations: Vec::new(),
                history: vec![Vec::new(); g.len()],
                init_seconds: 0.0,
                iteration_seconds: Vec::new(),
            })
            .collect();
        Self { config: cfg.clone(), groups }
    }

    fn save(&self, path: &Path) -> Result<(), GaddError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string(self).map_err(|e| GaddError::Checkpoint(e.to_string()))?;
        std::fs::write(&tmp, text).map_err(|e| GaddError::Checkpoint(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path).map_err(|e| GaddError::Checkpoint(format!("{}: {e}", path.display())))
    }

    fn load(path: &Path) -> Result<Self, GaddError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GaddError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GaddError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

/// Wall-clock bookkeeping of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRunRecord {
    /// Number of motifs.
    pub m: usize,
    /// Largest number of motifs trained together.
    pub p: usize,
    pub n_it: usize,
    /// Mean seconds per GA iteration of one group.
    pub t_iteration: f64,
    pub total_seconds: f64,
    pub groups: Vec<Vec<usize>>,
    /// `[motif][iteration][3N]`: parents then children.
    pub utility_history: Vec<Vec<Vec<f64>>>,
}

impl TrainingRunRecord {
    /// `(M/p)·N_it·T`.
    pub fn predicted_seconds(&self) -> f64 {
        self.m as f64 / self.p.max(1) as f64 * self.n_it as f64 * self.t_iteration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub strategies: StrategySet,
    pub record: TrainingRunRecord,
}

/// Partitions `target`, builds one training circuit per motif with a
/// measurement, groups motifs that can be trained together and runs the GA.
pub fn run_training(
    target: &ScheduledCircuit,
    device: &DeviceModel,
    cfg: &GaddConfig,
    n_intervals: usize,
    registers: &[Vec<usize>],
    prep: TrainingPrep,
    checkpoint: Option<&Path>,
) -> Result<TrainingOutcome, GaddError> {
    let motifs = partition_motifs(target, n_intervals, registers)?;
    let units = motifs
        .iter()
        .map(|m| {
            Ok(TrainingUnit {
                training: motif_training_circuit(m, device, prep)?,
                dd_qubits: m.register.clone(),
                motif: m.clone(),
            })
        })
        .collect::<Result<Vec<_>, GaddError>>()?;
    let groups = parallel_groups(&motifs, device, &cfg.parallel);
    train_units(&units, &groups, device, cfg, checkpoint)
}

struct GroupRunner<'a> {
    sched: ScheduledCircuit,
    targets: Vec<UtilityTarget>,
    motifs: Vec<Motif>,
    dd_qubits: Vec<usize>,
    coloring: crate::dd::Coloring,
    flags: Vec<crate::device::CollisionFlag>,
    device: &'a DeviceModel,
    shots: u64,
}

impl GroupRunner<'_> {
    /// Utility of each unit when unit `u` runs `candidates[u]`.
    fn evaluate(&self, candidates: &[&DdStrategy], seed: u64) -> Result<Vec<f64>, GaddError> {
        let owned: Vec<DdStrategy> = candidates.iter().map(|s| (*s).clone()).collect();
        let mut pulses =
            pad_strategy(&self.sched, self.device, &self.coloring, &self.motifs, &owned, &self.flags, PadMode::Matched)?;
        pulses.retain(|p| self.dd_qubits.contains(&p.qubit));
        let dist = run_shots(&self.sched, &pulses, self.device, self.shots, seed)?;
        self.targets.iter().map(|t| evaluate_utility(&dist, t)).collect()
    }

    /// Evaluates `count` candidate tuples in parallel; returns `[unit][index]`.
    fn evaluate_all(
        &self,
        count: usize,
        pick: impl Fn(usize, usize) -> DdStrategy + Sync,
        seed: impl Fn(usize) -> u64 + Sync,
    ) -> Result<Vec<Vec<f64>>, GaddError> {
        let n_units = self.motifs.len();
        let rows = exec::map_indexed(count, |i| {
            let cand: Vec<DdStrategy> = (0..n_units).map(|u| pick(u, i)).collect();
            let refs: Vec<&DdStrategy> = cand.iter().collect();
            self.evaluate(&refs, seed(i))
        });
        let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok((0..n_units).map(|u| rows.iter().map(|r| r[u]).collect()).collect())
    }
}

/// Trains every unit, group by group. With `checkpoint`, progress is written
/// after each iteration and an existing file with the same config is resumed.
pub fn train_units(
    units: &[TrainingUnit],
    groups: &[Vec<usize>],
    device: &DeviceModel,
    cfg: &GaddConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainingOutcome, GaddError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut state = match checkpoint {
        Some(p) if p.exists() => {
            let s = TrainingState::load(p)?;
            let same_groups = s.groups.iter().map(|g| &g.units).eq(groups.iter());
            if s.config != *cfg || !same_groups {
                return Err(GaddError::Checkpoint(format!("{} belongs to a different run", p.display())));
            }
            s
        }
        _ => TrainingState::fresh(cfg, groups),
    };
    let flags = detect_all_collisions(device, &cfg.collisions);

    for g in 0..state.groups.len() {
        if state.groups[g].iterations_done >= cfg.n_iterations && !state.groups[g].populations.is_empty() {
            continue;
        }
        let members: Vec<&TrainingUnit> = state.groups[g].units.iter().map(|&u| &units[u]).collect();
        let (circuit, targets) = merge_units(&members, device.n_qubits);
        let sched = build_schedule(&circuit, &device.timing)?;
        let runner = GroupRunner {
            coloring: color_windows(&sched, device, cfg.k),
            sched,
            targets,
            motifs: members.iter().map(|u| u.motif.clone()).collect(),
            dd_qubits: members.iter().flat_map(|u| u.dd_qubits.iter().copied()).collect(),
            flags: flags.clone(),
            device,
            shots: cfg.shots_per_circuit,
        };
        let group_ids = state.groups[g].units.clone();
        let tag = g as u64;

        if state.groups[g].populations.is_empty() {
            let t0 = Instant::now();
            let mut pops: Vec<Population> = group_ids
                .iter()
                .map(|&u| init_population(cfg, &mut rng::stream(cfg.seed, "gadd-init", &[u as u64])))
                .collect();
            let utils = runner.evaluate_all(
                cfg.n,
                |u, i| pops[u].strategies[i].clone(),
                |i| rng::derive(cfg.seed, "gadd-eval", &[tag, 0, i as u64]),
            )?;
            for (pop, u) in pops.iter_mut().zip(utils) {
                pop.utilities = u.into_iter().map(Some).collect();
            }
            let gs = &mut state.groups[g];
            gs.populations = pops;
            gs.init_seconds = t0.elapsed().as_secs_f64();
            if let Some(p) = checkpoint {
                state.save(p)?;
            }
        }

        while state.groups[g].iterations_done < cfg.n_iterations {
            let t0 = Instant::now();
            let it = state.groups[g].iterations_done as u64 + 1;
            let gs = &state.groups[g];
            let children: Vec<Vec<DdStrategy>> = group_ids
                .iter()
                .zip(&gs.populations)
                .map(|(&u, pop)| {
                    let f: Vec<f64> = pop.utilities.iter().map(|x| x.unwrap_or(0.0)).collect();
                    let pairs = select_parents(
                        &f,
                        cfg.n,
                        cfg.selection,
                        &mut rng::stream(cfg.seed, "gadd-select", &[u as u64, it]),
                    );
                    reproduce(&pop.strategies, &pairs, cfg, &mut rng::stream(cfg.seed, "gadd-reproduce", &[u as u64, it]))
                })
                .collect();
            let child_utils = runner.evaluate_all(
                2 * cfg.n,
                |u, i| children[u][i].clone(),
                |i| rng::derive(cfg.seed, "gadd-eval", &[tag, it, i as u64]),
            )?;
            let gs = &mut state.groups[g];
            for (u, (pop, kids)) in gs.populations.iter_mut().zip(children).enumerate() {
                let mut pool = pop.strategies.clone();
                pool.extend(kids);
                let mut f: Vec<f64> = pop.utilities.iter().map(|x| x.unwrap_or(0.0)).collect();
                f.extend(&child_utils[u]);
                gs.history[u].push(f.clone());
                let keep = survivors(&f, cfg.n);
                *pop = Population {
                    strategies: keep.iter().map(|&i| pool[i].clone()).collect(),
                    utilities: keep.iter().map(|&i| Some(f[i])).collect(),
                };
            }
            gs.iterations_done += 1;
            gs.iteration_seconds.push(t0.elapsed().as_secs_f64());
            if let Some(p) = checkpoint {
                state.save(p)?;
            }
        }
    }

    let mut motif_out = vec![None; units.len()];
    let mut history = vec![Vec::new(); units.len()];
    for gs in &state.groups {
        for (slot, &u) in gs.units.iter().enumerate() {
            let pop = &gs.populations[slot];
            let (best, f) = pop.best().expect("population evaluated");
            let unit = &units[u];
            motif_out[u] = Some(MotifStrategy {
                motif: unit.motif.id,
                interval: unit.motif.interval,
                register: unit.motif.register.clone(),
                strategy: pop.strategies[best].clone(),
                utility: f,
            });
            history[u] = gs.history[slot].clone();
        }
    }
    let seconds: Vec<f64> = state.groups.iter().flat_map(|g| g.iteration_seconds.iter().copied()).collect();
    let record = TrainingRunRecord {
        m: units.len(),
        p: groups.iter().map(Vec::len).max().unwrap_or(1),
        n_it: cfg.n_iterations,
        t_iteration: if seconds.is_empty() { 0.0 } else { seconds.iter().sum::<f64>() / seconds.len() as f64 },
        total_seconds: started.elapsed().as_secs_f64(),
        groups: groups.to_vec(),
        utility_history: history,
    };
    Ok(TrainingOutcome {
        strategies: StrategySet { motifs: motif_out.into_iter().map(|m| m.expect("every unit trained")).collect() },
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_chain(n: usize) -> DeviceModel {
        let mut dev = DeviceModel::chain(n);
        for m in 0..n {
            for u in 0..n {
                if m != u && m.abs_diff(u) <= 2 {
                    dev.noise.zphase_rate.push((m, u, 1.5e-3 / m.abs_diff(u) as f64));
                }
            }
        }
        for q in 0..n - 1 {
            dev.noise.zz_rate.push((q, q + 1, 1e-4));
        }
        dev
    }

    fn small_cfg() -> GaddConfig {
        GaddConfig { n: 8, n_iterations: 3, shots_per_circuit: 100, seed: 11, ..Default::default() }
    }

    fn qft_target(n: usize, dev: &DeviceModel) -> ScheduledCircuit {
        let c = qft::qft_circuit_with_input(n, dev.n_qubits, &DynamicCircuit::new(n, 0));
        build_schedule(&c, &dev.timing).unwrap()
    }

    #[test]
    fn training_circuit_targets_all_zero() {
        let dev = DeviceModel::chain(6);
        let target = qft_target(6, &dev);
        let motifs = partition_motifs(&target, 2, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        assert_eq!(motifs.len(), 2);
        for m in &motifs {
            let tc = motif_training_circuit(m, &dev, TrainingPrep::QftDagger).unwrap();
            let UtilityTarget::OneNorm { dist, clbits } = &tc.target else { panic!() };
            assert_eq!(clbits.len(), 3);
            assert_eq!(dist.get("000").copied(), Some(1.0));
        }
    }

    #[test]
    fn elitism_and_shapes() {
        let dev = noisy_chain(6);
        let target = qft_target(6, &dev);
        let cfg = small_cfg();
        let out = run_training(&target, &dev, &cfg, 2, &[vec![0, 1, 2], vec![3, 4, 5]], TrainingPrep::QftDagger, None)
            .unwrap();
        assert_eq!(out.strategies.motifs.len(), 2);
        assert_eq!(out.record.utility_history.len(), 2);
        for h in &out.record.utility_history {
            assert_eq!(h.len(), 3);
            assert!(h.iter().all(|row| row.len() == 24));
            let best: Vec<f64> = h.iter().map(|row| row.iter().cloned().fold(0.0, f64::max)).collect();
            assert!(best.windows(2).all(|w| w[1] >= w[0]));
        }
        for m in &out.strategies.motifs {
            m.strategy.check_shape(2, 8).unwrap();
            assert!((0.0..=1.0).contains(&m.utility));
        }
    }

    #[test]
    fn deterministic_across_threads_and_resume() {
        let dev = noisy_chain(4);
        let target = qft_target(4, &dev);
        let cfg = GaddConfig { n: 4, n_iterations: 2, shots_per_circuit: 50, seed: 3, ..Default::default() };
        let regs = [vec![0, 1], vec![2, 3]];
        let run = |threads| {
            exec::with_threads(threads, || {
                run_training(&target, &dev, &cfg, 2, &regs, TrainingPrep::QftDagger, None).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.strategies, b.strategies);
        assert_eq!(a.record.utility_history, b.record.utility_history);

        // stop after one iteration, then resume to the full count
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("state.json");
        let short = GaddConfig { n_iterations: 1, ..cfg.clone() };
        run_training(&target, &dev, &short, 2, &regs, TrainingPrep::QftDagger, Some(&ck)).unwrap();
        let mut s = TrainingState::load(&ck).unwrap();
        s.config = cfg.clone();
        s.save(&ck).unwrap();
        let resumed = run_training(&target, &dev, &cfg, 2, &regs, TrainingPrep::QftDagger, Some(&ck)).unwrap();
        assert_eq!(resumed.strategies, a.strategies);
        assert_eq!(resumed.record.utility_history, a.record.utility_history);
    }

    #[test]
    fn zero_iterations_returns_best_initial() {
        let dev = noisy_chain(3);
        let target = qft_target(3, &dev);
        let cfg = GaddConfig { n: 4, n_iterations: 0, shots_per_circuit: 20, ..Default::default() };
        let out = run_training(&target, &dev, &cfg, 1, &[vec![0, 1, 2]], TrainingPrep::QftDagger, None).unwrap();
        assert_eq!(out.strategies.motifs.len(), 1);
        assert!(out.record.utility_history[0].is_empty());
    }

    #[test]
    fn mismatched_checkpoint_is_refused() {
        let dev = noisy_chain(3);
        let target = qft_target(3, &dev);
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("state.json");
        let cfg = GaddConfig { n: 4, n_iterations: 1, shots_per_circuit: 10, ..Default::default() };
        run_training(&target, &dev, &cfg, 1, &[vec![0, 1, 2]], TrainingPrep::QftDagger, Some(&ck)).unwrap();
        let other = GaddConfig { seed: 99, ..cfg };
        let err = run_training(&target, &dev, &other, 1, &[vec![0, 1, 2]], TrainingPrep::QftDagger, Some(&ck));
        assert!(matches!(err, Err(GaddError::Checkpoint(_))));
    }
}
