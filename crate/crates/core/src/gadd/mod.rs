//! Genetic search over DD strategies: balanced initialization, roulette
//! selection, single-point crossover with mutation, and top-N survival.

mod train;

pub use train::{
    merge_units, motif_training_circuit, run_training, train_units, GroupState, TrainingCircuit, TrainingOutcome,
    TrainingPrep, TrainingRunRecord, TrainingState, TrainingUnit, UtilityTarget,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dd::{DdSequence, DdStrategy, PulseLabel};
use crate::device::CollisionConfig;
use crate::dd::ParallelConfig;
use crate::sim::{ExactDistribution, OutcomeDistribution};

#[derive(Debug, thiserror::Error)]
pub enum GaddError {
    #[error("observed distribution has no shots")]
    ShotCountZero,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Dd(#[from] crate::dd::DdError),
    #[error(transparent)]
    Schedule(#[from] crate::circuit::ScheduleError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// P(i) = f_i / Σf.
    Proportional,
    /// P(i) ∝ rank, best ranked N.
    Rank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaddConfig {
    #[serde(rename = "L")]
    pub l: usize,
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub group: Vec<PulseLabel>,
    pub n_iterations: usize,
    pub shots_per_circuit: u64,
    pub mutation_rate: f64,
    pub selection: Selection,
    pub parallel: ParallelConfig,
    pub collisions: CollisionConfig,
    pub seed: u64,
}

impl Default for GaddConfig {
    fn default() -> Self {
        Self {
            l: 8,
            k: 2,
            n: 16,
            group: PulseLabel::ALL.to_vec(),
            n_iterations: 9,
            shots_per_circuit: 250,
            mutation_rate: 0.05,
            selection: Selection::Proportional,
            parallel: ParallelConfig::default(),
            collisions: CollisionConfig::default(),
            seed: 0,
        }
    }
}

impl GaddConfig {
    pub fn validate(&self) -> Result<(), GaddError> {
        let bad = |m: &str| Err(GaddError::Config(m.to_string()));
        if self.n < 2 {
            return bad("N must be at least 2");
        }
        if self.shots_per_circuit == 0 {
            return bad("shots_per_circuit must be at least 1");
        }
        if self.l == 0 || self.k == 0 {
            return bad("L and k must be positive");
        }
        if self.group.is_empty() {
            return bad("pulse group is empty");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub strategies: Vec<DdStrategy>,
    pub utilities: Vec<Option<f64>>,
}

impl Population {
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, u) in self.utilities.iter().enumerate() {
            if let Some(f) = *u {
                if best.is_none_or(|(_, b)| f > b) {
                    best = Some((i, f));
                }
            }
        }
        best
    }
}

/// Every label of `cfg.group` appears `N / |G|` times in each (color, position)
/// column; the remainder is spread over a shuffled choice of labels.
pub fn init_population<R: Rng>(cfg: &GaddConfig, rng: &mut R) -> Population {
    let g = &cfg.group;
    let mut grid = vec![vec![vec![PulseLabel::Ip; cfg.l]; cfg.k]; cfg.n];
    for color in 0..cfg.k {
        for pos in 0..cfg.l {
            let mut column: Vec<PulseLabel> = (0..cfg.n / g.len()).flat_map(|_| g.iter().copied()).collect();
            let mut extra = g.clone();
            extra.shuffle(rng);
            column.extend(extra.into_iter().take(cfg.n % g.len()));
            column.shuffle(rng);
            for (s, label) in column.into_iter().enumerate() {
                grid[s][color][pos] = label;
            }
        }
    }
    let strategies: Vec<DdStrategy> =
        grid.into_iter().map(|seqs| DdStrategy::new(seqs.into_iter().map(DdSequence::new).collect())).collect();
    Population { utilities: vec![None; strategies.len()], strategies }
}

/// `1 − ½ Σ_s |p(s) − p̂(s)|` over the union of supports.
pub fn one_norm_similarity(target: &ExactDistribution, observed: &ExactDistribution) -> f64 {
    1.0 - crate::sim::total_variation(target, observed)
}

/// Utility of one training run. Both kinds lie in [0, 1].
pub fn evaluate_utility(observed: &OutcomeDistribution, target: &UtilityTarget) -> Result<f64, GaddError> {
    if observed.shots == 0 {
        return Err(GaddError::ShotCountZero);
    }
    let f = match target {
        UtilityTarget::OneNorm { clbits, dist } => {
            one_norm_similarity(dist, &observed.marginal(clbits).probabilities())
        }
        UtilityTarget::UnitarySurvival { clbits } => {
            clbits.iter().map(|&b| observed.prob_zero(b)).sum::<f64>() / clbits.len().max(1) as f64
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// `n_pairs` parent pairs drawn with replacement. All-zero utilities fall back
/// to uniform sampling.
pub fn select_parents<R: Rng>(utilities: &[f64], n_pairs: usize, selection: Selection, rng: &mut R) -> Vec<(usize, usize)> {
    let n = utilities.len();
    let weights: Vec<f64> = match selection {
        Selection::Proportional => utilities.iter().map(|&f| f.max(0.0)).collect(),
        Selection::Rank => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| utilities[a].total_cmp(&utilities[b]).then(b.cmp(&a)));
            let mut w = vec![0.0; n];
            for (rank, &i) in order.iter().enumerate() {
                w[i] = (rank + 1) as f64;
            }
            w
        }
    };
    let total: f64 = weights.iter().sum();
    let mut draw = || -> usize {
        if total <= 0.0 {
            return rng.gen_range(0..n);
        }
        let mut x = rng.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if x < w {
                return i;
            }
            x -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap()
    };
    (0..n_pairs).map(|_| (draw(), draw())).collect()
}

/// Single-point crossover: `a[..cut] + b[cut..]` and `b[..cut] + a[cut..]`.
pub fn crossover(a: &DdSequence, b: &DdSequence, cut: usize) -> (DdSequence, DdSequence) {
    let cut = cut.min(a.len());
    let mix = |x: &DdSequence, y: &DdSequence| {
        DdSequence::new(x.pulses[..cut].iter().chain(&y.pulses[cut..]).copied().collect())
    };
    (mix(a, b), mix(b, a))
}

/// Two children per pair: per color a crossover at a uniform cut in
/// `[1, L−1]`, then each pulse is redrawn from the group with probability μ.
pub fn reproduce<R: Rng>(
    parents: &[DdStrategy],
    pairs: &[(usize, usize)],
    cfg: &GaddConfig,
    rng: &mut R,
) -> Vec<DdStrategy> {
    let mut children = Vec::with_capacity(2 * pairs.len());
    for &(a, b) in pairs {
        let (pa, pb) = (&parents[a], &parents[b]);
        let mut ca = Vec::with_capacity(cfg.k);
        let mut cb = Vec::with_capacity(cfg.k);
        for color in 0..pa.k() {
            let l = pa.sequences[color].len();
            let cut = if l >= 2 { rng.gen_range(1..l) } else { l };
            let (x, y) = crossover(&pa.sequences[color], &pb.sequences[color], cut);
            ca.push(x);
            cb.push(y);
        }
        for seqs in [&mut ca, &mut cb] {
            for seq in seqs.iter_mut() {
                for p in seq.pulses.iter_mut() {
                    if rng.gen::<f64>() < cfg.mutation_rate {
                        *p = *cfg.group.choose(rng).unwrap();
                    }
                }
            }
        }
        children.push(DdStrategy::new(ca));
        children.push(DdStrategy::new(cb));
    }
    children
}

/// Indices of the `n` best entries, by utility descending then index ascending.
pub fn survivors(utilities: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn column_counts(pop: &Population, color: usize, pos: usize) -> BTreeMap<PulseLabel, usize> {
        let mut m = BTreeMap::new();
        for s in &pop.strategies {
            *m.entry(s.sequences[color].pulses[pos]).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn initial_population_is_balanced() {
        for (n, each) in [(16, 2), (8, 1)] {
            let cfg = GaddConfig { n, ..Default::default() };
            let pop = init_population(&cfg, &mut rng::stream(1, "init", &[]));
            assert_eq!(pop.strategies.len(), n);
            for color in 0..2 {
                for pos in 0..8 {
                    let c = column_counts(&pop, color, pos);
                    assert_eq!(c.len(), 8);
                    assert!(c.values().all(|&v| v == each));
                }
            }
        }
        let cfg = GaddConfig::default();
        let a = init_population(&cfg, &mut rng::stream(5, "init", &[]));
        let b = init_population(&cfg, &mut rng::stream(5, "init", &[]));
        assert_eq!(a, b);
    }

    fn dist(pairs: &[(&str, f64)]) -> ExactDistribution {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn counts(pairs: &[(&str, u64)]) -> OutcomeDistribution {
        let mut d = OutcomeDistribution::default();
        for &(k, n) in pairs {
            d.add(k.to_string(), n);
        }
        d
    }

    #[test]
    fn utility_values() {
        let target = UtilityTarget::OneNorm { clbits: vec![0], dist: dist(&[("0", 1.0)]) };
        assert_eq!(evaluate_utility(&counts(&[("0", 10)]), &target).unwrap(), 1.0);
        assert!((evaluate_utility(&counts(&[("0", 5), ("1", 5)]), &target).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(evaluate_utility(&counts(&[("1", 7)]), &target).unwrap(), 0.0);
        assert!(matches!(evaluate_utility(&OutcomeDistribution::default(), &target), Err(GaddError::ShotCountZero)));
        let surv = UtilityTarget::UnitarySurvival { clbits: vec![0, 1] };
        let f = evaluate_utility(&counts(&[("00", 6), ("01", 2), ("11", 2)]), &surv).unwrap();
        // bit 0 is zero in 8/10, bit 1 in 6/10
        assert!((f - 0.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_roulette() {
        let mut u = vec![0.0; 16];
        u[0] = 1.0;
        let pairs = select_parents(&u, 100, Selection::Proportional, &mut rng::stream(0, "s", &[]));
        assert!(pairs.iter().all(|&p| p == (0, 0)));
        let zero = select_parents(&[0.0; 4], 400, Selection::Proportional, &mut rng::stream(0, "s", &[]));
        let mut seen = [0usize; 4];
        for (a, b) in zero {
            seen[a] += 1;
            seen[b] += 1;
        }
        assert!(seen.iter().all(|&c| c > 100));
    }

    #[test]
    fn uniform_utilities_select_uniformly() {
        let n = 16;
        let draws = 10_000;
        let pairs = select_parents(&vec![0.7; n], draws / 2, Selection::Proportional, &mut rng::stream(3, "s", &[]));
        let mut obs = vec![0.0; n];
        for (a, b) in pairs {
            obs[a] += 1.0;
            obs[b] += 1.0;
        }
        let exp = draws as f64 / n as f64;
        let chi2: f64 = obs.iter().map(|o| (o - exp).powi(2) / exp).sum();
        // 15 dof: mean 15, sd √30; 3σ above the mean
        assert!(chi2 < 15.0 + 3.0 * 30f64.sqrt(), "chi2 = {chi2}");
    }

    #[test]
    fn rank_selection_prefers_better() {
        let pairs = select_parents(&[0.1, 0.9, 0.5], 3000, Selection::Rank, &mut rng::stream(2, "s", &[]));
        let mut seen = [0usize; 3];
        for (a, b) in pairs {
            seen[a] += 1;
            seen[b] += 1;
        }
        assert!(seen[1] > seen[2] && seen[2] > seen[0]);
    }

    fn seq(text: &str) -> DdSequence {
        DdSequence::parse(text).unwrap()
    }

    #[test]
    fn crossover_edges() {
        let a = seq("X_p X_p X_p X_p");
        let b = seq("Y_m Y_m Y_m Y_m");
        assert_eq!(crossover(&a, &b, 4), (a.clone(), b.clone()));
        assert_eq!(crossover(&a, &b, 1).0, seq("X_p Y_m Y_m Y_m"));
        let cfg = GaddConfig { mutation_rate: 0.0, ..Default::default() };
        let pop = init_population(&cfg, &mut rng::stream(0, "i", &[]));
        let kids = reproduce(&pop.strategies, &[(3, 3); 5], &cfg, &mut rng::stream(0, "r", &[]));
        assert!(kids.iter().all(|k| *k == pop.strategies[3]));
    }

    #[test]
    fn full_mutation_is_uniform() {
        let cfg = GaddConfig { mutation_rate: 1.0, ..Default::default() };
        let pop = init_population(&cfg, &mut rng::stream(0, "i", &[]));
        let pairs: Vec<_> = (0..500).map(|i| (i % 16, (i + 1) % 16)).collect();
        let kids = reproduce(&pop.strategies, &pairs, &cfg, &mut rng::stream(1, "r", &[]));
        let mut tally = BTreeMap::new();
        for k in &kids {
            for s in &k.sequences {
                for p in &s.pulses {
                    *tally.entry(*p).or_insert(0.0) += 1.0;
                }
            }
        }
        let total: f64 = tally.values().sum();
        let exp = total / 8.0;
        let chi2: f64 = tally.values().map(|o| (o - exp).powi(2) / exp).sum();
        assert_eq!(tally.len(), 8);
        assert!(chi2 < 7.0 + 3.0 * 14f64.sqrt(), "chi2 = {chi2}");
    }

    #[test]
    fn survivors_break_ties_by_index() {
        assert_eq!(survivors(&[0.5, 0.9, 0.5, 0.9, 0.1], 3), vec![1, 3, 0]);
    }

    #[test]
    fn config_validation() {
        assert!(GaddConfig::default().validate().is_ok());
        assert!(GaddConfig { n: 1, ..Default::default() }.validate().is_err());
        assert!(GaddConfig { shots_per_circuit: 0, ..Default::default() }.validate().is_err());
        let json = serde_json::to_string(&GaddConfig::default()).unwrap();
        assert!(json.contains("\"L\":8") && json.contains("\"N\":16"));
    }

    proptest! {
        #[test]
        fn survival_keeps_the_best(u in prop::collection::vec(0.0f64..1.0, 3..48), n in 1usize..20) {
            let keep = survivors(&u, n);
            prop_assert_eq!(keep.len(), n.min(u.len()));
            let best = u.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(u[keep[0]], best);
            let worst_kept = keep.iter().map(|&i| u[i]).fold(f64::MAX, f64::min);
            for (i, &f) in u.iter().enumerate() {
                if !keep.contains(&i) {
                    prop_assert!(f <= worst_kept);
                }
            }
        }

        #[test]
        fn one_norm_in_unit_interval(a in prop::collection::vec(0u64..20, 4), b in prop::collection::vec(0.0f64..1.0, 4)) {
            prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<f64>() > 0.0);
            let keys = ["00", "01", "10", "11"];
            let mut obs = OutcomeDistribution::default();
            for (k, &n) in keys.iter().zip(&a) {
                if n > 0 { obs.add(k.to_string(), n); }
            }
            let z: f64 = b.iter().sum();
            let target: ExactDistribution = keys.iter().zip(&b).map(|(k, v)| (k.to_string(), v / z)).collect();
            let f = evaluate_utility(&obs, &UtilityTarget::OneNorm { clbits: vec![0, 1], dist: target.clone() }).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            let same = evaluate_utility(&obs, &UtilityTarget::OneNorm { clbits: vec![0, 1], dist: obs.probabilities() }).unwrap();
            prop_assert!((same - 1.0).abs() < 1e-12);
        }
    }
}
