//! Tabular Q-learning with epsilon-greedy exploration.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::rng::rng_from_seed;
use crate::EpisodeStats;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::input(
                "tabular_q",
                format!(
                    "{} values for a {n_states}x{n_actions} table",
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("tabular_q", "table entries must be finite"));
        }
        Ok(QTable {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::Index(format!(
                "state {s} for a table with {} states",
                self.n_states
            )));
        }
        Ok(())
    }

    /// Highest-valued action of `s`, lowest index among exact ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    /// Applies one Q-learning backup to `(s, a)`. When `next_terminal` is set
    /// the bootstrap term is taken as zero.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        s: usize,
        a: usize,
        r: f64,
        next: usize,
        alpha: f64,
        gamma: f64,
        next_terminal: bool,
    ) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::numeric("tabular_q", format!("reward {r}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param("tabular_q", format!("alpha {alpha} outside (0, 1]")));
        }
        self.check_state(s)?;
        self.check_state(next)?;
        if a >= self.n_actions {
            return Err(Error::Index(format!("action {a}")));
        }
        let bootstrap = if next_terminal {
            0.0
        } else {
            self.row(next).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let td = r + gamma * bootstrap - self.get(s, a);
        let updated = self.get(s, a) + alpha * td;
        self.set(s, a, updated);
        Ok(td)
    }
}

/// Lowest index of the maximum entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::param(
            "tabular_q",
            format!("epsilon {epsilon} outside [0, 1]"),
        ));
    }
    q.check_state(s)?;
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q.n_actions))
    } else {
        Ok(q.greedy_action(s))
    }
}

pub fn greedy_policy(q: &QTable) -> Vec<usize> {
    (0..q.n_states).map(|s| q.greedy_action(s)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QConfig {
    pub episodes: usize,
    pub alpha: f64,
    /// Overrides the MDP's own discount factor when set.
    pub gamma: Option<f64>,
    pub epsilon: f64,
    pub seed: u64,
    /// Per-episode step cap; `10 * n_states` when unset.
    pub step_cap: Option<usize>,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            episodes: 1000,
            alpha: 0.1,
            gamma: None,
            epsilon: 0.1,
            seed: 0,
            step_cap: None,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param("tabular_q", format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::param(
                "tabular_q",
                format!("epsilon {} outside [0, 1]", self.epsilon),
            ));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::param("tabular_q", format!("gamma {g} outside [0, 1)")));
            }
        }
        if self.step_cap == Some(0) {
            return Err(Error::param("tabular_q", "step cap must be positive"));
        }
        Ok(())
    }
}

pub fn train_q(mdp: &Mdp, cfg: &QConfig) -> Result<QTable> {
    train_q_with(mdp, cfg, QTable::zeros(mdp.n_states(), mdp.n_actions()), |_| {})
}

/// Q-learning from `init`, reporting each finished episode to `observe`.
pub fn train_q_with<F>(mdp: &Mdp, cfg: &QConfig, init: QTable, mut observe: F) -> Result<QTable>
where
    F: FnMut(&EpisodeStats),
{
    cfg.validate()?;
    if init.n_states != mdp.n_states() || init.n_actions != mdp.n_actions() {
        return Err(Error::input("tabular_q", "table shape does not match the MDP"));
    }
    let gamma = cfg.gamma.unwrap_or(mdp.gamma());
    let cap = cfg.step_cap.unwrap_or(10 * mdp.n_states());
    let mut rng = rng_from_seed(cfg.seed);
    let mut q = init;
    for episode in 0..cfg.episodes {
        let mut s = mdp.sample_start(&mut rng);
        let mut stats = EpisodeStats::new(episode);
        while !mdp.is_terminal(s) && stats.length < cap {
            let a = epsilon_greedy(&q, s, cfg.epsilon, &mut rng)?;
            let (next, r) = mdp.step(s, a, &mut rng)?;
            let td = q.update(s, a, r, next, cfg.alpha, gamma, mdp.is_terminal(next))?;
            stats.record(r, td);
            s = next;
        }
        observe(&stats);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::chain3;
    use crate::mdp::{value_iteration, MdpBuilder};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn table(rows: &[&[f64]]) -> QTable {
        let na = rows[0].len();
        QTable::from_values(rows.len(), na, rows.concat()).unwrap()
    }

    #[test]
    fn greedy_selection() {
        let q = table(&[&[0.1, 0.9, 0.3]]);
        let mut rng = rng_from_seed(0);
        assert_eq!(epsilon_greedy(&q, 0, 0.0, &mut rng).unwrap(), 1);
        let tie = table(&[&[0.5, 0.5]]);
        assert_eq!(epsilon_greedy(&tie, 0, 0.0, &mut rng).unwrap(), 0);
        assert!(epsilon_greedy(&q, 0, 1.5, &mut rng).is_err());
        assert!(epsilon_greedy(&q, 0, -0.1, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = table(&[&[0.0, 3.0, 1.0, 2.0]]);
        let mut rng = rng_from_seed(17);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[epsilon_greedy(&q, 0, 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn update_examples() {
        let mut q = QTable::zeros(2, 2);
        q.update(0, 1, 1.0, 1, 0.5, 0.9, false).unwrap();
        assert_eq!(q.get(0, 1), 0.5);

        let mut q = table(&[&[1.0, 0.0], &[1.0, 0.0]]);
        q.update(0, 0, 0.0, 1, 0.1, 0.9, false).unwrap();
        assert!((q.get(0, 0) - 0.99).abs() < 1e-15);

        let mut q = QTable::zeros(3, 2);
        q.update(1, 1, 0.0, 2, 0.3, 0.9, false).unwrap();
        assert_eq!(q, QTable::zeros(3, 2));

        assert!(q.update(0, 0, f64::NAN, 1, 0.1, 0.9, false).is_err());
    }

    #[test]
    fn terminal_bootstrap_is_zero() {
        let mut q = table(&[&[0.0, 0.0], &[10.0, 10.0]]);
        q.update(0, 0, 1.0, 1, 1.0, 0.9, true).unwrap();
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn greedy_policy_examples() {
        assert_eq!(greedy_policy(&table(&[&[3.0, 3.0, 3.0], &[0.0, 5.0, 2.0]])), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn greedy_matches_row_scan(vals in prop::collection::vec(-5i32..5, 12)) {
            let q = QTable::from_values(4, 3, vals.iter().map(|v| *v as f64).collect()).unwrap();
            for (s, a) in greedy_policy(&q).into_iter().enumerate() {
                let row = q.row(s);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let first = (0..3).find(|&i| row[i] == max).unwrap();
                prop_assert_eq!(a, first);
            }
        }

        #[test]
        fn greedy_is_affine_invariant(
            vals in prop::collection::vec(-100.0f64..100.0, 12),
            scale in 0.01f64..50.0,
            shift in -100.0f64..100.0,
        ) {
            let q = QTable::from_values(4, 3, vals.clone()).unwrap();
            let moved = QTable::from_values(4, 3, vals.iter().map(|v| scale * v + shift).collect()).unwrap();
            // Affine maps can merge near-equal entries through rounding; only
            // compare rows with a clear winner.
            for s in 0..4 {
                let mut row = q.row(s).to_vec();
                row.sort_by(|a, b| b.total_cmp(a));
                if row[0] - row[1] > 1e-6 {
                    prop_assert_eq!(q.greedy_action(s), moved.greedy_action(s));
                }
            }
        }

        #[test]
        fn update_touches_one_entry(
            vals in prop::collection::vec(-5.0f64..5.0, 6),
            s in 0usize..3, a in 0usize..2, next in 0usize..3,
            r in -2.0f64..2.0, alpha in 0.01f64..1.0,
        ) {
            let before = QTable::from_values(3, 2, vals).unwrap();
            let mut after = before.clone();
            after.update(s, a, r, next, alpha, 0.9, false).unwrap();
            for si in 0..3 {
                for ai in 0..2 {
                    if (si, ai) != (s, a) {
                        prop_assert_eq!(before.get(si, ai).to_bits(), after.get(si, ai).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn learns_chain_policy() {
        let mdp = chain3(0.9);
        let cfg = QConfig {
            episodes: 5000,
            alpha: 0.1,
            epsilon: 0.1,
            seed: 3,
            ..QConfig::default()
        };
        let q = train_q(&mdp, &cfg).unwrap();
        let opt = value_iteration(&mdp, 1e-10).unwrap();
        let pi = greedy_policy(&q);
        for s in mdp.non_terminals() {
            assert_eq!(pi[s], opt.policy[s]);
        }
        // Terminal rows are never a source state.
        assert_eq!(q.row(2), &[0.0, 0.0]);
        assert_eq!(q, train_q(&mdp, &cfg).unwrap());
    }

    #[test]
    fn zero_episodes_leaves_table() {
        let mdp = chain3(0.9);
        let cfg = QConfig {
            episodes: 0,
            ..QConfig::default()
        };
        assert_eq!(train_q(&mdp, &cfg).unwrap(), QTable::zeros(3, 2));
    }

    #[test]
    fn greedy_optimal_table_is_stable() {
        // Deterministic chain; the exact optimal Q is a fixed point of the
        // backup, so pure greedy training cannot change the greedy policy.
        let mdp = chain3(0.9);
        let sol = value_iteration(&mdp, 1e-14).unwrap();
        let mut values = Vec::new();
        for s in 0..3 {
            for a in 0..2 {
                values.push(if mdp.is_terminal(s) { 0.0 } else { mdp.backup(s, a, &sol.values) });
            }
        }
        let init = QTable::from_values(3, 2, values).unwrap();
        let cfg = QConfig {
            episodes: 200,
            epsilon: 0.0,
            alpha: 0.5,
            ..QConfig::default()
        };
        let trained = train_q_with(&mdp, &cfg, init.clone(), |_| {}).unwrap();
        assert_eq!(greedy_policy(&trained), greedy_policy(&init));
    }

    #[test]
    fn observer_sees_every_episode() {
        let mut b = MdpBuilder::new(2, 1, 0.5);
        b.start(0, 1.0).unwrap().terminal(1).unwrap();
        b.transition(0, 0, 1, 1.0).unwrap().reward(0, 0, 1, 2.0).unwrap();
        let mdp = b.build().unwrap();
        let mut seen = Vec::new();
        let cfg = QConfig {
            episodes: 7,
            ..QConfig::default()
        };
        train_q_with(&mdp, &cfg, QTable::zeros(2, 1), |st| seen.push(st.clone())).unwrap();
        assert_eq!(seen.len(), 7);
        assert!(seen.iter().enumerate().all(|(i, s)| s.index == i && s.length == 1 && s.total_reward == 2.0));
    }
}
