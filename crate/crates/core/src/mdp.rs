//! Finite Markov decision processes, environment simulation and the
//! value-iteration oracle.
//!
//! States and actions are dense indices. Rewards are paid on transitions:
//! taking `a` in `s` and landing in `s'` pays `reward(s, a, s')`, which is the
//! `R_{t+1}` of the return `G_t = sum_k gamma^k R_{t+k+1}`.
//!
//! Terminal states self-loop with probability one and pay nothing, under every
//! action. [`MdpBuilder::build`] fills in that row when it is left empty and
//! rejects anything else.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on transition-row and start-distribution sums.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Two action values closer than this are treated as tied by the oracle, so
/// accumulated rounding in value iteration does not pick between equally good
/// actions.
pub const ORACLE_TIE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    // Row-major [s][a][s'].
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
    start_dist: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MdpBuilder {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
    start_dist: Vec<f64>,
}

impl MdpBuilder {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        let cube = n_states * n_actions * n_states;
        MdpBuilder {
            n_states,
            n_actions,
            transition: vec![0.0; cube],
            reward: vec![0.0; cube],
            gamma,
            terminal: vec![false; n_states],
            start_dist: vec![0.0; n_states],
        }
    }

    fn check(&self, s: usize, a: usize, next: usize) -> Result<usize> {
        if s >= self.n_states || next >= self.n_states || a >= self.n_actions {
            return Err(Error::Index(format!(
                "(s={s}, a={a}, s'={next}) outside {}x{}",
                self.n_states, self.n_actions
            )));
        }
        Ok((s * self.n_actions + a) * self.n_states + next)
    }

    pub fn transition(&mut self, s: usize, a: usize, next: usize, p: f64) -> Result<&mut Self> {
        let i = self.check(s, a, next)?;
        self.transition[i] = p;
        Ok(self)
    }

    pub fn reward(&mut self, s: usize, a: usize, next: usize, r: f64) -> Result<&mut Self> {
        let i = self.check(s, a, next)?;
        self.reward[i] = r;
        Ok(self)
    }

    pub fn terminal(&mut self, s: usize) -> Result<&mut Self> {
        if s >= self.n_states {
            return Err(Error::Index(format!("terminal state {s}")));
        }
        self.terminal[s] = true;
        Ok(self)
    }

    pub fn start(&mut self, s: usize, p: f64) -> Result<&mut Self> {
        if s >= self.n_states {
            return Err(Error::Index(format!("start state {s}")));
        }
        self.start_dist[s] = p;
        Ok(self)
    }

    pub fn build(&self) -> Result<Mdp> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::Validation(
                "states and actions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        let mut transition = self.transition.clone();
        for s in 0..ns {
            for a in 0..na {
                let base = (s * na + a) * ns;
                let row = &mut transition[base..base + ns];
                if let Some((next, p)) = row
                    .iter()
                    .enumerate()
                    .find(|(_, p)| !p.is_finite() || **p < 0.0)
                {
                    return Err(Error::Validation(format!(
                        "negative or non-finite probability {p} at (s={s}, a={a}, s'={next})"
                    )));
                }
                if let Some(r) = self.reward[base..base + ns].iter().find(|r| !r.is_finite()) {
                    return Err(Error::Validation(format!(
                        "non-finite reward {r} at (s={s}, a={a})"
                    )));
                }
                if self.terminal[s] {
                    if row.iter().all(|p| *p == 0.0) {
                        row[s] = 1.0;
                    }
                    let self_loop = row
                        .iter()
                        .enumerate()
                        .all(|(next, p)| *p == if next == s { 1.0 } else { 0.0 });
                    if !self_loop {
                        return Err(Error::Validation(format!(
                            "terminal state {s} must self-loop under action {a}"
                        )));
                    }
                    if self.reward[base..base + ns].iter().any(|r| *r != 0.0) {
                        return Err(Error::Validation(format!(
                            "terminal state {s} must pay zero reward under action {a}"
                        )));
                    }
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::Validation(format!(
                        "row sum of transition(s={s}, a={a}) is {sum}, expected 1"
                    )));
                }
            }
        }
        if let Some(p) = self.start_dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Validation(format!(
                "negative or non-finite start probability {p}"
            )));
        }
        let start_sum: f64 = self.start_dist.iter().sum();
        if (start_sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Validation(format!(
                "start distribution sums to {start_sum}, expected 1"
            )));
        }
        Ok(Mdp {
            n_states: ns,
            n_actions: na,
            transition,
            reward: self.reward.clone(),
            gamma: self.gamma,
            terminal: self.terminal.clone(),
            start_dist: self.start_dist.clone(),
        })
    }
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Copy of this MDP with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Mdp> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Validation(format!("gamma {gamma} outside [0, 1)")));
        }
        Ok(Mdp {
            gamma,
            ..self.clone()
        })
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.get(s).copied().unwrap_or(false)
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter_map(|(s, t)| t.then_some(s))
    }

    pub fn non_terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter_map(|(s, t)| (!t).then_some(s))
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    fn check_sa(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::Index(format!(
                "state {s} (n_states = {})",
                self.n_states
            )));
        }
        if a >= self.n_actions {
            return Err(Error::Index(format!(
                "action {a} (n_actions = {})",
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Next-state distribution of taking `a` in `s`.
    ///
    /// Panics on out-of-range indices; use [`Mdp::step`] for checked access.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.reward[base..base + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward_row(s, a)[next]
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.start_dist, rng)
    }

    /// Samples a successor of `(s, a)` and the reward paid on that transition.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(usize, f64)> {
        self.check_sa(s, a)?;
        if self.terminal[s] {
            return Err(Error::TerminalState(s));
        }
        let next = sample_index(self.transition_row(s, a), rng);
        Ok((next, self.reward(s, a, next)))
    }

    /// Expected one-step backup `sum_s' T(s'|s,a) [R(s,a,s') + gamma v(s')]`.
    pub fn backup(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(self.reward_row(s, a))
            .zip(values)
            .filter(|((p, _), _)| **p > 0.0)
            .map(|((p, r), v)| p * (r + self.gamma * v))
            .sum()
    }

    /// Actions whose backup is within [`ORACLE_TIE_TOL`] of the best one.
    pub fn optimal_actions(&self, s: usize, values: &[f64]) -> Vec<usize> {
        let q: Vec<f64> = (0..self.n_actions)
            .map(|a| self.backup(s, a, values))
            .collect();
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.n_actions)
            .filter(|&a| q[a] >= best - ORACLE_TIE_TOL)
            .collect()
    }
}

/// Draws an index from a probability vector by inverse CDF. One uniform draw
/// per call, so callers can reason about random-stream alignment.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub steps: Vec<Step>,
    pub final_state: usize,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    /// Successor of step `t`.
    pub fn next_state(&self, t: usize) -> usize {
        self.steps
            .get(t + 1)
            .map_or(self.final_state, |step| step.state)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Runs one episode from a start state drawn from the start distribution,
/// stopping at a terminal state or after `max_len` steps.
pub fn generate_episode<R, P>(mdp: &Mdp, mut policy: P, rng: &mut R, max_len: usize) -> Result<Episode>
where
    R: Rng + ?Sized,
    P: FnMut(usize, &mut R) -> usize,
{
    if max_len == 0 {
        return Err(Error::param("mdp", "max_len must be at least 1"));
    }
    let mut s = mdp.sample_start(rng);
    let mut steps = Vec::new();
    while !mdp.is_terminal(s) && steps.len() < max_len {
        let a = policy(s, rng);
        let (next, r) = mdp.step(s, a, rng)?;
        steps.push(Step {
            state: s,
            action: a,
            reward: r,
        });
        s = next;
    }
    Ok(Episode {
        steps,
        final_state: s,
    })
}

/// `sum_{k=0}^{n-t-1} gamma^k rewards[t+k]`.
pub fn discounted_return(rewards: &[f64], gamma: f64, t: usize) -> Result<f64> {
    if t >= rewards.len() {
        return Err(Error::Index(format!(
            "return index {t} for {} rewards",
            rewards.len()
        )));
    }
    Ok(rewards[t..].iter().rev().fold(0.0, |g, r| r + gamma * g))
}

/// All returns `G_0..G_{n-1}` in one backward pass.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[t] = g;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    /// Sup-norm Bellman residual of `values`.
    pub residual: f64,
    pub iterations: usize,
}

impl ValueSolution {
    /// Non-terminal states with exactly one optimal action, paired with it.
    pub fn unique_optimal_actions(&self, mdp: &Mdp) -> Vec<(usize, usize)> {
        mdp.non_terminals()
            .filter_map(|s| match mdp.optimal_actions(s, &self.values)[..] {
                [a] => Some((s, a)),
                _ => None,
            })
            .collect()
    }
}

/// Bellman optimality iteration until the sup-norm residual drops below
/// `tol`. Terminal states are pinned at zero. The returned policy is greedy
/// in the returned values, ties going to the lowest action index.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> Result<ValueSolution> {
    if !(tol > 0.0) {
        return Err(Error::param("mdp", format!("tolerance {tol} must be positive")));
    }
    let ns = mdp.n_states();
    let mut values = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut iterations = 0;
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                (0..mdp.n_actions())
                    .map(|a| mdp.backup(s, a, &values))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            residual = residual.max((next[s] - values[s]).abs());
        }
        if residual < tol {
            let policy = (0..ns)
                .map(|s| {
                    if mdp.is_terminal(s) {
                        0
                    } else {
                        mdp.optimal_actions(s, &values)[0]
                    }
                })
                .collect();
            return Ok(ValueSolution {
                values,
                policy,
                residual,
                iterations,
            });
        }
        std::mem::swap(&mut values, &mut next);
        iterations += 1;
    }
}


#[cfg(test)]
pub(crate) mod oracle {
    use super::Mdp;

    /// Exact policy evaluation: solves (I - gamma P_pi) v = r_pi by Gaussian
    /// elimination with partial pivoting, terminals pinned at zero.
    pub fn evaluate_policy(mdp: &Mdp, policy: &[usize]) -> Vec<f64> {
        let n = mdp.n_states();
        let mut a = vec![vec![0.0; n + 1]; n];
        for s in 0..n {
            a[s][s] = 1.0;
            if mdp.is_terminal(s) {
                continue;
            }
            let act = policy[s];
            for next in 0..n {
                let p = mdp.transition_row(s, act)[next];
                a[s][next] -= mdp.gamma() * p;
                a[s][n] += p * mdp.reward(s, act, next);
            }
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..n).map(|s| a[s][n] / a[s][s]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn deterministic_step() {
        let mut b = MdpBuilder::new(3, 1, 0.9);
        b.terminal(2).unwrap().start(0, 1.0).unwrap();
        b.transition(0, 0, 2, 1.0).unwrap().reward(0, 0, 2, 1.0).unwrap();
        b.transition(1, 0, 2, 1.0).unwrap();
        let mdp = b.build().unwrap();
        let mut rng = rng_from_seed(1);
        assert_eq!(mdp.step(0, 0, &mut rng).unwrap(), (2, 1.0));
    }

    #[test]
    fn step_rejects_terminal_and_bad_indices() {
        let mdp = chain3(0.9);
        let mut rng = rng_from_seed(1);
        assert_eq!(mdp.step(2, 0, &mut rng), Err(Error::TerminalState(2)));
        assert!(matches!(mdp.step(3, 0, &mut rng), Err(Error::Index(_))));
        assert!(matches!(mdp.step(0, 2, &mut rng), Err(Error::Index(_))));
    }

    #[test]
    fn step_frequency_matches_declared_probability() {
        let mut b = MdpBuilder::new(2, 1, 0.5);
        b.start(0, 1.0).unwrap();
        b.transition(0, 0, 0, 0.3).unwrap().transition(0, 0, 1, 0.7).unwrap();
        b.transition(1, 0, 0, 0.3).unwrap().transition(1, 0, 1, 0.7).unwrap();
        let mdp = b.build().unwrap();
        let mut rng = rng_from_seed(2024);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| mdp.step(0, 0, &mut rng).unwrap().0 == 1)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.7).abs() <= 0.01, "frequency {freq}");
    }

    #[test]
    fn build_validates_rows_and_terminals() {
        let mut b = MdpBuilder::new(2, 1, 0.9);
        b.start(0, 1.0).unwrap();
        b.transition(0, 0, 1, 0.9).unwrap();
        b.terminal(1).unwrap();
        let err = b.build().unwrap_err();
        assert!(err.to_string().contains("row sum"), "{err}");

        let mut b = MdpBuilder::new(2, 1, 0.9);
        b.start(0, 1.0).unwrap().terminal(1).unwrap();
        b.transition(0, 0, 1, 1.0).unwrap();
        b.transition(1, 0, 0, 1.0).unwrap();
        assert!(b.build().unwrap_err().to_string().contains("self-loop"));

        let mut b = MdpBuilder::new(1, 1, 1.0);
        b.start(0, 1.0).unwrap().transition(0, 0, 0, 1.0).unwrap();
        assert!(b.build().is_err());
    }

    #[test]
    fn terminal_rows_are_filled() {
        let mdp = chain3(0.9);
        for a in 0..2 {
            assert_eq!(mdp.transition_row(2, a), &[0.0, 0.0, 1.0]);
            assert_eq!(mdp.reward_row(2, a), &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn one_step_chain_episode() {
        let mut b = MdpBuilder::new(2, 1, 0.9);
        b.start(0, 1.0).unwrap().terminal(1).unwrap();
        b.transition(0, 0, 1, 1.0).unwrap().reward(0, 0, 1, 1.0).unwrap();
        let mdp = b.build().unwrap();
        let ep = generate_episode(&mdp, |_, _| 0, &mut rng_from_seed(0), 100).unwrap();
        assert_eq!(
            ep,
            Episode {
                steps: vec![Step {
                    state: 0,
                    action: 0,
                    reward: 1.0
                }],
                final_state: 1
            }
        );
    }

    #[test]
    fn episode_cap_is_honored() {
        let mut b = MdpBuilder::new(10, 1, 0.9);
        b.start(0, 1.0).unwrap().terminal(9).unwrap();
        for s in 0..9 {
            b.transition(s, 0, s + 1, 1.0).unwrap();
        }
        let mdp = b.build().unwrap();
        let ep = generate_episode(&mdp, |_, _| 0, &mut rng_from_seed(0), 1).unwrap();
        assert_eq!(ep.len(), 1);
        assert_eq!(ep.final_state, 1);
        assert!(generate_episode(&mdp, |_, _| 0, &mut rng_from_seed(0), 0).is_err());
    }

    #[test]
    fn episodes_are_reproducible_and_consistent() {
        let mdp = random_mdp(6, 3, 0.9, &mut rng_from_seed(5));
        let run = |seed| {
            let mut rng = rng_from_seed(seed);
            generate_episode(&mdp, |_, r: &mut crate::rng::SimRng| r.gen_range(0..3), &mut rng, 50)
                .unwrap()
        };
        let a = run(11);
        assert_eq!(a, run(11));
        for t in 0..a.len() {
            let next = a.next_state(t);
            assert!(mdp.transition_row(a.steps[t].state, a.steps[t].action)[next] > 0.0);
        }
        assert!(mdp.is_terminal(a.final_state) || a.len() == 50);
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5, 0).unwrap(), 1.75);
        assert_eq!(discounted_return(&[5.0], 0.9, 0).unwrap(), 5.0);
        assert!(matches!(discounted_return(&[1.0], 0.9, 1), Err(Error::Index(_))));
    }

    #[test]
    fn discounted_return_matches_forward_sum() {
        let mut rng = rng_from_seed(99);
        let rewards: Vec<f64> = (0..20).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let gamma: f64 = 0.87;
        for t in 0..20 {
            let mut naive = 0.0;
            for k in 0..20 - t {
                naive += gamma.powi(k as i32) * rewards[t + k];
            }
            let got = discounted_return(&rewards, gamma, t).unwrap();
            assert!((got - naive).abs() <= 1e-12, "t={t}: {got} vs {naive}");
        }
        let all = discounted_returns(&rewards, gamma);
        for t in 0..20 {
            assert_eq!(all[t], discounted_return(&rewards, gamma, t).unwrap());
        }
    }

    proptest! {
        #[test]
        fn discounted_return_is_recursive(
            rewards in prop::collection::vec(-10.0f64..10.0, 2..30),
            gamma in 0.0f64..0.999,
        ) {
            for t in 0..rewards.len() - 1 {
                let lhs = discounted_return(&rewards, gamma, t).unwrap();
                let rhs = rewards[t] + gamma * discounted_return(&rewards, gamma, t + 1).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            }
        }

        #[test]
        fn random_rows_sum_to_one(seed in any::<u64>(), ns in 2usize..8, na in 1usize..4) {
            let mdp = random_mdp(ns, na, 0.9, &mut rng_from_seed(seed));
            for s in 0..ns {
                for a in 0..na {
                    let sum: f64 = mdp.transition_row(s, a).iter().sum();
                    prop_assert!((sum - 1.0).abs() <= PROB_SUM_TOL);
                }
            }
        }
    }

    #[test]
    fn value_iteration_on_chain() {
        let sol = value_iteration(&chain3(0.9), 1e-12).unwrap();
        assert!((sol.values[1] - 1.0).abs() < 1e-10);
        assert!((sol.values[0] - 0.9).abs() < 1e-10);
        assert_eq!(sol.values[2], 0.0);
        assert_eq!(&sol.policy[..2], &[0, 0]);
    }

    #[test]
    fn value_iteration_zero_rewards() {
        let mut b = MdpBuilder::new(3, 2, 0.9);
        b.start(0, 1.0).unwrap().terminal(2).unwrap();
        for s in 0..2 {
            b.transition(s, 0, s + 1, 1.0).unwrap();
            b.transition(s, 1, 0, 1.0).unwrap();
        }
        let sol = value_iteration(&b.build().unwrap(), 1e-9).unwrap();
        assert_eq!(sol.values, vec![0.0; 3]);
        assert_eq!(sol.policy, vec![0; 3]);
        assert!(value_iteration(&chain3(0.9), 0.0).is_err());
    }

    #[test]
    fn value_iteration_matches_linear_solve() {
        let mut rng = rng_from_seed(8);
        let mdp = random_mdp(8, 3, 0.9, &mut rng);
        let sol = value_iteration(&mdp, 1e-10).unwrap();
        let exact = oracle::evaluate_policy(&mdp, &sol.policy);
        for s in 0..8 {
            assert!((sol.values[s] - exact[s]).abs() < 1e-6, "s={s}");
        }
        for s in mdp.non_terminals() {
            let best = (0..3)
                .map(|a| mdp.backup(s, a, &sol.values))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - sol.values[s]).abs() < 1e-10);
        }
    }
}
