//! REINFORCE and one-step actor-critic over a softmax-linear policy and a
//! linear critic.

use crate::approx::{FeatureMap, LinearValueFn, OneHot, SoftmaxPolicy};
use crate::error::{Error, Result};
use crate::mdp::{discounted_returns, generate_episode, Episode, Mdp};
use crate::rng::{rng_from_seed, SimRng};
use crate::EpisodeStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcHyper {
    /// Actor step size.
    pub alpha: f64,
    /// Critic step size.
    pub beta: f64,
    pub gamma: f64,
    /// Episode step cap.
    pub t_cap: usize,
}

impl AcHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::param("pg_algos", msg));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha {} must be positive", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta {} must be positive", self.beta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.t_cap == 0 {
            return bad("t_cap must be positive".into());
        }
        Ok(())
    }
}

/// One observed environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
    pub next_terminal: bool,
}

/// `delta = r + gamma v(s') 1[s' not terminal] - v(s)`.
pub fn td_error(
    r: f64,
    gamma: f64,
    v: &LinearValueFn,
    fm: &dyn FeatureMap,
    s: usize,
    next: usize,
    next_terminal: bool,
) -> Result<f64> {
    if !r.is_finite() || !gamma.is_finite() {
        return Err(Error::numeric("pg_algos", format!("reward {r}, gamma {gamma}")));
    }
    let bootstrap = if next_terminal { 0.0 } else { v.value(fm, next) };
    let delta = r + gamma * bootstrap - v.value(fm, s);
    if !delta.is_finite() {
        return Err(Error::numeric("pg_algos", "TD error is not finite"));
    }
    Ok(delta)
}

/// Monte Carlo policy-gradient update from one finished episode:
/// `theta += alpha gamma^t G_t grad log pi(A_t|S_t)` for every step.
///
/// Returns and score gradients are all taken from the policy that generated
/// the episode; the increments are summed and applied after the loop.
pub fn reinforce_update(
    p: &mut SoftmaxPolicy,
    fm: &dyn FeatureMap,
    episode: &Episode,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    if episode.is_empty() {
        return Err(Error::input("pg_algos", "REINFORCE needs a non-empty episode"));
    }
    let returns = discounted_returns(&episode.rewards(), gamma);
    let frozen = p.clone();
    let mut discount = 1.0;
    for (step, g) in episode.steps.iter().zip(returns) {
        let grad = frozen.log_prob_grad(fm, step.state, step.action);
        p.theta.add_scaled(alpha * discount * g, &grad)?;
        discount *= gamma;
    }
    if !p.theta.is_finite() {
        return Err(Error::numeric("pg_algos", "policy parameters diverged"));
    }
    Ok(())
}

/// One actor-critic step, in this order: TD error from the current critic,
/// critic update, actor update, then `I <- gamma I`. Returns `(delta, I')`.
pub fn actor_critic_step(
    p: &mut SoftmaxPolicy,
    v: &mut LinearValueFn,
    fm: &dyn FeatureMap,
    tr: &Transition,
    i: f64,
    hyper: &AcHyper,
) -> Result<(f64, f64)> {
    if !(i > 0.0) {
        return Err(Error::param("pg_algos", format!("I = {i} must be positive")));
    }
    let delta = td_error(tr.reward, hyper.gamma, v, fm, tr.state, tr.next, tr.next_terminal)?;
    let v_grad = v.grad(fm, tr.state);
    v.add_scaled(hyper.beta * delta, &v_grad);
    let lp_grad = p.log_prob_grad(fm, tr.state, tr.action);
    p.theta.add_scaled(hyper.alpha * i * delta, &lp_grad)?;
    Ok((delta, hyper.gamma * i))
}

/// Progress notifications from the training loops.
#[derive(Debug)]
pub enum TrainEvent<'a> {
    /// After the parameters have absorbed a step.
    Step {
        episode: usize,
        t: usize,
        transition: &'a Transition,
        delta: f64,
        policy: &'a SoftmaxPolicy,
        value: &'a LinearValueFn,
    },
    EpisodeEnd(&'a EpisodeStats),
}

pub fn train_actor_critic(
    mdp: &Mdp,
    hyper: &AcHyper,
    episodes: usize,
    seed: u64,
) -> Result<(SoftmaxPolicy, LinearValueFn)> {
    let fm = OneHot::new(mdp.n_states());
    let p = SoftmaxPolicy::zeros(mdp.n_actions(), fm.dim());
    let v = LinearValueFn::zeros(fm.dim());
    train_actor_critic_with(mdp, &fm, hyper, episodes, seed, (p, v), |_| {})
}

/// Actor-critic from the given initial parameters. `I` restarts at 1 every
/// episode; episodes end at a terminal state or after `hyper.t_cap` steps.
pub fn train_actor_critic_with<F>(
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    hyper: &AcHyper,
    episodes: usize,
    seed: u64,
    init: (SoftmaxPolicy, LinearValueFn),
    mut observe: F,
) -> Result<(SoftmaxPolicy, LinearValueFn)>
where
    F: FnMut(TrainEvent<'_>),
{
    hyper.validate()?;
    let mut rng = rng_from_seed(seed);
    let (mut p, mut v) = init;
    for episode in 0..episodes {
        let mut s = mdp.sample_start(&mut rng);
        let mut i = 1.0;
        let mut stats = EpisodeStats::new(episode);
        while !mdp.is_terminal(s) && stats.length < hyper.t_cap {
            let a = p.sample(fm, s, &mut rng);
            let (next, r) = mdp.step(s, a, &mut rng)?;
            let tr = Transition {
                state: s,
                action: a,
                reward: r,
                next,
                next_terminal: mdp.is_terminal(next),
            };
            let (delta, i_next) = actor_critic_step(&mut p, &mut v, fm, &tr, i, hyper)?;
            observe(TrainEvent::Step {
                episode,
                t: stats.length,
                transition: &tr,
                delta,
                policy: &p,
                value: &v,
            });
            stats.record(r, delta);
            i = i_next;
            s = next;
        }
        observe(TrainEvent::EpisodeEnd(&stats));
    }
    Ok((p, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforceConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub seed: u64,
    pub t_cap: usize,
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::param("pg_algos", format!("alpha {} must be positive", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::param("pg_algos", format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.t_cap == 0 {
            return Err(Error::param("pg_algos", "t_cap must be positive"));
        }
        Ok(())
    }
}

pub fn train_reinforce(mdp: &Mdp, cfg: &ReinforceConfig) -> Result<SoftmaxPolicy> {
    let fm = OneHot::new(mdp.n_states());
    let p = SoftmaxPolicy::zeros(mdp.n_actions(), fm.dim());
    train_reinforce_with(mdp, &fm, cfg, p, |_| {})
}

pub fn train_reinforce_with<F>(
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    cfg: &ReinforceConfig,
    init: SoftmaxPolicy,
    mut observe: F,
) -> Result<SoftmaxPolicy>
where
    F: FnMut(&EpisodeStats),
{
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut p = init;
    for index in 0..cfg.episodes {
        let episode = {
            let policy = &p;
            generate_episode(
                mdp,
                |s, r: &mut SimRng| policy.sample(fm, s, r),
                &mut rng,
                cfg.t_cap,
            )?
        };
        let mut stats = EpisodeStats::new(index);
        for step in &episode.steps {
            stats.record(step.reward, 0.0);
        }
        if !episode.is_empty() {
            reinforce_update(&mut p, fm, &episode, cfg.alpha, cfg.gamma)?;
        }
        observe(&stats);
    }
    Ok(p)
}
