//! GOGAR-A3C: a population of participant units trained through pairwise
//! interactions.
//!
//! Every unit holds a policy and a value function. In each round a random
//! number of interactions is sampled; in each one, one unit acts in the
//! environment with its own policy while another critiques the actions with
//! its own value function. The critic's value parameters and the actor's
//! policy parameters are updated from the critic's TD error.
//!
//! Interactions can also be recorded as scorekeeping games: the actor
//! commits to and claims entitlement to each state-action counter it plays,
//! and the critic challenges the claim whenever the TD error is negative.
//! Reading negative advantage as a refused claim is an application choice
//! layered on top of the learning rule.

use std::collections::BTreeSet;

use log::{debug, info};
use parking_lot::Mutex;
use rand::Rng;

use crate::a3c::GradientAccumulator;
use crate::approx::{FeatureMap, LinearValueFn, Matrix, OneHot, SoftmaxPolicy};
use crate::bridge::{to_gogar_universe, PolicyToken, TokenGraph};
use crate::error::{Error, Result};
use crate::gogar::{write_section, CounterUniverse, GameState, ParticipantId, Token};
use crate::mdp::Mdp;
use crate::pg::{td_error, AcHyper, Transition};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantUnit {
    pub id: ParticipantId,
    pub policy: SoftmaxPolicy,
    pub value: LinearValueFn,
    pub interaction_count: u64,
}

impl ParticipantUnit {
    /// Unit `pu<index>` with zero parameters.
    pub fn new(index: usize, n_actions: usize, dim: usize) -> Self {
        ParticipantUnit {
            id: Token::new(format!("pu{index}")).expect("unit ids are tokens"),
            policy: SoftmaxPolicy::zeros(n_actions, dim),
            value: LinearValueFn::zeros(dim),
            interaction_count: 0,
        }
    }
}

/// Ordered (actor, critic) pairs of population indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionPlan {
    pub pairs: Vec<(usize, usize)>,
    pub t_max: usize,
}

/// `C(n, 2)`.
pub fn max_interactions(population_size: usize) -> usize {
    population_size * population_size.saturating_sub(1) / 2
}

/// Draws the number of interactions uniformly from `0..=C(n, 2)`, then for
/// each one an actor uniformly from the population and a critic uniformly
/// from the rest.
pub fn sample_interactions<R: Rng + ?Sized>(
    population_size: usize,
    rng: &mut R,
    t_max: usize,
) -> Result<InteractionPlan> {
    if population_size < 2 {
        return Err(Error::Population(format!(
            "need at least 2 participant units, got {population_size}"
        )));
    }
    if t_max == 0 {
        return Err(Error::param("gogar_a3c", "t_max must be positive"));
    }
    let n = rng.gen_range(0..=max_interactions(population_size));
    let pairs = (0..n)
        .map(|_| {
            let actor = rng.gen_range(0..population_size);
            let mut critic = rng.gen_range(0..population_size - 1);
            if critic >= actor {
                critic += 1;
            }
            (actor, critic)
        })
        .collect();
    Ok(InteractionPlan { pairs, t_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Parameters change after every step.
    #[default]
    InPlace,
    /// Steps are accumulated and applied once when the interaction ends.
    Accumulate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub t: usize,
    pub transition: Transition,
    pub delta: f64,
}

/// What happened in one interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub actor: ParticipantId,
    pub critic: ParticipantId,
    pub steps: Vec<StepEvent>,
    pub total_reward: f64,
}

impl Interaction {
    pub fn td_abs_sum(&self) -> f64 {
        self.steps.iter().map(|e| e.delta.abs()).sum()
    }
}

/// Runs one interaction from a fresh start state for at most `t_max` steps.
///
/// Locks are held one at a time: the actor's to pick an action, the
/// critic's for the TD error and value update, the actor's again for the
/// policy update. `I` starts at 1.
#[allow(clippy::too_many_arguments)]
pub fn interaction_thread<R: Rng + ?Sized>(
    actor: &Mutex<ParticipantUnit>,
    critic: &Mutex<ParticipantUnit>,
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    hyper: &AcHyper,
    t_max: usize,
    mode: UpdateMode,
    rng: &mut R,
) -> Result<Interaction> {
    let actor_id = actor.lock().id.clone();
    if std::ptr::eq(actor, critic) || critic.lock().id == actor_id {
        return Err(Error::Role {
            module: "gogar_a3c",
            msg: format!("`{actor_id}` cannot be both actor and critic"),
        });
    }
    let critic_id = critic.lock().id.clone();
    if t_max == 0 {
        return Err(Error::param("gogar_a3c", "t_max must be positive"));
    }

    let mut acc = match mode {
        UpdateMode::InPlace => None,
        UpdateMode::Accumulate => Some(GradientAccumulator::new(mdp.n_actions(), fm.dim())),
    };
    let mut out = Interaction {
        actor: actor_id,
        critic: critic_id,
        steps: Vec::new(),
        total_reward: 0.0,
    };
    let mut s = mdp.sample_start(rng);
    let mut i = 1.0;
    while !mdp.is_terminal(s) && out.steps.len() < t_max {
        let a = actor.lock().policy.sample(fm, s, rng);
        let (next, r) = mdp.step(s, a, rng)?;
        let tr = Transition {
            state: s,
            action: a,
            reward: r,
            next,
            next_terminal: mdp.is_terminal(next),
        };
        let (delta, v_grad) = {
            let mut c = critic.lock();
            let delta = td_error(r, hyper.gamma, &c.value, fm, s, next, tr.next_terminal)?;
            let v_grad = c.value.grad(fm, s);
            if acc.is_none() {
                c.value.add_scaled(hyper.beta * delta, &v_grad);
            }
            (delta, v_grad)
        };
        {
            let mut p = actor.lock();
            let lp_grad = p.policy.log_prob_grad(fm, s, a);
            match acc.as_mut() {
                None => p.policy.theta.add_scaled(hyper.alpha * i * delta, &lp_grad)?,
                Some(acc) => acc.accumulate(delta, &v_grad, &lp_grad, i, hyper.alpha, hyper.beta)?,
            }
        }
        out.steps.push(StepEvent {
            t: out.steps.len(),
            transition: tr,
            delta,
        });
        out.total_reward += r;
        i *= hyper.gamma;
        s = next;
    }
    if let Some(acc) = acc {
        critic.lock().value.add_scaled(1.0, &acc.d_w);
        actor.lock().policy.theta.add_scaled(1.0, &acc.d_theta)?;
    }
    for unit in [actor, critic] {
        let mut u = unit.lock();
        if !(u.policy.theta.is_finite() && u.value.w.iter().all(|x| x.is_finite())) {
            return Err(Error::numeric("gogar_a3c", format!("parameters of `{}` diverged", u.id)));
        }
        u.interaction_count += 1;
    }
    Ok(out)
}

fn state_action_counter(tr: &Transition) -> Token {
    PolicyToken::new(tr.state, tr.action).counter_id()
}

/// Scores one interaction, returning the game and, for each step, the log
/// position where its moves begin.
fn score(interaction: &Interaction, universe: &CounterUniverse) -> Result<(GameState, Vec<usize>)> {
    let (actor, critic) = (&interaction.actor, &interaction.critic);
    let mut game = GameState::new(universe.clone());
    game.join(actor.clone())?;
    game.join(critic.clone())?;
    let mut marks = Vec::with_capacity(interaction.steps.len());
    for ev in &interaction.steps {
        marks.push(game.move_log().len());
        let c = state_action_counter(&ev.transition);
        game.register(actor, c.clone())?;
        game.commit(actor, &c)?;
        game.entitle(actor, &c)?;
        if ev.delta < 0.0 {
            game.challenge(critic, actor, &c)?;
        }
    }
    Ok((game, marks))
}

/// Per step, the actor commits to `x_<s>_<a>` and entitles it; if the TD
/// error is negative the critic challenges it. Counters missing from
/// `universe` are registered on the spot, which the log flags.
pub fn scorekeeping_trace(interaction: &Interaction, universe: &CounterUniverse) -> Result<GameState> {
    score(interaction, universe).map(|(g, _)| g)
}

/// A scored interaction together with the universe it started from.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTrace {
    pub round: usize,
    pub pair: usize,
    pub universe: CounterUniverse,
    pub interaction: Interaction,
    pub game: GameState,
    step_marks: Vec<usize>,
}

impl InteractionTrace {
    pub fn new(round: usize, pair: usize, universe: CounterUniverse, interaction: Interaction) -> Result<Self> {
        let (game, step_marks) = score(&interaction, &universe)?;
        Ok(InteractionTrace {
            round,
            pair,
            universe,
            interaction,
            game,
            step_marks,
        })
    }

    /// Trace-file section with one `# meta step` line per step.
    pub fn to_text(&self) -> String {
        let notes: Vec<(usize, String)> = self
            .interaction
            .steps
            .iter()
            .zip(&self.step_marks)
            .map(|(ev, pos)| {
                let tr = &ev.transition;
                (
                    *pos,
                    format!(
                        "round {} pair {} step {} state {} action {} reward {:e} delta {:e}",
                        self.round, self.pair, ev.t, tr.state, tr.action, tr.reward, ev.delta
                    ),
                )
            })
            .collect();
        let label = format!(
            "round {} pair {} actor {} critic {}",
            self.round, self.pair, self.interaction.actor, self.interaction.critic
        );
        write_section(&label, &self.universe, &self.game, &notes)
    }
}

/// Bridge universe of the unit's greedy policy.
pub fn greedy_universe(unit: &ParticipantUnit, mdp: &Mdp, fm: &dyn FeatureMap, tag: &str) -> Result<CounterUniverse> {
    let policy: Vec<Option<usize>> = unit
        .policy
        .greedy_policy(fm, mdp.n_states())
        .into_iter()
        .map(Some)
        .collect();
    Ok(to_gogar_universe(&TokenGraph::from_policy(mdp, &policy, tag)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GogarA3cConfig {
    pub population_size: usize,
    pub hyper: AcHyper,
    pub t_max: usize,
    pub rounds: usize,
    pub seed: u64,
    pub trace: bool,
    /// Run the interactions of a round on separate threads.
    pub concurrent: bool,
    pub mode: UpdateMode,
}

impl GogarA3cConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Population(format!(
                "population_size {} leaves no critic for the actor",
                self.population_size
            )));
        }
        if self.t_max == 0 {
            return Err(Error::param("gogar_a3c", "t_max must be positive"));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub interactions: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub td_abs_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GogarA3cOutcome {
    pub population: Vec<ParticipantUnit>,
    pub rounds: Vec<RoundReport>,
    pub traces: Vec<InteractionTrace>,
    pub pairs_executed: u64,
}

/// Seed for pair `pair` of round `round`.
pub fn pair_seed(seed: u64, round: usize, pair: usize) -> u64 {
    derive_seed(derive_seed(seed, round as u64 + 1), pair as u64)
}

/// Runs every interaction of `plan` against `units`, on one thread per pair
/// when `cfg.concurrent` is set. Units outside the plan are not touched.
pub fn run_round(
    units: &[Mutex<ParticipantUnit>],
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    cfg: &GogarA3cConfig,
    round: usize,
    plan: &InteractionPlan,
) -> Result<(RoundReport, Vec<InteractionTrace>)> {
    if let Some(&(a, c)) = plan.pairs.iter().find(|(a, c)| *a >= units.len() || *c >= units.len()) {
        return Err(Error::Population(format!("pair ({a}, {c}) names a unit outside the population")));
    }
    if plan.pairs.is_empty() {
        debug!("round {round}: idle");
    }
    let run_pair = |k: usize, (a, c): (usize, usize)| -> Result<(Interaction, Option<CounterUniverse>)> {
        let universe = if cfg.trace {
            let snapshot = units[a].lock().clone();
            let tag = format!("greedy:{}@round{round}", snapshot.id);
            Some(greedy_universe(&snapshot, mdp, fm, &tag)?)
        } else {
            None
        };
        let mut rng = rng_from_seed(pair_seed(cfg.seed, round, k));
        let it = interaction_thread(&units[a], &units[c], mdp, fm, &cfg.hyper, plan.t_max, cfg.mode, &mut rng)?;
        Ok((it, universe))
    };
    let results: Vec<Result<(Interaction, Option<CounterUniverse>)>> = if cfg.concurrent && plan.pairs.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = plan
                .pairs
                .iter()
                .enumerate()
                .map(|(k, pair)| {
                    let run_pair = &run_pair;
                    scope.spawn(move || run_pair(k, *pair))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("interaction thread panicked"))
                .collect()
        })
    } else {
        plan.pairs.iter().enumerate().map(|(k, p)| run_pair(k, *p)).collect()
    };

    let mut report = RoundReport {
        round,
        interactions: plan.pairs.len(),
        steps: 0,
        total_reward: 0.0,
        td_abs_sum: 0.0,
    };
    let mut traces = Vec::new();
    for (k, res) in results.into_iter().enumerate() {
        let (it, universe) = res?;
        report.steps += it.steps.len();
        report.total_reward += it.total_reward;
        report.td_abs_sum += it.td_abs_sum();
        if let Some(u) = universe {
            traces.push(InteractionTrace::new(round, k, u, it)?);
        }
    }
    Ok((report, traces))
}

pub fn train_gogar_a3c(mdp: &Mdp, cfg: &GogarA3cConfig) -> Result<GogarA3cOutcome> {
    let fm = OneHot::new(mdp.n_states());
    let population = (0..cfg.population_size)
        .map(|i| ParticipantUnit::new(i, mdp.n_actions(), fm.dim()))
        .collect();
    train_gogar_a3c_with(mdp, &fm, cfg, population, |_| {})
}

/// Trains `population` for `cfg.rounds` rounds. Plans come from the stream
/// `derive_seed(seed, 0)`; each pair draws from its own [`pair_seed`].
/// All interactions of a round finish before the next round is planned.
pub fn train_gogar_a3c_with<F>(
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    cfg: &GogarA3cConfig,
    population: Vec<ParticipantUnit>,
    mut observe: F,
) -> Result<GogarA3cOutcome>
where
    F: FnMut(&RoundReport),
{
    cfg.validate()?;
    if population.len() != cfg.population_size {
        return Err(Error::Population(format!(
            "expected {} units, got {}",
            cfg.population_size,
            population.len()
        )));
    }
    let ids: BTreeSet<&ParticipantId> = population.iter().map(|u| &u.id).collect();
    if ids.len() != population.len() {
        return Err(Error::Population("participant ids must be distinct".into()));
    }
    let units: Vec<Mutex<ParticipantUnit>> = population.into_iter().map(Mutex::new).collect();
    let mut plan_rng = rng_from_seed(derive_seed(cfg.seed, 0));
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut traces = Vec::new();
    let mut pairs_executed = 0u64;

    for round in 0..cfg.rounds {
        let plan = sample_interactions(units.len(), &mut plan_rng, cfg.t_max)?;
        let (report, round_traces) = run_round(&units, mdp, fm, cfg, round, &plan)?;
        traces.extend(round_traces);
        pairs_executed += plan.pairs.len() as u64;
        observe(&report);
        rounds.push(report);
    }
    info!("gogar_a3c: {} rounds, {pairs_executed} interactions", cfg.rounds);
    Ok(GogarA3cOutcome {
        population: units.into_iter().map(Mutex::into_inner).collect(),
        rounds,
        traces,
        pairs_executed,
    })
}

/// Text checkpoint: a header `population <n> actions <m> dim <d>`, then per
/// unit `unit <id> interactions <k>`, `m` lines `theta ...` and one line
/// `w ...`. Values are printed with 17 significant digits.
pub fn write_population(units: &[ParticipantUnit]) -> String {
    let (m, d) = units
        .first()
        .map(|u| (u.policy.n_actions(), u.policy.dim()))
        .unwrap_or((0, 0));
    let mut out = format!("population {} actions {m} dim {d}\n", units.len());
    let row = |tag: &str, xs: &[f64]| {
        let mut line = tag.to_string();
        for x in xs {
            line.push_str(&format!(" {x:.16e}"));
        }
        line.push('\n');
        line
    };
    for u in units {
        out.push_str(&format!("unit {} interactions {}\n", u.id, u.interaction_count));
        for r in 0..u.policy.n_actions() {
            out.push_str(&row("theta", u.policy.theta.row(r)));
        }
        out.push_str(&row("w", &u.value.w));
    }
    out
}

pub fn parse_population(text: &str) -> Result<Vec<ParticipantUnit>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
            .ok_or_else(|| Error::parse(0, format!("checkpoint ends before {what}")))
    };
    let num = |line: usize, s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(line, format!("`{s}` is not a count")))
    };
    let (l, head) = next("the header")?;
    let (n, m, d) = match head.as_slice() {
        ["population", n, "actions", m, "dim", d] => (num(l, n)?, num(l, m)?, num(l, d)?),
        _ => return Err(Error::parse(l, "expected `population <n> actions <m> dim <d>`")),
    };
    let values = |line: usize, fields: &[&str], tag: &str, len: usize| -> Result<Vec<f64>> {
        if fields.first() != Some(&tag) || fields.len() != len + 1 {
            return Err(Error::parse(line, format!("expected `{tag}` with {len} values")));
        }
        fields[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(line, format!("`{s}` is not a finite number")))
            })
            .collect()
    };
    let mut units = Vec::with_capacity(n);
    for _ in 0..n {
        let (l, head) = next("a unit")?;
        let (id, count) = match head.as_slice() {
            ["unit", id, "interactions", k] => (
                Token::new(*id).map_err(|e| Error::parse(l, e.to_string()))?,
                k.parse::<u64>()
                    .map_err(|_| Error::parse(l, format!("`{k}` is not a count")))?,
            ),
            _ => return Err(Error::parse(l, "expected `unit <id> interactions <k>`")),
        };
        let mut theta = Vec::with_capacity(m * d);
        for _ in 0..m {
            let (l, fields) = next("a theta row")?;
            theta.extend(values(l, &fields, "theta", d)?);
        }
        let (l, fields) = next("the w row")?;
        let w = values(l, &fields, "w", d)?;
        units.push(ParticipantUnit {
            id,
            policy: SoftmaxPolicy {
                theta: Matrix::from_vec(m, d, theta)?,
            },
            value: LinearValueFn { w },
            interaction_count: count,
        });
    }
    if let Some((l, _)) = lines.next() {
        return Err(Error::parse(l + 1, "trailing content after the last unit"));
    }
    Ok(units)
}
