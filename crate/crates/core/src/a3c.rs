//! Asynchronous advantage actor-critic.
//!
//! Workers snapshot the global `(theta, w)` at the start of each segment, act
//! for up to `t_max` steps under the snapshot, accumulate critic and actor
//! increments, and then add the accumulated deltas to the global store as one
//! atomic application. Deltas computed from stale snapshots are applied as is.
//!
//! Episodes run across segment boundaries: a worker keeps its current state
//! and `I` between segments and only restarts at a terminal state or the
//! episode cap. A segment that reaches the end of an episode before `t_max`
//! steps is applied right away.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use log::{debug, warn};
use parking_lot::Mutex;

use crate::approx::{FeatureMap, LinearValueFn, Matrix, OneHot, SoftmaxPolicy};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::pg::{td_error, AcHyper};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::EpisodeStats;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    pub d_theta: Matrix,
    pub d_w: Vec<f64>,
    pub n_steps: usize,
    /// Store version the deltas were computed against.
    pub snapshot_version: u64,
}

impl GradientAccumulator {
    pub fn new(n_actions: usize, dim: usize) -> Self {
        GradientAccumulator {
            d_theta: Matrix::zeros(n_actions, dim),
            d_w: vec![0.0; dim],
            n_steps: 0,
            snapshot_version: 0,
        }
    }

    /// `d_w += beta delta v_grad`, `d_theta += alpha I delta lp_grad`.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate(
        &mut self,
        delta: f64,
        v_grad: &[f64],
        lp_grad: &Matrix,
        i: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<()> {
        if v_grad.len() != self.d_w.len() {
            return Err(Error::Shape(format!(
                "value gradient has {} entries, accumulator {}",
                v_grad.len(),
                self.d_w.len()
            )));
        }
        if lp_grad.shape() != self.d_theta.shape() {
            return Err(Error::Shape(format!(
                "policy gradient {:?}, accumulator {:?}",
                lp_grad.shape(),
                self.d_theta.shape()
            )));
        }
        let k = beta * delta;
        for (d, g) in self.d_w.iter_mut().zip(v_grad) {
            *d += k * g;
        }
        self.d_theta.add_scaled(alpha * i * delta, lp_grad)?;
        self.n_steps += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.d_theta.fill(0.0);
        self.d_w.fill(0.0);
        self.n_steps = 0;
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps == 0
    }
}

/// Consistent copy of the global parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    pub policy: SoftmaxPolicy,
    pub value: LinearValueFn,
    /// `update_count` at the time of the read.
    pub version: u64,
}

/// One applied accumulation, as recorded by the store ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub update_count: u64,
    pub snapshot_version: u64,
    pub d_theta: Matrix,
    pub d_w: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied { update_count: u64, staleness: u64 },
    /// Nothing to apply; the store is untouched.
    Empty,
    /// The store already holds its quota of applications.
    LimitReached,
}

#[derive(Debug)]
struct StoreState {
    policy: SoftmaxPolicy,
    value: LinearValueFn,
    update_count: u64,
    ledger: Option<Vec<LedgerEntry>>,
}

/// Global actor-critic parameters shared by all workers. Snapshots and
/// applications are serialized on one lock, so every snapshot falls between
/// two whole applications.
#[derive(Debug)]
pub struct GlobalParams {
    state: Mutex<StoreState>,
}

impl GlobalParams {
    pub fn new(policy: SoftmaxPolicy, value: LinearValueFn) -> Self {
        GlobalParams {
            state: Mutex::new(StoreState {
                policy,
                value,
                update_count: 0,
                ledger: None,
            }),
        }
    }

    /// Like [`GlobalParams::new`], additionally logging every applied delta.
    pub fn with_ledger(policy: SoftmaxPolicy, value: LinearValueFn) -> Self {
        let store = GlobalParams::new(policy, value);
        store.state.lock().ledger = Some(Vec::new());
        store
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        let st = self.state.lock();
        ParamSnapshot {
            policy: st.policy.clone(),
            value: st.value.clone(),
            version: st.update_count,
        }
    }

    pub fn update_count(&self) -> u64 {
        self.state.lock().update_count
    }

    pub fn ledger(&self) -> Option<Vec<LedgerEntry>> {
        self.state.lock().ledger.clone()
    }

    /// Adds the accumulated deltas to the store and resets `acc`.
    pub fn apply(&self, acc: &mut GradientAccumulator) -> Result<ApplyOutcome> {
        self.apply_bounded(acc, u64::MAX)
    }

    /// As [`GlobalParams::apply`], but refuses once `limit` applications
    /// have landed. The accumulator is reset either way.
    pub fn apply_bounded(&self, acc: &mut GradientAccumulator, limit: u64) -> Result<ApplyOutcome> {
        if acc.is_empty() {
            warn!("async_train: ignoring apply of an empty accumulator");
            return Ok(ApplyOutcome::Empty);
        }
        let mut st = self.state.lock();
        if st.policy.theta.shape() != acc.d_theta.shape() || st.value.w.len() != acc.d_w.len() {
            return Err(Error::Shape("accumulator does not match the store".into()));
        }
        if st.update_count >= limit {
            drop(st);
            acc.reset();
            return Ok(ApplyOutcome::LimitReached);
        }
        debug_assert!(acc.snapshot_version <= st.update_count);
        let staleness = st.update_count - acc.snapshot_version;
        st.policy.theta.add_scaled(1.0, &acc.d_theta)?;
        for (w, d) in st.value.w.iter_mut().zip(&acc.d_w) {
            *w += d;
        }
        st.update_count += 1;
        let update_count = st.update_count;
        if let Some(ledger) = st.ledger.as_mut() {
            ledger.push(LedgerEntry {
                update_count,
                snapshot_version: acc.snapshot_version,
                d_theta: acc.d_theta.clone(),
                d_w: acc.d_w.clone(),
            });
        }
        drop(st);
        acc.reset();
        Ok(ApplyOutcome::Applied {
            update_count,
            staleness,
        })
    }

    pub fn into_params(self) -> (SoftmaxPolicy, LinearValueFn, u64) {
        let st = self.state.into_inner();
        (st.policy, st.value, st.update_count)
    }
}

/// Per-segment summary sent to the metrics funnel.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub worker: usize,
    /// Store `update_count` right after this segment landed.
    pub update_count: u64,
    pub staleness: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub td_abs_sum: f64,
    /// Set when the segment finished an episode.
    pub episode: Option<EpisodeStats>,
}

#[derive(Debug, Clone)]
struct EpisodeCursor {
    state: usize,
    i: f64,
    stats: EpisodeStats,
}

/// Thread-local worker state: random stream, accumulator, and the episode in
/// progress.
#[derive(Debug)]
pub struct Worker {
    pub id: usize,
    rng: SimRng,
    acc: GradientAccumulator,
    cursor: Option<EpisodeCursor>,
    episodes_done: usize,
}

/// Seed of worker `id` under master seed `seed`.
pub fn worker_seed(seed: u64, id: usize) -> u64 {
    derive_seed(seed, id as u64)
}

impl Worker {
    pub fn new(id: usize, seed: u64, n_actions: usize, dim: usize) -> Self {
        Worker {
            id,
            rng: rng_from_seed(seed),
            acc: GradientAccumulator::new(n_actions, dim),
            cursor: None,
            episodes_done: 0,
        }
    }

    pub fn accumulator(&self) -> &GradientAccumulator {
        &self.acc
    }

    /// Acts for up to `t_max` steps under `snap`, accumulating increments.
    /// Returns the segment's step count, reward, TD magnitude, and the stats
    /// of an episode finished during the segment.
    pub fn run_segment(
        &mut self,
        snap: &ParamSnapshot,
        mdp: &Mdp,
        fm: &dyn FeatureMap,
        hyper: &AcHyper,
        t_max: usize,
    ) -> Result<(usize, f64, f64, Option<EpisodeStats>)> {
        self.acc.snapshot_version = snap.version;
        let (mut steps, mut reward, mut td_abs) = (0, 0.0, 0.0);
        while steps < t_max {
            let mut cur = match self.cursor.take() {
                Some(c) => c,
                None => {
                    let s = mdp.sample_start(&mut self.rng);
                    let stats = EpisodeStats::new(self.episodes_done);
                    if mdp.is_terminal(s) {
                        self.episodes_done += 1;
                        return Ok((steps, reward, td_abs, Some(stats)));
                    }
                    EpisodeCursor { state: s, i: 1.0, stats }
                }
            };
            let s = cur.state;
            let a = snap.policy.sample(fm, s, &mut self.rng);
            let (next, r) = mdp.step(s, a, &mut self.rng)?;
            let next_terminal = mdp.is_terminal(next);
            let delta = td_error(r, hyper.gamma, &snap.value, fm, s, next, next_terminal)?;
            let v_grad = snap.value.grad(fm, s);
            let lp_grad = snap.policy.log_prob_grad(fm, s, a);
            self.acc
                .accumulate(delta, &v_grad, &lp_grad, cur.i, hyper.alpha, hyper.beta)?;
            cur.i *= hyper.gamma;
            cur.state = next;
            cur.stats.record(r, delta);
            steps += 1;
            reward += r;
            td_abs += delta.abs();
            if next_terminal || cur.stats.length >= hyper.t_cap {
                self.episodes_done += 1;
                return Ok((steps, reward, td_abs, Some(cur.stats)));
            }
            self.cursor = Some(cur);
        }
        Ok((steps, reward, td_abs, None))
    }
}

/// Loop body of one A3C thread. Runs segments until `stop` is raised or the
/// store reaches `limit` applications (which also raises `stop`).
#[allow(clippy::too_many_arguments)]
pub fn worker_loop(
    store: &GlobalParams,
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    hyper: &AcHyper,
    t_max: usize,
    worker: &mut Worker,
    stop: &AtomicBool,
    limit: u64,
    metrics: Option<&mpsc::Sender<SegmentReport>>,
) -> Result<()> {
    if t_max == 0 {
        return Err(Error::param("async_train", "t_max must be at least 1"));
    }
    while !stop.load(Ordering::Acquire) {
        let snap = store.snapshot();
        let (steps, total_reward, td_abs_sum, episode) = worker.run_segment(&snap, mdp, fm, hyper, t_max)?;
        if steps == 0 {
            continue;
        }
        if stop.load(Ordering::Acquire) {
            break;
        }
        match store.apply_bounded(&mut worker.acc, limit)? {
            ApplyOutcome::Applied {
                update_count,
                staleness,
            } => {
                if let Some(tx) = metrics {
                    // A closed receiver only means nobody is listening.
                    let _ = tx.send(SegmentReport {
                        worker: worker.id,
                        update_count,
                        staleness,
                        steps,
                        total_reward,
                        td_abs_sum,
                        episode,
                    });
                }
                if update_count >= limit {
                    stop.store(true, Ordering::Release);
                }
            }
            ApplyOutcome::Empty => {}
            ApplyOutcome::LimitReached => stop.store(true, Ordering::Release),
        }
    }
    debug!("async_train: worker {} exiting", worker.id);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct A3cConfig {
    pub n_threads: usize,
    pub hyper: AcHyper,
    pub t_max: usize,
    pub total_segments: u64,
    pub seed: u64,
    /// Keep every applied delta for auditing.
    pub record_ledger: bool,
}

#[derive(Debug)]
pub struct A3cOutcome {
    pub policy: SoftmaxPolicy,
    pub value: LinearValueFn,
    pub update_count: u64,
    pub ledger: Option<Vec<LedgerEntry>>,
    /// Segment reports ordered by `update_count`.
    pub reports: Vec<SegmentReport>,
}

pub fn train_a3c(mdp: &Mdp, cfg: &A3cConfig) -> Result<A3cOutcome> {
    let fm = OneHot::new(mdp.n_states());
    let init = (
        SoftmaxPolicy::zeros(mdp.n_actions(), fm.dim()),
        LinearValueFn::zeros(fm.dim()),
    );
    train_a3c_with(mdp, &fm, cfg, init, &AtomicBool::new(false))
}

/// Runs `cfg.n_threads` workers against a fresh store until
/// `cfg.total_segments` applications have landed or `stop` is raised by the
/// caller. A single thread runs inline on the calling thread and is fully
/// deterministic under `cfg.seed`.
pub fn train_a3c_with(
    mdp: &Mdp,
    fm: &dyn FeatureMap,
    cfg: &A3cConfig,
    init: (SoftmaxPolicy, LinearValueFn),
    stop: &AtomicBool,
) -> Result<A3cOutcome> {
    cfg.hyper.validate()?;
    if cfg.n_threads == 0 {
        return Err(Error::param("async_train", "n_threads must be at least 1"));
    }
    if cfg.t_max == 0 {
        return Err(Error::param("async_train", "t_max must be at least 1"));
    }
    if mdp.non_terminals().all(|s| mdp.start_dist()[s] == 0.0) {
        return Err(Error::input(
            "async_train",
            "start distribution has no mass on non-terminal states",
        ));
    }
    let (policy, value) = init;
    let store = if cfg.record_ledger {
        GlobalParams::with_ledger(policy, value)
    } else {
        GlobalParams::new(policy, value)
    };
    let (n_actions, dim) = (mdp.n_actions(), fm.dim());
    let (tx, rx) = mpsc::channel();
    if cfg.total_segments == 0 {
        stop.store(true, Ordering::Release);
    }
    let run = |id: usize, tx: mpsc::Sender<SegmentReport>| {
        let mut worker = Worker::new(id, worker_seed(cfg.seed, id), n_actions, dim);
        let res = worker_loop(
            &store,
            mdp,
            fm,
            &cfg.hyper,
            cfg.t_max,
            &mut worker,
            stop,
            cfg.total_segments,
            Some(&tx),
        );
        if res.is_err() {
            stop.store(true, Ordering::Release);
        }
        res
    };
    if cfg.n_threads == 1 {
        run(0, tx)?;
    } else {
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..cfg.n_threads)
                .map(|id| {
                    let tx = tx.clone();
                    scope.spawn(move || run(id, tx))
                })
                .collect();
            drop(tx);
            handles
                .into_iter()
                .map(|h| h.join().expect("a3c worker panicked"))
                .collect()
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
    }
    let mut reports: Vec<SegmentReport> = rx.into_iter().collect();
    reports.sort_by_key(|r| r.update_count);
    let ledger = store.ledger();
    let (policy, value, update_count) = store.into_params();
    Ok(A3cOutcome {
        policy,
        value,
        update_count,
        ledger,
        reports,
    })
}
