use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use log::{info, warn};

use super::checkpoint::Checkpoint;
use super::config::{Algorithm, ExperimentConfig};
use super::mdp_file::load_mdp;
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::a3c::{train_a3c_with, worker_seed, A3cConfig};
use crate::approx::{FeatureMap, LinearValueFn, OneHot, SoftmaxPolicy};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::pg::{train_actor_critic_with, train_reinforce_with, AcHyper, ReinforceConfig, TrainEvent};
use crate::population::{train_gogar_a3c_with, GogarA3cConfig, ParticipantUnit};
use crate::qlearning::{train_q_with, QConfig, QTable};
use crate::rng::derive_seed;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TRACE_DIR: &str = "traces";
pub const TRACE_FILE: &str = "gogar_a3c.trace";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub metrics_rows: u64,
    pub checkpoint: Checkpoint,
    pub trace_path: Option<PathBuf>,
}

/// Algorithm settings checked against the loaded MDP.
enum Plan {
    Q(QConfig),
    Reinforce(ReinforceConfig),
    ActorCritic(AcHyper, usize),
    A3c(A3cConfig),
    GogarA3c(GogarA3cConfig),
}

fn plan(cfg: &ExperimentConfig, mdp: &Mdp) -> Result<Plan> {
    if cfg.step_cap == Some(0) {
        return Err(Error::param("harness", "step_cap must be positive"));
    }
    let gamma = cfg.gamma.unwrap_or(mdp.gamma());
    let t_cap = cfg.step_cap.unwrap_or(10 * mdp.n_states());
    let hyper = AcHyper {
        alpha: cfg.alpha,
        beta: cfg.beta,
        gamma,
        t_cap,
    };
    let plan = match cfg.algorithm {
        Algorithm::QLearning => {
            let q = QConfig {
                episodes: cfg.episodes,
                alpha: cfg.alpha,
                gamma: cfg.gamma,
                epsilon: cfg.epsilon,
                seed: cfg.seed,
                step_cap: Some(t_cap),
            };
            q.validate()?;
            Plan::Q(q)
        }
        Algorithm::Reinforce => {
            let r = ReinforceConfig {
                alpha: cfg.alpha,
                gamma,
                episodes: cfg.episodes,
                seed: cfg.seed,
                t_cap,
            };
            r.validate()?;
            Plan::Reinforce(r)
        }
        Algorithm::ActorCritic => {
            hyper.validate()?;
            Plan::ActorCritic(hyper, cfg.episodes)
        }
        Algorithm::A3c => {
            hyper.validate()?;
            if cfg.n_threads == 0 || cfg.t_max == 0 {
                return Err(Error::param("async_train", "n_threads and t_max must be positive"));
            }
            Plan::A3c(A3cConfig {
                n_threads: cfg.n_threads,
                hyper,
                t_max: cfg.t_max,
                total_segments: cfg.segments,
                seed: cfg.seed,
                record_ledger: false,
            })
        }
        Algorithm::GogarA3c => {
            let g = GogarA3cConfig {
                population_size: cfg.population_size,
                hyper,
                t_max: cfg.t_max,
                rounds: cfg.rounds,
                seed: cfg.seed,
                trace: cfg.trace,
                concurrent: cfg.n_threads > 1,
                mode: cfg.update_mode,
            };
            g.validate()?;
            Plan::GogarA3c(g)
        }
    };
    if cfg.trace && cfg.algorithm != Algorithm::GogarA3c {
        warn!("trace is only produced by gogar_a3c; ignoring it for {}", cfg.algorithm);
    }
    Ok(plan)
}

fn derived_seeds(cfg: &ExperimentConfig) -> Vec<(String, u64)> {
    match cfg.algorithm {
        Algorithm::A3c => (0..cfg.n_threads)
            .map(|i| (format!("worker{i}"), worker_seed(cfg.seed, i)))
            .collect(),
        Algorithm::GogarA3c => vec![("plan".to_string(), derive_seed(cfg.seed, 0))],
        _ => vec![("trainer".to_string(), cfg.seed)],
    }
}

fn manifest(cfg: &ExperimentConfig) -> String {
    let mut cfg = cfg.clone();
    for p in [&mut cfg.mdp_path, &mut cfg.output_dir] {
        if let Ok(abs) = fs::canonicalize(&*p) {
            *p = abs;
        }
    }
    let mut out = format!(
        "# {} {}\n# run_id {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        run_id(&cfg)
    );
    for (name, seed) in derived_seeds(&cfg) {
        out.push_str(&format!("# derived_seed {name} {seed}\n"));
    }
    out.push_str(&cfg.to_text());
    out
}

fn run_id(cfg: &ExperimentConfig) -> String {
    format!("{}-{:016x}", cfg.algorithm, cfg.seed)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Validates the config and the MDP, then trains and writes the run
/// directory: metrics, checkpoint, optional traces and the manifest. Nothing
/// is created when validation fails.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let mdp = load_mdp(&cfg.mdp_path)?;
    let plan = plan(cfg, &mdp)?;

    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    let metrics_path = cfg.output_dir.join(METRICS_FILE);
    let file = File::create(&metrics_path)
        .map_err(|e| Error::Io(format!("{}: {e}", metrics_path.display())))?;
    let mut metrics = MetricsWriter::new(BufWriter::new(file), &run_id(cfg))?;
    let fm = OneHot::new(mdp.n_states());
    let mut first_err: Option<Error> = None;
    let mut record = |metrics: &mut MetricsWriter<_>, rec: MetricsRecord| {
        if first_err.is_none() {
            if let Err(e) = metrics.write(&rec) {
                first_err = Some(e);
            }
        }
    };
    let ac_init = || {
        (
            SoftmaxPolicy::zeros(mdp.n_actions(), fm.dim()),
            LinearValueFn::zeros(fm.dim()),
        )
    };

    let mut trace_text = None;
    let checkpoint = match plan {
        Plan::Q(q) => {
            let init = QTable::zeros(mdp.n_states(), mdp.n_actions());
            let table = train_q_with(&mdp, &q, init, |st| {
                record(&mut metrics, episode_record(st.index as u64, st));
            })?;
            Checkpoint::QTable(table)
        }
        Plan::Reinforce(r) => {
            let policy = train_reinforce_with(&mdp, &fm, &r, ac_init().0, |st| {
                record(&mut metrics, episode_record(st.index as u64, st));
            })?;
            Checkpoint::Softmax {
                policy,
                value: LinearValueFn::zeros(fm.dim()),
            }
        }
        Plan::ActorCritic(hyper, episodes) => {
            let (policy, value) =
                train_actor_critic_with(&mdp, &fm, &hyper, episodes, cfg.seed, ac_init(), |ev| {
                    if let TrainEvent::EpisodeEnd(st) = ev {
                        record(&mut metrics, episode_record(st.index as u64, st));
                    }
                })?;
            Checkpoint::Softmax { policy, value }
        }
        Plan::A3c(a) => {
            let out = train_a3c_with(&mdp, &fm as &dyn FeatureMap, &a, ac_init(), &AtomicBool::new(false))?;
            for rep in &out.reports {
                record(
                    &mut metrics,
                    MetricsRecord {
                        iteration: rep.update_count,
                        episode_return: rep.total_reward,
                        episode_length: rep.steps,
                        td_abs_mean: mean(rep.td_abs_sum, rep.steps),
                        update_count: Some(rep.update_count),
                    },
                );
            }
            Checkpoint::Softmax {
                policy: out.policy,
                value: out.value,
            }
        }
        Plan::GogarA3c(g) => {
            let population = (0..g.population_size)
                .map(|i| ParticipantUnit::new(i, mdp.n_actions(), fm.dim()))
                .collect();
            let mut executed = 0u64;
            let out = train_gogar_a3c_with(&mdp, &fm, &g, population, |rep| {
                executed += rep.interactions as u64;
                record(
                    &mut metrics,
                    MetricsRecord {
                        iteration: rep.round as u64,
                        episode_return: rep.total_reward,
                        episode_length: rep.steps,
                        td_abs_mean: mean(rep.td_abs_sum, rep.steps),
                        update_count: Some(executed),
                    },
                );
            })?;
            if g.trace {
                trace_text = Some(out.traces.iter().map(|t| t.to_text()).collect::<String>());
            }
            Checkpoint::Population(out.population)
        }
    };
    if let Some(e) = first_err {
        return Err(e);
    }
    let metrics_rows = metrics.rows();
    metrics.finish()?;

    write_file(&cfg.output_dir.join(CHECKPOINT_FILE), &checkpoint.to_text())?;
    let trace_path = match trace_text {
        Some(text) => {
            let dir = cfg.output_dir.join(TRACE_DIR);
            fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            let path = dir.join(TRACE_FILE);
            write_file(&path, &text)?;
            Some(path)
        }
        None => None,
    };
    write_file(&cfg.output_dir.join(MANIFEST_FILE), &manifest(cfg))?;
    info!("{}: {metrics_rows} metrics rows in {}", cfg.algorithm, cfg.output_dir.display());
    Ok(RunSummary {
        output_dir: cfg.output_dir.clone(),
        metrics_rows,
        checkpoint,
        trace_path,
    })
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn episode_record(iteration: u64, st: &crate::EpisodeStats) -> MetricsRecord {
    MetricsRecord {
        iteration,
        episode_return: st.total_reward,
        episode_length: st.length,
        td_abs_mean: st.td_abs_mean(),
        update_count: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::mdp_file::write_mdp;
    use crate::mdp::fixtures::chain3;

    fn setup(dir: &Path, algorithm: Algorithm) -> ExperimentConfig {
        let mdp_path = dir.join("chain.mdp");
        fs::write(&mdp_path, write_mdp(&chain3(0.9))).unwrap();
        let mut cfg = ExperimentConfig::new(algorithm, mdp_path, dir.join("out"));
        cfg.episodes = 50;
        cfg.rounds = 20;
        cfg.segments = 40;
        cfg
    }

    #[test]
    fn every_algorithm_writes_a_run_directory() {
        for alg in [
            Algorithm::QLearning,
            Algorithm::Reinforce,
            Algorithm::ActorCritic,
            Algorithm::A3c,
            Algorithm::GogarA3c,
        ] {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = setup(dir.path(), alg);
            cfg.trace = true;
            let summary = run(&cfg).unwrap();
            let expected_rows = match alg {
                Algorithm::A3c => 40,
                Algorithm::GogarA3c => 20,
                _ => 50,
            };
            assert_eq!(summary.metrics_rows, expected_rows, "{alg}");
            let metrics = fs::read_to_string(cfg.output_dir.join(METRICS_FILE)).unwrap();
            assert_eq!(metrics.lines().count() as u64, expected_rows + 1);
            let ck = fs::read_to_string(cfg.output_dir.join(CHECKPOINT_FILE)).unwrap();
            assert_eq!(Checkpoint::parse(&ck).unwrap(), summary.checkpoint);
            assert_eq!(summary.trace_path.is_some(), alg == Algorithm::GogarA3c);

            let manifest = cfg.output_dir.join(MANIFEST_FILE);
            let again = ExperimentConfig::load(&manifest).unwrap();
            let rerun = run(&again).unwrap();
            assert_eq!(rerun.checkpoint, summary.checkpoint, "{alg}");
        }
    }

    #[test]
    fn rejected_configs_leave_no_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path(), Algorithm::GogarA3c);
        cfg.population_size = 1;
        let err = run(&cfg).unwrap_err();
        assert!(err.to_string().contains("population"), "{err}");
        assert_eq!(err.module(), "gogar_a3c");
        assert!(!cfg.output_dir.exists());

        let mut cfg = setup(dir.path(), Algorithm::QLearning);
        cfg.alpha = 2.0;
        assert_eq!(run(&cfg).unwrap_err().module(), "tabular_q");
        assert!(!cfg.output_dir.exists());
    }
}
