//! Experiment configuration files: one `key value` pair per line.
//!
//! ```text
//! algorithm q_learning
//! mdp fixtures/chain3.mdp
//! output_dir runs/chain-q
//! episodes 5000
//! seed 7
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. Unknown and repeated keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::population::UpdateMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    QLearning,
    Reinforce,
    ActorCritic,
    A3c,
    GogarA3c,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::QLearning => "q_learning",
            Algorithm::Reinforce => "reinforce",
            Algorithm::ActorCritic => "actor_critic",
            Algorithm::A3c => "a3c",
            Algorithm::GogarA3c => "gogar_a3c",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            Algorithm::QLearning,
            Algorithm::Reinforce,
            Algorithm::ActorCritic,
            Algorithm::A3c,
            Algorithm::GogarA3c,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub mdp_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Overrides the MDP's discount factor when set.
    pub gamma: Option<f64>,
    pub epsilon: f64,
    /// Steps per A3C segment or GOGAR-A3C interaction.
    pub t_max: usize,
    /// Episode step cap; `10 * n_states` when unset.
    pub step_cap: Option<usize>,
    pub n_threads: usize,
    pub population_size: usize,
    pub episodes: usize,
    pub segments: u64,
    pub rounds: usize,
    pub trace: bool,
    pub update_mode: UpdateMode,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, mdp_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            algorithm,
            mdp_path: mdp_path.into(),
            output_dir: output_dir.into(),
            seed: 0,
            alpha: 0.1,
            beta: 0.1,
            gamma: None,
            epsilon: 0.1,
            t_max: 5,
            step_cap: None,
            n_threads: 1,
            population_size: 2,
            episodes: 1000,
            segments: 1000,
            rounds: 1000,
            trace: false,
            update_mode: UpdateMode::InPlace,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.mdp_path, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(Algorithm::QLearning, "", "");
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .ok_or_else(|| Error::parse(line, format!("`{trimmed}` has no value")))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(line, format!("duplicate key `{key}`")));
            }
            let bad = |what: &str| Error::parse(line, format!("`{value}` is not {what} (key `{key}`)"));
            let float = || value.parse::<f64>().map_err(|_| bad("a number"));
            let count = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            match key {
                "algorithm" => cfg.algorithm = value.parse().map_err(|m: String| Error::parse(line, m))?,
                "mdp" => cfg.mdp_path = PathBuf::from(value),
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "seed" => cfg.seed = value.parse().map_err(|_| bad("a 64-bit unsigned integer"))?,
                "alpha" => cfg.alpha = float()?,
                "beta" => cfg.beta = float()?,
                "gamma" => cfg.gamma = Some(float()?),
                "epsilon" => cfg.epsilon = float()?,
                "t_max" => cfg.t_max = count()?,
                "step_cap" => cfg.step_cap = Some(count()?),
                "n_threads" => cfg.n_threads = count()?,
                "population_size" => cfg.population_size = count()?,
                "episodes" => cfg.episodes = count()?,
                "segments" => cfg.segments = value.parse().map_err(|_| bad("a non-negative integer"))?,
                "rounds" => cfg.rounds = count()?,
                "trace" => cfg.trace = value.parse().map_err(|_| bad("`true` or `false`"))?,
                "update_mode" => {
                    cfg.update_mode = match value {
                        "in_place" => UpdateMode::InPlace,
                        "accumulate" => UpdateMode::Accumulate,
                        _ => return Err(bad("`in_place` or `accumulate`")),
                    }
                }
                _ => return Err(Error::parse(line, format!("unknown key `{key}`"))),
            }
        }
        for key in ["algorithm", "mdp", "output_dir"] {
            if !seen.contains(key) {
                return Err(Error::Validation(format!("config is missing `{key}`")));
            }
        }
        Ok(cfg)
    }

    /// All keys in a fixed order; [`ExperimentConfig::parse`] reads it back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} {v}\n"));
        kv("algorithm", self.algorithm.to_string());
        kv("mdp", self.mdp_path.display().to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("seed", self.seed.to_string());
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        if let Some(g) = self.gamma {
            kv("gamma", g.to_string());
        }
        kv("epsilon", self.epsilon.to_string());
        kv("t_max", self.t_max.to_string());
        if let Some(c) = self.step_cap {
            kv("step_cap", c.to_string());
        }
        kv("n_threads", self.n_threads.to_string());
        kv("population_size", self.population_size.to_string());
        kv("episodes", self.episodes.to_string());
        kv("segments", self.segments.to_string());
        kv("rounds", self.rounds.to_string());
        kv("trace", self.trace.to_string());
        let mode = match self.update_mode {
            UpdateMode::InPlace => "in_place",
            UpdateMode::Accumulate => "accumulate",
        };
        kv("update_mode", mode.to_string());
        out
    }
}
