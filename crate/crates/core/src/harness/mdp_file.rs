//! Line-oriented MDP files.
//!
//! ```text
//! states 3
//! actions 2
//! gamma 0.9
//! terminal 2
//! start 0 1
//! t 0 0 1 1
//! r 1 0 2 1
//! ```
//!
//! `terminal` and `start` may repeat; `start` takes one or more `s p` pairs.
//! Unlisted transitions have probability 0 and unlisted rewards are 0.
//! Terminal rows may be left out. `#` starts a comment line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, MdpBuilder};

pub fn load_mdp(path: impl AsRef<Path>) -> Result<Mdp> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_mdp(&text)
}

pub fn parse_mdp<'a>(text: &'a str) -> Result<Mdp> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty() && !f[0].starts_with('#'))
        .collect();

    let mut states = None;
    let mut actions = None;
    let mut gamma = None;
    for (line, f) in &lines {
        let slot = match f[0] {
            "states" => &mut states,
            "actions" => &mut actions,
            "gamma" => &mut gamma,
            _ => continue,
        };
        if f.len() != 2 {
            return Err(Error::parse(*line, format!("`{}` takes one value", f[0])));
        }
        if slot.replace((*line, f[1])).is_some() {
            return Err(Error::parse(*line, format!("duplicate `{}` line", f[0])));
        }
    }
    let last = text.lines().count().max(1);
    let need = |v: Option<(usize, &'a str)>, key: &str| {
        v.ok_or_else(|| Error::parse(last, format!("missing `{key}` line")))
    };
    let (l, v) = need(states, "states")?;
    let ns = index(l, v)?;
    let (l, v) = need(actions, "actions")?;
    let na = index(l, v)?;
    let (l, v) = need(gamma, "gamma")?;
    let gamma = number(l, v)?;

    let mut b = MdpBuilder::new(ns, na, gamma);
    let mut seen_t = std::collections::HashSet::new();
    let mut seen_r = std::collections::HashSet::new();
    for (line, f) in &lines {
        let line = *line;
        let at = |e: Error| Error::parse(line, e.to_string());
        match f.as_slice() {
            ["states" | "actions" | "gamma", ..] => {}
            ["terminal", rest @ ..] if !rest.is_empty() => {
                for s in rest {
                    b.terminal(index(line, s)?).map_err(at)?;
                }
            }
            ["start", rest @ ..] if !rest.is_empty() && rest.len() % 2 == 0 => {
                for pair in rest.chunks(2) {
                    b.start(index(line, pair[0])?, number(line, pair[1])?).map_err(at)?;
                }
            }
            ["t" | "r", s, a, next, v] => {
                let key = (index(line, s)?, index(line, a)?, index(line, next)?);
                let value = number(line, v)?;
                let fresh = if f[0] == "t" {
                    b.transition(key.0, key.1, key.2, value).map_err(at)?;
                    seen_t.insert(key)
                } else {
                    b.reward(key.0, key.1, key.2, value).map_err(at)?;
                    seen_r.insert(key)
                };
                if !fresh {
                    return Err(Error::parse(line, format!("duplicate `{}` entry for {key:?}", f[0])));
                }
            }
            _ => return Err(Error::parse(line, format!("unrecognized line `{}`", f.join(" ")))),
        }
    }
    b.build()
}

fn index(line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("`{s}` is not a non-negative integer")))
}

fn number(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::parse(line, format!("`{s}` is not a finite number")))
}

/// Canonical text: header, one `terminal` line, one `start` line per state
/// with positive mass, then positive transitions and nonzero rewards of
/// non-terminal rows in index order.
pub fn write_mdp(mdp: &Mdp) -> String {
    let mut out = format!(
        "states {}\nactions {}\ngamma {}\n",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.gamma()
    );
    let terminals: Vec<String> = mdp.terminals().map(|s| s.to_string()).collect();
    if !terminals.is_empty() {
        out.push_str(&format!("terminal {}\n", terminals.join(" ")));
    }
    for (s, p) in mdp.start_dist().iter().enumerate() {
        if *p > 0.0 {
            out.push_str(&format!("start {s} {p}\n"));
        }
    }
    let rows = || mdp.non_terminals().flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)));
    for (s, a) in rows() {
        for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
            if *p > 0.0 {
                out.push_str(&format!("t {s} {a} {next} {p}\n"));
            }
        }
    }
    for (s, a) in rows() {
        for (next, r) in mdp.reward_row(s, a).iter().enumerate() {
            if *r != 0.0 {
                out.push_str(&format!("r {s} {a} {next} {r}\n"));
            }
        }
    }
    out
}
