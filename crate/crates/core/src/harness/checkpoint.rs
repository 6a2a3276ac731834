//! Text checkpoints for learned parameters and policies.
//!
//! The first word of the first line names the kind: `qtable`, `softmax`,
//! `population` or `policy`. Numbers are written with 17 significant digits
//! so every checkpoint reads back bit for bit.

use crate::approx::{FeatureMap, LinearValueFn, Matrix, SoftmaxPolicy};
use crate::error::{Error, Result};
use crate::population::{parse_population, write_population, ParticipantUnit};
use crate::qlearning::QTable;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    QTable(QTable),
    Softmax { policy: SoftmaxPolicy, value: LinearValueFn },
    Population(Vec<ParticipantUnit>),
    /// Deterministic policy; `None` marks states where it is undefined.
    Policy(Vec<Option<usize>>),
}

fn row(tag: &str, xs: &[f64]) -> String {
    let mut line = tag.to_string();
    for x in xs {
        line.push_str(&format!(" {x:.16e}"));
    }
    line.push('\n');
    line
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        match self {
            Checkpoint::QTable(q) => {
                let mut out = format!("qtable {} {}\n", q.n_states(), q.n_actions());
                for s in 0..q.n_states() {
                    out.push_str(&row("q", q.row(s)));
                }
                out
            }
            Checkpoint::Softmax { policy, value } => {
                let mut out = format!("softmax {} {}\n", policy.n_actions(), policy.dim());
                for a in 0..policy.n_actions() {
                    out.push_str(&row("theta", policy.theta.row(a)));
                }
                out.push_str(&row("w", &value.w));
                out
            }
            Checkpoint::Population(units) => write_population(units),
            Checkpoint::Policy(p) => {
                let mut out = "policy".to_string();
                for a in p {
                    match a {
                        Some(a) => out.push_str(&format!(" {a}")),
                        None => out.push_str(" -"),
                    }
                }
                out.push('\n');
                out
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let first = text.split_whitespace().next().unwrap_or("");
        match first {
            "population" => parse_population(text).map(Checkpoint::Population),
            "policy" => parse_policy_line(text.lines().next().unwrap_or("")).map(Checkpoint::Policy),
            "qtable" | "softmax" => parse_matrices(text),
            _ => Err(Error::parse(1, "unknown checkpoint kind")),
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The deterministic policy this checkpoint stands for. Softmax policies
    /// are stochastic and need `greedy`; a population also needs `unit`.
    pub fn deterministic_policy(
        &self,
        fm: &dyn FeatureMap,
        n_states: usize,
        greedy: bool,
        unit: Option<&str>,
    ) -> Result<Vec<Option<usize>>> {
        let stochastic = |what: &str| {
            Error::DeterministicPolicyRequired(format!(
                "{what} is stochastic; pass --greedy to use its greedy policy"
            ))
        };
        let check_states = |n: usize| {
            if n != n_states {
                Err(Error::input("harness", format!("checkpoint covers {n} states, MDP has {n_states}")))
            } else {
                Ok(())
            }
        };
        let greedy_of = |p: &SoftmaxPolicy| -> Result<Vec<Option<usize>>> {
            check_states(p.dim())?;
            Ok(p.greedy_policy(fm, n_states).into_iter().map(Some).collect())
        };
        match self {
            Checkpoint::Policy(p) => {
                check_states(p.len())?;
                Ok(p.clone())
            }
            Checkpoint::QTable(q) => {
                check_states(q.n_states())?;
                Ok((0..q.n_states()).map(|s| Some(q.greedy_action(s))).collect())
            }
            Checkpoint::Softmax { policy, .. } => {
                if !greedy {
                    return Err(stochastic("softmax policy checkpoint"));
                }
                greedy_of(policy)
            }
            Checkpoint::Population(units) => {
                if !greedy {
                    return Err(stochastic("population checkpoint"));
                }
                let unit = match unit {
                    Some(id) => units
                        .iter()
                        .find(|u| u.id.as_str() == id)
                        .ok_or_else(|| Error::input("harness", format!("no unit `{id}` in checkpoint")))?,
                    None => units
                        .first()
                        .ok_or_else(|| Error::input("harness", "empty population checkpoint"))?,
                };
                greedy_of(&unit.policy)
            }
        }
    }
}

/// `policy a0 a1 ...` with `-` for undefined states.
fn parse_policy_line(line: &str) -> Result<Vec<Option<usize>>> {
    line.split_whitespace()
        .skip(1)
        .map(|f| match f {
            "-" => Ok(None),
            _ => f
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(1, format!("`{f}` is not an action index"))),
        })
        .collect()
}

/// Comma-separated inline policy such as `0,1,-`.
pub fn parse_policy_list(s: &str) -> Result<Vec<Option<usize>>> {
    parse_policy_line(&format!("policy {}", s.replace(',', " ")))
}

fn parse_matrices(text: &str) -> Result<Checkpoint> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
        .filter(|(_, f): &(usize, Vec<&str>)| !f.is_empty())
        .collect();
    let (kind, r, c) = match lines.first().map(|(_, f)| f.as_slice()) {
        Some([kind, r, c]) => {
            let n = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(1, format!("`{s}` is not a count")));
            (*kind, n(r)?, n(c)?)
        }
        _ => return Err(Error::parse(1, "expected `<kind> <rows> <cols>`")),
    };
    let read = |idx: usize, tag: &str| -> Result<Vec<f64>> {
        let (line, f) = lines
            .get(idx)
            .ok_or_else(|| Error::parse(idx + 1, format!("missing `{tag}` row")))?;
        if f[0] != tag || f.len() != c + 1 {
            return Err(Error::parse(*line, format!("expected `{tag}` with {c} values")));
        }
        f[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(*line, format!("`{s}` is not a finite number")))
            })
            .collect()
    };
    let extra = if kind == "softmax" { 1 } else { 0 };
    if lines.len() != 1 + r + extra {
        return Err(Error::parse(
            lines.last().map(|(l, _)| *l).unwrap_or(1),
            format!("expected {} data rows", r + extra),
        ));
    }
    if kind == "qtable" {
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            values.extend(read(1 + i, "q")?);
        }
        Ok(Checkpoint::QTable(QTable::from_values(r, c, values)?))
    } else {
        let mut theta = Vec::with_capacity(r * c);
        for i in 0..r {
            theta.extend(read(1 + i, "theta")?);
        }
        let w = read(1 + r, "w")?;
        Ok(Checkpoint::Softmax {
            policy: SoftmaxPolicy {
                theta: Matrix::from_vec(r, c, theta)?,
            },
            value: LinearValueFn { w },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::OneHot;

    #[test]
    fn round_trips() {
        let q = QTable::from_values(2, 2, vec![0.1, -1.0 / 3.0, 1e-300, 2.5e10]).unwrap();
        let mut policy = SoftmaxPolicy::zeros(2, 3);
        policy.theta.set(1, 2, std::f64::consts::PI);
        let value = LinearValueFn { w: vec![1.0 / 7.0, 0.0, -2.0] };
        for ck in [
            Checkpoint::QTable(q),
            Checkpoint::Softmax { policy, value },
            Checkpoint::Policy(vec![Some(1), None, Some(0)]),
            Checkpoint::Population(vec![ParticipantUnit::new(0, 2, 3), ParticipantUnit::new(1, 2, 3)]),
        ] {
            let text = ck.to_text();
            assert_eq!(Checkpoint::parse(&text).unwrap(), ck, "{text}");
        }
    }

    #[test]
    fn stochastic_policies_need_greedy() {
        let fm = OneHot::new(3);
        let mut policy = SoftmaxPolicy::zeros(2, 3);
        policy.theta.set(1, 0, 1.0);
        let ck = Checkpoint::Softmax {
            policy,
            value: LinearValueFn::zeros(3),
        };
        let err = ck.deterministic_policy(&fm, 3, false, None).unwrap_err();
        assert!(err.to_string().contains("deterministic policy required"));
        assert_eq!(
            ck.deterministic_policy(&fm, 3, true, None).unwrap(),
            vec![Some(1), Some(0), Some(0)]
        );
        assert!(ck.deterministic_policy(&fm, 4, true, None).is_err());
    }

    #[test]
    fn inline_lists() {
        assert_eq!(parse_policy_list("0,1,-").unwrap(), vec![Some(0), Some(1), None]);
        assert!(parse_policy_list("0,x").is_err());
        assert!(Checkpoint::parse("qtable 1 2\nq 1\n").is_err());
        assert!(Checkpoint::parse("weights 1\n").is_err());
    }
}
