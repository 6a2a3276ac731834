//! Move-log records and their one-line text form.
//!
//! ```text
//! <seq> join <player> ok
//! <seq> register <player> <counter> flagged
//! <seq> commit <player> <counter> ok
//! <seq> entitle <player> <counter> ok
//! <seq> challenge <scorekeeper> <player> <counter> defended|retracted
//! <seq> assert <player> <counter> true|false
//! ```
//!
//! Fields are separated by single spaces. Lines starting with `#` are
//! comments and carry no moves.

use std::fmt;

use super::universe::{CounterId, ParticipantId, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    Join {
        player: ParticipantId,
    },
    /// Lazily brings a counter into the universe with no consequences.
    Register {
        player: ParticipantId,
        counter: CounterId,
    },
    Commit {
        player: ParticipantId,
        counter: CounterId,
    },
    Entitle {
        player: ParticipantId,
        counter: CounterId,
    },
    Challenge {
        scorekeeper: ParticipantId,
        player: ParticipantId,
        counter: CounterId,
    },
    /// A scorekeeper's check of whether a claim counts as an assertion.
    Assert {
        player: ParticipantId,
        counter: CounterId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Flagged,
    Defended,
    Retracted,
    Asserted(bool),
}

impl Outcome {
    fn as_str(&self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::Flagged => "flagged",
            Outcome::Defended => "defended",
            Outcome::Retracted => "retracted",
            Outcome::Asserted(true) => "true",
            Outcome::Asserted(false) => "false",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveRecord {
    pub seq: u64,
    pub mv: Move,
    pub outcome: Outcome,
}

impl fmt::Display for MoveRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let out = self.outcome.as_str();
        match &self.mv {
            Move::Join { player } => write!(f, "{} join {player} {out}", self.seq),
            Move::Register { player, counter } => {
                write!(f, "{} register {player} {counter} {out}", self.seq)
            }
            Move::Commit { player, counter } => {
                write!(f, "{} commit {player} {counter} {out}", self.seq)
            }
            Move::Entitle { player, counter } => {
                write!(f, "{} entitle {player} {counter} {out}", self.seq)
            }
            Move::Challenge {
                scorekeeper,
                player,
                counter,
            } => write!(
                f,
                "{} challenge {scorekeeper} {player} {counter} {out}",
                self.seq
            ),
            Move::Assert { player, counter } => {
                write!(f, "{} assert {player} {counter} {out}", self.seq)
            }
        }
    }
}

impl MoveRecord {
    pub fn parse_line(line: &str, lineno: usize) -> Result<MoveRecord> {
        let corrupt = |msg: String| Error::LogCorruption { line: lineno, msg };
        let fields: Vec<&str> = line.split(' ').collect();
        let token = |s: &str| Token::new(s).map_err(|e| corrupt(e.to_string()));
        let seq: u64 = fields
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt(format!("bad sequence number in `{line}`")))?;
        let outcome = |s: &str, allowed: &[Outcome]| {
            allowed
                .iter()
                .copied()
                .find(|o| o.as_str() == s)
                .ok_or_else(|| corrupt(format!("unexpected outcome `{s}`")))
        };
        let (mv, out) = match &fields[1..] {
            ["join", p, o] => (Move::Join { player: token(p)? }, outcome(o, &[Outcome::Ok])?),
            ["register", p, c, o] => (
                Move::Register {
                    player: token(p)?,
                    counter: token(c)?,
                },
                outcome(o, &[Outcome::Flagged])?,
            ),
            ["commit", p, c, o] => (
                Move::Commit {
                    player: token(p)?,
                    counter: token(c)?,
                },
                outcome(o, &[Outcome::Ok])?,
            ),
            ["entitle", p, c, o] => (
                Move::Entitle {
                    player: token(p)?,
                    counter: token(c)?,
                },
                outcome(o, &[Outcome::Ok])?,
            ),
            ["challenge", k, p, c, o] => (
                Move::Challenge {
                    scorekeeper: token(k)?,
                    player: token(p)?,
                    counter: token(c)?,
                },
                outcome(o, &[Outcome::Defended, Outcome::Retracted])?,
            ),
            ["assert", p, c, o] => (
                Move::Assert {
                    player: token(p)?,
                    counter: token(c)?,
                },
                outcome(o, &[Outcome::Asserted(true), Outcome::Asserted(false)])?,
            ),
            _ => return Err(corrupt(format!("malformed move `{line}`"))),
        };
        Ok(MoveRecord {
            seq,
            mv,
            outcome: out,
        })
    }
}

/// Renders records one per line, each terminated by `\n`.
pub fn write_log(records: &[MoveRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Parses a move log, skipping blank and `#` lines. Returns each record with
/// its 1-based source line.
pub fn parse_log(text: &str) -> Result<Vec<(usize, MoveRecord)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| MoveRecord::parse_line(l, i + 1).map(|r| (i + 1, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gogar::universe::tok;

    #[test]
    fn lines_round_trip() {
        let recs = vec![
            MoveRecord { seq: 0, mv: Move::Join { player: tok("alice") }, outcome: Outcome::Ok },
            MoveRecord {
                seq: 1,
                mv: Move::Register { player: tok("alice"), counter: tok("x_3_1") },
                outcome: Outcome::Flagged,
            },
            MoveRecord {
                seq: 2,
                mv: Move::Commit { player: tok("alice"), counter: tok("offer") },
                outcome: Outcome::Ok,
            },
            MoveRecord {
                seq: 3,
                mv: Move::Challenge { scorekeeper: tok("hr"), player: tok("alice"), counter: tok("allowance") },
                outcome: Outcome::Retracted,
            },
            MoveRecord {
                seq: 4,
                mv: Move::Assert { player: tok("alice"), counter: tok("offer") },
                outcome: Outcome::Asserted(false),
            },
        ];
        let text = write_log(&recs);
        assert_eq!(
            text.lines().nth(3).unwrap(),
            "3 challenge hr alice allowance retracted"
        );
        let back: Vec<MoveRecord> = parse_log(&text).unwrap().into_iter().map(|(_, r)| r).collect();
        assert_eq!(back, recs);
        assert_eq!(write_log(&back), text);
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            "x commit a c ok",
            "1 commit a c defended",
            "1 commit a ok",
            "1 teleport a c ok",
            "1  commit a c ok",
            "1 challenge k p c maybe",
        ] {
            let err = parse_log(bad).unwrap_err();
            assert!(matches!(err, Error::LogCorruption { line: 1, .. }), "{bad}: {err}");
        }
        assert!(parse_log("# meta round 1\n\n").unwrap().is_empty());
    }
}
