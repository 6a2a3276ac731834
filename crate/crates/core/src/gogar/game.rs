use std::collections::{BTreeMap, BTreeSet};

use super::log::{Move, MoveRecord, Outcome};
use super::universe::{ClosureMode, CounterId, CounterUniverse, ParticipantId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantState {
    pub id: ParticipantId,
    pub commitment_box: BTreeSet<CounterId>,
    pub entitlement_box: BTreeSet<CounterId>,
    /// Entitlements the participant has pledged to defend.
    pub defend_pledges: BTreeSet<CounterId>,
}

impl ParticipantState {
    fn new(id: ParticipantId) -> Self {
        ParticipantState {
            id,
            commitment_box: BTreeSet::new(),
            entitlement_box: BTreeSet::new(),
            defend_pledges: BTreeSet::new(),
        }
    }
}

/// A scorekeeping game: one universe, the participants' boxes, and the log of
/// every applied move. Moves that fail leave the state and the log as they
/// were.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameState {
    universe: CounterUniverse,
    mode: ClosureMode,
    participants: BTreeMap<ParticipantId, ParticipantState>,
    log: Vec<MoveRecord>,
}

impl GameState {
    pub fn new(universe: CounterUniverse) -> Self {
        Self::with_mode(universe, ClosureMode::Transitive)
    }

    pub fn with_mode(universe: CounterUniverse, mode: ClosureMode) -> Self {
        GameState {
            universe,
            mode,
            participants: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn universe(&self) -> &CounterUniverse {
        &self.universe
    }

    pub fn mode(&self) -> ClosureMode {
        self.mode
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantState> {
        self.participants.values()
    }

    pub fn participant(&self, id: &ParticipantId) -> Result<&ParticipantState> {
        self.participants.get(id).ok_or_else(|| Error::Membership {
            kind: "participant",
            id: id.to_string(),
        })
    }

    fn participant_mut(&mut self, id: &ParticipantId) -> Result<&mut ParticipantState> {
        self.participants.get_mut(id).ok_or_else(|| Error::Membership {
            kind: "participant",
            id: id.to_string(),
        })
    }

    pub fn move_log(&self) -> &[MoveRecord] {
        &self.log
    }

    fn push(&mut self, mv: Move, outcome: Outcome) -> Outcome {
        let seq = self.log.len() as u64;
        self.log.push(MoveRecord { seq, mv, outcome });
        outcome
    }

    pub fn join(&mut self, player: ParticipantId) -> Result<()> {
        if self.participants.contains_key(&player) {
            return Err(Error::input("gogar", format!("`{player}` has already joined")));
        }
        self.participants
            .insert(player.clone(), ParticipantState::new(player.clone()));
        self.push(Move::Join { player }, Outcome::Ok);
        Ok(())
    }

    /// Brings an unknown counter into the universe with no consequences and
    /// flags the event in the log. Returns false (and logs nothing) if the
    /// counter already exists.
    pub fn register(&mut self, player: &ParticipantId, counter: CounterId) -> Result<bool> {
        self.participant(player)?;
        if self.universe.contains(&counter) {
            return Ok(false);
        }
        self.universe.add_counter(counter.clone());
        self.push(
            Move::Register {
                player: player.clone(),
                counter,
            },
            Outcome::Flagged,
        );
        Ok(true)
    }

    /// Places `c` and its consequences in the player's commitment box.
    pub fn commit(&mut self, player: &ParticipantId, c: &CounterId) -> Result<()> {
        self.participant(player)?;
        let closure = self.universe.closure(c, self.mode)?;
        self.participant_mut(player)?.commitment_box.extend(closure);
        self.push(
            Move::Commit {
                player: player.clone(),
                counter: c.clone(),
            },
            Outcome::Ok,
        );
        Ok(())
    }

    /// Copies a committed counter into the entitlement box, pledging to
    /// defend it.
    pub fn entitle(&mut self, player: &ParticipantId, c: &CounterId) -> Result<()> {
        let st = self.participant_mut(player)?;
        if !st.commitment_box.contains(c) {
            return Err(Error::EntitlementWithoutCommitment {
                player: player.to_string(),
                counter: c.to_string(),
            });
        }
        st.entitlement_box.insert(c.clone());
        st.defend_pledges.insert(c.clone());
        self.push(
            Move::Entitle {
                player: player.clone(),
                counter: c.clone(),
            },
            Outcome::Ok,
        );
        Ok(())
    }

    /// A distinct committed counter whose closure contains `c`, if any.
    pub fn find_witness(&self, player: &ParticipantId, c: &CounterId) -> Result<Option<CounterId>> {
        let st = self.participant(player)?;
        for cand in st.commitment_box.iter().filter(|x| *x != c) {
            if self.universe.closure(cand, self.mode)?.contains(c) {
                return Ok(Some(cand.clone()));
            }
        }
        Ok(None)
    }

    /// A scorekeeper refuses the player's entitlement to `c`. The player
    /// keeps it only if some other committed counter has `c` among its
    /// consequences; otherwise `c` leaves the entitlement box and the defend
    /// pledges (the commitment stays).
    pub fn challenge(
        &mut self,
        scorekeeper: &ParticipantId,
        player: &ParticipantId,
        c: &CounterId,
    ) -> Result<Outcome> {
        self.participant(scorekeeper)?;
        if scorekeeper == player {
            return Err(Error::Role {
                module: "gogar",
                msg: format!("`{player}` cannot challenge itself"),
            });
        }
        if !self.participant(player)?.entitlement_box.contains(c) {
            return Err(Error::ChallengeTarget {
                player: player.to_string(),
                counter: c.to_string(),
            });
        }
        let outcome = if self.find_witness(player, c)?.is_some() {
            Outcome::Defended
        } else {
            let st = self.participant_mut(player)?;
            st.entitlement_box.remove(c);
            st.defend_pledges.remove(c);
            Outcome::Retracted
        };
        Ok(self.push(
            Move::Challenge {
                scorekeeper: scorekeeper.clone(),
                player: player.clone(),
                counter: c.clone(),
            },
            outcome,
        ))
    }

    /// True iff `c` is entitled and the player is pledged to defend it.
    pub fn is_assertion(&self, player: &ParticipantId, c: &CounterId) -> Result<bool> {
        let st = self.participant(player)?;
        Ok(st.entitlement_box.contains(c) && st.defend_pledges.contains(c))
    }

    /// [`GameState::is_assertion`], recorded as a move.
    pub fn assess(&mut self, player: &ParticipantId, c: &CounterId) -> Result<bool> {
        let verdict = self.is_assertion(player, c)?;
        self.push(
            Move::Assert {
                player: player.clone(),
                counter: c.clone(),
            },
            Outcome::Asserted(verdict),
        );
        Ok(verdict)
    }

    /// Applies `mv` and returns its outcome.
    pub fn apply(&mut self, mv: &Move) -> Result<Outcome> {
        match mv {
            Move::Join { player } => self.join(player.clone()).map(|_| Outcome::Ok),
            Move::Register { player, counter } => {
                if self.register(player, counter.clone())? {
                    Ok(Outcome::Flagged)
                } else {
                    Err(Error::input("gogar", format!("`{counter}` is already registered")))
                }
            }
            Move::Commit { player, counter } => self.commit(player, counter).map(|_| Outcome::Ok),
            Move::Entitle { player, counter } => self.entitle(player, counter).map(|_| Outcome::Ok),
            Move::Challenge {
                scorekeeper,
                player,
                counter,
            } => self.challenge(scorekeeper, player, counter),
            Move::Assert { player, counter } => self.assess(player, counter).map(Outcome::Asserted),
        }
    }

    /// Checks the structural invariants: boxes only hold known counters,
    /// entitlements are commitments, and pledges are entitlements.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for st in self.participants.values() {
            for c in st
                .commitment_box
                .iter()
                .chain(&st.entitlement_box)
                .chain(&st.defend_pledges)
            {
                if !self.universe.contains(c) {
                    return Err(format!("{}: box holds unknown counter {c}", st.id));
                }
            }
            if !st.entitlement_box.is_subset(&st.commitment_box) {
                return Err(format!("{}: entitlement box exceeds commitment box", st.id));
            }
            if !st.defend_pledges.is_subset(&st.entitlement_box) {
                return Err(format!("{}: defend pledges exceed entitlement box", st.id));
            }
        }
        Ok(())
    }
}

/// Rebuilds a game from `base` (the universe before any move) by re-applying
/// `records`. Sequence numbers must count up from zero and every recorded
/// outcome must be reproduced.
pub fn replay(base: &CounterUniverse, mode: ClosureMode, records: &[MoveRecord]) -> Result<GameState> {
    replay_lines(
        base,
        mode,
        records.iter().enumerate().map(|(i, r)| (i + 1, r)),
    )
}

pub(crate) fn replay_lines<'a>(
    base: &CounterUniverse,
    mode: ClosureMode,
    records: impl IntoIterator<Item = (usize, &'a MoveRecord)>,
) -> Result<GameState> {
    let mut g = GameState::with_mode(base.clone(), mode);
    for (line, rec) in records {
        let corrupt = |msg: String| Error::LogCorruption { line, msg };
        if rec.seq != g.log.len() as u64 {
            return Err(corrupt(format!(
                "sequence number {} where {} was expected",
                rec.seq,
                g.log.len()
            )));
        }
        let got = g.apply(&rec.mv).map_err(|e| corrupt(e.to_string()))?;
        if got != rec.outcome {
            return Err(corrupt(format!(
                "recorded outcome {:?} but replay produced {:?}",
                rec.outcome, got
            )));
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gogar::universe::tok;

    fn employment() -> CounterUniverse {
        let mut u = CounterUniverse::new();
        for c in ["offer", "work9am", "bowtie", "allowance", "wake6am"] {
            u.add_counter(tok(c));
        }
        u.add_consequence(&tok("offer"), &tok("work9am")).unwrap();
        u.add_consequence(&tok("offer"), &tok("bowtie")).unwrap();
        u.add_consequence(&tok("work9am"), &tok("wake6am")).unwrap();
        u
    }

    fn game() -> GameState {
        let mut g = GameState::new(employment());
        g.join(tok("employee")).unwrap();
        g.join(tok("hr")).unwrap();
        g
    }

    fn ids(xs: &[&str]) -> BTreeSet<CounterId> {
        xs.iter().map(|s| tok(s)).collect()
    }

    #[test]
    fn commit_places_consequences() {
        let mut g = game();
        g.commit(&tok("employee"), &tok("offer")).unwrap();
        let st = g.participant(&tok("employee")).unwrap();
        assert_eq!(st.commitment_box, ids(&["offer", "work9am", "bowtie", "wake6am"]));

        let mut direct = GameState::with_mode(employment(), ClosureMode::Direct);
        direct.join(tok("employee")).unwrap();
        direct.commit(&tok("employee"), &tok("offer")).unwrap();
        assert_eq!(
            direct.participant(&tok("employee")).unwrap().commitment_box,
            ids(&["offer", "work9am", "bowtie"])
        );
    }

    #[test]
    fn recommit_is_idempotent_but_logged() {
        let mut g = game();
        g.commit(&tok("employee"), &tok("offer")).unwrap();
        let boxed = g.participant(&tok("employee")).unwrap().commitment_box.clone();
        let n = g.move_log().len();
        g.commit(&tok("employee"), &tok("offer")).unwrap();
        assert_eq!(g.participant(&tok("employee")).unwrap().commitment_box, boxed);
        assert_eq!(g.move_log().len(), n + 1);
    }

    #[test]
    fn membership_errors() {
        let mut g = game();
        assert!(matches!(g.commit(&tok("nobody"), &tok("offer")), Err(Error::Membership { .. })));
        assert!(matches!(g.commit(&tok("hr"), &tok("ghost")), Err(Error::Membership { .. })));
        assert!(g.join(tok("hr")).is_err());
    }

    #[test]
    fn entitle_rules() {
        let mut g = game();
        let e = tok("employee");
        g.commit(&e, &tok("offer")).unwrap();
        g.entitle(&e, &tok("bowtie")).unwrap();
        g.entitle(&e, &tok("bowtie")).unwrap();
        let st = g.participant(&e).unwrap();
        assert_eq!(st.entitlement_box, ids(&["bowtie"]));
        assert_eq!(st.defend_pledges, ids(&["bowtie"]));
        assert!(matches!(
            g.entitle(&e, &tok("allowance")),
            Err(Error::EntitlementWithoutCommitment { .. })
        ));
    }

    #[test]
    fn unsupported_claim_is_retracted() {
        let mut g = game();
        let (e, hr) = (tok("employee"), tok("hr"));
        g.commit(&e, &tok("offer")).unwrap();
        g.commit(&e, &tok("allowance")).unwrap();
        g.entitle(&e, &tok("allowance")).unwrap();
        assert_eq!(g.challenge(&hr, &e, &tok("allowance")).unwrap(), Outcome::Retracted);
        let st = g.participant(&e).unwrap();
        assert!(!st.entitlement_box.contains(&tok("allowance")));
        assert!(!st.defend_pledges.contains(&tok("allowance")));
        assert!(st.commitment_box.contains(&tok("allowance")));
        assert!(!g.is_assertion(&e, &tok("allowance")).unwrap());
    }

    #[test]
    fn consequence_of_a_commitment_is_defended() {
        let mut g = game();
        let (e, hr) = (tok("employee"), tok("hr"));
        g.commit(&e, &tok("offer")).unwrap();
        g.entitle(&e, &tok("wake6am")).unwrap();
        assert_eq!(g.challenge(&hr, &e, &tok("wake6am")).unwrap(), Outcome::Defended);
        // Re-challenge is allowed and gives the same verdict.
        assert_eq!(g.challenge(&hr, &e, &tok("wake6am")).unwrap(), Outcome::Defended);
        assert!(g.is_assertion(&e, &tok("wake6am")).unwrap());
        // The root commitment has no distinct antecedent.
        g.entitle(&e, &tok("offer")).unwrap();
        assert_eq!(g.challenge(&hr, &e, &tok("offer")).unwrap(), Outcome::Retracted);
    }

    #[test]
    fn challenge_errors() {
        let mut g = game();
        let (e, hr) = (tok("employee"), tok("hr"));
        g.commit(&e, &tok("offer")).unwrap();
        g.entitle(&e, &tok("offer")).unwrap();
        assert!(matches!(g.challenge(&e, &e, &tok("offer")), Err(Error::Role { .. })));
        assert!(matches!(
            g.challenge(&hr, &e, &tok("bowtie")),
            Err(Error::ChallengeTarget { .. })
        ));
    }

    #[test]
    fn assertion_requires_entitlement() {
        let mut g = game();
        let e = tok("employee");
        g.commit(&e, &tok("offer")).unwrap();
        assert!(!g.is_assertion(&e, &tok("offer")).unwrap());
        g.entitle(&e, &tok("offer")).unwrap();
        assert!(g.is_assertion(&e, &tok("offer")).unwrap());
        assert!(g.assess(&e, &tok("offer")).unwrap());
    }

    #[test]
    fn replay_reproduces_state() {
        let mut g = game();
        let (e, hr) = (tok("employee"), tok("hr"));
        g.commit(&e, &tok("offer")).unwrap();
        g.register(&e, tok("bonus")).unwrap();
        g.commit(&e, &tok("bonus")).unwrap();
        g.entitle(&e, &tok("bonus")).unwrap();
        g.challenge(&hr, &e, &tok("bonus")).unwrap();
        g.assess(&e, &tok("bonus")).unwrap();
        let back = replay(&employment(), ClosureMode::Transitive, g.move_log()).unwrap();
        assert_eq!(back, g);
        assert!(back.check_invariants().is_ok());

        let empty = replay(&employment(), ClosureMode::Transitive, &[]).unwrap();
        assert_eq!(empty, GameState::new(employment()));
    }

    #[test]
    fn replay_detects_corruption() {
        let mut g = game();
        g.commit(&tok("employee"), &tok("offer")).unwrap();
        let mut log = g.move_log().to_vec();
        log[2].mv = Move::Commit { player: tok("employee"), counter: tok("ghost") };
        let err = replay(&employment(), ClosureMode::Transitive, &log).unwrap_err();
        assert!(matches!(err, Error::LogCorruption { line: 3, .. }), "{err}");

        let mut log = g.move_log().to_vec();
        log[1].seq = 7;
        assert!(matches!(
            replay(&employment(), ClosureMode::Transitive, &log),
            Err(Error::LogCorruption { line: 2, .. })
        ));
    }
}
