//! The Game of Giving and Asking for Reasons as a scorekeeping engine.
//!
//! Counters stand for claims. Committing to a counter also commits the
//! player to its committive consequences. Entitled counters must be defended
//! when a scorekeeper challenges them: a challenge is met when another
//! counter the player is committed to has the challenged one among its
//! consequences, and otherwise the entitlement is retracted.
//!
//! Every applied move is logged, and [`replay`] rebuilds a game from its base
//! universe and the log. Trace files bundle logs with their universes.

mod game;
mod log;
mod trace;
mod universe;

pub use game::{replay, GameState, ParticipantState};
pub use log::{parse_log, write_log, Move, MoveRecord, Outcome};
pub use trace::{parse_trace, replay_trace, write_section, TraceSection};
pub use universe::{tok, ClosureMode, CounterId, CounterUniverse, ParticipantId, Token};
