//! C interface to `gogar-rl`.
//!
//! Every function returns a [`GogarStatus`]. On failure the message is kept
//! per thread and can be read with [`gogar_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gogar_rl::bridge::{check_structural_equivalence, to_gogar_universe, TokenGraph};
use gogar_rl::gogar::{ClosureMode, CounterUniverse, GameState, Outcome};
use gogar_rl::harness::commands::parse_script;
use gogar_rl::harness::parse_mdp;
use gogar_rl::mdp::{value_iteration, Mdp};
use gogar_rl::qlearning::{greedy_policy, train_q, QConfig};
use gogar_rl::Error;

/// Result codes shared by every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GogarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Parse = 4,
    Validation = 5,
    InvalidArgument = 6,
    Gogar = 7,
    Bridge = 8,
    Panic = 9,
}

/// Outcome of an applied GOGAR move.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GogarOutcome {
    Ok = 0,
    Flagged = 1,
    Defended = 2,
    Retracted = 3,
    AssertedTrue = 4,
    AssertedFalse = 5,
}

/// Opaque MDP handle.
pub struct GogarMdp(Mdp);

/// Opaque GOGAR game handle.
pub struct GogarGame(GameState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn classify(e: &Error) -> GogarStatus {
    match e {
        Error::Parse { .. } | Error::LogCorruption { .. } => GogarStatus::Parse,
        Error::Validation(_) => GogarStatus::Validation,
        Error::PartialPolicy(_) | Error::Bridge(_) => GogarStatus::Bridge,
        _ if e.module() == "gogar" => GogarStatus::Gogar,
        _ => GogarStatus::InvalidArgument,
    }
}

struct Fail(GogarStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(classify(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GogarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GogarStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside gogar-rl".into());
            GogarStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GogarStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GogarStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(
            GogarStatus::BufferTooSmall,
            format!("{what} holds {len} entries, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gogar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Parses an MDP from its text form.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gogar_mdp_parse(text: *const c_char, out: *mut *mut GogarMdp) -> GogarStatus {
    guard(|| {
        let src = c_str(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mdp = parse_mdp(src)?;
        *out = Box::into_raw(Box::new(GogarMdp(mdp)));
        Ok(())
    })
}

/// # Safety
/// `mdp` must come from [`gogar_mdp_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gogar_mdp_free(mdp: *mut GogarMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Writes the state and action counts.
///
/// # Safety
/// `mdp` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn gogar_mdp_shape(
    mdp: *const GogarMdp,
    n_states: *mut usize,
    n_actions: *mut usize,
) -> GogarStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        *out_slice(n_states, 1, 1, "n_states")?.first_mut().unwrap() = m.n_states();
        *out_slice(n_actions, 1, 1, "n_actions")?.first_mut().unwrap() = m.n_actions();
        Ok(())
    })
}

/// Value iteration to tolerance `tol`. Fills `values` and `actions` (one
/// entry per state; `-1` at terminal states).
///
/// # Safety
/// `values` and `actions` must point to at least `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn gogar_value_iteration(
    mdp: *const GogarMdp,
    tol: f64,
    values: *mut f64,
    actions: *mut i64,
    len: usize,
) -> GogarStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        let n = m.n_states();
        let values = out_slice(values, len, n, "values")?;
        let actions = out_slice(actions, len, n, "actions")?;
        let sol = value_iteration(m, tol)?;
        values.copy_from_slice(&sol.values);
        fill_policy(m, &sol.policy, actions);
        Ok(())
    })
}

fn fill_policy(m: &Mdp, policy: &[usize], out: &mut [i64]) {
    for (s, slot) in out.iter_mut().enumerate() {
        *slot = if m.is_terminal(s) { -1 } else { policy[s] as i64 };
    }
}

/// Tabular Q-learning; writes the greedy policy into `actions` (`-1` at
/// terminal states).
///
/// # Safety
/// `actions` must point to at least `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn gogar_train_q(
    mdp: *const GogarMdp,
    episodes: usize,
    alpha: f64,
    epsilon: f64,
    seed: u64,
    actions: *mut i64,
    len: usize,
) -> GogarStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        let actions = out_slice(actions, len, m.n_states(), "actions")?;
        let cfg = QConfig {
            episodes,
            alpha,
            gamma: None,
            epsilon,
            seed,
            step_cap: None,
        };
        let q = train_q(m, &cfg)?;
        fill_policy(m, &greedy_policy(&q), actions);
        Ok(())
    })
}

/// Builds the token graph of a deterministic policy (`-1` at terminal
/// states) and checks it against its GOGAR universe. Writes the edge count
/// and the verdict.
///
/// # Safety
/// `policy` must point to `len` readable entries; the out pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gogar_bridge_check(
    mdp: *const GogarMdp,
    policy: *const i64,
    len: usize,
    n_edges: *mut usize,
    equivalent: *mut bool,
) -> GogarStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        if policy.is_null() {
            return Err(null("policy"));
        }
        let raw = std::slice::from_raw_parts(policy, len);
        if len != m.n_states() {
            return Err(Fail(
                GogarStatus::InvalidArgument,
                format!("policy has {len} entries for {} states", m.n_states()),
            ));
        }
        let policy: Vec<Option<usize>> = raw.iter().map(|a| usize::try_from(*a).ok()).collect();
        let graph = TokenGraph::from_policy(m, &policy, "ffi")?;
        let ok = check_structural_equivalence(&graph, &to_gogar_universe(&graph));
        *out_slice(n_edges, 1, 1, "n_edges")?.first_mut().unwrap() = graph.edges().len();
        *out_slice(equivalent, 1, 1, "equivalent")?.first_mut().unwrap() = ok;
        Ok(())
    })
}

/// Starts a game over a universe in its text form. `direct` selects
/// direct-consequence commitment instead of the transitive closure.
///
/// # Safety
/// `universe` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gogar_game_new(
    universe: *const c_char,
    direct: bool,
    out: *mut *mut GogarGame,
) -> GogarStatus {
    guard(|| {
        let u = CounterUniverse::parse(c_str(universe, "universe")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mode = if direct {
            ClosureMode::Direct
        } else {
            ClosureMode::Transitive
        };
        *out = Box::into_raw(Box::new(GogarGame(GameState::with_mode(u, mode))));
        Ok(())
    })
}

/// # Safety
/// `game` must come from [`gogar_game_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gogar_game_free(game: *mut GogarGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Applies one move written as a script line, e.g. `commit ann rain` or
/// `challenge bo ann wet`. A rejected move leaves the game unchanged.
///
/// # Safety
/// `game` must be a live handle, `line` NUL-terminated, `outcome` writable.
#[no_mangle]
pub unsafe extern "C" fn gogar_game_apply(
    game: *mut GogarGame,
    line: *const c_char,
    outcome: *mut GogarOutcome,
) -> GogarStatus {
    guard(|| {
        let g = &mut game.as_mut().ok_or_else(|| null("game"))?.0;
        let moves = parse_script(c_str(line, "line")?)?;
        let [(_, mv)] = moves.as_slice() else {
            return Err(Fail(GogarStatus::Parse, "expected exactly one move".into()));
        };
        if outcome.is_null() {
            return Err(null("outcome"));
        }
        *outcome = match g.apply(mv)? {
            Outcome::Ok => GogarOutcome::Ok,
            Outcome::Flagged => GogarOutcome::Flagged,
            Outcome::Defended => GogarOutcome::Defended,
            Outcome::Retracted => GogarOutcome::Retracted,
            Outcome::Asserted(true) => GogarOutcome::AssertedTrue,
            Outcome::Asserted(false) => GogarOutcome::AssertedFalse,
        };
        Ok(())
    })
}

/// Copies the move log as NUL-terminated text into `buf`. `needed` receives
/// the required size including the NUL, also when the buffer is too small.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be NULL with `cap` 0);
/// `needed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gogar_game_log(
    game: *const GogarGame,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> GogarStatus {
    guard(|| {
        let g = &handle(game, "game")?.0;
        let log = gogar_rl::gogar::write_log(g.move_log());
        let size = log.len() + 1;
        *out_slice(needed, 1, 1, "needed")?.first_mut().unwrap() = size;
        if buf.is_null() && cap == 0 {
            return Err(Fail(GogarStatus::BufferTooSmall, format!("log needs {size} bytes")));
        }
        let dst = out_slice(buf as *mut u8, cap, size, "buf")?;
        dst[..log.len()].copy_from_slice(log.as_bytes());
        dst[log.len()] = 0;
        Ok(())
    })
}
