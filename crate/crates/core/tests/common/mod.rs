//! Reference computations shared by the integration tests. Nothing here
//! calls into the solvers under test.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use gogar_rl::gogar::{ClosureMode, CounterUniverse, GameState, Move, MoveRecord, Outcome};
use gogar_rl::harness::load_mdp;
use gogar_rl::mdp::Mdp;

pub const TIE_TOL: f64 = 1e-8;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> Mdp {
    load_mdp(fixture(name)).unwrap()
}

/// Prints straight to the process stdout so the line survives test output
/// capture.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance criterion {criterion}: {verdict} ({detail})").unwrap();
    out.flush().unwrap();
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Exact `V^pi` of a deterministic policy; terminal states are worth 0.
pub fn evaluate(mdp: &Mdp, policy: &[usize]) -> Vec<f64> {
    let n = mdp.n_states();
    let g = mdp.gamma();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] = 1.0;
        if mdp.is_terminal(s) {
            continue;
        }
        let act = policy[s];
        for next in 0..n {
            let p = mdp.transition_row(s, act)[next];
            b[s] += p * mdp.reward(s, act, next);
            if !mdp.is_terminal(next) {
                a[s][next] -= g * p;
            }
        }
    }
    solve(a, b)
}

pub fn q_value(mdp: &Mdp, v: &[f64], s: usize, a: usize) -> f64 {
    (0..mdp.n_states())
        .map(|next| {
            let p = mdp.transition_row(s, a)[next];
            let cont = if mdp.is_terminal(next) { 0.0 } else { v[next] };
            p * (mdp.reward(s, a, next) + mdp.gamma() * cont)
        })
        .sum()
}

/// Policy iteration with exact evaluation. Returns `V*` and, per
/// non-terminal state, the set of actions within `TIE_TOL` of the best.
pub fn optimal(mdp: &Mdp) -> (Vec<f64>, Vec<BTreeSet<usize>>) {
    let n = mdp.n_states();
    let mut policy = vec![0usize; n];
    loop {
        let v = evaluate(mdp, &policy);
        let mut stable = true;
        for s in (0..n).filter(|s| !mdp.is_terminal(*s)) {
            let q: Vec<f64> = (0..mdp.n_actions()).map(|a| q_value(mdp, &v, s, a)).collect();
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if q[policy[s]] < best - TIE_TOL {
                policy[s] = q.iter().position(|x| *x == best).unwrap();
                stable = false;
            }
        }
        if stable {
            let sets = (0..n)
                .map(|s| {
                    if mdp.is_terminal(s) {
                        return BTreeSet::new();
                    }
                    let q: Vec<f64> = (0..mdp.n_actions()).map(|a| q_value(mdp, &v, s, a)).collect();
                    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    (0..mdp.n_actions()).filter(|a| q[*a] >= best - TIE_TOL).collect()
                })
                .collect();
            return (v, sets);
        }
    }
}

/// `(state, action)` for every non-terminal state with exactly one optimal
/// action.
pub fn unique_optimal(mdp: &Mdp) -> Vec<(usize, usize)> {
    optimal(mdp)
        .1
        .iter()
        .enumerate()
        .filter(|(_, set)| set.len() == 1)
        .map(|(s, set)| (s, *set.iter().next().unwrap()))
        .collect()
}

/// States among `targets` where `policy` picks a different action.
pub fn disagreements(targets: &[(usize, usize)], policy: &[usize]) -> Vec<usize> {
    targets
        .iter()
        .filter(|(s, a)| policy[*s] != *a)
        .map(|(s, _)| *s)
        .collect()
}

fn boxes(g: &GameState) -> Vec<(String, BTreeSet<String>, BTreeSet<String>)> {
    g.participants()
        .map(|p| {
            let names = |set: &BTreeSet<gogar_rl::gogar::Token>| set.iter().map(|t| t.to_string()).collect();
            (p.id.to_string(), names(&p.commitment_box), names(&p.entitlement_box))
        })
        .collect()
}

/// Re-applies `records` one by one on a fresh game, checking after each
/// move: entitlements stay inside commitments, commitments never shrink,
/// a retracted challenge removes exactly the challenged counter from the
/// challenged player's entitlements, and every other move leaves
/// entitlements alone or adds the one entitled counter. Returns the final
/// game.
pub fn check_moves(base: &CounterUniverse, mode: ClosureMode, records: &[MoveRecord]) -> Result<GameState, String> {
    let mut g = GameState::with_mode(base.clone(), mode);
    for rec in records {
        let before = boxes(&g);
        let out = g.apply(&rec.mv).map_err(|e| format!("move {}: {e}", rec.seq))?;
        if out != rec.outcome {
            return Err(format!("move {}: outcome {out:?}, recorded {:?}", rec.seq, rec.outcome));
        }
        let after = boxes(&g);
        for (id, commit, ent) in &after {
            if !ent.is_subset(commit) {
                return Err(format!("move {}: {id} entitled beyond commitments", rec.seq));
            }
            let Some((_, c0, e0)) = before.iter().find(|(b, _, _)| b == id) else {
                continue;
            };
            if !c0.is_subset(commit) {
                return Err(format!("move {}: {id} lost a commitment", rec.seq));
            }
            let removed: Vec<_> = e0.difference(ent).collect();
            let added: Vec<_> = ent.difference(e0).collect();
            let target = |p: &gogar_rl::gogar::Token, c: &gogar_rl::gogar::Token| {
                p.as_str() == id && !e0.contains(c.as_str())
            };
            match (&rec.mv, out) {
                (Move::Challenge { player, counter, .. }, Outcome::Retracted) if player.as_str() == id => {
                    if removed != vec![&counter.to_string()] || !added.is_empty() {
                        return Err(format!("move {}: retraction changed {removed:?} / {added:?}", rec.seq));
                    }
                }
                (Move::Entitle { player, counter }, _) if target(player, counter) => {
                    if !removed.is_empty() || added != vec![&counter.to_string()] {
                        return Err(format!("move {}: entitle changed {removed:?} / {added:?}", rec.seq));
                    }
                }
                _ => {
                    if !removed.is_empty() || !added.is_empty() {
                        return Err(format!("move {}: entitlements of {id} changed", rec.seq));
                    }
                }
            }
        }
        g.check_invariants().map_err(|e| format!("move {}: {e}", rec.seq))?;
    }
    Ok(g)
}
