//! Bodies of the CLI subcommands. Each returns the text to print.

use std::fmt::Write as _;
use std::path::Path;

use super::checkpoint::{parse_policy_list, Checkpoint};
use super::mdp_file::load_mdp;
use crate::approx::OneHot;
use crate::bridge::{check_structural_equivalence, to_gogar_universe, TokenGraph};
use crate::error::{Error, Result};
use crate::gogar::{replay_trace, write_section, ClosureMode, CounterUniverse, GameState, Move, Token};
use crate::mdp::value_iteration;

/// Value-iteration tolerance used by `oracle`.
pub const ORACLE_TOL: f64 = 1e-10;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `V*` and the lowest-index optimal action of every state, plus the policy
/// line (`-` at terminal states) that `bridge` accepts.
pub fn oracle(mdp_path: &Path) -> Result<(String, Checkpoint)> {
    let mdp = load_mdp(mdp_path)?;
    let sol = value_iteration(&mdp, ORACLE_TOL)?;
    let mut out = format!(
        "# value iteration: {} sweeps, residual {:e}\nstate value action\n",
        sol.iterations, sol.residual
    );
    let mut policy = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            writeln!(out, "{s} {} -", sol.values[s]).unwrap();
            policy.push(None);
        } else {
            writeln!(out, "{s} {} {}", sol.values[s], sol.policy[s]).unwrap();
            policy.push(Some(sol.policy[s]));
        }
    }
    Ok((out, Checkpoint::Policy(policy)))
}

fn provenance_tag(mdp_path: &Path) -> String {
    let stem = mdp_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clean: String = stem
        .chars()
        .map(|c| if c.is_ascii_graphic() { c } else { '_' })
        .collect();
    format!("mdp:{clean}")
}

/// Token graph of a deterministic policy, followed by `#` report lines.
/// `policy` is a checkpoint file or an inline list such as `0,0,-`.
pub fn bridge(mdp_path: &Path, policy: &str, greedy: bool, unit: Option<&str>) -> Result<String> {
    let mdp = load_mdp(mdp_path)?;
    let fm = OneHot::new(mdp.n_states());
    let actions = if Path::new(policy).is_file() {
        Checkpoint::load(policy)?.deterministic_policy(&fm, mdp.n_states(), greedy, unit)?
    } else {
        parse_policy_list(policy)?
    };
    let graph = TokenGraph::from_policy(&mdp, &actions, &provenance_tag(mdp_path))?;
    let universe = to_gogar_universe(&graph);
    let equivalent = check_structural_equivalence(&graph, &universe);
    let mut out = graph.to_text();
    writeln!(
        out,
        "# universe: {} counters, {} consequence edges, provenance {}",
        universe.len(),
        universe.edge_count(),
        universe.provenance().unwrap_or("-")
    )
    .unwrap();
    writeln!(out, "# absorbing exits: {}", graph.absorbing_exits(&mdp).len()).unwrap();
    writeln!(out, "# structural equivalence: {equivalent}").unwrap();
    if !equivalent {
        return Err(Error::Bridge("token graph and universe are not structurally equivalent".into()));
    }
    Ok(out)
}

/// Parses a move script: `join p`, `register p c`, `commit p c`,
/// `entitle p c`, `challenge k p c`, `assert p c`, one per line.
pub fn parse_script(text: &str) -> Result<Vec<(usize, Move)>> {
    let mut moves = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let t = |s: &str| Token::new(s).map_err(|e| Error::parse(lineno, e.to_string()));
        let mv = match fields.as_slice() {
            ["join", p] => Move::Join { player: t(p)? },
            ["register", p, c] => Move::Register {
                player: t(p)?,
                counter: t(c)?,
            },
            ["commit", p, c] => Move::Commit {
                player: t(p)?,
                counter: t(c)?,
            },
            ["entitle", p, c] => Move::Entitle {
                player: t(p)?,
                counter: t(c)?,
            },
            ["challenge", k, p, c] => Move::Challenge {
                scorekeeper: t(k)?,
                player: t(p)?,
                counter: t(c)?,
            },
            ["assert", p, c] => Move::Assert {
                player: t(p)?,
                counter: t(c)?,
            },
            _ => return Err(Error::parse(lineno, format!("unrecognized move `{line}`"))),
        };
        moves.push((lineno, mv));
    }
    Ok(moves)
}

/// Participants' boxes, one block per participant.
pub fn render_boxes(game: &GameState) -> String {
    let mut out = String::new();
    let join = |set: &std::collections::BTreeSet<Token>| {
        set.iter().map(Token::as_str).collect::<Vec<_>>().join(" ")
    };
    for p in game.participants() {
        writeln!(out, "participant {}", p.id).unwrap();
        writeln!(out, "  commitments: {}", join(&p.commitment_box)).unwrap();
        writeln!(out, "  entitlements: {}", join(&p.entitlement_box)).unwrap();
    }
    out
}

/// Applies a script to a fresh game over the universe. Returns the final
/// boxes and the game as a trace-file section.
pub fn gogar_sim(universe_path: &Path, script_path: &Path, mode: ClosureMode) -> Result<(String, String)> {
    let universe = CounterUniverse::parse(&read(universe_path)?)?;
    let script = parse_script(&read(script_path)?)?;
    let mut game = GameState::with_mode(universe.clone(), mode);
    let mut out = String::new();
    for (line, mv) in &script {
        let outcome = game
            .apply(mv)
            .map_err(|e| Error::input("gogar", format!("script line {line}: {e}")))?;
        let rec = game.move_log().last().expect("applied moves are logged");
        debug_assert_eq!(rec.outcome, outcome);
        writeln!(out, "{rec}").unwrap();
    }
    game.check_invariants()
        .map_err(|m| Error::input("gogar", format!("invariant violated: {m}")))?;
    out.push_str(&render_boxes(&game));
    let label = script_path.display().to_string().replace(char::is_whitespace, "_");
    Ok((out, write_section(&label, &universe, &game, &[])))
}

/// Replays every game in a trace file and summarizes the final states.
pub fn replay(trace_path: &Path) -> Result<String> {
    let text = read(trace_path)?;
    let games = replay_trace(&text)?;
    let sections = crate::gogar::parse_trace(&text)?;
    let mut out = String::new();
    for (sec, game) in sections.iter().zip(&games) {
        game.check_invariants()
            .map_err(|m| Error::input("gogar", format!("game at line {}: {m}", sec.line)))?;
        writeln!(out, "game {}: {} moves replayed", sec.label, game.move_log().len()).unwrap();
        out.push_str(&render_boxes(game));
    }
    writeln!(out, "{} games, all consistent", games.len()).unwrap();
    Ok(out)
}
