//! Self-contained trace files: move logs annotated with `# meta` comments.
//!
//! A file holds one or more games. Each game starts with a header line
//! `# meta game <label...>`, followed by `# meta mode transitive|direct`
//! and the base universe as `# meta universe <universe line>` lines. Move
//! lines follow; further `# meta` lines are kept as annotations. Plain `#`
//! comments and blank lines are ignored.

use super::game::{replay_lines, GameState};
use super::log::MoveRecord;
use super::universe::{ClosureMode, CounterUniverse};
use crate::error::{Error, Result};

const META: &str = "# meta ";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSection {
    /// Line of the `# meta game` header.
    pub line: usize,
    pub label: String,
    pub mode: ClosureMode,
    pub universe: CounterUniverse,
    pub records: Vec<(usize, MoveRecord)>,
    pub annotations: Vec<(usize, String)>,
}

impl TraceSection {
    pub fn replay(&self) -> Result<GameState> {
        replay_lines(
            &self.universe,
            self.mode,
            self.records.iter().map(|(l, r)| (*l, r)),
        )
    }
}

fn mode_name(mode: ClosureMode) -> &'static str {
    match mode {
        ClosureMode::Transitive => "transitive",
        ClosureMode::Direct => "direct",
    }
}

/// Renders one game. `notes` pairs a log position with an annotation that
/// is written just before the record at that position (or after the last
/// record if the position equals the log length).
pub fn write_section(
    label: &str,
    base: &CounterUniverse,
    game: &GameState,
    notes: &[(usize, String)],
) -> String {
    let mut out = format!("{META}game {label}\n{META}mode {}\n", mode_name(game.mode()));
    for line in base.to_text().lines() {
        out.push_str(&format!("{META}universe {line}\n"));
    }
    let log = game.move_log();
    let mut notes = notes.iter().peekable();
    for pos in 0..=log.len() {
        while let Some((_, note)) = notes.next_if(|(p, _)| *p <= pos) {
            out.push_str(&format!("{META}{note}\n"));
        }
        if let Some(rec) = log.get(pos) {
            out.push_str(&rec.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceSection>> {
    let mut sections: Vec<TraceSection> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let corrupt = |msg: String| Error::LogCorruption { line: lineno, msg };
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix(META) {
            if let Some(label) = meta.strip_prefix("game") {
                sections.push(TraceSection {
                    line: lineno,
                    label: label.trim().to_string(),
                    mode: ClosureMode::Transitive,
                    universe: CounterUniverse::new(),
                    records: Vec::new(),
                    annotations: Vec::new(),
                });
                continue;
            }
            let sec = sections
                .last_mut()
                .ok_or_else(|| corrupt("meta line before any game header".into()))?;
            if let Some(rest) = meta.strip_prefix("universe ") {
                if !sec.records.is_empty() {
                    return Err(corrupt("universe line after the first move".into()));
                }
                sec.universe
                    .parse_line(rest, lineno)
                    .map_err(|e| corrupt(e.to_string()))?;
            } else if let Some(rest) = meta.strip_prefix("mode ") {
                sec.mode = match rest {
                    "transitive" => ClosureMode::Transitive,
                    "direct" => ClosureMode::Direct,
                    other => return Err(corrupt(format!("unknown closure mode `{other}`"))),
                };
            } else {
                sec.annotations.push((lineno, meta.to_string()));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let sec = sections
            .last_mut()
            .ok_or_else(|| corrupt("move before any game header".into()))?;
        sec.records.push((lineno, MoveRecord::parse_line(line, lineno)?));
    }
    Ok(sections)
}

/// Parses and replays every game in a trace file.
pub fn replay_trace(text: &str) -> Result<Vec<GameState>> {
    parse_trace(text)?.iter().map(TraceSection::replay).collect()
}
