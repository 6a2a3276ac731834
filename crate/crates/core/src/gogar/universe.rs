use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// Opaque ASCII token naming a counter or a participant. Tokens are
/// non-empty, contain no whitespace, and do not start with `#`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

pub type CounterId = Token;
pub type ParticipantId = Token;

impl Token {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        let ok = !s.is_empty() && !s.starts_with('#') && s.bytes().all(|b| b.is_ascii_graphic());
        if !ok {
            return Err(Error::input("gogar", format!("`{s}` is not a valid token")));
        }
        Ok(Token(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Build a token from a literal known to be valid.
///
/// Panics on invalid input.
pub fn tok(s: &str) -> Token {
    Token::new(s).expect("valid token literal")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClosureMode {
    /// Commitment brings the whole reachable consequence set.
    #[default]
    Transitive,
    /// Commitment brings only the direct consequences.
    Direct,
}

/// Counters, their committive consequences, and an optional opposition
/// relation. Counters are registered on demand; the id space is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CounterUniverse {
    counters: BTreeSet<CounterId>,
    cc: BTreeMap<CounterId, BTreeSet<CounterId>>,
    incompatible: BTreeSet<(CounterId, CounterId)>,
    provenance: Option<String>,
}

impl CounterUniverse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `c`; returns false if it was already present.
    pub fn add_counter(&mut self, c: CounterId) -> bool {
        self.counters.insert(c)
    }

    pub fn contains(&self, c: &CounterId) -> bool {
        self.counters.contains(c)
    }

    fn require(&self, c: &CounterId) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::Membership {
                kind: "counter",
                id: c.to_string(),
            })
        }
    }

    /// Adds the edge `from => to`. Both counters must be registered.
    pub fn add_consequence(&mut self, from: &CounterId, to: &CounterId) -> Result<()> {
        self.require(from)?;
        self.require(to)?;
        self.cc.entry(from.clone()).or_default().insert(to.clone());
        Ok(())
    }

    /// Records that `a` and `b` stand in opposition. Stored as data only.
    pub fn add_incompatible(&mut self, a: &CounterId, b: &CounterId) -> Result<()> {
        self.require(a)?;
        self.require(b)?;
        if a == b {
            return Err(Error::input("gogar", format!("`{a}` cannot oppose itself")));
        }
        let pair = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.incompatible.insert(pair);
        Ok(())
    }

    pub fn are_incompatible(&self, a: &CounterId, b: &CounterId) -> bool {
        let pair = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.incompatible.contains(&pair)
    }

    pub fn set_provenance(&mut self, tag: impl Into<String>) {
        self.provenance = Some(tag.into());
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn counters(&self) -> &BTreeSet<CounterId> {
        &self.counters
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    /// Direct consequences of `c` (empty for unknown counters).
    pub fn consequences(&self, c: &CounterId) -> impl Iterator<Item = &CounterId> {
        self.cc.get(c).into_iter().flatten()
    }

    pub fn cc_edges(&self) -> impl Iterator<Item = (&CounterId, &CounterId)> {
        self.cc.iter().flat_map(|(from, tos)| tos.iter().map(move |to| (from, to)))
    }

    pub fn edge_count(&self) -> usize {
        self.cc.values().map(BTreeSet::len).sum()
    }

    pub fn incompatible_pairs(&self) -> impl Iterator<Item = &(CounterId, CounterId)> {
        self.incompatible.iter()
    }

    /// Everything reachable from `c` along consequence edges, `c` included.
    /// Cycles are fine.
    pub fn cc_closure(&self, c: &CounterId) -> Result<BTreeSet<CounterId>> {
        self.require(c)?;
        let mut seen = BTreeSet::from([c.clone()]);
        let mut queue = VecDeque::from([c]);
        while let Some(cur) = queue.pop_front() {
            for next in self.consequences(cur) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        Ok(seen)
    }

    /// `c` plus its direct consequences.
    pub fn direct_closure(&self, c: &CounterId) -> Result<BTreeSet<CounterId>> {
        self.require(c)?;
        let mut out: BTreeSet<CounterId> = self.consequences(c).cloned().collect();
        out.insert(c.clone());
        Ok(out)
    }

    pub fn closure(&self, c: &CounterId, mode: ClosureMode) -> Result<BTreeSet<CounterId>> {
        match mode {
            ClosureMode::Transitive => self.cc_closure(c),
            ClosureMode::Direct => self.direct_closure(c),
        }
    }

    /// Line-oriented text form: optional `provenance <tag>`, then
    /// `counter <id>` lines, `cc <from> <to>...` lines, and
    /// `incompatible <a> <b>` lines, all in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.provenance {
            out.push_str(&format!("provenance {p}\n"));
        }
        for c in &self.counters {
            out.push_str(&format!("counter {c}\n"));
        }
        for (from, tos) in &self.cc {
            if tos.is_empty() {
                continue;
            }
            out.push_str(&format!("cc {from}"));
            for to in tos {
                out.push_str(&format!(" {to}"));
            }
            out.push('\n');
        }
        for (a, b) in &self.incompatible {
            out.push_str(&format!("incompatible {a} {b}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut u = CounterUniverse::new();
        for (i, line) in text.lines().enumerate() {
            u.parse_line(line, i + 1)?;
        }
        Ok(u)
    }

    /// Applies one line of the text form; blank lines and `#` comments are
    /// skipped.
    pub(crate) fn parse_line(&mut self, line: &str, lineno: usize) -> Result<()> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(());
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let token = |s: &str| Token::new(s).map_err(|e| Error::parse(lineno, e.to_string()));
        let wrap = |e: Error| Error::parse(lineno, e.to_string());
        match fields.as_slice() {
            ["provenance", tag] => self.set_provenance(*tag),
            ["counter", id] => {
                self.add_counter(token(id)?);
            }
            ["cc", from, tos @ ..] if !tos.is_empty() => {
                let from = token(from)?;
                for to in tos {
                    let to = token(to)?;
                    self.add_consequence(&from, &to).map_err(wrap)?;
                }
            }
            ["incompatible", a, b] => {
                self.add_incompatible(&token(a)?, &token(b)?).map_err(wrap)?;
            }
            _ => return Err(Error::parse(lineno, format!("unrecognized universe line `{line}`"))),
        }
        Ok(())
    }
}
