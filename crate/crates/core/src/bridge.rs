//! From deterministic MDP policies to GOGAR counter universes.
//!
//! A policy that picks action `a` in state `s` yields the state-action token
//! `x_<s>_<a>`. Token `(s, a)` has a committive-consequence edge to token
//! `(s', a')` whenever taking `a` in `s` reaches `s'` with positive
//! probability. Terminal states get no token (the policy is never queried
//! there); a positive-probability move into a terminal state is an
//! absorbing exit rather than an edge.
//!
//! Every graph carries a provenance tag naming the transition model its
//! edges were read from, and the tag travels into the universe.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::gogar::{CounterId, CounterUniverse, Token};
use crate::mdp::Mdp;

/// State-action pair selected by a deterministic policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyToken {
    pub state: usize,
    pub action: usize,
}

impl PolicyToken {
    pub fn new(state: usize, action: usize) -> Self {
        PolicyToken { state, action }
    }

    pub fn counter_id(&self) -> CounterId {
        Token::new(format!("x_{}_{}", self.state, self.action)).expect("counter ids are valid tokens")
    }

    /// Inverse of [`PolicyToken::counter_id`].
    pub fn from_counter_id(c: &CounterId) -> Option<Self> {
        let rest = c.as_str().strip_prefix("x_")?;
        let (s, a) = rest.split_once('_')?;
        let canonical = |x: &str| !x.is_empty() && (x == "0" || !x.starts_with('0'));
        if !canonical(s) || !canonical(a) {
            return None;
        }
        Some(PolicyToken::new(s.parse().ok()?, a.parse().ok()?))
    }
}

pub type TokenEdge = (PolicyToken, PolicyToken);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGraph {
    tokens: BTreeSet<PolicyToken>,
    edges: BTreeSet<TokenEdge>,
    provenance: String,
}

impl TokenGraph {
    pub fn new(tokens: BTreeSet<PolicyToken>, edges: BTreeSet<TokenEdge>, provenance: &str) -> Result<Self> {
        if provenance.is_empty() {
            return Err(Error::Bridge("token relation needs a provenance tag".into()));
        }
        Token::new(provenance)
            .map_err(|_| Error::Bridge(format!("provenance `{provenance}` is not a token")))?;
        if let Some((a, b)) = edges
            .iter()
            .find(|(a, b)| !tokens.contains(a) || !tokens.contains(b))
        {
            return Err(Error::Bridge(format!("edge {a:?} -> {b:?} leaves the token set")));
        }
        Ok(TokenGraph {
            tokens,
            edges,
            provenance: provenance.to_string(),
        })
    }

    /// Tokens and edges of `policy` on `mdp`.
    pub fn from_policy(mdp: &Mdp, policy: &[Option<usize>], provenance: &str) -> Result<Self> {
        let tokens = tokens_from_policy(mdp, policy)?;
        let edges = token_edges(mdp, &tokens)?;
        TokenGraph::new(tokens, edges, provenance)
    }

    pub fn tokens(&self) -> &BTreeSet<PolicyToken> {
        &self.tokens
    }

    pub fn edges(&self) -> &BTreeSet<TokenEdge> {
        &self.edges
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn out_degree(&self, t: &PolicyToken) -> usize {
        self.edges.iter().filter(|(a, _)| a == t).count()
    }

    /// Tokens that reach a terminal state with positive probability.
    pub fn absorbing_exits(&self, mdp: &Mdp) -> BTreeSet<PolicyToken> {
        self.tokens
            .iter()
            .filter(|t| {
                mdp.transition_row(t.state, t.action)
                    .iter()
                    .enumerate()
                    .any(|(next, p)| *p > 0.0 && mdp.is_terminal(next))
            })
            .copied()
            .collect()
    }

    /// Tokens whose states can occur when starting from the start
    /// distribution and following the graph.
    pub fn reachable_from_start(&self, mdp: &Mdp) -> BTreeSet<PolicyToken> {
        let by_state: BTreeMap<usize, PolicyToken> = self.tokens.iter().map(|t| (t.state, *t)).collect();
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<PolicyToken> = mdp
            .start_dist()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .filter_map(|(s, _)| by_state.get(&s).copied())
            .collect();
        while let Some(t) = queue.pop_front() {
            if !seen.insert(t) {
                continue;
            }
            queue.extend(self.edges.iter().filter(|(a, _)| *a == t).map(|(_, b)| *b));
        }
        seen
    }

    /// `provenance <tag>`, then `tok <s> <a>` lines and
    /// `edge <s> <a> <s'> <a'>` lines in sorted order. The parser skips
    /// `#` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("provenance {}\n", self.provenance);
        for t in &self.tokens {
            out.push_str(&format!("tok {} {}\n", t.state, t.action));
        }
        for (a, b) in &self.edges {
            out.push_str(&format!("edge {} {} {} {}\n", a.state, a.action, b.state, b.action));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut provenance = None;
        let mut tokens = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(lineno, format!("`{s}` is not an index")))
            };
            match fields.as_slice() {
                [] => {}
                [first, ..] if first.starts_with('#') => {}
                ["provenance", tag] if provenance.is_none() => provenance = Some(tag.to_string()),
                ["tok", s, a] => {
                    tokens.insert(PolicyToken::new(num(s)?, num(a)?));
                }
                ["edge", s, a, s2, a2] => {
                    edges.insert((
                        PolicyToken::new(num(s)?, num(a)?),
                        PolicyToken::new(num(s2)?, num(a2)?),
                    ));
                }
                _ => return Err(Error::parse(lineno, format!("unrecognized token-graph line `{line}`"))),
            }
        }
        let provenance = provenance.ok_or_else(|| Error::parse(1, "missing provenance header"))?;
        TokenGraph::new(tokens, edges, &provenance)
    }
}

/// One token per non-terminal state: `(s, policy[s])`.
pub fn tokens_from_policy(mdp: &Mdp, policy: &[Option<usize>]) -> Result<BTreeSet<PolicyToken>> {
    mdp.non_terminals()
        .map(|s| match policy.get(s).copied().flatten() {
            None => Err(Error::PartialPolicy(s)),
            Some(a) if a >= mdp.n_actions() => Err(Error::Index(format!("policy action {a} at state {s}"))),
            Some(a) => Ok(PolicyToken::new(s, a)),
        })
        .collect()
}

/// Edge `(s, a) -> (s', a')` for every pair of tokens with
/// `T(s' | s, a) > 0`.
pub fn token_edges(mdp: &Mdp, tokens: &BTreeSet<PolicyToken>) -> Result<BTreeSet<TokenEdge>> {
    let mut by_state: BTreeMap<usize, PolicyToken> = BTreeMap::new();
    for t in tokens {
        let foreign = t.state >= mdp.n_states()
            || t.action >= mdp.n_actions()
            || mdp.is_terminal(t.state)
            || by_state.insert(t.state, *t).is_some();
        if foreign {
            return Err(Error::Bridge(format!(
                "token ({}, {}) does not belong to a deterministic policy on this MDP",
                t.state, t.action
            )));
        }
    }
    let mut edges = BTreeSet::new();
    for t in tokens {
        for (next, p) in mdp.transition_row(t.state, t.action).iter().enumerate() {
            if *p > 0.0 {
                if let Some(target) = by_state.get(&next) {
                    edges.insert((*t, *target));
                }
            }
        }
    }
    Ok(edges)
}

/// One counter `x_<s>_<a>` per token and one consequence per edge; the
/// provenance tag is carried over.
pub fn to_gogar_universe(g: &TokenGraph) -> CounterUniverse {
    let mut u = CounterUniverse::new();
    for t in &g.tokens {
        u.add_counter(t.counter_id());
    }
    for (a, b) in &g.edges {
        u.add_consequence(&a.counter_id(), &b.counter_id())
            .expect("edge endpoints are tokens");
    }
    u.set_provenance(g.provenance.clone());
    u
}

/// True iff tokens and counters correspond one to one and edges correspond
/// exactly to consequence pairs.
pub fn check_structural_equivalence(g: &TokenGraph, u: &CounterUniverse) -> bool {
    let mut counter_tokens = BTreeSet::new();
    for c in u.counters() {
        match PolicyToken::from_counter_id(c) {
            Some(t) if counter_tokens.insert(t) => {}
            _ => return false,
        }
    }
    if counter_tokens != g.tokens {
        return false;
    }
    let mut cc_edges = BTreeSet::new();
    for (a, b) in u.cc_edges() {
        match (PolicyToken::from_counter_id(a), PolicyToken::from_counter_id(b)) {
            (Some(a), Some(b)) => {
                cc_edges.insert((a, b));
            }
            _ => return false,
        }
    }
    cc_edges == g.edges
}
