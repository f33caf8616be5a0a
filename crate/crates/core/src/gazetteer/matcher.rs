//! Aho-Corasick automaton over token symbols.
//!
//! Patterns are sequences of folded tokens and the input is a token sequence, so a pattern
//! can only match whole tokens: "ami" never matches inside "familie".

use std::collections::{HashMap, VecDeque};

const ROOT: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawMatch {
    pub pattern: usize,
    /// Token index of the first matched token.
    pub start: usize,
    /// One past the last matched token.
    pub end: usize,
}

impl RawMatch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, Default)]
pub struct TokenMatcher {
    symbols: HashMap<String, u32>,
    // sorted (symbol, next state) per state
    transitions: Vec<Vec<(u32, u32)>>,
    fail: Vec<u32>,
    // patterns recognised at each state, longest first
    outputs: Vec<Vec<u32>>,
    pattern_lens: Vec<usize>,
}

impl TokenMatcher {
    /// Compiles the patterns; pattern ids are their positions in `patterns`. Empty patterns
    /// never match.
    pub fn new<P, S>(patterns: &[P]) -> Self
    where
        P: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut m = TokenMatcher {
            symbols: HashMap::new(),
            transitions: vec![Vec::new()],
            fail: vec![ROOT],
            outputs: vec![Vec::new()],
            pattern_lens: Vec::with_capacity(patterns.len()),
        };
        for (id, pattern) in patterns.iter().enumerate() {
            let pattern = pattern.as_ref();
            m.pattern_lens.push(pattern.len());
            if pattern.is_empty() {
                continue;
            }
            let mut state = ROOT;
            for token in pattern {
                let next_symbol = m.symbols.len() as u32;
                let sym = *m
                    .symbols
                    .entry(token.as_ref().to_string())
                    .or_insert(next_symbol);
                state = match m.step(state, sym) {
                    Some(next) => next,
                    None => m.add_state(state, sym),
                };
            }
            m.outputs[state as usize].push(id as u32);
        }
        m.link();
        m
    }

    fn step(&self, state: u32, sym: u32) -> Option<u32> {
        let edges = &self.transitions[state as usize];
        edges
            .binary_search_by_key(&sym, |&(s, _)| s)
            .ok()
            .map(|i| edges[i].1)
    }

    fn add_state(&mut self, from: u32, sym: u32) -> u32 {
        let id = self.transitions.len() as u32;
        self.transitions.push(Vec::new());
        self.fail.push(ROOT);
        self.outputs.push(Vec::new());
        let edges = &mut self.transitions[from as usize];
        let pos = edges.partition_point(|&(s, _)| s < sym);
        edges.insert(pos, (sym, id));
        id
    }

    fn link(&mut self) {
        let mut queue = VecDeque::new();
        for &(_, child) in &self.transitions[ROOT as usize] {
            self.fail[child as usize] = ROOT;
            queue.push_back(child);
        }
        while let Some(state) = queue.pop_front() {
            let edges = self.transitions[state as usize].clone();
            for (sym, child) in edges {
                let mut f = self.fail[state as usize];
                let target = loop {
                    if let Some(next) = self.step(f, sym) {
                        break next;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = self.fail[f as usize];
                };
                self.fail[child as usize] = target;
                let inherited = self.outputs[target as usize].clone();
                self.outputs[child as usize].extend(inherited);
                queue.push_back(child);
            }
        }
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_lens.len()
    }

    /// Every occurrence of every pattern, including overlapping ones, sorted by start, then
    /// longest first, then pattern id.
    pub fn find_all<'a, I>(&self, tokens: I) -> Vec<RawMatch>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut found = Vec::new();
        let mut state = ROOT;
        for (i, token) in tokens.into_iter().enumerate() {
            let Some(&sym) = self.symbols.get(token) else {
                state = ROOT;
                continue;
            };
            state = loop {
                if let Some(next) = self.step(state, sym) {
                    break next;
                }
                if state == ROOT {
                    break ROOT;
                }
                state = self.fail[state as usize];
            };
            for &p in &self.outputs[state as usize] {
                let len = self.pattern_lens[p as usize];
                found.push(RawMatch {
                    pattern: p as usize,
                    start: i + 1 - len,
                    end: i + 1,
                });
            }
        }
        found.sort_unstable_by(|a, b| {
            a.start
                .cmp(&b.start)
                .then(b.end.cmp(&a.end))
                .then(a.pattern.cmp(&b.pattern))
        });
        found
    }

    pub fn find_leftmost_longest<'a, I>(&self, tokens: I) -> Vec<RawMatch>
    where
        I: IntoIterator<Item = &'a str>,
    {
        select_leftmost_longest(self.find_all(tokens))
    }
}

/// Left-to-right, non-overlapping selection: at each position the longest match wins.
/// Input must be ordered as returned by [`TokenMatcher::find_all`].
pub fn select_leftmost_longest(matches: Vec<RawMatch>) -> Vec<RawMatch> {
    let mut out: Vec<RawMatch> = Vec::new();
    let mut covered = 0;
    for m in matches {
        if m.start >= covered {
            covered = m.end;
            out.push(m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pats(p: &[&str]) -> Vec<Vec<String>> {
        p.iter()
            .map(|s| s.split(' ').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn single_token_match_position() {
        let m = TokenMatcher::new(&pats(&["italiener"]));
        let found = m.find_all(["beim", "italiener", "war", "das", "essen"]);
        assert_eq!(
            found,
            vec![RawMatch {
                pattern: 0,
                start: 1,
                end: 2
            }]
        );
    }

    #[test]
    fn whole_token_semantics() {
        let m = TokenMatcher::new(&pats(&["ami"]));
        assert!(m.find_all(["die", "familie"]).is_empty());
        assert_eq!(m.find_all(["ami"]).len(), 1);
    }

    #[test]
    fn overlapping_and_nested_patterns() {
        let m = TokenMatcher::new(&pats(&["a b c", "b", "b c", "c d", "x"]));
        let found = m.find_all(["a", "b", "c", "d"]);
        let spans: Vec<(usize, usize, usize)> =
            found.iter().map(|r| (r.pattern, r.start, r.end)).collect();
        assert_eq!(spans, vec![(0, 0, 3), (2, 1, 3), (1, 1, 2), (3, 2, 4)]);
        let selected = select_leftmost_longest(found);
        assert_eq!(selected.len(), 1);
        assert_eq!(selected[0].pattern, 0);
    }

    #[test]
    fn failure_links_recover_after_partial_match() {
        let m = TokenMatcher::new(&pats(&["a a b"]));
        assert_eq!(
            m.find_all(["a", "a", "a", "b"]),
            vec![RawMatch {
                pattern: 0,
                start: 1,
                end: 4
            }]
        );
    }

    #[test]
    fn empty_inputs() {
        let m = TokenMatcher::new(&pats(&["a"]));
        assert!(m.find_all(std::iter::empty::<&str>()).is_empty());
        let none: Vec<Vec<String>> = vec![vec![]];
        assert!(TokenMatcher::new(&none).find_all(["a"]).is_empty());
    }
}
