//! Dictionary automata and the ambiguity table.
//!
//! The frequent-word, word and user-word dictionaries all share [`Dawg`], a
//! minimal acyclic automaton built incrementally from sorted input.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{self, BinError, Reader};

const DAWG_MAGIC: &[u8; 4] = b"GDAW";
const DAWG_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("word {word:?} uses glyph {glyph:?} outside the alphabet")]
    UnknownGlyph { word: String, glyph: char },
    #[error("invalid UTF-8 at byte {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("ambiguity table line {line}: {reason}")]
    Ambig { line: usize, reason: String },
    #[error("dawg: {0}")]
    Format(#[from] BinError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DawgNode {
    /// Outgoing edges sorted by glyph.
    pub edges: Vec<(char, u32)>,
    pub is_final: bool,
}

/// Minimal deterministic acyclic automaton over glyphs.
///
/// Nodes are numbered in topological order from the root (id 0), so every
/// edge points to a higher id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dawg {
    nodes: Vec<DawgNode>,
    root: u32,
}

impl Default for Dawg {
    fn default() -> Self {
        Self::empty()
    }
}

impl Dawg {
    /// The automaton accepting no words.
    pub fn empty() -> Self {
        Self {
            nodes: vec![DawgNode::default()],
            root: 0,
        }
    }

    pub fn nodes(&self) -> &[DawgNode] {
        &self.nodes
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.edges.len()).sum()
    }

    fn step(&self, node: u32, glyph: char) -> Option<u32> {
        let edges = &self.nodes[node as usize].edges;
        edges
            .binary_search_by_key(&glyph, |e| e.0)
            .ok()
            .map(|i| edges[i].1)
    }

    pub fn contains(&self, word: &str) -> bool {
        let mut node = self.root;
        for c in word.chars() {
            match self.step(node, c) {
                Some(n) => node = n,
                None => return false,
            }
        }
        self.nodes[node as usize].is_final
    }

    pub fn is_empty_language(&self) -> bool {
        self.words().is_empty()
    }

    /// All accepted words in lexicographic order.
    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut prefix = String::new();
        self.collect(self.root, &mut prefix, &mut out);
        out
    }

    fn collect(&self, node: u32, prefix: &mut String, out: &mut Vec<String>) {
        let n = &self.nodes[node as usize];
        if n.is_final {
            out.push(prefix.clone());
        }
        for &(c, next) in &n.edges {
            prefix.push(c);
            self.collect(next, prefix, out);
            prefix.pop();
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = binio::header(DAWG_MAGIC, DAWG_VERSION);
        binio::put_u32(&mut out, self.nodes.len() as u32);
        binio::put_u32(&mut out, self.root);
        for n in &self.nodes {
            out.push(u8::from(n.is_final));
            binio::put_u32(&mut out, n.edges.len() as u32);
            for &(c, t) in &n.edges {
                binio::put_u32(&mut out, c as u32);
                binio::put_u32(&mut out, t);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BinError> {
        let mut r = Reader::open(bytes, DAWG_MAGIC, DAWG_VERSION)?;
        let count = r.count(5)?;
        let root = r.u32()?;
        if count == 0 || root as usize >= count {
            return Err(BinError::Invalid {
                offset: r.offset(),
                reason: format!("root {root} out of range for {count} nodes"),
            });
        }
        let mut nodes = Vec::with_capacity(count);
        for id in 0..count {
            let offset = r.offset();
            let is_final = match r.u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(BinError::Invalid {
                        offset,
                        reason: format!("final flag {other}"),
                    })
                }
            };
            let n_edges = r.count(8)?;
            let mut edges = Vec::with_capacity(n_edges);
            for _ in 0..n_edges {
                let offset = r.offset();
                let c = r.char()?;
                let t = r.u32()?;
                if t as usize >= count || t as usize <= id {
                    return Err(BinError::Invalid {
                        offset,
                        reason: format!("edge {id} -> {t} breaks topological order"),
                    });
                }
                if edges.last().is_some_and(|&(prev, _)| prev >= c) {
                    return Err(BinError::Invalid {
                        offset,
                        reason: "edges not strictly sorted".into(),
                    });
                }
                edges.push((c, t));
            }
            nodes.push(DawgNode { edges, is_final });
        }
        r.finish()?;
        Ok(Self { nodes, root })
    }
}

/// Builds the minimal automaton accepting exactly `words` (duplicates
/// ignored). With an alphabet, every glyph must belong to it.
pub fn build_dawg<S: AsRef<str>>(
    words: &[S],
    alphabet: Option<&[char]>,
) -> Result<Dawg, LexiconError> {
    if let Some(alpha) = alphabet {
        for w in words {
            let w = w.as_ref();
            if let Some(glyph) = w.chars().find(|c| !alpha.contains(c)) {
                return Err(LexiconError::UnknownGlyph {
                    word: w.to_string(),
                    glyph,
                });
            }
        }
    }
    let mut sorted: Vec<Vec<char>> = words.iter().map(|w| w.as_ref().chars().collect()).collect();
    sorted.sort_unstable();
    sorted.dedup();

    let mut builder = Builder::default();
    for word in &sorted {
        builder.insert(word);
    }
    Ok(builder.finish())
}

#[derive(Default)]
struct Builder {
    nodes: Vec<DawgNode>,
    register: HashMap<DawgNode, u32>,
    /// Path of the previous word not yet minimized: (parent, glyph, child).
    unchecked: Vec<(u32, char, u32)>,
    previous: Vec<char>,
}

impl Builder {
    fn new_node(&mut self) -> u32 {
        self.nodes.push(DawgNode::default());
        (self.nodes.len() - 1) as u32
    }

    fn insert(&mut self, word: &[char]) {
        if self.nodes.is_empty() {
            self.new_node();
        }
        let common = word
            .iter()
            .zip(&self.previous)
            .take_while(|(a, b)| a == b)
            .count();
        self.minimize(common);
        let mut node = self.unchecked.last().map_or(0, |&(_, _, child)| child);
        for &c in &word[common..] {
            let next = self.new_node();
            // Input is sorted, so appending keeps edges sorted.
            self.nodes[node as usize].edges.push((c, next));
            self.unchecked.push((node, c, next));
            node = next;
        }
        self.nodes[node as usize].is_final = true;
        self.previous = word.to_vec();
    }

    fn minimize(&mut self, down_to: usize) {
        while self.unchecked.len() > down_to {
            let (parent, c, child) = self.unchecked.pop().unwrap();
            let key = self.nodes[child as usize].clone();
            match self.register.get(&key) {
                Some(&existing) => {
                    let edge = self.nodes[parent as usize]
                        .edges
                        .iter_mut()
                        .find(|e| e.0 == c)
                        .expect("unchecked edge exists");
                    edge.1 = existing;
                }
                None => {
                    self.register.insert(key, child);
                }
            }
        }
    }

    fn finish(mut self) -> Dawg {
        if self.nodes.is_empty() {
            return Dawg::empty();
        }
        self.minimize(0);
        // Renumber reachable nodes in reverse post-order so edges point forward.
        let mut post = Vec::new();
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![(0u32, 0usize)];
        visited[0] = true;
        while let Some(top) = stack.last_mut() {
            let (node, next_edge) = *top;
            let edges = &self.nodes[node as usize].edges;
            if next_edge < edges.len() {
                let child = edges[next_edge].1;
                top.1 += 1;
                if !visited[child as usize] {
                    visited[child as usize] = true;
                    stack.push((child, 0));
                }
            } else {
                post.push(node);
                stack.pop();
            }
        }
        post.reverse();
        let mut new_id = vec![u32::MAX; self.nodes.len()];
        for (i, &old) in post.iter().enumerate() {
            new_id[old as usize] = i as u32;
        }
        let nodes = post
            .iter()
            .map(|&old| {
                let n = &self.nodes[old as usize];
                DawgNode {
                    edges: n.edges.iter().map(|&(c, t)| (c, new_id[t as usize])).collect(),
                    is_final: n.is_final,
                }
            })
            .collect();
        Dawg { nodes, root: 0 }
    }
}

/// One word per non-empty line, surrounding whitespace stripped.
pub fn parse_wordlist(bytes: &[u8]) -> Result<Vec<String>, LexiconError> {
    let text = std::str::from_utf8(bytes).map_err(|e| LexiconError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_wordlist<S: AsRef<str>>(words: &[S]) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(w.as_ref());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbigRule {
    pub source: Vec<String>,
    pub replacement: Vec<String>,
    pub mandatory: bool,
}

/// Confusable glyph sequences. Rules only ever propose alternatives; they
/// never replace a recognized label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbigTable {
    pub rules: Vec<AmbigRule>,
}

impl AmbigTable {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Every distinct string reachable from `text` by applying one optional
    /// rule at one position, sorted.
    pub fn single_rewrites(&self, text: &str) -> Vec<String> {
        let glyphs: Vec<String> = text.chars().map(String::from).collect();
        let mut out = Vec::new();
        for rule in self.rules.iter().filter(|r| !r.mandatory) {
            let n = rule.source.len();
            if n == 0 || n > glyphs.len() {
                continue;
            }
            for start in 0..=glyphs.len() - n {
                if glyphs[start..start + n] == rule.source[..] {
                    let mut s: String = glyphs[..start].concat();
                    s.push_str(&rule.replacement.concat());
                    s.push_str(&glyphs[start + n..].concat());
                    out.push(s);
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            write!(out, "{} {} {} {} {}", r.source.len(), r.source.join(" "), r.replacement.len(), r.replacement.join(" "), u8::from(r.mandatory))
                .expect("writing to a String cannot fail");
            out.push('\n');
        }
        out
    }
}

/// Parses lines of the form `n src_1..src_n m dst_1..dst_m [mandatory]`.
pub fn parse_ambigs(bytes: &[u8]) -> Result<AmbigTable, LexiconError> {
    let text = std::str::from_utf8(bytes).map_err(|e| LexiconError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |reason: &str| LexiconError::Ambig {
            line,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let n: usize = fields[0].parse().map_err(|_| err("source count is not an integer"))?;
        if n == 0 {
            return Err(err("source sequence is empty"));
        }
        let source = fields.get(1..1 + n).ok_or_else(|| err("too few source glyphs"))?;
        let m: usize = fields
            .get(1 + n)
            .ok_or_else(|| err("missing replacement count"))?
            .parse()
            .map_err(|_| err("replacement count is not an integer"))?;
        if m == 0 {
            return Err(err("replacement sequence is empty"));
        }
        let rest = &fields[2 + n..];
        if rest.len() < m {
            return Err(err("too few replacement glyphs"));
        }
        let mandatory = match &rest[m..] {
            [] | ["0"] => false,
            ["1"] => true,
            [_] => return Err(err("mandatory flag must be 0 or 1")),
            _ => return Err(err("unexpected trailing fields")),
        };
        rules.push(AmbigRule {
            source: source.iter().map(|s| s.to_string()).collect(),
            replacement: rest[..m].iter().map(|s| s.to_string()).collect(),
            mandatory,
        });
    }
    Ok(AmbigTable { rules })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashSet};

    /// Independent route to the minimal state count: build a plain trie,
    /// then merge states bottom-up by right-language signature.
    fn trie_minimized_count(words: &[String]) -> usize {
        #[derive(Default)]
        struct Trie {
            children: BTreeMap<char, usize>,
            fin: bool,
        }
        let mut trie = vec![Trie::default()];
        for w in words {
            let mut n = 0;
            for c in w.chars() {
                n = match trie[n].children.get(&c) {
                    Some(&x) => x,
                    None => {
                        trie.push(Trie::default());
                        let id = trie.len() - 1;
                        trie[n].children.insert(c, id);
                        id
                    }
                };
            }
            trie[n].fin = true;
        }
        type Signature = (bool, Vec<(char, usize)>);
        fn classify(
            n: usize,
            trie: &[Trie],
            sigs: &mut HashMap<Signature, usize>,
        ) -> usize {
            let kids: Vec<(char, usize)> = trie[n]
                .children
                .iter()
                .map(|(&c, &k)| (c, classify(k, trie, sigs)))
                .collect();
            let next = sigs.len();
            *sigs.entry((trie[n].fin, kids)).or_insert(next)
        }
        let mut sigs = HashMap::new();
        classify(0, &trie, &mut sigs);
        sigs.len()
    }

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_list_accepts_nothing() {
        let d = build_dawg::<&str>(&[], None).unwrap();
        assert!(!d.contains("1"));
        assert!(!d.contains(""));
        assert!(d.is_empty_language());
        assert_eq!(d.node_count(), 1);
    }

    #[test]
    fn small_set_membership_and_minimality() {
        let ws = words(&["1", "12", "13"]);
        let d = build_dawg(&ws, None).unwrap();
        assert!(d.contains("1") && d.contains("12") && d.contains("13"));
        assert!(!d.contains("2") && !d.contains("123") && !d.contains(""));
        // root -1-> A(final) -{2,3}-> F(final)
        assert_eq!(d.node_count(), 3);
        assert_eq!(d.node_count(), trie_minimized_count(&ws));
    }

    #[test]
    fn shares_suffixes() {
        let ws = words(&["10", "20", "30", "110", "120"]);
        let d = build_dawg(&ws, None).unwrap();
        assert_eq!(d.node_count(), trie_minimized_count(&ws));
        assert_eq!(d.words(), {
            let mut w = ws.clone();
            w.sort();
            w
        });
    }

    #[test]
    fn rejects_glyph_outside_alphabet() {
        let alpha: Vec<char> = "0123456789".chars().collect();
        assert_eq!(
            build_dawg(&["12", "1a"], Some(&alpha)),
            Err(LexiconError::UnknownGlyph {
                word: "1a".into(),
                glyph: 'a'
            })
        );
    }

    #[test]
    fn serialization_roundtrip_and_errors() {
        let d = build_dawg(&["1", "12", "13"], None).unwrap();
        let bytes = d.to_bytes();
        assert_eq!(&bytes[..4], b"GDAW");
        let back = Dawg::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.words(), d.words());

        for cut in [0, 3, 7, 11, bytes.len() - 1] {
            assert!(Dawg::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Dawg::from_bytes(&bad), Err(BinError::Version { found: 9, .. })));

        let empty = Dawg::from_bytes(&Dawg::empty().to_bytes()).unwrap();
        assert!(empty.is_empty_language());
        assert_eq!(empty.node_count(), 1);
    }

    #[test]
    fn load_rejects_backward_edges() {
        let mut d = build_dawg(&["12"], None).unwrap();
        d.nodes[1].edges[0].1 = 0;
        assert!(matches!(Dawg::from_bytes(&d.to_bytes()), Err(BinError::Invalid { .. })));
    }

    #[test]
    fn random_digit_strings_match_set_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
        let ws: Vec<String> = (0..500)
            .map(|_| {
                let len = rng.random_range(1..=8);
                (0..len).map(|_| char::from(b'0' + rng.random_range(0..10))).collect()
            })
            .collect();
        let d = build_dawg(&ws, None).unwrap();
        let set: HashSet<&String> = ws.iter().collect();
        for i in 0..10_000 {
            let probe: String = if i % 2 == 0 {
                ws[rng.random_range(0..ws.len())].clone()
            } else {
                let len = rng.random_range(0..=9);
                (0..len).map(|_| char::from(b'0' + rng.random_range(0..10))).collect()
            };
            assert_eq!(d.contains(&probe), set.contains(&probe), "{probe}");
        }
        assert_eq!(d.node_count(), trie_minimized_count(&ws));
    }

    #[test]
    fn wordlist_parsing() {
        assert_eq!(parse_wordlist(b"12\n7\n").unwrap(), words(&["12", "7"]));
        assert!(parse_wordlist(b"").unwrap().is_empty());
        assert_eq!(parse_wordlist(b"  42  \n\n").unwrap(), words(&["42"]));
        assert_eq!(
            parse_wordlist(b"12\n\xc3"),
            Err(LexiconError::InvalidUtf8 { offset: 3 })
        );
    }

    #[test]
    fn ambig_parsing() {
        assert!(parse_ambigs(b"").unwrap().is_empty());
        let t = parse_ambigs(b"1 O 1 0\n").unwrap();
        assert_eq!(
            t.rules,
            vec![AmbigRule {
                source: vec!["O".into()],
                replacement: vec!["0".into()],
                mandatory: false
            }]
        );
        let t = parse_ambigs(b"2 l l 1 1").unwrap();
        assert_eq!(t.rules[0].source, vec!["l", "l"]);
        assert_eq!(t.rules[0].replacement, vec!["1"]);
        assert!(!t.rules[0].mandatory);
        let t = parse_ambigs(b"1 I 1 1 1").unwrap();
        assert!(t.rules[0].mandatory);
    }

    #[test]
    fn ambig_errors_carry_line() {
        for (input, line) in [
            (&b"1 O 1 0\n3 a b 1 c"[..], 2),
            (b"0 1 x", 1),
            (b"1 O 1 0 1 extra", 1),
            (b"1 O 2 0", 1),
            (b"x O 1 0", 1),
        ] {
            match parse_ambigs(input) {
                Err(LexiconError::Ambig { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{input:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn ambig_text_roundtrip_and_rewrites() {
        let t = parse_ambigs(b"1 7 1 1\n2 1 1 1 4 1\n").unwrap();
        assert_eq!(parse_ambigs(t.to_text().as_bytes()).unwrap(), t);
        // The mandatory 11->4 rule is never offered as a rewrite.
        assert_eq!(t.single_rewrites("717"), vec!["117", "711"]);
        assert!(t.single_rewrites("").is_empty());
    }

    fn arb_words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[0-9]{1,8}", 0..120)
    }

    proptest! {
        #[test]
        fn language_equals_input_set(ws in arb_words()) {
            let d = build_dawg(&ws, None).unwrap();
            let mut want = ws.clone();
            want.sort();
            want.dedup();
            prop_assert_eq!(d.words(), want);
            prop_assert_eq!(d.node_count(), trie_minimized_count(&ws));
            let back = Dawg::from_bytes(&d.to_bytes()).unwrap();
            prop_assert_eq!(back.node_count(), d.node_count());
            prop_assert_eq!(back.words(), d.words());
        }
    }
}
