//! Language oracle: membership, bounded enumeration, and equivalence.
//!
//! Membership uses a chart (Earley-style) recognizer, which stays
//! polynomial on the ε-dense grammars produced by [`crate::nfa::nfa_to_grammar`].
//! A CNF + CYK recognizer is kept alongside as an independent route and
//! is cross-checked against the chart recognizer in tests.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::grammar::{Grammar, Symbol, Terminal};
use crate::nfa::{nfa_to_grammar, NfaSystem};

/// Candidate-string cap for [`enumerate`]: Σ |alphabet|^len must stay
/// under this.
pub const DEFAULT_BUDGET: u128 = 2_000_000;

/// Hard ceiling on enumeration length; this oracle is desk-scale only.
pub const MAX_LEN_LIMIT: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration budget exceeded: {requested} candidate strings (cap {cap})")]
    BudgetExceeded { requested: u128, cap: u128 },
    #[error("max_len {requested} exceeds the enumeration limit {limit}")]
    MaxLenTooLarge { requested: usize, limit: usize },
}

/// A bounded sample of a language: every accepted string over
/// `alphabet` with length at most `max_len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LanguageSample {
    pub alphabet: Vec<char>,
    pub max_len: usize,
    pub accepted: BTreeSet<String>,
}

/// True iff `w` is derivable from `g.start`. Total on all inputs,
/// including cyclic and ε-heavy grammars.
pub fn membership(g: &Grammar, w: &str) -> bool {
    Recognizer::compile(g).accepts(&w.chars().collect::<Vec<char>>())
}

/// Independent membership route: CNF transformation plus CYK.
/// Exponential in the worst case on ε-dense grammars; used for
/// cross-checks on small fixtures only.
pub fn membership_cyk(g: &Grammar, w: &str) -> bool {
    Cnf::compile(g).accepts(&w.chars().collect::<Vec<char>>())
}

/// Exhaustively tests every string over `alphabet` up to `max_len`.
pub fn enumerate(g: &Grammar, alphabet: &[char], max_len: usize) -> Result<LanguageSample, OracleError> {
    enumerate_with_budget(g, alphabet, max_len, DEFAULT_BUDGET)
}

pub fn enumerate_with_budget(
    g: &Grammar,
    alphabet: &[char],
    max_len: usize,
    budget: u128,
) -> Result<LanguageSample, OracleError> {
    if max_len > MAX_LEN_LIMIT {
        return Err(OracleError::MaxLenTooLarge { requested: max_len, limit: MAX_LEN_LIMIT });
    }
    let mut total: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..=max_len {
        total += pow;
        pow = pow.saturating_mul(alphabet.len() as u128);
    }
    if total > budget {
        return Err(OracleError::BudgetExceeded { requested: total, cap: budget });
    }

    let rec = Recognizer::compile(g);
    let mut accepted = BTreeSet::new();
    let mut frontier: Vec<Vec<char>> = vec![Vec::new()];
    for len in 0..=max_len {
        for word in &frontier {
            if rec.accepts(word) {
                accepted.insert(word.iter().collect());
            }
        }
        if len == max_len {
            break;
        }
        let mut next = Vec::with_capacity(frontier.len() * alphabet.len());
        for word in &frontier {
            for &ch in alphabet {
                let mut w = word.clone();
                w.push(ch);
                next.push(w);
            }
        }
        frontier = next;
    }
    Ok(LanguageSample { alphabet: alphabet.to_vec(), max_len, accepted })
}

/// Either side of an equivalence check.
#[derive(Clone, Copy)]
pub enum LanguageRef<'a> {
    Grammar(&'a Grammar),
    System(&'a NfaSystem),
}

impl<'a> From<&'a Grammar> for LanguageRef<'a> {
    fn from(g: &'a Grammar) -> Self {
        LanguageRef::Grammar(g)
    }
}

impl<'a> From<&'a NfaSystem> for LanguageRef<'a> {
    fn from(sys: &'a NfaSystem) -> Self {
        LanguageRef::System(sys)
    }
}

impl LanguageRef<'_> {
    fn to_grammar(self) -> Grammar {
        match self {
            LanguageRef::Grammar(g) => g.clone(),
            LanguageRef::System(sys) => nfa_to_grammar(sys),
        }
    }
}

/// Outcome of [`systems_equivalent`]: either the samples agree, or a
/// shortest witness accepted by exactly one side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    Counterexample { witness: String, accepted_by_first: bool },
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Equivalence::Equivalent)
    }
}

/// Compares two languages on every string over `alphabet` up to
/// `max_len`. NFA systems are converted through [`nfa_to_grammar`].
pub fn systems_equivalent<'a, 'b>(
    a: impl Into<LanguageRef<'a>>,
    b: impl Into<LanguageRef<'b>>,
    alphabet: &[char],
    max_len: usize,
) -> Result<Equivalence, OracleError> {
    let ga = a.into().to_grammar();
    let gb = b.into().to_grammar();
    let sa = enumerate(&ga, alphabet, max_len)?;
    let sb = enumerate(&gb, alphabet, max_len)?;
    if sa.accepted == sb.accepted {
        return Ok(Equivalence::Equivalent);
    }
    let witness = sa
        .accepted
        .symmetric_difference(&sb.accepted)
        .min_by_key(|w| (w.chars().count(), (*w).clone()))
        .expect("nonempty symmetric difference")
        .clone();
    let accepted_by_first = sa.accepted.contains(&witness);
    Ok(Equivalence::Counterexample { witness, accepted_by_first })
}

// ---------------------------------------------------------------------
// Chart recognizer

#[derive(Clone, Debug)]
enum Sym {
    Nt(u32),
    Text(Box<[char]>),
    Class(char, char),
}

struct Rule {
    lhs: u32,
    rhs: Vec<Sym>,
}

struct Recognizer {
    rules: Vec<Rule>,
    rules_of: Vec<Vec<u32>>,
    nullable: Vec<bool>,
    start: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    rule: u32,
    dot: u16,
    origin: u32,
}

#[derive(Default)]
struct ChartSet {
    seen: HashSet<Item>,
    queue: Vec<Item>,
    waiting: HashMap<u32, Vec<Item>>,
    predicted: HashSet<u32>,
}

impl ChartSet {
    fn add(&mut self, item: Item) {
        if self.seen.insert(item) {
            self.queue.push(item);
        }
    }
}

impl Recognizer {
    fn compile(g: &Grammar) -> Recognizer {
        let names: Vec<&str> = g.nonterminals();
        let id_of: HashMap<&str, u32> =
            names.iter().enumerate().map(|(i, n)| (*n, i as u32)).collect();
        let mut rules = Vec::with_capacity(g.rules.len());
        let mut rules_of = vec![Vec::new(); names.len()];
        for rule in &g.rules {
            let lhs = id_of[rule.lhs.as_str()];
            let rhs = rule
                .rhs
                .iter()
                .map(|sym| match sym {
                    Symbol::Nonterminal(n) => Sym::Nt(id_of[n.as_str()]),
                    Symbol::Terminal(Terminal::Text(t)) => {
                        Sym::Text(t.chars().collect::<Vec<_>>().into_boxed_slice())
                    }
                    Symbol::Terminal(Terminal::Class { lo, hi }) => Sym::Class(*lo, *hi),
                })
                .collect();
            rules_of[lhs as usize].push(rules.len() as u32);
            rules.push(Rule { lhs, rhs });
        }

        let mut nullable = vec![false; names.len()];
        loop {
            let mut changed = false;
            for rule in &rules {
                if nullable[rule.lhs as usize] {
                    continue;
                }
                let all = rule.rhs.iter().all(|s| match s {
                    Sym::Nt(n) => nullable[*n as usize],
                    _ => false,
                });
                if all {
                    nullable[rule.lhs as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        Recognizer { rules, rules_of, nullable, start: id_of[g.start.as_str()] }
    }

    fn accepts(&self, input: &[char]) -> bool {
        let n = input.len();
        let mut sets: Vec<ChartSet> = (0..=n).map(|_| ChartSet::default()).collect();
        for &r in &self.rules_of[self.start as usize] {
            sets[0].add(Item { rule: r, dot: 0, origin: 0 });
        }

        for i in 0..=n {
            let mut cursor = 0;
            while cursor < sets[i].queue.len() {
                let item = sets[i].queue[cursor];
                cursor += 1;
                let rule = &self.rules[item.rule as usize];
                match rule.rhs.get(item.dot as usize) {
                    Some(Sym::Nt(b)) => {
                        let b = *b;
                        sets[i].waiting.entry(b).or_default().push(item);
                        if sets[i].predicted.insert(b) {
                            for &r in &self.rules_of[b as usize] {
                                sets[i].add(Item { rule: r, dot: 0, origin: i as u32 });
                            }
                        }
                        if self.nullable[b as usize] {
                            sets[i].add(Item { dot: item.dot + 1, ..item });
                        }
                    }
                    Some(Sym::Text(text)) => {
                        let end = i + text.len();
                        if end <= n && input[i..end] == **text {
                            sets[end].add(Item { dot: item.dot + 1, ..item });
                        }
                    }
                    Some(Sym::Class(lo, hi)) => {
                        if i < n && (*lo..=*hi).contains(&input[i]) {
                            sets[i + 1].add(Item { dot: item.dot + 1, ..item });
                        }
                    }
                    None => {
                        let origin = item.origin as usize;
                        let lhs = rule.lhs;
                        if origin == i {
                            // empty completion: covered by the nullable
                            // shortcut applied at prediction time
                            continue;
                        }
                        let waiters: Vec<Item> =
                            sets[origin].waiting.get(&lhs).cloned().unwrap_or_default();
                        for w in waiters {
                            sets[i].add(Item { dot: w.dot + 1, ..w });
                        }
                    }
                }
            }
        }

        sets[n].seen.iter().any(|item| {
            item.origin == 0
                && self.rules[item.rule as usize].lhs == self.start
                && item.dot as usize == self.rules[item.rule as usize].rhs.len()
        })
    }
}

// ---------------------------------------------------------------------
// CNF + CYK recognizer (independent route)

struct Cnf {
    /// A -> B C
    binary: Vec<(u32, u32, u32)>,
    /// A -> terminal (single character)
    lexical: Vec<(u32, Terminal)>,
    start: u32,
    start_nullable: bool,
}

impl Cnf {
    fn compile(g: &Grammar) -> Cnf {
        #[derive(Clone, PartialEq)]
        enum S {
            Nt(u32),
            T(Terminal),
        }
        let names: Vec<&str> = g.nonterminals();
        let id_of: HashMap<&str, u32> =
            names.iter().enumerate().map(|(i, n)| (*n, i as u32)).collect();
        let mut count = names.len() as u32;
        let mut fresh = || {
            count += 1;
            count - 1
        };

        // multi-character text terminals become chains of single chars
        let mut rules: Vec<(u32, Vec<S>)> = Vec::new();
        for rule in &g.rules {
            let mut rhs = Vec::new();
            for sym in &rule.rhs {
                match sym {
                    Symbol::Nonterminal(n) => rhs.push(S::Nt(id_of[n.as_str()])),
                    Symbol::Terminal(Terminal::Class { lo, hi }) => {
                        rhs.push(S::T(Terminal::Class { lo: *lo, hi: *hi }))
                    }
                    Symbol::Terminal(Terminal::Text(t)) => {
                        for ch in t.chars() {
                            rhs.push(S::T(Terminal::Text(ch.to_string())));
                        }
                    }
                }
            }
            rules.push((id_of[rule.lhs.as_str()], rhs));
        }

        // TERM: terminals inside long rules get wrapper nonterminals;
        // the wrapper rules join the pipeline so unit closure sees them
        let mut term_wrappers: Vec<(Terminal, u32)> = Vec::new();
        let mut wrapper_rules: Vec<(u32, Vec<S>)> = Vec::new();
        for (_, rhs) in rules.iter_mut() {
            if rhs.len() < 2 {
                continue;
            }
            for sym in rhs.iter_mut() {
                if let S::T(t) = sym {
                    let id = match term_wrappers.iter().find(|(w, _)| w == t) {
                        Some((_, id)) => *id,
                        None => {
                            let id = fresh();
                            term_wrappers.push((t.clone(), id));
                            wrapper_rules.push((id, vec![S::T(t.clone())]));
                            id
                        }
                    };
                    *sym = S::Nt(id);
                }
            }
        }
        rules.extend(wrapper_rules);

        // BIN: split rules longer than two
        let mut binarized: Vec<(u32, Vec<S>)> = Vec::new();
        for (lhs, rhs) in rules {
            if rhs.len() <= 2 {
                binarized.push((lhs, rhs));
                continue;
            }
            let mut head = lhs;
            let n = rhs.len();
            let mut iter = rhs.into_iter();
            for _ in 0..n - 2 {
                let first = iter.next().unwrap();
                let rest = fresh();
                binarized.push((head, vec![first, S::Nt(rest)]));
                head = rest;
            }
            binarized.push((head, iter.collect()));
        }

        // DEL: nullable elimination (rhs length is at most two here)
        let mut nullable: HashSet<u32> = HashSet::new();
        loop {
            let mut changed = false;
            for (lhs, rhs) in &binarized {
                if nullable.contains(lhs) {
                    continue;
                }
                let all = rhs.iter().all(|s| matches!(s, S::Nt(n) if nullable.contains(n)));
                if all {
                    nullable.insert(*lhs);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut no_eps: Vec<(u32, Vec<S>)> = Vec::new();
        for (lhs, rhs) in &binarized {
            let mut variants: Vec<Vec<S>> = vec![Vec::new()];
            for sym in rhs {
                let optional = matches!(sym, S::Nt(n) if nullable.contains(n));
                let mut next = Vec::new();
                for v in &variants {
                    let mut with = v.clone();
                    with.push(sym.clone());
                    next.push(with);
                    if optional {
                        next.push(v.clone());
                    }
                }
                variants = next;
            }
            for v in variants {
                if !v.is_empty() {
                    no_eps.push((*lhs, v));
                }
            }
        }

        // UNIT: close over single-nonterminal rules
        let total = count as usize;
        let mut unit_closure: Vec<BTreeSet<u32>> =
            (0..total as u32).map(|i| BTreeSet::from([i])).collect();
        loop {
            let mut changed = false;
            for (lhs, rhs) in &no_eps {
                if let [S::Nt(b)] = rhs.as_slice() {
                    let reach: Vec<u32> = unit_closure[*b as usize].iter().copied().collect();
                    for r in reach {
                        if unit_closure[*lhs as usize].insert(r) {
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let direct_lexical: Vec<(u32, Terminal)> = no_eps
            .iter()
            .filter_map(|(lhs, rhs)| match rhs.as_slice() {
                [S::T(t)] => Some((*lhs, t.clone())),
                _ => None,
            })
            .collect();
        let direct_binary: Vec<(u32, u32, u32)> = no_eps
            .iter()
            .filter_map(|(lhs, rhs)| match rhs.as_slice() {
                [S::Nt(b), S::Nt(c)] => Some((*lhs, *b, *c)),
                _ => None,
            })
            .collect();
        let mut binary = Vec::new();
        let mut lexical_all = Vec::new();
        for a in 0..total as u32 {
            for b in unit_closure[a as usize].iter() {
                for (lhs, t) in &direct_lexical {
                    if lhs == b {
                        lexical_all.push((a, t.clone()));
                    }
                }
                for (lhs, x, y) in &direct_binary {
                    if lhs == b {
                        binary.push((a, *x, *y));
                    }
                }
            }
        }
        binary.sort();
        binary.dedup();

        let start = id_of[g.start.as_str()];
        Cnf { binary, lexical: lexical_all, start, start_nullable: nullable.contains(&start) }
    }

    fn accepts(&self, input: &[char]) -> bool {
        let n = input.len();
        if n == 0 {
            return self.start_nullable;
        }
        // table[len-1][start]: nonterminals deriving input[start..start+len]
        let mut table: Vec<Vec<HashSet<u32>>> = vec![vec![HashSet::new(); n]; n];
        for (i, &ch) in input.iter().enumerate() {
            for (lhs, t) in &self.lexical {
                if t.matches_char(ch) {
                    table[0][i].insert(*lhs);
                }
            }
        }
        for span in 2..=n {
            for start in 0..=n - span {
                for split in 1..span {
                    let mut found: Vec<u32> = Vec::new();
                    for &(a, b, c) in &self.binary {
                        if table[split - 1][start].contains(&b)
                            && table[span - split - 1][start + split].contains(&c)
                        {
                            found.push(a);
                        }
                    }
                    table[span - 1][start].extend(found);
                }
            }
        }
        table[n - 1][0].contains(&self.start)
    }
}
