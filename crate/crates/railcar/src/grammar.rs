//! Context-free grammars and the `.rr` text format.
//!
//! A grammar file is a sequence of statements, each terminated by `;`:
//!
//! ```text
//! # comments run to end of line
//! start S-expression ;
//! S-expression ::= atomic-symbol
//!                | "(" S-expression "." S-expression ")" ;
//! atomic-symbol ::= LETTER ;
//! LETTER ::= 'A'..'Z' ;
//! ```
//!
//! An alternative is a whitespace-separated list of quoted terminals
//! (`"("`), character ranges (`'A'..'Z'`), and bare nonterminal names;
//! an empty alternative stands for ε. Without a `start` directive the
//! lhs of the first rule is the start symbol. Nonterminal names are
//! identifiers: letters, digits, `-`, `_`, starting with a letter.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

/// A terminal symbol: either literal text or a single-character range.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Terminal {
    /// Matches the text exactly (nonempty).
    Text(String),
    /// Matches one character in `lo..=hi` (code-point order).
    Class { lo: char, hi: char },
}

impl Terminal {
    /// True when `ch` is matched by this terminal as a single character.
    pub fn matches_char(&self, ch: char) -> bool {
        match self {
            Terminal::Text(t) => {
                let mut it = t.chars();
                it.next() == Some(ch) && it.next().is_none()
            }
            Terminal::Class { lo, hi } => (*lo..=*hi).contains(&ch),
        }
    }
}

/// One symbol of a production right-hand side.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Terminal(Terminal),
    Nonterminal(String),
}

/// A production rule `lhs ::= rhs`; an empty rhs is the ε-production.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
}

/// A context-free grammar: ordered production list plus start symbol.
///
/// The nonterminal set is exactly the set of lhs names; the terminal
/// set is derived from the rule bodies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    pub rules: Vec<Production>,
    pub start: String,
}

impl Grammar {
    /// Nonterminal names in order of first appearance as an lhs.
    pub fn nonterminals(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for rule in &self.rules {
            if seen.insert(rule.lhs.as_str()) {
                out.push(rule.lhs.as_str());
            }
        }
        out
    }

    /// All distinct terminals appearing in rule bodies.
    pub fn terminals(&self) -> BTreeSet<&Terminal> {
        self.rules
            .iter()
            .flat_map(|r| r.rhs.iter())
            .filter_map(|sym| match sym {
                Symbol::Terminal(t) => Some(t),
                Symbol::Nonterminal(_) => None,
            })
            .collect()
    }

    /// Productions of one nonterminal, in source order.
    pub fn rules_of<'g>(&'g self, name: &str) -> impl Iterator<Item = &'g Production> {
        let name = name.to_owned();
        self.rules.iter().filter(move |r| r.lhs == name)
    }

    /// Total number of rhs symbol occurrences across all rules.
    pub fn symbol_count(&self) -> usize {
        self.rules.iter().map(|r| r.rhs.len()).sum()
    }

    /// Single characters usable as a default test alphabet: every char of
    /// every text terminal plus both endpoints of every range.
    pub fn representative_alphabet(&self) -> Vec<char> {
        let mut set = BTreeSet::new();
        for t in self.terminals() {
            match t {
                Terminal::Text(s) => set.extend(s.chars()),
                Terminal::Class { lo, hi } => {
                    set.insert(*lo);
                    set.insert(*hi);
                }
            }
        }
        set.into_iter().collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("undefined nonterminal `{0}`")]
    UndefinedNonterminal(String),
    #[error("grammar contains no rules")]
    EmptyGrammar,
}

/// Parse `.rr` text into a validated [`Grammar`].
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    parse_grammar_with_warnings(text).map(|(g, _)| g)
}

/// Like [`parse_grammar`], also reporting non-fatal warnings
/// (currently: duplicate productions, which are kept).
pub fn parse_grammar_with_warnings(text: &str) -> Result<(Grammar, Vec<String>), GrammarError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut rules: Vec<Production> = Vec::new();
    let mut start: Option<String> = None;
    let mut warnings = Vec::new();

    while !parser.at_end() {
        let (name, line, col) = parser.expect_ident()?;
        if name == "start" && matches!(parser.peek_kind(), Some(TokKind::Ident(_))) {
            let (sym, ..) = parser.expect_ident()?;
            parser.expect(TokKind::Semi)?;
            if start.is_some() {
                warnings.push(format!("line {line}: repeated start directive; using `{sym}`"));
            }
            start = Some(sym);
            continue;
        }
        parser.expect(TokKind::Assign).map_err(|_| GrammarError::Syntax {
            line,
            col,
            message: format!("expected `::=` after `{name}`"),
        })?;
        let mut alt: Vec<Symbol> = Vec::new();
        loop {
            match parser.next_tok() {
                Some(Tok { kind: TokKind::Ident(id), .. }) => alt.push(Symbol::Nonterminal(id)),
                Some(Tok { kind: TokKind::Str(s), .. }) => {
                    alt.push(Symbol::Terminal(Terminal::Text(s)))
                }
                Some(Tok { kind: TokKind::Range(lo, hi), .. }) => {
                    alt.push(Symbol::Terminal(Terminal::Class { lo, hi }))
                }
                Some(Tok { kind: TokKind::Pipe, .. }) => {
                    rules.push(Production { lhs: name.clone(), rhs: std::mem::take(&mut alt) });
                }
                Some(Tok { kind: TokKind::Semi, .. }) => {
                    rules.push(Production { lhs: name.clone(), rhs: alt });
                    break;
                }
                Some(Tok { kind: TokKind::Assign, line, col }) => {
                    return Err(GrammarError::Syntax {
                        line,
                        col,
                        message: "unexpected `::=` inside rule body".into(),
                    })
                }
                None => {
                    return Err(GrammarError::Syntax {
                        line,
                        col,
                        message: format!("rule `{name}` is missing its terminating `;`"),
                    })
                }
            }
        }
    }

    if rules.is_empty() {
        return Err(GrammarError::EmptyGrammar);
    }
    let start = start.unwrap_or_else(|| rules[0].lhs.clone());

    let defined: BTreeSet<&str> = rules.iter().map(|r| r.lhs.as_str()).collect();
    if !defined.contains(start.as_str()) {
        return Err(GrammarError::UndefinedNonterminal(start));
    }
    for rule in &rules {
        for sym in &rule.rhs {
            if let Symbol::Nonterminal(name) = sym {
                if !defined.contains(name.as_str()) {
                    return Err(GrammarError::UndefinedNonterminal(name.clone()));
                }
            }
        }
    }

    let mut seen: BTreeSet<(&str, &[Symbol])> = BTreeSet::new();
    for rule in &rules {
        if !seen.insert((rule.lhs.as_str(), rule.rhs.as_slice())) {
            warnings.push(format!("duplicate production for `{}` kept as written", rule.lhs));
        }
    }

    Ok((Grammar { rules, start }, warnings))
}

/// Serialize a grammar so that `parse_grammar(serialize_grammar(g)) == g`.
///
/// Each production is written as its own statement, preserving source
/// order; the start directive always comes first.
pub fn serialize_grammar(g: &Grammar) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "start {} ;", g.start);
    for rule in &g.rules {
        let _ = write!(out, "{} ::=", rule.lhs);
        for sym in &rule.rhs {
            match sym {
                Symbol::Nonterminal(n) => {
                    let _ = write!(out, " {n}");
                }
                Symbol::Terminal(Terminal::Text(t)) => {
                    let _ = write!(out, " \"{}\"", escape_str(t));
                }
                Symbol::Terminal(Terminal::Class { lo, hi }) => {
                    let _ = write!(out, " '{}'..'{}'", escape_char(*lo), escape_char(*hi));
                }
            }
        }
        let _ = writeln!(out, " ;");
    }
    out
}

fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            _ => out.push(ch),
        }
    }
    out
}

fn escape_char(ch: char) -> String {
    match ch {
        '\'' => "\\'".into(),
        '\\' => "\\\\".into(),
        '\n' => "\\n".into(),
        '\t' => "\\t".into(),
        '\r' => "\\r".into(),
        _ => ch.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Ident(String),
    Str(String),
    Range(char, char),
    Assign,
    Pipe,
    Semi,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: usize,
    col: usize,
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek_kind(&self) -> Option<&TokKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn next_tok(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn expect_ident(&mut self) -> Result<(String, usize, usize), GrammarError> {
        match self.next_tok() {
            Some(Tok { kind: TokKind::Ident(id), line, col }) => Ok((id, line, col)),
            Some(tok) => Err(GrammarError::Syntax {
                line: tok.line,
                col: tok.col,
                message: "expected a nonterminal name".into(),
            }),
            None => Err(GrammarError::Syntax {
                line: 0,
                col: 0,
                message: "unexpected end of input".into(),
            }),
        }
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), GrammarError> {
        match self.next_tok() {
            Some(tok) if tok.kind == kind => Ok(()),
            Some(tok) => Err(GrammarError::Syntax {
                line: tok.line,
                col: tok.col,
                message: format!("expected {}", describe(&kind)),
            }),
            None => Err(GrammarError::Syntax {
                line: 0,
                col: 0,
                message: format!("expected {} but input ended", describe(&kind)),
            }),
        }
    }
}

fn describe(kind: &TokKind) -> &'static str {
    match kind {
        TokKind::Ident(_) => "an identifier",
        TokKind::Str(_) => "a quoted terminal",
        TokKind::Range(..) => "a character range",
        TokKind::Assign => "`::=`",
        TokKind::Pipe => "`|`",
        TokKind::Semi => "`;`",
    }
}

struct Scanner<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Scanner<'_> {
    fn bump(&mut self) -> Option<char> {
        let ch = self.chars.next()?;
        if ch == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(ch)
    }

    fn err(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax { line: self.line, col: self.col, message: message.into() }
    }

    fn escape(&mut self) -> Result<char, GrammarError> {
        match self.bump() {
            Some('n') => Ok('\n'),
            Some('t') => Ok('\t'),
            Some('r') => Ok('\r'),
            Some(ch @ ('"' | '\'' | '\\')) => Ok(ch),
            Some(ch) => Err(self.err(format!("unknown escape `\\{ch}`"))),
            None => Err(self.err("unterminated escape")),
        }
    }

    fn char_literal(&mut self) -> Result<char, GrammarError> {
        let ch = match self.bump() {
            Some('\\') => self.escape()?,
            Some('\'') => return Err(self.err("empty character literal")),
            Some(ch) => ch,
            None => return Err(self.err("unterminated character literal")),
        };
        match self.bump() {
            Some('\'') => Ok(ch),
            _ => Err(self.err("character literal must be a single character")),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Tok>, GrammarError> {
    let mut sc = Scanner { chars: text.chars().peekable(), line: 1, col: 1 };
    let mut tokens = Vec::new();
    loop {
        let (line, col) = (sc.line, sc.col);
        let Some(ch) = sc.bump() else { break };
        let kind = match ch {
            c if c.is_whitespace() => continue,
            '#' => {
                while let Some(c) = sc.bump() {
                    if c == '\n' {
                        break;
                    }
                }
                continue;
            }
            ';' => TokKind::Semi,
            '|' => TokKind::Pipe,
            ':' => {
                if sc.bump() != Some(':') || sc.bump() != Some('=') {
                    return Err(sc.err("expected `::=`"));
                }
                TokKind::Assign
            }
            '"' => {
                let mut s = String::new();
                loop {
                    match sc.bump() {
                        Some('"') => break,
                        Some('\\') => s.push(sc.escape()?),
                        Some('\n') | None => return Err(sc.err("unterminated string terminal")),
                        Some(c) => s.push(c),
                    }
                }
                if s.is_empty() {
                    return Err(sc.err("terminal text must be nonempty (use an empty alternative for ε)"));
                }
                TokKind::Str(s)
            }
            '\'' => {
                let lo = sc.char_literal()?;
                if sc.bump() != Some('.') || sc.bump() != Some('.') {
                    return Err(sc.err("expected `..` between range endpoints"));
                }
                if sc.bump() != Some('\'') {
                    return Err(sc.err("expected `'` to open the range end"));
                }
                let hi = sc.char_literal()?;
                if lo > hi {
                    return Err(sc.err(format!("invalid range: '{lo}' > '{hi}'")));
                }
                TokKind::Range(lo, hi)
            }
            c if c.is_alphabetic() => {
                let mut id = String::new();
                id.push(c);
                while let Some(&next) = sc.chars.peek() {
                    if next.is_alphanumeric() || next == '-' || next == '_' {
                        id.push(next);
                        sc.bump();
                    } else {
                        break;
                    }
                }
                TokKind::Ident(id)
            }
            other => return Err(sc.err(format!("unexpected character `{other}`"))),
        };
        tokens.push(Tok { kind, line, col });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LISP15: &str = include_str!("../../../grammars/lisp15.rr");

    #[test]
    fn parses_lisp15_fixture() {
        let g = parse_grammar(LISP15).unwrap();
        assert_eq!(g.nonterminals().len(), 6);
        assert_eq!(g.start, "S-expression");
        assert_eq!(g.rules.len(), 11);
        assert_eq!(g.symbol_count(), 19);
    }

    #[test]
    fn parses_single_epsilon_rule() {
        let g = parse_grammar("start A ;\nA ::= ;").unwrap();
        assert_eq!(g.nonterminals(), vec!["A"]);
        assert_eq!(g.rules, vec![Production { lhs: "A".into(), rhs: vec![] }]);
    }

    #[test]
    fn first_lhs_is_default_start() {
        let g = parse_grammar("A ::= \"x\" ;\nB ::= \"y\" A ;").unwrap();
        assert_eq!(g.start, "A");
    }

    #[test]
    fn undefined_nonterminal_is_reported() {
        let err = parse_grammar("A ::= \"b\" C ;").unwrap_err();
        assert_eq!(err, GrammarError::UndefinedNonterminal("C".into()));
    }

    #[test]
    fn empty_input_is_empty_grammar() {
        assert_eq!(parse_grammar("").unwrap_err(), GrammarError::EmptyGrammar);
        assert_eq!(parse_grammar("# nothing here\n").unwrap_err(), GrammarError::EmptyGrammar);
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_grammar("A ::= \"unterminated").unwrap_err() {
            GrammarError::Syntax { line: 1, col, .. } => assert!(col > 1),
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn serializes_epsilon_rule_exactly() {
        let g = parse_grammar("start A; A ::= ;".replace(';', " ;").as_str()).unwrap();
        assert_eq!(serialize_grammar(&g), "start A ;\nA ::= ;\n");
    }

    #[test]
    fn round_trips_lisp15() {
        let g = parse_grammar(LISP15).unwrap();
        let again = parse_grammar(&serialize_grammar(&g)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn char_class_round_trips_as_range_literal() {
        let g = parse_grammar("A ::= 'A'..'Z' ;").unwrap();
        let text = serialize_grammar(&g);
        assert!(text.contains("'A'..'Z'"), "serialized form: {text}");
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn escapes_round_trip() {
        let g = parse_grammar(r#"A ::= "\"" "\\" '\''..'\'' ;"#).unwrap();
        assert_eq!(parse_grammar(&serialize_grammar(&g)).unwrap(), g);
    }

    #[test]
    fn duplicate_productions_kept_with_warning() {
        let (g, warnings) = parse_grammar_with_warnings("A ::= \"x\" ;\nA ::= \"x\" ;").unwrap();
        assert_eq!(g.rules.len(), 2);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn rule_named_start_still_works() {
        let g = parse_grammar("start ::= \"x\" ;").unwrap();
        assert_eq!(g.start, "start");
    }

    #[test]
    fn parsing_is_deterministic() {
        let a = parse_grammar(LISP15).unwrap();
        let b = parse_grammar(LISP15).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_lhs_is_a_nonterminal() {
        let g = parse_grammar(LISP15).unwrap();
        let nts: BTreeSet<_> = g.nonterminals().into_iter().collect();
        for rule in &g.rules {
            assert!(nts.contains(rule.lhs.as_str()));
        }
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        fn arb_terminal() -> impl Strategy<Value = Terminal> {
            prop_oneof![
                "[a-z(){}.,+\\-\"\\\\]{1,4}".prop_map(Terminal::Text),
                (proptest::char::range('0', 'm'), 0u8..13).prop_map(|(lo, span)| {
                    let hi = char::from_u32(lo as u32 + span as u32).unwrap();
                    Terminal::Class { lo, hi }
                }),
            ]
        }

        fn arb_grammar() -> impl Strategy<Value = Grammar> {
            let names = prop::sample::subsequence(
                vec!["A", "B-1", "C_x", "Dd", "E"],
                1..=5,
            );
            names.prop_flat_map(|names: Vec<&str>| {
                let n = names.len();
                let sym = prop_oneof![
                    arb_terminal().prop_map(Symbol::Terminal),
                    (0..n).prop_map({
                        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
                        move |i| Symbol::Nonterminal(names[i].clone())
                    }),
                ];
                let rhs = prop::collection::vec(sym, 0..4);
                let rules_per = prop::collection::vec(rhs, 1..3);
                (prop::collection::vec(rules_per, n..=n),)
                    .prop_map(move |(bodies,)| {
                        let mut rules = Vec::new();
                        for (name, alts) in names.iter().zip(bodies) {
                            for rhs in alts {
                                rules.push(Production { lhs: name.to_string(), rhs });
                            }
                        }
                        Grammar { rules, start: names[0].to_string() }
                    })
            })
        }

        proptest! {
            #[test]
            fn serialize_then_parse_is_identity(g in arb_grammar()) {
                let text = serialize_grammar(&g);
                let parsed = parse_grammar(&text).unwrap();
                prop_assert_eq!(parsed, g);
            }
        }
    }
}
