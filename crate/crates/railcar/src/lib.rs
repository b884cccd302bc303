//! railcar: compile context-free grammars into confluent railroad
//! diagrams.
//!
//! The pipeline: parse a `.rr` grammar ([`grammar`]), convert it into a
//! system of labeled st-digraphs ([`nfa`]), shrink that system with
//! language-preserving heuristics ([`heuristics`]), lay each digraph
//! out as a horizontal layered drawing ([`layout`]), and reinterpret
//! the result as smooth railroad tracks emitted as SVG ([`render`]).
//! The [`oracle`] module provides an independent recognizer used to
//! verify that every transformation preserves the language.

pub mod cli;
pub mod grammar;
pub mod heuristics;
pub mod layout;
pub mod nfa;
pub mod oracle;
pub mod render;
