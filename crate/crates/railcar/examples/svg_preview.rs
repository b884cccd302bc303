use railcar::grammar::parse_grammar;
use railcar::heuristics::{optimize, OptimizerConfig};
use railcar::layout::layout_system;
use railcar::nfa::grammar_to_nfa;
use railcar::render::{emit_svg, system_to_diagrams, Style};

fn main() {
    let text = std::fs::read_to_string("grammars/lisp15.rr").unwrap();
    let sys = grammar_to_nfa(&parse_grammar(&text).unwrap());
    let (opt, _) = optimize(&sys, &OptimizerConfig::default());
    let style = Style::default();
    let drawings = layout_system(&opt).unwrap();
    let svg = emit_svg(&system_to_diagrams(&opt, &drawings, &style), &style);
    std::fs::write("/tmp/lisp_opt.svg", &svg).unwrap();
    let drawings = layout_system(&sys).unwrap();
    let svg = emit_svg(&system_to_diagrams(&sys, &drawings, &style), &style);
    std::fs::write("/tmp/lisp_unopt.svg", &svg).unwrap();
    println!("written");
}
