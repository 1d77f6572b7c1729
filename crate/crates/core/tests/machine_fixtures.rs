//! Corpus-wide assembler checks over every distributed fixture.

mod common;

use common::*;
use wattlens_core::machine::{parse_program, InputKey, Reg};
use wattlens_core::simulator::{run, RunConfig, SimInputs};

fn eir_fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_path("."))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().to_string())
        .filter(|n| n.ends_with(".eir"))
        .collect();
    names.sort();
    names
}

#[test]
fn fib_fixture_has_two_functions_and_computes_fib_10() {
    let p = parse_program(&read_fixture("fib.eir")).unwrap();
    assert_eq!(p.functions.len(), 2);
    assert_eq!(p.entry, "main");
    let trace = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
    assert_eq!(trace.result(), 55);
}

#[test]
fn every_fixture_round_trips_through_print_and_parse() {
    for name in eir_fixture_names() {
        let parsed = parse_program(&read_fixture(&name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = parsed.print();
        let reparsed =
            parse_program(&printed).unwrap_or_else(|e| panic!("{name} (printed): {e}\n{printed}"));
        assert_eq!(reparsed, parsed, "{name}");
        assert_eq!(reparsed.print(), printed, "{name}: printing is idempotent");
    }
}

#[test]
fn every_fixture_halts_within_fuel_on_a_domain_corner() {
    for name in eir_fixture_names() {
        let program = parse_program(&read_fixture(&name)).unwrap();
        let mut inputs = SimInputs::default();
        for &(key, _, hi) in &program.meta.input_domains {
            inputs.set(key, hi);
        }
        let trace =
            run(&program, &inputs, &RunConfig::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            trace.outcome == wattlens_core::simulator::Outcome::Halted,
            "{name}: {:?}",
            trace.outcome
        );
    }
}

#[test]
fn absdiff_computes_the_absolute_difference() {
    let p = parse_program(&read_fixture("absdiff.eir")).unwrap();
    for (a, b) in [(0u32, 15u32), (15, 0), (7, 7), (3, 12)] {
        let mut inputs = SimInputs::default();
        inputs.set(InputKey::Reg(Reg(0)), a);
        inputs.set(InputKey::Reg(Reg(1)), b);
        let trace = run(&p, &inputs, &RunConfig::default()).unwrap();
        assert_eq!(trace.final_regs[0][2], a.abs_diff(b), "({a},{b})");
    }
}
