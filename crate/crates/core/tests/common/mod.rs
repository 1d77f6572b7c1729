//! Shared helpers for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use wattlens_core::energy::Energy;
use wattlens_core::hir::{self, HirProgram, MappingTable, SizeBindings};
use wattlens_core::machine::{InputKey, Program, Reg, ALL_OPCODES};
use wattlens_core::model::{EnergyModel, PowerEntry, PowerSource};
use wattlens_core::simulator::{run, stats_of, RunConfig, SimInputs, Trace};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// A full-coverage model with distinct per-opcode powers.
pub fn test_model() -> EnergyModel {
    let mut p_i = BTreeMap::new();
    let mut isa_meta = BTreeMap::new();
    for (i, op) in ALL_OPCODES.into_iter().enumerate() {
        p_i.insert(
            op,
            PowerEntry {
                power_mw: 28.0 + i as f64 * 1.9,
                source: PowerSource::Profiled,
            },
        );
        isa_meta.insert(op, wattlens_core::machine::isa_spec(op).clone());
    }
    let model = EnergyModel {
        t_clk_ns: 2.5,
        p_b_mw: 45.0,
        overhead: 1.25,
        t_max: 4,
        m_t: [(1, 1.0), (2, 1.12), (3, 1.22), (4, 1.3)]
            .into_iter()
            .collect(),
        p_i,
        isa_meta,
    };
    model.validate().unwrap();
    model
}

pub fn sizes(bindings: &[(&str, u64)]) -> SizeBindings {
    bindings.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

pub fn compile_fixture(name: &str, bindings: &SizeBindings) -> (HirProgram, Program, MappingTable) {
    let hir = hir::parse_hir(&read_fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let (program, table) = hir::compile(&hir, bindings).unwrap_or_else(|e| panic!("{name}: {e}"));
    hir::verify_mapping(&program, &table).unwrap();
    (hir, program, table)
}

pub fn run_with_args(program: &Program, args: &[u32]) -> Trace {
    let mut inputs = SimInputs::default();
    for (i, &v) in args.iter().enumerate() {
        inputs.set(InputKey::Reg(Reg(i as u8)), v);
    }
    run(program, &inputs, &RunConfig::default()).unwrap()
}

pub fn sim_energy(model: &EnergyModel, program: &Program, args: &[u32]) -> Energy {
    let trace = run_with_args(program, args);
    model.energy(&stats_of(&trace)).unwrap()
}
