//! wattlens core: a desk-scale energy-transparency toolkit.
//!
//! The crate is organized around a small virtual ISA (EIR) with hardware
//! threads and rendezvous channels:
//!
//! - [`machine`] — the ISA, its assembly format, and CFG/loop analysis
//! - [`model`] — the per-instruction energy model and its exact evaluation
//! - [`simulator`] — deterministic cycle-level execution, traces and
//!   statistics extrapolation
//! - [`device`] — a synthetic data-sensitive device standing in for a
//!   physical measurement rig
//! - [`profiler`] — kernel generation and model fitting against a device
//! - [`static_analysis`] — worst/best-case energy bounds and static profiles
//! - [`hir`] — a small structured language, its lowering to EIR with a
//!   statement↔instruction mapping, and source-level bounds
//! - [`parametric`] — cost relations solved to closed-form polynomials over
//!   input-size parameters
//! - [`probabilistic`] — energy distributions from input distributions

pub mod device;
pub mod energy;
pub mod hir;
pub mod machine;
pub mod model;
pub mod parametric;
pub mod probabilistic;
pub mod profiler;
pub mod simulator;
pub mod static_analysis;

pub use energy::{Energy, EnergyReport, Provenance};
pub use machine::{build_cfg, parse_program, Opcode, Program};
pub use model::{load_model, save_model, EnergyModel, ExecutionStats};
pub use simulator::{run, stats_of, trace_energy, RunConfig, SimInputs, Trace};
