//! The per-instruction energy model and its evaluation against execution
//! statistics.
//!
//! Total energy of a run is
//!   `P_b·N_idl·T_clk + Σ_t Σ_i (M_t·P_i·O + P_b)·N_{i,t}·T_clk`
//! with powers in mW, the clock period in ns and energy in pJ. The
//! per-(opcode, thread-level) unit energies are quantized once to integer
//! femtojoules; evaluation is exact integer arithmetic after that, so energy
//! is additive in the statistics with zero tolerance.

use crate::energy::Energy;
use crate::machine::{isa_spec, InstructionSpec, Opcode};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::ops::Add;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model validation: {0}")]
    Validation(String),
    #[error("unknown opcode {0} in execution statistics")]
    UnknownOpcode(Opcode),
    #[error("thread count {t} exceeds model t_max {t_max}")]
    ThreadCount { t: u32, t_max: u32 },
}

/// Whether a per-instruction power was measured directly or estimated from
/// instruction features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerSource {
    Profiled,
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEntry {
    pub power_mw: f64,
    pub source: PowerSource,
}

/// Recorded direction of the parallelism scaling table, used by the static
/// analyzer to pick the conservative thread level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MDirection {
    NonIncreasing,
    NonDecreasing,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    /// Clock period, ns (> 0).
    pub t_clk_ns: f64,
    /// Base idle power, mW (≥ 0).
    pub p_b_mw: f64,
    /// Aggregated inter-instruction overhead multiplier (> 0).
    pub overhead: f64,
    pub t_max: u32,
    /// Parallelism scaling factor per active-thread count, complete on 1..=t_max.
    pub m_t: BTreeMap<u32, f64>,
    /// Per-opcode power and its provenance.
    pub p_i: BTreeMap<Opcode, PowerEntry>,
    pub isa_meta: BTreeMap<Opcode, InstructionSpec>,
}

impl EnergyModel {
    // Negated comparisons here are NaN-rejecting on purpose.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Validation(msg));
        if !(self.t_clk_ns > 0.0) {
            return fail(format!("t_clk_ns must be > 0, got {}", self.t_clk_ns));
        }
        if !(self.p_b_mw >= 0.0) {
            return fail(format!("p_b_mw must be >= 0, got {}", self.p_b_mw));
        }
        if !(self.overhead > 0.0) {
            return fail(format!("overhead must be > 0, got {}", self.overhead));
        }
        if self.t_max < 1 {
            return fail("t_max must be >= 1".to_string());
        }
        for t in 1..=self.t_max {
            match self.m_t.get(&t) {
                None => return fail(format!("m_t gap at t={t}")),
                Some(&m) if !(m > 0.0) => return fail(format!("m_t[{t}] must be > 0, got {m}")),
                _ => {}
            }
        }
        if let Some((&t, _)) = self.m_t.iter().find(|(&t, _)| t < 1 || t > self.t_max) {
            return fail(format!("m_t index {t} outside 1..=t_max"));
        }
        if self.m_direction().is_none() {
            return fail("m_t must be monotonically non-increasing or non-decreasing".into());
        }
        for (op, entry) in &self.p_i {
            if !(entry.power_mw >= 0.0) {
                return fail(format!("p_i[{op}] must be >= 0, got {}", entry.power_mw));
            }
            if !self.isa_meta.contains_key(op) {
                return fail(format!("p_i[{op}] has no isa_meta entry"));
            }
        }
        for (op, spec) in &self.isa_meta {
            if !self.p_i.contains_key(op) {
                return fail(format!("isa_meta[{op}] has no p_i entry"));
            }
            let canonical = isa_spec(*op);
            if spec != canonical {
                return fail(format!(
                    "isa_meta[{op}] disagrees with the fixed ISA feature table"
                ));
            }
        }
        Ok(())
    }

    /// `Some(direction)` when m_t is monotone over 1..=t_max, else `None`.
    pub fn m_direction(&self) -> Option<MDirection> {
        let values: Vec<f64> = (1..=self.t_max)
            .filter_map(|t| self.m_t.get(&t))
            .copied()
            .collect();
        if values.len() != self.t_max as usize {
            return None;
        }
        let non_inc = values.windows(2).all(|w| w[0] >= w[1]);
        let non_dec = values.windows(2).all(|w| w[0] <= w[1]);
        match (non_inc, non_dec) {
            (true, true) => Some(MDirection::Constant),
            (true, false) => Some(MDirection::NonIncreasing),
            (false, true) => Some(MDirection::NonDecreasing),
            (false, false) => None,
        }
    }

    fn check_level(&self, t: u32) -> Result<f64, ModelError> {
        if t < 1 || t > self.t_max {
            return Err(ModelError::ThreadCount {
                t,
                t_max: self.t_max,
            });
        }
        Ok(self.m_t[&t])
    }

    /// Energy of one issue cycle of `opcode` with `t` active threads:
    /// `(M_t·P_i·O + P_b)·T_clk`, quantized to fJ. This is the additive unit
    /// used by every static analysis.
    pub fn instruction_energy(&self, opcode: Opcode, t: u32) -> Result<Energy, ModelError> {
        let m = self.check_level(t)?;
        let p = self
            .p_i
            .get(&opcode)
            .ok_or(ModelError::UnknownOpcode(opcode))?;
        Ok(Energy::from_pj_f64(
            (m * p.power_mw * self.overhead + self.p_b_mw) * self.t_clk_ns,
        ))
    }

    /// Energy of one idle cycle: `P_b·T_clk`.
    pub fn idle_energy(&self) -> Energy {
        Energy::from_pj_f64(self.p_b_mw * self.t_clk_ns)
    }

    /// Evaluates the model against execution statistics, exactly.
    pub fn energy(&self, stats: &ExecutionStats) -> Result<Energy, ModelError> {
        let mut total = self.idle_energy() * stats.n_idl as u128;
        for (&(op, t), &cycles) in &stats.n_it {
            total += self.instruction_energy(op, t)? * cycles as u128;
        }
        Ok(total)
    }
}

/// The program-dependent model terms: issue-cycle counts per (opcode,
/// active-thread level), plus idle cycles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionStats {
    /// (opcode, active-thread count) → issue cycles.
    pub n_it: BTreeMap<(Opcode, u32), u64>,
    pub n_idl: u64,
    pub total_cycles: u64,
}

impl ExecutionStats {
    pub fn add_issue_cycles(&mut self, op: Opcode, t: u32, cycles: u64) {
        if cycles == 0 {
            return;
        }
        *self.n_it.entry((op, t)).or_insert(0) += cycles;
        self.total_cycles += cycles;
    }

    pub fn add_idle_cycles(&mut self, cycles: u64) {
        self.n_idl += cycles;
        self.total_cycles += cycles;
    }

    /// Total issue cycles of one opcode across all thread levels.
    pub fn issues_of(&self, op: Opcode) -> u64 {
        self.n_it
            .iter()
            .filter(|((o, _), _)| *o == op)
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn check_consistent(&self) -> bool {
        self.total_cycles == self.n_idl + self.n_it.values().sum::<u64>()
    }
}

impl Add for ExecutionStats {
    type Output = ExecutionStats;
    fn add(self, rhs: ExecutionStats) -> ExecutionStats {
        let mut out = self;
        for ((op, t), c) in rhs.n_it {
            *out.n_it.entry((op, t)).or_insert(0) += c;
        }
        out.n_idl += rhs.n_idl;
        out.total_cycles += rhs.total_cycles;
        out
    }
}

// --- model file format -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    t_clk_ns: f64,
    p_b_mw: f64,
    overhead: f64,
    t_max: u32,
    m_t: Vec<f64>,
    instructions: Vec<ModelFileInstr>,
}

#[derive(Serialize, Deserialize)]
struct ModelFileInstr {
    opcode: Opcode,
    power_mw: f64,
    source: PowerSource,
    operand_count: u8,
    encoding_bits: u8,
    mem_access: bool,
    issue_cycles: u32,
    class: crate::machine::InstrClass,
}

pub fn model_from_json(text: &str) -> Result<EnergyModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    let mut m_t = BTreeMap::new();
    for (i, m) in file.m_t.iter().enumerate() {
        m_t.insert(i as u32 + 1, *m);
    }
    let mut p_i = BTreeMap::new();
    let mut isa_meta = BTreeMap::new();
    for instr in file.instructions {
        if p_i
            .insert(
                instr.opcode,
                PowerEntry {
                    power_mw: instr.power_mw,
                    source: instr.source,
                },
            )
            .is_some()
        {
            return Err(ModelError::Validation(format!(
                "duplicate instruction entry for {}",
                instr.opcode
            )));
        }
        isa_meta.insert(
            instr.opcode,
            InstructionSpec {
                opcode: instr.opcode,
                operand_count: instr.operand_count,
                encoding_bits: instr.encoding_bits,
                mem_access: instr.mem_access,
                issue_cycles: instr.issue_cycles,
                class: instr.class,
            },
        );
    }
    let model = EnergyModel {
        t_clk_ns: file.t_clk_ns,
        p_b_mw: file.p_b_mw,
        overhead: file.overhead,
        t_max: file.t_max,
        m_t,
        p_i,
        isa_meta,
    };
    model.validate()?;
    Ok(model)
}

/// Canonical JSON rendering; `model_from_json` of the output reproduces the
/// model and re-rendering reproduces the bytes.
pub fn model_to_json(model: &EnergyModel) -> String {
    let instructions = model
        .p_i
        .iter()
        .map(|(op, entry)| {
            let spec = &model.isa_meta[op];
            ModelFileInstr {
                opcode: *op,
                power_mw: entry.power_mw,
                source: entry.source,
                operand_count: spec.operand_count,
                encoding_bits: spec.encoding_bits,
                mem_access: spec.mem_access,
                issue_cycles: spec.issue_cycles,
                class: spec.class,
            }
        })
        .collect();
    let file = ModelFile {
        t_clk_ns: model.t_clk_ns,
        p_b_mw: model.p_b_mw,
        overhead: model.overhead,
        t_max: model.t_max,
        m_t: (1..=model.t_max).map(|t| model.m_t[&t]).collect(),
        instructions,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnergyModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

pub fn save_model(model: &EnergyModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}
