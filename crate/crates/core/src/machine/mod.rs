//! The EIR virtual machine language: a register ISA with hardware threads and
//! rendezvous channels, its textual assembly format, and CFG construction.

mod cfg;
mod isa;
mod parser;

pub use cfg::{build_cfg, validate_for_analysis, BackEdge, Cfg, Diagnostic, FuncCfg, NaturalLoop};
pub use isa::{
    isa_spec, issue_cycles, InstrClass, InstructionSpec, Opcode, ALL_OPCODES, ISA_TABLE,
};
pub use parser::{parse_program, ParseError};

/// Parses an input key such as `r0` or `m12`.
pub fn parse_program_input_key(s: &str) -> Result<InputKey, ParseError> {
    parser::parse_input_key(s, 0)
}

use serde::{Deserialize, Serialize};
use std::fmt;

/// General-purpose registers per thread.
pub const NUM_REGS: usize = 12;
/// Default flat data memory, in 32-bit words.
pub const DEFAULT_MEM_WORDS: usize = 1024;
/// Hardware thread slots.
pub const MAX_THREADS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reg(pub u8);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    And,
    Xor,
    Shl,
}

impl AluOp {
    pub fn opcode(self) -> Opcode {
        match self {
            AluOp::Add => Opcode::Add,
            AluOp::Sub => Opcode::Sub,
            AluOp::Mul => Opcode::Mul,
            AluOp::And => Opcode::And,
            AluOp::Xor => Opcode::Xor,
            AluOp::Shl => Opcode::Shl,
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::And => a & b,
            AluOp::Xor => a ^ b,
            AluOp::Shl => a.wrapping_shl(b & 31),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstrKind {
    Ldc { dst: Reg, imm: u32 },
    Alu { op: AluOp, dst: Reg, a: Reg, b: Reg },
    Ldw { dst: Reg, addr: Reg },
    Stw { src: Reg, addr: Reg },
    Brt { cond: Reg, target: String },
    Jmp { target: String },
    Call { target: String },
    Ret,
    Fork { target: String },
    Out { ch: u32, src: Reg },
    In { ch: u32, dst: Reg },
    Halt,
}

impl InstrKind {
    pub fn opcode(&self) -> Opcode {
        match self {
            InstrKind::Ldc { .. } => Opcode::Ldc,
            InstrKind::Alu { op, .. } => op.opcode(),
            InstrKind::Ldw { .. } => Opcode::Ldw,
            InstrKind::Stw { .. } => Opcode::Stw,
            InstrKind::Brt { .. } => Opcode::Brt,
            InstrKind::Jmp { .. } => Opcode::Jmp,
            InstrKind::Call { .. } => Opcode::Call,
            InstrKind::Ret => Opcode::Ret,
            InstrKind::Fork { .. } => Opcode::Fork,
            InstrKind::Out { .. } => Opcode::Out,
            InstrKind::In { .. } => Opcode::In,
            InstrKind::Halt => Opcode::Halt,
        }
    }

    /// True for instructions that end a basic block.
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            InstrKind::Brt { .. } | InstrKind::Jmp { .. } | InstrKind::Ret | InstrKind::Halt
        )
    }
}

/// Iteration-count annotation attached to a back-edge branch: the branch is
/// traversed between `lower` and `upper` times per loop entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopBound {
    pub lower: u64,
    pub upper: u64,
}

#[derive(Clone, Debug)]
pub struct Instruction {
    pub kind: InstrKind,
    pub bound: Option<LoopBound>,
    /// 1-based source line, 0 for synthesized instructions.
    pub line: u32,
}

impl Instruction {
    pub fn new(kind: InstrKind) -> Self {
        Instruction {
            kind,
            bound: None,
            line: 0,
        }
    }
}

/// Structural equality; source positions are diagnostic metadata only.
impl PartialEq for Instruction {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.bound == other.bound
    }
}

/// How a block transfers control. The transferring instruction (if any) is the
/// last entry of `instructions`; `Fallthrough` blocks end without one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminator {
    Fallthrough,
    Jump,
    Branch,
    Return,
    Halt,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasicBlock {
    pub label: String,
    pub instructions: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BasicBlock {
    /// Branch/jump target, if the terminator has one.
    pub fn target(&self) -> Option<&str> {
        match self.instructions.last().map(|i| &i.kind) {
            Some(InstrKind::Brt { target, .. }) | Some(InstrKind::Jmp { target }) => {
                Some(target.as_str())
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Reg>,
    pub blocks: Vec<BasicBlock>,
    /// Extra labels for blocks (consecutive label lines alias one block).
    pub label_aliases: std::collections::BTreeMap<String, usize>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| b.label == label)
            .or_else(|| self.label_aliases.get(label).copied())
    }
}

/// Keys accepted as initial simulator state: registers of thread 0 or memory
/// words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum InputKey {
    Reg(Reg),
    Mem(u32),
}

impl fmt::Display for InputKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputKey::Reg(r) => write!(f, "{r}"),
            InputKey::Mem(a) => write!(f, "m{a}"),
        }
    }
}

/// Structured `;@` directives carried by a program.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProgramMeta {
    /// `;@ mem N` — minimum data memory the program needs.
    pub mem_words: Option<usize>,
    /// `;@ input r0 0..15` — declared input domains (inclusive), used by the
    /// exhaustive analysis drivers.
    pub input_domains: Vec<(InputKey, u32, u32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub functions: Vec<Function>,
    pub entry: String,
    pub meta: ProgramMeta,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn entry_function(&self) -> &Function {
        self.function(&self.entry).expect("validated entry")
    }

    /// Canonical textual form; `parse_program` on the output reproduces the
    /// same structure.
    pub fn print(&self) -> String {
        let mut out = String::new();
        if let Some(m) = self.meta.mem_words {
            out.push_str(&format!(";@ mem {m}\n"));
        }
        for (key, lo, hi) in &self.meta.input_domains {
            out.push_str(&format!(";@ input {key} {lo}..{hi}\n"));
        }
        for f in &self.functions {
            let params = f
                .params
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!(".func {}({})\n", f.name, params));
            for (i, b) in f.blocks.iter().enumerate() {
                out.push_str(&format!("{}:\n", b.label));
                for (alias, &idx) in &f.label_aliases {
                    if idx == i {
                        out.push_str(&format!("{alias}:\n"));
                    }
                }
                for ins in &b.instructions {
                    if let Some(bound) = ins.bound {
                        if bound.lower == 0 {
                            out.push_str(&format!("  @bound {}\n", bound.upper));
                        } else {
                            out.push_str(&format!("  @bound {}..{}\n", bound.lower, bound.upper));
                        }
                    }
                    out.push_str("  ");
                    out.push_str(&print_instr(&ins.kind));
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn print_instr(kind: &InstrKind) -> String {
    match kind {
        InstrKind::Ldc { dst, imm } => format!("LDC {dst}, {imm}"),
        InstrKind::Alu { op, dst, a, b } => format!("{} {dst}, {a}, {b}", op.opcode()),
        InstrKind::Ldw { dst, addr } => format!("LDW {dst}, {addr}"),
        InstrKind::Stw { src, addr } => format!("STW {src}, {addr}"),
        InstrKind::Brt { cond, target } => format!("BRT {cond}, {target}"),
        InstrKind::Jmp { target } => format!("JMP {target}"),
        InstrKind::Call { target } => format!("CALL {target}"),
        InstrKind::Ret => "RET".to_string(),
        InstrKind::Fork { target } => format!("FORK {target}"),
        InstrKind::Out { ch, src } => format!("OUT {ch}, {src}"),
        InstrKind::In { ch, dst } => format!("IN {ch}, {dst}"),
        InstrKind::Halt => "HALT".to_string(),
    }
}
