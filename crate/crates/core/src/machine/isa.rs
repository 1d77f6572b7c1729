//! The fixed EIR instruction set and its per-opcode metadata.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The 17 EIR opcodes (16 named instructions plus the HALT terminator).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Opcode {
    Ldc,
    Add,
    Sub,
    Mul,
    And,
    Xor,
    Shl,
    Ldw,
    Stw,
    Brt,
    Jmp,
    Call,
    Ret,
    Fork,
    Out,
    In,
    Halt,
}

pub const ALL_OPCODES: [Opcode; 17] = [
    Opcode::Ldc,
    Opcode::Add,
    Opcode::Sub,
    Opcode::Mul,
    Opcode::And,
    Opcode::Xor,
    Opcode::Shl,
    Opcode::Ldw,
    Opcode::Stw,
    Opcode::Brt,
    Opcode::Jmp,
    Opcode::Call,
    Opcode::Ret,
    Opcode::Fork,
    Opcode::Out,
    Opcode::In,
    Opcode::Halt,
];

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::Ldc => "LDC",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::And => "AND",
            Opcode::Xor => "XOR",
            Opcode::Shl => "SHL",
            Opcode::Ldw => "LDW",
            Opcode::Stw => "STW",
            Opcode::Brt => "BRT",
            Opcode::Jmp => "JMP",
            Opcode::Call => "CALL",
            Opcode::Ret => "RET",
            Opcode::Fork => "FORK",
            Opcode::Out => "OUT",
            Opcode::In => "IN",
            Opcode::Halt => "HALT",
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Opcode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        ALL_OPCODES
            .iter()
            .copied()
            .find(|op| op.name() == s)
            .ok_or(())
    }
}

/// Coarse instruction class; `Arith` and `Mem` are directly profileable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrClass {
    Arith,
    Mem,
    Branch,
    Thread,
    Chan,
    Misc,
}

/// Static per-opcode features: operand arity, encoding width, memory access,
/// issue cycles and class. These drive both the simulator's cycle accounting
/// and the feature-based power estimation of unprofileable opcodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionSpec {
    pub opcode: Opcode,
    pub operand_count: u8,
    pub encoding_bits: u8,
    pub mem_access: bool,
    pub issue_cycles: u32,
    pub class: InstrClass,
}

impl InstructionSpec {
    pub fn profileable(&self) -> bool {
        matches!(self.class, InstrClass::Arith | InstrClass::Mem)
    }
}

const fn spec(
    opcode: Opcode,
    operand_count: u8,
    encoding_bits: u8,
    mem_access: bool,
    issue_cycles: u32,
    class: InstrClass,
) -> InstructionSpec {
    InstructionSpec {
        opcode,
        operand_count,
        encoding_bits,
        mem_access,
        issue_cycles,
        class,
    }
}

/// The canonical ISA feature table. Model files carry a copy of these fields
/// and are validated against this table on load.
pub const ISA_TABLE: [InstructionSpec; 17] = [
    spec(Opcode::Ldc, 2, 32, false, 1, InstrClass::Arith),
    spec(Opcode::Add, 3, 16, false, 1, InstrClass::Arith),
    spec(Opcode::Sub, 3, 16, false, 1, InstrClass::Arith),
    spec(Opcode::Mul, 3, 32, false, 1, InstrClass::Arith),
    spec(Opcode::And, 3, 16, false, 1, InstrClass::Arith),
    spec(Opcode::Xor, 3, 16, false, 1, InstrClass::Arith),
    spec(Opcode::Shl, 3, 16, false, 1, InstrClass::Arith),
    spec(Opcode::Ldw, 2, 32, true, 2, InstrClass::Mem),
    spec(Opcode::Stw, 2, 32, true, 2, InstrClass::Mem),
    spec(Opcode::Brt, 2, 32, false, 1, InstrClass::Branch),
    spec(Opcode::Jmp, 1, 16, false, 1, InstrClass::Branch),
    spec(Opcode::Call, 1, 32, false, 1, InstrClass::Misc),
    spec(Opcode::Ret, 0, 16, false, 1, InstrClass::Misc),
    spec(Opcode::Fork, 1, 32, false, 1, InstrClass::Thread),
    spec(Opcode::Out, 2, 32, false, 1, InstrClass::Chan),
    spec(Opcode::In, 2, 32, false, 1, InstrClass::Chan),
    spec(Opcode::Halt, 0, 16, false, 1, InstrClass::Misc),
];

pub fn isa_spec(op: Opcode) -> &'static InstructionSpec {
    &ISA_TABLE[ALL_OPCODES.iter().position(|&o| o == op).unwrap()]
}

/// Issue cycles an instruction occupies on the shared pipeline.
pub fn issue_cycles(op: Opcode) -> u32 {
    isa_spec(op).issue_cycles
}
