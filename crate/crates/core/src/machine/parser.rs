//! Line-oriented parser for the EIR assembly format.
//!
//! Grammar sketch (full EBNF in `docs/eir.md`):
//!   - one instruction per line, operands comma-separated
//!   - `label:` lines open blocks; `.func name(r0, r1)` opens a function
//!   - a bare top-level `label:` also opens a function when the previous one
//!     is complete and the label is not a pending branch target
//!   - `; comment` to end of line; `;@ key ...` lines are structured directives
//!   - `@bound k` / `@bound k..m` annotates the branch on the following line

use super::{
    AluOp, BasicBlock, Function, InputKey, InstrKind, Instruction, LoopBound, Opcode, Program,
    ProgramMeta, Reg, Terminator, NUM_REGS,
};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}, col {col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

fn err<T>(line: u32, col: u32, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        col,
        msg: msg.into(),
    })
}

#[derive(PartialEq)]
enum Closed {
    Uncond,
    Branch,
}

struct FnBuilder {
    name: String,
    params: Vec<Reg>,
    blocks: Vec<BasicBlock>,
    label_aliases: std::collections::BTreeMap<String, usize>,
    /// Open block: stacked labels (first is primary) and its instructions.
    cur: Option<(Vec<String>, Vec<Instruction>)>,
    closed_by: Option<Closed>,
    pending_targets: HashSet<String>,
    defined_labels: HashSet<String>,
    anon_counter: u32,
    decl_line: u32,
}

impl FnBuilder {
    fn new(name: String, params: Vec<Reg>, line: u32) -> Self {
        FnBuilder {
            name,
            params,
            blocks: Vec::new(),
            label_aliases: std::collections::BTreeMap::new(),
            cur: None,
            closed_by: None,
            pending_targets: HashSet::new(),
            defined_labels: HashSet::new(),
            anon_counter: 0,
            decl_line: line,
        }
    }

    fn close_cur(&mut self, terminator: Terminator) {
        let (labels, instrs) = self.cur.take().expect("open block");
        let index = self.blocks.len();
        let mut labels = labels.into_iter();
        let primary = labels.next().expect("at least one label");
        for alias in labels {
            self.label_aliases.insert(alias, index);
        }
        self.blocks.push(BasicBlock {
            label: primary,
            instructions: instrs,
            terminator,
        });
    }

    fn open_block(&mut self, label: String, line: u32) -> Result<(), ParseError> {
        if !self.defined_labels.insert(label.clone()) {
            return err(line, 1, format!("duplicate label '{label}'"));
        }
        self.pending_targets.remove(&label);
        match &mut self.cur {
            Some((labels, instrs)) if instrs.is_empty() => {
                // Consecutive labels alias the same block.
                labels.push(label);
            }
            Some(_) => {
                self.close_cur(Terminator::Fallthrough);
                self.cur = Some((vec![label], Vec::new()));
            }
            None => {
                self.cur = Some((vec![label], Vec::new()));
            }
        }
        self.closed_by = None;
        Ok(())
    }

    fn fresh_anon_label(&mut self) -> String {
        loop {
            self.anon_counter += 1;
            let label = format!(".L{}", self.anon_counter);
            if !self.defined_labels.contains(&label) && !self.pending_targets.contains(&label) {
                return label;
            }
        }
    }

    fn push_instr(&mut self, ins: Instruction, line: u32) -> Result<(), ParseError> {
        if self.cur.is_none() {
            if self.blocks.is_empty() && self.closed_by.is_none() {
                // First instruction of a `.func` body: implicit entry block
                // named after the function.
                let label = self.name.clone();
                self.defined_labels.insert(label.clone());
                self.cur = Some((vec![label], Vec::new()));
            } else {
                match self.closed_by {
                    Some(Closed::Branch) => {
                        let label = self.fresh_anon_label();
                        self.defined_labels.insert(label.clone());
                        self.cur = Some((vec![label], Vec::new()));
                    }
                    _ => {
                        return err(
                            line,
                            1,
                            "unreachable instruction: previous block does not fall through (add a label)",
                        );
                    }
                }
            }
        }
        let is_control = ins.kind.is_control();
        let terminator = match &ins.kind {
            InstrKind::Brt { target, .. } => {
                if !self.defined_labels.contains(target) {
                    self.pending_targets.insert(target.clone());
                }
                Some(Terminator::Branch)
            }
            InstrKind::Jmp { target } => {
                if !self.defined_labels.contains(target) {
                    self.pending_targets.insert(target.clone());
                }
                Some(Terminator::Jump)
            }
            InstrKind::Ret => Some(Terminator::Return),
            InstrKind::Halt => Some(Terminator::Halt),
            _ => None,
        };
        self.cur.as_mut().unwrap().1.push(ins);
        if is_control {
            let terminator = terminator.unwrap();
            self.close_cur(terminator);
            self.closed_by = Some(if terminator == Terminator::Branch {
                Closed::Branch
            } else {
                Closed::Uncond
            });
        }
        Ok(())
    }

    /// True when a following top-level label would start a new function.
    fn complete(&self) -> bool {
        self.cur.is_none() && self.closed_by == Some(Closed::Uncond)
    }

    fn finish(mut self, line: u32) -> Result<Function, ParseError> {
        // A function that falls off its end gets the implicit HALT terminator.
        if let Some((labels, instrs)) = &self.cur {
            if instrs.is_empty() {
                return err(line, 1, format!("empty block '{}'", labels[0]));
            }
            self.cur
                .as_mut()
                .unwrap()
                .1
                .push(Instruction::new(InstrKind::Halt));
            self.close_cur(Terminator::Halt);
        } else if self.closed_by == Some(Closed::Branch) {
            let label = self.fresh_anon_label();
            self.blocks.push(BasicBlock {
                label,
                instructions: vec![Instruction::new(InstrKind::Halt)],
                terminator: Terminator::Halt,
            });
        }
        if self.blocks.is_empty() {
            return err(
                self.decl_line,
                1,
                format!("function '{}' has no blocks", self.name),
            );
        }
        if let Some(t) = self.pending_targets.iter().min() {
            return err(
                line,
                1,
                format!("undefined label '{t}' in function '{}'", self.name),
            );
        }
        Ok(Function {
            name: self.name,
            params: self.params,
            blocks: self.blocks,
            label_aliases: self.label_aliases,
        })
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut meta = ProgramMeta::default();
    let mut functions: Vec<Function> = Vec::new();
    let mut cur_fn: Option<FnBuilder> = None;
    let mut pending_bound: Option<LoopBound> = None;
    let mut last_line = 0u32;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx as u32 + 1;
        last_line = lineno;
        let trimmed = raw.trim();
        if let Some(rest) = trimmed.strip_prefix(";@") {
            parse_directive(rest.trim(), &mut meta, lineno)?;
            continue;
        }
        let code = match raw.find(';') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let code = code.trim();
        if code.is_empty() {
            continue;
        }

        if let Some(rest) = code.strip_prefix(".func") {
            if pending_bound.is_some() {
                return err(lineno, 1, "@bound must be followed by a branch instruction");
            }
            if let Some(f) = cur_fn.take() {
                functions.push(f.finish(lineno)?);
            }
            let (name, params) = parse_func_decl(rest.trim(), lineno)?;
            cur_fn = Some(FnBuilder::new(name, params, lineno));
            continue;
        }

        if let Some(rest) = code.strip_prefix("@bound") {
            if pending_bound.is_some() {
                return err(lineno, 1, "duplicate @bound annotation");
            }
            pending_bound = Some(parse_bound(rest.trim(), lineno)?);
            continue;
        }

        let (label, rest) = split_label(code);
        if let Some(label) = label {
            if pending_bound.is_some() {
                return err(lineno, 1, "@bound must be immediately followed by a branch");
            }
            check_ident(label, lineno)?;
            let starts_function = match &cur_fn {
                None => true,
                Some(f) => f.complete() && !f.pending_targets.contains(label),
            };
            if starts_function {
                if let Some(f) = cur_fn.take() {
                    functions.push(f.finish(lineno)?);
                }
                let mut b = FnBuilder::new(label.to_string(), Vec::new(), lineno);
                b.open_block(label.to_string(), lineno)?;
                cur_fn = Some(b);
            } else {
                cur_fn
                    .as_mut()
                    .unwrap()
                    .open_block(label.to_string(), lineno)?;
            }
            if rest.is_empty() {
                continue;
            }
            let mut ins = parse_instr(rest, lineno)?;
            ins.bound = None;
            cur_fn.as_mut().unwrap().push_instr(ins, lineno)?;
            continue;
        }

        let mut ins = parse_instr(code, lineno)?;
        if let Some(bound) = pending_bound.take() {
            if !matches!(ins.kind, InstrKind::Brt { .. } | InstrKind::Jmp { .. }) {
                return err(lineno, 1, "@bound must annotate a BRT or JMP instruction");
            }
            ins.bound = Some(bound);
        }
        match cur_fn.as_mut() {
            Some(f) => f.push_instr(ins, lineno)?,
            None => return err(lineno, 1, "instruction outside a function (missing label?)"),
        }
    }

    if pending_bound.is_some() {
        return err(last_line, 1, "@bound at end of input");
    }
    if let Some(f) = cur_fn.take() {
        functions.push(f.finish(last_line + 1)?);
    }
    if functions.is_empty() {
        return err(1, 1, "program has no functions");
    }

    let entry = if functions.iter().any(|f| f.name == "main") {
        "main".to_string()
    } else {
        functions[0].name.clone()
    };
    let program = Program {
        functions,
        entry,
        meta,
    };
    validate_calls(&program)?;
    Ok(program)
}

fn validate_calls(program: &Program) -> Result<(), ParseError> {
    for f in &program.functions {
        for b in &f.blocks {
            for ins in &b.instructions {
                let target = match &ins.kind {
                    InstrKind::Call { target } | InstrKind::Fork { target } => target,
                    _ => continue,
                };
                if program.function(target).is_none() {
                    return err(
                        ins.line,
                        1,
                        format!("call target '{target}' is not a function"),
                    );
                }
            }
        }
    }
    Ok(())
}

fn parse_directive(rest: &str, meta: &mut ProgramMeta, line: u32) -> Result<(), ParseError> {
    let mut parts = rest.split_whitespace();
    match parts.next() {
        Some("mem") => {
            let n = parts
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or(ParseError {
                    line,
                    col: 1,
                    msg: ";@ mem expects a word count".into(),
                })?;
            meta.mem_words = Some(n);
            Ok(())
        }
        Some("input") => {
            let key = parts.next().ok_or(ParseError {
                line,
                col: 1,
                msg: ";@ input expects a key".into(),
            })?;
            let key = parse_input_key(key, line)?;
            let range = parts.next().ok_or(ParseError {
                line,
                col: 1,
                msg: ";@ input expects lo..hi".into(),
            })?;
            let (lo, hi) = range
                .split_once("..")
                .and_then(|(a, b)| Some((a.parse::<u32>().ok()?, b.parse::<u32>().ok()?)))
                .ok_or(ParseError {
                    line,
                    col: 1,
                    msg: ";@ input expects lo..hi".into(),
                })?;
            if lo > hi {
                return err(line, 1, ";@ input range is empty");
            }
            meta.input_domains.push((key, lo, hi));
            Ok(())
        }
        Some(other) => err(line, 1, format!("unknown directive ';@ {other}'")),
        None => err(line, 1, "empty ';@' directive"),
    }
}

pub(crate) fn parse_input_key(s: &str, line: u32) -> Result<InputKey, ParseError> {
    if let Some(n) = s.strip_prefix('r') {
        if let Ok(n) = n.parse::<u8>() {
            if (n as usize) < NUM_REGS {
                return Ok(InputKey::Reg(Reg(n)));
            }
        }
    }
    if let Some(n) = s.strip_prefix('m') {
        if let Ok(n) = n.parse::<u32>() {
            return Ok(InputKey::Mem(n));
        }
    }
    err(line, 1, format!("bad input key '{s}' (expected rN or mN)"))
}

fn parse_func_decl(rest: &str, line: u32) -> Result<(String, Vec<Reg>), ParseError> {
    let (name, params_str) = match rest.find('(') {
        Some(pos) => {
            let name = rest[..pos].trim();
            let tail = rest[pos + 1..].trim();
            let Some(inner) = tail.strip_suffix(')') else {
                return err(line, 1, "missing ')' in .func declaration");
            };
            (name, inner.trim())
        }
        None => (rest, ""),
    };
    check_ident(name, line)?;
    let mut params = Vec::new();
    if !params_str.is_empty() {
        for p in params_str.split(',') {
            params.push(parse_reg(p.trim(), line)?);
        }
    }
    Ok((name.to_string(), params))
}

fn parse_bound(rest: &str, line: u32) -> Result<LoopBound, ParseError> {
    let parse_u64 = |s: &str| -> Result<u64, ParseError> {
        s.trim().parse::<u64>().map_err(|_| ParseError {
            line,
            col: 1,
            msg: format!("bad bound '{s}'"),
        })
    };
    if let Some((lo, hi)) = rest.split_once("..") {
        let lower = parse_u64(lo)?;
        let upper = parse_u64(hi)?;
        if lower > upper {
            return err(line, 1, "@bound lower exceeds upper");
        }
        Ok(LoopBound { lower, upper })
    } else {
        Ok(LoopBound {
            lower: 0,
            upper: parse_u64(rest)?,
        })
    }
}

/// Splits `label: rest` if the line starts with a label.
fn split_label(code: &str) -> (Option<&str>, &str) {
    if let Some(pos) = code.find(':') {
        let head = &code[..pos];
        if !head.is_empty()
            && head
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '.')
            && head
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        {
            return (Some(head), code[pos + 1..].trim());
        }
    }
    (None, code)
}

fn check_ident(s: &str, line: u32) -> Result<(), ParseError> {
    let ok = !s.is_empty()
        && s.chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '.')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    if ok {
        Ok(())
    } else {
        err(line, 1, format!("bad identifier '{s}'"))
    }
}

fn parse_reg(s: &str, line: u32) -> Result<Reg, ParseError> {
    let n = s
        .strip_prefix('r')
        .and_then(|n| n.parse::<u8>().ok())
        .ok_or(ParseError {
            line,
            col: 1,
            msg: format!("bad register '{s}'"),
        })?;
    if (n as usize) >= NUM_REGS {
        return err(
            line,
            1,
            format!("register {s} out of range (r0..r{})", NUM_REGS - 1),
        );
    }
    Ok(Reg(n))
}

fn parse_imm(s: &str, line: u32) -> Result<u32, ParseError> {
    let s = s.trim();
    let value = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(neg) = s.strip_prefix('-') {
        neg.parse::<u32>()
            .ok()
            .map(|v| (v as i64).wrapping_neg() as u32)
    } else {
        s.parse::<u32>().ok()
    };
    value.ok_or(ParseError {
        line,
        col: 1,
        msg: format!("bad immediate '{s}'"),
    })
}

fn parse_instr(code: &str, line: u32) -> Result<Instruction, ParseError> {
    let (mnemonic, rest) = match code.find(char::is_whitespace) {
        Some(pos) => (&code[..pos], code[pos..].trim()),
        None => (code, ""),
    };
    let opcode: Opcode = mnemonic.parse().map_err(|_| ParseError {
        line,
        col: 1,
        msg: format!("unknown opcode '{mnemonic}'"),
    })?;
    let ops: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };
    let arity = |n: usize| -> Result<(), ParseError> {
        if ops.len() == n {
            Ok(())
        } else {
            err(
                line,
                1,
                format!("{mnemonic} expects {n} operand(s), got {}", ops.len()),
            )
        }
    };
    let kind = match opcode {
        Opcode::Ldc => {
            arity(2)?;
            InstrKind::Ldc {
                dst: parse_reg(ops[0], line)?,
                imm: parse_imm(ops[1], line)?,
            }
        }
        Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::And | Opcode::Xor | Opcode::Shl => {
            arity(3)?;
            let op = match opcode {
                Opcode::Add => AluOp::Add,
                Opcode::Sub => AluOp::Sub,
                Opcode::Mul => AluOp::Mul,
                Opcode::And => AluOp::And,
                Opcode::Xor => AluOp::Xor,
                _ => AluOp::Shl,
            };
            InstrKind::Alu {
                op,
                dst: parse_reg(ops[0], line)?,
                a: parse_reg(ops[1], line)?,
                b: parse_reg(ops[2], line)?,
            }
        }
        Opcode::Ldw => {
            arity(2)?;
            InstrKind::Ldw {
                dst: parse_reg(ops[0], line)?,
                addr: parse_reg(ops[1], line)?,
            }
        }
        Opcode::Stw => {
            arity(2)?;
            InstrKind::Stw {
                src: parse_reg(ops[0], line)?,
                addr: parse_reg(ops[1], line)?,
            }
        }
        Opcode::Brt => {
            arity(2)?;
            check_ident(ops[1], line)?;
            InstrKind::Brt {
                cond: parse_reg(ops[0], line)?,
                target: ops[1].to_string(),
            }
        }
        Opcode::Jmp => {
            arity(1)?;
            check_ident(ops[0], line)?;
            InstrKind::Jmp {
                target: ops[0].to_string(),
            }
        }
        Opcode::Call => {
            arity(1)?;
            check_ident(ops[0], line)?;
            InstrKind::Call {
                target: ops[0].to_string(),
            }
        }
        Opcode::Ret => {
            arity(0)?;
            InstrKind::Ret
        }
        Opcode::Fork => {
            arity(1)?;
            check_ident(ops[0], line)?;
            InstrKind::Fork {
                target: ops[0].to_string(),
            }
        }
        Opcode::Out => {
            arity(2)?;
            InstrKind::Out {
                ch: parse_imm(ops[0], line)?,
                src: parse_reg(ops[1], line)?,
            }
        }
        Opcode::In => {
            arity(2)?;
            InstrKind::In {
                ch: parse_imm(ops[0], line)?,
                dst: parse_reg(ops[1], line)?,
            }
        }
        Opcode::Halt => {
            arity(0)?;
            InstrKind::Halt
        }
    };
    Ok(Instruction {
        kind,
        bound: None,
        line,
    })
}
