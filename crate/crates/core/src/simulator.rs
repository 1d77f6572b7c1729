//! Deterministic cycle-level instruction set simulator.
//!
//! One issue slot per cycle, shared by all hardware threads in strict
//! round-robin order over runnable thread ids. An instruction with
//! `issue_cycles = k` occupies k consecutive cycles of the pipeline. Channel
//! IN/OUT is a blocking rendezvous with a fixed transfer latency: once the
//! second party arrives both threads are off the runnable set while the datum
//! crosses, and cycles with no runnable thread count as idle. A cycle with no
//! runnable, no in-flight transfer and at least one blocked thread is a
//! deadlock.

use crate::energy::{Energy, EnergyReport, Provenance};
use crate::machine::{
    issue_cycles, InputKey, InstrKind, Opcode, Program, Reg, DEFAULT_MEM_WORDS, MAX_THREADS,
    NUM_REGS,
};
use crate::model::{EnergyModel, ExecutionStats, ModelError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Cycles a rendezvous datum spends in flight after the second party arrives.
pub const CHAN_LATENCY: u64 = 2;
/// Default cycle budget for a run.
pub const DEFAULT_FUEL: u64 = 10_000_000;
const CALL_STACK_LIMIT: usize = 1024;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("line {line}: memory access at word {addr} out of bounds (memory is {size} words)")]
    MemOutOfBounds { addr: u32, size: usize, line: u32 },
    #[error("line {line}: FORK exceeds the hardware thread limit of {max}")]
    ForkLimit { max: usize, line: u32 },
    #[error("line {line}: call stack overflow (depth limit {limit})")]
    CallStackOverflow { limit: usize, line: u32 },
    #[error("extrapolation: {0}")]
    Extrapolation(String),
}

/// Initial architectural state for a run: registers of thread 0 and memory
/// words. Everything else starts at zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimInputs {
    pub regs: BTreeMap<Reg, u32>,
    pub mem: BTreeMap<u32, u32>,
}

impl SimInputs {
    pub fn set(&mut self, key: InputKey, value: u32) {
        match key {
            InputKey::Reg(r) => {
                self.regs.insert(r, value);
            }
            InputKey::Mem(a) => {
                self.mem.insert(a, value);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub fuel: u64,
    /// Overrides the program's declared memory size when set.
    pub mem_words: Option<usize>,
    pub max_threads: usize,
    /// Measurement mode: an all-blocked machine idles instead of reporting
    /// deadlock, so base-power kernels can run to their full duration.
    pub keep_idling: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            fuel: DEFAULT_FUEL,
            mem_words: None,
            max_threads: MAX_THREADS,
            keep_idling: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Halted,
    Deadlock,
    FuelExhausted,
}

/// One issue cycle of the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub thread: u32,
    pub opcode: Opcode,
    /// Runnable threads at the start of the owning instruction's first cycle.
    pub active_threads: u32,
    pub func: usize,
    pub block: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub idle_cycles: u64,
    pub total_cycles: u64,
    pub outcome: Outcome,
    /// Final register files, indexed by thread id (dead threads keep their
    /// last state).
    pub final_regs: Vec<[u32; NUM_REGS]>,
    pub final_mem: Vec<u32>,
}

impl Trace {
    /// r0 of thread 0 at the end of the run.
    pub fn result(&self) -> u32 {
        self.final_regs[0][0]
    }

    /// JSON Lines export, one `{c, tid, op, act}` object per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!(
                "{{\"c\":{},\"tid\":{},\"op\":\"{}\",\"act\":{}}}\n",
                e.cycle, e.thread, e.opcode, e.active_threads
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ThreadState {
    Runnable,
    BlockedOut { ch: u32, value: u32 },
    BlockedIn { ch: u32, dst: Reg },
    Completing { until: u64 },
    Dead,
}

#[derive(Clone, Copy, Debug)]
struct Pc {
    func: usize,
    block: usize,
    instr: usize,
}

#[derive(Clone)]
struct Frame {
    ret: Pc,
    saved_regs: [u32; NUM_REGS],
}

struct Thread {
    regs: [u32; NUM_REGS],
    pc: Pc,
    stack: Vec<Frame>,
    state: ThreadState,
    issue_counts: BTreeMap<Opcode, u64>,
    active_cycles: u64,
}

/// What one scheduling step did. `Issue` covers all `cycles` issue cycles of
/// a single instruction.
#[derive(Clone, Copy, Debug)]
pub enum Step {
    Issue {
        cycle: u64,
        thread: u32,
        opcode: Opcode,
        cycles: u32,
        active_threads: u32,
        func: usize,
        block: usize,
        /// Data word on the operand bus for this issue, for power models.
        operand_word: u32,
    },
    Idle {
        cycle: u64,
    },
    Done(Outcome),
}

pub struct Machine<'p> {
    program: &'p Program,
    threads: Vec<Thread>,
    channels: BTreeMap<u32, ChannelState>,
    mem: Vec<u32>,
    cycle: u64,
    fuel: u64,
    rr_next: u32,
    keep_idling: bool,
    max_threads: usize,
    idle_cycles: u64,
}

#[derive(Default)]
struct ChannelState {
    waiting_out: std::collections::VecDeque<u32>,
    waiting_in: std::collections::VecDeque<u32>,
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, inputs: &SimInputs, config: &RunConfig) -> Machine<'p> {
        let mem_words = config
            .mem_words
            .unwrap_or_else(|| program.meta.mem_words.unwrap_or(0).max(DEFAULT_MEM_WORDS));
        let mut mem = vec![0u32; mem_words];
        for (&addr, &value) in &inputs.mem {
            if (addr as usize) < mem.len() {
                mem[addr as usize] = value;
            }
        }
        let mut regs = [0u32; NUM_REGS];
        for (&r, &value) in &inputs.regs {
            regs[r.0 as usize] = value;
        }
        let entry_fn = program
            .function_index(&program.entry)
            .expect("validated entry");
        let thread = Thread {
            regs,
            pc: Pc {
                func: entry_fn,
                block: 0,
                instr: 0,
            },
            stack: Vec::new(),
            state: ThreadState::Runnable,
            issue_counts: BTreeMap::new(),
            active_cycles: 0,
        };
        Machine {
            program,
            threads: vec![thread],
            channels: BTreeMap::new(),
            mem,
            cycle: 0,
            fuel: config.fuel,
            rr_next: 0,
            keep_idling: config.keep_idling,
            max_threads: config.max_threads,
            idle_cycles: 0,
        }
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn idle_cycles(&self) -> u64 {
        self.idle_cycles
    }

    fn wake_completing(&mut self) {
        for t in &mut self.threads {
            if let ThreadState::Completing { until } = t.state {
                if self.cycle >= until {
                    t.state = ThreadState::Runnable;
                }
            }
        }
    }

    fn runnable_ids(&self) -> Vec<u32> {
        self.threads
            .iter()
            .enumerate()
            .filter(|(_, t)| t.state == ThreadState::Runnable)
            .map(|(i, _)| i as u32)
            .collect()
    }

    fn live_count(&self) -> usize {
        self.threads
            .iter()
            .filter(|t| t.state != ThreadState::Dead)
            .count()
    }

    /// Executes one scheduling step: one instruction, one idle cycle, or the
    /// final outcome.
    pub fn step(&mut self) -> Result<Step, SimError> {
        self.wake_completing();
        let runnable = self.runnable_ids();
        if runnable.is_empty() {
            if self.live_count() == 0 {
                return Ok(Step::Done(Outcome::Halted));
            }
            let transferring = self
                .threads
                .iter()
                .any(|t| matches!(t.state, ThreadState::Completing { .. }));
            if !transferring && !self.keep_idling {
                return Ok(Step::Done(Outcome::Deadlock));
            }
            if self.fuel == 0 {
                return Ok(Step::Done(Outcome::FuelExhausted));
            }
            self.fuel -= 1;
            let cycle = self.cycle;
            self.cycle += 1;
            self.idle_cycles += 1;
            return Ok(Step::Idle { cycle });
        }

        let active = runnable.len() as u32;
        let tid = *runnable
            .iter()
            .find(|&&id| id >= self.rr_next)
            .unwrap_or(&runnable[0]);
        self.rr_next = tid + 1;

        let pc = self.threads[tid as usize].pc;
        let func = &self.program.functions[pc.func];
        let instr = &func.blocks[pc.block].instructions[pc.instr];
        let opcode = instr.kind.opcode();
        let cycles = issue_cycles(opcode);
        if self.fuel < cycles as u64 {
            return Ok(Step::Done(Outcome::FuelExhausted));
        }
        self.fuel -= cycles as u64;
        let cycle = self.cycle;
        self.cycle += cycles as u64;
        for &id in &runnable {
            self.threads[id as usize].active_cycles += cycles as u64;
        }
        *self.threads[tid as usize]
            .issue_counts
            .entry(opcode)
            .or_insert(0) += cycles as u64;

        let operand_word = self.execute(tid, pc, instr.kind.clone(), instr.line, cycle)?;
        Ok(Step::Issue {
            cycle,
            thread: tid,
            opcode,
            cycles,
            active_threads: active,
            func: pc.func,
            block: pc.block,
            operand_word,
        })
    }

    fn advance_pc(&mut self, tid: u32, pc: Pc) {
        let func = &self.program.functions[pc.func];
        let block = &func.blocks[pc.block];
        let t = &mut self.threads[tid as usize];
        if pc.instr + 1 < block.instructions.len() {
            t.pc = Pc {
                instr: pc.instr + 1,
                ..pc
            };
        } else {
            // Fallthrough block; the parser guarantees a next block exists.
            t.pc = Pc {
                func: pc.func,
                block: pc.block + 1,
                instr: 0,
            };
        }
    }

    fn jump_to(&mut self, tid: u32, func: usize, label: &str) {
        let block = self.program.functions[func]
            .block_index(label)
            .expect("validated target");
        self.threads[tid as usize].pc = Pc {
            func,
            block,
            instr: 0,
        };
    }

    fn execute(
        &mut self,
        tid: u32,
        pc: Pc,
        kind: InstrKind,
        line: u32,
        cycle: u64,
    ) -> Result<u32, SimError> {
        let regs = self.threads[tid as usize].regs;
        let word: u32;
        match kind {
            InstrKind::Ldc { dst, imm } => {
                word = imm;
                self.threads[tid as usize].regs[dst.0 as usize] = imm;
                self.advance_pc(tid, pc);
            }
            InstrKind::Alu { op, dst, a, b } => {
                let (va, vb) = (regs[a.0 as usize], regs[b.0 as usize]);
                word = va ^ vb;
                self.threads[tid as usize].regs[dst.0 as usize] = op.apply(va, vb);
                self.advance_pc(tid, pc);
            }
            InstrKind::Ldw { dst, addr } => {
                let a = regs[addr.0 as usize];
                word = a;
                if a as usize >= self.mem.len() {
                    return Err(SimError::MemOutOfBounds {
                        addr: a,
                        size: self.mem.len(),
                        line,
                    });
                }
                self.threads[tid as usize].regs[dst.0 as usize] = self.mem[a as usize];
                self.advance_pc(tid, pc);
            }
            InstrKind::Stw { src, addr } => {
                let a = regs[addr.0 as usize];
                let v = regs[src.0 as usize];
                word = v ^ a;
                if a as usize >= self.mem.len() {
                    return Err(SimError::MemOutOfBounds {
                        addr: a,
                        size: self.mem.len(),
                        line,
                    });
                }
                self.mem[a as usize] = v;
                self.advance_pc(tid, pc);
            }
            InstrKind::Brt { cond, ref target } => {
                let v = regs[cond.0 as usize];
                word = v;
                if v != 0 {
                    self.jump_to(tid, pc.func, target);
                } else {
                    self.advance_pc(tid, pc);
                }
            }
            InstrKind::Jmp { ref target } => {
                word = 0;
                self.jump_to(tid, pc.func, target);
            }
            InstrKind::Call { ref target } => {
                word = 0;
                let t = &mut self.threads[tid as usize];
                if t.stack.len() >= CALL_STACK_LIMIT {
                    return Err(SimError::CallStackOverflow {
                        limit: CALL_STACK_LIMIT,
                        line,
                    });
                }
                // Register-window call: the callee starts from a copy of the
                // caller's registers; RET restores all but r0.
                let func = &self.program.functions[pc.func];
                let ret = if pc.instr + 1 < func.blocks[pc.block].instructions.len() {
                    Pc {
                        instr: pc.instr + 1,
                        ..pc
                    }
                } else {
                    Pc {
                        func: pc.func,
                        block: pc.block + 1,
                        instr: 0,
                    }
                };
                t.stack.push(Frame {
                    ret,
                    saved_regs: t.regs,
                });
                let callee = self
                    .program
                    .function_index(target)
                    .expect("validated target");
                self.threads[tid as usize].pc = Pc {
                    func: callee,
                    block: 0,
                    instr: 0,
                };
            }
            InstrKind::Ret => {
                word = 0;
                let t = &mut self.threads[tid as usize];
                match t.stack.pop() {
                    Some(frame) => {
                        let ret_val = t.regs[0];
                        t.regs = frame.saved_regs;
                        t.regs[0] = ret_val;
                        t.pc = frame.ret;
                    }
                    None => t.state = ThreadState::Dead,
                }
            }
            InstrKind::Fork { ref target } => {
                word = 0;
                if self.live_count() >= self.max_threads {
                    return Err(SimError::ForkLimit {
                        max: self.max_threads,
                        line,
                    });
                }
                let callee = self
                    .program
                    .function_index(target)
                    .expect("validated target");
                self.threads.push(Thread {
                    regs: [0u32; NUM_REGS],
                    pc: Pc {
                        func: callee,
                        block: 0,
                        instr: 0,
                    },
                    stack: Vec::new(),
                    state: ThreadState::Runnable,
                    issue_counts: BTreeMap::new(),
                    active_cycles: 0,
                });
                self.advance_pc(tid, pc);
            }
            InstrKind::Out { ch, src } => {
                let value = regs[src.0 as usize];
                word = value;
                self.advance_pc(tid, pc);
                let chan = self.channels.entry(ch).or_default();
                if let Some(rx) = chan.waiting_in.pop_front() {
                    let dst = match self.threads[rx as usize].state {
                        ThreadState::BlockedIn { dst, .. } => dst,
                        _ => unreachable!("waiting_in holds blocked receivers"),
                    };
                    let until = cycle + 1 + CHAN_LATENCY;
                    self.threads[rx as usize].regs[dst.0 as usize] = value;
                    self.threads[rx as usize].state = ThreadState::Completing { until };
                    self.threads[tid as usize].state = ThreadState::Completing { until };
                } else {
                    self.threads[tid as usize].state = ThreadState::BlockedOut { ch, value };
                    self.channels
                        .get_mut(&ch)
                        .unwrap()
                        .waiting_out
                        .push_back(tid);
                }
            }
            InstrKind::In { ch, dst } => {
                self.advance_pc(tid, pc);
                let chan = self.channels.entry(ch).or_default();
                if let Some(tx) = chan.waiting_out.pop_front() {
                    let value = match self.threads[tx as usize].state {
                        ThreadState::BlockedOut { value, .. } => value,
                        _ => unreachable!("waiting_out holds blocked senders"),
                    };
                    word = value;
                    let until = cycle + 1 + CHAN_LATENCY;
                    self.threads[tid as usize].regs[dst.0 as usize] = value;
                    self.threads[tid as usize].state = ThreadState::Completing { until };
                    self.threads[tx as usize].state = ThreadState::Completing { until };
                } else {
                    word = 0;
                    self.threads[tid as usize].state = ThreadState::BlockedIn { ch, dst };
                    self.channels
                        .get_mut(&ch)
                        .unwrap()
                        .waiting_in
                        .push_back(tid);
                }
            }
            InstrKind::Halt => {
                word = 0;
                self.threads[tid as usize].state = ThreadState::Dead;
            }
        }
        Ok(word)
    }

    fn into_final_state(self) -> (Vec<[u32; NUM_REGS]>, Vec<u32>, PerThreadCounts) {
        let mut per_thread = BTreeMap::new();
        let mut regs = Vec::new();
        for (i, t) in self.threads.iter().enumerate() {
            regs.push(t.regs);
            per_thread.insert(
                i as u32,
                ThreadCounts {
                    issue_cycles: t.issue_counts.clone(),
                    active_cycles: t.active_cycles,
                },
            );
        }
        let counts = PerThreadCounts {
            per_thread,
            wall_cycles: self.cycle,
            outcome: Outcome::Halted, // overwritten by the caller
        };
        (regs, self.mem, counts)
    }
}

/// Runs a program to completion, producing the full trace.
pub fn run(program: &Program, inputs: &SimInputs, config: &RunConfig) -> Result<Trace, SimError> {
    let mut machine = Machine::new(program, inputs, config);
    let mut events = Vec::new();
    let outcome = loop {
        match machine.step()? {
            Step::Issue {
                cycle,
                thread,
                opcode,
                cycles,
                active_threads,
                func,
                block,
                ..
            } => {
                for k in 0..cycles as u64 {
                    events.push(TraceEvent {
                        cycle: cycle + k,
                        thread,
                        opcode,
                        active_threads,
                        func,
                        block,
                    });
                }
            }
            Step::Idle { .. } => {}
            Step::Done(outcome) => break outcome,
        }
    };
    let idle_cycles = machine.idle_cycles();
    let total_cycles = machine.cycle();
    let (final_regs, final_mem, _) = machine.into_final_state();
    Ok(Trace {
        events,
        idle_cycles,
        total_cycles,
        outcome,
        final_regs,
        final_mem,
    })
}

/// Per-thread instruction statistics, the cheap alternative to a full trace.
#[derive(Clone, Debug, PartialEq)]
pub struct PerThreadCounts {
    pub per_thread: BTreeMap<u32, ThreadCounts>,
    pub wall_cycles: u64,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThreadCounts {
    /// Issue cycles per opcode.
    pub issue_cycles: BTreeMap<Opcode, u64>,
    /// Cycles this thread spent runnable.
    pub active_cycles: u64,
}

impl ThreadCounts {
    pub fn busy_cycles(&self) -> u64 {
        self.issue_cycles.values().sum()
    }
}

/// Runs without building a trace, keeping only per-thread statistics.
pub fn run_stats_only(
    program: &Program,
    inputs: &SimInputs,
    config: &RunConfig,
) -> Result<PerThreadCounts, SimError> {
    let mut machine = Machine::new(program, inputs, config);
    let outcome = loop {
        if let Step::Done(outcome) = machine.step()? {
            break outcome;
        }
    };
    let (_, _, mut counts) = machine.into_final_state();
    counts.outcome = outcome;
    Ok(counts)
}

/// Derives the model's N terms from a trace.
pub fn stats_of(trace: &Trace) -> ExecutionStats {
    let mut stats = ExecutionStats::default();
    for e in &trace.events {
        stats.add_issue_cycles(e.opcode, e.active_threads, 1);
    }
    stats.add_idle_cycles(trace.idle_cycles);
    stats
}

/// Model evaluation over a trace, with per-block and per-function attribution.
/// The total equals `model.energy(stats_of(trace))` exactly.
pub fn trace_energy(
    model: &EnergyModel,
    trace: &Trace,
    program: &Program,
) -> Result<EnergyReport, ModelError> {
    let mut per_block: BTreeMap<String, Energy> = BTreeMap::new();
    let mut per_function: BTreeMap<String, Energy> = BTreeMap::new();
    let mut total = Energy::ZERO;
    for e in &trace.events {
        let unit = model.instruction_energy(e.opcode, e.active_threads)?;
        let f = &program.functions[e.func];
        let key = EnergyReport::block_key(&f.name, &f.blocks[e.block].label);
        *per_block.entry(key).or_insert(Energy::ZERO) += unit;
        *per_function.entry(f.name.clone()).or_insert(Energy::ZERO) += unit;
        total += unit;
    }
    let idle = model.idle_energy() * trace.idle_cycles as u128;
    total += idle;
    debug_assert_eq!(total, model.energy(&stats_of(trace))?);
    Ok(EnergyReport {
        total,
        idle,
        provenance: Provenance::Simulated,
        per_block,
        per_function,
    })
}

/// Estimates full execution statistics from per-thread counts by assuming the
/// threads overlap uniformly at one activity level:
///   t̂ = clamp(round(Σ active_k / wall), 1, t_max)
/// with every issue placed at t̂ and idle = max(0, wall − floor(Σ active / t̂)).
pub fn extrapolate_stats(counts: &PerThreadCounts, t_max: u32) -> Result<ExecutionStats, SimError> {
    let wall = counts.wall_cycles;
    let mut busy_total = 0u64;
    let mut issue_total = 0u64;
    for (tid, tc) in &counts.per_thread {
        let issues = tc.busy_cycles();
        if issues > tc.active_cycles {
            return Err(SimError::Extrapolation(format!(
                "thread {tid}: {issues} issue cycles exceed {} active cycles",
                tc.active_cycles
            )));
        }
        if tc.active_cycles > wall {
            return Err(SimError::Extrapolation(format!(
                "thread {tid}: {} active cycles exceed wall clock {wall}",
                tc.active_cycles
            )));
        }
        busy_total += tc.active_cycles;
        issue_total += issues;
    }
    if issue_total > wall {
        return Err(SimError::Extrapolation(format!(
            "{issue_total} total issue cycles exceed wall clock {wall}"
        )));
    }
    let mut stats = ExecutionStats::default();
    if wall == 0 {
        return Ok(stats);
    }
    let t_hat = ((busy_total as f64 / wall as f64).round() as u32).clamp(1, t_max);
    for tc in counts.per_thread.values() {
        for (&op, &cycles) in &tc.issue_cycles {
            stats.add_issue_cycles(op, t_hat, cycles);
        }
    }
    let idle_est = (wall as f64 - busy_total as f64 / t_hat as f64)
        .floor()
        .max(0.0) as u64;
    stats.add_idle_cycles(idle_est);
    Ok(stats)
}

/// Statistics-mode energy: extrapolated stats evaluated under the model.
pub fn extrapolated_energy(
    model: &EnergyModel,
    counts: &PerThreadCounts,
) -> Result<EnergyReport, ModelError> {
    let stats = extrapolate_stats(counts, model.t_max)
        .map_err(|e| ModelError::Validation(e.to_string()))?;
    let total = model.energy(&stats)?;
    let idle = model.idle_energy() * stats.n_idl as u128;
    Ok(EnergyReport {
        total,
        idle,
        provenance: Provenance::StatisticsExtrapolated,
        per_block: BTreeMap::new(),
        per_function: BTreeMap::new(),
    })
}

/// Export of the N_{i,t} matrix plus idle and total cycles.
pub fn stats_to_json(stats: &ExecutionStats) -> String {
    let mut matrix: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (&(op, t), &c) in &stats.n_it {
        matrix
            .entry(op.to_string())
            .or_default()
            .insert(t.to_string(), c);
    }
    let value = serde_json::json!({
        "n_it": matrix,
        "n_idl": stats.n_idl,
        "total_cycles": stats.total_cycles,
    });
    let mut s = serde_json::to_string_pretty(&value).expect("stats serialize");
    s.push('\n');
    s
}

/// Parses a `key=value` assignment such as `r0=5` or `m12=0x20`.
pub fn parse_input_assignment(s: &str) -> Result<(InputKey, u32), String> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| format!("bad input '{s}', expected key=value"))?;
    let key = crate::machine::parse_program_input_key(key.trim()).map_err(|e| e.to_string())?;
    let value = value.trim();
    let parsed = if let Some(hex) = value.strip_prefix("0x") {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(neg) = value.strip_prefix('-') {
        neg.parse::<u32>()
            .ok()
            .map(|v| (v as i64).wrapping_neg() as u32)
    } else {
        value.parse::<u32>().ok()
    };
    Ok((
        key,
        parsed.ok_or_else(|| format!("bad input value '{value}'"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::parse_program;

    fn run_text(text: &str) -> Trace {
        let p = parse_program(text).unwrap();
        run(&p, &SimInputs::default(), &RunConfig::default()).unwrap()
    }

    #[test]
    fn two_instruction_program_traces_two_events() {
        let t = run_text("main:\n  LDC r0, 5\n  HALT\n");
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.outcome, Outcome::Halted);
        assert_eq!(t.result(), 5);
        assert_eq!(t.idle_cycles, 0);
        assert_eq!(t.total_cycles, 2);
    }

    #[test]
    fn bounded_loop_executes_body_bound_times() {
        let text = "\
main:
  LDC r0, 10
  LDC r1, 1
loop:
  SUB r0, r0, r1
  @bound 10
  BRT r0, loop
  HALT
";
        let t = run_text(text);
        let subs = t.events.iter().filter(|e| e.opcode == Opcode::Sub).count();
        let brts = t.events.iter().filter(|e| e.opcode == Opcode::Brt).count();
        assert_eq!(subs, 10);
        assert_eq!(brts, 10);
        assert_eq!(t.result(), 0);
    }

    #[test]
    fn memory_round_trip_and_two_cycle_loads() {
        let text = "\
main:
  LDC r0, 7
  LDC r1, 3
  STW r0, r1
  LDW r2, r1
  HALT
";
        let p = parse_program(text).unwrap();
        let t = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        assert_eq!(t.final_regs[0][2], 7);
        assert_eq!(t.final_mem[3], 7);
        // LDW and STW each occupy two consecutive issue cycles.
        let stw_events = t.events.iter().filter(|e| e.opcode == Opcode::Stw).count();
        assert_eq!(stw_events, 2);
        let cycles: Vec<u64> = t.events.iter().map(|e| e.cycle).collect();
        let mut sorted = cycles.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(cycles, sorted, "cycles strictly increasing");
    }

    #[test]
    fn out_of_bounds_memory_is_an_error() {
        let p =
            parse_program("main:\n  LDC r0, 1\n  LDC r1, 99999\n  STW r0, r1\n  HALT\n").unwrap();
        let err = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::MemOutOfBounds { addr: 99999, .. }));
    }

    #[test]
    fn register_window_call_preserves_caller_registers() {
        let text = "\
main:
  LDC r1, 11
  LDC r0, 5
  CALL double
  ADD r2, r0, r1
  HALT
double:
  ADD r0, r0, r0
  LDC r1, 99
  RET
";
        let t = run_text(text);
        // double returns 10 in r0; caller's r1 is restored to 11.
        assert_eq!(t.final_regs[0][2], 21);
        assert_eq!(t.final_regs[0][1], 11);
    }

    #[test]
    fn ret_with_empty_stack_ends_the_thread() {
        let t = run_text("main:\n  LDC r0, 3\n  RET\n");
        assert_eq!(t.outcome, Outcome::Halted);
        assert_eq!(t.result(), 3);
    }

    #[test]
    fn fuel_exhaustion_is_an_outcome() {
        let p = parse_program("main:\nloop:\n  JMP loop\n").unwrap();
        let t = run(
            &p,
            &SimInputs::default(),
            &RunConfig {
                fuel: 100,
                ..RunConfig::default()
            },
        )
        .unwrap();
        assert_eq!(t.outcome, Outcome::FuelExhausted);
        assert_eq!(t.total_cycles, 100);
    }

    #[test]
    fn lone_receiver_deadlocks() {
        let t = run_text("main:\n  IN 0, r0\n  HALT\n");
        assert_eq!(t.outcome, Outcome::Deadlock);
    }

    /// Hand-stepped schedule of the producer/consumer rendezvous fixture.
    #[test]
    fn rendezvous_schedule_matches_hand_count() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/chan2.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let t = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        assert_eq!(t.outcome, Outcome::Halted);
        // cycle 0: FORK(T0, act 1); 1: IN(T1, act 2); 2: LDC(T0, act 1);
        // 3: OUT(T0, act 1) triggers the transfer; 4-5: idle while the datum
        // is in flight; 6: HALT(T1, act 2); 7: HALT(T0, act 1).
        assert_eq!(t.idle_cycles, 2);
        assert_eq!(t.total_cycles, 8);
        let got: Vec<(u64, u32, Opcode, u32)> = t
            .events
            .iter()
            .map(|e| (e.cycle, e.thread, e.opcode, e.active_threads))
            .collect();
        assert_eq!(
            got,
            vec![
                (0, 0, Opcode::Fork, 1),
                (1, 1, Opcode::In, 2),
                (2, 0, Opcode::Ldc, 1),
                (3, 0, Opcode::Out, 1),
                (6, 1, Opcode::Halt, 2),
                (7, 0, Opcode::Halt, 1),
            ]
        );
        // The consumer received the value.
        assert_eq!(t.final_regs[1][1], 42);

        let stats = stats_of(&t);
        assert!(stats.check_consistent());
        assert_eq!(stats.n_idl, 2);
        assert_eq!(stats.n_it[&(Opcode::In, 2)], 1);
        assert_eq!(stats.n_it[&(Opcode::Out, 1)], 1);
    }

    #[test]
    fn determinism_identical_runs() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/mt03_pipeline.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let a = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let b = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_only_matches_trace_counts() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/fib.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let trace = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let counts = run_stats_only(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let from_trace = stats_of(&trace);
        let total_issues: u64 = counts.per_thread.values().map(|tc| tc.busy_cycles()).sum();
        assert_eq!(total_issues, from_trace.n_it.values().sum::<u64>());
        assert_eq!(counts.wall_cycles, trace.total_cycles);
    }

    #[test]
    fn single_thread_extrapolation_is_exact() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/fib.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let trace = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let counts = run_stats_only(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let exact = stats_of(&trace);
        let extrapolated = extrapolate_stats(&counts, 4).unwrap();
        assert_eq!(exact, extrapolated);
    }

    #[test]
    fn two_always_active_threads_extrapolate_exactly() {
        // Idealized counts: both threads runnable for the whole run, issuing
        // half the cycles each.
        let wall = 1000;
        let mut per_thread = BTreeMap::new();
        for tid in 0..2u32 {
            per_thread.insert(
                tid,
                ThreadCounts {
                    issue_cycles: [(Opcode::Add, 500u64)].into_iter().collect(),
                    active_cycles: wall,
                },
            );
        }
        let counts = PerThreadCounts {
            per_thread,
            wall_cycles: wall,
            outcome: Outcome::Halted,
        };
        let stats = extrapolate_stats(&counts, 4).unwrap();
        assert_eq!(stats.n_idl, 0);
        assert_eq!(
            stats.n_it,
            [((Opcode::Add, 2), 1000u64)].into_iter().collect()
        );
    }

    #[test]
    fn lockstep_pair_extrapolates_to_level_two() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/mt01_lockstep2.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let trace = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let counts = run_stats_only(&p, &SimInputs::default(), &RunConfig::default()).unwrap();
        let extrapolated = extrapolate_stats(&counts, 4).unwrap();
        let exact = stats_of(&trace);
        // Everything lands on level 2; the idle estimate only sees the
        // start/teardown asymmetry.
        let non2 = extrapolated.n_it.keys().filter(|(_, t)| *t != 2).count();
        assert_eq!(non2, 0);
        assert!(
            extrapolated.n_idl <= 4,
            "idle estimate {}",
            extrapolated.n_idl
        );
        // The bulk of the exact mass is at level 2 as well.
        let mass2: u64 = exact
            .n_it
            .iter()
            .filter(|((_, t), _)| *t == 2)
            .map(|(_, &c)| c)
            .sum();
        let total: u64 = exact.n_it.values().sum();
        assert!(mass2 * 10 >= total * 9, "{mass2}/{total}");
    }
    #[test]
    fn inconsistent_per_thread_totals_are_rejected() {
        let mut per_thread = BTreeMap::new();
        per_thread.insert(
            0u32,
            ThreadCounts {
                issue_cycles: [(Opcode::Add, 50u64)].into_iter().collect(),
                active_cycles: 10, // fewer active than issued
            },
        );
        let counts = PerThreadCounts {
            per_thread,
            wall_cycles: 100,
            outcome: Outcome::Halted,
        };
        assert!(matches!(
            extrapolate_stats(&counts, 4),
            Err(SimError::Extrapolation(_))
        ));
    }

    #[test]
    fn fork_beyond_the_hardware_limit_is_an_error() {
        let mut text = String::from("main:\n");
        for _ in 0..8 {
            text.push_str("  FORK w\n");
        }
        text.push_str("  HALT\nw:\nspin:\n  JMP spin\n");
        let p = parse_program(&text).unwrap();
        let err = run(&p, &SimInputs::default(), &RunConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::ForkLimit { max: 8, .. }));
    }
}
