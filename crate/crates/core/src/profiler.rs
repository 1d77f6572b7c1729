//! Model reconstruction from device measurements.
//!
//! Profiling kernels are unrolled single-opcode (or two-opcode alternating)
//! loops run by one or more lockstep threads. Once every thread is inside its
//! loop the machine's power sequence is periodic, so measuring a run at two
//! cycle budgets that differ by a whole number of periods isolates the exact
//! per-period power sum; differencing two unroll factors then cancels loop
//! glue and inter-instruction overhead, giving the per-opcode power directly.
//! The aggregated overhead O is identified the same way from alternating
//! two-opcode kernels (every issue changes opcode there) and fitted by least
//! squares across pairs; M_t comes from n-thread kernels of a reference
//! opcode with M_1 ≔ 1.

use crate::device::{DeviceError, DeviceGroundTruth, OperandRegime};
use crate::machine::{
    isa_spec, AluOp, BasicBlock, Function, InstrClass, InstrKind, Instruction, InstructionSpec,
    Opcode, Program, ProgramMeta, Reg, Terminator, ALL_OPCODES, MAX_THREADS,
};
use crate::model::{EnergyModel, PowerEntry, PowerSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{0} is not profileable (class {1:?}); only arith and mem opcodes can be looped")]
    Unprofileable(Opcode, InstrClass),
    #[error("kernel needs 1..={max} threads, got {n}")]
    BadThreadCount { n: u32, max: u32 },
    #[error("singular fit: no usable signal in the profiling kernels")]
    SingularFit,
    #[error("no profiled opcode available for feature estimation")]
    NoProfiledOpcodes,
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Clone, Copy, Debug)]
pub struct ProfileConfig {
    /// Unroll factors for the differential measurement.
    pub unroll_lo: u32,
    pub unroll_hi: u32,
    /// Whole periods covered by the short and long measurement windows.
    pub periods_lo: u64,
    pub periods_hi: u64,
    /// Cycles granted for startup before the periodic region is assumed.
    pub warmup_cycles: u64,
    /// Idle cycles measured for the base power.
    pub base_cycles: u64,
    pub reference_opcode: Opcode,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            unroll_lo: 16,
            unroll_hi: 48,
            periods_lo: 64,
            periods_hi: 192,
            warmup_cycles: 2048,
            base_cycles: 1 << 17,
            reference_opcode: Opcode::Add,
        }
    }
}

fn check_profileable(op: Opcode) -> Result<(), FitError> {
    let spec = isa_spec(op);
    if !spec.profileable() {
        return Err(FitError::Unprofileable(op, spec.class));
    }
    Ok(())
}

/// Kernel body instructions for one opcode issue, plus the registers its
/// setup needs.
fn kernel_op_instr(op: Opcode) -> InstrKind {
    match op {
        Opcode::Ldc => InstrKind::Ldc {
            dst: Reg(3),
            imm: 0x5A5A_5A5A,
        },
        Opcode::Add => InstrKind::Alu {
            op: AluOp::Add,
            dst: Reg(3),
            a: Reg(1),
            b: Reg(2),
        },
        Opcode::Sub => InstrKind::Alu {
            op: AluOp::Sub,
            dst: Reg(3),
            a: Reg(1),
            b: Reg(2),
        },
        Opcode::Mul => InstrKind::Alu {
            op: AluOp::Mul,
            dst: Reg(3),
            a: Reg(1),
            b: Reg(2),
        },
        Opcode::And => InstrKind::Alu {
            op: AluOp::And,
            dst: Reg(3),
            a: Reg(1),
            b: Reg(2),
        },
        Opcode::Xor => InstrKind::Alu {
            op: AluOp::Xor,
            dst: Reg(3),
            a: Reg(1),
            b: Reg(2),
        },
        Opcode::Shl => InstrKind::Alu {
            op: AluOp::Shl,
            dst: Reg(3),
            a: Reg(1),
            b: Reg(4),
        },
        Opcode::Ldw => InstrKind::Ldw {
            dst: Reg(3),
            addr: Reg(0),
        },
        Opcode::Stw => InstrKind::Stw {
            src: Reg(1),
            addr: Reg(0),
        },
        _ => unreachable!("checked profileable"),
    }
}

fn kernel_setup(rng: &mut ChaCha8Rng) -> Vec<Instruction> {
    vec![
        Instruction::new(InstrKind::Ldc {
            dst: Reg(0),
            imm: 0,
        }),
        Instruction::new(InstrKind::Ldc {
            dst: Reg(1),
            imm: rng.gen(),
        }),
        Instruction::new(InstrKind::Ldc {
            dst: Reg(2),
            imm: rng.gen(),
        }),
        Instruction::new(InstrKind::Ldc {
            dst: Reg(4),
            imm: rng.gen_range(1..31),
        }),
    ]
}

fn worker_function(name: &str, body: &[InstrKind], seed: u64) -> Function {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut setup = kernel_setup(&mut rng);
    setup.push(Instruction::new(InstrKind::Jmp {
        target: "loop".into(),
    }));
    let mut loop_instrs: Vec<Instruction> = body.iter().cloned().map(Instruction::new).collect();
    loop_instrs.push(Instruction::new(InstrKind::Jmp {
        target: "loop".into(),
    }));
    Function {
        name: name.to_string(),
        params: Vec::new(),
        blocks: vec![
            BasicBlock {
                label: name.to_string(),
                instructions: setup,
                terminator: Terminator::Jump,
            },
            BasicBlock {
                label: "loop".to_string(),
                instructions: loop_instrs,
                terminator: Terminator::Jump,
            },
        ],
        label_aliases: BTreeMap::new(),
    }
}

fn kernel_program(body: Vec<InstrKind>, n_threads: u32, seed: u64) -> Program {
    if n_threads == 1 {
        let main = worker_function("main", &body, seed);
        return Program {
            functions: vec![main],
            entry: "main".into(),
            meta: ProgramMeta::default(),
        };
    }
    let mut main_instrs = Vec::new();
    for _ in 1..n_threads {
        main_instrs.push(Instruction::new(InstrKind::Fork {
            target: "worker".into(),
        }));
    }
    main_instrs.push(Instruction::new(InstrKind::Call {
        target: "worker".into(),
    }));
    main_instrs.push(Instruction::new(InstrKind::Halt));
    let main = Function {
        name: "main".into(),
        params: Vec::new(),
        blocks: vec![BasicBlock {
            label: "main".into(),
            instructions: main_instrs,
            terminator: Terminator::Halt,
        }],
        label_aliases: BTreeMap::new(),
    };
    let worker = worker_function("worker", &body, seed);
    Program {
        functions: vec![main, worker],
        entry: "main".into(),
        meta: ProgramMeta::default(),
    }
}

/// An `n_threads`-way lockstep kernel looping `unroll` copies of one opcode.
pub fn generate_kernel_with_unroll(
    opcode: Opcode,
    n_threads: u32,
    unroll: u32,
) -> Result<Program, FitError> {
    check_profileable(opcode)?;
    if n_threads < 1 || n_threads as usize > MAX_THREADS {
        return Err(FitError::BadThreadCount {
            n: n_threads,
            max: MAX_THREADS as u32,
        });
    }
    let body: Vec<InstrKind> = (0..unroll).map(|_| kernel_op_instr(opcode)).collect();
    Ok(kernel_program(body, n_threads, 0x6B65_726E))
}

/// The stock profiling kernel shape (unroll 32).
pub fn generate_kernel(opcode: Opcode, n_threads: u32) -> Result<Program, FitError> {
    generate_kernel_with_unroll(opcode, n_threads, 32)
}

/// A kernel alternating two opcodes, `pairs` times per loop iteration.
pub fn generate_pair_kernel(
    a: Opcode,
    b: Opcode,
    n_threads: u32,
    pairs: u32,
) -> Result<Program, FitError> {
    check_profileable(a)?;
    check_profileable(b)?;
    if n_threads < 1 || n_threads as usize > MAX_THREADS {
        return Err(FitError::BadThreadCount {
            n: n_threads,
            max: MAX_THREADS as u32,
        });
    }
    let mut body = Vec::new();
    for _ in 0..pairs {
        body.push(kernel_op_instr(a));
        body.push(kernel_op_instr(b));
    }
    Ok(kernel_program(body, n_threads, 0x7061_6972))
}

/// Exact steady-state power sum of one loop period: measures the kernel at
/// two cycle budgets differing by whole periods and differences them. The
/// result is in mW·cycles per period (per thread set).
fn measure_period_sum(
    dev: &mut DeviceGroundTruth,
    kernel: &Program,
    period_cycles: u64,
    config: &ProfileConfig,
    regime: OperandRegime,
) -> Result<f64, FitError> {
    let base = config.warmup_cycles;
    let lo = base + config.periods_lo * period_cycles;
    let hi = base + config.periods_hi * period_cycles;
    let (sum_lo, elapsed_lo) = dev.measure_integral(kernel, lo, regime)?;
    let (sum_hi, elapsed_hi) = dev.measure_integral(kernel, hi, regime)?;
    debug_assert_eq!(
        (elapsed_hi - elapsed_lo) % period_cycles,
        0,
        "measurement windows differ by whole periods"
    );
    Ok((sum_hi - sum_lo) / (config.periods_hi - config.periods_lo) as f64)
}

/// Per-period active power sum (above base) of a single-opcode kernel.
fn homogeneous_active_sum(
    dev: &mut DeviceGroundTruth,
    opcode: Opcode,
    n_threads: u32,
    unroll: u32,
    p_b: f64,
    config: &ProfileConfig,
    regime: OperandRegime,
) -> Result<f64, FitError> {
    let kernel = generate_kernel_with_unroll(opcode, n_threads, unroll)?;
    let cycles_per_iter = unroll as u64 * isa_spec(opcode).issue_cycles as u64 + 1;
    let period = n_threads as u64 * cycles_per_iter;
    let sum = measure_period_sum(dev, &kernel, period, config, regime)?;
    Ok(sum - period as f64 * p_b)
}

/// Per-instruction power from two unroll factors: glue and overhead cancel in
/// the difference, leaving issue_cycles·n_threads·M·P per unroll step.
fn differential_power(
    dev: &mut DeviceGroundTruth,
    opcode: Opcode,
    n_threads: u32,
    p_b: f64,
    config: &ProfileConfig,
    regime: OperandRegime,
) -> Result<f64, FitError> {
    let a = homogeneous_active_sum(
        dev,
        opcode,
        n_threads,
        config.unroll_lo,
        p_b,
        config,
        regime,
    )?;
    let b = homogeneous_active_sum(
        dev,
        opcode,
        n_threads,
        config.unroll_hi,
        p_b,
        config,
        regime,
    )?;
    let du = (config.unroll_hi - config.unroll_lo) as f64;
    let c = isa_spec(opcode).issue_cycles as f64;
    Ok((b - a) / (du * c * n_threads as f64))
}

/// Single-opcode power estimate under an explicit operand regime, using the
/// same differential-unroll extraction as the fit. Constrained regimes land
/// below the random-operand figure on data-sensitive opcodes.
pub fn estimate_power_with_regime(
    dev: &mut DeviceGroundTruth,
    opcode: Opcode,
    config: &ProfileConfig,
    regime: OperandRegime,
) -> Result<f64, FitError> {
    let p_b = measure_base_power(dev, config)?;
    differential_power(dev, opcode, 1, p_b, config, regime)
}

/// Base idle power from an all-threads-blocked kernel.
pub fn measure_base_power(
    dev: &mut DeviceGroundTruth,
    config: &ProfileConfig,
) -> Result<f64, FitError> {
    let blocked = kernel_program(vec![InstrKind::In { ch: 0, dst: Reg(0) }], 1, 0);
    // The body is unreachable glue; the IN blocks forever and the device
    // idles at base power.
    Ok(dev.measure_average_power(&blocked, config.base_cycles)?)
}

/// Pairs used for the overhead least-squares fit.
fn overhead_pairs(profileable: &[Opcode]) -> Vec<(Opcode, Opcode)> {
    let mut pairs = Vec::new();
    for i in 0..profileable.len() {
        let j = (i + 1) % profileable.len();
        if i != j {
            pairs.push((profileable[i], profileable[j]));
        }
    }
    pairs
}

/// Reconstructs an energy model from measurements of the device.
pub fn fit_model(
    dev: &mut DeviceGroundTruth,
    config: &ProfileConfig,
) -> Result<EnergyModel, FitError> {
    let profileable: Vec<Opcode> = ALL_OPCODES
        .into_iter()
        .filter(|&op| isa_spec(op).profileable())
        .collect();
    assert!(!profileable.is_empty());

    let p_b = measure_base_power(dev, config)?;

    // Per-instruction powers with M_1 := 1.
    let mut powers: BTreeMap<Opcode, f64> = BTreeMap::new();
    for &op in &profileable {
        let p = differential_power(dev, op, 1, p_b, config, OperandRegime::SeededRandom)?;
        powers.insert(op, p);
    }

    // Aggregated overhead: alternating kernels where every issue changes
    // opcode, so the whole active sum carries the factor O. Least squares of
    // y_ab = O·z_ab with z_ab = c_a·P_a + c_b·P_b.
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in overhead_pairs(&profileable) {
        let (ca, cb) = (
            isa_spec(a).issue_cycles as f64,
            isa_spec(b).issue_cycles as f64,
        );
        let pair_lo = generate_pair_kernel(a, b, 1, config.unroll_lo)?;
        let pair_hi = generate_pair_kernel(a, b, 1, config.unroll_hi)?;
        let period_lo = (config.unroll_lo as u64) * (ca + cb) as u64 + 1;
        let period_hi = (config.unroll_hi as u64) * (ca + cb) as u64 + 1;
        let s_lo = measure_period_sum(
            dev,
            &pair_lo,
            period_lo,
            config,
            OperandRegime::SeededRandom,
        )? - period_lo as f64 * p_b;
        let s_hi = measure_period_sum(
            dev,
            &pair_hi,
            period_hi,
            config,
            OperandRegime::SeededRandom,
        )? - period_hi as f64 * p_b;
        let dv = (config.unroll_hi - config.unroll_lo) as f64;
        let y = (s_hi - s_lo) / dv;
        let z = ca * powers[&a] + cb * powers[&b];
        num += y * z;
        den += z * z;
    }
    if den == 0.0 {
        return Err(FitError::SingularFit);
    }
    let overhead = num / den;

    // Parallelism scaling from n-thread kernels of the reference opcode.
    let t_max = dev.t_max;
    let p_ref = powers[&config.reference_opcode];
    if p_ref == 0.0 {
        return Err(FitError::SingularFit);
    }
    let mut m_t: BTreeMap<u32, f64> = BTreeMap::new();
    m_t.insert(1, 1.0);
    for t in 2..=t_max {
        let p_t = differential_power(
            dev,
            config.reference_opcode,
            t,
            p_b,
            config,
            OperandRegime::SeededRandom,
        )?;
        m_t.insert(t, p_t / p_ref);
    }

    // Feature-based estimates for everything that cannot be looped.
    let mut p_i: BTreeMap<Opcode, PowerEntry> = powers
        .iter()
        .map(|(&op, &p)| {
            (
                op,
                PowerEntry {
                    power_mw: p,
                    source: PowerSource::Profiled,
                },
            )
        })
        .collect();
    let mut isa_meta = BTreeMap::new();
    for op in ALL_OPCODES {
        isa_meta.insert(op, isa_spec(op).clone());
    }
    let profiled_model = EnergyModel {
        t_clk_ns: dev.t_clk_ns,
        p_b_mw: p_b,
        overhead,
        t_max,
        m_t,
        p_i: p_i.clone(),
        isa_meta: isa_meta.clone(),
    };
    for op in ALL_OPCODES {
        if let std::collections::btree_map::Entry::Vacant(e) = p_i.entry(op) {
            let (power_mw, _) = estimate_unprofiled(&profiled_model, isa_spec(op))?;
            e.insert(PowerEntry {
                power_mw,
                source: PowerSource::Estimated,
            });
        }
    }

    let model = EnergyModel {
        p_i,
        ..profiled_model
    };
    model
        .validate()
        .map_err(|e| DeviceError::Validation(e.to_string()))?;
    Ok(model)
}

/// Power estimate for an instruction that cannot be profiled directly: the
/// profiled opcode with the lexicographically nearest feature vector
/// (class, mem_access, encoding_bits, operand count), ties broken by opcode
/// name. Returns the power and the matched opcode.
pub fn estimate_unprofiled(
    model: &EnergyModel,
    spec: &InstructionSpec,
) -> Result<(f64, Opcode), FitError> {
    let best = model
        .p_i
        .iter()
        .filter(|(_, e)| e.source == PowerSource::Profiled)
        .map(|(&op, e)| {
            let cand = &model.isa_meta[&op];
            let key = (
                (cand.class != spec.class) as u8,
                (cand.mem_access != spec.mem_access) as u8,
                (cand.encoding_bits != spec.encoding_bits) as u8,
                (cand.operand_count as i16 - spec.operand_count as i16).unsigned_abs(),
                op.name(),
            );
            (key, op, e.power_mw)
        })
        .min_by(|a, b| a.0.cmp(&b.0));
    match best {
        Some((_, op, p)) => Ok((p, op)),
        None => Err(FitError::NoProfiledOpcodes),
    }
}

/// Pairwise interleaving power matrix, symmetric by construction: entry
/// (a, b) is the measured average power of a thread set alternating a and b.
#[derive(Clone, Debug)]
pub struct Heatmap {
    pub opcodes: Vec<Opcode>,
    /// Row-major, `matrix[i][j]` for (opcodes[i], opcodes[j]), in mW.
    pub matrix: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("opcode");
        for op in &self.opcodes {
            out.push(',');
            out.push_str(op.name());
        }
        out.push('\n');
        for (i, op) in self.opcodes.iter().enumerate() {
            out.push_str(op.name());
            for v in &self.matrix[i] {
                out.push(',');
                out.push_str(&format!("{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn pairwise_heatmap(
    dev: &mut DeviceGroundTruth,
    opcodes: &[Opcode],
    n_threads: u32,
    duration_cycles: u64,
) -> Result<Heatmap, FitError> {
    for &op in opcodes {
        check_profileable(op)?;
    }
    let n = opcodes.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let kernel = if i == j {
                generate_kernel_with_unroll(opcodes[i], n_threads, 32)?
            } else {
                generate_pair_kernel(opcodes[i], opcodes[j], n_threads, 16)?
            };
            let power = dev.measure_average_power(&kernel, duration_cycles)?;
            matrix[i][j] = power;
            matrix[j][i] = power;
        }
    }
    Ok(Heatmap {
        opcodes: opcodes.to_vec(),
        matrix,
    })
}

/// The profileable subset of the ISA, in canonical order.
pub fn profileable_opcodes() -> Vec<Opcode> {
    ALL_OPCODES
        .into_iter()
        .filter(|&op| isa_spec(op).profileable())
        .collect()
}
