//! Synthetic ground-truth hardware.
//!
//! The device knows each opcode's true power, a per-opcode data-sensitivity
//! coefficient, and the true model constants. Measurement runs a kernel on
//! the simulator core and integrates instantaneous power cycle by cycle:
//!
//!   active issue:  M_t · P_op · ô · d + P_b
//!   idle cycle:    P_b
//!
//! where ô is the inter-instruction overhead charged when the issued opcode
//! differs from the previous issue, and d = 1 + δ·(2h/W − 1) scales with the
//! Hamming distance h between consecutive operand-bus words (W = 32). The
//! operand words measurement mode injects never touch architectural state, so
//! kernels behave identically under every operand regime.

use crate::machine::{isa_spec, Opcode, Program, ALL_OPCODES};
use crate::simulator::{Machine, Outcome, RunConfig, SimError, SimInputs, Step};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const WORD_BITS: u32 = 32;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("failed to read device file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed device file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("device validation: {0}")]
    Validation(String),
    #[error("unknown opcode {0}")]
    UnknownOpcode(Opcode),
    #[error("kernel halted early at cycle {cycle}")]
    HaltedEarly { cycle: u64 },
    #[error("kernel uses {threads} threads but the device has t_max {t_max}")]
    TooManyThreads { threads: u32, t_max: u32 },
    #[error("kernel failed: {0}")]
    Sim(#[from] SimError),
}

/// Operand-word stream used for the data-sensitivity term during measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperandRegime {
    /// Seeded uniform random words for profileable opcodes (the measurement
    /// rig feeding random valid input data).
    SeededRandom,
    /// One fixed word repeated for profileable opcodes (maximally constrained
    /// data, zero switching in steady state).
    RepeatWord(u32),
    /// The values the program actually computes on.
    Actual,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DeviceFileInstr {
    opcode: Opcode,
    power_mw: f64,
    data_coeff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DeviceFile {
    t_clk_ns: f64,
    p_b_mw: f64,
    overhead: f64,
    t_max: u32,
    m_t: Vec<f64>,
    seed: u64,
    instructions: Vec<DeviceFileInstr>,
}

/// The "true" hardware the profiler tries to reconstruct.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceGroundTruth {
    pub t_clk_ns: f64,
    pub p_b_mw: f64,
    /// Overhead multiplier charged on opcode changes.
    pub overhead: f64,
    pub t_max: u32,
    pub m_t: BTreeMap<u32, f64>,
    pub seed: u64,
    pub true_p: BTreeMap<Opcode, f64>,
    pub data_coeff: BTreeMap<Opcode, f64>,
}

impl DeviceGroundTruth {
    // Negated comparisons here are NaN-rejecting on purpose.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), DeviceError> {
        let fail = |msg: String| Err(DeviceError::Validation(msg));
        if !(self.t_clk_ns > 0.0) {
            return fail("t_clk_ns must be > 0".into());
        }
        if !(self.p_b_mw >= 0.0) {
            return fail("p_b_mw must be >= 0".into());
        }
        if !(self.overhead > 0.0) {
            return fail("overhead must be > 0".into());
        }
        for t in 1..=self.t_max {
            match self.m_t.get(&t) {
                None => return fail(format!("m_t gap at t={t}")),
                Some(&m) if !(m > 0.0) => return fail(format!("m_t[{t}] must be > 0")),
                _ => {}
            }
        }
        for op in ALL_OPCODES {
            let Some(&p) = self.true_p.get(&op) else {
                return fail(format!("missing true power for {op}"));
            };
            if !(p >= 0.0) {
                return fail(format!("true power for {op} must be >= 0"));
            }
            let Some(&d) = self.data_coeff.get(&op) else {
                return fail(format!("missing data coefficient for {op}"));
            };
            if !(0.0..=0.25).contains(&d) {
                return fail(format!(
                    "data coefficient for {op} must be within [0, 0.25], got {d}"
                ));
            }
        }
        Ok(())
    }

    /// Instantaneous power of one issue given the previous and current
    /// operand-bus words, at t=1 in a same-opcode stream (no overhead, no
    /// base power).
    pub fn true_power(
        &self,
        opcode: Opcode,
        prev_word: u32,
        word: u32,
    ) -> Result<f64, DeviceError> {
        let p = self
            .true_p
            .get(&opcode)
            .ok_or(DeviceError::UnknownOpcode(opcode))?;
        let delta = self.data_coeff[&opcode];
        let h = (prev_word ^ word).count_ones();
        Ok(p * (1.0 + delta * (2.0 * h as f64 / WORD_BITS as f64 - 1.0)))
    }

    /// Expected active power of `opcode` above base in a same-opcode stream
    /// with uniform random operands (the data factor averages to one).
    pub fn true_random_average_power(&self, opcode: Opcode) -> Result<f64, DeviceError> {
        self.true_p
            .get(&opcode)
            .copied()
            .ok_or(DeviceError::UnknownOpcode(opcode))
    }

    /// Cycle-weighted mean device power over `duration_cycles` of the kernel,
    /// with operands drawn from the device's seeded random stream.
    pub fn measure_average_power(
        &mut self,
        kernel: &Program,
        duration_cycles: u64,
    ) -> Result<f64, DeviceError> {
        self.measure_with_regime(kernel, duration_cycles, OperandRegime::SeededRandom)
    }

    pub fn measure_with_regime(
        &mut self,
        kernel: &Program,
        duration_cycles: u64,
        regime: OperandRegime,
    ) -> Result<f64, DeviceError> {
        let (power_cycles, elapsed) = self.measure_integral(kernel, duration_cycles, regime)?;
        Ok(power_cycles / elapsed as f64)
    }

    /// Raw measurement: total mW·cycles and the cycles actually covered
    /// (may fall one short of the budget when it cuts a multi-cycle issue).
    pub fn measure_integral(
        &mut self,
        kernel: &Program,
        duration_cycles: u64,
        regime: OperandRegime,
    ) -> Result<(f64, u64), DeviceError> {
        let config = RunConfig {
            fuel: duration_cycles,
            keep_idling: true,
            ..RunConfig::default()
        };
        let mut machine = Machine::new(kernel, &SimInputs::default(), &config);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut prev_word = 0u32;
        let mut prev_op: Option<Opcode> = None;
        let mut power_cycles = 0.0f64;
        loop {
            match machine.step()? {
                Step::Issue {
                    opcode,
                    cycles,
                    active_threads,
                    operand_word,
                    ..
                } => {
                    if active_threads > self.t_max {
                        return Err(DeviceError::TooManyThreads {
                            threads: active_threads,
                            t_max: self.t_max,
                        });
                    }
                    let word = if isa_spec(opcode).profileable() {
                        match regime {
                            OperandRegime::SeededRandom => rng.next_u32(),
                            OperandRegime::RepeatWord(w) => w,
                            OperandRegime::Actual => operand_word,
                        }
                    } else {
                        operand_word
                    };
                    let h = (prev_word ^ word).count_ones();
                    let delta = self.data_coeff[&opcode];
                    let d = 1.0 + delta * (2.0 * h as f64 / WORD_BITS as f64 - 1.0);
                    let o_hat = if prev_op == Some(opcode) {
                        1.0
                    } else {
                        self.overhead
                    };
                    let m = self.m_t[&active_threads];
                    let p = m * self.true_p[&opcode] * o_hat * d + self.p_b_mw;
                    power_cycles += p * cycles as f64;
                    prev_word = word;
                    prev_op = Some(opcode);
                }
                Step::Idle { .. } => {
                    power_cycles += self.p_b_mw;
                }
                Step::Done(Outcome::Halted) => {
                    return Err(DeviceError::HaltedEarly {
                        cycle: machine.cycle(),
                    });
                }
                Step::Done(_) => break,
            }
        }
        let elapsed = machine.cycle();
        if elapsed == 0 {
            return Err(DeviceError::Validation("zero-length measurement".into()));
        }
        Ok((power_cycles, elapsed))
    }

    /// Synthesizes a noiseless device from a fitted model; the fit-idempotence
    /// check reconstructs the model from this device.
    pub fn from_model(model: &crate::model::EnergyModel, seed: u64) -> DeviceGroundTruth {
        let mut true_p = BTreeMap::new();
        let mut data_coeff = BTreeMap::new();
        for op in ALL_OPCODES {
            let p = model.p_i.get(&op).map(|e| e.power_mw).unwrap_or(0.0);
            true_p.insert(op, p);
            data_coeff.insert(op, 0.0);
        }
        DeviceGroundTruth {
            t_clk_ns: model.t_clk_ns,
            p_b_mw: model.p_b_mw,
            overhead: model.overhead,
            t_max: model.t_max,
            m_t: model.m_t.clone(),
            seed,
            true_p,
            data_coeff,
        }
    }

    pub fn with_zero_data_coeffs(mut self) -> DeviceGroundTruth {
        for d in self.data_coeff.values_mut() {
            *d = 0.0;
        }
        self
    }
}

/// The stock synthetic device: powers rise with operand count and encoding
/// width within a class, data sensitivity spans the 5–25% envelope on the
/// profileable opcodes, and more active threads dissipate more per
/// instruction.
pub fn default_device(seed: u64) -> DeviceGroundTruth {
    let powers = [
        (Opcode::Ldc, 34.0, 0.08),
        (Opcode::Add, 38.0, 0.18),
        (Opcode::Sub, 37.5, 0.17),
        (Opcode::Mul, 47.0, 0.25),
        (Opcode::And, 36.0, 0.12),
        (Opcode::Xor, 36.5, 0.13),
        (Opcode::Shl, 37.0, 0.15),
        (Opcode::Ldw, 48.0, 0.22),
        (Opcode::Stw, 46.0, 0.20),
        (Opcode::Brt, 30.0, 0.0),
        (Opcode::Jmp, 27.0, 0.0),
        (Opcode::Call, 33.0, 0.0),
        (Opcode::Ret, 29.0, 0.0),
        (Opcode::Fork, 40.0, 0.0),
        (Opcode::Out, 35.0, 0.0),
        (Opcode::In, 34.5, 0.0),
        (Opcode::Halt, 20.0, 0.0),
    ];
    let device = DeviceGroundTruth {
        t_clk_ns: 2.5,
        p_b_mw: 45.0,
        overhead: 1.25,
        t_max: 4,
        m_t: [(1, 1.0), (2, 1.12), (3, 1.22), (4, 1.3)]
            .into_iter()
            .collect(),
        seed,
        true_p: powers.iter().map(|&(op, p, _)| (op, p)).collect(),
        data_coeff: powers.iter().map(|&(op, _, d)| (op, d)).collect(),
    };
    device.validate().expect("stock device is valid");
    device
}

pub fn device_from_json(text: &str) -> Result<DeviceGroundTruth, DeviceError> {
    let file: DeviceFile = serde_json::from_str(text)?;
    let mut m_t = BTreeMap::new();
    for (i, m) in file.m_t.iter().enumerate() {
        m_t.insert(i as u32 + 1, *m);
    }
    let mut true_p = BTreeMap::new();
    let mut data_coeff = BTreeMap::new();
    for instr in file.instructions {
        true_p.insert(instr.opcode, instr.power_mw);
        data_coeff.insert(instr.opcode, instr.data_coeff);
    }
    let device = DeviceGroundTruth {
        t_clk_ns: file.t_clk_ns,
        p_b_mw: file.p_b_mw,
        overhead: file.overhead,
        t_max: file.t_max,
        m_t,
        seed: file.seed,
        true_p,
        data_coeff,
    };
    device.validate()?;
    Ok(device)
}

pub fn device_to_json(device: &DeviceGroundTruth) -> String {
    let file = DeviceFile {
        t_clk_ns: device.t_clk_ns,
        p_b_mw: device.p_b_mw,
        overhead: device.overhead,
        t_max: device.t_max,
        m_t: (1..=device.t_max).map(|t| device.m_t[&t]).collect(),
        seed: device.seed,
        instructions: device
            .true_p
            .iter()
            .map(|(&opcode, &power_mw)| DeviceFileInstr {
                opcode,
                power_mw,
                data_coeff: device.data_coeff[&opcode],
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("device serializes");
    s.push('\n');
    s
}

pub fn load_device(path: impl AsRef<Path>) -> Result<DeviceGroundTruth, DeviceError> {
    device_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_device(device: &DeviceGroundTruth, path: impl AsRef<Path>) -> Result<(), DeviceError> {
    std::fs::write(path, device_to_json(device))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::parse_program;
    use rand::Rng;

    #[test]
    fn data_factor_endpoints() {
        let dev = default_device(1);
        let p = dev.true_p[&Opcode::Add];
        let delta = dev.data_coeff[&Opcode::Add];
        // Identical consecutive words: (1 − δ)·p.
        let lo = dev
            .true_power(Opcode::Add, 0xDEAD_BEEF, 0xDEAD_BEEF)
            .unwrap();
        assert!((lo - p * (1.0 - delta)).abs() < 1e-12);
        // Bitwise-inverse words: (1 + δ)·p.
        let hi = dev
            .true_power(Opcode::Add, 0xDEAD_BEEF, !0xDEAD_BEEF)
            .unwrap();
        assert!((hi - p * (1.0 + delta)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_mean_recovers_true_power() {
        let dev = default_device(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let prev: u32 = rng.gen();
            let cur: u32 = rng.gen();
            sum += dev.true_power(Opcode::Mul, prev, cur).unwrap();
        }
        let mean = sum / n as f64;
        let truth = dev.true_p[&Opcode::Mul];
        assert!(
            (mean - truth).abs() / truth < 0.005,
            "mean {mean} vs true {truth}"
        );
    }

    #[test]
    fn noiseless_alternating_kernel_measures_exactly() {
        let mut dev = default_device(3).with_zero_data_coeffs();
        let kernel = parse_program("main:\nk:\n  LDC r0, 1\n  JMP k\n").unwrap();
        let n = 4096;
        let measured = dev.measure_average_power(&kernel, n).unwrap();
        // Steady alternation LDC/JMP: every issue is an opcode change.
        let expected =
            dev.p_b_mw + dev.overhead * (dev.true_p[&Opcode::Ldc] + dev.true_p[&Opcode::Jmp]) / 2.0;
        assert!(
            (measured - expected).abs() < 1e-9,
            "{measured} vs {expected}"
        );
    }

    #[test]
    fn measurement_is_deterministic_under_a_seed() {
        let kernel = parse_program("main:\nk:\n  ADD r1, r2, r3\n  JMP k\n").unwrap();
        let mut d1 = default_device(42);
        let mut d2 = default_device(42);
        let a = d1.measure_average_power(&kernel, 10_000).unwrap();
        let b = d2.measure_average_power(&kernel, 10_000).unwrap();
        assert_eq!(a, b);
        let mut d3 = default_device(43);
        let c = d3.measure_average_power(&kernel, 10_000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_operands_dissipate_more_than_repeated_operands() {
        let kernel = parse_program("main:\nk:\n  ADD r1, r2, r3\n  JMP k\n").unwrap();
        let mut dev = default_device(42);
        let random = dev
            .measure_with_regime(&kernel, 20_000, OperandRegime::SeededRandom)
            .unwrap();
        let constrained = dev
            .measure_with_regime(&kernel, 20_000, OperandRegime::RepeatWord(0x5555_5555))
            .unwrap();
        assert!(random > constrained, "{random} vs {constrained}");
        // And the spread stays inside the ±25% data envelope around the
        // noise-free measurement.
        let noiseless = dev
            .clone()
            .with_zero_data_coeffs()
            .measure_with_regime(&kernel, 20_000, OperandRegime::SeededRandom)
            .unwrap();
        assert!(random <= noiseless * 1.25 && random >= noiseless * 0.75);
        assert!(constrained <= noiseless * 1.25 && constrained >= noiseless * 0.75);
    }

    #[test]
    fn halting_kernel_is_rejected() {
        let kernel = parse_program("main:\n  LDC r0, 1\n  HALT\n").unwrap();
        let mut dev = default_device(1);
        assert!(matches!(
            dev.measure_average_power(&kernel, 1000),
            Err(DeviceError::HaltedEarly { .. })
        ));
    }

    #[test]
    fn blocked_kernel_idles_at_base_power() {
        let kernel = parse_program("main:\n  IN 0, r0\n  HALT\n").unwrap();
        let mut dev = default_device(1);
        let n = 100_000;
        let measured = dev.measure_average_power(&kernel, n).unwrap();
        // One IN issue then pure idle.
        assert!(
            (measured - dev.p_b_mw).abs() / dev.p_b_mw < 1e-3,
            "{measured}"
        );
    }

    #[test]
    fn json_round_trip() {
        let dev = default_device(9);
        let json = device_to_json(&dev);
        let back = device_from_json(&json).unwrap();
        assert_eq!(back, dev);
        assert_eq!(device_to_json(&back), json);
    }

    #[test]
    fn out_of_envelope_data_coeff_is_rejected() {
        let mut dev = default_device(1);
        dev.data_coeff.insert(Opcode::Add, 0.4);
        assert!(dev.validate().is_err());
    }
}
