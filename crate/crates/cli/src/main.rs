//! wattlens: energy transparency for EIR programs at the desk.
//!
//! Subcommands mirror the library workflows: simulate (trace or statistics
//! mode), profile a device into a model, bound energy statically at machine
//! or source level, extract closed-form cost functions, and derive energy
//! distributions. Output is JSON by default (`--format table` for humans)
//! and deterministic byte-for-byte given the same inputs and seeds.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wattlens_core::device::load_device;
use wattlens_core::energy::{Energy, EnergyReport};
use wattlens_core::hir::{self, SizeBindings};
use wattlens_core::machine::{build_cfg, parse_program, validate_for_analysis, Program};
use wattlens_core::model::{load_model, save_model, EnergyModel};
use wattlens_core::parametric;
use wattlens_core::probabilistic::{
    self, distribution_from_json, histogram_csv, EnergyDistribution,
};
use wattlens_core::profiler::{self, ProfileConfig};
use wattlens_core::simulator::{
    self, extrapolate_stats, parse_input_assignment, run, run_stats_only, stats_to_json,
    trace_energy, RunConfig, SimInputs,
};
use wattlens_core::static_analysis::{bcec, static_profile, wcec, EnergyBound, StaticProfile};

const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Parser)]
#[command(
    name = "wattlens",
    version,
    about = "Energy transparency toolkit for the EIR ISA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct ModelArg {
    /// Energy model file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a program and report measured energy.
    Sim {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        /// Initial register/memory values, e.g. `--in r0=5 --in m3=7`.
        #[arg(long = "in", value_name = "KEY=VALUE")]
        inputs: Vec<String>,
        /// Write the instruction trace as JSON Lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Statistics mode: skip the trace and extrapolate the model terms.
        #[arg(long)]
        stats_only: bool,
        /// Cycle budget.
        #[arg(long, default_value_t = simulator::DEFAULT_FUEL)]
        fuel: u64,
        /// Data memory size in words (default: the program's declaration).
        #[arg(long)]
        mem: Option<usize>,
    },
    /// Fit an energy model against a device.
    Profile {
        /// Device description file.
        #[arg(long)]
        device: PathBuf,
        /// Where to write the fitted model.
        #[arg(long)]
        out: PathBuf,
        /// Also write the pairwise interleaving heat map as CSV.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Worst-case energy bound.
    Wcec {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1)]
        threads: u32,
        /// Include the static energy profile in the report.
        #[arg(long)]
        profile: bool,
    },
    /// Best-case energy bound.
    Bcec {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1)]
        threads: u32,
    },
    /// Distribution of worst-case energy over blocks.
    StaticProfile {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Source-level worst-case bound of a structured program.
    HirWcec {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        /// Size parameter bindings, e.g. `--size n=8`.
        #[arg(long = "size", value_name = "NAME=VALUE")]
        sizes: Vec<String>,
        /// Also run the machine-level bound on the lowered code and report
        /// the deviation.
        #[arg(long)]
        compare_isa: bool,
    },
    /// Closed-form cost functions over size parameters.
    Param {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        /// Size bindings used only to annotate lowered loop bounds.
        #[arg(long = "size", value_name = "NAME=VALUE")]
        sizes: Vec<String>,
    },
    /// Energy distribution from an input distribution.
    Dist {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        /// Input distribution file.
        #[arg(long)]
        inputs: PathBuf,
        /// Monte-Carlo sample count (default: exact enumeration).
        #[arg(long)]
        mc: Option<usize>,
        /// Sampler seed (default: WATTLENS_SEED or a fixed constant).
        #[arg(long)]
        seed: Option<u64>,
        /// Write the pmf as a histogram CSV.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Machine-level vs source-level bound comparison.
    CompareLevels {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "size", value_name = "NAME=VALUE")]
        sizes: Vec<String>,
    },
    /// End-to-end transparency report for a program.
    Report {
        program: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "in", value_name = "KEY=VALUE")]
        inputs: Vec<String>,
        #[arg(long = "size", value_name = "NAME=VALUE")]
        sizes: Vec<String>,
        /// Input distribution for the probabilistic summary.
        #[arg(long)]
        dist: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wattlens: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_sim_inputs(pairs: &[String]) -> Result<SimInputs> {
    let mut inputs = SimInputs::default();
    for raw in pairs {
        let (key, value) = parse_input_assignment(raw).map_err(|e| anyhow!(e))?;
        inputs.set(key, value);
    }
    Ok(inputs)
}

fn parse_sizes(pairs: &[String]) -> Result<SizeBindings> {
    let mut out = SizeBindings::new();
    for raw in pairs {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| anyhow!("bad size '{raw}', expected name=value"))?;
        let v: u64 = v
            .trim()
            .parse()
            .with_context(|| format!("bad size value in '{raw}'"))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn load_program(path: &Path) -> Result<Program> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_program(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn load_hir_and_compile(
    path: &Path,
    sizes: &SizeBindings,
) -> Result<(hir::HirProgram, Program, hir::MappingTable)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let hir_prog = hir::parse_hir(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let (program, table) = hir::compile(&hir_prog, sizes)?;
    Ok((hir_prog, program, table))
}

fn default_seed() -> u64 {
    std::env::var("WATTLENS_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

fn energy_json(e: Energy) -> serde_json::Value {
    serde_json::json!({ "fj": e.fj() as u64, "pj": e.pj_string() })
}

fn report_json(report: &EnergyReport) -> serde_json::Value {
    serde_json::json!({
        "total": energy_json(report.total),
        "idle": energy_json(report.idle),
        "provenance": report.provenance,
        "per_function": report.per_function.iter()
            .map(|(k, v)| (k.clone(), energy_json(*v))).collect::<BTreeMap<_, _>>(),
        "per_block": report.per_block.iter()
            .map(|(k, v)| (k.clone(), energy_json(*v))).collect::<BTreeMap<_, _>>(),
    })
}

fn bound_json(bound: &EnergyBound) -> serde_json::Value {
    serde_json::json!({
        "kind": bound.kind,
        "value": energy_json(bound.value),
        "assumed_threads": bound.assumed_threads,
        "idle_energy_excluded": bound.idle_energy_excluded,
        "block_counts": bound.block_counts.iter()
            .map(|(k, v)| (k.clone(), *v as u64)).collect::<BTreeMap<_, _>>(),
    })
}

fn profile_json(profile: &StaticProfile) -> serde_json::Value {
    serde_json::json!({
        "total": energy_json(profile.total),
        "entries": profile.entries.iter().map(|(k, (e, share))| {
            (k.clone(), serde_json::json!({ "energy": energy_json(*e), "share": share }))
        }).collect::<BTreeMap<_, _>>(),
    })
}

fn dist_json(d: &EnergyDistribution, mode: &str) -> serde_json::Value {
    serde_json::json!({
        "mode": mode,
        "samples": d.samples,
        "mean_pj": d.mean_pj,
        "variance_pj2": d.variance_pj2,
        "min": energy_json(d.min),
        "max": energy_json(d.max),
        "quantiles": d.quantiles.iter()
            .map(|(k, v)| (k.clone(), energy_json(*v))).collect::<BTreeMap<_, _>>(),
        "outcomes": d.outcomes,
        "std_error_pj": d.std_error_pj,
        "distinct_energies": d.pmf.len(),
    })
}

fn emit(format: Format, value: &serde_json::Value) {
    match format {
        Format::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(value).expect("serializable")
            );
        }
        Format::Table => print_table(value, 0),
    }
}

fn print_table(value: &serde_json::Value, indent: usize) {
    let pad = "  ".repeat(indent);
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                match v {
                    serde_json::Value::Object(_) | serde_json::Value::Array(_) => {
                        println!("{pad}{k}:");
                        print_table(v, indent + 1);
                    }
                    _ => println!("{pad}{k:<24} {v}"),
                }
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                print_table(v, indent);
                if indent == 1 {
                    println!();
                }
            }
        }
        other => println!("{pad}{other}"),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let format = cli.format;
    match cli.command {
        Command::Sim {
            program,
            model,
            inputs,
            trace,
            stats_only,
            fuel,
            mem,
        } => {
            let prog = load_program(&program)?;
            let model = load_model(&model.model)?;
            let sim_inputs = parse_sim_inputs(&inputs)?;
            let config = RunConfig {
                fuel,
                mem_words: mem,
                ..RunConfig::default()
            };
            if stats_only {
                let counts = run_stats_only(&prog, &sim_inputs, &config)?;
                let stats = extrapolate_stats(&counts, model.t_max)?;
                let total = model.energy(&stats)?;
                let value = serde_json::json!({
                    "program": program.display().to_string(),
                    "mode": "statistics",
                    "outcome": counts.outcome,
                    "wall_cycles": counts.wall_cycles,
                    "energy": { "total": energy_json(total), "provenance": "statistics-extrapolated" },
                    "stats": serde_json::from_str::<serde_json::Value>(&stats_to_json(&stats))?,
                });
                emit(format, &value);
            } else {
                let t = run(&prog, &sim_inputs, &config)?;
                if let Some(path) = trace {
                    std::fs::write(&path, t.to_jsonl())
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                let report = trace_energy(&model, &t, &prog)?;
                let value = serde_json::json!({
                    "program": program.display().to_string(),
                    "mode": "trace",
                    "outcome": t.outcome,
                    "total_cycles": t.total_cycles,
                    "idle_cycles": t.idle_cycles,
                    "result_r0": t.result(),
                    "energy": report_json(&report),
                });
                emit(format, &value);
            }
            Ok(())
        }
        Command::Profile {
            device,
            out,
            heatmap,
        } => {
            let mut dev = load_device(&device)?;
            let fitted = profiler::fit_model(&mut dev, &ProfileConfig::default())?;
            save_model(&fitted, &out)?;
            if let Some(path) = heatmap {
                let opcodes = profiler::profileable_opcodes();
                let map = profiler::pairwise_heatmap(&mut dev, &opcodes, 1, 20_000)?;
                std::fs::write(&path, map.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let value = serde_json::json!({
                "device": device.display().to_string(),
                "model": out.display().to_string(),
                "p_b_mw": fitted.p_b_mw,
                "overhead": fitted.overhead,
                "t_max": fitted.t_max,
                "profiled_opcodes": fitted.p_i.values()
                    .filter(|e| e.source == wattlens_core::model::PowerSource::Profiled)
                    .count(),
            });
            emit(format, &value);
            Ok(())
        }
        Command::Wcec {
            program,
            model,
            threads,
            profile,
        } => {
            let prog = load_program(&program)?;
            let model = load_model(&model.model)?;
            let cfg = build_cfg(&prog);
            let bound = wcec(&prog, &cfg, &model, threads)?;
            let mut value = serde_json::json!({
                "program": program.display().to_string(),
                "wcec": bound_json(&bound),
            });
            if profile {
                let sp = static_profile(&prog, &cfg, &model)?;
                value["static_profile"] = profile_json(&sp);
            }
            emit(format, &value);
            Ok(())
        }
        Command::Bcec {
            program,
            model,
            threads,
        } => {
            let prog = load_program(&program)?;
            let model = load_model(&model.model)?;
            let cfg = build_cfg(&prog);
            let bound = bcec(&prog, &cfg, &model, threads)?;
            let value = serde_json::json!({
                "program": program.display().to_string(),
                "bcec": bound_json(&bound),
            });
            emit(format, &value);
            Ok(())
        }
        Command::StaticProfile { program, model } => {
            let prog = load_program(&program)?;
            let model = load_model(&model.model)?;
            let cfg = build_cfg(&prog);
            let sp = static_profile(&prog, &cfg, &model)?;
            let value = serde_json::json!({
                "program": program.display().to_string(),
                "static_profile": profile_json(&sp),
            });
            emit(format, &value);
            Ok(())
        }
        Command::HirWcec {
            program,
            model,
            sizes,
            compare_isa,
        } => {
            let sizes = parse_sizes(&sizes)?;
            let model = load_model(&model.model)?;
            let (hir_prog, lowered, table) = load_hir_and_compile(&program, &sizes)?;
            let costs = hir::lift_model(&model, &lowered, &table)?;
            let bound = hir::hir_wcec(&hir_prog, &costs, &sizes)?;
            let mut value = serde_json::json!({
                "program": program.display().to_string(),
                "sizes": sizes,
                "hir_wcec": bound_json(&bound),
            });
            if compare_isa {
                let cfg = build_cfg(&lowered);
                let machine = wcec(&lowered, &cfg, &model, 1)?;
                let dev = bound.value.rel_dev(machine.value);
                value["isa_wcec"] = energy_json(machine.value);
                value["deviation_pct"] = serde_json::json!(format!("{:.4}", dev * 100.0));
            }
            emit(format, &value);
            Ok(())
        }
        Command::Param {
            program,
            model,
            sizes,
        } => {
            let sizes = parse_sizes(&sizes)?;
            let model = load_model(&model.model)?;
            let (hir_prog, lowered, table) = load_hir_and_compile(&program, &sizes)?;
            let costs = hir::lift_model(&model, &lowered, &table)?;
            let relations = parametric::extract_relations(&hir_prog, &costs)?;
            let solved = parametric::solve(&relations)?;
            let functions: Vec<serde_json::Value> = solved
                .iter()
                .map(|cf| {
                    let mut v = parametric::cost_function_to_json(cf);
                    v["upper_pj"] =
                        serde_json::json!(parametric::poly_in_pj(&cf.upper).to_string());
                    v["lower_pj"] =
                        serde_json::json!(parametric::poly_in_pj(&cf.lower).to_string());
                    v
                })
                .collect();
            let value = serde_json::json!({
                "program": program.display().to_string(),
                "monomial_order": "graded-lexicographic",
                "functions": functions,
            });
            emit(format, &value);
            Ok(())
        }
        Command::Dist {
            program,
            model,
            inputs,
            mc,
            seed,
            hist,
        } => {
            let prog = load_program(&program)?;
            let model = load_model(&model.model)?;
            let text = std::fs::read_to_string(&inputs)
                .with_context(|| format!("reading {}", inputs.display()))?;
            let dist = distribution_from_json(&text)?;
            let config = RunConfig::default();
            let (d, mode) = match mc {
                Some(n) => {
                    let seed = seed.unwrap_or_else(default_seed);
                    let d = probabilistic::energy_distribution_mc(
                        &prog,
                        &model,
                        |rng| dist.sample(rng),
                        n,
                        seed,
                        &config,
                    )?;
                    (d, "monte-carlo")
                }
                None => {
                    let d = probabilistic::energy_distribution_exact(
                        &prog,
                        &model,
                        &dist,
                        &config,
                        probabilistic::DEFAULT_SUPPORT_LIMIT,
                    )?;
                    (d, "exact")
                }
            };
            if let Some(path) = hist {
                std::fs::write(&path, histogram_csv(&d))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let value = serde_json::json!({
                "program": program.display().to_string(),
                "distribution": dist_json(&d, mode),
            });
            emit(format, &value);
            Ok(())
        }
        Command::CompareLevels {
            program,
            model,
            sizes,
        } => {
            let sizes = parse_sizes(&sizes)?;
            let model = load_model(&model.model)?;
            let (hir_prog, lowered, table) = load_hir_and_compile(&program, &sizes)?;
            let costs = hir::lift_model(&model, &lowered, &table)?;
            let source = hir::hir_wcec(&hir_prog, &costs, &sizes)?;
            let cfg = build_cfg(&lowered);
            let machine = wcec(&lowered, &cfg, &model, 1)?;
            let dev = source.value.rel_dev(machine.value);
            let value = serde_json::json!({
                "program": program.display().to_string(),
                "sizes": sizes,
                "eir_wcec": energy_json(machine.value),
                "hir_wcec": energy_json(source.value),
                "deviation_pct": format!("{:.4}", dev * 100.0),
            });
            emit(format, &value);
            Ok(())
        }
        Command::Report {
            program,
            model,
            inputs,
            sizes,
            dist,
        } => {
            let model_v = load_model(&model.model)?;
            let sizes = parse_sizes(&sizes)?;
            let value = transparency_report(&program, &model_v, &inputs, &sizes, dist.as_deref())?;
            emit(format, &value);
            Ok(())
        }
    }
}

/// The end-to-end view: simulated energy, statistics-mode estimate, machine
/// and source-level bounds, static profile, closed forms and distribution
/// summary, with the lower ≤ simulated ≤ upper ordering asserted before
/// anything is emitted.
fn transparency_report(
    program: &Path,
    model: &EnergyModel,
    inputs: &[String],
    sizes: &SizeBindings,
    dist_path: Option<&Path>,
) -> Result<serde_json::Value> {
    let is_hir = program.extension().is_some_and(|e| e == "hir");
    let mut value = serde_json::json!({ "program": program.display().to_string() });

    let (prog, hir_parts) = if is_hir {
        let (hir_prog, lowered, table) = load_hir_and_compile(program, sizes)?;
        (lowered.clone(), Some((hir_prog, lowered, table)))
    } else {
        (load_program(program)?, None)
    };

    // Machine-level bounds, or the diagnostics that block them.
    let cfg = build_cfg(&prog);
    let diags = validate_for_analysis(&prog, &cfg);
    let mut upper = None;
    let mut lower = None;
    if diags.is_empty() {
        match (wcec(&prog, &cfg, model, 1), bcec(&prog, &cfg, model, 1)) {
            (Ok(u), Ok(l)) => {
                value["eir_wcec"] = energy_json(u.value);
                value["eir_bcec"] = energy_json(l.value);
                upper = Some(u.value);
                lower = Some(l.value);
                let sp = static_profile(&prog, &cfg, model)?;
                value["static_profile"] = profile_json(&sp);
            }
            (Err(e), _) | (_, Err(e)) => {
                value["analysis_diagnostics"] = serde_json::json!(e.to_string());
            }
        }
    } else {
        let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        value["analysis_diagnostics"] = serde_json::json!(msgs);
    }

    // Simulation (trace and statistics modes) when inputs are given.
    let simulate = !inputs.is_empty() || (is_hir && !sizes.is_empty());
    let mut simulated = None;
    if simulate {
        let mut sim_inputs = parse_sim_inputs(inputs)?;
        if let Some((hir_prog, _, _)) = &hir_parts {
            let entry = hir_prog.function(&hir_prog.entry).expect("entry");
            for (i, p) in entry.params.iter().enumerate() {
                if let Some(&v) = sizes.get(p) {
                    sim_inputs.set(
                        wattlens_core::machine::InputKey::Reg(wattlens_core::machine::Reg(i as u8)),
                        v as u32,
                    );
                }
            }
        }
        let t = run(&prog, &sim_inputs, &RunConfig::default())?;
        let report = trace_energy(model, &t, &prog)?;
        simulated = Some(report.total);
        value["simulated"] = serde_json::json!({
            "outcome": t.outcome,
            "energy": energy_json(report.total),
        });
        let counts = run_stats_only(&prog, &sim_inputs, &RunConfig::default())?;
        let est = model.energy(&extrapolate_stats(&counts, model.t_max)?)?;
        value["statistics_estimate"] = energy_json(est);
    }

    // Source level: bound and closed forms.
    if let Some((hir_prog, lowered, table)) = &hir_parts {
        let costs = hir::lift_model(model, lowered, table)?;
        if let Ok(bound) = hir::hir_wcec(hir_prog, &costs, sizes) {
            value["hir_wcec"] = energy_json(bound.value);
        }
        match parametric::extract_relations(hir_prog, &costs).and_then(|r| parametric::solve(&r)) {
            Ok(solved) => {
                value["parametric"] = serde_json::json!(solved
                    .iter()
                    .map(|cf| serde_json::json!({
                        "function": cf.function,
                        "upper_pj": parametric::poly_in_pj(&cf.upper).to_string(),
                        "lower_pj": parametric::poly_in_pj(&cf.lower).to_string(),
                    }))
                    .collect::<Vec<_>>());
            }
            Err(e) => {
                value["parametric_unavailable"] = serde_json::json!(e.to_string());
            }
        }
    }

    if let Some(path) = dist_path {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let dist = distribution_from_json(&text)?;
        let d = probabilistic::energy_distribution_exact(
            &prog,
            model,
            &dist,
            &RunConfig::default(),
            probabilistic::DEFAULT_SUPPORT_LIMIT,
        )?;
        value["distribution"] = dist_json(&d, "exact");
    }

    // Internal consistency before emission.
    if let (Some(lo), Some(sim)) = (lower, simulated) {
        if sim < lo {
            bail!("internal consistency violation: simulated {sim} below lower bound {lo}");
        }
    }
    if let (Some(up), Some(sim)) = (upper, simulated) {
        if sim > up {
            bail!("internal consistency violation: simulated {sim} above upper bound {up}");
        }
    }
    Ok(value)
}
