//! Static energy bounds without execution.
//!
//! Worst- and best-case energy of a loop-bounded reducible CFG by structural
//! path analysis: natural loops are collapsed innermost-first into summary
//! nodes (bound × extremal circuit + extremal exit path), then the acyclic
//! remainder is solved by longest/shortest path. Per-block execution counts
//! and edge traversal counts are carried along, so bounds come with a
//! flow-conserving witness. Calls are resolved bottom-up over an acyclic call
//! graph; hardware threads spawned by unconditional FORKs in the entry
//! function are bounded separately and summed, with idle energy excluded
//! (and flagged as such).

use crate::energy::Energy;
use crate::machine::{issue_cycles, Cfg, Diagnostic, FuncCfg, InstrKind, Program, Terminator};
use crate::model::{EnergyModel, ModelError};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("program is not analysable: {}", format_diags(.0))]
    NotAnalysable(Vec<Diagnostic>),
    #[error("recursive call involving '{0}' is not supported by the static bound")]
    Recursion(String),
    #[error("{function}: loop headed at '{header}' has no exit edge")]
    LoopWithoutExit { function: String, header: String },
    #[error("{function}: no path from entry to a RET/HALT block")]
    NoTerminalPath { function: String },
    #[error("{function}: FORK must be unconditional and outside loops for the static bound")]
    UnsupportedFork { function: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn format_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
}

/// A safe energy bound with its execution-count witness.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBound {
    pub kind: BoundKind,
    pub value: Energy,
    pub assumed_threads: u32,
    /// "function/label" → execution count on the extremal path.
    pub block_counts: BTreeMap<String, u128>,
    /// True when the program spawns threads: channel-wait idle energy is not
    /// part of the bound.
    pub idle_energy_excluded: bool,
}

/// Distribution of worst-case energy over blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticProfile {
    /// "function/label" → (energy, share of total).
    pub entries: BTreeMap<String, (Energy, f64)>,
    pub total: Energy,
}

// --- path bundles ------------------------------------------------------------

type BlockId = usize;

#[derive(Clone, Debug, Default)]
struct Bundle {
    cost: Energy,
    counts: BTreeMap<BlockId, u128>,
    edges: BTreeMap<(BlockId, BlockId), u128>,
}

impl Bundle {
    fn add_scaled(&mut self, other: &Bundle, times: u128) {
        if times == 0 {
            return;
        }
        self.cost += other.cost * times;
        for (&b, &c) in &other.counts {
            *self.counts.entry(b).or_insert(0) += c * times;
        }
        for (&e, &c) in &other.edges {
            *self.edges.entry(e).or_insert(0) += c * times;
        }
    }
}

#[derive(Clone, Debug)]
struct ExitPath {
    /// Original CFG edge leaving this node.
    edge: (BlockId, BlockId),
    bundle: Bundle,
}

#[derive(Clone, Debug)]
struct Node {
    base: Bundle,
    exits: Vec<ExitPath>,
}

struct FuncAnalysis {
    value: Energy,
    counts: BTreeMap<BlockId, u128>,
    // The edge witness backs the flow-conservation checks.
    #[cfg_attr(not(test), allow(dead_code))]
    edges: BTreeMap<(BlockId, BlockId), u128>,
    #[cfg_attr(not(test), allow(dead_code))]
    terminal: BlockId,
}

struct Repr(Vec<BlockId>);

impl Repr {
    fn find(&self, mut b: BlockId) -> BlockId {
        while self.0[b] != b {
            b = self.0[b];
        }
        b
    }
}

fn better(kind: BoundKind, a: Energy, b: Energy) -> bool {
    match kind {
        BoundKind::Upper => a > b,
        BoundKind::Lower => a < b,
    }
}

type DpTable = HashMap<BlockId, (Energy, Option<(BlockId, usize)>)>;

/// Longest/shortest path DP from `entry` over the collapsed nodes in
/// `members`, ignoring edges back to `exclude_header`. Arrival values include
/// the node's own base cost.
fn region_dp(
    nodes: &HashMap<BlockId, Node>,
    repr: &Repr,
    members: &BTreeSet<BlockId>,
    entry: BlockId,
    exclude_header: Option<BlockId>,
    kind: BoundKind,
) -> DpTable {
    let in_region = |m: BlockId, exit: &ExitPath| -> Option<BlockId> {
        let t = repr.find(exit.edge.1);
        if t == m || Some(t) == exclude_header || !members.contains(&t) {
            None
        } else {
            Some(t)
        }
    };
    // Kahn order over the region DAG.
    let mut indeg: HashMap<BlockId, usize> = members.iter().map(|&m| (m, 0)).collect();
    for &m in members {
        for exit in &nodes[&m].exits {
            if let Some(t) = in_region(m, exit) {
                *indeg.get_mut(&t).unwrap() += 1;
            }
        }
    }
    let mut queue: Vec<BlockId> = members.iter().copied().filter(|m| indeg[m] == 0).collect();
    let mut order = Vec::with_capacity(members.len());
    while let Some(m) = queue.pop() {
        order.push(m);
        for exit in &nodes[&m].exits {
            if let Some(t) = in_region(m, exit) {
                let d = indeg.get_mut(&t).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(t);
                }
            }
        }
    }
    debug_assert_eq!(order.len(), members.len(), "region is acyclic");

    let mut dp: DpTable = HashMap::new();
    dp.insert(entry, (nodes[&entry].base.cost, None));
    for &m in &order {
        let Some(&(dm, _)) = dp.get(&m) else { continue };
        for (i, exit) in nodes[&m].exits.iter().enumerate() {
            if let Some(t) = in_region(m, exit) {
                let cand = dm + exit.bundle.cost + nodes[&t].base.cost;
                match dp.get(&t) {
                    Some(&(cur, _)) if !better(kind, cand, cur) => {}
                    _ => {
                        dp.insert(t, (cand, Some((m, i))));
                    }
                }
            }
        }
    }
    dp
}

/// Accumulates base bundles and connecting exits along the DP path ending at
/// `m` (inclusive).
fn path_bundle(nodes: &HashMap<BlockId, Node>, dp: &DpTable, mut m: BlockId) -> Bundle {
    let mut bundle = Bundle::default();
    loop {
        bundle.add_scaled(&nodes[&m].base, 1);
        match dp[&m].1 {
            Some((pred, exit_idx)) => {
                bundle.add_scaled(&nodes[&pred].exits[exit_idx].bundle, 1);
                m = pred;
            }
            None => break,
        }
    }
    bundle
}

#[allow(clippy::needless_range_loop)]
fn analyze_function(
    func: &crate::machine::Function,
    fcfg: &FuncCfg,
    block_cost: &[Energy],
    kind: BoundKind,
) -> Result<FuncAnalysis, AnalysisError> {
    let n = func.blocks.len();
    let mut repr = Repr((0..n).collect());
    let mut nodes: HashMap<BlockId, Node> = HashMap::new();
    for b in 0..n {
        if !fcfg.reachable[b] {
            continue;
        }
        let exits = fcfg.succ[b]
            .iter()
            .map(|&s| ExitPath {
                edge: (b, s),
                bundle: Bundle {
                    cost: Energy::ZERO,
                    counts: BTreeMap::new(),
                    edges: [((b, s), 1u128)].into_iter().collect(),
                },
            })
            .collect();
        let base = Bundle {
            cost: block_cost[b],
            counts: [(b, 1u128)].into_iter().collect(),
            edges: BTreeMap::new(),
        };
        nodes.insert(b, Node { base, exits });
    }

    // Collapse loops innermost-first (the loop forest is sorted by size).
    for lp in &fcfg.loops {
        let h = lp.header;
        let members: BTreeSet<BlockId> = lp.blocks.iter().map(|&b| repr.find(b)).collect();
        let dp = region_dp(&nodes, &repr, &members, h, Some(h), kind);

        // Bounded circuits header → back-edge source → header.
        let mut base = Bundle::default();
        for &be_idx in &lp.back_edges {
            let be = &fcfg.back_edges[be_idx];
            let bound = be.bound.expect("validated loop bound");
            let times = match kind {
                BoundKind::Upper => bound.upper,
                BoundKind::Lower => bound.lower,
            } as u128;
            if times == 0 {
                continue;
            }
            let m = repr.find(be.from);
            debug_assert!(
                dp.contains_key(&m),
                "back-edge source reachable from header"
            );
            let mut circuit = path_bundle(&nodes, &dp, m);
            let exit_idx = nodes[&m]
                .exits
                .iter()
                .position(|e| e.edge == (be.from, be.to))
                .expect("back edge is an exit of its source node");
            let exit_bundle = nodes[&m].exits[exit_idx].bundle.clone();
            circuit.add_scaled(&exit_bundle, 1);
            base.add_scaled(&circuit, times);
        }

        // Exit paths: header → member → outside, per original exit edge.
        let mut exits: Vec<ExitPath> = Vec::new();
        for &m in &members {
            if !dp.contains_key(&m) {
                continue;
            }
            for exit in &nodes[&m].exits {
                let t = repr.find(exit.edge.1);
                if members.contains(&t) {
                    continue; // internal or back edge
                }
                let mut bundle = path_bundle(&nodes, &dp, m);
                bundle.add_scaled(&exit.bundle, 1);
                exits.push(ExitPath {
                    edge: exit.edge,
                    bundle,
                });
            }
        }
        if exits.is_empty() {
            return Err(AnalysisError::LoopWithoutExit {
                function: func.name.clone(),
                header: func.blocks[h].label.clone(),
            });
        }

        for &b in &lp.blocks {
            let r = repr.find(b);
            if r != h {
                nodes.remove(&r);
                repr.0[r] = h;
            }
            repr.0[b] = h;
        }
        repr.0[h] = h;
        nodes.insert(h, Node { base, exits });
    }

    // Top-level DAG.
    let members: BTreeSet<BlockId> = (0..n)
        .filter(|&b| fcfg.reachable[b])
        .map(|b| repr.find(b))
        .collect();
    let entry = repr.find(0);
    let dp = region_dp(&nodes, &repr, &members, entry, None, kind);
    let mut best: Option<(Energy, BlockId)> = None;
    for b in 0..n {
        if !fcfg.reachable[b] || repr.find(b) != b {
            continue;
        }
        if !matches!(
            func.blocks[b].terminator,
            Terminator::Return | Terminator::Halt
        ) {
            continue;
        }
        if let Some(&(v, _)) = dp.get(&b) {
            if best.is_none() || better(kind, v, best.unwrap().0) {
                best = Some((v, b));
            }
        }
    }
    let Some((value, terminal)) = best else {
        return Err(AnalysisError::NoTerminalPath {
            function: func.name.clone(),
        });
    };
    let bundle = path_bundle(&nodes, &dp, terminal);
    debug_assert_eq!(bundle.cost, value);
    Ok(FuncAnalysis {
        value,
        counts: bundle.counts,
        edges: bundle.edges,
        terminal,
    })
}

// --- program-level assembly --------------------------------------------------

fn conservative_level(model: &EnergyModel, n_threads: u32, kind: BoundKind) -> u32 {
    (1..=n_threads.min(model.t_max))
        .max_by(|a, b| {
            let (ma, mb) = (model.m_t[a], model.m_t[b]);
            match kind {
                BoundKind::Upper => ma.total_cmp(&mb),
                BoundKind::Lower => mb.total_cmp(&ma),
            }
        })
        .unwrap_or(1)
}

fn call_order(program: &Program, roots: &[usize]) -> Result<Vec<usize>, AnalysisError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    fn visit(
        program: &Program,
        f: usize,
        marks: &mut Vec<Mark>,
        order: &mut Vec<usize>,
    ) -> Result<(), AnalysisError> {
        match marks[f] {
            Mark::Black => return Ok(()),
            Mark::Grey => return Err(AnalysisError::Recursion(program.functions[f].name.clone())),
            Mark::White => {}
        }
        marks[f] = Mark::Grey;
        for block in &program.functions[f].blocks {
            for ins in &block.instructions {
                if let InstrKind::Call { target } = &ins.kind {
                    let callee = program.function_index(target).expect("validated target");
                    visit(program, callee, marks, order)?;
                }
            }
        }
        marks[f] = Mark::Black;
        order.push(f);
        Ok(())
    }
    let mut marks = vec![Mark::White; program.functions.len()];
    let mut order = Vec::new();
    for &r in roots {
        visit(program, r, &mut marks, &mut order)?;
    }
    Ok(order)
}

struct ProgramAnalysis {
    value: Energy,
    /// (function, block) → count, call multiplicity applied.
    counts: BTreeMap<(usize, BlockId), u128>,
    forked: Vec<usize>,
}

fn analyze_program(
    program: &Program,
    cfg: &Cfg,
    model: &EnergyModel,
    n_threads: u32,
    kind: BoundKind,
) -> Result<(ProgramAnalysis, u32), AnalysisError> {
    let diags = crate::machine::validate_for_analysis(program, cfg);
    if !diags.is_empty() {
        return Err(AnalysisError::NotAnalysable(diags));
    }
    let t_star = conservative_level(model, n_threads, kind);

    let entry_idx = program
        .function_index(&program.entry)
        .expect("validated entry");
    let entry_cfg = &cfg.funcs[entry_idx];
    let mut forked = Vec::new();
    for (fi, f) in program.functions.iter().enumerate() {
        for (bi, block) in f.blocks.iter().enumerate() {
            for ins in &block.instructions {
                if let InstrKind::Fork { target } = &ins.kind {
                    let callee = program.function_index(target).expect("validated target");
                    let in_entry = fi == entry_idx;
                    let in_loop =
                        in_entry && entry_cfg.loops.iter().any(|l| l.blocks.contains(&bi));
                    let dominates_terminals = in_entry
                        && f.blocks.iter().enumerate().all(|(ti, tb)| {
                            !matches!(tb.terminator, Terminator::Return | Terminator::Halt)
                                || !entry_cfg.reachable[ti]
                                || entry_cfg.dominates(bi, ti)
                        });
                    if !in_entry || in_loop || !dominates_terminals {
                        return Err(AnalysisError::UnsupportedFork {
                            function: f.name.clone(),
                        });
                    }
                    forked.push(callee);
                }
            }
        }
    }

    let mut roots = vec![entry_idx];
    roots.extend(&forked);
    let order = call_order(program, &roots)?;

    // Per-block costs at the conservative level; CALL blocks absorb the
    // callee's bound so the path DP sees whole-call costs.
    let mut analyses: HashMap<usize, FuncAnalysis> = HashMap::new();
    let mut own_costs: HashMap<usize, Vec<Energy>> = HashMap::new();
    for &fi in &order {
        let func = &program.functions[fi];
        let mut costs = Vec::with_capacity(func.blocks.len());
        let mut own = Vec::with_capacity(func.blocks.len());
        for block in &func.blocks {
            let mut cost = Energy::ZERO;
            let mut with_calls = Energy::ZERO;
            for ins in &block.instructions {
                let op = ins.kind.opcode();
                let unit = model.instruction_energy(op, t_star)?;
                let instr_cost = unit * issue_cycles(op) as u128;
                cost += instr_cost;
                with_calls += instr_cost;
                if let InstrKind::Call { target } = &ins.kind {
                    let callee = program.function_index(target).unwrap();
                    with_calls += analyses[&callee].value;
                }
            }
            own.push(cost);
            costs.push(with_calls);
        }
        let fa = analyze_function(func, &cfg.funcs[fi], &costs, kind)?;
        analyses.insert(fi, fa);
        own_costs.insert(fi, own);
    }

    fn flatten(
        program: &Program,
        analyses: &HashMap<usize, FuncAnalysis>,
        fi: usize,
        multiplier: u128,
        out: &mut BTreeMap<(usize, BlockId), u128>,
    ) {
        for (&b, &c) in &analyses[&fi].counts {
            *out.entry((fi, b)).or_insert(0) += c * multiplier;
            for ins in &program.functions[fi].blocks[b].instructions {
                if let InstrKind::Call { target } = &ins.kind {
                    let callee = program.function_index(target).unwrap();
                    flatten(program, analyses, callee, multiplier * c, out);
                }
            }
        }
    }
    let mut counts = BTreeMap::new();
    let mut value = Energy::ZERO;
    for root in std::iter::once(entry_idx).chain(forked.iter().copied()) {
        value += analyses[&root].value;
        flatten(program, &analyses, root, 1, &mut counts);
    }

    // The flattened own-cost-weighted counts reproduce the bound exactly.
    let recomputed: Energy = counts
        .iter()
        .map(|(&(fi, b), &c)| own_costs[&fi][b] * c)
        .sum();
    debug_assert_eq!(recomputed, value);

    Ok((
        ProgramAnalysis {
            value,
            counts,
            forked,
        },
        t_star,
    ))
}

fn to_bound(
    program: &Program,
    analysis: ProgramAnalysis,
    kind: BoundKind,
    assumed_threads: u32,
) -> EnergyBound {
    let block_counts = analysis
        .counts
        .iter()
        .map(|(&(fi, b), &c)| {
            let f = &program.functions[fi];
            (
                crate::energy::EnergyReport::block_key(&f.name, &f.blocks[b].label),
                c,
            )
        })
        .collect();
    EnergyBound {
        kind,
        value: analysis.value,
        assumed_threads,
        block_counts,
        idle_energy_excluded: assumed_threads > 1 || !analysis.forked.is_empty(),
    }
}

/// Worst-case energy bound of the program under the model, assuming up to
/// `n_threads` active threads.
pub fn wcec(
    program: &Program,
    cfg: &Cfg,
    model: &EnergyModel,
    n_threads: u32,
) -> Result<EnergyBound, AnalysisError> {
    let (analysis, _) = analyze_program(program, cfg, model, n_threads, BoundKind::Upper)?;
    Ok(to_bound(program, analysis, BoundKind::Upper, n_threads))
}

/// Best-case energy bound (dual of `wcec`; unannotated lower loop bounds are
/// zero).
pub fn bcec(
    program: &Program,
    cfg: &Cfg,
    model: &EnergyModel,
    n_threads: u32,
) -> Result<EnergyBound, AnalysisError> {
    let (analysis, _) = analyze_program(program, cfg, model, n_threads, BoundKind::Lower)?;
    Ok(to_bound(program, analysis, BoundKind::Lower, n_threads))
}

/// Distribution of worst-case energy over blocks, at one thread.
pub fn static_profile(
    program: &Program,
    cfg: &Cfg,
    model: &EnergyModel,
) -> Result<StaticProfile, AnalysisError> {
    let (analysis, t_star) = analyze_program(program, cfg, model, 1, BoundKind::Upper)?;
    let mut entries = BTreeMap::new();
    let total = analysis.value;
    for (&(fi, b), &c) in &analysis.counts {
        let f = &program.functions[fi];
        let block = &f.blocks[b];
        let mut own = Energy::ZERO;
        for ins in &block.instructions {
            let op = ins.kind.opcode();
            own += model.instruction_energy(op, t_star)? * issue_cycles(op) as u128;
        }
        let energy = own * c;
        let share = if total.fj() == 0 {
            0.0
        } else {
            energy.fj() as f64 / total.fj() as f64
        };
        entries.insert(
            crate::energy::EnergyReport::block_key(&f.name, &block.label),
            (energy, share),
        );
    }
    Ok(StaticProfile { entries, total })
}
