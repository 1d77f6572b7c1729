//! Control-flow graphs: successor maps, dominator trees, natural loops and
//! reducibility, plus the pre-analysis validity check.

use super::{InstrKind, LoopBound, Program, Terminator};
use std::collections::BTreeSet;

/// A back edge `from → to` where `to` dominates `from`, with the iteration
/// bound annotated on the branch that forms it.
#[derive(Clone, Debug, PartialEq)]
pub struct BackEdge {
    pub from: usize,
    pub to: usize,
    pub bound: Option<LoopBound>,
}

/// A natural loop: the union of all back edges sharing a header.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalLoop {
    pub header: usize,
    pub blocks: BTreeSet<usize>,
    /// Indices into `FuncCfg::back_edges`.
    pub back_edges: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuncCfg {
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
    /// Immediate dominator per block; `None` for the entry block and for
    /// blocks unreachable from it.
    pub idom: Vec<Option<usize>>,
    pub back_edges: Vec<BackEdge>,
    /// Loop forest, innermost loops last (sorted by ascending block count).
    pub loops: Vec<NaturalLoop>,
    pub reducible: bool,
    pub reachable: Vec<bool>,
}

impl FuncCfg {
    /// True if `a` dominates `b` (reflexively).
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(d) => cur = d,
                None => return false,
            }
        }
    }

    /// The innermost loop containing `block`, if any.
    pub fn loop_of(&self, block: usize) -> Option<usize> {
        self.loops
            .iter()
            .enumerate()
            .filter(|(_, l)| l.blocks.contains(&block))
            .min_by_key(|(_, l)| l.blocks.len())
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cfg {
    pub funcs: Vec<FuncCfg>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub function: String,
    pub block: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.block {
            Some(b) => write!(f, "{}/{}: {}", self.function, b, self.message),
            None => write!(f, "{}: {}", self.function, self.message),
        }
    }
}

pub fn build_cfg(program: &Program) -> Cfg {
    let funcs = program.functions.iter().map(build_func_cfg).collect();
    Cfg { funcs }
}

fn build_func_cfg(func: &super::Function) -> FuncCfg {
    let n = func.blocks.len();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for (i, block) in func.blocks.iter().enumerate() {
        let mut out = Vec::new();
        match block.terminator {
            Terminator::Fallthrough => out.push(i + 1),
            Terminator::Jump => {
                out.push(func.block_index(block.target().unwrap()).unwrap());
            }
            Terminator::Branch => {
                out.push(func.block_index(block.target().unwrap()).unwrap());
                out.push(i + 1);
            }
            Terminator::Return | Terminator::Halt => {}
        }
        for &s in &out {
            debug_assert!(s < n, "fallthrough off the end is prevented by the parser");
            pred[s].push(i);
        }
        succ[i] = out;
    }

    let rpo = reverse_post_order(n, 0, &succ);
    let mut reachable = vec![false; n];
    for &b in &rpo {
        reachable[b] = true;
    }
    let idom = compute_idoms(n, 0, &pred, &rpo);

    let mut cfg = FuncCfg {
        succ,
        pred,
        idom,
        back_edges: Vec::new(),
        loops: Vec::new(),
        reducible: true,
        reachable,
    };

    // Back edges: target dominates source.
    for u in 0..n {
        if !cfg.reachable[u] {
            continue;
        }
        for &v in &cfg.succ[u].clone() {
            if cfg.dominates(v, u) {
                let bound = func.blocks[u]
                    .instructions
                    .last()
                    .and_then(|ins| match ins.kind {
                        InstrKind::Brt { .. } | InstrKind::Jmp { .. } => ins.bound,
                        _ => None,
                    });
                cfg.back_edges.push(BackEdge {
                    from: u,
                    to: v,
                    bound,
                });
            }
        }
    }

    // Natural loop bodies, merged per header.
    let mut headers: Vec<usize> = cfg.back_edges.iter().map(|e| e.to).collect();
    headers.sort_unstable();
    headers.dedup();
    for header in headers {
        let mut blocks = BTreeSet::new();
        blocks.insert(header);
        let edge_ids: Vec<usize> = cfg
            .back_edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.to == header)
            .map(|(i, _)| i)
            .collect();
        let mut work: Vec<usize> = edge_ids.iter().map(|&i| cfg.back_edges[i].from).collect();
        while let Some(b) = work.pop() {
            if blocks.insert(b) {
                for &p in &cfg.pred[b] {
                    if cfg.reachable[p] {
                        work.push(p);
                    }
                }
            }
        }
        cfg.loops.push(NaturalLoop {
            header,
            blocks,
            back_edges: edge_ids,
            parent: None,
            children: Vec::new(),
            depth: 0,
        });
    }

    // Nesting: the parent is the smallest strictly-containing loop.
    cfg.loops.sort_by_key(|l| l.blocks.len());
    for i in 0..cfg.loops.len() {
        let parent = (i + 1..cfg.loops.len())
            .find(|&j| cfg.loops[j].blocks.is_superset(&cfg.loops[i].blocks));
        cfg.loops[i].parent = parent;
        if let Some(p) = parent {
            cfg.loops[p].children.push(i);
        }
    }
    for i in 0..cfg.loops.len() {
        let mut depth = 1;
        let mut cur = cfg.loops[i].parent;
        while let Some(p) = cur {
            depth += 1;
            cur = cfg.loops[p].parent;
        }
        cfg.loops[i].depth = depth;
    }

    // Reducible iff removing back edges leaves the reachable subgraph acyclic.
    cfg.reducible = is_acyclic_without_back_edges(&cfg);
    cfg
}

#[allow(clippy::needless_range_loop)]
fn is_acyclic_without_back_edges(cfg: &FuncCfg) -> bool {
    let n = cfg.succ.len();
    let is_back = |u: usize, v: usize| cfg.back_edges.iter().any(|e| e.from == u && e.to == v);
    let mut indeg = vec![0usize; n];
    let mut nodes = 0usize;
    for u in 0..n {
        if !cfg.reachable[u] {
            continue;
        }
        nodes += 1;
        for &v in &cfg.succ[u] {
            if cfg.reachable[v] && !is_back(u, v) {
                indeg[v] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..n)
        .filter(|&u| cfg.reachable[u] && indeg[u] == 0)
        .collect();
    let mut seen = 0usize;
    while let Some(u) = queue.pop() {
        seen += 1;
        for &v in &cfg.succ[u] {
            if cfg.reachable[v] && !is_back(u, v) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push(v);
                }
            }
        }
    }
    seen == nodes
}

pub(crate) fn reverse_post_order(n: usize, entry: usize, succ: &[Vec<usize>]) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut post = Vec::new();
    // Iterative DFS with an explicit stack of (node, next child index).
    let mut stack: Vec<(usize, usize)> = vec![(entry, 0)];
    visited[entry] = true;
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        if *next < succ[node].len() {
            let child = succ[node][*next];
            *next += 1;
            if !visited[child] {
                visited[child] = true;
                stack.push((child, 0));
            }
        } else {
            post.push(node);
            stack.pop();
        }
    }
    post.reverse();
    post
}

/// Iterative dominator computation (Cooper–Harvey–Kennedy) over the blocks
/// reachable from `entry`. Checked in tests against the all-paths definition.
pub(crate) fn compute_idoms(
    n: usize,
    entry: usize,
    pred: &[Vec<usize>],
    rpo: &[usize],
) -> Vec<Option<usize>> {
    let mut rpo_num = vec![usize::MAX; n];
    for (i, &b) in rpo.iter().enumerate() {
        rpo_num[b] = i;
    }
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[entry] = Some(entry);

    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| -> usize {
        while a != b {
            while rpo_num[a] > rpo_num[b] {
                a = idom[a].unwrap();
            }
            while rpo_num[b] > rpo_num[a] {
                b = idom[b].unwrap();
            }
        }
        a
    };

    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter() {
            if b == entry {
                continue;
            }
            let mut new_idom: Option<usize> = None;
            for &p in &pred[b] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, p, cur),
                });
            }
            if let Some(ni) = new_idom {
                if idom[b] != Some(ni) {
                    idom[b] = Some(ni);
                    changed = true;
                }
            }
        }
    }
    idom[entry] = None;
    idom
}

/// Checks that every function is analysable: reducible CFG and a bound on
/// every back edge. Returns an empty list when the program is ready for the
/// static analyses.
pub fn validate_for_analysis(program: &Program, cfg: &Cfg) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for (f, fc) in program.functions.iter().zip(&cfg.funcs) {
        if !fc.reducible {
            diags.push(Diagnostic {
                function: f.name.clone(),
                block: None,
                message: "irreducible control flow".to_string(),
            });
        }
        for edge in &fc.back_edges {
            if edge.bound.is_none() {
                diags.push(Diagnostic {
                    function: f.name.clone(),
                    block: Some(f.blocks[edge.from].label.clone()),
                    message: "missing @bound on loop back edge".to_string(),
                });
            }
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::parse_program;
    use proptest::prelude::*;

    /// All-paths dominator oracle: v dominates b iff removing v makes b
    /// unreachable from the entry (plus v dom v).
    #[allow(clippy::needless_range_loop)]
    fn brute_force_dominators(n: usize, entry: usize, succ: &[Vec<usize>]) -> Vec<BTreeSet<usize>> {
        let reach_without = |skip: Option<usize>| -> Vec<bool> {
            let mut seen = vec![false; n];
            if skip == Some(entry) {
                return seen;
            }
            let mut stack = vec![entry];
            seen[entry] = true;
            while let Some(u) = stack.pop() {
                for &v in &succ[u] {
                    if Some(v) != skip && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen
        };
        let base = reach_without(None);
        (0..n)
            .map(|b| {
                let mut doms = BTreeSet::new();
                if !base[b] {
                    return doms;
                }
                for v in 0..n {
                    if v == b || !reach_without(Some(v))[b] {
                        doms.insert(v);
                    }
                }
                doms
            })
            .collect()
    }

    fn idom_dominator_sets(
        n: usize,
        idom: &[Option<usize>],
        reachable: &[bool],
    ) -> Vec<BTreeSet<usize>> {
        (0..n)
            .map(|b| {
                let mut doms = BTreeSet::new();
                if !reachable[b] {
                    return doms;
                }
                let mut cur = b;
                doms.insert(cur);
                while let Some(d) = idom[cur] {
                    doms.insert(d);
                    cur = d;
                }
                doms
            })
            .collect()
    }

    fn check_doms_against_oracle(n: usize, succ: &[Vec<usize>]) {
        let mut pred = vec![Vec::new(); n];
        for (u, outs) in succ.iter().enumerate() {
            for &v in outs {
                pred[v].push(u);
            }
        }
        let rpo = reverse_post_order(n, 0, succ);
        let mut reachable = vec![false; n];
        for &b in &rpo {
            reachable[b] = true;
        }
        let idom = compute_idoms(n, 0, &pred, &rpo);
        assert_eq!(
            idom_dominator_sets(n, &idom, &reachable),
            brute_force_dominators(n, 0, succ)
        );
    }

    #[test]
    fn straight_line_has_no_loops() {
        let p = parse_program("f:\n  LDC r0, 1\n  ADD r0, r0, r0\n  HALT\n").unwrap();
        let cfg = build_cfg(&p);
        assert_eq!(cfg.funcs[0].loops.len(), 0);
        assert!(cfg.funcs[0].reducible);
        assert_eq!(p.functions[0].blocks.len(), 1);
    }

    #[test]
    fn while_loop_header_dominates_body() {
        let text = "\
f:
  LDC r0, 5
  LDC r1, 1
head:
  SUB r0, r0, r1
  @bound 5
  BRT r0, head
  HALT
";
        let p = parse_program(text).unwrap();
        let cfg = build_cfg(&p);
        let fc = &cfg.funcs[0];
        assert_eq!(fc.loops.len(), 1);
        assert_eq!(fc.back_edges.len(), 1);
        let head = p.functions[0].block_index("head").unwrap();
        assert_eq!(fc.loops[0].header, head);
        assert!(fc.reducible);
        assert_eq!(fc.back_edges[0].bound.map(|b| b.upper), Some(5));
    }

    #[test]
    fn nested_loops_form_a_depth_two_forest() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/nested.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let cfg = build_cfg(&p);
        let fc = &cfg.funcs[p.function_index("main").unwrap()];
        assert_eq!(fc.loops.len(), 2);
        let inner = fc.loops.iter().find(|l| l.depth == 2).expect("inner loop");
        let outer = fc.loops.iter().find(|l| l.depth == 1).expect("outer loop");
        assert!(outer.blocks.is_superset(&inner.blocks));
        assert!(outer.blocks.len() > inner.blocks.len());
    }

    #[test]
    fn goto_into_loop_is_irreducible() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/irreducible.eir"
        ))
        .unwrap();
        let p = parse_program(&text).unwrap();
        let cfg = build_cfg(&p);
        assert!(!cfg.funcs[0].reducible);
        let diags = validate_for_analysis(&p, &cfg);
        assert!(
            diags.iter().any(|d| d.message.contains("irreducible")),
            "{diags:?}"
        );
    }

    #[test]
    fn missing_bound_is_diagnosed() {
        let p = parse_program("f:\nl:\n  SUB r0, r0, r1\n  BRT r0, l\n  HALT\n").unwrap();
        let cfg = build_cfg(&p);
        let diags = validate_for_analysis(&p, &cfg);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("missing @bound"));
    }

    #[test]
    fn fully_annotated_reducible_program_has_no_diagnostics() {
        let p =
            parse_program("f:\nl:\n  SUB r0, r0, r1\n  @bound 9\n  BRT r0, l\n  HALT\n").unwrap();
        let cfg = build_cfg(&p);
        assert!(validate_for_analysis(&p, &cfg).is_empty());
    }

    #[test]
    fn dominators_match_oracle_on_diamond_with_loop() {
        // 0→1, 0→2, 1→3, 2→3, 3→1 (back), 3→4
        let succ = vec![vec![1, 2], vec![3], vec![3], vec![1, 4], vec![]];
        check_doms_against_oracle(5, &succ);
    }

    proptest! {
        #[test]
        fn dominators_match_oracle_on_random_graphs(
            edges in proptest::collection::vec((0usize..12, 0usize..12), 0..30)
        ) {
            let n = 12;
            let mut succ = vec![Vec::new(); n];
            for (u, v) in edges {
                if !succ[u].contains(&v) {
                    succ[u].push(v);
                }
            }
            check_doms_against_oracle(n, &succ);
        }
    }
}
