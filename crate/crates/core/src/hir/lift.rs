//! Lifting the ISA model to statement level, and the source-level bound.
//!
//! `lift_model` turns the mapping table into per-statement energies at one
//! thread, keeping the per-role split. `hir_wcec` then bounds a function
//! structurally over the AST: statement costs, max over branches, and
//! trip-count multiplication with the glue charged by role
//! (init + (T+1)·test + T·step + exit). Branch glue the machine-level worst
//! path can skip (the else-side jump) is always charged here, which is the
//! systematic gap the level-comparison experiment measures.

use super::compile::{interval_of, Interval, MapRole, MappingTable};
use super::{Expr, HirError, HirFunction, HirProgram, Stmt, StmtId, StmtKind};
use crate::energy::Energy;
use crate::machine::{issue_cycles, Program};
use crate::model::EnergyModel;
use crate::static_analysis::{BoundKind, EnergyBound};
use std::collections::BTreeMap;

/// Concrete values for size parameters of the entry function.
pub type SizeBindings = BTreeMap<String, u64>;

/// Per-statement energies at t=1, with the structural role split retained.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HirCosts {
    pub total: BTreeMap<StmtId, Energy>,
    pub by_role: BTreeMap<StmtId, BTreeMap<MapRole, Energy>>,
}

impl HirCosts {
    pub fn total_of(&self, id: StmtId) -> Energy {
        self.total.get(&id).copied().unwrap_or(Energy::ZERO)
    }

    pub fn role_of(&self, id: StmtId, role: MapRole) -> Energy {
        self.by_role
            .get(&id)
            .and_then(|m| m.get(&role))
            .copied()
            .unwrap_or(Energy::ZERO)
    }
}

/// Statement cost = Σ instruction_energy(op, 1)·issue_cycles over the mapped
/// instructions.
pub fn lift_model(
    model: &EnergyModel,
    program: &Program,
    table: &MappingTable,
) -> Result<HirCosts, crate::model::ModelError> {
    let mut costs = HirCosts::default();
    for (&stmt, refs) in &table.entries {
        for r in refs {
            let func = program
                .function(&r.function)
                .expect("mapping names a function");
            let block = &func.blocks[func.block_index(&r.block).expect("mapped block")];
            let op = block.instructions[r.index].kind.opcode();
            let unit = model.instruction_energy(op, 1)? * issue_cycles(op) as u128;
            *costs.total.entry(stmt).or_insert(Energy::ZERO) += unit;
            *costs
                .by_role
                .entry(stmt)
                .or_default()
                .entry(r.role)
                .or_insert(Energy::ZERO) += unit;
        }
    }
    Ok(costs)
}

struct Analyzer<'a> {
    hir: &'a HirProgram,
    costs: &'a HirCosts,
    /// (function, argument intervals) → bound.
    memo: BTreeMap<(String, Vec<Interval>), Energy>,
    active: Vec<String>,
    stmt_counts: BTreeMap<StmtId, u128>,
}

fn calls_in<'e>(expr: &'e Expr, out: &mut Vec<(&'e str, &'e [Expr])>) {
    match expr {
        Expr::Binary { lhs, rhs, .. } => {
            calls_in(lhs, out);
            calls_in(rhs, out);
        }
        Expr::Index { index, .. } => calls_in(index, out),
        Expr::Call { func, args } => {
            out.push((func, args));
            for a in args {
                calls_in(a, out);
            }
        }
        _ => {}
    }
}

impl<'a> Analyzer<'a> {
    fn function_bound(&mut self, name: &str, args: Vec<Interval>) -> Result<Energy, HirError> {
        if let Some(&e) = self.memo.get(&(name.to_string(), args.clone())) {
            return Ok(e);
        }
        if self.active.iter().any(|f| f == name) {
            return Err(HirError::Unanalysable(format!(
                "recursive call to '{name}' is not supported by the source-level bound"
            )));
        }
        let func = self
            .hir
            .function(name)
            .ok_or_else(|| HirError::Unanalysable(format!("unknown function '{name}'")))?;
        self.active.push(name.to_string());
        let mut env: BTreeMap<String, Interval> = BTreeMap::new();
        for (p, &iv) in func.params.iter().zip(&args) {
            env.insert(p.clone(), iv);
        }
        let mut total = self.costs.total_of(func.pseudo_stmt);
        *self.stmt_counts.entry(func.pseudo_stmt).or_insert(0) += 1;
        total += self.body_bound(func, &func.body, &mut env, 1)?;
        self.active.pop();
        self.memo.insert((name.to_string(), args), total);
        Ok(total)
    }

    fn expr_calls_bound(
        &mut self,
        expr: &Expr,
        env: &BTreeMap<String, Interval>,
    ) -> Result<Energy, HirError> {
        let mut calls = Vec::new();
        calls_in(expr, &mut calls);
        let mut total = Energy::ZERO;
        for (callee, args) in calls {
            let mut values = Vec::with_capacity(args.len());
            for a in args {
                values.push(interval_of(a, env).ok_or_else(|| {
                    HirError::Unanalysable(format!(
                        "argument of call to '{callee}' is not bounded under the given sizes"
                    ))
                })?);
            }
            total += self.function_bound(callee, values)?;
        }
        Ok(total)
    }

    fn body_bound(
        &mut self,
        func: &HirFunction,
        body: &[Stmt],
        env: &mut BTreeMap<String, Interval>,
        multiplier: u128,
    ) -> Result<Energy, HirError> {
        let mut total = Energy::ZERO;
        for stmt in body {
            total += self.stmt_bound(func, stmt, env, multiplier)?;
        }
        Ok(total)
    }

    fn count(&mut self, id: StmtId, times: u128) {
        *self.stmt_counts.entry(id).or_insert(0) += times;
    }

    fn stmt_bound(
        &mut self,
        func: &HirFunction,
        stmt: &Stmt,
        env: &mut BTreeMap<String, Interval>,
        multiplier: u128,
    ) -> Result<Energy, HirError> {
        let id = stmt.id;
        match &stmt.kind {
            StmtKind::ArrayDecl { .. } => Ok(Energy::ZERO),
            StmtKind::Let { name, value } | StmtKind::Assign { name, value } => {
                self.count(id, multiplier);
                let calls = self.expr_calls_bound(value, env)?;
                // The interval environment only trusts parameters and loop
                // variables; anything written is forgotten.
                env.remove(name);
                Ok(self.costs.total_of(id) + calls)
            }
            StmtKind::Store { index, value, .. } => {
                self.count(id, multiplier);
                Ok(self.costs.total_of(id)
                    + self.expr_calls_bound(index, env)?
                    + self.expr_calls_bound(value, env)?)
            }
            StmtKind::Return { value } => {
                self.count(id, multiplier);
                let calls = match value {
                    Some(v) => self.expr_calls_bound(v, env)?,
                    None => Energy::ZERO,
                };
                Ok(self.costs.total_of(id) + calls)
            }
            StmtKind::ExprStmt { expr } => {
                self.count(id, multiplier);
                Ok(self.costs.total_of(id) + self.expr_calls_bound(expr, env)?)
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.count(id, multiplier);
                let glue = self.costs.total_of(id) + self.expr_calls_bound(cond, env)?;
                let then_e = self.body_bound(func, then_body, env, multiplier)?;
                let else_e = self.body_bound(func, else_body, env, multiplier)?;
                Ok(glue + then_e.max(else_e))
            }
            StmtKind::For {
                var,
                from,
                to,
                body,
            } => {
                self.count(id, multiplier);
                let body_writes = super::assigned_vars(body);
                if body_writes.contains(var) {
                    return Err(HirError::Unanalysable(format!(
                        "{}: line {}: loop body writes its own loop variable",
                        func.name, stmt.line
                    )));
                }
                for w in &body_writes {
                    env.remove(w);
                }
                let (a, b) = (interval_of(from, env), interval_of(to, env));
                let (Some(a), Some(b)) = (a, b) else {
                    return Err(HirError::Unanalysable(format!(
                        "{}: line {}: loop bounds are not affine in the bound sizes",
                        func.name, stmt.line
                    )));
                };
                let trips = (b.1 - a.0).max(0) as u128;
                let init = self.costs.role_of(id, MapRole::LoopInit);
                let test = self.costs.role_of(id, MapRole::LoopTest);
                let step = self.costs.role_of(id, MapRole::LoopStep);
                let back = self.costs.role_of(id, MapRole::LoopBack);
                let exit = self.costs.role_of(id, MapRole::LoopExit);
                let from_calls = self.expr_calls_bound(from, env)?;
                let to_calls = self.expr_calls_bound(to, env)?;

                env.insert(var.clone(), (a.0, (b.1 - 1).max(a.0)));
                let body_e = self.body_bound(func, body, env, multiplier * trips)?;
                env.remove(var);

                Ok(init
                    + from_calls
                    + test * (trips + 1)
                    + to_calls * (trips + 1)
                    + (step + back) * trips
                    + exit
                    + body_e * trips)
            }
            StmtKind::While {
                cond,
                bound_hi,
                body,
                ..
            } => {
                self.count(id, multiplier);
                for w in super::assigned_vars(body) {
                    env.remove(&w);
                }
                let trips = *bound_hi as u128;
                let test = self.costs.role_of(id, MapRole::LoopTest);
                let back = self.costs.role_of(id, MapRole::LoopBack);
                let exit = self.costs.role_of(id, MapRole::LoopExit);
                let cond_calls = self.expr_calls_bound(cond, env)?;
                let body_e = self.body_bound(func, body, env, multiplier * trips)?;
                Ok(test * (trips + 1)
                    + cond_calls * (trips + 1)
                    + back * trips
                    + exit
                    + body_e * trips)
            }
        }
    }
}

/// Structural upper bound over the AST using lifted statement costs, with the
/// entry's size parameters bound to concrete values.
pub fn hir_wcec(
    hir: &HirProgram,
    costs: &HirCosts,
    sizes: &SizeBindings,
) -> Result<EnergyBound, HirError> {
    let entry = hir
        .function(&hir.entry)
        .ok_or_else(|| HirError::Unanalysable("missing entry function".into()))?;
    let mut args = Vec::with_capacity(entry.params.len());
    for p in &entry.params {
        let v = sizes
            .get(p)
            .copied()
            .ok_or_else(|| HirError::Unanalysable(format!("size parameter '{p}' is unbound")))?;
        args.push((v as i128, v as i128));
    }
    let mut analyzer = Analyzer {
        hir,
        costs,
        memo: BTreeMap::new(),
        active: Vec::new(),
        stmt_counts: BTreeMap::new(),
    };
    let value = analyzer.function_bound(&entry.name, args)?;
    let block_counts = analyzer
        .stmt_counts
        .iter()
        .map(|(&id, &c)| (format!("stmt{id}"), c))
        .collect();
    Ok(EnergyBound {
        kind: BoundKind::Upper,
        value,
        assumed_threads: 1,
        block_counts,
        idle_energy_excluded: false,
    })
}
