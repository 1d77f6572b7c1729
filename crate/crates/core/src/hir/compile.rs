//! Lowering to EIR with a total statement↔instruction mapping.
//!
//! Calling convention: arguments in r0..r(k−1), return value in r0, with
//! register-window CALL/RET semantics. Each function's prologue moves its
//! parameters into dedicated local registers (r1 upward); expression
//! evaluation uses a LIFO temporary stack above the locals. Arrays get static
//! bases in the flat data memory, allocated program-wide; the compiler emits
//! the resulting `;@ mem` requirement on the program.
//!
//! Loops lower to a top-test shape whose back edge is the closing JMP, so
//! `@bound` sits on the back-edge branch and equals the iteration count, and
//! the executed instruction stream is the same polynomial in the trip count
//! for every trip, including zero:
//!
//!   init:   i = from
//!   head:   t = i XOR to ; BRT t, body
//!           JMP exit
//!   body:   ... ; i = i + 1 ; @bound trips ; JMP head
//!   exit:
//!
//! The one optimisation is constant folding of literal subexpressions.

use super::lift::SizeBindings;
use super::{fold_expr, BinOp, Expr, HirError, HirFunction, HirProgram, Stmt, StmtId, StmtKind};
use crate::machine::{
    AluOp, BasicBlock, Function, InstrKind, Instruction, LoopBound, Program, ProgramMeta, Reg,
    Terminator, NUM_REGS,
};
use serde::Serialize;
use std::collections::BTreeMap;

/// What a mapped instruction does for its statement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapRole {
    Body,
    Prologue,
    Epilogue,
    LoopInit,
    LoopTest,
    LoopStep,
    LoopBack,
    LoopExit,
    CondTest,
    CondJump,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstrRef {
    pub function: String,
    pub block: String,
    pub index: usize,
    pub role: MapRole,
}

/// Total, non-overlapping map from statement ids to lowered instructions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MappingTable {
    pub entries: BTreeMap<StmtId, Vec<InstrRef>>,
}

impl MappingTable {
    fn push(&mut self, stmt: StmtId, r: InstrRef) {
        self.entries.entry(stmt).or_default().push(r);
    }
}

/// Checks the mapping is total and non-overlapping over the program.
pub fn verify_mapping(program: &Program, table: &MappingTable) -> Result<(), HirError> {
    let mut seen: BTreeMap<(String, String, usize), StmtId> = BTreeMap::new();
    for (&stmt, refs) in &table.entries {
        for r in refs {
            let key = (r.function.clone(), r.block.clone(), r.index);
            if let Some(prev) = seen.insert(key, stmt) {
                return Err(HirError::Compile(format!(
                    "instruction {}/{}/{} mapped to statements {prev} and {stmt}",
                    r.function, r.block, r.index
                )));
            }
        }
    }
    for f in &program.functions {
        for b in &f.blocks {
            for i in 0..b.instructions.len() {
                if !seen.contains_key(&(f.name.clone(), b.label.clone(), i)) {
                    return Err(HirError::Compile(format!(
                        "instruction {}/{}/{i} is unmapped",
                        f.name, b.label
                    )));
                }
            }
        }
    }
    Ok(())
}

pub(crate) type Interval = (i128, i128);

/// Interval of an expression under per-variable intervals; `None` when the
/// expression is not affine enough to bound.
pub(crate) fn interval_of(expr: &Expr, env: &BTreeMap<String, Interval>) -> Option<Interval> {
    match expr {
        Expr::Const(v) => Some((*v as i128, *v as i128)),
        Expr::Var(name) => env.get(name).copied(),
        Expr::Binary { op, lhs, rhs } => {
            let (a, b) = (interval_of(lhs, env)?, interval_of(rhs, env)?);
            match op {
                BinOp::Add => Some((a.0 + b.0, a.1 + b.1)),
                BinOp::Sub => Some((a.0 - b.1, a.1 - b.0)),
                BinOp::Mul => {
                    let products = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
                    Some((
                        products.iter().copied().min().unwrap(),
                        products.iter().copied().max().unwrap(),
                    ))
                }
                BinOp::Shl if b.0 == b.1 && (0..31).contains(&b.0) && a.0 >= 0 => {
                    Some((a.0 << b.0, a.1 << b.0))
                }
                _ => None,
            }
        }
        _ => None,
    }
}

struct ArrayLayout {
    bases: BTreeMap<(String, String), u32>,
    total: u32,
}

fn layout_arrays(hir: &HirProgram) -> ArrayLayout {
    let mut bases = BTreeMap::new();
    let mut total = 0u32;
    for f in &hir.functions {
        super::visit_stmts(&f.body, &mut |stmt| {
            if let StmtKind::ArrayDecl { name, size } = &stmt.kind {
                bases.insert((f.name.clone(), name.clone()), total);
                total += size;
            }
        });
    }
    ArrayLayout { bases, total }
}

struct FnCompiler<'a> {
    func: &'a HirFunction,
    arrays: &'a ArrayLayout,
    blocks: Vec<BasicBlock>,
    label_aliases: BTreeMap<String, usize>,
    cur_label: String,
    cur_instrs: Vec<Instruction>,
    /// Set once a Return was emitted; cleared when a new label opens.
    terminated: bool,
    label_counter: u32,
    locals: BTreeMap<String, Reg>,
    temp_base: u8,
    temp_next: u8,
    table: &'a mut MappingTable,
    /// Enclosing for-loop variables → value interval, for @bound emission.
    loop_env: BTreeMap<String, Interval>,
}

impl<'a> FnCompiler<'a> {
    fn fresh_label(&mut self, stem: &str) -> String {
        self.label_counter += 1;
        format!("{stem}{}", self.label_counter)
    }

    fn open_block(&mut self, label: String) {
        if !self.cur_instrs.is_empty() {
            let instrs = std::mem::take(&mut self.cur_instrs);
            self.blocks.push(BasicBlock {
                label: std::mem::replace(&mut self.cur_label, label),
                instructions: instrs,
                terminator: Terminator::Fallthrough,
            });
        } else {
            // Pending empty label: the old name aliases the upcoming block.
            // An empty `cur_label` means no block is open (just closed).
            let index = self.blocks.len();
            let old = std::mem::replace(&mut self.cur_label, label);
            if !old.is_empty() && old != self.cur_label && !old.starts_with(".dead") {
                self.label_aliases.insert(old, index);
            }
        }
        self.terminated = false;
    }

    fn close_block(&mut self, terminator: Terminator) {
        let instrs = std::mem::take(&mut self.cur_instrs);
        debug_assert!(!instrs.is_empty());
        let label = std::mem::take(&mut self.cur_label);
        self.blocks.push(BasicBlock {
            label,
            instructions: instrs,
            terminator,
        });
    }

    fn emit_full(
        &mut self,
        kind: InstrKind,
        bound: Option<LoopBound>,
        stmt: StmtId,
        role: MapRole,
        line: u32,
    ) {
        if self.terminated {
            return;
        }
        let index = self.cur_instrs.len();
        self.table.push(
            stmt,
            InstrRef {
                function: self.func.name.clone(),
                block: self.cur_label.clone(),
                index,
                role,
            },
        );
        let is_control = kind.is_control();
        let terminator = match &kind {
            InstrKind::Brt { .. } => Terminator::Branch,
            InstrKind::Jmp { .. } => Terminator::Jump,
            InstrKind::Ret => Terminator::Return,
            InstrKind::Halt => Terminator::Halt,
            _ => Terminator::Fallthrough,
        };
        self.cur_instrs.push(Instruction { kind, bound, line });
        if is_control {
            if terminator == Terminator::Return || terminator == Terminator::Halt {
                // Statement-level dead-code checks ran already; within a
                // block a Return simply ends the function's path.
                let dead = self.fresh_label(".dead");
                let instrs = std::mem::take(&mut self.cur_instrs);
                let label = std::mem::replace(&mut self.cur_label, dead);
                self.blocks.push(BasicBlock {
                    label,
                    instructions: instrs,
                    terminator,
                });
                self.terminated = true;
            } else {
                self.close_block(terminator);
            }
        }
    }

    fn emit(&mut self, kind: InstrKind, stmt: StmtId, role: MapRole, line: u32) {
        self.emit_full(kind, None, stmt, role, line);
    }

    fn alloc_temp(&mut self, line: u32) -> Result<Reg, HirError> {
        if self.temp_next as usize >= NUM_REGS {
            return Err(HirError::Compile(format!(
                "{}: line {line}: expression too deep (out of registers)",
                self.func.name
            )));
        }
        let r = Reg(self.temp_next);
        self.temp_next += 1;
        Ok(r)
    }

    fn free_if_temp(&mut self, r: Reg) {
        if r.0 >= self.temp_base {
            debug_assert_eq!(r.0 + 1, self.temp_next, "temps are freed LIFO");
            self.temp_next -= 1;
        }
    }

    fn array_base(&self, name: &str, line: u32) -> Result<u32, HirError> {
        self.arrays
            .bases
            .get(&(self.func.name.clone(), name.to_string()))
            .copied()
            .ok_or_else(|| {
                HirError::Compile(format!(
                    "{}: line {line}: unknown array '{name}'",
                    self.func.name
                ))
            })
    }

    /// Evaluates into a register: locals are returned in place, everything
    /// else lands in a fresh temp the caller must free.
    fn eval(
        &mut self,
        expr: &Expr,
        stmt: StmtId,
        role: MapRole,
        line: u32,
    ) -> Result<Reg, HirError> {
        match expr {
            Expr::Var(name) => Ok(self.locals[name.as_str()]),
            _ => {
                let t = self.alloc_temp(line)?;
                self.eval_into(expr, t, stmt, role, line)?;
                Ok(t)
            }
        }
    }

    fn eval_into(
        &mut self,
        expr: &Expr,
        target: Reg,
        stmt: StmtId,
        role: MapRole,
        line: u32,
    ) -> Result<(), HirError> {
        match expr {
            Expr::Const(v) => {
                self.emit(
                    InstrKind::Ldc {
                        dst: target,
                        imm: *v,
                    },
                    stmt,
                    role,
                    line,
                );
            }
            Expr::Var(name) => {
                let src = self.locals[name.as_str()];
                self.emit(
                    InstrKind::Alu {
                        op: AluOp::And,
                        dst: target,
                        a: src,
                        b: src,
                    },
                    stmt,
                    role,
                    line,
                );
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs, stmt, role, line)?;
                let r = self.eval(rhs, stmt, role, line)?;
                let alu = match op {
                    BinOp::Add => AluOp::Add,
                    BinOp::Sub => AluOp::Sub,
                    BinOp::Mul => AluOp::Mul,
                    BinOp::And => AluOp::And,
                    BinOp::Xor | BinOp::Ne => AluOp::Xor,
                    BinOp::Shl => AluOp::Shl,
                };
                self.emit(
                    InstrKind::Alu {
                        op: alu,
                        dst: target,
                        a: l,
                        b: r,
                    },
                    stmt,
                    role,
                    line,
                );
                self.free_if_temp(r);
                self.free_if_temp(l);
            }
            Expr::Index { array, index } => {
                let base = self.array_base(array, line)?;
                let addr = self.eval_address(base, index, stmt, role, line)?;
                self.emit(InstrKind::Ldw { dst: target, addr }, stmt, role, line);
                self.free_if_temp(addr);
            }
            Expr::Call { func, args } => {
                self.eval_call(func, args, stmt, role, line)?;
                if target != Reg(0) {
                    self.emit(
                        InstrKind::Alu {
                            op: AluOp::And,
                            dst: target,
                            a: Reg(0),
                            b: Reg(0),
                        },
                        stmt,
                        role,
                        line,
                    );
                }
            }
        }
        Ok(())
    }

    /// Leaves the call's return value in r0.
    fn eval_call(
        &mut self,
        callee: &str,
        args: &[Expr],
        stmt: StmtId,
        role: MapRole,
        line: u32,
    ) -> Result<(), HirError> {
        // Args go through temps (always above r0..r(k−1)), then move down.
        let mut temps = Vec::with_capacity(args.len());
        for a in args {
            let t = self.alloc_temp(line)?;
            self.eval_into(a, t, stmt, role, line)?;
            temps.push(t);
        }
        for (j, &t) in temps.iter().enumerate() {
            self.emit(
                InstrKind::Alu {
                    op: AluOp::And,
                    dst: Reg(j as u8),
                    a: t,
                    b: t,
                },
                stmt,
                role,
                line,
            );
        }
        self.emit(
            InstrKind::Call {
                target: callee.to_string(),
            },
            stmt,
            role,
            line,
        );
        for &t in temps.iter().rev() {
            self.free_if_temp(t);
        }
        Ok(())
    }

    /// Materializes `base + index` in a register.
    fn eval_address(
        &mut self,
        base: u32,
        index: &Expr,
        stmt: StmtId,
        role: MapRole,
        line: u32,
    ) -> Result<Reg, HirError> {
        let idx = self.eval(index, stmt, role, line)?;
        if idx.0 >= self.temp_base {
            let b = self.alloc_temp(line)?;
            self.emit(InstrKind::Ldc { dst: b, imm: base }, stmt, role, line);
            self.emit(
                InstrKind::Alu {
                    op: AluOp::Add,
                    dst: idx,
                    a: b,
                    b: idx,
                },
                stmt,
                role,
                line,
            );
            self.free_if_temp(b);
            Ok(idx)
        } else {
            let b = self.alloc_temp(line)?;
            self.emit(InstrKind::Ldc { dst: b, imm: base }, stmt, role, line);
            self.emit(
                InstrKind::Alu {
                    op: AluOp::Add,
                    dst: b,
                    a: b,
                    b: idx,
                },
                stmt,
                role,
                line,
            );
            Ok(b)
        }
    }

    fn compile_body(&mut self, body: &[Stmt]) -> Result<(), HirError> {
        for stmt in body {
            self.compile_stmt(stmt)?;
        }
        Ok(())
    }

    fn compile_stmt(&mut self, stmt: &Stmt) -> Result<(), HirError> {
        let line = stmt.line;
        let id = stmt.id;
        match &stmt.kind {
            StmtKind::ArrayDecl { .. } => {}
            StmtKind::Let { name, value } | StmtKind::Assign { name, value } => {
                let value = fold_expr(value);
                let dst = self.locals[name.as_str()];
                self.eval_into(&value, dst, id, MapRole::Body, line)?;
                self.loop_env.remove(name.as_str());
            }
            StmtKind::Store {
                array,
                index,
                value,
            } => {
                let (index, value) = (fold_expr(index), fold_expr(value));
                let tv = self.eval(&value, id, MapRole::Body, line)?;
                let base = self.array_base(array, line)?;
                let addr = self.eval_address(base, &index, id, MapRole::Body, line)?;
                self.emit(InstrKind::Stw { src: tv, addr }, id, MapRole::Body, line);
                self.free_if_temp(addr);
                self.free_if_temp(tv);
            }
            StmtKind::Return { value } => {
                if let Some(v) = value {
                    let v = fold_expr(v);
                    self.eval_into(&v, Reg(0), id, MapRole::Body, line)?;
                }
                self.emit(InstrKind::Ret, id, MapRole::Body, line);
            }
            StmtKind::ExprStmt { expr } => {
                let expr = fold_expr(expr);
                let r = self.eval(&expr, id, MapRole::Body, line)?;
                self.free_if_temp(r);
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let cond = fold_expr(cond);
                let then_label = self.fresh_label("then");
                let end_label = self.fresh_label("endif");
                let c = self.eval(&cond, id, MapRole::CondTest, line)?;
                self.free_if_temp(c);
                self.emit(
                    InstrKind::Brt {
                        cond: c,
                        target: then_label.clone(),
                    },
                    id,
                    MapRole::CondTest,
                    line,
                );
                let else_label = self.fresh_label("else");
                self.open_block(else_label);
                self.compile_body(else_body)?;
                let else_returns = self.terminated;
                if !self.terminated {
                    self.emit(
                        InstrKind::Jmp {
                            target: end_label.clone(),
                        },
                        id,
                        MapRole::CondJump,
                        line,
                    );
                }
                self.open_block(then_label);
                self.compile_body(then_body)?;
                let then_returns = self.terminated;
                self.open_block(end_label);
                // Both arms returned: the join label is unreachable and no
                // code (in particular no epilogue) may be emitted for it.
                if else_returns && then_returns {
                    self.terminated = true;
                }
            }
            StmtKind::For {
                var,
                from,
                to,
                body,
            } => {
                let (from, to) = (fold_expr(from), fold_expr(to));
                let head = self.fresh_label("head");
                let body_label = self.fresh_label("body");
                let exit = self.fresh_label("exit");
                let exit_jmp = self.fresh_label("break");

                let i_reg = self.locals[var.as_str()];
                self.eval_into(&from, i_reg, id, MapRole::LoopInit, line)?;

                // Trip-count annotation from interval arithmetic over the
                // size bindings and enclosing loop ranges. Anything the body
                // writes (including the loop variable itself) cannot be
                // trusted across iterations.
                let body_writes = super::assigned_vars(body);
                let intervals = if body_writes.contains(var) {
                    (None, None)
                } else {
                    (
                        interval_of(&from, &self.loop_env),
                        interval_of(&to, &self.loop_env),
                    )
                };
                let bound = match intervals {
                    (Some(a), Some(b)) => Some(LoopBound {
                        lower: (b.0 - a.1).max(0) as u64,
                        upper: (b.1 - a.0).max(0) as u64,
                    }),
                    _ => None,
                };
                let var_interval = match intervals {
                    (Some(a), Some(b)) => Some((a.0, (b.1 - 1).max(a.0))),
                    _ => None,
                };
                for w in &body_writes {
                    self.loop_env.remove(w);
                }

                self.open_block(head.clone());
                let t = self.eval(&to, id, MapRole::LoopTest, line)?;
                let cmp = if t.0 >= self.temp_base {
                    self.emit(
                        InstrKind::Alu {
                            op: AluOp::Xor,
                            dst: t,
                            a: i_reg,
                            b: t,
                        },
                        id,
                        MapRole::LoopTest,
                        line,
                    );
                    t
                } else {
                    let c = self.alloc_temp(line)?;
                    self.emit(
                        InstrKind::Alu {
                            op: AluOp::Xor,
                            dst: c,
                            a: i_reg,
                            b: t,
                        },
                        id,
                        MapRole::LoopTest,
                        line,
                    );
                    c
                };
                self.free_if_temp(cmp);
                self.emit(
                    InstrKind::Brt {
                        cond: cmp,
                        target: body_label.clone(),
                    },
                    id,
                    MapRole::LoopTest,
                    line,
                );
                self.open_block(exit_jmp);
                self.emit(
                    InstrKind::Jmp {
                        target: exit.clone(),
                    },
                    id,
                    MapRole::LoopExit,
                    line,
                );

                self.open_block(body_label);
                match var_interval {
                    Some(iv) => {
                        self.loop_env.insert(var.clone(), iv);
                    }
                    None => {
                        self.loop_env.remove(var.as_str());
                    }
                }
                self.compile_body(body)?;
                self.loop_env.remove(var.as_str());
                if !self.terminated {
                    let one = self.alloc_temp(line)?;
                    self.emit(
                        InstrKind::Ldc { dst: one, imm: 1 },
                        id,
                        MapRole::LoopStep,
                        line,
                    );
                    self.emit(
                        InstrKind::Alu {
                            op: AluOp::Add,
                            dst: i_reg,
                            a: i_reg,
                            b: one,
                        },
                        id,
                        MapRole::LoopStep,
                        line,
                    );
                    self.free_if_temp(one);
                    self.emit_full(
                        InstrKind::Jmp { target: head },
                        bound,
                        id,
                        MapRole::LoopBack,
                        line,
                    );
                }
                self.open_block(exit);
            }
            StmtKind::While {
                cond,
                bound_lo,
                bound_hi,
                body,
            } => {
                let cond = fold_expr(cond);
                for w in super::assigned_vars(body) {
                    self.loop_env.remove(&w);
                }
                let head = self.fresh_label("whead");
                let body_label = self.fresh_label("wbody");
                let exit = self.fresh_label("wexit");
                let exit_jmp = self.fresh_label("wbreak");

                self.open_block(head.clone());
                let c = self.eval(&cond, id, MapRole::LoopTest, line)?;
                self.free_if_temp(c);
                self.emit(
                    InstrKind::Brt {
                        cond: c,
                        target: body_label.clone(),
                    },
                    id,
                    MapRole::LoopTest,
                    line,
                );
                self.open_block(exit_jmp);
                self.emit(
                    InstrKind::Jmp {
                        target: exit.clone(),
                    },
                    id,
                    MapRole::LoopExit,
                    line,
                );

                self.open_block(body_label);
                self.compile_body(body)?;
                if !self.terminated {
                    self.emit_full(
                        InstrKind::Jmp { target: head },
                        Some(LoopBound {
                            lower: *bound_lo,
                            upper: *bound_hi,
                        }),
                        id,
                        MapRole::LoopBack,
                        line,
                    );
                }
                self.open_block(exit);
            }
        }
        Ok(())
    }
}

/// Locals live strictly above the argument staging area r0..r(A−1), where A
/// is the largest arity in the program: RET restores the caller's registers
/// as of the CALL, so anything staged into low registers must never alias a
/// live local.
fn collect_locals(func: &HirFunction, locals_base: u8) -> Result<BTreeMap<String, Reg>, HirError> {
    let mut locals = BTreeMap::new();
    let mut order: Vec<String> = func.params.clone();
    super::visit_stmts(&func.body, &mut |stmt| match &stmt.kind {
        StmtKind::Let { name, .. } if !order.contains(name) => order.push(name.clone()),
        StmtKind::For { var, .. } if !order.contains(var) => order.push(var.clone()),
        _ => {}
    });
    // At least three registers must remain for expression temporaries.
    if locals_base as usize + order.len() + 3 > NUM_REGS {
        return Err(HirError::Compile(format!(
            "{}: too many locals ({}) for the register file",
            func.name,
            order.len()
        )));
    }
    for (i, name) in order.iter().enumerate() {
        locals.insert(name.clone(), Reg(locals_base + i as u8));
    }
    Ok(locals)
}

/// Compiles a checked program to EIR. `sizes` binds size parameters so loop
/// trip counts can be annotated; loops whose trips stay symbolic are left
/// unannotated (they simulate fine but reject static bounding).
pub fn compile(
    hir: &HirProgram,
    sizes: &SizeBindings,
) -> Result<(Program, MappingTable), HirError> {
    let arrays = layout_arrays(hir);
    let max_arity = hir
        .functions
        .iter()
        .map(|f| f.params.len())
        .max()
        .unwrap_or(0) as u8;
    let locals_base = max_arity.max(1);
    let mut table = MappingTable::default();
    let mut functions = Vec::new();
    for func in &hir.functions {
        let locals = collect_locals(func, locals_base)?;
        let temp_base = locals_base + locals.len() as u8;
        let mut loop_env: BTreeMap<String, Interval> = BTreeMap::new();
        for p in &func.params {
            if let Some(&v) = sizes.get(p) {
                loop_env.insert(p.clone(), (v as i128, v as i128));
            }
        }
        let mut fc = FnCompiler {
            func,
            arrays: &arrays,
            blocks: Vec::new(),
            label_aliases: BTreeMap::new(),
            cur_label: func.name.clone(),
            cur_instrs: Vec::new(),
            terminated: false,
            label_counter: 0,
            locals,
            temp_base,
            temp_next: temp_base,
            table: &mut table,
            loop_env,
        };
        // Prologue: move params from the staging area into their local
        // slots (destinations sit strictly above every source).
        for (i, p) in func.params.iter().enumerate() {
            let src = Reg(i as u8);
            let dst = fc.locals[p.as_str()];
            fc.emit(
                InstrKind::Alu {
                    op: AluOp::And,
                    dst,
                    a: src,
                    b: src,
                },
                func.pseudo_stmt,
                MapRole::Prologue,
                0,
            );
        }
        fc.compile_body(&func.body)?;
        // Implicit return for functions that fall off the end (or for
        // unreachable join labels, which still need a well-formed block).
        if !fc.terminated {
            fc.emit(InstrKind::Ret, func.pseudo_stmt, MapRole::Epilogue, 0);
        }
        debug_assert!(fc.cur_instrs.is_empty());
        functions.push(Function {
            name: func.name.clone(),
            params: (0..func.params.len() as u8).map(Reg).collect(),
            blocks: fc.blocks,
            label_aliases: fc.label_aliases,
        });
    }
    let meta = ProgramMeta {
        mem_words: if arrays.total > 0 {
            Some(arrays.total as usize)
        } else {
            None
        },
        input_domains: Vec::new(),
    };
    let program = Program {
        functions,
        entry: hir.entry.clone(),
        meta,
    };
    verify_mapping(&program, &table)?;
    Ok((program, table))
}
