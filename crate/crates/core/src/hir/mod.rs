//! A small structured integer language and its lowering to EIR.
//!
//! Functions take word-sized scalar parameters, declare scalars and
//! fixed-size arrays, and use `for` loops with affine bounds, bounded `while`
//! loops, `if`/`else` and calls. The compiler emits EIR together with a
//! statement↔instruction mapping table whose entries carry a structural role
//! (loop init/test/step, branch glue, ...), which is what lets source-level
//! analyses account for glue without re-deriving the lowering.

mod compile;
mod interp;
mod lift;
mod parse;

pub use compile::{compile, verify_mapping, InstrRef, MapRole, MappingTable};
pub use interp::{interpret, InterpResult};
pub use lift::{hir_wcec, lift_model, HirCosts, SizeBindings};
pub use parse::parse_hir;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HirError {
    #[error("line {line}, col {col}: {msg}")]
    Parse { line: u32, col: u32, msg: String },
    #[error("{0}")]
    Type(String),
    #[error("{0}")]
    Compile(String),
    #[error("interpreter: {0}")]
    Interp(String),
    #[error("not analysable: {0}")]
    Unanalysable(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

pub type StmtId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct HirProgram {
    pub functions: Vec<HirFunction>,
    pub entry: String,
}

impl HirProgram {
    pub fn function(&self, name: &str) -> Option<&HirFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HirFunction {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    /// Statement id owning compiler glue that belongs to no source statement
    /// (prologue moves, the implicit return).
    pub pseudo_stmt: StmtId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub line: u32,
    pub kind: StmtKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Let {
        name: String,
        value: Expr,
    },
    Assign {
        name: String,
        value: Expr,
    },
    ArrayDecl {
        name: String,
        size: u32,
    },
    Store {
        array: String,
        index: Expr,
        value: Expr,
    },
    For {
        var: String,
        from: Expr,
        to: Expr,
        body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        bound_lo: u64,
        bound_hi: u64,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    Return {
        value: Option<Expr>,
    },
    ExprStmt {
        expr: Expr,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(u32),
    Var(String),
    Index {
        array: String,
        index: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: String,
        args: Vec<Expr>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Xor,
    Shl,
    /// Nonzero iff the operands differ; lowers to XOR.
    Ne,
}

impl BinOp {
    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::And => a & b,
            BinOp::Xor | BinOp::Ne => a ^ b,
            BinOp::Shl => a.wrapping_shl(b & 31),
        }
    }
}

/// Bottom-up constant folding, the compiler's one optimisation.
pub fn fold_expr(expr: &Expr) -> Expr {
    match expr {
        Expr::Binary { op, lhs, rhs } => {
            let (l, r) = (fold_expr(lhs), fold_expr(rhs));
            if let (Expr::Const(a), Expr::Const(b)) = (&l, &r) {
                Expr::Const(op.apply(*a, *b))
            } else {
                Expr::Binary {
                    op: *op,
                    lhs: Box::new(l),
                    rhs: Box::new(r),
                }
            }
        }
        Expr::Index { array, index } => Expr::Index {
            array: array.clone(),
            index: Box::new(fold_expr(index)),
        },
        Expr::Call { func, args } => Expr::Call {
            func: func.clone(),
            args: args.iter().map(fold_expr).collect(),
        },
        other => other.clone(),
    }
}

/// Walks every statement in the body, depth first.
pub fn visit_stmts<'a>(body: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for stmt in body {
        f(stmt);
        match &stmt.kind {
            StmtKind::For { body, .. } | StmtKind::While { body, .. } => visit_stmts(body, f),
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                visit_stmts(then_body, f);
                visit_stmts(else_body, f);
            }
            _ => {}
        }
    }
}

/// Names written anywhere in the body (assignments, lets and loop variables).
/// Loop-bound reasoning must not trust intervals of anything in this set.
pub(crate) fn assigned_vars(body: &[Stmt]) -> std::collections::BTreeSet<String> {
    let mut out = std::collections::BTreeSet::new();
    visit_stmts(body, &mut |stmt| match &stmt.kind {
        StmtKind::Let { name, .. } | StmtKind::Assign { name, .. } => {
            out.insert(name.clone());
        }
        StmtKind::For { var, .. } => {
            out.insert(var.clone());
        }
        _ => {}
    });
    out
}
