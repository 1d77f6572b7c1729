//! Closed-form energy cost functions over input-size parameters.
//!
//! Cost relations are extracted from the structured source with the
//! role-split lifted costs, one per function: either a straight-line term
//! tree (constants, bounded summations, branch envelopes, calls) or a linear
//! self-recurrence C(n) = C(n−k) + p(n). Solving eliminates summations by
//! Faulhaber symbolic summation and unfolds step-1 recurrences into sums;
//! results are polynomials with exact rational coefficients, in upper and
//! lower variants (branches take coefficient-wise envelopes, `while` loops
//! use their annotated iteration range).

mod poly;

pub use poly::{graded_lex_terms, sum_over_range, Monomial, Poly, Rat};

use crate::energy::Energy;
use crate::hir::{
    BinOp, Expr, HirCosts, HirError, HirFunction, HirProgram, MapRole, Stmt, StmtKind,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("unsupported for cost relations: {0}")]
    Unsupported(String),
    #[error("non-polynomial result class: {0}")]
    NonPolynomial(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error(transparent)]
    Hir(#[from] HirError),
}

/// One side of a cost relation: a tree of exactly-accounted energies.
#[derive(Clone, Debug)]
pub enum CostTerm {
    /// Polynomial energy in fJ over parameters and enclosing loop indices.
    Pol(Poly),
    Plus(Vec<CostTerm>),
    /// Σ_{index=from}^{to−1} body.
    Sum {
        index: String,
        from: Poly,
        to: Poly,
        body: Box<CostTerm>,
    },
    /// Branch arms; resolved by coefficient-wise envelope at solve time.
    Branch(Vec<CostTerm>),
    Call {
        callee: String,
        args: Vec<Poly>,
    },
}

#[derive(Clone, Debug)]
pub enum RelationBody {
    Straight,
    /// C(param) = C(param − step) + level(param) for param ≠ 0, else base.
    Recurrence {
        param: String,
        step: u64,
        base_upper: CostTerm,
        base_lower: CostTerm,
    },
}

/// Per-function cost relation; `upper`/`lower` are the straight cost (or the
/// recurrence level term when `body` is a recurrence).
#[derive(Clone, Debug)]
pub struct CostRelation {
    pub function: String,
    pub params: Vec<String>,
    pub upper: CostTerm,
    pub lower: CostTerm,
    pub body: RelationBody,
}

/// Solved closed form in fJ.
#[derive(Clone, Debug, PartialEq)]
pub struct CostFunction {
    pub function: String,
    pub params: Vec<String>,
    pub upper: Poly,
    pub lower: Poly,
}

impl CostFunction {
    pub fn degree(&self) -> u32 {
        self.upper.degree().max(self.lower.degree())
    }
}

// --- extraction --------------------------------------------------------------

struct Extractor<'a> {
    costs: &'a HirCosts,
}

fn poly_of_expr(expr: &Expr, scope: &BTreeSet<String>) -> Option<Poly> {
    match expr {
        Expr::Const(v) => Some(Poly::from_int(*v as i128)),
        Expr::Var(name) if scope.contains(name) => Some(Poly::var(name)),
        Expr::Binary { op, lhs, rhs } => {
            let (a, b) = (poly_of_expr(lhs, scope)?, poly_of_expr(rhs, scope)?);
            match op {
                BinOp::Add => Some(a.add(&b)),
                BinOp::Sub => Some(a.sub(&b)),
                BinOp::Mul => Some(a.mul(&b)),
                _ => None,
            }
        }
        _ => None,
    }
}

fn count_self_calls(body: &[Stmt], name: &str) -> usize {
    let mut calls = 0;
    crate::hir::visit_stmts(body, &mut |stmt| {
        let mut check = |e: &Expr| calls += self_calls_in_expr(e, name);
        match &stmt.kind {
            StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => check(value),
            StmtKind::Store { index, value, .. } => {
                check(index);
                check(value);
            }
            StmtKind::For { from, to, .. } => {
                check(from);
                check(to);
            }
            StmtKind::While { cond, .. } => check(cond),
            StmtKind::If { cond, .. } => check(cond),
            StmtKind::Return { value: Some(v) } => check(v),
            StmtKind::ExprStmt { expr } => check(expr),
            _ => {}
        }
    });
    calls
}

fn self_calls_in_expr(expr: &Expr, name: &str) -> usize {
    match expr {
        Expr::Call { func, args } => {
            let own = usize::from(func == name);
            own + args
                .iter()
                .map(|a| self_calls_in_expr(a, name))
                .sum::<usize>()
        }
        Expr::Binary { lhs, rhs, .. } => {
            self_calls_in_expr(lhs, name) + self_calls_in_expr(rhs, name)
        }
        Expr::Index { index, .. } => self_calls_in_expr(index, name),
        _ => 0,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    Upper,
    Lower,
}

impl<'a> Extractor<'a> {
    /// Cost of the calls inside an expression, optionally skipping the
    /// self-call of a recurrence (its cost is the recurrence itself).
    fn expr_calls(
        &self,
        expr: &Expr,
        scope: &BTreeSet<String>,
        func: &HirFunction,
        skip_self: bool,
        out: &mut Vec<CostTerm>,
    ) -> Result<(), ParamError> {
        match expr {
            Expr::Call { func: callee, args } => {
                for a in args {
                    self.expr_calls(a, scope, func, skip_self, out)?;
                }
                if skip_self && callee == &func.name {
                    return Ok(());
                }
                let mut arg_polys = Vec::with_capacity(args.len());
                for a in args {
                    arg_polys.push(poly_of_expr(a, scope).ok_or_else(|| {
                        ParamError::Unsupported(format!(
                            "argument of call to '{callee}' is not polynomial in the size parameters"
                        ))
                    })?);
                }
                out.push(CostTerm::Call {
                    callee: callee.clone(),
                    args: arg_polys,
                });
            }
            Expr::Binary { lhs, rhs, .. } => {
                self.expr_calls(lhs, scope, func, skip_self, out)?;
                self.expr_calls(rhs, scope, func, skip_self, out)?;
            }
            Expr::Index { index, .. } => {
                self.expr_calls(index, scope, func, skip_self, out)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn body_term(
        &self,
        func: &HirFunction,
        body: &[Stmt],
        scope: &BTreeSet<String>,
        variant: Variant,
        skip_self: bool,
    ) -> Result<CostTerm, ParamError> {
        let mut parts = Vec::new();
        for stmt in body {
            parts.push(self.stmt_term(func, stmt, scope, variant, skip_self)?);
        }
        Ok(CostTerm::Plus(parts))
    }

    fn stmt_term(
        &self,
        func: &HirFunction,
        stmt: &Stmt,
        scope: &BTreeSet<String>,
        variant: Variant,
        skip_self: bool,
    ) -> Result<CostTerm, ParamError> {
        let id = stmt.id;
        let own = |role_total: Energy| CostTerm::Pol(Poly::from_energy(role_total));
        match &stmt.kind {
            StmtKind::ArrayDecl { .. } => Ok(CostTerm::Plus(Vec::new())),
            StmtKind::Let { value, .. }
            | StmtKind::Assign { value, .. }
            | StmtKind::Return { value: Some(value) }
            | StmtKind::ExprStmt { expr: value } => {
                let mut parts = vec![own(self.costs.total_of(id))];
                self.expr_calls(value, scope, func, skip_self, &mut parts)?;
                Ok(CostTerm::Plus(parts))
            }
            StmtKind::Return { value: None } => Ok(own(self.costs.total_of(id))),
            StmtKind::Store { index, value, .. } => {
                let mut parts = vec![own(self.costs.total_of(id))];
                self.expr_calls(index, scope, func, skip_self, &mut parts)?;
                self.expr_calls(value, scope, func, skip_self, &mut parts)?;
                Ok(CostTerm::Plus(parts))
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let mut parts = vec![own(self.costs.total_of(id))];
                self.expr_calls(cond, scope, func, skip_self, &mut parts)?;
                let t = self.body_term(func, then_body, scope, variant, skip_self)?;
                let e = self.body_term(func, else_body, scope, variant, skip_self)?;
                parts.push(CostTerm::Branch(vec![t, e]));
                Ok(CostTerm::Plus(parts))
            }
            StmtKind::For {
                var,
                from,
                to,
                body,
            } => {
                if crate::hir::assigned_vars(body).contains(var) {
                    return Err(ParamError::Unsupported(format!(
                        "{}: line {}: loop body writes its own loop variable",
                        func.name, stmt.line
                    )));
                }
                let from_p = poly_of_expr(from, scope).ok_or_else(|| {
                    ParamError::Unsupported(format!(
                        "{}: line {}: loop bound is not polynomial in the parameters",
                        func.name, stmt.line
                    ))
                })?;
                let to_p = poly_of_expr(to, scope).ok_or_else(|| {
                    ParamError::Unsupported(format!(
                        "{}: line {}: loop bound is not polynomial in the parameters",
                        func.name, stmt.line
                    ))
                })?;
                let init = self.costs.role_of(id, MapRole::LoopInit);
                let test = self.costs.role_of(id, MapRole::LoopTest);
                let step = self.costs.role_of(id, MapRole::LoopStep);
                let back = self.costs.role_of(id, MapRole::LoopBack);
                let exit = self.costs.role_of(id, MapRole::LoopExit);

                let mut inner_scope = scope.clone();
                inner_scope.insert(var.clone());
                let body_t = self.body_term(func, body, &inner_scope, variant, skip_self)?;
                // Per entry: init + exit + one closing test, plus per
                // iteration one test, the step and the back jump. The bounds
                // are polynomial, so they cannot contain calls.
                let per_iter = CostTerm::Plus(vec![
                    CostTerm::Pol(Poly::from_energy(test + step + back)),
                    body_t,
                ]);
                let parts = vec![
                    own(init + test + exit),
                    CostTerm::Sum {
                        index: var.clone(),
                        from: from_p,
                        to: to_p,
                        body: Box::new(per_iter),
                    },
                ];
                Ok(CostTerm::Plus(parts))
            }
            StmtKind::While {
                cond,
                bound_lo,
                bound_hi,
                body,
            } => {
                let trips = match variant {
                    Variant::Upper => *bound_hi,
                    Variant::Lower => *bound_lo,
                } as i128;
                let test = self.costs.role_of(id, MapRole::LoopTest);
                let back = self.costs.role_of(id, MapRole::LoopBack);
                let exit = self.costs.role_of(id, MapRole::LoopExit);
                // The condition evaluates once per iteration plus the final
                // failing test, calls included.
                let mut parts = vec![own(test + exit)];
                self.expr_calls(cond, scope, func, skip_self, &mut parts)?;
                let body_t = self.body_term(func, body, scope, variant, skip_self)?;
                let mut per_iter_parts =
                    vec![CostTerm::Pol(Poly::from_energy(test + back)), body_t];
                self.expr_calls(cond, scope, func, skip_self, &mut per_iter_parts)?;
                parts.push(CostTerm::Sum {
                    index: format!("$w{id}"),
                    from: Poly::from_int(0),
                    to: Poly::from_int(trips),
                    body: Box::new(CostTerm::Plus(per_iter_parts)),
                });
                Ok(CostTerm::Plus(parts))
            }
        }
    }

    fn function_relation(&self, func: &HirFunction) -> Result<CostRelation, ParamError> {
        let scope: BTreeSet<String> = func.params.iter().cloned().collect();
        let pseudo = CostTerm::Pol(Poly::from_energy(self.costs.total_of(func.pseudo_stmt)));
        let self_calls = count_self_calls(&func.body, &func.name);
        if self_calls == 0 {
            let upper = CostTerm::Plus(vec![
                pseudo.clone(),
                self.body_term(func, &func.body, &scope, Variant::Upper, false)?,
            ]);
            let lower = CostTerm::Plus(vec![
                pseudo,
                self.body_term(func, &func.body, &scope, Variant::Lower, false)?,
            ]);
            return Ok(CostRelation {
                function: func.name.clone(),
                params: func.params.clone(),
                upper,
                lower,
                body: RelationBody::Straight,
            });
        }
        if self_calls > 1 {
            return Err(ParamError::Unsupported(format!(
                "'{}' makes {self_calls} self-calls; only single self-recursion is supported",
                func.name
            )));
        }
        self.recurrence_relation(func, &scope, pseudo)
    }

    /// Restricted self-recursion shape: a top-level `if cond-on-param` whose
    /// one branch contains the single self-call with argument `param − k` and
    /// whose other branch is the base case.
    fn recurrence_relation(
        &self,
        func: &HirFunction,
        scope: &BTreeSet<String>,
        pseudo: CostTerm,
    ) -> Result<CostRelation, ParamError> {
        let unsupported = |msg: &str| {
            Err(ParamError::Unsupported(format!(
                "'{}': {msg}; supported shape is `if p {{ ... f(p − k) ... }} else {{ ... }}`",
                func.name
            )))
        };
        let if_pos = func
            .body
            .iter()
            .position(|s| matches!(s.kind, StmtKind::If { .. }));
        let Some(if_pos) = if_pos else {
            return unsupported("the self-call is not guarded by a top-level if");
        };
        let StmtKind::If {
            cond,
            then_body,
            else_body,
        } = &func.body[if_pos].kind
        else {
            unreachable!()
        };
        let Expr::Var(param) = cond else {
            return unsupported("the recursion guard must be a bare parameter");
        };
        if !func.params.contains(param) {
            return unsupported("the recursion guard must be a parameter");
        }
        let prefix = &func.body[..if_pos];
        let suffix = &func.body[if_pos + 1..];
        for part in [prefix, suffix] {
            if part
                .iter()
                .any(|s| count_self_calls(std::slice::from_ref(s), &func.name) > 0)
            {
                return unsupported("the self-call must sit inside the guarded branch");
            }
        }
        let (rec_body, base_body) = if count_self_calls(then_body, &func.name) == 1 {
            (then_body, else_body)
        } else if count_self_calls(else_body, &func.name) == 1 {
            (else_body, then_body)
        } else {
            return unsupported("the self-call must sit inside one branch of the if");
        };

        // Step: the self-call argument must be `param − k`, other arguments
        // must pass their parameter through unchanged.
        let mut step: Option<u64> = None;
        let mut check_call = |args: &[Expr]| -> Result<(), ParamError> {
            for (arg, p) in args.iter().zip(&func.params) {
                if p == param {
                    let ok = match poly_of_expr(arg, scope) {
                        Some(poly) => {
                            let diff = Poly::var(param).sub(&poly);
                            // diff must be the positive constant k
                            diff.terms.len() == 1
                                && diff.terms.iter().all(|(m, c)| {
                                    m.0.is_empty() && c.is_integer() && c.is_positive() && {
                                        step = Some(c.numer().try_into().unwrap_or(u64::MAX));
                                        true
                                    }
                                })
                        }
                        None => false,
                    };
                    if !ok {
                        return Err(ParamError::Unsupported(format!(
                            "'{}': the self-call argument must be '{param} - k'",
                            func.name
                        )));
                    }
                } else if arg != &Expr::Var(p.clone()) {
                    return Err(ParamError::Unsupported(format!(
                        "'{}': non-recursion argument '{p}' must be passed through unchanged",
                        func.name
                    )));
                }
            }
            Ok(())
        };
        let mut found_err = None;
        crate::hir::visit_stmts(rec_body, &mut |stmt| {
            let mut scan = |e: &Expr| {
                scan_self_call(e, &func.name, &mut |args| {
                    if let Err(e) = check_call(args) {
                        found_err.get_or_insert(e);
                    }
                })
            };
            match &stmt.kind {
                StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => scan(value),
                StmtKind::Store { index, value, .. } => {
                    scan(index);
                    scan(value);
                }
                StmtKind::Return { value: Some(v) } => scan(v),
                StmtKind::ExprStmt { expr } => scan(expr),
                StmtKind::If { cond, .. } => scan(cond),
                StmtKind::While { cond, .. } => scan(cond),
                StmtKind::For { from, to, .. } => {
                    scan(from);
                    scan(to);
                }
                _ => {}
            }
        });
        if let Some(e) = found_err {
            return Err(e);
        }
        let step = step.expect("self-call argument checked");

        let if_glue = CostTerm::Pol(Poly::from_energy(self.costs.total_of(func.body[if_pos].id)));
        let mut level_parts_u = vec![pseudo.clone(), if_glue.clone()];
        let mut level_parts_l = level_parts_u.clone();
        let mut base_parts_u = vec![pseudo.clone(), if_glue.clone()];
        let mut base_parts_l = base_parts_u.clone();
        for part in [prefix, suffix] {
            level_parts_u.push(self.body_term(func, part, scope, Variant::Upper, true)?);
            level_parts_l.push(self.body_term(func, part, scope, Variant::Lower, true)?);
            base_parts_u.push(self.body_term(func, part, scope, Variant::Upper, false)?);
            base_parts_l.push(self.body_term(func, part, scope, Variant::Lower, false)?);
        }
        level_parts_u.push(self.body_term(func, rec_body, scope, Variant::Upper, true)?);
        level_parts_l.push(self.body_term(func, rec_body, scope, Variant::Lower, true)?);
        base_parts_u.push(self.body_term(func, base_body, scope, Variant::Upper, false)?);
        base_parts_l.push(self.body_term(func, base_body, scope, Variant::Lower, false)?);

        Ok(CostRelation {
            function: func.name.clone(),
            params: func.params.clone(),
            upper: CostTerm::Plus(level_parts_u),
            lower: CostTerm::Plus(level_parts_l),
            body: RelationBody::Recurrence {
                param: param.clone(),
                step,
                base_upper: CostTerm::Plus(base_parts_u),
                base_lower: CostTerm::Plus(base_parts_l),
            },
        })
    }
}

fn scan_self_call(expr: &Expr, name: &str, f: &mut impl FnMut(&[Expr])) {
    match expr {
        Expr::Call { func, args } => {
            if func == name {
                f(args);
            }
            for a in args {
                scan_self_call(a, name, f);
            }
        }
        Expr::Binary { lhs, rhs, .. } => {
            scan_self_call(lhs, name, f);
            scan_self_call(rhs, name, f);
        }
        Expr::Index { index, .. } => scan_self_call(index, name, f),
        _ => {}
    }
}

/// One relation per function: loop nests become bounded summations, a single
/// guarded self-call becomes a linear recurrence.
pub fn extract_relations(
    hir: &HirProgram,
    costs: &HirCosts,
) -> Result<Vec<CostRelation>, ParamError> {
    let ex = Extractor { costs };
    hir.functions
        .iter()
        .map(|f| ex.function_relation(f))
        .collect()
}

// --- solving -----------------------------------------------------------------

fn solve_term(
    term: &CostTerm,
    upper: bool,
    solved: &BTreeMap<String, CostFunction>,
) -> Result<Poly, ParamError> {
    match term {
        CostTerm::Pol(p) => Ok(p.clone()),
        CostTerm::Plus(parts) => {
            let mut out = Poly::zero();
            for p in parts {
                out = out.add(&solve_term(p, upper, solved)?);
            }
            Ok(out)
        }
        CostTerm::Sum {
            index,
            from,
            to,
            body,
        } => {
            let body = solve_term(body, upper, solved)?;
            Ok(sum_over_range(&body, index, from, to))
        }
        CostTerm::Branch(arms) => {
            let mut polys = Vec::with_capacity(arms.len());
            for a in arms {
                polys.push(solve_term(a, upper, solved)?);
            }
            let mut out = polys.pop().unwrap_or_else(Poly::zero);
            for p in polys {
                out = out.envelope(&p, upper);
            }
            Ok(out)
        }
        CostTerm::Call { callee, args } => {
            let cf = solved.get(callee).ok_or_else(|| {
                ParamError::Unsupported(format!(
                    "call to '{callee}' before its relation is solved (mutual recursion?)"
                ))
            })?;
            let mut poly = if upper {
                cf.upper.clone()
            } else {
                cf.lower.clone()
            };
            // Fresh names first so substitution cannot capture.
            for (i, p) in cf.params.iter().enumerate() {
                poly = poly.substitute(p, &Poly::var(&format!("$a{i}")));
            }
            for (i, arg) in args.iter().enumerate() {
                poly = poly.substitute(&format!("$a{i}"), arg);
            }
            Ok(poly)
        }
    }
}

/// Solves relations to closed-form polynomials, callees before callers.
pub fn solve(relations: &[CostRelation]) -> Result<Vec<CostFunction>, ParamError> {
    let mut solved: BTreeMap<String, CostFunction> = BTreeMap::new();
    let mut pending: Vec<&CostRelation> = relations.iter().collect();
    let mut out = Vec::new();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|rel| {
            let deps_ready = term_calls(&rel.upper)
                .into_iter()
                .chain(term_calls(&rel.lower))
                .all(|c| c == rel.function || solved.contains_key(&c));
            if !deps_ready {
                return true;
            }
            match solve_relation(rel, &solved) {
                Ok(cf) => {
                    solved.insert(rel.function.clone(), cf.clone());
                    out.push(Ok(cf));
                    false
                }
                Err(e) => {
                    out.push(Err(e));
                    false
                }
            }
        });
        if pending.len() == before {
            return Err(ParamError::Unsupported(
                "mutual recursion between functions is not supported".into(),
            ));
        }
    }
    out.into_iter().collect()
}

fn term_calls(term: &CostTerm) -> Vec<String> {
    match term {
        CostTerm::Call { callee, .. } => vec![callee.clone()],
        CostTerm::Plus(parts) | CostTerm::Branch(parts) => {
            parts.iter().flat_map(term_calls).collect()
        }
        CostTerm::Sum { body, .. } => term_calls(body),
        CostTerm::Pol(_) => Vec::new(),
    }
}

fn solve_relation(
    rel: &CostRelation,
    solved: &BTreeMap<String, CostFunction>,
) -> Result<CostFunction, ParamError> {
    match &rel.body {
        RelationBody::Straight => Ok(CostFunction {
            function: rel.function.clone(),
            params: rel.params.clone(),
            upper: solve_term(&rel.upper, true, solved)?,
            lower: solve_term(&rel.lower, false, solved)?,
        }),
        RelationBody::Recurrence {
            param,
            step,
            base_upper,
            base_lower,
        } => {
            if *step != 1 {
                return Err(ParamError::NonPolynomial(format!(
                    "'{}': recursion with step {step} has no polynomial closed form",
                    rel.function
                )));
            }
            let mut polys = Vec::new();
            for (level, base, upper) in [
                (&rel.upper, base_upper, true),
                (&rel.lower, base_lower, false),
            ] {
                let level = solve_term(level, upper, solved)?;
                let base = solve_term(base, upper, solved)?.substitute(param, &Poly::from_int(0));
                // C(n) = base(0) + Σ_{j=1}^{n} level(j)
                let sum = sum_over_range(
                    &level,
                    param,
                    &Poly::from_int(1),
                    &Poly::var(param).add(&Poly::from_int(1)),
                );
                polys.push(base.add(&sum));
            }
            let lower = polys.pop().unwrap();
            let upper = polys.pop().unwrap();
            Ok(CostFunction {
                function: rel.function.clone(),
                params: rel.params.clone(),
                upper,
                lower,
            })
        }
    }
}

/// Exact evaluation at non-negative integer parameter values, in fJ.
pub fn eval_cost(poly: &Poly, bindings: &BTreeMap<String, u64>) -> Result<Energy, ParamError> {
    let env: BTreeMap<String, i128> = bindings
        .iter()
        .map(|(k, &v)| (k.clone(), v as i128))
        .collect();
    let value = poly.eval(&env).map_err(ParamError::Eval)?;
    if value.is_negative() {
        return Err(ParamError::Eval(format!(
            "cost evaluated negative: {value}"
        )));
    }
    let (num, den) = (value.numer().clone(), value.denom().clone());
    let (q, r) = (num.clone() / den.clone(), num % den);
    if !r.is_zero() {
        return Err(ParamError::Eval(format!(
            "cost evaluated non-integral: {value} fJ"
        )));
    }
    let fj: u128 = q
        .try_into()
        .map_err(|_| ParamError::Eval("cost exceeds the energy range".into()))?;
    Ok(Energy::from_fj(fj))
}

/// Closed forms in canonical graded-lex order plus rational coefficients,
/// machine-readable.
pub fn cost_function_to_json(cf: &CostFunction) -> serde_json::Value {
    let side = |p: &Poly| -> serde_json::Value {
        let terms: Vec<serde_json::Value> = graded_lex_terms(p)
            .into_iter()
            .map(|(m, c)| {
                serde_json::json!({
                    "coeff_fj": rat_string(&c),
                    "monomial": m.0,
                })
            })
            .collect();
        serde_json::Value::Array(terms)
    };
    serde_json::json!({
        "function": cf.function,
        "params": cf.params,
        "degree": cf.degree(),
        "upper": side(&cf.upper),
        "lower": side(&cf.lower),
    })
}

fn rat_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Display helper: the closed form in pJ.
pub fn poly_in_pj(p: &Poly) -> Poly {
    p.scale(&BigRational::new(BigInt::one(), BigInt::from(1000)))
}
