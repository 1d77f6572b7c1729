//! Reference interpreter: the semantic oracle the compiler is tested against.
//!
//! Arrays are static per-function storage (matching the compiler's flat
//! allocation); scalars live in call frames. Out-of-range array indices are
//! errors here, so fixtures that pass interpretation stay inside their
//! declared regions when lowered onto the flat memory.

use super::{Expr, HirError, HirFunction, HirProgram, Stmt, StmtKind};
use std::collections::BTreeMap;

const CALL_DEPTH_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct InterpResult {
    pub ret: u32,
    /// "function.array" → final contents.
    pub arrays: BTreeMap<String, Vec<u32>>,
    pub steps: u64,
}

struct Interp<'p> {
    program: &'p HirProgram,
    arrays: BTreeMap<String, Vec<u32>>,
    fuel: u64,
    steps: u64,
}

enum Flow {
    Normal,
    Return(u32),
}

pub fn interpret(program: &HirProgram, args: &[u32], fuel: u64) -> Result<InterpResult, HirError> {
    let entry = program
        .function(&program.entry)
        .ok_or_else(|| HirError::Interp("missing entry".into()))?;
    if args.len() != entry.params.len() {
        return Err(HirError::Interp(format!(
            "entry '{}' takes {} argument(s), got {}",
            entry.name,
            entry.params.len(),
            args.len()
        )));
    }
    let mut interp = Interp {
        program,
        arrays: BTreeMap::new(),
        fuel,
        steps: 0,
    };
    // Pre-declare every array so results always list them.
    for f in &program.functions {
        super::visit_stmts(&f.body, &mut |stmt| {
            if let StmtKind::ArrayDecl { name, size } = &stmt.kind {
                interp
                    .arrays
                    .insert(format!("{}.{}", f.name, name), vec![0u32; *size as usize]);
            }
        });
    }
    let ret = interp.call(entry, args, 0)?;
    Ok(InterpResult {
        ret,
        arrays: interp.arrays,
        steps: interp.steps,
    })
}

impl<'p> Interp<'p> {
    fn call(&mut self, func: &HirFunction, args: &[u32], depth: usize) -> Result<u32, HirError> {
        if depth > CALL_DEPTH_LIMIT {
            return Err(HirError::Interp(format!(
                "call depth limit {CALL_DEPTH_LIMIT} exceeded in '{}'",
                func.name
            )));
        }
        let mut scalars: BTreeMap<String, u32> = func
            .params
            .iter()
            .cloned()
            .zip(args.iter().copied())
            .collect();
        match self.run_body(func, &func.body, &mut scalars, depth)? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(0),
        }
    }

    fn tick(&mut self, func: &HirFunction, line: u32) -> Result<(), HirError> {
        if self.steps >= self.fuel {
            return Err(HirError::Interp(format!(
                "fuel exhausted in '{}' near line {line}",
                func.name
            )));
        }
        self.steps += 1;
        Ok(())
    }

    fn run_body(
        &mut self,
        func: &HirFunction,
        body: &[Stmt],
        scalars: &mut BTreeMap<String, u32>,
        depth: usize,
    ) -> Result<Flow, HirError> {
        for stmt in body {
            self.tick(func, stmt.line)?;
            match &stmt.kind {
                StmtKind::Let { name, value } | StmtKind::Assign { name, value } => {
                    let v = self.eval(func, value, scalars, depth)?;
                    scalars.insert(name.clone(), v);
                }
                StmtKind::ArrayDecl { .. } => {}
                StmtKind::Store {
                    array,
                    index,
                    value,
                } => {
                    let i = self.eval(func, index, scalars, depth)?;
                    let v = self.eval(func, value, scalars, depth)?;
                    let key = format!("{}.{}", func.name, array);
                    let arr = self.arrays.get_mut(&key).expect("checked array");
                    if i as usize >= arr.len() {
                        return Err(HirError::Interp(format!(
                            "'{array}[{i}]' out of range (size {}) at line {}",
                            arr.len(),
                            stmt.line
                        )));
                    }
                    arr[i as usize] = v;
                }
                StmtKind::For {
                    var,
                    from,
                    to,
                    body,
                } => {
                    let a = self.eval(func, from, scalars, depth)?;
                    let b = self.eval(func, to, scalars, depth)?;
                    let mut i = a;
                    while i != b {
                        self.tick(func, stmt.line)?;
                        scalars.insert(var.clone(), i);
                        match self.run_body(func, body, scalars, depth)? {
                            Flow::Normal => {}
                            ret => return Ok(ret),
                        }
                        i = i.wrapping_add(1);
                    }
                    scalars.insert(var.clone(), b);
                }
                StmtKind::While { cond, body, .. } => {
                    while self.eval(func, cond, scalars, depth)? != 0 {
                        self.tick(func, stmt.line)?;
                        match self.run_body(func, body, scalars, depth)? {
                            Flow::Normal => {}
                            ret => return Ok(ret),
                        }
                    }
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let c = self.eval(func, cond, scalars, depth)?;
                    let branch = if c != 0 { then_body } else { else_body };
                    match self.run_body(func, branch, scalars, depth)? {
                        Flow::Normal => {}
                        ret => return Ok(ret),
                    }
                }
                StmtKind::Return { value } => {
                    let v = match value {
                        Some(e) => self.eval(func, e, scalars, depth)?,
                        None => 0,
                    };
                    return Ok(Flow::Return(v));
                }
                StmtKind::ExprStmt { expr } => {
                    self.eval(func, expr, scalars, depth)?;
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn eval(
        &mut self,
        func: &HirFunction,
        expr: &Expr,
        scalars: &BTreeMap<String, u32>,
        depth: usize,
    ) -> Result<u32, HirError> {
        match expr {
            Expr::Const(v) => Ok(*v),
            Expr::Var(name) => scalars
                .get(name)
                .copied()
                .ok_or_else(|| HirError::Interp(format!("uninitialised '{name}'"))),
            Expr::Index { array, index } => {
                let i = self.eval(func, index, scalars, depth)?;
                let key = format!("{}.{}", func.name, array);
                let arr = &self.arrays[&key];
                if i as usize >= arr.len() {
                    return Err(HirError::Interp(format!(
                        "'{array}[{i}]' out of range (size {})",
                        arr.len()
                    )));
                }
                Ok(arr[i as usize])
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.eval(func, lhs, scalars, depth)?;
                let b = self.eval(func, rhs, scalars, depth)?;
                Ok(op.apply(a, b))
            }
            Expr::Call { func: callee, args } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(func, a, scalars, depth)?);
                }
                let callee = self.program.function(callee).expect("checked call target");
                self.call(callee, &values, depth + 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_hir;
    use super::*;

    #[test]
    fn evaluates_arithmetic_and_loops() {
        let p =
            parse_hir("fn main(n) { let s = 0; for i in 0..n { s = s + i; } return s; }").unwrap();
        let r = interpret(&p, &[10], 10_000).unwrap();
        assert_eq!(r.ret, 45);
    }

    #[test]
    fn arrays_are_static_and_reported() {
        let p = parse_hir("fn main() { array a[4]; for i in 0..4 { a[i] = i * i; } return a[3]; }")
            .unwrap();
        let r = interpret(&p, &[], 10_000).unwrap();
        assert_eq!(r.ret, 9);
        assert_eq!(r.arrays["main.a"], vec![0, 1, 4, 9]);
    }

    #[test]
    fn recursion_works() {
        let p = parse_hir(
            "fn sum(n) { if n { let r = sum(n - 1); return r + n; } else { return 0; } }",
        )
        .unwrap();
        assert_eq!(interpret(&p, &[5], 10_000).unwrap().ret, 15);
    }

    #[test]
    fn out_of_range_store_is_an_error() {
        let p = parse_hir("fn main() { array a[2]; a[5] = 1; }").unwrap();
        assert!(interpret(&p, &[], 100).is_err());
    }
}
