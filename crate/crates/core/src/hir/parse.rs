//! Recursive-descent parser and scope checker for the structured language.
//!
//! Grammar sketch (full EBNF in `docs/hir.md`):
//!   fn name(a, b) { ... }
//!   let x = expr;   array buf[64];   x = expr;   buf[expr] = expr;
//!   for i in lo..hi { ... }   while expr @bound lo..hi { ... }
//!   if expr { ... } else { ... }   return expr;   f(args);
//! Operators by loosening precedence: `*`, `+ -`, `<<`, `& ^`, `!=`.

use super::{BinOp, Expr, HirError, HirFunction, HirProgram, Stmt, StmtId, StmtKind};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(u32),
    Punct(&'static str),
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn next_token(&mut self) -> Result<Token, HirError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let make = |tok| Ok(Token { tok, line, col });
        let Some(c) = self.peek() else {
            return make(Tok::Eof);
        };
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
            {
                self.bump();
            }
            let s = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .to_string();
            return make(Tok::Ident(s));
        }
        if c.is_ascii_digit() {
            let start = self.pos;
            let hex = c == b'0' && matches!(self.peek2(), Some(b'x') | Some(b'X'));
            if hex {
                self.bump();
                self.bump();
            }
            while self.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
                self.bump();
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let value = if hex {
                u32::from_str_radix(&text[2..], 16)
            } else {
                text.parse::<u32>()
            };
            return match value {
                Ok(v) => make(Tok::Int(v)),
                Err(_) => Err(HirError::Parse {
                    line,
                    col,
                    msg: format!("bad integer literal '{text}'"),
                }),
            };
        }
        // Multi-character punctuation first.
        for p in ["!=", "<<", "..", "@bound"] {
            if self.src[self.pos..].starts_with(p.as_bytes()) {
                for _ in 0..p.len() {
                    self.bump();
                }
                return make(Tok::Punct(p));
            }
        }
        for p in [
            "(", ")", "{", "}", "[", "]", ",", ";", "=", "+", "-", "*", "&", "^",
        ] {
            if self.src[self.pos..].starts_with(p.as_bytes()) {
                self.bump();
                return make(Tok::Punct(p));
            }
        }
        Err(HirError::Parse {
            line,
            col,
            msg: format!("unexpected character '{}'", c as char),
        })
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    next_id: StmtId,
}

impl Parser {
    fn cur(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, HirError> {
        let t = self.cur();
        Err(HirError::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn bump(&mut self) -> &Tok {
        let t = &self.tokens[self.pos].tok;
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_punct(&mut self, p: &'static str) -> Result<(), HirError> {
        if self.cur().tok == Tok::Punct(p) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{p}'"))
        }
    }

    fn eat_ident(&mut self) -> Result<String, HirError> {
        match &self.cur().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn eat_int(&mut self) -> Result<u32, HirError> {
        match self.cur().tok {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.err("expected integer"),
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(&self.cur().tok, Tok::Ident(s) if s == kw)
    }

    fn fresh_id(&mut self) -> StmtId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn parse_program(&mut self) -> Result<HirProgram, HirError> {
        let mut functions = Vec::new();
        while self.cur().tok != Tok::Eof {
            if !self.keyword("fn") {
                return self.err("expected 'fn'");
            }
            self.bump();
            let name = self.eat_ident()?;
            self.eat_punct("(")?;
            let mut params = Vec::new();
            if self.cur().tok != Tok::Punct(")") {
                loop {
                    params.push(self.eat_ident()?);
                    if self.cur().tok == Tok::Punct(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.eat_punct(")")?;
            let body = self.parse_block()?;
            let pseudo_stmt = self.fresh_id();
            functions.push(HirFunction {
                name,
                params,
                body,
                pseudo_stmt,
            });
        }
        if functions.is_empty() {
            return self.err("program has no functions");
        }
        let entry = if functions.iter().any(|f| f.name == "main") {
            "main".to_string()
        } else {
            functions[0].name.clone()
        };
        Ok(HirProgram { functions, entry })
    }

    fn parse_block(&mut self) -> Result<Vec<Stmt>, HirError> {
        self.eat_punct("{")?;
        let mut stmts = Vec::new();
        while self.cur().tok != Tok::Punct("}") {
            stmts.push(self.parse_stmt()?);
        }
        self.eat_punct("}")?;
        Ok(stmts)
    }

    fn parse_stmt(&mut self) -> Result<Stmt, HirError> {
        let line = self.cur().line;
        let id = self.fresh_id();
        let kind = if self.keyword("let") {
            self.bump();
            let name = self.eat_ident()?;
            self.eat_punct("=")?;
            let value = self.parse_expr()?;
            self.eat_punct(";")?;
            StmtKind::Let { name, value }
        } else if self.keyword("array") {
            self.bump();
            let name = self.eat_ident()?;
            self.eat_punct("[")?;
            let size = self.eat_int()?;
            self.eat_punct("]")?;
            self.eat_punct(";")?;
            StmtKind::ArrayDecl { name, size }
        } else if self.keyword("for") {
            self.bump();
            let var = self.eat_ident()?;
            if !self.keyword("in") {
                return self.err("expected 'in'");
            }
            self.bump();
            let from = self.parse_expr()?;
            self.eat_punct("..")?;
            let to = self.parse_expr()?;
            let body = self.parse_block()?;
            StmtKind::For {
                var,
                from,
                to,
                body,
            }
        } else if self.keyword("while") {
            self.bump();
            let cond = self.parse_expr()?;
            self.eat_punct("@bound")?;
            let first = self.eat_int()? as u64;
            let (bound_lo, bound_hi) = if self.cur().tok == Tok::Punct("..") {
                self.bump();
                (first, self.eat_int()? as u64)
            } else {
                (0, first)
            };
            if bound_lo > bound_hi {
                return self.err("@bound lower exceeds upper");
            }
            let body = self.parse_block()?;
            StmtKind::While {
                cond,
                bound_lo,
                bound_hi,
                body,
            }
        } else if self.keyword("if") {
            self.bump();
            let cond = self.parse_expr()?;
            let then_body = self.parse_block()?;
            let else_body = if self.keyword("else") {
                self.bump();
                self.parse_block()?
            } else {
                Vec::new()
            };
            StmtKind::If {
                cond,
                then_body,
                else_body,
            }
        } else if self.keyword("return") {
            self.bump();
            let value = if self.cur().tok == Tok::Punct(";") {
                None
            } else {
                Some(self.parse_expr()?)
            };
            self.eat_punct(";")?;
            StmtKind::Return { value }
        } else {
            // assignment, array store, or expression statement
            if let Tok::Ident(name) = self.cur().tok.clone() {
                match self.tokens.get(self.pos + 1).map(|t| &t.tok) {
                    Some(Tok::Punct("=")) => {
                        self.bump();
                        self.bump();
                        let value = self.parse_expr()?;
                        self.eat_punct(";")?;
                        let kind = StmtKind::Assign { name, value };
                        return Ok(Stmt { id, line, kind });
                    }
                    Some(Tok::Punct("[")) => {
                        // Could be a store `a[i] = v;` or an expression
                        // statement reading `a[i];` — scan for `] =`.
                        let save = self.pos;
                        self.bump();
                        self.bump();
                        let index = self.parse_expr()?;
                        if self.cur().tok == Tok::Punct("]")
                            && self.tokens.get(self.pos + 1).map(|t| &t.tok)
                                == Some(&Tok::Punct("="))
                        {
                            self.bump();
                            self.bump();
                            let value = self.parse_expr()?;
                            self.eat_punct(";")?;
                            let kind = StmtKind::Store {
                                array: name,
                                index,
                                value,
                            };
                            return Ok(Stmt { id, line, kind });
                        }
                        self.pos = save;
                    }
                    _ => {}
                }
            }
            let expr = self.parse_expr()?;
            self.eat_punct(";")?;
            StmtKind::ExprStmt { expr }
        };
        Ok(Stmt { id, line, kind })
    }

    fn parse_expr(&mut self) -> Result<Expr, HirError> {
        self.parse_binary(0)
    }

    fn parse_binary(&mut self, level: usize) -> Result<Expr, HirError> {
        const LEVELS: [&[(&str, BinOp)]; 4] = [
            &[("!=", BinOp::Ne)],
            &[("&", BinOp::And), ("^", BinOp::Xor)],
            &[("<<", BinOp::Shl)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
        ];
        if level == LEVELS.len() {
            return self.parse_product();
        }
        let mut lhs = self.parse_binary(level + 1)?;
        loop {
            let mut matched = None;
            for &(p, op) in LEVELS[level] {
                if self.cur().tok == Tok::Punct(p) {
                    matched = Some(op);
                    break;
                }
            }
            let Some(op) = matched else { break };
            self.bump();
            let rhs = self.parse_binary(level + 1)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_product(&mut self) -> Result<Expr, HirError> {
        let mut lhs = self.parse_primary()?;
        while self.cur().tok == Tok::Punct("*") {
            self.bump();
            let rhs = self.parse_primary()?;
            lhs = Expr::Binary {
                op: BinOp::Mul,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_primary(&mut self) -> Result<Expr, HirError> {
        match self.cur().tok.clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.parse_expr()?;
                self.eat_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                match self.cur().tok {
                    Tok::Punct("(") => {
                        self.bump();
                        let mut args = Vec::new();
                        if self.cur().tok != Tok::Punct(")") {
                            loop {
                                args.push(self.parse_expr()?);
                                if self.cur().tok == Tok::Punct(",") {
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                        }
                        self.eat_punct(")")?;
                        Ok(Expr::Call { func: name, args })
                    }
                    Tok::Punct("[") => {
                        self.bump();
                        let index = self.parse_expr()?;
                        self.eat_punct("]")?;
                        Ok(Expr::Index {
                            array: name,
                            index: Box::new(index),
                        })
                    }
                    _ => Ok(Expr::Var(name)),
                }
            }
            _ => self.err("expected expression"),
        }
    }
}

/// Parses and scope-checks a program.
pub fn parse_hir(text: &str) -> Result<HirProgram, HirError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let t = lexer.next_token()?;
        let eof = t.tok == Tok::Eof;
        tokens.push(t);
        if eof {
            break;
        }
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        next_id: 0,
    };
    let program = parser.parse_program()?;
    check(&program)?;
    Ok(program)
}

#[derive(Clone, Copy, PartialEq)]
enum NameKind {
    Scalar,
    Array,
}

struct Scope {
    names: BTreeMap<String, NameKind>,
}

fn check(program: &HirProgram) -> Result<(), HirError> {
    let mut arities = BTreeMap::new();
    for f in &program.functions {
        if arities.insert(f.name.clone(), f.params.len()).is_some() {
            return Err(HirError::Type(format!("duplicate function '{}'", f.name)));
        }
    }
    for f in &program.functions {
        let mut scope = Scope {
            names: BTreeMap::new(),
        };
        for p in &f.params {
            if scope.names.insert(p.clone(), NameKind::Scalar).is_some() {
                return Err(HirError::Type(format!(
                    "{}: duplicate parameter '{p}'",
                    f.name
                )));
            }
        }
        check_body(&f.body, &mut scope, &arities, &f.name)?;
    }
    Ok(())
}

fn check_body(
    body: &[Stmt],
    scope: &mut Scope,
    arities: &BTreeMap<String, usize>,
    func: &str,
) -> Result<(), HirError> {
    for (i, stmt) in body.iter().enumerate() {
        if i > 0 {
            if let StmtKind::Return { .. } = body[i - 1].kind {
                return Err(HirError::Type(format!(
                    "{func}: line {}: unreachable statement after return",
                    stmt.line
                )));
            }
        }
        match &stmt.kind {
            StmtKind::Let { name, value } => {
                check_expr(value, scope, arities, func, stmt.line)?;
                if scope.names.insert(name.clone(), NameKind::Scalar) == Some(NameKind::Array) {
                    return Err(HirError::Type(format!(
                        "{func}: line {}: '{name}' is already an array",
                        stmt.line
                    )));
                }
            }
            StmtKind::ArrayDecl { name, size } => {
                if *size == 0 {
                    return Err(HirError::Type(format!(
                        "{func}: line {}: array '{name}' has zero size",
                        stmt.line
                    )));
                }
                if scope.names.insert(name.clone(), NameKind::Array).is_some() {
                    return Err(HirError::Type(format!(
                        "{func}: line {}: duplicate declaration '{name}'",
                        stmt.line
                    )));
                }
            }
            StmtKind::Assign { name, value } => {
                check_expr(value, scope, arities, func, stmt.line)?;
                expect_kind(scope, name, NameKind::Scalar, func, stmt.line)?;
            }
            StmtKind::Store {
                array,
                index,
                value,
            } => {
                check_expr(index, scope, arities, func, stmt.line)?;
                check_expr(value, scope, arities, func, stmt.line)?;
                expect_kind(scope, array, NameKind::Array, func, stmt.line)?;
            }
            StmtKind::For {
                var,
                from,
                to,
                body,
            } => {
                check_expr(from, scope, arities, func, stmt.line)?;
                check_expr(to, scope, arities, func, stmt.line)?;
                if scope.names.insert(var.clone(), NameKind::Scalar) == Some(NameKind::Array) {
                    return Err(HirError::Type(format!(
                        "{func}: line {}: loop variable '{var}' is an array",
                        stmt.line
                    )));
                }
                check_body(body, scope, arities, func)?;
            }
            StmtKind::While { cond, body, .. } => {
                check_expr(cond, scope, arities, func, stmt.line)?;
                check_body(body, scope, arities, func)?;
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                check_expr(cond, scope, arities, func, stmt.line)?;
                check_body(then_body, scope, arities, func)?;
                check_body(else_body, scope, arities, func)?;
            }
            StmtKind::Return { value } => {
                if let Some(v) = value {
                    check_expr(v, scope, arities, func, stmt.line)?;
                }
            }
            StmtKind::ExprStmt { expr } => {
                check_expr(expr, scope, arities, func, stmt.line)?;
            }
        }
    }
    Ok(())
}

fn expect_kind(
    scope: &Scope,
    name: &str,
    want: NameKind,
    func: &str,
    line: u32,
) -> Result<(), HirError> {
    match scope.names.get(name) {
        Some(&k) if k == want => Ok(()),
        Some(_) => Err(HirError::Type(format!(
            "{func}: line {line}: '{name}' used with the wrong kind"
        ))),
        None => Err(HirError::Type(format!(
            "{func}: line {line}: undeclared '{name}'"
        ))),
    }
}

fn check_expr(
    expr: &Expr,
    scope: &Scope,
    arities: &BTreeMap<String, usize>,
    func: &str,
    line: u32,
) -> Result<(), HirError> {
    match expr {
        Expr::Const(_) => Ok(()),
        Expr::Var(name) => expect_kind(scope, name, NameKind::Scalar, func, line),
        Expr::Index { array, index } => {
            expect_kind(scope, array, NameKind::Array, func, line)?;
            check_expr(index, scope, arities, func, line)
        }
        Expr::Binary { lhs, rhs, .. } => {
            check_expr(lhs, scope, arities, func, line)?;
            check_expr(rhs, scope, arities, func, line)
        }
        Expr::Call { func: callee, args } => {
            match arities.get(callee) {
                None => {
                    return Err(HirError::Type(format!(
                        "{func}: line {line}: call to unknown function '{callee}'"
                    )))
                }
                Some(&n) if n != args.len() => {
                    return Err(HirError::Type(format!(
                        "{func}: line {line}: '{callee}' takes {n} argument(s), got {}",
                        args.len()
                    )))
                }
                _ => {}
            }
            for a in args {
                check_expr(a, scope, arities, func, line)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_simple_function() {
        let p = parse_hir("fn add2(a, b) { return a + b; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].params, vec!["a", "b"]);
        assert_eq!(p.entry, "add2");
    }

    #[test]
    fn undeclared_variable_is_a_type_error() {
        let e = parse_hir("fn f() { x = 1; }").unwrap_err();
        assert!(matches!(e, HirError::Type(_)), "{e}");
    }

    #[test]
    fn call_arity_is_checked() {
        let e = parse_hir("fn f(a) { return a; } fn main() { f(); }").unwrap_err();
        assert!(e.to_string().contains("argument"), "{e}");
    }

    #[test]
    fn while_requires_bounds() {
        let e = parse_hir("fn f(x) { while x { x = x - 1; } }").unwrap_err();
        assert!(matches!(e, HirError::Parse { .. }), "{e}");
        let p = parse_hir("fn f(x) { while x @bound 0..32 { x = x - 1; } }").unwrap();
        match &p.functions[0].body[0].kind {
            StmtKind::While {
                bound_lo, bound_hi, ..
            } => {
                assert_eq!((*bound_lo, *bound_hi), (0, 32));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unreachable_code_after_return_is_rejected() {
        let e = parse_hir("fn f() { return 1; let x = 2; }").unwrap_err();
        assert!(e.to_string().contains("unreachable"), "{e}");
    }

    #[test]
    fn precedence_mul_binds_tighter_than_add() {
        let p = parse_hir("fn f(a, b) { return a + b * 2; }").unwrap();
        match &p.functions[0].body[0].kind {
            StmtKind::Return {
                value:
                    Some(Expr::Binary {
                        op: BinOp::Add,
                        rhs,
                        ..
                    }),
            } => {
                assert!(matches!(**rhs, Expr::Binary { op: BinOp::Mul, .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_folding_collapses_literal_math() {
        let folded = super::super::fold_expr(&Expr::Binary {
            op: BinOp::Add,
            lhs: Box::new(Expr::Const(2)),
            rhs: Box::new(Expr::Binary {
                op: BinOp::Mul,
                lhs: Box::new(Expr::Const(3)),
                rhs: Box::new(Expr::Const(4)),
            }),
        });
        assert_eq!(folded, Expr::Const(14));
    }
}
