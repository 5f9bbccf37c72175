//! The lowered intermediate representation: a 1-indexed array of assignment
//! operations, function calls, labels (as goto targets), and conditional
//! branches. This is the domain of the inference worklist and of the
//! optimizer passes.
//!
//! The textual format is one statement per line:
//! `(= x (call + y 1))`, `(goto 5)`, `(gotoif (call == x 0) 9)`,
//! `(return x)`.

use crate::value::Value;
use std::fmt::Write as _;
use std::rc::Rc;

pub type ExprId = u32;

#[derive(Clone, Debug)]
pub enum Expr {
    Const(ExprId, Value),
    /// A local variable (parameter or introduced by assignment).
    Local(ExprId, String),
    /// A reference to a global binding.
    Global(ExprId, String),
    Call {
        id: ExprId,
        callee: Box<Expr>,
        args: Vec<Expr>,
        /// Marks arguments written `f(t...)`, splicing an iterable.
        splat: Vec<bool>,
    },
    /// Constructor pseudofunction, legal only inside a type's own methods;
    /// carries the enclosing type's name.
    New(ExprId, String, Vec<Expr>),
    /// Code literal inside a staged method body.
    Quote(ExprId, Rc<Vec<Statement>>),
}

impl Expr {
    pub fn id(&self) -> ExprId {
        match self {
            Expr::Const(id, _)
            | Expr::Local(id, _)
            | Expr::Global(id, _)
            | Expr::Call { id, .. }
            | Expr::New(id, _, _)
            | Expr::Quote(id, _) => *id,
        }
    }

    pub fn is_global(&self, name: &str) -> bool {
        matches!(self, Expr::Global(_, n) if n == name)
    }
}

#[derive(Clone, Debug)]
pub enum Statement {
    Assign {
        var: String,
        global: bool,
        value: Expr,
    },
    Goto(usize),
    GotoIf {
        cond: Expr,
        target: usize,
    },
    Return(Expr),
    Expr(Expr),
}

#[derive(Clone, Debug)]
pub struct IRFunction {
    pub name: String,
    pub params: Vec<String>,
    /// Whether the last parameter collects the tail of the argument list.
    pub vararg: bool,
    /// All locally bound names: parameters plus assignment targets.
    pub locals: Vec<String>,
    /// 1-indexed when addressed by goto targets.
    pub body: Vec<Statement>,
    pub n_exprs: u32,
}

impl IRFunction {
    pub fn nstatements(&self) -> usize {
        self.body.len()
    }

    /// 1-indexed statement access, mirroring goto targets.
    pub fn stmt(&self, p: usize) -> &Statement {
        &self.body[p - 1]
    }

    /// Verify structural invariants: every goto target lands inside the
    /// body, and control cannot fall off the end.
    pub fn verify(&self) -> Result<(), String> {
        let n = self.body.len();
        for (i, s) in self.body.iter().enumerate() {
            match s {
                Statement::Goto(l) | Statement::GotoIf { target: l, .. } => {
                    if *l < 1 || *l > n {
                        return Err(format!(
                            "goto target {l} out of range 1..{n} in {} at statement {}",
                            self.name,
                            i + 1
                        ));
                    }
                }
                _ => {}
            }
        }
        match self.body.last() {
            Some(Statement::Return(_)) | Some(Statement::Goto(_)) => Ok(()),
            _ => Err(format!("function {} may fall off the end", self.name)),
        }
    }

    /// Renumber expression ids densely in evaluation order. Passes that
    /// splice or drop code call this to restore the id invariant.
    pub fn renumber(&mut self) {
        let mut next: u32 = 0;
        for stmt in &mut self.body {
            match stmt {
                Statement::Assign { value, .. }
                | Statement::GotoIf { cond: value, .. }
                | Statement::Return(value)
                | Statement::Expr(value) => renumber_expr(value, &mut next),
                Statement::Goto(_) => {}
            }
        }
        self.n_exprs = next;
    }
}

fn renumber_expr(e: &mut Expr, next: &mut u32) {
    let id = *next;
    *next += 1;
    match e {
        Expr::Const(i, _)
        | Expr::Local(i, _)
        | Expr::Global(i, _)
        | Expr::New(i, _, _)
        | Expr::Quote(i, _) => *i = id,
        Expr::Call { id: i, .. } => *i = id,
    }
    match e {
        Expr::Call { callee, args, .. } => {
            renumber_expr(callee, next);
            args.iter_mut().for_each(|a| renumber_expr(a, next));
        }
        Expr::New(_, _, args) => args.iter_mut().for_each(|a| renumber_expr(a, next)),
        _ => {}
    }
}

// ---------------------------------------------------------------------------
// Dump
// ---------------------------------------------------------------------------

pub fn dump_function(f: &IRFunction) -> String {
    let mut out = String::new();
    for stmt in &f.body {
        dump_statement(stmt, &mut out);
        out.push('\n');
    }
    out
}

pub fn dump_statement(s: &Statement, out: &mut String) {
    match s {
        Statement::Assign { var, global, value } => {
            if *global {
                out.push_str("(= (global ");
                out.push_str(var);
                out.push_str(") ");
            } else {
                out.push_str("(= ");
                out.push_str(var);
                out.push(' ');
            }
            dump_expr(value, out);
            out.push(')');
        }
        Statement::Goto(l) => {
            write!(out, "(goto {l})").unwrap();
        }
        Statement::GotoIf { cond, target } => {
            out.push_str("(gotoif ");
            dump_expr(cond, out);
            write!(out, " {target})").unwrap();
        }
        Statement::Return(e) => {
            out.push_str("(return ");
            dump_expr(e, out);
            out.push(')');
        }
        Statement::Expr(e) => dump_expr(e, out),
    }
}

fn dump_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Const(_, v) => dump_const(v, out),
        Expr::Local(_, name) => out.push_str(name),
        Expr::Global(_, name) => {
            out.push_str("(global ");
            out.push_str(name);
            out.push(')');
        }
        Expr::Call { callee, args, splat, .. } => {
            out.push_str("(call ");
            dump_expr(callee, out);
            for (i, a) in args.iter().enumerate() {
                out.push(' ');
                if splat.get(i).copied().unwrap_or(false) {
                    out.push_str("(... ");
                    dump_expr(a, out);
                    out.push(')');
                } else {
                    dump_expr(a, out);
                }
            }
            out.push(')');
        }
        Expr::New(_, type_name, args) => {
            out.push_str("(new ");
            out.push_str(type_name);
            for a in args {
                out.push(' ');
                dump_expr(a, out);
            }
            out.push(')');
        }
        Expr::Quote(_, stmts) => {
            out.push_str("(quote");
            for s in stmts.iter() {
                out.push(' ');
                dump_statement(s, out);
            }
            out.push(')');
        }
    }
}

fn dump_const(v: &Value, out: &mut String) {
    match v {
        Value::Int { value, .. } => {
            write!(out, "{value}").unwrap();
        }
        Value::Float(x) => out.push_str(&crate::display::float_to_string(*x)),
        Value::Bool(b) => {
            write!(out, "{b}").unwrap();
        }
        Value::Str(s) => {
            write!(out, "{s:?}").unwrap();
        }
        other => {
            // Only literal constants are produced by lowering; anything else
            // would come from a pass bug.
            write!(out, "#<{other:?}>").unwrap();
        }
    }
}

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Sym(String),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Sexp>),
}

fn parse_sexp_tokens(src: &str) -> Result<Vec<Sexp>, String> {
    let mut chars = src.chars().peekable();
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                chars.next();
                stack.push(Vec::new());
            }
            ')' => {
                chars.next();
                let done = stack.pop().ok_or("unbalanced )")?;
                stack
                    .last_mut()
                    .ok_or("unbalanced )")?
                    .push(Sexp::List(done));
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                while let Some(c) = chars.next() {
                    match c {
                        '"' => break,
                        '\\' => match chars.next() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(other) => s.push(other),
                            None => return Err("unterminated string".into()),
                        },
                        other => s.push(other),
                    }
                }
                stack.last_mut().unwrap().push(Sexp::Str(s));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut atom = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' {
                        break;
                    }
                    atom.push(c);
                    chars.next();
                }
                let sexp = if let Ok(n) = atom.parse::<i64>() {
                    Sexp::Int(n)
                } else if let Ok(x) = atom.parse::<f64>() {
                    if atom.contains('.') || atom.contains('e') || atom.contains('E') {
                        Sexp::Float(x)
                    } else {
                        Sexp::Sym(atom)
                    }
                } else {
                    Sexp::Sym(atom)
                };
                stack.last_mut().unwrap().push(sexp);
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced (".into());
    }
    Ok(stack.pop().unwrap())
}

/// Read a dumped statement block back into an `IRFunction`. Locals are
/// recomputed from parameters and assignment targets; the `int_family`
/// caller supplies tags integer literals.
pub fn read_function(
    name: &str,
    params: Vec<String>,
    vararg: bool,
    src: &str,
    int_family: crate::types::TypeNameId,
) -> Result<IRFunction, String> {
    let sexps = parse_sexp_tokens(src)?;
    let mut body = Vec::new();
    let mut next_id: u32 = 0;
    for s in &sexps {
        body.push(read_statement(s, &mut next_id, int_family)?);
    }
    let mut locals: Vec<String> = params.clone();
    for s in &body {
        if let Statement::Assign { var, global: false, .. } = s {
            if !locals.contains(var) {
                locals.push(var.clone());
            }
        }
    }
    let mut f = IRFunction {
        name: name.to_string(),
        params,
        vararg,
        locals,
        body,
        n_exprs: next_id,
    };
    f.renumber();
    Ok(f)
}

fn read_statement(
    s: &Sexp,
    next_id: &mut u32,
    int_family: crate::types::TypeNameId,
) -> Result<Statement, String> {
    let items = match s {
        Sexp::List(items) if !items.is_empty() => items,
        _ => return Ok(Statement::Expr(read_expr(s, next_id, int_family)?)),
    };
    match &items[0] {
        Sexp::Sym(op) if op == "=" => {
            let (var, global) = match &items[1] {
                Sexp::Sym(v) => (v.clone(), false),
                Sexp::List(inner) => match (&inner[0], &inner[1]) {
                    (Sexp::Sym(g), Sexp::Sym(v)) if g == "global" => (v.clone(), true),
                    _ => return Err("bad assignment target".into()),
                },
                _ => return Err("bad assignment target".into()),
            };
            let value = read_expr(&items[2], next_id, int_family)?;
            Ok(Statement::Assign { var, global, value })
        }
        Sexp::Sym(op) if op == "goto" => match items[1] {
            Sexp::Int(l) => Ok(Statement::Goto(l as usize)),
            _ => Err("bad goto target".into()),
        },
        Sexp::Sym(op) if op == "gotoif" => {
            let cond = read_expr(&items[1], next_id, int_family)?;
            match items[2] {
                Sexp::Int(l) => Ok(Statement::GotoIf { cond, target: l as usize }),
                _ => Err("bad gotoif target".into()),
            }
        }
        Sexp::Sym(op) if op == "return" => {
            Ok(Statement::Return(read_expr(&items[1], next_id, int_family)?))
        }
        _ => Ok(Statement::Expr(read_expr(s, next_id, int_family)?)),
    }
}

fn read_expr(
    s: &Sexp,
    next_id: &mut u32,
    int_family: crate::types::TypeNameId,
) -> Result<Expr, String> {
    let fresh = |next_id: &mut u32| {
        let id = *next_id;
        *next_id += 1;
        id
    };
    match s {
        Sexp::Int(n) => Ok(Expr::Const(
            fresh(next_id),
            Value::Int { ty: int_family, value: *n },
        )),
        Sexp::Float(x) => Ok(Expr::Const(fresh(next_id), Value::Float(*x))),
        Sexp::Str(st) => Ok(Expr::Const(fresh(next_id), Value::Str(st.as_str().into()))),
        Sexp::Sym(name) if name == "true" => Ok(Expr::Const(fresh(next_id), Value::Bool(true))),
        Sexp::Sym(name) if name == "false" => {
            Ok(Expr::Const(fresh(next_id), Value::Bool(false)))
        }
        Sexp::Sym(name) => Ok(Expr::Local(fresh(next_id), name.clone())),
        Sexp::List(items) if !items.is_empty() => match &items[0] {
            Sexp::Sym(op) if op == "global" => match &items[1] {
                Sexp::Sym(name) => Ok(Expr::Global(fresh(next_id), name.clone())),
                _ => Err("bad global reference".into()),
            },
            Sexp::Sym(op) if op == "call" => {
                let id = fresh(next_id);
                let callee = Box::new(read_expr(&items[1], next_id, int_family)?);
                let mut args = Vec::new();
                let mut splat = Vec::new();
                for item in &items[2..] {
                    if let Sexp::List(inner) = item {
                        if let Some(Sexp::Sym(dots)) = inner.first() {
                            if dots == "..." {
                                args.push(read_expr(&inner[1], next_id, int_family)?);
                                splat.push(true);
                                continue;
                            }
                        }
                    }
                    args.push(read_expr(item, next_id, int_family)?);
                    splat.push(false);
                }
                Ok(Expr::Call { id, callee, args, splat })
            }
            Sexp::Sym(op) if op == "new" => {
                let id = fresh(next_id);
                let type_name = match &items[1] {
                    Sexp::Sym(n) => n.clone(),
                    _ => return Err("new expects a type name".into()),
                };
                let args = items[2..]
                    .iter()
                    .map(|a| read_expr(a, next_id, int_family))
                    .collect::<Result<_, _>>()?;
                Ok(Expr::New(id, type_name, args))
            }
            Sexp::Sym(op) if op == "quote" => {
                let id = fresh(next_id);
                let stmts = items[1..]
                    .iter()
                    .map(|st| read_statement(st, next_id, int_family))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::Quote(id, Rc::new(stmts)))
            }
            _ => Err(format!("unrecognized form {s:?}")),
        },
        Sexp::List(_) => Err("empty form".into()),
    }
}

/// Structural equality of two functions, ignoring expression ids.
pub fn functions_equal(a: &IRFunction, b: &IRFunction) -> bool {
    if a.params != b.params || a.vararg != b.vararg || a.body.len() != b.body.len() {
        return false;
    }
    a.body
        .iter()
        .zip(b.body.iter())
        .all(|(x, y)| statements_equal(x, y))
}

pub fn statements_equal(a: &Statement, b: &Statement) -> bool {
    match (a, b) {
        (
            Statement::Assign { var: va, global: ga, value: ea },
            Statement::Assign { var: vb, global: gb, value: eb },
        ) => va == vb && ga == gb && exprs_equal(ea, eb),
        (Statement::Goto(x), Statement::Goto(y)) => x == y,
        (
            Statement::GotoIf { cond: ca, target: ta },
            Statement::GotoIf { cond: cb, target: tb },
        ) => ta == tb && exprs_equal(ca, cb),
        (Statement::Return(x), Statement::Return(y)) => exprs_equal(x, y),
        (Statement::Expr(x), Statement::Expr(y)) => exprs_equal(x, y),
        _ => false,
    }
}

fn exprs_equal(a: &Expr, b: &Expr) -> bool {
    match (a, b) {
        (Expr::Const(_, x), Expr::Const(_, y)) => crate::value::egal(x, y),
        (Expr::Local(_, x), Expr::Local(_, y)) => x == y,
        (Expr::Global(_, x), Expr::Global(_, y)) => x == y,
        (
            Expr::Call { callee: ca, args: aa, splat: sa, .. },
            Expr::Call { callee: cb, args: ab, splat: sb, .. },
        ) => {
            exprs_equal(ca, cb)
                && sa == sb
                && aa.len() == ab.len()
                && aa.iter().zip(ab.iter()).all(|(x, y)| exprs_equal(x, y))
        }
        (Expr::New(_, na, xa), Expr::New(_, nb, xb)) => {
            na == nb
                && xa.len() == xb.len()
                && xa.iter().zip(xb.iter()).all(|(x, y)| exprs_equal(x, y))
        }
        (Expr::Quote(_, sa), Expr::Quote(_, sb)) => {
            sa.len() == sb.len()
                && sa.iter().zip(sb.iter()).all(|(x, y)| statements_equal(x, y))
        }
        _ => false,
    }
}
