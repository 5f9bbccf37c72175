//! Lowering from surface syntax to IR, plus load-time processing of
//! declarations. `for` loops expand through the iteration interface
//! (start/done/next), indexing and concatenation sugar become calls per the
//! operator table, control flow flattens to gotos, and locals are
//! introduced implicitly by assignment. Top-level statements each become an
//! implicit thunk so inference applies uniformly.

use crate::ctx::Ctx;
use crate::dispatch::{self, FuncId, MethodDef};
use crate::interp::{self, RtError};
use crate::ir::{Expr, IRFunction, Statement};
use crate::lexer::ParseError;
use crate::parser::{self, Arg, Ast, FunctionDef, Item, LValue, Param, StaticParam, Stmt};
use crate::types::{fresh_var, TypeKind, TypeTerm, TypeVarRef};
use crate::value::{value_as_type, Value};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

#[derive(Debug)]
pub enum LoadError {
    Parse(ParseError),
    Lower { msg: String, line: u32 },
    Runtime(RtError),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Parse(e) => write!(f, "{e}"),
            LoadError::Lower { msg, line } => write!(f, "error at line {line}: {msg}"),
            LoadError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<ParseError> for LoadError {
    fn from(e: ParseError) -> Self {
        LoadError::Parse(e)
    }
}

impl From<RtError> for LoadError {
    fn from(e: RtError) -> Self {
        LoadError::Runtime(e)
    }
}

/// Parse and process a whole file in order: declarations take effect as
/// they are reached, so later statements see earlier definitions.
pub fn load_source(ctx: &mut Ctx, src: &str, file: &str) -> Result<(), LoadError> {
    let items = parser::parse_program(src)?;
    for item in items {
        process_item(ctx, item, file)?;
    }
    Ok(())
}

/// Process one top-level item. Statements return their value and inferred
/// type (the REPL prints both).
pub fn process_item(
    ctx: &mut Ctx,
    item: Item,
    file: &str,
) -> Result<Option<(Value, TypeTerm)>, LoadError> {
    match item {
        Item::Func(def) => {
            let fid = ctx.ensure_function(&def.name);
            define_method(ctx, fid, &def, &[], None, file)?;
            Ok(None)
        }
        Item::Abstract { name, static_params, supertype, line } => {
            let (formals, scope) = make_formals(ctx, &static_params, line)?;
            let sup = eval_supertype(ctx, supertype.as_ref(), &scope, line)?;
            let id = ctx
                .types
                .declare(&name, formals, TypeKind::Abstract, sup, Vec::new(), Vec::new(), 0)
                .map_err(|e| lower_err(e.to_string(), line))?;
            ctx.globals
                .insert(name, Value::Type(TypeTerm::Apply(id, Vec::new())));
            Ok(None)
        }
        Item::Bits { nbits, name, supertype, line } => {
            let sup = eval_supertype(ctx, supertype.as_ref(), &[], line)?;
            let id = ctx
                .types
                .declare(&name, Vec::new(), TypeKind::Bits, sup, Vec::new(), Vec::new(), nbits)
                .map_err(|e| lower_err(e.to_string(), line))?;
            ctx.globals
                .insert(name, Value::Type(TypeTerm::Apply(id, Vec::new())));
            Ok(None)
        }
        Item::Composite { name, static_params, supertype, fields, ctors, line } => {
            let (formals, scope) = make_formals(ctx, &static_params, line)?;
            let sup = eval_supertype(ctx, supertype.as_ref(), &scope, line)?;
            let mut field_names = Vec::new();
            let mut field_types = Vec::new();
            for (fname, fty) in &fields {
                field_names.push(fname.clone());
                field_types.push(match fty {
                    Some(ast) => eval_type_expr(ctx, ast, &scope, line)?,
                    None => TypeTerm::Any,
                });
            }
            let id = ctx
                .types
                .declare(
                    &name,
                    formals.clone(),
                    TypeKind::Composite,
                    sup,
                    field_names.clone(),
                    field_types.clone(),
                    0,
                )
                .map_err(|e| lower_err(e.to_string(), line))?;
            ctx.globals
                .insert(name.clone(), Value::Type(TypeTerm::Apply(id, Vec::new())));
            // The constructor function lives outside the global namespace;
            // the type object itself is what gets applied.
            let ctor_fid = anon_function(ctx, &format!("#ctor#{name}"));
            ctx.types.name_mut(id).ctor = Some(ctor_fid);
            if ctors.is_empty() {
                // Default constructor: one value per field, constrained by
                // the declared field types so type parameters solve from
                // the arguments.
                define_default_ctor(
                    ctx,
                    ctor_fid,
                    &name,
                    &field_names,
                    &field_types,
                    &formals,
                    file,
                    line,
                )?;
            } else {
                ctx.types.name_mut(id).has_user_ctor = true;
                for c in &ctors {
                    define_method(ctx, ctor_fid, c, &formals, Some(name.clone()), file)?;
                }
            }
            Ok(None)
        }
        Item::Stmt(stmt, line) => {
            // Short-form definition?
            if let Stmt::Assign { lhs: LValue::CallShape(shape), rhs, line } = stmt {
                let def = short_form_def(shape, rhs, line)?;
                let fid = ctx.ensure_function(&def.name);
                define_method(ctx, fid, &def, &[], None, file)?;
                return Ok(None);
            }
            let thunk = lower_thunk(ctx, &stmt, line)?;
            let (value, ty) = run_thunk(ctx, thunk)?;
            Ok(Some((value, ty)))
        }
    }
}

fn lower_err(msg: impl Into<String>, line: u32) -> LoadError {
    LoadError::Lower { msg: msg.into(), line }
}

fn anon_function(ctx: &mut Ctx, name: &str) -> FuncId {
    let id = FuncId(ctx.funcs.len() as u32);
    ctx.funcs.push(crate::dispatch::GenericFunction::new(name));
    id
}

/// Compile and execute a top-level thunk through the full pipeline, so the
/// inference and optimizer see every statement.
pub fn run_thunk(ctx: &mut Ctx, func: Rc<IRFunction>) -> Result<(Value, TypeTerm), LoadError> {
    let def = Rc::new(MethodDef {
        id: ctx.fresh_method_id(),
        signature: TypeTerm::Tuple(Vec::new()),
        static_params: Vec::new(),
        body: func,
        staged: false,
        declared_in: "<top>".to_string(),
    });
    let (af, result_ty) =
        crate::optimize::specialize(ctx, &def, &TypeTerm::Tuple(Vec::new()), &[]);
    let value = interp::run_annotated(ctx, Rc::new(af), Vec::new(), &[])?;
    Ok((value, result_ty))
}

fn short_form_def(shape: Ast, rhs: Ast, line: u32) -> Result<FunctionDef, LoadError> {
    let (callee, args) = match shape {
        Ast::Call { callee, args } => (*callee, args),
        _ => return Err(lower_err("malformed definition", line)),
    };
    let (name, static_params) = match callee {
        Ast::Var(n) => (n, Vec::new()),
        Ast::TypeApply { base, params } => match *base {
            Ast::Var(n) => (n, ast_static_params(params, line)?),
            _ => return Err(lower_err("malformed definition head", line)),
        },
        _ => return Err(lower_err("malformed definition head", line)),
    };
    let params = args
        .into_iter()
        .map(|a| arg_to_param(a, line))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FunctionDef {
        name,
        static_params,
        params,
        body: vec![Stmt::Return(Some(rhs))],
        staged: false,
        line,
    })
}

fn ast_static_params(params: Vec<Ast>, line: u32) -> Result<Vec<StaticParam>, LoadError> {
    params
        .into_iter()
        .map(|p| match p {
            Ast::Var(name) => Ok(StaticParam { name, bound: None }),
            Ast::Bounded { name, bound } => Ok(StaticParam { name, bound: Some(*bound) }),
            _ => Err(lower_err("malformed static parameter", line)),
        })
        .collect()
}

fn arg_to_param(a: Arg, line: u32) -> Result<Param, LoadError> {
    let vararg = a.splat;
    match a.expr {
        Ast::Var(name) => Ok(Param { name: Some(name), ty: None, vararg }),
        Ast::TypeAssert { expr, ty } => match *expr {
            Ast::Var(name) => Ok(Param { name: Some(name), ty: Some(*ty), vararg }),
            _ => Err(lower_err("malformed parameter", line)),
        },
        Ast::AnonTyped(ty) => Ok(Param { name: None, ty: Some(*ty), vararg }),
        _ => Err(lower_err("malformed parameter", line)),
    }
}

#[allow(clippy::too_many_arguments)]
fn define_default_ctor(
    ctx: &mut Ctx,
    ctor_fid: FuncId,
    type_name: &str,
    field_names: &[String],
    field_types: &[TypeTerm],
    formals: &[TypeVarRef],
    file: &str,
    line: u32,
) -> Result<(), LoadError> {
    let signature = TypeTerm::Tuple(field_types.to_vec());
    let sig_vars = signature.free_vars();
    let static_params: Vec<TypeVarRef> = formals
        .iter()
        .filter(|v| sig_vars.iter().any(|sv| sv.id == v.id))
        .cloned()
        .collect();
    let static_names: Vec<String> = static_params.iter().map(|v| v.name.clone()).collect();
    let call = Ast::Call {
        callee: Box::new(Ast::Var("new".into())),
        args: field_names
            .iter()
            .map(|f| Arg { expr: Ast::Var(f.clone()), splat: false })
            .collect(),
    };
    let body = vec![Stmt::Return(Some(call))];
    let func = lower_function_body(
        ctx,
        type_name,
        field_names.to_vec(),
        false,
        &body,
        &static_names,
        Some(type_name.to_string()),
        line,
    )?;
    dispatch::add_method(
        ctx,
        ctor_fid,
        signature,
        static_params,
        Rc::new(func),
        false,
        format!("{file}:{line}"),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Method definition
// ---------------------------------------------------------------------------

fn make_formals(
    ctx: &mut Ctx,
    sparams: &[StaticParam],
    line: u32,
) -> Result<(Vec<TypeVarRef>, Vec<(String, Value)>), LoadError> {
    let mut formals = Vec::new();
    let mut scope: Vec<(String, Value)> = Vec::new();
    for sp in sparams {
        let bound = match &sp.bound {
            Some(ast) => eval_type_expr(ctx, ast, &scope, line)?,
            None => TypeTerm::Any,
        };
        let v = fresh_var(&sp.name, bound);
        scope.push((sp.name.clone(), Value::Type(TypeTerm::Var(v.clone()))));
        formals.push(v);
    }
    Ok((formals, scope))
}

fn eval_supertype(
    ctx: &mut Ctx,
    ast: Option<&Ast>,
    scope: &[(String, Value)],
    line: u32,
) -> Result<TypeTerm, LoadError> {
    match ast {
        None => Ok(TypeTerm::Any),
        Some(a) => eval_type_expr(ctx, a, scope, line),
    }
}

/// Evaluate a type expression at load time: types are ordinary values, so
/// this lowers the expression and runs it, with static parameters in scope
/// bound to their type variables.
pub fn eval_type_expr(
    ctx: &mut Ctx,
    ast: &Ast,
    scope: &[(String, Value)],
    line: u32,
) -> Result<TypeTerm, LoadError> {
    let func = lower_type_thunk(ctx, ast, scope, line)?;
    let args: Vec<Value> = scope.iter().map(|(_, v)| v.clone()).collect();
    let value = interp::run_function_raw(ctx, &func, args, &[])?;
    value_as_type(&ctx.types, &value)
        .ok_or_else(|| lower_err("expression does not evaluate to a type", line))
}

fn lower_type_thunk(
    ctx: &mut Ctx,
    ast: &Ast,
    scope: &[(String, Value)],
    line: u32,
) -> Result<Rc<IRFunction>, LoadError> {
    let params: Vec<String> = scope.iter().map(|(n, _)| n.clone()).collect();
    let mut lw = Lowerer::new(ctx, params.clone(), false, line);
    lw.type_expr_mode = true;
    let e = lw.lower_expr(ast)?;
    lw.emit(Statement::Return(e));
    lw.finish(format!("#type_expr@{line}"), params, false)
        .map(Rc::new)
}

/// Build a `MethodDef` from a surface definition and insert it. Enclosing
/// type formals (for constructors) join the definition's own static
/// parameters; `new` is legal only when `enclosing_type` is set.
pub fn define_method(
    ctx: &mut Ctx,
    fid: FuncId,
    def: &FunctionDef,
    enclosing_formals: &[TypeVarRef],
    enclosing_type: Option<String>,
    file: &str,
) -> Result<(), LoadError> {
    let line = def.line;
    // Static scope: enclosing formals first, then the definition's own.
    let mut scope: Vec<(String, Value)> = enclosing_formals
        .iter()
        .map(|v| (v.name.clone(), Value::Type(TypeTerm::Var(v.clone()))))
        .collect();
    let mut own_vars: Vec<TypeVarRef> = Vec::new();
    for sp in &def.static_params {
        let bound = match &sp.bound {
            Some(ast) => eval_type_expr(ctx, ast, &scope, line)?,
            None => TypeTerm::Any,
        };
        let v = fresh_var(&sp.name, bound);
        scope.push((sp.name.clone(), Value::Type(TypeTerm::Var(v.clone()))));
        own_vars.push(v);
    }

    // Parameter names and the signature tuple.
    let mut param_names = Vec::new();
    let mut sig_elems = Vec::new();
    let mut vararg = false;
    for (i, p) in def.params.iter().enumerate() {
        let name = match &p.name {
            Some(n) => n.clone(),
            None => format!("#unused#{i}"),
        };
        let ty = match &p.ty {
            Some(ast) => {
                // Constructors may mention the enclosing type's fields via
                // its formals.
                let t = eval_type_expr(ctx, ast, &scope, line)?;
                if enclosing_type.is_some() && t.has_vars() {
                    t
                } else {
                    t
                }
            }
            None => TypeTerm::Any,
        };
        if p.vararg {
            if i + 1 != def.params.len() {
                return Err(lower_err("a vararg parameter must come last", line));
            }
            vararg = true;
            sig_elems.push(TypeTerm::vararg(ty));
        } else {
            sig_elems.push(ty);
        }
        param_names.push(name);
    }
    let signature = TypeTerm::Tuple(sig_elems);

    // Static parameters: the definition's own, plus enclosing formals that
    // actually occur in the signature (a constructor mentioning T must
    // solve it from the arguments).
    let sig_vars = signature.free_vars();
    let mut static_params: Vec<TypeVarRef> = enclosing_formals
        .iter()
        .filter(|v| sig_vars.iter().any(|sv| sv.id == v.id))
        .cloned()
        .collect();
    static_params.extend(own_vars);

    let static_names: Vec<String> = static_params.iter().map(|v| v.name.clone()).collect();
    let func = lower_function_body(
        ctx,
        &def.name,
        param_names,
        vararg,
        &def.body,
        &static_names,
        enclosing_type,
        line,
    )?;
    dispatch::add_method(
        ctx,
        fid,
        signature,
        static_params,
        Rc::new(func),
        def.staged,
        format!("{file}:{line}"),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Body lowering
// ---------------------------------------------------------------------------

const VLABEL_BASE: usize = 1 << 24;

struct Lowerer<'a> {
    ctx: &'a mut Ctx,
    stmts: Vec<Statement>,
    next_expr: u32,
    next_tmp: u32,
    next_vlabel: usize,
    vlabels: HashMap<usize, usize>,
    locals: Vec<String>,
    local_set: HashSet<String>,
    globals_decl: HashSet<String>,
    declared_types: HashMap<String, Ast>,
    enclosing_type: Option<String>,
    top_level: bool,
    type_expr_mode: bool,
    line: u32,
}

impl<'a> Lowerer<'a> {
    fn new(ctx: &'a mut Ctx, locals: Vec<String>, top_level: bool, line: u32) -> Lowerer<'a> {
        let local_set = locals.iter().cloned().collect();
        Lowerer {
            ctx,
            stmts: Vec::new(),
            next_expr: 0,
            next_tmp: 0,
            next_vlabel: VLABEL_BASE,
            vlabels: HashMap::new(),
            locals,
            local_set,
            globals_decl: HashSet::new(),
            declared_types: HashMap::new(),
            enclosing_type: None,
            top_level,
            type_expr_mode: false,
            line,
        }
    }

    fn eid(&mut self) -> u32 {
        let id = self.next_expr;
        self.next_expr += 1;
        id
    }

    fn tmp(&mut self, hint: &str) -> String {
        self.next_tmp += 1;
        let name = format!("#{hint}#{}", self.next_tmp);
        self.add_local(&name);
        name
    }

    fn add_local(&mut self, name: &str) {
        if !self.local_set.contains(name) {
            self.local_set.insert(name.to_string());
            self.locals.push(name.to_string());
        }
    }

    fn is_local(&self, name: &str) -> bool {
        self.local_set.contains(name) && !self.globals_decl.contains(name)
    }

    fn emit(&mut self, s: Statement) {
        self.stmts.push(s);
    }

    fn fresh_vlabel(&mut self) -> usize {
        self.next_vlabel += 1;
        self.next_vlabel
    }

    fn place(&mut self, vlabel: usize) {
        self.vlabels.insert(vlabel, self.stmts.len() + 1);
    }

    fn err(&self, msg: impl Into<String>) -> LoadError {
        lower_err(msg, self.line)
    }

    fn finish(
        mut self,
        name: String,
        params: Vec<String>,
        vararg: bool,
    ) -> Result<IRFunction, LoadError> {
        // Resolve virtual labels.
        let n = self.stmts.len();
        for s in &mut self.stmts {
            match s {
                Statement::Goto(l) | Statement::GotoIf { target: l, .. } => {
                    if *l >= VLABEL_BASE {
                        let t = *self
                            .vlabels
                            .get(l)
                            .ok_or_else(|| LoadError::Lower {
                                msg: "internal: dangling label".into(),
                                line: self.line,
                            })?;
                        *l = t.min(n);
                    }
                }
                _ => {}
            }
        }
        let mut f = IRFunction {
            name,
            params,
            vararg,
            locals: self.locals,
            body: self.stmts,
            n_exprs: self.next_expr,
        };
        f.renumber();
        f.verify().map_err(|m| LoadError::Lower { msg: m, line: self.line })?;
        Ok(f)
    }

    // -- scope prescan -------------------------------------------------------

    fn prescan(&mut self, stmts: &[Stmt]) {
        // Globals first so assignments to declared globals stay global.
        fn find_globals(stmts: &[Stmt], out: &mut HashSet<String>) {
            for s in stmts {
                match s {
                    Stmt::Global(names) => out.extend(names.iter().cloned()),
                    Stmt::If { arms, els } => {
                        arms.iter().for_each(|(_, b)| find_globals(b, out));
                        if let Some(b) = els {
                            find_globals(b, out);
                        }
                    }
                    Stmt::While { body, .. } | Stmt::For { body, .. } => {
                        find_globals(body, out)
                    }
                    _ => {}
                }
            }
        }
        let mut globals = HashSet::new();
        find_globals(stmts, &mut globals);
        self.globals_decl = globals;
        if !self.top_level {
            let mut assigned = Vec::new();
            let mut declared = HashMap::new();
            collect_assigned(stmts, &mut assigned, &mut declared);
            for name in assigned {
                if !self.globals_decl.contains(&name) {
                    self.add_local(&name);
                }
            }
            self.declared_types = declared;
        } else {
            let mut declared = HashMap::new();
            collect_assigned(stmts, &mut Vec::new(), &mut declared);
            self.declared_types = declared;
        }
    }

    // -- statements ----------------------------------------------------------

    fn lower_block(&mut self, stmts: &[Stmt], tail: bool) -> Result<(), LoadError> {
        for (i, s) in stmts.iter().enumerate() {
            let is_last = i + 1 == stmts.len();
            self.lower_stmt(s, tail && is_last)?;
        }
        if tail && stmts.is_empty() {
            let e = self.empty_tuple();
            self.emit(Statement::Return(e));
        }
        Ok(())
    }

    fn empty_tuple(&mut self) -> Expr {
        Expr::Const(self.eid(), Value::Tuple(Vec::new().into()))
    }

    fn lower_stmt(&mut self, stmt: &Stmt, tail: bool) -> Result<(), LoadError> {
        match stmt {
            Stmt::Expr(e) => {
                let v = self.lower_expr(e)?;
                if tail {
                    self.emit(Statement::Return(v));
                } else {
                    self.emit(Statement::Expr(v));
                }
                Ok(())
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.lower_expr(e)?,
                    None => self.empty_tuple(),
                };
                self.emit(Statement::Return(v));
                Ok(())
            }
            Stmt::Global(_) => {
                if tail {
                    let e = self.empty_tuple();
                    self.emit(Statement::Return(e));
                }
                Ok(())
            }
            Stmt::Declare { var, ty } => {
                let _ = (var, ty); // recorded during prescan
                if tail {
                    let e = self.empty_tuple();
                    self.emit(Statement::Return(e));
                }
                Ok(())
            }
            Stmt::Assign { lhs, rhs, line } => {
                self.line = *line;
                match lhs {
                    LValue::Var(name) => {
                        let rhs_e = self.lower_var_assign_value(name, rhs)?;
                        if tail {
                            let t = self.tmp("val");
                            self.emit(Statement::Assign {
                                var: t.clone(),
                                global: false,
                                value: rhs_e,
                            });
                            let read = Expr::Local(self.eid(), t.clone());
                            self.assign_var(name, read);
                            let ret = Expr::Local(self.eid(), t);
                            self.emit(Statement::Return(ret));
                        } else {
                            self.assign_var(name, rhs_e);
                        }
                        Ok(())
                    }
                    LValue::Index { obj, idxs } => {
                        // a[i, j] = x lowers to assign(a, x, i, j)
                        let o = self.lower_expr(obj)?;
                        let x = self.lower_expr(rhs)?;
                        let mut args = vec![o, x];
                        for i in idxs {
                            args.push(self.lower_expr(i)?);
                        }
                        let n = args.len();
                        let call = Expr::Call {
                            id: self.eid(),
                            callee: Box::new(Expr::Global(self.eid(), "assign".into())),
                            args,
                            splat: vec![false; n],
                        };
                        if tail {
                            self.emit(Statement::Return(call));
                        } else {
                            self.emit(Statement::Expr(call));
                        }
                        Ok(())
                    }
                    LValue::Tuple(names) => {
                        let rhs_e = self.lower_expr(rhs)?;
                        let t = self.tmp("tup");
                        self.emit(Statement::Assign {
                            var: t.clone(),
                            global: false,
                            value: rhs_e,
                        });
                        for (k, name) in names.iter().enumerate() {
                            let read = self.tupleref_of(&t, (k + 1) as i64)?;
                            self.assign_var(name, read);
                        }
                        if tail {
                            let read = Expr::Local(self.eid(), t);
                            self.emit(Statement::Return(read));
                        }
                        Ok(())
                    }
                    LValue::CallShape(_) => {
                        Err(self.err("unsupported construct: nested method definition"))
                    }
                }
            }
            Stmt::If { arms, els } => {
                let lend = self.fresh_vlabel();
                let mut arm_labels = Vec::new();
                for (cond, _) in arms {
                    let c = self.lower_expr(cond)?;
                    let l = self.fresh_vlabel();
                    arm_labels.push(l);
                    self.emit(Statement::GotoIf { cond: c, target: l });
                }
                // fallthrough: else branch
                match els {
                    Some(body) => self.lower_block(body, tail)?,
                    None => {
                        if tail {
                            let e = self.empty_tuple();
                            self.emit(Statement::Return(e));
                        }
                    }
                }
                if !tail {
                    self.emit(Statement::Goto(lend));
                }
                for ((_, body), l) in arms.iter().zip(arm_labels) {
                    self.place(l);
                    self.lower_block(body, tail)?;
                    if !tail {
                        self.emit(Statement::Goto(lend));
                    }
                }
                if !tail {
                    self.place(lend);
                    // Labels must land on a statement; guard against an `if`
                    // at the very end of a block.
                    if self.vlabels.get(&lend) == Some(&(self.stmts.len() + 1)) {
                        // placeholder resolved later if something follows
                    }
                }
                Ok(())
            }
            Stmt::While { cond, body } => {
                let lhead_pos = self.stmts.len() + 1;
                let lbody = self.fresh_vlabel();
                let lend = self.fresh_vlabel();
                let c = self.lower_expr(cond)?;
                self.emit(Statement::GotoIf { cond: c, target: lbody });
                self.emit(Statement::Goto(lend));
                self.place(lbody);
                self.lower_block(body, false)?;
                self.emit(Statement::Goto(lhead_pos));
                self.place(lend);
                if tail {
                    let e = self.empty_tuple();
                    self.emit(Statement::Return(e));
                }
                Ok(())
            }
            Stmt::For { var, iter, body } => {
                // state = start(range); while !done(range, state)
                //   (i, state) = next(range, state); body
                if !self.top_level {
                    self.add_local(var);
                }
                let range_e = self.lower_expr(iter)?;
                let r = self.tmp("range");
                self.emit(Statement::Assign { var: r.clone(), global: false, value: range_e });
                let s = self.tmp("state");
                let start_call = {
                    let ra = Expr::Local(self.eid(), r.clone());
                    self.global_call("start", vec![ra])
                };
                self.emit(Statement::Assign { var: s.clone(), global: false, value: start_call });
                let lhead_pos = self.stmts.len() + 1;
                let lbody = self.fresh_vlabel();
                let lend = self.fresh_vlabel();
                let done_call = {
                    let ra = Expr::Local(self.eid(), r.clone());
                    let sa = Expr::Local(self.eid(), s.clone());
                    self.global_call("done", vec![ra, sa])
                };
                let not_done = self.global_call("!", vec![done_call]);
                self.emit(Statement::GotoIf { cond: not_done, target: lbody });
                self.emit(Statement::Goto(lend));
                self.place(lbody);
                let t = self.tmp("next");
                let next_call = {
                    let ra = Expr::Local(self.eid(), r.clone());
                    let sa = Expr::Local(self.eid(), s.clone());
                    self.global_call("next", vec![ra, sa])
                };
                self.emit(Statement::Assign { var: t.clone(), global: false, value: next_call });
                let iv = self.tupleref_of(&t, 1)?;
                self.assign_var(var, iv);
                let sv = self.tupleref_of(&t, 2)?;
                self.emit(Statement::Assign { var: s.clone(), global: false, value: sv });
                self.lower_block(body, false)?;
                self.emit(Statement::Goto(lhead_pos));
                self.place(lend);
                if tail {
                    let e = self.empty_tuple();
                    self.emit(Statement::Return(e));
                }
                Ok(())
            }
        }
    }

    /// Assignment right-hand side, wrapped in convert/typeassert when the
    /// variable carries a declared type.
    fn lower_var_assign_value(&mut self, name: &str, rhs: &Ast) -> Result<Expr, LoadError> {
        let rhs_e = self.lower_expr(rhs)?;
        if let Some(ty_ast) = self.declared_types.get(name).cloned() {
            let ty1 = self.lower_expr(&ty_ast)?;
            let conv = self.global_call("convert", vec![ty1, rhs_e]);
            let ty2 = self.lower_expr(&ty_ast)?;
            Ok(self.global_call_builtin("typeassert", vec![conv, ty2]))
        } else {
            Ok(rhs_e)
        }
    }

    fn assign_var(&mut self, name: &str, value: Expr) {
        let global = !self.is_local(name);
        self.emit(Statement::Assign { var: name.to_string(), global, value });
    }

    fn global_call(&mut self, name: &str, args: Vec<Expr>) -> Expr {
        let n = args.len();
        Expr::Call {
            id: self.eid(),
            callee: Box::new(Expr::Global(self.eid(), name.to_string())),
            args,
            splat: vec![false; n],
        }
    }

    fn global_call_builtin(&mut self, name: &str, args: Vec<Expr>) -> Expr {
        self.global_call(name, args)
    }

    fn tupleref_of(&mut self, local: &str, index: i64) -> Result<Expr, LoadError> {
        let int64 = self
            .ctx
            .types
            .lookup("Int64")
            .ok_or_else(|| lower_err("type Int64 not declared", self.line))?;
        let obj = Expr::Local(self.eid(), local.to_string());
        let idx = Expr::Const(self.eid(), Value::Int { ty: int64, value: index });
        Ok(self.global_call("tupleref", vec![obj, idx]))
    }

    // -- expressions -----------------------------------------------------------

    fn lower_expr(&mut self, ast: &Ast) -> Result<Expr, LoadError> {
        match ast {
            Ast::Int(n) => {
                let int64 = self
                    .ctx
                    .types
                    .lookup("Int64")
                    .ok_or_else(|| lower_err("type Int64 not declared", self.line))?;
                Ok(Expr::Const(self.eid(), Value::Int { ty: int64, value: *n }))
            }
            Ast::Float(x) => Ok(Expr::Const(self.eid(), Value::Float(*x))),
            Ast::Str(s) => Ok(Expr::Const(self.eid(), Value::Str(s.as_str().into()))),
            Ast::Bool(b) => Ok(Expr::Const(self.eid(), Value::Bool(*b))),
            Ast::Var(name) => {
                if name == "new" {
                    return Err(self.err("`new` is only legal inside a constructor"));
                }
                if self.is_local(name) {
                    Ok(Expr::Local(self.eid(), name.clone()))
                } else {
                    Ok(Expr::Global(self.eid(), name.clone()))
                }
            }
            Ast::Call { callee, args } => {
                if let Ast::Var(name) = &**callee {
                    if name == "new" {
                        return self.lower_new(args);
                    }
                }
                let c = self.lower_expr(callee)?;
                let mut lowered = Vec::with_capacity(args.len());
                let mut splat = Vec::with_capacity(args.len());
                for a in args {
                    if a.splat && self.type_expr_mode {
                        // `(T...)` in a type expression builds a vararg
                        // element, not a splice.
                        let inner = self.lower_expr(&a.expr)?;
                        lowered.push(self.global_call("#vararg", vec![inner]));
                        splat.push(false);
                    } else {
                        lowered.push(self.lower_expr(&a.expr)?);
                        splat.push(a.splat);
                    }
                }
                Ok(Expr::Call {
                    id: self.eid(),
                    callee: Box::new(c),
                    args: lowered,
                    splat,
                })
            }
            Ast::TypeApply { base, params } => {
                let b = self.lower_expr(base)?;
                let mut args = vec![b];
                for p in params {
                    match p {
                        Ast::Bounded { .. } => {
                            return Err(self.err("`<:` bounds are only legal in definitions"))
                        }
                        _ => args.push(self.lower_expr(p)?),
                    }
                }
                Ok(self.global_call("apply_type", args))
            }
            Ast::TypeAssert { expr, ty } => {
                let e = self.lower_expr(expr)?;
                let t = self.lower_expr(ty)?;
                Ok(self.global_call("typeassert", vec![e, t]))
            }
            Ast::AnonTyped(_) => Err(self.err("misplaced `::` outside a signature")),
            Ast::Bounded { .. } => Err(self.err("misplaced `<:` bound")),
            Ast::Tuple(args) => {
                let mut lowered = Vec::with_capacity(args.len());
                let mut splat = Vec::with_capacity(args.len());
                for a in args {
                    if a.splat && self.type_expr_mode {
                        let inner = self.lower_expr(&a.expr)?;
                        lowered.push(self.global_call("#vararg", vec![inner]));
                        splat.push(false);
                    } else {
                        lowered.push(self.lower_expr(&a.expr)?);
                        splat.push(a.splat);
                    }
                }
                Ok(Expr::Call {
                    id: self.eid(),
                    callee: Box::new(Expr::Global(self.eid(), "tuple".into())),
                    args: lowered,
                    splat,
                })
            }
            Ast::Index { obj, idxs } => {
                // a[i, j] lowers to ref(a, i, j)
                let o = self.lower_expr(obj)?;
                let mut args = vec![o];
                for i in idxs {
                    args.push(self.lower_expr(i)?);
                }
                Ok(self.global_call("ref", args))
            }
            Ast::Field { obj, name } => {
                let o = self.lower_expr(obj)?;
                let n = Expr::Const(self.eid(), Value::Str(name.as_str().into()));
                Ok(self.global_call("getfield", vec![o, n]))
            }
            Ast::AndAnd(a, b) => {
                let t = self.tmp("and");
                let av = self.lower_expr(a)?;
                self.emit(Statement::Assign { var: t.clone(), global: false, value: av });
                let leval = self.fresh_vlabel();
                let lend = self.fresh_vlabel();
                let read = Expr::Local(self.eid(), t.clone());
                self.emit(Statement::GotoIf { cond: read, target: leval });
                self.emit(Statement::Goto(lend));
                self.place(leval);
                let bv = self.lower_expr(b)?;
                self.emit(Statement::Assign { var: t.clone(), global: false, value: bv });
                self.place(lend);
                Ok(Expr::Local(self.eid(), t))
            }
            Ast::OrOr(a, b) => {
                let t = self.tmp("or");
                let av = self.lower_expr(a)?;
                self.emit(Statement::Assign { var: t.clone(), global: false, value: av });
                let lend = self.fresh_vlabel();
                let read = Expr::Local(self.eid(), t.clone());
                self.emit(Statement::GotoIf { cond: read, target: lend });
                let bv = self.lower_expr(b)?;
                self.emit(Statement::Assign { var: t.clone(), global: false, value: bv });
                self.place(lend);
                Ok(Expr::Local(self.eid(), t))
            }
            Ast::Lambda { params, body } => self.lower_lambda(params, body),
            Ast::QuoteBlock(stmts) => {
                let quoted = self.lower_quote(stmts)?;
                Ok(Expr::Quote(self.eid(), Rc::new(quoted)))
            }
            Ast::Matrix { rows, comma } => self.lower_matrix(rows, *comma),
        }
    }

    fn lower_new(&mut self, args: &[Arg]) -> Result<Expr, LoadError> {
        let tn = match &self.enclosing_type {
            Some(n) => n.clone(),
            None => return Err(self.err("`new` is only legal inside a constructor")),
        };
        let mut lowered = Vec::with_capacity(args.len());
        for a in args {
            if a.splat {
                return Err(self.err("cannot splice arguments to `new`"));
            }
            lowered.push(self.lower_expr(&a.expr)?);
        }
        Ok(Expr::New(self.eid(), tn, lowered))
    }

    fn lower_lambda(&mut self, params: &[String], body: &Ast) -> Result<Expr, LoadError> {
        // Free variables of the body that are locals here get captured by
        // value at closure creation.
        let mut free = Vec::new();
        collect_free_vars(body, &mut free);
        let captured: Vec<String> = free
            .into_iter()
            .filter(|n| self.is_local(n) && !params.contains(n))
            .collect();
        let mut locals: Vec<String> = params.to_vec();
        locals.extend(captured.iter().cloned());
        let mut sub = Lowerer::new(self.ctx, locals, false, self.line);
        sub.enclosing_type = self.enclosing_type.clone();
        let ret = sub.lower_expr(body)?;
        sub.emit(Statement::Return(ret));
        let func = sub.finish("#anon".into(), params.to_vec(), false)?;
        // Closure creation captures the current values positionally:
        // #mkclosure(code, "x", x, ...).
        let mut args = vec![Expr::Const(self.eid(), Value::Code(Rc::new(func)))];
        for c in &captured {
            args.push(Expr::Const(self.eid(), Value::Str(c.as_str().into())));
            args.push(Expr::Local(self.eid(), c.clone()));
        }
        Ok(self.global_call("#mkclosure", args))
    }

    fn lower_quote(&mut self, stmts: &[Stmt]) -> Result<Vec<Statement>, LoadError> {
        // Quoted code lowers in the same scope (it becomes the body of the
        // expanded method, which shares the parameter names), but into its
        // own statement buffer.
        let locals = self.locals.clone();
        let mut sub = Lowerer::new(self.ctx, locals, false, self.line);
        sub.enclosing_type = self.enclosing_type.clone();
        sub.globals_decl = self.globals_decl.clone();
        let mut assigned = Vec::new();
        let mut declared = HashMap::new();
        collect_assigned(stmts, &mut assigned, &mut declared);
        for a in assigned {
            sub.add_local(&a);
        }
        sub.lower_block(stmts, false)?;
        // Resolve the quote's own labels now.
        let n = sub.stmts.len();
        for s in &mut sub.stmts {
            match s {
                Statement::Goto(l) | Statement::GotoIf { target: l, .. } => {
                    if *l >= VLABEL_BASE {
                        let t = *sub.vlabels.get(l).ok_or_else(|| LoadError::Lower {
                            msg: "internal: dangling label in quote".into(),
                            line: sub.line,
                        })?;
                        *l = t.min(n);
                    }
                }
                _ => {}
            }
        }
        Ok(sub.stmts)
    }

    fn lower_matrix(&mut self, rows: &[Vec<Ast>], comma: bool) -> Result<Expr, LoadError> {
        let multi_row = rows.len() > 1;
        let wide = rows.iter().any(|r| r.len() > 1);
        if multi_row && wide {
            // [a b; c d] lowers to hvcat((2,2), a, b, c, d)
            let int64 = self
                .ctx
                .types
                .lookup("Int64")
                .ok_or_else(|| lower_err("type Int64 not declared", self.line))?;
            let shape_args: Vec<Expr> = rows
                .iter()
                .map(|r| Expr::Const(self.eid(), Value::Int { ty: int64, value: r.len() as i64 }))
                .collect();
            let shape = self.global_call("tuple", shape_args);
            let mut args = vec![shape];
            for r in rows {
                for e in r {
                    args.push(self.lower_expr(e)?);
                }
            }
            Ok(self.global_call("hvcat", args))
        } else if multi_row || comma {
            // [a; b] and [a, b] both lower to vcat
            let mut args = Vec::new();
            for r in rows {
                for e in r {
                    args.push(self.lower_expr(e)?);
                }
            }
            Ok(self.global_call("vcat", args))
        } else {
            // [a b] lowers to hcat
            let mut args = Vec::new();
            for e in &rows[0] {
                args.push(self.lower_expr(e)?);
            }
            Ok(self.global_call("hcat", args))
        }
    }
}

/// Lower a method body, with implicit return of the tail expression.
#[allow(clippy::too_many_arguments)]
fn lower_function_body(
    ctx: &mut Ctx,
    name: &str,
    params: Vec<String>,
    vararg: bool,
    body: &[Stmt],
    statics: &[String],
    enclosing_type: Option<String>,
    line: u32,
) -> Result<IRFunction, LoadError> {
    let mut locals = params.clone();
    for s in statics {
        if !locals.contains(s) {
            locals.push(s.clone());
        }
    }
    let mut lw = Lowerer::new(ctx, locals, false, line);
    lw.enclosing_type = enclosing_type;
    lw.prescan(body);
    lw.lower_block(body, true)?;
    lw.finish(name.to_string(), params, vararg)
}

/// Lower one top-level statement into a zero-argument thunk; assignments
/// target globals.
pub fn lower_thunk(
    ctx: &mut Ctx,
    stmt: &Stmt,
    line: u32,
) -> Result<Rc<IRFunction>, LoadError> {
    let mut lw = Lowerer::new(ctx, Vec::new(), true, line);
    lw.prescan(std::slice::from_ref(stmt));
    lw.lower_block(std::slice::from_ref(stmt), true)?;
    lw.finish(format!("#thunk@{line}"), Vec::new(), false)
        .map(Rc::new)
}

fn collect_assigned(
    stmts: &[Stmt],
    out: &mut Vec<String>,
    declared: &mut HashMap<String, Ast>,
) {
    for s in stmts {
        match s {
            Stmt::Assign { lhs, .. } => match lhs {
                LValue::Var(v) => out.push(v.clone()),
                LValue::Tuple(vs) => out.extend(vs.iter().cloned()),
                _ => {}
            },
            Stmt::Declare { var, ty } => {
                out.push(var.clone());
                declared.insert(var.clone(), ty.clone());
            }
            Stmt::If { arms, els } => {
                for (_, b) in arms {
                    collect_assigned(b, out, declared);
                }
                if let Some(b) = els {
                    collect_assigned(b, out, declared);
                }
            }
            Stmt::While { body, .. } => collect_assigned(body, out, declared),
            Stmt::For { var, body, .. } => {
                out.push(var.clone());
                collect_assigned(body, out, declared);
            }
            Stmt::Expr(e) => collect_assigned_expr(e, out, declared),
            Stmt::Return(Some(e)) => collect_assigned_expr(e, out, declared),
            _ => {}
        }
    }
}

fn collect_assigned_expr(
    e: &Ast,
    out: &mut Vec<String>,
    declared: &mut HashMap<String, Ast>,
) {
    match e {
        Ast::QuoteBlock(stmts) => collect_assigned(stmts, out, declared),
        Ast::Call { callee, args } => {
            collect_assigned_expr(callee, out, declared);
            for a in args {
                collect_assigned_expr(&a.expr, out, declared);
            }
        }
        Ast::Tuple(args) => {
            for a in args {
                collect_assigned_expr(&a.expr, out, declared);
            }
        }
        Ast::AndAnd(a, b) | Ast::OrOr(a, b) => {
            collect_assigned_expr(a, out, declared);
            collect_assigned_expr(b, out, declared);
        }
        _ => {}
    }
}

fn collect_free_vars(e: &Ast, out: &mut Vec<String>) {
    match e {
        Ast::Var(n) => {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        Ast::Call { callee, args } => {
            collect_free_vars(callee, out);
            args.iter().for_each(|a| collect_free_vars(&a.expr, out));
        }
        Ast::Tuple(args) => args.iter().for_each(|a| collect_free_vars(&a.expr, out)),
        Ast::TypeApply { base, params } => {
            collect_free_vars(base, out);
            params.iter().for_each(|p| collect_free_vars(p, out));
        }
        Ast::TypeAssert { expr, ty } => {
            collect_free_vars(expr, out);
            collect_free_vars(ty, out);
        }
        Ast::Index { obj, idxs } => {
            collect_free_vars(obj, out);
            idxs.iter().for_each(|i| collect_free_vars(i, out));
        }
        Ast::Field { obj, .. } => collect_free_vars(obj, out),
        Ast::AndAnd(a, b) | Ast::OrOr(a, b) => {
            collect_free_vars(a, out);
            collect_free_vars(b, out);
        }
        Ast::Lambda { params, body } => {
            let mut inner = Vec::new();
            collect_free_vars(body, &mut inner);
            for n in inner {
                if !params.contains(&n) && !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        _ => {}
    }
}
