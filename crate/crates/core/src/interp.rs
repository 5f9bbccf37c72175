//! The concrete interpreter: statement execution with a program counter,
//! eager left-to-right argument evaluation, intrinsic functions for the
//! object model and native arithmetic, and constructor application.
//! Run-time errors are raised conditions that propagate to the CLI; there is
//! no user-level catch.

use crate::ctx::Ctx;
use crate::dispatch::{self, CacheEntry};
use crate::display::{value_to_display, value_to_string};
use crate::ir::{Expr, IRFunction, Statement};
use crate::lattice;
use crate::optimize::AnnotatedFunction;
use crate::types::{TypeKind, TypeNameId, TypeTerm};
use crate::value::{egal, typeof_value, value_as_type, CompositeVal, Value};
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Debug, Clone)]
pub struct RtError {
    pub msg: String,
}

impl RtError {
    pub fn new(msg: impl Into<String>) -> RtError {
        RtError { msg: msg.into() }
    }
}

impl std::fmt::Display for RtError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.msg)
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Builtin {
    Is,
    Typeof,
    Typeassert,
    TupleNew,
    Tupleref,
    Tuplelen,
    Getfield,
    ApplyType,
    Applicable,
    Error,
    UnionType,
    VarargType,
    Print,
    Println,
    AddInt,
    SubInt,
    MulInt,
    DivInt,
    RemInt,
    NegInt,
    EqInt,
    LtInt,
    LeInt,
    AddFloat,
    SubFloat,
    MulFloat,
    DivFloat,
    NegFloat,
    PowFloat,
    EqFloat,
    LtFloat,
    LeFloat,
    NotBool,
    EqBool,
    SextInt64,
    TruncInt32,
    SiToF64,
    FToSi64,
    Reinterpret,
    StringEq,
    Strcat,
    MkClosure,
}

pub const BUILTIN_NAMES: &[(&str, Builtin)] = &[
    ("is", Builtin::Is),
    ("typeof", Builtin::Typeof),
    ("typeassert", Builtin::Typeassert),
    ("tuple", Builtin::TupleNew),
    ("tupleref", Builtin::Tupleref),
    ("tuplelen", Builtin::Tuplelen),
    ("getfield", Builtin::Getfield),
    ("apply_type", Builtin::ApplyType),
    ("applicable", Builtin::Applicable),
    ("error", Builtin::Error),
    ("Union", Builtin::UnionType),
    ("#vararg", Builtin::VarargType),
    ("print", Builtin::Print),
    ("println", Builtin::Println),
    ("add_int", Builtin::AddInt),
    ("sub_int", Builtin::SubInt),
    ("mul_int", Builtin::MulInt),
    ("div_int", Builtin::DivInt),
    ("rem_int", Builtin::RemInt),
    ("neg_int", Builtin::NegInt),
    ("eq_int", Builtin::EqInt),
    ("lt_int", Builtin::LtInt),
    ("le_int", Builtin::LeInt),
    ("add_float", Builtin::AddFloat),
    ("sub_float", Builtin::SubFloat),
    ("mul_float", Builtin::MulFloat),
    ("div_float", Builtin::DivFloat),
    ("neg_float", Builtin::NegFloat),
    ("pow_float", Builtin::PowFloat),
    ("eq_float", Builtin::EqFloat),
    ("lt_float", Builtin::LtFloat),
    ("le_float", Builtin::LeFloat),
    ("not_bool", Builtin::NotBool),
    ("eq_bool", Builtin::EqBool),
    ("sext_int64", Builtin::SextInt64),
    ("trunc_int32", Builtin::TruncInt32),
    ("sitofp64", Builtin::SiToF64),
    ("fptosi64", Builtin::FToSi64),
    ("reinterpret", Builtin::Reinterpret),
    ("string_eq", Builtin::StringEq),
    ("strcat", Builtin::Strcat),
    ("#mkclosure", Builtin::MkClosure),
];

pub fn register_builtins(ctx: &mut Ctx) {
    for (name, b) in BUILTIN_NAMES {
        let fid = ctx.ensure_function(name);
        ctx.gf_mut(fid).builtin = Some(*b);
    }
    ctx.globals
        .insert("Any".into(), Value::Type(TypeTerm::Any));
    ctx.globals
        .insert("None".into(), Value::Type(TypeTerm::Bottom));
    ctx.globals
        .insert("ANY".into(), Value::Type(TypeTerm::AnyHint));
    ctx.globals.insert(
        "Tuple".into(),
        Value::Type(TypeTerm::Tuple(vec![TypeTerm::vararg(TypeTerm::Any)])),
    );
    let tf = ctx.types.type_family;
    ctx.globals
        .insert("Type".into(), Value::Type(TypeTerm::Apply(tf, Vec::new())));
    let sf = ctx.types.string_family;
    ctx.globals
        .insert("String".into(), Value::Type(TypeTerm::Apply(sf, Vec::new())));
    let ff = ctx.types.function_family;
    ctx.globals.insert(
        "Function".into(),
        Value::Type(TypeTerm::Apply(ff, Vec::new())),
    );
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct Activation {
    func: Rc<IRFunction>,
    ann: Option<Rc<AnnotatedFunction>>,
    locals: HashMap<String, Value>,
}

/// Execute a function body with no annotations (load-time thunks, staged
/// bodies, closures).
pub fn run_function_raw(
    ctx: &mut Ctx,
    func: &Rc<IRFunction>,
    args: Vec<Value>,
    statics: &[(String, Value)],
) -> Result<Value, RtError> {
    exec(ctx, func.clone(), None, args, statics, &[])
}

/// Execute an optimized specialization, with direct-call targets honored
/// and (when enabled) run-time tags checked against the annotations.
pub fn run_annotated(
    ctx: &mut Ctx,
    ann: Rc<AnnotatedFunction>,
    args: Vec<Value>,
    statics: &[(String, Value)],
) -> Result<Value, RtError> {
    let func = ann.func.clone();
    exec(ctx, func, Some(ann), args, statics, &[])
}

fn exec(
    ctx: &mut Ctx,
    func: Rc<IRFunction>,
    ann: Option<Rc<AnnotatedFunction>>,
    args: Vec<Value>,
    statics: &[(String, Value)],
    captured: &[(String, Value)],
) -> Result<Value, RtError> {
    let mut locals = HashMap::new();
    bind_args(&func, args, &mut locals)?;
    for (k, v) in captured {
        locals.entry(k.clone()).or_insert_with(|| v.clone());
    }
    for (k, v) in statics {
        locals.insert(k.clone(), v.clone());
    }
    let mut act = Activation { func, ann, locals };
    let n = act.func.nstatements();
    let mut pc = 1usize;
    loop {
        if pc > n {
            return Err(RtError::new(format!(
                "control fell off the end of {}",
                act.func.name
            )));
        }
        let stmt = act.func.stmt(pc).clone();
        match stmt {
            Statement::Assign { var, global, value } => {
                let v = eval(ctx, &mut act, &value)?;
                if global {
                    ctx.globals.insert(var, v);
                } else {
                    act.locals.insert(var, v);
                }
                pc += 1;
            }
            Statement::Goto(l) => pc = l,
            Statement::GotoIf { cond, target } => {
                let v = eval(ctx, &mut act, &cond)?;
                match v {
                    Value::Bool(true) => pc = target,
                    Value::Bool(false) => pc += 1,
                    other => {
                        return Err(RtError::new(format!(
                            "non-boolean condition of type {}",
                            crate::display::type_to_string(
                                &ctx.types,
                                &typeof_value(&ctx.types, &other)
                            )
                        )))
                    }
                }
            }
            Statement::Return(e) => return eval(ctx, &mut act, &e),
            Statement::Expr(e) => {
                eval(ctx, &mut act, &e)?;
                pc += 1;
            }
        }
    }
}

fn bind_args(
    func: &IRFunction,
    mut args: Vec<Value>,
    locals: &mut HashMap<String, Value>,
) -> Result<(), RtError> {
    let np = func.params.len();
    if func.vararg {
        if args.len() + 1 < np {
            return Err(RtError::new(format!(
                "{} expects at least {} arguments, got {}",
                func.name,
                np - 1,
                args.len()
            )));
        }
        let tail: Vec<Value> = args.split_off(np - 1);
        for (name, v) in func.params[..np - 1].iter().zip(args) {
            locals.insert(name.clone(), v);
        }
        locals.insert(func.params[np - 1].clone(), Value::Tuple(tail.into()));
    } else {
        if args.len() != np {
            return Err(RtError::new(format!(
                "{} expects {} arguments, got {}",
                func.name,
                np,
                args.len()
            )));
        }
        for (name, v) in func.params.iter().zip(args) {
            locals.insert(name.clone(), v);
        }
    }
    Ok(())
}

fn eval(ctx: &mut Ctx, act: &mut Activation, e: &Expr) -> Result<Value, RtError> {
    let v = match e {
        Expr::Const(_, v) => v.clone(),
        Expr::Local(_, name) => match act.locals.get(name) {
            Some(v) => v.clone(),
            None => return Err(RtError::new(format!("variable {name} not defined"))),
        },
        Expr::Global(_, name) => match ctx.globals.get(name) {
            Some(v) => v.clone(),
            None => return Err(RtError::new(format!("{name} not defined"))),
        },
        Expr::Call { id, callee, args, splat } => {
            let f = eval(ctx, act, callee)?;
            let mut argv = Vec::with_capacity(args.len());
            for (i, a) in args.iter().enumerate() {
                let v = eval(ctx, act, a)?;
                if splat.get(i).copied().unwrap_or(false) {
                    match v {
                        Value::Tuple(elems) => argv.extend(elems.iter().cloned()),
                        other => {
                            return Err(RtError::new(format!(
                                "cannot splice a non-tuple value of type {}",
                                crate::display::type_to_string(
                                    &ctx.types,
                                    &typeof_value(&ctx.types, &other)
                                )
                            )))
                        }
                    }
                } else {
                    argv.push(v);
                }
            }
            // A devirtualized call site names its method directly and skips
            // the dispatch scan.
            let direct = act
                .ann
                .as_ref()
                .and_then(|a| a.direct_targets.get(id).copied());
            match (direct, &f) {
                (Some((fid, mid)), Value::Func(vf)) if *vf == fid => {
                    let arg_types: Vec<TypeTerm> =
                        argv.iter().map(|a| typeof_value(&ctx.types, a)).collect();
                    let entry = dispatch::dispatch_direct(ctx, fid, mid, &arg_types)?;
                    run_entry(ctx, &entry, argv, &arg_types)?
                }
                _ => call_value(ctx, f, argv)?,
            }
        }
        Expr::New(_, type_name, args) => {
            let tn = ctx
                .types
                .lookup(type_name)
                .ok_or_else(|| RtError::new(format!("unknown type {type_name}")))?;
            let mut fields = Vec::with_capacity(args.len());
            for a in args {
                fields.push(eval(ctx, act, a)?);
            }
            let params = new_params(ctx, act, tn)?;
            allocate(ctx, tn, params, fields)?
        }
        Expr::Quote(_, stmts) => {
            let mut locals: Vec<String> = act.func.params.clone();
            for s in stmts.iter() {
                if let Statement::Assign { var, global: false, .. } = s {
                    if !locals.contains(var) {
                        locals.push(var.clone());
                    }
                }
            }
            let mut f = IRFunction {
                name: format!("{}#quote", act.func.name),
                params: act.func.params.clone(),
                vararg: act.func.vararg,
                locals,
                body: stmts.as_ref().clone(),
                n_exprs: 0,
            };
            f.renumber();
            Value::Code(Rc::new(f))
        }
    };
    if ctx.config.check_annotations {
        if let Some(ann) = &act.ann {
            if let Some(expected) = ann.expr_types.get(&e.id()) {
                let tag = typeof_value(&ctx.types, &v);
                if !lattice::subtype(&ctx.types, &tag, expected) {
                    return Err(RtError::new(format!(
                        "annotation violated in {}: value of type {} where inference said {}",
                        act.func.name,
                        crate::display::type_to_string(&ctx.types, &tag),
                        crate::display::type_to_string(&ctx.types, expected)
                    )));
                }
            }
        }
    }
    Ok(v)
}

/// Instantiation parameters for `new`, read from the static parameters in
/// scope (the enclosing type's formals).
fn new_params(
    ctx: &Ctx,
    act: &Activation,
    tn: TypeNameId,
) -> Result<Vec<TypeTerm>, RtError> {
    let formals = ctx.types.name(tn).formals.clone();
    let mut params = Vec::with_capacity(formals.len());
    for f in &formals {
        match act.locals.get(&f.name) {
            Some(Value::Type(t)) => params.push(t.clone()),
            _ => {
                return Err(RtError::new(format!(
                    "type parameter {} undetermined in constructor of {}",
                    f.name,
                    ctx.types.name(tn).name
                )))
            }
        }
    }
    Ok(params)
}

/// Allocate a composite instance, converting field values to the declared
/// field types where needed.
fn allocate(
    ctx: &mut Ctx,
    tn: TypeNameId,
    params: Vec<TypeTerm>,
    fields: Vec<Value>,
) -> Result<Value, RtError> {
    let name = ctx.types.name(tn).name.clone();
    let nf = ctx.types.name(tn).field_names.len();
    if fields.len() != nf {
        return Err(RtError::new(format!(
            "{} expects {} fields, got {}",
            name,
            nf,
            fields.len()
        )));
    }
    let ftypes = ctx.types.field_instance(tn, &params);
    let mut converted = Vec::with_capacity(fields.len());
    for (v, ft) in fields.into_iter().zip(ftypes.iter()) {
        if ft.has_vars() {
            converted.push(v);
            continue;
        }
        let tag = typeof_value(&ctx.types, &v);
        if lattice::subtype(&ctx.types, &tag, ft) {
            converted.push(v);
        } else {
            let conv = ctx
                .globals
                .get("convert")
                .cloned()
                .ok_or_else(|| field_type_error(ctx, &name, &tag, ft))?;
            let cv = call_value(ctx, conv, vec![Value::Type(ft.clone()), v])?;
            let ctag = typeof_value(&ctx.types, &cv);
            if !lattice::subtype(&ctx.types, &ctag, ft) {
                return Err(field_type_error(ctx, &name, &ctag, ft));
            }
            converted.push(cv);
        }
    }
    Ok(Value::Composite(Rc::new(CompositeVal {
        ty: tn,
        params,
        fields: converted,
    })))
}

fn field_type_error(ctx: &Ctx, name: &str, tag: &TypeTerm, ft: &TypeTerm) -> RtError {
    RtError::new(format!(
        "field of {} expects {}, got {}",
        name,
        crate::display::type_to_string(&ctx.types, ft),
        crate::display::type_to_string(&ctx.types, tag)
    ))
}

/// Call any value: generic functions route through dispatch, anonymous
/// functions execute directly, composite type objects construct instances.
pub fn call_value(ctx: &mut Ctx, callee: Value, args: Vec<Value>) -> Result<Value, RtError> {
    match callee {
        Value::Func(fid) => {
            if let Some(b) = ctx.gf(fid).builtin {
                return call_builtin(ctx, b, args);
            }
            let arg_types: Vec<TypeTerm> =
                args.iter().map(|a| typeof_value(&ctx.types, a)).collect();
            let entry = dispatch::dispatch(ctx, fid, &arg_types)?;
            run_entry(ctx, &entry, args, &arg_types)
        }
        Value::Closure(c) => {
            exec(ctx, c.func.clone(), None, args, &[], &c.captured)
        }
        Value::Type(t) => construct_from_type(ctx, &t, args),
        other => Err(RtError::new(format!(
            "value of type {} is not callable",
            crate::display::type_to_string(&ctx.types, &typeof_value(&ctx.types, &other))
        ))),
    }
}

fn run_entry(
    ctx: &mut Ctx,
    entry: &Rc<CacheEntry>,
    args: Vec<Value>,
    arg_types: &[TypeTerm],
) -> Result<Value, RtError> {
    let spec = entry
        .spec
        .clone()
        .ok_or_else(|| RtError::new("internal: dummy cache entry executed"))?;
    let statics = if spec.resolve_statics_per_call {
        dispatch::solve_statics_for_call(ctx, &spec.method, arg_types)?
    } else {
        spec.static_env.clone()
    };
    run_annotated(ctx, spec.func.clone(), args, &statics)
}

/// Apply a type object as a function: composite types construct instances.
pub fn construct_from_type(
    ctx: &mut Ctx,
    t: &TypeTerm,
    args: Vec<Value>,
) -> Result<Value, RtError> {
    match t {
        TypeTerm::Apply(tn, _) if ctx.types.name(*tn).kind == TypeKind::Composite => {
            construct(ctx, *tn, args)
        }
        _ => Err(RtError::new(format!(
            "type {} is not callable",
            crate::display::type_to_string(&ctx.types, t)
        ))),
    }
}

/// Construct an instance of a composite via its constructor methods.
pub fn construct(ctx: &mut Ctx, tn: TypeNameId, args: Vec<Value>) -> Result<Value, RtError> {
    let ctor = match ctx.types.name(tn).ctor {
        Some(fid) => fid,
        None => {
            return Err(RtError::new(format!(
                "type {} has no constructors",
                ctx.types.name(tn).name
            )))
        }
    };
    let arg_types: Vec<TypeTerm> = args.iter().map(|a| typeof_value(&ctx.types, a)).collect();
    let entry = dispatch::dispatch(ctx, ctor, &arg_types)?;
    run_entry(ctx, &entry, args, &arg_types)
}

// ---------------------------------------------------------------------------
// Builtins
// ---------------------------------------------------------------------------

fn int_family(ctx: &Ctx, v: &Value) -> Result<(TypeNameId, u32, i64), RtError> {
    match v {
        Value::Int { ty, value } => Ok((*ty, ctx.types.name(*ty).nbits, *value)),
        other => Err(RtError::new(format!(
            "expected an integer, got {}",
            crate::display::type_to_string(&ctx.types, &typeof_value(&ctx.types, other))
        ))),
    }
}

fn wrap_width(bits: u32, x: i64) -> i64 {
    match bits {
        64 => x,
        32 => x as i32 as i64,
        16 => x as i16 as i64,
        8 => x as i8 as i64,
        _ => x,
    }
}

fn int_binop(
    ctx: &Ctx,
    args: &[Value],
    f: impl Fn(i64, i64) -> Result<i64, RtError>,
) -> Result<Value, RtError> {
    let (ta, wa, a) = int_family(ctx, &args[0])?;
    let (tb, _, b) = int_family(ctx, &args[1])?;
    if ta != tb {
        return Err(RtError::new("integer intrinsic applied to mixed widths"));
    }
    Ok(Value::Int { ty: ta, value: wrap_width(wa, f(a, b)?) })
}

fn int_cmp(ctx: &Ctx, args: &[Value], f: impl Fn(i64, i64) -> bool) -> Result<Value, RtError> {
    let (ta, _, a) = int_family(ctx, &args[0])?;
    let (tb, _, b) = int_family(ctx, &args[1])?;
    if ta != tb {
        return Err(RtError::new("integer intrinsic applied to mixed widths"));
    }
    Ok(Value::Bool(f(a, b)))
}

fn as_float(ctx: &Ctx, v: &Value) -> Result<f64, RtError> {
    match v {
        Value::Float(x) => Ok(*x),
        other => Err(RtError::new(format!(
            "expected a Float64, got {}",
            crate::display::type_to_string(&ctx.types, &typeof_value(&ctx.types, other))
        ))),
    }
}

fn need(args: &[Value], n: usize, name: &str) -> Result<(), RtError> {
    if args.len() != n {
        return Err(RtError::new(format!(
            "{name} expects {n} arguments, got {}",
            args.len()
        )));
    }
    Ok(())
}

fn int64_family(ctx: &Ctx) -> Result<TypeNameId, RtError> {
    ctx.types
        .lookup("Int64")
        .ok_or_else(|| RtError::new("type Int64 not declared"))
}

pub fn call_builtin(ctx: &mut Ctx, b: Builtin, args: Vec<Value>) -> Result<Value, RtError> {
    use Builtin::*;
    match b {
        Is => {
            need(&args, 2, "is")?;
            Ok(Value::Bool(egal(&args[0], &args[1])))
        }
        Typeof => {
            need(&args, 1, "typeof")?;
            Ok(Value::Type(typeof_value(&ctx.types, &args[0])))
        }
        Typeassert => {
            need(&args, 2, "typeassert")?;
            let t = value_as_type(&ctx.types, &args[1])
                .ok_or_else(|| RtError::new("typeassert expects a type"))?;
            let tag = typeof_value(&ctx.types, &args[0]);
            if lattice::subtype(&ctx.types, &tag, &t) {
                Ok(args.into_iter().next().unwrap())
            } else {
                Err(RtError::new(format!(
                    "type assertion failed: expected {}, got {}",
                    crate::display::type_to_string(&ctx.types, &t),
                    crate::display::type_to_string(&ctx.types, &tag)
                )))
            }
        }
        TupleNew => {
            ctx.stats.tuple_allocs += 1;
            Ok(Value::Tuple(args.into()))
        }
        Tupleref => {
            need(&args, 2, "tupleref")?;
            let elems = match &args[0] {
                Value::Tuple(es) => es.clone(),
                _ => return Err(RtError::new("tupleref expects a tuple")),
            };
            let (_, _, i) = int_family(ctx, &args[1])?;
            if i < 1 || i as usize > elems.len() {
                return Err(RtError::new(format!(
                    "tuple index {i} out of range 1..{}",
                    elems.len()
                )));
            }
            Ok(elems[i as usize - 1].clone())
        }
        Tuplelen => {
            need(&args, 1, "tuplelen")?;
            let elems = match &args[0] {
                Value::Tuple(es) => es.clone(),
                _ => return Err(RtError::new("tuplelen expects a tuple")),
            };
            Ok(Value::Int { ty: int64_family(ctx)?, value: elems.len() as i64 })
        }
        Getfield => {
            need(&args, 2, "getfield")?;
            let c = match &args[0] {
                Value::Composite(c) => c.clone(),
                _ => return Err(RtError::new("getfield expects a composite value")),
            };
            let idx = match &args[1] {
                Value::Str(name) => ctx
                    .types
                    .name(c.ty)
                    .field_names
                    .iter()
                    .position(|f| f.as_str() == &**name)
                    .ok_or_else(|| {
                        RtError::new(format!(
                            "type {} has no field {name}",
                            ctx.types.name(c.ty).name
                        ))
                    })?,
                Value::Int { value, .. } => {
                    let i = *value;
                    if i < 1 || i as usize > c.fields.len() {
                        return Err(RtError::new(format!("field index {i} out of range")));
                    }
                    i as usize - 1
                }
                _ => return Err(RtError::new("getfield expects a field name or index")),
            };
            Ok(c.fields[idx].clone())
        }
        ApplyType => {
            if args.is_empty() {
                return Err(RtError::new("apply_type expects a type"));
            }
            let base = match &args[0] {
                Value::Type(TypeTerm::Apply(f, ps)) => (*f, ps.clone()),
                other => {
                    return Err(RtError::new(format!(
                        "cannot apply parameters to {}",
                        value_to_string(&ctx.types, other)
                    )))
                }
            };
            let mut params = base.1;
            for a in &args[1..] {
                match a {
                    Value::Type(t) => params.push(t.clone()),
                    Value::Int { value, .. } => params.push(TypeTerm::Int(*value)),
                    other => {
                        return Err(RtError::new(format!(
                            "invalid type parameter {}",
                            value_to_string(&ctx.types, other)
                        )))
                    }
                }
            }
            match ctx.types.apply_type(base.0, params) {
                Ok(t) => Ok(Value::Type(t)),
                Err(e) => Err(RtError::new(e.to_string())),
            }
        }
        Applicable => {
            if args.is_empty() {
                return Err(RtError::new("applicable expects a function"));
            }
            let f = args[0].clone();
            let rest = &args[1..];
            match f {
                Value::Func(fid) => {
                    if ctx.gf(fid).builtin.is_some() {
                        return Ok(Value::Bool(true));
                    }
                    let types: Vec<TypeTerm> =
                        rest.iter().map(|a| typeof_value(&ctx.types, a)).collect();
                    let tuple = TypeTerm::Tuple(types);
                    Ok(Value::Bool(dispatch::first_match(ctx, fid, &tuple).is_some()))
                }
                Value::Closure(c) => Ok(Value::Bool(
                    rest.len() == c.func.params.len()
                        || (c.func.vararg && rest.len() + 1 >= c.func.params.len()),
                )),
                _ => Ok(Value::Bool(false)),
            }
        }
        Error => {
            let msg: String = args
                .iter()
                .map(|a| value_to_display(&ctx.types, a))
                .collect::<Vec<_>>()
                .join("");
            Err(RtError::new(msg))
        }
        UnionType => {
            let mut members = Vec::with_capacity(args.len());
            for a in &args {
                members.push(
                    value_as_type(&ctx.types, a)
                        .ok_or_else(|| RtError::new("Union expects types"))?,
                );
            }
            Ok(Value::Type(lattice::union_all(&ctx.types, members)))
        }
        VarargType => {
            need(&args, 1, "...")?;
            let t = value_as_type(&ctx.types, &args[0])
                .ok_or_else(|| RtError::new("... expects a type"))?;
            Ok(Value::Type(TypeTerm::vararg(t)))
        }
        Print | Println => {
            let mut text: String = args
                .iter()
                .map(|a| value_to_display(&ctx.types, a))
                .collect::<Vec<_>>()
                .join("");
            if b == Println {
                text.push('\n');
            }
            ctx.emit(&text);
            Ok(Value::Tuple(Vec::new().into()))
        }
        AddInt => int_binop(ctx, &args, |a, b| Ok(a.wrapping_add(b))),
        SubInt => int_binop(ctx, &args, |a, b| Ok(a.wrapping_sub(b))),
        MulInt => int_binop(ctx, &args, |a, b| Ok(a.wrapping_mul(b))),
        DivInt => int_binop(ctx, &args, |a, b| {
            if b == 0 {
                Err(RtError::new("integer division by zero"))
            } else {
                Ok(a.wrapping_div(b))
            }
        }),
        RemInt => int_binop(ctx, &args, |a, b| {
            if b == 0 {
                Err(RtError::new("integer division by zero"))
            } else {
                Ok(a.wrapping_rem(b))
            }
        }),
        NegInt => {
            need(&args, 1, "neg_int")?;
            let (t, w, a) = int_family(ctx, &args[0])?;
            Ok(Value::Int { ty: t, value: wrap_width(w, a.wrapping_neg()) })
        }
        EqInt => int_cmp(ctx, &args, |a, b| a == b),
        LtInt => int_cmp(ctx, &args, |a, b| a < b),
        LeInt => int_cmp(ctx, &args, |a, b| a <= b),
        AddFloat => Ok(Value::Float(as_float(ctx, &args[0])? + as_float(ctx, &args[1])?)),
        SubFloat => Ok(Value::Float(as_float(ctx, &args[0])? - as_float(ctx, &args[1])?)),
        MulFloat => Ok(Value::Float(as_float(ctx, &args[0])? * as_float(ctx, &args[1])?)),
        DivFloat => Ok(Value::Float(as_float(ctx, &args[0])? / as_float(ctx, &args[1])?)),
        NegFloat => Ok(Value::Float(-as_float(ctx, &args[0])?)),
        PowFloat => Ok(Value::Float(as_float(ctx, &args[0])?.powf(as_float(ctx, &args[1])?))),
        EqFloat => Ok(Value::Bool(as_float(ctx, &args[0])? == as_float(ctx, &args[1])?)),
        LtFloat => Ok(Value::Bool(as_float(ctx, &args[0])? < as_float(ctx, &args[1])?)),
        LeFloat => Ok(Value::Bool(as_float(ctx, &args[0])? <= as_float(ctx, &args[1])?)),
        NotBool => match &args[0] {
            Value::Bool(x) => Ok(Value::Bool(!x)),
            _ => Err(RtError::new("not_bool expects a Bool")),
        },
        EqBool => match (&args[0], &args[1]) {
            (Value::Bool(x), Value::Bool(y)) => Ok(Value::Bool(x == y)),
            _ => Err(RtError::new("eq_bool expects Bools")),
        },
        SextInt64 => {
            need(&args, 1, "sext_int64")?;
            let (_, _, a) = int_family(ctx, &args[0])?;
            Ok(Value::Int { ty: int64_family(ctx)?, value: a })
        }
        TruncInt32 => {
            need(&args, 1, "trunc_int32")?;
            let (_, _, a) = int_family(ctx, &args[0])?;
            let t = ctx
                .types
                .lookup("Int32")
                .ok_or_else(|| RtError::new("type Int32 not declared"))?;
            Ok(Value::Int { ty: t, value: a as i32 as i64 })
        }
        SiToF64 => {
            need(&args, 1, "sitofp64")?;
            let (_, _, a) = int_family(ctx, &args[0])?;
            Ok(Value::Float(a as f64))
        }
        FToSi64 => {
            need(&args, 1, "fptosi64")?;
            let x = as_float(ctx, &args[0])?;
            Ok(Value::Int { ty: int64_family(ctx)?, value: x as i64 })
        }
        Reinterpret => {
            need(&args, 2, "reinterpret")?;
            let t = value_as_type(&ctx.types, &args[0])
                .ok_or_else(|| RtError::new("reinterpret expects a type"))?;
            let target = match &t {
                TypeTerm::Apply(f, _) => ctx.types.name(*f).name.clone(),
                _ => return Err(RtError::new("reinterpret expects a bits type")),
            };
            match (&args[1], target.as_str()) {
                (Value::Int { value, .. }, "Float64") => {
                    Ok(Value::Float(f64::from_bits(*value as u64)))
                }
                (Value::Float(x), "Int64") => Ok(Value::Int {
                    ty: int64_family(ctx)?,
                    value: x.to_bits() as i64,
                }),
                (v, _) => {
                    let tag = typeof_value(&ctx.types, v);
                    if let TypeTerm::Apply(f, _) = &tag {
                        if ctx.types.name(*f).name == target {
                            return Ok(v.clone());
                        }
                    }
                    Err(RtError::new("unsupported reinterpret"))
                }
            }
        }
        StringEq => match (&args[0], &args[1]) {
            (Value::Str(a), Value::Str(b)) => Ok(Value::Bool(a == b)),
            _ => Err(RtError::new("string_eq expects Strings")),
        },
        Strcat => {
            let mut s = String::new();
            for a in &args {
                match a {
                    Value::Str(x) => s.push_str(x),
                    _ => return Err(RtError::new("strcat expects Strings")),
                }
            }
            Ok(Value::Str(s.into()))
        }
        MkClosure => {
            // #mkclosure(code, "x", x, "y", y, ...) captures by value.
            let code = match args.first() {
                Some(Value::Code(f)) => f.clone(),
                _ => return Err(RtError::new("#mkclosure expects code")),
            };
            let mut captured = Vec::new();
            let mut i = 1;
            while i + 1 < args.len() + 1 && i < args.len() {
                let name = match &args[i] {
                    Value::Str(s) => s.to_string(),
                    _ => return Err(RtError::new("#mkclosure expects capture names")),
                };
                let v = args
                    .get(i + 1)
                    .cloned()
                    .ok_or_else(|| RtError::new("#mkclosure missing capture value"))?;
                captured.push((name, v));
                i += 2;
            }
            Ok(Value::Closure(Rc::new(crate::value::ClosureVal { func: code, captured })))
        }
    }
}
