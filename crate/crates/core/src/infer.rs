//! Dataflow type inference: the graph-free MFP worklist algorithm over
//! statement-indexed type environments, the interprocedural driver with
//! memoization and recursion marking, hand-written transfer functions for
//! the builtins, and the generic-call inference equation
//! `T(f, t_arg) = ⊔ T(g, t_arg ⊓ s)` over the matching methods.

use crate::ctx::{Ctx, MemoEntry};
use crate::dispatch::{self, FuncId, MethodDef};
use crate::ir::{Expr, ExprId, IRFunction, Statement};
use crate::lattice;
use crate::types::{fresh_var, TypeTerm};
use crate::value::{typeof_value, Value};
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

// ---------------------------------------------------------------------------
// Type environments
// ---------------------------------------------------------------------------

/// One variable's abstract state. `ty == None` is the distinguished Undef
/// element, below every type.
#[derive(Clone, PartialEq, Debug)]
pub struct Binding {
    pub ty: Option<TypeTerm>,
    /// The variable may be read before assignment on some path; diagnostics
    /// only.
    pub maybe_undef: bool,
}

impl Binding {
    fn undef() -> Binding {
        Binding { ty: None, maybe_undef: false }
    }
    fn of(t: TypeTerm) -> Binding {
        Binding { ty: Some(t), maybe_undef: false }
    }
}

/// Per-program-point mapping from locals to bindings, ordered pointwise.
#[derive(Clone, PartialEq, Debug)]
pub struct TypeEnv {
    pub slots: Vec<Binding>,
}

impl TypeEnv {
    fn leq(&self, other: &TypeEnv, ctx: &Ctx) -> bool {
        self.slots.iter().zip(other.slots.iter()).all(|(a, b)| {
            let ty_le = match (&a.ty, &b.ty) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(x), Some(y)) => lattice::subtype(&ctx.types, x, y),
            };
            let undef_le = !(a.maybe_undef || a.ty.is_none()) || (b.maybe_undef || b.ty.is_none());
            ty_le && undef_le
        })
    }

    fn join(&self, other: &TypeEnv, ctx: &Ctx) -> TypeEnv {
        let slots = self
            .slots
            .iter()
            .zip(other.slots.iter())
            .map(|(a, b)| match (&a.ty, &b.ty) {
                (None, None) => Binding {
                    ty: None,
                    maybe_undef: a.maybe_undef || b.maybe_undef,
                },
                (None, Some(t)) | (Some(t), None) => Binding {
                    ty: Some(t.clone()),
                    maybe_undef: true,
                },
                (Some(x), Some(y)) => Binding {
                    ty: Some(join_types(ctx, x, y)),
                    maybe_undef: a.maybe_undef || b.maybe_undef,
                },
            })
            .collect();
        TypeEnv { slots }
    }
}

/// The join operator, with widening: overgrown unions become `Any`.
pub fn join_types(ctx: &Ctx, a: &TypeTerm, b: &TypeTerm) -> TypeTerm {
    let u = lattice::union2(&ctx.types, a, b);
    lattice::widen_union(&ctx.types, &u, ctx.config.union_cutoff)
}

/// Cap tuples whenever inference constructs one.
pub fn mk_tuple(ctx: &Ctx, elems: Vec<TypeTerm>) -> TypeTerm {
    lattice::cap_tuple(
        &ctx.types,
        &TypeTerm::Tuple(elems),
        ctx.config.tuple_depth,
        ctx.config.tuple_len,
    )
}

// ---------------------------------------------------------------------------
// Abstract frames and the annotation sink
// ---------------------------------------------------------------------------

/// An abstract activation record on the inference stack.
#[derive(Clone, Debug)]
pub struct Frame {
    pub method_id: u32,
    pub arg_types: TypeTerm,
    pub result: TypeTerm,
    pub rec: bool,
}

/// Where the final verification pass records per-expression results.
#[derive(Default, Debug)]
pub struct Sink {
    pub expr_types: HashMap<ExprId, TypeTerm>,
    /// Conditions that constant-fold; `None` marks a conflict between
    /// visits.
    pub const_bools: HashMap<ExprId, Option<bool>>,
    /// Calls proven to match a single method covering the argument type.
    pub call_targets: HashMap<ExprId, Option<(FuncId, u32)>>,
}

impl Sink {
    fn note_type(&mut self, ctx: &Ctx, id: ExprId, t: &TypeTerm) {
        match self.expr_types.get_mut(&id) {
            Some(prev) => *prev = join_types(ctx, prev, t),
            None => {
                self.expr_types.insert(id, t.clone());
            }
        }
    }
    fn note_bool(&mut self, id: ExprId, b: Option<bool>) {
        match self.const_bools.get(&id).copied() {
            None => {
                self.const_bools.insert(id, b);
            }
            Some(prev) => {
                if prev != b {
                    self.const_bools.insert(id, None);
                }
            }
        }
    }
    fn note_target(&mut self, id: ExprId, t: Option<(FuncId, u32)>) {
        match self.call_targets.get(&id).copied() {
            None => {
                self.call_targets.insert(id, t);
            }
            Some(prev) => {
                if prev != t {
                    self.call_targets.insert(id, None);
                }
            }
        }
    }
}

struct ICtx<'a> {
    func: &'a IRFunction,
    locals_idx: &'a HashMap<String, usize>,
    statics: &'a [(String, TypeTerm)],
    stack: &'a mut Vec<Frame>,
    sink: Option<&'a mut Sink>,
}

// ---------------------------------------------------------------------------
// Algorithm: infer function return type (worklist over statements)
// ---------------------------------------------------------------------------

/// Infer the return type of `func` for argument tuple type `a`, with the
/// caller-provided abstract stack whose top frame is ours. The result
/// accumulates into the top frame.
pub fn infer_body(
    ctx: &mut Ctx,
    func: &Rc<IRFunction>,
    a: &TypeTerm,
    statics: &[(String, TypeTerm)],
    stack: &mut Vec<Frame>,
    mut sink: Option<&mut Sink>,
) {
    ctx.stats.body_passes += 1;
    let n = func.nstatements();
    let locals_idx: HashMap<String, usize> = func
        .locals
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), i))
        .collect();

    // Γ[1]: everything Undef except arguments and static parameters.
    let mut init = TypeEnv {
        slots: vec![Binding::undef(); func.locals.len()],
    };
    for (name, t) in bind_params(ctx, func, a) {
        if let Some(&i) = locals_idx.get(&name) {
            init.slots[i] = Binding::of(t);
        }
    }
    for (name, t) in statics {
        if let Some(&i) = locals_idx.get(name) {
            init.slots[i] = Binding::of(t.clone());
        }
    }

    let mut envs: Vec<Option<TypeEnv>> = vec![None; n + 2];
    envs[1] = Some(init);
    let mut work: BTreeSet<usize> = BTreeSet::new();
    work.insert(1);
    let mut recur_points: BTreeSet<usize> = BTreeSet::new();

    while let Some(&first) = work.iter().next() {
        let mut p = first;
        loop {
            work.remove(&p);
            let env = match envs[p].clone() {
                Some(e) => e,
                None => break,
            };
            let stmt = func.stmt(p).clone();
            let mut ic = ICtx {
                func,
                locals_idx: &locals_idx,
                statics,
                stack,
                sink: sink.as_deref_mut(),
            };
            let (new_env, ret) = interpret_abstract(ctx, &stmt, &env, &mut ic);
            if ic.stack.last().map(|f| f.rec).unwrap_or(false) {
                recur_points.insert(p);
                if let Some(top) = stack.last_mut() {
                    top.rec = false;
                }
            }
            let mut next = p + 1;
            match &stmt {
                Statement::Goto(l) => next = *l,
                Statement::GotoIf { target, .. } => {
                    let grew = match &envs[*target] {
                        Some(existing) => !new_env.leq(existing, ctx),
                        None => true,
                    };
                    if grew {
                        envs[*target] = Some(match envs[*target].take() {
                            Some(e) => e.join(&new_env, ctx),
                            None => new_env.clone(),
                        });
                        work.insert(*target);
                    }
                }
                Statement::Return(_) => {
                    next = n + 1;
                    let r = ret.unwrap_or(TypeTerm::Bottom);
                    let top_r = stack.last().map(|f| f.result.clone()).unwrap_or(TypeTerm::Bottom);
                    if !lattice::subtype(&ctx.types, &r, &top_r) {
                        let joined = join_types(ctx, &top_r, &r);
                        if let Some(top) = stack.last_mut() {
                            top.result = joined;
                        }
                        work.extend(recur_points.iter().copied());
                    }
                }
                _ => {}
            }
            if next > n {
                break;
            }
            let grew = match &envs[next] {
                Some(existing) => !new_env.leq(existing, ctx),
                None => true,
            };
            if !grew {
                break;
            }
            envs[next] = Some(match envs[next].take() {
                Some(e) => e.join(&new_env, ctx),
                None => new_env,
            });
            p = next;
        }
    }
    if let Some(top) = stack.last_mut() {
        top.rec = !recur_points.is_empty();
    }
}

/// Argument bindings for the initial environment; a variadic method's last
/// parameter collects the tail as a (capped) tuple type.
fn bind_params(ctx: &Ctx, func: &IRFunction, a: &TypeTerm) -> Vec<(String, TypeTerm)> {
    let elems: Vec<TypeTerm> = match a {
        TypeTerm::Tuple(es) => es.clone(),
        _ => vec![TypeTerm::Any; func.params.len()],
    };
    let elem_at = |i: usize| -> TypeTerm {
        if i < elems.len() {
            if elems[i].is_vararg() {
                elems[i].vararg_elem().clone()
            } else {
                elems[i].clone()
            }
        } else if elems.last().map(|t| t.is_vararg()).unwrap_or(false) {
            elems.last().unwrap().vararg_elem().clone()
        } else {
            TypeTerm::Bottom
        }
    };
    let np = func.params.len();
    let mut out = Vec::with_capacity(np);
    for (i, name) in func.params.iter().enumerate() {
        if func.vararg && i + 1 == np {
            let tail: Vec<TypeTerm> = elems.get(i..).map(|s| s.to_vec()).unwrap_or_default();
            out.push((name.clone(), mk_tuple(ctx, tail)));
        } else {
            out.push((name.clone(), elem_at(i)));
        }
    }
    out
}

/// Effect of one statement on the environment; returns the evaluated type
/// for `return` statements.
fn interpret_abstract(
    ctx: &mut Ctx,
    stmt: &Statement,
    env: &TypeEnv,
    ic: &mut ICtx,
) -> (TypeEnv, Option<TypeTerm>) {
    match stmt {
        Statement::Assign { var, global, value } => {
            let t = eval_abstract(ctx, value, env, ic);
            let mut new = env.clone();
            if !*global {
                if let Some(&i) = ic.locals_idx.get(var) {
                    let carried_undef = match value {
                        Expr::Local(_, name) => ic
                            .locals_idx
                            .get(name)
                            .map(|&j| env.slots[j].maybe_undef || env.slots[j].ty.is_none())
                            .unwrap_or(false),
                        _ => false,
                    };
                    new.slots[i] = Binding { ty: Some(t), maybe_undef: carried_undef };
                }
            }
            (new, None)
        }
        Statement::Goto(_) => (env.clone(), None),
        Statement::GotoIf { cond, .. } => {
            eval_abstract(ctx, cond, env, ic);
            (env.clone(), None)
        }
        Statement::Return(e) => {
            let t = eval_abstract(ctx, e, env, ic);
            (env.clone(), Some(t))
        }
        Statement::Expr(e) => {
            eval_abstract(ctx, e, env, ic);
            (env.clone(), None)
        }
    }
}

// ---------------------------------------------------------------------------
// Abstract evaluation of expressions
// ---------------------------------------------------------------------------

fn eval_abstract(ctx: &mut Ctx, e: &Expr, env: &TypeEnv, ic: &mut ICtx) -> TypeTerm {
    let t = eval_abstract_inner(ctx, e, env, ic);
    if let Some(sink) = ic.sink.as_deref_mut() {
        sink.note_type(ctx, e.id(), &t);
    }
    t
}

fn eval_abstract_inner(ctx: &mut Ctx, e: &Expr, env: &TypeEnv, ic: &mut ICtx) -> TypeTerm {
    match e {
        Expr::Const(_, v) => typeof_value(&ctx.types, v),
        Expr::Local(_, name) => match ic.locals_idx.get(name) {
            Some(&i) => match &env.slots[i] {
                Binding { ty: None, .. } => {
                    ctx.undef_notes.push((ic.func.name.clone(), name.clone()));
                    TypeTerm::Bottom
                }
                Binding { ty: Some(t), maybe_undef } => {
                    if *maybe_undef {
                        ctx.undef_notes.push((ic.func.name.clone(), name.clone()));
                    }
                    t.clone()
                }
            },
            None => TypeTerm::Any,
        },
        Expr::Global(_, name) => match ctx.globals.get(name) {
            Some(Value::Type(t)) => cap_kind(ctx, TypeTerm::kind(t.clone())),
            Some(Value::Func(_)) => {
                TypeTerm::Apply(ctx.types.function_family, Vec::new())
            }
            _ => TypeTerm::Any,
        },
        Expr::Call { id, callee, args, splat } => {
            eval_call_abstract(ctx, *id, callee, args, splat, env, ic)
        }
        Expr::New(_, type_name, args) => {
            for a in args {
                eval_abstract(ctx, a, env, ic);
            }
            match ctx.types.lookup(type_name) {
                Some(tn) => {
                    let formals = ctx.types.name(tn).formals.clone();
                    let mut params = Vec::with_capacity(formals.len());
                    for f in &formals {
                        let bound = ic
                            .statics
                            .iter()
                            .find(|(n, _)| n == &f.name)
                            .map(|(_, t)| t.clone())
                            .or_else(|| {
                                ic.locals_idx.get(&f.name).and_then(|&i| {
                                    env.slots[i].ty.clone()
                                })
                            });
                        match bound {
                            Some(TypeTerm::Kind(inner)) => params.push(*inner),
                            _ => {
                                // Unknown instantiation: the unparameterized
                                // family covers every possibility.
                                return TypeTerm::Apply(tn, Vec::new());
                            }
                        }
                    }
                    TypeTerm::Apply(tn, params)
                }
                None => TypeTerm::Any,
            }
        }
        Expr::Quote(..) => TypeTerm::Apply(ctx.types.code_family, Vec::new()),
    }
}

/// Types of the argument slots; `None` when a splat of unknown shape makes
/// the arity imprecise (the tail is then `Any...`).
fn arg_tuple(
    ctx: &mut Ctx,
    args: &[Expr],
    splat: &[bool],
    env: &TypeEnv,
    ic: &mut ICtx,
) -> Vec<TypeTerm> {
    let mut out = Vec::with_capacity(args.len());
    let mut imprecise = false;
    for (i, a) in args.iter().enumerate() {
        let t = eval_abstract(ctx, a, env, ic);
        if imprecise {
            continue;
        }
        if splat.get(i).copied().unwrap_or(false) {
            match t {
                TypeTerm::Tuple(es) => out.extend(es),
                _ => {
                    out.push(TypeTerm::vararg(TypeTerm::Any));
                    imprecise = true;
                }
            }
        } else {
            out.push(t);
        }
    }
    out
}

fn eval_call_abstract(
    ctx: &mut Ctx,
    id: ExprId,
    callee: &Expr,
    args: &[Expr],
    splat: &[bool],
    env: &TypeEnv,
    ic: &mut ICtx,
) -> TypeTerm {
    // Builtins with special handling that needs the raw expressions.
    if let Expr::Global(_, name) = callee {
        if let Some(Value::Func(fid)) = ctx.globals.get(name).cloned() {
            if let Some(b) = ctx.gf(fid).builtin {
                let slots = arg_tuple(ctx, args, splat, env, ic);
                let (t, c) = builtin_transfer(ctx, b, &slots, args);
                if let Some(sink) = ic.sink.as_deref_mut() {
                    sink.note_bool(id, c);
                }
                return t;
            }
            // Generic call: the inference equation over matching methods.
            let slots = arg_tuple(ctx, args, splat, env, ic);
            let t_arg = mk_tuple(ctx, slots);
            let result = infer_generic_call(ctx, fid, &t_arg, ic.stack);
            if let Some(sink) = ic.sink.as_deref_mut() {
                let target = devirt_target(ctx, fid, &t_arg);
                sink.note_target(id, target);
            }
            return result;
        }
        if let Some(Value::Type(t)) = ctx.globals.get(name).cloned() {
            // Applying a type object constructs an instance.
            let slots = arg_tuple(ctx, args, splat, env, ic);
            return infer_construct(ctx, &t, slots, ic);
        }
    }
    let callee_t = eval_abstract(ctx, callee, env, ic);
    let slots = arg_tuple(ctx, args, splat, env, ic);
    match callee_t {
        TypeTerm::Kind(inner) => infer_construct(ctx, &inner, slots, ic),
        // Unknown callee: no information flows.
        _ => TypeTerm::Any,
    }
}

fn infer_construct(
    ctx: &mut Ctx,
    t: &TypeTerm,
    slots: Vec<TypeTerm>,
    ic: &mut ICtx,
) -> TypeTerm {
    match t {
        TypeTerm::Apply(tn, _)
            if ctx.types.name(*tn).kind == crate::types::TypeKind::Composite =>
        {
            match ctx.types.name(*tn).ctor {
                Some(ctor) => {
                    let t_arg = mk_tuple(ctx, slots);
                    infer_generic_call(ctx, ctor, &t_arg, ic.stack)
                }
                None => TypeTerm::Bottom,
            }
        }
        _ => TypeTerm::Any,
    }
}

/// Would run-time dispatch of `t_arg` provably hit a single method? True
/// when the match list is a singleton whose signature covers `t_arg`.
fn devirt_target(ctx: &mut Ctx, fid: FuncId, t_arg: &TypeTerm) -> Option<(FuncId, u32)> {
    if matches!(t_arg, TypeTerm::Tuple(es) if es.iter().any(|e| *e == TypeTerm::Bottom)) {
        return None;
    }
    let matches = dispatch::method_matches(ctx, fid, t_arg);
    match matches.as_slice() {
        // The single method must cover the whole argument type: its meet
        // with the signature leaves nothing out.
        [only] => {
            if lattice::type_equal(&ctx.types, &only.meet, t_arg) {
                Some((fid, only.method.id))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// `T(f, t_arg) = ⊔ T(g, t_arg ⊓ s)` over methods with nonempty meet, in
/// specificity order with early stop; widening may answer `Any` outright.
/// No matching methods means the call always errors: `Bottom`.
pub fn infer_generic_call(
    ctx: &mut Ctx,
    fid: FuncId,
    t_arg: &TypeTerm,
    stack: &mut Vec<Frame>,
) -> TypeTerm {
    // An argument slot of the empty type means the call never happens.
    if let TypeTerm::Tuple(es) = t_arg {
        if es.iter().any(|e| *e == TypeTerm::Bottom) {
            return TypeTerm::Bottom;
        }
    }
    if let Some(b) = ctx.gf(fid).builtin {
        let slots = match t_arg {
            TypeTerm::Tuple(es) => es.clone(),
            _ => Vec::new(),
        };
        let (t, _) = builtin_transfer(ctx, b, &slots, &[]);
        return t;
    }
    let matches = dispatch::method_matches(ctx, fid, t_arg);
    if matches.is_empty() {
        return TypeTerm::Bottom;
    }
    let mut result = TypeTerm::Bottom;
    for mm in matches {
        let r = if mm.method.staged {
            let concrete = ctx.types.is_concrete(&mm.meet);
            if concrete {
                let arg_types = match &mm.meet {
                    TypeTerm::Tuple(es) => es.clone(),
                    _ => Vec::new(),
                };
                match dispatch::expand_staged(ctx, &mm.method, &arg_types) {
                    Ok(expanded) => {
                        infer_call_graph(ctx, &expanded, mm.meet.clone(), Vec::new(), stack)
                    }
                    Err(_) => TypeTerm::Bottom,
                }
            } else {
                TypeTerm::Any
            }
        } else {
            let statics: Vec<(String, TypeTerm)> = mm
                .statics
                .iter()
                .map(|(v, t)| (v.name.clone(), cap_kind(ctx, TypeTerm::kind(t.clone()))))
                .collect();
            infer_call_graph(ctx, &mm.method, mm.meet.clone(), statics, stack)
        };
        result = join_types(ctx, &result, &r);
        if result == TypeTerm::Any {
            break;
        }
    }
    result
}

// ---------------------------------------------------------------------------
// Algorithm: interprocedural driver
// ---------------------------------------------------------------------------

/// Memoized, recursion-aware invocation of body inference. An existing
/// activation for the same `(method, types)` marks every frame from that
/// point to the top of the stack as recurring and answers with the frame's
/// current result.
pub fn infer_call_graph(
    ctx: &mut Ctx,
    method: &Rc<MethodDef>,
    a: TypeTerm,
    statics: Vec<(String, TypeTerm)>,
    stack: &mut Vec<Frame>,
) -> TypeTerm {
    let key = (method.id, a.clone());
    let mut initial = TypeTerm::Bottom;
    if let Some(m) = ctx.memo.get(&key) {
        if !m.incomplete {
            return m.result.clone();
        }
        initial = m.result.clone();
    }
    if let Some(pos) = stack
        .iter()
        .position(|f| f.method_id == method.id && f.arg_types == a)
    {
        let r = stack[pos].result.clone();
        for f in stack[pos..].iter_mut() {
            f.rec = true;
        }
        return r;
    }
    // Hard depth guard against pathological towers the widening caps have
    // not yet collapsed.
    if stack.len() > 256 {
        return TypeTerm::Any;
    }
    stack.push(Frame {
        method_id: method.id,
        arg_types: a.clone(),
        result: initial.clone(),
        rec: false,
    });
    ctx.stats.inference_runs += 1;
    let body = method.body.clone();
    infer_body(ctx, &body, &a, &statics, stack, None);
    let top = stack.pop().expect("inference frame");
    let incomplete = top.rec && !lattice::type_equal(&ctx.types, &initial, &top.result);
    ctx.memo.insert(
        key,
        MemoEntry { result: top.result.clone(), incomplete },
    );
    top.result
}

/// Top-level driver: re-run inference while the result is incomplete, up to
/// the safety bound (union cutoff × function count), then force `Any`.
pub fn infer_driver(
    ctx: &mut Ctx,
    method: &Rc<MethodDef>,
    a: &TypeTerm,
    statics: &[(String, TypeTerm)],
) -> TypeTerm {
    let key = (method.id, a.clone());
    let bound = ctx.config.union_cutoff * ctx.funcs.len().max(4);
    let mut iterations = 0;
    loop {
        let mut stack = Vec::new();
        let r = infer_call_graph(ctx, method, a.clone(), statics.to_vec(), &mut stack);
        let incomplete = ctx.memo.get(&key).map(|m| m.incomplete).unwrap_or(false);
        if !incomplete {
            return r;
        }
        iterations += 1;
        if iterations > bound {
            ctx.memo.insert(
                key,
                MemoEntry { result: TypeTerm::Any, incomplete: false },
            );
            return TypeTerm::Any;
        }
    }
}

/// Run the driver to a fixpoint, then one more recording pass that also
/// verifies nothing changes. Returns the result type and the annotations.
pub fn infer_with_annotations(
    ctx: &mut Ctx,
    method: &Rc<MethodDef>,
    a: &TypeTerm,
    statics: &[(String, TypeTerm)],
) -> (TypeTerm, Sink, bool) {
    let result = infer_driver(ctx, method, a, statics);
    let mut sink = Sink::default();
    let mut stack = vec![Frame {
        method_id: method.id,
        arg_types: a.clone(),
        result: result.clone(),
        rec: false,
    }];
    let body = method.body.clone();
    infer_body(ctx, &body, a, statics, &mut stack, Some(&mut sink));
    let top = stack.pop().expect("inference frame");
    let stable = lattice::type_equal(&ctx.types, &top.result, &result);
    (result, sink, stable)
}

// ---------------------------------------------------------------------------
// Transfer functions
// ---------------------------------------------------------------------------

fn cap_kind(ctx: &Ctx, t: TypeTerm) -> TypeTerm {
    if t.kind_depth() > ctx.config.kind_depth {
        TypeTerm::Apply(ctx.types.type_family, Vec::new())
    } else {
        t
    }
}

fn named_family(ctx: &Ctx, name: &str) -> TypeTerm {
    match ctx.types.lookup(name) {
        Some(id) => TypeTerm::Apply(id, Vec::new()),
        None => TypeTerm::Any,
    }
}

/// Hand-written result types for each builtin; a few also constant-fold
/// (`applicable` over known tables), feeding dead-branch pruning.
fn builtin_transfer(
    ctx: &mut Ctx,
    b: crate::interp::Builtin,
    slots: &[TypeTerm],
    arg_exprs: &[Expr],
) -> (TypeTerm, Option<bool>) {
    use crate::interp::Builtin::*;
    let bool_t = named_family(ctx, "Bool");
    let imprecise = slots.last().map(|t| t.is_vararg()).unwrap_or(false);
    match b {
        Is | NotBool | EqBool | EqInt | LtInt | LeInt | EqFloat | LtFloat | LeFloat
        | StringEq => (bool_t, None),
        Typeof => {
            if slots.len() != 1 || imprecise {
                return (TypeTerm::Apply(ctx.types.type_family, Vec::new()), None);
            }
            let t = &slots[0];
            if t.kind_depth() + 1 > ctx.config.kind_depth {
                (TypeTerm::Apply(ctx.types.type_family, Vec::new()), None)
            } else if ctx.types.is_concrete(t) {
                (TypeTerm::kind(t.clone()), None)
            } else {
                // Type uncertainty: a range within the lattice, expressed as
                // a bounded variable.
                let v = fresh_var("T", t.clone());
                (TypeTerm::kind(TypeTerm::Var(v)), None)
            }
        }
        Typeassert => {
            if slots.len() != 2 {
                return (TypeTerm::Any, None);
            }
            match &slots[1] {
                TypeTerm::Kind(inner) if !inner.has_vars() => {
                    (lattice::intersect(&ctx.types, &slots[0], inner), None)
                }
                TypeTerm::Kind(inner) => {
                    if let TypeTerm::Var(v) = &**inner {
                        (lattice::intersect(&ctx.types, &slots[0], &v.upper), None)
                    } else {
                        (slots[0].clone(), None)
                    }
                }
                _ => (slots[0].clone(), None),
            }
        }
        TupleNew => {
            if imprecise {
                (mk_tuple(ctx, slots.to_vec()), None)
            } else {
                (mk_tuple(ctx, slots.to_vec()), None)
            }
        }
        Tupleref => {
            if slots.len() != 2 {
                return (TypeTerm::Any, None);
            }
            match &slots[0] {
                TypeTerm::Tuple(es) => {
                    // A constant index projects one element.
                    if let Some(Expr::Const(_, Value::Int { value, .. })) = arg_exprs.get(1) {
                        let i = *value;
                        if i >= 1 {
                            let i = i as usize;
                            let has_va = es.last().map(|t| t.is_vararg()).unwrap_or(false);
                            let req = if has_va { es.len() - 1 } else { es.len() };
                            if i <= req {
                                return (es[i - 1].clone(), None);
                            } else if has_va {
                                return (es.last().unwrap().vararg_elem().clone(), None);
                            }
                            return (TypeTerm::Bottom, None);
                        }
                    }
                    let members: Vec<TypeTerm> =
                        es.iter().map(|t| t.vararg_elem().clone()).collect();
                    (lattice::union_all(&ctx.types, members), None)
                }
                _ => (TypeTerm::Any, None),
            }
        }
        Tuplelen => (named_family(ctx, "Int64"), None),
        Getfield => {
            if slots.len() != 2 {
                return (TypeTerm::Any, None);
            }
            match &slots[0] {
                TypeTerm::Apply(tn, params) => {
                    let field_types = ctx.types.field_instance(*tn, params);
                    if let Some(Expr::Const(_, Value::Str(name))) = arg_exprs.get(1) {
                        if let Some(i) = ctx
                            .types
                            .name(*tn)
                            .field_names
                            .iter()
                            .position(|f| f.as_str() == &**name)
                        {
                            let t = field_types[i].clone();
                            return (if t.has_vars() { TypeTerm::Any } else { t }, None);
                        }
                        return (TypeTerm::Bottom, None);
                    }
                    let members: Vec<TypeTerm> = field_types
                        .into_iter()
                        .map(|t| if t.has_vars() { TypeTerm::Any } else { t })
                        .collect();
                    (lattice::union_all(&ctx.types, members), None)
                }
                _ => (TypeTerm::Any, None),
            }
        }
        ApplyType => {
            // Known type arguments let us run the application abstractly.
            let mut base = None;
            let mut params = Vec::new();
            let mut known = !imprecise && !slots.is_empty();
            for (i, s) in slots.iter().enumerate() {
                if i == 0 {
                    match s {
                        TypeTerm::Kind(inner) => match &**inner {
                            TypeTerm::Apply(f, ps) if !inner.has_vars() => {
                                base = Some(*f);
                                params = ps.clone();
                            }
                            _ => known = false,
                        },
                        _ => known = false,
                    }
                } else if known {
                    match s {
                        TypeTerm::Kind(inner) if !inner.has_vars() => {
                            params.push((**inner).clone())
                        }
                        _ => {
                            if let Some(Expr::Const(_, Value::Int { value, .. })) =
                                arg_exprs.get(i)
                            {
                                params.push(TypeTerm::Int(*value));
                            } else {
                                known = false;
                            }
                        }
                    }
                }
            }
            if known {
                if let Some(f) = base {
                    return match ctx.types.apply_type(f, params) {
                        Ok(t) => (cap_kind(ctx, TypeTerm::kind(t)), None),
                        Err(_) => (TypeTerm::Bottom, None),
                    };
                }
            }
            let upper = match slots.first() {
                Some(TypeTerm::Kind(inner)) => match &**inner {
                    TypeTerm::Apply(f, _) => TypeTerm::Apply(*f, Vec::new()),
                    _ => TypeTerm::Any,
                },
                _ => TypeTerm::Any,
            };
            let v = fresh_var("T", upper);
            (TypeTerm::kind(TypeTerm::Var(v)), None)
        }
        Applicable => {
            // Free of effects and known to return Bool; over known tables
            // with definite type arguments it folds to a constant.
            if imprecise || slots.is_empty() {
                return (bool_t, None);
            }
            let fid = match arg_exprs.first() {
                Some(Expr::Global(_, name)) => match ctx.globals.get(name) {
                    Some(Value::Func(f)) => Some(*f),
                    _ => None,
                },
                _ => None,
            };
            let definite = slots[1..].iter().all(|t| ctx.types.is_concrete(t));
            match fid {
                Some(f) if definite && ctx.gf(f).builtin.is_none() => {
                    let t_arg = TypeTerm::Tuple(slots[1..].to_vec());
                    let found = dispatch::first_match(ctx, f, &t_arg).is_some();
                    (bool_t, Some(found))
                }
                _ => (bool_t, None),
            }
        }
        Error => (TypeTerm::Bottom, None),
        UnionType | VarargType => {
            let v = fresh_var("T", TypeTerm::Any);
            (TypeTerm::kind(TypeTerm::Var(v)), None)
        }
        Print | Println => (TypeTerm::Tuple(Vec::new()), None),
        AddInt | SubInt | MulInt | DivInt | RemInt | NegInt => {
            (slots.first().cloned().unwrap_or(TypeTerm::Any), None)
        }
        AddFloat | SubFloat | MulFloat | DivFloat | NegFloat | PowFloat | SiToF64 => {
            (named_family(ctx, "Float64"), None)
        }
        SextInt64 | FToSi64 => (named_family(ctx, "Int64"), None),
        TruncInt32 => (named_family(ctx, "Int32"), None),
        Reinterpret => match slots.first() {
            Some(TypeTerm::Kind(inner)) if !inner.has_vars() => ((**inner).clone(), None),
            _ => (TypeTerm::Any, None),
        },
        Strcat => (TypeTerm::Apply(ctx.types.string_family, Vec::new()), None),
        MkClosure => (TypeTerm::Apply(ctx.types.function_family, Vec::new()), None),
    }
}
