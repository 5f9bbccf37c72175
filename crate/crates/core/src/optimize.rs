//! Post-inference IR passes. After inference annotates every expression
//! with its type, we prune branches whose conditions constant-folded,
//! rewrite single-match calls to direct calls, splice small callee bodies
//! in, and remove tuple allocations that are built and immediately taken
//! apart. The interpreter then executes the optimized IR; elision counters
//! stand in for native code generation.

use crate::ctx::Ctx;
use crate::dispatch::{self, FuncId, MethodDef};
use crate::infer;
use crate::ir::{Expr, ExprId, IRFunction, Statement};
use crate::types::TypeTerm;
use std::collections::HashMap;
use std::rc::Rc;

/// An IR function plus everything inference proved about it.
#[derive(Debug)]
pub struct AnnotatedFunction {
    pub func: Rc<IRFunction>,
    pub expr_types: HashMap<ExprId, TypeTerm>,
    pub const_bools: HashMap<ExprId, bool>,
    /// Call expressions proven to reach exactly one method.
    pub direct_targets: HashMap<ExprId, (FuncId, u32)>,
    pub next_expr_id: u32,
}

impl AnnotatedFunction {
    fn fresh_id(&mut self) -> ExprId {
        let id = self.next_expr_id;
        self.next_expr_id += 1;
        id
    }
}

/// The full pipeline for one specialization: annotate, prune, devirtualize,
/// inline, elide tuples, devirtualize again. Passes run once, in this fixed
/// order.
pub fn specialize(
    ctx: &mut Ctx,
    method: &Rc<MethodDef>,
    entry_sig: &TypeTerm,
    statics: &[(String, TypeTerm)],
) -> (AnnotatedFunction, TypeTerm) {
    let (result, sink, stable) = infer::infer_with_annotations(ctx, method, entry_sig, statics);
    debug_assert!(stable, "inference fixpoint drifted on a verification pass");
    let mut af = AnnotatedFunction {
        func: method.body.clone(),
        expr_types: sink.expr_types,
        const_bools: sink
            .const_bools
            .into_iter()
            .filter_map(|(k, v)| v.map(|b| (k, b)))
            .collect(),
        direct_targets: sink
            .call_targets
            .into_iter()
            .filter_map(|(k, v)| v.map(|t| (k, t)))
            .collect(),
        next_expr_id: method.body.n_exprs,
    };
    note_typing_stats(ctx, &af);
    if ctx.config.optimize {
        prune_dead(ctx, &mut af);
        // Devirtualization itself happened while annotating; the counter
        // reflects call sites rewritten to direct form.
        ctx.stats.elided_dispatches += af.direct_targets.len() as u64;
        linearize(&mut af);
        inline_single_match(ctx, &mut af, method);
        elide_tuples(ctx, &mut af);
        devirtualize_again(ctx, &mut af);
    }
    (af, result)
}

// ---------------------------------------------------------------------------
// Linearization
// ---------------------------------------------------------------------------

/// Hoist nested calls into single-assignment temporaries, left to right, so
/// every call sits at the root of its own statement. Inlining and tuple
/// elision both work on this form.
fn linearize(af: &mut AnnotatedFunction) {
    let body = af.func.body.clone();
    let mut b = Builder::new();
    let mut uniq = 0usize;
    let mut new_locals: Vec<String> = Vec::new();
    for (i, stmt) in body.iter().enumerate() {
        b.mark_old(i + 1);
        let rebuilt = match stmt {
            Statement::Assign { var, global, value } => Statement::Assign {
                var: var.clone(),
                global: *global,
                value: hoist_args(af, value, &mut b, &mut uniq, &mut new_locals),
            },
            Statement::GotoIf { cond, target } => Statement::GotoIf {
                cond: hoist_args(af, cond, &mut b, &mut uniq, &mut new_locals),
                target: *target,
            },
            Statement::Return(e) => {
                Statement::Return(hoist_args(af, e, &mut b, &mut uniq, &mut new_locals))
            }
            Statement::Expr(e) => {
                Statement::Expr(hoist_args(af, e, &mut b, &mut uniq, &mut new_locals))
            }
            Statement::Goto(l) => Statement::Goto(*l),
        };
        b.push(rebuilt);
    }
    if let Ok(new_body) = b.finish(&af.func.name) {
        let mut f = (*af.func).clone();
        f.body = new_body;
        for l in new_locals {
            if !f.locals.contains(&l) {
                f.locals.push(l);
            }
        }
        af.func = Rc::new(f);
    }
}

/// Keep the root expression in place but hoist any call or constructor in
/// argument position into a temporary.
fn hoist_args(
    af: &mut AnnotatedFunction,
    e: &Expr,
    b: &mut Builder,
    uniq: &mut usize,
    new_locals: &mut Vec<String>,
) -> Expr {
    match e {
        Expr::Call { id, callee, args, splat } => Expr::Call {
            id: *id,
            callee: Box::new(hoist_expr(af, callee, b, uniq, new_locals)),
            args: args
                .iter()
                .map(|a| hoist_expr(af, a, b, uniq, new_locals))
                .collect(),
            splat: splat.clone(),
        },
        Expr::New(id, tn, args) => Expr::New(
            *id,
            tn.clone(),
            args.iter()
                .map(|a| hoist_expr(af, a, b, uniq, new_locals))
                .collect(),
        ),
        other => other.clone(),
    }
}

fn hoist_expr(
    af: &mut AnnotatedFunction,
    e: &Expr,
    b: &mut Builder,
    uniq: &mut usize,
    new_locals: &mut Vec<String>,
) -> Expr {
    match e {
        Expr::Call { .. } | Expr::New(..) => {
            let flattened = hoist_args(af, e, b, uniq, new_locals);
            *uniq += 1;
            let tmp = format!("#l{uniq}");
            new_locals.push(tmp.clone());
            let read_id = af.fresh_id();
            if let Some(t) = af.expr_types.get(&flattened.id()).cloned() {
                af.expr_types.insert(read_id, t);
            }
            b.push(Statement::Assign {
                var: tmp.clone(),
                global: false,
                value: flattened,
            });
            Expr::Local(read_id, tmp)
        }
        other => other.clone(),
    }
}

fn note_typing_stats(ctx: &mut Ctx, af: &AnnotatedFunction) {
    ctx.stats.expressions_compiled += af.func.n_exprs as u64;
    for t in af.expr_types.values() {
        if *t != TypeTerm::Any {
            ctx.stats.exprs_nontrivial += 1;
            if ctx.types.is_concrete(t) || *t == TypeTerm::Bottom {
                ctx.stats.exprs_concrete += 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Body rebuilding with label patching
// ---------------------------------------------------------------------------

/// Labels above this bound are virtual forward references created by the
/// passes; anything below refers to the original 1-based statement index.
const VIRTUAL_BASE: usize = 1_000_000;

struct Builder {
    out: Vec<Statement>,
    /// Original statement index (1-based) → new position (1-based).
    old_start: HashMap<usize, usize>,
    vlabels: HashMap<usize, usize>,
    next_vlabel: usize,
}

impl Builder {
    fn new() -> Builder {
        Builder {
            out: Vec::new(),
            old_start: HashMap::new(),
            vlabels: HashMap::new(),
            next_vlabel: VIRTUAL_BASE,
        }
    }

    fn fresh_label(&mut self) -> usize {
        self.next_vlabel += 1;
        self.next_vlabel
    }

    fn mark_old(&mut self, old: usize) {
        self.old_start.insert(old, self.out.len() + 1);
    }

    fn place_label(&mut self, vlabel: usize) {
        self.vlabels.insert(vlabel, self.out.len() + 1);
    }

    fn push(&mut self, s: Statement) {
        self.out.push(s);
    }

    /// Resolve old indices and virtual labels into the new numbering.
    fn finish(mut self, name: &str) -> Result<Vec<Statement>, String> {
        let n = self.out.len();
        let resolve = |l: usize, old: &HashMap<usize, usize>, v: &HashMap<usize, usize>| {
            if l > VIRTUAL_BASE {
                v.get(&l).copied()
            } else {
                old.get(&l).copied()
            }
        };
        for s in &mut self.out {
            match s {
                Statement::Goto(l) | Statement::GotoIf { target: l, .. } => {
                    match resolve(*l, &self.old_start, &self.vlabels) {
                        Some(nl) if nl <= n + 1 => *l = nl.min(n),
                        _ => return Err(format!("dangling label in {name}")),
                    }
                }
                _ => {}
            }
        }
        Ok(self.out)
    }
}

fn replace_body(af: &mut AnnotatedFunction, body: Vec<Statement>) {
    let mut f = (*af.func).clone();
    f.body = body;
    af.func = Rc::new(f);
}

// ---------------------------------------------------------------------------
// Dead-branch pruning
// ---------------------------------------------------------------------------

/// Fold conditional branches whose condition inference proved constant
/// (notably `applicable` over known method tables), then drop unreachable
/// statements.
fn prune_dead(ctx: &mut Ctx, af: &mut AnnotatedFunction) {

    let body = &af.func.body;
    let n = body.len();
    if n == 0 {
        return;
    }
    // Fold constant conditions. An effect-free condition (`applicable` over
    // known tables in particular) disappears entirely; anything else keeps
    // evaluating for its effects.
    let folded: Vec<Option<Statement>> = body
        .iter()
        .map(|s| match s {
            Statement::GotoIf { cond, target } => match af.const_bools.get(&cond.id()) {
                Some(true) => Some(Statement::Goto(*target)),
                Some(false) => {
                    if effect_free(ctx, cond) {
                        None
                    } else {
                        Some(Statement::Expr(cond.clone()))
                    }
                }
                None => Some(s.clone()),
            },
            _ => Some(s.clone()),
        })
        .collect();
    // Reachability over the folded body; a dropped statement falls through.
    let mut reachable = vec![false; n + 1];
    let mut work = vec![1usize];
    while let Some(p) = work.pop() {
        if p > n || reachable[p] {
            continue;
        }
        reachable[p] = true;
        match &folded[p - 1] {
            Some(Statement::Goto(l)) => work.push(*l),
            Some(Statement::GotoIf { target, .. }) => {
                work.push(*target);
                work.push(p + 1);
            }
            Some(Statement::Return(_)) => {}
            _ => work.push(p + 1),
        }
    }
    let unchanged = reachable.iter().skip(1).all(|r| *r)
        && folded.iter().zip(body.iter()).all(|(a, b)| match a {
            Some(a) => crate::ir::statements_equal(a, b),
            None => false,
        });
    if unchanged {
        return;
    }
    let mut b = Builder::new();
    for (i, s) in folded.iter().enumerate() {
        let old = i + 1;
        if !reachable[old] {
            continue;
        }
        b.mark_old(old);
        if let Some(s) = s {
            b.push(s.clone());
        }
    }
    if let Ok(new_body) = b.finish(&af.func.name) {
        replace_body(af, new_body);
    }
}

/// Conservatively effect-free: constants, variable reads, and calls to the
/// builtins documented as pure (`applicable`, `is`, `typeof`).
fn effect_free(ctx: &Ctx, e: &Expr) -> bool {
    match e {
        Expr::Const(..) | Expr::Local(..) | Expr::Global(..) => true,
        Expr::Call { callee, args, splat, .. } => {
            if splat.iter().any(|s| *s) {
                return false;
            }
            let pure_builtin = match &**callee {
                Expr::Global(_, name) => match ctx.globals.get(name) {
                    Some(crate::value::Value::Func(fid)) => matches!(
                        ctx.gf(*fid).builtin,
                        Some(crate::interp::Builtin::Applicable)
                            | Some(crate::interp::Builtin::Is)
                            | Some(crate::interp::Builtin::Typeof)
                            | Some(crate::interp::Builtin::Tuplelen)
                    ),
                    _ => false,
                },
                _ => false,
            };
            pure_builtin && args.iter().all(|a| effect_free(ctx, a))
        }
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Inlining
// ---------------------------------------------------------------------------

/// Splice direct-call targets under the size budget into the caller, with
/// renamed locals. Recursive calls are never inlined. The callee body used
/// is its own fully optimized specialization, so inlining is transitive
/// without iterating passes.
fn inline_single_match(ctx: &mut Ctx, af: &mut AnnotatedFunction, host: &Rc<MethodDef>) {
    enum Site {
        Assign(String),
        Discard,
        Return,
        Branch(usize),
    }
    let body = af.func.body.clone();
    let mut b = Builder::new();
    let mut inlined_any = false;
    let mut uniq = 0usize;
    for (i, stmt) in body.iter().enumerate() {
        let old = i + 1;
        b.mark_old(old);
        let (call, site) = match stmt {
            Statement::Assign { var, global: false, value } if is_call(value) => {
                (value, Site::Assign(var.clone()))
            }
            Statement::Expr(e) if is_call(e) => (e, Site::Discard),
            Statement::Return(e) if is_call(e) => (e, Site::Return),
            Statement::GotoIf { cond, target } if is_call(cond) => {
                (cond, Site::Branch(*target))
            }
            _ => {
                b.push(stmt.clone());
                continue;
            }
        };
        let dest = match &site {
            Site::Assign(v) => Some(v.as_str()),
            _ => None,
        };
        match try_inline_call(ctx, af, host, call, dest, &mut b, &mut uniq) {
            Some(result_var) => {
                inlined_any = true;
                let call_ty = af.expr_types.get(&call.id()).cloned();
                let mut read = |af: &mut AnnotatedFunction| {
                    let id = af.fresh_id();
                    if let Some(t) = &call_ty {
                        af.expr_types.insert(id, t.clone());
                    }
                    Expr::Local(id, result_var.clone())
                };
                match site {
                    Site::Assign(_) | Site::Discard => {}
                    Site::Return => {
                        let e = read(af);
                        b.push(Statement::Return(e));
                    }
                    Site::Branch(target) => {
                        let e = read(af);
                        b.push(Statement::GotoIf { cond: e, target });
                    }
                }
            }
            None => b.push(stmt.clone()),
        }
    }
    if inlined_any {
        if let Ok(new_body) = b.finish(&af.func.name) {
            replace_body(af, new_body);
        }
    }
}

fn is_call(e: &Expr) -> bool {
    matches!(e, Expr::Call { .. })
}

/// Inline one call if it is direct, concrete, non-recursive, and the callee
/// body fits the budget. Pushes the spliced statements; `None` leaves the
/// site untouched.
fn try_inline_call(
    ctx: &mut Ctx,
    af: &mut AnnotatedFunction,
    host: &Rc<MethodDef>,
    call: &Expr,
    dest: Option<&str>,
    b: &mut Builder,
    uniq: &mut usize,
) -> Option<String> {
    let (id, args, splat) = match call {
        Expr::Call { id, args, splat, .. } => (*id, args, splat),
        _ => return None,
    };
    let (fid, mid) = af.direct_targets.get(&id).copied()?;
    if mid == host.id {
        return None; // self recursion
    }
    if ctx.compiling.iter().any(|(m, _)| *m == mid) {
        return None; // a call cycle is being compiled above us
    }
    // Concrete argument slot types, with splats of known tuple shape
    // expanded.
    let mut slot_types: Vec<TypeTerm> = Vec::new();
    let mut arg_plan: Vec<(usize, Option<usize>)> = Vec::new(); // (arg idx, tuple elem)
    for (ai, a) in args.iter().enumerate() {
        let t = af.expr_types.get(&a.id())?.clone();
        if splat.get(ai).copied().unwrap_or(false) {
            match t {
                TypeTerm::Tuple(es)
                    if es.iter().all(|e| !e.is_vararg()) =>
                {
                    for (k, e) in es.iter().enumerate() {
                        slot_types.push(e.clone());
                        arg_plan.push((ai, Some(k + 1)));
                    }
                }
                _ => return None,
            }
        } else {
            slot_types.push(t);
            arg_plan.push((ai, None));
        }
    }
    if !slot_types.iter().all(|t| ctx.types.is_concrete(t)) {
        return None;
    }
    let entry = dispatch::dispatch_direct(ctx, fid, mid, &slot_types).ok()?;
    let spec = entry.spec.clone()?;
    if spec.resolve_statics_per_call {
        return None;
    }
    let callee = spec.func.clone();
    // The budget applies to the method as lowered; the optimized body that
    // actually gets spliced may be larger after its own inlining.
    if spec.method.body.nstatements() > ctx.config.inline_budget {
        return None;
    }
    if callee
        .direct_targets
        .values()
        .any(|(_, m)| *m == host.id || *m == mid)
    {
        return None; // recursion through the spliced body
    }

    *uniq += 1;
    let prefix = format!("#in{}#{}", uniq, callee.func.name);
    let rename: HashMap<String, String> = callee
        .func
        .locals
        .iter()
        .map(|l| (l.clone(), format!("{prefix}#{l}")))
        .collect();

    // Bind parameters: hoist each argument into the renamed parameter slot,
    // expanding splatted tuples through tupleref.
    let callee_func = callee.func.clone();
    let np = callee_func.params.len();
    let mut bound = 0usize;
    let mut extra_locals: Vec<String> = Vec::new();
    for (pi, pname) in callee_func.params.iter().enumerate() {
        let target = rename.get(pname).cloned().unwrap_or_else(|| pname.clone());
        extra_locals.push(target.clone());
        if callee_func.vararg && pi + 1 == np {
            // Collect the remaining arguments into a tuple.
            let parts: Vec<Expr> = arg_plan[bound..]
                .iter()
                .map(|(ai, elem)| materialize_arg(af, &args[*ai], *elem, ctx))
                .collect();
            let tid = af.fresh_id();
            let tuple_fn = Expr::Global(af.fresh_id(), "tuple".into());
            let n_parts = parts.len();
            let call = Expr::Call {
                id: tid,
                callee: Box::new(tuple_fn),
                args: parts,
                splat: vec![false; n_parts],
            };
            b.push(Statement::Assign { var: target, global: false, value: call });
            bound = arg_plan.len();
        } else {
            if bound >= arg_plan.len() {
                return None;
            }
            let (ai, elem) = arg_plan[bound];
            let value = materialize_arg(af, &args[ai], elem, ctx);
            b.push(Statement::Assign { var: target, global: false, value });
            bound += 1;
        }
    }
    if !callee_func.vararg && bound != arg_plan.len() {
        return None;
    }
    // Bind the callee's static parameters as constants.
    for (sname, sval) in &spec.static_env {
        let target = rename.get(sname).cloned().unwrap_or_else(|| sname.clone());
        extra_locals.push(target.clone());
        let value = Expr::Const(af.fresh_id(), sval.clone());
        b.push(Statement::Assign { var: target, global: false, value });
    }

    // Splice the body. Returns become an assignment to the result slot and
    // a jump past the splice.
    let after = b.fresh_label();
    let result_var = dest.map(|d| d.to_string()).unwrap_or_else(|| {
        format!("{prefix}#ret")
    });
    let base = b.out.len(); // for mapping callee-internal goto targets
    let mut internal_starts: Vec<usize> = Vec::with_capacity(callee_func.body.len());
    let mut pending: Vec<(usize, usize)> = Vec::new(); // (out idx, callee target)
    for (k, s) in callee_func.body.iter().enumerate() {
        internal_starts.push(b.out.len() + 1);
        let _ = k;
        match s {
            Statement::Assign { var, global, value } => {
                let var = if *global {
                    var.clone()
                } else {
                    rename.get(var).cloned().unwrap_or_else(|| var.clone())
                };
                let value = import_expr(af, &callee, value, &rename);
                b.push(Statement::Assign { var, global: *global, value });
            }
            Statement::Goto(l) => {
                pending.push((b.out.len(), *l));
                b.push(Statement::Goto(0));
            }
            Statement::GotoIf { cond, target } => {
                let cond = import_expr(af, &callee, cond, &rename);
                pending.push((b.out.len(), *target));
                b.push(Statement::GotoIf { cond, target: 0 });
            }
            Statement::Return(e) => {
                let value = import_expr(af, &callee, e, &rename);
                b.push(Statement::Assign {
                    var: result_var.clone(),
                    global: false,
                    value,
                });
                b.push(Statement::Goto(after));
            }
            Statement::Expr(e) => {
                let e = import_expr(af, &callee, e, &rename);
                b.push(Statement::Expr(e));
            }
        }
    }
    // Patch callee-internal jumps to virtual labels at their new positions.
    for (out_idx, target) in pending {
        let vl = b.fresh_label();
        b.vlabels.insert(vl, internal_starts[target - 1]);
        match &mut b.out[out_idx] {
            Statement::Goto(l) | Statement::GotoIf { target: l, .. } => *l = vl,
            _ => {}
        }
    }
    let _ = base;
    b.place_label(after);
    if dest.is_none() {
        extra_locals.push(result_var.clone());
    }
    // The splice introduced locals; register them.
    let mut f = (*af.func).clone();
    for l in rename.values() {
        if !f.locals.contains(l) {
            f.locals.push(l.clone());
        }
    }
    for l in extra_locals {
        if !f.locals.contains(&l) {
            f.locals.push(l);
        }
    }
    if dest.is_none() && !f.locals.contains(&result_var) {
        f.locals.push(result_var.clone());
    }
    af.func = Rc::new(f);
    Some(result_var)
}

/// An argument expression, or one projected element of a splatted tuple.
fn materialize_arg(
    af: &mut AnnotatedFunction,
    arg: &Expr,
    elem: Option<usize>,
    ctx: &mut Ctx,
) -> Expr {
    match elem {
        None => arg.clone(),
        Some(i) => {
            let int64 = ctx.types.lookup("Int64");
            let idx = Expr::Const(
                af.fresh_id(),
                crate::value::Value::Int {
                    ty: int64.expect("Int64 declared"),
                    value: i as i64,
                },
            );
            Expr::Call {
                id: af.fresh_id(),
                callee: Box::new(Expr::Global(af.fresh_id(), "tupleref".into())),
                args: vec![arg.clone(), idx],
                splat: vec![false, false],
            }
        }
    }
}

/// Copy a callee expression into the host: fresh ids, renamed locals, and
/// annotations carried over.
fn import_expr(
    af: &mut AnnotatedFunction,
    callee: &Rc<AnnotatedFunction>,
    e: &Expr,
    rename: &HashMap<String, String>,
) -> Expr {
    let new_id = af.fresh_id();
    if let Some(t) = callee.expr_types.get(&e.id()) {
        af.expr_types.insert(new_id, t.clone());
    }
    if let Some(b) = callee.const_bools.get(&e.id()) {
        af.const_bools.insert(new_id, *b);
    }
    if let Some(t) = callee.direct_targets.get(&e.id()) {
        af.direct_targets.insert(new_id, *t);
    }
    match e {
        Expr::Const(_, v) => Expr::Const(new_id, v.clone()),
        Expr::Local(_, name) => Expr::Local(
            new_id,
            rename.get(name).cloned().unwrap_or_else(|| name.clone()),
        ),
        Expr::Global(_, name) => Expr::Global(new_id, name.clone()),
        Expr::Call { callee: c, args, splat, .. } => Expr::Call {
            id: new_id,
            callee: Box::new(import_expr(af, callee, c, rename)),
            args: args
                .iter()
                .map(|a| import_expr(af, callee, a, rename))
                .collect(),
            splat: splat.clone(),
        },
        Expr::New(_, tn, args) => Expr::New(
            new_id,
            tn.clone(),
            args.iter()
                .map(|a| import_expr(af, callee, a, rename))
                .collect(),
        ),
        Expr::Quote(_, q) => Expr::Quote(new_id, q.clone()),
    }
}

// ---------------------------------------------------------------------------
// Tuple elision
// ---------------------------------------------------------------------------

/// Remove tuple constructions whose only uses are constant-index `tupleref`
/// or argument splicing, substituting the components directly. Components
/// must be single-assignment locals or constants so the substitution cannot
/// reorder effects.
fn elide_tuples(ctx: &mut Ctx, af: &mut AnnotatedFunction) {
    loop {
        let mut assign_counts: HashMap<&str, usize> = HashMap::new();
        for s in &af.func.body {
            if let Statement::Assign { var, global: false, .. } = s {
                *assign_counts.entry(var.as_str()).or_default() += 1;
            }
        }
        // Candidate: x = tuple(c1..cn) with x single-assigned and all
        // components single-assigned locals or constants.
        let mut candidate: Option<(usize, String, Vec<Expr>)> = None;
        for (i, s) in af.func.body.iter().enumerate() {
            if let Statement::Assign { var, global: false, value } = s {
                if assign_counts.get(var.as_str()) != Some(&1) {
                    continue;
                }
                if let Expr::Call { callee, args, splat, .. } = value {
                    if callee.is_global("tuple")
                        && splat.iter().all(|s| !s)
                        && args.iter().all(|a| match a {
                            Expr::Const(..) => true,
                            Expr::Local(_, n) => assign_counts.get(n.as_str()) == Some(&1),
                            _ => false,
                        })
                    {
                        candidate = Some((i, var.clone(), args.clone()));
                        if uses_allow_elision(af, i, var) {
                            break;
                        }
                        candidate = None;
                    }
                }
            }
        }
        let (idx, var, comps) = match candidate {
            Some(c) => c,
            None => return,
        };
        // Rewrite all uses and drop the construction.
        let body = af.func.body.clone();
        let mut b = Builder::new();
        for (i, s) in body.iter().enumerate() {
            let old = i + 1;
            b.mark_old(old);
            if i == idx {
                continue; // the construction itself
            }
            b.push(rewrite_stmt(af, s, &var, &comps));
        }
        if let Ok(new_body) = b.finish(&af.func.name) {
            replace_body(af, new_body);
            ctx.stats.elided_tuples += 1;
        } else {
            return;
        }
    }
}

/// Every use of `var` after its definition must be a constant-index
/// tupleref or a splat argument; anything else escapes.
fn uses_allow_elision(af: &AnnotatedFunction, def_idx: usize, var: &str) -> bool {
    let mut ok = true;
    let mut any_use = false;
    for (i, s) in af.func.body.iter().enumerate() {
        let exprs: Vec<&Expr> = match s {
            Statement::Assign { value, .. } => vec![value],
            Statement::GotoIf { cond, .. } => vec![cond],
            Statement::Return(e) | Statement::Expr(e) => vec![e],
            Statement::Goto(_) => vec![],
        };
        for e in exprs {
            if i == def_idx {
                continue;
            }
            walk_uses(e, var, false, &mut ok, &mut any_use);
        }
    }
    ok && any_use
}

fn walk_uses(e: &Expr, var: &str, shielded: bool, ok: &mut bool, any: &mut bool) {
    match e {
        Expr::Local(_, n) if n == var => {
            *any = true;
            if !shielded {
                *ok = false;
            }
        }
        Expr::Call { callee, args, splat, .. } => {
            walk_uses(callee, var, false, ok, any);
            let is_tupleref = callee.is_global("tupleref");
            for (i, a) in args.iter().enumerate() {
                let this_shielded = if is_tupleref && i == 0 {
                    matches!(args.get(1), Some(Expr::Const(_, crate::value::Value::Int { .. })))
                } else {
                    splat.get(i).copied().unwrap_or(false)
                };
                walk_uses(a, var, this_shielded, ok, any);
            }
        }
        Expr::New(_, _, args) => args.iter().for_each(|a| walk_uses(a, var, false, ok, any)),
        _ => {}
    }
}

fn rewrite_stmt(
    af: &mut AnnotatedFunction,
    s: &Statement,
    var: &str,
    comps: &[Expr],
) -> Statement {
    match s {
        Statement::Assign { var: v, global, value } => Statement::Assign {
            var: v.clone(),
            global: *global,
            value: rewrite_expr(af, value, var, comps),
        },
        Statement::GotoIf { cond, target } => Statement::GotoIf {
            cond: rewrite_expr(af, cond, var, comps),
            target: *target,
        },
        Statement::Return(e) => Statement::Return(rewrite_expr(af, e, var, comps)),
        Statement::Expr(e) => Statement::Expr(rewrite_expr(af, e, var, comps)),
        Statement::Goto(l) => Statement::Goto(*l),
    }
}

fn rewrite_expr(af: &mut AnnotatedFunction, e: &Expr, var: &str, comps: &[Expr]) -> Expr {
    match e {
        Expr::Call { id, callee, args, splat } => {
            // tupleref(x, k) with constant k becomes the component.
            if callee.is_global("tupleref") {
                if let (Some(Expr::Local(_, n)), Some(Expr::Const(_, crate::value::Value::Int { value, .. }))) =
                    (args.first(), args.get(1))
                {
                    if n == var {
                        let k = *value as usize;
                        if k >= 1 && k <= comps.len() {
                            return reid_expr(af, &comps[k - 1]);
                        }
                    }
                }
            }
            // A splatted x becomes the components in place.
            let mut new_args = Vec::with_capacity(args.len());
            let mut new_splat = Vec::with_capacity(splat.len());
            for (i, a) in args.iter().enumerate() {
                let is_splat = splat.get(i).copied().unwrap_or(false);
                if is_splat && matches!(a, Expr::Local(_, n) if n == var) {
                    for c in comps {
                        new_args.push(reid_expr(af, c));
                        new_splat.push(false);
                    }
                } else {
                    new_args.push(rewrite_expr(af, a, var, comps));
                    new_splat.push(is_splat);
                }
            }
            Expr::Call {
                id: *id,
                callee: Box::new(rewrite_expr(af, callee, var, comps)),
                args: new_args,
                splat: new_splat,
            }
        }
        Expr::New(id, tn, args) => Expr::New(
            *id,
            tn.clone(),
            args.iter().map(|a| rewrite_expr(af, a, var, comps)).collect(),
        ),
        other => other.clone(),
    }
}

/// Clone a component expression under a fresh id sharing its annotation.
fn reid_expr(af: &mut AnnotatedFunction, e: &Expr) -> Expr {
    let new_id = af.fresh_id();
    if let Some(t) = af.expr_types.get(&e.id()).cloned() {
        af.expr_types.insert(new_id, t);
    }
    match e {
        Expr::Const(_, v) => Expr::Const(new_id, v.clone()),
        Expr::Local(_, n) => Expr::Local(new_id, n.clone()),
        Expr::Global(_, n) => Expr::Global(new_id, n.clone()),
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Final devirtualization sweep
// ---------------------------------------------------------------------------

/// Pruning and elision can expose new single-match calls; resolve the ones
/// whose argument types are already annotated.
fn devirtualize_again(ctx: &mut Ctx, af: &mut AnnotatedFunction) {
    let mut found: Vec<(ExprId, (FuncId, u32))> = Vec::new();
    let mut visit = |e: &Expr| {
        collect_unresolved_calls(ctx, af, e, &mut found);
    };
    for s in &af.func.body {
        match s {
            Statement::Assign { value, .. } => visit(value),
            Statement::GotoIf { cond, .. } => visit(cond),
            Statement::Return(e) | Statement::Expr(e) => visit(e),
            Statement::Goto(_) => {}
        }
    }
    for (id, t) in found {
        af.direct_targets.insert(id, t);
        ctx.stats.elided_dispatches += 1;
    }
}

fn collect_unresolved_calls(
    ctx: &mut Ctx,
    af: &AnnotatedFunction,
    e: &Expr,
    out: &mut Vec<(ExprId, (FuncId, u32))>,
) {
    if let Expr::Call { id, callee, args, splat } = e {
        collect_unresolved_calls(ctx, af, callee, out);
        for a in args {
            collect_unresolved_calls(ctx, af, a, out);
        }
        if af.direct_targets.contains_key(id) || splat.iter().any(|s| *s) {
            return;
        }
        if let Expr::Global(_, name) = &**callee {
            if let Some(crate::value::Value::Func(fid)) = ctx.globals.get(name).cloned() {
                if ctx.gf(fid).builtin.is_some() {
                    return;
                }
                let slot_types: Option<Vec<TypeTerm>> = args
                    .iter()
                    .map(|a| af.expr_types.get(&a.id()).cloned())
                    .collect();
                if let Some(slots) = slot_types {
                    let t_arg = TypeTerm::Tuple(slots);
                    let matches = dispatch::method_matches(ctx, fid, &t_arg);
                    if let [only] = matches.as_slice() {
                        if crate::lattice::type_equal(&ctx.types, &only.meet, &t_arg) {
                            out.push((*id, (fid, only.method.id)));
                        }
                    }
                }
            }
        }
    }
}

/// Dump IR after each named pass stage for `--dump-ir --after=<pass>`.
pub fn dump_after(
    ctx: &mut Ctx,
    method: &Rc<MethodDef>,
    entry_sig: &TypeTerm,
    statics: &[(String, TypeTerm)],
    stage: &str,
) -> String {
    let saved = ctx.config.optimize;
    let af = match stage {
        "annotate" => {
            ctx.config.optimize = false;
            let (af, _) = specialize(ctx, method, entry_sig, statics);
            ctx.config.optimize = saved;
            af
        }
        _ => {
            ctx.config.optimize = true;
            let (af, _) = specialize(ctx, method, entry_sig, statics);
            ctx.config.optimize = saved;
            af
        }
    };
    crate::ir::dump_function(&af.func)
}
