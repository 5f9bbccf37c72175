//! Generic functions: specificity-sorted method tables, ambiguity detection,
//! the per-function specialization cache with its hash-consed fast path, the
//! caching heuristics, and staged-method expansion.

use crate::ctx::{Ctx, DispatchRecord};
use crate::display::type_to_string;
use crate::interp::{Builtin, RtError};
use crate::lattice;
use crate::optimize::AnnotatedFunction;
use crate::types::{ConcreteTypeId, TypeTerm, TypeVarRef};
use crate::value::{type_as_staged_value, Value};
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub struct FuncId(pub u32);

/// One method of a generic function.
#[derive(Debug)]
pub struct MethodDef {
    pub id: u32,
    /// Tuple type over the argument slots; may mention `static_params`.
    pub signature: TypeTerm,
    pub static_params: Vec<TypeVarRef>,
    pub body: Rc<crate::ir::IRFunction>,
    pub staged: bool,
    /// Source position, as `file:line`.
    pub declared_in: String,
}

/// A compiled-and-cached specialization of one method.
#[derive(Debug)]
pub struct Specialization {
    pub method: Rc<MethodDef>,
    pub func: Rc<AnnotatedFunction>,
    pub result_type: TypeTerm,
    /// Static parameter bindings solved from the entry signature, valid for
    /// every call the entry matches.
    pub static_env: Vec<(String, Value)>,
    /// Whether `static_env` must be re-solved per call (the entry signature
    /// was widened past the point where the solution is unique).
    pub resolve_statics_per_call: bool,
}

#[derive(Debug)]
pub struct CacheEntry {
    pub entry_sig: TypeTerm,
    /// Fast comparison key when the entry matches exactly one concrete
    /// argument tuple.
    pub exact_ids: Option<Vec<ConcreteTypeId>>,
    pub dummy: bool,
    pub origin: Rc<MethodDef>,
    pub spec: Option<Rc<Specialization>>,
}

/// Primary cache key: the hash-consed id of the first argument.
const NO_ARG_KEY: u32 = u32::MAX;

pub struct GenericFunction {
    pub name: String,
    /// Sorted so the first match is the most specific applicable method.
    pub methods: Vec<Rc<MethodDef>>,
    pub cache: HashMap<u32, Vec<Rc<CacheEntry>>>,
    /// Length of the longest method signature; variadic calls are capped
    /// here.
    pub max_sig_len: usize,
    pub builtin: Option<Builtin>,
}

impl GenericFunction {
    pub fn new(name: &str) -> GenericFunction {
        GenericFunction {
            name: name.to_string(),
            methods: Vec::new(),
            cache: HashMap::new(),
            max_sig_len: 0,
            builtin: None,
        }
    }
}

impl std::fmt::Debug for GenericFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GenericFunction({}, {} methods)", self.name, self.methods.len())
    }
}

fn sig_call_string(ctx: &Ctx, name: &str, sig: &TypeTerm) -> String {
    let elems = match sig {
        TypeTerm::Tuple(es) => es
            .iter()
            .map(|e| type_to_string(&ctx.types, e))
            .collect::<Vec<_>>()
            .join(","),
        other => type_to_string(&ctx.types, other),
    };
    format!("{name}({elems})")
}

// ---------------------------------------------------------------------------
// Method addition and ambiguity detection
// ---------------------------------------------------------------------------

/// Insert a method, keeping the table sorted by specificity. An existing
/// method with an alpha-equivalent signature is replaced. Ambiguous pairs
/// (nonempty intersection, neither more specific) produce a warning naming
/// the computed intersection. The specialization cache is flushed.
pub fn add_method(
    ctx: &mut Ctx,
    fid: FuncId,
    signature: TypeTerm,
    static_params: Vec<TypeVarRef>,
    body: Rc<crate::ir::IRFunction>,
    staged: bool,
    declared_in: String,
) -> Rc<MethodDef> {
    let def = Rc::new(MethodDef {
        id: ctx.fresh_method_id(),
        signature: signature.clone(),
        static_params,
        body,
        staged,
        declared_in,
    });
    let name = ctx.gf(fid).name.clone();
    let methods = ctx.gf(fid).methods.clone();

    // Redefinition: replace in place.
    if let Some(pos) = methods
        .iter()
        .position(|m| lattice::signatures_equal(&ctx.types, &m.signature, &signature))
    {
        let gf = ctx.gf_mut(fid);
        gf.methods[pos] = def.clone();
        gf.cache.clear();
        recompute_max_len(ctx.gf_mut(fid));
        return def;
    }

    // Ambiguity warnings against every existing method.
    let (new_fresh, _, _) = lattice::freshen_signature(&def.signature, &def.static_params);
    for m in &methods {
        let (old_fresh, _, _) = lattice::freshen_signature(&m.signature, &m.static_params);
        let meet = lattice::intersect(&ctx.types, &new_fresh, &old_fresh);
        if meet == TypeTerm::Bottom {
            continue;
        }
        let new_ms = lattice::morespecific(&ctx.types, &new_fresh, &old_fresh);
        let old_ms = lattice::morespecific(&ctx.types, &old_fresh, &new_fresh);
        if !new_ms && !old_ms {
            let msg = format!(
                "Warning: New definition {} is ambiguous with {}. Make sure {} is defined first.",
                sig_call_string(ctx, &name, &def.signature),
                sig_call_string(ctx, &name, &m.signature),
                sig_call_string(ctx, &name, &meet),
            );
            ctx.warn(msg);
        }
    }

    // Insert before the first method the new one is strictly more specific
    // than.
    let mut pos = methods.len();
    for (i, m) in methods.iter().enumerate() {
        let (new_fresh, _, _) = lattice::freshen_signature(&def.signature, &def.static_params);
        let (old_fresh, _, _) = lattice::freshen_signature(&m.signature, &m.static_params);
        if lattice::morespecific(&ctx.types, &new_fresh, &old_fresh) {
            pos = i;
            break;
        }
    }
    let gf = ctx.gf_mut(fid);
    gf.methods.insert(pos, def.clone());
    gf.cache.clear();
    recompute_max_len(gf);
    def
}

fn recompute_max_len(gf: &mut GenericFunction) {
    gf.max_sig_len = gf
        .methods
        .iter()
        .map(|m| match &m.signature {
            TypeTerm::Tuple(es) => es.len(),
            _ => 0,
        })
        .max()
        .unwrap_or(0);
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MethodMatch {
    pub method: Rc<MethodDef>,
    /// `t_arg ⊓ signature` with solved parameters substituted.
    pub meet: TypeTerm,
    /// Solved static parameters, in declaration order.
    pub statics: Vec<(TypeVarRef, TypeTerm)>,
}

/// All methods whose signatures have a nonempty intersection with `t_arg`,
/// in specificity order. The scan stops early once the union of the
/// signatures seen so far covers `t_arg`.
pub fn method_matches(ctx: &mut Ctx, fid: FuncId, t_arg: &TypeTerm) -> Vec<MethodMatch> {
    let methods = ctx.gf(fid).methods.clone();
    let mut out = Vec::new();
    let mut seen_union = TypeTerm::Bottom;
    for m in &methods {
        if let Some(mm) = match_method(ctx, m, t_arg) {
            out.push(mm);
        }
        if ctx.config.early_stop {
            seen_union = lattice::union2(&ctx.types, &seen_union, &m.signature);
            if lattice::subtype(&ctx.types, t_arg, &seen_union) {
                break;
            }
        }
    }
    out
}

fn match_method(ctx: &Ctx, m: &Rc<MethodDef>, t_arg: &TypeTerm) -> Option<MethodMatch> {
    let (sig_fresh, fresh_vars, _) =
        lattice::freshen_signature(&m.signature, &m.static_params);
    let (meet, subst) = lattice::intersect_env(&ctx.types, t_arg, &sig_fresh)?;
    if meet == TypeTerm::Bottom {
        return None;
    }
    let mut statics = Vec::with_capacity(m.static_params.len());
    for (orig, fresh) in m.static_params.iter().zip(fresh_vars.iter()) {
        match subst.get(fresh) {
            Some(t) => statics.push((orig.clone(), t.clone())),
            None => return None,
        }
    }
    Some(MethodMatch {
        method: m.clone(),
        meet,
        statics,
    })
}

// ---------------------------------------------------------------------------
// Specialization heuristics
// ---------------------------------------------------------------------------

/// Compute the cache entry signature for a call, applying the
/// despecialization heuristics in order: kind-nesting cap, tuple-slot
/// widening, vararg capping (with dummy entries), type-object
/// despecialization, and the `ANY` hint. Heuristics never widen an entry to
/// the point where it could shadow a more specific applicable method.
pub fn specialize_signature(
    ctx: &mut Ctx,
    fid: FuncId,
    origin: &Rc<MethodDef>,
    actual: &[TypeTerm],
) -> (TypeTerm, Vec<TypeTerm>) {
    let exact = TypeTerm::Tuple(actual.to_vec());
    if !ctx.config.heuristics || origin.staged {
        return (exact, Vec::new());
    }
    let gf = ctx.gf(fid);
    let methods = gf.methods.clone();
    let max_sig_len = gf.max_sig_len;

    // (c) Variadic capping comes first: overlong argument lists share one
    // maximally wide entry guarded by dummy entries for every other
    // signature it overlaps.
    if max_sig_len >= 1 && actual.len() > max_sig_len {
        let mut slots = vec![TypeTerm::Any; max_sig_len - 1];
        slots.push(TypeTerm::vararg(TypeTerm::Any));
        let capped = TypeTerm::Tuple(slots);
        if lattice::subtype(&ctx.types, &capped, &origin.signature) {
            let mut dummies = Vec::new();
            for m in &methods {
                if m.id == origin.id {
                    continue;
                }
                let (sig_fresh, _, _) =
                    lattice::freshen_signature(&m.signature, &m.static_params);
                let meet = lattice::intersect(&ctx.types, &capped, &sig_fresh);
                if meet != TypeTerm::Bottom {
                    dummies.push(meet);
                }
            }
            return (capped, dummies);
        }
        return (exact, Vec::new());
    }

    let decl_slots = slot_types(&origin.signature, actual.len());
    let mut slots: Vec<TypeTerm> = actual.to_vec();
    for (i, slot) in slots.iter_mut().enumerate() {
        let decl = decl_slots.get(i).cloned().unwrap_or(TypeTerm::Any);
        // (e) The ANY hint forces the slot unspecialized.
        if matches!(decl, TypeTerm::AnyHint) {
            *slot = TypeTerm::Any;
            continue;
        }
        // (a) Nested kinds collapse to the unspecialized Type unless the
        // declaration itself nests that deep.
        let depth = slot.kind_depth();
        if depth >= ctx.config.kind_depth && decl.kind_depth() < depth {
            *slot = TypeTerm::Apply(ctx.types.type_family, Vec::new());
            continue;
        }
        // (d) Type objects do not trigger per-object entries unless some
        // method dispatches on Type in this slot.
        if depth >= 1 {
            let any_mentions = methods.iter().any(|m| {
                let d = slot_types(&m.signature, actual.len());
                d.get(i).map(|t| mentions_type(t)).unwrap_or(false)
            });
            if !any_mentions {
                *slot = TypeTerm::Apply(ctx.types.type_family, Vec::new());
                continue;
            }
        }
        // (b) Tuple slots widen to the intersection of the declared slot
        // with the generic tuple type, valid for any tuple argument.
        if slot.is_tuple() {
            let generic_tuple = TypeTerm::Tuple(vec![TypeTerm::vararg(TypeTerm::Any)]);
            let widened = lattice::intersect(&ctx.types, &decl, &generic_tuple);
            if widened != TypeTerm::Bottom {
                *slot = widened;
            }
        }
    }
    let entry = TypeTerm::Tuple(slots);
    if entry == exact {
        return (exact, Vec::new());
    }
    // Safety: the widened entry must still select `origin` for everything
    // it matches — it must sit inside the origin signature and not overlap
    // any more specific method.
    let (origin_fresh, _, _) =
        lattice::freshen_signature(&origin.signature, &origin.static_params);
    if !lattice::subtype(&ctx.types, &entry, &origin_fresh) {
        return (exact, Vec::new());
    }
    for m in &methods {
        if m.id == origin.id {
            break;
        }
        let (sig_fresh, _, _) = lattice::freshen_signature(&m.signature, &m.static_params);
        if lattice::intersect(&ctx.types, &entry, &sig_fresh) != TypeTerm::Bottom {
            return (exact, Vec::new());
        }
    }
    (entry, Vec::new())
}

/// Declared type of each argument slot, expanding a trailing vararg.
fn slot_types(sig: &TypeTerm, nargs: usize) -> Vec<TypeTerm> {
    match sig {
        TypeTerm::Tuple(es) => {
            let mut out = Vec::with_capacity(nargs);
            for i in 0..nargs {
                if i < es.len() {
                    out.push(es[i].vararg_elem().clone());
                } else if es.last().map(|t| t.is_vararg()).unwrap_or(false) {
                    out.push(es.last().unwrap().vararg_elem().clone());
                } else {
                    break;
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

fn mentions_type(t: &TypeTerm) -> bool {
    match t {
        TypeTerm::Kind(_) => true,
        TypeTerm::Apply(_, ps) => ps.iter().any(mentions_type),
        TypeTerm::Tuple(es) | TypeTerm::Union(es) => es.iter().any(mentions_type),
        TypeTerm::Vararg(e) => mentions_type(e),
        TypeTerm::Var(v) => mentions_type(&v.upper),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Staged expansion
// ---------------------------------------------------------------------------

/// Run a staged method's body on the argument *types*; the quoted code it
/// returns becomes the body of a fresh non-staged method specialized to
/// those types. Expansions are cached per argument type combination.
pub fn expand_staged(
    ctx: &mut Ctx,
    m: &Rc<MethodDef>,
    arg_types: &[TypeTerm],
) -> Result<Rc<MethodDef>, RtError> {
    let key = (m.id, TypeTerm::Tuple(arg_types.to_vec()));
    if let Some(def) = ctx.staged_cache.get(&key) {
        return Ok(def.clone());
    }
    let args: Vec<Value> = arg_types.iter().map(type_as_staged_value).collect();
    let result = crate::interp::run_function_raw(ctx, &m.body.clone(), args, &[])?;
    let code = match result {
        Value::Code(ir) => ir,
        other => {
            return Err(RtError::new(format!(
                "staged method {} returned a non-code value: {}",
                m.body.name,
                crate::display::value_to_string(&ctx.types, &other)
            )))
        }
    };
    let mut func = (*code).clone();
    func.name = format!("{}@{}", m.body.name, ctx.stats.staged_expansions);
    func.params = m.body.params.clone();
    func.vararg = m.body.vararg;
    let mut locals: Vec<String> = func.params.clone();
    for s in &func.body {
        if let crate::ir::Statement::Assign { var, global: false, .. } = s {
            if !locals.contains(var) {
                locals.push(var.clone());
            }
        }
    }
    func.locals = locals;
    func.renumber();
    func.verify().map_err(RtError::new)?;
    let def = Rc::new(MethodDef {
        id: ctx.fresh_method_id(),
        signature: TypeTerm::Tuple(arg_types.to_vec()),
        static_params: Vec::new(),
        body: Rc::new(func),
        staged: false,
        declared_in: m.declared_in.clone(),
    });
    ctx.stats.staged_expansions += 1;
    ctx.staged_cache.insert(key, def.clone());
    Ok(def)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

pub fn no_method_error(ctx: &Ctx, fid: FuncId, t_arg: &TypeTerm) -> RtError {
    RtError::new(format!(
        "no method matching {}",
        sig_call_string(ctx, &ctx.gf(fid).name, t_arg)
    ))
}

/// Resolve a call: hash-cons the argument types, try the cache keyed by the
/// first argument's id, and fall back to the sorted-table scan plus
/// specialization on a miss (or on a dummy hit).
pub fn dispatch(
    ctx: &mut Ctx,
    fid: FuncId,
    arg_types: &[TypeTerm],
) -> Result<Rc<CacheEntry>, RtError> {
    ctx.stats.dynamic_dispatches += 1;
    let ids: Option<Vec<ConcreteTypeId>> = arg_types
        .iter()
        .map(|t| ctx.types.intern(t).ok())
        .collect();
    let key = ids
        .as_ref()
        .and_then(|v| v.first().map(|id| id.0))
        .unwrap_or(NO_ARG_KEY);
    let tuple = TypeTerm::Tuple(arg_types.to_vec());

    if let Some(bucket) = ctx.gf(fid).cache.get(&key) {
        let mut hit = None;
        for entry in bucket {
            let matched = match (&entry.exact_ids, &ids) {
                (Some(eids), Some(aids)) => eids == aids,
                _ => lattice::subtype(&ctx.types, &tuple, &entry.entry_sig),
            };
            if matched {
                hit = Some(entry.clone());
                break;
            }
        }
        if let Some(entry) = hit {
            if entry.dummy {
                ctx.stats.dummy_hits += 1;
            } else {
                ctx.stats.cache_hits += 1;
                record(ctx, fid, arg_types, entry.origin.id);
                return Ok(entry);
            }
        }
    }

    ctx.stats.cache_misses += 1;
    slow_dispatch(ctx, fid, arg_types, key)
}

fn record(ctx: &mut Ctx, fid: FuncId, arg_types: &[TypeTerm], method: u32) {
    if ctx.config.record_dispatch {
        ctx.dispatch_log.push(DispatchRecord {
            func: fid,
            arg_types: arg_types.to_vec(),
            method,
        });
    }
}

/// The slow path: scan the sorted methods with intersection-based matching
/// (static parameters properly matched); the first match wins.
pub fn slow_dispatch(
    ctx: &mut Ctx,
    fid: FuncId,
    arg_types: &[TypeTerm],
    key: u32,
) -> Result<Rc<CacheEntry>, RtError> {
    let tuple = TypeTerm::Tuple(arg_types.to_vec());
    let m = match first_match(ctx, fid, &tuple) {
        Some(m) => m,
        None => return Err(no_method_error(ctx, fid, &tuple)),
    };
    record(ctx, fid, arg_types, m.method.id);

    let (target, statics) = if m.method.staged {
        let expanded = expand_staged(ctx, &m.method, arg_types)?;
        (expanded, Vec::new())
    } else {
        (m.method.clone(), m.statics.clone())
    };

    let (entry_sig, dummies) = specialize_signature(ctx, fid, &m.method, arg_types);
    let exact = entry_sig == tuple;
    let spec = compile_specialization(ctx, &target, &entry_sig, &statics, exact)?;
    let exact_ids = if exact {
        arg_types
            .iter()
            .map(|t| ctx.types.intern(t).ok())
            .collect()
    } else {
        None
    };
    let entry = Rc::new(CacheEntry {
        entry_sig,
        exact_ids,
        dummy: false,
        origin: m.method.clone(),
        spec: Some(Rc::new(spec)),
    });
    let bucket = ctx.gf_mut(fid).cache.entry(key).or_default();
    for d in dummies {
        bucket.push(Rc::new(CacheEntry {
            entry_sig: d,
            exact_ids: None,
            dummy: true,
            origin: m.method.clone(),
            spec: None,
        }));
    }
    // New entries go in front so precise entries shadow widened ones, and
    // dummies are checked before the capped entry they guard.
    bucket.insert(0, entry.clone());
    let slot = bucket.len() - 1;
    let _ = slot;
    Ok(entry)
}

/// First applicable method in specificity order.
pub fn first_match(ctx: &mut Ctx, fid: FuncId, tuple: &TypeTerm) -> Option<MethodMatch> {
    let methods = ctx.gf(fid).methods.clone();
    for m in &methods {
        if let Some(mm) = match_method(ctx, m, tuple) {
            return Some(mm);
        }
    }
    None
}

/// Infer and optimize a method body at an entry signature. Re-entry for a
/// specialization already being compiled (a call cycle reached through
/// inlining or staged expansion) yields a plain uncompiled body.
pub fn compile_specialization(
    ctx: &mut Ctx,
    method: &Rc<MethodDef>,
    entry_sig: &TypeTerm,
    statics: &[(TypeVarRef, TypeTerm)],
    statics_unique: bool,
) -> Result<Specialization, RtError> {
    ctx.stats.specializations += 1;
    let static_env: Vec<(String, Value)> = statics
        .iter()
        .map(|(v, t)| (v.name.clone(), Value::Type(t.clone())))
        .collect();
    let key = (method.id, entry_sig.clone());
    if ctx.compiling.contains(&key) {
        let plain = crate::optimize::AnnotatedFunction {
            func: method.body.clone(),
            expr_types: std::collections::HashMap::new(),
            const_bools: std::collections::HashMap::new(),
            direct_targets: std::collections::HashMap::new(),
            next_expr_id: method.body.n_exprs,
        };
        return Ok(Specialization {
            method: method.clone(),
            func: Rc::new(plain),
            result_type: TypeTerm::Any,
            static_env,
            resolve_statics_per_call: !statics_unique && !statics.is_empty(),
        });
    }
    ctx.compiling.insert(key.clone());
    let static_types: Vec<(String, TypeTerm)> = statics
        .iter()
        .map(|(v, t)| (v.name.clone(), TypeTerm::kind(t.clone())))
        .collect();
    let (annotated, result_type) =
        crate::optimize::specialize(ctx, method, entry_sig, &static_types);
    ctx.compiling.remove(&key);
    Ok(Specialization {
        method: method.clone(),
        func: Rc::new(annotated),
        result_type,
        static_env,
        resolve_statics_per_call: !statics_unique && !statics.is_empty(),
    })
}

/// Resolve a direct (devirtualized) call: the method is known, so the
/// sorted-table scan is skipped; only the specialization lookup remains.
pub fn dispatch_direct(
    ctx: &mut Ctx,
    fid: FuncId,
    method_id: u32,
    arg_types: &[TypeTerm],
) -> Result<Rc<CacheEntry>, RtError> {
    ctx.stats.direct_calls += 1;
    let ids: Option<Vec<ConcreteTypeId>> = arg_types
        .iter()
        .map(|t| ctx.types.intern(t).ok())
        .collect();
    let key = ids
        .as_ref()
        .and_then(|v| v.first().map(|id| id.0))
        .unwrap_or(NO_ARG_KEY);
    let tuple = TypeTerm::Tuple(arg_types.to_vec());
    if let Some(bucket) = ctx.gf(fid).cache.get(&key) {
        for entry in bucket {
            if entry.dummy || entry.origin.id != method_id {
                continue;
            }
            let matched = match (&entry.exact_ids, &ids) {
                (Some(eids), Some(aids)) => eids == aids,
                _ => lattice::subtype(&ctx.types, &tuple, &entry.entry_sig),
            };
            if matched {
                return Ok(entry.clone());
            }
        }
    }
    // Not yet specialized for these types: compile the known method without
    // scanning the table.
    let method = ctx
        .gf(fid)
        .methods
        .iter()
        .find(|m| m.id == method_id)
        .cloned()
        .ok_or_else(|| no_method_error(ctx, fid, &tuple))?;
    let mm = match_method(ctx, &method, &tuple)
        .ok_or_else(|| no_method_error(ctx, fid, &tuple))?;
    let (target, statics) = if method.staged {
        let expanded = expand_staged(ctx, &method, arg_types)?;
        (expanded, Vec::new())
    } else {
        (method.clone(), mm.statics.clone())
    };
    let (entry_sig, dummies) = specialize_signature(ctx, fid, &method, arg_types);
    let exact = entry_sig == tuple;
    let spec = compile_specialization(ctx, &target, &entry_sig, &statics, exact)?;
    let exact_ids = if exact {
        arg_types
            .iter()
            .map(|t| ctx.types.intern(t).ok())
            .collect()
    } else {
        None
    };
    let entry = Rc::new(CacheEntry {
        entry_sig,
        exact_ids,
        dummy: false,
        origin: method,
        spec: Some(Rc::new(spec)),
    });
    let bucket = ctx.gf_mut(fid).cache.entry(key).or_default();
    for d in dummies {
        bucket.push(Rc::new(CacheEntry {
            entry_sig: d,
            exact_ids: None,
            dummy: true,
            origin: entry.origin.clone(),
            spec: None,
        }));
    }
    bucket.insert(0, entry.clone());
    Ok(entry)
}

/// Re-solve static parameters for a particular call when the cached entry
/// is too wide to pin them.
pub fn solve_statics_for_call(
    ctx: &Ctx,
    method: &Rc<MethodDef>,
    arg_types: &[TypeTerm],
) -> Result<Vec<(String, Value)>, RtError> {
    let tuple = TypeTerm::Tuple(arg_types.to_vec());
    let mm = match_method(ctx, method, &tuple).ok_or_else(|| {
        RtError::new(format!(
            "static parameters undetermined for {}",
            method.body.name
        ))
    })?;
    Ok(mm
        .statics
        .iter()
        .map(|(v, t)| (v.name.clone(), Value::Type(t.clone())))
        .collect())
}
