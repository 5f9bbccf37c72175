//! Lattice operators over type terms: the subtype predicate, extensional
//! equality, union construction with simplification, intersection with a
//! constraint environment and solver, the method-specificity partial order,
//! and the widening operators used by inference.
//!
//! Only `subtype` needs to be exact; union and intersection may be
//! conservative. Intersection must agree with `subtype` whenever one
//! argument is concrete, since dispatch matches methods by intersecting.

use crate::types::{
    fresh_var, rename_var, TypeNameId, TypeStore, TypeTerm, TypeVarRef,
};
use std::collections::{HashMap, HashSet};

// ---------------------------------------------------------------------------
// Subtype
// ---------------------------------------------------------------------------

/// `a ≤ b`. Total on type terms; free variables compare extensionally
/// (a variable has the specificity of its upper bound).
pub fn subtype(st: &TypeStore, a: &TypeTerm, b: &TypeTerm) -> bool {
    let a = a.erased();
    let b = b.erased();
    if a == b {
        return true;
    }
    match (a, b) {
        (TypeTerm::Bottom, _) => true,
        (_, TypeTerm::Any) => true,
        (TypeTerm::Any, _) => false,
        (_, TypeTerm::Bottom) => false,
        // Union clauses come first so unions of tuples behave correctly.
        (TypeTerm::Union(ms), _) => ms.iter().all(|m| subtype(st, m, b)),
        (_, TypeTerm::Union(ms)) => ms.iter().any(|m| subtype(st, a, m)),
        // Variables stand for their bounds.
        (TypeTerm::Var(v), _) => subtype(st, &v.upper, b),
        (_, TypeTerm::Var(v)) => subtype(st, a, &v.upper),
        (TypeTerm::Tuple(xs), TypeTerm::Tuple(ys)) => tuple_subtype(st, xs, ys),
        (TypeTerm::Tuple(_), _) | (_, TypeTerm::Tuple(_)) => false,
        (TypeTerm::Int(x), TypeTerm::Int(y)) => x == y,
        (TypeTerm::Int(_), _) | (_, TypeTerm::Int(_)) => false,
        (TypeTerm::Kind(s), TypeTerm::Kind(t)) => type_equal(st, s, t),
        // `Type{T} ≤ B` holds when the unspecialized Type family does.
        (TypeTerm::Kind(_), _) => {
            subtype(st, &TypeTerm::Apply(st.type_family, Vec::new()), b)
        }
        // `A ≤ Type{T}` only via extensional equality with T.
        (_, TypeTerm::Kind(t)) => type_equal(st, a, t),
        (TypeTerm::Apply(fa, pa), TypeTerm::Apply(fb, pb)) => {
            nominal_subtype(st, *fa, pa, *fb, pb)
        }
        _ => false,
    }
}

/// Walk `a`'s declared supertype chain looking for `b`'s family; parameters
/// compare invariantly on the prefix `b` actually specifies.
fn nominal_subtype(
    st: &TypeStore,
    fa: TypeNameId,
    pa: &[TypeTerm],
    fb: TypeNameId,
    pb: &[TypeTerm],
) -> bool {
    let mut cur_f = fa;
    let mut cur_p: Vec<TypeTerm> = pa.to_vec();
    loop {
        if cur_f == fb {
            return pb.len() <= cur_p.len()
                && cur_p
                    .iter()
                    .zip(pb.iter())
                    .all(|(x, y)| type_equal(st, x, y));
        }
        match st.super_instance(cur_f, &cur_p) {
            TypeTerm::Apply(f, p) => {
                cur_f = f;
                cur_p = p;
            }
            _ => return false,
        }
    }
}

fn tuple_subtype(st: &TypeStore, xs: &[TypeTerm], ys: &[TypeTerm]) -> bool {
    let mut ai = 0;
    let mut bi = 0;
    loop {
        let a_seq = ai < xs.len() && xs[ai].is_vararg();
        let b_seq = bi < ys.len() && ys[bi].is_vararg();
        if ai >= xs.len() {
            return bi >= ys.len() || b_seq;
        }
        if a_seq && !b_seq {
            return false;
        }
        if bi >= ys.len() {
            return false;
        }
        if !subtype(st, xs[ai].vararg_elem(), ys[bi].vararg_elem()) {
            return false;
        }
        if a_seq && b_seq {
            return true;
        }
        if !a_seq {
            ai += 1;
        }
        if !b_seq {
            bi += 1;
        }
    }
}

/// Extensional type equality: `a ≤ b ∧ b ≤ a`. Used for types in invariant
/// context (type parameters).
pub fn type_equal(st: &TypeStore, a: &TypeTerm, b: &TypeTerm) -> bool {
    subtype(st, a, b) && subtype(st, b, a)
}

// ---------------------------------------------------------------------------
// Union
// ---------------------------------------------------------------------------

/// Construct the union of the given members: nested unions are flattened,
/// any member that is a subtype of another is removed, and the survivors are
/// canonically ordered so construction is deterministic.
pub fn union_all(st: &TypeStore, members: Vec<TypeTerm>) -> TypeTerm {
    let mut flat = Vec::new();
    fn flatten(t: TypeTerm, out: &mut Vec<TypeTerm>) {
        match t {
            TypeTerm::Union(ms) => ms.into_iter().for_each(|m| flatten(m, out)),
            TypeTerm::Bottom => {}
            other => out.push(other),
        }
    }
    members.into_iter().for_each(|m| flatten(m, &mut flat));
    flat.sort_by(|a, b| st.term_cmp(a, b));
    let mut kept: Vec<TypeTerm> = Vec::new();
    for m in flat {
        if kept.iter().any(|k| subtype(st, &m, k)) {
            continue;
        }
        kept.retain(|k| !subtype(st, k, &m));
        kept.push(m);
    }
    match kept.len() {
        0 => TypeTerm::Bottom,
        1 => kept.pop().unwrap(),
        _ => {
            kept.sort_by(|a, b| st.term_cmp(a, b));
            TypeTerm::Union(kept)
        }
    }
}

pub fn union2(st: &TypeStore, a: &TypeTerm, b: &TypeTerm) -> TypeTerm {
    union_all(st, vec![a.clone(), b.clone()])
}

// ---------------------------------------------------------------------------
// Constraint environments and the solver
// ---------------------------------------------------------------------------

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Rel {
    /// `T ≤ S`: from a covariant context (tuples).
    Sub,
    /// `T = S`: from an invariant context (type parameters).
    Eq,
}

/// Ordered constraints gathered while intersecting. Solving is
/// deterministic given entry order.
#[derive(Default, Clone, Debug)]
pub struct ConstraintEnv {
    pub entries: Vec<(TypeVarRef, Rel, TypeTerm)>,
}

impl ConstraintEnv {
    pub fn push(&mut self, v: TypeVarRef, rel: Rel, rhs: TypeTerm) {
        self.entries.push((v, rel, rhs));
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }
}

/// An idempotent mapping from type variables to terms.
#[derive(Default, Clone, Debug)]
pub struct Substitution {
    map: HashMap<u64, TypeTerm>,
}

impl Substitution {
    pub fn get(&self, v: &TypeVarRef) -> Option<&TypeTerm> {
        self.map.get(&v.id)
    }
    pub fn get_id(&self, id: u64) -> Option<&TypeTerm> {
        self.map.get(&id)
    }
    pub fn insert(&mut self, id: u64, t: TypeTerm) {
        self.map.insert(id, t);
    }
    pub fn apply(&self, t: &TypeTerm) -> TypeTerm {
        t.subst(&self.map)
    }
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

struct Solver<'a> {
    st: &'a TypeStore,
    parent: HashMap<u64, u64>,
    bound: HashMap<u64, TypeTerm>,
    vars: HashMap<u64, TypeVarRef>,
}

impl<'a> Solver<'a> {
    fn root(&mut self, id: u64) -> u64 {
        let mut r = id;
        while let Some(&p) = self.parent.get(&r) {
            r = p;
        }
        // path compression
        let mut c = id;
        while let Some(&p) = self.parent.get(&c) {
            self.parent.insert(c, r);
            c = p;
        }
        r
    }

    fn register(&mut self, v: &TypeVarRef) {
        self.vars.entry(v.id).or_insert_with(|| v.clone());
    }

    /// Fully resolve a term against the current solution.
    fn resolve(&mut self, t: &TypeTerm) -> TypeTerm {
        match t {
            TypeTerm::Var(v) => {
                let r = self.root(v.id);
                match self.bound.get(&r).cloned() {
                    Some(b) => self.resolve(&b),
                    None => match self.vars.get(&r) {
                        Some(rv) if rv.id != v.id => TypeTerm::Var(rv.clone()),
                        _ => t.clone(),
                    },
                }
            }
            TypeTerm::Apply(f, ps) => {
                TypeTerm::Apply(*f, ps.iter().map(|p| self.resolve(p)).collect())
            }
            TypeTerm::Tuple(es) => {
                TypeTerm::Tuple(es.iter().map(|e| self.resolve(e)).collect())
            }
            TypeTerm::Union(es) => {
                TypeTerm::Union(es.iter().map(|e| self.resolve(e)).collect())
            }
            TypeTerm::Vararg(e) => TypeTerm::vararg(self.resolve(e)),
            TypeTerm::Kind(e) => TypeTerm::kind(self.resolve(e)),
            _ => t.clone(),
        }
    }

    fn occurs(&mut self, root: u64, t: &TypeTerm) -> bool {
        t.free_vars().iter().any(|v| self.root(v.id) == root)
    }

    /// `find` in the union-find sense; `x = y` constraints decompose
    /// structurally until we hit variables or leaves.
    fn add_eq(&mut self, x: &TypeTerm, y: &TypeTerm) -> bool {
        let x = self.resolve(x);
        let y = self.resolve(y);
        if x == y {
            return true;
        }
        match (&x, &y) {
            (TypeTerm::Var(v), TypeTerm::Var(w)) => {
                self.register(v);
                self.register(w);
                let rv = self.root(v.id);
                let rw = self.root(w.id);
                if rv != rw {
                    self.parent.insert(rv, rw);
                }
                true
            }
            (TypeTerm::Var(v), t) | (t, TypeTerm::Var(v)) => {
                self.register(v);
                let r = self.root(v.id);
                if self.occurs(r, t) {
                    return false;
                }
                match self.bound.get(&r).cloned() {
                    Some(prev) => self.add_eq(&prev, t),
                    None => {
                        self.bound.insert(r, t.clone());
                        true
                    }
                }
            }
            (TypeTerm::Apply(f, ps), TypeTerm::Apply(g, qs)) if f == g => {
                if ps.len() != qs.len() {
                    return false;
                }
                ps.iter().zip(qs.iter()).all2(|(p, q)| self.add_eq(p, q))
            }
            (TypeTerm::Tuple(ps), TypeTerm::Tuple(qs)) => {
                if ps.len() != qs.len() {
                    return false;
                }
                ps.iter().zip(qs.iter()).all2(|(p, q)| {
                    if p.is_vararg() != q.is_vararg() {
                        false
                    } else {
                        self.add_eq(p.vararg_elem(), q.vararg_elem())
                    }
                })
            }
            (TypeTerm::Kind(s), TypeTerm::Kind(t)) => self.add_eq(s, t),
            _ => {
                if !x.has_vars() && !y.has_vars() {
                    type_equal(self.st, &x, &y)
                } else {
                    false
                }
            }
        }
    }
}

// `Iterator::all` short-circuits, which would skip registering constraints
// we still want surfaced as conflicts; a strict variant keeps the solver
// deterministic in entry order.
trait All2: Iterator {
    fn all2<F: FnMut(Self::Item) -> bool>(self, f: F) -> bool;
}
impl<I: Iterator> All2 for I {
    fn all2<F: FnMut(Self::Item) -> bool>(self, mut f: F) -> bool {
        let mut ok = true;
        for item in self {
            ok &= f(item);
        }
        ok
    }
}

/// Solve the accumulated constraints. Upper bounds with a concrete
/// right-hand side sharpen to equalities; conflicting equalities mean the
/// intersection is empty (`None`). Variables with several abstract upper
/// bounds fall back to the coarse meet that keeps the first bound, except
/// that an immediate declared subtype of the other bound wins.
pub fn solve_constraints(st: &TypeStore, env: &ConstraintEnv) -> Option<Substitution> {
    let mut s = Solver {
        st,
        parent: HashMap::new(),
        bound: HashMap::new(),
        vars: HashMap::new(),
    };
    for (v, rel, rhs) in &env.entries {
        if *rel == Rel::Eq {
            s.register(v);
            if !s.add_eq(&TypeTerm::Var(v.clone()), rhs) {
                return None;
            }
        }
    }
    // Upper bounds: convert to equalities when concrete, otherwise collect.
    let mut pending: Vec<(u64, Vec<TypeTerm>)> = Vec::new();
    for (v, rel, rhs) in &env.entries {
        if *rel != Rel::Sub {
            continue;
        }
        s.register(v);
        let r = s.root(v.id);
        let rhs = s.resolve(rhs);
        if let Some(val) = s.bound.get(&r).cloned() {
            let val = s.resolve(&val);
            if !subtype(st, &val, &rhs) {
                return None;
            }
        } else if st.is_concrete(&rhs) {
            if !s.add_eq(&TypeTerm::Var(v.clone()), &rhs) {
                return None;
            }
        } else {
            match pending.iter_mut().find(|(id, _)| *id == r) {
                Some((_, bounds)) => bounds.push(rhs),
                None => pending.push((r, vec![rhs])),
            }
        }
    }
    for (r, bounds) in pending {
        if let Some(val) = s.bound.get(&r).cloned() {
            // Became bound through a later concrete upper.
            let val = s.resolve(&val);
            for b in &bounds {
                if !subtype(st, &val, b) {
                    return None;
                }
            }
            continue;
        }
        let mut acc = bounds[0].clone();
        for b in &bounds[1..] {
            acc = coarse_meet(st, &acc, b);
        }
        s.bound.insert(r, acc);
    }
    // Every solved variable must satisfy its declared bound.
    let ids: Vec<u64> = s.vars.keys().copied().collect();
    for id in ids {
        let r = s.root(id);
        if let Some(val) = s.bound.get(&r).cloned() {
            let val = s.resolve(&val);
            let upper = s.vars[&id].upper.clone();
            if !subtype(st, &val, &upper) {
                return None;
            }
        }
    }
    let mut subst = Substitution::default();
    let ids: Vec<u64> = s.vars.keys().copied().collect();
    for id in ids {
        let r = s.root(id);
        if s.bound.contains_key(&r) {
            let t = TypeTerm::Var(s.vars[&id].clone());
            let resolved = s.resolve(&t);
            subst.insert(id, resolved);
        } else if r != id {
            let rep = s.vars[&r].clone();
            subst.insert(id, TypeTerm::Var(rep));
        }
    }
    Some(subst)
}

/// `X ⊓* Y`: keep `X`, unless one side is an immediate declared subtype of
/// the other, in which case the subtype wins.
fn coarse_meet(st: &TypeStore, x: &TypeTerm, y: &TypeTerm) -> TypeTerm {
    if let (TypeTerm::Apply(fx, _), TypeTerm::Apply(fy, _)) = (x, y) {
        if immediate_subtype(st, *fy, *fx) {
            return y.clone();
        }
        if immediate_subtype(st, *fx, *fy) {
            return x.clone();
        }
    }
    x.clone()
}

fn immediate_subtype(st: &TypeStore, sub: TypeNameId, sup: TypeNameId) -> bool {
    matches!(st.name(sub).supertype, TypeTerm::Apply(f, _) if f == sup)
}

// ---------------------------------------------------------------------------
// Conform
// ---------------------------------------------------------------------------

/// Match `sup` against a structurally equal `template`, returning equality
/// constraints binding the template's variables to the aligned components
/// of `sup`. Duplicate bindings are kept; the solver reports the conflict.
pub fn conform(st: &TypeStore, sup: &TypeTerm, template: &TypeTerm) -> Option<ConstraintEnv> {
    let mut env = ConstraintEnv::default();
    if conform_walk(st, sup, template, &mut env) {
        Some(env)
    } else {
        None
    }
}

fn conform_walk(
    st: &TypeStore,
    sup: &TypeTerm,
    template: &TypeTerm,
    env: &mut ConstraintEnv,
) -> bool {
    match (sup, template) {
        (t, TypeTerm::Var(v)) => {
            env.push(v.clone(), Rel::Eq, t.clone());
            true
        }
        (TypeTerm::Apply(f, ps), TypeTerm::Apply(g, qs)) => {
            f == g
                && ps
                    .iter()
                    .zip(qs.iter())
                    .all(|(p, q)| conform_walk(st, p, q, env))
        }
        (TypeTerm::Tuple(ps), TypeTerm::Tuple(qs)) => {
            ps.len() == qs.len()
                && ps.iter().zip(qs.iter()).all(|(p, q)| {
                    p.is_vararg() == q.is_vararg()
                        && conform_walk(st, p.vararg_elem(), q.vararg_elem(), env)
                })
        }
        (TypeTerm::Kind(s), TypeTerm::Kind(t)) => conform_walk(st, s, t, env),
        (TypeTerm::Int(a), TypeTerm::Int(b)) => a == b,
        (a, b) if !a.has_vars() && !b.has_vars() => type_equal(st, a, b),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Intersection
// ---------------------------------------------------------------------------

/// `a ⊓ b` with an empty top-level environment; `Bottom` when provably
/// disjoint or the constraints conflict.
pub fn intersect(st: &TypeStore, a: &TypeTerm, b: &TypeTerm) -> TypeTerm {
    match intersect_env(st, a, b) {
        Some((t, _)) => t,
        None => TypeTerm::Bottom,
    }
}

/// Like `intersect`, but also returns the solved variable assignment
/// (the static parameters when matching a method signature). `None` means
/// the constraint environment was inconsistent.
pub fn intersect_env(
    st: &TypeStore,
    a: &TypeTerm,
    b: &TypeTerm,
) -> Option<(TypeTerm, Substitution)> {
    let mut env = ConstraintEnv::default();
    let raw = intersect_in(st, a, b, &mut env, false);
    let subst = solve_constraints(st, &env)?;
    let result = subst.apply(&raw);
    // A solved parameter may have produced an instantiation that violates
    // its family bounds only through variables; those were checked by the
    // solver. Remaining Bottom components collapse tuples.
    Some((normalize_bottom(&result), subst))
}

fn normalize_bottom(t: &TypeTerm) -> TypeTerm {
    match t {
        TypeTerm::Tuple(es) => {
            let mut out = Vec::with_capacity(es.len());
            for e in es {
                let n = normalize_bottom(e);
                match n {
                    TypeTerm::Bottom => return TypeTerm::Bottom,
                    TypeTerm::Vararg(inner) if *inner == TypeTerm::Bottom => {
                        // A vararg of the empty type admits only zero
                        // repetitions; drop it.
                    }
                    other => out.push(other),
                }
            }
            TypeTerm::Tuple(out)
        }
        TypeTerm::Apply(_f, ps) => {
            if ps.iter().any(|p| matches!(normalize_bottom(p), TypeTerm::Bottom)) {
                return TypeTerm::Bottom;
            }
            t.clone()
        }
        _ => t.clone(),
    }
}

/// Structural phase of the intersection algorithm: descend the two types,
/// record constraints for type variables (`≤` in covariant positions, `=`
/// in invariant ones), and meet nominal families through their declared
/// supertypes.
pub fn intersect_in(
    st: &TypeStore,
    a: &TypeTerm,
    b: &TypeTerm,
    env: &mut ConstraintEnv,
    invariant: bool,
) -> TypeTerm {
    let a = a.erased();
    let b = b.erased();
    if a == b {
        return a.clone();
    }
    match (a, b) {
        (TypeTerm::Bottom, _) | (_, TypeTerm::Bottom) => TypeTerm::Bottom,
        (TypeTerm::Any, x) | (x, TypeTerm::Any) => x.clone(),
        (TypeTerm::Var(v), TypeTerm::Var(w)) => {
            env.push(v.clone(), Rel::Eq, TypeTerm::Var(w.clone()));
            TypeTerm::Var(v.clone())
        }
        (TypeTerm::Var(v), x) | (x, TypeTerm::Var(v)) => {
            let rel = if invariant { Rel::Eq } else { Rel::Sub };
            env.push(v.clone(), rel, x.clone());
            TypeTerm::Var(v.clone())
        }
        (TypeTerm::Union(ms), x) | (x, TypeTerm::Union(ms)) => {
            let mut parts = Vec::new();
            for m in ms {
                let mark = env.len();
                let r = intersect_in(st, m, x, env, invariant);
                if r == TypeTerm::Bottom {
                    env.truncate(mark);
                } else {
                    parts.push(r);
                }
            }
            union_all(st, parts)
        }
        (TypeTerm::Tuple(xs), TypeTerm::Tuple(ys)) => {
            tuple_meet(st, xs, ys, env, invariant)
        }
        (TypeTerm::Kind(s), TypeTerm::Kind(t)) => {
            if !s.has_vars() && !t.has_vars() {
                if type_equal(st, s, t) {
                    a.clone()
                } else {
                    TypeTerm::Bottom
                }
            } else {
                match intersect_in(st, s, t, env, true) {
                    TypeTerm::Bottom => TypeTerm::Bottom,
                    inner => TypeTerm::kind(inner),
                }
            }
        }
        (TypeTerm::Kind(_), TypeTerm::Apply(..)) => {
            if subtype(st, &TypeTerm::Apply(st.type_family, Vec::new()), b) {
                a.clone()
            } else {
                TypeTerm::Bottom
            }
        }
        (TypeTerm::Apply(..), TypeTerm::Kind(_)) => {
            if subtype(st, &TypeTerm::Apply(st.type_family, Vec::new()), a) {
                b.clone()
            } else {
                TypeTerm::Bottom
            }
        }
        (TypeTerm::Int(x), TypeTerm::Int(y)) => {
            if x == y {
                a.clone()
            } else {
                TypeTerm::Bottom
            }
        }
        (TypeTerm::Apply(fa, pa), TypeTerm::Apply(fb, pb)) => {
            if fa == fb {
                nominal_meet_same(st, *fa, pa, pb, env, invariant)
            } else {
                nominal_meet_diff(st, a, b, env)
            }
        }
        _ => TypeTerm::Bottom,
    }
}

/// Same family: visit each parameter, collecting constraints for variables
/// and requiring the rest to be equal. Omitted trailing parameters of one
/// side are filled in from the other.
fn nominal_meet_same(
    st: &TypeStore,
    f: TypeNameId,
    pa: &[TypeTerm],
    pb: &[TypeTerm],
    env: &mut ConstraintEnv,
    _invariant: bool,
) -> TypeTerm {
    let common = pa.len().min(pb.len());
    let mut out = Vec::with_capacity(pa.len().max(pb.len()));
    for i in 0..common {
        let (x, y) = (&pa[i], &pb[i]);
        if x.has_vars() || y.has_vars() {
            match intersect_in(st, x, y, env, true) {
                TypeTerm::Bottom => return TypeTerm::Bottom,
                m => out.push(m),
            }
        } else if type_equal(st, x, y) {
            out.push(x.clone());
        } else {
            return TypeTerm::Bottom;
        }
    }
    let longer = if pa.len() >= pb.len() { pa } else { pb };
    out.extend(longer[common..].iter().cloned());
    TypeTerm::Apply(f, out)
}

/// Different families: recur through `super` on either side, then map the
/// intersected supertype back through the subtype family's declared
/// template. A failed mapping on one side falls through to the other.
fn nominal_meet_diff(
    st: &TypeStore,
    a: &TypeTerm,
    b: &TypeTerm,
    env: &mut ConstraintEnv,
) -> TypeTerm {
    for (hi, lo) in [(b, a), (a, b)] {
        let (lo_f, _lo_p) = match lo {
            TypeTerm::Apply(f, p) => (*f, p),
            _ => continue,
        };
        let lo_super = match lo {
            TypeTerm::Apply(f, p) => st.super_instance(*f, p),
            _ => continue,
        };
        let mark = env.len();
        let sup = intersect_in(st, &lo_super, hi, env, false);
        if sup == TypeTerm::Bottom {
            env.truncate(mark);
            continue;
        }
        // Freshen the template so formal variables never leak between
        // unrelated intersections.
        let tn = st.name(lo_f);
        let mut fresh_map = HashMap::new();
        let mut fresh_formals = Vec::new();
        for fv in &tn.formals {
            let nv = rename_var(fv);
            fresh_map.insert(fv.id, TypeTerm::Var(nv.clone()));
            fresh_formals.push(nv);
        }
        let template = tn.supertype.subst(&fresh_map);
        let e = match conform(st, &sup, &template) {
            Some(e) => e,
            None => {
                env.truncate(mark);
                continue;
            }
        };
        // Instantiate the subtype family with the conformed parameters.
        let mut assign: HashMap<u64, TypeTerm> = HashMap::new();
        let mut ok = true;
        for (v, _, t) in &e.entries {
            match assign.get(&v.id) {
                None => {
                    assign.insert(v.id, t.clone());
                }
                Some(prev) => {
                    if prev != t {
                        // Conflicting requirements for one formal; record both
                        // so the solver decides (it may still be satisfiable
                        // through variables).
                        env.push(v.clone(), Rel::Eq, prev.clone());
                        env.push(v.clone(), Rel::Eq, t.clone());
                        ok = ok && (prev.has_vars() || t.has_vars());
                    }
                }
            }
        }
        if !ok {
            env.truncate(mark);
            continue;
        }
        let params: Vec<TypeTerm> = fresh_formals
            .iter()
            .map(|fv| {
                assign
                    .get(&fv.id)
                    .cloned()
                    .unwrap_or_else(|| TypeTerm::Var(fv.clone()))
            })
            .collect();
        let target = TypeTerm::Apply(lo_f, params);
        let r = intersect_in(st, lo, &target, env, false);
        if r != TypeTerm::Bottom {
            return r;
        }
        env.truncate(mark);
    }
    TypeTerm::Bottom
}

fn tuple_meet(
    st: &TypeStore,
    xs: &[TypeTerm],
    ys: &[TypeTerm],
    env: &mut ConstraintEnv,
    invariant: bool,
) -> TypeTerm {
    let a_va = xs.last().map(|t| t.is_vararg()).unwrap_or(false);
    let b_va = ys.last().map(|t| t.is_vararg()).unwrap_or(false);
    let req_a = if a_va { xs.len() - 1 } else { xs.len() };
    let req_b = if b_va { ys.len() - 1 } else { ys.len() };
    if !a_va && !b_va && xs.len() != ys.len() {
        return TypeTerm::Bottom;
    }
    if !a_va && b_va && xs.len() < req_b {
        return TypeTerm::Bottom;
    }
    if a_va && !b_va && ys.len() < req_a {
        return TypeTerm::Bottom;
    }
    let fixed_len = if a_va && b_va {
        req_a.max(req_b)
    } else if a_va {
        ys.len()
    } else {
        xs.len()
    };
    let elem_at = |side: &[TypeTerm], req: usize, va: bool, i: usize| -> Option<TypeTerm> {
        if i < req {
            Some(side[i].clone())
        } else if va {
            Some(side[side.len() - 1].vararg_elem().clone())
        } else {
            None
        }
    };
    let mut out = Vec::with_capacity(fixed_len + 1);
    for i in 0..fixed_len {
        let ea = match elem_at(xs, req_a, a_va, i) {
            Some(e) => e,
            None => return TypeTerm::Bottom,
        };
        let eb = match elem_at(ys, req_b, b_va, i) {
            Some(e) => e,
            None => return TypeTerm::Bottom,
        };
        match intersect_in(st, &ea, &eb, env, invariant) {
            TypeTerm::Bottom => return TypeTerm::Bottom,
            m => out.push(m),
        }
    }
    if a_va && b_va {
        let ea = xs.last().unwrap().vararg_elem();
        let eb = ys.last().unwrap().vararg_elem();
        let mark = env.len();
        match intersect_in(st, ea, eb, env, invariant) {
            TypeTerm::Bottom => {
                // The repeated element is empty: only zero repetitions match.
                env.truncate(mark);
            }
            m => out.push(TypeTerm::vararg(m)),
        }
    }
    TypeTerm::Tuple(out)
}

// ---------------------------------------------------------------------------
// Specificity
// ---------------------------------------------------------------------------

/// The "not less specific" partial order used to sort method tables:
/// the disjunction of five rules. Signatures are compared extensionally;
/// diagonal constraints make a signature strictly more specific.
pub fn morespecific(st: &TypeStore, a: &TypeTerm, b: &TypeTerm) -> bool {
    let mut seen = HashSet::new();
    ms(st, a, b, &mut seen)
}

fn ms(
    st: &TypeStore,
    a: &TypeTerm,
    b: &TypeTerm,
    seen: &mut HashSet<(TypeTerm, TypeTerm)>,
) -> bool {
    let key = (a.clone(), b.clone());
    if seen.contains(&key) {
        // In-progress query: answer optimistically so the enclosing rule 3
        // stays conservative. Unresolved cycles thus never make a pair more
        // specific.
        return true;
    }
    seen.insert(key.clone());
    let r = ms_rules(st, a, b, seen);
    seen.remove(&key);
    r
}

fn ms_rules(
    st: &TypeStore,
    a: &TypeTerm,
    b: &TypeTerm,
    seen: &mut HashSet<(TypeTerm, TypeTerm)>,
) -> bool {
    // Rule 1: subtype.
    if subtype(st, a, b) {
        return true;
    }
    // Unions compare memberwise (the rule 3 intuition, made directional):
    // a union is more specific when one of its members is, unless it
    // strictly contains the other side.
    if let TypeTerm::Union(ms_a) = a.erased() {
        if subtype(st, b, a) {
            return false;
        }
        return ms_a.iter().any(|m| ms(st, m, b, seen));
    }
    if let TypeTerm::Union(ms_b) = b.erased() {
        return ms_b.iter().any(|m| ms(st, a, m, seen));
    }
    // Rule 2: a declared subtype family is more specific than its declared
    // supertypes regardless of type parameters. Within one family the
    // parameters decide instead.
    if let (TypeTerm::Apply(fa, _), TypeTerm::Apply(fb, _)) = (a.erased(), b.erased()) {
        if fa != fb && family_chain_contains(st, *fa, *fb) {
            return true;
        }
    }
    // Rule 3: the intersection is nonempty, more specific than b and not
    // equal to it, and b cannot claim the same over a — evaluated as
    // one-sided evidence so a symmetric pair (the ambiguous case) gets
    // `false` in both directions.
    let q = |st: &TypeStore, x: &TypeTerm, y: &TypeTerm, seen: &mut HashSet<_>| {
        let meet = intersect(st, x, y);
        meet != TypeTerm::Bottom
            && !type_equal(st, &meet, y)
            && ms(st, &meet, y, seen)
    };
    if q(st, a, b, seen) && !q(st, b, a, seen) {
        return true;
    }
    // Rule 4: argument types outrank argument count — expand a trailing
    // vararg to b's length and retry. An expansion merely equal to b does
    // not count: the fixed-arity signature stays the more specific one.
    if let (TypeTerm::Tuple(xs), TypeTerm::Tuple(ys)) = (a, b) {
        if xs.last().map(|t| t.is_vararg()).unwrap_or(false) {
            let req = xs.len() - 1;
            if ys.len() >= req {
                let elem = xs.last().unwrap().vararg_elem().clone();
                let mut expanded: Vec<TypeTerm> = xs[..req].to_vec();
                expanded.extend(std::iter::repeat(elem).take(ys.len() - req));
                let expanded = TypeTerm::Tuple(expanded);
                if !type_equal(st, &expanded, b) && ms(st, &expanded, b, seen) {
                    return true;
                }
            }
        }
    }
    // Rule 5: a consistent one-way assignment of b's parameters.
    if a.has_vars() && b.has_vars() {
        let mut binds = HashMap::new();
        let fwd = consistent_assignment(st, a, b, &mut binds);
        if fwd {
            let mut rev_binds = HashMap::new();
            if !consistent_assignment(st, b, a, &mut rev_binds) {
                return true;
            }
        }
    }
    false
}

fn family_chain_contains(st: &TypeStore, from: TypeNameId, target: TypeNameId) -> bool {
    let mut cur = from;
    loop {
        if cur == target {
            return true;
        }
        match &st.name(cur).supertype {
            TypeTerm::Apply(f, _) => cur = *f,
            _ => return false,
        }
    }
}

/// One-directional unification: can `pattern`'s variables be assigned
/// subterms of `subject` consistently? `subject`'s own variables are rigid.
fn consistent_assignment(
    st: &TypeStore,
    subject: &TypeTerm,
    pattern: &TypeTerm,
    binds: &mut HashMap<u64, TypeTerm>,
) -> bool {
    match (subject, pattern) {
        (s, TypeTerm::Var(v)) => match binds.get(&v.id) {
            Some(prev) => prev == s,
            None => {
                binds.insert(v.id, s.clone());
                true
            }
        },
        (TypeTerm::Var(_), _) => false,
        (TypeTerm::Apply(f, ps), TypeTerm::Apply(g, qs)) => {
            f == g
                && ps.len() == qs.len()
                && ps
                    .iter()
                    .zip(qs.iter())
                    .all(|(p, q)| consistent_assignment(st, p, q, binds))
        }
        (TypeTerm::Tuple(ps), TypeTerm::Tuple(qs)) => {
            ps.len() == qs.len()
                && ps.iter().zip(qs.iter()).all(|(p, q)| {
                    p.is_vararg() == q.is_vararg()
                        && consistent_assignment(st, p.vararg_elem(), q.vararg_elem(), binds)
                })
        }
        (TypeTerm::Kind(s), TypeTerm::Kind(t)) => consistent_assignment(st, s, t, binds),
        (TypeTerm::Union(ps), TypeTerm::Union(qs)) => {
            ps.len() == qs.len()
                && ps
                    .iter()
                    .zip(qs.iter())
                    .all(|(p, q)| consistent_assignment(st, p, q, binds))
        }
        (s, p) if !s.has_vars() && !p.has_vars() => type_equal(st, s, p),
        _ => false,
    }
}

/// Alpha-equivalence of parametric signatures: same structure with a
/// bijective variable correspondence and equal bounds. Used to detect
/// redefinition of an existing method.
pub fn signatures_equal(st: &TypeStore, a: &TypeTerm, b: &TypeTerm) -> bool {
    fn walk(
        st: &TypeStore,
        a: &TypeTerm,
        b: &TypeTerm,
        fwd: &mut HashMap<u64, u64>,
        rev: &mut HashMap<u64, u64>,
    ) -> bool {
        match (a, b) {
            (TypeTerm::Var(x), TypeTerm::Var(y)) => {
                let ok_fwd = *fwd.entry(x.id).or_insert(y.id) == y.id;
                let ok_rev = *rev.entry(y.id).or_insert(x.id) == x.id;
                ok_fwd && ok_rev && type_equal(st, &x.upper, &y.upper)
            }
            (TypeTerm::Var(_), _) | (_, TypeTerm::Var(_)) => false,
            (TypeTerm::Apply(f, ps), TypeTerm::Apply(g, qs)) => {
                f == g
                    && ps.len() == qs.len()
                    && ps
                        .iter()
                        .zip(qs.iter())
                        .all(|(p, q)| walk(st, p, q, fwd, rev))
            }
            (TypeTerm::Tuple(ps), TypeTerm::Tuple(qs))
            | (TypeTerm::Union(ps), TypeTerm::Union(qs)) => {
                ps.len() == qs.len()
                    && ps.iter().zip(qs.iter()).all(|(p, q)| {
                        p.is_vararg() == q.is_vararg()
                            && walk(st, p.vararg_elem(), q.vararg_elem(), fwd, rev)
                    })
            }
            (TypeTerm::Kind(s), TypeTerm::Kind(t)) => walk(st, s, t, fwd, rev),
            (x, y) if !x.has_vars() && !y.has_vars() => type_equal(st, x, y),
            _ => false,
        }
    }
    let mut fwd = HashMap::new();
    let mut rev = HashMap::new();
    walk(st, a, b, &mut fwd, &mut rev)
}

/// Rewrite a signature with fresh variables so constraints from different
/// methods never collide. Returns the rewritten term, the fresh variables
/// in the original order, and the id mapping.
pub fn freshen_signature(
    sig: &TypeTerm,
    vars: &[TypeVarRef],
) -> (TypeTerm, Vec<TypeVarRef>, HashMap<u64, TypeVarRef>) {
    let mut map = HashMap::new();
    let mut fresh = Vec::with_capacity(vars.len());
    let mut term_map = HashMap::new();
    for v in vars {
        let nv = rename_var(v);
        term_map.insert(v.id, TypeTerm::Var(nv.clone()));
        map.insert(v.id, nv.clone());
        fresh.push(nv);
    }
    // Bounds may mention earlier static parameters.
    let fresh: Vec<TypeVarRef> = fresh
        .into_iter()
        .map(|v| {
            let upper = v.upper.subst(&term_map);
            if upper == v.upper {
                v
            } else {
                let nv = fresh_var(&v.name, upper);
                nv
            }
        })
        .collect();
    for (old, new_ref) in vars.iter().zip(fresh.iter()) {
        term_map.insert(old.id, TypeTerm::Var(new_ref.clone()));
    }
    (sig.subst(&term_map), fresh, map)
}

// ---------------------------------------------------------------------------
// Widening
// ---------------------------------------------------------------------------

/// Replace a union that has grown past the cutoff with `Any`.
pub fn widen_union(_st: &TypeStore, t: &TypeTerm, cutoff: usize) -> TypeTerm {
    match t {
        TypeTerm::Union(ms) if ms.len() > cutoff => TypeTerm::Any,
        _ => t.clone(),
    }
}

/// Cap tuple nesting depth and length; the result is always a supertype.
/// Overlong tuples keep `max_len - 1` elements and join the tail into a
/// trailing vararg.
pub fn cap_tuple(st: &TypeStore, t: &TypeTerm, max_depth: usize, max_len: usize) -> TypeTerm {
    fn go(st: &TypeStore, t: &TypeTerm, depth_left: usize, max_len: usize) -> TypeTerm {
        match t {
            TypeTerm::Tuple(es) => {
                if depth_left == 0 {
                    return TypeTerm::Any;
                }
                let mut es2: Vec<TypeTerm> = es
                    .iter()
                    .map(|e| match e {
                        TypeTerm::Vararg(inner) => {
                            TypeTerm::vararg(go(st, inner, depth_left - 1, max_len))
                        }
                        other => go(st, other, depth_left - 1, max_len),
                    })
                    .collect();
                if es2.len() > max_len && max_len > 0 {
                    let tail: Vec<TypeTerm> = es2
                        .split_off(max_len - 1)
                        .into_iter()
                        .map(|e| e.vararg_elem().clone())
                        .collect();
                    let joined = union_all(st, tail);
                    es2.push(TypeTerm::vararg(joined));
                }
                TypeTerm::Tuple(es2)
            }
            TypeTerm::Union(ms) => {
                let ms2 = ms
                    .iter()
                    .map(|m| go(st, m, depth_left, max_len))
                    .collect();
                union_all(st, ms2)
            }
            _ => t.clone(),
        }
    }
    go(st, t, max_depth, max_len)
}
