//! Type terms, type families, and the hash-consing store.
//!
//! A `TypeTerm` is a symbolic description of a set of values. Nominal
//! families (abstract, composite, bits) are declared once and referenced by
//! `TypeNameId`; tuples and unions are structural. Concrete terms are
//! hash-consed into small integer `ConcreteTypeId`s so run-time dispatch can
//! compare them by identity.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

/// Identity of a declared type family. Stable for the life of the store.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct TypeNameId(pub u32);

/// Identity of a hash-consed concrete type.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub struct ConcreteTypeId(pub u32);

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum TypeKind {
    Abstract,
    Composite,
    Bits,
}

static NEXT_VAR_ID: AtomicU64 = AtomicU64::new(1);

/// A bounded type variable. Identity is the allocation-unique `id`; name is
/// only for display. Alpha-renaming allocates a fresh id.
#[derive(Debug)]
pub struct TypeVar {
    pub id: u64,
    pub name: String,
    pub upper: TypeTerm,
}

pub type TypeVarRef = Rc<TypeVar>;

pub fn fresh_var(name: &str, upper: TypeTerm) -> TypeVarRef {
    Rc::new(TypeVar {
        id: NEXT_VAR_ID.fetch_add(1, AtomicOrdering::Relaxed),
        name: name.to_string(),
        upper,
    })
}

/// Rename a variable, preserving name and bound but giving a new identity.
pub fn rename_var(v: &TypeVar) -> TypeVarRef {
    fresh_var(&v.name, v.upper.clone())
}

/// A symbolic type.
#[derive(Clone, Debug)]
pub enum TypeTerm {
    /// The universal type; the only true static type.
    Any,
    /// Signature-only despecialization hint. Behaves as `Any` in all lattice
    /// checks; the cache heuristics look for it explicitly.
    AnyHint,
    /// The empty type (`None`): identity of join, result of code that always
    /// throws.
    Bottom,
    /// An integer-valued type parameter, e.g. the rank in `Array{Float64,1}`.
    Int(i64),
    /// Application of a nominal family. Trailing parameters may be omitted;
    /// the result then covers every instantiation of the missing ones.
    Apply(TypeNameId, Vec<TypeTerm>),
    /// Covariant tuple. Only the final element may be `Vararg`.
    Tuple(Vec<TypeTerm>),
    /// Trailing `T...` element of a tuple.
    Vararg(Box<TypeTerm>),
    /// Set union. Canonicalized: flattened, pairwise non-subtype, sorted.
    Union(Vec<TypeTerm>),
    /// A bounded type variable (from a parametric signature).
    Var(TypeVarRef),
    /// The singleton kind `Type{T}`, containing the type `T` as its only
    /// value.
    Kind(Box<TypeTerm>),
}

impl PartialEq for TypeTerm {
    fn eq(&self, other: &Self) -> bool {
        use TypeTerm::*;
        match (self, other) {
            (Any, Any) | (AnyHint, AnyHint) | (Bottom, Bottom) => true,
            (Int(a), Int(b)) => a == b,
            (Apply(f, ps), Apply(g, qs)) => f == g && ps == qs,
            (Tuple(a), Tuple(b)) | (Union(a), Union(b)) => a == b,
            (Vararg(a), Vararg(b)) | (Kind(a), Kind(b)) => a == b,
            (Var(a), Var(b)) => a.id == b.id,
            _ => false,
        }
    }
}
impl Eq for TypeTerm {}

impl std::hash::Hash for TypeTerm {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        use TypeTerm::*;
        std::mem::discriminant(self).hash(state);
        match self {
            Any | AnyHint | Bottom => {}
            Int(n) => n.hash(state),
            Apply(f, ps) => {
                f.hash(state);
                ps.hash(state);
            }
            Tuple(es) | Union(es) => es.hash(state),
            Vararg(t) | Kind(t) => t.hash(state),
            Var(v) => v.id.hash(state),
        }
    }
}

impl TypeTerm {
    pub fn tuple(elems: Vec<TypeTerm>) -> TypeTerm {
        TypeTerm::Tuple(elems)
    }

    pub fn kind(inner: TypeTerm) -> TypeTerm {
        TypeTerm::Kind(Box::new(inner))
    }

    pub fn vararg(elem: TypeTerm) -> TypeTerm {
        TypeTerm::Vararg(Box::new(elem))
    }

    pub fn is_vararg(&self) -> bool {
        matches!(self, TypeTerm::Vararg(_))
    }

    /// Element type under a possible `Vararg` wrapper.
    pub fn vararg_elem(&self) -> &TypeTerm {
        match self {
            TypeTerm::Vararg(t) => t,
            t => t,
        }
    }

    pub fn is_tuple(&self) -> bool {
        matches!(self, TypeTerm::Tuple(_))
    }

    /// Erase signature-only markers: `ANY` behaves as `Any` everywhere in
    /// the lattice.
    pub fn erased(&self) -> &TypeTerm {
        match self {
            TypeTerm::AnyHint => &TypeTerm::Any,
            t => t,
        }
    }

    /// Collect the distinct variables occurring in the term, in first-visit
    /// order.
    pub fn free_vars(&self) -> Vec<TypeVarRef> {
        fn walk(t: &TypeTerm, out: &mut Vec<TypeVarRef>) {
            match t {
                TypeTerm::Var(v) => {
                    if !out.iter().any(|o| o.id == v.id) {
                        out.push(v.clone());
                    }
                }
                TypeTerm::Apply(_, ps) => ps.iter().for_each(|p| walk(p, out)),
                TypeTerm::Tuple(es) | TypeTerm::Union(es) => {
                    es.iter().for_each(|e| walk(e, out))
                }
                TypeTerm::Vararg(t) | TypeTerm::Kind(t) => walk(t, out),
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn has_vars(&self) -> bool {
        match self {
            TypeTerm::Var(_) => true,
            TypeTerm::Apply(_, ps) => ps.iter().any(|p| p.has_vars()),
            TypeTerm::Tuple(es) | TypeTerm::Union(es) => es.iter().any(|e| e.has_vars()),
            TypeTerm::Vararg(t) | TypeTerm::Kind(t) => t.has_vars(),
            _ => false,
        }
    }

    /// Substitute variables by id. Unmapped variables are left in place.
    pub fn subst(&self, map: &HashMap<u64, TypeTerm>) -> TypeTerm {
        match self {
            TypeTerm::Var(v) => map.get(&v.id).cloned().unwrap_or_else(|| self.clone()),
            TypeTerm::Apply(f, ps) => {
                TypeTerm::Apply(*f, ps.iter().map(|p| p.subst(map)).collect())
            }
            TypeTerm::Tuple(es) => TypeTerm::Tuple(es.iter().map(|e| e.subst(map)).collect()),
            TypeTerm::Union(es) => TypeTerm::Union(es.iter().map(|e| e.subst(map)).collect()),
            TypeTerm::Vararg(t) => TypeTerm::vararg(t.subst(map)),
            TypeTerm::Kind(t) => TypeTerm::kind(t.subst(map)),
            _ => self.clone(),
        }
    }

    /// Nesting depth of `Kind`: `Type{Int64}` is 1, `Type{Type{Int64}}` is 2.
    pub fn kind_depth(&self) -> u32 {
        match self {
            TypeTerm::Kind(t) => 1 + t.kind_depth(),
            _ => 0,
        }
    }
}

/// A declared type family.
#[derive(Debug)]
pub struct TypeName {
    pub id: TypeNameId,
    pub name: String,
    pub kind: TypeKind,
    pub formals: Vec<TypeVarRef>,
    /// Template for the declared supertype; may mention `formals`.
    pub supertype: TypeTerm,
    pub field_names: Vec<String>,
    /// Field type templates; may mention `formals`.
    pub field_types: Vec<TypeTerm>,
    pub nbits: u32,
    /// Generic function holding this composite's constructors, if any.
    pub ctor: Option<crate::dispatch::FuncId>,
    /// True once a user-written inner constructor replaced the default.
    pub has_user_ctor: bool,
}

#[derive(Debug)]
pub enum TypeError {
    DuplicateName(String),
    SupertypeNotAbstract(String),
    CyclicSupertype(String),
    TooManyParams { name: String, got: usize, max: usize },
    BoundViolation { name: String, param: String, bound: String },
    NotConcrete(String),
    UnknownType(String),
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeError::DuplicateName(n) => write!(f, "type {n} already declared"),
            TypeError::SupertypeNotAbstract(n) => {
                write!(f, "supertype of {n} must be an abstract type")
            }
            TypeError::CyclicSupertype(n) => write!(f, "cyclic supertype chain through {n}"),
            TypeError::TooManyParams { name, got, max } => {
                write!(f, "too many parameters for {name}: got {got}, at most {max}")
            }
            TypeError::BoundViolation { name, param, bound } => {
                write!(f, "type parameter {param} does not satisfy {param}<:{bound} in {name}")
            }
            TypeError::NotConcrete(t) => write!(f, "cannot intern non-concrete type {t}"),
            TypeError::UnknownType(n) => write!(f, "unknown type {n}"),
        }
    }
}

/// Registry of declared families plus the hash-consing table.
///
/// Built single-threaded during boot; afterwards only `intern` mutates it
/// (new concrete argument tuples showing up at run time).
pub struct TypeStore {
    names: Vec<TypeName>,
    by_name: HashMap<String, TypeNameId>,
    interned: HashMap<TypeTerm, ConcreteTypeId>,
    interned_rev: Vec<TypeTerm>,
    /// The `Type` family; `Apply(type_family, [])` is the unspecialized
    /// supertype of every singleton kind.
    pub type_family: TypeNameId,
    pub function_family: TypeNameId,
    pub string_family: TypeNameId,
    pub code_family: TypeNameId,
}

impl TypeStore {
    pub fn new() -> TypeStore {
        let mut st = TypeStore {
            names: Vec::new(),
            by_name: HashMap::new(),
            interned: HashMap::new(),
            interned_rev: Vec::new(),
            type_family: TypeNameId(0),
            function_family: TypeNameId(0),
            string_family: TypeNameId(0),
            code_family: TypeNameId(0),
        };
        // Internal families that exist before any source is loaded. `Type`
        // backs singleton kinds; the rest tag values the interpreter itself
        // creates.
        let t = fresh_var("T", TypeTerm::Any);
        st.type_family = st
            .declare(
                "Type",
                vec![t],
                TypeKind::Abstract,
                TypeTerm::Any,
                Vec::new(),
                Vec::new(),
                0,
            )
            .unwrap();
        st.function_family = st
            .declare(
                "Function",
                Vec::new(),
                TypeKind::Composite,
                TypeTerm::Any,
                Vec::new(),
                Vec::new(),
                0,
            )
            .unwrap();
        st.string_family = st
            .declare(
                "String",
                Vec::new(),
                TypeKind::Composite,
                TypeTerm::Any,
                Vec::new(),
                Vec::new(),
                0,
            )
            .unwrap();
        st.code_family = st
            .declare(
                "QuotedCode",
                Vec::new(),
                TypeKind::Composite,
                TypeTerm::Any,
                Vec::new(),
                Vec::new(),
                0,
            )
            .unwrap();
        st
    }

    pub fn name(&self, id: TypeNameId) -> &TypeName {
        &self.names[id.0 as usize]
    }

    pub fn name_mut(&mut self, id: TypeNameId) -> &mut TypeName {
        &mut self.names[id.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<TypeNameId> {
        self.by_name.get(name).copied()
    }

    pub fn families(&self) -> impl Iterator<Item = &TypeName> {
        self.names.iter()
    }

    /// Declare a new family. Composite fields are `(names, types)`; bits
    /// types pass `nbits`.
    pub fn declare(
        &mut self,
        name: &str,
        formals: Vec<TypeVarRef>,
        kind: TypeKind,
        supertype: TypeTerm,
        field_names: Vec<String>,
        field_types: Vec<TypeTerm>,
        nbits: u32,
    ) -> Result<TypeNameId, TypeError> {
        if self.by_name.contains_key(name) {
            return Err(TypeError::DuplicateName(name.to_string()));
        }
        debug_assert_eq!(field_names.len(), field_types.len());
        // Declared supertypes must be abstract families (or Any).
        match &supertype {
            TypeTerm::Any => {}
            TypeTerm::Apply(sid, _) => {
                if self.name(*sid).kind != TypeKind::Abstract {
                    return Err(TypeError::SupertypeNotAbstract(name.to_string()));
                }
            }
            _ => return Err(TypeError::SupertypeNotAbstract(name.to_string())),
        }
        // Walk the declared chain to reject cycles (possible only through
        // forward references, but cheap to check).
        let mut seen = vec![name.to_string()];
        let mut cur = supertype.clone();
        while let TypeTerm::Apply(sid, _) = cur {
            let sname = &self.name(sid).name;
            if seen.iter().any(|s| s == sname) {
                return Err(TypeError::CyclicSupertype(name.to_string()));
            }
            seen.push(sname.clone());
            cur = self.name(sid).supertype.clone();
        }
        let id = TypeNameId(self.names.len() as u32);
        self.names.push(TypeName {
            id,
            name: name.to_string(),
            kind,
            formals,
            supertype,
            field_names,
            field_types,
            nbits,
            ctor: None,
            has_user_ctor: false,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Instantiate a family's declared supertype with the given parameters.
    /// Omitted trailing parameters leave the corresponding formals in place.
    pub fn super_instance(&self, id: TypeNameId, params: &[TypeTerm]) -> TypeTerm {
        let tn = self.name(id);
        let mut map = HashMap::new();
        for (formal, actual) in tn.formals.iter().zip(params.iter()) {
            map.insert(formal.id, actual.clone());
        }
        tn.supertype.subst(&map)
    }

    /// Field types of a composite instantiated at the given parameters.
    pub fn field_instance(&self, id: TypeNameId, params: &[TypeTerm]) -> Vec<TypeTerm> {
        let tn = self.name(id);
        let mut map = HashMap::new();
        for (formal, actual) in tn.formals.iter().zip(params.iter()) {
            map.insert(formal.id, actual.clone());
        }
        tn.field_types.iter().map(|t| t.subst(&map)).collect()
    }

    /// A type constructor application, checked against the formals' bounds.
    /// `Apply(Type, [t])` normalizes to the singleton kind `Type{t}`.
    pub fn apply_type(
        &mut self,
        id: TypeNameId,
        params: Vec<TypeTerm>,
    ) -> Result<TypeTerm, TypeError> {
        let (nformals, name) = {
            let tn = self.name(id);
            (tn.formals.len(), tn.name.clone())
        };
        if params.len() > nformals {
            return Err(TypeError::TooManyParams {
                name,
                got: params.len(),
                max: nformals,
            });
        }
        if id == self.type_family {
            return Ok(match params.into_iter().next() {
                Some(p) => TypeTerm::kind(p),
                None => TypeTerm::Apply(id, Vec::new()),
            });
        }
        for (i, p) in params.iter().enumerate() {
            // Bound checks apply when the parameter is not itself a variable;
            // variables are checked when they get solved.
            if matches!(p, TypeTerm::Var(_)) {
                continue;
            }
            let bound = self.name(id).formals[i].upper.clone();
            if !crate::lattice::subtype(self, p, &bound) {
                return Err(TypeError::BoundViolation {
                    name,
                    param: crate::display::type_to_string(self, p),
                    bound: crate::display::type_to_string(self, &bound),
                });
            }
        }
        let term = TypeTerm::Apply(id, params);
        if self.is_concrete(&term) {
            self.intern(&term).ok();
        }
        Ok(term)
    }

    /// Whether a term denotes a single run-time implementation type.
    pub fn is_concrete(&self, t: &TypeTerm) -> bool {
        match t {
            TypeTerm::Apply(id, params) => {
                let tn = self.name(*id);
                tn.kind != TypeKind::Abstract
                    && params.len() == tn.formals.len()
                    && params.iter().all(|p| self.param_concrete(p))
            }
            TypeTerm::Tuple(es) => es
                .iter()
                .all(|e| !e.is_vararg() && self.is_concrete(e)),
            // A kind `Type{t}` has exactly one value once `t` is a definite
            // type object, i.e. mentions no variables.
            TypeTerm::Kind(inner) => !inner.has_vars(),
            _ => false,
        }
    }

    fn param_concrete(&self, p: &TypeTerm) -> bool {
        matches!(p, TypeTerm::Int(_)) || self.is_concrete(p)
    }

    /// Hash-cons a concrete term. Idempotent: structurally equal terms get
    /// equal ids.
    pub fn intern(&mut self, t: &TypeTerm) -> Result<ConcreteTypeId, TypeError> {
        if !self.is_concrete(t) {
            return Err(TypeError::NotConcrete(crate::display::type_to_string(self, t)));
        }
        if let Some(id) = self.interned.get(t) {
            return Ok(*id);
        }
        let id = ConcreteTypeId(self.interned_rev.len() as u32);
        self.interned.insert(t.clone(), id);
        self.interned_rev.push(t.clone());
        Ok(id)
    }

    pub fn interned_term(&self, id: ConcreteTypeId) -> &TypeTerm {
        &self.interned_rev[id.0 as usize]
    }

    pub fn interned_count(&self) -> usize {
        self.interned_rev.len()
    }

    /// Deterministic total order used to canonicalize union members:
    /// family id first, then structure.
    pub fn term_cmp(&self, a: &TypeTerm, b: &TypeTerm) -> Ordering {
        fn rank(t: &TypeTerm) -> u8 {
            match t {
                TypeTerm::Bottom => 0,
                TypeTerm::Int(_) => 1,
                TypeTerm::Apply(..) => 2,
                TypeTerm::Kind(_) => 3,
                TypeTerm::Tuple(_) => 4,
                TypeTerm::Vararg(_) => 5,
                TypeTerm::Union(_) => 6,
                TypeTerm::Var(_) => 7,
                TypeTerm::AnyHint => 8,
                TypeTerm::Any => 9,
            }
        }
        use TypeTerm::*;
        match (a, b) {
            (Apply(f, ps), Apply(g, qs)) => f
                .cmp(g)
                .then_with(|| self.seq_cmp(ps, qs)),
            (Tuple(xs), Tuple(ys)) | (Union(xs), Union(ys)) => self.seq_cmp(xs, ys),
            (Vararg(x), Vararg(y)) | (Kind(x), Kind(y)) => self.term_cmp(x, y),
            (Int(x), Int(y)) => x.cmp(y),
            (Var(x), Var(y)) => x.name.cmp(&y.name).then(x.id.cmp(&y.id)),
            _ => rank(a).cmp(&rank(b)),
        }
    }

    fn seq_cmp(&self, xs: &[TypeTerm], ys: &[TypeTerm]) -> Ordering {
        for (x, y) in xs.iter().zip(ys.iter()) {
            match self.term_cmp(x, y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        xs.len().cmp(&ys.len())
    }
}

impl Default for TypeStore {
    fn default() -> Self {
        TypeStore::new()
    }
}
