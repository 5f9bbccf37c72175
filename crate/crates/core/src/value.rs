//! Run-time values. Every value carries a unique, immutable implementation
//! type; `typeof_value` reads it back as a `TypeTerm`.

use crate::dispatch::FuncId;
use crate::ir::IRFunction;
use crate::types::{TypeNameId, TypeStore, TypeTerm};
use std::rc::Rc;

#[derive(Clone, Debug)]
pub enum Value {
    /// A value of an integer bits family (Int64, Int32, ...), stored
    /// sign-extended; the family fixes the width.
    Int { ty: TypeNameId, value: i64 },
    /// A Float64 value.
    Float(f64),
    Bool(bool),
    Str(Rc<str>),
    Tuple(Rc<[Value]>),
    Composite(Rc<CompositeVal>),
    /// A first-class type object.
    Type(TypeTerm),
    /// A named generic function.
    Func(FuncId),
    /// An anonymous function closed over its defining environment.
    Closure(Rc<ClosureVal>),
    /// Code returned by a staged method body.
    Code(Rc<IRFunction>),
}

#[derive(Debug)]
pub struct CompositeVal {
    pub ty: TypeNameId,
    pub params: Vec<TypeTerm>,
    pub fields: Vec<Value>,
}

impl CompositeVal {
    pub fn tag(&self) -> TypeTerm {
        TypeTerm::Apply(self.ty, self.params.clone())
    }
}

#[derive(Debug)]
pub struct ClosureVal {
    pub func: Rc<IRFunction>,
    pub captured: Vec<(String, Value)>,
}

/// The concrete run-time type tag of a value. For a type-valued `v` this is
/// the singleton kind `Type{v}`.
pub fn typeof_value(st: &TypeStore, v: &Value) -> TypeTerm {
    match v {
        Value::Int { ty, .. } => TypeTerm::Apply(*ty, Vec::new()),
        Value::Float(_) => match st.lookup("Float64") {
            Some(id) => TypeTerm::Apply(id, Vec::new()),
            None => TypeTerm::Any,
        },
        Value::Bool(_) => match st.lookup("Bool") {
            Some(id) => TypeTerm::Apply(id, Vec::new()),
            None => TypeTerm::Any,
        },
        Value::Str(_) => TypeTerm::Apply(st.string_family, Vec::new()),
        Value::Tuple(elems) => {
            TypeTerm::Tuple(elems.iter().map(|e| typeof_value(st, e)).collect())
        }
        Value::Composite(c) => c.tag(),
        Value::Type(t) => TypeTerm::kind(t.clone()),
        Value::Func(_) | Value::Closure(_) => {
            TypeTerm::Apply(st.function_family, Vec::new())
        }
        Value::Code(_) => TypeTerm::Apply(st.code_family, Vec::new()),
    }
}

/// Object identity (`is`). All our values are immutable, so identity on
/// bits, tuples and composites is structural; functions compare by identity.
pub fn egal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int { ty: ta, value: va }, Value::Int { ty: tb, value: vb }) => {
            ta == tb && va == vb
        }
        (Value::Float(x), Value::Float(y)) => x.to_bits() == y.to_bits(),
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Tuple(xs), Value::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| egal(x, y))
        }
        (Value::Composite(x), Value::Composite(y)) => {
            x.ty == y.ty
                && x.params == y.params
                && x.fields.len() == y.fields.len()
                && x.fields.iter().zip(y.fields.iter()).all(|(a, b)| egal(a, b))
        }
        (Value::Type(x), Value::Type(y)) => x == y,
        (Value::Func(x), Value::Func(y)) => x == y,
        (Value::Closure(x), Value::Closure(y)) => Rc::ptr_eq(x, y),
        (Value::Code(x), Value::Code(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

/// Convert a type term to the value a staged method body sees: tuple types
/// become tuples of type objects so `length` and indexing work on them.
pub fn type_as_staged_value(t: &TypeTerm) -> Value {
    match t {
        TypeTerm::Tuple(elems) => Value::Tuple(
            elems
                .iter()
                .map(type_as_staged_value)
                .collect::<Vec<_>>()
                .into(),
        ),
        other => Value::Type(other.clone()),
    }
}

/// Inverse of the identification of tuples of types with tuple types; used
/// by the type-expression evaluator.
pub fn value_as_type(st: &TypeStore, v: &Value) -> Option<TypeTerm> {
    match v {
        Value::Type(t) => Some(t.clone()),
        Value::Tuple(elems) => {
            let mut out = Vec::with_capacity(elems.len());
            for (i, e) in elems.iter().enumerate() {
                let t = value_as_type(st, e)?;
                if t.is_vararg() && i + 1 != elems.len() {
                    return None;
                }
                out.push(t);
            }
            Some(TypeTerm::Tuple(out))
        }
        Value::Int { value, .. } => Some(TypeTerm::Int(*value)),
        _ => None,
    }
}
