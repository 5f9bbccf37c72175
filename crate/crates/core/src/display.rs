//! Printing of types and values in the surface notation:
//! `Array{Float64,1}`, `(String, Int64...)`, `Union(Int64,String)`,
//! `Type{T<:Number}`.

use crate::types::{TypeStore, TypeTerm};
use crate::value::Value;
use std::fmt::Write;

pub fn type_to_string(st: &TypeStore, t: &TypeTerm) -> String {
    let mut s = String::new();
    write_type(st, t, &mut s);
    s
}

fn write_type(st: &TypeStore, t: &TypeTerm, out: &mut String) {
    match t {
        TypeTerm::Any => out.push_str("Any"),
        TypeTerm::AnyHint => out.push_str("ANY"),
        TypeTerm::Bottom => out.push_str("None"),
        TypeTerm::Int(n) => {
            write!(out, "{n}").unwrap();
        }
        TypeTerm::Apply(id, params) => {
            out.push_str(&st.name(*id).name);
            if !params.is_empty() {
                out.push('{');
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_type(st, p, out);
                }
                out.push('}');
            }
        }
        TypeTerm::Tuple(elems) => {
            out.push('(');
            for (i, e) in elems.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_type(st, e, out);
            }
            if elems.len() == 1 && !elems[0].is_vararg() {
                out.push(',');
            }
            out.push(')');
        }
        TypeTerm::Vararg(e) => {
            write_type(st, e, out);
            out.push_str("...");
        }
        TypeTerm::Union(members) => {
            out.push_str("Union(");
            for (i, m) in members.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_type(st, m, out);
            }
            out.push(')');
        }
        TypeTerm::Var(v) => {
            out.push_str(&v.name);
            if v.upper != TypeTerm::Any {
                out.push_str("<:");
                write_type(st, &v.upper, out);
            }
        }
        TypeTerm::Kind(inner) => {
            out.push_str("Type{");
            write_type(st, inner, out);
            out.push('}');
        }
    }
}

/// A float formatted so the type stays visible: `1.0`, not `1`.
pub fn float_to_string(x: f64) -> String {
    if x.is_finite() && x == x.trunc() && x.abs() < 1e16 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

pub fn value_to_string(st: &TypeStore, v: &Value) -> String {
    let mut s = String::new();
    write_value(st, v, &mut s, true);
    s
}

/// Like `value_to_string` but strings are printed raw (for `print`).
pub fn value_to_display(st: &TypeStore, v: &Value) -> String {
    let mut s = String::new();
    write_value(st, v, &mut s, false);
    s
}

fn write_value(st: &TypeStore, v: &Value, out: &mut String, quote_strings: bool) {
    match v {
        Value::Int { value, .. } => {
            write!(out, "{value}").unwrap();
        }
        Value::Float(x) => out.push_str(&float_to_string(*x)),
        Value::Bool(b) => {
            write!(out, "{b}").unwrap();
        }
        Value::Str(s) => {
            if quote_strings {
                write!(out, "{s:?}").unwrap();
            } else {
                out.push_str(s);
            }
        }
        Value::Tuple(elems) => {
            out.push('(');
            for (i, e) in elems.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(st, e, out, true);
            }
            if elems.len() == 1 {
                out.push(',');
            }
            out.push(')');
        }
        Value::Composite(c) => {
            write_type(st, &c.tag(), out);
            out.push('(');
            for (i, f) in c.fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(st, f, out, true);
            }
            out.push(')');
        }
        Value::Type(t) => write_type(st, t, out),
        Value::Func(id) => {
            write!(out, "#<function:{}>", id.0).unwrap();
        }
        Value::Closure(_) => out.push_str("#<function>"),
        Value::Code(_) => out.push_str("#<quoted code>"),
    }
}
