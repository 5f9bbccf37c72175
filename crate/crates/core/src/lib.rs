//! A small dynamic language built around symmetric multiple dispatch: a
//! parametric type lattice with subtyping, union, and constraint-solving
//! intersection; generic functions with a hash-consed specialization cache;
//! forward dataflow type inference with interprocedural recursion handling
//! and widening; IR-level optimization (devirtualization, inlining, tuple
//! elision); and a boot library written in the language itself, including
//! the numeric promotion system and staged methods.

pub mod boot;
pub mod ctx;
pub mod dispatch;
pub mod display;
pub mod infer;
pub mod interp;
pub mod ir;
pub mod lattice;
pub mod lexer;
pub mod lower;
pub mod optimize;
pub mod parser;
pub mod types;
pub mod value;

pub use ctx::{Config, Ctx};
pub use types::{TypeStore, TypeTerm};
pub use value::Value;
