//! The evaluation context: type store, generic-function arena, globals,
//! configuration, counters, and the inference memo. One context per process;
//! everything is single-threaded by construction.

use crate::dispatch::{FuncId, GenericFunction, MethodDef};
use crate::types::{TypeStore, TypeTerm};
use crate::value::Value;
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Clone, Debug)]
pub struct Config {
    /// Union widening cutoff: unions larger than this become `Any`.
    pub union_cutoff: usize,
    /// Maximum tuple nesting depth constructed by inference.
    pub tuple_depth: usize,
    /// Maximum tuple length constructed by inference.
    pub tuple_len: usize,
    /// Maximum `Type{...}` nesting tracked by inference and the cache.
    pub kind_depth: u32,
    /// Inlining budget in statements.
    pub inline_budget: usize,
    /// Method-cache specialization heuristics on/off.
    pub heuristics: bool,
    /// Early stop of the method-match scan once signatures cover the
    /// argument type.
    pub early_stop: bool,
    /// Run the optimizer passes on specializations.
    pub optimize: bool,
    /// Check every evaluated expression's tag against its annotation.
    pub check_annotations: bool,
    /// Record every dispatch decision (for the equivalence tests).
    pub record_dispatch: bool,
    /// Mirror program output to stdout as it is produced.
    pub stream_output: bool,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            union_cutoff: 4,
            tuple_depth: 3,
            tuple_len: 8,
            kind_depth: 2,
            inline_budget: 20,
            heuristics: true,
            early_stop: true,
            optimize: true,
            check_annotations: false,
            record_dispatch: false,
            stream_output: false,
        }
    }
}

#[derive(Default, Clone, Debug)]
pub struct Stats {
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub dummy_hits: u64,
    pub specializations: u64,
    pub staged_expansions: u64,
    pub dynamic_dispatches: u64,
    pub direct_calls: u64,
    pub elided_dispatches: u64,
    pub elided_tuples: u64,
    pub tuple_allocs: u64,
    pub inference_runs: u64,
    pub body_passes: u64,
    pub expressions_compiled: u64,
    pub exprs_nontrivial: u64,
    pub exprs_concrete: u64,
}

impl Stats {
    pub fn dump(&self) -> String {
        let pct = |n: u64, d: u64| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
        let mut s = String::new();
        s.push_str(&format!("cache_hits={}\n", self.cache_hits));
        s.push_str(&format!("cache_misses={}\n", self.cache_misses));
        s.push_str(&format!("dummy_hits={}\n", self.dummy_hits));
        s.push_str(&format!("specializations={}\n", self.specializations));
        s.push_str(&format!("staged_expansions={}\n", self.staged_expansions));
        s.push_str(&format!("dynamic_dispatches={}\n", self.dynamic_dispatches));
        s.push_str(&format!("direct_calls={}\n", self.direct_calls));
        s.push_str(&format!("elided_dispatches={}\n", self.elided_dispatches));
        s.push_str(&format!("elided_tuples={}\n", self.elided_tuples));
        s.push_str(&format!("tuple_allocs={}\n", self.tuple_allocs));
        s.push_str(&format!("inference_runs={}\n", self.inference_runs));
        s.push_str(&format!("expressions_compiled={}\n", self.expressions_compiled));
        s.push_str(&format!(
            "exprs_typed_more_specific_than_any={} ({:.0}%)\n",
            self.exprs_nontrivial,
            pct(self.exprs_nontrivial, self.expressions_compiled)
        ));
        s.push_str(&format!(
            "exprs_typed_concrete={} ({:.0}%)\n",
            self.exprs_concrete,
            pct(self.exprs_concrete, self.exprs_nontrivial)
        ));
        s
    }
}

/// A recorded dispatch decision, kept when `record_dispatch` is set.
#[derive(Clone, Debug)]
pub struct DispatchRecord {
    pub func: FuncId,
    pub arg_types: Vec<TypeTerm>,
    pub method: u32,
}

#[derive(Clone, Debug)]
pub struct MemoEntry {
    pub result: TypeTerm,
    pub incomplete: bool,
}

pub struct Ctx {
    pub types: TypeStore,
    pub funcs: Vec<GenericFunction>,
    pub fn_by_name: HashMap<String, FuncId>,
    pub globals: HashMap<String, Value>,
    pub config: Config,
    pub stats: Stats,
    /// Warnings and other diagnostics, in emission order.
    pub diags: Vec<String>,
    /// Program output buffer (also streamed when configured).
    pub output: String,
    /// Interprocedural inference memo: `recall` plus the `incomplete` flag.
    pub memo: HashMap<(u32, TypeTerm), MemoEntry>,
    /// Cached staged-method expansions, one per argument type combination.
    pub staged_cache: HashMap<(u32, TypeTerm), Rc<MethodDef>>,
    pub dispatch_log: Vec<DispatchRecord>,
    /// Specializations currently being compiled, to break inline cycles
    /// through mutual recursion.
    pub compiling: std::collections::HashSet<(u32, TypeTerm)>,
    /// Variables reported as possibly undefined, as `(function, variable)`.
    pub undef_notes: Vec<(String, String)>,
    pub next_method_id: u32,
}

impl Ctx {
    pub fn new(config: Config) -> Ctx {
        let mut ctx = Ctx {
            types: TypeStore::new(),
            funcs: Vec::new(),
            fn_by_name: HashMap::new(),
            globals: HashMap::new(),
            config,
            stats: Stats::default(),
            diags: Vec::new(),
            output: String::new(),
            memo: HashMap::new(),
            staged_cache: HashMap::new(),
            dispatch_log: Vec::new(),
            compiling: std::collections::HashSet::new(),
            undef_notes: Vec::new(),
            next_method_id: 0,
        };
        crate::interp::register_builtins(&mut ctx);
        ctx
    }

    pub fn gf(&self, id: FuncId) -> &GenericFunction {
        &self.funcs[id.0 as usize]
    }

    pub fn gf_mut(&mut self, id: FuncId) -> &mut GenericFunction {
        &mut self.funcs[id.0 as usize]
    }

    /// Look up a generic function by name, creating an empty one on demand
    /// (method definition works on not-yet-existing names).
    pub fn ensure_function(&mut self, name: &str) -> FuncId {
        if let Some(id) = self.fn_by_name.get(name) {
            return *id;
        }
        let id = FuncId(self.funcs.len() as u32);
        self.funcs.push(GenericFunction::new(name));
        self.fn_by_name.insert(name.to_string(), id);
        self.globals
            .insert(name.to_string(), Value::Func(id));
        id
    }

    pub fn fresh_method_id(&mut self) -> u32 {
        let id = self.next_method_id;
        self.next_method_id += 1;
        id
    }

    pub fn warn(&mut self, msg: String) {
        if self.config.stream_output {
            eprintln!("{msg}");
        }
        self.diags.push(msg);
    }

    pub fn emit(&mut self, text: &str) {
        if self.config.stream_output {
            use std::io::Write;
            let mut out = std::io::stdout();
            let _ = out.write_all(text.as_bytes());
            let _ = out.flush();
        }
        self.output.push_str(text);
    }

    pub fn take_diags(&mut self) -> Vec<String> {
        std::mem::take(&mut self.diags)
    }
}
