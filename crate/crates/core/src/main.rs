//! Command-line driver: `run`, `repl`, `infer`, `lattice check`, and
//! `check-ambiguities`, with the widening cutoffs and heuristics surfaced
//! as flags. Program output goes to stdout, diagnostics to stderr.
//! Exit codes: 0 success, 1 uncaught run-time error, 2 parse error.

use clap::{Parser, Subcommand};
use mini::ctx::{Config, Ctx};
use mini::lower::{self, LoadError};
use mini::parser::Item;
use mini::types::TypeTerm;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mini", about = "A small dynamic language with multiple dispatch")]
struct Cli {
    /// Disable the method-cache specialization heuristics.
    #[arg(long, global = true)]
    no_heuristics: bool,
    /// Start with a bare environment (no boot library).
    #[arg(long, global = true)]
    no_boot: bool,
    /// Disable the optimizer passes.
    #[arg(long, global = true)]
    no_opt: bool,
    /// Print instrumentation counters when done.
    #[arg(long, global = true)]
    stats: bool,
    /// Union widening cutoff.
    #[arg(long, global = true)]
    union_cutoff: Option<usize>,
    /// Tuple nesting depth cap.
    #[arg(long, global = true)]
    tuple_depth: Option<usize>,
    /// Tuple length cap.
    #[arg(long, global = true)]
    tuple_len: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load the boot library, then run a program file.
    Run {
        file: PathBuf,
        /// Dump the lowered IR of the file's methods instead of only
        /// running.
        #[arg(long)]
        dump_ir: bool,
        /// With --dump-ir: dump specialization IR after this pass stage
        /// ("annotate" or "all").
        #[arg(long)]
        after: Option<String>,
    },
    /// Interactive evaluation; prints each value and its inferred type.
    Repl,
    /// Infer method return types for every method defined in a file.
    Infer {
        file: PathBuf,
        /// Also print each statement annotated with inferred types.
        #[arg(long)]
        dump: bool,
    },
    /// Lattice queries over two type expressions.
    Lattice {
        #[command(subcommand)]
        sub: LatticeCmd,
    },
    /// Load a program and report every ambiguity warning.
    CheckAmbiguities { file: PathBuf },
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Print subtype, intersection, union, and specificity for A and B.
    Check { a: String, b: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = Config::default();
    config.heuristics = !cli.no_heuristics;
    config.optimize = !cli.no_opt;
    config.stream_output = true;
    if let Some(n) = cli.union_cutoff {
        config.union_cutoff = n;
    }
    if let Some(n) = cli.tuple_depth {
        config.tuple_depth = n;
    }
    if let Some(n) = cli.tuple_len {
        config.tuple_len = n;
    }

    let mut ctx = Ctx::new(config);
    if !cli.no_boot {
        if let Err(e) = mini::boot::load_boot(&mut ctx) {
            eprintln!("boot failed: {e}");
            return ExitCode::from(1);
        }
    }

    let code = match cli.cmd {
        Cmd::Run { file, dump_ir, after } => cmd_run(&mut ctx, &file, dump_ir, after),
        Cmd::Repl => cmd_repl(&mut ctx),
        Cmd::Infer { file, dump } => cmd_infer(&mut ctx, &file, dump),
        Cmd::Lattice { sub: LatticeCmd::Check { a, b } } => cmd_lattice_check(&mut ctx, &a, &b),
        Cmd::CheckAmbiguities { file } => cmd_check_ambiguities(&mut ctx, &file),
    };
    if cli.stats {
        print!("{}", ctx.stats.dump());
    }
    code
}

fn load_error_code(e: &LoadError) -> ExitCode {
    match e {
        LoadError::Parse(_) | LoadError::Lower { .. } => ExitCode::from(2),
        LoadError::Runtime(_) => ExitCode::from(1),
    }
}

fn read_file(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        ExitCode::from(1)
    })
}

fn cmd_run(ctx: &mut Ctx, file: &PathBuf, dump_ir: bool, after: Option<String>) -> ExitCode {
    let src = match read_file(file) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let fname = file.display().to_string();
    if let Err(e) = lower::load_source(ctx, &src, &fname) {
        eprintln!("{e}");
        return load_error_code(&e);
    }
    if dump_ir {
        dump_file_methods(ctx, &fname, after.as_deref());
    }
    ExitCode::SUCCESS
}

/// Dump the IR of every method the file defined, either as lowered or
/// after the optimizer.
fn dump_file_methods(ctx: &mut Ctx, fname: &str, after: Option<&str>) {
    let fids: Vec<mini::dispatch::FuncId> = (0..ctx.funcs.len() as u32)
        .map(mini::dispatch::FuncId)
        .collect();
    for fid in fids {
        let methods = ctx.gf(fid).methods.clone();
        let gf_name = ctx.gf(fid).name.clone();
        for m in methods {
            if !m.declared_in.starts_with(fname) {
                continue;
            }
            match after {
                None => {
                    println!("function {} {}", gf_name, sig_str(ctx, &m.signature));
                    print!("{}", mini::ir::dump_function(&m.body));
                    println!();
                }
                Some(stage) => {
                    let a = entry_from_signature(&m.signature, &m.static_params);
                    let text = mini::optimize::dump_after(ctx, &m, &a, &[], stage);
                    println!(
                        "function {} {} after {}",
                        gf_name,
                        sig_str(ctx, &m.signature),
                        stage
                    );
                    print!("{text}");
                    println!();
                }
            }
        }
    }
}

fn sig_str(ctx: &Ctx, sig: &TypeTerm) -> String {
    mini::display::type_to_string(&ctx.types, sig)
}

/// The argument tuple used to analyze a method at its own declaration:
/// static parameters widen to their bounds.
fn entry_from_signature(
    sig: &TypeTerm,
    statics: &[mini::types::TypeVarRef],
) -> TypeTerm {
    let mut map = std::collections::HashMap::new();
    for v in statics {
        map.insert(v.id, v.upper.clone());
    }
    sig.subst(&map)
}

fn cmd_repl(ctx: &mut Ctx) -> ExitCode {
    let stdin = std::io::stdin();
    let mut line_no = 0u32;
    print!("mini> ");
    std::io::stdout().flush().ok();
    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            print!("mini> ");
            std::io::stdout().flush().ok();
            continue;
        }
        if trimmed == "exit" || trimmed == "quit" {
            break;
        }
        match eval_line(ctx, &line, line_no) {
            Ok(Some((v, t))) => {
                println!(
                    "{} :: {}",
                    mini::display::value_to_string(&ctx.types, &v),
                    mini::display::type_to_string(&ctx.types, &t)
                );
            }
            Ok(None) => {}
            Err(e) => eprintln!("{e}"),
        }
        print!("mini> ");
        std::io::stdout().flush().ok();
    }
    ExitCode::SUCCESS
}

fn eval_line(
    ctx: &mut Ctx,
    line: &str,
    line_no: u32,
) -> Result<Option<(mini::Value, TypeTerm)>, LoadError> {
    let items = mini::parser::parse_program(line)?;
    let mut last = None;
    for item in items {
        last = lower::process_item(ctx, item, &format!("repl:{line_no}"))?;
    }
    Ok(last)
}

fn cmd_infer(ctx: &mut Ctx, file: &PathBuf, dump: bool) -> ExitCode {
    let src = match read_file(file) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let fname = file.display().to_string();
    if let Err(e) = lower::load_source(ctx, &src, &fname) {
        eprintln!("{e}");
        return load_error_code(&e);
    }
    let fids: Vec<mini::dispatch::FuncId> = (0..ctx.funcs.len() as u32)
        .map(mini::dispatch::FuncId)
        .collect();
    for fid in fids {
        let methods = ctx.gf(fid).methods.clone();
        let gf_name = ctx.gf(fid).name.clone();
        for m in methods {
            if !m.declared_in.starts_with(fname.as_str()) {
                continue;
            }
            let a = entry_from_signature(&m.signature, &m.static_params);
            let statics: Vec<(String, TypeTerm)> = m
                .static_params
                .iter()
                .map(|v| {
                    (
                        v.name.clone(),
                        TypeTerm::kind(TypeTerm::Var(v.clone())),
                    )
                })
                .collect();
            let (result, sink, _) =
                mini::infer::infer_with_annotations(ctx, &m, &a, &statics);
            println!(
                "{} {} :: {}",
                gf_name,
                sig_str(ctx, &m.signature),
                sig_str(ctx, &result)
            );
            if dump {
                for (i, stmt) in m.body.body.iter().enumerate() {
                    let mut text = String::new();
                    mini::ir::dump_statement(stmt, &mut text);
                    let root = stmt_root_type(ctx, stmt, &sink);
                    match root {
                        Some(t) => println!("  {:>3}  {}  :: {}", i + 1, text, t),
                        None => println!("  {:>3}  {}", i + 1, text),
                    }
                }
                println!();
            }
        }
    }
    ExitCode::SUCCESS
}

fn stmt_root_type(
    ctx: &Ctx,
    stmt: &mini::ir::Statement,
    sink: &mini::infer::Sink,
) -> Option<String> {
    use mini::ir::Statement as S;
    let e = match stmt {
        S::Assign { value, .. } => value,
        S::GotoIf { cond, .. } => cond,
        S::Return(e) | S::Expr(e) => e,
        S::Goto(_) => return None,
    };
    sink.expr_types
        .get(&e.id())
        .map(|t| mini::display::type_to_string(&ctx.types, t))
}

fn cmd_lattice_check(ctx: &mut Ctx, a: &str, b: &str) -> ExitCode {
    let ta = match parse_type(ctx, a) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let tb = match parse_type(ctx, b) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let st = &ctx.types;
    let show = |t: &TypeTerm| mini::display::type_to_string(st, t);
    println!("A = {}", show(&ta));
    println!("B = {}", show(&tb));
    println!("subtype(A, B) = {}", mini::lattice::subtype(st, &ta, &tb));
    println!("subtype(B, A) = {}", mini::lattice::subtype(st, &tb, &ta));
    println!("intersection = {}", show(&mini::lattice::intersect(st, &ta, &tb)));
    println!("union = {}", show(&mini::lattice::union2(st, &ta, &tb)));
    println!("morespecific(A, B) = {}", mini::lattice::morespecific(st, &ta, &tb));
    println!("morespecific(B, A) = {}", mini::lattice::morespecific(st, &tb, &ta));
    ExitCode::SUCCESS
}

/// Parse and evaluate a type expression in the booted environment.
fn parse_type(ctx: &mut Ctx, src: &str) -> Result<TypeTerm, LoadError> {
    let ast = mini::parser::parse_expression(src)?;
    lower::eval_type_expr(ctx, &ast, &[], 1)
}

fn cmd_check_ambiguities(ctx: &mut Ctx, file: &PathBuf) -> ExitCode {
    let src = match read_file(file) {
        Ok(s) => s,
        Err(c) => return c,
    };
    ctx.take_diags();
    ctx.config.stream_output = false;
    let fname = file.display().to_string();
    let items = match mini::parser::parse_program(&src) {
        Ok(items) => items,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    // Definitions only (including short-form ones): executing the program
    // is not needed to find ambiguous signatures.
    for item in items {
        let is_def = match &item {
            Item::Stmt(s, _) => matches!(
                s,
                mini::parser::Stmt::Assign { lhs: mini::parser::LValue::CallShape(_), .. }
            ),
            _ => true,
        };
        if is_def {
            if let Err(e) = lower::process_item(ctx, item, &fname) {
                eprintln!("{e}");
                return load_error_code(&e);
            }
        }
    }
    for d in ctx.take_diags() {
        println!("{d}");
    }
    ExitCode::SUCCESS
}
