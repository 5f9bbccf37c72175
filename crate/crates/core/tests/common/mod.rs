//! Shared helpers for the integration suites: booted contexts, source
//! loading, and type-expression parsing.

use mini::ctx::{Config, Ctx};
use mini::lower;
use mini::types::TypeTerm;
use mini::value::Value;

pub fn booted() -> Ctx {
    booted_with(Config::default())
}

pub fn booted_with(config: Config) -> Ctx {
    mini::boot::boot_ctx(config).expect("boot library loads")
}

pub fn load(ctx: &mut Ctx, src: &str) {
    lower::load_source(ctx, src, "test.jl").expect("source loads");
}

pub fn run_expr(ctx: &mut Ctx, src: &str) -> Value {
    let items = mini::parser::parse_program(src).expect("parses");
    let mut last = None;
    for item in items {
        last = lower::process_item(ctx, item, "test.jl").expect("runs");
    }
    last.expect("expression yields a value").0
}

pub fn run_expr_err(ctx: &mut Ctx, src: &str) -> String {
    let items = mini::parser::parse_program(src).expect("parses");
    let mut err = None;
    for item in items {
        match lower::process_item(ctx, item, "test.jl") {
            Ok(_) => {}
            Err(e) => {
                err = Some(e.to_string());
                break;
            }
        }
    }
    err.expect("expression errors")
}

pub fn ty(ctx: &mut Ctx, src: &str) -> TypeTerm {
    let ast = mini::parser::parse_expression(src).expect("type expression parses");
    lower::eval_type_expr(ctx, &ast, &[], 1).expect("type expression evaluates")
}

pub fn show_t(ctx: &Ctx, t: &TypeTerm) -> String {
    mini::display::type_to_string(&ctx.types, t)
}

pub fn show_v(ctx: &Ctx, v: &Value) -> String {
    mini::display::value_to_string(&ctx.types, v)
}

/// The value printed by the program so far.
pub fn output(ctx: &Ctx) -> String {
    ctx.output.clone()
}
