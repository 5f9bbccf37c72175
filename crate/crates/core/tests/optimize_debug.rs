mod common;
use common::*;

#[test]
fn dump_fallback_plus_specialization() {
    let mut ctx = booted();
    load(&mut ctx, "addonce(a, b) = a + b");
    let v = run_expr(&mut ctx, "addonce(1, 2.5)");
    println!("value = {}", show_v(&ctx, &v));
    // Find the + fallback's cache entry at (Int64, Float64).
    let plus = ctx.fn_by_name["+"];
    let buckets: Vec<_> = ctx.gf(plus).cache.values().cloned().collect();
    for bucket in buckets {
        for entry in bucket {
            println!(
                "entry {} dummy={} origin sig {}",
                show_t(&ctx, &entry.entry_sig),
                entry.dummy,
                show_t(&ctx, &entry.origin.signature)
            );
            if let Some(spec) = &entry.spec {
                println!("--- optimized body of {} ---", spec.func.func.name);
                print!("{}", mini::ir::dump_function(&spec.func.func));
                println!(
                    "direct_targets: {:?}",
                    spec.func.direct_targets.len()
                );
            }
        }
    }
    println!("stats: {}", ctx.stats.dump());
}
