//! The boot library: sources written in the language itself, embedded in
//! the binary and loaded in manifest order before any user program.

use crate::ctx::{Config, Ctx};
use crate::lower::{self, LoadError};

pub const BOOT_MANIFEST: &[(&str, &str)] = &[
    ("boot/types.jl", include_str!("../../../boot/types.jl")),
    ("boot/arith.jl", include_str!("../../../boot/arith.jl")),
    ("boot/promote.jl", include_str!("../../../boot/promote.jl")),
    ("boot/base.jl", include_str!("../../../boot/base.jl")),
    ("boot/staged.jl", include_str!("../../../boot/staged.jl")),
];

/// Load the boot library into a context. The sources must load with zero
/// ambiguity warnings.
pub fn load_boot(ctx: &mut Ctx) -> Result<(), LoadError> {
    for (name, src) in BOOT_MANIFEST {
        lower::load_source(ctx, src, name)?;
    }
    // `Int` is the conventional alias for the default integer type.
    if let Some(v) = ctx.globals.get("Int64").cloned() {
        ctx.globals.insert("Int".to_string(), v);
    }
    Ok(())
}

/// A fully booted context with the given configuration.
pub fn boot_ctx(config: Config) -> Result<Ctx, LoadError> {
    let mut ctx = Ctx::new(config);
    load_boot(&mut ctx)?;
    Ok(ctx)
}

/// A bare context: builtins only, no boot library (`--no-boot`).
pub fn bare_ctx(config: Config) -> Ctx {
    Ctx::new(config)
}
