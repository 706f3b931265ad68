//! Arithmetic in GF(65537) and evaluating a path polynomial.

use algtrace::{FieldCtx, Path};

fn main() -> algtrace::Result<()> {
    let ctx = FieldCtx::default();
    let a = ctx.element(40_000)?;
    let b = ctx.element(30_000)?;
    println!("{a} + {b} = {}", ctx.add(a, b));
    println!("{a} * {b} = {}", ctx.mul(a, b));
    let inv = ctx.inv(a)?;
    println!("{a}^-1 = {inv}, check {}", ctx.mul(a, inv));
    println!("{a}^(p-1) = {}", ctx.pow(a, ctx.modulus() - 1));

    // y(x) = r_1 x^{d-1} + ... + r_d is what a fully marked packet carries
    let path = Path::from_ids(&[3, 5, 2], &ctx)?;
    for x in [1, 2, 4] {
        let x = ctx.element(x)?;
        println!(
            "path {path} at x = {x}: y = {}",
            ctx.horner(path.nodes(), x)
        );
    }
    Ok(())
}
