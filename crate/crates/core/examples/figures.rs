//! Print the packet-count and ratio tables as CSV.

use algtrace::cli::{fig3_csv, fig4_csv, DRange, Fig3Args, Fig4Args};

fn main() -> algtrace::Result<()> {
    let range = DRange {
        d_min: 1,
        d_max: 30,
        d_step: 1,
    };
    print!(
        "{}",
        fig3_csv(&Fig3Args {
            range: range.clone(),
            ..Default::default()
        })?
    );
    println!();
    print!(
        "{}",
        fig4_csv(&Fig4Args {
            range,
            ..Default::default()
        })?
    );
    Ok(())
}
