//! Runs the simulator-backed pipeline end to end and prints the per-group MAPE table.
//!
//! ```text
//! cargo run --release --example desk_pipeline -- [sigma] [seed] [out_dir]
//! ```

use splitperf::desk::{self, DeskConfig};
use splitperf::hw::preset;

fn main() -> splitperf::Result<()> {
    let mut args = std::env::args().skip(1);
    let sigma = args.next().map_or(0.03, |s| s.parse().expect("sigma must be a number"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let out = args.next();

    let machines = [preset("a64fx").unwrap(), preset("xeon-gold-6230").unwrap()];
    let cfg = DeskConfig { sigma, seed, ..DeskConfig::default() };
    let outcome = desk::run(&machines, &cfg)?;

    let s = &outcome.summary;
    println!(
        "{} rows generated, {} outside [0,1], footprint-excluded {:?}",
        s.generated_rows, s.excluded_ratio_range, s.excluded_footprint
    );
    println!("train {} / test {}, chosen {:?}, cv MAPE {:.3}%", s.train_rows, s.test_rows, s.chosen, s.cv_mape);
    let disagree = s.ordering.iter().filter(|c| !c.agrees()).count();
    println!("unsplit vs max-split ordering disagreements: {disagree}");
    print!("{}", outcome.report.table());
    if let Some(dir) = out {
        desk::write_artifacts(&outcome, &dir)?;
        println!("artifacts written to {dir}");
    }
    Ok(())
}
