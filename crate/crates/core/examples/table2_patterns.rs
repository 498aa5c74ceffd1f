//! Estimated vs simulated cycles per FMA for the five microbenchmark patterns.

use splitperf::depmodel::{ratio_of_stream, t_fma};
use splitperf::hw::preset;
use splitperf::pipesim::{build_pattern, simulate, Pattern};

fn main() -> splitperf::Result<()> {
    for name in ["a64fx", "xeon-gold-6230"] {
        let hw = preset(name).unwrap();
        println!("{name}");
        println!("  {:<8} {:>6} {:>10} {:>10}", "pattern", "ratio", "estimated", "simulated");
        for p in Pattern::ALL {
            let dag = build_pattern(p, 20)?;
            let ratio = ratio_of_stream(&dag.to_stream()?);
            let sim = simulate(&dag, &hw, 10);
            println!(
                "  {:<8} {:>6.2} {:>10.3} {:>10.3}",
                p.to_string(),
                ratio,
                t_fma(ratio, &hw)?,
                sim.avg_cycles_per_instr
            );
        }
    }
    Ok(())
}
