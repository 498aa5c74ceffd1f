//! Turns a measured GFLOPS figure back into a dependency ratio.

use splitperf::depmodel::{estimate_with_ratio, retro_ratio};
use splitperf::hw::preset;
use splitperf::kernel::KernelSpec;

fn main() -> splitperf::Result<()> {
    let hw = preset("a64fx").unwrap();
    let spec = KernelSpec::new(7);
    for gflops in [4.0, 8.0, 20.0, 60.0, 80.0] {
        let r = retro_ratio(gflops, &spec, &hw)?;
        let note = if r.out_of_range() { "  (outside [0,1], excluded from training)" } else { "" };
        println!("{gflops:>5.1} GFLOPS -> T_FMA {:.3} cycles, ratio {:+.4}{note}", r.t_fma_cycles, r.ratio);
    }
    let back = estimate_with_ratio(&spec, 0.3, &hw)?;
    let r = retro_ratio(back.gflops_per_core, &spec, &hw)?;
    println!("round trip of 0.3: {}", r.ratio);
    Ok(())
}
