//! Analytical GFLOPS of unsplit, partly split and fully split kernels on both presets.

use splitperf::depmodel::estimate;
use splitperf::hw::preset;
use splitperf::kernel::{KernelSpec, SplitConfig};

fn main() -> splitperf::Result<()> {
    let spec = KernelSpec::new(7).with_elements(512);
    let configs = [
        SplitConfig::unsplit(spec.np),
        "2:4+4".parse()?,
        "3:3+3+2".parse()?,
        SplitConfig::max_split(spec.np),
    ];
    for name in ["a64fx", "xeon-gold-6230"] {
        let hw = preset(name).unwrap();
        for cfg in &configs {
            let est = estimate(&spec, cfg, &hw)?;
            println!(
                "{name:<16} {:<20} ratio {:.3}  {:>9.0} cycles  {:>6.2} GFLOPS/core",
                cfg.to_string(),
                est.ratio,
                est.t_kernel_cycles,
                est.gflops_per_core
            );
        }
    }
    Ok(())
}
