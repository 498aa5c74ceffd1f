//! Roofline and ECM estimates for the mode-product kernel.

use splitperf::baselines::{arithmetic_intensity, derive_ecm_inputs, ecm_cycles, ecm_gflops, roofline_for};
use splitperf::hw::preset;
use splitperf::kernel::KernelSpec;

fn main() -> splitperf::Result<()> {
    for name in ["a64fx", "xeon-gold-6230"] {
        let hw = preset(name).unwrap();
        let cores = hw.cores.unwrap_or(1);
        println!("{name} ({cores} active cores, {})", hw.overlap_hypothesis);
        for p in [3, 7, 15] {
            let spec = KernelSpec::new(p).with_elements(1000);
            let inp = derive_ecm_inputs(&spec, &hw, cores)?;
            println!(
                "  P={p:<2} AI {:.3} F/B  roofline {:>6.2}  ECM {:>6.2} GFLOPS/core  ({:.0} cycles)",
                arithmetic_intensity(&spec),
                roofline_for(&spec, &hw, cores).unwrap_or(f64::NAN),
                ecm_gflops(&inp, &hw)?,
                ecm_cycles(&inp, hw.overlap_hypothesis)?
            );
        }
    }
    Ok(())
}
