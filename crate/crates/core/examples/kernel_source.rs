//! Prints the split x-direction mode product in both dialects.

use splitperf::kernel::{emit_kernel_source, Dialect, KernelSpec, SplitConfig};

fn main() -> splitperf::Result<()> {
    let spec = KernelSpec::new(3);
    let cfg: SplitConfig = "2:2+2".parse()?;
    println!("{}", emit_kernel_source(&spec, &cfg, Dialect::Fortran)?);
    println!("{}", emit_kernel_source(&spec, &SplitConfig::unsplit(spec.np), Dialect::C)?);
    Ok(())
}
