//! Describes a machine in the key=value format and compares it with a preset.

use splitperf::depmodel::estimate;
use splitperf::hw::{preset, HardwareDescriptor};
use splitperf::kernel::{KernelSpec, SplitConfig};

const DESCRIPTOR: &str = "\
name = toy-core
frequency_ghz = 3.0
fma_latency_cycles = 5
fma_throughput_cycles = 0.5
fpu_count = 2
vector_bits = 256
l1_capacity_bytes = 49152
overlap_hypothesis = A64FX_STYLE
";

fn main() -> splitperf::Result<()> {
    let toy = HardwareDescriptor::parse(DESCRIPTOR, "inline")?;
    let a64fx = preset("a64fx").unwrap();
    let spec = KernelSpec::new(5);
    for cfg in [SplitConfig::unsplit(spec.np), SplitConfig::max_split(spec.np)] {
        for hw in [&toy, &a64fx] {
            let est = estimate(&spec, &cfg, hw)?;
            println!("{:<8} {:<14} {:>7.2} GFLOPS/core", hw.name, cfg.to_string(), est.gflops_per_core);
        }
    }
    print!("\nround-tripped descriptor:\n{}", toy.to_text());
    Ok(())
}
