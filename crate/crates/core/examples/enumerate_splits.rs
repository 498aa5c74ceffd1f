//! Ranks every way of splitting the inner product for one polynomial order.
//!
//! ```text
//! cargo run --example enumerate_splits -- 7
//! ```

use splitperf::depmodel;
use splitperf::hw::preset;
use splitperf::kernel::{enumerate_splits, EnumMode, KernelSpec};

fn main() -> splitperf::Result<()> {
    let p: u32 = std::env::args().nth(1).map_or(7, |s| s.parse().expect("P must be an integer"));
    let spec = KernelSpec::new(p);
    let hw = preset("a64fx").unwrap();

    let splits = enumerate_splits(spec.np, EnumMode::Partitions);
    println!(
        "P={p}: {} partitions, {} compositions of np={}",
        splits.len(),
        enumerate_splits(spec.np, EnumMode::Compositions).len(),
        spec.np
    );
    let mut ranked = Vec::new();
    for cfg in splits {
        let est = depmodel::estimate(&spec, &cfg, &hw)?;
        ranked.push((cfg, est));
    }
    ranked.sort_by(|a, b| b.1.gflops_per_core.total_cmp(&a.1.gflops_per_core));
    println!("{:<24} {:>6} {:>8} {:>8}", "split", "ratio", "T_FMA", "GFLOPS");
    for (cfg, est) in ranked {
        println!(
            "{:<24} {:>6.3} {:>8.3} {:>8.2}",
            cfg.to_string(),
            est.ratio,
            est.t_fma_cycles,
            est.gflops_per_core
        );
    }
    Ok(())
}
