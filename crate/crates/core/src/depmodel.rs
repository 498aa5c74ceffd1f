//! The dependency-chain model.
//!
//! The longest chain over the stream length gives a ratio in `[0, 1]`; the
//! average FMA time interpolates linearly between throughput (ratio 0) and
//! latency (ratio 1). Kernel time and GFLOPS follow from the FMA count, and the
//! same relations run backwards turn a measured GFLOPS into a ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hw::HardwareDescriptor;
use crate::kernel::{self, KernelSpec, SplitConfig};

/// An instruction stream described by its dependency chains.
///
/// Instructions not covered by `chain_lengths` are independent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepStream {
    pub total_instructions: u64,
    pub chain_lengths: Vec<u64>,
}

impl DepStream {
    pub fn new(total_instructions: u64, chain_lengths: Vec<u64>) -> Result<Self> {
        if total_instructions == 0 {
            return Err(Error::InvalidArgument("stream must contain at least one instruction".into()));
        }
        if chain_lengths.contains(&0) {
            return Err(Error::InvalidArgument("chain lengths must be >= 1".into()));
        }
        let covered: u64 = chain_lengths.iter().sum();
        if covered > total_instructions {
            return Err(Error::InvalidArgument(format!(
                "chains cover {covered} instructions but the stream has {total_instructions}"
            )));
        }
        Ok(Self {
            total_instructions,
            chain_lengths,
        })
    }

    pub fn longest_chain(&self) -> u64 {
        self.chain_lengths.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub ratio: f64,
    pub t_fma_cycles: f64,
    pub t_kernel_cycles: f64,
    pub gflops_per_core: f64,
}

/// Whether the reduction of the partial sums counts toward the critical chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Accumulation {
    #[default]
    Excluded,
    /// Adds `ceil(log2 N)` to the longest chain (a balanced reduction tree).
    Tree,
}

/// Longest chain over stream length.
pub fn ratio_of_stream(s: &DepStream) -> f64 {
    s.longest_chain() as f64 / s.total_instructions as f64
}

/// Ratio of a split inner product with `Ns = np`: `max(lengths) / np`.
pub fn ratio_of_split(cfg: &SplitConfig, np: u32) -> Result<f64> {
    ratio_of_split_with(cfg, np, Accumulation::Excluded)
}

pub fn ratio_of_split_with(cfg: &SplitConfig, np: u32, acc: Accumulation) -> Result<f64> {
    cfg.check(np)?;
    let extra = match acc {
        Accumulation::Excluded => 0,
        Accumulation::Tree => reduction_depth(cfg.split_count()),
    };
    Ok((f64::from(cfg.max_length() + extra) / f64::from(np)).min(1.0))
}

pub(crate) fn reduction_depth(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Average cycles per FMA: `ratio * latency + (1 - ratio) * throughput`.
pub fn t_fma(ratio: f64, hw: &HardwareDescriptor) -> Result<f64> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::RatioOutOfRange(ratio));
    }
    Ok(ratio * hw.fma_latency_cycles + (1.0 - ratio) * hw.fma_throughput_cycles)
}

/// Estimate for a kernel whose ratio is already known (analytical or learned).
pub fn estimate_with_ratio(spec: &KernelSpec, ratio: f64, hw: &HardwareDescriptor) -> Result<ModelEstimate> {
    estimate_counts(kernel::flops(spec), kernel::fma_count(spec, hw), ratio, hw)
}

/// Same as [`estimate_with_ratio`] with explicit FLOP and FMA counts.
pub fn estimate_counts(flops: u64, n_fma: u64, ratio: f64, hw: &HardwareDescriptor) -> Result<ModelEstimate> {
    let t_fma_cycles = t_fma(ratio, hw)?;
    let t_kernel_cycles = n_fma as f64 * t_fma_cycles;
    Ok(ModelEstimate {
        ratio,
        t_fma_cycles,
        t_kernel_cycles,
        gflops_per_core: flops as f64 * hw.frequency_ghz / t_kernel_cycles,
    })
}

pub fn estimate(spec: &KernelSpec, cfg: &SplitConfig, hw: &HardwareDescriptor) -> Result<ModelEstimate> {
    spec.validate()?;
    let ratio = ratio_of_split(cfg, spec.np)?;
    estimate_with_ratio(spec, ratio, hw)
}

/// Ratio recovered from a measurement. Not clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetroRatio {
    pub ratio: f64,
    pub t_kernel_cycles: f64,
    pub t_fma_cycles: f64,
}

impl RetroRatio {
    /// Outside `[0, 1]` means the measurement violates the model's assumptions.
    pub fn out_of_range(&self) -> bool {
        !(0.0..=1.0).contains(&self.ratio)
    }
}

pub fn retro_ratio(measured_gflops: f64, spec: &KernelSpec, hw: &HardwareDescriptor) -> Result<RetroRatio> {
    retro_ratio_counts(measured_gflops, kernel::flops(spec), kernel::fma_count(spec, hw), hw)
}

pub fn retro_ratio_counts(
    measured_gflops: f64,
    flops: u64,
    n_fma: u64,
    hw: &HardwareDescriptor,
) -> Result<RetroRatio> {
    if !(measured_gflops > 0.0 && measured_gflops.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "measured GFLOPS must be > 0, got {measured_gflops}"
        )));
    }
    let span = hw.fma_latency_cycles - hw.fma_throughput_cycles;
    if span == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{}: latency equals throughput, the ratio is undefined",
            hw.name
        )));
    }
    if n_fma == 0 {
        return Err(Error::InvalidArgument("FMA count must be > 0".into()));
    }
    let t_kernel_cycles = flops as f64 * hw.frequency_ghz / measured_gflops;
    let t_fma_cycles = t_kernel_cycles / n_fma as f64;
    Ok(RetroRatio {
        ratio: (t_fma_cycles - hw.fma_throughput_cycles) / span,
        t_kernel_cycles,
        t_fma_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::preset;

    fn a64() -> HardwareDescriptor {
        preset("a64fx").unwrap()
    }

    fn xeon() -> HardwareDescriptor {
        preset("xeon").unwrap()
    }

    #[test]
    fn stream_ratios() {
        let d = DepStream::new(20, vec![20]).unwrap();
        assert_eq!(ratio_of_stream(&d), 1.0);
        let e = DepStream::new(5, vec![3, 2]).unwrap();
        assert!((ratio_of_stream(&e) - 0.6).abs() < 1e-15);
        let a = DepStream::new(100_000, vec![]).unwrap();
        assert!(ratio_of_stream(&a) < 1e-4);
        assert!(DepStream::new(4, vec![3, 2]).is_err());
    }

    #[test]
    fn split_ratios() {
        let r = |s: &str, np| ratio_of_split(&s.parse().unwrap(), np).unwrap();
        assert_eq!(r("1:4", 4), 1.0);
        assert_eq!(r("2:2+2", 4), 0.5);
        assert_eq!(r("3:3+3+2", 8), 0.375);
        assert!(ratio_of_split(&"2:3+2".parse().unwrap(), 4).is_err());
    }

    #[test]
    fn accumulation_tree_lengthens_chain() {
        let cfg: SplitConfig = "4:2+2+2+2".parse().unwrap();
        assert_eq!(reduction_depth(1), 0);
        assert_eq!(reduction_depth(2), 1);
        assert_eq!(reduction_depth(4), 2);
        assert_eq!(reduction_depth(5), 3);
        let r = ratio_of_split_with(&cfg, 8, Accumulation::Tree).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn t_fma_table_values() {
        assert_eq!(t_fma(0.75, &a64()).unwrap(), 6.875);
        assert_eq!(t_fma(0.5, &xeon()).unwrap(), 2.25);
        assert_eq!(t_fma(0.0, &a64()).unwrap(), 0.5);
        assert!(matches!(t_fma(1.2, &a64()), Err(Error::RatioOutOfRange(_))));
        assert!(t_fma(-0.01, &a64()).is_err());
    }

    #[test]
    fn estimate_unsplit_p7() {
        let spec = KernelSpec::new(7);
        let est = estimate(&spec, &SplitConfig::unsplit(8), &a64()).unwrap();
        assert_eq!(est.ratio, 1.0);
        assert_eq!(est.t_kernel_cycles, 13_824.0);
        assert!((est.gflops_per_core - 24_576.0 * 2.2 / 13_824.0).abs() < 1e-12);
        assert!((est.gflops_per_core - 3.91).abs() < 0.005);
    }

    #[test]
    fn estimate_throughput_endpoint() {
        let spec = KernelSpec::new(7);
        let hw = a64();
        let est = estimate_with_ratio(&spec, 0.0, &hw).unwrap();
        assert_eq!(est.t_fma_cycles, 0.5);
        assert!((est.gflops_per_core - 24_576.0 * 2.2 / (1536.0 * 0.5)).abs() < 1e-9);
        assert!((est.gflops_per_core - hw.peak_gflops_per_core()).abs() < 1e-9);
    }

    #[test]
    fn lower_latency_means_fewer_cycles() {
        let spec = KernelSpec::new(7);
        for r in [0.1, 0.5, 1.0] {
            let a = estimate_with_ratio(&spec, r, &a64()).unwrap();
            let x = estimate_with_ratio(&spec, r, &xeon()).unwrap();
            assert!(x.t_kernel_cycles < a.t_kernel_cycles);
        }
        for r in [0.5, 0.75, 1.0] {
            let a = estimate_with_ratio(&spec, r, &a64()).unwrap();
            let x = estimate_with_ratio(&spec, r, &xeon()).unwrap();
            assert!(x.gflops_per_core > a.gflops_per_core);
        }
    }

    #[test]
    fn retro_inverts_estimate() {
        let spec = KernelSpec::new(7);
        let hw = a64();
        let full = estimate_with_ratio(&spec, 1.0, &hw).unwrap();
        let back = retro_ratio(full.gflops_per_core, &spec, &hw).unwrap();
        assert!((back.ratio - 1.0).abs() < 1e-12);
        assert!(!back.out_of_range());

        let slower = retro_ratio(full.gflops_per_core * 0.9, &spec, &hw).unwrap();
        assert!(slower.ratio > 1.0);
        assert!(slower.out_of_range());
    }

    #[test]
    fn retro_rejects_bad_inputs() {
        let spec = KernelSpec::new(3);
        let mut hw = a64();
        assert!(retro_ratio(0.0, &spec, &hw).is_err());
        assert!(retro_ratio(-1.0, &spec, &hw).is_err());
        hw.fma_latency_cycles = hw.fma_throughput_cycles;
        assert!(retro_ratio(5.0, &spec, &hw).is_err());
    }
}
