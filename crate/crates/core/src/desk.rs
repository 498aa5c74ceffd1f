//! End-to-end pipeline on simulator-generated data.
//!
//! Every partition of every inner product for `P` in a range is simulated on
//! each machine, turned into a noisy GFLOPS "measurement", and pushed through
//! the same ingest, filter, search, train and compare steps as real data.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, ExclusionReason, FilterPolicy, SampleRow};
use crate::depmodel;
use crate::error::{Error, Result};
use crate::gbt::{self, GbtModel, SearchSpace, TrainConfig, TrainingSet};
use crate::hw::{HardwareDescriptor, HardwareRegistry};
use crate::kernel::{self, EnumMode, KernelSpec, SplitConfig};
use crate::pipesim::{self, SimOptions};
use crate::report::{self, CompareReport, EcmSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub seed: u64,
    /// Standard deviation of the log of the multiplicative noise.
    pub sigma: f64,
    pub min_order: u32,
    pub max_order: u32,
    pub train_fraction: f64,
    pub n_candidates: usize,
    pub k_folds: usize,
    pub sim_iterations: usize,
    pub space: SearchSpace,
    pub filter: FilterPolicy,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma: 0.03,
            min_order: 1,
            max_order: 15,
            train_fraction: 0.8,
            n_candidates: 6,
            k_folds: 3,
            sim_iterations: 4,
            space: SearchSpace::default(),
            filter: FilterPolicy::default(),
        }
    }
}

/// Whether the analytical model and the simulator agree that the fully split
/// inner product beats the unsplit one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub hw: String,
    #[serde(rename = "P")]
    pub p: u32,
    pub analytical_unsplit_gflops: f64,
    pub analytical_max_split_gflops: f64,
    pub simulated_unsplit_gflops: f64,
    pub simulated_max_split_gflops: f64,
}

impl OrderingCheck {
    pub fn agrees(&self) -> bool {
        let a = self.analytical_max_split_gflops.partial_cmp(&self.analytical_unsplit_gflops);
        let s = self.simulated_max_split_gflops.partial_cmp(&self.simulated_unsplit_gflops);
        a == s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskSummary {
    pub config: DeskConfig,
    pub generated_rows: usize,
    pub excluded_ratio_range: usize,
    pub excluded_footprint: Vec<(String, u32)>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub chosen: TrainConfig,
    pub cv_mape: f64,
    pub ordering: Vec<OrderingCheck>,
}

#[derive(Debug, Clone)]
pub struct DeskOutcome {
    pub rows: Vec<SampleRow>,
    pub model: GbtModel,
    pub report: CompareReport,
    pub summary: DeskSummary,
}

/// GFLOPS per core implied by a simulated average cycles per FMA.
pub fn simulated_gflops(spec: &KernelSpec, avg_cycles: f64, hw: &HardwareDescriptor) -> f64 {
    kernel::flops(spec) as f64 * hw.frequency_ghz / (kernel::fma_count(spec, hw) as f64 * avg_cycles)
}

/// Simulated average cycles per FMA of one split inner product.
pub fn simulate_split(cfg: &SplitConfig, np: u32, hw: &HardwareDescriptor, iterations: usize) -> Result<f64> {
    let dag = pipesim::build_from_split(cfg, np)?;
    Ok(pipesim::simulate_with(&dag, hw, &SimOptions::iterations(iterations)).avg_cycles_per_instr)
}

/// Simulated rows for every partition, machine and order, in a fixed order.
pub fn generate_rows(machines: &[HardwareDescriptor], cfg: &DeskConfig) -> Result<Vec<SampleRow>> {
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {}", cfg.sigma)));
    }
    if cfg.min_order < 1 || cfg.min_order > cfg.max_order {
        return Err(Error::InvalidArgument(format!(
            "invalid order range {}..={}",
            cfg.min_order, cfg.max_order
        )));
    }
    let mut items = Vec::new();
    for hw in machines {
        for p in cfg.min_order..=cfg.max_order {
            let spec = KernelSpec::new(p);
            for split in kernel::enumerate_splits(spec.np, EnumMode::Partitions) {
                items.push((hw, spec, split));
            }
        }
    }
    let clean: Vec<f64> = items
        .par_iter()
        .map(|(hw, spec, split)| {
            let avg = simulate_split(split, spec.np, hw, cfg.sim_iterations)?;
            Ok(simulated_gflops(spec, avg, hw))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.sigma > 0.0 {
        Some(LogNormal::new(0.0, cfg.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    items
        .into_iter()
        .zip(clean)
        .map(|((hw, spec, split), g)| {
            let g = match &noise {
                Some(d) => g * d.sample(&mut rng),
                None => g,
            };
            SampleRow::new(hw.clone(), spec, split, g, None)
        })
        .collect()
}

pub fn ordering_checks(machines: &[HardwareDescriptor], cfg: &DeskConfig) -> Result<Vec<OrderingCheck>> {
    let mut out = Vec::new();
    for hw in machines {
        for p in cfg.min_order..=cfg.max_order {
            let spec = KernelSpec::new(p);
            let (un, max) = (SplitConfig::unsplit(spec.np), SplitConfig::max_split(spec.np));
            out.push(OrderingCheck {
                hw: hw.name.clone(),
                p,
                analytical_unsplit_gflops: depmodel::estimate(&spec, &un, hw)?.gflops_per_core,
                analytical_max_split_gflops: depmodel::estimate(&spec, &max, hw)?.gflops_per_core,
                simulated_unsplit_gflops: simulated_gflops(
                    &spec,
                    simulate_split(&un, spec.np, hw, cfg.sim_iterations)?,
                    hw,
                ),
                simulated_max_split_gflops: simulated_gflops(
                    &spec,
                    simulate_split(&max, spec.np, hw, cfg.sim_iterations)?,
                    hw,
                ),
            });
        }
    }
    Ok(out)
}

/// Runs the whole pipeline in memory.
pub fn run(machines: &[HardwareDescriptor], cfg: &DeskConfig) -> Result<DeskOutcome> {
    let generated = generate_rows(machines, cfg)?;

    // Re-read through the CSV ingest path, as real measurements would be.
    let mut csv = Vec::new();
    dataset::write_csv(&generated, &mut csv)?;
    let mut registry = HardwareRegistry::new();
    for hw in machines {
        registry.insert(hw.clone());
    }
    let rows = dataset::ingest_reader(csv.as_slice(), &registry)?;

    let filtered = dataset::filter_rows(rows.clone(), &cfg.filter);
    let excluded_ratio_range = filtered
        .excluded
        .iter()
        .filter(|(_, why)| *why == ExclusionReason::RatioRange)
        .count();
    let mut excluded_footprint: Vec<(String, u32)> = filtered
        .excluded
        .iter()
        .filter(|(_, why)| *why == ExclusionReason::Footprint)
        .map(|(r, _)| (r.hw.name.clone(), r.polynomial_order()))
        .collect();
    excluded_footprint.dedup();

    let split = dataset::split_stratified(&filtered.kept, cfg.train_fraction, cfg.seed)?;
    let train_set = TrainingSet::from_rows(&split.train);
    let (chosen, cv_mape) = gbt::random_search(&train_set, &cfg.space, cfg.n_candidates, cfg.k_folds, cfg.seed)?;
    let model = gbt::train(&train_set, &chosen)?;

    // Every row kept out of training is evaluated, excluded ones included.
    let mut report_rows = split.test.clone();
    report_rows.extend(filtered.excluded.iter().map(|(r, _)| r.clone()));
    let report = report::build_report(&report_rows, &model, &EcmSource::Derived)?;

    let summary = DeskSummary {
        config: cfg.clone(),
        generated_rows: rows.len(),
        excluded_ratio_range,
        excluded_footprint,
        train_rows: split.train.len(),
        test_rows: split.test.len(),
        chosen,
        cv_mape,
        ordering: ordering_checks(machines, cfg)?,
    };
    Ok(DeskOutcome {
        rows,
        model,
        report,
        summary,
    })
}

pub const ARTIFACTS: [&str; 6] = [
    "dataset.csv",
    "model.json",
    "report_rows.csv",
    "report_groups.csv",
    "report.txt",
    "summary.json",
];

/// Writes the outcome's artifacts into `dir`, creating it if needed.
pub fn write_artifacts(outcome: &DeskOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = Vec::new();
    dataset::write_csv(&outcome.rows, &mut csv)?;
    let contents = [
        csv,
        outcome.model.to_json()?.into_bytes(),
        outcome.report.rows_csv()?.into_bytes(),
        outcome.report.groups_csv()?.into_bytes(),
        outcome.report.table().into_bytes(),
        serde_json::to_string_pretty(&outcome.summary)?.into_bytes(),
    ];
    for (name, bytes) in ARTIFACTS.iter().zip(contents) {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
