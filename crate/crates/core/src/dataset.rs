//! Measurement rows, learner features, filtering and train/test splitting.
//!
//! CSV schema (header required):
//!
//! ```text
//! hw,P,split,elements,directions,gflops_per_core[,flops_override]
//! a64fx,7,3:3+3+2,512,3,21.7
//! ```

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depmodel;
use crate::error::{Error, Result};
use crate::hw::{HardwareDescriptor, HardwareRegistry};
use crate::kernel::{self, KernelSpec, SplitConfig};

/// Slack on the `[0, 1]` ratio check for rounding in the GFLOPS round trip.
pub const RATIO_TOLERANCE: f64 = 1e-9;

/// Width of the sorted, zero-padded split-length block in the feature vector.
pub const MAX_ENCODED_SPLITS: usize = 16;

/// Index of `analytical_ratio`, the dependency-chain model's ratio, in the feature vector.
pub const ANALYTICAL_RATIO_FEATURE: usize = 6;

/// Column names of [`SampleRow::features`], in order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = ["np", "flops", "split_count", "max_length", "min_length", "mean_length", "analytical_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..MAX_ENCODED_SPLITS).map(|i| format!("length_sorted_{i}")));
    names.extend(
        [
            "frequency_ghz",
            "fma_latency",
            "fma_throughput",
            "fpu_count",
            "vector_bits",
            "fp_register_count",
            "reservation_station_entries",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    names
}

pub fn feature_count() -> usize {
    7 + MAX_ENCODED_SPLITS + 7
}

/// Code features followed by hardware features. Unknown hardware values are `NaN`.
pub fn encode_features(spec: &KernelSpec, cfg: &SplitConfig, flops: u64, hw: &HardwareDescriptor) -> Vec<f64> {
    let mut f = Vec::with_capacity(feature_count());
    let lengths = cfg.lengths();
    f.push(f64::from(spec.np));
    f.push(flops as f64);
    f.push(lengths.len() as f64);
    f.push(f64::from(cfg.max_length()));
    f.push(f64::from(cfg.min_length()));
    f.push(f64::from(cfg.total()) / lengths.len() as f64);
    f.push(f64::from(cfg.max_length()) / f64::from(spec.np));
    let sorted = cfg.sorted_desc();
    for i in 0..MAX_ENCODED_SPLITS {
        f.push(sorted.get(i).map_or(0.0, |&l| f64::from(l)));
    }
    f.push(hw.frequency_ghz);
    f.push(hw.fma_latency_cycles);
    f.push(hw.fma_throughput_cycles);
    f.push(f64::from(hw.fpu_count));
    f.push(f64::from(hw.vector_bits));
    f.push(hw.fp_register_count.map_or(f64::NAN, f64::from));
    f.push(hw.reservation_station_entries.map_or(f64::NAN, f64::from));
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub hw: HardwareDescriptor,
    pub spec: KernelSpec,
    pub split: SplitConfig,
    pub flops: u64,
    pub n_fma: u64,
    pub measured_gflops_per_core: f64,
    /// Ratio recovered from the measurement; may lie outside `[0, 1]`.
    pub target_ratio: f64,
}

impl SampleRow {
    pub fn new(
        hw: HardwareDescriptor,
        spec: KernelSpec,
        split: SplitConfig,
        measured_gflops_per_core: f64,
        flops_override: Option<u64>,
    ) -> Result<Self> {
        spec.validate()?;
        split.check(spec.np)?;
        let flops = flops_override.unwrap_or_else(|| kernel::flops(&spec));
        let n_fma = kernel::fma_count_for_flops(flops, &hw);
        let retro = depmodel::retro_ratio_counts(measured_gflops_per_core, flops, n_fma, &hw)?;
        Ok(Self {
            hw,
            spec,
            split,
            flops,
            n_fma,
            measured_gflops_per_core,
            target_ratio: retro.ratio,
        })
    }

    pub fn hw_name(&self) -> &str {
        &self.hw.name
    }

    pub fn polynomial_order(&self) -> u32 {
        self.spec.polynomial_order
    }

    /// Outside `[0, 1]` by more than [`RATIO_TOLERANCE`].
    pub fn ratio_out_of_range(&self) -> bool {
        !(-RATIO_TOLERANCE..=1.0 + RATIO_TOLERANCE).contains(&self.target_ratio)
    }

    pub fn features(&self) -> Vec<f64> {
        encode_features(&self.spec, &self.split, self.flops, &self.hw)
    }

    /// GFLOPS implied by a ratio for this row's kernel and machine.
    pub fn gflops_for_ratio(&self, ratio: f64) -> Result<f64> {
        Ok(depmodel::estimate_counts(self.flops, self.n_fma, ratio, &self.hw)?.gflops_per_core)
    }
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    hw: String,
    #[serde(rename = "P")]
    p: String,
    split: String,
    elements: String,
    directions: String,
    gflops_per_core: String,
    #[serde(default)]
    flops_override: Option<String>,
}

const REQUIRED_COLUMNS: [&str; 6] = ["hw", "P", "split", "elements", "directions", "gflops_per_core"];

pub fn ingest_csv(path: impl AsRef<Path>, registry: &HardwareRegistry) -> Result<Vec<SampleRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, registry)
}

/// Reads rows in file order. Row numbers in errors count data rows from 1.
pub fn ingest_reader<R: Read>(reader: R, registry: &HardwareRegistry) -> Result<Vec<SampleRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema {
                row: 0,
                column: col.to_string(),
                msg: "missing column in header".into(),
            });
        }
    }

    let mut rows = Vec::new();
    for (idx, record) in rdr.deserialize::<CsvRecord>().enumerate() {
        let row = idx + 1;
        let rec = record.map_err(|e| Error::Schema {
            row,
            column: "*".into(),
            msg: e.to_string(),
        })?;
        let schema = |column: &str, msg: String| Error::Schema {
            row,
            column: column.to_string(),
            msg,
        };
        fn field<T: std::str::FromStr>(row: usize, column: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Schema {
                row,
                column: column.to_string(),
                msg: format!("cannot parse '{v}'"),
            })
        }

        let hw = registry
            .get(&rec.hw)
            .cloned()
            .ok_or_else(|| schema("hw", format!("unknown hardware '{}'", rec.hw)))?;
        let p: u32 = field(row, "P", &rec.p)?;
        if p == 0 {
            return Err(schema("P", "polynomial order must be >= 1".into()));
        }
        let split: SplitConfig = rec.split.parse().map_err(|e: Error| schema("split", e.to_string()))?;
        let elements: u64 = field(row, "elements", &rec.elements)?;
        let directions: u32 = field(row, "directions", &rec.directions)?;
        let gflops: f64 = field(row, "gflops_per_core", &rec.gflops_per_core)?;
        if !(gflops > 0.0 && gflops.is_finite()) {
            return Err(schema("gflops_per_core", format!("must be > 0, got {gflops}")));
        }
        let flops_override = match rec.flops_override.as_deref() {
            None | Some("") => None,
            Some(v) => Some(field::<u64>(row, "flops_override", v)?),
        };
        let spec = KernelSpec::new(p).with_elements(elements).with_directions(directions);
        spec.validate().map_err(|e| schema("P", e.to_string()))?;
        split.check(spec.np).map_err(|e| schema("split", e.to_string()))?;
        rows.push(SampleRow::new(hw, spec, split, gflops, flops_override).map_err(|e| schema("*", e.to_string()))?);
    }
    Ok(rows)
}

/// Writes rows back in the ingest schema.
pub fn write_csv<W: std::io::Write>(rows: &[SampleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["hw", "P", "split", "elements", "directions", "gflops_per_core", "flops_override"])?;
    for r in rows {
        let over = if r.flops != kernel::flops(&r.spec) {
            r.flops.to_string()
        } else {
            String::new()
        };
        w.write_record([
            r.hw.name.clone(),
            r.spec.polynomial_order.to_string(),
            r.split.to_string(),
            r.spec.elements.to_string(),
            r.spec.directions.to_string(),
            r.measured_gflops_per_core.to_string(),
            over,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    RatioRange,
    Footprint,
}

/// Which rows to drop before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub ratio_range: bool,
    pub footprint: bool,
    /// Count the operator matrices in the per-element working set.
    pub include_operators: bool,
    /// A row is excluded when its working set exceeds `l1_factor * L1`.
    pub l1_factor: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            ratio_range: true,
            footprint: true,
            include_operators: true,
            l1_factor: 2.0,
        }
    }
}

impl FilterPolicy {
    /// Any working set larger than L1, state arrays only.
    pub fn strict_l1() -> Self {
        Self {
            include_operators: false,
            l1_factor: 1.0,
            ..Self::default()
        }
    }

    pub fn working_set(&self, row: &SampleRow) -> u64 {
        let fp = kernel::data_footprint_bytes(&row.spec);
        if self.include_operators {
            fp.working_set_with_operators()
        } else {
            fp.working_set_bytes
        }
    }

    pub fn check(&self, row: &SampleRow) -> Option<ExclusionReason> {
        if self.ratio_range && row.ratio_out_of_range() {
            return Some(ExclusionReason::RatioRange);
        }
        if self.footprint && self.working_set(row) as f64 > self.l1_factor * row.hw.l1_capacity_bytes as f64 {
            return Some(ExclusionReason::Footprint);
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub kept: Vec<SampleRow>,
    pub excluded: Vec<(SampleRow, ExclusionReason)>,
}

pub fn filter_rows(rows: Vec<SampleRow>, policy: &FilterPolicy) -> Filtered {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for row in rows {
        match policy.check(&row) {
            None => kept.push(row),
            Some(reason) => excluded.push((row, reason)),
        }
    }
    Filtered { kept, excluded }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SampleRow>,
    pub test: Vec<SampleRow>,
    pub seed: u64,
}

/// Uniform random split with `round(fraction * n)` training rows.
pub fn split_train_test(rows: &[SampleRow], fraction: f64, seed: u64) -> Result<DatasetSplit> {
    check_split_args(rows.len(), fraction)?;
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
    let (train_idx, test_idx) = idx.split_at(n_train);
    Ok(DatasetSplit {
        train: pick(rows, train_idx),
        test: pick(rows, test_idx),
        seed,
    })
}

/// Random split applied within each (hardware, P) group, so every group with
/// at least two rows contributes at least one test row.
pub fn split_stratified(rows: &[SampleRow], fraction: f64, seed: u64) -> Result<DatasetSplit> {
    check_split_args(rows.len(), fraction)?;
    let mut groups: BTreeMap<(String, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups
            .entry((r.hw.name.clone(), r.spec.polynomial_order))
            .or_default()
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut n_train = (fraction * n as f64).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        } else {
            n_train = n;
        }
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(DatasetSplit {
        train: pick(rows, &train_idx),
        test: pick(rows, &test_idx),
        seed,
    })
}

fn check_split_args(n: usize, fraction: f64) -> Result<()> {
    if n < 5 {
        return Err(Error::TooFewRows { need: 5, got: n });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "training fraction must lie in (0, 1), got {fraction}"
        )));
    }
    Ok(())
}

fn pick(rows: &[SampleRow], idx: &[usize]) -> Vec<SampleRow> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Rows whose ratio lies outside `[0, 1]`.
    pub outside: usize,
}

pub fn ratio_histogram(rows: &[SampleRow], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let mut counts = vec![0; bins];
    let mut outside = 0;
    for r in rows {
        let x = r.target_ratio;
        if !(0.0..=1.0).contains(&x) {
            outside += 1;
            continue;
        }
        let b = ((x * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        counts,
        outside,
    }
}
