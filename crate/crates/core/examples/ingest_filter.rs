//! Ingests measurements from CSV, applies the exclusion rules and bins the ratios.

use splitperf::dataset::{filter_rows, ingest_reader, ratio_histogram, FilterPolicy};
use splitperf::hw::HardwareRegistry;

const DATA: &str = "\
hw,P,split,elements,directions,gflops_per_core
a64fx,7,1:8,512,3,3.95
a64fx,7,2:4+4,512,3,7.4
a64fx,7,8:1+1+1+1+1+1+1+1,512,3,31.0
a64fx,7,8:1+1+1+1+1+1+1+1,512,3,90.0
xeon,15,1:16,64,3,8.3
xeon,14,2:8+7,64,3,14.0
";

fn main() -> splitperf::Result<()> {
    let rows = ingest_reader(DATA.as_bytes(), &HardwareRegistry::with_presets())?;
    for r in &rows {
        println!("{:<16} P={:<2} {:<20} ratio {:+.4}", r.hw_name(), r.polynomial_order(), r.split.to_string(), r.target_ratio);
    }
    let filtered = filter_rows(rows, &FilterPolicy::default());
    for (row, reason) in &filtered.excluded {
        println!("excluded {} P={} {}: {reason:?}", row.hw_name(), row.polynomial_order(), row.split);
    }
    let h = ratio_histogram(&filtered.kept, 5);
    println!("kept {} rows, ratio histogram {:?}", filtered.kept.len(), h.counts);
    Ok(())
}
