//! Trains the ratio learner on simulated rows, saves it, and predicts unseen splits.

use splitperf::desk::{generate_rows, DeskConfig};
use splitperf::gbt::{self, GbtModel, TrainConfig, TrainingSet};
use splitperf::hw::preset;
use splitperf::kernel::{KernelSpec, SplitConfig};

fn main() -> splitperf::Result<()> {
    let machines = [preset("a64fx").unwrap(), preset("xeon-gold-6230").unwrap()];
    let cfg = DeskConfig { max_order: 10, sigma: 0.02, ..DeskConfig::default() };
    // Hold out P=7 entirely.
    let rows: Vec<_> = generate_rows(&machines, &cfg)?
        .into_iter()
        .filter(|r| r.polynomial_order() != 7)
        .collect();
    let set = TrainingSet::from_rows(&rows);
    let model = gbt::train(&set, &TrainConfig { n_trees: 300, max_depth: 5, ..TrainConfig::default() })?;

    let path = std::env::temp_dir().join("splitperf_example_model.json");
    model.save(&path)?;
    let model = GbtModel::load(&path)?;
    println!("trained on {} rows; top features:", rows.len());
    for (name, share) in model.ranked_importances().into_iter().take(5) {
        println!("  {name:<20} {share:.3}");
    }

    let spec = KernelSpec::new(7);
    for hw in &machines {
        for split in [SplitConfig::unsplit(spec.np), "2:4+4".parse()?, SplitConfig::max_split(spec.np)] {
            println!(
                "{:<16} P=7 {:<18} predicted {:>6.2} GFLOPS/core (trained on P=7: {})",
                hw.name,
                split.to_string(),
                gbt::predict_gflops(&model, &spec, &split, hw)?,
                model.trained_on(&hw.name, 7)
            );
        }
    }
    Ok(())
}
