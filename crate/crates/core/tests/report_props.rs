use splitperf::dataset::SampleRow;
use splitperf::depmodel;
use splitperf::desk::{self, DeskConfig};
use splitperf::gbt::{self, SearchSpace, TrainConfig, TrainingSet};
use splitperf::hw::preset;
use splitperf::kernel::{self, EnumMode, KernelSpec};
use splitperf::report::{self, CompareReport, EcmSource};

fn small_desk(min_order: u32, max_order: u32) -> DeskConfig {
    DeskConfig {
        min_order,
        max_order,
        n_candidates: 1,
        space: SearchSpace::point(&TrainConfig {
            n_trees: 60,
            ..TrainConfig::default()
        }),
        ..DeskConfig::default()
    }
}

#[test]
fn group_mape_is_recomputable_from_the_rows_csv() {
    let machines = [preset("a64fx").unwrap(), preset("xeon").unwrap()];
    let out = desk::run(&machines, &small_desk(1, 6)).unwrap();
    let rows = CompareReport::parse_rows_csv(&out.report.rows_csv().unwrap()).unwrap();
    assert_eq!(rows, out.report.rows);
    for g in &out.report.groups {
        let members: Vec<_> = rows.iter().filter(|r| r.hw == g.hw && r.p == g.p).collect();
        assert_eq!(members.len(), g.rows);
        let truth: Vec<f64> = members.iter().map(|r| r.measured_gflops).collect();
        let learned: Vec<f64> = members.iter().map(|r| r.learned_gflops).collect();
        let roof: Vec<f64> = members.iter().map(|r| r.roofline_gflops.unwrap()).collect();
        let ecm: Vec<f64> = members.iter().map(|r| r.ecm_gflops.unwrap()).collect();
        assert!((gbt::mape(&learned, &truth).unwrap() - g.mape_learned).abs() <= 1e-9);
        assert!((gbt::mape(&roof, &truth).unwrap() - g.mape_roofline.unwrap()).abs() <= 1e-9);
        assert!((gbt::mape(&ecm, &truth).unwrap() - g.mape_ecm.unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn footprint_excluded_orders_are_reported_as_extrapolated() {
    let machines = [preset("xeon").unwrap()];
    let out = desk::run(&machines, &small_desk(13, 15)).unwrap();
    assert_eq!(out.summary.excluded_footprint, vec![("xeon-gold-6230".to_string(), 15)]);
    let g15 = out.report.groups.iter().find(|g| g.p == 15).unwrap();
    assert!(g15.extrapolated);
    assert_eq!(g15.rows, kernel::enumerate_splits(16, EnumMode::Partitions).len());
    assert!(out.report.groups.iter().filter(|g| g.p != 15).all(|g| !g.extrapolated));
}

#[test]
fn model_on_analytical_data_has_zero_error() {
    let hw = preset("a64fx").unwrap();
    let mut rows = Vec::new();
    for p in 1..=6 {
        let spec = KernelSpec::new(p);
        for cfg in kernel::enumerate_splits(spec.np, EnumMode::Partitions) {
            let g = depmodel::estimate(&spec, &cfg, &hw).unwrap().gflops_per_core;
            rows.push(SampleRow::new(hw.clone(), spec, cfg, g, None).unwrap());
        }
    }
    let model = gbt::train(&TrainingSet::from_rows(&rows), &TrainConfig::default()).unwrap();
    let report = report::build_report(&rows, &model, &EcmSource::Unavailable).unwrap();
    for g in &report.groups {
        assert!(g.mape_learned < 1e-9, "P={} {}", g.p, g.mape_learned);
        assert_eq!(g.mape_ecm, None);
    }
}
