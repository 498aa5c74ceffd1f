use proptest::prelude::*;
use splitperf::baselines::{self, EcmInputs};
use splitperf::depmodel::{self, DepStream};
use splitperf::hw::{preset, HardwareDescriptor, OverlapHypothesis, PRESET_NAMES};
use splitperf::kernel::{self, EnumMode, KernelSpec, SplitConfig};
use splitperf::pipesim::{self, InstrDag, Pattern};

fn presets() -> Vec<HardwareDescriptor> {
    PRESET_NAMES.iter().map(|n| preset(n).unwrap()).collect()
}

#[test]
fn split_extremes_bound_the_ratio() {
    for np in 1..=12u32 {
        let all = kernel::enumerate_splits(np, EnumMode::Compositions);
        let ratios: Vec<f64> = all.iter().map(|c| depmodel::ratio_of_split(c, np).unwrap()).collect();
        let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(depmodel::ratio_of_split(&SplitConfig::unsplit(np), np).unwrap(), hi);
        assert_eq!(depmodel::ratio_of_split(&SplitConfig::max_split(np), np).unwrap(), lo);
        assert!((lo - 1.0 / f64::from(np)).abs() < 1e-15);
    }
}

#[test]
fn chain_pattern_runs_at_latency() {
    for hw in presets() {
        let dag = pipesim::build_pattern(Pattern::D, 20).unwrap();
        for iters in [10, 25] {
            let r = pipesim::simulate(&dag, &hw, iters);
            assert_eq!(r.avg_cycles_per_instr, hw.fma_latency_cycles, "{}", hw.name);
        }
    }
}

#[test]
fn independent_pattern_approaches_throughput() {
    for hw in presets() {
        let dag = pipesim::build_pattern(Pattern::A, 1000).unwrap();
        let avg = pipesim::simulate(&dag, &hw, 1).avg_cycles_per_instr;
        assert!(avg >= hw.fma_throughput_cycles && avg <= hw.fma_throughput_cycles + 0.05, "{avg}");
    }
}

#[test]
fn analytical_estimate_bounds_simulation_from_above() {
    for hw in presets() {
        for p in Pattern::ALL {
            let dag = pipesim::build_pattern(p, 20).unwrap();
            let ratio = depmodel::ratio_of_stream(&dag.to_stream().unwrap());
            let model = depmodel::t_fma(ratio, &hw).unwrap();
            let sim = pipesim::simulate(&dag, &hw, 10).avg_cycles_per_instr;
            assert!(model + 1e-12 >= sim, "{} {p}: model {model} < sim {sim}", hw.name);
        }
    }
}

#[test]
fn ratio_one_measurement_below_estimate_is_out_of_range() {
    let hw = preset("xeon").unwrap();
    let spec = KernelSpec::new(15);
    let slowest = depmodel::estimate_with_ratio(&spec, 1.0, &hw).unwrap().gflops_per_core;
    let r = depmodel::retro_ratio(0.9 * slowest, &spec, &hw).unwrap();
    assert!(r.ratio > 1.0 && r.out_of_range());
}

fn arb_dag() -> impl Strategy<Value = InstrDag> {
    (2usize..40).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..3), n).prop_map(move |raw| {
            let preds = raw
                .into_iter()
                .enumerate()
                .map(|(i, picks)| {
                    if i == 0 {
                        return Vec::new();
                    }
                    let mut ps: Vec<u32> = picks.iter().map(|ix| ix.index(i) as u32).collect();
                    ps.sort_unstable();
                    ps.dedup();
                    ps
                })
                .collect();
            InstrDag::new(preds).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn t_fma_is_strictly_increasing_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        for hw in presets() {
            let (ta, tb) = (depmodel::t_fma(a, &hw).unwrap(), depmodel::t_fma(b, &hw).unwrap());
            if a < b {
                prop_assert!(ta < tb);
            }
            prop_assert!(ta >= hw.fma_throughput_cycles && ta <= hw.fma_latency_cycles);
        }
    }

    #[test]
    fn estimate_stays_between_throughput_and_latency(lengths in prop::collection::vec(1u32..5, 1..10)) {
        let cfg = SplitConfig::new(lengths).unwrap();
        let spec = KernelSpec::from_np(cfg.total());
        for hw in presets() {
            let e = depmodel::estimate(&spec, &cfg, &hw).unwrap();
            prop_assert!(e.t_fma_cycles >= hw.fma_throughput_cycles && e.t_fma_cycles <= hw.fma_latency_cycles);
            prop_assert!((0.0..=1.0).contains(&e.ratio));
        }
    }

    #[test]
    fn stream_ratio_is_longest_over_total(chains in prop::collection::vec(1u64..30, 1..8), extra in 0u64..20) {
        let total = chains.iter().sum::<u64>() + extra;
        let s = DepStream::new(total, chains.clone()).unwrap();
        let expected = *chains.iter().max().unwrap() as f64 / total as f64;
        prop_assert_eq!(depmodel::ratio_of_stream(&s), expected);
    }

    #[test]
    fn adding_an_edge_never_speeds_up(dag in arb_dag(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let n = dag.len();
        let (x, y) = (a.index(n), b.index(n));
        prop_assume!(x != y);
        let (from, to) = (x.min(y), x.max(y));
        let mut more = dag.clone();
        more.add_edge(from, to).unwrap();
        for hw in presets() {
            let before = pipesim::simulate(&dag, &hw, 2);
            let after = pipesim::simulate(&more, &hw, 2);
            prop_assert!(after.total_cycles >= before.total_cycles);
            prop_assert_eq!(before.clone(), pipesim::simulate(&dag, &hw, 2));
            let floor = (n as f64 * 2.0 * hw.fma_throughput_cycles).ceil();
            prop_assert!(before.total_cycles >= floor);
        }
    }

    #[test]
    fn roofline_never_exceeds_peak_and_is_monotone(
        ai in 0.0f64..100.0, peak in 0.1f64..200.0, bw in 0.1f64..500.0, bump in 0.0f64..10.0,
    ) {
        let r = baselines::roofline_gflops(ai, peak, bw);
        prop_assert!(r <= peak);
        prop_assert!(baselines::roofline_gflops(ai + bump, peak, bw) >= r);
        prop_assert!(baselines::roofline_gflops(ai, peak + bump, bw) >= r);
        prop_assert!(baselines::roofline_gflops(ai, peak, bw + bump) >= r);
    }

    #[test]
    fn ecm_is_scale_invariant(
        t in prop::array::uniform7(0.0f64..1e4), work in 1.0f64..1e6, k in 0.5f64..8.0, cl in any::<bool>(),
    ) {
        let mut hw = preset("a64fx").unwrap();
        let (l3_rd, l3_wr) = if cl {
            hw.overlap_hypothesis = OverlapHypothesis::CascadeLakeStyle;
            (Some(t[5]), Some(t[6]))
        } else {
            (None, None)
        };
        let inp = EcmInputs {
            t_c_ol: t[0] + 1.0, t_l1_ld: t[1], t_l1_st: t[2], t_l2: t[3],
            t_l3_rd: l3_rd, t_l3_wr: l3_wr, t_mem: t[4], work_flops: work,
        };
        let scaled = EcmInputs {
            t_c_ol: inp.t_c_ol * k, t_l1_ld: inp.t_l1_ld * k, t_l1_st: inp.t_l1_st * k, t_l2: inp.t_l2 * k,
            t_l3_rd: inp.t_l3_rd.map(|v| v * k), t_l3_wr: inp.t_l3_wr.map(|v| v * k),
            t_mem: inp.t_mem * k, work_flops: inp.work_flops * k,
        };
        let (g, gs) = (baselines::ecm_gflops(&inp, &hw).unwrap(), baselines::ecm_gflops(&scaled, &hw).unwrap());
        prop_assert!((g - gs).abs() <= 1e-12 * g);
        if !cl {
            let tt = baselines::ecm_transfer_time(&inp, hw.overlap_hypothesis).unwrap();
            prop_assert!(tt >= inp.t_mem && tt >= inp.t_l1_ld);
        }
    }
}
