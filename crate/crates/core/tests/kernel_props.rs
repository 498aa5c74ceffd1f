use proptest::prelude::*;
use splitperf::kernel::{self, Dialect, EnumMode, KernelSpec, SplitConfig};

fn partition_count(n: u32) -> usize {
    // p(n) by the coin-change recurrence, independent of the enumerator.
    let n = n as usize;
    let mut p = vec![0usize; n + 1];
    p[0] = 1;
    for part in 1..=n {
        for m in part..=n {
            p[m] += p[m - part];
        }
    }
    p[n]
}

#[test]
fn composition_counts_are_powers_of_two() {
    for np in 1..=12u32 {
        assert_eq!(kernel::enumerate_splits(np, EnumMode::Compositions).len(), 1 << (np - 1), "np={np}");
    }
}

#[test]
fn partition_counts_match_recurrence() {
    for np in 1..=16u32 {
        assert_eq!(kernel::enumerate_splits(np, EnumMode::Partitions).len(), partition_count(np), "np={np}");
    }
    assert_eq!(partition_count(8), 22);
}

#[test]
fn enumerated_configs_are_valid_and_distinct() {
    for np in 1..=10u32 {
        for mode in [EnumMode::Partitions, EnumMode::Compositions] {
            let all = kernel::enumerate_splits(np, mode);
            for c in &all {
                assert_eq!(c.total(), np);
                c.check(np).unwrap();
            }
            let mut seen: Vec<_> = all.iter().map(|c| c.lengths().to_vec()).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), all.len());
        }
    }
}

#[test]
fn listing_example_has_three_temporaries() {
    let spec = KernelSpec::new(7);
    let cfg: SplitConfig = "3:3+3+2".parse().unwrap();
    let src = kernel::emit_kernel_source(&spec, &cfg, Dialect::Fortran).unwrap();
    assert!(src.contains("q_tmp(i,j,k) = tmp1 + tmp2 + tmp3"));
    let bad = SplitConfig::new(vec![3, 2]).unwrap();
    assert!(kernel::emit_kernel_source(&KernelSpec::new(3), &bad, Dialect::C).is_err());
}

fn arb_split() -> impl Strategy<Value = (u32, SplitConfig)> {
    prop::collection::vec(1u32..6, 1..8).prop_map(|lengths| {
        let np = lengths.iter().sum();
        (np, SplitConfig::new(lengths).unwrap())
    })
}

proptest! {
    #[test]
    fn split_text_round_trips((_, cfg) in arb_split()) {
        let back: SplitConfig = cfg.to_string().parse().unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn emitted_source_has_one_temporary_per_split_and_np_terms(
        (np, cfg) in arb_split(),
        c_like in any::<bool>(),
    ) {
        prop_assume!(np >= 1);
        let spec = KernelSpec::from_np(np);
        let dialect = if c_like { Dialect::C } else { Dialect::Fortran };
        let src = kernel::emit_kernel_source(&spec, &cfg, dialect).unwrap();
        let products = src.matches("mat").count();
        prop_assert_eq!(products, np as usize);
        let temporaries = src.lines().filter(|l| l.contains(" tmp") && l.contains(" = ") && l.contains("mat")).count();
        let expected = if cfg.split_count() == 1 { 0 } else { cfg.split_count() };
        prop_assert_eq!(temporaries, expected);
        prop_assert_eq!(src.clone(), kernel::emit_kernel_source(&spec, &cfg, dialect).unwrap());
    }

    #[test]
    fn flops_are_linear_in_elements_and_directions(p in 1u32..16, e in 1u64..1000, d in 1u32..=3) {
        let one = KernelSpec::new(p).with_elements(1).with_directions(1);
        let spec = KernelSpec::new(p).with_elements(e).with_directions(d);
        prop_assert_eq!(kernel::flops(&spec), kernel::flops(&one) * e * u64::from(d));
        let np = u64::from(p + 1);
        prop_assert_eq!(kernel::flops(&one), 2 * np.pow(4));
    }
}
