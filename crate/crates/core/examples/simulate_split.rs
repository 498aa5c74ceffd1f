//! Issue timeline of a split inner product in the pipeline simulator.

use splitperf::hw::preset;
use splitperf::pipesim::{build_from_split, simulate_with, IssuePolicy, SimOptions};

fn main() -> splitperf::Result<()> {
    let hw = preset("a64fx").unwrap();
    let cfg = "3:3+3+2".parse()?;
    let dag = build_from_split(&cfg, 8)?;
    for policy in [IssuePolicy::InOrder, IssuePolicy::OldestReady] {
        let r = simulate_with(&dag, &hw, &SimOptions { policy, ..SimOptions::iterations(1) });
        println!("{policy:?}: {} cycles, {:.3} per FMA", r.total_cycles, r.avg_cycles_per_instr);
        println!("  issue cycles {:?}", r.per_instr_issue_cycle);
    }
    Ok(())
}
