//! Cycle-level simulator of dependent FMA streams on identical pipelined FPUs.
//!
//! Each FPU accepts one instruction every `throughput * fpu_count` cycles, so
//! the aggregate issue rate is one instruction per `throughput` cycles. An
//! instruction may issue once every predecessor issued at least `latency`
//! cycles earlier. Times are tracked as `f64` cycles so fractional per-unit
//! intervals are representable.
//!
//! Two issue policies are available. [`IssuePolicy::InOrder`] issues in program
//! order, several instructions per cycle when units are free; adding a
//! dependency can only delay it. [`IssuePolicy::OldestReady`] is a greedy list
//! scheduler that issues the oldest ready instruction; it overlaps more, but
//! like any list scheduler it can finish earlier after an edge is added.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depmodel::DepStream;
use crate::error::{Error, Result};
use crate::hw::HardwareDescriptor;
use crate::kernel::SplitConfig;

/// Instruction DAG in program order: every predecessor id is smaller than its
/// successor's id, which also rules out cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrDag {
    preds: Vec<Vec<u32>>,
}

impl InstrDag {
    pub fn new(preds: Vec<Vec<u32>>) -> Result<Self> {
        for (i, ps) in preds.iter().enumerate() {
            if let Some(&p) = ps.iter().find(|&&p| p as usize >= i) {
                return Err(Error::InvalidArgument(format!(
                    "instruction {i} depends on {p}; predecessors must precede their successors"
                )));
            }
        }
        Ok(Self { preds })
    }

    /// Independent serial chains, interleaved round-robin in program order
    /// (the first instruction of every chain, then the second, ...), the way
    /// unrolled code with separate accumulators is scheduled.
    pub fn from_chains(lengths: &[usize]) -> Self {
        let total = lengths.iter().sum();
        let mut preds = Vec::with_capacity(total);
        let mut tail: Vec<Option<u32>> = vec![None; lengths.len()];
        let longest = lengths.iter().copied().max().unwrap_or(0);
        for step in 0..longest {
            for (c, &len) in lengths.iter().enumerate() {
                if step < len {
                    let id = preds.len() as u32;
                    preds.push(tail[c].map(|t| vec![t]).unwrap_or_default());
                    tail[c] = Some(id);
                }
            }
        }
        Self { preds }
    }

    /// Ids of the last instruction of each chain built by [`InstrDag::from_chains`].
    fn chain_tails(lengths: &[usize]) -> Vec<u32> {
        let longest = lengths.iter().copied().max().unwrap_or(0);
        let mut tails = vec![0u32; lengths.len()];
        let mut id = 0u32;
        for step in 0..longest {
            for (c, &len) in lengths.iter().enumerate() {
                if step < len {
                    tails[c] = id;
                    id += 1;
                }
            }
        }
        tails
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn preds(&self, node: usize) -> &[u32] {
        &self.preds[node]
    }

    pub fn edge_count(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    /// Adds `from -> to`. Returns `false` if the edge already existed.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<bool> {
        if from >= to || to >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "edge {from} -> {to} must go forward within {} nodes",
                self.len()
            )));
        }
        let ps = &mut self.preds[to];
        if ps.contains(&(from as u32)) {
            return Ok(false);
        }
        ps.push(from as u32);
        ps.sort_unstable();
        Ok(true)
    }

    /// Weakly connected component of each node, numbered by first appearance.
    fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, ps) in self.preds.iter().enumerate() {
            for &p in ps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, p as usize));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut comp = vec![0; n];
        for (i, c) in comp.iter_mut().enumerate() {
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            *c = label[r];
        }
        comp
    }

    /// Longest path (in instructions) within each connected component.
    pub fn chain_lengths(&self) -> Vec<u64> {
        let comp = self.components();
        let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
        let mut depth = vec![0u64; self.len()];
        let mut longest = vec![0u64; ncomp];
        for i in 0..self.len() {
            depth[i] = 1 + self.preds[i].iter().map(|&p| depth[p as usize]).max().unwrap_or(0);
            longest[comp[i]] = longest[comp[i]].max(depth[i]);
        }
        longest
    }

    pub fn to_stream(&self) -> Result<DepStream> {
        DepStream::new(self.len() as u64, self.chain_lengths())
    }
}

/// Microbenchmark dependency patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    /// All instructions independent.
    A,
    /// Two chains of `ns/2`.
    B,
    /// One chain of `3ns/4` plus `ns/4` independent instructions.
    C,
    /// One chain over the whole stream.
    D,
    /// Chains of `3ns/5` and `2ns/5`.
    E,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [Pattern::A, Pattern::B, Pattern::C, Pattern::D, Pattern::E];
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Pattern::A),
            "B" => Ok(Pattern::B),
            "C" => Ok(Pattern::C),
            "D" => Ok(Pattern::D),
            "E" => Ok(Pattern::E),
            other => Err(Error::InvalidArgument(format!("unknown pattern '{other}'"))),
        }
    }
}

pub fn build_pattern(p: Pattern, ns: usize) -> Result<InstrDag> {
    let bad = |need: &str| {
        Err(Error::InvalidArgument(format!(
            "pattern {p} needs ns {need}, got {ns}"
        )))
    };
    if ns == 0 {
        return bad(">= 1");
    }
    let chains = match p {
        Pattern::A => vec![1; ns],
        Pattern::B => {
            if !ns.is_multiple_of(2) {
                return bad("divisible by 2");
            }
            vec![ns / 2, ns / 2]
        }
        Pattern::C => {
            if !ns.is_multiple_of(4) {
                return bad("divisible by 4");
            }
            let mut v = vec![3 * ns / 4];
            v.extend(std::iter::repeat_n(1, ns / 4));
            v
        }
        Pattern::D => vec![ns],
        Pattern::E => {
            if !ns.is_multiple_of(5) {
                return bad("divisible by 5");
            }
            vec![3 * ns / 5, 2 * ns / 5]
        }
    };
    Ok(InstrDag::from_chains(&chains))
}

/// One serial chain per split, in split order.
pub fn build_from_split(cfg: &SplitConfig, np: u32) -> Result<InstrDag> {
    build_from_split_with(cfg, np, false)
}

/// With `accumulate`, appends a balanced reduction tree over the chain tails.
pub fn build_from_split_with(cfg: &SplitConfig, np: u32, accumulate: bool) -> Result<InstrDag> {
    cfg.check(np)?;
    let lengths: Vec<usize> = cfg.lengths().iter().map(|&l| l as usize).collect();
    let mut dag = InstrDag::from_chains(&lengths);
    if accumulate && lengths.len() > 1 {
        let mut level = InstrDag::chain_tails(&lengths);
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            for pair in level.chunks(2) {
                if pair.len() == 2 {
                    let id = dag.preds.len() as u32;
                    dag.preds.push(pair.to_vec());
                    next.push(id);
                } else {
                    next.push(pair[0]);
                }
            }
            level = next;
        }
    }
    Ok(dag)
}

/// How replicated iterations of the DAG relate to one another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationCoupling {
    /// No data flows between iterations; iteration `k+1` starts once every
    /// instruction of iteration `k` has completed.
    #[default]
    Barrier,
    /// No data flows and no ordering; iterations overlap freely. Combine with
    /// a finite reservation station to bound the overlap.
    Independent,
    /// Each chain continues into the next iteration, as when accumulators are
    /// kept in the same registers across loop trips.
    LoopCarried,
}

impl FromStr for IterationCoupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "barrier" => Ok(Self::Barrier),
            "independent" => Ok(Self::Independent),
            "loop_carried" => Ok(Self::LoopCarried),
            other => Err(Error::InvalidArgument(format!("unknown iteration coupling '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuePolicy {
    /// Program order, up to one instruction per free unit per cycle.
    #[default]
    InOrder,
    /// Oldest ready instruction first, unbounded lookahead (or bounded by the
    /// reservation station when enabled).
    OldestReady,
}

impl FromStr for IssuePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "in_order" | "inorder" => Ok(Self::InOrder),
            "oldest_ready" | "ooo" => Ok(Self::OldestReady),
            other => Err(Error::InvalidArgument(format!("unknown issue policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub iterations: usize,
    pub policy: IssuePolicy,
    pub coupling: IterationCoupling,
    /// Bound in-flight instructions by the descriptor's reservation station.
    pub finite_reservation_station: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            iterations: 1,
            policy: IssuePolicy::InOrder,
            coupling: IterationCoupling::Barrier,
            finite_reservation_station: false,
        }
    }
}

impl SimOptions {
    pub fn iterations(iterations: usize) -> Self {
        Self {
            iterations,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub instructions: usize,
    pub total_cycles: f64,
    pub avg_cycles_per_instr: f64,
    pub per_instr_issue_cycle: Vec<f64>,
}

pub fn simulate(dag: &InstrDag, hw: &HardwareDescriptor, iterations: usize) -> SimResult {
    simulate_with(dag, hw, &SimOptions::iterations(iterations))
}

pub fn simulate_with(dag: &InstrDag, hw: &HardwareDescriptor, opts: &SimOptions) -> SimResult {
    let iterations = opts.iterations.max(1);
    let n = dag.len();
    let window = if opts.finite_reservation_station {
        hw.reservation_station_entries.map(|r| r.max(1) as usize)
    } else {
        None
    };
    let mut machine = Machine {
        units: vec![0.0; hw.fpu_count.max(1) as usize],
        interval: hw.fma_throughput_cycles * f64::from(hw.fpu_count.max(1)),
        latency: hw.fma_latency_cycles,
        clock: 0.0,
        window,
        policy: opts.policy,
    };

    let mut issue = Vec::with_capacity(n * iterations);
    let mut total = 0.0f64;
    match opts.coupling {
        IterationCoupling::Barrier => {
            let mut floor = 0.0;
            for _ in 0..iterations {
                let (times, done) = machine.run(&dag.preds, floor);
                issue.extend(times);
                floor = done;
            }
            total = floor;
        }
        IterationCoupling::Independent | IterationCoupling::LoopCarried => {
            let carried = opts.coupling == IterationCoupling::LoopCarried;
            let preds = replicate(dag, iterations, carried);
            let (times, done) = machine.run(&preds, 0.0);
            issue = times;
            total = total.max(done);
        }
    }

    let count = n * iterations;
    SimResult {
        instructions: count,
        total_cycles: total,
        avg_cycles_per_instr: if count == 0 { 0.0 } else { total / count as f64 },
        per_instr_issue_cycle: issue,
    }
}

/// Unrolls the DAG `iterations` times. With `carried`, each source of a
/// component depends on that component's sinks in the previous iteration.
fn replicate(dag: &InstrDag, iterations: usize, carried: bool) -> Vec<Vec<u32>> {
    let n = dag.len();
    let comp = dag.components();
    let mut has_succ = vec![false; n];
    for ps in &dag.preds {
        for &p in ps {
            has_succ[p as usize] = true;
        }
    }
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut sinks: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for i in 0..n {
        if !has_succ[i] {
            sinks[comp[i]].push(i as u32);
        }
    }
    let mut out = Vec::with_capacity(n * iterations);
    for it in 0..iterations {
        let base = (it * n) as u32;
        for i in 0..n {
            let mut ps: Vec<u32> = dag.preds[i].iter().map(|&p| p + base).collect();
            if carried && it > 0 && dag.preds[i].is_empty() {
                let prev = base - n as u32;
                ps.extend(sinks[comp[i]].iter().map(|&s| s + prev));
            }
            out.push(ps);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cycle(f64);

impl Eq for Cycle {}

impl PartialOrd for Cycle {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cycle {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Machine {
    /// Next cycle at which each unit accepts an instruction.
    units: Vec<f64>,
    interval: f64,
    latency: f64,
    clock: f64,
    window: Option<usize>,
    policy: IssuePolicy,
}

impl Machine {
    /// Schedules one block of instructions; nothing issues before `floor`.
    /// Returns issue cycles and the cycle at which the last result is ready.
    fn run(&mut self, preds: &[Vec<u32>], floor: f64) -> (Vec<f64>, f64) {
        match self.policy {
            IssuePolicy::InOrder => self.run_in_order(preds, floor),
            IssuePolicy::OldestReady => self.run_oldest_ready(preds, floor),
        }
    }

    fn next_unit(&self) -> (usize, f64) {
        let (unit, &free) = self
            .units
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one unit");
        (unit, free)
    }

    fn run_in_order(&mut self, preds: &[Vec<u32>], floor: f64) -> (Vec<f64>, f64) {
        let mut issue = Vec::with_capacity(preds.len());
        let mut complete: Vec<f64> = Vec::with_capacity(preds.len());
        let mut done = floor;
        for ps in preds {
            let (unit, free) = self.next_unit();
            let operands = ps.iter().map(|&p| complete[p as usize]).fold(floor, f64::max);
            let t = self.clock.max(free).max(operands);
            self.clock = t;
            self.units[unit] = t + self.interval;
            issue.push(t);
            complete.push(t + self.latency);
            done = done.max(t + self.latency);
        }
        (issue, done)
    }

    fn run_oldest_ready(&mut self, preds: &[Vec<u32>], floor: f64) -> (Vec<f64>, f64) {
        let m = preds.len();
        let mut succs: Vec<Vec<u32>> = vec![Vec::new(); m];
        let mut remaining: Vec<usize> = Vec::with_capacity(m);
        for (i, ps) in preds.iter().enumerate() {
            remaining.push(ps.len());
            for &p in ps {
                succs[p as usize].push(i as u32);
            }
        }
        let mut ready_at = vec![floor; m];
        let mut issue = vec![0.0; m];
        let mut done = floor;

        // Instructions enter the window in program order and leave it on issue.
        let mut entered = self.window.map_or(m, |w| w.min(m));
        let mut pending: BinaryHeap<Reverse<(Cycle, u32)>> = BinaryHeap::new();
        let mut ready: BinaryHeap<Reverse<u32>> = BinaryHeap::new();
        for i in 0..entered {
            if remaining[i] == 0 {
                pending.push(Reverse((Cycle(ready_at[i]), i as u32)));
            }
        }

        for issued in 0..m {
            let (unit, free) = self.next_unit();
            let mut t = self.clock.max(free).max(floor);
            while let Some(&Reverse((Cycle(at), id))) = pending.peek() {
                if at > t {
                    break;
                }
                pending.pop();
                ready.push(Reverse(id));
            }
            if ready.is_empty() {
                let Reverse((Cycle(at), id)) = pending.pop().expect("topological order guarantees progress");
                t = at;
                ready.push(Reverse(id));
                while let Some(&Reverse((Cycle(at), id))) = pending.peek() {
                    if at > t {
                        break;
                    }
                    pending.pop();
                    ready.push(Reverse(id));
                }
            }
            let Reverse(id) = ready.pop().expect("ready is non-empty");
            let i = id as usize;
            issue[i] = t;
            self.clock = t;
            self.units[unit] = t + self.interval;
            let complete = t + self.latency;
            done = done.max(complete);
            for &s in &succs[i] {
                let s = s as usize;
                remaining[s] -= 1;
                ready_at[s] = ready_at[s].max(complete);
                if remaining[s] == 0 && s < entered {
                    pending.push(Reverse((Cycle(ready_at[s]), s as u32)));
                }
            }
            if let Some(w) = self.window {
                let limit = (issued + 1 + w).min(m);
                for j in entered..limit {
                    ready_at[j] = ready_at[j].max(t);
                    if remaining[j] == 0 {
                        pending.push(Reverse((Cycle(ready_at[j]), j as u32)));
                    }
                }
                entered = entered.max(limit);
            }
        }
        (issue, done)
    }
}
