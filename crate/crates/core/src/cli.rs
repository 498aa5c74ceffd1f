//! Command-line workflows.
//!
//! Every subcommand writes its structured output (CSV or JSON lines) to the
//! given writer, or to `--out` where it produces files. [`main_with`] maps
//! errors to a one-line diagnostic and a nonzero exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::baselines::{self, EcmTable};
use crate::dataset::{self, FilterPolicy, SampleRow};
use crate::depmodel;
use crate::desk::{self, DeskConfig};
use crate::error::{Error, Result};
use crate::gbt::{self, GbtModel, SearchSpace, TrainConfig, TrainingSet};
use crate::hw::{self, HardwareDescriptor, HardwareRegistry};
use crate::kernel::{self, Dialect, EnumMode, KernelSpec, SplitConfig};
use crate::pipesim::{self, IssuePolicy, IterationCoupling, Pattern, SimOptions};
use crate::report::{self, CompareReport, EcmSource};

#[derive(Debug, Parser)]
#[command(name = "splitperf", version, about = "Dependency-chain performance models for split tensor kernels")]
pub struct Cli {
    /// Hardware preset name or descriptor file; repeat for several machines.
    /// Defaults to every bundled preset.
    #[arg(long, global = true)]
    pub hw: Vec<String>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output file, or output directory for commands that write several files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List split configurations with their analytical ratio and GFLOPS.
    Enumerate {
        #[arg(short = 'p', long = "order")]
        p: u32,
        #[arg(long, default_value = "partitions")]
        mode: EnumMode,
    },
    /// Print the kernel source for one split configuration.
    GenKernel {
        #[arg(short = 'p', long = "order")]
        p: u32,
        /// `N:l1+l2+...`; defaults to the unsplit loop.
        #[arg(long)]
        split: Option<SplitConfig>,
        #[arg(long, default_value = "fortran")]
        dialect: Dialect,
    },
    /// Run the pipeline simulator on a pattern or a split; one JSON line per machine.
    Simulate(SimulateArgs),
    /// Analytical estimate; one JSON line per machine.
    Estimate {
        #[arg(short = 'p', long = "order")]
        p: u32,
        #[arg(long)]
        split: Option<SplitConfig>,
        /// Use this ratio instead of the split's analytical one.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, default_value_t = 1)]
        elements: u64,
    },
    /// Read a measurement CSV and emit each row's ratio and filter status.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Filter, split, search and train; writes model.json, train.csv, test.csv into --out.
    Train(TrainArgs),
    /// Predict ratio and GFLOPS for one configuration; one JSON line per machine.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(short = 'p', long = "order")]
        p: u32,
        #[arg(long)]
        split: SplitConfig,
    },
    /// Learning-augmented MAPE per (hw, P) on a dataset; JSON lines.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare the learned model with Roofline and ECM on a dataset.
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// ECM inputs JSON (one object or an array with optional hw/P keys).
        #[arg(long, conflicts_with = "derive_ecm")]
        ecm: Option<PathBuf>,
        /// Derive ECM inputs from the descriptors' bandwidths.
        #[arg(long)]
        derive_ecm: bool,
    },
    /// Simulate, ingest, filter, search, train and compare end to end.
    DeskPipeline {
        #[arg(long, default_value_t = 0.03)]
        sigma: f64,
        #[arg(long, default_value_t = 15)]
        max_order: u32,
        #[arg(long, default_value_t = 6)]
        candidates: usize,
        #[arg(long, default_value_t = 3)]
        folds: usize,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, conflicts_with = "split", required_unless_present = "split")]
    pub pattern: Option<Pattern>,
    #[arg(long, requires = "p")]
    pub split: Option<SplitConfig>,
    /// Polynomial order, needed with --split.
    #[arg(short = 'p', long = "order")]
    pub p: Option<u32>,
    #[arg(long, default_value_t = 20)]
    pub ns: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value = "in_order")]
    pub policy: IssuePolicy,
    #[arg(long, default_value = "barrier")]
    pub coupling: IterationCoupling,
    /// Bound in-flight instructions by the reservation station size.
    #[arg(long)]
    pub finite_rs: bool,
    /// Also print the issue cycle of every instruction.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Compare the state-array working set against L1 itself.
    #[arg(long)]
    pub strict_l1: bool,
    /// Keep rows whose ratio falls outside [0, 1].
    #[arg(long)]
    pub keep_out_of_range: bool,
}

impl FilterArgs {
    fn policy(&self) -> FilterPolicy {
        let base = if self.strict_l1 {
            FilterPolicy::strict_l1()
        } else {
            FilterPolicy::default()
        };
        FilterPolicy {
            ratio_range: !self.keep_out_of_range,
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Random-search candidates; 0 trains the fixed configuration below.
    #[arg(long, default_value_t = 6)]
    pub candidates: usize,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 300)]
    pub trees: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    pub subsample: f64,
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let _ = writeln!(stderr, "{}", line.trim());
            return 2;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let machines = machines(&cli.hw)?;
    match &cli.command {
        Command::Enumerate { p, mode } => emit(cli, out, &enumerate_csv(*p, *mode, &machines)?),
        Command::GenKernel { p, split, dialect } => {
            let spec = spec_for(*p)?;
            let cfg = split.clone().unwrap_or_else(|| SplitConfig::unsplit(spec.np));
            emit(cli, out, &kernel::emit_kernel_source(&spec, &cfg, *dialect)?)
        }
        Command::Simulate(args) => emit(cli, out, &simulate_lines(args, &machines)?),
        Command::Estimate {
            p,
            split,
            ratio,
            elements,
        } => {
            let spec = spec_for(*p)?.with_elements(*elements);
            let cfg = split.clone().unwrap_or_else(|| SplitConfig::unsplit(spec.np));
            let mut text = String::new();
            for hw in &machines {
                let est = match ratio {
                    Some(r) => depmodel::estimate_with_ratio(&spec, *r, hw)?,
                    None => depmodel::estimate(&spec, &cfg, hw)?,
                };
                let cores = hw.cores.unwrap_or(1);
                let line = json!({
                    "hw": hw.name,
                    "P": p,
                    "split": if ratio.is_some() { None } else { Some(cfg.to_string()) },
                    "ratio": est.ratio,
                    "t_fma_cycles": est.t_fma_cycles,
                    "t_kernel_cycles": est.t_kernel_cycles,
                    "gflops_per_core": est.gflops_per_core,
                    "roofline_gflops": baselines::roofline_for(&spec, hw, cores),
                    "ecm_gflops": baselines::derive_ecm_inputs(&spec, hw, cores)
                        .and_then(|inp| baselines::ecm_gflops(&inp, hw))
                        .ok(),
                });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            emit(cli, out, &text)
        }
        Command::Ingest { data, filter } => {
            let rows = dataset::ingest_csv(data, &registry(&machines))?;
            emit(cli, out, &ingest_csv_text(&rows, &filter.policy())?)
        }
        Command::Train(args) => train(cli, args, &machines, out),
        Command::Predict { model, p, split } => {
            let model = GbtModel::load(model)?;
            let spec = spec_for(*p)?;
            let mut text = String::new();
            for hw in &machines {
                let features = dataset::encode_features(&spec, split, kernel::flops(&spec), hw);
                let line = json!({
                    "hw": hw.name,
                    "P": p,
                    "split": split.to_string(),
                    "ratio": gbt::predict_ratio(&model, &features)?,
                    "gflops_per_core": gbt::predict_gflops(&model, &spec, split, hw)?,
                    "extrapolated": !model.trained_on(&hw.name, *p),
                });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            emit(cli, out, &text)
        }
        Command::Evaluate { model, data } => {
            let model = GbtModel::load(model)?;
            let rows = dataset::ingest_csv(data, &registry(&machines))?;
            let report = report::build_report(&rows, &model, &EcmSource::Unavailable)?;
            let mut text = String::new();
            for g in &report.groups {
                let line = json!({
                    "hw": g.hw,
                    "P": g.p,
                    "rows": g.rows,
                    "mape_learned": g.mape_learned,
                    "extrapolated": g.extrapolated,
                });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            emit(cli, out, &text)
        }
        Command::Compare {
            model,
            data,
            ecm,
            derive_ecm,
        } => {
            let model = GbtModel::load(model)?;
            let rows = dataset::ingest_csv(data, &registry(&machines))?;
            let source = match (ecm, derive_ecm) {
                (Some(path), _) => EcmSource::Table(EcmTable::load(path)?),
                (None, true) => EcmSource::Derived,
                (None, false) => EcmSource::Unavailable,
            };
            let report = report::build_report(&rows, &model, &source)?;
            compare_output(cli, &report, out)
        }
        Command::DeskPipeline {
            sigma,
            max_order,
            candidates,
            folds,
        } => {
            let cfg = DeskConfig {
                seed: cli.seed,
                sigma: *sigma,
                max_order: *max_order,
                n_candidates: *candidates,
                k_folds: *folds,
                ..DeskConfig::default()
            };
            let outcome = desk::run(&machines, &cfg)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("desk_out"));
            desk::write_artifacts(&outcome, &dir)?;
            write_all(out, outcome.report.table().as_bytes())
        }
    }
}

fn machines(names: &[String]) -> Result<Vec<HardwareDescriptor>> {
    if names.is_empty() {
        return Ok(hw::PRESET_NAMES.iter().filter_map(|n| hw::preset(n)).collect());
    }
    names.iter().map(|n| hw::resolve(n)).collect()
}

/// Presets plus the selected machines, so data files may name either.
fn registry(machines: &[HardwareDescriptor]) -> HardwareRegistry {
    let mut reg = HardwareRegistry::with_presets();
    for hw in machines {
        reg.insert(hw.clone());
    }
    reg
}

fn spec_for(p: u32) -> Result<KernelSpec> {
    let spec = KernelSpec::new(p);
    spec.validate()?;
    Ok(spec)
}

fn write_all(out: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    out.write_all(bytes).map_err(|e| Error::io("<stdout>", e))
}

/// Writes to `--out` when given, otherwise to `out`.
fn emit(cli: &Cli, out: &mut dyn Write, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => write_all(out, text.as_bytes()),
    }
}

/// Rows sorted by estimated GFLOPS, descending; ties go to fewer splits, then
/// lexicographically smaller lengths.
pub fn enumerate_csv(p: u32, mode: EnumMode, machines: &[HardwareDescriptor]) -> Result<String> {
    let spec = spec_for(p)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["hw", "P", "split", "split_count", "ratio", "t_fma_cycles", "gflops_per_core"])?;
    for hw in machines {
        let mut rows = Vec::new();
        for cfg in kernel::enumerate_splits(spec.np, mode) {
            let est = depmodel::estimate(&spec, &cfg, hw)?;
            rows.push((cfg, est));
        }
        rows.sort_by(|(ca, ea), (cb, eb)| {
            eb.gflops_per_core
                .total_cmp(&ea.gflops_per_core)
                .then(ca.split_count().cmp(&cb.split_count()))
                .then(ca.lengths().cmp(cb.lengths()))
        });
        for (cfg, est) in rows {
            w.write_record([
                hw.name.clone(),
                p.to_string(),
                cfg.to_string(),
                cfg.split_count().to_string(),
                est.ratio.to_string(),
                est.t_fma_cycles.to_string(),
                est.gflops_per_core.to_string(),
            ])?;
        }
    }
    csv_string(w)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn simulate_lines(args: &SimulateArgs, machines: &[HardwareDescriptor]) -> Result<String> {
    let (dag, label) = match (&args.pattern, &args.split) {
        (Some(p), _) => (pipesim::build_pattern(*p, args.ns)?, json!({ "pattern": p.to_string(), "ns": args.ns })),
        (None, Some(cfg)) => {
            let p = args
                .p
                .ok_or_else(|| Error::InvalidArgument("--split needs --order".into()))?;
            let spec = spec_for(p)?;
            (
                pipesim::build_from_split(cfg, spec.np)?,
                json!({ "split": cfg.to_string(), "P": p }),
            )
        }
        (None, None) => return Err(Error::InvalidArgument("give --pattern or --split".into())),
    };
    let opts = SimOptions {
        iterations: args.iters,
        policy: args.policy,
        coupling: args.coupling,
        finite_reservation_station: args.finite_rs,
    };
    let mut text = String::new();
    for hw in machines {
        let r = pipesim::simulate_with(&dag, hw, &opts);
        let mut line = json!({
            "hw": hw.name,
            "iterations": args.iters,
            "instructions": r.instructions,
            "total_cycles": r.total_cycles,
            "avg_cycles_per_instr": r.avg_cycles_per_instr,
        });
        let obj = line.as_object_mut().expect("object");
        for (k, v) in label.as_object().expect("object") {
            obj.insert(k.clone(), v.clone());
        }
        if args.trace {
            obj.insert("per_instr_issue_cycle".into(), json!(r.per_instr_issue_cycle));
        }
        text.push_str(&line.to_string());
        text.push('\n');
    }
    Ok(text)
}

pub fn ingest_csv_text(rows: &[SampleRow], policy: &FilterPolicy) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["hw", "P", "split", "gflops_per_core", "target_ratio", "working_set_bytes", "status"])?;
    for r in rows {
        let status = match policy.check(r) {
            None => "KEPT".to_string(),
            Some(reason) => serde_json::to_value(reason)?
                .as_str()
                .unwrap_or("EXCLUDED")
                .to_string(),
        };
        w.write_record([
            r.hw.name.clone(),
            r.polynomial_order().to_string(),
            r.split.to_string(),
            r.measured_gflops_per_core.to_string(),
            r.target_ratio.to_string(),
            policy.working_set(r).to_string(),
            status,
        ])?;
    }
    csv_string(w)
}

fn train(cli: &Cli, args: &TrainArgs, machines: &[HardwareDescriptor], out: &mut dyn Write) -> Result<()> {
    let rows = dataset::ingest_csv(&args.data, &registry(machines))?;
    let filtered = dataset::filter_rows(rows, &args.filter.policy());
    let split = dataset::split_stratified(&filtered.kept, args.train_fraction, cli.seed)?;
    let set = TrainingSet::from_rows(&split.train);
    let (cfg, cv) = if args.candidates == 0 {
        let cfg = TrainConfig {
            n_trees: args.trees,
            max_depth: args.depth,
            learning_rate: args.learning_rate,
            min_samples_leaf: args.min_leaf,
            subsample_fraction: args.subsample,
            seed: cli.seed,
        };
        (cfg, None)
    } else {
        let (cfg, score) = gbt::random_search(&set, &SearchSpace::default(), args.candidates, args.folds, cli.seed)?;
        (cfg, Some(score))
    };
    let model = gbt::train(&set, &cfg)?;

    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    model.save(dir.join("model.json"))?;
    // Excluded rows are evaluated with the test split.
    let mut test = split.test.clone();
    test.extend(filtered.excluded.iter().map(|(row, _)| row.clone()));
    write_rows(&dir.join("train.csv"), &split.train)?;
    write_rows(&dir.join("test.csv"), &test)?;

    let line = json!({
        "model": dir.join("model.json"),
        "train_rows": split.train.len(),
        "test_rows": test.len(),
        "excluded_rows": filtered.excluded.len(),
        "config": cfg,
        "cv_mape_ratio": cv,
        "train_max_abs_error": model.train_max_abs_error,
    });
    write_all(out, format!("{line}\n").as_bytes())
}

fn write_rows(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    dataset::write_csv(rows, file)
}

fn compare_output(cli: &Cli, report: &CompareReport, out: &mut dyn Write) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (name, text) in [
                ("report_rows.csv", report.rows_csv()?),
                ("report_groups.csv", report.groups_csv()?),
                ("report.txt", report.table()),
            ] {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            write_all(out, report.table().as_bytes())
        }
        None => write_all(out, report.groups_csv()?.as_bytes()),
    }
}
