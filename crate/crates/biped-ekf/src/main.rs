//! Command-line front end for the library pipelines: dataset generation,
//! filter runs, the observability suite and report merging. All the actual
//! work lives in the library; this file parses flags and prints.

use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use biped_ekf::config::{self, ExperimentConfig};
use biped_ekf::dataset::{self, Dataset};
use biped_ekf::experiment::run_filter;
use biped_ekf::gait::generate_truth;
use biped_ekf::model::FilterMode;
use biped_ekf::observability::{evaluate_suite, ObsMethod, DEFAULT_ORDER};
use biped_ekf::report::{
    error_report, format_report, load_trace, report_csv, save_trace, write_comparison,
};
use biped_ekf::sensors::synthesize_sensors;

#[derive(Parser)]
#[command(
    name = "biped-ekf",
    version,
    about = "Contact-aided EKFs for bipeds: simulate walking data, run the filters, probe observability"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by the commands that read an experiment config.
#[derive(Args)]
struct Common {
    /// Experiment config file (key = value lines). Defaults apply when omitted.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Position-only foothold states.
    Point,
    /// Position plus orientation foothold states.
    Flat,
}

impl From<ModeArg> for FilterMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Point => FilterMode::PointFoot,
            ModeArg::Flat => FilterMode::FlatFoot,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a walking dataset (CSV plus JSON sidecar).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Dataset stem inside the output directory.
        #[arg(long, default_value = "walk")]
        name: String,
        /// Print a fully documented default config file and exit.
        #[arg(long)]
        emit_config: bool,
    },
    /// Run a filter over a dataset and write trace, report and comparison files.
    Run {
        #[command(flatten)]
        common: Common,
        /// Dataset stem (`<stem>.csv` + `<stem>.meta.json`). Falls back to the
        /// config's `dataset`, or generates one when neither is given.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Override the config's filter mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Skip kinematic updates: pure strapdown integration with contact
        /// bookkeeping only.
        #[arg(long)]
        no_updates: bool,
    },
    /// Evaluate the rank-loss scenario catalog and print a pass/fail table.
    Observability {
        /// Taylor stacking depth of the observability matrix.
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        /// Freeze the linearization at t = 0 instead of expanding it in time.
        #[arg(long)]
        frozen_input: bool,
        /// Also write the table to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Merge saved traces with their dataset into one comparison CSV.
    Report {
        /// Dataset stem the traces were produced from.
        #[arg(long)]
        dataset: PathBuf,
        /// One or more trace stems written by `run`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Where to write the merged comparison table.
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Simulate {
            common,
            name,
            emit_config,
        } => {
            if emit_config {
                print!("{}", config::template());
                return ExitCode::SUCCESS;
            }
            run_fallible(|| cmd_simulate(&common, &name))
        }
        Cmd::Run {
            common,
            dataset,
            mode,
            no_updates,
        } => run_fallible(|| cmd_run(&common, dataset.as_deref(), mode, no_updates)),
        Cmd::Observability {
            order,
            frozen_input,
            csv,
        } => run_fallible(|| cmd_observability(order, frozen_input, csv.as_deref())),
        Cmd::Report {
            dataset,
            traces,
            out,
        } => run_fallible(|| cmd_report(&dataset, &traces, &out)),
    }
}

fn run_fallible(f: impl FnOnce() -> Result<ExitCode, Box<dyn Error>>) -> ExitCode {
    match f() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut cause = e.source();
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Box<dyn Error>> {
    let mut cfg = match &common.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn mode_label(mode: FilterMode) -> &'static str {
    match mode {
        FilterMode::PointFoot => "point",
        FilterMode::FlatFoot => "flat",
    }
}

fn generate_and_save(cfg: &ExperimentConfig, stem: &Path) -> Result<Dataset, Box<dyn Error>> {
    let truth = generate_truth(&cfg.gait)?;
    let stream = synthesize_sensors(&truth, &cfg.sim_noise, cfg.seed);
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    dataset::save(stem, &cfg.gait, &cfg.sim_noise, &truth, &stream)?;
    // Reload so downstream consumers see exactly what a later `run` would.
    Ok(dataset::load(stem)?)
}

fn cmd_simulate(common: &Common, name: &str) -> Result<ExitCode, Box<dyn Error>> {
    let cfg = load_config(common)?;
    let stem = cfg.out_dir.join(name);
    let ds = generate_and_save(&cfg, &stem)?;

    let n = ds.meta.n_rows;
    let dt = ds.meta.dt;
    let mut in_double = 0usize;
    let mut airborne = 0usize;
    for s in &ds.truth {
        match s.feet.iter().filter(|f| f.contact).count() {
            0 => airborne += 1,
            1 => {}
            _ => in_double += 1,
        }
    }
    let (csv_path, meta_path) = dataset::paths_for(&stem);
    println!("dataset       {}", csv_path.display());
    println!("sidecar       {}", meta_path.display());
    println!("rows          {n}  ({:.3} s at dt = {dt} s)", n as f64 * dt);
    println!("feet          {}", ds.meta.n_feet);
    println!("contact       {} events, {in_double} double-support samples, {airborne} airborne", ds.stream.events.len());
    println!("seed          {}", ds.meta.seed);
    println!("csv fnv1a64   {}", ds.meta.csv_hash);
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(
    common: &Common,
    dataset_flag: Option<&Path>,
    mode: Option<ModeArg>,
    no_updates: bool,
) -> Result<ExitCode, Box<dyn Error>> {
    let cfg = load_config(common)?;
    let ds = match dataset_flag.or(cfg.dataset.as_deref()) {
        Some(stem) => dataset::load(stem)?,
        None => {
            let stem = cfg.out_dir.join("walk");
            println!("no dataset given, generating {}", stem.display());
            generate_and_save(&cfg, &stem)?
        }
    };

    let mut run_cfg = cfg.run_config();
    if let Some(m) = mode {
        run_cfg.mode = m.into();
    }
    run_cfg.with_updates = !no_updates;

    let label = mode_label(run_cfg.mode);
    let run = run_filter(&ds, &run_cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let trace_stem = cfg.out_dir.join(format!("{label}_trace"));
    save_trace(&trace_stem, &run)?;

    let rep = error_report(&ds, &run);
    print!("{}", format_report(&rep));
    let report_path = cfg.out_dir.join(format!("{label}_report.csv"));
    std::fs::write(&report_path, report_csv(&rep))?;

    let compare_path = cfg.out_dir.join(format!("{label}_vs_truth.csv"));
    write_comparison(&compare_path, &ds, &[&run])?;

    println!();
    println!("updates       {}", run.updates);
    println!("trace         {}.csv", trace_stem.display());
    println!("report csv    {}", report_path.display());
    println!("comparison    {}", compare_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_observability(
    order: usize,
    frozen_input: bool,
    csv: Option<&Path>,
) -> Result<ExitCode, Box<dyn Error>> {
    let method = if frozen_input {
        ObsMethod::FrozenInput
    } else {
        ObsMethod::TimeVarying
    };
    let reports = evaluate_suite(method, order);

    let name_w = reports.iter().map(|r| r.name.len()).max().unwrap_or(8);
    println!(
        "{:<name_w$}  {:>3}  {:>4}  {:>4}  {:>8}  status",
        "scenario", "dim", "rank", "loss", "expected"
    );
    let mut group = String::new();
    let mut mismatches = 0usize;
    for r in &reports {
        if r.group != group {
            group = r.group.clone();
            println!("-- {group}");
        }
        let status = if r.matches_expectation() {
            "ok"
        } else if r.ambiguous {
            "AMBIGUOUS"
        } else {
            "MISMATCH"
        };
        if !r.matches_expectation() {
            mismatches += 1;
        }
        println!(
            "{:<name_w$}  {:>3}  {:>4}  {:>4}  {:>8}  {status}",
            r.name, r.dim, r.rank, r.rank_loss, r.expected_rank_loss
        );
    }
    println!(
        "\n{} of {} scenarios match the recorded rank losses",
        reports.len() - mismatches,
        reports.len()
    );

    if let Some(path) = csv {
        let mut out = String::from("group,scenario,dim,rank,rank_loss,expected_rank_loss,ambiguous,matches\n");
        for r in &reports {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.group,
                r.name,
                r.dim,
                r.rank,
                r.rank_loss,
                r.expected_rank_loss,
                r.ambiguous,
                r.matches_expectation()
            ));
        }
        std::fs::write(path, out)?;
        println!("table written to {}", path.display());
    }

    Ok(if mismatches == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_report(
    dataset: &Path,
    traces: &[PathBuf],
    out: &Path,
) -> Result<ExitCode, Box<dyn Error>> {
    let ds = dataset::load(dataset)?;
    let mut runs = Vec::new();
    for stem in traces {
        let run = load_trace(stem)?;
        println!("== {} ({})", stem.display(), mode_label(run.mode));
        let rep = error_report(&ds, &run);
        print!("{}", format_report(&rep));
        println!();
        runs.push(run);
    }
    let refs: Vec<&_> = runs.iter().collect();
    write_comparison(out, &ds, &refs)?;
    println!("comparison written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
