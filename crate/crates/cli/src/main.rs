use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thinstrip_core::compare::{compare_runs, write_metrics, SnapshotMetrics};
use thinstrip_core::output::{fmt_num, read_run, write_run, CHECKPOINT_FILE};
use thinstrip_core::sharp::characteristics_oracle;
use thinstrip_core::{Checkpoint, Error, ModelChoice, ModelKind, RunOutput, ScenarioConfig, Simulation};

#[derive(Parser)]
#[command(name = "thinstrip", version, about = "Upscaled phase-field and sharp-interface thin-strip simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or both models and write a run directory per model.
    Run(RunArgs),
    /// Continue a run directory from its checkpoint.
    Resume(ResumeArgs),
    /// Interface distances between two run directories.
    Compare(CompareArgs),
    /// Characteristics solution of the sharp model for a configuration.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; the built-in N-wave scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario used when no file is given.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// pf, sharp or both.
    #[arg(long)]
    model: Option<ModelChoice>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Fixed time step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Args)]
struct ResumeArgs {
    /// Run directory holding a checkpoint.
    #[arg(long)]
    dir: PathBuf,
    /// New final time; added to the snapshot times.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Metrics CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Evaluation times; the configured snapshot times when omitted.
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    #[arg(long)]
    nx: Option<usize>,
    /// CSV with one d2 column per time.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Geometry(_) => 2,
        Error::NewtonDiverged { .. } | Error::Cfl { .. } | Error::SingularMatrix(_) | Error::Domain { .. } => 3,
        Error::StateCollapse { .. } | Error::ValidityExceeded { .. } | Error::PastShock { .. } => 4,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<ScenarioConfig, Error> {
    match (path, preset) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            ScenarioConfig::parse(&text)
        }
        (None, Some(name)) => ScenarioConfig::preset(name),
        (None, None) => ScenarioConfig::preset("nwave"),
    }
}

fn report(dir: &Path, run: &RunOutput) {
    let t_star = run.t_star.map(|t| format!(", t* = {t:.5}")).unwrap_or_default();
    println!(
        "{}: {} steps, {} snapshots in {:.2} s{t_star} -> {}",
        run.model.tag(),
        run.diagnostics.len(),
        run.snapshots.len(),
        run.wall_time,
        dir.display()
    );
    if let (Some(t_star), Some(last)) = (run.t_star, run.snapshots.last()) {
        if last.t >= t_star {
            eprintln!("warning: t = {} is past the shock time {t_star:.5}; the upscaled model is not valid there", last.t);
        }
    }
}

fn save(dir: &Path, cfg: &ScenarioConfig, run: &RunOutput, sim: &Simulation) -> Result<(), Error> {
    write_run(dir, cfg, run)?;
    fs::write(dir.join(CHECKPOINT_FILE), serde_json::to_string(&sim.checkpoint())?)?;
    Ok(())
}

fn print_metrics(metrics: &[SnapshotMetrics]) {
    println!("{:>10} {:>12} {:>12} {:>12} {:>12}", "t", "linf_ff", "l2_ff", "linf_fs", "l2_fs");
    let cell = |v: Option<f64>| v.map(|v| format!("{v:12.4e}")).unwrap_or_else(|| format!("{:>12}", "-"));
    for m in metrics {
        println!(
            "{:10.4} {} {} {} {}",
            m.t,
            cell(m.fluid_fluid.map(|d| d.linf)),
            cell(m.fluid_fluid.map(|d| d.l2)),
            cell(m.fluid_solid.map(|d| d.linf)),
            cell(m.fluid_solid.map(|d| d.l2)),
        );
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = load_config(args.config.as_deref(), args.preset.as_deref())?;
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(nx) = args.nx {
        cfg.nx = nx;
    }
    if let Some(ny) = args.ny {
        cfg.ny = ny;
    }
    if let Some(dt) = args.dt {
        cfg.dt = thinstrip_core::scenario::TimeStep::Fixed(dt);
    }
    if let Some(t) = args.t_end {
        cfg.t_end = t;
        cfg.snapshots.retain(|s| *s <= t);
        if cfg.snapshots.last() != Some(&t) {
            cfg.snapshots.push(t);
        }
    }
    cfg.validate()?;
    let mut outputs = Vec::new();
    for kind in cfg.model.kinds() {
        let dir = cfg.out.join(kind.tag());
        let mut sim = Simulation::new(&cfg, kind)?;
        let out = sim.run()?;
        save(&dir, &cfg, &out, &sim)?;
        report(&dir, &out);
        outputs.push(out);
    }
    if let [pf, sharp] = outputs.as_slice() {
        let metrics = compare_runs(&pf.snapshots, &sharp.snapshots)?;
        let path = cfg.out.join("compare.csv");
        write_metrics(&path, &metrics)?;
        println!("phase field vs sharp -> {}", path.display());
        print_metrics(&metrics);
    }
    Ok(())
}

fn resume(args: ResumeArgs) -> Result<(), Error> {
    let text = fs::read_to_string(args.dir.join(CHECKPOINT_FILE))?;
    let mut checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if let Some(t) = args.t_end {
        let mut cfg = ScenarioConfig::parse(&checkpoint.config)?;
        if t < cfg.t_end {
            return Err(Error::Config(format!("t_end {t} is before the checkpointed t_end {}", cfg.t_end)));
        }
        cfg.t_end = t;
        if cfg.snapshots.last() != Some(&t) {
            cfg.snapshots.push(t);
        }
        checkpoint.config = cfg.to_text();
    }
    let earlier = read_run(&args.dir)?;
    let mut sim = Simulation::resume(&checkpoint, args.workers)?;
    let cfg = sim.config().clone();
    let mut out = sim.run()?;
    let mut snapshots: Vec<_> = earlier
        .snapshots
        .into_iter()
        .filter(|s| !out.snapshots.iter().any(|o| o.t == s.t))
        .collect();
    snapshots.append(&mut out.snapshots);
    out.snapshots = snapshots;
    let mut diagnostics: Vec<_> = earlier.diagnostics.into_iter().filter(|d| d.step <= checkpoint.steps).collect();
    diagnostics.append(&mut out.diagnostics);
    out.diagnostics = diagnostics;
    save(&args.dir, &cfg, &out, &sim)?;
    report(&args.dir, &out);
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let a = read_run(&args.a)?;
    let b = read_run(&args.b)?;
    let metrics = compare_runs(&a.snapshots, &b.snapshots)?;
    write_metrics(&args.out, &metrics)?;
    println!("{} ({}) vs {} ({})", args.a.display(), a.model.tag(), args.b.display(), b.model.tag());
    print_metrics(&metrics);
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<(), Error> {
    let mut cfg = load_config(args.config.as_deref(), args.preset.as_deref())?;
    if let Some(nx) = args.nx {
        cfg.nx = nx;
    }
    let sim = Simulation::new(&cfg, ModelKind::Sharp)?;
    let q_f = sim.snapshot()?.q_f;
    let x = sim.x_grid().centers();
    let geometry = cfg.geometry;
    let total = geometry.total_width();
    let init = move |x: f64| geometry.widths(x).1;
    let times = if args.t.is_empty() { cfg.snapshots.clone() } else { args.t };
    let t_star = sim.t_star().unwrap_or(f64::INFINITY);
    println!("Q_f = {q_f:.6}, t* = {t_star:.6}");
    let mut columns = Vec::with_capacity(times.len());
    for t in &times {
        columns.push(characteristics_oracle(&init, total, q_f, *t, &x, &cfg.params)?.d2);
    }
    if let Some(path) = args.out {
        let mut text = String::from("x");
        for t in &times {
            text.push_str(&format!(",d2_t{t}"));
        }
        text.push('\n');
        for (k, xk) in x.iter().enumerate() {
            text.push_str(&fmt_num(*xk));
            for c in &columns {
                text.push(',');
                text.push_str(&fmt_num(c[k]));
            }
            text.push('\n');
        }
        fs::write(&path, text)?;
        println!("{} times -> {}", times.len(), path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Resume(a) => resume(a),
        Command::Compare(a) => compare(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
