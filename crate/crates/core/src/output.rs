//! Run directories: one CSV per snapshot, a per-step diagnostics CSV and a
//! `meta.txt` with the resolved configuration and run information.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::macro_solver::PressureBc;
use crate::scenario::{ModelKind, ScenarioConfig};
use crate::simulation::{RunOutput, Snapshot, StepDiagnostics};

pub const META_FILE: &str = "meta.txt";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub const SHARP_COLUMNS: [&str; 7] = ["x", "d2", "d1_plus_d2", "c", "p", "K_f", "K_c"];
pub const PF_COLUMNS: [&str; 7] = ["x", "y_ff", "y_fs", "c", "p", "K_f", "K_c"];

const DIAGNOSTIC_COLUMNS: [&str; 13] = [
    "step",
    "t",
    "dt",
    "q_f",
    "courant",
    "mass_1",
    "mass_2",
    "mass_3",
    "mass_defect",
    "sum_defect",
    "ion_defect",
    "newton_iterations",
    "substeps",
];

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        return Ok(None);
    }
    field
        .trim()
        .parse()
        .map(Some)
        .map_err(|_| Error::Comparison(format!("cannot parse '{field}' in {what}")))
}

fn parse_num(field: &str, what: &str) -> Result<f64> {
    parse_opt(field, what)?.ok_or_else(|| Error::Comparison(format!("missing value in {what}")))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Comparison(format!("malformed CSV: {other:?}")),
    }
}

pub fn snapshot_file(index: usize) -> String {
    format!("snapshot_{index:04}.csv")
}

/// Writes one snapshot in the column layout of its model.
pub fn write_snapshot(path: &Path, s: &Snapshot) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let sharp = s.model == ModelKind::Sharp;
    w.write_record(if sharp { SHARP_COLUMNS } else { PF_COLUMNS }).map_err(csv_error)?;
    for k in 0..s.x.len() {
        let (a, b) = if sharp {
            (s.y_ff[k].map(|v| -v), s.y_fs[k].map(|v| -v))
        } else {
            (s.y_ff[k], s.y_fs[k])
        };
        w.write_record([
            fmt_num(s.x[k]),
            fmt_opt(a),
            fmt_opt(b),
            fmt_num(s.c[k]),
            fmt_num(s.p[k]),
            fmt_num(s.k_f[k]),
            fmt_num(s.k_c[k]),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot CSV; the model follows from the header.
pub fn read_snapshot(path: &Path, t: f64, q_f: f64) -> Result<Snapshot> {
    let what = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let model = if header == SHARP_COLUMNS {
        ModelKind::Sharp
    } else if header == PF_COLUMNS {
        ModelKind::PhaseField
    } else {
        return Err(Error::Comparison(format!("{what}: unexpected header {header:?}")));
    };
    let mut s = Snapshot {
        model,
        t,
        x: Vec::new(),
        y_ff: Vec::new(),
        y_fs: Vec::new(),
        c: Vec::new(),
        p: Vec::new(),
        k_f: Vec::new(),
        k_c: Vec::new(),
        q_f,
    };
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != 7 {
            return Err(Error::Comparison(format!("{what}: row with {} fields", rec.len())));
        }
        s.x.push(parse_num(&rec[0], &what)?);
        let (a, b) = (parse_opt(&rec[1], &what)?, parse_opt(&rec[2], &what)?);
        if model == ModelKind::Sharp {
            s.y_ff.push(a.map(|v| -v));
            s.y_fs.push(b.map(|v| -v));
        } else {
            s.y_ff.push(a);
            s.y_fs.push(b);
        }
        s.c.push(parse_num(&rec[3], &what)?);
        s.p.push(parse_num(&rec[4], &what)?);
        s.k_f.push(parse_num(&rec[5], &what)?);
        s.k_c.push(parse_num(&rec[6], &what)?);
    }
    Ok(s)
}

pub fn write_diagnostics(path: &Path, rows: &[StepDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(DIAGNOSTIC_COLUMNS).map_err(csv_error)?;
    for d in rows {
        w.write_record([
            d.step.to_string(),
            fmt_num(d.t),
            fmt_num(d.dt),
            fmt_num(d.q_f),
            fmt_num(d.courant),
            fmt_num(d.mass[0]),
            fmt_num(d.mass[1]),
            fmt_num(d.mass[2]),
            fmt_opt(d.mass_defect),
            fmt_num(d.sum_defect),
            fmt_opt(d.ion_defect),
            d.newton_iterations.to_string(),
            d.substeps.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<StepDiagnostics>> {
    let what = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let count = |f: &str| -> Result<usize> {
        f.parse()
            .map_err(|_| Error::Comparison(format!("cannot parse count '{f}' in {what}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != DIAGNOSTIC_COLUMNS.len() {
            return Err(Error::Comparison(format!("{what}: row with {} fields", rec.len())));
        }
        out.push(StepDiagnostics {
            step: count(&rec[0])?,
            t: parse_num(&rec[1], &what)?,
            dt: parse_num(&rec[2], &what)?,
            q_f: parse_num(&rec[3], &what)?,
            courant: parse_num(&rec[4], &what)?,
            mass: [parse_num(&rec[5], &what)?, parse_num(&rec[6], &what)?, parse_num(&rec[7], &what)?],
            mass_defect: parse_opt(&rec[8], &what)?,
            sum_defect: parse_num(&rec[9], &what)?,
            ion_defect: parse_opt(&rec[10], &what)?,
            newton_iterations: count(&rec[11])?,
            substeps: count(&rec[12])?,
        });
    }
    Ok(out)
}

fn index_of(cfg: &ScenarioConfig, t: f64) -> usize {
    let tol = 1e-12 * cfg.t_end.max(1.0);
    cfg.snapshots
        .iter()
        .position(|s| (s - t).abs() <= tol)
        .unwrap_or(cfg.snapshots.len())
}

fn list(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(fmt_num).collect::<Vec<_>>().join(", ")
}

/// Writes the snapshots, diagnostics and meta file of one model run.
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(run.snapshots.len());
    for s in &run.snapshots {
        let name = snapshot_file(index_of(cfg, s.t));
        write_snapshot(&dir.join(&name), s)?;
        files.push(name);
    }
    write_diagnostics(&dir.join(DIAGNOSTICS_FILE), &run.diagnostics)?;

    let mut meta = String::new();
    meta.push_str("# resolved configuration\n");
    meta.push_str(&cfg.to_text());
    meta.push_str("# run information\n");
    let mut put = |k: &str, v: String| {
        let _ = writeln!(meta, "run.{k} = {v}");
    };
    put("model", run.model.tag().into());
    match run.pressure {
        PressureBc::Dirichlet { p_in, p_out } => {
            put("p_in", fmt_num(p_in));
            put("p_out", fmt_num(p_out));
        }
        PressureBc::Flux { q_f } => put("q_f", fmt_num(q_f)),
    }
    put("t_star", run.t_star.map(fmt_num).unwrap_or_else(|| "none".into()));
    if let (Some(t_star), Some(last)) = (run.t_star, run.snapshots.last()) {
        // snapshots after the shock time lie outside the validity of the upscaled model
        put("past_shock", (last.t >= t_star).to_string());
    }
    put("steps", run.diagnostics.len().to_string());
    put("wall_time_s", format!("{:.3}", run.wall_time));
    put("snapshot_times", list(run.snapshots.iter().map(|s| s.t)));
    put("snapshot_q_f", list(run.snapshots.iter().map(|s| s.q_f)));
    put("snapshot_files", files.join(", "));
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

/// Run directory contents as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub model: ModelKind,
    pub t_star: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Splits meta text into the configuration text and the `run.` entries.
pub fn split_meta(text: &str) -> (String, Vec<(String, String)>) {
    let mut config = String::new();
    let mut run = Vec::new();
    for line in text.lines() {
        let body = line.split('#').next().unwrap_or("").trim();
        match body.strip_prefix("run.").and_then(|r| r.split_once('=')) {
            Some((k, v)) => run.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                config.push_str(line);
                config.push('\n');
            }
        }
    }
    (config, run)
}

fn parse_list(v: &str, what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(s, what)).collect()
}

pub fn read_run(dir: &Path) -> Result<RunRecord> {
    let meta_path = dir.join(META_FILE);
    let what = meta_path.display().to_string();
    let text = fs::read_to_string(&meta_path)?;
    let (config_text, run) = split_meta(&text);
    let config = ScenarioConfig::parse(&config_text)?;
    let get = |k: &str| -> Result<&str> {
        run.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Comparison(format!("{what}: missing run.{k}")))
    };
    let model = match get("model")? {
        "pf" => ModelKind::PhaseField,
        "sharp" => ModelKind::Sharp,
        other => return Err(Error::Comparison(format!("{what}: unknown model '{other}'"))),
    };
    let t_star = match get("t_star")? {
        "none" => None,
        v => Some(parse_num(v, &what)?),
    };
    let times = parse_list(get("snapshot_times")?, &what)?;
    let q_f = parse_list(get("snapshot_q_f")?, &what)?;
    let files_field = get("snapshot_files")?;
    let files: Vec<PathBuf> = if files_field.is_empty() {
        Vec::new()
    } else {
        files_field.split(',').map(|f| dir.join(f.trim())).collect()
    };
    if times.len() != files.len() || q_f.len() != files.len() {
        return Err(Error::Comparison(format!("{what}: snapshot lists differ in length")));
    }
    let snapshots = files
        .iter()
        .zip(times.iter().zip(&q_f))
        .map(|(f, (t, q))| read_snapshot(f, *t, *q))
        .collect::<Result<Vec<_>>>()?;
    if let Some(s) = snapshots.iter().find(|s| s.model != model) {
        return Err(Error::Comparison(format!("snapshot at t = {} does not match model {}", s.t, model.tag())));
    }
    let diagnostics = read_diagnostics(&dir.join(DIAGNOSTICS_FILE))?;
    Ok(RunRecord {
        config,
        model,
        t_star,
        snapshots,
        diagnostics,
    })
}
