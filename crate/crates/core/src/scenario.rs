//! Scenario configuration: flat `key = value` text with `#` comments, the
//! named geometry and source presets, and the resolved run parameters.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ch_cell::NewtonOptions;
use crate::error::{Error, Result};
use crate::grid::YMode;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    PhaseField,
    Sharp,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::PhaseField => "pf",
            ModelKind::Sharp => "sharp",
        }
    }
}

/// Which models a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelChoice {
    PhaseField,
    Sharp,
    Both,
}

impl ModelChoice {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::PhaseField => vec![ModelKind::PhaseField],
            ModelChoice::Sharp => vec![ModelKind::Sharp],
            ModelChoice::Both => vec![ModelKind::PhaseField, ModelKind::Sharp],
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModelChoice::PhaseField => "pf",
            ModelChoice::Sharp => "sharp",
            ModelChoice::Both => "both",
        }
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pf" | "upscaled-pf" => Ok(ModelChoice::PhaseField),
            "sharp" => Ok(ModelChoice::Sharp),
            "both" => Ok(ModelChoice::Both),
            _ => Err(Error::Config(format!("unknown model '{s}' (expected pf, sharp or both)"))),
        }
    }
}

/// How the pressure boundary values are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PressureMode {
    /// Pressure drop set at t = 0 so that the mean of Q_f/(2(d1 + d2)) equals the target.
    Calibrated { mean_velocity: f64 },
    Drop { p_in: f64, p_out: f64 },
    Flux { q_f: f64 },
}

/// Initial layer widths d1(x), d2(x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// d1 = d1_mean + amplitude sin(2πx), d1 + d2 = d1_mean + d2_mean.
    NWave { d1: f64, d2: f64, amplitude: f64 },
    Layered { d1: f64, d2: f64 },
}

impl Geometry {
    /// (d1, d2) at x.
    pub fn widths(&self, x: f64) -> (f64, f64) {
        match *self {
            Geometry::NWave { d1, d2, amplitude } => {
                let w1 = d1 + amplitude * (2.0 * PI * x).sin();
                (w1, d1 + d2 - w1)
            }
            Geometry::Layered { d1, d2 } => (d1, d2),
        }
    }

    pub fn total_width(&self) -> f64 {
        match *self {
            Geometry::NWave { d1, d2, .. } | Geometry::Layered { d1, d2 } => d1 + d2,
        }
    }
}

/// Source s(x) of the ion equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Source {
    None,
    /// max(0, scale (x - a)(b - x)).
    Bump { scale: f64, a: f64, b: f64 },
}

impl Source {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Source::None => 0.0,
            Source::Bump { scale, a, b } => (scale * (x - a) * (b - x)).max(0.0),
        }
    }
}

/// Time step selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeStep {
    Fixed(f64),
    /// CFL-limited with safety 0.8, never above `max`.
    Auto { max: f64 },
}

/// Safety factor applied to the CFL limit by automatic time steps.
pub const CFL_SAFETY: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: ModelChoice,
    pub nx: usize,
    pub ny: usize,
    pub y_mode: YMode,
    pub dt: TimeStep,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub params: ModelParams,
    pub pressure: PressureMode,
    pub periodic: bool,
    /// Inflow and outflow ion concentrations when x is not periodic.
    pub c_left: f64,
    pub c_right: f64,
    pub geometry: Geometry,
    pub c_init: f64,
    pub source: Source,
    pub freeze_c: bool,
    /// Halt with a validity error once t passes the shock time.
    pub strict: bool,
    pub out: PathBuf,
    pub workers: usize,
    pub newton: NewtonOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            model: ModelChoice::Both,
            nx: 200,
            ny: 256,
            y_mode: YMode::Symmetric,
            dt: TimeStep::Auto { max: 1.0e-2 },
            t_end: 0.3,
            snapshots: vec![0.0, 0.15, 0.3],
            params: ModelParams::default(),
            pressure: PressureMode::Calibrated { mean_velocity: 1.0 },
            periodic: true,
            c_left: 0.5,
            c_right: 0.5,
            geometry: Geometry::NWave {
                d1: 0.4,
                d2: 0.3,
                amplitude: 0.15,
            },
            c_init: 0.5,
            source: Source::None,
            freeze_c: false,
            strict: false,
            out: PathBuf::from("out"),
            workers: 1,
            newton: NewtonOptions::default(),
        }
    }
}

/// Names of the built-in scenarios.
pub const PRESETS: [&str; 3] = ["nwave", "layered", "bump_source"];

impl ScenarioConfig {
    /// Built-in scenario by name.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        match name {
            "nwave" => {}
            "layered" => {
                cfg.geometry = Geometry::Layered { d1: 0.4, d2: 0.3 };
            }
            "bump_source" => {
                cfg.geometry = Geometry::Layered { d1: 0.4, d2: 0.3 };
                cfg.source = Source::Bump {
                    scale: 62.5,
                    a: 0.1,
                    b: 0.3,
                };
            }
            _ => return Err(Error::Config(format!("unknown preset '{name}'"))),
        }
        Ok(cfg)
    }

    /// Parses config text; keys not given keep the values of `preset`
    /// (default `nwave`), δ defaults to ε̄.
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        let mut r = Reader { map };
        let mut cfg = match r.take("preset") {
            Some(v) => ScenarioConfig::preset(&v)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = r.take("model") {
            cfg.model = v.parse()?;
        }
        r.set_parsed("nx", &mut cfg.nx)?;
        r.set_parsed("ny", &mut cfg.ny)?;
        if let Some(v) = r.take("y_mode") {
            cfg.y_mode = match v.as_str() {
                "symmetric" => YMode::Symmetric,
                "full" => YMode::Full,
                _ => return Err(Error::Config(format!("y_mode must be symmetric or full, got '{v}'"))),
            };
        }
        let dt_max = r.parsed::<f64>("dt_max")?;
        match r.take("dt").as_deref() {
            None | Some("auto") => {
                let max = dt_max.unwrap_or(match cfg.dt {
                    TimeStep::Auto { max } => max,
                    TimeStep::Fixed(_) => 1.0e-2,
                });
                cfg.dt = TimeStep::Auto { max };
            }
            Some(v) => {
                if dt_max.is_some() {
                    return Err(Error::Config("dt_max only applies to dt = auto".into()));
                }
                cfg.dt = TimeStep::Fixed(parse_value("dt", v)?);
            }
        }
        r.set_parsed("t_end", &mut cfg.t_end)?;
        if let Some(v) = r.take("snapshots") {
            cfg.snapshots = parse_list("snapshots", &v)?;
        }

        let p = &mut cfg.params;
        if let Some(v) = r.take("sigma") {
            p.sigma = parse_triple("sigma", &v)?;
        }
        if let Some(v) = r.take("gamma") {
            p.gamma = parse_triple("gamma", &v)?;
        }
        r.set_parsed("rho3", &mut p.rho3)?;
        r.set_parsed("d0", &mut p.d0)?;
        r.set_parsed("eps_bar", &mut p.eps_bar)?;
        p.delta = r.parsed("delta")?.unwrap_or(p.eps_bar);
        r.set_parsed("m_bar", &mut p.m_bar)?;
        r.set_parsed("da_bar", &mut p.da_bar)?;
        r.set_parsed("pec_bar", &mut p.pec_bar)?;
        r.set_parsed("alpha", &mut p.alpha)?;
        r.set_parsed("c_eq", &mut p.c_eq)?;
        r.set_parsed("ell_omega", &mut p.ell_omega)?;

        let mode = r.take("pressure");
        let mean_velocity = r.parsed("mean_velocity")?;
        let p_in = r.parsed("p_in")?;
        let p_out = r.parsed("p_out")?;
        let q_f = r.parsed("q_f")?;
        cfg.pressure = match mode.as_deref() {
            None | Some("calibrated") => {
                if p_in.is_some() || p_out.is_some() || q_f.is_some() {
                    return Err(Error::Config("p_in, p_out and q_f need pressure = drop or flux".into()));
                }
                PressureMode::Calibrated {
                    mean_velocity: mean_velocity.unwrap_or(1.0),
                }
            }
            Some("drop") => PressureMode::Drop {
                p_in: p_in.ok_or_else(|| Error::Config("pressure = drop needs p_in".into()))?,
                p_out: p_out.unwrap_or(0.0),
            },
            Some("flux") => PressureMode::Flux {
                q_f: q_f.ok_or_else(|| Error::Config("pressure = flux needs q_f".into()))?,
            },
            Some(v) => return Err(Error::Config(format!("unknown pressure mode '{v}'"))),
        };
        if mean_velocity.is_some() && !matches!(mode.as_deref(), None | Some("calibrated")) {
            return Err(Error::Config("mean_velocity needs pressure = calibrated".into()));
        }

        r.set_bool("periodic", &mut cfg.periodic)?;
        r.set_parsed("c_left", &mut cfg.c_left)?;
        r.set_parsed("c_right", &mut cfg.c_right)?;

        let (mut d1, mut d2, mut amplitude) = match cfg.geometry {
            Geometry::NWave { d1, d2, amplitude } => (d1, d2, amplitude),
            Geometry::Layered { d1, d2 } => (d1, d2, 0.15),
        };
        let kind = r.take("geometry");
        r.set_parsed("d1", &mut d1)?;
        r.set_parsed("d2", &mut d2)?;
        let amp = r.parsed("amplitude")?;
        if let Some(a) = amp {
            amplitude = a;
        }
        let geometry_name = kind.unwrap_or_else(|| match cfg.geometry {
            Geometry::NWave { .. } => "nwave".into(),
            Geometry::Layered { .. } => "layered".into(),
        });
        cfg.geometry = match geometry_name.as_str() {
            "nwave" => Geometry::NWave { d1, d2, amplitude },
            "layered" => {
                if amp.is_some() {
                    return Err(Error::Config("amplitude needs geometry = nwave".into()));
                }
                Geometry::Layered { d1, d2 }
            }
            v => return Err(Error::Config(format!("unknown geometry '{v}'"))),
        };
        r.set_parsed("c_init", &mut cfg.c_init)?;

        let (mut scale, mut a, mut b) = match cfg.source {
            Source::Bump { scale, a, b } => (scale, a, b),
            Source::None => (62.5, 0.1, 0.3),
        };
        let source = r.take("source");
        let given = [
            r.set_parsed("source_scale", &mut scale)?,
            r.set_parsed("source_a", &mut a)?,
            r.set_parsed("source_b", &mut b)?,
        ];
        let source_name = source.unwrap_or_else(|| match cfg.source {
            Source::None => "none".into(),
            Source::Bump { .. } => "bump_source".into(),
        });
        cfg.source = match source_name.as_str() {
            "none" => {
                if given.iter().any(|g| *g) {
                    return Err(Error::Config("source parameters need source = bump_source".into()));
                }
                Source::None
            }
            "bump_source" => Source::Bump { scale, a, b },
            v => return Err(Error::Config(format!("unknown source '{v}'"))),
        };

        r.set_bool("freeze_c", &mut cfg.freeze_c)?;
        r.set_bool("strict", &mut cfg.strict)?;
        if let Some(v) = r.take("out") {
            cfg.out = PathBuf::from(v);
        }
        r.set_parsed("workers", &mut cfg.workers)?;
        r.set_parsed("newton_tol", &mut cfg.newton.tol)?;
        r.set_parsed("newton_max_iter", &mut cfg.newton.max_iter)?;
        r.set_parsed("newton_max_halvings", &mut cfg.newton.max_halvings)?;
        r.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.nx == 0 {
            return bad("nx must be at least 1".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be finite and nonnegative", self.t_end));
        }
        match self.dt {
            TimeStep::Fixed(dt) | TimeStep::Auto { max: dt } if !(dt > 0.0 && dt.is_finite()) => {
                return bad(format!("time step {dt} must be positive"));
            }
            _ => {}
        }
        if let Some(t) = self.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return bad(format!("snapshot time {t} is outside [0, t_end = {}]", self.t_end));
        }
        if self.snapshots.windows(2).any(|w| w[1] <= w[0]) {
            return bad("snapshot times must be strictly increasing".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let PressureMode::Calibrated { mean_velocity } = self.pressure {
            if !mean_velocity.is_finite() {
                return bad("mean_velocity must be finite".into());
            }
        }
        if !(self.c_init.is_finite() && self.c_left.is_finite() && self.c_right.is_finite()) {
            return bad("concentrations must be finite".into());
        }
        let half = 0.5 * self.params.ell_omega;
        for k in 0..self.nx {
            let x = (k as f64) / self.nx as f64;
            let (d1, d2) = self.geometry.widths(x);
            if !(d1 > 0.0 && d2 > 0.0 && d1 + d2 < half) {
                return bad(format!(
                    "initial widths d1 = {d1}, d2 = {d2} at x = {x} must be positive with d1 + d2 < {half}"
                ));
            }
        }
        Ok(())
    }

    /// Resolved configuration in the parseable text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let p = &self.params;
        put("model", self.model.name().into());
        put("nx", self.nx.to_string());
        put("ny", self.ny.to_string());
        put(
            "y_mode",
            match self.y_mode {
                YMode::Symmetric => "symmetric".into(),
                YMode::Full => "full".into(),
            },
        );
        match self.dt {
            TimeStep::Fixed(dt) => put("dt", num(dt)),
            TimeStep::Auto { max } => {
                put("dt", "auto".into());
                put("dt_max", num(max));
            }
        }
        put("t_end", num(self.t_end));
        put("snapshots", list(&self.snapshots));
        put("sigma", list(&p.sigma));
        put("gamma", list(&p.gamma));
        put("rho3", num(p.rho3));
        put("d0", num(p.d0));
        put("eps_bar", num(p.eps_bar));
        put("delta", num(p.delta));
        put("m_bar", num(p.m_bar));
        put("da_bar", num(p.da_bar));
        put("pec_bar", num(p.pec_bar));
        put("alpha", num(p.alpha));
        put("c_eq", num(p.c_eq));
        put("ell_omega", num(p.ell_omega));
        match self.pressure {
            PressureMode::Calibrated { mean_velocity } => {
                put("pressure", "calibrated".into());
                put("mean_velocity", num(mean_velocity));
            }
            PressureMode::Drop { p_in, p_out } => {
                put("pressure", "drop".into());
                put("p_in", num(p_in));
                put("p_out", num(p_out));
            }
            PressureMode::Flux { q_f } => {
                put("pressure", "flux".into());
                put("q_f", num(q_f));
            }
        }
        put("periodic", self.periodic.to_string());
        put("c_left", num(self.c_left));
        put("c_right", num(self.c_right));
        match self.geometry {
            Geometry::NWave { d1, d2, amplitude } => {
                put("geometry", "nwave".into());
                put("d1", num(d1));
                put("d2", num(d2));
                put("amplitude", num(amplitude));
            }
            Geometry::Layered { d1, d2 } => {
                put("geometry", "layered".into());
                put("d1", num(d1));
                put("d2", num(d2));
            }
        }
        put("c_init", num(self.c_init));
        match self.source {
            Source::None => put("source", "none".into()),
            Source::Bump { scale, a, b } => {
                put("source", "bump_source".into());
                put("source_scale", num(scale));
                put("source_a", num(a));
                put("source_b", num(b));
            }
        }
        put("freeze_c", self.freeze_c.to_string());
        put("strict", self.strict.to_string());
        put("out", self.out.display().to_string());
        put("workers", self.workers.to_string());
        put("newton_tol", num(self.newton.tol));
        put("newton_max_iter", self.newton.max_iter.to_string());
        put("newton_max_halvings", self.newton.max_halvings.to_string());
        s
    }
}

// shortest representation that parses back to the same f64
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

/// Splits text into key/value pairs; duplicate keys are an error.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse value '{v}' of key '{key}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_value(key, s.trim())).collect()
}

fn parse_triple(key: &str, v: &str) -> Result<[f64; 3]> {
    let l = parse_list(key, v)?;
    l.try_into()
        .map_err(|_| Error::Config(format!("key '{key}' needs three comma-separated values")))
}

struct Reader {
    map: BTreeMap<String, String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key).map(|v| parse_value(key, &v)).transpose()
    }

    fn set_parsed<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<bool> {
        match self.parsed(key)? {
            Some(v) => {
                *target = v;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn set_bool(&mut self, key: &str, target: &mut bool) -> Result<()> {
        if let Some(v) = self.take(key) {
            *target = match v.as_str() {
                "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                _ => return Err(Error::Config(format!("key '{key}' needs true or false, got '{v}'"))),
            };
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Config(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}
