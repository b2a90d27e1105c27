//! Time loop of both upscaled models: per-step sequence of cell flow solves,
//! pressure, Cahn–Hilliard cell steps and ion transport, with snapshots,
//! per-step balance diagnostics and checkpoint/resume.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_flow::{closed_form_kf, permeabilities, solve_w_phasefield, FlowProfile};
use crate::ch_cell::{cell_integrals, ch_step, extract_interfaces, lower_interface, make_initial_cell, CellState, PhasePair, StepInputs, CFL_LIMIT};
use crate::error::{Error, Result};
use crate::grid::{XGrid, YGrid};
use crate::macro_solver::{ion_step, solve_pressure, IonBc, IonStep, PressureBc, PressureSolution};
use crate::model::{LinearRate, ModelParams, ReactionRate};
use crate::scenario::{Geometry, ModelKind, PressureMode, ScenarioConfig, TimeStep, CFL_SAFETY};
use crate::sharp::{self, max_speed, shock_time, sharp_fields, sharp_step, SharpControls, SharpState};

/// Phase-field state: one cell state per x-cell plus the ion concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfState {
    pub t: f64,
    pub cells: Vec<CellState>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    PhaseField(PfState),
    Sharp(SharpState),
}

impl ModelState {
    pub fn t(&self) -> f64 {
        match self {
            ModelState::PhaseField(s) => s.t,
            ModelState::Sharp(s) => s.t,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelState::PhaseField(_) => ModelKind::PhaseField,
            ModelState::Sharp(_) => ModelKind::Sharp,
        }
    }

    fn len_x(&self) -> usize {
        match self {
            ModelState::PhaseField(s) => s.cells.len(),
            ModelState::Sharp(s) => s.len(),
        }
    }
}

/// Output record at one snapshot time. Interface positions are those of
/// the lower half strip; `None` where the interface is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub model: ModelKind,
    pub t: f64,
    pub x: Vec<f64>,
    /// Fluid-fluid interface, -d2 in the sharp model.
    pub y_ff: Vec<Option<f64>>,
    /// Fluid-solid interface, -(d1 + d2) in the sharp model.
    pub y_fs: Vec<Option<f64>>,
    pub c: Vec<f64>,
    /// Pressure at the cell centres.
    pub p: Vec<f64>,
    pub k_f: Vec<f64>,
    pub k_c: Vec<f64>,
    pub q_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Time after the step.
    pub t: f64,
    pub dt: f64,
    pub q_f: f64,
    pub courant: f64,
    /// Integrals over x and the full cross-section of the fluid-1, fluid-2
    /// and solid fractions after the step.
    pub mass: [f64; 3],
    /// Relative defect of the phase mass balance; periodic x only.
    pub mass_defect: Option<f64>,
    /// Largest |φ1 + φ2 + φ3 - 1| over all nodes.
    pub sum_defect: f64,
    /// Relative defect of the ion balance; none when c is frozen.
    pub ion_defect: Option<f64>,
    /// Largest Newton iteration count and sub-step count over the cells.
    pub newton_iterations: usize,
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub model: ModelKind,
    pub pressure: PressureBc,
    pub t_star: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub wall_time: f64,
}

/// Everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Resolved configuration text.
    pub config: String,
    pub pressure: PressureBc,
    pub state: ModelState,
    pub steps: usize,
    pub next_snapshot: usize,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    xgrid: XGrid,
    ygrid: Option<YGrid>,
    pressure: PressureBc,
    ion_bc: IonBc,
    source: Vec<f64>,
    rate: LinearRate,
    state: ModelState,
    steps: usize,
    next_snapshot: usize,
    t_star: Option<f64>,
    pool: rayon::ThreadPool,
}

struct PfFields {
    w: Vec<FlowProfile>,
    k_f: Vec<f64>,
    k_c: Vec<f64>,
    pressure: PressureSolution,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} worker threads: {e}")))
}

fn pf_permeabilities(
    cells: &[CellState],
    grid: &YGrid,
    params: &ModelParams,
    t: f64,
    pool: &rayon::ThreadPool,
) -> Result<Vec<(FlowProfile, f64, f64)>> {
    pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(k, cell)| {
                let phases = cell.phases();
                let w = solve_w_phasefield(&phases, grid, params).map_err(|e| e.at_cell(k, t))?;
                let (kf, kc) = permeabilities(&phases, &w, grid, params).map_err(|e| e.at_cell(k, t))?;
                Ok((w, kf, kc))
            })
            .collect()
    })
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, kind: ModelKind) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.params.clone();
        let xgrid = XGrid::new(cfg.nx)?;
        let pool = thread_pool(cfg.workers)?;
        let x = xgrid.centers();
        let widths: Vec<(f64, f64)> = x.iter().map(|x| cfg.geometry.widths(*x)).collect();
        let c = vec![cfg.c_init; cfg.nx];
        let (state, ygrid) = match kind {
            ModelKind::PhaseField => {
                let ygrid = YGrid::new(cfg.y_mode, cfg.ny, params.ell_omega, params.eps_bar)?;
                let cells = pool.install(|| {
                    widths
                        .par_iter()
                        .enumerate()
                        .map(|(k, (d1, d2))| make_initial_cell(*d1, *d2, &ygrid, &params).map_err(|e| e.at_cell(k, 0.0)))
                        .collect::<Result<Vec<_>>>()
                })?;
                (ModelState::PhaseField(PfState { t: 0.0, cells, c }), Some(ygrid))
            }
            ModelKind::Sharp => {
                let state = SharpState {
                    t: 0.0,
                    d1: widths.iter().map(|w| w.0).collect(),
                    d2: widths.iter().map(|w| w.1).collect(),
                    c,
                };
                state.validate(&params)?;
                (ModelState::Sharp(state), None)
            }
        };

        // flux and pressure drop at t = 0
        let sharp_kf: Vec<f64> = widths
            .iter()
            .map(|(d1, d2)| closed_form_kf(*d1, *d2, &params))
            .collect::<Result<_>>()?;
        let model_kf: Vec<f64> = match &state {
            ModelState::PhaseField(s) => pf_permeabilities(&s.cells, ygrid.as_ref().unwrap(), &params, 0.0, &pool)?
                .into_iter()
                .map(|v| v.1)
                .collect(),
            ModelState::Sharp(_) => sharp_kf.clone(),
        };
        let dx = xgrid.dx();
        let (pressure, q_sharp) = match cfg.pressure {
            PressureMode::Calibrated { mean_velocity } => {
                let mean_inverse = widths.iter().map(|(a, b)| 0.5 / (a + b)).sum::<f64>() / cfg.nx as f64;
                let q = mean_velocity / mean_inverse;
                let drop = q * model_kf.iter().map(|k| dx / k).sum::<f64>();
                (PressureBc::Dirichlet { p_in: drop, p_out: 0.0 }, q)
            }
            PressureMode::Drop { p_in, p_out } => {
                let bc = PressureBc::Dirichlet { p_in, p_out };
                (bc, solve_pressure(&sharp_kf, bc, &xgrid)?.q_f)
            }
            PressureMode::Flux { q_f } => (PressureBc::Flux { q_f }, q_f),
        };
        let t_star = match cfg.geometry {
            Geometry::NWave { d1, d2, amplitude } => {
                let total = d1 + d2;
                let init = move |x: f64| total - (d1 + amplitude * (2.0 * std::f64::consts::PI * x).sin());
                Some(shock_time(&init, total, q_sharp, &params))
            }
            Geometry::Layered { .. } => None,
        };
        let ion_bc = if cfg.periodic {
            IonBc::Periodic
        } else {
            IonBc::Dirichlet {
                c_left: cfg.c_left,
                c_right: cfg.c_right,
            }
        };
        Ok(Simulation {
            source: x.iter().map(|x| cfg.source.eval(*x)).collect(),
            rate: LinearRate { c_eq: params.c_eq },
            cfg: cfg.clone(),
            xgrid,
            ygrid,
            pressure,
            ion_bc,
            state,
            steps: 0,
            next_snapshot: 0,
            t_star,
            pool,
        })
    }

    /// Continues from a checkpoint, optionally with a different worker count.
    pub fn resume(checkpoint: &Checkpoint, workers: Option<usize>) -> Result<Self> {
        let mut cfg = ScenarioConfig::parse(&checkpoint.config)?;
        if let Some(w) = workers {
            cfg.workers = w;
        }
        let mut sim = Simulation::new(&cfg, checkpoint.state.kind())?;
        if checkpoint.state.len_x() != cfg.nx {
            return Err(Error::Config("checkpoint does not match the configured nx".into()));
        }
        sim.pressure = checkpoint.pressure;
        sim.state = checkpoint.state.clone();
        sim.steps = checkpoint.steps;
        sim.next_snapshot = checkpoint.next_snapshot;
        Ok(sim)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.to_text(),
            pressure: self.pressure,
            state: self.state.clone(),
            steps: self.steps,
            next_snapshot: self.next_snapshot,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn t(&self) -> f64 {
        self.state.t()
    }

    pub fn kind(&self) -> ModelKind {
        self.state.kind()
    }

    pub fn pressure_bc(&self) -> PressureBc {
        self.pressure
    }

    pub fn t_star(&self) -> Option<f64> {
        self.t_star
    }

    pub fn x_grid(&self) -> &XGrid {
        &self.xgrid
    }

    pub fn y_grid(&self) -> Option<&YGrid> {
        self.ygrid.as_ref()
    }

    fn pf_fields(&self, s: &PfState) -> Result<PfFields> {
        let grid = self.ygrid.as_ref().expect("phase-field run has a y-grid");
        let per_cell = pf_permeabilities(&s.cells, grid, &self.cfg.params, s.t, &self.pool)?;
        let mut w = Vec::with_capacity(per_cell.len());
        let mut k_f = Vec::with_capacity(per_cell.len());
        let mut k_c = Vec::with_capacity(per_cell.len());
        for (wk, kf, kc) in per_cell {
            w.push(wk);
            k_f.push(kf);
            k_c.push(kc);
        }
        let pressure = solve_pressure(&k_f, self.pressure, &self.xgrid)?;
        Ok(PfFields { w, k_f, k_c, pressure })
    }

    /// Output record of the current state.
    pub fn snapshot(&self) -> Result<Snapshot> {
        let x = self.xgrid.centers();
        match &self.state {
            ModelState::PhaseField(s) => {
                let f = self.pf_fields(s)?;
                let grid = self.ygrid.as_ref().unwrap();
                let mut y_ff = Vec::with_capacity(x.len());
                let mut y_fs = Vec::with_capacity(x.len());
                for cell in &s.cells {
                    let interfaces = extract_interfaces(cell, grid);
                    y_ff.push(lower_interface(&interfaces, PhasePair::P12));
                    y_fs.push(lower_interface(&interfaces, PhasePair::P13));
                }
                Ok(Snapshot {
                    model: ModelKind::PhaseField,
                    t: s.t,
                    x,
                    y_ff,
                    y_fs,
                    c: s.c.clone(),
                    p: f.pressure.p_centers(),
                    k_f: f.k_f,
                    k_c: f.k_c,
                    q_f: f.pressure.q_f,
                })
            }
            ModelState::Sharp(s) => {
                let f = sharp_fields(s, self.pressure, &self.xgrid, &self.cfg.params)?;
                Ok(Snapshot {
                    model: ModelKind::Sharp,
                    t: s.t,
                    x,
                    y_ff: s.d2.iter().map(|d| Some(-d)).collect(),
                    y_fs: s.d1.iter().zip(&s.d2).map(|(a, b)| Some(-(a + b))).collect(),
                    c: s.c.clone(),
                    p: f.pressure.p_centers(),
                    k_f: f.k_f,
                    k_c: f.k_c,
                    q_f: f.pressure.q_f,
                })
            }
        }
    }

    // Time step towards `target` from a stable step size, spread evenly so
    // that the last step lands on the target.
    fn step_size(&self, stable: f64, target: f64) -> f64 {
        let nominal = match self.cfg.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto { max } => max.min(stable),
        };
        let remaining = target - self.t();
        let count = (remaining / nominal - 1e-9).ceil().max(1.0);
        remaining / count
    }

    /// Advances one step of at most the configured size, not past `target`.
    pub fn step(&mut self, target: f64) -> Result<StepDiagnostics> {
        if !(target > self.t()) {
            return Err(Error::InvalidParameter(format!(
                "target time {target} is not after the current time {}",
                self.t()
            )));
        }
        let diag = match &self.state {
            ModelState::PhaseField(s) => {
                let (next, diag) = self.pf_step(s, target)?;
                self.state = ModelState::PhaseField(next);
                diag
            }
            ModelState::Sharp(s) => {
                let (next, diag) = self.sharp_model_step(s, target)?;
                self.state = ModelState::Sharp(next);
                diag
            }
        };
        self.steps += 1;
        if let (true, Some(t_star)) = (self.cfg.strict, self.t_star) {
            if self.t() > t_star {
                return Err(Error::ValidityExceeded {
                    time: self.t(),
                    t_star,
                });
            }
        }
        Ok(diag)
    }

    fn pf_step(&self, s: &PfState, target: f64) -> Result<(PfState, StepDiagnostics)> {
        let params = &self.cfg.params;
        let grid = self.ygrid.as_ref().unwrap();
        let n = s.cells.len();
        let dx = self.xgrid.dx();
        let fields = self.pf_fields(s)?;
        let dpdx = &fields.pressure.dpdx;
        let vmax = (0..n)
            .map(|k| fields.w[k].w.iter().fold(0.0_f64, |m, w| m.max((w * dpdx[k]).abs())))
            .fold(0.0, f64::max);
        let stable = if vmax > 0.0 { CFL_SAFETY * CFL_LIMIT * dx / vmax } else { f64::INFINITY };
        let dt = self.step_size(stable, target);
        let last = (s.t + dt - target).abs() <= 1e-12 * target.max(1.0);
        let flowing: Vec<CellState> = s
            .cells
            .iter()
            .zip(&fields.w)
            .zip(dpdx)
            .map(|((cell, w), g)| {
                let mut c = cell.clone();
                c.set_flow(w.clone(), *g);
                c
            })
            .collect();
        let periodic = self.cfg.periodic;
        let upstream = |k: usize| -> usize {
            if dpdx[k] <= 0.0 {
                match (k > 0, periodic) {
                    (true, _) => k - 1,
                    (false, true) => n - 1,
                    (false, false) => k,
                }
            } else {
                match (k + 1 < n, periodic) {
                    (true, _) => k + 1,
                    (false, true) => 0,
                    (false, false) => k,
                }
            }
        };
        let t = s.t;
        let newton = self.cfg.newton;
        let rates: Vec<f64> = s.c.iter().map(|c| self.rate.rate(*c)).collect();
        let results = self.pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|k| {
                    let inputs = StepInputs {
                        dx,
                        dt,
                        dpdx: dpdx[k],
                        rate: rates[k],
                    };
                    let (cell, report) = ch_step(&flowing[k], &flowing[upstream(k)], grid, inputs, params, &newton)
                        .map_err(|e| e.at_cell(k, t))?;
                    let (phi_c, r_total) = cell_integrals(&cell, grid, rates[k], params);
                    Ok((cell, report, phi_c, r_total))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let phi_c_old: Vec<f64> = s
            .cells
            .iter()
            .map(|cell| grid.integrate(|j| cell.phi1[j] + params.delta))
            .collect();
        let mut cells = Vec::with_capacity(n);
        let mut phi_c_new = Vec::with_capacity(n);
        let mut reaction = Vec::with_capacity(n);
        let mut production = 0.0;
        let mut newton_iterations = 0;
        let mut substeps = 0;
        for (cell, report, phi_c, r_total) in results {
            cells.push(cell);
            phi_c_new.push(phi_c);
            reaction.push(params.da_bar / params.eps_bar * r_total);
            production += dx * report.production;
            newton_iterations = newton_iterations.max(report.iterations);
            substeps = substeps.max(report.substeps);
        }
        let mut c = s.c.clone();
        let mut ion_defect = None;
        if !self.cfg.freeze_c {
            let step = IonStep {
                c_old: &s.c,
                phi_c_old: &phi_c_old,
                phi_c_new: &phi_c_new,
                k_c: &fields.k_c,
                dpdx,
                reaction: &reaction,
                source: &self.source,
                dt,
                pec_bar: params.pec_bar,
                bc: self.ion_bc,
            };
            let (cn, balance) = ion_step(&step, &self.xgrid)?;
            c = cn;
            ion_defect = Some(balance.relative_defect());
        }
        let next = PfState {
            t: if last { target } else { s.t + dt },
            cells,
            c,
        };
        let mass_of = |st: &PfState| -> [f64; 3] {
            let mut m = [0.0; 3];
            for cell in &st.cells {
                m[0] += dx * grid.integrate(|j| cell.phi1[j]);
                m[1] += dx * grid.integrate(|j| cell.phi2[j]);
                m[2] += dx * grid.integrate(|j| cell.phi3[j]);
            }
            m
        };
        let (m0, m1) = (mass_of(s), mass_of(&next));
        let mass_defect = periodic.then(|| {
            let d1 = (m1[0] - m0[0] - production).abs();
            let d2 = (m1[1] - m0[1]).abs();
            d1.max(d2) / m0[0].abs().max(m0[1].abs())
        });
        let sum_defect = next
            .cells
            .iter()
            .flat_map(|cell| (0..cell.len()).map(move |j| (cell.phi1[j] + cell.phi2[j] + cell.phi3[j] - 1.0).abs()))
            .fold(0.0, f64::max);
        let diag = StepDiagnostics {
            step: self.steps + 1,
            t: next.t,
            dt,
            q_f: fields.pressure.q_f,
            courant: dt * vmax / dx,
            mass: m1,
            mass_defect,
            sum_defect,
            ion_defect,
            newton_iterations,
            substeps,
        };
        Ok((next, diag))
    }

    fn sharp_model_step(&self, s: &SharpState, target: f64) -> Result<(SharpState, StepDiagnostics)> {
        let params = &self.cfg.params;
        let dx = self.xgrid.dx();
        let fields = sharp_fields(s, self.pressure, &self.xgrid, params)?;
        let speed = max_speed(s, fields.pressure.q_f, params);
        let stable = if speed > 0.0 { CFL_SAFETY * sharp::CFL_LIMIT * dx / speed } else { f64::INFINITY };
        let dt = self.step_size(stable, target);
        let controls = SharpControls {
            pressure: self.pressure,
            ion: self.ion_bc,
            source: &self.source,
            rate: &self.rate,
            freeze_c: self.cfg.freeze_c,
        };
        let (mut next, report) = sharp_step(s, dt, &self.xgrid, params, &controls)?;
        let last = (next.t - target).abs() <= 1e-12 * target.max(1.0);
        if last {
            next.t = target;
        }
        let half = 0.5 * params.ell_omega;
        let mass_of = |st: &SharpState| -> [f64; 3] {
            let mut m = [0.0; 3];
            for k in 0..st.len() {
                m[0] += dx * 2.0 * st.d1[k];
                m[1] += dx * 2.0 * st.d2[k];
                m[2] += dx * 2.0 * (half - st.d1[k] - st.d2[k]);
            }
            m
        };
        let (m0, m1) = (mass_of(s), mass_of(&next));
        let diag = StepDiagnostics {
            step: self.steps + 1,
            t: next.t,
            dt,
            q_f: fields.pressure.q_f,
            courant: report.courant,
            mass: m1,
            mass_defect: self.cfg.periodic.then(|| (m1[1] - m0[1]).abs() / m0[1]),
            sum_defect: 0.0,
            ion_defect: report.ion.map(|b| b.relative_defect()),
            newton_iterations: 0,
            substeps: 0,
        };
        Ok((next, diag))
    }

    /// Runs to t_end.
    pub fn run(&mut self) -> Result<RunOutput> {
        self.run_until(self.cfg.t_end)
    }

    /// Runs to `t_stop`, recording the snapshots reached on the way. Stopping
    /// at a snapshot time leaves the step sequence of the full run unchanged.
    pub fn run_until(&mut self, t_stop: f64) -> Result<RunOutput> {
        let start = Instant::now();
        let t_stop = t_stop.min(self.cfg.t_end);
        let tol = 1e-12 * self.cfg.t_end.max(1.0);
        let mut out = RunOutput {
            model: self.kind(),
            pressure: self.pressure,
            t_star: self.t_star,
            snapshots: Vec::new(),
            diagnostics: Vec::new(),
            wall_time: 0.0,
        };
        let times = self.cfg.snapshots.clone();
        loop {
            while self.next_snapshot < times.len() && times[self.next_snapshot] <= self.t() + tol {
                out.snapshots.push(self.snapshot()?);
                self.next_snapshot += 1;
            }
            if self.t() >= t_stop - tol {
                break;
            }
            let target = times.get(self.next_snapshot).copied().unwrap_or(f64::INFINITY).min(t_stop);
            out.diagnostics.push(self.step(target)?);
        }
        out.wall_time = start.elapsed().as_secs_f64();
        Ok(out)
    }
}
