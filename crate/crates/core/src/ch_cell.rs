//! Per-cross-section Cahn–Hilliard system: initial layered cells, one
//! implicit-in-y time step with explicit upwind x-transport, the transversal
//! integrals feeding the ion equation, and interface extraction.

use serde::{Deserialize, Serialize};

use crate::cell_flow::FlowProfile;
use crate::error::{Error, Result};
use crate::grid::YGrid;
use crate::linalg::{Block, BlockTridiagonal, BlockVec};
use crate::model::{equilibrium_profile, reaction_q, triple_well_grad_hessian, ModelParams, PhasePoint};

/// Discrete microscale state of one x-cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi3: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub mu3: Vec<f64>,
    /// Horizontal velocity v0^(1) = -w ∂_x p.
    pub v1: Vec<f64>,
    /// Transversal velocity v1^(2) recovered from the divergence relation.
    pub v2: Vec<f64>,
    pub w: FlowProfile,
}

impl CellState {
    pub fn len(&self) -> usize {
        self.phi1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi1.is_empty()
    }

    pub fn phase(&self, j: usize) -> PhasePoint {
        PhasePoint::new(self.phi1[j], self.phi2[j], self.phi3[j])
    }

    pub fn phases(&self) -> Vec<PhasePoint> {
        (0..self.len()).map(|j| self.phase(j)).collect()
    }

    /// Stores w and sets v1 = -w ∂_x p.
    pub fn set_flow(&mut self, w: FlowProfile, dpdx: f64) {
        self.v1 = w.w.iter().map(|wj| -wj * dpdx).collect();
        self.w = w;
    }
}

/// Minimum separation of interfaces, in units of ε̄.
pub const MIN_SEPARATION: f64 = 4.0;

/// Layered cell: fluid 2 in |y| < d2, fluid 1 up to |y| = d1 + d2, solid beyond.
///
/// Transitions use the equilibrium profile; φ3 closes the unit sum exactly.
pub fn make_initial_cell(d1: f64, d2: f64, grid: &YGrid, params: &ModelParams) -> Result<CellState> {
    let eps = params.eps_bar;
    let total = d1 + d2;
    let half = 0.5 * params.ell_omega;
    let gap = MIN_SEPARATION * eps;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Geometry(format!("widths must be positive (d1 = {d1}, d2 = {d2})")));
    }
    if d1 < gap {
        return Err(Error::Geometry(format!("fluid-1 layer d1 = {d1} thinner than {gap}")));
    }
    // the fluid-2 interface meets its mirror image across y = 0
    if 2.0 * d2 < gap {
        return Err(Error::Geometry(format!("fluid-2 layer 2 d2 = {} thinner than {gap}", 2.0 * d2)));
    }
    if half - total < gap {
        return Err(Error::Geometry(format!(
            "fluid-solid interface at |y| = {total} within {gap} of the wall"
        )));
    }
    let n = grid.len();
    let mut s = CellState {
        phi1: Vec::with_capacity(n),
        phi2: Vec::with_capacity(n),
        phi3: Vec::with_capacity(n),
        mu1: vec![0.0; n],
        mu2: vec![0.0; n],
        mu3: vec![0.0; n],
        v1: vec![0.0; n],
        v2: vec![0.0; n],
        w: FlowProfile::zeros(n),
    };
    for &y in grid.nodes() {
        let fluid = equilibrium_profile((total - y.abs()) / eps);
        let inner = equilibrium_profile((d2 - y.abs()) / eps);
        s.phi1.push(fluid * (1.0 - inner));
        s.phi2.push(fluid * inner);
        s.phi3.push(1.0 - fluid);
    }
    Ok(s)
}

/// Newton controls for [`ch_step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Max-norm tolerance on the scaled residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of step halvings tried before giving up on an iteration.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 30,
            max_halvings: 12,
        }
    }
}

/// Courant number above which a step is rejected.
pub const CFL_LIMIT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    /// Newton iterations summed over sub-steps.
    pub iterations: usize,
    /// Largest final residual over sub-steps.
    pub residual: f64,
    /// Number of implicit solves the step was split into.
    pub substeps: usize,
    /// Full-width change of ∫φ1 due to the reaction term, summed over sub-steps.
    pub production: f64,
}

/// Data that stays fixed during the Newton solve of one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs {
    pub dx: f64,
    pub dt: f64,
    /// Macroscopic pressure gradient; its sign picks the upwind side.
    pub dpdx: f64,
    /// r(c^n) at this x.
    pub rate: f64,
}

struct Frozen<'a> {
    grid: &'a YGrid,
    params: &'a ModelParams,
    dt: f64,
    rate: f64,
    old1: Vec<f64>,
    old2: Vec<f64>,
    /// Explicit x-transport of φ1, φ2.
    x1: Vec<f64>,
    x2: Vec<f64>,
    /// φ̃_f v2 through the face between nodes j and j+1.
    face_flux: Vec<f64>,
}

fn phi_f_tilde(p1: f64, p2: f64, delta: f64) -> f64 {
    2.0 * delta + (1.0 - 2.0 * delta) * (p1 + p2)
}

struct NodeEval {
    g: [f64; 2],
    /// dG_a/dφ_b on the plane.
    dg: [[f64; 2]; 2],
}

fn node_eval(p1: f64, p2: f64, params: &ModelParams) -> Result<NodeEval> {
    let (g, h) = triple_well_grad_hessian(PhasePoint::on_plane(p1, p2), params)?;
    Ok(NodeEval {
        g: [g[0], g[1]],
        dg: [[h[0][0] - h[0][2], h[0][1] - h[0][2]], [h[1][0] - h[1][2], h[1][1] - h[1][2]]],
    })
}

impl Frozen<'_> {
    fn laplace(&self, u: &[BlockVec], comp: usize, j: usize) -> f64 {
        let h = self.grid.spacing();
        let mut s = 0.0;
        if j > 0 {
            s += u[j][comp] - u[j - 1][comp];
        }
        if j + 1 < u.len() {
            s += u[j][comp] - u[j + 1][comp];
        }
        s / h
    }

    fn face(&self, j: usize) -> f64 {
        // faces outside the grid carry no flux
        if j < self.face_flux.len() {
            self.face_flux[j]
        } else {
            0.0
        }
    }

    fn residual(&self, u: &[BlockVec]) -> Result<Vec<BlockVec>> {
        let p = self.params;
        let eps = p.eps_bar;
        let n = u.len();
        let kappa = [eps * p.m_bar / p.sigma[0], eps * p.m_bar / p.sigma[1]];
        let react = p.da_bar / eps;
        let at = p.alpha_tilde();
        let ratio: Vec<[f64; 2]> = u
            .iter()
            .map(|v| {
                let f = phi_f_tilde(v[0], v[1], p.delta);
                [v[0] / f, v[1] / f]
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let v = u[j];
            let m = self.grid.mass(j);
            let ev = node_eval(v[0], v[1], p)?;
            let mut yflux = [0.0; 2];
            for (c, yf) in yflux.iter_mut().enumerate() {
                if j + 1 < n {
                    *yf += self.face(j) * 0.5 * (ratio[j][c] + ratio[j + 1][c]);
                }
                if j > 0 {
                    *yf -= self.face(j - 1) * 0.5 * (ratio[j - 1][c] + ratio[j][c]);
                }
            }
            let q = reaction_q(PhasePoint::on_plane(v[0], v[1]));
            let source = q * (self.rate + at * (2.0 * v[2] + v[3]));
            let r0 = (v[0] - self.old1[j])
                + self.dt * self.x1[j]
                + self.dt / m * (yflux[0] + kappa[0] * self.laplace(u, 2, j))
                + self.dt * react * source;
            let r1 = (v[1] - self.old2[j]) + self.dt * self.x2[j] + self.dt / m * (yflux[1] + kappa[1] * self.laplace(u, 3, j));
            let r2 = eps * v[2] - ev.g[0] - eps * eps * p.sigma[0] / m * self.laplace(u, 0, j);
            let r3 = eps * v[3] - ev.g[1] - eps * eps * p.sigma[1] / m * self.laplace(u, 1, j);
            out.push(BlockVec::new(r0, r1, r2, r3));
        }
        Ok(out)
    }

    // rate of ∫φ1 from the reaction term at u, consistent with the residual
    fn production(&self, u: &[BlockVec]) -> f64 {
        let p = self.params;
        let at = p.alpha_tilde();
        let react = p.da_bar / p.eps_bar;
        -react
            * self.grid.integrate(|j| {
                let v = u[j];
                reaction_q(PhasePoint::on_plane(v[0], v[1])) * (self.rate + at * (2.0 * v[2] + v[3]))
            })
    }

    fn jacobian(&self, u: &[BlockVec]) -> Result<BlockTridiagonal> {
        let p = self.params;
        let eps = p.eps_bar;
        let n = u.len();
        let h = self.grid.spacing();
        let kappa = [eps * p.m_bar / p.sigma[0], eps * p.m_bar / p.sigma[1]];
        let react = p.da_bar / eps;
        let at = p.alpha_tilde();
        let slope = 1.0 - 2.0 * p.delta;
        // dψ_c/dφ_b for ψ_c = φ_c / φ̃_f
        let dratio: Vec<[[f64; 2]; 2]> = u
            .iter()
            .map(|v| {
                let f = phi_f_tilde(v[0], v[1], p.delta);
                let mut d = [[0.0; 2]; 2];
                for c in 0..2 {
                    for b in 0..2 {
                        d[c][b] = if c == b { 1.0 / f } else { 0.0 } - v[c] * slope / (f * f);
                    }
                }
                d
            })
            .collect();
        let mut jac = BlockTridiagonal::zeros(n);
        for j in 0..n {
            let v = u[j];
            let m = self.grid.mass(j);
            let ev = node_eval(v[0], v[1], p)?;
            let neighbours = (j > 0) as usize + (j + 1 < n) as usize;
            let diag_lap = neighbours as f64 / h;
            let mut d = Block::zeros();

            let up = if j + 1 < n { self.face(j) } else { 0.0 };
            let down = if j > 0 { self.face(j - 1) } else { 0.0 };
            for c in 0..2 {
                for b in 0..2 {
                    d[(c, b)] = self.dt / m * 0.5 * (up - down) * dratio[j][c][b];
                }
                d[(c, c)] += 1.0;
                d[(c, 2 + c)] = self.dt / m * kappa[c] * diag_lap;
            }
            let p3 = 1.0 - v[0] - v[1];
            let q = 30.0 * v[0] * v[0] * p3 * p3;
            let dq1 = 60.0 * v[0] * p3 * p3 - 60.0 * v[0] * v[0] * p3;
            let dq2 = -60.0 * v[0] * v[0] * p3;
            let bracket = self.rate + at * (2.0 * v[2] + v[3]);
            d[(0, 0)] += self.dt * react * dq1 * bracket;
            d[(0, 1)] += self.dt * react * dq2 * bracket;
            d[(0, 2)] += self.dt * react * q * 2.0 * at;
            d[(0, 3)] += self.dt * react * q * at;
            for c in 0..2 {
                d[(2 + c, 2 + c)] = eps;
                for b in 0..2 {
                    d[(2 + c, b)] = -ev.dg[c][b];
                }
                d[(2 + c, c)] -= eps * eps * p.sigma[c] / m * diag_lap;
            }
            jac.diag[j] = d;

            let off = |nb: usize, face: f64| {
                let mut o = Block::zeros();
                for c in 0..2 {
                    for b in 0..2 {
                        o[(c, b)] = self.dt / m * 0.5 * face * dratio[nb][c][b];
                    }
                    o[(c, 2 + c)] = -self.dt / m * kappa[c] / h;
                    o[(2 + c, c)] = eps * eps * p.sigma[c] / m / h;
                }
                o
            };
            if j + 1 < n {
                jac.upper[j] = off(j + 1, up);
            }
            if j > 0 {
                jac.lower[j] = off(j - 1, -down);
            }
        }
        Ok(jac)
    }
}

fn max_norm(r: &[BlockVec]) -> f64 {
    r.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

// Merit function of the line search; the Newton direction descends on it.
fn sum_squares(r: &[BlockVec]) -> f64 {
    r.iter().map(|v| v.norm_squared()).sum()
}

/// One time step of the cell system at one x.
///
/// `prev` and `upstream` must carry v1 from the current pressure solve. The
/// upstream cell is the x-neighbour against the flow; pass `prev` itself
/// for an inflow boundary with zero gradient.
pub fn ch_step(
    prev: &CellState,
    upstream: &CellState,
    grid: &YGrid,
    inputs: StepInputs,
    params: &ModelParams,
    options: &NewtonOptions,
) -> Result<(CellState, NewtonReport)> {
    let StepInputs { dx, dt, dpdx, rate } = inputs;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    let n = grid.len();
    let vmax = prev.v1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let courant = dt * vmax / dx;
    if courant > CFL_LIMIT {
        return Err(Error::Cfl {
            courant,
            limit: CFL_LIMIT,
        });
    }
    let delta = params.delta;
    // ∂_x by one-sided differences towards the upstream neighbour
    let sign = if dpdx <= 0.0 { 1.0 } else { -1.0 };
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut div = Vec::with_capacity(n);
    for j in 0..n {
        let (a, b) = (prev.v1[j], upstream.v1[j]);
        x1.push(sign * (prev.phi1[j] * a - upstream.phi1[j] * b) / dx);
        x2.push(sign * (prev.phi2[j] * a - upstream.phi2[j] * b) / dx);
        let fa = prev.phi1[j] + prev.phi2[j] + 2.0 * delta * prev.phi3[j];
        let fb = upstream.phi1[j] + upstream.phi2[j] + 2.0 * delta * upstream.phi3[j];
        div.push(sign * (fa * a - fb * b) / dx);
    }
    // ∂_y(φ̃_f v2) = -div integrated from the lower wall
    let mut face_flux = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for (j, d) in div.iter().enumerate().take(n - 1) {
        acc -= grid.mass(j) * d;
        face_flux.push(acc);
    }
    let mut frozen = Frozen {
        grid,
        params,
        dt,
        rate,
        old1: prev.phi1.clone(),
        old2: prev.phi2.clone(),
        x1,
        x2,
        face_flux,
    };
    let u: Vec<BlockVec> = (0..n)
        .map(|j| BlockVec::new(prev.phi1[j], prev.phi2[j], prev.mu1[j], prev.mu2[j]))
        .collect();
    let mut report = NewtonReport {
        iterations: 0,
        residual: 0.0,
        substeps: 0,
        production: 0.0,
    };
    let u = advance(&mut frozen, u, dt, 0, options, &mut report)?;


    let mut next = CellState {
        phi1: u.iter().map(|v| v[0]).collect(),
        phi2: u.iter().map(|v| v[1]).collect(),
        phi3: u.iter().map(|v| 1.0 - v[0] - v[1]).collect(),
        mu1: u.iter().map(|v| v[2]).collect(),
        mu2: u.iter().map(|v| v[3]).collect(),
        mu3: u.iter().map(|v| -v[2] - v[3]).collect(),
        v1: prev.v1.clone(),
        v2: vec![0.0; n],
        w: prev.w.clone(),
    };
    // nodal v2 from the trapezoid integral of the divergence relation
    let h = grid.spacing();
    let mut flux = 0.0;
    for j in 0..n {
        if j > 0 {
            flux -= 0.5 * h * (div[j - 1] + div[j]);
        }
        next.v2[j] = flux / phi_f_tilde(next.phi1[j], next.phi2[j], delta);
    }
    Ok((next, report))
}

/// Deepest recursion of step halving after a failed Newton solve.
pub const MAX_SPLIT_DEPTH: usize = 8;

// Advances `frozen.old*` by `dt`, halving the step when Newton fails. The
// explicit x-terms are rates, so sub-steps keep the scheme conservative.
fn advance(
    frozen: &mut Frozen,
    u: Vec<BlockVec>,
    dt: f64,
    depth: usize,
    options: &NewtonOptions,
    report: &mut NewtonReport,
) -> Result<Vec<BlockVec>> {
    frozen.dt = dt;
    let start = u.clone();
    match newton(frozen, u, options) {
        Ok((u, iterations, residual)) => {
            report.iterations += iterations;
            report.residual = report.residual.max(residual);
            report.substeps += 1;
            report.production += dt * frozen.production(&u);
            frozen.old1 = u.iter().map(|v| v[0]).collect();
            frozen.old2 = u.iter().map(|v| v[1]).collect();
            Ok(u)
        }
        Err(e @ (Error::NewtonDiverged { .. } | Error::Domain { .. } | Error::SingularMatrix(_))) => {
            if depth == MAX_SPLIT_DEPTH {
                return Err(e);
            }
            let mid = advance(frozen, start, 0.5 * dt, depth + 1, options, report)?;
            advance(frozen, mid, 0.5 * dt, depth + 1, options, report)
        }
        Err(e) => Err(e),
    }
}

fn newton(frozen: &Frozen, mut u: Vec<BlockVec>, options: &NewtonOptions) -> Result<(Vec<BlockVec>, usize, f64)> {
    let params = frozen.params;
    let grid = frozen.grid;
    let n = u.len();
    // μ consistent with the current φ; equals the previous μ after a converged step
    let eps = params.eps_bar;
    for j in 0..n {
        let ev = node_eval(u[j][0], u[j][1], params)?;
        let m = grid.mass(j);
        for c in 0..2 {
            u[j][2 + c] = (ev.g[c] + eps * eps * params.sigma[c] / m * frozen.laplace(&u, c, j)) / eps;
        }
    }
    let mut res = frozen.residual(&u)?;
    let mut norm = max_norm(&res);
    let mut merit = sum_squares(&res);
    let mut iterations = 0;
    while norm > options.tol {
        if iterations == options.max_iter || !norm.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let rhs: Vec<BlockVec> = res.iter().map(|r| -r).collect();
        let step = frozen.jacobian(&u)?.solve(rhs)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=options.max_halvings {
            let trial: Vec<BlockVec> = u.iter().zip(&step).map(|(a, s)| a + s * lambda).collect();
            if let Ok(r) = frozen.residual(&trial) {
                let trial_merit = sum_squares(&r);
                if trial_merit < merit {
                    u = trial;
                    norm = max_norm(&r);
                    merit = trial_merit;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: norm,
            });
        }
    }
    Ok((u, iterations, norm))
}

/// Full-width integrals of φ̃_c and of R = -q(Φ)(r + α̃(μ1 - μ3)).
pub fn cell_integrals(state: &CellState, grid: &YGrid, rate: f64, params: &ModelParams) -> (f64, f64) {
    let at = params.alpha_tilde();
    let phi_c_total = grid.integrate(|j| state.phi1[j] + params.delta);
    let r_total = grid.integrate(|j| -reaction_q(state.phase(j)) * (rate + at * (state.mu1[j] - state.mu3[j])));
    (phi_c_total, r_total)
}

/// Interface type, named by the two phases it separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhasePair {
    P12,
    P13,
    P23,
}

impl PhasePair {
    fn indices(self) -> (usize, usize) {
        match self {
            PhasePair::P12 => (0, 1),
            PhasePair::P13 => (0, 2),
            PhasePair::P23 => (1, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub pair: PhasePair,
    pub y: f64,
}

/// Locates φ_i = φ_j crossings where both fractions exceed 1/3, sorted by y.
pub fn extract_interfaces(state: &CellState, grid: &YGrid) -> Vec<Interface> {
    let y = grid.nodes();
    let fields = [&state.phi1, &state.phi2, &state.phi3];
    let mut out = Vec::new();
    for pair in [PhasePair::P12, PhasePair::P13, PhasePair::P23] {
        let (a, b) = pair.indices();
        for j in 0..y.len().saturating_sub(1) {
            let d0 = fields[a][j] - fields[b][j];
            let d1 = fields[a][j + 1] - fields[b][j + 1];
            if (d0 < 0.0) == (d1 < 0.0) {
                continue;
            }
            let t = d0 / (d0 - d1);
            let value = fields[a][j] + t * (fields[a][j + 1] - fields[a][j]);
            if value > 1.0 / 3.0 {
                out.push(Interface {
                    pair,
                    y: y[j] + t * (y[j + 1] - y[j]),
                });
            }
        }
    }
    out.sort_by(|p, q| p.y.total_cmp(&q.y));
    out
}

/// Lowest interface of the given type in the lower half of the strip.
pub fn lower_interface(interfaces: &[Interface], pair: PhasePair) -> Option<f64> {
    interfaces.iter().find(|i| i.pair == pair && i.y <= 0.0).map(|i| i.y)
}

/// Integral of a nodal field over the discretised span (not doubled).
pub fn span_integral(values: &[f64], grid: &YGrid) -> f64 {
    grid.trapezoid(|j| values[j])
}
