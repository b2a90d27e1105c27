//! Darcy pressure and implicit upwind finite-volume ion transport along x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::XGrid;
use crate::linalg::{solve_cyclic_tridiagonal, solve_tridiagonal};

/// Boundary condition of the pressure equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PressureBc {
    /// Pressures at the inflow (x = -Δx/2) and outflow (x = 1 - Δx/2) faces.
    Dirichlet { p_in: f64, p_out: f64 },
    /// Prescribed total flux; the pressure is fixed to zero at the first face.
    Flux { q_f: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureSolution {
    /// Pressure at the n + 1 cell faces.
    pub p_faces: Vec<f64>,
    /// Total flux Q_f = -K_f ∂_x p, the same in every cell.
    pub q_f: f64,
    /// Pressure gradient per cell.
    pub dpdx: Vec<f64>,
}

impl PressureSolution {
    /// Pressure at the cell centres.
    pub fn p_centers(&self) -> Vec<f64> {
        self.p_faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Solves ∂_x(-K_f ∂_x p) = 0 with cellwise-constant K_f.
///
/// Linear elements on this grid reduce to series resistances, so the flux is
/// computed once and the pressure follows by summation.
pub fn solve_pressure(k_f: &[f64], bc: PressureBc, grid: &XGrid) -> Result<PressureSolution> {
    if k_f.len() != grid.len() {
        return Err(Error::InvalidParameter(format!(
            "{} permeabilities for {} cells",
            k_f.len(),
            grid.len()
        )));
    }
    if let Some(v) = k_f.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain {
            what: "permeability K_f",
            value: *v,
        });
    }
    let dx = grid.dx();
    let resistance: f64 = k_f.iter().map(|k| dx / k).sum();
    let (p_in, q_f) = match bc {
        PressureBc::Dirichlet { p_in, p_out } => (p_in, (p_in - p_out) / resistance),
        PressureBc::Flux { q_f } => (0.0, q_f),
    };
    let mut p_faces = Vec::with_capacity(k_f.len() + 1);
    p_faces.push(p_in);
    let mut p = p_in;
    for k in k_f {
        p -= q_f * dx / k;
        p_faces.push(p);
    }
    if let PressureBc::Dirichlet { p_out, .. } = bc {
        *p_faces.last_mut().unwrap() = p_out;
    }
    let dpdx = k_f.iter().map(|k| -q_f / k).collect();
    Ok(PressureSolution { p_faces, q_f, dpdx })
}

/// Boundary treatment of the ion equation in x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IonBc {
    Periodic,
    /// Ghost-cell concentrations left of the first and right of the last cell.
    Dirichlet { c_left: f64, c_right: f64 },
}

/// Data of one backward-Euler ion step.
#[derive(Debug, Clone, Copy)]
pub struct IonStep<'a> {
    pub c_old: &'a [f64],
    pub phi_c_old: &'a [f64],
    pub phi_c_new: &'a [f64],
    pub k_c: &'a [f64],
    pub dpdx: &'a [f64],
    /// Reaction source per cell, already scaled, e.g. (Da̅/ε̄) R_total.
    pub reaction: &'a [f64],
    /// s(x_k); enters as φ̃_c,total s.
    pub source: &'a [f64],
    pub dt: f64,
    pub pec_bar: f64,
    pub bc: IonBc,
}

/// Terms of the discrete ion balance of one step, all integrated over x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonBalance {
    pub content_old: f64,
    pub content_new: f64,
    /// dt times the reaction and source integrals.
    pub production: f64,
    /// dt times the net boundary inflow (zero for periodic x).
    pub inflow: f64,
}

impl IonBalance {
    /// content_new - content_old - production - inflow.
    pub fn defect(&self) -> f64 {
        self.content_new - self.content_old - self.production - self.inflow
    }

    /// Defect relative to the largest term of the balance.
    pub fn relative_defect(&self) -> f64 {
        let scale = self
            .content_old
            .abs()
            .max(self.content_new.abs())
            .max(self.production.abs())
            .max(self.inflow.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.defect().abs() / scale
        }
    }
}

/// Implicit upwind advection and implicit diffusion of c with explicit
/// reaction and source, one tridiagonal (cyclic in the periodic case) solve.
pub fn ion_step(step: &IonStep, grid: &XGrid) -> Result<(Vec<f64>, IonBalance)> {
    let n = grid.len();
    let dx = grid.dx();
    let dt = step.dt;
    for (name, v) in [
        ("c_old", step.c_old.len()),
        ("phi_c_old", step.phi_c_old.len()),
        ("phi_c_new", step.phi_c_new.len()),
        ("k_c", step.k_c.len()),
        ("dpdx", step.dpdx.len()),
        ("reaction", step.reaction.len()),
        ("source", step.source.len()),
    ] {
        if v != n {
            return Err(Error::InvalidParameter(format!("{name} has {v} entries for {n} cells")));
        }
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    if let Some(v) = step.phi_c_new.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::SingularMatrix(format!("ion storage phi_c_total = {v} is not positive")));
    }
    let periodic = step.bc == IonBc::Periodic;
    // advective speed -K_c ∂_x p per cell; a monotone pressure fixes its sign
    let speed: Vec<f64> = step.k_c.iter().zip(step.dpdx).map(|(k, g)| -k * g).collect();
    let forward = speed.iter().sum::<f64>() >= 0.0;
    let diff = 1.0 / (step.pec_bar * dx * dx);
    // D_{k+1/2} for k = 0..n-1; the last face wraps in the periodic case
    let face_phi: Vec<f64> = (0..n)
        .map(|k| {
            if k + 1 < n {
                0.5 * (step.phi_c_new[k] + step.phi_c_new[k + 1])
            } else if periodic {
                0.5 * (step.phi_c_new[k] + step.phi_c_new[0])
            } else {
                step.phi_c_new[k]
            }
        })
        .collect();
    let left_phi = if periodic { face_phi[n - 1] } else { step.phi_c_new[0] };

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut production = 0.0;
    for k in 0..n {
        diag[k] = step.phi_c_new[k] / dt;
        let prod = step.reaction[k] + step.phi_c_new[k] * step.source[k];
        rhs[k] = step.phi_c_old[k] * step.c_old[k] / dt + prod;
        production += dt * dx * prod;
        let d_right = face_phi[k] * diff;
        let d_left = if k > 0 { face_phi[k - 1] * diff } else { left_phi * diff };
        diag[k] += d_left + d_right;
        lower[k] -= d_left;
        upper[k] -= d_right;
        // ghost cells outside a Dirichlet boundary move with the boundary cell
        let prev = match (k > 0, periodic) {
            (true, _) => k - 1,
            (false, true) => n - 1,
            (false, false) => 0,
        };
        let next = match (k + 1 < n, periodic) {
            (true, _) => k + 1,
            (false, true) => 0,
            (false, false) => n - 1,
        };
        if forward {
            diag[k] += speed[k] / dx;
            lower[k] -= speed[prev] / dx;
        } else {
            diag[k] -= speed[k] / dx;
            upper[k] += speed[next] / dx;
        }
    }

    let c = if periodic {
        solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs)?
    } else {
        let IonBc::Dirichlet { c_left, c_right } = step.bc else {
            unreachable!()
        };
        // ghost couplings move to the right-hand side
        rhs[0] -= lower[0] * c_left;
        rhs[n - 1] -= upper[n - 1] * c_right;
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        solve_tridiagonal(&lower, &diag, &upper, &rhs)?
    };

    let content_old = dx * step.phi_c_old.iter().zip(step.c_old).map(|(p, c)| p * c).sum::<f64>();
    let content_new = dx * step.phi_c_new.iter().zip(&c).map(|(p, c)| p * c).sum::<f64>();
    let inflow = match step.bc {
        IonBc::Periodic => 0.0,
        IonBc::Dirichlet { c_left, c_right } => {
            let last = n - 1;
            let (adv_in, adv_out) = if forward {
                (speed[0] * c_left, speed[last] * c[last])
            } else {
                (speed[0] * c[0], speed[last] * c_right)
            };
            let diff_in = -step.phi_c_new[0] / step.pec_bar * (c[0] - c_left) / dx;
            let diff_out = -step.phi_c_new[last] / step.pec_bar * (c_right - c[last]) / dx;
            dt * ((adv_in + diff_in) - (adv_out + diff_out))
        }
    };
    Ok((
        c,
        IonBalance {
            content_old,
            content_new,
            production,
            inflow,
        },
    ))
}
