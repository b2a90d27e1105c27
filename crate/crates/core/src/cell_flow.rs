//! Transversal flow cell problem for the velocity shape w(y) and the
//! upscaled permeabilities K_f, K_c.

use crate::error::{Error, Result};
use crate::grid::{YGrid, YMode};
use crate::linalg::solve_tridiagonal;
use crate::model::{mixtures, ModelParams, PhasePoint};

/// Nodal solution of the flow cell problem on a [`YGrid`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowProfile {
    pub w: Vec<f64>,
}

impl FlowProfile {
    pub fn zeros(n: usize) -> Self {
        FlowProfile { w: vec![0.0; n] }
    }
}

/// Solves ρ3 d(φ̃_f) w - ∂_y(γ̃ ∂_y w) = φ̃_f with linear elements.
///
/// Mass and load are lumped, element viscosities are harmonic means of the
/// nodal γ̃. w vanishes at the wall(s); in symmetric mode the symmetry line
/// carries the natural condition ∂_y w = 0.
pub fn solve_w_phasefield(phi: &[PhasePoint], grid: &YGrid, params: &ModelParams) -> Result<FlowProfile> {
    let n = grid.len();
    if phi.len() != n {
        return Err(Error::InvalidParameter(format!(
            "phase field has {} nodes, grid has {n}",
            phi.len()
        )));
    }
    let h = grid.spacing();
    let mut gamma = Vec::with_capacity(n);
    let mut reaction = Vec::with_capacity(n);
    let mut load = Vec::with_capacity(n);
    for (j, p) in phi.iter().enumerate() {
        let m = mixtures(*p, params)?;
        gamma.push(m.gamma_tilde);
        reaction.push(grid.mass(j) * params.rho3 * m.dissipation);
        load.push(grid.mass(j) * m.phi_f_tilde);
    }
    let element: Vec<f64> = gamma
        .windows(2)
        .map(|g| 2.0 * g[0] * g[1] / (g[0] + g[1]) / h)
        .collect();

    // unknowns are nodes first..last (inclusive)
    let first = 1;
    let last = match grid.mode() {
        YMode::Symmetric => n - 1,
        YMode::Full => n - 2,
    };
    let m = last - first + 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for (row, j) in (first..=last).enumerate() {
        diag[row] = reaction[j];
        rhs[row] = load[j];
        // element to the left (j-1, j) always exists since j >= 1
        diag[row] += element[j - 1];
        if j - 1 >= first {
            lower[row] = -element[j - 1];
        }
        if j + 1 < n {
            diag[row] += element[j];
            if j + 1 <= last {
                upper[row] = -element[j];
            }
        }
    }
    let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut w = vec![0.0; n];
    w[first..=last].copy_from_slice(&sol);
    Ok(FlowProfile { w })
}

/// K_f = ∫ φ̃_f w dy and K_c = ∫ φ̃_c w dy over the full cross-section.
pub fn permeabilities(phi: &[PhasePoint], w: &FlowProfile, grid: &YGrid, params: &ModelParams) -> Result<(f64, f64)> {
    let mut kf = 0.0;
    let mut kc = 0.0;
    for (j, (p, wj)) in phi.iter().zip(&w.w).enumerate() {
        let m = mixtures(*p, params)?;
        kf += grid.mass(j) * m.phi_f_tilde * wj;
        kc += grid.mass(j) * m.phi_c_tilde * wj;
    }
    let s = grid.symmetry_factor();
    Ok((s * kf, s * kc))
}

/// Slip length L_slip = γ1 / sqrt(ρ3 d0 γ3).
pub fn slip_length(params: &ModelParams) -> f64 {
    params.gamma[0] / (params.rho3 * params.d0 * params.gamma[2]).sqrt()
}

fn check_widths(d1: f64, d2: f64) -> Result<()> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Domain {
            what: "layer width",
            value: d1.min(d2),
        });
    }
    Ok(())
}

/// Closed-form total permeability of the symmetric layered geometry.
pub fn closed_form_kf(d1: f64, d2: f64, params: &ModelParams) -> Result<f64> {
    check_widths(d1, d2)?;
    Ok(kf_unchecked(d1, d2, params))
}

/// Closed-form fluid-1 permeability of the symmetric layered geometry.
pub fn closed_form_kc(d1: f64, d2: f64, params: &ModelParams) -> Result<f64> {
    check_widths(d1, d2)?;
    Ok(kc_unchecked(d1, d2, params))
}

pub(crate) fn kf_unchecked(d1: f64, d2: f64, params: &ModelParams) -> f64 {
    let [g1, g2, _] = params.gamma;
    let ls = slip_length(params);
    let total = d1 + d2;
    2.0 / g1 * (total.powi(3) / 3.0 + (g1 / g2 - 1.0) * d2.powi(3) / 3.0 + ls * total * total)
}

pub(crate) fn kc_unchecked(d1: f64, d2: f64, params: &ModelParams) -> f64 {
    let g1 = params.gamma[0];
    let ls = slip_length(params);
    2.0 / g1 * (d1.powi(3) / 3.0 + d1 * d1 * d2 / 2.0 + ls * d1 * (d1 + d2))
}

/// Exact piecewise solution of the sharp-interface cell problem in the
/// symmetric layered geometry: fluid 2 in |y| < d2, fluid 1 in
/// d2 < |y| < d1 + d2, solid up to the walls at |y| = ℓ_Ω/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpFlow {
    d1: f64,
    d2: f64,
    half_width: f64,
    gamma: [f64; 3],
    /// Decay rate sqrt(ρ3 d0 / γ3) in the solid.
    kappa: f64,
    /// w at the centre line.
    a2: f64,
    /// Constant of the fluid-1 parabola w = a1 - s²/(2γ1).
    a1: f64,
    /// Amplitude of the solid branch w = c sinh(κ (ℓ_Ω/2 - s)).
    c: f64,
}

pub fn solve_w_sharp(d1: f64, d2: f64, params: &ModelParams) -> Result<SharpFlow> {
    check_widths(d1, d2)?;
    let half_width = 0.5 * params.ell_omega;
    let total = d1 + d2;
    if total >= half_width {
        return Err(Error::Domain {
            what: "total layer width",
            value: total,
        });
    }
    if !(params.d0 > 0.0) {
        return Err(Error::InvalidParameter("sharp flow profile needs d0 > 0".into()));
    }
    let [g1, g2, g3] = params.gamma;
    let kappa = (params.rho3 * params.d0 / g3).sqrt();
    let arg = kappa * (half_width - total);
    // flux continuity at the solid: -total = -γ3 κ c cosh(arg)
    let w_interface = total * arg.tanh() / (g3 * kappa);
    let c = if arg > 700.0 {
        0.0
    } else {
        total / (g3 * kappa * arg.cosh())
    };
    let a1 = w_interface + total * total / (2.0 * g1);
    let a2 = a1 - d2 * d2 / (2.0 * g1) + d2 * d2 / (2.0 * g2);
    Ok(SharpFlow {
        d1,
        d2,
        half_width,
        gamma: [g1, g2, g3],
        kappa,
        a2,
        a1,
        c,
    })
}

impl SharpFlow {
    pub fn decay_rate(&self) -> f64 {
        self.kappa
    }

    pub fn total_width(&self) -> f64 {
        self.d1 + self.d2
    }

    fn solid_value(&self, s: f64) -> f64 {
        let total = self.d1 + self.d2;
        let w_interface = total * (self.kappa * (self.half_width - total)).tanh() / (self.gamma[2] * self.kappa);
        if self.c == 0.0 {
            // sinh ratio evaluated without overflow
            w_interface * (-(self.kappa * (s - total))).exp()
        } else {
            self.c * (self.kappa * (self.half_width - s)).sinh()
        }
    }

    fn solid_slope(&self, s: f64) -> f64 {
        if self.c == 0.0 {
            -self.kappa * self.solid_value(s)
        } else {
            -self.kappa * self.c * (self.kappa * (self.half_width - s)).cosh()
        }
    }

    /// w(y).
    pub fn eval(&self, y: f64) -> f64 {
        let s = y.abs();
        let total = self.d1 + self.d2;
        if s <= self.d2 {
            self.a2 - s * s / (2.0 * self.gamma[1])
        } else if s <= total {
            self.a1 - s * s / (2.0 * self.gamma[0])
        } else if s <= self.half_width {
            self.solid_value(s)
        } else {
            0.0
        }
    }

    /// One-sided limits (from below, from above) of w at position y.
    pub fn limits(&self, y: f64) -> (f64, f64) {
        (self.branch_value(y, false), self.branch_value(y, true))
    }

    /// One-sided limits of the shear flux γ ∂_y w at position y.
    pub fn flux_limits(&self, y: f64) -> (f64, f64) {
        (self.branch_flux(y, false), self.branch_flux(y, true))
    }

    // Region index of |y| taken from the given side of y.
    fn region(&self, y: f64, above: bool) -> usize {
        let s = y.abs();
        // moving up in y moves |y| outward for y > 0 and inward for y < 0
        let outward = (y >= 0.0) == above;
        let total = self.d1 + self.d2;
        let inside = |b: f64| if outward { s < b } else { s <= b };
        if inside(self.d2) {
            1
        } else if inside(total) {
            0
        } else {
            2
        }
    }

    fn branch_value(&self, y: f64, above: bool) -> f64 {
        let s = y.abs();
        match self.region(y, above) {
            1 => self.a2 - s * s / (2.0 * self.gamma[1]),
            0 => self.a1 - s * s / (2.0 * self.gamma[0]),
            _ => self.solid_value(s),
        }
    }

    fn branch_flux(&self, y: f64, above: bool) -> f64 {
        let s = y.abs();
        let sign = if y >= 0.0 { 1.0 } else { -1.0 };
        let region = self.region(y, above);
        let ds = match region {
            1 => -s / self.gamma[1],
            0 => -s / self.gamma[0],
            _ => self.solid_slope(s),
        };
        sign * self.gamma[region] * ds
    }
}
