//! Pointwise model ingredients: the regularised double-well and triple-well
//! potentials, the projection onto the unit-sum plane, mixture quantities,
//! the interface-localised reaction term and the equilibrium interface profile.
//!
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nondimensional physical constants of the upscaled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Surface-energy coefficients Σ1, Σ2, Σ3.
    pub sigma: [f64; 3],
    /// Phase viscosities γ1, γ2, γ3 (γ3 sets the slip length, not a solid viscosity).
    pub gamma: [f64; 3],
    pub rho3: f64,
    /// Magnitude of the dissipation d(φ̃_f) = d0 (1 - φ̃_f)².
    pub d0: f64,
    /// Diffuse-interface width relative to the strip width.
    pub eps_bar: f64,
    /// Positivity regularisation δ.
    pub delta: f64,
    pub m_bar: f64,
    pub da_bar: f64,
    pub pec_bar: f64,
    /// Curvature-driven reaction coefficient α.
    pub alpha: f64,
    /// Equilibrium concentration of the default linear rate.
    pub c_eq: f64,
    /// Full strip width ℓ_Ω.
    pub ell_omega: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            sigma: [1.0; 3],
            // γ3 = 100 with d0 = 1e4 keeps the slip length at 1e-3
            gamma: [1.0, 1.0, 100.0],
            rho3: 1.0,
            d0: 1.0e4,
            eps_bar: 0.03,
            delta: 0.03,
            m_bar: 1.0,
            da_bar: 1.0,
            pec_bar: 1.0,
            alpha: 0.0,
            c_eq: 0.5,
            ell_omega: 2.0,
        }
    }
}

impl ModelParams {
    /// Default parameters with interface width `eps_bar` and δ = ε̄.
    pub fn with_eps(eps_bar: f64) -> Self {
        ModelParams {
            eps_bar,
            delta: eps_bar,
            ..ModelParams::default()
        }
    }

    /// α̃ = α + δ.
    pub fn alpha_tilde(&self) -> f64 {
        self.alpha + self.delta
    }

    /// 1/Σ_T = Σ 1/Σ_i.
    pub fn sigma_total(&self) -> f64 {
        1.0 / self.sigma.iter().map(|s| 1.0 / s).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (i, &s) in self.sigma.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma[{i}] = {s} must be positive"));
            }
        }
        for (i, &g) in self.gamma.iter().enumerate() {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma[{i}] = {g} must be positive"));
            }
        }
        if !(self.rho3 > 0.0) {
            return bad(format!("rho3 = {} must be positive", self.rho3));
        }
        if !(self.d0 >= 0.0) {
            return bad(format!("d0 = {} must be nonnegative", self.d0));
        }
        if !(self.eps_bar > 0.0 && self.eps_bar < 1.0) {
            return bad(format!("eps_bar = {} must lie in (0, 1)", self.eps_bar));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in [0, 1)", self.delta));
        }
        if !(self.m_bar > 0.0) {
            return bad(format!("m_bar = {} must be positive", self.m_bar));
        }
        if !(self.da_bar >= 0.0) {
            return bad(format!("da_bar = {} must be nonnegative", self.da_bar));
        }
        if !(self.pec_bar > 0.0) {
            return bad(format!("pec_bar = {} must be positive", self.pec_bar));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha = {} must be nonnegative", self.alpha));
        }
        if !self.c_eq.is_finite() {
            return bad("c_eq must be finite".into());
        }
        if !(self.ell_omega > 0.0) {
            return bad(format!("ell_omega = {} must be positive", self.ell_omega));
        }
        Ok(())
    }
}

/// Volume fractions (φ1, φ2, φ3) of fluid 1, fluid 2 and the solid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint(pub [f64; 3]);

impl PhasePoint {
    pub fn new(phi1: f64, phi2: f64, phi3: f64) -> Self {
        PhasePoint([phi1, phi2, phi3])
    }

    /// Point on the unit-sum plane with φ3 = 1 - φ1 - φ2.
    pub fn on_plane(phi1: f64, phi2: f64) -> Self {
        PhasePoint([phi1, phi2, 1.0 - phi1 - phi2])
    }

    pub fn phi1(&self) -> f64 {
        self.0[0]
    }
    pub fn phi2(&self) -> f64 {
        self.0[1]
    }
    pub fn phi3(&self) -> f64 {
        self.0[2]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

// Barrier arguments at or below this value are rejected.
const BARRIER_LIMIT: f64 = -1.0 + 1.0e-12;

/// ℓ(x) = x²/(1+x) on (-1, 0), zero for x ≥ 0, with its first two derivatives.
fn barrier(x: f64) -> Result<[f64; 3]> {
    if x >= 0.0 {
        Ok([0.0; 3])
    } else if x <= BARRIER_LIMIT || x.is_nan() {
        Err(Error::Domain {
            what: "double-well barrier",
            value: x,
        })
    } else {
        let s = 1.0 + x;
        Ok([x * x / s, 1.0 - 1.0 / (s * s), 2.0 / (s * s * s)])
    }
}

/// Value, first and second derivative of the regularised double well.
///
/// With `delta == 0` the barrier terms vanish and only the quartic remains.
pub fn double_well_all(phi: f64, delta: f64) -> Result<[f64; 3]> {
    if !phi.is_finite() {
        return Err(Error::Domain {
            what: "double well",
            value: phi,
        });
    }
    let u = phi * (1.0 - phi);
    let s = 1.0 - 2.0 * phi;
    let u2 = u * u;
    let mut out = [
        450.0 * u2 * u2,
        1800.0 * u2 * u * s,
        1800.0 * (3.0 * u2 * s * s - 2.0 * u2 * u),
    ];
    if delta > 0.0 {
        let lo = barrier(phi / delta)?;
        let hi = barrier((1.0 - phi) / delta)?;
        out[0] += delta * (lo[0] + hi[0]);
        out[1] += lo[1] - hi[1];
        out[2] += (lo[2] + hi[2]) / delta;
    }
    Ok(out)
}

/// W_dw(φ) = 450 φ⁴(1-φ)⁴ + δ ℓ(φ/δ) + δ ℓ((1-φ)/δ).
pub fn double_well(phi: f64, delta: f64) -> Result<f64> {
    double_well_all(phi, delta).map(|v| v[0])
}

pub fn double_well_d1(phi: f64, delta: f64) -> Result<f64> {
    double_well_all(phi, delta).map(|v| v[1])
}

pub fn double_well_d2(phi: f64, delta: f64) -> Result<f64> {
    double_well_all(phi, delta).map(|v| v[2])
}

/// Projection onto the plane φ1 + φ2 + φ3 = 1.
pub fn project(phi: PhasePoint, params: &ModelParams) -> PhasePoint {
    let st = params.sigma_total();
    let defect = 1.0 - phi.sum();
    let mut out = phi.0;
    for (o, s) in out.iter_mut().zip(params.sigma.iter()) {
        *o += st * defect / s;
    }
    PhasePoint(out)
}

// Constant Jacobian of the projection, J[i][j] = ∂(PΦ)_i/∂φ_j.
fn projection_jacobian(params: &ModelParams) -> [[f64; 3]; 3] {
    let st = params.sigma_total();
    let mut j = [[0.0; 3]; 3];
    for (i, row) in j.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = if i == k { 1.0 } else { 0.0 } - st / params.sigma[i];
        }
    }
    j
}

/// Per-component double-well evaluations at PΦ, each scaled by Σ_i.
fn weighted_wells(phi: PhasePoint, params: &ModelParams) -> Result<[[f64; 3]; 3]> {
    let p = project(phi, params);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let w = double_well_all(p.0[i], params.delta)?;
        for k in 0..3 {
            out[i][k] = params.sigma[i] * w[k];
        }
    }
    Ok(out)
}

/// W(Φ) = Σ_i Σ_i W_dw((PΦ)_i).
pub fn triple_well(phi: PhasePoint, params: &ModelParams) -> Result<f64> {
    Ok(weighted_wells(phi, params)?.iter().map(|w| w[0]).sum())
}

/// ∂_{φ_j} W, via the chain rule through the projection Jacobian.
pub fn triple_well_grad(phi: PhasePoint, params: &ModelParams) -> Result<[f64; 3]> {
    let wells = weighted_wells(phi, params)?;
    let jac = projection_jacobian(params);
    let mut g = [0.0; 3];
    for (j, gj) in g.iter_mut().enumerate() {
        *gj = (0..3).map(|i| wells[i][1] * jac[i][j]).sum();
    }
    Ok(g)
}

pub fn triple_well_hessian(phi: PhasePoint, params: &ModelParams) -> Result<[[f64; 3]; 3]> {
    let wells = weighted_wells(phi, params)?;
    let jac = projection_jacobian(params);
    let mut h = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            h[a][b] = (0..3).map(|i| wells[i][2] * jac[i][a] * jac[i][b]).sum();
        }
    }
    Ok(h)
}

/// Gradient of W and its Hessian, evaluated together.
pub fn triple_well_grad_hessian(
    phi: PhasePoint,
    params: &ModelParams,
) -> Result<([f64; 3], [[f64; 3]; 3])> {
    let wells = weighted_wells(phi, params)?;
    let jac = projection_jacobian(params);
    let mut g = [0.0; 3];
    let mut h = [[0.0; 3]; 3];
    for a in 0..3 {
        g[a] = (0..3).map(|i| wells[i][1] * jac[i][a]).sum();
        for b in 0..3 {
            h[a][b] = (0..3).map(|i| wells[i][2] * jac[i][a] * jac[i][b]).sum();
        }
    }
    Ok((g, h))
}

/// δ-modified mixture quantities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixtures {
    pub phi_f_tilde: f64,
    pub phi_c: f64,
    pub phi_c_tilde: f64,
    pub gamma_tilde: f64,
    /// Dissipation d(φ̃_f) = d0 (1 - φ̃_f)².
    pub dissipation: f64,
}

pub fn mixtures(phi: PhasePoint, params: &ModelParams) -> Result<Mixtures> {
    let [p1, p2, p3] = phi.0;
    let delta = params.delta;
    let g = params.gamma;
    let phi_f_tilde = p1 + p2 + 2.0 * delta * p3;
    let denom = p1 / g[0] + p2 / g[1] + p3 / g[2] + delta * (1.0 / g[0] + 1.0 / g[1] + 1.0 / g[2]);
    if !(denom > 0.0) {
        return Err(Error::Domain {
            what: "mixture viscosity",
            value: denom,
        });
    }
    let one_minus = 1.0 - phi_f_tilde;
    Ok(Mixtures {
        phi_f_tilde,
        phi_c: p1,
        phi_c_tilde: p1 + delta,
        gamma_tilde: 1.0 / denom,
        dissipation: params.d0 * one_minus * one_minus,
    })
}

/// q(Φ) = 30 φ1² φ3², concentrating the reaction on the fluid-1/solid interface.
pub fn reaction_q(phi: PhasePoint) -> f64 {
    let a = phi.phi1() * phi.phi3();
    30.0 * a * a
}

/// A monotone reaction rate r(c).
pub trait ReactionRate: Send + Sync {
    fn rate(&self, c: f64) -> f64;
}

/// r(c) = c - c_eq.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRate {
    pub c_eq: f64,
}

impl ReactionRate for LinearRate {
    fn rate(&self, c: f64) -> f64 {
        c - self.c_eq
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> ReactionRate for F {
    fn rate(&self, c: f64) -> f64 {
        self(c)
    }
}

/// Default linear rate with the equilibrium concentration from `params`.
pub fn rate_r(c: f64, params: &ModelParams) -> f64 {
    LinearRate { c_eq: params.c_eq }.rate(c)
}

/// R = -q(Φ) (r + α̃ (μ1 - μ3)) for an already evaluated rate value `r`.
pub fn reaction_term(phi: PhasePoint, r: f64, mu1: f64, mu3: f64, alpha_tilde: f64) -> f64 {
    -reaction_q(phi) * (r + alpha_tilde * (mu1 - mu3))
}

/// R with the default linear rate evaluated at `c`.
pub fn reaction_r(phi: PhasePoint, c: f64, mu1: f64, mu3: f64, params: &ModelParams) -> f64 {
    reaction_term(phi, rate_r(c, params), mu1, mu3, params.alpha_tilde())
}

/// Inner coordinate z of the equilibrium profile value φ ∈ (0, 1).
pub fn profile_z(phi: f64) -> f64 {
    (1.0 / (1.0 - phi) - 1.0 / phi + 2.0 * (phi / (1.0 - phi)).ln()) / 30.0
}

/// dz/dφ of the equilibrium profile, 1/(30 φ²(1-φ)²).
pub fn profile_dz_dphi(phi: f64) -> f64 {
    let u = phi * (1.0 - phi);
    1.0 / (30.0 * u * u)
}

/// Equilibrium interface profile φ(z) ∈ (0, 1), increasing, with φ(0) = 1/2.
///
/// Inverts [`profile_z`] by bisection to an absolute tolerance of 1e-12.
pub fn equilibrium_profile(z: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = if z > 0.0 {
        (0.5, 1.0 - f64::EPSILON / 2.0)
    } else {
        (f64::MIN_POSITIVE, 0.5)
    };
    if z >= profile_z(hi) {
        return hi;
    }
    if z <= profile_z(lo) {
        return lo;
    }
    while hi - lo > 1.0e-13 {
        let mid = 0.5 * (lo + hi);
        if profile_z(mid) < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
