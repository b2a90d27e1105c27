//! Upscaled sharp-interface model of the symmetric layered strip: layer
//! widths d1, d2 with closed-form permeabilities, the shared pressure and ion
//! solvers, and the method-of-characteristics solution of the d2 transport.

use serde::{Deserialize, Serialize};

use crate::cell_flow::{kc_unchecked, kf_unchecked, slip_length};
use crate::error::{Error, Result};
use crate::grid::XGrid;
use crate::macro_solver::{ion_step, solve_pressure, IonBalance, IonBc, IonStep, PressureBc, PressureSolution};
use crate::model::{ModelParams, ReactionRate};

/// Courant number limit of the explicit d2 update.
pub const CFL_LIMIT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpState {
    pub t: f64,
    /// Width of each fluid-1 layer.
    pub d1: Vec<f64>,
    /// Half-width of the central fluid-2 layer.
    pub d2: Vec<f64>,
    pub c: Vec<f64>,
}

impl SharpState {
    pub fn len(&self) -> usize {
        self.d2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d2.is_empty()
    }

    pub fn total_width(&self) -> Vec<f64> {
        self.d1.iter().zip(&self.d2).map(|(a, b)| a + b).collect()
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let n = self.d2.len();
        if self.d1.len() != n || self.c.len() != n {
            return Err(Error::InvalidParameter("sharp state fields differ in length".into()));
        }
        for k in 0..n {
            let (d1, d2) = (self.d1[k], self.d2[k]);
            let detail = if !(d1 > 0.0 && d1.is_finite()) {
                format!("d1 = {d1}")
            } else if !(d2 > 0.0 && d2.is_finite()) {
                format!("d2 = {d2}")
            } else if d1 + d2 >= 0.5 * params.ell_omega {
                format!("d1 + d2 = {} reaches the wall", d1 + d2)
            } else {
                continue;
            };
            return Err(Error::StateCollapse {
                cell: k,
                time: self.t,
                detail,
            });
        }
        Ok(())
    }
}

/// Macroscopic fields derived from a sharp state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpFields {
    pub k_f: Vec<f64>,
    pub k_c: Vec<f64>,
    pub pressure: PressureSolution,
}

pub fn sharp_fields(state: &SharpState, bc: PressureBc, grid: &XGrid, params: &ModelParams) -> Result<SharpFields> {
    state.validate(params)?;
    let k_f: Vec<f64> = (0..state.len()).map(|k| kf_unchecked(state.d1[k], state.d2[k], params)).collect();
    let k_c: Vec<f64> = (0..state.len()).map(|k| kc_unchecked(state.d1[k], state.d2[k], params)).collect();
    let pressure = solve_pressure(&k_f, bc, grid)?;
    Ok(SharpFields { k_f, k_c, pressure })
}

/// Everything besides the state that a sharp step needs.
pub struct SharpControls<'a> {
    pub pressure: PressureBc,
    pub ion: IonBc,
    /// Source s(x_k) of the ion equation.
    pub source: &'a [f64],
    pub rate: &'a dyn ReactionRate,
    /// Keep c fixed (no ion transport), e.g. for rate-law checks.
    pub freeze_c: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpReport {
    pub fields: SharpFields,
    pub courant: f64,
    pub ion: Option<IonBalance>,
}

/// g(d2) = K_c/K_f at fixed total width.
pub fn flux_ratio(total: f64, d2: f64, params: &ModelParams) -> f64 {
    kc_unchecked(total - d2, d2, params) / kf_unchecked(total - d2, d2, params)
}

/// g and its first two derivatives in d2 at fixed total width.
pub fn flux_ratio_derivatives(total: f64, d2: f64, params: &ModelParams) -> (f64, f64, f64) {
    let g1 = params.gamma[0];
    let a = 2.0 / g1;
    let contrast = g1 / params.gamma[1] - 1.0;
    let ls = slip_length(params);
    let d1 = total - d2;
    let kc = kc_unchecked(d1, d2, params);
    let kf = kf_unchecked(d1, d2, params);
    let kc1 = a * (-0.5 * d1 * d1 - d1 * d2 - ls * total);
    let kc2 = a * d2;
    let kf1 = a * contrast * d2 * d2;
    let kf2 = 2.0 * a * contrast * d2;
    let num = kc1 * kf - kc * kf1;
    let g = kc / kf;
    let gp = num / (kf * kf);
    let gpp = (kc2 * kf - kc * kf2) / (kf * kf) - 2.0 * kf1 * num / (kf * kf * kf);
    (g, gp, gpp)
}

/// Characteristic speed -(Q_f/2) g'(d2) of the d2 transport.
pub fn characteristic_speed(total: f64, d2: f64, q_f: f64, params: &ModelParams) -> f64 {
    -0.5 * q_f * flux_ratio_derivatives(total, d2, params).1
}

/// One explicit step: widths from c^n, then the implicit ion step.
pub fn sharp_step(
    prev: &SharpState,
    dt: f64,
    grid: &XGrid,
    params: &ModelParams,
    controls: &SharpControls,
) -> Result<(SharpState, SharpReport)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    let n = prev.len();
    if n != grid.len() || controls.source.len() != n {
        return Err(Error::InvalidParameter("sharp state does not match the grid".into()));
    }
    let fields = sharp_fields(prev, controls.pressure, grid, params)?;
    let q_f = fields.pressure.q_f;
    let dx = grid.dx();
    let total = prev.total_width();
    let flux: Vec<f64> = (0..n).map(|k| -0.5 * q_f * fields.k_c[k] / fields.k_f[k]).collect();
    let speed: Vec<f64> = (0..n).map(|k| characteristic_speed(total[k], prev.d2[k], q_f, params)).collect();
    let courant = dt / dx * speed.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if courant > CFL_LIMIT {
        return Err(Error::Cfl {
            courant,
            limit: CFL_LIMIT,
        });
    }
    let periodic = controls.ion == IonBc::Periodic;
    // upwind flux at face k+1/2 for k = -1..n-1; open ends copy the boundary cell
    let face_flux = |k: isize| -> f64 {
        let (l, r) = if periodic {
            ((k.rem_euclid(n as isize)) as usize, ((k + 1).rem_euclid(n as isize)) as usize)
        } else {
            let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
            (clamp(k), clamp(k + 1))
        };
        if speed[l] + speed[r] >= 0.0 {
            flux[l]
        } else {
            flux[r]
        }
    };
    let mut d2 = Vec::with_capacity(n);
    let mut d1 = Vec::with_capacity(n);
    for k in 0..n {
        let ki = k as isize;
        d2.push(prev.d2[k] - dt / dx * (face_flux(ki) - face_flux(ki - 1)));
        let width = total[k] - dt * params.da_bar * controls.rate.rate(prev.c[k]);
        d1.push(width - d2[k]);
    }
    let mut next = SharpState {
        t: prev.t + dt,
        d1,
        d2,
        c: prev.c.clone(),
    };
    next.validate(params)?;
    let mut ion = None;
    if !controls.freeze_c {
        let phi_old: Vec<f64> = prev.d1.iter().map(|d| 2.0 * d).collect();
        let phi_new: Vec<f64> = next.d1.iter().map(|d| 2.0 * d).collect();
        let reaction: Vec<f64> = prev.c.iter().map(|c| -2.0 * params.da_bar * controls.rate.rate(*c)).collect();
        let step = IonStep {
            c_old: &prev.c,
            phi_c_old: &phi_old,
            phi_c_new: &phi_new,
            k_c: &fields.k_c,
            dpdx: &fields.pressure.dpdx,
            reaction: &reaction,
            source: controls.source,
            dt,
            pec_bar: params.pec_bar,
            bc: controls.ion,
        };
        let (c, balance) = ion_step(&step, grid)?;
        next.c = c;
        ion = Some(balance);
    }
    Ok((next, SharpReport { fields, courant, ion }))
}

/// Largest characteristic speed over the state, for choosing dt.
pub fn max_speed(state: &SharpState, q_f: f64, params: &ModelParams) -> f64 {
    (0..state.len())
        .map(|k| characteristic_speed(state.d1[k] + state.d2[k], state.d2[k], q_f, params).abs())
        .fold(0.0, f64::max)
}

/// Exact pre-shock solution of the d2 transport at given x positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub d2: Vec<f64>,
    pub t_star: f64,
}

/// Number of characteristic feet sampled over one period.
pub const ORACLE_SAMPLES: usize = 1 << 16;

fn feet(d2_init: &dyn Fn(f64) -> f64, total: f64, q_f: f64, params: &ModelParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = ORACLE_SAMPLES;
    let x0: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    let d2: Vec<f64> = x0.iter().map(|x| d2_init(*x)).collect();
    let a: Vec<f64> = d2.iter().map(|d| characteristic_speed(total, *d, q_f, params)).collect();
    (x0, d2, a)
}

/// First crossing time of characteristics for periodic initial data on [0, 1).
///
/// Infinite when the speed is nondecreasing in the foot point.
pub fn shock_time(d2_init: &dyn Fn(f64) -> f64, total: f64, q_f: f64, params: &ModelParams) -> f64 {
    let (_, _, a) = feet(d2_init, total, q_f, params);
    shock_time_from_speeds(&a)
}

fn shock_time_from_speeds(a: &[f64]) -> f64 {
    let m = a.len();
    let h = 1.0 / m as f64;
    let steepest = (0..m).map(|i| (a[(i + 1) % m] - a[i]) / h).fold(0.0_f64, f64::min);
    if steepest < 0.0 {
        -1.0 / steepest
    } else {
        f64::INFINITY
    }
}

/// d2(x, t) along characteristics x = x0 + a(d2(x0)) t, periodic in x.
pub fn characteristics_oracle(
    d2_init: &dyn Fn(f64) -> f64,
    total: f64,
    q_f: f64,
    t: f64,
    x: &[f64],
    params: &ModelParams,
) -> Result<OracleSolution> {
    let (x0, d2, a) = feet(d2_init, total, q_f, params);
    let t_star = shock_time_from_speeds(&a);
    if t >= t_star {
        return Err(Error::PastShock { t, t_star });
    }
    let m = x0.len();
    // transported positions, unwrapped so that they increase with the foot
    let xt: Vec<f64> = (0..m).map(|i| x0[i] + a[i] * t).collect();
    let d2_out = x
        .iter()
        .map(|&target| {
            // shift the target into the period covered by the samples
            let shift = (target - xt[0]).div_euclid(1.0);
            let y = target - shift;
            let pos = xt.partition_point(|v| *v <= y);
            let (xl, dl) = (xt[pos - 1], d2[pos - 1]);
            let (xr, dr) = if pos < m { (xt[pos], d2[pos]) } else { (xt[0] + 1.0, d2[0]) };
            dl + (dr - dl) * (y - xl) / (xr - xl)
        })
        .collect();
    Ok(OracleSolution {
        x: x.to_vec(),
        d2: d2_out,
        t_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearRate;
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    fn nwave(n: usize) -> (XGrid, SharpState) {
        let grid = XGrid::new(n).unwrap();
        let d1: Vec<f64> = grid.centers().iter().map(|x| 0.4 + 0.15 * (2.0 * PI * x).sin()).collect();
        let d2 = d1.iter().map(|d| 0.7 - d).collect();
        let state = SharpState {
            t: 0.0,
            d1,
            d2,
            c: vec![0.5; n],
        };
        (grid, state)
    }

    fn controls<'a>(source: &'a [f64], rate: &'a LinearRate, freeze_c: bool) -> SharpControls<'a> {
        SharpControls {
            pressure: PressureBc::Flux { q_f: 1.4 },
            ion: IonBc::Periodic,
            source,
            rate,
            freeze_c,
        }
    }

    #[test]
    fn uniform_state_is_stationary() {
        let n = 16;
        let grid = XGrid::new(n).unwrap();
        let mut s = SharpState {
            t: 0.0,
            d1: vec![0.4; n],
            d2: vec![0.3; n],
            c: vec![0.5; n],
        };
        let source = vec![0.0; n];
        let rate = LinearRate { c_eq: 0.5 };
        for _ in 0..20 {
            s = sharp_step(&s, 0.01, &grid, &params(), &controls(&source, &rate, false)).unwrap().0;
        }
        assert!(s.d2.iter().all(|d| (d - 0.3).abs() < 1e-15));
        assert!(s.d1.iter().all(|d| (d - 0.4).abs() < 1e-14));
        assert!(s.c.iter().all(|c| (c - 0.5).abs() < 1e-14));
    }

    #[test]
    fn nwave_keeps_total_width_and_d2_mass() {
        let (grid, mut s) = nwave(100);
        let source = vec![0.0; 100];
        let rate = LinearRate { c_eq: 0.5 };
        let mass0: f64 = s.d2.iter().sum::<f64>() * grid.dx();
        for _ in 0..50 {
            s = sharp_step(&s, 0.002, &grid, &params(), &controls(&source, &rate, false)).unwrap().0;
            assert!(s.total_width().iter().all(|w| (w - 0.7).abs() <= 1e-14));
        }
        let mass: f64 = s.d2.iter().sum::<f64>() * grid.dx();
        assert!((mass - mass0).abs() <= 1e-12);
    }

    #[test]
    fn frozen_oversaturation_shrinks_width_linearly() {
        let n = 8;
        let grid = XGrid::new(n).unwrap();
        let mut s = SharpState {
            t: 0.0,
            d1: vec![0.4; n],
            d2: vec![0.3; n],
            c: vec![0.6; n],
        };
        let source = vec![0.0; n];
        let rate = LinearRate { c_eq: 0.5 };
        let mut p = params();
        p.da_bar = 2.0;
        let dt = 0.01;
        for _ in 0..10 {
            let next = sharp_step(&s, dt, &grid, &p, &controls(&source, &rate, true)).unwrap().0;
            for k in 0..n {
                let rate = (s.d1[k] + s.d2[k] - next.d1[k] - next.d2[k]) / dt;
                assert!((rate - 0.2).abs() <= 1e-12);
            }
            s = next;
        }
    }

    #[test]
    fn precipitation_closing_the_layer_collapses() {
        let n = 4;
        let grid = XGrid::new(n).unwrap();
        let s = SharpState {
            t: 0.0,
            d1: vec![0.05; n],
            d2: vec![0.3; n],
            c: vec![2.0; n],
        };
        let source = vec![0.0; n];
        let rate = LinearRate { c_eq: 0.5 };
        let r = sharp_step(&s, 0.05, &grid, &params(), &controls(&source, &rate, true));
        assert!(matches!(r, Err(Error::StateCollapse { .. })));
    }

    #[test]
    fn excessive_step_violates_cfl() {
        let (grid, s) = nwave(200);
        let source = vec![0.0; 200];
        let rate = LinearRate { c_eq: 0.5 };
        let r = sharp_step(&s, 0.05, &grid, &params(), &controls(&source, &rate, false));
        assert!(matches!(r, Err(Error::Cfl { .. })));
    }

    #[test]
    fn flux_ratio_derivatives_match_finite_differences() {
        let mut p = params();
        p.gamma = [1.0, 3.0, 100.0];
        for &d2 in &[0.05, 0.2, 0.35, 0.6] {
            let (g, gp, gpp) = flux_ratio_derivatives(0.7, d2, &p);
            assert!((g - flux_ratio(0.7, d2, &p)).abs() < 1e-15);
            let h = 1e-5;
            let fd1 = (flux_ratio(0.7, d2 + h, &p) - flux_ratio(0.7, d2 - h, &p)) / (2.0 * h);
            let fd2 = (flux_ratio_derivatives(0.7, d2 + h, &p).1 - flux_ratio_derivatives(0.7, d2 - h, &p).1) / (2.0 * h);
            assert!((gp - fd1).abs() < 1e-8 * gp.abs().max(1.0));
            assert!((gpp - fd2).abs() < 1e-6 * gpp.abs().max(1.0));
        }
    }

    #[test]
    fn flux_ratio_without_slip_and_contrast() {
        let mut p = params();
        p.d0 = f64::INFINITY;
        let total: f64 = 0.7;
        for i in 1..70 {
            let d2 = i as f64 * 0.01;
            let d1 = total - d2;
            let g = flux_ratio(total, d2, &p);
            let expected = (d1.powi(3) / 3.0 + d1 * d1 * d2 / 2.0) * 3.0 / total.powi(3);
            assert!((g - expected).abs() < 1e-14);
            assert!(g > 0.0 && g < 1.0);
        }
    }

    #[test]
    fn constant_initial_data_is_transported_unchanged() {
        let x: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let sol = characteristics_oracle(&|_| 0.3, 0.7, 1.4, 5.0, &x, &params()).unwrap();
        assert!(sol.d2.iter().all(|d| (d - 0.3).abs() < 1e-15));
        assert!(sol.t_star.is_infinite());
    }

    #[test]
    fn oracle_rejects_times_past_the_shock() {
        let d2 = |x: f64| 0.3 - 0.15 * (2.0 * PI * x).sin();
        let t_star = shock_time(&d2, 0.7, 1.4, &params());
        assert!(t_star > 0.3 && t_star <= 0.6, "t* = {t_star}");
        let r = characteristics_oracle(&d2, 0.7, 1.4, t_star, &[0.5], &params());
        assert!(matches!(r, Err(Error::PastShock { .. })));
    }

    #[test]
    fn oracle_at_zero_time_reproduces_initial_data() {
        let d2 = |x: f64| 0.3 - 0.15 * (2.0 * PI * x).sin();
        let x: Vec<f64> = (0..37).map(|k| (k as f64 + 0.3) / 37.0).collect();
        let sol = characteristics_oracle(&d2, 0.7, 1.4, 0.0, &x, &params()).unwrap();
        for (xi, di) in x.iter().zip(&sol.d2) {
            assert!((d2(*xi) - di).abs() < 1e-8);
        }
    }

    #[test]
    fn upwind_scheme_approaches_characteristics() {
        let d2_init = |x: f64| 0.3 - 0.15 * (2.0 * PI * x).sin();
        let error = |n: usize| {
            let (grid, mut s) = nwave(n);
            let source = vec![0.0; n];
            let rate = LinearRate { c_eq: 0.5 };
            let steps = (n as f64 * 0.3 / 0.25).round() as usize;
            let dt = 0.2 / steps as f64;
            for _ in 0..steps {
                s = sharp_step(&s, dt, &grid, &params(), &controls(&source, &rate, true)).unwrap().0;
            }
            let sol = characteristics_oracle(&d2_init, 0.7, 1.4, 0.2, &grid.centers(), &params()).unwrap();
            s.d2.iter().zip(&sol.d2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (error(100), error(200));
        assert!(e2 < e1 && e1 / e2 > 1.5, "{e1} {e2}");
    }
}
