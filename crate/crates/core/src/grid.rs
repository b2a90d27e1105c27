//! Uniform transversal (y) and longitudinal (x) grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the cross-section is discretised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YMode {
    /// Lower half [-ℓ_Ω/2, 0] with a symmetry line at y = 0.
    Symmetric,
    /// Full cross-section [-ℓ_Ω/2, ℓ_Ω/2].
    Full,
}

/// Uniform node grid across the strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    mode: YMode,
    y: Vec<f64>,
    h: f64,
}

pub const MIN_Y_NODES: usize = 16;
pub const NODES_PER_EPS: f64 = 6.0;

impl YGrid {
    /// Builds the grid and checks it resolves an interface of width `eps_bar`.
    pub fn new(mode: YMode, n_nodes: usize, ell_omega: f64, eps_bar: f64) -> Result<Self> {
        if n_nodes < MIN_Y_NODES {
            return Err(Error::InvalidParameter(format!(
                "y-grid needs at least {MIN_Y_NODES} nodes, got {n_nodes}"
            )));
        }
        let lo = -0.5 * ell_omega;
        let hi = match mode {
            YMode::Symmetric => 0.0,
            YMode::Full => 0.5 * ell_omega,
        };
        let h = (hi - lo) / (n_nodes - 1) as f64;
        // small slack so that e.g. 1/255 passes for eps = 0.03
        if h > eps_bar / NODES_PER_EPS * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "y-grid spacing {h} does not resolve eps_bar = {eps_bar} (need h <= eps/{NODES_PER_EPS})"
            )));
        }
        let y = (0..n_nodes)
            .map(|j| if j + 1 == n_nodes { hi } else { lo + j as f64 * h })
            .collect();
        Ok(YGrid { mode, y, h })
    }

    pub fn mode(&self) -> YMode {
        self.mode
    }

    pub fn nodes(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Lumped (trapezoid) mass of node `j`.
    pub fn mass(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.y.len() {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Factor turning an integral over the grid into one over the full cross-section.
    pub fn symmetry_factor(&self) -> f64 {
        match self.mode {
            YMode::Symmetric => 2.0,
            YMode::Full => 1.0,
        }
    }

    /// Trapezoid integral over the discretised span.
    pub fn trapezoid(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.y.len()).map(|j| self.mass(j) * f(j)).sum()
    }

    /// Trapezoid integral over the full cross-section (doubled in symmetric mode).
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.symmetry_factor() * self.trapezoid(f)
    }
}

/// Uniform cells on [0, 1] with centres x_k = k Δx and faces x_{k±1/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    n_cells: usize,
    dx: f64,
}

impl XGrid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidParameter("x-grid needs at least one cell".into()));
        }
        Ok(XGrid {
            n_cells,
            dx: 1.0 / n_cells as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        self.n_cells == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn center(&self, k: usize) -> f64 {
        k as f64 * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|k| self.center(k)).collect()
    }

    /// Position of face k - 1/2, for k in 0..=n_cells.
    pub fn face(&self, k: usize) -> f64 {
        (k as f64 - 0.5) * self.dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_spans_half_strip() {
        let g = YGrid::new(YMode::Symmetric, 256, 2.0, 0.03).unwrap();
        assert_eq!(g.nodes()[0], -1.0);
        assert_eq!(*g.nodes().last().unwrap(), 0.0);
        assert!((g.spacing() - 1.0 / 255.0).abs() < 1e-15);
        let total: f64 = (0..g.len()).map(|j| g.mass(j)).sum();
        assert!((total - 1.0).abs() < 1e-13);
        assert!((g.integrate(|_| 1.0) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn grid_resolution_is_enforced() {
        assert!(YGrid::new(YMode::Symmetric, 128, 2.0, 0.03).is_err());
        assert!(YGrid::new(YMode::Symmetric, 128, 2.0, 0.06).is_ok());
        assert!(YGrid::new(YMode::Full, 8, 2.0, 0.9).is_err());
    }

    #[test]
    fn x_grid_layout() {
        let g = XGrid::new(8).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.center(0), 0.0);
        assert_eq!(g.face(0), -0.0625);
        assert!(XGrid::new(0).is_err());
    }
}
