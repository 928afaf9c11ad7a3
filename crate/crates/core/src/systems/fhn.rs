//! Second-order finite-difference discretization of the FitzHugh-Nagumo
//! reaction-diffusion system on `[0, L]` with homogeneous Neumann boundaries.
//!
//! The state is laid out as `(u_0, ..., u_{N-1}, v_0, ..., v_{N-1})`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::continuation::ParamSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhnParams {
    pub du: f64,
    pub dv: f64,
    pub alpha1: f64,
    pub alpha0: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            du: 1.0,
            dv: 4.0,
            alpha1: 2.0,
            alpha0: -0.03,
        }
    }
}

/// Spatial grid and diffusion/reaction constants; `eps` is supplied per call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhnDiscretization {
    pub params: FhnParams,
    pub dx: f64,
    pub length: f64,
    pub nodes: usize,
}

/// The discretized system at a fixed `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FhnSystem {
    pub grid: FhnDiscretization,
    pub eps: f64,
}

impl FhnSystem {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn rhs(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.grid.rhs(state, self.eps)
    }
}

/// Builds the ODE system for given constants and grid.
pub fn discretize_fhn(
    du: f64,
    dv: f64,
    alpha1: f64,
    alpha0: f64,
    eps: f64,
    dx: f64,
    length: f64,
) -> Result<FhnSystem> {
    if !eps.is_finite() {
        return Err(Error::InvalidInput("eps must be finite".into()));
    }
    let grid = FhnDiscretization::new(
        FhnParams {
            du,
            dv,
            alpha1,
            alpha0,
        },
        dx,
        length,
    )?;
    Ok(FhnSystem { grid, eps })
}

impl FhnDiscretization {
    pub fn new(params: FhnParams, dx: f64, length: f64) -> Result<Self> {
        let vals = [
            params.du,
            params.dv,
            params.alpha1,
            params.alpha0,
            dx,
            length,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "FitzHugh-Nagumo constants must be finite".into(),
            ));
        }
        if !(dx > 0.0) || !(length > 0.0) {
            return Err(Error::InvalidInput("dx and L must be positive".into()));
        }
        let cells = length / dx;
        let rounded = cells.round();
        if rounded < 2.0 || (cells - rounded).abs() > 1e-9 * rounded {
            return Err(Error::InvalidInput(format!(
                "dx = {dx} does not divide L = {length}"
            )));
        }
        Ok(Self {
            params,
            dx,
            length,
            nodes: rounded as usize + 1,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.nodes
    }

    /// Node coordinates `x_i = i dx`.
    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| i as f64 * self.dx).collect()
    }

    /// Three-point Laplacian with mirrored ghost nodes `w_{-1} = w_1`,
    /// `w_N = w_{N-2}`.
    pub fn laplacian(&self, w: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let h2 = self.dx * self.dx;
        (0..n)
            .map(|i| {
                let left = if i == 0 { w[1] } else { w[i - 1] };
                let right = if i == n - 1 { w[n - 2] } else { w[i + 1] };
                (left + right - 2.0 * w[i]) / h2
            })
            .collect()
    }

    pub fn rhs(&self, state: &[f64], eps: f64) -> Result<Vec<f64>> {
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "FitzHugh-Nagumo state",
                expected: self.dim(),
                got: state.len(),
            });
        }
        let n = self.nodes;
        let (u, v) = state.split_at(n);
        let lu = self.laplacian(u);
        let lv = self.laplacian(v);
        let FhnParams {
            du,
            dv,
            alpha1,
            alpha0,
        } = self.params;
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            out[i] = du * lu[i] + u[i] - u[i].powi(3) - v[i];
            out[n + i] = dv * lv[i] + eps * (u[i] - alpha1 * v[i] - alpha0);
        }
        Ok(out)
    }

    pub fn jacobian(&self, state: &[f64], eps: f64) -> DMatrix<f64> {
        let n = self.nodes;
        let h2 = self.dx * self.dx;
        let p = self.params;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for (block, d) in [(0, p.du), (n, p.dv)] {
            for i in 0..n {
                let row = block + i;
                j[(row, row)] -= 2.0 * d / h2;
                let left = if i == 0 { 1 } else { i - 1 };
                let right = if i == n - 1 { n - 2 } else { i + 1 };
                j[(row, block + left)] += d / h2;
                j[(row, block + right)] += d / h2;
            }
        }
        for i in 0..n {
            j[(i, i)] += 1.0 - 3.0 * state[i] * state[i];
            j[(i, n + i)] -= 1.0;
            j[(n + i, i)] += eps;
            j[(n + i, n + i)] -= eps * p.alpha1;
        }
        j
    }

    pub fn d_deps(&self, state: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            out[n + i] = state[i] - self.params.alpha1 * state[n + i] - self.params.alpha0;
        }
        out
    }

    /// Front-shaped initial guess `u = tanh(x - L/2)`, `v = 0.3 u`.
    pub fn front_guess(&self) -> Vec<f64> {
        let n = self.nodes;
        let mut s = vec![0.0; 2 * n];
        for (i, x) in self.coordinates().into_iter().enumerate() {
            s[i] = (x - 0.5 * self.length).tanh();
            s[n + i] = 0.3 * s[i];
        }
        s
    }

    /// Reflects a state about `x = L/2`.
    pub fn reflect(&self, state: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            out[i] = state[n - 1 - i];
            out[n + i] = state[2 * n - 1 - i];
        }
        out
    }
}

impl ParamSystem for FhnDiscretization {
    fn dim(&self) -> usize {
        FhnDiscretization::dim(self)
    }

    fn rhs(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        FhnDiscretization::rhs(self, x, p)
    }

    fn jac_x(&self, x: &[f64], p: f64) -> Result<DMatrix<f64>> {
        Ok(self.jacobian(x, p))
    }

    fn d_dp(&self, x: &[f64], _p: f64) -> Result<Vec<f64>> {
        Ok(self.d_deps(x))
    }
}
