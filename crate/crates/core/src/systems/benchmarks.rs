//! Right-hand sides of the benchmark systems, written against plain parameter
//! structs so that oracles can evaluate them without going through a
//! [`SystemSpec`](super::SystemSpec).

use serde::{Deserialize, Serialize};

/// Spruce budworm population model with carrying capacity `k`; the bifurcation
/// parameter is the growth rate `r`.
pub fn budworm(x: f64, r: f64, k: f64) -> f64 {
    r * x * (1.0 - x / k) - x * x / (1.0 + x * x)
}

/// Budworm steady-state branch `r(x)` obtained by solving `f(x; r) = 0` for `r`.
pub fn budworm_branch(x: f64, k: f64) -> f64 {
    x / ((1.0 + x * x) * (1.0 - x / k))
}

/// Analytic derivative of [`budworm_branch`].
pub fn budworm_branch_slope(x: f64, k: f64) -> f64 {
    let a = 1.0 + x * x;
    let b = 1.0 - x / k;
    let den = a * b;
    let dden = 2.0 * x * b - a / k;
    (den - x * dden) / (den * den)
}

/// Brusselator kinetics with feed `a`; the bifurcation parameter is `b`.
pub fn brusselator(x: &[f64], b: f64, a: f64) -> [f64; 2] {
    let (u, v) = (x[0], x[1]);
    [a + u * u * v - b * u - u, b * u - u * u * v]
}

/// Non-isothermal CSTR parameters other than the Damköhler number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CstrParams {
    pub heat: f64,
    pub beta: f64,
    pub coolant: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            heat: 10.0,
            beta: 0.1,
            coolant: -0.04,
        }
    }
}

/// CSTR right-hand side in dimensionless conversion `x1` and temperature `x2`.
pub fn cstr(x: &[f64], da: f64, prm: &CstrParams) -> [f64; 2] {
    let rate = da * x[1].exp() * (1.0 - x[0]);
    [
        -x[0] + rate,
        -x[1] + prm.heat * rate + prm.beta * (prm.coolant - x[1]),
    ]
}

/// Epileptor parameters other than the slow variable `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpileptorParams {
    pub i_ext1: f64,
    pub c1: f64,
    pub d1: f64,
    pub i_ext2: f64,
    pub tau2: f64,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub a2: f64,
}

impl Default for EpileptorParams {
    fn default() -> Self {
        Self {
            i_ext1: 3.1,
            c1: 1.0,
            d1: 5.0,
            i_ext2: 0.45,
            tau2: 10.0,
            a: 1.0,
            b: 3.0,
            m: 0.5,
            a2: 6.0,
        }
    }
}

/// Piecewise coupling of the fast subsystem. Only continuous at `x1 = 0`.
pub fn epileptor_f1(x1: f64, x2: f64, z: f64, prm: &EpileptorParams) -> f64 {
    if x1 < 0.0 {
        prm.a * x1.powi(3) - prm.b * x1 * x1
    } else {
        -(prm.m - x2 + 0.6 * (z - 4.0).powi(4)) * x1
    }
}

/// Piecewise-linear drive of the second population. Only continuous at
/// `x2 = -0.25`.
pub fn epileptor_f2(x2: f64, prm: &EpileptorParams) -> f64 {
    if x2 < -0.25 {
        0.0
    } else {
        prm.a2 * (x2 + 0.25)
    }
}

/// Epileptor right-hand side in the state `(x1, y1, x2, y2)`.
pub fn epileptor(x: &[f64], z: f64, prm: &EpileptorParams) -> [f64; 4] {
    let (x1, y1, x2, y2) = (x[0], x[1], x[2], x[3]);
    [
        y1 - epileptor_f1(x1, x2, z, prm) - z + prm.i_ext1,
        prm.c1 - prm.d1 * x1 * x1 - y1,
        -y2 + x2 - x2.powi(3) + prm.i_ext2 - 0.3 * (z - 3.5),
        (epileptor_f2(x2, prm) - y2) / prm.tau2,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budworm_vanishes_at_origin() {
        for r in [0.1, 0.3, 0.9] {
            assert_eq!(budworm(0.0, r, 15.0), 0.0);
        }
    }

    #[test]
    fn budworm_branch_is_a_root() {
        for x in [0.5, 2.0, 7.0, 12.0] {
            let r = budworm_branch(x, 15.0);
            assert!(budworm(x, r, 15.0).abs() < 1e-12);
        }
    }

    #[test]
    fn budworm_branch_slope_matches_difference_quotient() {
        let h = 1e-6;
        for x in [0.7, 3.0, 7.36, 11.0] {
            let fd = (budworm_branch(x + h, 15.0) - budworm_branch(x - h, 15.0)) / (2.0 * h);
            assert!((fd - budworm_branch_slope(x, 15.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn brusselator_steady_state_cancels() {
        let a = 1.5;
        for b in [2.0, 3.25, 4.1] {
            let f = brusselator(&[a, b / a], b, a);
            assert!(f[0].abs() < 1e-14 && f[1].abs() < 1e-14);
        }
    }

    #[test]
    fn cstr_at_rest_with_zero_damkohler() {
        let f = cstr(&[0.0, 0.0], 0.0, &CstrParams::default());
        assert_eq!(f[0], 0.0);
        assert!((f[1] + 0.004).abs() < 1e-15);
    }

    #[test]
    fn epileptor_piecewise_terms_join_continuously() {
        let prm = EpileptorParams::default();
        assert!(
            (epileptor_f1(-1e-12, 0.1, 3.0, &prm) - epileptor_f1(0.0, 0.1, 3.0, &prm)).abs()
                < 1e-10
        );
        assert!((epileptor_f2(-0.25 - 1e-12, &prm) - epileptor_f2(-0.25, &prm)).abs() < 1e-10);
    }

    #[test]
    fn epileptor_resting_branch_turns_at_minus_four_thirds() {
        // On x1 < 0 the first and second equations give z(x1) = 4.1 - 2 x1^2 - x1^3.
        let prm = EpileptorParams::default();
        let x1 = -4.0 / 3.0;
        let z = prm.i_ext1 + prm.c1 - (prm.d1 - prm.b) * x1 * x1 - prm.a * x1.powi(3);
        assert!((z - 2.914_814_814_814_815).abs() < 1e-12);
        let y1 = prm.c1 - prm.d1 * x1 * x1;
        let f = epileptor(&[x1, y1, 0.0, 0.0], z, &prm);
        assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
    }
}
