//! Closed-form reference solutions for the built-in scenarios.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::distance;

/// Relative tolerance for the compatibility of oracle data.
const ORACLE_COMPAT_TOL: f64 = 1e-12;

/// `u(x) = sum_j coefficients[j] * r^j` with `r = |x - center|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialPolynomial {
    pub center: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl RadialPolynomial {
    pub fn zero(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            coefficients: Vec::new(),
        }
    }

    pub fn at_radius(&self, r: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.at_radius(distance(x, &self.center))
    }

    /// `du/dr`.
    pub fn derivative(&self, r: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, c)| acc * r + j as f64 * c)
    }

    /// `d^2u/dr^2`.
    pub fn second_derivative(&self, r: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (j, c)| acc * r + (j * (j - 1)) as f64 * c)
    }

    pub fn negated(&self) -> Self {
        Self {
            center: self.center.clone(),
            coefficients: self.coefficients.iter().map(|c| -c).collect(),
        }
    }
}

/// Exact solution given patch by patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleProfile {
    pub geometry: String,
    pub patches: Vec<RadialPolynomial>,
}

impl OracleProfile {
    pub fn value(&self, patch: usize, x: &[f64]) -> f64 {
        self.patches[patch].value(x)
    }
}

/// Leg `i` of the tripod: `u = -a_i (s^2 / 2 - s)` with `s = |x|`.
pub fn y_graph_solution(a: [f64; 3], branch: usize, s: f64) -> Result<f64> {
    y_graph_check(a)?;
    if branch >= 3 {
        return Err(Error::Oracle(format!("y_graph has no branch {branch}")));
    }
    Ok(-a[branch] * (0.5 * s * s - s))
}

fn y_graph_check(a: [f64; 3]) -> Result<()> {
    let sum: f64 = a.iter().sum();
    let scale: f64 = a.iter().map(|v| v.abs()).sum();
    if sum.abs() > ORACLE_COMPAT_TOL * scale.max(1.0) {
        return Err(Error::Oracle(format!(
            "y_graph data must sum to zero, got {sum:e}"
        )));
    }
    Ok(())
}

pub fn y_graph_profile(a: [f64; 3]) -> Result<OracleProfile> {
    y_graph_check(a)?;
    Ok(OracleProfile {
        geometry: "y_graph".into(),
        patches: a
            .iter()
            .map(|&ai| RadialPolynomial {
                center: vec![0.0, 0.0],
                coefficients: vec![0.0, ai, -0.5 * ai],
            })
            .collect(),
    })
}

/// Mean-zero Neumann solution of `u'' + u'/r + q = 0` on the disk of radius
/// `radius`, for `q(r) = sum_j q[j] r^j` with `int_0^R r q dr = 0`:
/// `u = b - sum_j q_j r^(j+2) / (j+2)^2`.
pub fn radial_disk_profile(q: &[f64], radius: f64, center: Vec<f64>) -> Result<RadialPolynomial> {
    if !(radius > 0.0) {
        return Err(Error::Oracle("radius must be positive".into()));
    }
    let flux: f64 = q
        .iter()
        .enumerate()
        .map(|(j, c)| c * radius.powi(j as i32 + 2) / (j as f64 + 2.0))
        .sum();
    let scale: f64 = q
        .iter()
        .enumerate()
        .map(|(j, c)| (c * radius.powi(j as i32 + 2) / (j as f64 + 2.0)).abs())
        .sum();
    if flux.abs() > ORACLE_COMPAT_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Oracle(format!(
            "radial source has nonzero flux {flux:e}"
        )));
    }
    let mut coefficients = vec![0.0; q.len() + 2];
    let mut b = 0.0;
    for (j, &c) in q.iter().enumerate() {
        let jj = j as f64;
        coefficients[j + 2] = -c / ((jj + 2.0) * (jj + 2.0));
        b += c * radius.powi(j as i32 + 4) / ((jj + 2.0) * (jj + 2.0) * (jj + 4.0));
    }
    coefficients[0] = 2.0 / (radius * radius) * b;
    Ok(RadialPolynomial {
        center,
        coefficients,
    })
}

/// Which part of the piston: the disks at `x1 = -1`, `x1 = 1`, or the segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PistonSide {
    S1,
    S2,
    S3,
}

/// Piston value at radius `r`: the disk profile on `S1`, its negative on `S2`
/// and zero on the segment.
pub fn piston_profile(q: &[f64], radius: f64, side: PistonSide, r: f64) -> Result<f64> {
    let disk = radial_disk_profile(q, radius, vec![0.0])?;
    Ok(match side {
        PistonSide::S1 => disk.at_radius(r),
        PistonSide::S2 => -disk.at_radius(r),
        PistonSide::S3 => 0.0,
    })
}

/// Whole-piston oracle for source `q` on `S1` and `-q` on `S2`.
pub fn piston_oracle(q: &[f64]) -> Result<OracleProfile> {
    let s1 = radial_disk_profile(q, 1.0, vec![-1.0, 0.0, 0.0])?;
    let mut s2 = s1.negated();
    s2.center = vec![1.0, 0.0, 0.0];
    Ok(OracleProfile {
        geometry: "piston".into(),
        patches: vec![s1, s2, RadialPolynomial::zero(3)],
    })
}

/// Relaxed tensor of the tilted conductivity on the two touching disks:
/// patch 0 lies in `{x3 = -1}`, patch 1 in `{x1 = 1}`.
pub fn tilted_disks_tensor(patch: usize) -> Result<DMatrix<f64>> {
    let diag = match patch {
        0 => [0.5, 1.0, 0.0],
        1 => [0.0, 1.0, 0.5],
        _ => return Err(Error::Oracle(format!("tilted_disks has no patch {patch}"))),
    };
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&diag)))
}

/// Ambient conductivity `e2 (x) e2 + (e1 + e3) (x) (e1 + e3) / 2`.
pub fn tilted_conductivity() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.5, 0.0, 1.0, 0.0, 0.5, 0.0, 0.5])
}
