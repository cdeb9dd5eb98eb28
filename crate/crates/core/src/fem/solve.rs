use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use super::energy;
use crate::error::{Error, Result};
use crate::kernel::KernelDecomposition;
use crate::linalg::{deflated_cg, random_vector};

/// Relative tolerance on the load defect of each component, measured against
/// `|b| mu_l^(1/2)`.
pub const DEFAULT_COMPAT_TOL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialGuess {
    Zero,
    Random(u64),
    Given(DVector<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target `|K u - b| <= tol |b|`.
    pub tol: f64,
    /// Defaults to 50 times the number of DOFs.
    pub max_iterations: Option<usize>,
    pub compat_tol: f64,
    pub initial: InitialGuess,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: None,
            compat_tol: DEFAULT_COMPAT_TOL,
            initial: InitialGuess::Random(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// `chi_l^T b` per component.
    pub defects: Vec<f64>,
    /// `|b| mu_l^(1/2)` per component.
    pub scales: Vec<f64>,
    pub tol: f64,
    /// Mean of the source removed from each component to make it compatible.
    pub shifts: Vec<f64>,
}

impl CompatibilityReport {
    pub fn violations(&self) -> Vec<usize> {
        self.defects
            .iter()
            .zip(&self.scales)
            .enumerate()
            .filter(|(_, (d, s))| d.abs() > self.tol * **s)
            .map(|(l, _)| l)
            .collect()
    }

    pub fn is_compatible(&self) -> bool {
        self.violations().is_empty()
    }
}

pub fn check_compatibility(
    load: &DVector<f64>,
    kernel: &KernelDecomposition,
    tol: f64,
) -> CompatibilityReport {
    let mut defects = vec![0.0; kernel.num_components()];
    for (i, b) in load.iter().enumerate() {
        defects[kernel.component_of_dof(i)] += b;
    }
    let norm = load.norm();
    let scales = kernel.measures().iter().map(|m| norm * m.sqrt()).collect();
    let shifts = defects
        .iter()
        .zip(kernel.measures())
        .map(|(d, m)| d / m)
        .collect();
    CompatibilityReport {
        defects,
        scales,
        tol,
        shifts,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub energy: f64,
    /// Relative residual `|K u - b| / |b|` against the compatible load.
    pub residual: f64,
    pub iterations: usize,
    /// `max_l |chi_l^T M u|`.
    pub kernel_defect: f64,
    pub compatibility: CompatibilityReport,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: DVector<f64>,
    /// The compatible load actually solved against.
    pub load: DVector<f64>,
    pub report: SolveReport,
}

/// Solves `K u = b` on the mass-orthogonal complement of the kernel.
///
/// Components whose load defect exceeds `compat_tol` are rejected. Accepted
/// defects are removed by subtracting the component mean of the source,
/// `b <- b - c_l M chi_l` with `c_l = chi_l^T b / mu_l`.
pub fn solve(
    stiffness: &CsrMatrix<f64>,
    load: &DVector<f64>,
    kernel: &KernelDecomposition,
    mass: &CsrMatrix<f64>,
    opts: &SolveOptions,
) -> Result<Solution> {
    let n = kernel.dofs().num_dofs();
    for found in [stiffness.nrows(), stiffness.ncols(), mass.nrows(), load.len()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    if !(opts.tol > 0.0) || !(opts.compat_tol >= 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    let compatibility = check_compatibility(load, kernel, opts.compat_tol);
    let violations = compatibility.violations();
    if !violations.is_empty() {
        return Err(Error::Incompatible {
            defects: violations.iter().map(|&l| compatibility.defects[l]).collect(),
            components: violations,
            patch_integrals: Vec::new(),
        });
    }
    let deflation = kernel.deflation(mass);
    let mut b = load.clone();
    deflation.make_compatible(&mut b);
    let x0 = match &opts.initial {
        InitialGuess::Zero => DVector::zeros(n),
        InitialGuess::Random(seed) => random_vector(n, *seed),
        InitialGuess::Given(x) => {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                });
            }
            x.clone()
        }
    };
    let max_iterations = opts.max_iterations.unwrap_or(50 * n.max(1));
    let out = deflated_cg(stiffness, &b, &deflation, x0, opts.tol, max_iterations)?;
    let kernel_defect = deflation
        .coefficients(&out.x)
        .iter()
        .zip(kernel.measures())
        .fold(0.0f64, |m, (c, mu)| m.max((c * mu).abs()));
    let report = SolveReport {
        energy: energy(&out.x, stiffness, &b),
        residual: out.residual,
        iterations: out.iterations,
        kernel_defect,
        compatibility,
    };
    Ok(Solution {
        u: out.x,
        load: b,
        report,
    })
}
