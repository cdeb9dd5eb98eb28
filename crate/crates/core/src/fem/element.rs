use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::MultijunctionComplex;

/// Gradients of the barycentric coordinates of a k-simplex, as vectors of the
/// ambient space tangent to the simplex, and its k-volume.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub gradients: Vec<DVector<f64>>,
    pub volume: f64,
}

impl ElementGeometry {
    pub fn new(c: &MultijunctionComplex, patch: usize, s: usize) -> Result<Self> {
        let pts = c.simplex_points(patch, s);
        let k = pts.len() - 1;
        let n = c.ambient_dim();
        let e = DMatrix::from_fn(n, k, |r, col| pts[col + 1][r] - pts[0][r]);
        let gram = e.transpose() * &e;
        let inv = gram.try_inverse().ok_or(Error::DegenerateSimplex {
            patch,
            simplex: s,
        })?;
        // columns of E (E^T E)^{-1} are the gradients of lambda_1..lambda_k
        let g = &e * inv;
        let mut gradients = Vec::with_capacity(k + 1);
        gradients.push(-g.column_sum());
        for col in 0..k {
            gradients.push(g.column(col).into_owned());
        }
        Ok(Self {
            gradients,
            volume: c.patch(patch).measure(s),
        })
    }

    /// `vol * grad(lambda_a)^T A grad(lambda_b)`.
    pub fn stiffness(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.gradients.len();
        let ag: Vec<DVector<f64>> = self.gradients.iter().map(|g| a * g).collect();
        DMatrix::from_fn(m, m, |i, j| self.volume * self.gradients[i].dot(&ag[j]))
    }

    /// Exact P1 mass matrix: `vol (1 + delta_ij) / ((k+1)(k+2))`.
    pub fn mass(&self) -> DMatrix<f64> {
        let m = self.gradients.len();
        let denom = (m * (m + 1)) as f64;
        DMatrix::from_fn(m, m, |i, j| {
            self.volume * if i == j { 2.0 } else { 1.0 } / denom
        })
    }

    /// Gradient of the P1 interpolant with nodal `values`.
    pub fn gradient(&self, values: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.gradients[0].len());
        for (v, grad) in values.iter().zip(&self.gradients) {
            g.axpy(*v, grad, 1.0);
        }
        g
    }
}
