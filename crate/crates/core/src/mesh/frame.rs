use nalgebra::{DMatrix, DVector};

use super::MultijunctionComplex;
use crate::error::{Error, Result};

/// Orthonormal tangent basis of an element and its normal complement.
///
/// The basis is not canonical; anything computed from it must only depend on
/// the spanned subspaces.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    /// N x k, orthonormal columns spanning the element's affine hull direction.
    pub tangent: DMatrix<f64>,
    /// N x (N - k), orthonormal columns spanning the orthogonal complement.
    pub normal: DMatrix<f64>,
}

impl TangentFrame {
    /// Builds a frame from the edge vectors `v_i - v_0` of a simplex.
    pub fn from_points(pts: &[&[f64]]) -> Option<Self> {
        let n = pts[0].len();
        let k = pts.len() - 1;
        let edges: Vec<DVector<f64>> = (1..=k)
            .map(|c| DVector::from_fn(n, |r, _| pts[c][r] - pts[0][r]))
            .collect();
        let scale = edges.iter().map(|e| e.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return None;
        }
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
        for e in &edges {
            let v = orthogonalize(e.clone(), &basis);
            if v.norm() <= 1e-12 * scale {
                return None;
            }
            basis.push(v.normalize());
        }
        // complete with the coordinate axes that survive orthogonalization best
        let mut candidates: Vec<DVector<f64>> = (0..n)
            .map(|i| orthogonalize(DVector::from_fn(n, |r, _| f64::from(r == i)), &basis))
            .collect();
        while basis.len() < n {
            let (best, _) = candidates
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            let v = orthogonalize(candidates.swap_remove(best), &basis);
            basis.push(v.normalize());
            candidates = candidates
                .into_iter()
                .map(|c| orthogonalize(c, &basis))
                .collect();
        }
        Some(Self {
            tangent: DMatrix::from_fn(n, k, |r, c| basis[c][r]),
            normal: DMatrix::from_fn(n, n - k, |r, c| basis[k + c][r]),
        })
    }

    /// Builds a frame directly from tangent columns, completing the normal part.
    pub fn from_tangent(tangent: DMatrix<f64>) -> Option<Self> {
        let n = tangent.nrows();
        let origin = vec![0.0; n];
        let cols: Vec<Vec<f64>> = tangent
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let mut pts: Vec<&[f64]> = vec![&origin];
        pts.extend(cols.iter().map(Vec::as_slice));
        Self::from_points(&pts)
    }

    pub fn dim(&self) -> usize {
        self.tangent.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.tangent.nrows()
    }
}

fn orthogonalize(mut v: DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    // two passes of modified Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
    }
    v
}

/// Tangent frame of simplex `simplex` in patch `patch`.
pub fn tangent_frame(
    c: &MultijunctionComplex,
    patch: usize,
    simplex: usize,
) -> Result<TangentFrame> {
    TangentFrame::from_points(&c.simplex_points(patch, simplex))
        .ok_or(Error::DegenerateSimplex { patch, simplex })
}
