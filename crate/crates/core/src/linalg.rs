//! Sparse symmetric kernels: matrix-vector products, mass-orthogonal deflation,
//! Jacobi-preconditioned conjugate gradients on singular consistent systems and
//! the smallest positive generalized eigenvalue.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub fn matvec(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row
            .col_indices()
            .iter()
            .zip(row.values())
            .map(|(&j, v)| v * x[j])
            .sum();
    }
    y
}

pub fn diagonal(a: &CsrMatrix<f64>) -> DVector<f64> {
    let mut d = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        if let Some(v) = row.get_entry(i) {
            d[i] = v.into_value();
        }
    }
    d
}

/// Maximum absolute entry.
pub fn sparse_amax(a: &CsrMatrix<f64>) -> f64 {
    a.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Dense copy; used for small matrices and in tests.
pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        for (&j, v) in row.col_indices().iter().zip(row.values()) {
            d[(i, j)] += v;
        }
    }
    d
}

/// Principal submatrix on `rows` (in the given order).
pub fn submatrix(a: &CsrMatrix<f64>, rows: &[usize]) -> CsrMatrix<f64> {
    let mut local = vec![usize::MAX; a.nrows()];
    for (l, &g) in rows.iter().enumerate() {
        local[g] = l;
    }
    let mut coo = CooMatrix::new(rows.len(), rows.len());
    for (l, &g) in rows.iter().enumerate() {
        let row = a.row(g);
        for (&j, v) in row.col_indices().iter().zip(row.values()) {
            if local[j] != usize::MAX {
                coo.push(l, local[j], *v);
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Mass-orthogonal projector onto the span of a family of vectors with
/// pairwise disjoint supports (kernel indicators).
#[derive(Clone, Debug)]
pub struct Deflation {
    basis: Vec<DVector<f64>>,
    /// `M * basis[l]`
    mass_basis: Vec<DVector<f64>>,
    /// `basis[l]^T M basis[l]`
    norms: Vec<f64>,
}

impl Deflation {
    pub fn new(basis: Vec<DVector<f64>>, mass: &CsrMatrix<f64>) -> Self {
        let mass_basis: Vec<DVector<f64>> = basis.iter().map(|v| matvec(mass, v)).collect();
        let norms = basis
            .iter()
            .zip(&mass_basis)
            .map(|(v, mv)| v.dot(mv))
            .collect();
        Self {
            basis,
            mass_basis,
            norms,
        }
    }

    /// Coefficients `(chi_l^T M x) / (chi_l^T M chi_l)`.
    pub fn coefficients(&self, x: &DVector<f64>) -> Vec<f64> {
        self.mass_basis
            .iter()
            .zip(&self.norms)
            .map(|(mv, n)| mv.dot(x) / n)
            .collect()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (v, c) in self.basis.iter().zip(self.coefficients(x)) {
            out.axpy(c, v, 1.0);
        }
        out
    }

    /// `x - P x`.
    pub fn complement(&self, x: &DVector<f64>) -> DVector<f64> {
        x - self.project(x)
    }

    /// Removes from `b` its components `chi_l^T b`, using `M chi_l` as the
    /// correction direction. Returns the removed amounts per basis vector.
    pub fn make_compatible(&self, b: &mut DVector<f64>) -> Vec<f64> {
        let mut removed = Vec::with_capacity(self.basis.len());
        for ((v, mv), n) in self.basis.iter().zip(&self.mass_basis).zip(&self.norms) {
            let c = v.dot(b) / n;
            b.axpy(-c, mv, 1.0);
            removed.push(c);
        }
        removed
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Relative true residual `|b - K x| / |b|`.
    pub residual: f64,
}

/// Jacobi-preconditioned CG for `K x = b` where `K` is symmetric positive
/// semidefinite with null space spanned by the deflation basis and `b` is
/// orthogonal to that null space. Every iterate is projected onto the
/// mass-orthogonal complement of the null space.
pub fn deflated_cg(
    k: &CsrMatrix<f64>,
    b: &DVector<f64>,
    deflation: &Deflation,
    x0: DVector<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    if k.nrows() != n || x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.nrows().min(x0.len()),
        });
    }
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: DVector::zeros(n),
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag = diagonal(k).map(|d| if d > 0.0 { 1.0 / d } else { 1.0 });
    let mut x = deflation.complement(&x0);
    let mut iterations = 0;
    loop {
        let mut r = b - matvec(k, &x);
        let true_residual = r.norm() / bnorm;
        if true_residual <= tol {
            return Ok(CgOutcome {
                x,
                iterations,
                residual: true_residual,
            });
        }
        if iterations >= max_iterations {
            return Err(Error::NotConverged {
                solver: "deflated CG",
                iterations,
                residual: true_residual,
            });
        }
        // one CG cycle; restarted from the true residual if rounding stalls it
        let mut z = r.component_mul(&inv_diag);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        while iterations < max_iterations {
            let kp = matvec(k, &p);
            let pkp = p.dot(&kp);
            if pkp <= 0.0 {
                break;
            }
            let alpha = rz / pkp;
            x.axpy(alpha, &p, 1.0);
            x = deflation.complement(&x);
            r.axpy(-alpha, &kp, 1.0);
            iterations += 1;
            if r.norm() <= 0.5 * tol * bnorm {
                break;
            }
            z = r.component_mul(&inv_diag);
            let rz_new = r.dot(&z);
            p = &z + &p * (rz_new / rz);
            rz = rz_new;
        }
    }
}

/// Seeded standard-normal-ish vector (uniform on [-1, 1]).
pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// All eigenvalues of the dense pencil `K v = l M v`, ascending.
pub fn dense_generalized_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotConverged {
            solver: "mass Cholesky",
            iterations: 0,
            residual: f64::NAN,
        })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotConverged {
            solver: "mass Cholesky",
            iterations: 0,
            residual: f64::NAN,
        })?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Options for the smallest positive generalized eigenvalue.
#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Problems up to this size are solved densely.
    pub dense_limit: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 10_000,
            dense_limit: 400,
            block: 4,
            seed: 7,
        }
    }
}

/// Smallest eigenvalue of `K v = l M v` on the mass-orthogonal complement of
/// `null` (which must span the null space of `K`).
pub fn smallest_positive_eigenvalue(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    null: &DVector<f64>,
    opts: EigenOptions,
) -> Result<f64> {
    let n = k.nrows();
    if n < 2 {
        return Err(Error::NotConverged {
            solver: "eigen",
            iterations: 0,
            residual: f64::NAN,
        });
    }
    if n <= opts.dense_limit {
        return dense_positive_eigenvalue(k, m, null);
    }
    subspace_iteration(k, m, null, opts)
}

fn dense_positive_eigenvalue(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    null: &DVector<f64>,
) -> Result<f64> {
    // deflate the null direction exactly: restrict to an M-orthogonal basis of its complement
    let kd = to_dense(k);
    let md = to_dense(m);
    let mnull = &md * null;
    let n = null.len();
    let pivot = (0..n)
        .max_by(|&a, &b| mnull[a].abs().total_cmp(&mnull[b].abs()))
        .unwrap_or(0);
    // columns e_j - (mnull_j / mnull_pivot) e_pivot for j != pivot satisfy null^T M v = 0
    let basis = DMatrix::from_fn(n, n - 1, |r, c| {
        let j = if c < pivot { c } else { c + 1 };
        let mut v = 0.0;
        if r == j {
            v += 1.0;
        }
        if r == pivot {
            v -= mnull[j] / mnull[pivot];
        }
        v
    });
    let kr = basis.transpose() * &kd * &basis;
    let mr = basis.transpose() * &md * &basis;
    let ev = dense_generalized_eigenvalues(&kr, &mr)?;
    Ok(ev[0])
}

fn subspace_iteration(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    null: &DVector<f64>,
    opts: EigenOptions,
) -> Result<f64> {
    let n = k.nrows();
    let deflation = Deflation::new(vec![null.clone()], m);
    let block = opts.block.min(n - 1).max(1);
    let mut x: Vec<DVector<f64>> = (0..block)
        .map(|j| deflation.complement(&random_vector(n, opts.seed + j as u64)))
        .collect();
    let mut previous = f64::INFINITY;
    let inner_iterations = 50 * n;
    for iteration in 0..opts.max_iterations {
        let y: Vec<DVector<f64>> = x
            .iter()
            .map(|xi| {
                let rhs = matvec(m, &deflation.complement(xi));
                deflated_cg(k, &rhs, &deflation, DVector::zeros(n), 1e-10, inner_iterations)
                    .map(|o| o.x)
            })
            .collect::<Result<_>>()?;
        let ky: Vec<DVector<f64>> = y.iter().map(|v| matvec(k, v)).collect();
        let my: Vec<DVector<f64>> = y.iter().map(|v| matvec(m, v)).collect();
        let h = DMatrix::from_fn(block, block, |r, c| y[r].dot(&ky[c]));
        let g = DMatrix::from_fn(block, block, |r, c| y[r].dot(&my[c]));
        let h = (&h + h.transpose()) * 0.5;
        let g = (&g + g.transpose()) * 0.5;
        let (values, vectors) = small_pencil(&h, &g)?;
        let theta = values[0];
        x = (0..block)
            .map(|j| {
                let mut v = DVector::zeros(n);
                for (i, yi) in y.iter().enumerate() {
                    v.axpy(vectors[(i, j)], yi, 1.0);
                }
                v
            })
            .collect();
        let change = (theta - previous).abs();
        if change <= 1e-2 * opts.tol * theta && iteration > 0 {
            return Ok(theta);
        }
        previous = theta;
    }
    Err(Error::NotConverged {
        solver: "subspace iteration",
        iterations: opts.max_iterations,
        residual: previous,
    })
}

/// Eigenpairs of a small dense pencil with SPD `g`, ascending, with
/// `g`-orthonormal eigenvectors.
fn small_pencil(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = g.clone().cholesky().ok_or(Error::NotConverged {
        solver: "Rayleigh-Ritz",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let l = chol.l();
    let linv = l.try_inverse().ok_or(Error::NotConverged {
        solver: "Rayleigh-Ritz",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let c = &linv * h * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = linv.transpose() * &eig.eigenvectors;
    let vectors = DMatrix::from_fn(w.nrows(), w.ncols(), |r, c| w[(r, order[c])]);
    Ok((values, vectors))
}
