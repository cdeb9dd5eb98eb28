//! Tangential projector and relaxed conductivity tensors.
//!
//! Two relaxations of an ambient conductivity `A` onto the tangent space `T`
//! of an element are provided:
//!
//! * **projected**: `P_T A P_T`, the canonical tensor used by the solver;
//! * **schur**: the quadratic form `p -> inf_{n in T^perp} (A (p + n), p + n)`,
//!   i.e. the Schur complement `A_TT - A_TN A_NN^+ A_NT` lifted back to `R^N`.
//!
//! They coincide when `A` maps `T` into itself. When they do not (degenerate
//! `A` whose kernel is oblique to `T`), the field records the disagreement.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{tangent_frame, MultijunctionComplex, TangentFrame};

/// Absolute symmetry tolerance, scaled by `max(1, |A|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative negative-eigenvalue tolerance for nonnegativity.
pub const NONNEGATIVE_TOL: f64 = 1e-10;
/// Relative difference above which projected and schur tensors are flagged.
pub const DISAGREEMENT_TOL: f64 = 1e-10;
/// Relative singular-value cutoff of the normal-block pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Default regularization of the normal block, relative to its norm.
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxationMode {
    #[default]
    Projected,
    Schur,
}

impl std::str::FromStr for RelaxationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected" => Ok(Self::Projected),
            "schur" => Ok(Self::Schur),
            other => Err(Error::Config(format!("unknown relaxation mode `{other}`"))),
        }
    }
}

/// Orthogonal projector onto the tangent space of `frame`.
pub fn tangential_projector(frame: &TangentFrame) -> DMatrix<f64> {
    &frame.tangent * frame.tangent.transpose()
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let defect = asymmetry(a);
    if defect > SYMMETRY_TOL * a.amax().max(1.0) {
        return Err(Error::Asymmetric { asymmetry: defect });
    }
    Ok(())
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// `P_T A P_T`.
pub fn relax_projected(a: &DMatrix<f64>, frame: &TangentFrame) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    let t = &frame.tangent;
    let reduced = t.transpose() * a * t;
    Ok(symmetrize(t * reduced * t.transpose()))
}

/// Schur-complement relaxation `A_TT - A_TN (A_NN + eps I)^+ A_NT`, lifted to
/// ambient coordinates. `eps = None` uses `DEFAULT_EPS * |A_NN|`.
pub fn relax_schur(a: &DMatrix<f64>, frame: &TangentFrame, eps: Option<f64>) -> DMatrix<f64> {
    let t = &frame.tangent;
    let nrm = &frame.normal;
    let a_tt = t.transpose() * a * t;
    if nrm.ncols() == 0 {
        return symmetrize(t * a_tt * t.transpose());
    }
    let a_tn = t.transpose() * a * nrm;
    let a_nn = nrm.transpose() * a * nrm;
    let eps = eps.unwrap_or(DEFAULT_EPS * a_nn.norm());
    let shifted = symmetrize(&a_nn + DMatrix::identity(a_nn.nrows(), a_nn.ncols()) * eps);
    let pinv = symmetric_pinv(&shifted, PINV_CUTOFF);
    let reduced = a_tt - &a_tn * pinv * a_tn.transpose();
    symmetrize(t * reduced * t.transpose())
}

/// Pseudo-inverse of a symmetric matrix via its eigendecomposition.
pub fn symmetric_pinv(a: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|l| {
        if top > 0.0 && l.abs() > cutoff * top {
            1.0 / l
        } else {
            0.0
        }
    });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Explicit infimum formula `B - sum_i (B e_i (x) B e_i) / (B e_i, e_i)` over a
/// B-orthogonal basis `e_i` of the normal space. Directions with
/// `(B e, e) < 1e-12 |B|` are treated as kernel directions and skipped.
pub fn relax_explicit(b: &DMatrix<f64>, frame: &TangentFrame) -> DMatrix<f64> {
    let scale = b.norm();
    let mut pool: Vec<DVector<f64>> = frame.normal.column_iter().map(|c| c.into_owned()).collect();
    let mut out = b.clone();
    while !pool.is_empty() {
        let (best, q) = pool
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (b * v).dot(v)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if q < 1e-12 * scale {
            break;
        }
        let v = pool.swap_remove(best);
        let bv = b * &v;
        for w in &mut pool {
            let c = bv.dot(w) / q;
            w.axpy(-c, &v, 1.0);
        }
        out -= &bv * bv.transpose() / q;
    }
    symmetrize(out)
}

/// Smallest eigenvalue of the tensor restricted to the tangent space.
pub fn tangent_coercivity(a: &DMatrix<f64>, frame: &TangentFrame) -> f64 {
    let reduced = symmetrize(frame.tangent.transpose() * a * &frame.tangent);
    SymmetricEigen::new(reduced).eigenvalues.min()
}

/// How the ambient conductivity varies over the complex.
#[derive(Clone, Debug, PartialEq)]
pub enum Conductivity {
    Constant(DMatrix<f64>),
    PerPatch(BTreeMap<usize, DMatrix<f64>>),
    /// `A(x) = base + sum_i x_i slopes[i]`, evaluated at element centroids.
    Affine {
        base: DMatrix<f64>,
        slopes: Vec<DMatrix<f64>>,
    },
}

/// Ambient conductivity plus its declared tangential coercivity bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductivitySpec {
    pub conductivity: Conductivity,
    pub lambda: f64,
}

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum ConductivityDocument {
    Constant {
        matrix: Rows,
        lambda: f64,
    },
    PerPatch {
        matrices: BTreeMap<String, Rows>,
        lambda: f64,
    },
    Affine {
        matrix: Rows,
        slopes: Vec<Rows>,
        lambda: f64,
    },
}

fn to_matrix(rows: &Rows) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidConductivity("matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Serialize for ConductivitySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = match &self.conductivity {
            Conductivity::Constant(m) => ConductivityDocument::Constant {
                matrix: to_rows(m),
                lambda: self.lambda,
            },
            Conductivity::PerPatch(map) => ConductivityDocument::PerPatch {
                matrices: map.iter().map(|(k, m)| (k.to_string(), to_rows(m))).collect(),
                lambda: self.lambda,
            },
            Conductivity::Affine { base, slopes } => ConductivityDocument::Affine {
                matrix: to_rows(base),
                slopes: slopes.iter().map(to_rows).collect(),
                lambda: self.lambda,
            },
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConductivitySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ConductivityDocument::deserialize(d)?;
        let conv = |r: &Rows| to_matrix(r).map_err(D::Error::custom);
        Ok(match doc {
            ConductivityDocument::Constant { matrix, lambda } => ConductivitySpec {
                conductivity: Conductivity::Constant(conv(&matrix)?),
                lambda,
            },
            ConductivityDocument::PerPatch { matrices, lambda } => ConductivitySpec {
                conductivity: Conductivity::PerPatch(
                    matrices
                        .iter()
                        .map(|(k, m)| {
                            let patch = k.parse::<usize>().map_err(|_| {
                                D::Error::custom(format!("patch key {k:?} is not an index"))
                            })?;
                            Ok((patch, conv(m)?))
                        })
                        .collect::<std::result::Result<_, D::Error>>()?,
                ),
                lambda,
            },
            ConductivityDocument::Affine {
                matrix,
                slopes,
                lambda,
            } => ConductivitySpec {
                conductivity: Conductivity::Affine {
                    base: conv(&matrix)?,
                    slopes: slopes.iter().map(conv).collect::<std::result::Result<_, _>>()?,
                },
                lambda,
            },
        })
    }
}

impl ConductivitySpec {
    pub fn identity(n: usize) -> Self {
        Self {
            conductivity: Conductivity::Constant(DMatrix::identity(n, n)),
            lambda: 1.0,
        }
    }

    pub fn constant(matrix: DMatrix<f64>, lambda: f64) -> Self {
        Self {
            conductivity: Conductivity::Constant(matrix),
            lambda,
        }
    }

    /// Conductivity on patch `patch` at point `x`.
    pub fn at(&self, patch: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let a = match &self.conductivity {
            Conductivity::Constant(m) => m.clone(),
            Conductivity::PerPatch(map) => map.get(&patch).cloned().ok_or_else(|| {
                Error::InvalidConductivity(format!("no matrix given for patch {patch}"))
            })?,
            Conductivity::Affine { base, slopes } => {
                if slopes.len() != x.len() {
                    return Err(Error::InvalidConductivity(format!(
                        "{} slopes given for ambient dimension {}",
                        slopes.len(),
                        x.len()
                    )));
                }
                slopes
                    .iter()
                    .zip(x)
                    .fold(base.clone(), |acc, (s, xi)| acc + s * *xi)
            }
        };
        if a.nrows() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: a.nrows(),
            });
        }
        check_symmetric(&a)?;
        let min = SymmetricEigen::new(symmetrize(a.clone())).eigenvalues.min();
        if min < -NONNEGATIVE_TOL * a.norm() {
            return Err(Error::InvalidConductivity(format!(
                "matrix on patch {patch} has negative eigenvalue {min:e}"
            )));
        }
        Ok(a)
    }
}

/// Per-element relaxed tensors of a complex.
#[derive(Clone, Debug)]
pub struct RelaxedTensorField {
    pub mode: RelaxationMode,
    /// `tensors[patch][element]`, N x N.
    pub tensors: Vec<Vec<DMatrix<f64>>>,
    /// Relative Frobenius distance between the projected and schur tensors.
    pub disagreement: Vec<Vec<f64>>,
    /// Smallest eigenvalue of the selected tensor on the tangent space.
    pub coercivity: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl RelaxedTensorField {
    pub fn tensor(&self, patch: usize, element: usize) -> Result<&DMatrix<f64>> {
        self.tensors
            .get(patch)
            .and_then(|t| t.get(element))
            .ok_or(Error::MissingTensor { patch, element })
    }

    pub fn max_disagreement(&self) -> f64 {
        self.disagreement
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }

    /// True when the two relaxations differ anywhere beyond `DISAGREEMENT_TOL`.
    pub fn disagreement_flagged(&self) -> bool {
        self.max_disagreement() > DISAGREEMENT_TOL
    }

    pub fn min_coercivity(&self) -> f64 {
        self.coercivity
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

struct ElementTensor {
    tensor: DMatrix<f64>,
    disagreement: f64,
    coercivity: f64,
}

/// Relaxes the conductivity on every element of `c`.
///
/// Both relaxations are computed so the disagreement diagnostic is always
/// filled. In projected mode the tangential coercivity bound is enforced.
pub fn relax_field(
    c: &MultijunctionComplex,
    spec: &ConductivitySpec,
    mode: RelaxationMode,
) -> Result<RelaxedTensorField> {
    if !(spec.lambda > 0.0) {
        return Err(Error::InvalidConductivity(
            "lambda must be positive".into(),
        ));
    }
    let mut tensors = Vec::with_capacity(c.patches().len());
    let mut disagreement = Vec::with_capacity(c.patches().len());
    let mut coercivity = Vec::with_capacity(c.patches().len());
    for (p, patch) in c.patches().iter().enumerate() {
        let elements: Vec<ElementTensor> = (0..patch.num_simplices())
            .into_par_iter()
            .map(|s| {
                let frame = tangent_frame(c, p, s)?;
                let centroid = centroid(&c.simplex_points(p, s));
                let a = spec.at(p, &centroid)?;
                let projected = relax_projected(&a, &frame)?;
                let schur = relax_schur(&a, &frame, None);
                let gap = (&projected - &schur).norm() / projected.norm().max(f64::MIN_POSITIVE);
                let tensor = match mode {
                    RelaxationMode::Projected => projected,
                    RelaxationMode::Schur => schur,
                };
                let coercivity = tangent_coercivity(&tensor, &frame);
                if mode == RelaxationMode::Projected
                    && coercivity < spec.lambda * (1.0 - 1e-12) - 1e-14
                {
                    return Err(Error::Coercivity {
                        patch: p,
                        element: s,
                        found: coercivity,
                        lambda: spec.lambda,
                    });
                }
                Ok(ElementTensor {
                    tensor,
                    disagreement: gap,
                    coercivity,
                })
            })
            .collect::<Result<_>>()?;
        let mut t = Vec::with_capacity(elements.len());
        let mut d = Vec::with_capacity(elements.len());
        let mut k = Vec::with_capacity(elements.len());
        for e in elements {
            t.push(e.tensor);
            d.push(e.disagreement);
            k.push(e.coercivity);
        }
        tensors.push(t);
        disagreement.push(d);
        coercivity.push(k);
    }
    Ok(RelaxedTensorField {
        mode,
        tensors,
        disagreement,
        coercivity,
        lambda: spec.lambda,
    })
}

pub(crate) fn centroid(pts: &[&[f64]]) -> Vec<f64> {
    let n = pts[0].len();
    (0..n)
        .map(|r| pts.iter().map(|p| p[r]).sum::<f64>() / pts.len() as f64)
        .collect()
}
