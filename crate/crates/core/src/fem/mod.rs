//! P1 finite elements on the patches: assembly, compatibility of the load,
//! the deflated Neumann solve and post-processing.

mod element;
mod solve;
mod source;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::DofMap;
use crate::linalg::matvec;
use crate::mesh::MultijunctionComplex;
use crate::quadrature;
use crate::tensor::RelaxedTensorField;

pub use element::ElementGeometry;
pub use solve::{
    check_compatibility, solve, CompatibilityReport, InitialGuess, Solution, SolveOptions,
    SolveReport, DEFAULT_COMPAT_TOL,
};
pub use source::{PatchSource, SourceTerm};

/// Elements below this fraction of their patch's mean measure are rejected.
const DEGENERATE_FRACTION: f64 = 1e-14;

fn element_list(c: &MultijunctionComplex) -> Vec<(usize, usize)> {
    c.patches()
        .iter()
        .enumerate()
        .flat_map(|(p, patch)| (0..patch.num_simplices()).map(move |s| (p, s)))
        .collect()
}

fn check_measures(c: &MultijunctionComplex) -> Result<()> {
    for (p, patch) in c.patches().iter().enumerate() {
        let mean = patch.total_measure() / patch.num_simplices() as f64;
        if let Some(s) = patch
            .measures()
            .iter()
            .position(|&m| !(m >= DEGENERATE_FRACTION * mean))
        {
            return Err(Error::DegenerateSimplex { patch: p, simplex: s });
        }
    }
    Ok(())
}

/// Assembles local matrices in parallel and accumulates them in element order.
fn assemble<F>(c: &MultijunctionComplex, dofs: &DofMap, local: F) -> Result<CsrMatrix<f64>>
where
    F: Fn(usize, usize, &ElementGeometry) -> Result<DMatrix<f64>> + Sync,
{
    check_measures(c)?;
    let blocks: Vec<(Vec<usize>, DMatrix<f64>)> = element_list(c)
        .into_par_iter()
        .map(|(p, s)| {
            let geo = ElementGeometry::new(c, p, s)?;
            Ok((dofs.element_dofs(c, p, s), local(p, s, &geo)?))
        })
        .collect::<Result<_>>()?;
    let n = dofs.num_dofs();
    let mut coo = CooMatrix::new(n, n);
    for (ids, m) in &blocks {
        for (a, &i) in ids.iter().enumerate() {
            for (b, &j) in ids.iter().enumerate() {
                coo.push(i, j, m[(a, b)]);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Stiffness `K_ij = sum_e int_e (A_mu grad phi_j) . grad phi_i`.
pub fn assemble_stiffness(
    c: &MultijunctionComplex,
    dofs: &DofMap,
    field: &RelaxedTensorField,
) -> Result<CsrMatrix<f64>> {
    assemble(c, dofs, |p, s, geo| Ok(geo.stiffness(field.tensor(p, s)?)))
}

pub fn assemble_mass(c: &MultijunctionComplex, dofs: &DofMap) -> Result<CsrMatrix<f64>> {
    assemble(c, dofs, |_, _, geo| Ok(geo.mass()))
}

/// `sum_q w_q f(x_q) lambda_a(x_q)` per local vertex `a`, scaled by the volume.
fn element_load(
    c: &MultijunctionComplex,
    q: &SourceTerm,
    p: usize,
    s: usize,
    rule: &quadrature::Rule,
) -> Vec<f64> {
    let pts = c.simplex_points(p, s);
    let vol = c.patch(p).measure(s);
    let mut out = vec![0.0; pts.len()];
    for ((lam, x), w) in rule.points.iter().zip(rule.map(&pts)).zip(&rule.weights) {
        let f = q.eval(p, s, &x);
        for (o, l) in out.iter_mut().zip(lam) {
            *o += vol * w * f * l;
        }
    }
    out
}

/// Load vector `b_i = int Q phi_i`, exact for sources that are polynomial of
/// degree one on each simplex.
pub fn assemble_load(
    c: &MultijunctionComplex,
    dofs: &DofMap,
    q: &SourceTerm,
) -> Result<DVector<f64>> {
    q.validate(c)?;
    check_measures(c)?;
    let rules: Vec<quadrature::Rule> = (0..=c.ambient_dim())
        .map(quadrature::degree_two)
        .collect();
    let parts: Vec<(Vec<usize>, Vec<f64>)> = element_list(c)
        .into_par_iter()
        .map(|(p, s)| {
            let rule = &rules[c.patch(p).dim()];
            (dofs.element_dofs(c, p, s), element_load(c, q, p, s, rule))
        })
        .collect();
    let mut b = DVector::zeros(dofs.num_dofs());
    for (ids, vals) in parts {
        for (i, v) in ids.into_iter().zip(vals) {
            b[i] += v;
        }
    }
    Ok(b)
}

/// `int_{S_p} Q` per patch, with the same quadrature as the load.
pub fn source_integrals(c: &MultijunctionComplex, q: &SourceTerm) -> Result<Vec<f64>> {
    q.validate(c)?;
    Ok(c.patches()
        .iter()
        .enumerate()
        .map(|(p, patch)| {
            let rule = quadrature::degree_two(patch.dim());
            (0..patch.num_simplices())
                .map(|s| element_load(c, q, p, s, &rule).iter().sum::<f64>())
                .sum()
        })
        .collect())
}

/// Discrete energy `u^T K u / 2 - b^T u`.
pub fn energy(u: &DVector<f64>, stiffness: &CsrMatrix<f64>, load: &DVector<f64>) -> f64 {
    0.5 * u.dot(&matvec(stiffness, u)) - load.dot(u)
}

/// Nodal values and the elementwise constant tangential gradient.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub values: DVector<f64>,
    /// `gradients[p][s]`, a vector of the ambient space.
    pub gradients: Vec<Vec<DVector<f64>>>,
}

pub fn tangential_gradient(
    c: &MultijunctionComplex,
    dofs: &DofMap,
    u: &DVector<f64>,
) -> Result<DiscreteField> {
    if u.len() != dofs.num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: dofs.num_dofs(),
            found: u.len(),
        });
    }
    let gradients = c
        .patches()
        .iter()
        .enumerate()
        .map(|(p, patch)| {
            (0..patch.num_simplices())
                .into_par_iter()
                .map(|s| {
                    let geo = ElementGeometry::new(c, p, s)?;
                    let vals: Vec<f64> = dofs.element_dofs(c, p, s).iter().map(|&d| u[d]).collect();
                    Ok(geo.gradient(&vals))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DiscreteField {
        values: u.clone(),
        gradients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_decomposition;
    use crate::linalg::{dense_generalized_eigenvalues, random_vector, to_dense};
    use crate::mesh::{builtin_geometry, BuiltinGeometry, ComplexParts, PatchParts};
    use crate::tensor::{relax_field, ConductivitySpec, RelaxationMode};
    use nalgebra::{DMatrix, SymmetricEigen};

    fn unit_segment() -> MultijunctionComplex {
        MultijunctionComplex::new(ComplexParts {
            ambient_dim: 2,
            vertices: vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]],
            patches: vec![PatchParts {
                dim: 1,
                simplices: vec![vec![0, 1], vec![1, 2]],
                rim: None,
            }],
            junctions: vec![],
            boundary_vertices: vec![0, 2],
            domain: None,
        })
        .unwrap()
    }

    fn identity_field(c: &MultijunctionComplex) -> RelaxedTensorField {
        relax_field(
            c,
            &ConductivitySpec::identity(c.ambient_dim()),
            RelaxationMode::Projected,
        )
        .unwrap()
    }

    #[test]
    fn mass_sums_to_measure_and_stiffness_kills_constants() {
        for g in BuiltinGeometry::ALL {
            let c = builtin_geometry(g, 2).unwrap();
            let k = kernel_decomposition(&c);
            let m = assemble_mass(&c, k.dofs()).unwrap();
            let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
            let ones = DVector::from_element(k.dofs().num_dofs(), 1.0);
            let total = ones.dot(&matvec(&m, &ones));
            assert!((total - c.total_measure()).abs() < 1e-12, "{g}");
            assert!(matvec(&s, &ones).amax() < 1e-12, "{g}");
        }
    }

    #[test]
    fn stiffness_of_linear_function_is_its_dirichlet_energy() {
        // u = x2 on the piston disks: |grad u|^2 = 1 on both disks, 0 on the segment
        let c = builtin_geometry(BuiltinGeometry::Piston, 3).unwrap();
        let k = kernel_decomposition(&c);
        let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
        let u = DVector::from_fn(k.dofs().num_dofs(), |d, _| c.vertex(k.dofs().vertex(d))[1]);
        let e = u.dot(&matvec(&s, &u));
        let disks = c.patch(0).total_measure() + c.patch(1).total_measure();
        assert!((e - disks).abs() < 1e-12);
        let field = tangential_gradient(&c, k.dofs(), &u).unwrap();
        for g in &field.gradients[0] {
            assert!((g[1] - 1.0).abs() < 1e-12 && g[0].abs() < 1e-12 && g[2].abs() < 1e-12);
        }
        for g in &field.gradients[2] {
            assert!(g.amax() < 1e-15);
        }
    }

    #[test]
    fn load_integrates_linear_sources_exactly() {
        let c = builtin_geometry(BuiltinGeometry::YGraph, 3).unwrap();
        let k = kernel_decomposition(&c);
        // radial 1 + 2r on each unit segment: integral 2
        let q = SourceTerm::new(vec![
            PatchSource::Radial {
                center: vec![0.0, 0.0],
                coefficients: vec![1.0, 2.0],
            };
            3
        ]);
        let b = assemble_load(&c, k.dofs(), &q).unwrap();
        assert!((b.sum() - 6.0).abs() < 1e-13);
        let per_patch = source_integrals(&c, &q).unwrap();
        for v in per_patch {
            assert!((v - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn per_element_source_survives_refinement() {
        let c = builtin_geometry(BuiltinGeometry::TwoDisks, 1).unwrap();
        let q = SourceTerm::new(
            c.patches()
                .iter()
                .map(|p| PatchSource::PerElement {
                    values: (0..p.num_simplices()).map(|s| s as f64).collect(),
                })
                .collect(),
        );
        let fine = crate::mesh::refine(&c).unwrap();
        let qf = q.refined(&c);
        qf.validate(&fine).unwrap();
        let coarse_int = source_integrals(&c, &q).unwrap();
        let fine_int = source_integrals(&fine, &qf).unwrap();
        // rim snapping changes areas slightly; the flat parts agree exactly
        for (a, b) in coarse_int.iter().zip(&fine_int) {
            assert!((a - b).abs() < 0.1 * a.abs().max(1.0));
        }
    }

    #[test]
    fn wrong_source_shape_is_rejected() {
        let c = builtin_geometry(BuiltinGeometry::YGraph, 1).unwrap();
        let k = kernel_decomposition(&c);
        assert!(matches!(
            assemble_load(&c, k.dofs(), &SourceTerm::zero(2)),
            Err(Error::InvalidSource(_))
        ));
    }

    #[test]
    fn textbook_segment_matrices() {
        let c = unit_segment();
        let k = kernel_decomposition(&c);
        let s = to_dense(&assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap());
        let m = to_dense(&assemble_mass(&c, k.dofs()).unwrap());
        let h = 0.5;
        let ks = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]) / h;
        let ms = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 2.0]) * (h / 6.0);
        assert!((s - ks).amax() < 1e-14);
        assert!((m - ms).amax() < 1e-15);
        assert_eq!(assemble_load(&c, k.dofs(), &SourceTerm::zero(1)).unwrap().amax(), 0.0);
    }

    #[test]
    fn junction_row_connects_each_leg() {
        let c = builtin_geometry(BuiltinGeometry::YGraph, 1).unwrap();
        let k = kernel_decomposition(&c);
        let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
        let center = (0..k.dofs().num_dofs())
            .find(|&d| k.dofs().patches(d).len() == 3)
            .unwrap();
        let neighbours = s.row(center).col_indices().iter().filter(|&&j| j != center).count();
        assert_eq!(neighbours, 3);
    }

    #[test]
    fn piston_stiffness_is_block_diagonal() {
        let c = builtin_geometry(BuiltinGeometry::Piston, 2).unwrap();
        let k = kernel_decomposition(&c);
        let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
        for (i, row) in s.row_iter().enumerate() {
            for &j in row.col_indices() {
                assert_eq!(k.component_of_dof(i), k.component_of_dof(j));
            }
        }
    }

    #[test]
    fn stiffness_null_space_is_spanned_by_indicators() {
        for g in BuiltinGeometry::ALL {
            let c = builtin_geometry(g, 2).unwrap();
            let k = kernel_decomposition(&c);
            let field = relax_field(&c, &ConductivitySpec::identity(3.min(c.ambient_dim())), RelaxationMode::Projected).unwrap();
            let s = to_dense(&assemble_stiffness(&c, k.dofs(), &field).unwrap());
            assert!((&s - s.transpose()).amax() < 1e-14);
            let eig = SymmetricEigen::new(s.clone()).eigenvalues;
            let top = eig.amax();
            let zero = eig.iter().filter(|&&l| l.abs() < 1e-10 * top).count();
            assert_eq!(zero, k.num_components(), "{g}");
            assert!(eig.min() > -1e-12 * top);
            let m = to_dense(&assemble_mass(&c, k.dofs()).unwrap());
            let ev = dense_generalized_eigenvalues(&m, &DMatrix::identity(m.nrows(), m.nrows())).unwrap();
            assert!(ev[0] > 0.0, "mass is positive definite");
        }
    }

    #[test]
    fn solution_is_a_galerkin_minimizer() {
        let c = builtin_geometry(BuiltinGeometry::TwoDisks, 3).unwrap();
        let k = kernel_decomposition(&c);
        let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
        let m = assemble_mass(&c, k.dofs()).unwrap();
        let q = crate::scenario::default_source(BuiltinGeometry::TwoDisks);
        let b = assemble_load(&c, k.dofs(), &q).unwrap();
        let sol = solve(&s, &b, &k, &m, &SolveOptions::default()).unwrap();
        let r = &sol.load - matvec(&s, &sol.u);
        // |phi^T (K u - b)| <= tol |b| |phi| for every basis vector phi
        assert!(r.amax() <= 1e-10 * sol.load.norm());
        assert!(sol.report.kernel_defect <= 1e-10);
        let e = energy(&sol.u, &s, &sol.load);
        assert!((e - sol.report.energy).abs() < 1e-15);
        for seed in 0..5 {
            let v = random_vector(sol.u.len(), seed);
            for t in [1e-3, -1e-2, 0.5] {
                let w = &sol.u + &v * t;
                assert!(energy(&w, &s, &sol.load) >= e - 1e-14);
            }
        }
        let field = tangential_gradient(&c, k.dofs(), &sol.u).unwrap();
        // gradients lie in the element tangent planes: {x3 = 0} and {x1 = 0}
        for g in &field.gradients[0] {
            assert!(g[2].abs() <= 1e-12);
        }
        for g in &field.gradients[1] {
            assert!(g[0].abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let c = builtin_geometry(BuiltinGeometry::Antenna, 2).unwrap();
        let k = kernel_decomposition(&c);
        let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
        let m = assemble_mass(&c, k.dofs()).unwrap();
        let b = assemble_load(&c, k.dofs(), &SourceTerm::zero(2)).unwrap();
        let sol = solve(&s, &b, &k, &m, &SolveOptions::default()).unwrap();
        assert_eq!(sol.u.amax(), 0.0);
        assert_eq!(energy(&sol.u, &s, &b), 0.0);
    }

    #[test]
    fn y_graph_gradient_magnitudes() {
        let c = builtin_geometry(BuiltinGeometry::YGraph, 5).unwrap();
        let k = kernel_decomposition(&c);
        let s = assemble_stiffness(&c, k.dofs(), &identity_field(&c)).unwrap();
        let m = assemble_mass(&c, k.dofs()).unwrap();
        let a = [1.0, 2.0, -3.0];
        let b = assemble_load(&c, k.dofs(), &SourceTerm::constant(&a)).unwrap();
        let sol = solve(&s, &b, &k, &m, &SolveOptions::default()).unwrap();
        let field = tangential_gradient(&c, k.dofs(), &sol.u).unwrap();
        for (p, grads) in field.gradients.iter().enumerate() {
            for (e, g) in grads.iter().enumerate() {
                let mid = c.simplex_centroid(p, e);
                let s_mid = (mid[0] * mid[0] + mid[1] * mid[1]).sqrt();
                assert!((g.norm() - (a[p] * (s_mid - 1.0)).abs()).abs() < 1e-9);
            }
        }
    }
}
