use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kernel_decomposition;
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness};
use crate::linalg::{smallest_positive_eigenvalue, submatrix, EigenOptions};
use crate::mesh::MultijunctionComplex;
use crate::tensor::{relax_field, ConductivitySpec, RelaxationMode};

/// Discrete Poincare constant of one component: `C = 1 / lambda_1` with
/// `lambda_1` the smallest positive eigenvalue of the tangential Laplacian
/// stiffness against the mass matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareEntry {
    pub component: usize,
    pub dofs: usize,
    pub lambda1: f64,
    pub constant: f64,
}

pub fn poincare_constant(
    c: &MultijunctionComplex,
    component: usize,
    opts: EigenOptions,
) -> Result<PoincareEntry> {
    let kernel = kernel_decomposition(c);
    if component >= kernel.num_components() {
        return Err(Error::UnknownComponent(component));
    }
    let field = relax_field(
        c,
        &ConductivitySpec::identity(c.ambient_dim()),
        RelaxationMode::Projected,
    )?;
    let k = assemble_stiffness(c, kernel.dofs(), &field)?;
    let m = assemble_mass(c, kernel.dofs())?;
    let rows = kernel.component_dofs(component);
    let kc = submatrix(&k, &rows);
    let mc = submatrix(&m, &rows);
    let lambda1 =
        smallest_positive_eigenvalue(&kc, &mc, &DVector::from_element(rows.len(), 1.0), opts)?;
    Ok(PoincareEntry {
        component,
        dofs: rows.len(),
        lambda1,
        constant: 1.0 / lambda1,
    })
}
