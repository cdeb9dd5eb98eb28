//! Shared fixtures for the benchmarks.

use multijunction::fem::{assemble_load, assemble_mass, assemble_stiffness};
use multijunction::kernel::{kernel_decomposition, KernelDecomposition};
use multijunction::mesh::{builtin_geometry, BuiltinGeometry, MultijunctionComplex};
use multijunction::scenario::{default_source, ScenarioConfig};
use multijunction::tensor::{relax_field, ConductivitySpec, RelaxationMode, RelaxedTensorField};
use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

/// A built-in scenario assembled at one level.
pub struct Fixture {
    pub complex: MultijunctionComplex,
    pub kernel: KernelDecomposition,
    pub conductivity: ConductivitySpec,
    pub field: RelaxedTensorField,
    pub stiffness: CsrMatrix<f64>,
    pub mass: CsrMatrix<f64>,
    pub load: DVector<f64>,
}

pub fn fixture(g: BuiltinGeometry, level: usize) -> Fixture {
    let complex = builtin_geometry(g, level).unwrap();
    let kernel = kernel_decomposition(&complex);
    let conductivity = ScenarioConfig::builtin(g).conductivity_spec(complex.ambient_dim());
    let field = relax_field(&complex, &conductivity, RelaxationMode::Projected).unwrap();
    let stiffness = assemble_stiffness(&complex, kernel.dofs(), &field).unwrap();
    let mass = assemble_mass(&complex, kernel.dofs()).unwrap();
    let load = assemble_load(&complex, kernel.dofs(), &default_source(g)).unwrap();
    Fixture {
        complex,
        kernel,
        conductivity,
        field,
        stiffness,
        mass,
        load,
    }
}
