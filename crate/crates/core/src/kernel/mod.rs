//! Coupling graph, patch-local degrees of freedom and the kernel of the
//! Neumann operator: one indicator per connected component.

mod poincare;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Deflation;
use crate::mesh::{Coupling, JunctionSpec, MultijunctionComplex};

pub use poincare::{poincare_constant, PoincareEntry};

/// Whether a junction of dimension `j.dim` transmits between patches of
/// dimensions `ki` and `kj`. Under `Auto` a junction couples exactly when it
/// has positive capacity in both patches, i.e. `m > k - 2` on each side.
pub fn junction_couples(j: &JunctionSpec, ki: usize, kj: usize) -> bool {
    match j.coupling {
        Coupling::Coupled => true,
        Coupling::Decoupled => false,
        Coupling::Auto => {
            let m = j.dim as isize;
            m > ki as isize - 2 && m > kj as isize - 2
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingEdge {
    pub patches: (usize, usize),
    pub junction: usize,
}

/// Patches as nodes, coupling junctions as edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingGraph {
    pub num_patches: usize,
    pub edges: Vec<CouplingEdge>,
}

impl CouplingGraph {
    /// Connected components as sorted patch lists, ordered by smallest patch.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut sets = DisjointSets::new(self.num_patches);
        for e in &self.edges {
            sets.union(e.patches.0, e.patches.1);
        }
        sets.groups()
    }
}

pub fn coupling_graph(c: &MultijunctionComplex) -> CouplingGraph {
    let mut edges = Vec::new();
    for (id, j) in c.junctions().iter().enumerate() {
        for (a, &p) in j.patches.iter().enumerate() {
            for &q in &j.patches[a + 1..] {
                if junction_couples(j, c.patch(p).dim(), c.patch(q).dim()) {
                    edges.push(CouplingEdge {
                        patches: (p.min(q), p.max(q)),
                        junction: id,
                    });
                }
            }
        }
    }
    CouplingGraph {
        num_patches: c.patches().len(),
        edges,
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for x in 0..self.parent.len() {
            let r = self.find(x);
            by_root.entry(r).or_default().push(x);
        }
        by_root.into_values().collect()
    }
}

/// Degrees of freedom: one per (vertex, group of patches glued at it).
/// Patches meeting at a vertex share a value only through coupling junctions
/// that contain the vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    /// `(vertex, dof)` pairs per patch, sorted by vertex.
    patch_dofs: Vec<Vec<(usize, usize)>>,
    dof_vertex: Vec<usize>,
    dof_patches: Vec<Vec<usize>>,
}

impl DofMap {
    pub fn new(c: &MultijunctionComplex) -> Self {
        let np = c.patches().len();
        let mut patch_dofs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); np];
        let mut dof_vertex = Vec::new();
        let mut dof_patches = Vec::new();
        for v in 0..c.num_vertices() {
            let incident = c.incident_patches(v);
            if incident.is_empty() {
                continue;
            }
            let local = |p: usize| incident.iter().position(|&q| q == p);
            let mut sets = DisjointSets::new(incident.len());
            for &jid in c.vertex_junctions(v) {
                let j = &c.junctions()[jid];
                for (a, &p) in j.patches.iter().enumerate() {
                    for &q in &j.patches[a + 1..] {
                        if junction_couples(j, c.patch(p).dim(), c.patch(q).dim()) {
                            if let (Some(lp), Some(lq)) = (local(p), local(q)) {
                                sets.union(lp, lq);
                            }
                        }
                    }
                }
            }
            for group in sets.groups() {
                let dof = dof_vertex.len();
                dof_vertex.push(v);
                let patches: Vec<usize> = group.iter().map(|&l| incident[l]).collect();
                for &p in &patches {
                    patch_dofs[p].push((v, dof));
                }
                dof_patches.push(patches);
            }
        }
        Self {
            patch_dofs,
            dof_vertex,
            dof_patches,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_vertex.len()
    }

    /// DOF carrying the value of `patch` at `vertex`.
    pub fn dof(&self, patch: usize, vertex: usize) -> Option<usize> {
        let list = &self.patch_dofs[patch];
        list.binary_search_by_key(&vertex, |&(v, _)| v)
            .ok()
            .map(|i| list[i].1)
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.dof_vertex[dof]
    }

    /// Patches sharing the DOF, ascending.
    pub fn patches(&self, dof: usize) -> &[usize] {
        &self.dof_patches[dof]
    }

    pub fn patch_dofs(&self, patch: usize) -> impl Iterator<Item = usize> + '_ {
        self.patch_dofs[patch].iter().map(|&(_, d)| d)
    }

    /// DOFs of the vertices of simplex `s` of `patch`, in simplex order.
    pub fn element_dofs(&self, c: &MultijunctionComplex, patch: usize, s: usize) -> Vec<usize> {
        c.patch(patch)
            .simplex(s)
            .iter()
            .map(|&v| {
                self.dof(patch, v)
                    .expect("every simplex vertex carries a dof")
            })
            .collect()
    }
}

/// Connected components of the coupling graph with their indicator vectors.
#[derive(Clone, Debug)]
pub struct KernelDecomposition {
    dofs: DofMap,
    components: Vec<Vec<usize>>,
    dof_component: Vec<usize>,
    measures: Vec<f64>,
}

pub fn kernel_decomposition(c: &MultijunctionComplex) -> KernelDecomposition {
    let dofs = DofMap::new(c);
    let components = coupling_graph(c).components();
    let mut patch_component = vec![0; c.patches().len()];
    for (l, comp) in components.iter().enumerate() {
        for &p in comp {
            patch_component[p] = l;
        }
    }
    let dof_component = (0..dofs.num_dofs())
        .map(|d| patch_component[dofs.patches(d)[0]])
        .collect();
    let measures = components
        .iter()
        .map(|comp| comp.iter().map(|&p| c.patch(p).total_measure()).sum())
        .collect();
    KernelDecomposition {
        dofs,
        components,
        dof_component,
        measures,
    }
}

impl KernelDecomposition {
    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of_dof(&self, dof: usize) -> usize {
        self.dof_component[dof]
    }

    pub fn component_of_patch(&self, patch: usize) -> usize {
        self.components
            .iter()
            .position(|c| c.contains(&patch))
            .expect("every patch lies in a component")
    }

    /// DOFs of component `l`, ascending.
    pub fn component_dofs(&self, l: usize) -> Vec<usize> {
        (0..self.dof_component.len())
            .filter(|&d| self.dof_component[d] == l)
            .collect()
    }

    /// Total measure of component `l`.
    pub fn measure(&self, l: usize) -> f64 {
        self.measures[l]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn indicator(&self, l: usize) -> Result<DVector<f64>> {
        if l >= self.components.len() {
            return Err(Error::UnknownComponent(l));
        }
        Ok(DVector::from_iterator(
            self.dof_component.len(),
            self.dof_component.iter().map(|&c| f64::from(c == l)),
        ))
    }

    pub fn indicators(&self) -> Vec<DVector<f64>> {
        (0..self.num_components())
            .map(|l| self.indicator(l).expect("component in range"))
            .collect()
    }

    pub fn deflation(&self, mass: &CsrMatrix<f64>) -> Deflation {
        Deflation::new(self.indicators(), mass)
    }
}

/// Mass-orthogonal projection onto the kernel:
/// `P u = sum_l chi_l (chi_l^T M u) / mu_l`.
pub fn project_kernel(
    u: &DVector<f64>,
    kernel: &KernelDecomposition,
    mass: &CsrMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = kernel.dofs.num_dofs();
    if u.len() != n || mass.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if u.len() != n { u.len() } else { mass.nrows() },
        });
    }
    Ok(kernel.deflation(mass).project(u))
}
