//! Multijunction complexes: unions of affine simplicial meshes of different
//! dimension embedded in a common ambient space and glued at declared junctions.
//!
//! A complex is validated once at construction and is immutable afterwards.
//! Each patch carries the Hausdorff measure of its own dimension, realized as
//! the exact k-volume of every simplex.

mod builtin;
mod frame;
mod refine;

pub use builtin::{builtin_geometry, BuiltinGeometry};
pub use frame::{tangent_frame, TangentFrame};
pub use refine::{refine, refine_times};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Junction coupling as declared in a mesh document.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    Auto,
    Coupled,
    Decoupled,
}

/// A circle that bounds a flat disk patch; refined rim vertices are snapped onto it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rim {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Smooth design region, used to evaluate the outer normal on the rim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn outer_normal(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        d.into_iter().map(|v| v / n).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Patch {
    dim: usize,
    simplices: Vec<usize>,
    measures: Vec<f64>,
    rim: Option<Rim>,
}

impl Patch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_simplices(&self) -> usize {
        self.measures.len()
    }

    pub fn simplex(&self, i: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.simplices[i * s..(i + 1) * s]
    }

    pub fn simplices(&self) -> impl Iterator<Item = &[usize]> {
        self.simplices.chunks(self.dim + 1)
    }

    /// k-volume of simplex `i`.
    pub fn measure(&self, i: usize) -> f64 {
        self.measures[i]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn total_measure(&self) -> f64 {
        self.measures.iter().sum()
    }

    pub fn rim(&self) -> Option<&Rim> {
        self.rim.as_ref()
    }

    /// Sorted list of the distinct vertex ids used by this patch.
    pub fn vertex_ids(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.simplices.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Facets (sorted vertex tuples) that belong to exactly one simplex.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut order = Vec::new();
        for s in self.simplices() {
            for skip in 0..s.len() {
                let mut f: Vec<usize> = s
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                let e = count.entry(f.clone()).or_insert(0);
                if *e == 0 {
                    order.push(f);
                }
                *e += 1;
            }
        }
        order.into_iter().filter(|f| count[f] == 1).collect()
    }

    /// For each boundary facet, the simplex that owns it.
    pub fn boundary_facets_with_owner(&self) -> Vec<(Vec<usize>, usize)> {
        let facets: BTreeSet<Vec<usize>> = self.boundary_facets().into_iter().collect();
        let mut out = Vec::new();
        for (e, s) in self.simplices().enumerate() {
            for skip in 0..s.len() {
                let mut f: Vec<usize> = s
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                if facets.contains(&f) {
                    out.push((f, e));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JunctionSpec {
    pub vertices: Vec<usize>,
    pub patches: Vec<usize>,
    pub dim: usize,
    pub coupling: Coupling,
}

/// Validated union of simplicial patches with junction incidence.
#[derive(Clone, Debug)]
pub struct MultijunctionComplex {
    ambient_dim: usize,
    vertices: Vec<f64>,
    patches: Vec<Patch>,
    junctions: Vec<JunctionSpec>,
    boundary: Vec<bool>,
    domain: Option<Ball>,
    incidence: Vec<Vec<usize>>,
    vertex_junctions: Vec<Vec<usize>>,
}

/// Raw, unvalidated pieces of a complex.
#[derive(Clone, Debug, Default)]
pub struct ComplexParts {
    pub ambient_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub patches: Vec<PatchParts>,
    pub junctions: Vec<JunctionSpec>,
    pub boundary_vertices: Vec<usize>,
    pub domain: Option<Ball>,
}

#[derive(Clone, Debug, Default)]
pub struct PatchParts {
    pub dim: usize,
    pub simplices: Vec<Vec<usize>>,
    pub rim: Option<Rim>,
}

impl MultijunctionComplex {
    pub fn new(parts: ComplexParts) -> Result<Self> {
        let n = parts.ambient_dim;
        if n < 2 {
            return Err(Error::Malformed(format!(
                "ambient dimension {n} leaves no room for a patch of dimension k < N"
            )));
        }
        let nv = parts.vertices.len();
        let mut vertices = Vec::with_capacity(nv * n);
        for (i, v) in parts.vertices.iter().enumerate() {
            if v.len() != n {
                return Err(Error::Malformed(format!(
                    "vertex {i} has {} coordinates, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Malformed(format!("vertex {i} is not finite")));
            }
            vertices.extend_from_slice(v);
        }
        if parts.patches.is_empty() {
            return Err(Error::Malformed("no patches".into()));
        }

        let mut patches = Vec::with_capacity(parts.patches.len());
        for (p, pp) in parts.patches.into_iter().enumerate() {
            let k = pp.dim;
            if k < 1 || k >= n {
                return Err(Error::PatchDimension {
                    patch: p,
                    dim: k,
                    ambient: n,
                });
            }
            if pp.simplices.is_empty() {
                return Err(Error::Malformed(format!("patch {p} has no simplices")));
            }
            let mut flat = Vec::with_capacity(pp.simplices.len() * (k + 1));
            for (s, simplex) in pp.simplices.iter().enumerate() {
                if simplex.len() != k + 1 {
                    return Err(Error::Malformed(format!(
                        "patch {p} simplex {s} has {} vertices, expected {}",
                        simplex.len(),
                        k + 1
                    )));
                }
                if let Some(&bad) = simplex.iter().find(|&&v| v >= nv) {
                    return Err(Error::Malformed(format!(
                        "patch {p} simplex {s} references missing vertex {bad}"
                    )));
                }
                let distinct: BTreeSet<_> = simplex.iter().collect();
                if distinct.len() != simplex.len() {
                    return Err(Error::DegenerateSimplex {
                        patch: p,
                        simplex: s,
                    });
                }
                flat.extend_from_slice(simplex);
            }
            let mut patch = Patch {
                dim: k,
                simplices: flat,
                measures: Vec::new(),
                rim: pp.rim,
            };
            patch.measures = (0..patch.simplices.len() / (k + 1))
                .map(|s| {
                    let pts: Vec<&[f64]> = patch
                        .simplex(s)
                        .iter()
                        .map(|&v| &vertices[v * n..(v + 1) * n])
                        .collect();
                    match simplex_volume(&pts) {
                        Some(vol) => Ok(vol),
                        None => Err(Error::DegenerateSimplex {
                            patch: p,
                            simplex: s,
                        }),
                    }
                })
                .collect::<Result<_>>()?;
            patches.push(patch);
        }

        let mut boundary = vec![false; nv];
        for &b in &parts.boundary_vertices {
            if b >= nv {
                return Err(Error::Malformed(format!("boundary vertex {b} out of range")));
            }
            boundary[b] = true;
        }

        let mut incidence = vec![Vec::new(); nv];
        for (p, patch) in patches.iter().enumerate() {
            for v in patch.vertex_ids() {
                incidence[v].push(p);
            }
        }

        let patch_vertex_sets: Vec<BTreeSet<usize>> = patches
            .iter()
            .map(|p| p.vertex_ids().into_iter().collect())
            .collect();
        let mut vertex_junctions = vec![Vec::new(); nv];
        for (j, junction) in parts.junctions.iter().enumerate() {
            let bad = |reason: String| Error::InvalidJunction {
                junction: j,
                reason,
            };
            if junction.vertices.is_empty() {
                return Err(bad("no vertices".into()));
            }
            let distinct: BTreeSet<_> = junction.patches.iter().collect();
            if distinct.len() < 2 || distinct.len() != junction.patches.len() {
                return Err(bad("needs at least two distinct patches".into()));
            }
            for &p in &junction.patches {
                if p >= patches.len() {
                    return Err(bad(format!("references missing patch {p}")));
                }
                if junction.dim >= patches[p].dim {
                    return Err(bad(format!(
                        "dimension {} is not below patch {p} dimension {}",
                        junction.dim, patches[p].dim
                    )));
                }
                for &v in &junction.vertices {
                    if v >= nv || !patch_vertex_sets[p].contains(&v) {
                        return Err(bad(format!("vertex {v} does not belong to patch {p}")));
                    }
                }
            }
            for &v in &junction.vertices {
                if !vertex_junctions[v].contains(&j) {
                    vertex_junctions[v].push(j);
                }
            }
        }

        // vertex sharing must be explained by junctions, pair by pair
        for (v, inc) in incidence.iter().enumerate() {
            if inc.len() < 2 {
                continue;
            }
            for (a, &pi) in inc.iter().enumerate() {
                for &pj in &inc[a + 1..] {
                    let declared = vertex_junctions[v].iter().any(|&j| {
                        let js = &parts.junctions[j].patches;
                        js.contains(&pi) && js.contains(&pj)
                    });
                    if !declared {
                        return Err(Error::UndeclaredSharing {
                            vertex: v,
                            patches: inc.clone(),
                        });
                    }
                }
            }
        }

        for (p, patch) in patches.iter().enumerate() {
            for facet in patch.boundary_facets() {
                for v in facet {
                    let in_junction = vertex_junctions[v]
                        .iter()
                        .any(|&j| parts.junctions[j].patches.contains(&p));
                    if !boundary[v] && !in_junction {
                        return Err(Error::OpenBoundary { patch: p, vertex: v });
                    }
                }
            }
        }

        Ok(Self {
            ambient_dim: n,
            vertices,
            patches,
            junctions: parts.junctions,
            boundary,
            domain: parts.domain,
            incidence,
            vertex_junctions,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn num_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, p: usize) -> &Patch {
        &self.patches[p]
    }

    pub fn junctions(&self) -> &[JunctionSpec] {
        &self.junctions
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.boundary[v]).collect()
    }

    pub fn domain(&self) -> Option<&Ball> {
        self.domain.as_ref()
    }

    /// Patches that contain vertex `v`.
    pub fn incident_patches(&self, v: usize) -> &[usize] {
        &self.incidence[v]
    }

    /// Junctions that list vertex `v`.
    pub fn vertex_junctions(&self, v: usize) -> &[usize] {
        &self.vertex_junctions[v]
    }

    /// Coordinates of the vertices of simplex `s` of patch `p`.
    pub fn simplex_points(&self, p: usize, s: usize) -> Vec<&[f64]> {
        self.patches[p]
            .simplex(s)
            .iter()
            .map(|&v| self.vertex(v))
            .collect()
    }

    pub fn simplex_centroid(&self, p: usize, s: usize) -> Vec<f64> {
        let pts = self.simplex_points(p, s);
        (0..self.ambient_dim)
            .map(|r| pts.iter().map(|x| x[r]).sum::<f64>() / pts.len() as f64)
            .collect()
    }

    pub fn total_measure(&self) -> f64 {
        self.patches.iter().map(Patch::total_measure).sum()
    }

    pub fn num_simplices(&self) -> usize {
        self.patches.iter().map(Patch::num_simplices).sum()
    }

    /// Largest edge length over all simplices.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for (p, patch) in self.patches.iter().enumerate() {
            for s in 0..patch.num_simplices() {
                let pts = self.simplex_points(p, s);
                for a in 0..pts.len() {
                    for b in a + 1..pts.len() {
                        h = h.max(distance(pts[a], pts[b]));
                    }
                }
            }
        }
        h
    }

    /// Returns a copy where every junction carries the given coupling.
    pub fn with_coupling(&self, coupling: Coupling) -> Self {
        let mut out = self.clone();
        for j in &mut out.junctions {
            j.coupling = coupling;
        }
        out
    }

    pub fn to_parts(&self) -> ComplexParts {
        ComplexParts {
            ambient_dim: self.ambient_dim,
            vertices: (0..self.num_vertices())
                .map(|v| self.vertex(v).to_vec())
                .collect(),
            patches: self
                .patches
                .iter()
                .map(|p| PatchParts {
                    dim: p.dim,
                    simplices: p.simplices().map(<[usize]>::to_vec).collect(),
                    rim: p.rim.clone(),
                })
                .collect(),
            junctions: self.junctions.clone(),
            boundary_vertices: self.boundary_vertices(),
            domain: self.domain.clone(),
        }
    }

    /// Parses and validates a JSON mesh document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeshDocument =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        load_complex(doc)
    }

    pub fn to_document(&self) -> MeshDocument {
        let parts = self.to_parts();
        MeshDocument {
            ambient_dim: parts.ambient_dim,
            vertices: parts.vertices,
            patches: parts
                .patches
                .into_iter()
                .map(|p| PatchDocument {
                    dim: p.dim,
                    simplices: p.simplices,
                    rim: p.rim,
                })
                .collect(),
            junctions: parts
                .junctions
                .into_iter()
                .map(|j| JunctionDocument {
                    vertices: j.vertices,
                    patches: j.patches,
                    dim: j.dim,
                    coupling: j.coupling,
                })
                .collect(),
            boundary_vertices: parts.boundary_vertices,
            domain: parts.domain,
        }
    }
}

/// JSON mesh document. Indices are 0-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDocument {
    pub ambient_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub patches: Vec<PatchDocument>,
    #[serde(default)]
    pub junctions: Vec<JunctionDocument>,
    #[serde(default)]
    pub boundary_vertices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Ball>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchDocument {
    pub dim: usize,
    pub simplices: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rim: Option<Rim>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionDocument {
    pub vertices: Vec<usize>,
    pub patches: Vec<usize>,
    pub dim: usize,
    #[serde(default)]
    pub coupling: Coupling,
}

pub fn load_complex(doc: MeshDocument) -> Result<MultijunctionComplex> {
    MultijunctionComplex::new(ComplexParts {
        ambient_dim: doc.ambient_dim,
        vertices: doc.vertices,
        patches: doc
            .patches
            .into_iter()
            .map(|p| PatchParts {
                dim: p.dim,
                simplices: p.simplices,
                rim: p.rim,
            })
            .collect(),
        junctions: doc
            .junctions
            .into_iter()
            .map(|j| JunctionSpec {
                vertices: j.vertices,
                patches: j.patches,
                dim: j.dim,
                coupling: j.coupling,
            })
            .collect(),
        boundary_vertices: doc.boundary_vertices,
        domain: doc.domain,
    })
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-volume of the simplex spanned by `pts`, or `None` when degenerate.
pub(crate) fn simplex_volume(pts: &[&[f64]]) -> Option<f64> {
    let k = pts.len() - 1;
    let n = pts[0].len();
    let edges = nalgebra::DMatrix::from_fn(n, k, |r, c| pts[c + 1][r] - pts[0][r]);
    let gram = edges.transpose() * &edges;
    let det = gram.determinant();
    let scale = (0..k).map(|c| gram[(c, c)]).product::<f64>();
    if !(det > 1e-24 * scale) || scale <= 0.0 {
        return None;
    }
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    Some(det.sqrt() / factorial)
}
