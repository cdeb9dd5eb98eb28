use std::collections::{HashMap, HashSet};

use super::{ComplexParts, MultijunctionComplex, PatchParts};
use crate::error::Result;

type Edge = (usize, usize);

fn edge(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Children of the edgewise subdivision of a k-simplex into 2^k pieces.
///
/// Each child is a list of k+1 local vertex pairs `(i, j)`; `i == j` denotes
/// the original vertex `i`, otherwise the midpoint of edge `ij`. The children
/// are the Kuhn simplices of the doubled reference simplex
/// `{2 >= y_1 >= ... >= y_k >= 0}`.
pub(crate) fn subdivision_pattern(k: usize) -> Vec<Vec<(usize, usize)>> {
    let mut children = Vec::with_capacity(1 << k);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut perms = Vec::new();
    permutations(&mut perm, 0, &mut perms);
    for corner in 0..(1usize << k) {
        let base: Vec<i32> = (0..k).map(|i| ((corner >> i) & 1) as i32).collect();
        for sigma in &perms {
            let mut y = base.clone();
            let mut pts = vec![y.clone()];
            for &axis in sigma {
                y[axis] += 1;
                pts.push(y.clone());
            }
            if pts.iter().all(|p| in_doubled_simplex(p)) {
                children.push(pts.iter().map(|p| barycentric_pair(p)).collect());
            }
        }
    }
    children
}

fn permutations(v: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == v.len() {
        out.push(v.clone());
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permutations(v, start + 1, out);
        v.swap(start, i);
    }
}

fn in_doubled_simplex(y: &[i32]) -> bool {
    let mut prev = 2;
    for &v in y {
        if v > prev {
            return false;
        }
        prev = v;
    }
    prev >= 0
}

fn barycentric_pair(y: &[i32]) -> (usize, usize) {
    let k = y.len();
    let at = |j: usize| -> i32 {
        if j == 0 {
            2
        } else if j == k + 1 {
            0
        } else {
            y[j - 1]
        }
    };
    let support: Vec<usize> = (0..=k).filter(|&j| at(j) - at(j + 1) != 0).collect();
    match support.as_slice() {
        [j] => (*j, *j),
        [i, j] => (*i, *j),
        _ => unreachable!("doubled Kuhn vertices are vertices or edge midpoints"),
    }
}

/// Nested uniform refinement: every k-simplex is split into 2^k children
/// through its edge midpoints. Midpoints of rim edges of disk patches are
/// snapped back onto the rim circle. Boundary and junction flags propagate.
pub fn refine(c: &MultijunctionComplex) -> Result<MultijunctionComplex> {
    let parts = c.to_parts();
    let nv = c.num_vertices();
    let mut vertices = parts.vertices.clone();
    let mut boundary: Vec<bool> = (0..nv).map(|v| c.is_boundary(v)).collect();

    let patch_edges: Vec<HashSet<Edge>> = c
        .patches()
        .iter()
        .map(|p| {
            let mut set = HashSet::new();
            for s in p.simplices() {
                for a in 0..s.len() {
                    for b in a + 1..s.len() {
                        set.insert(edge(s[a], s[b]));
                    }
                }
            }
            set
        })
        .collect();
    let rim_edges: Vec<HashSet<Edge>> = c
        .patches()
        .iter()
        .map(|p| {
            let mut set = HashSet::new();
            if p.dim() >= 2 {
                for f in p.boundary_facets() {
                    for a in 0..f.len() {
                        for b in a + 1..f.len() {
                            set.insert(edge(f[a], f[b]));
                        }
                    }
                }
            }
            set
        })
        .collect();

    let mut midpoints: HashMap<Edge, usize> = HashMap::new();
    let mut created: Vec<Edge> = Vec::new();
    let mut new_patches = Vec::with_capacity(parts.patches.len());

    for patch in c.patches() {
        let k = patch.dim();
        let pattern = subdivision_pattern(k);
        let mut simplices = Vec::with_capacity(patch.num_simplices() * pattern.len());
        for s in patch.simplices() {
            for child in &pattern {
                let ids: Vec<usize> = child
                    .iter()
                    .map(|&(i, j)| {
                        if i == j {
                            return s[i];
                        }
                        let e = edge(s[i], s[j]);
                        *midpoints.entry(e).or_insert_with(|| {
                            let (a, b) = e;
                            let mut x: Vec<f64> = c
                                .vertex(a)
                                .iter()
                                .zip(c.vertex(b))
                                .map(|(u, v)| 0.5 * (u + v))
                                .collect();
                            let on_rim = boundary[a] && boundary[b];
                            let mut is_boundary = false;
                            if on_rim {
                                for (q, rims) in rim_edges.iter().enumerate() {
                                    if rims.contains(&e) {
                                        is_boundary = true;
                                        if let Some(rim) = c.patch(q).rim() {
                                            snap_to_circle(&mut x, &rim.center, rim.radius);
                                        }
                                    }
                                }
                            }
                            vertices.push(x);
                            boundary.push(is_boundary);
                            created.push(e);
                            vertices.len() - 1
                        })
                    })
                    .collect();
                simplices.push(ids);
            }
        }
        new_patches.push(PatchParts {
            dim: k,
            simplices,
            rim: patch.rim().cloned(),
        });
    }

    let mut junctions = parts.junctions.clone();
    for j in &mut junctions {
        if j.dim == 0 {
            continue;
        }
        let members: HashSet<usize> = j.vertices.iter().copied().collect();
        for e in &created {
            if members.contains(&e.0)
                && members.contains(&e.1)
                && j.patches.iter().all(|&p| patch_edges[p].contains(e))
            {
                j.vertices.push(midpoints[e]);
            }
        }
    }

    MultijunctionComplex::new(ComplexParts {
        ambient_dim: parts.ambient_dim,
        vertices,
        patches: new_patches,
        junctions,
        boundary_vertices: (0..boundary.len()).filter(|&v| boundary[v]).collect(),
        domain: parts.domain,
    })
}

fn snap_to_circle(x: &mut [f64], center: &[f64], radius: f64) {
    let d: f64 = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if d > 0.0 {
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = ci + (*xi - ci) * radius / d;
        }
    }
}

/// Applies `refine` `times` times.
pub fn refine_times(c: &MultijunctionComplex, times: usize) -> Result<MultijunctionComplex> {
    let mut out = c.clone();
    for _ in 0..times {
        out = refine(&out)?;
    }
    Ok(out)
}
