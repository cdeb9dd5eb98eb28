use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    refine_times, Ball, ComplexParts, Coupling, JunctionSpec, MultijunctionComplex, PatchParts,
    Rim,
};
use crate::error::{Error, Result};

/// Rim vertices of the coarsest disk fan.
const DISK_RIM_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinGeometry {
    /// Three unit radii of the unit disk meeting at its center.
    YGraph,
    /// Great disks `{x3 = 0}` and `{x1 = 0}` of the unit ball, sharing a diameter.
    TwoDisks,
    /// Disks `{x1 = -1}`, `{x1 = 1}` in `B(0, sqrt 2)` joined by the segment on the x1 axis.
    Piston,
    /// Disks `{x3 = -1}` and `{x1 = 1}` in `B(0, sqrt 2)` touching at `(1, 0, -1)`.
    TiltedDisks,
    /// Unit disk in `{x3 = 0}` with a unit segment standing on its center.
    Antenna,
    /// Disks `{x3 = -1}` and `{x2 = 1}` in `B(0, sqrt 2)` touching at `(0, 1, -1)`.
    TwoDisksPoint,
}

impl BuiltinGeometry {
    pub const ALL: [BuiltinGeometry; 6] = [
        BuiltinGeometry::YGraph,
        BuiltinGeometry::TwoDisks,
        BuiltinGeometry::Piston,
        BuiltinGeometry::TiltedDisks,
        BuiltinGeometry::Antenna,
        BuiltinGeometry::TwoDisksPoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinGeometry::YGraph => "y_graph",
            BuiltinGeometry::TwoDisks => "two_disks",
            BuiltinGeometry::Piston => "piston",
            BuiltinGeometry::TiltedDisks => "tilted_disks",
            BuiltinGeometry::Antenna => "antenna",
            BuiltinGeometry::TwoDisksPoint => "two_disks_point",
        }
    }
}

impl fmt::Display for BuiltinGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinGeometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinGeometry::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::UnknownGeometry(s.to_string()))
    }
}

/// Builds a built-in geometry. Resolution 1 is the coarsest mesh; each further
/// step is one nested uniform refinement.
pub fn builtin_geometry(
    geometry: BuiltinGeometry,
    resolution: usize,
) -> Result<MultijunctionComplex> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be at least 1".into()));
    }
    let base = match geometry {
        BuiltinGeometry::YGraph => y_graph(),
        BuiltinGeometry::TwoDisks => two_disks(),
        BuiltinGeometry::Piston => piston(),
        BuiltinGeometry::TiltedDisks => tilted_disks(),
        BuiltinGeometry::Antenna => antenna(),
        BuiltinGeometry::TwoDisksPoint => two_disks_point(),
    }?;
    refine_times(&base, resolution - 1)
}

/// Deduplicating vertex pool for the generators.
#[derive(Default)]
struct Builder {
    vertices: Vec<Vec<f64>>,
    index: HashMap<Vec<i64>, usize>,
    patches: Vec<PatchParts>,
    boundary: Vec<usize>,
}

impl Builder {
    fn vertex(&mut self, x: Vec<f64>) -> usize {
        let key: Vec<i64> = x.iter().map(|v| (v * 1e9).round() as i64).collect();
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        self.vertices.push(x);
        self.index.insert(key, self.vertices.len() - 1);
        self.vertices.len() - 1
    }

    /// Fan-triangulated disk; returns (patch id, center id, rim ids).
    fn disk(&mut self, center: [f64; 3], u: [f64; 3], v: [f64; 3]) -> (usize, usize, Vec<usize>) {
        let c = self.vertex(center.to_vec());
        let rim: Vec<usize> = (0..DISK_RIM_POINTS)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / DISK_RIM_POINTS as f64;
                let (s, co) = t.sin_cos();
                let x = (0..3).map(|r| center[r] + co * u[r] + s * v[r]).collect();
                self.vertex(clean(x))
            })
            .collect();
        let simplices = (0..DISK_RIM_POINTS)
            .map(|i| vec![c, rim[i], rim[(i + 1) % DISK_RIM_POINTS]])
            .collect();
        self.patches.push(PatchParts {
            dim: 2,
            simplices,
            rim: Some(Rim {
                center: center.to_vec(),
                radius: 1.0,
            }),
        });
        self.boundary.extend(&rim);
        (self.patches.len() - 1, c, rim)
    }

    fn segment(&mut self, points: &[Vec<f64>]) -> (usize, Vec<usize>) {
        let ids: Vec<usize> = points.iter().map(|p| self.vertex(p.clone())).collect();
        let simplices = ids.windows(2).map(<[usize]>::to_vec).collect();
        self.patches.push(PatchParts {
            dim: 1,
            simplices,
            rim: None,
        });
        (self.patches.len() - 1, ids)
    }

    fn finish(
        mut self,
        ambient_dim: usize,
        junctions: Vec<JunctionSpec>,
        domain: Ball,
    ) -> Result<MultijunctionComplex> {
        self.boundary.sort_unstable();
        self.boundary.dedup();
        MultijunctionComplex::new(ComplexParts {
            ambient_dim,
            vertices: self.vertices,
            patches: self.patches,
            junctions,
            boundary_vertices: self.boundary,
            domain: Some(domain),
        })
    }
}

/// Rounds away trig noise such as `cos(pi/2) = 6e-17`.
fn clean(x: Vec<f64>) -> Vec<f64> {
    x.into_iter()
        .map(|v| if v.abs() < 1e-15 { 0.0 } else { v })
        .collect()
}

fn point_junction(vertex: usize, patches: Vec<usize>) -> JunctionSpec {
    JunctionSpec {
        vertices: vec![vertex],
        patches,
        dim: 0,
        coupling: Coupling::Auto,
    }
}

fn unit_ball(n: usize, radius: f64) -> Ball {
    Ball {
        center: vec![0.0; n],
        radius,
    }
}

fn y_graph() -> Result<MultijunctionComplex> {
    let mut b = Builder::default();
    let origin = vec![0.0, 0.0];
    let mut tips = Vec::new();
    for deg in [90.0_f64, 210.0, 330.0] {
        let (s, c) = deg.to_radians().sin_cos();
        let tip = clean(vec![c, s]);
        let (_, ids) = b.segment(&[origin.clone(), tip]);
        tips.push(ids[1]);
    }
    b.boundary.extend(&tips);
    let center = b.vertex(origin);
    b.finish(2, vec![point_junction(center, vec![0, 1, 2])], unit_ball(2, 1.0))
}

fn two_disks() -> Result<MultijunctionComplex> {
    let mut b = Builder::default();
    let (_, c, _) = b.disk([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    b.disk([0.0; 3], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    let top = b.vertex(vec![0.0, 1.0, 0.0]);
    let bottom = b.vertex(vec![0.0, -1.0, 0.0]);
    let diameter = JunctionSpec {
        vertices: vec![c, top, bottom],
        patches: vec![0, 1],
        dim: 1,
        coupling: Coupling::Auto,
    };
    b.finish(3, vec![diameter], unit_ball(3, 1.0))
}

fn piston() -> Result<MultijunctionComplex> {
    let mut b = Builder::default();
    let e2 = [0.0, 1.0, 0.0];
    let e3 = [0.0, 0.0, 1.0];
    let (_, left, _) = b.disk([-1.0, 0.0, 0.0], e2, e3);
    let (_, right, _) = b.disk([1.0, 0.0, 0.0], e2, e3);
    b.segment(&[
        vec![-1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
    ]);
    b.finish(
        3,
        vec![point_junction(left, vec![0, 2]), point_junction(right, vec![1, 2])],
        unit_ball(3, SQRT_2),
    )
}

fn tilted_disks() -> Result<MultijunctionComplex> {
    let mut b = Builder::default();
    b.disk([0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    b.disk([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    let touch = b.vertex(vec![1.0, 0.0, -1.0]);
    b.finish(3, vec![point_junction(touch, vec![0, 1])], unit_ball(3, SQRT_2))
}

fn antenna() -> Result<MultijunctionComplex> {
    let mut b = Builder::default();
    let (_, c, _) = b.disk([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    let (_, ids) = b.segment(&[
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.5],
        vec![0.0, 0.0, 1.0],
    ]);
    b.boundary.push(ids[2]);
    b.finish(3, vec![point_junction(c, vec![0, 1])], unit_ball(3, 1.0))
}

fn two_disks_point() -> Result<MultijunctionComplex> {
    let mut b = Builder::default();
    b.disk([0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    b.disk([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
    let touch = b.vertex(vec![0.0, 1.0, -1.0]);
    b.finish(3, vec![point_junction(touch, vec![0, 1])], unit_ball(3, SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn y_graph_base() {
        let c = builtin_geometry(BuiltinGeometry::YGraph, 1).unwrap();
        assert_eq!(c.patches().len(), 3);
        assert_eq!(c.num_vertices(), 4);
        assert_eq!(c.junctions().len(), 1);
        assert_eq!(c.boundary_vertices().len(), 3);
        for p in c.patches() {
            assert!((p.total_measure() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn piston_structure() {
        let c = builtin_geometry(BuiltinGeometry::Piston, 2).unwrap();
        let dims: Vec<usize> = c.patches().iter().map(|p| p.dim()).collect();
        assert_eq!(dims, vec![2, 2, 1]);
        assert_eq!(c.junctions().len(), 2);
        assert!(c.junctions().iter().all(|j| j.dim == 0));
        assert!((c.patch(2).total_measure() - 2.0).abs() < 1e-14);
        // rim vertices lie on the sphere of radius sqrt 2
        for v in c.boundary_vertices() {
            let r: f64 = c.vertex(v).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - SQRT_2).abs() < 1e-14);
        }
    }

    #[test]
    fn two_disks_share_a_diameter() {
        let c = builtin_geometry(BuiltinGeometry::TwoDisks, 1).unwrap();
        assert_eq!(c.junctions()[0].dim, 1);
        assert_eq!(c.junctions()[0].vertices.len(), 3);
    }

    #[test]
    fn touching_points() {
        let t = builtin_geometry(BuiltinGeometry::TiltedDisks, 1).unwrap();
        let j = &t.junctions()[0];
        assert_eq!(t.vertex(j.vertices[0]), &[1.0, 0.0, -1.0]);
        let p = builtin_geometry(BuiltinGeometry::TwoDisksPoint, 1).unwrap();
        let j = &p.junctions()[0];
        assert_eq!(p.vertex(j.vertices[0]), &[0.0, 1.0, -1.0]);
    }

    #[test]
    fn names_round_trip() {
        for g in BuiltinGeometry::ALL {
            assert_eq!(g.name().parse::<BuiltinGeometry>().unwrap(), g);
            builtin_geometry(g, 2).unwrap();
        }
        assert!(matches!(
            "moebius".parse::<BuiltinGeometry>(),
            Err(Error::UnknownGeometry(_))
        ));
    }
}
