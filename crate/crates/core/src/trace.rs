//! Discrete normal trace of the flux `F = A_mu grad_mu u` on the boundary of
//! the ambient ball, tested against global polynomials.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DiscreteField, ElementGeometry, SourceTerm};
use crate::mesh::{simplex_volume, MultijunctionComplex};
use crate::quadrature;
use crate::tensor::RelaxedTensorField;

pub const MAX_TEST_DEGREE: u32 = 3;

/// Polynomial `sum c * x^alpha` on the ambient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPolynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl TestPolynomial {
    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Result<Self> {
        let p = Self { terms };
        let degree = p.degree();
        if degree > MAX_TEST_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        Ok(p)
    }

    pub fn monomial(alpha: Vec<u32>) -> Result<Self> {
        Self::new(vec![(1.0, alpha)])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            terms: vec![(value, vec![0; n])],
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, a)| a.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, a)| c * x.iter().zip(a).map(|(xi, &e)| xi.powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        for (c, a) in &self.terms {
            for d in 0..n {
                if a[d] == 0 {
                    continue;
                }
                let mut term = c * f64::from(a[d]);
                for (i, (&xi, &e)) in x.iter().zip(a).enumerate() {
                    let e = if i == d { e - 1 } else { e };
                    term *= xi.powi(e as i32);
                }
                g[d] += term;
            }
        }
        g
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self.terms.iter().find(|(_, a)| a.len() != n) {
            Some((_, a)) => Err(Error::DimensionMismatch {
                expected: n,
                found: a.len(),
            }),
            None => Ok(()),
        }
    }
}

/// All monomials of total degree at most 3 in `n` variables, by degree.
pub fn test_battery(n: usize) -> Vec<TestPolynomial> {
    let mut out = Vec::new();
    for degree in 0..=MAX_TEST_DEGREE {
        let mut alphas = Vec::new();
        exponents(n, degree, &mut vec![], &mut alphas);
        out.extend(alphas.into_iter().map(|a| TestPolynomial {
            terms: vec![(1.0, a)],
        }));
    }
    out
}

fn exponents(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == n {
        let mut a = prefix.clone();
        a.push(left);
        out.push(a);
        return;
    }
    for e in (0..=left).rev() {
        prefix.push(e);
        exponents(n, left - e, prefix, out);
        prefix.pop();
    }
}

/// Per-element data reused across test functions.
struct ElementFlux {
    flux: DVector<f64>,
    /// `(physical point, weight * volume, source value)`
    points: Vec<(Vec<f64>, f64, f64)>,
}

/// Evaluates `sum_e int_e F . grad(phi) - int f phi` for many `phi`.
pub struct TraceEvaluator {
    elements: Vec<ElementFlux>,
    ambient_dim: usize,
}

impl TraceEvaluator {
    pub fn new(
        c: &MultijunctionComplex,
        u: &DiscreteField,
        tensors: &RelaxedTensorField,
        q: &SourceTerm,
    ) -> Result<Self> {
        q.validate(c)?;
        let rules: Vec<quadrature::Rule> =
            (0..=c.ambient_dim()).map(quadrature::degree_two).collect();
        let mut elements = Vec::with_capacity(c.num_simplices());
        for (p, patch) in c.patches().iter().enumerate() {
            let grads = u.gradients.get(p).ok_or(Error::DimensionMismatch {
                expected: c.patches().len(),
                found: u.gradients.len(),
            })?;
            if grads.len() != patch.num_simplices() {
                return Err(Error::DimensionMismatch {
                    expected: patch.num_simplices(),
                    found: grads.len(),
                });
            }
            let rule = &rules[patch.dim()];
            for (s, g) in grads.iter().enumerate() {
                let flux = tensors.tensor(p, s)? * g;
                let vol = patch.measure(s);
                let pts = rule.map(&c.simplex_points(p, s));
                let points = pts
                    .into_iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| {
                        let f = q.eval(p, s, &x);
                        (x, w * vol, f)
                    })
                    .collect();
                elements.push(ElementFlux { flux, points });
            }
        }
        Ok(Self {
            elements,
            ambient_dim: c.ambient_dim(),
        })
    }

    pub fn evaluate(&self, phi: &TestPolynomial) -> Result<f64> {
        if phi.degree() > MAX_TEST_DEGREE {
            return Err(Error::UnsupportedDegree(phi.degree()));
        }
        phi.check_dim(self.ambient_dim)?;
        Ok(self
            .elements
            .iter()
            .map(|e| {
                e.points
                    .iter()
                    .map(|(x, w, f)| w * (e.flux.dot(&phi.gradient(x)) - f * phi.value(x)))
                    .sum::<f64>()
            })
            .sum())
    }

    pub fn evaluate_all(&self, battery: &[TestPolynomial]) -> Result<Vec<f64>> {
        battery.par_iter().map(|phi| self.evaluate(phi)).collect()
    }

    /// `int |F| d mu`.
    pub fn flux_l1(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| e.flux.norm() * e.points.iter().map(|(_, w, _)| w).sum::<f64>())
            .sum()
    }
}

/// `<[F, nu], phi>` realized as `<F, grad phi> - <Q, phi>`.
pub fn normal_trace(
    c: &MultijunctionComplex,
    u: &DiscreteField,
    tensors: &RelaxedTensorField,
    q: &SourceTerm,
    phi: &TestPolynomial,
) -> Result<f64> {
    TraceEvaluator::new(c, u, tensors, q)?.evaluate(phi)
}

/// `int |f| d mu`, the total variation of the divergence of any minimizer's flux.
pub fn divergence_tv_bound(q: &SourceTerm, c: &MultijunctionComplex) -> Result<f64> {
    q.validate(c)?;
    let mut total = 0.0;
    for (p, patch) in c.patches().iter().enumerate() {
        let rule = quadrature::high_order(patch.dim());
        for s in 0..patch.num_simplices() {
            let vol = patch.measure(s);
            let pts = rule.map(&c.simplex_points(p, s));
            total += pts
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * vol * q.eval(p, s, x).abs())
                .sum::<f64>();
        }
    }
    Ok(total)
}

/// Boundary flux on the rim of the patches, weighted by the ball normal `nu`
/// and by `alpha = nu . n` times the in-patch conormal `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RimFlux {
    /// `int_rim (F . nu) phi`
    pub normal: f64,
    /// `int_rim alpha (F . n) phi`
    pub conormal: f64,
}

pub fn normal_vs_projected_trace(
    c: &MultijunctionComplex,
    u: &DiscreteField,
    tensors: &RelaxedTensorField,
    phi: &TestPolynomial,
) -> Result<RimFlux> {
    let ball = c
        .domain()
        .ok_or_else(|| Error::RimUnresolved("the complex has no ambient ball".into()))?;
    phi.check_dim(c.ambient_dim())?;
    let mut out = RimFlux {
        normal: 0.0,
        conormal: 0.0,
    };
    let mut found = false;
    for (p, patch) in c.patches().iter().enumerate() {
        for (facet, owner) in patch.boundary_facets_with_owner() {
            if !facet.iter().all(|&v| c.is_boundary(v)) {
                continue;
            }
            found = true;
            let flux = tensors.tensor(p, owner)? * &u.gradients[p][owner];
            let geo = ElementGeometry::new(c, p, owner)?;
            let simplex = patch.simplex(owner);
            let opposite = simplex
                .iter()
                .position(|v| !facet.contains(v))
                .expect("a facet misses one vertex of its simplex");
            let conormal = -geo.gradients[opposite].normalize();
            let pts: Vec<&[f64]> = facet.iter().map(|&v| c.vertex(v)).collect();
            let vol = simplex_volume(&pts).unwrap_or(0.0);
            let vol = if pts.len() == 1 { 1.0 } else { vol };
            let rule = quadrature::degree_two(pts.len() - 1);
            for (x, w) in rule.map(&pts).iter().zip(&rule.weights) {
                let nu = DVector::from_vec(ball.outer_normal(x));
                let alpha = nu.dot(&conormal);
                let phi_x = phi.value(x);
                out.normal += w * vol * flux.dot(&nu) * phi_x;
                out.conormal += w * vol * alpha * flux.dot(&conormal) * phi_x;
            }
        }
    }
    if !found {
        return Err(Error::RimUnresolved(
            "no patch facet lies on the boundary".into(),
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub level: usize,
    pub phi_id: usize,
    pub value: f64,
    pub tv_bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub rows: Vec<TraceRow>,
}

impl TraceReport {
    pub fn max_abs(&self, level: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.level == level)
            .fold(0.0, |m, r| m.max(r.value.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{tangential_gradient, PatchSource};
    use crate::kernel::kernel_decomposition;
    use crate::mesh::{builtin_geometry, BuiltinGeometry};
    use crate::scenario::{run_solve, ScenarioConfig};
    use crate::tensor::{relax_field, ConductivitySpec, RelaxationMode};

    fn solved(g: BuiltinGeometry, levels: Vec<usize>) -> Vec<crate::scenario::LevelResult> {
        run_solve(&ScenarioConfig {
            levels,
            ..ScenarioConfig::builtin(g)
        })
        .unwrap()
    }

    #[test]
    fn battery_sizes() {
        assert_eq!(test_battery(2).len(), 10);
        assert_eq!(test_battery(3).len(), 20);
        assert_eq!(test_battery(3)[0], TestPolynomial::constant(3, 1.0));
        assert!(matches!(
            TestPolynomial::monomial(vec![4, 0]),
            Err(Error::UnsupportedDegree(4))
        ));
    }

    #[test]
    fn polynomial_gradient() {
        let p = TestPolynomial::new(vec![(2.0, vec![2, 1, 0]), (-1.0, vec![0, 0, 3])]).unwrap();
        let x = [0.5, -2.0, 1.5];
        assert!((p.value(&x) - (2.0 * 0.25 * -2.0 - 3.375)).abs() < 1e-15);
        let g = p.gradient(&x);
        assert!((g[0] - 2.0 * 2.0 * 0.5 * -2.0).abs() < 1e-15);
        assert!((g[1] - 2.0 * 0.25).abs() < 1e-15);
        assert!((g[2] + 3.0 * 2.25).abs() < 1e-15);
    }

    #[test]
    fn y_graph_trace_vanishes_linearly() {
        let results = solved(BuiltinGeometry::YGraph, vec![3, 4, 5]);
        let x1 = TestPolynomial::monomial(vec![1, 0]).unwrap();
        let mut previous = f64::INFINITY;
        for r in &results {
            assert!(r.trace[0].abs() < 1e-12);
            let v = normal_trace(&r.complex, &r.gradient, &r.field, &r.source, &x1)
                .unwrap()
                .abs();
            assert!(v < previous / 1.5 || v < 1e-12, "{v} vs {previous}");
            previous = v;
        }
    }

    #[test]
    fn trace_is_linear_and_bounded() {
        let r = &solved(BuiltinGeometry::Piston, vec![3])[0];
        let ev = TraceEvaluator::new(&r.complex, &r.gradient, &r.field, &r.source).unwrap();
        let battery = test_battery(3);
        let (p1, p2) = (&battery[5], &battery[17]);
        let sum = ev.evaluate(&p1.sum(p2)).unwrap();
        let parts = ev.evaluate(p1).unwrap() + ev.evaluate(p2).unwrap();
        assert!((sum - parts).abs() < 1e-12);
        let bound = r.tv_bound + ev.flux_l1();
        for phi in &battery {
            // sup of |phi| and |grad phi| over the vertices of the mesh
            let sup = (0..r.complex.num_vertices())
                .map(|v| {
                    let x = r.complex.vertex(v);
                    phi.value(x).abs().max(phi.gradient(x).norm())
                })
                .fold(0.0, f64::max);
            assert!(ev.evaluate(phi).unwrap().abs() <= bound * sup);
        }
    }

    #[test]
    fn detects_a_non_minimizer() {
        // u = s on the first leg, zero elsewhere, no source: flux 1 through the tip
        let c = builtin_geometry(BuiltinGeometry::YGraph, 3).unwrap();
        let k = kernel_decomposition(&c);
        let u = nalgebra::DVector::from_fn(k.dofs().num_dofs(), |d, _| {
            let d_patches = k.dofs().patches(d);
            if d_patches == [0] {
                let x = c.vertex(k.dofs().vertex(d));
                (x[0] * x[0] + x[1] * x[1]).sqrt()
            } else {
                0.0
            }
        });
        let field = tangential_gradient(&c, k.dofs(), &u).unwrap();
        let t = relax_field(&c, &ConductivitySpec::identity(2), RelaxationMode::Projected).unwrap();
        // the first leg points along x2
        let phi = TestPolynomial::monomial(vec![0, 1]).unwrap();
        let v = normal_trace(&c, &field, &t, &SourceTerm::zero(3), &phi).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn tv_bounds() {
        let c = builtin_geometry(BuiltinGeometry::YGraph, 2).unwrap();
        let q = SourceTerm::constant(&[1.0, 2.0, -3.0]);
        assert!((divergence_tv_bound(&q, &c).unwrap() - 6.0).abs() < 1e-14);
        assert_eq!(divergence_tv_bound(&SourceTerm::zero(3), &c).unwrap(), 0.0);
        // 2 * 2 pi * int_0^1 r |4 - 6r| dr, the integral split at r = 2/3 into 8/27 + 8/27
        let exact = 2.0 * 2.0 * std::f64::consts::PI * 16.0 / 27.0;
        let c = builtin_geometry(BuiltinGeometry::Piston, 6).unwrap();
        let q = SourceTerm::new(vec![
            PatchSource::Radial {
                center: vec![-1.0, 0.0, 0.0],
                coefficients: vec![4.0, -6.0],
            },
            PatchSource::Radial {
                center: vec![1.0, 0.0, 0.0],
                coefficients: vec![-4.0, 6.0],
            },
            PatchSource::Zero,
        ]);
        let tv = divergence_tv_bound(&q, &c).unwrap();
        assert!((tv - exact).abs() < 1e-3 * exact, "{tv} vs {exact}");
    }

    #[test]
    fn rim_fluxes_vanish_under_refinement() {
        for g in [BuiltinGeometry::TiltedDisks, BuiltinGeometry::Piston] {
            let results = solved(g, vec![3, 4, 5]);
            let phi = TestPolynomial::new(vec![(1.0, vec![0, 2, 0]), (1.0, vec![1, 0, 0])]).unwrap();
            let one = TestPolynomial::constant(3, 1.0);
            let mut previous: Option<RimFlux> = None;
            for r in &results {
                let f = normal_vs_projected_trace(&r.complex, &r.gradient, &r.field, &phi).unwrap();
                let f1 = normal_vs_projected_trace(&r.complex, &r.gradient, &r.field, &one).unwrap();
                assert!((f.normal - f.conormal).abs() <= 1e-8 * f.normal.abs());
                assert!(f1.normal.abs() < 1e-9 && f1.conormal.abs() < 1e-9);
                if let Some(p) = previous {
                    assert!(f.normal.abs() < p.normal.abs() / 1.5, "{g}: {f:?} after {p:?}");
                }
                previous = Some(f);
            }
        }
    }

    #[test]
    fn rim_requires_a_ball() {
        let r = &solved(BuiltinGeometry::YGraph, vec![2])[0];
        let mut parts = r.complex.to_parts();
        parts.domain = None;
        let c = MultijunctionComplex::new(parts).unwrap();
        let one = TestPolynomial::constant(2, 1.0);
        assert!(matches!(
            normal_vs_projected_trace(&c, &r.gradient, &r.field, &one),
            Err(Error::RimUnresolved(_))
        ));
    }
}
