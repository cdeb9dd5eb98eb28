//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::Command;

use multijunction::fem::{
    assemble_load, assemble_mass, assemble_stiffness, solve, InitialGuess, SolveOptions,
};
use multijunction::kernel::{kernel_decomposition, poincare_constant};
use multijunction::linalg::{matvec, random_vector, EigenOptions};
use multijunction::mesh::{
    builtin_geometry, refine_times, BuiltinGeometry, ComplexParts, MultijunctionComplex,
    PatchParts, TangentFrame,
};
use multijunction::oracles::{
    piston_profile, tilted_conductivity, tilted_disks_tensor, y_graph_solution, PistonSide,
};
use multijunction::scenario::{default_source, run_solve, LevelResult, ScenarioConfig};
use multijunction::tensor::{
    relax_field, relax_projected, relax_schur, tangential_projector, ConductivitySpec,
    RelaxationMode,
};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn solve_levels(g: BuiltinGeometry, levels: Vec<usize>) -> Vec<LevelResult> {
    run_solve(&ScenarioConfig {
        levels,
        ..ScenarioConfig::builtin(g)
    })
    .unwrap()
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn y_graph_exactness() -> Check {
    const NODAL_TOL: f64 = 1e-9;
    const MIN_ORDER: f64 = 1.9;
    let a = [1.0, 2.0, -3.0];
    let results = solve_levels(BuiltinGeometry::YGraph, (1..=5).collect());
    let mut nodal: f64 = 0.0;
    for r in &results {
        let dofs = r.kernel.dofs();
        for d in 0..dofs.num_dofs() {
            let x = r.complex.vertex(dofs.vertex(d));
            let s = x.iter().map(|t| t * t).sum::<f64>().sqrt();
            let exact = y_graph_solution(a, dofs.patches(d)[0], s).unwrap();
            nodal = nodal.max((r.solution.u[d] - exact).abs());
        }
    }
    let errors: Vec<f64> = results[2..].iter().map(|r| r.l2_error.unwrap()).collect();
    let order = min(&orders(&errors));
    ensure(
        nodal <= NODAL_TOL && order >= MIN_ORDER,
        format!("max nodal error {nodal:.2e} (<= {NODAL_TOL:e}), L2 order 3->5 {order:.3} (>= {MIN_ORDER})"),
    )
}

fn tensor_oracles() -> Check {
    const TOL: f64 = 1e-12;
    let diag = |d: [f64; 3]| DMatrix::from_diagonal(&DVector::from_row_slice(&d));
    let cases: [(BuiltinGeometry, Vec<DMatrix<f64>>); 3] = [
        (
            BuiltinGeometry::Piston,
            vec![diag([0.0, 1.0, 1.0]), diag([0.0, 1.0, 1.0]), diag([1.0, 0.0, 0.0])],
        ),
        (
            BuiltinGeometry::TwoDisks,
            vec![diag([1.0, 1.0, 0.0]), diag([0.0, 1.0, 1.0])],
        ),
        (
            BuiltinGeometry::TiltedDisks,
            vec![tilted_disks_tensor(0).unwrap(), tilted_disks_tensor(1).unwrap()],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (g, expected) in &cases {
        let c = builtin_geometry(*g, 2).unwrap();
        let spec = ScenarioConfig::builtin(*g).conductivity_spec(3);
        let field = relax_field(&c, &spec, RelaxationMode::Projected).unwrap();
        for (p, tensors) in field.tensors.iter().enumerate() {
            for t in tensors {
                worst = worst.max((t - &expected[p]).amax());
            }
        }
    }
    let c = builtin_geometry(BuiltinGeometry::TiltedDisks, 2).unwrap();
    let spec = ConductivitySpec::constant(tilted_conductivity(), 0.5);
    let schur = relax_field(&c, &spec, RelaxationMode::Schur).unwrap();
    let e2 = diag([0.0, 1.0, 0.0]);
    let schur_err = schur
        .tensors
        .iter()
        .flatten()
        .map(|t| (t - &e2).amax())
        .fold(0.0, f64::max);
    ensure(
        worst <= TOL && schur_err <= TOL && schur.disagreement_flagged(),
        format!(
            "projected max entry error {worst:.2e}, schur vs e2(x)e2 {schur_err:.2e} (<= {TOL:e}), disagreement flagged {}",
            schur.disagreement_flagged()
        ),
    )
}

/// Value of `u` on `patch` at its first junction vertex.
fn junction_value(r: &LevelResult, patch: usize) -> f64 {
    let j = r
        .complex
        .junctions()
        .iter()
        .find(|j| j.patches.contains(&patch))
        .unwrap();
    r.solution.u[r.kernel.dofs().dof(patch, j.vertices[0]).unwrap()]
}

fn piston_discontinuity() -> Check {
    const SEGMENT_TOL: f64 = 1e-6;
    const JUNCTION_REL: f64 = 0.05;
    const MIN_ORDER: f64 = 1.5;
    let results = solve_levels(BuiltinGeometry::Piston, (3..=6).collect());
    let exact = piston_profile(&[4.0, -6.0], 1.0, PistonSide::S1, 0.0).unwrap();
    let finest = results.last().unwrap();
    let segment = finest
        .kernel
        .dofs()
        .patch_dofs(2)
        .map(|d| finest.solution.u[d].abs())
        .fold(0.0, f64::max);
    let rel: Vec<f64> = results
        .iter()
        .map(|r| {
            let e1 = (junction_value(r, 0) - exact).abs();
            let e2 = (junction_value(r, 1) + exact).abs();
            e1.max(e2) / exact
        })
        .collect();
    let at5 = rel[2];
    let tail = &rel[rel.len() - 3..];
    let monotone = tail.windows(2).all(|w| w[1] <= w[0]);
    let s1: Vec<f64> = results.iter().map(|r| r.l2_errors.as_ref().unwrap()[0]).collect();
    let order = min(&orders(&s1));
    ensure(
        segment <= SEGMENT_TOL && at5 <= JUNCTION_REL && monotone && order >= MIN_ORDER,
        format!(
            "max|u| on S3 {segment:.2e} (<= {SEGMENT_TOL:e}), junction rel. error at level 5 {at5:.2e} (<= {JUNCTION_REL}), \
             levels 4-6 [{}] monotone {monotone}, S1 L2 order {order:.3} (>= {MIN_ORDER})",
            tail.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn kernel_dimensions() -> Check {
    const RESIDUAL_TOL: f64 = 1e-10;
    let expected = [
        (BuiltinGeometry::YGraph, 1),
        (BuiltinGeometry::Antenna, 2),
        (BuiltinGeometry::TwoDisksPoint, 2),
        (BuiltinGeometry::Piston, 3),
        (BuiltinGeometry::TwoDisks, 1),
    ];
    let mut found = Vec::new();
    let mut ok = true;
    let mut residual: f64 = 0.0;
    for (g, d) in expected {
        let dims: Vec<usize> = (1..=3)
            .map(|level| {
                let c = builtin_geometry(g, level).unwrap();
                let k = kernel_decomposition(&c);
                let spec = ScenarioConfig::builtin(g).conductivity_spec(c.ambient_dim());
                let field = relax_field(&c, &spec, RelaxationMode::Projected).unwrap();
                let s = assemble_stiffness(&c, k.dofs(), &field).unwrap();
                let scale = s.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for chi in k.indicators() {
                    residual = residual.max(matvec(&s, &chi).norm() / (scale * chi.norm()));
                }
                k.num_components()
            })
            .collect();
        ok &= dims.iter().all(|&x| x == d);
        found.push(format!("{g}={dims:?}"));
    }
    ensure(
        ok && residual <= RESIDUAL_TOL,
        format!("{} on levels 1-3, K chi residual {residual:.2e} (<= {RESIDUAL_TOL:e})", found.join(" ")),
    )
}

fn compatibility_gate() -> Check {
    const TOL: f64 = 1e-12;
    let dir = std::env::temp_dir().join(format!("multijunction-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let scenario = dir.join("y111.json");
    std::fs::write(
        &scenario,
        r#"{"geometry": {"builtin": "y_graph"},
            "source": {"patches": [{"kind": "constant", "value": 1},
                                   {"kind": "constant", "value": 1},
                                   {"kind": "constant", "value": 1}]}}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_multijunction"))
        .args(["solve", "--scenario", scenario.to_str().unwrap()])
        .output()
        .unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap_or_default();
    let per_branch: Vec<f64> = diag["details"]["patch_integrals"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
        .unwrap_or_default();
    let worst = per_branch.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let code = out.status.code();
    ensure(
        code == Some(2) && per_branch.len() == 3 && worst <= TOL,
        format!("exit code {code:?} (2), per-branch defects {per_branch:?} (1 to {TOL:e})"),
    )
}

fn unit_segment() -> MultijunctionComplex {
    MultijunctionComplex::new(ComplexParts {
        ambient_dim: 2,
        vertices: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
        patches: vec![PatchParts {
            dim: 1,
            simplices: vec![vec![0, 1]],
            rim: None,
        }],
        junctions: vec![],
        boundary_vertices: vec![0, 1],
        domain: None,
    })
    .unwrap()
}

fn weak_poincare() -> Check {
    const EIGEN_REL: f64 = 0.01;
    const SAMPLES: u64 = 100;
    let pi2 = std::f64::consts::PI.powi(2);
    let seg = refine_times(&unit_segment(), 4).unwrap();
    let lambda = poincare_constant(&seg, 0, EigenOptions::default()).unwrap().lambda1;
    let rel = (lambda - pi2).abs() / pi2;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for g in BuiltinGeometry::ALL {
        let c = builtin_geometry(g, 3).unwrap();
        let k = kernel_decomposition(&c);
        let field = relax_field(&c, &ConductivitySpec::identity(c.ambient_dim()), RelaxationMode::Projected).unwrap();
        let s = assemble_stiffness(&c, k.dofs(), &field).unwrap();
        let m = assemble_mass(&c, k.dofs()).unwrap();
        let deflation = k.deflation(&m);
        for l in 0..k.num_components() {
            let constant = poincare_constant(&c, l, EigenOptions::default()).unwrap().constant;
            let support = k.component_dofs(l);
            for seed in 0..SAMPLES {
                let raw = random_vector(k.dofs().num_dofs(), seed * 31 + l as u64);
                let mut u = DVector::zeros(raw.len());
                for &d in &support {
                    u[d] = raw[d];
                }
                let w = deflation.complement(&u);
                let lhs = w.dot(&matvec(&m, &w));
                let rhs = constant * u.dot(&matvec(&s, &u));
                worst = worst.max(lhs / rhs);
                if lhs > rhs {
                    violations += 1;
                }
            }
        }
    }
    ensure(
        rel <= EIGEN_REL && violations == 0,
        format!(
            "unit segment level 5 lambda1 {lambda:.6} vs pi^2 rel. error {rel:.2e} (<= {EIGEN_REL}), \
             {violations} violations, worst ratio {worst:.3}"
        ),
    )
}

fn neumann_trace() -> Check {
    const MIN_FACTOR: f64 = 1.5;
    let compat_tol = ScenarioConfig::builtin(BuiltinGeometry::YGraph).compat_tol;
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, levels) in [
        (BuiltinGeometry::YGraph, (1..=5).collect::<Vec<_>>()),
        (BuiltinGeometry::Piston, (3..=6).collect()),
    ] {
        let results = solve_levels(g, levels);
        let maxima: Vec<f64> = results.iter().map(LevelResult::trace_max).collect();
        let tail = &maxima[maxima.len() - 3..];
        let factors: Vec<f64> = tail.windows(2).map(|w| w[0] / w[1]).collect();
        let constant = results.iter().map(|r| r.trace[0].abs()).fold(0.0, f64::max);
        ok &= min(&factors) >= MIN_FACTOR && constant <= compat_tol;
        parts.push(format!("{g}: factors {factors:.2?}, |trace(1)| {constant:.1e}"));
    }
    ensure(
        ok,
        format!("{} (factor >= {MIN_FACTOR}, |trace(1)| <= {compat_tol})", parts.join("; ")),
    )
}

fn mass_norm(m: &CsrMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&matvec(m, v)).sqrt()
}

fn uniqueness_and_linearity() -> Check {
    let tol = SolveOptions::default().tol;
    let bound = 10.0 * tol;
    let mut worst_seed: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for g in BuiltinGeometry::ALL {
        let level = if g == BuiltinGeometry::YGraph { 5 } else { 4 };
        let c = builtin_geometry(g, level).unwrap();
        let k = kernel_decomposition(&c);
        let spec = ScenarioConfig::builtin(g).conductivity_spec(c.ambient_dim());
        let field = relax_field(&c, &spec, RelaxationMode::Projected).unwrap();
        let s = assemble_stiffness(&c, k.dofs(), &field).unwrap();
        let m = assemble_mass(&c, k.dofs()).unwrap();
        let b = assemble_load(&c, k.dofs(), &default_source(g)).unwrap();
        let run = |b: &DVector<f64>, initial: InitialGuess| {
            let opts = SolveOptions {
                initial,
                ..SolveOptions::default()
            };
            solve(&s, b, &k, &m, &opts).unwrap().u
        };
        let base = run(&b, InitialGuess::Zero);
        let norm = mass_norm(&m, &base);
        for seed in 1..=4 {
            let other = run(&b, InitialGuess::Random(seed));
            worst_seed = worst_seed.max(mass_norm(&m, &(other - &base)) / norm);
        }
        for alpha in [-1.0, 2.0] {
            let scaled = run(&(&b * alpha), InitialGuess::Random(11));
            worst_scale = worst_scale.max(mass_norm(&m, &(scaled - &base * alpha)) / (alpha.abs() * norm));
        }
    }
    ensure(
        worst_seed <= bound && worst_scale <= bound,
        format!(
            "relative mass-norm spread over initial guesses {worst_seed:.2e}, scaling defect {worst_scale:.2e} (<= {bound:e})"
        ),
    )
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0f64));
        let qr = raw.qr();
        if qr.r().diagonal().iter().all(|d| d.abs() > 1e-3) {
            return qr.q();
        }
    }
}

fn projector_properties() -> Check {
    const TOL: f64 = 1e-10;
    const FRAMES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut idempotence: f64 = 0.0;
    let mut rotation: f64 = 0.0;
    let mut order: f64 = 0.0;
    let mut built = 0;
    while built < FRAMES {
        let n = rng.random_range(1..=4);
        let k = rng.random_range(1..=n);
        let rank = rng.random_range(1..=n);
        let points: Vec<DVector<f64>> = (0..=k)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let slices: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let Some(f) = TangentFrame::from_points(&slices) else {
            continue;
        };
        built += 1;
        let factor = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0f64));
        let a = &factor * factor.transpose();
        let scale = a.amax().max(1.0);
        let p = tangential_projector(&f);
        idempotence = idempotence.max((&p * &p - &p).amax());

        let q = random_orthogonal(&mut rng, n);
        let rotated: Vec<DVector<f64>> = points.iter().map(|x| &q * x).collect();
        let slices: Vec<&[f64]> = rotated.iter().map(|p| p.as_slice()).collect();
        let g = TangentFrame::from_points(&slices).unwrap();
        let qa = &q * &a * q.transpose();
        let proj = relax_projected(&a, &f).unwrap();
        let schur = relax_schur(&a, &f, None);
        let d1 = relax_projected(&qa, &g).unwrap() - &q * &proj * q.transpose();
        let d2 = relax_schur(&qa, &g, None) - &q * &schur * q.transpose();
        rotation = rotation.max(d1.amax().max(d2.amax()) / scale);

        let xi = &f.tangent * DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let gap = (&proj * &xi).dot(&xi) - (&schur * &xi).dot(&xi);
        order = order.max(-gap / scale);
    }
    ensure(
        idempotence <= TOL && rotation <= TOL && order <= TOL,
        format!(
            "{FRAMES} frames: |P^2 - P| {idempotence:.1e}, rotation defect {rotation:.1e}, schur above projected by {:.1e} (<= {TOL:e})",
            order.max(0.0)
        ),
    )
}

fn energy_monotonicity() -> Check {
    const SLACK: f64 = 1e-10;
    let mut ok = true;
    let mut parts = Vec::new();
    for g in BuiltinGeometry::ALL {
        let results = solve_levels(g, ScenarioConfig::builtin(g).levels);
        let energies: Vec<f64> = results.iter().map(|r| r.solution.report.energy).collect();
        let monotone = energies
            .windows(2)
            .all(|w| w[1] <= w[0] + SLACK * w[0].abs().max(1.0));
        ok &= monotone;
        parts.push(format!("{g} {energies:.6?}"));
    }
    ensure(ok, format!("nonincreasing (slack {SLACK:e}): {}", parts.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("y_graph exactness", y_graph_exactness),
        ("relaxed tensor oracles", tensor_oracles),
        ("piston discontinuity", piston_discontinuity),
        ("kernel dimensions", kernel_dimensions),
        ("compatibility gate", compatibility_gate),
        ("weak poincare", weak_poincare),
        ("neumann trace", neumann_trace),
        ("uniqueness and linearity", uniqueness_and_linearity),
        ("projector and frame properties", projector_properties),
        ("energy monotonicity", energy_monotonicity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
