//! Scenario runner: geometry, conductivity and source at several refinement
//! levels, with solves, traces, oracle errors, kernel and Poincare tables.

use std::path::PathBuf;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_mass, assemble_stiffness, solve, source_integrals,
    tangential_gradient, DiscreteField, InitialGuess, PatchSource, Solution, SolveOptions,
    SolveReport, SourceTerm, DEFAULT_COMPAT_TOL,
};
use crate::kernel::{kernel_decomposition, poincare_constant, KernelDecomposition, PoincareEntry};
use crate::linalg::EigenOptions;
use crate::mesh::{
    builtin_geometry, refine, BuiltinGeometry, Coupling, MultijunctionComplex,
};
use crate::oracles::{piston_oracle, tilted_conductivity, y_graph_profile, OracleProfile};
use crate::quadrature;
use crate::tensor::{relax_field, ConductivitySpec, RelaxationMode, RelaxedTensorField};
use crate::trace::{divergence_tv_bound, test_battery, TraceEvaluator};

/// Coefficients of the default radial source `q(r) = 4 - 6r`.
pub const PISTON_SOURCE: [f64; 2] = [4.0, -6.0];
/// Default tripod data.
pub const Y_GRAPH_SOURCE: [f64; 3] = [1.0, 2.0, -3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Builtin(BuiltinGeometry),
    /// Path to a JSON mesh document.
    Mesh(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    YGraph { a: [f64; 3] },
    Piston { q: Vec<f64> },
}

impl OracleSpec {
    pub fn profile(&self) -> Result<OracleProfile> {
        match self {
            OracleSpec::YGraph { a } => y_graph_profile(*a),
            OracleSpec::Piston { q } => piston_oracle(q),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_compat_tol() -> f64 {
    DEFAULT_COMPAT_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometrySpec,
    /// Identity with `lambda = 1` when absent, or the tilted tensor on `tilted_disks`.
    #[serde(default)]
    pub conductivity: Option<ConductivitySpec>,
    /// Built-in default source when absent.
    #[serde(default)]
    pub source: Option<SourceTerm>,
    #[serde(default)]
    pub mode: RelaxationMode,
    /// Overrides the coupling of every junction.
    #[serde(default)]
    pub coupling: Option<Coupling>,
    /// Resolutions; level 1 is the base mesh, each further level one refinement.
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_compat_tol")]
    pub compat_tol: f64,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Built-in default oracle when absent and the source is the default one.
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ScenarioConfig {
    /// Default scenario of a built-in geometry.
    pub fn builtin(g: BuiltinGeometry) -> Self {
        let levels = match g {
            BuiltinGeometry::YGraph => (1..=5).collect(),
            _ => (3..=6).collect(),
        };
        Self {
            geometry: GeometrySpec::Builtin(g),
            conductivity: None,
            source: None,
            mode: RelaxationMode::Projected,
            coupling: None,
            levels,
            tol: default_tol(),
            compat_tol: default_compat_tol(),
            max_iterations: None,
            seed: 0,
            oracle: None,
            output: None,
            format: OutputFormat::Csv,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut config: Self = serde_json::from_str(text)?;
        if config.levels.is_empty() {
            if let GeometrySpec::Builtin(g) = config.geometry {
                config.levels = Self::builtin(g).levels;
            } else {
                config.levels = vec![1];
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(Error::Config("levels must be nonempty and at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.compat_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let GeometrySpec::Mesh(path) = &self.geometry {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "mesh file {} does not exist",
                    path.display()
                )));
            }
        }
        if let Some(c) = &self.conductivity {
            if !(c.lambda > 0.0) {
                return Err(Error::Config("conductivity lambda must be positive".into()));
            }
        }
        Ok(())
    }

    fn builtin_geometry(&self) -> Option<BuiltinGeometry> {
        match self.geometry {
            GeometrySpec::Builtin(g) => Some(g),
            GeometrySpec::Mesh(_) => None,
        }
    }

    /// Base mesh (level 1) with the coupling override applied.
    pub fn base_complex(&self) -> Result<MultijunctionComplex> {
        let c = match &self.geometry {
            GeometrySpec::Builtin(g) => builtin_geometry(*g, 1)?,
            GeometrySpec::Mesh(path) => {
                MultijunctionComplex::from_json(&std::fs::read_to_string(path)?)?
            }
        };
        Ok(match self.coupling {
            Some(coupling) => c.with_coupling(coupling),
            None => c,
        })
    }

    pub fn conductivity_spec(&self, ambient_dim: usize) -> ConductivitySpec {
        match (&self.conductivity, self.builtin_geometry()) {
            (Some(c), _) => c.clone(),
            (None, Some(BuiltinGeometry::TiltedDisks)) => {
                ConductivitySpec::constant(tilted_conductivity(), 0.5)
            }
            (None, _) => ConductivitySpec::identity(ambient_dim),
        }
    }

    /// Source on the base mesh.
    pub fn base_source(&self, base: &MultijunctionComplex) -> Result<SourceTerm> {
        match (&self.source, self.builtin_geometry()) {
            (Some(q), _) => Ok(q.clone()),
            (None, Some(g)) => Ok(default_source(g)),
            (None, None) => Ok(SourceTerm::zero(base.patches().len())),
        }
    }

    pub fn oracle_profile(&self) -> Result<Option<OracleProfile>> {
        if let Some(o) = &self.oracle {
            return o.profile().map(Some);
        }
        if self.source.is_some() || self.coupling.is_some() || self.conductivity.is_some() {
            return Ok(None);
        }
        match self.builtin_geometry() {
            Some(BuiltinGeometry::YGraph) => y_graph_profile(Y_GRAPH_SOURCE).map(Some),
            Some(BuiltinGeometry::Piston) => piston_oracle(&PISTON_SOURCE).map(Some),
            _ => Ok(None),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iterations: self.max_iterations,
            compat_tol: self.compat_tol,
            initial: InitialGuess::Random(self.seed),
        }
    }
}

fn radial(center: [f64; 3], coefficients: &[f64], sign: f64) -> PatchSource {
    PatchSource::Radial {
        center: center.to_vec(),
        coefficients: coefficients.iter().map(|c| sign * c).collect(),
    }
}

/// Compatible default source of each built-in geometry.
pub fn default_source(g: BuiltinGeometry) -> SourceTerm {
    let q = &PISTON_SOURCE;
    SourceTerm::new(match g {
        BuiltinGeometry::YGraph => Y_GRAPH_SOURCE
            .iter()
            .map(|&value| PatchSource::Constant { value })
            .collect(),
        BuiltinGeometry::Piston => vec![
            radial([-1.0, 0.0, 0.0], q, 1.0),
            radial([1.0, 0.0, 0.0], q, -1.0),
            PatchSource::Zero,
        ],
        BuiltinGeometry::TwoDisks => vec![radial([0.0; 3], q, 1.0), radial([0.0; 3], q, -1.0)],
        BuiltinGeometry::TiltedDisks => vec![
            radial([0.0, 0.0, -1.0], q, 1.0),
            radial([1.0, 0.0, 0.0], q, -1.0),
        ],
        BuiltinGeometry::Antenna => vec![
            radial([0.0; 3], q, 1.0),
            radial([0.0; 3], &[1.0, -2.0], 1.0),
        ],
        BuiltinGeometry::TwoDisksPoint => vec![
            radial([0.0, 0.0, -1.0], q, 1.0),
            radial([0.0, 1.0, 0.0], q, -1.0),
        ],
    })
}

/// Meshes and sources at the requested levels, refined incrementally.
pub fn level_meshes(config: &ScenarioConfig) -> Result<Vec<(usize, MultijunctionComplex, SourceTerm)>> {
    config.validate()?;
    let mut levels = config.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut current = config.base_complex()?;
    let mut source = config.base_source(&current)?;
    source.validate(&current)?;
    let mut at = 1;
    let mut out = Vec::with_capacity(levels.len());
    for level in levels {
        while at < level {
            source = source.refined(&current);
            current = refine(&current)?;
            at += 1;
        }
        out.push((level, current.clone(), source.clone()));
    }
    Ok(out)
}

/// Everything computed at one level.
#[derive(Clone, Debug)]
pub struct LevelResult {
    pub level: usize,
    pub complex: MultijunctionComplex,
    pub kernel: KernelDecomposition,
    pub field: RelaxedTensorField,
    /// Source with the component means removed, as actually solved.
    pub source: SourceTerm,
    /// `int_{S_p} Q` per patch before the shift.
    pub patch_integrals: Vec<f64>,
    pub solution: Solution,
    pub gradient: DiscreteField,
    /// Normal trace against the test battery.
    pub trace: Vec<f64>,
    pub tv_bound: f64,
    pub flux_l1: f64,
    pub l2_error: Option<f64>,
    pub l2_errors: Option<Vec<f64>>,
    pub junction_jump: Option<f64>,
}

impl LevelResult {
    pub fn trace_max(&self) -> f64 {
        self.trace.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn report(&self) -> LevelReport {
        LevelReport {
            level: self.level,
            h: self.complex.mesh_size(),
            dofs: self.kernel.dofs().num_dofs(),
            kernel_dim: self.kernel.num_components(),
            solve: self.solution.report.clone(),
            patch_integrals: self.patch_integrals.clone(),
            trace_max: self.trace_max(),
            trace_constant: self.trace.first().copied().unwrap_or(0.0),
            tv_bound: self.tv_bound,
            flux_l1: self.flux_l1,
            l2_error: self.l2_error,
            l2_errors: self.l2_errors.clone(),
            junction_jump: self.junction_jump,
            tensor_disagreement: self.field.max_disagreement(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub kernel_dim: usize,
    #[serde(flatten)]
    pub solve: SolveReport,
    pub patch_integrals: Vec<f64>,
    pub trace_max: f64,
    /// Trace against the constant test function.
    pub trace_constant: f64,
    pub tv_bound: f64,
    pub flux_l1: f64,
    pub l2_error: Option<f64>,
    pub l2_errors: Option<Vec<f64>>,
    pub junction_jump: Option<f64>,
    pub tensor_disagreement: f64,
}

/// Relaxes, assembles, solves and post-processes one level.
pub fn solve_level(
    config: &ScenarioConfig,
    level: usize,
    c: MultijunctionComplex,
    q: &SourceTerm,
    oracle: Option<&OracleProfile>,
) -> Result<LevelResult> {
    let kernel = kernel_decomposition(&c);
    let field = relax_field(&c, &config.conductivity_spec(c.ambient_dim()), config.mode)?;
    let k = assemble_stiffness(&c, kernel.dofs(), &field)?;
    let m = assemble_mass(&c, kernel.dofs())?;
    let b = assemble_load(&c, kernel.dofs(), q)?;
    let patch_integrals = source_integrals(&c, q)?;
    let solution = match solve(&k, &b, &kernel, &m, &config.solve_options()) {
        Err(Error::Incompatible {
            components,
            defects,
            ..
        }) => {
            return Err(Error::Incompatible {
                components,
                defects,
                patch_integrals,
            })
        }
        other => other?,
    };
    let shifts = &solution.report.compatibility.shifts;
    let offsets: Vec<f64> = (0..c.patches().len())
        .map(|p| q.offsets.get(p).copied().unwrap_or(0.0) + shifts[kernel.component_of_patch(p)])
        .collect();
    let source = q.with_offsets(offsets);
    let gradient = tangential_gradient(&c, kernel.dofs(), &solution.u)?;
    let evaluator = TraceEvaluator::new(&c, &gradient, &field, &source)?;
    let trace = evaluator.evaluate_all(&test_battery(c.ambient_dim()))?;
    let tv_bound = divergence_tv_bound(&source, &c)?;
    let (l2_error, l2_errors) = match oracle {
        Some(o) => {
            let per = l2_errors(&c, &kernel, &solution.u, o)?;
            (Some(per.iter().map(|e| e * e).sum::<f64>().sqrt()), Some(per))
        }
        None => (None, None),
    };
    let junction_jump = junction_jump(&c, &kernel, &solution.u);
    Ok(LevelResult {
        level,
        flux_l1: evaluator.flux_l1(),
        complex: c,
        kernel,
        field,
        source,
        patch_integrals,
        solution,
        gradient,
        trace,
        tv_bound,
        l2_error,
        l2_errors,
        junction_jump,
    })
}

/// `|u_h - u|_{L^2(S_p)}` per patch, by degree-5 quadrature on segments and triangles.
pub fn l2_errors(
    c: &MultijunctionComplex,
    kernel: &KernelDecomposition,
    u: &DVector<f64>,
    oracle: &OracleProfile,
) -> Result<Vec<f64>> {
    if oracle.patches.len() != c.patches().len() {
        return Err(Error::Oracle(format!(
            "oracle has {} patches, mesh has {}",
            oracle.patches.len(),
            c.patches().len()
        )));
    }
    Ok(c.patches()
        .iter()
        .enumerate()
        .map(|(p, patch)| {
            let rule = quadrature::high_order(patch.dim());
            (0..patch.num_simplices())
                .into_par_iter()
                .map(|s| {
                    let vals: Vec<f64> = kernel
                        .dofs()
                        .element_dofs(c, p, s)
                        .iter()
                        .map(|&d| u[d])
                        .collect();
                    let pts = rule.map(&c.simplex_points(p, s));
                    let vol = patch.measure(s);
                    rule.points
                        .iter()
                        .zip(&pts)
                        .zip(&rule.weights)
                        .map(|((lam, x), w)| {
                            let uh: f64 = lam.iter().zip(&vals).map(|(l, v)| l * v).sum();
                            let e = uh - oracle.value(p, x);
                            w * vol * e * e
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Largest spread of the values carried by the DOFs of a junction vertex.
pub fn junction_jump(
    c: &MultijunctionComplex,
    kernel: &KernelDecomposition,
    u: &DVector<f64>,
) -> Option<f64> {
    let mut jump: Option<f64> = None;
    for j in c.junctions() {
        for &v in &j.vertices {
            let values: Vec<f64> = j
                .patches
                .iter()
                .filter_map(|&p| kernel.dofs().dof(p, v))
                .map(|d| u[d])
                .collect();
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            if max >= min {
                jump = Some(jump.unwrap_or(0.0).max(max - min));
            }
        }
    }
    jump
}

/// Solves at every configured level.
pub fn run_solve(config: &ScenarioConfig) -> Result<Vec<LevelResult>> {
    let oracle = config.oracle_profile()?;
    level_meshes(config)?
        .into_iter()
        .map(|(level, c, q)| solve_level(config, level, c, &q, oracle.as_ref()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub kernel_dim: usize,
    pub l2_error: Option<f64>,
    pub energy: f64,
    pub trace_max: f64,
    pub junction_jump: Option<f64>,
    /// Poincare constant per component.
    pub poincare: Vec<f64>,
    /// `log2` of the error ratio to the previous level.
    pub observed_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub geometry: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn last_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.observed_order)
    }
}

fn geometry_label(config: &ScenarioConfig) -> String {
    match &config.geometry {
        GeometrySpec::Builtin(g) => g.name().to_string(),
        GeometrySpec::Mesh(p) => p.display().to_string(),
    }
}

/// Convergence study across the configured levels.
pub fn run_convergence(config: &ScenarioConfig) -> Result<ConvergenceTable> {
    let results = run_solve(config)?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for r in &results {
        let poincare = (0..r.kernel.num_components())
            .map(|l| poincare_constant(&r.complex, l, EigenOptions::default()).map(|e| e.constant))
            .collect::<Result<Vec<_>>>()?;
        let observed_order = match (rows.last().and_then(|p| p.l2_error), r.l2_error) {
            (Some(prev), Some(cur)) if prev > 0.0 && cur > 0.0 => Some((prev / cur).log2()),
            _ => None,
        };
        rows.push(ConvergenceRow {
            level: r.level,
            h: r.complex.mesh_size(),
            dofs: r.kernel.dofs().num_dofs(),
            kernel_dim: r.kernel.num_components(),
            l2_error: r.l2_error,
            energy: r.solution.report.energy,
            trace_max: r.trace_max(),
            junction_jump: r.junction_jump,
            poincare,
            observed_order,
        });
    }
    Ok(ConvergenceTable {
        geometry: geometry_label(config),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub component: usize,
    pub level: usize,
    pub patches: Vec<usize>,
    pub dofs: usize,
    pub measure: f64,
    pub poincare: Option<PoincareEntry>,
}

/// Components, their measures and optionally Poincare constants per level.
pub fn run_kernel(config: &ScenarioConfig, with_poincare: bool) -> Result<Vec<ComponentRow>> {
    let mut rows = Vec::new();
    for (level, c, _) in level_meshes(config)? {
        let kernel = kernel_decomposition(&c);
        for l in 0..kernel.num_components() {
            let poincare = if with_poincare {
                Some(poincare_constant(&c, l, EigenOptions::default())?)
            } else {
                None
            };
            rows.push(ComponentRow {
                component: l,
                level,
                patches: kernel.components()[l].clone(),
                dofs: kernel.component_dofs(l).len(),
                measure: kernel.measure(l),
                poincare,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRow {
    pub level: usize,
    pub patch: usize,
    pub element: usize,
    /// Row-major entries of the relaxed tensor.
    pub tensor: Vec<f64>,
    pub disagreement: f64,
    pub coercivity: f64,
}

/// Per-element relaxed tensors with the projected/Schur disagreement.
pub fn run_relax(config: &ScenarioConfig) -> Result<Vec<TensorRow>> {
    let mut rows = Vec::new();
    for (level, c, _) in level_meshes(config)? {
        let field = relax_field(&c, &config.conductivity_spec(c.ambient_dim()), config.mode)?;
        for (p, tensors) in field.tensors.iter().enumerate() {
            for (s, a) in tensors.iter().enumerate() {
                rows.push(TensorRow {
                    level,
                    patch: p,
                    element: s,
                    tensor: a.transpose().iter().copied().collect(),
                    disagreement: field.disagreement[p][s],
                    coercivity: field.coercivity[p][s],
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sources_are_compatible_in_the_limit() {
        for g in BuiltinGeometry::ALL {
            let config = ScenarioConfig::builtin(g);
            let results = run_solve(&ScenarioConfig {
                levels: vec![3],
                ..config
            })
            .unwrap();
            let r = &results[0];
            assert!(r.solution.report.compatibility.is_compatible(), "{g}");
            assert!(r.trace[0].abs() < 1e-12, "{g}: {}", r.trace[0]);
        }
    }

    #[test]
    fn y_graph_nodal_values_are_exact() {
        let results = run_solve(&ScenarioConfig {
            levels: vec![2, 4],
            ..ScenarioConfig::builtin(BuiltinGeometry::YGraph)
        })
        .unwrap();
        for r in &results {
            for d in 0..r.kernel.dofs().num_dofs() {
                let v = r.kernel.dofs().vertex(d);
                let p = r.kernel.dofs().patches(d)[0];
                let x = r.complex.vertex(v);
                let s = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                let exact = crate::oracles::y_graph_solution(Y_GRAPH_SOURCE, p, s).unwrap();
                assert!((r.solution.u[d] - exact).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn config_parsing_and_validation() {
        let c = ScenarioConfig::from_json(r#"{"geometry":{"builtin":"piston"}}"#).unwrap();
        assert_eq!(c.levels, vec![3, 4, 5, 6]);
        assert!(ScenarioConfig::from_json(r#"{"geometry":{"builtin":"piston"},"levels":[0]}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"geometry":{"builtin":"piston"},"tol":-1}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"geometry":{"mesh":"/nonexistent.json"}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"geometry":{"builtin":"cube"}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"geometry":{"builtin":"piston"},"bogus":1}"#).is_err());
    }

    #[test]
    fn incompatible_tripod_is_refused() {
        let config = ScenarioConfig {
            source: Some(SourceTerm::constant(&[1.0, 1.0, 1.0])),
            levels: vec![1],
            ..ScenarioConfig::builtin(BuiltinGeometry::YGraph)
        };
        match run_solve(&config) {
            Err(Error::Incompatible {
                components,
                defects,
                patch_integrals,
            }) => {
                assert_eq!(components, vec![0]);
                assert!((defects[0] - 3.0).abs() < 1e-12);
                assert_eq!(patch_integrals.len(), 3);
                for v in patch_integrals {
                    assert!((v - 1.0).abs() < 1e-12);
                }
            }
            other => panic!("{other:?}"),
        }
    }
}
