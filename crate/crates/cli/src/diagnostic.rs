use multijunction::Error;
use serde_json::{json, Value};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INCOMPATIBLE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Incompatible { .. } => EXIT_INCOMPATIBLE,
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_CONFIG,
    }
}

/// Machine-readable description of a failure: the failed check and the
/// offending component, patch or element where there is one.
pub fn diagnostic(e: &Error) -> Value {
    let (check, details) = match e {
        Error::Malformed(_) => ("mesh", json!({})),
        Error::PatchDimension { patch, dim, ambient } => (
            "patch_dimension",
            json!({ "patch": patch, "dim": dim, "ambient_dim": ambient }),
        ),
        Error::DegenerateSimplex { patch, simplex } => (
            "degenerate_simplex",
            json!({ "patch": patch, "element": simplex }),
        ),
        Error::UndeclaredSharing { vertex, patches } => (
            "undeclared_sharing",
            json!({ "vertex": vertex, "patches": patches }),
        ),
        Error::InvalidJunction { junction, .. } => {
            ("junction", json!({ "junction": junction }))
        }
        Error::OpenBoundary { patch, vertex } => (
            "open_boundary",
            json!({ "patch": patch, "vertex": vertex }),
        ),
        Error::UnknownGeometry(name) => ("geometry", json!({ "geometry": name })),
        Error::Asymmetric { asymmetry } => ("symmetry", json!({ "asymmetry": asymmetry })),
        Error::InvalidConductivity(_) => ("conductivity", json!({})),
        Error::Coercivity {
            patch,
            element,
            found,
            lambda,
        } => (
            "coercivity",
            json!({ "patch": patch, "element": element, "found": found, "lambda": lambda }),
        ),
        Error::MissingTensor { patch, element } => (
            "tensor",
            json!({ "patch": patch, "element": element }),
        ),
        Error::InvalidSource(_) => ("source", json!({})),
        Error::Incompatible {
            components,
            defects,
            patch_integrals,
        } => (
            "compatibility",
            json!({
                "components": components,
                "defects": defects,
                "patch_integrals": patch_integrals,
            }),
        ),
        Error::NotConverged {
            solver,
            iterations,
            residual,
        } => (
            "convergence",
            json!({ "solver": solver, "iterations": iterations, "residual": residual }),
        ),
        Error::DimensionMismatch { expected, found } => (
            "dimension",
            json!({ "expected": expected, "found": found }),
        ),
        Error::UnknownComponent(c) => ("component", json!({ "component": c })),
        Error::UnsupportedDegree(d) => ("test_degree", json!({ "degree": d })),
        Error::RimUnresolved(_) => ("rim", json!({})),
        Error::Oracle(_) => ("oracle", json!({})),
        Error::Config(_) => ("config", json!({})),
        Error::Io(_) => ("io", json!({})),
        Error::Json(_) => ("json", json!({})),
    };
    json!({
        "error": check,
        "message": e.to_string(),
        "exit_code": exit_code(e),
        "details": details,
    })
}
