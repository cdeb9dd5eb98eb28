use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use multijunction::kernel::PoincareEntry;
use multijunction::scenario::{ComponentRow, ConvergenceTable, LevelResult, TensorRow};
use multijunction::{Error, Result};
use serde::Serialize;

/// Round-trip float formatting: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes CSV rows to `out`.
pub fn write_csv<W: Write>(out: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn coords(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn solution_table(r: &LevelResult) -> (Vec<String>, Vec<Vec<String>>) {
    let c = &r.complex;
    let dofs = r.kernel.dofs();
    let mut header = vec!["dof_id".to_string(), "patch_id".to_string()];
    header.extend(coords("x", c.ambient_dim()));
    header.push("u".into());
    let rows = (0..dofs.num_dofs())
        .map(|d| {
            let mut row = vec![d.to_string(), dofs.patches(d)[0].to_string()];
            row.extend(c.vertex(dofs.vertex(d)).iter().map(|&x| num(x)));
            row.push(num(r.solution.u[d]));
            row
        })
        .collect();
    (header, rows)
}

pub fn gradient_table(r: &LevelResult) -> (Vec<String>, Vec<Vec<String>>) {
    let c = &r.complex;
    let n = c.ambient_dim();
    let mut header = vec!["element_id".to_string(), "patch_id".to_string()];
    header.extend(coords("c", n));
    header.extend(coords("g", n));
    let mut rows = Vec::new();
    for (p, grads) in r.gradient.gradients.iter().enumerate() {
        for (s, g) in grads.iter().enumerate() {
            let mut row = vec![s.to_string(), p.to_string()];
            row.extend(c.simplex_centroid(p, s).into_iter().map(num));
            row.extend(g.iter().map(|&v| num(v)));
            rows.push(row);
        }
    }
    (header, rows)
}

pub fn trace_table(results: &[LevelResult]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["level", "phi_id", "value", "tv_bound"].map(String::from).to_vec();
    let rows = results
        .iter()
        .flat_map(|r| {
            r.trace.iter().enumerate().map(move |(i, v)| {
                vec![r.level.to_string(), i.to_string(), num(*v), num(r.tv_bound)]
            })
        })
        .collect();
    (header, rows)
}

pub fn summary_table(results: &[LevelResult]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = [
        "level",
        "h",
        "dofs",
        "kernel_dim",
        "energy",
        "residual",
        "iterations",
        "kernel_defect",
        "trace_max",
        "tv_bound",
        "l2_error",
        "junction_jump",
    ]
    .map(String::from)
    .to_vec();
    let rows = results
        .iter()
        .map(|r| {
            let rep = r.report();
            vec![
                rep.level.to_string(),
                num(rep.h),
                rep.dofs.to_string(),
                rep.kernel_dim.to_string(),
                num(rep.solve.energy),
                num(rep.solve.residual),
                rep.solve.iterations.to_string(),
                num(rep.solve.kernel_defect),
                num(rep.trace_max),
                num(rep.tv_bound),
                opt(rep.l2_error),
                opt(rep.junction_jump),
            ]
        })
        .collect();
    (header, rows)
}

pub fn convergence_table(t: &ConvergenceTable) -> (Vec<String>, Vec<Vec<String>>) {
    let d = t.rows.iter().map(|r| r.poincare.len()).max().unwrap_or(0);
    let mut header = ["level", "h", "dofs", "kernel_dim", "L2_error", "energy", "trace_max", "junction_jump"]
        .map(String::from)
        .to_vec();
    header.extend((0..d).map(|l| format!("C_{l}")));
    header.push("observed_order".into());
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.level.to_string(),
                num(r.h),
                r.dofs.to_string(),
                r.kernel_dim.to_string(),
                opt(r.l2_error),
                num(r.energy),
                num(r.trace_max),
                opt(r.junction_jump),
            ];
            row.extend((0..d).map(|l| opt(r.poincare.get(l).copied())));
            row.push(opt(r.observed_order));
            row
        })
        .collect();
    (header, rows)
}

pub fn kernel_table(rows: &[ComponentRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["component_id", "level", "patches", "dofs", "measure"]
        .map(String::from)
        .to_vec();
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.component.to_string(),
                r.level.to_string(),
                r.patches
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                r.dofs.to_string(),
                num(r.measure),
            ]
        })
        .collect();
    (header, rows)
}

pub fn poincare_table(rows: &[ComponentRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["component_id", "level", "dofs", "lambda1", "C_l"]
        .map(String::from)
        .to_vec();
    let rows = rows
        .iter()
        .filter_map(|r| {
            r.poincare.map(|PoincareEntry { dofs, lambda1, constant, .. }| {
                vec![
                    r.component.to_string(),
                    r.level.to_string(),
                    dofs.to_string(),
                    num(lambda1),
                    num(constant),
                ]
            })
        })
        .collect();
    (header, rows)
}

pub fn tensor_table(rows: &[TensorRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let n = rows
        .first()
        .map(|r| (r.tensor.len() as f64).sqrt().round() as usize)
        .unwrap_or(0);
    let mut header = ["level", "patch_id", "element_id"].map(String::from).to_vec();
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("a{i}{j}"));
        }
    }
    header.push("disagreement".into());
    header.push("coercivity".into());
    let rows = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.level.to_string(), r.patch.to_string(), r.element.to_string()];
            row.extend(r.tensor.iter().map(|&v| num(v)));
            row.push(num(r.disagreement));
            row.push(num(r.coercivity));
            row
        })
        .collect();
    (header, rows)
}

/// Per-level solution, gradient, report and trace files.
pub fn write_level_files(dir: &Path, r: &LevelResult, json: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let level = r.level;
    write_json(File::create(dir.join(format!("report_L{level}.json")))?, &r.report())?;
    let tables = [
        ("solution", solution_table(r)),
        ("gradient", gradient_table(r)),
        ("trace", trace_table(std::slice::from_ref(r))),
    ];
    for (name, (header, rows)) in tables {
        if json {
            let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|row| {
                    header
                        .iter()
                        .zip(row)
                        .map(|(h, v)| (h.clone(), json_cell(v)))
                        .collect()
                })
                .collect();
            write_json(File::create(dir.join(format!("{name}_L{level}.json")))?, &records)?;
        } else {
            write_csv(
                File::create(dir.join(format!("{name}_L{level}.csv")))?,
                &header,
                &rows,
            )?;
        }
    }
    Ok(())
}

fn json_cell(v: &str) -> serde_json::Value {
    if let Ok(i) = v.parse::<i64>() {
        return i.into();
    }
    match v.parse::<f64>() {
        Ok(x) => serde_json::Number::from_f64(x)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Err(_) if v.is_empty() => serde_json::Value::Null,
        Err(_) => v.into(),
    }
}
