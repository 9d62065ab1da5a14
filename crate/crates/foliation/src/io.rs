//! Checkpoints and tabular run outputs.
//!
//! Everything on disk is plain text: a solution checkpoint is a directory
//! of per-component CSV files plus a JSON manifest, and every run output
//! is RFC-4180 CSV with a header row. Floating-point values are written
//! with the shortest digit strings that parse back to identical bits, so
//! a write/read/write cycle is byte-stable.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circlefn::CircleFunction;
use crate::continuation::ContinuationRecord;
use crate::error::{Error, Result};
use crate::newton::SolveStats;
use crate::newton3::SolveStats3;
use crate::param::{Parameterization, Parameterization3};
use crate::taylor::TaylorField;
use crate::taylor2::TaylorField2;

pub const KIND_2D: &str = "circle2d";
pub const KIND_3D: &str = "circle3d";
const MANIFEST: &str = "manifest.json";
const FILES_2D: [&str; 5] = ["w1.csv", "w2.csv", "a.csv", "a_inv.csv", "lambda.csv"];
const FILES_3D: [&str; 7] = [
    "w1.csv",
    "w2.csv",
    "w3.csv",
    "a.csv",
    "a_inv.csv",
    "lambda1.csv",
    "lambda2.csv",
];

/// Metadata stored next to the component files of a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    /// [`KIND_2D`] or [`KIND_3D`].
    pub kind: String,
    /// Grid size.
    pub n: usize,
    /// Fiber-expansion degrees: one entry in 2-D, two in 3-D.
    pub degrees: Vec<usize>,
    /// Fiber scale.
    pub b: f64,
    /// Polynomial degree of the interpolating splines.
    pub spline_degree: usize,
    /// Component files inside the checkpoint directory.
    pub files: Vec<String>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(dir.join(name))?))
}

fn read_manifest(dir: &Path, kind: &str) -> Result<CheckpointManifest> {
    let manifest: CheckpointManifest = serde_json::from_reader(open(dir, MANIFEST)?)?;
    if manifest.kind != kind {
        return Err(Error::Checkpoint(format!(
            "expected a {kind} checkpoint, found kind {:?}",
            manifest.kind
        )));
    }
    Ok(manifest)
}

fn check_manifest(
    manifest: &CheckpointManifest,
    n: usize,
    degrees: &[usize],
    b: f64,
    spline_degree: usize,
) -> Result<()> {
    if manifest.n != n
        || manifest.degrees != degrees
        || manifest.b != b
        || manifest.spline_degree != spline_degree
    {
        return Err(Error::Checkpoint(
            "manifest metadata disagrees with the component files".into(),
        ));
    }
    Ok(())
}

/// Writes `w1.csv, w2.csv, a.csv, a_inv.csv, lambda.csv` plus
/// `manifest.json` into `dir`, creating it if missing.
pub fn write_checkpoint(dir: &Path, p: &Parameterization) -> Result<()> {
    fs::create_dir_all(dir)?;
    p.w1.write_csv(create(dir, "w1.csv")?)?;
    p.w2.write_csv(create(dir, "w2.csv")?)?;
    p.a.write_csv(create(dir, "a.csv")?)?;
    p.a_inv.write_csv(create(dir, "a_inv.csv")?)?;
    p.lambda.write_csv(create(dir, "lambda.csv")?)?;
    let manifest = CheckpointManifest {
        kind: KIND_2D.into(),
        n: p.grid().len(),
        degrees: vec![p.degree()],
        b: p.b(),
        spline_degree: p.order().degree(),
        files: FILES_2D.iter().map(|s| s.to_string()).collect(),
    };
    serde_json::to_writer_pretty(create(dir, MANIFEST)?, &manifest)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Parameterization> {
    let manifest = read_manifest(dir, KIND_2D)?;
    let w1 = TaylorField::read_csv(open(dir, "w1.csv")?)?;
    let w2 = TaylorField::read_csv(open(dir, "w2.csv")?)?;
    let a = CircleFunction::read_csv(open(dir, "a.csv")?)?;
    let a_inv = CircleFunction::read_csv(open(dir, "a_inv.csv")?)?;
    let lambda = CircleFunction::read_csv(open(dir, "lambda.csv")?)?;
    let p = Parameterization::new(w1, w2, a, a_inv, lambda)?;
    check_manifest(
        &manifest,
        p.grid().len(),
        &[p.degree()],
        p.b(),
        p.order().degree(),
    )?;
    Ok(p)
}

/// 3-D variant of [`write_checkpoint`]: three embedding components and
/// two fiber multipliers.
pub fn write_checkpoint3(dir: &Path, p: &Parameterization3) -> Result<()> {
    fs::create_dir_all(dir)?;
    p.w1.write_csv(create(dir, "w1.csv")?)?;
    p.w2.write_csv(create(dir, "w2.csv")?)?;
    p.w3.write_csv(create(dir, "w3.csv")?)?;
    p.a.write_csv(create(dir, "a.csv")?)?;
    p.a_inv.write_csv(create(dir, "a_inv.csv")?)?;
    p.lambda1.write_csv(create(dir, "lambda1.csv")?)?;
    p.lambda2.write_csv(create(dir, "lambda2.csv")?)?;
    let (d1, d2) = p.degrees();
    let manifest = CheckpointManifest {
        kind: KIND_3D.into(),
        n: p.grid().len(),
        degrees: vec![d1, d2],
        b: p.b(),
        spline_degree: p.order().degree(),
        files: FILES_3D.iter().map(|s| s.to_string()).collect(),
    };
    serde_json::to_writer_pretty(create(dir, MANIFEST)?, &manifest)?;
    Ok(())
}

pub fn read_checkpoint3(dir: &Path) -> Result<Parameterization3> {
    let manifest = read_manifest(dir, KIND_3D)?;
    let w1 = TaylorField2::read_csv(open(dir, "w1.csv")?)?;
    let w2 = TaylorField2::read_csv(open(dir, "w2.csv")?)?;
    let w3 = TaylorField2::read_csv(open(dir, "w3.csv")?)?;
    let a = CircleFunction::read_csv(open(dir, "a.csv")?)?;
    let a_inv = CircleFunction::read_csv(open(dir, "a_inv.csv")?)?;
    let lambda1 = CircleFunction::read_csv(open(dir, "lambda1.csv")?)?;
    let lambda2 = CircleFunction::read_csv(open(dir, "lambda2.csv")?)?;
    let p = Parameterization3::new(w1, w2, w3, a, a_inv, lambda1, lambda2)?;
    let (d1, d2) = p.degrees();
    check_manifest(
        &manifest,
        p.grid().len(),
        &[d1, d2],
        p.b(),
        p.order().degree(),
    )?;
    Ok(p)
}

const RUN_LOG_HEADER: [&str; 7] = [
    "iteration",
    "residual_x0",
    "residual_x1",
    "residual_x2",
    "correction_w",
    "correction_a",
    "correction_lambda",
];

fn write_run_log_rows<W: Write>(
    w: W,
    steps: Vec<([f64; 3], [f64; 3], f64, f64, f64)>,
    final_residual: f64,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RUN_LOG_HEADER)?;
    for (i, (before, _, cw, ca, cl)) in steps.iter().enumerate() {
        wtr.write_record([
            format!("{i}"),
            format!("{}", before[0]),
            format!("{}", before[1]),
            format!("{}", before[2]),
            format!("{cw}"),
            format!("{ca}"),
            format!("{cl}"),
        ])?;
    }
    // Final row: the residual of the returned solution.
    let i = steps.len();
    match steps.last() {
        Some((_, after, ..)) => wtr.write_record([
            format!("{i}"),
            format!("{}", after[0]),
            format!("{}", after[1]),
            format!("{}", after[2]),
            String::new(),
            String::new(),
            String::new(),
        ])?,
        None => wtr.write_record([
            "0".to_string(),
            format!("{final_residual}"),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?,
    }
    wtr.flush()?;
    Ok(())
}

/// Convergence history of one solve: one row per quasi-Newton step with
/// the `X^{0,δ}, X^{1,δ}, X^{2,δ}` residuals *entering* the step and the
/// correction sizes it produced, plus a final row with the residual of
/// the returned solution (corrections empty).
pub fn write_run_log<W: Write>(w: W, stats: &SolveStats) -> Result<()> {
    let rows = stats
        .steps
        .iter()
        .map(|s| {
            (
                s.residual_before,
                s.residual_after,
                s.correction_w,
                s.correction_a,
                s.correction_lambda,
            )
        })
        .collect();
    write_run_log_rows(w, rows, stats.final_residual)
}

pub fn write_run_log3<W: Write>(w: W, stats: &SolveStats3) -> Result<()> {
    let rows = stats
        .steps
        .iter()
        .map(|s| {
            (
                s.residual_before,
                s.residual_after,
                s.correction_w,
                s.correction_a,
                s.correction_lambda,
            )
        })
        .collect();
    write_run_log_rows(w, rows, stats.final_residual)
}

const RECORD_TAIL: [&str; 11] = [
    "n",
    "l",
    "spline_degree",
    "residual_x0",
    "residual_x1",
    "residual_x2",
    "rotation_number",
    "min_bundle_angle",
    "accepted",
    "step_size",
    "note",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Continuation run log: header `eps`, one `param_<name>` column per
/// family parameter, then the fixed diagnostic columns. Absent
/// diagnostics (rejected steps) are empty fields.
pub fn write_records_csv<W: Write>(w: W, records: &[ContinuationRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let names: Vec<&str> = records
        .first()
        .map(|r| r.params.iter().map(|(n, _)| n.as_str()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = vec!["eps".into()];
    header.extend(names.iter().map(|n| format!("param_{n}")));
    header.extend(RECORD_TAIL.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for r in records {
        if r.params.len() != names.len() || r.params.iter().zip(&names).any(|((n, _), m)| n != m) {
            return Err(Error::invalid(
                "records in one table must share one set of parameter names",
            ));
        }
        let mut row: Vec<String> = vec![format!("{}", r.eps)];
        row.extend(r.params.iter().map(|(_, v)| format!("{v}")));
        row.push(format!("{}", r.n));
        row.push(format!("{}", r.l));
        row.push(format!("{}", r.spline_degree));
        row.push(fmt_opt(r.residual_x0));
        row.push(fmt_opt(r.residual_x1));
        row.push(fmt_opt(r.residual_x2));
        row.push(fmt_opt(r.rotation_number));
        row.push(fmt_opt(r.min_bundle_angle));
        row.push(format!("{}", r.accepted));
        row.push(format!("{}", r.step_size));
        row.push(r.note.clone());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<ContinuationRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("eps") {
        return Err(Error::Checkpoint(format!(
            "unexpected record header: {headers:?}"
        )));
    }
    let mut names: Vec<String> = Vec::new();
    let mut tail_at = 1;
    while let Some(name) = headers.get(tail_at).and_then(|h| h.strip_prefix("param_")) {
        names.push(name.to_string());
        tail_at += 1;
    }
    if headers.iter().skip(tail_at).ne(RECORD_TAIL) {
        return Err(Error::Checkpoint(format!(
            "unexpected record header tail: {headers:?}"
        )));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::Checkpoint(format!("short record row: {rec:?}")))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad numeric field in row {rec:?}")))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = field(i)?;
            if s.is_empty() { Ok(None) } else { Ok(Some(num(i)?)) }
        };
        let t = tail_at;
        records.push(ContinuationRecord {
            eps: num(0)?,
            params: names
                .iter()
                .enumerate()
                .map(|(j, n)| Ok((n.clone(), num(1 + j)?)))
                .collect::<Result<_>>()?,
            n: num(t)? as usize,
            l: num(t + 1)? as usize,
            spline_degree: num(t + 2)? as usize,
            residual_x0: opt(t + 3)?,
            residual_x1: opt(t + 4)?,
            residual_x2: opt(t + 5)?,
            rotation_number: opt(t + 6)?,
            min_bundle_angle: opt(t + 7)?,
            accepted: field(t + 8)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad boolean field in row {rec:?}")))?,
            step_size: num(t + 9)?,
            note: field(t + 10)?.to_string(),
        });
    }
    Ok(records)
}

/// Generic numeric table: `header` then one row of shortest-round-trip
/// floats per entry of `rows`.
pub fn write_table<W: Write, S: AsRef<str>>(w: W, header: &[S], rows: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header.iter().map(|s| s.as_ref()))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::invalid("table row width disagrees with the header"));
        }
        wtr.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// The invariant circle `W(θ,0)` sampled at `samples` equispaced phases:
/// rows `theta,x,y` with `x` kept as a lift (unwrapped).
pub fn write_circle_csv<W: Write>(w: W, p: &Parameterization, samples: usize) -> Result<()> {
    let rows = (0..samples)
        .map(|i| {
            let theta = i as f64 / samples as f64;
            let (x, y) = p.eval(theta, 0.0);
            vec![theta, x, y]
        })
        .collect::<Vec<_>>();
    write_table(w, &["theta", "x", "y"], &rows)
}

/// Globalized isochron polylines as produced by backward iteration: one
/// row per sampled point, `leaf` numbering the θ-labels in input order.
pub fn write_polylines_csv<W: Write>(
    w: W,
    theta_list: &[f64],
    s_samples: &[f64],
    leaves: &[Vec<(f64, f64)>],
) -> Result<()> {
    if leaves.len() != theta_list.len() || leaves.iter().any(|l| l.len() != s_samples.len()) {
        return Err(Error::invalid(
            "polyline table needs one leaf per θ-label and one point per s-sample",
        ));
    }
    let mut rows = Vec::new();
    for (i, (theta0, leaf)) in theta_list.iter().zip(leaves).enumerate() {
        for (s, (x, y)) in s_samples.iter().zip(leaf) {
            rows.push(vec![i as f64, *theta0, *s, *x, *y]);
        }
    }
    write_table(w, &["leaf", "theta0", "s", "x", "y"], &rows)
}

/// Local 3-D isochron surfaces `W(θ₀, s₁, s₂)` as point grids: rows
/// `leaf,theta0,s1,s2,x,y,z` swept in row-major `(s₁, s₂)` order.
pub fn write_surfaces_csv<W: Write>(
    w: W,
    p: &Parameterization3,
    theta_list: &[f64],
    s1_samples: &[f64],
    s2_samples: &[f64],
) -> Result<()> {
    let mut rows = Vec::new();
    for (i, theta0) in theta_list.iter().enumerate() {
        for &s1 in s1_samples {
            for &s2 in s2_samples {
                let (x, y, z) = p.eval(*theta0, s1, s2);
                rows.push(vec![i as f64, *theta0, s1, s2, x, y, z]);
            }
        }
    }
    write_table(
        w,
        &["leaf", "theta0", "s1", "s2", "x", "y", "z"],
        &rows,
    )
}
