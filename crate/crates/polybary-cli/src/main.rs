//! Command-line front end: weight solving, verification reports, Lipschitz
//! estimates, matrix-field factorization, and stencil emission.
//!
//! Exit codes: 0 all checks pass, 1 a check or per-point solve failed,
//! 2 unreadable or malformed input. Reports are written atomically
//! (temp file + rename) and are byte-identical for a fixed seed and inputs,
//! apart from the single `generated_unix_ms` header field.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::{json, Value};

use polybary::calculus::{estimate_sqrt_lipschitz, FieldSample};
use polybary::geometry::PolytopeDoc;
use polybary::matrix::{build_matrix_polytope, dd_trace1_polytope, MatrixPolytopeModel};
use polybary::solver::{solve_weights, SolverOptions};
use polybary::stencil::stencil_at;
use polybary::verify::verify_polytope;
use polybary::{factorize_field, Polytope};

#[derive(Parser)]
#[command(name = "polybary", version, about = "Smooth barycentric weights on polytopes")]
struct Cli {
    /// Seed for randomized suites.
    #[arg(long, global = true, default_value_t = 12345)]
    seed: u64,
    /// Output path for the JSON artifact (alias of subcommand-specific flags).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the weights at points listed in a CSV (one ambient point per row).
    Weights {
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the full identity/bound suite on a polytope.
    Verify {
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Lipschitz estimates of sqrt(p_k) along a sampled field
    /// (CSV columns: grid point, then ambient value).
    Lipschitz {
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long)]
        field: PathBuf,
    },
    /// Factorize a matrix field into fixed-direction rank-one sums
    /// (CSV columns: grid point, then upper-triangular matrix entries).
    Factorize {
        /// `dd2`, `dd3`, or `file:model.json`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        field: PathBuf,
    },
    /// Emit the monotone finite-difference stencil at one matrix value.
    Stencil {
        #[arg(long)]
        model: String,
        /// JSON file holding the matrix as nested rows.
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        h: f64,
    },
}

/// 2 = input/schema problem, 1 = checks failed.
enum Failure {
    Schema(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Schema(_) => 2,
            Failure::Check(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Schema(m) | Failure::Check(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match run(&cli) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(f) => f,
    };
    eprintln!("error: {}", result.message());
    ExitCode::from(result.code())
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.cmd {
        Cmd::Weights { polytope, points, tol } => cmd_weights(cli, polytope, points, *tol),
        Cmd::Verify { polytope, samples, report } => {
            cmd_verify(cli, polytope, *samples, report.as_ref().or(cli.out.as_ref()))
        }
        Cmd::Lipschitz { polytope, field } => cmd_lipschitz(cli, polytope, field),
        Cmd::Factorize { model, field } => cmd_factorize(cli, model, field),
        Cmd::Stencil { model, point, h } => cmd_stencil(cli, model, point, *h),
    }
}

fn schema(context: &str, detail: impl std::fmt::Display) -> Failure {
    Failure::Schema(format!("{context}: {detail}"))
}

fn read_polytope(path: &Path) -> std::result::Result<Polytope, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| schema(&format!("reading {}", path.display()), e))?;
    let doc: PolytopeDoc = serde_json::from_str(&text)
        .map_err(|e| schema(&format!("parsing {}", path.display()), e))?;
    doc.build()
        .map_err(|e| schema(&format!("building polytope from {}", path.display()), e))
}

fn read_csv_rows(path: &Path) -> std::result::Result<Vec<Vec<f64>>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(&format!("reading {}", path.display()), e))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(&format!("row {} of {}", i + 1, path.display()), e))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|e| {
            schema(&format!("row {} of {}", i + 1, path.display()), format!("bad number: {e}"))
        })?);
    }
    if rows.is_empty() {
        return Err(schema(&path.display().to_string(), "no data rows"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(schema(&path.display().to_string(), "ragged rows"));
    }
    Ok(rows)
}

/// Vertex matrices as nested rows, optional Frobenius halfspaces.
#[derive(Deserialize)]
struct ModelDoc {
    vertices: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    facets: Option<Vec<MatrixFacetDoc>>,
}

#[derive(Deserialize)]
struct MatrixFacetDoc {
    normal: Vec<Vec<f64>>,
    offset: f64,
}

fn nested_to_matrix(rows: &[Vec<f64>], context: &str) -> std::result::Result<DMatrix<f64>, Failure> {
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(schema(context, "matrix rows must be square and non-empty"));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn read_model(spec: &str) -> std::result::Result<MatrixPolytopeModel, Failure> {
    match spec {
        "dd2" => dd_trace1_polytope(2).map_err(|e| schema("building dd2", e)),
        "dd3" => dd_trace1_polytope(3).map_err(|e| schema("building dd3", e)),
        other => {
            let path = other
                .strip_prefix("file:")
                .ok_or_else(|| schema("--model", format!("expected dd2, dd3, or file:PATH, got {other}")))?;
            let text = fs::read_to_string(path).map_err(|e| schema(&format!("reading {path}"), e))?;
            let doc: ModelDoc =
                serde_json::from_str(&text).map_err(|e| schema(&format!("parsing {path}"), e))?;
            let vertices: std::result::Result<Vec<DMatrix<f64>>, Failure> = doc
                .vertices
                .iter()
                .map(|v| nested_to_matrix(v, &format!("vertex in {path}")))
                .collect();
            let vertices = vertices?;
            let facets: std::result::Result<Option<Vec<(DMatrix<f64>, f64)>>, Failure> = doc
                .facets
                .map(|fs| {
                    fs.iter()
                        .map(|f| {
                            Ok((nested_to_matrix(&f.normal, &format!("facet in {path}"))?, f.offset))
                        })
                        .collect()
                })
                .transpose();
            build_matrix_polytope(&vertices, facets?.as_deref(), path)
                .map_err(|e| schema(&format!("building model from {path}"), e))
        }
    }
}

fn timestamp_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn write_report(path: Option<&PathBuf>, body: &Value) -> std::result::Result<(), Failure> {
    let Some(path) = path else { return Ok(()) };
    let text = serde_json::to_string_pretty(body)
        .map_err(|e| Failure::Schema(format!("serializing report: {e}")))?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| schema("creating temp file", e))?;
    use std::io::Write;
    tmp.write_all(text.as_bytes())
        .and_then(|_| tmp.write_all(b"\n"))
        .map_err(|e| schema("writing report", e))?;
    tmp.persist(path)
        .map_err(|e| schema(&format!("renaming into {}", path.display()), e))?;
    Ok(())
}

fn vec_json(v: &DVector<f64>) -> Value {
    Value::from(v.iter().cloned().collect::<Vec<f64>>())
}

fn cmd_weights(
    cli: &Cli,
    polytope: &Path,
    points: &Path,
    tol: Option<f64>,
) -> std::result::Result<(), Failure> {
    let p = read_polytope(polytope)?;
    let rows = read_csv_rows(points)?;
    let opts = SolverOptions { tol, ..SolverOptions::default() };

    let mut results = Vec::new();
    let mut failures = 0usize;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p.ambient_dim() {
            return Err(schema(
                &format!("row {} of {}", i + 1, points.display()),
                format!("expected {} coordinates, got {}", p.ambient_dim(), row.len()),
            ));
        }
        let x = p.to_chart(&DVector::from_vec(row.clone()));
        match solve_weights(&p, &x, &opts) {
            Ok(sol) => results.push(json!({
                "x": vec_json(&sol.x),
                "lambda": vec_json(&sol.lambda),
                "p": sol.weights,
                "U": sol.barrier,
                "residual": sol.residual,
                "iterations": sol.iterations,
            })),
            Err(e) => {
                failures += 1;
                results.push(json!({ "error": { "point": i, "message": e.to_string() } }));
            }
        }
    }

    let body = json!({
        "generated_unix_ms": timestamp_ms(),
        "polytope": p.name(),
        "results": results,
        "failures": failures,
    });
    write_report(cli.out.as_ref(), &body)?;
    if !cli.quiet {
        println!(
            "weights {}: {} points, {} failed",
            p.name(),
            rows.len(),
            failures
        );
    }
    if failures > 0 {
        return Err(Failure::Check(format!("{failures} point(s) failed")));
    }
    Ok(())
}

fn cmd_verify(
    cli: &Cli,
    polytope: &Path,
    samples: usize,
    report_path: Option<&PathBuf>,
) -> std::result::Result<(), Failure> {
    let p = read_polytope(polytope)?;
    let report = verify_polytope(&p, cli.seed, samples)
        .map_err(|e| Failure::Check(format!("verification aborted: {e}")))?;
    let body = json!({
        "generated_unix_ms": timestamp_ms(),
        "report": report,
    });
    write_report(report_path, &body)?;
    if !cli.quiet {
        let status = if report.pass { "PASS" } else { "FAIL" };
        println!(
            "verify {}: {status} (hessian worst {:.3e}, representation worst {:.3e})",
            report.polytope, report.hessian_identity.worst, report.representation_identity.worst
        );
    }
    if !report.pass {
        return Err(Failure::Check("verification checks failed".into()));
    }
    Ok(())
}

fn cmd_lipschitz(cli: &Cli, polytope: &Path, field: &Path) -> std::result::Result<(), Failure> {
    let p = read_polytope(polytope)?;
    let rows = read_csv_rows(field)?;
    let value_cols = p.ambient_dim();
    let width = rows[0].len();
    if width <= value_cols {
        return Err(schema(
            &field.display().to_string(),
            format!("need grid columns plus {value_cols} value columns, got {width} total"),
        ));
    }
    let grid_cols = width - value_cols;
    let samples: Vec<FieldSample> = rows
        .iter()
        .map(|r| FieldSample {
            y: DVector::from_vec(r[..grid_cols].to_vec()),
            value: DVector::from_vec(r[grid_cols..].to_vec()),
        })
        .collect();
    let est = estimate_sqrt_lipschitz(&p, &samples, &SolverOptions::default())
        .map_err(|e| Failure::Check(format!("lipschitz estimate failed: {e}")))?;
    let body = json!({
        "generated_unix_ms": timestamp_ms(),
        "polytope": p.name(),
        "estimate": est,
    });
    write_report(cli.out.as_ref(), &body)?;
    if !cli.quiet {
        let max = est.per_vertex.iter().cloned().fold(0.0, f64::max);
        println!("lipschitz {}: max slope {max:.6}", p.name());
    }
    Ok(())
}

fn cmd_factorize(cli: &Cli, model: &str, field: &Path) -> std::result::Result<(), Failure> {
    let model = read_model(model)?;
    let m = model.matrix_dim();
    let value_cols = m * (m + 1) / 2;
    let rows = read_csv_rows(field)?;
    let width = rows[0].len();
    if width <= value_cols {
        return Err(schema(
            &field.display().to_string(),
            format!("need grid columns plus {value_cols} matrix columns, got {width} total"),
        ));
    }
    let grid_cols = width - value_cols;
    let samples: Vec<(DVector<f64>, DMatrix<f64>)> = rows
        .iter()
        .map(|r| {
            let y = DVector::from_vec(r[..grid_cols].to_vec());
            let mut u = DMatrix::zeros(m, m);
            let mut idx = grid_cols;
            for i in 0..m {
                for j in i..m {
                    u[(i, j)] = r[idx];
                    u[(j, i)] = r[idx];
                    idx += 1;
                }
            }
            (y, u)
        })
        .collect();

    let fact = factorize_field(&model, &samples, &SolverOptions::default())
        .map_err(|e| Failure::Check(format!("factorization failed: {e}")))?;
    let worst = fact
        .samples
        .iter()
        .map(|s| s.reconstruction_error)
        .fold(0.0f64, f64::max);
    let body = json!({
        "generated_unix_ms": timestamp_ms(),
        "matrix_dim": m,
        "directions": fact.directions.iter().map(vec_json).collect::<Vec<_>>(),
        "samples": fact.samples.iter().map(|s| json!({
            "y": vec_json(&s.y),
            "weights": s.weights,
            "coefficients": s.coefficients,
            "reconstruction_error": s.reconstruction_error,
        })).collect::<Vec<_>>(),
        "worst_reconstruction_error": worst,
    });
    write_report(cli.out.as_ref(), &body)?;
    if !cli.quiet {
        println!(
            "factorize: {} samples, {} directions, worst reconstruction {worst:.3e}",
            fact.samples.len(),
            fact.directions.len()
        );
    }
    if worst > 1e-9 {
        return Err(Failure::Check(format!("reconstruction error {worst:.3e} exceeds 1e-9")));
    }
    Ok(())
}

fn cmd_stencil(cli: &Cli, model: &str, point: &Path, h: f64) -> std::result::Result<(), Failure> {
    let model = read_model(model)?;
    let text = fs::read_to_string(point)
        .map_err(|e| schema(&format!("reading {}", point.display()), e))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| schema(&format!("parsing {}", point.display()), e))?;
    let u = nested_to_matrix(&rows, &point.display().to_string())?;
    if u.nrows() != model.matrix_dim() {
        return Err(schema(
            &point.display().to_string(),
            format!("expected a {0} x {0} matrix", model.matrix_dim()),
        ));
    }
    let spec = stencil_at(&model, &u, h, &SolverOptions::default())
        .map_err(|e| Failure::Check(format!("stencil construction failed: {e}")))?;
    let entries: Vec<Value> = spec
        .entries
        .iter()
        .map(|e| {
            let offset: Vec<Value> = if e.lattice {
                e.offset.iter().map(|v| Value::from(*v as i64)).collect()
            } else {
                e.offset.iter().map(|v| Value::from(*v)).collect()
            };
            json!({ "offset": offset, "coeff": e.coeff, "lattice": e.lattice })
        })
        .collect();
    let body = json!({
        "generated_unix_ms": timestamp_ms(),
        "h": spec.h,
        "entries": entries,
        "center": spec.center,
    });
    write_report(cli.out.as_ref(), &body)?;
    if !cli.quiet {
        println!(
            "stencil: {} entries, center {:.6}, {} non-lattice direction(s)",
            spec.entries.len(),
            spec.center,
            spec.non_lattice_count()
        );
    }
    Ok(())
}
