use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ModelConfig, Resolved, RunConfig, Suite};
use crate::suites::{self, Cell};

#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    /// Exit status the error maps to.
    pub status: i32,
}

impl ErrorReport {
    pub fn from_error(e: &conegibbs::Error) -> Self {
        use conegibbs::Error::*;
        let (kind, status) = match e {
            LowAcceptance { .. } => ("low_acceptance", 3),
            NegativeEnergy { .. } => ("negative_energy", 3),
            Divergent(_) => ("divergent", 3),
            DivergentLaplaceExponent(_) => ("divergent_laplace_exponent", 3),
            Quadrature { .. } => ("quadrature", 3),
            AssumptionViolated { .. } => ("assumption_violated", 2),
            BoundPrecondition(_) => ("bound_precondition", 2),
            _ => ("invalid", 2),
        };
        ErrorReport {
            kind,
            message: e.to_string(),
            status,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub cells: Vec<Cell>,
    pub error: Option<ErrorReport>,
}

#[derive(Clone, Debug, Serialize)]
struct Resolution<'a> {
    model: &'a ModelConfig,
    run: &'a RunConfig,
    formats: &'a [String],
    epsilon: f64,
    inner: Vec<Vec<i64>>,
    event: &'a conegibbs::specification::Event,
    xi_atoms: usize,
    truncation_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub pass: bool,
    pub status: i32,
    pub config: Value,
    pub suites: Vec<SuiteReport>,
}

pub fn run_all(r: &Resolved) -> Report {
    let root = r.seed();
    let mut suites = Vec::with_capacity(r.suites.len());
    for &s in &r.suites {
        let rep = match suites::run(s, r, root.child(s.stream())) {
            Ok(cells) => SuiteReport {
                suite: s,
                pass: cells.iter().all(|c| c.pass),
                cells,
                error: None,
            },
            Err(e) => SuiteReport {
                suite: s,
                pass: false,
                cells: Vec::new(),
                error: Some(ErrorReport::from_error(&e)),
            },
        };
        suites.push(rep);
    }
    let pass = suites.iter().all(|s| s.pass);
    let status = suites
        .iter()
        .filter_map(|s| s.error.as_ref().map(|e| e.status))
        .max()
        .unwrap_or(if pass { 0 } else { 1 });
    Report {
        pass,
        status,
        config: resolved_config(r),
        suites,
    }
}

/// The run's configuration with every default filled in. The output
/// directory is left out so reports written to different places compare
/// equal.
pub fn resolved_config(r: &Resolved) -> Value {
    let res = Resolution {
        model: &r.config.model,
        run: &r.config.run,
        formats: &r.config.output.formats,
        epsilon: r.epsilon,
        inner: r.inner.iter().map(|k| k.iter().copied().collect()).collect(),
        event: &r.event,
        xi_atoms: r.xi.len(),
        truncation_mass: r.kernel.truncation_mass(),
    };
    let mut v = serde_json::to_value(res).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        if let Some(Value::Object(run)) = m.get_mut("run") {
            if run.get("laplace").is_some_and(Value::is_null) {
                run.insert("laplace".into(), json!(r.laplace));
            }
        }
    }
    v
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct WriteError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), WriteError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| WriteError { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, bytes).map_err(|source| WriteError { path: path.to_path_buf(), source })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> WriteError + '_ {
    move |source| WriteError { path: path.to_path_buf(), source }
}

pub fn write(report: &Report, dir: &Path, formats: &[String]) -> Result<Vec<PathBuf>, WriteError> {
    let mut written = Vec::new();
    if formats.iter().any(|f| f == "json") {
        let path = dir.join("report.json");
        let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
        bytes.push(b'\n');
        write_file(&path, &bytes)?;
        written.push(path);
    }
    if formats.iter().any(|f| f == "csv") {
        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = io_err(&path);
        w.write_record(["suite", "check", "parameters", "lhs", "rhs", "stderr", "pass", "error"])
            .map_err(|x| e(x.into()))?;
        for s in &report.suites {
            if let Some(err) = &s.error {
                w.write_record([s.suite.name(), "", "", "", "", "", "false", &err.message])
                    .map_err(|x| e(x.into()))?;
            }
            for c in &s.cells {
                let params = c
                    .parameters
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(";");
                w.write_record([
                    s.suite.name(),
                    &c.check,
                    &params,
                    &c.lhs.to_string(),
                    &c.rhs.to_string(),
                    &c.stderr.to_string(),
                    &c.pass.to_string(),
                    "",
                ])
                .map_err(|x| e(x.into()))?;
            }
        }
        let bytes = w.into_inner().map_err(|x| e(x.into_error()))?;
        drop(e);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
