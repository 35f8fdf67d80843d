//! Result directories: fields, metrics, trace and a hashed manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use nodal_core::discretize::{load_field, save_field, Field};
use nodal_core::functional::energy;
use nodal_core::inversion::SystemPair;
use nodal_core::solver::{SolveConfig, SolveMetrics, SolveResult, SymmetryKind};
use nodal_core::symmetry::symmetrize;
use nodal_core::Exponents;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fmt17;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const METRICS: &str = "metrics.json";
pub const TRACE: &str = "trace.csv";
pub const FIELD_U: &str = "u.lefd";
pub const FIELD_V: &str = "v.lefd";

/// Tolerance for re-evaluated metrics against the stored ones.
const REPRODUCE_TOL: f64 = 1e-12;
const NEHARI_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-12;
const EQUIVARIANCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckRow {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckRow {
            name: name.into(),
            pass: value <= tolerance,
            value,
            tolerance,
        }
    }

    fn flag(name: impl Into<String>, pass: bool) -> Self {
        CheckRow {
            name: name.into(),
            pass,
            value: if pass { 1.0 } else { 0.0 },
            tolerance: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: SolveConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<FileEntry>,
    pub wall_time_s: f64,
    pub threads: usize,
    pub checks: Vec<CheckRow>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Invariant checks on a solved pair. Shared by `solve` and `validate`.
pub fn field_checks(
    cfg: &SolveConfig,
    e: &Exponents,
    u: &Field,
    v: &Field,
    converged: bool,
) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let report = energy(u, e);
    if converged {
        rows.push(CheckRow::at_most(
            "nehari_defect",
            report.relative_defect(),
            NEHARI_TOL,
        ));
    }
    if cfg.symmetry.kind == SymmetryKind::Equivariant {
        if let Some(spec) = cfg.symmetry.spec(e.n)? {
            let pu = symmetrize(u, &spec)?;
            let gap = pu
                .values()
                .iter()
                .zip(u.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            rows.push(CheckRow::at_most(
                "equivariance",
                gap / u.max_abs().max(f64::MIN_POSITIVE),
                EQUIVARIANCE_TOL,
            ));
        }
    }
    let pair = SystemPair::from_pair(u.clone(), v.clone(), e)?;
    rows.push(CheckRow::at_most(
        "identity_defect",
        pair.report(e).identity_defect,
        IDENTITY_TOL,
    ));
    Ok(rows)
}

fn write_trace(result: &SolveResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "energy", "residual", "step", "eps"])?;
    for row in &result.trace {
        w.write_record([
            row.iteration.to_string(),
            fmt17(row.energy),
            fmt17(row.residual),
            fmt17(row.step),
            fmt17(row.eps),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of a run and returns the manifest.
pub fn write_run(
    dir: &Path,
    command: &str,
    cfg: &SolveConfig,
    inputs: Vec<PathBuf>,
    result: &SolveResult,
    started: Instant,
    threads: usize,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let e = cfg.exponents.resolve()?;
    fs::write(dir.join(CONFIG), toml::to_string(cfg)?)?;
    save_field(&result.u, dir.join(FIELD_U))?;
    save_field(&result.v, dir.join(FIELD_V))?;
    fs::write(
        dir.join(METRICS),
        serde_json::to_string_pretty(&result.metrics())?,
    )?;
    write_trace(result, &dir.join(TRACE))?;

    let mut checks = vec![CheckRow::flag("converged", result.converged)];
    checks.extend(field_checks(
        cfg,
        &e,
        &result.u,
        &result.v,
        result.converged,
    )?);
    if cfg.symmetry.kind == SymmetryKind::Equivariant {
        checks.push(CheckRow::flag("sign_change", result.sign_change));
    }

    let names = [CONFIG, FIELD_U, "u.json", FIELD_V, "v.json", METRICS, TRACE];
    let outputs = names
        .iter()
        .map(|name| {
            let (sha256, bytes) = sha256_file(&dir.join(name))?;
            Ok(FileEntry {
                path: name.to_string(),
                sha256,
                bytes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        inputs,
        outputs,
        wall_time_s: started.elapsed().as_secs_f64(),
        threads,
        checks,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Re-checks a result directory. Files that cannot be read at all are
/// errors; everything else becomes a check row.
pub fn validate_run(dir: &Path) -> Result<Vec<CheckRow>> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .with_context(|| format!("reading {}", dir.join(MANIFEST).display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).context("parsing the manifest")?;
    let mut rows = Vec::new();
    for entry in &manifest.outputs {
        let ok = match sha256_file(&dir.join(&entry.path)) {
            Ok((sha, bytes)) => sha == entry.sha256 && bytes == entry.bytes,
            Err(_) => false,
        };
        rows.push(CheckRow::flag(format!("hash {}", entry.path), ok));
    }

    let cfg = crate::config::load_config(&dir.join(CONFIG))?;
    rows.push(CheckRow::flag(
        "config matches manifest",
        cfg == manifest.config,
    ));
    let e = cfg.exponents.resolve()?;
    let u = load_field(dir.join(FIELD_U))?;
    let v = load_field(dir.join(FIELD_V))?;
    let metrics: SolveMetrics =
        serde_json::from_str(&fs::read_to_string(dir.join(METRICS))?).context("parsing metrics")?;

    let report = energy(&u, &e);
    let gap = [
        relative_gap(report.energy, metrics.energy.energy),
        relative_gap(report.seminorm_qp, metrics.energy.seminorm_qp),
        relative_gap(report.lp_norm_p, metrics.energy.lp_norm_p),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    rows.push(CheckRow::at_most("energy reproduces", gap, REPRODUCE_TOL));

    let pair = SystemPair::from_pair(u.clone(), v.clone(), &e)?;
    let res = pair.report(&e);
    let gap = relative_gap(res.residual_1, metrics.residuals.residual_1)
        .max(relative_gap(res.residual_2, metrics.residuals.residual_2));
    rows.push(CheckRow::at_most(
        "system residuals reproduce",
        gap,
        REPRODUCE_TOL,
    ));
    rows.extend(field_checks(&cfg, &e, &u, &v, metrics.converged)?);
    Ok(rows)
}
