//! `nodal`: solve, validate and inspect critical Lane-Emden runs.
//!
//! Exit codes: 0 success, 1 failed checks or runtime error, 2 bad usage or
//! input, 3 no convergence (artifacts are still written).
//!
//! Environment: `NODAL_OUTPUT_ROOT` (default `runs`) holds result
//! directories; `NODAL_THREADS` sets the worker count (default 1, which
//! makes runs bitwise reproducible).

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nodal_core::exponents::{Exponent, Exponents};
use nodal_core::kelvin::{kelvin_report, rational_sweep, KelvinReport};
use nodal_core::solver::{continuation_sweep, solve, SolveConfig, SolveResult};

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Parser)]
#[command(
    name = "nodal",
    version,
    about = "Sign-changing solutions of critical Lane-Emden systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PointArgs {
    /// Dimension N.
    #[arg(long = "N", visible_alias = "n")]
    n: u32,
    /// Exponent p, as `4`, `12/5` or `2.4`.
    #[arg(long)]
    p: Option<String>,
    /// Exponent q.
    #[arg(long)]
    q: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver on a TOML configuration.
    Solve {
        config: PathBuf,
        /// Result directory (default `$NODAL_OUTPUT_ROOT/<config stem>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a result directory written by `solve`.
    Validate { dir: PathBuf },
    /// Kelvin constant, zero verdict and isometry defect.
    Kelvin {
        #[arg(long = "N", visible_alias = "n")]
        n: u32,
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        q: Option<String>,
        /// Tabulate rational points of the hyperbola instead of one point.
        #[arg(long)]
        sweep: bool,
        /// Number of sweep points.
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Nodes of the radial test annulus.
        #[arg(long, default_value_t = 1024)]
        resolution: usize,
        #[arg(long)]
        json: bool,
    },
    /// Continuation sweep along the hyperbola; writes a CSV table.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the completed hyperbola point.
    Hyperbola {
        #[command(flatten)]
        point: PointArgs,
    },
    /// Positive radial ground state.
    GroundState {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 20.0)]
        extent: f64,
        #[arg(long, default_value_t = 2000)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn point(n: u32, p: Option<&str>, q: Option<&str>) -> anyhow::Result<Exponents> {
    let parse = |s: &str| s.parse::<Exponent>().map_err(|e| anyhow!(e));
    let e = match (p, q) {
        (Some(p), None) => Exponents::from_p(n, parse(p)?)?,
        (None, Some(q)) => Exponents::from_q(n, parse(q)?)?,
        (Some(p), Some(q)) => {
            let e = Exponents::from_p(n, parse(p)?)?;
            let q = parse(q)?;
            if (e.q() - q.value()).abs() > 1e-12 * e.q() {
                anyhow::bail!("p = {p} and q = {q} are not on the critical hyperbola for N = {n}");
            }
            e
        }
        (None, None) => anyhow::bail!("give --p or --q"),
    };
    Ok(e)
}

fn threads() -> usize {
    std::env::var("NODAL_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|n| *n > 0)
        .unwrap_or(1)
}

fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
    {
        log::warn!("thread pool already initialized: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

fn output_dir(out: Option<PathBuf>, stem: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os("NODAL_OUTPUT_ROOT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(stem)
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn print_result(dir: &Path, r: &SolveResult) {
    println!("energy          {}", fmt17(r.report.energy));
    println!("nehari_defect   {}", fmt17(r.report.relative_defect()));
    println!("residual        {}", fmt17(r.residual));
    println!("residual_1      {}", fmt17(r.residuals.residual_1));
    println!("residual_2      {}", fmt17(r.residuals.residual_2));
    println!("identity_defect {}", fmt17(r.residuals.identity_defect));
    println!("sign_change     {}", r.sign_change);
    println!(
        "converged       {} ({:?} after {} iterations)",
        r.converged,
        r.stop,
        r.trace.len()
    );
    println!("output          {}", dir.display());
}

fn run_and_write(
    command: &str,
    cfg: &SolveConfig,
    inputs: Vec<PathBuf>,
    dir: &Path,
) -> Result<(), Failure> {
    let started = Instant::now();
    let result = solve(cfg).map_err(|e| runtime(e.into()))?;
    let manifest =
        run::write_run(dir, command, cfg, inputs, &result, started, threads()).map_err(runtime)?;
    print_result(dir, &result);
    for c in manifest.checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "check {} failed: {} (tolerance {})",
            c.name,
            fmt17(c.value),
            fmt17(c.tolerance)
        );
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            error: anyhow!(
                "no convergence: {:?} after {} iterations",
                result.stop,
                result.trace.len()
            ),
        })
    }
}

fn kelvin_row(e: &Exponents, r: &KelvinReport) -> String {
    let defect = r.isometry_defect.map(fmt17).unwrap_or_else(|| "-".into());
    format!(
        "{:>3} {:>8} {:>8} {:>24} {:>24} {:>24} {:>24} {:>5} {:>24}",
        e.n,
        e.p.to_string(),
        e.q.to_string(),
        fmt17(r.alpha),
        fmt17(r.a),
        fmt17(r.b),
        fmt17(r.constant_c),
        r.is_zero,
        defect
    )
}

fn kelvin_header() -> String {
    format!(
        "{:>3} {:>8} {:>8} {:>24} {:>24} {:>24} {:>24} {:>5} {:>24}",
        "N", "p", "q", "alpha", "A", "B", "C", "zero", "isometry_defect"
    )
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { config, out } => {
            let cfg = config::load_config(&config).map_err(usage)?;
            let dir = output_dir(out, &stem(&config));
            run_and_write("solve", &cfg, vec![config], &dir)
        }
        Command::Validate { dir } => {
            let rows = run::validate_run(&dir).map_err(usage)?;
            let mut ok = true;
            for r in &rows {
                ok &= r.pass;
                let verdict = if r.pass { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} {:<28} {} (tolerance {})",
                    r.name,
                    fmt17(r.value),
                    fmt17(r.tolerance)
                );
            }
            if ok {
                Ok(())
            } else {
                Err(runtime(anyhow!("validation failed")))
            }
        }
        Command::Kelvin {
            n,
            p,
            q,
            sweep,
            count,
            resolution,
            json,
        } => {
            let points = if sweep {
                if n < 3 {
                    return Err(usage(anyhow!("N must be at least 3")));
                }
                rational_sweep(n, count)
            } else {
                vec![point(n, p.as_deref(), q.as_deref()).map_err(usage)?]
            };
            let mut reports = Vec::new();
            for e in &points {
                reports.push(kelvin_report(e, resolution).map_err(|e| usage(e.into()))?);
            }
            if json {
                let rows: Vec<_> = points
                    .iter()
                    .zip(&reports)
                    .map(|(e, r)| serde_json::json!({ "exponents": e, "report": r }))
                    .collect();
                println!(
                    "{}",
                    serde_json::to_string_pretty(&rows).map_err(|e| runtime(e.into()))?
                );
            } else {
                println!("{}", kelvin_header());
                for (e, r) in points.iter().zip(&reports) {
                    println!("{}", kelvin_row(e, r));
                }
            }
            Ok(())
        }
        Command::Sweep { config, out } => {
            let (base, points) = config::load_sweep(&config).map_err(usage)?;
            let dir = output_dir(out, &stem(&config));
            std::fs::create_dir_all(&dir).map_err(|e| runtime(e.into()))?;
            let runs = continuation_sweep(&base, &points);
            let path = dir.join("sweep.csv");
            let write = || -> anyhow::Result<usize> {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record([
                    "N",
                    "p",
                    "q",
                    "energy",
                    "nehari_defect",
                    "residual",
                    "residual_1",
                    "residual_2",
                    "converged",
                    "error",
                ])?;
                let mut converged = 0;
                for (e, r) in points.iter().zip(&runs) {
                    let mut row = vec![e.n.to_string(), e.p.to_string(), e.q.to_string()];
                    match r {
                        Ok(r) => {
                            converged += r.converged as usize;
                            row.extend([
                                fmt17(r.report.energy),
                                fmt17(r.report.relative_defect()),
                                fmt17(r.residual),
                                fmt17(r.residuals.residual_1),
                                fmt17(r.residuals.residual_2),
                                r.converged.to_string(),
                                String::new(),
                            ]);
                        }
                        Err(err) => {
                            row.extend(["", "", "", "", ""].map(String::from));
                            row.extend(["false".to_string(), err.to_string()]);
                        }
                    }
                    println!("{}", row.join(","));
                    w.write_record(&row)?;
                }
                w.flush()?;
                Ok(converged)
            };
            let converged = write().map_err(runtime)?;
            println!("table           {}", path.display());
            if converged > 0 {
                Ok(())
            } else {
                Err(Failure {
                    code: 3,
                    error: anyhow!("no sweep point converged"),
                })
            }
        }
        Command::Hyperbola { point: pa } => {
            let e = point(pa.n, pa.p.as_deref(), pa.q.as_deref()).map_err(usage)?;
            let r = e.record();
            println!("N        {}", r.n);
            println!("p        {} ({})", fmt17(r.p), e.p);
            println!("q        {} ({})", fmt17(r.q), e.q);
            println!("q'       {} ({})", fmt17(r.qp), e.qp);
            println!("p'       {} ({})", fmt17(r.pp), e.pp);
            println!("case     {:?}", r.special_case);
            Ok(())
        }
        Command::GroundState {
            point: pa,
            extent,
            resolution,
            out,
        } => {
            let e = point(pa.n, pa.p.as_deref(), pa.q.as_deref()).map_err(usage)?;
            let cfg = SolveConfig::radial(&e, extent, resolution);
            cfg.validate()
                .context("ground-state configuration")
                .map_err(usage)?;
            let dir = output_dir(
                out,
                &format!(
                    "ground_state_n{}_q{}",
                    e.n,
                    e.q.to_string().replace('/', "_")
                ),
            );
            run_and_write("ground-state", &cfg, Vec::new(), &dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_threads(threads());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
