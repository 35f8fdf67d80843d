//! TOML run configuration.
//!
//! A run file is a `SolveConfig` written as TOML. Sweep files add a
//! `[sweep]` table listing the hyperbola points, as `q = [...]` or
//! `p = [...]` with entries such as `2`, `"7/3"` or `2.5`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nodal_core::exponents::{Exponent, Exponents};
use nodal_core::solver::{ExponentValue, SolveConfig};
use serde::Deserialize;

pub fn parse_config(text: &str, origin: &Path) -> Result<SolveConfig> {
    let cfg: SolveConfig =
        toml::from_str(text).with_context(|| format!("parsing {}", origin.display()))?;
    cfg.validate()
        .with_context(|| format!("checking {}", origin.display()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SolveConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text, path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepTable {
    #[serde(default)]
    p: Vec<ExponentValue>,
    #[serde(default)]
    q: Vec<ExponentValue>,
}

/// Base configuration and the deduplicated sweep points, in file order.
pub fn load_sweep(path: &Path) -> Result<(SolveConfig, Vec<Exponents>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing {}", path.display()))?;
    let sweep = table
        .remove("sweep")
        .with_context(|| format!("{} has no [sweep] table", path.display()))?;
    let sweep: SweepTable = sweep.try_into().context("reading the [sweep] table")?;
    let base = parse_config(&toml::to_string(&table)?, path)?;
    let n = base.exponents.n;
    let given: Vec<(bool, Exponent)> = match (sweep.p.is_empty(), sweep.q.is_empty()) {
        (true, true) => bail!("the sweep list is empty"),
        (false, false) => bail!("give sweep.p or sweep.q, not both"),
        (false, true) => sweep.p.iter().map(|v| (true, v.0)).collect(),
        (true, false) => sweep.q.iter().map(|v| (false, v.0)).collect(),
    };
    let mut points: Vec<Exponents> = Vec::new();
    for (is_p, x) in given {
        let e = if is_p {
            Exponents::from_p(n, x)
        } else {
            Exponents::from_q(n, x)
        }
        .with_context(|| format!("sweep point {x}"))?;
        if points
            .iter()
            .any(|o| (o.q() - e.q()).abs() <= 1e-12 * e.q())
        {
            log::warn!("duplicate sweep point {x} dropped");
            eprintln!("warning: duplicate sweep point {x} dropped");
            continue;
        }
        points.push(e);
    }
    Ok((base, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[exponents]
n = 5
q = 2

[symmetry]
kind = "radial"

[grid]
kind = "radial_1d"
extent = 20.0
resolution = 200

[init]
kind = "radial_seed"
"#;

    #[test]
    fn sweep_points_are_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(
            &path,
            format!("{BASE}\n[sweep]\nq = [2, \"7/3\", 2, 3.0, \"3\"]\n"),
        )
        .unwrap();
        let (_, pts) = load_sweep(&path).unwrap();
        assert_eq!(pts.len(), 3);
        std::fs::write(&path, format!("{BASE}\n[sweep]\nq = []\n")).unwrap();
        assert!(load_sweep(&path).is_err());
    }

    #[test]
    fn unknown_fields_are_reported() {
        let err = parse_config(&BASE.replace("extent", "extnt"), Path::new("x.toml")).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("extnt") && msg.contains("line"), "{msg}");
    }
}
