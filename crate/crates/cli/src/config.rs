//! Run configuration: plain `key = value` lines with optional `[section]`
//! blocks. Top-level keys describe the problem and the quadrature; each mode
//! reads its own section.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use ini::Ini;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    BuiltinRing,
    Expression { q: String, q_min: f64, f: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionSection {
    pub n_alpha: usize,
    /// 0 picks enough bands to bracket the requested range.
    pub n_bands: usize,
    pub k2_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSection {
    pub r_range: (f64, f64),
    pub n_r: usize,
    pub n_theta: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiSource {
    /// Trace of the full-guide solution of the configured source.
    Manufactured,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfguideSection {
    pub p1: usize,
    pub r1: usize,
    pub sweep: Vec<f64>,
    pub phi: PhiSource,
    pub n_max: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub eps: Vec<f64>,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSection {
    pub n_list: Vec<usize>,
    pub h_list: Vec<f64>,
    pub ref_n: usize,
    pub ref_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub k2: f64,
    pub h: f64,
    pub n_nodes: usize,
    pub n0: usize,
    pub delta: f64,
    pub margin: f64,
    pub cells: (i64, i64),
    pub dispersion: DispersionSection,
    pub scan: ScanSection,
    pub halfguide: HalfguideSection,
    pub oracle: OracleSection,
    pub convergence: ConvergenceSection,
}

const TOP_KEYS: &[&str] = &[
    "problem", "q", "q_min", "f", "k2", "h", "N", "N0", "delta", "margin", "cells",
];
const SECTIONS: &[(&str, &[&str])] = &[
    ("dispersion", &["n_alpha", "n_bands", "k2_min", "k2_max"]),
    ("scan", &["r_min", "r_max", "n_r", "n_theta"]),
    ("halfguide", &["M0", "P1", "R1", "sweep", "phi", "n_max"]),
    ("oracle", &["eps", "R"]),
    ("convergence", &["N", "h", "ref_N", "ref_h"]),
];

/// Raw values by `(section, key)`; the top level is the empty section.
struct Raw(BTreeMap<(String, String), String>);

impl Raw {
    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.0.get(&(section.to_string(), key.to_string())).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, default: Option<T>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            Some(v) => v
                .parse()
                .map_err(|e| anyhow!("{}: cannot parse {v:?}: {e}", name(section, key))),
            None => default.ok_or_else(|| anyhow!("missing required key {}", name(section, key))),
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| anyhow!("{}: cannot parse {s:?}: {e}", name(section, key)))
                })
                .collect(),
        }
    }
}

fn name(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("[{section}] {key}")
    }
}

fn default_sweep() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-8.0 + 0.5 * k as f64)).collect()
}

impl RunConfig {
    /// True when the text has no keys at all.
    pub fn is_blank(text: &str) -> bool {
        text.lines()
            .map(str::trim)
            .all(|l| l.is_empty() || l.starts_with('#') || l.starts_with(';'))
    }

    /// Parses a config; relative file paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| anyhow!("config syntax error: {e}"))?;
        let mut raw = BTreeMap::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            let allowed: &[&str] = if section.is_empty() {
                TOP_KEYS
            } else {
                SECTIONS
                    .iter()
                    .find(|s| s.0 == section)
                    .map(|s| s.1)
                    .ok_or_else(|| anyhow!("unknown section [{section}]"))?
            };
            for (k, v) in props.iter() {
                if !allowed.contains(&k) {
                    bail!("unknown key {}", name(section, k));
                }
                raw.insert((section.to_string(), k.to_string()), v.trim().to_string());
            }
        }
        let raw = Raw(raw);

        let problem = match raw.get("", "problem").unwrap_or("builtin-ring") {
            "builtin-ring" => {
                for k in ["q", "q_min", "f"] {
                    if raw.get("", k).is_some() {
                        bail!("key {k} only applies to problem = expression");
                    }
                }
                Problem::BuiltinRing
            }
            "expression" => Problem::Expression {
                q: raw.parse("", "q", None)?,
                q_min: raw.parse("", "q_min", None)?,
                f: raw.parse("", "f", None)?,
            },
            other => bail!("problem must be builtin-ring or expression, got {other:?}"),
        };
        let cells = raw.list::<i64>("", "cells", vec![0, 0])?;
        let cells = match cells.as_slice() {
            [a, b] => (*a, *b),
            _ => bail!("cells must be two integers n_min, n_max"),
        };
        let k2: f64 = raw.parse("", "k2", None)?;

        let dispersion = DispersionSection {
            n_alpha: raw.parse("dispersion", "n_alpha", Some(64))?,
            n_bands: raw.parse("dispersion", "n_bands", Some(0))?,
            k2_range: (
                raw.parse("dispersion", "k2_min", Some(0.5))?,
                raw.parse("dispersion", "k2_max", Some(20.0))?,
            ),
        };
        let scan = ScanSection {
            r_range: (
                raw.parse("scan", "r_min", Some(0.2))?,
                raw.parse("scan", "r_max", Some(5.0))?,
            ),
            n_r: raw.parse("scan", "n_r", Some(41))?,
            n_theta: raw.parse("scan", "n_theta", Some(180))?,
        };
        let p1: usize = raw.parse("halfguide", "P1", Some(4))?;
        let r1: usize = raw.parse("halfguide", "R1", Some(10))?;
        if let Some(m0) = raw.get("halfguide", "M0") {
            let m0: usize = m0.parse().map_err(|e| anyhow!("[halfguide] M0: {e}"))?;
            if m0 != p1 * r1 {
                bail!("[halfguide] M0 = {m0} does not equal P1 * R1 = {}", p1 * r1);
            }
        }
        let phi = match raw.get("halfguide", "phi") {
            None | Some("manufactured") => PhiSource::Manufactured,
            Some(p) => PhiSource::File(base.join(p)),
        };
        let halfguide = HalfguideSection {
            p1,
            r1,
            sweep: raw.list("halfguide", "sweep", default_sweep())?,
            phi,
            n_max: raw.parse("halfguide", "n_max", Some(3))?,
        };
        let oracle = OracleSection {
            eps: raw.list("oracle", "eps", vec![4e-2, 2e-2, 1e-2])?,
            r: raw.parse("oracle", "R", Some(15))?,
        };
        let convergence = ConvergenceSection {
            n_list: raw.list("convergence", "N", vec![8, 16, 32])?,
            h_list: raw.list("convergence", "h", vec![0.02, 0.01])?,
            ref_n: raw.parse("convergence", "ref_N", Some(128))?,
            ref_h: raw.parse("convergence", "ref_h", Some(0.005))?,
        };
        let config = RunConfig {
            problem,
            k2,
            h: raw.parse("", "h", None)?,
            n_nodes: raw.parse("", "N", Some(32))?,
            n0: raw.parse("", "N0", Some(6))?,
            delta: raw.parse("", "delta", Some(0.1))?,
            margin: raw.parse("", "margin", Some(0.4))?,
            cells,
            dispersion,
            scan,
            halfguide,
            oracle,
            convergence,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k2 > 0.0 && self.k2.is_finite()) {
            bail!("k2 must be positive, got {}", self.k2);
        }
        if !(self.h > 0.0 && self.h <= 0.5) {
            bail!("h must satisfy 0 < h <= 0.5, got {}", self.h);
        }
        if self.n_nodes < 4 || self.n_nodes % 2 != 0 {
            bail!("N must be even and at least 4, got {}", self.n_nodes);
        }
        if self.n0 < 2 {
            bail!("N0 must be at least 2, got {}", self.n0);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("delta must be in (0, 1), got {}", self.delta);
        }
        if self.cells.0 > self.cells.1 {
            bail!("cells: n_min = {} exceeds n_max = {}", self.cells.0, self.cells.1);
        }
        let (lo, hi) = self.dispersion.k2_range;
        if !(lo >= 0.0 && hi > lo) {
            bail!("[dispersion] needs 0 <= k2_min < k2_max, got ({lo}, {hi})");
        }
        if self.halfguide.sweep.is_empty() || self.halfguide.sweep.iter().any(|a| !(*a > 0.0)) {
            bail!("[halfguide] sweep must be a nonempty list of positive values");
        }
        if self.oracle.eps.len() < 3 {
            bail!("[oracle] eps needs three decreasing values");
        }
        let c = &self.convergence;
        if c.n_list.is_empty() || c.h_list.is_empty() {
            bail!("[convergence] N and h lists must be nonempty");
        }
        if c.h_list.iter().any(|h| *h <= c.ref_h) {
            bail!("[convergence] every h must be coarser than ref_h = {}", c.ref_h);
        }
        Ok(())
    }

    /// `# key = value` lines for every resolved setting, defaults included.
    pub fn header(&self, mode: &str) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "# {k} = {v}");
        };
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        line("mode", mode.to_string());
        match &self.problem {
            Problem::BuiltinRing => line("problem", "builtin-ring".into()),
            Problem::Expression { q, q_min, f } => {
                line("problem", "expression".into());
                line("q", q.clone());
                line("q_min", format!("{q_min:e}"));
                line("f", f.clone());
            }
        }
        line("k2", format!("{:e}", self.k2));
        line("h", format!("{:e}", self.h));
        line("N", self.n_nodes.to_string());
        line("N0", self.n0.to_string());
        line("delta", format!("{:e}", self.delta));
        line("margin", format!("{:e}", self.margin));
        line("cells", format!("{}, {}", self.cells.0, self.cells.1));
        let d = &self.dispersion;
        line("[dispersion] n_alpha", d.n_alpha.to_string());
        line("[dispersion] n_bands", d.n_bands.to_string());
        line("[dispersion] k2_min", format!("{:e}", d.k2_range.0));
        line("[dispersion] k2_max", format!("{:e}", d.k2_range.1));
        let s = &self.scan;
        line("[scan] r_min", format!("{:e}", s.r_range.0));
        line("[scan] r_max", format!("{:e}", s.r_range.1));
        line("[scan] n_r", s.n_r.to_string());
        line("[scan] n_theta", s.n_theta.to_string());
        let hg = &self.halfguide;
        line("[halfguide] P1", hg.p1.to_string());
        line("[halfguide] R1", hg.r1.to_string());
        line("[halfguide] M0", (hg.p1 * hg.r1).to_string());
        line("[halfguide] sweep", list(&hg.sweep));
        line(
            "[halfguide] phi",
            match &hg.phi {
                PhiSource::Manufactured => "manufactured".into(),
                PhiSource::File(p) => p.display().to_string(),
            },
        );
        line("[halfguide] n_max", hg.n_max.to_string());
        line("[oracle] eps", list(&self.oracle.eps));
        line("[oracle] R", self.oracle.r.to_string());
        let c = &self.convergence;
        line(
            "[convergence] N",
            c.n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "),
        );
        line("[convergence] h", list(&c.h_list));
        line("[convergence] ref_N", c.ref_n.to_string());
        line("[convergence] ref_h", format!("{:e}", c.ref_h));
        out
    }
}
