use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use lapwg_core::contour::{validate_contour_default, Contour, DeltaPolicy};
use lapwg_core::dispersion::{
    compute_diagram_mirrored, crossings_csv, find_crossings, multiplier_scan, refine_stop_bands, stop_bands_csv,
    DispersionDiagram,
};
use lapwg_core::fullguide::{auto_contour, interpolate_to, relative_l2, solve_full_many, SolveConfig};
use lapwg_core::halfguide::{solve_half, SourceBasis, TraceVector};
use lapwg_core::oracle::{extrapolate_lap, solve_absorbing, TruncatedStrip};
use lapwg_core::{build_structured_mesh, CellOperator, CellProblem, Complex64, MediumSpec, SourceSpec, UnitCellMesh};

use crate::config::{PhiSource, Problem, RunConfig};

const N_ALPHA_CONTOUR: usize = 32;
const CONTOUR_SAMPLES: usize = 64;

pub struct Runner {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    mode: &'static str,
}

impl Runner {
    pub fn new(config: RunConfig, out_dir: PathBuf, mode: &'static str) -> Result<Self> {
        fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        Ok(Runner { config, out_dir, mode })
    }

    fn write(&self, name: &str, body: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        let text = format!("{}{body}", self.config.header(self.mode));
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn medium(&self) -> Result<MediumSpec> {
        Ok(match &self.config.problem {
            Problem::BuiltinRing => MediumSpec::ring(),
            Problem::Expression { q, q_min, .. } => MediumSpec::from_expr(q, *q_min)?,
        })
    }

    fn source(&self) -> Result<SourceSpec> {
        Ok(match &self.config.problem {
            Problem::BuiltinRing => SourceSpec::ring(),
            Problem::Expression { f, .. } => SourceSpec::from_expr(f)?,
        })
    }

    fn operator_at(&self, h: f64, absorption: f64) -> Result<CellOperator> {
        let mesh = Arc::new(build_structured_mesh(h)?);
        let problem = CellProblem::with_absorption(mesh, self.medium()?, self.config.k2, absorption)?;
        Ok(CellOperator::new(problem)?)
    }

    fn operator(&self) -> Result<CellOperator> {
        self.operator_at(self.config.h, 0.0)
    }

    fn policy(&self) -> DeltaPolicy {
        DeltaPolicy {
            default_delta: self.config.delta,
            margin: self.config.margin,
        }
    }

    fn contour(&self, op: &CellOperator) -> Result<Contour> {
        let (contour, crossings) = auto_contour(op, self.policy(), N_ALPHA_CONTOUR)?;
        eprintln!(
            "contour: {} crossings, {}",
            crossings.len(),
            contour.describe().lines().next().unwrap_or("")
        );
        Ok(contour)
    }

    fn solve_config(&self, cells: (i64, i64), contour: &Contour) -> SolveConfig {
        SolveConfig::new(self.config.n_nodes, self.config.n0, cells).with_contour(contour.clone())
    }

    /// Grows the band count until every band above the top one lies above
    /// the requested range and `k^2`.
    fn diagram(&self, op: &CellOperator) -> Result<DispersionDiagram> {
        let d = &self.config.dispersion;
        let ceiling = d.k2_range.1.max(self.config.k2);
        if d.n_bands > 0 {
            return Ok(compute_diagram_mirrored(op, d.n_alpha, d.n_bands)?);
        }
        let mut n_bands = 4;
        loop {
            let diagram = compute_diagram_mirrored(op, d.n_alpha, n_bands)?;
            let top = diagram
                .bands
                .iter()
                .map(|b| b[n_bands - 1])
                .fold(f64::INFINITY, f64::min);
            if top > ceiling {
                return Ok(diagram);
            }
            if 4 * (n_bands + 4) > op.n_dofs() {
                bail!("mesh too coarse to resolve bands up to {ceiling}");
            }
            n_bands += 4;
        }
    }

    pub fn dispersion(&self) -> Result<()> {
        let op = self.operator()?;
        let d = &self.config.dispersion;
        if d.n_alpha < 2 || d.n_alpha % 2 != 0 {
            bail!("[dispersion] n_alpha must be even, got {}", d.n_alpha);
        }
        let diagram = self.diagram(&op)?;
        let gaps = refine_stop_bands(&op, &diagram, d.k2_range, 1e-3)?;
        let crossings = find_crossings(&diagram, &op, self.config.k2)?;
        self.write("diagram.csv", &diagram.to_csv())?;
        self.write("stop_bands.csv", &stop_bands_csv(&gaps))?;
        self.write("crossings.csv", &crossings_csv(&crossings))?;
        for (a, b) in &gaps {
            println!("stop band ({a:.6}, {b:.6})");
        }
        println!("{} crossings at k2 = {}", crossings.len(), self.config.k2);
        Ok(())
    }

    pub fn scan(&self) -> Result<()> {
        let op = self.operator()?;
        let s = &self.config.scan;
        let scan = multiplier_scan(&op, s.r_range, (s.n_r, s.n_theta))?;
        self.write("scan.csv", &scan.to_csv())
    }

    pub fn contour_mode(&self) -> Result<()> {
        let op = self.operator()?;
        let (contour, crossings) = auto_contour(&op, self.policy(), N_ALPHA_CONTOUR)?;
        let report = validate_contour_default(&contour, &op);
        self.write("contour.csv", &contour.to_csv(CONTOUR_SAMPLES))?;
        self.write("crossings.csv", &crossings_csv(&crossings))?;
        self.write(
            "contour_report.txt",
            &format!("{}\n{}", contour.describe(), report.to_text()),
        )?;
        print!("{}", contour.describe());
        if !report.passed() {
            bail!("contour validation failed:\n{}", report.to_text());
        }
        Ok(())
    }

    pub fn solve_full(&self) -> Result<()> {
        let op = self.operator()?;
        let contour = self.contour(&op)?;
        let sol = solve_full_many(
            &op,
            &[self.source()?],
            &contour,
            &self.solve_config(self.config.cells, &contour),
        )?
        .remove(0);
        self.write("solution.csv", &sol.to_csv(op.mesh()))?;
        self.write("summary.txt", &sol.summary(op.mesh()))
    }

    fn read_phi(&self, path: &Path, mesh: &UnitCellMesh) -> Result<TraceVector> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("cannot read trace data {}", path.display()))?;
        let mut samples = Vec::new();
        for (i, record) in reader.deserialize::<(f64, f64, f64)>().enumerate() {
            let (x2, re, im) = record.with_context(|| format!("{}: bad row {}", path.display(), i + 1))?;
            samples.push((x2, Complex64::new(re, im)));
        }
        Ok(TraceVector::from_samples(mesh, &samples)?)
    }

    pub fn solve_half(&self) -> Result<()> {
        let op = self.operator()?;
        let contour = self.contour(&op)?;
        let hg = &self.config.halfguide;
        let config = self.solve_config((0, hg.n_max), &contour);
        let basis = SourceBasis::new(hg.p1, hg.r1)?;
        let (phi, truth) = match &hg.phi {
            PhiSource::File(p) => (self.read_phi(p, op.mesh())?, None),
            PhiSource::Manufactured => {
                let truth = solve_full_many(&op, &[self.source()?], &contour, &config)?.remove(0);
                (
                    TraceVector::from_field(op.mesh(), truth.cell(0).expect("cell 0")),
                    Some(truth),
                )
            }
        };
        let half = solve_half(&op, &phi, &basis, &hg.sweep, &contour, &config, hg.n_max)?;
        let mut summary = String::new();
        let _ = writeln!(summary, "M0 = {}", basis.len());
        let _ = writeln!(summary, "alpha = {:.16e}", half.alpha);
        let _ = writeln!(summary, "gamma1_mismatch = {:.16e}", half.gamma1_mismatch);
        if let Some(truth) = &truth {
            for n in 1..=hg.n_max {
                let e = relative_l2(
                    op.mesh(),
                    half.solution.cell(n).expect("cell"),
                    truth.cell(n).expect("cell"),
                );
                let _ = writeln!(summary, "relative_error[{n}] = {e:.16e}");
            }
        }
        summary.push_str(&half.solution.summary(op.mesh()));
        self.write("half_solution.csv", &half.solution.to_csv(op.mesh()))?;
        self.write("coefficients.csv", &half.coefficients_csv(&basis))?;
        self.write("sweep.csv", &half.sweep_csv())?;
        self.write("phi.csv", &phi.to_csv())?;
        self.write("summary.txt", &summary)?;
        println!("alpha = {:.1e}, mismatch = {:.3e}", half.alpha, half.gamma1_mismatch);
        Ok(())
    }

    pub fn oracle(&self) -> Result<()> {
        let o = &self.config.oracle;
        let source = self.source()?;
        let mut fields = Vec::with_capacity(o.eps.len());
        let mut report = String::new();
        for &eps in &o.eps {
            let op = self.operator_at(self.config.h, eps)?;
            let strip = TruncatedStrip::new(op.problem().mesh.clone(), o.r)?;
            let field = solve_absorbing(op.problem(), &source, &strip)?;
            let _ = writeln!(report, "residual[eps = {eps:e}] = {:.6e}", field.residual);
            fields.push((eps, field.cells));
        }
        let op = self.operator()?;
        let samples: Vec<(f64, &BTreeMap<i64, Vec<Complex64>>)> = fields.iter().map(|(e, c)| (*e, c)).collect();
        let extrap = extrapolate_lap(op.mesh(), &samples)?;
        let _ = writeln!(report, "ratio = {:.6e}", extrap.ratio);
        if let Some(w) = &extrap.warning {
            let _ = writeln!(report, "warning = {w}");
            eprintln!("warning: {w}");
        }
        let (lo, hi) = self.config.cells;
        let lo = lo.max(-(o.r as i64));
        let hi = hi.min(o.r as i64);
        if lo <= hi {
            let contour = self.contour(&op)?;
            let sol = solve_full_many(&op, &[source], &contour, &self.solve_config((lo, hi), &contour))?.remove(0);
            for n in lo..=hi {
                if let (Some(a), Some(b)) = (sol.cell(n), extrap.cells.get(&n)) {
                    let _ = writeln!(report, "relative_error[{n}] = {:.6e}", relative_l2(op.mesh(), a, b));
                }
            }
        }
        let mut csv = String::from("n,x1,x2,re_u,im_u\n");
        for (n, field) in &extrap.cells {
            for (x, u) in op.mesh().vertices.iter().zip(field) {
                let _ = writeln!(csv, "{n},{:.16e},{:.16e},{:.16e},{:.16e}", x[0], x[1], u.re, u.im);
            }
        }
        self.write("oracle.csv", &csv)?;
        self.write("oracle_report.txt", &report)?;
        print!("{report}");
        Ok(())
    }

    /// Errors on cell 0 against a reference solve, interpolated to the
    /// reference mesh. The contour is computed once at the configured `h`.
    pub fn convergence(&self) -> Result<()> {
        let c = &self.config.convergence;
        let source = self.source()?;
        let contour = self.contour(&self.operator()?)?;
        let cfg = |n: usize| SolveConfig::new(n, self.config.n0, (0, 0)).with_contour(contour.clone());
        let ref_op = self.operator_at(c.ref_h, 0.0)?;
        let reference = solve_full_many(&ref_op, &[source.clone()], &contour, &cfg(c.ref_n))?.remove(0);
        let reference = reference.cell(0).expect("cell 0");
        let mut csv = String::from("h,N,err\n");
        for &h in &c.h_list {
            let op = self.operator_at(h, 0.0)?;
            for &n in &c.n_list {
                let sol = solve_full_many(&op, &[source.clone()], &contour, &cfg(n))?.remove(0);
                let on_ref = interpolate_to(op.mesh(), sol.cell(0).expect("cell 0"), ref_op.mesh())?;
                let err = relative_l2(ref_op.mesh(), &on_ref, reference);
                let _ = writeln!(csv, "{h:.16e},{n},{err:.16e}");
                println!("h = {h}, N = {n}: {err:.3e}");
            }
        }
        self.write("convergence.csv", &csv)
    }
}
