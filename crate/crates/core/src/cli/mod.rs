//! Experiment runner behind the `causal-moments` binary.
//!
//! Each subcommand reads an [`ExperimentConfig`], runs the solvers and writes
//! CSV files (header row, comma separated, LF endings, shortest round-trip
//! number formatting) into an output directory. [`write_manifest`] adds a
//! `manifest.toml` echoing the configuration; it is the only file carrying a timestamp.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use rayon::prelude::*;

pub use config::{ExperimentConfig, FieldRoute, KernelConfig, SweepAxis, SweepConfig, SweepValue};

use crate::causal_solver::{solve_diagonal, DiagonalTrajectory, GridSpec};
use crate::error::{Error, Result};
use crate::excitation::{Kernel, KernelFamily};
use crate::ito_reference::{localization_residual, solve_ou_local_from};
use crate::monte_carlo::{simulate, Ensemble, EnsembleMoments, McConfig, MomentRatios};
use crate::oscillator::OscillatorParams;
use crate::two_time::{build_field, FieldMethod, TwoTimeField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Field,
    ItoCheck,
    Mc,
    Sweep,
    Table1,
    Fig12,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Field => "field",
            Subcommand::ItoCheck => "ito-check",
            Subcommand::Mc => "mc",
            Subcommand::Sweep => "sweep",
            Subcommand::Table1 => "table1",
            Subcommand::Fig12 => "fig12",
        }
    }
}

/// Files written by a run and one-line findings for the terminal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn write_csv<I>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

fn nums(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| fmt_num(v)).collect()
}

const DIAGONAL_HEADER: [&str; 6] = ["t", "m_x", "c_xx", "c_xy", "a_x", "cycles"];
const MC_HEADER: [&str; 7] = ["t", "m_x", "se_m_x", "c_xx", "se_c_xx", "c_xy", "se_c_xy"];

fn diagonal_rows(traj: &DiagonalTrajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..traj.len()).map(move |k| {
        let mut row = nums(&[traj.times[k], traj.m_x[k], traj.c_xx_diag[k], traj.c_xy_diag[k], traj.a_x[k]]);
        row.push(traj.cycles_per_step[traj.coarse_step_of(k)].to_string());
        row
    })
}

fn mc_rows(m: &EnsembleMoments) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..m.times.len()).map(move |k| nums(&[m.times[k], m.m_x[k], m.se_m_x[k], m.c_xx[k], m.se_c_xx[k], m.c_xy[k], m.se_c_xy[k]]))
}

fn with_prefix(prefix: &str, rows: impl Iterator<Item = Vec<String>>) -> impl Iterator<Item = Vec<String>> {
    let prefix = prefix.to_string();
    rows.map(move |r| std::iter::once(prefix.clone()).chain(r).collect())
}

/// Validates the config and runs one subcommand, writing its CSV files into `out`.
pub fn run(cmd: Subcommand, cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    if cmd == Subcommand::Sweep && cfg.sweep.is_none() {
        return Err(Error::config("sweep", "the sweep subcommand requires a [sweep] section"));
    }
    std::fs::create_dir_all(out)?;
    match cmd {
        Subcommand::Solve => run_solve(cfg, out),
        Subcommand::Field => run_field(cfg, out),
        Subcommand::ItoCheck => run_ito_check(cfg, out),
        Subcommand::Mc => run_mc(cfg, out),
        Subcommand::Sweep => run_sweep(cfg, out),
        Subcommand::Table1 => run_table1(cfg, out),
        Subcommand::Fig12 => run_fig12(cfg, out),
    }
}

fn solve(params: &OscillatorParams, kernel: &Kernel, cfg: &ExperimentConfig, grid: &GridSpec) -> Result<DiagonalTrajectory> {
    solve_diagonal(params, kernel, &cfg.init, grid, &cfg.solver).map_err(|e| e.in_stage("solve"))
}

fn run_solve(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let kernel = cfg.kernel.build()?;
    let traj = solve(&cfg.oscillator, &kernel, cfg, &cfg.grid)?;
    let mut s = RunSummary::default();
    s.files.push(write_csv(out, "diagonal.csv", &DIAGONAL_HEADER, diagonal_rows(&traj))?);
    let k = traj.len() - 1;
    s.notes.push(format!(
        "t = {}: m_x = {:.6e}, C_xx = {:.6e}, C_xy = {:.6e}; at most {} cycles per coarse step",
        traj.times[k],
        traj.m_x[k],
        traj.c_xx_diag[k],
        traj.c_xy_diag[k],
        traj.cycles_per_step.iter().max().copied().unwrap_or(0)
    ));
    Ok(s)
}

/// Property checks of a finished field against its trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldReport {
    pub symmetry: f64,
    pub diagonal_c_xx: f64,
    pub diagonal_c_xy: f64,
    pub initial_row: f64,
    pub cauchy_schwarz_excess: f64,
}

impl FieldReport {
    pub fn new(field: &TwoTimeField, traj: &DiagonalTrajectory, sigma2: f64) -> Self {
        let n = field.times.len();
        let max = |f: &dyn Fn(usize) -> f64| (0..n).map(f).fold(0.0, f64::max);
        Self {
            symmetry: field.c_xx.max_asymmetry(),
            diagonal_c_xx: max(&|k| (field.c_xx.get(k, k) - traj.c_xx_diag[k]).abs()),
            diagonal_c_xy: max(&|k| (field.c_xy.get(k, k) - traj.c_xy_diag[k]).abs()),
            initial_row: max(&|k| field.c_xy.get(0, k).abs()),
            cauchy_schwarz_excess: field.cauchy_schwarz_excess(sigma2),
        }
    }
}

fn method_name(m: FieldMethod) -> &'static str {
    match m {
        FieldMethod::Integral => "integral",
        FieldMethod::Ode => "ode",
    }
}

fn run_field(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let kernel = cfg.kernel.build()?;
    let traj = solve(&cfg.oscillator, &kernel, cfg, &cfg.grid)?;
    let mut s = RunSummary::default();
    s.files.push(write_csv(out, "diagonal.csv", &DIAGONAL_HEADER, diagonal_rows(&traj))?);
    let stride = cfg.outputs.field_stride;
    let mut report_rows = Vec::new();
    let mut fields = Vec::new();
    for method in cfg.outputs.field_method.methods() {
        let field = build_field(&traj, &kernel, &cfg.oscillator, &cfg.init, method, Some(&cfg.solver))
            .map_err(|e| e.in_stage("field"))?;
        let name = method_name(method);
        let idx: Vec<usize> = (0..field.times.len()).step_by(stride).collect();
        // Full grid for C_xy; C_xx is symmetric and written on t >= s only.
        let rows = idx.iter().flat_map(|&k| {
            let (field, idx) = (&field, &idx);
            idx.iter().map(move |&l| {
                let mut row = nums(&[field.times[k], field.times[l], field.c_xy.get(k, l)]);
                row.push(if l <= k { fmt_num(field.c_xx.get(k, l)) } else { String::new() });
                row
            })
        });
        s.files.push(write_csv(out, &format!("field_{name}.csv"), &["t", "s", "c_xy", "c_xx"], rows)?);
        let report = FieldReport::new(&field, &traj, kernel.sigma2());
        for (metric, v) in [
            ("symmetry", report.symmetry),
            ("diagonal_c_xx", report.diagonal_c_xx),
            ("diagonal_c_xy", report.diagonal_c_xy),
            ("initial_row", report.initial_row),
            ("cauchy_schwarz_excess", report.cauchy_schwarz_excess),
        ] {
            report_rows.push(vec![name.to_string(), metric.to_string(), fmt_num(v)]);
        }
        s.notes.push(format!(
            "{name}: {n}x{n} grid, symmetry {:.1e}, diagonal {:.1e}, Cauchy-Schwarz excess {:.1e}",
            report.symmetry,
            report.diagonal_c_xx,
            report.cauchy_schwarz_excess,
            n = field.times.len()
        ));
        fields.push(field);
    }
    if let [a, b] = &fields[..] {
        let d = a.c_xy.max_abs_diff(&b.c_xy).max(a.c_xx.max_abs_diff(&b.c_xx));
        report_rows.push(vec!["both".into(), "route_difference".into(), fmt_num(d)]);
        s.notes.push(format!("integral vs ode routes differ by at most {d:.2e}"));
    }
    let section = fields[0].times.iter().zip(&fields[0].c_x0x).map(|(&t, &c)| nums(&[t, c]));
    s.files.push(write_csv(out, "initial_section.csv", &["s", "c_x0x"], section)?);
    s.files.push(write_csv(out, "field_report.csv", &["method", "metric", "value"], report_rows)?);
    Ok(s)
}

fn run_ito_check(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let kernel = cfg.kernel.build()?;
    let traj = solve(&cfg.oscillator, &kernel, cfg, &cfg.grid)?;
    let local = solve_ou_local_from(&cfg.oscillator, &kernel, &cfg.init, cfg.grid.t0, cfg.grid.t_end, &cfg.solver)
        .map_err(|e| e.in_stage("ito-check"))?;
    let r = localization_residual(&traj, &local).map_err(|e| e.in_stage("ito-check"))?;
    let mut s = RunSummary::default();
    let rows = traj.times.iter().map(|&t| {
        let [m, cxy, cxx] = local.sample(t);
        nums(&[t, m, cxy, cxx])
    });
    s.files.push(write_csv(out, "ito_local.csv", &["t", "m_x", "c_xy", "c_xx"], rows)?);
    let res = [("m_x", r.m_x), ("c_xy", r.c_xy), ("c_xx", r.c_xx)];
    s.files.push(write_csv(
        out,
        "ito_residual.csv",
        &["moment", "max_abs"],
        res.iter().map(|(n, v)| vec![n.to_string(), fmt_num(*v)]),
    )?);
    s.notes.push(format!("localization residual: m_x {:.2e}, C_xy {:.2e}, C_xx {:.2e}", r.m_x, r.c_xy, r.c_xx));
    Ok(s)
}

fn ratio_row(kappa3: f64, r: Option<&MomentRatios>) -> Vec<String> {
    let mut row = vec![fmt_num(kappa3)];
    match r {
        Some(r) => row.extend(nums(&[r.r13, r.r31, r.se_r13, r.se_r31])),
        None => row.extend(std::iter::repeat_n(fmt_num(f64::NAN), 4)),
    }
    row
}

const RATIO_HEADER: [&str; 5] = ["kappa3", "r13", "r31", "se_r13", "se_r31"];

fn run_mc(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let kernel = cfg.kernel.build()?;
    let mc = cfg.mc.clone().ok_or_else(|| Error::config("mc", "the mc subcommand requires an [mc] section"))?;
    let ens = simulate(&cfg.oscillator, &kernel, &cfg.init, &mc).map_err(|e| e.in_stage("mc"))?;
    let mut s = RunSummary::default();
    let moments = ens.diagonal_moments();
    s.files.push(write_csv(out, "mc.csv", &MC_HEADER, mc_rows(&moments))?);
    let k = moments.times.len() - 1;
    s.notes.push(format!(
        "{} samples; t = {}: C_xx = {:.4e} ± {:.1e}, C_xy = {:.4e} ± {:.1e}",
        ens.n_samples, moments.times[k], moments.c_xx[k], moments.se_c_xx[k], moments.c_xy[k], moments.se_c_xy[k]
    ));
    if !mc.slices.is_empty() {
        let mut rows = Vec::new();
        for &s_time in &mc.slices {
            let sl = ens.two_time_slice(s_time).map_err(|e| e.in_stage("mc"))?;
            for (k, &t) in ens.times.iter().enumerate() {
                rows.push(nums(&[sl.s, t, sl.c_xy[k], sl.se_c_xy[k], sl.c_xx[k], sl.se_c_xx[k]]));
            }
        }
        s.files.push(write_csv(out, "mc_slices.csv", &["s", "t", "c_xy", "se_c_xy", "c_xx", "se_c_xx"], rows)?);
    }
    if let Some(t) = mc.ratio_time {
        let r = ens.moment_ratios(t).map_err(|e| e.in_stage("mc"))?;
        s.files.push(write_csv(out, "ratios.csv", &RATIO_HEADER, [ratio_row(cfg.oscillator.kappa3, Some(&r))])?);
        s.notes.push(format!("t = {}: r13 = {:.3} ± {:.3}, r31 = {:.3} ± {:.3}", r.t, r.r13, r.se_r13, r.r31, r.se_r31));
    }
    if let Some(spec) = &mc.histogram {
        let t = mc.histogram_time.unwrap_or(mc.grid.t_end);
        let h = ens.re_pdf_histogram(t, spec).map_err(|e| e.in_stage("mc"))?;
        let ny = h.y_edges.len() - 1;
        let rows = (0..h.mass.len()).map(|b| {
            let (ix, iy) = (b / ny, b % ny);
            nums(&[h.x_edges[ix], h.x_edges[ix + 1], h.y_edges[iy], h.y_edges[iy + 1], h.mass[b], h.density(ix, iy)])
        });
        s.files.push(write_csv(out, "histogram.csv", &["x_lo", "x_hi", "y_lo", "y_hi", "mass", "density"], rows)?);
        s.notes.push(format!("histogram at t = {}: {} of {} samples in range", h.t, h.counted, ens.n_samples));
    }
    Ok(s)
}

/// Direction of a sequence in listed order.
pub fn trend(values: &[f64]) -> &'static str {
    let w: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if w.is_empty() {
        "single point"
    } else if w.iter().all(|&d| d > 0.0) {
        "strictly increasing"
    } else if w.iter().all(|&d| d < 0.0) {
        "strictly decreasing"
    } else {
        "not monotone"
    }
}

struct SweepPoint {
    traj: Result<DiagonalTrajectory>,
    mc: Option<Result<EnsembleMoments>>,
}

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let sweep = cfg.sweep.as_ref().expect("checked by run");
    let axis = sweep.axis.name();
    let points: Vec<SweepPoint> = sweep
        .values
        .par_iter()
        .map(|&v| {
            let setup = sweep.apply(cfg, v).and_then(|(p, k)| Ok((p, k.build()?)));
            match setup {
                Err(e) => SweepPoint { traj: Err(e), mc: None },
                Ok((params, kernel)) => SweepPoint {
                    traj: solve(&params, &kernel, cfg, &cfg.grid),
                    mc: cfg.mc.as_ref().filter(|_| sweep.mc).map(|mc| {
                        simulate(&params, &kernel, &cfg.init, mc).map(|e| e.diagonal_moments()).map_err(|e| e.in_stage("mc"))
                    }),
                },
            }
        })
        .collect();

    let mut s = RunSummary::default();
    let mut long = Vec::new();
    let mut summary = Vec::new();
    let mut mc_long = Vec::new();
    let (mut ends_xx, mut ends_xy) = (Vec::new(), Vec::new());
    for (&v, p) in sweep.values.iter().zip(&points) {
        let key = v.to_string();
        match &p.traj {
            Ok(traj) => {
                long.extend(with_prefix(&key, diagonal_rows(traj)));
                let k = traj.len() - 1;
                ends_xx.push(traj.c_xx_diag[k]);
                ends_xy.push(traj.c_xy_diag[k]);
                let mut row = vec![key.clone(), "ok".into()];
                row.extend(nums(&[traj.m_x[k], traj.c_xx_diag[k], traj.c_xy_diag[k]]));
                row.push(String::new());
                summary.push(row);
            }
            Err(e) => {
                log::warn!("sweep point {axis} = {key} failed: {e}");
                s.notes.push(format!("{axis} = {key}: failed ({e})"));
                let mut row = vec![key.clone(), "failed".into(), String::new(), String::new(), String::new()];
                row.push(e.to_string());
                summary.push(row);
            }
        }
        match &p.mc {
            Some(Ok(m)) => mc_long.extend(with_prefix(&key, mc_rows(m))),
            Some(Err(e)) => s.notes.push(format!("{axis} = {key}: Monte Carlo failed ({e})")),
            None => {}
        }
    }
    let mut header = vec![axis];
    header.extend(DIAGONAL_HEADER);
    s.files.push(write_csv(out, "sweep.csv", &header, long)?);
    s.files.push(write_csv(out, "sweep_summary.csv", &[axis, "status", "m_x_end", "c_xx_end", "c_xy_end", "error"], summary)?);
    if sweep.mc {
        let mut header = vec![axis];
        header.extend(MC_HEADER);
        s.files.push(write_csv(out, "sweep_mc.csv", &header, mc_long)?);
    }
    if ends_xx.len() == sweep.values.len() {
        s.notes.push(format!("final C_xx is {} along the listed {axis} values", trend(&ends_xx)));
        s.notes.push(format!("final C_xy is {} along the listed {axis} values", trend(&ends_xy)));
    }
    Ok(s)
}

/// Pools `replicates` ensembles seeded `seed, seed + 1, …` into one.
pub fn pooled_ensemble(
    params: &OscillatorParams,
    kernel: &Kernel,
    cfg: &ExperimentConfig,
    mc: &McConfig,
    replicates: usize,
) -> Result<Ensemble> {
    let parts = (0..replicates as u64)
        .map(|r| simulate(params, kernel, &cfg.init, &McConfig { seed: mc.seed.wrapping_add(r), ..mc.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::merge(parts)
}

fn run_table1(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let kernel = cfg.kernel.build()?;
    let mc = cfg.mc_or_default();
    let t = cfg.table1.time.or(mc.ratio_time).unwrap_or(mc.grid.t_end);
    let mut s = RunSummary::default();
    let mut rows = Vec::new();
    for &kappa3 in &cfg.table1.kappa3 {
        let params = OscillatorParams { kappa3, ..cfg.oscillator };
        let ens = pooled_ensemble(&params, &kernel, cfg, &mc, cfg.table1.replicates).map_err(|e| e.in_stage("table1"))?;
        match ens.moment_ratios(t) {
            Ok(r) => {
                s.notes.push(format!(
                    "kappa3 = {kappa3}: r13 = {:.3} ± {:.3}, r31 = {:.3} ± {:.3} ({} samples, t = {})",
                    r.r13, r.se_r13, r.r31, r.se_r31, ens.n_samples, r.t
                ));
                rows.push(ratio_row(kappa3, Some(&r)));
            }
            Err(e @ Error::DegenerateDenominator { .. }) => {
                s.notes.push(format!("kappa3 = {kappa3}: {e}"));
                rows.push(ratio_row(kappa3, None));
            }
            Err(e) => return Err(e.in_stage("table1")),
        }
    }
    s.files.push(write_csv(out, "ratios.csv", &RATIO_HEADER, rows)?);
    Ok(s)
}

/// Long-time variance under each family, nonlinearity and correlation time.
fn run_fig12(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let f = &cfg.fig12;
    let mut cases = Vec::new();
    for &family in &f.families {
        for &mu3 in &f.mu3 {
            for &tau in &f.tau_corr {
                cases.push((family, mu3, tau));
            }
        }
    }
    let grid = GridSpec { t_end: f.t_end, coarse_step: None, ..cfg.grid };
    let results: Vec<Result<(f64, DiagonalTrajectory)>> = cases
        .par_iter()
        .map(|&(family, mu3, tau)| {
            let kernel = Kernel::with_correlation_time(family, cfg.kernel.sigma2, tau, 0.0, cfg.kernel.mean)?;
            let params = OscillatorParams { mu3, ..cfg.oscillator };
            Ok((kernel.a(), solve(&params, &kernel, cfg, &grid)?))
        })
        .collect();
    let mut rows = Vec::new();
    let mut by_case = Vec::new();
    for (&(family, mu3, tau), r) in cases.iter().zip(results) {
        let (a, traj) = r.map_err(|e| e.in_stage("fig12"))?;
        let k = traj.len() - 1;
        let mut row = vec![family.name().to_string()];
        row.extend(nums(&[mu3, tau, a, traj.c_xx_diag[k], traj.c_xy_diag[k]]));
        rows.push(row);
        by_case.push(((family, mu3, tau), traj.c_xx_diag[k]));
    }
    let mut s = RunSummary::default();
    s.files.push(write_csv(out, "fig12.csv", &["family", "mu3", "tau_corr", "a", "c_xx_end", "c_xy_end"], rows)?);
    let lookup = |family: KernelFamily, mu3: f64, tau: f64| {
        by_case.iter().find(|((fa, m, t), _)| *fa == family && *m == mu3 && *t == tau).map(|(_, v)| *v)
    };
    for &mu3 in &f.mu3 {
        for &tau in &f.tau_corr {
            if let (Some(ou), Some(gf)) = (lookup(KernelFamily::Ou, mu3, tau), lookup(KernelFamily::GaussianFilter, mu3, tau)) {
                s.notes.push(format!("mu3 = {mu3}, tau = {tau}: Gf/OU variance ratio {:.4}", gf / ou));
            }
        }
    }
    Ok(s)
}

/// Writes `manifest.toml`: run metadata followed by the configuration echo.
pub fn write_manifest(
    out: &Path,
    cmd: Subcommand,
    cfg: &ExperimentConfig,
    summary: &RunSummary,
    threads: usize,
    elapsed_s: f64,
) -> Result<PathBuf> {
    let started = SystemTime::now().duration_since(SystemTime::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let files: Vec<String> = summary
        .files
        .iter()
        .map(|p| format!("{:?}", p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()))
        .collect();
    let mut text = String::from("[run]\n");
    text += &format!("subcommand = \"{}\"\n", cmd.name());
    text += &format!("version = \"{}\"\n", env!("CARGO_PKG_VERSION"));
    text += &format!("seed = {}\n", cfg.mc_or_default().seed);
    text += &format!("threads = {threads}\n");
    text += &format!("finished_unix = {started}\n");
    text += &format!("elapsed_s = {elapsed_s}\n");
    text += &format!("files = [{}]\n\n", files.join(", "));
    text += "[config]\n";
    let echo = cfg.to_toml_string()?;
    // Nest the echoed tables under [config].
    for line in echo.lines() {
        if let Some(rest) = line.strip_prefix('[') {
            let open = if rest.starts_with('[') { "[[" } else { "[" };
            text += &format!("{open}config.{}\n", rest.trim_start_matches('['));
        } else {
            text += line;
            text += "\n";
        }
    }
    let path = out.join("manifest.toml");
    std::fs::write(&path, text)?;
    Ok(path)
}
