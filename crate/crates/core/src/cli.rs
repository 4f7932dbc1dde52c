//! Command-line driver: each subcommand reads the artifacts of the previous
//! stage from the output directory and writes its own.
//!
//! Layout of the output directory:
//!
//! ```text
//! runs.json                 run ids and per-run scenario metadata
//! trajectories.csv          full trajectories incl. camera (ingest schema)
//! truth/<run>.{values,mask}.csv
//! partial/<run>.{values,mask}.csv
//! quartets.csv
//! reference_fd.json         measured (and, for generated runs, configured) FD
//! calibration.json
//! estimates/<run>.json
//! report.csv, summary.json, *.svg
//! gridsearch/*.csv
//! ```

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibrate::{self, CalibrationResult};
use crate::config::RunConfig;
use crate::diagram::SpaceTimeDiagram;
use crate::discretize::{self, read_matrix_csv, write_atomic, write_matrix_csv};
use crate::error::{Error, Result};
use crate::estimate::{self, EstimationResult};
use crate::evaluate::{self, EvalCase, EvalReport};
use crate::fd::FdParams;
use crate::gridsearch;
use crate::ingest::{self, fmt_float, Run};
use crate::matrix::{BoundaryVector, DensityMatrix, Quartet};
use crate::scenario::{self, CameraSpeed, Signal};
use crate::seed;
use crate::svg;

const STAGE_CALIBRATE: u64 = 1;
const STAGE_ESTIMATE: u64 = 2;
const STAGE_GRIDSEARCH: u64 = 3;

#[derive(Debug, Parser)]
#[command(name = "linkstate", version, about = "Traffic density reconstruction from moving-camera observations")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_name = "DIR", env = "LINKSTATE_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default configuration, or write it to PATH.
    ConfigInit { path: Option<PathBuf> },
    /// Simulate (or ingest) trajectories and ground-truth matrices.
    Generate,
    /// Aggregate trajectories into partial and ground-truth matrices.
    Discretize,
    /// Calibrate the fundamental diagram on density quartets.
    Calibrate,
    /// Estimate boundary conditions and complete every partial matrix.
    Estimate,
    /// Score estimates and baselines; write report, summary and plots.
    Evaluate,
    /// Run the configured hyperparameter grid searches.
    Gridsearch,
    /// Every stage in order.
    Pipeline,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::ConfigInit { path } = &cli.command {
        let text = RunConfig::default().to_toml();
        return match path {
            Some(p) => write_atomic(p, text.as_bytes()),
            None => {
                print!("{text}");
                Ok(())
            }
        };
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    pool.install(|| match cli.command {
        Command::ConfigInit { .. } => unreachable!(),
        Command::Generate => cmd_generate(&cfg),
        Command::Discretize => cmd_discretize(&cfg),
        Command::Calibrate => cmd_calibrate(&cfg).map(|_| ()),
        Command::Estimate => cmd_estimate(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg).map(|_| ()),
        Command::Gridsearch => cmd_gridsearch(&cfg),
        Command::Pipeline => cmd_pipeline(&cfg).map(|_| ()),
    })
}

/// Per-run metadata recorded by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<Signal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFd {
    /// Triangular FD measured from the ground-truth trajectories.
    pub measured: FdParams,
    /// FD implied by the simulator settings, for generated runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configured: Option<FdParams>,
}

impl ReferenceFd {
    /// FD used for the known-value baseline.
    pub fn baseline(&self) -> FdParams {
        self.configured.unwrap_or(self.measured)
    }
}

/// Paths of every artifact below an output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs.json")
    }
    pub fn trajectories(&self) -> PathBuf {
        self.root.join("trajectories.csv")
    }
    pub fn matrix(&self, kind: &str, run: &str) -> (PathBuf, PathBuf) {
        let dir = self.root.join(kind);
        (dir.join(format!("{run}.values.csv")), dir.join(format!("{run}.mask.csv")))
    }
    pub fn quartets(&self) -> PathBuf {
        self.root.join("quartets.csv")
    }
    pub fn reference_fd(&self) -> PathBuf {
        self.root.join("reference_fd.json")
    }
    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration.json")
    }
    pub fn estimate(&self, run: &str) -> PathBuf {
        self.root.join("estimates").join(format!("{run}.json"))
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
    pub fn gridsearch(&self, name: &str) -> PathBuf {
        self.root.join("gridsearch").join(format!("{name}.csv"))
    }
}

fn progress(stage: &str, msg: impl AsRef<str>) {
    eprintln!("[{stage}] {}", msg.as_ref());
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

fn read_matrix(cfg: &RunConfig, kind: &str, run: &str) -> Result<DensityMatrix> {
    let (v, m) = Layout::new(&cfg.out_dir).matrix(kind, run);
    require(&v)?;
    require(&m)?;
    read_matrix_csv(&cfg.grid, &v, &m)
}

fn load_runs_of(cfg: &RunConfig) -> Result<(Vec<RunInfo>, Vec<Run>)> {
    let layout = Layout::new(&cfg.out_dir);
    let infos: Vec<RunInfo> = read_json(&layout.runs())?;
    require(&layout.trajectories())?;
    let runs = ingest::load_runs(&layout.trajectories(), &cfg.grid, cfg.fov())?;
    let ids: Vec<&str> = runs.iter().map(|r| r.run_id.as_str()).collect();
    if ids.len() != infos.len() || infos.iter().zip(&ids).any(|(i, id)| i.run_id != *id) {
        return Err(Error::Shape(format!(
            "{} and {} list different runs",
            layout.runs().display(),
            layout.trajectories().display()
        )));
    }
    Ok((infos, runs))
}

fn run_ids(cfg: &RunConfig) -> Result<Vec<String>> {
    let infos: Vec<RunInfo> = read_json(&Layout::new(&cfg.out_dir).runs())?;
    Ok(infos.into_iter().map(|i| i.run_id).collect())
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let (infos, runs) = if let Some(batch) = &cfg.scenario {
        let configs = batch.configs(cfg.grid, cfg.seed);
        progress("generate", format!("simulating {} scenarios", configs.len()));
        let bundles = scenario::generate_batch(&configs)?;
        let width = configs.len().saturating_sub(1).to_string().len().max(3);
        let mut infos = Vec::new();
        let mut runs = Vec::new();
        for (n, (c, b)) in configs.iter().zip(bundles).enumerate() {
            let run_id = format!("run_{n:0width$}");
            let camera_speed = match &c.camera_speed {
                CameraSpeed::Constant(v) => Some(*v),
                CameraSpeed::Piecewise(_) => None,
            };
            infos.push(RunInfo {
                run_id: run_id.clone(),
                demand: Some(c.demand),
                camera_speed,
                signal: c.signal,
            });
            runs.push(Run {
                run_id,
                diagram: b.diagram,
            });
        }
        (infos, runs)
    } else {
        let ing = cfg.ingest.as_ref().expect("validated config");
        require(&ing.path)?;
        progress("generate", format!("ingesting {}", ing.path.display()));
        let runs = ingest::load_runs(&ing.path, &cfg.grid, ing.fov)?;
        if runs.is_empty() {
            return Err(Error::Empty(format!("{} contains no runs", ing.path.display())));
        }
        let infos = runs
            .iter()
            .map(|r| RunInfo {
                run_id: r.run_id.clone(),
                demand: None,
                camera_speed: None,
                signal: None,
            })
            .collect();
        (infos, runs)
    };
    ingest::save_runs(&runs, &layout.trajectories())?;
    write_json(&layout.runs(), &infos)?;
    // ground truth from the file just written, so every later stage sees
    // exactly the same trajectories
    let reread = ingest::load_runs(&layout.trajectories(), &cfg.grid, cfg.fov())?;
    reread.par_iter().try_for_each(|r| {
        let truth = discretize::aggregate(&r.diagram, &cfg.grid, false)?;
        let (v, m) = layout.matrix("truth", &r.run_id);
        write_matrix_csv(&truth, &v, &m)
    })?;
    progress("generate", format!("wrote {} runs to {}", runs.len(), layout.root.display()));
    Ok(())
}

fn quartets_csv(qs: &[Quartet]) -> String {
    let mut out = String::from("k_up,k_mid,k_down,k_next\n");
    for q in qs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_float(q.k_up),
            fmt_float(q.k_mid),
            fmt_float(q.k_down),
            fmt_float(q.k_next)
        );
    }
    out
}

pub fn cmd_discretize(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let (_, runs) = load_runs_of(cfg)?;
    progress("discretize", format!("aggregating {} runs", runs.len()));
    let partials = runs
        .par_iter()
        .map(|r| {
            let truth = discretize::aggregate(&r.diagram, &cfg.grid, false)?;
            let partial = discretize::aggregate_masked(&r.diagram, &cfg.grid, cfg.discretize.min_coverage)?;
            let (v, m) = layout.matrix("truth", &r.run_id);
            write_matrix_csv(&truth, &v, &m)?;
            let (v, m) = layout.matrix("partial", &r.run_id);
            write_matrix_csv(&partial, &v, &m)?;
            Ok(partial)
        })
        .collect::<Result<Vec<_>>>()?;
    let qs = discretize::extract_quartets(&partials)?;
    write_atomic(&layout.quartets(), quartets_csv(&qs).as_bytes())?;
    let diagrams: Vec<&SpaceTimeDiagram> = runs.iter().map(|r| &r.diagram).collect();
    let configured = match &cfg.scenario {
        Some(b) => Some(b.configs(cfg.grid, cfg.seed)[0].true_fd()?),
        None => None,
    };
    let reference = ReferenceFd {
        measured: scenario::measure_fd_from_diagrams(&diagrams, cfg.k_j())?,
        configured,
    };
    write_json(&layout.reference_fd(), &reference)?;
    let observed: usize = partials.iter().map(DensityMatrix::observed_count).sum();
    progress(
        "discretize",
        format!("{observed} observed cells, {} quartets", qs.len()),
    );
    Ok(())
}

fn load_partials(cfg: &RunConfig, ids: &[String]) -> Result<Vec<DensityMatrix>> {
    ids.iter().map(|id| read_matrix(cfg, "partial", id)).collect()
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationResult> {
    let layout = Layout::new(&cfg.out_dir);
    let ids = run_ids(cfg)?;
    let qs = discretize::extract_quartets(&load_partials(cfg, &ids)?)?;
    progress("calibrate", format!("{} quartets", qs.len()));
    let res = calibrate::calibrate_fd(
        &qs,
        &cfg.grid,
        cfg.k_j(),
        &cfg.calibration,
        seed::derive(cfg.seed, STAGE_CALIBRATE),
    )?;
    write_json(&layout.calibration(), &res)?;
    progress(
        "calibrate",
        format!("v_f = {:.4} m/s, k_c = {:.5} veh/m, rmse = {:.3e}", res.fd.v_f(), res.fd.k_c(), res.rmse),
    );
    Ok(res)
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let ids = run_ids(cfg)?;
    let cal: CalibrationResult = read_json(&layout.calibration())?;
    let partials = load_partials(cfg, &ids)?;
    let base = seed::derive(cfg.seed, STAGE_ESTIMATE);
    let done = AtomicUsize::new(0);
    let total = ids.len();
    ids.par_iter().zip(&partials).enumerate().try_for_each(|(n, (id, p))| {
        let res = if p.observed_count() == 0 {
            progress("estimate", format!("{id}: no observed cells, skipped"));
            None
        } else {
            Some(estimate::estimate_density(p, &cal.fd, &cfg.estimation, seed::derive(base, n as u64))?)
        };
        write_json(&layout.estimate(id), &res)?;
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if k == total || k.is_multiple_of(10) {
            progress("estimate", format!("{k}/{total}"));
        }
        Ok(())
    })
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let layout = Layout::new(&cfg.out_dir);
    let (_, runs) = load_runs_of(cfg)?;
    let reference: ReferenceFd = read_json(&layout.reference_fd())?;
    let fd_base = reference.baseline();
    struct Scored {
        run_id: String,
        truth: DensityMatrix,
        estimate: DensityMatrix,
        baseline: DensityMatrix,
        mask: evaluate::EvalMask,
        camera_speed: f64,
    }
    let mut scored = Vec::new();
    for r in &runs {
        let est: Option<EstimationResult> = read_json(&layout.estimate(&r.run_id))?;
        let Some(est) = est else {
            progress("evaluate", format!("{}: no estimate, excluded", r.run_id));
            continue;
        };
        let truth = read_matrix(cfg, "truth", &r.run_id)?;
        let mask = evaluate::camera_mask(&r.diagram, &cfg.grid);
        if mask.count() == 0 {
            progress("evaluate", format!("{}: empty evaluation mask, excluded", r.run_id));
            continue;
        }
        let bv = BoundaryVector::from_edges(&truth, fd_base.k_j())?;
        let baseline = estimate::baseline_known(&cfg.grid, &fd_base, &bv)?;
        scored.push(Scored {
            run_id: r.run_id.clone(),
            truth,
            estimate: est.completed,
            baseline,
            mask,
            camera_speed: r.diagram.mean_camera_speed(),
        });
    }
    let cases: Vec<EvalCase<'_>> = scored
        .iter()
        .map(|s| EvalCase {
            run_id: &s.run_id,
            truth: &s.truth,
            estimate: &s.estimate,
            baseline: &s.baseline,
            mask: &s.mask,
            camera_speed: s.camera_speed,
        })
        .collect();
    let report = evaluate::batch_report(&cases)?;
    report.write_csv(&layout.report())?;
    report.write_summary(&layout.summary())?;
    write_plots(&layout, &report)?;
    let s = &report.summary;
    progress(
        "evaluate",
        format!(
            "{} scenarios: GA rmse {:.4} +/- {:.4}, baseline {:.4} +/- {:.4}",
            s.scenarios, s.ga.mean, s.ga.std, s.baseline.mean, s.baseline.std
        ),
    );
    Ok(report)
}

fn write_plots(layout: &Layout, report: &EvalReport) -> Result<()> {
    let ga: Vec<f64> = report.rows.iter().map(|r| r.ga_rmse).collect();
    let base: Vec<f64> = report.rows.iter().map(|r| r.baseline_rmse).collect();
    let dens: Vec<f64> = report.rows.iter().map(|r| r.mean_density).collect();
    let speed: Vec<f64> = report.rows.iter().map(|r| r.camera_speed).collect();
    let s = &report.summary;
    let files = [
        ("rmse_hist.svg", svg::histogram(&ga, 20, "GA estimate RMSE", "masked RMSE (veh/m)")),
        (
            "baseline_rmse_hist.svg",
            svg::histogram(&base, 20, "Known-value baseline RMSE", "masked RMSE (veh/m)"),
        ),
        (
            "rmse_vs_density.svg",
            svg::scatter(&dens, &ga, s.ga_vs_density.as_ref(), "GA RMSE vs density", "mean density (veh/m)", "RMSE (veh/m)"),
        ),
        (
            "rmse_vs_camera_speed.svg",
            svg::scatter(
                &speed,
                &ga,
                s.ga_vs_camera_speed.as_ref(),
                "GA RMSE vs camera speed",
                "camera speed (m/s)",
                "RMSE (veh/m)",
            ),
        ),
    ];
    for (name, body) in files {
        write_atomic(&layout.root.join(name), body.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_gridsearch(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let gs = &cfg.gridsearch;
    let ids = run_ids(cfg)?;
    let partials = load_partials(cfg, &ids)?;
    let base = seed::derive(cfg.seed, STAGE_GRIDSEARCH);
    let mut searches = Vec::new();
    if gs.fd {
        searches.push(("fd", gridsearch::fd_search(&cfg.calibration, seed::derive(base, 0))));
    }
    if gs.boundary_phase_one {
        searches.push(("boundary_phase1", gridsearch::boundary_phase_one(&cfg.estimation, seed::derive(base, 1))));
    }
    if gs.boundary_phase_two {
        searches.push(("boundary_phase2", gridsearch::boundary_phase_two(&cfg.estimation, seed::derive(base, 2))));
    }
    for (_, s) in &mut searches {
        s.repetitions = gs.repetitions;
        s.max_points = gs.max_points;
        s.validate()?;
    }
    let observed: Vec<DensityMatrix> = partials.iter().filter(|p| p.observed_count() > 0).cloned().collect();
    let n = if gs.boundary_diagrams == 0 {
        observed.len()
    } else {
        gs.boundary_diagrams.min(observed.len())
    };
    for (name, s) in &searches {
        progress("gridsearch", format!("{name}: {} points", s.lattice_size()));
        let table = if *name == "fd" {
            let qs = discretize::extract_quartets(&partials)?;
            gridsearch::search_fd(&qs, &cfg.grid, cfg.k_j(), s)?
        } else {
            let cal: CalibrationResult = read_json(&layout.calibration())?;
            gridsearch::search_boundary(&observed[..n], &cal.fd, s)?
        };
        table.write_csv(&layout.gridsearch(name))?;
    }
    Ok(())
}

pub fn cmd_pipeline(cfg: &RunConfig) -> Result<EvalReport> {
    cmd_generate(cfg)?;
    cmd_discretize(cfg)?;
    cmd_calibrate(cfg)?;
    cmd_estimate(cfg)?;
    let report = cmd_evaluate(cfg)?;
    if cfg.gridsearch.in_pipeline {
        cmd_gridsearch(cfg)?;
    }
    Ok(report)
}
