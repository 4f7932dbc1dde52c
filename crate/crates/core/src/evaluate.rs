//! Scoring of completed density fields against ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagram::SpaceTimeDiagram;
use crate::discretize::write_atomic;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::matrix::DensityMatrix;

/// Cells behind the camera: cell `(i, j)` is included once the camera has
/// left the cell's spatial extent (reached `x <= i dx`) no later than the end
/// of the cell's time interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalMask {
    alpha: usize,
    beta: usize,
    cells: Vec<bool>,
}

impl EvalMask {
    pub fn from_cells(alpha: usize, beta: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != alpha * beta {
            return Err(Error::Shape(format!(
                "mask has {} cells, expected {alpha}x{beta}",
                cells.len()
            )));
        }
        Ok(EvalMask { alpha, beta, cells })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.beta + j]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }
}

/// Earliest-time minimum of the camera position over `[0, t_end]`.
fn camera_min_until(diagram: &SpaceTimeDiagram, t_end: f64) -> f64 {
    let mut lo = diagram.camera_position(0.0).min(diagram.camera_position(t_end));
    for s in diagram.camera.samples() {
        if s.t > t_end {
            break;
        }
        lo = lo.min(s.x);
    }
    lo
}

pub fn camera_mask(diagram: &SpaceTimeDiagram, grid: &GridSpec) -> EvalMask {
    let (alpha, beta) = (grid.alpha(), grid.beta());
    let mut cells = vec![false; alpha * beta];
    for j in 0..beta {
        let reached = camera_min_until(diagram, (j + 1) as f64 * grid.dt());
        for i in 0..alpha {
            cells[i * beta + j] = reached <= i as f64 * grid.dx() + 1e-9;
        }
    }
    EvalMask { alpha, beta, cells }
}

pub fn masked_rmse(truth: &DensityMatrix, estimate: &DensityMatrix, mask: &EvalMask) -> Result<f64> {
    let (a, b) = (truth.alpha(), truth.beta());
    if (estimate.alpha(), estimate.beta()) != (a, b) || (mask.alpha, mask.beta) != (a, b) {
        return Err(Error::Shape(format!(
            "truth {a}x{b}, estimate {}x{}, mask {}x{}",
            estimate.alpha(),
            estimate.beta(),
            mask.alpha,
            mask.beta
        )));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for i in 0..a {
        for j in 0..b {
            if !mask.contains(i, j) {
                continue;
            }
            let (Some(x), Some(y)) = (truth.get(i, j), estimate.get(i, j)) else {
                return Err(Error::Shape(format!("masked cell ({i}, {j}) is unobserved")));
            };
            sse += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("evaluation mask selects no cells".into()));
    }
    Ok((sse / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of the raw points.
    pub correlation: f64,
}

const HUBER_K: f64 = 1.345;
const HUBER_TOL: f64 = 1e-8;
const HUBER_MAX_ITER: usize = 500;

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        sxy += wi * (xi - mx) * (yi - my);
        sxx += wi * (xi - mx) * (xi - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Huber-loss line fit by iteratively reweighted least squares. The
/// threshold is `1.345` times the residual scale (normalized MAD), which is
/// re-estimated every iteration.
pub fn trend_regression(x: &[f64], y: &[f64]) -> Result<Trend> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Empty(format!("regression needs >= 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("regression inputs must be finite".into()));
    }
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter().all(|v| (v - mx).abs() <= 1e-15 * mx.abs().max(1.0)) {
        return Err(Error::Domain("covariate has zero variance".into()));
    }
    let mut w = vec![1.0; x.len()];
    let (mut slope, mut intercept) = weighted_line(x, y, &w);
    for _ in 0..HUBER_MAX_ITER {
        let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - (intercept + slope * a)).collect();
        let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
        let scale = median(&mut abs) / 0.6745;
        if scale <= f64::EPSILON * y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300) {
            break;
        }
        let delta = HUBER_K * scale;
        for (wi, r) in w.iter_mut().zip(&resid) {
            *wi = if r.abs() <= delta { 1.0 } else { delta / r.abs() };
        }
        let (s, c) = weighted_line(x, y, &w);
        let done = (s - slope).abs() <= HUBER_TOL * slope.abs().max(1.0)
            && (c - intercept).abs() <= HUBER_TOL * intercept.abs().max(1.0);
        slope = s;
        intercept = c;
        if done {
            break;
        }
    }
    Ok(Trend {
        slope,
        intercept,
        correlation: pearson(x, y),
    })
}

/// Inputs for scoring one scenario.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub run_id: &'a str,
    pub truth: &'a DensityMatrix,
    pub estimate: &'a DensityMatrix,
    pub baseline: &'a DensityMatrix,
    pub mask: &'a EvalMask,
    pub camera_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub run_id: String,
    pub ga_rmse: f64,
    pub baseline_rmse: f64,
    /// Mean ground-truth density over the whole matrix (veh/m).
    pub mean_density: f64,
    pub camera_speed: f64,
    pub mask_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single scenario.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(v: &[f64]) -> Option<Stats> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Stats {
            mean,
            std: var.sqrt(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenarios: usize,
    pub ga: Stats,
    pub baseline: Stats,
    /// Regressions are absent when there are fewer than three scenarios or
    /// the covariate does not vary.
    pub ga_vs_density: Option<Trend>,
    pub ga_vs_camera_speed: Option<Trend>,
    pub baseline_vs_density: Option<Trend>,
    pub baseline_vs_camera_speed: Option<Trend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ScenarioRow>,
    pub summary: Summary,
}

pub fn batch_report(cases: &[EvalCase<'_>]) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::Empty("no scenarios to evaluate".into()));
    }
    let rows = cases
        .iter()
        .map(|c| {
            Ok(ScenarioRow {
                run_id: c.run_id.to_string(),
                ga_rmse: masked_rmse(c.truth, c.estimate, c.mask)?,
                baseline_rmse: masked_rmse(c.truth, c.baseline, c.mask)?,
                mean_density: c.truth.mean_observed().unwrap_or(0.0),
                camera_speed: c.camera_speed,
                mask_cells: c.mask.count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        summary: summarize(&rows),
        rows,
    })
}

fn summarize(rows: &[ScenarioRow]) -> Summary {
    let col = |f: fn(&ScenarioRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (ga, base) = (col(|r| r.ga_rmse), col(|r| r.baseline_rmse));
    let (dens, speed) = (col(|r| r.mean_density), col(|r| r.camera_speed));
    Summary {
        scenarios: rows.len(),
        ga: Stats::of(&ga).expect("non-empty"),
        baseline: Stats::of(&base).expect("non-empty"),
        ga_vs_density: trend_regression(&dens, &ga).ok(),
        ga_vs_camera_speed: trend_regression(&speed, &ga).ok(),
        baseline_vs_density: trend_regression(&dens, &base).ok(),
        baseline_vs_camera_speed: trend_regression(&speed, &base).ok(),
    }
}

impl EvalReport {
    /// Rebuilds the summary from the per-scenario rows.
    pub fn from_rows(rows: Vec<ScenarioRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no scenarios to evaluate".into()));
        }
        Ok(EvalReport {
            summary: summarize(&rows),
            rows,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        write_atomic(path, &bytes)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_vec_pretty(&self.summary)?;
        s.push(b'\n');
        write_atomic(path, &s)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Csv(e),
        })?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<ScenarioRow>, _>>()?;
        Self::from_rows(rows)
    }
}
