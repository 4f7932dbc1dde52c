//! Edie aggregation of trajectories into density matrices, and quartet
//! extraction for fundamental-diagram calibration.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diagram::{SpaceTimeDiagram, Trajectory};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::matrix::{DensityMatrix, Quartet};

/// Fraction of a cell the field-of-view sweep must cover for the cell to
/// count as observed in masked aggregation.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.4;

/// Per-cell totals of vehicle time (s) and distance travelled (m), row-major.
#[derive(Debug, Clone)]
pub(crate) struct CellTotals {
    pub time: Vec<f64>,
    pub distance: Vec<f64>,
}

/// Splits every trajectory segment at cell edges and accumulates the time
/// and distance spent in each cell. A stretch lying exactly on an interior
/// edge is credited to the higher-index cell.
pub(crate) fn cell_totals(grid: &GridSpec, trajectories: &[Trajectory]) -> CellTotals {
    let (alpha, beta) = (grid.alpha(), grid.beta());
    let mut time = vec![0.0; alpha * beta];
    let mut distance = vec![0.0; alpha * beta];
    let mut cuts: Vec<f64> = Vec::new();
    for tr in trajectories {
        for w in tr.samples().windows(2) {
            let (a, b) = (w[0], w[1]);
            cuts.clear();
            cuts.push(0.0);
            cuts.push(1.0);
            push_edge_crossings(&mut cuts, a.x, b.x, grid.dx(), alpha);
            push_edge_crossings(&mut cuts, a.t, b.t, grid.dt(), beta);
            cuts.sort_by(f64::total_cmp);
            for c in cuts.windows(2) {
                let (u0, u1) = (c[0], c[1]);
                if u1 <= u0 {
                    continue;
                }
                let um = 0.5 * (u0 + u1);
                let xm = a.x + (b.x - a.x) * um;
                let tm = a.t + (b.t - a.t) * um;
                if !(0.0..=grid.total_time()).contains(&tm) || !(0.0..=grid.link_length()).contains(&xm) {
                    continue;
                }
                let n = grid.space_cell(xm) * beta + grid.time_cell(tm);
                time[n] += (b.t - a.t) * (u1 - u0);
                distance[n] += (b.x - a.x).abs() * (u1 - u0);
            }
        }
    }
    CellTotals { time, distance }
}

/// Pushes the segment parameters in (0, 1) where `v` crosses a multiple of `step`.
fn push_edge_crossings(cuts: &mut Vec<f64>, v0: f64, v1: f64, step: f64, n: usize) {
    if v0 == v1 {
        return;
    }
    let (lo, hi) = if v0 < v1 { (v0, v1) } else { (v1, v0) };
    let first = (lo / step).floor() as i64 + 1;
    let last = (hi / step).ceil() as i64 - 1;
    for e in first.max(0)..=last.min(n as i64) {
        let u = (e as f64 * step - v0) / (v1 - v0);
        if u > 0.0 && u < 1.0 {
            cuts.push(u);
        }
    }
}

/// Length of `[x_lo, x_hi]` inside the field of view when the camera is at `cam`.
fn view_overlap(diagram: &SpaceTimeDiagram, cam: f64, x_lo: f64, x_hi: f64) -> f64 {
    let top = x_hi.min(cam - diagram.fov.near);
    let bottom = x_lo.max(cam - diagram.fov.far);
    (top - bottom).max(0.0)
}

/// Area of the space-time rectangle `[x_lo, x_hi] x [t_lo, t_hi]` covered by
/// the camera's field-of-view sweep. The overlap length is piecewise linear
/// in time, so trapezoids between its breakpoints integrate it exactly.
pub(crate) fn visible_area(
    diagram: &SpaceTimeDiagram,
    x_lo: f64,
    x_hi: f64,
    t_lo: f64,
    t_hi: f64,
) -> f64 {
    let fov = diagram.fov;
    let targets: Vec<f64> = [x_lo + fov.near, x_hi + fov.near, x_lo + fov.far, x_hi + fov.far]
        .into_iter()
        .filter(|v| v.is_finite())
        .collect();
    let mut ts = vec![t_lo, t_hi];
    for w in diagram.camera.samples().windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.t <= t_lo || a.t >= t_hi {
            continue;
        }
        if a.t > t_lo {
            ts.push(a.t);
        }
        if a.x != b.x {
            for &target in &targets {
                let u = (target - a.x) / (b.x - a.x);
                if u > 0.0 && u < 1.0 {
                    let t = a.t + u * (b.t - a.t);
                    if t > t_lo && t < t_hi {
                        ts.push(t);
                    }
                }
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.windows(2)
        .map(|w| {
            let f0 = view_overlap(diagram, diagram.camera_position(w[0]), x_lo, x_hi);
            let f1 = view_overlap(diagram, diagram.camera_position(w[1]), x_lo, x_hi);
            0.5 * (f0 + f1) * (w[1] - w[0])
        })
        .sum()
}

/// Aggregates a diagram into cell densities, `k = (vehicle time in cell) / area`.
///
/// Unmasked, every cell is observed and the area is the full cell. Masked,
/// only the visible portions of trajectories are used, a cell is observed
/// when the field-of-view sweep covers at least [`DEFAULT_MIN_COVERAGE`] of
/// it (even if no vehicle was seen), and its density is normalized by the
/// swept part of the cell.
pub fn aggregate(diagram: &SpaceTimeDiagram, grid: &GridSpec, masked: bool) -> Result<DensityMatrix> {
    if masked {
        aggregate_masked(diagram, grid, DEFAULT_MIN_COVERAGE)
    } else {
        aggregate_full(diagram, grid)
    }
}

/// Masked aggregation with an explicit coverage threshold in `[0, 1]`. A
/// threshold of 0 marks every cell the sweep touches as observed.
pub fn aggregate_masked(diagram: &SpaceTimeDiagram, grid: &GridSpec, min_coverage: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::Config(format!("min_coverage must lie in [0, 1], got {min_coverage}")));
    }
    check_grid(diagram, grid)?;
    let (alpha, beta) = (grid.alpha(), grid.beta());
    let mut m = DensityMatrix::unobserved(*grid);
    let visible = diagram.apply_camera_mask();
    let totals = cell_totals(grid, &visible.vehicles);
    for i in 0..alpha {
        let (x_lo, x_hi) = (i as f64 * grid.dx(), (i + 1) as f64 * grid.dx());
        for j in 0..beta {
            let (t_lo, t_hi) = (j as f64 * grid.dt(), (j + 1) as f64 * grid.dt());
            let area = visible_area(diagram, x_lo, x_hi, t_lo, t_hi);
            if area > 0.0 && area >= min_coverage * grid.cell_area() {
                m.set(i, j, totals.time[i * beta + j] / area);
            }
        }
    }
    Ok(m)
}

fn check_grid(diagram: &SpaceTimeDiagram, grid: &GridSpec) -> Result<()> {
    if diagram.grid != *grid {
        return Err(Error::Shape(format!(
            "diagram grid {:?} differs from requested grid {:?}",
            diagram.grid, grid
        )));
    }
    Ok(())
}

fn aggregate_full(diagram: &SpaceTimeDiagram, grid: &GridSpec) -> Result<DensityMatrix> {
    check_grid(diagram, grid)?;
    let beta = grid.beta();
    let mut m = DensityMatrix::unobserved(*grid);
    let totals = cell_totals(grid, &diagram.vehicles);
    for i in 0..grid.alpha() {
        for j in 0..beta {
            m.set(i, j, totals.time[i * beta + j] / grid.cell_area());
        }
    }
    Ok(m)
}

/// Collects every observed `(up, mid, down, next)` pattern, ordered by matrix,
/// then time, then space.
pub fn extract_quartets(matrices: &[DensityMatrix]) -> Result<Vec<Quartet>> {
    if let Some(first) = matrices.first() {
        if let Some(m) = matrices.iter().find(|m| m.grid() != first.grid()) {
            return Err(Error::Shape(format!(
                "matrices mix grids {:?} and {:?}",
                first.grid(),
                m.grid()
            )));
        }
    }
    let mut out = Vec::new();
    for m in matrices {
        let (alpha, beta) = (m.alpha(), m.beta());
        for t in 0..beta - 1 {
            for x in 1..alpha - 1 {
                if let (Some(up), Some(mid), Some(down), Some(next)) =
                    (m.get(x - 1, t), m.get(x, t), m.get(x + 1, t), m.get(x, t + 1))
                {
                    out.push(Quartet::new(up, mid, down, next));
                }
            }
        }
    }
    Ok(out)
}

/// Writes a matrix as two headerless CSV files of `alpha` rows by `beta`
/// columns: densities (empty field when unobserved) and a 1/0 mask.
pub fn write_matrix_csv(matrix: &DensityMatrix, values: &Path, mask: &Path) -> Result<()> {
    let mut v = String::new();
    let mut k = String::new();
    for i in 0..matrix.alpha() {
        for j in 0..matrix.beta() {
            if j > 0 {
                v.push(',');
                k.push(',');
            }
            match matrix.get(i, j) {
                Some(d) => {
                    v.push_str(&format!("{d}"));
                    k.push('1');
                }
                None => k.push('0'),
            }
        }
        v.push('\n');
        k.push('\n');
    }
    write_atomic(values, v.as_bytes())?;
    write_atomic(mask, k.as_bytes())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(grid: &GridSpec, values: &Path, mask: &Path) -> Result<DensityMatrix> {
    let vtext = fs::read_to_string(values).map_err(|e| Error::io(values, e))?;
    let mtext = fs::read_to_string(mask).map_err(|e| Error::io(mask, e))?;
    let vrows: Vec<&str> = vtext.lines().collect();
    let mrows: Vec<&str> = mtext.lines().collect();
    if vrows.len() != grid.alpha() || mrows.len() != grid.alpha() {
        return Err(Error::Shape(format!(
            "{}: expected {} rows, found {} (mask {})",
            values.display(),
            grid.alpha(),
            vrows.len(),
            mrows.len()
        )));
    }
    let mut m = DensityMatrix::unobserved(*grid);
    for (i, (vr, mr)) in vrows.iter().zip(&mrows).enumerate() {
        let vf: Vec<&str> = vr.split(',').collect();
        let mf: Vec<&str> = mr.split(',').collect();
        if vf.len() != grid.beta() || mf.len() != grid.beta() {
            return Err(Error::Parse {
                path: values.to_path_buf(),
                line: i as u64 + 1,
                msg: format!("expected {} columns", grid.beta()),
            });
        }
        for (j, (vs, ms)) in vf.iter().zip(&mf).enumerate() {
            let parse_err = |msg: String| Error::Parse {
                path: values.to_path_buf(),
                line: i as u64 + 1,
                msg,
            };
            match ms.trim() {
                "1" => {
                    let d: f64 = vs
                        .trim()
                        .parse()
                        .map_err(|_| parse_err(format!("column {}: bad density {vs:?}", j + 1)))?;
                    m.set(i, j, d);
                }
                "0" => {}
                other => return Err(parse_err(format!("column {}: bad mask value {other:?}", j + 1))),
            }
        }
    }
    Ok(m)
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Sum of vehicle time inside `[0, L] x [0, T]` across trajectories.
pub fn vehicle_seconds_in_window(grid: &GridSpec, trajectories: &[Trajectory]) -> f64 {
    cell_totals(grid, trajectories).time.iter().sum()
}
