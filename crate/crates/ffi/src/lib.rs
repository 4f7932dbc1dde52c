//! C ABI over `linkstate`.
//!
//! Every function returns an [`LsStatus`]; on failure a message is kept per
//! thread and can be fetched with [`ls_last_error`]. Objects created here
//! (`LsFd`, `LsMatrix`) are opaque and released with their `*_free`
//! function. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use linkstate::calibrate::{self, calibrate_fd};
use linkstate::cli::cmd_pipeline;
use linkstate::config::RunConfig;
use linkstate::estimate::{self, estimate_density};
use linkstate::evaluate::{masked_rmse, EvalMask};
use linkstate::ga::{AdaptiveMutation, GaParams};
use linkstate::{BoundaryVector, DensityMatrix, Error, FdParams, GridSpec, Quartet};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    Shape = 4,
    Parse = 5,
    Empty = 6,
    Optimizer = 7,
    MissingArtifact = 8,
    Io = 9,
    InvalidUtf8 = 10,
    OutOfRange = 11,
    Panic = 99,
}

/// Space-time grid: link length (m), horizon (s), cell size (m, s).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsGrid {
    pub link_length: f64,
    pub total_time: f64,
    pub dx: f64,
    pub dt: f64,
}

/// Upstream, middle and downstream densities at one step, and the middle
/// density one step later.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsQuartet {
    pub k_up: f64,
    pub k_mid: f64,
    pub k_down: f64,
    pub k_next: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsGaParams {
    pub population_size: usize,
    pub generations: usize,
    pub k_tournament: usize,
    /// Offspring pairs per generation.
    pub crossover_fraction: usize,
    /// Mutation probability for candidates below the population mean.
    pub p_low_fitness: f64,
    pub p_high_fitness: f64,
    pub restarts: usize,
}

/// Opaque triangular fundamental diagram.
pub struct LsFd(FdParams);

/// Opaque density matrix with per-cell observation flags.
pub struct LsMatrix(DensityMatrix);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::Config(_) => LsStatus::Config,
        Error::Domain(_) => LsStatus::Domain,
        Error::Shape(_) => LsStatus::Shape,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => LsStatus::Parse,
        Error::Empty(_) => LsStatus::Empty,
        Error::Optimizer(_) => LsStatus::Optimizer,
        Error::MissingArtifact(_) => LsStatus::MissingArtifact,
        Error::Io { .. } => LsStatus::Io,
    }
}

struct Fail(LsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LsStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            LsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, n))
    }
}

unsafe fn opt_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(|s| Some(PathBuf::from(s)))
        .map_err(|_| Fail(LsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn grid_of(g: &LsGrid) -> Result<GridSpec, Fail> {
    Ok(GridSpec::new(g.link_length, g.total_time, g.dx, g.dt)?)
}

impl From<&GaParams> for LsGaParams {
    fn from(p: &GaParams) -> Self {
        LsGaParams {
            population_size: p.population_size,
            generations: p.generations,
            k_tournament: p.k_tournament,
            crossover_fraction: p.crossover_fraction,
            p_low_fitness: p.mutation.p_low_fitness,
            p_high_fitness: p.mutation.p_high_fitness,
            restarts: p.restarts,
        }
    }
}

fn params_of(p: &LsGaParams, base: GaParams) -> GaParams {
    GaParams {
        population_size: p.population_size,
        generations: p.generations,
        k_tournament: p.k_tournament,
        crossover_fraction: p.crossover_fraction,
        mutation: AdaptiveMutation::new(p.p_low_fitness, p.p_high_fitness),
        restarts: p.restarts,
        ..base
    }
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn ls_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default hyperparameters of the calibration GA.
#[no_mangle]
pub extern "C" fn ls_ga_params_calibration() -> LsGaParams {
    (&calibrate::default_params()).into()
}

/// Default hyperparameters of the boundary-estimation GA.
#[no_mangle]
pub extern "C" fn ls_ga_params_estimation() -> LsGaParams {
    (&estimate::default_params()).into()
}

#[no_mangle]
pub unsafe extern "C" fn ls_fd_new(v_f: f64, k_c: f64, k_j: f64, fd_out: *mut *mut LsFd) -> LsStatus {
    guard(|| {
        let slot = out(fd_out, "fd_out")?;
        *slot = Box::into_raw(Box::new(LsFd(FdParams::new(v_f, k_c, k_j)?)));
        Ok(())
    })
}

/// Reads the parameters; any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn ls_fd_get(fd: *const LsFd, v_f: *mut f64, k_c: *mut f64, k_j: *mut f64, w_c: *mut f64) -> LsStatus {
    guard(|| {
        let fd = &deref(fd, "fd")?.0;
        for (p, v) in [(v_f, fd.v_f()), (k_c, fd.k_c()), (k_j, fd.k_j()), (w_c, fd.w_c())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ls_fd_free(fd: *mut LsFd) {
    if !fd.is_null() {
        drop(Box::from_raw(fd));
    }
}

/// Triangular-FD flow between an upstream and a downstream density.
#[no_mangle]
pub unsafe extern "C" fn ls_flow(fd: *const LsFd, k_up: f64, k_down: f64, q_out: *mut f64) -> LsStatus {
    guard(|| {
        let fd = &deref(fd, "fd")?.0;
        *out(q_out, "q_out")? = linkstate::flow(fd, k_up, k_down)?;
        Ok(())
    })
}

/// New matrix with every cell unobserved.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_new(grid: LsGrid, matrix_out: *mut *mut LsMatrix) -> LsStatus {
    guard(|| {
        let slot = out(matrix_out, "matrix_out")?;
        *slot = Box::into_raw(Box::new(LsMatrix(DensityMatrix::unobserved(grid_of(&grid)?))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ls_matrix_free(m: *mut LsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of space cells (`alpha`) and time steps (`beta`).
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_shape(m: *const LsMatrix, alpha: *mut usize, beta: *mut usize) -> LsStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.0;
        *out(alpha, "alpha")? = m.alpha();
        *out(beta, "beta")? = m.beta();
        Ok(())
    })
}

fn check_cell(m: &DensityMatrix, i: usize, j: usize) -> Result<(), Fail> {
    if i < m.alpha() && j < m.beta() {
        Ok(())
    } else {
        Err(Fail(
            LsStatus::OutOfRange,
            format!("cell ({i}, {j}) outside {}x{}", m.alpha(), m.beta()),
        ))
    }
}

/// Marks cell `(i, j)` observed with density `k` (veh/m).
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_set(m: *mut LsMatrix, i: usize, j: usize, k: f64) -> LsStatus {
    guard(|| {
        let m = &mut out(m, "matrix")?.0;
        check_cell(m, i, j)?;
        if !k.is_finite() {
            return Err(Fail(LsStatus::Domain, format!("density must be finite, got {k}")));
        }
        m.set(i, j, k);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ls_matrix_clear(m: *mut LsMatrix, i: usize, j: usize) -> LsStatus {
    guard(|| {
        let m = &mut out(m, "matrix")?.0;
        check_cell(m, i, j)?;
        m.clear(i, j);
        Ok(())
    })
}

/// Reads cell `(i, j)`; `observed_out` receives 0 or 1 and `k_out` is
/// written only for observed cells.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_get(
    m: *const LsMatrix,
    i: usize,
    j: usize,
    k_out: *mut f64,
    observed_out: *mut u8,
) -> LsStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.0;
        check_cell(m, i, j)?;
        let flag = out(observed_out, "observed_out")?;
        *flag = 0;
        if let Some(k) = m.get(i, j) {
            *out(k_out, "k_out")? = k;
            *flag = 1;
        }
        Ok(())
    })
}

/// Runs the CTM from initial densities (`alpha` values) and per-step inflow
/// and outflow boundary densities (`beta` values each).
#[no_mangle]
pub unsafe extern "C" fn ls_ctm_run(
    fd: *const LsFd,
    grid: LsGrid,
    init: *const f64,
    inflow: *const f64,
    outflow: *const f64,
    matrix_out: *mut *mut LsMatrix,
) -> LsStatus {
    guard(|| {
        let fd = &deref(fd, "fd")?.0;
        let g = grid_of(&grid)?;
        let bv = BoundaryVector {
            init: slice(init, g.alpha(), "init")?.to_vec(),
            inflow: slice(inflow, g.beta(), "inflow")?.to_vec(),
            outflow: slice(outflow, g.beta(), "outflow")?.to_vec(),
        };
        let slot = out(matrix_out, "matrix_out")?;
        *slot = Box::into_raw(Box::new(LsMatrix(linkstate::ctm_run(fd, &g, &bv)?)));
        Ok(())
    })
}

/// Calibrates `v_f` and `k_c` on `n` quartets at fixed jam density.
#[no_mangle]
pub unsafe extern "C" fn ls_calibrate_fd(
    quartets: *const LsQuartet,
    n: usize,
    grid: LsGrid,
    k_j: f64,
    params: *const LsGaParams,
    seed: u64,
    fd_out: *mut *mut LsFd,
    rmse_out: *mut f64,
) -> LsStatus {
    guard(|| {
        let qs: Vec<Quartet> = slice(quartets, n, "quartets")?
            .iter()
            .map(|q| Quartet::new(q.k_up, q.k_mid, q.k_down, q.k_next))
            .collect();
        let params = params_of(deref(params, "params")?, calibrate::default_params());
        let slot = out(fd_out, "fd_out")?;
        let res = calibrate_fd(&qs, &grid_of(&grid)?, k_j, &params, seed)?;
        if let Some(r) = rmse_out.as_mut() {
            *r = res.rmse;
        }
        *slot = Box::into_raw(Box::new(LsFd(res.fd)));
        Ok(())
    })
}

/// Completes a partial matrix; `completed_out` receives a fully observed
/// matrix and `fitness_out` (nullable) the negative RMSE on observed cells.
#[no_mangle]
pub unsafe extern "C" fn ls_estimate_density(
    partial: *const LsMatrix,
    fd: *const LsFd,
    params: *const LsGaParams,
    seed: u64,
    completed_out: *mut *mut LsMatrix,
    fitness_out: *mut f64,
) -> LsStatus {
    guard(|| {
        let partial = &deref(partial, "partial")?.0;
        let fd = &deref(fd, "fd")?.0;
        let params = params_of(deref(params, "params")?, estimate::default_params());
        let slot = out(completed_out, "completed_out")?;
        let res = estimate_density(partial, fd, &params, seed)?;
        if let Some(f) = fitness_out.as_mut() {
            *f = res.fitness;
        }
        *slot = Box::into_raw(Box::new(LsMatrix(res.completed)));
        Ok(())
    })
}

/// RMSE between two matrices over the cells flagged non-zero in `mask`
/// (`alpha * beta` bytes, row-major by space cell).
#[no_mangle]
pub unsafe extern "C" fn ls_masked_rmse(
    truth: *const LsMatrix,
    estimate: *const LsMatrix,
    mask: *const u8,
    rmse_out: *mut f64,
) -> LsStatus {
    guard(|| {
        let t = &deref(truth, "truth")?.0;
        let e = &deref(estimate, "estimate")?.0;
        let cells: Vec<bool> = slice(mask, t.alpha() * t.beta(), "mask")?.iter().map(|&b| b != 0).collect();
        let m = EvalMask::from_cells(t.alpha(), t.beta(), cells)?;
        *out(rmse_out, "rmse_out")? = masked_rmse(t, e, &m)?;
        Ok(())
    })
}

/// Runs the whole pipeline. `config_path` may be null for defaults;
/// a non-null `out_dir` overrides the configured output directory.
#[no_mangle]
pub unsafe extern "C" fn ls_run_pipeline(config_path: *const c_char, out_dir: *const c_char) -> LsStatus {
    guard(|| {
        let mut cfg = match opt_path(config_path, "config_path")? {
            Some(p) => RunConfig::load(&p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = opt_path(out_dir, "out_dir")? {
            cfg.out_dir = o;
        }
        cfg.validate()?;
        cmd_pipeline(&cfg)?;
        Ok(())
    })
}
