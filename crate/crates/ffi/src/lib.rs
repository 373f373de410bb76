//! C ABI over the `mfgplan` library.
//!
//! Every fallible function returns an [`MfgStatus`]. On failure the message is kept per
//! thread and read back with [`mfg_last_error`]. Objects cross the boundary as opaque
//! handles that the caller releases with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString, OsString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mfgplan::config::RunConfig;
use mfgplan::estimates::lemma_bound;
use mfgplan::grid::{ScalarField, TorusGrid};
use mfgplan::io::{read_field, write_scalar, write_vector, FieldData};
use mfgplan::moser::{certify, q_pochhammer, MoserParams, PoincareConstants, RecurrenceMode};
use mfgplan::problem::PlanningProblem;
use mfgplan::scenarios::scenario;
use mfgplan::solver::{solve_planning, Solution, SolverConfig};
use mfgplan::Error;

/// Result codes. `MFG_STATUS_OK` is zero; every failure is negative.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfgStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    /// Input outside the domain where a bound or schedule exists.
    Domain = -3,
    /// Malformed or mismatched field file.
    Format = -4,
    Config = -5,
    Io = -6,
    /// The requested quantity was not produced (e.g. no value function near vacuum).
    Unavailable = -7,
    /// Output buffer shorter than the data.
    BufferTooSmall = -8,
    /// A string argument is not valid UTF-8.
    Utf8 = -9,
    /// A Rust panic was caught at the boundary.
    Panic = -10,
}

struct Failure(MfgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Grid(_) | Error::GridMismatch(_) | Error::InvalidArgument(_) | Error::Incompatible(_) => {
                MfgStatus::InvalidArgument
            }
            Error::Domain(_) | Error::Vacuum(_) | Error::Schedule(_) => MfgStatus::Domain,
            Error::Format { .. } => MfgStatus::Format,
            Error::Config(_) => MfgStatus::Config,
            Error::Io { .. } => MfgStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: MfgStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MfgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MfgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MfgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(MfgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(MfgStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(MfgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(MfgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(fail(MfgStatus::NullPointer, "output buffer is null"));
    }
    if len < values.len() {
        return Err(fail(MfgStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Grid dimensions as seen from C.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MfgGridInfo {
    pub dim: usize,
    pub nx: usize,
    /// 1 in one dimension.
    pub ny: usize,
    pub nt: usize,
    pub horizon: f64,
    /// `nx * ny`.
    pub cells: usize,
}

impl From<&TorusGrid> for MfgGridInfo {
    fn from(g: &TorusGrid) -> Self {
        MfgGridInfo { dim: g.dim(), nx: g.nx(), ny: g.ny(), nt: g.nt(), horizon: g.horizon(), cells: g.cells() }
    }
}

/// A planning problem together with its solver settings.
pub struct MfgProblem {
    problem: PlanningProblem,
    solver: SolverConfig,
}

/// Solver output: `m`, `w`, optional `u` and the report.
pub struct MfgSolution(Solution);

/// A field read from a file.
pub struct MfgField {
    name: String,
    data: FieldData,
}

/// Message of the last failure on this thread, or null. Valid until the next call on
/// this thread.
#[no_mangle]
pub extern "C" fn mfg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn mfg_status_name(status: MfgStatus) -> *const c_char {
    let s: &'static CStr = match status {
        MfgStatus::Ok => c"ok",
        MfgStatus::NullPointer => c"null pointer",
        MfgStatus::InvalidArgument => c"invalid argument",
        MfgStatus::Domain => c"outside domain",
        MfgStatus::Format => c"field format",
        MfgStatus::Config => c"config",
        MfgStatus::Io => c"io",
        MfgStatus::Unavailable => c"unavailable",
        MfgStatus::BufferTooSmall => c"buffer too small",
        MfgStatus::Utf8 => c"invalid utf-8",
        MfgStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Library version string.
#[no_mangle]
pub extern "C" fn mfg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn problem_from(cfg: RunConfig, base: &Path) -> Result<Box<MfgProblem>, Failure> {
    let problem = cfg.problem.build(base)?;
    Ok(Box::new(MfgProblem { problem, solver: cfg.solver }))
}

/// Builds a built-in scenario (`trivial`, `bump`, `small-cosine-potential`, `manufactured`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_problem_from_scenario(name: *const c_char, out: *mut *mut MfgProblem) -> MfgStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(problem_from(scenario(name)?, Path::new("."))?);
        Ok(())
    })
}

/// Loads a TOML run configuration; relative paths inside resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_problem_from_config(path: *const c_char, out: *mut *mut MfgProblem) -> MfgStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let cfg = RunConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        *out = Box::into_raw(problem_from(cfg, base)?);
        Ok(())
    })
}

/// Parses a TOML run configuration from memory; relative paths resolve against the
/// working directory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_problem_from_toml(text: *const c_char, out: *mut *mut MfgProblem) -> MfgStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(problem_from(RunConfig::parse(text, "<toml>")?, Path::new("."))?);
        Ok(())
    })
}

/// # Safety
/// `problem` must come from a `mfg_problem_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn mfg_problem_free(problem: *mut MfgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mfg_problem_grid(problem: *const MfgProblem, out: *mut MfgGridInfo) -> MfgStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        *out_arg(out, "out")? = MfgGridInfo::from(p.problem.grid());
        Ok(())
    })
}

/// Overrides the iteration cap and stopping tolerance. Zero keeps the current value.
///
/// # Safety
/// `problem` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mfg_problem_set_solver(
    problem: *mut MfgProblem,
    max_iters: usize,
    tolerance: f64,
) -> MfgStatus {
    guard(|| {
        let p = problem.as_mut().ok_or_else(|| fail(MfgStatus::NullPointer, "problem is null"))?;
        let mut cfg = p.solver.clone();
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        if tolerance != 0.0 {
            cfg.tolerance = tolerance;
        }
        cfg.validate()?;
        p.solver = cfg;
        Ok(())
    })
}

/// Runs the planning solver.
///
/// # Safety
/// `problem` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_solve(problem: *const MfgProblem, out: *mut *mut MfgSolution) -> MfgStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let out = out_arg(out, "out")?;
        let sol = solve_planning(&p.problem, &p.solver)?;
        *out = Box::into_raw(Box::new(MfgSolution(sol)));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`mfg_solve`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mfg_solution_free(solution: *mut MfgSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Scalar summary of a solve.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MfgSolveSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub final_energy: f64,
    pub continuity_residual: f64,
    pub max_mass_error: f64,
    pub min_density: f64,
    /// Whether `u` was recovered.
    pub has_value: bool,
}

/// # Safety
/// `solution` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mfg_solution_summary(solution: *const MfgSolution, out: *mut MfgSolveSummary) -> MfgStatus {
    guard(|| {
        let s = &handle(solution, "solution")?.0;
        let r = &s.report;
        *out_arg(out, "out")? = MfgSolveSummary {
            iterations: r.iterations,
            converged: r.converged,
            final_residual: r.final_residual,
            final_energy: r.final_energy,
            continuity_residual: r.continuity_residual,
            max_mass_error: r.max_mass_error,
            min_density: r.min_density,
            has_value: s.u.is_some(),
        };
        Ok(())
    })
}

fn scalar_values(f: &ScalarField) -> Vec<f64> {
    f.values().iter().copied().collect()
}

/// Copies `m`, `(nt + 1) * cells` values in row-major `(t, cell)` order.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mfg_solution_density(solution: *const MfgSolution, buf: *mut f64, len: usize) -> MfgStatus {
    guard(|| copy_out(&scalar_values(&handle(solution, "solution")?.0.m), buf, len))
}

/// Copies `u` like [`mfg_solution_density`]; `MFG_STATUS_UNAVAILABLE` when it was not recovered.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mfg_solution_value(solution: *const MfgSolution, buf: *mut f64, len: usize) -> MfgStatus {
    guard(|| {
        let s = &handle(solution, "solution")?.0;
        let u = s.u.as_ref().ok_or_else(|| {
            let why = s.report.recovery_error.clone().unwrap_or_else(|| "value function not recovered".into());
            fail(MfgStatus::Unavailable, why)
        })?;
        copy_out(&scalar_values(u), buf, len)
    })
}

/// Writes `m.bin`, `w.bin` and, when present, `u.bin` into `dir`.
///
/// # Safety
/// `solution` must be a valid handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mfg_solution_write(solution: *const MfgSolution, dir: *const c_char) -> MfgStatus {
    guard(|| {
        let s = &handle(solution, "solution")?.0;
        let dir = Path::new(str_arg(dir, "dir")?);
        mfgplan::io::ensure_dir(dir)?;
        write_scalar(&dir.join("m.bin"), "m", &s.m)?;
        write_vector(&dir.join("w.bin"), "w", &s.w)?;
        if let Some(u) = &s.u {
            write_scalar(&dir.join("u.bin"), "u", u)?;
        }
        Ok(())
    })
}

/// Reads a field file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_field_read(path: *const c_char, out: *mut *mut MfgField) -> MfgStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let (header, data) = read_field(path)?;
        *out = Box::into_raw(Box::new(MfgField { name: header.name, data }));
        Ok(())
    })
}

/// # Safety
/// `field` must come from [`mfg_field_read`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mfg_field_free(field: *mut MfgField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Shape of a field: grid, number of components and rows per component.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MfgFieldInfo {
    pub grid: MfgGridInfo,
    pub components: usize,
    /// `nt + 1` for slice fields, `nt` for interval fields.
    pub rows: usize,
    /// Total values, `components * rows * cells`.
    pub len: usize,
}

/// # Safety
/// `field` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mfg_field_info(field: *const MfgField, out: *mut MfgFieldInfo) -> MfgStatus {
    guard(|| {
        let f = handle(field, "field")?;
        let (grid, components, rows) = match &f.data {
            FieldData::Scalar(s) => (*s.grid(), 1, s.rows()),
            FieldData::Vector(v) => (*v.grid(), v.components().len(), v.component(0).nrows()),
        };
        *out_arg(out, "out")? =
            MfgFieldInfo { grid: MfgGridInfo::from(&grid), components, rows, len: components * rows * grid.cells() };
        Ok(())
    })
}

/// Copies the field name into `buf` (NUL-terminated).
///
/// # Safety
/// `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mfg_field_name(field: *const MfgField, buf: *mut c_char, len: usize) -> MfgStatus {
    guard(|| {
        let name = &handle(field, "field")?.name;
        if buf.is_null() {
            return Err(fail(MfgStatus::NullPointer, "output buffer is null"));
        }
        if len < name.len() + 1 {
            return Err(fail(MfgStatus::BufferTooSmall, format!("name needs {} bytes", name.len() + 1)));
        }
        ptr::copy_nonoverlapping(name.as_ptr().cast(), buf, name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Copies the values in `(component, t, cell)` order.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mfg_field_values(field: *const MfgField, buf: *mut f64, len: usize) -> MfgStatus {
    guard(|| {
        let values: Vec<f64> = match &handle(field, "field")?.data {
            FieldData::Scalar(s) => scalar_values(s),
            FieldData::Vector(v) => v.components().iter().flat_map(|c| c.iter().copied()).collect(),
        };
        copy_out(&values, buf, len)
    })
}

/// `(a; q)_inf` to relative tolerance `tol`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_q_pochhammer(a: f64, q: f64, tol: f64, out: *mut f64) -> MfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = q_pochhammer(a, q, tol)?;
        Ok(())
    })
}

/// Endpoint bound `max_t f(t)` for `f'' + c f >= 0` with `f(0) = a`, `f(T) = b`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfg_lemma_bound(a: f64, b: f64, c: f64, horizon: f64, out: *mut f64) -> MfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = lemma_bound(a, b, c, horizon)?.bound;
        Ok(())
    })
}

/// Inputs of the inverse-density recurrence with a constant Poincare constant.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfgMoserInput {
    pub alpha: f64,
    pub r: f64,
    pub c: f64,
    pub c_ell: f64,
    /// Starting value `M_{q_{N0}}`.
    pub m_start: f64,
    pub m_r: f64,
    pub horizon: usize,
    /// Run the degenerate self-test recurrence instead of the full one.
    pub degenerate: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MfgMoserResult {
    pub n0: usize,
    pub big_n0: usize,
    pub rho: f64,
    pub log_cap: f64,
    /// `M_{q_n}^{1/q_n}` at the last index.
    pub final_normalized: f64,
    pub below_cap: bool,
    pub converged: bool,
    pub pass: bool,
}

/// Runs the inverse-density certificate. A failed certificate is still `MFG_STATUS_OK`;
/// inspect `pass`.
///
/// # Safety
/// `input` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mfg_certify_moser(input: *const MfgMoserInput, out: *mut MfgMoserResult) -> MfgStatus {
    guard(|| {
        let i = handle(input, "input")?;
        let out = out_arg(out, "out")?;
        let params = MoserParams {
            alpha: i.alpha,
            r: i.r,
            m_r: i.m_r,
            c: i.c,
            c_ell: PoincareConstants::Constant(i.c_ell),
            m_start: i.m_start,
            mode: if i.degenerate { RecurrenceMode::Degenerate } else { RecurrenceMode::Full },
        };
        let cert = certify(&params, i.horizon)?;
        *out = MfgMoserResult {
            n0: cert.n0,
            big_n0: cert.big_n0,
            rho: cert.rho,
            log_cap: cert.log_cap,
            final_normalized: cert.normalized.last().copied().unwrap_or(f64::NAN),
            below_cap: cert.below_cap,
            converged: cert.converged,
            pass: cert.pass(),
        };
        Ok(())
    })
}

/// Runs the command-line tool with `argv[0..argc]` and returns its exit code
/// (0 ok, 1 error, 2 certificate failure). Null or non-UTF-8 arguments give 1.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    let args: Option<Vec<OsString>> = (|| {
        if argv.is_null() || argc < 0 {
            return None;
        }
        (0..argc as usize)
            .map(|k| {
                let p = *argv.add(k);
                (!p.is_null()).then(|| CStr::from_ptr(p).to_str().ok().map(OsString::from)).flatten()
            })
            .collect()
    })();
    let Some(args) = args else {
        set_error("argv is null or holds an invalid string".into());
        return mfgplan::cli::EXIT_ERROR;
    };
    catch_unwind(|| mfgplan::cli::run(args)).unwrap_or_else(|_| {
        set_error("panic in command-line tool".into());
        mfgplan::cli::EXIT_ERROR
    })
}
