//! C ABI over `otfs_isac`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_from_*` functions and released with the matching `*_free`. Every
//! fallible call returns an [`IsacStatus`]; on failure the message is kept
//! per thread and can be read with [`isac_last_error_message`]. Panics are
//! caught and reported as `ISAC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use otfs_isac::analysis::p_eff_closed;
use otfs_isac::beamform::{baseline_strongest, optimize, scenario_gamma_prime, BeamModel, OptimizeParams};
use otfs_isac::channel::{PairIndex, Scenario};
use otfs_isac::error::IsacError;
use otfs_isac::experiment::{emit_csv, run_experiment, trial_rng, trial_scenario, ExperimentConfig, ResultTable};
use otfs_isac::sensing::ratio_estimate;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    InvalidArgument = 1,
    DimensionMismatch = 2,
    OutOfRange = 3,
    Infeasible = 4,
    Degenerate = 5,
    Unsupported = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

/// Experiment configuration.
pub struct IsacConfig(ExperimentConfig);

/// One sampled channel scenario.
pub struct IsacScenario(Scenario);

/// Beamforming model (trace table and steering vectors) of a scenario.
pub struct IsacBeamModel(BeamModel);

/// Experiment result table.
pub struct IsacTable(ResultTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &IsacError) -> IsacStatus {
    match e {
        IsacError::InvalidArgument(_) => IsacStatus::InvalidArgument,
        IsacError::DimensionMismatch { .. } => IsacStatus::DimensionMismatch,
        IsacError::OutOfRange(_) => IsacStatus::OutOfRange,
        IsacError::Infeasible(_) => IsacStatus::Infeasible,
        IsacError::Degenerate(_) => IsacStatus::Degenerate,
        IsacError::Unsupported(_) => IsacStatus::Unsupported,
        IsacError::Io(_) => IsacStatus::Io,
    }
}

struct Fail(IsacStatus, String);

impl From<IsacError> for Fail {
    fn from(e: IsacError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IsacStatus::NullPointer, format!("{what} is NULL"))
}

fn run(f: impl FnOnce() -> Result<(), Fail>) -> IsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsacStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            IsacStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IsacStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_box<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    put(out, Box::into_raw(Box::new(v)), "output handle pointer")
}

/// Copies `s` plus a NUL into `buf` (truncating to `len`) and returns the
/// buffer size needed for the whole string.
unsafe fn copy_out(s: &[u8], buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    s.len() + 1
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn isac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the size needed including the NUL, or 0 when
/// no error has been recorded.
///
/// # Safety
/// `buf` must be NULL or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn isac_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(msg) => copy_out(msg.as_bytes(), buf, len),
        None => 0,
    })
}

/// Reference configuration.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with [`isac_config_free`].
#[no_mangle]
pub unsafe extern "C" fn isac_config_default(out: *mut *mut IsacConfig) -> IsacStatus {
    run(|| put_box(out, IsacConfig(ExperimentConfig::default())))
}

/// Parses a flat JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_config_from_json(json: *const c_char, out: *mut *mut IsacConfig) -> IsacStatus {
    run(|| {
        let cfg = ExperimentConfig::from_json(as_str(json, "json")?)?;
        cfg.resolve()?;
        put_box(out, IsacConfig(cfg))
    })
}

/// Overrides the trial count and seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_config_set_run(cfg: *mut IsacConfig, trials: usize, seed: u64) -> IsacStatus {
    run(|| {
        let c = cfg.as_mut().ok_or_else(|| null("config"))?;
        let next = ExperimentConfig { trials, seed, ..c.0.clone() };
        next.resolve()?;
        c.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_config_free(cfg: *mut IsacConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs an experiment; `kind` is one of `estimate`, `prob-sweep`,
/// `mse-sweep`, `beamform`, `rate-sweep`, `convergence`.
///
/// # Safety
/// `cfg` must be a live handle, `kind` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_run_experiment(
    cfg: *const IsacConfig,
    kind: *const c_char,
    out: *mut *mut IsacTable,
) -> IsacStatus {
    run(|| {
        let cfg = as_ref(cfg, "config")?;
        let kind = as_str(kind, "kind")?.parse()?;
        let table = run_experiment(&cfg.0, Some(kind))?;
        put_box(out, IsacTable(table))
    })
}

/// Number of data rows (0 for a NULL handle).
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_table_rows(t: *const IsacTable) -> usize {
    t.as_ref().map_or(0, |t| t.0.rows.len())
}

/// Number of metric columns, excluding the config hash (0 for NULL).
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_table_cols(t: *const IsacTable) -> usize {
    t.as_ref().map_or(0, |t| t.0.columns.len())
}

/// Copies a column name into `buf`; returns the size needed, or 0 when
/// `col` is out of range.
///
/// # Safety
/// `t` must be a live handle, `buf` NULL or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn isac_table_column_name(
    t: *const IsacTable,
    col: usize,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match t.as_ref().and_then(|t| t.0.columns.get(col)) {
        Some(name) => copy_out(name.as_bytes(), buf, len),
        None => 0,
    }
}

/// Reads one cell.
///
/// # Safety
/// `t` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_table_get(t: *const IsacTable, row: usize, col: usize, out: *mut f64) -> IsacStatus {
    run(|| {
        let t = as_ref(t, "table")?;
        let v = t
            .0
            .rows
            .get(row)
            .and_then(|r| r.get(col))
            .ok_or_else(|| Fail(IsacStatus::OutOfRange, format!("cell ({row}, {col}) outside the table")))?;
        put(out, *v, "out")
    })
}

/// Writes the table as CSV.
///
/// # Safety
/// `t` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn isac_table_write_csv(t: *const IsacTable, path: *const c_char) -> IsacStatus {
    run(|| {
        let t = as_ref(t, "table")?;
        emit_csv(&t.0, Path::new(as_str(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `t` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_table_free(t: *mut IsacTable) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Samples the scenario of trial `trial` under the config's seed.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_sample(
    cfg: *const IsacConfig,
    trial: u64,
    snr_db: f64,
    out: *mut *mut IsacScenario,
) -> IsacStatus {
    run(|| {
        let cfg = as_ref(cfg, "config")?;
        let resolved = cfg.0.resolve()?;
        let mut rng = trial_rng(resolved.seed, trial);
        let s = trial_scenario(&resolved, &mut rng, snr_db)?;
        put_box(out, IsacScenario(s))
    })
}

/// True LoS cascaded Doppler in Hz.
///
/// # Safety
/// `s` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_los_doppler(s: *const IsacScenario, out: *mut f64) -> IsacStatus {
    run(|| {
        let s = as_ref(s, "scenario")?;
        put(out, s.0.pair_doppler(PairIndex { p1: 0, p2: 0 }), "out")
    })
}

/// # Safety
/// `s` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_free(s: *mut IsacScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Ratio Doppler estimate (Hz) from `n` pilot amplitudes on the config's grid.
///
/// # Safety
/// `cfg` must be a live handle, `z` valid for `n` doubles, `nu_hat` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_ratio_estimate(
    cfg: *const IsacConfig,
    z: *const f64,
    n: usize,
    nu_hat: *mut f64,
) -> IsacStatus {
    run(|| {
        let cfg = as_ref(cfg, "config")?;
        if z.is_null() {
            return Err(null("z"));
        }
        let z = std::slice::from_raw_parts(z, n);
        let rep = ratio_estimate(z, &cfg.0.grid()?)?;
        put(nu_hat, rep.nu_hat, "nu_hat")
    })
}

/// Closed-form probability that the larger side peak stays larger.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isac_p_eff_closed(z2: f64, z3: f64, sigma2: f64, out: *mut f64) -> IsacStatus {
    run(|| put(out, p_eff_closed(z2, z3, sigma2)?, "out"))
}

/// Builds the beamforming model of a scenario.
///
/// # Safety
/// `s` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_beam_model_new(s: *const IsacScenario, out: *mut *mut IsacBeamModel) -> IsacStatus {
    run(|| {
        let s = as_ref(s, "scenario")?;
        put_box(out, IsacBeamModel(BeamModel::new(&s.0)?))
    })
}

/// Runs the joint optimizer for an MSE target of `gamma1_bins` squared
/// Doppler bins. Any output pointer may be NULL.
///
/// # Safety
/// `m` must be a live handle; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn isac_beam_optimize(
    m: *const IsacBeamModel,
    gamma1_bins: f64,
    objective: *mut f64,
    rate: *mut f64,
    iterations: *mut usize,
) -> IsacStatus {
    run(|| {
        let m = &as_ref(m, "beam model")?.0;
        let g = scenario_gamma_prime(&m.scenario, gamma1_bins)?;
        let out = optimize(m, &OptimizeParams::new(g))?;
        let st = &out.state;
        if !objective.is_null() {
            objective.write(*out.objective_trace.last().expect("nonempty trace"));
        }
        if !rate.is_null() {
            rate.write(m.rate(&st.r, &st.xi)?);
        }
        if !iterations.is_null() {
            iterations.write(out.iterations);
        }
        Ok(())
    })
}

/// Rate of the strongest-path beam pair.
///
/// # Safety
/// `m` must be a live handle and `rate` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_beam_rate_strongest(m: *const IsacBeamModel, rate: *mut f64) -> IsacStatus {
    run(|| {
        let m = &as_ref(m, "beam model")?.0;
        let (r, xi) = baseline_strongest(&m.scenario);
        put(rate, m.rate(&r, &xi)?, "rate")
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_beam_model_free(m: *mut IsacBeamModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}
