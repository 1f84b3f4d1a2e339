//! C ABI over `volterra_lq`.
//!
//! Every fallible call returns a [`VlqStatus`]; on failure a message is kept
//! per thread and can be read with [`vlq_last_error_message`]. Objects cross
//! the boundary as opaque pointers and are released with the matching
//! `*_free` function. Panics never unwind into C: they turn into
//! `VLQ_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use volterra_lq::bounds::{self, BoundParams};
use volterra_lq::simulator::{simulate, BlockCascade, SignalSpec, Snr};
use volterra_lq::solver::{self, FitReport, QuadraticObjective, SolverOptions};
use volterra_lq::tuning::{tune_r, TuningOptions};
use volterra_lq::{Dataset, Error, VolterraStructure};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    DimensionMismatch = 4,
    Domain = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

impl From<&Error> for VlqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } => VlqStatus::DimensionMismatch,
            Error::Domain(_) => VlqStatus::Domain,
            Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::EmptyDesign { .. }
            | Error::DegenerateData(_) => VlqStatus::DataError,
            _ => VlqStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VlqStatus, msg: impl Into<String>) -> VlqStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), VlqStatus>) -> VlqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VlqStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(VlqStatus::Internal, "internal panic"),
    }
}

fn lib_err(e: Error) -> VlqStatus {
    let s = VlqStatus::from(&e);
    fail(s, e.to_string())
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], VlqStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(VlqStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], VlqStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(VlqStatus::NullPointer, "null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or point to a live object created by this library.
unsafe fn object<'a, T>(p: *const T) -> Result<&'a T, VlqStatus> {
    p.as_ref().ok_or_else(|| fail(VlqStatus::NullPointer, "null handle"))
}

fn out<T>(p: *mut T, v: T) -> Result<(), VlqStatus> {
    if p.is_null() {
        return Err(fail(VlqStatus::NullPointer, "null output pointer"));
    }
    // SAFETY: non-null, and the caller promises it is writable.
    unsafe { p.write(v) };
    Ok(())
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminating NUL; 0 when there is none.
#[no_mangle]
pub extern "C" fn vlq_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message (NUL-terminated, truncated to fit) into
/// `buf` and returns its full length.
///
/// # Safety
/// `buf` must be valid for `cap` writes, or null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn vlq_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Opaque model structure.
pub struct VlqStructure {
    inner: VolterraStructure,
}

/// Opaque training problem.
pub struct VlqObjective {
    inner: QuadraticObjective,
}

/// Opaque fit result.
pub struct VlqReport {
    inner: FitReport,
    /// Dictionary scale selected by tuning; 1 for plain fits.
    r: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VlqFitSummary {
    pub objective: f64,
    pub gap: f64,
    pub norm_q: f64,
    pub norm_1: f64,
    pub radius: f64,
    pub r: f64,
    pub iterations: usize,
    pub dim: usize,
    pub converged: bool,
}

/// Solver settings; zero fields mean "library default".
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VlqSolverOptions {
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl VlqSolverOptions {
    fn to_rust(opts: *const VlqSolverOptions) -> SolverOptions {
        // SAFETY: null or valid per the public contracts.
        let o = unsafe { opts.as_ref() };
        SolverOptions {
            gap_tol: o.map(|o| o.gap_tol).filter(|&g| g > 0.0),
            max_iters: o.map(|o| o.max_iters).filter(|&m| m > 0),
            ..SolverOptions::default()
        }
    }
}

/// Creates a structure of degree `degree` with one memory length per order.
///
/// # Safety
/// `memory_lengths` must hold `degree` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlq_structure_new(
    degree: usize,
    memory_lengths: *const usize,
    include_constant: bool,
    out_structure: *mut *mut VlqStructure,
) -> VlqStatus {
    guard(|| {
        let lens = slice(memory_lengths, degree)?.to_vec();
        let inner = VolterraStructure::new(lens, include_constant).map_err(lib_err)?;
        out(out_structure, Box::into_raw(Box::new(VlqStructure { inner })))
    })
}

/// # Safety
/// `structure` must be null or come from [`vlq_structure_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn vlq_structure_free(structure: *mut VlqStructure) {
    if !structure.is_null() {
        drop(Box::from_raw(structure));
    }
}

/// Number of dictionary terms `D`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vlq_structure_count_params(
    structure: *const VlqStructure,
    out_count: *mut usize,
) -> VlqStatus {
    guard(|| {
        let s = object(structure)?;
        let d = s.inner.count_params().map_err(lib_err)?;
        out(out_count, d)
    })
}

/// Builds the training problem from `n` input/output samples; the first
/// `tau` samples only provide history.
///
/// # Safety
/// `u` and `y` must hold `n` values each; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vlq_objective_new(
    structure: *const VlqStructure,
    u: *const f64,
    y: *const f64,
    n: usize,
    tau: usize,
    out_objective: *mut *mut VlqObjective,
) -> VlqStatus {
    guard(|| {
        let s = object(structure)?;
        let data = Dataset::new(slice(u, n)?.to_vec(), slice(y, n)?.to_vec(), tau).map_err(lib_err)?;
        let inner = QuadraticObjective::from_dataset(&data, &s.inner).map_err(lib_err)?;
        out(out_objective, Box::into_raw(Box::new(VlqObjective { inner })))
    })
}

/// # Safety
/// `objective` must be null or come from [`vlq_objective_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn vlq_objective_free(objective: *mut VlqObjective) {
    if !objective.is_null() {
        drop(Box::from_raw(objective));
    }
}

/// Minimizes the mean squared residual over `||theta||_q <= radius`.
/// `options` may be null. Hitting the iteration cap is not an error; check
/// `converged` in the summary.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vlq_fit(
    objective: *const VlqObjective,
    q: f64,
    radius: f64,
    options: *const VlqSolverOptions,
    out_report: *mut *mut VlqReport,
) -> VlqStatus {
    guard(|| {
        let o = object(objective)?;
        let opts = VlqSolverOptions::to_rust(options);
        let inner = solver::fit(&o.inner, q, radius, &opts).map_err(lib_err)?;
        out(out_report, Box::into_raw(Box::new(VlqReport { inner, r: 1.0 })))
    })
}

/// Selects the dictionary scale `R` so that the fitted norm lands just inside
/// `D^(1/q - 1)`, and returns that fit mapped back to the unscaled
/// dictionary. `relative_epsilon <= 0` uses the default band.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vlq_tune_fit(
    objective: *const VlqObjective,
    q: f64,
    relative_epsilon: f64,
    options: *const VlqSolverOptions,
    out_report: *mut *mut VlqReport,
) -> VlqStatus {
    guard(|| {
        let o = object(objective)?;
        let topts = TuningOptions {
            solver: VlqSolverOptions::to_rust(options),
            ..TuningOptions::default()
        };
        let target = volterra_lq::norms::scaled_radius(o.inner.dim(), q, 1.0);
        let eps = (relative_epsilon > 0.0).then(|| relative_epsilon * target);
        let t = tune_r(&o.inner, q, eps, &topts).map_err(lib_err)?;
        let inner = t
            .unscaled_fit()
            .ok_or_else(|| fail(VlqStatus::Internal, "tuning returned no fit"))?;
        out(out_report, Box::into_raw(Box::new(VlqReport { inner, r: t.r })))
    })
}

/// # Safety
/// `report` must be null or come from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn vlq_report_free(report: *mut VlqReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vlq_report_summary(report: *const VlqReport, out_summary: *mut VlqFitSummary) -> VlqStatus {
    guard(|| {
        let r = object(report)?;
        let f = &r.inner;
        out(
            out_summary,
            VlqFitSummary {
                objective: f.objective,
                gap: f.gap,
                norm_q: f.norm_q,
                norm_1: f.norm_1,
                radius: f.coefficients.radius,
                r: r.r,
                iterations: f.iterations,
                dim: f.coefficients.len(),
                converged: f.converged,
            },
        )
    })
}

/// Copies the `D` fitted coefficients (canonical term order) into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn vlq_report_coefficients(report: *const VlqReport, buf: *mut f64, len: usize) -> VlqStatus {
    guard(|| {
        let r = object(report)?;
        let v = &r.inner.coefficients.values;
        if len < v.len() {
            return Err(fail(
                VlqStatus::BufferTooSmall,
                format!("need {} coefficients, buffer holds {len}", v.len()),
            ));
        }
        slice_mut(buf, v.len())?.copy_from_slice(v);
        Ok(())
    })
}

/// Minimizer of `<g, s>` over `||s||_q <= radius`, written to `out_s`.
///
/// # Safety
/// `g` and `out_s` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn vlq_lmo(g: *const f64, dim: usize, q: f64, radius: f64, out_s: *mut f64) -> VlqStatus {
    guard(|| {
        if !(q >= 1.0 && q.is_finite() && radius > 0.0) {
            return Err(fail(VlqStatus::InvalidArgument, "need q >= 1 and radius > 0"));
        }
        let s = solver::lmo(slice(g, dim)?, q, radius);
        slice_mut(out_s, dim)?.copy_from_slice(&s);
        Ok(())
    })
}

/// Euclidean projection onto `||x||_1 <= radius`.
///
/// # Safety
/// `point` and `out_x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn vlq_project_l1(point: *const f64, dim: usize, radius: f64, out_x: *mut f64) -> VlqStatus {
    guard(|| {
        if !(radius > 0.0) {
            return Err(fail(VlqStatus::InvalidArgument, "radius must be positive"));
        }
        let x = solver::project_l1(slice(point, dim)?, radius);
        slice_mut(out_x, dim)?.copy_from_slice(&x);
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlqBound {
    Theorem1 = 0,
    Scaled = 1,
    QPenalty = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VlqBoundParams {
    pub n: usize,
    pub tau: usize,
    pub d: usize,
    pub m: f64,
    pub sigma: f64,
    /// Dictionary scale; used by `VLQ_BOUND_SCALED`.
    pub r: f64,
    /// Sparsity level, 0 for none; used by `VLQ_BOUND_Q_PENALTY`.
    pub k: usize,
    /// Norm order; used by `VLQ_BOUND_Q_PENALTY`.
    pub q: f64,
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vlq_bound(kind: VlqBound, params: *const VlqBoundParams, out_value: *mut f64) -> VlqStatus {
    guard(|| {
        let p = object(params)?;
        let mut b = BoundParams::new(p.n, p.tau, p.d, p.m, p.sigma);
        b.k = (p.k > 0).then_some(p.k);
        let v = match kind {
            VlqBound::Theorem1 => bounds::bound_theorem1(&b),
            VlqBound::Scaled => {
                b.r = p.r;
                bounds::bound_scaled(&b)
            }
            VlqBound::QPenalty => bounds::bound_q_penalty(&b, p.q),
        }
        .map_err(lib_err)?;
        out(out_value, v)
    })
}

/// `n` samples of the WH2 system driven by uniform white noise of unit
/// variance. `snr <= 0` leaves the output noiseless.
///
/// # Safety
/// `out_u` and `out_y` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn vlq_simulate_wh2(n: usize, seed: u64, snr: f64, out_u: *mut f64, out_y: *mut f64) -> VlqStatus {
    guard(|| {
        let mut spec = SignalSpec::white(n, seed);
        spec.snr = (snr > 0.0).then(|| Snr::linear(snr));
        let sim = simulate(&BlockCascade::wh2(), &spec).map_err(lib_err)?;
        slice_mut(out_u, n)?.copy_from_slice(sim.dataset.input());
        slice_mut(out_y, n)?.copy_from_slice(sim.dataset.output());
        Ok(())
    })
}
