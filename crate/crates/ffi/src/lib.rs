//! C ABI over the `sbar` library.
//!
//! Kernels and plans are opaque heap handles created by `sbar_*` constructors
//! and released with the matching `*_free`. Every fallible call returns an
//! [`SbarStatus`]; on failure [`sbar_last_error`] describes what went wrong.
//! No function unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;
use sbar::analysis::lemma1_mse;
use sbar::channel::{ArrayGeometry, PilotBatch, PortSchedule};
use sbar::kernels::{bessel_kernel, exponential_kernel, Kernel, KernelHyper, KernelLabel};
use sbar::linalg::{CMatrix, CVector};
use sbar::sbar::{design_plan, reconstruct};
use sbar::SbarError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Capacity = 3,
    ScheduleMismatch = 4,
    NumericalFailure = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// Interleaved complex number, layout-compatible with `double _Complex`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbarComplex {
    pub re: f64,
    pub im: f64,
}

/// Prior covariance over the ports.
pub struct SbarKernel(Kernel);

/// Port schedule and reconstruction weights.
pub struct SbarPlan(sbar::sbar::SbarPlan);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &SbarError) -> SbarStatus {
    match e {
        SbarError::Capacity { .. } => SbarStatus::Capacity,
        SbarError::ScheduleMismatch(_) | SbarError::Shape(_) => SbarStatus::ScheduleMismatch,
        SbarError::NumericalFailure { .. } | SbarError::NotHermitian { .. } => SbarStatus::NumericalFailure,
        SbarError::Io(_) => SbarStatus::Io,
        SbarError::Format(_) => SbarStatus::Format,
        _ => SbarStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(SbarError),
}

impl From<SbarError> for Failure {
    fn from(e: SbarError) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SbarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SbarStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer passed for `{what}`"));
            SbarStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(&msg);
            SbarStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SbarStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::Null("out"))
    } else {
        Ok(())
    }
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next `sbar_*` call on the same thread.
#[no_mangle]
pub extern "C" fn sbar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn parametric(
    num_ports: usize,
    wavelength: f64,
    aperture: f64,
    alpha_sq: f64,
    eta_sq: f64,
    order: u32,
    bessel: bool,
) -> Result<Kernel, Failure> {
    let geometry = ArrayGeometry::new(num_ports, wavelength, aperture)?;
    let hyper = KernelHyper {
        alpha_sq,
        eta_sq,
        bessel_order: order,
    };
    Ok(if bessel {
        bessel_kernel(&geometry, hyper)?
    } else {
        exponential_kernel(&geometry, hyper)?
    })
}

/// Squared-exponential kernel `α² exp(-|x - x'|² / η²)` over a uniform array.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_kernel_exponential(
    num_ports: usize,
    wavelength: f64,
    aperture: f64,
    alpha_sq: f64,
    eta_sq: f64,
    out: *mut *mut SbarKernel,
) -> SbarStatus {
    guard(|| {
        check_out(out)?;
        let k = parametric(num_ports, wavelength, aperture, alpha_sq, eta_sq, 0, false)?;
        emit(out, SbarKernel(k))
    })
}

/// Bessel kernel `α² J_ν(|x - x'| / η²)`, regularised to be positive
/// semidefinite.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_kernel_bessel(
    num_ports: usize,
    wavelength: f64,
    aperture: f64,
    alpha_sq: f64,
    eta_sq: f64,
    order: u32,
    out: *mut *mut SbarKernel,
) -> SbarStatus {
    guard(|| {
        check_out(out)?;
        let k = parametric(num_ports, wavelength, aperture, alpha_sq, eta_sq, order, true)?;
        emit(out, SbarKernel(k))
    })
}

/// Kernel from a row-major `num_ports x num_ports` Hermitian matrix.
///
/// # Safety
/// `entries` must point to `num_ports * num_ports` readable values and `out`
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_kernel_from_matrix(
    num_ports: usize,
    entries: *const SbarComplex,
    out: *mut *mut SbarKernel,
) -> SbarStatus {
    guard(|| {
        check_out(out)?;
        if num_ports == 0 {
            return Err(Failure::Invalid("kernel needs at least one port".into()));
        }
        let len = num_ports
            .checked_mul(num_ports)
            .ok_or_else(|| Failure::Invalid("port count overflows".into()))?;
        let data = slice(entries, len, "entries")?;
        let m = CMatrix::from_fn(num_ports, num_ports, |i, j| {
            let z = data[i * num_ports + j];
            Complex64::new(z.re, z.im)
        });
        emit(out, SbarKernel(Kernel::from_matrix(m, KernelLabel::Custom)?))
    })
}

/// Number of ports, or 0 for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_kernel_num_ports(kernel: *const SbarKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.0.num_ports())
}

/// Releases a kernel. Null is ignored.
///
/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sbar_kernel_free(kernel: *mut SbarKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Greedy design of `pilots * antennas` ports and their weights.
///
/// # Safety
/// `kernel` must be a live handle and `out` writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_design(
    kernel: *const SbarKernel,
    pilots: usize,
    antennas: usize,
    noise_variance: f64,
    out: *mut *mut SbarPlan,
) -> SbarStatus {
    guard(|| {
        check_out(out)?;
        let k = deref(kernel, "kernel")?;
        emit(out, SbarPlan(design_plan(&k.0, pilots, antennas, noise_variance)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable storage for one
/// handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_load(path: *const c_char, out: *mut *mut SbarPlan) -> SbarStatus {
    guard(|| {
        check_out(out)?;
        let p = path_arg(path)?;
        emit(out, SbarPlan(sbar::sbar::SbarPlan::load(p)?))
    })
}

/// # Safety
/// `plan` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_save(plan: *const SbarPlan, path: *const c_char) -> SbarStatus {
    guard(|| {
        let plan = deref(plan, "plan")?;
        plan.0.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Number of scheduled ports (`P * M`), or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_num_pilots(plan: *const SbarPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.schedule.len())
}

/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_num_ports(plan: *const SbarPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.num_ports())
}

/// Copies the zero-based scheduled ports, in measurement order, into `ports`.
///
/// # Safety
/// `plan` must be a live handle and `ports` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_schedule(plan: *const SbarPlan, ports: *mut usize, len: usize) -> SbarStatus {
    guard(|| {
        let plan = deref(plan, "plan")?;
        let idx = plan.0.schedule.indices();
        if len != idx.len() {
            return Err(SbarError::ScheduleMismatch(format!("plan has {} ports, buffer holds {len}", idx.len())).into());
        }
        if ports.is_null() {
            return Err(Failure::Null("ports"));
        }
        ptr::copy_nonoverlapping(idx.as_ptr(), ports, len);
        Ok(())
    })
}

/// `ĥ = Wᴴ y` for pilots `y` received on the plan's schedule.
///
/// # Safety
/// `pilots` must hold `num_pilots` readable values and `out` `num_ports`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_reconstruct(
    plan: *const SbarPlan,
    pilots: *const SbarComplex,
    num_pilots: usize,
    out: *mut SbarComplex,
    num_ports: usize,
) -> SbarStatus {
    guard(|| {
        let plan = deref(plan, "plan")?;
        if num_ports != plan.0.num_ports() {
            return Err(SbarError::ScheduleMismatch(format!(
                "plan covers {} ports, output holds {num_ports}",
                plan.0.num_ports()
            ))
            .into());
        }
        let y = slice(pilots, num_pilots, "pilots")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let batch = PilotBatch::new(
            CVector::from_iterator(y.len(), y.iter().map(|z| Complex64::new(z.re, z.im))),
            plan.0.design_noise_variance,
        )?;
        let h = reconstruct(&plan.0, &batch)?;
        for (i, z) in h.entries().iter().enumerate() {
            *out.add(i) = SbarComplex { re: z.re, im: z.im };
        }
        Ok(())
    })
}

/// Releases a plan. Null is ignored.
///
/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sbar_plan_free(plan: *mut SbarPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Expected squared reconstruction error when weights designed from `kernel`
/// meet channels with covariance `true_cov`, for zero-based `ports` grouped
/// into `pilots` slots of `antennas`.
///
/// # Safety
/// Both kernels must be live handles, `ports` must hold `num_ports` readable
/// values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sbar_lemma1_mse(
    kernel: *const SbarKernel,
    true_cov: *const SbarKernel,
    ports: *const usize,
    num_ports: usize,
    pilots: usize,
    antennas: usize,
    noise_variance: f64,
    out: *mut f64,
) -> SbarStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        let c = deref(true_cov, "true_cov")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let idx = slice(ports, num_ports, "ports")?;
        let schedule = PortSchedule::new(idx.to_vec(), pilots, antennas, k.0.num_ports())?;
        *out = lemma1_mse(&k.0, &c.0, &schedule, noise_variance)?;
        Ok(())
    })
}
