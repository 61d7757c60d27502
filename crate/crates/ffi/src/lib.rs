//! C interface to the `lifespan` library.
//!
//! Objects are opaque handles created by `ls_*_new`/`ls_*_load` style calls
//! and released with the matching `ls_*_free`. Every fallible call returns an
//! [`LsStatus`]; on failure [`ls_last_error`] describes what went wrong on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lifespan::inference::{self, pool_inverse_variance};
use lifespan::likelihood::{fit_mle, FitOptions, FitResult};
use lifespan::{synthetic, Dataset, Error, ErrorKind, ExcessSample, Family, LifetimeModel, SamplingFrame};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    IoError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsFamily {
    Gpd = 0,
    Exponential = 1,
    Gompertz = 2,
}

impl From<LsFamily> for Family {
    fn from(f: LsFamily) -> Self {
        match f {
            LsFamily::Gpd => Family::Gpd,
            LsFamily::Exponential => Family::Exponential,
            LsFamily::Gompertz => Family::Gompertz,
        }
    }
}

/// A validated data set with its sampling frame.
pub struct LsDataset(Dataset);

/// A fitted model with standard errors and fit metadata.
pub struct LsFit(FitResult);

/// A parametric lifetime distribution for the excess over the threshold.
pub struct LsModel(LifetimeModel);

/// Test statistic and p-value.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pooled estimate with its standard error and confidence limits.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LsPooled {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsStatus {
    match e.kind() {
        ErrorKind::Usage => LsStatus::InvalidArgument,
        ErrorKind::Data => LsStatus::DataError,
        ErrorKind::Numerical => LsStatus::NumericalError,
        ErrorKind::Io => LsStatus::IoError,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            LsStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            LsStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Lib(Error::InvalidParameter(format!("{what} is not UTF-8"))))
}

fn sample_at(ds: &Dataset, threshold: f64) -> Result<ExcessSample, Fail> {
    if threshold.is_nan() {
        Ok(ds.sample())
    } else {
        Ok(ds.at_threshold(threshold)?)
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a model. `p2` is ignored for the exponential family.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_model_new(family: LsFamily, p1: f64, p2: f64, out_model: *mut *mut LsModel) -> LsStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let m = match family {
            LsFamily::Gpd => LifetimeModel::gpd(p1, p2)?,
            LsFamily::Exponential => LifetimeModel::exponential(p1)?,
            LsFamily::Gompertz => LifetimeModel::gompertz(p1, p2)?,
        };
        *slot = Box::into_raw(Box::new(LsModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ls_model_free(model: *mut LsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Survival probability beyond excess `x` years.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_model_survival(model: *const LsModel, x: f64, value: *mut f64) -> LsStatus {
    guard(|| {
        *out(value, "value")? = get(model, "model")?.0.sf(x);
        Ok(())
    })
}

/// Density at excess `x` years.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_model_density(model: *const LsModel, x: f64, value: *mut f64) -> LsStatus {
    guard(|| {
        *out(value, "value")? = get(model, "model")?.0.pdf(x);
        Ok(())
    })
}

/// Hazard at excess `x` years, per year.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_model_hazard(model: *const LsModel, x: f64, value: *mut f64) -> LsStatus {
    guard(|| {
        *out(value, "value")? = get(model, "model")?.0.hazard(x)?;
        Ok(())
    })
}

/// Quantile of probability `p`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_model_quantile(model: *const LsModel, p: f64, value: *mut f64) -> LsStatus {
    guard(|| {
        *out(value, "value")? = get(model, "model")?.0.quantile(p)?;
        Ok(())
    })
}

/// Loads a records CSV under the frame given as JSON text.
///
/// # Safety
/// Strings must be NUL-terminated; `out_dataset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_load_csv(path: *const c_char, frame_json: *const c_char, out_dataset: *mut *mut LsDataset) -> LsStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let frame = SamplingFrame::from_json(string(frame_json, "frame_json")?)?;
        let path = string(path, "path")?;
        let ds = Dataset::load_csv(path, frame, path)?;
        *slot = Box::into_raw(Box::new(LsDataset(ds)));
        Ok(())
    })
}

/// Simulates a synthetic data set (`istat`, `france` or `idl`).
///
/// # Safety
/// `preset` must be NUL-terminated; `out_dataset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_generate(preset: *const c_char, seed: u64, out_dataset: *mut *mut LsDataset) -> LsStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let ds = synthetic::by_name(string(preset, "preset")?)?.generate(seed)?;
        *slot = Box::into_raw(Box::new(LsDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_free(dataset: *mut LsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_len(dataset: *const LsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Number of deaths, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_deaths(dataset: *const LsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.n_deaths())
}

/// Fits `family` above `threshold`; NaN uses the frame's threshold.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit(dataset: *const LsDataset, threshold: f64, family: LsFamily, out_fit: *mut *mut LsFit) -> LsStatus {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        let sample = sample_at(&get(dataset, "dataset")?.0, threshold)?;
        let opts = FitOptions::default();
        let fit = match family {
            LsFamily::Exponential => inference::fit_exponential(&sample, &opts)?,
            f => fit_mle(&sample, f.into(), None, &opts)?,
        };
        *slot = Box::into_raw(Box::new(LsFit(fit)));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_free(fit: *mut LsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of parameters, or 0 for a null handle.
///
/// # Safety
/// `fit` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_n_parameters(fit: *const LsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.model.parameters().len())
}

/// Estimate and standard error of parameter `index` (σ first). The standard
/// error is NaN when the observed information is not positive definite.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_parameter(fit: *const LsFit, index: usize, estimate: *mut f64, se: *mut f64) -> LsStatus {
    guard(|| {
        let f = &get(fit, "fit")?.0;
        let params = f.model.parameters();
        let est = *params.get(index).ok_or_else(|| Error::InvalidParameter(format!("parameter index {index} out of range")))?;
        *out(estimate, "estimate")? = est;
        *out(se, "se")? = f.std_errors.as_ref().map_or(f64::NAN, |s| s[index]);
        Ok(())
    })
}

/// Maximized log-likelihood.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_loglik(fit: *const LsFit, value: *mut f64) -> LsStatus {
    guard(|| {
        *out(value, "value")? = get(fit, "fit")?.0.loglik;
        Ok(())
    })
}

/// Copies the fitted distribution into a new model handle.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_model(fit: *const LsFit, out_model: *mut *mut LsModel) -> LsStatus {
    guard(|| {
        let m = get(fit, "fit")?.0.model;
        *out(out_model, "out_model")? = Box::into_raw(Box::new(LsModel(m)));
        Ok(())
    })
}

/// The fit as JSON. Release with [`ls_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_to_json(fit: *const LsFit, out_json: *mut *mut c_char) -> LsStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let s = get(fit, "fit")?.0.to_json().to_string();
        *slot = CString::new(s).map_err(|e| Error::Undefined(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Likelihood-ratio test of γ = 0 in the GPD, against χ²₁.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_lrt_gamma_zero(dataset: *const LsDataset, threshold: f64, result: *mut LsTest) -> LsStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let t = inference::lrt_gamma_zero(&sample_at(&get(dataset, "dataset")?.0, threshold)?)?;
        *slot = LsTest { statistic: t.statistic, p_value: t.p_value };
        Ok(())
    })
}

/// Boundary likelihood-ratio test of β = 0 in the Gompertz model, against ½χ²₀ + ½χ²₁.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_boundary_test_gompertz(dataset: *const LsDataset, threshold: f64, result: *mut LsTest) -> LsStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let t = inference::boundary_lrt_gompertz(&sample_at(&get(dataset, "dataset")?.0, threshold)?)?;
        *slot = LsTest { statistic: t.statistic, p_value: t.p_value };
        Ok(())
    })
}

/// Inverse-variance pooling of `n` estimates with standard errors.
///
/// # Safety
/// `estimates` and `ses` must point to `n` values; `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_pool(estimates: *const f64, ses: *const f64, n: usize, level: f64, result: *mut LsPooled) -> LsStatus {
    guard(|| {
        let slot = out(result, "result")?;
        if n > 0 && (estimates.is_null() || ses.is_null()) {
            return Err(Fail::Null("estimates"));
        }
        let pairs: Vec<(f64, f64)> = if n == 0 {
            Vec::new()
        } else {
            let e = std::slice::from_raw_parts(estimates, n);
            let s = std::slice::from_raw_parts(ses, n);
            e.iter().copied().zip(s.iter().copied()).collect()
        };
        let p = pool_inverse_variance(&pairs, level)?;
        *slot = LsPooled { estimate: p.estimate, se: p.se, lower: p.lower, upper: p.upper };
        Ok(())
    })
}
