//! C ABI over the holoclass library.
//!
//! Banks and classifiers cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`HcStatus`]; on failure [`hc_last_error`] describes what went
//! wrong on the calling thread. Panics are caught and reported as
//! [`HcStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use holoclass::attack::AttackError;
use holoclass::detect::{in_polyhedron, DetectError};
use holoclass::model::ModelError;
use holoclass::{pgd, reflect_project, AttackConfig, Classifier, FeatureBank, FeatureKind, TemplateConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Model = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcKind {
    Cosine = 0,
    Holomorphic = 1,
}

impl From<HcKind> for FeatureKind {
    fn from(k: HcKind) -> Self {
        match k {
            HcKind::Cosine => FeatureKind::Cosine,
            HcKind::Holomorphic => FeatureKind::Holomorphic,
        }
    }
}

/// PGD settings; a negative `target` means untargeted.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HcAttackConfig {
    pub radius: f64,
    pub steps: usize,
    pub step_size: f64,
    pub target: i64,
    pub aware_extra: bool,
    pub seed: u64,
}

/// Feature bank handle.
pub struct HcBank(Arc<FeatureBank>);

/// Classifier handle.
pub struct HcClassifier(Classifier);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (HcStatus, String);

fn fail<T>(status: HcStatus, msg: impl ToString) -> Result<T, Failure> {
    Err((status, msg.to_string()))
}

fn model_failure(e: ModelError) -> Failure {
    let status = match e {
        ModelError::Io(_) => HcStatus::Io,
        ModelError::DimensionMismatch { .. } | ModelError::LabelOutOfRange { .. } => HcStatus::InvalidArgument,
        _ => HcStatus::Model,
    };
    (status, e.to_string())
}

fn run(f: impl FnOnce() -> Result<(), Failure> + UnwindSafe) -> HcStatus {
    let (status, msg) = match catch_unwind(f) {
        Ok(Ok(())) => return HcStatus::Ok,
        Ok(Err(failure)) => failure,
        Err(_) => (HcStatus::Panic, "panic inside holoclass".to_string()),
    };
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
    status
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| (HcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| (HcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return fail(HcStatus::NullPointer, "pixels is null");
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(HcStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(HcStatus::InvalidArgument, "path is not UTF-8"),
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds the built-in template bank for a `rows` x `cols` image.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hc_bank_default(rows: usize, cols: usize, kind: HcKind, out: *mut *mut HcBank) -> HcStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let cfg = TemplateConfig::default_family(kind.into());
        let bank = FeatureBank::from_templates((rows, cols), &cfg).or_else(|e| fail(HcStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(HcBank(Arc::new(bank))));
        Ok(())
    })
}

/// Builds a bank from a template config file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hc_bank_from_template_file(
    template_path: *const c_char,
    rows: usize,
    cols: usize,
    out: *mut *mut HcBank,
) -> HcStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let p = path(template_path)?;
        let cfg = TemplateConfig::load(&p).or_else(|e| fail(HcStatus::InvalidArgument, e))?;
        let bank = FeatureBank::from_templates((rows, cols), &cfg).or_else(|e| fail(HcStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(HcBank(Arc::new(bank))));
        Ok(())
    })
}

/// Number of features, or 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_bank_len(bank: *const HcBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `bank` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_bank_free(bank: *mut HcBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Loads a checkpoint written for `bank`. The classifier keeps its own
/// reference to the bank, so the bank handle may be freed afterwards.
///
/// # Safety
/// `bank` must be a live handle, `path` nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_load(
    bank: *const HcBank,
    checkpoint_path: *const c_char,
    out: *mut *mut HcClassifier,
) -> HcStatus {
    run(|| {
        let bank = handle(bank, "bank")?;
        let out = out_ptr(out, "out")?;
        let p = path(checkpoint_path)?;
        let c = Classifier::load(&p, bank.0.clone()).map_err(model_failure)?;
        *out = Box::into_raw(Box::new(HcClassifier(c)));
        Ok(())
    })
}

/// # Safety
/// `c` must be a live handle and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_save(c: *const HcClassifier, checkpoint_path: *const c_char) -> HcStatus {
    run(|| {
        let c = handle(c, "classifier")?;
        c.0.save(&path(checkpoint_path)?).map_err(model_failure)
    })
}

/// Number of true labels (the zero-class excluded), or 0 for null.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_num_labels(c: *const HcClassifier) -> usize {
    c.as_ref().map_or(0, |c| c.0.num_labels())
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_has_zero_class(c: *const HcClassifier) -> bool {
    c.as_ref().is_some_and(|c| c.0.has_zero_class())
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_free(c: *mut HcClassifier) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Writes the logits (zero-class last, if attached) into `logits`.
/// `written` receives the logit count even when `capacity` is too small, in
/// which case nothing is written and `InvalidArgument` is returned.
///
/// # Safety
/// `pixels` must hold `len` values, `logits` `capacity` slots; `written`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_forward(
    c: *const HcClassifier,
    pixels: *const f64,
    len: usize,
    logits: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> HcStatus {
    run(|| {
        let c = handle(c, "classifier")?;
        let written = out_ptr(written, "written")?;
        let l = c.0.forward(slice(pixels, len)?).map_err(model_failure)?;
        *written = l.values.len();
        if capacity < l.values.len() {
            return fail(HcStatus::InvalidArgument, format!("need room for {} logits", l.values.len()));
        }
        if logits.is_null() {
            return fail(HcStatus::NullPointer, "logits is null");
        }
        std::slice::from_raw_parts_mut(logits, l.values.len()).copy_from_slice(&l.values);
        Ok(())
    })
}

/// Predicted label; equals the label count when the zero-class wins.
///
/// # Safety
/// `pixels` must hold `len` values and `label` be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_classifier_predict(
    c: *const HcClassifier,
    pixels: *const f64,
    len: usize,
    label: *mut usize,
) -> HcStatus {
    run(|| {
        let c = handle(c, "classifier")?;
        let label = out_ptr(label, "label")?;
        *label = c.0.predict(slice(pixels, len)?).map_err(model_failure)?;
        Ok(())
    })
}

/// Whether every class magnitude is below 1 (holomorphic classifiers with a
/// zero-class only).
///
/// # Safety
/// `pixels` must hold `len` values and `inside` be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_in_polyhedron(
    c: *const HcClassifier,
    pixels: *const f64,
    len: usize,
    inside: *mut bool,
) -> HcStatus {
    run(|| {
        let c = handle(c, "classifier")?;
        let inside = out_ptr(inside, "inside")?;
        *inside = in_polyhedron(&c.0, slice(pixels, len)?).map_err(|e| match e {
            DetectError::Model(m) => model_failure(m),
            e => (HcStatus::InvalidArgument, e.to_string()),
        })?;
        Ok(())
    })
}

/// Mirrors `x` back into `[0, 1]` (triangle wave).
#[no_mangle]
pub extern "C" fn hc_reflect_project(x: f64) -> f64 {
    reflect_project(x)
}

/// Default PGD settings: radius 0.3, 40 steps of 0.01, untargeted,
/// zero-class in the loss, seed 0.
#[no_mangle]
pub extern "C" fn hc_attack_config_default() -> HcAttackConfig {
    let d = AttackConfig::default();
    HcAttackConfig {
        radius: d.radius,
        steps: d.steps,
        step_size: d.step_size,
        target: d.target.map_or(-1, |t| t as i64),
        aware_extra: d.aware_extra,
        seed: d.seed,
    }
}

/// Runs PGD from `pixels` (true label `label`) and writes the adversarial
/// example into `out`, which must hold `len` values.
///
/// # Safety
/// `pixels` and `out` must hold `len` values; `cfg` must be readable.
#[no_mangle]
pub unsafe extern "C" fn hc_pgd(
    c: *const HcClassifier,
    pixels: *const f64,
    len: usize,
    label: usize,
    cfg: *const HcAttackConfig,
    out: *mut f64,
) -> HcStatus {
    run(|| {
        let c = handle(c, "classifier")?;
        let cfg = handle(cfg, "cfg")?;
        if out.is_null() {
            return fail(HcStatus::NullPointer, "out is null");
        }
        let attack = AttackConfig {
            radius: cfg.radius,
            steps: cfg.steps,
            step_size: cfg.step_size,
            target: usize::try_from(cfg.target).ok(),
            aware_extra: cfg.aware_extra,
            seed: cfg.seed,
        };
        let adv = pgd(&c.0, slice(pixels, len)?, label, &attack).map_err(|e| match e {
            AttackError::Model(m) => model_failure(m),
            e => (HcStatus::InvalidArgument, e.to_string()),
        })?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&adv);
        Ok(())
    })
}

/// Student-t quantile with `nu` degrees of freedom.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_t_inverse_cdf(nu: u32, p: f64, out: *mut f64) -> HcStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        *out = holoclass::stats::t_inverse_cdf(nu, p).or_else(|e| fail(HcStatus::InvalidArgument, e))?;
        Ok(())
    })
}
