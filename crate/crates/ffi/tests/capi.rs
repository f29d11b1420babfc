use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use holoclass::model::{Coefficients, Params};
use holoclass::{Classifier, FeatureBank, FeatureKind, TemplateConfig};
use holoclass_ffi::*;
use num_complex::Complex64;

const TEMPLATES: &str = r#"
kind = "Holomorphic"
dilations = [1]
[[mask]]
rows = ["11"]
"#;

fn last_error() -> String {
    let p = hc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

/// A 2x2 holomorphic classifier whose first class is large at 0 and second
/// vanishes at 0, written next to its template file.
fn fixture(dir: &Path) -> (CString, CString) {
    let t = dir.join("templates.toml");
    std::fs::write(&t, TEMPLATES).unwrap();
    let bank = Arc::new(FeatureBank::from_templates((2, 2), &TemplateConfig::load(&t).unwrap()).unwrap());
    let k = bank.len();
    let mut weights = vec![Complex64::new(0.0, 0.0); 2 * k];
    weights[0] = Complex64::new(3.0, 0.0);
    weights[k] = Complex64::new(0.5, 0.0);
    let bias = vec![Complex64::new(0.0, 0.0), Complex64::new(-0.5, 0.0)];
    let c = Classifier::from_params(bank, 2, Params::Complex(Coefficients { weights, bias }), true).unwrap();
    let ck = dir.join("h.ckpt");
    c.save(&ck).unwrap();
    (cstr(&t), cstr(&ck))
}

struct Loaded {
    bank: *mut HcBank,
    c: *mut HcClassifier,
}

impl Drop for Loaded {
    fn drop(&mut self) {
        unsafe {
            hc_classifier_free(self.c);
            hc_bank_free(self.bank);
        }
    }
}

fn load(dir: &Path) -> Loaded {
    let (t, ck) = fixture(dir);
    let mut bank = ptr::null_mut();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(hc_bank_from_template_file(t.as_ptr(), 2, 2, &mut bank), HcStatus::Ok);
        assert_eq!(hc_bank_len(bank), 6);
        assert_eq!(hc_classifier_load(bank, ck.as_ptr(), &mut c), HcStatus::Ok);
    }
    Loaded { bank, c }
}

#[test]
fn forward_predict_and_polyhedron() {
    let dir = tempfile::tempdir().unwrap();
    let m = load(dir.path());
    let x = [0.0; 4];
    unsafe {
        assert_eq!(hc_classifier_num_labels(m.c), 2);
        assert!(hc_classifier_has_zero_class(m.c));
        let mut logits = [0.0; 3];
        let mut n = 0;
        assert_eq!(hc_classifier_forward(m.c, x.as_ptr(), 4, logits.as_mut_ptr(), 3, &mut n), HcStatus::Ok);
        assert_eq!(n, 3);
        assert_eq!(logits[2], 0.0);
        let mut label = 9;
        assert_eq!(hc_classifier_predict(m.c, x.as_ptr(), 4, &mut label), HcStatus::Ok);
        assert_eq!(label, 0);
        let mut inside = true;
        assert_eq!(hc_in_polyhedron(m.c, x.as_ptr(), 4, &mut inside), HcStatus::Ok);
        assert!(!inside);
    }
}

#[test]
fn forward_reports_required_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let m = load(dir.path());
    let x = [0.2; 4];
    let mut logits = [0.0; 1];
    let mut n = 0;
    let s = unsafe { hc_classifier_forward(m.c, x.as_ptr(), 4, logits.as_mut_ptr(), 1, &mut n) };
    assert_eq!(s, HcStatus::InvalidArgument);
    assert_eq!(n, 3);
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let m = load(dir.path());
    let x = [0.0; 3];
    let mut label = 0;
    unsafe {
        assert_eq!(hc_classifier_predict(m.c, x.as_ptr(), 3, &mut label), HcStatus::InvalidArgument);
        assert!(last_error().contains("3 pixels"));
        assert_eq!(hc_classifier_predict(ptr::null(), x.as_ptr(), 3, &mut label), HcStatus::NullPointer);
        let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
        let mut c = ptr::null_mut();
        assert_eq!(hc_classifier_load(m.bank, missing.as_ptr(), &mut c), HcStatus::Io);
        assert!(c.is_null());
        let mut q = 0.0;
        assert_eq!(hc_t_inverse_cdf(0, 0.5, &mut q), HcStatus::InvalidArgument);
    }
}

#[test]
fn pgd_stays_in_ball_and_box() {
    let dir = tempfile::tempdir().unwrap();
    let m = load(dir.path());
    let x = [0.1, 0.5, 0.9, 0.0];
    let cfg = hc_attack_config_default();
    assert_eq!(cfg.target, -1);
    let mut adv = [0.0; 4];
    unsafe {
        assert_eq!(hc_pgd(m.c, x.as_ptr(), 4, 0, &cfg, adv.as_mut_ptr()), HcStatus::Ok);
    }
    for (a, b) in adv.iter().zip(&x) {
        assert!((0.0..=1.0).contains(a));
        assert!((a - b).abs() <= cfg.radius + 1e-12);
    }
    let bad = HcAttackConfig { radius: -1.0, ..cfg };
    assert_eq!(unsafe { hc_pgd(m.c, x.as_ptr(), 4, 0, &bad, adv.as_mut_ptr()) }, HcStatus::InvalidArgument);
}

#[test]
fn scalar_helpers() {
    assert!((hc_reflect_project(1.3) - 0.7).abs() < 1e-12);
    assert_eq!(hc_reflect_project(-0.25), 0.25);
    let mut q = 0.0;
    assert_eq!(unsafe { hc_t_inverse_cdf(19, 0.99, &mut q) }, HcStatus::Ok);
    assert!((q - 2.539).abs() < 0.01);
}

#[test]
fn default_bank_and_free_null() {
    let mut bank = ptr::null_mut();
    unsafe {
        assert_eq!(hc_bank_default(3, 3, HcKind::Cosine, &mut bank), HcStatus::Ok);
        assert!(hc_bank_len(bank) > 9);
        hc_bank_free(bank);
        hc_bank_free(ptr::null_mut());
        hc_classifier_free(ptr::null_mut());
    }
    let cfg = TemplateConfig::default_family(FeatureKind::Cosine);
    assert!(cfg.validate().is_ok());
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("holoclass.h");
    assert!(header.is_file());
    let Ok(status) =
        std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", "-Wall", "-Werror"]).arg(&header).status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
