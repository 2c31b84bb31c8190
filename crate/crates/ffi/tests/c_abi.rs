use std::ffi::{CStr, CString};
use std::ptr;

use volmetric::nn::{FeatureStats, MetricModel, ModelConfig};
use volmetric_ffi::*;

fn field(values: &[f32], kind: u32) -> *mut VmField {
    let mut out = ptr::null_mut();
    let st = unsafe { vm_field_new(kind, 1, 2, 2, values.len() / 4, values.as_ptr(), &mut out) };
    assert_eq!(st, VmStatus::Ok);
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vm_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn classic_metrics_through_handles() {
    let a = field(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], VM_KIND_SCALAR);
    let b = field(&[1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 9.0], VM_KIND_SCALAR);
    let mut v = 0.0;
    unsafe {
        assert_eq!(vm_mse(a, b, &mut v), VmStatus::Ok);
        assert_eq!(v, 5.0 / 8.0);
        assert_eq!(vm_psnr(a, b, 7.0, &mut v), VmStatus::Ok);
        assert!((v - 10.0 * (49.0f64 / 0.625).log10()).abs() < 1e-12);
        assert_eq!(vm_pearson(a, a, &mut v), VmStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(vm_psnr(a, a, 1.0, &mut v), VmStatus::Degenerate);
        assert!(last_error().starts_with("InfinitePSNR"));

        let mut channels = 0usize;
        let mut dims = [0usize; 3];
        assert_eq!(vm_field_dims(a, &mut channels, dims.as_mut_ptr()), VmStatus::Ok);
        assert_eq!((channels, dims), (1, [2, 2, 2]));
        let mut data = ptr::null();
        let mut len = 0;
        assert_eq!(vm_field_data(b, &mut data, &mut len), VmStatus::Ok);
        assert_eq!(std::slice::from_raw_parts(data, len)[7], 9.0);

        let c = field(&[0.0; 16], VM_KIND_SCALAR);
        assert_eq!(vm_mse(a, c, &mut v), VmStatus::ShapeMismatch);
        assert_eq!(vm_mse(a, ptr::null(), &mut v), VmStatus::NullPointer);
        vm_field_free(a);
        vm_field_free(b);
        vm_field_free(c);
        vm_field_free(ptr::null_mut());
    }
}

#[test]
fn similarity_functions() {
    assert_eq!(vm_entropy_distance(0.0, 10.0), 0.0);
    assert!((vm_entropy_distance(1.0, 10.0) - 1.0).abs() < 1e-12);
    let c = 100.0;
    let q: Vec<f64> = (1..=10).map(|i| vm_entropy_distance(i as f64 / 10.0, c)).collect();
    let mut gamma = 0.0;
    assert_eq!(unsafe { vm_fit_exponent(q.as_ptr(), q.len(), &mut gamma) }, VmStatus::Ok);
    assert!((10f64.powf(gamma) - c).abs() / c < 0.01);
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [10.0, 20.0, 25.0, 40.0];
    let mut r = 0.0;
    assert_eq!(unsafe { vm_srcc(x.as_ptr(), y.as_ptr(), 4, &mut r) }, VmStatus::Ok);
    assert!((r - 1.0).abs() < 1e-12);
    assert!(!unsafe { CStr::from_ptr(vm_version()) }.to_bytes().is_empty());
}

#[test]
fn files_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let vol = CString::new(dir.path().join("f.vsim").to_str().unwrap()).unwrap();
    let values: Vec<f32> = (0..8).map(|v| v as f32 * 0.5).collect();
    let a = field(&values, VM_KIND_SCALAR);
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(vm_field_write(a, vol.as_ptr()), VmStatus::Ok);
        assert_eq!(vm_field_read(vol.as_ptr(), VM_KIND_SCALAR, &mut back), VmStatus::Ok);
        let mut v = 1.0;
        assert_eq!(vm_mse(a, back, &mut v), VmStatus::Ok);
        assert_eq!(v, 0.0);
        vm_field_free(back);
        vm_field_free(a);
    }

    let mut model = MetricModel::new(ModelConfig { block_channels: vec![4, 4], ..Default::default() }, 3).unwrap();
    let ch = model.config.feature_channels();
    model.stats = Some(FeatureStats { mean: ch.iter().map(|&c| vec![0.0; c]).collect(), std: ch.iter().map(|&c| vec![1.0; c]).collect() });
    let ckpt = dir.path().join("m.vsck");
    volmetric::io::save_checkpoint(&ckpt, &model, None).unwrap();
    let path = CString::new(ckpt.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    unsafe {
        assert_eq!(vm_model_load(path.as_ptr(), &mut handle), VmStatus::Ok);
        assert_eq!(vm_model_param_count(handle), model.param_count());
        let mk = |s: f32| {
            let data: Vec<f32> = (0..512).map(|i| ((i as f32) * 0.1 + s).sin()).collect();
            let mut out = ptr::null_mut();
            assert_eq!(vm_field_new(VM_KIND_SCALAR, 1, 8, 8, 8, data.as_ptr(), &mut out), VmStatus::Ok);
            out
        };
        let (x, y) = (mk(0.0), mk(0.7));
        let mut d = -1.0;
        assert_eq!(vm_model_distance(handle, x, x, &mut d), VmStatus::Ok);
        assert_eq!(d, 0.0);
        assert_eq!(vm_model_distance(handle, x, y, &mut d), VmStatus::Ok);
        let mut d2 = -1.0;
        assert_eq!(vm_model_distance(handle, y, x, &mut d2), VmStatus::Ok);
        assert!(d > 0.0 && (d - d2).abs() < 1e-9);
        vm_field_free(x);
        vm_field_free(y);
        vm_model_free(handle);

        let missing = CString::new(dir.path().join("none.vsck").to_str().unwrap()).unwrap();
        assert_eq!(vm_model_load(missing.as_ptr(), &mut handle), VmStatus::Io);
        assert_eq!(vm_model_load(vol.as_ptr(), &mut handle), VmStatus::Format);
        assert_eq!(vm_model_param_count(ptr::null()), 0);
    }
}

#[test]
fn header_is_generated_and_parses_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/volmetric.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["vm_field_new", "vm_model_distance", "vm_last_error_message", "VM_STATUS_ARCHITECTURE_MISMATCH", "typedef struct VmField VmField"] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    if let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
