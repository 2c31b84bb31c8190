//! C ABI over the volmetric toolkit.
//!
//! Fields and models are opaque handles created and freed through this API.
//! Every fallible function returns a [`VmStatus`]; on failure the message of
//! the last error on the calling thread is available from
//! [`vm_last_error_message`]. Results are written through out-pointers only on
//! success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use volmetric::io::{load_checkpoint, read_volume, write_volume};
use volmetric::metrics::{self, DistanceMetric, SsimParams};
use volmetric::nn::LearnedMetric;
use volmetric::similarity::{entropy_distance, fit_c};
use volmetric::{Error, FieldKind, VolumeField};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    /// Malformed or unsupported file.
    Format = 5,
    ArchitectureMismatch = 6,
    /// Constant input or an undefined value (e.g. infinite PSNR).
    Degenerate = 7,
    /// Input too small for the operation.
    TooSmall = 8,
    Internal = 9,
    Panic = 10,
}

/// Field kind codes.
pub const VM_KIND_SCALAR: u32 = 0;
pub const VM_KIND_VELOCITY: u32 = 1;
pub const VM_KIND_MARKER: u32 = 2;

/// Opaque field handle.
pub struct VmField(VolumeField);

/// Opaque handle to a learned metric loaded from a checkpoint.
pub struct VmModel(LearnedMetric);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VmStatus {
    match e {
        Error::ShapeMismatch(_) | Error::NonCubicField(_) | Error::IndivisibleDims { .. } => VmStatus::ShapeMismatch,
        Error::Io(_) => VmStatus::Io,
        Error::BadMagic(_)
        | Error::VersionUnsupported(_)
        | Error::TruncatedFile { .. }
        | Error::TrailingData(_)
        | Error::ShapeOverflow => VmStatus::Format,
        Error::ArchitectureMismatch(_) => VmStatus::ArchitectureMismatch,
        Error::DegenerateRange(_) | Error::ConstantInput | Error::InfinitePsnr | Error::ConstantGroundTruth => VmStatus::Degenerate,
        Error::FieldTooSmall(_) | Error::TooShort { .. } => VmStatus::TooSmall,
        Error::InvalidArgument(_) | Error::UnknownParam(_) | Error::Config(_) => VmStatus::InvalidArgument,
        _ => VmStatus::Internal,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any error or panic and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VmStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            VmStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            VmStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            VmStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn put<T>(out: *mut T, v: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(v);
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn kind_of(code: u32) -> Result<FieldKind, Failure> {
    match code {
        VM_KIND_SCALAR => Ok(FieldKind::Scalar),
        VM_KIND_VELOCITY => Ok(FieldKind::Velocity),
        VM_KIND_MARKER => Ok(FieldKind::Marker),
        c => Err(Failure::Invalid(format!("unknown field kind {c}"))),
    }
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `channels * depth * height * width` samples (channel-major, then z, y, x)
/// into a new field.
///
/// # Safety
/// `data` must point to that many floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_field_new(
    kind: u32,
    channels: usize,
    depth: usize,
    height: usize,
    width: usize,
    data: *const f32,
    out: *mut *mut VmField,
) -> VmStatus {
    guard(|| {
        let kind = kind_of(kind)?;
        let len = [channels, depth, height, width]
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(Failure::Lib(Error::ShapeOverflow))?;
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        let field = VolumeField::new(kind, channels, [depth, height, width], samples)?;
        put(out, Box::into_raw(Box::new(VmField(field))), "out")
    })
}

/// Reads a single-frame VSIM file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_field_read(path: *const c_char, kind: u32, out: *mut *mut VmField) -> VmStatus {
    guard(|| {
        let field = read_volume(&path_arg(path)?, kind_of(kind)?)?;
        put(out, Box::into_raw(Box::new(VmField(field))), "out")
    })
}

/// # Safety
/// `field` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vm_field_write(field: *const VmField, path: *const c_char) -> VmStatus {
    guard(|| {
        write_volume(&path_arg(path)?, &as_ref(field, "field")?.0)?;
        Ok(())
    })
}

/// Writes the channel count and the (depth, height, width) extents.
///
/// # Safety
/// `field` must come from this library; `dims` must hold three values.
#[no_mangle]
pub unsafe extern "C" fn vm_field_dims(field: *const VmField, channels: *mut usize, dims: *mut usize) -> VmStatus {
    guard(|| {
        let f = &as_ref(field, "field")?.0;
        put(channels, f.channels(), "channels")?;
        if dims.is_null() {
            return Err(Failure::Null("dims"));
        }
        std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&f.dims());
        Ok(())
    })
}

/// Borrowed pointer to the samples and their count; valid while the field lives.
///
/// # Safety
/// `field` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vm_field_data(field: *const VmField, data: *mut *const f32, len: *mut usize) -> VmStatus {
    guard(|| {
        let f = &as_ref(field, "field")?.0;
        put(data, f.data().as_ptr(), "data")?;
        put(len, f.len(), "len")
    })
}

/// # Safety
/// `field` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vm_field_free(field: *mut VmField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

unsafe fn pair<'a>(a: *const VmField, b: *const VmField) -> Result<(&'a VolumeField, &'a VolumeField), Failure> {
    Ok((&as_ref(a, "a")?.0, &as_ref(b, "b")?.0))
}

/// Mean squared error.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_mse(a: *const VmField, b: *const VmField, out: *mut f64) -> VmStatus {
    guard(|| {
        let (a, b) = pair(a, b)?;
        put(out, metrics::mse(a, b)?, "out")
    })
}

/// Peak signal-to-noise ratio for the given peak value.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_psnr(a: *const VmField, b: *const VmField, max_value: f64, out: *mut f64) -> VmStatus {
    guard(|| {
        let (a, b) = pair(a, b)?;
        put(out, metrics::psnr(a, b, max_value)?, "out")
    })
}

/// Windowed 3D SSIM with default parameters.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_ssim3d(a: *const VmField, b: *const VmField, out: *mut f64) -> VmStatus {
    guard(|| {
        let (a, b) = pair(a, b)?;
        put(out, metrics::ssim3d(a, b, &SsimParams::default())?, "out")
    })
}

/// Pearson correlation of two fields.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_pearson(a: *const VmField, b: *const VmField, out: *mut f64) -> VmStatus {
    guard(|| {
        let (a, b) = pair(a, b)?;
        put(out, metrics::pearson_fields(a, b)?, "out")
    })
}

/// Spearman rank correlation of two arrays of length `len`.
///
/// # Safety
/// `x` and `y` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_srcc(x: *const f64, y: *const f64, len: usize, out: *mut f64) -> VmStatus {
    guard(|| {
        if x.is_null() || y.is_null() {
            return Err(Failure::Null("x/y"));
        }
        let (x, y) = (std::slice::from_raw_parts(x, len), std::slice::from_raw_parts(y, len));
        put(out, metrics::srcc(x, y)?, "out")
    })
}

/// Similarity model `ln(1 + c w) / ln(1 + c)`.
#[no_mangle]
pub extern "C" fn vm_entropy_distance(w: f64, c: f64) -> f64 {
    entropy_distance(w, c)
}

/// Fits the curvature exponent γ (c = 10^γ) to normalized distances
/// `q[i]` observed at `w = (i + 1) / len`.
///
/// # Safety
/// `q` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_fit_exponent(q: *const f64, len: usize, out: *mut f64) -> VmStatus {
    guard(|| {
        if q.is_null() {
            return Err(Failure::Null("q"));
        }
        put(out, fit_c(std::slice::from_raw_parts(q, len))?.exponent, "out")
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_model_load(path: *const c_char, out: *mut *mut VmModel) -> VmStatus {
    guard(|| {
        let path = path_arg(path)?;
        let model = load_checkpoint(&path)?.model;
        put(out, Box::into_raw(Box::new(VmModel(LearnedMetric::new(model, "model")))), "out")
    })
}

/// Learned distance between two raw fields; the pair is normalized jointly first.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vm_model_distance(model: *const VmModel, a: *const VmField, b: *const VmField, out: *mut f64) -> VmStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let (a, b) = pair(a, b)?;
        m.check_dims(a.dims())?;
        let p = m.prepare(&[a.clone(), b.clone()])?;
        put(out, m.distance(&p[0], &p[1])?, "out")
    })
}

/// Trainable parameter count, or 0 for a null handle.
///
/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vm_model_param_count(model: *const VmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.model.param_count())
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vm_model_free(model: *mut VmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
