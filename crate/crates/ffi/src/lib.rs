//! C ABI over the `flsbathy` engine.
//!
//! Models and rasters are opaque handles created by `*_load` / `*_grid`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`FlsStatus`]; on failure a message is kept per thread and
//! can be read with [`fls_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use flsbathy::encoding::Bounds2;
use flsbathy::evalcli::{grid_heightfield, mae_std, ssim};
use flsbathy::geometry::{Pose, SonarIntrinsics, Vec3};
use flsbathy::model::SonarModel;
use flsbathy::raster::HeightRaster;
use flsbathy::renderer::{render_pixel, RenderMode, RenderSettings};
use flsbathy::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Empty = 6,
    Dimension = 7,
    NonFinite = 8,
    Panic = 99,
}

/// Opaque trained model.
pub struct FlsModel {
    inner: SonarModel,
}

/// Opaque height raster; invalid cells read as NaN.
pub struct FlsRaster {
    inner: HeightRaster,
}

/// Height query at a world point. `normal` is the raw (-dN/dx, -dN/dy, 1).
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FlsFieldQuery {
    pub height: f64,
    pub delta: f64,
    pub normal: [f64; 3],
}

/// Sonar-to-world transform: row-major rotation and translation.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FlsPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Sonar geometry; angles in radians.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FlsIntrinsics {
    pub r_min: f64,
    pub r_max: f64,
    pub hfov: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_beams: usize,
    pub n_bins: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FlsMetrics {
    pub mae: f64,
    pub std: f64,
    pub ssim: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> FlsStatus {
    match e {
        Error::InvalidPose(_) | Error::Index(_) => FlsStatus::InvalidArgument,
        Error::Dimension { .. } => FlsStatus::Dimension,
        Error::Config(_) => FlsStatus::Config,
        Error::Parse(_) | Error::Format(_) => FlsStatus::Format,
        Error::Empty(_) => FlsStatus::Empty,
        Error::NonFinite { .. } => FlsStatus::NonFinite,
        Error::PathIo { .. } | Error::Io(_) => FlsStatus::Io,
    }
}

struct Fail(FlsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FlsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FlsStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(FlsStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const FlsModel) -> Result<&'a SonarModel, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn raster_ref<'a>(r: *const FlsRaster) -> Result<&'a HeightRaster, Fail> {
    r.as_ref().map(|r| &r.inner).ok_or_else(|| null("raster"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fls_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable. On
/// success `*out` owns a model to be released with [`fls_model_free`].
#[no_mangle]
pub unsafe extern "C" fn fls_model_load(path: *const c_char, out: *mut *mut FlsModel) -> FlsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = SonarModel::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(FlsModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`fls_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fls_model_free(model: *mut FlsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Heightmap value N(x, y).
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fls_model_height(model: *const FlsModel, x: f64, y: f64, out: *mut f64) -> FlsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.query_height([x, y]);
        Ok(())
    })
}

/// Unit surface normal at (x, y).
///
/// # Safety
/// `model` must be a live handle and `out` point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fls_model_normal(model: *const FlsModel, x: f64, y: f64, out: *mut f64) -> FlsStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, [gx, gy]) = m.query_gradient([x, y]);
        let n = (gx * gx + gy * gy + 1.0).sqrt();
        let v = [-gx / n, -gy / n, 1.0 / n];
        ptr::copy_nonoverlapping(v.as_ptr(), out, 3);
        Ok(())
    })
}

/// Height, signed vertical distance and raw normal at a world point.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fls_model_query(model: *const FlsModel, x: f64, y: f64, z: f64, out: *mut FlsFieldQuery) -> FlsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let q = m.query(&Vec3::new(x, y, z));
        *out = FlsFieldQuery { height: q.h, delta: q.delta, normal: q.normal };
        Ok(())
    })
}

/// Current S-density sharpness s.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fls_model_sharpness(model: *const FlsModel, out: *mut f64) -> FlsStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.sharpness();
        Ok(())
    })
}

/// Predicted intensity of pixel (r, theta) in deterministic render mode,
/// with `n_arc_stratified` + `n_arc_importance` elevation samples and
/// `n_ray` samples per ray.
///
/// # Safety
/// All pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fls_model_render_pixel(
    model: *const FlsModel,
    pose: *const FlsPose,
    intrinsics: *const FlsIntrinsics,
    r: f64,
    theta: f64,
    n_arc_stratified: usize,
    n_arc_importance: usize,
    n_ray: usize,
    out: *mut f64,
) -> FlsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = pose.as_ref().ok_or_else(|| null("pose"))?;
        let i = intrinsics.as_ref().ok_or_else(|| null("intrinsics"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let intr = SonarIntrinsics { r_min: i.r_min, r_max: i.r_max, hfov: i.hfov, phi_min: i.phi_min, phi_max: i.phi_max, n_beams: i.n_beams, n_bins: i.n_bins };
        intr.validate()?;
        let pose = Pose::from_row_major(p.rotation, p.translation)?;
        if !(r > 0.0) || !theta.is_finite() {
            return Err(Fail(FlsStatus::InvalidArgument, format!("bad pixel (r {r}, theta {theta})")));
        }
        let settings = RenderSettings::new(&intr, (n_arc_stratified, n_arc_importance, n_ray), m.levels(), RenderMode::Eval);
        settings.sampling.validate()?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        *out = render_pixel(m, &settings, &pose, r, theta, &mut rng).intensity;
        Ok(())
    })
}

/// Grids the heightmap over [xmin, xmax] x [ymin, ymax] at `resolution`.
///
/// # Safety
/// `model` must be a live handle and `out` writable; `*out` is released
/// with [`fls_raster_free`].
#[no_mangle]
pub unsafe extern "C" fn fls_model_grid(
    model: *const FlsModel,
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
    resolution: f64,
    out: *mut *mut FlsRaster,
) -> FlsStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let b = Bounds2::new(xmin, ymin, xmax, ymax);
        if !b.is_valid() {
            return Err(Fail(FlsStatus::InvalidArgument, "empty grid bounds".into()));
        }
        let r = grid_heightfield(m, &b, resolution)?;
        *out = Box::into_raw(Box::new(FlsRaster { inner: r }));
        Ok(())
    })
}

/// Reads a `.grid` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fls_raster_load(path: *const c_char, out: *mut *mut FlsRaster) -> FlsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let r = HeightRaster::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(FlsRaster { inner: r }));
        Ok(())
    })
}

/// Writes a `.grid` file.
///
/// # Safety
/// `raster` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fls_raster_save(raster: *const FlsRaster, path: *const c_char) -> FlsStatus {
    guard(|| {
        let r = raster_ref(raster)?;
        r.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `raster` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fls_raster_free(raster: *mut FlsRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

/// Raster extent in cells.
///
/// # Safety
/// `raster` must be a live handle; `nx` and `ny` writable.
#[no_mangle]
pub unsafe extern "C" fn fls_raster_dims(raster: *const FlsRaster, nx: *mut usize, ny: *mut usize) -> FlsStatus {
    guard(|| {
        let r = raster_ref(raster)?;
        *nx.as_mut().ok_or_else(|| null("nx"))? = r.nx;
        *ny.as_mut().ok_or_else(|| null("ny"))? = r.ny;
        Ok(())
    })
}

/// Copies the row-major cell values (NaN for invalid cells) into `buf`,
/// which must hold exactly nx * ny doubles.
///
/// # Safety
/// `raster` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fls_raster_values(raster: *const FlsRaster, buf: *mut f64, len: usize) -> FlsStatus {
    guard(|| {
        let r = raster_ref(raster)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != r.len() {
            return Err(Error::Dimension { expected: r.len(), got: len }.into());
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for (k, o) in out.iter_mut().enumerate() {
            *o = if r.valid[k] { r.values[k] } else { f64::NAN };
        }
        Ok(())
    })
}

/// MAE, STD and SSIM of `est` against `truth` (aligned rasters).
///
/// # Safety
/// Both rasters must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fls_metrics(est: *const FlsRaster, truth: *const FlsRaster, out: *mut FlsMetrics) -> FlsStatus {
    guard(|| {
        let (e, t) = (raster_ref(est)?, raster_ref(truth)?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (mae, std) = mae_std(e, t)?;
        *out = FlsMetrics { mae, std, ssim: ssim(e, t)? };
        Ok(())
    })
}
