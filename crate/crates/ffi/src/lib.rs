//! C ABI over `maskbench`.
//!
//! Images, datasets and models cross the boundary as opaque heap handles, created by
//! `mb_*_new`/`mb_*_from_*`/`mb_model_train` and released with the matching `mb_*_free`.
//! Every fallible call returns an [`MbStatus`]; on failure a message for the calling
//! thread is available from [`mb_last_error`] until the next failing call. Panics are
//! caught and reported as [`MbStatus::Panic`].
//!
//! Byte outputs (`mb_image_encode_pgm`, `mb_model_serialize`) follow one protocol: the
//! required size is always written to `*written`; if `buf` is null or `cap` is smaller,
//! nothing is copied and [`MbStatus::BufferTooSmall`] is returned.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::{ptr, slice};

use maskbench::classifiers::{
    deserialize_model, serialize_model, train, Distance, Hyperparameters, LabeledDataset, ModelType, TrainedModel,
};
use maskbench::dataset::SubjectId;
use maskbench::features::{extract_features, LbpConfig, Normalization};
use maskbench::imaging::{read_pgm, write_pgm, GrayImage};
use maskbench::masker::{apply_mask, draw_assignment, MaskTemplate};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    DimensionMismatch = 4,
    TrainingFailed = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Values accepted wherever a model type is passed as `uint32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbModelType {
    Svc = 0,
    Lda = 1,
    Knn = 2,
    Dt = 3,
    Lr = 4,
    Nb = 5,
}

/// Values accepted for `MbHyperparameters::knn_distance`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbDistance {
    Euclidean = 0,
    ChiSquare = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MbLbpConfig {
    pub radius: u32,
    pub neighbors: u32,
    pub grid_x: u32,
    pub grid_y: u32,
    pub uniform: bool,
    pub l1_normalize: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbHyperparameters {
    pub svc_c: f64,
    pub svc_iters: u64,
    pub lda_shrinkage: f64,
    pub knn_k: u64,
    pub knn_distance: u32,
    pub dt_min_leaf: u64,
    pub lr_l2: f64,
    pub lr_tol: f64,
    pub lr_max_iters: u64,
    pub nb_var_smoothing: f64,
}

pub struct MbImage(GrayImage);

pub struct MbDataset {
    dim: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<SubjectId>,
}

pub struct MbModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: MbStatus,
    message: String,
}

impl Failure {
    fn new(status: MbStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Self::new(MbStatus::NullPointer, format!("{name} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(MbStatus::InvalidArgument, message)
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MbStatus::Ok,
        Ok(Err(failure)) => {
            set_error(failure.message);
            failure.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown".into());
            set_error(format!("internal panic: {what}"));
            MbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

unsafe fn bytes<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(data: &[u8], buf: *mut u8, cap: usize, written: *mut usize) -> Result<(), Failure> {
    let written = deref_mut(written, "written")?;
    *written = data.len();
    if buf.is_null() || cap < data.len() {
        return Err(Failure::new(
            MbStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", data.len()),
        ));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    Ok(())
}

fn model_type(raw: u32) -> Result<ModelType, Failure> {
    ModelType::ALL
        .get(raw as usize)
        .copied()
        .ok_or_else(|| Failure::invalid(format!("unknown model type {raw}")))
}

impl From<LbpConfig> for MbLbpConfig {
    fn from(c: LbpConfig) -> Self {
        Self {
            radius: c.radius,
            neighbors: c.neighbors,
            grid_x: c.grid_x,
            grid_y: c.grid_y,
            uniform: c.uniform,
            l1_normalize: c.normalization == Normalization::L1,
        }
    }
}

impl From<MbLbpConfig> for LbpConfig {
    fn from(c: MbLbpConfig) -> Self {
        Self {
            radius: c.radius,
            neighbors: c.neighbors,
            grid_x: c.grid_x,
            grid_y: c.grid_y,
            uniform: c.uniform,
            normalization: if c.l1_normalize {
                Normalization::L1
            } else {
                Normalization::None
            },
        }
    }
}

impl From<Hyperparameters> for MbHyperparameters {
    fn from(h: Hyperparameters) -> Self {
        Self {
            svc_c: h.svc.c,
            svc_iters: h.svc.iters as u64,
            lda_shrinkage: h.lda.shrinkage,
            knn_k: h.knn.k as u64,
            knn_distance: match h.knn.distance {
                Distance::Euclidean => MbDistance::Euclidean as u32,
                Distance::ChiSquare => MbDistance::ChiSquare as u32,
            },
            dt_min_leaf: h.dt.min_leaf as u64,
            lr_l2: h.lr.l2,
            lr_tol: h.lr.tol,
            lr_max_iters: h.lr.max_iters as u64,
            nb_var_smoothing: h.nb.var_smoothing,
        }
    }
}

impl TryFrom<MbHyperparameters> for Hyperparameters {
    type Error = String;

    fn try_from(m: MbHyperparameters) -> Result<Self, String> {
        let size = |v: u64, name: &str| usize::try_from(v).map_err(|_| format!("{name} out of range"));
        let mut h = Hyperparameters::default();
        h.svc.c = m.svc_c;
        h.svc.iters = size(m.svc_iters, "svc_iters")?;
        h.lda.shrinkage = m.lda_shrinkage;
        h.knn.k = size(m.knn_k, "knn_k")?;
        h.knn.distance = match m.knn_distance {
            0 => Distance::Euclidean,
            1 => Distance::ChiSquare,
            d => return Err(format!("unknown distance {d}")),
        };
        h.dt.min_leaf = size(m.dt_min_leaf, "dt_min_leaf")?;
        h.lr.l2 = m.lr_l2;
        h.lr.tol = m.lr_tol;
        h.lr.max_iters = size(m.lr_max_iters, "lr_max_iters")?;
        h.nb.var_smoothing = m.nb_var_smoothing;
        Ok(h)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mb_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains a nul byte"),
    };
    VERSION.as_ptr()
}

/// Message for the last failing call on this thread, or null if none. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn mb_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

#[no_mangle]
pub extern "C" fn mb_lbp_config_default() -> MbLbpConfig {
    LbpConfig::default().into()
}

#[no_mangle]
pub extern "C" fn mb_hyperparameters_default() -> MbHyperparameters {
    Hyperparameters::default().into()
}

/// Decodes a binary (P5) PGM.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_image_from_pgm(bytes: *const u8, len: usize, out: *mut *mut MbImage) -> MbStatus {
    guard(|| {
        let data = self::bytes(bytes, len, "bytes")?;
        let img = read_pgm(data).map_err(|e| Failure::new(MbStatus::Parse, e.to_string()))?;
        put(out, MbImage(img))
    })
}

/// Builds an image from `width * height` row-major 8-bit pixels.
///
/// # Safety
/// `pixels` must point to `width * height` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_image_from_pixels(
    width: usize,
    height: usize,
    pixels: *const u8,
    out: *mut *mut MbImage,
) -> MbStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Failure::invalid("width * height overflows"))?;
        let data = bytes(pixels, n, "pixels")?;
        let img = GrayImage::new(width, height, data.to_vec()).map_err(|e| Failure::invalid(e.to_string()))?;
        put(out, MbImage(img))
    })
}

/// Width in pixels; 0 for a null handle.
///
/// # Safety
/// `img` must be null or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn mb_image_width(img: *const MbImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// Height in pixels; 0 for a null handle.
///
/// # Safety
/// `img` must be null or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn mb_image_height(img: *const MbImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Copies the row-major pixels into `buf`.
///
/// # Safety
/// `img` must be a live image handle, `buf` null or writable for `cap` bytes, `written` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_image_copy_pixels(
    img: *const MbImage,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> MbStatus {
    guard(|| copy_out(deref(img, "img")?.0.pixels(), buf, cap, written))
}

/// Encodes the image as a binary PGM.
///
/// # Safety
/// As for [`mb_image_copy_pixels`].
#[no_mangle]
pub unsafe extern "C" fn mb_image_encode_pgm(
    img: *const MbImage,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> MbStatus {
    guard(|| copy_out(&write_pgm(&deref(img, "img")?.0), buf, cap, written))
}

/// Applies the synthetic mask assigned to record `(subject, index)` under `seed`, exactly as
/// the batch masker does.
///
/// # Safety
/// `img` must be a live image handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_image_mask(
    img: *const MbImage,
    seed: u64,
    subject: u32,
    index: u32,
    out: *mut *mut MbImage,
) -> MbStatus {
    guard(|| {
        let img = deref(img, "img")?;
        let (id, jitter) = draw_assignment(seed, subject, index);
        let template = MaskTemplate::standard(id).map_err(|e| Failure::invalid(e.to_string()))?;
        put(out, MbImage(apply_mask(&img.0, &template, jitter)))
    })
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mb_image_free(img: *mut MbImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Feature dimension for `cfg` (defaults when null), after validating it.
///
/// # Safety
/// `cfg` must be null or readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_lbp_dimension(cfg: *const MbLbpConfig, out: *mut usize) -> MbStatus {
    guard(|| {
        let cfg: LbpConfig = cfg.as_ref().map_or_else(LbpConfig::default, |c| (*c).into());
        cfg.validate().map_err(|e| Failure::invalid(e.to_string()))?;
        *deref_mut(out, "out")? = cfg.dimension();
        Ok(())
    })
}

/// Writes the LBP feature vector of `img` under `cfg` (defaults when null) into `out`,
/// which must hold exactly the feature dimension.
///
/// # Safety
/// `img` must be a live image handle, `cfg` null or readable, `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mb_extract_features(
    img: *const MbImage,
    cfg: *const MbLbpConfig,
    out: *mut f64,
    len: usize,
) -> MbStatus {
    guard(|| {
        let img = deref(img, "img")?;
        let cfg: LbpConfig = cfg.as_ref().map_or_else(LbpConfig::default, |c| (*c).into());
        cfg.validate().map_err(|e| Failure::invalid(e.to_string()))?;
        if len != cfg.dimension() {
            return Err(Failure::new(
                MbStatus::DimensionMismatch,
                format!("output holds {len} values, features have {}", cfg.dimension()),
            ));
        }
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let f = extract_features(&img.0, &cfg).map_err(|e| Failure::invalid(e.to_string()))?;
        slice::from_raw_parts_mut(out, len).copy_from_slice(f.as_slice());
        Ok(())
    })
}

/// Empty training set of `dim`-dimensional rows.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_dataset_new(dim: usize, out: *mut *mut MbDataset) -> MbStatus {
    guard(|| {
        if dim == 0 {
            return Err(Failure::invalid("dimension must be positive"));
        }
        put(
            out,
            MbDataset {
                dim,
                rows: Vec::new(),
                labels: Vec::new(),
            },
        )
    })
}

/// Appends one row with subject label `label`.
///
/// # Safety
/// `ds` must be a live dataset handle and `row` readable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mb_dataset_push(ds: *mut MbDataset, row: *const f64, len: usize, label: u32) -> MbStatus {
    guard(|| {
        let ds = deref_mut(ds, "ds")?;
        if len != ds.dim {
            return Err(Failure::new(
                MbStatus::DimensionMismatch,
                format!("row has {len} values, dataset has {}", ds.dim),
            ));
        }
        let row = bytes(row, len, "row")?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Failure::invalid("row contains a non-finite value"));
        }
        ds.rows.push(row.to_vec());
        ds.labels.push(SubjectId(label));
        Ok(())
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mb_dataset_len(ds: *const MbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.rows.len())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mb_dataset_free(ds: *mut MbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains `model_type` (an `MbModelType`) on `ds` with `hyper` (defaults when null).
///
/// # Safety
/// `ds` must be a live dataset handle, `hyper` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_model_train(
    ds: *const MbDataset,
    model_type: u32,
    hyper: *const MbHyperparameters,
    out: *mut *mut MbModel,
) -> MbStatus {
    guard(|| {
        let ds = deref(ds, "ds")?;
        let model = self::model_type(model_type)?;
        let hyper = match hyper.as_ref() {
            None => Hyperparameters::default(),
            Some(h) => Hyperparameters::try_from(*h).map_err(Failure::invalid)?,
        };
        let data = LabeledDataset::new(ds.rows.clone(), ds.labels.clone())
            .map_err(|e| Failure::new(MbStatus::TrainingFailed, e.to_string()))?;
        let trained = train(model, &data, &hyper).map_err(|e| Failure::new(MbStatus::TrainingFailed, e.to_string()))?;
        put(out, MbModel(trained))
    })
}

/// Predicts the subject label of one feature row.
///
/// # Safety
/// `model` must be a live model handle, `row` readable for `len` doubles, `label` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_model_predict(
    model: *const MbModel,
    row: *const f64,
    len: usize,
    label: *mut u32,
) -> MbStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let row = bytes(row, len, "row")?;
        let subject = model
            .0
            .predict(row)
            .map_err(|e| Failure::new(MbStatus::DimensionMismatch, e.to_string()))?;
        *deref_mut(label, "label")? = subject.0;
        Ok(())
    })
}

/// Input dimension; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn mb_model_dimension(model: *const MbModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim)
}

/// The `MbModelType` of the model.
///
/// # Safety
/// `model` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_model_type(model: *const MbModel, out: *mut u32) -> MbStatus {
    guard(|| {
        let t = deref(model, "model")?.0.model_type();
        *deref_mut(out, "out")? = ModelType::ALL.iter().position(|&m| m == t).expect("listed") as u32;
        Ok(())
    })
}

/// Serializes the model to the versioned binary format.
///
/// # Safety
/// `model` must be a live model handle, `buf` null or writable for `cap` bytes, `written` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_model_serialize(
    model: *const MbModel,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> MbStatus {
    guard(|| copy_out(&serialize_model(&deref(model, "model")?.0), buf, cap, written))
}

/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mb_model_deserialize(bytes: *const u8, len: usize, out: *mut *mut MbModel) -> MbStatus {
    guard(|| {
        let data = self::bytes(bytes, len, "bytes")?;
        let model = deserialize_model(data).map_err(|e| Failure::new(MbStatus::Parse, e.to_string()))?;
        put(out, MbModel(model))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mb_model_free(model: *mut MbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
