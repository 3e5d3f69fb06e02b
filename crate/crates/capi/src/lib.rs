//! C ABI over the core library: adversarial losses, AUROC/FID, the
//! discrete-distribution oracle, and opaque model handles for scoring.
//!
//! Conventions:
//! * every function returns an [`AabiganStatus`]; outputs go through
//!   pointers supplied by the caller,
//! * batch arrays are row-major and sized by the accompanying counts,
//! * on failure, a thread-local message is retrievable through
//!   [`aabigan_last_error_message`],
//! * handles from `aabigan_model_load` are freed with
//!   `aabigan_model_free` and must not be shared across threads while a
//!   call is in flight.

use aabigan::error::Error;
use aabigan::metrics;
use aabigan::networks::ModelBundle;
use aabigan::objectives::{self, PairScoreBatch, ScoreBatch, TargetScheme};
use aabigan::oracle::{self, DiscreteJoint};
use aabigan::scoring;
use aabigan::trainer;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::Path;

/// Result of every C-ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AabiganStatus {
    Ok = 0,
    /// A pointer argument was null.
    NullPointer = 1,
    /// Arguments violate a precondition (shape, emptiness, degenerate
    /// scheme, ...).
    InvalidInput = 2,
    /// The metric is undefined on this input (e.g. single-class AUROC).
    UndefinedMetric = 3,
    /// File system problem.
    Io = 4,
    /// Stored data failed validation.
    CorruptData = 5,
    /// Anything else.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_from(err: &Error) -> AabiganStatus {
    match err {
        Error::InvalidInput(_) | Error::ShapeMismatch { .. } | Error::InsufficientData(_) => {
            AabiganStatus::InvalidInput
        }
        Error::UndefinedMetric(_) => AabiganStatus::UndefinedMetric,
        Error::Io { .. } => AabiganStatus::Io,
        Error::CorruptData { .. } | Error::CorruptCheckpoint { .. } | Error::Parse { .. } => {
            AabiganStatus::CorruptData
        }
        _ => AabiganStatus::Internal,
    }
}

fn fail(err: Error) -> AabiganStatus {
    let status = status_from(&err);
    set_error(err.to_string());
    status
}

/// Copy the last error message (UTF-8, NUL-terminated) into `buf`.
/// Returns the full message length in bytes, excluding the NUL; a return
/// value >= `len` means the message was truncated.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes (or be null, in
/// which case only the length is reported).
#[no_mangle]
pub unsafe extern "C" fn aabigan_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

unsafe fn slice_arg<'a, T>(ptr: *const T, n: usize) -> Option<&'a [T]> {
    if n == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, n))
    }
}

fn scheme_arg(a: f64, b: f64, c: f64) -> Result<TargetScheme, AabiganStatus> {
    TargetScheme::new(a, b, c).map_err(fail)
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Discriminator loss with targets (a, (a+b)/2, b) over the three score
/// populations. `neg_scores` may be null/empty. If `grad_*` pointers are
/// non-null they receive per-score gradients (same lengths as inputs).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn aabigan_aa_discriminator_loss(
    pos_scores: *const f64,
    n_pos: usize,
    neg_scores: *const f64,
    n_neg: usize,
    gen_scores: *const f64,
    n_gen: usize,
    a: f64,
    b: f64,
    c: f64,
    out_loss: *mut f64,
    grad_pos: *mut f64,
    grad_neg: *mut f64,
    grad_gen: *mut f64,
) -> AabiganStatus {
    loss_impl(
        pos_scores,
        n_pos,
        neg_scores,
        n_neg,
        gen_scores,
        n_gen,
        a,
        b,
        c,
        out_loss,
        grad_pos,
        grad_neg,
        grad_gen,
        objectives::aa_discriminator_loss_grad,
    )
}

/// Generator/encoder loss: every population regresses to `c`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn aabigan_aa_generator_encoder_loss(
    pos_scores: *const f64,
    n_pos: usize,
    neg_scores: *const f64,
    n_neg: usize,
    gen_scores: *const f64,
    n_gen: usize,
    a: f64,
    b: f64,
    c: f64,
    out_loss: *mut f64,
    grad_pos: *mut f64,
    grad_neg: *mut f64,
    grad_gen: *mut f64,
) -> AabiganStatus {
    loss_impl(
        pos_scores,
        n_pos,
        neg_scores,
        n_neg,
        gen_scores,
        n_gen,
        a,
        b,
        c,
        out_loss,
        grad_pos,
        grad_neg,
        grad_gen,
        objectives::aa_generator_encoder_loss_grad,
    )
}

type JointLossFn =
    fn(&ScoreBatch, &TargetScheme) -> aabigan::error::Result<(f64, objectives::ScoreBatchGrad)>;

#[allow(clippy::too_many_arguments)]
unsafe fn loss_impl(
    pos_scores: *const f64,
    n_pos: usize,
    neg_scores: *const f64,
    n_neg: usize,
    gen_scores: *const f64,
    n_gen: usize,
    a: f64,
    b: f64,
    c: f64,
    out_loss: *mut f64,
    grad_pos: *mut f64,
    grad_neg: *mut f64,
    grad_gen: *mut f64,
    f: JointLossFn,
) -> AabiganStatus {
    if out_loss.is_null() {
        set_error("out_loss is null");
        return AabiganStatus::NullPointer;
    }
    let (Some(pos), Some(neg), Some(gen)) = (
        slice_arg(pos_scores, n_pos),
        slice_arg(neg_scores, n_neg),
        slice_arg(gen_scores, n_gen),
    ) else {
        set_error("score array pointer is null");
        return AabiganStatus::NullPointer;
    };
    let scheme = match scheme_arg(a, b, c) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let batch = ScoreBatch::new(pos.to_vec(), neg.to_vec(), gen.to_vec());
    match f(&batch, &scheme) {
        Ok((loss, grads)) => {
            *out_loss = loss;
            if !grad_pos.is_null() {
                std::ptr::copy_nonoverlapping(grads.pos.as_ptr(), grad_pos, grads.pos.len());
            }
            if !grad_neg.is_null() && !grads.neg.is_empty() {
                std::ptr::copy_nonoverlapping(grads.neg.as_ptr(), grad_neg, grads.neg.len());
            }
            if !grad_gen.is_null() {
                std::ptr::copy_nonoverlapping(grads.gen.as_ptr(), grad_gen, grads.gen.len());
            }
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Pair-discriminator augmentation loss with targets (a, (a+b)/2, b) on
/// (x,x), (x-,x-) and (x, x̂) scores. `real_neg` may be null/empty;
/// `real_pos` and `recon` must be equally long.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn aabigan_recon_discriminator_loss(
    real_pos: *const f64,
    n_real_pos: usize,
    real_neg: *const f64,
    n_real_neg: usize,
    recon: *const f64,
    n_recon: usize,
    a: f64,
    b: f64,
    c: f64,
    out_loss: *mut f64,
) -> AabiganStatus {
    pair_loss_impl(
        real_pos,
        n_real_pos,
        real_neg,
        n_real_neg,
        recon,
        n_recon,
        a,
        b,
        c,
        out_loss,
        objectives::recon_discriminator_loss,
    )
}

/// Pair-discriminator generator/encoder loss: all pair populations
/// regress to `c`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn aabigan_recon_generator_encoder_loss(
    real_pos: *const f64,
    n_real_pos: usize,
    real_neg: *const f64,
    n_real_neg: usize,
    recon: *const f64,
    n_recon: usize,
    a: f64,
    b: f64,
    c: f64,
    out_loss: *mut f64,
) -> AabiganStatus {
    pair_loss_impl(
        real_pos,
        n_real_pos,
        real_neg,
        n_real_neg,
        recon,
        n_recon,
        a,
        b,
        c,
        out_loss,
        objectives::recon_generator_encoder_loss,
    )
}

#[allow(clippy::too_many_arguments)]
unsafe fn pair_loss_impl(
    real_pos: *const f64,
    n_real_pos: usize,
    real_neg: *const f64,
    n_real_neg: usize,
    recon: *const f64,
    n_recon: usize,
    a: f64,
    b: f64,
    c: f64,
    out_loss: *mut f64,
    f: fn(&PairScoreBatch, &TargetScheme) -> aabigan::error::Result<f64>,
) -> AabiganStatus {
    if out_loss.is_null() {
        set_error("out_loss is null");
        return AabiganStatus::NullPointer;
    }
    let (Some(rp), Some(rn), Some(rc)) = (
        slice_arg(real_pos, n_real_pos),
        slice_arg(real_neg, n_real_neg),
        slice_arg(recon, n_recon),
    ) else {
        set_error("score array pointer is null");
        return AabiganStatus::NullPointer;
    };
    let scheme = match scheme_arg(a, b, c) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let batch = PairScoreBatch::new(rp.to_vec(), rn.to_vec(), rc.to_vec());
    match f(&batch, &scheme) {
        Ok(loss) => {
            *out_loss = loss;
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Tie-aware AUROC; `labels` are 0 (normal) / 1 (anomaly).
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aabigan_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> AabiganStatus {
    let (Some(s), Some(l)) = (slice_arg(scores, n), slice_arg(labels, n)) else {
        set_error("scores/labels pointer is null");
        return AabiganStatus::NullPointer;
    };
    if out.is_null() {
        set_error("out is null");
        return AabiganStatus::NullPointer;
    }
    match metrics::auroc(s, l) {
        Ok(v) => {
            *out = v;
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Frechet distance between Gaussian fits of two row-major feature
/// matrices (`n_* x dim`).
///
/// # Safety
/// Matrices must hold `n_real * dim` and `n_gen * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aabigan_fid(
    features_real: *const f64,
    n_real: usize,
    features_gen: *const f64,
    n_gen: usize,
    dim: usize,
    out: *mut f64,
) -> AabiganStatus {
    let (Some(fr), Some(fg)) = (
        slice_arg(features_real, n_real * dim),
        slice_arg(features_gen, n_gen * dim),
    ) else {
        set_error("feature matrix pointer is null");
        return AabiganStatus::NullPointer;
    };
    if out.is_null() || dim == 0 {
        set_error("out is null or dim is zero");
        return AabiganStatus::NullPointer;
    }
    let rows = |flat: &[f64]| -> Vec<Vec<f64>> { flat.chunks(dim).map(|c| c.to_vec()).collect() };
    match metrics::fid(&rows(fr), &rows(fg)) {
        Ok(v) => {
            *out = v;
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// Closed-form optimal discriminator per cell over a flat grid of
/// `n_cells` masses. `p_minus` may be null. Cells with zero total mass
/// come back as NaN.
///
/// # Safety
/// Mass arrays must hold `n_cells` doubles; `out` must be writable for
/// `n_cells` doubles.
#[no_mangle]
pub unsafe extern "C" fn aabigan_optimal_discriminator(
    p_plus: *const f64,
    p_minus: *const f64,
    p_g: *const f64,
    n_cells: usize,
    a: f64,
    b: f64,
    c: f64,
    out: *mut f64,
) -> AabiganStatus {
    let (Some(pp), Some(pg)) = (slice_arg(p_plus, n_cells), slice_arg(p_g, n_cells)) else {
        set_error("p_plus/p_g pointer is null");
        return AabiganStatus::NullPointer;
    };
    if out.is_null() || n_cells == 0 {
        set_error("out is null or the grid is empty");
        return AabiganStatus::NullPointer;
    }
    let pm = if p_minus.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p_minus, n_cells))
    };
    let scheme = match scheme_arg(a, b, c) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let to_joint = |mass: &[f64]| DiscreteJoint::from_mass(n_cells, 1, mass.to_vec());
    let result = (|| -> aabigan::error::Result<Vec<Option<f64>>> {
        let pp = to_joint(pp)?;
        let pg = to_joint(pg)?;
        let pm = pm.map(to_joint).transpose()?;
        oracle::optimal_discriminator(&pp, pm.as_ref(), &pg, &scheme)
    })();
    match result {
        Ok(table) => {
            for (i, v) in table.iter().enumerate() {
                *out.add(i) = v.unwrap_or(f64::NAN);
            }
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Pearson chi-square divergence `sum (p - q)^2 / q` over raw
/// non-negative measures.
///
/// # Safety
/// `p` and `q` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aabigan_pearson_chi2(
    p: *const f64,
    q: *const f64,
    n: usize,
    out: *mut f64,
) -> AabiganStatus {
    let (Some(p), Some(q)) = (slice_arg(p, n), slice_arg(q, n)) else {
        set_error("p/q pointer is null");
        return AabiganStatus::NullPointer;
    };
    if out.is_null() {
        set_error("out is null");
        return AabiganStatus::NullPointer;
    }
    match oracle::pearson_chi2_mass(p, q) {
        Ok(v) => {
            *out = v;
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Run the full theory verification suite; `out_all_passed` receives 1 if
/// every check passed.
///
/// # Safety
/// `out_all_passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aabigan_verify(seed: u64, out_all_passed: *mut u8) -> AabiganStatus {
    if out_all_passed.is_null() {
        set_error("out_all_passed is null");
        return AabiganStatus::NullPointer;
    }
    let report = oracle::run_verification(seed);
    *out_all_passed = u8::from(report.all_passed());
    AabiganStatus::Ok
}

// ---------------------------------------------------------------------------
// Model handles
// ---------------------------------------------------------------------------

/// Opaque handle to a loaded model.
pub struct AabiganModel {
    bundle: ModelBundle,
}

/// Load a model from a checkpoint directory written by the trainer.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_load(
    path: *const c_char,
    out: *mut *mut AabiganModel,
) -> AabiganStatus {
    if path.is_null() || out.is_null() {
        set_error("path/out pointer is null");
        return AabiganStatus::NullPointer;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return AabiganStatus::InvalidInput;
    };
    match trainer::load_checkpoint(Path::new(path)) {
        Ok((bundle, _, _)) => {
            *out = Box::into_raw(Box::new(AabiganModel { bundle }));
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a pointer previously returned by `aabigan_model_load`.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_free(model: *mut AabiganModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Flattened per-sample input dimension the model expects.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_input_dim(model: *const AabiganModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.preset.input_dim())
}

/// Latent-code dimension.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_latent_dim(model: *const AabiganModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.latent_dim())
}

unsafe fn model_batch<'a>(
    model: *const AabiganModel,
    x: *const f32,
    n: usize,
) -> Result<(&'a AabiganModel, Vec<Vec<f32>>), AabiganStatus> {
    let Some(m) = model.as_ref() else {
        set_error("model handle is null");
        return Err(AabiganStatus::NullPointer);
    };
    let dim = m.bundle.preset.input_dim();
    let Some(flat) = slice_arg(x, n * dim) else {
        set_error("input batch pointer is null");
        return Err(AabiganStatus::NullPointer);
    };
    if n == 0 {
        set_error("batch is empty");
        return Err(AabiganStatus::InvalidInput);
    }
    Ok((m, flat.chunks(dim).map(|c| c.to_vec()).collect()))
}

/// Squared reconstruction error per sample; `x` is `n x input_dim`
/// row-major, `out` receives `n` doubles.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_recon_error(
    model: *const AabiganModel,
    x: *const f32,
    n: usize,
    out: *mut f64,
) -> AabiganStatus {
    let (m, batch) = match model_batch(model, x, n) {
        Ok(v) => v,
        Err(s) => return s,
    };
    if out.is_null() {
        set_error("out is null");
        return AabiganStatus::NullPointer;
    }
    match scoring::recon_error_score(&m.bundle, &batch) {
        Ok(sv) => {
            std::ptr::copy_nonoverlapping(sv.scores.as_ptr(), out, sv.scores.len());
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Latent-code norm per sample.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_latent_norm(
    model: *const AabiganModel,
    x: *const f32,
    n: usize,
    out: *mut f64,
) -> AabiganStatus {
    let (m, batch) = match model_batch(model, x, n) {
        Ok(v) => v,
        Err(s) => return s,
    };
    if out.is_null() {
        set_error("out is null");
        return AabiganStatus::NullPointer;
    }
    match scoring::latent_norm_score(&m.bundle, &batch) {
        Ok(sv) => {
            std::ptr::copy_nonoverlapping(sv.scores.as_ptr(), out, sv.scores.len());
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Reconstruct a batch: `out` receives `n x input_dim` floats.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_reconstruct(
    model: *const AabiganModel,
    x: *const f32,
    n: usize,
    out: *mut f32,
) -> AabiganStatus {
    let (m, batch) = match model_batch(model, x, n) {
        Ok(v) => v,
        Err(s) => return s,
    };
    if out.is_null() {
        set_error("out is null");
        return AabiganStatus::NullPointer;
    }
    match m.bundle.reconstruct(&batch) {
        Ok(rows) => {
            let dim = m.bundle.preset.input_dim();
            for (i, row) in rows.iter().enumerate() {
                std::ptr::copy_nonoverlapping(row.as_ptr(), out.add(i * dim), dim);
            }
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Encode a batch into latent codes: `out` receives `n x latent_dim`
/// floats.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn aabigan_model_encode(
    model: *const AabiganModel,
    x: *const f32,
    n: usize,
    out: *mut f32,
) -> AabiganStatus {
    let (m, batch) = match model_batch(model, x, n) {
        Ok(v) => v,
        Err(s) => return s,
    };
    if out.is_null() {
        set_error("out is null");
        return AabiganStatus::NullPointer;
    }
    match m.bundle.encode(&batch) {
        Ok(rows) => {
            let dim = m.bundle.latent_dim();
            for (i, row) in rows.iter().enumerate() {
                std::ptr::copy_nonoverlapping(row.as_ptr(), out.add(i * dim), dim);
            }
            AabiganStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aabigan::networks::ArchitecturePreset;
    use aabigan::trainer::{save_checkpoint, TrainHistory};

    #[test]
    fn loss_roundtrip_through_abi() {
        let pos = [0.8f64];
        let neg = [0.2f64];
        let gen = [0.3f64];
        let mut loss = 0.0f64;
        let mut gp = [0.0f64; 1];
        let mut gn = [0.0f64; 1];
        let mut gg = [0.0f64; 1];
        let status = unsafe {
            aabigan_aa_discriminator_loss(
                pos.as_ptr(),
                1,
                neg.as_ptr(),
                1,
                gen.as_ptr(),
                1,
                1.0,
                0.0,
                0.75,
                &mut loss,
                gp.as_mut_ptr(),
                gn.as_mut_ptr(),
                gg.as_mut_ptr(),
            )
        };
        assert_eq!(status, AabiganStatus::Ok);
        assert!((loss - 0.22).abs() < 1e-15);
        assert!((gp[0] - 2.0 * (0.8 - 1.0)).abs() < 1e-15);
        assert!((gn[0] - 2.0 * (0.2 - 0.5)).abs() < 1e-15);
        assert!((gg[0] - 2.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn degenerate_scheme_reports_invalid_input() {
        let pos = [0.5f64];
        let mut loss = 0.0f64;
        let status = unsafe {
            aabigan_aa_discriminator_loss(
                pos.as_ptr(),
                1,
                std::ptr::null(),
                0,
                pos.as_ptr(),
                1,
                0.5,
                0.5,
                0.5,
                &mut loss,
                std::ptr::null_mut(),
                std::ptr::null_mut(),
                std::ptr::null_mut(),
            )
        };
        assert_eq!(status, AabiganStatus::InvalidInput);
        let mut buf = [0i8; 256];
        let n = unsafe { aabigan_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 0);
    }

    #[test]
    fn auroc_and_chi2_through_abi() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [0u8, 0, 1, 1];
        let mut out = 0.0;
        assert_eq!(
            unsafe { aabigan_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) },
            AabiganStatus::Ok
        );
        assert_eq!(out, 1.0);

        let one = [0u8; 4];
        assert_eq!(
            unsafe { aabigan_auroc(scores.as_ptr(), one.as_ptr(), 4, &mut out) },
            AabiganStatus::UndefinedMetric
        );

        let p = [1.0, 0.0];
        let q = [0.5, 0.5];
        assert_eq!(
            unsafe { aabigan_pearson_chi2(p.as_ptr(), q.as_ptr(), 2, &mut out) },
            AabiganStatus::Ok
        );
        assert!((out - 1.0).abs() < 1e-15);
    }

    #[test]
    fn optimal_discriminator_through_abi() {
        let pp = [0.6, 0.4];
        let pm = [0.3, 0.7];
        let pg = [0.1, 0.9];
        let mut out = [0.0f64; 2];
        let status = unsafe {
            aabigan_optimal_discriminator(
                pp.as_ptr(),
                pm.as_ptr(),
                pg.as_ptr(),
                2,
                1.0,
                0.0,
                0.75,
                out.as_mut_ptr(),
            )
        };
        assert_eq!(status, AabiganStatus::Ok);
        assert!((out[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn verify_through_abi() {
        let mut passed = 0u8;
        assert_eq!(unsafe { aabigan_verify(7, &mut passed) }, AabiganStatus::Ok);
        assert_eq!(passed, 1);
    }

    #[test]
    fn model_handle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = ModelBundle::new(ArchitecturePreset::tabular_default(3), 5).unwrap();
        save_checkpoint(&bundle, &TrainHistory::default(), dir.path()).unwrap();

        let path = std::ffi::CString::new(dir.path().to_str().unwrap()).unwrap();
        let mut handle: *mut AabiganModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { aabigan_model_load(path.as_ptr(), &mut handle) },
            AabiganStatus::Ok
        );
        assert!(!handle.is_null());
        assert_eq!(unsafe { aabigan_model_input_dim(handle) }, 3);
        assert_eq!(unsafe { aabigan_model_latent_dim(handle) }, 16);

        let x = [0.1f32, -0.2, 0.3, 0.0, 0.5, -0.5];
        let mut scores = [0.0f64; 2];
        assert_eq!(
            unsafe { aabigan_model_recon_error(handle, x.as_ptr(), 2, scores.as_mut_ptr()) },
            AabiganStatus::Ok
        );
        assert!(scores.iter().all(|s| s.is_finite() && *s >= 0.0));

        // Matches the in-process API exactly.
        let rows = vec![x[..3].to_vec(), x[3..].to_vec()];
        let direct = scoring::recon_error_score(&bundle, &rows).unwrap();
        assert_eq!(direct.scores, scores.to_vec());

        let mut recon = [0.0f32; 6];
        assert_eq!(
            unsafe { aabigan_model_reconstruct(handle, x.as_ptr(), 2, recon.as_mut_ptr()) },
            AabiganStatus::Ok
        );

        unsafe { aabigan_model_free(handle) };

        // Loading a missing checkpoint fails cleanly.
        let missing = std::ffi::CString::new("/nonexistent/ckpt").unwrap();
        let mut h2: *mut AabiganModel = std::ptr::null_mut();
        let status = unsafe { aabigan_model_load(missing.as_ptr(), &mut h2) };
        assert_ne!(status, AabiganStatus::Ok);
        assert!(h2.is_null());
    }
}
