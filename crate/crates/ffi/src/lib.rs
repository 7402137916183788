//! C interface: load a dictionary bank, classify and separate 16 kHz
//! recordings, and run the sparse solver directly.
//!
//! Every fallible call returns an [`SsStatus`]; on failure a message is kept
//! per thread and read with [`ss_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{ArrayView1, ArrayView2, ShapeBuilder};
use sparsescene::audio::CANONICAL_RATE;
use sparsescene::dictionary::load_bank;
use sparsescene::recovery::Block;
use sparsescene::harness::{analyze_signal, separate_signal, PipelineParams, SignalAnalysis};
use sparsescene::{solve_asna, AsnaParams, AudioSignal, BlockDictionary, DictionaryBank, Error, RecoveryProblem};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Data = 4,
    Numerical = 5,
    InvalidArgument = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque handle to a loaded dictionary bank.
pub struct SsBank {
    bank: DictionaryBank,
}

/// Decisions for a recording: one or two noise regions with their speaker.
/// Indices are `-1` where a region or a decision is absent.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsClassification {
    /// Start of the second region in seconds; the signal length when only one noise was found.
    pub transition_s: f64,
    pub segment_count: usize,
    pub noise_index: [i64; 2],
    pub speaker_index: [i64; 2],
    /// Non-zero when the speaker decision of the region is weak.
    pub low_confidence: [i32; 2],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::Io(_) | Error::MissingPath(_) | Error::Wav(_) => SsStatus::Io,
        Error::NumericalFailure { .. } | Error::DegenerateTarget => SsStatus::Numerical,
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Config(_) => SsStatus::InvalidArgument,
        _ => SsStatus::Data,
    }
}

/// Run `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (SsStatus, String)>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (SsStatus, String) {
    (SsStatus::NullArgument, format!("{name} is null"))
}

fn classification_of(a: &SignalAnalysis) -> SsClassification {
    let mut c = SsClassification {
        transition_s: a.transition_s,
        segment_count: a.segments.len(),
        noise_index: [-1; 2],
        speaker_index: [-1; 2],
        low_confidence: [0; 2],
    };
    for (k, s) in a.segments.iter().take(2).enumerate() {
        c.noise_index[k] = s.noise_index as i64;
        c.speaker_index[k] = s.speaker_index.map_or(-1, |i| i as i64);
        c.low_confidence[k] = s.low_confidence as i32;
    }
    c
}

/// # Safety
/// `samples` must point to `len` readable doubles when non-null.
unsafe fn signal_from(samples: *const f64, len: usize, sample_rate: u32) -> Result<AudioSignal, (SsStatus, String)> {
    if samples.is_null() {
        return Err(null("samples"));
    }
    let data = std::slice::from_raw_parts(samples, len).to_vec();
    AudioSignal::new(data, sample_rate).map_err(lib_err)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Load a bank file. On success `*out` owns a handle released with [`ss_bank_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_load(path: *const c_char, out: *mut *mut SsBank) -> SsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| (SsStatus::InvalidUtf8, e.to_string()))?;
        let bank = load_bank(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SsBank { bank }));
        Ok(())
    })
}

/// Release a handle from [`ss_bank_load`]; null is ignored.
///
/// # Safety
/// `bank` must come from [`ss_bank_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_free(bank: *mut SsBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Number of noise dictionaries, or 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_noise_count(bank: *const SsBank) -> usize {
    bank.as_ref().map_or(0, |b| b.bank.n_noise())
}

/// Number of speaker dictionaries, or 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_speaker_count(bank: *const SsBank) -> usize {
    bank.as_ref().map_or(0, |b| b.bank.n_speakers())
}

/// Spectral dimension of every atom, or 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_dim(bank: *const SsBank) -> usize {
    bank.as_ref().map_or(0, |b| b.bank.dim())
}

unsafe fn copy_label(label: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), (SsStatus, String)> {
    let bytes = label.as_bytes();
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() || cap < bytes.len() + 1 {
        return Err((SsStatus::BufferTooSmall, format!("label needs {} bytes", bytes.len() + 1)));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Copy the label of a dictionary into `buf` (NUL-terminated). `*needed`, when
/// non-null, receives the required size even if `cap` is too small.
///
/// # Safety
/// `bank` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
unsafe fn label_at(
    bank: *const SsBank,
    speaker: bool,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SsStatus {
    guard(|| {
        let b = &bank.as_ref().ok_or_else(|| null("bank"))?.bank;
        let labels = if speaker { b.speaker_labels() } else { b.noise_labels() };
        let label = labels.get(index).ok_or((SsStatus::InvalidArgument, format!("index {index} out of range")))?;
        copy_label(label, buf, cap, needed)
    })
}

/// Label of noise dictionary `index`; see [`ss_bank_speaker_label`] for the buffer contract.
///
/// # Safety
/// As [`ss_bank_speaker_label`].
#[no_mangle]
pub unsafe extern "C" fn ss_bank_noise_label(
    bank: *const SsBank,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SsStatus {
    label_at(bank, false, index, buf, cap, needed)
}

/// Copy the label of speaker dictionary `index` into `buf` as a NUL-terminated
/// string. `*needed`, when non-null, receives the required size even when
/// `cap` is too small.
///
/// # Safety
/// `bank` must be a live handle, `buf` must hold `cap` bytes, `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_speaker_label(
    bank: *const SsBank,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SsStatus {
    label_at(bank, true, index, buf, cap, needed)
}

/// Segment the noise of a 16 kHz recording and identify the speaker of each region.
///
/// # Safety
/// `bank` must be a live handle, `samples` must hold `len` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_classify(
    bank: *const SsBank,
    samples: *const f64,
    len: usize,
    out: *mut SsClassification,
) -> SsStatus {
    guard(|| {
        let b = &bank.as_ref().ok_or_else(|| null("bank"))?.bank;
        if out.is_null() {
            return Err(null("out"));
        }
        let signal = signal_from(samples, len, CANONICAL_RATE)?;
        let a = analyze_signal(&signal, b, &PipelineParams::standard(CANONICAL_RATE)).map_err(lib_err)?;
        *out = classification_of(&a);
        Ok(())
    })
}

/// Classify, then separate a 16 kHz recording into speech and noise, each
/// written as `len` samples. `classification` may be null.
///
/// # Safety
/// `bank` must be a live handle; `samples`, `speech_out` and `noise_out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_separate(
    bank: *const SsBank,
    samples: *const f64,
    len: usize,
    speech_out: *mut f64,
    noise_out: *mut f64,
    classification: *mut SsClassification,
) -> SsStatus {
    guard(|| {
        let b = &bank.as_ref().ok_or_else(|| null("bank"))?.bank;
        if speech_out.is_null() || noise_out.is_null() {
            return Err(null("speech_out or noise_out"));
        }
        let signal = signal_from(samples, len, CANONICAL_RATE)?;
        let (a, r) = separate_signal(&signal, b, &PipelineParams::standard(CANONICAL_RATE)).map_err(lib_err)?;
        ptr::copy_nonoverlapping(r.speech_signal.samples().as_ptr(), speech_out, len);
        ptr::copy_nonoverlapping(r.noise_signal.samples().as_ptr(), noise_out, len);
        if !classification.is_null() {
            *classification = classification_of(&a);
        }
        Ok(())
    })
}

/// Minimise the KL divergence between `y` (length `rows`) and `D x` over
/// `x >= 0`, where `D` is `rows x cols` in column-major order. Writes `cols`
/// weights and, when non-null, the final objective. `tol <= 0` or
/// `max_iters == 0` select the defaults.
///
/// # Safety
/// `dictionary` must hold `rows * cols` doubles, `y` `rows`, `weights_out` `cols`; `objective_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_solve_asna(
    dictionary: *const f64,
    rows: usize,
    cols: usize,
    y: *const f64,
    tol: f64,
    max_iters: usize,
    weights_out: *mut f64,
    objective_out: *mut f64,
) -> SsStatus {
    guard(|| {
        if dictionary.is_null() || y.is_null() || weights_out.is_null() {
            return Err(null("dictionary, y or weights_out"));
        }
        if rows == 0 || cols == 0 {
            return Err((SsStatus::InvalidArgument, "empty dictionary".into()));
        }
        let data = std::slice::from_raw_parts(dictionary, rows * cols);
        let atoms = ArrayView2::from_shape((rows, cols).f(), data).expect("length checked");
        let block = BlockDictionary::from_matrix(atoms, vec![Block { label: "dictionary".into(), start: 0, end: cols }])
            .map_err(lib_err)?;
        let target = ArrayView1::from(std::slice::from_raw_parts(y, rows));
        let problem = RecoveryProblem::new(target, &block).map_err(lib_err)?;
        let mut params = AsnaParams::default();
        if tol > 0.0 {
            params.tol = tol;
        }
        if max_iters > 0 {
            params.max_iters = max_iters;
        }
        let sol = solve_asna(&problem, &params).map_err(lib_err)?;
        ptr::copy_nonoverlapping(sol.weights.as_ptr(), weights_out, cols);
        if !objective_out.is_null() {
            *objective_out = sol.objective;
        }
        Ok(())
    })
}
