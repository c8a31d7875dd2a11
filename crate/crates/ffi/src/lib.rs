//! C ABI over the `action-search` core.
//!
//! Every function returns an [`AsStatus`]. On failure the message is kept in
//! thread-local storage and read back with [`as_last_error_message`]. Models
//! and timelines are opaque handles owned by the caller and released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;
use std::ptr;

use action_search::inference::run_search;
use action_search::net::{checkpoint, SearchModelParams};
use action_search::temporal::{nms, tiou, Interval, Proposal};
use action_search::world::io::decode_timeline;
use action_search::world::FeatureTimeline;
use action_search::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A scored interval, the element type of `as_nms`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsProposal {
    pub start: f64,
    pub end: f64,
    pub class_id: u32,
    pub score: f64,
    pub anchor: f64,
}

/// Trained search model for one class.
pub struct AsModel(SearchModelParams);

/// Per-frame feature timeline of one video.
pub struct AsTimeline(FeatureTimeline);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: AsStatus, msg: impl Into<String>) -> AsStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> AsStatus {
    match e {
        Error::Io { .. } => AsStatus::Io,
        Error::Format { .. } | Error::Json { .. } => AsStatus::Format,
        Error::Numeric(_) => AsStatus::Numeric,
        _ => AsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), AsStatus> + UnwindSafe) -> AsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(f) {
        Ok(Ok(())) => AsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(AsStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: action_search::Result<T>) -> Result<T, AsStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), AsStatus> {
    if p.is_null() {
        Err(fail(AsStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, AsStatus> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(AsStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], AsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(data, "data")?;
    Ok(std::slice::from_raw_parts(data, len))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn as_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn as_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Temporal intersection over union of `[s1, e1]` and `[s2, e2]`.
///
/// # Safety
/// `out` must be null or point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn as_tiou(s1: f64, e1: f64, s2: f64, e2: f64, out: *mut f64) -> AsStatus {
    guard(|| {
        non_null(out, "out")?;
        let a = check(Interval::new(s1, e1))?;
        let b = check(Interval::new(s2, e2))?;
        *out = tiou(&a, &b);
        Ok(())
    })
}

/// Class-wise non-maximum suppression. `out` needs room for `len` proposals;
/// the survivors are written in ranking order and their count to `out_len`.
///
/// # Safety
/// `proposals` must point to `len` readable elements and `out` to `len`
/// writable ones. `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_nms(
    proposals: *const AsProposal,
    len: usize,
    threshold: f64,
    out: *mut AsProposal,
    out_len: *mut usize,
) -> AsStatus {
    guard(|| {
        non_null(out_len, "out_len")?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(fail(AsStatus::InvalidArgument, format!("threshold {threshold} outside [0,1]")));
        }
        let input = if len == 0 {
            &[][..]
        } else {
            non_null(proposals, "proposals")?;
            non_null(out, "out")?;
            std::slice::from_raw_parts(proposals, len)
        };
        let parsed = input
            .iter()
            .map(|p| {
                Ok(Proposal {
                    interval: check(Interval::new(p.start, p.end))?,
                    class_id: p.class_id,
                    anchor: p.anchor,
                    score: p.score,
                })
            })
            .collect::<Result<Vec<_>, AsStatus>>()?;
        let kept = nms(&parsed, threshold);
        for (i, p) in kept.iter().enumerate() {
            *out.add(i) = AsProposal {
                start: p.interval.start(),
                end: p.interval.end(),
                class_id: p.class_id,
                score: p.score,
                anchor: p.anchor,
            };
        }
        *out_len = kept.len();
        Ok(())
    })
}

/// Loads a search model checkpoint (`.asmd`) from disk.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_model_load(path: *const c_char, out: *mut *mut AsModel) -> AsStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = check(checkpoint::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(AsModel(params)));
        Ok(())
    })
}

/// Decodes a search model checkpoint held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_model_from_bytes(data: *const u8, len: usize, out: *mut *mut AsModel) -> AsStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = check(checkpoint::decode(bytes_arg(data, len)?, Path::new("<memory>")))?;
        *out = Box::into_raw(Box::new(AsModel(params)));
        Ok(())
    })
}

/// Class id the model was trained for.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_model_class_id(model: *const AsModel, out: *mut u32) -> AsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).0.class_id;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `as_model_load` or `as_model_from_bytes` and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn as_model_free(model: *mut AsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads an FTLN feature timeline; the video id is the file stem.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_timeline_load(path: *const c_char, out: *mut *mut AsTimeline) -> AsStatus {
    guard(|| {
        non_null(out, "out")?;
        let tl = check(action_search::world::io::read_timeline(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(AsTimeline(tl)));
        Ok(())
    })
}

/// Decodes an FTLN feature timeline held in memory.
///
/// # Safety
/// `video_id` must be a NUL-terminated string, `data` must point to `len`
/// readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_timeline_from_bytes(
    video_id: *const c_char,
    data: *const u8,
    len: usize,
    out: *mut *mut AsTimeline,
) -> AsStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(video_id, "video_id")?;
        let id = CStr::from_ptr(video_id)
            .to_str()
            .map_err(|_| fail(AsStatus::InvalidArgument, "video_id is not UTF-8"))?;
        let tl = check(decode_timeline(id, bytes_arg(data, len)?, Path::new("<memory>")))?;
        *out = Box::into_raw(Box::new(AsTimeline(tl)));
        Ok(())
    })
}

/// Duration of the timeline in seconds.
///
/// # Safety
/// `timeline` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_timeline_duration(timeline: *const AsTimeline, out: *mut f64) -> AsStatus {
    guard(|| {
        non_null(timeline, "timeline")?;
        non_null(out, "out")?;
        *out = (*timeline).0.duration();
        Ok(())
    })
}

/// Releases a timeline. Null is ignored.
///
/// # Safety
/// `timeline` must come from `as_timeline_load` or `as_timeline_from_bytes`
/// and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn as_timeline_free(timeline: *mut AsTimeline) {
    if !timeline.is_null() {
        drop(Box::from_raw(timeline));
    }
}

/// Runs the search from `initial_position` for at most `steps` steps and
/// writes the visited positions (seconds) to `positions`. The search may stop
/// early, so `out_len` receives the number written. `capacity` must be at
/// least `steps`.
///
/// # Safety
/// Handles must be live, `positions` must have `capacity` writable slots and
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_search(
    model: *const AsModel,
    timeline: *const AsTimeline,
    initial_position: f64,
    steps: usize,
    positions: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> AsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(timeline, "timeline")?;
        non_null(out_len, "out_len")?;
        if capacity < steps {
            return Err(fail(
                AsStatus::BufferTooSmall,
                format!("capacity {capacity} is below steps {steps}"),
            ));
        }
        if steps > 0 {
            non_null(positions, "positions")?;
        }
        if !initial_position.is_finite() {
            return Err(fail(AsStatus::InvalidArgument, "initial position is not finite"));
        }
        let visited = check(run_search(&(*model).0, &(*timeline).0, initial_position, steps))?;
        ptr::copy_nonoverlapping(visited.as_ptr(), positions, visited.len());
        *out_len = visited.len();
        Ok(())
    })
}
