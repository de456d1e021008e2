//! C interface: load a reduced-model archive, query its sizes, run the online
//! solver, and build archives offline.
//!
//! Every function returns a [`PreimStatus`]. On failure a message is kept per
//! thread and can be copied out with [`preim_last_error`]. Panics are caught at
//! the boundary and reported as `PREIM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use preim::archive::RomArchive;
use preim::bench::{run_algorithm, testcase, Algorithm, CaseId, RunOptions};
use preim::rom::online_solve;
use preim::PreimError;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreimStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericalFailure = 2,
    Unsupported = 3,
    DegenerateResidual = 4,
    NonTermination = 5,
    Format = 6,
    Io = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque handle to a loaded reduced model.
pub struct PreimRom {
    archive: RomArchive,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &PreimError) -> PreimStatus {
    match err {
        PreimError::InvalidArgument(_) => PreimStatus::InvalidArgument,
        PreimError::NumericalFailure(_) => PreimStatus::NumericalFailure,
        PreimError::UnsupportedConfiguration(_) => PreimStatus::Unsupported,
        PreimError::DegenerateResidual(_) => PreimStatus::DegenerateResidual,
        PreimError::NonTermination { .. } => PreimStatus::NonTermination,
        PreimError::Format { .. } => PreimStatus::Format,
        PreimError::Io(_) => PreimStatus::Io,
    }
}

struct Fail(PreimStatus, String);

impl From<PreimError> for Fail {
    fn from(e: PreimError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> PreimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PreimStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PreimStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PreimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(PreimStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Loads the archive in directory `dir` and stores a new handle in `*out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer. The handle
/// must be released with [`preim_rom_free`].
#[no_mangle]
pub unsafe extern "C" fn preim_rom_load(dir: *const c_char, out: *mut *mut PreimRom) -> PreimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let dir = PathBuf::from(c_str(dir, "dir")?);
        let archive = RomArchive::load(&dir)?;
        *out = Box::into_raw(Box::new(PreimRom { archive }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `rom` must come from [`preim_rom_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn preim_rom_free(rom: *mut PreimRom) {
    if !rom.is_null() {
        drop(Box::from_raw(rom));
    }
}

/// Reports the basis size `N`, the interpolation rank `M` and the number of time steps `K`.
/// Any output pointer may be null.
///
/// # Safety
/// `rom` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn preim_rom_dims(
    rom: *const PreimRom,
    basis_len: *mut usize,
    eim_rank: *mut usize,
    num_steps: *mut usize,
) -> PreimStatus {
    guard(|| {
        let rom = rom.as_ref().ok_or_else(|| null("rom"))?;
        let r = &rom.archive.rom;
        for (p, v) in [(basis_len, r.basis_len()), (eim_rank, r.eim_rank()), (num_steps, r.num_steps())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Solves the reduced model for parameter `mu` and writes the coefficients of
/// `û⁰ … ûᴷ` row by row into `out`, which must hold `(K + 1) · N` values.
///
/// # Safety
/// `rom` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn preim_rom_online(rom: *const PreimRom, mu: f64, out: *mut f64, len: usize) -> PreimStatus {
    guard(|| {
        let rom = rom.as_ref().ok_or_else(|| null("rom"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = &rom.archive.rom;
        let needed = (r.num_steps() + 1) * r.basis_len();
        if len < needed {
            return Err(Fail(PreimStatus::BufferTooSmall, format!("output needs {needed} values, got {len}")));
        }
        let traj = online_solve(r, mu)?;
        let dst = std::slice::from_raw_parts_mut(out, needed);
        for (chunk, row) in dst.chunks_exact_mut(r.basis_len()).zip(&traj) {
            chunk.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Runs an offline algorithm on a built-in test case and writes the archive to `out_dir`.
///
/// `case_name` is `"a"` or `"b"`; `algorithm` is `"standard"`, `"preim"`,
/// `"preim-nr"` or `"user"`. A zero `refine` and non-positive tolerances keep
/// the case defaults.
///
/// # Safety
/// All strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn preim_offline(
    case_name: *const c_char,
    algorithm: *const c_char,
    refine: usize,
    eps_pod: f64,
    eps_eim: f64,
    out_dir: *const c_char,
) -> PreimStatus {
    guard(|| {
        let id: CaseId = c_str(case_name, "case_name")?.parse()?;
        let algo: Algorithm = c_str(algorithm, "algorithm")?.parse()?;
        let out = PathBuf::from(c_str(out_dir, "out_dir")?);
        let mut config = testcase(id);
        if refine > 0 {
            config.refine = refine;
        }
        if eps_pod > 0.0 {
            config.eps_pod = eps_pod;
        }
        if eps_eim > 0.0 {
            config.eps_eim = eps_eim;
        }
        let model = config.build_model()?;
        let run = run_algorithm(&config, &model, algo, &RunOptions::default())?;
        RomArchive::save(&out, &config.archive_info(algo), &run.rom, &run.basis, &run.eim)?;
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length in bytes.
/// The message is empty after a successful call.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn preim_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_follow_variants() {
        assert_eq!(status_of(&PreimError::DegenerateResidual(0.0)), PreimStatus::DegenerateResidual);
        assert_eq!(
            status_of(&PreimError::NonTermination { iterations: 1, diagnostic: String::new() }),
            PreimStatus::NonTermination
        );
    }

    #[test]
    fn panics_become_status_codes() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, PreimStatus::Panic);
        let mut buf = [0 as c_char; 64];
        let n = unsafe { preim_last_error(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(n, msg.len());
        assert!(msg.contains("boom"));
    }

    #[test]
    fn last_error_truncates() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        let n = unsafe { preim_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes(), b"abc");
    }
}
