use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;

use preim::archive::RomArchive;
use preim::rom::online_solve;
use preim_ffi::*;

fn build_archive(dir: &Path) {
    let d = CString::new(dir.to_str().unwrap()).unwrap();
    let status = unsafe { preim_offline(c"a".as_ptr(), c"preim".as_ptr(), 4, 0.0, 0.0, d.as_ptr()) };
    assert_eq!(status, PreimStatus::Ok, "{}", last_error());
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { preim_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn load_and_solve_match_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    build_archive(tmp.path());
    let dir = CString::new(tmp.path().to_str().unwrap()).unwrap();

    let mut rom: *mut PreimRom = std::ptr::null_mut();
    assert_eq!(unsafe { preim_rom_load(dir.as_ptr(), &mut rom) }, PreimStatus::Ok);
    let (mut n, mut m, mut k) = (0usize, 0usize, 0usize);
    assert_eq!(unsafe { preim_rom_dims(rom, &mut n, &mut m, &mut k) }, PreimStatus::Ok);
    assert!(n > 0 && m > 0 && k == 50);

    let mut out = vec![0.0; (k + 1) * n];
    assert_eq!(unsafe { preim_rom_online(rom, 7.25, out.as_mut_ptr(), out.len()) }, PreimStatus::Ok);
    let expected = online_solve(&RomArchive::load(tmp.path()).unwrap().rom, 7.25).unwrap();
    assert_eq!(out, expected.concat());

    let mut short = vec![0.0; 3];
    assert_eq!(
        unsafe { preim_rom_online(rom, 7.25, short.as_mut_ptr(), short.len()) },
        PreimStatus::BufferTooSmall
    );
    assert!(last_error().contains("needs"));
    unsafe { preim_rom_free(rom) };
}

#[test]
fn failures_report_codes_and_messages() {
    let missing = CString::new("/nonexistent/preim-archive").unwrap();
    let mut rom: *mut PreimRom = std::ptr::null_mut();
    assert_eq!(unsafe { preim_rom_load(missing.as_ptr(), &mut rom) }, PreimStatus::Io);
    assert!(rom.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { preim_rom_load(std::ptr::null(), &mut rom) }, PreimStatus::NullPointer);
    assert_eq!(unsafe { preim_rom_dims(std::ptr::null(), std::ptr::null_mut(), std::ptr::null_mut(), std::ptr::null_mut()) }, PreimStatus::NullPointer);
    let status = unsafe { preim_offline(c"z".as_ptr(), c"preim".as_ptr(), 2, 0.0, 0.0, c"/tmp/unused".as_ptr()) };
    assert_eq!(status, PreimStatus::InvalidArgument);
    unsafe { preim_rom_free(std::ptr::null_mut()) };
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    assert!(include.join("preim.h").is_file(), "header is generated by the build script");
    let tmp = tempfile::tempdir().unwrap();
    let source = crate_dir.join("tests/c/smoke.c");

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let syntax = Command::new(&cc).arg("-std=c99").arg("-Wall").arg("-Werror").arg("-fsyntax-only").arg("-I").arg(&include).arg(&source).status();
    let Ok(syntax) = syntax else {
        eprintln!("no C compiler available, skipping");
        return;
    };
    assert!(syntax.success(), "header does not compile as C99");

    // test builds only refresh the rlib, so bring the static library up to date
    let profile_dir = target_dir();
    let mut build = Command::new(std::env::var("CARGO").unwrap_or_else(|_| "cargo".into()));
    build.args(["build", "--quiet", "-p", "preim-ffi", "--lib"]);
    if profile_dir.file_name().is_some_and(|n| n == "release") {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success(), "building the static library failed");
    let lib = profile_dir.join("libpreim_ffi.a");
    assert!(lib.is_file(), "static library not found at {}", lib.display());
    let exe = tmp.path().join("smoke");
    let linked = Command::new(&cc)
        .arg("-std=c99")
        .arg("-I")
        .arg(&include)
        .arg(&source)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(linked.success());

    let archive = tmp.path().join("rom");
    build_archive(&archive);
    let run = Command::new(&exe).arg(&archive).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    let rom = RomArchive::load(&archive).unwrap().rom;
    assert_eq!(fields[0].parse::<usize>().unwrap(), rom.basis_len());
    let last = online_solve(&rom, 7.25).unwrap().last().unwrap()[0];
    assert_eq!(fields[3].parse::<f64>().unwrap(), last);

    let missing = Command::new(&exe).arg(tmp.path().join("none")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}
