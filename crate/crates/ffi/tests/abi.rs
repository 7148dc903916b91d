use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use driftscope::testkit::{generate_log, ring_matrix, Applicants, DriftChange, DriftSpec, ProcessSpec};
use driftscope_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ds_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_fixture(dir: &Path, traces: usize, drift_at: Option<usize>) -> CString {
    let spec = ProcessSpec {
        applicants: Applicants::Pool(40),
        event_ids: false,
        ..ProcessSpec::example(3)
    };
    let drifts: Vec<DriftSpec> = drift_at
        .map(|at| DriftSpec {
            at_trace: at,
            changes: vec![DriftChange::Transitions {
                matrix: ring_matrix(8, 3, 0.6, 0.1),
            }],
        })
        .into_iter()
        .collect();
    let log = generate_log(&spec, traces, &drifts).unwrap().log;
    let path = dir.join("log.csv");
    log.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    c(path.to_str().unwrap())
}

unsafe fn parse(path: &CString) -> *mut DsLog {
    let mut log = ptr::null_mut();
    let status = ds_log_parse(path.as_ptr(), c("case").as_ptr(), c("time").as_ptr(), &mut log);
    assert_eq!(status, DsStatus::Ok);
    log
}

#[test]
fn learn_save_load_score_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_fixture(tmp.path(), 300, None);
    unsafe {
        let log = parse(&csv);
        assert_eq!(ds_log_trace_count(log), 300);
        let events = ds_log_event_count(log);
        assert!(events > 300);

        let mut model = ptr::null_mut();
        assert_eq!(ds_model_learn(log, 2000, 0.0, 0, &mut model), DsStatus::Ok);
        assert!(ds_last_error().is_null());
        let model_path = c(tmp.path().join("model.json").to_str().unwrap());
        assert_eq!(ds_model_save(model, model_path.as_ptr()), DsStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(ds_model_load(model_path.as_ptr(), &mut loaded), DsStatus::Ok);

        let mut reparsed = ptr::null_mut();
        assert_eq!(ds_log_parse_for_model(loaded, csv.as_ptr(), &mut reparsed), DsStatus::Ok);

        let means_of = |m: *const DsModel, l: *const DsLog| -> Vec<f64> {
            let mut scores = ptr::null_mut();
            assert_eq!(ds_score_log(m, l, &mut scores), DsStatus::Ok);
            let n = ds_scores_len(scores);
            let mut buf = vec![f64::NAN; n];
            assert_eq!(ds_scores_means(scores, buf.as_mut_ptr(), n), DsStatus::Ok);
            ds_scores_free(scores);
            buf
        };
        let a = means_of(model, log);
        let b = means_of(loaded, reparsed);
        assert_eq!(a.len(), 300);
        assert_eq!(a, b);
        assert!(a.iter().all(|&m| (0.0..=1.0).contains(&m)));

        ds_log_free(reparsed);
        ds_model_free(loaded);
        ds_model_free(model);
        ds_log_free(log);
    }
}

#[test]
fn drift_detection_over_the_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_fixture(tmp.path(), 1200, Some(800));
    unsafe {
        let log = parse(&csv);
        let mut model = ptr::null_mut();
        assert_eq!(ds_model_learn(log, 8000, 0.99, 2, &mut model), DsStatus::Ok);
        let mut scores = ptr::null_mut();
        assert_eq!(ds_score_log(model, log, &mut scores), DsStatus::Ok);
        let n = ds_scores_len(scores);
        let mut means = vec![0.0; n];
        assert_eq!(ds_scores_means(scores, means.as_mut_ptr(), n), DsStatus::Ok);

        let mut count = 0usize;
        let status = ds_detect_drift(means.as_ptr(), n, 200, 1, 0.01, 0, ptr::null_mut(), 0, &mut count);
        assert!(count > 0);
        assert_eq!(status, DsStatus::BufferTooSmall);
        let mut points = vec![0usize; count];
        let status = ds_detect_drift(means.as_ptr(), n, 200, 1, 0.01, 0, points.as_mut_ptr(), count, &mut count);
        assert_eq!(status, DsStatus::Ok);
        assert!(points.iter().any(|&p| p.abs_diff(800) <= 50), "{points:?}");

        let mut too_small = [0.0; 1];
        assert_eq!(ds_scores_means(scores, too_small.as_mut_ptr(), 1), DsStatus::BufferTooSmall);

        ds_scores_free(scores);
        ds_model_free(model);
        ds_log_free(log);
    }
}

#[test]
fn ks_matches_the_library() {
    let a = [0.1, 0.2, 0.3, 0.4, 0.5];
    let b = [0.35, 0.45, 0.55, 0.65, 0.75, 0.85];
    let (mut d, mut p) = (0.0, 0.0);
    let status = unsafe { ds_ks_two_sample(a.as_ptr(), a.len(), b.as_ptr(), b.len(), &mut d, &mut p) };
    assert_eq!(status, DsStatus::Ok);
    let expected = driftscope::drift::ks_two_sample(&a, &b).unwrap();
    assert_eq!((d, p), (expected.d, expected.p));

    let status = unsafe { ds_ks_two_sample(a.as_ptr(), a.len(), ptr::null(), 0, &mut d, &mut p) };
    assert_eq!(status, DsStatus::InvalidArgument);
    assert_eq!(last_error(), "empty sample");
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut log = ptr::null_mut();
        assert_eq!(
            ds_log_parse(ptr::null(), c("case").as_ptr(), ptr::null(), &mut log),
            DsStatus::NullPointer
        );
        assert!(last_error().contains("path"));
        assert_eq!(
            ds_log_parse(c("/nonexistent/log.csv").as_ptr(), c("case").as_ptr(), ptr::null(), &mut log),
            DsStatus::Io
        );
        let bad = [0x66u8, 0xff, 0];
        assert_eq!(
            ds_log_parse(bad.as_ptr().cast(), c("case").as_ptr(), ptr::null(), &mut log),
            DsStatus::InvalidUtf8
        );
        assert!(log.is_null());

        let tmp = tempfile::tempdir().unwrap();
        let empty = tmp.path().join("empty.csv");
        std::fs::write(&empty, "case,activity\n").unwrap();
        let empty = c(empty.to_str().unwrap());
        assert_eq!(ds_log_parse(empty.as_ptr(), c("case").as_ptr(), ptr::null(), &mut log), DsStatus::EmptyLog);
        assert_eq!(last_error(), "empty log");
        assert_eq!(
            ds_log_parse(empty.as_ptr(), c("missing").as_ptr(), ptr::null(), &mut log),
            DsStatus::Parse
        );

        let junk = tmp.path().join("junk.json");
        std::fs::write(&junk, "{\"not\": \"a model\"}").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(ds_model_load(c(junk.to_str().unwrap()).as_ptr(), &mut model), DsStatus::Model);

        let csv = write_fixture(tmp.path(), 50, None);
        let log = parse(&csv);
        assert_eq!(ds_model_learn(log, 100, 1.5, 0, &mut model), DsStatus::InvalidArgument);
        assert_eq!(ds_model_learn(log, 10_000_000, 0.0, 0, &mut model), DsStatus::InvalidArgument);
        assert_eq!(ds_model_learn(log, 100, 0.0, 0, ptr::null_mut()), DsStatus::NullPointer);

        let mut count = 0;
        let means = [0.5; 10];
        assert_eq!(
            ds_detect_drift(means.as_ptr(), 10, 5, 1, 0.01, 0, ptr::null_mut(), 0, &mut count),
            DsStatus::InvalidArgument
        );
        ds_log_free(log);

        // Freeing null handles is a no-op; counts of null handles are zero.
        ds_log_free(ptr::null_mut());
        ds_model_free(ptr::null_mut());
        ds_scores_free(ptr::null_mut());
        assert_eq!(ds_log_trace_count(ptr::null()), 0);
        assert_eq!(ds_scores_len(ptr::null()), 0);
    }
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/driftscope.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "ds_last_error",
        "ds_log_parse",
        "ds_model_learn",
        "ds_model_load",
        "ds_model_save",
        "ds_score_log",
        "ds_scores_means",
        "ds_ks_two_sample",
        "ds_detect_drift",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"driftscope.h\"\nint main(void) { DsLog *log = 0; return ds_log_parse(\"x\", \"case\", 0, &log) == DS_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
