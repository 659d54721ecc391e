use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn disco() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_disco"));
    c.env_remove("DISCO_KERNEL_CACHE");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn constant_fixture_passes_verify_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.ssig");
    let o = run(disco()
        .args(["conv", "--verify-constant", "--filter-file"])
        .arg(fixture("axisym_bump_l16.sflt"))
        .arg("--input")
        .arg(fixture("constant_l16.ssig"))
        .arg("--output")
        .arg(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.exists());
    assert!(stderr(&o).contains("pass"));
}

#[test]
fn verify_constant_fails_on_random_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(disco()
        .args(["conv", "--verify-constant", "--input"])
        .arg(fixture("random_l16.ssig"))
        .arg("--output")
        .arg(dir.path().join("out.ssig")));
    assert_eq!(code(&o), 1);
}

#[test]
fn saved_filter_reproduces_kernel_hash() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(disco()
        .args(["conv", "--kind", "separable", "--filter-seed", "5", "--input"])
        .arg(fixture("random_l16.ssig"))
        .arg("--output")
        .arg(d.join("a.ssig"))
        .arg("--save-filter")
        .arg(d.join("f.sflt"))
        .arg("--report")
        .arg(d.join("a.json")));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(disco()
        .args(["conv", "--input"])
        .arg(fixture("random_l16.ssig"))
        .arg("--output")
        .arg(d.join("b.ssig"))
        .arg("--filter-file")
        .arg(d.join("f.sflt"))
        .arg("--report")
        .arg(d.join("b.json")));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (a, b) = (report(&d.join("a.json")), report(&d.join("b.json")));
    assert_eq!(a["result"]["kernel_hash"], b["result"]["kernel_hash"]);
    assert_eq!(a["result"]["output_sha256"], b["result"]["output_sha256"]);
}

#[test]
fn transposed_upsample_doubles_bandlimit() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let o = run(disco()
        .args(["conv", "--transposed", "--upsample", "--input"])
        .arg(fixture("random_l16.ssig"))
        .arg("--output")
        .arg(dir.path().join("up.ssig"))
        .arg("--report")
        .arg(&rep));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&rep)["result"]["l_out"], 32);

    let o = run(disco()
        .args(["conv", "--upsample", "--input"])
        .arg(fixture("random_l16.ssig"))
        .arg("--output")
        .arg(dir.path().join("up.ssig")));
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(disco()
        .args(["conv", "--input"])
        .arg(dir.path().join("absent.ssig"))
        .arg("--output")
        .arg(dir.path().join("o.ssig")));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn malformed_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ssig");
    std::fs::write(&bad, b"not a signal").unwrap();
    let o = run(disco()
        .args(["conv", "--input"])
        .arg(&bad)
        .arg("--output")
        .arg(dir.path().join("o.ssig")));
    assert_eq!(code(&o), 3);
}

#[test]
fn negative_beta_is_rejected() {
    let o = run(disco().args(["equiv", "--L", "8", "--kind", "directional", "--beta", "-5"]));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("beta"));
}

#[test]
fn equiv_prints_one_csv_row() {
    let o = run(disco().args([
        "equiv",
        "--L",
        "8",
        "--kind",
        "axisym",
        "--case",
        "worst",
        "--signals",
        "2",
        "--rotations",
        "2",
    ]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<_> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("L,kind,case"));
    assert!(lines[1].starts_with("8,axisym"));
}

#[test]
fn profile_default_has_slope_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(disco().args(["profile", "--out"]).arg(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<_> = csv.lines().collect();
    assert_eq!(rows.len(), 1 + 2 * 5 + 2);
    assert!(rows.iter().any(|r| r.starts_with("slope,disco,")));
    assert!(rows.iter().any(|r| r.starts_with("slope,harmonic,")));
}

#[test]
fn profile_to_unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(disco()
        .args(["profile", "--L-list", "8,16", "--out"])
        .arg(dir.path().join("missing").join("p.csv")));
    assert_eq!(code(&o), 3);
}

#[test]
fn profile_rejects_tiny_bandlimits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(disco()
        .args(["profile", "--L-list", "2,8", "--out"])
        .arg(dir.path().join("p.csv")));
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_passes_for_each_kind() {
    for kind in ["axisym", "separable", "directional"] {
        let o = run(disco().args(["gradcheck", "--kind", kind]));
        assert_eq!(code(&o), 0, "{kind}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("PASS"));
    }
}

#[test]
fn corrupt_cache_entry_is_reported() {
    let cache = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let conv = |out: &str| {
        run(disco()
            .env("DISCO_KERNEL_CACHE", cache.path())
            .args(["conv", "--input"])
            .arg(fixture("random_l16.ssig"))
            .arg("--output")
            .arg(dir.path().join(out)))
    };
    assert_eq!(code(&conv("a.ssig")), 0);
    let entries: Vec<_> = std::fs::read_dir(cache.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1);
    // warm cache gives the same bytes
    assert_eq!(code(&conv("b.ssig")), 0);
    assert_eq!(
        std::fs::read(dir.path().join("a.ssig")).unwrap(),
        std::fs::read(dir.path().join("b.ssig")).unwrap()
    );
    std::fs::write(&entries[0], b"garbage").unwrap();
    let o = conv("c.ssig");
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("kernel"));
}

#[test]
fn replay_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let o = run(disco()
        .args(["conv", "--transposed", "--input"])
        .arg(fixture("random_l16.ssig"))
        .arg("--output")
        .arg(dir.path().join("o.ssig"))
        .arg("--report")
        .arg(&rep));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(disco().arg("--replay").arg(&rep));
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    // tampered result must not match
    let mut r = report(&rep);
    r["result"]["nonzeros"] = serde_json::json!(0);
    std::fs::write(&rep, serde_json::to_string(&r).unwrap()).unwrap();
    let o = run(disco().arg("--replay").arg(&rep));
    assert_eq!(code(&o), 1);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for t in ["1", "3"] {
        let rep = dir.path().join(format!("r{t}.json"));
        let o = run(disco()
            .args([
                "--threads",
                t,
                "conv",
                "--kind",
                "directional",
                "--filter-seed",
                "9",
                "--input",
            ])
            .arg(fixture("random_l16.ssig"))
            .arg("--output")
            .arg(dir.path().join(format!("o{t}.ssig")))
            .arg("--report")
            .arg(&rep));
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        hashes.push(report(&rep)["result"]["output_sha256"].clone());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn no_command_is_usage_error() {
    assert_eq!(code(&run(&mut disco())), 2);
}
