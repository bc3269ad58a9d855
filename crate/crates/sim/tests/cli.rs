use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
scenario_id = "tiny"
n_aps = 8
m_users = 8
area_side_m = 300.0
k_total = 12
k_pilot = 4
tx_power_dbm = [-10.0, 0.0]
receivers = ["bigabp", "zf_mmvamp", "gabp_mmvamp", "genie_gabp", "mns", "mmse_genie"]
trials = 3
pilot_outer_iterations = 3
"#;

fn gfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfree"))
        .args(args)
        .env_remove("GFREE_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(gfree(&[]).status.code(), Some(2));
    assert_eq!(gfree(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(gfree(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gfree(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_or_bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = gfree(&["run", "--config", "/nonexistent/cfg.toml", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));
    let cfg = write_config(dir.path(), "tx_power_dbm = [30.0]");
    assert_eq!(gfree(&["sweep", "--config", &cfg, "--out", s(&out)]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "k_pilot = \"four\"");
    assert_eq!(gfree(&["sweep", "--config", &cfg, "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn bad_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_gfree"))
        .args(["run", "--config", &cfg, "--out", s(&dir.path().join("r.csv"))])
        .env("GFREE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run_csv = dir.path().join("run.csv");
    let o = gfree(&["run", "--config", &cfg, "--out", s(&run_csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&run_csv).unwrap();
    // Header plus one trial per power per receiver.
    assert_eq!(text.lines().count(), 1 + 2 * 6);
    assert!(text.starts_with("scenario_id,seed,tx_power_dbm,receiver,ber,nmse,md,fa,throughput_bits,iterations_run\n"));

    let sweep_csv = dir.path().join("sweep.csv");
    assert_eq!(gfree(&["sweep", "--config", &cfg, "--out", s(&sweep_csv)]).status.code(), Some(0));
    let first = std::fs::read(&sweep_csv).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 1 + 2 * 3 * 6);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["frame_hash"].as_str().unwrap().len(), 64);
    assert_eq!(meta["scenario"]["scenario_id"], "tiny");

    // Rerunning resumes everything and leaves the bytes unchanged.
    let o = gfree(&["sweep", "--config", &cfg, "--out", s(&sweep_csv)]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 trials run, 6 resumed"));
    assert_eq!(std::fs::read(&sweep_csv).unwrap(), first);

    let o = gfree(&["report", "--in", s(&sweep_csv)]);
    assert_eq!(o.status.code(), Some(0));
    let summary = String::from_utf8(o.stdout).unwrap();
    // One row per (power, receiver).
    assert_eq!(summary.lines().count(), 1 + 2 * 6);
    assert!(summary.lines().next().unwrap().starts_with("scenario_id,tx_power_dbm,receiver,trials,failures,ber_mean"));
    let o = gfree(&["report", "--in", s(&sweep_csv), "--format", "table"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("bigabp"));
}

#[test]
fn interrupted_sweep_resumes_to_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let full = dir.path().join("full.csv");
    assert_eq!(gfree(&["sweep", "--config", &cfg, "--out", s(&full)]).status.code(), Some(0));
    let full_bytes = std::fs::read_to_string(&full).unwrap();

    // Keep the header, two complete trials and half of a third.
    let partial = dir.path().join("partial.csv");
    let kept: Vec<&str> = full_bytes.lines().take(1 + 6 * 2 + 3).collect();
    std::fs::write(&partial, kept.join("\n") + "\n").unwrap();
    let o = gfree(&["sweep", "--config", &cfg, "--out", s(&partial)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("4 trials run, 2 resumed"));
    assert_eq!(std::fs::read_to_string(&partial).unwrap(), full_bytes);
}

#[test]
fn design_pilots_writes_frame_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.gfrm");
    let o = gfree(&["design-pilots", "--j", "4", "--l", "8", "--seed", "3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let frame = gfree_sim::frame_io::load_frame(&out).unwrap();
    assert_eq!((frame.rows(), frame.cols()), (4, 8));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.gfrm.json")).unwrap()).unwrap();
    assert_eq!(side["j"], 4);
    assert_eq!(side["l"], 8);
    let mu = side["coherence"].as_f64().unwrap();
    assert!(mu >= side["welch_bound"].as_f64().unwrap() && mu < 1.0);
    assert!(side["alpha"].as_f64().unwrap() <= side["beta"].as_f64().unwrap());

    // The frame can be fed back through a config.
    let cfg = write_config(dir.path(), &format!("{TINY}pilot_file = \"p.gfrm\"\n"));
    let o = gfree(&["run", "--config", &cfg, "--out", s(&dir.path().join("r.csv"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = std::fs::read_to_string(dir.path().join("r.csv.meta.json")).unwrap();
    assert!(meta.contains(&gfree_sim::frame_io::frame_hash(&frame)));

    // Degenerate sizes are usage errors.
    assert_eq!(gfree(&["design-pilots", "--j", "4", "--l", "40", "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn mismatched_pilot_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.gfrm");
    assert_eq!(gfree(&["design-pilots", "--j", "3", "--l", "8", "--out", s(&out)]).status.code(), Some(0));
    let cfg = write_config(dir.path(), &format!("{TINY}pilot_file = \"p.gfrm\"\n"));
    assert_eq!(gfree(&["run", "--config", &cfg, "--out", s(&dir.path().join("r.csv"))]).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3_and_keeps_rows() {
    use gfree_core::frame_design::FrameMatrix;
    use gfree_core::{CMatrix, Complex64};
    let dir = tempfile::tempdir().unwrap();
    // Identical columns: the pilot block has rank one and MNS cannot invert it.
    let f = FrameMatrix::normalized(CMatrix::from_element(4, 8, Complex64::new(1.0, 0.0))).unwrap();
    gfree_sim::frame_io::save_frame(&dir.path().join("bad.gfrm"), &f).unwrap();
    let text = TINY
        .replace(
            r#"receivers = ["bigabp", "zf_mmvamp", "gabp_mmvamp", "genie_gabp", "mns", "mmse_genie"]"#,
            r#"receivers = ["mns", "mmse_genie"]"#,
        )
        .replace("[-10.0, 0.0]", "[0.0]");
    let cfg = write_config(dir.path(), &format!("{text}pilot_file = \"bad.gfrm\"\n"));
    let out = dir.path().join("r.csv");
    let o = gfree(&["sweep", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = gfree_sim::table::read_rows(&out).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().filter(|r| r.receiver == "mns").all(|r| r.failed()));
    assert!(rows.iter().filter(|r| r.receiver == "mmse_genie").all(|r| !r.failed()));
}
