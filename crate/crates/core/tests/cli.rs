use std::path::Path;
use std::process::{Command, Output};

fn csdecode(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csdecode"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_of(args: &[&str], dir: &Path) -> String {
    let out = csdecode(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn capacity_and_param_count() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stdout_of(&["capacity", "--rds", "5"], dir.path()), "0.7925\n");
    assert_eq!(
        stdout_of(&["param-count", "--arch", "mlp:32,16,8", "--frames", "1"], dir.path()),
        "924\n"
    );
    assert_eq!(
        stdout_of(&["param-count", "--arch", "cnn:16,32,12", "--frames", "5"], dir.path()),
        "9536\n"
    );
}

#[test]
fn rate_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout_of(&["rate-table", "--rds", "5", "--max-k", "20"], dir.path());
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[18], ["19", "24", "0.7917", "99.89"]);
    assert_eq!(rows[0], ["1", "2", "0.5000", "63.09"]);
}

#[test]
fn count_sequences_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout_of(&["count-sequences", "--length", "2"], dir.path());
    assert_eq!(text.lines().next(), Some("count 4"));
}

#[test]
fn bad_invocations_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = csdecode(&["capacity", "--bogus"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = csdecode(&["eval", "--decoder", "neural=missing.json", "--snr", "3"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = csdecode(&["eval", "--decoder", "viterbi", "--snr", "3"], dir.path());
    assert!(!out.status.success());

    let out = csdecode(&["eval", "--decoder", "ml", "--snr", "3", "--snr-convention", "snr"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn help_documents_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "capacity",
        "rate-table",
        "count-sequences",
        "shuffle-codebook",
        "train",
        "eval",
        "sweep",
        "compare",
        "gradcheck",
        "param-count",
    ] {
        let text = stdout_of(&[sub, "--help"], dir.path());
        assert!(text.contains("--seed"), "{sub}");
        assert!(text.contains("[default: ebn0]"), "{sub}");
    }
    let train = stdout_of(&["train", "--help"], dir.path());
    for default in ["[default: 1]", "[default: 20000]", "[default: 16]", "[default: 0.001]"] {
        assert!(train.contains(default), "{default}");
    }
}

#[test]
fn train_then_evaluate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    stdout_of(
        &[
            "train", "--arch", "cnn:8,12,8", "--snr", "5", "--epochs", "200", "--convergence-window", "0",
            "--out", "cnn.json", "--loss-log", "loss.csv",
        ],
        p,
    );
    let losses = std::fs::read_to_string(p.join("loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 201);

    let csv = stdout_of(
        &[
            "sweep", "--decoders", "ml,neural=cnn.json", "--snr-start", "2", "--snr-stop", "4", "--max-frames",
            "20000",
        ],
        p,
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "decoder,snr_db,frames,bits,bit_errors,ber,stderr");
    assert_eq!(lines.len(), 7);
    assert!(lines[2].starts_with("cnn:8,12,8,2,"));

    let cmp = stdout_of(
        &["compare", "--decoders", "lookup", "--snr-start", "0", "--snr-stop", "6", "--target-ber", "1e-2"],
        p,
    );
    assert!(cmp.lines().nth(1).unwrap().starts_with("lookup "));
}

#[test]
fn manifest_records_flags_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    stdout_of(
        &["shuffle-codebook", "--frames", "2", "--seed", "9", "--out", "cb.json", "--manifest", "run.json"],
        dir.path(),
    );
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "shuffle-codebook");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["outputs"][0], "cb.json");
    assert_eq!(m["flags"]["command"]["shuffle-codebook"]["frames"], 2);

    // The shuffled codebook loads back and drives an evaluation.
    let out = stdout_of(
        &["eval", "--decoder", "lookup", "--snr", "4", "--codebook", "cb.json", "--max-frames", "1000"],
        dir.path(),
    );
    assert!(out.lines().nth(1).unwrap().starts_with("lookup,4,"));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout_of(&["gradcheck", "--arch", "mlp:32,16,8", "--pairs", "3"], dir.path());
    assert!(out.contains("params 924"));
}
