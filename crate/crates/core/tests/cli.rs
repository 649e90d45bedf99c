use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
[frame]
M = 64
N = 16
cyclic_prefix = 16

[sweep]
snr_db = [0.0]
target_counts = [1]
trials = 2
steps = 3
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isac-sim"))
}

fn config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn run_writes_identical_outputs_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let st = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "9"])
            .output()
            .unwrap();
        assert!(st.status.success());
        outs.push(std::fs::read(out.join("trials.csv")).unwrap());
        assert!(out.join("summary.csv").exists());
        assert!(out.join("rmse_nt1.gp").exists());
    }
    assert_eq!(outs[0], outs[1]);
    let text = String::from_utf8(outs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 5 * 2);
}

#[test]
fn sweep_snr_overrides_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep-snr", "--config"])
        .arg(config(dir.path()))
        .args([
            "--snr",
            "-5,5",
            "--targets",
            "1",
            "--schemes",
            "Act_Sen_Opt,KF_Act_Sen_Opt",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("Act_Sen_Opt,-5.00000000e0,1,2,"));
}

#[test]
fn unknown_scheme_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep-snr", "--config"])
        .arg(config(dir.path()))
        .args(["--schemes", "Act_Sen_Bogus"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scheme"));
}

#[test]
fn placement_eval_lists_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = bin()
        .args(["placement-eval", "--config"])
        .arg(&cfg)
        .args(["--step", "100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x_j,y_k,trace,max_eigen,area");
    // Offsets -200, -100, 100, 200 on each axis.
    assert_eq!(lines.count(), 16);

    let out = bin()
        .args(["placement-eval", "--pairs", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
    // The two receivers on opposite sides of the anchor are collinear with it.
    assert!(text.lines().any(|l| l.starts_with("1,3,") && l.contains("inf")));
}

#[test]
fn track_demo_prints_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["track-demo", "--config"])
        .arg(config(dir.path()))
        .args(["--steps", "4", "--targets", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 4 * 2);
    assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 15));
}
