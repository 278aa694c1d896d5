use std::path::Path;
use std::process::Command;

fn whsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_whsim")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(whsim(&["--help"]).status.code(), Some(0));
    assert_eq!(whsim(&["--version"]).status.code(), Some(0));
    assert_eq!(whsim(&["sweep", "--arch", "whB"]).status.code(), Some(1));
    assert_eq!(whsim(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn sweep_writes_sorted_csv_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let args = |out: &Path, threads: &str| {
        let out = p(out).to_string();
        [
            "sweep", "--arch", "whD", "--mod-order", "4", "--block-len", "150", "--snr-db", "0:4:12", "--trials", "3",
            "--estimator", "em", "--seed", "11", "--threads", threads, "--out",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([out])
        .collect::<Vec<_>>()
    };
    let run = |v: Vec<String>| whsim(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(run(args(&a, "1")).status.success());
    assert!(run(args(&b, "4")).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "arch,estimator,M,T,snr_db,ser,symbol_errors,symbols_total,trials,mean_em_iters,seed");
    assert_eq!(lines.len(), 5);
    let snrs: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(snrs, vec![0.0, 4.0, 8.0, 12.0]);
    assert!(lines[1].starts_with("whD,em,4,150,"));
}

#[test]
fn sweep_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let base = ["sweep", "--arch", "whA", "--mod-order", "16", "--block-len", "10", "--trials", "1", "--out", p(&out)];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        whsim(&v).status.code()
    };
    assert_eq!(with(&["--snr-db", "10", "--estimator", "oracle"]), Some(2));
    assert_eq!(with(&["--snr-db", "10:0:20", "--estimator", "known"]), Some(2));
    let bad_order = ["sweep", "--arch", "whA", "--mod-order", "8", "--block-len", "10", "--trials", "1", "--snr-db", "5", "--estimator", "known", "--out", p(&out)];
    assert_eq!(whsim(&bad_order).status.code(), Some(2));
    let scenario = dir.path().join("bad.txt");
    std::fs::write(&scenario, "r13 = 1.5\n").unwrap();
    assert_eq!(with(&["--snr-db", "10", "--estimator", "known", "--scenario", p(&scenario)]), Some(2));
}

#[test]
fn synth_then_decode_recovers_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let (iq, truth, json) = (dir.path().join("iq.csv"), dir.path().join("truth.csv"), dir.path().join("out.json"));
    let s = whsim(&[
        "synth", "--arch", "whB", "--mod-order", "16", "--block-len", "2000", "--snr-db", "25", "--seed", "4", "--out", p(&iq),
        "--truth", p(&truth),
    ]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let d = whsim(&["decode", "--input", p(&iq), "--channels", "1x1", "--mod-order", "16", "--out", p(&json)]);
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let decoded: Vec<u64> = report["symbols"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let truth: Vec<u64> = std::fs::read_to_string(&truth)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(decoded.len(), 2000);
    let errors = decoded.iter().zip(&truth).filter(|(a, b)| a != b).count();
    assert!(errors <= 2, "{errors} errors");
    assert_eq!(report["n_s"], 1);
    assert_eq!(report["n_n"], 1);
    assert!(report["converged"].as_bool().unwrap());
}

#[test]
fn decode_reports_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let iq = dir.path().join("iq.csv");
    let json = dir.path().join("out.json");
    std::fs::write(&iq, "t,ch0_re,ch0_im\n0,1.0,abc\n").unwrap();
    let d = whsim(&["decode", "--input", p(&iq), "--channels", "1x0", "--mod-order", "4", "--out", p(&json)]);
    assert_eq!(d.status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    let d = whsim(&["decode", "--input", p(&missing), "--channels", "1x0", "--mod-order", "4", "--out", p(&json)]);
    assert_eq!(d.status.code(), Some(2));
    std::fs::write(&iq, "t,ch0_re,ch0_im\n0,0,0\n1,0,0\n2,0,0\n").unwrap();
    let d = whsim(&["decode", "--input", p(&iq), "--channels", "1x0", "--mod-order", "4", "--out", p(&json)]);
    assert_eq!(d.status.code(), Some(3));
}
