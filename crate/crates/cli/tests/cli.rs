use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hacood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hacood"))
        .args(args)
        .output()
        .expect("failed to spawn hacood")
}

fn ok(args: &[&str]) -> String {
    let out = hacood(args);
    assert!(
        out.status.success(),
        "hacood {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key}= in\n{report}"))
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&["synth", "--scenario", "multi-lobe", "--classes", "2", "--n", "200", "--seed", "1",
            "--output", &f.s("train.npy"), "--labels", &f.s("train_labels.npy")]);
        ok(&["synth", "--scenario", "multi-lobe", "--classes", "2", "--n", "60", "--seed", "2",
            "--output", &f.s("test.csv"), "--labels", &f.s("test_labels.csv")]);
        ok(&["synth", "--scenario", "multi-lobe", "--classes", "2", "--n", "100", "--seed", "3",
            "--output", &f.s("id.npy")]);
        ok(&["synth", "--scenario", "shell", "--n", "150", "--inner", "16", "--outer", "22", "--seed", "4",
            "--output", &f.s("ood.npy")]);
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.p(name).to_str().unwrap().to_string()
    }

    fn build(&self, model: &str, extra: &[&str]) -> Output {
        let (m, tr, tl, te, tel) = (self.s(model), self.s("train.npy"), self.s("train_labels.npy"),
            self.s("test.csv"), self.s("test_labels.csv"));
        let mut args = vec!["build", "--train", &tr, "--train-labels", &tl, "--test", &te,
            "--test-labels", &tel, "--model", &m, "--seed", "5"];
        args.extend_from_slice(extra);
        hacood(&args)
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn full_pipeline() {
    let f = Fixture::new();
    let out = f.build("m.hck", &["--k", "adaptive"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&report, "classes"), "2");
    assert_eq!(value(&report, "calibration_count"), "520");
    let tpr: f64 = value(&report, "calibration_tpr").parse().unwrap();
    assert!((0.95..=0.95 + 1.0 / 520.0).contains(&tpr), "{tpr}");

    let scored = ok(&["score", "--model", &f.s("m.hck"), "--input", &f.s("id.npy"), "--output", &f.s("s.csv")]);
    assert_eq!(value(&scored, "count"), "200");
    let text = std::fs::read_to_string(f.p("s.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("index,score,decision"));
    assert_eq!(text.lines().count(), 201);

    let eval = ok(&["eval", "--model", &f.s("m.hck"), "--id", &f.s("id.npy"), "--ood", &f.s("ood.npy"),
        "--id-scores", &f.s("id_scores.csv"), "--ood-scores", &f.s("ood_scores.csv"),
        "--report-csv", &f.s("eval.csv")]);
    let fpr: f64 = value(&eval, "fpr_at_tpr").parse().unwrap();
    let auroc: f64 = value(&eval, "auroc").parse().unwrap();
    assert!(fpr <= 0.05, "{eval}");
    assert!(auroc >= 0.99, "{eval}");
    assert_eq!(std::fs::read_to_string(f.p("ood_scores.csv")).unwrap().lines().count(), 151);
    assert_eq!(std::fs::read_to_string(f.p("eval.csv")).unwrap().lines().count(), 2);

    let ak = ok(&["adaptive-k", "--train", &f.s("train.npy"), "--train-labels", &f.s("train_labels.npy"),
        "--output", &f.s("ak.csv")]);
    assert!(value(&ak, "class.1").contains("k:"));
    let csv = std::fs::read_to_string(f.p("ak.csv")).unwrap();
    assert!(csv.starts_with("label,n,d,k_upper,zeta,density_ratio,k_final"));

    let sw = ok(&["sweep", "--train", &f.s("train.npy"), "--train-labels", &f.s("train_labels.npy"),
        "--id", &f.s("id.npy"), "--ood", &f.s("ood.npy"), "--adaptive", "--output", &f.s("sweep.csv")]);
    assert_eq!(value(&sw, "rows"), "7"); // 1, 2, 4, 8, 16, 32 and adaptive
    let csv = std::fs::read_to_string(f.p("sweep.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("adaptive,"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let f = Fixture::new();
    for (model, threads) in [("a.hck", "1"), ("b.hck", "3"), ("c.hck", "1")] {
        let out = f.build(model, &["--threads", threads, "--k", "7", "--axis-mode", "random"]);
        assert!(out.status.success());
    }
    let a = read(&f.p("a.hck"));
    assert_eq!(a, read(&f.p("b.hck")));
    assert_eq!(a, read(&f.p("c.hck")));

    for (out, threads) in [("s1.csv", "1"), ("s4.csv", "4")] {
        ok(&["--threads", threads, "score", "--model", &f.s("a.hck"), "--input", &f.s("ood.npy"),
            "--output", &f.s(out)]);
    }
    assert_eq!(read(&f.p("s1.csv")), read(&f.p("s4.csv")));

    for (out, threads) in [("w1.csv", "1"), ("w2.csv", "2")] {
        ok(&["sweep", "--threads", threads, "--train", &f.s("train.npy"), "--train-labels",
            &f.s("train_labels.npy"), "--id", &f.s("id.npy"), "--ood", &f.s("ood.npy"),
            "--k-list", "2,5", "--adaptive", "--output", &f.s(out)]);
    }
    assert_eq!(read(&f.p("w1.csv")), read(&f.p("w2.csv")));
}

#[test]
fn k_zero_is_a_usage_error() {
    let f = Fixture::new();
    let out = f.build("m.hck", &["--k", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--k"));
    assert!(!f.p("m.hck").exists());
}

#[test]
fn input_errors_exit_two() {
    let f = Fixture::new();
    ok(&["build", "--train", &f.s("train.npy"), "--train-labels", &f.s("train_labels.npy"),
        "--model", &f.s("m.hck"), "--k", "4"]);

    let missing_ood = hacood(&["eval", "--model", &f.s("m.hck"), "--id", &f.s("id.npy"),
        "--ood", &f.s("absent.npy")]);
    assert_eq!(missing_ood.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_ood.stderr).contains("absent.npy"));

    let no_ood_flag = hacood(&["eval", "--model", &f.s("m.hck"), "--id", &f.s("id.npy")]);
    assert_eq!(no_ood_flag.status.code(), Some(2));

    std::fs::write(f.p("junk.npy"), b"not an npy file at all").unwrap();
    let junk = hacood(&["score", "--model", &f.s("m.hck"), "--input", &f.s("junk.npy"),
        "--output", &f.s("s.csv")]);
    assert_eq!(junk.status.code(), Some(2));

    let bad_model = hacood(&["score", "--model", &f.s("id.npy"), "--input", &f.s("id.npy"),
        "--output", &f.s("s.csv")]);
    assert_eq!(bad_model.status.code(), Some(2));

    let bad_tpr = f.build("m2.hck", &["--k", "4", "--tpr", "1.5"]);
    assert_eq!(bad_tpr.status.code(), Some(2));

    let k_too_large = f.build("m3.hck", &["--k", "500"]);
    assert_eq!(k_too_large.status.code(), Some(2));

    let empty_k = hacood(&["sweep", "--train", &f.s("train.npy"), "--train-labels", &f.s("train_labels.npy"),
        "--id", &f.s("id.npy"), "--ood", &f.s("ood.npy"), "--k-list", "", "--output", &f.s("w.csv")]);
    assert_eq!(empty_k.status.code(), Some(2));

    let unlabeled = hacood(&["synth", "--scenario", "shell", "--n", "5", "--output", &f.s("x.npy"),
        "--labels", &f.s("xl.npy")]);
    assert_eq!(unlabeled.status.code(), Some(2));
    assert!(!f.p("x.npy").exists());

    assert_eq!(hacood(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_internal_error() {
    let f = Fixture::new();
    let out = f.build("no/such/dir/m.hck", &["--k", "4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dimension_mismatch_at_score_time() {
    let f = Fixture::new();
    ok(&["build", "--train", &f.s("train.npy"), "--train-labels", &f.s("train_labels.npy"),
        "--model", &f.s("m.hck"), "--k", "4"]);
    ok(&["synth", "--scenario", "uniform", "--n", "10", "--dim", "3", "--output", &f.s("u3.csv")]);
    let out = hacood(&["score", "--model", &f.s("m.hck"), "--input", &f.s("u3.csv"), "--output", &f.s("s.csv")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}
