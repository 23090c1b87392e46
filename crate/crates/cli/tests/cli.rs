use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "n = 8\nepochs = 1\ninstances_per_epoch = 16\nbatch_size = 8\neval_instances = 4\n\
                    d_model = 16\nheads = 2\nff_hidden = 32\nencoder_layers = 1\ndecoders = 2\nlr = 1e-3\n";

fn mstsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mstsp")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn square(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("square.txt");
    std::fs::write(&path, "1 0 0\n2 1 0\n3 1 1\n4 0 1\n").unwrap();
    path
}

fn instance(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let inst = mstsp::instances::generate_uniform::<f64>(n, seed).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, inst.to_listing()).unwrap();
    path
}

fn trained(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.join("run");
    let o = mstsp(&["train", s(&cfg), "--out", s(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("checkpoint.json")
}

#[test]
fn train_writes_reloadable_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let (policy, meta) = mstsp::harness::load_checkpoint::<f64>(&ckpt).unwrap();
    assert_eq!(meta.n, 8);
    assert_eq!(policy.hyper.decoders, 2);
    let log = std::fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,tau,mean_train_len,mean_eval_len,wallclock_s\n"));
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn bad_configs_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text, needle) in [
        ("zero.cfg", "epochs = 0\n", "epochs"),
        ("unknown.cfg", "epochs = 1\nlearning_rate = 2\n", "learning_rate"),
    ] {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, text).unwrap();
        let o = mstsp(&["train", s(&cfg), "--out", s(&dir.path().join("x"))]);
        assert_eq!(o.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&o.stderr).contains(needle));
    }
}

#[test]
fn diverging_training_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hot.cfg");
    std::fs::write(&cfg, TINY.replace("lr = 1e-3", "lr = 1e300")).unwrap();
    let o = mstsp(&["train", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn solve_greedy_and_aas() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let inst = instance(dir.path(), "u.txt", 10, 4);
    let greedy = dir.path().join("greedy");
    let o = mstsp(&["solve", s(&ckpt), s(&inst), "--out", s(&greedy)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sols = std::fs::read_to_string(greedy.join("solutions.txt")).unwrap();
    assert!(sols.lines().count() >= 1);
    let metrics: mstsp::metrics::MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(greedy.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.size, sols.lines().count());

    let aas = dir.path().join("aas");
    let o = mstsp(&[
        "solve", s(&ckpt), s(&inst), "--mode", "aas", "--tmax", "1", "--seed", "3", "--out", s(&aas),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(aas.join("aas_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let inst = instance(dir.path(), "u.txt", 9, 8);
    let mut seen = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = mstsp(&[
            "--threads", threads, "solve", s(&ckpt), s(&inst), "--mode", "aas", "--tmax", "3", "--aas-lr", "1e-3",
            "--out", s(&out),
        ]);
        assert!(o.status.success());
        seen.push(
            ["solutions.txt", "metrics.json", "aas_trace.csv"]
                .map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn oracle_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let sq = square(dir.path());
    let gt = dir.path().join("square.gt");
    let o = mstsp(&["oracle", s(&sq), "--out", s(&gt)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&gt).unwrap(), "optimal 4\n0 1 2 3\n");

    let big = instance(dir.path(), "big.txt", 13, 1);
    let o = mstsp(&["oracle", s(&big), "--out", s(&dir.path().join("big.gt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("capped"));

    let ckpt = trained(dir.path());
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = mstsp(&["evaluate", s(&ckpt), s(&empty), "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));

    let insts = dir.path().join("insts");
    let gts = dir.path().join("gts");
    std::fs::create_dir(&insts).unwrap();
    for (i, n) in [7usize, 8].iter().enumerate() {
        let p = instance(&insts, &format!("i{i}.txt"), *n, 20 + i as u64);
        let o = mstsp(&["oracle", s(&p), "--out", s(&gts.join(format!("i{i}.gt")))]);
        assert!(o.status.success());
    }
    let out = dir.path().join("eval");
    let o = mstsp(&["evaluate", s(&ckpt), s(&insts), "--ground-truth", s(&gts), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("i0,") && rows[2].starts_with("i1,") && rows[3].starts_with("mean,"));
    assert!(out.join("solutions/i0.txt").is_file());

    std::fs::remove_file(gts.join("i1.gt")).unwrap();
    let o = mstsp(&["evaluate", s(&ckpt), s(&insts), "--ground-truth", s(&gts), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}
