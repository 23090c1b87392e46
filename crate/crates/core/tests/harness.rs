use std::path::Path;

use mstsp::aas::AasConfig;
use mstsp::harness::io::load_solutions;
use mstsp::harness::{cmd_evaluate, cmd_oracle, cmd_solve, cmd_train, solve_instance, SolveMode, SolveOptions};
use mstsp::instances::{generate_uniform, load_instance, DistanceConvention};
use mstsp::metrics::{filter_solutions, MetricsReport};
use mstsp::oracle::load_ground_truth;
use mstsp::policy::{Policy, PolicyHyper};

const TINY: &str = "n = 8\nepochs = 2\ninstances_per_epoch = 16\nbatch_size = 8\neval_instances = 4\n\
                    d_model = 16\nheads = 2\nff_hidden = 32\nencoder_layers = 1\ndecoders = 3\nlr = 1e-3\n";

fn small_policy(seed: u64) -> Policy<f64> {
    let hyper = PolicyHyper {
        d_model: 16,
        heads: 2,
        ff_hidden: 32,
        encoder_layers: 1,
        decoders: 3,
    };
    Policy::init(hyper, seed).unwrap()
}

fn train_into(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    cmd_train(&cfg, None, &dir.join("run"), |_| {}).unwrap();
    dir.join("run/checkpoint.json")
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = std::fs::read(train_into(a.path())).unwrap();
    let cb = std::fs::read(train_into(b.path())).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn aas_never_loses_to_greedy() {
    let policy = small_policy(2);
    let mut wins = 0;
    for k in 0..20u64 {
        let inst = generate_uniform::<f64>(10, 300 + k).unwrap();
        let greedy = solve_instance(&inst, &policy, &SolveOptions::default()).unwrap().0;
        let opts = SolveOptions {
            mode: SolveMode::Aas,
            seed: k,
            aas: AasConfig {
                t_max: 4,
                lr: 1e-3,
                ..AasConfig::default()
            },
            ..SolveOptions::default()
        };
        let searched = solve_instance(&inst, &policy, &opts).unwrap().0;
        if searched.best().length() <= greedy.best().length() {
            wins += 1;
        }
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn emitted_reports_are_rederivable() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_into(dir.path());
    let insts = dir.path().join("insts");
    let gts = dir.path().join("gts");
    std::fs::create_dir(&insts).unwrap();
    for i in 0..3u64 {
        let inst = generate_uniform::<f64>(7 + i as usize, 40 + i).unwrap();
        let p = insts.join(format!("c{i}.txt"));
        std::fs::write(&p, inst.to_listing()).unwrap();
        cmd_oracle(&p, None, DistanceConvention::Real, &gts.join(format!("c{i}.gt"))).unwrap();
    }
    let opts = SolveOptions::default();
    let out = dir.path().join("eval");
    let report = cmd_evaluate(&ckpt, &insts, Some(&gts), &opts, &out).unwrap();

    let n = report.rows.len() as f64;
    let mean = |f: &dyn Fn(&mstsp::harness::RunRow) -> f64| report.rows.iter().map(f).sum::<f64>() / n;
    assert!((report.mean.msqi - mean(&|r| r.msqi)).abs() < 1e-9);
    assert!((report.mean.best_length - mean(&|r| r.best_length)).abs() < 1e-9);
    assert!((report.mean.di.unwrap() - mean(&|r| r.di.unwrap())).abs() < 1e-9);

    for row in &report.rows {
        let inst = load_instance::<f64>(insts.join(format!("{}.txt", row.instance))).unwrap();
        let tours = load_solutions(out.join(format!("solutions/{}.txt", row.instance)), &inst).unwrap();
        let (_, gt) = load_ground_truth(gts.join(format!("{}.gt", row.instance)), &inst).unwrap();
        let set = filter_solutions(tours, opts.delta1, opts.delta2).unwrap();
        let again = MetricsReport::compute(&set, Some(&gt)).unwrap();
        assert_eq!(again.msqi, row.msqi);
        assert_eq!(again.di, row.di);
        assert_eq!(again.best_length, row.best_length);
    }

    let single = insts.join("c0.txt");
    let solve_dir = dir.path().join("solve");
    let emitted = cmd_solve(&ckpt, &single, &opts, &solve_dir).unwrap();
    let inst = load_instance::<f64>(&single).unwrap();
    let tours = load_solutions(solve_dir.join("solutions.txt"), &inst).unwrap();
    let again = MetricsReport::compute(&filter_solutions(tours, opts.delta1, opts.delta2).unwrap(), None).unwrap();
    assert_eq!(again, emitted);
    assert_eq!(std::fs::read_to_string(solve_dir.join("metrics.json")).unwrap(), again.to_json());
}

#[test]
fn oracle_optima_as_found_set_give_full_diversity_index() {
    let inst = generate_uniform::<f64>(8, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("i.txt");
    std::fs::write(&p, inst.to_listing()).unwrap();
    let gt = cmd_oracle(&p, None, DistanceConvention::Real, &dir.path().join("i.gt")).unwrap();
    let set = filter_solutions(gt.optima.clone(), 0.1, 1.0).unwrap();
    let report = MetricsReport::compute(&set, Some(&gt.optima)).unwrap();
    assert_eq!(report.di, Some(1.0));
}
