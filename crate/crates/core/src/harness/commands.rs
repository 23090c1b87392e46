//! Drivers behind the command-line subcommands. Each one owns its output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use super::config::load_train_config;
use super::io::{ensure_dir, solution_text, write_file};
use super::report::{AffineReport, AffineRow, RunReport, RunRow};
use crate::aas::{aas, AasConfig};
use crate::error::{Error, Result};
use crate::instances::{apply_affine, generate_uniform, load_instance, AffineKind, AffineSpec, DistanceConvention, Instance, Tour};
use crate::metrics::{dedup_sorted, filter_solutions, MetricsReport, SolutionSet, DEFAULT_DELTA1, DEFAULT_DELTA2};
use crate::oracle::{enumerate_optima, load_ground_truth, GroundTruth};
use crate::policy::{greedy_pass, greedy_tours, Policy, SolveConfig};
use crate::training::{derive_seed, train, EpochRecord, TrainingLog};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SOLUTIONS_FILE: &str = "solutions.txt";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRACE_FILE: &str = "aas_trace.csv";
pub const GROUND_TRUTH_EXT: &str = "gt";

const STREAM_AFFINE_INSTANCE: u64 = 21;
const STREAM_AFFINE_TRANSFORM: u64 = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Greedy,
    Aas,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: SolveMode,
    pub delta1: f64,
    pub delta2: f64,
    pub convention: DistanceConvention,
    /// Used in aas mode; its `seed`, `delta1` and `delta2` are overridden by this struct.
    pub aas: AasConfig,
    pub seed: u64,
    pub mirror: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mode: SolveMode::Greedy,
            delta1: DEFAULT_DELTA1,
            delta2: DEFAULT_DELTA2,
            convention: DistanceConvention::Real,
            aas: AasConfig::default(),
            seed: 0,
            mirror: true,
        }
    }
}

impl SolveOptions {
    fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            delta1: self.delta1,
            delta2: self.delta2,
            mirror: self.mirror,
            ..SolveConfig::default()
        }
    }

    fn aas_config(&self) -> AasConfig {
        AasConfig {
            seed: self.seed,
            delta1: self.delta1,
            delta2: self.delta2,
            ..self.aas
        }
    }
}

/// Trains from a config file and writes the checkpoint and per-epoch log into `out`.
/// `seed` overrides the config's seed.
pub fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    progress: impl FnMut(&EpochRecord),
) -> Result<(Policy<f64>, TrainingLog)> {
    let mut cfg = load_train_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    ensure_dir(out)?;
    let (policy, log) = train::<f64>(&cfg, progress)?;
    let meta = CheckpointMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        n: cfg.n,
    };
    save_checkpoint(out.join(CHECKPOINT_FILE), &policy, &meta)?;
    write_file(out.join(TRAIN_LOG_FILE), &log.to_csv())?;
    Ok((policy, log))
}

fn load_with(path: &Path, convention: DistanceConvention) -> Result<Instance<f64>> {
    Ok(load_instance::<f64>(path)?.reconvene(convention))
}

/// Solves one instance in memory. In aas mode the pre-search greedy tours join the
/// searched pool before filtering, so the search can only add candidates.
pub fn solve_instance(
    inst: &Instance<f64>,
    policy: &Policy<f64>,
    opts: &SolveOptions,
) -> Result<(SolutionSet<f64>, Option<crate::aas::AasTrace>)> {
    let greedy = greedy_tours(inst, policy, &opts.solve_config())?;
    match opts.mode {
        SolveMode::Greedy => Ok((filter_solutions(greedy, opts.delta1, opts.delta2)?, None)),
        SolveMode::Aas => {
            let (set, trace) = aas(inst, policy, &opts.aas_config())?;
            let mut pool = set.into_tours();
            pool.extend(greedy);
            let set = filter_solutions(dedup_sorted(pool), opts.delta1, opts.delta2)?;
            Ok((set, Some(trace)))
        }
    }
}

/// Solves one instance file and writes the solution set, metrics and, in aas mode, the trace.
pub fn cmd_solve(checkpoint: &Path, instance: &Path, opts: &SolveOptions, out: &Path) -> Result<MetricsReport> {
    let (policy, _) = load_checkpoint::<f64>(checkpoint)?;
    let inst = load_with(instance, opts.convention)?;
    ensure_dir(out)?;
    let (set, trace) = solve_instance(&inst, &policy, opts)?;
    let report = MetricsReport::compute(&set, None)?;
    write_file(out.join(SOLUTIONS_FILE), &solution_text(set.tours()))?;
    write_file(out.join(METRICS_FILE), &report.to_json())?;
    if let Some(trace) = trace {
        write_file(out.join(TRACE_FILE), &trace.to_csv())?;
    }
    Ok(report)
}

struct AffineOutcome {
    gap: [f64; 2],
    identical: [bool; 2],
}

/// Plain and mirror-augmented greedy sets, built from one plain and one swapped pass.
fn affine_sets(inst: &Instance<f64>, policy: &Policy<f64>) -> Result<[Vec<Tour<f64>>; 2]> {
    let plain = greedy_pass(inst, policy, SolveConfig::default().tau, false)?;
    let mut both = plain.clone();
    both.extend(greedy_pass(inst, policy, SolveConfig::default().tau, true)?);
    Ok([dedup_sorted(plain), dedup_sorted(both)])
}

fn affine_pair(
    policy: &Policy<f64>,
    inst: &Instance<f64>,
    base: &[Vec<Tour<f64>>; 2],
    kind: AffineKind,
    transform_seed: u64,
) -> Result<AffineOutcome> {
    let spec = AffineSpec::random(kind);
    let moved = apply_affine(inst, &spec, transform_seed)?;
    let divisor = match kind {
        AffineKind::Scaling | AffineKind::Mixture => spec.effective_scale(),
        _ => 1.0,
    };
    let moved_sets = affine_sets(&moved, policy)?;
    let mut gap = [0.0; 2];
    let mut identical = [false; 2];
    for k in 0..2 {
        let (a, b) = (&base[k], &moved_sets[k]);
        let base_len = a[0].length();
        gap[k] = 100.0 * (b[0].length() / divisor - base_len) / base_len;
        let mut oa: Vec<Vec<usize>> = a.iter().map(|t| t.order().to_vec()).collect();
        let mut ob: Vec<Vec<usize>> = b.iter().map(|t| t.order().to_vec()).collect();
        oa.sort();
        ob.sort();
        identical[k] = oa == ob;
    }
    Ok(AffineOutcome { gap, identical })
}

/// Greedy best-length gap between original and transformed uniform instances, per transform kind.
pub fn affine_test(policy: &Policy<f64>, instances: usize, n: usize, seed: u64) -> Result<AffineReport> {
    if instances == 0 {
        return Err(Error::InvalidArgument("need at least one instance".into()));
    }
    let insts = (0..instances)
        .map(|i| generate_uniform::<f64>(n, derive_seed(seed, STREAM_AFFINE_INSTANCE, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let bases = insts
        .par_iter()
        .map(|inst| affine_sets(inst, policy))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for kind in AffineKind::ALL {
        let outcomes = insts
            .par_iter()
            .zip(&bases)
            .enumerate()
            .map(|(i, (inst, base))| {
                affine_pair(policy, inst, base, kind, derive_seed(seed, STREAM_AFFINE_TRANSFORM, i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let m = instances as f64;
        let mean = |f: &dyn Fn(&AffineOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / m;
        rows.push(AffineRow {
            kind: kind.name().to_string(),
            gap_pct: mean(&|o| o.gap[0]),
            gap_pct_mirror_aug: mean(&|o| o.gap[1]),
            identical: mean(&|o| f64::from(u8::from(o.identical[0]))),
            identical_mirror_aug: mean(&|o| f64::from(u8::from(o.identical[1]))),
        });
    }
    Ok(AffineReport { instances, n, rows })
}

/// Writes `affine.csv` and `affine.json` into `out`.
pub fn cmd_affine_test(checkpoint: &Path, instances: usize, n: usize, seed: u64, out: &Path) -> Result<AffineReport> {
    let (policy, _) = load_checkpoint::<f64>(checkpoint)?;
    ensure_dir(out)?;
    let report = affine_test(&policy, instances, n, seed)?;
    write_file(out.join("affine.csv"), &report.to_csv())?;
    write_file(out.join("affine.json"), &report.to_json())?;
    Ok(report)
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no instance files in {}", dir.display())));
    }
    Ok(files)
}

/// Solves every file in `instance_dir` (ordered by file name) and scores DI against
/// `<gt_dir>/<stem>.gt` when a ground-truth directory is given. Writes `report.csv`,
/// `report.json` and one solution file per instance under `out/solutions/`.
pub fn cmd_evaluate(
    checkpoint: &Path,
    instance_dir: &Path,
    gt_dir: Option<&Path>,
    opts: &SolveOptions,
    out: &Path,
) -> Result<RunReport> {
    let (policy, _) = load_checkpoint::<f64>(checkpoint)?;
    let files = instance_files(instance_dir)?;
    let sol_dir = out.join("solutions");
    ensure_dir(&sol_dir)?;

    let results = files
        .par_iter()
        .map(|path| {
            let inst = load_with(path, opts.convention)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let gt = match gt_dir {
                Some(dir) => {
                    let gt_path = dir.join(format!("{stem}.{GROUND_TRUTH_EXT}"));
                    if !gt_path.is_file() {
                        return Err(Error::InvalidArgument(format!(
                            "instance {stem} has no ground truth at {}",
                            gt_path.display()
                        )));
                    }
                    Some(load_ground_truth(&gt_path, &inst)?.1)
                }
                None => None,
            };
            let start = Instant::now();
            let (set, _) = solve_instance(&inst, &policy, opts)?;
            let wallclock_s = start.elapsed().as_secs_f64();
            let report = MetricsReport::compute(&set, gt.as_deref())?;
            Ok((stem, set, report, wallclock_s))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(results.len());
    for (stem, set, report, wallclock_s) in results {
        write_file(sol_dir.join(format!("{stem}.txt")), &solution_text(set.tours()))?;
        rows.push(RunRow {
            instance: stem,
            size: report.size,
            best_length: report.best_length,
            msqi: report.msqi,
            di: report.di,
            wallclock_s,
        });
    }
    rows.sort_by(|a, b| a.instance.cmp(&b.instance));
    let report = RunReport::new(rows);
    write_file(out.join("report.csv"), &report.to_csv())?;
    write_file(out.join("report.json"), &report.to_json())?;
    Ok(report)
}

/// Enumerates every optimum of a small instance and writes the ground-truth file.
pub fn cmd_oracle(
    instance: &Path,
    tol: Option<f64>,
    convention: DistanceConvention,
    out_file: &Path,
) -> Result<GroundTruth<f64>> {
    let inst = load_instance::<f64>(instance)?;
    let gt = enumerate_optima(&inst, tol, convention)?;
    if let Some(parent) = out_file.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_file(out_file, &gt.to_text())?;
    Ok(gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyHyper;

    fn tiny_policy() -> Policy<f64> {
        let hyper = PolicyHyper {
            d_model: 16,
            heads: 2,
            ff_hidden: 32,
            encoder_layers: 1,
            decoders: 2,
        };
        Policy::init(hyper, 5).unwrap()
    }

    #[test]
    fn affine_rows_for_untrained_policy() {
        let report = affine_test(&tiny_policy(), 3, 8, 1).unwrap();
        assert_eq!(report.rows.len(), 5);
        for row in &report.rows[..3] {
            assert_eq!(row.identical, 1.0, "{}", row.kind);
            assert!(row.gap_pct.abs() < 1e-9, "{}", row.kind);
        }
        assert_eq!(report.rows[3].identical_mirror_aug, 1.0);
    }

    #[test]
    fn empty_dir_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(instance_files(dir.path()), Err(Error::InvalidArgument(_))));
    }
}
