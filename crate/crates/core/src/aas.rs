//! Per-instance active search with adaptive baseline switching and randomised early stopping.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instances::{Instance, Tour};
use crate::metrics::{dedup_sorted, filter_solutions, msqi, SolutionSet, DEFAULT_DELTA1, DEFAULT_DELTA2};
use crate::nn::{adam_step, AdamConfig, AdamState, Tensor};
use crate::policy::{Policy, PolicyParams};
use crate::scalar::Scalar;
use crate::training::{derive_seed, instance_gradient, Baseline};

const STREAM_SAMPLE: u64 = 11;
const STREAM_STOP: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AasConfig {
    /// Switching threshold on `f`; the stopping threshold is `alpha / 2`.
    pub alpha: f64,
    pub t_max: usize,
    pub lr: f64,
    /// Sampled rollouts per decoder and start node.
    pub rollouts: usize,
    pub seed: u64,
    /// Keep every distinct tour seen instead of only the best-mean iteration's pool.
    pub archive: bool,
    pub tau: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for AasConfig {
    fn default() -> Self {
        AasConfig {
            alpha: 0.005,
            t_max: 200,
            lr: 1e-5,
            rollouts: 1,
            seed: 0,
            archive: false,
            tau: 1.0,
            delta1: DEFAULT_DELTA1,
            delta2: DEFAULT_DELTA2,
        }
    }
}

impl AasConfig {
    pub fn beta(&self) -> f64 {
        0.5 * self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.t_max == 0 || self.rollouts == 0 {
            return Err(Error::InvalidArgument("t_max and rollouts must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("lr and tau must be positive".into()));
        }
        Ok(())
    }
}

/// Scale-free gradient size `||g|| / (|J| sqrt(P))`.
pub fn f_stat<S: Scalar>(grad: &[S], j: S) -> Result<S> {
    if j == S::zero() || !j.is_finite() {
        return Err(Error::InvalidArgument(format!("objective must be finite and non-zero, got {j}")));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    if grad.is_empty() {
        return Ok(S::zero());
    }
    let norm = grad.iter().map(|&g| g * g).sum::<S>().sqrt();
    Ok(norm / (j.abs() * S::from_count(grad.len()).sqrt()))
}

fn f_stat_tree<S: Scalar>(grad: &PolicyParams<Tensor<S>>, j: S) -> Result<S> {
    if j == S::zero() || !j.is_finite() {
        return Err(Error::InvalidArgument(format!("objective must be finite and non-zero, got {j}")));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let p = grad.param_count();
    Ok(grad.sq_norm().sqrt() / (j.abs() * S::from_count(p).sqrt()))
}

/// Each decoder's own mean length.
pub fn respective_baseline<S: Scalar>(lengths: &[Vec<S>]) -> Result<Vec<S>> {
    crate::training::decoder_means(lengths)
}

/// Stop probability `(beta - f) / beta` below `beta`, otherwise 0.
pub fn termination_prob<S: Scalar>(f: S, beta: S) -> S {
    if f < beta {
        (beta - f) / beta
    } else {
        S::zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AasRecord {
    pub iter: usize,
    pub mean_len: f64,
    pub best_mean_len: f64,
    pub f: f64,
    pub switched: bool,
    pub e: f64,
    pub stopped: bool,
    /// MSQI of this iteration's sampled tours after filtering.
    pub msqi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AasTrace {
    pub records: Vec<AasRecord>,
}

impl AasTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,mean_len,best_mean_len,f,switch,e,stopped\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iter,
                r.mean_len,
                r.best_mean_len,
                r.f,
                u8::from(r.switched),
                r.e,
                u8::from(r.stopped)
            );
        }
        out
    }
}

/// Fine-tunes a private copy of `policy` on one instance and returns the filtered
/// tour pool of the iteration with the best mean sampled length.
pub fn aas<S: Scalar>(
    inst: &Instance<S>,
    policy: &Policy<S>,
    cfg: &AasConfig,
) -> Result<(SolutionSet<S>, AasTrace)> {
    cfg.validate()?;
    let mut local = policy.clone();
    let mut state = AdamState::new(&local.params);
    let adam = AdamConfig::with_lr(cfg.lr);
    let beta = S::lit(cfg.beta());
    let alpha = S::lit(cfg.alpha);
    let (d1, d2) = (S::lit(cfg.delta1), S::lit(cfg.delta2));
    let mut stop_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_STOP, 0));

    let mut switched = false;
    let mut best_mean = S::infinity();
    let mut pool: Vec<Tour<S>> = Vec::new();
    let mut archive: Vec<Tour<S>> = Vec::new();
    let mut records = Vec::new();

    for iter in 1..=cfg.t_max {
        let baseline = if switched { Baseline::Respective } else { Baseline::Shared };
        let rows = cfg.rollouts * inst.n();
        let scale = S::one() / S::from_count(local.hyper.decoders * rows);
        let (grads, res) = instance_gradient(
            &local,
            inst,
            derive_seed(cfg.seed, STREAM_SAMPLE, iter as u64),
            S::lit(cfg.tau),
            cfg.rollouts,
            baseline,
            scale,
        )?;
        let mean = res.mean_length();
        let tours = dedup_sorted(res.to_tours(inst)?);
        let iter_msqi = msqi(&filter_solutions(tours.clone(), d1, d2)?)?.0;
        if mean < best_mean {
            best_mean = mean;
            pool = tours.clone();
        }
        if cfg.archive {
            archive.extend(tours);
            archive = dedup_sorted(archive);
        }

        adam_step(&mut local.params, &grads, &mut state, &adam)?;
        let f = f_stat_tree(&grads, -mean)?;
        if !switched && f < alpha {
            switched = true;
        }
        let mut e = S::zero();
        let mut stopped = false;
        if switched {
            e = termination_prob(f, beta);
            let draw: f64 = stop_rng.gen();
            stopped = S::lit(draw) < e;
        }
        records.push(AasRecord {
            iter,
            mean_len: mean.as_f64(),
            best_mean_len: best_mean.as_f64(),
            f: f.as_f64(),
            switched,
            e: e.as_f64(),
            stopped,
            msqi: iter_msqi.as_f64(),
        });
        if stopped {
            break;
        }
    }
    let source = if cfg.archive { archive } else { pool };
    let set = filter_solutions(source, d1, d2)?;
    Ok((set, AasTrace { records }))
}

/// Fraction of `draws` Bernoulli trials that stop at a fixed `f`, using the same
/// comparison as [`aas`].
pub fn simulate_stop_frequency(f: f64, beta: f64, draws: usize, seed: u64) -> f64 {
    let e = termination_prob(f, beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..draws).filter(|_| rng.gen::<f64>() < e).count();
    hits as f64 / draws as f64
}
