//! REINFORCE training with a shared best-decoder baseline and an annealed softmax temperature.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{generate_uniform, Instance};
use crate::nn::{adam_step, tau_schedule_with, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::policy::{rollout, rollout_on, DecodeMode, Policy, PolicyHyper, PolicyParams, RolloutResult};
use crate::scalar::Scalar;

/// Mixes `(seed, stream, index)` into one 64-bit seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const STREAM_TRAIN_INSTANCE: u64 = 1;
pub(crate) const STREAM_TRAIN_SAMPLE: u64 = 2;
pub(crate) const STREAM_EVAL_INSTANCE: u64 = 3;
pub(crate) const STREAM_INIT: u64 = 4;

/// Mean length of the decoder with the shortest mean, and that decoder's index.
/// `lengths` holds one row per decoder.
pub fn best_decoder_baseline<S: Scalar>(lengths: &[Vec<S>]) -> Result<(S, usize)> {
    let means = decoder_means(lengths)?;
    let mut best = 0;
    for (d, &m) in means.iter().enumerate() {
        if m < means[best] {
            best = d;
        }
    }
    Ok((means[best], best))
}

/// Mean length of each decoder's row.
pub fn decoder_means<S: Scalar>(lengths: &[Vec<S>]) -> Result<Vec<S>> {
    if lengths.is_empty() || lengths.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("baseline needs at least one length per decoder".into()));
    }
    if lengths.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tour lengths".into()));
    }
    Ok(lengths
        .iter()
        .map(|row| row.iter().copied().sum::<S>() / S::from_count(row.len()))
        .collect())
}

/// Baseline choice for the policy-gradient advantage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// One baseline per instance: the best decoder's mean length.
    Shared,
    /// Each decoder against its own mean length.
    Respective,
}

/// Per-decoder baselines under `mode`.
pub fn baselines<S: Scalar>(lengths: &[Vec<S>], mode: Baseline) -> Result<Vec<S>> {
    match mode {
        Baseline::Shared => {
            let (b, _) = best_decoder_baseline(lengths)?;
            Ok(vec![b; lengths.len()])
        }
        Baseline::Respective => decoder_means(lengths),
    }
}

/// `scale * sum_d sum_r (L[d][r] - b[d]) * logp[d][r]` with the advantages held constant.
/// Descending this loss raises the probability of tours shorter than their baseline.
pub fn reinforce_loss<S: Scalar>(
    tape: &mut Tape<'_, S>,
    log_probs: &[Option<Var>],
    lengths: &[Vec<S>],
    baselines: &[S],
    scale: S,
) -> Result<Option<Var>> {
    if log_probs.len() != lengths.len() || baselines.len() != lengths.len() {
        return Err(Error::Dimension(format!(
            "{} log-prob blocks, {} length rows, {} baselines",
            log_probs.len(),
            lengths.len(),
            baselines.len()
        )));
    }
    let mut total: Option<Var> = None;
    for ((lp, row), &b) in log_probs.iter().zip(lengths).zip(baselines) {
        let Some(lp) = *lp else { continue };
        if tape.shape(lp) != [row.len(), 1] {
            return Err(Error::Dimension(format!(
                "log-prob block {:?} against {} lengths",
                tape.shape(lp),
                row.len()
            )));
        }
        let w: Vec<S> = row.iter().map(|&l| (l - b) * scale).collect();
        let term = tape.weighted_sum(lp, &w);
        total = Some(match total {
            Some(t) => tape.add(t, term),
            None => term,
        });
    }
    Ok(total)
}

/// Splits decoder-major rollout lengths into one row per decoder.
pub fn length_rows<S: Scalar>(res: &RolloutResult<S>) -> Vec<Vec<S>> {
    (0..res.decoders).map(|d| res.decoder_lengths(d).to_vec()).collect()
}

/// Samples a rollout, forms the loss under `baseline` and returns its gradient.
/// `scale` multiplies the loss (usually `1 / (instances * decoders * rows)`).
pub fn instance_gradient<S: Scalar>(
    policy: &Policy<S>,
    inst: &Instance<S>,
    sample_seed: u64,
    tau: S,
    repeats: usize,
    baseline: Baseline,
    scale: S,
) -> Result<(PolicyParams<Tensor<S>>, RolloutResult<S>)> {
    let mut tape = Tape::new();
    let pv = policy.params.map(&mut |t| tape.param(t));
    let (res, lps) = rollout_on(
        &mut tape,
        &pv,
        &policy.hyper,
        inst,
        DecodeMode::Sample { seed: sample_seed },
        tau,
        repeats,
    )?;
    let rows = length_rows(&res);
    let b = baselines(&rows, baseline)?;
    let grads = match reinforce_loss(&mut tape, &lps, &rows, &b, scale)? {
        Some(loss) => {
            let g = tape.backward(loss);
            pv.map(&mut |v| g.tensor(&tape, *v))
        }
        None => policy.params.zeros_like(),
    };
    Ok((grads, res))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub instances_per_epoch: usize,
    pub batch_size: usize,
    pub n: usize,
    pub decoders: usize,
    pub lr: f64,
    pub tau0: f64,
    pub seed: u64,
    /// Held-out instances scored greedily after every epoch.
    pub eval_instances: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub encoder_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = PolicyHyper::default();
        TrainConfig {
            epochs: 20,
            instances_per_epoch: 1000,
            batch_size: 32,
            n: 10,
            decoders: h.decoders,
            lr: 1e-4,
            tau0: 2.0,
            seed: 0,
            eval_instances: 100,
            d_model: h.d_model,
            heads: h.heads,
            ff_hidden: h.ff_hidden,
            encoder_layers: h.encoder_layers,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> PolicyHyper {
        PolicyHyper {
            d_model: self.d_model,
            heads: self.heads,
            ff_hidden: self.ff_hidden,
            encoder_layers: self.encoder_layers,
            decoders: self.decoders,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("instances_per_epoch", self.instances_per_epoch),
            ("batch_size", self.batch_size),
            ("decoders", self.decoders),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n < 3 {
            return Err(Error::Config(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.tau0 > 0.0) || !self.tau0.is_finite() {
            return Err(Error::Config(format!("tau0 must be positive, got {}", self.tau0)));
        }
        self.hyper().validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Held-out evaluation instances; disjoint seed stream from the training data.
    pub fn eval_set<S: Scalar>(&self) -> Result<Vec<Instance<S>>> {
        (0..self.eval_instances)
            .map(|i| generate_uniform(self.n, derive_seed(self.seed, STREAM_EVAL_INSTANCE, i as u64)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tau: f64,
    pub mean_train_len: f64,
    /// Mean greedy best-of-starts length on the held-out set; NaN without one.
    pub mean_eval_len: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,tau,mean_train_len,mean_eval_len,wallclock_s\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                r.epoch, r.tau, r.mean_train_len, r.mean_eval_len, r.wallclock_s
            );
        }
        out
    }
}

/// Mean over instances of the shortest greedy multi-start tour (no mirroring).
pub fn greedy_eval<S: Scalar>(policy: &Policy<S>, instances: &[Instance<S>]) -> Result<S> {
    if instances.is_empty() {
        return Ok(S::nan());
    }
    let best: Vec<S> = instances
        .par_iter()
        .map(|inst| rollout(inst, policy, DecodeMode::Greedy, S::one(), 1).map(|r| r.best_length()))
        .collect::<Result<_>>()?;
    Ok(best.iter().copied().sum::<S>() / S::from_count(best.len()))
}

/// Instances per parallel work item. Gradients are summed sequentially inside a
/// chunk and chunk sums are added in chunk order, so the result does not depend
/// on the number of threads.
const GRAD_CHUNK: usize = 4;

/// Sum of per-instance gradients over a batch, reduced in a fixed order.
pub fn batch_gradient<S: Scalar>(
    policy: &Policy<S>,
    batch: &[(Instance<S>, u64)],
    tau: S,
    scale: S,
) -> Result<(PolicyParams<Tensor<S>>, S)> {
    let partial: Vec<(PolicyParams<Tensor<S>>, S)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc: Option<PolicyParams<Tensor<S>>> = None;
            let mut len_sum = S::zero();
            for (inst, seed) in chunk {
                let (g, res) = instance_gradient(policy, inst, *seed, tau, 1, Baseline::Shared, scale)?;
                len_sum += res.lengths.iter().copied().sum::<S>();
                match acc.as_mut() {
                    Some(a) => a.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            Ok((acc.expect("chunks are non-empty"), len_sum))
        })
        .collect::<Result<_>>()?;
    let mut iter = partial.into_iter();
    let (mut total, mut len_sum) = iter.next().expect("batch is non-empty");
    for (g, l) in iter {
        total.add_assign(&g);
        len_sum += l;
    }
    Ok((total, len_sum))
}

/// Trains a fresh policy. `progress` is called after every epoch.
pub fn train<S: Scalar>(
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(Policy<S>, TrainingLog)> {
    cfg.validate()?;
    let mut policy = Policy::<S>::init(cfg.hyper(), derive_seed(cfg.seed, STREAM_INIT, 0))?;
    let mut state = AdamState::new(&policy.params);
    let adam = AdamConfig::with_lr(cfg.lr);
    let eval = cfg.eval_set::<S>()?;
    let start = Instant::now();
    let mut log = TrainingLog::default();
    let mut counter = 0u64;
    for epoch in 1..=cfg.epochs {
        let tau = tau_schedule_with(epoch, S::lit(cfg.tau0))?;
        let mut len_sum = S::zero();
        let mut tours = 0usize;
        let mut done = 0;
        while done < cfg.instances_per_epoch {
            let size = cfg.batch_size.min(cfg.instances_per_epoch - done);
            let batch = (0..size)
                .map(|_| {
                    let i = counter;
                    counter += 1;
                    let inst = generate_uniform::<S>(cfg.n, derive_seed(cfg.seed, STREAM_TRAIN_INSTANCE, i))?;
                    Ok((inst, derive_seed(cfg.seed, STREAM_TRAIN_SAMPLE, i)))
                })
                .collect::<Result<Vec<_>>>()?;
            let scale = S::one() / S::from_count(size * cfg.decoders * cfg.n);
            let (grads, lsum) = batch_gradient(&policy, &batch, tau, scale)?;
            adam_step(&mut policy.params, &grads, &mut state, &adam).map_err(|e| match e {
                Error::NonFinite(what) => {
                    Error::NonFinite(format!("{what} at epoch {epoch}, instance {done}"))
                }
                other => other,
            })?;
            if !policy.params.is_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}, instance {done}")));
            }
            len_sum += lsum;
            tours += size * cfg.decoders * cfg.n;
            done += size;
        }
        let record = EpochRecord {
            epoch,
            tau: tau.as_f64(),
            mean_train_len: (len_sum / S::from_count(tours)).as_f64(),
            mean_eval_len: greedy_eval(&policy, &eval)?.as_f64(),
            wallclock_s: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        log.epochs.push(record);
    }
    Ok((policy, log))
}
