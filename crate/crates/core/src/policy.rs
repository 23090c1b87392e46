//! Relativised encoder with several independently initialised attention decoders
//! and multi-start rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{canonical, Instance, Tour};
use crate::metrics::{filter_solutions, SolutionSet, DEFAULT_DELTA1, DEFAULT_DELTA2};
use crate::nn::layers::{attend_heads, check_mask, encoder_block, linear, split_heads};
use crate::nn::params::{join, uniform_init, Attention, EncoderBlock, Linear, ParamTree};
use crate::nn::{Tape, Tensor, Var};
use crate::rf::rf;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyHyper {
    pub d_model: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub encoder_layers: usize,
    pub decoders: usize,
}

impl Default for PolicyHyper {
    fn default() -> Self {
        PolicyHyper {
            d_model: 128,
            heads: 8,
            ff_hidden: 512,
            encoder_layers: 3,
            decoders: 5,
        }
    }
}

impl PolicyHyper {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.ff_hidden == 0 || self.decoders == 0 {
            return Err(Error::InvalidArgument(format!("every size must be positive: {self:?}")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Dimension(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }
}

/// One decoder: context projection of `[graph; first; last]`, a masked attention
/// glimpse and the single-head scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub w_ctx: T,
    pub attn: Attention<T>,
    pub w_final: T,
}

impl<T> Decoder<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> Decoder<U> {
        Decoder {
            w_ctx: f(&self.w_ctx),
            attn: self.attn.map(f),
            w_final: f(&self.w_final),
        }
    }
}

impl<T> ParamTree<T> for Decoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "w_ctx"), &self.w_ctx);
        self.attn.visit(&join(prefix, "attn"), f);
        f(join(prefix, "w_final"), &self.w_final);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        f(join(prefix, "w_ctx"), &mut self.w_ctx);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        f(join(prefix, "w_final"), &mut self.w_final);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T> {
    pub embed: Linear<T>,
    pub encoder: Vec<EncoderBlock<T>>,
    pub decoders: Vec<Decoder<T>>,
}

impl<T> PolicyParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> PolicyParams<U> {
        PolicyParams {
            embed: self.embed.map(f),
            encoder: self.encoder.iter().map(|b| b.map(f)).collect(),
            decoders: self.decoders.iter().map(|d| d.map(f)).collect(),
        }
    }
}

impl<T> ParamTree<T> for PolicyParams<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.embed.visit(&join(prefix, "embed"), f);
        for (i, b) in self.encoder.iter().enumerate() {
            b.visit(&join(prefix, &format!("encoder.{i}")), f);
        }
        for (i, d) in self.decoders.iter().enumerate() {
            d.visit(&join(prefix, &format!("decoder.{i}")), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        self.embed.visit_mut(&join(prefix, "embed"), f);
        for (i, b) in self.encoder.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("encoder.{i}")), f);
        }
        for (i, d) in self.decoders.iter_mut().enumerate() {
            d.visit_mut(&join(prefix, &format!("decoder.{i}")), f);
        }
    }
}

impl<S: Scalar> PolicyParams<Tensor<S>> {
    pub fn zeros_like(&self) -> Self {
        self.map(&mut |t| Tensor::zeros(t.rows(), t.cols()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.leaves_mut().into_iter().zip(other.leaves()) {
            a.add_assign(b);
        }
    }

    pub fn scale_assign(&mut self, k: S) {
        for a in self.leaves_mut() {
            a.scale_assign(k);
        }
    }

    pub fn param_count(&self) -> usize {
        self.leaves().iter().map(|t| t.len()).sum()
    }

    pub fn sq_norm(&self) -> S {
        self.leaves().iter().map(|t| t.sq_norm()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.leaves().iter().all(|t| t.is_finite())
    }
}

/// Network weights with their architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S> {
    pub hyper: PolicyHyper,
    pub params: PolicyParams<Tensor<S>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<S: Scalar> Policy<S> {
    /// Uniform fan-in initialisation. The encoder draws from stream 0 of `seed` and
    /// decoder `k` from stream `k + 1`, so decoders start from different weights.
    pub fn init(hyper: PolicyHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let d = hyper.d_model;
        let mut rng = stream_rng(seed, 0);
        let embed = Linear::init(&mut rng, 2, d, true);
        let encoder = (0..hyper.encoder_layers)
            .map(|_| EncoderBlock::init(&mut rng, d, hyper.ff_hidden))
            .collect();
        let decoders = (0..hyper.decoders)
            .map(|k| {
                let mut rng = stream_rng(seed, k as u64 + 1);
                Decoder {
                    w_ctx: uniform_init(&mut rng, 3 * d, d, 3 * d),
                    attn: Attention::init(&mut rng, d, false),
                    w_final: uniform_init(&mut rng, d, d, d),
                }
            })
            .collect();
        Ok(Policy {
            hyper,
            params: PolicyParams {
                embed,
                encoder,
                decoders,
            },
        })
    }

    /// Checks that every weight has the shape implied by `hyper`.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let reference = Policy::<S>::init(self.hyper, 0)?;
        let want = reference.params.names();
        let got = self.params.names();
        if want != got {
            return Err(Error::Dimension("parameter layout does not match hyperparameters".into()));
        }
        for ((name, a), b) in got.iter().zip(self.params.leaves()).zip(reference.params.leaves()) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }
}

/// Encoder outputs on a tape: node embeddings in original node order and their mean.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub h: Var,
    pub graph: Var,
}

/// Runs the encoder in filter order, then gathers rows back to original node order.
pub fn encode_on<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &PolicyParams<Var>,
    hyper: &PolicyHyper,
    inst: &Instance<S>,
) -> Result<Encoded> {
    let filtered = rf(inst.coords())?;
    let x = Tensor::from_fn(inst.n(), 2, |r, c| filtered.coords[r][c]);
    let x = tape.constant(x);
    let mut h = linear(tape, x, &pv.embed);
    for block in &pv.encoder {
        h = encoder_block(tape, h, block, hyper.heads)?;
    }
    let h = tape.gather_rows(h, &filtered.inverse());
    let graph = tape.mean_rows(h);
    Ok(Encoded { h, graph })
}

/// Node embeddings (`n x d`) and graph embedding (`1 x d`) of an instance.
pub fn encode<S: Scalar>(inst: &Instance<S>, policy: &Policy<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    let mut tape = Tape::new();
    let pv = policy.params.map(&mut |t| tape.param(t));
    let enc = encode_on(&mut tape, &pv, &policy.hyper, inst)?;
    Ok((tape.value(enc.h).clone(), tape.value(enc.graph).clone()))
}

/// Per-decoder projections that do not change between decoding steps.
pub struct DecoderCache {
    h: Var,
    ctx_graph: Var,
    ctx_first: Var,
    ctx_last: Var,
    k_heads: Vec<Var>,
    v_heads: Vec<Var>,
    inv_sqrt_d: f64,
}

pub fn prepare_decoder<S: Scalar>(
    tape: &mut Tape<'_, S>,
    dv: &Decoder<Var>,
    enc: Encoded,
    heads: usize,
) -> DecoderCache {
    let d = tape.shape(enc.h)[1];
    let wg = tape.slice_rows(dv.w_ctx, 0, d);
    let wf = tape.slice_rows(dv.w_ctx, d, d);
    let wl = tape.slice_rows(dv.w_ctx, 2 * d, d);
    let ctx_graph = tape.matmul(enc.graph, wg);
    let ctx_first = tape.matmul(enc.h, wf);
    let ctx_last = tape.matmul(enc.h, wl);
    let k = tape.matmul(enc.h, dv.attn.wk);
    let v = tape.matmul(enc.h, dv.attn.wv);
    let (k_heads, v_heads) = if heads == 1 {
        (vec![k], vec![v])
    } else {
        (split_heads(tape, k, heads), split_heads(tape, v, heads))
    };
    DecoderCache {
        h: enc.h,
        ctx_graph,
        ctx_first,
        ctx_last,
        k_heads,
        v_heads,
        inv_sqrt_d: 1.0 / (d as f64).sqrt(),
    }
}

/// Log action probabilities (`rows x n`) for a batch of partial tours. `mask` is
/// `rows x n`, true for visited nodes.
pub fn decode_logits<S: Scalar>(
    tape: &mut Tape<'_, S>,
    dv: &Decoder<Var>,
    cache: &DecoderCache,
    first: &[usize],
    last: &[usize],
    mask: &[bool],
    tau: S,
) -> Var {
    let a = tape.gather_rows(cache.ctx_first, first);
    let b = tape.gather_rows(cache.ctx_last, last);
    let ctx = tape.add(a, b);
    let ctx = tape.add_row(ctx, cache.ctx_graph);
    let q = tape.matmul(ctx, dv.attn.wq);
    let glimpse = attend_heads(tape, q, &cache.k_heads, &cache.v_heads, Some(mask));
    let glimpse = tape.matmul(glimpse, dv.attn.wo);
    let qf = tape.matmul(glimpse, dv.w_final);
    let scores = tape.matmul_nt(qf, cache.h);
    let scores = tape.scale(scores, S::lit(cache.inv_sqrt_d));
    tape.log_softmax(scores, Some(mask), tau)
}

/// Action distribution of decoder `decoder` for one partial tour.
#[allow(clippy::too_many_arguments)]
pub fn decode_step<S: Scalar>(
    policy: &Policy<S>,
    decoder: usize,
    h: &Tensor<S>,
    graph: &Tensor<S>,
    first: usize,
    last: usize,
    visited: &[bool],
    tau: S,
) -> Result<Vec<S>> {
    let n = h.rows();
    if decoder >= policy.hyper.decoders {
        return Err(Error::InvalidArgument(format!("no decoder {decoder}")));
    }
    if visited.len() != n || first >= n || last >= n {
        return Err(Error::Dimension("visited mask or node index does not match the embeddings".into()));
    }
    if !(tau > S::zero()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if visited.iter().all(|&v| v) {
        return Err(Error::InvalidArgument("every node is already visited".into()));
    }
    let mut tape = Tape::new();
    let dv = policy.params.decoders[decoder].map(&mut |t| tape.param(t));
    let enc = Encoded {
        h: tape.constant(h.clone()),
        graph: tape.constant(graph.clone()),
    };
    let cache = prepare_decoder(&mut tape, &dv, enc, policy.hyper.heads);
    let lp = decode_logits(&mut tape, &dv, &cache, &[first], &[last], visited, tau);
    Ok(tape.value(lp).data().iter().map(|v| v.exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample { seed: u64 },
}

/// Tours of a multi-start rollout, decoder-major: entry `d * rows + r` belongs to
/// decoder `d`, row `r`, which starts at node `r % n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult<S> {
    pub decoders: usize,
    pub rows: usize,
    pub tours: Vec<Vec<usize>>,
    pub log_probs: Vec<S>,
    pub lengths: Vec<S>,
}

impl<S: Scalar> RolloutResult<S> {
    pub fn decoder_lengths(&self, d: usize) -> &[S] {
        &self.lengths[d * self.rows..(d + 1) * self.rows]
    }

    pub fn mean_length(&self) -> S {
        self.lengths.iter().copied().sum::<S>() / S::from_count(self.lengths.len())
    }

    pub fn best_length(&self) -> S {
        self.lengths.iter().copied().fold(S::infinity(), S::min)
    }

    /// Validated tours in canonical order.
    pub fn to_tours(&self, inst: &Instance<S>) -> Result<Vec<Tour<S>>> {
        self.tours.iter().map(|o| Tour::new(inst, canonical(o))).collect()
    }
}

fn argmax_lowest<S: Scalar>(row: &[S], mask: &[bool]) -> usize {
    let mut best = usize::MAX;
    for j in 0..row.len() {
        if !mask[j] && (best == usize::MAX || row[j] > row[best]) {
            best = j;
        }
    }
    best
}

fn sample_row<S: Scalar>(row: &[S], mask: &[bool], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = usize::MAX;
    for j in 0..row.len() {
        if mask[j] {
            continue;
        }
        acc += row[j].as_f64().exp();
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// Records a full multi-start rollout of every decoder on `tape`. Returns the tours
/// and, per decoder, a `rows x 1` variable holding each tour's summed log-probability.
#[allow(clippy::too_many_arguments)]
pub fn rollout_on<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &PolicyParams<Var>,
    hyper: &PolicyHyper,
    inst: &Instance<S>,
    mode: DecodeMode,
    tau: S,
    repeats: usize,
) -> Result<(RolloutResult<S>, Vec<Option<Var>>)> {
    let mut rngs: Vec<Option<ChaCha8Rng>> = (0..hyper.decoders)
        .map(|d| match mode {
            DecodeMode::Sample { seed } => Some(stream_rng(seed, d as u64)),
            DecodeMode::Greedy => None,
        })
        .collect();
    let mut choose = |d: usize, _step: usize, _r: usize, row: &[S], mask: &[bool]| match rngs[d].as_mut() {
        Some(rng) => sample_row(row, mask, rng),
        None => argmax_lowest(row, mask),
    };
    decode_all(tape, pv, hyper, inst, &mut choose, tau, repeats)
}

/// Re-scores given tours (decoder-major, `rows` per decoder, row `r` starting at
/// node `r % n`) by forcing their actions; the returned variables carry gradients.
pub fn score_tours_on<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &PolicyParams<Var>,
    hyper: &PolicyHyper,
    inst: &Instance<S>,
    tours: &[Vec<usize>],
    tau: S,
) -> Result<(RolloutResult<S>, Vec<Option<Var>>)> {
    let n = inst.n();
    let per = hyper.decoders * n;
    if tours.is_empty() || tours.len() % per != 0 {
        return Err(Error::Dimension(format!(
            "{} tours cannot be split over {} decoders and {n} starts",
            tours.len(),
            hyper.decoders
        )));
    }
    let repeats = tours.len() / per;
    let rows = repeats * n;
    for (k, t) in tours.iter().enumerate() {
        crate::instances::check_permutation(t, n)?;
        if t[0] != (k % rows) % n {
            return Err(Error::InvalidTour(format!("tour {k} does not start at node {}", (k % rows) % n)));
        }
    }
    let mut choose = |d: usize, step: usize, r: usize, _row: &[S], _mask: &[bool]| tours[d * rows + r][step];
    decode_all(tape, pv, hyper, inst, &mut choose, tau, repeats)
}

type Chooser<'a, S> = dyn FnMut(usize, usize, usize, &[S], &[bool]) -> usize + 'a;

fn decode_all<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &PolicyParams<Var>,
    hyper: &PolicyHyper,
    inst: &Instance<S>,
    choose: &mut Chooser<'_, S>,
    tau: S,
    repeats: usize,
) -> Result<(RolloutResult<S>, Vec<Option<Var>>)> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("at least one rollout per start".into()));
    }
    let n = inst.n();
    let rows = repeats * n;
    let enc = encode_on(tape, pv, hyper, inst)?;
    let mut tours = Vec::with_capacity(hyper.decoders * rows);
    let mut log_probs = Vec::with_capacity(hyper.decoders * rows);
    let mut lp_vars = Vec::with_capacity(hyper.decoders);
    for (d, dv) in pv.decoders.iter().enumerate() {
        let cache = prepare_decoder(tape, dv, enc, hyper.heads);
        let first: Vec<usize> = (0..rows).map(|r| r % n).collect();
        let mut last = first.clone();
        let mut mask = vec![false; rows * n];
        let mut paths: Vec<Vec<usize>> = first.iter().map(|&s| vec![s]).collect();
        for (r, &s) in first.iter().enumerate() {
            mask[r * n + s] = true;
        }
        let mut total: Option<Var> = None;
        // the last node is forced, so only n - 2 choices reach the network
        for step in 1..n.saturating_sub(1) {
            check_mask(&mask, rows, n)?;
            let lp = decode_logits(tape, dv, &cache, &first, &last, &mask, tau);
            let vals = tape.value(lp);
            let actions: Vec<usize> = (0..rows)
                .map(|r| choose(d, step, r, vals.row(r), &mask[r * n..(r + 1) * n]))
                .collect();
            let picked = tape.pick_cols(lp, &actions);
            total = Some(match total {
                Some(t) => tape.add(t, picked),
                None => picked,
            });
            for (r, &a) in actions.iter().enumerate() {
                mask[r * n + a] = true;
                last[r] = a;
                paths[r].push(a);
            }
        }
        for (r, path) in paths.iter_mut().enumerate() {
            if let Some(j) = (0..n).find(|&j| !mask[r * n + j]) {
                path.push(j);
            }
        }
        match total {
            Some(t) => log_probs.extend_from_slice(tape.value(t).data()),
            None => log_probs.extend(std::iter::repeat(S::zero()).take(rows)),
        }
        lp_vars.push(total);
        tours.extend(paths);
    }
    let lengths = tours
        .iter()
        .map(|t| inst.tour_length(t))
        .collect::<Result<Vec<_>>>()?;
    if lengths.iter().chain(&log_probs).any(|v| v.is_nan() || *v == S::infinity()) {
        return Err(Error::NonFinite("rollout".into()));
    }
    Ok((
        RolloutResult {
            decoders: hyper.decoders,
            rows,
            tours,
            log_probs,
            lengths,
        },
        lp_vars,
    ))
}

/// `repeats * n` rollouts per decoder, row `r` starting at node `r % n`.
pub fn rollout<S: Scalar>(
    inst: &Instance<S>,
    policy: &Policy<S>,
    mode: DecodeMode,
    tau: S,
    repeats: usize,
) -> Result<RolloutResult<S>> {
    let mut tape = Tape::new();
    let pv = policy.params.map(&mut |t| tape.param(t));
    rollout_on(&mut tape, &pv, &policy.hyper, inst, mode, tau, repeats).map(|(r, _)| r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub tau: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Also decode the x/y-swapped instance.
    pub mirror: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tau: 1.0,
            delta1: DEFAULT_DELTA1,
            delta2: DEFAULT_DELTA2,
            mirror: true,
        }
    }
}

/// Greedy tours of the instance (and its mirror when enabled), edge-set distinct,
/// ordered by length then canonical order.
pub fn greedy_tours<S: Scalar>(inst: &Instance<S>, policy: &Policy<S>, cfg: &SolveConfig) -> Result<Vec<Tour<S>>> {
    let tau = S::lit(cfg.tau);
    let mut tours = greedy_pass(inst, policy, tau, false)?;
    if cfg.mirror {
        tours.extend(greedy_pass(inst, policy, tau, true)?);
    }
    Ok(crate::metrics::dedup_sorted(tours))
}

/// Raw greedy tours of one pass, on the instance itself or on its x/y swap. Tours
/// always refer to the nodes of `inst`.
pub fn greedy_pass<S: Scalar>(inst: &Instance<S>, policy: &Policy<S>, tau: S, swapped: bool) -> Result<Vec<Tour<S>>> {
    if !swapped {
        return rollout(inst, policy, DecodeMode::Greedy, tau, 1)?.to_tours(inst);
    }
    let coords = crate::instances::mirror(inst.coords());
    let mirrored = Instance::with_convention(inst.id(), coords, inst.convention())?;
    rollout(&mirrored, policy, DecodeMode::Greedy, tau, 1)?.to_tours(inst)
}

/// Greedy multi-start decoding followed by the optimality and diversity filters.
pub fn solve<S: Scalar>(inst: &Instance<S>, policy: &Policy<S>, cfg: &SolveConfig) -> Result<SolutionSet<S>> {
    let tours = greedy_tours(inst, policy, cfg)?;
    filter_solutions(tours, S::lit(cfg.delta1), S::lit(cfg.delta2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::generate_uniform;

    fn small() -> PolicyHyper {
        PolicyHyper {
            d_model: 16,
            heads: 4,
            ff_hidden: 32,
            encoder_layers: 2,
            decoders: 3,
        }
    }

    #[test]
    fn shapes_and_counts() {
        let p = Policy::<f64>::init(PolicyHyper::default(), 1).unwrap();
        let inst = generate_uniform::<f64>(10, 3).unwrap();
        let (h, g) = encode(&inst, &p).unwrap();
        assert_eq!(h.shape(), [10, 128]);
        assert_eq!(g.shape(), [1, 128]);
        let res = rollout(&inst, &p, DecodeMode::Greedy, 1.0, 1).unwrap();
        assert_eq!(res.tours.len(), 50);
        p.validate().unwrap();
    }

    #[test]
    fn decoders_differ_at_init() {
        let p = Policy::<f64>::init(small(), 5).unwrap();
        assert_ne!(p.params.decoders[0], p.params.decoders[1]);
        assert_eq!(p, Policy::init(small(), 5).unwrap());
    }

    #[test]
    fn rollout_tours_are_valid() {
        let p = Policy::<f64>::init(small(), 2).unwrap();
        let inst = generate_uniform::<f64>(7, 4).unwrap();
        for mode in [DecodeMode::Greedy, DecodeMode::Sample { seed: 3 }] {
            let res = rollout(&inst, &p, mode, 1.5, 2).unwrap();
            assert_eq!(res.rows, 14);
            for (k, t) in res.tours.iter().enumerate() {
                crate::instances::check_permutation(t, 7).unwrap();
                assert_eq!(t[0], (k % res.rows) % 7);
                assert!((inst.tour_length(t).unwrap() - res.lengths[k]).abs() < 1e-9);
                assert!(res.log_probs[k] <= 0.0);
            }
            assert_eq!(res, rollout(&inst, &p, mode, 1.5, 2).unwrap());
        }
    }

    #[test]
    fn decode_step_distribution() {
        let p = Policy::<f64>::init(small(), 8).unwrap();
        let inst = generate_uniform::<f64>(6, 1).unwrap();
        let (h, g) = encode(&inst, &p).unwrap();
        let mut visited = vec![false; 6];
        visited[2] = true;
        let probs = decode_step(&p, 1, &h, &g, 2, 2, &visited, 1.0).unwrap();
        assert_eq!(probs[2], 0.0);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let only = [true, true, true, false, true, true];
        let probs = decode_step(&p, 0, &h, &g, 0, 4, &only, 1.0).unwrap();
        assert_eq!(probs[3], 1.0);
        assert!(decode_step(&p, 0, &h, &g, 0, 4, &[true; 6], 1.0).is_err());
    }

    #[test]
    fn solve_returns_filtered_set() {
        let p = Policy::<f64>::init(small(), 9).unwrap();
        let inst = generate_uniform::<f64>(8, 2).unwrap();
        let set = solve(&inst, &p, &SolveConfig::default()).unwrap();
        assert!(!set.is_empty());
        let best = set.best().length();
        for t in set.tours() {
            assert!(t.length() < best * 1.1 || t.length() == best);
        }
    }
}
