//! Attention building blocks recorded on a [`Tape`].

use super::params::{Attention, EncoderBlock, Linear, Norm};
use super::tape::{softmax_row, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const NORM_EPS: f64 = 1e-5;

pub fn linear<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, p: &Linear<Var>) -> Var {
    let y = tape.matmul(x, p.weight);
    match p.bias {
        Some(b) => tape.add_row(y, b),
        None => y,
    }
}

/// Instance normalisation over the node (row) axis followed by a per-feature affine map.
pub fn norm<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, p: &Norm<Var>) -> Var {
    let y = tape.instance_norm(x, S::lit(NORM_EPS));
    let y = tape.mul_row(y, p.gamma);
    tape.add_row(y, p.beta)
}

/// Checks a `rows x cols` mask (true = forbidden) leaves every row at least one key.
pub fn check_mask(mask: &[bool], rows: usize, cols: usize) -> Result<()> {
    if mask.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "mask has {} entries, expected {rows}x{cols}",
            mask.len()
        )));
    }
    if let Some(r) = (0..rows).find(|&r| mask[r * cols..(r + 1) * cols].iter().all(|&m| m)) {
        return Err(Error::InvalidArgument(format!(
            "attention row {r} has every key masked"
        )));
    }
    Ok(())
}

/// Column blocks of width `cols / heads`.
pub fn split_heads<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, heads: usize) -> Vec<Var> {
    let dk = tape.shape(x)[1] / heads;
    (0..heads).map(|h| tape.slice_cols(x, h * dk, dk)).collect()
}

/// Scaled dot-product attention of `q` against per-head key and value blocks;
/// returns the concatenated head outputs. `mask` is `rows(q) x rows(k)`.
pub fn attend_heads<S: Scalar>(
    tape: &mut Tape<'_, S>,
    q: Var,
    k_heads: &[Var],
    v_heads: &[Var],
    mask: Option<&[bool]>,
) -> Var {
    let heads = k_heads.len();
    let dk = tape.shape(q)[1] / heads;
    let inv_sqrt = S::one() / S::from_count(dk).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for (h, (&kh, &vh)) in k_heads.iter().zip(v_heads).enumerate() {
        let qh = if heads == 1 { q } else { tape.slice_cols(q, h * dk, dk) };
        let scores = tape.matmul_nt(qh, kh);
        let scores = tape.scale(scores, inv_sqrt);
        let weights = tape.softmax(scores, mask, S::one());
        outs.push(tape.matmul(weights, vh));
    }
    if heads == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)
    }
}

/// [`attend_heads`] on unsplit projections.
pub fn attend<S: Scalar>(
    tape: &mut Tape<'_, S>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: Option<&[bool]>,
) -> Var {
    let (kh, vh) = if heads == 1 {
        (vec![k], vec![v])
    } else {
        (split_heads(tape, k, heads), split_heads(tape, v, heads))
    };
    attend_heads(tape, q, &kh, &vh, mask)
}

pub(crate) fn check_attention_dims<S: Scalar>(
    tape: &Tape<'_, S>,
    p: &Attention<Var>,
    heads: usize,
) -> Result<usize> {
    let d = tape.shape(p.wq)[0];
    if heads == 0 || d % heads != 0 {
        return Err(Error::Dimension(format!(
            "embedding width {d} is not divisible by {heads} heads"
        )));
    }
    for (name, w) in [("wq", p.wq), ("wk", p.wk), ("wv", p.wv), ("wo", p.wo)] {
        if tape.shape(w) != [d, d] {
            return Err(Error::Dimension(format!(
                "{name} is {:?}, expected [{d}, {d}]",
                tape.shape(w)
            )));
        }
    }
    Ok(d)
}

/// Multi-head attention of `queries` over `keys`, combining heads through `wo`.
pub fn multi_head_attention<S: Scalar>(
    tape: &mut Tape<'_, S>,
    queries: Var,
    keys: Var,
    p: &Attention<Var>,
    heads: usize,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let d = check_attention_dims(tape, p, heads)?;
    let [nq, dq] = tape.shape(queries);
    let [nk, dkv] = tape.shape(keys);
    if dq != d || dkv != d {
        return Err(Error::Dimension(format!(
            "attention inputs have widths {dq} and {dkv}, weights expect {d}"
        )));
    }
    if let Some(m) = mask {
        check_mask(m, nq, nk)?;
    }
    let q = tape.matmul(queries, p.wq);
    let k = tape.matmul(keys, p.wk);
    let v = tape.matmul(keys, p.wv);
    let heads_out = attend(tape, q, k, v, heads, mask);
    let out = tape.matmul(heads_out, p.wo);
    Ok(match p.bo {
        Some(b) => tape.add_row(out, b),
        None => out,
    })
}

/// Self-attention, skip, normalisation, feed-forward, skip, normalisation.
pub fn encoder_block<S: Scalar>(
    tape: &mut Tape<'_, S>,
    h: Var,
    p: &EncoderBlock<Var>,
    heads: usize,
) -> Result<Var> {
    let attn = multi_head_attention(tape, h, h, &p.attn, heads, None)?;
    let h1 = tape.add(h, attn);
    let h1 = norm(tape, h1, &p.norm1);
    let [din, _] = tape.shape(p.ff1.weight);
    if din != tape.shape(h1)[1] {
        return Err(Error::Dimension("feed-forward input width".into()));
    }
    let ff = linear(tape, h1, &p.ff1);
    let ff = tape.relu(ff);
    let ff = linear(tape, ff, &p.ff2);
    let h2 = tape.add(h1, ff);
    Ok(norm(tape, h2, &p.norm2))
}

/// Softmax of `logits / tau`. `-inf` logits get probability exactly zero.
pub fn temperature_softmax<S: Scalar>(logits: &[S], tau: S) -> Result<Vec<S>> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if !logits.iter().any(|l| l.is_finite()) {
        return Err(Error::InvalidArgument("no finite logit".into()));
    }
    if logits.iter().any(|l| l.is_nan() || *l == S::infinity()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut out = vec![S::zero(); logits.len()];
    softmax_row(logits, None, tau, &mut out);
    Ok(out)
}

/// Annealed temperature `tau0 / (1 + log10(epoch))` for 1-based `epoch`.
pub fn tau_schedule_with<S: Scalar>(epoch: usize, tau0: S) -> Result<S> {
    if epoch < 1 {
        return Err(Error::InvalidArgument("epochs are counted from 1".into()));
    }
    Ok(tau0 / (S::one() + S::from_count(epoch).log10()))
}

pub const DEFAULT_TAU0: f64 = 2.0;

/// [`tau_schedule_with`] at the default initial temperature of 2.
pub fn tau_schedule<S: Scalar>(epoch: usize) -> Result<S> {
    tau_schedule_with(epoch, S::lit(DEFAULT_TAU0))
}
