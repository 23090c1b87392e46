//! Finite-difference cases for every differentiable block.

use mstsp::instances::generate_uniform;
use mstsp::nn::layers::NORM_EPS;
use mstsp::nn::{encoder_block, multi_head_attention, Attention, EncoderBlock, ParamTree, Tape, Tensor, Var};
use mstsp::policy::{
    decode_logits, encode_on, prepare_decoder, rollout, score_tours_on, DecodeMode, Policy, PolicyHyper,
};
use mstsp::training::{baselines, length_rows, reinforce_loss, Baseline};
use rand::Rng;

use super::{fd_check, probe, random_tensor, rng, Inputs};

fn jitter<P: ParamTree<Tensor<f64>>>(p: &mut P, seed: u64) {
    let mut r = rng(seed);
    for t in p.leaves_mut() {
        for v in t.data_mut() {
            *v += r.gen_range(-0.1..0.1);
        }
    }
}

fn leaves_of<T: Copy, P: ParamTree<T>>(p: &P) -> Vec<T> {
    p.leaves().into_iter().copied().collect()
}

fn bind<'a>(tape: &mut Tape<'a, f64>, p: &'a Inputs) -> Vec<Var> {
    p.0.iter().map(|t| tape.param(t)).collect()
}

/// Away from the relu kink.
fn signed_away_from_zero(seed: u64, rows: usize, cols: usize) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(rows, cols, |_, _| {
        let m: f64 = r.gen_range(0.1..1.0);
        if r.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn op_case(name: &str, inputs: Inputs, f: impl Fn(&mut Tape<'_, f64>, &[Var]) -> Var) -> (String, f64, String) {
    let (err, leaf) = fd_check(&inputs, |tape, p| {
        let vars = bind(tape, p);
        let out = f(tape, &vars);
        let root = probe(tape, out, 7);
        (root, vars)
    });
    (name.to_string(), err, leaf)
}

fn tiny_hyper() -> PolicyHyper {
    PolicyHyper {
        d_model: 8,
        heads: 2,
        ff_hidden: 12,
        encoder_layers: 2,
        decoders: 2,
    }
}

/// `(case, worst relative error, worst leaf)` for every checked block.
pub fn all_cases() -> Vec<(String, f64, String)> {
    let mut out = Vec::new();
    let mut r = rng(1);
    let mut t = |rows, cols| random_tensor(&mut r, rows, cols, -1.0, 1.0);

    out.push(op_case("matmul", Inputs(vec![t(3, 4), t(4, 2)]), |tp, v| tp.matmul(v[0], v[1])));
    out.push(op_case("matmul_nt", Inputs(vec![t(3, 4), t(5, 4)]), |tp, v| tp.matmul_nt(v[0], v[1])));
    out.push(op_case("add", Inputs(vec![t(3, 4), t(3, 4)]), |tp, v| tp.add(v[0], v[1])));
    out.push(op_case("add_row", Inputs(vec![t(3, 4), t(1, 4)]), |tp, v| tp.add_row(v[0], v[1])));
    out.push(op_case("mul_row", Inputs(vec![t(3, 4), t(1, 4)]), |tp, v| tp.mul_row(v[0], v[1])));
    out.push(op_case("scale", Inputs(vec![t(3, 4)]), |tp, v| tp.scale(v[0], -1.7)));
    out.push(op_case("relu", Inputs(vec![signed_away_from_zero(3, 4, 5)]), |tp, v| tp.relu(v[0])));
    out.push(op_case("instance_norm", Inputs(vec![t(5, 3)]), |tp, v| {
        tp.instance_norm(v[0], NORM_EPS)
    }));
    out.push(op_case("mean_rows", Inputs(vec![t(4, 3)]), |tp, v| tp.mean_rows(v[0])));
    out.push(op_case("gather_rows", Inputs(vec![t(4, 3)]), |tp, v| tp.gather_rows(v[0], &[2, 0, 2, 1])));
    out.push(op_case("slice_cols", Inputs(vec![t(3, 5)]), |tp, v| tp.slice_cols(v[0], 1, 3)));
    out.push(op_case("slice_rows", Inputs(vec![t(5, 3)]), |tp, v| tp.slice_rows(v[0], 2, 2)));
    out.push(op_case("concat_cols", Inputs(vec![t(3, 2), t(3, 4)]), |tp, v| {
        tp.concat_cols(&[v[0], v[1]])
    }));
    let mask = [false, true, false, false, false, false, true, false];
    out.push(op_case("softmax", Inputs(vec![t(2, 4)]), move |tp, v| tp.softmax(v[0], Some(&mask), 0.7)));
    out.push(op_case("log_softmax", Inputs(vec![t(2, 4)]), move |tp, v| {
        let ls = tp.log_softmax(v[0], Some(&mask), 1.3);
        let a = tp.pick_cols(ls, &[0, 3]);
        let b = tp.pick_cols(ls, &[2, 1]);
        tp.concat_cols(&[a, b])
    }));
    out.push(op_case("sum", Inputs(vec![t(3, 3)]), |tp, v| {
        let s = tp.sum(v[0]);
        tp.scale(s, 2.0)
    }));

    let mut attn: Attention<Tensor<f64>> = Attention::init(&mut rng(2), 8, true);
    jitter(&mut attn, 3);
    let q_in = t(3, 8);
    let k_in = t(5, 8);
    let att_mask: Vec<bool> = (0..15).map(|i| i % 4 == 1).collect();
    let (err, leaf) = fd_check(&attn, |tape, p| {
        let pv = p.map(&mut |x| tape.param(x));
        let q = tape.constant(q_in.clone());
        let k = tape.constant(k_in.clone());
        let o = multi_head_attention(tape, q, k, &pv, 2, Some(&att_mask)).expect("attention");
        (probe(tape, o, 11), leaves_of(&pv))
    });
    out.push(("multi_head_attention".into(), err, leaf));

    let inputs = Inputs(vec![t(5, 8)]);
    let block_for_inputs: EncoderBlock<Tensor<f64>> = EncoderBlock::init(&mut rng(4), 8, 12);
    let (err, leaf) = fd_check(&inputs, |tape, p| {
        let h = tape.param(&p.0[0]);
        let pv = block_for_inputs.map(&mut |x| tape.constant(x.clone()));
        let o = encoder_block(tape, h, &pv, 2).expect("block");
        (probe(tape, o, 13), vec![h])
    });
    out.push(("encoder_block (input)".into(), err, leaf));

    let mut block: EncoderBlock<Tensor<f64>> = EncoderBlock::init(&mut rng(5), 8, 12);
    jitter(&mut block, 6);
    let h_in = t(5, 8);
    let (err, leaf) = fd_check(&block, |tape, p| {
        let pv = p.map(&mut |x| tape.param(x));
        let h = tape.constant(h_in.clone());
        let o = encoder_block(tape, h, &pv, 2).expect("block");
        (probe(tape, o, 17), leaves_of(&pv))
    });
    out.push(("encoder_block (weights)".into(), err, leaf));

    let mut policy = Policy::<f64>::init(tiny_hyper(), 8).expect("policy");
    jitter(&mut policy.params, 9);
    let inst = generate_uniform::<f64>(6, 10).expect("instance");
    let (err, leaf) = fd_check(&policy.params, |tape, p| {
        let pv = p.map(&mut |x| tape.param(x));
        let enc = encode_on(tape, &pv, &policy.hyper, &inst).expect("encode");
        let cache = prepare_decoder(tape, &pv.decoders[1], enc, policy.hyper.heads);
        let mut mask = vec![false; 12];
        for j in [0, 2, 4] {
            mask[j] = true;
        }
        for j in [6 + 3] {
            mask[j] = true;
        }
        let logp = decode_logits(tape, &pv.decoders[1], &cache, &[0, 3], &[4, 3], &mask, 0.8);
        let chosen = tape.pick_cols(logp, &[5, 1]);
        (probe(tape, chosen, 19), leaves_of(&pv))
    });
    out.push(("decode_step log p".into(), err, leaf));

    let sampled = rollout(&inst, &policy, DecodeMode::Sample { seed: 21 }, 1.0, 1).expect("rollout");
    for mode in [Baseline::Shared, Baseline::Respective] {
        let (err, leaf) = fd_check(&policy.params, |tape, p| {
            let pv = p.map(&mut |x| tape.param(x));
            let (res, lps) = score_tours_on(tape, &pv, &policy.hyper, &inst, &sampled.tours, 1.0).expect("score");
            let rows = length_rows(&res);
            let b = baselines(&rows, mode).expect("baseline");
            let scale = 1.0 / (policy.hyper.decoders * inst.n()) as f64;
            let loss = reinforce_loss(tape, &lps, &rows, &b, scale).expect("loss").expect("non-empty");
            (loss, leaves_of(&pv))
        });
        out.push((format!("reinforce loss ({mode:?} baseline)"), err, leaf));
    }
    out
}
