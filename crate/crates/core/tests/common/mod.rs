#![allow(dead_code)]

pub mod grad_cases;
pub mod reference;

use mstsp::nn::{ParamTree, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Below this gradient norm the comparison is absolute.
pub const FD_FLOOR: f64 = 1e-7;

/// A flat list of tensors usable as a parameter tree.
#[derive(Debug, Clone)]
pub struct Inputs(pub Vec<Tensor<f64>>);

impl ParamTree<Tensor<f64>> for Inputs {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<f64>)) {
        for (i, t) in self.0.iter().enumerate() {
            f(format!("{prefix}{i}"), t);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<f64>)) {
        for (i, t) in self.0.iter_mut().enumerate() {
            f(format!("{prefix}{i}"), t);
        }
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed non-uniform weights for reducing a tensor to a scalar.
pub fn probe_weights(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed ^ 0x9e37);
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Reduces `v` to a scalar with [`probe_weights`].
pub fn probe(tape: &mut Tape<'_, f64>, v: Var, seed: u64) -> Var {
    let w = probe_weights(tape.value(v).len(), seed);
    tape.weighted_sum(v, &w)
}

/// Worst per-leaf relative error between reverse-mode and central-difference
/// gradients. `f` builds the scalar root on a tape and returns it together with
/// the leaf variables in `visit` order.
pub fn fd_check<P, F>(params: &P, f: F) -> (f64, String)
where
    P: ParamTree<Tensor<f64>> + Clone,
    F: for<'a> Fn(&mut Tape<'a, f64>, &'a P) -> (Var, Vec<Var>),
{
    let analytic: Vec<Tensor<f64>> = {
        let mut tape = Tape::new();
        let (root, leaves) = f(&mut tape, params);
        assert_eq!(tape.shape(root), [1, 1], "root must be scalar");
        let g = tape.backward(root);
        leaves.iter().map(|&v| g.tensor(&tape, v)).collect()
    };
    let eval = |p: &P| -> f64 {
        let mut tape = Tape::new();
        let (root, _) = f(&mut tape, p);
        tape.value(root).data()[0]
    };
    let names = params.names();
    let counts: Vec<usize> = params.leaves().iter().map(|t| t.len()).collect();
    let mut worst = (0.0f64, String::new());
    let mut work = params.clone();
    for (leaf, &count) in counts.iter().enumerate() {
        let mut numeric = vec![0.0; count];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = work.leaves()[leaf].data()[j];
            work.leaves_mut()[leaf].data_mut()[j] = orig + FD_EPS;
            let up = eval(&work);
            work.leaves_mut()[leaf].data_mut()[j] = orig - FD_EPS;
            let down = eval(&work);
            work.leaves_mut()[leaf].data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * FD_EPS);
        }
        let a = analytic[leaf].data();
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let an = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = an.max(nn);
        let err = if scale < FD_FLOOR { diff } else { diff / scale };
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, names[leaf].clone());
        }
    }
    worst
}

/// A random small candidate pool: perturbations of one base tour mixed with
/// unrelated permutations, so both filters and every SQI branch get exercised.
pub struct MetricCase {
    pub inst: mstsp::Instance64,
    pub tours: Vec<mstsp::Tour64>,
    pub delta1: f64,
    pub delta2: f64,
    pub ground_truth: Vec<mstsp::Tour64>,
}

pub fn random_metric_case(seed: u64) -> MetricCase {
    use rand::seq::SliceRandom;
    let mut r = rng(seed);
    let n = r.gen_range(4..=9);
    let inst = mstsp::instances::generate_uniform::<f64>(n, seed.wrapping_mul(31).wrapping_add(7)).expect("instance");
    let mut base: Vec<usize> = (0..n).collect();
    base.shuffle(&mut r);
    let count = r.gen_range(1..=14);
    let mut orders = Vec::with_capacity(count);
    for _ in 0..count {
        let mut o = base.clone();
        if r.gen_bool(0.25) {
            o.shuffle(&mut r);
        } else {
            for _ in 0..r.gen_range(0..3) {
                let i = r.gen_range(0..n);
                let j = r.gen_range(0..n);
                let (a, b) = (i.min(j), i.max(j));
                o[a..=b].reverse();
            }
        }
        if r.gen_bool(0.3) {
            o.rotate_left(r.gen_range(0..n));
        }
        orders.push(o);
    }
    let tours: Vec<mstsp::Tour64> = orders
        .into_iter()
        .map(|o| mstsp::instances::Tour::new(&inst, o).expect("tour"))
        .collect();
    let gt_count = r.gen_range(1..=tours.len().min(4));
    let ground_truth = tours.choose_multiple(&mut r, gt_count).cloned().collect();
    MetricCase {
        inst,
        tours,
        delta1: r.gen_range(0.02..0.6),
        delta2: r.gen_range(0.3..=1.0),
        ground_truth,
    }
}

/// Largest deviation between the library metrics and the reference on one case,
/// or a description of the structural mismatch.
pub fn compare_metric_case(case: &MetricCase) -> Result<f64, String> {
    use mstsp::metrics::{di, diff_index, filter_solutions, msqi, opt_index};
    let set = filter_solutions(case.tours.clone(), case.delta1, case.delta2).map_err(|e| e.to_string())?;
    let cands: Vec<(Vec<usize>, f64)> = case.tours.iter().map(|t| (t.order().to_vec(), t.length())).collect();
    let reference = reference::reference_set(&cands, case.delta1, case.delta2);
    let got: Vec<Vec<usize>> = set.tours().iter().map(|t| reference::canonical(t.order())).collect();
    if got != reference.orders {
        return Err(format!("kept tours differ: {got:?} vs {:?}", reference.orders));
    }
    let mut worst = 0.0f64;
    let mut note = |a: f64, b: f64| worst = worst.max((a - b).abs());
    let (m, sqi) = msqi(&set).map_err(|e| e.to_string())?;
    note(m, reference.msqi);
    for i in 0..set.len() {
        note(opt_index(i, &set).map_err(|e| e.to_string())?, reference.opt[i]);
        note(diff_index(i, &set).map_err(|e| e.to_string())?, reference.diff[i]);
        note(sqi[i], reference.sqi[i]);
        note(set.tours()[i].length(), reference.lengths[i]);
    }
    let gt: Vec<Vec<usize>> = case.ground_truth.iter().map(|t| t.order().to_vec()).collect();
    let d = di(&case.ground_truth, set.tours()).map_err(|e| e.to_string())?;
    note(d, reference::reference_di(&gt, &got, case.inst.n()));
    Ok(worst)
}
