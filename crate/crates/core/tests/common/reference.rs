//! Direct set-arithmetic re-implementation of the solution-set metrics, written
//! without touching the library's metric code.

use std::collections::BTreeSet;

pub type Edges = BTreeSet<(usize, usize)>;

pub fn edges(order: &[usize]) -> Edges {
    let n = order.len();
    (0..n)
        .map(|i| {
            let (a, b) = (order[i], order[(i + 1) % n]);
            (a.min(b), a.max(b))
        })
        .collect()
}

pub fn canonical(order: &[usize]) -> Vec<usize> {
    let n = order.len();
    let at = order.iter().position(|&v| v == 0).expect("node 0 present");
    let fwd: Vec<usize> = (0..n).map(|k| order[(at + k) % n]).collect();
    let bwd: Vec<usize> = (0..n).map(|k| order[(at + n - k) % n]).collect();
    fwd.min(bwd)
}

pub fn sim(a: &Edges, b: &Edges, n: usize) -> f64 {
    a.intersection(b).count() as f64 / n as f64
}

pub fn u(s: f64) -> f64 {
    if s <= 0.5 {
        1.0
    } else {
        2.0 * (1.0 - s)
    }
}

#[derive(Debug, Clone)]
pub struct RefSet {
    pub orders: Vec<Vec<usize>>,
    pub lengths: Vec<f64>,
    pub opt: Vec<f64>,
    pub diff: Vec<f64>,
    pub sqi: Vec<f64>,
    pub msqi: f64,
}

/// `(order, length)` candidates; lengths are supplied by the caller.
pub fn reference_set(cands: &[(Vec<usize>, f64)], d1: f64, d2: f64) -> RefSet {
    let n = cands[0].0.len();
    let mut sorted: Vec<(Vec<usize>, f64)> = cands.iter().map(|(o, l)| (canonical(o), *l)).collect();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    let mut seen: Vec<Edges> = Vec::new();
    let mut unique = Vec::new();
    for (o, l) in sorted {
        let e = edges(&o);
        if !seen.contains(&e) {
            seen.push(e);
            unique.push((o, l));
        }
    }
    let best = unique[0].1;
    let mut kept: Vec<(Vec<usize>, f64)> = vec![unique[0].clone()];
    for (o, l) in unique.into_iter().skip(1) {
        if l >= best * (1.0 + d1) {
            continue;
        }
        let e = edges(&o);
        if kept.iter().all(|(k, _)| sim(&edges(k), &e, n) < d2) {
            kept.push((o, l));
        }
    }
    let m = kept.len();
    let es: Vec<Edges> = kept.iter().map(|(o, _)| edges(o)).collect();
    let opt: Vec<f64> = kept.iter().map(|(_, l)| ((1.0 + d1) * best - l) / (d1 * best)).collect();
    let diff: Vec<f64> = (0..m)
        .map(|i| {
            if m == 1 {
                0.0
            } else {
                (0..m).filter(|&j| j != i).map(|j| u(sim(&es[i], &es[j], n))).sum::<f64>() / (m - 1) as f64
            }
        })
        .collect();
    let sqi: Vec<f64> = opt
        .iter()
        .zip(&diff)
        .map(|(&o, &d)| if o == 0.0 || d == 0.0 { 0.0 } else { 2.0 / (1.0 / o + 1.0 / d) })
        .collect();
    let msqi = if sqi.iter().any(|&v| v == 0.0) {
        0.0
    } else {
        m as f64 / sqi.iter().map(|v| 1.0 / v).sum::<f64>()
    };
    RefSet {
        orders: kept.iter().map(|(o, _)| o.clone()).collect(),
        lengths: kept.iter().map(|(_, l)| *l).collect(),
        opt,
        diff,
        sqi,
        msqi,
    }
}

pub fn reference_di(gt: &[Vec<usize>], found: &[Vec<usize>], n: usize) -> f64 {
    if found.is_empty() {
        return 0.0;
    }
    let total: f64 = gt
        .iter()
        .map(|g| {
            let ge = edges(g);
            found.iter().map(|f| sim(&ge, &edges(f), n)).fold(0.0, f64::max)
        })
        .sum();
    total / gt.len() as f64
}
