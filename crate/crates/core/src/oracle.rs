//! Exhaustive enumeration of Hamiltonian cycles for small instances.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instances::{DistanceConvention, Instance, Tour};
use crate::scalar::Scalar;

pub use crate::instances::canonical;

pub const MAX_NODES: usize = 12;
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Every optimal tour of an instance, as canonical orders.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<S> {
    pub optimal_length: S,
    pub optima: Vec<Tour<S>>,
    pub tolerance: S,
    pub convention: DistanceConvention,
    /// Number of distinct cycles visited.
    pub cycles: u64,
}

/// `(n-1)!/2` for `n >= 3`.
pub fn cycle_count(n: usize) -> u64 {
    (2..n as u64).product::<u64>() / 2
}

struct Partition<S> {
    cycles: u64,
    best: S,
    candidates: Vec<(S, Vec<usize>)>,
}

struct Search<'a, S> {
    n: usize,
    d: &'a [S],
    tol: Option<S>,
    second: usize,
    path: Vec<usize>,
    used: Vec<bool>,
    out: Partition<S>,
}

impl<S: Scalar> Search<'_, S> {
    fn slack(&self, best: S) -> S {
        self.tol.unwrap_or_else(|| best * S::lit(DEFAULT_REL_TOL))
    }

    fn walk(&mut self, len: S) {
        let n = self.n;
        let last = *self.path.last().expect("path starts at node 0");
        if self.path.len() == n {
            if last < self.second {
                return;
            }
            let total = len + self.d[last * n];
            self.out.cycles += 1;
            if total < self.out.best {
                self.out.best = total;
                let limit = total + self.slack(total);
                self.out.candidates.retain(|(l, _)| *l <= limit);
            }
            if total <= self.out.best + self.slack(self.out.best) {
                self.out.candidates.push((total, self.path.clone()));
            }
            return;
        }
        for next in 1..n {
            if self.used[next] {
                continue;
            }
            self.used[next] = true;
            self.path.push(next);
            self.walk(len + self.d[last * n + next]);
            self.path.pop();
            self.used[next] = false;
        }
    }
}

/// Enumerates all `(n-1)!/2` cycles (node 0 first, second node below the last) and
/// keeps those within `tol` of the minimum. `tol = None` uses `1e-6 * optimum` for
/// real distances and `0` for rounded ones.
pub fn enumerate_optima<S: Scalar>(
    inst: &Instance<S>,
    tol: Option<S>,
    convention: DistanceConvention,
) -> Result<GroundTruth<S>> {
    let n = inst.n();
    if n > MAX_NODES {
        return Err(Error::SizeCap { n, cap: MAX_NODES });
    }
    if let Some(t) = tol {
        if !(t >= S::zero()) {
            return Err(Error::InvalidArgument(format!("tolerance must be non-negative, got {t}")));
        }
    }
    let first = inst.coords()[0];
    if inst.coords().iter().all(|c| *c == first) {
        return Err(Error::DegenerateInstance);
    }
    let inst = inst.reconvene(convention);
    let tol = tol.or(match convention {
        DistanceConvention::Rounded => Some(S::zero()),
        DistanceConvention::Real => None,
    });
    let d = inst.distances();

    let parts: Vec<Partition<S>> = (1..n)
        .into_par_iter()
        .map(|second| {
            let mut used = vec![false; n];
            used[0] = true;
            used[second] = true;
            let mut s = Search {
                n,
                d,
                tol,
                second,
                path: vec![0, second],
                used,
                out: Partition {
                    cycles: 0,
                    best: S::infinity(),
                    candidates: Vec::new(),
                },
            };
            s.walk(d[second]);
            s.out
        })
        .collect();

    let cycles: u64 = parts.iter().map(|p| p.cycles).sum();
    let best = parts.iter().map(|p| p.best).fold(S::infinity(), S::min);
    let slack = tol.unwrap_or(best * S::lit(DEFAULT_REL_TOL));
    let mut orders: Vec<Vec<usize>> = parts
        .into_iter()
        .flat_map(|p| p.candidates)
        .filter(|(l, _)| *l <= best + slack)
        .map(|(_, o)| o)
        .collect();
    orders.sort();
    let optima = orders
        .into_iter()
        .map(|o| Tour::new(&inst, o))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth {
        optimal_length: best,
        optima,
        tolerance: slack,
        convention,
        cycles,
    })
}

impl<S: Scalar> GroundTruth<S> {
    /// `optimal <length>` followed by one canonical tour per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("optimal {}\n", self.optimal_length);
        for t in &self.optima {
            let line: Vec<String> = t.order().iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Reads a ground-truth file; tours are re-scored on `inst`.
pub fn load_ground_truth<S: Scalar>(path: impl AsRef<Path>, inst: &Instance<S>) -> Result<(S, Vec<Tour<S>>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text, path, inst)
}

pub(crate) fn parse_ground_truth<S: Scalar>(
    text: &str,
    path: &Path,
    inst: &Instance<S>,
) -> Result<(S, Vec<Tour<S>>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (i, head) = lines.next().ok_or_else(|| err(1, "empty ground-truth file".into()))?;
    let mut parts = head.split_whitespace();
    if parts.next() != Some("optimal") {
        return Err(err(i + 1, "expected `optimal <length>`".into()));
    }
    let len: f64 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err(i + 1, "missing or malformed optimal length".into()))?;
    let mut tours = Vec::new();
    for (i, line) in lines {
        let order = line
            .split_whitespace()
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(i + 1, format!("bad node index: {e}")))?;
        let tour = Tour::new(inst, order).map_err(|e| err(i + 1, e.to_string()))?;
        tours.push(tour);
    }
    if tours.is_empty() {
        return Err(err(i + 1, "ground truth lists no tours".into()));
    }
    Ok((S::lit(len), tours))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::generate_uniform;

    fn square() -> Instance<f64> {
        Instance::new("square", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn unit_square() {
        let gt = enumerate_optima(&square(), None, DistanceConvention::Real).unwrap();
        assert_eq!(gt.cycles, 3);
        assert_eq!(gt.optimal_length, 4.0);
        assert_eq!(gt.optima.len(), 1);
        assert_eq!(gt.optima[0].order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn counts_match_factorial() {
        for n in 3..=9 {
            let inst = generate_uniform::<f64>(n, n as u64).unwrap();
            let gt = enumerate_optima(&inst, None, DistanceConvention::Real).unwrap();
            assert_eq!(gt.cycles, cycle_count(n), "n = {n}");
            for t in &gt.optima {
                assert_eq!(t.order(), canonical(t.order()).as_slice());
                let l = inst.tour_length(t.order()).unwrap();
                assert!((l - gt.optimal_length).abs() <= gt.tolerance + 1e-12);
            }
        }
    }

    #[test]
    fn matches_naive_permutation_scan() {
        let inst = generate_uniform::<f64>(7, 99).unwrap();
        let gt = enumerate_optima(&inst, None, DistanceConvention::Real).unwrap();
        let mut best = f64::INFINITY;
        let mut rest: Vec<usize> = (1..7).collect();
        permute(&mut rest, 0, &mut |p| {
            let mut o = vec![0];
            o.extend_from_slice(p);
            best = best.min(inst.tour_length(&o).unwrap());
        });
        assert!((best - gt.optimal_length).abs() < 1e-12);
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn size_cap_and_degenerate() {
        let inst = generate_uniform::<f64>(13, 0).unwrap();
        assert!(matches!(
            enumerate_optima(&inst, None, DistanceConvention::Real),
            Err(Error::SizeCap { n: 13, cap: 12 })
        ));
        let flat = Instance::new("flat", vec![[1.0, 1.0]; 4]).unwrap();
        assert!(matches!(
            enumerate_optima(&flat, None, DistanceConvention::Real),
            Err(Error::DegenerateInstance)
        ));
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical(&[2, 0, 1]), vec![0, 1, 2]);
        assert_eq!(canonical(&[0, 2, 1]), vec![0, 1, 2]);
        let t = [3, 1, 4, 0, 2, 5];
        assert_eq!(canonical(&canonical(&t)), canonical(&t));
    }

    #[test]
    fn text_round_trip() {
        let inst = square();
        let gt = enumerate_optima(&inst, None, DistanceConvention::Real).unwrap();
        let text = gt.to_text();
        assert_eq!(text, "optimal 4\n0 1 2 3\n");
        let (len, tours) = parse_ground_truth(&text, Path::new("g.txt"), &inst).unwrap();
        assert_eq!(len, 4.0);
        assert_eq!(tours, gt.optima);
        assert!(parse_ground_truth("optimal x\n", Path::new("g"), &inst).is_err());
    }
}
