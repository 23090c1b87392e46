//! Relativization filter: maps node coordinates to a representation that is
//! unchanged by translation, rotation and uniform scaling of the instance.
//!
//! The pipeline is reorder, zero-mean, polar conversion, polar relativization
//! (normalise radius, sort by radius, subtract the leading angle) and conversion
//! back to Cartesian coordinates. Mirroring is not absorbed here; callers solve
//! the instance and its x/y swap ([`mirror_augment`]) and keep the better result.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output of [`rf`]: filtered coordinates and, for each filtered position, the original node index.
#[derive(Debug, Clone, PartialEq)]
pub struct RfOutput<S> {
    pub coords: Vec<[S; 2]>,
    pub perm: Vec<usize>,
}

impl<S> RfOutput<S> {
    /// `inverse()[original] = filtered position`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (pos, &orig) in self.perm.iter().enumerate() {
            inv[orig] = pos;
        }
        inv
    }
}

/// Sorts by y descending, then x descending, then original index.
pub fn reorder<S: Scalar>(coords: &[[S; 2]]) -> (Vec<[S; 2]>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..coords.len()).collect();
    perm.sort_by(|&a, &b| {
        let (ca, cb) = (coords[a], coords[b]);
        cmp_desc(ca[1], cb[1])
            .then_with(|| cmp_desc(ca[0], cb[0]))
            .then_with(|| a.cmp(&b))
    });
    (perm.iter().map(|&i| coords[i]).collect(), perm)
}

fn cmp_desc<S: Scalar>(a: S, b: S) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

pub fn zero_mean<S: Scalar>(coords: &[[S; 2]]) -> Vec<[S; 2]> {
    if coords.is_empty() {
        return Vec::new();
    }
    let n = S::from_count(coords.len());
    let mx = coords.iter().map(|c| c[0]).sum::<S>() / n;
    let my = coords.iter().map(|c| c[1]).sum::<S>() / n;
    coords.iter().map(|c| [c[0] - mx, c[1] - my]).collect()
}

/// `(ρ, θ)` with θ in [-π/2, 3π/2): `atan(y/x)`, plus π left of the y axis.
pub fn to_polar<S: Scalar>(coords: &[[S; 2]]) -> Vec<[S; 2]> {
    coords
        .iter()
        .map(|&[x, y]| {
            let rho = (x * x + y * y).sqrt();
            let theta = if x > S::zero() {
                (y / x).atan()
            } else if x < S::zero() {
                (y / x).atan() + S::PI()
            } else if y > S::zero() {
                S::FRAC_PI_2()
            } else if y < S::zero() {
                -S::FRAC_PI_2()
            } else {
                S::zero()
            };
            [rho, theta]
        })
        .collect()
}

/// Wraps an angle into [-π, π).
pub fn wrap_angle<S: Scalar>(mut a: S) -> S {
    let two_pi = S::TAU();
    while a >= S::PI() {
        a -= two_pi;
    }
    while a < -S::PI() {
        a += two_pi;
    }
    a
}

/// Normalises radii by the maximum, sorts by radius descending (ties: angle
/// ascending, then position) and subtracts the leading node's angle.
pub fn relativize_polar<S: Scalar>(polar: &[[S; 2]]) -> Result<(Vec<[S; 2]>, Vec<usize>)> {
    let rho_max = polar.iter().map(|p| p[0]).fold(S::zero(), S::max);
    if !(rho_max > S::zero()) {
        return Err(Error::DegenerateInstance);
    }
    let normalised: Vec<[S; 2]> = polar.iter().map(|p| [p[0] / rho_max, p[1]]).collect();
    let mut perm: Vec<usize> = (0..polar.len()).collect();
    perm.sort_by(|&a, &b| {
        let (pa, pb) = (normalised[a], normalised[b]);
        cmp_desc(pa[0], pb[0])
            .then_with(|| pa[1].partial_cmp(&pb[1]).unwrap_or(Ordering::Equal))
            .then_with(|| a.cmp(&b))
    });
    let theta0 = normalised[perm[0]][1];
    let out = perm
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let [rho, theta] = normalised[i];
            let rel = if k == 0 { S::zero() } else { wrap_angle(theta - theta0) };
            [rho, rel]
        })
        .collect();
    Ok((out, perm))
}

/// Full filter. `perm[k]` is the original index of the node at filtered position `k`.
pub fn rf<S: Scalar>(coords: &[[S; 2]]) -> Result<RfOutput<S>> {
    if coords.len() < 3 {
        return Err(Error::InvalidSize(format!(
            "the filter needs at least 3 nodes, got {}",
            coords.len()
        )));
    }
    let (sorted, first) = reorder(coords);
    let centred = zero_mean(&sorted);
    let polar = to_polar(&centred);
    let (rel, second) = relativize_polar(&polar)?;
    let coords = rel
        .iter()
        .map(|&[rho, theta]| {
            let (sin, cos) = theta.sin_cos();
            [rho * cos, rho * sin]
        })
        .collect();
    let perm = second.iter().map(|&k| first[k]).collect();
    Ok(RfOutput { coords, perm })
}

/// The instance and its x/y-swapped twin.
pub fn mirror_augment<S: Copy>(coords: &[[S; 2]]) -> (Vec<[S; 2]>, Vec<[S; 2]>) {
    (coords.to_vec(), crate::instances::mirror(coords))
}
