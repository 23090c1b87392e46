//! Problem instances, tours and coordinate transforms.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How an edge weight is derived from two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceConvention {
    /// Plain Euclidean distance.
    #[default]
    Real,
    /// Euclidean distance rounded to the nearest integer per edge (TSPLIB `EUC_2D`).
    Rounded,
}

impl DistanceConvention {
    pub fn apply<S: Scalar>(self, d: S) -> S {
        match self {
            DistanceConvention::Real => d,
            DistanceConvention::Rounded => (d + S::lit(0.5)).floor(),
        }
    }
}

impl FromStr for DistanceConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(DistanceConvention::Real),
            "rounded" => Ok(DistanceConvention::Rounded),
            other => Err(Error::InvalidArgument(format!(
                "unknown distance convention {other:?} (expected real or rounded)"
            ))),
        }
    }
}

impl fmt::Display for DistanceConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceConvention::Real => "real",
            DistanceConvention::Rounded => "rounded",
        })
    }
}

/// A Euclidean TSP instance with a cached distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S> {
    id: String,
    coords: Vec<[S; 2]>,
    convention: DistanceConvention,
    dist: Vec<S>,
}

impl<S: Scalar> Instance<S> {
    pub fn new(id: impl Into<String>, coords: Vec<[S; 2]>) -> Result<Self> {
        Self::with_convention(id, coords, DistanceConvention::Real)
    }

    pub fn with_convention(
        id: impl Into<String>,
        coords: Vec<[S; 2]>,
        convention: DistanceConvention,
    ) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::InvalidSize(format!(
                "an instance needs at least 3 nodes, got {}",
                coords.len()
            )));
        }
        if let Some(i) = coords
            .iter()
            .position(|c| !(c[0].is_finite() && c[1].is_finite()))
        {
            return Err(Error::NonFinite(format!("coordinate of node {i}")));
        }
        let dist = distance_matrix(&coords, convention);
        Ok(Instance {
            id: id.into(),
            coords,
            convention,
            dist,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[S; 2]] {
        &self.coords
    }

    pub fn convention(&self) -> DistanceConvention {
        self.convention
    }

    /// Same coordinates, different distance convention.
    pub fn reconvene(&self, convention: DistanceConvention) -> Self {
        if convention == self.convention {
            return self.clone();
        }
        Instance {
            id: self.id.clone(),
            coords: self.coords.clone(),
            convention,
            dist: distance_matrix(&self.coords, convention),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    #[inline]
    /// `index x y` listing with 1-based indices, readable by [`load_instance`].
    pub fn to_listing(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.coords.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", i + 1, c[0], c[1]));
        }
        out
    }

    pub fn dist(&self, i: usize, j: usize) -> S {
        self.dist[i * self.n() + j]
    }

    /// Row-major `n * n` distance matrix.
    pub fn distances(&self) -> &[S] {
        &self.dist
    }

    /// Length of the closed tour visiting `order`, validating that it is a permutation.
    pub fn tour_length(&self, order: &[usize]) -> Result<S> {
        check_permutation(order, self.n())?;
        Ok(self.cycle_length_unchecked(order))
    }

    pub(crate) fn cycle_length_unchecked(&self, order: &[usize]) -> S {
        let n = order.len();
        let mut total = S::zero();
        for k in 0..n {
            total += self.dist(order[k], order[(k + 1) % n]);
        }
        total
    }
}

fn distance_matrix<S: Scalar>(coords: &[[S; 2]], convention: DistanceConvention) -> Vec<S> {
    let n = coords.len();
    let mut dist = vec![S::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let d = convention.apply((dx * dx + dy * dy).sqrt());
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    dist
}

/// `tour_length` as a free function.
pub fn tour_length<S: Scalar>(inst: &Instance<S>, order: &[usize]) -> Result<S> {
    inst.tour_length(order)
}

pub fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidTour(format!(
            "expected {n} nodes, got {}",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n {
            return Err(Error::InvalidTour(format!("node {v} out of range 0..{n}")));
        }
        if seen[v] {
            return Err(Error::InvalidTour(format!("node {v} visited twice")));
        }
        seen[v] = true;
    }
    Ok(())
}

/// Canonical undirected edge set of a closed tour: sorted `(min, max)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeSet(Vec<(usize, usize)>);

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn contains(&self, edge: (usize, usize)) -> bool {
        let e = (edge.0.min(edge.1), edge.0.max(edge.1));
        self.0.binary_search(&e).is_ok()
    }

    /// Number of edges present in both sets.
    pub fn shared(&self, other: &EdgeSet) -> usize {
        let (mut i, mut j, mut count) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }
}

/// Edge set of the closed tour `order`. Invariant under rotation and reversal.
pub fn edge_set(order: &[usize]) -> EdgeSet {
    let n = order.len();
    let mut edges: Vec<(usize, usize)> = (0..n)
        .map(|k| {
            let (a, b) = (order[k], order[(k + 1) % n]);
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    EdgeSet(edges)
}

/// Rotation so node 0 leads, then the direction whose second entry is smaller than the last.
pub fn canonical(order: &[usize]) -> Vec<usize> {
    let n = order.len();
    if n == 0 {
        return Vec::new();
    }
    let start = order.iter().position(|&v| v == 0).unwrap_or(0);
    let mut out: Vec<usize> = (0..n).map(|k| order[(start + k) % n]).collect();
    if n > 2 && out[1] > out[n - 1] {
        out[1..].reverse();
    }
    out
}

/// A validated Hamiltonian cycle with its length and edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour<S> {
    order: Vec<usize>,
    length: S,
    edges: EdgeSet,
}

impl<S: Scalar> Tour<S> {
    pub fn new(inst: &Instance<S>, order: Vec<usize>) -> Result<Self> {
        let length = inst.tour_length(&order)?;
        let edges = edge_set(&order);
        Ok(Tour {
            order,
            length,
            edges,
        })
    }

    /// Builds a tour whose length has already been computed by the caller.
    #[cfg(test)]
    pub(crate) fn from_parts(order: Vec<usize>, length: S) -> Self {
        let edges = edge_set(&order);
        Tour {
            order,
            length,
            edges,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn length(&self) -> S {
        self.length
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn canonical_order(&self) -> Vec<usize> {
        canonical(&self.order)
    }
}

/// Draws `n` points i.i.d. uniform on the unit square.
pub fn generate_uniform<S: Scalar>(n: usize, seed: u64) -> Result<Instance<S>> {
    if n < 3 {
        return Err(Error::InvalidSize(format!(
            "an instance needs at least 3 nodes, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| {
            let x: f64 = rng.gen();
            let y: f64 = rng.gen();
            [S::lit(x), S::lit(y)]
        })
        .collect();
    Instance::new(format!("uniform-n{n}-s{seed}"), coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AffineKind {
    Translation,
    Rotation,
    Scaling,
    Mirroring,
    Mixture,
}

impl AffineKind {
    pub const ALL: [AffineKind; 5] = [
        AffineKind::Translation,
        AffineKind::Rotation,
        AffineKind::Scaling,
        AffineKind::Mirroring,
        AffineKind::Mixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AffineKind::Translation => "translation",
            AffineKind::Rotation => "rotation",
            AffineKind::Scaling => "scaling",
            AffineKind::Mirroring => "mirroring",
            AffineKind::Mixture => "mixture",
        }
    }
}

/// Which transform to apply; parameters left as `None` are drawn from the seed
/// (shift uniform in [-10, 10]², angle uniform in [0, 2π)); scale defaults to 100.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSpec<S> {
    pub kind: AffineKind,
    pub shift: Option<[S; 2]>,
    pub angle: Option<S>,
    pub scale: Option<S>,
}

impl<S: Scalar> AffineSpec<S> {
    pub fn random(kind: AffineKind) -> Self {
        AffineSpec {
            kind,
            shift: None,
            angle: None,
            scale: None,
        }
    }

    pub fn translation(dx: S, dy: S) -> Self {
        AffineSpec {
            shift: Some([dx, dy]),
            ..Self::random(AffineKind::Translation)
        }
    }

    pub fn rotation(angle: S) -> Self {
        AffineSpec {
            angle: Some(angle),
            ..Self::random(AffineKind::Rotation)
        }
    }

    pub fn scaling(scale: S) -> Self {
        AffineSpec {
            scale: Some(scale),
            ..Self::random(AffineKind::Scaling)
        }
    }

    pub fn mirroring() -> Self {
        Self::random(AffineKind::Mirroring)
    }

    /// Scale factor actually used (explicit or the default of 100).
    pub fn effective_scale(&self) -> S {
        self.scale.unwrap_or_else(|| S::lit(100.0))
    }
}

pub fn translate<S: Scalar>(coords: &[[S; 2]], shift: [S; 2]) -> Vec<[S; 2]> {
    coords
        .iter()
        .map(|c| [c[0] + shift[0], c[1] + shift[1]])
        .collect()
}

/// Rotation by `angle` radians about the centroid of `coords`.
pub fn rotate<S: Scalar>(coords: &[[S; 2]], angle: S) -> Vec<[S; 2]> {
    let n = S::from_count(coords.len());
    let cx = coords.iter().map(|c| c[0]).sum::<S>() / n;
    let cy = coords.iter().map(|c| c[1]).sum::<S>() / n;
    let (sin, cos) = angle.sin_cos();
    coords
        .iter()
        .map(|c| {
            let (x, y) = (c[0] - cx, c[1] - cy);
            [cx + cos * x - sin * y, cy + sin * x + cos * y]
        })
        .collect()
}

pub fn scale<S: Scalar>(coords: &[[S; 2]], s: S) -> Vec<[S; 2]> {
    coords.iter().map(|c| [c[0] * s, c[1] * s]).collect()
}

/// Swaps x and y of every node.
pub fn mirror<S: Copy>(coords: &[[S; 2]]) -> Vec<[S; 2]> {
    coords.iter().map(|c| [c[1], c[0]]).collect()
}

/// Applies `spec` to `inst`. Mixture composes translation, rotation, scaling, mirroring in that order.
pub fn apply_affine<S: Scalar>(
    inst: &Instance<S>,
    spec: &AffineSpec<S>,
    seed: u64,
) -> Result<Instance<S>> {
    let s = spec.effective_scale();
    if !(s > S::zero()) || !s.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "scale factor must be positive and finite, got {s}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = spec.shift.unwrap_or_else(|| {
        [
            S::lit(rng.gen_range(-10.0..=10.0)),
            S::lit(rng.gen_range(-10.0..=10.0)),
        ]
    });
    let angle = spec
        .angle
        .unwrap_or_else(|| S::lit(rng.gen_range(0.0..std::f64::consts::TAU)));

    let c = inst.coords();
    let out = match spec.kind {
        AffineKind::Translation => translate(c, shift),
        AffineKind::Rotation => rotate(c, angle),
        AffineKind::Scaling => scale(c, s),
        AffineKind::Mirroring => mirror(c),
        AffineKind::Mixture => mirror(&scale(&rotate(&translate(c, shift), angle), s)),
    };
    Instance::with_convention(
        format!("{}-{}", inst.id(), spec.kind.name()),
        out,
        inst.convention(),
    )
}

/// Loads an instance from either an `index x y` listing or a TSPLIB `EUC_2D` file.
pub fn load_instance<S: Scalar>(path: impl AsRef<Path>) -> Result<Instance<S>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".to_string());
    parse_instance(&text, &stem, path)
}

pub(crate) fn parse_instance<S: Scalar>(text: &str, id: &str, path: &Path) -> Result<Instance<S>> {
    let looks_tsplib = text.lines().any(|l| {
        let t = l.trim();
        t.starts_with("NODE_COORD_SECTION") || t.starts_with("DIMENSION")
    });
    let (name, coords) = if looks_tsplib {
        parse_tsplib(text, path)?
    } else {
        (None, parse_listing(text, path)?)
    };
    Instance::new(name.unwrap_or_else(|| id.to_string()), coords)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_node_line<S: Scalar>(
    line: &str,
    lineno: usize,
    path: &Path,
) -> Result<(usize, [S; 2])> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(
            path,
            lineno,
            format!("expected `index x y`, found {} fields", fields.len()),
        ));
    }
    let index: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(path, lineno, format!("bad node index {:?}", fields[0])))?;
    let mut xy = [S::zero(); 2];
    for (k, f) in fields[1..].iter().enumerate() {
        let v: f64 = f
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad coordinate {f:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(path, lineno, format!("non-finite coordinate {f:?}")));
        }
        xy[k] = S::lit(v);
    }
    Ok((index, xy))
}

/// Collects nodes keyed by their 1-based index and checks the indices are exactly `1..=n`.
fn assemble_nodes<S: Scalar>(
    nodes: Vec<(usize, [S; 2], usize)>,
    path: &Path,
) -> Result<Vec<[S; 2]>> {
    let mut by_index: HashMap<usize, usize> = HashMap::new();
    for (k, &(idx, _, lineno)) in nodes.iter().enumerate() {
        if idx == 0 {
            return Err(parse_err(path, lineno, "node indices are 1-based"));
        }
        if by_index.insert(idx, k).is_some() {
            return Err(parse_err(path, lineno, format!("duplicate node index {idx}")));
        }
    }
    let n = nodes.len();
    let mut coords = Vec::with_capacity(n);
    for idx in 1..=n {
        match by_index.get(&idx) {
            Some(&k) => coords.push(nodes[k].1),
            None => {
                let last = nodes.last().map(|t| t.2).unwrap_or(0);
                return Err(parse_err(
                    path,
                    last,
                    format!("node indices are not contiguous: {idx} missing"),
                ));
            }
        }
    }
    Ok(coords)
}

fn parse_listing<S: Scalar>(text: &str, path: &Path) -> Result<Vec<[S; 2]>> {
    let mut nodes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (idx, xy) = parse_node_line(line, i + 1, path)?;
        nodes.push((idx, xy, i + 1));
    }
    assemble_nodes(nodes, path)
}

fn parse_tsplib<S: Scalar>(text: &str, path: &Path) -> Result<(Option<String>, Vec<[S; 2]>)> {
    let mut name = None;
    let mut dimension: Option<usize> = None;
    let mut in_coords = false;
    let mut nodes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if line.starts_with("NODE_COORD_SECTION") {
            in_coords = true;
            continue;
        }
        if in_coords {
            let (idx, xy) = parse_node_line(line, lineno, path)?;
            nodes.push((idx, xy, lineno));
            continue;
        }
        let (key, value) = match line.split_once(':') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return Err(parse_err(path, lineno, format!("unexpected line {line:?}"))),
        };
        match key {
            "NAME" => name = Some(value.to_string()),
            "TYPE" | "COMMENT" => {}
            "DIMENSION" => {
                dimension = Some(value.parse().map_err(|_| {
                    parse_err(path, lineno, format!("bad DIMENSION {value:?}"))
                })?)
            }
            "EDGE_WEIGHT_TYPE" => {
                if value != "EUC_2D" {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("unsupported EDGE_WEIGHT_TYPE {value:?} (only EUC_2D)"),
                    ));
                }
            }
            other => {
                return Err(parse_err(path, lineno, format!("unsupported key {other:?}")));
            }
        }
    }
    if !in_coords {
        return Err(parse_err(path, text.lines().count(), "missing NODE_COORD_SECTION"));
    }
    let coords = assemble_nodes(nodes, path)?;
    if let Some(d) = dimension {
        if d != coords.len() {
            return Err(parse_err(
                path,
                text.lines().count(),
                format!("DIMENSION {d} but {} nodes listed", coords.len()),
            ));
        }
    }
    Ok((name, coords))
}
