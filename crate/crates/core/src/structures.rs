//! Structured output families, latent spaces and their combinatorics.
//!
//! Four output families are supported:
//!
//! * directed spanning trees (arborescences) over `v` labelled nodes, any root;
//! * directed acyclic graphs over `v` nodes with in-degree at most `b` and the
//!   maximal number of edges `b(2v-b-1)/2`;
//! * cardinality-constrained sets of `b` elements out of `v`;
//! * permutations of `v` elements.
//!
//! Graph outputs are stored as bitmasks over the `v(v-1)` candidate directed
//! edges; the bit index of edge `i->j` is `i*(v-1) + j - [j > i]`, so mask
//! order and sorted edge-list order agree.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use itertools::Itertools;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum output-space cardinality that will be enumerated.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Number of cells in the affine latent grid (3 values for each of 4 entries).
pub const AFFINE_GRID_CELLS: usize = 81;

const GRID_DIAG: [f64; 3] = [0.8, 1.0, 1.2];
const GRID_OFF: [f64; 3] = [-0.2, 0.0, 0.2];

/// Largest buffer of candidates that one output can use.
pub const MAX_PRESENT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    SpanningTree,
    Dag,
    CardSet,
    Permutation,
}

impl StructureKind {
    pub fn name(self) -> &'static str {
        match self {
            StructureKind::SpanningTree => "tree",
            StructureKind::Dag => "dag",
            StructureKind::CardSet => "set",
            StructureKind::Permutation => "perm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LatentKind {
    /// A one-hot vector of length `dim`; the latent is the hot index.
    OneHotBit { dim: usize },
    /// A 2x2 affine matrix on a 3^4 grid.
    AffineGrid,
}

/// Distortion used by a space. `Structural` is the family's own
/// edge/element/position count; `Binary` is `1[y != y']`; `Zero` is the
/// identically zero distortion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    #[default]
    Structural,
    Binary,
    Zero,
}

/// A structured output in canonical encoding.
///
/// The derived ordering is the canonical order used for enumeration and for
/// every tie-break.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Output {
    /// Bitmask over candidate directed edges (trees and DAGs).
    Edges(u64),
    /// Sorted element list (cardinality-constrained sets).
    Subset(Vec<u8>),
    /// Image sequence `y_0, ..., y_{v-1}`.
    Perm(Vec<u8>),
}

/// Index of a latent value in its space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Latent(pub usize);

/// One `(y, h)` pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StructuredPoint {
    pub output: Output,
    pub latent: Latent,
}

impl StructuredPoint {
    pub fn new(output: Output, latent: Latent) -> Self {
        Self { output, latent }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct SpaceParams {
    kind: StructureKind,
    v: usize,
    #[serde(default)]
    b: usize,
    latent: LatentKind,
    #[serde(default)]
    distortion: DistortionKind,
}

/// A combinatorial output family with its latent space.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "SpaceParams", into = "SpaceParams")]
pub struct StructureSpace {
    params: SpaceParams,
    outputs: Arc<OnceLock<Arc<[Output]>>>,
}

impl PartialEq for StructureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl fmt::Debug for StructureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructureSpace")
            .field("kind", &self.params.kind)
            .field("v", &self.params.v)
            .field("b", &self.params.b)
            .field("latent", &self.params.latent)
            .field("distortion", &self.params.distortion)
            .finish()
    }
}

impl TryFrom<SpaceParams> for StructureSpace {
    type Error = Error;

    fn try_from(params: SpaceParams) -> Result<Self> {
        StructureSpace::new(params.kind, params.v, params.b, params.latent)
            .map(|s| s.with_distortion(params.distortion))
    }
}

impl From<StructureSpace> for SpaceParams {
    fn from(s: StructureSpace) -> Self {
        s.params
    }
}

/// Fixed-capacity list of the candidates used by one output.
#[derive(Clone, Copy)]
pub struct Present {
    len: usize,
    items: [u16; MAX_PRESENT],
}

impl std::ops::Deref for Present {
    type Target = [u16];
    fn deref(&self) -> &[u16] {
        &self.items[..self.len]
    }
}

impl Present {
    fn new() -> Self {
        Self { len: 0, items: [0; MAX_PRESENT] }
    }
    fn push(&mut self, c: usize) {
        self.items[self.len] = c as u16;
        self.len += 1;
    }
}

pub fn edge_index(v: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < v && j < v);
    i * (v - 1) + if j > i { j - 1 } else { j }
}

pub fn edge_endpoints(v: usize, e: usize) -> (usize, usize) {
    let i = e / (v - 1);
    let r = e % (v - 1);
    (i, if r >= i { r + 1 } else { r })
}

fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let b = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(b)
        }
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

impl StructureSpace {
    /// Builds a space, checking the family's parameter preconditions.
    pub fn new(kind: StructureKind, v: usize, b: usize, latent: LatentKind) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidSpaceParams(msg));
        match kind {
            StructureKind::SpanningTree => {
                if !(2..=8).contains(&v) {
                    return bad(format!("spanning trees need 2 <= v <= 8, got v={v}"));
                }
            }
            StructureKind::Dag => {
                if !(4..=8).contains(&v) {
                    return bad(format!("DAGs need 4 <= v <= 8, got v={v}"));
                }
                if b < 2 || b + 2 > v {
                    return bad(format!("DAGs need 2 <= b <= v-2, got v={v}, b={b}"));
                }
            }
            StructureKind::CardSet => {
                if v > MAX_PRESENT {
                    return bad(format!("sets need v <= {MAX_PRESENT}, got v={v}"));
                }
                if b == 0 || 2 * b > v {
                    return bad(format!("sets need 1 <= b <= v/2, got v={v}, b={b}"));
                }
            }
            StructureKind::Permutation => {
                if !(2..=MAX_PRESENT).contains(&v) {
                    return bad(format!("permutations need 1 < v <= {MAX_PRESENT}, got v={v}"));
                }
            }
        }
        if let LatentKind::OneHotBit { dim } = latent {
            if dim == 0 {
                return bad("one-hot latent dimension must be positive".into());
            }
        }
        let b = match kind {
            StructureKind::Dag | StructureKind::CardSet => b,
            _ => 0,
        };
        Ok(Self {
            params: SpaceParams { kind, v, b, latent, distortion: DistortionKind::Structural },
            outputs: Arc::new(OnceLock::new()),
        })
    }

    /// Candidate-pair latent of dimension `|E|^2`, as used by the synthetic map.
    fn default_latent(kind: StructureKind, v: usize) -> LatentKind {
        let e = Self::candidate_count_for(kind, v);
        LatentKind::OneHotBit { dim: e * e }
    }

    pub fn spanning_tree(v: usize) -> Result<Self> {
        Self::new(StructureKind::SpanningTree, v, 0, Self::default_latent(StructureKind::SpanningTree, v))
    }

    pub fn dag(v: usize, b: usize) -> Result<Self> {
        Self::new(StructureKind::Dag, v, b, Self::default_latent(StructureKind::Dag, v))
    }

    pub fn card_set(v: usize, b: usize) -> Result<Self> {
        Self::new(StructureKind::CardSet, v, b, Self::default_latent(StructureKind::CardSet, v))
    }

    pub fn permutation(v: usize) -> Result<Self> {
        Self::new(StructureKind::Permutation, v, 0, Self::default_latent(StructureKind::Permutation, v))
    }

    /// Same family with a different latent space.
    pub fn with_latent(&self, latent: LatentKind) -> Result<Self> {
        Self::new(self.params.kind, self.params.v, self.params.b, latent)
            .map(|s| s.with_distortion(self.params.distortion))
    }

    /// Same family and latent space with a different distortion.
    pub fn with_distortion(mut self, distortion: DistortionKind) -> Self {
        self.params.distortion = distortion;
        self
    }

    pub fn kind(&self) -> StructureKind {
        self.params.kind
    }
    pub fn v(&self) -> usize {
        self.params.v
    }
    pub fn b(&self) -> usize {
        self.params.b
    }
    pub fn latent_kind(&self) -> LatentKind {
        self.params.latent
    }
    pub fn distortion_kind(&self) -> DistortionKind {
        self.params.distortion
    }

    /// Short label such as `tree(v=4)`.
    pub fn label(&self) -> String {
        match self.kind() {
            StructureKind::Dag | StructureKind::CardSet => {
                format!("{}(v={},b={})", self.kind().name(), self.v(), self.b())
            }
            _ => format!("{}(v={})", self.kind().name(), self.v()),
        }
    }

    fn candidate_count_for(kind: StructureKind, v: usize) -> usize {
        match kind {
            StructureKind::SpanningTree | StructureKind::Dag => v * (v - 1),
            StructureKind::CardSet => v,
            StructureKind::Permutation => v * v,
        }
    }

    /// Size of the candidate edge/element set `E`.
    pub fn candidate_count(&self) -> usize {
        Self::candidate_count_for(self.kind(), self.v())
    }

    /// Edges in every DAG of the family.
    pub fn dag_edge_count(&self) -> usize {
        let (v, b) = (self.v(), self.b());
        b * (2 * v - b - 1) / 2
    }

    /// Candidates used by `y`, ascending.
    pub fn present(&self, y: &Output) -> Present {
        let mut p = Present::new();
        match y {
            Output::Edges(mask) => bits(*mask).for_each(|e| p.push(e)),
            Output::Subset(s) => s.iter().for_each(|&e| p.push(e as usize)),
            Output::Perm(perm) => {
                let v = self.v();
                perm.iter().enumerate().for_each(|(i, &t)| p.push(i * v + t as usize))
            }
        }
        p
    }

    pub fn latent_count(&self) -> usize {
        match self.latent_kind() {
            LatentKind::OneHotBit { dim } => dim,
            LatentKind::AffineGrid => AFFINE_GRID_CELLS,
        }
    }

    /// Iterates all latents in canonical order.
    pub fn enumerate_latents(&self) -> impl Iterator<Item = Latent> {
        (0..self.latent_count()).map(Latent)
    }

    fn dag_tuple_bound(&self) -> u128 {
        let (v, b) = (self.v() as u128, self.b() as u128);
        let orders: u128 = (1..=v).product();
        (0..v).fold(orders, |acc, j| acc.saturating_mul(binomial(j, j.min(b))))
    }

    /// Exact number of outputs.
    pub fn output_count(&self) -> Result<u128> {
        let v = self.v() as u128;
        Ok(match self.kind() {
            StructureKind::SpanningTree => v.pow(self.v() as u32 - 1),
            StructureKind::CardSet => binomial(v, self.b() as u128),
            StructureKind::Permutation => (1..=v).fold(1u128, |a, k| a.saturating_mul(k)),
            StructureKind::Dag => {
                let bound = self.dag_tuple_bound();
                if bound > 10 * ENUMERATION_CAP {
                    return Err(Error::CardinalityOverflow { count: bound, cap: ENUMERATION_CAP });
                }
                self.outputs()?.len() as u128
            }
        })
    }

    /// `|Y x H|`.
    pub fn product_size(&self) -> Result<u128> {
        Ok(self.output_count()? * self.latent_count() as u128)
    }

    /// All outputs in canonical order (cached).
    pub fn outputs(&self) -> Result<&[Output]> {
        if let Some(o) = self.outputs.get() {
            return Ok(o);
        }
        if self.kind() == StructureKind::Dag {
            let bound = self.dag_tuple_bound();
            if bound > 10 * ENUMERATION_CAP {
                return Err(Error::CardinalityOverflow { count: bound, cap: ENUMERATION_CAP });
            }
        } else {
            let count = self.output_count()?;
            if count > ENUMERATION_CAP {
                return Err(Error::CardinalityOverflow { count, cap: ENUMERATION_CAP });
            }
        }
        let list = self.outputs.get_or_init(|| self.enumerate_uncached().into());
        if list.len() as u128 > ENUMERATION_CAP {
            return Err(Error::CardinalityOverflow { count: list.len() as u128, cap: ENUMERATION_CAP });
        }
        Ok(list)
    }

    /// All outputs in canonical order.
    pub fn enumerate_outputs(&self) -> Result<Vec<Output>> {
        self.outputs().map(|o| o.to_vec())
    }

    fn enumerate_uncached(&self) -> Vec<Output> {
        let v = self.v();
        let mut out: Vec<Output> = match self.kind() {
            StructureKind::SpanningTree => {
                let mut masks = Vec::new();
                for root in 0..v {
                    let others: Vec<usize> = (0..v).filter(|&j| j != root).collect();
                    let choices: Vec<Vec<usize>> =
                        others.iter().map(|&j| (0..v).filter(|&p| p != j).collect()).collect();
                    for parents in choices.iter().map(|c| c.iter().copied()).multi_cartesian_product() {
                        let mask = others
                            .iter()
                            .zip(&parents)
                            .fold(0u64, |m, (&j, &p)| m | 1 << edge_index(v, p, j));
                        if self.valid_tree(mask) {
                            masks.push(mask);
                        }
                    }
                    if others.is_empty() {
                        masks.push(0);
                    }
                }
                masks.into_iter().map(Output::Edges).collect()
            }
            StructureKind::Dag => {
                let b = self.b();
                let mut set = BTreeSet::new();
                for order in (0..v).permutations(v) {
                    let parent_choices: Vec<Vec<Vec<usize>>> = (0..v)
                        .map(|pos| order[..pos].iter().copied().combinations(pos.min(b)).collect())
                        .collect();
                    for pick in parent_choices.iter().map(|c| c.iter()).multi_cartesian_product() {
                        let mask = pick.iter().enumerate().fold(0u64, |m, (pos, parents)| {
                            parents.iter().fold(m, |m, &p| m | 1 << edge_index(v, p, order[pos]))
                        });
                        set.insert(mask);
                    }
                }
                set.into_iter().map(Output::Edges).collect()
            }
            StructureKind::CardSet => (0..v as u8).combinations(self.b()).map(Output::Subset).collect(),
            StructureKind::Permutation => (0..v as u8).permutations(v).map(Output::Perm).collect(),
        };
        out.sort();
        out
    }

    /// Canonical rank of `y` among the outputs.
    pub fn output_index(&self, y: &Output) -> Result<usize> {
        self.outputs()?
            .binary_search(y)
            .map_err(|_| Error::InvalidPoint(format!("{} is not in {}", self.format_output(y), self.label())))
    }

    fn valid_tree(&self, mask: u64) -> bool {
        let v = self.v();
        if mask.count_ones() as usize != v - 1 {
            return false;
        }
        let mut parent = [usize::MAX; 8];
        for e in bits(mask) {
            let (i, j) = edge_endpoints(v, e);
            if parent[j] != usize::MAX {
                return false;
            }
            parent[j] = i;
        }
        let mut roots = (0..v).filter(|&j| parent[j] == usize::MAX);
        let (Some(root), None) = (roots.next(), roots.next()) else {
            return false;
        };
        // every node must reach the root by following parents
        (0..v).all(|start| {
            let mut node = start;
            for _ in 0..v {
                if node == root {
                    return true;
                }
                node = parent[node];
            }
            node == root
        })
    }

    fn valid_dag(&self, mask: u64) -> bool {
        let v = self.v();
        if mask.count_ones() as usize != self.dag_edge_count() {
            return false;
        }
        let mut parents = [0u64; 8];
        for e in bits(mask) {
            let (i, j) = edge_endpoints(v, e);
            parents[j] |= 1 << i;
        }
        if parents[..v].iter().any(|p| p.count_ones() as usize > self.b()) {
            return false;
        }
        let mut done = 0u64;
        for _ in 0..v {
            match (0..v).find(|&j| done & (1 << j) == 0 && parents[j] & !done == 0) {
                Some(j) => done |= 1 << j,
                None => return false,
            }
        }
        true
    }

    /// Validity predicate for outputs.
    pub fn is_valid_output(&self, y: &Output) -> bool {
        let v = self.v();
        match (self.kind(), y) {
            (StructureKind::SpanningTree, Output::Edges(m)) => {
                *m >> self.candidate_count() == 0 && self.valid_tree(*m)
            }
            (StructureKind::Dag, Output::Edges(m)) => *m >> self.candidate_count() == 0 && self.valid_dag(*m),
            (StructureKind::CardSet, Output::Subset(s)) => {
                s.len() == self.b() && s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&e| (e as usize) < v)
            }
            (StructureKind::Permutation, Output::Perm(p)) => {
                let mut seen = 0u64;
                p.len() == v
                    && p.iter().all(|&t| {
                        if (t as usize) >= v || seen & (1 << t) != 0 {
                            return false;
                        }
                        seen |= 1 << t;
                        true
                    })
            }
            _ => false,
        }
    }

    pub fn is_valid_latent(&self, h: Latent) -> bool {
        h.0 < self.latent_count()
    }

    pub fn validate_output(&self, y: &Output) -> Result<()> {
        if self.is_valid_output(y) {
            Ok(())
        } else {
            Err(Error::InvalidPoint(format!("{} is not a valid output of {}", self.format_output(y), self.label())))
        }
    }

    pub fn validate_point(&self, p: &StructuredPoint) -> Result<()> {
        self.validate_output(&p.output)?;
        if !self.is_valid_latent(p.latent) {
            return Err(Error::InvalidPoint(format!(
                "latent {} out of range 0..{}",
                p.latent.0,
                self.latent_count()
            )));
        }
        Ok(())
    }

    /// Uniform draw of an output.
    pub fn sample_output<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Output> {
        let v = self.v();
        Ok(match self.kind() {
            StructureKind::SpanningTree | StructureKind::Dag => {
                let outs = self.outputs()?;
                outs[rng.random_range(0..outs.len())].clone()
            }
            StructureKind::CardSet => {
                let mut s: Vec<u8> = index::sample(rng, v, self.b()).into_iter().map(|e| e as u8).collect();
                s.sort_unstable();
                Output::Subset(s)
            }
            StructureKind::Permutation => {
                let mut p: Vec<u8> = (0..v as u8).collect();
                p.shuffle(rng);
                Output::Perm(p)
            }
        })
    }

    /// Uniform draw of a `(y, h)` pair.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StructuredPoint> {
        let output = self.sample_output(rng)?;
        let latent = Latent(rng.random_range(0..self.latent_count()));
        Ok(StructuredPoint { output, latent })
    }

    /// Outputs differing from `y` by one edge/element swap or one transposition.
    pub fn output_neighbors(&self, y: &Output) -> Vec<Output> {
        let mut out = match y {
            Output::Edges(mask) => {
                let free = !mask & ((1u64 << self.candidate_count()) - 1);
                let mut v = Vec::new();
                for e in bits(*mask) {
                    for f in bits(free) {
                        let m = (mask & !(1 << e)) | 1 << f;
                        let ok = match self.kind() {
                            StructureKind::SpanningTree => self.valid_tree(m),
                            _ => self.valid_dag(m),
                        };
                        if ok {
                            v.push(Output::Edges(m));
                        }
                    }
                }
                v
            }
            Output::Subset(s) => {
                let mut v = Vec::new();
                for (pos, _) in s.iter().enumerate() {
                    for f in 0..self.v() as u8 {
                        if s.binary_search(&f).is_err() {
                            let mut t = s.clone();
                            t[pos] = f;
                            t.sort_unstable();
                            v.push(Output::Subset(t));
                        }
                    }
                }
                v
            }
            Output::Perm(p) => (0..p.len())
                .tuple_combinations()
                .map(|(i, j)| {
                    let mut q = p.clone();
                    q.swap(i, j);
                    Output::Perm(q)
                })
                .collect(),
        };
        out.sort();
        out.dedup();
        out
    }

    /// Latents one contiguous step away from `h`.
    pub fn latent_neighbors(&self, h: Latent) -> Vec<Latent> {
        match self.latent_kind() {
            LatentKind::OneHotBit { dim } => {
                let mut v = Vec::with_capacity(2);
                if h.0 > 0 {
                    v.push(Latent(h.0 - 1));
                }
                if h.0 + 1 < dim {
                    v.push(Latent(h.0 + 1));
                }
                v
            }
            LatentKind::AffineGrid => {
                let mut v = Vec::with_capacity(8);
                let mut place = 1;
                for _ in 0..4 {
                    let digit = (h.0 / place) % 3;
                    if digit > 0 {
                        v.push(Latent(h.0 - place));
                    }
                    if digit < 2 {
                        v.push(Latent(h.0 + place));
                    }
                    place *= 3;
                }
                v.sort();
                v
            }
        }
    }

    /// Local moves of `(y, h)`: output moves with `h` fixed, then latent moves
    /// with `y` fixed, in canonical order.
    pub fn neighbors(&self, point: &StructuredPoint) -> Result<Vec<StructuredPoint>> {
        self.validate_point(point)?;
        Ok(self.neighbors_unchecked(point))
    }

    pub(crate) fn neighbors_unchecked(&self, point: &StructuredPoint) -> Vec<StructuredPoint> {
        let mut out: Vec<StructuredPoint> = self
            .output_neighbors(&point.output)
            .into_iter()
            .map(|y| StructuredPoint::new(y, point.latent))
            .chain(
                self.latent_neighbors(point.latent)
                    .into_iter()
                    .map(|h| StructuredPoint::new(point.output.clone(), h)),
            )
            .collect();
        out.sort();
        out
    }

    /// Distortion as an exact fraction `(numerator, denominator)`.
    pub fn distortion_ratio(&self, y: &Output, y_hat: &Output) -> Result<(u64, u64)> {
        self.validate_output(y)?;
        self.validate_output(y_hat)?;
        Ok(self.distortion_ratio_unchecked(y, y_hat))
    }

    pub(crate) fn distortion_ratio_unchecked(&self, y: &Output, y_hat: &Output) -> (u64, u64) {
        match self.distortion_kind() {
            DistortionKind::Zero => return (0, 1),
            DistortionKind::Binary => return ((y != y_hat) as u64, 1),
            DistortionKind::Structural => {}
        }
        let (v, b) = (self.v() as u64, self.b() as u64);
        match (y, y_hat) {
            (Output::Edges(a), Output::Edges(c)) => {
                let diff = (a ^ c).count_ones() as u64;
                match self.kind() {
                    StructureKind::SpanningTree => (diff, 2 * (v - 1)),
                    _ => (diff, b * (2 * v - b - 1)),
                }
            }
            (Output::Subset(a), Output::Subset(c)) => {
                let common = a.iter().filter(|e| c.binary_search(e).is_ok()).count() as u64;
                (a.len() as u64 + c.len() as u64 - 2 * common, 2 * b)
            }
            (Output::Perm(a), Output::Perm(c)) => (a.iter().zip(c).filter(|(p, q)| p != q).count() as u64, v),
            _ => (1, 1),
        }
    }

    /// `d(y, y_hat, h_hat)`; the latent is ignored by every supported distortion.
    pub fn distortion(&self, y: &Output, y_hat: &Output, _h_hat: Latent) -> Result<f64> {
        let (num, den) = self.distortion_ratio(y, y_hat)?;
        Ok(num as f64 / den as f64)
    }

    pub(crate) fn distortion_of(&self, y: &Output, y_hat: &Output) -> f64 {
        let (num, den) = self.distortion_ratio_unchecked(y, y_hat);
        num as f64 / den as f64
    }

    /// β as an exact fraction.
    pub fn beta_ratio(&self) -> Result<(u64, u64)> {
        match self.distortion_kind() {
            DistortionKind::Zero => {
                return Err(Error::InvalidSpaceParams("the zero distortion never reaches 1".into()))
            }
            DistortionKind::Binary => {
                if self.output_count()? < 2 {
                    return Err(Error::InvalidSpaceParams("binary distortion needs |Y| >= 2".into()));
                }
                return Ok((1, 2));
            }
            DistortionKind::Structural => {}
        }
        let (v, b) = (self.v() as u64, self.b() as u64);
        Ok(match self.kind() {
            StructureKind::SpanningTree => {
                if v < 3 {
                    return Err(Error::InvalidSpaceParams("tree β needs v >= 3".into()));
                }
                (v - 2, v - 1)
            }
            StructureKind::Dag => (b * b + 2 * b + 2, b * b + 3 * b + 2),
            StructureKind::CardSet => (1, 2),
            StructureKind::Permutation => (2, 3),
        })
    }

    /// β constant of the uniform proposal on this family.
    pub fn beta_constant(&self) -> Result<f64> {
        self.beta_ratio().map(|(n, d)| n as f64 / d as f64)
    }

    /// Canonical text: `i->j` edge lists, comma-joined elements or images.
    pub fn format_output(&self, y: &Output) -> String {
        match y {
            Output::Edges(mask) if self.v() >= 2 => bits(*mask)
                .map(|e| {
                    let (i, j) = edge_endpoints(self.v(), e);
                    format!("{i}->{j}")
                })
                .join(","),
            Output::Edges(mask) => format!("{mask:#x}"),
            Output::Subset(s) | Output::Perm(s) => s.iter().join(","),
        }
    }

    pub fn parse_output(&self, text: &str) -> Result<Output> {
        let text = text.trim();
        let parse_list = |t: &str| -> Result<Vec<u8>> {
            if t.is_empty() {
                return Ok(Vec::new());
            }
            t.split(',')
                .map(|s| s.trim().parse::<u8>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect()
        };
        let y = match self.kind() {
            StructureKind::SpanningTree | StructureKind::Dag => {
                let mut mask = 0u64;
                if !text.is_empty() {
                    for edge in text.split(',') {
                        let (i, j) = edge
                            .split_once("->")
                            .ok_or_else(|| Error::Parse(format!("bad edge {edge:?}")))?;
                        let i: usize = i.trim().parse().map_err(|_| Error::Parse(format!("bad edge {edge:?}")))?;
                        let j: usize = j.trim().parse().map_err(|_| Error::Parse(format!("bad edge {edge:?}")))?;
                        if i >= self.v() || j >= self.v() || i == j {
                            return Err(Error::Parse(format!("edge {edge:?} out of range")));
                        }
                        mask |= 1 << edge_index(self.v(), i, j);
                    }
                }
                Output::Edges(mask)
            }
            StructureKind::CardSet => Output::Subset(parse_list(text)?),
            StructureKind::Permutation => Output::Perm(parse_list(text)?),
        };
        self.validate_output(&y)?;
        Ok(y)
    }
}

/// The 2x2 matrix `[[h11, h12], [h21, h22]]` of an affine grid cell.
///
/// Cell index is `c11 + 3*c12 + 9*c21 + 27*c22` with digits indexing
/// `{0.8, 1, 1.2}` on the diagonal and `{-0.2, 0, 0.2}` off it.
pub fn affine_matrix(h: Latent) -> [[f64; 2]; 2] {
    let d = |k: u32| (h.0 / 3usize.pow(k)) % 3;
    [[GRID_DIAG[d(0)], GRID_OFF[d(1)]], [GRID_OFF[d(2)], GRID_DIAG[d(3)]]]
}

/// The affine grid cell holding the identity matrix.
pub const AFFINE_IDENTITY: Latent = Latent(1 + 3 + 9 + 27);

/// Grid cell of a matrix whose entries lie on the grid.
pub fn affine_cell(m: [[f64; 2]; 2]) -> Option<Latent> {
    let find = |table: &[f64; 3], x: f64| table.iter().position(|&t| (t - x).abs() < 1e-12);
    let c11 = find(&GRID_DIAG, m[0][0])?;
    let c12 = find(&GRID_OFF, m[0][1])?;
    let c21 = find(&GRID_OFF, m[1][0])?;
    let c22 = find(&GRID_DIAG, m[1][1])?;
    Some(Latent(c11 + 3 * c12 + 9 * c21 + 27 * c22))
}
