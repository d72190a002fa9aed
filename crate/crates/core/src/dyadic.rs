//! The finite dyadic universe: grid model, intervals, cubes, Haar functions, convex trees.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{pow2, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DyadicError {
    #[error("invalid grid model: {0}")]
    Model(String),
    #[error("cube {0} is at the finest model scale and has no children in the model")]
    Finest(String),
    #[error("cube {0} lies outside the model window")]
    OutOfModel(String),
    #[error("stop cube {stop} is not strictly inside root {root}")]
    StopOutsideRoot { stop: String, root: String },
    #[error("cannot parse cube from {0:?}")]
    Parse(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Domain `[-2^top, 2^top)^r` with finest cells of side `2^-fine`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridModel {
    pub r: usize,
    pub top: i32,
    pub fine: i32,
}

impl GridModel {
    pub fn new(r: usize, top: i32, fine: i32) -> Result<Self, DyadicError> {
        if r == 0 {
            return Err(DyadicError::Model("dimension r must be positive".into()));
        }
        if top < 0 || fine < 0 {
            return Err(DyadicError::Model("scales L and N must be nonnegative".into()));
        }
        if (top + fine + 1) as usize * r > 62 {
            return Err(DyadicError::Model(format!(
                "grid of {} cells per axis in dimension {r} is too large",
                1u64 << (top + fine + 1).min(62)
            )));
        }
        Ok(GridModel { r, top, fine })
    }

    /// Same scale window, different dimension (used for n-dimensional kernels).
    pub fn with_dim(&self, r: usize) -> Result<Self, DyadicError> {
        GridModel::new(r, self.top, self.fine)
    }

    pub fn axis_bits(&self) -> u32 {
        (self.top + self.fine + 1) as u32
    }

    pub fn cells_per_axis(&self) -> usize {
        1usize << self.axis_bits()
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis().pow(self.r as u32)
    }

    pub fn cell_length(&self) -> Rational {
        pow2(-self.fine)
    }

    pub fn cell_volume(&self) -> Rational {
        pow2(-self.fine * self.r as i32)
    }

    pub fn domain_volume(&self) -> Rational {
        pow2((self.top + 1) * self.r as i32)
    }

    pub fn scales(&self) -> std::ops::RangeInclusive<i32> {
        -self.fine..=self.top
    }

    fn offset(&self) -> i64 {
        1i64 << (self.top + self.fine)
    }

    pub fn pack(&self, idx: &[usize]) -> usize {
        let b = self.axis_bits();
        idx.iter().rev().fold(0usize, |acc, &c| (acc << b) | c)
    }

    pub fn unpack(&self, mut packed: usize) -> Vec<usize> {
        let b = self.axis_bits();
        let mask = (1usize << b) - 1;
        (0..self.r)
            .map(|_| {
                let c = packed & mask;
                packed >>= b;
                c
            })
            .collect()
    }

    pub fn cell_interval(&self, c: usize) -> DyadicInterval {
        DyadicInterval {
            k: -self.fine,
            l: c as i64 - self.offset(),
        }
    }

    /// Interval at scale `k` containing fine cell `c`.
    pub fn interval_of_cell(&self, c: usize, k: i32) -> DyadicInterval {
        let p = c as i64 - self.offset();
        DyadicInterval {
            k,
            l: p >> (k + self.fine),
        }
    }

    /// Finest cells met by an interval, as `(start, len)`; sub-cell intervals give their cell.
    pub fn interval_cells(&self, iv: &DyadicInterval) -> (usize, usize) {
        if iv.k >= -self.fine {
            let len = 1usize << (iv.k + self.fine);
            let start = iv.l * len as i64 + self.offset();
            (start as usize, len)
        } else {
            let p = iv.l >> (-self.fine - iv.k);
            ((p + self.offset()) as usize, 1)
        }
    }

    pub fn cube_ranges(&self, q: &DyadicCube) -> Vec<(usize, usize)> {
        (0..q.dim()).map(|i| self.interval_cells(&q.interval(i))).collect()
    }

    pub fn cube_of_cell(&self, idx: &[usize], k: i32) -> DyadicCube {
        DyadicCube {
            k,
            pos: idx
                .iter()
                .map(|&c| self.interval_of_cell(c, k).l)
                .collect(),
        }
    }

    pub fn contains_interval(&self, iv: &DyadicInterval) -> bool {
        if iv.k > self.top {
            return false;
        }
        let bound = 1i64 << (self.top - iv.k).min(62);
        -bound <= iv.l && iv.l < bound
    }

    /// Model scale and inside the domain.
    pub fn contains_cube(&self, q: &DyadicCube) -> bool {
        q.dim() == self.r
            && q.k >= -self.fine
            && (0..q.dim()).all(|i| self.contains_interval(&q.interval(i)))
    }

    pub fn top_cubes(&self) -> Vec<DyadicCube> {
        self.cubes_at(self.top)
    }

    pub fn cubes_at(&self, k: i32) -> Vec<DyadicCube> {
        let per = 1i64 << (self.top - k + 1);
        let lo = -(1i64 << (self.top - k));
        let total = (per as usize).pow(self.r as u32);
        (0..total)
            .map(|mut t| {
                let pos = (0..self.r)
                    .map(|_| {
                        let p = lo + (t % per as usize) as i64;
                        t /= per as usize;
                        p
                    })
                    .collect();
                DyadicCube { k, pos }
            })
            .collect()
    }

    /// Every model cube, coarsest scale first.
    pub fn all_cubes(&self) -> Vec<DyadicCube> {
        self.scales().rev().flat_map(|k| self.cubes_at(k)).collect()
    }

    /// Children within the model; the finest scale has none.
    pub fn children(&self, q: &DyadicCube) -> Result<Vec<DyadicCube>, DyadicError> {
        if q.k <= -self.fine {
            return Err(DyadicError::Finest(q.to_string()));
        }
        Ok(q.children())
    }

    /// Model cubes inside `q` (including `q`), coarsest first.
    pub fn subcubes(&self, q: &DyadicCube) -> Vec<DyadicCube> {
        let mut out = vec![q.clone()];
        let mut frontier = vec![q.clone()];
        while let Some(c) = frontier.first() {
            if c.k <= -self.fine {
                break;
            }
            let next: Vec<DyadicCube> = frontier.iter().flat_map(|c| c.children()).collect();
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }
}

/// `[2^k l, 2^k (l+1))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub k: i32,
    pub l: i64,
}

impl DyadicInterval {
    pub fn new(k: i32, l: i64) -> Self {
        DyadicInterval { k, l }
    }

    pub fn len(&self) -> Rational {
        pow2(self.k)
    }

    pub fn start(&self) -> Rational {
        pow2(self.k) * Rational::from_integer(self.l.into())
    }

    pub fn end(&self) -> Rational {
        pow2(self.k) * Rational::from_integer((self.l + 1).into())
    }

    pub fn left(&self) -> DyadicInterval {
        DyadicInterval::new(self.k - 1, 2 * self.l)
    }

    pub fn right(&self) -> DyadicInterval {
        DyadicInterval::new(self.k - 1, 2 * self.l + 1)
    }

    pub fn parent(&self) -> DyadicInterval {
        DyadicInterval::new(self.k + 1, self.l >> 1)
    }

    pub fn contains_point(&self, x: &Rational) -> bool {
        &self.start() <= x && x < &self.end()
    }

    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.k <= self.k && (other.l >> (self.k - other.k)) == self.l
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.k, self.l)
    }
}

/// Haar function on `I`: variant 0 is `1_I/|I|`, variant 1 is `(1_{I_L} - 1_{I_R})/|I|`.
pub fn haar(i: &DyadicInterval, variant: u8, x: &Rational) -> Rational {
    if !i.contains_point(x) {
        return Rational::zero();
    }
    let v = i.len().recip();
    if variant == 0 || i.left().contains_point(x) {
        v
    } else {
        -v
    }
}

/// Product of equal-length dyadic intervals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub k: i32,
    pub pos: Vec<i64>,
}

impl DyadicCube {
    pub fn new(k: i32, pos: Vec<i64>) -> Self {
        DyadicCube { k, pos }
    }

    pub fn dim(&self) -> usize {
        self.pos.len()
    }

    pub fn interval(&self, i: usize) -> DyadicInterval {
        DyadicInterval::new(self.k, self.pos[i])
    }

    pub fn side(&self) -> Rational {
        pow2(self.k)
    }

    pub fn volume(&self) -> Rational {
        pow2(self.k * self.dim() as i32)
    }

    /// Child `j` takes the right half on axis `i` iff bit `i` of `j` is set.
    pub fn child(&self, j: usize) -> DyadicCube {
        DyadicCube {
            k: self.k - 1,
            pos: self
                .pos
                .iter()
                .enumerate()
                .map(|(i, &l)| 2 * l + ((j >> i) & 1) as i64)
                .collect(),
        }
    }

    /// All `2^r` children, without regard to any model.
    pub fn children(&self) -> Vec<DyadicCube> {
        (0..1usize << self.dim()).map(|j| self.child(j)).collect()
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            k: self.k + 1,
            pos: self.pos.iter().map(|&l| l >> 1).collect(),
        }
    }

    pub fn ancestor_at(&self, k: i32) -> DyadicCube {
        debug_assert!(k >= self.k);
        DyadicCube {
            k,
            pos: self.pos.iter().map(|&l| l >> (k - self.k)).collect(),
        }
    }

    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.dim() == self.dim() && other.k <= self.k && other.ancestor_at(self.k) == *self
    }

    pub fn contains_point(&self, x: &[Rational]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| self.interval(i).contains_point(&x[i]))
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pos.iter().map(|l| l.to_string()).collect();
        write!(f, "{}:({})", self.k, parts.join(","))
    }
}

impl FromStr for DyadicCube {
    type Err = DyadicError;

    /// Accepts `"k:(l1,...,lr)"` and, for one-dimensional cubes, `"k:l"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DyadicError::Parse(s.to_string());
        let (k, rest) = s.trim().split_once(':').ok_or_else(err)?;
        let k: i32 = k.trim().parse().map_err(|_| err())?;
        let rest = rest.trim();
        let inner = rest
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .unwrap_or(rest);
        let pos = inner
            .split(',')
            .map(|t| t.trim().parse::<i64>().map_err(|_| err()))
            .collect::<Result<Vec<_>, _>>()?;
        if pos.is_empty() {
            return Err(err());
        }
        Ok(DyadicCube { k, pos })
    }
}

/// A rooted family of cubes closed under intermediate cubes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvexTree {
    pub root: DyadicCube,
    pub members: BTreeSet<DyadicCube>,
}

impl ConvexTree {
    /// Cubes outside the tree whose parent is a member.
    pub fn leaves(&self) -> BTreeSet<DyadicCube> {
        self.members
            .iter()
            .flat_map(|m| m.children())
            .filter(|c| !self.members.contains(c))
            .collect()
    }

    pub fn is_convex(&self) -> bool {
        self.members.contains(&self.root)
            && self.members.iter().all(|m| {
                self.root.contains(m) && (*m == self.root || self.members.contains(&m.parent()))
            })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Model cubes under `root` not contained in any stop cube.
pub fn build_convex_tree(
    model: &GridModel,
    root: &DyadicCube,
    stop: &BTreeSet<DyadicCube>,
) -> Result<ConvexTree, DyadicError> {
    if !model.contains_cube(root) {
        return Err(DyadicError::OutOfModel(root.to_string()));
    }
    for s in stop {
        if s == root || !root.contains(s) {
            return Err(DyadicError::StopOutsideRoot {
                stop: s.to_string(),
                root: root.to_string(),
            });
        }
    }
    let mut members = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(q) = stack.pop() {
        if stop.contains(&q) {
            continue;
        }
        if q.k > -model.fine {
            stack.extend(q.children());
        }
        members.insert(q);
    }
    Ok(ConvexTree {
        root: root.clone(),
        members,
    })
}

/// Sum of leaf volumes; equals the root volume for every tree built inside a model.
pub fn leaf_volume(tree: &ConvexTree) -> Rational {
    tree.leaves()
        .iter()
        .fold(Rational::zero(), |acc, q| acc + q.volume())
}
