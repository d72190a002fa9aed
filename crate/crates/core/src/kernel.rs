//! Perfect dyadic kernels on the n-dimensional grid and their diagonal Haar coefficients.
//!
//! Kernel axis `v` carries the coordinate of vertex `v`; vertices are ordered class by
//! class, so the first axes belong to class 0. A diagonal block over an r-dimensional
//! cube `Q = I_0 x .. x I_{r-1}` is the n-cube giving every vertex of class `i` the
//! interval `I_i`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{DyadicCube, GridModel};
use crate::hypergraph::{Hypergraph, Selection};
use crate::numerics::{pow2, Rational, Root};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("kernel arrangement does not match the hypergraph classes")]
    Arrangement,
    #[error("class {0} has no vertices")]
    EmptyClass(usize),
    #[error("kernel cell index {0:?} outside the grid")]
    Cell(Vec<usize>),
    #[error("twisted kernel needs a complete hypergraph with every class of size 2")]
    TwistedShape,
    #[error("selection is empty")]
    EmptySelection,
    #[error("coefficient cube {0} is not a diagonal cube at a coefficient scale")]
    CoefficientCube(String),
    #[error(transparent)]
    Dyadic(#[from] crate::dyadic::DyadicError),
}

/// Worst off-diagonal non-constancy found by an exhaustive cube scan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PerfectReport {
    /// `max - min` of the kernel over the worst off-diagonal model cube (0 when valid).
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub worst: Rational,
    /// The offending n-cube, as `"k:(l1,..)"`.
    pub location: Option<String>,
    pub cubes_scanned: usize,
}

impl PerfectReport {
    pub fn is_valid(&self) -> bool {
        self.worst.is_zero()
    }
}

#[derive(Clone, Debug)]
pub struct PerfectDyadicKernel {
    model: GridModel,
    nmodel: GridModel,
    axis_class: Vec<usize>,
    values: BTreeMap<usize, Rational>,
    report: PerfectReport,
}

impl PerfectDyadicKernel {
    /// Builds from nonzero cell values keyed by packed n-dimensional index and validates.
    pub fn from_cells(
        model: GridModel,
        axis_class: Vec<usize>,
        values: BTreeMap<usize, Rational>,
    ) -> Result<Self, KernelError> {
        let nmodel = model.with_dim(axis_class.len())?;
        for i in 0..model.r {
            if !axis_class.contains(&i) {
                return Err(KernelError::EmptyClass(i));
            }
        }
        if axis_class.windows(2).any(|w| w[0] > w[1]) || axis_class.iter().any(|&c| c >= model.r) {
            return Err(KernelError::Arrangement);
        }
        let limit = nmodel.num_cells();
        if let Some((&p, _)) = values.iter().find(|(&p, _)| p >= limit) {
            return Err(KernelError::Cell(nmodel.unpack(p)));
        }
        let values: BTreeMap<usize, Rational> =
            values.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        let mut k = PerfectDyadicKernel {
            model,
            nmodel,
            axis_class,
            values,
            report: PerfectReport {
                worst: Rational::zero(),
                location: None,
                cubes_scanned: 0,
            },
        };
        k.report = k.scan_perfect();
        Ok(k)
    }

    pub fn from_cell_list(
        model: GridModel,
        h: &Hypergraph,
        cells: &[(Vec<usize>, Rational)],
    ) -> Result<Self, KernelError> {
        let nmodel = model.with_dim(h.n())?;
        let cpa = nmodel.cells_per_axis();
        let mut values = BTreeMap::new();
        for (idx, v) in cells {
            if idx.len() != h.n() || idx.iter().any(|&c| c >= cpa) {
                return Err(KernelError::Cell(idx.clone()));
            }
            *values.entry(nmodel.pack(idx)).or_insert_with(Rational::zero) += v;
        }
        PerfectDyadicKernel::from_cells(model, arrangement(h), values)
    }

    pub fn zero(model: GridModel, h: &Hypergraph) -> Result<Self, KernelError> {
        PerfectDyadicKernel::from_cells(model, arrangement(h), BTreeMap::new())
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    /// The n-dimensional grid the kernel lives on.
    pub fn nmodel(&self) -> &GridModel {
        &self.nmodel
    }

    pub fn n(&self) -> usize {
        self.axis_class.len()
    }

    pub fn axis_class(&self) -> &[usize] {
        &self.axis_class
    }

    pub fn values(&self) -> &BTreeMap<usize, Rational> {
        &self.values
    }

    pub fn value(&self, idx: &[usize]) -> Rational {
        self.values
            .get(&self.nmodel.pack(idx))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn perfect_report(&self) -> &PerfectReport {
        &self.report
    }

    pub fn consistent_with(&self, h: &Hypergraph) -> bool {
        h.r() == self.model.r && arrangement(h) == self.axis_class
    }

    pub fn scaled(&self, c: &Rational) -> PerfectDyadicKernel {
        let values = self.values.iter().map(|(&p, v)| (p, v * c)).collect();
        PerfectDyadicKernel::from_cells(self.model, self.axis_class.clone(), values)
            .expect("same shape")
    }

    pub fn add(&self, other: &PerfectDyadicKernel) -> Result<PerfectDyadicKernel, KernelError> {
        if self.model != other.model || self.axis_class != other.axis_class {
            return Err(KernelError::Arrangement);
        }
        let mut values = self.values.clone();
        for (&p, v) in &other.values {
            *values.entry(p).or_insert_with(Rational::zero) += v;
        }
        PerfectDyadicKernel::from_cells(self.model, self.axis_class.clone(), values)
    }

    /// Per-class slot at scale `k` if the cell lies in a diagonal block there.
    pub(crate) fn diag_slot(&self, idx: &[usize], shift: i32) -> Option<Vec<usize>> {
        let mut out = vec![usize::MAX; self.model.r];
        for (v, &c) in idx.iter().enumerate() {
            let s = c >> shift;
            let cl = self.axis_class[v];
            if out[cl] == usize::MAX {
                out[cl] = s;
            } else if out[cl] != s {
                return None;
            }
        }
        Some(out)
    }

    /// `diag_slot` of a packed cell, with the slot packed class-major into one word.
    pub(crate) fn diag_key(&self, packed: usize, shift: i32) -> Option<usize> {
        let b = self.model.axis_bits();
        let w = b - shift as u32;
        let mask = (1usize << b) - 1;
        let mut seen = 0u64;
        let mut key = 0usize;
        for (v, &cl) in self.axis_class.iter().enumerate() {
            let s = ((packed >> (v as u32 * b)) & mask) >> shift;
            let pos = cl as u32 * w;
            if seen >> cl & 1 == 0 {
                seen |= 1 << cl;
                key |= s << pos;
            } else if (key >> pos) & ((1usize << w) - 1) != s {
                return None;
            }
        }
        Some(key)
    }

    fn scan_perfect(&self) -> PerfectReport {
        let mut worst = Rational::zero();
        let mut location = None;
        let mut scanned = 0;
        let n = self.n();
        for k in (-self.model.fine + 1)..=self.model.top {
            let shift = k + self.model.fine;
            let mut cubes: HashMap<Vec<usize>, (usize, Rational, Rational)> = HashMap::new();
            for (&p, v) in &self.values {
                let idx = self.nmodel.unpack(p);
                if self.diag_slot(&idx, shift).is_some() {
                    continue;
                }
                let key: Vec<usize> = idx.iter().map(|&c| c >> shift).collect();
                let e = cubes
                    .entry(key)
                    .or_insert_with(|| (0, v.clone(), v.clone()));
                e.0 += 1;
                if v < &e.1 {
                    e.1 = v.clone();
                }
                if v > &e.2 {
                    e.2 = v.clone();
                }
            }
            let full = 1usize << (shift as usize * n);
            scanned += cubes.len();
            let mut keys: Vec<_> = cubes.keys().cloned().collect();
            keys.sort();
            for key in keys {
                let (count, mut lo, mut hi) = cubes[&key].clone();
                if count < full {
                    lo = lo.min(Rational::zero());
                    hi = hi.max(Rational::zero());
                }
                let gap = hi - lo;
                if gap > worst {
                    worst = gap;
                    let off = 1i64 << (self.model.top - k);
                    let cube = DyadicCube::new(k, key.iter().map(|&s| s as i64 - off).collect());
                    location = Some(cube.to_string());
                }
            }
        }
        PerfectReport {
            worst,
            location,
            cubes_scanned: scanned,
        }
    }
}

/// Axis classes of a hypergraph, vertex by vertex.
pub fn arrangement(h: &Hypergraph) -> Vec<usize> {
    (0..h.n()).map(|v| h.class_of(v)).collect()
}

pub fn validate_perfect_dyadic(k: &PerfectDyadicKernel) -> PerfectReport {
    k.scan_perfect()
}

/// Measured size constant over off-diagonal support cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SizeConstant {
    /// `n <= r`: the bound carries a nonnegative exponent and says nothing.
    pub vacuous: bool,
    /// Using the smallest corner distance of the worst cell.
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub lower: Rational,
    /// Using the largest corner distance: the smallest valid constant.
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub upper: Rational,
    pub at: Option<Vec<usize>>,
}

/// `max |K| * dist^(n-r)` with `dist` the sum over classes of pairwise coordinate gaps.
pub fn size_constant(k: &PerfectDyadicKernel) -> SizeConstant {
    let n = k.n();
    let r = k.model.r;
    if n <= r {
        return SizeConstant {
            vacuous: true,
            lower: Rational::zero(),
            upper: Rational::zero(),
            at: None,
        };
    }
    let e = (n - r) as u32;
    let h = k.model.cell_length();
    let off = 1i64 << (k.model.top + k.model.fine);
    let mut lower = Rational::zero();
    let mut upper = Rational::zero();
    let mut at = None;
    // The distance splits over classes, so its extremes over cell corners do too.
    let classes: Vec<Vec<usize>> = (0..r)
        .map(|i| (0..n).filter(|&a| k.axis_class[a] == i).collect())
        .collect();
    for (&p, v) in &k.values {
        let idx = k.nmodel.unpack(p);
        if k.diag_slot(&idx, 0).is_some() {
            continue;
        }
        let (mut dmin, mut dmax) = (0i64, 0i64);
        for cls in &classes {
            let (mut lo, mut hi) = (i64::MAX, i64::MIN);
            for corner in 0..(1usize << cls.len()) {
                let x: Vec<i64> = cls
                    .iter()
                    .enumerate()
                    .map(|(j, &a)| idx[a] as i64 - off + ((corner >> j) & 1) as i64)
                    .collect();
                let mut d = 0;
                for a in 0..x.len() {
                    for b in (a + 1)..x.len() {
                        d += (x[a] - x[b]).abs();
                    }
                }
                lo = lo.min(d);
                hi = hi.max(d);
            }
            dmin += lo;
            dmax += hi;
        }
        let dmin = Rational::from_integer(dmin.into()) * &h;
        let dmax = Rational::from_integer(dmax.into()) * &h;
        let a = v.abs();
        let up = &a * crate::numerics::rpow(&dmax, e);
        let lo = &a * crate::numerics::rpow(&dmin, e);
        if up > upper {
            upper = up;
            at = Some(idx);
        }
        if lo > lower {
            lower = lo;
        }
    }
    SizeConstant {
        vacuous: false,
        lower,
        upper,
        at,
    }
}

/// Coefficient fields `lambda^S_Q` on diagonal cubes plus the top-scale remainder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagonalHaarCoefficients {
    pub model: GridModel,
    pub axis_class: Vec<usize>,
    /// Nonzero coefficients only; cubes range over scales `-fine+1 ..= top`.
    pub per_selection: BTreeMap<Selection, BTreeMap<DyadicCube, Rational>>,
    /// Averages on the `2^n` top n-blocks, keyed by the n-cube at scale `top`.
    pub coarse: BTreeMap<DyadicCube, Rational>,
}

impl DiagonalHaarCoefficients {
    pub fn empty(model: GridModel, axis_class: Vec<usize>) -> Self {
        DiagonalHaarCoefficients {
            model,
            axis_class,
            per_selection: BTreeMap::new(),
            coarse: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.axis_class.len()
    }

    pub fn get(&self, s: Selection, q: &DyadicCube) -> Rational {
        self.per_selection
            .get(&s)
            .and_then(|m| m.get(q))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn set(&mut self, s: Selection, q: DyadicCube, v: Rational) -> Result<(), KernelError> {
        let k = q.k;
        if q.dim() != self.model.r
            || k <= -self.model.fine
            || !self.model.contains_cube(&q)
        {
            return Err(KernelError::CoefficientCube(q.to_string()));
        }
        if s.is_empty() {
            return Err(KernelError::EmptySelection);
        }
        let m = self.per_selection.entry(s).or_default();
        if v.is_zero() {
            m.remove(&q);
        } else {
            m.insert(q, v);
        }
        Ok(())
    }

    pub fn selections(&self) -> Vec<Selection> {
        self.per_selection
            .iter()
            .filter(|(_, m)| !m.is_empty())
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.per_selection.values().all(|m| m.is_empty()) && self.coarse.values().all(|v| v.is_zero())
    }
}

/// Fast Walsh-Hadamard transform: `out[S] = sum_c (-1)^{|S & c|} a[c]`.
pub(crate) fn walsh_hadamard(a: &mut [Rational]) {
    let mut h = 1;
    while h < a.len() {
        for i in (0..a.len()).step_by(2 * h) {
            for j in i..i + h {
                let x = a[j].clone();
                let y = a[j + h].clone();
                a[j] = &x + &y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

fn slot_to_cube(model: &GridModel, k: i32, slot: &[usize]) -> DyadicCube {
    let off = 1i64 << (model.top - k);
    DyadicCube::new(k, slot.iter().map(|&s| s as i64 - off).collect())
}

fn cube_to_slot(model: &GridModel, q: &DyadicCube) -> Vec<usize> {
    let off = 1i64 << (model.top - q.k);
    q.pos.iter().map(|&l| (l + off) as usize).collect()
}

/// `lambda^S_Q = |Q|^{-1} <K, b^S_Q>` for every nonempty selection and diagonal cube.
pub fn analyze(k: &PerfectDyadicKernel, h: &Hypergraph) -> Result<DiagonalHaarCoefficients, KernelError> {
    if !k.consistent_with(h) {
        return Err(KernelError::Arrangement);
    }
    let model = k.model;
    let n = k.n();
    let r = model.r as i32;
    let cellvol_n = pow2(-model.fine * n as i32);
    let mut out = DiagonalHaarCoefficients::empty(model, k.axis_class.clone());
    let cells: Vec<(Vec<usize>, &Rational)> =
        k.values.iter().map(|(&p, v)| (k.nmodel.unpack(p), v)).collect();
    for scale in (-model.fine + 1)..=model.top {
        let shift = scale + model.fine;
        let mut blocks: BTreeMap<Vec<usize>, Vec<Rational>> = BTreeMap::new();
        for (idx, v) in &cells {
            if let Some(slot) = k.diag_slot(idx, shift) {
                let child = idx
                    .iter()
                    .enumerate()
                    .fold(0usize, |m, (a, &c)| m | (((c >> (shift - 1)) & 1) << a));
                let acc = blocks
                    .entry(slot)
                    .or_insert_with(|| vec![Rational::zero(); 1 << n]);
                acc[child] += *v;
            }
        }
        let factor = &cellvol_n * pow2(-scale * r);
        for (slot, mut acc) in blocks {
            walsh_hadamard(&mut acc);
            let q = slot_to_cube(&model, scale, &slot);
            for (s, val) in acc.into_iter().enumerate().skip(1) {
                if !val.is_zero() {
                    out.per_selection
                        .entry(Selection(s as u64))
                        .or_default()
                        .insert(q.clone(), val * &factor);
                }
            }
        }
    }
    let top_shift = model.top + model.fine;
    let block_cells = pow2(-(model.top * n as i32)) * &cellvol_n;
    for (idx, v) in &cells {
        let pos: Vec<i64> = idx.iter().map(|&c| (c >> top_shift) as i64 - 1).collect();
        *out
            .coarse
            .entry(DyadicCube::new(model.top, pos))
            .or_insert_with(Rational::zero) += *v * &block_cells;
    }
    out.coarse.retain(|_, v| !v.is_zero());
    Ok(out)
}

/// Inverse of [`analyze`]: the kernel whose coefficients are `c`.
pub fn synthesize(c: &DiagonalHaarCoefficients) -> Result<PerfectDyadicKernel, KernelError> {
    let model = c.model;
    let n = c.n();
    let r = model.r;
    let nmodel = model.with_dim(n)?;
    // child values per (scale, slot)
    let mut child_vals: HashMap<(i32, Vec<usize>), Vec<Rational>> = HashMap::new();
    for (s, m) in &c.per_selection {
        for (q, lam) in m {
            let e = child_vals
                .entry((q.k, cube_to_slot(&model, q)))
                .or_insert_with(|| vec![Rational::zero(); 1 << n]);
            e[s.0 as usize] += lam;
        }
    }
    for ((k, _), vals) in child_vals.iter_mut() {
        walsh_hadamard(vals);
        let f = pow2(*k * (r as i32 - n as i32));
        for v in vals.iter_mut() {
            *v *= &f;
        }
    }
    let top_shift = model.top + model.fine;
    let mut top_blocks: BTreeSet<Vec<usize>> = c
        .coarse
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(q, _)| q.pos.iter().map(|&l| (l + 1) as usize).collect())
        .collect();
    for (k, slot) in child_vals.keys() {
        let up = (model.top - k) as usize;
        let class_bits: Vec<usize> = slot.iter().map(|&s| s >> up).collect();
        top_blocks.insert((0..n).map(|v| class_bits[c.axis_class[v]]).collect());
    }
    let side = 1usize << top_shift;
    let mut values = BTreeMap::new();
    for tb in top_blocks {
        let coarse = c
            .coarse
            .get(&DyadicCube::new(model.top, tb.iter().map(|&b| b as i64 - 1).collect()))
            .cloned()
            .unwrap_or_else(Rational::zero);
        let ranges: Vec<(usize, usize)> = tb.iter().map(|&b| (b * side, side)).collect();
        crate::stepfn::for_each_in_box(&ranges, |idx| {
            let mut val = coarse.clone();
            for k in ((-model.fine + 1)..=model.top).rev() {
                let shift = k + model.fine;
                let mut slot = vec![usize::MAX; r];
                let mut diag = true;
                for (v, &x) in idx.iter().enumerate() {
                    let s = x >> shift;
                    let cl = c.axis_class[v];
                    if slot[cl] == usize::MAX {
                        slot[cl] = s;
                    } else if slot[cl] != s {
                        diag = false;
                        break;
                    }
                }
                if !diag {
                    break;
                }
                if let Some(cv) = child_vals.get(&(k, slot)) {
                    let child = idx
                        .iter()
                        .enumerate()
                        .fold(0usize, |m, (a, &x)| m | (((x >> (shift - 1)) & 1) << a));
                    val += &cv[child];
                }
            }
            if !val.is_zero() {
                values.insert(nmodel.pack(idx), val);
            }
        });
    }
    PerfectDyadicKernel::from_cells(model, c.axis_class.clone(), values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ParaproductClass {
    C1,
    C2,
    NC,
}

pub fn classify(h: &Hypergraph, s: Selection) -> Result<ParaproductClass, KernelError> {
    if s.is_empty() {
        return Err(KernelError::EmptySelection);
    }
    if (0..h.r()).any(|i| s.count_in_class(h, i) >= 2) {
        return Ok(ParaproductClass::C1);
    }
    let dec = h.decompose();
    let mut parts = BTreeSet::new();
    for v in s.vertices() {
        let part = dec
            .components
            .iter()
            .position(|c| c.vertices.contains(&v))
            .map(|l| l as i64)
            .unwrap_or(-1 - v as i64);
        parts.insert(part);
    }
    Ok(if parts.len() >= 2 {
        ParaproductClass::C2
    } else {
        ParaproductClass::NC
    })
}

pub fn coeff_linf(c: &DiagonalHaarCoefficients, s: Selection) -> Rational {
    c.per_selection
        .get(&s)
        .map(|m| m.values().map(|v| v.abs()).max().unwrap_or_else(Rational::zero))
        .unwrap_or_else(Rational::zero)
}

/// `sup_{Q0} (|Q0|^{-1} sum_{Q in Q0} |Q| lambda_Q^2)^(1/2)` with r-dimensional volumes.
pub fn coeff_bmo(c: &DiagonalHaarCoefficients, s: Selection) -> Root {
    let mut carleson: BTreeMap<DyadicCube, Rational> = BTreeMap::new();
    if let Some(m) = c.per_selection.get(&s) {
        for (q, lam) in m {
            let mass = q.volume() * lam * lam;
            let mut a = q.clone();
            loop {
                *carleson.entry(a.clone()).or_insert_with(Rational::zero) += &mass;
                if a.k >= c.model.top {
                    break;
                }
                a = a.parent();
            }
        }
    }
    let best = carleson
        .iter()
        .map(|(q, v)| v / q.volume())
        .max()
        .unwrap_or_else(Rational::zero);
    Root::new(best, 2).expect("nonnegative")
}

/// Selection of the two class-0 vertices, which carries the twisted kernel.
pub fn twisted_selection(h: &Hypergraph) -> Selection {
    Selection::from_vertices(h.class(0))
}

/// `lambda = 1` on the class-0 pair at every diagonal cube of scale `-fine+1 ..= top`.
pub fn twisted_coefficients(model: GridModel, h: &Hypergraph) -> Result<DiagonalHaarCoefficients, KernelError> {
    let sizes = h.class_sizes();
    let complete = h.edges().len() == sizes.iter().product::<usize>();
    if sizes.len() != model.r || sizes.iter().any(|&s| s != 2) || !complete {
        return Err(KernelError::TwistedShape);
    }
    let mut c = DiagonalHaarCoefficients::empty(model, arrangement(h));
    let s0 = twisted_selection(h);
    for k in (-model.fine + 1)..=model.top {
        for q in model.cubes_at(k) {
            c.set(s0, q, Rational::from_integer(1.into()))?;
        }
    }
    Ok(c)
}

pub fn twisted_kernel(model: GridModel, h: &Hypergraph) -> Result<PerfectDyadicKernel, KernelError> {
    synthesize(&twisted_coefficients(model, h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{int, rat};

    fn k22() -> Hypergraph {
        Hypergraph::complete(&[2, 2]).unwrap()
    }

    #[test]
    fn twisted_round_trip_and_coefficients() {
        let h = k22();
        let model = GridModel::new(2, 0, 1).unwrap();
        let k = twisted_kernel(model, &h).unwrap();
        assert!(k.perfect_report().is_valid());
        assert!(!k.is_zero());
        let c = analyze(&k, &h).unwrap();
        let s0 = twisted_selection(&h);
        assert_eq!(c.selections(), vec![s0]);
        assert_eq!(c.per_selection[&s0].len(), 4);
        assert!(c.per_selection[&s0].values().all(|v| *v == int(1)));
        assert!(c.coarse.is_empty());
        assert_eq!(coeff_linf(&c, s0), int(1));
        assert_eq!(coeff_bmo(&c, s0), Root::new(int(1), 2).unwrap());
        let back = synthesize(&c).unwrap();
        assert_eq!(back.values(), k.values());
    }

    #[test]
    fn twisted_bmo_counts_scales() {
        let h = k22();
        let model = GridModel::new(2, 1, 2).unwrap();
        let c = twisted_coefficients(model, &h).unwrap();
        let s0 = twisted_selection(&h);
        assert_eq!(coeff_bmo(&c, s0), Root::new(int(3), 2).unwrap());
    }

    #[test]
    fn perturbed_kernel_is_flagged() {
        let h = k22();
        let model = GridModel::new(2, 0, 1).unwrap();
        let k = twisted_kernel(model, &h).unwrap();
        // a1 in [-1,-1/2) and a2 in [0,1/2): off-diagonal at scale 0
        let bad = PerfectDyadicKernel::from_cell_list(model, &h, &[(vec![0, 2, 0, 0], rat(1, 3))]).unwrap();
        let sum = k.add(&bad).unwrap();
        let rep = sum.perfect_report();
        assert_eq!(rep.worst, rat(1, 3));
        assert!(rep.location.is_some());
    }

    #[test]
    fn classification() {
        let h = k22();
        let a = |id: &str| h.vertex_index(id).unwrap();
        assert_eq!(
            classify(&h, Selection::from_vertices(&[a("a1"), a("a2")])).unwrap(),
            ParaproductClass::C1
        );
        assert_eq!(
            classify(&h, Selection::from_vertices(&[a("a1"), a("b1")])).unwrap(),
            ParaproductClass::NC
        );
        let m = Hypergraph::new(
            vec![vec!["a1".into(), "a2".into()], vec!["b1".into(), "b2".into()]],
            vec![vec!["a1".into(), "b1".into()], vec!["a2".into(), "b2".into()]],
        )
        .unwrap();
        let s = Selection::from_ids(&m, &["a1", "b2"]).unwrap();
        assert_eq!(classify(&m, s).unwrap(), ParaproductClass::C2);
        assert!(classify(&h, Selection::empty()).is_err());
    }

    #[test]
    fn zero_kernel() {
        let h = k22();
        let model = GridModel::new(2, 0, 1).unwrap();
        let k = PerfectDyadicKernel::zero(model, &h).unwrap();
        let c = analyze(&k, &h).unwrap();
        assert!(c.is_zero());
        assert!(synthesize(&c).unwrap().is_zero());
        assert_eq!(size_constant(&k).upper, int(0));
    }

    #[test]
    fn size_constant_scales() {
        let h = k22();
        let model = GridModel::new(2, 0, 1).unwrap();
        let k = twisted_kernel(model, &h).unwrap();
        let s = size_constant(&k);
        assert!(!s.vacuous && s.upper > int(0) && s.lower <= s.upper);
        let s3 = size_constant(&k.scaled(&int(-3)));
        assert_eq!(s3.upper, s.upper * int(3));
    }
}
