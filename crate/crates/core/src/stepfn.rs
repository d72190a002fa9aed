//! Step functions on the finest grid with exact integration, averages, norms, BMO,
//! and the weighted dyadic maximal operator.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dyadic::{DyadicCube, GridModel};
use crate::numerics::{format_rational, parse_rational, rpow, Rational, Real, Root};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("expected {expected} cell values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("cell index {0:?} outside the grid")]
    Cell(Vec<usize>),
    #[error("negative value at cell {0:?}")]
    Negative(Vec<usize>),
    #[error("weight is not strictly positive at cell {0:?}")]
    NonPositiveWeight(Vec<usize>),
    #[error("grid models differ")]
    ModelMismatch,
    #[error("exponent must be at least 1")]
    Exponent,
}

/// Exact rational values on the finest cells; cell `(c_0, .., c_{r-1})` is stored at
/// `sum c_i * cells_per_axis^i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepFunction {
    model: GridModel,
    values: Vec<Rational>,
}

impl StepFunction {
    pub fn new(model: GridModel, values: Vec<Rational>) -> Result<Self, StepError> {
        if values.len() != model.num_cells() {
            return Err(StepError::Length {
                expected: model.num_cells(),
                got: values.len(),
            });
        }
        Ok(StepFunction { model, values })
    }

    pub fn zero(model: GridModel) -> Self {
        StepFunction::constant(model, Rational::zero())
    }

    pub fn constant(model: GridModel, c: Rational) -> Self {
        StepFunction {
            model,
            values: vec![c; model.num_cells()],
        }
    }

    pub fn from_fn(model: GridModel, f: impl Fn(&[usize]) -> Rational) -> Self {
        let values = (0..model.num_cells()).map(|p| f(&model.unpack(p))).collect();
        StepFunction { model, values }
    }

    pub fn from_sparse(model: GridModel, cells: &[(Vec<usize>, Rational)]) -> Result<Self, StepError> {
        let mut f = StepFunction::zero(model);
        let cpa = model.cells_per_axis();
        for (idx, v) in cells {
            if idx.len() != model.r || idx.iter().any(|&c| c >= cpa) {
                return Err(StepError::Cell(idx.clone()));
            }
            f.values[model.pack(idx)] = v.clone();
        }
        Ok(f)
    }

    /// `c` on the cells of `q`, zero elsewhere.
    pub fn indicator(model: GridModel, q: &DyadicCube, c: Rational) -> Self {
        let ranges = model.cube_ranges(q);
        StepFunction::from_fn(model, |idx| {
            if idx
                .iter()
                .zip(&ranges)
                .all(|(&x, &(s, l))| s <= x && x < s + l)
            {
                c.clone()
            } else {
                Rational::zero()
            }
        })
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn value(&self, idx: &[usize]) -> &Rational {
        &self.values[self.model.pack(idx)]
    }

    pub fn map(&self, f: impl Fn(&Rational) -> Rational) -> StepFunction {
        StepFunction {
            model: self.model,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &StepFunction,
        f: impl Fn(&Rational, &Rational) -> Rational,
    ) -> Result<StepFunction, StepError> {
        if self.model != other.model {
            return Err(StepError::ModelMismatch);
        }
        Ok(StepFunction {
            model: self.model,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: &Rational) -> StepFunction {
        self.map(|v| v * c)
    }

    pub fn abs(&self) -> StepFunction {
        self.map(|v| v.abs())
    }

    pub fn pow(&self, d: u32) -> StepFunction {
        self.map(|v| rpow(v, d))
    }

    pub fn positive_part(&self) -> StepFunction {
        self.map(|v| if v.is_positive() { v.clone() } else { Rational::zero() })
    }

    pub fn negative_part(&self) -> StepFunction {
        self.map(|v| if v.is_negative() { -v.clone() } else { Rational::zero() })
    }

    pub fn first_negative(&self) -> Option<Vec<usize>> {
        self.values
            .iter()
            .position(|v| v.is_negative())
            .map(|p| self.model.unpack(p))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.first_negative().is_none()
    }

    pub fn check_weight(&self) -> Result<(), StepError> {
        match self.values.iter().position(|v| !v.is_positive()) {
            Some(p) => Err(StepError::NonPositiveWeight(self.model.unpack(p))),
            None => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn sup_abs(&self) -> Rational {
        self.values
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Cells with a nonzero value, as packed indices.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&p| !self.values[p].is_zero())
            .collect()
    }

    pub fn integral(&self) -> Rational {
        self.values
            .iter()
            .fold(Rational::zero(), |a, v| a + v)
            * self.model.cell_volume()
    }

    /// Sum of values over the cells met by `q` (a sub-cell cube meets one cell).
    pub fn cell_sum(&self, q: &DyadicCube) -> Rational {
        let ranges = self.model.cube_ranges(q);
        let mut acc = Rational::zero();
        for_each_in_box(&ranges, |idx| acc += self.value(idx));
        acc
    }

    pub fn average(&self, q: &DyadicCube) -> Rational {
        let ranges = self.model.cube_ranges(q);
        let count: usize = ranges.iter().map(|r| r.1).product();
        self.cell_sum(q) / Rational::from_integer(count.into())
    }

    /// `[f^d]_Q^(1/d)` for `f >= 0` on `q`.
    pub fn power_average(&self, q: &DyadicCube, d: u32) -> Result<Root, StepError> {
        let ranges = self.model.cube_ranges(q);
        let mut acc = Rational::zero();
        let mut count = 0usize;
        let mut neg = None;
        for_each_in_box(&ranges, |idx| {
            let v = self.value(idx);
            if v.is_negative() && neg.is_none() {
                neg = Some(idx.to_vec());
            }
            acc += rpow(v, d);
            count += 1;
        });
        if let Some(c) = neg {
            return Err(StepError::Negative(c));
        }
        let avg = acc / Rational::from_integer(count.into());
        Root::new(avg, d).map_err(|_| StepError::Negative(vec![]))
    }

    pub fn pyramid(&self) -> Pyramid {
        Pyramid::new(self)
    }

    /// Weighted integral `sum |f|^p w` over a set of packed cells, with `p` integer.
    pub fn weighted_power_sum(&self, cells: &[usize], p: u32, w: Option<&StepFunction>) -> Rational {
        let mut acc = Rational::zero();
        for &c in cells {
            let mut t = rpow(&self.values[c].abs(), p);
            if let Some(w) = w {
                t *= &w.values[c];
            }
            acc += t;
        }
        acc * self.model.cell_volume()
    }
}

/// Iterates every multi-index in a product of `(start, len)` ranges, first axis fastest.
pub fn for_each_in_box(ranges: &[(usize, usize)], mut f: impl FnMut(&[usize])) {
    if ranges.iter().any(|r| r.1 == 0) {
        return;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&idx);
        let mut i = 0;
        loop {
            if i == ranges.len() {
                return;
            }
            idx[i] += 1;
            if idx[i] < ranges[i].0 + ranges[i].1 {
                break;
            }
            idx[i] = ranges[i].0;
            i += 1;
        }
    }
}

/// Averages of one function on every model cube, built bottom-up.
#[derive(Clone, Debug)]
pub struct Pyramid {
    model: GridModel,
    /// `levels[j]` holds scale `-fine + j`.
    levels: Vec<Vec<Rational>>,
}

impl Pyramid {
    pub fn new(f: &StepFunction) -> Self {
        let model = *f.model();
        let mut levels = vec![f.values().to_vec()];
        let r = model.r;
        for k in (-model.fine + 1)..=model.top {
            let prev = levels.last().unwrap();
            let per_prev = 1usize << (model.top - k + 2);
            let per = per_prev / 2;
            let total = per.pow(r as u32);
            let scale = Rational::new(1.into(), (1u64 << r).into());
            let mut next = Vec::with_capacity(total);
            for t in 0..total {
                let mut base = 0usize;
                let mut rem = t;
                let mut stride = 1usize;
                for _ in 0..r {
                    base += 2 * (rem % per) * stride;
                    rem /= per;
                    stride *= per_prev;
                }
                let mut acc = Rational::zero();
                for j in 0..(1usize << r) {
                    let mut off = 0usize;
                    let mut s = 1usize;
                    for i in 0..r {
                        off += ((j >> i) & 1) * s;
                        s *= per_prev;
                    }
                    acc += &prev[base + off];
                }
                next.push(acc * &scale);
            }
            levels.push(next);
        }
        Pyramid { model, levels }
    }

    fn slot(&self, q: &DyadicCube) -> (usize, usize) {
        let k = q.k.max(-self.model.fine);
        let q = if q.k < k { q.ancestor_at(k) } else { q.clone() };
        let per = 1usize << (self.model.top - k + 1);
        let off = 1i64 << (self.model.top - k);
        let mut idx = 0usize;
        for i in (0..q.dim()).rev() {
            idx = idx * per + (q.pos[i] + off) as usize;
        }
        ((k + self.model.fine) as usize, idx)
    }

    /// Average over `q`; sub-cell cubes take their cell's value.
    pub fn average(&self, q: &DyadicCube) -> &Rational {
        let (lvl, idx) = self.slot(q);
        &self.levels[lvl][idx]
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }
}

/// `sup_Q ([f^2]_Q - [f]_Q^2)^(1/2)` over the model window, with the attaining cube.
pub fn bmo_l2(f: &StepFunction) -> (Root, Option<DyadicCube>) {
    let p1 = f.pyramid();
    let p2 = f.pow(2).pyramid();
    let mut best = Rational::zero();
    let mut at = None;
    for q in f.model().all_cubes() {
        let a = p1.average(&q);
        let osc = p2.average(&q) - a * a;
        if osc > best {
            best = osc;
            at = Some(q);
        }
    }
    (Root::new(best, 2).expect("oscillation is nonnegative"), at)
}

pub fn bmo_l2_value(f: &StepFunction) -> Root {
    bmo_l2(f).0
}

/// `sup_Q [|f - [f]_Q|]_Q` over the model window.
pub fn bmo_l1(f: &StepFunction) -> Rational {
    let model = f.model();
    let p = f.pyramid();
    let mut best = Rational::zero();
    for k in model.scales() {
        let per = 1usize << (model.top - k + 1);
        let total = per.pow(model.r as u32);
        let mut acc = vec![Rational::zero(); total];
        let shift = k + model.fine;
        for (c, v) in f.values().iter().enumerate() {
            let idx = model.unpack(c);
            let q = DyadicCube::new(k, idx.iter().map(|&x| (x as i64) - (1i64 << (model.top + model.fine))).map(|x| x >> shift).collect());
            let slot = idx
                .iter()
                .rev()
                .fold(0usize, |s, &x| s * per + (x >> shift));
            acc[slot] += (v - p.average(&q)).abs();
        }
        let count = Rational::from_integer((1usize << (shift as usize * model.r)).into());
        for a in acc {
            let val = a / &count;
            if val > best {
                best = val;
            }
        }
    }
    best
}

/// Integrability exponent: a rational `p >= 1` or infinity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational),
    Infinite,
}

impl Exponent {
    pub fn finite(p: Rational) -> Self {
        Exponent::Finite(p)
    }

    /// `1/p`, zero at infinity.
    pub fn recip(&self) -> Rational {
        match self {
            Exponent::Finite(p) => p.recip(),
            Exponent::Infinite => Rational::zero(),
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn as_integer(&self) -> Option<u32> {
        match self {
            Exponent::Finite(p) if p.is_integer() => p.to_integer().to_u32(),
            _ => None,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{}", format_rational(p)),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = crate::numerics::NumericsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinite),
            t => parse_rational(t).map(Exponent::Finite),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `(sum |f|^p w vol)^(1/p)`: exact for integer `p`, an enclosable expression otherwise.
pub fn lp_norm(f: &StepFunction, p: &Exponent, w: Option<&StepFunction>) -> Result<Real, StepError> {
    if let Some(w) = w {
        if w.model() != f.model() {
            return Err(StepError::ModelMismatch);
        }
    }
    match p {
        Exponent::Infinite => Ok(Real::Rat(f.sup_abs())),
        Exponent::Finite(pv) => {
            if pv < &Rational::one() {
                return Err(StepError::Exponent);
            }
            let all: Vec<usize> = (0..f.values().len()).collect();
            if let Some(k) = p.as_integer() {
                let s = f.weighted_power_sum(&all, k, w);
                return Ok(Real::Root(Root::new(s, k).expect("nonnegative")));
            }
            let vol = f.model().cell_volume();
            let terms: Vec<Real> = all
                .iter()
                .filter(|&&c| !f.values()[c].is_zero())
                .map(|&c| {
                    let coef = match w {
                        Some(w) => &vol * &w.values()[c],
                        None => vol.clone(),
                    };
                    Real::Product(vec![
                        Real::Rat(coef),
                        Real::Rat(f.values()[c].abs()).pow(pv.clone()),
                    ])
                })
                .collect();
            Ok(Real::Sum(terms).pow(pv.recip()))
        }
    }
}

/// `M_{d,w} f` stored as its `d`-th power, which is rational cellwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaximalField {
    pub d: u32,
    pub powered: StepFunction,
}

impl MaximalField {
    pub fn at(&self, idx: &[usize]) -> Root {
        Root::new(self.powered.value(idx).clone(), self.d).expect("nonnegative")
    }

    pub fn at_packed(&self, c: usize) -> Root {
        Root::new(self.powered.values()[c].clone(), self.d).expect("nonnegative")
    }
}

/// `max over model cubes Q containing the cell of [|f|^d w]_Q / [w]_Q`, per cell.
pub fn weighted_maximal(f: &StepFunction, d: u32, w: &StepFunction) -> Result<MaximalField, StepError> {
    if f.model() != w.model() {
        return Err(StepError::ModelMismatch);
    }
    w.check_weight()?;
    let fw = f.abs().pow(d).zip_with(w, |a, b| a * b)?;
    let pn = fw.pyramid();
    let pd = w.pyramid();
    let model = *f.model();
    let powered = StepFunction::from_fn(model, |idx| {
        let mut best = Rational::zero();
        for k in model.scales() {
            let q = model.cube_of_cell(idx, k);
            let v = pn.average(&q) / pd.average(&q);
            if v > best {
                best = v;
            }
        }
        best
    });
    Ok(MaximalField { d, powered })
}
