//! Variable elimination over edge tensors on a box of cells.
//!
//! Computes integrals of `prod_e F_e(x_e)` over an n-dimensional box of finest cells,
//! optionally split into halves along a chosen set of vertices. Edge values are scaled
//! to integers once; contraction runs in checked `i128` and falls back to `BigInt` on
//! overflow, so results are exact either way.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::hypergraph::Hypergraph;
use crate::numerics::Rational;
use crate::stepfn::StepFunction;

pub(crate) trait Ring: Clone {
    fn zero() -> Self;
    fn from_count(c: usize) -> Self;
    fn is_zero(&self) -> bool;
    fn mul(&self, o: &Self) -> Option<Self>;
    fn add_to(&mut self, o: &Self) -> Option<()>;
    fn to_big(&self) -> BigInt;
}

impl Ring for i128 {
    fn zero() -> Self {
        0
    }
    fn from_count(c: usize) -> Self {
        c as i128
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        self.checked_mul(*o)
    }
    fn add_to(&mut self, o: &Self) -> Option<()> {
        *self = self.checked_add(*o)?;
        Some(())
    }
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl Ring for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_count(c: usize) -> Self {
        BigInt::from(c)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn add_to(&mut self, o: &Self) -> Option<()> {
        *self += o;
        Some(())
    }
    fn to_big(&self) -> BigInt {
        self.clone()
    }
}

/// Edge functions as integer numerators over a per-edge common denominator.
#[derive(Clone, Debug)]
pub(crate) struct PreparedTuple {
    pub cpa: usize,
    pub n: usize,
    pub edge_vertices: Vec<Vec<usize>>,
    pub big: Vec<Vec<BigInt>>,
    pub small: Option<Vec<Vec<i128>>>,
    /// `prod_e denom_e`.
    pub denom: BigInt,
    /// Vertex elimination order.
    pub order: Vec<usize>,
}

impl PreparedTuple {
    pub fn new(h: &Hypergraph, funcs: &[&StepFunction]) -> Self {
        let model = funcs.first().map(|f| *f.model());
        let cpa = model.map(|m| m.cells_per_axis()).unwrap_or(1);
        let mut big = Vec::new();
        let mut denom = BigInt::one();
        for f in funcs {
            let d = f
                .values()
                .iter()
                .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
            big.push(
                f.values()
                    .iter()
                    .map(|v| v.numer() * (&d / v.denom()))
                    .collect::<Vec<_>>(),
            );
            denom *= d;
        }
        let small = big
            .iter()
            .map(|e| e.iter().map(|x| x.to_i128()).collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>();
        let mut classes: Vec<usize> = (0..h.r()).collect();
        classes.sort_by_key(|&i| (std::cmp::Reverse(h.class(i).len()), i));
        let order = classes.iter().flat_map(|&i| h.class(i).iter().copied()).collect();
        PreparedTuple {
            cpa,
            n: h.n(),
            edge_vertices: h.edges().iter().map(|e| e.vertices.clone()).collect(),
            big,
            small,
            denom,
            order,
        }
    }

    /// Integer sums `sum_{cells in child} prod_e num_e` for every half-split child of the box.
    ///
    /// `ranges[v]` is the `(start, len)` cell range of vertex `v`; children are indexed by
    /// bit `t` = right half of the `t`-th vertex (ascending) in `split`.
    pub fn child_sums(&self, ranges: &[(usize, usize)], split: u64) -> Vec<BigInt> {
        if let Some(small) = &self.small {
            if let Some(out) = contract::<i128>(self, small, ranges, split) {
                return out.iter().map(|x| x.to_big()).collect();
            }
        }
        contract::<BigInt>(self, &self.big, ranges, split).expect("BigInt arithmetic cannot overflow")
    }

    /// Exact integrals over each child, including the cell volume.
    pub fn child_integrals(&self, ranges: &[(usize, usize)], split: u64, cellvol_n: &Rational) -> Vec<Rational> {
        let scale = cellvol_n / Rational::from_integer(self.denom.clone());
        self.child_sums(ranges, split)
            .into_iter()
            .map(|s| Rational::from_integer(s) * &scale)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    Cell(usize),
    Half(usize),
}

struct Factor<T> {
    vars: Vec<Var>,
    dims: Vec<usize>,
    data: Vec<T>,
}

fn contract<T: Ring>(
    p: &PreparedTuple,
    edges: &[Vec<T>],
    ranges: &[(usize, usize)],
    split: u64,
) -> Option<Vec<T>> {
    let dim_of = |v: &Var| match v {
        Var::Cell(x) => ranges[*x].1,
        Var::Half(_) => 2,
    };
    let mut factors: Vec<Factor<T>> = Vec::with_capacity(edges.len());
    for (e, vals) in edges.iter().enumerate() {
        let vs = &p.edge_vertices[e];
        let vars: Vec<Var> = vs.iter().map(|&v| Var::Cell(v)).collect();
        let dims: Vec<usize> = vs.iter().map(|&v| ranges[v].1).collect();
        let total: usize = dims.iter().product();
        let mut data = Vec::with_capacity(total);
        let mut local = vec![0usize; vs.len()];
        for _ in 0..total {
            let mut g = 0usize;
            for i in (0..vs.len()).rev() {
                g = g * p.cpa + ranges[vs[i]].0 + local[i];
            }
            data.push(vals[g].clone());
            for i in 0..vs.len() {
                local[i] += 1;
                if local[i] < dims[i] {
                    break;
                }
                local[i] = 0;
            }
        }
        factors.push(Factor { vars, dims, data });
    }

    for &v in &p.order {
        let target = Var::Cell(v);
        let (mine, rest): (Vec<Factor<T>>, Vec<Factor<T>>) =
            factors.into_iter().partition(|f| f.vars.contains(&target));
        factors = rest;
        let len = ranges[v].1;
        let halves = (split >> v) & 1 == 1;
        if mine.is_empty() {
            let data = if halves {
                vec![T::from_count(len / 2), T::from_count(len - len / 2)]
            } else {
                vec![T::from_count(len)]
            };
            let (vars, dims) = if halves {
                (vec![Var::Half(v)], vec![2])
            } else {
                (vec![], vec![])
            };
            factors.push(Factor { vars, dims, data });
            continue;
        }
        let mut out_vars: Vec<Var> = Vec::new();
        for f in &mine {
            for x in &f.vars {
                if *x != target && !out_vars.contains(x) {
                    out_vars.push(*x);
                }
            }
        }
        if halves {
            out_vars.push(Var::Half(v));
        }
        let out_dims: Vec<usize> = out_vars.iter().map(dim_of).collect();
        // strides of each input factor for every output var, and for the eliminated var
        let mut strides: Vec<Vec<usize>> = Vec::with_capacity(mine.len());
        let mut vstride: Vec<usize> = Vec::with_capacity(mine.len());
        for f in &mine {
            let mut st = vec![0usize; out_vars.len()];
            let mut s = 1usize;
            let mut own = 0usize;
            for (x, &d) in f.vars.iter().zip(&f.dims) {
                if *x == target {
                    own = s;
                } else {
                    let j = out_vars.iter().position(|y| y == x).unwrap();
                    st[j] = s;
                }
                s *= d;
            }
            strides.push(st);
            vstride.push(own);
        }
        let total: usize = out_dims.iter().product();
        let mut data = vec![T::zero(); total];
        let mut o = vec![0usize; out_vars.len()];
        let mut base = vec![0usize; mine.len()];
        let half_len = len / 2;
        for slot in data.iter_mut() {
            for (fi, b) in base.iter_mut().enumerate() {
                *b = o.iter().zip(&strides[fi]).map(|(a, s)| a * s).sum();
            }
            let (lo, hi) = if halves {
                if o[out_vars.len() - 1] == 0 {
                    (0, half_len)
                } else {
                    (half_len, len)
                }
            } else {
                (0, len)
            };
            let mut acc = T::zero();
            'cells: for c in lo..hi {
                let first = &mine[0].data[base[0] + c * vstride[0]];
                if first.is_zero() {
                    continue;
                }
                let mut prod = first.clone();
                for fi in 1..mine.len() {
                    let x = &mine[fi].data[base[fi] + c * vstride[fi]];
                    if x.is_zero() {
                        continue 'cells;
                    }
                    prod = prod.mul(x)?;
                }
                acc.add_to(&prod)?;
            }
            *slot = acc;
            for i in 0..o.len() {
                o[i] += 1;
                if o[i] < out_dims[i] {
                    break;
                }
                o[i] = 0;
            }
        }
        factors.push(Factor {
            vars: out_vars,
            dims: out_dims,
            data,
        });
    }

    // Remaining factors depend only on half variables.
    let split_vertices: Vec<usize> = (0..p.n).filter(|&v| (split >> v) & 1 == 1).collect();
    let total = 1usize << split_vertices.len();
    let mut out = Vec::with_capacity(total);
    for j in 0..total {
        let mut prod: Option<T> = None;
        for f in &factors {
            let mut idx = 0usize;
            let mut s = 1usize;
            for (x, &d) in f.vars.iter().zip(&f.dims) {
                if let Var::Half(v) = x {
                    let t = split_vertices.iter().position(|y| y == v).unwrap();
                    idx += ((j >> t) & 1) * s;
                }
                s *= d;
            }
            let val = &f.data[idx];
            prod = Some(match prod {
                None => val.clone(),
                Some(p) => p.mul(val)?,
            });
        }
        out.push(prod.unwrap_or_else(|| T::from_count(1)));
    }
    Some(out)
}
