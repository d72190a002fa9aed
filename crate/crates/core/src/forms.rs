//! Entangled multilinear forms, paraproduct-type terms, and the condition diagnostics.
//!
//! Two engines evaluate `Lambda_E`. The naive one sums over the kernel's support cell by
//! cell in rational arithmetic and serves as the oracle. The factorized one walks the
//! diagonal blocks of a perfect dyadic kernel from the top down: on every block it
//! integrates the edge product over the `2^n` half-split children by variable
//! elimination, pairs the off-diagonal children with the kernel's constant value there,
//! and recurses into the diagonal children.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::contract::PreparedTuple;
use crate::dyadic::{ConvexTree, DyadicCube, DyadicInterval, GridModel};
use crate::hypergraph::{copy_vertex_split, duplicate_component, even_selections, Hypergraph, HypergraphError, Selection};
use crate::kernel::{DiagonalHaarCoefficients, PerfectDyadicKernel};
use crate::numerics::{pow2, root_compare, Rational, Real, Root};
use crate::stepfn::{bmo_l2, StepFunction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormError {
    #[error("no function for edge label {0:?}")]
    MissingFunction(String),
    #[error("functions and kernel live on different grid models")]
    ModelMismatch,
    #[error("kernel arrangement does not match the hypergraph")]
    Arrangement,
    #[error("factorized engine needs a perfect dyadic kernel (violation {0} at {1})")]
    NotPerfect(String, String),
    #[error("cube {0} is at the finest scale")]
    Finest(String),
    #[error("cube {0} is outside the model window")]
    OutOfModel(String),
    #[error("negative input value at cell {0:?}")]
    Negative(Vec<usize>),
    #[error("unknown edge {0}")]
    UnknownEdge(usize),
    #[error("hypergraph is not a single complete component")]
    NotComplete,
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Naive,
    Factorized,
}

/// One step function per edge label.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FunctionTuple {
    funcs: BTreeMap<String, StepFunction>,
}

impl FunctionTuple {
    pub fn new(funcs: BTreeMap<String, StepFunction>) -> Self {
        FunctionTuple { funcs }
    }

    /// The same function on every edge of `h`.
    pub fn uniform(h: &Hypergraph, f: &StepFunction) -> Self {
        FunctionTuple {
            funcs: h.edge_labels().into_iter().map(|l| (l, f.clone())).collect(),
        }
    }

    pub fn get(&self, label: &str) -> Option<&StepFunction> {
        self.funcs.get(label)
    }

    pub fn insert(&mut self, label: impl Into<String>, f: StepFunction) {
        self.funcs.insert(label.into(), f);
    }

    pub fn labels(&self) -> impl Iterator<Item = &String> {
        self.funcs.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StepFunction)> {
        self.funcs.iter()
    }

    pub fn map(&self, f: impl Fn(&StepFunction) -> StepFunction) -> FunctionTuple {
        FunctionTuple {
            funcs: self.funcs.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
        }
    }

    /// Functions in edge order of `h`.
    pub fn for_edges<'a>(&'a self, h: &Hypergraph) -> Result<Vec<&'a StepFunction>, FormError> {
        let out: Vec<&StepFunction> = h
            .edges()
            .iter()
            .map(|e| {
                self.funcs
                    .get(&e.label)
                    .ok_or_else(|| FormError::MissingFunction(e.label.clone()))
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = out.first() {
            if out.iter().any(|f| f.model() != first.model()) {
                return Err(FormError::ModelMismatch);
            }
        }
        Ok(out)
    }

    pub fn check_nonnegative(&self) -> Result<(), FormError> {
        for f in self.funcs.values() {
            if let Some(c) = f.first_negative() {
                return Err(FormError::Negative(c));
            }
        }
        Ok(())
    }

    /// Expansion of a signed tuple into nonnegative tuples with signs, by multilinearity.
    pub fn sign_expansion(&self, h: &Hypergraph) -> Vec<(bool, FunctionTuple)> {
        let labels: Vec<String> = h.edge_labels().into_iter().collect();
        let mut out = Vec::new();
        for mask in 0..(1u64 << labels.len()) {
            let mut t = FunctionTuple::default();
            let mut empty = false;
            for (i, l) in labels.iter().enumerate() {
                let f = &self.funcs[l];
                let part = if (mask >> i) & 1 == 1 {
                    f.negative_part()
                } else {
                    f.positive_part()
                };
                empty |= part.is_zero();
                t.insert(l.clone(), part);
            }
            if !empty {
                let edges_neg: usize = h
                    .edges()
                    .iter()
                    .filter(|e| {
                        let i = labels.iter().position(|l| *l == e.label).unwrap();
                        (mask >> i) & 1 == 1
                    })
                    .count();
                out.push((edges_neg % 2 == 1, t));
            }
        }
        out
    }
}

/// A tuple bound to a hypergraph, with the integer-scaled form used by the contraction.
pub struct Evaluator<'a> {
    h: &'a Hypergraph,
    model: GridModel,
    funcs: Vec<&'a StepFunction>,
    prep: PreparedTuple,
    cellvol_n: Rational,
}

impl<'a> Evaluator<'a> {
    pub fn new(h: &'a Hypergraph, f: &'a FunctionTuple) -> Result<Self, FormError> {
        let funcs = f.for_edges(h)?;
        let model = match funcs.first() {
            Some(g) => *g.model(),
            None => match f.iter().next() {
                Some((_, g)) => *g.model(),
                None => return Err(FormError::ModelMismatch),
            },
        };
        if model.r != h.r() {
            return Err(FormError::ModelMismatch);
        }
        let prep = PreparedTuple::new(h, &funcs);
        let prep = PreparedTuple {
            cpa: model.cells_per_axis(),
            ..prep
        };
        Ok(Evaluator {
            h,
            model,
            funcs,
            prep,
            cellvol_n: pow2(-model.fine * h.n() as i32),
        })
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    fn vertex_ranges(&self, q: &DyadicCube) -> Vec<(usize, usize)> {
        let per_class = self.model.cube_ranges(q);
        (0..self.h.n()).map(|v| per_class[self.h.class_of(v)]).collect()
    }

    /// `prod_e F_e` at one n-dimensional cell.
    fn edge_product(&self, idx: &[usize]) -> Rational {
        let mut acc = Rational::one();
        for (e, f) in self.h.edges().iter().zip(&self.funcs) {
            let x: Vec<usize> = e.vertices.iter().map(|&v| idx[v]).collect();
            let val = f.value(&x);
            if val.is_zero() {
                return Rational::zero();
            }
            acc *= val;
        }
        acc
    }

    /// `[F]_{H,S,Q}`.
    pub fn paraproduct_term(&self, s: Selection, q: &DyadicCube) -> Rational {
        if q.k <= -self.model.fine {
            if !s.is_empty() {
                return Rational::zero();
            }
            let per_class: Vec<usize> = self.model.cube_ranges(q).iter().map(|r| r.0).collect();
            let idx: Vec<usize> = (0..self.h.n()).map(|v| per_class[self.h.class_of(v)]).collect();
            return self.edge_product(&idx);
        }
        let ranges = self.vertex_ranges(q);
        let t = self.prep.child_integrals(&ranges, s.0, &self.cellvol_n);
        let mut acc = Rational::zero();
        for (j, v) in t.iter().enumerate() {
            if j.count_ones() % 2 == 0 {
                acc += v;
            } else {
                acc -= v;
            }
        }
        acc * pow2(-q.k * self.h.n() as i32)
    }

    /// `[F]_{H,(),Q}`, the average of the edge product over the diagonal block.
    pub fn block_average(&self, q: &DyadicCube) -> Rational {
        self.paraproduct_term(Selection::empty(), q)
    }

    /// Box operator, also defined at the finest scale where it vanishes.
    fn box_any(&self, q: &DyadicCube) -> Rational {
        let children = q.children();
        let sum = children
            .iter()
            .fold(Rational::zero(), |a, c| a + self.block_average(c));
        sum * pow2(-(self.model.r as i32)) - self.block_average(q)
    }

    pub fn box_op(&self, q: &DyadicCube) -> Result<Rational, FormError> {
        if q.k <= -self.model.fine {
            return Err(FormError::Finest(q.to_string()));
        }
        Ok(self.box_any(q))
    }

    /// `box - sum over even nonempty selections`, which vanishes identically.
    pub fn difference_identity_residual(&self, q: &DyadicCube) -> Result<Rational, FormError> {
        let b = self.box_op(q)?;
        let s = even_selections(self.h)
            .into_iter()
            .fold(Rational::zero(), |a, s| a + self.paraproduct_term(s, q));
        Ok(b - s)
    }

    /// Integral of the edge product over an arbitrary box of cells.
    pub fn box_integral(&self, ranges: &[(usize, usize)]) -> Rational {
        self.prep.child_integrals(ranges, 0, &self.cellvol_n)[0].clone()
    }

    pub fn form_naive(&self, k: &PerfectDyadicKernel) -> Result<Rational, FormError> {
        self.check_kernel(k)?;
        let mut acc = Rational::zero();
        for (&p, kv) in k.values() {
            let idx = k.nmodel().unpack(p);
            let prod = self.edge_product(&idx);
            if !prod.is_zero() {
                acc += prod * kv;
            }
        }
        Ok(acc * &self.cellvol_n)
    }

    fn check_kernel(&self, k: &PerfectDyadicKernel) -> Result<(), FormError> {
        if !k.consistent_with(self.h) {
            return Err(FormError::Arrangement);
        }
        if *k.model() != self.model {
            return Err(FormError::ModelMismatch);
        }
        Ok(())
    }

    pub fn form_factorized(&self, k: &PerfectDyadicKernel) -> Result<Rational, FormError> {
        self.check_kernel(k)?;
        let rep = k.perfect_report();
        if !rep.is_valid() {
            return Err(FormError::NotPerfect(
                crate::numerics::format_rational(&rep.worst),
                rep.location.clone().unwrap_or_default(),
            ));
        }
        if k.is_zero() {
            return Ok(Rational::zero());
        }
        let top_t = self.model.axis_bits() as i32;
        let mut support: Vec<HashSet<usize>> = vec![HashSet::new(); top_t.max(1) as usize];
        for &p in k.values().keys() {
            for t in 1..top_t {
                match k.diag_key(p, t) {
                    Some(key) => {
                        support[t as usize].insert(key);
                    }
                    None => break,
                }
            }
        }
        let ctx = Whitney {
            ev: self,
            k,
            support: &support,
        };
        let mut acc = Rational::zero();
        let cpa = self.model.cells_per_axis();
        ctx.block(&vec![0; self.model.r], cpa, &mut acc);
        Ok(acc * &self.cellvol_n / Rational::from_integer(self.prep.denom.clone()))
    }

    pub fn form(&self, k: &PerfectDyadicKernel, engine: Engine) -> Result<Rational, FormError> {
        match engine {
            Engine::Naive => self.form_naive(k),
            Engine::Factorized => self.form_factorized(k),
        }
    }

    /// Partial integral in every variable except those of edge `e0`.
    pub fn t_e0(&self, k: &PerfectDyadicKernel, e0: usize) -> Result<StepFunction, FormError> {
        self.check_kernel(k)?;
        let edge = self.h.edges().get(e0).ok_or(FormError::UnknownEdge(e0))?;
        let bits = self.model.axis_bits();
        let pack = |vs: &[usize], idx: &[usize]| vs.iter().rev().fold(0usize, |a, &v| (a << bits) | idx[v]);
        // Integer numerators over one common denominator; Rational products would reduce every step.
        let kden = k.values().values().fold(BigInt::one(), |a, v| a.lcm(v.denom()));
        let mut den = kden.clone();
        for (e, f) in self.funcs.iter().enumerate() {
            if e != e0 {
                den *= f.values().iter().fold(BigInt::one(), |a, v| a.lcm(v.denom()));
            }
        }
        let mut acc = vec![BigInt::zero(); self.model.num_cells()];
        'cells: for (&p, kv) in k.values() {
            let idx = k.nmodel().unpack(p);
            let mut prod = kv.numer() * (&kden / kv.denom());
            for (e, ed) in self.h.edges().iter().enumerate() {
                if e == e0 {
                    continue;
                }
                let x = &self.prep.big[e][pack(&ed.vertices, &idx)];
                if x.is_zero() {
                    continue 'cells;
                }
                if !x.is_one() {
                    prod *= x;
                }
            }
            acc[pack(&edge.vertices, &idx)] += prod;
        }
        den <<= (self.model.fine as usize) * (self.h.n() - self.model.r);
        let vals = acc.into_iter().map(|v| Rational::new(v, den.clone())).collect();
        Ok(StepFunction::new(self.model, vals).expect("grid sized"))
    }
}

struct Whitney<'e, 'a> {
    ev: &'e Evaluator<'a>,
    k: &'e PerfectDyadicKernel,
    support: &'e [HashSet<usize>],
}

impl<'e> Whitney<'e, '_> {
    fn kernel_at(&self, idx: &[usize]) -> Option<&'e Rational> {
        self.k.values().get(&self.k.nmodel().pack(idx)).filter(|v| !v.is_zero())
    }

    /// Block whose class `i` covers cells `start[i] .. start[i] + len`.
    fn block(&self, start: &[usize], len: usize, acc: &mut Rational) {
        let h = self.ev.h;
        let n = h.n();
        let half = len / 2;
        let mut direct: Vec<(usize, &Rational)> = Vec::new();
        let mut recurse: Vec<Vec<usize>> = Vec::new();
        for c in 0..(1usize << n) {
            let mut class_bit = vec![None; h.r()];
            let mut diag = true;
            for v in 0..n {
                let b = (c >> v) & 1;
                let cl = h.class_of(v);
                match class_bit[cl] {
                    None => class_bit[cl] = Some(b),
                    Some(x) if x != b => diag = false,
                    _ => {}
                }
            }
            if diag && half >= 2 {
                let child: Vec<usize> = (0..h.r())
                    .map(|i| start[i] + class_bit[i].unwrap_or(0) * half)
                    .collect();
                let t = half.trailing_zeros();
                let w = self.ev.model.axis_bits() - t;
                let key = child.iter().enumerate().fold(0usize, |a, (i, &s)| a | (s >> t) << (i as u32 * w));
                if self.support[t as usize].contains(&key) {
                    recurse.push(child);
                }
            } else {
                let rep: Vec<usize> = (0..n)
                    .map(|v| start[h.class_of(v)] + ((c >> v) & 1) * half)
                    .collect();
                if let Some(kv) = self.kernel_at(&rep) {
                    direct.push((c, kv));
                }
            }
        }
        if !direct.is_empty() {
            let ranges: Vec<(usize, usize)> =
                (0..n).map(|v| (start[h.class_of(v)], len)).collect();
            let all = (1u64 << n) - 1;
            let t = self.ev.prep.child_sums(&ranges, all);
            for (c, kv) in direct {
                *acc += kv * Rational::from_integer(t[c].clone());
            }
        }
        for child in recurse {
            self.block(&child, half, acc);
        }
    }
}

pub fn evaluate_form(
    h: &Hypergraph,
    k: &PerfectDyadicKernel,
    f: &FunctionTuple,
    engine: Engine,
) -> Result<Rational, FormError> {
    Evaluator::new(h, f)?.form(k, engine)
}

pub fn paraproduct_term(h: &Hypergraph, s: Selection, q: &DyadicCube, f: &FunctionTuple) -> Result<Rational, FormError> {
    let ev = Evaluator::new(h, f)?;
    if q.dim() != ev.model.r || q.k > ev.model.top {
        return Err(FormError::OutOfModel(q.to_string()));
    }
    Ok(ev.paraproduct_term(s, q))
}

pub fn box_op(h: &Hypergraph, q: &DyadicCube, f: &FunctionTuple) -> Result<Rational, FormError> {
    Evaluator::new(h, f)?.box_op(q)
}

pub fn difference_identity_residual(h: &Hypergraph, q: &DyadicCube, f: &FunctionTuple) -> Result<Rational, FormError> {
    Evaluator::new(h, f)?.difference_identity_residual(q)
}

/// `sum over even S of int f prod_{S} h^1 prod_{not S} h^0` for `f >= 0` on an m-dimensional grid.
pub fn symmetrized_sum(f: &StepFunction, intervals: &[DyadicInterval]) -> Result<Rational, FormError> {
    let model = f.model();
    if intervals.len() != model.r {
        return Err(FormError::ModelMismatch);
    }
    if let Some(c) = f.first_negative() {
        return Err(FormError::Negative(c));
    }
    let m = intervals.len();
    let splittable: Vec<bool> = intervals.iter().map(|i| i.k > -model.fine).collect();
    let ranges: Vec<(usize, usize)> = intervals.iter().map(|i| model.interval_cells(i)).collect();
    // child sums over halves of splittable axes
    let mut t = vec![Rational::zero(); 1 << m];
    crate::stepfn::for_each_in_box(&ranges, |idx| {
        let c = (0..m).fold(0usize, |acc, a| {
            let right = splittable[a] && idx[a] >= ranges[a].0 + ranges[a].1 / 2;
            acc | ((right as usize) << a)
        });
        t[c] += f.value(idx);
    });
    let mut total = Rational::zero();
    for s in 0..(1usize << m) {
        if s.count_ones() % 2 == 1 || (0..m).any(|a| (s >> a) & 1 == 1 && !splittable[a]) {
            continue;
        }
        for (c, v) in t.iter().enumerate() {
            if (s & c).count_ones() % 2 == 0 {
                total += v;
            } else {
                total -= v;
            }
        }
    }
    let vol = intervals.iter().fold(Rational::one(), |a, i| a * i.len());
    let cell = model.cell_volume();
    Ok(total * cell / vol)
}

/// `prod_e [F_e^M]_Q^{1/M}` against `[F]_{H,(),Q}` on a complete hypergraph.
#[derive(Clone, Debug)]
pub struct HolderGap {
    pub product: Root,
    pub form: Rational,
    /// Exact sign of the gap.
    pub nonnegative: bool,
}

impl HolderGap {
    pub fn gap(&self) -> Real {
        Real::Sum(vec![Real::Root(self.product.clone()), Real::Rat(-self.form.clone())])
    }
}

pub fn holder_gap(h: &Hypergraph, q: &DyadicCube, f: &FunctionTuple) -> Result<HolderGap, FormError> {
    let m = h.thresholds().complete_m.ok_or(FormError::NotComplete)? as u32;
    f.check_nonnegative()?;
    let ev = Evaluator::new(h, f)?;
    let mut product = Root::one();
    for g in &ev.funcs {
        product = product.mul(&g.power_average(q, m).map_err(|_| FormError::Negative(vec![]))?);
    }
    let form = ev.block_average(q);
    let nonnegative = root_compare(&product, &Root::rational(form.clone())) != std::cmp::Ordering::Less;
    Ok(HolderGap {
        product,
        form,
        nonnegative,
    })
}

/// A selection, its coefficients (or the constant 1), and a convex tree.
#[derive(Clone, Debug)]
pub struct LocalizedForm {
    pub selection: Selection,
    pub coefficients: Option<BTreeMap<DyadicCube, Rational>>,
    pub tree: ConvexTree,
}

impl LocalizedForm {
    fn lambda(&self, q: &DyadicCube) -> Rational {
        match &self.coefficients {
            None => Rational::one(),
            Some(m) => m.get(q).cloned().unwrap_or_else(Rational::zero),
        }
    }
}

/// `sum_{Q in tree} |Q| lambda_Q [F]_{H,S,Q}`.
pub fn evaluate_entangled_paraproduct(h: &Hypergraph, lf: &LocalizedForm, f: &FunctionTuple) -> Result<Rational, FormError> {
    let ev = Evaluator::new(h, f)?;
    Ok(localized_sum(&ev, lf))
}

fn localized_sum(ev: &Evaluator, lf: &LocalizedForm) -> Rational {
    let mut acc = Rational::zero();
    for q in &lf.tree.members {
        let lam = lf.lambda(q);
        if lam.is_zero() {
            continue;
        }
        acc += q.volume() * lam * ev.paraproduct_term(lf.selection, q);
    }
    acc
}

/// `sum_B coarse_B int_B prod_e F_e` over the top n-blocks.
pub fn coarse_pairing(h: &Hypergraph, c: &DiagonalHaarCoefficients, f: &FunctionTuple) -> Result<Rational, FormError> {
    let ev = Evaluator::new(h, f)?;
    Ok(coarse_with(&ev, c))
}

fn coarse_with(ev: &Evaluator, c: &DiagonalHaarCoefficients) -> Rational {
    let side = 1usize << (ev.model.top + ev.model.fine);
    let mut acc = Rational::zero();
    for (b, v) in &c.coarse {
        let ranges: Vec<(usize, usize)> = b.pos.iter().map(|&l| ((l + 1) as usize * side, side)).collect();
        acc += v * ev.box_integral(&ranges);
    }
    acc
}

/// `sum_S sum_Q |Q| lambda^S_Q [F]_{H,S,Q}` plus the coarse pairing.
pub fn decomposition_total(h: &Hypergraph, c: &DiagonalHaarCoefficients, f: &FunctionTuple) -> Result<Rational, FormError> {
    let ev = Evaluator::new(h, f)?;
    let mut acc = coarse_with(&ev, c);
    for (s, m) in &c.per_selection {
        for (q, lam) in m {
            acc += q.volume() * lam * ev.paraproduct_term(*s, q);
        }
    }
    Ok(acc)
}

pub fn t_e0(h: &Hypergraph, k: &PerfectDyadicKernel, e0: usize, f: &FunctionTuple) -> Result<StepFunction, FormError> {
    Evaluator::new(h, f)?.t_e0(k, e0)
}

/// Measured constants for the weak boundedness and T(1)-type conditions.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub window: (i32, i32),
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub wbp: Rational,
    pub wbp_at: Option<String>,
    #[serde(serialize_with = "ser_roots")]
    pub t1bmo: Vec<Root>,
    #[serde(serialize_with = "ser_rationals")]
    pub l1ratio: Vec<Rational>,
}

fn ser_roots<S: serde::Serializer>(v: &[Root], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

fn ser_rationals<S: serde::Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(crate::numerics::format_rational))
}

pub fn condition_diagnostics(h: &Hypergraph, k: &PerfectDyadicKernel) -> Result<ConditionReport, FormError> {
    if !k.consistent_with(h) {
        return Err(FormError::Arrangement);
    }
    let model = *k.model();
    let n = h.n();
    let r = model.r;
    let isolated: BTreeSet<usize> = h.isolated().into_iter().collect();
    let cellvol_n = pow2(-model.fine * n as i32);
    let cellvol_rest = pow2(-model.fine * (n - r) as i32);
    let cells: Vec<(Vec<usize>, &Rational)> =
        k.values().iter().map(|(&p, v)| (k.nmodel().unpack(p), v)).collect();
    let ones = FunctionTuple::uniform(h, &StepFunction::constant(model, Rational::one()));
    let ev = Evaluator::new(h, &ones)?;

    let mut wbp = Rational::zero();
    let mut wbp_at = None;
    let mut l1ratio = vec![Rational::zero(); h.edges().len()];
    for scale in model.scales() {
        let shift = scale + model.fine;
        let mut blocks: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
        let mut partial: Vec<HashMap<(Vec<usize>, usize), Rational>> = vec![HashMap::new(); h.edges().len()];
        for (idx, v) in &cells {
            let mut slot = vec![usize::MAX; r];
            let mut diag = true;
            for (vx, &c) in idx.iter().enumerate() {
                if isolated.contains(&vx) {
                    continue;
                }
                let s = c >> shift;
                let cl = h.class_of(vx);
                if slot[cl] == usize::MAX {
                    slot[cl] = s;
                } else if slot[cl] != s {
                    diag = false;
                    break;
                }
            }
            if !diag || slot.contains(&usize::MAX) {
                continue;
            }
            *blocks.entry(slot.clone()).or_insert_with(Rational::zero) += *v;
            for (e, ed) in h.edges().iter().enumerate() {
                let y: Vec<usize> = ed.vertices.iter().map(|&vx| idx[vx]).collect();
                *partial[e]
                    .entry((slot.clone(), model.pack(&y)))
                    .or_insert_with(Rational::zero) += *v;
            }
        }
        let qvol = pow2(scale * r as i32);
        let off = 1i64 << (model.top - scale);
        for (slot, sum) in &blocks {
            let val = (sum * &cellvol_n).abs() / &qvol;
            if val > wbp {
                wbp = val;
                wbp_at = Some(
                    DyadicCube::new(scale, slot.iter().map(|&s| s as i64 - off).collect()).to_string(),
                );
            }
        }
        for (e, map) in partial.iter().enumerate() {
            let mut per_q: BTreeMap<&Vec<usize>, Rational> = BTreeMap::new();
            for ((slot, _), v) in map {
                *per_q.entry(slot).or_insert_with(Rational::zero) += v.abs();
            }
            for (_, s) in per_q {
                let val = s * &cellvol_rest * model.cell_volume() / &qvol;
                if val > l1ratio[e] {
                    l1ratio[e] = val;
                }
            }
        }
    }
    let mut t1bmo = Vec::with_capacity(h.edges().len());
    for e in 0..h.edges().len() {
        let t = ev.t_e0(k, e)?;
        t1bmo.push(bmo_l2(&t).0);
    }
    Ok(ConditionReport {
        window: (model.top, model.fine),
        wbp,
        wbp_at,
        t1bmo,
        l1ratio,
    })
}

/// Measured ratio of a localized form against its maximal power averages.
#[derive(Clone, Debug)]
pub struct TreeConstant {
    pub numerator: Rational,
    pub denominator: Root,
    pub ratio: Root,
}

pub fn tree_constant(h: &Hypergraph, lf: &LocalizedForm, f: &FunctionTuple) -> Result<TreeConstant, FormError> {
    f.check_nonnegative()?;
    let ev = Evaluator::new(h, f)?;
    let numerator = localized_sum(&ev, lf).abs();
    let d = h.thresholds().per_edge;
    let cubes: Vec<DyadicCube> = lf
        .tree
        .members
        .iter()
        .cloned()
        .chain(lf.tree.leaves())
        .collect();
    let mut denominator = Root::rational(lf.tree.root.volume());
    for (e, g) in ev.funcs.iter().enumerate() {
        let de = d[e].max(1) as u32;
        let pyr = g.pow(de).pyramid();
        let best = cubes
            .iter()
            .map(|q| pyr.average(q).clone())
            .max()
            .unwrap_or_else(Rational::zero);
        denominator = denominator.mul(&Root::new(best, de).expect("nonnegative"));
    }
    let ratio = match denominator.recip() {
        None => Root::zero(),
        Some(inv) => inv.mul(&Root::rational(numerator.clone())),
    };
    Ok(TreeConstant {
        numerator,
        denominator,
        ratio,
    })
}

/// Both sides of `sum_T |Q| box B_Q = sum_leaves |Q| B_Q - |Q_T| B_{Q_T}`.
pub fn telescoping(h: &Hypergraph, tree: &ConvexTree, f: &FunctionTuple) -> Result<(Rational, Rational), FormError> {
    let ev = Evaluator::new(h, f)?;
    let lhs = tree
        .members
        .iter()
        .fold(Rational::zero(), |a, q| a + q.volume() * ev.box_any(q));
    let leaves = tree
        .leaves()
        .iter()
        .fold(Rational::zero(), |a, q| a + q.volume() * ev.block_average(q));
    let rhs = leaves - tree.root.volume() * ev.block_average(&tree.root);
    Ok((lhs, rhs))
}

/// `([F]_{H,S,Q})^2` and `[F]_{H',S',Q}` for the doubled hypergraph.
pub fn duplicate_identity(h: &Hypergraph, s: Selection, q: &DyadicCube, f: &FunctionTuple) -> Result<(Rational, Rational), FormError> {
    let (h2, s2) = duplicate_component(h, s)?;
    let a = Evaluator::new(h, f)?.paraproduct_term(s, q);
    let b = Evaluator::new(&h2, f)?.paraproduct_term(s2, q);
    Ok((&a * &a, b))
}

#[derive(Clone, Debug)]
pub struct SplitCheck {
    pub lhs: Rational,
    pub rhs: Rational,
    pub holds: bool,
}

/// `|[F]_{H,S,Q}| <= delta^{-1} [F]_{H',R,Q} + delta [F]_{H'',R,Q}` for nonnegative tuples.
pub fn split_inequality(
    h: &Hypergraph,
    s: Selection,
    v1: usize,
    v2: usize,
    q: &DyadicCube,
    f: &FunctionTuple,
    delta: &Rational,
) -> Result<SplitCheck, FormError> {
    f.check_nonnegative()?;
    let ((h1, r1), (h2, r2)) = copy_vertex_split(h, s, v1, v2)?;
    let lhs = Evaluator::new(h, f)?.paraproduct_term(s, q).abs();
    let a = Evaluator::new(&h1, f)?.paraproduct_term(r1, q);
    let b = Evaluator::new(&h2, f)?.paraproduct_term(r2, q);
    let rhs = a / delta + b * delta;
    Ok(SplitCheck {
        holds: lhs <= rhs,
        lhs,
        rhs,
    })
}

/// `[F^d]_Q` for every edge function, used by several checks.
pub fn power_averages(h: &Hypergraph, f: &FunctionTuple, q: &DyadicCube) -> Result<Vec<Rational>, FormError> {
    let d = h.thresholds().per_edge;
    let funcs = f.for_edges(h)?;
    Ok(funcs
        .iter()
        .zip(d)
        .map(|(g, de)| g.pow(de as u32).average(q))
        .collect())
}
