//! Multilinear Muckenhoupt constants, dual weights, and weighted-estimate measurements.
//!
//! For exponents `p_e > d_e` with `sum 1/p_e = 1` the dual weight is
//! `h_e = w_e^{-d_e/(p_e - d_e)}`. Its cell values are exact roots; when every dual
//! exponent is an integer they are rational and all averages stay rational.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{DyadicCube, GridModel};
use crate::forms::{evaluate_form, Engine, FormError, FunctionTuple};
use crate::hypergraph::{feasible_exponents, Hypergraph};
use crate::kernel::PerfectDyadicKernel;
use crate::numerics::{int, rpow, Certainty, Enclosure, NumericsError, Rational, Real, Root, MAX_BITS};
use crate::sparse::{sparse_term, PowerAverages, SparseError, SparseFamily};
use crate::stepfn::{lp_norm, weighted_maximal, Exponent, StepError, StepFunction};

/// Precision ceiling for comparisons that enclosures cannot settle.
const MAX_CHECK_BITS: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WeightError {
    #[error("expected {expected} entries, one per edge, got {got}")]
    Count { expected: usize, got: usize },
    #[error("reciprocal exponents sum to {0}, not 1")]
    Sum(String),
    #[error("edge {edge}: exponent {p} is not above the threshold {d}")]
    BelowThreshold { edge: usize, p: String, d: u64 },
    #[error("exponent must exceed d = {0}")]
    MaximalExponent(u32),
    #[error("normalization fails at cell {0:?}")]
    Normalization(Vec<usize>),
    #[error("the synthesized weight is irrational at cell {0:?}")]
    NonRational(Vec<usize>),
    #[error("no exponent tuple exists: sum of 1/d_e is at most 1")]
    Infeasible,
    #[error("the last exponent is infinite, so the last weight is unconstrained")]
    FreeLastWeight,
    #[error("denominator vanishes")]
    ZeroDenominator,
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Per-edge exponents `p_e in (d_e, inf]` with `sum 1/p_e = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExponentTuple {
    pub p: Vec<Exponent>,
    pub d: Vec<u64>,
}

impl ExponentTuple {
    pub fn new(h: &Hypergraph, p: Vec<Exponent>) -> Result<Self, WeightError> {
        let d = h.thresholds().per_edge;
        if p.len() != d.len() {
            return Err(WeightError::Count {
                expected: d.len(),
                got: p.len(),
            });
        }
        let sum = p.iter().fold(Rational::zero(), |a, x| a + x.recip());
        if !sum.is_one() {
            return Err(WeightError::Sum(crate::numerics::format_rational(&sum)));
        }
        for (e, (pe, &de)) in p.iter().zip(&d).enumerate() {
            if let Exponent::Finite(v) = pe {
                if *v <= int(de as i64) {
                    return Err(WeightError::BelowThreshold {
                        edge: e,
                        p: pe.to_string(),
                        d: de,
                    });
                }
            }
        }
        Ok(ExponentTuple { p, d })
    }

    /// The canonical feasible tuple of the hypergraph.
    pub fn feasible(h: &Hypergraph) -> Result<Self, WeightError> {
        let d = h.thresholds().per_edge;
        let p = feasible_exponents(&d).ok_or(WeightError::Infeasible)?;
        ExponentTuple::new(h, p.into_iter().map(Exponent::Finite).collect())
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `r_e = 1/d_e - 1/p_e`.
    pub fn r_e(&self, e: usize) -> Rational {
        Rational::new(1.into(), self.d[e].into()) - self.p[e].recip()
    }

    pub fn r(&self) -> Rational {
        (0..self.len()).fold(Rational::zero(), |a, e| a + self.r_e(e))
    }

    /// `d_e / (p_e - d_e)`, zero at infinity; the dual weight is `w_e^{-this}`.
    pub fn dual_exponent(&self, e: usize) -> Rational {
        match &self.p[e] {
            Exponent::Infinite => Rational::zero(),
            Exponent::Finite(p) => {
                let d = int(self.d[e] as i64);
                &d / (p - &d)
            }
        }
    }

    /// `m = max_e 1/(r_e p_e) = max_e d_e/(p_e - d_e)`.
    pub fn m(&self) -> Rational {
        (0..self.len())
            .map(|e| self.dual_exponent(e))
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// `max_e p_e/(p_e - d_e) = 1 + m`, the power of the Muckenhoupt constant.
    pub fn muckenhoupt_power(&self) -> Rational {
        Rational::one() + self.m()
    }
}

/// Strictly positive weights, one per edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightTuple {
    pub w: Vec<StepFunction>,
}

impl WeightTuple {
    pub fn new(w: Vec<StepFunction>) -> Result<Self, WeightError> {
        for f in &w {
            f.check_weight()?;
            if f.model() != w[0].model() {
                return Err(StepError::ModelMismatch.into());
            }
        }
        Ok(WeightTuple { w })
    }

    pub fn ones(model: GridModel, edges: usize) -> Self {
        WeightTuple {
            w: vec![StepFunction::constant(model, Rational::one()); edges],
        }
    }

    pub fn model(&self) -> Option<&GridModel> {
        self.w.first().map(|f| f.model())
    }

    pub fn dual(&self, p: &ExponentTuple, e: usize) -> DualWeight {
        DualWeight::new(&self.w[e], p.dual_exponent(e))
    }
}

/// `h = w^{-a}` cellwise, kept exact.
#[derive(Clone, Debug)]
pub struct DualWeight {
    pub exponent: Rational,
    pub model: GridModel,
    pub cells: Vec<Root>,
    /// Present when every cell value is rational.
    pub rational: Option<StepFunction>,
}

impl DualWeight {
    pub fn new(w: &StepFunction, a: Rational) -> Self {
        let num = a.numer().to_u32().expect("small exponent numerator");
        let den = a.denom().to_u32().expect("small exponent denominator");
        let cells: Vec<Root> = w
            .values()
            .iter()
            .map(|v| Root::new(rpow(&v.recip(), num), den).expect("positive weight"))
            .collect();
        let rational = cells
            .iter()
            .map(|c| c.as_rational())
            .collect::<Option<Vec<_>>>()
            .map(|v| StepFunction::new(*w.model(), v).expect("same length"));
        DualWeight {
            exponent: a,
            model: *w.model(),
            cells,
            rational,
        }
    }

    /// `sum_{c in cells} h(c) * cell volume` as an exact expression.
    pub fn integral_over(&self, cells: &[usize]) -> Real {
        let vol = self.model.cell_volume();
        if let Some(f) = &self.rational {
            let s = cells.iter().fold(Rational::zero(), |a, &c| a + &f.values()[c]);
            return Real::Rat(s * vol);
        }
        Real::Product(vec![
            Real::Rat(vol),
            Real::Sum(cells.iter().map(|&c| Real::Root(self.cells[c].clone())).collect()),
        ])
    }

    pub fn average(&self, q: &DyadicCube) -> Real {
        let cells = cube_cells(&self.model, q);
        let inv = Rational::new(1.into(), (cells.len() as u64).into()) / self.model.cell_volume();
        match self.integral_over(&cells) {
            Real::Rat(x) => Real::Rat(x * inv),
            other => Real::Product(vec![Real::Rat(inv), other]),
        }
    }

    /// Lower and upper cell values on the `2^-bits` grid.
    fn cell_bounds(&self, bits: u32) -> (StepFunction, StepFunction) {
        let (lo, hi): (Vec<Rational>, Vec<Rational>) = self
            .cells
            .iter()
            .map(|c| {
                let e = c.enclose_bits(bits);
                (e.lo, e.hi)
            })
            .unzip();
        (
            StepFunction::new(self.model, lo).unwrap(),
            StepFunction::new(self.model, hi).unwrap(),
        )
    }
}

fn cube_cells(model: &GridModel, q: &DyadicCube) -> Vec<usize> {
    let mut out = Vec::new();
    crate::stepfn::for_each_in_box(&model.cube_ranges(q), |idx| out.push(model.pack(idx)));
    out
}

/// Exact cellwise check of `prod_e w_e^{1/p_e} = 1`, by raising to the common
/// denominator of the `1/p_e`.
pub fn check_normalization(w: &WeightTuple, p: &ExponentTuple) -> Result<(), WeightError> {
    if w.w.len() != p.len() {
        return Err(WeightError::Count {
            expected: p.len(),
            got: w.w.len(),
        });
    }
    let l = p.p.iter().fold(num_bigint::BigInt::one(), |a, x| a.lcm(x.recip().denom()));
    let powers: Vec<u32> = p
        .p
        .iter()
        .map(|x| (x.recip() * Rational::from_integer(l.clone())).to_integer().to_u32().expect("small"))
        .collect();
    let Some(model) = w.model() else { return Ok(()) };
    for c in 0..model.num_cells() {
        let prod = w
            .w
            .iter()
            .zip(&powers)
            .fold(Rational::one(), |a, (f, &k)| a * rpow(&f.values()[c], k));
        if !prod.is_one() {
            return Err(WeightError::Normalization(model.unpack(c)));
        }
    }
    Ok(())
}

/// Chooses the last weight so that the normalization holds, when that weight is rational.
pub fn synthesize_last_weight(
    others: &[StepFunction],
    p: &ExponentTuple,
) -> Result<StepFunction, WeightError> {
    if others.len() + 1 != p.len() {
        return Err(WeightError::Count {
            expected: p.len() - 1,
            got: others.len(),
        });
    }
    let last = p.p.last().unwrap();
    let Exponent::Finite(pl) = last else {
        return Err(WeightError::FreeLastWeight);
    };
    // w_last = prod_e w_e^{-p_last/p_e}
    let model = *others[0].model();
    let mut values = Vec::with_capacity(model.num_cells());
    for c in 0..model.num_cells() {
        let mut acc = Root::one();
        for (f, pe) in others.iter().zip(&p.p) {
            let t = pl * pe.recip();
            if t.is_zero() {
                continue;
            }
            let num = t.numer().to_u32().expect("small");
            let den = t.denom().to_u32().expect("small");
            acc = acc.mul(&Root::new(rpow(&f.values()[c].recip(), num), den)?);
        }
        match acc.as_rational() {
            Some(v) => values.push(v),
            None => return Err(WeightError::NonRational(model.unpack(c))),
        }
    }
    Ok(StepFunction::new(model, values)?)
}

/// `[w]_{p,d} = sup_Q prod_e [h_e]_Q^{1/d_e - 1/p_e}` over the model cubes.
#[derive(Clone, Debug)]
pub struct MuckenhouptConstant {
    pub value: Real,
    /// Exact value and a maximizing cube, when every dual weight is rational.
    pub exact: Option<(Root, DyadicCube)>,
}

impl MuckenhouptConstant {
    pub fn enclose(&self, width: &Rational) -> Result<Enclosure, NumericsError> {
        match &self.exact {
            Some((r, _)) => Real::Root(r.clone()).enclose(width),
            None => self.value.enclose(width),
        }
    }
}

pub fn muckenhoupt_constant(w: &WeightTuple, p: &ExponentTuple) -> Result<MuckenhouptConstant, WeightError> {
    check_normalization(w, p)?;
    let model = *w.model().ok_or(WeightError::Count { expected: 1, got: 0 })?;
    let duals: Vec<DualWeight> = (0..p.len()).map(|e| w.dual(p, e)).collect();
    let exps: Vec<(u32, u32)> = (0..p.len())
        .map(|e| {
            let r = p.r_e(e);
            (r.numer().to_u32().unwrap(), r.denom().to_u32().unwrap())
        })
        .collect();
    if duals.iter().all(|d| d.rational.is_some()) {
        let pyr: Vec<_> = duals.iter().map(|d| d.rational.as_ref().unwrap().pyramid()).collect();
        let mut best: Option<(Root, DyadicCube)> = None;
        for q in model.all_cubes() {
            let mut t = Root::one();
            for (py, &(a, b)) in pyr.iter().zip(&exps) {
                t = t.mul(&Root::rational(py.average(&q).clone()).pow_ratio(a, b));
            }
            if best.as_ref().is_none_or(|(b, _)| t > *b) {
                best = Some((t, q));
            }
        }
        let (r, q) = best.unwrap();
        return Ok(MuckenhouptConstant {
            value: Real::Root(r.clone()),
            exact: Some((r, q)),
        });
    }
    let terms = model
        .all_cubes()
        .iter()
        .map(|q| muck_term(&duals, p, q))
        .collect();
    Ok(MuckenhouptConstant {
        value: Real::Max(terms),
        exact: None,
    })
}

fn muck_term(duals: &[DualWeight], p: &ExponentTuple, q: &DyadicCube) -> Real {
    Real::Product(
        duals
            .iter()
            .enumerate()
            .map(|(e, d)| d.average(q).pow(p.r_e(e)))
            .collect(),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedRatio {
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub lambda: Rational,
    pub muckenhoupt: Enclosure,
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub power: Rational,
    pub denominator: Enclosure,
    pub ratio: Enclosure,
}

/// Encloses `num / den` for a positive expression `den`, refining until the width fits.
fn ratio_enclosure(num: &Rational, den: &Real, width: &Rational) -> Result<(Enclosure, Enclosure), WeightError> {
    let mut bits = 32;
    while bits <= MAX_BITS {
        if let Some(d) = den.enclose_bits(bits) {
            if d.hi.is_zero() {
                return Err(WeightError::ZeroDenominator);
            }
            if let Some(inv) = d.recip() {
                let r = inv.mul(&Enclosure::point(num.clone()));
                if &r.width() <= width {
                    return Ok((d, r));
                }
            }
        }
        bits *= 2;
    }
    Err(NumericsError::PrecisionExhausted(MAX_BITS).into())
}

/// `|Lambda_E(F)| / ([w]^{max p/(p-d)} prod_e ||F_e||_{L^{p_e}(w_e)})`.
pub fn weighted_estimate_ratio(
    h: &Hypergraph,
    k: &PerfectDyadicKernel,
    f: &FunctionTuple,
    w: &WeightTuple,
    p: &ExponentTuple,
    engine: Engine,
    width: &Rational,
) -> Result<WeightedRatio, WeightError> {
    let lambda = evaluate_form(h, k, f, engine)?;
    let muck = muckenhoupt_constant(w, p)?;
    let power = p.muckenhoupt_power();
    let funcs = f.for_edges(h)?;
    let mut parts = vec![muck_real(&muck).pow(power.clone())];
    for (e, g) in funcs.iter().enumerate() {
        parts.push(lp_norm(g, &p.p[e], Some(&w.w[e]))?);
    }
    let den = Real::Product(parts);
    let (denominator, ratio) = ratio_enclosure(&lambda.abs(), &den, width)?;
    Ok(WeightedRatio {
        lambda,
        muckenhoupt: muck.enclose(width)?,
        power,
        denominator,
        ratio,
    })
}

fn muck_real(m: &MuckenhouptConstant) -> Real {
    match &m.exact {
        Some((r, _)) => Real::Root(r.clone()),
        None => m.value.clone(),
    }
}

/// `||M_{d,w} f||_{L^p(w)} / ||f||_{L^p(w)}` for `p > d`.
pub fn maximal_bound_ratio(
    f: &StepFunction,
    d: u32,
    w: &StepFunction,
    p: &Exponent,
    width: &Rational,
) -> Result<Enclosure, WeightError> {
    if let Exponent::Finite(pv) = p {
        if *pv <= int(d as i64) {
            return Err(WeightError::MaximalExponent(d));
        }
    }
    let mf = weighted_maximal(f, d, w)?;
    let num = match p {
        Exponent::Infinite => Real::Root(Root::new(mf.powered.sup_abs(), d)?),
        Exponent::Finite(pv) => {
            let vol = f.model().cell_volume();
            let e = pv / int(d as i64);
            Real::Sum(
                mf.powered
                    .values()
                    .iter()
                    .zip(w.values())
                    .filter(|(m, _)| !m.is_zero())
                    .map(|(m, wv)| Real::Product(vec![Real::Rat(&vol * wv), Real::Rat(m.clone()).pow(e.clone())]))
                    .collect(),
            )
            .pow(pv.recip())
        }
    };
    let den = lp_norm(f, p, Some(w))?;
    let mut bits = 32;
    while bits <= MAX_BITS {
        if let (Some(a), Some(b)) = (num.enclose_bits(bits), den.enclose_bits(bits)) {
            if b.hi.is_zero() {
                return Err(WeightError::ZeroDenominator);
            }
            if let Some(inv) = b.recip() {
                let r = a.mul(&inv);
                if &r.width() <= width {
                    return Ok(r);
                }
            }
        }
        bits *= 2;
    }
    Err(NumericsError::PrecisionExhausted(MAX_BITS).into())
}

/// Tally of certified comparisons.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Tally {
    pub exact: usize,
    pub certified: usize,
    pub consistent: usize,
    pub violated: usize,
}

impl Tally {
    pub fn record(&mut self, c: Certainty) {
        match c {
            Certainty::Exact => self.exact += 1,
            Certainty::Certified => self.certified += 1,
            Certainty::Consistent => self.consistent += 1,
            Certainty::Violated => self.violated += 1,
        }
    }

    pub fn passed(&self) -> bool {
        self.violated == 0
    }
}

/// Per-cube check of the three-factor rewriting of the sparse form, its two uniform
/// bounds, and the maximal-function recombination.
#[derive(Clone, Debug, Serialize)]
pub struct SplittingReport {
    pub cubes: usize,
    /// factor1 * factor2 * factor3 against the sparse summand.
    pub identity: Tally,
    /// factor1 <= [w].
    pub first_bound: Tally,
    /// factor2 <= c^{-rm} [w]^m.
    pub second_bound: Tally,
    /// Third factor below the maximal-function integral on `E_Q`, cube by cube.
    pub pointwise: Certainty,
    /// Summation in `Q` by Holder.
    pub holder: Certainty,
    /// Disjoint `E_Q` inside the full norm.
    pub disjointness: Certainty,
    pub muckenhoupt: Enclosure,
    pub witness: Option<String>,
}

impl SplittingReport {
    pub fn passed(&self) -> bool {
        self.identity.passed()
            && self.first_bound.passed()
            && self.second_bound.passed()
            && self.pointwise.holds()
            && self.holder.holds()
            && self.disjointness.holds()
    }
}

pub fn sparse_weighted_decomposition_check(
    h: &Hypergraph,
    s: &SparseFamily,
    f: &FunctionTuple,
    w: &WeightTuple,
    p: &ExponentTuple,
    width: &Rational,
) -> Result<SplittingReport, WeightError> {
    let af = f.map(StepFunction::abs);
    let pa = PowerAverages::new(h, &af)?;
    let muck = muckenhoupt_constant(w, p)?;
    let muck_r = muck_real(&muck);
    let duals: Vec<DualWeight> = (0..p.len()).map(|e| w.dual(p, e)).collect();
    let funcs = af.for_edges(h)?;
    let model = s.model;
    let m = p.m();
    let bound2 = Real::Product(vec![
        Real::Rat(s.constant.clone()).pow(-(p.r() * &m)),
        muck_r.clone().pow(m.clone()),
    ]);
    let mut identity = Tally::default();
    let mut first_bound = Tally::default();
    let mut second_bound = Tally::default();
    let mut witness = None;
    let cubes: Vec<&DyadicCube> = s.cubes.iter().collect();
    // [G^d h]_Q from G^d = |F|^d h^{-1}, cell by cell
    let g_avg: Vec<Vec<Rational>> = cubes
        .iter()
        .map(|q| {
            let qcells = cube_cells(&model, q);
            (0..p.len())
                .map(|e| {
                    let de = p.d[e] as u32;
                    let mut acc = Rational::zero();
                    for &c in &qcells {
                        let fd = rpow(&funcs[e].values()[c], de);
                        let hc = &duals[e].cells[c];
                        let g = Root::rational(fd).mul(&hc.recip().expect("positive")).mul(hc);
                        acc += g.as_rational().expect("h^{-1} h cancels exactly");
                    }
                    acc / int(qcells.len() as i64)
                })
                .collect()
        })
        .collect();
    let states: Vec<[Certainty; 3]> = if duals.iter().all(|d| d.rational.is_some()) {
        cubes
            .iter()
            .zip(&g_avg)
            .map(|(q, g)| exact_factors(&pa, s, q, &duals, p, g, &muck_r, &bound2))
            .collect()
    } else {
        let c_pow = Real::Rat(s.constant.clone()).pow(-(p.r() * &m));
        interval_factors(&pa, s, &cubes, &duals, p, &g_avg, &c_pow, &m)
    };
    for (q, st) in cubes.iter().zip(&states) {
        identity.record(st[0]);
        first_bound.record(st[1]);
        second_bound.record(st[2]);
        if witness.is_none() {
            if st[0] == Certainty::Violated {
                witness = Some(format!("factor product differs from the sparse summand at {q}"));
            } else if st[1] == Certainty::Violated {
                witness = Some(format!("first factor exceeds [w] at {q}"));
            } else if st[2] == Certainty::Violated {
                witness = Some(format!("second factor exceeds c^(-rm)[w]^m at {q}"));
            }
        }
    }
    let (pointwise, holder, disjointness) = maximal_chain(&pa, s, &duals, p);
    if witness.is_none() {
        if pointwise == Certainty::Violated {
            witness = Some("third factor exceeds the maximal-function integral".into());
        } else if holder == Certainty::Violated {
            witness = Some("Holder summation over the family fails".into());
        } else if disjointness == Certainty::Violated {
            witness = Some("exceptional-set integrals exceed the full norm".into());
        }
    }
    Ok(SplittingReport {
        cubes: s.cubes.len(),
        identity,
        first_bound,
        second_bound,
        pointwise,
        holder,
        disjointness,
        muckenhoupt: muck.enclose(width)?,
        witness,
    })
}

/// Identity, first bound and second bound at one cube, exactly when the dual weights are rational.
#[allow(clippy::too_many_arguments)]
fn exact_factors(
    pa: &PowerAverages,
    s: &SparseFamily,
    q: &DyadicCube,
    duals: &[DualWeight],
    p: &ExponentTuple,
    g_avg: &[Rational],
    muck: &Real,
    bound2: &Real,
) -> [Certainty; 3] {
    let ecells = &s.exceptional[q];
    let mut f1 = Vec::new();
    let mut f2 = vec![Real::Rat(q.volume())];
    let mut f3 = Vec::new();
    for e in 0..p.len() {
        let inv_d = Rational::new(1.into(), p.d[e].into());
        let inv_p = p.p[e].recip();
        let hq = duals[e].average(q);
        let he = duals[e].integral_over(ecells);
        f1.push(hq.clone().pow(&inv_d - &inv_p));
        if !inv_p.is_zero() {
            f2.push(Real::Product(vec![hq.clone(), he.clone().pow(-Rational::one())]).pow(inv_p.clone()));
            f3.push(he.pow(inv_p.clone()));
        }
        f3.push(Real::Product(vec![Real::Rat(g_avg[e].clone()), hq.pow(-Rational::one())]).pow(inv_d));
    }
    let factor1 = Real::Product(f1);
    let factor2 = Real::Product(f2);
    let product = Real::Product(vec![factor1.clone(), factor2.clone(), Real::Product(f3)]);
    let summand = Real::Root(sparse_term(pa, q));
    [
        product.certified_eq(&summand, MAX_CHECK_BITS),
        factor1.certified_le(muck, MAX_CHECK_BITS),
        factor2.certified_le(bound2, MAX_CHECK_BITS),
    ]
}

/// The same three checks in interval arithmetic, sharing cell enclosures of the dual
/// weights across cubes at each precision.
#[allow(clippy::too_many_arguments)]
fn interval_factors(
    pa: &PowerAverages,
    s: &SparseFamily,
    cubes: &[&DyadicCube],
    duals: &[DualWeight],
    p: &ExponentTuple,
    g_avg: &[Vec<Rational>],
    c_pow: &Real,
    m_exp: &Rational,
) -> Vec<[Certainty; 3]> {
    let vol = Enclosure::point(s.model.cell_volume());
    let mut states = vec![[Certainty::Consistent; 3]; cubes.len()];
    let mut bits = 64;
    while bits <= MAX_CHECK_BITS && states.iter().any(|st| st.contains(&Certainty::Consistent)) {
        let bounds: Vec<(StepFunction, StepFunction)> = duals.iter().map(|d| d.cell_bounds(bits)).collect();
        let pyr: Vec<_> = bounds.iter().map(|(lo, hi)| (lo.pyramid(), hi.pyramid())).collect();
        let m = muck_interval(&s.model, &pyr, p, bits);
        let b2 = match (&m, c_pow.enclose_bits(bits)) {
            (Some(m), Some(c)) => m.pow_ratio(m_exp, bits).map(|x| x.mul(&c).round_out(bits)),
            _ => None,
        };
        for (i, q) in cubes.iter().enumerate() {
            let st = &mut states[i];
            if !st.contains(&Certainty::Consistent) {
                continue;
            }
            let Some((f1, f2, f3)) = interval_cube(s, q, &bounds, &pyr, p, &g_avg[i], &vol, bits) else {
                continue;
            };
            let summand = sparse_term(pa, q).enclose_bits(bits);
            if st[0] == Certainty::Consistent && !f1.mul(&f2).mul(&f3).overlaps(&summand) {
                st[0] = Certainty::Violated;
            }
            for (k, (f, b)) in [(1, (&f1, &m)), (2, (&f2, &b2))] {
                if let (Certainty::Consistent, Some(b)) = (st[k], b) {
                    if f.hi <= b.lo {
                        st[k] = Certainty::Certified;
                    } else if f.lo > b.hi {
                        st[k] = Certainty::Violated;
                    }
                }
            }
        }
        bits *= 2;
    }
    states
}

/// `[w]` enclosed from lower and upper pyramids of the dual weights.
fn muck_interval(
    model: &GridModel,
    pyr: &[(crate::stepfn::Pyramid, crate::stepfn::Pyramid)],
    p: &ExponentTuple,
    bits: u32,
) -> Option<Enclosure> {
    let mut best: Option<Enclosure> = None;
    for q in model.all_cubes() {
        let mut t = Enclosure::point(Rational::one());
        for (e, (lo, hi)) in pyr.iter().enumerate() {
            let hq = Enclosure {
                lo: lo.average(&q).clone(),
                hi: hi.average(&q).clone(),
            };
            t = t.mul(&hq.pow_ratio(&p.r_e(e), bits)?).round_out(bits);
        }
        best = Some(match best {
            None => t,
            Some(b) => b.max(&t),
        });
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn interval_cube(
    s: &SparseFamily,
    q: &DyadicCube,
    bounds: &[(StepFunction, StepFunction)],
    pyr: &[(crate::stepfn::Pyramid, crate::stepfn::Pyramid)],
    p: &ExponentTuple,
    g_avg: &[Rational],
    vol: &Enclosure,
    bits: u32,
) -> Option<(Enclosure, Enclosure, Enclosure)> {
    let ecells = &s.exceptional[q];
    let mut f1 = Enclosure::point(Rational::one());
    let mut f2 = Enclosure::point(q.volume());
    let mut f3 = Enclosure::point(Rational::one());
    for e in 0..p.len() {
        let inv_d = Rational::new(1.into(), p.d[e].into());
        let inv_p = p.p[e].recip();
        let hq = Enclosure {
            lo: pyr[e].0.average(q).clone(),
            hi: pyr[e].1.average(q).clone(),
        };
        let hq_inv = hq.recip()?.round_out(bits);
        f1 = f1.mul(&hq.pow_ratio(&(&inv_d - &inv_p), bits)?).round_out(bits);
        if !inv_p.is_zero() {
            let mut he = Enclosure::point(Rational::zero());
            for &c in ecells {
                he = he.add(&Enclosure {
                    lo: bounds[e].0.values()[c].clone(),
                    hi: bounds[e].1.values()[c].clone(),
                });
            }
            let he = he.mul(vol);
            let ratio = hq.mul(&he.recip()?).round_out(bits);
            f2 = f2.mul(&ratio.pow_ratio(&inv_p, bits)?).round_out(bits);
            f3 = f3.mul(&he.pow_ratio(&inv_p, bits)?).round_out(bits);
        }
        let g = Enclosure::point(g_avg[e].clone()).mul(&hq_inv).round_out(bits);
        f3 = f3.mul(&g.pow_ratio(&inv_d, bits)?).round_out(bits);
    }
    Some((f1, f2, f3))
}

fn decide(pairs: &[(Enclosure, Enclosure)], prev: Certainty) -> Certainty {
    if prev != Certainty::Consistent {
        return prev;
    }
    if pairs.iter().any(|(a, b)| a.lo > b.hi) {
        return Certainty::Violated;
    }
    if pairs.iter().all(|(a, b)| a.hi <= b.lo) {
        return Certainty::Certified;
    }
    Certainty::Consistent
}

/// The recombination of the third factors against `M_{d_e, h_e} G_e`, in interval
/// arithmetic at increasing precision. Equalities stay `Consistent`.
fn maximal_chain(
    pa: &PowerAverages,
    s: &SparseFamily,
    duals: &[DualWeight],
    p: &ExponentTuple,
) -> (Certainty, Certainty, Certainty) {
    let model = s.model;
    let vol = model.cell_volume();
    let ne = p.len();
    let mut state = [Certainty::Consistent; 3];
    // Nonnegative terms over pairwise disjoint sets: the exceptional sums are termwise
    // dominated by the full sums.
    let mut seen = vec![false; model.num_cells()];
    let disjoint = s
        .exceptional
        .values()
        .flatten()
        .all(|&c| !std::mem::replace(&mut seen[c], true));
    if disjoint {
        state[2] = Certainty::Exact;
    }
    let mut bits = 64;
    while bits <= MAX_CHECK_BITS && state.contains(&Certainty::Consistent) {
        // M^d G_e = max over cubes containing the cell of [F^d]_Q / [h]_Q
        let mut degenerate = false;
        let mut md: Vec<Vec<Enclosure>> = Vec::with_capacity(ne);
        let mut hcell: Vec<Vec<Enclosure>> = Vec::with_capacity(ne);
        let mut hq_pyr = Vec::with_capacity(ne);
        for (e, dual) in duals.iter().enumerate() {
            let (lo, hi) = dual.cell_bounds(bits);
            let (plo, phi) = (lo.pyramid(), hi.pyramid());
            let mut col = Vec::with_capacity(model.num_cells());
            for c in 0..model.num_cells() {
                let idx = model.unpack(c);
                let mut best = Enclosure::point(Rational::zero());
                for k in model.scales() {
                    let q = model.cube_of_cell(&idx, k);
                    let fd = pa.get(e, &q);
                    if !plo.average(&q).is_positive() {
                        degenerate = true;
                        continue;
                    }
                    let b = Enclosure {
                        lo: fd / phi.average(&q),
                        hi: fd / plo.average(&q),
                    };
                    best = best.max(&b);
                }
                col.push(best.round_out(bits));
            }
            md.push(col);
            hcell.push(
                lo.values()
                    .iter()
                    .zip(hi.values())
                    .map(|(a, b)| Enclosure { lo: a.clone(), hi: b.clone() })
                    .collect(),
            );
            hq_pyr.push((plo, phi));
        }
        // (M^d G_e)^{p_e/d_e} h_e per cell, shared by the per-cube and full sums
        let weighted: Vec<Vec<Enclosure>> = (0..ne)
            .map(|e| match &p.p[e] {
                Exponent::Infinite => Vec::new(),
                Exponent::Finite(pe) => {
                    let ex = pe / int(p.d[e] as i64);
                    md[e]
                        .iter()
                        .zip(&hcell[e])
                        .map(|(m, h)| m.pow_ratio(&ex, bits).unwrap().mul(h).round_out(bits))
                        .collect()
                }
            })
            .collect();
        let mut pointwise = Vec::new();
        let mut holder_lhs = Enclosure::point(Rational::zero());
        let mut sums: Vec<Enclosure> = vec![Enclosure::point(Rational::zero()); ne];
        let mut sups: Vec<Enclosure> = vec![Enclosure::point(Rational::zero()); ne];
        let mut ok = !degenerate;
        for q in &s.cubes {
            let ecells = &s.exceptional[q];
            let mut a_prod = Enclosure::point(Rational::one());
            let mut b_prod = Enclosure::point(Rational::one());
            for e in 0..ne {
                let d = p.d[e];
                let inv_d = Rational::new(1.into(), d.into());
                let (plo, phi) = &hq_pyr[e];
                let hq = Enclosure {
                    lo: plo.average(q).clone(),
                    hi: phi.average(q).clone(),
                };
                let Some(hq_inv) = hq.recip() else {
                    ok = false;
                    break;
                };
                let avg = Enclosure::point(pa.get(e, q).clone()).mul(&hq_inv);
                let Some(third) = avg.pow_ratio(&inv_d, bits) else {
                    ok = false;
                    break;
                };
                match &p.p[e] {
                    Exponent::Infinite => {
                        let mut sup = Enclosure::point(Rational::zero());
                        for &c in ecells {
                            sup = sup.max(&md[e][c]);
                        }
                        let b = sup.pow_ratio(&inv_d, bits).unwrap();
                        a_prod = a_prod.mul(&third);
                        b_prod = b_prod.mul(&b);
                        sups[e] = sups[e].max(&b);
                    }
                    Exponent::Finite(pe) => {
                        let inv_p = pe.recip();
                        let mut he = Enclosure::point(Rational::zero());
                        let mut bp = Enclosure::point(Rational::zero());
                        for &c in ecells {
                            he = he.add(&hcell[e][c]);
                            bp = bp.add(&weighted[e][c]);
                        }
                        let vole = Enclosure::point(vol.clone());
                        he = he.mul(&vole);
                        bp = bp.mul(&vole);
                        let a = he.pow_ratio(&inv_p, bits).unwrap().mul(&third);
                        let b = bp.pow_ratio(&inv_p, bits).unwrap();
                        a_prod = a_prod.mul(&a);
                        b_prod = b_prod.mul(&b);
                        sums[e] = sums[e].add(&bp);
                    }
                }
            }
            if !ok {
                break;
            }
            pointwise.push((a_prod, b_prod.clone()));
            holder_lhs = holder_lhs.add(&b_prod);
        }
        if ok {
            let mut rhs = Enclosure::point(Rational::one());
            let mut disjoint = Vec::new();
            for e in 0..ne {
                let d = p.d[e];
                let inv_d = Rational::new(1.into(), d.into());
                match &p.p[e] {
                    Exponent::Infinite => {
                        rhs = rhs.mul(&sups[e]);
                        let mut all = Enclosure::point(Rational::zero());
                        for v in &md[e] {
                            all = all.max(v);
                        }
                        disjoint.push((sups[e].clone(), all.pow_ratio(&inv_d, bits).unwrap()));
                    }
                    Exponent::Finite(pe) => {
                        rhs = rhs.mul(&sums[e].pow_ratio(&pe.recip(), bits).unwrap());
                        let mut full = Enclosure::point(Rational::zero());
                        for v in &weighted[e] {
                            full = full.add(v);
                        }
                        disjoint.push((sums[e].clone(), full.mul(&Enclosure::point(vol.clone()))));
                    }
                }
            }
            state[0] = decide(&pointwise, state[0]);
            state[1] = decide(&[(holder_lhs, rhs)], state[1]);
            state[2] = decide(&disjoint, state[2]);
        }
        bits *= 2;
    }
    (state[0], state[1], state[2])
}

/// Edge-indexed map helper for reports.
pub fn per_edge<T: Clone>(h: &Hypergraph, v: &[T]) -> BTreeMap<String, T> {
    (0..h.edges().len()).map(|e| (h.edge_name(e), v[e].clone())).collect()
}
