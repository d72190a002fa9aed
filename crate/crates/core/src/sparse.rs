//! Stopping-time sparse families, their convex trees, sparse forms, and the measured
//! domination constant `|Lambda| / Theta`.
//!
//! The inflation factor `2^M` with `M = log2(2|E|) / min_e d_e` is irrational in
//! general, so every stopping comparison is raised to the power `d_e * min_d` and
//! decided over the rationals:
//! `[F^d]_Q^(1/d) > 2^M [F^d]_Q0^(1/d)` iff `[F^d]_Q^min_d > (2|E|)^d [F^d]_Q0^min_d`.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{build_convex_tree, ConvexTree, DyadicCube, DyadicError, GridModel};
use crate::forms::{evaluate_form, Engine, FormError, FunctionTuple};
use crate::hypergraph::Hypergraph;
use crate::kernel::PerfectDyadicKernel;
use crate::numerics::{int, rat, rpow, Enclosure, NumericsError, Rational, Real, Root, MAX_BITS};
use crate::stepfn::{Pyramid, StepFunction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparseError {
    #[error("negative value at cell {0:?}")]
    Negative(Vec<usize>),
    #[error("hypergraph has no edges")]
    NoEdges,
    #[error("cube {0} is not a model cube")]
    OutOfModel(String),
    #[error("sparse form vanishes while the form does not (support escapes the window)")]
    WindowArtifact,
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The inflation exponent `M`, kept as the exact pair `(2|E|, min_e d_e)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StoppingConfig {
    pub two_e: u64,
    pub min_d: u64,
}

impl StoppingConfig {
    pub fn new(edges: usize, min_d: u64) -> Self {
        assert!(edges >= 1 && min_d >= 1);
        StoppingConfig {
            two_e: 2 * edges as u64,
            min_d,
        }
    }

    pub fn for_hypergraph(h: &Hypergraph) -> Result<Self, SparseError> {
        if h.edges().is_empty() {
            return Err(SparseError::NoEdges);
        }
        Ok(StoppingConfig::new(h.edges().len(), h.thresholds().min()))
    }

    /// `M` as a float, for display only.
    pub fn m(&self) -> f64 {
        (self.two_e as f64).log2() / self.min_d as f64
    }
}

/// Averages of `|F_e|^{d_e}` on every model cube, one pyramid per edge.
pub struct PowerAverages {
    pub model: GridModel,
    pub d: Vec<u64>,
    pyramids: Vec<Pyramid>,
}

impl PowerAverages {
    pub fn new(h: &Hypergraph, f: &FunctionTuple) -> Result<Self, SparseError> {
        let funcs = f.for_edges(h)?;
        let model = funcs.first().map(|g| *g.model()).ok_or(SparseError::NoEdges)?;
        let d = h.thresholds().per_edge;
        let pyramids = funcs
            .iter()
            .zip(&d)
            .map(|(g, &de)| g.abs().pow(de as u32).pyramid())
            .collect();
        Ok(PowerAverages { model, d, pyramids })
    }

    pub fn edges(&self) -> usize {
        self.d.len()
    }

    /// `[|F_e|^{d_e}]_Q`; sub-cell cubes read their cell.
    pub fn get(&self, e: usize, q: &DyadicCube) -> &Rational {
        self.pyramids[e].average(q)
    }

    /// `[|F_e|^{d_e}]_Q^{1/d_e}`.
    pub fn root(&self, e: usize, q: &DyadicCube) -> Root {
        Root::new(self.get(e, q).clone(), self.d[e] as u32).expect("nonnegative")
    }
}

fn check_nonnegative(h: &Hypergraph, f: &FunctionTuple) -> Result<(), SparseError> {
    for g in f.for_edges(h)? {
        if let Some(c) = g.first_negative() {
            return Err(SparseError::Negative(c));
        }
    }
    Ok(())
}

/// `a^min_d > (2|E|)^d * b^min_d`, the cross-powered stopping test.
fn exceeds(a: &Rational, b: &Rational, d: u64, cfg: &StoppingConfig) -> bool {
    let lhs = rpow(a, cfg.min_d as u32);
    let rhs = rpow(b, cfg.min_d as u32) * rpow(&int(cfg.two_e as i64), d as u32);
    lhs > rhs
}

fn stops(p: &PowerAverages, q: &DyadicCube, q0: &DyadicCube, cfg: &StoppingConfig) -> bool {
    (0..p.edges()).any(|e| exceeds(p.get(e, q), p.get(e, q0), p.d[e], cfg))
}

fn maximal_cubes(p: &PowerAverages, q0: &DyadicCube, cfg: &StoppingConfig) -> BTreeSet<DyadicCube> {
    let mut out = BTreeSet::new();
    if q0.k <= -p.model.fine {
        return out;
    }
    let mut stack = q0.children();
    while let Some(q) = stack.pop() {
        if stops(p, &q, q0, cfg) {
            out.insert(q);
        } else if q.k > -p.model.fine {
            stack.extend(q.children());
        }
    }
    out
}

/// Maximal model cubes strictly inside `q0` where some `[F_e^{d_e}]^{1/d_e}` exceeds
/// `2^M` times its value on `q0`.
pub fn stopping_cubes(
    h: &Hypergraph,
    q0: &DyadicCube,
    f: &FunctionTuple,
    cfg: &StoppingConfig,
) -> Result<BTreeSet<DyadicCube>, SparseError> {
    check_nonnegative(h, f)?;
    let p = PowerAverages::new(h, f)?;
    if !p.model.contains_cube(q0) {
        return Err(SparseError::OutOfModel(q0.to_string()));
    }
    Ok(maximal_cubes(&p, q0, cfg))
}

/// A stopping-time family with its exceptional sets `E_Q = Q \ (union of M_Q)`.
#[derive(Clone, Debug)]
pub struct SparseFamily {
    pub model: GridModel,
    pub config: StoppingConfig,
    pub roots: Vec<DyadicCube>,
    pub cubes: BTreeSet<DyadicCube>,
    /// `M_Q` for every member.
    pub stopping: BTreeMap<DyadicCube, BTreeSet<DyadicCube>>,
    /// Packed finest cells of `E_Q`.
    pub exceptional: BTreeMap<DyadicCube, Vec<usize>>,
    /// The sparseness constant the construction guarantees.
    pub constant: Rational,
}

impl SparseFamily {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn exceptional_volume(&self, q: &DyadicCube) -> Rational {
        let n = self.exceptional.get(q).map_or(0, |c| c.len());
        int(n as i64) * self.model.cell_volume()
    }

    /// Cube list with exceptional-set volumes, coarsest first.
    pub fn export(&self) -> Vec<FamilyEntry> {
        let mut qs: Vec<&DyadicCube> = self.cubes.iter().collect();
        qs.sort_by(|a, b| b.k.cmp(&a.k).then_with(|| a.cmp(b)));
        qs.into_iter()
            .map(|q| FamilyEntry {
                cube: q.to_string(),
                volume: q.volume(),
                exceptional_volume: self.exceptional_volume(q),
                stopping: self.stopping[q].iter().map(|c| c.to_string()).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyEntry {
    pub cube: String,
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub volume: Rational,
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub exceptional_volume: Rational,
    pub stopping: Vec<String>,
}

/// Runs the stopping recursion from every top cube that meets a support.
pub fn build_sparse_family(h: &Hypergraph, f: &FunctionTuple) -> Result<SparseFamily, SparseError> {
    check_nonnegative(h, f)?;
    let cfg = StoppingConfig::for_hypergraph(h)?;
    let p = PowerAverages::new(h, f)?;
    build_with(&p, h, f, cfg)
}

fn build_with(
    p: &PowerAverages,
    h: &Hypergraph,
    f: &FunctionTuple,
    cfg: StoppingConfig,
) -> Result<SparseFamily, SparseError> {
    let model = p.model;
    let funcs = f.for_edges(h)?;
    let mut touched = vec![false; model.num_cells()];
    for g in &funcs {
        for c in g.support() {
            touched[c] = true;
        }
    }
    let roots: Vec<DyadicCube> = model
        .top_cubes()
        .into_iter()
        .filter(|q| {
            let mut hit = false;
            crate::stepfn::for_each_in_box(&model.cube_ranges(q), |idx| {
                hit |= touched[model.pack(idx)];
            });
            hit
        })
        .collect();
    let mut cubes = BTreeSet::new();
    let mut stopping = BTreeMap::new();
    let mut exceptional = BTreeMap::new();
    let mut queue: Vec<DyadicCube> = roots.clone();
    while let Some(q) = queue.pop() {
        let m = maximal_cubes(p, &q, &cfg);
        let mut inside = vec![false; 0];
        let ranges = model.cube_ranges(&q);
        let vol: usize = ranges.iter().map(|r| r.1).product();
        inside.resize(vol, true);
        let local = |idx: &[usize]| {
            let mut t = 0usize;
            let mut s = 1usize;
            for (i, &(st, len)) in ranges.iter().enumerate() {
                t += (idx[i] - st) * s;
                s *= len;
            }
            t
        };
        for s in &m {
            crate::stepfn::for_each_in_box(&model.cube_ranges(s), |idx| inside[local(idx)] = false);
        }
        let mut cells = Vec::new();
        crate::stepfn::for_each_in_box(&ranges, |idx| {
            if inside[local(idx)] {
                cells.push(model.pack(idx));
            }
        });
        cells.sort_unstable();
        exceptional.insert(q.clone(), cells);
        queue.extend(m.iter().cloned());
        stopping.insert(q.clone(), m);
        cubes.insert(q);
    }
    Ok(SparseFamily {
        model,
        config: cfg,
        roots,
        cubes,
        stopping,
        exceptional,
        constant: rat(1, 2),
    })
}

/// Outcome of the per-family certificates, with the first witness on failure.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SparseCertificate {
    pub measure_bound: bool,
    pub disjoint: bool,
    pub sparse: bool,
    pub partition: bool,
    pub leaf_bound: bool,
    pub tree_bound: bool,
    pub leaves_checked: usize,
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub min_exceptional_ratio: Rational,
    pub witness: Option<String>,
}

impl SparseCertificate {
    pub fn passed(&self) -> bool {
        self.measure_bound && self.disjoint && self.sparse && self.partition && self.leaf_bound && self.tree_bound
    }
}

/// `T_Q = model cubes inside Q not inside any stopping cube of Q`.
pub fn partition_trees(s: &SparseFamily) -> Result<BTreeMap<DyadicCube, ConvexTree>, SparseError> {
    let mut out = BTreeMap::new();
    for q in &s.cubes {
        let stop = s.stopping.get(q).cloned().unwrap_or_default();
        out.insert(q.clone(), build_convex_tree(&s.model, q, &stop)?);
    }
    Ok(out)
}

/// Checks the measure bound, disjointness and size of the exceptional sets, the tree
/// partition, and the inflation bounds inside trees and at their leaves.
pub fn certify(h: &Hypergraph, f: &FunctionTuple, s: &SparseFamily) -> Result<SparseCertificate, SparseError> {
    let p = PowerAverages::new(h, f)?;
    let model = s.model;
    let cfg = s.config;
    let mut cert = SparseCertificate {
        measure_bound: true,
        disjoint: true,
        sparse: true,
        partition: true,
        leaf_bound: true,
        tree_bound: true,
        leaves_checked: 0,
        min_exceptional_ratio: Rational::one(),
        witness: None,
    };
    let fail = |cert: &mut SparseCertificate, msg: String| {
        if cert.witness.is_none() {
            cert.witness = Some(msg);
        }
    };

    let mut owner: Vec<Option<&DyadicCube>> = vec![None; model.num_cells()];
    for q in &s.cubes {
        let stop = &s.stopping[q];
        let stopped: Rational = stop.iter().fold(Rational::zero(), |a, c| a + c.volume());
        if stopped * int(2) > q.volume() {
            cert.measure_bound = false;
            fail(&mut cert, format!("stopping cubes of {q} exceed half its measure"));
        }
        let ratio = s.exceptional_volume(q) / q.volume();
        if ratio < s.constant {
            cert.sparse = false;
            fail(&mut cert, format!("|E_Q|/|Q| = {ratio} at {q}"));
        }
        if ratio < cert.min_exceptional_ratio {
            cert.min_exceptional_ratio = ratio;
        }
        for &c in &s.exceptional[q] {
            if !q.contains(&model.cube_of_cell(&model.unpack(c), -model.fine)) {
                cert.disjoint = false;
                fail(&mut cert, format!("cell {c} of E_Q lies outside {q}"));
            }
            if let Some(other) = owner[c] {
                cert.disjoint = false;
                fail(&mut cert, format!("cell {c} lies in E_Q for {other} and {q}"));
            }
            owner[c] = Some(q);
        }
    }

    let trees = partition_trees(s)?;
    let mut count: BTreeMap<&DyadicCube, usize> = BTreeMap::new();
    for t in trees.values() {
        if !t.is_convex() {
            cert.partition = false;
            fail(&mut cert, format!("tree at {} is not convex", t.root));
        }
        for m in &t.members {
            *count.entry(m).or_default() += 1;
        }
    }
    for root in &s.roots {
        for q in model.subcubes(root) {
            let c = count.get(&q).copied().unwrap_or(0);
            if c != 1 {
                cert.partition = false;
                fail(&mut cert, format!("cube {q} lies in {c} trees"));
            }
        }
    }
    if count.len() != s.roots.iter().map(|r| model.subcubes(r).len()).sum::<usize>() {
        cert.partition = false;
        fail(&mut cert, "trees contain cubes outside the roots".into());
    }

    // Inside T_Q: a^min_d <= (2|E|)^d b^min_d. At a leaf: a^min_d <= 2^(r min_d) (2|E|)^d b^min_d.
    let leaf_factor = rpow(&int(2), (model.r as u64 * cfg.min_d) as u32);
    for (q, t) in &trees {
        for e in 0..p.edges() {
            let b = p.get(e, q);
            for m in &t.members {
                if exceeds(p.get(e, m), b, p.d[e], &cfg) {
                    cert.tree_bound = false;
                    fail(&mut cert, format!("edge {e}: tree cube {m} exceeds the inflated average of {q}"));
                }
            }
            for leaf in t.leaves() {
                let lhs = rpow(p.get(e, &leaf), cfg.min_d as u32);
                let rhs = rpow(b, cfg.min_d as u32)
                    * rpow(&int(cfg.two_e as i64), p.d[e] as u32)
                    * &leaf_factor;
                cert.leaves_checked += 1;
                if lhs > rhs {
                    cert.leaf_bound = false;
                    fail(&mut cert, format!("edge {e}: leaf {leaf} of tree {q} breaks the parent bound"));
                }
            }
        }
    }
    Ok(cert)
}

/// Summand `|Q| prod_e [|F_e|^{d_e}]_Q^{1/d_e}` as one exact root.
pub fn sparse_term(p: &PowerAverages, q: &DyadicCube) -> Root {
    let mut acc = Root::rational(q.volume());
    for e in 0..p.edges() {
        acc = acc.mul(&p.root(e, q));
    }
    acc
}

/// `Theta_S(F) = sum_{Q in S} |Q| prod_e [|F_e|^{d_e}]_Q^{1/d_e}`.
pub fn sparse_form(h: &Hypergraph, s: &SparseFamily, f: &FunctionTuple) -> Result<Real, SparseError> {
    let p = PowerAverages::new(h, f)?;
    Ok(Real::Sum(
        s.cubes
            .iter()
            .map(|q| Real::Root(sparse_term(&p, q)))
            .filter(|t| !matches!(t, Real::Root(r) if r.is_zero()))
            .collect(),
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationRatio {
    #[serde(serialize_with = "crate::report_util::ser_rational")]
    pub lambda: Rational,
    pub theta: Enclosure,
    pub ratio: Enclosure,
    pub family_size: usize,
}

/// `|Lambda_E(F)| / Theta_{S_D}(F)` with the family built from `|F|`, enclosed to `width`.
pub fn domination_ratio(
    h: &Hypergraph,
    k: &PerfectDyadicKernel,
    f: &FunctionTuple,
    engine: Engine,
    width: &Rational,
) -> Result<DominationRatio, SparseError> {
    let lambda = evaluate_form(h, k, f, engine)?;
    let af = f.map(StepFunction::abs);
    let s = build_sparse_family(h, &af)?;
    let theta = sparse_form(h, &s, &af)?;
    let lam = lambda.abs();
    if lam.is_zero() {
        let te = theta.enclose(width)?;
        return Ok(DominationRatio {
            lambda,
            theta: te,
            ratio: Enclosure::point(Rational::zero()),
            family_size: s.len(),
        });
    }
    let mut bits = 32;
    while bits <= MAX_BITS {
        if let Some(te) = theta.enclose_bits(bits) {
            if te.hi.is_zero() {
                return Err(SparseError::WindowArtifact);
            }
            if let Some(inv) = te.recip() {
                let ratio = inv.mul(&Enclosure::point(lam.clone()));
                if &ratio.width() <= width {
                    return Ok(DominationRatio {
                        lambda,
                        theta: te,
                        ratio,
                        family_size: s.len(),
                    });
                }
            }
        }
        bits *= 2;
    }
    Err(SparseError::Numerics(NumericsError::PrecisionExhausted(MAX_BITS)))
}

/// `true` when every value is nonnegative; helper for callers building families.
pub fn is_nonnegative_tuple(f: &FunctionTuple) -> bool {
    f.iter().all(|(_, g)| g.values().iter().all(|v| !v.is_negative()))
}
