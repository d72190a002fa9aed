//! Brute-force reference computations, written directly from the definitions and
//! sharing no code paths with the library beyond its data types.

#![allow(dead_code)]

use entangled::dyadic::{DyadicCube, GridModel};
use entangled::hypergraph::{Hypergraph, Selection};
use entangled::kernel::{DiagonalHaarCoefficients, PerfectDyadicKernel};
use entangled::numerics::Rational;
use entangled::workbench::{generate, GenerateOptions, Instance, Profile};
use entangled::{FunctionTuple, StepFunction};
use num_traits::{One, Zero};

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

pub fn two_pow(k: i32) -> Rational {
    if k >= 0 {
        Rational::from_integer((1i64 << k).into())
    } else {
        r(1, 1i64 << (-k))
    }
}

/// Left endpoint of finest cell `c` on one axis.
pub fn cell_start(m: &GridModel, c: usize) -> Rational {
    (Rational::from_integer((c as i64).into()) - Rational::from_integer((1i64 << (m.top + m.fine)).into()))
        * two_pow(-m.fine)
}

/// L1-normalized Haar function of `[2^k l, 2^k (l+1))`.
pub fn haar1(k: i32, l: i64, variant: u8, x: &Rational) -> Rational {
    let len = two_pow(k);
    let a = Rational::from_integer(l.into()) * &len;
    let b = &a + &len;
    if x < &a || x >= &b {
        return Rational::zero();
    }
    let mid = &a + &len / Rational::from_integer(2.into());
    if variant == 1 && x >= &mid {
        -len.recip()
    } else {
        len.recip()
    }
}

/// Every n-dimensional cell index, axis 0 fastest.
pub fn all_cells(cpa: usize, n: usize) -> Vec<Vec<usize>> {
    let total = cpa.pow(n as u32);
    (0..total)
        .map(|mut t| {
            (0..n)
                .map(|_| {
                    let c = t % cpa;
                    t /= cpa;
                    c
                })
                .collect()
        })
        .collect()
}

fn edge_value(h: &Hypergraph, f: &FunctionTuple, e: usize, idx: &[usize]) -> Rational {
    let ed = &h.edges()[e];
    let g = f.get(&ed.label).expect("function for edge");
    let x: Vec<usize> = ed.vertices.iter().map(|&v| idx[v]).collect();
    g.value(&x).clone()
}

/// `int K prod_e F_e` summed over every n-cell.
pub fn form_oracle(h: &Hypergraph, k: &PerfectDyadicKernel, f: &FunctionTuple) -> Rational {
    let m = *k.model();
    let n = h.n();
    let vol = two_pow(-m.fine * n as i32);
    let mut acc = Rational::zero();
    for idx in all_cells(m.cells_per_axis(), n) {
        let kv = k.value(&idx);
        if kv.is_zero() {
            continue;
        }
        let mut p = kv;
        for e in 0..h.edges().len() {
            p *= edge_value(h, f, e, &idx);
        }
        acc += p;
    }
    acc * vol
}

/// `int prod_e F_e prod_v h^{eps_v}_{I_class(v)}` over `Q^n`.
pub fn paraproduct_oracle(h: &Hypergraph, s: Selection, q: &DyadicCube, f: &FunctionTuple) -> Rational {
    let m = *f.iter().next().unwrap().1.model();
    let n = h.n();
    let vol = two_pow(-m.fine * n as i32);
    let mut acc = Rational::zero();
    for idx in all_cells(m.cells_per_axis(), n) {
        let mut p = Rational::one();
        for (v, &c) in idx.iter().enumerate() {
            let cl = h.class_of(v);
            let eps = s.contains(v) as u8;
            p *= haar1(q.k, q.pos[cl], eps, &cell_start(&m, c));
            if p.is_zero() {
                break;
            }
        }
        if p.is_zero() {
            continue;
        }
        for e in 0..h.edges().len() {
            p *= edge_value(h, f, e, &idx);
        }
        acc += p;
    }
    acc * vol
}

/// Kernel value from coefficients: coarse block average plus `lambda |I|^r prod_v h^{eps_v}`.
pub fn kernel_oracle(c: &DiagonalHaarCoefficients, idx: &[usize]) -> Rational {
    let m = c.model;
    let n = c.n();
    let mut val = Rational::zero();
    for (b, v) in &c.coarse {
        let inside = idx
            .iter()
            .zip(&b.pos)
            .all(|(&x, &l)| haar1(b.k, l, 0, &cell_start(&m, x)) != Rational::zero());
        if inside {
            val += v;
        }
    }
    for (s, cubes) in &c.per_selection {
        for (q, lam) in cubes {
            let mut p = lam * two_pow(q.k * m.r as i32);
            for v in 0..n {
                let cl = c.axis_class[v];
                p *= haar1(q.k, q.pos[cl], s.contains(v) as u8, &cell_start(&m, idx[v]));
                if p.is_zero() {
                    break;
                }
            }
            val += p;
        }
    }
    val
}

/// `T_{e0}(F)(y) = int K prod_{e != e0} F_e` over the vertices off `e0`, as cell values.
pub fn t_oracle(h: &Hypergraph, k: &PerfectDyadicKernel, f: &FunctionTuple, e0: usize) -> Vec<Rational> {
    let m = *k.model();
    let n = h.n();
    let mut out = vec![Rational::zero(); m.num_cells()];
    let vol = two_pow(-m.fine * (n - m.r) as i32);
    for idx in all_cells(m.cells_per_axis(), n) {
        let kv = k.value(&idx);
        if kv.is_zero() {
            continue;
        }
        let mut p = kv;
        for e in 0..h.edges().len() {
            if e != e0 {
                p *= edge_value(h, f, e, &idx);
            }
        }
        let y: Vec<usize> = h.edges()[e0].vertices.iter().map(|&v| idx[v]).collect();
        out[m.pack(&y)] += p * &vol;
    }
    out
}

/// Average of `|f|^d` over a cube, straight from the cells.
pub fn power_average_oracle(g: &StepFunction, q: &DyadicCube, d: u32) -> Rational {
    let m = *g.model();
    let mut acc = Rational::zero();
    let mut count = 0i64;
    for idx in all_cells(m.cells_per_axis(), m.r) {
        let inside = (0..m.r).all(|i| haar1(q.k, q.pos[i], 0, &cell_start(&m, idx[i])) != Rational::zero());
        if inside {
            let v = g.value(&idx).clone();
            let mut p = Rational::one();
            for _ in 0..d {
                p *= &v;
            }
            acc += if p < Rational::zero() { -p } else { p };
            count += 1;
        }
    }
    acc / Rational::from_integer(count.into())
}

pub fn instance(seed: u64, profile: Profile, sizes: &[usize], top: i32, fine: i32, complete: bool) -> Instance {
    let opts = GenerateOptions {
        sizes: sizes.to_vec(),
        top,
        fine,
        complete,
        ..GenerateOptions::default()
    };
    generate(seed, profile, &opts).unwrap().build().unwrap()
}
