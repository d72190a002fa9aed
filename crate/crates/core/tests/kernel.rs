mod common;

use common::{all_cells, instance, kernel_oracle, r};
use entangled::dyadic::GridModel;
use entangled::forms::t_e0;
use entangled::hypergraph::{Hypergraph, Selection};
use entangled::kernel::{
    analyze, classify, coeff_bmo, coeff_linf, size_constant, synthesize, twisted_kernel, twisted_selection,
    DiagonalHaarCoefficients, ParaproductClass, PerfectDyadicKernel,
};
use entangled::numerics::{Rational, Root};
use entangled::workbench::{generate, GenerateOptions, Profile};
use entangled::{FunctionTuple, StepFunction};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn model(r: usize, top: i32, fine: i32) -> GridModel {
    GridModel::new(r, top, fine).unwrap()
}

const SHAPES: [(&[usize], i32, i32); 4] = [(&[2, 2], 0, 2), (&[1, 2], 0, 2), (&[2, 1], 1, 1), (&[1, 2, 1], 0, 1)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesis_matches_haar_sum(seed in any::<u64>(), shape in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomKernel, sizes, top, fine, complete);
        let c = inst.coefficients.as_ref().unwrap();
        let k = &inst.kernel;
        for idx in all_cells(k.nmodel().cells_per_axis(), k.n()) {
            prop_assert_eq!(k.value(&idx), kernel_oracle(c, &idx), "cell {:?}", idx);
        }
    }

    #[test]
    fn analysis_inverts_synthesis(seed in any::<u64>(), shape in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomKernel, sizes, top, fine, complete);
        let c = inst.coefficients.unwrap();
        prop_assert!(inst.kernel.perfect_report().is_valid());
        let back = analyze(&inst.kernel, &inst.hypergraph).unwrap();
        let nonzero = |d: &DiagonalHaarCoefficients| {
            d.per_selection
                .iter()
                .filter(|(_, m)| !m.is_empty())
                .map(|(s, m)| (*s, m.clone()))
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(nonzero(&back), nonzero(&c));
        let coarse = |d: &DiagonalHaarCoefficients| {
            d.coarse.iter().filter(|(_, v)| !v.is_zero()).map(|(q, v)| (q.clone(), v.clone())).collect::<Vec<_>>()
        };
        prop_assert_eq!(coarse(&back), coarse(&c));
        let again = synthesize(&back).unwrap();
        prop_assert_eq!(again.values(), inst.kernel.values());
    }

    #[test]
    fn generated_coefficients_respect_cap(seed in any::<u64>(), cap in 1i64..5) {
        let opts = GenerateOptions { lambda_cap: r(cap, 4), ..GenerateOptions::default() };
        let s = generate(seed, Profile::RandomKernel, &opts).unwrap().build().unwrap();
        let c = analyze(&s.kernel, &s.hypergraph).unwrap();
        for sel in c.selections() {
            prop_assert!(coeff_linf(&c, sel) <= r(cap, 4));
        }
    }
}

#[test]
fn twisted_r2_has_one_unit_selection() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    for fine in 1..=3 {
        let m = model(2, 0, fine);
        let k = twisted_kernel(m, &h).unwrap();
        assert!(k.perfect_report().is_valid());
        let c = analyze(&k, &h).unwrap();
        assert_eq!(c.selections(), vec![twisted_selection(&h)]);
        let cubes = &c.per_selection[&twisted_selection(&h)];
        let expected: usize = ((-fine + 1)..=0).map(|s| m.cubes_at(s).len()).sum();
        assert_eq!(cubes.len(), expected);
        assert!(cubes.values().all(|v| v.is_one()));
        assert!(c.coarse.values().all(|v| v.is_zero()));
    }
}

#[test]
fn twisted_kernel_annihilates_constants() {
    for sizes in [vec![2, 2], vec![2, 2, 2]] {
        let h = Hypergraph::complete(&sizes).unwrap();
        let m = model(sizes.len(), 0, if sizes.len() == 2 { 2 } else { 1 });
        let k = twisted_kernel(m, &h).unwrap();
        let ones = FunctionTuple::uniform(&h, &StepFunction::constant(m, Rational::one()));
        for e in 0..h.edges().len() {
            let t = t_e0(&h, &k, e, &ones).unwrap();
            assert!(t.is_zero(), "edge {}", h.edge_name(e));
        }
        let d = h.thresholds();
        let want = 1u64 << (sizes.len() - 1);
        assert!(d.per_edge.iter().all(|&x| x == want));
        assert_eq!(d.complete_m, Some(want));
    }
}

#[test]
fn perturbed_off_diagonal_cell_is_located() {
    let h = Hypergraph::complete(&[2, 1]).unwrap();
    let m = model(2, 0, 2);
    let base = twisted_like(&h, m);
    // a1 and a2 far apart: the cell sits inside the off-diagonal cube 1:(-1, 0) on axes (a1, a2).
    let mut cells: Vec<(Vec<usize>, Rational)> = base;
    cells.push((vec![0, 7, 3], r(1, 1)));
    let k = PerfectDyadicKernel::from_cell_list(m, &h, &cells).unwrap();
    let rep = k.perfect_report();
    assert!(!rep.is_valid());
    assert_eq!(rep.worst, r(1, 1));
    let loc = rep.location.clone().unwrap();
    assert!(loc.starts_with("0:") || loc.starts_with("-1:"), "{loc}");
}

fn twisted_like(h: &Hypergraph, m: GridModel) -> Vec<(Vec<usize>, Rational)> {
    let mut c = DiagonalHaarCoefficients::empty(m, entangled::kernel::arrangement(h));
    let s = Selection::from_vertices(&[0, 1]);
    for q in m.cubes_at(0) {
        c.set(s, q, r(1, 1)).unwrap();
    }
    let k = synthesize(&c).unwrap();
    k.values().iter().map(|(&p, v)| (k.nmodel().unpack(p), v.clone())).collect()
}

#[test]
fn classification_examples() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let a1 = h.vertex_index("a1").unwrap();
    let a2 = h.vertex_index("a2").unwrap();
    let b1 = h.vertex_index("b1").unwrap();
    assert_eq!(classify(&h, Selection::from_vertices(&[a1, a2])).unwrap(), ParaproductClass::C1);
    assert_eq!(classify(&h, Selection::from_vertices(&[a1, b1])).unwrap(), ParaproductClass::NC);
    let two = Hypergraph::new(
        vec![vec!["a1".into(), "a2".into()], vec!["b1".into(), "b2".into()]],
        vec![vec!["a1".into(), "b1".into()], vec!["a2".into(), "b2".into()]],
    )
    .unwrap();
    let sel = Selection::from_ids(&two, &["a1", "b2"]).unwrap();
    assert_eq!(classify(&two, sel).unwrap(), ParaproductClass::C2);
    assert!(classify(&h, Selection::empty()).is_err());
}

#[test]
fn coefficient_norms_on_twisted() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let m = model(2, 0, 2);
    let c = analyze(&twisted_kernel(m, &h).unwrap(), &h).unwrap();
    let s = twisted_selection(&h);
    assert_eq!(coeff_linf(&c, s), r(1, 1));
    // Every cube carries lambda = 1: the Carleson average over Q0 counts its scales.
    assert_eq!(coeff_bmo(&c, s), Root::new(r(2, 1), 2).unwrap());
}

#[test]
fn size_constant_is_vacuous_without_extra_vertices() {
    let h = Hypergraph::complete(&[1, 1]).unwrap();
    let m = model(2, 0, 2);
    let k = PerfectDyadicKernel::from_cell_list(m, &h, &[(vec![1, 5], r(3, 1))]).unwrap();
    assert!(size_constant(&k).vacuous);
}

#[test]
fn size_constant_brackets_worst_cell() {
    let h = Hypergraph::complete(&[2, 1]).unwrap();
    let m = model(2, 0, 1);
    // Axes (a1, a2, b1); |x_a1 - x_a2| ranges over [1, 3] cell lengths of 1/2 at cells 0 and 2.
    let k = PerfectDyadicKernel::from_cell_list(m, &h, &[(vec![0, 2, 1], r(2, 1))]).unwrap();
    let sc = size_constant(&k);
    assert!(!sc.vacuous);
    assert_eq!(sc.lower, r(1, 1));
    assert_eq!(sc.upper, r(3, 1));
    assert_eq!(sc.at, Some(vec![0, 2, 1]));
}
