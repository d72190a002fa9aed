mod common;

use common::{instance, paraproduct_oracle, r, t_oracle, form_oracle};
use entangled::dyadic::{build_convex_tree, DyadicInterval, GridModel};
use entangled::forms::{
    decomposition_total, difference_identity_residual, duplicate_identity, evaluate_form, holder_gap,
    paraproduct_term, split_inequality, symmetrized_sum, t_e0, telescoping,
};
use entangled::hypergraph::{all_selections, Hypergraph, Selection};
use entangled::kernel::analyze;
use entangled::workbench::Profile;
use entangled::{DyadicCube, Engine, FunctionTuple, StepFunction};
use num_traits::Zero;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const SHAPES: [(&[usize], i32, i32); 4] = [(&[2, 2], 0, 2), (&[1, 2], 0, 2), (&[2, 1], 1, 1), (&[1, 2, 1], 0, 1)];

fn profile(i: usize) -> Profile {
    Profile::ALL[i % 4]
}

fn abs(f: &FunctionTuple) -> FunctionTuple {
    f.map(StepFunction::abs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn engines_match_brute_force(seed in any::<u64>(), shape in 0usize..4, p in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, profile(p), sizes, top, fine, complete);
        let want = form_oracle(&inst.hypergraph, &inst.kernel, &inst.functions);
        let naive = evaluate_form(&inst.hypergraph, &inst.kernel, &inst.functions, Engine::Naive).unwrap();
        let fact = evaluate_form(&inst.hypergraph, &inst.kernel, &inst.functions, Engine::Factorized).unwrap();
        prop_assert_eq!(&naive, &want);
        prop_assert_eq!(&fact, &want);
    }

    #[test]
    fn paraproduct_terms_match_brute_force(seed in any::<u64>(), shape in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomTuple, sizes, top, fine, complete);
        let h = &inst.hypergraph;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sels = all_selections(h);
        let cubes: Vec<DyadicCube> = inst.model.all_cubes().into_iter().filter(|q| q.k > -fine).collect();
        for _ in 0..6 {
            let s = if rng.gen_bool(0.2) { Selection::empty() } else { sels[rng.gen_range(0..sels.len())] };
            let q = &cubes[rng.gen_range(0..cubes.len())];
            let got = paraproduct_term(h, s, q, &inst.functions).unwrap();
            prop_assert_eq!(got, paraproduct_oracle(h, s, q, &inst.functions), "{} at {}", s.describe(h), q);
        }
    }

    #[test]
    fn decomposition_reassembles_form(seed in any::<u64>(), shape in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomKernel, sizes, top, fine, complete);
        let c = analyze(&inst.kernel, &inst.hypergraph).unwrap();
        let total = decomposition_total(&inst.hypergraph, &c, &inst.functions).unwrap();
        prop_assert_eq!(total, form_oracle(&inst.hypergraph, &inst.kernel, &inst.functions));
    }

    #[test]
    fn adjoint_operators_match_brute_force(seed in any::<u64>(), shape in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomKernel, sizes, top, fine, complete);
        let h = &inst.hypergraph;
        for e in 0..h.edges().len() {
            let t = t_e0(h, &inst.kernel, e, &inst.functions).unwrap();
            prop_assert_eq!(t.values(), &t_oracle(h, &inst.kernel, &inst.functions, e)[..]);
        }
    }

    #[test]
    fn difference_identity_vanishes(seed in any::<u64>(), shape in 0usize..4, complete in any::<bool>()) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomTuple, sizes, top, fine, complete);
        for q in inst.model.all_cubes().into_iter().filter(|q| q.k > -fine) {
            prop_assert!(difference_identity_residual(&inst.hypergraph, &q, &inst.functions).unwrap().is_zero());
        }
    }

    #[test]
    fn telescoping_on_random_trees(seed in any::<u64>(), shape in 0usize..4) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomTuple, sizes, top, fine, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let m = inst.model;
        for root in m.top_cubes() {
            let inner: Vec<DyadicCube> = m.subcubes(&root).into_iter().filter(|q| *q != root).collect();
            let mut stop = BTreeSet::new();
            for q in &inner {
                if rng.gen_bool(0.25) && !stop.iter().any(|s: &DyadicCube| s.contains(q)) {
                    stop.retain(|s: &DyadicCube| !q.contains(s));
                    stop.insert(q.clone());
                }
            }
            let tree = build_convex_tree(&m, &root, &stop).unwrap();
            let (lhs, rhs) = telescoping(&inst.hypergraph, &tree, &inst.functions).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn duplicate_identity_squares(seed in any::<u64>(), shape in 0usize..2) {
        let (sizes, top, fine) = SHAPES[shape];
        let inst = instance(seed, Profile::RandomTuple, sizes, top, fine, true);
        let h = &inst.hypergraph;
        let sels = all_selections(h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cubes: Vec<DyadicCube> = inst.model.all_cubes().into_iter().filter(|q| q.k > -fine).collect();
        for _ in 0..3 {
            let s = sels[rng.gen_range(0..sels.len())];
            let q = &cubes[rng.gen_range(0..cubes.len())];
            let (sq, doubled) = duplicate_identity(h, s, q, &inst.functions).unwrap();
            prop_assert_eq!(sq, doubled);
        }
    }

    #[test]
    fn symmetrized_sum_is_nonnegative(seed in any::<u64>(), ks in proptest::collection::vec(-2i32..=0, 2), ls in proptest::collection::vec(-1i64..=0, 2)) {
        let inst = instance(seed, Profile::RandomTuple, &[2, 2], 0, 2, true);
        let f = abs(&inst.functions);
        let g = f.iter().next().unwrap().1;
        let ivs: Vec<DyadicInterval> = ks.iter().zip(&ls).map(|(&k, &l)| {
            DyadicInterval::new(k, l << (-k))
        }).collect();
        prop_assert!(symmetrized_sum(g, &ivs).unwrap() >= r(0, 1));
    }

    #[test]
    fn holder_gap_is_nonnegative(seed in any::<u64>(), sizes in prop_oneof![Just(vec![2usize, 2]), Just(vec![1, 2]), Just(vec![2, 1, 1])]) {
        let fine = if sizes.len() == 3 { 1 } else { 2 };
        let inst = instance(seed, Profile::RandomTuple, &sizes, 0, fine, true);
        let f = abs(&inst.functions);
        for q in inst.model.all_cubes() {
            prop_assert!(holder_gap(&inst.hypergraph, &q, &f).unwrap().nonnegative, "{}", q);
        }
    }

    #[test]
    fn split_inequality_holds(seed in any::<u64>(), d in 1i64..4) {
        let inst = instance(seed, Profile::RandomTuple, &[2, 2], 0, 2, true);
        let h = &inst.hypergraph;
        let f = abs(&inst.functions);
        let a1 = h.vertex_index("a1").unwrap();
        let a2 = h.vertex_index("a2").unwrap();
        let b1 = h.vertex_index("b1").unwrap();
        let delta = r(d, 2);
        for s in [Selection::from_vertices(&[a1, a2]), Selection::from_vertices(&[a1, a2, b1])] {
            for q in inst.model.all_cubes() {
                let sc = split_inequality(h, s, a1, a2, &q, &f, &delta).unwrap();
                prop_assert!(sc.holds, "{} > {} at {}", sc.lhs, sc.rhs, q);
            }
        }
    }
}

#[test]
fn finest_cubes_only_see_averages() {
    let inst = instance(3, Profile::RandomTuple, &[2, 2], 0, 2, true);
    let h = &inst.hypergraph;
    let s = Selection::from_vertices(&[0]);
    for q in inst.model.cubes_at(-2) {
        assert!(paraproduct_term(h, s, &q, &inst.functions).unwrap().is_zero());
        let e = Selection::empty();
        assert_eq!(paraproduct_term(h, e, &q, &inst.functions).unwrap(), paraproduct_oracle(h, e, &q, &inst.functions));
    }
}

#[test]
fn form_rejects_missing_function() {
    let h = Hypergraph::complete(&[1, 1]).unwrap();
    let m = GridModel::new(2, 0, 1).unwrap();
    let k = entangled::kernel::twisted_kernel(m, &Hypergraph::complete(&[2, 2]).unwrap()).unwrap();
    let f = FunctionTuple::default();
    assert!(evaluate_form(&h, &k, &f, Engine::Naive).is_err());
}
