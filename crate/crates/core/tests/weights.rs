mod common;

use common::{instance, r};
use entangled::dyadic::GridModel;
use entangled::hypergraph::Hypergraph;
use entangled::numerics::{to_f64, Rational};
use entangled::sparse::build_sparse_family;
use entangled::weights::{
    check_normalization, maximal_bound_ratio, muckenhoupt_constant, sparse_weighted_decomposition_check,
    synthesize_last_weight, weighted_estimate_ratio, ExponentTuple, WeightTuple,
};
use entangled::workbench::Profile;
use entangled::{Engine, Exponent, StepFunction};
use num_traits::{One, ToPrimitive};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fours(h: &Hypergraph) -> ExponentTuple {
    ExponentTuple::new(h, vec![Exponent::Finite(r(4, 1)); 4]).unwrap()
}

fn random_weight(rng: &mut ChaCha8Rng, m: GridModel) -> StepFunction {
    let pool = [r(1, 2), r(1, 1), r(2, 1), r(3, 1)];
    let values = (0..m.num_cells()).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
    StepFunction::new(m, values).unwrap()
}

/// `sup_Q prod_e [w_e^{-d_e/(p_e-d_e)}]_Q^{1/d_e - 1/p_e}` in floating point.
fn muckenhoupt_oracle(w: &WeightTuple, p: &[f64], d: &[f64]) -> f64 {
    let m = *w.model().unwrap();
    let mut best: f64 = 0.0;
    for q in m.all_cubes() {
        let (start, len): (Vec<usize>, Vec<usize>) = m.cube_ranges(&q).into_iter().unzip();
        let mut t = 1.0;
        for (e, g) in w.w.iter().enumerate() {
            let a = d[e] / (p[e] - d[e]);
            let mut sum = 0.0;
            let mut count = 0.0;
            for c in 0..m.num_cells() {
                let idx = m.unpack(c);
                if idx.iter().enumerate().all(|(i, &x)| x >= start[i] && x < start[i] + len[i]) {
                    sum += to_f64(g.value(&idx)).powf(-a);
                    count += 1.0;
                }
            }
            t *= (sum / count).powf(1.0 / d[e] - 1.0 / p[e]);
        }
        best = best.max(t);
    }
    best
}

#[test]
fn unit_weights_have_unit_constant() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let m = GridModel::new(2, 0, 2).unwrap();
    let p = ExponentTuple::feasible(&h).unwrap();
    let w = WeightTuple::ones(m, 4);
    let c = muckenhoupt_constant(&w, &p).unwrap();
    assert!(c.exact.unwrap().0.as_rational().unwrap().is_one());
}

#[test]
fn normalized_constant_weights_have_unit_constant() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let m = GridModel::new(2, 1, 1).unwrap();
    let p = fours(&h);
    let w = WeightTuple::new(vec![
        StepFunction::constant(m, r(16, 1)),
        StepFunction::constant(m, r(1, 81)),
        StepFunction::constant(m, r(81, 16)),
        StepFunction::constant(m, r(1, 1)),
    ])
    .unwrap();
    check_normalization(&w, &p).unwrap();
    let c = muckenhoupt_constant(&w, &p).unwrap();
    assert!(c.exact.unwrap().0.as_rational().unwrap().is_one());
}

#[test]
fn unnormalized_weights_are_rejected() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let m = GridModel::new(2, 0, 1).unwrap();
    let w = WeightTuple::new(vec![StepFunction::constant(m, r(2, 1)); 4]).unwrap();
    assert!(check_normalization(&w, &fours(&h)).is_err());
    assert!(WeightTuple::new(vec![StepFunction::constant(m, r(0, 1))]).is_err());
}

#[test]
fn exponents_below_threshold_are_rejected() {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let bad = vec![
        Exponent::Finite(r(2, 1)),
        Exponent::Finite(r(6, 1)),
        Exponent::Finite(r(6, 1)),
        Exponent::Finite(r(6, 1)),
    ];
    assert!(ExponentTuple::new(&h, bad).is_err());
    let inf = vec![Exponent::Infinite, Exponent::Finite(r(3, 1)), Exponent::Finite(r(3, 1)), Exponent::Finite(r(3, 1))];
    let t = ExponentTuple::new(&h, inf).unwrap();
    assert_eq!(t.muckenhoupt_power(), r(3, 1));
}

#[test]
fn maximal_operator_needs_exponent_above_d() {
    let m = GridModel::new(2, 0, 1).unwrap();
    let f = StepFunction::constant(m, r(1, 1));
    let w = StepFunction::constant(m, r(1, 1));
    assert!(maximal_bound_ratio(&f, 2, &w, &Exponent::Finite(r(2, 1)), &r(1, 1000)).is_err());
    let ok = maximal_bound_ratio(&f, 2, &w, &Exponent::Finite(r(3, 1)), &r(1, 1000)).unwrap();
    assert!(ok.contains(&Rational::one()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthesized_weights_normalize(seed in any::<u64>()) {
        let h = Hypergraph::complete(&[2, 2]).unwrap();
        let m = GridModel::new(2, 0, 2).unwrap();
        let p = fours(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws: Vec<StepFunction> = (0..3).map(|_| random_weight(&mut rng, m)).collect();
        ws.push(synthesize_last_weight(&ws, &p).unwrap());
        let w = WeightTuple::new(ws).unwrap();
        check_normalization(&w, &p).unwrap();
        let c = muckenhoupt_constant(&w, &p).unwrap();
        let got = c.enclose(&r(1, 1 << 30)).unwrap();
        let want = muckenhoupt_oracle(&w, &[4.0; 4], &[2.0; 4]);
        let mid = to_f64(&got.midpoint());
        prop_assert!((mid - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", mid, want);
        prop_assert!(got.lo >= r(1, 1) - r(1, 1 << 30));
    }

    #[test]
    fn splitting_check_passes(seed in any::<u64>()) {
        let inst = instance(seed, Profile::RandomTuple, &[2, 2], 0, 2, true);
        let h = &inst.hypergraph;
        let p = fours(h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws: Vec<StepFunction> = (0..3).map(|_| random_weight(&mut rng, inst.model)).collect();
        ws.push(synthesize_last_weight(&ws, &p).unwrap());
        let w = WeightTuple::new(ws).unwrap();
        let af = inst.functions.map(StepFunction::abs);
        let fam = build_sparse_family(h, &af).unwrap();
        let rep = sparse_weighted_decomposition_check(h, &fam, &inst.functions, &w, &p, &r(1, 1 << 20)).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.witness);
        let ratio = weighted_estimate_ratio(h, &inst.kernel, &inst.functions, &w, &p, Engine::Factorized, &r(1, 1 << 20)).unwrap();
        prop_assert!(ratio.ratio.hi.to_f64().unwrap().is_finite());
        prop_assert!(ratio.ratio.lo >= r(0, 1));
    }

    #[test]
    fn maximal_ratio_is_at_least_one_for_positive_input(seed in any::<u64>()) {
        let m = GridModel::new(2, 0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_weight(&mut rng, m);
        let w = random_weight(&mut rng, m);
        let e = maximal_bound_ratio(&f, 2, &w, &Exponent::Finite(r(4, 1)), &r(1, 1 << 20)).unwrap();
        prop_assert!(e.hi >= r(1, 1));
        let inf = maximal_bound_ratio(&f, 2, &w, &Exponent::Infinite, &r(1, 1 << 20)).unwrap();
        prop_assert!(inf.hi >= r(1, 1));
    }
}
