//! Acceptance criteria 1-7, one PASS/FAIL line each.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{form_oracle, instance, r};
use entangled::dyadic::{DyadicInterval, GridModel};
use entangled::forms::{evaluate_form, holder_gap, split_inequality, symmetrized_sum, t_e0, Evaluator};
use entangled::hypergraph::{Hypergraph, Selection};
use entangled::kernel::{analyze, twisted_kernel, twisted_selection};
use entangled::numerics::{format_rational, to_f64, Rational};
use entangled::sparse::domination_ratio;
use entangled::weights::synthesize_last_weight;
use entangled::workbench::{
    run, EngineChoice, FunctionSpec, Instance, KernelSpec, Profile, Report, RunOptions, Scenario,
    Suite,
};
use entangled::{Engine, Exponent, FunctionTuple, StepFunction};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: String) -> Outcome {
    Outcome { passed, summary }
}

/// `(sizes, top, fine)` with `top + fine <= 4` and class sizes at most 3.
const CORPUS: [(&[usize], i32, i32); 9] = [
    (&[2, 2], 0, 2),
    (&[1, 2], 0, 2),
    (&[2, 1], 1, 1),
    (&[1, 3], 0, 2),
    (&[3, 3], 0, 1),
    (&[2, 3], 0, 1),
    (&[1, 1], 1, 3),
    (&[1, 1, 1], 0, 2),
    (&[2, 2, 2], 0, 1),
];

fn corpus() -> Vec<(String, Instance)> {
    let mut out = Vec::new();
    for seed in 0..6u64 {
        for (i, &(sizes, top, fine)) in CORPUS.iter().enumerate() {
            for (j, profile) in Profile::ALL.into_iter().enumerate() {
                let complete = (seed + j as u64) % 3 != 0;
                let s = 1000 * seed + 10 * i as u64 + j as u64;
                let label = format!("{profile} {sizes:?} L={top} N={fine} seed={s}");
                out.push((label, instance(s, profile, sizes, top, fine, complete)));
            }
        }
    }
    out
}

fn failed_certs(rep: &Report, names: &[&str]) -> Vec<String> {
    rep.certificates
        .iter()
        .filter(|c| names.contains(&c.name.as_str()) && !c.passed)
        .map(|c| format!("{}: {}", c.name, c.witness.clone().unwrap_or_default()))
        .collect()
}

fn checked(rep: &Report, names: &[&str]) -> usize {
    rep.certificates.iter().filter(|c| names.contains(&c.name.as_str())).map(|c| c.checked).sum()
}

fn scenario_report(inst: &Instance, suites: Vec<Suite>, seed: u64) -> Report {
    let s = entangled_scenario(inst);
    run(
        &s,
        &RunOptions {
            suites: Some(suites),
            seed: Some(seed),
            engine: Some(EngineChoice::Both),
            ..RunOptions::default()
        },
    )
    .expect("suite runs")
}

/// Rebuilds a scenario from an instance so it runs through the workbench.
fn entangled_scenario(inst: &Instance) -> Scenario {
    let h = &inst.hypergraph;
    let ids = |v: usize| h.vertices()[v].id.clone();
    let mut functions = BTreeMap::new();
    for (label, f) in inst.functions.iter() {
        functions.insert(label.clone(), dense(f));
    }
    let cells = inst
        .kernel
        .values()
        .iter()
        .map(|(&p, v)| entangled::workbench::CellValue {
            cell: inst.kernel.nmodel().unpack(p),
            value: format_rational(v),
        })
        .collect();
    Scenario {
        schema_version: entangled::workbench::SCHEMA_VERSION,
        name: None,
        model: entangled::workbench::ModelSpec {
            r: inst.model.r,
            top: inst.model.top,
            fine: inst.model.fine,
        },
        hypergraph: entangled::workbench::HypergraphSpec {
            classes: Some((0..h.r()).map(|i| h.class(i).iter().map(|&v| ids(v)).collect()).collect()),
            edges: Some(h.edges().iter().map(|e| e.vertices.iter().map(|&v| ids(v)).collect()).collect()),
            labels: Some(h.edges().iter().map(|e| e.label.clone()).collect()),
            ..Default::default()
        },
        kernel: KernelSpec::Cells { cells },
        functions,
        weights: None,
        exponents: None,
        suites: vec![],
        seed: 0,
        width: None,
        engine: None,
    }
}

fn dense(f: &StepFunction) -> FunctionSpec {
    FunctionSpec::Dense {
        values: f.values().iter().map(format_rational).collect(),
    }
}

const IDENTITY_CERTS: [&str; 8] = [
    "round-trip",
    "coefficient-recovery",
    "decomposition",
    "haar-orthonormality",
    "difference-identity",
    "t-duality",
    "telescoping",
    "kernel-perfect",
];

/// Exact identities over the seeded corpus; also records naive/factorized/oracle agreement.
fn criterion_1(engines: &mut Vec<String>) -> Outcome {
    let corpus = corpus();
    let mut failures = Vec::new();
    let mut checks = 0usize;
    for (i, (label, inst)) in corpus.iter().enumerate() {
        let rep = scenario_report(inst, vec![Suite::Validate, Suite::Decompose, Suite::Identities], i as u64);
        for f in failed_certs(&rep, &IDENTITY_CERTS) {
            failures.push(format!("{label}: {f}"));
        }
        for c in rep.certificates.iter().filter(|c| c.name == "completed") {
            failures.push(format!("{label}: suite error {}", c.witness.clone().unwrap_or_default()));
        }
        checks += checked(&rep, &IDENTITY_CERTS);

        let h = &inst.hypergraph;
        let naive = evaluate_form(h, &inst.kernel, &inst.functions, Engine::Naive).unwrap();
        let fact = evaluate_form(h, &inst.kernel, &inst.functions, Engine::Factorized).unwrap();
        let want = form_oracle(h, &inst.kernel, &inst.functions);
        if naive != want || fact != want {
            engines.push(format!(
                "{label}: naive {} factorized {} oracle {}",
                format_rational(&naive),
                format_rational(&fact),
                format_rational(&want)
            ));
        }
    }
    let n = corpus.len();
    outcome(
        n >= 200 && failures.is_empty(),
        format!(
            "{n} instances, {checks} exact checks, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn random_interval(rng: &mut ChaCha8Rng, m: &GridModel) -> DyadicInterval {
    let k = rng.gen_range(-m.fine..=m.top);
    let span = 1i64 << (m.top - k);
    DyadicInterval::new(k, rng.gen_range(-span..span))
}

/// Symmetrized sums, Hölder gaps and the split inequality on nonnegative tuples.
fn criterion_2() -> Outcome {
    let shapes: [(&[usize], i32, i32); 5] =
        [(&[2, 2], 0, 2), (&[1, 2], 0, 2), (&[2, 3], 0, 1), (&[3, 3], 0, 1), (&[2, 2, 2], 0, 1)];
    let mut failures = Vec::new();
    let mut checks = 0usize;
    let mut n = 0usize;
    let half = r(1, 2);
    for seed in 0..100u64 {
        for (i, &(sizes, top, fine)) in shapes.iter().enumerate() {
            let profile = [Profile::RandomTuple, Profile::Spike, Profile::Constant][(seed % 3) as usize];
            let inst = instance(seed * 10 + i as u64, profile, sizes, top, fine, true);
            let f = inst.functions.map(StepFunction::abs);
            let h = &inst.hypergraph;
            let m = inst.model;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64) << 32);
            n += 1;
            for (label, g) in f.iter() {
                for _ in 0..4 {
                    let ivs: Vec<DyadicInterval> = (0..m.r).map(|_| random_interval(&mut rng, &m)).collect();
                    checks += 1;
                    if symmetrized_sum(g, &ivs).unwrap() < Rational::zero() {
                        failures.push(format!("symmetrized {label} {ivs:?}"));
                    }
                }
            }
            let cubes = m.all_cubes();
            for _ in 0..6 {
                let q = &cubes[rng.gen_range(0..cubes.len())];
                checks += 1;
                if !holder_gap(h, q, &f).unwrap().nonnegative {
                    failures.push(format!("holder gap at {q}"));
                }
            }
            for (c, class) in (0..h.r()).map(|c| (c, h.class(c))) {
                if class.len() < 2 {
                    continue;
                }
                let (v1, v2) = (class[0], class[1]);
                for _ in 0..2 {
                    let q = &cubes[rng.gen_range(0..cubes.len())];
                    let mut sel = vec![v1, v2];
                    sel.extend(h.vertices().iter().enumerate().filter(|(_, x)| x.class != c && rng.gen_bool(0.5)).map(|(v, _)| v));
                    let s = Selection::from_vertices(&sel);
                    checks += 1;
                    let sc = split_inequality(h, s, v1, v2, q, &f, &half).unwrap();
                    if !sc.holds {
                        failures.push(format!("split {} at {q}", s.describe(h)));
                    }
                }
            }
        }
    }
    outcome(
        n >= 500 && failures.is_empty(),
        format!(
            "{n} instances, {checks} exact comparisons, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

const SPARSE_CERTS: [&str; 5] = ["stopping-measure", "exceptional-sets", "tree-partition", "leaf-bound", "tree-bound"];

/// Stopping families, exceptional sets, tree partition and leaf inflation.
fn criterion_3() -> Outcome {
    let shapes: [(&[usize], i32, i32); 6] =
        [(&[2, 2], 0, 2), (&[1, 2], 0, 3), (&[2, 1], 1, 2), (&[3, 3], 0, 1), (&[1, 1, 1], 0, 2), (&[2, 2, 2], 0, 1)];
    let mut failures = Vec::new();
    let mut n = 0usize;
    let mut spikes = 0usize;
    let mut leaves = 0usize;
    for seed in 0..9u64 {
        for (i, &(sizes, top, fine)) in shapes.iter().enumerate() {
            for profile in Profile::ALL {
                let s = 100 * seed + 10 * i as u64;
                let inst = instance(s, profile, sizes, top, fine, seed % 2 == 0);
                let rep = scenario_report(&inst, vec![Suite::Sparse], s);
                n += 1;
                spikes += (profile == Profile::Spike) as usize;
                leaves += rep.certificate(Suite::Sparse, "leaf-bound").map_or(0, |c| c.checked);
                for f in failed_certs(&rep, &SPARSE_CERTS) {
                    failures.push(format!("{profile} {sizes:?} seed={s}: {f}"));
                }
                if rep.certificates.iter().any(|c| c.name == "completed") {
                    failures.push(format!("{profile} {sizes:?} seed={s}: suite error"));
                }
            }
        }
    }
    outcome(
        n >= 200 && spikes > 0 && failures.is_empty(),
        format!(
            "{n} instances ({spikes} spike), {leaves} leaves checked, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

/// Twisted kernels for r = 2 and r = 3.
fn criterion_4() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (sizes, fine) in [(vec![2usize, 2], 2), (vec![2, 2], 3), (vec![2, 2, 2], 1)] {
        let r = sizes.len();
        let h = Hypergraph::complete(&sizes).unwrap();
        let m = GridModel::new(r, 0, fine).unwrap();
        let k = twisted_kernel(m, &h).unwrap();
        let ones = FunctionTuple::uniform(&h, &StepFunction::constant(m, Rational::one()));
        let zero_t = (0..h.edges().len()).all(|e| t_e0(&h, &k, e, &ones).unwrap().is_zero());
        let d_ok = h.thresholds().per_edge.iter().all(|&d| d == 1u64 << (r - 1));
        ok &= zero_t && d_ok;
        let mut line = format!("r={r} N={fine}: T_e(1)=0 {zero_t}, d_e=2^(r-1) {d_ok}");
        if r == 2 {
            let c = analyze(&k, &h).unwrap();
            let sels = c.selections();
            let s = twisted_selection(&h);
            let unit = sels == vec![s] && c.per_selection[&s].values().all(|v| v.is_one());
            let count: usize = c.per_selection[&s].len();
            let expected: usize = ((-fine + 1)..=0).map(|k| m.cubes_at(k).len()).sum();
            let one_sel = unit && count == expected;
            ok &= one_sel;
            line.push_str(&format!(", lambda=1 on one selection {one_sel}"));
        }
        notes.push(line);
    }
    outcome(ok, notes.join("; "))
}

fn best_time(mut f: impl FnMut(), reps: usize) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

/// Engine agreement on the identity corpus and the factorized speedup at 16 cells per axis.
fn criterion_5(engines: &[String]) -> Outcome {
    let mut notes = Vec::new();
    let mut worst = f64::INFINITY;
    for (profile, seed) in [(Profile::RandomKernel, 1u64), (Profile::RandomTuple, 2)] {
        let inst = instance(seed, profile, &[2, 2], 0, 3, true);
        assert_eq!(inst.model.cells_per_axis(), 16);
        let h = &inst.hypergraph;
        let ev = Evaluator::new(h, &inst.functions).unwrap();
        let a = ev.form(&inst.kernel, Engine::Naive).unwrap();
        let b = ev.form(&inst.kernel, Engine::Factorized).unwrap();
        let naive = best_time(|| drop(ev.form(&inst.kernel, Engine::Naive).unwrap()), 3);
        let fact = best_time(|| drop(ev.form(&inst.kernel, Engine::Factorized).unwrap()), 5);
        let speedup = naive.as_secs_f64() / fact.as_secs_f64();
        worst = worst.min(speedup);
        notes.push(format!(
            "{profile}: naive {:.1} ms, factorized {:.1} ms, speedup {speedup:.1}x, equal {}",
            naive.as_secs_f64() * 1e3,
            fact.as_secs_f64() * 1e3,
            a == b
        ));
        if a != b {
            worst = 0.0;
        }
    }
    outcome(
        engines.is_empty() && worst >= 10.0,
        format!(
            "{} corpus mismatches; {}",
            engines.len(),
            notes.join("; ")
        ),
    )
}

fn random_tuple(rng: &mut ChaCha8Rng, h: &Hypergraph, m: GridModel) -> FunctionTuple {
    let mut f = FunctionTuple::default();
    for label in h.edge_labels() {
        let values = (0..m.num_cells()).map(|_| r(rng.gen_range(-4..=4), 2)).collect();
        f.insert(label, StepFunction::new(m, values).unwrap());
    }
    f
}

/// Copy of `f` on the next finer grid: each fine cell takes its parent's value.
fn refine(f: &FunctionTuple, fine: GridModel) -> FunctionTuple {
    let mut out = FunctionTuple::default();
    for (label, g) in f.iter() {
        let values = (0..fine.num_cells())
            .map(|p| {
                let idx: Vec<usize> = fine.unpack(p).iter().map(|c| c >> 1).collect();
                g.value(&idx).clone()
            })
            .collect();
        out.insert(label, StepFunction::new(fine, values).unwrap());
    }
    out
}

fn max_ratio(h: &Hypergraph, m: GridModel, tuples: &[FunctionTuple]) -> (f64, bool) {
    let k = twisted_kernel(m, h).unwrap();
    let width = r(1, 1 << 20);
    let mut best = 0.0f64;
    let mut finite = true;
    for f in tuples {
        match domination_ratio(h, &k, f, Engine::Factorized, &width) {
            Ok(d) => best = best.max(to_f64(&d.ratio.hi)),
            Err(_) => finite = false,
        }
    }
    (best, finite)
}

/// `max |Lambda| / Theta` for the twisted r = 2 kernel over 100 tuples at fine scales N and N + 1.
///
/// The tuples at N + 1 are the N tuples on the finer grid, so both maxima range over the
/// same functions. Fresh draws at N + 1 are reported alongside.
fn criterion_6() -> Outcome {
    let h = Hypergraph::complete(&[2, 2]).unwrap();
    let (n0, n1) = (2, 3);
    let (m0, m1) = (GridModel::new(2, 0, n0).unwrap(), GridModel::new(2, 0, n1).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let coarse: Vec<FunctionTuple> = (0..100).map(|_| random_tuple(&mut rng, &h, m0)).collect();
    let refined: Vec<FunctionTuple> = coarse.iter().map(|f| refine(f, m1)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let fresh: Vec<FunctionTuple> = (0..100).map(|_| random_tuple(&mut rng, &h, m1)).collect();
    let (a, fa) = max_ratio(&h, m0, &coarse);
    let (b, fb) = max_ratio(&h, m1, &refined);
    let (c, fc) = max_ratio(&h, m1, &fresh);
    let change = (b - a).abs() / a;
    outcome(
        fa && fb && fc && a.is_finite() && b.is_finite() && c.is_finite() && change <= 0.10,
        format!(
            "max ratio {a:.6} at N={n0}, {b:.6} at N={n1}, relative change {:.1}% (limit 10%); fresh draws at N={n1}: {c:.6}",
            change * 100.0
        ),
    )
}

const WEIGHT_CERTS: [&str; 6] = [
    "normalization",
    "unit-weight-constant",
    "splitting-identity",
    "first-factor-bound",
    "second-factor-bound",
    "maximal-chain",
];

fn weighted_scenario(inst: &Instance, weights: Option<&[StepFunction]>, p: Option<&[Exponent]>) -> Scenario {
    let mut s = entangled_scenario(inst);
    let labels: Vec<String> = inst.hypergraph.edges().iter().map(|e| e.label.clone()).collect();
    s.weights = weights.map(|w| labels.iter().cloned().zip(w.iter().map(dense)).collect());
    s.exponents = p.map(|p| labels.iter().cloned().zip(p.iter().cloned()).collect());
    s
}

/// Unit constant, normalization validator, splitting identity and both factor bounds.
fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let mut tallies = (0usize, 0usize);
    let mut runs = 0usize;
    let mut record = |rep: &Report, label: &str, failures: &mut Vec<String>| {
        for f in failed_certs(rep, &WEIGHT_CERTS) {
            failures.push(format!("{label}: {f}"));
        }
        if rep.certificates.iter().any(|c| c.name == "completed") {
            failures.push(format!("{label}: suite error"));
        }
        if let Some(d) = rep.record(Suite::Weighted).and_then(|r| r.details.get("splitting")) {
            let t = &d["identity"];
            tallies.0 += t["exact"].as_u64().unwrap_or(0) as usize;
            tallies.1 += t["consistent"].as_u64().unwrap_or(0) as usize + t["certified"].as_u64().unwrap_or(0) as usize;
        }
    };
    let opts = RunOptions {
        suites: Some(vec![Suite::Weighted]),
        ..RunOptions::default()
    };

    // Unit weights with the canonical exponents: [1] = 1 exactly.
    for (i, (sizes, top, fine)) in [(vec![2usize, 2], 0, 2), (vec![2, 3], 0, 1), (vec![2, 2, 2], 0, 1)].into_iter().enumerate() {
        for seed in 0..4u64 {
            let inst = instance(seed + 10 * i as u64, Profile::RandomTuple, &sizes, top, fine, true);
            let rep = run(&weighted_scenario(&inst, None, None), &opts).unwrap();
            runs += 1;
            let unit = rep.certificate(Suite::Weighted, "unit-weight-constant");
            if unit.is_none() {
                failures.push(format!("{sizes:?}: no unit-weight certificate"));
            }
            record(&rep, &format!("unit {sizes:?} seed={seed}"), &mut failures);
        }
    }

    // Random weights with the last one solved from the normalization.
    let four = |x: i64, y: i64| Exponent::Finite(r(x, y));
    let exponent_sets: Vec<Vec<Exponent>> = vec![
        vec![four(4, 1); 4],
        vec![four(3, 1), four(3, 1), four(6, 1), four(6, 1)],
        vec![four(5, 2), four(5, 2), four(10, 1), four(10, 1)],
        vec![four(3, 1), four(3, 1), four(3, 1), Exponent::Infinite],
    ];
    let pool = [r(1, 2), r(1, 1), r(2, 1), r(4, 1)];
    for (j, p) in exponent_sets.iter().enumerate() {
        for seed in 0..6u64 {
            let inst = instance(seed + 100 * j as u64, Profile::RandomTuple, &[2, 2], 0, 2, true);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let m = inst.model;
            let pt = entangled::weights::ExponentTuple::new(&inst.hypergraph, p.clone()).unwrap();
            let w = if p.iter().any(Exponent::is_infinite) {
                // The weight paired with p = inf is free; the rest multiply to one after powers 1/3.
                let a: Vec<Rational> = (0..m.num_cells()).map(|_| pool[rng.gen_range(0..4)].clone()).collect();
                let b: Vec<Rational> = (0..m.num_cells()).map(|_| pool[rng.gen_range(0..4)].clone()).collect();
                let c: Vec<Rational> = a.iter().zip(&b).map(|(x, y)| (x * y).recip()).collect();
                let free: Vec<Rational> = (0..m.num_cells()).map(|_| pool[rng.gen_range(0..4)].clone()).collect();
                [a, b, c, free].into_iter().map(|v| StepFunction::new(m, v).unwrap()).collect::<Vec<_>>()
            } else {
                let mut ws: Vec<StepFunction> = (0..3)
                    .map(|_| StepFunction::new(m, (0..m.num_cells()).map(|_| pool[rng.gen_range(0..4)].clone()).collect()).unwrap())
                    .collect();
                ws.push(synthesize_last_weight(&ws, &pt).unwrap());
                ws
            };
            let rep = run(&weighted_scenario(&inst, Some(&w), Some(p)), &opts).unwrap();
            runs += 1;
            record(&rep, &format!("exponents {j} seed={seed}"), &mut failures);
        }
    }

    // The validator rejects a perturbed tuple.
    let inst = instance(7, Profile::RandomTuple, &[2, 2], 0, 2, true);
    let m = inst.model;
    let mut w = vec![StepFunction::constant(m, Rational::one()); 4];
    w[0] = StepFunction::constant(m, r(17, 16));
    let rep = run(&weighted_scenario(&inst, Some(&w), None), &opts).unwrap();
    let rejected = rep.certificate(Suite::Weighted, "normalization").is_some_and(|c| !c.passed);
    if !rejected {
        failures.push("perturbed weights accepted".into());
    }

    outcome(
        failures.is_empty() && tallies.0 > 0,
        format!(
            "{runs} weighted runs, splitting identity exact on {} cubes and enclosure-consistent on {}, perturbed tuple rejected {rejected}, {} failures{}",
            tallies.0,
            tallies.1,
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let mut engines = Vec::new();
    let mut all = true;
    let mut report = |n: usize, limit: u64, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        let passed = o.passed && secs < limit as f64;
        all &= passed;
        println!(
            "criterion {n}: {} ({}; {secs:.1} s, limit {limit} s)",
            if passed { "PASS" } else { "FAIL" },
            o.summary
        );
    };
    report(1, 60, &mut || criterion_1(&mut engines));
    report(2, 60, &mut criterion_2);
    report(3, 120, &mut criterion_3);
    report(4, 10, &mut criterion_4);
    report(5, 120, &mut || criterion_5(&engines));
    report(6, 180, &mut criterion_6);
    report(7, 120, &mut criterion_7);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
