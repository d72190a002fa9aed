use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use entangled::forms::evaluate_form;
use entangled::kernel::analyze;
use entangled::sparse::build_sparse_family;
use entangled::workbench::Profile;
use entangled::{Engine, StepFunction};
use entangled_bench::instance;

fn engines(c: &mut Criterion) {
    let mut g = c.benchmark_group("form");
    for (sizes, fine) in [(vec![2, 2], 2), (vec![2, 2], 3), (vec![3, 3], 2), (vec![2, 2, 2], 1)] {
        let inst = instance(&sizes, fine, Profile::RandomKernel, 1);
        let id = format!("{sizes:?}/cpa{}", inst.model.cells_per_axis());
        for engine in [Engine::Naive, Engine::Factorized] {
            g.bench_with_input(BenchmarkId::new(format!("{engine:?}"), &id), &inst, |b, inst| {
                b.iter(|| evaluate_form(&inst.hypergraph, &inst.kernel, &inst.functions, engine).unwrap())
            });
        }
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let inst = instance(&[2, 2], 3, Profile::RandomKernel, 2);
    c.bench_function("analyze/[2, 2]/cpa16", |b| {
        b.iter(|| analyze(&inst.kernel, &inst.hypergraph).unwrap())
    });
    let spike = instance(&[2, 2], 3, Profile::Spike, 3);
    let af = spike.functions.map(StepFunction::abs);
    c.bench_function("sparse-family/spike/cpa16", |b| {
        b.iter(|| build_sparse_family(&spike.hypergraph, &af).unwrap())
    });
}

criterion_group!(benches, engines, analysis);
criterion_main!(benches);
