use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_traits::{One, Signed, Zero};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::dyadic::{build_convex_tree, haar, leaf_volume, DyadicCube, DyadicInterval, GridModel};
use crate::forms::{
    decomposition_total, duplicate_identity, evaluate_form, holder_gap, split_inequality, symmetrized_sum,
    tree_constant, Engine, Evaluator, FunctionTuple, LocalizedForm,
};
use crate::hypergraph::{all_selections, feasible_exponents, Hypergraph, Selection};
use crate::kernel::{analyze, classify, coeff_bmo, coeff_linf, size_constant, synthesize, DiagonalHaarCoefficients};
use crate::numerics::{format_rational, int, Rational, Real, Root};
use crate::sparse::{build_sparse_family, certify, domination_ratio, partition_trees, sparse_form, SparseError};
use crate::stepfn::{bmo_l1, Exponent, StepFunction};
use crate::weights::{
    check_normalization, maximal_bound_ratio, muckenhoupt_constant, sparse_weighted_decomposition_check,
    weighted_estimate_ratio, ExponentTuple, WeightTuple,
};

use super::report::{Certificate, Report, Runtime, SuiteRecord};
use super::scenario::{EngineChoice, Instance, Suite};
use super::WorkbenchError;

/// Per-check sample caps; exhaustive below them.
const CUBE_CAP: usize = 256;
const SAMPLE_CAP: usize = 16;
const GRAM_PAIRS: usize = 20_000;

struct Check {
    name: &'static str,
    checked: usize,
    failures: usize,
    witness: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            checked: 0,
            failures: 0,
            witness: None,
        }
    }

    fn record(&mut self, ok: bool, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.witness.is_none() {
                self.witness = Some(witness());
            }
        }
    }
}

struct Ctx<'a> {
    inst: &'a Instance,
    suite: Suite,
    width: &'a Rational,
    engine: EngineChoice,
    rng: ChaCha8Rng,
    report: &'a mut Report,
    details: Map<String, Value>,
    skipped: Vec<String>,
}

impl Ctx<'_> {
    fn h(&self) -> &Hypergraph {
        &self.inst.hypergraph
    }

    fn model(&self) -> GridModel {
        self.inst.model
    }

    fn perfect(&self) -> bool {
        self.inst.kernel.perfect_report().is_valid()
    }

    /// The factorized engine needs a perfect kernel; fall back to the naive sum otherwise.
    fn engine(&self) -> Engine {
        if self.perfect() {
            self.engine.primary()
        } else {
            Engine::Naive
        }
    }

    fn lambda(&self) -> Result<Rational, WorkbenchError> {
        Ok(evaluate_form(self.h(), &self.inst.kernel, &self.inst.functions, self.engine())?)
    }

    fn abs_functions(&self) -> FunctionTuple {
        self.inst.functions.map(StepFunction::abs)
    }

    fn cert(&mut self, c: Check) {
        self.report.certificates.push(Certificate {
            suite: self.suite,
            name: c.name.to_string(),
            passed: c.failures == 0,
            checked: c.checked,
            failures: c.failures,
            witness: c.witness,
        });
    }

    fn fail(&mut self, name: &'static str, witness: String) {
        let mut c = Check::new(name);
        c.record(false, || witness);
        self.cert(c);
    }

    fn skip(&mut self, msg: impl Into<String>) {
        self.skipped.push(msg.into());
    }

    fn detail(&mut self, key: &str, v: Value) {
        self.details.insert(key.to_string(), v);
    }

    fn rational(&mut self, name: impl Into<String>, x: &Rational) {
        let w = self.width.clone();
        self.report.constant_rational(self.suite, name, x, &w);
    }

    fn root(&mut self, name: impl Into<String>, x: &Root) -> Result<(), WorkbenchError> {
        let w = self.width.clone();
        Ok(self.report.constant_root(self.suite, name, x, &w)?)
    }

    fn real(&mut self, name: impl Into<String>, x: &Real) -> Result<(), WorkbenchError> {
        let w = self.width.clone();
        let e = x.enclose(&w)?;
        self.report.constant_enclosure(self.suite, name, None, &e, &w);
        Ok(())
    }

    fn sample<T: Clone>(&mut self, items: &[T], cap: usize) -> Vec<T> {
        if items.len() <= cap {
            return items.to_vec();
        }
        let mut idx = sample(&mut self.rng, items.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| items[i].clone()).collect()
    }
}

fn suite_seed(seed: u64, suite: Suite) -> u64 {
    seed ^ (suite as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub(crate) fn run_suite(
    inst: &Instance,
    suite: Suite,
    seed: u64,
    width: &Rational,
    engine: EngineChoice,
    report: &mut Report,
) {
    let mut ctx = Ctx {
        inst,
        suite,
        width,
        engine,
        rng: ChaCha8Rng::seed_from_u64(suite_seed(seed, suite)),
        report,
        details: Map::new(),
        skipped: Vec::new(),
    };
    let res = match suite {
        Suite::Validate => validate(&mut ctx),
        Suite::Decompose => decompose(&mut ctx),
        Suite::Identities => identities(&mut ctx),
        Suite::T1 => t1(&mut ctx),
        Suite::Sparse => sparse(&mut ctx),
        Suite::Weighted => weighted(&mut ctx),
        Suite::Bench => bench(&mut ctx),
    };
    if let Err(e) = res {
        ctx.fail("completed", e.to_string());
    }
    let record = SuiteRecord {
        suite,
        details: Value::Object(std::mem::take(&mut ctx.details)),
        skipped: std::mem::take(&mut ctx.skipped),
    };
    ctx.report.suites.push(record);
}

/// Cubes at scales where Haar splitting is defined, coarsest first.
fn coefficient_cubes(model: &GridModel) -> Vec<DyadicCube> {
    ((-model.fine + 1)..=model.top).rev().flat_map(|k| model.cubes_at(k)).collect()
}

fn exponents_for(inst: &Instance) -> Result<ExponentTuple, WorkbenchError> {
    match &inst.exponents {
        Some(p) => Ok(p.clone()),
        None => Ok(ExponentTuple::feasible(&inst.hypergraph)?),
    }
}

fn weights_for(inst: &Instance) -> WeightTuple {
    match &inst.weights {
        Some(w) => w.clone(),
        None => WeightTuple::ones(inst.model, inst.hypergraph.edges().len()),
    }
}

fn validate(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    let h = ctx.h().clone();
    let v = h.validate();
    ctx.detail("hypergraph", serde_json::to_value(&v).expect("json"));
    ctx.detail("admissible", json!(v.admissible));
    let th = h.thresholds();
    ctx.detail("thresholds", serde_json::to_value(&th).expect("json"));
    let feasible = feasible_exponents(&th.per_edge).map(|p| p.iter().map(format_rational).collect::<Vec<_>>());
    ctx.detail("feasible_exponents", json!(feasible));

    let mut arr = Check::new("kernel-arrangement");
    arr.record(ctx.inst.kernel.consistent_with(&h), || "kernel axes do not follow the vertex classes".into());
    ctx.cert(arr);

    let pr = ctx.inst.kernel.perfect_report().clone();
    let mut perfect = Check::new("kernel-perfect");
    perfect.checked = pr.cubes_scanned.saturating_sub(1);
    perfect.record(pr.is_valid(), || {
        format!(
            "cube {} varies by {}",
            pr.location.clone().unwrap_or_default(),
            format_rational(&pr.worst)
        )
    });
    ctx.cert(perfect);

    let sc = size_constant(&ctx.inst.kernel);
    ctx.detail("size_constant", serde_json::to_value(&sc).expect("json"));
    if sc.vacuous {
        ctx.skip("size constant: n <= r, the size bound is vacuous");
    } else {
        let w = ctx.width.clone();
        let e = crate::numerics::Enclosure {
            lo: sc.lower.clone(),
            hi: sc.upper.clone(),
        };
        ctx.report.constant_enclosure(ctx.suite, "size_constant", None, &e, &w);
    }

    if ctx.inst.weights.is_some() || ctx.inst.exponents.is_some() {
        match exponents_for(ctx.inst) {
            Err(e) => ctx.skip(format!("weights: {e}")),
            Ok(p) => {
                let w = weights_for(ctx.inst);
                let mut norm = Check::new("weight-normalization");
                let res = check_normalization(&w, &p);
                norm.checked = ctx.model().num_cells();
                norm.record(res.is_ok(), || res.as_ref().unwrap_err().to_string());
                ctx.cert(norm);
            }
        }
    }
    Ok(())
}

fn decompose(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    if !ctx.perfect() {
        ctx.skip("decompose: kernel is not perfect dyadic");
        return Ok(());
    }
    let h = ctx.h().clone();
    let k = &ctx.inst.kernel;
    let c = analyze(k, &h)?;

    let k2 = synthesize(&c)?;
    let mut rt = Check::new("round-trip");
    let cells: BTreeSet<usize> = k.values().keys().chain(k2.values().keys()).copied().collect();
    for p in cells {
        let a = k.values().get(&p).cloned().unwrap_or_else(Rational::zero);
        let b = k2.values().get(&p).cloned().unwrap_or_else(Rational::zero);
        rt.record(a == b, || {
            format!(
                "cell {:?}: kernel {} synthesized {}",
                k.nmodel().unpack(p),
                format_rational(&a),
                format_rational(&b)
            )
        });
    }
    ctx.cert(rt);

    if let Some(c0) = &ctx.inst.coefficients {
        let mut rec = Check::new("coefficient-recovery");
        compare_coefficients(&h, c0, &c, &mut rec);
        ctx.cert(rec);
    }

    let total = decomposition_total(&h, &c, &ctx.inst.functions)?;
    let lam = ctx.lambda()?;
    let mut dec = Check::new("decomposition");
    dec.record(total == lam, || {
        format!(
            "paraproducts + coarse = {}, form = {}",
            format_rational(&total),
            format_rational(&lam)
        )
    });
    ctx.cert(dec);

    let mut sels = Vec::new();
    let mut worst_inf = Rational::zero();
    let mut worst_bmo = Root::zero();
    for s in c.selections() {
        let name = s.describe(&h);
        let class = classify(&h, s)?;
        let linf = coeff_linf(&c, s);
        let bmo = coeff_bmo(&c, s);
        sels.push(json!({
            "selection": name,
            "class": class,
            "nonzero": c.per_selection[&s].len(),
        }));
        ctx.rational(format!("lambda_inf[{name}]"), &linf);
        ctx.root(format!("lambda_bmo[{name}]"), &bmo)?;
        worst_inf = worst_inf.max(linf);
        worst_bmo = worst_bmo.max(bmo);
    }
    ctx.rational("lambda_inf", &worst_inf);
    ctx.root("lambda_bmo", &worst_bmo)?;
    ctx.detail("selections", Value::Array(sels));
    ctx.detail(
        "coarse",
        json!(c
            .coarse
            .iter()
            .filter(|(_, v)| !v.is_zero())
            .map(|(q, v)| json!({"cube": q.to_string(), "value": format_rational(v)}))
            .collect::<Vec<_>>()),
    );
    Ok(())
}

fn compare_coefficients(h: &Hypergraph, want: &DiagonalHaarCoefficients, got: &DiagonalHaarCoefficients, chk: &mut Check) {
    let sels: BTreeSet<Selection> = want.per_selection.keys().chain(got.per_selection.keys()).copied().collect();
    for s in sels {
        let empty = BTreeMap::new();
        let a = want.per_selection.get(&s).unwrap_or(&empty);
        let b = got.per_selection.get(&s).unwrap_or(&empty);
        let cubes: BTreeSet<&DyadicCube> = a.keys().chain(b.keys()).collect();
        for q in cubes {
            let x = a.get(q).cloned().unwrap_or_else(Rational::zero);
            let y = b.get(q).cloned().unwrap_or_else(Rational::zero);
            chk.record(x == y, || {
                format!(
                    "selection {} cube {q}: given {} recovered {}",
                    s.describe(h),
                    format_rational(&x),
                    format_rational(&y)
                )
            });
        }
    }
    let blocks: BTreeSet<&DyadicCube> = want.coarse.keys().chain(got.coarse.keys()).collect();
    for q in blocks {
        let x = want.coarse.get(q).cloned().unwrap_or_else(Rational::zero);
        let y = got.coarse.get(q).cloned().unwrap_or_else(Rational::zero);
        chk.record(x == y, || {
            format!("coarse block {q}: given {} recovered {}", format_rational(&x), format_rational(&y))
        });
    }
}

/// `int h^a_I h^b_J` for every pair of coefficient-scale intervals, by summing over cells.
struct HaarGram {
    index: BTreeMap<DyadicInterval, usize>,
    table: Vec<Vec<Rational>>,
}

impl HaarGram {
    fn new(model: &GridModel) -> Self {
        let line = model.with_dim(1).expect("dimension 1");
        let intervals: Vec<DyadicInterval> = coefficient_cubes(&line).iter().map(|q| q.interval(0)).collect();
        let cpa = line.cells_per_axis();
        let starts: Vec<Rational> = (0..cpa).map(|c| line.cell_interval(c).start()).collect();
        // Row 2i + v holds h^v_{I_i} on each cell.
        let rows: Vec<Vec<Rational>> = intervals
            .iter()
            .flat_map(|i| [0u8, 1u8].map(|v| starts.iter().map(|x| haar(i, v, x)).collect::<Vec<_>>()))
            .collect();
        let cell = line.cell_length();
        let table = rows
            .iter()
            .map(|a| {
                rows.iter()
                    .map(|b| {
                        a.iter()
                            .zip(b)
                            .filter(|(x, y)| !x.is_zero() && !y.is_zero())
                            .fold(Rational::zero(), |acc, (x, y)| acc + x * y)
                            * &cell
                    })
                    .collect()
            })
            .collect();
        HaarGram {
            index: intervals.iter().enumerate().map(|(i, iv)| (*iv, i)).collect(),
            table,
        }
    }

    fn get(&self, i: &DyadicInterval, a: u8, j: &DyadicInterval, b: u8) -> &Rational {
        &self.table[2 * self.index[i] + a as usize][2 * self.index[j] + b as usize]
    }
}

/// `{|Q|^(1/2) prod_i h^{eps_i}_{I_i} : eps != 0}` is orthonormal; checked as
/// `<H, H'> = delta / |Q|`.
fn haar_orthonormality(ctx: &mut Ctx) {
    let model = ctx.model();
    let gram = HaarGram::new(&model);
    let r = model.r;
    let items: Vec<(DyadicCube, usize)> = coefficient_cubes(&model)
        .into_iter()
        .flat_map(|q| (1..(1usize << r)).map(move |e| (q.clone(), e)))
        .collect();
    let inner = |(q, e): &(DyadicCube, usize), (p, f): &(DyadicCube, usize)| -> Rational {
        (0..r).fold(Rational::one(), |acc, i| {
            if acc.is_zero() {
                return acc;
            }
            acc * gram.get(&q.interval(i), ((e >> i) & 1) as u8, &p.interval(i), ((f >> i) & 1) as u8)
        })
    };
    let mut chk = Check::new("haar-orthonormality");
    let mut test = |a: &(DyadicCube, usize), b: &(DyadicCube, usize)| {
        let got = inner(a, b);
        let want = if a == b { a.0.volume().recip() } else { Rational::zero() };
        chk.record(got == want, || {
            format!(
                "<h[{} eps={:b}], h[{} eps={:b}]> = {}",
                a.0,
                a.1,
                b.0,
                b.1,
                format_rational(&got)
            )
        });
    };
    if items.len() * items.len() <= 4 * GRAM_PAIRS {
        for (i, a) in items.iter().enumerate() {
            for b in &items[i..] {
                test(a, b);
            }
        }
    } else {
        for a in &items {
            test(a, a);
            // Same cube, other signs, and the parent cube: the pairs most likely to interact.
            for e in 1..(1usize << r) {
                if e != a.1 {
                    test(a, &(a.0.clone(), e));
                }
                if a.0.k < model.top {
                    test(a, &(a.0.parent(), e));
                }
            }
        }
        for _ in 0..GRAM_PAIRS {
            let i = ctx.rng.gen_range(0..items.len());
            let j = ctx.rng.gen_range(0..items.len());
            test(&items[i], &items[j]);
        }
    }
    ctx.cert(chk);
}

fn random_tree_stop(ctx: &mut Ctx, root: &DyadicCube) -> BTreeSet<DyadicCube> {
    let model = ctx.model();
    model
        .subcubes(root)
        .into_iter()
        .filter(|q| q != root)
        .filter(|_| ctx.rng.gen_bool(0.25))
        .collect()
}

fn identities(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    let h = ctx.h().clone();
    let model = ctx.model();
    let f = ctx.inst.functions.clone();
    let ev = Evaluator::new(&h, &f)?;

    let cubes = coefficient_cubes(&model);
    let picked = ctx.sample(&cubes, CUBE_CAP);
    let mut diff = Check::new("difference-identity");
    for q in &picked {
        let res = ev.difference_identity_residual(q)?;
        diff.record(res.is_zero(), || format!("cube {q}: residual {}", format_rational(&res)));
    }
    ctx.cert(diff);

    haar_orthonormality(ctx);

    let k = &ctx.inst.kernel;
    let lam_naive = ev.form_naive(k)?;
    if ctx.perfect() {
        let lam_fact = ev.form_factorized(k)?;
        let mut eq = Check::new("engine-equivalence");
        eq.record(lam_naive == lam_fact, || {
            format!(
                "naive {} factorized {}",
                format_rational(&lam_naive),
                format_rational(&lam_fact)
            )
        });
        ctx.cert(eq);
    } else {
        ctx.skip("engine-equivalence: kernel is not perfect dyadic");
    }

    let mut dual = Check::new("t-duality");
    let cell = model.cell_volume();
    for (e, fe) in ev_funcs(&h, &f)?.into_iter().enumerate() {
        let t = ev.t_e0(k, e)?;
        let pairing = t
            .values()
            .iter()
            .zip(fe.values())
            .fold(Rational::zero(), |a, (x, y)| a + x * y)
            * &cell;
        dual.record(pairing == lam_naive, || {
            format!(
                "edge {}: <T(F), F_e> = {} but form = {}",
                h.edge_name(e),
                format_rational(&pairing),
                format_rational(&lam_naive)
            )
        });
    }
    ctx.cert(dual);

    let mut tele = Check::new("telescoping");
    let mut roots: Vec<DyadicCube> = model.top_cubes();
    for _ in 0..4 {
        let k = ctx.rng.gen_range(-model.fine..=model.top);
        let all = model.cubes_at(k);
        roots.push(all[ctx.rng.gen_range(0..all.len())].clone());
    }
    for (i, root) in roots.iter().enumerate() {
        let stop = if i < (1 << model.r) {
            BTreeSet::new()
        } else {
            random_tree_stop(ctx, root)
        };
        let tree = build_convex_tree(&model, root, &stop)?;
        let (lhs, rhs) = crate::forms::telescoping(&h, &tree, &f)?;
        let shape_ok = tree.is_convex() && leaf_volume(&tree) == root.volume();
        tele.record(shape_ok && lhs == rhs, || {
            format!(
                "tree at {root} ({} cubes): sum of boxes {} vs leaves minus root {}",
                tree.len(),
                format_rational(&lhs),
                format_rational(&rhs)
            )
        });
    }
    ctx.cert(tele);

    let dec = h.decompose();
    let selections: Vec<Selection> = all_selections(&h).into_iter().filter(|s| !s.is_empty()).collect();
    if dec.components.len() == 1 && dec.isolated.is_empty() {
        let mut dup = Check::new("duplicate-identity");
        for _ in 0..SAMPLE_CAP {
            let s = selections[ctx.rng.gen_range(0..selections.len())];
            let q = cubes[ctx.rng.gen_range(0..cubes.len())].clone();
            let (a2, b) = duplicate_identity(&h, s, &q, &f)?;
            dup.record(a2 == b, || {
                format!(
                    "selection {} cube {q}: square {} doubled {}",
                    s.describe(&h),
                    format_rational(&a2),
                    format_rational(&b)
                )
            });
        }
        ctx.cert(dup);
    } else {
        ctx.skip("duplicate-identity: hypergraph is not a single component");
    }

    let af = ctx.abs_functions();
    let mut sym = Check::new("symmetrized-nonnegative");
    for (label, g) in af.iter() {
        for j in 0..SAMPLE_CAP {
            let intervals: Vec<DyadicInterval> = if j % 2 == 0 {
                let q = &cubes[ctx.rng.gen_range(0..cubes.len())];
                (0..model.r).map(|i| q.interval(i)).collect()
            } else {
                (0..model.r)
                    .map(|_| {
                        let k = ctx.rng.gen_range(-model.fine..=model.top);
                        let half = 1i64 << (model.top - k);
                        DyadicInterval::new(k, ctx.rng.gen_range(-half..half))
                    })
                    .collect()
            };
            let v = symmetrized_sum(g, &intervals)?;
            sym.record(!v.is_negative(), || {
                format!("|F[{label}]| on {intervals:?}: sum {}", format_rational(&v))
            });
        }
    }
    ctx.cert(sym);

    if h.thresholds().complete_m.is_some() && dec.components.len() == 1 {
        let mut hold = Check::new("holder-gap");
        let all = model.all_cubes();
        for q in ctx.sample(&all, SAMPLE_CAP) {
            let g = holder_gap(&h, &q, &af)?;
            hold.record(g.nonnegative, || {
                format!("cube {q}: product {} below form {}", g.product, format_rational(&g.form))
            });
        }
        ctx.cert(hold);
    } else {
        ctx.skip("holder-gap: hypergraph is not a single complete component");
    }

    let mut splits: Vec<(Selection, usize, usize)> = Vec::new();
    for &s in &selections {
        let vs = s.vertices();
        for (i, &a) in vs.iter().enumerate() {
            for &b in &vs[i + 1..] {
                if h.class_of(a) == h.class_of(b) && h.vertices()[a].group != h.vertices()[b].group {
                    splits.push((s, a, b));
                }
            }
        }
    }
    if splits.is_empty() {
        ctx.skip("split-inequality: no class has two vertices");
    } else {
        let half = Rational::new(1.into(), 2.into());
        let mut split = Check::new("split-inequality");
        for _ in 0..SAMPLE_CAP {
            let (s, v1, v2) = splits[ctx.rng.gen_range(0..splits.len())];
            let q = cubes[ctx.rng.gen_range(0..cubes.len())].clone();
            let sc = split_inequality(&h, s, v1, v2, &q, &af, &half)?;
            split.record(sc.holds, || {
                format!(
                    "selection {} split {}/{} at {q}: {} > {}",
                    s.describe(&h),
                    h.vertices()[v1].id,
                    h.vertices()[v2].id,
                    format_rational(&sc.lhs),
                    format_rational(&sc.rhs)
                )
            });
        }
        ctx.cert(split);
    }
    Ok(())
}

fn ev_funcs<'a>(h: &Hypergraph, f: &'a FunctionTuple) -> Result<Vec<&'a StepFunction>, WorkbenchError> {
    Ok(f.for_edges(h)?)
}

fn t1(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    if !ctx.perfect() {
        ctx.skip("t1: kernel is not perfect dyadic");
        return Ok(());
    }
    let h = ctx.h().clone();
    let rep = crate::forms::condition_diagnostics(&h, &ctx.inst.kernel)?;
    ctx.rational("wbp", &rep.wbp);
    let ones = FunctionTuple::uniform(&h, &StepFunction::constant(ctx.model(), Rational::one()));
    let ev = Evaluator::new(&h, &ones)?;
    for e in 0..h.edges().len() {
        let name = h.edge_name(e);
        ctx.root(format!("t1bmo[{name}]"), &rep.t1bmo[e])?;
        let t = ev.t_e0(&ctx.inst.kernel, e)?;
        let l1 = bmo_l1(&t);
        ctx.rational(format!("t1bmo_l1[{name}]"), &l1);
        if let Some(inv) = rep.t1bmo[e].recip() {
            ctx.root(format!("t1bmo_ratio[{name}]"), &inv.mul(&Root::rational(l1)))?;
        }
        ctx.rational(format!("l1ratio[{name}]"), &rep.l1ratio[e]);
    }
    ctx.detail("condition", serde_json::to_value(&rep).expect("json"));
    Ok(())
}

fn sparse(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    let h = ctx.h().clone();
    let af = ctx.abs_functions();
    let fam = build_sparse_family(&h, &af)?;
    let cert = certify(&h, &af, &fam)?;
    let witness = cert.witness.clone().unwrap_or_default();
    for (name, ok, checked) in [
        ("stopping-measure", cert.measure_bound, fam.len()),
        ("exceptional-sets", cert.disjoint && cert.sparse, fam.len()),
        ("tree-partition", cert.partition, fam.len()),
        ("leaf-bound", cert.leaf_bound, cert.leaves_checked),
        ("tree-bound", cert.tree_bound, fam.len()),
    ] {
        let mut c = Check::new(name);
        c.record(ok, || witness.clone());
        c.checked = checked;
        ctx.cert(c);
    }
    ctx.rational("family_size", &int(fam.len() as i64));
    ctx.rational("min_exceptional_ratio", &cert.min_exceptional_ratio);
    ctx.detail("stopping_m", json!(fam.config.m()));
    ctx.detail("family", serde_json::to_value(fam.export()).expect("json"));
    let theta = sparse_form(&h, &fam, &af)?;
    ctx.real("theta", &theta)?;
    match domination_ratio(&h, &ctx.inst.kernel, &ctx.inst.functions, ctx.engine(), ctx.width) {
        Ok(dr) => {
            let w = ctx.width.clone();
            ctx.report.constant_enclosure(ctx.suite, "domination_ratio", None, &dr.ratio, &w);
            ctx.detail("lambda", json!(format_rational(&dr.lambda)));
        }
        Err(e @ SparseError::WindowArtifact) => ctx.skip(format!("domination_ratio: {e}")),
        Err(e) => return Err(e.into()),
    }

    if ctx.perfect() && !fam.is_empty() {
        let c = analyze(&ctx.inst.kernel, &h)?;
        let trees = partition_trees(&fam)?;
        for s in c.selections() {
            let mut best = Root::zero();
            for tree in trees.values() {
                let lf = LocalizedForm {
                    selection: s,
                    coefficients: Some(c.per_selection[&s].clone()),
                    tree: tree.clone(),
                };
                best = best.max(tree_constant(&h, &lf, &af)?.ratio);
            }
            ctx.root(format!("tree_constant[{}]", s.describe(&h)), &best)?;
        }
    }
    Ok(())
}

fn weighted(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    let h = ctx.h().clone();
    let p = match exponents_for(ctx.inst) {
        Ok(p) => p,
        Err(e) => {
            ctx.skip(format!("weighted: {e}"));
            return Ok(());
        }
    };
    let w = weights_for(ctx.inst);
    ctx.detail("exponents", json!(p.p.iter().map(|x| x.to_string()).collect::<Vec<_>>()));
    ctx.detail("muckenhoupt_power", json!(format_rational(&p.muckenhoupt_power())));

    let mut norm = Check::new("normalization");
    let res = check_normalization(&w, &p);
    norm.checked = ctx.model().num_cells();
    norm.record(res.is_ok(), || res.as_ref().unwrap_err().to_string());
    ctx.cert(norm);
    if res.is_err() {
        return Ok(());
    }

    let muck = muckenhoupt_constant(&w, &p)?;
    match &muck.exact {
        Some((v, q)) => {
            ctx.root("muckenhoupt", v)?;
            ctx.detail("muckenhoupt_at", json!(q.to_string()));
        }
        None => {
            let e = muck.enclose(ctx.width)?;
            let wd = ctx.width.clone();
            ctx.report.constant_enclosure(ctx.suite, "muckenhoupt", None, &e, &wd);
        }
    }
    if ctx.inst.weights.is_none() {
        let mut unit = Check::new("unit-weight-constant");
        let exact = muck.exact.as_ref().map(|(v, _)| v.clone());
        unit.record(exact == Some(Root::one()), || {
            format!("[1] = {}", exact.map(|v| v.to_string()).unwrap_or_else(|| "irrational".into()))
        });
        ctx.cert(unit);
    }

    let wr = weighted_estimate_ratio(&h, &ctx.inst.kernel, &ctx.inst.functions, &w, &p, ctx.engine(), ctx.width)?;
    let wd = ctx.width.clone();
    ctx.report.constant_enclosure(ctx.suite, "weighted_ratio", None, &wr.ratio, &wd);

    let af = ctx.abs_functions();
    let fam = build_sparse_family(&h, &af)?;
    let sp = sparse_weighted_decomposition_check(&h, &fam, &ctx.inst.functions, &w, &p, ctx.width)?;
    let witness = sp.witness.clone().unwrap_or_default();
    for (name, tally) in [
        ("splitting-identity", &sp.identity),
        ("first-factor-bound", &sp.first_bound),
        ("second-factor-bound", &sp.second_bound),
    ] {
        let mut c = Check::new(name);
        c.record(tally.passed(), || witness.clone());
        c.checked = tally.exact + tally.certified + tally.consistent + tally.violated;
        c.failures = tally.violated;
        ctx.cert(c);
    }
    let mut chain = Check::new("maximal-chain");
    for c in [sp.pointwise, sp.holder, sp.disjointness] {
        chain.record(c.holds(), || witness.clone());
    }
    ctx.cert(chain);
    ctx.detail("splitting", serde_json::to_value(&sp).expect("json"));

    let d = h.thresholds().per_edge;
    let funcs = ev_funcs(&h, &ctx.inst.functions)?;
    for (e, g) in funcs.iter().enumerate() {
        let name = h.edge_name(e);
        let above = match &p.p[e] {
            Exponent::Infinite => true,
            Exponent::Finite(x) => *x > int(d[e] as i64),
        };
        if !above || d[e] == 0 {
            ctx.skip(format!("maximal_ratio[{name}]: p_e <= d_e"));
            continue;
        }
        if g.is_zero() {
            ctx.skip(format!("maximal_ratio[{name}]: zero function"));
            continue;
        }
        let r = maximal_bound_ratio(g, d[e] as u32, &w.w[e], &p.p[e], ctx.width)?;
        let wd = ctx.width.clone();
        ctx.report.constant_enclosure(ctx.suite, format!("maximal_ratio[{name}]"), None, &r, &wd);
    }
    Ok(())
}

fn time_min(mut f: impl FnMut() -> Result<(), WorkbenchError>) -> Result<f64, WorkbenchError> {
    let mut best = f64::INFINITY;
    let start = Instant::now();
    let mut reps = 0;
    while reps < 3 || (start.elapsed().as_secs_f64() < 0.2 && reps < 50) {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
        reps += 1;
    }
    Ok(best)
}

fn bench(ctx: &mut Ctx) -> Result<(), WorkbenchError> {
    let h = ctx.h().clone();
    let f = ctx.inst.functions.clone();
    let k = ctx.inst.kernel.clone();
    let mut runtimes = Vec::new();
    let naive = time_min(|| {
        evaluate_form(&h, &k, &f, Engine::Naive)?;
        Ok(())
    })?;
    runtimes.push(("form-naive", naive));
    if ctx.perfect() {
        let fact = time_min(|| {
            evaluate_form(&h, &k, &f, Engine::Factorized)?;
            Ok(())
        })?;
        runtimes.push(("form-factorized", fact));
        ctx.detail("speedup", json!(naive / fact));
        let an = time_min(|| {
            analyze(&k, &h)?;
            Ok(())
        })?;
        runtimes.push(("analyze", an));
    }
    let af = ctx.abs_functions();
    let sp = time_min(|| {
        build_sparse_family(&h, &af)?;
        Ok(())
    })?;
    runtimes.push(("sparse-family", sp));
    for (name, seconds) in runtimes {
        ctx.report.runtimes.push(Runtime {
            suite: Suite::Bench,
            name: name.to_string(),
            seconds,
        });
    }
    Ok(())
}
