//! Seeded scenario generation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dyadic::GridModel;
use crate::hypergraph::Hypergraph;
use crate::numerics::{format_rational, Rational};

use super::scenario::{
    CellValue, CoarseEntry, CoefficientEntry, FunctionSpec, HypergraphSpec, KernelSpec, ModelSpec, Scenario, Suite,
    SCHEMA_VERSION,
};
use super::WorkbenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Kernel synthesized from a random bounded coefficient field, random tuple.
    RandomKernel,
    /// Twisted kernel when the shape allows one, random dense tuple.
    RandomTuple,
    /// Single-cell nonnegative tuples.
    Spike,
    /// Constant positive tuples.
    Constant,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Profile::RandomKernel, Profile::RandomTuple, Profile::Spike, Profile::Constant];

    pub fn name(self) -> &'static str {
        match self {
            Profile::RandomKernel => "random-kernel-via-coefficients",
            Profile::RandomTuple => "random-tuple",
            Profile::Spike => "spike",
            Profile::Constant => "constant",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = WorkbenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "random-kernel-via-coefficients" | "random-kernel" => Ok(Profile::RandomKernel),
            "random-tuple" => Ok(Profile::RandomTuple),
            "spike" => Ok(Profile::Spike),
            "constant" => Ok(Profile::Constant),
            _ => Err(WorkbenchError::Usage(format!("unknown profile {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    /// Class sizes.
    pub sizes: Vec<usize>,
    pub top: i32,
    pub fine: i32,
    /// Keep every edge; otherwise each edge survives with probability 1/2 (at least one).
    pub complete: bool,
    /// Bound on `|lambda^S_Q|` for random kernels.
    pub lambda_cap: Rational,
    pub suites: Vec<Suite>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            sizes: vec![2, 2],
            top: 0,
            fine: 2,
            complete: true,
            lambda_cap: Rational::from_integer(1.into()),
            suites: vec![Suite::Validate, Suite::Decompose, Suite::Identities],
        }
    }
}

/// Quarter steps in `[-cap, cap]`, never zero.
fn bounded_value(rng: &mut ChaCha8Rng, cap: &Rational) -> Rational {
    let step: i64 = rng.gen_range(1..=4);
    let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
    cap * Rational::new((sign * step).into(), 4.into())
}

fn small_value(rng: &mut ChaCha8Rng, signed: bool) -> Rational {
    let lo = if signed { -4 } else { 0 };
    Rational::new(rng.gen_range(lo..=4i64).into(), 2.into())
}

fn dense(rng: &mut ChaCha8Rng, model: &GridModel, signed: bool) -> FunctionSpec {
    FunctionSpec::Dense {
        values: (0..model.num_cells())
            .map(|_| format_rational(&small_value(rng, signed)))
            .collect(),
    }
}

/// Deterministic in `(seed, profile, opts)`.
pub fn generate(seed: u64, profile: Profile, opts: &GenerateOptions) -> Result<Scenario, WorkbenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = opts.sizes.len();
    let model = GridModel::new(r, opts.top, opts.fine).map_err(|e| WorkbenchError::Dimension(e.to_string()))?;
    let full = Hypergraph::complete(&opts.sizes)?;

    let hypergraph = if opts.complete {
        HypergraphSpec {
            complete: Some(opts.sizes.clone()),
            ..HypergraphSpec::default()
        }
    } else {
        let mut keep: Vec<bool> = full.edges().iter().map(|_| rng.gen_bool(0.5)).collect();
        if !keep.iter().any(|&b| b) && !keep.is_empty() {
            let i = rng.gen_range(0..keep.len());
            keep[i] = true;
        }
        let ids = |v: usize| full.vertices()[v].id.clone();
        let classes = (0..r).map(|i| full.class(i).iter().map(|&v| ids(v)).collect()).collect();
        let edges = full
            .edges()
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(e, _)| e.vertices.iter().map(|&v| ids(v)).collect())
            .collect();
        HypergraphSpec {
            classes: Some(classes),
            edges: Some(edges),
            ..HypergraphSpec::default()
        }
    };
    let provisional = Scenario {
        schema_version: SCHEMA_VERSION,
        name: None,
        model: ModelSpec {
            r,
            top: opts.top,
            fine: opts.fine,
        },
        hypergraph,
        kernel: KernelSpec::Zero,
        functions: BTreeMap::new(),
        weights: None,
        exponents: None,
        suites: opts.suites.clone(),
        seed,
        width: None,
        engine: None,
    };
    let h = provisional.build_hypergraph()?;

    let twisted_ok = opts.complete && opts.sizes.iter().all(|&s| s == 2);
    let kernel = match profile {
        Profile::RandomKernel => random_coefficients(&mut rng, &model, &h, &opts.lambda_cap),
        _ if twisted_ok => KernelSpec::Twisted,
        _ => random_coefficients(&mut rng, &model, &h, &opts.lambda_cap),
    };

    let mut functions = BTreeMap::new();
    for label in h.edge_labels() {
        let spec = match profile {
            Profile::RandomKernel | Profile::RandomTuple => dense(&mut rng, &model, true),
            Profile::Spike => {
                let cpa = model.cells_per_axis();
                FunctionSpec::Sparse {
                    cells: vec![CellValue {
                        cell: (0..r).map(|_| rng.gen_range(0..cpa)).collect(),
                        value: rng.gen_range(1..=4i64).to_string(),
                    }],
                }
            }
            Profile::Constant => FunctionSpec::Constant {
                value: rng.gen_range(1..=3i64).to_string(),
            },
        };
        functions.insert(label, spec);
    }

    Ok(Scenario {
        name: Some(format!("{profile}-{seed}")),
        kernel,
        functions,
        ..provisional
    })
}

fn random_coefficients(rng: &mut ChaCha8Rng, model: &GridModel, h: &Hypergraph, cap: &Rational) -> KernelSpec {
    let n = h.n();
    let ids: Vec<String> = h.vertices().iter().map(|v| v.id.clone()).collect();
    let mut entries = Vec::new();
    for k in ((-model.fine + 1)..=model.top).rev() {
        for q in model.cubes_at(k) {
            if !rng.gen_bool(0.3) {
                continue;
            }
            let mut sel: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
            if sel.is_empty() {
                sel.push(*(0..n).collect::<Vec<_>>().choose(rng).expect("vertices"));
            }
            entries.push(CoefficientEntry {
                selection: sel.iter().map(|&v| ids[v].clone()).collect(),
                cube: q.to_string(),
                value: format_rational(&bounded_value(rng, cap)),
            });
        }
    }
    let mut coarse = Vec::new();
    for b in 0..(1usize << n) {
        if rng.gen_bool(0.25) {
            let pos: Vec<String> = (0..n).map(|j| if (b >> j) & 1 == 1 { "0" } else { "-1" }.to_string()).collect();
            coarse.push(CoarseEntry {
                cube: format!("{}:({})", model.top, pos.join(",")),
                value: format_rational(&bounded_value(rng, cap)),
            });
        }
    }
    KernelSpec::Coefficients { entries, coarse }
}
