//! Scenario files: JSON with an explicit schema version.
//!
//! Rationals are strings (`"3/4"`, `"-2"`, `"0.125"`). Dense cell arrays are row-major
//! with axis 0 fastest: cell `(c_0, .., c_{r-1})` sits at `sum c_i * cpa^i`, where axis
//! `i` is class `i` and `cpa = 2^(top + fine + 1)`. Kernel cells use the same rule over
//! all `n` vertices, class 1 vertex 1 first.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, GridModel};
use crate::forms::{Engine, FunctionTuple};
use crate::hypergraph::{Edge, Hypergraph, Selection};
use crate::kernel::{synthesize, twisted_kernel, DiagonalHaarCoefficients, PerfectDyadicKernel};
use crate::numerics::{parse_rational, Rational};
use crate::stepfn::{Exponent, StepFunction};
use crate::weights::{ExponentTuple, WeightTuple};

use super::WorkbenchError;

pub const SCHEMA_VERSION: u32 = 1;

/// Key in `functions` and `weights` used for edges without an entry of their own.
pub const DEFAULT_KEY: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Validate,
    Decompose,
    Identities,
    T1,
    Sparse,
    Weighted,
    Bench,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Validate,
        Suite::Decompose,
        Suite::Identities,
        Suite::T1,
        Suite::Sparse,
        Suite::Weighted,
        Suite::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Validate => "validate",
            Suite::Decompose => "decompose",
            Suite::Identities => "identities",
            Suite::T1 => "t1",
            Suite::Sparse => "sparse",
            Suite::Weighted => "weighted",
            Suite::Bench => "bench",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = WorkbenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| WorkbenchError::Usage(format!("unknown suite {s:?}")))
    }
}

/// Parses `"a,b,c"`.
pub fn parse_suites(s: &str) -> Result<Vec<Suite>, WorkbenchError> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Naive,
    #[default]
    Factorized,
    Both,
}

impl EngineChoice {
    pub fn primary(self) -> Engine {
        match self {
            EngineChoice::Naive => Engine::Naive,
            _ => Engine::Factorized,
        }
    }
}

impl FromStr for EngineChoice {
    type Err = WorkbenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "naive" => Ok(EngineChoice::Naive),
            "factorized" => Ok(EngineChoice::Factorized),
            "both" => Ok(EngineChoice::Both),
            _ => Err(WorkbenchError::Usage(format!("unknown engine {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub r: usize,
    pub top: i32,
    pub fine: i32,
}

/// Either `{"complete": [n_1, ..]}` or explicit classes and edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypergraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<Vec<String>>>,
    /// Function keys per edge; defaults to `"u,v,.."`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellValue {
    pub cell: Vec<usize>,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    /// Selected vertex ids.
    pub selection: Vec<String>,
    /// Diagonal cube `"k:(l_1,..,l_r)"`.
    pub cube: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseEntry {
    /// Top-scale n-cube `"top:(l_1,..,l_n)"` with every `l_j` in `{-1, 0}`.
    pub cube: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Twisted,
    Zero,
    Cells {
        cells: Vec<CellValue>,
    },
    Coefficients {
        entries: Vec<CoefficientEntry>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        coarse: Vec<CoarseEntry>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionSpec {
    Dense { values: Vec<String> },
    Sparse { cells: Vec<CellValue> },
    Constant { value: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub hypergraph: HypergraphSpec,
    pub kernel: KernelSpec,
    pub functions: BTreeMap<String, FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, FunctionSpec>>,
    /// Per edge label; omitted means `p_e = d_e sum_f 1/d_f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<BTreeMap<String, Exponent>>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineChoice>,
}

fn default_suites() -> Vec<Suite> {
    vec![Suite::Validate, Suite::Decompose, Suite::Identities]
}

/// A scenario with every object built and dimension-checked.
#[derive(Clone, Debug)]
pub struct Instance {
    pub model: GridModel,
    pub hypergraph: Hypergraph,
    pub kernel: PerfectDyadicKernel,
    /// Present when the kernel was given by coefficients.
    pub coefficients: Option<DiagonalHaarCoefficients>,
    pub functions: FunctionTuple,
    pub weights: Option<WeightTuple>,
    pub exponents: Option<ExponentTuple>,
}

impl Scenario {
    /// Parses JSON, reporting the field path and line/column of schema violations.
    pub fn from_json(text: &str) -> Result<Self, WorkbenchError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let full = inner.to_string();
            let suffix = format!(" at line {} column {}", inner.line(), inner.column());
            WorkbenchError::Schema {
                line: inner.line(),
                column: inner.column(),
                path,
                message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
            }
        })?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(WorkbenchError::Version(s.schema_version));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn grid_model(&self) -> Result<GridModel, WorkbenchError> {
        GridModel::new(self.model.r, self.model.top, self.model.fine)
            .map_err(|e| WorkbenchError::Dimension(format!("model: {e}")))
    }

    pub fn build_hypergraph(&self) -> Result<Hypergraph, WorkbenchError> {
        let hs = &self.hypergraph;
        let h = match (&hs.complete, &hs.classes) {
            (Some(sizes), None) => {
                if hs.edges.is_some() {
                    return Err(dim("hypergraph: `complete` excludes `edges`"));
                }
                Hypergraph::complete(sizes)?
            }
            (None, Some(classes)) => Hypergraph::new(classes.clone(), hs.edges.clone().unwrap_or_default())?,
            _ => return Err(dim("hypergraph: give exactly one of `complete` or `classes`")),
        };
        let h = match &hs.labels {
            None => h,
            Some(labels) => {
                if labels.len() != h.edges().len() {
                    return Err(dim(format!(
                        "hypergraph: {} labels for {} edges",
                        labels.len(),
                        h.edges().len()
                    )));
                }
                // Vertices are already class-sorted, so indices survive the rebuild.
                let edges = h
                    .edges()
                    .iter()
                    .zip(labels)
                    .map(|(e, l)| Edge {
                        vertices: e.vertices.clone(),
                        label: l.clone(),
                    })
                    .collect();
                Hypergraph::from_parts(h.r(), h.vertices().to_vec(), edges)?
            }
        };
        if h.r() != self.model.r {
            return Err(dim(format!(
                "hypergraph has {} classes but model.r = {}",
                h.r(),
                self.model.r
            )));
        }
        Ok(h)
    }

    /// Builds and cross-checks everything the suites need.
    pub fn build(&self) -> Result<Instance, WorkbenchError> {
        let model = self.grid_model()?;
        let h = self.build_hypergraph()?;
        let (kernel, coefficients) = build_kernel(&self.kernel, model, &h)?;
        let functions = build_tuple(&self.functions, model, &h, "functions")?;
        let weights = match &self.weights {
            None => None,
            Some(ws) => {
                let t = build_tuple(ws, model, &h, "weights")?;
                let per_edge = t.for_edges(&h)?.into_iter().cloned().collect();
                Some(WeightTuple::new(per_edge)?)
            }
        };
        let exponents = match &self.exponents {
            None => None,
            Some(map) => {
                let mut p = Vec::with_capacity(h.edges().len());
                for e in h.edges() {
                    let v = map
                        .get(&e.label)
                        .or_else(|| map.get(DEFAULT_KEY))
                        .ok_or_else(|| dim(format!("exponents: no entry for edge {:?}", e.label)))?;
                    p.push(v.clone());
                }
                for k in map.keys() {
                    if k != DEFAULT_KEY && !h.edges().iter().any(|e| &e.label == k) {
                        return Err(dim(format!("exponents: unknown edge label {k:?}")));
                    }
                }
                Some(ExponentTuple::new(&h, p)?)
            }
        };
        Ok(Instance {
            model,
            hypergraph: h,
            kernel,
            coefficients,
            functions,
            weights,
            exponents,
        })
    }

    pub fn width_rational(&self) -> Result<Option<Rational>, WorkbenchError> {
        self.width
            .as_deref()
            .map(|w| parse_positive(w, "width"))
            .transpose()
    }
}

pub(crate) fn parse_positive(s: &str, field: &str) -> Result<Rational, WorkbenchError> {
    let v = value(s, field)?;
    if v <= Rational::from_integer(0.into()) {
        return Err(dim(format!("{field}: {s:?} must be positive")));
    }
    Ok(v)
}

fn dim(msg: impl Into<String>) -> WorkbenchError {
    WorkbenchError::Dimension(msg.into())
}

fn value(s: &str, field: &str) -> Result<Rational, WorkbenchError> {
    parse_rational(s).map_err(|_| dim(format!("{field}: {s:?} is not a rational")))
}

fn cell_list(cells: &[CellValue], field: &str) -> Result<Vec<(Vec<usize>, Rational)>, WorkbenchError> {
    cells
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((c.cell.clone(), value(&c.value, &format!("{field}[{i}].value"))?)))
        .collect()
}

fn cube(s: &str, field: &str) -> Result<DyadicCube, WorkbenchError> {
    s.parse::<DyadicCube>()
        .map_err(|_| dim(format!("{field}: {s:?} is not a cube \"k:(l1,..)\"")))
}

fn build_kernel(
    spec: &KernelSpec,
    model: GridModel,
    h: &Hypergraph,
) -> Result<(PerfectDyadicKernel, Option<DiagonalHaarCoefficients>), WorkbenchError> {
    match spec {
        KernelSpec::Twisted => Ok((twisted_kernel(model, h)?, None)),
        KernelSpec::Zero => Ok((PerfectDyadicKernel::zero(model, h)?, None)),
        KernelSpec::Cells { cells } => {
            let list = cell_list(cells, "kernel.cells")?;
            let cpa = model.cells_per_axis();
            if let Some((i, (c, _))) = list
                .iter()
                .enumerate()
                .find(|(_, (c, _))| c.len() != h.n() || c.iter().any(|&x| x >= cpa))
            {
                return Err(dim(format!(
                    "kernel.cells[{i}]: cell {c:?} needs {} coordinates below {cpa}",
                    h.n()
                )));
            }
            Ok((PerfectDyadicKernel::from_cell_list(model, h, &list)?, None))
        }
        KernelSpec::Coefficients { entries, coarse } => {
            let mut c = DiagonalHaarCoefficients::empty(model, crate::kernel::arrangement(h));
            for (i, e) in entries.iter().enumerate() {
                let field = format!("kernel.entries[{i}]");
                let ids: Vec<&str> = e.selection.iter().map(String::as_str).collect();
                let s = Selection::from_ids(h, &ids)?;
                let q = cube(&e.cube, &field)?;
                let v = value(&e.value, &field)?;
                let prior = c.get(s, &q);
                c.set(s, q, prior + v)
                    .map_err(|err| dim(format!("{field}: {err}")))?;
            }
            let off_ok = |q: &DyadicCube| q.k == model.top && q.pos.iter().all(|&l| l == -1 || l == 0);
            for (i, e) in coarse.iter().enumerate() {
                let field = format!("kernel.coarse[{i}]");
                let q = cube(&e.cube, &field)?;
                if q.dim() != h.n() || !off_ok(&q) {
                    return Err(dim(format!(
                        "{field}: {} is not a top-scale {}-cube",
                        e.cube,
                        h.n()
                    )));
                }
                let v = value(&e.value, &field)?;
                *c.coarse.entry(q).or_insert_with(|| Rational::from_integer(0.into())) += v;
            }
            let k = synthesize(&c)?;
            Ok((k, Some(c)))
        }
    }
}

fn build_function(spec: &FunctionSpec, model: GridModel, field: &str) -> Result<StepFunction, WorkbenchError> {
    match spec {
        FunctionSpec::Constant { value: v } => Ok(StepFunction::constant(model, value(v, field)?)),
        FunctionSpec::Dense { values } => {
            if values.len() != model.num_cells() {
                return Err(dim(format!(
                    "{field}: {} values for {} cells",
                    values.len(),
                    model.num_cells()
                )));
            }
            let vals = values
                .iter()
                .enumerate()
                .map(|(i, v)| value(v, &format!("{field}.values[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(StepFunction::new(model, vals)?)
        }
        FunctionSpec::Sparse { cells } => {
            let list = cell_list(cells, field)?;
            let cpa = model.cells_per_axis();
            if let Some((i, (c, _))) = list
                .iter()
                .enumerate()
                .find(|(_, (c, _))| c.len() != model.r || c.iter().any(|&x| x >= cpa))
            {
                return Err(dim(format!(
                    "{field}.cells[{i}]: cell {c:?} needs {} coordinates below {cpa}",
                    model.r
                )));
            }
            Ok(StepFunction::from_sparse(model, &list)?)
        }
    }
}

fn build_tuple(
    specs: &BTreeMap<String, FunctionSpec>,
    model: GridModel,
    h: &Hypergraph,
    field: &str,
) -> Result<FunctionTuple, WorkbenchError> {
    let labels = h.edge_labels();
    for k in specs.keys() {
        if k != DEFAULT_KEY && !labels.contains(k) {
            return Err(dim(format!("{field}: unknown edge label {k:?}")));
        }
    }
    let mut t = FunctionTuple::default();
    for l in labels {
        let spec = specs
            .get(&l)
            .or_else(|| specs.get(DEFAULT_KEY))
            .ok_or_else(|| dim(format!("{field}: no entry for edge {l:?} and no \"*\" default")))?;
        let f = build_function(spec, model, &format!("{field}[{l:?}]"))?;
        t.insert(l, f);
    }
    Ok(t)
}
