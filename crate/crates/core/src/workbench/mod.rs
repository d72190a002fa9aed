//! Scenario ingestion, seeded instance generation, suite orchestration, and reports.

mod generate;
mod report;
mod scenario;
mod suites;

use thiserror::Error;

pub use generate::{generate, GenerateOptions, Profile};
pub use report::{Certificate, Constant, Report, Runtime, SuiteRecord, Window};
pub use scenario::{
    parse_suites, CellValue, CoarseEntry, CoefficientEntry, EngineChoice, FunctionSpec, HypergraphSpec, Instance,
    KernelSpec, ModelSpec, Scenario, Suite, DEFAULT_KEY, SCHEMA_VERSION,
};

use crate::numerics::{pow2, Rational};

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("schema violation at {path} (line {line}, column {column}): {message}")]
    Schema {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Version(u32),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Hypergraph(#[from] crate::hypergraph::HypergraphError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error(transparent)]
    Step(#[from] crate::stepfn::StepError),
    #[error(transparent)]
    Form(#[from] crate::forms::FormError),
    #[error(transparent)]
    Sparse(#[from] crate::sparse::SparseError),
    #[error(transparent)]
    Weight(#[from] crate::weights::WeightError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Dyadic(#[from] crate::dyadic::DyadicError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Command-line overrides of scenario fields.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub suites: Option<Vec<Suite>>,
    pub seed: Option<u64>,
    pub width: Option<Rational>,
    pub engine: Option<EngineChoice>,
}

/// Enclosure width used when neither the scenario nor the caller sets one.
pub fn default_width() -> Rational {
    pow2(-24)
}

/// Builds the scenario and runs its suites in order.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Report, WorkbenchError> {
    let inst = scenario.build()?;
    let width = match &opts.width {
        Some(w) => w.clone(),
        None => scenario.width_rational()?.unwrap_or_else(default_width),
    };
    let seed = opts.seed.unwrap_or(scenario.seed);
    let engine = opts.engine.or(scenario.engine).unwrap_or_default();
    let suites = opts.suites.clone().unwrap_or_else(|| scenario.suites.clone());
    let mut report = Report::new(scenario.name.clone(), &inst, seed, &width, engine);
    for s in suites {
        suites::run_suite(&inst, s, seed, &width, engine, &mut report);
    }
    Ok(report)
}

/// Builds the scenario and reports only the `validate` suite.
pub fn validate(scenario: &Scenario) -> Result<Report, WorkbenchError> {
    run(
        scenario,
        &RunOptions {
            suites: Some(vec![Suite::Validate]),
            ..RunOptions::default()
        },
    )
}
