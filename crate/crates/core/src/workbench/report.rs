use serde::Serialize;

use crate::numerics::{format_rational, Enclosure, NumericsError, Rational, Real, Root};

use super::scenario::{EngineChoice, Instance, Suite, SCHEMA_VERSION};
use super::WorkbenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub r: usize,
    pub top: i32,
    pub fine: i32,
}

/// Details of one suite run; `skipped` lists checks whose preconditions failed.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteRecord {
    pub suite: Suite,
    pub details: serde_json::Value,
    pub skipped: Vec<String>,
}

/// An exact check; `witness` holds the first counterexample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub failures: usize,
    pub witness: Option<String>,
}

/// A measured constant with its window and enclosure width.
#[derive(Clone, Debug, Serialize)]
pub struct Constant {
    pub suite: Suite,
    pub name: String,
    /// Exact rendering when the value is a rational or a rational root.
    pub exact: Option<String>,
    pub lo: String,
    pub hi: String,
    pub approx: f64,
    pub top: i32,
    pub fine: i32,
    pub width: String,
}

/// Wall-clock timings; present only for the `bench` suite.
#[derive(Clone, Debug, Serialize)]
pub struct Runtime {
    pub suite: Suite,
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub name: Option<String>,
    pub window: Window,
    pub seed: u64,
    pub width: String,
    pub engine: EngineChoice,
    pub suites: Vec<SuiteRecord>,
    pub certificates: Vec<Certificate>,
    pub constants: Vec<Constant>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runtimes: Vec<Runtime>,
}

#[derive(Serialize)]
struct FailureSummary<'a> {
    passed: bool,
    failed: Vec<&'a Certificate>,
}

impl Report {
    pub(crate) fn new(name: Option<String>, inst: &Instance, seed: u64, width: &Rational, engine: EngineChoice) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            name,
            window: Window {
                r: inst.model.r,
                top: inst.model.top,
                fine: inst.model.fine,
            },
            seed,
            width: format_rational(width),
            engine,
            suites: Vec::new(),
            certificates: Vec::new(),
            constants: Vec::new(),
            runtimes: Vec::new(),
        }
    }

    /// `true` when every certificate passed.
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Certificate> {
        self.certificates.iter().filter(|c| !c.passed).collect()
    }

    pub fn certificate(&self, suite: Suite, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.suite == suite && c.name == name)
    }

    pub fn constant(&self, suite: Suite, name: &str) -> Option<&Constant> {
        self.constants.iter().find(|c| c.suite == suite && c.name == name)
    }

    pub fn record(&self, suite: Suite) -> Option<&SuiteRecord> {
        self.suites.iter().find(|r| r.suite == suite)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Machine-readable list of failed certificates.
    pub fn failure_summary(&self) -> String {
        serde_json::to_string_pretty(&FailureSummary {
            passed: self.passed(),
            failed: self.failures(),
        })
        .expect("summary serializes")
    }

    /// Measured constants as CSV.
    pub fn constants_csv(&self) -> Result<String, WorkbenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.constants {
            w.serialize(c)?;
        }
        let bytes = w.into_inner().map_err(|e| WorkbenchError::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf8"))
    }

    /// Certificates as CSV.
    pub fn certificates_csv(&self) -> Result<String, WorkbenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.certificates {
            w.serialize(c)?;
        }
        let bytes = w.into_inner().map_err(|e| WorkbenchError::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf8"))
    }

    pub(crate) fn constant_rational(&mut self, suite: Suite, name: impl Into<String>, x: &Rational, width: &Rational) {
        self.constants.push(Constant {
            suite,
            name: name.into(),
            exact: Some(format_rational(x)),
            lo: format_rational(x),
            hi: format_rational(x),
            approx: crate::numerics::to_f64(x),
            top: self.window.top,
            fine: self.window.fine,
            width: format_rational(width),
        });
    }

    pub(crate) fn constant_root(
        &mut self,
        suite: Suite,
        name: impl Into<String>,
        x: &Root,
        width: &Rational,
    ) -> Result<(), NumericsError> {
        if let Some(q) = x.as_rational() {
            self.constant_rational(suite, name, &q, width);
            return Ok(());
        }
        let e = Real::Root(x.clone()).enclose(width)?;
        self.constant_enclosure(suite, name, Some(x.to_string()), &e, width);
        Ok(())
    }

    pub(crate) fn constant_enclosure(
        &mut self,
        suite: Suite,
        name: impl Into<String>,
        exact: Option<String>,
        e: &Enclosure,
        width: &Rational,
    ) {
        let exact = exact.or_else(|| (e.lo == e.hi).then(|| format_rational(&e.lo)));
        self.constants.push(Constant {
            suite,
            name: name.into(),
            exact,
            lo: format_rational(&e.lo),
            hi: format_rational(&e.hi),
            approx: crate::numerics::to_f64(&e.midpoint()),
            top: self.window.top,
            fine: self.window.fine,
            width: format_rational(width),
        });
    }
}
