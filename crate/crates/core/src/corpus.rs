//! Parametric equation templates, the sampling unit of the synthetic corpus.
//!
//! Templates can also be read from a text file, one per line:
//!
//! ```text
//! # id; d; canonical form; parameter ranges; variable ranges
//! power1; 1; ( w1 * ( x1 ^ w2 ) ); [-2,2] [0.3,1.2]; [0.1,10]
//! ```
//!
//! Ranges are whitespace-separated `[lo,hi]` intervals in index order
//! (`w1, w2, ...` and `x1, x2, ...`). Blank lines and `#` comments are
//! skipped.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_text, Expr, TextParseError};

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.lo..=self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

pub const DEFAULT_PARAM_RANGE: Interval = Interval::new(-2.0, 2.0);
pub const EXPONENT_RANGE: Interval = Interval::new(0.3, 1.2);
pub const SLOPE_RANGE: Interval = Interval::new(0.5, 5.0);
pub const DEFAULT_VAR_RANGE: Interval = Interval::new(-1.0, 1.0);
pub const POSITIVE_VAR_RANGE: Interval = Interval::new(0.1, 10.0);
pub const PROBABILITY_RANGE: Interval = Interval::new(0.0, 1.0);
pub const PAYOFF_RANGE: Interval = Interval::new(0.0, 10.0);

/// Grid points per variable used by [`EquationTemplate::check_domain`].
const DOMAIN_GRID: usize = 5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("template `{id}`: {source}")]
    Syntax {
        id: String,
        #[source]
        source: TextParseError,
    },
    #[error("template `{id}` uses variables {found:?}, expected x1..x{d}")]
    Variables { id: String, d: usize, found: Vec<u8> },
    #[error("template `{id}` uses parameters {found:?}, expected a contiguous w1..wk with one range each ({ranges} given)")]
    Parameters {
        id: String,
        found: Vec<u8>,
        ranges: usize,
    },
    #[error("template `{id}`: {what} range {interval} is empty or non-finite")]
    BadRange {
        id: String,
        what: String,
        interval: Interval,
    },
    #[error("template `{id}` is non-finite at x={vars:?}, w={params:?}")]
    Domain {
        id: String,
        vars: Vec<f64>,
        params: Vec<f64>,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate template id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationTemplate {
    pub id: String,
    pub expr: Expr,
    pub n_vars: usize,
    pub param_ranges: Vec<Interval>,
    pub var_ranges: Vec<Interval>,
}

impl EquationTemplate {
    /// Builds a template and checks its structural invariants.
    pub fn new(
        id: impl Into<String>,
        expr: Expr,
        param_ranges: Vec<Interval>,
        var_ranges: Vec<Interval>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let n_vars = var_ranges.len();
        let fs = expr.free_symbols();
        let expected_vars: Vec<u8> = (1..=n_vars as u8).collect();
        if n_vars == 0 || fs.variables != expected_vars {
            return Err(CorpusError::Variables {
                id,
                d: n_vars,
                found: fs.variables,
            });
        }
        let expected_params: Vec<u8> = (1..=param_ranges.len() as u8).collect();
        if fs.parameters != expected_params {
            return Err(CorpusError::Parameters {
                id,
                found: fs.parameters,
                ranges: param_ranges.len(),
            });
        }
        let labelled = param_ranges
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("w{}", i + 1), r))
            .chain(
                var_ranges
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (format!("x{}", i + 1), r)),
            );
        for (what, r) in labelled {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
                return Err(CorpusError::BadRange {
                    id,
                    what,
                    interval: *r,
                });
            }
        }
        Ok(EquationTemplate {
            id,
            expr,
            n_vars,
            param_ranges,
            var_ranges,
        })
    }

    /// Builds a template from its canonical text form.
    pub fn from_text(
        id: &str,
        text: &str,
        param_ranges: Vec<Interval>,
        var_ranges: Vec<Interval>,
    ) -> Result<Self, CorpusError> {
        let expr = parse_text(text).map_err(|source| CorpusError::Syntax {
            id: id.to_string(),
            source,
        })?;
        Self::new(id, expr, param_ranges, var_ranges)
    }

    pub fn n_params(&self) -> usize {
        self.param_ranges.len()
    }

    /// Draws every parameter uniformly from its range.
    pub fn sample_parameters<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.param_ranges.iter().map(|r| r.sample(rng)).collect()
    }

    pub fn sample_variables<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.var_ranges.iter().map(|r| r.sample(rng)).collect()
    }

    /// Checks that the expression is finite on a regular grid over the
    /// variable ranges with every parameter at its range midpoint.
    pub fn check_domain(&self) -> Result<(), CorpusError> {
        let params: Vec<f64> = self.param_ranges.iter().map(Interval::midpoint).collect();
        let d = self.n_vars;
        let total = DOMAIN_GRID.pow(d as u32);
        let mut vars = vec![0.0; d];
        for cell in 0..total {
            let mut rest = cell;
            for (j, v) in vars.iter_mut().enumerate() {
                let k = rest % DOMAIN_GRID;
                rest /= DOMAIN_GRID;
                let r = self.var_ranges[j];
                *v = r.lo + (r.hi - r.lo) * k as f64 / (DOMAIN_GRID - 1) as f64;
            }
            let y = self
                .expr
                .evaluate(&vars, &params)
                .expect("template invariants bind every symbol");
            if !y.is_finite() {
                return Err(CorpusError::Domain {
                    id: self.id.clone(),
                    vars,
                    params,
                });
            }
        }
        Ok(())
    }

    /// One line of the template file format.
    pub fn to_line(&self) -> String {
        let join = |rs: &[Interval]| {
            rs.iter()
                .map(Interval::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "{}; {}; {}; {}; {}",
            self.id,
            self.n_vars,
            self.expr.canonical(),
            join(&self.param_ranges),
            join(&self.var_ranges)
        )
    }
}

/// Parses a template file. Every template is checked, domain included.
pub fn parse_templates(text: &str) -> Result<Vec<EquationTemplate>, CorpusError> {
    let mut out: Vec<EquationTemplate> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(';').map(str::trim).collect();
        let [id, d, form, params, vars] = fields[..] else {
            return Err(CorpusError::Format {
                line: line_no,
                message: format!("expected 5 `;`-separated fields, found {}", fields.len()),
            });
        };
        let d: usize = d.parse().map_err(|_| CorpusError::Format {
            line: line_no,
            message: format!("bad variable count `{d}`"),
        })?;
        let param_ranges = parse_intervals(params, line_no)?;
        let var_ranges = parse_intervals(vars, line_no)?;
        if var_ranges.len() != d {
            return Err(CorpusError::Format {
                line: line_no,
                message: format!("{} variable ranges for d={d}", var_ranges.len()),
            });
        }
        if out.iter().any(|t| t.id == id) {
            return Err(CorpusError::DuplicateId(id.to_string()));
        }
        let t = EquationTemplate::from_text(id, form, param_ranges, var_ranges)?;
        t.check_domain()?;
        out.push(t);
    }
    Ok(out)
}

pub fn load_templates(path: &Path) -> Result<Vec<EquationTemplate>, CorpusError> {
    parse_templates(&std::fs::read_to_string(path)?)
}

pub fn write_templates(templates: &[EquationTemplate]) -> String {
    let mut s = String::from("# id; d; canonical form; parameter ranges; variable ranges\n");
    for t in templates {
        s.push_str(&t.to_line());
        s.push('\n');
    }
    s
}

fn parse_intervals(field: &str, line: usize) -> Result<Vec<Interval>, CorpusError> {
    field
        .split_whitespace()
        .map(|tok| {
            let bad = || CorpusError::Format {
                line,
                message: format!("bad interval `{tok}`"),
            };
            let inner = tok
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(bad)?;
            let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
            let lo = lo.trim().parse().map_err(|_| bad())?;
            let hi = hi.trim().parse().map_err(|_| bad())?;
            Ok(Interval::new(lo, hi))
        })
        .collect()
}

/// `(id, canonical form, parameter ranges, variable ranges)`.
type Entry = (
    &'static str,
    &'static str,
    &'static [Interval],
    &'static [Interval],
);

const P: Interval = DEFAULT_PARAM_RANGE;
const EXP: Interval = EXPONENT_RANGE;
const SLOPE: Interval = SLOPE_RANGE;
const X: Interval = DEFAULT_VAR_RANGE;
const POS: Interval = POSITIVE_VAR_RANGE;
const PROB: Interval = PROBABILITY_RANGE;
const PAY: Interval = PAYOFF_RANGE;

const BUILTIN: &[Entry] = &[
    ("linear1", "( ( w1 * x1 ) + w2 )", &[P, P], &[X]),
    ("linear2", "( ( ( w1 * x1 ) + ( w2 * x2 ) ) + w3 )", &[P, P, P], &[X, X]),
    (
        "linear3",
        "( ( ( ( w1 * x1 ) + ( w2 * x2 ) ) + ( w3 * x3 ) ) + w4 )",
        &[P, P, P, P],
        &[X, X, X],
    ),
    ("quadratic1", "( ( ( w1 * ( x1 ^ 2 ) ) + ( w2 * x1 ) ) + w3 )", &[P, P, P], &[X]),
    (
        "bilinear2",
        "( ( w1 * ( x1 * x2 ) ) + ( ( w2 * x1 ) + ( w3 * x2 ) ) )",
        &[P, P, P],
        &[X, X],
    ),
    (
        "quadratic_form2",
        "( ( ( w1 * x1 ) + ( w2 * x2 ) ) * ( ( w3 * x1 ) + ( w4 * x2 ) ) )",
        &[P, P, P, P],
        &[X, X],
    ),
    ("product3", "( w1 * ( ( x1 * x2 ) * x3 ) )", &[P], &[X, X, X]),
    (
        "min_linear1",
        "min ( ( ( w1 * x1 ) + w2 ) , ( ( w3 * x1 ) + w4 ) )",
        &[P, P, P, P],
        &[X],
    ),
    ("max_linear2", "max ( ( w1 * x1 ) , ( w2 * x2 ) )", &[P, P], &[X, X]),
    ("argmin_linear2", "argmin ( ( w1 * x1 ) , ( w2 * x2 ) )", &[P, P], &[X, X]),
    (
        "argmax_linear1",
        "argmax ( ( ( w1 * x1 ) + w2 ) , ( ( w3 * x1 ) + w4 ) )",
        &[P, P, P, P],
        &[X],
    ),
    ("exp1", "( w1 * exp ( ( w2 * x1 ) ) )", &[P, P], &[X]),
    ("gaussian1", "( w1 * exp ( ( - ( w2 * ( x1 ^ 2 ) ) ) ) )", &[P, P], &[X]),
    ("log1", "( ( w1 * log ( x1 ) ) + w2 )", &[P, P], &[POS]),
    ("log_ratio2", "( w1 * log ( ( x1 / x2 ) ) )", &[P], &[POS, POS]),
    ("sin1", "( w1 * sin ( ( ( w2 * x1 ) + w3 ) ) )", &[P, P, P], &[X]),
    ("cos1", "( w1 * cos ( ( w2 * x1 ) ) )", &[P, P], &[X]),
    ("trig2", "( ( w1 * sin ( x1 ) ) + ( w2 * cos ( x2 ) ) )", &[P, P], &[X, X]),
    (
        "sigmoid1",
        "( w1 * sigmoid ( ( ( w2 * x1 ) + w3 ) ) )",
        &[P, SLOPE, P],
        &[X],
    ),
    ("power1", "( w1 * ( x1 ^ w2 ) )", &[P, EXP], &[POS]),
    ("rational1", "( w1 / ( 1 + ( x1 ^ 2 ) ) )", &[P], &[X]),
    (
        "subjective_value",
        "( ( w1 * x1 ) * ( x2 ^ w2 ) )",
        &[P, EXP],
        &[PROB, PAY],
    ),
    (
        "choice_argmax",
        "argmax ( ( x1 * ( x2 ^ w1 ) ) , ( x3 * ( x4 ^ w1 ) ) )",
        &[EXP],
        &[PROB, PAY, PROB, PAY],
    ),
    (
        "choice_sigmoid",
        "( sigmoid ( ( w2 * ( ( x1 * ( x2 ^ w1 ) ) - ( x3 * ( x4 ^ w1 ) ) ) ) ) + 1 )",
        &[EXP, SLOPE],
        &[PROB, PAY, PROB, PAY],
    ),
];

/// Id of the subjective-value template `w1·x1·x2^w2`.
pub const SUBJECTIVE_VALUE: &str = "subjective_value";
/// Id of the hard-choice template `argmax(x1·x2^w1, x3·x4^w1)`.
pub const CHOICE_ARGMAX: &str = "choice_argmax";
/// Id of the soft-choice template `sigmoid(w2·(x1·x2^w1 − x3·x4^w1)) + 1`.
pub const CHOICE_SIGMOID: &str = "choice_sigmoid";

fn build(entries: &[Entry]) -> Vec<EquationTemplate> {
    entries
        .iter()
        .map(|(id, form, params, vars)| {
            EquationTemplate::from_text(id, form, params.to_vec(), vars.to_vec())
                .unwrap_or_else(|e| panic!("built-in template is invalid: {e}"))
        })
        .collect()
}

/// The built-in corpus: linear and polynomial forms, min/max/argmin/argmax,
/// transcendental compositions and the gamble-choice family.
pub fn builtin_templates() -> Vec<EquationTemplate> {
    build(BUILTIN)
}

pub fn find<'a>(templates: &'a [EquationTemplate], id: &str) -> Option<&'a EquationTemplate> {
    templates.iter().find(|t| t.id == id)
}
