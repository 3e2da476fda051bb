//! Training-stimulus synthesis: table sampling, noise injection, input and
//! target encoding, dataset assembly and persistence.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EquationTemplate;
use crate::expr::{tokenize, Token, TokenSeq, TokenizeError, Vocab};
use crate::rng;

/// Length of the network input: one header slot plus the value budget.
pub const INPUT_DIM: usize = 201;
/// Maximum number of table values the input can carry.
pub const VALUE_BUDGET: usize = INPUT_DIM - 1;
pub const NOISE_LEVELS: usize = 10;
/// Row draws rejected for a non-finite dependent value before giving up.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("table of {n} rows x {cols} columns exceeds the {VALUE_BUDGET}-value budget")]
    TooManyValues { n: usize, cols: usize },
    #[error("a table needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("template `{id}`: {MAX_REJECTIONS} row draws gave non-finite values")]
    DomainExhausted { id: String },
    #[error("table row {row} has {found} values, expected {expected}")]
    RowWidth {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("table contains a non-finite value at row {0}")]
    NonFinite(usize),
    #[error("target sequence is not EOS-terminated")]
    MissingEos,
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("{pairs} pairs cannot cover {templates} templates x {NOISE_LEVELS} noise levels")]
    TooFewPairs { pairs: usize, templates: usize },
    #[error("noise schedule must start at 0, increase strictly and stay <= 0.25: {0:?}")]
    BadSchedule(Vec<f64>),
    #[error("csv: {0}")]
    Csv(String),
    #[error("dataset line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for DatagenError {
    fn from(e: csv::Error) -> Self {
        DatagenError::Csv(e.to_string())
    }
}

/// `n` observations of `d` independent variables and one dependent value.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl DataTable {
    /// `x` holds the rows back to back (`n * d` values).
    ///
    /// The value budget is not enforced here so that long observation
    /// tables can still be fitted; see [`DataTable::within_budget`].
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self, DatagenError> {
        let n = y.len();
        if n < 2 {
            return Err(DatagenError::TooFewRows(n));
        }
        if d == 0 || x.len() != n * d {
            return Err(DatagenError::RowWidth {
                row: 0,
                found: x.len() / n.max(1),
                expected: d,
            });
        }
        if let Some(i) = (0..n).find(|&i| {
            !y[i].is_finite() || x[i * d..(i + 1) * d].iter().any(|v| !v.is_finite())
        }) {
            return Err(DatagenError::NonFinite(i));
        }
        Ok(DataTable { d, x, y })
    }

    pub fn from_rows(d: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self, DatagenError> {
        let mut x = Vec::with_capacity(rows.len() * d);
        for (i, (xs, _)) in rows.iter().enumerate() {
            if xs.len() != d {
                return Err(DatagenError::RowWidth {
                    row: i,
                    found: xs.len(),
                    expected: d,
                });
            }
            x.extend_from_slice(xs);
        }
        Self::new(d, x, rows.iter().map(|r| r.1).collect())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Independent column `j` (0-based), top to bottom.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n()).map(move |i| self.x[i * self.d + j])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.n()).map(move |i| (self.row(i), self.y[i]))
    }

    /// Whether `n * (d + 1)` fits the network's value budget.
    pub fn within_budget(&self) -> bool {
        self.n() * (self.d + 1) <= VALUE_BUDGET
    }

    /// The first `k` rows (at least 2).
    pub fn head(&self, k: usize) -> DataTable {
        let k = k.clamp(2, self.n());
        DataTable {
            d: self.d,
            x: self.x[..k * self.d].to_vec(),
            y: self.y[..k].to_vec(),
        }
    }

    /// The longest prefix that fits the value budget.
    pub fn budget_head(&self) -> DataTable {
        self.head(VALUE_BUDGET / (self.d + 1))
    }

    /// Consecutive budget-sized blocks of rows. A trailing block is kept if
    /// it has at least 2 rows.
    pub fn budget_windows(&self) -> Vec<DataTable> {
        let k = VALUE_BUDGET / (self.d + 1);
        (0..self.n())
            .step_by(k)
            .map(|start| (start, (start + k).min(self.n())))
            .filter(|(a, b)| b - a >= 2)
            .map(|(a, b)| DataTable {
                d: self.d,
                x: self.x[a * self.d..b * self.d].to_vec(),
                y: self.y[a..b].to_vec(),
            })
            .collect()
    }

    /// Same observations with a new dependent column.
    pub fn with_y(&self, y: Vec<f64>) -> Result<DataTable, DatagenError> {
        DataTable::new(self.d, self.x.clone(), y)
    }

    /// Reads a CSV table whose header is exactly `x1,...,xd,y`.
    pub fn from_csv(text: &str) -> Result<Self, DatagenError> {
        let (header, table) = Self::from_csv_any_header(text)?;
        let d = header.len() - 1;
        let expected: Vec<String> = (1..=d)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        if header != expected {
            return Err(DatagenError::Csv(format!(
                "header must be `{}`, found `{}`",
                expected.join(","),
                header.join(",")
            )));
        }
        Ok(table)
    }

    /// Reads a CSV table with arbitrary column names; the last column is the
    /// dependent variable. Returns the header alongside the table.
    pub fn from_csv_any_header(text: &str) -> Result<(Vec<String>, Self), DatagenError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(DatagenError::Csv("need at least one x column and y".into()));
        }
        let d = header.len() - 1;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| DatagenError::Csv(format!("row {}: {e}", i + 1)))?;
            x.extend_from_slice(&vals[..d]);
            y.push(vals[d]);
        }
        Ok((header, DataTable::new(d, x, y)?))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = (1..=self.d)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for (xs, y) in self.rows() {
            let rec: Vec<String> = xs.iter().chain(std::iter::once(&y)).map(f64::to_string).collect();
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }
}

/// Ten relative noise fractions, the first being 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule(Vec<f64>);

impl Default for NoiseSchedule {
    /// `0.025 * k` for `k = 0..9`.
    fn default() -> Self {
        NoiseSchedule((0..NOISE_LEVELS).map(|k| 0.025 * k as f64).collect())
    }
}

impl NoiseSchedule {
    pub fn new(levels: Vec<f64>) -> Result<Self, DatagenError> {
        let ok = levels.len() == NOISE_LEVELS
            && levels[0] == 0.0
            && levels.windows(2).all(|w| w[0] < w[1])
            && levels[NOISE_LEVELS - 1] <= 0.25;
        if ok {
            Ok(NoiseSchedule(levels))
        } else {
            Err(DatagenError::BadSchedule(levels))
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    pub fn level(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// Samples `n_rows` observations without the value-budget check.
pub fn generate_rows<R: Rng + ?Sized>(
    template: &EquationTemplate,
    params: &[f64],
    n_rows: usize,
    rng: &mut R,
) -> Result<DataTable, DatagenError> {
    if n_rows < 2 {
        return Err(DatagenError::TooFewRows(n_rows));
    }
    let d = template.n_vars;
    let mut x = Vec::with_capacity(n_rows * d);
    let mut y = Vec::with_capacity(n_rows);
    let mut rejected = 0;
    while y.len() < n_rows {
        let xs = template.sample_variables(rng);
        let v = template
            .expr
            .evaluate(&xs, params)
            .expect("template binds every symbol");
        if v.is_finite() {
            x.extend_from_slice(&xs);
            y.push(v);
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(DatagenError::DomainExhausted {
                    id: template.id.clone(),
                });
            }
        }
    }
    DataTable::new(d, x, y)
}

/// Samples a table that fits the network input.
pub fn generate_table<R: Rng + ?Sized>(
    template: &EquationTemplate,
    params: &[f64],
    n_rows: usize,
    rng: &mut R,
) -> Result<DataTable, DatagenError> {
    let cols = template.n_vars + 1;
    if n_rows * cols > VALUE_BUDGET {
        return Err(DatagenError::TooManyValues { n: n_rows, cols });
    }
    generate_rows(template, params, n_rows, rng)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Adds `Normal(0, (rho * s)^2)` noise to the dependent column, where `s` is
/// the sample standard deviation of the clean column. Independent columns
/// are untouched.
pub fn add_noise<R: Rng + ?Sized>(table: &DataTable, rho: f64, rng: &mut R) -> DataTable {
    assert!(rho >= 0.0, "noise level must be non-negative");
    let s = sample_std(&table.y);
    if rho == 0.0 || s == 0.0 {
        return table.clone();
    }
    let normal = Normal::new(0.0, rho * s).expect("finite positive sigma");
    let y = table.y.iter().map(|v| v + normal.sample(rng)).collect();
    DataTable {
        d: table.d,
        x: table.x.clone(),
        y,
    }
}

/// Optional per-column scaling applied before stacking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    #[default]
    None,
    /// Each column shifted to zero mean and scaled to unit sample std
    /// (constant columns are only centred).
    Standardize,
}

/// Encodes a table as `[d, c, c, ...]` truncated to [`INPUT_DIM`] values,
/// where `c` is the columns `x1..xd, y` stacked top to bottom.
pub fn encode_input(table: &DataTable) -> Vec<f64> {
    encode_input_scaled(table, InputScaling::None)
}

pub fn encode_input_scaled(table: &DataTable, scaling: InputScaling) -> Vec<f64> {
    let mut columns: Vec<Vec<f64>> = (0..table.d).map(|j| table.column(j).collect()).collect();
    columns.push(table.y.clone());
    if scaling == InputScaling::Standardize {
        for col in &mut columns {
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let s = sample_std(col);
            let scale = if s > 0.0 { 1.0 / s } else { 1.0 };
            col.iter_mut().for_each(|v| *v = (*v - mean) * scale);
        }
    }
    let stacked: Vec<f64> = columns.concat();
    let mut v = Vec::with_capacity(INPUT_DIM);
    v.push(table.d as f64);
    v.extend(stacked.iter().cycle().take(VALUE_BUDGET));
    v
}

/// One-hot encodes `tokens` into `seq_len` blocks of `vocab.size()` bits,
/// padding with PAD after EOS.
pub fn encode_target(tokens: &TokenSeq, seq_len: usize, vocab: &Vocab) -> Result<Vec<u8>, DatagenError> {
    let toks = tokens.as_slice();
    if toks.last() != Some(&Token::Eos) {
        return Err(DatagenError::MissingEos);
    }
    if toks.len() > seq_len {
        return Err(TokenizeError::LengthExceeded {
            needed: toks.len(),
            max: seq_len,
        }
        .into());
    }
    let v = vocab.size();
    let mut bits = vec![0u8; seq_len * v];
    for k in 0..seq_len {
        let tok = toks.get(k).copied().unwrap_or(Token::Pad);
        let idx = vocab
            .index_of(tok)
            .ok_or(TokenizeError::OutOfVocabulary(tok))?;
        bits[k * v + idx] = 1;
    }
    Ok(bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusMeta {
    pub template_id: String,
    pub params: Vec<f64>,
    pub noise_index: usize,
    pub n: usize,
    pub d: usize,
}

/// One supervised pair: encoded table and one-hot token target.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub input: Vec<f64>,
    pub target: Vec<u8>,
    pub meta: StimulusMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub total_pairs: usize,
    pub seed: u64,
    pub seq_len: usize,
    pub vocab: Vocab,
    pub schedule: NoiseSchedule,
    pub scaling: InputScaling,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            total_pairs: 5000,
            seed: 7,
            seq_len: 48,
            vocab: Vocab::default(),
            schedule: NoiseSchedule::default(),
            scaling: InputScaling::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seq_len: usize,
    pub vocab: Vocab,
    pub stimuli: Vec<Stimulus>,
}

/// Generates one stimulus per index. Index `i` uses template `i mod T` and
/// noise level `(i div T) mod 10`, and draws everything else from its own
/// random stream, so output is independent of generation order.
pub fn build_dataset(
    templates: &[EquationTemplate],
    config: &DatasetConfig,
) -> Result<Dataset, DatagenError> {
    let t = templates.len();
    if t == 0 || config.total_pairs < t * NOISE_LEVELS {
        return Err(DatagenError::TooFewPairs {
            pairs: config.total_pairs,
            templates: t,
        });
    }
    let targets = templates
        .iter()
        .map(|tpl| {
            let toks = tokenize(&tpl.expr, &config.vocab, config.seq_len)?;
            encode_target(&toks, config.seq_len, &config.vocab)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let stimuli = (0..config.total_pairs)
        .map(|i| {
            let k = i % t;
            let noise_index = (i / t) % NOISE_LEVELS;
            let mut r = rng::stream(config.seed, i as u64);
            make_stimulus(
                &templates[k],
                &targets[k],
                noise_index,
                config,
                &mut r,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        seq_len: config.seq_len,
        vocab: config.vocab,
        stimuli,
    })
}

fn make_stimulus(
    template: &EquationTemplate,
    target: &[u8],
    noise_index: usize,
    config: &DatasetConfig,
    r: &mut rng::Rng,
) -> Result<Stimulus, DatagenError> {
    let d = template.n_vars;
    let max_rows = VALUE_BUDGET / (d + 1);
    let n = r.random_range(2..=max_rows);
    let params = template.sample_parameters(r);
    let clean = generate_table(template, &params, n, r)?;
    let noisy = add_noise(&clean, config.schedule.level(noise_index), r);
    Ok(Stimulus {
        input: encode_input_scaled(&noisy, config.scaling),
        target: target.to_vec(),
        meta: StimulusMeta {
            template_id: template.id.clone(),
            params,
            noise_index,
            n,
            d,
        },
    })
}

/// Train/validation index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified split: for each template, a seeded shuffle of its stimuli puts
/// `round(count * val_fraction)` of them in validation.
pub fn split(dataset: &Dataset, seed: u64, val_fraction: f64) -> Split {
    use rand::seq::SliceRandom;

    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, s) in dataset.stimuli.iter().enumerate() {
        let id = s.meta.template_id.as_str();
        match groups.iter_mut().find(|g| g.0 == id) {
            Some(g) => g.1.push(i),
            None => groups.push((id, vec![i])),
        }
    }
    let mut r = rng::purpose(seed, "split");
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (_, mut idx) in groups {
        idx.shuffle(&mut r);
        let n_val = (idx.len() as f64 * val_fraction).round() as usize;
        validation.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Split { train, validation }
}

#[derive(Serialize, Deserialize)]
struct Record {
    input: Vec<f64>,
    /// Alternating run lengths of 0s and 1s, starting with 0s.
    target_rle: Vec<u32>,
    seq_len: usize,
    vocab: Vocab,
    meta: StimulusMeta,
}

fn rle_encode(bits: &[u8]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = 0u8;
    let mut len = 0u32;
    for &b in bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

fn rle_decode(runs: &[u32]) -> Vec<u8> {
    runs.iter()
        .enumerate()
        .flat_map(|(i, &len)| std::iter::repeat_n((i % 2) as u8, len as usize))
        .collect()
}

impl Dataset {
    /// Writes one JSON record per line; byte-stable for a given dataset.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), DatagenError> {
        for s in &self.stimuli {
            let rec = Record {
                input: s.input.clone(),
                target_rle: rle_encode(&s.target),
                seq_len: self.seq_len,
                vocab: self.vocab,
                meta: s.meta.clone(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset, DatagenError> {
        let mut stimuli = Vec::new();
        let mut shape: Option<(usize, Vocab)> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| DatagenError::Record {
                line: i + 1,
                message,
            };
            let rec: Record = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            match shape {
                None => shape = Some((rec.seq_len, rec.vocab)),
                Some(s) if s != (rec.seq_len, rec.vocab) => {
                    return Err(bad("sequence length or vocabulary differs from line 1".into()))
                }
                _ => {}
            }
            let target = rle_decode(&rec.target_rle);
            if rec.input.len() != INPUT_DIM || target.len() != rec.seq_len * rec.vocab.size() {
                return Err(bad("input or target has the wrong length".into()));
            }
            stimuli.push(Stimulus {
                input: rec.input,
                target,
                meta: rec.meta,
            });
        }
        let (seq_len, vocab) = shape.ok_or(DatagenError::Record {
            line: 0,
            message: "empty dataset".into(),
        })?;
        Ok(Dataset {
            seq_len,
            vocab,
            stimuli,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_templates, Interval};
    use crate::rng::stream;

    fn doubling() -> EquationTemplate {
        EquationTemplate::from_text("double", "( 2 * x1 )", vec![], vec![Interval::new(-1.0, 1.0)])
            .unwrap()
    }

    fn two_var() -> EquationTemplate {
        EquationTemplate::from_text(
            "sum",
            "( x1 + x2 )",
            vec![],
            vec![Interval::new(0.0, 1.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn generated_rows_satisfy_the_equation() {
        let t = generate_table(&doubling(), &[], 3, &mut stream(1, 0)).unwrap();
        assert_eq!(t.n(), 3);
        for (x, y) in t.rows() {
            assert_eq!(y, 2.0 * x[0]);
        }
    }

    #[test]
    fn value_budget_boundary() {
        assert!(generate_table(&two_var(), &[], 66, &mut stream(1, 0)).is_ok());
        assert!(matches!(
            generate_table(&two_var(), &[], 67, &mut stream(1, 0)),
            Err(DatagenError::TooManyValues { n: 67, cols: 3 })
        ));
        assert!(matches!(
            generate_table(&two_var(), &[], 1, &mut stream(1, 0)),
            Err(DatagenError::TooFewRows(1))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let ts = builtin_templates();
        let w = ts[0].sample_parameters(&mut stream(2, 0));
        let a = generate_table(&ts[0], &w, 40, &mut stream(9, 1)).unwrap();
        let b = generate_table(&ts[0], &w, 40, &mut stream(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_domain_is_exhausted() {
        let t = EquationTemplate::from_text(
            "neglog",
            "log ( ( - x1 ) )",
            vec![],
            vec![Interval::new(0.5, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            generate_table(&t, &[], 5, &mut stream(0, 0)),
            Err(DatagenError::DomainExhausted { .. })
        ));
    }

    #[test]
    fn zero_noise_is_identity_and_x_is_untouched() {
        let t = generate_table(&two_var(), &[], 50, &mut stream(4, 0)).unwrap();
        assert_eq!(add_noise(&t, 0.0, &mut stream(4, 1)), t);
        let noisy = add_noise(&t, 0.2, &mut stream(4, 1));
        assert_eq!(noisy.x, t.x);
        assert_ne!(noisy.y, t.y);
    }

    #[test]
    fn constant_column_gets_no_noise() {
        let t = DataTable::new(1, vec![0.0, 1.0, 2.0], vec![5.0; 3]).unwrap();
        assert_eq!(add_noise(&t, 0.2, &mut stream(0, 0)), t);
    }

    #[test]
    fn input_without_tiling() {
        let rows: Vec<(Vec<f64>, f64)> = (0..100).map(|i| (vec![i as f64], -(i as f64))).collect();
        let t = DataTable::from_rows(1, &rows).unwrap();
        let v = encode_input(&t);
        assert_eq!(v.len(), INPUT_DIM);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[100], 99.0);
        assert_eq!(v[101], 0.0);
        assert_eq!(v[200], -99.0);
    }

    #[test]
    fn input_tiles_short_tables() {
        let t = DataTable::new(1, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let v = encode_input(&t);
        assert_eq!(v.len(), INPUT_DIM);
        assert_eq!(v[0], 1.0);
        for (i, &x) in v[1..].iter().enumerate() {
            assert_eq!(x, [1.0, 2.0, 3.0, 4.0][i % 4]);
        }
    }

    #[test]
    fn standardized_input_has_unit_columns() {
        let t = DataTable::new(1, vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 60.0]).unwrap();
        let v = encode_input_scaled(&t, InputScaling::Standardize);
        assert_eq!(v[0], 1.0);
        assert_eq!(&v[1..4], &[-1.0, 0.0, 1.0]);
        assert!((sample_std(&v[4..7]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_blocks_are_one_hot() {
        let vocab = Vocab::default();
        let toks = TokenSeq(vec![Token::Num(0), Token::Eos]);
        let bits = encode_target(&toks, 3, &vocab).unwrap();
        let v = vocab.size();
        assert_eq!(bits.len(), 3 * v);
        assert_eq!(bits.iter().map(|&b| b as usize).sum::<usize>(), 3);
        assert_eq!(bits[0], 1);
        assert_eq!(bits[v + vocab.eos_index()], 1);
        assert_eq!(bits[2 * v + vocab.pad_index()], 1);
        assert!(matches!(
            encode_target(&TokenSeq(vec![Token::Num(0)]), 3, &vocab),
            Err(DatagenError::MissingEos)
        ));
        assert!(matches!(
            encode_target(&toks, 1, &vocab),
            Err(DatagenError::Tokenize(TokenizeError::LengthExceeded { .. }))
        ));
    }

    #[test]
    fn rle_round_trips() {
        for bits in [vec![], vec![1], vec![0, 0, 1, 0], vec![1, 1, 0, 1, 1]] {
            assert_eq!(rle_decode(&rle_encode(&bits)), bits);
        }
    }

    #[test]
    fn schedule_validation() {
        let s = NoiseSchedule::default();
        assert_eq!(s.levels().len(), 10);
        assert_eq!(s.level(0), 0.0);
        assert!((s.level(9) - 0.225).abs() < 1e-15);
        assert!(NoiseSchedule::new(s.levels().to_vec()).is_ok());
        assert!(NoiseSchedule::new(vec![0.0; 10]).is_err());
        assert!(NoiseSchedule::new((0..10).map(|k| 0.05 * k as f64).collect()).is_err());
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let t = generate_table(&two_var(), &[], 5, &mut stream(3, 3)).unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("x1,x2,y\n"));
        assert_eq!(DataTable::from_csv(&text).unwrap(), t);
        assert!(DataTable::from_csv("a,b\n1,2\n3,4\n").is_err());
        let (h, t2) = DataTable::from_csv_any_header("p,V,choice\n1,2,1\n0,3,2\n").unwrap();
        assert_eq!(h, vec!["p", "V", "choice"]);
        assert_eq!(t2.d(), 2);
    }

    #[test]
    fn rejects_non_finite_tables() {
        assert!(matches!(
            DataTable::new(1, vec![0.0, f64::NAN], vec![1.0, 2.0]),
            Err(DatagenError::NonFinite(1))
        ));
    }
}
