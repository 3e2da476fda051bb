//! Recovering a choice model from gamble data: tables of two gambles
//! `(p1, V1, p2, V2)` and the option chosen, either synthetic or read from a
//! CSV file.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    builtin_templates, find, CorpusError, EquationTemplate, EXPONENT_RANGE, DEFAULT_PARAM_RANGE,
    PAYOFF_RANGE, PROBABILITY_RANGE, CHOICE_ARGMAX, CHOICE_SIGMOID,
};
use crate::datagen::{self, build_dataset, split, DataTable, DatagenError, DatasetConfig, InputScaling};
use crate::expr::{tokenize, Vocab};
use crate::fit::{fit_parameters, FitConfig, FitError, FitResult};
use crate::nn::{Arch, Checkpoint, NnError};
use crate::rng;
use crate::train::{match_template, predict, predict_vote, train, TrainConfig, TrainError, TrainOutcome};

/// Column names of an external gamble file, in template variable order.
pub const GAMBLE_COLUMNS: [&str; 5] = ["p1", "V1", "p2", "V2", "choice"];

#[derive(Debug, Error)]
pub enum CaseStudyError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Data(#[from] DatagenError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Numeric(#[from] NnError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("template `{0}` is not in the corpus")]
    UnknownTemplate(String),
    #[error("the model cannot express template `{id}`: {reason}")]
    Vocabulary { id: String, reason: String },
    #[error("gamble file: {0}")]
    Columns(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub train_pairs: usize,
    pub val_fraction: f64,
    pub seq_len: usize,
    pub seed: u64,
    pub scaling: InputScaling,
    pub train: TrainConfig,
    /// Template the evaluation tables are drawn from.
    pub target: String,
    pub eval_tables: usize,
    /// Rows per evaluation table. The network sees only the prefix that
    /// fits its input; the fit uses every row.
    pub eval_rows: usize,
    /// Predict on every budget-sized window of a table and vote, instead of
    /// on the first window only.
    pub vote: bool,
    pub alpha_tolerance: f64,
    pub fit: FitConfig,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            train_pairs: 2000,
            val_fraction: 0.1,
            seq_len: 48,
            seed: 11,
            scaling: InputScaling::None,
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            target: CHOICE_ARGMAX.to_string(),
            eval_tables: 100,
            eval_rows: 200,
            vote: true,
            alpha_tolerance: 0.05,
            fit: FitConfig::default(),
        }
    }
}

/// The two choice models plus three gamble-shaped distractors.
pub fn restricted_corpus() -> Vec<EquationTemplate> {
    let builtin = builtin_templates();
    let gamble_vars = vec![PROBABILITY_RANGE, PAYOFF_RANGE, PROBABILITY_RANGE, PAYOFF_RANGE];
    let mut corpus: Vec<EquationTemplate> = [CHOICE_ARGMAX, CHOICE_SIGMOID]
        .iter()
        .map(|id| find(&builtin, id).expect("builtin choice template").clone())
        .collect();
    let distractors = [
        (
            "expected_value_gap",
            "( w1 * ( ( x1 * x2 ) - ( x3 * x4 ) ) )",
            vec![DEFAULT_PARAM_RANGE],
        ),
        (
            "max_subjective_value",
            "max ( ( x1 * ( x2 ^ w1 ) ) , ( x3 * ( x4 ^ w1 ) ) )",
            vec![EXPONENT_RANGE],
        ),
        (
            "linear_gamble",
            "( ( ( ( w1 * x1 ) + ( w2 * x2 ) ) + ( w3 * x3 ) ) + ( w4 * x4 ) )",
            vec![DEFAULT_PARAM_RANGE; 4],
        ),
    ];
    for (id, form, params) in distractors {
        corpus.push(
            EquationTemplate::from_text(id, form, params, gamble_vars.clone())
                .expect("distractor templates are well formed"),
        );
    }
    corpus
}

/// Trains a model on the given corpus.
pub fn train_model(
    corpus: &[EquationTemplate],
    cfg: &CaseStudyConfig,
) -> Result<(Checkpoint, TrainOutcome), CaseStudyError> {
    let data_cfg = DatasetConfig {
        total_pairs: cfg.train_pairs,
        seed: cfg.seed,
        seq_len: cfg.seq_len,
        scaling: cfg.scaling,
        ..DatasetConfig::default()
    };
    let dataset = build_dataset(corpus, &data_cfg)?;
    let sp = split(&dataset, cfg.seed, cfg.val_fraction);
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.stimuli[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(&sp.train), pick(&sp.validation));
    let arch = Arch::standard(cfg.seq_len * data_cfg.vocab.size());
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let outcome = train(&tr, &va, &arch, cfg.seq_len, &data_cfg.vocab, &train_cfg, |_| {})?;
    let ckpt = Checkpoint {
        model: outcome.best_model.clone(),
        seq_len: cfg.seq_len,
        vocab: data_cfg.vocab,
        scaling: data_cfg.scaling,
        adam: train_cfg.adam,
        step: outcome.steps,
    };
    Ok((ckpt, outcome))
}

/// A table to evaluate, with the parameters that generated it if known.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseTable {
    pub params: Option<Vec<f64>>,
    pub table: DataTable,
}

/// Noiseless tables from `template`, one random stream per table.
pub fn synthetic_tables(
    template: &EquationTemplate,
    count: usize,
    rows: usize,
    seed: u64,
) -> Result<Vec<CaseTable>, CaseStudyError> {
    let base = rng::purpose(seed, "casestudy").next_u64();
    (0..count)
        .map(|i| {
            let mut r = rng::stream(base, i as u64);
            let params = template.sample_parameters(&mut r);
            let table = datagen::generate_rows(template, &params, rows, &mut r)?;
            Ok(CaseTable {
                params: Some(params),
                table,
            })
        })
        .collect()
}

/// Reads a gamble CSV with columns `p1,V1,p2,V2,choice` in any order.
pub fn gamble_table(text: &str) -> Result<DataTable, CaseStudyError> {
    let (header, raw) = DataTable::from_csv_any_header(text)?;
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CaseStudyError::Columns(format!("missing column `{name}`")))
    };
    let cols = GAMBLE_COLUMNS
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>, _>>()?;
    let width = header.len();
    let rows: Vec<(Vec<f64>, f64)> = (0..raw.n())
        .map(|i| {
            let full: Vec<f64> = raw.row(i).iter().copied().chain([raw.y()[i]]).collect();
            debug_assert_eq!(full.len(), width);
            (cols[..4].iter().map(|&c| full[c]).collect(), full[cols[4]])
        })
        .collect();
    Ok(DataTable::from_rows(4, &rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOutcome {
    pub index: usize,
    pub true_params: Option<Vec<f64>>,
    pub tokens: String,
    /// Windows agreeing with the prediction, out of `windows`.
    pub votes: usize,
    pub windows: usize,
    pub equation: Option<String>,
    pub parse_error: Option<String>,
    pub matched: Option<String>,
    pub fit: Option<FitResult>,
    /// Fitted exponent when the match is a choice model.
    pub alpha: Option<f64>,
    pub alpha_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub target: String,
    pub tables: Vec<TableOutcome>,
    pub parse_rate: f64,
    /// Fraction of tables whose prediction matches the target template.
    pub match_rate: f64,
    /// Among target matches with a known exponent, the fraction fitted
    /// within `alpha_tolerance`.
    pub alpha_within_rate: Option<f64>,
    pub alpha_tolerance: f64,
}

/// Fails if the checkpoint's vocabulary or sequence length cannot express
/// the template.
pub fn check_vocabulary(
    vocab: &Vocab,
    seq_len: usize,
    template: &EquationTemplate,
) -> Result<(), CaseStudyError> {
    tokenize(&template.expr, vocab, seq_len)
        .map(|_| ())
        .map_err(|e| CaseStudyError::Vocabulary {
            id: template.id.clone(),
            reason: e.to_string(),
        })
}

/// Predicts an equation for each table, matches it against the corpus and,
/// on a match, fits the matched template's parameters to the full table.
pub fn evaluate(
    ckpt: &Checkpoint,
    corpus: &[EquationTemplate],
    target: &str,
    tables: &[CaseTable],
    fit_cfg: &FitConfig,
    alpha_tolerance: f64,
    vote: bool,
) -> Result<CaseStudyReport, CaseStudyError> {
    let target_tpl = find(corpus, target).ok_or_else(|| CaseStudyError::UnknownTemplate(target.into()))?;
    check_vocabulary(&ckpt.vocab, ckpt.seq_len, target_tpl)?;
    let mut outcomes = Vec::with_capacity(tables.len());
    for (index, ct) in tables.iter().enumerate() {
        let (pred, votes, windows) = if vote {
            let v = predict_vote(&ckpt.model, &ct.table, ckpt.seq_len, &ckpt.vocab, ckpt.scaling)?;
            (v.winner, v.votes, v.windows)
        } else {
            let p = predict(&ckpt.model, &ct.table, ckpt.seq_len, &ckpt.vocab, ckpt.scaling)?;
            let votes = usize::from(p.expr.is_ok());
            (p, votes, 1)
        };
        let mut o = TableOutcome {
            index,
            true_params: ct.params.clone(),
            tokens: pred.tokens.text(),
            votes,
            windows,
            equation: None,
            parse_error: None,
            matched: None,
            fit: None,
            alpha: None,
            alpha_error: None,
        };
        match &pred.expr {
            Err(e) => o.parse_error = Some(e.to_string()),
            Ok(expr) => {
                o.equation = Some(expr.canonical());
                if let Some(tpl) = match_template(expr, corpus) {
                    o.matched = Some(tpl.id.clone());
                    if tpl.n_vars == ct.table.d() {
                        let fit = fit_parameters(&tpl.expr, &ct.table, fit_cfg)?;
                        if tpl.id == CHOICE_ARGMAX || tpl.id == CHOICE_SIGMOID {
                            o.alpha = fit.params.first().copied();
                            if tpl.id == target {
                                o.alpha_error = ct
                                    .params
                                    .as_ref()
                                    .and_then(|p| p.first())
                                    .zip(o.alpha)
                                    .map(|(t, a)| (a - t).abs());
                            }
                        }
                        o.fit = Some(fit);
                    }
                }
            }
        }
        outcomes.push(o);
    }
    let n = outcomes.len().max(1) as f64;
    let parsed = outcomes.iter().filter(|o| o.equation.is_some()).count();
    let matched = outcomes
        .iter()
        .filter(|o| o.matched.as_deref() == Some(target))
        .count();
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.alpha_error).collect();
    let alpha_within_rate = (!errors.is_empty())
        .then(|| errors.iter().filter(|&&e| e <= alpha_tolerance).count() as f64 / errors.len() as f64);
    Ok(CaseStudyReport {
        target: target.to_string(),
        tables: outcomes,
        parse_rate: parsed as f64 / n,
        match_rate: matched as f64 / n,
        alpha_within_rate,
        alpha_tolerance,
    })
}

/// Trains on the restricted corpus and evaluates on fresh synthetic tables.
pub fn run(cfg: &CaseStudyConfig) -> Result<(CaseStudyReport, Checkpoint), CaseStudyError> {
    let corpus = restricted_corpus();
    let target = find(&corpus, &cfg.target).ok_or_else(|| CaseStudyError::UnknownTemplate(cfg.target.clone()))?;
    let (ckpt, _) = train_model(&corpus, cfg)?;
    let tables = synthetic_tables(target, cfg.eval_tables, cfg.eval_rows, cfg.seed)?;
    let report = evaluate(&ckpt, &corpus, &cfg.target, &tables, &cfg.fit, cfg.alpha_tolerance, cfg.vote)?;
    Ok((report, ckpt))
}
