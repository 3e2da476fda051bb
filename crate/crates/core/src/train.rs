//! Training loop, validation, parse-rate metric and prediction.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EquationTemplate;
use crate::datagen::{encode_input_scaled, DataTable, InputScaling, Stimulus, INPUT_DIM};
use crate::expr::{parse, Expr, ParseError, TokenSeq, Vocab};
use crate::nn::{bce_loss, decode_output, AdamConfig, Arch, MlpModel, NnError, OptimState};
use crate::rng;

/// Rows per forward pass when scoring whole sets.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub parse_rate_interval: usize,
    pub parse_rate_batch: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            seed: 7,
            parse_rate_interval: 100,
            parse_rate_batch: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("step {step}: {source}")]
    Numeric {
        step: u64,
        #[source]
        source: NnError,
    },
    #[error("{0}")]
    Config(String),
}

/// One training step. Validation loss is filled on the last step of each
/// epoch, parse rate every `parse_rate_interval` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub parse_rate: Option<f64>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    /// `step,epoch,train_loss,val_loss,parse_rate`, blank where not sampled.
    /// Wall-clock times are left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("step,epoch,train_loss,val_loss,parse_rate\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                r.epoch,
                r.train_loss,
                opt(r.val_loss),
                opt(r.parse_rate)
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn parse_rates(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.rows.iter().filter_map(|r| r.parse_rate.map(|p| (r.step, p)))
    }

    pub fn val_losses(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.iter().filter_map(|r| r.val_loss.map(|v| (r.epoch, v)))
    }
}

pub struct TrainOutcome {
    pub final_model: MlpModel,
    /// Snapshot at the highest sampled parse rate (latest on ties).
    pub best_model: MlpModel,
    pub best_parse_rate: f64,
    pub best_step: u64,
    pub steps: u64,
    pub log: MetricsLog,
}

/// Stacks stimuli into input and target matrices.
pub fn stack(stimuli: &[&Stimulus]) -> (Array2<f64>, Array2<f64>) {
    let out = stimuli.first().map_or(0, |s| s.target.len());
    let mut x = Array2::zeros((stimuli.len(), INPUT_DIM));
    let mut t = Array2::zeros((stimuli.len(), out));
    for (i, s) in stimuli.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&s.input[..]));
        t.row_mut(i)
            .iter_mut()
            .zip(&s.target)
            .for_each(|(d, &b)| *d = b as f64);
    }
    (x, t)
}

/// Mean BCE over a whole set.
pub fn mean_loss(model: &MlpModel, x: ArrayView2<f64>, t: ArrayView2<f64>) -> Result<f64, NnError> {
    let mut total = 0.0;
    for (xc, tc) in x
        .axis_chunks_iter(Axis(0), EVAL_CHUNK)
        .zip(t.axis_chunks_iter(Axis(0), EVAL_CHUNK))
    {
        let out = model.forward_batch(xc)?;
        let tc = tc.as_standard_layout();
        total += bce_loss(out.as_slice().unwrap(), tc.as_slice().unwrap()) * tc.len() as f64;
    }
    Ok(total / t.len() as f64)
}

/// Decoded token sequence for each input row.
pub fn decode_rows(
    model: &MlpModel,
    x: ArrayView2<f64>,
    seq_len: usize,
    vocab: &Vocab,
) -> Result<Vec<TokenSeq>, NnError> {
    let mut seqs = Vec::with_capacity(x.nrows());
    for xc in x.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        let out = model.forward_batch(xc)?;
        seqs.extend(
            out.outer_iter()
                .map(|row| decode_output(row.as_slice().unwrap(), seq_len, vocab)),
        );
    }
    Ok(seqs)
}

/// Fraction of rows whose decoded output parses.
pub fn parse_rate_rows(
    model: &MlpModel,
    x: ArrayView2<f64>,
    seq_len: usize,
    vocab: &Vocab,
) -> Result<f64, NnError> {
    let seqs = decode_rows(model, x, seq_len, vocab)?;
    let ok = seqs.iter().filter(|s| parse(s.as_slice()).is_ok()).count();
    Ok(ok as f64 / seqs.len().max(1) as f64)
}

/// Fraction of stimuli whose forward → decode → parse succeeds.
pub fn parse_rate(
    model: &MlpModel,
    stimuli: &[Stimulus],
    seq_len: usize,
    vocab: &Vocab,
) -> Result<f64, NnError> {
    let refs: Vec<&Stimulus> = stimuli.iter().collect();
    let (x, _) = stack(&refs);
    parse_rate_rows(model, x.view(), seq_len, vocab)
}

/// Trains a fresh model. Never stops early: both the final weights and the
/// best-parse-rate snapshot are returned.
pub fn train(
    train_set: &[Stimulus],
    val_set: &[Stimulus],
    arch: &Arch,
    seq_len: usize,
    vocab: &Vocab,
    config: &TrainConfig,
    mut observe: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    if config.batch_size == 0 || config.parse_rate_interval == 0 || config.parse_rate_batch == 0 {
        return Err(TrainError::Config("batch size and intervals must be >= 1".into()));
    }
    if arch.output_dim != seq_len * vocab.size() || train_set[0].target.len() != arch.output_dim {
        return Err(TrainError::Config(format!(
            "output width {} does not match {} x {} targets",
            arch.output_dim,
            seq_len,
            vocab.size()
        )));
    }
    let numeric = |step: u64| move |source| TrainError::Numeric { step, source };

    let mut model = MlpModel::init(arch, config.seed).map_err(numeric(0))?;
    let mut opt = OptimState::new(&model, config.adam);
    let (train_x, train_t) = stack(&train_set.iter().collect::<Vec<_>>());
    let (val_x, val_t) = stack(&val_set.iter().collect::<Vec<_>>());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = rng::purpose(config.seed, "shuffle");
    let mut log = MetricsLog::default();
    let mut best_model = model.clone();
    let mut best_rate = f64::NEG_INFINITY;
    let mut best_step = 0;
    let mut probe_cursor = 0usize;
    let mut step = 0u64;
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (b, idx) in batches.iter().enumerate() {
            step += 1;
            let x = train_x.select(Axis(0), idx);
            let t = train_t.select(Axis(0), idx);
            let (grads, loss) = model.backward(x.view(), t.view()).map_err(numeric(step))?;
            opt.step(&mut model, &grads);

            let mut row = MetricsRow {
                step,
                epoch,
                train_loss: loss,
                val_loss: None,
                parse_rate: None,
                elapsed_ms: 0,
            };
            if step.is_multiple_of(config.parse_rate_interval as u64) {
                let probe: Vec<usize> = (0..config.parse_rate_batch.min(val_set.len()))
                    .map(|k| (probe_cursor + k) % val_set.len())
                    .collect();
                probe_cursor = (probe_cursor + probe.len()) % val_set.len();
                let px = val_x.select(Axis(0), &probe);
                let rate = parse_rate_rows(&model, px.view(), seq_len, vocab).map_err(numeric(step))?;
                if rate >= best_rate {
                    best_rate = rate;
                    best_model = model.clone();
                    best_step = step;
                }
                row.parse_rate = Some(rate);
            }
            if b + 1 == batches.len() {
                let vl = mean_loss(&model, val_x.view(), val_t.view()).map_err(numeric(step))?;
                row.val_loss = Some(vl);
            }
            row.elapsed_ms = start.elapsed().as_millis() as u64;
            observe(&row);
            log.rows.push(row);
        }
    }
    if best_rate == f64::NEG_INFINITY {
        // Too few steps for a scheduled probe: score the final model.
        best_rate = parse_rate_rows(&model, val_x.view(), seq_len, vocab).map_err(numeric(step))?;
        best_model = model.clone();
        best_step = step;
    }
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_parse_rate: best_rate,
        best_step,
        steps: opt.step,
        log,
    })
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Numeric(#[from] NnError),
}

/// What the network emitted for a table: the raw tokens and, when they
/// parse, the equation.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub tokens: TokenSeq,
    pub expr: Result<Expr, ParseError>,
}

/// Encodes the table (its longest in-budget prefix), runs the network and
/// decodes the output.
pub fn predict(
    model: &MlpModel,
    table: &DataTable,
    seq_len: usize,
    vocab: &Vocab,
    scaling: InputScaling,
) -> Result<Prediction, NnError> {
    let table = if table.within_budget() {
        table.clone()
    } else {
        table.budget_head()
    };
    let out = model.forward(&encode_input_scaled(&table, scaling))?;
    let tokens = decode_output(&out, seq_len, vocab);
    let expr = parse(tokens.as_slice());
    Ok(Prediction { tokens, expr })
}

/// Predictions for every budget-sized window of a table, reduced by vote.
#[derive(Debug, Clone)]
pub struct VotedPrediction {
    pub winner: Prediction,
    pub votes: usize,
    pub windows: usize,
}

/// Runs [`predict`] on each window from [`DataTable::budget_windows`] and
/// returns the most frequent parsable token sequence, ties going to the
/// earliest window. If no window parses, the first window's output is
/// returned with zero votes.
pub fn predict_vote(
    model: &MlpModel,
    table: &DataTable,
    seq_len: usize,
    vocab: &Vocab,
    scaling: InputScaling,
) -> Result<VotedPrediction, NnError> {
    let windows = table.budget_windows();
    let preds = windows
        .iter()
        .map(|w| predict(model, w, seq_len, vocab, scaling))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<(usize, usize)> = None;
    for (i, p) in preds.iter().enumerate() {
        if p.expr.is_err() {
            continue;
        }
        let count = preds.iter().filter(|q| q.expr.is_ok() && q.tokens == p.tokens).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((i, count));
        }
    }
    let (idx, votes) = best.unwrap_or((0, 0));
    Ok(VotedPrediction {
        winner: preds[idx].clone(),
        votes,
        windows: preds.len(),
    })
}

/// The predicted equation, or the parse failure verbatim.
pub fn predict_equation(
    model: &MlpModel,
    table: &DataTable,
    seq_len: usize,
    vocab: &Vocab,
    scaling: InputScaling,
) -> Result<Expr, PredictError> {
    Ok(predict(model, table, seq_len, vocab, scaling)?.expr?)
}

/// Structural match where every template parameter is a wildcard for any
/// parameter or constant.
pub fn matches_template(expr: &Expr, template: &Expr) -> bool {
    match (template, expr) {
        (Expr::Param(_), Expr::Param(_) | Expr::Const(_)) => true,
        (Expr::Const(a), Expr::Const(b)) => a == b,
        (Expr::Var(a), Expr::Var(b)) => a == b,
        (Expr::Unary(op, a), Expr::Unary(op2, b)) => op == op2 && matches_template(b, a),
        (Expr::Binary(op, a1, a2), Expr::Binary(op2, b1, b2)) => {
            op == op2 && matches_template(b1, a1) && matches_template(b2, a2)
        }
        _ => false,
    }
}

/// First template, in corpus order, that `expr` matches.
pub fn match_template<'a>(expr: &Expr, corpus: &'a [EquationTemplate]) -> Option<&'a EquationTemplate> {
    corpus.iter().find(|t| matches_template(expr, &t.expr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_templates, find, CHOICE_ARGMAX, CHOICE_SIGMOID};
    use crate::expr::parse_text;

    #[test]
    fn wildcard_parameters_match_renamed_and_constant_slots() {
        let ts = builtin_templates();
        let e = parse_text("argmax ( ( x1 * ( x2 ^ w4 ) ) , ( x3 * ( x4 ^ 1 ) ) )").unwrap();
        assert_eq!(match_template(&e, &ts).unwrap().id, CHOICE_ARGMAX);
        let eq3 = &find(&ts, CHOICE_SIGMOID).unwrap().expr;
        assert!(!matches_template(eq3, &find(&ts, CHOICE_ARGMAX).unwrap().expr));
        assert!(match_template(&Expr::constant(0.0), &ts).is_none());
    }

    #[test]
    fn variables_are_not_wildcards() {
        let ts = builtin_templates();
        let e = parse_text("argmax ( ( x1 * ( x2 ^ w1 ) ) , ( x3 * ( x3 ^ w1 ) ) )").unwrap();
        assert!(match_template(&e, &ts).is_none());
        let e = parse_text("( ( w1 * x1 ) + x1 )").unwrap();
        assert!(match_template(&e, &ts).is_none());
    }

    #[test]
    fn metrics_serialization() {
        let log = MetricsLog {
            rows: vec![
                MetricsRow {
                    step: 1,
                    epoch: 1,
                    train_loss: 0.6931471805599453,
                    val_loss: None,
                    parse_rate: None,
                    elapsed_ms: 3,
                },
                MetricsRow {
                    step: 2,
                    epoch: 1,
                    train_loss: 0.5,
                    val_loss: Some(0.25),
                    parse_rate: Some(0.125),
                    elapsed_ms: 9,
                },
            ],
        };
        assert_eq!(
            log.to_csv(),
            "step,epoch,train_loss,val_loss,parse_rate\n1,1,0.6931471805599453,,\n2,1,0.5,0.25,0.125\n"
        );
        assert_eq!(MetricsLog::from_json(&log.to_json()).unwrap(), log);
    }
}
