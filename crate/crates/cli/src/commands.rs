use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;
use serde::Serialize;
use symreg::casestudy::{self, CaseTable};
use symreg::corpus::{find, write_templates};
use symreg::datagen::{build_dataset, split, DataTable, Dataset, DatagenError, Split};
use symreg::expr::parse_text;
use symreg::fit::{fit_parameters, FitError};
use symreg::nn::{Arch, Checkpoint};
use symreg::train::{
    decode_rows, match_template, mean_loss, predict, stack, train, TrainError,
};

use crate::config::RunConfig;
use crate::{Cli, Command, PredictArgs};

/// Why a command stopped, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, config or input files.
    Usage(anyhow::Error),
    /// Non-finite values during training, prediction or fitting.
    Numeric(anyhow::Error),
    /// `predict` ran but the network's output does not parse.
    Unparsed,
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numeric(_) => 2,
            Failure::Unparsed => 3,
        }
    }

    pub fn message(&self) -> Option<String> {
        match self {
            Failure::Usage(e) | Failure::Numeric(e) => Some(format!("{e:#}")),
            Failure::Unparsed => None,
        }
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn numeric<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Numeric(e.into())
}

type Result<T> = std::result::Result<T, Failure>;

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path).map_err(usage)?;
    }
    for s in &cli.set {
        cfg.apply_assignment(s).map_err(usage)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string()).map_err(usage)?;
    }
    let flag = |cfg: &mut RunConfig, key: &str, v: Option<usize>| match v {
        Some(v) => cfg.set(key, &v.to_string()).map_err(usage),
        None => Ok(()),
    };
    match &cli.command {
        Command::Gen { pairs } => flag(&mut cfg, "data.pairs", *pairs)?,
        Command::Train {
            epochs, batch_size, ..
        } => {
            flag(&mut cfg, "train.epochs", *epochs)?;
            flag(&mut cfg, "train.batch_size", *batch_size)?;
        }
        _ => {}
    }
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(usage)?;
    write(path, text + "\n")
}

fn read_table(path: &Path) -> Result<DataTable> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    DataTable::from_csv(&text)
        .with_context(|| format!("table {}", path.display()))
        .map_err(usage)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
        .with_context(|| format!("checkpoint {}", path.display()))
        .map_err(usage)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(usage)?;
    Dataset::read_jsonl(BufReader::new(f))
        .with_context(|| format!("dataset {}", path.display()))
        .map_err(usage)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating {}", cli.out.display()))
        .map_err(usage)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Gen { .. } => {
            gen(&cfg, out)?;
        }
        Command::Train { dataset, .. } => cmd_train(&cfg, out, dataset.as_deref())?,
        Command::Predict(args) => cmd_predict(out, args)?,
        Command::Fit { equation, table } => cmd_fit(&cfg, out, equation, table)?,
        Command::Casestudy { checkpoint, csv } => {
            cmd_casestudy(&cfg, out, checkpoint.as_deref(), csv.as_deref())?
        }
        Command::Eval {
            checkpoint,
            dataset,
        } => cmd_eval(&cfg, out, checkpoint.as_deref(), dataset.as_deref())?,
    }
    Ok(())
}

fn gen(cfg: &RunConfig, out: &Path) -> Result<(Dataset, Split)> {
    let templates = cfg.templates().map_err(usage)?;
    let data_cfg = symreg::datagen::DatasetConfig {
        seed: cfg.seed,
        ..cfg.data.clone()
    };
    let ds = build_dataset(&templates, &data_cfg).map_err(|e| match e {
        DatagenError::TooFewPairs { pairs, templates } => usage(anyhow!(
            "{pairs} pairs cannot cover {templates} templates x 10 noise levels"
        )),
        other => usage(other),
    })?;
    let sp = split(&ds, cfg.seed, cfg.val_fraction);
    write(&out.join("dataset.jsonl"), ds.to_jsonl())?;
    write_json(&out.join("split.json"), &sp)?;
    write(&out.join("corpus.txt"), write_templates(&templates))?;
    write(&out.join("config.txt"), cfg.snapshot())?;
    println!(
        "wrote {} stimuli from {} templates ({} train, {} validation) to {}",
        ds.stimuli.len(),
        templates.len(),
        sp.train.len(),
        sp.validation.len(),
        out.display()
    );
    Ok((ds, sp))
}

fn cmd_train(cfg: &RunConfig, out: &Path, dataset: Option<&Path>) -> Result<()> {
    let default = out.join("dataset.jsonl");
    let (ds, sp) = match dataset {
        Some(path) => {
            let ds = load_dataset(path)?;
            let sp = split(&ds, cfg.seed, cfg.val_fraction);
            write_json(&out.join("split.json"), &sp)?;
            (ds, sp)
        }
        None if default.exists() => {
            let ds = load_dataset(&default)?;
            let sp = split(&ds, cfg.seed, cfg.val_fraction);
            write_json(&out.join("split.json"), &sp)?;
            (ds, sp)
        }
        None => gen(cfg, out)?,
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.stimuli[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(&sp.train), pick(&sp.validation));
    let arch = Arch::standard(ds.seq_len * ds.vocab.size());
    let train_cfg = symreg::train::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    write(&out.join("config.txt"), cfg.snapshot())?;
    info!(
        "training on {} stimuli, validating on {}, {} epochs of batch {}",
        tr.len(),
        va.len(),
        train_cfg.epochs,
        train_cfg.batch_size
    );
    let outcome = train(&tr, &va, &arch, ds.seq_len, &ds.vocab, &train_cfg, |row| {
        if let Some(vl) = row.val_loss {
            info!(
                "epoch {} step {} train loss {:.5} val loss {:.5}",
                row.epoch, row.step, row.train_loss, vl
            );
        }
        if let Some(p) = row.parse_rate {
            info!("step {} parse rate {:.3}", row.step, p);
        }
    })
    .map_err(|e| match e {
        TrainError::Numeric { .. } => numeric(e),
        TrainError::Config(_) => usage(e),
    })?;
    let ckpt = |model: &symreg::nn::MlpModel, step: u64| Checkpoint {
        model: model.clone(),
        seq_len: ds.seq_len,
        vocab: ds.vocab,
        scaling: cfg.data.scaling,
        adam: train_cfg.adam,
        step,
    };
    ckpt(&outcome.final_model, outcome.steps)
        .save(&out.join("final.ckpt.json"))
        .map_err(usage)?;
    ckpt(&outcome.best_model, outcome.best_step)
        .save(&out.join("best.ckpt.json"))
        .map_err(usage)?;
    write(&out.join("metrics.csv"), outcome.log.to_csv())?;
    write(&out.join("metrics.json"), outcome.log.to_json())?;
    println!(
        "trained {} steps; best parse rate {:.3} at step {}; checkpoints in {}",
        outcome.steps,
        outcome.best_parse_rate,
        outcome.best_step,
        out.display()
    );
    Ok(())
}

fn cmd_predict(out: &Path, args: &PredictArgs) -> Result<()> {
    let path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("best.ckpt.json"));
    let ckpt = load_checkpoint(&path)?;
    let table = read_table(&args.table)?;
    if !table.within_budget() {
        info!(
            "table has {} rows; the network reads the first {}",
            table.n(),
            table.budget_head().n()
        );
    }
    let pred = predict(&ckpt.model, &table, ckpt.seq_len, &ckpt.vocab, ckpt.scaling).map_err(numeric)?;
    match pred.expr {
        Ok(e) => {
            println!("{}", e.canonical());
            Ok(())
        }
        Err(err) => {
            println!("no equation: {err}");
            println!("tokens: {}", pred.tokens.text());
            Err(Failure::Unparsed)
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    equation: String,
    params: BTreeMap<String, f64>,
    sse: f64,
    rmse: f64,
    converged: bool,
    restarts: usize,
}

fn cmd_fit(cfg: &RunConfig, out: &Path, equation: &str, table: &Path) -> Result<()> {
    let expr = parse_text(equation)
        .with_context(|| format!("equation `{equation}`"))
        .map_err(usage)?;
    let table = read_table(table)?;
    let fit = fit_parameters(&expr, &table, &cfg.fit).map_err(|e: FitError| usage(e))?;
    if !fit.sse.is_finite() {
        return Err(numeric(anyhow!(
            "the equation is non-finite on the table for every start point"
        )));
    }
    let report = FitReport {
        equation: expr.canonical(),
        params: fit
            .params
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("w{}", i + 1), *v))
            .collect(),
        sse: fit.sse,
        rmse: fit.rmse,
        converged: fit.converged,
        restarts: fit.restarts,
    };
    println!("equation: {}", report.equation);
    for (k, v) in &report.params {
        println!("{k} = {v}");
    }
    println!("sse = {}", report.sse);
    println!("rmse = {}", report.rmse);
    println!("converged = {}", report.converged);
    write_json(&out.join("fit.json"), &report)
}

fn cmd_casestudy(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: Option<&Path>,
    csv: Option<&Path>,
) -> Result<()> {
    let cs = &cfg.casestudy;
    let corpus = casestudy::restricted_corpus();
    let target = find(&corpus, &cs.target)
        .ok_or_else(|| usage(anyhow!("unknown target template `{}`", cs.target)))?;
    write(&out.join("config.txt"), cfg.snapshot())?;
    let ckpt = match checkpoint {
        Some(p) => {
            let c = load_checkpoint(p)?;
            casestudy::check_vocabulary(&c.vocab, c.seq_len, target).map_err(usage)?;
            c
        }
        None => {
            info!("training on {} stimuli from the restricted corpus", cs.train_pairs);
            let (c, outcome) = casestudy::train_model(&corpus, cs).map_err(|e| match e {
                casestudy::CaseStudyError::Train(TrainError::Numeric { .. }) => numeric(e),
                other => usage(other),
            })?;
            info!("best parse rate {:.3} at step {}", outcome.best_parse_rate, outcome.best_step);
            c.save(&out.join("casestudy.ckpt.json")).map_err(usage)?;
            c
        }
    };
    let tables = match csv {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(usage)?;
            vec![CaseTable {
                params: None,
                table: casestudy::gamble_table(&text).map_err(usage)?,
            }]
        }
        None => casestudy::synthetic_tables(target, cs.eval_tables, cs.eval_rows, cs.seed)
            .map_err(usage)?,
    };
    let report = casestudy::evaluate(&ckpt, &corpus, &cs.target, &tables, &cfg.fit, cs.alpha_tolerance, cs.vote)
        .map_err(|e| match e {
            casestudy::CaseStudyError::Numeric(_) => numeric(e),
            other => usage(other),
        })?;
    write_json(&out.join("casestudy.json"), &report)?;
    for t in &report.tables {
        println!(
            "table {:>3}: {} | matched {} | alpha {}",
            t.index,
            t.equation.as_deref().unwrap_or("(no parse)"),
            t.matched.as_deref().unwrap_or("-"),
            t.alpha.map_or("-".to_string(), |a| format!("{a:.4}")),
        );
    }
    println!(
        "parse rate {:.3}, {} match rate {:.3}, alpha within {} in {}",
        report.parse_rate,
        report.target,
        report.match_rate,
        report.alpha_tolerance,
        report
            .alpha_within_rate
            .map_or("n/a".to_string(), |r| format!("{r:.3} of matches")),
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    stimuli: usize,
    loss: f64,
    parse_rate: f64,
    match_rate: f64,
    per_template: BTreeMap<String, TemplateScore>,
}

#[derive(Serialize, Default)]
struct TemplateScore {
    count: usize,
    parsed: usize,
    matched: usize,
}

fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<()> {
    let ckpt_path: PathBuf = checkpoint.map_or_else(|| out.join("best.ckpt.json"), Path::to_path_buf);
    let ds_path: PathBuf = dataset.map_or_else(|| out.join("dataset.jsonl"), Path::to_path_buf);
    let ckpt = load_checkpoint(&ckpt_path)?;
    let ds = load_dataset(&ds_path)?;
    if ds.seq_len != ckpt.seq_len || ds.vocab != ckpt.vocab {
        return Err(usage(anyhow!(
            "dataset encodes L={} V={}, checkpoint expects L={} V={}",
            ds.seq_len,
            ds.vocab.size(),
            ckpt.seq_len,
            ckpt.vocab.size()
        )));
    }
    if ds.stimuli.is_empty() {
        return Err(usage(anyhow!("dataset {} is empty", ds_path.display())));
    }
    let templates = cfg.templates().map_err(usage)?;
    let refs: Vec<_> = ds.stimuli.iter().collect();
    let (x, t) = stack(&refs);
    let loss = mean_loss(&ckpt.model, x.view(), t.view()).map_err(numeric)?;
    let seqs = decode_rows(&ckpt.model, x.view(), ckpt.seq_len, &ckpt.vocab).map_err(numeric)?;
    let mut per_template: BTreeMap<String, TemplateScore> = BTreeMap::new();
    for (s, toks) in ds.stimuli.iter().zip(&seqs) {
        let score = per_template.entry(s.meta.template_id.clone()).or_default();
        score.count += 1;
        if let Ok(e) = symreg::expr::parse(toks.as_slice()) {
            score.parsed += 1;
            if match_template(&e, &templates).is_some_and(|m| m.id == s.meta.template_id) {
                score.matched += 1;
            }
        }
    }
    let n = ds.stimuli.len() as f64;
    let report = EvalReport {
        stimuli: ds.stimuli.len(),
        loss,
        parse_rate: per_template.values().map(|s| s.parsed).sum::<usize>() as f64 / n,
        match_rate: per_template.values().map(|s| s.matched).sum::<usize>() as f64 / n,
        per_template,
    };
    write_json(&out.join("eval.json"), &report)?;
    println!(
        "{} stimuli: loss {:.5}, parse rate {:.3}, template match {:.3}",
        report.stimuli, report.loss, report.parse_rate, report.match_rate
    );
    Ok(())
}
