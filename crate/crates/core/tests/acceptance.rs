//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

mod common;

use std::panic;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use symreg::casestudy::{self, CaseStudyConfig};
use symreg::corpus::{builtin_templates, find, EquationTemplate, SUBJECTIVE_VALUE};
use symreg::datagen::{
    add_noise, build_dataset, encode_target, generate_rows, generate_table, split, DatasetConfig,
    INPUT_DIM,
};
use symreg::expr::{parse, parse_text, tokenize, Vocab};
use symreg::fit::{fit_parameters, FitConfig};
use symreg::nn::{bce_loss, decode_output, Arch, MlpModel};
use symreg::rng;
use symreg::train::{parse_rate, train, TrainConfig};

use common::{batch_loss, bce_oracle, random_expr, random_tokens, std_dev};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn gradient_check() -> Outcome {
    const TOL: f64 = 1e-4;
    const FLOOR: f64 = 1e-6;
    const H: f64 = 1e-5;
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for net in 0..10u64 {
        let mut r = rng::stream(1000, net);
        let hidden: Vec<usize> = (0..r.random_range(1..=3)).map(|_| r.random_range(3..=7)).collect();
        let arch = Arch {
            input_dim: r.random_range(2..=6),
            hidden,
            output_dim: r.random_range(2..=5),
        };
        let mut model = MlpModel::init(&arch, net).unwrap();
        for layer in &mut model.layers {
            layer.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
        }
        let batch = 4;
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..arch.input_dim).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let ts: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..arch.output_dim).map(|_| f64::from(r.random_bool(0.5) as u8)).collect())
            .collect();
        let x = Array2::from_shape_vec((batch, arch.input_dim), xs.concat()).unwrap();
        let t = Array2::from_shape_vec((batch, arch.output_dim), ts.concat()).unwrap();
        let (grads, _) = model.backward(x.view(), t.view()).unwrap();

        let mut rel = |analytic: f64, numeric: f64| {
            let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(e);
            checked += 1;
        };
        for l in 0..model.layers.len() {
            let (rows, cols) = model.layers[l].weights.dim();
            for i in 0..rows {
                for j in 0..cols {
                    let w = model.layers[l].weights[[i, j]];
                    model.layers[l].weights[[i, j]] = w + H;
                    let up = batch_loss(&model, &xs, &ts);
                    model.layers[l].weights[[i, j]] = w - H;
                    let down = batch_loss(&model, &xs, &ts);
                    model.layers[l].weights[[i, j]] = w;
                    rel(grads.layers[l].weights[[i, j]], (up - down) / (2.0 * H));
                }
            }
            for j in 0..cols {
                let b = model.layers[l].bias[j];
                model.layers[l].bias[j] = b + H;
                let up = batch_loss(&model, &xs, &ts);
                model.layers[l].bias[j] = b - H;
                let down = batch_loss(&model, &xs, &ts);
                model.layers[l].bias[j] = b;
                rel(grads.layers[l].bias[j], (up - down) / (2.0 * H));
            }
        }
    }
    let el = t0.elapsed();
    outcome(
        worst < TOL && within(el, 30),
        format!("{checked} parameters, max rel err {worst:.2e} (< {TOL:e}), {el:.1?} (< 30s)"),
    )
}

fn grammar_round_trip() -> Outcome {
    let t0 = Instant::now();
    let vocab = Vocab::default();
    let mut failures = 0;
    for t in builtin_templates() {
        let toks = tokenize(&t.expr, &vocab, 48).unwrap();
        failures += usize::from(parse(toks.as_slice()).as_ref() != Ok(&t.expr));
    }
    let mut r = rng::stream(2000, 0);
    for _ in 0..10_000 {
        let e = random_expr(&mut r, 5, &vocab);
        let toks = tokenize(&e, &vocab, 512).unwrap();
        failures += usize::from(parse(toks.as_slice()) != Ok(e));
    }
    let mut crashes = 0;
    let mut r = rng::stream(2000, 1);
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    for _ in 0..100_000 {
        let toks = random_tokens(&mut r, 48, &vocab);
        if panic::catch_unwind(|| {
            let _ = parse(&toks);
        })
        .is_err()
        {
            crashes += 1;
        }
    }
    panic::set_hook(hook);
    let el = t0.elapsed();
    outcome(
        failures == 0 && crashes == 0 && within(el, 60),
        format!("{failures} round-trip failures, {crashes} parser crashes in 100000 fuzz strings, {el:.1?} (< 60s)"),
    )
}

fn encoding_invariants() -> Outcome {
    let templates = builtin_templates();
    let cfg = DatasetConfig::default();
    let ds = build_dataset(&templates, &cfg).unwrap();
    let bad_inputs = ds
        .stimuli
        .iter()
        .filter(|s| s.input.len() != INPUT_DIM || s.input[0] != s.meta.d as f64)
        .count();
    let mut bad_targets = 0;
    for t in &templates {
        let toks = tokenize(&t.expr, &cfg.vocab, cfg.seq_len).unwrap();
        let bits: Vec<f64> = encode_target(&toks, cfg.seq_len, &cfg.vocab)
            .unwrap()
            .into_iter()
            .map(f64::from)
            .collect();
        bad_targets += usize::from(decode_output(&bits, cfg.seq_len, &cfg.vocab) != toks);
    }
    let again = build_dataset(&templates, &cfg).unwrap();
    let identical = ds.to_jsonl() == again.to_jsonl();
    outcome(
        bad_inputs == 0 && bad_targets == 0 && identical,
        format!(
            "{} stimuli, {bad_inputs} bad inputs, {bad_targets}/{} target round-trip failures, regeneration identical: {identical}",
            ds.stimuli.len(),
            templates.len()
        ),
    )
}

fn noise_statistics() -> Outcome {
    let t = EquationTemplate::from_text(
        "line",
        "( ( w1 * x1 ) + w2 )",
        vec![symreg::corpus::DEFAULT_PARAM_RANGE; 2],
        vec![symreg::corpus::DEFAULT_VAR_RANGE],
    )
    .unwrap();
    let mut r = rng::stream(4000, 0);
    let clean = generate_rows(&t, &[1.5, -0.3], 10_000, &mut r).unwrap();
    let noisy = add_noise(&clean, 0.1, &mut r);
    let eps: Vec<f64> = noisy.y().iter().zip(clean.y()).map(|(a, b)| a - b).collect();
    let ratio = std_dev(&eps) / std_dev(clean.y());
    let zero = add_noise(&clean, 0.0, &mut r);
    let bit_identical = zero
        .y()
        .iter()
        .zip(clean.y())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && zero == clean;
    outcome(
        (0.08..=0.12).contains(&ratio) && bit_identical,
        format!("rho=0.1 ratio {ratio:.4} (in [0.08, 0.12]) over 10000 rows, rho=0 bit-identical: {bit_identical}"),
    )
}

fn desk_training() -> Outcome {
    let t0 = Instant::now();
    let templates = builtin_templates();
    let cfg = DatasetConfig::default();
    let ds = build_dataset(&templates, &cfg).unwrap();
    let sp = split(&ds, cfg.seed, 0.1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.stimuli[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(&sp.train), pick(&sp.validation));
    let arch = Arch::standard(cfg.seq_len * cfg.vocab.size());
    let tc = TrainConfig {
        epochs: 30,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let out = train(&tr, &va, &arch, cfg.seq_len, &cfg.vocab, &tc, |_| {}).unwrap();
    let rate = parse_rate(&out.final_model, &va, cfg.seq_len, &cfg.vocab).unwrap();
    let losses: Vec<f64> = out.log.rows.iter().map(|r| r.train_loss).collect();
    let first = losses[..10].iter().sum::<f64>() / 10.0;
    let last = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
    let drop = 1.0 - last / first;
    let el = t0.elapsed();
    outcome(
        templates.len() >= 20 && rate >= 0.60 && drop >= 0.5 && within(el, 15 * 60),
        format!(
            "{} templates, {} stimuli, V={}, final held-out parse rate {rate:.3} (>= 0.60), BCE {first:.4} -> {last:.4} (drop {:.1}% >= 50%), {el:.1?} (< 15min)",
            templates.len(),
            ds.stimuli.len(),
            cfg.vocab.size(),
            drop * 100.0
        ),
    )
}

fn first_epoch_windows() -> Outcome {
    let templates = builtin_templates();
    let cfg = DatasetConfig::default();
    let ds = build_dataset(&templates, &cfg).unwrap();
    let sp = split(&ds, cfg.seed, 0.1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.stimuli[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(&sp.train), pick(&sp.validation));
    let arch = Arch::standard(cfg.seq_len * cfg.vocab.size());
    let tc = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = train(&tr, &va, &arch, cfg.seq_len, &cfg.vocab, &tc, |_| {}).unwrap();
    let losses: Vec<f64> = out.log.rows.iter().map(|r| r.train_loss).collect();
    let windows: Vec<f64> = losses
        .chunks_exact(10)
        .map(|w| w.iter().sum::<f64>() / 10.0)
        .collect();
    let pairs = windows.len() - 1;
    let decreasing = windows.windows(2).filter(|w| w[1] < w[0]).count();
    outcome(
        decreasing as f64 >= 0.8 * pairs as f64,
        format!("{decreasing}/{pairs} consecutive 10-batch windows decreasing (>= 80%)"),
    )
}

fn case_study() -> Outcome {
    let t0 = Instant::now();
    let cfg = CaseStudyConfig::default();
    let (report, _) = casestudy::run(&cfg).unwrap();
    let el = t0.elapsed();
    let alpha = report.alpha_within_rate.unwrap_or(0.0);
    outcome(
        report.match_rate >= 0.70 && alpha >= 0.80 && within(el, 10 * 60),
        format!(
            "{} tables, parse rate {:.2}, template match {:.2} (>= 0.70), alpha within {} in {:.2} of matches (>= 0.80), {el:.1?} (< 10min)",
            report.tables.len(),
            report.parse_rate,
            report.match_rate,
            cfg.alpha_tolerance,
            alpha
        ),
    )
}

fn fitter_accuracy() -> Outcome {
    let cfg = FitConfig::default();
    let mut slowest = Duration::ZERO;
    let mut timed = |f: &mut dyn FnMut()| {
        let t = Instant::now();
        f();
        slowest = slowest.max(t.elapsed());
    };

    let line = parse_text("( ( w1 * x1 ) + w2 )").unwrap();
    let rows: Vec<(Vec<f64>, f64)> = (0..50)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / 49.0;
            (vec![x], 2.0 * x + 1.0)
        })
        .collect();
    let table = symreg::datagen::DataTable::from_rows(1, &rows).unwrap();
    let mut line_err = f64::INFINITY;
    timed(&mut || {
        let f = fit_parameters(&line, &table, &cfg).unwrap();
        line_err = (f.params[0] - 2.0).abs().max((f.params[1] - 1.0).abs());
    });

    let templates = builtin_templates();
    let sv = find(&templates, SUBJECTIVE_VALUE).unwrap();
    let mut worst_alpha = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng::stream(7000, seed);
        let scale = r.random_range(0.5..2.0);
        let table = generate_table(sv, &[scale, 0.88], 40, &mut r).unwrap();
        timed(&mut || {
            let f = fit_parameters(&sv.expr, &table, &FitConfig { seed, ..cfg.clone() }).unwrap();
            worst_alpha = worst_alpha.max((f.params[1] - 0.88).abs());
        });
    }
    outcome(
        line_err < 1e-6 && worst_alpha < 0.02 && slowest < Duration::from_secs(1),
        format!(
            "line max err {line_err:.1e} (< 1e-6), alpha=0.88 worst err {worst_alpha:.1e} over 20 seeds (< 0.02), slowest fit {slowest:.1?} (< 1s)"
        ),
    )
}

fn loss_anchors() -> Outcome {
    let mut r = rng::stream(8000, 0);
    let mut half_err = 0.0f64;
    for _ in 0..100 {
        let len = r.random_range(1..2000);
        let t: Vec<f64> = (0..len).map(|_| f64::from(r.random_bool(0.5) as u8)).collect();
        half_err = half_err.max((bce_loss(&vec![0.5; len], &t) - std::f64::consts::LN_2).abs());
    }
    let mut oracle_err = 0.0f64;
    for case in 0..1000 {
        let len = r.random_range(1..200);
        let o: Vec<f64> = (0..len)
            .map(|i| match (case + i) % 50 {
                0 => 0.0,
                1 => 1.0,
                _ => r.random_range(0.0..1.0),
            })
            .collect();
        let t: Vec<f64> = (0..len).map(|_| f64::from(r.random_bool(0.5) as u8)).collect();
        oracle_err = oracle_err.max((bce_loss(&o, &t) - bce_oracle(&o, &t)).abs());
    }
    outcome(
        half_err <= 1e-12 && oracle_err <= 1e-12,
        format!("all-0.5 |BCE - ln 2| {half_err:.1e}, oracle max diff {oracle_err:.1e} over 1000 cases (<= 1e-12)"),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("AC1", "gradient correctness", gradient_check),
        ("AC2", "grammar round-trip and parser fuzzing", grammar_round_trip),
        ("AC3", "encoding invariants", encoding_invariants),
        ("AC4", "noise statistics", noise_statistics),
        ("AC5", "desk-scale training", desk_training),
        ("AC5+", "first-epoch loss windows", first_epoch_windows),
        ("AC6", "case-study recovery", case_study),
        ("AC7", "fitter accuracy", fitter_accuracy),
        ("AC8", "loss anchors", loss_anchors),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} {id} {name}: {}", o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing {}", failed.join(", "));
        std::process::exit(1);
    }
}
