//! Three-way comparison on the synthetic transfer fixture: pseudo-only,
//! task-only and pre-train-then-adapt, scored on task validation accuracy.
//!
//! cargo run --release -p clozezp --example transfer [seed] [entities] [dim] [lr] [epochs] [adapt_lr]
//!
//! Synth knobs come from the environment: PAIRS, DISTRACTORS, TEMPLATES, FILLERS, GAP,
//! PSEUDO_TRIPLES, PATIENCE, ADAPT_PATIENCE, ADAPT_LRS (comma separated), SHOW_LOG.

use std::time::Instant;

use clozezp::reader::{init_params, ReaderConfig};
use clozezp::synth::{SynthConfig, TransferFixture, TransferSizes};
use clozezp::trainer::{accuracy, train, TrainConfig};
use clozezp::vocab::{build_shortlist, map_triple, MappedTriple, Vocabulary};
use clozezp::{exec::Exec, pseudogen::DEFAULT_BLANK};

fn map_all(ts: &[clozezp::pseudogen::Triple], v: &Vocabulary) -> Vec<MappedTriple> {
    ts.iter().map(|t| map_triple(t, v).unwrap()).collect()
}

fn main() {
    let arg = |i: usize, d: f64| {
        std::env::args()
            .nth(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or(d)
    };
    let seed = arg(1, 7.0) as u64;
    let n = arg(2, 8.0) as usize;
    let dim = arg(3, 24.0) as usize;
    let env = |k: &str, d: usize| {
        std::env::var(k)
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(d)
    };
    let synth = SynthConfig {
        entities: n,
        attributes: n,
        pairs_per_doc: env("PAIRS", 3),
        distractors: env("DISTRACTORS", 1),
        templates: env("TEMPLATES", 1),
        gap_template: std::env::var("GAP").unwrap_or_else(|_| SynthConfig::default().gap_template),
        max_fillers: env("FILLERS", 1),
    };
    let sizes = TransferSizes {
        pseudo_train_triples: env("PSEUDO_TRIPLES", 2000),
        ..TransferSizes::default()
    };
    let fx = TransferFixture::build(&synth, &sizes, seed).unwrap();
    let vocab = build_shortlist(fx.all_triples(), 1000, 8, DEFAULT_BLANK);
    let (pt, pv, tt, tv) = (
        map_all(&fx.pseudo_train, &vocab),
        map_all(&fx.pseudo_val, &vocab),
        map_all(&fx.task_train, &vocab),
        map_all(&fx.task_val, &vocab),
    );
    let rc = ReaderConfig::new(dim, dim, vocab.total(), seed);
    let cfg = TrainConfig {
        learning_rate: arg(4, 0.01),
        max_epochs: arg(5, 30.0) as usize,
        patience: Some(env("PATIENCE", 5)),
        rng_seed: seed,
        ..TrainConfig::default()
    };
    let adapt_cfg = TrainConfig {
        learning_rate: arg(6, 0.003),
        ..cfg.clone()
    };
    let start = Instant::now();
    let (pseudo_only, rep) = train(init_params(&rc).unwrap(), &pt, &pv, &cfg).unwrap();
    println!(
        "pretrain epochs {} best {:?} {:.1}s",
        rep.epochs.len(),
        rep.best_val_accuracy,
        start.elapsed().as_secs_f64()
    );
    if std::env::var_os("SHOW_LOG").is_some() {
        print!("{}", rep.to_tsv());
        return;
    }
    let (task_only, _) = train(init_params(&rc).unwrap(), &tt, &tv, &cfg).unwrap();
    let (task_only_slow, _) = train(init_params(&rc).unwrap(), &tt, &tv, &adapt_cfg).unwrap();
    let acc = |p: &clozezp::reader::ReaderParams| accuracy(p, &tv, Exec::Parallel).unwrap();
    println!("pseudo-only {:.3}", acc(&pseudo_only));
    println!(
        "task-only   {:.3} / {:.3}",
        acc(&task_only),
        acc(&task_only_slow)
    );
    let lrs = std::env::var("ADAPT_LRS").unwrap_or_else(|_| adapt_cfg.learning_rate.to_string());
    for lr in lrs.split(',').map(|x| x.parse::<f64>().unwrap()) {
        let c = TrainConfig {
            learning_rate: lr,
            patience: Some(env("ADAPT_PATIENCE", 5)),
            ..adapt_cfg.clone()
        };
        let (adapted, rep) = train(pseudo_only.clone(), &tt, &tv, &c).unwrap();
        println!(
            "adaptation lr {lr}: {:.3} (best epoch {:?} of {})",
            acc(&adapted),
            rep.best_epoch,
            rep.epochs.len()
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
