use std::hint::black_box;

use clozezp::exec::Exec;
use clozezp::pseudogen::{self, GenerationConfig, DEFAULT_BLANK};
use clozezp::reader::{init_params, ReaderConfig};
use clozezp::resolver::{self, ResolveConfig};
use clozezp::synth::{pseudo_documents, task_documents, SynthConfig};
use clozezp::trainer::batch_gradients;
use clozezp::vocab::{build_shortlist, map_triple, MappedTriple};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn modes(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let docs = pseudo_documents(200, &cfg, 3, "p").unwrap();
    let gen = GenerationConfig {
        triples_per_document: 4,
        rng_seed: 3,
        ..GenerationConfig::default()
    };
    let (triples, _) = pseudogen::generate(&docs, &gen, Exec::Sequential);
    let (corpus, instances) = task_documents(64, &cfg, 3, "t").unwrap();
    let vocab = build_shortlist(&triples, 1000, 8, DEFAULT_BLANK);
    let data: Vec<MappedTriple> = triples
        .iter()
        .map(|t| map_triple(t, &vocab).unwrap())
        .collect();
    let batch: Vec<&MappedTriple> = data.iter().take(32).collect();
    let params = init_params(&ReaderConfig::new(32, 32, vocab.total(), 3)).unwrap();
    let rcfg = ResolveConfig {
        restrict_to_context: true,
        blank_symbol: DEFAULT_BLANK.to_string(),
    };

    let mut g = c.benchmark_group("batch_gradients");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| batch_gradients(&params, black_box(&batch), exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("generate");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| pseudogen::generate(black_box(&docs), &gen, exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("resolve");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                resolver::resolve_all(black_box(&instances), &corpus, &params, &vocab, &rcfg, exec)
                    .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = modes
}
criterion_main!(benches);
