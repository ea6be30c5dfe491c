//! Writes the small corpus bundled with the CLI tests.
//!
//! cargo run -p clozezp --example make_fixture -- <out_dir>

use std::fs;
use std::path::PathBuf;

use clozezp::synth::{pseudo_corpus, task_corpus, SynthConfig};

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/cli/tests/fixtures".into()),
    );
    fs::create_dir_all(&dir).expect("create output dir");
    let cfg = SynthConfig::default();
    fs::write(dir.join("pseudo.conll"), pseudo_corpus(60, &cfg, 5, "p"))
        .expect("write pseudo corpus");
    let (corpus, azp) = task_corpus(20, &cfg, 5, "t");
    fs::write(dir.join("task.conll"), corpus).expect("write task corpus");
    fs::write(dir.join("task.azp"), azp).expect("write azp file");
}
