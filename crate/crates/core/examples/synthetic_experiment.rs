//! Trains on synthetic writers and prints the evaluation table per seed.
//!
//! Usage: `cargo run --release -p glyphforge --example synthetic_experiment [seeds]`

use glyphforge::config::ProjectConfig;
use glyphforge::pipeline::{run_corpus, Lexicon};
use glyphforge::synth::{generate_corpus, CorpusSpec};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    for seed in 0..seeds {
        let corpus = generate_corpus(&CorpusSpec { seed, ..CorpusSpec::default() });
        let config = ProjectConfig { seed, ..ProjectConfig::default() };
        let run = run_corpus(&corpus, &config, &Lexicon::default()).expect("synthetic run");
        println!("seed {seed}\n{}", run.report.render_text());
    }
}
