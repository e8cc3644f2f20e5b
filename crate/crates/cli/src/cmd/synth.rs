//! `relm synth`: deterministic synthetic corpus generation.

use relm_core::corpus::{generate_synthetic_corpus, to_jsonl, SynthConfig};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::io::{ensure_dir, write_file};

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let out_dir = cfg.output_dir()?.to_path_buf();

    let synth = SynthConfig {
        classes: cfg.synth.class_specs(),
        negation_rate: cfg.synth.negation_rate,
        vocab_size: cfg.synth.vocab_size,
        n_reports: cfg.synth.n_reports,
        seed,
    };
    let reports = generate_synthetic_corpus(&synth)?;

    ensure_dir(&out_dir)?;
    write_file(&out_dir.join("corpus.jsonl"), &to_jsonl(&reports, false))?;
    write_file(&out_dir.join("labels.jsonl"), &to_jsonl(&reports, true))?;
    cfg.write_effective(&out_dir, "synth")?;

    let n = reports.len() as f64;
    println!("wrote {} reports to {}", reports.len(), out_dir.display());
    for class in &cfg.synth.classes {
        let positives = reports
            .iter()
            .filter(|r| r.labels.get(&class.name) == Some(&1))
            .count();
        println!(
            "  class {}: prevalence {:.3} (target {:.3})",
            class.name,
            positives as f64 / n,
            class.prevalence
        );
    }
    Ok(())
}
