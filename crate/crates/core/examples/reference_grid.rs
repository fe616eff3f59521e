//! Print the 5 x 5 AUC grid for the reference desk-scale configuration.
//!
//! `cargo run --release -p mia-core --example reference_grid -- [seed] [spread] [center_scale] [epochs]`

use std::time::Instant;

use mia_core::pipeline::{run_pipeline, DatasetSource, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, default: &str| args.get(k).cloned().unwrap_or_else(|| default.to_string());
    let dir = tempfile_dir();
    let mut cfg = PipelineConfig {
        epochs: arg(3, "200").parse()?,
        out_dir: dir.clone(),
        seed: arg(0, "1").parse()?,
        ..PipelineConfig::default()
    };
    if let DatasetSource::Synth(s) = &mut cfg.dataset {
        s.cluster_spread = arg(1, "1.0").parse()?;
        s.class_center_scale = arg(2, "4.0").parse()?;
    }
    let start = Instant::now();
    let report = run_pipeline(&cfg, 1)?;
    println!("{:<11} {:<10} {:>7} {:>9} {:>10}", "attack", "score", "auc", "tpr@0.01", "tpr@0.001");
    for row in &report.rows {
        println!(
            "{:<11} {:<10} {:>7.4} {:>9.4} {:>10.4}",
            row.attack.name(),
            row.score.name(),
            row.metrics.auc,
            row.metrics.tpr_at_fpr[0].1,
            row.metrics.tpr_at_fpr[1].1
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mia-reference-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
