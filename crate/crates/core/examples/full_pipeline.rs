//! Run the config-driven pipeline and print the aggregate table.
//!
//!     cargo run --release --example full_pipeline -- [config.toml] [out_dir]

use std::path::PathBuf;

use osbf::eval::write_summary_csv;
use osbf::pipeline::{run, Overrides, PipelineConfig};

fn main() -> osbf::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/synth.toml")));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("osbf-full-pipeline"));
    let mut cfg = PipelineConfig::load(&config)?;
    cfg.apply(&Overrides {
        out_dir: Some(out.clone()),
        ..Default::default()
    });
    let result = run(&cfg)?;
    for rep in &result.reports {
        for o in &rep.score_optimization {
            println!(
                "{} {}: scores {:?} delta {} objective {:.4} (heuristic {:.4})",
                rep.subject,
                o.result.mode.as_str(),
                o.result.profile.scores,
                o.result.profile.delta,
                o.result.objective,
                o.sbf_objective
            );
        }
    }
    write_summary_csv(&result.summary_rows(), &mut std::io::stdout().lock()).expect("stdout");
    println!("reports in {}", out.display());
    Ok(())
}
