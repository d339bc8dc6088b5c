//! Build the per-dataset comparison tables from recordings laid out as
//! `<root>/<dataset>/<subject>/{train,test}.txt`. Without a root, a small
//! generated tree is used so the layout can be inspected.
//!
//!     cargo run --release --example reproduce_tables -- [root] [out_dir] [decimation]

use std::path::PathBuf;

use osbf::harness::{build_tables, reference_report, run_harness, write_tables, HarnessConfig};
use osbf::selftest::write_standin_tree;

fn main() -> osbf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let root = match args.next() {
        Some(r) => PathBuf::from(r),
        None => {
            let d = std::env::temp_dir().join("osbf-standin");
            write_standin_tree(&d, 1)?;
            println!("no data root given; using generated stand-in data in {}", d.display());
            d
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("osbf-tables"));
    let mut cfg = HarnessConfig::new(&root);
    if let Some(k) = args.next() {
        cfg.preprocessing.decimation = k.parse().map_err(|_| osbf::Error::Config(format!("bad decimation {k:?}")))?;
    }
    let results = run_harness(&cfg)?;
    let tables = build_tables(&results)?;
    for t in &tables {
        println!("{}", t.to_markdown());
    }
    println!("{}", reference_report(&tables));
    write_tables(&out, &tables, &results)?;
    println!("tables written to {}", out.display());
    Ok(())
}
