//! One line per acceptance criterion. Set `OSBF_DATA` to a dataset tree to run
//! the reproduction criterion on real recordings instead of stand-in data.

use std::process::ExitCode;

use osbf::selftest::{run_selftest, SelftestOptions};

fn main() -> ExitCode {
    let opts = SelftestOptions {
        data_dir: std::env::var_os("OSBF_DATA").map(Into::into),
        ..SelftestOptions::default()
    };
    let results = run_selftest(&opts);
    for r in &results {
        println!("{r}");
    }
    // The bitrate check must reject an implementation that drops the error term.
    let broken = osbf::selftest::criterion_6(|n, p| Ok((n as f64).log2() + p * p.log2()));
    println!("mutation check: criterion 6 {} on a broken bitrate", if broken.passed { "accepts (BAD)" } else { "rejects" });

    let failed = results.iter().filter(|r| !r.passed).count() + broken.passed as usize;
    let skipped = results.iter().filter(|r| r.skipped).count();
    let passed = results.iter().filter(|r| r.passed && !r.skipped).count();
    println!("acceptance: {passed} passed, {skipped} skipped, {} failed of {}", results.len() - passed - skipped, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
