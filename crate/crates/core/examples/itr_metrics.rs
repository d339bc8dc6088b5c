//! Bits per selection and information transfer rate for a 6x6 speller with
//! 12 stimuli per iteration and a 250 ms stimulus-onset asynchrony.
//!
//!     cargo run --example itr_metrics

use osbf::eval::{bitrate, itr};

fn main() -> osbf::Result<()> {
    println!("accuracy  bits    iterations  minutes  bit/min");
    for p in [1.0 / 36.0, 0.5, 0.8, 0.95, 1.0] {
        let b = bitrate(36, p)?;
        for iters in [8.0, 4.0, 2.5] {
            let (minutes, rate) = itr(b, 0.25, 12, iters)?;
            println!("{p:8.3}  {b:6.3}  {iters:10.1}  {minutes:7.3}  {rate:7.3}");
        }
    }
    Ok(())
}
