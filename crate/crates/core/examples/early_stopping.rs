//! Early stopping at test time: how many iterations each trial uses with the
//! heuristic and the optimized profiles.
//!
//!     cargo run --release --example early_stopping

use osbf::dataset::{synth_dataset, SynthConfig};
use osbf::eval::{predict_scorebased, EvalReport, Method};
use osbf::linsvm::{build_train_matrix, train, SvmConfig};
use osbf::pipeline::{timing_for, zone_stage};
use osbf::scoreopt::{optimize_earlystop, LatticeBounds, Mode};
use osbf::scoring::sbf_heuristic_profile;

fn main() -> osbf::Result<()> {
    let (train_set, test_set) = synth_dataset(&SynthConfig {
        target_shift: 1.2,
        n_iterations: 10,
        ..SynthConfig::default()
    })?;
    let h = train(&build_train_matrix(&train_set)?, &SvmConfig::default())?;
    let zones = zone_stage(None, &h, &train_set, &test_set)?;
    let bounds = LatticeBounds::with_default_delta(-10, 10, 10)?;
    let opt = optimize_earlystop(&zones.z_train, train_set.truth(), &bounds, &timing_for(&train_set))?;

    for (method, profile) in [(Method::Sbf, sbf_heuristic_profile()), (Method::Osbf, opt.profile)] {
        let preds = predict_scorebased(&zones.z_test, &profile, Mode::EarlyStop, test_set.truth())?;
        let mut hist = [0usize; 11];
        for p in &preds {
            hist[p.stop_iteration] += 1;
        }
        let fallbacks = preds.iter().filter(|p| p.no_stop_fallback).count();
        let rep = EvalReport::build(method, Mode::EarlyStop, preds, &test_set.meta, test_set.truth())?;
        println!(
            "{:4} scores {:?} delta {:2}: accuracy {:.3}, mean iterations {:.2}, ITR {:.2} bit/min, {fallbacks} fallbacks",
            method.as_str(),
            profile.scores,
            profile.delta,
            rep.accuracy,
            rep.mean_iterations,
            rep.itr_bits_per_min
        );
        println!("     stops per iteration 1..10: {:?}", &hist[1..]);
    }
    Ok(())
}
