//! Select zone scores and the stopping threshold on training data for both
//! protocols, then audit the optimum against the integer program.
//!
//!     cargo run --release --example optimize_scores

use osbf::dataset::{synth_dataset, SynthConfig};
use osbf::linsvm::{build_train_matrix, train, SvmConfig};
use osbf::pipeline::{timing_for, zone_stage};
use osbf::scoreopt::{audit_constraints, derive_binaries, objective, optimize_mode, LatticeBounds, Mode};
use osbf::scoring::sbf_heuristic_profile;

fn main() -> osbf::Result<()> {
    let (train_set, test_set) = synth_dataset(&SynthConfig {
        target_shift: 1.5,
        ..SynthConfig::default()
    })?;
    let h = train(&build_train_matrix(&train_set)?, &SvmConfig::default())?;
    let zones = zone_stage(None, &h, &train_set, &test_set)?;
    let bounds = LatticeBounds::with_default_delta(-10, 10, train_set.shape().n_iterations)?;
    let tp = timing_for(&train_set);
    let truth = train_set.truth();

    for mode in [Mode::NoStop, Mode::EarlyStop] {
        let r = optimize_mode(mode, &zones.z_train, truth, &bounds, &tp)?;
        let base = objective(mode, &zones.z_train, truth, &sbf_heuristic_profile(), &tp)?;
        println!(
            "{:9} scores {:?} delta {:3} objective {:9.4} (heuristic {:9.4}), {} nodes, {:.1} ms",
            mode.as_str(),
            r.profile.scores,
            r.profile.delta,
            r.objective,
            base,
            r.nodes_explored,
            r.wall_time_ms
        );
        for lvl in &r.per_level {
            println!("          level {} error rate {:.3}", lvl.level, lvl.err_rate);
        }
        let bin = derive_binaries(mode, &zones.z_train, truth, &r.profile)?;
        let violations = audit_constraints(mode, &zones.z_train, truth, &r.profile, &bounds, &bin);
        println!("          constraint audit: {} violations", violations.len());
    }
    Ok(())
}
