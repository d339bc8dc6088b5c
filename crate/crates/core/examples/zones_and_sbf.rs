//! Decision values, training quartiles, zone labels and the heuristic
//! score-based decision.
//!
//!     cargo run --release --example zones_and_sbf

use osbf::dataset::{synth_dataset, SynthConfig};
use osbf::eval::predict_scorebased;
use osbf::linsvm::{build_train_matrix, train, SvmConfig};
use osbf::scoreopt::Mode;
use osbf::scoring::{assign_zones, cumulative_scores, decision_tensor, quartiles, sbf_heuristic_profile, Grouping, Zone};

fn main() -> osbf::Result<()> {
    let (train_set, test_set) = synth_dataset(&SynthConfig {
        target_shift: 2.0,
        ..SynthConfig::default()
    })?;
    let h = train(&build_train_matrix(&train_set)?, &SvmConfig::default())?;
    let dv_train = decision_tensor(&h, &train_set)?;
    let q = quartiles(&dv_train, Grouping::PerLevel)?;
    println!("training quartiles {:?}", q.groups[0]);

    let z = assign_zones(&decision_tensor(&h, &test_set)?, &q)?;
    let mut counts = [0usize; 5];
    for zone in &z.zones {
        counts[zone.index()] += 1;
    }
    for zone in Zone::ALL {
        println!("zone {zone}: {}", counts[zone.index()]);
    }

    let p = sbf_heuristic_profile();
    let cum = cumulative_scores(&z, &p, 0, 0, z.shape.n_iterations)?;
    println!("trial 1 cumulative scores {cum:?}, target {}", test_set.truth().target(0, 0));

    let preds = predict_scorebased(&z, &p, Mode::NoStop, test_set.truth())?;
    let acc = preds.iter().filter(|p| p.correct).count() as f64 / preds.len() as f64;
    println!("heuristic profile {:?}, accuracy {acc:.3}", p.scores);

    let mut csv = Vec::new();
    z.write_csv(&mut csv).expect("in-memory write");
    println!("{}", String::from_utf8_lossy(&csv).lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}
