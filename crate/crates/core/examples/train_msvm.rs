//! Train a standard SVM and the max-decision SVM on the same data and compare
//! how often each puts the target's decision value on top.
//!
//!     cargo run --release --example train_msvm

use osbf::dataset::{synth_dataset, Dataset, SynthConfig};
use osbf::linsvm::{build_train_matrix, train, write_hyperplane, Hyperplane, Loss, SvmConfig};
use osbf::scoring::decision_tensor;

/// Fraction of stimulation sequences whose largest decision value is the target's.
fn top1_rate(h: &Hyperplane, d: &Dataset) -> osbf::Result<f64> {
    let dv = decision_tensor(h, d)?;
    let s = d.shape();
    let mut hits = 0;
    for k in 0..s.n_trials {
        for r in 0..s.n_iterations {
            for t in 0..s.n_levels {
                let seq = dv.sequence(k, r, t);
                let best = (0..seq.len()).fold(0, |b, f| if seq[f] > seq[b] { f } else { b });
                hits += (best == d.truth().target(k, t)) as usize;
            }
        }
    }
    Ok(hits as f64 / s.n_sequences() as f64)
}

fn main() -> osbf::Result<()> {
    let (train_set, test_set) = synth_dataset(&SynthConfig {
        target_shift: 1.5,
        ..SynthConfig::default()
    })?;
    let m = build_train_matrix(&train_set)?;
    println!("{} labeled points, {} max-decision points", m.l1(), m.l2());

    for (name, c2, loss) in [("L1-SVM", 0.0, Loss::L1), ("L2-SVM", 0.0, Loss::L2), ("M-SVM", 1.0, Loss::L1)] {
        let cfg = SvmConfig {
            loss,
            c2,
            ..SvmConfig::default()
        };
        let h = train(&m, &cfg)?;
        let d = h.diagnostics;
        println!(
            "{name:7} epochs {:4}  converged {:5}  dual {:10.4}  top-1 train {:.3}  test {:.3}",
            d.epochs_run,
            d.converged,
            d.dual_objective,
            top1_rate(&h, &train_set)?,
            top1_rate(&h, &test_set)?
        );
        if name == "M-SVM" {
            let mut buf = Vec::new();
            write_hyperplane(&h, &mut buf).expect("in-memory write");
            println!("hyperplane file starts with:\n{}", String::from_utf8_lossy(&buf).lines().take(4).collect::<Vec<_>>().join("\n"));
        }
    }
    Ok(())
}
