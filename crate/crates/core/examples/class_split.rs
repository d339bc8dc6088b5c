//! Compare a standard L2-SVM with the M-SVM subject by subject and group the
//! subjects by which one did better.
//!
//!     cargo run --release --example class_split

use std::collections::BTreeMap;

use osbf::dataset::{synth_dataset, SynthConfig};
use osbf::eval::{class_split, Method};
use osbf::linsvm::{Loss, SvmConfig};
use osbf::pipeline::{evaluate_subject, optimize_subject, train_subject, zone_stage, PipelineConfig, SubjectSpec};
use osbf::scoreopt::Mode;

fn main() -> osbf::Result<()> {
    let mut cfg: PipelineConfig = toml::from_str("subjects = []\n[scoreopt]\nmodes = [\"nostop\"]\n[eval]\nmethods = [\"osbf\"]\n")
        .map_err(|e| osbf::Error::Config(e.to_string()))?;
    let mut std_reports = BTreeMap::new();
    let mut msvm_reports = BTreeMap::new();
    for s in 0..6u64 {
        let synth = SynthConfig {
            target_shift: 0.6 + 0.15 * s as f64,
            n_iterations: 5,
            seed: 100 + s,
            ..SynthConfig::default()
        };
        cfg.subjects = vec![SubjectSpec {
            name: format!("s{:02}", s + 1),
            train: None,
            test: None,
            synth: Some(synth.clone()),
        }];
        let (train_set, test_set) = synth_dataset(&synth)?;
        for (c2, loss, out) in [(0.0, Loss::L2, &mut std_reports), (1.0, Loss::L1, &mut msvm_reports)] {
            cfg.svm = SvmConfig { loss, c2, ..SvmConfig::default() };
            let h = train_subject(&cfg.svm, &train_set)?;
            let zones = zone_stage(None, &h, &train_set, &test_set)?;
            let opts = optimize_subject(&cfg, &train_set, &zones.z_train)?;
            let rep = evaluate_subject(&cfg, &h, &test_set, &zones, &opts)?
                .into_iter()
                .find(|r| r.method == Method::Osbf && r.mode == Mode::NoStop)
                .expect("configured method");
            out.insert(format!("s{:02}", s + 1), rep);
        }
    }
    for (s, r) in &std_reports {
        println!("{s}: L2-SVM {:.3}  M-SVM {:.3}", r.accuracy, msvm_reports[s].accuracy);
    }
    let split = class_split(&std_reports, &msvm_reports)?;
    println!("class 1 (L2-SVM better): {:?} means {:?} / {:?}", split.class1, split.class1_mean_std, split.class1_mean_msvm);
    println!("class 2 (M-SVM better):  {:?} means {:?} / {:?}", split.class2, split.class2_mean_std, split.class2_mean_msvm);
    println!("ties: {:?}; overall {:.3} / {:.3}", split.equal, split.total_mean_std, split.total_mean_msvm);
    Ok(())
}
