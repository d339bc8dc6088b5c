//! Generate a planted-direction dataset, write it in the text format, read it
//! back and apply the two preprocessing steps.
//!
//!     cargo run --example synth_dataset -- [out_dir]

use std::path::PathBuf;

use osbf::dataset::{decimate, load_dataset, save_dataset, select_channels, synth_dataset, SynthConfig};

fn main() -> osbf::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let cfg = SynthConfig {
        n_levels: 2,
        n_channels: 4,
        feature_dim: 32,
        ..SynthConfig::default()
    };
    let (train, test) = synth_dataset(&cfg)?;
    let path = out.join("synth_train.txt");
    save_dataset(&train, &path)?;
    let back = load_dataset(&path)?;
    assert_eq!(back, train);
    println!("{}: {:?}, feature dim {}", path.display(), back.shape(), back.feature_dim());
    println!("test split: {} trials", test.n_trials());

    let first = train.truth().target(0, 0);
    println!("trial 1 targets: level 0 -> flash {first}, level 1 -> flash {}", train.truth().target(0, 1));

    let two_channels = select_channels(&train, &[0, 2])?;
    let thinned = decimate(&two_channels, 3)?;
    println!(
        "channels [0, 2] then every 3rd sample: {} x {} -> {} features",
        thinned.meta.n_channels,
        thinned.meta.samples_per_channel,
        thinned.feature_dim()
    );
    Ok(())
}
