use osbf::dataset::{decimate, read_dataset, select_channels, synth_dataset, write_dataset, SynthConfig};
use osbf::eval::{bitrate, predict_dv_med, predict_erp_avg, EvalReport, Method};
use osbf::linsvm::{build_train_matrix, dual_objective, kkt_residual, train_traced, DualState, Loss, SvmConfig};
use osbf::scoreopt::{objective, optimize_mode, LatticeBounds, Mode, TimingParams, TIE_EPS};
use osbf::scoring::{decision_tensor, ScoreProfile, Zone, ZoneTensor};
use osbf::dataset::{Shape, Truth};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_synth() -> impl Strategy<Value = SynthConfig> {
    (1usize..4, 1usize..4, 2usize..5, 1usize..3, 1usize..4, 1usize..4, any::<u64>()).prop_map(
        |(n_trials, n_iterations, n_flashes, n_levels, n_channels, spc, seed)| SynthConfig {
            n_trials,
            n_test_trials: None,
            n_iterations,
            n_flashes,
            n_levels,
            feature_dim: n_channels * spc,
            n_channels,
            target_shift: 1.0,
            noise_sd: 1.0,
            soa_seconds: 0.25,
            seed,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_text_round_trip(cfg in small_synth()) {
        let (train, test) = synth_dataset(&cfg).unwrap();
        for d in [train, test] {
            let mut buf = Vec::new();
            write_dataset(&d, &mut buf).unwrap();
            let back = read_dataset(&buf[..]).unwrap();
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn decimation_commutes_with_channel_selection(cfg in small_synth(), k in 1usize..4, mask in 1u8..16) {
        let (d, _) = synth_dataset(&cfg).unwrap();
        let keep: Vec<usize> = (0..d.meta.n_channels).filter(|c| mask & (1 << c) != 0).collect();
        prop_assume!(!keep.is_empty() && k <= d.meta.samples_per_channel);
        let a = select_channels(&decimate(&d, k).unwrap(), &keep).unwrap();
        let b = decimate(&select_channels(&d, &keep).unwrap(), k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bitrate_is_monotone_above_chance(n in 2usize..64, p in 0.0f64..1.0, dp in 0.0f64..0.5) {
        let p = 1.0 / n as f64 + p * (1.0 - 1.0 / n as f64);
        let q = (p + dp).min(1.0);
        prop_assert!(bitrate(n, q).unwrap() >= bitrate(n, p).unwrap() - 1e-12);
        prop_assert!(bitrate(n, p).unwrap() <= (n as f64).log2() + 1e-12);
    }
}

#[test]
fn bitrate_rejects_degenerate_alphabets() {
    assert!(bitrate(1, 1.0).is_err());
    assert!(bitrate(36, 1.5).is_err());
}

#[test]
fn dual_iterates_stay_feasible_and_reach_tolerance() {
    let (d, _) = synth_dataset(&SynthConfig {
        n_trials: 6,
        target_shift: 1.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let m = build_train_matrix(&d).unwrap();
    for (loss, c2) in [(Loss::L1, 0.0), (Loss::L1, 1.0), (Loss::L2, 0.5)] {
        let cfg = SvmConfig {
            loss,
            c1: 0.5,
            c2,
            tol: 1e-6,
            max_epochs: 20_000,
            ..SvmConfig::default()
        };
        let mut last = f64::INFINITY;
        let out = train_traced(&m, &cfg, |_, alpha| {
            assert!(alpha.iter().all(|&a| a >= 0.0));
            if loss == Loss::L1 {
                assert!(alpha[..m.l1()].iter().all(|&a| a <= cfg.c1 + 1e-12));
                assert!(alpha[m.l1()..].iter().all(|&a| a <= cfg.c2 + 1e-12));
            }
            let s = DualState::from_alpha(&m, &cfg, alpha.to_vec()).unwrap();
            let obj = dual_objective(&m, &s, &cfg).unwrap();
            // exact coordinate minimization never increases the dual
            assert!(obj <= last + 1e-9, "{obj} > {last}");
            last = obj;
        })
        .unwrap();
        assert!(out.hyperplane.diagnostics.converged);
        assert!(kkt_residual(&m, &cfg, &out.state) <= cfg.tol);
        let fresh = DualState::from_alpha(&m, &cfg, out.state.alpha.clone()).unwrap();
        for (a, b) in fresh.w_running.iter().zip(&out.state.w_running) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn erp_averaging_agrees_with_decision_value_averaging() {
    let (train, test) = synth_dataset(&SynthConfig {
        n_levels: 2,
        target_shift: 0.7,
        ..SynthConfig::default()
    })
    .unwrap();
    let h = osbf::linsvm::train(&build_train_matrix(&train).unwrap(), &SvmConfig::default()).unwrap();
    let dv = decision_tensor(&h, &test).unwrap();
    let a = predict_dv_med(&dv, &test).unwrap();
    let b = predict_erp_avg(&h, &test).unwrap();
    assert_eq!(
        a.iter().map(|p| p.symbol).collect::<Vec<_>>(),
        b.iter().map(|p| p.symbol).collect::<Vec<_>>()
    );
    let rep = EvalReport::build(Method::DvMed, Mode::NoStop, a, &test.meta, test.truth()).unwrap();
    for lvl in &rep.per_level_accuracy {
        assert!(*lvl >= rep.accuracy - 1e-12);
    }
}

fn random_zones(rng: &mut ChaCha8Rng) -> (ZoneTensor, Truth, TimingParams) {
    let shape = Shape {
        n_trials: rng.random_range(1..=3),
        n_iterations: rng.random_range(1..=3),
        n_levels: rng.random_range(1..=2),
        n_flashes: rng.random_range(2..=4),
    };
    let targets = (0..shape.n_trials * shape.n_levels)
        .map(|_| rng.random_range(0..shape.n_flashes))
        .collect();
    let truth = Truth::new(shape.n_trials, shape.n_levels, targets).unwrap();
    let zones = (0..shape.len()).map(|_| Zone::ALL[rng.random_range(0..5)]).collect();
    let tp = TimingParams {
        soa_seconds: 0.25,
        flashes_per_iteration: shape.n_flashes * shape.n_levels,
        n_trials: shape.n_trials,
        n_iterations: shape.n_iterations,
    };
    (ZoneTensor::new(shape, zones).unwrap(), truth, tp)
}

/// Best value over every admissible profile, scanning in lexicographic order.
fn exhaustive(mode: Mode, z: &ZoneTensor, truth: &Truth, b: &LatticeBounds, tp: &TimingParams) -> (ScoreProfile, f64) {
    let mut best: Option<(ScoreProfile, f64)> = None;
    let r = b.l..=b.u;
    for a in r.clone() {
        for bb in r.clone() {
            for c in r.clone() {
                for d in r.clone() {
                    for e in r.clone() {
                        for delta in 1..=b.delta_max {
                            let Ok(p) = ScoreProfile::new([a, bb, c, d, e], delta, (b.l, b.u)) else {
                                continue;
                            };
                            let v = objective(mode, z, truth, &p, tp).unwrap();
                            if best.is_none_or(|(_, bv)| v > bv + TIE_EPS) {
                                best = Some((p, v));
                            }
                        }
                    }
                }
            }
        }
    }
    best.unwrap()
}

#[test]
fn branch_and_bound_matches_exhaustive_scan_on_wider_lattices() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..12 {
        let (z, truth, tp) = random_zones(&mut rng);
        let b = LatticeBounds::with_default_delta(-4, 4, z.shape.n_iterations).unwrap();
        for mode in [Mode::NoStop, Mode::EarlyStop] {
            let got = optimize_mode(mode, &z, &truth, &b, &tp).unwrap();
            let (p, v) = exhaustive(mode, &z, &truth, &b, &tp);
            assert!((got.objective - v).abs() <= 1e-9, "{mode:?}: {} vs {v}", got.objective);
            assert_eq!(got.profile, p, "{mode:?}");
            assert!(b.admits(&got.profile));
        }
    }
}
