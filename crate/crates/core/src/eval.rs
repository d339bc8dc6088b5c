//! Test-time decision rules and speller metrics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ProtocolMeta, Shape, Truth};
use crate::error::{Error, Result};
use crate::linsvm::Hyperplane;
use crate::scoreopt::Mode;
use crate::scoring::{DvTensor, ScoreProfile, ZoneTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DvMed,
    ErpAvg,
    Sbf,
    Osbf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DvMed, Method::ErpAvg, Method::Sbf, Method::Osbf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::DvMed => "dv_med",
            Method::ErpAvg => "erp_avg",
            Method::Sbf => "sbf",
            Method::Osbf => "osbf",
        }
    }

    /// Score-based methods honour the stopping mode; the others always use
    /// every iteration.
    pub fn is_score_based(&self) -> bool {
        matches!(self, Method::Sbf | Method::Osbf)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Decision for one trial at one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelDecision {
    pub flash: usize,
    /// 1-based iteration at which the decision was taken.
    pub stop: usize,
    /// Early stopping never triggered and the decision fell back to the last
    /// iteration.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPrediction {
    pub trial: usize,
    /// Predicted flash per level.
    pub flashes: Vec<usize>,
    pub level_stops: Vec<usize>,
    /// Iterations consumed by the trial: the latest stop over its levels.
    pub stop_iteration: usize,
    pub symbol: usize,
    pub correct: bool,
    pub no_stop_fallback: bool,
}

/// Combines level decisions laid out as `decisions[t * n_trials + k]`.
fn combine(decisions: &[LevelDecision], shape: Shape, truth: &Truth) -> Vec<TrialPrediction> {
    (0..shape.n_trials)
        .map(|k| {
            let levels: Vec<LevelDecision> = (0..shape.n_levels).map(|t| decisions[t * shape.n_trials + k]).collect();
            let flashes: Vec<usize> = levels.iter().map(|d| d.flash).collect();
            TrialPrediction {
                trial: k,
                symbol: flashes.iter().fold(0, |acc, &f| acc * shape.n_flashes + f),
                correct: flashes.iter().enumerate().all(|(t, &f)| truth.target(k, t) == f),
                level_stops: levels.iter().map(|d| d.stop).collect(),
                stop_iteration: levels.iter().map(|d| d.stop).max().unwrap_or(shape.n_iterations),
                no_stop_fallback: levels.iter().any(|d| d.fallback),
                flashes,
            }
        })
        .collect()
}

/// Index of the largest value; ties go to the smallest index.
fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_truth(shape: Shape, truth: &Truth) -> Result<()> {
    if truth.n_trials() != shape.n_trials || truth.n_levels() != shape.n_levels {
        return Err(Error::Invariant("truth map does not match the tensor shape".into()));
    }
    Ok(())
}

/// Averages decision values over iterations and picks the largest mean.
pub fn predict_dv_med(dv: &DvTensor, d: &Dataset) -> Result<Vec<TrialPrediction>> {
    let shape = d.shape();
    if dv.shape != shape {
        return Err(Error::Invariant("decision tensor does not cover the dataset".into()));
    }
    let n_r = shape.n_iterations;
    let mut decisions = Vec::with_capacity(shape.n_trials * shape.n_levels);
    let mut mean = vec![0.0; shape.n_flashes];
    for t in 0..shape.n_levels {
        for k in 0..shape.n_trials {
            mean.iter_mut().for_each(|m| *m = 0.0);
            for r in 0..n_r {
                for (m, v) in mean.iter_mut().zip(dv.sequence(k, r, t)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n_r as f64);
            decisions.push(LevelDecision {
                flash: argmax(&mean),
                stop: n_r,
                fallback: false,
            });
        }
    }
    Ok(combine(&decisions, shape, d.truth()))
}

/// Averages the feature vectors over iterations, then classifies the means.
pub fn predict_erp_avg(h: &Hyperplane, d: &Dataset) -> Result<Vec<TrialPrediction>> {
    if h.dim() != d.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: d.feature_dim(),
        });
    }
    let shape = d.shape();
    let n_r = shape.n_iterations;
    let mut decisions = Vec::with_capacity(shape.n_trials * shape.n_levels);
    let mut avg = vec![0.0; d.feature_dim()];
    for t in 0..shape.n_levels {
        for k in 0..shape.n_trials {
            let scores: Vec<f64> = (0..shape.n_flashes)
                .map(|f| {
                    avg.iter_mut().for_each(|a| *a = 0.0);
                    for r in 0..n_r {
                        for (a, x) in avg.iter_mut().zip(&d.sequence(k, r, t)[f].features) {
                            *a += x;
                        }
                    }
                    avg.iter_mut().for_each(|a| *a /= n_r as f64);
                    h.eval_unchecked(&avg)
                })
                .collect();
            decisions.push(LevelDecision {
                flash: argmax(&scores),
                stop: n_r,
                fallback: false,
            });
        }
    }
    Ok(combine(&decisions, shape, d.truth()))
}

/// Decision for one (trial, level) from cumulative zone scores.
pub fn scorebased_decision(z: &ZoneTensor, p: &ScoreProfile, mode: Mode, trial: usize, level: usize) -> LevelDecision {
    let shape = z.shape;
    let mut cum = vec![0i64; shape.n_flashes];
    for r in 0..shape.n_iterations {
        for (c, &zone) in cum.iter_mut().zip(z.sequence(trial, r, level)) {
            *c += p.score(zone) as i64;
        }
        if mode == Mode::EarlyStop {
            let leader = argmax(&cum);
            let runner_up = cum
                .iter()
                .enumerate()
                .filter(|&(f, _)| f != leader)
                .map(|(_, &c)| c)
                .max()
                .unwrap_or(i64::MIN);
            if cum[leader] - runner_up >= p.delta as i64 {
                return LevelDecision {
                    flash: leader,
                    stop: r + 1,
                    fallback: false,
                };
            }
        }
    }
    LevelDecision {
        flash: argmax(&cum),
        stop: shape.n_iterations,
        fallback: mode == Mode::EarlyStop,
    }
}

/// Score-based prediction with or without early stopping. Untriggered trials
/// are classified at the last iteration and flagged.
pub fn predict_scorebased(z: &ZoneTensor, p: &ScoreProfile, mode: Mode, truth: &Truth) -> Result<Vec<TrialPrediction>> {
    p.validate()?;
    check_truth(z.shape, truth)?;
    let shape = z.shape;
    let mut decisions = Vec::with_capacity(shape.n_trials * shape.n_levels);
    for t in 0..shape.n_levels {
        for k in 0..shape.n_trials {
            decisions.push(scorebased_decision(z, p, mode, k, t));
        }
    }
    Ok(combine(&decisions, shape, truth))
}

/// Bits per selection among `n_symbols` at accuracy `p`.
pub fn bitrate(n_symbols: usize, p: f64) -> Result<f64> {
    if n_symbols < 2 {
        return Err(Error::Numeric(format!("bitrate needs at least 2 symbols, got {n_symbols}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Numeric(format!("accuracy {p} outside [0, 1]")));
    }
    let n = n_symbols as f64;
    let hit = if p > 0.0 { p * p.log2() } else { 0.0 };
    let miss = if p < 1.0 { (1.0 - p) * ((1.0 - p) / (n - 1.0)).log2() } else { 0.0 };
    Ok(n.log2() + hit + miss)
}

/// Trial duration in minutes and bits per minute.
pub fn itr(b_bits: f64, soa: f64, f_s: usize, mean_iters: f64) -> Result<(f64, f64)> {
    let duration = soa * f_s as f64 * mean_iters / 60.0;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Numeric(format!(
            "trial duration must be positive (soa {soa}, f_s {f_s}, mean iterations {mean_iters})"
        )));
    }
    Ok((duration, b_bits / duration))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub mode: Mode,
    pub accuracy: f64,
    pub per_level_accuracy: Vec<f64>,
    pub mean_iterations: f64,
    pub bitrate_bits: f64,
    pub trial_duration_min: f64,
    pub itr_bits_per_min: f64,
    pub per_trial: Vec<TrialPrediction>,
}

impl EvalReport {
    pub fn build(method: Method, mode: Mode, per_trial: Vec<TrialPrediction>, meta: &ProtocolMeta, truth: &Truth) -> Result<Self> {
        if per_trial.is_empty() {
            return Err(Error::Invariant("no trials to evaluate".into()));
        }
        let n = per_trial.len() as f64;
        let accuracy = per_trial.iter().filter(|p| p.correct).count() as f64 / n;
        let per_level_accuracy = (0..truth.n_levels())
            .map(|t| per_trial.iter().filter(|p| p.flashes[t] == truth.target(p.trial, t)).count() as f64 / n)
            .collect();
        let mean_iterations = per_trial.iter().map(|p| p.stop_iteration as f64).sum::<f64>() / n;
        let bitrate_bits = bitrate(meta.n_symbols, accuracy)?;
        let (trial_duration_min, itr_bits_per_min) =
            itr(bitrate_bits, meta.soa_seconds, meta.flashes_per_iteration, mean_iterations)?;
        Ok(EvalReport {
            method,
            mode,
            accuracy,
            per_level_accuracy,
            mean_iterations,
            bitrate_bits,
            trial_duration_min,
            itr_bits_per_min,
            per_trial,
        })
    }
}

/// One line of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub subject: String,
    pub method: Method,
    pub mode: Mode,
    pub accuracy: f64,
    pub mean_iters: f64,
    pub bitrate: f64,
    pub duration_min: f64,
    pub itr: f64,
}

impl SummaryRow {
    pub fn from_report(dataset: &str, subject: &str, r: &EvalReport) -> Self {
        SummaryRow {
            dataset: dataset.to_string(),
            subject: subject.to_string(),
            method: r.method,
            mode: r.mode,
            accuracy: r.accuracy,
            mean_iters: r.mean_iterations,
            bitrate: r.bitrate_bits,
            duration_min: r.trial_duration_min,
            itr: r.itr_bits_per_min,
        }
    }
}

pub const SUMMARY_HEADER: &str = "dataset,subject,method,mode,accuracy,mean_iters,bitrate,duration_min,itr";

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.subject,
            r.method.as_str(),
            r.mode.as_str(),
            r.accuracy,
            r.mean_iters,
            r.bitrate,
            r.duration_min,
            r.itr
        )?;
    }
    Ok(())
}

/// Subjects grouped by which classifier did better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    /// Standard SVM strictly better.
    pub class1: Vec<String>,
    /// M-SVM strictly better.
    pub class2: Vec<String>,
    pub equal: Vec<String>,
    pub class1_mean_std: Option<f64>,
    pub class1_mean_msvm: Option<f64>,
    pub class2_mean_std: Option<f64>,
    pub class2_mean_msvm: Option<f64>,
    pub total_mean_std: f64,
    pub total_mean_msvm: f64,
}

fn mean_of(subjects: &[String], acc: &BTreeMap<String, f64>) -> Option<f64> {
    (!subjects.is_empty()).then(|| subjects.iter().map(|s| acc[s]).sum::<f64>() / subjects.len() as f64)
}

/// Splits subjects by standard-SVM versus M-SVM accuracy. Subjects with
/// equal accuracy belong to neither class.
pub fn class_split(reports_std: &BTreeMap<String, EvalReport>, reports_msvm: &BTreeMap<String, EvalReport>) -> Result<ClassSplit> {
    if reports_std.is_empty() || !reports_std.keys().eq(reports_msvm.keys()) {
        return Err(Error::Invariant("class split needs the same non-empty subject set for both classifiers".into()));
    }
    let std_acc: BTreeMap<String, f64> = reports_std.iter().map(|(k, r)| (k.clone(), r.accuracy)).collect();
    let msvm_acc: BTreeMap<String, f64> = reports_msvm.iter().map(|(k, r)| (k.clone(), r.accuracy)).collect();
    let (mut class1, mut class2, mut equal) = (Vec::new(), Vec::new(), Vec::new());
    for (s, &a) in &std_acc {
        let b = msvm_acc[s];
        if a > b {
            class1.push(s.clone());
        } else if b > a {
            class2.push(s.clone());
        } else {
            equal.push(s.clone());
        }
    }
    let n = std_acc.len() as f64;
    Ok(ClassSplit {
        class1_mean_std: mean_of(&class1, &std_acc),
        class1_mean_msvm: mean_of(&class1, &msvm_acc),
        class2_mean_std: mean_of(&class2, &std_acc),
        class2_mean_msvm: mean_of(&class2, &msvm_acc),
        total_mean_std: std_acc.values().sum::<f64>() / n,
        total_mean_msvm: msvm_acc.values().sum::<f64>() / n,
        class1,
        class2,
        equal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{sbf_heuristic_profile, Grouping, Zone};

    fn shape(n_k: usize, n_r: usize, n_t: usize, n_f: usize) -> Shape {
        Shape {
            n_trials: n_k,
            n_iterations: n_r,
            n_levels: n_t,
            n_flashes: n_f,
        }
    }

    #[test]
    fn bitrate_identities() {
        assert!((bitrate(36, 1.0).unwrap() - 36f64.log2()).abs() < 1e-12);
        for n in [2usize, 6, 36] {
            assert!(bitrate(n, 1.0 / n as f64).unwrap().abs() < 1e-12);
        }
        assert!(bitrate(1, 0.5).is_err());
        assert!(bitrate(36, 1.5).is_err());
        assert_eq!(bitrate(2, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn duration_and_itr() {
        let (dur, rate) = itr(4.0, 0.25, 12, 8.0).unwrap();
        assert_eq!(dur, 0.4);
        assert_eq!(rate, 10.0);
        let (_, halved) = itr(4.0, 0.25, 12, 4.0).unwrap();
        assert!((halved - 2.0 * rate).abs() < 1e-12);
        assert!(itr(1.0, 0.25, 12, 0.0).is_err());
    }

    #[test]
    fn early_stop_at_second_iteration() {
        let z = ZoneTensor::new(shape(1, 2, 1, 2), vec![Zone::A, Zone::E, Zone::A, Zone::E]).unwrap();
        let truth = Truth::new(1, 1, vec![0]).unwrap();
        let p = predict_scorebased(&z, &sbf_heuristic_profile(), Mode::EarlyStop, &truth).unwrap();
        assert_eq!(p[0].stop_iteration, 2);
        assert_eq!(p[0].flashes, vec![0]);
        assert!(p[0].correct && !p[0].no_stop_fallback);
    }

    #[test]
    fn threshold_reached_on_last_iteration() {
        let z = ZoneTensor::new(shape(1, 3, 1, 3), [Zone::B, Zone::C, Zone::C].repeat(3)).unwrap();
        let truth = Truth::new(1, 1, vec![0]).unwrap();
        let prof = ScoreProfile::new([4, 3, 1, 0, -1], 6, (-1, 4)).unwrap();
        let p = predict_scorebased(&z, &prof, Mode::EarlyStop, &truth).unwrap();
        // gap grows by 2 each iteration: 2, 4, 6
        assert_eq!(p[0].stop_iteration, 3);
        let prof = ScoreProfile::new([4, 3, 1, 0, -1], 6, (-1, 4)).unwrap();
        let z1 = ZoneTensor::new(shape(1, 3, 1, 3), [Zone::E, Zone::E, Zone::D].repeat(3)).unwrap();
        let p = predict_scorebased(&z1, &prof, Mode::EarlyStop, &truth).unwrap();
        // gap 1 per iteration never reaches 6; fallback picks flash 2
        assert_eq!(p[0].stop_iteration, 3);
        assert!(p[0].no_stop_fallback);
        assert_eq!(p[0].flashes, vec![2]);
        assert!(!p[0].correct);
    }

    #[test]
    fn nostop_ties_go_to_smallest_index() {
        let z = ZoneTensor::new(shape(1, 1, 1, 3), vec![Zone::C, Zone::A, Zone::A]).unwrap();
        let truth = Truth::new(1, 1, vec![2]).unwrap();
        let p = predict_scorebased(&z, &sbf_heuristic_profile(), Mode::NoStop, &truth).unwrap();
        assert_eq!(p[0].flashes, vec![1]);
        assert_eq!(p[0].stop_iteration, 1);
    }

    #[test]
    fn symbols_combine_levels_row_major() {
        let s = shape(1, 1, 2, 6);
        let decisions = [
            LevelDecision { flash: 2, stop: 1, fallback: false },
            LevelDecision { flash: 5, stop: 1, fallback: false },
        ];
        let truth = Truth::new(1, 2, vec![2, 4]).unwrap();
        let p = combine(&decisions, s, &truth);
        assert_eq!(p[0].symbol, 17);
        assert!(!p[0].correct);
    }

    #[test]
    fn dv_med_picks_largest_mean() {
        let s = shape(1, 2, 1, 4);
        let dv = DvTensor::new(s, Grouping::PerLevel, vec![0.0, 1.0, 0.5, 2.0, 0.0, 0.0, 0.5, -1.5]).unwrap();
        // means: 0, 0.5, 0.5, 0.25 -> tie between 1 and 2 resolved to 1
        let mut mean = [0.0; 4];
        for r in 0..2 {
            for (m, v) in mean.iter_mut().zip(dv.sequence(0, r, 0)) {
                *m += v / 2.0;
            }
        }
        assert_eq!(argmax(&mean), 1);
    }

    fn report(acc: f64) -> EvalReport {
        EvalReport {
            method: Method::Osbf,
            mode: Mode::NoStop,
            accuracy: acc,
            per_level_accuracy: vec![acc],
            mean_iterations: 1.0,
            bitrate_bits: 0.0,
            trial_duration_min: 1.0,
            itr_bits_per_min: 0.0,
            per_trial: vec![],
        }
    }

    #[test]
    fn class_split_cases() {
        let a: BTreeMap<_, _> = [("s1".to_string(), report(0.9)), ("s2".to_string(), report(0.8))].into();
        let split = class_split(&a, &a).unwrap();
        assert!(split.class1.is_empty() && split.class2.is_empty());
        assert_eq!(split.equal.len(), 2);

        let b: BTreeMap<_, _> = [("s1".to_string(), report(0.95)), ("s2".to_string(), report(0.8))].into();
        let split = class_split(&a, &b).unwrap();
        assert_eq!(split.class2, vec!["s1".to_string()]);
        assert_eq!(split.class2_mean_std, Some(0.9));
        assert_eq!(split.class2_mean_msvm, Some(0.95));
        assert_eq!(split.class1_mean_std, None);

        let c: BTreeMap<_, _> = [("s1".to_string(), report(0.95))].into();
        assert!(class_split(&a, &c).is_err());
    }
}
