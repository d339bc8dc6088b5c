//! Exact selection of zone scores and stopping threshold.
//!
//! Both score-selection problems are mixed-integer programs whose binary
//! variables are fully determined once the scores `s` and the threshold
//! `delta` are fixed: `x[k,t,r]` says whether the target of trial `k`, level
//! `t` leads every non-target by at least `delta` after `r` iterations (or,
//! with early stopping, whether that happens for the first time at `r` with
//! no non-target having triggered earlier), and `err[k,t]` marks a failed
//! classification. The programs therefore reduce to a search over the finite
//! integer lattice of feasible `(s, delta)`, which [`optimize_nostop`] and
//! [`optimize_earlystop`] solve by depth-first branch and bound.
//!
//! The no-stopping objective is
//!
//! ```text
//!   sum_t (1 - sum_k err[k,t] / n_k) + (1 / (n_k n_r)) sum_k sum_r x[k,t,r]
//! ```
//!
//! and the early-stopping objective is
//!
//! ```text
//!   sum_t 1 - sum_k err[k,t] / n_k
//!         - (100 n_fl / 60) (SOA / n_k) (sum_k sum_r r x[k,t,r] + n_r sum_k err[k,t])
//! ```
//!
//! Search order is lexicographic in `(a, b, c, d, e, delta)` and the
//! incumbent is only replaced on an improvement larger than [`TIE_EPS`], so
//! among optimal profiles the lexicographically smallest is returned.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Truth;
use crate::error::{Error, Result};
use crate::scoring::{ScoreProfile, ZoneTensor};

/// Objective values closer than this are treated as tied; mathematically
/// equal objectives can differ in the last bits after summation.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    NoStop,
    EarlyStop,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::NoStop => "nostop",
            Mode::EarlyStop => "earlystop",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nostop" => Ok(Mode::NoStop),
            "earlystop" => Ok(Mode::EarlyStop),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBounds {
    pub l: i32,
    pub u: i32,
    /// Largest threshold considered.
    pub delta_max: i32,
}

impl LatticeBounds {
    pub fn new(l: i32, u: i32, delta_max: i32) -> Result<Self> {
        let b = LatticeBounds { l, u, delta_max };
        b.validate()?;
        Ok(b)
    }

    /// `delta_max = n_r (u - l)`, the largest cumulative gap any profile in
    /// the box can produce, raised to `u - l + 1` so that a single iteration
    /// still admits every score vector.
    pub fn with_default_delta(l: i32, u: i32, n_iterations: usize) -> Result<Self> {
        Self::new(l, u, (n_iterations as i32 * (u - l)).max(u - l + 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.u - self.l < 4 {
            return Err(Error::Config(format!(
                "infeasible score bounds [{}, {}]: five strictly decreasing integers need u - l >= 4",
                self.l, self.u
            )));
        }
        if self.u < 2 {
            return Err(Error::Config(format!(
                "infeasible score bounds [{}, {}]: c >= 0 requires u >= 2",
                self.l, self.u
            )));
        }
        // a - e >= 4 for every feasible profile
        if self.delta_max < 5 {
            return Err(Error::Config(format!(
                "delta_max {} is below 5, the smallest admissible threshold",
                self.delta_max
            )));
        }
        Ok(())
    }

    /// Whether `p` lies in this lattice.
    pub fn admits(&self, p: &ScoreProfile) -> bool {
        p.scores[0] <= self.u && p.scores[4] >= self.l && p.delta <= self.delta_max && p.validate().is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub soa_seconds: f64,
    /// Stimuli per stimulation sequence.
    pub flashes_per_iteration: usize,
    pub n_trials: usize,
    pub n_iterations: usize,
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.soa_seconds > 0.0) || self.flashes_per_iteration == 0 || self.n_trials == 0 || self.n_iterations == 0 {
            return Err(Error::Config("timing parameters must be positive".into()));
        }
        Ok(())
    }

    fn check_against(&self, z: &ZoneTensor) -> Result<()> {
        self.validate()?;
        if self.n_trials != z.shape.n_trials || self.n_iterations != z.shape.n_iterations {
            return Err(Error::Invariant(format!(
                "timing parameters ({} trials, {} iterations) do not match zone tensor ({}, {})",
                self.n_trials, self.n_iterations, z.shape.n_trials, z.shape.n_iterations
            )));
        }
        Ok(())
    }

    /// The `(100 n_fl / 60)` time weight.
    fn weight(&self) -> f64 {
        100.0 * self.flashes_per_iteration as f64 / 60.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBreakdown {
    pub level: usize,
    pub err_rate: f64,
    /// No stopping: fraction of (trial, iteration) pairs with a robust lead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_fraction: Option<f64>,
    /// Early stopping: mean stopping iteration over successful trials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_stop_iteration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub mode: Mode,
    pub profile: ScoreProfile,
    pub objective: f64,
    pub per_level: Vec<LevelBreakdown>,
    pub nodes_explored: u64,
    /// Logged but never serialized, so report files stay reproducible.
    #[serde(skip_serializing, default)]
    pub wall_time_ms: f64,
}

// ---------------------------------------------------------------------------
// Per-sequence simulation
// ---------------------------------------------------------------------------

/// Cumulative-score statistics of one (trial, level) after each iteration.
#[derive(Debug, Clone, Default)]
struct Trace {
    /// `cum[target] - max_{f != target} cum[f]`.
    margin: Vec<i64>,
    /// `top1 - top2` of the cumulative scores.
    gap: Vec<i64>,
    /// Whether the top stimulus is the target (meaningful when `gap > 0`).
    leader_is_target: Vec<bool>,
}

fn trace(z: &ZoneTensor, truth: &Truth, scores: &[i32; 5], k: usize, t: usize, cum: &mut [i64]) -> Trace {
    let shape = z.shape;
    let target = truth.target(k, t);
    cum.iter_mut().for_each(|c| *c = 0);
    let mut out = Trace {
        margin: Vec::with_capacity(shape.n_iterations),
        gap: Vec::with_capacity(shape.n_iterations),
        leader_is_target: Vec::with_capacity(shape.n_iterations),
    };
    for r in 0..shape.n_iterations {
        for (c, &zone) in cum.iter_mut().zip(z.sequence(k, r, t)) {
            *c += scores[zone.index()] as i64;
        }
        let mut best_other = i64::MIN;
        let (mut top1, mut top2, mut leader) = (i64::MIN, i64::MIN, 0usize);
        for (f, &c) in cum.iter().enumerate() {
            if f != target {
                best_other = best_other.max(c);
            }
            if c > top1 {
                top2 = top1;
                top1 = c;
                leader = f;
            } else if c > top2 {
                top2 = c;
            }
        }
        out.margin.push(cum[target] - best_other);
        out.gap.push(top1 - top2);
        out.leader_is_target.push(leader == target);
    }
    out
}

fn traces(z: &ZoneTensor, truth: &Truth, scores: &[i32; 5]) -> Vec<Trace> {
    let s = z.shape;
    let mut cum = vec![0i64; s.n_flashes];
    let mut out = Vec::with_capacity(s.n_trials * s.n_levels);
    for t in 0..s.n_levels {
        for k in 0..s.n_trials {
            out.push(trace(z, truth, scores, k, t, &mut cum));
        }
    }
    out
}

/// First iteration (0-based) whose top gap reaches `delta`.
#[inline]
fn first_trigger(tr: &Trace, delta: i64) -> Option<usize> {
    tr.gap.iter().position(|&g| g >= delta)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct LevelCounts {
    errs: u64,
    /// No stopping: number of robust (k, r). Early stopping: sum of 1-based
    /// stopping iterations over successful trials.
    acc: u64,
}

fn nostop_counts(traces: &[Trace], n_trials: usize, n_levels: usize, delta: i64) -> Vec<LevelCounts> {
    (0..n_levels)
        .map(|t| {
            let mut c = LevelCounts::default();
            for tr in &traces[t * n_trials..(t + 1) * n_trials] {
                c.acc += tr.margin.iter().filter(|&&m| m >= delta).count() as u64;
                if *tr.margin.last().expect("n_r >= 1") < delta {
                    c.errs += 1;
                }
            }
            c
        })
        .collect()
}

fn earlystop_counts(traces: &[Trace], n_trials: usize, n_levels: usize, delta: i64, optimistic: bool) -> Vec<LevelCounts> {
    (0..n_levels)
        .map(|t| {
            let mut c = LevelCounts::default();
            for tr in &traces[t * n_trials..(t + 1) * n_trials] {
                match first_trigger(tr, delta) {
                    Some(r) if optimistic || tr.leader_is_target[r] => c.acc += r as u64 + 1,
                    _ => c.errs += 1,
                }
            }
            c
        })
        .collect()
}

fn nostop_value(counts: &[LevelCounts], n_trials: usize, n_iterations: usize) -> f64 {
    let nk = n_trials as f64;
    let nknr = (n_trials * n_iterations) as f64;
    counts
        .iter()
        .map(|c| (1.0 - c.errs as f64 / nk) + c.acc as f64 / nknr)
        .sum()
}

fn earlystop_value(counts: &[LevelCounts], tp: &TimingParams) -> f64 {
    let nk = tp.n_trials as f64;
    let w = tp.weight();
    counts
        .iter()
        .map(|c| {
            let time = (c.acc + tp.n_iterations as u64 * c.errs) as f64;
            1.0 - c.errs as f64 / nk - w * (tp.soa_seconds / nk) * time
        })
        .sum()
}

fn check_profile(z: &ZoneTensor, truth: &Truth, p: &ScoreProfile) -> Result<()> {
    p.validate()?;
    if truth.n_trials() != z.shape.n_trials || truth.n_levels() != z.shape.n_levels {
        return Err(Error::Invariant("truth map does not match zone tensor".into()));
    }
    Ok(())
}

/// No-stopping objective of `p` on a training zone tensor.
pub fn nostop_objective(z: &ZoneTensor, truth: &Truth, p: &ScoreProfile) -> Result<f64> {
    check_profile(z, truth, p)?;
    let s = z.shape;
    let tr = traces(z, truth, &p.scores);
    Ok(nostop_value(
        &nostop_counts(&tr, s.n_trials, s.n_levels, p.delta as i64),
        s.n_trials,
        s.n_iterations,
    ))
}

/// Early-stopping objective of `p` on a training zone tensor.
pub fn earlystop_objective(z: &ZoneTensor, truth: &Truth, p: &ScoreProfile, tp: &TimingParams) -> Result<f64> {
    check_profile(z, truth, p)?;
    tp.check_against(z)?;
    let s = z.shape;
    let tr = traces(z, truth, &p.scores);
    Ok(earlystop_value(
        &earlystop_counts(&tr, s.n_trials, s.n_levels, p.delta as i64, false),
        tp,
    ))
}

pub fn objective(mode: Mode, z: &ZoneTensor, truth: &Truth, p: &ScoreProfile, tp: &TimingParams) -> Result<f64> {
    match mode {
        Mode::NoStop => nostop_objective(z, truth, p),
        Mode::EarlyStop => earlystop_objective(z, truth, p, tp),
    }
}

fn breakdown(mode: Mode, z: &ZoneTensor, truth: &Truth, p: &ScoreProfile) -> Vec<LevelBreakdown> {
    let s = z.shape;
    let tr = traces(z, truth, &p.scores);
    let nk = s.n_trials as f64;
    match mode {
        Mode::NoStop => nostop_counts(&tr, s.n_trials, s.n_levels, p.delta as i64)
            .into_iter()
            .enumerate()
            .map(|(level, c)| LevelBreakdown {
                level,
                err_rate: c.errs as f64 / nk,
                robust_fraction: Some(c.acc as f64 / (s.n_trials * s.n_iterations) as f64),
                mean_stop_iteration: None,
            })
            .collect(),
        Mode::EarlyStop => earlystop_counts(&tr, s.n_trials, s.n_levels, p.delta as i64, false)
            .into_iter()
            .enumerate()
            .map(|(level, c)| {
                let ok = s.n_trials as u64 - c.errs;
                LevelBreakdown {
                    level,
                    err_rate: c.errs as f64 / nk,
                    robust_fraction: None,
                    mean_stop_iteration: (ok > 0).then(|| c.acc as f64 / ok as f64),
                }
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Incumbent {
    objective: f64,
    scores: [i32; 5],
    delta: i32,
}

impl Incumbent {
    fn key(&self) -> ([i32; 5], i32) {
        (self.scores, self.delta)
    }

}

struct Search<'a> {
    mode: Mode,
    z: &'a ZoneTensor,
    truth: &'a Truth,
    bounds: LatticeBounds,
    tp: TimingParams,
    ceiling: f64,
}

impl Search<'_> {
    /// Explores every profile with `a = s_a`; returns the best found and the
    /// number of lattice nodes visited.
    fn subtree(&self, s_a: i32) -> (Option<Incumbent>, u64) {
        let (l, _) = (self.bounds.l, self.bounds.u);
        let mut best: Option<Incumbent> = None;
        let mut nodes = 0u64;
        let s = self.z.shape;
        'outer: for s_b in (l + 3).max(1)..s_a {
            for s_c in (l + 2).max(0)..s_b {
                for s_d in (l + 1)..s_c {
                    for s_e in l..s_d {
                        nodes += 1;
                        if best.is_some_and(|b| b.objective >= self.ceiling) {
                            break 'outer;
                        }
                        let scores = [s_a, s_b, s_c, s_d, s_e];
                        let floor = s_a - s_e + 1;
                        if floor > self.bounds.delta_max {
                            continue;
                        }
                        let tr = traces(self.z, self.truth, &scores);
                        for delta in floor..=self.bounds.delta_max {
                            nodes += 1;
                            let d = delta as i64;
                            let (bound, value) = match self.mode {
                                Mode::NoStop => {
                                    // x and err are monotone in delta, so the value
                                    // here bounds every larger threshold
                                    let v = nostop_value(&nostop_counts(&tr, s.n_trials, s.n_levels, d), s.n_trials, s.n_iterations);
                                    (v, Some(v))
                                }
                                Mode::EarlyStop => {
                                    // first-trigger iterations never decrease with delta
                                    let ub = earlystop_value(&earlystop_counts(&tr, s.n_trials, s.n_levels, d, true), &self.tp);
                                    (ub, None)
                                }
                            };
                            if best.is_some_and(|b| bound <= b.objective + TIE_EPS) {
                                break;
                            }
                            let value = match value {
                                Some(v) => v,
                                None => earlystop_value(&earlystop_counts(&tr, s.n_trials, s.n_levels, d, false), &self.tp),
                            };
                            if best.is_none_or(|b| value > b.objective + TIE_EPS) {
                                best = Some(Incumbent {
                                    objective: value,
                                    scores,
                                    delta,
                                });
                            }
                        }
                    }
                }
            }
        }
        (best, nodes)
    }
}

fn optimize(mode: Mode, z: &ZoneTensor, truth: &Truth, b: &LatticeBounds, tp: TimingParams) -> Result<OptResult> {
    let start = Instant::now();
    b.validate()?;
    if truth.n_trials() != z.shape.n_trials || truth.n_levels() != z.shape.n_levels {
        return Err(Error::Invariant("truth map does not match zone tensor".into()));
    }
    let n_levels = z.shape.n_levels as f64;
    let ceiling = match mode {
        Mode::NoStop => 2.0 * n_levels,
        Mode::EarlyStop => {
            tp.check_against(z)?;
            // no errors and every trial stopping after one iteration
            n_levels * (1.0 - tp.weight() * tp.soa_seconds)
        }
    };
    let search = Search {
        mode,
        z,
        truth,
        bounds: *b,
        tp,
        ceiling,
    };
    let lo = (b.l + 4).max(2);
    let parts: Vec<(Option<Incumbent>, u64)> = (lo..=b.u).into_par_iter().map(|s_a| search.subtree(s_a)).collect();
    let nodes_explored = parts.iter().map(|p| p.1).sum();
    let found: Vec<Incumbent> = parts.into_iter().filter_map(|p| p.0).collect();
    let top = found
        .iter()
        .map(|c| c.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    // each subtree holds its lexicographically smallest near-optimum
    let best = found
        .into_iter()
        .filter(|c| c.objective >= top - TIE_EPS)
        .min_by_key(|c| c.key())
        .ok_or_else(|| Error::Config("score lattice admits no feasible profile".into()))?;
    let profile = ScoreProfile::new(best.scores, best.delta, (b.l, b.u))?;
    let check = objective(mode, z, truth, &profile, &tp)?;
    if check != best.objective {
        return Err(Error::Numeric(format!(
            "search objective {} disagrees with evaluator {}",
            best.objective, check
        )));
    }
    Ok(OptResult {
        mode,
        profile,
        objective: best.objective,
        per_level: breakdown(mode, z, truth, &profile),
        nodes_explored,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Best no-stopping profile over the lattice `b`.
pub fn optimize_nostop(z: &ZoneTensor, truth: &Truth, b: &LatticeBounds) -> Result<OptResult> {
    let tp = TimingParams {
        soa_seconds: 1.0,
        flashes_per_iteration: 1,
        n_trials: z.shape.n_trials,
        n_iterations: z.shape.n_iterations,
    };
    optimize(Mode::NoStop, z, truth, b, tp)
}

/// Best early-stopping profile over the lattice `b`.
pub fn optimize_earlystop(z: &ZoneTensor, truth: &Truth, b: &LatticeBounds, tp: &TimingParams) -> Result<OptResult> {
    optimize(Mode::EarlyStop, z, truth, b, *tp)
}

pub fn optimize_mode(mode: Mode, z: &ZoneTensor, truth: &Truth, b: &LatticeBounds, tp: &TimingParams) -> Result<OptResult> {
    match mode {
        Mode::NoStop => optimize_nostop(z, truth, b),
        Mode::EarlyStop => optimize_earlystop(z, truth, b, tp),
    }
}

// ---------------------------------------------------------------------------
// Constraint audit
// ---------------------------------------------------------------------------

/// Binary variables of the integer program, resolved by simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binaries {
    pub n_trials: usize,
    pub n_levels: usize,
    pub n_iterations: usize,
    /// `x[(k * n_levels + t) * n_iterations + r]`.
    pub x: Vec<u8>,
    /// `err[k * n_levels + t]`.
    pub err: Vec<u8>,
}

impl Binaries {
    pub fn x(&self, k: usize, t: usize, r: usize) -> u8 {
        self.x[(k * self.n_levels + t) * self.n_iterations + r]
    }

    pub fn err(&self, k: usize, t: usize) -> u8 {
        self.err[k * self.n_levels + t]
    }
}

pub fn derive_binaries(mode: Mode, z: &ZoneTensor, truth: &Truth, p: &ScoreProfile) -> Result<Binaries> {
    check_profile(z, truth, p)?;
    let s = z.shape;
    let tr = traces(z, truth, &p.scores);
    let delta = p.delta as i64;
    let mut x = vec![0u8; s.n_trials * s.n_levels * s.n_iterations];
    let mut err = vec![0u8; s.n_trials * s.n_levels];
    for k in 0..s.n_trials {
        for t in 0..s.n_levels {
            let trc = &tr[t * s.n_trials + k];
            let base = (k * s.n_levels + t) * s.n_iterations;
            match mode {
                Mode::NoStop => {
                    for r in 0..s.n_iterations {
                        x[base + r] = (trc.margin[r] >= delta) as u8;
                    }
                    err[k * s.n_levels + t] = 1 - x[base + s.n_iterations - 1];
                }
                Mode::EarlyStop => match first_trigger(trc, delta) {
                    Some(r) if trc.leader_is_target[r] => x[base + r] = 1,
                    _ => err[k * s.n_levels + t] = 1,
                },
            }
        }
    }
    Ok(Binaries {
        n_trials: s.n_trials,
        n_levels: s.n_levels,
        n_iterations: s.n_iterations,
        x,
        err,
    })
}

/// Checks every constraint of the integer program for `(p, b)` against the
/// given binaries and returns a description of each violation.
pub fn audit_constraints(
    mode: Mode,
    z: &ZoneTensor,
    truth: &Truth,
    p: &ScoreProfile,
    bounds: &LatticeBounds,
    bin: &Binaries,
) -> Vec<String> {
    let mut v = Vec::new();
    let s = p.scores;
    if s[0] > bounds.u {
        v.push(format!("upper bound: a = {} > u = {}", s[0], bounds.u));
    }
    for j in 0..4 {
        if s[j + 1] > s[j] - 1 {
            v.push(format!("ordering: s[{}] = {} > s[{}] - 1 = {}", j + 1, s[j + 1], j, s[j] - 1));
        }
    }
    if s[2] < 0 {
        v.push(format!("non-negativity: c = {} < 0", s[2]));
    }
    if s[4] < bounds.l {
        v.push(format!("lower bound: e = {} < l = {}", s[4], bounds.l));
    }
    if p.delta < s[0] - s[4] + 1 {
        v.push(format!("threshold floor: delta = {} < a - e + 1 = {}", p.delta, s[0] - s[4] + 1));
    }
    let shape = z.shape;
    if bin.n_trials != shape.n_trials || bin.n_levels != shape.n_levels || bin.n_iterations != shape.n_iterations {
        v.push("binaries do not match the zone tensor".into());
        return v;
    }
    if bin.x.iter().chain(&bin.err).any(|&b| b > 1) {
        v.push("non-binary variable".into());
    }
    let n_r = shape.n_iterations;
    let delta = p.delta as i64;
    let big_m = n_r as i64 * (s[0] - s[4]) as i64 + delta;
    let cum = |k: usize, t: usize, upto: usize| -> Vec<i64> {
        let mut acc = vec![0i64; shape.n_flashes];
        for r in 0..upto {
            for (a, zone) in acc.iter_mut().zip(z.sequence(k, r, t)) {
                *a += p.score(*zone) as i64;
            }
        }
        acc
    };
    // stimulus f leads every other stimulus by at least delta
    let leads = |c: &[i64], f: usize| c.iter().enumerate().all(|(g, &cg)| g == f || c[f] >= cg + delta);
    for k in 0..shape.n_trials {
        for t in 0..shape.n_levels {
            let trg = truth.target(k, t);
            let err = bin.err(k, t) as i64;
            let xs: Vec<i64> = (0..n_r).map(|r| bin.x(k, t, r) as i64).collect();
            let at = format!("(k={},t={})", k + 1, t);
            let cums: Vec<Vec<i64>> = (1..=n_r).map(|r| cum(k, t, r)).collect();
            // big-M gap constraint, every iteration and non-target
            for r in 0..n_r {
                let c = &cums[r];
                for f in (0..shape.n_flashes).filter(|&f| f != trg) {
                    if c[f] + delta > c[trg] + big_m * (1 - xs[r]) {
                        v.push(format!("gap constraint violated at {at}, r={}, f={}", r + 1, f + 1));
                    }
                }
            }
            match mode {
                Mode::NoStop => {
                    if 1 - err > xs[n_r - 1] {
                        v.push(format!("failure link: 1 - err > x at last iteration for {at}"));
                    }
                    if err != 1 - xs[n_r - 1] {
                        v.push(format!("err does not reflect the last-iteration outcome at {at}"));
                    }
                    for r in 0..n_r {
                        let holds = (xs[r] == 1) == leads(&cums[r], trg);
                        if !holds {
                            v.push(format!("x does not match the gap condition at {at}, r={}", r + 1));
                        }
                    }
                }
                Mode::EarlyStop => {
                    let sum: i64 = xs.iter().sum();
                    if 1 - err > sum {
                        v.push(format!("failure link: 1 - err > sum x for {at}"));
                    }
                    if sum > 1 {
                        v.push(format!("more than one stopping iteration for {at}"));
                    }
                    if let Some(stop) = xs.iter().position(|&x| x == 1) {
                        for r in 0..stop {
                            for f in (0..shape.n_flashes).filter(|&f| f != trg) {
                                if leads(&cums[r], f) {
                                    v.push(format!(
                                        "non-target f={} triggered at r={} before the target stop r={} for {at}",
                                        f + 1,
                                        r + 1,
                                        stop + 1
                                    ));
                                }
                            }
                            if leads(&cums[r], trg) {
                                v.push(format!("target stop at {at} is not the first trigger"));
                            }
                        }
                    } else {
                        // no stop recorded: the target must not be the first trigger
                        let first = (0..n_r).find(|&r| (0..shape.n_flashes).any(|f| leads(&cums[r], f)));
                        if let Some(r) = first {
                            if leads(&cums[r], trg) {
                                v.push(format!("target triggered first at r={} for {at} but x = 0", r + 1));
                            }
                        }
                    }
                    if err != 1 - sum.min(1) {
                        v.push(format!("err does not reflect the stopping outcome at {at}"));
                    }
                }
            }
        }
    }
    v
}

/// Evaluates the integer program's objective directly from binaries.
pub fn objective_from_binaries(mode: Mode, bin: &Binaries, tp: &TimingParams) -> f64 {
    let nk = bin.n_trials as f64;
    let nr = bin.n_iterations as f64;
    let mut total = 0.0;
    for t in 0..bin.n_levels {
        let errs: f64 = (0..bin.n_trials).map(|k| bin.err(k, t) as f64).sum();
        match mode {
            Mode::NoStop => {
                let xs: f64 = (0..bin.n_trials)
                    .flat_map(|k| (0..bin.n_iterations).map(move |r| (k, r)))
                    .map(|(k, r)| bin.x(k, t, r) as f64)
                    .sum();
                total += (1.0 - errs / nk) + xs / (nk * nr);
            }
            Mode::EarlyStop => {
                let rx: f64 = (0..bin.n_trials)
                    .flat_map(|k| (0..bin.n_iterations).map(move |r| (k, r)))
                    .map(|(k, r)| (r + 1) as f64 * bin.x(k, t, r) as f64)
                    .sum();
                total += 1.0 - errs / nk - tp.weight() * (tp.soa_seconds / nk) * (rx + nr * errs);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Shape;
    use crate::scoring::{sbf_heuristic_profile, Zone};

    fn shape(n_k: usize, n_r: usize, n_t: usize, n_f: usize) -> Shape {
        Shape {
            n_trials: n_k,
            n_iterations: n_r,
            n_levels: n_t,
            n_flashes: n_f,
        }
    }

    /// One trial, one level, two flashes; target (flash 0) in zone a and the
    /// non-target in zone e at both iterations.
    fn two_iteration_example() -> (ZoneTensor, Truth) {
        let z = ZoneTensor::new(shape(1, 2, 1, 2), vec![Zone::A, Zone::E, Zone::A, Zone::E]).unwrap();
        (z, Truth::new(1, 1, vec![0]).unwrap())
    }

    fn timing(z: &ZoneTensor, n_fl: usize, soa: f64) -> TimingParams {
        TimingParams {
            soa_seconds: soa,
            flashes_per_iteration: n_fl,
            n_trials: z.shape.n_trials,
            n_iterations: z.shape.n_iterations,
        }
    }

    #[test]
    fn nostop_hand_simulation() {
        let (z, truth) = two_iteration_example();
        // gaps 4 then 8 against delta 5: x = (0, 1), err = 0
        let v = nostop_objective(&z, &truth, &sbf_heuristic_profile()).unwrap();
        assert_eq!(v, 1.5);
    }

    #[test]
    fn identical_zones_never_succeed() {
        let z = ZoneTensor::new(shape(1, 2, 1, 2), vec![Zone::B; 4]).unwrap();
        let truth = Truth::new(1, 1, vec![1]).unwrap();
        assert_eq!(nostop_objective(&z, &truth, &sbf_heuristic_profile()).unwrap(), 0.0);
    }

    #[test]
    fn earlystop_hand_simulation() {
        let (z, truth) = two_iteration_example();
        let tp = timing(&z, 2, 0.25);
        let v = earlystop_objective(&z, &truth, &sbf_heuristic_profile(), &tp).unwrap();
        let w = 100.0 * 2.0 / 60.0;
        assert!((v - (1.0 - w * 0.25 * 2.0)).abs() < 1e-12);
        let bin = derive_binaries(Mode::EarlyStop, &z, &truth, &sbf_heuristic_profile()).unwrap();
        assert_eq!(bin.x, vec![0, 1]);
        assert_eq!(bin.err, vec![0]);
    }

    #[test]
    fn nontarget_triggering_first_is_an_error() {
        // flash 1 (non-target) takes zone a at r=1 and r=2, target stays in e
        let z = ZoneTensor::new(shape(1, 3, 1, 2), vec![Zone::E, Zone::A, Zone::E, Zone::A, Zone::A, Zone::E]).unwrap();
        let truth = Truth::new(1, 1, vec![0]).unwrap();
        let tp = timing(&z, 2, 0.25);
        let p = sbf_heuristic_profile();
        let bin = derive_binaries(Mode::EarlyStop, &z, &truth, &p).unwrap();
        assert_eq!(bin.err, vec![1]);
        assert_eq!(bin.x, vec![0, 0, 0]);
        let w = 100.0 * 2.0 / 60.0;
        let v = earlystop_objective(&z, &truth, &p, &tp).unwrap();
        assert!((v - (1.0 - 1.0 - w * 0.25 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn unreachable_threshold_charges_every_trial() {
        let (z, truth) = two_iteration_example();
        let tp = timing(&z, 12, 0.25);
        let p = ScoreProfile::new([2, 1, 0, -1, -2], 50, (-2, 2)).unwrap();
        let v = earlystop_objective(&z, &truth, &p, &tp).unwrap();
        let closed = -(100.0 * 12.0 / 60.0) * 0.25 * 2.0;
        assert!((v - closed).abs() < 1e-12);
    }

    #[test]
    fn forced_lattice_returns_the_only_scores() {
        let (z, truth) = two_iteration_example();
        let b = LatticeBounds::new(-2, 2, 16).unwrap();
        let r = optimize_nostop(&z, &truth, &b).unwrap();
        assert_eq!(r.profile.scores, [2, 1, 0, -1, -2]);
        assert_eq!(r.profile.delta, 5);
        let tp = timing(&z, 2, 0.25);
        let r = optimize_earlystop(&z, &truth, &b, &tp).unwrap();
        assert_eq!(r.profile.scores, [2, 1, 0, -1, -2]);
        // any delta in 5..=8 stops at r = 2; the smallest wins the tie
        assert_eq!(r.profile.delta, 5);
    }

    #[test]
    fn identical_zones_tie_break_is_lexicographic() {
        let z = ZoneTensor::new(shape(2, 2, 1, 3), vec![Zone::C; 12]).unwrap();
        let truth = Truth::new(2, 1, vec![0, 2]).unwrap();
        let b = LatticeBounds::new(-3, 3, 12).unwrap();
        let r = optimize_nostop(&z, &truth, &b).unwrap();
        // every profile scores 0, so the lexicographically smallest wins
        assert_eq!(r.profile.scores, [2, 1, 0, -2, -3]);
        assert_eq!(r.profile.delta, 6);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn infeasible_bounds_are_rejected() {
        assert!(LatticeBounds::new(-1, 2, 10).is_err());
        assert!(LatticeBounds::new(-6, 1, 10).is_err());
        assert!(LatticeBounds::new(-3, 3, 4).is_err());
        assert_eq!(LatticeBounds::with_default_delta(-3, 3, 1).unwrap().delta_max, 7);
        assert!(LatticeBounds::with_default_delta(-10, 10, 8).unwrap().delta_max == 160);
    }

    #[test]
    fn audit_accepts_simulated_binaries_and_flags_tampering() {
        let (z, truth) = two_iteration_example();
        let p = sbf_heuristic_profile();
        let b = LatticeBounds::new(-2, 2, 16).unwrap();
        for mode in [Mode::NoStop, Mode::EarlyStop] {
            let bin = derive_binaries(mode, &z, &truth, &p).unwrap();
            assert!(audit_constraints(mode, &z, &truth, &p, &b, &bin).is_empty());
            let mut bad = bin.clone();
            bad.x[0] = 1;
            assert!(!audit_constraints(mode, &z, &truth, &p, &b, &bad).is_empty());
        }
    }

    #[test]
    fn binaries_objective_matches_evaluator() {
        let (z, truth) = two_iteration_example();
        let p = sbf_heuristic_profile();
        let tp = timing(&z, 2, 0.25);
        for mode in [Mode::NoStop, Mode::EarlyStop] {
            let bin = derive_binaries(mode, &z, &truth, &p).unwrap();
            let a = objective_from_binaries(mode, &bin, &tp);
            let b = objective(mode, &z, &truth, &p, &tp).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}
