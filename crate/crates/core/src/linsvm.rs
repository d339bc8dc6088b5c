//! Linear SVM training by dual coordinate descent.
//!
//! Two families of dual variables are optimized jointly: one multiplier per
//! labeled point (the usual sign constraints `y (w·x + b) >= 1 - xi`) and one
//! per *z-point* `z = x_target - x_nontarget`, which asks the target of each
//! stimulation sequence to out-score every non-target by a unit margin
//! (`w·z >= 1 - eta`). Setting `c2 = 0` disables the second family and the
//! solver degenerates to a plain L1/L2-loss linear SVM.
//!
//! The bias is folded into the weight vector by appending the constant
//! `bias_scale` to every labeled point. Z-points get a zero in that slot since
//! the bias cancels in a difference of decision values. This removes the
//! equality constraint on the sign multipliers, so each coordinate
//! subproblem is a one-dimensional box-constrained quadratic that is solved
//! in closed form.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, StimulusIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Hinge loss; multipliers boxed in `[0, C]`.
    L1,
    /// Squared hinge loss; unbounded multipliers with a `1/(2C)` diagonal.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub loss: Loss,
    pub c1: f64,
    /// Cost of the max-decision constraints. Zero trains a standard SVM.
    pub c2: f64,
    /// Stop when every projected gradient is at most this in magnitude.
    pub tol: f64,
    pub max_epochs: usize,
    #[serde(alias = "seed")]
    pub shuffle_seed: u64,
    pub bias_scale: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            loss: Loss::L1,
            c1: 1.0,
            c2: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
            shuffle_seed: 0,
            bias_scale: 1.0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::Config(format!("c1 must be positive, got {}", self.c1)));
        }
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(Error::Config(format!("c2 must be non-negative, got {}", self.c2)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if !(self.bias_scale >= 0.0 && self.bias_scale.is_finite()) {
            return Err(Error::Config(format!(
                "bias_scale must be non-negative, got {}",
                self.bias_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignPoint {
    pub x: Vec<f64>,
    /// +1 or -1.
    pub y: f64,
    /// Multiplies `c1` for this point.
    pub weight: f64,
    pub source: Option<StimulusIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZPoint {
    pub z: Vec<f64>,
    /// Position of the target in `points`.
    pub target: usize,
    /// Position of the non-target in `points`.
    pub nontarget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMatrix {
    dim: usize,
    points: Vec<SignPoint>,
    zpoints: Vec<ZPoint>,
}

impl TrainMatrix {
    pub fn from_parts(dim: usize, points: Vec<SignPoint>, zpoints: Vec<ZPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invariant("training set is empty".into()));
        }
        for p in &points {
            if p.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.x.len(),
                });
            }
            if p.y != 1.0 && p.y != -1.0 {
                return Err(Error::Invariant(format!("label {} is not +1/-1", p.y)));
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return Err(Error::Invariant(format!("invalid point weight {}", p.weight)));
            }
            if p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite feature value in training point".into()));
            }
        }
        for z in &zpoints {
            if z.z.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: z.z.len(),
                });
            }
            if z.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite value in z-point".into()));
            }
        }
        Ok(TrainMatrix {
            dim,
            points,
            zpoints,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[SignPoint] {
        &self.points
    }

    pub fn zpoints(&self) -> &[ZPoint] {
        &self.zpoints
    }

    /// Number of sign multipliers.
    pub fn l1(&self) -> usize {
        self.points.len()
    }

    /// Number of max-decision multipliers.
    pub fn l2(&self) -> usize {
        self.zpoints.len()
    }

    /// The same labeled points with no max-decision constraints.
    pub fn without_zpoints(&self) -> TrainMatrix {
        TrainMatrix {
            dim: self.dim,
            points: self.points.clone(),
            zpoints: Vec::new(),
        }
    }
}

/// One labeled point per record plus one z-point per non-target record,
/// paired with the target of its own stimulation sequence.
pub fn build_train_matrix(d: &Dataset) -> Result<TrainMatrix> {
    let shape = d.shape();
    let points: Vec<SignPoint> = d
        .records()
        .iter()
        .map(|rec| SignPoint {
            x: rec.features.clone(),
            y: rec.label as f64,
            weight: 1.0,
            source: Some(rec.index),
        })
        .collect();
    let mut zpoints = Vec::with_capacity(points.len() - shape.n_sequences());
    for k in 0..shape.n_trials {
        for r in 0..shape.n_iterations {
            for t in 0..shape.n_levels {
                let base = shape.sequence_offset(k, r, t);
                let seq = d.sequence(k, r, t);
                let trg = seq.iter().position(|rec| rec.is_target()).ok_or_else(|| {
                    Error::Invariant(format!("no target at (k={},r={},t={})", k + 1, r + 1, t))
                })?;
                let xt = &seq[trg].features;
                for (f, rec) in seq.iter().enumerate() {
                    if rec.is_target() {
                        continue;
                    }
                    zpoints.push(ZPoint {
                        z: xt.iter().zip(&rec.features).map(|(a, b)| a - b).collect(),
                        target: base + trg,
                        nontarget: base + f,
                    });
                }
            }
        }
    }
    TrainMatrix::from_parts(d.feature_dim(), points, zpoints)
}

/// Dual iterate: multipliers `[lambda; rho]` and the weight vector they
/// induce, including the trailing bias coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub alpha: Vec<f64>,
    pub w_running: Vec<f64>,
}

impl DualState {
    pub fn zeros(m: &TrainMatrix) -> Self {
        DualState {
            alpha: vec![0.0; m.l1() + m.l2()],
            w_running: vec![0.0; m.dim() + 1],
        }
    }

    /// Recomputes `w = sum lambda_i y_i x_i + sum rho_j z_j` from scratch.
    pub fn from_alpha(m: &TrainMatrix, cfg: &SvmConfig, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != m.l1() + m.l2() {
            return Err(Error::DimensionMismatch {
                expected: m.l1() + m.l2(),
                got: alpha.len(),
            });
        }
        let dim = m.dim();
        let mut w = vec![0.0; dim + 1];
        for (p, &a) in m.points.iter().zip(&alpha) {
            let s = a * p.y;
            for (wj, xj) in w.iter_mut().zip(&p.x) {
                *wj += s * xj;
            }
            w[dim] += s * cfg.bias_scale;
        }
        for (z, &a) in m.zpoints.iter().zip(&alpha[m.l1()..]) {
            for (wj, zj) in w.iter_mut().zip(&z.z) {
                *wj += a * zj;
            }
        }
        Ok(DualState { alpha, w_running: w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub epochs_run: usize,
    pub final_max_projected_gradient: f64,
    pub dual_objective: f64,
    /// False when `max_epochs` was exhausted before reaching `tol`.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
    pub bias_scale: f64,
    pub diagnostics: Diagnostics,
}

impl Hyperplane {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

pub fn decision_value(h: &Hyperplane, x: &[f64]) -> Result<f64> {
    if x.len() != h.w.len() {
        return Err(Error::DimensionMismatch {
            expected: h.w.len(),
            got: x.len(),
        });
    }
    Ok(h.eval_unchecked(x))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-coordinate constants of the dual.
#[derive(Debug, Clone, Copy)]
struct Coord {
    upper: f64,
    diag: f64,
    qd: f64,
    active: bool,
}

fn coords(m: &TrainMatrix, cfg: &SvmConfig) -> Vec<Coord> {
    let make = |cost: f64, sqnorm: f64| -> Coord {
        if cost <= 0.0 {
            // box [0, 0]: the multiplier is pinned
            return Coord {
                upper: 0.0,
                diag: 0.0,
                qd: sqnorm,
                active: false,
            };
        }
        let (upper, diag) = match cfg.loss {
            Loss::L1 => (cost, 0.0),
            Loss::L2 => (f64::INFINITY, 0.5 / cost),
        };
        Coord {
            upper,
            diag,
            qd: sqnorm + diag,
            active: true,
        }
    };
    let b2 = cfg.bias_scale * cfg.bias_scale;
    let mut out: Vec<Coord> = m
        .points
        .iter()
        .map(|p| make(cfg.c1 * p.weight, dot(&p.x, &p.x) + b2))
        .collect();
    out.extend(m.zpoints.iter().map(|z| make(cfg.c2, dot(&z.z, &z.z))));
    for (i, c) in out.iter_mut().enumerate() {
        if c.active && c.qd == 0.0 {
            warn!("training point {i} has zero norm; its multiplier is left at 0");
            c.active = false;
        }
    }
    out
}

#[inline]
fn projected(alpha: f64, g: f64, upper: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= upper {
        g.max(0.0)
    } else {
        g
    }
}

struct Solver<'a> {
    m: &'a TrainMatrix,
    bias: f64,
    coords: Vec<Coord>,
    state: DualState,
}

impl Solver<'_> {
    #[inline]
    fn gradient(&self, i: usize) -> f64 {
        let dim = self.m.dim;
        let w = &self.state.w_running;
        let l1 = self.m.l1();
        let raw = if i < l1 {
            let p = &self.m.points[i];
            p.y * (dot(&w[..dim], &p.x) + w[dim] * self.bias)
        } else {
            dot(&w[..dim], &self.m.zpoints[i - l1].z)
        };
        raw - 1.0 + self.coords[i].diag * self.state.alpha[i]
    }

    /// Exact minimization along coordinate `i`; returns |projected gradient|
    /// measured before the step.
    fn update(&mut self, i: usize) -> f64 {
        let c = self.coords[i];
        if !c.active {
            return 0.0;
        }
        let g = self.gradient(i);
        let old = self.state.alpha[i];
        let pg = projected(old, g, c.upper);
        if pg != 0.0 {
            let new = (old - g / c.qd).max(0.0).min(c.upper);
            let delta = new - old;
            if delta != 0.0 {
                self.state.alpha[i] = new;
                let dim = self.m.dim;
                let l1 = self.m.l1();
                let w = &mut self.state.w_running;
                if i < l1 {
                    let p = &self.m.points[i];
                    let s = delta * p.y;
                    for (wj, xj) in w[..dim].iter_mut().zip(&p.x) {
                        *wj += s * xj;
                    }
                    w[dim] += s * self.bias;
                } else {
                    for (wj, zj) in w[..dim].iter_mut().zip(&self.m.zpoints[i - l1].z) {
                        *wj += delta * zj;
                    }
                }
            }
        }
        pg.abs()
    }

    fn max_projected_gradient(&self) -> f64 {
        (0..self.coords.len())
            .filter(|&i| self.coords[i].active)
            .map(|i| projected(self.state.alpha[i], self.gradient(i), self.coords[i].upper).abs())
            .fold(0.0, f64::max)
    }
}

/// Largest |projected gradient| over all coordinates at `state`.
pub fn kkt_residual(m: &TrainMatrix, cfg: &SvmConfig, state: &DualState) -> f64 {
    let solver = Solver {
        m,
        bias: cfg.bias_scale,
        coords: coords(m, cfg),
        state: state.clone(),
    };
    solver.max_projected_gradient()
}

/// Dual objective in minimization form,
/// `1/2 ||w||^2 - sum alpha (+ 1/2 sum alpha_i^2 / (2 C_i) for L2 loss)`,
/// evaluated from `w_running`.
pub fn dual_objective(m: &TrainMatrix, s: &DualState, cfg: &SvmConfig) -> Result<f64> {
    if s.alpha.len() != m.l1() + m.l2() {
        return Err(Error::DimensionMismatch {
            expected: m.l1() + m.l2(),
            got: s.alpha.len(),
        });
    }
    if s.w_running.len() != m.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: m.dim() + 1,
            got: s.w_running.len(),
        });
    }
    let cs = coords(m, cfg);
    let quad = 0.5 * dot(&s.w_running, &s.w_running);
    let lin: f64 = s.alpha.iter().sum();
    let diag: f64 = s
        .alpha
        .iter()
        .zip(&cs)
        .map(|(a, c)| 0.5 * c.diag * a * a)
        .sum();
    Ok(quad - lin + diag)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub hyperplane: Hyperplane,
    pub state: DualState,
}

pub fn train(m: &TrainMatrix, cfg: &SvmConfig) -> Result<Hyperplane> {
    train_traced(m, cfg, |_, _| {}).map(|o| o.hyperplane)
}

/// Trains and calls `observer(epoch, alpha)` after every epoch.
///
/// Each epoch visits the sign multipliers in a fresh random order, then the
/// z-point multipliers in a fresh random order. The two orders come from
/// independent streams seeded by `shuffle_seed`, so the sign-multiplier
/// trajectory does not depend on how many z-points exist.
pub fn train_traced(
    m: &TrainMatrix,
    cfg: &SvmConfig,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut solver = Solver {
        m,
        bias: cfg.bias_scale,
        coords: coords(m, cfg),
        state: DualState::zeros(m),
    };
    let l1 = m.l1();
    let mut sign_order: Vec<usize> = (0..l1).collect();
    let mut z_order: Vec<usize> = (l1..l1 + m.l2()).collect();
    let mut sign_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut z_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    z_rng.set_stream(1);

    let mut epochs = 0;
    let mut final_pg = f64::INFINITY;
    let mut converged = false;
    while epochs < cfg.max_epochs {
        sign_order.shuffle(&mut sign_rng);
        z_order.shuffle(&mut z_rng);
        let mut max_pg: f64 = 0.0;
        for &i in sign_order.iter().chain(&z_order) {
            max_pg = max_pg.max(solver.update(i));
        }
        epochs += 1;
        observer(epochs, &solver.state.alpha);
        if max_pg <= cfg.tol {
            // the epoch's gradients were taken at moving iterates; confirm at the final one
            final_pg = solver.max_projected_gradient();
            if final_pg <= cfg.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        final_pg = solver.max_projected_gradient();
        warn!(
            "dual coordinate descent stopped after {epochs} epochs with max projected gradient {final_pg:.3e}"
        );
    }
    let state = solver.state;
    if state.w_running.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("weight vector became non-finite".into()));
    }
    let objective = dual_objective(m, &state, cfg)?;
    let dim = m.dim();
    let hyperplane = Hyperplane {
        w: state.w_running[..dim].to_vec(),
        b: state.w_running[dim] * cfg.bias_scale,
        bias_scale: cfg.bias_scale,
        diagnostics: Diagnostics {
            epochs_run: epochs,
            final_max_projected_gradient: final_pg,
            dual_objective: objective,
            converged,
        },
    };
    Ok(TrainOutcome { hyperplane, state })
}

// ---------------------------------------------------------------------------
// Text format: dimension, bias_scale, b, then one weight per line.
// ---------------------------------------------------------------------------

pub fn write_hyperplane<W: Write>(h: &Hyperplane, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", h.w.len())?;
    writeln!(w, "{}", h.bias_scale)?;
    writeln!(w, "{}", h.b)?;
    for v in &h.w {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_hyperplane<R: BufRead>(r: R) -> Result<Hyperplane> {
    let mut values = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push((i + 1, line.to_string()));
    }
    let mut it = values.into_iter();
    let mut next = |what: &str| -> Result<(usize, String)> {
        it.next()
            .ok_or_else(|| Error::parse(0, format!("hyperplane file ends before {what}")))
    };
    let (l, s) = next("dimension")?;
    let dim: usize = s
        .parse()
        .map_err(|_| Error::parse(l, format!("invalid dimension {s:?}")))?;
    let mut real = |what: &str| -> Result<f64> {
        let (l, s) = next(what)?;
        let v: f64 = s
            .parse()
            .map_err(|_| Error::parse(l, format!("invalid {what} {s:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(l, format!("non-finite {what}")));
        }
        Ok(v)
    };
    let bias_scale = real("bias_scale")?;
    let b = real("bias")?;
    let w = (0..dim).map(|_| real("weight")).collect::<Result<Vec<_>>>()?;
    Ok(Hyperplane {
        w,
        b,
        bias_scale,
        diagnostics: Diagnostics::default(),
    })
}

pub fn save_hyperplane(h: &Hyperplane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_hyperplane(h, &mut buf).expect("write to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_hyperplane(path: impl AsRef<Path>) -> Result<Hyperplane> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_hyperplane(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_dataset, SynthConfig};

    fn two_point() -> TrainMatrix {
        let pt = |x: [f64; 2], y: f64| SignPoint {
            x: x.to_vec(),
            y,
            weight: 1.0,
            source: None,
        };
        TrainMatrix::from_parts(2, vec![pt([1.0, 0.0], 1.0), pt([-1.0, 0.0], -1.0)], vec![]).unwrap()
    }

    fn tight(c1: f64, c2: f64) -> SvmConfig {
        SvmConfig {
            c1,
            c2,
            tol: 1e-10,
            max_epochs: 100_000,
            bias_scale: 0.0,
            ..SvmConfig::default()
        }
    }

    #[test]
    fn symmetric_two_point_problem() {
        let m = two_point();
        let h = train(&m, &tight(100.0, 0.0)).unwrap();
        assert!((h.w[0] - 1.0).abs() < 1e-8 && h.w[1].abs() < 1e-12);
        assert_eq!(h.b, 0.0);
        assert!((decision_value(&h, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-8);
        assert!((decision_value(&h, &[-1.0, 0.0]).unwrap() + 1.0).abs() < 1e-8);
        assert!((decision_value(&h, &[2.0, 0.0]).unwrap() - 2.0).abs() < 1e-8);
        assert!(h.diagnostics.converged);
    }

    #[test]
    fn zero_weight_hyperplane_returns_bias() {
        let h = Hyperplane {
            w: vec![0.0; 3],
            b: 0.5,
            bias_scale: 1.0,
            diagnostics: Diagnostics::default(),
        };
        assert_eq!(decision_value(&h, &[4.0, -2.0, 9.0]).unwrap(), 0.5);
        assert!(matches!(
            decision_value(&h, &[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn dual_objective_closed_forms() {
        let m = two_point();
        let cfg = tight(2.0, 0.0);
        let zero = DualState::zeros(&m);
        assert_eq!(dual_objective(&m, &zero, &cfg).unwrap(), 0.0);
        // single point at its upper bound: 1/2 C^2 |x|^2 - C
        let single = TrainMatrix::from_parts(
            2,
            vec![SignPoint {
                x: vec![3.0, 4.0],
                y: -1.0,
                weight: 1.0,
                source: None,
            }],
            vec![],
        )
        .unwrap();
        let s = DualState::from_alpha(&single, &cfg, vec![2.0]).unwrap();
        assert_eq!(s.w_running, vec![-6.0, -8.0, 0.0]);
        assert!((dual_objective(&single, &s, &cfg).unwrap() - (0.5 * 4.0 * 25.0 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn build_train_matrix_counts_and_pairs() {
        let cfg = SynthConfig {
            n_trials: 2,
            n_iterations: 2,
            n_flashes: 6,
            n_levels: 2,
            feature_dim: 3,
            ..SynthConfig::default()
        };
        let (train_set, _) = synth_dataset(&cfg).unwrap();
        let m = build_train_matrix(&train_set).unwrap();
        assert_eq!(m.l1(), train_set.records().len());
        assert_eq!(m.l2(), m.l1() * 5 / 6);
        // nested-loop oracle: every non-target pairs with the target of its sequence
        let recs = train_set.records();
        let mut expected = Vec::new();
        for (i, a) in recs.iter().enumerate() {
            if a.is_target() {
                continue;
            }
            let (j, b) = recs
                .iter()
                .enumerate()
                .find(|(_, b)| {
                    b.is_target()
                        && b.index.trial == a.index.trial
                        && b.index.iteration == a.index.iteration
                        && b.index.level == a.index.level
                })
                .unwrap();
            let z: Vec<f64> = b.features.iter().zip(&a.features).map(|(p, q)| p - q).collect();
            expected.push((j, i, z));
        }
        let got: Vec<_> = m.zpoints().iter().map(|z| (z.target, z.nontarget, z.z.clone())).collect();
        assert_eq!(got, expected);
        // each 6-flash sequence yields 5 z-points sharing the minuend
        let first: Vec<_> = m.zpoints()[..5].iter().map(|z| z.target).collect();
        assert!(first.iter().all(|&t| t == first[0]));
        assert!(m.zpoints().iter().all(|z| !recs[z.nontarget].is_target()));
    }

    #[test]
    fn single_flash_pair_gives_one_zpoint() {
        let cfg = SynthConfig {
            n_trials: 1,
            n_iterations: 1,
            n_flashes: 2,
            n_levels: 1,
            feature_dim: 2,
            ..SynthConfig::default()
        };
        let (d, _) = synth_dataset(&cfg).unwrap();
        let m = build_train_matrix(&d).unwrap();
        assert_eq!((m.l1(), m.l2()), (2, 1));
        let trg = d.truth().target(0, 0);
        let non = 1 - trg;
        let z = &m.zpoints()[0];
        for j in 0..2 {
            assert_eq!(z.z[j], d.records()[trg].features[j] - d.records()[non].features[j]);
        }
    }

    #[test]
    fn zero_c2_keeps_rho_at_zero() {
        let cfg = SynthConfig {
            n_trials: 2,
            n_iterations: 2,
            feature_dim: 4,
            ..SynthConfig::default()
        };
        let (d, _) = synth_dataset(&cfg).unwrap();
        let m = build_train_matrix(&d).unwrap();
        let out = train_traced(&m, &SvmConfig { c2: 0.0, ..SvmConfig::default() }, |_, _| {}).unwrap();
        assert!(out.state.alpha[m.l1()..].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn zero_norm_points_are_skipped() {
        let m = TrainMatrix::from_parts(
            2,
            vec![
                SignPoint { x: vec![1.0, 1.0], y: 1.0, weight: 1.0, source: None },
                SignPoint { x: vec![0.0, 0.0], y: -1.0, weight: 1.0, source: None },
            ],
            vec![],
        )
        .unwrap();
        let out = train_traced(&m, &tight(1.0, 0.0), |_, _| {}).unwrap();
        assert_eq!(out.state.alpha[1], 0.0);
        assert!(out.hyperplane.diagnostics.converged);
    }

    #[test]
    fn rejects_non_finite_features() {
        let r = TrainMatrix::from_parts(
            1,
            vec![SignPoint { x: vec![f64::NAN], y: 1.0, weight: 1.0, source: None }],
            vec![],
        );
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn hyperplane_text_round_trip() {
        let h = Hyperplane {
            w: vec![0.1, -1.0 / 3.0, 1e-300, 12345.678],
            b: -0.7,
            bias_scale: 1.0,
            diagnostics: Diagnostics::default(),
        };
        let mut buf = Vec::new();
        write_hyperplane(&h, &mut buf).unwrap();
        let back = read_hyperplane(buf.as_slice()).unwrap();
        assert_eq!(back, h);
    }
}
