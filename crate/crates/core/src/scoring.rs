//! Decision values, quartile zones and integer score profiles.
//!
//! Every stimulus gets one of five zones from the quartiles of the training
//! decision values:
//!
//! ```text
//!   v <  q1          -> e
//!   q1 <= v < q2     -> d
//!   q2 <= v < q3     -> c
//!   v >= q3          -> a  if v > 0 and v is the strict maximum of its sequence
//!                       b  otherwise
//! ```
//!
//! A [`ScoreProfile`] maps zones to integer scores; summing the scores of a
//! stimulus over iterations gives its cumulative score.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Shape, StimulusIndex};
use crate::error::{Error, Result};
use crate::linsvm::Hyperplane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    A,
    B,
    C,
    D,
    E,
}

impl Zone {
    pub const ALL: [Zone; 5] = [Zone::A, Zone::B, Zone::C, Zone::D, Zone::E];

    /// Position in the score vector (a = 0 .. e = 4).
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Confidence rank, a = 4 highest.
    pub fn rank(self) -> usize {
        4 - self.index()
    }

    pub fn letter(self) -> char {
        ['a', 'b', 'c', 'd', 'e'][self.index()]
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Which stimuli share quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Separate quartiles for each level.
    PerLevel,
    /// One set of quartiles for all levels together.
    Pooled,
}

impl Grouping {
    /// Per-level for single-level paradigms, pooled otherwise.
    pub fn default_for(n_levels: usize) -> Self {
        if n_levels <= 1 {
            Grouping::PerLevel
        } else {
            Grouping::Pooled
        }
    }

    fn n_groups(self, n_levels: usize) -> usize {
        match self {
            Grouping::PerLevel => n_levels,
            Grouping::Pooled => 1,
        }
    }

    #[inline]
    fn group_of(self, level: usize) -> usize {
        match self {
            Grouping::PerLevel => level,
            Grouping::Pooled => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvTensor {
    pub shape: Shape,
    pub grouping: Grouping,
    pub values: Vec<f64>,
}

impl DvTensor {
    pub fn new(shape: Shape, grouping: Grouping, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: shape.len(),
                got: values.len(),
            });
        }
        Ok(DvTensor {
            shape,
            grouping,
            values,
        })
    }

    pub fn with_grouping(mut self, grouping: Grouping) -> Self {
        self.grouping = grouping;
        self
    }

    #[inline]
    pub fn get(&self, idx: StimulusIndex) -> f64 {
        self.values[self.shape.offset(idx)]
    }

    pub fn sequence(&self, trial: usize, iteration: usize, level: usize) -> &[f64] {
        let base = self.shape.sequence_offset(trial, iteration, level);
        &self.values[base..base + self.shape.n_flashes]
    }
}

/// `w·x + b` for every stimulus of `d`.
pub fn decision_tensor(h: &Hyperplane, d: &Dataset) -> Result<DvTensor> {
    if h.dim() != d.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: d.feature_dim(),
            got: h.dim(),
        });
    }
    let values = d.records().iter().map(|r| h.eval_unchecked(&r.features)).collect();
    DvTensor::new(d.shape(), Grouping::default_for(d.meta.n_levels()), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub grouping: Grouping,
    /// `[q1, q2, q3]` per group.
    pub groups: Vec<[f64; 3]>,
}

impl Quartiles {
    pub fn for_level(&self, level: usize) -> [f64; 3] {
        self.groups[self.grouping.group_of(level)]
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(dv: &DvTensor, grouping: Grouping) -> Result<Quartiles> {
    let shape = dv.shape;
    let n_groups = grouping.n_groups(shape.n_levels);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_groups];
    for (o, &v) in dv.values.iter().enumerate() {
        buckets[grouping.group_of(shape.index_of(o).level)].push(v);
    }
    let groups = buckets
        .into_iter()
        .enumerate()
        .map(|(g, mut b)| {
            if b.is_empty() {
                return Err(Error::Invariant(format!("quartile group {g} is empty")));
            }
            if b.iter().any(|v| v.is_nan()) {
                return Err(Error::Numeric("NaN decision value".into()));
            }
            b.sort_by(f64::total_cmp);
            Ok([
                quantile_sorted(&b, 0.25),
                quantile_sorted(&b, 0.5),
                quantile_sorted(&b, 0.75),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Quartiles { grouping, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTensor {
    pub shape: Shape,
    pub zones: Vec<Zone>,
}

impl ZoneTensor {
    pub fn new(shape: Shape, zones: Vec<Zone>) -> Result<Self> {
        if zones.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: shape.len(),
                got: zones.len(),
            });
        }
        Ok(ZoneTensor { shape, zones })
    }

    #[inline]
    pub fn get(&self, idx: StimulusIndex) -> Zone {
        self.zones[self.shape.offset(idx)]
    }

    pub fn sequence(&self, trial: usize, iteration: usize, level: usize) -> &[Zone] {
        let base = self.shape.sequence_offset(trial, iteration, level);
        &self.zones[base..base + self.shape.n_flashes]
    }

    /// Audit export, one `k,r,t,f,zone` line per stimulus.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "k,r,t,f,zone")?;
        for (o, z) in self.zones.iter().enumerate() {
            let i = self.shape.index_of(o);
            writeln!(w, "{},{},{},{},{}", i.trial + 1, i.iteration + 1, i.level, i.flash + 1, z)?;
        }
        Ok(())
    }
}

#[inline]
fn zone_for(v: f64, q: [f64; 3], strict_max: bool) -> Zone {
    if v < q[0] {
        Zone::E
    } else if v < q[1] {
        Zone::D
    } else if v < q[2] {
        Zone::C
    } else if v > 0.0 && strict_max {
        Zone::A
    } else {
        Zone::B
    }
}

pub fn assign_zones(dv: &DvTensor, q: &Quartiles) -> Result<ZoneTensor> {
    let shape = dv.shape;
    if q.groups.len() != q.grouping.n_groups(shape.n_levels) {
        return Err(Error::Invariant(format!(
            "quartiles have {} groups, tensor needs {}",
            q.groups.len(),
            q.grouping.n_groups(shape.n_levels)
        )));
    }
    let mut zones = Vec::with_capacity(shape.len());
    for k in 0..shape.n_trials {
        for r in 0..shape.n_iterations {
            for t in 0..shape.n_levels {
                let seq = dv.sequence(k, r, t);
                let qt = q.for_level(t);
                for (f, &v) in seq.iter().enumerate() {
                    let strict_max = seq.iter().enumerate().all(|(g, &u)| g == f || v > u);
                    zones.push(zone_for(v, qt, strict_max));
                }
            }
        }
    }
    ZoneTensor::new(shape, zones)
}

/// Integer zone scores `(a, b, c, d, e)` and the stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreProfile {
    pub scores: [i32; 5],
    pub delta: i32,
    /// `(l, u)` the scores were chosen within.
    pub bounds: (i32, i32),
}

impl ScoreProfile {
    pub fn new(scores: [i32; 5], delta: i32, bounds: (i32, i32)) -> Result<Self> {
        let p = ScoreProfile {
            scores,
            delta,
            bounds,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.scores;
        let (l, u) = self.bounds;
        if s[0] > u || s[4] < l {
            return Err(Error::Config(format!("scores {s:?} outside bounds [{l}, {u}]")));
        }
        if s.windows(2).any(|w| w[1] > w[0] - 1) {
            return Err(Error::Config(format!("scores {s:?} must strictly decrease")));
        }
        if s[2] < 0 {
            return Err(Error::Config(format!("score c must be non-negative in {s:?}")));
        }
        if self.delta < s[0] - s[4] + 1 {
            return Err(Error::Config(format!(
                "threshold {} below floor {}",
                self.delta,
                s[0] - s[4] + 1
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn score(&self, z: Zone) -> i32 {
        self.scores[z.index()]
    }

    /// Lowest admissible threshold for these scores.
    pub fn delta_floor(&self) -> i32 {
        self.scores[0] - self.scores[4] + 1
    }
}

/// Per-flash cumulative score over the first `upto_r` iterations.
pub fn cumulative_scores(
    z: &ZoneTensor,
    p: &ScoreProfile,
    trial: usize,
    level: usize,
    upto_r: usize,
) -> Result<Vec<i64>> {
    let s = z.shape;
    if trial >= s.n_trials || level >= s.n_levels || upto_r > s.n_iterations {
        return Err(Error::Invariant(format!(
            "cumulative score index (k={},t={},r={}) out of range",
            trial + 1,
            level,
            upto_r
        )));
    }
    let mut acc = vec![0i64; s.n_flashes];
    for r in 0..upto_r {
        for (a, &zone) in acc.iter_mut().zip(z.sequence(trial, r, level)) {
            *a += p.score(zone) as i64;
        }
    }
    Ok(acc)
}

/// The fixed heuristic baseline `(2, 1, 0, -1, -2)` with `delta = 5`.
pub fn sbf_heuristic_profile() -> ScoreProfile {
    ScoreProfile {
        scores: [2, 1, 0, -1, -2],
        delta: 5,
        bounds: (-2, 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n_k: usize, n_r: usize, n_t: usize, n_f: usize) -> Shape {
        Shape {
            n_trials: n_k,
            n_iterations: n_r,
            n_levels: n_t,
            n_flashes: n_f,
        }
    }

    fn q_of(values: &[f64]) -> [f64; 3] {
        let dv = DvTensor::new(shape(1, 1, 1, values.len()), Grouping::PerLevel, values.to_vec()).unwrap();
        quartiles(&dv, Grouping::PerLevel).unwrap().groups[0]
    }

    #[test]
    fn type7_quartiles() {
        assert_eq!(q_of(&[1., 2., 3., 4., 5.]), [2., 3., 4.]);
        assert_eq!(q_of(&[0., 1.]), [0.25, 0.5, 0.75]);
        assert_eq!(q_of(&[3.5, 3.5, 3.5]), [3.5, 3.5, 3.5]);
        assert_eq!(q_of(&[5., 1., 4., 2., 3.]), [2., 3., 4.]);
    }

    #[test]
    fn zone_example_sequence() {
        let vals = vec![5., 1., 0., -1., -2., -3.];
        let dv = DvTensor::new(shape(1, 1, 1, 6), Grouping::PerLevel, vals.clone()).unwrap();
        let q = Quartiles {
            grouping: Grouping::PerLevel,
            groups: vec![[-1., 0.5, 2.]],
        };
        let z = assign_zones(&dv, &q).unwrap();
        use Zone::*;
        assert_eq!(z.zones, vec![A, C, D, D, E, E]);
        // independent scalar rule
        let scalar = |v: f64, max_other: f64| {
            if v < -1. {
                'e'
            } else if v < 0.5 {
                'd'
            } else if v < 2. {
                'c'
            } else if v > 0. && v > max_other {
                'a'
            } else {
                'b'
            }
        };
        for (f, &v) in vals.iter().enumerate() {
            let other = vals
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .map(|(_, &u)| u)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(z.zones[f].letter(), scalar(v, other));
        }
    }

    #[test]
    fn tied_maxima_get_b() {
        let dv = DvTensor::new(shape(1, 1, 1, 3), Grouping::PerLevel, vec![3., 3., -1.]).unwrap();
        let q = Quartiles {
            grouping: Grouping::PerLevel,
            groups: vec![[-2., 0., 1.]],
        };
        let z = assign_zones(&dv, &q).unwrap();
        assert_eq!(z.zones, vec![Zone::B, Zone::B, Zone::D]);
    }

    #[test]
    fn negative_max_is_not_a() {
        let dv = DvTensor::new(shape(1, 1, 1, 3), Grouping::PerLevel, vec![-0.5, -3., -4.]).unwrap();
        let q = Quartiles {
            grouping: Grouping::PerLevel,
            groups: vec![[-3.5, -2., -1.]],
        };
        assert_eq!(assign_zones(&dv, &q).unwrap().zones[0], Zone::B);
    }

    #[test]
    fn all_below_q1_are_e() {
        let dv = DvTensor::new(shape(1, 2, 1, 3), Grouping::PerLevel, vec![-9.; 6]).unwrap();
        let q = Quartiles {
            grouping: Grouping::PerLevel,
            groups: vec![[0., 1., 2.]],
        };
        assert!(assign_zones(&dv, &q).unwrap().zones.iter().all(|&z| z == Zone::E));
    }

    #[test]
    fn per_level_grouping_separates_levels() {
        // level 0 values are large, level 1 small
        let vals = vec![10., 11., 12., 0., 1., 2.];
        let dv = DvTensor::new(shape(1, 1, 2, 3), Grouping::PerLevel, vals).unwrap();
        let q = quartiles(&dv, Grouping::PerLevel).unwrap();
        assert_eq!(q.groups, vec![[10.5, 11., 11.5], [0.5, 1., 1.5]]);
        let pooled = quartiles(&dv, Grouping::Pooled).unwrap();
        assert_eq!(pooled.groups.len(), 1);
        assert!(assign_zones(&dv, &pooled).is_ok());
        let wrong = Quartiles {
            grouping: Grouping::PerLevel,
            groups: vec![[0., 0., 0.]],
        };
        assert!(assign_zones(&dv, &wrong).is_err());
    }

    #[test]
    fn cumulative_scores_examples() {
        let p = sbf_heuristic_profile();
        let z = ZoneTensor::new(shape(1, 3, 1, 2), vec![Zone::A, Zone::E, Zone::A, Zone::E, Zone::A, Zone::E]).unwrap();
        assert_eq!(cumulative_scores(&z, &p, 0, 0, 1).unwrap(), vec![2, -2]);
        assert_eq!(cumulative_scores(&z, &p, 0, 0, 3).unwrap(), vec![6, -6]);
        assert_eq!(cumulative_scores(&z, &p, 0, 0, 0).unwrap(), vec![0, 0]);
        assert!(cumulative_scores(&z, &p, 0, 0, 4).is_err());
        assert!(cumulative_scores(&z, &p, 1, 0, 1).is_err());
    }

    #[test]
    fn heuristic_profile_is_feasible() {
        let p = sbf_heuristic_profile();
        assert_eq!((p.scores, p.delta), ([2, 1, 0, -1, -2], 5));
        p.validate().unwrap();
    }

    #[test]
    fn profile_validation() {
        assert!(ScoreProfile::new([3, 2, 1, 0, -1], 5, (-3, 3)).is_ok());
        assert!(ScoreProfile::new([3, 2, 2, 0, -1], 5, (-3, 3)).is_err());
        assert!(ScoreProfile::new([3, 2, 1, 0, -1], 4, (-3, 3)).is_err());
        assert!(ScoreProfile::new([1, 0, -1, -2, -3], 5, (-3, 3)).is_err());
        assert!(ScoreProfile::new([4, 2, 1, 0, -1], 6, (-3, 3)).is_err());
    }

    #[test]
    fn zone_csv_export() {
        let z = ZoneTensor::new(shape(1, 1, 2, 2), vec![Zone::A, Zone::E, Zone::B, Zone::C]).unwrap();
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,r,t,f,zone\n1,1,0,1,a\n1,1,0,2,e\n1,1,1,1,b\n1,1,1,2,c\n"
        );
    }
}
