//! Labeled stimulus tensors indexed by (trial, iteration, level, flash).
//!
//! A [`Dataset`] stores one feature vector per stimulus presentation together
//! with the protocol metadata and an explicit truth map (the target flash of
//! every trial and level). Records are kept in canonical order so that every
//! derived tensor (decision values, zones) can share the same [`Shape`].
//!
//! Feature vectors are laid out channel-major: `n_channels` consecutive blocks
//! of `samples_per_channel` values each.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Protocol parameters of an acquisition paradigm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMeta {
    /// Number of selectable symbols (N in the bitrate formula).
    pub n_symbols: usize,
    /// Ordered level identifiers; records refer to levels by position.
    pub levels: Vec<String>,
    /// Stimuli per level per iteration.
    pub n_flashes: usize,
    pub max_iterations: usize,
    pub soa_seconds: f64,
    /// Total stimuli in one stimulation sequence across all levels.
    pub flashes_per_iteration: usize,
    /// Pre/post-stimulus pauses. Carried as metadata, never used in timing.
    pub overhead_seconds: f64,
    pub n_channels: usize,
    pub samples_per_channel: usize,
}

impl ProtocolMeta {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.n_channels * self.samples_per_channel
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Invariant("protocol declares no levels".into()));
        }
        if self.n_flashes < 2 {
            return Err(Error::Invariant(format!(
                "n_flashes must be at least 2, got {}",
                self.n_flashes
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::Invariant("max_iterations must be at least 1".into()));
        }
        if !(self.soa_seconds > 0.0 && self.soa_seconds.is_finite()) {
            return Err(Error::Invariant(format!(
                "soa must be positive, got {}",
                self.soa_seconds
            )));
        }
        if self.flashes_per_iteration != self.n_flashes * self.n_levels() {
            return Err(Error::Invariant(format!(
                "flashes_per_iteration {} != n_flashes {} x levels {}",
                self.flashes_per_iteration,
                self.n_flashes,
                self.n_levels()
            )));
        }
        let capacity = (self.n_flashes as f64).powi(self.n_levels() as i32);
        if self.n_symbols as f64 > capacity {
            return Err(Error::Invariant(format!(
                "n_symbols {} exceeds n_flashes^levels = {}",
                self.n_symbols, capacity
            )));
        }
        if self.n_channels == 0 || self.samples_per_channel == 0 {
            return Err(Error::Invariant("empty feature layout".into()));
        }
        Ok(())
    }
}

/// Zero-based position of a stimulus in the (trial, iteration, level, flash) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StimulusIndex {
    pub trial: usize,
    pub iteration: usize,
    pub level: usize,
    pub flash: usize,
}

impl fmt::Display for StimulusIndex {
    // Same convention as the file format: 1-based except the level.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(k={},r={},t={},f={})",
            self.trial + 1,
            self.iteration + 1,
            self.level,
            self.flash + 1
        )
    }
}

/// Extents of a stimulus tensor. Linear offsets are row-major in (k, r, t, f).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub n_trials: usize,
    pub n_iterations: usize,
    pub n_levels: usize,
    pub n_flashes: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.n_sequences() * self.n_flashes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_sequences(&self) -> usize {
        self.n_trials * self.n_iterations * self.n_levels
    }

    /// Offset of the first flash of sequence (k, r, t).
    #[inline]
    pub fn sequence_offset(&self, trial: usize, iteration: usize, level: usize) -> usize {
        ((trial * self.n_iterations + iteration) * self.n_levels + level) * self.n_flashes
    }

    #[inline]
    pub fn offset(&self, idx: StimulusIndex) -> usize {
        self.sequence_offset(idx.trial, idx.iteration, idx.level) + idx.flash
    }

    pub fn index_of(&self, offset: usize) -> StimulusIndex {
        let flash = offset % self.n_flashes;
        let rest = offset / self.n_flashes;
        let level = rest % self.n_levels;
        let rest = rest / self.n_levels;
        StimulusIndex {
            trial: rest / self.n_iterations,
            iteration: rest % self.n_iterations,
            level,
            flash,
        }
    }

    pub fn contains(&self, idx: StimulusIndex) -> bool {
        idx.trial < self.n_trials
            && idx.iteration < self.n_iterations
            && idx.level < self.n_levels
            && idx.flash < self.n_flashes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusRecord {
    pub index: StimulusIndex,
    /// +1 for the target stimulus, -1 otherwise.
    pub label: i8,
    pub features: Vec<f64>,
}

impl StimulusRecord {
    pub fn is_target(&self) -> bool {
        self.label == 1
    }
}

/// Target flash of every (trial, level).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    n_levels: usize,
    targets: Vec<usize>,
}

impl Truth {
    pub fn new(n_trials: usize, n_levels: usize, targets: Vec<usize>) -> Result<Self> {
        if targets.len() != n_trials * n_levels {
            return Err(Error::Invariant(format!(
                "truth map has {} entries, expected {}",
                targets.len(),
                n_trials * n_levels
            )));
        }
        Ok(Truth { n_levels, targets })
    }

    #[inline]
    pub fn target(&self, trial: usize, level: usize) -> usize {
        self.targets[trial * self.n_levels + level]
    }

    pub fn n_trials(&self) -> usize {
        self.targets.len().checked_div(self.n_levels).unwrap_or(0)
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: ProtocolMeta,
    pub split: Split,
    n_trials: usize,
    records: Vec<StimulusRecord>,
    truth: Truth,
}

impl Dataset {
    /// Builds a dataset, placing records in canonical order and checking every
    /// structural invariant (completeness, one target per sequence that agrees
    /// with the truth map, uniform feature dimension).
    pub fn new(
        meta: ProtocolMeta,
        split: Split,
        n_trials: usize,
        records: Vec<StimulusRecord>,
        truth: Truth,
    ) -> Result<Self> {
        meta.validate()?;
        if n_trials == 0 {
            return Err(Error::Invariant("dataset has no trials".into()));
        }
        let shape = Shape {
            n_trials,
            n_iterations: meta.max_iterations,
            n_levels: meta.n_levels(),
            n_flashes: meta.n_flashes,
        };
        if truth.n_trials() != n_trials || truth.n_levels() != shape.n_levels {
            return Err(Error::Invariant("truth map does not match dataset extents".into()));
        }
        for k in 0..n_trials {
            for t in 0..shape.n_levels {
                if truth.target(k, t) >= shape.n_flashes {
                    return Err(Error::Invariant(format!(
                        "truth flash out of range at (k={},t={})",
                        k + 1,
                        t
                    )));
                }
            }
        }
        if records.len() != shape.len() {
            return Err(Error::Invariant(format!(
                "expected {} records ({} trials x {} iterations x {} levels x {} flashes), found {}",
                shape.len(),
                n_trials,
                shape.n_iterations,
                shape.n_levels,
                shape.n_flashes,
                records.len()
            )));
        }
        let dim = meta.feature_dim();
        let mut slots: Vec<Option<StimulusRecord>> = vec![None; shape.len()];
        for rec in records {
            if !shape.contains(rec.index) {
                return Err(Error::Invariant(format!("record index {} out of range", rec.index)));
            }
            if rec.label != 1 && rec.label != -1 {
                return Err(Error::Invariant(format!(
                    "label {} at {} is not +1/-1",
                    rec.label, rec.index
                )));
            }
            if rec.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: rec.features.len(),
                });
            }
            if rec.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("non-finite feature at {}", rec.index)));
            }
            let slot = &mut slots[shape.offset(rec.index)];
            if slot.is_some() {
                return Err(Error::Invariant(format!("duplicate record {}", rec.index)));
            }
            *slot = Some(rec);
        }
        let records: Vec<StimulusRecord> = slots.into_iter().map(|s| s.expect("complete")).collect();
        for k in 0..n_trials {
            for r in 0..shape.n_iterations {
                for t in 0..shape.n_levels {
                    let base = shape.sequence_offset(k, r, t);
                    let seq = &records[base..base + shape.n_flashes];
                    let mut targets = seq.iter().filter(|rec| rec.is_target());
                    let at = format!("(k={},r={},t={})", k + 1, r + 1, t);
                    match (targets.next(), targets.next()) {
                        (None, _) => return Err(Error::Invariant(format!("no target at {at}"))),
                        (Some(_), Some(_)) => {
                            return Err(Error::Invariant(format!("multiple targets at {at}")))
                        }
                        (Some(rec), None) => {
                            if rec.index.flash != truth.target(k, t) {
                                return Err(Error::Invariant(format!(
                                    "target flash {} disagrees with truth {} at {at}",
                                    rec.index.flash + 1,
                                    truth.target(k, t) + 1
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(Dataset {
            meta,
            split,
            n_trials,
            records,
            truth,
        })
    }

    pub fn shape(&self) -> Shape {
        Shape {
            n_trials: self.n_trials,
            n_iterations: self.meta.max_iterations,
            n_levels: self.meta.n_levels(),
            n_flashes: self.meta.n_flashes,
        }
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    /// Records in canonical (k, r, t, f) order.
    pub fn records(&self) -> &[StimulusRecord] {
        &self.records
    }

    pub fn record(&self, idx: StimulusIndex) -> &StimulusRecord {
        &self.records[self.shape().offset(idx)]
    }

    /// The flashes of one stimulation sequence.
    pub fn sequence(&self, trial: usize, iteration: usize, level: usize) -> &[StimulusRecord] {
        let shape = self.shape();
        let base = shape.sequence_offset(trial, iteration, level);
        &self.records[base..base + shape.n_flashes]
    }

    pub fn truth(&self) -> &Truth {
        &self.truth
    }

    pub fn feature_dim(&self) -> usize {
        self.meta.feature_dim()
    }

    fn with_features(&self, meta: ProtocolMeta, f: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
        let records = self
            .records
            .iter()
            .map(|rec| StimulusRecord {
                index: rec.index,
                label: rec.label,
                features: f(&rec.features),
            })
            .collect();
        Dataset {
            meta,
            split: self.split,
            n_trials: self.n_trials,
            records,
            truth: self.truth.clone(),
        }
    }
}

/// Replaces every run of `k` consecutive samples of each channel with their
/// mean. A trailing remainder shorter than `k` is dropped.
pub fn decimate(d: &Dataset, k: usize) -> Result<Dataset> {
    let spc = d.meta.samples_per_channel;
    if k == 0 {
        return Err(Error::Config("decimation factor must be at least 1".into()));
    }
    if k > spc {
        return Err(Error::Config(format!(
            "decimation factor {k} exceeds samples_per_channel {spc}"
        )));
    }
    let new_spc = spc / k;
    let n_channels = d.meta.n_channels;
    let mut meta = d.meta.clone();
    meta.samples_per_channel = new_spc;
    Ok(d.with_features(meta, |x| {
        let mut out = Vec::with_capacity(n_channels * new_spc);
        for ch in x.chunks_exact(spc) {
            for block in ch.chunks_exact(k) {
                out.push(block.iter().sum::<f64>() / k as f64);
            }
        }
        out
    }))
}

/// Restricts features to the listed channel blocks, preserving channel order.
pub fn select_channels(d: &Dataset, keep: &[usize]) -> Result<Dataset> {
    if keep.is_empty() {
        return Err(Error::Config("channel keep-list is empty".into()));
    }
    let n_channels = d.meta.n_channels;
    if let Some(&bad) = keep.iter().find(|&&c| c >= n_channels) {
        return Err(Error::Config(format!(
            "channel index {bad} out of range (n_channels = {n_channels})"
        )));
    }
    let mut channels: Vec<usize> = keep.to_vec();
    channels.sort_unstable();
    channels.dedup();
    let spc = d.meta.samples_per_channel;
    let mut meta = d.meta.clone();
    meta.n_channels = channels.len();
    Ok(d.with_features(meta, |x| {
        channels
            .iter()
            .flat_map(|&c| x[c * spc..(c + 1) * spc].iter().copied())
            .collect()
    }))
}

fn default_n_channels() -> usize {
    1
}

fn default_soa() -> f64 {
    0.25
}

/// Parameters of the planted-direction synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_trials: usize,
    /// Trials in the test split; defaults to `n_trials`.
    #[serde(default)]
    pub n_test_trials: Option<usize>,
    pub n_iterations: usize,
    pub n_flashes: usize,
    pub n_levels: usize,
    pub feature_dim: usize,
    #[serde(default = "default_n_channels")]
    pub n_channels: usize,
    pub target_shift: f64,
    pub noise_sd: f64,
    #[serde(default = "default_soa")]
    pub soa_seconds: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_trials: 40,
            n_test_trials: None,
            n_iterations: 8,
            n_flashes: 6,
            n_levels: 1,
            feature_dim: 16,
            n_channels: 1,
            target_shift: 5.0,
            noise_sd: 1.0,
            soa_seconds: 0.25,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_flashes < 2 {
            return Err(Error::Config("synthetic data needs at least 2 flashes".into()));
        }
        if self.n_trials == 0 || self.n_iterations == 0 || self.n_levels == 0 {
            return Err(Error::Config("synthetic extents must be positive".into()));
        }
        if self.n_test_trials == Some(0) {
            return Err(Error::Config("n_test_trials must be positive".into()));
        }
        if self.feature_dim == 0 || self.n_channels == 0 || !self.feature_dim.is_multiple_of(self.n_channels) {
            return Err(Error::Config(format!(
                "feature_dim {} must be a positive multiple of n_channels {}",
                self.feature_dim, self.n_channels
            )));
        }
        if !(self.target_shift >= 0.0) {
            return Err(Error::Config("target_shift must be non-negative".into()));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::Config("noise_sd must be positive".into()));
        }
        if !(self.soa_seconds > 0.0) {
            return Err(Error::Config("soa_seconds must be positive".into()));
        }
        Ok(())
    }

    pub fn meta(&self) -> ProtocolMeta {
        ProtocolMeta {
            n_symbols: self.n_flashes.pow(self.n_levels as u32),
            levels: (0..self.n_levels).map(|t| format!("level{t}")).collect(),
            n_flashes: self.n_flashes,
            max_iterations: self.n_iterations,
            soa_seconds: self.soa_seconds,
            flashes_per_iteration: self.n_flashes * self.n_levels,
            overhead_seconds: 0.0,
            n_channels: self.n_channels,
            samples_per_channel: self.feature_dim / self.n_channels,
        }
    }

    /// Unit vector along which target features are shifted.
    pub fn planted_direction(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        planted_direction(&mut rng, self.feature_dim)
    }
}

fn planted_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates a deterministic (train, test) pair for the given configuration.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let direction = planted_direction(&mut rng, cfg.feature_dim);
    let noise = Normal::new(0.0, cfg.noise_sd)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let meta = cfg.meta();
    let mut make = |n_trials: usize, split: Split| -> Result<Dataset> {
        let mut targets = Vec::with_capacity(n_trials * cfg.n_levels);
        let mut records = Vec::with_capacity(n_trials * cfg.n_iterations * cfg.n_levels * cfg.n_flashes);
        for trial in 0..n_trials {
            let first = targets.len();
            for _ in 0..cfg.n_levels {
                targets.push(rng.random_range(0..cfg.n_flashes));
            }
            for iteration in 0..cfg.n_iterations {
                for level in 0..cfg.n_levels {
                    let target = targets[first + level];
                    for flash in 0..cfg.n_flashes {
                        let is_target = flash == target;
                        let shift = if is_target { cfg.target_shift } else { 0.0 };
                        let features = direction
                            .iter()
                            .map(|&u| shift * u + noise.sample(&mut rng))
                            .collect();
                        records.push(StimulusRecord {
                            index: StimulusIndex {
                                trial,
                                iteration,
                                level,
                                flash,
                            },
                            label: if is_target { 1 } else { -1 },
                            features,
                        });
                    }
                }
            }
        }
        let truth = Truth::new(n_trials, cfg.n_levels, targets)?;
        Dataset::new(meta.clone(), split, n_trials, records, truth)
    };
    let train = make(cfg.n_trials, Split::Train)?;
    let test = make(cfg.n_test_trials.unwrap_or(cfg.n_trials), Split::Test)?;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(d, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_dataset<W: Write>(d: &Dataset, w: &mut W) -> std::io::Result<()> {
    let m = &d.meta;
    writeln!(w, "n_trials={}", d.n_trials)?;
    writeln!(w, "n_iterations={}", m.max_iterations)?;
    writeln!(w, "levels={}", m.levels.join(","))?;
    writeln!(w, "n_flashes={}", m.n_flashes)?;
    writeln!(w, "n_channels={}", m.n_channels)?;
    writeln!(w, "samples_per_channel={}", m.samples_per_channel)?;
    writeln!(w, "soa={}", m.soa_seconds)?;
    writeln!(w, "n_symbols={}", m.n_symbols)?;
    writeln!(w, "overhead={}", m.overhead_seconds)?;
    writeln!(w, "split={}", d.split.as_str())?;
    let mut line = String::new();
    for rec in &d.records {
        use std::fmt::Write as _;
        line.clear();
        let i = rec.index;
        write!(
            line,
            "{},{},{},{},{}",
            i.trial + 1,
            i.iteration + 1,
            i.level,
            i.flash + 1,
            rec.label
        )
        .expect("string write");
        for v in &rec.features {
            write!(line, ",{v}").expect("string write");
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "TRUTH")?;
    for k in 0..d.n_trials {
        for t in 0..m.n_levels() {
            writeln!(w, "{},{},{}", k + 1, t, d.truth.target(k, t) + 1)?;
        }
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what}: {s:?}")))
}

fn one_based(v: usize, line: usize, what: &str) -> Result<usize> {
    v.checked_sub(1)
        .ok_or_else(|| Error::parse(line, format!("{what} is 1-based, got 0")))
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Records,
        Truth,
    }
    let mut section = Section::Header;
    let mut header: Vec<(String, String, usize)> = Vec::new();
    let mut records = Vec::new();
    let mut truth_lines: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut dim: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "TRUTH" {
            section = Section::Truth;
            continue;
        }
        if section == Section::Header {
            if let Some((k, v)) = line.split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string(), lineno));
                continue;
            }
            section = Section::Records;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match section {
            Section::Records => {
                if fields.len() < 6 {
                    return Err(Error::parse(lineno, "record needs k,r,t,f,y and features"));
                }
                let k: usize = parse_num(fields[0], lineno, "trial")?;
                let r: usize = parse_num(fields[1], lineno, "iteration")?;
                let t: usize = parse_num(fields[2], lineno, "level")?;
                let f: usize = parse_num(fields[3], lineno, "flash")?;
                let y: i8 = parse_num(fields[4], lineno, "label")?;
                if y != 1 && y != -1 {
                    return Err(Error::parse(lineno, format!("label must be +1 or -1, got {y}")));
                }
                let features = fields[5..]
                    .iter()
                    .map(|s| parse_num::<f64>(s, lineno, "feature value"))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(v) = features.iter().find(|v| !v.is_finite()) {
                    return Err(Error::parse(lineno, format!("non-finite feature value {v}")));
                }
                match dim {
                    None => dim = Some(features.len()),
                    Some(d) if d != features.len() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: features.len(),
                        })
                    }
                    _ => {}
                }
                records.push(StimulusRecord {
                    index: StimulusIndex {
                        trial: one_based(k, lineno, "trial")?,
                        iteration: one_based(r, lineno, "iteration")?,
                        level: t,
                        flash: one_based(f, lineno, "flash")?,
                    },
                    label: y,
                    features,
                });
            }
            Section::Truth => {
                if fields.len() != 3 {
                    return Err(Error::parse(lineno, "truth line must be k,t,f_target"));
                }
                let k: usize = parse_num(fields[0], lineno, "trial")?;
                let t: usize = parse_num(fields[1], lineno, "level")?;
                let f: usize = parse_num(fields[2], lineno, "target flash")?;
                truth_lines.push((
                    one_based(k, lineno, "trial")?,
                    t,
                    one_based(f, lineno, "target flash")?,
                    lineno,
                ));
            }
            Section::Header => unreachable!(),
        }
    }

    let get = |key: &str| -> Result<(&str, usize)> {
        header
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
            .ok_or_else(|| Error::parse(0, format!("missing header key {key:?}")))
    };
    let num = |key: &str| -> Result<usize> {
        let (v, l) = get(key)?;
        parse_num(v, l, key)
    };
    let real = |key: &str| -> Result<f64> {
        let (v, l) = get(key)?;
        parse_num(v, l, key)
    };
    let n_trials = num("n_trials")?;
    let (levels_raw, _) = get("levels")?;
    let levels: Vec<String> = levels_raw
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let n_flashes = num("n_flashes")?;
    let meta = ProtocolMeta {
        n_symbols: num("n_symbols")?,
        flashes_per_iteration: n_flashes * levels.len(),
        levels,
        n_flashes,
        max_iterations: num("n_iterations")?,
        soa_seconds: real("soa")?,
        overhead_seconds: real("overhead")?,
        n_channels: num("n_channels")?,
        samples_per_channel: num("samples_per_channel")?,
    };
    let split = match get("split")? {
        ("train", _) => Split::Train,
        ("test", _) => Split::Test,
        (other, l) => return Err(Error::parse(l, format!("unknown split {other:?}"))),
    };
    let n_levels = meta.n_levels();
    let mut targets: Vec<Option<usize>> = vec![None; n_trials * n_levels];
    for (k, t, f, lineno) in truth_lines {
        if k >= n_trials || t >= n_levels {
            return Err(Error::parse(lineno, "truth entry out of range"));
        }
        let slot = &mut targets[k * n_levels + t];
        if slot.is_some() {
            return Err(Error::parse(lineno, "duplicate truth entry"));
        }
        *slot = Some(f);
    }
    let targets = targets
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| {
                Error::Invariant(format!(
                    "missing truth entry for (k={},t={})",
                    i / n_levels + 1,
                    i % n_levels
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = Truth::new(n_trials, n_levels, targets)?;
    Dataset::new(meta, split, n_trials, records, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_meta(levels: usize, flashes: usize, iterations: usize, channels: usize, spc: usize) -> ProtocolMeta {
        ProtocolMeta {
            n_symbols: flashes.pow(levels as u32),
            levels: (0..levels).map(|t| format!("L{t}")).collect(),
            n_flashes: flashes,
            max_iterations: iterations,
            soa_seconds: 0.25,
            flashes_per_iteration: flashes * levels,
            overhead_seconds: 0.0,
            n_channels: channels,
            samples_per_channel: spc,
        }
    }

    fn dataset_with_features(features: Vec<f64>, channels: usize, spc: usize) -> Dataset {
        // one trial, one iteration, one level, two flashes; flash 0 is target
        let meta = tiny_meta(1, 2, 1, channels, spc);
        let records = (0..2)
            .map(|f| StimulusRecord {
                index: StimulusIndex {
                    trial: 0,
                    iteration: 0,
                    level: 0,
                    flash: f,
                },
                label: if f == 0 { 1 } else { -1 },
                features: features.clone(),
            })
            .collect();
        Dataset::new(meta, Split::Train, 1, records, Truth::new(1, 1, vec![0]).unwrap()).unwrap()
    }

    const WELL_FORMED: &str = "\
n_trials=2
n_iterations=2
levels=rows
n_flashes=2
n_channels=1
samples_per_channel=2
soa=0.25
n_symbols=2
overhead=0
split=train
1,1,0,1,1,0.5,1.5
1,1,0,2,-1,0.1,0.2
1,2,0,1,1,0.5,1.5
1,2,0,2,-1,0.1,0.2
2,1,0,1,-1,0.5,1.5
2,1,0,2,1,0.1,0.2
2,2,0,1,-1,0.5,1.5
2,2,0,2,1,0.1,0.2
TRUTH
1,0,1
2,0,2
";

    #[test]
    fn loads_well_formed_file() {
        let d = read_dataset(WELL_FORMED.as_bytes()).unwrap();
        assert_eq!(d.records().len(), 8);
        assert_eq!(d.truth().target(1, 0), 1);
        assert_eq!(d.record(StimulusIndex { trial: 1, iteration: 0, level: 0, flash: 1 }).label, 1);
    }

    #[test]
    fn rejects_multiple_targets() {
        let bad = WELL_FORMED.replace("1,1,0,2,-1,0.1,0.2", "1,1,0,2,1,0.1,0.2");
        let err = read_dataset(bad.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "multiple targets at (k=1,r=1,t=0)");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = WELL_FORMED.replace("2,1,0,2,1,0.1,0.2", "2,1,0,2,1,0.1,abc");
        match read_dataset(bad.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 16),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_features_are_a_dimension_mismatch() {
        let bad = WELL_FORMED.replace("1,2,0,2,-1,0.1,0.2", "1,2,0,2,-1,0.1");
        assert!(matches!(
            read_dataset(bad.as_bytes()).unwrap_err(),
            Error::DimensionMismatch { expected: 2, got: 1 }
        ));
    }

    #[test]
    fn truth_must_agree_with_labels() {
        let bad = WELL_FORMED.replace("TRUTH\n1,0,1", "TRUTH\n1,0,2");
        assert!(read_dataset(bad.as_bytes()).unwrap_err().to_string().contains("disagrees"));
    }

    #[test]
    fn decimate_identity_and_block_means() {
        let d = dataset_with_features(vec![1., 2., 3., 4., 5., 6.], 1, 6);
        assert_eq!(decimate(&d, 1).unwrap(), d);
        let d3 = decimate(&d, 3).unwrap();
        assert_eq!(d3.records()[0].features, vec![2.0, 5.0]);
        assert_eq!(d3.meta.samples_per_channel, 2);
    }

    #[test]
    fn decimate_drops_remainder() {
        let d = dataset_with_features(vec![1., 2., 3., 4., 5.], 1, 5);
        let out = decimate(&d, 2).unwrap();
        // scalar loop oracle
        let src = [1., 2., 3., 4., 5.];
        let mut expect = Vec::new();
        let mut i = 0;
        while i + 2 <= src.len() {
            expect.push((src[i] + src[i + 1]) / 2.0);
            i += 2;
        }
        assert_eq!(out.records()[0].features, expect);
        assert_eq!(expect, vec![1.5, 3.5]);
    }

    #[test]
    fn decimate_rejects_bad_factors() {
        let d = dataset_with_features(vec![1., 2.], 1, 2);
        assert!(decimate(&d, 0).is_err());
        assert!(decimate(&d, 3).is_err());
    }

    #[test]
    fn select_channels_slices_blocks() {
        let d = dataset_with_features(vec![1., 2., 3., 4., 5., 6.], 3, 2);
        assert_eq!(select_channels(&d, &[0, 1, 2]).unwrap(), d);
        let s = select_channels(&d, &[0, 2]).unwrap();
        assert_eq!(s.records()[0].features, vec![1., 2., 5., 6.]);
        assert_eq!(s.meta.n_channels, 2);
        assert!(select_channels(&d, &[]).is_err());
        assert!(select_channels(&d, &[3]).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_valid() {
        let cfg = SynthConfig {
            n_trials: 3,
            n_levels: 2,
            ..SynthConfig::default()
        };
        let (a, b) = synth_dataset(&cfg).unwrap();
        let (a2, b2) = synth_dataset(&cfg).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert_eq!(a.records().len(), 3 * 8 * 2 * 6);
        assert_eq!(a.split, Split::Train);
        assert_eq!(b.split, Split::Test);
    }

    #[test]
    fn synth_rejects_degenerate_config() {
        let cfg = SynthConfig {
            n_flashes: 1,
            ..SynthConfig::default()
        };
        assert!(synth_dataset(&cfg).is_err());
    }

    #[test]
    fn zero_shift_populations_are_indistinguishable() {
        let cfg = SynthConfig {
            target_shift: 0.0,
            n_trials: 60,
            ..SynthConfig::default()
        };
        let (train, _) = synth_dataset(&cfg).unwrap();
        let u = cfg.planted_direction();
        let proj = |x: &[f64]| x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let (mut tg, mut nt) = (Vec::new(), Vec::new());
        for rec in train.records() {
            if rec.is_target() {
                tg.push(proj(&rec.features));
            } else {
                nt.push(proj(&rec.features));
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        // projections are N(0, 1) in both populations
        let se = (1.0 / tg.len() as f64 + 1.0 / nt.len() as f64).sqrt();
        let z = (mean(&tg) - mean(&nt)) / se;
        assert!(z.abs() < 4.0, "two-sample z = {z}");
    }

    #[test]
    fn shape_offsets_round_trip() {
        let s = Shape {
            n_trials: 3,
            n_iterations: 4,
            n_levels: 2,
            n_flashes: 5,
        };
        for o in 0..s.len() {
            assert_eq!(s.offset(s.index_of(o)), o);
        }
    }
}
