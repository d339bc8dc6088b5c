//! Config-driven runs: ingest, preprocess, train, optimize scores, evaluate
//! and write reports.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! dataset = "synth"
//! out_dir = "out"
//!
//! [[subjects]]
//! name = "s01"
//! train = "data/s01/train.txt"
//! test = "data/s01/test.txt"
//!
//! [preprocessing]
//! decimation = 4
//! channels = [0, 1, 2, 3]
//!
//! [svm]
//! loss = "l2"
//! c1 = 1.0
//! c2 = 1.0
//!
//! [scoreopt]
//! l = -10
//! u = 10
//! modes = ["nostop", "earlystop"]
//!
//! [eval]
//! methods = ["dv_med", "sbf", "osbf"]
//! ```
//!
//! A subject may carry a `[subjects.synth]` table instead of file paths.
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{decimate, load_dataset, select_channels, synth_dataset, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{
    predict_dv_med, predict_erp_avg, predict_scorebased, write_summary_csv, EvalReport, Method, SummaryRow,
};
use crate::linsvm::{build_train_matrix, load_hyperplane, save_hyperplane, train, Hyperplane, SvmConfig};
use crate::scoreopt::{objective, optimize_mode, LatticeBounds, Mode, OptResult, TimingParams, TIE_EPS};
use crate::scoring::{
    assign_zones, decision_tensor, quartiles, sbf_heuristic_profile, DvTensor, Grouping, Quartiles, ScoreProfile,
    ZoneTensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSpec {
    pub name: String,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    /// Keep every k-th sample per channel; 1 disables decimation.
    pub decimation: usize,
    /// Channels to keep, 0-based; empty keeps all.
    pub channels: Vec<usize>,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            decimation: 1,
            channels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbfOverride {
    pub scores: [i32; 5],
    pub delta: i32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Defaults to per-level for one level and pooled otherwise.
    pub grouping: Option<Grouping>,
    pub sbf_profile: Option<SbfOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptConfig {
    pub l: i32,
    pub u: i32,
    /// Defaults to `n_r (u - l)`.
    pub delta_max: Option<i32>,
    pub modes: Vec<Mode>,
}

impl Default for ScoreOptConfig {
    fn default() -> Self {
        ScoreOptConfig {
            l: -10,
            u: 10,
            delta_max: None,
            modes: vec![Mode::NoStop, Mode::EarlyStop],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_dataset_name")]
    pub dataset: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub jobs: usize,
    pub subjects: Vec<SubjectSpec>,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub scoreopt: ScoreOptConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_dataset_name() -> String {
    "dataset".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    /// Replaces the SVM shuffle seed and every synthetic seed (offset by the
    /// subject's position).
    pub seed: Option<u64>,
    pub modes: Option<Vec<Mode>>,
    pub methods: Option<Vec<Method>>,
    pub jobs: Option<usize>,
}

impl PipelineConfig {
    /// Parses a config; relative paths resolve against `base_dir`.
    pub fn from_toml_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        for s in &mut cfg.subjects {
            s.train.as_mut().map(resolve);
            s.test.as_mut().map(resolve);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.svm.shuffle_seed = seed;
            for (i, s) in self.subjects.iter_mut().enumerate() {
                if let Some(synth) = &mut s.synth {
                    synth.seed = seed.wrapping_add(i as u64);
                }
            }
        }
        if let Some(m) = &o.modes {
            self.scoreopt.modes = m.clone();
        }
        if let Some(m) = &o.methods {
            self.eval.methods = m.clone();
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(Error::Config("config lists no subjects".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.subjects {
            if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
                return Err(Error::Config(format!("invalid subject name {:?}", s.name)));
            }
            if !names.insert(&s.name) {
                return Err(Error::Config(format!("duplicate subject {:?}", s.name)));
            }
            match (&s.train, &s.test, &s.synth) {
                (Some(_), Some(_), None) => {}
                (None, None, Some(synth)) => synth.validate()?,
                _ => {
                    return Err(Error::Config(format!(
                        "subject {:?} needs either train and test paths or a synth table",
                        s.name
                    )))
                }
            }
        }
        if self.preprocessing.decimation == 0 {
            return Err(Error::Config("decimation must be at least 1".into()));
        }
        self.svm.validate()?;
        if self.scoreopt.modes.is_empty() {
            return Err(Error::Config("no score-optimization mode selected".into()));
        }
        if self.eval.methods.is_empty() {
            return Err(Error::Config("no evaluation method selected".into()));
        }
        // the default delta_max depends on n_r and is checked per subject
        LatticeBounds::new(self.scoreopt.l, self.scoreopt.u, self.scoreopt.delta_max.unwrap_or(i32::MAX))?;
        self.sbf_profile()?;
        Ok(())
    }

    pub fn sbf_profile(&self) -> Result<ScoreProfile> {
        match self.scoring.sbf_profile {
            None => Ok(sbf_heuristic_profile()),
            Some(o) => ScoreProfile::new(o.scores, o.delta, (o.scores[4], o.scores[0])),
        }
    }

    /// SHA-256 of the effective configuration's canonical JSON form, leaving
    /// out the output directory and worker count, which do not affect results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.jobs = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn bounds_for(&self, n_iterations: usize) -> Result<LatticeBounds> {
        match self.scoreopt.delta_max {
            Some(d) => LatticeBounds::new(self.scoreopt.l, self.scoreopt.u, d),
            None => LatticeBounds::with_default_delta(self.scoreopt.l, self.scoreopt.u, n_iterations),
        }
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Loads or generates a subject's data and applies preprocessing.
pub fn prepare_subject(cfg: &PipelineConfig, spec: &SubjectSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = match (&spec.train, &spec.test, &spec.synth) {
        (Some(a), Some(b), None) => (load_dataset(a)?, load_dataset(b)?),
        (None, None, Some(s)) => synth_dataset(s)?,
        _ => return Err(Error::Config(format!("subject {:?} has no data source", spec.name))),
    };
    if train.meta.n_levels() != test.meta.n_levels() || train.meta.n_flashes != test.meta.n_flashes {
        return Err(Error::Invariant(format!(
            "subject {:?}: train and test protocols differ",
            spec.name
        )));
    }
    let pp = |d: Dataset| -> Result<Dataset> {
        let d = if cfg.preprocessing.channels.is_empty() {
            d
        } else {
            select_channels(&d, &cfg.preprocessing.channels)?
        };
        if cfg.preprocessing.decimation > 1 {
            decimate(&d, cfg.preprocessing.decimation)
        } else {
            Ok(d)
        }
    };
    Ok((pp(train)?, pp(test)?))
}

pub fn train_subject(svm: &SvmConfig, train_set: &Dataset) -> Result<Hyperplane> {
    let m = build_train_matrix(train_set)?;
    let m = if svm.c2 == 0.0 { m.without_zpoints() } else { m };
    let h = train(&m, svm)?;
    info!(
        "trained on {} points and {} z-points: {} epochs, dual objective {:.6}",
        m.l1(),
        m.l2(),
        h.diagnostics.epochs_run,
        h.diagnostics.dual_objective
    );
    Ok(h)
}

/// Decision values and zones for both splits, with quartiles frozen from
/// the training split.
#[derive(Debug, Clone)]
pub struct ZoneStage {
    pub dv_train: DvTensor,
    pub dv_test: DvTensor,
    pub quartiles: Quartiles,
    pub z_train: ZoneTensor,
    pub z_test: ZoneTensor,
}

pub fn zone_stage(grouping: Option<Grouping>, h: &Hyperplane, train_set: &Dataset, test_set: &Dataset) -> Result<ZoneStage> {
    let g = grouping.unwrap_or_else(|| Grouping::default_for(train_set.meta.n_levels()));
    let dv_train = decision_tensor(h, train_set)?.with_grouping(g);
    let dv_test = decision_tensor(h, test_set)?.with_grouping(g);
    let q = quartiles(&dv_train, g)?;
    let z_train = assign_zones(&dv_train, &q)?;
    let z_test = assign_zones(&dv_test, &q)?;
    Ok(ZoneStage {
        dv_train,
        dv_test,
        quartiles: q,
        z_train,
        z_test,
    })
}

pub fn timing_for(d: &Dataset) -> TimingParams {
    let s = d.shape();
    TimingParams {
        soa_seconds: d.meta.soa_seconds,
        flashes_per_iteration: d.meta.flashes_per_iteration,
        n_trials: s.n_trials,
        n_iterations: s.n_iterations,
    }
}

/// Optimized profile for one mode together with the baseline it must beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptRecord {
    pub result: OptResult,
    pub sbf_objective: f64,
    /// Whether the baseline profile lies in the searched lattice.
    pub sbf_admitted: bool,
}

/// Runs the score optimization for each mode and checks that the optimum is
/// at least as good as the baseline profile whenever the lattice contains it.
pub fn optimize_subject(cfg: &PipelineConfig, train_set: &Dataset, z_train: &ZoneTensor) -> Result<Vec<ScoreOptRecord>> {
    let bounds = cfg.bounds_for(train_set.shape().n_iterations)?;
    let tp = timing_for(train_set);
    let sbf = cfg.sbf_profile()?;
    cfg.scoreopt
        .modes
        .iter()
        .map(|&mode| {
            let result = optimize_mode(mode, z_train, train_set.truth(), &bounds, &tp)?;
            let sbf_objective = objective(mode, z_train, train_set.truth(), &sbf, &tp)?;
            let sbf_admitted = bounds.admits(&sbf);
            if sbf_admitted && result.objective + TIE_EPS < sbf_objective {
                return Err(Error::Numeric(format!(
                    "{} optimum {} below baseline objective {}",
                    mode.as_str(),
                    result.objective,
                    sbf_objective
                )));
            }
            info!(
                "{}: scores {:?}, delta {}, objective {:.6} (baseline {:.6}), {} nodes in {:.1} ms",
                mode.as_str(),
                result.profile.scores,
                result.profile.delta,
                result.objective,
                sbf_objective,
                result.nodes_explored,
                result.wall_time_ms
            );
            Ok(ScoreOptRecord {
                result,
                sbf_objective,
                sbf_admitted,
            })
        })
        .collect()
}

/// Evaluates every configured method on the test split.
pub fn evaluate_subject(
    cfg: &PipelineConfig,
    h: &Hyperplane,
    test_set: &Dataset,
    zones: &ZoneStage,
    opts: &[ScoreOptRecord],
) -> Result<Vec<EvalReport>> {
    let meta = &test_set.meta;
    let truth = test_set.truth();
    let sbf = cfg.sbf_profile()?;
    let mut methods = cfg.eval.methods.clone();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for method in methods {
        match method {
            Method::DvMed => {
                let p = predict_dv_med(&zones.dv_test, test_set)?;
                out.push(EvalReport::build(method, Mode::NoStop, p, meta, truth)?);
            }
            Method::ErpAvg => {
                let p = predict_erp_avg(h, test_set)?;
                out.push(EvalReport::build(method, Mode::NoStop, p, meta, truth)?);
            }
            Method::Sbf | Method::Osbf => {
                for &mode in &cfg.scoreopt.modes {
                    let profile = if method == Method::Sbf {
                        sbf
                    } else {
                        opts.iter()
                            .find(|o| o.result.mode == mode)
                            .map(|o| o.result.profile)
                            .ok_or_else(|| Error::Config(format!("no optimized profile for {}", mode.as_str())))?
                    };
                    let p = predict_scorebased(&zones.z_test, &profile, mode, truth)?;
                    out.push(EvalReport::build(method, mode, p, meta, truth)?);
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub dataset: String,
    pub subject: String,
    pub n_train_trials: usize,
    pub n_test_trials: usize,
    pub feature_dim: usize,
    pub hyperplane_diagnostics: crate::linsvm::Diagnostics,
    pub quartiles: Quartiles,
    pub sbf_profile: ScoreProfile,
    pub score_optimization: Vec<ScoreOptRecord>,
    pub evaluations: Vec<EvalReport>,
}

impl SubjectReport {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.evaluations
            .iter()
            .map(|r| SummaryRow::from_report(&self.dataset, &self.subject, r))
            .collect()
    }

    pub fn evaluation(&self, method: Method, mode: Mode) -> Option<&EvalReport> {
        self.evaluations.iter().find(|r| r.method == method && r.mode == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub svm_seed: u64,
    pub synth_seeds: BTreeMap<String, u64>,
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.hash(),
            svm_seed: cfg.svm.shuffle_seed,
            synth_seeds: cfg
                .subjects
                .iter()
                .filter_map(|s| s.synth.as_ref().map(|c| (s.name.clone(), c.seed)))
                .collect(),
            config: cfg.clone(),
        }
    }
}

/// Machine-readable failure description written next to the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl ErrorRecord {
    pub fn new(e: &Error, subject: Option<String>) -> Self {
        ErrorRecord {
            kind: e.kind().into(),
            message: e.to_string(),
            exit_code: e.exit_code(),
            subject,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Numeric(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("{}: {e}", path.display()),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes an [`ErrorRecord`] to `<out_dir>/error.json`, ignoring I/O
/// failures since the caller is already reporting an error.
pub fn write_error_record(out_dir: &Path, rec: &ErrorRecord) {
    if fs::create_dir_all(out_dir).is_ok() {
        let _ = write_json(&out_dir.join("error.json"), rec);
    }
}

/// How far a run proceeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Train and save one hyperplane per subject.
    Train,
    /// Train, then optimize score profiles.
    OptimizeScores,
    /// Evaluate with hyperplanes and profiles saved by earlier stages.
    Evaluate,
    /// Everything.
    Full,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<SubjectReport>,
    pub out_dir: PathBuf,
}

impl RunOutput {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.reports.iter().flat_map(|r| r.summary_rows()).collect()
    }
}

fn subject_dir(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn run_subject(cfg: &PipelineConfig, spec: &SubjectSpec, stage: Stage) -> Result<Option<SubjectReport>> {
    let dir = subject_dir(cfg, &spec.name);
    create_dir(&dir)?;
    let (train_set, test_set) = prepare_subject(cfg, spec)?;
    let h = if stage == Stage::Evaluate {
        load_hyperplane(dir.join("hyperplane.txt"))?
    } else {
        let h = train_subject(&cfg.svm, &train_set)?;
        save_hyperplane(&h, dir.join("hyperplane.txt"))?;
        h
    };
    if stage == Stage::Train {
        return Ok(None);
    }
    let zones = zone_stage(cfg.scoring.grouping, &h, &train_set, &test_set)?;
    let opts = if stage == Stage::Evaluate {
        read_json::<Vec<ScoreOptRecord>>(&dir.join("score_optimization.json"))?
    } else {
        let opts = optimize_subject(cfg, &train_set, &zones.z_train)?;
        write_json(&dir.join("score_optimization.json"), &opts)?;
        opts
    };
    if stage == Stage::OptimizeScores {
        return Ok(None);
    }
    let evaluations = evaluate_subject(cfg, &h, &test_set, &zones, &opts)?;
    let report = SubjectReport {
        dataset: cfg.dataset.clone(),
        subject: spec.name.clone(),
        n_train_trials: train_set.n_trials(),
        n_test_trials: test_set.n_trials(),
        feature_dim: train_set.feature_dim(),
        hyperplane_diagnostics: h.diagnostics,
        quartiles: zones.quartiles.clone(),
        sbf_profile: cfg.sbf_profile()?,
        score_optimization: opts,
        evaluations,
    };
    write_json(&dir.join("report.json"), &report)?;
    let zpath = dir.join("zones_test.csv");
    let mut zfile = std::io::BufWriter::new(fs::File::create(&zpath).map_err(|e| Error::io(&zpath, e))?);
    zones.z_test.write_csv(&mut zfile).map_err(|e| Error::io(&zpath, e))?;
    Ok(Some(report))
}

/// Runs `stage` for every subject on a pool of `cfg.jobs` workers and writes
/// the manifest, per-subject files and (for evaluating stages) the summary
/// CSV. Output files depend only on the config, not on the worker count.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<RunOutput> {
    cfg.validate()?;
    create_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("manifest.json"), &Manifest::new(cfg))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<Option<SubjectReport>>> = pool.install(|| {
        cfg.subjects
            .par_iter()
            .map(|s| {
                run_subject(cfg, s, stage).inspect_err(|e| {
                    write_error_record(&subject_dir(cfg, &s.name), &ErrorRecord::new(e, Some(s.name.clone())));
                })
            })
            .collect()
    });
    let mut reports = Vec::new();
    for r in results {
        if let Some(rep) = r? {
            reports.push(rep);
        }
    }
    let out = RunOutput {
        reports,
        out_dir: cfg.out_dir.clone(),
    };
    if matches!(stage, Stage::Evaluate | Stage::Full) {
        let path = cfg.out_dir.join("summary.csv");
        let mut buf = Vec::new();
        write_summary_csv(&out.summary_rows(), &mut buf).map_err(|e| Error::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    Ok(out)
}

pub fn run(cfg: &PipelineConfig) -> Result<RunOutput> {
    run_stage(cfg, Stage::Full)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset = "synth"
out_dir = "results"

[[subjects]]
name = "s1"
train = "d/train.txt"
test = "/abs/test.txt"
"#;

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = PipelineConfig::from_toml_str(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/base/results"));
        assert_eq!(cfg.subjects[0].train.as_deref(), Some(Path::new("/base/d/train.txt")));
        assert_eq!(cfg.subjects[0].test.as_deref(), Some(Path::new("/abs/test.txt")));
        assert_eq!(cfg.scoreopt.l, -10);
        assert_eq!(cfg.scoreopt.u, 10);
        assert_eq!(cfg.eval.methods.len(), 4);
        assert_eq!(cfg.svm, SvmConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = PipelineConfig::from_toml_str("subjects = []\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sbf_override_round_trips() {
        let text = format!("{MINIMAL}\n[scoring]\nsbf_profile = {{ scores = [5, 3, 1, 0, -4], delta = 12 }}\n");
        let cfg = PipelineConfig::from_toml_str(&text, Path::new("/")).unwrap();
        let p = cfg.sbf_profile().unwrap();
        assert_eq!(p.scores, [5, 3, 1, 0, -4]);
        assert_eq!(p.delta, 12);
        let bad = format!("{MINIMAL}\n[scoring]\nsbf_profile = {{ scores = [5, 3, 1, 0, -4], delta = 2 }}\n");
        let cfg = PipelineConfig::from_toml_str(&bad, Path::new("/")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_replace_seeds_and_modes() {
        let text = "[[subjects]]\nname = \"a\"\n[subjects.synth]\nn_trials = 4\nn_iterations = 2\nn_flashes = 3\nn_levels = 1\nfeature_dim = 4\ntarget_shift = 3.0\nnoise_sd = 1.0\nseed = 1\n";
        let mut cfg = PipelineConfig::from_toml_str(text, Path::new("/")).unwrap();
        let before = cfg.hash();
        cfg.apply(&Overrides {
            seed: Some(40),
            modes: Some(vec![Mode::EarlyStop]),
            ..Default::default()
        });
        assert_eq!(cfg.svm.shuffle_seed, 40);
        assert_eq!(cfg.subjects[0].synth.as_ref().unwrap().seed, 40);
        assert_eq!(cfg.scoreopt.modes, vec![Mode::EarlyStop]);
        assert_ne!(before, cfg.hash());
    }
}
