//! Per-dataset comparison tables from user-supplied recordings.
//!
//! The harness expects `<root>/<dataset>/<subject>/{train,test}.txt` in the
//! dataset text format. For every subject it trains three hyperplanes
//! (L1-SVM, L2-SVM and M-SVM), optimizes score profiles for both protocols
//! and evaluates DV-med, SBF and OSBF on the test split. Dataset rows hold
//! subject means.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{class_split, EvalReport, Method};
use crate::linsvm::{Loss, SvmConfig};
use crate::pipeline::{
    evaluate_subject, optimize_subject, prepare_subject, train_subject, zone_stage, EvalConfig, PipelineConfig,
    Preprocessing, ScoreOptConfig, ScoringConfig, SubjectSpec,
};
use crate::scoreopt::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classifier {
    #[serde(rename = "L1-SVM")]
    L1Svm,
    #[serde(rename = "L2-SVM")]
    L2Svm,
    #[serde(rename = "M-SVM")]
    MSvm,
}

impl Classifier {
    pub const ALL: [Classifier; 3] = [Classifier::L1Svm, Classifier::L2Svm, Classifier::MSvm];

    pub fn label(&self) -> &'static str {
        match self {
            Classifier::L1Svm => "L1-SVM",
            Classifier::L2Svm => "L2-SVM",
            Classifier::MSvm => "M-SVM",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub root: PathBuf,
    pub preprocessing: Preprocessing,
    /// Costs, tolerance and seed shared by all three hyperplanes.
    pub svm: SvmConfig,
    pub msvm_loss: Loss,
    pub scoreopt: ScoreOptConfig,
    pub scoring: ScoringConfig,
    pub jobs: usize,
}

impl HarnessConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        HarnessConfig {
            root: root.into(),
            preprocessing: Preprocessing::default(),
            svm: SvmConfig::default(),
            msvm_loss: Loss::L1,
            scoreopt: ScoreOptConfig::default(),
            scoring: ScoringConfig::default(),
            jobs: 0,
        }
    }

    fn svm_for(&self, c: Classifier) -> SvmConfig {
        let mut s = self.svm.clone();
        match c {
            Classifier::L1Svm => {
                s.loss = Loss::L1;
                s.c2 = 0.0;
            }
            Classifier::L2Svm => {
                s.loss = Loss::L2;
                s.c2 = 0.0;
            }
            Classifier::MSvm => s.loss = self.msvm_loss,
        }
        s
    }
}

/// Evaluations of one subject under one hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub dataset: String,
    pub subject: String,
    pub classifier: Classifier,
    pub evaluations: Vec<EvalReport>,
}

impl SubjectResult {
    fn get(&self, method: Method, mode: Mode) -> Option<&EvalReport> {
        self.evaluations.iter().find(|r| r.method == method && r.mode == mode)
    }
}

/// Lists `(dataset, subject, dir)` under the harness root in sorted order.
pub fn discover(root: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let list = |p: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        v.sort();
        Ok(v)
    };
    let mut out = Vec::new();
    for ds in list(root)? {
        for subj in list(&ds)? {
            if subj.join("train.txt").is_file() && subj.join("test.txt").is_file() {
                let name = |p: &Path| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                out.push((name(&ds), name(&subj), subj));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "no <dataset>/<subject>/{{train,test}}.txt found under {}",
            root.display()
        )));
    }
    Ok(out)
}

fn run_one(cfg: &HarnessConfig, dataset: &str, subject: &str, dir: &Path) -> Result<Vec<SubjectResult>> {
    let spec = SubjectSpec {
        name: subject.to_string(),
        train: Some(dir.join("train.txt")),
        test: Some(dir.join("test.txt")),
        synth: None,
    };
    let mut pcfg = PipelineConfig {
        dataset: dataset.to_string(),
        out_dir: PathBuf::new(),
        jobs: 1,
        subjects: vec![spec.clone()],
        preprocessing: cfg.preprocessing.clone(),
        svm: cfg.svm.clone(),
        scoring: cfg.scoring.clone(),
        scoreopt: ScoreOptConfig {
            modes: vec![Mode::NoStop, Mode::EarlyStop],
            ..cfg.scoreopt.clone()
        },
        eval: EvalConfig {
            methods: vec![Method::DvMed, Method::Sbf, Method::Osbf],
        },
    };
    let (train_set, test_set) = prepare_subject(&pcfg, &spec)?;
    Classifier::ALL
        .iter()
        .map(|&c| {
            pcfg.svm = cfg.svm_for(c);
            let h = train_subject(&pcfg.svm, &train_set)?;
            let zones = zone_stage(pcfg.scoring.grouping, &h, &train_set, &test_set)?;
            let opts = optimize_subject(&pcfg, &train_set, &zones.z_train)?;
            Ok(SubjectResult {
                dataset: dataset.to_string(),
                subject: subject.to_string(),
                classifier: c,
                evaluations: evaluate_subject(&pcfg, &h, &test_set, &zones, &opts)?,
            })
        })
        .collect()
}

/// Runs every subject under `cfg.root`.
pub fn run_harness(cfg: &HarnessConfig) -> Result<Vec<SubjectResult>> {
    let subjects = discover(&cfg.root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let parts: Vec<Result<Vec<SubjectResult>>> = pool.install(|| {
        subjects
            .par_iter()
            .map(|(ds, subj, dir)| run_one(cfg, ds, subj, dir))
            .collect()
    });
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    /// `(dataset, values)`; `None` marks an empty cell.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl Table {
    pub fn cell(&self, dataset: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.0 == dataset).and_then(|r| r.1[c])
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {}\n\n| Dataset | {} |\n|---|", self.title, self.columns.join(" | "));
        s.push_str(&"---|".repeat(self.columns.len()));
        s.push('\n');
        for (ds, vals) in &self.rows {
            let cells: Vec<String> = vals
                .iter()
                .map(|v| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}")))
                .collect();
            let _ = writeln!(s, "| {ds} | {} |", cells.join(" | "));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("dataset,{}\n", self.columns.join(","));
        for (ds, vals) in &self.rows {
            let cells: Vec<String> = vals.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())).collect();
            let _ = writeln!(s, "{ds},{}", cells.join(","));
        }
        s
    }
}

#[derive(Clone, Copy)]
enum Metric {
    Accuracy,
    Itr,
}

fn metric(r: &EvalReport, m: Metric) -> f64 {
    match m {
        Metric::Accuracy => r.accuracy,
        Metric::Itr => r.itr_bits_per_min,
    }
}

/// Column spec: header, classifier, method, mode, metric.
type Column = (String, Classifier, Method, Mode, Metric);

fn table(results: &[SubjectResult], name: &str, title: &str, cols: &[Column]) -> Table {
    let datasets: Vec<String> = results
        .iter()
        .map(|r| r.dataset.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows = datasets
        .into_iter()
        .map(|ds| {
            let vals = cols
                .iter()
                .map(|(_, c, method, mode, m)| {
                    let v: Vec<f64> = results
                        .iter()
                        .filter(|r| r.dataset == ds && r.classifier == *c)
                        .filter_map(|r| r.get(*method, *mode).map(|e| metric(e, *m)))
                        .collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect();
            (ds, vals)
        })
        .collect();
    Table {
        name: name.into(),
        title: title.into(),
        columns: cols.iter().map(|c| c.0.clone()).collect(),
        rows,
    }
}

fn col(method: Method, c: Classifier, mode: Mode, m: Metric) -> Column {
    let head = match method {
        Method::DvMed => "DV-med",
        Method::ErpAvg => "ERP-avg",
        Method::Sbf => "SBF",
        Method::Osbf => "OSBF",
    };
    (format!("{head} {}", c.label()), c, method, mode, m)
}

/// Builds all comparison tables from harness results.
pub fn build_tables(results: &[SubjectResult]) -> Result<Vec<Table>> {
    use Classifier::*;
    use Method::*;
    use Metric::*;
    use Mode::*;
    let mut out = vec![
        table(
            results,
            "nostop_accuracy",
            "Accuracy without early stopping: DV-med, SBF and OSBF",
            &[
                col(DvMed, L1Svm, NoStop, Accuracy),
                col(DvMed, L2Svm, NoStop, Accuracy),
                col(Sbf, L1Svm, NoStop, Accuracy),
                col(Sbf, L2Svm, NoStop, Accuracy),
                col(Osbf, L1Svm, NoStop, Accuracy),
                col(Osbf, L2Svm, NoStop, Accuracy),
            ],
        ),
        table(
            results,
            "nostop_accuracy_by_hyperplane",
            "OSBF accuracy without early stopping by hyperplane",
            &[
                col(Osbf, L1Svm, NoStop, Accuracy),
                col(Osbf, L2Svm, NoStop, Accuracy),
                col(Osbf, MSvm, NoStop, Accuracy),
            ],
        ),
    ];
    out.push(class_split_table(results)?);
    out.extend([
        table(
            results,
            "earlystop_accuracy",
            "Accuracy with early stopping: SBF and OSBF",
            &[
                col(Sbf, L1Svm, EarlyStop, Accuracy),
                col(Sbf, L2Svm, EarlyStop, Accuracy),
                col(Osbf, L1Svm, EarlyStop, Accuracy),
                col(Osbf, L2Svm, EarlyStop, Accuracy),
            ],
        ),
        table(
            results,
            "earlystop_accuracy_by_hyperplane",
            "OSBF accuracy with early stopping by hyperplane",
            &[
                col(Osbf, L1Svm, EarlyStop, Accuracy),
                col(Osbf, L2Svm, EarlyStop, Accuracy),
                col(Osbf, MSvm, EarlyStop, Accuracy),
            ],
        ),
        table(
            results,
            "earlystop_itr",
            "ITR (bit/min) with early stopping: SBF and OSBF",
            &[
                col(Sbf, L1Svm, EarlyStop, Itr),
                col(Sbf, L2Svm, EarlyStop, Itr),
                col(Osbf, L1Svm, EarlyStop, Itr),
                col(Osbf, L2Svm, EarlyStop, Itr),
            ],
        ),
        table(
            results,
            "earlystop_itr_by_hyperplane",
            "OSBF ITR (bit/min) with early stopping by hyperplane",
            &[
                col(Osbf, L1Svm, EarlyStop, Itr),
                col(Osbf, L2Svm, EarlyStop, Itr),
                col(Osbf, MSvm, EarlyStop, Itr),
            ],
        ),
    ]);
    Ok(out)
}

type ReportsByHyperplane = (BTreeMap<String, EvalReport>, BTreeMap<String, EvalReport>);

/// OSBF no-stopping accuracy split by whether L2-SVM or M-SVM did better.
fn class_split_table(results: &[SubjectResult]) -> Result<Table> {
    let mut by_ds: BTreeMap<&str, ReportsByHyperplane> = BTreeMap::new();
    for r in results {
        let Some(e) = r.get(Method::Osbf, Mode::NoStop) else { continue };
        let entry = by_ds.entry(&r.dataset).or_default();
        match r.classifier {
            Classifier::L2Svm => entry.0.insert(r.subject.clone(), e.clone()),
            Classifier::MSvm => entry.1.insert(r.subject.clone(), e.clone()),
            Classifier::L1Svm => None,
        };
    }
    let mut rows = Vec::new();
    for (ds, (std, msvm)) in by_ds {
        if std.is_empty() {
            continue;
        }
        let s = class_split(&std, &msvm)?;
        rows.push((
            ds.to_string(),
            vec![
                s.class1_mean_std,
                s.class1_mean_msvm,
                s.class2_mean_std,
                s.class2_mean_msvm,
                Some(s.total_mean_std),
                Some(s.total_mean_msvm),
            ],
        ));
    }
    Ok(Table {
        name: "class_split".into(),
        title: "OSBF accuracy for subjects where L2-SVM beats M-SVM (class 1) and the converse (class 2)".into(),
        columns: [
            "Class 1 L2-SVM",
            "Class 1 M-SVM",
            "Class 2 L2-SVM",
            "Class 2 M-SVM",
            "Tot L2-SVM",
            "Tot M-SVM",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    })
}

/// Published figures to compare a reproduction against: (table, dataset,
/// column, value). Tolerances are not asserted since preprocessing choices
/// such as decimation and channel lists are not fully pinned down.
pub const REFERENCE_FIGURES: [(&str, &str, &str, f64); 5] = [
    ("nostop_accuracy", "ALSP300Speller", "OSBF L2-SVM", 0.963),
    ("nostop_accuracy", "AMUSE", "OSBF L2-SVM", 0.796),
    ("nostop_accuracy_by_hyperplane", "ALSP300Speller", "OSBF M-SVM", 0.975),
    ("nostop_accuracy_by_hyperplane", "AMUSE", "OSBF M-SVM", 0.806),
    ("earlystop_itr_by_hyperplane", "ALSP300Speller", "OSBF M-SVM", 21.79),
];

/// Side-by-side listing of reproduced and reference figures.
pub fn reference_report(tables: &[Table]) -> String {
    let mut s = String::from("| table | dataset | column | reference | reproduced |\n|---|---|---|---|---|\n");
    for (t, ds, c, v) in REFERENCE_FIGURES {
        let got = tables
            .iter()
            .find(|x| x.name == t)
            .and_then(|x| x.cell(ds, c))
            .map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(s, "| {t} | {ds} | {c} | {v} | {got} |");
    }
    s
}

/// Writes `<name>.csv` per table, `tables.md` and `subjects.json` to `out`.
pub fn write_tables(out: &Path, tables: &[Table], results: &[SubjectResult]) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut md = String::new();
    for t in tables {
        let p = out.join(format!("{}.csv", t.name));
        fs::write(&p, t.to_csv()).map_err(|e| Error::io(&p, e))?;
        md.push_str(&t.to_markdown());
        md.push('\n');
    }
    md.push_str("### Reference figures\n\n");
    md.push_str(&reference_report(tables));
    let p = out.join("tables.md");
    fs::write(&p, md).map_err(|e| Error::io(&p, e))?;
    let p = out.join("subjects.json");
    let json = serde_json::to_string_pretty(results).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(&p, json).map_err(|e| Error::io(&p, e))
}
