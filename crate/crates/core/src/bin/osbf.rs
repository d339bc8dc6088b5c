use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use osbf::dataset::{save_dataset, synth_dataset, SynthConfig};
use osbf::eval::{write_summary_csv, Method};
use osbf::pipeline::{run_stage, write_error_record, ErrorRecord, Overrides, PipelineConfig, Stage};
use osbf::scoreopt::Mode;
use osbf::selftest::{run_selftest, SelftestOptions};
use osbf::{Error, Result};

#[derive(Parser)]
#[command(name = "osbf", version, about = "ERP-speller classification with optimized score-based decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic train/test pair in the dataset text format.
    Synth(Common),
    /// Train one hyperplane per subject.
    Train(Common),
    /// Train and select score profiles on the training split.
    OptimizeScores(Common),
    /// Evaluate with hyperplanes and profiles from earlier stages.
    Evaluate(Common),
    /// Run the whole pipeline.
    Run(Common),
    /// Run the acceptance suite and print one line per criterion.
    Selftest {
        #[command(flatten)]
        common: Common,
        /// Dataset tree `<dataset>/<subject>/{train,test}.txt` for the
        /// reproduction harness.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (TOML). For `synth`, a synthetic-data config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// May be given several times.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out.clone(),
            seed: self.seed,
            modes: self.mode.map(|m| vec![m]),
            methods: (!self.methods.is_empty()).then(|| self.methods.clone()),
            jobs: self.jobs,
        }
    }

    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
        let mut cfg = PipelineConfig::load(path)?;
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

fn synth(c: &Common) -> Result<()> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    let (train, test) = synth_dataset(&cfg)?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    save_dataset(&train, out.join("train.txt"))?;
    save_dataset(&test, out.join("test.txt"))?;
    println!("wrote {} and {}", out.join("train.txt").display(), out.join("test.txt").display());
    Ok(())
}

fn stage(c: &Common, stage: Stage) -> Result<()> {
    let cfg = c.pipeline_config()?;
    let out = run_stage(&cfg, stage).inspect_err(|e| write_error_record(&cfg.out_dir, &ErrorRecord::new(e, None)))?;
    if matches!(stage, Stage::Evaluate | Stage::Full) {
        let mut stdout = std::io::stdout().lock();
        write_summary_csv(&out.summary_rows(), &mut stdout).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

fn selftest(c: &Common, data: Option<PathBuf>) -> Result<bool> {
    let mut opts = SelftestOptions {
        data_dir: data,
        ..SelftestOptions::default()
    };
    if let Some(s) = c.seed {
        opts.seed = s;
    }
    if let Some(j) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let results = run_selftest(&opts);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let skipped = results.iter().filter(|r| r.skipped).count();
    println!("{} passed, {skipped} skipped, {failed} failed of {}", results.len() - failed - skipped, results.len());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synth(c) => synth(c),
        Command::Train(c) => stage(c, Stage::Train),
        Command::OptimizeScores(c) => stage(c, Stage::OptimizeScores),
        Command::Evaluate(c) => stage(c, Stage::Evaluate),
        Command::Run(c) => stage(c, Stage::Full),
        Command::Selftest { common, data } => match selftest(common, data.clone()) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let rec = ErrorRecord::new(&e, None);
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
