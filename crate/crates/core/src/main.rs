use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use action_search::config::RunConfig;
use action_search::eval::{self, EvalReport};
use action_search::inference::{parse_detections, write_detections, Detection};
use action_search::pipeline::{self, BaselineKind, SweepParam, SPLITS};
use action_search::world::io::{read_json, write_json};
use action_search::Error;
use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "action-search", version, about = "Learned temporal search for action localization")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed (also settable via ACTION_SEARCH_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoints_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    reports_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic videos, ground truth and simulated search histories.
    GenData {
        /// Split to generate; all splits when omitted.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SPLITS))]
        split: Option<String>,
        /// Number of videos per generated split.
        #[arg(long)]
        videos: Option<usize>,
    },
    /// Train the classifier, duration priors and per-class search models.
    Train {
        #[arg(long, conflicts_with = "all")]
        class: Option<u32>,
        #[arg(long)]
        all: bool,
    },
    /// Run the search-based detector over a split.
    Detect {
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        detect: DetectFlags,
    },
    /// Write uniform baseline proposals for a split.
    Baseline {
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_enum, default_value = "both")]
        kind: KindArg,
        /// Proposals per video and ground-truth class.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Score JSON-lines detections against a split's ground truth.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        #[arg(long)]
        recall_budget: Option<usize>,
    },
    /// Recall curves while varying top_k or nms_threshold.
    Sweep {
        #[arg(long, value_enum)]
        param: ParamArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "val")]
        split: String,
        #[command(flatten)]
        detect: DetectFlags,
    },
}

#[derive(Args)]
struct DetectFlags {
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    nms_threshold: Option<f64>,
    #[arg(long)]
    num_segments: Option<usize>,
    #[arg(long)]
    segment_length: Option<f64>,
    #[arg(long)]
    search_steps: Option<usize>,
    #[arg(long)]
    num_restarts: Option<usize>,
    #[arg(long)]
    max_detections: Option<usize>,
}

impl DetectFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.detect;
        if let Some(v) = self.top_k {
            d.top_k = v;
        }
        if let Some(v) = self.nms_threshold {
            d.nms_threshold = v;
        }
        if let Some(v) = self.num_segments {
            d.num_segments = v;
        }
        if let Some(v) = self.segment_length {
            d.segment_length = Some(v);
        }
        if let Some(v) = self.search_steps {
            d.search_steps = v;
        }
        if let Some(v) = self.num_restarts {
            d.num_restarts = v;
        }
        if let Some(v) = self.max_detections {
            d.max_detections = Some(v);
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Uniform,
    UniformPrior,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    #[value(name = "top_k", alias = "top-k")]
    TopK,
    #[value(name = "nms_threshold", alias = "nms-threshold")]
    NmsThreshold,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.downcast_ref::<Error>().map_or(3, Error::exit_code);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.data_dir {
        cfg.paths.data_dir = p.clone();
    }
    if let Some(p) = &cli.checkpoints_dir {
        cfg.paths.checkpoints_dir = p.clone();
    }
    if let Some(p) = &cli.reports_dir {
        cfg.paths.reports_dir = p.clone();
    }
    Ok(cfg)
}

fn check_split(split: &str) -> Result<(), Error> {
    if SPLITS.contains(&split) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown split {split:?}; expected one of {SPLITS:?}")))
    }
}

fn reports_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    let dir = cfg.paths.reports_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn write_lines(path: &Path, detections: &[Detection]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_detections(&mut buf, detections)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Vec<PathBuf>> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Detect { detect, .. } | Command::Sweep { detect, .. } => detect.apply(&mut cfg),
        Command::Eval {
            thresholds,
            budgets,
            recall_budget,
            ..
        } => {
            if let Some(t) = thresholds {
                cfg.eval.thresholds = t.clone();
            }
            if let Some(b) = budgets {
                cfg.eval.budgets = b.clone();
            }
            if let Some(b) = recall_budget {
                cfg.eval.recall_budget = *b;
            }
        }
        Command::Baseline { budget: Some(b), .. } => cfg.eval.recall_budget = *b,
        _ => {}
    }
    cfg.validate()?;

    match cli.command {
        Command::GenData { split, videos } => {
            let splits: Vec<&str> = match &split {
                Some(s) => vec![s.as_str()],
                None => SPLITS.to_vec(),
            };
            let mut out = Vec::new();
            for s in splits {
                let n = videos.unwrap_or(match s {
                    "train" => cfg.data.train_videos,
                    "val" => cfg.data.val_videos,
                    _ => cfg.data.test_videos,
                });
                let ds = pipeline::generate_dataset(&cfg.world, &cfg.annotator, s, n, cfg.seed)?;
                let dir = pipeline::split_dir(&cfg.paths.data_dir, s);
                pipeline::write_dataset(&dir, &ds, s, cfg.seed)?;
                out.push(dir.join(pipeline::MANIFEST));
            }
            Ok(out)
        }
        Command::Train { class, all } => {
            let classes = match (class, all) {
                (Some(c), _) => Some(vec![c]),
                (None, true) => None,
                (None, false) => return Err(Error::Config("train needs --class C or --all".into()).into()),
            };
            Ok(pipeline::run_train(&cfg, classes.as_deref())?)
        }
        Command::Detect { split, .. } => {
            check_split(&split)?;
            let ds = pipeline::load_split(&cfg, &split)?;
            let models = pipeline::load_models(&cfg.paths.checkpoints_dir, cfg.world.num_classes)?;
            let run = pipeline::detect_dataset(&ds, &models, &cfg.detect, cfg.seed)?;
            let dir = reports_dir(&cfg)?;
            let det = dir.join(format!("detections_{split}.jsonl"));
            write_lines(&det, &run.detections)?;
            let summary = dir.join(format!("searches_{split}.json"));
            write_json(&summary, &run.summary)?;
            Ok(vec![det, summary])
        }
        Command::Baseline { split, kind, .. } => {
            check_split(&split)?;
            let ds = pipeline::load_split(&cfg, &split)?;
            let priors = read_json(&pipeline::priors_path(&cfg.paths.checkpoints_dir))?;
            let kinds: &[BaselineKind] = match kind {
                KindArg::Uniform => &[BaselineKind::Uniform],
                KindArg::UniformPrior => &[BaselineKind::UniformPrior],
                KindArg::Both => &[BaselineKind::Uniform, BaselineKind::UniformPrior],
            };
            let dir = reports_dir(&cfg)?.to_path_buf();
            let mut out = Vec::new();
            for &k in kinds {
                let d = pipeline::baseline_detections(k, &ds, &priors, cfg.eval.recall_budget, cfg.seed)?;
                let path = dir.join(format!("baseline_{}_{split}.jsonl", k.name()));
                write_lines(&path, &d)?;
                out.push(path);
            }
            Ok(out)
        }
        Command::Eval { detections, split, .. } => {
            check_split(&split)?;
            let ds = pipeline::load_split(&cfg, &split)?;
            let text = fs::read_to_string(&detections).map_err(|e| Error::io(&detections, e))?;
            let dets = parse_detections(&text, &detections)?;
            let gt = ds.ground_truth_index();
            let mut report: EvalReport = eval::map_report(&dets, &gt, &cfg.eval.thresholds)?;
            report.recall_at_budget = Some(eval::recall_at_tiou(
                &dets,
                &gt,
                eval::RECALL_TIOU,
                Some(cfg.eval.recall_budget),
            )?);
            let stem = detections
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "detections".into());
            let summary = detections.with_file_name(format!("searches_{split}.json"));
            if stem.starts_with("detections") && summary.exists() {
                let s: pipeline::SearchSummary = read_json(&summary)?;
                report.observed_fraction = Some(s.mean_observed_fraction);
            }
            let dir = reports_dir(&cfg)?;
            let out = dir.join(format!("eval_{stem}.json"));
            write_json(&out, &report)?;
            let curve = eval::recall_curve(&stem, &dets, &gt, eval::RECALL_TIOU, &cfg.eval.budgets)?;
            let csv = dir.join(format!("recall_{stem}.csv"));
            fs::write(&csv, curve.to_csv()).map_err(|e| Error::io(&csv, e))?;
            Ok(vec![out, csv])
        }
        Command::Sweep {
            param, values, split, ..
        } => {
            check_split(&split)?;
            let param = match param {
                ParamArg::TopK => SweepParam::TopK,
                ParamArg::NmsThreshold => SweepParam::NmsThreshold,
            };
            for &v in &values {
                param.apply(&cfg.detect, v)?.validate(cfg.world.num_classes as usize)?;
            }
            let ds = pipeline::load_split(&cfg, &split)?;
            let models = pipeline::load_models(&cfg.paths.checkpoints_dir, cfg.world.num_classes)?;
            let points = pipeline::sweep(&ds, &models, &cfg.detect, param, &values, &cfg.eval.budgets, cfg.seed)
                .context("sweep")?;
            let dir = reports_dir(&cfg)?;
            let mut out = Vec::new();
            for p in &points {
                let path = dir.join(format!("sweep_{}_{}.csv", param.name(), p.value));
                fs::write(&path, p.curve.to_csv()).map_err(|e| Error::io(&path, e))?;
                out.push(path);
            }
            let summary = dir.join(format!("sweep_{}.json", param.name()));
            write_json(
                &summary,
                &serde_json::json!({
                    "param": param.name(),
                    "split": split,
                    "points": points,
                    "note": "every value uses the same seed; recall is per-video budgeted, so a larger top_k spends the same budget over more classes",
                }),
            )?;
            out.push(summary);
            Ok(out)
        }
    }
}
