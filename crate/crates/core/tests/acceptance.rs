//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use action_search::config::RunConfig;
use action_search::eval::average_precision;
use action_search::inference::DetectionConfig;
use action_search::pipeline::{self, SweepParam};
use action_search::seed;
use action_search::temporal::{generate_proposals, nms, tiou, DurationPriors, Interval, Proposal};
use action_search::train::loss::{huber, sequence_loss};
use action_search::world::{history_observed_fraction, simulate_annotator, AnnotatorConfig, World, WorldConfig};
use common::gradient::{case, worst_error};
use common::oracles;
use rand::Rng;

const GRADIENT_CASES: u64 = 24;
const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_TIME: Duration = Duration::from_secs(60);
const LOSS_TOLERANCE: f64 = 1e-12;
const AP_CASES: u64 = 1000;
const AP_TOLERANCE: f64 = 1e-12;
const NMS_SETS: u64 = 1000;
const EQ1_CASES: u64 = 1000;
const CALIBRATION_HISTORIES: usize = 1000;
const CALIBRATION_STEPS: f64 = 31.0;
const CALIBRATION_STEP_TOLERANCE: f64 = 0.2;
const CALIBRATION_MAX_OBSERVED: f64 = 0.10;
const CALIBRATION_TIME: Duration = Duration::from_secs(60);
const E2E_MIN_TEST_VIDEOS: usize = 50;
const E2E_MARGIN: f64 = 0.10;
const E2E_MAX_OBSERVED: f64 = 0.15;
const E2E_TIME: Duration = Duration::from_secs(30 * 60);
const SWEEP_TOP_K: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
const SWEEP_NMS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

type Check = Result<String, String>;

fn acceptance_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.toml");
    RunConfig::load(Some(&path)).expect("acceptance config loads")
}

fn gradients() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for s in 0..GRADIENT_CASES {
        let layers = 1 + (s as usize % 2);
        let hidden = 2 + (s as usize % 7);
        let steps = 1 + (s as usize % 6);
        let c = case(1000 + s, layers, hidden, steps, s % 3 == 0);
        worst = worst.max(worst_error(&c, s % 2 == 1));
    }
    let took = t.elapsed();
    let detail = format!("{GRADIENT_CASES} instances, worst relative error {worst:.2e}, {took:.1?}");
    if worst < GRADIENT_TOLERANCE && took < GRADIENT_TIME {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn losses() -> Check {
    let mut errs = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > LOSS_TOLERANCE {
            errs.push(format!("{name}: {got} != {want}"));
        }
    };
    check("huber(0, 0.5)", huber(0.0, 0.5, 1.0), 0.125);
    check("huber(0, 2)", huber(0.0, 2.0, 1.0), 1.5);
    check("huber(y, y)", huber(3.25, 3.25, 1.0), 0.0);
    let (l, _) = sequence_loss(&[0.0, 0.0], &[0.5, 2.0], 1.0).unwrap();
    check("sequence_loss", l, 0.8125);
    for delta in [0.1, 1.0, 2.5] {
        let half = 0.5 * delta * delta;
        check("branch at +delta", huber(0.0, delta, delta), half);
        check("branch above +delta", huber(0.0, delta + 1e-15, delta), half);
        check("branch at -delta", huber(0.0, -delta, delta), half);
    }
    if errs.is_empty() {
        Ok("hand values and branch continuity within 1e-12".into())
    } else {
        Err(errs.join("; "))
    }
}

fn metric_oracles() -> Check {
    let mut worst = 0.0f64;
    for s in 0..AP_CASES {
        let (d, g) = oracles::random_ap_case(s);
        for c in 0..2 {
            for alpha in [0.1, 0.3, 0.5, 0.7] {
                let fast = average_precision(&d, &g, c, alpha).map_err(|e| e.to_string())?;
                worst = worst.max((fast - oracles::brute_force_ap(&d, &g, c, alpha)).abs());
            }
        }
    }
    let mut g = action_search::eval::GroundTruthIndex::new();
    g.insert(
        "v".into(),
        vec![action_search::world::ActionInstance {
            class_id: 0,
            interval: Interval::new(10.0, 20.0).unwrap(),
        }],
    );
    let fp_tp = [oracles::det("v", 0, 50.0, 60.0, 0.9), oracles::det("v", 0, 10.0, 20.0, 0.8)];
    let ap = average_precision(&fp_tp, &g, 0, 0.5).map_err(|e| e.to_string())?;
    let detail = format!("{AP_CASES} cases, worst |AP - oracle| {worst:.1e}; [FP, TP] AP = {ap}");
    if worst <= AP_TOLERANCE && ap == 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn nms_properties() -> Check {
    for s in 0..NMS_SETS {
        let input = oracles::random_proposals(s);
        let threshold = [0.3, 0.5, 0.6, 0.8, 1.0][s as usize % 5];
        let out = nms(&input, threshold);
        let again = nms(&out, threshold);
        oracles::nms_postconditions(&input, &out, &again, threshold).map_err(|e| format!("set {s}: {e}"))?;
    }
    let a = Interval::new(0.0, 10.0).unwrap();
    let b = Interval::new(0.0, 9.0).unwrap();
    let pair = [
        Proposal {
            interval: a,
            class_id: 0,
            anchor: 0.0,
            score: 0.9,
        },
        Proposal {
            interval: b,
            class_id: 0,
            anchor: 0.0,
            score: 0.8,
        },
    ];
    let kept = nms(&pair, 0.6);
    let detail = format!("{NMS_SETS} sets hold; hand pair tIoU {:.2} keeps {}", tiou(&a, &b), kept.len());
    if kept.len() == 1 && kept[0] == pair[0] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn proposal_generation() -> Check {
    for s in 0..EQ1_CASES {
        let mut rng = seed::rng(77_000 + s);
        let duration = rng.random_range(20.0..200.0);
        let positions: Vec<f64> = (0..rng.random_range(0..12))
            .map(|_| {
                // Repeats and the video end exercise dedup and clipping.
                match rng.random_range(0..6) {
                    0 => duration,
                    1 => 5.0,
                    _ => rng.random_range(0.0..duration),
                }
            })
            .collect();
        let mut d: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0.5..60.0)).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        let priors = DurationPriors::new(BTreeMap::from([(3, d)])).unwrap();
        let got: Vec<(f64, f64)> = generate_proposals(&positions, 3, &priors, duration, 0.1)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|p| (p.interval.start(), p.interval.end()))
            .collect();
        let want = oracles::cross_product_proposals(&positions, 3, &priors, duration, 0.1);
        if got != want {
            return Err(format!("case {s}: {got:?} != {want:?}"));
        }
    }
    Ok(format!("{EQ1_CASES} random position/prior sets equal the cross-product oracle"))
}

fn calibration() -> Check {
    let t = Instant::now();
    let world = World::new(WorldConfig::default()).map_err(|e| e.to_string())?;
    let behavior = AnnotatorConfig::default();
    let mut steps = 0usize;
    let mut observed = 0.0;
    let mut n = 0usize;
    let mut k = 0u64;
    while n < CALIBRATION_HISTORIES {
        let (video, instances) = world.generate_video(&format!("cal{k}"), 31_000 + k).map_err(|e| e.to_string())?;
        for (j, target) in instances.iter().enumerate() {
            if n == CALIBRATION_HISTORIES {
                break;
            }
            let h = simulate_annotator(&video, target, &behavior, seed::derive(k, &[j as u64]))
                .map_err(|e| e.to_string())?;
            steps += h.steps.len();
            observed += history_observed_fraction(&h, &video, video.observation_window());
            n += 1;
        }
        k += 1;
    }
    let mean_steps = steps as f64 / n as f64;
    let mean_observed = observed / n as f64;
    let took = t.elapsed();
    let detail = format!(
        "{n} histories: mean steps {mean_steps:.2} (target {CALIBRATION_STEPS} +/- {:.0}%), mean observed {mean_observed:.4} (max {CALIBRATION_MAX_OBSERVED}), {took:.1?}",
        CALIBRATION_STEP_TOLERANCE * 100.0
    );
    let in_band = (mean_steps / CALIBRATION_STEPS - 1.0).abs() <= CALIBRATION_STEP_TOLERANCE;
    if in_band && mean_observed <= CALIBRATION_MAX_OBSERVED && took < CALIBRATION_TIME {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Trained {
    cfg: RunConfig,
    models: pipeline::Models,
    _dir: tempfile::TempDir,
    setup: Duration,
}

fn train_acceptance_run() -> Result<Trained, String> {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = acceptance_config();
    cfg.paths.data_dir = dir.path().join("data");
    cfg.paths.checkpoints_dir = dir.path().join("checkpoints");
    let e = |e: action_search::Error| e.to_string();
    for (split, n) in [
        ("train", cfg.data.train_videos),
        ("val", cfg.data.val_videos),
        ("test", cfg.data.test_videos),
    ] {
        let ds = pipeline::generate_dataset(&cfg.world, &cfg.annotator, split, n, cfg.seed).map_err(e)?;
        pipeline::write_dataset(&pipeline::split_dir(&cfg.paths.data_dir, split), &ds, split, cfg.seed).map_err(e)?;
    }
    pipeline::run_train(&cfg, None).map_err(e)?;
    let models = pipeline::load_models(&cfg.paths.checkpoints_dir, cfg.world.num_classes).map_err(e)?;
    Ok(Trained {
        cfg,
        models,
        _dir: dir,
        setup: t.elapsed(),
    })
}

fn end_to_end(run: &Trained) -> Check {
    let t = Instant::now();
    let cfg = &run.cfg;
    let test = pipeline::load_split(cfg, "test").map_err(|e| e.to_string())?;
    let c = pipeline::compare_at_budget(&test, &run.models, &cfg.detect, cfg.eval.recall_budget, cfg.seed)
        .map_err(|e| e.to_string())?;
    let took = run.setup + t.elapsed();
    let best_baseline = c.uniform.max(c.uniform_prior);
    let detail = format!(
        "{} test videos, budget {}: recall action search {:.3}, uniform {:.3}, uniform-prior {:.3}; observed per search mean {:.3} max {:.3}; {took:.0?}",
        test.videos.len(),
        c.budget,
        c.action_search,
        c.uniform,
        c.uniform_prior,
        c.mean_observed_fraction,
        c.max_observed_fraction
    );
    let ok = test.videos.len() >= E2E_MIN_TEST_VIDEOS
        && c.action_search >= best_baseline + E2E_MARGIN
        && c.max_observed_fraction < E2E_MAX_OBSERVED
        && took < E2E_TIME;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn monotone_sweeps(run: &Trained) -> Check {
    let cfg = &run.cfg;
    let val = pipeline::load_split(cfg, "val").map_err(|e| e.to_string())?;
    let base = DetectionConfig {
        max_detections: None,
        ..cfg.detect.clone()
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for (param, values) in [(SweepParam::TopK, &SWEEP_TOP_K[..]), (SweepParam::NmsThreshold, &SWEEP_NMS[..])] {
        let points = pipeline::sweep(&val, &run.models, &base, param, values, &cfg.eval.budgets, cfg.seed)
            .map_err(|e| e.to_string())?;
        let recalls: Vec<f64> = points.iter().map(|p| p.recall).collect();
        ok &= recalls.windows(2).all(|w| w[1] >= w[0]);
        let shown: Vec<String> = recalls.iter().map(|r| format!("{r:.3}")).collect();
        lines.push(format!("{} {values:?} -> [{}]", param.name(), shown.join(", ")));
    }
    let detail = format!("{} val videos; {}", val.videos.len(), lines.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_pipeline(root: &Path, config: &Path) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_action-search");
    let steps: [&[&str]; 6] = [
        &["gen-data"],
        &["train", "--all"],
        &["detect", "--split", "test"],
        &["baseline", "--split", "test"],
        &["eval", "--split", "test", "--detections"],
        &["sweep", "--param", "top_k", "--values", "1,3"],
    ];
    for args in steps {
        let mut cmd = Command::new(bin);
        cmd.env_remove("ACTION_SEARCH_SEED")
            .arg("--config")
            .arg(config)
            .arg("--data-dir")
            .arg(root.join("data"))
            .arg("--checkpoints-dir")
            .arg(root.join("checkpoints"))
            .arg("--reports-dir")
            .arg(root.join("reports"))
            .args(args);
        if args[0] == "eval" {
            cmd.arg(root.join("reports/detections_test.jsonl"));
        }
        let out = cmd.output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = acceptance_config();
    cfg.data.train_videos = 40;
    cfg.data.val_videos = 6;
    cfg.data.test_videos = 6;
    cfg.train.epochs = 3;
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, cfg.to_toml()).map_err(|e| e.to_string())?;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cli_pipeline(&a, &config)?;
    cli_pipeline(&b, &config)?;
    let (fa, fb) = (files_under(&a), files_under(&b));
    let differing: Vec<String> = fa
        .iter()
        .filter(|(p, bytes)| fb.get(*p) != Some(*bytes))
        .map(|(p, _)| p.display().to_string())
        .chain(fb.keys().filter(|p| !fa.contains_key(*p)).map(|p| p.display().to_string()))
        .collect();
    let checkpoints = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "asmd")).count();
    let detail = format!(
        "two CLI runs: {} files compared ({checkpoints} checkpoints), {} differ",
        fa.len(),
        differing.len()
    );
    if differing.is_empty() && checkpoints == cfg.world.num_classes as usize && fa.len() > 20 {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", differing.join(", ")))
    }
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(&str, Check)> = vec![
        ("gradient correctness", guarded(gradients)),
        ("loss correctness", guarded(losses)),
        ("metric oracles", guarded(metric_oracles)),
        ("nms properties", guarded(nms_properties)),
        ("proposal generation", guarded(proposal_generation)),
        ("annotator calibration", guarded(calibration)),
    ];
    match train_acceptance_run() {
        Ok(run) => {
            results.push(("end-to-end recall", guarded(|| end_to_end(&run))));
            results.push(("sweep monotonicity", guarded(|| monotone_sweeps(&run))));
        }
        Err(e) => {
            results.push(("end-to-end recall", Err(format!("pipeline failed: {e}"))));
            results.push(("sweep monotonicity", Err(format!("pipeline failed: {e}"))));
        }
    }
    results.push(("determinism", guarded(determinism)));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  {name:<22} {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name:<22} {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
