//! Implementations behind the subcommands. Every artifact goes through
//! `write_atomic`, so an aborted run never leaves partial files.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tightq::agent::{train, write_log_csv, EpisodeRow, TrainSummary, TrainingConfig};
use tightq::bounds::{audit_items, AuditRecord, PenaltyConfig};
use tightq::checkpoint::{write_atomic, Checkpoint};
use tightq::env::{value_iteration, Mdp};
use tightq::eval::{ingest_scores_path, learning_curve, summarize, write_curve_csv, EvalReport};
use tightq::qfunction::QFunction;
use tightq::replay::{items_from_episodes, read_dump};
use tightq::{CoreError, Result};

use crate::config::{output_root, EnvSpec, ExperimentSpec};

/// Command-line overrides for `train`.
pub struct TrainArgs {
    pub config: PathBuf,
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub dump_replay: bool,
}

/// Everything written into a seed directory besides the raw artifacts, so a
/// run can be interpreted (and rerun) without the original spec file.
#[derive(Debug, Serialize, Deserialize)]
struct RunDocument {
    summary: TrainSummary,
    environment: EnvSpec,
    config: TrainingConfig,
    log_file: String,
    checkpoint_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    replay_file: Option<String>,
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Trains one seed and writes its artifacts under `dir`.
fn run_seed(spec: &ExperimentSpec, cfg: &TrainingConfig, dump_replay: bool, dir: &Path) -> Result<TrainSummary> {
    let mut env = spec.environment.build(cfg.episode_cap)?;
    let result = train(cfg, env.as_mut()).map_err(|e| {
        eprintln!("seed {} failed before artifacts were written ({}): {e}", cfg.seed, dir.display());
        e
    })?;

    let mut log_bytes = Vec::new();
    write_log_csv(&result.log, &mut log_bytes)?;
    write_atomic(&dir.join("log.csv"), &log_bytes)?;

    let checkpoint = Checkpoint::from_state(&result.state, cfg.gamma);
    checkpoint.save(&dir.join("checkpoint.json"))?;

    let replay_file = if dump_replay {
        let mut buf = Vec::new();
        result.state.replay.dump_jsonl(&mut buf)?;
        write_atomic(&dir.join("replay.jsonl"), &buf)?;
        Some("replay.jsonl".to_string())
    } else {
        None
    };

    let summary = result.summary(cfg);
    let doc = RunDocument {
        summary: summary.clone(),
        environment: spec.environment.clone(),
        config: cfg.clone(),
        log_file: "log.csv".into(),
        checkpoint_file: "checkpoint.json".into(),
        replay_file,
    };
    write_json_atomic(&dir.join("summary.json"), &doc)?;
    Ok(summary)
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&args.config)?;
    if let Some(lambda) = args.lambda {
        spec.training.penalty.lambda = lambda;
    }
    let dump_replay = args.dump_replay || spec.experiment.dump_replay;
    spec.training.validate()?;

    let seeds = args.seeds.or(spec.experiment.seeds).unwrap_or(1);
    if seeds == 0 {
        return Err(CoreError::Config("seeds must be positive".into()));
    }
    let run_root = output_root(args.out, &spec).join(spec.run_name());

    let mut configs = Vec::with_capacity(seeds);
    for i in 0..seeds as u64 {
        let mut cfg = spec.training.clone();
        cfg.seed = spec.training.seed.wrapping_add(i);
        let dir = run_root.join(format!("seed-{}", cfg.seed));
        configs.push((cfg, dir));
    }

    // Seeds are independent; run them as scoped worker threads.
    let summaries: Vec<Result<TrainSummary>> = if configs.len() == 1 {
        let (cfg, dir) = &configs[0];
        vec![run_seed(&spec, cfg, dump_replay, dir)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = configs
                .iter()
                .map(|(cfg, dir)| {
                    let spec = &spec;
                    scope.spawn(move || run_seed(spec, cfg, dump_replay, dir))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };

    let mut first_err = None;
    for ((cfg, dir), outcome) in configs.iter().zip(summaries) {
        match outcome {
            Ok(summary) => {
                println!(
                    "seed {}: {} episodes, {} steps, mode {} -> {}",
                    cfg.seed,
                    summary.episodes,
                    summary.total_steps,
                    summary.mode,
                    dir.display()
                );
            }
            Err(e) => {
                eprintln!("seed {} ({}): {e}", cfg.seed, dir.display());
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize)]
struct OracleDocument {
    gamma: f64,
    tol: f64,
    iterations: usize,
    residual: f64,
    num_states: usize,
    num_actions: usize,
    greedy_policy: Vec<usize>,
}

pub fn cmd_oracle(mdp_path: &Path, gamma: f64, tol: f64, out: Option<PathBuf>) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(CoreError::Config(format!("gamma must be in [0,1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(CoreError::Config(format!("tol must be > 0, got {tol}")));
    }
    let mdp = Mdp::read_interchange(mdp_path)?;
    let oracle = value_iteration(&mdp, gamma, tol)?;

    let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
    let mut table = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut table);
        let mut header = vec!["state".to_string()];
        header.extend((0..oracle.num_actions).map(|a| format!("a{a}")));
        w.write_record(&header).map_err(|e| CoreError::Serde(e.to_string()))?;
        for s in 0..oracle.num_states {
            let mut record = vec![s.to_string()];
            record.extend(
                oracle.row(s).iter().map(|v| serde_json::to_string(v).expect("finite")),
            );
            w.write_record(&record).map_err(|e| CoreError::Serde(e.to_string()))?;
        }
        w.flush()?;
    }
    write_atomic(&out_dir.join("q_star.csv"), &table)?;

    let doc = OracleDocument {
        gamma,
        tol,
        iterations: oracle.iterations,
        residual: oracle.residual,
        num_states: oracle.num_states,
        num_actions: oracle.num_actions,
        greedy_policy: (0..oracle.num_states).map(|s| oracle.greedy_action(s)).collect(),
    };
    write_json_atomic(&out_dir.join("oracle.json"), &doc)?;

    println!(
        "value iteration converged in {} sweeps, residual {:e} (tol {:e})",
        oracle.iterations, oracle.residual, tol
    );
    println!("wrote {} and oracle.json", out_dir.join("q_star.csv").display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScoreMode {
    /// Per-game normalized percentages.
    Normalize,
    /// Per-game improvement percentages over the baseline column.
    Improve,
    /// Mean/median aggregates only.
    Summary,
}

pub fn cmd_scores(input: &Path, mode: ScoreMode, out: Option<PathBuf>) -> Result<()> {
    let ingest = ingest_scores_path(input)?;
    for diag in &ingest.diagnostics {
        eprintln!("warning: {diag}");
    }
    let report = summarize(&ingest.rows)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }

    let payload = match mode {
        ScoreMode::Normalize | ScoreMode::Improve => serde_json::to_value(&report)?,
        ScoreMode::Summary => serde_json::to_value(&report.summary)?,
    };
    if let Some(path) = out {
        write_json_atomic(&path, &payload)?;
        println!("wrote {}", path.display());
    } else if !matches!(mode, ScoreMode::Summary) {
        println!("{}", serde_json::to_string_pretty(&payload)?);
    }

    match mode {
        ScoreMode::Summary => {
            let s = &report.summary;
            println!(
                "agent: mean {:.2} median {:.2} over {} games ({} excluded)",
                s.agent_mean, s.agent_median, s.games, s.excluded
            );
            if let (Some(mean), Some(median)) = (s.baseline_mean, s.baseline_median) {
                println!("baseline: mean {mean:.2} median {median:.2}");
            }
            if let Some(improved) = s.games_improved {
                println!("improved over baseline: {improved} of {} games", s.games);
            }
        }
        ScoreMode::Improve => {
            if let Some(improved) = report.summary.games_improved {
                println!("improved over baseline: {improved} of {} games", report.summary.games);
            } else {
                eprintln!("warning: no baseline column; improvements undefined");
            }
        }
        ScoreMode::Normalize => {}
    }
    let _ = report_games_check(&report);
    Ok(())
}

/// Cheap internal consistency pass (names unique); warns rather than fails.
fn report_games_check(report: &EvalReport) -> bool {
    let mut names: Vec<&str> = report.games.iter().map(|g| g.game.as_str()).collect();
    names.sort_unstable();
    let dup = names.windows(2).any(|w| w[0] == w[1]);
    if dup {
        eprintln!("warning: duplicate game names in report");
    }
    !dup
}

#[derive(Debug, Serialize)]
struct AuditDocument {
    k: usize,
    gamma: f64,
    items: usize,
    lower_bounds_evaluated: usize,
    upper_bounds_evaluated: usize,
    lower_active: usize,
    upper_active: usize,
    /// Samples where the aggregated bracket is inverted: L^max > U^min.
    ordering_anomalies: usize,
    records: Vec<AuditRecord>,
}

pub fn cmd_audit(dump: &Path, ckpt: &Path, k: usize, out: Option<PathBuf>) -> Result<()> {
    let episodes = read_dump(BufReader::new(std::fs::File::open(dump)?))?;
    let checkpoint = Checkpoint::load(ckpt)?;
    let live = &checkpoint.live;
    let frozen = &checkpoint.frozen;

    for episode in &episodes {
        for t in &episode.transitions {
            if t.state >= live.num_states()
                || t.next_state >= live.num_states()
                || t.action >= live.num_actions()
            {
                return Err(CoreError::DimensionMismatch(format!(
                    "dump transition (s={}, a={}, s'={}) is outside the checkpoint's \
                     {}x{} Q-table",
                    t.state,
                    t.action,
                    t.next_state,
                    live.num_states(),
                    live.num_actions()
                )));
            }
        }
    }

    let items = items_from_episodes(&episodes, k);
    let cfg = PenaltyConfig { k, ..PenaltyConfig::default() };
    let records = audit_items(&items, live, frozen, &cfg, checkpoint.gamma);

    let lower_eval: usize = records.iter().map(|r| r.lower_evaluated).sum();
    let upper_eval: usize = records.iter().map(|r| r.upper_evaluated).sum();
    let lower_active = records.iter().filter(|r| r.lower_active).count();
    let upper_active = records.iter().filter(|r| r.upper_active).count();
    let anomalies = records
        .iter()
        .filter(|r| matches!((r.l_max, r.u_min), (Some(l), Some(u)) if l > u + 1e-9))
        .count();

    println!(
        "audited {} samples at K={k}: {} lower / {} upper bounds evaluated",
        records.len(),
        lower_eval,
        upper_eval
    );
    println!(
        "active constraints: {lower_active} lower, {upper_active} upper; \
         ordering anomalies (L^max > U^min): {anomalies}"
    );

    let doc = AuditDocument {
        k,
        gamma: checkpoint.gamma,
        items: records.len(),
        lower_bounds_evaluated: lower_eval,
        upper_bounds_evaluated: upper_eval,
        lower_active,
        upper_active,
        ordering_anomalies: anomalies,
        records,
    };
    if let Some(path) = out {
        write_json_atomic(&path, &doc)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_curve(log: &Path, window: usize, out: Option<PathBuf>) -> Result<()> {
    let mut reader = csv::Reader::from_path(log).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CoreError::Io(std::io::Error::other(e.to_string())),
        _ => CoreError::Parse { line: 0, msg: e.to_string() },
    })?;
    let mut steps = Vec::new();
    let mut returns = Vec::new();
    for row in reader.deserialize::<EpisodeRow>() {
        let row = row.map_err(|e| CoreError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        steps.push(row.step);
        returns.push(row.episode_return);
    }
    if steps.is_empty() {
        return Err(CoreError::InvalidArgument("log has no episodes".into()));
    }
    let points = learning_curve(&steps, &returns, window)?;
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &points)?;
    match out {
        Some(path) => {
            write_atomic(&path, &buf)?;
            println!("wrote {}", path.display());
        }
        None => {
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    Ok(())
}
