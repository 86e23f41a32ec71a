//! The training loop: ε-greedy acting, replay writes, one penalized
//! minibatch update per environment step, C-step target sync, episode
//! finalization — plus the no-op evaluation protocol.
//!
//! Training is a deterministic function of (config, seed). The master seed is
//! split into independent streams (weight init, environment, replay sampler,
//! action selection, evaluation) so adding or removing draws in one place
//! cannot shift another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{batch_loss, PenaltyConfig};
use crate::env::Environment;
use crate::error::{CoreError, Result};
use crate::nn::RmsPropConfig;
use crate::qfunction::{DenseQ, QBackend, QFunction, TabularQ};
use crate::replay::ReplayMemory;

/// Linear ε annealing: `start` at step 0 down to `end` at `anneal_steps`,
/// constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            anneal_steps: 1000,
        }
    }
}

/// Exploration rate at a global step count.
pub fn epsilon_at(sched: &EpsilonSchedule, step: u64) -> f64 {
    if step >= sched.anneal_steps {
        sched.end
    } else {
        let frac = step as f64 / sched.anneal_steps as f64;
        sched.start + (sched.end - sched.start) * frac
    }
}

/// Which parameter store the agent trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BackendKind {
    Tabular,
    /// Dense net over one-hot states with the given hidden widths.
    Dense { hidden: Vec<usize> },
}

/// Everything a training run depends on. Two runs with equal configs produce
/// bitwise-identical logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub gamma: f64,
    pub penalty: PenaltyConfig,
    /// Target sync period C, in environment steps.
    pub sync_period: u64,
    pub batch_size: usize,
    /// Episodes per run (M).
    pub episodes: usize,
    /// Per-episode step cap (T); hitting it truncates the episode.
    pub episode_cap: usize,
    pub epsilon: EpsilonSchedule,
    pub eval_epsilon: f64,
    /// Minimum finalized transitions before updates begin (raised to the
    /// batch size if smaller).
    pub learning_start: usize,
    pub replay_capacity: usize,
    pub seed: u64,
    pub backend: BackendKind,
    /// Dense-backend optimizer settings.
    pub optimizer: RmsPropConfig,
    /// Tabular-backend SGD step size.
    pub tabular_lr: f64,
    /// Run an evaluation every this many episodes.
    pub eval_period: Option<usize>,
    pub eval_episodes: usize,
    pub no_op_max: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            gamma: 0.99,
            penalty: PenaltyConfig::default(),
            sync_period: 100,
            batch_size: 32,
            episodes: 200,
            episode_cap: 200,
            epsilon: EpsilonSchedule::default(),
            eval_epsilon: 0.05,
            learning_start: 0,
            replay_capacity: 10_000,
            seed: 0,
            backend: BackendKind::Tabular,
            optimizer: RmsPropConfig::default(),
            tabular_lr: 0.1,
            eval_period: None,
            eval_episodes: 30,
            no_op_max: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(CoreError::Config(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return cfg_err(format!("gamma must be in [0,1), got {}", self.gamma));
        }
        if self.penalty.lambda < 0.0 {
            return cfg_err(format!("lambda must be ≥ 0, got {}", self.penalty.lambda));
        }
        if self.sync_period == 0 {
            return cfg_err("sync_period must be positive".into());
        }
        if self.batch_size == 0 || self.episodes == 0 || self.episode_cap == 0 {
            return cfg_err("batch_size, episodes and episode_cap must be positive".into());
        }
        if self.replay_capacity < self.batch_size {
            return cfg_err("replay_capacity must hold at least one batch".into());
        }
        for (name, eps) in [
            ("epsilon.start", self.epsilon.start),
            ("epsilon.end", self.epsilon.end),
            ("eval_epsilon", self.eval_epsilon),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return cfg_err(format!("{name} must be in [0,1], got {eps}"));
            }
        }
        if self.epsilon.anneal_steps == 0 {
            return cfg_err("epsilon.anneal_steps must be positive".into());
        }
        if !(self.tabular_lr > 0.0) {
            return cfg_err("tabular_lr must be > 0".into());
        }
        if self.eval_period == Some(0) {
            return cfg_err("eval_period must be positive when set".into());
        }
        if self.eval_episodes == 0 {
            return cfg_err("eval_episodes must be positive".into());
        }
        self.optimizer.validate().map_err(|e| CoreError::Config(e.to_string()))?;
        Ok(())
    }

    /// Short run-mode label for summaries.
    pub fn mode(&self) -> &'static str {
        if self.penalty.lambda == 0.0 {
            "dqn-baseline"
        } else {
            "tightened"
        }
    }

    fn effective_learning_start(&self) -> usize {
        self.learning_start.max(self.batch_size)
    }
}

/// ε-greedy action selection: explore uniformly with probability ε, exploit
/// the argmax (lowest-index tie-break) otherwise. ε=0 consumes no randomness.
pub fn select_action<Q: QFunction, R: Rng + ?Sized>(
    q: &Q,
    state: usize,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.num_actions())
    } else {
        q.greedy_action(state)
    }
}

/// One training-log row per finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    /// Global environment steps completed when the episode closed.
    pub step: u64,
    pub episode: usize,
    /// Undiscounted sum of the episode's rewards.
    pub episode_return: f64,
    /// Mean batch loss over the episode's updates; absent before learning
    /// starts.
    pub loss_mean: Option<f64>,
    /// ε in force when the episode closed.
    pub epsilon: f64,
    /// Target syncs so far.
    pub sync_count: u64,
    /// Mean evaluation score, on episodes where an evaluation ran.
    pub eval_score: Option<f64>,
}

/// Live state of a run, advanced one environment step at a time.
pub struct AgentState {
    pub live: QBackend,
    pub frozen: QBackend,
    pub replay: ReplayMemory,
    /// Environment steps taken.
    pub step: u64,
    /// Episodes finished.
    pub episode: usize,
    pub sync_count: u64,
    pub updates: u64,
}

/// Everything a run produces.
pub struct TrainResult {
    pub state: AgentState,
    pub log: Vec<EpisodeRow>,
    /// (episode, mean score) for every periodic evaluation.
    pub evals: Vec<(usize, f64)>,
    /// True when a hook ended the run before `episodes` finished.
    pub stopped_early: bool,
}

impl TrainResult {
    pub fn summary(&self, cfg: &TrainingConfig) -> TrainSummary {
        let final_eval = self.evals.last().map(|&(_, s)| s);
        let best_eval = self
            .evals
            .iter()
            .map(|&(_, s)| s)
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
        TrainSummary {
            mode: cfg.mode().to_string(),
            backend: self.state.live.kind().to_string(),
            seed: cfg.seed,
            episodes: self.state.episode,
            total_steps: self.state.step,
            total_updates: self.state.updates,
            sync_count: self.state.sync_count,
            final_episode_return: self.log.last().map(|r| r.episode_return),
            final_eval_score: final_eval,
            best_eval_score: best_eval,
            stopped_early: self.stopped_early,
        }
    }
}

/// Run summary for the experiment driver; reports both the best and the
/// final evaluation because protocols differ on which one counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: String,
    pub backend: String,
    pub seed: u64,
    pub episodes: usize,
    pub total_steps: u64,
    pub total_updates: u64,
    pub sync_count: u64,
    pub final_episode_return: Option<f64>,
    pub final_eval_score: Option<f64>,
    pub best_eval_score: Option<f64>,
    pub stopped_early: bool,
}

/// Observers for experiments. `on_update` runs after every gradient step;
/// returning `false` ends the run once the current episode closes out.
#[derive(Default)]
pub struct TrainHooks<'a> {
    #[allow(clippy::type_complexity)]
    pub on_update: Option<Box<dyn FnMut(u64, &QBackend) -> bool + 'a>>,
}

// Independent seed streams, derived from the master seed with a splitmix64
// step so streams cannot collide or alias across components.
const STREAM_INIT: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_ACTION: u64 = 4;
const STREAM_EVAL: u64 = 5;

pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn build_backend(cfg: &TrainingConfig, env: &dyn Environment) -> Result<QBackend> {
    match &cfg.backend {
        BackendKind::Tabular => Ok(QBackend::Tabular(TabularQ::new(
            env.num_states(),
            env.num_actions(),
        )?)),
        BackendKind::Dense { hidden } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_INIT));
            Ok(QBackend::Dense(DenseQ::new(
                env.num_states(),
                hidden,
                env.num_actions(),
                cfg.optimizer,
                &mut rng,
            )?))
        }
    }
}

pub fn train(cfg: &TrainingConfig, env: &mut dyn Environment) -> Result<TrainResult> {
    train_with_hooks(cfg, env, TrainHooks::default())
}

/// The full loop. Per environment step: select ε-greedy action, apply it,
/// store the transition, then (once learning has started) sample a batch,
/// take one gradient step on the penalized objective, and sync the frozen
/// parameters every `sync_period` steps. Episodes close on terminal states
/// or at the step cap, finalizing the stored returns either way.
pub fn train_with_hooks(
    cfg: &TrainingConfig,
    env: &mut dyn Environment,
    mut hooks: TrainHooks<'_>,
) -> Result<TrainResult> {
    cfg.validate()?;
    env.reseed(derive_seed(cfg.seed, STREAM_ENV));
    let live = build_backend(cfg, env)?;
    let frozen = live.clone();
    let replay = ReplayMemory::new(cfg.replay_capacity, derive_seed(cfg.seed, STREAM_REPLAY))?;
    let mut state = AgentState {
        live,
        frozen,
        replay,
        step: 0,
        episode: 0,
        sync_count: 0,
        updates: 0,
    };
    let mut action_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_ACTION));
    let mut eval_seq = 0u64;
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut evals = Vec::new();
    let mut stop = false;

    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        state.replay.begin_episode()?;
        let mut ep_return = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0u32;

        for _ in 0..cfg.episode_cap {
            let eps = epsilon_at(&cfg.epsilon, state.step);
            let action = select_action(&state.live, s, eps, &mut action_rng);
            let out = env.step(action)?;
            state
                .replay
                .push(s, action, out.reward, out.next_state, out.terminal)?;
            ep_return += out.reward;
            s = out.next_state;
            state.step += 1;

            if state.replay.num_finalized_episodes() >= 1
                && state.replay.finalized_transitions() >= cfg.effective_learning_start()
            {
                let batch = state.replay.sample_batch(cfg.batch_size, cfg.penalty.k)?;
                let bl = batch_loss(&batch, &state.live, &state.frozen, &cfg.penalty, cfg.gamma);
                if !bl.loss.is_finite() {
                    return Err(CoreError::Divergence { step: state.step });
                }
                state.live.apply_gradients(&bl.gradients, cfg.tabular_lr)?;
                state.updates += 1;
                loss_sum += bl.loss;
                loss_count += 1;
                if let Some(hook) = hooks.on_update.as_mut() {
                    if !hook(state.step, &state.live) {
                        stop = true;
                    }
                }
            }

            if state.step % cfg.sync_period == 0 {
                state.frozen = state.live.clone();
                state.sync_count += 1;
            }

            if out.terminal {
                break;
            }
        }

        state.replay.finalize_episode(cfg.gamma)?;
        state.episode = episode + 1;

        let eval_score = match cfg.eval_period {
            Some(period) if (episode + 1) % period == 0 => {
                let mut eval_env = env.boxed_clone();
                eval_env.reseed(derive_seed(cfg.seed, STREAM_EVAL + 2 * eval_seq));
                let outcome = evaluate(
                    &state.live,
                    eval_env.as_mut(),
                    cfg.eval_episodes,
                    cfg.eval_epsilon,
                    cfg.no_op_max,
                    cfg.gamma,
                    derive_seed(cfg.seed, STREAM_EVAL + 2 * eval_seq + 1),
                )?;
                eval_seq += 1;
                evals.push((episode + 1, outcome.mean_score));
                Some(outcome.mean_score)
            }
            _ => None,
        };

        log.push(EpisodeRow {
            step: state.step,
            episode: episode + 1,
            episode_return: ep_return,
            loss_mean: (loss_count > 0).then(|| loss_sum / loss_count as f64),
            epsilon: epsilon_at(&cfg.epsilon, state.step),
            sync_count: state.sync_count,
            eval_score,
        });

        if stop {
            break;
        }
    }

    Ok(TrainResult {
        state,
        log,
        evals,
        stopped_early: stop,
    })
}

/// Scores from one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// Mean undiscounted episode score.
    pub mean_score: f64,
    /// Mean discounted return (discounted from each episode's first step).
    pub mean_discounted: f64,
    pub scores: Vec<f64>,
}

/// No-op evaluation protocol: each episode starts with a uniform-random
/// number in [0, no_op_max] of the environment's designated no-op action
/// (skipped entirely when the environment has none), then acts ε-greedily
/// until a terminal state or the environment's episode cap. Returns the mean
/// over exactly `episodes` episode scores; `gamma` only feeds the discounted
/// metric, never the acting.
pub fn evaluate<Q: QFunction>(
    q: &Q,
    env: &mut dyn Environment,
    episodes: usize,
    eval_epsilon: f64,
    no_op_max: usize,
    gamma: f64,
    seed: u64,
) -> Result<EvalOutcome> {
    if episodes == 0 {
        return Err(CoreError::InvalidArgument("episodes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(episodes);
    let mut discounted_sum = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset();
        let mut score = 0.0;
        let mut discounted = 0.0;
        let mut scale = 1.0;
        let mut steps = 0usize;
        let cap = env.episode_cap();
        let mut done = false;

        let no_ops = match env.no_op_action() {
            Some(_) if no_op_max > 0 => rng.random_range(0..=no_op_max),
            _ => 0,
        };
        for _ in 0..no_ops {
            if done || steps >= cap {
                break;
            }
            let out = env.step(env.no_op_action().expect("checked above"))?;
            score += out.reward;
            discounted += scale * out.reward;
            scale *= gamma;
            s = out.next_state;
            steps += 1;
            done = out.terminal;
        }

        while !done && steps < cap {
            let action = select_action(q, s, eval_epsilon, &mut rng);
            let out = env.step(action)?;
            score += out.reward;
            discounted += scale * out.reward;
            scale *= gamma;
            s = out.next_state;
            steps += 1;
            done = out.terminal;
        }
        scores.push(score);
        discounted_sum += discounted;
    }
    let mean_score = scores.iter().sum::<f64>() / episodes as f64;
    Ok(EvalOutcome {
        mean_score,
        mean_discounted: discounted_sum / episodes as f64,
        scores,
    })
}

/// Serializes log rows as CSV (header + one row per episode). Numbers render
/// in shortest round-trip form, so identical runs give identical bytes.
pub fn write_log_csv<W: std::io::Write>(rows: &[EpisodeRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(|e| CoreError::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
