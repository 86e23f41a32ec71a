//! Experiment specs: a TOML file with an `[experiment]` block, an
//! `[environment]` block picking the world, and a `[training]` block where
//! every hyperparameter is addressable (missing keys take the defaults).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tightq::agent::TrainingConfig;
use tightq::env::{ChainEnv, Environment, GridMaze, MazeEnv, Mdp, MdpEnv};
use tightq::{CoreError, Result};

/// Environment variable consulted for the default output root.
pub const OUT_ENV_VAR: &str = "TIGHTQ_OUT";

/// Which environment to train in, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Deterministic left-clamped chain with a terminal reward on the right.
    Chain { length: usize },
    /// 1×n grid corridor: start on the left, goal on the right.
    Corridor {
        length: usize,
        #[serde(default)]
        step_reward: Option<f64>,
        #[serde(default)]
        goal_reward: Option<f64>,
    },
    /// Open (wall-free) grid.
    Open {
        width: usize,
        height: usize,
        #[serde(default)]
        step_reward: Option<f64>,
        #[serde(default)]
        goal_reward: Option<f64>,
    },
    /// Grid maze from an ASCII map (`#` wall, `.` open, `S` start, `G` goal).
    Maze {
        ascii: String,
        #[serde(default)]
        step_reward: Option<f64>,
        #[serde(default)]
        goal_reward: Option<f64>,
    },
    /// Arbitrary MDP from an interchange-format file.
    Mdp { file: PathBuf },
}

impl EnvSpec {
    /// Instantiates the environment with the run's episode cap, so training
    /// truncation and evaluation truncation agree.
    pub fn build(&self, episode_cap: usize) -> Result<Box<dyn Environment>> {
        fn rewarded(
            maze: GridMaze,
            step_reward: &Option<f64>,
            goal_reward: &Option<f64>,
            cap: usize,
        ) -> Box<dyn Environment> {
            let maze = maze
                .with_rewards(step_reward.unwrap_or(0.0), goal_reward.unwrap_or(1.0))
                .with_episode_cap(cap);
            Box::new(MazeEnv::new(maze))
        }

        Ok(match self {
            EnvSpec::Chain { length } => {
                Box::new(ChainEnv::new(*length)?.with_episode_cap(episode_cap))
            }
            EnvSpec::Corridor { length, step_reward, goal_reward } => {
                rewarded(GridMaze::corridor(*length)?, step_reward, goal_reward, episode_cap)
            }
            EnvSpec::Open { width, height, step_reward, goal_reward } => {
                rewarded(GridMaze::open(*width, *height)?, step_reward, goal_reward, episode_cap)
            }
            EnvSpec::Maze { ascii, step_reward, goal_reward } => {
                rewarded(GridMaze::from_ascii(ascii)?, step_reward, goal_reward, episode_cap)
            }
            EnvSpec::Mdp { file } => {
                let mdp = Mdp::read_interchange(file)?;
                Box::new(MdpEnv::new(mdp, 0).with_episode_cap(episode_cap))
            }
        })
    }

    /// Short label used for the default run directory name.
    pub fn label(&self) -> String {
        match self {
            EnvSpec::Chain { length } => format!("chain-{length}"),
            EnvSpec::Corridor { length, .. } => format!("corridor-{length}"),
            EnvSpec::Open { width, height, .. } => format!("open-{width}x{height}"),
            EnvSpec::Maze { .. } => "maze".into(),
            EnvSpec::Mdp { file } => file
                .file_stem()
                .map_or_else(|| "mdp".into(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentMeta {
    /// Run directory name; defaults to the environment label.
    pub name: Option<String>,
    /// How many seeds to run; seed i trains with `training.seed + i`.
    pub seeds: Option<usize>,
    /// Output root; flag and `TIGHTQ_OUT` take precedence when set.
    pub out: Option<PathBuf>,
    /// Also write the replay memory of each seed as JSONL.
    pub dump_replay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub experiment: ExperimentMeta,
    pub environment: EnvSpec,
    #[serde(default)]
    pub training: TrainingConfig,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ExperimentSpec = toml::from_str(&text).map_err(|e| {
            CoreError::Config(format!("{}: {}", path.display(), e.message()))
        })?;
        spec.training.validate()?;
        Ok(spec)
    }

    pub fn run_name(&self) -> String {
        self.experiment.name.clone().unwrap_or_else(|| self.environment.label())
    }
}

/// Output root resolution: `--out` flag, then the spec, then `TIGHTQ_OUT`,
/// then `./runs`.
pub fn output_root(flag: Option<PathBuf>, spec: &ExperimentSpec) -> PathBuf {
    flag.or_else(|| spec.experiment.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}
