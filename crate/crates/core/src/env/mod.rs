//! Toy environments with finite, enumerable state spaces, plus the exact
//! value-iteration oracle used to verify bounds against Q*.
//!
//! All environments can export themselves as an explicit [`Mdp`]; the export
//! is the ground truth the oracle solves. Rewards are emitted on the
//! transition *entering* the rewarding state.

mod chain;
mod maze;
pub mod mdp;
mod value_iteration;

pub use chain::ChainEnv;
pub use maze::{shortest_path_length, GridMaze, MazeEnv};
pub use mdp::{Mdp, MdpBuilder};
pub use value_iteration::{value_iteration, ValueIterationResult};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// Default per-episode step cap; capped episodes are truncated, not terminal.
pub const DEFAULT_EPISODE_CAP: usize = 200;

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// A finite-state episodic environment.
///
/// States are indices in `0..num_states()`, actions in `0..num_actions()`.
/// Stochastic environments draw from their own seeded generator; deterministic
/// ones ignore it, so reseeding them is a no-op in behavior.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;

    /// Starts a new episode and returns its initial state.
    fn reset(&mut self) -> usize;

    fn current_state(&self) -> usize;

    /// Applies `action`. Errors on out-of-range actions or stepping a
    /// terminal state without reset.
    fn step(&mut self, action: usize) -> Result<Step>;

    /// Per-episode step limit after which the driver truncates.
    fn episode_cap(&self) -> usize {
        DEFAULT_EPISODE_CAP
    }

    /// Designated do-nothing action for the no-op evaluation protocol, if the
    /// environment has one.
    fn no_op_action(&self) -> Option<usize> {
        None
    }

    /// Ground-truth dynamics for the oracle.
    fn export_mdp(&self) -> Mdp;

    /// Replaces the environment's random stream (no-op for deterministic envs).
    fn reseed(&mut self, seed: u64);

    fn boxed_clone(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Checks an action index against the environment's range.
fn check_action(num_actions: usize, action: usize) -> Result<()> {
    if action >= num_actions {
        return Err(CoreError::Env(format!(
            "action {action} out of range (have {num_actions})"
        )));
    }
    Ok(())
}

/// Simulates an explicit [`Mdp`] directly: next states are drawn from the
/// kernel with a seeded generator, rewards are the expected r(s,a).
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: Mdp,
    state: usize,
    rng: ChaCha8Rng,
    episode_cap: usize,
    no_op: Option<usize>,
}

impl MdpEnv {
    pub fn new(mdp: Mdp, seed: u64) -> Self {
        let mut env = MdpEnv {
            mdp,
            state: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode_cap: DEFAULT_EPISODE_CAP,
            no_op: None,
        };
        env.reset();
        env
    }

    pub fn with_episode_cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    pub fn with_no_op(mut self, action: usize) -> Self {
        self.no_op = Some(action);
        self
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    fn sample_initial(&mut self) -> usize {
        sample_categorical(self.mdp.initial_dist(), &mut self.rng)
    }
}

/// Draws an index from an explicit distribution by walking the cumulative sum.
fn sample_categorical<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    // Rounding can leave cum marginally below 1; land on the last support point.
    last_positive
}

impl Environment for MdpEnv {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn reset(&mut self) -> usize {
        self.state = self.sample_initial();
        self.state
    }

    fn current_state(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(self.num_actions(), action)?;
        if self.mdp.is_terminal(self.state) {
            return Err(CoreError::Env("step on terminal state without reset".into()));
        }
        let row = self.mdp.kernel_row(self.state, action).to_vec();
        let next = sample_categorical(&row, &mut self.rng);
        let reward = self.mdp.reward(self.state, action);
        self.state = next;
        Ok(Step {
            next_state: next,
            reward,
            terminal: self.mdp.is_terminal(next),
        })
    }

    fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    fn no_op_action(&self) -> Option<usize> {
        self.no_op
    }

    fn export_mdp(&self) -> Mdp {
        self.mdp.clone()
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdp::MdpBuilder;

    fn biased_two_state() -> Mdp {
        MdpBuilder::new(2, 1)
            .transition(0, 0, 1, 0.7, 1.0)
            .transition(0, 0, 0, 0.3, 0.0)
            .terminal(1)
            .start(0)
            .build()
            .unwrap()
    }

    #[test]
    fn empirical_transition_frequency_matches_kernel() {
        let mut env = MdpEnv::new(biased_two_state(), 99);
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            env.reset();
            let step = env.step(0).unwrap();
            if step.next_state == 1 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn steps_stay_on_kernel_support() {
        let mut env = MdpEnv::new(biased_two_state(), 5);
        let mdp = env.export_mdp();
        for _ in 0..10_000 {
            let s = env.current_state();
            if mdp.is_terminal(s) {
                env.reset();
                continue;
            }
            let step = env.step(0).unwrap();
            assert!(mdp.prob(s, 0, step.next_state) > 0.0);
        }
    }

    #[test]
    fn rejects_out_of_range_action() {
        let mut env = MdpEnv::new(biased_two_state(), 1);
        assert!(env.step(1).is_err());
    }

    #[test]
    fn terminal_state_requires_reset() {
        let mut env = MdpEnv::new(biased_two_state(), 2);
        loop {
            if env.step(0).unwrap().terminal {
                break;
            }
        }
        assert!(env.step(0).is_err());
        env.reset();
        assert!(env.step(0).is_ok());
    }

    #[test]
    fn reseed_reproduces_trajectories() {
        let mut env = MdpEnv::new(biased_two_state(), 7);
        let run = |env: &mut MdpEnv| -> Vec<usize> {
            env.reseed(123);
            env.reset();
            let mut states = Vec::new();
            for _ in 0..50 {
                let s = env.step(0).unwrap();
                states.push(s.next_state);
                if s.terminal {
                    env.reset();
                }
            }
            states
        };
        assert_eq!(run(&mut env), run(&mut env));
    }
}
