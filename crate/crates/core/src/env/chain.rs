//! Deterministic n-state chain: s0 … s_{n−1}, rightmost state terminal with
//! reward 1 on entry. The smallest sparse-reward testbed.

use super::mdp::{Mdp, MdpBuilder};
use super::{check_action, Environment, Step, DEFAULT_EPISODE_CAP};
use crate::error::{CoreError, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Chain of `n ≥ 2` states. Action 0 moves left (clamped at s0), action 1
/// moves right; entering the last state yields the terminal reward.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    n: usize,
    state: usize,
    terminal_reward: f64,
    episode_cap: usize,
}

impl ChainEnv {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::Env(format!("chain needs ≥ 2 states, got {n}")));
        }
        Ok(ChainEnv {
            n,
            state: 0,
            terminal_reward: 1.0,
            episode_cap: DEFAULT_EPISODE_CAP,
        })
    }

    pub fn with_episode_cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl Environment for ChainEnv {
    fn num_states(&self) -> usize {
        self.n
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self) -> usize {
        self.state = 0;
        0
    }

    fn current_state(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(2, action)?;
        if self.state == self.n - 1 {
            return Err(CoreError::Env("step on terminal state without reset".into()));
        }
        let next = match action {
            LEFT => self.state.saturating_sub(1),
            _ => self.state + 1,
        };
        let terminal = next == self.n - 1;
        let reward = if terminal { self.terminal_reward } else { 0.0 };
        self.state = next;
        Ok(Step {
            next_state: next,
            reward,
            terminal,
        })
    }

    fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    fn export_mdp(&self) -> Mdp {
        let goal = self.n - 1;
        let mut b = MdpBuilder::new(self.n, 2).start(0).terminal(goal);
        for s in 0..goal {
            let left = s.saturating_sub(1);
            b = b.arc(s, LEFT, left, if left == goal { self.terminal_reward } else { 0.0 });
            let right = s + 1;
            b = b.arc(s, RIGHT, right, if right == goal { self.terminal_reward } else { 0.0 });
        }
        b.build().expect("chain export is a valid MDP")
    }

    fn reseed(&mut self, _seed: u64) {}

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
