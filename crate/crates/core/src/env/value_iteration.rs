//! Exact dynamic-programming oracle: synchronous value iteration on an
//! explicit MDP, run to a sup-norm Bellman residual below tolerance.

use super::mdp::Mdp;
use crate::error::{CoreError, Result};

/// Converged Q* table plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    /// Row-major `(num_states, num_actions)`.
    pub q: Vec<f64>,
    pub num_states: usize,
    pub num_actions: usize,
    pub iterations: usize,
    pub residual: f64,
}

impl ValueIterationResult {
    pub fn q_value(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn max_q(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with lowest-index tie-break, matching the agent's rule.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }
}

const MAX_ITERATIONS: usize = 1_000_000;

/// Iterates Q ← r + γ·P·max_a' Q until the sup-norm update falls to `tol`.
/// Terminal rows are pinned to exactly zero.
pub fn value_iteration(mdp: &Mdp, gamma: f64, tol: f64) -> Result<ValueIterationResult> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(CoreError::InvalidArgument(format!(
            "discount must be in [0,1), got {gamma}"
        )));
    }
    if !(tol > 0.0) {
        return Err(CoreError::InvalidArgument("tolerance must be > 0".into()));
    }
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let mut q = vec![0.0_f64; ns * na];
    let mut next = vec![0.0_f64; ns * na];
    for iter in 1..=MAX_ITERATIONS {
        let max_q: Vec<f64> = (0..ns)
            .map(|s| {
                q[s * na..(s + 1) * na]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut residual = 0.0_f64;
        for s in 0..ns {
            for a in 0..na {
                let idx = s * na + a;
                let backed_up = if mdp.is_terminal(s) {
                    0.0
                } else {
                    let row = mdp.kernel_row(s, a);
                    let mut exp = 0.0;
                    for (sp, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            exp += p * max_q[sp];
                        }
                    }
                    mdp.reward(s, a) + gamma * exp
                };
                residual = residual.max((backed_up - q[idx]).abs());
                next[idx] = backed_up;
            }
        }
        std::mem::swap(&mut q, &mut next);
        if residual <= tol {
            return Ok(ValueIterationResult {
                q,
                num_states: ns,
                num_actions: na,
                iterations: iter,
                residual,
            });
        }
    }
    Err(CoreError::NoConvergence(MAX_ITERATIONS))
}
