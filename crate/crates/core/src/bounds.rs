//! Multi-step bounds on Q* and the penalized training objective.
//!
//! From a replayed transition j with its episode neighbors, the frozen
//! parameters yield a Bellman target
//!
//! ```text
//! y_j = r_j + γ·max_a Q⁻(s_{j+1}, a)
//! ```
//!
//! plus lower bounds from successor windows,
//!
//! ```text
//! L_{j,k} = Σ_{i=0..k} γ^i·r_{j+i} + γ^{k+1}·max_a Q⁻(s_{j+k+1}, a),   k ≥ 1
//! ```
//!
//! and upper bounds from predecessor windows,
//!
//! ```text
//! U_{j,k} = γ^{−k−1}·Q⁻(s_{j−k−1}, a_{j−k−1}) − Σ_{i=0..k} γ^{i−k−1}·r_{j−k−1+i},   k ≥ 0
//! ```
//!
//! where the U-term evaluates the action actually taken, not a max. The
//! largest lower bound and smallest upper bound bracket Q*(s_j, a_j); the
//! training loss enforces the bracket with quadratic hinge penalties:
//!
//! ```text
//! loss(q) = (q − y)² + λ·(Lᵐᵃˣ − q)₊² + λ·(q − Uᵐⁱⁿ)₊²
//! ```
//!
//! Everything here treats y, L, U as constants of the frozen parameters
//! (semi-gradient); only q carries gradient.

use serde::{Deserialize, Serialize};

use crate::qfunction::{QFunction, QGradient};
use crate::replay::{EpisodeId, SampledItem};

/// How the batch objective is rescaled to offset penalty-term inflation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RescaleMode {
    /// No rescaling: the raw summed objective.
    None,
    /// Constant 1/(1 + 2λ), the worst-case inflation.
    Constant,
    /// 1/(1 + 2λ·α) with α the fraction of penalty terms active in the
    /// batch, clamped to [1/(1+2λ), 1]. Matches the unpenalized scale when
    /// no constraint fires.
    #[default]
    ActiveFraction,
}

/// Penalty/bound hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Penalty coefficient λ ≥ 0; 0 recovers the plain squared Bellman error.
    pub lambda: f64,
    /// Neighbor horizon K ≥ 0: lower bounds use k ∈ 1..=K, upper bounds
    /// k ∈ 0..K.
    pub k: usize,
    pub rescale: RescaleMode,
    /// Let the realized discounted return R_j join the lower aggregate for
    /// episodes that ended in a terminal state.
    pub use_return_bound: bool,
    /// Optional per-item cap on how many k values are evaluated per side
    /// (constraint subsampling). `None` evaluates all available.
    pub constraint_cap: Option<usize>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            lambda: 4.0,
            k: 4,
            rescale: RescaleMode::ActiveFraction,
            use_return_bound: true,
            constraint_cap: None,
        }
    }
}

impl PenaltyConfig {
    /// Plain DQN: no penalties, no bounds evaluated.
    pub fn dqn() -> Self {
        PenaltyConfig {
            lambda: 0.0,
            k: 0,
            rescale: RescaleMode::None,
            use_return_bound: false,
            constraint_cap: None,
        }
    }

    fn side_limit(&self) -> usize {
        match self.constraint_cap {
            Some(cap) => self.k.min(cap),
            None => self.k,
        }
    }
}

/// All bound quantities for one sampled transition. Empty aggregates are
/// `None` (−∞ for the lower side, +∞ for the upper side); the penalty code
/// treats them as inactive rather than doing arithmetic on infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub target: f64,
    /// `(k, L_{j,k})` for each evaluated k.
    pub lower: Vec<(usize, f64)>,
    /// R_j when it participates in the lower aggregate.
    pub return_bound: Option<f64>,
    /// `(k, U_{j,k})` for each evaluated k.
    pub upper: Vec<(usize, f64)>,
    pub l_max: Option<f64>,
    pub u_min: Option<f64>,
}

/// Bellman target from the frozen parameters. Terminal transitions take the
/// bare reward; truncated ones bootstrap as if the episode had continued.
pub fn target<Q: QFunction>(item: &SampledItem, frozen: &Q, gamma: f64) -> f64 {
    let t = &item.center;
    if t.terminal {
        t.reward
    } else {
        t.reward + gamma * frozen.max_q(t.next_state)
    }
}

/// L_{j,k} for k ≥ 1, or `None` when fewer than k successors are stored.
/// When the window ends on the episode's terminal transition the bootstrap
/// max-term is dropped (the remaining return is exact).
pub fn lower_bound<Q: QFunction>(
    item: &SampledItem,
    k: usize,
    frozen: &Q,
    gamma: f64,
) -> Option<f64> {
    if k < 1 || item.successors.len() < k {
        return None;
    }
    let mut sum = item.center.reward;
    let mut scale = 1.0;
    for i in 1..=k {
        scale *= gamma;
        sum += scale * item.successor(i).expect("checked length").reward;
    }
    let last = item.successor(k).expect("checked length");
    if !last.terminal {
        sum += scale * gamma * frozen.max_q(last.next_state);
    }
    Some(sum)
}

/// U_{j,k} for k ≥ 0, or `None` when fewer than k+1 predecessors are stored.
/// Undefined at γ=0 (the formula divides by γ), so it is skipped there.
pub fn upper_bound<Q: QFunction>(
    item: &SampledItem,
    k: usize,
    frozen: &Q,
    gamma: f64,
) -> Option<f64> {
    if gamma == 0.0 {
        return None;
    }
    let anchor = item.predecessor(k)?;
    let inv = gamma.powi(-(k as i32) - 1);
    let mut u = inv * frozen.q_value(anchor.state, anchor.action);
    let mut scale = inv;
    for i in 0..=k {
        let t = item.predecessor(k - i).expect("anchor implies the rest");
        u -= scale * t.reward;
        scale *= gamma;
    }
    Some(u)
}

/// Evaluates the full bound set for one item under `cfg`.
pub fn aggregate<Q: QFunction>(
    item: &SampledItem,
    cfg: &PenaltyConfig,
    frozen: &Q,
    gamma: f64,
) -> BoundSet {
    let y = target(item, frozen, gamma);
    let limit = cfg.side_limit();

    let mut lower = Vec::new();
    for k in 1..=limit {
        if let Some(l) = lower_bound(item, k, frozen, gamma) {
            lower.push((k, l));
        }
    }
    let return_bound = if cfg.use_return_bound && item.episode_terminal {
        item.center.ret
    } else {
        None
    };

    let mut upper = Vec::new();
    for k in 0..limit {
        if let Some(u) = upper_bound(item, k, frozen, gamma) {
            upper.push((k, u));
        }
    }

    let l_max = lower
        .iter()
        .map(|&(_, l)| l)
        .chain(return_bound)
        .fold(None, |acc: Option<f64>, l| {
            Some(acc.map_or(l, |a| a.max(l)))
        });
    let u_min = upper.iter().map(|&(_, u)| u).fold(None, |acc: Option<f64>, u| {
        Some(acc.map_or(u, |a| a.min(u)))
    });

    BoundSet {
        target: y,
        lower,
        return_bound,
        upper,
        l_max,
        u_min,
    }
}

/// Quadratic-penalty objective for one sample: returns `(loss, dLoss/dq)`.
/// Missing aggregates contribute exactly zero.
pub fn penalty_loss(q: f64, bounds: &BoundSet, lambda: f64) -> (f64, f64) {
    let err = q - bounds.target;
    let mut loss = err * err;
    let mut dq = 2.0 * err;
    if lambda != 0.0 {
        if let Some(l_max) = bounds.l_max {
            let viol = (l_max - q).max(0.0);
            loss += lambda * viol * viol;
            dq -= 2.0 * lambda * viol;
        }
        if let Some(u_min) = bounds.u_min {
            let viol = (q - u_min).max(0.0);
            loss += lambda * viol * viol;
            dq += 2.0 * lambda * viol;
        }
    }
    (loss, dq)
}

/// Batch objective and its per-item q-gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Rescaled total loss.
    pub loss: f64,
    /// Rescaled d(loss)/d Q(s_j, a_j) per item, in batch order.
    pub gradients: Vec<QGradient>,
    /// The factor both were multiplied by.
    pub rescale_factor: f64,
    /// Fraction of evaluated penalty terms that were active.
    pub active_fraction: f64,
}

/// Sums `penalty_loss` over the batch with bounds and targets computed from
/// the frozen parameters, then applies the configured rescale factor to the
/// loss and every gradient.
pub fn batch_loss<L: QFunction, F: QFunction>(
    items: &[SampledItem],
    live: &L,
    frozen: &F,
    cfg: &PenaltyConfig,
    gamma: f64,
) -> BatchLoss {
    let mut loss = 0.0;
    let mut gradients = Vec::with_capacity(items.len());
    let mut terms = 0usize;
    let mut active = 0usize;
    for item in items {
        let b = aggregate(item, cfg, frozen, gamma);
        let q = live.q_value(item.center.state, item.center.action);
        let (l, dq) = penalty_loss(q, &b, cfg.lambda);
        loss += l;
        gradients.push(QGradient {
            state: item.center.state,
            action: item.center.action,
            dq,
        });
        if let Some(l_max) = b.l_max {
            terms += 1;
            if l_max > q {
                active += 1;
            }
        }
        if let Some(u_min) = b.u_min {
            terms += 1;
            if q > u_min {
                active += 1;
            }
        }
    }
    let active_fraction = if terms == 0 {
        0.0
    } else {
        active as f64 / terms as f64
    };
    let rescale_factor = rescale_factor(cfg, active_fraction);
    if rescale_factor != 1.0 {
        loss *= rescale_factor;
        for g in gradients.iter_mut() {
            g.dq *= rescale_factor;
        }
    }
    BatchLoss {
        loss,
        gradients,
        rescale_factor,
        active_fraction,
    }
}

/// The loss multiplier for a given active fraction. λ=0 always yields
/// exactly 1, keeping the DQN degeneracy bitwise.
pub fn rescale_factor(cfg: &PenaltyConfig, active_fraction: f64) -> f64 {
    if cfg.lambda == 0.0 {
        return 1.0;
    }
    match cfg.rescale {
        RescaleMode::None => 1.0,
        RescaleMode::Constant => 1.0 / (1.0 + 2.0 * cfg.lambda),
        RescaleMode::ActiveFraction => {
            let f = 1.0 / (1.0 + 2.0 * cfg.lambda * active_fraction);
            f.clamp(1.0 / (1.0 + 2.0 * cfg.lambda), 1.0)
        }
    }
}

/// One audit line: everything needed to re-check a sample's bracket offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub episode: EpisodeId,
    pub index: usize,
    pub q: f64,
    pub target: f64,
    pub l_max: Option<f64>,
    pub u_min: Option<f64>,
    pub lower_evaluated: usize,
    pub upper_evaluated: usize,
    pub lower_active: bool,
    pub upper_active: bool,
}

/// Builds audit records for a set of items against live/frozen parameters.
pub fn audit_items<L: QFunction, F: QFunction>(
    items: &[SampledItem],
    live: &L,
    frozen: &F,
    cfg: &PenaltyConfig,
    gamma: f64,
) -> Vec<AuditRecord> {
    items
        .iter()
        .map(|item| {
            let b = aggregate(item, cfg, frozen, gamma);
            let q = live.q_value(item.center.state, item.center.action);
            AuditRecord {
                episode: item.center.episode,
                index: item.center.index,
                q,
                target: b.target,
                l_max: b.l_max,
                u_min: b.u_min,
                lower_evaluated: b.lower.len() + usize::from(b.return_bound.is_some()),
                upper_evaluated: b.upper.len(),
                lower_active: b.l_max.is_some_and(|l| l > q),
                upper_active: b.u_min.is_some_and(|u| q > u),
            }
        })
        .collect()
}
