//! Q-function backends over enumerated states: a tabular array and a dense
//! network reading one-hot state encodings. Both expose the same read
//! interface, so targets and bounds can be computed against a live table, a
//! frozen snapshot, or the exact value-iteration oracle interchangeably.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::ValueIterationResult;
use crate::error::{CoreError, Result};
use crate::nn::{DenseNet, Gradients, RmsPropConfig, RmsPropState};

/// Read access to Q(s, ·).
pub trait QFunction {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;

    /// Q-values for every action in `state`.
    fn q_row(&self, state: usize) -> Vec<f64>;

    fn q_value(&self, state: usize, action: usize) -> f64 {
        self.q_row(state)[action]
    }

    fn max_q(&self, state: usize) -> f64 {
        self.q_row(state)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax action with the lowest-index tie-break used everywhere.
    fn greedy_action(&self, state: usize) -> usize {
        argmax_lowest(&self.q_row(state))
    }
}

/// First index attaining the maximum.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// Per-sample objective gradient routed to the backend: d(loss)/d Q(state, action).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGradient {
    pub state: usize,
    pub action: usize,
    pub dq: f64,
}

/// Plain state×action table, zero-initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    num_states: usize,
    num_actions: usize,
    table: Vec<f64>,
}

impl TabularQ {
    pub fn new(num_states: usize, num_actions: usize) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(CoreError::InvalidArgument("empty table shape".into()));
        }
        Ok(TabularQ {
            num_states,
            num_actions,
            table: vec![0.0; num_states * num_actions],
        })
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.table[state * self.num_actions + action] = value;
    }

    /// One SGD step on the listed entries: Q(s,a) ← Q(s,a) − lr·dq.
    pub fn apply_gradients(&mut self, grads: &[QGradient], learning_rate: f64) {
        for g in grads {
            self.table[g.state * self.num_actions + g.action] -= learning_rate * g.dq;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.table.iter().all(|x| x.is_finite())
    }
}

impl QFunction for TabularQ {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn q_row(&self, state: usize) -> Vec<f64> {
        self.table[state * self.num_actions..(state + 1) * self.num_actions].to_vec()
    }

    fn q_value(&self, state: usize, action: usize) -> f64 {
        self.table[state * self.num_actions + action]
    }
}

/// Dense network over one-hot states: widths `[num_states, hidden…, num_actions]`,
/// trained with RMSProp on summed per-sample gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseQ {
    num_states: usize,
    net: DenseNet,
    opt: RmsPropState,
}

impl DenseQ {
    pub fn new<R: Rng + ?Sized>(
        num_states: usize,
        hidden: &[usize],
        num_actions: usize,
        opt_config: RmsPropConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(num_states);
        widths.extend_from_slice(hidden);
        widths.push(num_actions);
        let net = DenseNet::init(&widths, rng)?;
        let opt = RmsPropState::new(&net, opt_config)?;
        Ok(DenseQ {
            num_states,
            net,
            opt,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.num_states];
        x[state] = 1.0;
        x
    }

    /// Backpropagates each routed gradient and takes one RMSProp step on the
    /// summed parameter gradient.
    pub fn apply_gradients(&mut self, grads: &[QGradient]) -> Result<()> {
        if grads.is_empty() {
            return Ok(());
        }
        let mut total = Gradients::zeros_like(&self.net);
        let mut out_grad = vec![0.0; self.net.output_dim()];
        for g in grads {
            out_grad.iter_mut().for_each(|x| *x = 0.0);
            out_grad[g.action] = g.dq;
            let gi = self.net.backward(&self.one_hot(g.state), &out_grad)?;
            total.add_assign(&gi);
        }
        self.opt.step(&mut self.net, &total)
    }

    pub fn all_finite(&self) -> bool {
        self.net.all_finite()
    }
}

impl QFunction for DenseQ {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    fn q_row(&self, state: usize) -> Vec<f64> {
        self.net
            .forward(&self.one_hot(state))
            .expect("one-hot input always matches the net")
    }
}

/// Live/frozen parameter store, selected per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QBackend {
    Tabular(TabularQ),
    Dense(DenseQ),
}

impl QBackend {
    /// Routes per-sample q-gradients into the backend's own update rule.
    /// `tabular_lr` only applies to the tabular table.
    pub fn apply_gradients(&mut self, grads: &[QGradient], tabular_lr: f64) -> Result<()> {
        match self {
            QBackend::Tabular(t) => {
                t.apply_gradients(grads, tabular_lr);
                Ok(())
            }
            QBackend::Dense(d) => d.apply_gradients(grads),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            QBackend::Tabular(t) => t.all_finite(),
            QBackend::Dense(d) => d.all_finite(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            QBackend::Tabular(_) => "tabular",
            QBackend::Dense(_) => "dense",
        }
    }
}

impl QFunction for QBackend {
    fn num_states(&self) -> usize {
        match self {
            QBackend::Tabular(t) => t.num_states(),
            QBackend::Dense(d) => d.num_states(),
        }
    }

    fn num_actions(&self) -> usize {
        match self {
            QBackend::Tabular(t) => t.num_actions(),
            QBackend::Dense(d) => d.num_actions(),
        }
    }

    fn q_row(&self, state: usize) -> Vec<f64> {
        match self {
            QBackend::Tabular(t) => t.q_row(state),
            QBackend::Dense(d) => d.q_row(state),
        }
    }

    fn q_value(&self, state: usize, action: usize) -> f64 {
        match self {
            QBackend::Tabular(t) => t.q_value(state, action),
            QBackend::Dense(d) => d.q_value(state, action),
        }
    }
}

/// True when the greedy policy of `q` is optimal on every listed state: its
/// chosen action attains the oracle's max Q within `tol`.
pub fn greedy_policy_is_optimal<Q: QFunction>(
    q: &Q,
    oracle: &ValueIterationResult,
    states: impl IntoIterator<Item = usize>,
    tol: f64,
) -> bool {
    states.into_iter().all(|s| {
        let a = q.greedy_action(s);
        oracle.q_value(s, a) >= oracle.max_q(s) - tol
    })
}

/// The exact oracle doubles as a Q-function, so bounds can be checked with
/// frozen parameters set to Q*.
impl QFunction for ValueIterationResult {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn q_row(&self, state: usize) -> Vec<f64> {
        self.row(state).to_vec()
    }

    fn q_value(&self, state: usize, action: usize) -> f64 {
        ValueIterationResult::q_value(self, state, action)
    }
}
