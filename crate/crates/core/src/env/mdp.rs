//! Explicit finite MDPs: dense transition kernel, expected rewards r(s,a),
//! terminal set, initial-state distribution, and a plain-text interchange
//! format so the oracle subcommand can consume exported environments.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CoreError, Result};

/// Row-sum / distribution-sum tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// An explicit MDP. The kernel is dense: `P(s'|s,a)` laid out as
/// `kernel[(s * num_actions + a) * num_states + s']`. Rewards are expected
/// per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    kernel: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    initial: Vec<f64>,
}

impl Mdp {
    /// Validates and wraps raw components. Terminal states must self-loop
    /// with zero reward; every transition row must sum to 1 within 1e-12,
    /// as must the initial distribution.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        kernel: Vec<f64>,
        rewards: Vec<f64>,
        terminal: Vec<bool>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(CoreError::Env("empty state or action space".into()));
        }
        if kernel.len() != num_states * num_actions * num_states
            || rewards.len() != num_states * num_actions
            || terminal.len() != num_states
            || initial.len() != num_states
        {
            return Err(CoreError::Env("component shapes inconsistent".into()));
        }
        let mdp = Mdp {
            num_states,
            num_actions,
            kernel,
            rewards,
            terminal,
            initial,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.kernel_row(s, a);
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(CoreError::Env(format!(
                        "kernel row ({s},{a}) has probabilities outside [0,1]"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(CoreError::Env(format!(
                        "kernel row ({s},{a}) sums to {sum}, not 1"
                    )));
                }
                if self.terminal[s] {
                    if row[s] != 1.0 {
                        return Err(CoreError::Env(format!(
                            "terminal state {s} must self-loop (action {a})"
                        )));
                    }
                    if self.reward(s, a) != 0.0 {
                        return Err(CoreError::Env(format!(
                            "terminal state {s} must have zero reward (action {a})"
                        )));
                    }
                }
                if !self.reward(s, a).is_finite() {
                    return Err(CoreError::Env(format!("reward ({s},{a}) not finite")));
                }
            }
        }
        if self.initial.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(CoreError::Env("initial distribution outside [0,1]".into()));
        }
        let isum: f64 = self.initial.iter().sum();
        if (isum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(CoreError::Env(format!(
                "initial distribution sums to {isum}, not 1"
            )));
        }
        for s in 0..self.num_states {
            if self.terminal[s] && self.initial[s] > 0.0 {
                return Err(CoreError::Env(format!("initial mass on terminal state {s}")));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.kernel[base..base + self.num_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.kernel_row(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    /// Serializes to the interchange text format (see `parse`).
    pub fn to_interchange(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "states {}", self.num_states);
        let _ = writeln!(out, "actions {}", self.num_actions);
        let terminals: Vec<String> = (0..self.num_states)
            .filter(|&s| self.terminal[s])
            .map(|s| s.to_string())
            .collect();
        if !terminals.is_empty() {
            let _ = writeln!(out, "terminal {}", terminals.join(" "));
        }
        for s in 0..self.num_states {
            if self.initial[s] > 0.0 {
                let _ = writeln!(out, "initial {s} {}", fmt_f64(self.initial[s]));
            }
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let r = self.reward(s, a);
                for next in 0..self.num_states {
                    let p = self.prob(s, a, next);
                    if p > 0.0 {
                        let _ = writeln!(out, "t {s} {a} {next} {} {}", fmt_f64(p), fmt_f64(r));
                    }
                }
            }
        }
        out
    }

    pub fn write_interchange(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_interchange())?;
        Ok(())
    }

    /// Parses the interchange format:
    ///
    /// ```text
    /// states N
    /// actions M
    /// terminal s ...
    /// initial s prob          (repeatable)
    /// t s a s' prob reward    (one per positive-probability transition)
    /// ```
    ///
    /// `#` starts a comment. Per-transition rewards are collapsed to the
    /// expected reward r(s,a) = Σ_s' P(s'|s,a)·reward(s,a,s'). Rows for
    /// terminal states may be omitted; they are filled in as zero-reward
    /// self-loops.
    pub fn parse(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| CoreError::Parse { line, msg };
        let mut num_states = None;
        let mut num_actions = None;
        let mut terminal_ids: Vec<usize> = Vec::new();
        let mut initial_pairs: Vec<(usize, f64)> = Vec::new();
        let mut triples: Vec<(usize, usize, usize, f64, f64)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            match tag {
                "states" | "actions" => {
                    let [n] = rest[..] else {
                        return Err(perr(lineno, format!("`{tag}` takes one count")));
                    };
                    let n: usize = n
                        .parse()
                        .map_err(|_| perr(lineno, format!("bad count `{n}`")))?;
                    if tag == "states" {
                        num_states = Some(n);
                    } else {
                        num_actions = Some(n);
                    }
                }
                "terminal" => {
                    for tok in rest {
                        let s: usize = tok
                            .parse()
                            .map_err(|_| perr(lineno, format!("bad state id `{tok}`")))?;
                        terminal_ids.push(s);
                    }
                }
                "initial" => {
                    let [s, p] = rest[..] else {
                        return Err(perr(lineno, "`initial` takes state and prob".into()));
                    };
                    let s: usize = s
                        .parse()
                        .map_err(|_| perr(lineno, format!("bad state id `{s}`")))?;
                    let p: f64 = p
                        .parse()
                        .map_err(|_| perr(lineno, format!("bad probability `{p}`")))?;
                    initial_pairs.push((s, p));
                }
                "t" => {
                    let [s, a, next, p, r] = rest[..] else {
                        return Err(perr(lineno, "`t` takes s a s' prob reward".into()));
                    };
                    let parse_u = |tok: &str| -> Result<usize> {
                        tok.parse()
                            .map_err(|_| perr(lineno, format!("bad index `{tok}`")))
                    };
                    let parse_f = |tok: &str| -> Result<f64> {
                        tok.parse()
                            .map_err(|_| perr(lineno, format!("bad number `{tok}`")))
                    };
                    triples.push((
                        parse_u(s)?,
                        parse_u(a)?,
                        parse_u(next)?,
                        parse_f(p)?,
                        parse_f(r)?,
                    ));
                }
                other => {
                    return Err(perr(lineno, format!("unknown directive `{other}`")));
                }
            }
        }

        let num_states =
            num_states.ok_or_else(|| CoreError::Parse { line: 0, msg: "missing `states`".into() })?;
        let num_actions = num_actions
            .ok_or_else(|| CoreError::Parse { line: 0, msg: "missing `actions`".into() })?;
        let mut terminal = vec![false; num_states];
        for s in terminal_ids {
            if s >= num_states {
                return Err(CoreError::Env(format!("terminal state {s} out of range")));
            }
            terminal[s] = true;
        }
        let mut initial = vec![0.0; num_states];
        if initial_pairs.is_empty() {
            initial[0] = 1.0;
        } else {
            for (s, p) in initial_pairs {
                if s >= num_states {
                    return Err(CoreError::Env(format!("initial state {s} out of range")));
                }
                initial[s] += p;
            }
        }

        let mut kernel = vec![0.0; num_states * num_actions * num_states];
        let mut expected_r = vec![0.0; num_states * num_actions];
        for (s, a, next, p, r) in triples {
            if s >= num_states || next >= num_states {
                return Err(CoreError::Env(format!("transition state out of range: {s}->{next}")));
            }
            if a >= num_actions {
                return Err(CoreError::Env(format!("action {a} out of range")));
            }
            kernel[(s * num_actions + a) * num_states + next] += p;
            expected_r[s * num_actions + a] += p * r;
        }
        // Fill omitted terminal rows with the mandated self-loop.
        for s in 0..num_states {
            if !terminal[s] {
                continue;
            }
            for a in 0..num_actions {
                let base = (s * num_actions + a) * num_states;
                let row = &kernel[base..base + num_states];
                if row.iter().all(|&p| p == 0.0) {
                    kernel[base + s] = 1.0;
                    expected_r[s * num_actions + a] = 0.0;
                }
            }
        }
        Mdp::new(num_states, num_actions, kernel, expected_r, terminal, initial)
    }

    pub fn read_interchange(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Shortest-exact decimal via serde_json's float writer, so round-trips are
/// value-exact.
fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).expect("finite float serializes")
}

/// Incremental construction for deterministic and small stochastic MDPs.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    num_states: usize,
    num_actions: usize,
    kernel: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    initial: Vec<f64>,
}

impl MdpBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        MdpBuilder {
            num_states,
            num_actions,
            kernel: vec![0.0; num_states * num_actions * num_states],
            rewards: vec![0.0; num_states * num_actions],
            terminal: vec![false; num_states],
            initial: vec![0.0; num_states],
        }
    }

    /// Adds probability mass `p` to (s,a)→next and `p·reward` to r(s,a).
    pub fn transition(mut self, s: usize, a: usize, next: usize, p: f64, reward: f64) -> Self {
        self.kernel[(s * self.num_actions + a) * self.num_states + next] += p;
        self.rewards[s * self.num_actions + a] += p * reward;
        self
    }

    /// Deterministic arc: probability 1.
    pub fn arc(self, s: usize, a: usize, next: usize, reward: f64) -> Self {
        self.transition(s, a, next, 1.0, reward)
    }

    pub fn terminal(mut self, s: usize) -> Self {
        self.terminal[s] = true;
        for a in 0..self.num_actions {
            let base = (s * self.num_actions + a) * self.num_states;
            for p in &mut self.kernel[base..base + self.num_states] {
                *p = 0.0;
            }
            self.kernel[base + s] = 1.0;
            self.rewards[s * self.num_actions + a] = 0.0;
        }
        self
    }

    pub fn start(mut self, s: usize) -> Self {
        self.initial = vec![0.0; self.num_states];
        self.initial[s] = 1.0;
        self
    }

    pub fn initial_mass(mut self, s: usize, p: f64) -> Self {
        self.initial[s] += p;
        self
    }

    pub fn build(self) -> Result<Mdp> {
        Mdp::new(
            self.num_states,
            self.num_actions,
            self.kernel,
            self.rewards,
            self.terminal,
            self.initial,
        )
    }
}
