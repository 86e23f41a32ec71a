//! Episode-aware experience replay.
//!
//! Transitions are stored per episode so every sampled item can see its
//! intra-episode neighbors (needed for the multi-step bounds) and so the
//! discounted return R_j can be filled in by a backward pass when the episode
//! closes. Eviction removes whole episodes only; a neighbor window never
//! crosses an eviction boundary.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Monotonic episode identifier, unique within one memory (and one dump).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EpisodeId(pub u64);

/// One stored step `(s_j, a_j, r_j, R_j, s_{j+1})` plus episode bookkeeping.
///
/// `ret` (R_j) is the discounted sum of realized rewards from `index` to the
/// episode's end; it is absent until the episode is finalized. For truncated
/// episodes it is the partial sum only — consumers that need a bound must add
/// their own bootstrap or skip it (the flags say which case they are in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub episode: EpisodeId,
    pub index: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub ret: Option<f64>,
    pub next_state: usize,
    /// True only on the last transition of an episode that ended in a
    /// terminal state.
    pub terminal: bool,
    /// True only on the last transition of an episode cut off by the step
    /// cap. Mutually exclusive with `terminal`.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub id: EpisodeId,
    pub transitions: Vec<Transition>,
    pub finalized: bool,
}

impl Episode {
    /// True when the episode closed by reaching a terminal state.
    pub fn ended_terminal(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }
}

/// A sampled center transition with up to K consecutive same-episode
/// neighbors on each side, in episode order. Owns clones, so it stays valid
/// across later evictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledItem {
    pub center: Transition,
    /// Indices `j+1 ..= j+K` (ascending), as many as the episode holds.
    pub successors: Vec<Transition>,
    /// Indices `j−K .. j` (ascending), as many as the episode holds.
    pub predecessors: Vec<Transition>,
    /// Whether the center's episode ended in a terminal state (as opposed to
    /// being truncated by the step cap).
    pub episode_terminal: bool,
}

impl SampledItem {
    /// Predecessor at episode index `j−k−1`, if stored.
    pub fn predecessor(&self, k: usize) -> Option<&Transition> {
        let m = self.predecessors.len();
        if k + 1 <= m {
            Some(&self.predecessors[m - k - 1])
        } else {
            None
        }
    }

    /// Successor at episode index `j+i` for `i ≥ 1`, if stored.
    pub fn successor(&self, i: usize) -> Option<&Transition> {
        if i >= 1 && i <= self.successors.len() {
            Some(&self.successors[i - 1])
        } else {
            None
        }
    }
}

/// Bounded episode ring. Capacity counts transitions across *closed*
/// episodes; the one in-flight episode rides on top, so total storage is at
/// most capacity + the open episode's length.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    episodes: VecDeque<Episode>,
    capacity: usize,
    next_episode: u64,
    finalized_transitions: usize,
    rng: ChaCha8Rng,
}

impl ReplayMemory {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(CoreError::Replay("capacity must be positive".into()));
        }
        Ok(ReplayMemory {
            episodes: VecDeque::new(),
            capacity,
            next_episode: 0,
            finalized_transitions: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn open_episode_mut(&mut self) -> Option<&mut Episode> {
        self.episodes.back_mut().filter(|e| !e.finalized)
    }

    fn has_open_episode(&self) -> bool {
        self.episodes.back().is_some_and(|e| !e.finalized)
    }

    /// Opens a new episode. Errors if one is already open.
    pub fn begin_episode(&mut self) -> Result<EpisodeId> {
        if self.has_open_episode() {
            return Err(CoreError::Replay("an episode is already open".into()));
        }
        let id = EpisodeId(self.next_episode);
        self.next_episode += 1;
        self.episodes.push_back(Episode {
            id,
            transitions: Vec::new(),
            finalized: false,
        });
        Ok(id)
    }

    /// Appends a step to the open episode, with the R_j slot absent.
    pub fn push(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next_state: usize,
        terminal: bool,
    ) -> Result<()> {
        let Some(ep) = self.open_episode_mut() else {
            return Err(CoreError::Replay(
                "no open episode: call begin_episode after finalization".into(),
            ));
        };
        if ep.transitions.last().is_some_and(|t| t.terminal) {
            return Err(CoreError::Replay("episode already hit a terminal state".into()));
        }
        let t = Transition {
            episode: ep.id,
            index: ep.transitions.len(),
            state,
            action,
            reward,
            ret: None,
            next_state,
            terminal,
            truncated: false,
        };
        ep.transitions.push(t);
        self.evict_to_capacity();
        Ok(())
    }

    /// Closes the open episode: fills every R_j by the backward recurrence
    /// R_t = r_t + γ·R_{t+1} (R at the last step = its reward), and marks the
    /// last transition truncated when it is not terminal.
    pub fn finalize_episode(&mut self, gamma: f64) -> Result<()> {
        let Some(ep) = self.open_episode_mut() else {
            return Err(CoreError::Replay("no open episode to finalize".into()));
        };
        if ep.transitions.is_empty() {
            return Err(CoreError::Replay("cannot finalize an empty episode".into()));
        }
        let n = ep.transitions.len();
        let mut running = 0.0;
        for t in ep.transitions.iter_mut().rev() {
            running = t.reward + gamma * running;
            t.ret = Some(running);
        }
        if !ep.transitions[n - 1].terminal {
            ep.transitions[n - 1].truncated = true;
        }
        ep.finalized = true;
        self.finalized_transitions += n;
        self.evict_to_capacity();
        Ok(())
    }

    /// Drops oldest closed episodes while stored transitions exceed capacity.
    /// The open episode is never evicted.
    fn evict_to_capacity(&mut self) {
        while self.total_transitions() > self.capacity {
            match self.episodes.front() {
                Some(front) if front.finalized => {
                    let gone = self.episodes.pop_front().unwrap();
                    self.finalized_transitions -= gone.transitions.len();
                }
                _ => break,
            }
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions.len()).sum()
    }

    pub fn finalized_transitions(&self) -> usize {
        self.finalized_transitions
    }

    pub fn num_finalized_episodes(&self) -> usize {
        self.episodes.iter().filter(|e| e.finalized).count()
    }

    pub fn finalized_episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter().filter(|e| e.finalized)
    }

    fn item_from(ep: &Episode, j: usize, k: usize) -> SampledItem {
        let lo = j.saturating_sub(k);
        let hi = (j + k).min(ep.transitions.len() - 1);
        SampledItem {
            center: ep.transitions[j].clone(),
            successors: ep.transitions[j + 1..=hi].to_vec(),
            predecessors: ep.transitions[lo..j].to_vec(),
            episode_terminal: ep.ended_terminal(),
        }
    }

    /// Uniform sample over finalized transitions, each with a ±K neighbor
    /// window. Reproducible: the sampler's stream is seeded at construction.
    pub fn sample_batch(&mut self, batch_size: usize, k: usize) -> Result<Vec<SampledItem>> {
        if self.finalized_transitions == 0 {
            return Err(CoreError::Replay("no finalized transitions to sample".into()));
        }
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let mut idx = self.rng.random_range(0..self.finalized_transitions);
            let mut found = None;
            for ep in self.episodes.iter().filter(|e| e.finalized) {
                if idx < ep.transitions.len() {
                    found = Some(Self::item_from(ep, idx, k));
                    break;
                }
                idx -= ep.transitions.len();
            }
            batch.push(found.expect("finalized index in range"));
        }
        Ok(batch)
    }

    /// Every finalized transition as a sampled item — exhaustive sweeps for
    /// audits and oracle checks.
    pub fn iter_items(&self, k: usize) -> impl Iterator<Item = SampledItem> + '_ {
        self.episodes
            .iter()
            .filter(|e| e.finalized)
            .flat_map(move |ep| (0..ep.transitions.len()).map(move |j| Self::item_from(ep, j, k)))
    }

    /// Writes finalized transitions as line-delimited JSON records.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for ep in self.finalized_episodes() {
            for t in &ep.transitions {
                serde_json::to_writer(&mut w, t)?;
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Reads a replay dump back into finalized episodes, grouped by episode id
/// and ordered by intra-episode index. Malformed lines carry line numbers.
pub fn read_dump<R: BufRead>(reader: R) -> Result<Vec<Episode>> {
    let mut episodes: Vec<Episode> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transition = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if t.ret.is_none() {
            return Err(CoreError::Parse {
                line: lineno,
                msg: "dump record lacks a return; only finalized episodes are dumpable".into(),
            });
        }
        match episodes.iter_mut().find(|e| e.id == t.episode) {
            Some(ep) => {
                if t.index != ep.transitions.len() {
                    return Err(CoreError::Parse {
                        line: lineno,
                        msg: format!(
                            "episode {} indices out of order (got {}, expected {})",
                            t.episode.0,
                            t.index,
                            ep.transitions.len()
                        ),
                    });
                }
                ep.transitions.push(t);
            }
            None => {
                if t.index != 0 {
                    return Err(CoreError::Parse {
                        line: lineno,
                        msg: format!("episode {} does not start at index 0", t.episode.0),
                    });
                }
                episodes.push(Episode {
                    id: t.episode,
                    transitions: vec![t],
                    finalized: true,
                });
            }
        }
    }
    Ok(episodes)
}

/// Builds sampled items over loaded episodes, mirroring `iter_items`.
pub fn items_from_episodes(episodes: &[Episode], k: usize) -> Vec<SampledItem> {
    episodes
        .iter()
        .flat_map(|ep| (0..ep.transitions.len()).map(move |j| ReplayMemory::item_from(ep, j, k)))
        .collect()
}
