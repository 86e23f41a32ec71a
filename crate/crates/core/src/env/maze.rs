//! Grid maze with wall cells, a start, and a terminal goal. Deterministic:
//! moves that would enter a wall or leave the grid keep the agent in place.

use std::collections::VecDeque;

use super::mdp::{Mdp, MdpBuilder};
use super::{check_action, Environment, Step, DEFAULT_EPISODE_CAP};
use crate::error::{CoreError, Result};

/// Moves in fixed action order: up, down, left, right.
const DELTAS: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Maze layout. Cell `(x, y)` has index `y·width + x`; states of the exported
/// MDP are cell indices (wall cells are unreachable and exported as inert
/// terminal self-loops).
#[derive(Debug, Clone)]
pub struct GridMaze {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    start: usize,
    goal: usize,
    step_reward: f64,
    goal_reward: f64,
    episode_cap: usize,
}

impl GridMaze {
    pub fn new(
        width: usize,
        height: usize,
        walls: Vec<bool>,
        start: usize,
        goal: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CoreError::Env("degenerate maze dimensions".into()));
        }
        if walls.len() != width * height {
            return Err(CoreError::Env("wall mask length mismatch".into()));
        }
        if start >= walls.len() || goal >= walls.len() {
            return Err(CoreError::Env("start or goal outside grid".into()));
        }
        if walls[start] || walls[goal] {
            return Err(CoreError::Env("start and goal must be open cells".into()));
        }
        if start == goal {
            return Err(CoreError::Env("start and goal coincide".into()));
        }
        let maze = GridMaze {
            width,
            height,
            walls,
            start,
            goal,
            step_reward: 0.0,
            goal_reward: 1.0,
            episode_cap: DEFAULT_EPISODE_CAP,
        };
        shortest_path_length(&maze)?;
        Ok(maze)
    }

    /// Parses a rectangular ASCII layout: `#` wall, `.` open, `S` start,
    /// `G` goal. Leading/trailing blank lines are ignored.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(CoreError::Env("empty maze".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = vec![false; width * height];
        let mut start = None;
        let mut goal = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(CoreError::Env(format!("ragged maze row {y}")));
            }
            for (x, c) in row.chars().enumerate() {
                let idx = y * width + x;
                match c {
                    '#' => walls[idx] = true,
                    '.' => {}
                    'S' => start = Some(idx),
                    'G' => goal = Some(idx),
                    other => {
                        return Err(CoreError::Env(format!("unknown maze cell `{other}`")));
                    }
                }
            }
        }
        let start = start.ok_or_else(|| CoreError::Env("maze has no start".into()))?;
        let goal = goal.ok_or_else(|| CoreError::Env("maze has no goal".into()))?;
        GridMaze::new(width, height, walls, start, goal)
    }

    /// 1×n corridor: start at the left end, goal at the right.
    pub fn corridor(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::Env("corridor needs ≥ 2 cells".into()));
        }
        GridMaze::new(n, 1, vec![false; n], 0, n - 1)
    }

    /// Open w×h grid, start top-left, goal bottom-right.
    pub fn open(width: usize, height: usize) -> Result<Self> {
        GridMaze::new(
            width,
            height,
            vec![false; width * height],
            0,
            width * height - 1,
        )
    }

    pub fn with_rewards(mut self, step_reward: f64, goal_reward: f64) -> Self {
        self.step_reward = step_reward;
        self.goal_reward = goal_reward;
        self
    }

    pub fn with_episode_cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    /// Destination of `action` from `cell` under the stay-on-collision rule.
    fn destination(&self, cell: usize, action: usize) -> usize {
        let (dx, dy) = DELTAS[action];
        let x = cell % self.width;
        let y = cell / self.width;
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            return cell;
        }
        let next = ny as usize * self.width + nx as usize;
        if self.walls[next] {
            cell
        } else {
            next
        }
    }

    pub fn into_env(self) -> MazeEnv {
        MazeEnv::new(self)
    }
}

/// Minimal number of moves start→goal by breadth-first search over open cells.
pub fn shortest_path_length(maze: &GridMaze) -> Result<usize> {
    let mut dist = vec![usize::MAX; maze.width * maze.height];
    let mut queue = VecDeque::new();
    dist[maze.start] = 0;
    queue.push_back(maze.start);
    while let Some(cell) = queue.pop_front() {
        if cell == maze.goal {
            return Ok(dist[cell]);
        }
        for action in 0..4 {
            let next = maze.destination(cell, action);
            if next != cell && dist[next] == usize::MAX {
                dist[next] = dist[cell] + 1;
                queue.push_back(next);
            }
        }
    }
    Err(CoreError::Env("goal unreachable from start".into()))
}

/// Stepping instance over a [`GridMaze`] layout.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    maze: GridMaze,
    state: usize,
}

impl MazeEnv {
    pub fn new(maze: GridMaze) -> Self {
        let start = maze.start;
        MazeEnv { maze, state: start }
    }

    pub fn maze(&self) -> &GridMaze {
        &self.maze
    }
}

impl Environment for MazeEnv {
    fn num_states(&self) -> usize {
        self.maze.width * self.maze.height
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&mut self) -> usize {
        self.state = self.maze.start;
        self.state
    }

    fn current_state(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(4, action)?;
        if self.state == self.maze.goal {
            return Err(CoreError::Env("step on terminal state without reset".into()));
        }
        let next = self.maze.destination(self.state, action);
        let terminal = next == self.maze.goal;
        let reward = if terminal {
            self.maze.goal_reward
        } else {
            self.maze.step_reward
        };
        self.state = next;
        Ok(Step {
            next_state: next,
            reward,
            terminal,
        })
    }

    fn episode_cap(&self) -> usize {
        self.maze.episode_cap
    }

    fn export_mdp(&self) -> Mdp {
        let m = &self.maze;
        let n = m.width * m.height;
        let mut b = MdpBuilder::new(n, 4).start(m.start).terminal(m.goal);
        for cell in 0..n {
            if cell == m.goal {
                continue;
            }
            if m.walls[cell] {
                // Unreachable; export as an inert absorbing state.
                b = b.terminal(cell);
                continue;
            }
            for action in 0..4 {
                let next = m.destination(cell, action);
                let reward = if next == m.goal {
                    m.goal_reward
                } else {
                    m.step_reward
                };
                b = b.arc(cell, action, next, reward);
            }
        }
        b.build().expect("maze export is a valid MDP")
    }

    fn reseed(&mut self, _seed: u64) {}

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::value_iteration;

    const DETOUR: &str = "
        S#G
        ...
    ";

    #[test]
    fn wall_collision_stays_in_place() {
        let maze = GridMaze::from_ascii(DETOUR).unwrap();
        let mut env = maze.into_env();
        env.reset();
        // `right` from S runs into the wall at (1,0).
        let s = env.step(3).unwrap();
        assert_eq!(s.next_state, env.maze().start());
        assert_eq!(s.reward, 0.0);
        assert!(!s.terminal);
    }

    #[test]
    fn edge_collision_stays_in_place() {
        let maze = GridMaze::corridor(3).unwrap();
        let mut env = maze.into_env();
        env.reset();
        for action in [0, 1, 2] {
            // up, down, left all leave the corridor from the start cell
            let s = env.step(action).unwrap();
            assert_eq!(s.next_state, 0);
        }
    }

    #[test]
    fn reaching_goal_pays_and_terminates() {
        let mut env = GridMaze::corridor(2).unwrap().into_env();
        env.reset();
        let s = env.step(3).unwrap();
        assert!(s.terminal);
        assert_eq!(s.reward, 1.0);
        assert!(env.step(3).is_err());
    }

    #[test]
    fn bfs_adjacent_goal() {
        let maze = GridMaze::from_ascii("SG").unwrap();
        assert_eq!(shortest_path_length(&maze).unwrap(), 1);
    }

    #[test]
    fn bfs_corridor_length() {
        for n in 2..10 {
            let maze = GridMaze::corridor(n).unwrap();
            assert_eq!(shortest_path_length(&maze).unwrap(), n - 1);
        }
    }

    #[test]
    fn bfs_matches_exhaustive_simple_path_search() {
        let maze = GridMaze::from_ascii(DETOUR).unwrap();

        // Exhaustive DFS over simple paths.
        fn dfs(maze: &GridMaze, cell: usize, seen: &mut Vec<bool>, len: usize, best: &mut usize) {
            if cell == maze.goal() {
                *best = (*best).min(len);
                return;
            }
            for action in 0..4 {
                let next = maze.destination(cell, action);
                if next != cell && !seen[next] {
                    seen[next] = true;
                    dfs(maze, next, seen, len + 1, best);
                    seen[next] = false;
                }
            }
        }
        let mut seen = vec![false; 6];
        seen[maze.start()] = true;
        let mut best = usize::MAX;
        dfs(&maze, maze.start(), &mut seen, 0, &mut best);

        assert_eq!(best, 4);
        assert_eq!(shortest_path_length(&maze).unwrap(), best);
    }

    #[test]
    fn unreachable_goal_rejected() {
        let r = GridMaze::from_ascii("S#G");
        assert!(r.is_err());
    }

    #[test]
    fn oracle_start_value_matches_path_length() {
        let maze = GridMaze::open(5, 5).unwrap();
        let p = shortest_path_length(&maze).unwrap();
        assert_eq!(p, 8);
        let env = maze.into_env();
        let res = value_iteration(&env.export_mdp(), 0.95, 1e-10).unwrap();
        let start = env.maze().start();
        let best = res.max_q(start);
        let expect = 0.95_f64.powi(p as i32 - 1);
        assert!((best - expect).abs() < 1e-9, "{best} vs {expect}");
    }

    #[test]
    fn export_agrees_with_stepping_everywhere() {
        let maze = GridMaze::from_ascii("S.#\n..G").unwrap();
        let env = maze.into_env();
        let mdp = env.export_mdp();
        for cell in 0..6 {
            if env.maze().is_wall(cell) || cell == env.maze().goal() {
                continue;
            }
            for action in 0..4 {
                let mut probe = env.clone();
                probe.reset();
                probe.state = cell;
                let s = probe.step(action).unwrap();
                assert_eq!(mdp.prob(cell, action, s.next_state), 1.0);
                assert_eq!(mdp.reward(cell, action), s.reward);
                assert_eq!(mdp.is_terminal(s.next_state), s.terminal);
            }
        }
    }
}
