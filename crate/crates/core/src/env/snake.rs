//! Snake on a bounded grid. The agent sees a 12-bit state:
//! APL (apple octant), DIR (one-hot heading) and OBS (blocked neighbours),
//! each indexed UP, RIGHT, DOWN, LEFT.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::types::EnvId;

pub const STATE_DIM: usize = 12;
pub const APL: usize = 0;
pub const DIR: usize = 4;
pub const OBS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnakeConfig {
    pub width: usize,
    pub height: usize,
    pub apple_reward: f64,
    pub death_reward: f64,
    pub step_reward: f64,
    /// Added when a step brings the head closer to the apple (Manhattan
    /// distance), subtracted when it moves away.
    pub approach_reward: f64,
    /// Hard cap on episode length.
    pub max_steps: usize,
    /// Episode is truncated after this many steps without eating.
    pub starvation_steps: usize,
}

impl Default for SnakeConfig {
    fn default() -> Self {
        SnakeConfig {
            width: 12,
            height: 12,
            apple_reward: 10.0,
            death_reward: -100.0,
            step_reward: -0.1,
            approach_reward: 0.0,
            max_steps: 1000,
            starvation_steps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up = 0,
    Right = 1,
    Down = 2,
    Left = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Right,
        Direction::Down,
        Direction::Left,
    ];
    pub const NAMES: [&'static str; 4] = ["UP", "RIGHT", "DOWN", "LEFT"];

    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i % 4]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Direction {
        Direction::from_index(self.index() + 2)
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Right => (1, 0),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Body,
    Apple,
}

pub type Pos = (i32, i32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnakeState {
    pub width: usize,
    pub height: usize,
    /// Head first.
    pub snake: VecDeque<Pos>,
    pub direction: Direction,
    pub apple: Pos,
}

impl SnakeState {
    /// Length-1 snake in the board centre with a random heading.
    pub fn new_random(cfg: &SnakeConfig, rng: &mut ChaCha8Rng) -> SnakeState {
        let head = ((cfg.width / 2) as i32, (cfg.height / 2) as i32);
        let direction = Direction::from_index(rng.random_range(0..4));
        let mut state = SnakeState {
            width: cfg.width,
            height: cfg.height,
            snake: VecDeque::from([head]),
            direction,
            apple: head,
        };
        state.apple = state
            .random_empty_cell(rng)
            .expect("a fresh board has empty cells");
        state
    }

    pub fn head(&self) -> Pos {
        self.snake[0]
    }

    pub fn in_bounds(&self, (x, y): Pos) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Wall or body cell. The neck is left out: reversing is coerced to
    /// straight, so the snake can never move into it.
    pub fn is_obstacle(&self, pos: Pos) -> bool {
        !self.in_bounds(pos) || self.snake.iter().skip(2).any(|&c| c == pos)
    }

    pub fn board(&self) -> Vec<Vec<Cell>> {
        let mut board = vec![vec![Cell::Empty; self.width]; self.height];
        for &(x, y) in &self.snake {
            board[y as usize][x as usize] = Cell::Body;
        }
        board[self.apple.1 as usize][self.apple.0 as usize] = Cell::Apple;
        board
    }

    /// APL ++ DIR ++ OBS as 0/1 reals.
    pub fn encode(&self) -> Vec<f64> {
        let mut s = vec![0.0; STATE_DIM];
        let (hx, hy) = self.head();
        let (ax, ay) = self.apple;
        s[APL + Direction::Up.index()] = f64::from(ay < hy);
        s[APL + Direction::Right.index()] = f64::from(ax > hx);
        s[APL + Direction::Down.index()] = f64::from(ay > hy);
        s[APL + Direction::Left.index()] = f64::from(ax < hx);
        s[DIR + self.direction.index()] = 1.0;
        for d in Direction::ALL {
            let (dx, dy) = d.delta();
            s[OBS + d.index()] = f64::from(self.is_obstacle((hx + dx, hy + dy)));
        }
        s
    }

    fn random_empty_cell(&self, rng: &mut ChaCha8Rng) -> Option<Pos> {
        let empty: Vec<Pos> = (0..self.height as i32)
            .flat_map(|y| (0..self.width as i32).map(move |x| (x, y)))
            .filter(|p| !self.snake.contains(p))
            .collect();
        if empty.is_empty() {
            None
        } else {
            Some(empty[rng.random_range(0..empty.len())])
        }
    }

    /// Heading actually taken for `action`; reversing is coerced to straight.
    pub fn effective_direction(&self, action: usize) -> Direction {
        let wanted = Direction::from_index(action);
        if wanted == self.direction.opposite() {
            self.direction
        } else {
            wanted
        }
    }

    /// One game tick. Returns the next state, the reward and whether the
    /// game ended.
    pub fn step(
        &self,
        action: usize,
        cfg: &SnakeConfig,
        rng: &mut ChaCha8Rng,
    ) -> (SnakeState, f64, bool) {
        let direction = self.effective_direction(action);
        let (dx, dy) = direction.delta();
        let (hx, hy) = self.head();
        let new_head = (hx + dx, hy + dy);
        let mut next = self.clone();
        next.direction = direction;

        if !self.in_bounds(new_head) {
            return (next, cfg.death_reward, true);
        }
        let ate = new_head == self.apple;
        if !ate {
            next.snake.pop_back();
        }
        if next.snake.contains(&new_head) {
            return (next, cfg.death_reward, true);
        }
        next.snake.push_front(new_head);
        if ate {
            match next.random_empty_cell(rng) {
                Some(cell) => next.apple = cell,
                // Board filled: the game is won.
                None => return (next, cfg.apple_reward, true),
            }
            (next, cfg.apple_reward, false)
        } else {
            let dist = |(x, y): Pos| (x - self.apple.0).abs() + (y - self.apple.1).abs();
            let shaped = match dist(new_head).cmp(&dist((hx, hy))) {
                std::cmp::Ordering::Less => cfg.approach_reward,
                std::cmp::Ordering::Greater => -cfg.approach_reward,
                std::cmp::Ordering::Equal => 0.0,
            };
            (next, cfg.step_reward + shaped, false)
        }
    }
}

pub struct SnakeEnv {
    cfg: SnakeConfig,
    rng: ChaCha8Rng,
    state: SnakeState,
    steps: usize,
    since_apple: usize,
}

impl SnakeEnv {
    pub fn new(cfg: SnakeConfig, mut rng: ChaCha8Rng) -> Self {
        let state = SnakeState::new_random(&cfg, &mut rng);
        SnakeEnv {
            cfg,
            rng,
            state,
            steps: 0,
            since_apple: 0,
        }
    }

    pub fn state(&self) -> &SnakeState {
        &self.state
    }

    pub fn score(&self) -> usize {
        self.state.snake.len() - 1
    }
}

impl Environment for SnakeEnv {
    fn id(&self) -> EnvId {
        EnvId::Snake
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = SnakeState::new_random(&self.cfg, &mut self.rng);
        self.steps = 0;
        self.since_apple = 0;
        self.state.encode()
    }

    fn observation(&self) -> Vec<f64> {
        self.state.encode()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        let len_before = self.state.snake.len();
        let (next, reward, terminal) = self.state.step(action, &self.cfg, &mut self.rng);
        self.state = next;
        self.steps += 1;
        if self.state.snake.len() > len_before {
            self.since_apple = 0;
        } else {
            self.since_apple += 1;
        }
        let truncated = !terminal
            && (self.steps >= self.cfg.max_steps || self.since_apple >= self.cfg.starvation_steps);
        StepOutcome {
            observation: self.state.encode(),
            reward,
            terminal,
            truncated,
        }
    }
}
