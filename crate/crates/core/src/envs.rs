//! Deterministic desk-scale discrete-action tasks.
//!
//! Two tasks are provided, addressed by id string:
//!
//! * `gridworld-<n>`: walk from the top-left to the bottom-right corner of an
//!   `n x n` grid. Observation is the one-hot agent position.
//! * `catch-<w>x<h>`: move a paddle along the bottom row to catch a ball that
//!   falls one row per step from a seeded random column. Observation is two
//!   stacked one-hot planes (ball, paddle).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::policy::ActionSpace;
use crate::rng::Rng;
use crate::{Error, Result};

pub const GRID_STEP_REWARD: f64 = -0.01;
pub const GRID_GOAL_REWARD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: BTreeMap<String, String>,
}

/// Gym-style reset/step interface.
///
/// `step` is only valid between `reset` and the end of an episode unless
/// auto-reset is enabled, in which case stepping a finished episode starts a
/// new one first.
pub trait Environment: Send {
    fn id(&self) -> &str;
    fn action_space(&self) -> &ActionSpace;
    fn observation_width(&self) -> usize;
    fn episode_cap(&self) -> usize;
    fn set_auto_reset(&mut self, enabled: bool);
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

/// Parsed task identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvId {
    Gridworld { n: usize },
    Catch { width: usize, height: usize },
}

impl EnvId {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvId::Gridworld { n } if n < 3 => Err(Error::Config(format!(
                "gridworld side must be at least 3, got {n}"
            ))),
            EnvId::Catch { width, .. } if width < 3 || width % 2 == 0 => Err(Error::Config(
                format!("catch width must be odd and at least 3, got {width}"),
            )),
            EnvId::Catch { height, .. } if height < 4 => Err(Error::Config(format!(
                "catch height must be at least 4, got {height}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        let labels: &[&str] = match self {
            EnvId::Gridworld { .. } => &["UP", "DOWN", "LEFT", "RIGHT"],
            EnvId::Catch { .. } => &["LEFT", "STAY", "RIGHT"],
        };
        ActionSpace::from_labels(labels).expect("static labels are valid")
    }

    pub fn observation_width(&self) -> usize {
        match *self {
            EnvId::Gridworld { n } => n * n,
            EnvId::Catch { width, height } => 2 * width * height,
        }
    }

    pub fn episode_cap(&self) -> usize {
        match *self {
            EnvId::Gridworld { n } => 4 * n * n,
            EnvId::Catch { height, .. } => height,
        }
    }

    pub fn make(&self, env_seed: u64) -> Result<Box<dyn Environment>> {
        self.validate()?;
        Ok(match *self {
            EnvId::Gridworld { n } => Box::new(Gridworld::new(n)?),
            EnvId::Catch { width, height } => Box::new(Catch::new(width, height, env_seed)?),
        })
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvId::Gridworld { n } => write!(f, "gridworld-{n}"),
            EnvId::Catch { width, height } => write!(f, "catch-{width}x{height}"),
        }
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown environment id `{s}`"));
        let id = if let Some(n) = s.strip_prefix("gridworld-") {
            EnvId::Gridworld {
                n: n.parse().map_err(|_| unknown())?,
            }
        } else if let Some(dims) = s.strip_prefix("catch-") {
            let (w, h) = dims.split_once('x').ok_or_else(unknown)?;
            EnvId::Catch {
                width: w.parse().map_err(|_| unknown())?,
                height: h.parse().map_err(|_| unknown())?,
            }
        } else {
            return Err(unknown());
        };
        id.validate()?;
        Ok(id)
    }
}

/// Builds the environment named by `id`.
pub fn make_env(id: &str, env_seed: u64) -> Result<Box<dyn Environment>> {
    id.parse::<EnvId>()?.make(env_seed)
}

/// Step counting and done/auto-reset bookkeeping shared by the tasks.
#[derive(Debug, Clone)]
struct EpisodeClock {
    cap: usize,
    steps: usize,
    started: bool,
    done: bool,
    auto_reset: bool,
}

impl EpisodeClock {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            steps: 0,
            started: false,
            done: false,
            auto_reset: false,
        }
    }

    fn restart(&mut self) {
        self.steps = 0;
        self.started = true;
        self.done = false;
    }

    /// Returns true when the caller must reset before stepping.
    fn needs_reset(&self) -> Result<bool> {
        if self.started && !self.done {
            return Ok(false);
        }
        if self.auto_reset {
            return Ok(true);
        }
        Err(Error::Usage(if self.started {
            "step called after episode end without reset".into()
        } else {
            "step called before reset".into()
        }))
    }

    /// Advances the counter; returns `(done, truncated)`.
    fn tick(&mut self, terminal: bool) -> (bool, bool) {
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.cap;
        self.done = terminal || truncated;
        (self.done, truncated)
    }
}

fn check_action(space: &ActionSpace, action: usize) -> Result<()> {
    if action >= space.size() {
        return Err(Error::Usage(format!(
            "action {action} out of range for {} actions",
            space.size()
        )));
    }
    Ok(())
}

fn step_info(steps: usize, truncated: bool) -> BTreeMap<String, String> {
    let mut info = BTreeMap::new();
    info.insert("step".to_string(), steps.to_string());
    if truncated {
        info.insert("truncated".to_string(), "true".to_string());
    }
    info
}

#[derive(Debug, Clone)]
pub struct Gridworld {
    id: String,
    n: usize,
    space: ActionSpace,
    row: usize,
    col: usize,
    clock: EpisodeClock,
}

impl Gridworld {
    pub const UP: usize = 0;
    pub const DOWN: usize = 1;
    pub const LEFT: usize = 2;
    pub const RIGHT: usize = 3;

    pub fn new(n: usize) -> Result<Self> {
        let id = EnvId::Gridworld { n };
        id.validate()?;
        Ok(Self {
            id: id.to_string(),
            n,
            space: id.action_space(),
            row: 0,
            col: 0,
            clock: EpisodeClock::new(id.episode_cap()),
        })
    }

    pub fn position(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    /// Places the agent in a running episode. Test and debugging helper.
    pub fn set_position(&mut self, row: usize, col: usize) {
        assert!(row < self.n && col < self.n, "position off grid");
        if !self.clock.started || self.clock.done {
            self.clock.restart();
        }
        self.row = row;
        self.col = col;
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.n * self.n];
        obs[self.row * self.n + self.col] = 1.0;
        obs
    }
}

impl Environment for Gridworld {
    fn id(&self) -> &str {
        &self.id
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn observation_width(&self) -> usize {
        self.n * self.n
    }

    fn episode_cap(&self) -> usize {
        self.clock.cap
    }

    fn set_auto_reset(&mut self, enabled: bool) {
        self.clock.auto_reset = enabled;
    }

    fn reset(&mut self) -> Vec<f64> {
        self.row = 0;
        self.col = 0;
        self.clock.restart();
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_action(&self.space, action)?;
        if self.clock.needs_reset()? {
            self.reset();
        }
        let last = self.n - 1;
        match action {
            Self::UP => self.row = self.row.saturating_sub(1),
            Self::DOWN => self.row = (self.row + 1).min(last),
            Self::LEFT => self.col = self.col.saturating_sub(1),
            _ => self.col = (self.col + 1).min(last),
        }
        let at_goal = self.row == last && self.col == last;
        let reward = if at_goal {
            GRID_GOAL_REWARD
        } else {
            GRID_STEP_REWARD
        };
        let (done, truncated) = self.clock.tick(at_goal);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done,
            info: step_info(self.clock.steps, truncated),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Catch {
    id: String,
    width: usize,
    height: usize,
    space: ActionSpace,
    rng: Rng,
    ball_row: usize,
    ball_col: usize,
    paddle_col: usize,
    clock: EpisodeClock,
}

impl Catch {
    pub const LEFT: usize = 0;
    pub const STAY: usize = 1;
    pub const RIGHT: usize = 2;

    pub fn new(width: usize, height: usize, env_seed: u64) -> Result<Self> {
        let id = EnvId::Catch { width, height };
        id.validate()?;
        Ok(Self {
            id: id.to_string(),
            width,
            height,
            space: id.action_space(),
            rng: Rng::from_seed(env_seed),
            ball_row: 0,
            ball_col: width / 2,
            paddle_col: width / 2,
            clock: EpisodeClock::new(id.episode_cap()),
        })
    }

    pub fn ball(&self) -> (usize, usize) {
        (self.ball_row, self.ball_col)
    }

    pub fn paddle_col(&self) -> usize {
        self.paddle_col
    }

    fn observation(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut obs = vec![0.0; 2 * plane];
        obs[self.ball_row * self.width + self.ball_col] = 1.0;
        obs[plane + (self.height - 1) * self.width + self.paddle_col] = 1.0;
        obs
    }
}

impl Environment for Catch {
    fn id(&self) -> &str {
        &self.id
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn observation_width(&self) -> usize {
        2 * self.width * self.height
    }

    fn episode_cap(&self) -> usize {
        self.clock.cap
    }

    fn set_auto_reset(&mut self, enabled: bool) {
        self.clock.auto_reset = enabled;
    }

    fn reset(&mut self) -> Vec<f64> {
        self.ball_row = 0;
        self.ball_col = self.rng.below(self.width);
        self.paddle_col = self.width / 2;
        self.clock.restart();
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_action(&self.space, action)?;
        if self.clock.needs_reset()? {
            self.reset();
        }
        match action {
            Self::LEFT => self.paddle_col = self.paddle_col.saturating_sub(1),
            Self::RIGHT => self.paddle_col = (self.paddle_col + 1).min(self.width - 1),
            _ => {}
        }
        self.ball_row += 1;
        let landed = self.ball_row == self.height - 1;
        let reward = match (landed, self.paddle_col == self.ball_col) {
            (false, _) => 0.0,
            (true, true) => 1.0,
            (true, false) => -1.0,
        };
        let (done, truncated) = self.clock.tick(landed);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done,
            info: step_info(self.clock.steps, truncated),
        })
    }
}
