//! Insertion search strategies and the batch trial harness.

mod bench;

pub use bench::{
    read_reports, replay_trial, run_benchmark, summarize, summary_csv, summary_table, write_reports, BenchmarkOptions,
    SummaryRow, TrialReport,
};

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ConnectorType, GraphError};
use crate::sim::{check_success, pose_errors, step_sim, Command, ContactReading, JointPhase, SimError, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "random")]
    RandomSearch,
    #[serde(rename = "grid")]
    GridSearch,
    #[serde(rename = "hybrid")]
    ForcePositionHybrid,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [Self::RandomSearch, Self::GridSearch, Self::ForcePositionHybrid];

    pub fn name(self) -> &'static str {
        match self {
            Self::RandomSearch => "random",
            Self::GridSearch => "grid",
            Self::ForcePositionHybrid => "hybrid",
        }
    }

    /// Stable index used when deriving trial seeds.
    pub fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| StrategyError::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Maximum simulator steps per trial.
    pub budget: usize,
    pub grid_side: f64,
    pub grid_resolution: f64,
    /// Radius of the random-search lateral perturbation disk.
    pub perturb_radius: f64,
    /// Lateral displacement per unit of lateral force, in millimeters.
    pub gain: f64,
    /// Points per axis of the sub-lattice tried inside each grid cell when
    /// the lattice point itself does not engage; 1 disables it.
    pub micro_divisions: usize,
    /// Consecutive low-progress presses that count as a stall.
    pub stall_steps: usize,
    /// Descent below which a press counts as no progress.
    pub stall_descent: f64,
    /// Force-guided corrections tried at one grid point.
    pub fine_steps: usize,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            budget: 2000,
            grid_side: 0.01,
            grid_resolution: 0.002,
            perturb_radius: 0.0005,
            gain: 0.8,
            micro_divisions: 3,
            stall_steps: 3,
            stall_descent: 1e-6,
            fine_steps: 12,
        }
    }

    pub fn check(&self) -> Result<(), StrategyError> {
        let bad = |m: &str| Err(StrategyError::InvalidConfig(m.to_owned()));
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        if !(self.grid_resolution > 0.0 && self.grid_side >= self.grid_resolution && self.grid_side.is_finite()) {
            return bad("need finite grid_side >= grid_resolution > 0");
        }
        if !(self.perturb_radius >= 0.0 && self.perturb_radius.is_finite()) {
            return bad("perturb_radius must be finite and non-negative");
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return bad("gain must be positive");
        }
        if self.micro_divisions == 0 {
            return bad("micro_divisions must be positive");
        }
        if self.stall_steps == 0 {
            return bad("stall_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// The strategy ran out of places to try.
    SearchExhausted,
    BudgetExhausted,
    /// The trial could not be set up.
    Error,
}

/// Final state of one strategy run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcome: Outcome,
    pub success: bool,
    pub steps_used: usize,
    pub rotation_error: f64,
    pub translation_error: f64,
}

/// `n` × `n` points at `spacing`, centered on the origin, rows along +x then
/// -x starting at the (-, -) corner.
fn lattice(n: usize, spacing: f64) -> Vec<[f64; 2]> {
    let coord = |i: usize| (i as f64 - 0.5 * (n - 1) as f64) * spacing;
    let mut points = Vec::with_capacity(n * n);
    for row in 0..n {
        for k in 0..n {
            let col = if row % 2 == 0 { k } else { n - 1 - k };
            points.push([coord(col), coord(row)]);
        }
    }
    points
}

/// Search lattice offsets from the nominal target in visiting order.
pub fn grid_points(cfg: &StrategyConfig) -> Vec<[f64; 2]> {
    let n = (cfg.grid_side / cfg.grid_resolution).round() as usize + 1;
    lattice(n, cfg.grid_resolution)
}

/// Offsets tried within one grid cell after its center fails, in visiting
/// order. They tile the cell so every point of it lies within half a
/// sub-lattice diagonal of one of them.
pub fn cell_points(cfg: &StrategyConfig) -> Vec<[f64; 2]> {
    let m = cfg.micro_divisions;
    let mut points = lattice(m, cfg.grid_resolution / m as f64);
    if m % 2 == 1 {
        points.remove(m * m / 2);
    }
    points
}

/// Budget ran out.
struct Halt;

struct Driver<'a> {
    world: &'a mut World,
    cfg: &'a StrategyConfig,
}

impl Driver<'_> {
    fn step(&mut self, command: Command) -> Result<ContactReading, Halt> {
        if self.world.steps >= self.cfg.budget {
            return Err(Halt);
        }
        Ok(step_sim(self.world, &command))
    }

    fn engaged(&self) -> bool {
        self.world.joint.phase != JointPhase::Free
    }

    fn press(&mut self) -> Result<ContactReading, Halt> {
        let s = self.world.caps.translation;
        self.step(Command::Press(s))
    }

    /// Presses until engaged or until descent stalls.
    fn descend(&mut self) -> Result<ContactReading, Halt> {
        let mut stalled = 0;
        loop {
            let z = self.world.tip().z;
            let reading = self.press()?;
            if self.engaged() {
                return Ok(reading);
            }
            if z - self.world.tip().z < self.cfg.stall_descent {
                stalled += 1;
                if stalled >= self.cfg.stall_steps {
                    return Ok(reading);
                }
            } else {
                stalled = 0;
            }
        }
    }

    /// Moves the tip laterally to `target` (hole frame), stopping early on
    /// engagement.
    fn move_to(&mut self, target: [f64; 2]) -> Result<(), Halt> {
        loop {
            let tip = self.world.tip();
            let delta = Vector3::new(target[0] - tip.x, target[1] - tip.y, 0.0);
            if delta.norm() <= 1e-9 || self.engaged() {
                return Ok(());
            }
            let cap = self.world.caps.translation;
            let delta = if delta.norm() > cap { delta * (cap / delta.norm()) } else { delta };
            self.step(Command::Translate(delta))?;
        }
    }

    /// Drives an engaged joint to completion: presses, and for screws turns
    /// a revolution whenever the press is blocked.
    fn finish(&mut self) -> Result<(), Halt> {
        let per_rev = (TAU / self.world.caps.rotation).ceil() as usize;
        while self.world.joint.phase != JointPhase::Fixed {
            let reading = self.press()?;
            if self.world.joint.phase == JointPhase::Fixed || reading.force.z <= 0.0 {
                continue;
            }
            if self.world.connector_type != ConnectorType::Screw {
                return Ok(());
            }
            for _ in 0..per_rev {
                let a = self.world.caps.rotation;
                self.step(Command::RotateAboutAxis(a))?;
                if self.world.joint.phase == JointPhase::Fixed {
                    break;
                }
            }
        }
        Ok(())
    }

    fn nominal(&self, offset: [f64; 2]) -> [f64; 2] {
        [self.world.nominal_tip.x + offset[0], self.world.nominal_tip.y + offset[1]]
    }
}

fn disk_sample(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..TAU);
    [r * a.cos(), r * a.sin()]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// Tries a lateral position: move, press, and finish if the joint engages.
/// Returns `Ok(Some(reading))` with the stall reading when still free.
fn attempt(d: &mut Driver, target: [f64; 2]) -> Result<Option<ContactReading>, Halt> {
    d.move_to(target)?;
    if !d.engaged() {
        let reading = d.descend()?;
        if !d.engaged() {
            return Ok(Some(reading));
        }
    }
    d.finish()?;
    Ok(None)
}

fn random_search(d: &mut Driver, rng: &mut ChaCha8Rng) -> Result<(), Halt> {
    d.descend()?;
    if d.engaged() {
        return d.finish();
    }
    let tip = d.world.tip();
    let stall = [tip.x, tip.y];
    loop {
        let target = add(stall, disk_sample(rng, d.cfg.perturb_radius));
        if attempt(d, target)?.is_none() {
            return Ok(());
        }
    }
}

/// Tries the cell sub-lattice around `center`. Returns false once engaged.
fn search_cell(d: &mut Driver, center: [f64; 2]) -> Result<bool, Halt> {
    for offset in cell_points(d.cfg) {
        if attempt(d, add(center, offset))?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn grid_search(d: &mut Driver) -> Result<(), Halt> {
    for point in grid_points(d.cfg) {
        let center = d.nominal(point);
        if attempt(d, center)?.is_none() || !search_cell(d, center)? {
            return Ok(());
        }
    }
    Ok(())
}

fn hybrid(d: &mut Driver) -> Result<(), Halt> {
    for point in grid_points(d.cfg) {
        let center = d.nominal(point);
        let Some(mut reading) = attempt(d, center)? else {
            return Ok(());
        };
        for _ in 0..d.cfg.fine_steps {
            let lateral = reading.lateral();
            if lateral == Vector3::zeros() {
                break;
            }
            let tip = d.world.tip();
            let shift = lateral * (d.cfg.gain * 1e-3);
            match attempt(d, [tip.x + shift.x, tip.y + shift.y])? {
                Some(r) => reading = r,
                None => return Ok(()),
            }
        }
    }
    for point in grid_points(d.cfg) {
        if !search_cell(d, d.nominal(point))? {
            return Ok(());
        }
    }
    Ok(())
}

/// Runs one strategy on `world` until success, exhaustion or budget.
pub fn run_strategy(world: &mut World, cfg: &StrategyConfig, seed: u64) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut driver = Driver { world, cfg };
    let halted = match cfg.kind {
        StrategyKind::RandomSearch => random_search(&mut driver, &mut rng),
        StrategyKind::GridSearch => grid_search(&mut driver),
        StrategyKind::ForcePositionHybrid => hybrid(&mut driver),
    }
    .is_err();
    let truth = world.truth_pose;
    let success = check_success(world, &truth);
    let (rotation_error, translation_error) = pose_errors(world, &truth);
    let outcome = if success {
        Outcome::Success
    } else if halted {
        Outcome::BudgetExhausted
    } else {
        Outcome::SearchExhausted
    };
    RunResult {
        outcome,
        success,
        steps_used: world.steps,
        rotation_error,
        translation_error,
    }
}

/// Descends until stall, then alternates uniform lateral perturbations
/// around the stall point with presses.
pub fn run_random_search(world: &mut World, cfg: &StrategyConfig, seed: u64) -> RunResult {
    run_strategy(world, &StrategyConfig { kind: StrategyKind::RandomSearch, ..*cfg }, seed)
}

/// Visits the lattice in boustrophedon order, pressing at each point and
/// then across its cell.
pub fn run_grid_search(world: &mut World, cfg: &StrategyConfig) -> RunResult {
    run_strategy(world, &StrategyConfig { kind: StrategyKind::GridSearch, ..*cfg }, 0)
}

/// Grid coarse phase; a lateral contact force switches to force-guided
/// corrections of `gain` millimeters per unit force. The cell sub-lattices
/// follow if the lattice pass fails.
pub fn run_hybrid(world: &mut World, cfg: &StrategyConfig) -> RunResult {
    run_strategy(world, &StrategyConfig { kind: StrategyKind::ForcePositionHybrid, ..*cfg }, 0)
}
