//! Scenario specifications: the declarative description of one episode world.
//!
//! A scenario fixes the grid, obstacles, tasks, entities and time limit for
//! an episode. Specs are immutable values: generated from parameters plus a
//! seed (deterministically), perturbed one aspect at a time for robustness
//! sweeps, and stored as versioned JSON documents.
//!
//! # File format
//!
//! ```json
//! {
//!   "version": 1,
//!   "grid": { "height": 16, "width": 16 },
//!   "time_limit": 12,
//!   "obstacles": [[0, 3], [7, 11]],
//!   "tasks": [ { "location": [2, 5], "task_type": "aerial", "duration": 1 } ],
//!   "entities": [ { "class": "uav", "start": [4, 4], "move_radius": 8.0,
//!                   "power_consumption": 0.3 } ],
//!   "seed": 7
//! }
//! ```
//!
//! Coordinates are `[row, col]` pairs, row-major, origin top-left. Durations
//! are integer sensing periods; radii and power are decimals.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("placement infeasible: {0}")]
    PlacementInfeasible(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("unknown variation kind `{0}`")]
    UnknownVariation(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

fn parse_err(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        path: path.into(),
        message: message.into(),
    }
}

/// A grid cell, serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn distance(&self, other: Cell) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

impl From<(usize, usize)> for Cell {
    fn from((row, col): (usize, usize)) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for (usize, usize) {
    fn from(c: Cell) -> Self {
        (c.row, c.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub height: usize,
    pub width: usize,
}

impl GridDims {
    pub fn cell_count(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }
}

/// Sensing-task categories; each is served by exactly one entity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    /// High-altitude sensing, performed by UAVs.
    Aerial,
    /// Fast ground sensing, performed by UGVs.
    Ground,
    /// Detailed sensing, performed by human workers.
    Detailed,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [TaskType::Aerial, TaskType::Ground, TaskType::Detailed];

    pub fn required_class(&self) -> EntityClass {
        match self {
            TaskType::Aerial => EntityClass::Uav,
            TaskType::Ground => EntityClass::Ugv,
            TaskType::Detailed => EntityClass::Worker,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Worker,
    Uav,
    Ugv,
}

impl EntityClass {
    pub const ALL: [EntityClass; 3] = [EntityClass::Worker, EntityClass::Uav, EntityClass::Ugv];

    pub fn serves(&self) -> TaskType {
        match self {
            EntityClass::Worker => TaskType::Detailed,
            EntityClass::Uav => TaskType::Aerial,
            EntityClass::Ugv => TaskType::Ground,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntityClass::Worker => "worker",
            EntityClass::Uav => "uav",
            EntityClass::Ugv => "ugv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub location: Cell,
    pub task_type: TaskType,
    /// Required execution duration in sensing periods, >= 1.
    pub duration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub class: EntityClass,
    pub start: Cell,
    /// Reachable radius in cells per sensing period.
    pub move_radius: f64,
    /// Power drawn per period of movement; UAVs only, in (0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_consumption: Option<f64>,
    /// Radius within which UAV power levels are visible; UGVs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub version: u32,
    pub grid: GridDims,
    /// Number of sensing periods in an episode.
    pub time_limit: u32,
    pub obstacles: BTreeSet<Cell>,
    pub tasks: Vec<TaskSpec>,
    pub entities: Vec<EntitySpec>,
    /// Seed the spec was generated from (provenance only).
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_count_of(&self, class: EntityClass) -> usize {
        self.entities.iter().filter(|e| e.class == class).count()
    }

    pub fn task_count_of(&self, ty: TaskType) -> usize {
        self.tasks.iter().filter(|t| t.task_type == ty).count()
    }

    /// True if some task type has no entity of the matching class.
    pub fn has_unreachable_tasks(&self) -> bool {
        TaskType::ALL.iter().any(|ty| {
            self.task_count_of(*ty) > 0 && self.entity_count_of(ty.required_class()) == 0
        })
    }

    /// Check every structural invariant. Used after generation and on load.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(parse_err(
                "version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        if self.grid.height == 0 || self.grid.width == 0 {
            return Err(parse_err("grid", "grid dimensions must be positive"));
        }
        if self.time_limit == 0 {
            return Err(parse_err("time_limit", "time limit must be at least 1"));
        }
        for (i, c) in self.obstacles.iter().enumerate() {
            if !self.grid.contains(*c) {
                return Err(parse_err(
                    format!("obstacles[{i}]"),
                    format!("cell {c} outside {}x{} grid", self.grid.height, self.grid.width),
                ));
            }
        }
        if self.tasks.is_empty() {
            return Err(parse_err("tasks", "a scenario needs at least one task"));
        }
        let mut seen = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let path = format!("tasks[{i}]");
            if !self.grid.contains(t.location) {
                return Err(parse_err(
                    format!("{path}.location"),
                    format!("cell {} outside grid", t.location),
                ));
            }
            if self.obstacles.contains(&t.location) {
                return Err(parse_err(
                    format!("{path}.location"),
                    format!("task at {} coincides with an obstacle cell", t.location),
                ));
            }
            if !seen.insert(t.location) {
                return Err(parse_err(
                    format!("{path}.location"),
                    format!("duplicate task location {}", t.location),
                ));
            }
            if t.duration == 0 {
                return Err(parse_err(
                    format!("{path}.duration"),
                    "duration must be at least one sensing period",
                ));
            }
        }
        for (i, e) in self.entities.iter().enumerate() {
            let path = format!("entities[{i}]");
            if !self.grid.contains(e.start) {
                return Err(parse_err(
                    format!("{path}.start"),
                    format!("cell {} outside grid", e.start),
                ));
            }
            if self.obstacles.contains(&e.start) {
                return Err(parse_err(
                    format!("{path}.start"),
                    format!("entity starts on obstacle cell {}", e.start),
                ));
            }
            if !(e.move_radius > 0.0) {
                return Err(parse_err(
                    format!("{path}.move_radius"),
                    "move radius must be positive",
                ));
            }
            match e.class {
                EntityClass::Uav => match e.power_consumption {
                    Some(c) if c > 0.0 && c <= 1.0 => {}
                    Some(c) => {
                        return Err(parse_err(
                            format!("{path}.power_consumption"),
                            format!("UAV power consumption {c} outside (0, 1]"),
                        ))
                    }
                    None => {
                        return Err(parse_err(
                            format!("{path}.power_consumption"),
                            "UAVs require a power consumption",
                        ))
                    }
                },
                _ => {
                    if e.power_consumption.unwrap_or(0.0) != 0.0 {
                        return Err(parse_err(
                            format!("{path}.power_consumption"),
                            "power fields must be absent or zero for non-UAV entities",
                        ));
                    }
                }
            }
            match e.class {
                EntityClass::Ugv => match e.detect_radius {
                    Some(d) if d > 0.0 => {}
                    _ => {
                        return Err(parse_err(
                            format!("{path}.detect_radius"),
                            "UGVs require a positive detection radius",
                        ))
                    }
                },
                _ => {
                    if e.detect_radius.unwrap_or(0.0) != 0.0 {
                        return Err(parse_err(
                            format!("{path}.detect_radius"),
                            "detection radius must be absent or zero for non-UGV entities",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Serialize a spec to its canonical JSON document.
pub fn save_scenario(spec: &ScenarioSpec) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(spec).expect("scenario serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

/// Parse and validate a scenario document.
pub fn load_scenario(bytes: &[u8]) -> Result<ScenarioSpec, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        parse_err(e.path().to_string(), e.inner().to_string())
    })?;
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Initial-position distributions for tasks and entities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistributionKind {
    /// All samples share one uniformly drawn free cell.
    SinglePoint,
    /// Distinct uniformly drawn free cells.
    UniformRandom,
    /// A mixture of Gaussian clusters snapped to the grid; stands in for an
    /// empirical check-in distribution.
    ClusteredCheckin { cluster_count: usize, spread: f64 },
}

impl DistributionKind {
    /// The default clustered shape: five hotspots, spread of an eighth of
    /// the longer grid side.
    pub fn checkin_default(grid: GridDims) -> Self {
        DistributionKind::ClusteredCheckin {
            cluster_count: 5,
            spread: grid.height.max(grid.width) as f64 / 8.0,
        }
    }
}

/// A fixed value or a closed interval sampled uniformly per entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttrSpec {
    Fixed(f64),
    Range(f64, f64),
}

impl AttrSpec {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            AttrSpec::Fixed(v) => v,
            AttrSpec::Range(lo, hi) => rng.random_range(lo..=hi),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            AttrSpec::Fixed(v) => (v, v),
            AttrSpec::Range(lo, hi) => (lo, hi),
        }
    }
}

/// Entity counts, either explicit per class or a total split 2:5:1
/// (UAV : worker : UGV).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntityCountSpec {
    Explicit { uav: usize, worker: usize, ugv: usize },
    Ratio { total: usize },
}

impl EntityCountSpec {
    pub fn counts(&self) -> Result<(usize, usize, usize), ScenarioError> {
        match *self {
            EntityCountSpec::Explicit { uav, worker, ugv } => Ok((uav, worker, ugv)),
            EntityCountSpec::Ratio { total } => {
                if total == 0 || total % 8 != 0 {
                    return Err(ScenarioError::InvalidParams(format!(
                        "ratio mode needs a positive total divisible by 8, got {total}"
                    )));
                }
                let unit = total / 8;
                Ok((2 * unit, 5 * unit, unit))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub grid: GridDims,
    pub time_limit: u32,
    /// Fraction of cells occupied by obstacles, in [0, 1].
    pub obstacle_density: f64,
    /// Task counts per type: (aerial, ground, detailed).
    pub task_counts: (usize, usize, usize),
    /// Multiset of execution durations as (duration, count) pairs; counts
    /// must sum to the total task count.
    pub duration_mix: Vec<(u32, usize)>,
    pub task_distribution: DistributionKind,
    pub entities: EntityCountSpec,
    pub entity_distribution: DistributionKind,
    /// Movement radii per class.
    pub uav_radius: AttrSpec,
    pub worker_radius: AttrSpec,
    pub ugv_radius: AttrSpec,
    /// UAV power consumption per step, in (0, 1].
    pub uav_consumption: AttrSpec,
    /// UGV power-detection radius.
    pub ugv_detect_radius: AttrSpec,
}

impl GenerationParams {
    pub fn total_tasks(&self) -> usize {
        self.task_counts.0 + self.task_counts.1 + self.task_counts.2
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::InvalidParams(m));
        if self.grid.height == 0 || self.grid.width == 0 {
            return fail("grid dimensions must be positive".into());
        }
        if self.time_limit == 0 {
            return fail("time limit must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.obstacle_density) {
            return fail(format!("obstacle density {} outside [0, 1]", self.obstacle_density));
        }
        if self.total_tasks() == 0 {
            return fail("at least one task is required".into());
        }
        let dur_total: usize = self.duration_mix.iter().map(|(_, n)| n).sum();
        if dur_total != self.total_tasks() {
            return fail(format!(
                "duration mix covers {dur_total} tasks but {} are requested",
                self.total_tasks()
            ));
        }
        if self.duration_mix.iter().any(|(d, _)| *d == 0) {
            return fail("durations must be at least 1".into());
        }
        let (u, w, g) = self.entities.counts()?;
        if u + w + g == 0 {
            return fail("at least one entity is required".into());
        }
        for (name, attr) in [
            ("uav_radius", self.uav_radius),
            ("worker_radius", self.worker_radius),
            ("ugv_radius", self.ugv_radius),
            ("ugv_detect_radius", self.ugv_detect_radius),
        ] {
            let (lo, hi) = attr.bounds();
            if !(lo > 0.0) || hi < lo {
                return fail(format!("{name} must be a positive value or ordered range"));
            }
        }
        let (lo, hi) = self.uav_consumption.bounds();
        if !(lo > 0.0) || hi > 1.0 || hi < lo {
            return fail("uav_consumption must lie in (0, 1]".into());
        }
        Ok(())
    }
}

fn sample_distinct_cells(
    rng: &mut ChaCha8Rng,
    pool: &[Cell],
    count: usize,
    what: &str,
) -> Result<Vec<Cell>, ScenarioError> {
    if pool.len() < count {
        return Err(ScenarioError::PlacementInfeasible(format!(
            "{what}: need {count} cells but only {} are free",
            pool.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, pool.len(), count);
    Ok(picked.into_iter().map(|i| pool[i]).collect())
}

fn sample_clustered_cells(
    rng: &mut ChaCha8Rng,
    grid: GridDims,
    free: &BTreeSet<Cell>,
    count: usize,
    cluster_count: usize,
    spread: f64,
    what: &str,
) -> Result<Vec<Cell>, ScenarioError> {
    if cluster_count == 0 || !(spread > 0.0) {
        return Err(ScenarioError::InvalidParams(format!(
            "{what}: clustered distribution needs clusters > 0 and spread > 0"
        )));
    }
    let all: Vec<Cell> = (0..grid.cell_count()).map(|i| grid.cell_at(i)).collect();
    let centers = sample_distinct_cells(rng, &all, cluster_count.min(all.len()), what)?;
    let normal = Normal::new(0.0, spread).expect("spread checked positive");

    let mut used: BTreeSet<Cell> = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let max_attempts = 10_000usize.saturating_mul(count.max(1));
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(ScenarioError::PlacementInfeasible(format!(
                "{what}: could not place {count} clustered samples"
            )));
        }
        let center = centers[rng.random_range(0..centers.len())];
        let row = center.row as f64 + normal.sample(rng);
        let col = center.col as f64 + normal.sample(rng);
        if row < -0.5 || col < -0.5 {
            continue;
        }
        let cell = Cell::new(row.round() as usize, col.round() as usize);
        if grid.contains(cell) && free.contains(&cell) && !used.contains(&cell) {
            used.insert(cell);
            out.push(cell);
        }
    }
    Ok(out)
}

/// Deterministically generate a scenario from parameters and a seed.
///
/// Placement order is obstacles first, then tasks on remaining free cells,
/// then entities; tasks therefore never overlap obstacles by construction.
pub fn generate_scenario(params: &GenerationParams, seed: u64) -> Result<ScenarioSpec, ScenarioError> {
    params.validate()?;
    let grid = params.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Obstacles.
    let obstacle_count = (params.obstacle_density * grid.cell_count() as f64).round() as usize;
    let all: Vec<Cell> = (0..grid.cell_count()).map(|i| grid.cell_at(i)).collect();
    let obstacles: BTreeSet<Cell> = sample_distinct_cells(&mut rng, &all, obstacle_count, "obstacles")?
        .into_iter()
        .collect();

    // Task locations on free cells.
    let free: BTreeSet<Cell> = all.iter().copied().filter(|c| !obstacles.contains(c)).collect();
    let free_list: Vec<Cell> = free.iter().copied().collect();
    let n_tasks = params.total_tasks();
    let task_cells = match params.task_distribution {
        DistributionKind::SinglePoint => {
            return Err(ScenarioError::InvalidParams(
                "tasks cannot share a single cell".into(),
            ))
        }
        DistributionKind::UniformRandom => {
            sample_distinct_cells(&mut rng, &free_list, n_tasks, "tasks")?
        }
        DistributionKind::ClusteredCheckin { cluster_count, spread } => sample_clustered_cells(
            &mut rng,
            grid,
            &free,
            n_tasks,
            cluster_count,
            spread,
            "tasks",
        )?,
    };

    // Types and durations, shuffled over the placed cells.
    let (n_aerial, n_ground, n_detailed) = params.task_counts;
    let mut types = Vec::with_capacity(n_tasks);
    types.extend(std::iter::repeat(TaskType::Aerial).take(n_aerial));
    types.extend(std::iter::repeat(TaskType::Ground).take(n_ground));
    types.extend(std::iter::repeat(TaskType::Detailed).take(n_detailed));
    types.shuffle(&mut rng);
    let mut durations = Vec::with_capacity(n_tasks);
    for &(d, n) in &params.duration_mix {
        durations.extend(std::iter::repeat(d).take(n));
    }
    durations.shuffle(&mut rng);

    let tasks: Vec<TaskSpec> = task_cells
        .into_iter()
        .zip(types)
        .zip(durations)
        .map(|((location, task_type), duration)| TaskSpec {
            location,
            task_type,
            duration,
        })
        .collect();

    // Entity starts (entities may stand on task cells, never on obstacles).
    let (n_uav, n_worker, n_ugv) = params.entities.counts()?;
    let n_entities = n_uav + n_worker + n_ugv;
    let starts = match params.entity_distribution {
        DistributionKind::SinglePoint => {
            let shared = sample_distinct_cells(&mut rng, &free_list, 1, "entities")?[0];
            vec![shared; n_entities]
        }
        DistributionKind::UniformRandom => {
            sample_distinct_cells(&mut rng, &free_list, n_entities, "entities")?
        }
        DistributionKind::ClusteredCheckin { cluster_count, spread } => sample_clustered_cells(
            &mut rng,
            grid,
            &free,
            n_entities,
            cluster_count,
            spread,
            "entities",
        )?,
    };

    // Attributes sampled per entity in listing order: UAVs, workers, UGVs.
    let mut entities = Vec::with_capacity(n_entities);
    let mut start_iter = starts.into_iter();
    for _ in 0..n_uav {
        entities.push(EntitySpec {
            class: EntityClass::Uav,
            start: start_iter.next().unwrap(),
            move_radius: params.uav_radius.sample(&mut rng),
            power_consumption: Some(params.uav_consumption.sample(&mut rng)),
            detect_radius: None,
        });
    }
    for _ in 0..n_worker {
        entities.push(EntitySpec {
            class: EntityClass::Worker,
            start: start_iter.next().unwrap(),
            move_radius: params.worker_radius.sample(&mut rng),
            power_consumption: None,
            detect_radius: None,
        });
    }
    for _ in 0..n_ugv {
        entities.push(EntitySpec {
            class: EntityClass::Ugv,
            start: start_iter.next().unwrap(),
            move_radius: params.ugv_radius.sample(&mut rng),
            power_consumption: None,
            detect_radius: Some(params.ugv_detect_radius.sample(&mut rng)),
        });
    }

    let spec = ScenarioSpec {
        version: SCHEMA_VERSION,
        grid,
        time_limit: params.time_limit,
        obstacles,
        tasks,
        entities,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Perturbation
// ---------------------------------------------------------------------------

/// The controlled variations used by robustness sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariationKind {
    TaskExecutionTime,
    TaskType,
    ObstaclePosition,
    EntityPosition,
}

impl VariationKind {
    pub const ALL: [VariationKind; 4] = [
        VariationKind::TaskExecutionTime,
        VariationKind::TaskType,
        VariationKind::ObstaclePosition,
        VariationKind::EntityPosition,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            VariationKind::TaskExecutionTime => "task-execution-time",
            VariationKind::TaskType => "task-type",
            VariationKind::ObstaclePosition => "obstacle-position",
            VariationKind::EntityPosition => "entity-position",
        }
    }
}

impl FromStr for VariationKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariationKind::ALL
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| ScenarioError::UnknownVariation(s.to_string()))
    }
}

/// Resample exactly one aspect of `base`; every other field is copied
/// verbatim. Duration and type changes permute the base multiset, so the
/// declared mix is preserved.
pub fn perturb_scenario(
    base: &ScenarioSpec,
    field: VariationKind,
    seed: u64,
) -> Result<ScenarioSpec, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = base.clone();
    match field {
        VariationKind::TaskExecutionTime => {
            let mut durations: Vec<u32> = base.tasks.iter().map(|t| t.duration).collect();
            durations.shuffle(&mut rng);
            for (t, d) in spec.tasks.iter_mut().zip(durations) {
                t.duration = d;
            }
        }
        VariationKind::TaskType => {
            let mut types: Vec<TaskType> = base.tasks.iter().map(|t| t.task_type).collect();
            types.shuffle(&mut rng);
            for (t, ty) in spec.tasks.iter_mut().zip(types) {
                t.task_type = ty;
            }
        }
        VariationKind::ObstaclePosition => {
            let blocked: BTreeSet<Cell> = base
                .tasks
                .iter()
                .map(|t| t.location)
                .chain(base.entities.iter().map(|e| e.start))
                .collect();
            let pool: Vec<Cell> = (0..base.grid.cell_count())
                .map(|i| base.grid.cell_at(i))
                .filter(|c| !blocked.contains(c))
                .collect();
            spec.obstacles =
                sample_distinct_cells(&mut rng, &pool, base.obstacles.len(), "obstacles")?
                    .into_iter()
                    .collect();
        }
        VariationKind::EntityPosition => {
            let pool: Vec<Cell> = (0..base.grid.cell_count())
                .map(|i| base.grid.cell_at(i))
                .filter(|c| !base.obstacles.contains(c))
                .collect();
            let starts =
                sample_distinct_cells(&mut rng, &pool, base.entities.len(), "entities")?;
            for (e, s) in spec.entities.iter_mut().zip(starts) {
                e.start = s;
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// The bundled 20x20 case-study scenario.
pub const ZHONGFU_SCN: &str = include_str!("../assets/zhongfu.scn");

pub fn zhongfu_scenario() -> ScenarioSpec {
    load_scenario(ZHONGFU_SCN.as_bytes()).expect("bundled scenario is valid")
}

pub const PRESET_NAMES: [&str; 11] = [
    "sce1", "sce2", "sce3", "sce4", "sce5", "sce6", "sce7", "sce8", "sce9", "sce10", "zhongfu",
];

fn grid16() -> GridDims {
    GridDims {
        height: 16,
        width: 16,
    }
}

fn base_params() -> GenerationParams {
    let grid = grid16();
    GenerationParams {
        grid,
        time_limit: 12,
        obstacle_density: 20.0 / 256.0,
        task_counts: (30, 15, 75),
        duration_mix: vec![(1, 96), (2, 24)],
        task_distribution: DistributionKind::UniformRandom,
        entities: EntityCountSpec::Explicit {
            uav: 6,
            worker: 15,
            ugv: 3,
        },
        entity_distribution: DistributionKind::UniformRandom,
        uav_radius: AttrSpec::Range(7.0, 9.0),
        worker_radius: AttrSpec::Range(2.0, 4.0),
        ugv_radius: AttrSpec::Range(4.0, 6.0),
        uav_consumption: AttrSpec::Range(0.2, 0.4),
        ugv_detect_radius: AttrSpec::Fixed(10.0),
    }
}

/// Generation parameters behind `--preset sce1..sce10`. Presets with several
/// published variants return one labelled parameter set per variant.
pub fn preset_params(name: &str) -> Result<Vec<(String, GenerationParams)>, ScenarioError> {
    let single = |p: GenerationParams| vec![(name.to_string(), p)];
    let variants = |ps: Vec<GenerationParams>| {
        ps.into_iter()
            .enumerate()
            .map(|(i, p)| (format!("{name}-{}", i + 1), p))
            .collect::<Vec<_>>()
    };
    match name {
        "sce1" => {
            let mut p = base_params();
            p.entity_distribution = DistributionKind::SinglePoint;
            p.uav_radius = AttrSpec::Fixed(8.0);
            p.worker_radius = AttrSpec::Fixed(3.0);
            p.ugv_radius = AttrSpec::Fixed(5.0);
            p.uav_consumption = AttrSpec::Fixed(0.3);
            Ok(single(p))
        }
        "sce2" => Ok(single(base_params())),
        "sce3" => {
            let mut p = base_params();
            p.entity_distribution = DistributionKind::checkin_default(p.grid);
            Ok(single(p))
        }
        "sce4" => {
            let mut p = base_params();
            p.entity_distribution = DistributionKind::checkin_default(p.grid);
            p.task_distribution = DistributionKind::checkin_default(p.grid);
            Ok(single(p))
        }
        "sce5" => Ok(variants(
            [(4, 10, 2), (6, 15, 3), (8, 20, 4)]
                .into_iter()
                .map(|(uav, worker, ugv)| {
                    let mut p = base_params();
                    p.entities = EntityCountSpec::Explicit { uav, worker, ugv };
                    p
                })
                .collect(),
        )),
        "sce6" => Ok(variants(
            [12usize, 16, 20]
                .into_iter()
                .map(|side| {
                    let mut p = base_params();
                    p.grid = GridDims {
                        height: side,
                        width: side,
                    };
                    p.obstacle_density = 20.0 / p.grid.cell_count() as f64;
                    p
                })
                .collect(),
        )),
        "sce7" => Ok(variants(
            [(24, 12, 60, 96usize), (30, 15, 75, 120), (36, 18, 90, 144)]
                .into_iter()
                .map(|(a, g, d, total)| {
                    let mut p = base_params();
                    p.task_counts = (a, g, d);
                    let twos = total / 5;
                    p.duration_mix = vec![(1, total - twos), (2, twos)];
                    p
                })
                .collect(),
        )),
        "sce8" => Ok(variants(
            [
                vec![(1, 72), (2, 48)],
                vec![(1, 96), (2, 24)],
                vec![(1, 72), (2, 36), (3, 12)],
            ]
            .into_iter()
            .map(|mix| {
                let mut p = base_params();
                p.duration_mix = mix;
                p
            })
            .collect(),
        )),
        "sce9" => Ok(variants(
            [(40, 40, 40), (30, 15, 75)]
                .into_iter()
                .map(|(a, g, d)| {
                    let mut p = base_params();
                    p.task_counts = (a, g, d);
                    p
                })
                .collect(),
        )),
        "sce10" => Ok(variants(
            [20usize, 40, 60]
                .into_iter()
                .map(|n| {
                    let mut p = base_params();
                    p.obstacle_density = n as f64 / 256.0;
                    p
                })
                .collect(),
        )),
        other => Err(ScenarioError::UnknownPreset(other.to_string())),
    }
}

/// Parameters the bundled case-study file was generated from.
pub fn zhongfu_params() -> GenerationParams {
    let grid = GridDims {
        height: 20,
        width: 20,
    };
    GenerationParams {
        grid,
        time_limit: 12,
        obstacle_density: 60.0 / 400.0,
        task_counts: (19, 11, 24),
        duration_mix: vec![(1, 45), (2, 9)],
        task_distribution: DistributionKind::checkin_default(grid),
        entities: EntityCountSpec::Explicit {
            uav: 2,
            worker: 2,
            ugv: 2,
        },
        entity_distribution: DistributionKind::UniformRandom,
        uav_radius: AttrSpec::Fixed(10.0),
        worker_radius: AttrSpec::Fixed(3.0),
        ugv_radius: AttrSpec::Fixed(7.0),
        uav_consumption: AttrSpec::Fixed(0.2),
        ugv_detect_radius: AttrSpec::Fixed(10.0),
    }
}

pub const ZHONGFU_SEED: u64 = 20250417;

#[cfg(test)]
mod tests {
    use super::*;

    fn sce2_params() -> GenerationParams {
        base_params()
    }

    #[test]
    fn table_parameterization_yields_twenty_obstacles() {
        // 16x16, density 0.078, 120 tasks, 6/15/3 entities.
        let mut p = sce2_params();
        p.obstacle_density = 0.078;
        let spec = generate_scenario(&p, 7).unwrap();
        assert_eq!(spec.obstacles.len(), 20);
        assert_eq!(spec.task_count(), 120);
        assert_eq!(spec.entity_count_of(EntityClass::Uav), 6);
        assert_eq!(spec.entity_count_of(EntityClass::Worker), 15);
        assert_eq!(spec.entity_count_of(EntityClass::Ugv), 3);
        spec.validate().unwrap();
    }

    #[test]
    fn zero_density_means_no_obstacles() {
        let mut p = sce2_params();
        p.obstacle_density = 0.0;
        let spec = generate_scenario(&p, 3).unwrap();
        assert!(spec.obstacles.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let p = sce2_params();
        let a = generate_scenario(&p, 99).unwrap();
        let b = generate_scenario(&p, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(save_scenario(&a), save_scenario(&b));
        let c = generate_scenario(&p, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_when_density_leaves_no_room() {
        let mut p = sce2_params();
        p.obstacle_density = 0.9; // 230 obstacles, 26 free cells, 120 tasks
        match generate_scenario(&p, 1) {
            Err(ScenarioError::PlacementInfeasible(_)) => {}
            other => panic!("expected PlacementInfeasible, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_when_grid_too_small_for_entities() {
        let mut p = sce2_params();
        p.grid = GridDims { height: 4, width: 4 };
        p.obstacle_density = 0.0;
        p.task_counts = (1, 1, 1);
        p.duration_mix = vec![(1, 3)];
        p.entities = EntityCountSpec::Explicit { uav: 10, worker: 10, ugv: 10 };
        match generate_scenario(&p, 1) {
            Err(ScenarioError::PlacementInfeasible(_)) => {}
            other => panic!("expected PlacementInfeasible, got {other:?}"),
        }
    }

    #[test]
    fn ratio_mode_splits_two_five_one() {
        assert_eq!(EntityCountSpec::Ratio { total: 24 }.counts().unwrap(), (6, 15, 3));
        assert!(EntityCountSpec::Ratio { total: 10 }.counts().is_err());
    }

    #[test]
    fn round_trip_preserves_spec() {
        let spec = generate_scenario(&sce2_params(), 5).unwrap();
        let bytes = save_scenario(&spec);
        let loaded = load_scenario(&bytes).unwrap();
        assert_eq!(loaded, spec);
    }

    #[test]
    fn load_rejects_task_on_obstacle() {
        let mut spec = generate_scenario(&sce2_params(), 5).unwrap();
        let task_cell = spec.tasks[0].location;
        spec.obstacles.insert(task_cell);
        let bytes = save_scenario(&spec);
        match load_scenario(&bytes) {
            Err(ScenarioError::Parse { path, message }) => {
                assert!(path.contains("tasks[0]"), "path was {path}");
                assert!(message.contains("obstacle"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_reports_field_path_for_malformed_documents() {
        let doc = br#"{
            "version": 1,
            "grid": {"height": 4, "width": 4},
            "time_limit": 5,
            "obstacles": [],
            "tasks": [{"location": [1, 1], "task_type": "submarine", "duration": 1}],
            "entities": [],
            "seed": 0
        }"#;
        match load_scenario(doc) {
            Err(ScenarioError::Parse { path, .. }) => {
                assert!(path.contains("tasks[0]"), "path was {path}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn perturbations_touch_exactly_one_aspect() {
        let base = generate_scenario(&sce2_params(), 11).unwrap();

        let p = perturb_scenario(&base, VariationKind::ObstaclePosition, 1).unwrap();
        assert_eq!(p.obstacles.len(), base.obstacles.len());
        assert_ne!(p.obstacles, base.obstacles);
        assert_eq!(p.tasks, base.tasks);
        assert_eq!(p.entities, base.entities);
        assert_eq!(p.seed, base.seed);

        let p = perturb_scenario(&base, VariationKind::TaskExecutionTime, 1).unwrap();
        let base_durs = {
            let mut v: Vec<u32> = base.tasks.iter().map(|t| t.duration).collect();
            v.sort_unstable();
            v
        };
        let new_durs = {
            let mut v: Vec<u32> = p.tasks.iter().map(|t| t.duration).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(base_durs, new_durs, "duration multiset preserved");
        assert!(p
            .tasks
            .iter()
            .zip(&base.tasks)
            .all(|(a, b)| a.location == b.location && a.task_type == b.task_type));
        assert_eq!(p.obstacles, base.obstacles);
        assert_eq!(p.entities, base.entities);

        let p = perturb_scenario(&base, VariationKind::TaskType, 1).unwrap();
        assert!(p.tasks.iter().zip(&base.tasks).all(|(a, b)| {
            a.location == b.location && a.duration == b.duration
        }));

        let p = perturb_scenario(&base, VariationKind::EntityPosition, 1).unwrap();
        assert!(p
            .entities
            .iter()
            .zip(&base.entities)
            .all(|(a, b)| a.class == b.class && a.move_radius == b.move_radius));
        assert_eq!(p.tasks, base.tasks);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let base = generate_scenario(&sce2_params(), 11).unwrap();
        for kind in VariationKind::ALL {
            let a = perturb_scenario(&base, kind, 42).unwrap();
            let b = perturb_scenario(&base, kind, 42).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn variation_kind_parses_labels_only() {
        assert_eq!(
            "obstacle-position".parse::<VariationKind>().unwrap(),
            VariationKind::ObstaclePosition
        );
        assert!("weather".parse::<VariationKind>().is_err());
    }

    #[test]
    fn generated_specs_satisfy_invariants_over_many_seeds() {
        let p = sce2_params();
        for seed in 0..100 {
            let spec = generate_scenario(&p, seed).unwrap();
            spec.validate().unwrap();
            assert!(!spec.has_unreachable_tasks());
        }
    }

    #[test]
    fn obstacle_fraction_tracks_requested_density() {
        let mut p = sce2_params();
        let cells = p.grid.cell_count() as f64;
        for seed in 0..50u64 {
            // Sweep the paper's default range.
            let density = 0.075 + (seed as f64 / 49.0) * 0.15;
            p.obstacle_density = density;
            let spec = generate_scenario(&p, seed).unwrap();
            let actual = spec.obstacles.len() as f64 / cells;
            assert!(
                (actual - density).abs() <= 0.5 / cells + 1e-12,
                "density {density} produced fraction {actual}"
            );
        }
    }

    #[test]
    fn clustered_distribution_is_tighter_than_uniform() {
        // Mean pairwise distance under the check-in distribution should be
        // visibly below the uniform baseline. Few enough tasks that the
        // clusters do not saturate the free cells around their centers.
        let mut p = sce2_params();
        p.task_counts = (4, 4, 12);
        p.duration_mix = vec![(1, 20)];
        let spread_tasks = |spec: &ScenarioSpec| {
            let cells: Vec<Cell> = spec.tasks.iter().map(|t| t.location).collect();
            let mut total = 0.0;
            let mut n = 0usize;
            for i in 0..cells.len() {
                for j in (i + 1)..cells.len() {
                    total += cells[i].distance(cells[j]);
                    n += 1;
                }
            }
            total / n as f64
        };
        let uniform = spread_tasks(&generate_scenario(&p, 0).unwrap());
        p.task_distribution = DistributionKind::ClusteredCheckin {
            cluster_count: 2,
            spread: 1.0,
        };
        let clustered = spread_tasks(&generate_scenario(&p, 0).unwrap());
        assert!(clustered < uniform, "clustered {clustered} vs uniform {uniform}");
    }

    #[test]
    fn bundled_case_study_matches_published_statistics() {
        let spec = zhongfu_scenario();
        assert_eq!(spec.grid.cell_count(), 400);
        assert_eq!(spec.task_count(), 54);
        assert_eq!(spec.task_count_of(TaskType::Detailed), 24);
        assert_eq!(spec.task_count_of(TaskType::Ground), 11);
        assert_eq!(spec.task_count_of(TaskType::Aerial), 19);
        assert_eq!(spec.tasks.iter().filter(|t| t.duration == 1).count(), 45);
        assert_eq!(spec.tasks.iter().filter(|t| t.duration == 2).count(), 9);
        assert_eq!(spec.entity_count(), 6);
        for e in &spec.entities {
            match e.class {
                EntityClass::Worker => assert_eq!(e.move_radius, 3.0),
                EntityClass::Uav => {
                    assert_eq!(e.move_radius, 10.0);
                    assert_eq!(e.power_consumption, Some(0.2));
                }
                EntityClass::Ugv => {
                    assert_eq!(e.move_radius, 7.0);
                    assert_eq!(e.detect_radius, Some(10.0));
                }
            }
        }
        // The bundled bytes are exactly what the pinned seed regenerates.
        let regen = generate_scenario(&zhongfu_params(), ZHONGFU_SEED).unwrap();
        assert_eq!(spec, regen);
    }

    #[test]
    fn presets_cover_published_parameterizations() {
        for name in PRESET_NAMES.iter().filter(|n| **n != "zhongfu") {
            let params = preset_params(name).unwrap();
            assert!(!params.is_empty());
            for (label, p) in &params {
                p.validate().unwrap_or_else(|e| panic!("{label}: {e}"));
            }
        }
        assert_eq!(preset_params("sce5").unwrap().len(), 3);
        assert_eq!(preset_params("sce9").unwrap().len(), 2);
        assert!(preset_params("sce99").is_err());
    }
}
