//! Episode simulation: movement feasibility, the hard-cooperative battery
//! protocol, task progress, rewards, and the task-completion-rate objective.
//!
//! Transitions are fully deterministic given the joint action, so replaying
//! a recorded action sequence reproduces the exact trajectory.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::scenario::{Cell, EntityClass, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("unknown entity id {0}")]
    UnknownEntity(usize),
    #[error("malformed joint action: {0}")]
    MalformedJointAction(String),
    #[error("episode already finished")]
    EpisodeOver,
    #[error("invalid scenario: {0}")]
    InvalidScenario(#[from] crate::scenario::ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityState {
    pub pos: Cell,
    /// Battery level in [0, 1]; meaningful for UAVs, fixed 1.0 otherwise.
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskState {
    /// Sensing periods still required; 0 means complete.
    pub remaining: u32,
    /// Entity currently working the task, if any.
    pub owner: Option<usize>,
}

/// Result of executing one joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub completed_this_step: usize,
    pub invalid_action: bool,
    pub done: bool,
}

/// Mutable simulation state for one episode.
#[derive(Debug, Clone)]
pub struct World {
    spec: Arc<ScenarioSpec>,
    steps_done: u32,
    entities: Vec<EntityState>,
    tasks: Vec<TaskState>,
    completed: usize,
    /// When false (the voluntary variant) UGVs are never forced to rescue.
    hard_coop: bool,
    /// Task each entity decremented in the last step, for trajectory export.
    last_assignments: Vec<Option<usize>>,
}

pub const INVALID_ACTION_PENALTY: f64 = -10.0;

impl World {
    pub fn new(spec: Arc<ScenarioSpec>, hard_coop: bool) -> Result<Self, WorldError> {
        spec.validate()?;
        let entities = spec
            .entities
            .iter()
            .map(|e| EntityState {
                pos: e.start,
                power: 1.0,
            })
            .collect();
        let tasks = spec
            .tasks
            .iter()
            .map(|t| TaskState {
                remaining: t.duration,
                owner: None,
            })
            .collect();
        let n = spec.entities.len();
        Ok(World {
            spec,
            steps_done: 0,
            entities,
            tasks,
            completed: 0,
            hard_coop,
            last_assignments: vec![None; n],
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> Arc<ScenarioSpec> {
        Arc::clone(&self.spec)
    }

    /// Sensing periods executed so far.
    pub fn t(&self) -> u32 {
        self.steps_done
    }

    pub fn entity(&self, id: usize) -> Result<&EntityState, WorldError> {
        self.entities.get(id).ok_or(WorldError::UnknownEntity(id))
    }

    pub fn entities(&self) -> &[EntityState] {
        &self.entities
    }

    pub fn tasks(&self) -> &[TaskState] {
        &self.tasks
    }

    pub fn completed_count(&self) -> usize {
        self.completed
    }

    pub fn incomplete_count(&self) -> usize {
        self.spec.tasks.len() - self.completed
    }

    pub fn done(&self) -> bool {
        self.steps_done >= self.spec.time_limit || self.completed == self.spec.tasks.len()
    }

    pub fn last_assignments(&self) -> &[Option<usize>] {
        &self.last_assignments
    }

    /// A UAV too low on power to leave its cell.
    pub fn is_stranded(&self, id: usize) -> bool {
        let spec = &self.spec.entities[id];
        spec.class == EntityClass::Uav
            && self.entities[id].power < spec.power_consumption.unwrap_or(0.0)
    }

    /// All in-bounds, non-obstacle cells within the entity's move radius of
    /// its current position, in row-major order. A stranded UAV can only
    /// hold its cell.
    pub fn movable_range(&self, id: usize) -> Result<Vec<Cell>, WorldError> {
        let state = *self.entity(id)?;
        let espec = &self.spec.entities[id];
        if self.is_stranded(id) {
            return Ok(vec![state.pos]);
        }
        let radius = espec.move_radius;
        let r_cells = radius.floor() as isize;
        let grid = self.spec.grid;
        let mut out = Vec::new();
        for dr in -r_cells..=r_cells {
            let row = state.pos.row as isize + dr;
            if row < 0 || row >= grid.height as isize {
                continue;
            }
            for dc in -r_cells..=r_cells {
                let col = state.pos.col as isize + dc;
                if col < 0 || col >= grid.width as isize {
                    continue;
                }
                if ((dr * dr + dc * dc) as f64) > radius * radius {
                    continue;
                }
                let cell = Cell::new(row as usize, col as usize);
                if !self.spec.obstacles.contains(&cell) {
                    out.push(cell);
                }
            }
        }
        Ok(out)
    }

    /// Forced rescue moves: for every stranded UAV inside some UGV's
    /// detection radius, exactly one UGV (nearest, then lowest id) is sent to
    /// the UAV's cell next step.
    pub fn hard_coop_overrides(&self) -> BTreeMap<usize, Cell> {
        let mut out = BTreeMap::new();
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        for uav in 0..self.entities.len() {
            if !self.is_stranded(uav) {
                continue;
            }
            let uav_pos = self.entities[uav].pos;
            let rescuer = self
                .spec
                .entities
                .iter()
                .enumerate()
                .filter(|(g, e)| {
                    e.class == EntityClass::Ugv
                        && !taken.contains(g)
                        && self.entities[*g].pos.distance(uav_pos)
                            <= e.detect_radius.unwrap_or(0.0)
                })
                .min_by(|(ga, _), (gb, _)| {
                    let da = self.entities[*ga].pos.distance(uav_pos);
                    let db = self.entities[*gb].pos.distance(uav_pos);
                    da.total_cmp(&db).then(ga.cmp(gb))
                })
                .map(|(g, _)| g);
            if let Some(g) = rescuer {
                taken.insert(g);
                out.insert(g, uav_pos);
            }
        }
        out
    }

    /// Execute one joint action (one target cell per entity) and advance the
    /// world by a sensing period.
    ///
    /// Order of effects: forced rescues replace UGV targets; out-of-range
    /// targets keep the mover in place and mark the step invalid; positions
    /// update; UAV power updates (1.0 when ending colocated with a UGV,
    /// minus consumption when it could move, unchanged when stranded);
    /// task progress; reward.
    pub fn step(&mut self, actions: &[Cell]) -> Result<StepOutcome, WorldError> {
        if self.done() {
            return Err(WorldError::EpisodeOver);
        }
        let n = self.entities.len();
        if actions.len() != n {
            return Err(WorldError::MalformedJointAction(format!(
                "expected {n} targets, got {}",
                actions.len()
            )));
        }
        for (k, a) in actions.iter().enumerate() {
            if !self.spec.grid.contains(*a) {
                return Err(WorldError::MalformedJointAction(format!(
                    "entity {k} targets {a}, outside the grid"
                )));
            }
        }

        // (a) Forced rescue moves take precedence over UGV policy actions.
        let overrides = if self.hard_coop {
            self.hard_coop_overrides()
        } else {
            BTreeMap::new()
        };
        let mut forced = vec![false; n];
        let mut targets: Vec<Cell> = actions.to_vec();
        for (&g, &cell) in &overrides {
            targets[g] = cell;
            forced[g] = true;
        }

        // (b) Range check. Forced rescue moves are part of the dynamics and
        // exempt (a UGV's detection radius may exceed its move radius).
        let mut invalid_action = false;
        let mut new_pos: Vec<Cell> = Vec::with_capacity(n);
        for k in 0..n {
            if forced[k] {
                new_pos.push(targets[k]);
                continue;
            }
            let range = self.movable_range(k)?;
            if range.contains(&targets[k]) {
                new_pos.push(targets[k]);
            } else {
                invalid_action = true;
                new_pos.push(self.entities[k].pos);
            }
        }

        // (c) Positions update.
        for (k, pos) in new_pos.iter().enumerate() {
            self.entities[k].pos = *pos;
        }

        // (d) UAV power.
        let ugv_cells: BTreeSet<Cell> = self
            .spec
            .entities
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class == EntityClass::Ugv)
            .map(|(g, _)| self.entities[g].pos)
            .collect();
        for k in 0..n {
            if self.spec.entities[k].class != EntityClass::Uav {
                continue;
            }
            let consumption = self.spec.entities[k].power_consumption.unwrap_or(0.0);
            let state = &mut self.entities[k];
            if ugv_cells.contains(&state.pos) {
                state.power = 1.0;
            } else if state.power >= consumption {
                state.power -= consumption;
            }
            debug_assert!((0.0..=1.0).contains(&state.power));
        }

        // (e) Task progress. At most one matching-class entity (lowest id)
        // decrements a task; a rescuing UGV forfeits sensing this period;
        // interrupting a partial execution resets it to full duration.
        let mut completed_this_step = 0usize;
        let mut busy = vec![false; n];
        let mut assignments = vec![None; n];
        for ti in 0..self.tasks.len() {
            if self.tasks[ti].remaining == 0 {
                continue;
            }
            let tspec = &self.spec.tasks[ti];
            let class = tspec.task_type.required_class();
            let worker = (0..n).find(|&k| {
                self.spec.entities[k].class == class
                    && self.entities[k].pos == tspec.location
                    && !forced[k]
                    && !busy[k]
            });
            let task = &mut self.tasks[ti];
            match worker {
                Some(k) => {
                    if task.owner != Some(k) && task.remaining < tspec.duration {
                        task.remaining = tspec.duration;
                    }
                    task.remaining -= 1;
                    busy[k] = true;
                    assignments[k] = Some(ti);
                    if task.remaining == 0 {
                        task.owner = None;
                        self.completed += 1;
                        completed_this_step += 1;
                    } else {
                        task.owner = Some(k);
                    }
                }
                None => {
                    if task.remaining < tspec.duration {
                        task.remaining = tspec.duration;
                    }
                    task.owner = None;
                }
            }
        }
        self.last_assignments = assignments;

        // (f) Reward, (g) termination.
        self.steps_done += 1;
        let reward = if invalid_action {
            INVALID_ACTION_PENALTY
        } else {
            completed_this_step as f64
        };
        Ok(StepOutcome {
            reward,
            completed_this_step,
            invalid_action,
            done: self.done(),
        })
    }

    /// Fraction of the initial tasks completed so far.
    pub fn tcr(&self) -> f64 {
        self.completed as f64 / self.spec.tasks.len() as f64
    }

    /// Product over entities of |movable range| / |P|: the chance that a
    /// uniform unfiltered joint action stays in range. A reward-sparsity
    /// diagnostic.
    pub fn positive_reward_probability(&self) -> f64 {
        let cells = self.spec.grid.cell_count() as f64;
        (0..self.entities.len())
            .map(|k| self.movable_range(k).expect("entity ids are valid").len() as f64 / cells)
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{EntitySpec, GridDims, ScenarioSpec, TaskSpec, TaskType, SCHEMA_VERSION};

    pub(crate) fn worker(start: Cell, radius: f64) -> EntitySpec {
        EntitySpec {
            class: EntityClass::Worker,
            start,
            move_radius: radius,
            power_consumption: None,
            detect_radius: None,
        }
    }

    pub(crate) fn uav(start: Cell, radius: f64, consumption: f64) -> EntitySpec {
        EntitySpec {
            class: EntityClass::Uav,
            start,
            move_radius: radius,
            power_consumption: Some(consumption),
            detect_radius: None,
        }
    }

    pub(crate) fn ugv(start: Cell, radius: f64, detect: f64) -> EntitySpec {
        EntitySpec {
            class: EntityClass::Ugv,
            start,
            move_radius: radius,
            power_consumption: None,
            detect_radius: Some(detect),
        }
    }

    pub(crate) fn spec_16(
        obstacles: &[Cell],
        tasks: Vec<TaskSpec>,
        entities: Vec<EntitySpec>,
    ) -> Arc<ScenarioSpec> {
        Arc::new(ScenarioSpec {
            version: SCHEMA_VERSION,
            grid: GridDims {
                height: 16,
                width: 16,
            },
            time_limit: 12,
            obstacles: obstacles.iter().copied().collect(),
            tasks,
            entities,
            seed: 0,
        })
    }

    fn task(loc: Cell, ty: TaskType, dur: u32) -> TaskSpec {
        TaskSpec {
            location: loc,
            task_type: ty,
            duration: dur,
        }
    }

    #[test]
    fn movable_range_counts_euclidean_disc() {
        // Radius 3 around (5, 5) on an empty grid: 29 integer offsets with
        // dr^2 + dc^2 <= 9.
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 3.0)],
        );
        let world = World::new(spec, true).unwrap();
        assert_eq!(world.movable_range(0).unwrap().len(), 29);
    }

    #[test]
    fn movable_range_excludes_obstacles() {
        let blocked = Cell::new(5, 6);
        let spec = spec_16(
            &[blocked],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 3.0)],
        );
        let world = World::new(spec, true).unwrap();
        let range = world.movable_range(0).unwrap();
        assert_eq!(range.len(), 28);
        assert!(!range.contains(&blocked));
    }

    #[test]
    fn stranded_uav_is_pinned_to_its_cell() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Aerial, 1)],
            vec![uav(Cell::new(4, 4), 8.0, 0.3)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.entities[0].power = 0.1;
        assert!(world.is_stranded(0));
        assert_eq!(world.movable_range(0).unwrap(), vec![Cell::new(4, 4)]);
    }

    #[test]
    fn unknown_entity_is_rejected() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 3.0)],
        );
        let world = World::new(spec, true).unwrap();
        assert!(world.movable_range(7).is_err());
    }

    #[test]
    fn hard_coop_sends_detecting_ugv_to_stranded_uav() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![uav(Cell::new(3, 3), 8.0, 0.3), ugv(Cell::new(6, 3), 5.0, 10.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.entities[0].power = 0.1;
        let overrides = world.hard_coop_overrides();
        assert_eq!(overrides.len(), 1);
        assert_eq!(overrides[&1], Cell::new(3, 3));
    }

    #[test]
    fn no_override_when_out_of_detection_or_healthy() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![uav(Cell::new(0, 0), 8.0, 0.3), ugv(Cell::new(15, 15), 5.0, 4.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.entities[0].power = 0.1;
        assert!(world.hard_coop_overrides().is_empty(), "outside detection");

        world.entities[0].power = 0.9;
        assert!(world.hard_coop_overrides().is_empty(), "healthy UAV");
    }

    #[test]
    fn nearest_then_lowest_id_ugv_is_chosen() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![
                uav(Cell::new(8, 8), 8.0, 0.3),
                ugv(Cell::new(8, 12), 5.0, 10.0), // distance 4
                ugv(Cell::new(8, 10), 5.0, 10.0), // distance 2, wins
                ugv(Cell::new(6, 8), 5.0, 10.0),  // distance 2, higher id
            ],
        );
        let mut world = World::new(spec, true).unwrap();
        world.entities[0].power = 0.0;
        let overrides = world.hard_coop_overrides();
        assert_eq!(overrides.len(), 1);
        assert!(overrides.contains_key(&2));
    }

    #[test]
    fn battery_swap_sets_power_to_one_next_step() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 3)],
            vec![uav(Cell::new(3, 3), 8.0, 0.3), ugv(Cell::new(6, 3), 5.0, 10.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.entities[0].power = 0.1;
        // Proposed actions: UAV holds (it must), UGV tries to go elsewhere.
        let out = world
            .step(&[Cell::new(3, 3), Cell::new(6, 4)])
            .unwrap();
        assert!(!out.invalid_action);
        assert_eq!(world.entities[1].pos, Cell::new(3, 3), "rescue overrides the action");
        assert_eq!(world.entities[0].power, 1.0, "swap completes on arrival");
    }

    #[test]
    fn power_follows_battery_cases() {
        // Case 2: away from any UGV with enough power, consumption is paid
        // whether or not the UAV changes cells.
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 3)],
            vec![uav(Cell::new(3, 3), 8.0, 0.3)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.step(&[Cell::new(3, 5)]).unwrap();
        assert!((world.entities[0].power - 0.7).abs() < 1e-12);
        world.step(&[Cell::new(3, 5)]).unwrap(); // deliberate stay, still hovering
        assert!((world.entities[0].power - 0.4).abs() < 1e-12);
        world.step(&[Cell::new(3, 6)]).unwrap();
        assert!((world.entities[0].power - 0.1).abs() < 1e-12);
        // Case 3: stranded, power unchanged.
        world.step(&[Cell::new(3, 6)]).unwrap();
        assert!((world.entities[0].power - 0.1).abs() < 1e-12);
        assert!(world.is_stranded(0));
    }

    #[test]
    fn reward_counts_completions() {
        let spec = spec_16(
            &[],
            vec![
                task(Cell::new(2, 2), TaskType::Detailed, 1),
                task(Cell::new(9, 9), TaskType::Detailed, 1),
            ],
            vec![worker(Cell::new(2, 3), 3.0), worker(Cell::new(9, 8), 3.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        let out = world.step(&[Cell::new(2, 2), Cell::new(9, 9)]).unwrap();
        assert_eq!(out.reward, 2.0);
        assert_eq!(out.completed_this_step, 2);
        assert!(out.done, "all tasks complete ends the episode");
        assert_eq!(world.tcr(), 1.0);
    }

    #[test]
    fn out_of_range_action_is_penalized_and_entity_stays() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 2.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        let out = world.step(&[Cell::new(15, 15)]).unwrap();
        assert!(out.invalid_action);
        assert_eq!(out.reward, INVALID_ACTION_PENALTY);
        assert_eq!(world.entities[0].pos, Cell::new(5, 5));
    }

    #[test]
    fn idle_step_gives_zero_reward() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(10, 10), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 2.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        let out = world.step(&[Cell::new(5, 6)]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(!out.invalid_action);
    }

    #[test]
    fn malformed_joint_action_rejected_without_mutation() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 1), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 2.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        assert!(world.step(&[]).is_err());
        assert!(world.step(&[Cell::new(20, 0)]).is_err());
        assert_eq!(world.t(), 0);
        assert_eq!(world.entities[0].pos, Cell::new(5, 5));
    }

    #[test]
    fn leaving_a_task_resets_progress() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(5, 5), TaskType::Detailed, 3)],
            vec![worker(Cell::new(5, 5), 3.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.step(&[Cell::new(5, 5)]).unwrap();
        world.step(&[Cell::new(5, 5)]).unwrap();
        assert_eq!(world.tasks[0].remaining, 1);
        assert_eq!(world.tasks[0].owner, Some(0));
        world.step(&[Cell::new(5, 6)]).unwrap(); // walk away
        assert_eq!(world.tasks[0].remaining, 3, "continuity broken, full reset");
        assert_eq!(world.tasks[0].owner, None);
    }

    #[test]
    fn only_lowest_id_entity_works_a_shared_cell() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(5, 5), TaskType::Detailed, 2)],
            vec![worker(Cell::new(5, 5), 3.0), worker(Cell::new(5, 5), 3.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.step(&[Cell::new(5, 5), Cell::new(5, 5)]).unwrap();
        assert_eq!(world.tasks[0].remaining, 1, "exactly one decrement");
        assert_eq!(world.tasks[0].owner, Some(0));
        assert_eq!(world.last_assignments(), &[Some(0), None]);
    }

    #[test]
    fn rescuing_ugv_forfeits_sensing_that_period() {
        // The forced rescue target cell also hosts a ground task; the UGV
        // arrives but spends the period swapping the battery.
        let target = Cell::new(3, 3);
        let spec = spec_16(
            &[],
            vec![task(target, TaskType::Ground, 1)],
            vec![uav(target, 8.0, 0.3), ugv(Cell::new(6, 3), 5.0, 10.0)],
        );
        let mut world = World::new(spec, true).unwrap();
        world.entities[0].power = 0.1;
        let out = world.step(&[target, Cell::new(6, 4)]).unwrap();
        assert_eq!(out.completed_this_step, 0);
        assert_eq!(world.tasks[0].remaining, 1);
        // Next period the UGV is free to work the task it now stands on.
        let out = world.step(&[target, target]).unwrap();
        assert_eq!(out.completed_this_step, 1);
    }

    #[test]
    fn voluntary_variant_never_forces_rescues() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![uav(Cell::new(3, 3), 8.0, 0.3), ugv(Cell::new(6, 3), 5.0, 10.0)],
        );
        let mut world = World::new(spec, false).unwrap();
        world.entities[0].power = 0.1;
        let proposed = Cell::new(6, 4);
        world.step(&[Cell::new(3, 3), proposed]).unwrap();
        assert_eq!(world.entities[1].pos, proposed, "UGV keeps its own action");
        assert!(world.is_stranded(0));
    }

    #[test]
    fn tcr_matches_direct_arithmetic() {
        let tasks: Vec<TaskSpec> = (0..120)
            .map(|i| task(Cell::new(i / 16, i % 16), TaskType::Detailed, 1))
            .collect();
        let spec = spec_16(&[], tasks, vec![worker(Cell::new(15, 15), 3.0)]);
        let mut world = World::new(spec, true).unwrap();
        world.completed = 90;
        assert_eq!(world.tcr(), 0.75);
        assert_eq!(world.incomplete_count(), 30);
    }

    #[test]
    fn positive_reward_probability_is_a_product_of_range_fractions() {
        let spec = spec_16(
            &[],
            vec![task(Cell::new(0, 0), TaskType::Detailed, 1)],
            vec![worker(Cell::new(5, 5), 3.0)],
        );
        let world = World::new(spec, true).unwrap();
        assert!((world.positive_reward_probability() - 29.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn replaying_actions_reproduces_the_trajectory() {
        use crate::scenario::{generate_scenario, preset_params};
        let (_, params) = &preset_params("sce1").unwrap()[0];
        let spec = Arc::new(generate_scenario(params, 4).unwrap());
        let actions: Vec<Vec<Cell>> = {
            // A fixed deterministic action plan: everyone holds position.
            let holds: Vec<Cell> = spec.entities.iter().map(|e| e.start).collect();
            (0..4).map(|_| holds.clone()).collect()
        };
        let run = || {
            let mut world = World::new(Arc::clone(&spec), true).unwrap();
            let mut states = Vec::new();
            for acts in &actions {
                world.step(acts).unwrap();
                states.push((world.entities.clone(), world.tasks.clone(), world.completed));
            }
            states
        };
        assert_eq!(run(), run());
    }
}
