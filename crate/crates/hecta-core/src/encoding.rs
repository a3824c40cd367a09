//! Channel-plane encodings of world state consumed by the networks, plus the
//! deterministic observation function.
//!
//! Global planes (7 x H x W):
//!   0 obstacles, 1-3 incomplete-task presence split by serving class
//!   (aerial / ground / detailed), 4 agent occupancy count, 5 remaining
//!   duration normalized by each task's full duration, 6 task-ownership
//!   indicator.
//!
//! Local planes (3 x H x W): own position one-hot, movable-range mask, own
//! power broadcast at the own cell. Alongside the planes each entity
//! carries a one-hot id (length F) and its power urgency pair.

use crate::neural::Tensor;
use crate::scenario::{Cell, EntityClass, TaskType};
use crate::world::{World, WorldError};

pub const GLOBAL_CHANNELS: usize = 7;
pub const LOCAL_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalObs {
    /// 7 x H x W.
    pub planes: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalObs {
    /// 3 x H x W.
    pub planes: Tensor,
    /// Exactly one 1 at the entity's index.
    pub id_onehot: Vec<f64>,
    /// (current power, per-step consumption); (0, 0) for non-UAVs.
    pub urge: (f64, f64),
}

fn task_plane_index(ty: TaskType) -> usize {
    match ty {
        TaskType::Aerial => 1,
        TaskType::Ground => 2,
        TaskType::Detailed => 3,
    }
}

pub fn encode_global(world: &World) -> GlobalObs {
    let grid = world.spec().grid;
    let (h, w) = (grid.height, grid.width);
    let plane = h * w;
    let mut data = vec![0.0; GLOBAL_CHANNELS * plane];

    for c in &world.spec().obstacles {
        data[grid.index(*c)] = 1.0;
    }
    for (ti, tspec) in world.spec().tasks.iter().enumerate() {
        let state = &world.tasks()[ti];
        if state.remaining == 0 {
            continue;
        }
        let idx = grid.index(tspec.location);
        data[task_plane_index(tspec.task_type) * plane + idx] = 1.0;
        data[5 * plane + idx] = state.remaining as f64 / tspec.duration as f64;
        if state.owner.is_some() {
            data[6 * plane + idx] = 1.0;
        }
    }
    for e in world.entities() {
        data[4 * plane + grid.index(e.pos)] += 1.0;
    }

    GlobalObs {
        planes: Tensor::from_vec(&[GLOBAL_CHANNELS, h, w], data).expect("sized above"),
    }
}

pub fn encode_local(world: &World, entity: usize) -> Result<LocalObs, WorldError> {
    let grid = world.spec().grid;
    let (h, w) = (grid.height, grid.width);
    let plane = h * w;
    let state = *world.entity(entity)?;
    let espec = &world.spec().entities[entity];

    let mut data = vec![0.0; LOCAL_CHANNELS * plane];
    data[grid.index(state.pos)] = 1.0;
    for cell in world.movable_range(entity)? {
        data[plane + grid.index(cell)] = 1.0;
    }
    let urge = match espec.class {
        EntityClass::Uav => (state.power, espec.power_consumption.unwrap_or(0.0)),
        _ => (0.0, 0.0),
    };
    data[2 * plane + grid.index(state.pos)] = urge.0;

    let mut id_onehot = vec![0.0; world.spec().entities.len()];
    id_onehot[entity] = 1.0;

    Ok(LocalObs {
        planes: Tensor::from_vec(&[LOCAL_CHANNELS, h, w], data).expect("sized above"),
        id_onehot,
        urge,
    })
}

/// The observation function: with deterministic transitions and sensing, the
/// full probability mass lands on the post-transition local encoding, so the
/// drawn observation is exactly `encode_local` of the new world.
pub fn observe(world: &World, entity: usize, _action: Cell) -> Result<LocalObs, WorldError> {
    encode_local(world, entity)
}

/// Debug dump of one plane set as CSV grids separated by blank lines.
pub fn planes_to_csv(planes: &Tensor) -> String {
    let shape = planes.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = String::new();
    for ch in 0..c {
        for r in 0..h {
            let row: Vec<String> = (0..w)
                .map(|col| format!("{}", planes.data()[ch * h * w + r * w + col]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
