//! Per-agent decision machinery: the recurrent Q-network stacks with
//! type-shared parameters, filtered epsilon-greedy selection, and the
//! non-learned baselines.

use rand::Rng;

use crate::neural::gru::{GruCache, GruCell};
use crate::neural::layers::{relu, relu_backward, Dense};
use crate::neural::tensor::ParamStore;
use crate::neural::NeuralError;
use crate::scenario::{Cell, EntityClass};
use crate::world::{World, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("empty action mask")]
    EmptyMask,
    #[error("epsilon {0} outside [0, 1]")]
    BadEpsilon(f64),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Recurrent core of an agent network: a GRU, or a plain feed-forward layer
/// when temporal modeling is ablated.
#[derive(Debug, Clone)]
pub enum RecurrentCore {
    Gru(GruCell),
    /// `h' = relu(W x + b)`; the previous hidden state is ignored.
    FeedForward(Dense),
}

#[derive(Debug, Clone)]
pub enum CoreCache {
    Gru(GruCache),
    FeedForward { x: Vec<f64>, pre: Vec<f64> },
}

impl RecurrentCore {
    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        match self {
            RecurrentCore::Gru(cell) => cell.register(store, rng),
            RecurrentCore::FeedForward(d) => d.register(store, rng),
        }
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &[f64],
        h_prev: &[f64],
    ) -> Result<(Vec<f64>, CoreCache), NeuralError> {
        match self {
            RecurrentCore::Gru(cell) => {
                let (h, cache) = cell.forward(ps, x, h_prev)?;
                Ok((h, CoreCache::Gru(cache)))
            }
            RecurrentCore::FeedForward(d) => {
                let pre = d.forward(ps, x)?;
                let mut h = pre.clone();
                relu(&mut h);
                Ok((h, CoreCache::FeedForward { x: x.to_vec(), pre }))
            }
        }
    }

    /// Returns (dL/dx, dL/dh_prev); the feed-forward core propagates nothing
    /// into the previous hidden state.
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &CoreCache,
        dh: &[f64],
        grads: &mut ParamStore,
    ) -> (Vec<f64>, Vec<f64>) {
        match (self, cache) {
            (RecurrentCore::Gru(cell), CoreCache::Gru(c)) => cell.backward(ps, c, dh, grads),
            (RecurrentCore::FeedForward(d), CoreCache::FeedForward { x, pre }) => {
                let d_pre = relu_backward(pre, dh);
                let dx = d.backward(ps, x, &d_pre, grads);
                (dx, vec![0.0; dh.len()])
            }
            _ => unreachable!("cache kind matches core kind"),
        }
    }
}

/// One class's decision network: input MLP, recurrent core, output MLP to
/// one action value per grid cell. All agents of the class share these
/// parameters.
#[derive(Debug, Clone)]
pub struct AgentNet {
    pub class: EntityClass,
    pub fc_in: Dense,
    pub core: RecurrentCore,
    pub fc_out: Dense,
    pub hidden: usize,
}

/// Per-step forward cache for training-time backprop.
#[derive(Debug, Clone)]
pub struct AgentStepCache {
    pub features: Vec<f64>,
    pub pre_in: Vec<f64>,
    pub x: Vec<f64>,
    pub core: CoreCache,
    pub h_new: Vec<f64>,
}

impl AgentNet {
    pub fn new(class: EntityClass, feat_dim: usize, hidden: usize, actions: usize, ablate_sedm: bool) -> Self {
        let prefix = format!("agent.{}", class.name());
        let core = if ablate_sedm {
            RecurrentCore::FeedForward(Dense::new(&format!("{prefix}.ff"), hidden, hidden))
        } else {
            RecurrentCore::Gru(GruCell::new(&format!("{prefix}.gru"), hidden, hidden))
        };
        AgentNet {
            class,
            fc_in: Dense::new(&format!("{prefix}.fc_in"), feat_dim, hidden),
            core,
            fc_out: Dense::new(&format!("{prefix}.fc_out"), hidden, actions),
            hidden,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.fc_in.register(store, rng);
        self.core.register(store, rng);
        self.fc_out.register(store, rng);
    }

    /// One decision step: features -> action values plus the updated hidden
    /// state (the recurrent summary including this observation).
    pub fn q_values(
        &self,
        ps: &ParamStore,
        features: &[f64],
        hidden: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        let (q, h, _) = self.q_values_cached(ps, features, hidden)?;
        Ok((q, h))
    }

    pub fn q_values_cached(
        &self,
        ps: &ParamStore,
        features: &[f64],
        hidden: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, AgentStepCache), NeuralError> {
        let pre_in = self.fc_in.forward(ps, features)?;
        let mut x = pre_in.clone();
        relu(&mut x);
        let (h_new, core) = self.core.forward(ps, &x, hidden)?;
        let q = self.fc_out.forward(ps, &h_new)?;
        Ok((
            q.clone(),
            h_new.clone(),
            AgentStepCache {
                features: features.to_vec(),
                pre_in,
                x,
                core,
                h_new,
            },
        ))
    }

    /// Backward through one step. `dq` is the gradient w.r.t. the action
    /// values, `dh_extra` any gradient flowing into this step's hidden state
    /// from elsewhere (the mixer, or the next step's recurrence). Returns
    /// (dL/dfeatures, dL/dh_prev).
    pub fn backward_step(
        &self,
        ps: &ParamStore,
        cache: &AgentStepCache,
        dq: &[f64],
        dh_extra: &[f64],
        grads: &mut ParamStore,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut dh = self.fc_out.backward(ps, &cache.h_new, dq, grads);
        for (a, b) in dh.iter_mut().zip(dh_extra) {
            *a += b;
        }
        let (dx, dh_prev) = self.core.backward(ps, &cache.core, &dh, grads);
        let d_pre = relu_backward(&cache.pre_in, &dx);
        let d_feat = self.fc_in.backward(ps, &cache.features, &d_pre, grads);
        (d_feat, dh_prev)
    }

    pub fn zero_hidden(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }
}

/// Argmax over the unmasked cells; masked entries are treated as -inf.
/// Ties resolve to the lowest cell index.
pub fn masked_argmax(q: &[f64], allowed: &[usize]) -> Result<usize, PolicyError> {
    allowed
        .iter()
        .copied()
        .reduce(|best, cand| if q[cand] > q[best] { cand } else { best })
        .ok_or(PolicyError::EmptyMask)
}

/// Filtered epsilon-greedy: with probability `1 - epsilon` the masked
/// argmax, otherwise a uniform draw over the allowed cells. The returned
/// cell index is always inside the mask, so the out-of-range penalty branch
/// is unreachable under this selector.
pub fn select_action_filtered(
    q: &[f64],
    allowed: &[usize],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize, PolicyError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(PolicyError::BadEpsilon(epsilon));
    }
    if allowed.is_empty() {
        return Err(PolicyError::EmptyMask);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(allowed[rng.random_range(0..allowed.len())])
    } else {
        masked_argmax(q, allowed)
    }
}

/// Nearest-task baseline: among reachable cells, pick the one minimizing the
/// Euclidean distance to the closest incomplete task of the entity's class;
/// ties break in row-major order. With no matching incomplete task left the
/// entity stays put.
pub fn greedy_policy(world: &World, entity: usize) -> Result<Cell, WorldError> {
    let espec = &world.spec().entities[entity];
    let current = world.entity(entity)?.pos;
    let targets: Vec<Cell> = world
        .spec()
        .tasks
        .iter()
        .enumerate()
        .filter(|(ti, t)| {
            world.tasks()[*ti].remaining > 0 && t.task_type.required_class() == espec.class
        })
        .map(|(_, t)| t.location)
        .collect();
    if targets.is_empty() {
        return Ok(current);
    }
    if targets.contains(&current) {
        return Ok(current);
    }
    let score = |c: Cell| {
        targets
            .iter()
            .map(|t| c.distance(*t))
            .fold(f64::INFINITY, f64::min)
    };
    // movable_range yields row-major order, so the first strict minimum is
    // the declared tie-break.
    let mut best = None;
    for cell in world.movable_range(entity)? {
        let s = score(cell);
        match best {
            None => best = Some((cell, s)),
            Some((_, bs)) if s < bs => best = Some((cell, s)),
            _ => {}
        }
    }
    Ok(best.expect("movable range is never empty").0)
}

/// The voluntary ("soft cooperation") variant keeps every entity's own
/// proposed action; rescues are not forced. The behavioural difference
/// lives in the world, which is constructed with the hard-cooperative
/// override disabled for this variant.
pub fn voluntary_override_policy(_world: &World, proposed: &[Cell]) -> Vec<Cell> {
    proposed.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{EntitySpec, GridDims, ScenarioSpec, TaskSpec, TaskType, SCHEMA_VERSION};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn masked_argmax_ignores_masked_entries() {
        // epsilon = 0, q = [5, 1, 9, 2], mask {0, 1, 3}: the 9 is hidden.
        let q = [5.0, 1.0, 9.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_action_filtered(&q, &[0, 1, 3], 0.0, &mut rng).unwrap();
        assert_eq!(a, 0);
    }

    #[test]
    fn singleton_mask_wins_regardless_of_epsilon() {
        let q = [0.0, 100.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for eps in [0.0, 0.5, 1.0] {
            assert_eq!(select_action_filtered(&q, &[2], eps, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn empty_mask_and_bad_epsilon_are_rejected() {
        let q = [1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            select_action_filtered(&q, &[], 0.5, &mut rng),
            Err(PolicyError::EmptyMask)
        ));
        assert!(matches!(
            select_action_filtered(&q, &[0], 1.5, &mut rng),
            Err(PolicyError::BadEpsilon(_))
        ));
    }

    #[test]
    fn full_exploration_is_uniform_over_the_mask() {
        let q = [0.0, 9.0, 0.0, 0.0, 0.0, 0.0];
        let allowed = [0, 2, 4, 5];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000usize;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[select_action_filtered(&q, &allowed, 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[1] + counts[3], 0);
        // Three-sigma band around p = 1/4.
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        for &c in &[counts[0], counts[2], counts[4], counts[5]] {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() <= 3.0 * sigma, "frequency {f}");
        }
    }

    fn tiny_world(tasks: Vec<TaskSpec>, entities: Vec<EntitySpec>) -> World {
        let spec = ScenarioSpec {
            version: SCHEMA_VERSION,
            grid: GridDims {
                height: 8,
                width: 8,
            },
            time_limit: 9,
            obstacles: Default::default(),
            tasks,
            entities,
            seed: 0,
        };
        World::new(Arc::new(spec), true).unwrap()
    }

    fn w(start: Cell, radius: f64) -> EntitySpec {
        EntitySpec {
            class: EntityClass::Worker,
            start,
            move_radius: radius,
            power_consumption: None,
            detect_radius: None,
        }
    }

    fn t(loc: Cell, dur: u32) -> TaskSpec {
        TaskSpec {
            location: loc,
            task_type: TaskType::Detailed,
            duration: dur,
        }
    }

    #[test]
    fn greedy_goes_to_reachable_task() {
        let world = tiny_world(vec![t(Cell::new(3, 4), 1)], vec![w(Cell::new(3, 2), 3.0)]);
        assert_eq!(greedy_policy(&world, 0).unwrap(), Cell::new(3, 4));
    }

    #[test]
    fn greedy_stays_when_no_matching_tasks_remain() {
        let world = tiny_world(
            vec![TaskSpec {
                location: Cell::new(7, 7),
                task_type: TaskType::Aerial,
                duration: 1,
            }],
            vec![w(Cell::new(2, 2), 3.0)],
        );
        assert_eq!(greedy_policy(&world, 0).unwrap(), Cell::new(2, 2));
    }

    #[test]
    fn greedy_stays_on_its_current_task() {
        let world = tiny_world(
            vec![t(Cell::new(2, 2), 3), t(Cell::new(2, 3), 1)],
            vec![w(Cell::new(2, 2), 3.0)],
        );
        assert_eq!(greedy_policy(&world, 0).unwrap(), Cell::new(2, 2));
    }

    #[test]
    fn greedy_ties_break_row_major() {
        // Tasks symmetric around the worker: cells (1, 3) and (5, 3) are the
        // two distance-zero candidates; row-major order prefers (1, 3).
        let world = tiny_world(
            vec![t(Cell::new(1, 3), 1), t(Cell::new(5, 3), 1)],
            vec![w(Cell::new(3, 3), 2.0)],
        );
        assert_eq!(greedy_policy(&world, 0).unwrap(), Cell::new(1, 3));
    }

    #[test]
    fn voluntary_override_is_identity() {
        let world = tiny_world(vec![t(Cell::new(3, 4), 1)], vec![w(Cell::new(3, 2), 3.0)]);
        let proposed = vec![Cell::new(3, 3)];
        assert_eq!(voluntary_override_policy(&world, &proposed), proposed);
    }

    #[test]
    fn shared_parameters_give_shared_outputs() {
        let net = AgentNet::new(EntityClass::Worker, 12, 16, 64, false);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        net.register(&mut store, &mut rng);
        let feats: Vec<f64> = (0..12).map(|i| (i as f64) * 0.1 - 0.5).collect();
        let h = net.zero_hidden();
        let (q1, h1) = net.q_values(&store, &feats, &h).unwrap();
        let (q2, h2) = net.q_values(&store, &feats, &h).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(h1, h2);
        assert_eq!(q1.len(), 64);
    }

    #[test]
    fn recurrence_distinguishes_equal_final_observations() {
        // Hand-set GRU weights that fold history into the hidden state:
        // large negative update bias keeps z ~ 0 so h' ~ tanh(x + 0.5 h).
        let hidden = 4;
        let net = AgentNet::new(EntityClass::Worker, 4, hidden, 4, false);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        net.register(&mut store, &mut rng);

        let eye = |store: &mut ParamStore, key: &str, scale: f64| {
            let t = store.get_mut(key);
            for v in t.data_mut().iter_mut() {
                *v = 0.0;
            }
            for i in 0..hidden {
                t.data_mut()[i * hidden + i] = scale;
            }
        };
        eye(&mut store, "agent.worker.fc_in.w", 1.0);
        eye(&mut store, "agent.worker.fc_out.w", 1.0);
        for key in ["agent.worker.fc_in.b", "agent.worker.fc_out.b"] {
            for v in store.get_mut(key).data_mut() {
                *v = 0.0;
            }
        }
        {
            let wih = store.get_mut("agent.worker.gru.w_ih");
            for v in wih.data_mut().iter_mut() {
                *v = 0.0;
            }
            for i in 0..hidden {
                // Candidate-gate rows see the input directly.
                wih.data_mut()[(2 * hidden + i) * hidden + i] = 1.0;
            }
        }
        {
            let whh = store.get_mut("agent.worker.gru.w_hh");
            for v in whh.data_mut().iter_mut() {
                *v = 0.0;
            }
            for i in 0..hidden {
                whh.data_mut()[(2 * hidden + i) * hidden + i] = 0.5;
            }
        }
        {
            let bih = store.get_mut("agent.worker.gru.b_ih");
            for (i, v) in bih.data_mut().iter_mut().enumerate() {
                // r bias large positive (r ~ 1), z bias large negative (z ~ 0).
                *v = if i < hidden {
                    10.0
                } else if i < 2 * hidden {
                    -10.0
                } else {
                    0.0
                };
            }
            for v in store.get_mut("agent.worker.gru.b_hh").data_mut() {
                *v = 0.0;
            }
        }

        let oa = vec![0.9, 0.0, 0.0, 0.0];
        let ob = vec![0.0, 0.9, 0.0, 0.0];
        let of = vec![0.0, 0.0, 0.9, 0.0];
        let run = |first: &[f64]| {
            let h0 = net.zero_hidden();
            let (_, h1) = net.q_values(&store, first, &h0).unwrap();
            let (q, _) = net.q_values(&store, &of, &h1).unwrap();
            q
        };
        let qa = run(&oa);
        let qb = run(&ob);
        assert_ne!(qa, qb, "different histories, same final observation");
    }
}
