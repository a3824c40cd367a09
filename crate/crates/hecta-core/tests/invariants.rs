//! Cross-module invariants checked over random rollouts: battery safety,
//! the hard-cooperative rescue guarantee, completion monotonicity, task
//! exclusivity, and the faithfulness of the global encoding.

use std::collections::BTreeMap;
use std::sync::Arc;

use hecta_core::encoding::{encode_global, encode_local};
use hecta_core::learning::{rollout, RolloutOptions, RolloutPolicy};
use hecta_core::scenario::{
    generate_scenario, AttrSpec, Cell, DistributionKind, EntityClass, EntityCountSpec,
    GenerationParams, GridDims,
};
use hecta_core::world::World;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rescue_rich_params() -> GenerationParams {
    // High consumption and a roomy detection radius make strandings and
    // rescues frequent.
    GenerationParams {
        grid: GridDims { height: 8, width: 8 },
        time_limit: 10,
        obstacle_density: 0.1,
        task_counts: (4, 3, 4),
        duration_mix: vec![(1, 9), (2, 2)],
        task_distribution: DistributionKind::UniformRandom,
        entities: EntityCountSpec::Explicit {
            uav: 2,
            worker: 2,
            ugv: 2,
        },
        entity_distribution: DistributionKind::UniformRandom,
        uav_radius: AttrSpec::Range(2.0, 4.0),
        worker_radius: AttrSpec::Fixed(2.0),
        ugv_radius: AttrSpec::Range(2.0, 3.0),
        uav_consumption: AttrSpec::Range(0.35, 0.6),
        ugv_detect_radius: AttrSpec::Fixed(6.0),
    }
}

/// Drive a world with filtered random actions, checking per-step battery
/// and protocol invariants. Returns (rescue count, steps).
fn battery_checked_rollout(spec_seed: u64, action_seed: u64) -> (u32, u32) {
    let spec = Arc::new(generate_scenario(&rescue_rich_params(), spec_seed).unwrap());
    let mut world = World::new(Arc::clone(&spec), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
    let mut rescues = 0;
    let mut steps = 0;
    while !world.done() {
        let pre_power: Vec<f64> = world.entities().iter().map(|e| e.power).collect();
        let pre_pos: Vec<Cell> = world.entities().iter().map(|e| e.pos).collect();
        let expected_rescues = world.hard_coop_overrides();

        let actions: Vec<Cell> = (0..spec.entity_count())
            .map(|k| {
                let range = world.movable_range(k).unwrap();
                range[rng.random_range(0..range.len())]
            })
            .collect();
        let outcome = world.step(&actions).unwrap();
        assert!(!outcome.invalid_action, "filtered actions never go out of range");
        steps += 1;

        for (&ugv, &cell) in &expected_rescues {
            assert_eq!(
                world.entities()[ugv].pos, cell,
                "detected stranded UAV must be reached next step"
            );
            rescues += 1;
        }
        let ugv_cells: Vec<Cell> = (0..spec.entity_count())
            .filter(|&k| spec.entities[k].class == EntityClass::Ugv)
            .map(|k| world.entities()[k].pos)
            .collect();
        for k in 0..spec.entity_count() {
            let espec = &spec.entities[k];
            if espec.class != EntityClass::Uav {
                continue;
            }
            let power = world.entities()[k].power;
            assert!((0.0..=1.0).contains(&power), "power stays in [0, 1]");
            let consumption = espec.power_consumption.unwrap();
            if ugv_cells.contains(&world.entities()[k].pos) {
                assert_eq!(power, 1.0, "colocated-UGV step ends with a full battery");
            } else if pre_power[k] >= consumption {
                assert!(
                    (power - (pre_power[k] - consumption)).abs() < 1e-12,
                    "healthy UAV pays its consumption"
                );
            } else {
                assert_eq!(power, pre_power[k], "stranded UAV holds its charge");
                assert_eq!(world.entities()[k].pos, pre_pos[k], "and its position");
            }
        }
    }
    (rescues, steps)
}

#[test]
fn battery_and_rescue_invariants_over_random_rollouts() {
    let mut rescues = 0;
    for seed in 0..60 {
        let (r, _) = battery_checked_rollout(seed, seed ^ 0x5555);
        rescues += r;
    }
    assert!(rescues > 20, "rescue path exercised ({rescues} rescues seen)");
}

#[test]
fn completion_is_monotone_and_exclusive() {
    for seed in 0..20 {
        let spec = Arc::new(generate_scenario(&rescue_rich_params(), seed).unwrap());
        let mut world = World::new(Arc::clone(&spec), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut last_completed = 0;
        while !world.done() {
            let remaining_before: Vec<u32> = world.tasks().iter().map(|t| t.remaining).collect();
            let actions: Vec<Cell> = (0..spec.entity_count())
                .map(|k| {
                    let range = world.movable_range(k).unwrap();
                    range[rng.random_range(0..range.len())]
                })
                .collect();
            world.step(&actions).unwrap();
            assert!(world.completed_count() >= last_completed, "monotone completion");
            last_completed = world.completed_count();

            // Each task decrements at most once per step, and each entity
            // decrements at most one task.
            let mut worker_count: BTreeMap<usize, u32> = BTreeMap::new();
            for (ti, t) in world.tasks().iter().enumerate() {
                let before = remaining_before[ti];
                let decrements = before.saturating_sub(t.remaining);
                assert!(decrements <= 1, "task {ti} decremented {decrements} times");
            }
            for (k, c) in world.last_assignments().iter().enumerate() {
                if let Some(_task) = c {
                    *worker_count.entry(k).or_default() += 1;
                }
            }
            assert!(worker_count.values().all(|&c| c <= 1));
        }
    }
}

/// What the global planes can express: per-cell obstacle flags, per-cell
/// incomplete-task type/remaining/ownership, and per-cell entity counts.
fn global_signature(world: &World) -> Vec<(usize, u32, u32, bool, usize)> {
    let grid = world.spec().grid;
    let mut sig = Vec::new();
    for (ti, t) in world.tasks().iter().enumerate() {
        if t.remaining > 0 {
            let spec = &world.spec().tasks[ti];
            sig.push((
                grid.index(spec.location),
                t.remaining,
                spec.duration,
                t.owner.is_some(),
                1,
            ));
        }
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in world.entities() {
        *counts.entry(grid.index(e.pos)).or_default() += 1;
    }
    for (cell, count) in counts {
        sig.push((cell, 0, 0, false, count + 10));
    }
    sig.sort();
    sig
}

#[test]
fn global_encoding_separates_distinct_states() {
    // Over random rollouts of one scenario: equal planes <=> equal
    // signatures (the quotient the encoding is injective on).
    let spec = Arc::new(generate_scenario(&rescue_rich_params(), 3).unwrap());
    let mut by_planes: BTreeMap<Vec<u64>, Vec<(usize, u32, u32, bool, usize)>> = BTreeMap::new();
    let mut by_sig: BTreeMap<Vec<(usize, u32, u32, bool, usize)>, Vec<u64>> = BTreeMap::new();
    let mut states = 0;
    for seed in 0..40 {
        let mut world = World::new(Arc::clone(&spec), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let planes: Vec<u64> = encode_global(&world)
                .planes
                .iter()
                .map(|v| v.to_bits())
                .collect();
            let sig = global_signature(&world);
            states += 1;
            if let Some(prev) = by_planes.get(&planes) {
                assert_eq!(prev, &sig, "same planes must mean same signature");
            } else {
                by_planes.insert(planes.clone(), sig.clone());
            }
            if let Some(prev) = by_sig.get(&sig) {
                assert_eq!(prev, &planes, "same signature must mean same planes");
            } else {
                by_sig.insert(sig, planes);
            }
            if world.done() {
                break;
            }
            let actions: Vec<Cell> = (0..spec.entity_count())
                .map(|k| {
                    let range = world.movable_range(k).unwrap();
                    range[rng.random_range(0..range.len())]
                })
                .collect();
            world.step(&actions).unwrap();
        }
    }
    assert!(states > 300);
    assert!(by_planes.len() > 50, "rollouts visited many distinct states");
}

#[test]
fn local_mask_plane_equals_movable_range() {
    let spec = Arc::new(generate_scenario(&rescue_rich_params(), 5).unwrap());
    let mut world = World::new(Arc::clone(&spec), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = spec.grid;
    let plane = grid.cell_count();
    while !world.done() {
        for k in 0..spec.entity_count() {
            let obs = encode_local(&world, k).unwrap();
            let mask: Vec<usize> = (0..plane)
                .filter(|i| obs.planes.data()[plane + i] == 1.0)
                .collect();
            let range: Vec<usize> = world
                .movable_range(k)
                .unwrap()
                .iter()
                .map(|c| grid.index(*c))
                .collect();
            assert_eq!(mask, range);
        }
        let actions: Vec<Cell> = (0..spec.entity_count())
            .map(|k| {
                let range = world.movable_range(k).unwrap();
                range[rng.random_range(0..range.len())]
            })
            .collect();
        world.step(&actions).unwrap();
    }
}

#[test]
fn greedy_tcr_is_monotone_in_time_limit() {
    for seed in [1u64, 7, 21] {
        let mut params = rescue_rich_params();
        params.time_limit = 12;
        let spec = generate_scenario(&params, seed).unwrap();
        let tcr_at = |limit: u32| {
            let mut s = spec.clone();
            s.time_limit = limit;
            let mut world = World::new(Arc::new(s), true).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            rollout(&mut world, &RolloutPolicy::Greedy, &mut rng, &RolloutOptions::default())
                .unwrap()
                .tcr
        };
        let (t6, t9, t12) = (tcr_at(6), tcr_at(9), tcr_at(12));
        assert!(t12 >= t9 && t9 >= t6, "seed {seed}: {t6} {t9} {t12}");
    }
}

#[test]
fn parameter_sharing_isolates_classes() {
    use hecta_core::mixing::NetBundle;
    let spec = Arc::new(generate_scenario(&rescue_rich_params(), 2).unwrap());
    let mut bundle = NetBundle::for_scenario(&spec, 11, false, false).unwrap();
    let world = World::new(Arc::clone(&spec), true).unwrap();

    let q_of = |bundle: &NetBundle, k: usize| {
        let obs = encode_local(&world, k).unwrap();
        let (feat, _) = bundle
            .local_features(&bundle.eval, obs.planes.data(), k, obs.urge)
            .unwrap();
        let net = bundle.agent_net_for(k);
        let h = net.zero_hidden();
        net.q_values(&bundle.eval, &feat, &h).unwrap().0
    };

    let before: Vec<Vec<f64>> = (0..spec.entity_count()).map(|k| q_of(&bundle, k)).collect();
    for v in bundle.eval.get_mut("agent.worker.fc_out.b").data_mut() {
        *v += 0.37;
    }
    let after: Vec<Vec<f64>> = (0..spec.entity_count()).map(|k| q_of(&bundle, k)).collect();
    for k in 0..spec.entity_count() {
        if spec.entities[k].class == EntityClass::Worker {
            assert_ne!(before[k], after[k], "worker {k} outputs must change");
        } else {
            assert_eq!(before[k], after[k], "entity {k} outputs must not change");
        }
    }
}
