//! Episode replay, schedules, rollouts, and the centralized-training /
//! decentralized-execution loop.
//!
//! The replay buffer stores complete episodes, never fragments. Records
//! keep the raw observation planes (as f32 to halve memory), so training
//! re-extracts features with the current networks and re-unrolls the
//! recurrent states from zeros; the per-step hidden/q snapshots are optional
//! debugging payload only.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{encode_global, encode_local};
use crate::mixing::{compute_loss, LossBreakdown, LossConfig, MixingError, NetBundle};
use crate::neural::optim::{clip_global_norm, RmsProp};
use crate::neural::NeuralError;
use crate::policy::{greedy_policy, select_action_filtered, PolicyError};
use crate::scenario::{perturb_scenario, Cell, ScenarioError, ScenarioSpec, VariationKind};
use crate::world::{World, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("malformed episode record: {0}")]
    MalformedRecord(String),
    #[error("buffer underfull: have {have} episodes, need {need}")]
    Underfull { have: usize, need: usize },
    #[error("non-finite loss at episode {episode}; offending batch: {detail}")]
    NumericalAbort { episode: u32, detail: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Mixing(#[from] MixingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

// ---------------------------------------------------------------------------
// Episode records and the replay buffer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    /// 3 x H x W local observation planes.
    pub obs_planes: Vec<f32>,
    pub urge: (f32, f32),
    /// Selected target cell (row-major index).
    pub action: u32,
    pub hidden_snapshot: Option<Vec<f32>>,
    pub q_snapshot: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 7 x H x W global state planes.
    pub global_planes: Vec<f32>,
    pub agents: Vec<AgentStep>,
    pub reward: f64,
    /// 1 while the episode continues, 0 exactly at the final stored step.
    pub te: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn validate(&self, f_total: usize, cells: usize) -> Result<(), LearnError> {
        if self.steps.is_empty() {
            return Err(LearnError::MalformedRecord("no steps".into()));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if step.global_planes.len() != crate::encoding::GLOBAL_CHANNELS * cells {
                return Err(LearnError::MalformedRecord(format!(
                    "step {t}: global planes have {} values",
                    step.global_planes.len()
                )));
            }
            if step.agents.len() != f_total {
                return Err(LearnError::MalformedRecord(format!(
                    "step {t}: {} agent entries, expected {f_total}",
                    step.agents.len()
                )));
            }
            for (k, a) in step.agents.iter().enumerate() {
                if a.obs_planes.len() != crate::encoding::LOCAL_CHANNELS * cells {
                    return Err(LearnError::MalformedRecord(format!(
                        "step {t} agent {k}: obs planes have {} values",
                        a.obs_planes.len()
                    )));
                }
                if a.action as usize >= cells {
                    return Err(LearnError::MalformedRecord(format!(
                        "step {t} agent {k}: action {} outside grid",
                        a.action
                    )));
                }
            }
            let expected_te = if t + 1 == self.steps.len() { 0 } else { 1 };
            if step.te != expected_te {
                return Err(LearnError::MalformedRecord(format!(
                    "step {t}: te flag {} (terminal marking must sit exactly on the last step)",
                    step.te
                )));
            }
        }
        Ok(())
    }
}

/// Ring of at most `capacity` complete episodes; once full, the oldest slot
/// is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    f_total: usize,
    cells: usize,
    slots: Vec<EpisodeRecord>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, f_total: usize, cells: usize) -> Result<Self, LearnError> {
        if capacity == 0 {
            return Err(LearnError::InvalidConfig("buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            f_total,
            cells,
            slots: Vec::new(),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, i: usize) -> &EpisodeRecord {
        &self.slots[i]
    }

    pub fn push(&mut self, record: EpisodeRecord) -> Result<(), LearnError> {
        record.validate(self.f_total, self.cells)?;
        if self.slots.len() < self.capacity {
            self.slots.push(record);
        } else {
            self.slots[self.cursor] = record;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sample of distinct full episodes.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&EpisodeRecord>, LearnError> {
        if self.slots.len() < batch {
            return Err(LearnError::Underfull {
                have: self.slots.len(),
                need: batch,
            });
        }
        let picked = rand::seq::index::sample(rng, self.slots.len(), batch);
        Ok(picked.into_iter().map(|i| &self.slots[i]).collect())
    }
}

// ---------------------------------------------------------------------------
// Config and schedules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoopVariant {
    /// UGVs are forced to rescue stranded UAVs they detect.
    Hard,
    /// UGVs keep their own actions; no forced rescues.
    Voluntary,
}

impl CoopVariant {
    pub fn hard_coop(&self) -> bool {
        matches!(self, CoopVariant::Hard)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub episodes: u32,
    /// Override the scenario's episode length, if set.
    pub time_limit: Option<u32>,
    pub gamma: f64,
    pub lr0: f64,
    pub lr_decay_rate: f64,
    pub lr_decay_interval: u32,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run spent annealing epsilon linearly.
    pub epsilon_anneal_frac: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Sync target networks every U episodes.
    pub target_sync: u32,
    pub lambda_opt: f64,
    pub lambda_nopt: f64,
    /// Global gradient-norm clip applied before each optimizer step.
    pub clip: f64,
    pub seed: u64,
    pub variant: CoopVariant,
    pub ablate_eiem: bool,
    pub ablate_sedm: bool,
    pub v_grad_to_inputs: bool,
    /// Keep per-step hidden/q snapshots in the replay buffer (debug only).
    pub store_snapshots: bool,
    /// Optimizer updates per collected episode.
    pub updates_per_episode: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 3000,
            time_limit: None,
            gamma: 0.7,
            lr0: 1e-4,
            lr_decay_rate: 0.9,
            lr_decay_interval: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_frac: 0.5,
            batch_size: 32,
            buffer_capacity: 5000,
            target_sync: 200,
            lambda_opt: 1.0,
            lambda_nopt: 1.0,
            clip: 0.2,
            seed: 0,
            variant: CoopVariant::Hard,
            ablate_eiem: false,
            ablate_sedm: false,
            v_grad_to_inputs: false,
            store_snapshots: false,
            updates_per_episode: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let fail = |m: String| Err(LearnError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return fail(format!(
                "batch size {} must be in 1..=buffer capacity {}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return fail("epsilon bounds outside [0, 1]".into());
        }
        if self.target_sync == 0 {
            return fail("target sync interval must be positive".into());
        }
        if self.lr_decay_interval == 0 {
            return fail("lr decay interval must be positive".into());
        }
        if !(self.lr0 > 0.0) || !(0.0..=1.0).contains(&self.lr_decay_rate) {
            return fail("learning rate schedule must be positive and non-increasing".into());
        }
        if !(self.clip > 0.0) {
            return fail("clip threshold must be positive".into());
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            lambda_opt: self.lambda_opt,
            lambda_nopt: self.lambda_nopt,
            v_grad_to_inputs: self.v_grad_to_inputs,
        }
    }
}

/// Step-decayed learning rate: `lr0 * rate^((episode - 1) / interval)`.
pub fn lr_at(episode: u32, cfg: &TrainConfig) -> f64 {
    let k = (episode.saturating_sub(1)) / cfg.lr_decay_interval;
    cfg.lr0 * cfg.lr_decay_rate.powi(k as i32)
}

/// Linear anneal from `epsilon_start` to `epsilon_end` over the first
/// `epsilon_anneal_frac` of the run, then constant.
pub fn epsilon_at(episode: u32, cfg: &TrainConfig) -> f64 {
    let anneal = ((cfg.episodes as f64) * cfg.epsilon_anneal_frac).round().max(1.0);
    let progress = (episode.saturating_sub(1)) as f64 / anneal;
    if progress >= 1.0 {
        return cfg.epsilon_end;
    }
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub episode: u32,
    pub loss: f64,
    pub l_td: f64,
    pub l_opt: f64,
    pub l_nopt: f64,
    pub ret: f64,
    pub tcr: f64,
    pub epsilon: f64,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "episode,loss,l_td,l_opt,l_nopt,return,tcr,epsilon,lr";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.loss,
            self.l_td,
            self.l_opt,
            self.l_nopt,
            self.ret,
            self.tcr,
            self.epsilon,
            self.lr
        )
    }

    pub fn from_csv(line: &str) -> Result<Self, LearnError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(LearnError::MalformedRecord(format!(
                "metrics row has {} fields",
                fields.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| LearnError::MalformedRecord(format!("bad number `{s}`: {e}")))
        };
        Ok(MetricsRow {
            episode: fields[0]
                .parse()
                .map_err(|e| LearnError::MalformedRecord(format!("bad episode: {e}")))?,
            loss: num(fields[1])?,
            l_td: num(fields[2])?,
            l_opt: num(fields[3])?,
            l_nopt: num(fields[4])?,
            ret: num(fields[5])?,
            tcr: num(fields[6])?,
            epsilon: num(fields[7])?,
            lr: num(fields[8])?,
        })
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRow>, LearnError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(LearnError::MalformedRecord("missing metrics header".into())),
    }
    lines.map(MetricsRow::from_csv).collect()
}

/// Moving-average loss over the first and last `window` training rows
/// (leading rows from before the first optimizer update are skipped).
/// Returns (first_window_mean, last_window_mean).
pub fn loss_window_means(rows: &[MetricsRow], window: usize) -> Option<(f64, f64)> {
    let trained: Vec<f64> = rows
        .iter()
        .skip_while(|r| r.loss == 0.0)
        .map(|r| r.loss)
        .collect();
    if trained.len() < 2 * window || window == 0 {
        return None;
    }
    let first = trained[..window].iter().sum::<f64>() / window as f64;
    let last = trained[trained.len() - window..].iter().sum::<f64>() / window as f64;
    Some((first, last))
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

pub enum RolloutPolicy<'a> {
    /// Filtered epsilon-greedy over the learned action values.
    Learned { bundle: &'a NetBundle, epsilon: f64 },
    /// Nearest-task heuristic.
    Greedy,
    /// Uniform over each entity's movable range.
    Random,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    pub record: bool,
    pub snapshots: bool,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u32,
    pub entity_id: usize,
    pub class: &'static str,
    pub row: usize,
    pub col: usize,
    /// UAV battery level; None for classes without one.
    pub power: Option<f64>,
    pub acting_task_id: Option<usize>,
    pub reward: f64,
    pub completed_cumulative: usize,
}

pub const TRACE_HEADER: &str =
    "step,entity_id,class,row,col,power,acting_task_id,reward,completed_cumulative";

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let power = r.power.map(|p| p.to_string()).unwrap_or_default();
        let task = r.acting_task_id.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step, r.entity_id, r.class, r.row, r.col, power, task, r.reward, r.completed_cumulative
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub record: Option<EpisodeRecord>,
    pub trace: Vec<TraceRow>,
    pub ret: f64,
    pub tcr: f64,
    pub steps: u32,
    pub invalid_actions: u32,
}

/// Run one episode to termination under the given policy. Hidden states
/// start at exactly zero; actions are always selected inside the movable
/// range, so filtered rollouts never trigger the penalty branch.
pub fn rollout(
    world: &mut World,
    policy: &RolloutPolicy<'_>,
    rng: &mut ChaCha8Rng,
    opts: &RolloutOptions,
) -> Result<RolloutResult, LearnError> {
    let n = world.spec().entity_count();
    let grid = world.spec().grid;
    if let RolloutPolicy::Learned { bundle, .. } = policy {
        bundle.cfg.check_scenario(world.spec())?;
    }
    let mut hidden: Vec<Vec<f64>> = match policy {
        RolloutPolicy::Learned { bundle, .. } => {
            (0..n).map(|k| bundle.agent_net_for(k).zero_hidden()).collect()
        }
        _ => Vec::new(),
    };

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut ret = 0.0;
    let mut invalid_actions = 0u32;

    while !world.done() {
        let global = opts.record.then(|| encode_global(world));
        let mut actions: Vec<Cell> = Vec::with_capacity(n);
        let mut agent_records: Vec<AgentStep> = Vec::with_capacity(n);

        for k in 0..n {
            let (cell, agent_record) = match policy {
                RolloutPolicy::Learned { bundle, epsilon } => {
                    let obs = encode_local(world, k)?;
                    let (feat, _) =
                        bundle.local_features(&bundle.eval, obs.planes.data(), k, obs.urge)?;
                    let net = bundle.agent_net_for(k);
                    let (q, h_new) = net.q_values(&bundle.eval, &feat, &hidden[k])?;
                    hidden[k] = h_new;
                    let allowed: Vec<usize> = world
                        .movable_range(k)?
                        .iter()
                        .map(|c| grid.index(*c))
                        .collect();
                    let a = select_action_filtered(&q, &allowed, *epsilon, rng)?;
                    let rec = opts.record.then(|| AgentStep {
                        obs_planes: obs.planes.data().iter().map(|&v| v as f32).collect(),
                        urge: (obs.urge.0 as f32, obs.urge.1 as f32),
                        action: a as u32,
                        hidden_snapshot: opts
                            .snapshots
                            .then(|| hidden[k].iter().map(|&v| v as f32).collect()),
                        q_snapshot: opts.snapshots.then(|| q.iter().map(|&v| v as f32).collect()),
                    });
                    (grid.cell_at(a), rec)
                }
                RolloutPolicy::Greedy => (greedy_policy(world, k)?, None),
                RolloutPolicy::Random => {
                    let range = world.movable_range(k)?;
                    (range[rng.random_range(0..range.len())], None)
                }
            };
            actions.push(cell);
            if let Some(rec) = agent_record {
                agent_records.push(rec);
            }
        }

        let outcome = world.step(&actions)?;
        ret += outcome.reward;
        if outcome.invalid_action {
            invalid_actions += 1;
        }
        if let Some(global) = global {
            steps.push(StepRecord {
                global_planes: global.planes.data().iter().map(|&v| v as f32).collect(),
                agents: agent_records,
                reward: outcome.reward,
                te: if outcome.done { 0 } else { 1 },
            });
        }
        if opts.trace {
            for k in 0..n {
                let espec = &world.spec().entities[k];
                let state = world.entity(k)?;
                trace.push(TraceRow {
                    step: world.t(),
                    entity_id: k,
                    class: espec.class.name(),
                    row: state.pos.row,
                    col: state.pos.col,
                    power: matches!(espec.class, crate::scenario::EntityClass::Uav)
                        .then_some(state.power),
                    acting_task_id: world.last_assignments()[k],
                    reward: outcome.reward,
                    completed_cumulative: world.completed_count(),
                });
            }
        }
    }

    Ok(RolloutResult {
        record: opts.record.then_some(EpisodeRecord { steps }),
        trace,
        ret,
        tcr: world.tcr(),
        steps: world.t(),
        invalid_actions,
    })
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Supplies the scenario for each training episode.
pub trait ScenarioSource {
    fn scenario(&mut self, episode: u32) -> Arc<ScenarioSpec>;
}

/// Train every episode on the same scenario.
pub struct FixedScenario(pub Arc<ScenarioSpec>);

impl ScenarioSource for FixedScenario {
    fn scenario(&mut self, _episode: u32) -> Arc<ScenarioSpec> {
        Arc::clone(&self.0)
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub bundle: NetBundle,
    pub metrics: Vec<MetricsRow>,
    /// Optimizer steps skipped because of non-finite gradients.
    pub skipped_updates: u32,
}

fn apply_time_limit(spec: Arc<ScenarioSpec>, limit: Option<u32>) -> Arc<ScenarioSpec> {
    match limit {
        Some(t) if t != spec.time_limit => {
            let mut s = (*spec).clone();
            s.time_limit = t;
            Arc::new(s)
        }
        _ => spec,
    }
}

/// The full training loop: initialize evaluation and target networks, then
/// per episode roll out with filtered epsilon-greedy actions, store the
/// episode, sample a batch, descend the three-term loss under the clipped
/// RMSprop step, and sync targets every `target_sync` episodes.
pub fn run_training(
    source: &mut dyn ScenarioSource,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&MetricsRow, &NetBundle),
) -> Result<TrainOutput, LearnError> {
    cfg.validate()?;
    let first_spec = apply_time_limit(source.scenario(1), cfg.time_limit);
    let mut bundle = NetBundle::for_scenario(&first_spec, cfg.seed, cfg.ablate_eiem, cfg.ablate_sedm)?;
    let cells = bundle.cfg.action_dim();
    let f_total = bundle.cfg.f_total();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, f_total, cells)?;
    let mut opt = RmsProp::new(&bundle.eval);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut metrics = Vec::with_capacity(cfg.episodes as usize);
    let mut skipped_updates = 0u32;

    for episode in 1..=cfg.episodes {
        let spec = apply_time_limit(source.scenario(episode), cfg.time_limit);
        bundle.cfg.check_scenario(&spec)?;
        let mut world = World::new(spec, cfg.variant.hard_coop())?;
        let epsilon = epsilon_at(episode, cfg);
        let opts = RolloutOptions {
            record: true,
            snapshots: cfg.store_snapshots,
            trace: false,
        };
        let result = rollout(
            &mut world,
            &RolloutPolicy::Learned {
                bundle: &bundle,
                epsilon,
            },
            &mut rng,
            &opts,
        )?;
        buffer.push(result.record.expect("recording was requested"))?;

        // Warm-up: train once enough complete episodes are stored.
        let mut last_loss = LossBreakdown::default();
        if buffer.len() >= cfg.batch_size {
            for _ in 0..cfg.updates_per_episode {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                let (loss, mut grads) = compute_loss(&batch, &bundle, &cfg.loss_config())?;
                if !loss.is_finite() {
                    return Err(LearnError::NumericalAbort {
                        episode,
                        detail: format!(
                            "loss {loss:?} over a batch of {} episodes of lengths {:?}",
                            batch.len(),
                            batch.iter().map(|ep| ep.steps.len()).collect::<Vec<_>>()
                        ),
                    });
                }
                clip_global_norm(&mut grads, cfg.clip);
                match opt.step(&mut bundle.eval, &grads, lr_at(episode, cfg)) {
                    Ok(()) => {}
                    Err(NeuralError::NonFinite { .. }) => {
                        skipped_updates += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
                debug_assert!(bundle.eval.all_finite());
                last_loss = loss;
            }
        }

        if episode % cfg.target_sync == 0 {
            bundle.sync_targets();
        }

        let row = MetricsRow {
            episode,
            loss: last_loss.total,
            l_td: last_loss.td,
            l_opt: last_loss.opt,
            l_nopt: last_loss.nopt,
            ret: result.ret,
            tcr: result.tcr,
            epsilon,
            lr: lr_at(episode, cfg),
        };
        progress(&row, &bundle);
        metrics.push(row);
    }

    Ok(TrainOutput {
        bundle,
        metrics,
        skipped_updates,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecMode {
    /// Decentralized greedy execution (epsilon = 0).
    GreedyExec,
    /// Epsilon-greedy with the given exploration rate.
    Stochastic(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
    /// Half-width of the 95% confidence interval (normal approximation).
    pub ci95_half: f64,
    pub runs: Vec<f64>,
}

impl EvalStats {
    pub fn from_runs(runs: Vec<f64>) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let std = if runs.len() > 1 {
            (runs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        EvalStats {
            mean,
            std,
            ci95_half: 1.96 * std / n.sqrt(),
            runs,
        }
    }
}

pub enum EvalPolicy<'a> {
    Learned(&'a NetBundle),
    Greedy,
    Random,
}

/// Final-TCR statistics over `n_seeds` decentralized rollouts.
pub fn evaluate_policy(
    policy: &EvalPolicy<'_>,
    spec: &Arc<ScenarioSpec>,
    time_limit: Option<u32>,
    n_seeds: u32,
    mode: ExecMode,
    hard_coop: bool,
    base_seed: u64,
) -> Result<EvalStats, LearnError> {
    let spec = apply_time_limit(Arc::clone(spec), time_limit);
    let epsilon = match mode {
        ExecMode::GreedyExec => 0.0,
        ExecMode::Stochastic(e) => e,
    };
    let mut runs = Vec::with_capacity(n_seeds as usize);
    for i in 0..n_seeds.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(i as u64));
        let mut world = World::new(Arc::clone(&spec), hard_coop)?;
        let rollout_policy = match policy {
            EvalPolicy::Learned(bundle) => RolloutPolicy::Learned { bundle, epsilon },
            EvalPolicy::Greedy => RolloutPolicy::Greedy,
            EvalPolicy::Random => RolloutPolicy::Random,
        };
        let result = rollout(&mut world, &rollout_policy, &mut rng, &RolloutOptions::default())?;
        runs.push(result.tcr);
    }
    Ok(EvalStats::from_runs(runs))
}

// ---------------------------------------------------------------------------
// Robustness sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RobustnessRow {
    pub kind: VariationKind,
    pub mean_tcr: f64,
    pub runs: Vec<f64>,
}

/// Evaluate the trained policy on controlled variations of a base scenario:
/// `n_variants` fresh perturbations per variation kind, one decentralized
/// greedy rollout each.
pub fn robustness_sweep(
    bundle: &NetBundle,
    base: &Arc<ScenarioSpec>,
    kinds: &[VariationKind],
    n_variants: u32,
    time_limit: Option<u32>,
    hard_coop: bool,
    seed: u64,
) -> Result<Vec<RobustnessRow>, LearnError> {
    let mut rows = Vec::with_capacity(kinds.len());
    for (ki, kind) in kinds.iter().enumerate() {
        let mut runs = Vec::with_capacity(n_variants as usize);
        for i in 0..n_variants {
            let variant_seed = seed
                .wrapping_add(1 + i as u64)
                .wrapping_add((ki as u64) << 32);
            let variant = Arc::new(perturb_scenario(base, *kind, variant_seed)?);
            let stats = evaluate_policy(
                &EvalPolicy::Learned(bundle),
                &variant,
                time_limit,
                1,
                ExecMode::GreedyExec,
                hard_coop,
                seed,
            )?;
            runs.push(stats.mean);
        }
        let mean_tcr = if runs.is_empty() {
            f64::NAN
        } else {
            runs.iter().sum::<f64>() / runs.len() as f64
        };
        rows.push(RobustnessRow {
            kind: *kind,
            mean_tcr,
            runs,
        });
    }
    Ok(rows)
}
