//! The centralized value head and the training loss.
//!
//! `NetBundle` owns every network in the system: the two convolutional
//! feature extractors (global state / local observations), the per-class
//! recurrent agent networks, and the mixing heads — a joint action-value
//! network `Q_tot`, a state-value network `V`, and the summation unit. A
//! frozen deep copy of all parameters serves as the target network.
//!
//! The loss combines a squared TD term against the bootstrapped target with
//! two value-decomposition consistency terms:
//!
//!   L = L_td + lambda_opt * L_opt + lambda_nopt * L_nopt
//!   L_td   = (Q_tot(s, H, A) - y)^2,  y = r + gamma * Qhat_tot(s', H', Abar')
//!   L_opt  = (Q'_tot(Abar) - Qhat_tot(Abar) + V)^2
//!   L_nopt = (min[Q'_tot(A) - Qhat_tot(A) + V, 0])^2
//!
//! where Q'_tot is the sum of the per-agent values and Abar the per-agent
//! (range-masked) argmax joint action. Everything evaluated with target
//! parameters is a constant for the gradient.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::learning::{AgentStep, EpisodeRecord};
use crate::neural::layers::{matvec, matvec_t_acc, outer_acc, relu, relu_backward, ConvBlock, ConvBlockCache};
use crate::neural::tensor::{ParamStore, Tensor};
use crate::neural::{checkpoint, NeuralError};
use crate::policy::{masked_argmax, AgentNet, AgentStepCache, PolicyError};
use crate::scenario::{EntityClass, GridDims, ScenarioSpec};

pub const DEFAULT_HIDDEN: usize = 128;
pub const CONV_CHANNELS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum MixingError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint does not fit scenario: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Everything needed to rebuild the network stack for a scenario shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub grid: GridDims,
    /// Class of each entity, in scenario order.
    pub entity_classes: Vec<EntityClass>,
    pub hidden: usize,
    pub conv_channels: usize,
    /// Replace the convolutional extractors with plain flattening.
    pub ablate_eiem: bool,
    /// Replace the GRU with a feed-forward layer.
    pub ablate_sedm: bool,
}

impl NetConfig {
    pub fn for_scenario(spec: &ScenarioSpec, ablate_eiem: bool, ablate_sedm: bool) -> Self {
        NetConfig {
            grid: spec.grid,
            entity_classes: spec.entities.iter().map(|e| e.class).collect(),
            hidden: DEFAULT_HIDDEN,
            conv_channels: CONV_CHANNELS,
            ablate_eiem,
            ablate_sedm,
        }
    }

    pub fn f_total(&self) -> usize {
        self.entity_classes.len()
    }

    pub fn action_dim(&self) -> usize {
        self.grid.cell_count()
    }

    fn conv_out_dim(&self, channels_out: usize) -> usize {
        let oh = (self.grid.height - 2) / 2;
        let ow = (self.grid.width - 2) / 2;
        channels_out * oh * ow
    }

    pub fn global_feat_dim(&self) -> usize {
        if self.ablate_eiem {
            crate::encoding::GLOBAL_CHANNELS * self.grid.cell_count()
        } else {
            self.conv_out_dim(self.conv_channels)
        }
    }

    pub fn local_conv_dim(&self) -> usize {
        if self.ablate_eiem {
            crate::encoding::LOCAL_CHANNELS * self.grid.cell_count()
        } else {
            self.conv_out_dim(self.conv_channels)
        }
    }

    pub fn local_feat_dim(&self) -> usize {
        self.local_conv_dim() + self.f_total() + 2
    }

    pub fn classes_present(&self) -> Vec<EntityClass> {
        let mut out = Vec::new();
        for class in EntityClass::ALL {
            if self.entity_classes.contains(&class) {
                out.push(class);
            }
        }
        out
    }

    pub fn check_scenario(&self, spec: &ScenarioSpec) -> Result<(), MixingError> {
        let classes: Vec<EntityClass> = spec.entities.iter().map(|e| e.class).collect();
        if spec.grid != self.grid || classes != self.entity_classes {
            return Err(MixingError::Incompatible(format!(
                "networks built for {}x{} grid with {} entities",
                self.grid.height,
                self.grid.width,
                self.entity_classes.len()
            )));
        }
        Ok(())
    }
}

/// The two centralized heads. The action block of the joint head is kept as
/// a separate weight matrix indexed by one-hot columns, so joint actions
/// never materialize as dense vectors.
#[derive(Debug, Clone)]
pub struct Mixer {
    q_w1: String,
    q_wa: String,
    q_b1: String,
    q_w2: String,
    q_b2: String,
    v_w1: String,
    v_b1: String,
    v_w2: String,
    v_b2: String,
    hidden: usize,
    dense_in: usize,
    action_dim: usize,
    f_total: usize,
}

#[derive(Debug, Clone)]
pub struct MixerQCache {
    dense_input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MixerVCache {
    dense_input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
}

impl Mixer {
    fn new(cfg: &NetConfig) -> Self {
        Mixer {
            q_w1: "mixer.q.w1".into(),
            q_wa: "mixer.q.wa".into(),
            q_b1: "mixer.q.b1".into(),
            q_w2: "mixer.q.w2".into(),
            q_b2: "mixer.q.b2".into(),
            v_w1: "mixer.v.w1".into(),
            v_b1: "mixer.v.b1".into(),
            v_w2: "mixer.v.w2".into(),
            v_b2: "mixer.v.b2".into(),
            hidden: cfg.hidden,
            dense_in: cfg.global_feat_dim() + cfg.f_total() * cfg.hidden,
            action_dim: cfg.action_dim(),
            f_total: cfg.f_total(),
        }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let q_fan_in = self.dense_in + self.f_total * self.action_dim;
        store.insert(
            &self.q_w1,
            Tensor::uniform_fan_in(&[self.hidden, self.dense_in], q_fan_in, rng),
        );
        store.insert(
            &self.q_wa,
            Tensor::uniform_fan_in(&[self.hidden, self.f_total * self.action_dim], q_fan_in, rng),
        );
        store.insert(&self.q_b1, Tensor::uniform_fan_in(&[self.hidden], q_fan_in, rng));
        store.insert(
            &self.q_w2,
            Tensor::uniform_fan_in(&[1, self.hidden], self.hidden, rng),
        );
        store.insert(&self.q_b2, Tensor::uniform_fan_in(&[1], self.hidden, rng));
        store.insert(
            &self.v_w1,
            Tensor::uniform_fan_in(&[self.hidden, self.dense_in], self.dense_in, rng),
        );
        store.insert(&self.v_b1, Tensor::uniform_fan_in(&[self.hidden], self.dense_in, rng));
        store.insert(
            &self.v_w2,
            Tensor::uniform_fan_in(&[1, self.hidden], self.hidden, rng),
        );
        store.insert(&self.v_b2, Tensor::uniform_fan_in(&[1], self.hidden, rng));
    }

    fn dense_input(&self, s_feat: &[f64], hiddens: &[Vec<f64>]) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.dense_in);
        input.extend_from_slice(s_feat);
        for h in hiddens {
            input.extend_from_slice(h);
        }
        debug_assert_eq!(input.len(), self.dense_in);
        input
    }

    pub fn forward_q(
        &self,
        ps: &ParamStore,
        s_feat: &[f64],
        hiddens: &[Vec<f64>],
        actions: &[usize],
    ) -> Result<(f64, MixerQCache), NeuralError> {
        if hiddens.len() != self.f_total || actions.len() != self.f_total {
            return Err(NeuralError::ShapeMismatch {
                context: "Mixer::forward_q",
                expected: self.f_total,
                actual: hiddens.len().min(actions.len()),
            });
        }
        let dense_input = self.dense_input(s_feat, hiddens);
        let w1 = ps.get(&self.q_w1).data();
        let mut pre1 = vec![0.0; self.hidden];
        matvec(w1, self.hidden, self.dense_in, &dense_input, &mut pre1);
        let b1 = ps.get(&self.q_b1).data();
        let wa = ps.get(&self.q_wa).data();
        let acols = self.f_total * self.action_dim;
        for (i, p) in pre1.iter_mut().enumerate() {
            *p += b1[i];
            for (k, &a) in actions.iter().enumerate() {
                *p += wa[i * acols + k * self.action_dim + a];
            }
        }
        let mut act1 = pre1.clone();
        relu(&mut act1);
        let w2 = ps.get(&self.q_w2).data();
        let q = act1.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + ps.get(&self.q_b2).data()[0];
        Ok((q, MixerQCache { dense_input, pre1, act1 }))
    }

    /// Returns (d s_feat, per-agent d hidden).
    pub fn backward_q(
        &self,
        ps: &ParamStore,
        cache: &MixerQCache,
        actions: &[usize],
        dq: f64,
        grads: &mut ParamStore,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let w2 = ps.get(&self.q_w2).data();
        let d_act1: Vec<f64> = w2.iter().map(|w| w * dq).collect();
        outer_acc(grads.get_mut(&self.q_w2).data_mut(), &[dq], &cache.act1);
        grads.accumulate(&self.q_b2, &[dq]);
        let d_pre1 = relu_backward(&cache.pre1, &d_act1);
        outer_acc(grads.get_mut(&self.q_w1).data_mut(), &d_pre1, &cache.dense_input);
        grads.accumulate(&self.q_b1, &d_pre1);
        {
            let gwa = grads.get_mut(&self.q_wa).data_mut();
            let acols = self.f_total * self.action_dim;
            for (k, &a) in actions.iter().enumerate() {
                let col = k * self.action_dim + a;
                for (i, &d) in d_pre1.iter().enumerate() {
                    gwa[i * acols + col] += d;
                }
            }
        }
        let mut d_input = vec![0.0; self.dense_in];
        matvec_t_acc(
            ps.get(&self.q_w1).data(),
            self.hidden,
            self.dense_in,
            &d_pre1,
            &mut d_input,
        );
        self.split_input_grad(d_input)
    }

    pub fn forward_v(
        &self,
        ps: &ParamStore,
        s_feat: &[f64],
        hiddens: &[Vec<f64>],
    ) -> Result<(f64, MixerVCache), NeuralError> {
        let dense_input = self.dense_input(s_feat, hiddens);
        let w1 = ps.get(&self.v_w1).data();
        let mut pre1 = vec![0.0; self.hidden];
        matvec(w1, self.hidden, self.dense_in, &dense_input, &mut pre1);
        let b1 = ps.get(&self.v_b1).data();
        for (p, b) in pre1.iter_mut().zip(b1) {
            *p += b;
        }
        let mut act1 = pre1.clone();
        relu(&mut act1);
        let w2 = ps.get(&self.v_w2).data();
        let v = act1.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + ps.get(&self.v_b2).data()[0];
        Ok((v, MixerVCache { dense_input, pre1, act1 }))
    }

    /// V's gradient reaches only the head parameters unless
    /// `propagate_inputs` is set (a config switch; default off).
    pub fn backward_v(
        &self,
        ps: &ParamStore,
        cache: &MixerVCache,
        dv: f64,
        propagate_inputs: bool,
        grads: &mut ParamStore,
    ) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        let w2 = ps.get(&self.v_w2).data();
        let d_act1: Vec<f64> = w2.iter().map(|w| w * dv).collect();
        outer_acc(grads.get_mut(&self.v_w2).data_mut(), &[dv], &cache.act1);
        grads.accumulate(&self.v_b2, &[dv]);
        let d_pre1 = relu_backward(&cache.pre1, &d_act1);
        outer_acc(grads.get_mut(&self.v_w1).data_mut(), &d_pre1, &cache.dense_input);
        grads.accumulate(&self.v_b1, &d_pre1);
        if !propagate_inputs {
            return None;
        }
        let mut d_input = vec![0.0; self.dense_in];
        matvec_t_acc(
            ps.get(&self.v_w1).data(),
            self.hidden,
            self.dense_in,
            &d_pre1,
            &mut d_input,
        );
        Some(self.split_input_grad(d_input))
    }

    fn split_input_grad(&self, d_input: Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let s_dim = self.dense_in - self.f_total * self.hidden;
        let d_sfeat = d_input[..s_dim].to_vec();
        let d_hiddens = (0..self.f_total)
            .map(|k| d_input[s_dim + k * self.hidden..s_dim + (k + 1) * self.hidden].to_vec())
            .collect();
        (d_sfeat, d_hiddens)
    }
}

/// The summation unit: aggregates per-agent values at their selected
/// actions into Q'_tot.
pub fn sum_q(per_agent_qs: &[f64]) -> f64 {
    per_agent_qs.iter().sum()
}

/// Evaluation networks plus their frozen target copy.
#[derive(Debug, Clone)]
pub struct NetBundle {
    pub cfg: NetConfig,
    pub conv_global: Option<ConvBlock>,
    pub conv_local: Option<ConvBlock>,
    pub agents: BTreeMap<EntityClass, AgentNet>,
    pub mixer: Mixer,
    pub eval: ParamStore,
    pub target: ParamStore,
}

impl NetBundle {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self, MixingError> {
        if cfg.f_total() == 0 {
            return Err(MixingError::Incompatible("no entities".into()));
        }
        if !cfg.ablate_eiem && (cfg.grid.height < 4 || cfg.grid.width < 4) {
            return Err(MixingError::Incompatible(
                "convolutional extractors need a grid of at least 4x4".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eval = ParamStore::new();

        let (conv_global, conv_local) = if cfg.ablate_eiem {
            (None, None)
        } else {
            let g = ConvBlock::new(
                "cnn_global",
                crate::encoding::GLOBAL_CHANNELS,
                cfg.conv_channels,
                cfg.grid.height,
                cfg.grid.width,
            );
            let l = ConvBlock::new(
                "cnn_local",
                crate::encoding::LOCAL_CHANNELS,
                cfg.conv_channels,
                cfg.grid.height,
                cfg.grid.width,
            );
            g.register(&mut eval, &mut rng);
            l.register(&mut eval, &mut rng);
            (Some(g), Some(l))
        };

        let mut agents = BTreeMap::new();
        for class in cfg.classes_present() {
            let net = AgentNet::new(
                class,
                cfg.local_feat_dim(),
                cfg.hidden,
                cfg.action_dim(),
                cfg.ablate_sedm,
            );
            net.register(&mut eval, &mut rng);
            agents.insert(class, net);
        }

        let mixer = Mixer::new(&cfg);
        mixer.register(&mut eval, &mut rng);

        let target = eval.clone();
        Ok(NetBundle {
            cfg,
            conv_global,
            conv_local,
            agents,
            mixer,
            eval,
            target,
        })
    }

    pub fn for_scenario(
        spec: &ScenarioSpec,
        seed: u64,
        ablate_eiem: bool,
        ablate_sedm: bool,
    ) -> Result<Self, MixingError> {
        NetBundle::new(NetConfig::for_scenario(spec, ablate_eiem, ablate_sedm), seed)
    }

    pub fn agent_net(&self, class: EntityClass) -> &AgentNet {
        self.agents.get(&class).expect("class present in config")
    }

    pub fn agent_net_for(&self, entity: usize) -> &AgentNet {
        self.agent_net(self.cfg.entity_classes[entity])
    }

    /// Copy evaluation parameters into the target store.
    pub fn sync_targets(&mut self) {
        self.target = self.eval.clone();
    }

    /// Global-state features: convolutional extraction, or flattening under
    /// the EIEM ablation.
    pub fn global_features(
        &self,
        ps: &ParamStore,
        planes: &[f64],
    ) -> Result<(Vec<f64>, Option<ConvBlockCache>), NeuralError> {
        match &self.conv_global {
            Some(block) => {
                let (f, cache) = block.forward(ps, planes)?;
                Ok((f, Some(cache)))
            }
            None => Ok((planes.to_vec(), None)),
        }
    }

    pub fn global_features_backward(
        &self,
        ps: &ParamStore,
        cache: &Option<ConvBlockCache>,
        d_feat: &[f64],
        grads: &mut ParamStore,
    ) {
        if let (Some(block), Some(cache)) = (&self.conv_global, cache) {
            block.backward(ps, cache, d_feat, grads);
        }
    }

    /// Local-observation features: conv (or flat) planes, then the id
    /// one-hot and the power urgency pair.
    pub fn local_features(
        &self,
        ps: &ParamStore,
        planes: &[f64],
        entity: usize,
        urge: (f64, f64),
    ) -> Result<(Vec<f64>, Option<ConvBlockCache>), NeuralError> {
        let (mut feat, cache) = match &self.conv_local {
            Some(block) => {
                let (f, c) = block.forward(ps, planes)?;
                (f, Some(c))
            }
            None => (planes.to_vec(), None),
        };
        let f_total = self.cfg.f_total();
        let base = feat.len();
        feat.resize(base + f_total + 2, 0.0);
        feat[base + entity] = 1.0;
        feat[base + f_total] = urge.0;
        feat[base + f_total + 1] = urge.1;
        Ok((feat, cache))
    }

    pub fn local_features_backward(
        &self,
        ps: &ParamStore,
        cache: &Option<ConvBlockCache>,
        d_feat: &[f64],
        grads: &mut ParamStore,
    ) {
        if let (Some(block), Some(cache)) = (&self.conv_local, cache) {
            block.backward(ps, cache, &d_feat[..block.out_dim()], grads);
        }
    }

    /// Joint action-value and state-value from the evaluation heads.
    pub fn eval_total(
        &self,
        s_feat: &[f64],
        hiddens: &[Vec<f64>],
        actions: &[usize],
    ) -> Result<(f64, f64), MixingError> {
        let (q, _) = self.mixer.forward_q(&self.eval, s_feat, hiddens, actions)?;
        let (v, _) = self.mixer.forward_v(&self.eval, s_feat, hiddens)?;
        Ok((q, v))
    }

    /// Joint action-value under the frozen target parameters.
    pub fn target_total(
        &self,
        s_feat: &[f64],
        hiddens: &[Vec<f64>],
        actions: &[usize],
    ) -> Result<f64, MixingError> {
        let (q, _) = self.mixer.forward_q(&self.target, s_feat, hiddens, actions)?;
        Ok(q)
    }

    pub fn save_checkpoint(&self, w: impl std::io::Write) -> std::io::Result<()> {
        let meta = serde_json::to_string(&self.cfg).expect("config serializes");
        checkpoint::save(&self.eval, &meta, w)
    }

    pub fn load_checkpoint(r: impl std::io::Read) -> Result<Self, MixingError> {
        let (store, meta) = checkpoint::load(r)?;
        let cfg: NetConfig = serde_json::from_str(&meta)
            .map_err(|e| MixingError::Incompatible(format!("bad checkpoint metadata: {e}")))?;
        let mut bundle = NetBundle::new(cfg, 0)?;
        bundle.eval = store;
        bundle.sync_targets();
        Ok(bundle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub lambda_opt: f64,
    pub lambda_nopt: f64,
    /// Let V's gradient flow into the state features and hidden states.
    pub v_grad_to_inputs: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub td: f64,
    pub opt: f64,
    pub nopt: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.td.is_finite() && self.opt.is_finite() && self.nopt.is_finite()
    }
}

struct AgentEval {
    cache: AgentStepCache,
    conv_cache: Option<ConvBlockCache>,
    q: Vec<f64>,
}

struct EvalStep {
    s_cache: Option<ConvBlockCache>,
    agents: Vec<AgentEval>,
    q_cache: MixerQCache,
    v_cache: MixerVCache,
    qtot: f64,
    v: f64,
    sumq_sel: f64,
    sumq_max: f64,
    amax: Vec<usize>,
    actions: Vec<usize>,
}

struct TargetStep {
    s_feat: Vec<f64>,
    hiddens: Vec<Vec<f64>>,
    amax: Vec<usize>,
}

fn planes_f64(planes: &[f32]) -> Vec<f64> {
    planes.iter().map(|&v| v as f64).collect()
}

/// Allowed cell indices from the stored movable-range plane.
fn mask_from_step(step: &AgentStep, cells: usize) -> Vec<usize> {
    let mask_plane = &step.obs_planes[cells..2 * cells];
    mask_plane
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1.0)
        .map(|(i, _)| i)
        .collect()
}

/// Episode-batch loss and gradients for every evaluation parameter.
/// Gradients never touch the target store; perturbing target parameters
/// between syncs changes the loss value but not which parameters receive
/// gradient.
pub fn compute_loss(
    batch: &[&EpisodeRecord],
    bundle: &NetBundle,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, ParamStore), MixingError> {
    if batch.is_empty() {
        return Err(MixingError::EmptyBatch);
    }
    let total_steps: usize = batch.iter().map(|ep| ep.steps.len()).sum();
    if total_steps == 0 {
        return Err(MixingError::EmptyBatch);
    }
    let scale = 1.0 / total_steps as f64;

    let mut grads = bundle.eval.zeros_like();
    let mut sums = LossBreakdown::default();
    for ep in batch {
        episode_loss(bundle, ep, cfg, scale, &mut grads, &mut sums)?;
    }
    sums.td *= scale;
    sums.opt *= scale;
    sums.nopt *= scale;
    sums.total = sums.td + cfg.lambda_opt * sums.opt + cfg.lambda_nopt * sums.nopt;
    Ok((sums, grads))
}

fn episode_loss(
    bundle: &NetBundle,
    ep: &EpisodeRecord,
    cfg: &LossConfig,
    scale: f64,
    grads: &mut ParamStore,
    sums: &mut LossBreakdown,
) -> Result<(), MixingError> {
    let f = bundle.cfg.f_total();
    let cells = bundle.cfg.action_dim();
    let t_len = ep.steps.len();

    // Evaluation path, unrolled from zero hidden states, caches retained.
    let mut eval_steps: Vec<EvalStep> = Vec::with_capacity(t_len);
    let mut hidden: Vec<Vec<f64>> = (0..f)
        .map(|k| bundle.agent_net_for(k).zero_hidden())
        .collect();
    for step in &ep.steps {
        let (s_feat, s_cache) = bundle.global_features(&bundle.eval, &planes_f64(&step.global_planes))?;
        let mut agents = Vec::with_capacity(f);
        let mut amax = Vec::with_capacity(f);
        let mut actions = Vec::with_capacity(f);
        for (k, astep) in step.agents.iter().enumerate() {
            let urge = (astep.urge.0 as f64, astep.urge.1 as f64);
            let (feat, conv_cache) =
                bundle.local_features(&bundle.eval, &planes_f64(&astep.obs_planes), k, urge)?;
            let net = bundle.agent_net_for(k);
            let (q, h_new, cache) = net.q_values_cached(&bundle.eval, &feat, &hidden[k])?;
            hidden[k] = h_new;
            let allowed = mask_from_step(astep, cells);
            amax.push(masked_argmax(&q, &allowed)?);
            actions.push(astep.action as usize);
            agents.push(AgentEval { cache, conv_cache, q });
        }
        let hiddens: Vec<Vec<f64>> = agents.iter().map(|a| a.cache.h_new.clone()).collect();
        let (qtot, q_cache) = bundle.mixer.forward_q(&bundle.eval, &s_feat, &hiddens, &actions)?;
        let (v, v_cache) = bundle.mixer.forward_v(&bundle.eval, &s_feat, &hiddens)?;
        let sumq_sel = sum_q(
            &agents
                .iter()
                .zip(&actions)
                .map(|(a, &act)| a.q[act])
                .collect::<Vec<f64>>(),
        );
        let sumq_max = sum_q(
            &agents
                .iter()
                .zip(&amax)
                .map(|(a, &act)| a.q[act])
                .collect::<Vec<f64>>(),
        );
        eval_steps.push(EvalStep {
            s_cache,
            agents,
            q_cache,
            v_cache,
            qtot,
            v,
            sumq_sel,
            sumq_max,
            amax,
            actions,
        });
    }

    // Target path, fully frozen: target extractors, target agent unroll,
    // target argmax.
    let mut target_steps: Vec<TargetStep> = Vec::with_capacity(t_len);
    let mut thidden: Vec<Vec<f64>> = (0..f)
        .map(|k| bundle.agent_net_for(k).zero_hidden())
        .collect();
    for step in &ep.steps {
        let (s_feat, _) = bundle.global_features(&bundle.target, &planes_f64(&step.global_planes))?;
        let mut amax = Vec::with_capacity(f);
        for (k, astep) in step.agents.iter().enumerate() {
            let urge = (astep.urge.0 as f64, astep.urge.1 as f64);
            let (feat, _) =
                bundle.local_features(&bundle.target, &planes_f64(&astep.obs_planes), k, urge)?;
            let net = bundle.agent_net_for(k);
            let (q, h_new) = net.q_values(&bundle.target, &feat, &thidden[k])?;
            thidden[k] = h_new;
            let allowed = mask_from_step(astep, cells);
            amax.push(masked_argmax(&q, &allowed)?);
        }
        target_steps.push(TargetStep {
            s_feat,
            hiddens: thidden.clone(),
            amax,
        });
    }

    // Backward sweep; recurrent gradient flows from t+1 into t.
    let mut dh_next: Vec<Vec<f64>> = (0..f)
        .map(|k| bundle.agent_net_for(k).zero_hidden())
        .collect();
    for t in (0..t_len).rev() {
        let es = &eval_steps[t];
        let step = &ep.steps[t];

        let y = if step.te == 1 {
            let next = &target_steps[t + 1];
            let qhat_next = bundle
                .mixer
                .forward_q(&bundle.target, &next.s_feat, &next.hiddens, &next.amax)?
                .0;
            step.reward + cfg.gamma * qhat_next
        } else {
            step.reward
        };
        let ts = &target_steps[t];
        let qhat_opt = bundle
            .mixer
            .forward_q(&bundle.target, &ts.s_feat, &ts.hiddens, &es.amax)?
            .0;
        let qhat_sel = bundle
            .mixer
            .forward_q(&bundle.target, &ts.s_feat, &ts.hiddens, &es.actions)?
            .0;

        let d_td = es.qtot - y;
        let e_opt = es.sumq_max - qhat_opt + es.v;
        let e_nopt = (es.sumq_sel - qhat_sel + es.v).min(0.0);
        sums.td += d_td * d_td;
        sums.opt += e_opt * e_opt;
        sums.nopt += e_nopt * e_nopt;

        let g_td = 2.0 * d_td * scale;
        let g_opt = 2.0 * cfg.lambda_opt * e_opt * scale;
        let g_nopt = 2.0 * cfg.lambda_nopt * e_nopt * scale;

        let (mut d_sfeat, mut dh_mix) =
            bundle
                .mixer
                .backward_q(&bundle.eval, &es.q_cache, &es.actions, g_td, grads);
        if let Some((d_sv, dh_v)) = bundle.mixer.backward_v(
            &bundle.eval,
            &es.v_cache,
            g_opt + g_nopt,
            cfg.v_grad_to_inputs,
            grads,
        ) {
            for (a, b) in d_sfeat.iter_mut().zip(&d_sv) {
                *a += b;
            }
            for (hk, vk) in dh_mix.iter_mut().zip(&dh_v) {
                for (a, b) in hk.iter_mut().zip(vk) {
                    *a += b;
                }
            }
        }
        bundle.global_features_backward(&bundle.eval, &es.s_cache, &d_sfeat, grads);

        for k in (0..f).rev() {
            let ae = &es.agents[k];
            let mut dq = vec![0.0; cells];
            dq[es.amax[k]] += g_opt;
            dq[es.actions[k]] += g_nopt;
            let mut dh_extra = std::mem::take(&mut dh_next[k]);
            for (a, b) in dh_extra.iter_mut().zip(&dh_mix[k]) {
                *a += b;
            }
            let net = bundle.agent_net_for(k);
            let (d_feat, dh_prev) =
                net.backward_step(&bundle.eval, &ae.cache, &dq, &dh_extra, grads);
            dh_next[k] = dh_prev;
            bundle.local_features_backward(&bundle.eval, &ae.conv_cache, &d_feat, grads);
        }
    }
    Ok(())
}
