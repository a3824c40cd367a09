//! Exact belief-state machinery on small explicit models: the recursive
//! Bayes filter and a brute-force history posterior used to validate it.
//!
//! The filter operates on single-agent semantics over an enumerable state
//! space with explicit transition and observation tables. Chaining the
//! recursion must reproduce the exact posterior over the full
//! action-observation history; that equality is the executable content of
//! the Markov property of belief states.

use serde::{Deserialize, Serialize};

pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum BeliefError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("observation inconsistent with the current belief (zero normalizer)")]
    InconsistentObservation,
    #[error("enumeration guard exceeded: {terms} sequences")]
    EnumerationGuard { terms: u128 },
}

/// Probability distribution over the model's states.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector(pub Vec<f64>);

impl BeliefVector {
    pub fn uniform(n: usize) -> Self {
        BeliefVector(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut v = vec![0.0; n];
        v[state] = 1.0;
        BeliefVector(v)
    }

    pub fn normalization_error(&self) -> f64 {
        (self.0.iter().sum::<f64>() - 1.0).abs()
    }

    pub fn max_abs_diff(&self, other: &BeliefVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A tiny explicit model: `transition[a][s][s']` and `observation[a][s'][o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyModel {
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    /// P(s' | s, a), indexed `[a][s][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// P(o | s', a), indexed `[a][s'][o]`.
    pub observation: Vec<Vec<Vec<f64>>>,
}

impl TinyModel {
    pub fn validate(&self) -> Result<(), BeliefError> {
        let fail = |m: String| Err(BeliefError::InvalidModel(m));
        if self.states == 0 || self.actions == 0 || self.observations == 0 {
            return fail("states, actions, observations must all be positive".into());
        }
        if self.transition.len() != self.actions || self.observation.len() != self.actions {
            return fail("tables must have one block per action".into());
        }
        for a in 0..self.actions {
            if self.transition[a].len() != self.states || self.observation[a].len() != self.states {
                return fail(format!("action {a}: tables must have one row per state"));
            }
            for s in 0..self.states {
                let t_row = &self.transition[a][s];
                if t_row.len() != self.states {
                    return fail(format!("transition[{a}][{s}] has wrong width"));
                }
                if t_row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return fail(format!("transition[{a}][{s}] has out-of-range entries"));
                }
                if (t_row.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL {
                    return fail(format!("transition[{a}][{s}] does not sum to 1"));
                }
                let o_row = &self.observation[a][s];
                if o_row.len() != self.observations {
                    return fail(format!("observation[{a}][{s}] has wrong width"));
                }
                if o_row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return fail(format!("observation[{a}][{s}] has out-of-range entries"));
                }
                if (o_row.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL {
                    return fail(format!("observation[{a}][{s}] does not sum to 1"));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, BeliefError> {
        let model: TinyModel = serde_json::from_str(text)
            .map_err(|e| BeliefError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// One Bayes-filter update:
///   b'(s') = O(s', a, o) * sum_s T(s' | s, a) * b(s) / normalizer.
pub fn belief_update(
    b: &BeliefVector,
    action: usize,
    observation: usize,
    model: &TinyModel,
) -> Result<BeliefVector, BeliefError> {
    let n = model.states;
    let mut predicted = vec![0.0; n];
    for s in 0..n {
        let bs = b.0[s];
        if bs == 0.0 {
            continue;
        }
        for (s_next, p) in model.transition[action][s].iter().enumerate() {
            predicted[s_next] += p * bs;
        }
    }
    let mut posterior: Vec<f64> = (0..n)
        .map(|s_next| model.observation[action][s_next][observation] * predicted[s_next])
        .collect();
    let normalizer: f64 = posterior.iter().sum();
    if normalizer <= 0.0 {
        return Err(BeliefError::InconsistentObservation);
    }
    for p in posterior.iter_mut() {
        *p /= normalizer;
    }
    Ok(BeliefVector(posterior))
}

/// Exact posterior over the current state given the whole history, by
/// summing over every state sequence consistent with it. Exponential in the
/// history length; guarded at one million sequences.
pub fn brute_force_posterior(
    history: &[(usize, usize)],
    model: &TinyModel,
    b0: &BeliefVector,
) -> Result<BeliefVector, BeliefError> {
    let n = model.states as u128;
    let terms = n
        .checked_pow(history.len() as u32 + 1)
        .ok_or(BeliefError::EnumerationGuard { terms: u128::MAX })?;
    if terms > 1_000_000 {
        return Err(BeliefError::EnumerationGuard { terms });
    }
    if history.is_empty() {
        return Ok(b0.clone());
    }

    let states = model.states;
    let t_len = history.len();
    let mut posterior = vec![0.0; states];
    // Sequence index decodes to (s_0, ..., s_t) in base `states`.
    let total: usize = states.pow(t_len as u32 + 1);
    for seq in 0..total {
        let mut decode = seq;
        let mut path = Vec::with_capacity(t_len + 1);
        for _ in 0..=t_len {
            path.push(decode % states);
            decode /= states;
        }
        let mut weight = b0.0[path[0]];
        for (i, &(action, obs)) in history.iter().enumerate() {
            if weight == 0.0 {
                break;
            }
            let (s, s_next) = (path[i], path[i + 1]);
            weight *= model.transition[action][s][s_next];
            weight *= model.observation[action][s_next][obs];
        }
        posterior[path[t_len]] += weight;
    }
    let normalizer: f64 = posterior.iter().sum();
    if normalizer <= 0.0 {
        return Err(BeliefError::InconsistentObservation);
    }
    for p in posterior.iter_mut() {
        *p /= normalizer;
    }
    Ok(BeliefVector(posterior))
}

/// Random stochastic model for property tests; rows are normalized uniform
/// draws, so every entry is strictly positive.
pub fn random_model(
    states: usize,
    actions: usize,
    observations: usize,
    rng: &mut impl rand::Rng,
) -> TinyModel {
    let mut row = |width: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..width).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    };
    let transition = (0..actions)
        .map(|_| (0..states).map(|_| row(states)).collect())
        .collect();
    let observation = (0..actions)
        .map(|_| (0..states).map(|_| row(observations)).collect())
        .collect();
    TinyModel {
        states,
        actions,
        observations,
        transition,
        observation,
    }
}

/// Simulate a history by sampling the hidden process, so observations are
/// always consistent with the model.
pub fn sample_history(
    model: &TinyModel,
    b0: &BeliefVector,
    length: usize,
    rng: &mut impl rand::Rng,
) -> Vec<(usize, usize)> {
    let draw = |weights: &[f64], rng: &mut dyn FnMut() -> f64| -> usize {
        let u = rng();
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u <= acc {
                return i;
            }
        }
        weights.len() - 1
    };
    let mut uniform = || rng.random::<f64>();
    let mut state = draw(&b0.0, &mut uniform);
    let mut history = Vec::with_capacity(length);
    for _ in 0..length {
        let action = (uniform() * model.actions as f64) as usize % model.actions;
        state = draw(&model.transition[action][state], &mut uniform);
        let obs = draw(&model.observation[action][state], &mut uniform);
        history.push((action, obs));
    }
    history
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_chain() -> TinyModel {
        TinyModel {
            states: 2,
            actions: 1,
            observations: 2,
            transition: vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]],
            observation: vec![vec![vec![0.7, 0.3], vec![0.4, 0.6]]],
        }
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut model = two_state_chain();
        model.transition[0][0][0] = 0.5; // row sums to 0.6
        assert!(model.validate().is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let model = two_state_chain();
        let text = model.to_text();
        assert_eq!(TinyModel::from_text(&text).unwrap(), model);
    }

    #[test]
    fn delta_likelihood_collapses_to_point_mass() {
        // Observation 0 only ever emitted from state 0.
        let model = TinyModel {
            states: 2,
            actions: 1,
            observations: 2,
            transition: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            observation: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        };
        let b = BeliefVector::uniform(2);
        let b1 = belief_update(&b, 0, 0, &model).unwrap();
        assert_eq!(b1, BeliefVector::point_mass(2, 0));
    }

    #[test]
    fn uninformative_observations_reduce_to_prediction() {
        // Identical observation rows: the likelihood cancels and the update
        // is the prior pushed through the transition only.
        let model = TinyModel {
            states: 2,
            actions: 1,
            observations: 2,
            transition: vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]],
            observation: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
        };
        let b = BeliefVector(vec![0.3, 0.7]);
        let b1 = belief_update(&b, 0, 1, &model).unwrap();
        let predicted = vec![0.3 * 0.9 + 0.7 * 0.2, 0.3 * 0.1 + 0.7 * 0.8];
        assert!(b1.max_abs_diff(&BeliefVector(predicted)) < 1e-15);
    }

    #[test]
    fn two_state_update_matches_hand_computation() {
        let model = two_state_chain();
        let b = BeliefVector(vec![0.6, 0.4]);
        // Predict: [0.6*0.9 + 0.4*0.2, 0.6*0.1 + 0.4*0.8] = [0.62, 0.38].
        // Observe o=1: [0.62*0.3, 0.38*0.6] = [0.186, 0.228]; norm 0.414.
        let b1 = belief_update(&b, 0, 1, &model).unwrap();
        let expect = BeliefVector(vec![0.186 / 0.414, 0.228 / 0.414]);
        assert!(b1.max_abs_diff(&expect) < 1e-12);
        assert!(b1.normalization_error() < 1e-12);
    }

    #[test]
    fn zero_normalizer_is_reported() {
        let model = TinyModel {
            states: 2,
            actions: 1,
            observations: 2,
            transition: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            observation: vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]],
        };
        // Observation 1 has probability zero everywhere.
        let b = BeliefVector::uniform(2);
        assert!(matches!(
            belief_update(&b, 0, 1, &model),
            Err(BeliefError::InconsistentObservation)
        ));
    }

    #[test]
    fn empty_history_returns_prior() {
        let model = two_state_chain();
        let b0 = BeliefVector(vec![0.25, 0.75]);
        let post = brute_force_posterior(&[], &model, &b0).unwrap();
        assert_eq!(post, b0);
    }

    #[test]
    fn length_one_history_equals_single_update() {
        let model = two_state_chain();
        let b0 = BeliefVector::uniform(2);
        let brute = brute_force_posterior(&[(0, 1)], &model, &b0).unwrap();
        let chained = belief_update(&b0, 0, 1, &model).unwrap();
        assert!(brute.max_abs_diff(&chained) < 1e-14);
    }

    #[test]
    fn chained_updates_match_brute_force_over_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..60 {
            let states = 2 + (trial % 3);
            let model = random_model(states, 1 + (trial % 3), 2 + (trial % 2), &mut rng);
            model.validate().unwrap();
            let b0 = BeliefVector::uniform(states);
            let history = sample_history(&model, &b0, 5, &mut rng);
            let mut chained = b0.clone();
            for &(a, o) in &history {
                chained = belief_update(&chained, a, o, &model).unwrap();
                assert!(chained.normalization_error() < ROW_SUM_TOL);
            }
            let brute = brute_force_posterior(&history, &model, &b0).unwrap();
            assert!(
                chained.max_abs_diff(&brute) < 1e-10,
                "trial {trial}: {:?} vs {:?}",
                chained,
                brute
            );
        }
    }

    #[test]
    fn deterministic_models_keep_point_masses() {
        // Cyclic deterministic transitions with identity observations.
        let model = TinyModel {
            states: 3,
            actions: 1,
            observations: 3,
            transition: vec![vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ]],
            observation: vec![vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ]],
        };
        let mut b = BeliefVector::point_mass(3, 0);
        let mut state = 0usize;
        for _ in 0..9 {
            state = (state + 1) % 3;
            b = belief_update(&b, 0, state, &model).unwrap();
            assert_eq!(b, BeliefVector::point_mass(3, state));
        }
    }

    #[test]
    fn enumeration_guard_trips_on_large_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(10, 2, 2, &mut rng);
        let b0 = BeliefVector::uniform(10);
        let history: Vec<(usize, usize)> = (0..8).map(|i| (i % 2, i % 2)).collect();
        assert!(matches!(
            brute_force_posterior(&history, &model, &b0),
            Err(BeliefError::EnumerationGuard { .. })
        ));
    }
}
