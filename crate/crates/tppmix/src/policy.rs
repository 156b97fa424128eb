//! Stochastic recurrent policy over inter-event times.
//!
//! The policy reads history through a recurrent cell (the cell consumes each
//! inter-event time), maps the hidden state to a positive rate via
//! `softplus(w·h + b)`, and samples the next inter-event time from an
//! exponential or Rayleigh distribution parameterized by that rate. Rollouts
//! stop at the horizon with the overshooting event discarded; log-densities
//! are recorded on a graph so policy-gradient updates and teacher-forced
//! likelihood evaluations differentiate through the whole unrolled
//! recurrence.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::checkpoint::{self, CheckpointError, Meta};
use crate::nn::{softplus, softplus_inverse, CellKind, Graph, ParamId, ParamSet, RecurrentCell, Sc};
use crate::sim::{DataError, EventSequence};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("rollout exceeded {cap} events before reaching the horizon")]
    RunawayRollout { cap: usize },
    #[error("non-positive inter-event time at step {0}")]
    NonPositiveGap(usize),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Family of the per-step action density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActionDistribution {
    /// `π(a|θ) = θ e^{-θ a}`.
    Exponential,
    /// `π(a|θ) = θ a e^{-θ a²/2}`.
    #[default]
    Rayleigh,
}

impl ActionDistribution {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionDistribution::Exponential => "exponential",
            ActionDistribution::Rayleigh => "rayleigh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exponential" => Some(ActionDistribution::Exponential),
            "rayleigh" => Some(ActionDistribution::Rayleigh),
            _ => None,
        }
    }
}

/// Inverse-CDF sample for `u ∈ (0, 1)`.
pub fn action_from_uniform(dist: ActionDistribution, theta: f64, u: f64) -> f64 {
    match dist {
        ActionDistribution::Exponential => -u.ln() / theta,
        ActionDistribution::Rayleigh => (-2.0 * u.ln() / theta).sqrt(),
    }
}

/// Log-density of `a` under the chosen family, on plain values.
pub fn log_density(dist: ActionDistribution, theta: f64, a: f64) -> f64 {
    match dist {
        ActionDistribution::Exponential => theta.ln() - theta * a,
        ActionDistribution::Rayleigh => theta.ln() + a.ln() - theta * a * a / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden_dim: usize,
    pub cell: CellKind,
    pub distribution: ActionDistribution,
    /// Runaway guard: a rollout aborts after this many events.
    pub max_events: usize,
    /// Multiplier applied to actions before they enter the recurrence;
    /// keeps gate pre-activations in range when typical gaps are large.
    /// Sampling and densities are unaffected.
    pub input_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            cell: CellKind::Lstm,
            distribution: ActionDistribution::Rayleigh,
            max_events: 10_000,
            input_scale: 1.0,
        }
    }
}

/// One (state, action) pair along a rollout.
#[derive(Debug, Clone)]
pub struct StateAction {
    /// Pre-action hidden embedding `h_{i-1}`.
    pub state: Vec<f64>,
    /// Inter-event time `a_i > 0`.
    pub action: f64,
    /// Absolute event time `t_i`.
    pub time: f64,
}

/// Value-level rollout output.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub sequence: EventSequence,
    pub steps: Vec<StateAction>,
    pub log_probs: Vec<f64>,
}

/// Rollout recorded on a caller-owned graph; log-prob nodes stay
/// differentiable with respect to the policy parameters.
#[derive(Debug, Clone)]
pub struct RecordedRollout {
    pub times: Vec<f64>,
    pub actions: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub log_prob_nodes: Vec<Sc>,
    pub log_probs: Vec<f64>,
}

/// The stochastic recurrent policy.
#[derive(Debug, Clone)]
pub struct Policy {
    pub config: PolicyConfig,
    pub params: ParamSet,
    pub(crate) cell: RecurrentCell,
    pub(crate) head_w: ParamId,
    pub(crate) head_b: ParamId,
}

impl Policy {
    pub fn new<R: Rng>(config: PolicyConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let cell = RecurrentCell::new(&mut params, "rnn", config.cell, 1, config.hidden_dim, rng);
        let head_w = params.add_vector("head.w", config.hidden_dim, crate::nn::Init::FanIn, rng);
        let head_b = params.add_scalar("head.b", crate::nn::Init::Zeros, rng);
        Self { config, params, cell, head_w, head_b }
    }

    /// Sets the rate head bias so that the rate at the initial state is
    /// approximately `rate`; useful for starting near a target event count.
    pub fn set_initial_rate(&mut self, rate: f64) {
        self.params.get_mut(self.head_b).value[0] = softplus_inverse(rate);
    }

    /// Strictly positive rate for a hidden state, on plain values.
    pub fn rate(&self, hidden: &[f64]) -> f64 {
        assert_eq!(hidden.len(), self.config.hidden_dim, "hidden state dimension mismatch");
        let w = self.params.value(self.head_w);
        let z: f64 =
            w.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + self.params.value(self.head_b)[0];
        softplus(z)
    }

    fn rate_node(&self, g: &mut Graph, hidden: crate::nn::Vc) -> Sc {
        let z = g.dot_param(self.head_w, hidden);
        let z = g.add_bias_s(z, self.head_b);
        g.softplus_s(z)
    }

    fn log_density_node(&self, g: &mut Graph, theta: Sc, a: f64) -> Sc {
        let ln_theta = g.ln_s(theta);
        match self.config.distribution {
            ActionDistribution::Exponential => {
                let lin = g.mul_const(theta, a);
                g.sub_s(ln_theta, lin)
            }
            ActionDistribution::Rayleigh => {
                let quad = g.mul_const(theta, a * a / 2.0);
                let diff = g.sub_s(ln_theta, quad);
                let ln_a = g.const_s(a.ln());
                g.add_s(diff, ln_a)
            }
        }
    }

    /// Samples one action and its log-density from the current hidden state.
    pub fn sample_action<R: Rng>(&self, hidden: &[f64], rng: &mut R) -> (f64, f64) {
        let theta = self.rate(hidden);
        let a = action_from_uniform(self.config.distribution, theta, open_unit(rng));
        (a, log_density(self.config.distribution, theta, a))
    }

    /// Samples a full trajectory on a caller-owned graph.
    pub fn rollout_recorded<R: Rng>(
        &self,
        g: &mut Graph,
        t_max: f64,
        rng: &mut R,
    ) -> Result<RecordedRollout, PolicyError> {
        if !(t_max > 0.0) {
            return Err(PolicyError::BadHorizon(t_max));
        }
        let mut state = self.cell.init_state(g);
        let mut out = RecordedRollout {
            times: Vec::new(),
            actions: Vec::new(),
            states: Vec::new(),
            log_prob_nodes: Vec::new(),
            log_probs: Vec::new(),
        };
        let mut t = 0.0;
        loop {
            let theta_node = self.rate_node(g, state.hidden);
            let theta = g.value_s(theta_node);
            let a = action_from_uniform(self.config.distribution, theta, open_unit(rng));
            if t + a > t_max {
                break; // overshooting event discarded
            }
            if out.times.len() >= self.config.max_events {
                return Err(PolicyError::RunawayRollout { cap: self.config.max_events });
            }
            t += a;
            out.states.push(g.value_v(state.hidden).to_vec());
            out.times.push(t);
            out.actions.push(a);
            let lp = self.log_density_node(g, theta_node, a);
            out.log_prob_nodes.push(lp);
            out.log_probs.push(g.value_s(lp));
            let a_s = g.const_s(a * self.config.input_scale);
            let a_v = g.scalar_to_vec(a_s);
            state = self.cell.step(g, &state, a_v);
        }
        Ok(out)
    }

    /// Samples a trajectory and returns plain values.
    pub fn rollout<R: Rng>(&self, t_max: f64, rng: &mut R) -> Result<Rollout, PolicyError> {
        let g = &mut Graph::new(&self.params);
        let rec = self.rollout_recorded(g, t_max, rng)?;
        let sequence = EventSequence::new(rec.times.clone(), t_max)?;
        let steps = rec
            .states
            .into_iter()
            .zip(rec.actions.iter().zip(&rec.times))
            .map(|(state, (&action, &time))| StateAction { state, action, time })
            .collect();
        Ok(Rollout { sequence, steps, log_probs: rec.log_probs })
    }

    /// Teacher-forced replay: per-step log-density nodes for an observed
    /// sequence, recorded on `g`.
    pub fn log_prob_nodes(
        &self,
        g: &mut Graph,
        seq: &EventSequence,
    ) -> Result<Vec<Sc>, PolicyError> {
        let mut state = self.cell.init_state(g);
        let mut nodes = Vec::with_capacity(seq.len());
        for (i, a) in seq.inter_event_times().into_iter().enumerate() {
            if !(a > 0.0) {
                return Err(PolicyError::NonPositiveGap(i));
            }
            let theta_node = self.rate_node(g, state.hidden);
            nodes.push(self.log_density_node(g, theta_node, a));
            let a_s = g.const_s(a * self.config.input_scale);
            let a_v = g.scalar_to_vec(a_s);
            state = self.cell.step(g, &state, a_v);
        }
        Ok(nodes)
    }

    /// Total log-density of a sequence plus its parameter gradients.
    pub fn log_prob_grads(&self, seq: &EventSequence) -> Result<(f64, crate::nn::GradStore), PolicyError> {
        let g = &mut Graph::new(&self.params);
        let nodes = self.log_prob_nodes(g, seq)?;
        let terms: Vec<(Sc, f64)> = nodes.into_iter().map(|n| (n, 1.0)).collect();
        let total = g.weighted_sum(&terms);
        Ok((g.value_s(total), g.backward(total)))
    }

    /// Total and per-step log-density of a sequence, plus the per-step
    /// entropy terms `-log π`.
    pub fn log_prob_sequence(&self, seq: &EventSequence) -> Result<SequenceLogProb, PolicyError> {
        let g = &mut Graph::new(&self.params);
        let nodes = self.log_prob_nodes(g, seq)?;
        let per_step: Vec<f64> = nodes.iter().map(|&n| g.value_s(n)).collect();
        let total = per_step.iter().sum();
        let entropy_terms = per_step.iter().map(|lp| -lp).collect();
        Ok(SequenceLogProb { total, per_step, entropy_terms })
    }

    pub fn save_meta(&self) -> Meta {
        vec![
            ("kind".to_string(), "policy".to_string()),
            ("cell".to_string(), self.config.cell.as_str().to_string()),
            ("distribution".to_string(), self.config.distribution.as_str().to_string()),
            ("hidden_dim".to_string(), self.config.hidden_dim.to_string()),
            ("max_events".to_string(), self.config.max_events.to_string()),
            ("input_scale".to_string(), format!("{:.16e}", self.config.input_scale)),
        ]
    }

    pub fn write_checkpoint<W: std::io::Write>(&self, out: &mut W) -> Result<(), PolicyError> {
        checkpoint::write_params(out, &self.save_meta(), &self.params)?;
        Ok(())
    }

    pub fn read_checkpoint<R: std::io::BufRead>(input: R) -> Result<Self, PolicyError> {
        let (meta, loaded) = checkpoint::read_params(input)?;
        let get = |key: &str| {
            checkpoint::meta_value(&meta, key)
                .ok_or_else(|| CheckpointError::Mismatch(format!("missing meta key {key}")))
        };
        let config = PolicyConfig {
            hidden_dim: get("hidden_dim")?
                .parse()
                .map_err(|_| CheckpointError::Mismatch("bad hidden_dim".into()))?,
            cell: CellKind::parse(get("cell")?)
                .ok_or_else(|| CheckpointError::Mismatch("bad cell kind".into()))?,
            distribution: ActionDistribution::parse(get("distribution")?)
                .ok_or_else(|| CheckpointError::Mismatch("bad distribution".into()))?,
            max_events: get("max_events")?
                .parse()
                .map_err(|_| CheckpointError::Mismatch("bad max_events".into()))?,
            input_scale: get("input_scale")?
                .parse()
                .map_err(|_| CheckpointError::Mismatch("bad input_scale".into()))?,
        };
        let mut rng = crate::seeding::rng_from(0);
        let mut policy = Policy::new(config, &mut rng);
        checkpoint::load_into(&mut policy.params, &loaded)?;
        Ok(policy)
    }
}

/// Output of [`Policy::log_prob_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceLogProb {
    pub total: f64,
    pub per_step: Vec<f64>,
    /// `-log π(a_i | s_i)` per step.
    pub entropy_terms: Vec<f64>,
}

pub(crate) fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}
