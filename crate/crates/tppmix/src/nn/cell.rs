//! Dense layers and the two recurrent cells used across the crate.
//!
//! The plain cell is `h_i = tanh(W_in x_i + W_rec h_{i-1})`, a single
//! hyperbolic-tangent recurrence without bias. The gated variant is a
//! standard long short-term memory cell. Which one a model uses is a
//! configuration choice; both expose the same step interface.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Vc};
use super::param::{Init, ParamId, ParamSet};

/// Affine map `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let w = ps.add(&format!("{name}.w"), out_dim, in_dim, Init::FanIn, rng);
        let b = ps.add_vector(&format!("{name}.b"), out_dim, Init::Zeros, rng);
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Vc) -> Vc {
        let z = g.matvec(self.w, x);
        g.add_bias_v(z, self.b)
    }
}

/// Recurrent cell flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    /// `h = tanh(W_in x + W_rec h_prev)`, no bias.
    Tanh,
    /// Gated long short-term memory cell.
    #[default]
    Lstm,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Tanh => "tanh",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(CellKind::Tanh),
            "lstm" => Some(CellKind::Lstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Gate {
    w_in: ParamId,
    w_rec: ParamId,
    bias: ParamId,
}

impl Gate {
    fn new<R: Rng>(ps: &mut ParamSet, name: &str, in_dim: usize, d: usize, bias: f64, rng: &mut R) -> Self {
        Self {
            w_in: ps.add(&format!("{name}.wi"), d, in_dim, Init::FanIn, rng),
            w_rec: ps.add(&format!("{name}.wr"), d, d, Init::FanIn, rng),
            bias: ps.add_vector(&format!("{name}.b"), d, Init::Const(bias), rng),
        }
    }

    fn pre_activation(&self, g: &mut Graph, x: Vc, h: Vc) -> Vc {
        let zi = g.matvec(self.w_in, x);
        let zr = g.matvec(self.w_rec, h);
        let z = g.add_v(zi, zr);
        g.add_bias_v(z, self.bias)
    }
}

#[derive(Debug, Clone)]
enum CellParams {
    Tanh { w_in: ParamId, w_rec: ParamId },
    Lstm { input: Gate, forget: Gate, output: Gate, candidate: Gate },
}

/// Hidden state threaded through a rollout or a teacher-forced replay.
/// Handles point into the graph, so gradients flow through time.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub hidden: Vc,
    pub memory: Option<Vc>,
}

/// One recurrent cell with its parameters registered in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    params: CellParams,
}

impl RecurrentCell {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        name: &str,
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let params = match kind {
            CellKind::Tanh => CellParams::Tanh {
                w_in: ps.add(&format!("{name}.win"), hidden_dim, input_dim, Init::FanIn, rng),
                w_rec: ps.add(&format!("{name}.wrec"), hidden_dim, hidden_dim, Init::FanIn, rng),
            },
            CellKind::Lstm => CellParams::Lstm {
                input: Gate::new(ps, &format!("{name}.i"), input_dim, hidden_dim, 0.0, rng),
                // Forget bias starts at 1 so early memories survive.
                forget: Gate::new(ps, &format!("{name}.f"), input_dim, hidden_dim, 1.0, rng),
                output: Gate::new(ps, &format!("{name}.o"), input_dim, hidden_dim, 0.0, rng),
                candidate: Gate::new(ps, &format!("{name}.c"), input_dim, hidden_dim, 0.0, rng),
            },
        };
        Self { kind, input_dim, hidden_dim, params }
    }

    /// Zero initial state recorded on `g`.
    pub fn init_state(&self, g: &mut Graph) -> CellState {
        CellState {
            hidden: g.zeros(self.hidden_dim),
            memory: match self.kind {
                CellKind::Tanh => None,
                CellKind::Lstm => Some(g.zeros(self.hidden_dim)),
            },
        }
    }

    /// Advances the recurrence by one input.
    pub fn step(&self, g: &mut Graph, state: &CellState, x: Vc) -> CellState {
        match &self.params {
            CellParams::Tanh { w_in, w_rec } => {
                let zi = g.matvec(*w_in, x);
                let zr = g.matvec(*w_rec, state.hidden);
                let z = g.add_v(zi, zr);
                CellState { hidden: g.tanh_v(z), memory: None }
            }
            CellParams::Lstm { input, forget, output, candidate } => {
                let h = state.hidden;
                let c = state.memory.expect("lstm state carries cell memory");
                let zi = input.pre_activation(g, x, h);
                let zf = forget.pre_activation(g, x, h);
                let zo = output.pre_activation(g, x, h);
                let zc = candidate.pre_activation(g, x, h);
                let i = g.sigmoid_v(zi);
                let f = g.sigmoid_v(zf);
                let o = g.sigmoid_v(zo);
                let cand = g.tanh_v(zc);
                let keep = g.mul_v(f, c);
                let write = g.mul_v(i, cand);
                let c_new = g.add_v(keep, write);
                let c_act = g.tanh_v(c_new);
                CellState { hidden: g.mul_v(o, c_act), memory: Some(c_new) }
            }
        }
    }
}
