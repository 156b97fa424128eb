//! Named parameter storage shared by every model in the crate.
//!
//! A [`ParamSet`] owns a flat list of [`Parameter`]s (row-major matrices,
//! vectors and scalars are matrices with one column). Gradients accumulate
//! into the set via [`ParamSet::accumulate`] and are consumed by the
//! optimizer, which zeroes them again after each step.

use rand::Rng;

/// Handle to a parameter inside a [`ParamSet`].
///
/// Ids are only meaningful for the set that created them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `[-limit, limit]`.
    Uniform { limit: f64 },
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; keeps small
    /// recurrent nets in the stable tanh regime.
    FanIn,
}

/// One trainable tensor: value, gradient accumulator and optimizer moments,
/// all of identical shape.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub moment1: Vec<f64>,
    pub moment2: Vec<f64>,
}

impl Parameter {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An ordered collection of parameters owned by a single model.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    /// Optimizer step counter (bias correction for the adaptive update).
    pub(crate) step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a `rows x cols` parameter and returns its handle.
    pub fn add<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        assert!(rows > 0 && cols > 0, "parameter {name} must be non-empty");
        let n = rows * cols;
        let value = match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c; n],
            Init::Uniform { limit } => (0..n).map(|_| rng.gen_range(-limit..=limit)).collect(),
            Init::FanIn => {
                let limit = 1.0 / (cols as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
            }
        };
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            moment1: vec![0.0; n],
            moment2: vec![0.0; n],
        });
        id
    }

    /// Column vector of length `len`.
    pub fn add_vector<R: Rng>(&mut self, name: &str, len: usize, init: Init, rng: &mut R) -> ParamId {
        self.add(name, len, 1, init, rng)
    }

    /// Single scalar parameter.
    pub fn add_scalar<R: Rng>(&mut self, name: &str, init: Init, rng: &mut R) -> ParamId {
        self.add(name, 1, 1, init, rng)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    /// Handles for every parameter, in registration order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Adds `store` into the gradient accumulators.
    pub fn accumulate(&mut self, store: &GradStore) {
        assert_eq!(store.by_param.len(), self.params.len(), "grad store is for a different set");
        for (param, grad) in self.params.iter_mut().zip(&store.by_param) {
            if let Some(g) = grad {
                for (acc, gi) in param.grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Euclidean norm of the concatenated gradient accumulators.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct GradStore {
    by_param: Vec<Option<Vec<f64>>>,
}

impl GradStore {
    pub(crate) fn new(num_params: usize) -> Self {
        Self { by_param: vec![None; num_params] }
    }

    pub(crate) fn entry(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        self.by_param[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Gradient for one parameter, if any path reached it.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param[id.0].as_deref()
    }

    /// Euclidean norm over every stored entry.
    pub fn norm(&self) -> f64 {
        self.by_param
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales every stored gradient, e.g. for batch averaging.
    pub fn scale(&mut self, factor: f64) {
        for g in self.by_param.iter_mut().flatten() {
            for gi in g.iter_mut() {
                *gi *= factor;
            }
        }
    }
}
