//! Recording graph for reverse-mode differentiation.
//!
//! A [`Graph`] borrows one model's [`ParamSet`], evaluates eagerly while
//! recording each operation, and replays the record in reverse to produce a
//! [`GradStore`]. Nodes are typed as scalar ([`Sc`]) or vector ([`Vc`])
//! handles, so a forward pass must exist before `backward` can be called —
//! there is no way to name a loss node without having recorded it.
//!
//! The op set is deliberately small: dense affine maps, the activations used
//! by the recurrent cells, and the scalar arithmetic needed for log-densities
//! and losses. Shape mismatches are programmer errors and panic.

use super::param::{GradStore, ParamId, ParamSet};

/// Scalar-valued node handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sc(usize);

/// Vector-valued node handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vc(usize);

#[derive(Debug, Clone)]
enum Node {
    ConstS,
    ConstV,
    /// w (rows x cols) times x (cols) -> rows.
    MatVec { w: ParamId, x: usize },
    AddV { a: usize, b: usize },
    /// x + b for a vector parameter b.
    AddBiasV { x: usize, b: ParamId },
    MulV { a: usize, b: usize },
    TanhV { x: usize },
    SigmoidV { x: usize },
    /// Length-1 vector from a scalar node.
    ScalarToVec { x: usize },
    /// v . x for a vector parameter v.
    DotParam { v: ParamId, x: usize },
    /// x + b for a scalar parameter b.
    AddBiasS { x: usize, b: ParamId },
    AddS { a: usize, b: usize },
    SubS { a: usize, b: usize },
    MulS { a: usize, b: usize },
    NegS { x: usize },
    MulConst { x: usize, c: f64 },
    LnS { x: usize },
    SoftplusS { x: usize },
    SigmoidS { x: usize },
    TanhS { x: usize },
    /// Sum of a vector's components.
    SumV { x: usize },
    /// sum_i coeff_i * term_i over scalar nodes.
    WeightedSum { terms: Vec<(usize, f64)> },
    /// logsumexp(logits) - logits[target]; the usual stable cross-entropy.
    CrossEntropy { logits: usize, target: usize },
}

#[derive(Debug, Clone)]
enum Value {
    S(f64),
    V(Vec<f64>),
}

impl Value {
    fn s(&self) -> f64 {
        match self {
            Value::S(v) => *v,
            Value::V(_) => panic!("expected scalar node"),
        }
    }

    fn v(&self) -> &[f64] {
        match self {
            Value::V(v) => v,
            Value::S(_) => panic!("expected vector node"),
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`]: returns `z` with `softplus(z) = y` for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus inverse needs a positive argument");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// A recorded forward pass over one parameter set.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    vals: Vec<Value>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { params, nodes: Vec::new(), vals: Vec::new() }
    }

    fn push(&mut self, node: Node, val: Value) -> usize {
        self.nodes.push(node);
        self.vals.push(val);
        self.vals.len() - 1
    }

    pub fn value_s(&self, x: Sc) -> f64 {
        self.vals[x.0].s()
    }

    pub fn value_v(&self, x: Vc) -> &[f64] {
        self.vals[x.0].v()
    }

    // ── Leaves ──────────────────────────────────────────────────────

    pub fn const_s(&mut self, v: f64) -> Sc {
        Sc(self.push(Node::ConstS, Value::S(v)))
    }

    pub fn const_v(&mut self, v: &[f64]) -> Vc {
        Vc(self.push(Node::ConstV, Value::V(v.to_vec())))
    }

    pub fn zeros(&mut self, len: usize) -> Vc {
        Vc(self.push(Node::ConstV, Value::V(vec![0.0; len])))
    }

    // ── Vector ops ──────────────────────────────────────────────────

    pub fn matvec(&mut self, w: ParamId, x: Vc) -> Vc {
        let p = self.params.get(w);
        let xv = self.vals[x.0].v();
        assert_eq!(p.cols, xv.len(), "matvec dimension mismatch for {}", p.name);
        let mut out = vec![0.0; p.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &p.value[r * p.cols..(r + 1) * p.cols];
            *o = row.iter().zip(xv).map(|(w, x)| w * x).sum();
        }
        Vc(self.push(Node::MatVec { w, x: x.0 }, Value::V(out)))
    }

    pub fn add_v(&mut self, a: Vc, b: Vc) -> Vc {
        let (av, bv) = (self.vals[a.0].v(), self.vals[b.0].v());
        assert_eq!(av.len(), bv.len(), "add_v dimension mismatch");
        let out = av.iter().zip(bv).map(|(a, b)| a + b).collect();
        Vc(self.push(Node::AddV { a: a.0, b: b.0 }, Value::V(out)))
    }

    pub fn add_bias_v(&mut self, x: Vc, b: ParamId) -> Vc {
        let p = self.params.get(b);
        let xv = self.vals[x.0].v();
        assert_eq!(p.len(), xv.len(), "bias dimension mismatch for {}", p.name);
        let out = xv.iter().zip(&p.value).map(|(x, b)| x + b).collect();
        Vc(self.push(Node::AddBiasV { x: x.0, b }, Value::V(out)))
    }

    pub fn mul_v(&mut self, a: Vc, b: Vc) -> Vc {
        let (av, bv) = (self.vals[a.0].v(), self.vals[b.0].v());
        assert_eq!(av.len(), bv.len(), "mul_v dimension mismatch");
        let out = av.iter().zip(bv).map(|(a, b)| a * b).collect();
        Vc(self.push(Node::MulV { a: a.0, b: b.0 }, Value::V(out)))
    }

    pub fn tanh_v(&mut self, x: Vc) -> Vc {
        let out = self.vals[x.0].v().iter().map(|v| v.tanh()).collect();
        Vc(self.push(Node::TanhV { x: x.0 }, Value::V(out)))
    }

    pub fn sigmoid_v(&mut self, x: Vc) -> Vc {
        let out = self.vals[x.0].v().iter().map(|v| sigmoid(*v)).collect();
        Vc(self.push(Node::SigmoidV { x: x.0 }, Value::V(out)))
    }

    pub fn scalar_to_vec(&mut self, x: Sc) -> Vc {
        let v = self.vals[x.0].s();
        Vc(self.push(Node::ScalarToVec { x: x.0 }, Value::V(vec![v])))
    }

    // ── Scalar ops ──────────────────────────────────────────────────

    pub fn dot_param(&mut self, v: ParamId, x: Vc) -> Sc {
        let p = self.params.get(v);
        let xv = self.vals[x.0].v();
        assert_eq!(p.len(), xv.len(), "dot dimension mismatch for {}", p.name);
        let out = p.value.iter().zip(xv).map(|(a, b)| a * b).sum();
        Sc(self.push(Node::DotParam { v, x: x.0 }, Value::S(out)))
    }

    pub fn add_bias_s(&mut self, x: Sc, b: ParamId) -> Sc {
        let p = self.params.get(b);
        assert_eq!(p.len(), 1, "scalar bias {} has more than one entry", p.name);
        let out = self.vals[x.0].s() + p.value[0];
        Sc(self.push(Node::AddBiasS { x: x.0, b }, Value::S(out)))
    }

    pub fn add_s(&mut self, a: Sc, b: Sc) -> Sc {
        let out = self.vals[a.0].s() + self.vals[b.0].s();
        Sc(self.push(Node::AddS { a: a.0, b: b.0 }, Value::S(out)))
    }

    pub fn sub_s(&mut self, a: Sc, b: Sc) -> Sc {
        let out = self.vals[a.0].s() - self.vals[b.0].s();
        Sc(self.push(Node::SubS { a: a.0, b: b.0 }, Value::S(out)))
    }

    pub fn mul_s(&mut self, a: Sc, b: Sc) -> Sc {
        let out = self.vals[a.0].s() * self.vals[b.0].s();
        Sc(self.push(Node::MulS { a: a.0, b: b.0 }, Value::S(out)))
    }

    pub fn neg_s(&mut self, x: Sc) -> Sc {
        let out = -self.vals[x.0].s();
        Sc(self.push(Node::NegS { x: x.0 }, Value::S(out)))
    }

    pub fn mul_const(&mut self, x: Sc, c: f64) -> Sc {
        let out = self.vals[x.0].s() * c;
        Sc(self.push(Node::MulConst { x: x.0, c }, Value::S(out)))
    }

    pub fn ln_s(&mut self, x: Sc) -> Sc {
        let out = self.vals[x.0].s().ln();
        Sc(self.push(Node::LnS { x: x.0 }, Value::S(out)))
    }

    pub fn softplus_s(&mut self, x: Sc) -> Sc {
        let out = softplus(self.vals[x.0].s());
        Sc(self.push(Node::SoftplusS { x: x.0 }, Value::S(out)))
    }

    pub fn sigmoid_s(&mut self, x: Sc) -> Sc {
        let out = sigmoid(self.vals[x.0].s());
        Sc(self.push(Node::SigmoidS { x: x.0 }, Value::S(out)))
    }

    pub fn tanh_s(&mut self, x: Sc) -> Sc {
        let out = self.vals[x.0].s().tanh();
        Sc(self.push(Node::TanhS { x: x.0 }, Value::S(out)))
    }

    /// Sum of a vector's components.
    pub fn sum_v(&mut self, x: Vc) -> Sc {
        let out = self.vals[x.0].v().iter().sum();
        Sc(self.push(Node::SumV { x: x.0 }, Value::S(out)))
    }

    /// `sum_i coeff_i * term_i`; the workhorse for surrogate losses.
    pub fn weighted_sum(&mut self, terms: &[(Sc, f64)]) -> Sc {
        let out = terms.iter().map(|(t, c)| self.vals[t.0].s() * c).sum();
        let terms = terms.iter().map(|(t, c)| (t.0, *c)).collect();
        Sc(self.push(Node::WeightedSum { terms }, Value::S(out)))
    }

    /// Negative log-likelihood of `target` under softmax(logits).
    pub fn cross_entropy(&mut self, logits: Vc, target: usize) -> Sc {
        let z = self.vals[logits.0].v();
        assert!(target < z.len(), "cross_entropy target out of range");
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = lse - z[target];
        Sc(self.push(Node::CrossEntropy { logits: logits.0, target }, Value::S(out)))
    }

    /// Softmax of a recorded logit vector, computed on values only.
    pub fn softmax_values(&self, logits: Vc) -> Vec<f64> {
        let z = self.vals[logits.0].v();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| e / sum).collect()
    }

    /// Reverse pass from `loss`; returns gradients for every parameter the
    /// recorded graph touched.
    pub fn backward(&self, loss: Sc) -> GradStore {
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        let mut store = GradStore::new(self.params.len());
        grads[loss.0] = Some(Value::S(1.0));

        for idx in (0..self.nodes.len()).rev() {
            let go = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx] {
                Node::ConstS | Node::ConstV => {}
                Node::MatVec { w, x } => {
                    let gov = go.v();
                    let p = self.params.get(*w);
                    let xv = self.vals[*x].v();
                    {
                        let gw = store.entry(*w, p.len());
                        for (r, g) in gov.iter().enumerate() {
                            let row = &mut gw[r * p.cols..(r + 1) * p.cols];
                            for (gw_i, x_i) in row.iter_mut().zip(xv) {
                                *gw_i += g * x_i;
                            }
                        }
                    }
                    let gx = vec_grad(&mut grads[*x], p.cols);
                    for (r, g) in gov.iter().enumerate() {
                        let row = &p.value[r * p.cols..(r + 1) * p.cols];
                        for (gx_i, w_i) in gx.iter_mut().zip(row) {
                            *gx_i += g * w_i;
                        }
                    }
                }
                Node::AddV { a, b } => {
                    let gov = go.v().to_vec();
                    add_into_vec(&mut grads[*a], &gov);
                    add_into_vec(&mut grads[*b], &gov);
                }
                Node::AddBiasV { x, b } => {
                    let gov = go.v();
                    let len = gov.len();
                    let gb = store.entry(*b, len);
                    for (gb_i, g) in gb.iter_mut().zip(gov) {
                        *gb_i += g;
                    }
                    add_into_vec(&mut grads[*x], gov);
                }
                Node::MulV { a, b } => {
                    let gov = go.v();
                    let (av, bv) = (self.vals[*a].v().to_vec(), self.vals[*b].v().to_vec());
                    let ga: Vec<f64> = gov.iter().zip(&bv).map(|(g, b)| g * b).collect();
                    let gb: Vec<f64> = gov.iter().zip(&av).map(|(g, a)| g * a).collect();
                    add_into_vec(&mut grads[*a], &ga);
                    add_into_vec(&mut grads[*b], &gb);
                }
                Node::TanhV { x } => {
                    let y = self.vals[idx].v();
                    let gx: Vec<f64> = go.v().iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    add_into_vec(&mut grads[*x], &gx);
                }
                Node::SigmoidV { x } => {
                    let y = self.vals[idx].v();
                    let gx: Vec<f64> = go.v().iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    add_into_vec(&mut grads[*x], &gx);
                }
                Node::ScalarToVec { x } => {
                    add_into_scalar(&mut grads[*x], go.v()[0]);
                }
                Node::DotParam { v, x } => {
                    let g = go.s();
                    let p = self.params.get(*v);
                    let xv = self.vals[*x].v();
                    {
                        let gp = store.entry(*v, p.len());
                        for (gp_i, x_i) in gp.iter_mut().zip(xv) {
                            *gp_i += g * x_i;
                        }
                    }
                    let gx: Vec<f64> = p.value.iter().map(|v_i| g * v_i).collect();
                    add_into_vec(&mut grads[*x], &gx);
                }
                Node::AddBiasS { x, b } => {
                    let g = go.s();
                    store.entry(*b, 1)[0] += g;
                    add_into_scalar(&mut grads[*x], g);
                }
                Node::AddS { a, b } => {
                    let g = go.s();
                    add_into_scalar(&mut grads[*a], g);
                    add_into_scalar(&mut grads[*b], g);
                }
                Node::SubS { a, b } => {
                    let g = go.s();
                    add_into_scalar(&mut grads[*a], g);
                    add_into_scalar(&mut grads[*b], -g);
                }
                Node::MulS { a, b } => {
                    let g = go.s();
                    let (av, bv) = (self.vals[*a].s(), self.vals[*b].s());
                    add_into_scalar(&mut grads[*a], g * bv);
                    add_into_scalar(&mut grads[*b], g * av);
                }
                Node::NegS { x } => add_into_scalar(&mut grads[*x], -go.s()),
                Node::MulConst { x, c } => add_into_scalar(&mut grads[*x], go.s() * c),
                Node::LnS { x } => {
                    let xv = self.vals[*x].s();
                    add_into_scalar(&mut grads[*x], go.s() / xv);
                }
                Node::SoftplusS { x } => {
                    let xv = self.vals[*x].s();
                    add_into_scalar(&mut grads[*x], go.s() * sigmoid(xv));
                }
                Node::SigmoidS { x } => {
                    let y = self.vals[idx].s();
                    add_into_scalar(&mut grads[*x], go.s() * y * (1.0 - y));
                }
                Node::TanhS { x } => {
                    let y = self.vals[idx].s();
                    add_into_scalar(&mut grads[*x], go.s() * (1.0 - y * y));
                }
                Node::SumV { x } => {
                    let g = go.s();
                    let len = self.vals[*x].v().len();
                    let gx = vec![g; len];
                    add_into_vec(&mut grads[*x], &gx);
                }
                Node::WeightedSum { terms } => {
                    let g = go.s();
                    for (t, c) in terms {
                        add_into_scalar(&mut grads[*t], g * c);
                    }
                }
                Node::CrossEntropy { logits, target } => {
                    let g = go.s();
                    let probs = self.softmax_values(Vc(*logits));
                    let mut gz: Vec<f64> = probs.iter().map(|p| g * p).collect();
                    gz[*target] -= g;
                    add_into_vec(&mut grads[*logits], &gz);
                }
            }
        }
        store
    }
}

fn vec_grad(slot: &mut Option<Value>, len: usize) -> &mut Vec<f64> {
    match slot.get_or_insert_with(|| Value::V(vec![0.0; len])) {
        Value::V(v) => v,
        Value::S(_) => panic!("gradient type mismatch"),
    }
}

fn add_into_vec(slot: &mut Option<Value>, g: &[f64]) {
    let v = vec_grad(slot, g.len());
    for (vi, gi) in v.iter_mut().zip(g) {
        *vi += gi;
    }
}

fn add_into_scalar(slot: &mut Option<Value>, g: f64) {
    match slot.get_or_insert(Value::S(0.0)) {
        Value::S(v) => *v += g,
        Value::V(_) => panic!("gradient type mismatch"),
    }
}
