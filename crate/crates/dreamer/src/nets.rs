//! Named parameter storage and the small network modules built on it.
//!
//! Parameters live outside any tape in a `ParamSet`; each training step
//! binds them into a fresh graph and the modules reference them by id, so
//! one parameter list serves the optimizer, the checkpointer, and the tape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tdlab_autodiff::{Gradients, Graph, NodeId, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn set(&mut self, id: ParamId, t: Tensor) {
        assert_eq!(self.tensors[id.0].shape(), t.shape(), "parameter shape");
        self.tensors[id.0] = t;
    }

    pub fn total_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Bind every parameter into the graph, in id order.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            ids: self.tensors.iter().map(|t| g.input(t.clone())).collect(),
        }
    }
}

/// Graph nodes of one bound parameter set.
pub struct Bound {
    ids: Vec<NodeId>,
}

impl Bound {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.ids[id.0]
    }

    /// Gradient per parameter, zeros where the loss does not reach.
    pub fn gradients(&self, params: &ParamSet, grads: &Gradients) -> Vec<Tensor> {
        self.ids
            .iter()
            .zip(params.tensors())
            .map(|(&n, t)| grads.get_or_zeros(n, t.shape()))
            .collect()
    }
}

fn init_weight(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data)
}

/// Dense layer `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamSet,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w: store.push(format!("{name}.w"), init_weight(rng, din, dout)),
            b: store.push(format!("{name}.b"), Tensor::zeros(vec![dout])),
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let h = g.matmul(x, bound.node(self.w));
        g.add(h, bound.node(self.b))
    }
}

/// Two dense layers with an ELU between them; optionally ELU at the output.
#[derive(Debug, Clone)]
pub struct Mlp {
    l1: Linear,
    l2: Linear,
    activate_output: bool,
}

impl Mlp {
    pub fn new(
        store: &mut ParamSet,
        name: &str,
        din: usize,
        width: usize,
        dout: usize,
        activate_output: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), din, width, rng),
            l2: Linear::new(store, &format!("{name}.l2"), width, dout, rng),
            activate_output,
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let h = self.l1.forward(g, bound, x);
        let h = g.elu(h);
        let out = self.l2.forward(g, bound, h);
        if self.activate_output {
            g.elu(out)
        } else {
            out
        }
    }
}

/// Gated recurrent cell.
#[derive(Debug, Clone)]
pub struct GruCell {
    update: Linear,
    reset: Linear,
    candidate: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            update: Linear::new(store, &format!("{name}.update"), input + hidden, hidden, rng),
            reset: Linear::new(store, &format!("{name}.reset"), input + hidden, hidden, rng),
            candidate: Linear::new(store, &format!("{name}.cand"), input + hidden, hidden, rng),
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId, h: NodeId) -> NodeId {
        let xh = g.concat(&[x, h]);
        let z = self.update.forward(g, bound, xh);
        let z = g.sigmoid(z);
        let r = self.reset.forward(g, bound, xh);
        let r = g.sigmoid(r);
        let rh = g.mul(r, h);
        let xrh = g.concat(&[x, rh]);
        let n = self.candidate.forward(g, bound, xrh);
        let n = g.tanh(n);
        // h' = (1 - z) h + z n
        let one_minus_z = g.affine(z, -1.0, 1.0);
        let keep = g.mul(one_minus_z, h);
        let update = g.mul(z, n);
        g.add(keep, update)
    }
}
