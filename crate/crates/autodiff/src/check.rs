//! Central finite-difference validation of gradients.
//!
//! The checker re-evaluates the caller's forward closure with perturbed
//! parameters, so it exercises only the forward path and stays independent
//! of the reverse sweep it validates.

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Worst relative error over all parameter coordinates.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
}

/// Compare reverse-mode gradients of `build` against central differences.
///
/// `build` receives a fresh graph plus the parameter nodes (in the order of
/// `params`) and returns the scalar loss node. Relative error per coordinate
/// is `|ad - fd| / max(1, |ad|, |fd|)`.
pub fn finite_difference_check(
    params: &[Tensor],
    h: f64,
    build: impl Fn(&mut Graph, &[NodeId]) -> NodeId,
) -> GradCheckReport {
    let eval = |tensors: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.value(loss).item()
    };

    // reverse-mode gradients at the base point
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, &ids);
    let grads = g.backward(loss);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        coords_checked: 0,
    };
    for (pi, p) in params.iter().enumerate() {
        let ad = grads.get_or_zeros(ids[pi], p.shape());
        for ci in 0..p.len() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[ci] += h;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[ci] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = ad.data()[ci];
            let abs = (a - fd).abs();
            let rel = abs / 1.0f64.max(a.abs()).max(fd.abs());
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.coords_checked += 1;
        }
    }
    report
}
