//! Random graphs and networks for the Q-network suites, plus the
//! finite-difference gradient check.

use ndarray::{Array1, Array2};
use rand::Rng;
use retrobranch::features::{BipartiteState, Edge};
use retrobranch::qnet::{Architecture, Graph, Params, QNet};
use std::sync::Arc;

pub fn tiny_arch(hidden: usize, pairs: usize) -> Architecture {
    Architecture {
        hidden,
        conv_pairs: pairs,
        ..Architecture::default()
    }
}

pub fn random_state(rng: &mut impl Rng, n: usize, m: usize, scale: f64) -> BipartiteState {
    let arch = Architecture::default();
    let var = Array2::from_shape_simple_fn((n, arch.var_features), || rng.gen_range(-scale..scale));
    let cons = Array2::from_shape_simple_fn((m, arch.cons_features), || rng.gen_range(-scale..scale));
    let mut edges = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.gen_bool(0.6) {
                edges.push(Edge {
                    row: i as u32,
                    col: j as u32,
                    value: rng.gen_range(-1.0..1.0),
                });
            }
        }
    }
    BipartiteState {
        var_features: var,
        cons_features: cons,
        edges: Arc::new(edges),
        candidate_mask: vec![true; n],
        focus_node_id: 0,
    }
}

/// Random parameters with larger spread than the initializer, so that
/// gradients are not dominated by the layer norms' epsilon.
pub fn random_net(arch: Architecture, rng: &mut impl Rng) -> QNet {
    let mut p = Params::zeros(&arch);
    for t in &mut p.tensors {
        t.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    QNet::from_params(arch, p).unwrap()
}

fn loss(net: &QNet, graph: &Graph, dq: &Array1<f64>) -> f64 {
    net.forward_pass(graph.clone()).unwrap().q.dot(dq)
}

/// Max relative error between backward and central finite differences of
/// the scalar `q . dq` for a random upstream `dq`. The step is small enough
/// that a perturbation rarely straddles a LeakyReLU kink.
pub fn gradient_check(net: &mut QNet, s: &BipartiteState, rng: &mut impl Rng) -> f64 {
    let graph = Graph::from_state(s).unwrap();
    let dq = Array1::from_shape_simple_fn(s.num_vars(), || rng.gen_range(-1.0..1.0));
    let pass = net.forward_pass(graph.clone()).unwrap();
    let grads = net.backward(&pass, &dq).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..net.params.tensors.len() {
        for idx in 0..net.params.tensors[t].len() {
            let orig = net.params.tensors[t].as_slice().unwrap()[idx];
            net.params.tensors[t].as_slice_mut().unwrap()[idx] = orig + h;
            let up = loss(net, &graph, &dq);
            net.params.tensors[t].as_slice_mut().unwrap()[idx] = orig - h;
            let down = loss(net, &graph, &dq);
            net.params.tensors[t].as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors[t].as_slice().unwrap()[idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
