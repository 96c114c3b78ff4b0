mod common;

use common::nets::{gradient_check, random_net, random_state, tiny_arch};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retrobranch::features::{BipartiteState, Edge};
use retrobranch::qnet::{Architecture, FinalActivation, Graph, QNet};
use std::collections::HashMap;
use std::sync::Arc;

/// Straight-line dense reimplementation of the forward pass, used as an
/// oracle. Adjacency is a dense `m x n` matrix of edge values plus a mask.
fn oracle_forward(net: &QNet, s: &BipartiteState) -> Vec<f64> {
    let arch = net.arch;
    let named: HashMap<String, &Array2<f64>> = arch
        .layout()
        .into_iter()
        .zip(&net.params.tensors)
        .map(|((name, _, _), t)| (name, t))
        .collect();
    let get = |k: &str| named[k];
    let slope = arch.leaky_slope;
    let lrelu = |v: f64| if v > 0.0 { v } else { slope * v };
    let (n, m, h) = (s.num_vars(), s.num_cons(), arch.hidden);
    let mut adj = vec![vec![None; n]; m];
    for e in s.edges.iter() {
        adj[e.row as usize][e.col as usize] = Some(e.value);
    }
    let dense = |x: &Vec<f64>, w: &Array2<f64>| -> Vec<f64> {
        (0..w.nrows())
            .map(|o| (0..w.ncols()).map(|i| w[[o, i]] * x[i]).sum())
            .collect()
    };
    let norm = |z: Vec<f64>, g: &Array2<f64>, b: &Array2<f64>| -> Vec<f64> {
        let mu = z.iter().sum::<f64>() / h as f64;
        let var = z.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / h as f64;
        (0..h)
            .map(|k| lrelu(g[[0, k]] * (z[k] - mu) / (var + 1e-5).sqrt() + b[[0, k]]))
            .collect()
    };
    let embed = |x: Vec<f64>, p: &str| -> Vec<f64> {
        let w = get(&format!("{p}.weight"));
        let b = get(&format!("{p}.bias"));
        let z: Vec<f64> = dense(&x, w).iter().enumerate().map(|(k, v)| v + b[[0, k]]).collect();
        norm(z, get(&format!("{p}.norm_gain")), get(&format!("{p}.norm_bias")))
    };
    let mut hv: Vec<Vec<f64>> = (0..n).map(|j| embed(s.var_features.row(j).to_vec(), "var_emb")).collect();
    let mut hc: Vec<Vec<f64>> = (0..m).map(|i| embed(s.cons_features.row(i).to_vec(), "cons_emb")).collect();
    let ew = get("edge_emb.weight");
    let eb = get("edge_emb.bias");
    let edge_emb = |v: f64| -> Vec<f64> { (0..h).map(|k| ew[[0, k]] * v + eb[[0, k]]).collect() };
    let half = |own: &Vec<f64>, nbrs: Vec<(&Vec<f64>, f64)>, p: &str| -> Vec<f64> {
        let msg_w = get(&format!("{p}.msg_weight"));
        let edge_w = get(&format!("{p}.edge_weight"));
        let mut agg = vec![0.0; h];
        let deg = nbrs.len() as f64;
        for (nb, e) in &nbrs {
            let a = dense(nb, msg_w);
            let b = dense(&edge_emb(*e), edge_w);
            for k in 0..h {
                agg[k] += (a[k] + b[k]) / deg;
            }
        }
        let own_part = dense(own, get(&format!("{p}.self_weight")));
        let bias = get(&format!("{p}.bias"));
        let z = (0..h).map(|k| own_part[k] + agg[k] + bias[[0, k]]).collect();
        norm(z, get(&format!("{p}.norm_gain")), get(&format!("{p}.norm_bias")))
    };
    for pair in 0..arch.conv_pairs {
        let new_hc: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let nbrs = (0..n).filter_map(|j| adj[i][j].map(|e| (&hv[j], e))).collect();
                half(&hc[i], nbrs, &format!("conv{pair}.v_to_c"))
            })
            .collect();
        hc = new_hc;
        let new_hv: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let nbrs = (0..m).filter_map(|i| adj[i][j].map(|e| (&hc[i], e))).collect();
                half(&hv[j], nbrs, &format!("conv{pair}.c_to_v"))
            })
            .collect();
        hv = new_hv;
    }
    let w1 = get("head.weight1");
    let b1 = get("head.bias1");
    let w2 = get("head.weight2");
    let b2 = get("head.bias2")[[0, 0]];
    hv.iter()
        .map(|x| {
            let r: Vec<f64> = dense(x, w1).iter().enumerate().map(|(k, v)| lrelu(v + b1[[0, k]])).collect();
            let z = (0..h).map(|k| w2[[0, k]] * r[k]).sum::<f64>() + b2;
            match arch.final_activation {
                FinalActivation::NegLeakyRelu => -lrelu(z),
                FinalActivation::MinSideLeak => z.min(slope * z),
            }
        })
        .collect()
}

#[test]
fn forward_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (pairs, act) in [(1, FinalActivation::NegLeakyRelu), (2, FinalActivation::MinSideLeak)] {
        let arch = Architecture {
            final_activation: act,
            ..tiny_arch(64, pairs)
        };
        let net = random_net(arch, &mut rng);
        let s = random_state(&mut rng, 3, 2, 1.0);
        let q = net.forward(&s).unwrap();
        let expected = oracle_forward(&net, &s);
        for (a, b) in q.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{q} vs {expected:?}");
        }
    }
}

#[test]
fn default_init_matches_dense_oracle() {
    let net = QNet::new(Architecture::default(), 5);
    let s = random_state(&mut ChaCha8Rng::seed_from_u64(5), 3, 2, 1.0);
    let q = net.forward(&s).unwrap();
    let expected = oracle_forward(&net, &s);
    for (a, b) in q.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{q} vs {expected:?}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let arch = Architecture {
            final_activation: if k % 2 == 0 {
                FinalActivation::NegLeakyRelu
            } else {
                FinalActivation::MinSideLeak
            },
            ..tiny_arch(6, 1 + k % 2)
        };
        let mut net = random_net(arch, &mut rng);
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=3));
        let s = random_state(&mut rng, n, m, 1.0);
        worst = worst.max(gradient_check(&mut net, &s, &mut rng));
    }
    eprintln!("max relative error {worst:e}");
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn backward_is_linear_in_upstream() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = random_net(tiny_arch(16, 1), &mut rng);
    let s = random_state(&mut rng, 4, 3, 1.0);
    let pass = net.forward_pass(Graph::from_state(&s).unwrap()).unwrap();
    let zero = net.backward(&pass, &Array1::zeros(4)).unwrap();
    assert!(zero.tensors.iter().all(|t| t.iter().all(|&v| v == 0.0)));
    let dq = Array1::from(vec![0.3, -1.0, 0.5, 2.0]);
    let g1 = net.backward(&pass, &dq).unwrap();
    let g2 = net.backward(&pass, &(&dq * 2.0)).unwrap();
    for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
    assert!(net.backward(&pass, &Array1::zeros(3)).is_err());
}

#[test]
fn zero_features_with_zero_weights_give_constant_q() {
    let arch = Architecture::default();
    let mut net = QNet::new(arch, 1);
    for ((name, _, _), t) in arch.layout().iter().zip(net.params.tensors.iter_mut()) {
        if name.ends_with("emb.weight") {
            t.fill(0.0);
        }
    }
    let mut s = random_state(&mut ChaCha8Rng::seed_from_u64(4), 5, 3, 1.0);
    s.var_features.fill(0.0);
    s.cons_features.fill(0.0);
    let edges: Vec<Edge> = (0..5)
        .flat_map(|j| (0..3).map(move |i| Edge { row: i, col: j, value: 0.5 }))
        .collect();
    s.edges = Arc::new(edges);
    let q = net.forward(&s).unwrap();
    assert!(q.iter().all(|v| (v - q[0]).abs() < 1e-15), "{q}");
}

#[test]
fn shape_mismatch_is_contract_error() {
    let net = QNet::new(Architecture::default(), 1);
    let mut s = random_state(&mut ChaCha8Rng::seed_from_u64(4), 3, 2, 1.0);
    s.var_features = Array2::zeros((3, 10));
    assert!(net.forward(&s).is_err());
}

#[test]
fn large_features_stay_finite() {
    let net = QNet::new(Architecture::default(), 1);
    let s = random_state(&mut ChaCha8Rng::seed_from_u64(8), 20, 10, 1e3);
    let q = net.forward(&s).unwrap();
    assert!(q.iter().all(|v| v.is_finite()));
}

#[test]
fn target_copy_matches_online() {
    let online = QNet::new(Architecture::default(), 2);
    let mut target = QNet::new(Architecture::default(), 3);
    target.params.soft_update(&online.params, 1.0);
    let s = random_state(&mut ChaCha8Rng::seed_from_u64(8), 6, 4, 1.0);
    assert_eq!(online.forward(&s).unwrap(), target.forward(&s).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn batch_equals_individual(seed in any::<u64>(), sizes in prop::collection::vec((1usize..8, 1usize..6), 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(tiny_arch(32, 1), &mut rng);
        let states: Vec<BipartiteState> = sizes.iter().map(|&(n, m)| random_state(&mut rng, n, m, 2.0)).collect();
        let refs: Vec<&BipartiteState> = states.iter().collect();
        let batched = net.forward_batch(&refs).unwrap();
        for (s, b) in states.iter().zip(&batched) {
            let single = net.forward(s).unwrap();
            for (x, y) in single.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn permuting_variables_permutes_q(seed in any::<u64>(), n in 2usize..8, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(tiny_arch(16, 1), &mut rng);
        let s = random_state(&mut rng, n, m, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % n);
        // new variable k is old variable perm[k]
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut t = s.clone();
        for (k, &p) in perm.iter().enumerate() {
            t.var_features.row_mut(k).assign(&s.var_features.row(p));
        }
        t.edges = Arc::new(s.edges.iter().map(|e| Edge { col: inv[e.col as usize] as u32, ..*e }).collect());
        let q = net.forward(&s).unwrap();
        let qp = net.forward(&t).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            prop_assert!((qp[k] - q[p]).abs() < 1e-9);
        }
    }
}
