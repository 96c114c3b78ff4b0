use retrobranch::bnb::{solve, NodeSelectorKind, SolveOptions};
use retrobranch::branch::RandomBranching;
use retrobranch::features::{
    extract, tree_feature_index, TreeContext, NUM_CONS_FEATURES, NUM_VAR_FEATURES,
};
use retrobranch::milp::{generate, GeneratorSpec, ProblemClass};

fn solved(selector: NodeSelectorKind, seed: u64) -> (retrobranch::milp::MilpInstance, retrobranch::bnb::SolveOutcome) {
    let inst = generate(&GeneratorSpec::new(ProblemClass::SetCovering { rows: 100, cols: 200, density: 0.15 }, 1)).unwrap();
    let opts = SolveOptions {
        capture_states: true,
        seed,
        ..SolveOptions::with_selector(selector)
    };
    let out = solve(&inst, &mut RandomBranching, &opts).unwrap();
    (inst, out)
}

#[test]
fn captured_states_have_fixed_shape_and_are_finite() {
    let (inst, out) = solved(NodeSelectorKind::Dfs, 1);
    assert!(out.stats.num_nodes > 1, "instance should need branching");
    assert_eq!(out.tree.states.len(), out.stats.num_nodes);
    let nnz: usize = inst.rows.iter().map(|r| r.coefs.len()).sum();
    for (&id, s) in &out.tree.states {
        assert_eq!(s.focus_node_id, id);
        assert_eq!(s.var_features.dim(), (inst.num_vars, NUM_VAR_FEATURES));
        assert_eq!(s.cons_features.dim(), (inst.num_cons, NUM_CONS_FEATURES));
        assert_eq!(s.edges.len(), nnz);
        assert!(s.var_features.iter().all(|v| v.is_finite()));
        assert!(s.cons_features.iter().all(|v| v.is_finite()));
        assert!(s.edges.iter().all(|e| e.value.is_finite()));
        let lp = out.tree.node(id).lp.as_ref().unwrap();
        assert_eq!(s.candidates(), lp.fractional_set);
        let depth = tree_feature_index("curr_node_depth").unwrap();
        assert_eq!(s.var_features[[0, depth]], out.tree.node(id).depth as f64);
        // tree features are broadcast to every variable row
        for j in 1..inst.num_vars {
            for k in 19..NUM_VAR_FEATURES {
                assert_eq!(s.var_features[[j, k]], s.var_features[[0, k]]);
            }
        }
    }
}

#[test]
fn best_first_focus_is_always_best() {
    let (_, out) = solved(NodeSelectorKind::BestFirst, 2);
    let k = tree_feature_index("is_curr_node_best").unwrap();
    for s in out.tree.states.values() {
        assert_eq!(s.var_features[[0, k]], 1.0);
    }
}

#[test]
fn extraction_is_deterministic() {
    let (_, a) = solved(NodeSelectorKind::Bfs, 3);
    let (_, b) = solved(NodeSelectorKind::Bfs, 3);
    assert_eq!(a.tree.states, b.tree.states);
}

#[test]
fn extract_requires_focus() {
    let (inst, out) = solved(NodeSelectorKind::Dfs, 1);
    let ctx = TreeContext::new(&inst);
    assert!(extract(&inst, &out.tree, 0, &ctx).is_err());
    assert!(extract(&inst, &out.tree, usize::MAX, &ctx).is_err());
}
