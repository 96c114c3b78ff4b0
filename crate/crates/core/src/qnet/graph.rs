use crate::features::BipartiteState;
use crate::{Error, Result};
use ndarray::{concatenate, Array2, ArrayView2, Axis};

/// Network input: feature matrices plus both adjacency directions in
/// compressed form. A batch is the disjoint union of its states.
#[derive(Debug, Clone)]
pub struct Graph {
    pub var: Array2<f64>,
    pub cons: Array2<f64>,
    /// Constraint-major adjacency: neighbours of constraint `i` are
    /// `c_idx[c_ptr[i]..c_ptr[i + 1]]`.
    pub(crate) c_ptr: Vec<usize>,
    pub(crate) c_idx: Vec<usize>,
    pub(crate) v_ptr: Vec<usize>,
    pub(crate) v_idx: Vec<usize>,
    /// Mean incident edge value per node, 0 for isolated nodes.
    pub(crate) c_mean_edge: Vec<f64>,
    pub(crate) v_mean_edge: Vec<f64>,
    /// 1 for nodes with at least one edge, else 0.
    pub(crate) c_has_edge: Vec<f64>,
    pub(crate) v_has_edge: Vec<f64>,
    /// Variable row range of each member state.
    pub var_ranges: Vec<(usize, usize)>,
}

fn compress(len: usize, pairs: &[(usize, usize, f64)]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut ptr = vec![0usize; len + 1];
    for &(a, _, _) in pairs {
        ptr[a + 1] += 1;
    }
    for k in 0..len {
        ptr[k + 1] += ptr[k];
    }
    let mut fill = ptr.clone();
    let mut idx = vec![0usize; pairs.len()];
    let mut sum = vec![0.0; len];
    for &(a, b, v) in pairs {
        idx[fill[a]] = b;
        fill[a] += 1;
        sum[a] += v;
    }
    for (a, s) in sum.iter_mut().enumerate() {
        let deg = ptr[a + 1] - ptr[a];
        if deg > 0 {
            *s /= deg as f64;
        }
    }
    (ptr, idx, sum)
}

impl Graph {
    pub fn from_state(state: &BipartiteState) -> Result<Self> {
        Self::batch(&[state])
    }

    pub fn batch(states: &[&BipartiteState]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let mut var_edges = Vec::new();
        let mut var_ranges = Vec::with_capacity(states.len());
        let (mut voff, mut coff) = (0usize, 0usize);
        for s in states {
            let (n, m) = (s.num_vars(), s.num_cons());
            for e in s.edges.iter() {
                let (i, j) = (e.row as usize, e.col as usize);
                if i >= m || j >= n {
                    return Err(Error::Contract(format!(
                        "edge ({i}, {j}) outside a {m}x{n} state"
                    )));
                }
                var_edges.push((coff + i, voff + j, e.value));
            }
            var_ranges.push((voff, voff + n));
            voff += n;
            coff += m;
        }
        let stack = |views: Vec<ArrayView2<f64>>| -> Result<Array2<f64>> {
            concatenate(Axis(0), &views).map_err(|e| Error::Contract(format!("feature widths differ: {e}")))
        };
        let var = stack(states.iter().map(|s| s.var_features.view()).collect())?;
        let cons = stack(states.iter().map(|s| s.cons_features.view()).collect())?;
        let (c_ptr, c_idx, c_mean_edge) = compress(coff, &var_edges);
        let flipped: Vec<_> = var_edges.iter().map(|&(i, j, v)| (j, i, v)).collect();
        let (v_ptr, v_idx, v_mean_edge) = compress(voff, &flipped);
        let has = |ptr: &[usize]| -> Vec<f64> {
            ptr.windows(2).map(|w| if w[1] > w[0] { 1.0 } else { 0.0 }).collect()
        };
        Ok(Graph {
            c_has_edge: has(&c_ptr),
            v_has_edge: has(&v_ptr),
            var,
            cons,
            c_ptr,
            c_idx,
            v_ptr,
            v_idx,
            c_mean_edge,
            v_mean_edge,
            var_ranges,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.var.nrows()
    }

    pub fn num_cons(&self) -> usize {
        self.cons.nrows()
    }
}
