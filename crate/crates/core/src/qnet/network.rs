use super::graph::Graph;
use super::{
    Architecture, FinalActivation, Params, EMB_CONS_B, EMB_CONS_BETA, EMB_CONS_G, EMB_CONS_W,
    EMB_EDGE_B, EMB_EDGE_W, EMB_VAR_B, EMB_VAR_BETA, EMB_VAR_G, EMB_VAR_W, HALF_B, HALF_BETA,
    HALF_EDGE, HALF_G, HALF_MSG, HALF_SELF, HEAD_B1, HEAD_B2, HEAD_W1, HEAD_W2, LN_EPS,
};
use crate::features::BipartiteState;
use crate::{Error, Result};
use ndarray::{Array1, Array2, Axis};

/// Network architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub arch: Architecture,
    pub params: Params,
}

struct Norm {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    /// Layer-norm output, input of the leaky ReLU.
    out: Array2<f64>,
}

struct Half {
    /// Mean of neighbour embeddings.
    agg: Array2<f64>,
    norm: Norm,
}

/// Activations recorded by [`QNet::forward_pass`] for the backward pass.
pub struct ForwardPass {
    pub q: Array1<f64>,
    graph: Graph,
    var_emb: Norm,
    cons_emb: Norm,
    /// `hv[0]` is the variable embedding, `hv[k + 1]` the output of pair `k`.
    hv: Vec<Array2<f64>>,
    hc: Vec<Array2<f64>>,
    halves: Vec<Half>,
    head_pre: Array2<f64>,
    head_act: Array2<f64>,
    z: Array1<f64>,
}

impl ForwardPass {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// `x·Wᵀ + b` with `W` stored `(out, in)` and `b` as a `(1, out)` row.
fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += &b.row(0);
    y
}

fn layer_norm(z: Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> Norm {
    let (rows, h) = z.dim();
    let mut xhat = z.as_standard_layout().into_owned();
    let mut inv_std = Array1::zeros(rows);
    let mut out = Array2::zeros((rows, h));
    let (g, b) = (gain.as_slice().expect("contiguous"), bias.as_slice().expect("contiguous"));
    let xs = xhat.as_slice_mut().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for ((x, o), s) in xs.chunks_exact_mut(h).zip(os.chunks_exact_mut(h)).zip(inv_std.iter_mut()) {
        let mean = x.iter().sum::<f64>() / h as f64;
        let mut var = 0.0;
        for v in x.iter_mut() {
            *v -= mean;
            var += *v * *v;
        }
        *s = 1.0 / (var / h as f64 + LN_EPS).sqrt();
        for k in 0..h {
            x[k] *= *s;
            o[k] = g[k] * x[k] + b[k];
        }
    }
    Norm { xhat, inv_std, out }
}

/// Returns `dz` and accumulates gain/bias gradients.
fn layer_norm_back(
    dout: &Array2<f64>,
    norm: &Norm,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    let h = dout.ncols();
    let hf = h as f64;
    let g = gain.as_slice().expect("contiguous");
    let dg = dgain.as_slice_mut().expect("contiguous");
    let db = dbias.as_slice_mut().expect("contiguous");
    let mut dz = Array2::zeros(dout.raw_dim());
    let mut dx = vec![0.0; h];
    for (((dzr, d), xh), &s) in dz
        .as_slice_mut()
        .expect("standard layout")
        .chunks_exact_mut(h)
        .zip(dout.as_slice().expect("standard layout").chunks_exact(h))
        .zip(norm.xhat.as_slice().expect("standard layout").chunks_exact(h))
        .zip(norm.inv_std.iter())
    {
        let (mut sum_dx, mut sum_dx_xh) = (0.0, 0.0);
        for k in 0..h {
            dg[k] += d[k] * xh[k];
            db[k] += d[k];
            dx[k] = d[k] * g[k];
            sum_dx += dx[k];
            sum_dx_xh += dx[k] * xh[k];
        }
        let (mean_dx, mean_dx_xh) = (sum_dx / hf, sum_dx_xh / hf);
        for k in 0..h {
            dzr[k] = s * (dx[k] - mean_dx - xh[k] * mean_dx_xh);
        }
    }
    dz
}

fn mean_gather(src: &Array2<f64>, ptr: &[usize], idx: &[usize]) -> Array2<f64> {
    let (rows, h) = (ptr.len() - 1, src.ncols());
    let mut out = Array2::zeros((rows, h));
    let src = src.as_slice().expect("standard layout");
    for (i, row) in out.as_slice_mut().expect("standard layout").chunks_exact_mut(h).enumerate() {
        let nbrs = &idx[ptr[i]..ptr[i + 1]];
        if nbrs.is_empty() {
            continue;
        }
        for &j in nbrs {
            for (o, &v) in row.iter_mut().zip(&src[j * h..(j + 1) * h]) {
                *o += v;
            }
        }
        let w = 1.0 / nbrs.len() as f64;
        row.iter_mut().for_each(|o| *o *= w);
    }
    out
}

/// Adjoint of [`mean_gather`]: scatters `dout` back onto `src_rows` rows.
fn mean_scatter(dout: &Array2<f64>, ptr: &[usize], idx: &[usize], src_rows: usize) -> Array2<f64> {
    let h = dout.ncols();
    let mut d = Array2::zeros((src_rows, h));
    let ds = d.as_slice_mut().expect("standard layout");
    for (i, row) in dout.as_slice().expect("standard layout").chunks_exact(h).enumerate() {
        let nbrs = &idx[ptr[i]..ptr[i + 1]];
        if nbrs.is_empty() {
            continue;
        }
        let w = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            for (o, &v) in ds[j * h..(j + 1) * h].iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
    d
}

/// `E·v` for `E` stored `(out, in)` and `v` a `(1, in)` row.
fn project(e: &Array2<f64>, v: &Array2<f64>) -> Array1<f64> {
    e.dot(&v.row(0))
}

impl QNet {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        QNet {
            params: Params::init(&arch, seed),
            arch,
        }
    }

    pub fn from_params(arch: Architecture, params: Params) -> Result<Self> {
        if !params.check_layout(&arch) {
            return Err(Error::Contract("parameter shapes do not match the architecture".into()));
        }
        Ok(QNet { arch, params })
    }

    fn t(&self, k: usize) -> &Array2<f64> {
        &self.params.tensors[k]
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.var.ncols() != self.arch.var_features || g.cons.ncols() != self.arch.cons_features {
            return Err(Error::Contract(format!(
                "state has {} variable / {} constraint features, network expects {} / {}",
                g.var.ncols(),
                g.cons.ncols(),
                self.arch.var_features,
                self.arch.cons_features
            )));
        }
        Ok(())
    }

    /// Q-values of every variable of one state (mask not applied).
    pub fn forward(&self, state: &BipartiteState) -> Result<Array1<f64>> {
        Ok(self.forward_pass(Graph::from_state(state)?)?.q)
    }

    /// Q-values of each state of a batch, evaluated as one disjoint graph.
    pub fn forward_batch(&self, states: &[&BipartiteState]) -> Result<Vec<Array1<f64>>> {
        let pass = self.forward_pass(Graph::batch(states)?)?;
        Ok(pass
            .graph
            .var_ranges
            .iter()
            .map(|&(a, b)| pass.q.slice(ndarray::s![a..b]).to_owned())
            .collect())
    }

    pub fn forward_pass(&self, graph: Graph) -> Result<ForwardPass> {
        self.check_graph(&graph)?;
        let slope = self.arch.leaky_slope;
        let act = |n: &Norm| n.out.mapv(|v| leaky(v, slope));

        let var_emb = layer_norm(
            linear(&graph.var, self.t(EMB_VAR_W), self.t(EMB_VAR_B)),
            self.t(EMB_VAR_G),
            self.t(EMB_VAR_BETA),
        );
        let cons_emb = layer_norm(
            linear(&graph.cons, self.t(EMB_CONS_W), self.t(EMB_CONS_B)),
            self.t(EMB_CONS_G),
            self.t(EMB_CONS_BETA),
        );
        let mut hv = vec![act(&var_emb)];
        let mut hc = vec![act(&cons_emb)];
        let mut halves = Vec::with_capacity(2 * self.arch.conv_pairs);
        for pair in 0..self.arch.conv_pairs {
            // variable -> constraint
            let base = self.arch.half(2 * pair);
            let agg = mean_gather(&hv[pair], &graph.c_ptr, &graph.c_idx);
            let z = self.half_pre(base, &hc[pair], &agg, &graph.c_mean_edge, &graph.c_has_edge);
            let norm = layer_norm(z, self.t(base + HALF_G), self.t(base + HALF_BETA));
            hc.push(act(&norm));
            halves.push(Half { agg, norm });
            // constraint -> variable
            let base = self.arch.half(2 * pair + 1);
            let agg = mean_gather(&hc[pair + 1], &graph.v_ptr, &graph.v_idx);
            let z = self.half_pre(base, &hv[pair], &agg, &graph.v_mean_edge, &graph.v_has_edge);
            let norm = layer_norm(z, self.t(base + HALF_G), self.t(base + HALF_BETA));
            hv.push(act(&norm));
            halves.push(Half { agg, norm });
        }
        let head = self.arch.head();
        let head_pre = linear(hv.last().expect("embedding"), self.t(head + HEAD_W1), self.t(head + HEAD_B1));
        let head_act = head_pre.mapv(|v| leaky(v, slope));
        let w2 = self.t(head + HEAD_W2).row(0);
        let b2 = self.t(head + HEAD_B2)[[0, 0]];
        let z = head_act.dot(&w2) + b2;
        let q = match self.arch.final_activation {
            FinalActivation::NegLeakyRelu => z.mapv(|v| -leaky(v, slope)),
            FinalActivation::MinSideLeak => z.mapv(|v| v.min(slope * v)),
        };
        Ok(ForwardPass {
            q,
            graph,
            var_emb,
            cons_emb,
            hv,
            hc,
            halves,
            head_pre,
            head_act,
            z,
        })
    }

    /// Pre-activation of a half-convolution. The mean edge embedding of a
    /// node is `mean_e·w + has·b`, so its image under the edge weight is a
    /// combination of two fixed vectors.
    fn half_pre(
        &self,
        base: usize,
        own: &Array2<f64>,
        agg: &Array2<f64>,
        mean_e: &[f64],
        has: &[f64],
    ) -> Array2<f64> {
        let mut z = linear(own, self.t(base + HALF_SELF), self.t(base + HALF_B));
        z += &agg.dot(&self.t(base + HALF_MSG).t());
        let e = self.t(base + HALF_EDGE);
        let (pw, pb) = (project(e, self.t(EMB_EDGE_W)), project(e, self.t(EMB_EDGE_B)));
        for ((mut row, &me), &h) in z.rows_mut().into_iter().zip(mean_e).zip(has) {
            if h != 0.0 {
                row.scaled_add(me, &pw);
                row += &pb;
            }
        }
        z
    }

    /// Gradient of `Σ_j dq_j·q_j` with respect to every parameter.
    pub fn backward(&self, pass: &ForwardPass, dq: &Array1<f64>) -> Result<Params> {
        if dq.len() != pass.q.len() {
            return Err(Error::Contract(format!(
                "upstream gradient has length {}, forward produced {}",
                dq.len(),
                pass.q.len()
            )));
        }
        let slope = self.arch.leaky_slope;
        let g = &pass.graph;
        let mut grads = self.params.zeros_like();
        let head = self.arch.head();

        let dz: Array1<f64> = match self.arch.final_activation {
            FinalActivation::NegLeakyRelu => {
                ndarray::Zip::from(dq).and(&pass.z).map_collect(|&d, &z| -d * leaky_grad(z, slope))
            }
            FinalActivation::MinSideLeak => ndarray::Zip::from(dq)
                .and(&pass.z)
                .map_collect(|&d, &z| d * if z < 0.0 { 1.0 } else { slope }),
        };
        let w2 = self.t(head + HEAD_W2);
        grads.tensors[head + HEAD_W2]
            .row_mut(0)
            .assign(&pass.head_act.t().dot(&dz));
        grads.tensors[head + HEAD_B2][[0, 0]] = dz.sum();
        let dz2 = dz.insert_axis(Axis(1));
        let mut dpre = dz2.dot(&w2.view());
        dpre.zip_mut_with(&pass.head_pre, |d, &x| *d *= leaky_grad(x, slope));
        let hv_last = pass.hv.last().expect("embedding");
        grads.tensors[head + HEAD_W1] = dpre.t().dot(hv_last);
        grads.tensors[head + HEAD_B1].row_mut(0).assign(&dpre.sum_axis(Axis(0)));
        let mut dhv = dpre.dot(self.t(head + HEAD_W1));
        let mut dhc = Array2::zeros(pass.hc.last().expect("embedding").raw_dim());

        for pair in (0..self.arch.conv_pairs).rev() {
            // constraint -> variable
            let k = 2 * pair + 1;
            let base = self.arch.half(k);
            let half = &pass.halves[k];
            let dz = self.norm_act_back(&dhv, &half.norm, base + HALF_G, base + HALF_BETA, &mut grads);
            self.half_param_grads(base, &dz, &pass.hv[pair], &half.agg, &g.v_mean_edge, &g.v_has_edge, &mut grads);
            let dagg = dz.dot(self.t(base + HALF_MSG));
            dhc += &mean_scatter(&dagg, &g.v_ptr, &g.v_idx, g.num_cons());
            let dhv_prev = dz.dot(self.t(base + HALF_SELF));
            // variable -> constraint
            let k = 2 * pair;
            let base = self.arch.half(k);
            let half = &pass.halves[k];
            let dz = self.norm_act_back(&dhc, &half.norm, base + HALF_G, base + HALF_BETA, &mut grads);
            self.half_param_grads(base, &dz, &pass.hc[pair], &half.agg, &g.c_mean_edge, &g.c_has_edge, &mut grads);
            let dagg = dz.dot(self.t(base + HALF_MSG));
            dhv = dhv_prev + mean_scatter(&dagg, &g.c_ptr, &g.c_idx, g.num_vars());
            dhc = dz.dot(self.t(base + HALF_SELF));
        }

        // node embeddings
        let dav = self.norm_act_back(&dhv, &pass.var_emb, EMB_VAR_G, EMB_VAR_BETA, &mut grads);
        grads.tensors[EMB_VAR_W] = dav.t().dot(&g.var);
        grads.tensors[EMB_VAR_B].row_mut(0).assign(&dav.sum_axis(Axis(0)));
        let dac = self.norm_act_back(&dhc, &pass.cons_emb, EMB_CONS_G, EMB_CONS_BETA, &mut grads);
        grads.tensors[EMB_CONS_W] = dac.t().dot(&g.cons);
        grads.tensors[EMB_CONS_B].row_mut(0).assign(&dac.sum_axis(Axis(0)));
        Ok(grads)
    }

    /// Back through `LeakyReLU(LayerNorm(z))`, returning `dz`.
    fn norm_act_back(&self, dh: &Array2<f64>, norm: &Norm, gain: usize, bias: usize, grads: &mut Params) -> Array2<f64> {
        let slope = self.arch.leaky_slope;
        let mut dout = dh.clone();
        dout.zip_mut_with(&norm.out, |d, &x| *d *= leaky_grad(x, slope));
        let (mut dg, mut db) = (grads.tensors[gain].clone(), grads.tensors[bias].clone());
        let dz = layer_norm_back(&dout, norm, self.t(gain), &mut dg, &mut db);
        grads.tensors[gain] = dg;
        grads.tensors[bias] = db;
        dz
    }

    #[allow(clippy::too_many_arguments)]
    fn half_param_grads(
        &self,
        base: usize,
        dz: &Array2<f64>,
        own: &Array2<f64>,
        agg: &Array2<f64>,
        mean_e: &[f64],
        has: &[f64],
        grads: &mut Params,
    ) {
        grads.tensors[base + HALF_SELF] += &dz.t().dot(own);
        grads.tensors[base + HALF_MSG] += &dz.t().dot(agg);
        // u = Σ mean_e·dz, v = Σ has·dz; dE = u wᵀ + v bᵀ, dw = Eᵀu, db = Eᵀv
        let u = dz.t().dot(&ndarray::ArrayView1::from(mean_e));
        let v = dz.t().dot(&ndarray::ArrayView1::from(has));
        let (w, b) = (self.t(EMB_EDGE_W).row(0), self.t(EMB_EDGE_B).row(0));
        let e = self.t(base + HALF_EDGE);
        let de = &mut grads.tensors[base + HALF_EDGE];
        for (o, mut row) in de.rows_mut().into_iter().enumerate() {
            row.scaled_add(u[o], &w);
            row.scaled_add(v[o], &b);
        }
        let dw = e.t().dot(&u);
        let db = e.t().dot(&v);
        grads.tensors[EMB_EDGE_W].row_mut(0).scaled_add(1.0, &dw);
        grads.tensors[EMB_EDGE_B].row_mut(0).scaled_add(1.0, &db);
        grads.tensors[base + HALF_B]
            .row_mut(0)
            .scaled_add(1.0, &dz.sum_axis(Axis(0)));
    }
}
