use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array1;
use retrobranch::features::BipartiteState;
use retrobranch::qnet::{Architecture, Graph, QNet};
use retrobranch_bench::states;
use std::hint::black_box;

fn forward_single(c: &mut Criterion) {
    let s = states(0, 1);
    let net = QNet::new(Architecture::default(), 0);
    c.bench_function("qnet_forward_single_state", |b| b.iter(|| net.forward(black_box(&s[0])).unwrap()));
}

fn forward_backward_batch(c: &mut Criterion) {
    let s = states(0, 32);
    let refs: Vec<&BipartiteState> = s.iter().map(|x| x.as_ref()).collect();
    let net = QNet::new(Architecture::default(), 0);
    let mut group = c.benchmark_group("qnet_batch_32");
    group.sample_size(10);
    group.bench_function("forward_backward", |b| {
        b.iter(|| {
            let pass = net.forward_pass(Graph::batch(&refs).unwrap()).unwrap();
            let dq = Array1::ones(pass.q.len());
            net.backward(&pass, &dq).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, forward_single, forward_backward_batch);
criterion_main!(benches);
