use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ewpf_bench::one_batch;
use ewpf_core::baselines::{CellKind, RecurrentConfig};
use ewpf_core::model::TransformerConfig;
use ewpf_core::training::{train_epoch, training_rng, AdamState, TrainConfig};
use ewpf_core::{Forecaster, ModelConfig, Tape};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [32, 128, 256] {
        let a: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.37).sin()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, &n| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let x = tape.variable(&[n, n], a.clone()).unwrap();
                let y = tape.matmul(x, x).unwrap();
                let l = tape.sum(y);
                black_box(tape.backward(l).unwrap());
            })
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion, name: &str, cfg: ModelConfig) {
    let model = Forecaster::new(&cfg).unwrap();
    let data = one_batch(64, cfg.seq_len(), cfg.horizon()).unwrap();
    let train = TrainConfig::default();
    let mut params = model.init_parameters(0).unwrap();
    let mut state = AdamState::new(&params);
    let mut rng = training_rng(0);
    c.bench_function(name, |bench| {
        bench.iter(|| train_epoch(&model, &mut params, &data, &mut state, &train, &mut rng, 1).unwrap())
    });
}

fn transformer_step(c: &mut Criterion) {
    let cfg = TransformerConfig::toy(32, 2, 2, 20, 1);
    train_step(c, "transformer_step_d32_l2_b64", ModelConfig::Transformer(cfg));
}

fn lstm_step(c: &mut Criterion) {
    let cfg = RecurrentConfig::toy(CellKind::Lstm, 32, 2, 20, 1);
    train_step(c, "lstm_step_h32_l2_b64", ModelConfig::Recurrent(cfg));
}

criterion_group!(benches, matmul, transformer_step, lstm_step);
criterion_main!(benches);
