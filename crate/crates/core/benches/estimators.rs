use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kstep::exec::{substream, Execution};
use kstep::models::{LogitModel, ModelKind};
use kstep::oracle::{exact_moments, EnumerationSpec};
use kstep::returns::{estimator_stats, IidConstruction, ReturnConfig};
use kstep::seqmdp::{State, Vocabulary};
use kstep::teacher::TeacherQ;
use kstep::trainer::{batch_gradient, sample_batch, Estimator};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn iid(c: &mut Criterion) {
    let cons = IidConstruction {
        sigma2_sa: 1.0,
        sigma2_s: 0.5,
        span: 16,
    };
    let mut g = c.benchmark_group("iid_measure_100k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(cons.measure(&[1, 2, 4, 8], 100_000, 0, exec)))
        });
    }
    g.finish();
}

fn desk_models() -> (LogitModel, TeacherQ, Vec<State>) {
    let v = Vocabulary::with_size(12).unwrap();
    let teacher = LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 32 }, v, 3, &mut substream(1, 0)).unwrap();
    let student = LogitModel::init_uniform(ModelKind::Mlp1 { hidden_width: 8 }, v, 3, &mut substream(2, 0)).unwrap();
    let inputs = (0..256).map(|i| State::initial(v, &[2 + i % 10]).unwrap()).collect();
    (student, TeacherQ::from_model(teacher), inputs)
}

fn rollouts_and_stats(c: &mut Criterion) {
    let (student, teacher, inputs) = desk_models();
    let trajs = sample_batch(&student, &inputs, 16, 0, 0, Execution::Parallel).unwrap();
    let cfg = ReturnConfig::k(4).unwrap();
    let mut g = c.benchmark_group("desk_scale");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("sample_batch_256", name), &exec, |b, &e| {
            b.iter(|| black_box(sample_batch(&student, &inputs, 16, 0, 1, e).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("estimator_stats_256", name), &exec, |b, &e| {
            b.iter(|| black_box(estimator_stats(&trajs, &teacher, &cfg, 0, e).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("batch_gradient_256", name), &exec, |b, &e| {
            b.iter(|| {
                black_box(
                    batch_gradient(&student, &teacher, trajs.clone(), Estimator::KStep(4), cfg.clip(), 0, e).unwrap(),
                )
            })
        });
    }
    g.finish();
}

fn enumeration(c: &mut Criterion) {
    let v = Vocabulary::with_size(4).unwrap();
    let spec = EnumerationSpec::new(v, 6, State::initial(v, &[]).unwrap()).unwrap();
    let policy = LogitModel::init_uniform(ModelKind::Linear, v, 2, &mut substream(3, 0)).unwrap();
    let teacher =
        TeacherQ::from_model(LogitModel::init_uniform(ModelKind::Linear, v, 2, &mut substream(4, 0)).unwrap());
    c.bench_function("exact_moments_v4_h6", |b| {
        b.iter(|| black_box(exact_moments(&spec, &policy, &teacher, &ReturnConfig::k(2).unwrap()).unwrap()))
    });
}

criterion_group!(benches, iid, rollouts_and_stats, enumeration);
criterion_main!(benches);
