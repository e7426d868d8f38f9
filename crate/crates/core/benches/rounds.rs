use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedskip::data::{dirichlet_partition, make_synthetic};
use fedskip::fed::{RoundInputs, Server, SgdTrainer, SkipThresholds, Strategy};
use fedskip::nn::{build_model, evaluate, Arch, TrainConfig};
use fedskip::par::Execution;
use fedskip::twin::{TwinConfig, TwinModel};

const EXECUTIONS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_round(c: &mut Criterion) {
    let all = make_synthetic(3000, 6, 64, 1).unwrap();
    let train = all.subset(&(0..2500).collect::<Vec<_>>()).unwrap();
    let test = all.subset(&(2500..3000).collect::<Vec<_>>()).unwrap();
    let partition = dirichlet_partition(&train, 10, 0.5, 1).unwrap();
    let trainer = SgdTrainer {
        train: &train,
        config: TrainConfig {
            learning_rate: 0.05,
            local_epochs: 1,
            batch_size: 32,
            rng_seed: 1,
        },
    };
    let arch = Arch::HarMlp {
        input_dim: 64,
        num_classes: 6,
    };
    let mut group = c.benchmark_group("round");
    group.sample_size(10);
    for (name, exec) in EXECUTIONS {
        let inputs = RoundInputs {
            strategy: Strategy::FedSkipTwin(SkipThresholds::new(0.001, 0.001).unwrap()),
            partition: &partition,
            trainer: &trainer,
            test: &test,
            exec,
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let twins = (0..10).map(|i| TwinModel::new(TwinConfig::default(), i)).collect();
                let mut server = Server::new(build_model(arch, 1), twins);
                server.run_round(1, &inputs).unwrap().cumulative_bytes
            })
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let test = make_synthetic(2000, 10, 784, 2).unwrap();
    let test = fedskip::data::LabeledDataset::new(test.inputs().to_vec(), test.labels().to_vec(), 10, vec![1, 28, 28])
        .unwrap();
    let params = build_model(Arch::MnistCnn, 2);
    let mut group = c.benchmark_group("evaluate_mnist_cnn");
    group.sample_size(10);
    for (name, exec) in EXECUTIONS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(&params, &test, exec).unwrap().accuracy)
        });
    }
    group.finish();
}

criterion_group!(benches, bench_round, bench_evaluate);
criterion_main!(benches);
