//! Sequential vs parallel execution of the solvers and the experiment
//! runner. Without the `parallel` feature both variants run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hetnet_core::admm::{admm_solve, AdmmConfig};
use hetnet_core::oracle::{min_active_set, vertex_cover_instance};
use hetnet_core::swmmse::{swmmse_solve, SwmmseConfig};
use hetnet_core::{generate_network, run_experiment, Execution, ExperimentSpec, Graph, Mode, NetworkParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn admm(c: &mut Criterion) {
    let p = NetworkParams {
        cells: 3,
        bs_per_cell: 8,
        users_per_cell: 5,
        tx_antennas: 3,
        sinr_target_db: 10.0,
        noise_power: 0.1,
        ..NetworkParams::default()
    };
    let net = generate_network(&p, 0).unwrap();
    let mut g = c.benchmark_group("admm_200_iters");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = AdmmConfig {
            max_iters: 200,
            // Never met: every sample runs the full iteration budget.
            eps_tol: f64::MIN_POSITIVE,
            infeasible_iter_cap: 200,
            execution: exec,
            ..AdmmConfig::power_min()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| admm_solve(&net, &cfg, None)));
    }
    g.finish();
}

fn swmmse(c: &mut Criterion) {
    let p = NetworkParams {
        cells: 4,
        bs_per_cell: 4,
        users_per_cell: 4,
        tx_antennas: 4,
        rx_antennas: 2,
        noise_power: 1.0,
        ..NetworkParams::default()
    }
    .with_total_budget_db(10.0);
    let net = generate_network(&p, 0).unwrap();
    let mut g = c.benchmark_group("swmmse_50_iters");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SwmmseConfig {
            max_outer_iters: 50,
            tol: 0.0,
            track_objective: false,
            execution: exec,
            ..SwmmseConfig::uniform(&net, 1.0, 0.0)
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| swmmse_solve(&net, &cfg, None)));
    }
    g.finish();
}

fn experiment(c: &mut Criterion) {
    let mut g = c.benchmark_group("experiment_8_realizations");
    g.sample_size(10);
    for (name, exec) in MODES {
        let spec = ExperimentSpec {
            mode: Mode::Selection,
            cells: 1,
            bs_per_cell: 4,
            users: 3,
            tau_db: 5.0,
            realizations: 8,
            reweight_rounds: 3,
            execution: exec,
            deterministic: true,
            ..ExperimentSpec::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_experiment(&spec)));
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    // A 10-cycle: the minimum active set has 4 vertices.
    let edges: Vec<(usize, usize)> = (0..10).map(|k| (k, (k + 1) % 10)).collect();
    let inst = vertex_cover_instance(&Graph::new(10, &edges).unwrap());
    let mut g = c.benchmark_group("min_active_set_cycle10");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| min_active_set(&inst, exec)));
    }
    g.finish();
}

criterion_group!(benches, admm, swmmse, experiment, oracle);
criterion_main!(benches);
