use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mppt_core::control::ControllerKind;
use mppt_core::converter::PlantModel;
use mppt_core::exec::Mode;
use mppt_core::harness::{run_comparison, ScenarioConfig};
use mppt_core::lambertw::series_table;
use mppt_core::pv_model::{operating_points_from_betas, sweep_curve, DiodeModel, PVModuleParams};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn sweep(c: &mut Criterion) {
    let p = PVModuleParams::kyocera();
    let mut g = c.benchmark_group("sweep_curve");
    for points in [1_000, 20_000] {
        for (name, mode) in MODES {
            g.bench_with_input(BenchmarkId::new(name, points), &points, |b, &n| {
                b.iter(|| sweep_curve(&p, DiodeModel::OneDiode, black_box(n), mode).unwrap())
            });
        }
    }
    g.finish();
}

fn betas(c: &mut Criterion) {
    let p = PVModuleParams::kyocera();
    let betas: Vec<f64> = (1..=10_000).map(|i| 0.01 * i as f64).collect();
    let mut g = c.benchmark_group("operating_points_from_betas");
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| operating_points_from_betas(&p, black_box(&betas), mode).unwrap())
        });
    }
    g.finish();
}

fn series(c: &mut Criterion) {
    let nus: Vec<f64> = (1..=64).map(|i| 0.3 * 0.9f64.powi(i)).collect();
    let mut g = c.benchmark_group("series_table");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| series_table(black_box(&nus), mode).unwrap()));
    }
    g.finish();
}

fn comparison(c: &mut Criterion) {
    let cfg = ScenarioConfig {
        duration: 0.02,
        output_decimation: 100,
        ..ScenarioConfig::default()
    };
    let kinds = [ControllerKind::Flc, ControllerKind::Po, ControllerKind::Ic];
    let mut g = c.benchmark_group("run_comparison");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| run_comparison(&cfg, &kinds, PlantModel::Averaged, mode).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, betas, series, comparison);
criterion_main!(benches);
