use std::path::PathBuf;

use dgmlab::domain::{build_grid, DomainSpec};
use dgmlab::experiments::{run_kernel_validation, ExperimentConfig};
use dgmlab::kernel::{assemble_kernels, MCKernelConfig, UnitSamples};
use dgmlab::training::train_dgm;

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn kernel_assembly_is_independent_of_thread_count() {
    let cfg = config("residual_decay.toml");
    let model = cfg.kernel_model();
    let grid = build_grid(&DomainSpec::unit_interval(), &[12]).unwrap();
    let assemble = || {
        let samples = UnitSamples::draw(&model.dist, 1, &MCKernelConfig::new(5000, 3).unwrap()).unwrap();
        assemble_kernels(&model, &samples, &grid, None).s
    };
    let one = with_threads(1, assemble);
    let four = with_threads(4, assemble);
    assert_eq!(one, four);
}

#[test]
fn training_is_bitwise_reproducible_across_thread_counts() {
    let cfg = config("wide_limit.toml");
    let grid = cfg.grid().unwrap();
    let (arch, problem) = (cfg.architecture(), cfg.problem().unwrap());
    let mut tc = cfg.train_config().unwrap();
    tc.horizon = 0.2;
    let run = || {
        let p0 = dgmlab::network::init_params(50, 1, &cfg.init_distribution(), 0.6, 7).unwrap();
        train_dgm(&p0, &arch, &problem, &grid, &cfg.clip_thresholds(50), &tc).unwrap()
    };
    let (p1, t1) = with_threads(1, run);
    let (p3, t3) = with_threads(3, run);
    assert_eq!(p1, p3);
    assert_eq!(t1.objective, t3.objective);
}

#[test]
fn study_tables_repeat_exactly() {
    let mut cfg = config("kernel_check.toml");
    cfg.make_quick();
    let a = run_kernel_validation(&cfg, true).unwrap();
    let b = run_kernel_validation(&cfg, true).unwrap();
    assert_eq!(serde_json::to_string(&a.tables).unwrap(), serde_json::to_string(&b.tables).unwrap());
}
