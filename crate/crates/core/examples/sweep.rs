//! Sweeps the number of initial classes and compares against offline retraining.

use hirf::forest::ForestConfig;
use hirf::harness::{run_sweep, DataSource, SweepSpec, SyntheticSpec};

fn main() -> hirf::Result<()> {
    let out_dir = std::env::temp_dir().join("hirf_sweep_example");
    let spec = SweepSpec {
        data: DataSource::Synthetic(SyntheticSpec::separated(10, 150, 16, 1.0, 0)),
        initial_counts: vec![2, 4, 6, 8],
        forest: ForestConfig::default(),
        seed: 0,
        repeats: 2,
        test_fraction: 0.2,
        out_dir: out_dir.clone(),
    };
    let rows = run_sweep(&spec)?;
    println!("initial  acc_hirf  acc_off  gap(pts)  time ratio");
    for r in rows {
        println!(
            "{:>7} {:>9.4} {:>8.4} {:>9.2} {:>11.3}",
            r.initial_classes,
            r.acc_hirf,
            r.acc_offline,
            100.0 * r.acc_gap,
            r.time_ratio
        );
    }
    println!("wrote {}", out_dir.join("sweep.csv").display());
    Ok(())
}
