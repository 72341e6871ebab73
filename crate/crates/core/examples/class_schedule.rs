//! Runs a full class-arrival schedule next to an offline baseline.

use hirf::data::{self, ArrivalSchedule};
use hirf::forest::ForestConfig;
use hirf::harness::{generate_synthetic, SyntheticSpec};
use hirf::incremental::{run_schedule, ScheduleOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hirf::Result<()> {
    let d = generate_synthetic(&SyntheticSpec::separated(10, 200, 16, 1.0, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (train, test) = data::stratified_split(&d, 0.2, &mut rng)?;
    let sched = ArrivalSchedule::stepped(d.classes(), 2, 2)?;
    println!("schedule: {}", serde_json::to_string(&sched)?);

    let out = run_schedule(
        &train,
        &test,
        &sched,
        &ForestConfig::default(),
        ScheduleOptions::default(),
        &mut rng,
    )?;
    println!("round classes  hi-RF  offline  n1  n2  t_hirf   t_off");
    for r in &out.reports {
        let b = r.baseline.as_ref().expect("baseline enabled");
        println!(
            "{:>5} {:>7} {:>6.4} {:>8.4} {:>3} {:>3} {:>6.1} {:>7.1}",
            r.round_index,
            r.n_classes,
            r.accuracy_after.unwrap_or(f64::NAN),
            b.accuracy,
            r.n_retrained,
            r.n_updated,
            r.train_time_ms,
            b.train_time_ms
        );
    }
    Ok(())
}
