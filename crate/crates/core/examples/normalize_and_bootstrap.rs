//! Fits a normalizer, draws bootstrap replicates and inspects the left-out sets.

use hirf::data::{self, Dataset, Label};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hirf::Result<()> {
    let rows = vec![
        vec![1.0, 200.0],
        vec![2.0, 180.0],
        vec![3.0, 220.0],
        vec![10.0, 20.0],
        vec![11.0, 25.0],
        vec![12.0, 15.0],
    ];
    let labels = [Label(1), Label(1), Label(1), Label(2), Label(2), Label(2)];
    let d = Dataset::from_rows(rows, &labels)?;

    let stats = data::fit_normalizer(&d)?;
    println!("mean {:?}", stats.mean);
    println!("std  {:?}", stats.std);
    for s in &d {
        println!("{:>2} {:?} -> {:.3?}", s.id, s.x, stats.apply(&s.x));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t in 0..3 {
        let boot = data::bootstrap(&d, t, &mut rng)?;
        let out = data::left_out(&d, &boot);
        let ids: Vec<u64> = out.iter().map(|s| s.id).collect();
        println!("tree {t}: drew {:?}, left out {:?}", boot.sample_ids, ids);
    }
    Ok(())
}
