//! Trains an offline forest on synthetic blobs and reports held-out accuracy.

use hirf::data;
use hirf::forest::{train_offline, ForestConfig, VoteMode};
use hirf::harness::{generate_synthetic, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hirf::Result<()> {
    let d = generate_synthetic(&SyntheticSpec::separated(6, 200, 8, 1.0, 3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (train, test) = data::stratified_split(&d, 0.2, &mut rng)?;

    for vote in [VoteMode::Soft, VoteMode::Hard] {
        let cfg = ForestConfig {
            vote,
            ..ForestConfig::default()
        };
        let f = train_offline(&train, &cfg, &mut rng)?;
        let oob = f.oob_errors();
        println!(
            "{vote:?} vote: {} trees, test accuracy {:.4}, mean out-of-bag error {:.4}",
            f.len(),
            f.accuracy(&test)?,
            oob.iter().sum::<f64>() / oob.len() as f64
        );
    }
    Ok(())
}
