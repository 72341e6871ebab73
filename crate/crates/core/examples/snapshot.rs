//! Saves a forest to JSON, reloads it and checks predictions agree.

use hirf::forest::{train_offline, Forest, ForestConfig};
use hirf::harness::{generate_synthetic, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hirf::Result<()> {
    let d = generate_synthetic(&SyntheticSpec::separated(4, 50, 4, 1.0, 2))?;
    let cfg = ForestConfig {
        n_trees: 5,
        ..ForestConfig::default()
    };
    let f = train_offline(&d, &cfg, &mut ChaCha8Rng::seed_from_u64(2))?;

    let path = std::env::temp_dir().join("hirf_snapshot_example.json");
    f.save(&path)?;
    let g = Forest::load(&path)?;
    let agree = d
        .iter()
        .filter(|s| f.predict(&s.x).ok() == g.predict(&s.x).ok())
        .count();
    println!(
        "wrote {} ({} bytes); {agree}/{} predictions agree after reload",
        path.display(),
        std::fs::metadata(&path)?.len(),
        d.len()
    );
    for (i, digest) in g.structure_digests().iter().enumerate() {
        println!("tree {i}: {}", &digest[..16]);
    }
    Ok(())
}
