//! Grows a single nearest-class-mean tree and prints its shape and predictions.

use hirf::data::{Dataset, Label};
use hirf::tree::{self, SplitSearch, TreeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hirf::Result<()> {
    let centres = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0], [6.0, 6.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for k in 0..10 {
            let jitter = (k as f64 - 4.5) / 5.0;
            rows.push(vec![centre[0] + jitter, centre[1] - jitter]);
            labels.push(Label(c as u32 + 1));
        }
    }
    let d = Dataset::from_rows(rows, &labels)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for search in [SplitSearch::default(), SplitSearch::Exhaustive] {
        let cfg = TreeConfig {
            search,
            ..TreeConfig::default()
        };
        let t = tree::grow(&d, &cfg, &mut rng)?;
        println!(
            "{search:?}: depth {}, {} internal nodes, {} leaves",
            t.depth(),
            t.n_internal(),
            t.n_leaves()
        );
        for x in [[0.5, 0.2], [5.5, 6.5], [3.2, 2.9]] {
            println!("  {x:?} -> {} {:?}", t.predict(&x)?, t.predict_proba(&x)?);
        }
    }
    Ok(())
}
