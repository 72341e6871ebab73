//! One incremental round: a forest trained on four classes absorbs two more.

use std::collections::BTreeSet;

use hirf::data::{self, Label};
use hirf::forest::{train_offline, ForestConfig};
use hirf::harness::{generate_synthetic, SyntheticSpec};
use hirf::incremental::absorb_batch;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hirf::Result<()> {
    let d = generate_synthetic(&SyntheticSpec::separated(6, 150, 8, 1.0, 5))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (train, test) = data::stratified_split(&d, 0.2, &mut rng)?;

    let first: BTreeSet<Label> = (1..=4).map(Label).collect();
    let old = train.restrict_to(&first);
    let new = train.filter(|s| !first.contains(&s.y));

    let f = train_offline(&old, &ForestConfig::default(), &mut rng)?;
    println!(
        "before: accuracy on all six classes {:.4}",
        f.accuracy(&test)?
    );

    let (g, report) = absorb_batch(&f, &old, &new, &mut rng)?;
    println!(
        "threshold {:.4}: {} retrained, {} updated in {:.1} ms",
        report.delta, report.n_retrained, report.n_updated, report.train_time_ms
    );
    for t in &report.trees {
        println!(
            "  tree {:>2} {:?} oob {:.3} -> {:.3}",
            t.tree, t.decision, t.oob_in, t.oob_out
        );
    }
    println!(
        "after: accuracy on all six classes {:.4}",
        g.accuracy(&test)?
    );
    Ok(())
}
