//! Out-of-bag threshold estimation, retrain/update decisions and boosting.

use hirf::incremental::{boost, classify_trees, oob_boosting, oob_estimation};

fn main() -> hirf::Result<()> {
    let errors = [0.05, 0.12, 0.40, 0.08, 0.55, 0.10];
    let state = oob_estimation(&errors)?;
    println!(
        "mu {:.4}  sigma2 {:.5}  delta {:.4}  log-likelihood {:.3}",
        state.mu,
        state.sigma2,
        state.delta,
        state.log_likelihood()
    );

    let decisions = classify_trees(&state, &errors);
    let boosted = oob_boosting(&errors, &decisions, 0.1);
    for ((o, d), b) in errors.iter().zip(&decisions).zip(&boosted) {
        println!("{o:.2} {d:?} -> {b:.4}");
    }

    println!("boost curve at alpha 0.5:");
    for o in [0.0, 0.1, 0.25, 0.5, 1.0] {
        println!("  {o:.2} -> {:.4}", boost(o, 0.5));
    }
    Ok(())
}
