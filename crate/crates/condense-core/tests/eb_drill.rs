//! Clamping soundness drill: across simulated replicates of the built-in
//! truths, the estimated hyperparameters should land inside the K_n box
//! almost always.

use condense_core::eb::{clamp_to_kn, default_kn_box, estimate_hyperparams};
use condense_core::rng::{mix_seed, RngStream};
use condense_core::simulate::{generate_dataset, TruthSpec};

#[test]
fn clamp_flags_fire_rarely_across_replicates() {
    let replicates = 100usize;
    for truth in [TruthSpec::t1(), TruthSpec::t3()] {
        for n in [200usize, 500, 1000, 2000] {
            let mut flagged = 0usize;
            for rep in 0..replicates {
                let seed = mix_seed(&[991, n as u64, rep as u64]);
                let mut rng = RngStream::new(seed, 0);
                let data = generate_dataset(&truth, n, &mut rng).unwrap();
                let gamma = estimate_hyperparams(&data, 3.0).unwrap();
                let kn = default_kn_box(n, 1).unwrap();
                let report = clamp_to_kn(&gamma, &kn).unwrap();
                if report.clamped_flags.any() {
                    flagged += 1;
                }
            }
            assert!(
                flagged * 20 <= replicates,
                "{} at n={n}: {flagged}/{replicates} replicates clamped",
                truth.name()
            );
        }
    }
}
