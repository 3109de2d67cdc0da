use condense_core::config::RunConfig;
use condense_core::inference::{run_chain, ChainConfig, LikelihoodMode, posterior_mean_density};
use condense_core::metrics::{l1_q, QuadratureSpec};
use condense_core::model::PriorConfig;
use condense_core::rng::RngStream;
use condense_core::simulate::{generate_dataset, truth_density, TruthSpec};
use condense_core::study::{fit_y_grid, table_density_fn};
use condense_core::util::mean;
use std::time::Instant;

fn main() {
    // T3 at n=1000 with the coordinate-contraction move.
    let truth = TruthSpec::t3();
    let mut rng0 = RngStream::new(5, 3);
    let nodes: Vec<Vec<f64>> = (0..100).map(|_| (0..3).map(|_| rng0.uniform()).collect()).collect();
    let f_true = |x: &[f64], y: f64| truth_density(&truth, x, &[y]).unwrap();
    for seed in [1u64, 2, 3] {
        let mut rng = RngStream::new(100 + seed, 1);
        let data = generate_dataset(&truth, 1000, &mut rng).unwrap();
        let gamma = condense_core::eb::estimate_hyperparams(&data, 3.0).unwrap();
        let kn = condense_core::eb::default_kn_box(data.len(), 1).unwrap();
        let clamped = condense_core::eb::clamp_to_kn(&gamma, &kn).unwrap().clamped_gamma;
        let prior = PriorConfig::new(3.0, 1.0, 3, 1, 30, clamped).unwrap();
        let ch = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, seed);
        let t0 = Instant::now();
        let draws = run_chain(&data, &prior, &ch).unwrap();
        let yg = fit_y_grid(&data, &draws, 241).unwrap();
        let table = posterior_mean_density(&draws.draws, &nodes, &yg).unwrap();
        let quad = QuadratureSpec::mc_design(nodes.clone(), yg.clone(), 1e-3).unwrap();
        let fhat = table_density_fn(&table);
        // irrelevant-coordinate spread of final state atoms
        let last = draws.draws.last().unwrap();
        let spread: f64 = (1..3).map(|k| {
            let coords: Vec<f64> = (0..last.n_components()).map(|j| last.mu_x_row(j)[k]).collect();
            let m = mean(&coords);
            (coords.iter().map(|c| (c - m).powi(2)).sum::<f64>() / coords.len() as f64).sqrt()
        }).sum::<f64>() / 2.0;
        println!("T3 seed {seed}: L1 {:.4} sigma {:.3} | irrelevant sd {:.4} | acc coord {:.2} | {:.0}s",
            l1_q(&fhat, &f_true, &quad).unwrap(), mean(&draws.sigma_trace()),
            spread, draws.acceptance_rates.coord_scale, t0.elapsed().as_secs_f64());
    }
}
