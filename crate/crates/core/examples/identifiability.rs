//! Fit a three-phase model, then recover the equivalent maxima that a
//! multi-start search may or may not have visited.

use coxian::fitter::{distinct_modes, fit_mle, loglik, FitOptions};
use coxian::sampler::sample_dataset;
use coxian::{enumerate_representations, CoxianParams, EnumerateOptions};

fn main() -> coxian::Result<()> {
    let truth = CoxianParams::new(vec![0.55, 0.05], vec![0.003, 0.15, 0.1])?;
    let data = sample_dataset(&truth, 5000, 2024)?;
    let opts = FitOptions {
        n_starts: 10,
        seed: 7,
        standard_errors: false,
        ..FitOptions::default()
    };
    let fits = fit_mle(&data, 3, &opts)?;
    let modes = distinct_modes(&fits, 1e-4);
    println!(
        "{} starts reached {} distinct modes",
        fits.len(),
        modes.len()
    );
    for m in &modes {
        println!(
            "  loglik {:.4} LoS {:.2?} ({} evaluations)",
            m.loglik,
            m.params.los(),
            m.n_evaluations
        );
    }

    let best = &fits[0];
    let set = enumerate_representations(&best.params.to_generator(), EnumerateOptions::default())?;
    println!(
        "\nthe best fit has {} representations:",
        set.representations.len()
    );
    for rep in &set.representations {
        println!(
            "  lambda {:.4?} mu {:.4?} LoS {:.2?} loglik {:.6}",
            rep.lambda(),
            rep.mu(),
            rep.los(),
            loglik(rep, &data)?
        );
    }
    Ok(())
}
