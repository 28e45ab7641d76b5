//! Draw a sample from a two-phase model and fit it back from several starts.

use coxian::fitter::{distinct_modes, fit_mle, FitOptions};
use coxian::sampler::sample_dataset;
use coxian::CoxianParams;

fn main() -> coxian::Result<()> {
    let truth = CoxianParams::new(vec![0.8], vec![0.2, 0.5])?;
    let data = sample_dataset(&truth, 2000, 17)?;
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    println!("{} observations, sample mean {mean:.3}", data.len());

    let opts = FitOptions {
        n_starts: 5,
        seed: 1,
        ..FitOptions::default()
    };
    let fits = fit_mle(&data, 2, &opts)?;
    for f in &fits {
        println!(
            "start {}: loglik {:.4} lambda {:?} mu {:?} ({} evaluations{})",
            f.start_index,
            f.loglik,
            f.params.lambda(),
            f.params.mu(),
            f.n_evaluations,
            if f.converged { "" } else { ", not converged" }
        );
    }
    let best = &fits[0];
    if let Some(se) = &best.standard_errors {
        println!("standard errors (lambda.., mu..): {se:.4?}");
    }
    println!("distinct modes: {}", distinct_modes(&fits, 1e-4).len());
    println!("truth: lambda {:?} mu {:?}", truth.lambda(), truth.mu());
    Ok(())
}
