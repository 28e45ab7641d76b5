//! Fit increasing orders and choose the one with the smallest AIC.

use coxian::fitter::{select_order, FitOptions};
use coxian::sampler::sample_dataset;
use coxian::CoxianParams;

fn main() -> coxian::Result<()> {
    let truth = CoxianParams::new(vec![0.9], vec![0.05, 0.3])?;
    let data = sample_dataset(&truth, 3000, 5)?;
    let opts = FitOptions {
        n_starts: 4,
        standard_errors: false,
        ..FitOptions::default()
    };
    let sel = select_order(&data, 3, &opts)?;
    println!("order  loglik        AIC");
    for row in &sel.table {
        match &row.best {
            Some(f) => println!("{:>5}  {:>10.3}  {:>10.3}", row.order, f.loglik, f.aic),
            None => println!("{:>5}  no converged start", row.order),
        }
    }
    println!("selected order {}", sel.best_order);
    Ok(())
}
