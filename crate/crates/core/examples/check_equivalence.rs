//! Test two generators for equivalence and print the transform between them.

use coxian::equivalence::{check_equivalent, DEFAULT_TOL};
use coxian::{enumerate_representations, EnumerateOptions, Generator};

fn main() -> coxian::Result<()> {
    let qa = Generator::new(vec![-0.571, -0.172, -0.091], vec![0.570, 0.029])?;
    // Rounded to three decimals, the alternative no longer matches exactly.
    let rounded = Generator::new(vec![-0.172, -0.571, -0.091], vec![0.170, 0.096])?;
    let report = check_equivalent(&qa, &rounded, DEFAULT_TOL)?;
    println!("rounded alternative: equivalent = {}", report.equivalent);
    if let Some(reason) = &report.reason {
        println!("  {reason}");
    }

    let set = enumerate_representations(&qa, EnumerateOptions::default())?;
    let exact = set.representations[1].to_generator();
    println!(
        "exact alternative: diag {:?} superdiag {:?}",
        exact.diag(),
        exact.superdiag()
    );
    let report = check_equivalent(&qa, &exact, DEFAULT_TOL)?;
    println!(
        "equivalent = {}, max residual {:.1e}",
        report.equivalent, report.max_residual
    );
    if let Some(m) = &report.m {
        for row in m.to_dense() {
            println!("  {row:.4?}");
        }
    }
    let gaps: Vec<String> = report
        .moment_gaps
        .iter()
        .map(|g| format!("{g:.1e}"))
        .collect();
    println!("relative moment gaps: [{}]", gaps.join(", "));
    Ok(())
}
