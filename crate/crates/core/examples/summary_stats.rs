//! Sojourn times, exit probabilities, moments and a few density values.

use coxian::model::{density, summary, survival};
use coxian::CoxianParams;

fn main() -> coxian::Result<()> {
    let p = CoxianParams::new(vec![0.55, 0.05], vec![0.003, 0.15, 0.1])?;
    let s = summary(&p, 3)?;
    println!("phase  mean stay  exit prob");
    for k in 0..p.order() {
        println!("{:>5}  {:>9.3}  {:>9.4}", k + 1, s.los[k], s.exit_probs[k]);
    }
    let sd = (s.moments[1] - s.moments[0].powi(2)).sqrt();
    println!(
        "mean {:.3}, sd {:.3}, E[T^3] {:.1}",
        s.moments[0], sd, s.moments[2]
    );

    let g = p.to_generator();
    println!("\n    t    density   survival");
    for t in [0.5, 2.0, 5.0, 10.0, 25.0, 50.0] {
        println!("{t:>5}  {:.6}  {:.6}", density(&g, t), survival(&g, t));
    }
    Ok(())
}
