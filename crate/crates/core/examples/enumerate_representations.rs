//! Every Coxian generator sharing one distribution, with the reason each
//! rejected diagonal ordering failed.

use coxian::{enumerate_representations, EnumerateOptions, Generator};

fn show(label: &str, g: &Generator) -> coxian::Result<()> {
    let set = enumerate_representations(g, EnumerateOptions::default())?;
    println!(
        "{label}: {} of {} orderings feasible",
        set.representations.len(),
        set.candidates.len()
    );
    for c in &set.candidates {
        let v: Vec<String> = c.v.iter().map(|x| format!("{x:.4}")).collect();
        match (&c.b, c.rejection_reason) {
            (Some(b), None) => {
                let los: Vec<String> = c.v.iter().map(|x| format!("{:.1}", -1.0 / x)).collect();
                println!(
                    "  #{:<2} V = [{}] b = {b:.4?} LoS = [{}]",
                    c.perm_index,
                    v.join(", "),
                    los.join(", ")
                );
            }
            (_, Some(reason)) => println!(
                "  #{:<2} V = [{}] rejected: {reason:?} at b{}{}",
                c.perm_index,
                v.join(", "),
                c.rejected_at.map_or(0, |i| i + 1),
                c.rejected_at.map_or(0, |i| i + 2)
            ),
            _ => unreachable!(),
        }
    }
    println!();
    Ok(())
}

fn main() -> coxian::Result<()> {
    show(
        "three phases",
        &Generator::new(vec![-1.0018, -0.2138, -0.0259], vec![1.0, 0.211])?,
    )?;
    show(
        "fitted three phases",
        &Generator::new(vec![-0.571, -0.172, -0.091], vec![0.570, 0.029])?,
    )?;
    show(
        "four phases",
        &Generator::new(
            vec![-1.0, -0.447, -0.446, -0.151],
            vec![0.965, 0.435, 0.120],
        )?,
    )?;
    Ok(())
}
