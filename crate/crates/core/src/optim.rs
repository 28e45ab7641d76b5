//! Derivative-free simplex minimization (Nelder-Mead).

/// Simplex coefficients and stopping rules.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Converged when `f_worst - f_best` falls below this...
    pub ftol: f64,
    /// ...and every vertex is within this distance (max-norm) of the best.
    pub xtol: f64,
    pub max_evaluations: usize,
    /// Offset along each axis for the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            ftol: 1e-8,
            xtol: 1e-8,
            max_evaluations: 5000,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

impl NelderMead {
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> Minimum {
        let dim = x0.len();
        assert!(dim >= 1, "need at least one dimension");
        let mut f = Counted { f, evaluations: 0 };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((x0.to_vec(), f.call(x0)));
        for i in 0..dim {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            let v = f.call(&x);
            simplex.push((x, v));
        }

        let mut iterations = 0;
        let mut converged = false;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[dim].1;
            let spread_f = if best.is_finite() && worst.is_finite() {
                worst - best
            } else {
                f64::INFINITY
            };
            let spread_x = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread_f <= self.ftol && spread_x <= self.xtol {
                converged = true;
                break;
            }
            if f.evaluations >= self.max_evaluations {
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; dim];
            for (x, _) in &simplex[..dim] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / dim as f64;
                }
            }
            let worst_x = simplex[dim].0.clone();
            let second_worst = simplex[dim - 1].1;

            let xr = affine(&centroid, &worst_x, -self.reflection);
            let fr = f.call(&xr);
            if fr < best {
                let xe = affine(&centroid, &xr, self.expansion);
                let fe = f.call(&xe);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < second_worst {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc, accept) = if fr < worst {
                let xc = affine(&centroid, &xr, self.contraction);
                let fc = f.call(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = affine(&centroid, &worst_x, self.contraction);
                let fc = f.call(&xc);
                (xc, fc, fc < worst)
            };
            if accept {
                simplex[dim] = (xc, fc);
                continue;
            }
            let best_x = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x = affine(&best_x, &vertex.0, self.shrink);
                let v = f.call(&x);
                *vertex = (x, v);
            }
        }
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            converged,
            iterations,
            evaluations: f.evaluations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_evaluations: 20_000,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let m = NelderMead::default().minimize(|x| (x[0] - 3.0).powi(2), &[0.0]);
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let m = NelderMead::default().minimize(
            |x| {
                if x[0] < 0.0 {
                    f64::INFINITY
                } else {
                    (x[0] - 0.5).powi(2) + x[1] * x[1]
                }
            },
            &[1.0, 1.0],
        );
        assert!(m.converged);
        assert!((m.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let nm = NelderMead {
            max_evaluations: 10,
            ..Default::default()
        };
        let m = nm.minimize(|x| x.iter().map(|v| v * v).sum(), &[5.0, 5.0, 5.0]);
        assert!(!m.converged);
        assert!(m.evaluations >= 10);
    }
}
