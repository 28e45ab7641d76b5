//! Maximum-likelihood fitting of Coxian distributions to duration data.
//!
//! The likelihood is maximized over log-rates with a multi-start simplex
//! search. Equivalent representations share the same likelihood, so several
//! starts can legitimately end on different parameter vectors with equal
//! log-likelihood; all of them are returned.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoxianError, Result};
use crate::linalg::RowPropagator;
use crate::model::{CoxianParams, Generator};
use crate::optim::NelderMead;
use crate::sampler::stream_rng;

/// Offset that lets interior absorption rates reach zero in log coordinates.
pub const MU_OFFSET: f64 = 1e-10;

/// Rates outside `[RATE_FLOOR, RATE_CEILING] / mean(data)` are treated as infeasible.
const RATE_FLOOR: f64 = 1e-8;
const RATE_CEILING: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_starts: usize,
    /// Evaluation budget per start; `None` means `5000 (2n - 1)`.
    pub max_evaluations: Option<usize>,
    pub ftol: f64,
    pub xtol: f64,
    /// Random starts draw each rate log-uniformly in `[low, high] / mean(data)`.
    pub init_low: f64,
    pub init_high: f64,
    pub initial_step: f64,
    pub seed: u64,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 10,
            max_evaluations: None,
            ftol: 1e-8,
            xtol: 1e-8,
            init_low: 0.01,
            init_high: 100.0,
            initial_step: 0.5,
            seed: 0,
            standard_errors: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(CoxianError::InvalidOption(
                "n_starts must be at least 1".into(),
            ));
        }
        if !(self.ftol > 0.0 && self.xtol > 0.0 && self.initial_step > 0.0) {
            return Err(CoxianError::InvalidOption(
                "tolerances must be positive".into(),
            ));
        }
        if !(self.init_low > 0.0 && self.init_high >= self.init_low) {
            return Err(CoxianError::InvalidOption(
                "initial range must satisfy 0 < low <= high".into(),
            ));
        }
        if self.max_evaluations == Some(0) {
            return Err(CoxianError::InvalidOption(
                "max_evaluations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: CoxianParams,
    pub loglik: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub n_evaluations: usize,
    /// Same layout as [`CoxianParams::to_vec`].
    pub standard_errors: Option<Vec<f64>>,
    pub aic: f64,
    pub start_index: usize,
}

/// Akaike information criterion with `2n - 1` free parameters.
pub fn aic(order: usize, loglik: f64) -> f64 {
    2.0 * (2 * order - 1) as f64 - 2.0 * loglik
}

/// Validated, ascending copy of the observations.
#[derive(Debug, Clone)]
pub struct Durations {
    sorted: Vec<f64>,
    mean: f64,
}

impl Durations {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(CoxianError::InvalidData {
                index: 0,
                reason: "no observations".into(),
            });
        }
        if let Some((index, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(CoxianError::InvalidData {
                index,
                reason: format!("observations must be positive and finite, got {v}"),
            });
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        Ok(Self { sorted, mean })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sorted
    }

    /// `sum_i ln f(t_i)`, or `-inf` if any density underflows.
    pub fn loglik(&self, g: &Generator) -> f64 {
        let q = g.absorbing_vector();
        let mut prop = RowPropagator::new(g);
        let mut total = 0.0;
        let mut i = 0;
        while i < self.sorted.len() {
            let t = self.sorted[i];
            let mut run = 1;
            while i + run < self.sorted.len() && self.sorted[i + run] == t {
                run += 1;
            }
            prop.advance_to(t);
            let ln_f = prop.ln_dot(q.as_slice());
            if ln_f == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += run as f64 * ln_f;
            i += run;
        }
        total
    }
}

/// Log-likelihood of `data` under `p`.
pub fn loglik(p: &CoxianParams, data: &[f64]) -> Result<f64> {
    Ok(Durations::new(data)?.loglik(&p.to_generator()))
}

/// Log-likelihood under a generator, for comparing representations.
pub fn loglik_generator(g: &Generator, data: &[f64]) -> Result<f64> {
    Ok(Durations::new(data)?.loglik(g))
}

/// Maps unconstrained coordinates to rates and back.
///
/// Layout: `ln lambda_1..ln lambda_{n-1}`, `ln(mu_i + MU_OFFSET)` for
/// `i < n`, then `ln mu_n`.
#[derive(Debug, Clone, Copy)]
pub struct LogRates {
    pub order: usize,
}

impl LogRates {
    pub fn dim(&self) -> usize {
        2 * self.order - 1
    }

    pub fn to_params(&self, x: &[f64]) -> Result<CoxianParams> {
        let n = self.order;
        let lambda = x[..n - 1].iter().map(|v| v.exp()).collect();
        let mut mu: Vec<f64> = x[n - 1..2 * n - 2]
            .iter()
            .map(|v| (v.exp() - MU_OFFSET).max(0.0))
            .collect();
        mu.push(x[2 * n - 2].exp());
        CoxianParams::new(lambda, mu)
    }

    pub fn from_params(&self, p: &CoxianParams) -> Vec<f64> {
        let n = p.order();
        let mut x: Vec<f64> = p.lambda().iter().map(|v| v.ln()).collect();
        x.extend(p.mu()[..n - 1].iter().map(|v| (v + MU_OFFSET).ln()));
        x.push(p.mu()[n - 1].ln());
        x
    }
}

fn objective(coords: LogRates, data: &Durations, x: &[f64]) -> f64 {
    let lo = (RATE_FLOOR / data.mean()).ln();
    let hi = (RATE_CEILING / data.mean()).ln();
    if x.iter().any(|v| !v.is_finite() || *v > hi) {
        return f64::INFINITY;
    }
    // The interior mu coordinates may go below the floor (they reach zero).
    let n = coords.order;
    let floor_checked = x[..n - 1].iter().chain(std::iter::once(&x[2 * n - 2]));
    if floor_checked.clone().any(|v| *v < lo) {
        return f64::INFINITY;
    }
    match coords.to_params(x) {
        Ok(p) => -data.loglik(&p.to_generator()),
        Err(_) => f64::INFINITY,
    }
}

fn start_point(coords: LogRates, data: &Durations, index: usize, opts: &FitOptions) -> Vec<f64> {
    let base = (1.0 / data.mean()).ln();
    if index == 0 {
        return vec![base; coords.dim()];
    }
    let mut rng = stream_rng(opts.seed, index as u64);
    let lo = base + opts.init_low.ln();
    let hi = base + opts.init_high.ln();
    (0..coords.dim())
        .map(|_| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect()
}

fn run_start(data: &Durations, order: usize, index: usize, opts: &FitOptions) -> Result<FitResult> {
    let coords = LogRates { order };
    let nm = NelderMead {
        ftol: opts.ftol,
        xtol: opts.xtol,
        max_evaluations: opts.max_evaluations.unwrap_or(5000 * coords.dim()),
        initial_step: opts.initial_step,
        ..NelderMead::default()
    };
    let x0 = start_point(coords, data, index, opts);
    let min = nm.minimize(|x| objective(coords, data, x), &x0);
    let params = coords.to_params(&min.x)?;
    let loglik = data.loglik(&params.to_generator());
    let standard_errors = if opts.standard_errors && loglik.is_finite() {
        standard_errors_sorted(&params, data)
    } else {
        None
    };
    Ok(FitResult {
        aic: aic(order, loglik),
        converged: min.converged && loglik.is_finite(),
        n_iterations: min.iterations,
        n_evaluations: min.evaluations,
        standard_errors,
        start_index: index,
        params,
        loglik,
    })
}

fn sort_results(results: &mut [FitResult]) {
    results.sort_by(|a, b| {
        b.loglik
            .total_cmp(&a.loglik)
            .then(a.start_index.cmp(&b.start_index))
    });
}

/// One result per start, best log-likelihood first.
pub fn fit_mle(data: &[f64], order: usize, opts: &FitOptions) -> Result<Vec<FitResult>> {
    opts.validate()?;
    if order == 0 {
        return Err(CoxianError::InvalidOption(
            "order must be at least 1".into(),
        ));
    }
    let data = Durations::new(data)?;
    fit_durations(&data, order, opts)
}

pub fn fit_durations(data: &Durations, order: usize, opts: &FitOptions) -> Result<Vec<FitResult>> {
    let mut results = (0..opts.n_starts)
        .into_par_iter()
        .map(|i| run_start(data, order, i, opts))
        .collect::<Result<Vec<_>>>()?;
    sort_results(&mut results);
    Ok(results)
}

/// Square roots of the diagonal of the inverse observed information, with
/// the Hessian taken by central differences in the natural rates. `None`
/// when a difference step would leave the parameter space or the
/// information is not positive definite.
pub fn standard_errors(p: &CoxianParams, data: &[f64]) -> Result<Option<Vec<f64>>> {
    Ok(standard_errors_sorted(p, &Durations::new(data)?))
}

fn standard_errors_sorted(p: &CoxianParams, data: &Durations) -> Option<Vec<f64>> {
    let theta = p.to_vec();
    let k = theta.len();
    let steps: Vec<f64> = theta.iter().map(|v| (1e-4 * v.abs()).max(1e-5)).collect();
    let eval = |delta: &[(usize, f64)]| -> Option<f64> {
        let mut t = theta.clone();
        for &(i, d) in delta {
            t[i] += d;
        }
        if t.iter().any(|v| *v < 0.0) {
            return None;
        }
        let q = CoxianParams::from_slice(&t).ok()?;
        let v = data.loglik(&q.to_generator());
        v.is_finite().then_some(v)
    };
    let f0 = eval(&[])?;
    let mut info = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let hi = steps[i];
        let plus = eval(&[(i, hi)])?;
        let minus = eval(&[(i, -hi)])?;
        info[(i, i)] = -(plus - 2.0 * f0 + minus) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let pp = eval(&[(i, hi), (j, hj)])?;
            let pm = eval(&[(i, hi), (j, -hj)])?;
            let mp = eval(&[(i, -hi), (j, hj)])?;
            let mm = eval(&[(i, -hi), (j, -hj)])?;
            let v = -(pp - pm - mp + mm) / (4.0 * hi * hj);
            info[(i, j)] = v;
            info[(j, i)] = v;
        }
    }
    let chol = info.cholesky()?;
    let cov = chol.inverse();
    let se: Vec<f64> = (0..k).map(|i| cov[(i, i)]).collect();
    if se.iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(se.into_iter().map(f64::sqrt).collect())
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderRow {
    pub order: usize,
    /// Best converged start for this order, if any.
    pub best: Option<FitResult>,
    /// Best start regardless of convergence.
    pub best_any: Option<FitResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderSelection {
    pub best_order: usize,
    pub table: Vec<OrderRow>,
}

impl OrderSelection {
    pub fn best(&self) -> Option<&FitResult> {
        self.table
            .iter()
            .find(|r| r.order == self.best_order)
            .and_then(|r| r.best.as_ref())
    }
}

/// Fits orders `1..=max_order` and picks the one with the smallest AIC
/// among orders with a converged start.
pub fn select_order(data: &[f64], max_order: usize, opts: &FitOptions) -> Result<OrderSelection> {
    opts.validate()?;
    if max_order == 0 {
        return Err(CoxianError::InvalidOption(
            "max order must be at least 1".into(),
        ));
    }
    let data = Durations::new(data)?;
    let mut table = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        let results = fit_durations(&data, order, opts)?;
        let best = results.iter().find(|r| r.converged).cloned();
        table.push(OrderRow {
            order,
            best,
            best_any: results.into_iter().next(),
        });
    }
    let best_order = table
        .iter()
        .filter_map(|r| r.best.as_ref().map(|b| (r.order, b.aic)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, _)| n)
        .ok_or_else(|| CoxianError::InvalidOption("no order produced a converged fit".into()))?;
    Ok(OrderSelection { best_order, table })
}

/// Relative max-norm distance between two parameter vectors.
pub fn relative_distance(a: &CoxianParams, b: &CoxianParams) -> f64 {
    let (x, y) = (a.to_vec(), b.to_vec());
    if x.len() != y.len() {
        return f64::INFINITY;
    }
    let scale = x.iter().chain(&y).fold(0.0_f64, |m, v| m.max(v.abs()));
    x.iter()
        .zip(&y)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Converged results with near-duplicate parameter vectors merged, keeping
/// the first (best) of each group.
pub fn distinct_modes(results: &[FitResult], rel_tol: f64) -> Vec<FitResult> {
    let mut modes: Vec<FitResult> = Vec::new();
    for r in results.iter().filter(|r| r.converged) {
        if modes
            .iter()
            .all(|m| relative_distance(&m.params, &r.params) >= rel_tol)
        {
            modes.push(r.clone());
        }
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_dataset;

    #[test]
    fn exponential_loglik() {
        let p = CoxianParams::exponential(0.1).unwrap();
        let v = loglik(&p, &[10.0]).unwrap();
        assert!((v - (0.1f64.ln() - 1.0)).abs() < 1e-13);
        assert!((v + 3.3026).abs() < 1e-4);
    }

    #[test]
    fn loglik_is_additive_over_copies() {
        let p = CoxianParams::new(vec![0.55, 0.05], vec![0.003, 0.15, 0.1]).unwrap();
        let one = loglik(&p, &[7.5]).unwrap();
        let many = loglik(&p, &[7.5; 40]).unwrap();
        assert!((many - 40.0 * one).abs() < 1e-10);
    }

    #[test]
    fn loglik_rejects_nonpositive_data() {
        let p = CoxianParams::exponential(1.0).unwrap();
        assert!(matches!(
            loglik(&p, &[1.0, 0.0]),
            Err(CoxianError::InvalidData { index: 1, .. })
        ));
        assert!(loglik(&p, &[]).is_err());
        assert!(loglik(&p, &[f64::NAN]).is_err());
    }

    #[test]
    fn loglik_matches_pointwise_density() {
        let p = CoxianParams::new(vec![0.570, 0.029], vec![0.001, 0.143, 0.091]).unwrap();
        let g = p.to_generator();
        let data = [0.3, 12.0, 4.0, 4.0, 55.0, 1.0];
        let direct: f64 = data
            .iter()
            .map(|&t| crate::model::density(&g, t).ln())
            .sum();
        assert!((loglik(&p, &data).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn log_rates_round_trip() {
        let p = CoxianParams::new(vec![0.55, 0.05], vec![0.003, 0.15, 0.1]).unwrap();
        let c = LogRates { order: 3 };
        let back = c.to_params(&c.from_params(&p)).unwrap();
        assert!(relative_distance(&p, &back) < 1e-12);
        // very negative interior coordinate reaches mu = 0
        let zero = c.to_params(&[0.0, 0.0, -40.0, 0.0, 0.0]).unwrap();
        assert_eq!(zero.mu()[0], 0.0);
    }

    #[test]
    fn exponential_fit_matches_closed_form() {
        let p = CoxianParams::exponential(0.25).unwrap();
        let data = sample_dataset(&p, 2000, 3).unwrap();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let fits = fit_mle(
            &data,
            1,
            &FitOptions {
                n_starts: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let best = &fits[0];
        assert!(best.converged);
        assert!((best.params.mu()[0] - 1.0 / mean).abs() < 1e-6);
        assert_eq!(best.aic, aic(1, best.loglik));
        let se = best.standard_errors.as_ref().unwrap()[0];
        let expect = best.params.mu()[0] / (data.len() as f64).sqrt();
        assert!((se - expect).abs() / expect < 0.05);
    }

    #[test]
    fn all_equal_data_does_not_crash() {
        let data = vec![2.0; 200];
        let opts = FitOptions {
            n_starts: 2,
            max_evaluations: Some(2000),
            ..Default::default()
        };
        let fits = fit_mle(&data, 2, &opts).unwrap();
        assert_eq!(fits.len(), 2);
        for f in &fits {
            assert!(f.loglik.is_finite());
            assert_eq!(f.aic, aic(2, f.loglik));
        }
    }

    #[test]
    fn results_sorted_and_indexed() {
        let p = CoxianParams::new(vec![1.0], vec![0.2, 0.5]).unwrap();
        let data = sample_dataset(&p, 500, 11).unwrap();
        let fits = fit_mle(
            &data,
            2,
            &FitOptions {
                n_starts: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fits.len(), 4);
        for w in fits.windows(2) {
            assert!(w[0].loglik >= w[1].loglik);
        }
        let mut idx: Vec<_> = fits.iter().map(|f| f.start_index).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn boundary_estimate_has_no_standard_errors() {
        let p = CoxianParams::new(vec![0.5], vec![1e-7, 0.3]).unwrap();
        let data = sample_dataset(&p, 300, 2).unwrap();
        assert_eq!(standard_errors(&p, &data).unwrap(), None);
    }

    #[test]
    fn order_selection_single_order() {
        let p = CoxianParams::exponential(1.0).unwrap();
        let data = sample_dataset(&p, 300, 1).unwrap();
        let sel = select_order(
            &data,
            1,
            &FitOptions {
                n_starts: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sel.best_order, 1);
        assert_eq!(sel.table.len(), 1);
    }

    #[test]
    fn mode_merging() {
        let p = CoxianParams::new(vec![1.0], vec![0.2, 0.5]).unwrap();
        let q = CoxianParams::new(vec![1.00001], vec![0.2, 0.5]).unwrap();
        let r = CoxianParams::new(vec![2.0], vec![0.2, 0.5]).unwrap();
        let mk = |params: CoxianParams, i| FitResult {
            params,
            loglik: -1.0,
            converged: true,
            n_iterations: 0,
            n_evaluations: 0,
            standard_errors: None,
            aic: aic(2, -1.0),
            start_index: i,
        };
        let modes = distinct_modes(&[mk(p, 0), mk(q, 1), mk(r, 2)], 1e-4);
        assert_eq!(modes.len(), 2);
        assert_eq!(modes[1].start_index, 2);
    }
}
