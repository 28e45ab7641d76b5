//! Coxian parameter and generator types plus the closed-form summaries that
//! follow from them.
//!
//! A Coxian distribution of order `n` starts in phase 1, leaves phase `k`
//! forward at rate `lambda[k]` or into absorption at rate `mu[k]`, and always
//! absorbs from phase `n`. Its generator is upper bidiagonal.

use serde::{Deserialize, Serialize};

use crate::error::{CoxianError, Result};
use crate::linalg::{self, BidiagonalSolveWorkspace};

/// Absolute slack used when checking rate constraints.
pub const RATE_SLACK: f64 = 1e-12;

/// Default maximum order accepted by the enumerator and CLI.
pub const DEFAULT_MAX_ORDER: usize = 20;

/// Rate vector `(lambda_1..lambda_{n-1}, mu_1..mu_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct CoxianParams {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

#[derive(Deserialize)]
struct RawParams {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl TryFrom<RawParams> for CoxianParams {
    type Error = CoxianError;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.lambda, raw.mu)
    }
}

impl CoxianParams {
    /// Validates and builds a parameter set. Interior `mu` values within
    /// [`RATE_SLACK`] below zero are snapped to zero.
    pub fn new(lambda: Vec<f64>, mut mu: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(CoxianError::InvalidParams {
                index: 0,
                reason: "at least one phase is required".into(),
            });
        }
        if lambda.len() != n - 1 {
            return Err(CoxianError::InvalidParams {
                index: lambda.len(),
                reason: format!("expected {} forward rates, got {}", n - 1, lambda.len()),
            });
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(CoxianError::InvalidParams {
                    index: i,
                    reason: format!("lambda must be finite and positive, got {l}"),
                });
            }
        }
        for (i, m) in mu.iter_mut().enumerate() {
            if !m.is_finite() {
                return Err(CoxianError::InvalidParams {
                    index: i,
                    reason: format!("mu must be finite, got {m}"),
                });
            }
            if i + 1 == n {
                if *m <= 0.0 {
                    return Err(CoxianError::InvalidParams {
                        index: i,
                        reason: format!("last absorption rate must be positive, got {m}"),
                    });
                }
            } else if *m < 0.0 {
                if *m < -RATE_SLACK {
                    return Err(CoxianError::InvalidParams {
                        index: i,
                        reason: format!("mu must be nonnegative, got {m}"),
                    });
                }
                *m = 0.0;
            }
        }
        Ok(Self { lambda, mu })
    }

    /// Single-phase (exponential) distribution.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![rate])
    }

    pub fn order(&self) -> usize {
        self.mu.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Forward rate out of phase `k` (zero-based), with `lambda_n = 0`.
    pub fn forward_rate(&self, k: usize) -> f64 {
        self.lambda.get(k).copied().unwrap_or(0.0)
    }

    /// Flattened `(lambda.., mu..)`, length `2n - 1`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.lambda.iter().chain(&self.mu).copied().collect()
    }

    /// Inverse of [`CoxianParams::to_vec`].
    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        if theta.is_empty() || theta.len().is_multiple_of(2) {
            return Err(CoxianError::InvalidParams {
                index: theta.len(),
                reason: "parameter vector must have odd length 2n-1".into(),
            });
        }
        let n = theta.len().div_ceil(2);
        Self::new(theta[..n - 1].to_vec(), theta[n - 1..].to_vec())
    }

    pub fn to_generator(&self) -> Generator {
        let n = self.order();
        let diag = (0..n)
            .map(|k| -(self.forward_rate(k) + self.mu[k]))
            .collect();
        Generator {
            diag,
            superdiag: self.lambda.clone(),
            absorb: self.mu.clone(),
        }
    }

    /// Expected sojourn per phase, `1 / (lambda_k + mu_k)`.
    pub fn los(&self) -> Vec<f64> {
        (0..self.order())
            .map(|k| 1.0 / (self.forward_rate(k) + self.mu[k]))
            .collect()
    }

    /// Probability of absorbing from each phase.
    pub fn exit_probabilities(&self) -> Vec<f64> {
        let mut reach = 1.0;
        let mut out = Vec::with_capacity(self.order());
        for k in 0..self.order() {
            let total = self.forward_rate(k) + self.mu[k];
            out.push(reach * self.mu[k] / total);
            reach *= self.forward_rate(k) / total;
        }
        out
    }
}

/// Upper-bidiagonal phase generator in compact storage.
///
/// The absorption rates are carried alongside the matrix entries so that a
/// generator built from [`CoxianParams`] converts back without rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    diag: Vec<f64>,
    superdiag: Vec<f64>,
    absorb: Vec<f64>,
}

impl Generator {
    /// Builds a generator from its diagonal and superdiagonal. Absorption
    /// rates are recovered as `-diag[i] - superdiag[i]`.
    pub fn new(diag: Vec<f64>, superdiag: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(CoxianError::InvalidGenerator {
                index: 0,
                reason: "empty diagonal".into(),
            });
        }
        if superdiag.len() != n - 1 {
            return Err(CoxianError::InvalidGenerator {
                index: superdiag.len(),
                reason: format!("expected {} superdiagonal entries", n - 1),
            });
        }
        let absorb = (0..n)
            .map(|i| -diag[i] - superdiag.get(i).copied().unwrap_or(0.0))
            .collect();
        Self::with_absorption(diag, superdiag, absorb)
    }

    /// Builds a generator when the absorption rates are already known
    /// exactly. They must agree with `-diag - superdiag` within slack.
    pub(crate) fn with_absorption(
        diag: Vec<f64>,
        superdiag: Vec<f64>,
        mut absorb: Vec<f64>,
    ) -> Result<Self> {
        let n = diag.len();
        for (i, &d) in diag.iter().enumerate() {
            if !d.is_finite() || d >= 0.0 {
                return Err(CoxianError::InvalidGenerator {
                    index: i,
                    reason: format!("diagonal must be finite and negative, got {d}"),
                });
            }
        }
        for (i, &s) in superdiag.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 {
                return Err(CoxianError::InvalidGenerator {
                    index: i,
                    reason: format!("superdiagonal must be finite and positive, got {s}"),
                });
            }
            if s > -diag[i] + RATE_SLACK {
                return Err(CoxianError::InvalidGenerator {
                    index: i,
                    reason: format!(
                        "superdiagonal {s} exceeds -diag {} (negative absorption rate)",
                        -diag[i]
                    ),
                });
            }
        }
        for (i, a) in absorb.iter_mut().enumerate() {
            if i + 1 < n && *a < 0.0 {
                *a = 0.0;
            }
        }
        if absorb[n - 1] <= 0.0 {
            return Err(CoxianError::InvalidGenerator {
                index: n - 1,
                reason: "last absorption rate must be positive".into(),
            });
        }
        Ok(Self {
            diag,
            superdiag,
            absorb,
        })
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn superdiag(&self) -> &[f64] {
        &self.superdiag
    }

    /// Superdiagonal entry `k`, zero past the last row.
    pub fn super_at(&self, k: usize) -> f64 {
        self.superdiag.get(k).copied().unwrap_or(0.0)
    }

    pub fn to_params(&self) -> CoxianParams {
        CoxianParams {
            lambda: self.superdiag.clone(),
            mu: self.absorb.clone(),
        }
    }

    /// `q = -Q 1`.
    pub fn absorbing_vector(&self) -> AbsorbVector {
        AbsorbVector(self.absorb.clone())
    }

    pub(crate) fn absorb(&self) -> &[f64] {
        &self.absorb
    }

    /// Absorption rate out of phase 1.
    pub fn mu1(&self) -> f64 {
        self.absorb[0]
    }

    /// `max_i |diag[i]|`, which bounds the infinity norm within a factor of two.
    pub fn max_abs_diag(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()))
    }

    /// Infinity norm of the dense matrix.
    pub fn norm_inf(&self) -> f64 {
        (0..self.order())
            .map(|i| self.diag[i].abs() + self.super_at(i))
            .fold(0.0, f64::max)
    }

    /// Dense row-major copy; intended for diagnostics and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.order();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            out[i][i] = self.diag[i];
            if i + 1 < n {
                out[i][i + 1] = self.superdiag[i];
            }
        }
        out
    }
}

impl From<&CoxianParams> for Generator {
    fn from(p: &CoxianParams) -> Self {
        p.to_generator()
    }
}

impl From<&Generator> for CoxianParams {
    fn from(g: &Generator) -> Self {
        g.to_params()
    }
}

/// Per-phase absorption rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbVector(pub Vec<f64>);

impl AbsorbVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub los: Vec<f64>,
    pub exit_probs: Vec<f64>,
    pub moments: Vec<f64>,
}

/// `r`-th raw moment `r! p (-Q)^{-r} 1`, by `r` back-substitutions.
pub fn moment(g: &Generator, r: u32) -> Result<f64> {
    if r == 0 {
        return Ok(1.0);
    }
    Ok(*moments(g, r as usize)?.last().expect("r >= 1"))
}

/// First `m` raw moments.
pub fn moments(g: &Generator, m: usize) -> Result<Vec<f64>> {
    let n = g.order();
    let mut ws = BidiagonalSolveWorkspace::new(n);
    let mut x = vec![1.0; n];
    let mut factorial = 1.0;
    let mut out = Vec::with_capacity(m);
    for r in 1..=m {
        ws.solve_neg_in_place(g, &mut x)?;
        factorial *= r as f64;
        let value = factorial * x[0];
        if !value.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(CoxianError::Overflow { order: r as u32 });
        }
        out.push(value);
    }
    Ok(out)
}

/// Density `p exp(Qt) q`.
pub fn density(g: &Generator, t: f64) -> f64 {
    let w = linalg::expm_action_row(g, t, &unit_start(g.order()));
    dot(&w, g.absorb()).max(0.0)
}

/// Survival `p exp(Qt) 1`.
pub fn survival(g: &Generator, t: f64) -> f64 {
    let w = linalg::expm_action_row(g, t, &unit_start(g.order()));
    w.iter().sum::<f64>().clamp(0.0, 1.0)
}

/// Laplace transform `p (sI - Q)^{-1} q` by one back-substitution.
pub fn laplace(g: &Generator, s: f64) -> f64 {
    let n = g.order();
    let mut x = 0.0;
    for i in (0..n).rev() {
        x = (g.absorb[i] + g.super_at(i) * x) / (s - g.diag[i]);
    }
    x
}

pub fn summary(p: &CoxianParams, m: usize) -> Result<SummaryStats> {
    if m == 0 {
        return Err(CoxianError::InvalidOption(
            "at least one moment is required".into(),
        ));
    }
    Ok(SummaryStats {
        los: p.los(),
        exit_probs: p.exit_probabilities(),
        moments: moments(&p.to_generator(), m)?,
    })
}

pub(crate) fn unit_start(n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    p
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted_three_phase() -> CoxianParams {
        CoxianParams::new(vec![0.570, 0.029], vec![0.001, 0.143, 0.091]).unwrap()
    }

    #[test]
    fn single_phase_generator() {
        let g = CoxianParams::exponential(0.1).unwrap().to_generator();
        assert_eq!(g.diag(), &[-0.1]);
        assert!(g.superdiag().is_empty());
        assert_eq!(g.absorbing_vector().0, vec![0.1]);
    }

    #[test]
    fn generator_from_fitted_params() {
        let g = fitted_three_phase().to_generator();
        let expect = [-0.571, -0.172, -0.091];
        for (d, e) in g.diag().iter().zip(expect) {
            assert!((d - e).abs() < 1e-12);
        }
        assert_eq!(g.superdiag(), &[0.570, 0.029]);
        let q = g.absorbing_vector();
        for (a, e) in q.0.iter().zip([0.001, 0.143, 0.091]) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_from_example1_truth() {
        let p = CoxianParams::new(vec![0.55, 0.05], vec![0.003, 0.15, 0.1]).unwrap();
        let g = p.to_generator();
        for (d, e) in g.diag().iter().zip([-0.553, -0.2, -0.1]) {
            assert!((d - e).abs() < 1e-12);
        }
        assert_eq!(g.superdiag(), &[0.55, 0.05]);
    }

    #[test]
    fn params_from_printed_qb() {
        let g = Generator::new(vec![-0.172, -0.571, -0.091], vec![0.170, 0.096]).unwrap();
        let p = g.to_params();
        assert_eq!(p.lambda(), &[0.170, 0.096]);
        for (a, e) in p.mu().iter().zip([0.002, 0.475, 0.091]) {
            assert!((a - e).abs() < 1e-12);
        }
        let one = Generator::new(vec![-0.1], vec![]).unwrap().to_params();
        assert_eq!(one.mu(), &[0.1]);
        assert_eq!(one.order(), 1);
    }

    #[test]
    fn rejects_invalid_params_with_index() {
        let err = CoxianParams::new(vec![0.5, -1.0], vec![0.1, 0.1, 0.1]).unwrap_err();
        assert!(matches!(err, CoxianError::InvalidParams { index: 1, .. }));
        let err = CoxianParams::new(vec![0.5], vec![0.1, 0.0]).unwrap_err();
        assert!(matches!(err, CoxianError::InvalidParams { index: 1, .. }));
        let err = CoxianParams::new(vec![0.5], vec![-1e-6, 0.1]).unwrap_err();
        assert!(matches!(err, CoxianError::InvalidParams { index: 0, .. }));
        assert!(CoxianParams::new(vec![], vec![f64::INFINITY]).is_err());
        assert!(CoxianParams::new(vec![1.0], vec![0.1]).is_err());
        // Within slack: snapped to zero.
        let p = CoxianParams::new(vec![0.5], vec![-1e-13, 0.1]).unwrap();
        assert_eq!(p.mu()[0], 0.0);
    }

    #[test]
    fn rejects_invalid_generator() {
        assert!(Generator::new(vec![-0.1, -0.2], vec![0.3]).is_err());
        assert!(Generator::new(vec![-0.1, 0.2], vec![0.05]).is_err());
        assert!(Generator::new(vec![-0.1, -0.2], vec![0.0]).is_err());
        assert!(Generator::new(vec![-0.1, -0.2], vec![]).is_err());
        // superdiag equal to -diag is the mu = 0 boundary
        let g = Generator::new(vec![-0.1, -0.2], vec![0.1]).unwrap();
        assert_eq!(g.to_params().mu()[0], 0.0);
    }

    #[test]
    fn exponential_moments_density_survival_laplace() {
        let g = CoxianParams::exponential(0.1).unwrap().to_generator();
        assert!((moment(&g, 2).unwrap() - 200.0).abs() < 1e-9);
        assert!((moment(&g, 1).unwrap() - 10.0).abs() < 1e-12);
        assert!((density(&g, 0.0) - 0.1).abs() < 1e-15);
        assert!((survival(&g, 10.0) - (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(survival(&g, 0.0), 1.0);
        assert!((laplace(&g, 0.1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_phase_hypoexponential_density() {
        let p = CoxianParams::new(vec![1.0], vec![0.0, 2.0]).unwrap();
        let g = p.to_generator();
        let expect = 2.0 * ((-1.0f64).exp() - (-2.0f64).exp());
        assert!((density(&g, 1.0) - expect).abs() < 1e-13);
        assert!((expect - 0.465).abs() < 1e-3);
    }

    #[test]
    fn density_at_zero_is_mu1() {
        let g = fitted_three_phase().to_generator();
        assert_eq!(density(&g, 0.0), 0.001);
    }

    #[test]
    fn moment_overflow_is_reported() {
        let g = CoxianParams::exponential(1e-300).unwrap().to_generator();
        assert!(matches!(moment(&g, 3), Err(CoxianError::Overflow { .. })));
    }

    #[test]
    fn laplace_initial_value_theorem() {
        let g = fitted_three_phase().to_generator();
        let s = 1e6;
        let v = laplace(&g, s) * s;
        assert!((v - g.mu1()).abs() / g.mu1() < 1e-4);
    }

    #[test]
    fn summary_fitted_los() {
        let s = summary(&fitted_three_phase(), 3).unwrap();
        for (a, e) in s.los.iter().zip([1.75, 5.82, 10.98]) {
            assert!((a - e).abs() < 0.01, "{a} vs {e}");
        }
        let row2 = CoxianParams::new(vec![0.170, 0.096], vec![0.001, 0.474, 0.091]).unwrap();
        let s2 = summary(&row2, 1).unwrap();
        for (a, e) in s2.los.iter().zip([5.82, 1.75, 10.98]) {
            assert!((a - e).abs() < 0.03, "{a} vs {e}");
        }
        let one = summary(&CoxianParams::exponential(0.1).unwrap(), 1).unwrap();
        assert_eq!(one.los, vec![10.0]);
        assert_eq!(one.exit_probs, vec![1.0]);
        assert!((one.moments[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn from_slice_round_trip() {
        let p = fitted_three_phase();
        assert_eq!(CoxianParams::from_slice(&p.to_vec()).unwrap(), p);
        assert!(CoxianParams::from_slice(&[1.0, 2.0]).is_err());
    }
}
