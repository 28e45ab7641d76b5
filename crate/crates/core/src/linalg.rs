//! Kernels for upper-bidiagonal generators: back-substitution, the matrix
//! exponential and its action on vectors.
//!
//! The exponential is evaluated on the shifted matrix `A = Q + sigma I` with
//! `sigma = max |diag|`, which is entrywise nonnegative. Then
//! `exp(Qt) = exp(-sigma t) exp(At)` and every Taylor term of `exp(At)` is
//! nonnegative, so no cancellation occurs for nonnegative inputs.

use crate::error::{CoxianError, Result};
use crate::model::Generator;

/// Largest shifted step `sigma * h` taken by a single truncated series.
const MAX_SHIFTED_STEP: f64 = 2.0;
/// Series truncation: stop when the newest term is below this fraction of the sum.
const SERIES_RTOL: f64 = 1e-17;
const MAX_SERIES_TERMS: usize = 80;
/// Propagation horizons with `sigma * dt` above this use one dense
/// scaling-and-squaring step instead of `sigma * dt / 2` series substeps.
const DENSE_HORIZON: f64 = 16.0;

/// Relative separation below which the closed-form exponential is refused.
pub const EIGEN_SEPARATION: f64 = 1e-8;

const SINGULAR_DIAG: f64 = 1e-300;

/// Scratch storage for repeated back-substitutions against one generator.
#[derive(Debug, Clone)]
pub struct BidiagonalSolveWorkspace {
    scratch: Vec<f64>,
}

impl BidiagonalSolveWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            scratch: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.scratch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scratch.is_empty()
    }

    /// Solves `(-Q) x = rhs`, leaving the solution in the workspace.
    pub fn solve_neg(&mut self, g: &Generator, rhs: &[f64]) -> Result<&[f64]> {
        let n = g.order();
        if rhs.len() != n {
            return Err(CoxianError::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        self.scratch.resize(n, 0.0);
        self.scratch.copy_from_slice(rhs);
        let mut x = std::mem::take(&mut self.scratch);
        let res = self.solve_neg_in_place(g, &mut x);
        self.scratch = x;
        res.map(|_| self.scratch.as_slice())
    }

    /// Overwrites `x` (holding the right-hand side) with `(-Q)^{-1} x`.
    pub fn solve_neg_in_place(&mut self, g: &Generator, x: &mut [f64]) -> Result<()> {
        let diag = g.diag();
        let n = diag.len();
        if x.len() != n {
            return Err(CoxianError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if let Some(index) = diag.iter().position(|d| d.abs() < SINGULAR_DIAG) {
            return Err(CoxianError::Singular { index });
        }
        x[n - 1] /= -diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] + g.superdiag()[i] * x[i + 1]) / -diag[i];
        }
        Ok(())
    }
}

/// `x` with `(-Q) x = rhs`.
pub fn solve_neg(g: &Generator, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut ws = BidiagonalSolveWorkspace::new(g.order());
    ws.solve_neg(g, rhs).map(<[f64]>::to_vec)
}

/// Multiplies `x` by the generator, `Q x`.
pub fn mul_col(g: &Generator, x: &[f64]) -> Vec<f64> {
    (0..g.order())
        .map(|i| g.diag()[i] * x[i] + x.get(i + 1).map_or(0.0, |v| g.super_at(i) * v))
        .collect()
}

fn shift(g: &Generator) -> f64 {
    g.max_abs_diag()
}

fn substeps(sigma: f64, t: f64) -> (usize, f64) {
    let total = sigma * t;
    let steps = (total / MAX_SHIFTED_STEP).ceil().max(1.0) as usize;
    (steps, t / steps as f64)
}

/// `out <- exp(Qh) w` for a column vector, assuming `sigma * h <= MAX_SHIFTED_STEP`.
fn series_step_col(g: &Generator, sigma: f64, h: f64, w: &mut [f64], term: &mut [f64]) {
    let n = w.len();
    term.copy_from_slice(w);
    let mut next = vec![0.0; n];
    for k in 1..=MAX_SERIES_TERMS {
        let c = h / k as f64;
        for i in 0..n {
            let mut v = (sigma + g.diag()[i]) * term[i];
            if i + 1 < n {
                v += g.superdiag()[i] * term[i + 1];
            }
            next[i] = c * v;
        }
        term.copy_from_slice(&next);
        let mut term_norm = 0.0;
        let mut sum_norm = 0.0;
        for i in 0..n {
            w[i] += term[i];
            term_norm += term[i].abs();
            sum_norm += w[i].abs();
        }
        if term_norm <= SERIES_RTOL * sum_norm || term_norm == 0.0 {
            break;
        }
    }
    let scale = (-sigma * h).exp();
    w.iter_mut().for_each(|v| *v *= scale);
}

/// `w <- w exp(Qh)` for a row vector, assuming `sigma * h <= MAX_SHIFTED_STEP`.
fn series_step_row(g: &Generator, sigma: f64, h: f64, w: &mut [f64], term: &mut [f64]) {
    let n = w.len();
    term.copy_from_slice(w);
    for k in 1..=MAX_SERIES_TERMS {
        let c = h / k as f64;
        // (term A)_j = term_j (sigma + d_j) + term_{j-1} s_{j-1}; walk backwards in place.
        for j in (0..n).rev() {
            let mut v = (sigma + g.diag()[j]) * term[j];
            if j > 0 {
                v += term[j - 1] * g.superdiag()[j - 1];
            }
            term[j] = c * v;
        }
        let mut term_norm = 0.0;
        let mut sum_norm = 0.0;
        for j in 0..n {
            w[j] += term[j];
            term_norm += term[j].abs();
            sum_norm += w[j].abs();
        }
        if term_norm <= SERIES_RTOL * sum_norm || term_norm == 0.0 {
            break;
        }
    }
    let scale = (-sigma * h).exp();
    w.iter_mut().for_each(|v| *v *= scale);
}

/// `exp(Qt) v` by substepped truncated series of the shifted generator.
pub fn expm_action(g: &Generator, t: f64, v: &[f64]) -> Vec<f64> {
    assert!(t >= 0.0, "time must be nonnegative");
    assert_eq!(v.len(), g.order());
    let mut w = v.to_vec();
    if t == 0.0 {
        return w;
    }
    let sigma = shift(g);
    let (steps, h) = substeps(sigma, t);
    let mut term = vec![0.0; w.len()];
    for _ in 0..steps {
        series_step_col(g, sigma, h, &mut w, &mut term);
    }
    w
}

/// `p exp(Qt)` for a row vector `p`.
pub fn expm_action_row(g: &Generator, t: f64, p: &[f64]) -> Vec<f64> {
    assert!(t >= 0.0, "time must be nonnegative");
    assert_eq!(p.len(), g.order());
    let mut w = p.to_vec();
    if t == 0.0 {
        return w;
    }
    let sigma = shift(g);
    let (steps, h) = substeps(sigma, t);
    let mut term = vec![0.0; w.len()];
    for _ in 0..steps {
        series_step_row(g, sigma, h, &mut w, &mut term);
    }
    w
}

/// Propagates the row vector `p exp(Qt)` forward through increasing times,
/// carrying a log-scale so that long horizons do not underflow.
#[derive(Debug, Clone)]
pub struct RowPropagator<'a> {
    g: &'a Generator,
    sigma: f64,
    time: f64,
    w: Vec<f64>,
    term: Vec<f64>,
    log_scale: f64,
}

impl<'a> RowPropagator<'a> {
    /// Starts at `t = 0` in phase 1.
    pub fn new(g: &'a Generator) -> Self {
        let n = g.order();
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        Self {
            g,
            sigma: shift(g),
            time: 0.0,
            w,
            term: vec![0.0; n],
            log_scale: 0.0,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances to time `t`, which must not be earlier than the current time.
    pub fn advance_to(&mut self, t: f64) {
        assert!(t >= self.time, "propagator cannot move backwards");
        let dt = t - self.time;
        if self.sigma * dt > DENSE_HORIZON {
            self.dense_step(dt);
        } else if dt > 0.0 {
            let (steps, h) = substeps(self.sigma, dt);
            for _ in 0..steps {
                series_step_row(self.g, self.sigma, h, &mut self.w, &mut self.term);
                self.rescale();
            }
        }
        self.time = t;
    }

    fn dense_step(&mut self, dt: f64) {
        let slowest = self
            .g
            .diag()
            .iter()
            .map(|d| -d)
            .fold(f64::INFINITY, f64::min);
        let e = expm_damped(self.g, dt, slowest);
        for j in (0..self.w.len()).rev() {
            self.term[j] = (0..=j).map(|i| self.w[i] * e.get(i, j)).sum();
        }
        std::mem::swap(&mut self.w, &mut self.term);
        self.log_scale -= slowest * dt;
        let norm: f64 = self.w.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            self.w.iter_mut().for_each(|v| *v /= norm);
            self.log_scale += norm.ln();
        }
    }

    fn rescale(&mut self) {
        let norm: f64 = self.w.iter().map(|v| v.abs()).sum();
        if norm > 0.0 && norm < 1e-150 {
            self.w.iter_mut().for_each(|v| *v /= norm);
            self.log_scale += norm.ln();
        }
    }

    /// `ln(p exp(Qt) x)` at the current time, `-inf` if the product is not positive.
    pub fn ln_dot(&self, x: &[f64]) -> f64 {
        let v: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum();
        if v > 0.0 {
            v.ln() + self.log_scale
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn upper_mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in i..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in k..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Full `exp(Qt)` by scaling and squaring of a truncated shifted series.
/// The result is upper triangular.
pub fn expm(g: &Generator, t: f64) -> DenseMatrix {
    expm_damped(g, t, 0.0)
}

/// `exp((Q + cI) t)`. With `c` no larger than the slowest decay rate the
/// result stays representable where `exp(Qt)` itself would underflow.
fn expm_damped(g: &Generator, t: f64, c: f64) -> DenseMatrix {
    assert!(t >= 0.0, "time must be nonnegative");
    let n = g.order();
    if t == 0.0 {
        return DenseMatrix::identity(n);
    }
    let sigma = shift(g);
    let mut squarings = 0u32;
    let mut h = t;
    while sigma * h > 0.5 {
        h *= 0.5;
        squarings += 1;
    }
    let damp = (c * h).exp();
    // exp(Qh) = exp(-sigma h) sum_k (Ah)^k / k!, column by column.
    let mut e = DenseMatrix::zeros(n);
    let mut col = vec![0.0; n];
    let mut term = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        series_step_col(g, sigma, h, &mut col, &mut term);
        for (i, v) in col.iter().enumerate() {
            e.set(i, j, v * damp);
        }
    }
    for _ in 0..squarings {
        e = e.upper_mul(&e);
    }
    e
}

/// Minimum pairwise gap between diagonal entries relative to `max |diag|`.
pub fn min_relative_separation(g: &Generator) -> f64 {
    let d = g.diag();
    let scale = g.max_abs_diag();
    let mut min = f64::INFINITY;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            min = min.min((d[i] - d[j]).abs() / scale);
        }
    }
    min
}

/// Mixture-of-exponentials form of `exp(Qt)`, available only when the
/// diagonal entries are pairwise separated by more than
/// [`EIGEN_SEPARATION`] relative to `max |diag|`.
///
/// Entry `(i, j)` is the product of the superdiagonal entries from `i` to
/// `j - 1` times the divided difference of `x -> exp(xt)` over
/// `diag[i..=j]`.
pub fn expm_closed_form(g: &Generator, t: f64) -> Option<DenseMatrix> {
    assert!(t >= 0.0, "time must be nonnegative");
    if min_relative_separation(g) <= EIGEN_SEPARATION {
        return None;
    }
    let d = g.diag();
    let n = d.len();
    let exps: Vec<f64> = d.iter().map(|x| (x * t).exp()).collect();
    let mut out = DenseMatrix::zeros(n);
    for i in 0..n {
        let mut chain = 1.0;
        for j in i..n {
            if j > i {
                chain *= g.superdiag()[j - 1];
            }
            let mut dd = 0.0;
            for l in i..=j {
                let denom: f64 = (i..=j).filter(|&m| m != l).map(|m| d[l] - d[m]).product();
                dd += exps[l] / denom;
            }
            out.set(i, j, chain * dd);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoxianParams;
    use nalgebra::{DMatrix, DVector};

    fn qa_example3() -> Generator {
        CoxianParams::new(vec![0.570, 0.029], vec![0.001, 0.143, 0.091])
            .unwrap()
            .to_generator()
    }

    fn six_reps() -> Generator {
        Generator::new(vec![-1.0018, -0.2138, -0.0259], vec![1.0, 0.211]).unwrap()
    }

    fn dense(g: &Generator) -> DMatrix<f64> {
        let n = g.order();
        DMatrix::from_fn(n, n, |i, j| g.to_dense()[i][j])
    }

    #[test]
    fn solve_neg_small_cases() {
        let g = Generator::new(vec![-0.1], vec![]).unwrap();
        assert_eq!(solve_neg(&g, &[1.0]).unwrap(), vec![10.0]);
        let g = Generator::new(vec![-1.0, -1.0], vec![1.0]).unwrap();
        assert_eq!(solve_neg(&g, &[1.0, 1.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn solve_neg_matches_dense_lu() {
        let g = six_reps();
        let x = solve_neg(&g, &[1.0; 3]).unwrap();
        let neg = -dense(&g);
        let oracle = neg.lu().solve(&DVector::from_element(3, 1.0)).unwrap();
        for i in 0..3 {
            assert!((x[i] - oracle[i]).abs() <= 1e-12 * oracle[i].abs());
        }
        // residual
        let qx = mul_col(&g, &x);
        for v in qx {
            assert!((-v - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn solve_neg_rejects_tiny_diagonal_and_bad_length() {
        let g = Generator::new(vec![-1e-301], vec![]).unwrap();
        assert!(matches!(
            solve_neg(&g, &[1.0]),
            Err(CoxianError::Singular { index: 0 })
        ));
        assert!(solve_neg(&six_reps(), &[1.0]).is_err());
    }

    #[test]
    fn expm_action_identity_at_zero() {
        let g = six_reps();
        let v = vec![0.3, -1.0, 2.0];
        assert_eq!(expm_action(&g, 0.0, &v), v);
        assert_eq!(expm_action_row(&g, 0.0, &v), v);
    }

    #[test]
    fn expm_action_scalar() {
        let g = Generator::new(vec![-0.1], vec![]).unwrap();
        let w = expm_action(&g, 10.0, &[1.0]);
        assert!((w[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    /// Partial-fraction form of `p exp(Qt)` for distinct diagonals, written
    /// independently of `expm_closed_form`.
    fn row_partial_fractions(g: &Generator, t: f64) -> Vec<f64> {
        let d = g.diag();
        let s = g.superdiag();
        let n = d.len();
        (0..n)
            .map(|j| {
                let chain: f64 = s[..j].iter().product();
                let mut acc = 0.0;
                for l in 0..=j {
                    let mut denom = 1.0;
                    for m in 0..=j {
                        if m != l {
                            denom *= d[l] - d[m];
                        }
                    }
                    acc += (d[l] * t).exp() / denom;
                }
                chain * acc
            })
            .collect()
    }

    #[test]
    fn expm_row_matches_partial_fractions() {
        let g = qa_example3();
        let w = expm_action_row(&g, 1.0, &[1.0, 0.0, 0.0]);
        let oracle = row_partial_fractions(&g, 1.0);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn closed_form_two_phase_entry() {
        let g = Generator::new(vec![-1.0, -3.0], vec![0.5]).unwrap();
        let t = 0.7;
        let e = expm_closed_form(&g, t).unwrap();
        let expect = 0.5 * ((-t).exp() - (-3.0 * t).exp()) / (-1.0 + 3.0);
        assert!((e.get(0, 1) - expect).abs() < 1e-15);
        assert!((e.get(0, 0) - (-t).exp()).abs() < 1e-15);
        assert_eq!(e.get(1, 0), 0.0);
        let one = Generator::new(vec![-0.3], vec![]).unwrap();
        assert!((expm_closed_form(&one, 2.0).unwrap().get(0, 0) - (-0.6f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn closed_form_matches_scaling_and_squaring() {
        let g = qa_example3();
        let a = expm_closed_form(&g, 5.0).unwrap();
        let b = expm(&g, 5.0);
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn closed_form_unavailable_for_repeated_diagonal() {
        let g = Generator::new(vec![-1.0, -1.0, -2.0], vec![0.5, 0.5]).unwrap();
        assert!(expm_closed_form(&g, 1.0).is_none());
        // The series path still works and agrees with column actions.
        let e = expm(&g, 1.0);
        let col = expm_action(&g, 1.0, &[0.0, 0.0, 1.0]);
        for (i, v) in col.iter().enumerate() {
            assert!((e.get(i, 2) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn expm_handles_long_horizons() {
        let g = six_reps();
        let e = expm(&g, 400.0);
        let w = expm_action_row(&g, 400.0, &[1.0, 0.0, 0.0]);
        for (j, v) in w.iter().enumerate() {
            assert!((e.get(0, j) - v).abs() <= 1e-12 * v.abs().max(1e-300));
        }
        let cf = expm_closed_form(&g, 400.0).unwrap();
        assert!(cf.max_abs_diff(&e) < 1e-10);
    }

    #[test]
    fn propagator_tracks_tiny_survival() {
        let g = Generator::new(vec![-1.0], vec![]).unwrap();
        let mut prop = RowPropagator::new(&g);
        prop.advance_to(500.0);
        assert!((prop.ln_dot(&[1.0]) + 500.0).abs() < 1e-9);
        prop.advance_to(900.0);
        assert!((prop.ln_dot(&[1.0]) + 900.0).abs() < 1e-9);
    }

    #[test]
    fn dense_jump_matches_small_steps() {
        // One stiff phase forces the dense path for any sizeable gap.
        let g = Generator::new(vec![-400.0, -0.3, -0.05], vec![399.0, 0.2]).unwrap();
        let x = [1.0, 2.0, 0.5];
        let mut jump = RowPropagator::new(&g);
        jump.advance_to(250.0);
        let mut walk = RowPropagator::new(&g);
        for k in 1..=25_000 {
            walk.advance_to(k as f64 * 0.01);
        }
        assert!((jump.ln_dot(&x) - walk.ln_dot(&x)).abs() < 1e-9);
    }
}
