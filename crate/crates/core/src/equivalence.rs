//! Similarity transforms between two Coxian generators of the same order.
//!
//! If `Q_a` and `Q_b` describe the same distribution there is a matrix `M`
//! with `M Q_b = Q_a M`, `e_1 M = e_1`, `M q_b = q_a` and `M 1 = 1`. For
//! bidiagonal generators `M` is lower triangular and its rows follow from
//! row 1 by the recurrence
//!
//! ```text
//! a[i][i+1] m[i+1][j] = m[i][j] (b[j][j] - a[i][i]) + m[i][j-1] b[j-1][j]
//! ```
//!
//! with the terminal condition `m[n+1][j] = 0`, which is where
//! non-equivalent candidates are rejected.

use serde::Serialize;

use crate::error::{CoxianError, Result};
use crate::model::{moments, Generator};

/// Default tolerance for equivalence checks.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Lower-triangular transform, stored row by row (row `i` holds `i + 1` entries).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<Vec<f64>>")]
pub struct TransformMatrix {
    rows: Vec<Vec<f64>>,
}

impl From<TransformMatrix> for Vec<Vec<f64>> {
    fn from(m: TransformMatrix) -> Self {
        m.to_dense()
    }
}

impl TransformMatrix {
    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; i + 1];
                r[i] = 1.0;
                r
            })
            .collect();
        Self { rows }
    }

    pub fn order(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.rows[i][j]
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.order();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Row `i + 1` of the transform from row `i` (length `i + 1`), given
/// `a_ii`, `a_{i,i+1}`, the target diagonal and the target superdiagonal
/// entries known so far (at least `i + 1` of them).
pub(crate) fn next_row(
    row: &[f64],
    a_diag: f64,
    a_super: f64,
    b_diag: &[f64],
    b_super: &[f64],
) -> Vec<f64> {
    let len = row.len() + 1;
    (0..len)
        .map(|j| {
            let here = row.get(j).map_or(0.0, |m| m * (b_diag[j] - a_diag));
            let left = if j > 0 {
                row[j - 1] * b_super[j - 1]
            } else {
                0.0
            };
            (here + left) / a_super
        })
        .collect()
}

/// Left-hand side of the recurrence one row past the end; zero when the
/// transform closes.
pub(crate) fn terminal_residual(
    last_row: &[f64],
    a_diag: f64,
    b_diag: &[f64],
    b_super: &[f64],
) -> f64 {
    (0..last_row.len())
        .map(|j| {
            let here = last_row[j] * (b_diag[j] - a_diag);
            let left = if j > 0 {
                last_row[j - 1] * b_super[j - 1]
            } else {
                0.0
            };
            (here + left).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Found(TransformMatrix),
    /// The recurrence did not close; carries the relative terminal residual
    /// and the rows that were built.
    Infeasible {
        terminal_residual: f64,
        partial: TransformMatrix,
    },
}

fn check_orders(qa: &Generator, qb: &Generator) -> Result<()> {
    if qa.order() != qb.order() {
        return Err(CoxianError::DimensionMismatch {
            expected: qa.order(),
            found: qb.order(),
        });
    }
    Ok(())
}

fn pair_scale(qa: &Generator, qb: &Generator) -> f64 {
    qa.norm_inf().max(qb.norm_inf())
}

/// Builds the transform taking `Q_b` to `Q_a` by the row recurrence.
pub fn build_transform(qa: &Generator, qb: &Generator, tol: f64) -> Result<Transform> {
    check_orders(qa, qb)?;
    let n = qa.order();
    let mut rows = vec![vec![1.0]];
    for i in 0..n - 1 {
        let r = next_row(
            &rows[i],
            qa.diag()[i],
            qa.superdiag()[i],
            qb.diag(),
            qb.superdiag(),
        );
        rows.push(r);
    }
    let m = TransformMatrix { rows };
    let raw = terminal_residual(m.row(n - 1), qa.diag()[n - 1], qb.diag(), qb.superdiag());
    let rel = raw / (pair_scale(qa, qb) * m.max_abs().max(1.0));
    if rel <= tol {
        Ok(Transform::Found(m))
    } else {
        Ok(Transform::Infeasible {
            terminal_residual: rel,
            partial: m,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub m: Option<TransformMatrix>,
    /// `|| M Q_b - Q_a M ||_inf`.
    pub max_residual: f64,
    pub mu1_gap: f64,
    /// `|| M q_b - q_a ||_inf`.
    pub absorb_gap: f64,
    pub row_sum_gap: f64,
    /// Relative differences of raw moments `1..=2n-1`.
    pub moment_gaps: Vec<f64>,
    pub tolerance: f64,
    /// Residuals are compared against `tolerance * scale`.
    pub scale: f64,
    pub reason: Option<String>,
}

/// `|| M Q_b - Q_a M ||_inf` over the dense product.
fn similarity_residual(m: &TransformMatrix, qa: &Generator, qb: &Generator) -> f64 {
    let n = qa.order();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut row_norm = 0.0;
        for j in 0..n {
            let mqb = m.get(i, j) * qb.diag()[j]
                + if j > 0 {
                    m.get(i, j - 1) * qb.superdiag()[j - 1]
                } else {
                    0.0
                };
            let qam = qa.diag()[i] * m.get(i, j)
                + if i + 1 < n {
                    qa.superdiag()[i] * m.get(i + 1, j)
                } else {
                    0.0
                };
            row_norm += (mqb - qam).abs();
        }
        worst = worst.max(row_norm);
    }
    worst
}

fn relative_moment_gaps(qa: &Generator, qb: &Generator, count: usize) -> Vec<f64> {
    match (moments(qa, count), moments(qb, count)) {
        (Ok(a), Ok(b)) => a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs() / x.abs())
            .collect(),
        _ => vec![f64::INFINITY; count],
    }
}

/// Checks every condition of the similarity characterization: the
/// recurrence closes, `M Q_b = Q_a M`, `M q_b = q_a`, rows of `M` sum to
/// one, and the first `2n - 1` moments agree.
pub fn check_equivalent(qa: &Generator, qb: &Generator, tol: f64) -> Result<EquivalenceReport> {
    check_orders(qa, qb)?;
    if !(tol > 0.0) {
        return Err(CoxianError::InvalidOption(
            "tolerance must be positive".into(),
        ));
    }
    let n = qa.order();
    let scale = pair_scale(qa, qb);
    let (m, mut reason) = match build_transform(qa, qb, tol)? {
        Transform::Found(m) => (m, None),
        Transform::Infeasible {
            terminal_residual,
            partial,
        } => (
            partial,
            Some(format!(
                "transform recurrence does not close (relative terminal residual {terminal_residual:.3e})"
            )),
        ),
    };
    let max_residual = similarity_residual(&m, qa, qb);
    let mu1_gap = (qa.mu1() - qb.mu1()).abs();
    let mqb = m.mul_vec(qb.absorbing_vector().as_slice());
    let absorb_gap = mqb
        .iter()
        .zip(qa.absorbing_vector().as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let row_sum_gap = m
        .row_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let moment_gaps = relative_moment_gaps(qa, qb, 2 * n - 1);

    let m_scale = m.max_abs().max(1.0);
    if reason.is_none() && !(max_residual <= tol * scale * m_scale) {
        reason = Some(format!(
            "similarity residual {max_residual:.3e} exceeds tolerance"
        ));
    }
    if reason.is_none() && !(mu1_gap <= tol * scale) {
        reason = Some(format!(
            "first-phase absorption rates differ by {mu1_gap:.3e}"
        ));
    }
    if reason.is_none() && !(absorb_gap <= tol * scale * m_scale) {
        reason = Some(format!(
            "absorption vectors not mapped (gap {absorb_gap:.3e})"
        ));
    }
    if reason.is_none() && !(row_sum_gap <= tol * m_scale) {
        reason = Some(format!(
            "transform rows do not sum to one (gap {row_sum_gap:.3e})"
        ));
    }
    if reason.is_none() {
        if let Some((k, g)) = moment_gaps.iter().enumerate().find(|(_, g)| !(**g <= tol)) {
            reason = Some(format!("moment {} differs by relative {g:.3e}", k + 1));
        }
    }
    let equivalent = reason.is_none();
    Ok(EquivalenceReport {
        equivalent,
        m: equivalent.then_some(m),
        max_residual,
        mu1_gap,
        absorb_gap,
        row_sum_gap,
        moment_gaps,
        tolerance: tol,
        scale,
        reason,
    })
}

/// Absorption rate out of phase 1; invariant across equivalent representations.
pub fn mu1(g: &Generator) -> f64 {
    g.mu1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoxianParams;

    fn qa() -> Generator {
        CoxianParams::new(vec![0.570, 0.029], vec![0.001, 0.143, 0.091])
            .unwrap()
            .to_generator()
    }

    fn qb_printed() -> Generator {
        Generator::new(vec![-0.172, -0.571, -0.091], vec![0.170, 0.096]).unwrap()
    }

    #[test]
    fn identity_transform_for_equal_generators() {
        let g = qa();
        match build_transform(&g, &g, DEFAULT_TOL).unwrap() {
            Transform::Found(m) => assert_eq!(m, TransformMatrix::identity(3)),
            other => panic!("expected identity, got {other:?}"),
        }
        let rep = check_equivalent(&g, &g, DEFAULT_TOL).unwrap();
        assert!(rep.equivalent);
        assert_eq!(rep.max_residual, 0.0);
        assert_eq!(rep.moment_gaps.len(), 5);
    }

    #[test]
    fn printed_pair_gives_expected_transform_row() {
        let m = match build_transform(&qa(), &qb_printed(), 5e-3).unwrap() {
            Transform::Found(m) => m,
            other => panic!("{other:?}"),
        };
        assert_eq!(m.row(0), &[1.0]);
        for (a, e) in m.to_dense()[1].iter().zip([0.7, 0.3, 0.0]) {
            assert!((a - e).abs() < 5e-3, "{a} vs {e}");
        }
        assert_eq!(m.get(0, 2), 0.0);
    }

    #[test]
    fn perturbed_spectrum_is_infeasible() {
        let qb = Generator::new(vec![-0.171, -0.571, -0.091], vec![0.170, 0.096]).unwrap();
        assert!(matches!(
            build_transform(&qa(), &qb, DEFAULT_TOL).unwrap(),
            Transform::Infeasible { .. }
        ));
        let rep = check_equivalent(&qa(), &qb, DEFAULT_TOL).unwrap();
        assert!(!rep.equivalent);
        assert!(rep.m.is_none());
        assert!(rep.reason.is_some());
    }

    #[test]
    fn order_mismatch_is_an_error() {
        let one = Generator::new(vec![-1.0], vec![]).unwrap();
        assert!(matches!(
            check_equivalent(&qa(), &one, DEFAULT_TOL),
            Err(CoxianError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mu1_values() {
        assert!((mu1(&qa()) - 0.001).abs() < 1e-15);
        assert!((mu1(&qb_printed()) - 0.002).abs() < 1e-12);
        assert_eq!(mu1(&Generator::new(vec![-0.4], vec![]).unwrap()), 0.4);
    }

    #[test]
    fn printed_pair_is_close_but_not_exact() {
        let rep = check_equivalent(&qa(), &qb_printed(), DEFAULT_TOL).unwrap();
        assert!(!rep.equivalent);
        assert!(rep.mu1_gap <= 2e-3);
    }
}
