//! All Coxian representations equivalent to a given one.
//!
//! Equivalent generators share their diagonal up to permutation, so each
//! distinct permutation `V` of `diag(Q_a)` is tried as the diagonal of a
//! candidate `Q_b`. The superdiagonal of `Q_b` is then forced: building the
//! transform row by row and requiring each row to sum to one fixes
//! `b[i][i+1]` linearly, one entry at a time. A candidate is accepted when
//! every derived entry satisfies `0 < b[i] <= -V[i]` and it reproduces the
//! moments of `Q_a`.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::equivalence::{check_equivalent, next_row, terminal_residual, DEFAULT_TOL};
use crate::error::{CoxianError, Result};
use crate::model::{moments, CoxianParams, Generator, DEFAULT_MAX_ORDER};

/// Relative gap under which two diagonal entries count as one eigenvalue.
pub const DUPLICATE_TOL: f64 = 1e-10;
/// Relative gap under which near-duplicate eigenvalues are flagged.
pub const NEAR_DUPLICATE_TOL: f64 = 1e-6;
/// Acceptance threshold for the moment residual of a candidate.
pub const MOMENT_TOL: f64 = 1e-8;
/// Relative slack for snapping a derived superdiagonal onto its bounds.
pub const SNAP_TOL: f64 = 1e-12;

const WARN_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    NegativeB,
    BExceedsBound,
    ConsistencyFailure,
    MomentMismatch,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationCandidate {
    /// One-based; 1 is the identity.
    pub perm_index: usize,
    /// Source phase (zero-based) placed at each position.
    pub permutation: Vec<usize>,
    pub v: Vec<f64>,
    pub b: Option<Vec<f64>>,
    pub feasible: bool,
    pub rejection_reason: Option<Rejection>,
    /// Zero-based superdiagonal position that failed, for bound rejections.
    pub rejected_at: Option<usize>,
    pub moment_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationSet {
    pub source: CoxianParams,
    pub candidates: Vec<PermutationCandidate>,
    /// Feasible representations, identity first.
    pub representations: Vec<CoxianParams>,
    /// Some pair of diagonal entries is distinct but within
    /// [`NEAR_DUPLICATE_TOL`]; the eigenvalue-distinctness assumption is weak.
    pub near_duplicate_eigenvalues: bool,
}

impl RepresentationSet {
    pub fn feasible_candidates(&self) -> impl Iterator<Item = &PermutationCandidate> {
        self.candidates.iter().filter(|c| c.feasible)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    pub tol: f64,
    pub max_order: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_order: DEFAULT_MAX_ORDER,
        }
    }
}

fn same_value(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Lexicographic successor of `labels`; false once the last permutation is reached.
fn next_permutation(labels: &mut [usize]) -> bool {
    let n = labels.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && labels[i - 1] >= labels[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while labels[j] <= labels[i - 1] {
        j -= 1;
    }
    labels.swap(i - 1, j);
    labels[i..].reverse();
    true
}

/// Distinct permutations of the diagonal as source-index vectors: the
/// identity first, then the rest in lexicographic order of the value
/// classes. Entries within [`DUPLICATE_TOL`] of each other are treated as
/// one value, so the count is the multinomial coefficient rather than `n!`.
pub fn diag_permutation_indices(diag: &[f64]) -> Vec<Vec<usize>> {
    let n = diag.len();
    let mut class = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if class[i] != usize::MAX {
            continue;
        }
        let c = members.len();
        let mut group = vec![i];
        class[i] = c;
        for j in i + 1..n {
            if class[j] == usize::MAX && same_value(diag[i], diag[j], DUPLICATE_TOL) {
                class[j] = c;
                group.push(j);
            }
        }
        members.push(group);
    }
    let to_indices = |labels: &[usize]| {
        let mut seen = vec![0usize; members.len()];
        labels
            .iter()
            .map(|&c| {
                let idx = members[c][seen[c]];
                seen[c] += 1;
                idx
            })
            .collect::<Vec<usize>>()
    };
    let identity: Vec<usize> = (0..n).collect();
    let mut out = vec![identity.clone()];
    let mut labels = class.clone();
    labels.sort_unstable();
    loop {
        let idx = to_indices(&labels);
        if idx != identity {
            out.push(idx);
        }
        if !next_permutation(&mut labels) {
            break;
        }
    }
    out
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(CoxianError::OrderTooLarge { n, cap });
    }
    if n > WARN_ORDER {
        warn!("enumerating representations of order {n}: up to {n}! permutations");
    }
    Ok(())
}

/// Distinct permutations of `diag(Q)` as value vectors, identity first.
pub fn diag_permutations(g: &Generator, max_order: usize) -> Result<Vec<Vec<f64>>> {
    check_cap(g.order(), max_order)?;
    Ok(diag_permutation_indices(g.diag())
        .into_iter()
        .map(|p| p.iter().map(|&i| g.diag()[i]).collect())
        .collect())
}

/// Largest relative difference of `p Q^{-k} 1` for `k = 1..=max(n - 2, 1)`.
pub fn moment_residual(qa: &Generator, qb: &Generator) -> Result<f64> {
    if qa.order() != qb.order() {
        return Err(CoxianError::DimensionMismatch {
            expected: qa.order(),
            found: qb.order(),
        });
    }
    let k = qa.order().saturating_sub(2).max(1);
    let a = moments(qa, k)?;
    let b = moments(qb, k)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs() / x.abs())
        .fold(0.0, f64::max))
}

/// Outcome of deriving a superdiagonal for one diagonal permutation.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateOutcome {
    Accepted {
        generator: Generator,
        moment_residual: f64,
    },
    Rejected {
        reason: Rejection,
        at: Option<usize>,
    },
}

/// Derives the superdiagonal that makes `diag = v` equivalent to `qa`, if
/// one exists inside the Coxian constraints.
pub fn candidate_superdiag(qa: &Generator, v: &[f64], tol: f64) -> Result<CandidateOutcome> {
    let n = qa.order();
    if v.len() != n {
        return Err(CoxianError::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if v == qa.diag() {
        return Ok(CandidateOutcome::Accepted {
            generator: qa.clone(),
            moment_residual: 0.0,
        });
    }
    let mu_a = qa.absorbing_vector().0;
    let slack = SNAP_TOL * qa.max_abs_diag();
    let mut b = Vec::with_capacity(n - 1);
    let mut mu_b = Vec::with_capacity(n);
    let mut row = vec![1.0];
    for i in 0..n - 1 {
        // Row i of M q_b = q_a; the only unknown is mu_b[i].
        let known: f64 = row[..i].iter().zip(&mu_b).map(|(m, u)| m * u).sum();
        let mut mu = (mu_a[i] - known) / row[i];
        let mut bi = -v[i] - mu;
        if !(bi > 0.0) {
            return Ok(CandidateOutcome::Rejected {
                reason: Rejection::NegativeB,
                at: Some(i),
            });
        }
        if bi > -v[i] {
            if bi - -v[i] <= slack {
                bi = -v[i];
                mu = 0.0;
            } else {
                return Ok(CandidateOutcome::Rejected {
                    reason: Rejection::BExceedsBound,
                    at: Some(i),
                });
            }
        }
        b.push(bi);
        mu_b.push(mu.max(0.0));
        row = next_row(&row, qa.diag()[i], qa.superdiag()[i], v, &b);
    }
    mu_b.push(-v[n - 1]);

    let raw = terminal_residual(&row, qa.diag()[n - 1], v, &b);
    let row_scale = row.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    if !(raw / (qa.norm_inf() * row_scale) <= tol) {
        return Ok(CandidateOutcome::Rejected {
            reason: Rejection::ConsistencyFailure,
            at: None,
        });
    }
    let generator = match Generator::with_absorption(v.to_vec(), b, mu_b) {
        Ok(g) => g,
        Err(_) => {
            return Ok(CandidateOutcome::Rejected {
                reason: Rejection::BExceedsBound,
                at: None,
            })
        }
    };
    let moment_residual = moment_residual(qa, &generator)?;
    if !(moment_residual <= MOMENT_TOL.max(tol)) {
        return Ok(CandidateOutcome::Rejected {
            reason: Rejection::MomentMismatch,
            at: None,
        });
    }
    Ok(CandidateOutcome::Accepted {
        generator,
        moment_residual,
    })
}

fn evaluate(
    qa: &Generator,
    perm_index: usize,
    permutation: Vec<usize>,
    tol: f64,
) -> Result<(PermutationCandidate, Option<CoxianParams>)> {
    let v: Vec<f64> = permutation.iter().map(|&i| qa.diag()[i]).collect();
    let mut cand = PermutationCandidate {
        perm_index,
        permutation,
        v,
        b: None,
        feasible: false,
        rejection_reason: None,
        rejected_at: None,
        moment_residual: None,
    };
    let mut accepted = None;
    match candidate_superdiag(qa, &cand.v, tol)? {
        CandidateOutcome::Accepted {
            generator,
            moment_residual,
        } => {
            cand.b = Some(generator.superdiag().to_vec());
            cand.moment_residual = Some(moment_residual);
            let report = check_equivalent(qa, &generator, tol)?;
            if report.equivalent {
                cand.feasible = true;
                accepted = Some(generator.to_params());
            } else {
                cand.rejection_reason = Some(Rejection::ConsistencyFailure);
            }
        }
        CandidateOutcome::Rejected { reason, at } => {
            cand.rejection_reason = Some(reason);
            cand.rejected_at = at;
        }
    }
    Ok((cand, accepted))
}

fn has_near_duplicates(diag: &[f64]) -> bool {
    (0..diag.len()).any(|i| {
        (i + 1..diag.len()).any(|j| {
            same_value(diag[i], diag[j], NEAR_DUPLICATE_TOL)
                && !same_value(diag[i], diag[j], DUPLICATE_TOL)
        })
    })
}

/// Runs every distinct diagonal permutation and collects the feasible
/// representations, cross-checked against `qa` with [`check_equivalent`].
pub fn enumerate_representations(
    qa: &Generator,
    opts: EnumerateOptions,
) -> Result<RepresentationSet> {
    check_cap(qa.order(), opts.max_order)?;
    let perms = diag_permutation_indices(qa.diag());
    let evaluated = perms
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| evaluate(qa, i + 1, p, opts.tol))
        .collect::<Result<Vec<_>>>()?;
    let (candidates, accepted): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
    let representations = accepted.into_iter().flatten().collect();
    Ok(RepresentationSet {
        source: qa.to_params(),
        candidates,
        representations,
        near_duplicate_eigenvalues: has_near_duplicates(qa.diag()),
    })
}
