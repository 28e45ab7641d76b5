//! Exact simulation of Coxian absorption times.
//!
//! Streams are `ChaCha8Rng` instances keyed by `(seed, stream)`, so a dataset
//! is generated in fixed-size chunks, each on its own stream, and the output
//! does not depend on how many threads ran.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CoxianError, Result};
use crate::model::CoxianParams;

/// Observations drawn per independent stream.
pub const CHUNK_SIZE: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Sojourn time in each visited phase.
    pub sojourns: Vec<f64>,
    /// One-based phase from which the process absorbed.
    pub exit_phase: usize,
    pub total: f64,
}

/// Deterministic stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

pub fn sample_path<R: Rng + ?Sized>(p: &CoxianParams, rng: &mut R) -> PathRecord {
    let n = p.order();
    let mut sojourns = Vec::with_capacity(n);
    for k in 0..n {
        let forward = p.forward_rate(k);
        let total_rate = forward + p.mu()[k];
        sojourns.push(exponential(rng, total_rate));
        let absorbs = k + 1 == n || open_unit(rng) * total_rate < p.mu()[k];
        if absorbs {
            let total = sojourns.iter().sum();
            return PathRecord {
                sojourns,
                exit_phase: k + 1,
                total,
            };
        }
    }
    unreachable!("the last phase always absorbs")
}

/// Absorption time only; avoids allocating the path.
fn sample_time<R: RngCore + ?Sized>(p: &CoxianParams, rng: &mut R) -> f64 {
    let n = p.order();
    let mut t = 0.0;
    for k in 0..n {
        let total_rate = p.forward_rate(k) + p.mu()[k];
        t += exponential(rng, total_rate);
        if k + 1 == n || open_unit(rng) * total_rate < p.mu()[k] {
            break;
        }
    }
    t
}

/// `count` independent absorption times, reproducible from `seed`.
pub fn sample_dataset(p: &CoxianParams, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(CoxianError::InvalidOption(
            "number of observations must be at least 1".into(),
        ));
    }
    let chunks = count.div_ceil(CHUNK_SIZE);
    let out: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = CHUNK_SIZE.min(count - c * CHUNK_SIZE);
            let mut rng = stream_rng(seed, c as u64);
            (0..len).map(move |_| sample_time(p, &mut rng))
        })
        .collect();
    Ok(out)
}
