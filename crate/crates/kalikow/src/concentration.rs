//! Empirical verification harness for the scalar and matrix concentration
//! inequalities.
//!
//! Both bounds come from the overlapping-block coupling: with grid size
//! `B` and `k = floor(T / 2B)` blocks per parity class, the centered time
//! average behaves like two sums of independent block means up to an event
//! of explicit probability (`p_bad`). The resulting levels use the proof's
//! explicit constants; nothing is fitted.

use crate::dict::Dictionary;
use crate::gram::{assemble, matrix_deviation_bound};
use crate::rng::SiteRng;
use crate::sim::{block_partition, psi_bound, sample_window, BlockPartition, SimOptions};
use crate::KalikowModel;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Scalar Hoeffding-type level and tail.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarBound {
    /// `sqrt(k B^2 M^2 x / (2 T^2)) + sqrt((k+1) B^2 M^2 x / (2 T^2))`.
    pub level: f64,
    /// `p_bad + 2 exp(-x)` (single function; the union version scales the
    /// exponential part by the family size).
    pub tail: f64,
    pub block: BlockPartition,
}

/// Explicit scalar concentration level for a window function bounded by
/// `func_bound`.
pub fn scalar_bound(
    func_bound: f64,
    m: usize,
    t_horizon: i64,
    f_size: usize,
    theta: f64,
    x: f64,
    psi: f64,
) -> Result<ScalarBound> {
    if x < 0.0 {
        return Err(Error::Contract(format!("x must be nonnegative, got {x}")));
    }
    let bp = block_partition(t_horizon, m, theta, f_size)?;
    let t = t_horizon as f64;
    let b = bp.grid as f64;
    let unit = b * b * func_bound * func_bound * x / (2.0 * t * t);
    let level = (bp.k as f64 * unit).sqrt() + ((bp.k as f64 + 1.0) * unit).sqrt();
    Ok(ScalarBound {
        level,
        tail: bp.p_bad(psi) + 2.0 * (-x).exp(),
        block: bp,
    })
}

/// Verdict of a Monte Carlo bound check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// The pilot estimate of the centering expectation is too noisy
    /// relative to the bound level.
    Inconclusive,
}

/// Outcome of [`scalar_test`] / [`matrix_test`].
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub bound_level: f64,
    pub tail_mass: f64,
    pub n_replicas: u64,
    pub n_violations: u64,
    pub empirical_rate: f64,
    pub verdict: Verdict,
    /// Standard error of the pilot centering estimate.
    pub pilot_std_error: f64,
    /// Pilot horizon used for centering (10x the test horizon).
    pub pilot_horizon: i64,
}

fn finish_report(
    level: f64,
    tail: f64,
    replicas: u64,
    violations: u64,
    pilot_se: f64,
    pilot_horizon: i64,
) -> ConcentrationReport {
    let rate = violations as f64 / replicas as f64;
    let verdict = if pilot_se > 0.1 * level {
        Verdict::Inconclusive
    } else {
        let p = tail.clamp(0.0, 1.0);
        let sigma = (p * (1.0 - p) / replicas as f64).sqrt();
        if rate <= p + 3.0 * sigma {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    ConcentrationReport {
        bound_level: level,
        tail_mass: tail,
        n_replicas: replicas,
        n_violations: violations,
        empirical_rate: rate,
        verdict,
        pilot_std_error: pilot_se,
        pilot_horizon,
    }
}

/// Which dictionary functions a scalar test covers.
#[derive(Debug, Clone, Copy)]
pub enum FuncSelect {
    /// One function by index; tail `p_bad + 2 exp(-x)`.
    Single(usize),
    /// Union over the whole dictionary; tail `p_bad + 2 |Phi| exp(-x)`.
    All,
}

/// Pilot means over a 10x horizon, with batch-mean standard errors.
fn pilot_means(
    model: &KalikowModel,
    dict: &Dictionary,
    t_horizon: i64,
    seed: u64,
    opts: &SimOptions,
) -> Result<(Vec<f64>, Vec<f64>, i64)> {
    let pilot_t = 10 * t_horizon;
    let sample = sample_window(model, dict.neurons(), dict.past_depth(), pilot_t, seed, opts)?;
    let n = dict.len();
    let batches = 20usize;
    let batch_len = pilot_t / batches as i64;
    let mut sums = vec![0.0f64; n];
    let mut batch_sums = vec![0.0f64; n * batches];
    dict.for_each_window(&sample, |t, phi| {
        let batch = (((t - 1) / batch_len) as usize).min(batches - 1);
        for (k, v) in phi.iter().enumerate() {
            sums[k] += v;
            batch_sums[batch * n + k] += v;
        }
    })?;
    let means: Vec<f64> = sums.iter().map(|s| s / pilot_t as f64).collect();
    let mut ses = vec![0.0f64; n];
    for k in 0..n {
        let mut mean_of_batches = 0.0;
        let mut batch_means = vec![0.0f64; batches];
        for (bidx, bm) in batch_means.iter_mut().enumerate() {
            let len = if bidx == batches - 1 {
                pilot_t - batch_len * (batches as i64 - 1)
            } else {
                batch_len
            };
            *bm = batch_sums[bidx * n + k] / len as f64;
            mean_of_batches += *bm / batches as f64;
        }
        let var: f64 = batch_means
            .iter()
            .map(|bm| (bm - mean_of_batches) * (bm - mean_of_batches))
            .sum::<f64>()
            / (batches as f64 - 1.0);
        ses[k] = (var / batches as f64).sqrt();
    }
    Ok((means, ses, pilot_t))
}

/// Monte Carlo check of the scalar bound: simulates independent windows,
/// computes the centered time average of the selected function(s) against
/// the pilot mean, and counts exceedances of the level.
#[allow(clippy::too_many_arguments)]
pub fn scalar_test(
    model: &KalikowModel,
    dict: &Dictionary,
    select: FuncSelect,
    t_horizon: i64,
    replicas: u64,
    x: f64,
    theta: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<ConcentrationReport> {
    if replicas == 0 {
        return Err(Error::Contract("need at least one replica".into()));
    }
    let psi = psi_bound(model, theta)?;
    let func_bound = match select {
        FuncSelect::Single(idx) => {
            if idx >= dict.len() {
                return Err(Error::Contract(format!("function index {idx} out of range")));
            }
            dict.function_bound(idx)
        }
        FuncSelect::All => dict.sup_norm(),
    };
    let base = scalar_bound(
        func_bound,
        dict.past_depth(),
        t_horizon,
        dict.neurons().len(),
        theta,
        x,
        psi,
    )?;
    let tail = match select {
        FuncSelect::Single(_) => base.tail,
        FuncSelect::All => {
            base.block.p_bad(psi) + 2.0 * dict.len() as f64 * (-x).exp()
        }
    };

    let rng = SiteRng::new(seed);
    let pilot_seed = rng.replica(u64::MAX).seed();
    let (means, ses, pilot_t) = pilot_means(model, dict, t_horizon, pilot_seed, opts)?;
    let pilot_se = match select {
        FuncSelect::Single(idx) => ses[idx],
        FuncSelect::All => ses.iter().cloned().fold(0.0, f64::max),
    };

    let n = dict.len();
    let violations: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<u64> {
            let replica_seed = rng.replica(r).seed();
            let sample = sample_window(
                model,
                dict.neurons(),
                dict.past_depth(),
                t_horizon,
                replica_seed,
                opts,
            )?;
            let mut sums = vec![0.0f64; n];
            dict.for_each_window(&sample, |_, phi| {
                for (s, v) in sums.iter_mut().zip(phi) {
                    *s += v;
                }
            })?;
            let exceeds = |k: usize| {
                let z = sums[k] / t_horizon as f64 - means[k];
                z > base.level
            };
            let hit = match select {
                FuncSelect::Single(idx) => exceeds(idx),
                FuncSelect::All => (0..n).any(exceeds),
            };
            Ok(u64::from(hit))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    Ok(finish_report(
        base.level,
        tail,
        replicas,
        violations,
        pilot_se,
        pilot_t,
    ))
}

/// Monte Carlo check of the matrix bound: counts replicas whose Gram
/// matrix deviates from the pilot reference by more than the explicit
/// spectral-norm level. Also verifies the norm sanity
/// `||Z||_2 <= ||Z||_F` on every replica.
#[allow(clippy::too_many_arguments)]
pub fn matrix_test(
    model: &KalikowModel,
    dict: &Dictionary,
    t_horizon: i64,
    replicas: u64,
    x: f64,
    theta: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<ConcentrationReport> {
    if replicas == 0 {
        return Err(Error::Contract("need at least one replica".into()));
    }
    let psi = psi_bound(model, theta)?;
    let m_bound = dict.sup_norm();
    let bound = matrix_deviation_bound(
        dict.neurons().len(),
        dict.past_depth(),
        t_horizon,
        theta,
        m_bound,
        dict.len(),
        x,
        psi,
    )?;

    let rng = SiteRng::new(seed);
    let pilot_seed = rng.replica(u64::MAX).seed();
    let target = dict.neurons()[0];
    let pilot_t = 10 * t_horizon;
    let pilot_sample =
        sample_window(model, dict.neurons(), dict.past_depth(), pilot_t, pilot_seed, opts)?;
    let pilot_gram = assemble(dict, &pilot_sample, target)?;
    // Entrywise batch-mean standard error of the pilot Gram, reduced to a
    // single scale by the max (conservative for the verdict gate).
    let pilot_se = pilot_gram_se(dict, &pilot_sample)?;

    let violations: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<u64> {
            let replica_seed = rng.replica(r).seed();
            let sample = sample_window(
                model,
                dict.neurons(),
                dict.past_depth(),
                t_horizon,
                replica_seed,
                opts,
            )?;
            let gram = assemble(dict, &sample, target)?;
            let z = gram.g.diff(&pilot_gram.g);
            let spectral = z.spectral_norm();
            debug_assert!(spectral <= z.frobenius_norm() + 1e-12);
            Ok(u64::from(spectral > bound.level))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    Ok(finish_report(
        bound.level,
        bound.tail,
        replicas,
        violations,
        pilot_se,
        pilot_t,
    ))
}

/// Max-entry batch-mean standard error of the Gram estimate.
fn pilot_gram_se(dict: &Dictionary, sample: &crate::sim::SpikeSample) -> Result<f64> {
    let n = dict.len();
    let batches = 20usize;
    let t = sample.horizon();
    let batch_len = t / batches as i64;
    let mut batch_sums = vec![0.0f64; batches * n * n];
    dict.for_each_window(sample, |tt, phi| {
        let b = (((tt - 1) / batch_len) as usize).min(batches - 1);
        let dst = &mut batch_sums[b * n * n..(b + 1) * n * n];
        for i in 0..n {
            if phi[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                dst[i * n + j] += phi[i] * phi[j];
            }
        }
    })?;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut means = vec![0.0f64; batches];
            let mut grand = 0.0;
            for (b, m) in means.iter_mut().enumerate() {
                let len = if b == batches - 1 {
                    t - batch_len * (batches as i64 - 1)
                } else {
                    batch_len
                };
                *m = batch_sums[b * n * n + i * n + j] / len as f64;
                grand += *m / batches as f64;
            }
            let var: f64 = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
                / (batches as f64 - 1.0);
            worst = worst.max((var / batches as f64).sqrt());
        }
    }
    Ok(worst)
}
