//! Empirical Gram systems and their certificates.
//!
//! [`assemble`] builds the second-moment matrix `G` and correlation vector
//! `b` of a dictionary against a target spike train; [`compensator`]
//! replaces the spikes by their closed-form conditional probabilities,
//! which turns `b - b_bar` into a martingale whose fluctuations the
//! estimator thresholds. The rest of the module evaluates the explicit
//! lower bounds and deviation levels for the eigenvalue checks: reference
//! Gram matrices under fair-coin bits, the change-of-measure constants
//! `kappa'`, invertibility and restricted-eigenvalue certificates, and the
//! explicit matrix concentration level.

use crate::decomp::Neuron;
use crate::dict::{DictFamily, Dictionary};
use crate::linalg::SymMat;
use crate::models::TransitionModel;
use crate::sim::{block_partition, BlockPartition, SpikeSample};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Empirical Gram system for one target neuron.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramSystem {
    pub g: SymMat,
    pub b: Vec<f64>,
    pub b_bar: Option<Vec<f64>>,
    pub target: Neuron,
    pub t_horizon: i64,
    pub dict_fingerprint: String,
}

/// `G = (1/T) sum of phi phi^T` and `b = (1/T) sum of phi X_{i,t}` over
/// `t = 1..=T`.
pub fn assemble(dict: &Dictionary, sample: &SpikeSample, target: Neuron) -> Result<GramSystem> {
    let target_col = sample
        .neuron_index(target)
        .ok_or_else(|| Error::Contract(format!("target neuron {target} not observed")))?;
    let n = dict.len();
    let mut g = vec![0.0f64; n * n];
    let mut b = vec![0.0f64; n];
    let mut nz: Vec<usize> = Vec::with_capacity(n);
    dict.for_each_window(sample, |t, phi| {
        nz.clear();
        nz.extend(phi.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| k));
        for &i in &nz {
            let pi = phi[i];
            let row = &mut g[i * n..(i + 1) * n];
            for &j in &nz {
                if j >= i {
                    row[j] += pi * phi[j];
                }
            }
        }
        let spike = sample.bit(target_col, t);
        if spike != 0 {
            for &i in &nz {
                b[i] += phi[i];
            }
        }
    })?;
    let t = sample.horizon() as f64;
    for i in 0..n {
        for j in i..n {
            let v = g[i * n + j] / t;
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
        b[i] /= t;
    }
    Ok(GramSystem {
        g: SymMat::from_rows(n, g)?,
        b,
        b_bar: None,
        target,
        t_horizon: sample.horizon(),
        dict_fingerprint: dict.fingerprint(),
    })
}

/// Compensator `b_bar = (1/T) sum of phi p_i(past)` with `p_i` evaluated
/// by the model's closed form on the simulated past.
pub fn compensator(
    dict: &Dictionary,
    sample: &SpikeSample,
    model: &TransitionModel,
    target: Neuron,
) -> Result<Vec<f64>> {
    if model.max_lag() > sample.past_depth() {
        return Err(Error::Contract(format!(
            "model reads lag {} but the sample retains only {}",
            model.max_lag(),
            sample.past_depth()
        )));
    }
    let n = dict.len();
    let mut b_bar = vec![0.0f64; n];
    let mut failure: Option<Error> = None;
    dict.for_each_window(sample, |t, phi| {
        if failure.is_some() {
            return;
        }
        match model.prob(target, |j, s| sample.bit_at(j, t + s)) {
            Ok(p) => {
                for (slot, v) in b_bar.iter_mut().zip(phi) {
                    *slot += v * p;
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let t = sample.horizon() as f64;
    for slot in &mut b_bar {
        *slot /= t;
    }
    Ok(b_bar)
}

// ---------------------------------------------------------------------------
// Reference Gram matrices under i.i.d. fair-coin bits
// ---------------------------------------------------------------------------

/// Closed-form expectation of `G` under i.i.d. Bernoulli(1/2) bits.
#[derive(Debug, Clone)]
pub struct ExpectedGram {
    pub matrix: SymMat,
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
}

/// The fair-coin expectation of the Gram matrix, entry by entry.
///
/// Short memory: `p = 1 - 2^-m` on the diagonal and `p^2` off it.
/// Counting families: `eta/4 + eta^2/4` on the diagonal, `eta^2/4` off it,
/// and (with the constant) a border row of `eta/2`.
pub fn expected_gram_bernoulli(dict: &Dictionary) -> Result<ExpectedGram> {
    let n = dict.len();
    let mut m = SymMat::zeros(n);
    let base = usize::from(dict.has_spontaneous());
    match dict.family() {
        DictFamily::ShortMemory => {
            if dict.has_spontaneous() {
                // The reference closed forms cover the four published
                // families; the indicator dictionary has no constant
                // variant.
                return Err(Error::Unsupported(
                    "no fair-coin closed form for short_memory with a constant".into(),
                ));
            }
            let p = 1.0 - pow_half(dict.past_depth());
            for i in 0..n {
                for j in 0..n {
                    m.set(i, j, if i == j { p } else { p * p });
                }
            }
        }
        DictFamily::Cumulative | DictFamily::Hawkes => {
            let eta = dict.eta() as f64;
            let alpha = eta / 4.0 + eta * eta / 4.0;
            let beta = eta * eta / 4.0;
            for i in base..n {
                for j in base..n {
                    m.set(i, j, if i == j { alpha } else { beta });
                }
            }
            if dict.has_spontaneous() {
                m.set(0, 0, 1.0);
                for j in 1..n {
                    m.set(0, j, eta / 2.0);
                }
            }
        }
    }
    let eigenvalues = m.eigenvalues();
    let lambda_min = eigenvalues[0];
    Ok(ExpectedGram {
        matrix: m,
        eigenvalues,
        lambda_min,
    })
}

#[allow(non_snake_case)]
fn pow_half(m: usize) -> f64 {
    0.5f64.powi(m as i32)
}

/// Closed-form eigenvalues of the short-memory reference matrix:
/// `(p - p^2)` with multiplicity `|F| - 1` and `p + (|F| - 1) p^2`.
pub fn short_memory_eigenpair(m: usize, f_size: usize) -> (f64, f64) {
    let p = 1.0 - pow_half(m);
    (p - p * p, p + (f_size as f64 - 1.0) * p * p)
}

/// Change-of-measure lower bound `kappa'` on the smallest eigenvalue of
/// the true `E(G)`:
///
/// * short memory: `(2 mu)^(m |F|) 2^-m (1 - 2^-m)`
/// * counting, no constant: `(eta / 4) (2 mu)^(eta K |F|)`
/// * counting with constant:
///   `(2 mu)^(eta K |F|) min(1 / (1 + 2 eta K |F|), eta / 8)`
pub fn kappa_prime(dict: &Dictionary, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= 0.5) {
        return Err(Error::Contract(format!(
            "kappa' needs mu in (0, 1/2], got {mu}"
        )));
    }
    let f_size = dict.neurons().len() as f64;
    let change = |exponent: f64| (2.0 * mu).powf(exponent);
    match (dict.family(), dict.has_spontaneous()) {
        (DictFamily::ShortMemory, false) => {
            let m = dict.past_depth();
            let half = pow_half(m);
            Ok(change(m as f64 * f_size) * half * (1.0 - half))
        }
        (DictFamily::ShortMemory, true) => Err(Error::Unsupported(
            "no kappa' for short_memory with a constant".into(),
        )),
        (DictFamily::Cumulative | DictFamily::Hawkes, false) => {
            let eta = dict.eta() as f64;
            let exponent = eta * dict.bins() as f64 * f_size;
            Ok(eta / 4.0 * change(exponent))
        }
        (DictFamily::Cumulative | DictFamily::Hawkes, true) => {
            let eta = dict.eta() as f64;
            let volume = eta * dict.bins() as f64 * f_size;
            Ok(change(volume) * (1.0 / (1.0 + 2.0 * volume)).min(eta / 8.0))
        }
    }
}

// ---------------------------------------------------------------------------
// Eigenvalue certificates
// ---------------------------------------------------------------------------

/// Smallest-eigenvalue check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InvCheck {
    pub lambda_min: f64,
}

impl InvCheck {
    pub fn satisfies(&self, kappa: f64) -> bool {
        self.lambda_min >= kappa
    }
}

/// Smallest eigenvalue of `G` (symmetry is enforced by [`SymMat`]).
pub fn inv_check(g: &SymMat) -> InvCheck {
    InvCheck {
        lambda_min: g.lambda_min(),
    }
}

/// Result of [`re_check`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReCheck {
    /// Certified lower bound on the restricted eigenvalue constant.
    pub lower: f64,
    /// Best value found by projected descent (an upper estimate of the
    /// true constant); `None` in certified mode.
    pub upper: Option<f64>,
    /// Whether the lower bound is attained by a feasible minimizer.
    pub tight: bool,
}

/// Mode of [`re_check`].
#[derive(Debug, Clone, Copy)]
pub enum ReMode<'a> {
    /// Support enumeration with per-support relaxation certificates and
    /// multi-start projected descent. Test oracle; capped at `|Phi| <= 14`.
    Exact,
    /// Entrywise-deviation route: `mu - mu^2 - ((1 - 2 mu) + R)(1 + c) s`
    /// with `R = max |G - reference|` entrywise.
    Certified { mu: f64, reference: &'a SymMat },
}

/// Cap on the exact mode (support enumeration cost).
pub const RE_EXACT_MAX_DIM: usize = 14;

/// Lower bound on the restricted eigenvalue constant
/// `min a^T G a / ||a_J||^2` over supports `|J| <= s` and the cone
/// `|a_{J^c}|_1 <= c |a_J|_1`.
pub fn re_check(g: &SymMat, c: f64, s: usize, mode: ReMode<'_>) -> Result<ReCheck> {
    if s == 0 {
        return Err(Error::Contract("restricted eigenvalue needs s >= 1".into()));
    }
    match mode {
        ReMode::Certified { mu, reference } => {
            if reference.n() != g.n() {
                return Err(Error::Contract("reference Gram has a different size".into()));
            }
            let r = g.max_abs_diff(reference);
            Ok(ReCheck {
                lower: re_kappa_hawkes(mu, c, s, r),
                upper: None,
                tight: false,
            })
        }
        ReMode::Exact => {
            let n = g.n();
            if n > RE_EXACT_MAX_DIM {
                return Err(Error::Unsupported(format!(
                    "exact restricted-eigenvalue check capped at |Phi| = {RE_EXACT_MAX_DIM} \
                     (got {n}); use certified mode"
                )));
            }
            let s = s.min(n);
            // The per-support relaxation is only sound on (dust-level)
            // positive semidefinite matrices, which second-moment
            // matrices are.
            let scale = g.rows().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let raw_lambda_min = g.lambda_min();
            if raw_lambda_min < -1e-8 * scale.max(1.0) {
                return Err(Error::NotPsd(raw_lambda_min));
            }
            let lambda_min = raw_lambda_min.max(0.0);
            let mut lower = f64::INFINITY;
            let mut upper = f64::INFINITY;
            let mut tight_everywhere = true;
            for j_idx in supports(n, s) {
                let (bound_j, upper_j, tight_j) = re_support_bound(g, &j_idx, c, lambda_min);
                lower = lower.min(bound_j);
                upper = upper.min(upper_j);
                tight_everywhere &= tight_j;
            }
            Ok(ReCheck {
                lower,
                upper: Some(upper),
                tight: tight_everywhere,
            })
        }
    }
}

/// All supports of size exactly `s` (smaller supports are dominated: the
/// cone grows and the denominator shrinks as the support grows).
fn supports(n: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(s);
    fn rec(start: usize, n: usize, s: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == s {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, s, current, out);
            current.pop();
        }
    }
    rec(0, n, s, &mut current, &mut out);
    out
}

/// Per-support certificate and descent estimate.
///
/// Dropping the cone constraint (Lagrange multiplier zero) leaves
/// `min a^T G a` over `||a_J|| = 1` with `a_{J^c}` free, whose value is
/// the smallest eigenvalue of the Schur complement on `J`; combined with
/// the global floor `lambda_min(G)` this certifies the bound from below.
/// When the unconstrained minimizer already satisfies the cone constraint
/// the certificate is the exact constant for this support.
#[allow(clippy::needless_range_loop)]
fn re_support_bound(g: &SymMat, j_idx: &[usize], c: f64, lambda_min: f64) -> (f64, f64, bool) {
    let n = g.n();
    let schur = g.schur_complement(j_idx, 1e-12);
    let eig = schur.eigh();
    let schur_min = eig.values[0];
    let bound = schur_min.max(lambda_min);

    // Reconstruct the unconstrained minimizer: a_J is the bottom
    // eigenvector, a_K = -G_KK^+ G_KJ a_J.
    let a_j = eig.vector(0);
    let k_idx: Vec<usize> = (0..n).filter(|i| !j_idx.contains(i)).collect();
    let mut a = vec![0.0; n];
    for (pos, &j) in j_idx.iter().enumerate() {
        a[j] = a_j[pos];
    }
    if !k_idx.is_empty() {
        let kk = g.submatrix(&k_idx);
        let kk_eig = kk.eigh();
        let scale = kk_eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cut = 1e-12 * scale.max(1e-300);
        // rhs = G_KJ a_J
        let rhs: Vec<f64> = k_idx
            .iter()
            .map(|&k| j_idx.iter().map(|&j| g.get(k, j) * a[j]).sum())
            .collect();
        let ne = k_idx.len();
        let mut a_k = vec![0.0; ne];
        for e in 0..ne {
            let lam = kk_eig.values[e];
            if lam.abs() <= cut {
                continue;
            }
            let proj: f64 = (0..ne).map(|r| rhs[r] * kk_eig.vectors[r * ne + e]).sum();
            for r in 0..ne {
                a_k[r] -= proj / lam * kk_eig.vectors[r * ne + e];
            }
        }
        for (pos, &k) in k_idx.iter().enumerate() {
            a[k] = a_k[pos];
        }
    }
    let tight = cone_feasible(&a, j_idx, c, 1e-9);
    let mut upper = if tight {
        ratio(g, &a, j_idx)
    } else {
        descend(g, project(a, j_idx, c), j_idx, c)
    };
    // Basis starts catch minima the Schur minimizer misses.
    for &j in j_idx {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        upper = upper.min(descend(g, e, j_idx, c));
    }
    (bound, upper.max(bound), tight)
}

fn cone_feasible(a: &[f64], j_idx: &[usize], c: f64, tol: f64) -> bool {
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (i, v) in a.iter().enumerate() {
        if j_idx.contains(&i) {
            inside += v.abs();
        } else {
            outside += v.abs();
        }
    }
    outside <= c * inside + tol
}

fn ratio(g: &SymMat, a: &[f64], j_idx: &[usize]) -> f64 {
    let denom: f64 = j_idx.iter().map(|&j| a[j] * a[j]).sum();
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    g.quad_form(a) / denom
}

/// Normalize `||a_J|| = 1` and shrink the off-support block onto the cone.
fn project(mut a: Vec<f64>, j_idx: &[usize], c: f64) -> Vec<f64> {
    let norm: f64 = j_idx.iter().map(|&j| a[j] * a[j]).sum::<f64>().sqrt();
    if norm <= 1e-300 {
        for (i, v) in a.iter_mut().enumerate() {
            *v = if j_idx.contains(&i) {
                1.0 / (j_idx.len() as f64).sqrt()
            } else {
                0.0
            };
        }
        return a;
    }
    for v in a.iter_mut() {
        *v /= norm;
    }
    let inside: f64 = j_idx.iter().map(|&j| a[j].abs()).sum();
    let outside: f64 = (0..a.len())
        .filter(|i| !j_idx.contains(i))
        .map(|i| a[i].abs())
        .sum();
    if outside > c * inside && outside > 0.0 {
        let shrink = c * inside / outside;
        for (i, v) in a.iter_mut().enumerate() {
            if !j_idx.contains(&i) {
                *v *= shrink;
            }
        }
    }
    a
}

/// Projected gradient descent on `a^T G a` over the cone section.
fn descend(g: &SymMat, start: Vec<f64>, j_idx: &[usize], c: f64) -> f64 {
    let lam_max = g
        .eigenvalues()
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(1e-12);
    let step = 1.0 / (2.0 * lam_max);
    let mut a = project(start, j_idx, c);
    let mut best = ratio(g, &a, j_idx);
    for _ in 0..400 {
        let grad = g.mul_vec(&a);
        for (v, d) in a.iter_mut().zip(&grad) {
            *v -= step * 2.0 * d;
        }
        a = project(std::mem::take(&mut a), j_idx, c);
        let val = ratio(g, &a, j_idx);
        if val < best - 1e-15 {
            best = val;
        }
    }
    best
}

/// The explicit restricted-eigenvalue constant of the bit dictionary:
/// `kappa = mu - mu^2 - ((1 - 2 mu) + R_T)(1 + c) s`. May be negative;
/// the caller interprets.
pub fn re_kappa_hawkes(mu: f64, c: f64, s: usize, r_t: f64) -> f64 {
    mu - mu * mu - ((1.0 - 2.0 * mu) + r_t) * (1.0 + c) * s as f64
}

/// Proof-explicit deviation term `R_T` paired with [`re_kappa_hawkes`]:
/// the scalar concentration level at `x = ln(4 |Phi|^2 / delta)` with unit
/// function bound,
/// `sqrt(k B^2 x / (2 T^2)) + sqrt((k+1) B^2 x / (2 T^2))`.
pub fn re_hawkes_rt_proof_explicit(
    m: usize,
    t_horizon: i64,
    f_size: usize,
    theta: f64,
    dict_size: usize,
    delta: f64,
) -> Result<f64> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::Contract(format!("delta must be in (0, 1), got {delta}")));
    }
    let bp = block_partition(t_horizon, m, theta, f_size)?;
    let x = (4.0 * (dict_size as f64).powi(2) / delta).ln();
    let t = t_horizon as f64;
    let b = bp.grid as f64;
    let k = bp.k as f64;
    Ok((k * b * b * x / (2.0 * t * t)).sqrt() + ((k + 1.0) * b * b * x / (2.0 * t * t)).sqrt())
}

/// Explicit spectral-norm deviation level for the centered Gram matrix,
/// with its tail mass.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationBound {
    pub level: f64,
    pub tail: f64,
    pub sigma: f64,
    pub block: BlockPartition,
}

/// Matrix concentration level
/// `sqrt(8 k sigma^2 x) + sqrt(8 (k+1) sigma^2 x)` with
/// `sigma = 2 |Phi| B M^2 / T`, and tail `p_bad + 4 |Phi| exp(-x)`.
/// `psi_bound` is the Laplace bound of the model (see
/// [`crate::sim::psi_bound`]).
#[allow(clippy::too_many_arguments)]
pub fn matrix_deviation_bound(
    f_size: usize,
    m: usize,
    t_horizon: i64,
    theta: f64,
    func_bound: f64,
    dict_size: usize,
    x: f64,
    psi_bound: f64,
) -> Result<DeviationBound> {
    if x < 0.0 {
        return Err(Error::Contract(format!("x must be nonnegative, got {x}")));
    }
    let bp = block_partition(t_horizon, m, theta, f_size)?;
    let sigma =
        2.0 * dict_size as f64 * bp.grid as f64 * func_bound * func_bound / t_horizon as f64;
    let level = (8.0 * bp.k as f64 * sigma * sigma * x).sqrt()
        + (8.0 * (bp.k + 1) as f64 * sigma * sigma * x).sqrt();
    let tail = bp.p_bad(psi_bound) + 4.0 * dict_size as f64 * (-x).exp();
    Ok(DeviationBound {
        level,
        tail,
        sigma,
        block: bp,
    })
}
