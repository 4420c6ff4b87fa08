//! l1-penalized least squares on a Gram system.
//!
//! The objective is `-2 a^T b + a^T G a + gamma d |a|_1`; coordinate
//! updates have the exact soft-threshold form, so cyclic coordinate
//! descent drives the objective monotonically to the minimum and the KKT
//! residual certifies the result.

use crate::decomp::Neuron;
use crate::dict::Dictionary;
use crate::gram::GramSystem;
use crate::models::TransitionModel;
use crate::sim::SpikeSample;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Solver configuration. `gamma >= 2` is the theory's convention for the
/// oracle inequality; the solver itself accepts any positive value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LassoConfig {
    pub gamma: f64,
    pub d: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl LassoConfig {
    pub fn new(gamma: f64, d: f64) -> Self {
        LassoConfig {
            gamma,
            d,
            max_iter: 100_000,
            tol: 1e-10,
        }
    }
}

/// Solution of the penalized problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    /// Indices of the non-zero coefficients.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Coordinates with `G_{phi,phi} = 0` (feature never active in the
    /// sample), pinned to zero.
    pub degenerate: Vec<usize>,
}

/// Fluctuation threshold
/// `d_delta = sqrt(sup_norm^2 (ln |Phi| + ln(2 / delta)) / (2 T))`.
pub fn d_delta(sup_norm: f64, dict_size: usize, delta: f64, t_horizon: i64) -> f64 {
    debug_assert!(delta > 0.0 && delta < 1.0 && t_horizon >= 1);
    (sup_norm * sup_norm * ((dict_size as f64).ln() + (2.0 / delta).ln())
        / (2.0 * t_horizon as f64))
        .sqrt()
}

/// `-2 a^T b + a^T G a + gamma d |a|_1`.
pub fn objective(gram: &GramSystem, gamma: f64, d: f64, a: &[f64]) -> f64 {
    let quad = gram.g.quad_form(a);
    let linear: f64 = a.iter().zip(&gram.b).map(|(x, b)| x * b).sum();
    let l1: f64 = a.iter().map(|x| x.abs()).sum();
    quad - 2.0 * linear + gamma * d * l1
}

/// Max-norm violation of the stationarity condition
/// `2 G a - 2 b + gamma d w = 0`, `w` a subgradient of the l1 norm:
/// active coordinates contribute `|2 (G a - b) + gamma d sign(a)|`, zero
/// coordinates the excess of `|2 (G a - b)|` over `gamma d`.
pub fn kkt_residual(gram: &GramSystem, gamma: f64, d: f64, a: &[f64]) -> f64 {
    let ga = gram.g.mul_vec(a);
    let lam = gamma * d;
    let mut worst = 0.0f64;
    for (k, &ak) in a.iter().enumerate() {
        let grad = 2.0 * (ga[k] - gram.b[k]);
        let r = if ak != 0.0 {
            (grad + lam * ak.signum()).abs()
        } else {
            (grad.abs() - lam).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

#[inline]
fn soft_threshold(v: f64, lam: f64) -> f64 {
    if v > lam {
        v - lam
    } else if v < -lam {
        v + lam
    } else {
        0.0
    }
}

/// Cyclic coordinate descent with exact per-coordinate minimizers,
/// starting from zero. Coordinate order is the dictionary order. Errors
/// when `G` fails the positive-semidefiniteness gate.
pub fn solve(gram: &GramSystem, config: &LassoConfig) -> Result<LassoSolution> {
    solve_from(gram, config, None)
}

/// [`solve`] warm-started from a previous coefficient vector.
pub fn solve_from(
    gram: &GramSystem,
    config: &LassoConfig,
    warm_start: Option<&[f64]>,
) -> Result<LassoSolution> {
    let n = gram.b.len();
    if gram.g.n() != n {
        return Err(Error::Contract("G and b sizes disagree".into()));
    }
    if config.d < 0.0 || config.gamma <= 0.0 {
        return Err(Error::Contract(format!(
            "need gamma > 0 and d >= 0, got gamma = {}, d = {}",
            config.gamma, config.d
        )));
    }
    let scale = gram
        .g
        .rows()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let lambda_min = gram.g.lambda_min();
    if lambda_min < -1e-8 * scale.max(1.0) {
        return Err(Error::NotPsd(lambda_min));
    }

    let lam = config.gamma * config.d / 2.0;
    let mut a = match warm_start {
        Some(start) => {
            if start.len() != n {
                return Err(Error::Contract("warm start has the wrong length".into()));
            }
            start.to_vec()
        }
        None => vec![0.0f64; n],
    };
    let mut ga = gram.g.mul_vec(&a);
    let mut degenerate: Vec<usize> = (0..n).filter(|&k| gram.g.get(k, k) <= 0.0).collect();
    degenerate.dedup();

    let mut sweeps = 0usize;
    let mut prev_objective = objective(gram, config.gamma, config.d, &a);
    while sweeps < config.max_iter {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for k in 0..n {
            let diag = gram.g.get(k, k);
            if diag <= 0.0 {
                // Objective constant in this coordinate up to the penalty:
                // zero is optimal.
                continue;
            }
            // Residual correlation with coordinate k removed.
            let r = gram.b[k] - (ga[k] - diag * a[k]);
            let new = soft_threshold(r, lam) / diag;
            let delta = new - a[k];
            if delta != 0.0 {
                for (slot, j) in ga.iter_mut().zip(0..n) {
                    *slot += gram.g.get(j, k) * delta;
                }
                a[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let obj = objective(gram, config.gamma, config.d, &a);
        debug_assert!(
            obj <= prev_objective + 1e-9 * (1.0 + prev_objective.abs()),
            "objective increased: {prev_objective} -> {obj}"
        );
        prev_objective = obj;
        if max_delta < config.tol {
            break;
        }
    }
    let kkt = kkt_residual(gram, config.gamma, config.d, &a);
    let converged = sweeps < config.max_iter || kkt <= 10.0 * config.tol;
    Ok(LassoSolution {
        active_set: (0..n).filter(|&k| a[k] != 0.0).collect(),
        objective: prev_objective,
        kkt_residual: kkt,
        iterations: sweeps,
        converged,
        degenerate,
        coefficients: a,
    })
}

/// Reference against which the empirical distance of `f_a` is measured.
#[derive(Debug, Clone, Copy)]
pub enum NormRef<'a> {
    /// The model's closed-form transition probability.
    Model(&'a TransitionModel),
    /// Another coefficient vector on the same dictionary.
    Coefficients(&'a [f64]),
}

/// Empirical squared distance
/// `(1/T) sum over t of (f_a(window_t) - reference_t)^2`.
pub fn empirical_norm_sq(
    dict: &Dictionary,
    sample: &SpikeSample,
    a: &[f64],
    reference: NormRef<'_>,
    target: Neuron,
) -> Result<f64> {
    if a.len() != dict.len() {
        return Err(Error::Contract(format!(
            "coefficient vector of length {} for dictionary of size {}",
            a.len(),
            dict.len()
        )));
    }
    if let NormRef::Model(model) = reference {
        if model.max_lag() > sample.past_depth() {
            return Err(Error::Contract(format!(
                "model reads lag {} but the sample retains only {}",
                model.max_lag(),
                sample.past_depth()
            )));
        }
    }
    if let NormRef::Coefficients(r) = reference {
        if r.len() != dict.len() {
            return Err(Error::Contract("reference coefficient length mismatch".into()));
        }
    }
    let mut acc = 0.0f64;
    let mut failure: Option<Error> = None;
    dict.for_each_window(sample, |t, phi| {
        if failure.is_some() {
            return;
        }
        let fa: f64 = phi.iter().zip(a).map(|(p, c)| p * c).sum();
        let target_value = match reference {
            NormRef::Coefficients(r) => phi.iter().zip(r).map(|(p, c)| p * c).sum(),
            NormRef::Model(model) => {
                match model.prob(target, |j, s| sample.bit_at(j, t + s)) {
                    Ok(p) => p,
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                }
            }
        };
        let diff = fa - target_value;
        acc += diff * diff;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(acc / sample.horizon() as f64)
}

/// Right side of the oracle inequality at one candidate:
/// `||f_a - p_i||_T^2 + |S(a)| d^2 (gamma + 2)^2 / (4 kappa)`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_bound(
    dict: &Dictionary,
    sample: &SpikeSample,
    model: &TransitionModel,
    target: Neuron,
    candidate: &[f64],
    kappa: f64,
    gamma: f64,
    d: f64,
) -> Result<f64> {
    if kappa <= 0.0 {
        return Err(Error::Contract(format!("kappa must be positive, got {kappa}")));
    }
    let approx = empirical_norm_sq(dict, sample, candidate, NormRef::Model(model), target)?;
    let support = candidate.iter().filter(|c| **c != 0.0).count() as f64;
    Ok(approx + support * d * d * (gamma + 2.0) * (gamma + 2.0) / (4.0 * kappa))
}

/// Coordinate-wise clamp to `[0, 1]`.
pub fn clip_predictions(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dict::hawkes_dict;
    use crate::linalg::SymMat;
    use crate::sim::synthetic_bernoulli;

    fn gram_from(g: SymMat, b: Vec<f64>) -> GramSystem {
        GramSystem {
            g,
            b,
            b_bar: None,
            target: Neuron(0),
            t_horizon: 1,
            dict_fingerprint: "test".into(),
        }
    }

    #[test]
    fn d_delta_example() {
        let v = d_delta(1.0, 10, 0.05, 1000);
        assert!((v - 0.0547332).abs() < 1e-6, "{v}");
        // Quadrupling T halves the threshold.
        let v4 = d_delta(1.0, 10, 0.05, 4000);
        assert!((v4 - v / 2.0).abs() < 1e-12);
        // delta -> 1, |Phi| = 1: sqrt(ln 2 / (2 T)).
        let v1 = d_delta(1.0, 1, 1.0 - 1e-12, 50);
        assert!((v1 - (std::f64::consts::LN_2 / 100.0).sqrt()).abs() < 1e-7, "{v1}");
    }

    #[test]
    fn identity_gram_soft_threshold() {
        let b = vec![0.8, -0.3, 0.05, 0.0];
        let gram = gram_from(SymMat::identity(4), b.clone());
        let config = LassoConfig::new(2.0, 0.2); // lam = gamma d / 2 = 0.2
        let sol = solve(&gram, &config).unwrap();
        for (k, &bk) in b.iter().enumerate() {
            let expect = bk.signum() * (bk.abs() - 0.2).max(0.0);
            assert!(
                (sol.coefficients[k] - expect).abs() < 1e-12,
                "coefficient {k}"
            );
        }
        assert_eq!(sol.active_set, vec![0, 1]);
        assert!(sol.kkt_residual < 1e-12);
        assert!(sol.converged);
        // Tie at the threshold boundary resolves to zero.
        let gram = gram_from(SymMat::identity(1), vec![0.2]);
        let sol = solve(&gram, &config).unwrap();
        assert_eq!(sol.coefficients[0], 0.0);
    }

    #[test]
    fn unpenalized_matches_linear_solve() {
        let g = SymMat::from_rows(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let b = vec![0.5, -0.4];
        let gram = gram_from(g, b);
        let sol = solve(&gram, &LassoConfig::new(2.0, 0.0)).unwrap();
        // a = G^{-1} b for G = [[2, .3], [.3, 1]].
        let det = 2.0 * 1.0 - 0.09;
        let expect = [
            (1.0 * 0.5 - 0.3 * -0.4) / det,
            (-0.3 * 0.5 + 2.0 * -0.4) / det,
        ];
        for (got, want) in sol.coefficients.iter().zip(expect) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn penalty_depends_only_on_product() {
        let g = SymMat::from_rows(3, vec![1.0, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 1.0]).unwrap();
        let b = vec![0.6, -0.2, 0.35];
        let gram = gram_from(g, b);
        let s1 = solve(&gram, &LassoConfig::new(2.0, 0.1)).unwrap();
        let s2 = solve(&gram, &LassoConfig::new(4.0, 0.05)).unwrap();
        for k in 0..3 {
            assert!((s1.coefficients[k] - s2.coefficients[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let g = SymMat::from_rows(3, vec![1.0, 0.3, 0.1, 0.3, 1.2, 0.0, 0.1, 0.0, 0.8]).unwrap();
        let gram = gram_from(g, vec![0.5, -0.6, 0.2]);
        let config = LassoConfig::new(2.0, 0.08);
        let cold = solve(&gram, &config).unwrap();
        let warm = solve_from(&gram, &config, Some(&cold.coefficients)).unwrap();
        // Restarting at a solution converges in one sweep and stays within
        // the stopping tolerance of it.
        assert_eq!(warm.iterations, 1);
        for (x, y) in cold.coefficients.iter().zip(&warm.coefficients) {
            assert!((x - y).abs() < 10.0 * config.tol);
        }
    }

    #[test]
    fn degenerate_coordinate_pinned() {
        let mut g = SymMat::identity(3);
        g.set(1, 1, 0.0);
        let gram = gram_from(g, vec![0.5, 0.7, -0.5]);
        let sol = solve(&gram, &LassoConfig::new(2.0, 0.1)).unwrap();
        assert_eq!(sol.degenerate, vec![1]);
        assert_eq!(sol.coefficients[1], 0.0);
    }

    #[test]
    fn non_psd_rejected() {
        let g = SymMat::from_rows(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let gram = gram_from(g, vec![0.1, 0.1]);
        assert!(matches!(
            solve(&gram, &LassoConfig::new(2.0, 0.1)),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn kkt_zero_vector_optimal() {
        let gram = gram_from(SymMat::identity(2), vec![0.05, -0.08]);
        // |2 b| <= gamma d everywhere: zero is optimal.
        assert_eq!(kkt_residual(&gram, 2.0, 0.1, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn kkt_perturbation_first_order() {
        let g = SymMat::from_rows(2, vec![1.5, 0.2, 0.2, 0.8]).unwrap();
        let gram = gram_from(g, vec![0.9, 0.4]);
        let sol = solve(&gram, &LassoConfig::new(2.0, 0.05)).unwrap();
        let k = sol.active_set[0];
        let eps = 1e-6;
        let mut perturbed = sol.coefficients.clone();
        perturbed[k] += eps;
        let r = kkt_residual(&gram, 2.0, 0.05, &perturbed);
        let expect = 2.0 * gram.g.get(k, k) * eps;
        assert!(
            (r - expect).abs() < 1e-7,
            "residual {r} vs first-order {expect}"
        );
    }

    #[test]
    fn empirical_norm_reference_coefficients() {
        let f = vec![Neuron(1), Neuron(2)];
        let sample = synthetic_bernoulli(&f, 3, 100, 0.5, 17).unwrap();
        let d = hawkes_dict(&f, 3, true).unwrap();
        let a = vec![0.25, 0.1, 0.0, -0.05, 0.0, 0.02, 0.0];
        // Same vector: distance zero.
        let z = empirical_norm_sq(&d, &sample, &a, NormRef::Coefficients(&a), Neuron(1)).unwrap();
        assert_eq!(z, 0.0);
        // Naive per-t oracle.
        let other = vec![0.3, 0.0, 0.05, 0.0, 0.0, 0.0, -0.1];
        let got =
            empirical_norm_sq(&d, &sample, &a, NormRef::Coefficients(&other), Neuron(1)).unwrap();
        let mut acc = 0.0;
        for t in 1..=100 {
            let phi = d.evaluate(&sample, t).unwrap();
            let fa: f64 = phi.iter().zip(&a).map(|(p, c)| p * c).sum();
            let fr: f64 = phi.iter().zip(&other).map(|(p, c)| p * c).sum();
            acc += (fa - fr) * (fa - fr) / 100.0;
        }
        assert!((got - acc).abs() < 1e-12);
    }

    #[test]
    fn norm_against_constant_model_exact_representation() {
        let f = vec![Neuron(1)];
        let sample = synthetic_bernoulli(&f, 2, 80, 0.5, 4).unwrap();
        let d = hawkes_dict(&f, 2, true).unwrap();
        let spec = crate::models::HawkesSpec::new(vec![(Neuron(1), 0.4)], vec![]).unwrap();
        let model = TransitionModel::Hawkes(spec);
        // Spontaneous-only coefficient equal to nu represents p exactly.
        let a = vec![0.4, 0.0, 0.0];
        let z = empirical_norm_sq(&d, &sample, &a, NormRef::Model(&model), Neuron(1)).unwrap();
        assert!(z < 1e-28);
    }

    #[test]
    fn oracle_bound_zero_candidate() {
        let f = vec![Neuron(1)];
        let sample = synthetic_bernoulli(&f, 2, 50, 0.5, 8).unwrap();
        let d = hawkes_dict(&f, 2, true).unwrap();
        let spec = crate::models::HawkesSpec::new(vec![(Neuron(1), 0.4)], vec![]).unwrap();
        let model = TransitionModel::Hawkes(spec);
        let zero = vec![0.0; 3];
        let bound =
            oracle_bound(&d, &sample, &model, Neuron(1), &zero, 0.5, 2.0, 0.1).unwrap();
        // S(0) is empty: pure approximation term ||p||_T^2 = nu^2.
        assert!((bound - 0.16).abs() < 1e-12);
        // Monotone in |S| for fixed approximation error: adding a zero-effect
        // active coordinate only adds the penalty term.
        let candidate = vec![0.4, 0.0, 0.0];
        let b1 =
            oracle_bound(&d, &sample, &model, Neuron(1), &candidate, 0.5, 2.0, 0.1).unwrap();
        assert!((b1 - 0.1f64 * 0.1 * 16.0 / (4.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_predictions(&[1.2, -0.1, 0.5]), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn objective_nonincreasing_per_sweep() {
        // Random-ish PSD instance; the debug assertion in solve() enforces
        // monotonicity sweep by sweep.
        let raw = SymMat::from_rows(
            3,
            vec![1.2, 0.4, -0.1, 0.4, 0.9, 0.2, -0.1, 0.2, 1.5],
        )
        .unwrap();
        let gram = gram_from(raw, vec![0.3, -0.7, 0.2]);
        let sol = solve(&gram, &LassoConfig::new(3.0, 0.08)).unwrap();
        assert!(sol.kkt_residual <= 1e-9);
    }
}
