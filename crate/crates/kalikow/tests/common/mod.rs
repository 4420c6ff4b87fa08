//! Shared fixtures for the integration suites: the model zoo, chi-square
//! critical values, and an independent subgradient-descent solver used as
//! the Lasso oracle.

#![allow(dead_code)]

use kalikow::decomp::Neuron;
use kalikow::linalg::SymMat;
use kalikow::decomp::Kernel;
use kalikow::models::{
    gl_linear_model, hawkes_chain_model, hawkes_model, infinite_order_model, markov_model,
    GlLinearSpec, HawkesChainRule, HawkesSpec, Interaction, LagSequence, MarkovSpec,
    TransitionModel,
};
use kalikow::rng::SiteRng;
use kalikow::KalikowModel;

/// One zoo entry: the model plus the quantities its tests need.
pub struct ZooModel {
    pub name: &'static str,
    pub model: KalikowModel,
    /// sup mean neighborhood size (branching bound base).
    pub mean_size: f64,
    /// A rate with `phi(theta) < 0.9` and finite second moment.
    pub theta: f64,
    /// Randomness band, when the family guarantees one.
    pub mu: Option<f64>,
    pub transition: Option<TransitionModel>,
    /// A neuron with non-trivial incoming structure.
    pub probe: Neuron,
}

pub fn markov_zoo() -> ZooModel {
    ZooModel {
        name: "markov(0.3,0.6)",
        model: markov_model(0.3, 0.6).unwrap(),
        mean_size: 0.3,
        theta: 0.5,
        mu: Some(0.3),
        transition: Some(TransitionModel::Markov(MarkovSpec::new(0.3, 0.6).unwrap())),
        probe: Neuron(0),
    }
}

pub fn geometric_zoo() -> ZooModel {
    let weights = kalikow::models::geometric_range_weights(0.75, 1e-12).unwrap();
    let kernels: Vec<Kernel> = (1..weights.len())
        .map(|_| Kernel::Majority { hi: 0.7, lo: 0.3 })
        .collect();
    ZooModel {
        name: "infinite_order_geometric(0.75)",
        model: infinite_order_model(&weights, 0.5, kernels, 1e-10).unwrap(),
        mean_size: 1.0 / 3.0,
        theta: 0.2,
        mu: None,
        transition: None,
        probe: Neuron(0),
    }
}

pub fn poisson_zoo() -> ZooModel {
    let weights = kalikow::models::poisson_range_weights(0.5, 1e-12).unwrap();
    let kernels: Vec<Kernel> = (1..weights.len())
        .map(|_| Kernel::Majority { hi: 0.6, lo: 0.4 })
        .collect();
    ZooModel {
        name: "infinite_order_poisson(0.5)",
        model: infinite_order_model(&weights, 0.5, kernels, 1e-10).unwrap(),
        mean_size: 0.5,
        theta: 0.15,
        mu: None,
        transition: None,
        probe: Neuron(0),
    }
}

pub fn hawkes_spec_two_neurons() -> HawkesSpec {
    HawkesSpec::new(
        vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
        vec![
            Interaction {
                from: Neuron(1),
                to: Neuron(2),
                lag: 1,
                weight: 0.2,
            },
            Interaction {
                from: Neuron(2),
                to: Neuron(2),
                lag: 2,
                weight: -0.2,
            },
        ],
    )
    .unwrap()
}

pub fn hawkes_zoo() -> ZooModel {
    let spec = hawkes_spec_two_neurons();
    ZooModel {
        name: "hawkes_2n(sigma=0.4)",
        model: hawkes_model(&spec).unwrap(),
        mean_size: 0.4,
        theta: 0.25,
        mu: Some(0.3),
        transition: Some(TransitionModel::Hawkes(spec)),
        probe: Neuron(2),
    }
}

pub fn gl_zoo() -> ZooModel {
    let spec = GlLinearSpec::new(
        vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
        vec![(Neuron(1), Neuron(2), 0.25)],
        vec![
            (Neuron(1), LagSequence::Finite(vec![0.7, 0.3])),
            (Neuron(2), LagSequence::Finite(vec![1.0])),
        ],
    )
    .unwrap();
    ZooModel {
        name: "gl_linear_2n",
        model: gl_linear_model(&spec, None).unwrap(),
        mean_size: 0.25 * (2.0 * 0.7 + 3.0 * 0.3),
        theta: 0.1,
        mu: Some(0.25),
        transition: Some(TransitionModel::gl(spec, None)),
        probe: Neuron(2),
    }
}

pub fn hawkes_chain_zoo() -> ZooModel {
    let weights = vec![(-1i64, 1u32, 0.2f64), (1, 2, -0.1)];
    ZooModel {
        name: "hawkes_chain(infinite)",
        model: hawkes_chain_model(0.5, weights.clone()).unwrap(),
        mean_size: 0.3,
        theta: 0.25,
        mu: Some(0.3),
        transition: Some(TransitionModel::HawkesChain(
            HawkesChainRule::new(0.5, weights).unwrap(),
        )),
        probe: Neuron(0),
    }
}

pub fn gl_chain_zoo() -> ZooModel {
    let g = LagSequence::Finite(vec![0.6, 0.4]);
    let weights = vec![(-1i64, 0.2f64), (1, -0.1)];
    ZooModel {
        name: "gl_chain(infinite)",
        model: kalikow::models::gl_chain_model(0.5, weights.clone(), g.clone()).unwrap(),
        // Augmented sizes: lag l atom has l + 1 sites, total weight 0.3.
        mean_size: 0.3 * (2.0 * 0.6 + 3.0 * 0.4),
        theta: 0.1,
        mu: Some(0.2),
        transition: Some(TransitionModel::GlChain(
            kalikow::models::GlChainRule::new(0.5, weights, g).unwrap(),
        )),
        probe: Neuron(0),
    }
}

/// The whole zoo.
pub fn zoo() -> Vec<ZooModel> {
    vec![
        markov_zoo(),
        geometric_zoo(),
        poisson_zoo(),
        hawkes_zoo(),
        gl_zoo(),
        hawkes_chain_zoo(),
        gl_chain_zoo(),
    ]
}

/// 0.999 quantile of the chi-square distribution (significance 0.001).
pub fn chi2_crit_999(df: usize) -> f64 {
    const TABLE: [f64; 20] = [
        10.8276, 13.8155, 16.2662, 18.4668, 20.5150, 22.4577, 24.3219, 26.1245, 27.8772,
        29.5883, 31.2641, 32.9095, 34.5282, 36.1233, 37.6973, 39.2524, 40.7902, 42.3124,
        43.8202, 45.3147,
    ];
    TABLE[df - 1]
}

// ---------------------------------------------------------------------------
// Independent Lasso oracle: steepest descent along the minimum-norm
// subgradient with exact piecewise-quadratic line search.
// ---------------------------------------------------------------------------

fn soft(v: f64, lam: f64) -> f64 {
    if v > lam {
        v - lam
    } else if v < -lam {
        v + lam
    } else {
        0.0
    }
}

pub fn oracle_objective(g: &SymMat, b: &[f64], lambda: f64, a: &[f64]) -> f64 {
    let quad = g.quad_form(a);
    let lin: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let l1: f64 = a.iter().map(|x| x.abs()).sum();
    quad - 2.0 * lin + lambda * l1
}

/// Minimize `a^T G a - 2 b^T a + lambda |a|_1` by subgradient descent.
/// Returns the minimizer and its objective.
pub fn subgradient_oracle(g: &SymMat, b: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut a = vec![0.0f64; n];
    for _ in 0..100_000 {
        let ga = g.mul_vec(&a);
        let grad: Vec<f64> = (0..n).map(|i| 2.0 * (ga[i] - b[i])).collect();
        // Minimum-norm subgradient: vanishes exactly at optimality.
        let sub: Vec<f64> = (0..n)
            .map(|i| {
                if a[i] != 0.0 {
                    grad[i] + lambda * a[i].signum()
                } else {
                    soft(grad[i], lambda)
                }
            })
            .collect();
        let norm = sub.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm <= 1e-12 {
            break;
        }
        let dir: Vec<f64> = sub.iter().map(|v| -v).collect();
        let t = line_search(g, lambda, &a, &dir, &grad);
        if t <= 0.0 {
            break;
        }
        for i in 0..n {
            a[i] += t * dir[i];
            if a[i].abs() < 1e-14 {
                a[i] = 0.0;
            }
        }
    }
    let obj = oracle_objective(g, b, lambda, &a);
    (a, obj)
}

/// Exact minimizer of the piecewise-quadratic `t -> f(a + t dir)` over
/// `t >= 0`.
fn line_search(g: &SymMat, lambda: f64, a: &[f64], dir: &[f64], grad: &[f64]) -> f64 {
    let n = a.len();
    let qd: f64 = grad.iter().zip(dir).map(|(q, d)| q * d).sum();
    let gd = g.mul_vec(dir);
    let dgd: f64 = dir.iter().zip(&gd).map(|(d, v)| d * v).sum();
    // Breakpoints where a coordinate crosses zero.
    let mut breaks: Vec<f64> = (0..n)
        .filter(|&i| dir[i] != 0.0 && a[i] != 0.0)
        .map(|i| -a[i] / dir[i])
        .filter(|t| *t > 0.0)
        .collect();
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup();

    let f_at = |t: f64| -> f64 {
        let l1: f64 = (0..n).map(|i| (a[i] + t * dir[i]).abs()).sum();
        qd * t + dgd * t * t + lambda * l1
    };
    let mut best_t = 0.0;
    let mut best_f = f_at(0.0);
    let mut consider = |t: f64| {
        if t >= 0.0 {
            let f = f_at(t);
            if f < best_f {
                best_f = f;
                best_t = t;
            }
        }
    };
    // Per-segment vertices (l1 slope is constant between breakpoints).
    let segment_edges: Vec<f64> = std::iter::once(0.0)
        .chain(breaks.iter().copied())
        .chain(std::iter::once(f64::INFINITY))
        .collect();
    for w in segment_edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo + 1.0
        };
        let slope: f64 = (0..n)
            .filter(|&i| dir[i] != 0.0)
            .map(|i| (a[i] + mid * dir[i]).signum() * dir[i])
            .sum();
        if dgd > 0.0 {
            let vertex = -(qd + lambda * slope) / (2.0 * dgd);
            if vertex > lo && (vertex < hi || !hi.is_finite()) {
                consider(vertex);
            }
        }
    }
    for &t in &breaks {
        consider(t);
    }
    best_t
}

/// Deterministic random PSD Gram instance (factor product plus a ridge).
pub fn random_psd_instance(
    n: usize,
    seed: u64,
    ridge: f64,
) -> (SymMat, Vec<f64>) {
    let rng = SiteRng::new(seed);
    let k = n + 2;
    let factor: Vec<f64> = (0..n * k)
        .map(|i| rng.sequence(1, i as u64) * 2.0 - 1.0)
        .collect();
    let mut m = SymMat::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut dot = 0.0;
            for l in 0..k {
                dot += factor[i * k + l] * factor[j * k + l];
            }
            m.set(i, j, dot / k as f64 + if i == j { ridge } else { 0.0 });
        }
    }
    let b: Vec<f64> = (0..n).map(|i| rng.sequence(2, i as u64) * 2.0 - 1.0).collect();
    (m, b)
}
