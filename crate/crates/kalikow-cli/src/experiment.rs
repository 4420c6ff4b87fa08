//! Pipeline orchestration: simulate, assemble, estimate, diagnose.

use crate::config::ResolvedConfig;
use kalikow::decomp::Neuron;
use kalikow::gram::{self, GramSystem, ReMode};
use kalikow::io::{self, GramJson, SolutionJson};
use kalikow::lasso::{self, LassoConfig, NormRef};
use kalikow::sim::{sample_window, SimOptions, SpikeSample};
use kalikow::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// Top-level report written as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub config_fingerprint: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub sample: SampleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compensator: Option<CompensatorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSummary>,
    /// Overall pass/fail of the requested checks (true when none failed).
    pub checks_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub neurons: Vec<i64>,
    pub m: usize,
    pub t: i64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateSummary {
    pub target: i64,
    pub gamma: f64,
    pub d: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompensatorSummary {
    /// `max over phi of |b_phi - b_bar_phi|`.
    pub max_abs_deviation: f64,
    pub d: f64,
    /// Whether the deviation stayed within the threshold `d`.
    pub within_threshold: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSummary {
    pub lambda_min: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kappa_checks: Vec<KappaCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re: Option<ReSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_sq_vs_model: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_bound_at_solution: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaCheck {
    pub kappa: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReSummary {
    pub c: f64,
    pub s: usize,
    pub mode: String,
    pub lower: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub positive: bool,
}

/// A failed stage, for the `.partial` marker and the exit code.
#[derive(Debug, Serialize)]
pub struct StageFailure {
    pub failed_stage: String,
    pub error: String,
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Execute all configured stages for one seed, writing every artifact
/// under `out_dir`. Deterministic: identical config and seed produce
/// byte-identical outputs.
pub fn run_experiment(resolved: &ResolvedConfig, seed: u64, out_dir: &Path) -> Result<ExperimentReport> {
    let run = || -> Result<ExperimentReport> {
        let mut stages = Vec::new();
        let sim = &resolved.config.simulation;
        let opts = SimOptions {
            genealogy_cap: sim.genealogy_cap.unwrap_or(1_000_000),
        };
        let f: Vec<Neuron> = sim.neurons.iter().map(|&n| Neuron(n)).collect();

        // simulate
        let sample = stage("simulate", &mut stages, || {
            sample_window(&resolved.model, &f, sim.m, sim.t, seed, &opts)
        })?;
        write_sample(&sample, out_dir)?;
        let summary = SampleSummary {
            neurons: sim.neurons.clone(),
            m: sim.m,
            t: sim.t,
            rates: (0..f.len()).map(|j| sample.rate(j)).collect(),
        };

        let mut estimate = None;
        let mut compensator = None;
        let mut diagnostics = None;
        let mut checks_passed = true;

        if let (Some(dict), Some(est)) = (&resolved.dictionary, &resolved.config.estimator) {
            let target = Neuron(est.target);
            // assemble
            let mut gram_sys = stage("assemble", &mut stages, || {
                gram::assemble(dict, &sample, target)
            })?;
            let d = match (est.delta, est.d) {
                (Some(delta), None) => {
                    lasso::d_delta(dict.sup_norm(), dict.len(), delta, sim.t)
                }
                (_, Some(d)) => d,
                _ => unreachable!("validated at load"),
            };

            if let Some(model) = &resolved.transition {
                let b_bar = stage("compensator", &mut stages, || {
                    gram::compensator(dict, &sample, model, target)
                })?;
                let max_dev = gram_sys
                    .b
                    .iter()
                    .zip(&b_bar)
                    .map(|(b, bb)| (b - bb).abs())
                    .fold(0.0f64, f64::max);
                compensator = Some(CompensatorSummary {
                    max_abs_deviation: max_dev,
                    d,
                    within_threshold: max_dev <= d,
                });
                gram_sys.b_bar = Some(b_bar);
            }
            write_atomic(
                &out_dir.join("gram.json"),
                &io::to_json_string(
                    &GramJson::from_system(&gram_sys)
                        .with_provenance(seed, &resolved.fingerprint),
                )?,
            )?;

            // estimate
            let mut lasso_config = LassoConfig::new(est.gamma, d);
            if let Some(mi) = est.max_iter {
                lasso_config.max_iter = mi;
            }
            if let Some(tol) = est.tol {
                lasso_config.tol = tol;
            }
            let solution = stage("estimate", &mut stages, || {
                lasso::solve(&gram_sys, &lasso_config)
            })?;
            write_atomic(
                &out_dir.join("solution.json"),
                &io::to_json_string(
                    &SolutionJson::new(&gram_sys.dict_fingerprint, est.gamma, d, &solution)
                        .with_provenance(seed, &resolved.fingerprint),
                )?,
            )?;
            estimate = Some(EstimateSummary {
                target: est.target,
                gamma: est.gamma,
                d,
                objective: solution.objective,
                kkt_residual: solution.kkt_residual,
                iterations: solution.iterations,
                converged: solution.converged,
                active_set: solution.active_set.clone(),
            });

            // diagnose
            if let Some(diag) = &resolved.config.diagnostics {
                let summary = stage("diagnose", &mut stages, || {
                    diagnose(resolved, diag, dict, &gram_sys, &sample, &solution, est.gamma, d)
                })?;
                for check in &summary.kappa_checks {
                    checks_passed &= check.satisfied;
                }
                if let Some(re) = &summary.re {
                    checks_passed &= re.positive;
                }
                diagnostics = Some(summary);
            }
            if !solution.converged {
                checks_passed = false;
            }
        }

        Ok(ExperimentReport {
            schema: 1,
            config_fingerprint: resolved.fingerprint.clone(),
            seed,
            stages,
            sample: summary,
            estimate,
            compensator,
            diagnostics,
            checks_passed,
        })
    };

    match run() {
        Ok(report) => {
            write_atomic(&out_dir.join("report.json"), &io::to_json_string(&report)?)?;
            Ok(report)
        }
        Err(e) => {
            let failure = StageFailure {
                failed_stage: current_stage_name(&e),
                error: e.to_string(),
            };
            let _ = write_atomic(
                &out_dir.join("report.json.partial"),
                &io::to_json_string(&failure)?,
            );
            Err(e)
        }
    }
}

// Stage bookkeeping: the stage closure result is tagged with the stage
// name on failure so the partial marker can name it.
fn stage<T>(
    name: &str,
    stages: &mut Vec<String>,
    body: impl FnOnce() -> Result<T>,
) -> Result<T> {
    match body() {
        Ok(v) => {
            stages.push(name.to_string());
            Ok(v)
        }
        Err(e) => Err(Error::Contract(format!("stage {name}: {e}"))),
    }
}

fn current_stage_name(e: &Error) -> String {
    let text = e.to_string();
    if let Some(rest) = text.strip_prefix("contract violation: stage ") {
        if let Some((stage, _)) = rest.split_once(':') {
            return stage.to_string();
        }
    }
    "unknown".to_string()
}

fn write_sample(sample: &SpikeSample, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv = Vec::new();
    io::write_sample_csv(sample, &mut csv)?;
    std::fs::write(out_dir.join("sample.csv"), csv)?;
    let mut bin = Vec::new();
    io::write_sample_binary(sample, &mut bin)?;
    std::fs::write(out_dir.join("sample.bin"), bin)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn diagnose(
    resolved: &ResolvedConfig,
    diag: &crate::config::DiagnosticsSection,
    dict: &kalikow::dict::Dictionary,
    gram_sys: &GramSystem,
    sample: &SpikeSample,
    solution: &kalikow::lasso::LassoSolution,
    gamma: f64,
    d: f64,
) -> Result<DiagnosticsSummary> {
    let inv = gram::inv_check(&gram_sys.g);
    let kappa_checks: Vec<KappaCheck> = diag
        .kappa
        .iter()
        .map(|&k| KappaCheck {
            kappa: k,
            satisfied: inv.satisfies(k),
        })
        .collect();

    let re = match (diag.re_c, diag.re_s) {
        (Some(c), Some(s)) => {
            let mode = diag.re_mode.as_deref().unwrap_or("exact");
            let reference;
            let re_mode = match mode {
                "certified" => {
                    reference = gram::expected_gram_bernoulli(dict)?;
                    ReMode::Certified {
                        mu: diag.mu.expect("validated at load"),
                        reference: &reference.matrix,
                    }
                }
                _ => ReMode::Exact,
            };
            let check = gram::re_check(&gram_sys.g, c, s, re_mode)?;
            Some(ReSummary {
                c,
                s,
                mode: mode.to_string(),
                lower: check.lower,
                upper: check.upper,
                positive: check.lower > 0.0,
            })
        }
        _ => None,
    };

    let kappa_prime = diag
        .mu
        .map(|mu| gram::kappa_prime(dict, mu))
        .transpose()
        .unwrap_or(None);

    let (norm_sq, oracle) = if let Some(model) = &resolved.transition {
        let est = resolved.config.estimator.as_ref().expect("estimator ran");
        let norm = lasso::empirical_norm_sq(
            dict,
            sample,
            &solution.coefficients,
            NormRef::Model(model),
            Neuron(est.target),
        )?;
        let bound = if inv.lambda_min > 0.0 {
            Some(lasso::oracle_bound(
                dict,
                sample,
                model,
                Neuron(est.target),
                &solution.coefficients,
                inv.lambda_min,
                gamma,
                d,
            )?)
        } else {
            None
        };
        (Some(norm), bound)
    } else {
        (None, None)
    };

    Ok(DiagnosticsSummary {
        lambda_min: inv.lambda_min,
        kappa_checks,
        re,
        kappa_prime,
        norm_sq_vs_model: norm_sq,
        oracle_bound_at_solution: oracle,
    })
}

/// Aggregate over replicated seeds.
#[derive(Debug, Serialize)]
pub struct ReplicateReport {
    pub schema: u32,
    pub config_fingerprint: String,
    pub base_seed: u64,
    pub n: u64,
    pub rows: Vec<ReplicaRow>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicaRow {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compensator_within: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_sq_vs_model: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks_passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub completed: u64,
    pub errored: u64,
    /// Fraction of completed replicas whose compensator deviation stayed
    /// within the threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compensator_coverage: Option<f64>,
    /// Quantiles (0.1, 0.5, 0.9) of the model-distance norm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_sq_quantiles: Option<[f64; 3]>,
}

/// Run seeds `base_seed..base_seed + n` in parallel; artifacts per seed go
/// to `out/seed_<s>/` and the aggregate to `out/aggregate.json`.
/// Aggregation order is by seed, independent of completion order.
pub fn replicate(resolved: &ResolvedConfig, n: u64, base_seed: u64, out_dir: &Path) -> Result<ReplicateReport> {
    if n < 1 {
        return Err(Error::Contract("replicate needs n >= 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rows: Vec<ReplicaRow> = (0..n)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed + k;
            let seed_dir = out_dir.join(format!("seed_{seed}"));
            match run_experiment(resolved, seed, &seed_dir) {
                Ok(report) => ReplicaRow {
                    seed,
                    error: None,
                    compensator_within: report.compensator.as_ref().map(|c| c.within_threshold),
                    max_abs_deviation: report.compensator.as_ref().map(|c| c.max_abs_deviation),
                    norm_sq_vs_model: report
                        .diagnostics
                        .as_ref()
                        .and_then(|d| d.norm_sq_vs_model),
                    checks_passed: Some(report.checks_passed),
                },
                Err(e) => ReplicaRow {
                    seed,
                    error: Some(e.to_string()),
                    compensator_within: None,
                    max_abs_deviation: None,
                    norm_sq_vs_model: None,
                    checks_passed: None,
                },
            }
        })
        .collect();
    rows.sort_by_key(|r| r.seed);

    let completed = rows.iter().filter(|r| r.error.is_none()).count() as u64;
    let covered: Vec<bool> = rows
        .iter()
        .filter_map(|r| r.compensator_within)
        .collect();
    let compensator_coverage = if covered.is_empty() {
        None
    } else {
        Some(covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64)
    };
    let mut norms: Vec<f64> = rows.iter().filter_map(|r| r.norm_sq_vs_model).collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm_sq_quantiles = if norms.is_empty() {
        None
    } else {
        let q = |p: f64| norms[((norms.len() - 1) as f64 * p).round() as usize];
        Some([q(0.1), q(0.5), q(0.9)])
    };

    let report = ReplicateReport {
        schema: 1,
        config_fingerprint: resolved.fingerprint.clone(),
        base_seed,
        n,
        rows,
        aggregate: Aggregate {
            completed,
            errored: n - completed,
            compensator_coverage,
            norm_sq_quantiles,
        },
    };
    write_atomic(&out_dir.join("aggregate.json"), &io::to_json_string(&report)?)?;
    Ok(report)
}
