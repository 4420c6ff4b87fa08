//! Model families with explicit space-time decompositions.
//!
//! Each adapter turns a parametric family (Markov chain, chain of infinite
//! order, discrete-time linear Hawkes, linear GL neuron model) into a
//! [`KalikowModel`], and [`TransitionModel`] evaluates the family's
//! closed-form transition probability so the two routes can be compared
//! exactly.

use crate::decomp::{
    Atom, KalikowModel, Kernel, LawRule, Neighborhood, NeighborhoodDistribution, Neuron,
    NeuronLaw, Site, TruncationRecord,
};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Default cumulative mass allowed to be dropped when truncating an
/// infinite lag support.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Markov chains
// ---------------------------------------------------------------------------

/// Order-1 binary Markov chain: `p1 = P(X_t = 1 | X_{t-1} = 1)`,
/// `p0 = P(X_t = 1 | X_{t-1} = 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovSpec {
    pub p1: f64,
    pub p0: f64,
}

impl MarkovSpec {
    pub fn new(p1: f64, p0: f64) -> Result<Self> {
        for p in [p1, p0] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidModel(format!(
                    "Markov transition probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(MarkovSpec { p1, p0 })
    }

    /// `p(x) = p1 * x_{-1} + p0 * (1 - x_{-1})`.
    pub fn transition(&self, last_bit: u8) -> f64 {
        if last_bit != 0 {
            self.p1
        } else {
            self.p0
        }
    }

    /// Stationary spike probability `p0 / (1 - p1 + p0)`.
    pub fn stationary_rate(&self) -> f64 {
        self.p0 / (1.0 - self.p1 + self.p0)
    }

    /// The decomposition mass of the empty neighborhood,
    /// `mu = min(p1, p0) + min(1 - p1, 1 - p0)`.
    pub fn empty_mass(&self) -> f64 {
        self.p1.min(self.p0) + (1.0 - self.p1).min(1.0 - self.p0)
    }
}

/// Single-neuron decomposition of the order-1 Markov chain: the empty
/// neighborhood carries mass `mu = p + q` and the residual affine kernel
/// lives on `{-1}`.
pub fn markov_model(p1: f64, p0: f64) -> Result<KalikowModel> {
    let spec = MarkovSpec::new(p1, p0)?;
    let p = p1.min(p0);
    let mu = spec.empty_mass();
    if mu <= 0.0 || mu >= 1.0 {
        return Err(Error::DegenerateMarkov { mu });
    }
    let neuron = Neuron(0);
    let v = Neighborhood::new(vec![Site::new(neuron, -1)])?;
    let dist = NeighborhoodDistribution::new(
        mu,
        vec![Atom {
            neighborhood: v,
            weight: 1.0 - mu,
        }],
    )?;
    // Table kernel indexed by x_{-1}: [(p0 - p)/(1 - mu), (p1 - p)/(1 - mu)].
    // The ratios are probabilities up to rounding dust; clamp the dust.
    let kernel = Kernel::Table(vec![
        ((p0 - p) / (1.0 - mu)).clamp(0.0, 1.0),
        ((p1 - p) / (1.0 - mu)).clamp(0.0, 1.0),
    ]);
    let law = NeuronLaw::new(dist, p / mu, vec![kernel])?;
    let mut laws = BTreeMap::new();
    laws.insert(neuron, law);
    KalikowModel::explicit(laws)
}

// ---------------------------------------------------------------------------
// Chains of infinite order
// ---------------------------------------------------------------------------

/// Single-neuron chain whose atoms are the nested ranges
/// `{-l, ..., -1}`. `range_weights[l]` is the mass of range `l`
/// (`l = 0` is the empty neighborhood), `range_kernels[l - 1]` the kernel
/// of range `l` (bit `k` of its input is the value at time `-l + k`).
///
/// Weights must reach total mass one up to `tail_tolerance`; the residual
/// is folded into the last atom and recorded.
pub fn infinite_order_model(
    range_weights: &[f64],
    p_empty: f64,
    range_kernels: Vec<Kernel>,
    tail_tolerance: f64,
) -> Result<KalikowModel> {
    if range_weights.is_empty() {
        return Err(Error::InvalidModel("no range weights".into()));
    }
    if range_kernels.len() != range_weights.len() - 1 {
        return Err(Error::InvalidModel(format!(
            "{} kernels for {} non-empty ranges",
            range_kernels.len(),
            range_weights.len() - 1
        )));
    }
    if let Some(w) = range_weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidModel(format!("negative range weight {w}")));
    }
    let total: f64 = range_weights.iter().sum();
    if total > 1.0 + crate::decomp::WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidModel(format!("range weights sum to {total} > 1")));
    }
    let residual = 1.0 - total;
    if residual > tail_tolerance {
        return Err(Error::Truncation(format!(
            "range weights sum to {total}; residual {residual:e} exceeds tolerance {tail_tolerance:e}"
        )));
    }
    let neuron = Neuron(0);
    let mut atoms = Vec::new();
    for (ell, &w) in range_weights.iter().enumerate().skip(1) {
        let sites = (1..=ell as i64)
            .map(|lag| Site::new(neuron, -lag))
            .collect();
        let mut weight = w;
        if ell == range_weights.len() - 1 {
            weight += residual;
        }
        atoms.push(Atom {
            neighborhood: Neighborhood::new(sites)?,
            weight,
        });
    }
    let empty_weight = if atoms.is_empty() {
        range_weights[0] + residual
    } else {
        range_weights[0]
    };
    let dist = NeighborhoodDistribution::new(empty_weight, atoms)?;
    let law = NeuronLaw::new(dist, p_empty, range_kernels)?;
    let mut laws = BTreeMap::new();
    laws.insert(neuron, law);
    let mut records = Vec::new();
    if residual != 0.0 {
        records.push(TruncationRecord {
            context: "infinite-order range weights".into(),
            neglected_mass: residual,
            folded_into_last: true,
        });
    }
    Ok(KalikowModel::explicit(laws)?.with_truncations(records))
}

/// Geometric range law `lambda(range l) = (1 - p)^l * p`, truncated once
/// the remaining tail mass drops below `tol`. Requires `p > 1/2` so the
/// mean range stays below one.
pub fn geometric_range_weights(p: f64, tol: f64) -> Result<Vec<f64>> {
    if !(0.5..=1.0).contains(&p) {
        return Err(Error::InvalidModel(format!(
            "geometric range law needs p in (1/2, 1], got {p}"
        )));
    }
    let mut weights = Vec::new();
    let mut tail = 1.0;
    let mut w = p;
    while tail > tol && weights.len() < 10_000 {
        weights.push(w);
        tail -= w;
        w *= 1.0 - p;
    }
    Ok(weights)
}

/// Poisson range law `lambda(range l) = exp(-rate) * rate^l / l!` with
/// `rate < 1`, truncated once the tail mass drops below `tol`.
pub fn poisson_range_weights(rate: f64, tol: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidModel(format!(
            "poisson range law needs rate in [0, 1), got {rate}"
        )));
    }
    let mut weights = Vec::new();
    let mut tail = 1.0;
    let mut w = (-rate).exp();
    let mut ell = 0usize;
    while tail > tol && weights.len() < 10_000 {
        weights.push(w);
        tail -= w;
        ell += 1;
        w *= rate / ell as f64;
    }
    Ok(weights)
}

// ---------------------------------------------------------------------------
// Discrete-time linear Hawkes processes
// ---------------------------------------------------------------------------

/// One interaction weight `h_{from -> to}(lag)`, `lag >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub from: Neuron,
    pub to: Neuron,
    pub lag: u32,
    pub weight: f64,
}

/// Discrete-time linear Hawkes specification.
#[derive(Debug, Clone)]
pub struct HawkesSpec {
    nu: BTreeMap<Neuron, f64>,
    interactions: Vec<Interaction>,
}

impl HawkesSpec {
    /// Validates per-target strengths: `0 <= nu_i - Sigma_i^-` and
    /// `nu_i + Sigma_i^+ <= 1`, so the linear intensity never needs
    /// clipping.
    pub fn new(nu: Vec<(Neuron, f64)>, interactions: Vec<Interaction>) -> Result<Self> {
        let mut nu_map = BTreeMap::new();
        for (neuron, rate) in nu {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidModel(format!(
                    "spontaneous rate {rate} for neuron {neuron} outside [0, 1]"
                )));
            }
            if nu_map.insert(neuron, rate).is_some() {
                return Err(Error::InvalidModel(format!("duplicate neuron {neuron}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for it in &interactions {
            if it.lag == 0 {
                return Err(Error::InvalidModel("interaction lag must be >= 1".into()));
            }
            if !nu_map.contains_key(&it.from) || !nu_map.contains_key(&it.to) {
                return Err(Error::InvalidModel(format!(
                    "interaction {} -> {} references undeclared neuron",
                    it.from, it.to
                )));
            }
            if !seen.insert((it.from, it.to, it.lag)) {
                return Err(Error::InvalidModel(format!(
                    "duplicate interaction {} -> {} at lag {}",
                    it.from, it.to, it.lag
                )));
            }
        }
        let spec = HawkesSpec {
            nu: nu_map,
            interactions,
        };
        for (&i, &nu_i) in &spec.nu {
            let (plus, minus) = spec.strengths(i);
            if nu_i - minus < 0.0 || nu_i + plus > 1.0 {
                return Err(Error::InvalidModel(format!(
                    "neuron {i}: need 0 <= nu - Sigma^- and nu + Sigma^+ <= 1, got nu = {nu_i}, \
                     Sigma^+ = {plus}, Sigma^- = {minus}"
                )));
            }
        }
        Ok(spec)
    }

    pub fn neurons(&self) -> Vec<Neuron> {
        self.nu.keys().copied().collect()
    }

    pub fn nu(&self, neuron: Neuron) -> Option<f64> {
        self.nu.get(&neuron).copied()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// `(Sigma_i^+, Sigma_i^-)` for target `i`.
    pub fn strengths(&self, i: Neuron) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for it in self.interactions.iter().filter(|it| it.to == i) {
            if it.weight > 0.0 {
                plus += it.weight;
            } else {
                minus += -it.weight;
            }
        }
        (plus, minus)
    }

    pub fn max_lag(&self) -> u32 {
        self.interactions.iter().map(|it| it.lag).max().unwrap_or(0)
    }

    /// Largest `mu` with `mu <= p_i(x) <= 1 - mu` for every neuron and
    /// past; can be zero or negative when the band is empty.
    pub fn mu_band(&self) -> f64 {
        let mut band = f64::INFINITY;
        for (&i, &nu_i) in &self.nu {
            let (plus, minus) = self.strengths(i);
            band = band.min(nu_i - minus).min(1.0 - nu_i - plus);
        }
        band
    }

    /// Closed-form transition `psi_i(x) = nu_i + sum h * x`, clipped to
    /// `[0, 1]`. `past(j, s)` returns the bit at relative time `s <= -1` or
    /// `None` when the lag is not supplied.
    pub fn transition<F>(&self, i: Neuron, past: F) -> Result<f64>
    where
        F: Fn(Neuron, i64) -> Option<u8>,
    {
        let nu_i = self
            .nu
            .get(&i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("neuron {i} not in Hawkes spec")))?;
        let mut psi = nu_i;
        for it in self.interactions.iter().filter(|it| it.to == i) {
            let bit = past(it.from, -(it.lag as i64)).ok_or_else(|| {
                Error::Contract(format!(
                    "past configuration missing site ({}, {})",
                    it.from,
                    -(it.lag as i64)
                ))
            })?;
            psi += it.weight * bit as f64;
        }
        Ok(psi.clamp(0.0, 1.0))
    }
}

/// Hawkes decomposition: mass `1 - (Sigma^+ + Sigma^-)` on the empty
/// neighborhood, one singleton atom per interaction with the spike (or
/// non-spike) indicator kernel. Atoms are ordered by `(lag, source)`.
pub fn hawkes_model(spec: &HawkesSpec) -> Result<KalikowModel> {
    let mut laws = BTreeMap::new();
    for (&i, &nu_i) in &spec.nu {
        laws.insert(i, hawkes_neuron_law(spec, i, nu_i)?);
    }
    KalikowModel::explicit(laws)
}

fn hawkes_neuron_law(spec: &HawkesSpec, i: Neuron, nu_i: f64) -> Result<NeuronLaw> {
    let (plus, minus) = spec.strengths(i);
    let empty_weight = 1.0 - (plus + minus);
    if empty_weight <= 0.0 {
        return Err(Error::Decomposition(format!(
            "neuron {i}: Sigma^+ + Sigma^- = {} >= 1 leaves no empty-neighborhood mass",
            plus + minus
        )));
    }
    let mut incoming: Vec<&Interaction> = spec
        .interactions
        .iter()
        .filter(|it| it.to == i && it.weight != 0.0)
        .collect();
    incoming.sort_by_key(|it| (it.lag, it.from));
    let mut atoms = Vec::with_capacity(incoming.len());
    let mut kernels = Vec::with_capacity(incoming.len());
    for it in incoming {
        let site = Site::new(it.from, -(it.lag as i64));
        atoms.push(Atom {
            neighborhood: Neighborhood::new(vec![site])?,
            weight: it.weight.abs(),
        });
        kernels.push(if it.weight > 0.0 {
            Kernel::Bit { bit: 0 }
        } else {
            Kernel::NotBit { bit: 0 }
        });
    }
    let dist = NeighborhoodDistribution::new(empty_weight, atoms)?;
    // In range by the strength validation; clamp rounding dust.
    NeuronLaw::new(dist, ((nu_i - minus) / empty_weight).clamp(0.0, 1.0), kernels)
}

/// Translation-invariant Hawkes rule on the infinite network `Z`:
/// `h_{(i + offset) -> i}(lag) = weight` for every neuron `i`.
#[derive(Debug, Clone)]
pub struct HawkesChainRule {
    nu: f64,
    /// `(source offset relative to target, lag, weight)`.
    weights: Vec<(i64, u32, f64)>,
}

impl HawkesChainRule {
    pub fn new(nu: f64, weights: Vec<(i64, u32, f64)>) -> Result<Self> {
        let plus: f64 = weights.iter().map(|w| w.2.max(0.0)).sum();
        let minus: f64 = weights.iter().map(|w| (-w.2).max(0.0)).sum();
        if nu - minus < 0.0 || nu + plus > 1.0 {
            return Err(Error::InvalidModel(format!(
                "chain rule violates 0 <= nu - Sigma^- and nu + Sigma^+ <= 1 \
                 (nu = {nu}, Sigma^+ = {plus}, Sigma^- = {minus})"
            )));
        }
        if plus + minus >= 1.0 {
            return Err(Error::Decomposition(format!(
                "Sigma^+ + Sigma^- = {} >= 1",
                plus + minus
            )));
        }
        if weights.iter().any(|w| w.1 == 0) {
            return Err(Error::InvalidModel("interaction lag must be >= 1".into()));
        }
        Ok(HawkesChainRule { nu, weights })
    }

    pub fn transition<F>(&self, i: Neuron, past: F) -> Result<f64>
    where
        F: Fn(Neuron, i64) -> Option<u8>,
    {
        let mut psi = self.nu;
        for &(offset, lag, weight) in &self.weights {
            let bit = past(Neuron(i.0 + offset), -(lag as i64)).ok_or_else(|| {
                Error::Contract("past configuration missing a chain site".into())
            })?;
            psi += weight * bit as f64;
        }
        Ok(psi.clamp(0.0, 1.0))
    }
}

impl LawRule for HawkesChainRule {
    fn law(&self, neuron: Neuron) -> NeuronLaw {
        let minus: f64 = self.weights.iter().map(|w| (-w.2).max(0.0)).sum();
        let total: f64 = self.weights.iter().map(|w| w.2.abs()).sum();
        let mut ordered = self.weights.clone();
        ordered.sort_by_key(|&(offset, lag, _)| (lag, neuron.0 + offset));
        let mut atoms = Vec::new();
        let mut kernels = Vec::new();
        for (offset, lag, weight) in ordered {
            if weight == 0.0 {
                continue;
            }
            let site = Site::new(Neuron(neuron.0 + offset), -(lag as i64));
            atoms.push(Atom {
                neighborhood: Neighborhood::new(vec![site]).expect("lag >= 1"),
                weight: weight.abs(),
            });
            kernels.push(if weight > 0.0 {
                Kernel::Bit { bit: 0 }
            } else {
                Kernel::NotBit { bit: 0 }
            });
        }
        let dist = NeighborhoodDistribution::new_unchecked(1.0 - total, atoms);
        NeuronLaw::new(
            dist,
            ((self.nu - minus) / (1.0 - total)).clamp(0.0, 1.0),
            kernels,
        )
        .expect("validated at construction")
    }

    fn describe(&self) -> String {
        format!(
            "hawkes-chain nu={} with {} offsets",
            self.nu,
            self.weights.len()
        )
    }
}

/// Lazily generated Hawkes model on the infinite homogeneous network.
pub fn hawkes_chain_model(nu: f64, weights: Vec<(i64, u32, f64)>) -> Result<KalikowModel> {
    Ok(KalikowModel::homogeneous(Arc::new(HawkesChainRule::new(
        nu, weights,
    )?)))
}

// ---------------------------------------------------------------------------
// Linear GL neuron model
// ---------------------------------------------------------------------------

/// Positive lag sequence `g(l)`, `l >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum LagSequence {
    /// Explicit finite support: `values[l - 1] = g(l)`.
    Finite(Vec<f64>),
    /// `g(l) = first * ratio^(l - 1)` with `0 < ratio < 1`.
    Geometric { first: f64, ratio: f64 },
}

impl LagSequence {
    pub fn validate(&self) -> Result<()> {
        match self {
            LagSequence::Finite(values) => {
                if values.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidModel(
                        "lag sequence values must be strictly positive".into(),
                    ));
                }
            }
            LagSequence::Geometric { first, ratio } => {
                if *first <= 0.0 || !(0.0..1.0).contains(ratio) {
                    return Err(Error::InvalidModel(format!(
                        "geometric lag sequence needs first > 0 and ratio in (0, 1), got \
                         first = {first}, ratio = {ratio}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, lag: usize) -> f64 {
        debug_assert!(lag >= 1);
        match self {
            LagSequence::Finite(values) => values.get(lag - 1).copied().unwrap_or(0.0),
            LagSequence::Geometric { first, ratio } => first * ratio.powi(lag as i32 - 1),
        }
    }

    /// `sum over l >= 1 of g(l)`.
    pub fn total(&self) -> f64 {
        match self {
            LagSequence::Finite(values) => values.iter().sum(),
            LagSequence::Geometric { first, ratio } => first / (1.0 - ratio),
        }
    }

    /// `sum over l >= from of g(l)`.
    pub fn tail(&self, from: usize) -> f64 {
        match self {
            LagSequence::Finite(values) => values.iter().skip(from.saturating_sub(1)).sum(),
            LagSequence::Geometric { first, ratio } => {
                first * ratio.powi(from as i32 - 1) / (1.0 - ratio)
            }
        }
    }

    /// Smallest cutoff `L` with `tail(L + 1) <= tol` (per unit weight).
    pub fn cutoff_for(&self, tol: f64) -> usize {
        match self {
            LagSequence::Finite(values) => values.len(),
            LagSequence::Geometric { ratio, .. } => {
                let mut cutoff = 1usize;
                while self.tail(cutoff + 1) > tol && cutoff < 100_000 {
                    cutoff += 1;
                    let _ = ratio;
                }
                cutoff
            }
        }
    }
}

/// Linear GL neuron model specification: `p_i` is `nu_i` plus the
/// `g`-filtered synaptic input accumulated since the last spike of `i`.
#[derive(Debug, Clone)]
pub struct GlLinearSpec {
    nu: BTreeMap<Neuron, f64>,
    /// `(from, to, weight)` with `from != to`.
    weights: Vec<(Neuron, Neuron, f64)>,
    g: BTreeMap<Neuron, LagSequence>,
}

impl GlLinearSpec {
    pub fn new(
        nu: Vec<(Neuron, f64)>,
        weights: Vec<(Neuron, Neuron, f64)>,
        g: Vec<(Neuron, LagSequence)>,
    ) -> Result<Self> {
        let mut nu_map = BTreeMap::new();
        for (neuron, rate) in nu {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidModel(format!(
                    "spontaneous rate {rate} outside [0, 1]"
                )));
            }
            if nu_map.insert(neuron, rate).is_some() {
                return Err(Error::InvalidModel(format!("duplicate neuron {neuron}")));
            }
        }
        let mut g_map = BTreeMap::new();
        for (neuron, seq) in g {
            seq.validate()?;
            if g_map.insert(neuron, seq).is_some() {
                return Err(Error::InvalidModel(format!(
                    "duplicate lag sequence for neuron {neuron}"
                )));
            }
        }
        for (from, to, w) in &weights {
            if from == to && *w != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "self-weight W_{{{from} -> {from}}} must be zero"
                )));
            }
            if !nu_map.contains_key(from) || !nu_map.contains_key(to) {
                return Err(Error::InvalidModel(format!(
                    "weight {from} -> {to} references undeclared neuron"
                )));
            }
            if *w != 0.0 && !g_map.contains_key(from) {
                return Err(Error::InvalidModel(format!(
                    "no lag sequence for source neuron {from}"
                )));
            }
        }
        let spec = GlLinearSpec {
            nu: nu_map,
            weights,
            g: g_map,
        };
        for (&i, &nu_i) in &spec.nu {
            let (plus, minus) = spec.strengths(i);
            if nu_i - minus < 0.0 || nu_i + plus > 1.0 {
                return Err(Error::InvalidModel(format!(
                    "neuron {i}: need 0 <= nu - Sigma^- and nu + Sigma^+ <= 1, got nu = {nu_i}, \
                     Sigma^+ = {plus}, Sigma^- = {minus}"
                )));
            }
        }
        Ok(spec)
    }

    pub fn neurons(&self) -> Vec<Neuron> {
        self.nu.keys().copied().collect()
    }

    /// `(Sigma_i^+, Sigma_i^-)` over the full (untruncated) lag support.
    pub fn strengths(&self, i: Neuron) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (from, to, w) in &self.weights {
            if *to != i || *w == 0.0 {
                continue;
            }
            let mass = w.abs() * self.g[from].total();
            if *w > 0.0 {
                plus += mass;
            } else {
                minus += mass;
            }
        }
        (plus, minus)
    }

    pub fn mu_band(&self) -> f64 {
        let mut band = f64::INFINITY;
        for (&i, &nu_i) in &self.nu {
            let (plus, minus) = self.strengths(i);
            band = band.min(nu_i - minus).min(1.0 - nu_i - plus);
        }
        band
    }

    fn lag_cutoff(&self, requested: Option<usize>) -> usize {
        match requested {
            Some(c) => c,
            None => self
                .g
                .values()
                .map(|seq| seq.cutoff_for(DEFAULT_TAIL_TOLERANCE))
                .max()
                .unwrap_or(1),
        }
    }

    /// Closed-form transition of the variable-length-memory formula with
    /// `phi(u) = nu + u`, evaluated on lags up to `cutoff`.
    pub fn transition<F>(&self, i: Neuron, cutoff: usize, past: F) -> Result<f64>
    where
        F: Fn(Neuron, i64) -> Option<u8>,
    {
        let nu_i = self
            .nu
            .get(&i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("neuron {i} not in GL spec")))?;
        // Last spike of i within the truncated depth; anything deeper
        // cannot gate a truncated contribution.
        let mut last_spike = i64::MIN;
        for s in (-(cutoff as i64)..=-1).rev() {
            let bit = past(i, s).ok_or_else(|| {
                Error::Contract(format!("past configuration missing site ({i}, {s})"))
            })?;
            if bit != 0 {
                last_spike = s;
                break;
            }
        }
        let mut u = 0.0;
        for (from, to, w) in &self.weights {
            if *to != i || *w == 0.0 {
                continue;
            }
            let seq = &self.g[from];
            for lag in 1..=cutoff {
                let s = -(lag as i64);
                if s <= last_spike {
                    break;
                }
                let bit = past(*from, s).ok_or_else(|| {
                    Error::Contract(format!("past configuration missing site ({from}, {s})"))
                })?;
                if bit != 0 {
                    u += w * seq.value(lag);
                }
            }
        }
        Ok((nu_i + u).clamp(0.0, 1.0))
    }
}

/// GL decomposition: each interaction lag contributes the augmented
/// neighborhood `{(j, s)} + {(i, s), ..., (i, -1)}` whose kernel fires on a
/// source spike at `s` not screened by a later spike of `i`.
pub fn gl_linear_model(spec: &GlLinearSpec, lag_cutoff: Option<usize>) -> Result<KalikowModel> {
    let cutoff = spec.lag_cutoff(lag_cutoff);
    let mut records = Vec::new();
    let mut laws = BTreeMap::new();
    for (&i, &nu_i) in &spec.nu {
        let mut incoming: Vec<&(Neuron, Neuron, f64)> = spec
            .weights
            .iter()
            .filter(|(_, to, w)| *to == i && *w != 0.0)
            .collect();
        incoming.sort_by_key(|(from, _, _)| *from);

        let mut atoms = Vec::new();
        let mut kernels = Vec::new();
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (from, _, w) in incoming {
            let seq = &spec.g[from];
            let neglected = w.abs() * seq.tail(cutoff + 1);
            if neglected > 0.0 {
                records.push(TruncationRecord {
                    context: format!("gl weight {from} -> {i} lags beyond {cutoff}"),
                    neglected_mass: neglected,
                    folded_into_last: false,
                });
            }
            for lag in 1..=cutoff {
                let weight = w.abs() * seq.value(lag);
                if weight == 0.0 {
                    continue;
                }
                let s = -(lag as i64);
                let mut sites = vec![Site::new(*from, s)];
                sites.extend((s..=-1).map(|u| Site::new(i, u)));
                let neighborhood = Neighborhood::new(sites)?;
                // Locate the source bit and the screening sites of i after
                // sorting.
                let bit = neighborhood
                    .sites()
                    .iter()
                    .position(|site| *site == Site::new(*from, s))
                    .expect("source site present");
                let gate: Vec<usize> = neighborhood
                    .sites()
                    .iter()
                    .enumerate()
                    .filter(|(_, site)| site.neuron == i)
                    .map(|(k, _)| k)
                    .collect();
                atoms.push(Atom {
                    neighborhood,
                    weight,
                });
                kernels.push(if *w > 0.0 {
                    plus += weight;
                    Kernel::GatedBit { bit, gate }
                } else {
                    minus += weight;
                    Kernel::GatedBitComplement { bit, gate }
                });
            }
        }
        let empty_weight = 1.0 - (plus + minus);
        if empty_weight <= 0.0 {
            return Err(Error::Decomposition(format!(
                "neuron {i}: Sigma^+ + Sigma^- = {} >= 1 leaves no empty-neighborhood mass",
                plus + minus
            )));
        }
        let dist = NeighborhoodDistribution::new(empty_weight, atoms)?;
        let p_empty = ((nu_i - minus) / empty_weight).clamp(0.0, 1.0);
        laws.insert(i, NeuronLaw::new(dist, p_empty, kernels)?);
    }
    Ok(KalikowModel::explicit(laws)?.with_truncations(records))
}

/// Translation-invariant linear GL rule on the infinite network `Z`:
/// `W_{(i + offset) -> i} = weight` with a shared lag filter.
#[derive(Debug, Clone)]
pub struct GlChainRule {
    nu: f64,
    /// `(source offset relative to target, weight)`, offsets non-zero.
    weights: Vec<(i64, f64)>,
    g: LagSequence,
    cutoff: usize,
}

impl GlChainRule {
    pub fn new(nu: f64, weights: Vec<(i64, f64)>, g: LagSequence) -> Result<Self> {
        g.validate()?;
        if weights.iter().any(|(offset, w)| *offset == 0 && *w != 0.0) {
            return Err(Error::InvalidModel("chain self-weight must be zero".into()));
        }
        let g_total = g.total();
        let plus: f64 = weights.iter().map(|w| w.1.max(0.0) * g_total).sum();
        let minus: f64 = weights.iter().map(|w| (-w.1).max(0.0) * g_total).sum();
        if nu - minus < 0.0 || nu + plus > 1.0 {
            return Err(Error::InvalidModel(format!(
                "chain rule violates 0 <= nu - Sigma^- and nu + Sigma^+ <= 1 \
                 (nu = {nu}, Sigma^+ = {plus}, Sigma^- = {minus})"
            )));
        }
        let cutoff = g.cutoff_for(DEFAULT_TAIL_TOLERANCE);
        // The truncated decomposition must keep positive empty mass.
        let truncated: f64 = weights
            .iter()
            .map(|w| w.1.abs() * (g_total - g.tail(cutoff + 1)))
            .sum();
        if truncated >= 1.0 {
            return Err(Error::Decomposition(format!(
                "Sigma^+ + Sigma^- = {truncated} >= 1"
            )));
        }
        Ok(GlChainRule {
            nu,
            weights,
            g,
            cutoff,
        })
    }

    pub fn lag_cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn transition<F>(&self, i: Neuron, past: F) -> Result<f64>
    where
        F: Fn(Neuron, i64) -> Option<u8>,
    {
        let mut last_spike = i64::MIN;
        for s in (-(self.cutoff as i64)..=-1).rev() {
            let bit = past(i, s).ok_or_else(|| {
                Error::Contract("past configuration missing a chain site".into())
            })?;
            if bit != 0 {
                last_spike = s;
                break;
            }
        }
        let mut u = 0.0;
        for &(offset, w) in &self.weights {
            if w == 0.0 {
                continue;
            }
            for lag in 1..=self.cutoff {
                let s = -(lag as i64);
                if s <= last_spike {
                    break;
                }
                let bit = past(Neuron(i.0 + offset), s).ok_or_else(|| {
                    Error::Contract("past configuration missing a chain site".into())
                })?;
                if bit != 0 {
                    u += w * self.g.value(lag);
                }
            }
        }
        Ok((self.nu + u).clamp(0.0, 1.0))
    }
}

impl LawRule for GlChainRule {
    fn law(&self, neuron: Neuron) -> NeuronLaw {
        let mut atoms = Vec::new();
        let mut kernels = Vec::new();
        let mut plus = 0.0;
        let mut minus = 0.0;
        let mut ordered = self.weights.clone();
        ordered.sort_by_key(|&(offset, _)| neuron.0 + offset);
        for (offset, w) in ordered {
            if w == 0.0 {
                continue;
            }
            let source = Neuron(neuron.0 + offset);
            for lag in 1..=self.cutoff {
                let weight = w.abs() * self.g.value(lag);
                if weight == 0.0 {
                    continue;
                }
                let s = -(lag as i64);
                let mut sites = vec![Site::new(source, s)];
                sites.extend((s..=-1).map(|u| Site::new(neuron, u)));
                let neighborhood = Neighborhood::new(sites).expect("lag >= 1");
                let bit = neighborhood
                    .sites()
                    .iter()
                    .position(|site| *site == Site::new(source, s))
                    .expect("source site present");
                let gate: Vec<usize> = neighborhood
                    .sites()
                    .iter()
                    .enumerate()
                    .filter(|(_, site)| site.neuron == neuron)
                    .map(|(k, _)| k)
                    .collect();
                atoms.push(Atom {
                    neighborhood,
                    weight,
                });
                kernels.push(if w > 0.0 {
                    plus += weight;
                    Kernel::GatedBit { bit, gate }
                } else {
                    minus += weight;
                    Kernel::GatedBitComplement { bit, gate }
                });
            }
        }
        let empty_weight = 1.0 - (plus + minus);
        let dist = NeighborhoodDistribution::new_unchecked(empty_weight, atoms);
        NeuronLaw::new(
            dist,
            ((self.nu - minus) / empty_weight).clamp(0.0, 1.0),
            kernels,
        )
        .expect("validated at construction")
    }

    fn describe(&self) -> String {
        format!(
            "gl-chain nu={} with {} offsets, cutoff {}",
            self.nu,
            self.weights.len(),
            self.cutoff
        )
    }
}

/// Lazily generated linear GL model on the infinite homogeneous network.
pub fn gl_chain_model(
    nu: f64,
    weights: Vec<(i64, f64)>,
    g: LagSequence,
) -> Result<KalikowModel> {
    let rule = GlChainRule::new(nu, weights, g)?;
    let neglected: f64 = rule
        .weights
        .iter()
        .map(|w| w.1.abs() * rule.g.tail(rule.cutoff + 1))
        .sum();
    let mut records = Vec::new();
    if neglected > 0.0 {
        records.push(TruncationRecord {
            context: format!("gl chain lags beyond {}", rule.cutoff),
            neglected_mass: neglected,
            folded_into_last: false,
        });
    }
    Ok(KalikowModel::homogeneous(Arc::new(rule)).with_truncations(records))
}

/// Left side of the sufficient sparsity condition for the nonlinear GL
/// construction with nested range neighborhoods, and whether it is below
/// `1 / gamma`. This module does not construct nonlinear kernels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlNonlinearBound {
    pub value: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

use serde::Serialize;

/// `w[i][j]` is the synaptic weight `W_{j -> i}` over neurons indexed
/// `0..n`; `g[j]` the lag sequence of source `j`; `neighborhoods[i][l - 1]`
/// the neuron set used at range `l` (nested, starting from `{i}`). Ranges
/// beyond the provided sequence keep the last set.
pub fn gl_nonlinear_bound(
    w: &[Vec<f64>],
    g: &[LagSequence],
    gamma: f64,
    neighborhoods: &[Vec<Vec<usize>>],
) -> Result<GlNonlinearBound> {
    let n = w.len();
    if gamma <= 0.0 {
        return Err(Error::Contract(format!("gamma must be positive, got {gamma}")));
    }
    if g.len() != n || neighborhoods.len() != n {
        return Err(Error::Contract("w, g, neighborhoods sizes disagree".into()));
    }
    for seq in g {
        seq.validate()?;
    }
    let g_total: Vec<f64> = g.iter().map(|seq| seq.total()).collect();
    // Summability of the row sums (the standing requirement on W).
    for row in w {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergent("non-finite synaptic weight".into()));
        }
    }

    let mut sup = 0.0f64;
    for i in 0..n {
        let sets = &neighborhoods[i];
        if sets.is_empty() || sets[0] != vec![i] {
            return Err(Error::Contract(format!(
                "neighborhoods[{i}] must start with the singleton {{{i}}}"
            )));
        }
        for pair in sets.windows(2) {
            if !pair[0].iter().all(|j| pair[1].contains(j)) {
                return Err(Error::Contract(format!(
                    "neighborhoods[{i}] must be nested"
                )));
            }
        }
        let mut acc = 0.0f64;
        let mut ell = 1usize;
        let hard_cap = sets.len() + 20_000;
        loop {
            let set = &sets[(ell - 1).min(sets.len() - 1)];
            let card = (ell * set.len()) as f64;
            let mut inner = 0.0;
            for j in 0..n {
                let wj = w[i][j].abs();
                if wj == 0.0 {
                    continue;
                }
                inner += wj
                    * if set.contains(&j) {
                        g[j].tail(ell)
                    } else {
                        g_total[j]
                    };
            }
            let term = ell as f64 * card * inner;
            acc += term;
            if !acc.is_finite() {
                return Err(Error::Divergent(
                    "nonlinear GL sparsity sum does not converge".into(),
                ));
            }
            if term <= 1e-16 * acc.max(1.0) && ell >= sets.len() {
                break;
            }
            ell += 1;
            if ell > hard_cap {
                // The outside-set contribution never decays: divergent.
                return Err(Error::Divergent(
                    "nonlinear GL sparsity sum does not converge".into(),
                ));
            }
        }
        sup = sup.max(acc);
    }
    Ok(GlNonlinearBound {
        value: sup,
        threshold: 1.0 / gamma,
        satisfied: sup < 1.0 / gamma,
    })
}

// ---------------------------------------------------------------------------
// Closed-form transition oracle shared by the estimators
// ---------------------------------------------------------------------------

/// A model family whose transition probability has a computable closed
/// form (used by the compensator and the empirical norms).
#[derive(Debug, Clone)]
pub enum TransitionModel {
    Markov(MarkovSpec),
    Hawkes(HawkesSpec),
    HawkesChain(HawkesChainRule),
    GlLinear { spec: GlLinearSpec, cutoff: usize },
    GlChain(GlChainRule),
}

impl TransitionModel {
    pub fn gl(spec: GlLinearSpec, lag_cutoff: Option<usize>) -> Self {
        let cutoff = spec.lag_cutoff(lag_cutoff);
        TransitionModel::GlLinear { spec, cutoff }
    }

    /// `p_i(x)` for the past `past(j, s)` (relative times `s <= -1`;
    /// `None` = missing data, a contract violation).
    pub fn prob<F>(&self, i: Neuron, past: F) -> Result<f64>
    where
        F: Fn(Neuron, i64) -> Option<u8>,
    {
        match self {
            TransitionModel::Markov(spec) => {
                let bit = past(i, -1)
                    .ok_or_else(|| Error::Contract("past configuration missing lag 1".into()))?;
                Ok(spec.transition(bit))
            }
            TransitionModel::Hawkes(spec) => spec.transition(i, past),
            TransitionModel::HawkesChain(rule) => rule.transition(i, past),
            TransitionModel::GlLinear { spec, cutoff } => spec.transition(i, *cutoff, past),
            TransitionModel::GlChain(rule) => rule.transition(i, past),
        }
    }

    /// Deepest lag the closed form reads.
    pub fn max_lag(&self) -> usize {
        match self {
            TransitionModel::Markov(_) => 1,
            TransitionModel::Hawkes(spec) => spec.max_lag() as usize,
            TransitionModel::HawkesChain(rule) => rule
                .weights
                .iter()
                .map(|w| w.1 as usize)
                .max()
                .unwrap_or(0),
            TransitionModel::GlLinear { cutoff, .. } => *cutoff,
            TransitionModel::GlChain(rule) => rule.cutoff,
        }
    }

    /// Largest `mu` such that `mu <= p_i(x) <= 1 - mu` everywhere.
    pub fn mu_band(&self) -> f64 {
        match self {
            TransitionModel::Markov(spec) => {
                let lo = spec.p1.min(spec.p0);
                let hi = spec.p1.max(spec.p0);
                lo.min(1.0 - hi)
            }
            TransitionModel::Hawkes(spec) => spec.mu_band(),
            TransitionModel::HawkesChain(rule) => {
                let plus: f64 = rule.weights.iter().map(|w| w.2.max(0.0)).sum();
                let minus: f64 = rule.weights.iter().map(|w| (-w.2).max(0.0)).sum();
                (rule.nu - minus).min(1.0 - rule.nu - plus)
            }
            TransitionModel::GlLinear { spec, .. } => spec.mu_band(),
            TransitionModel::GlChain(rule) => {
                let g_total = rule.g.total();
                let plus: f64 = rule.weights.iter().map(|w| w.1.max(0.0) * g_total).sum();
                let minus: f64 = rule.weights.iter().map(|w| (-w.1).max(0.0) * g_total).sum();
                (rule.nu - minus).min(1.0 - rule.nu - plus)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::mean_size;

    #[test]
    fn markov_decomposition_values() {
        let model = markov_model(0.3, 0.6).unwrap();
        let law = model.law(Neuron(0)).unwrap();
        assert!((law.dist.empty_weight() - 0.7).abs() < 1e-15);
        assert!((law.p_empty - 3.0 / 7.0).abs() < 1e-15);
        assert!((law.dist.atoms()[0].weight - 0.3).abs() < 1e-15);
        // kernel(x = 1) = 0, kernel(x = 0) = 1
        assert!(law.kernels[0].eval(&[1]).abs() < 1e-15);
        assert!((law.kernels[0].eval(&[0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn markov_degenerate() {
        assert!(matches!(
            markov_model(0.5, 0.5),
            Err(Error::DegenerateMarkov { .. })
        ));
        assert!(matches!(
            markov_model(1.0, 0.0),
            Err(Error::DegenerateMarkov { .. })
        ));
    }

    #[test]
    fn markov_reconstruction_identity() {
        let spec = MarkovSpec::new(0.3, 0.6).unwrap();
        let model = markov_model(0.3, 0.6).unwrap();
        let law = model.law(Neuron(0)).unwrap();
        for bit in [0u8, 1] {
            let mixture = law.transition(|_| bit);
            assert!((mixture - spec.transition(bit)).abs() < 1e-15);
        }
    }

    #[test]
    fn markov_identity_over_parameter_grid() {
        for i in 1..19 {
            for j in 1..19 {
                if i == j {
                    continue;
                }
                let (p1, p0) = (i as f64 / 20.0, j as f64 / 20.0);
                let model = markov_model(p1, p0).unwrap();
                let law = model.law(Neuron(0)).unwrap();
                for bit in [0u8, 1] {
                    let expect = if bit != 0 { p1 } else { p0 };
                    assert!(
                        (law.transition(|_| bit) - expect).abs() < 1e-12,
                        "p1 = {p1}, p0 = {p0}, bit = {bit}"
                    );
                }
            }
        }
    }

    #[test]
    fn hawkes_single_edge_values() {
        let spec = HawkesSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
            vec![Interaction {
                from: Neuron(1),
                to: Neuron(2),
                lag: 1,
                weight: 0.2,
            }],
        )
        .unwrap();
        let model = hawkes_model(&spec).unwrap();
        let law = model.law(Neuron(2)).unwrap();
        assert!((law.dist.empty_weight() - 0.8).abs() < 1e-15);
        assert!((law.p_empty - 0.625).abs() < 1e-15);
        assert_eq!(law.dist.atoms().len(), 1);
        assert_eq!(
            law.dist.atoms()[0].neighborhood.sites(),
            &[Site::new(Neuron(1), -1)]
        );
        assert_eq!(law.kernels[0], Kernel::Bit { bit: 0 });
        // Neuron 1 has no incoming edges: i.i.d. Bernoulli(nu).
        let law1 = model.law(Neuron(1)).unwrap();
        assert_eq!(law1.dist.empty_weight(), 1.0);
        assert_eq!(law1.p_empty, 0.5);
    }

    #[test]
    fn hawkes_transition_examples() {
        let spec = HawkesSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
            vec![Interaction {
                from: Neuron(1),
                to: Neuron(2),
                lag: 1,
                weight: 0.2,
            }],
        )
        .unwrap();
        let zeros = |_: Neuron, _: i64| Some(0u8);
        assert!((spec.transition(Neuron(2), zeros).unwrap() - 0.5).abs() < 1e-15);
        let spike = |j: Neuron, s: i64| Some(u8::from(j == Neuron(1) && s == -1));
        assert!((spec.transition(Neuron(2), spike).unwrap() - 0.7).abs() < 1e-15);
        assert!(spec.transition(Neuron(2), |_, _| None).is_err());
    }

    #[test]
    fn hawkes_mean_size_is_total_strength() {
        let spec = HawkesSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
            vec![
                Interaction {
                    from: Neuron(1),
                    to: Neuron(2),
                    lag: 1,
                    weight: 0.25,
                },
                Interaction {
                    from: Neuron(2),
                    to: Neuron(2),
                    lag: 2,
                    weight: -0.15,
                },
            ],
        )
        .unwrap();
        let model = hawkes_model(&spec).unwrap();
        let law = model.law(Neuron(2)).unwrap();
        assert!((mean_size(&law.dist) - 0.4).abs() < 1e-15);
        assert!(law
            .dist
            .atoms()
            .iter()
            .all(|a| a.neighborhood.cardinality() <= 1));
    }

    #[test]
    fn hawkes_overload_rejected() {
        // Sigma^+ + Sigma^- = 1.2 violates the strength bound.
        let res = HawkesSpec::new(
            vec![(Neuron(1), 0.5)],
            vec![
                Interaction {
                    from: Neuron(1),
                    to: Neuron(1),
                    lag: 1,
                    weight: 0.5,
                },
                Interaction {
                    from: Neuron(1),
                    to: Neuron(1),
                    lag: 2,
                    weight: -0.7,
                },
            ],
        );
        assert!(res.is_err());
    }

    #[test]
    fn hawkes_reconstruction_identity_random_pasts() {
        let spec = HawkesSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.4)],
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
                    lag: 3,
                    weight: -0.1,
                },
                Interaction {
                    from: Neuron(1),
                    to: Neuron(1),
                    lag: 2,
                    weight: 0.3,
                },
            ],
        )
        .unwrap();
        let model = hawkes_model(&spec).unwrap();
        let rng = crate::rng::SiteRng::new(99);
        for trial in 0..1000u64 {
            let bit = |j: Neuron, s: i64| {
                (rng.sequence(trial, (j.0 * 64 - s) as u64) < 0.5) as u8
            };
            for i in [Neuron(1), Neuron(2)] {
                let law = model.law(i).unwrap();
                let mixture = law.transition(|site| bit(site.neuron, site.time));
                let direct = spec.transition(i, |j, s| Some(bit(j, s))).unwrap();
                assert!(
                    (mixture - direct).abs() < 1e-12,
                    "neuron {i} trial {trial}: {mixture} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn gl_atom_structure() {
        let spec = GlLinearSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
            vec![(Neuron(1), Neuron(2), 0.3)],
            vec![(Neuron(1), LagSequence::Finite(vec![1.0]))],
        )
        .unwrap();
        let model = gl_linear_model(&spec, None).unwrap();
        let law = model.law(Neuron(2)).unwrap();
        assert_eq!(law.dist.empty_weight(), 0.7);
        assert_eq!(law.dist.atoms().len(), 1);
        let v = &law.dist.atoms()[0].neighborhood;
        assert_eq!(v.cardinality(), 2);
        assert_eq!(
            v.sites(),
            &[Site::new(Neuron(1), -1), Site::new(Neuron(2), -1)]
        );
        // W = 0 everywhere: empty weight 1.
        let trivial = GlLinearSpec::new(vec![(Neuron(1), 0.5)], vec![], vec![]).unwrap();
        let model = gl_linear_model(&trivial, None).unwrap();
        assert_eq!(model.law(Neuron(1)).unwrap().dist.empty_weight(), 1.0);
    }

    #[test]
    fn gl_reconstruction_identity_random_pasts() {
        let spec = GlLinearSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
            vec![(Neuron(1), Neuron(2), 0.25), (Neuron(2), Neuron(1), -0.2)],
            vec![
                (Neuron(1), LagSequence::Finite(vec![0.7, 0.3])),
                (Neuron(2), LagSequence::Finite(vec![1.0])),
            ],
        )
        .unwrap();
        let model = gl_linear_model(&spec, None).unwrap();
        let oracle = TransitionModel::gl(spec, None);
        let rng = crate::rng::SiteRng::new(7);
        for trial in 0..2000u64 {
            let bit = |j: Neuron, s: i64| {
                (rng.sequence(trial, (j.0 * 64 - s) as u64) < 0.5) as u8
            };
            for i in [Neuron(1), Neuron(2)] {
                let mixture = model
                    .law(i)
                    .unwrap()
                    .transition(|site| bit(site.neuron, site.time));
                let direct = oracle.prob(i, |j, s| Some(bit(j, s))).unwrap();
                assert!(
                    (mixture - direct).abs() < 1e-12,
                    "neuron {i} trial {trial}: mixture {mixture} vs direct {direct}"
                );
            }
        }
    }

    #[test]
    fn geometric_preset_mass_and_mean() {
        let weights = geometric_range_weights(0.75, 1e-12).unwrap();
        assert!((weights[0] - 0.75).abs() < 1e-15);
        assert!((weights[1] - 0.25 * 0.75).abs() < 1e-15);
        let mean: f64 = weights
            .iter()
            .enumerate()
            .map(|(l, w)| l as f64 * w)
            .sum();
        assert!((mean - 1.0 / 3.0).abs() < 1e-9, "mean {mean}");
    }

    #[test]
    fn poisson_preset_phi_below_one() {
        let weights = poisson_range_weights(0.5, 1e-12).unwrap();
        let kernels: Vec<Kernel> = (1..weights.len())
            .map(|_| Kernel::Majority { hi: 0.7, lo: 0.3 })
            .collect();
        let model = infinite_order_model(&weights, 0.5, kernels, 1e-10).unwrap();
        let law = model.law(Neuron(0)).unwrap();
        let phi = crate::decomp::phi(&law.dist, 0.1).unwrap();
        // Direct summation oracle of sum over l of l * exp(0.1 l) * w_l,
        // with the truncation residual folded into the last range as the
        // adapter does.
        let mut folded = weights.clone();
        let total: f64 = weights.iter().sum();
        *folded.last_mut().unwrap() += 1.0 - total;
        let oracle: f64 = folded
            .iter()
            .enumerate()
            .map(|(l, w)| l as f64 * (0.1 * l as f64).exp() * w)
            .sum();
        assert!((phi - oracle).abs() < 1e-12);
        assert!(phi < 1.0, "phi = {phi}");
    }

    #[test]
    fn infinite_order_trivial_and_truncation_error() {
        let model = infinite_order_model(&[1.0], 0.25, vec![], 1e-10).unwrap();
        let law = model.law(Neuron(0)).unwrap();
        assert_eq!(law.dist.empty_weight(), 1.0);
        assert!(matches!(
            infinite_order_model(&[0.5, 0.3], 0.5, vec![Kernel::Bit { bit: 0 }], 1e-10),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn nonlinear_bound_zero_weights() {
        let bound = gl_nonlinear_bound(
            &[vec![0.0]],
            &[LagSequence::Finite(vec![1.0])],
            2.0,
            &[vec![vec![0]]],
        )
        .unwrap();
        assert_eq!(bound.value, 0.0);
        assert!(bound.satisfied);
    }

    #[test]
    fn nonlinear_bound_matches_hand_sum() {
        // Two neurons, exponential g, J_0(l) grows to both neurons at l = 2.
        let g = LagSequence::Geometric {
            first: 0.5,
            ratio: 0.5,
        };
        let w = vec![vec![0.0, 0.1], vec![0.1, 0.0]];
        let sets = vec![
            vec![vec![0], vec![0, 1]],
            vec![vec![1], vec![0, 1]],
        ];
        let bound = gl_nonlinear_bound(&w, &[g.clone(), g.clone()], 1.0, &sets).unwrap();
        // Hand summation for i = 0 (symmetric in i):
        // l = 1: 1 * (1*1) * (|w01| * total(g)) since 1 is outside J(1)
        // l >= 2: l * (2l) * (|w01| * tail_l(g))
        let mut expect = 1.0 * 1.0 * (0.1 * g.total());
        for l in 2..200 {
            expect += (l as f64) * (2.0 * l as f64) * 0.1 * g.tail(l);
        }
        assert!(
            (bound.value - expect).abs() < 1e-10,
            "{} vs {}",
            bound.value,
            expect
        );
        assert_eq!(bound.threshold, 1.0);
    }

    #[test]
    fn nonlinear_bound_divergence_detected() {
        // Weight on a neuron that never joins the neighborhood: the
        // outside-set term repeats forever and the series diverges.
        let g = LagSequence::Geometric {
            first: 0.5,
            ratio: 0.5,
        };
        let w = vec![vec![0.0, 0.1], vec![0.0, 0.0]];
        let sets = vec![vec![vec![0]], vec![vec![1]]];
        assert!(matches!(
            gl_nonlinear_bound(&w, &[g.clone(), g], 1.0, &sets),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn gl_chain_identity_and_structure() {
        let g = LagSequence::Finite(vec![0.6, 0.4]);
        let model = gl_chain_model(0.5, vec![(-1, 0.3), (1, -0.1)], g.clone()).unwrap();
        let rule = GlChainRule::new(0.5, vec![(-1, 0.3), (1, -0.1)], g).unwrap();
        let law = model.law(Neuron(0)).unwrap();
        // Augmented neighborhoods: lag l atom has l + 1 sites.
        for atom in law.dist.atoms() {
            let depth = atom.neighborhood.time_depth() as usize;
            assert_eq!(atom.neighborhood.cardinality(), depth + 1);
        }
        // Mixture equals the closed form on random pasts over neurons
        // -1..=1 and lags 1..=2.
        let rng = crate::rng::SiteRng::new(3);
        for trial in 0..2000u64 {
            let bit =
                |j: Neuron, s: i64| (rng.sequence(trial, (j.0 * 64 - s + 640) as u64) < 0.5) as u8;
            let mixture = law.transition(|site| bit(site.neuron, site.time));
            let direct = rule.transition(Neuron(0), |j, s| Some(bit(j, s))).unwrap();
            assert!(
                (mixture - direct).abs() < 1e-12,
                "trial {trial}: {mixture} vs {direct}"
            );
        }
    }

    #[test]
    fn mu_band_values() {
        let spec = HawkesSpec::new(
            vec![(Neuron(1), 0.5), (Neuron(2), 0.5)],
            vec![Interaction {
                from: Neuron(1),
                to: Neuron(2),
                lag: 1,
                weight: 0.2,
            }],
        )
        .unwrap();
        assert!((spec.mu_band() - 0.3).abs() < 1e-15);
        let markov = TransitionModel::Markov(MarkovSpec::new(0.3, 0.6).unwrap());
        assert!((markov.mu_band() - 0.3).abs() < 1e-15);
    }
}
