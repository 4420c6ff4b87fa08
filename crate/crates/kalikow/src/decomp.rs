//! Space-time decompositions of transition probabilities.
//!
//! A model assigns to every neuron `i` a probability distribution
//! `lambda_i` over finite space-time neighborhoods (sets of
//! `(neuron, negative lag)` sites) together with one cylindrical kernel per
//! neighborhood. The transition probability of the chain is the mixture
//!
//! ```text
//! p_i(x) = lambda_i(empty) * p_i_empty
//!        + sum over atoms v of lambda_i(v) * kernel_v(x restricted to v)
//! ```
//!
//! Sparsity of the mixture is quantified by the mean neighborhood size
//! [`mean_size`] and its exponential refinement [`phi`]; both must be below
//! one for the backward genealogies to die out and for the perfect sampler
//! in [`crate::sim`] to terminate.

use crate::rng::{SiteRng, Stream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Opaque, totally ordered neuron identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Neuron(pub i64);

impl std::fmt::Display for Neuron {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A `(neuron, time)` position. Inside neighborhoods times are relative
/// and must be <= -1; the simulator also uses absolute-time sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site {
    pub neuron: Neuron,
    pub time: i64,
}

impl Site {
    pub fn new(neuron: Neuron, time: i64) -> Self {
        Site { neuron, time }
    }

    /// Shift the (relative) site to absolute time `t`.
    #[inline]
    pub fn shifted(self, t: i64) -> Site {
        Site {
            neuron: self.neuron,
            time: self.time + t,
        }
    }
}

/// A finite set of relative sites, ordered and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    sites: Vec<Site>,
    time_depth: i64,
}

impl Neighborhood {
    /// Build a neighborhood from relative sites. Sites are sorted; duplicates
    /// and non-negative times are rejected.
    pub fn new(mut sites: Vec<Site>) -> Result<Self> {
        sites.sort_unstable();
        for pair in sites.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::InvalidModel(format!(
                    "duplicate site ({}, {}) in neighborhood",
                    pair[0].neuron, pair[0].time
                )));
            }
        }
        if let Some(site) = sites.iter().find(|s| s.time > -1) {
            return Err(Error::InvalidModel(format!(
                "neighborhood site ({}, {}) must have time <= -1",
                site.neuron, site.time
            )));
        }
        let time_depth = sites.iter().map(|s| -s.time).max().unwrap_or(0);
        Ok(Neighborhood { sites, time_depth })
    }

    pub fn empty() -> Self {
        Neighborhood {
            sites: Vec::new(),
            time_depth: 0,
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn cardinality(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Maximal lag `T(v)`; zero for the empty neighborhood.
    pub fn time_depth(&self) -> i64 {
        self.time_depth
    }
}

/// One weighted neighborhood of a [`NeighborhoodDistribution`].
#[derive(Debug, Clone)]
pub struct Atom {
    pub neighborhood: Neighborhood,
    pub weight: f64,
}

/// Distribution `lambda_i` over neighborhoods. The atom order is part of
/// the definition: it fixes the CDF used by [`sample_neighborhood`] and
/// hence the exact draws of the simulator (not their distribution).
#[derive(Debug, Clone)]
pub struct NeighborhoodDistribution {
    empty_weight: f64,
    atoms: Vec<Atom>,
    cdf: Vec<f64>,
}

/// Tolerance on `empty_weight + sum of atom weights = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl NeighborhoodDistribution {
    /// Build and validate a distribution. Atoms must be non-empty
    /// neighborhoods; weights must be non-negative and sum (together with
    /// `empty_weight`) to one within [`WEIGHT_SUM_TOLERANCE`].
    pub fn new(empty_weight: f64, atoms: Vec<Atom>) -> Result<Self> {
        if !(0.0..=1.0).contains(&empty_weight) {
            return Err(Error::InvalidModel(format!(
                "empty-neighborhood weight {empty_weight} outside [0, 1]"
            )));
        }
        let mut sum = empty_weight;
        for (k, atom) in atoms.iter().enumerate() {
            if atom.weight < 0.0 || !atom.weight.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "atom {k} has invalid weight {}",
                    atom.weight
                )));
            }
            if atom.neighborhood.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "atom {k} is the empty neighborhood; use empty_weight instead"
                )));
            }
            sum += atom.weight;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOLERANCE:e}"
            )));
        }
        Ok(Self::new_unchecked(empty_weight, atoms))
    }

    /// Build without the weight-sum check. Used by [`validate`] test fixtures
    /// and by adapters that record truncation residuals instead of failing.
    pub fn new_unchecked(empty_weight: f64, atoms: Vec<Atom>) -> Self {
        let mut cdf = Vec::with_capacity(atoms.len() + 1);
        let mut acc = empty_weight;
        cdf.push(acc);
        for atom in &atoms {
            acc += atom.weight;
            cdf.push(acc);
        }
        NeighborhoodDistribution {
            empty_weight,
            atoms,
            cdf,
        }
    }

    pub fn empty_weight(&self) -> f64 {
        self.empty_weight
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `empty_weight + sum of atom weights - 1`.
    pub fn weight_sum_residual(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(self.empty_weight) - 1.0
    }
}

/// Mean neighborhood size `sum over v of |v| * lambda(v)`.
pub fn mean_size(dist: &NeighborhoodDistribution) -> f64 {
    dist.atoms
        .iter()
        .map(|a| a.neighborhood.cardinality() as f64 * a.weight)
        .sum()
}

/// Exponentially weighted mean size
/// `phi(theta) = sum over v of |v| * exp(theta * T(v)) * lambda(v)`.
///
/// Errors when the sum overflows, i.e. `theta` is too large for the time
/// depths present in the distribution.
pub fn phi(dist: &NeighborhoodDistribution, theta: f64) -> Result<f64> {
    if theta <= 0.0 {
        return Err(Error::Contract(format!("phi requires theta > 0, got {theta}")));
    }
    let mut sum = 0.0;
    for atom in &dist.atoms {
        sum += atom.neighborhood.cardinality() as f64
            * (theta * atom.neighborhood.time_depth() as f64).exp()
            * atom.weight;
    }
    if !sum.is_finite() {
        return Err(Error::ThetaOverflow { theta });
    }
    Ok(sum)
}

/// CDF inversion over the fixed atom order: `None` is the empty
/// neighborhood. Deterministic given `u`.
pub fn sample_neighborhood_index(dist: &NeighborhoodDistribution, u: f64) -> Result<Option<usize>> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Contract(format!("uniform variate {u} outside [0, 1]")));
    }
    // First n with F(n) >= u; F(0) is the empty neighborhood.
    let idx = dist.cdf.partition_point(|&c| c < u);
    if idx == 0 {
        return Ok(None);
    }
    if idx > dist.atoms.len() {
        // u above the last CDF value (weight-sum rounding): last atom, or
        // the empty neighborhood when there are no atoms.
        return Ok(if dist.atoms.is_empty() {
            None
        } else {
            Some(dist.atoms.len() - 1)
        });
    }
    Ok(Some(idx - 1))
}

/// CDF inversion returning the neighborhood itself (`None` = empty).
pub fn sample_neighborhood(
    dist: &NeighborhoodDistribution,
    u: f64,
) -> Result<Option<&Neighborhood>> {
    Ok(sample_neighborhood_index(dist, u)?.map(|k| &dist.atoms[k].neighborhood))
}

/// Cylindrical kernel: a probability read off the bits of one
/// neighborhood. `x` is aligned with the neighborhood's site order, so the
/// kernel cannot read anything outside its neighborhood by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// Constant probability.
    Const(f64),
    /// Probability table indexed by the bit pattern of `x`
    /// (site 0 is the least significant bit). Length must be `2^|v|`.
    Table(Vec<f64>),
    /// The bit at site index `bit` (0 or 1).
    Bit { bit: usize },
    /// One minus the bit at site index `bit`.
    NotBit { bit: usize },
    /// `x[bit] * prod over g in gate of (1 - x[g])`.
    GatedBit { bit: usize, gate: Vec<usize> },
    /// `1 - x[bit] * prod over g in gate of (1 - x[g])`.
    GatedBitComplement { bit: usize, gate: Vec<usize> },
    /// `hi` when strictly more than half the bits are set, else `lo`.
    Majority { hi: f64, lo: f64 },
}

impl Kernel {
    /// Evaluate on the restriction `x` (one 0/1 byte per neighborhood site).
    #[inline]
    pub fn eval(&self, x: &[u8]) -> f64 {
        match self {
            Kernel::Const(p) => *p,
            Kernel::Table(probs) => {
                let mut idx = 0usize;
                for (k, &bit) in x.iter().enumerate() {
                    idx |= (bit as usize) << k;
                }
                probs[idx]
            }
            Kernel::Bit { bit } => x[*bit] as f64,
            Kernel::NotBit { bit } => 1.0 - x[*bit] as f64,
            Kernel::GatedBit { bit, gate } => {
                if x[*bit] == 0 || gate.iter().any(|&g| x[g] != 0) {
                    0.0
                } else {
                    1.0
                }
            }
            Kernel::GatedBitComplement { bit, gate } => {
                if x[*bit] == 0 || gate.iter().any(|&g| x[g] != 0) {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Majority { hi, lo } => {
                let count = x.iter().filter(|&&b| b != 0).count();
                if 2 * count > x.len() {
                    *hi
                } else {
                    *lo
                }
            }
        }
    }

    /// Check the kernel against the arity of its neighborhood and that all
    /// reachable values lie in `[0, 1]`.
    pub fn validate(&self, arity: usize) -> Result<()> {
        let in_unit = |p: f64| (0.0..=1.0).contains(&p) && p.is_finite();
        match self {
            Kernel::Const(p) => {
                if !in_unit(*p) {
                    return Err(Error::InvalidModel(format!("kernel value {p} outside [0, 1]")));
                }
            }
            Kernel::Table(probs) => {
                if arity >= usize::BITS as usize || probs.len() != 1usize << arity {
                    return Err(Error::InvalidModel(format!(
                        "table kernel has {} entries, neighborhood of size {arity} needs {}",
                        probs.len(),
                        1usize << arity.min(62)
                    )));
                }
                if let Some(p) = probs.iter().find(|p| !in_unit(**p)) {
                    return Err(Error::InvalidModel(format!("kernel value {p} outside [0, 1]")));
                }
            }
            Kernel::Bit { bit } | Kernel::NotBit { bit } => {
                if *bit >= arity {
                    return Err(Error::InvalidModel(format!(
                        "kernel bit index {bit} out of range for neighborhood of size {arity}"
                    )));
                }
            }
            Kernel::GatedBit { bit, gate } | Kernel::GatedBitComplement { bit, gate } => {
                if *bit >= arity || gate.iter().any(|&g| g >= arity) {
                    return Err(Error::InvalidModel(format!(
                        "kernel gate indices out of range for neighborhood of size {arity}"
                    )));
                }
            }
            Kernel::Majority { hi, lo } => {
                if !in_unit(*hi) || !in_unit(*lo) {
                    return Err(Error::InvalidModel(
                        "majority kernel values outside [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The full local law of one neuron: neighborhood distribution, the
/// empty-neighborhood spike probability and one kernel per atom.
#[derive(Debug, Clone)]
pub struct NeuronLaw {
    pub dist: NeighborhoodDistribution,
    pub p_empty: f64,
    pub kernels: Vec<Kernel>,
}

impl NeuronLaw {
    pub fn new(dist: NeighborhoodDistribution, p_empty: f64, kernels: Vec<Kernel>) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_empty) {
            return Err(Error::InvalidModel(format!(
                "empty-neighborhood probability {p_empty} outside [0, 1]"
            )));
        }
        if kernels.len() != dist.atoms().len() {
            return Err(Error::InvalidModel(format!(
                "{} kernels for {} atoms",
                kernels.len(),
                dist.atoms().len()
            )));
        }
        for (atom, kernel) in dist.atoms().iter().zip(&kernels) {
            kernel.validate(atom.neighborhood.cardinality())?;
        }
        Ok(NeuronLaw {
            dist,
            p_empty,
            kernels,
        })
    }

    /// Mixture transition probability for an arbitrary past configuration.
    /// `past` maps a relative site to its bit.
    pub fn transition<F: Fn(Site) -> u8>(&self, past: F) -> f64 {
        let mut p = self.dist.empty_weight() * self.p_empty;
        let mut buf = Vec::new();
        for (atom, kernel) in self.dist.atoms().iter().zip(&self.kernels) {
            if atom.weight == 0.0 {
                continue;
            }
            buf.clear();
            buf.extend(atom.neighborhood.sites().iter().map(|&s| past(s)));
            p += atom.weight * kernel.eval(&buf);
        }
        p
    }

    /// Union of all atom sites, sorted and deduplicated.
    pub fn support(&self) -> Vec<Site> {
        let mut sites: Vec<Site> = self
            .dist
            .atoms()
            .iter()
            .flat_map(|a| a.neighborhood.sites().iter().copied())
            .collect();
        sites.sort_unstable();
        sites.dedup();
        sites
    }
}

/// Generates neuron laws on demand for translation-invariant models on an
/// infinite network; the simulator only ever touches finitely many neurons.
pub trait LawRule: Send + Sync {
    fn law(&self, neuron: Neuron) -> NeuronLaw;

    /// Neurons whose laws are representative of the whole network
    /// (translation invariance makes one enough).
    fn representatives(&self) -> Vec<Neuron> {
        vec![Neuron(0)]
    }

    fn describe(&self) -> String;
}

/// Record of mass dropped when truncating an infinite family of atoms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationRecord {
    pub context: String,
    pub neglected_mass: f64,
    pub folded_into_last: bool,
}

enum Source {
    Explicit(BTreeMap<Neuron, Arc<NeuronLaw>>),
    Homogeneous(Arc<dyn LawRule>),
}

impl std::fmt::Debug for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Explicit(laws) => write!(f, "Explicit({} neurons)", laws.len()),
            Source::Homogeneous(rule) => write!(f, "Homogeneous({})", rule.describe()),
        }
    }
}

/// A space-time decomposition over a finite neuron set, or a lazy rule on
/// an infinite homogeneous network. Immutable after construction.
#[derive(Debug)]
pub struct KalikowModel {
    source: Source,
    truncations: Vec<TruncationRecord>,
}

impl KalikowModel {
    /// Explicit model over a finite neuron set. Every neuron referenced by
    /// a neighborhood must itself carry a law.
    pub fn explicit(laws: BTreeMap<Neuron, NeuronLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidModel("model declares no neurons".into()));
        }
        for (neuron, law) in &laws {
            for atom in law.dist.atoms() {
                for site in atom.neighborhood.sites() {
                    if !laws.contains_key(&site.neuron) {
                        return Err(Error::InvalidModel(format!(
                            "neuron {neuron} references undeclared neuron {}",
                            site.neuron
                        )));
                    }
                }
            }
        }
        Ok(KalikowModel {
            source: Source::Explicit(laws.into_iter().map(|(n, l)| (n, Arc::new(l))).collect()),
            truncations: Vec::new(),
        })
    }

    /// Lazily generated translation-invariant model.
    pub fn homogeneous(rule: Arc<dyn LawRule>) -> Self {
        KalikowModel {
            source: Source::Homogeneous(rule),
            truncations: Vec::new(),
        }
    }

    pub fn with_truncations(mut self, records: Vec<TruncationRecord>) -> Self {
        self.truncations = records;
        self
    }

    pub fn truncations(&self) -> &[TruncationRecord] {
        &self.truncations
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.source, Source::Homogeneous(_))
    }

    /// Declared neurons of an explicit model; `None` for homogeneous ones.
    pub fn neurons(&self) -> Option<Vec<Neuron>> {
        match &self.source {
            Source::Explicit(laws) => Some(laws.keys().copied().collect()),
            Source::Homogeneous(_) => None,
        }
    }

    /// The local law of `neuron`.
    pub fn law(&self, neuron: Neuron) -> Result<Arc<NeuronLaw>> {
        match &self.source {
            Source::Explicit(laws) => laws.get(&neuron).cloned().ok_or_else(|| {
                Error::InvalidModel(format!("no law declared for neuron {neuron}"))
            }),
            Source::Homogeneous(rule) => Ok(Arc::new(rule.law(neuron))),
        }
    }

    /// Neurons whose laws witness the suprema in the validators.
    pub fn representatives(&self) -> Vec<Neuron> {
        match &self.source {
            Source::Explicit(laws) => laws.keys().copied().collect(),
            Source::Homogeneous(rule) => rule.representatives(),
        }
    }

    /// `sup_i lambda_i(empty)` over representative neurons.
    pub fn sup_empty_weight(&self) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for neuron in self.representatives() {
            sup = sup.max(self.law(neuron)?.dist.empty_weight());
        }
        Ok(sup)
    }

    /// `sup_i mean_size(lambda_i)` over representative neurons.
    pub fn sup_mean_size(&self) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for neuron in self.representatives() {
            sup = sup.max(mean_size(&self.law(neuron)?.dist));
        }
        Ok(sup)
    }

    /// `sup_i phi_i(theta)` over representative neurons.
    pub fn sup_phi(&self, theta: f64) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for neuron in self.representatives() {
            sup = sup.max(phi(&self.law(neuron)?.dist, theta)?);
        }
        Ok(sup)
    }
}

/// Knobs for [`validate`].
#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Exhaustively enumerate configurations when the union of atom sites
    /// has at most this many bits.
    pub max_exhaustive_bits: usize,
    /// Number of random probe configurations beyond the exhaustive cap.
    pub random_probes: usize,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            max_exhaustive_bits: 14,
            random_probes: 512,
            seed: 0,
        }
    }
}

/// Per-neuron validation results.
#[derive(Debug, Clone, Serialize)]
pub struct NeuronValidation {
    pub neuron: Neuron,
    pub weight_sum_residual: f64,
    pub mean_size: f64,
    pub phi: f64,
    /// Extremes of the mixture transition over probed configurations.
    pub min_transition: f64,
    pub max_transition: f64,
    pub kernel_range_ok: bool,
    /// Whether the probe enumerated every cylindrical configuration.
    pub exhaustive: bool,
}

/// Outcome of the standing-assumption checks. Failures are recorded, never
/// thrown.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub theta: f64,
    pub mu: f64,
    pub per_neuron: Vec<NeuronValidation>,
    pub sup_mean_size: f64,
    pub mean_size_ok: bool,
    pub sup_phi: f64,
    pub phi_ok: bool,
    pub mu_band_ok: bool,
    pub kernel_range_ok: bool,
    pub normalization_ok: bool,
    pub truncations: Vec<TruncationRecord>,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.mean_size_ok
            && self.phi_ok
            && self.mu_band_ok
            && self.kernel_range_ok
            && self.normalization_ok
    }
}

/// Check the model's standing assumptions: normalization and kernel range
/// of the decomposition, sparsity through `sup mean_size < 1` and
/// `sup phi(theta) < 1`, and the randomness band
/// `mu <= p_i(x) <= 1 - mu` over probed configurations.
pub fn validate(
    model: &KalikowModel,
    theta: f64,
    mu: f64,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let rng = SiteRng::new(opts.seed);
    let mut per_neuron = Vec::new();
    let mut sup_mean = 0.0f64;
    let mut sup_phi = 0.0f64;
    let mut mu_band_ok = true;
    let mut kernels_ok = true;
    let mut normalization_ok = true;

    for neuron in model.representatives() {
        let law = model.law(neuron)?;
        let residual = law.dist.weight_sum_residual();
        if residual.abs() > WEIGHT_SUM_TOLERANCE {
            normalization_ok = false;
        }
        let m_bar = mean_size(&law.dist);
        let phi_val = match phi(&law.dist, theta) {
            Ok(v) => v,
            Err(Error::ThetaOverflow { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        sup_mean = sup_mean.max(m_bar);
        sup_phi = sup_phi.max(phi_val);

        let mut law_kernels_ok = true;
        for (atom, kernel) in law.dist.atoms().iter().zip(&law.kernels) {
            if kernel.validate(atom.neighborhood.cardinality()).is_err() {
                law_kernels_ok = false;
            }
        }

        // Probe the mixture over configurations of the union support.
        let support = law.support();
        let bits = support.len();
        let exhaustive = bits <= opts.max_exhaustive_bits;
        let mut min_p = f64::INFINITY;
        let mut max_p = f64::NEG_INFINITY;
        let mut probe = |pattern: &dyn Fn(usize) -> u8| {
            let p = law.transition(|site| {
                support
                    .binary_search(&site)
                    .map(pattern)
                    .unwrap_or(0)
            });
            min_p = min_p.min(p);
            max_p = max_p.max(p);
            for (atom, kernel) in law.dist.atoms().iter().zip(&law.kernels) {
                let x: Vec<u8> = atom
                    .neighborhood
                    .sites()
                    .iter()
                    .map(|s| support.binary_search(s).map(pattern).unwrap_or(0))
                    .collect();
                let v = kernel.eval(&x);
                if !(0.0..=1.0).contains(&v) {
                    law_kernels_ok = false;
                }
            }
        };
        if exhaustive {
            for mask in 0u64..(1u64 << bits) {
                probe(&|k| ((mask >> k) & 1) as u8);
            }
        } else {
            for probe_idx in 0..opts.random_probes {
                let mask_bits: Vec<u8> = (0..bits)
                    .map(|k| {
                        (rng.uniform(Stream::Aux, neuron, (probe_idx * bits + k) as i64) < 0.5)
                            as u8
                    })
                    .collect();
                probe(&|k| mask_bits[k]);
            }
        }
        if bits == 0 {
            // No atoms: the transition is the constant empty route.
            let p = law.dist.empty_weight() * law.p_empty;
            min_p = p;
            max_p = p;
        }
        if min_p < mu - 1e-12 || max_p > 1.0 - mu + 1e-12 {
            mu_band_ok = false;
        }
        if !law_kernels_ok {
            kernels_ok = false;
        }
        per_neuron.push(NeuronValidation {
            neuron,
            weight_sum_residual: residual,
            mean_size: m_bar,
            phi: phi_val,
            min_transition: min_p,
            max_transition: max_p,
            kernel_range_ok: law_kernels_ok,
            exhaustive,
        });
    }

    Ok(ValidationReport {
        theta,
        mu,
        per_neuron,
        sup_mean_size: sup_mean,
        mean_size_ok: sup_mean < 1.0,
        sup_phi,
        phi_ok: sup_phi < 1.0,
        mu_band_ok,
        kernel_range_ok: kernels_ok,
        normalization_ok,
        truncations: model.truncations().to_vec(),
    })
}
