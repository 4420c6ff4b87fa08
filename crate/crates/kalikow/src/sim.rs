//! Perfect simulation of the stationary chain.
//!
//! To sample the bit at a site, the sampler first resolves the site's
//! backward genealogy (drawing one neighborhood per visited site from the
//! genealogy uniform field), then walks forward in time through the
//! resolved sites applying the transition kernels against the forward
//! uniform field. Both fields are counter-based ([`crate::rng`]), so a site
//! revisited anywhere in a window reuses its draws and overlapping
//! genealogies agree automatically.

use crate::decomp::{
    sample_neighborhood_index, KalikowModel, Neighborhood, Neuron, NeuronLaw, Site,
};
use crate::rng::{SiteHashMap, SiteHashSet, SiteRng, Stream};
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// Sampler knobs.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Hard cap on sites visited while resolving one genealogy. A
    /// subcritical model stays far below it; a misconfigured one turns
    /// into a diagnosable error instead of an endless walk.
    pub genealogy_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            genealogy_cap: 1_000_000,
        }
    }
}

/// Per-use cache of neuron laws; homogeneous models generate laws on
/// demand, so simulation paths never regenerate one per site.
struct LawCache<'m> {
    model: &'m KalikowModel,
    map: HashMap<Neuron, Arc<NeuronLaw>, crate::rng::FastHasherBuilder>,
}

impl<'m> LawCache<'m> {
    fn new(model: &'m KalikowModel) -> Self {
        LawCache {
            model,
            map: HashMap::default(),
        }
    }

    fn law(&mut self, neuron: Neuron) -> Result<Arc<NeuronLaw>> {
        if let Some(law) = self.map.get(&neuron) {
            return Ok(law.clone());
        }
        let law = self.model.law(neuron)?;
        self.map.insert(neuron, law.clone());
        Ok(law)
    }
}

/// Draw the neighborhood of `site` from the genealogy field
/// (`None` = empty neighborhood). Pure in `(rng, site)`.
fn draw_atom(law: &NeuronLaw, rng: &SiteRng, site: Site) -> Result<Option<usize>> {
    let u = rng.site_uniform(Stream::Genealogy, site);
    sample_neighborhood_index(&law.dist, u)
}

/// Backward genealogy of one site: the generations
/// `A^1, ..., A^{N-1}` (the non-empty ones), the generation count `N` and
/// the time length `t - min time reached` (zero for an empty genealogy).
#[derive(Debug, Clone)]
pub struct GenealogyRecord {
    pub generations: Vec<Vec<Site>>,
    pub n_generations: usize,
    pub time_length: i64,
}

impl GenealogyRecord {
    pub fn total_sites(&self) -> usize {
        self.generations.iter().map(|g| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }
}

/// Build the genealogy of `site` generation by generation.
pub fn build_genealogy(
    model: &KalikowModel,
    site: Site,
    rng: &SiteRng,
    opts: &SimOptions,
) -> Result<GenealogyRecord> {
    let mut laws = LawCache::new(model);
    let mut visited: SiteHashSet = SiteHashSet::default();
    let mut generations: Vec<Vec<Site>> = Vec::new();
    let mut current: Vec<Site> = Vec::new();

    let law = laws.law(site.neuron)?;
    if let Some(atom) = draw_atom(&law, rng, site)? {
        for s in law.dist.atoms()[atom].neighborhood.sites() {
            let abs = s.shifted(site.time);
            if visited.insert(abs) {
                current.push(abs);
            }
        }
    }
    let mut n_generations = 1;
    let mut min_time = site.time;
    while !current.is_empty() {
        if visited.len() > opts.genealogy_cap {
            return Err(Error::RunawayGenealogy {
                cap: opts.genealogy_cap,
            });
        }
        min_time = current.iter().map(|s| s.time).min().unwrap().min(min_time);
        let mut next: Vec<Site> = Vec::new();
        for &parent in &current {
            let law = laws.law(parent.neuron)?;
            if let Some(atom) = draw_atom(&law, rng, parent)? {
                for s in law.dist.atoms()[atom].neighborhood.sites() {
                    let abs = s.shifted(parent.time);
                    if visited.insert(abs) {
                        next.push(abs);
                    }
                }
            }
        }
        generations.push(std::mem::take(&mut current));
        current = next;
        n_generations += 1;
    }
    let time_length = if generations.is_empty() {
        0
    } else {
        site.time - min_time
    };
    Ok(GenealogyRecord {
        generations,
        n_generations,
        time_length,
    })
}

/// Shared sampling state for one consistent realization: resolved bits
/// plus the law cache. Confined to one worker; distinct windows or
/// replicas use distinct states.
pub struct WindowState<'m> {
    laws: LawCache<'m>,
    bits: SiteHashMap<u8>,
    stack: Vec<Frame>,
    xbuf: Vec<u8>,
}

struct Frame {
    site: Site,
    law: Arc<NeuronLaw>,
    /// Atom index drawn for this site; `None` is the empty neighborhood.
    atom: Option<usize>,
    next_child: usize,
}

impl Frame {
    fn neighborhood(&self) -> Option<&Neighborhood> {
        self.atom.map(|k| &self.law.dist.atoms()[k].neighborhood)
    }
}

impl<'m> WindowState<'m> {
    pub fn new(model: &'m KalikowModel) -> Self {
        WindowState {
            laws: LawCache::new(model),
            bits: SiteHashMap::default(),
            stack: Vec::new(),
            xbuf: Vec::new(),
        }
    }

    /// Bits resolved so far (for diagnostics).
    pub fn resolved(&self) -> usize {
        self.bits.len()
    }

    fn push_frame(&mut self, site: Site, rng: &SiteRng) -> Result<()> {
        let law = self.laws.law(site.neuron)?;
        let atom = draw_atom(&law, rng, site)?;
        self.stack.push(Frame {
            site,
            law,
            atom,
            next_child: 0,
        });
        Ok(())
    }

    /// Resolve the bit at `site`, reusing every bit already resolved in
    /// this state.
    pub fn sample_site(&mut self, site: Site, rng: &SiteRng, opts: &SimOptions) -> Result<u8> {
        if let Some(&bit) = self.bits.get(&site) {
            return Ok(bit);
        }
        debug_assert!(self.stack.is_empty());
        self.push_frame(site, rng)?;
        let mut fresh_sites = 1usize;
        while let Some(frame) = self.stack.last() {
            // Descend into the next unresolved dependency, if any.
            let child = frame.neighborhood().and_then(|v| {
                v.sites()[frame.next_child..]
                    .iter()
                    .map(|s| s.shifted(frame.site.time))
                    .find(|abs| !self.bits.contains_key(abs))
            });
            if let Some(child) = child {
                // Fast-forward past the children that were already done.
                let frame = self.stack.last_mut().unwrap();
                while frame.neighborhood().unwrap().sites()[frame.next_child]
                    .shifted(frame.site.time)
                    != child
                {
                    frame.next_child += 1;
                }
                frame.next_child += 1;
                fresh_sites += 1;
                if fresh_sites > opts.genealogy_cap {
                    self.stack.clear();
                    return Err(Error::RunawayGenealogy {
                        cap: opts.genealogy_cap,
                    });
                }
                self.push_frame(child, rng)?;
                continue;
            }
            // All dependencies resolved: apply the forward draw.
            let frame = self.stack.pop().unwrap();
            let p = match frame.atom {
                None => frame.law.p_empty,
                Some(atom) => {
                    let v = &frame.law.dist.atoms()[atom].neighborhood;
                    self.xbuf.clear();
                    for s in v.sites() {
                        let abs = s.shifted(frame.site.time);
                        self.xbuf.push(self.bits[&abs]);
                    }
                    frame.law.kernels[atom].eval(&self.xbuf)
                }
            };
            let bit = u8::from(rng.site_uniform(Stream::Forward, frame.site) <= p);
            self.bits.insert(frame.site, bit);
        }
        Ok(self.bits[&site])
    }
}

/// Exact draw of the bit at one site from the stationary law.
pub fn perfect_sample(
    model: &KalikowModel,
    site: Site,
    rng: &SiteRng,
    opts: &SimOptions,
) -> Result<u8> {
    WindowState::new(model).sample_site(site, rng, opts)
}

/// One exactly-stationary realization over `F x {-(m-1), ..., T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSample {
    neurons: Vec<Neuron>,
    m: usize,
    t_horizon: i64,
    /// Row-major by time: `bits[(t + m - 1) * |F| + j]`.
    bits: Vec<u8>,
    seed: u64,
}

impl SpikeSample {
    pub fn from_bits(
        neurons: Vec<Neuron>,
        m: usize,
        t_horizon: i64,
        bits: Vec<u8>,
        seed: u64,
    ) -> Result<Self> {
        if neurons.is_empty() {
            return Err(Error::Contract("sample needs at least one neuron".into()));
        }
        if neurons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract(
                "sample neurons must be strictly increasing".into(),
            ));
        }
        if m < 1 || t_horizon <= m as i64 {
            return Err(Error::Contract(format!(
                "need m >= 1 and T > m, got m = {m}, T = {t_horizon}"
            )));
        }
        let rows = (t_horizon + m as i64) as usize;
        if bits.len() != rows * neurons.len() {
            return Err(Error::Contract(format!(
                "expected {} bits, got {}",
                rows * neurons.len(),
                bits.len()
            )));
        }
        if bits.iter().any(|b| *b > 1) {
            return Err(Error::Contract("sample bits must be 0 or 1".into()));
        }
        Ok(SpikeSample {
            neurons,
            m,
            t_horizon,
            bits,
            seed,
        })
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn past_depth(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> i64 {
        self.t_horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neuron_index(&self, neuron: Neuron) -> Option<usize> {
        self.neurons.binary_search(&neuron).ok()
    }

    /// Earliest retained time, `-(m - 1)`.
    pub fn min_time(&self) -> i64 {
        -(self.m as i64) + 1
    }

    #[inline]
    pub fn bit(&self, neuron_idx: usize, time: i64) -> u8 {
        debug_assert!(time >= self.min_time() && time <= self.t_horizon);
        self.bits[(time + self.m as i64 - 1) as usize * self.neurons.len() + neuron_idx]
    }

    /// Bit lookup by neuron id; `None` outside the retained window.
    pub fn bit_at(&self, neuron: Neuron, time: i64) -> Option<u8> {
        if time < self.min_time() || time > self.t_horizon {
            return None;
        }
        self.neuron_index(neuron).map(|j| self.bit(j, time))
    }

    pub fn raw_bits(&self) -> &[u8] {
        &self.bits
    }

    /// Spike rate of one neuron over `1..=T`.
    pub fn rate(&self, neuron_idx: usize) -> f64 {
        let mut count = 0u64;
        for t in 1..=self.t_horizon {
            count += self.bit(neuron_idx, t) as u64;
        }
        count as f64 / self.t_horizon as f64
    }
}

/// Perfect-sample every site of `F x {-(m-1), ..., T}` with shared
/// memoization: one consistent stationary realization, bit-identical for a
/// given seed.
pub fn sample_window(
    model: &KalikowModel,
    f: &[Neuron],
    m: usize,
    t_horizon: i64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SpikeSample> {
    let mut neurons = f.to_vec();
    neurons.sort_unstable();
    neurons.dedup();
    if neurons.len() != f.len() {
        return Err(Error::Contract("duplicate neurons in F".into()));
    }
    if m < 1 || t_horizon <= m as i64 {
        return Err(Error::Contract(format!(
            "need m >= 1 and T > m, got m = {m}, T = {t_horizon}"
        )));
    }
    let rng = SiteRng::new(seed);
    let mut state = WindowState::new(model);
    let rows = (t_horizon + m as i64) as usize;
    let mut bits = Vec::with_capacity(rows * neurons.len());
    for time in (1 - (m as i64))..=t_horizon {
        for &neuron in &neurons {
            bits.push(state.sample_site(Site::new(neuron, time), &rng, opts)?);
        }
    }
    SpikeSample::from_bits(neurons, m, t_horizon, bits, seed)
}

/// Synthetic window of i.i.d. Bernoulli(`p`) bits (reference measure for
/// the expected-Gram diagnostics).
pub fn synthetic_bernoulli(
    f: &[Neuron],
    m: usize,
    t_horizon: i64,
    p: f64,
    seed: u64,
) -> Result<SpikeSample> {
    let rng = SiteRng::new(seed);
    let mut neurons = f.to_vec();
    neurons.sort_unstable();
    neurons.dedup();
    let rows = (t_horizon + m as i64) as usize;
    let mut bits = Vec::with_capacity(rows * neurons.len());
    for time in (1 - (m as i64))..=t_horizon {
        for &neuron in &neurons {
            bits.push(u8::from(rng.uniform(Stream::Aux, neuron, time) < p));
        }
    }
    SpikeSample::from_bits(neurons, m, t_horizon, bits, seed)
}

// ---------------------------------------------------------------------------
// Genealogy statistics
// ---------------------------------------------------------------------------

/// One row of [`TailStats`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct TailRow {
    pub ell: usize,
    pub count: u64,
    pub empirical: f64,
    pub bound: f64,
    /// Binomial noise scale at the bound.
    pub sigma: f64,
    pub violation: bool,
}

/// Empirical generation-count tails against the branching bound
/// `mean_size^ell`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TailStats {
    pub replicas: u64,
    pub mean_size_sup: f64,
    pub rows: Vec<TailRow>,
}

impl TailStats {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violation)
    }
}

/// Count generations until extinction (lean variant of
/// [`build_genealogy`]; also returns the time length).
fn genealogy_extent(
    laws: &mut LawCache<'_>,
    scratch: &mut (Vec<Site>, Vec<Site>, SiteHashSet),
    site: Site,
    rng: &SiteRng,
    cap: usize,
) -> Result<(usize, i64)> {
    let (current, next, visited) = scratch;
    current.clear();
    next.clear();
    visited.clear();
    let law = laws.law(site.neuron)?;
    if let Some(atom) = draw_atom(&law, rng, site)? {
        for s in law.dist.atoms()[atom].neighborhood.sites() {
            let abs = s.shifted(site.time);
            if visited.insert(abs) {
                current.push(abs);
            }
        }
    }
    let mut n = 1usize;
    let mut min_time = site.time;
    while !current.is_empty() {
        if visited.len() > cap {
            return Err(Error::RunawayGenealogy { cap });
        }
        for s in current.iter() {
            min_time = min_time.min(s.time);
        }
        next.clear();
        for &parent in current.iter() {
            let law = laws.law(parent.neuron)?;
            if let Some(atom) = draw_atom(&law, rng, parent)? {
                for s in law.dist.atoms()[atom].neighborhood.sites() {
                    let abs = s.shifted(parent.time);
                    if visited.insert(abs) {
                        next.push(abs);
                    }
                }
            }
        }
        std::mem::swap(current, next);
        n += 1;
    }
    let time_length = if visited.is_empty() {
        0
    } else {
        site.time - min_time
    };
    Ok((n, time_length))
}

/// Empirical `P(N > ell)` for `ell = 1..=ell_max` over independent
/// replicas, against the `mean_size^ell` bound.
pub fn genealogy_tail_stats(
    model: &KalikowModel,
    neuron: Neuron,
    replicas: u64,
    ell_max: usize,
    rng: &SiteRng,
    opts: &SimOptions,
) -> Result<TailStats> {
    if replicas == 0 {
        return Err(Error::Contract("need at least one replica".into()));
    }
    let m_bar = model.sup_mean_size()?;
    let counts = (0..replicas)
        .into_par_iter()
        .fold(
            || (vec![0u64; ell_max + 2], new_scratch(model), None::<Error>),
            |(mut acc, mut ctx, mut err), r| {
                if err.is_none() {
                    let replica_rng = rng.replica(r);
                    match genealogy_extent(
                        &mut ctx.0,
                        &mut ctx.1,
                        Site::new(neuron, 0),
                        &replica_rng,
                        opts.genealogy_cap,
                    ) {
                        Ok((n, _)) => {
                            // N > ell for all ell < n.
                            let top = n.min(ell_max + 1);
                            for slot in acc.iter_mut().take(top) {
                                *slot += 1;
                            }
                        }
                        Err(e) => err = Some(e),
                    }
                }
                (acc, ctx, err)
            },
        )
        .map(|(acc, _, err)| err.map_or(Ok(acc), Err))
        .try_reduce(
            || vec![0u64; ell_max + 2],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;

    let n = replicas as f64;
    let rows = (1..=ell_max)
        .map(|ell| {
            // counts[ell] = #{N > ell}.
            let count = counts[ell];
            let empirical = count as f64 / n;
            let bound = m_bar.powi(ell as i32);
            let sigma = (bound * (1.0 - bound).max(0.0) / n).sqrt();
            TailRow {
                ell,
                count,
                empirical,
                bound,
                sigma,
                violation: empirical > bound + 3.0 * sigma,
            }
        })
        .collect();
    Ok(TailStats {
        replicas,
        mean_size_sup: m_bar,
        rows,
    })
}

type Scratch<'m> = (LawCache<'m>, (Vec<Site>, Vec<Site>, SiteHashSet));

fn new_scratch(model: &KalikowModel) -> Scratch<'_> {
    (
        LawCache::new(model),
        (Vec::new(), Vec::new(), SiteHashSet::default()),
    )
}

/// `sup_i lambda_i(empty) / (1 - sup_i phi_i(theta))`, the explicit bound
/// on the Laplace transform of the genealogy time length.
pub fn psi_bound(model: &KalikowModel, theta: f64) -> Result<f64> {
    let phi = model.sup_phi(theta)?;
    if phi >= 1.0 {
        return Err(Error::Contract(format!(
            "phi(theta) = {phi} >= 1: Laplace bound does not apply"
        )));
    }
    Ok(model.sup_empty_weight()? / (1.0 - phi))
}

/// Empirical Laplace transform of the genealogy time length against its
/// explicit bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LaplaceCheck {
    pub theta: f64,
    pub replicas: u64,
    pub psi_hat: f64,
    pub std_error: f64,
    pub psi_bound: f64,
    pub violation: bool,
}

/// Monte Carlo mean of `exp(theta * T_genealogy)` at `(neuron, 0)`.
pub fn empirical_laplace(
    model: &KalikowModel,
    neuron: Neuron,
    theta: f64,
    replicas: u64,
    rng: &SiteRng,
    opts: &SimOptions,
) -> Result<LaplaceCheck> {
    if replicas == 0 {
        return Err(Error::Contract("need at least one replica".into()));
    }
    let bound = psi_bound(model, theta)?;
    let (sum, sum_sq) = (0..replicas)
        .into_par_iter()
        .fold(
            || (0.0f64, 0.0f64, new_scratch(model), None::<Error>),
            |(mut s, mut s2, mut ctx, mut err), r| {
                if err.is_none() {
                    let replica_rng = rng.replica(r);
                    match genealogy_extent(
                        &mut ctx.0,
                        &mut ctx.1,
                        Site::new(neuron, 0),
                        &replica_rng,
                        opts.genealogy_cap,
                    ) {
                        Ok((_, time_length)) => {
                            let v = (theta * time_length as f64).exp();
                            s += v;
                            s2 += v * v;
                        }
                        Err(e) => err = Some(e),
                    }
                }
                (s, s2, ctx, err)
            },
        )
        .map(|(s, s2, _, err)| err.map_or(Ok((s, s2)), Err))
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let n = replicas as f64;
    let psi_hat = sum / n;
    let var = (sum_sq / n - psi_hat * psi_hat).max(0.0);
    let std_error = (var / n).sqrt();
    Ok(LaplaceCheck {
        theta,
        replicas,
        psi_hat,
        std_error,
        psi_bound: bound,
        violation: psi_hat > bound + 3.0 * std_error,
    })
}

// ---------------------------------------------------------------------------
// Block construction
// ---------------------------------------------------------------------------

/// Overlapping block grid used by the coupling argument behind the
/// concentration bounds: grid size
/// `B = m + ceil((2 ln T + ln |F|) / theta)`, `k = floor(T / (2B))`,
/// blocks `I_n = {(n-1)B + 1 - m, ..., nB}` and a final remainder block.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BlockPartition {
    pub grid: usize,
    pub k: usize,
    pub m: usize,
    pub t_horizon: i64,
    pub f_size: usize,
    pub theta: f64,
}

pub fn block_partition(
    t_horizon: i64,
    m: usize,
    theta: f64,
    f_size: usize,
) -> Result<BlockPartition> {
    if t_horizon < 1 || f_size == 0 || theta <= 0.0 {
        return Err(Error::Contract(format!(
            "need T >= 1, |F| >= 1, theta > 0 (got T = {t_horizon}, |F| = {f_size}, theta = {theta})"
        )));
    }
    let raw = (2.0 * (t_horizon as f64).ln() + (f_size as f64).ln()) / theta;
    let grid = m + raw.ceil() as usize;
    let half = (t_horizon / 2) as usize;
    if grid > half {
        return Err(Error::HorizonTooShort { grid, half });
    }
    let k = (t_horizon as usize) / (2 * grid);
    Ok(BlockPartition {
        grid,
        k,
        m,
        t_horizon,
        f_size,
        theta,
    })
}

impl BlockPartition {
    /// The `2k + 1` blocks as inclusive time ranges.
    pub fn blocks(&self) -> Vec<(i64, i64)> {
        let b = self.grid as i64;
        let m = self.m as i64;
        let mut out = Vec::with_capacity(2 * self.k + 1);
        for n in 1..=(2 * self.k as i64) {
            out.push(((n - 1) * b + 1 - m, n * b));
        }
        out.push((2 * self.k as i64 * b + 1 - m, self.t_horizon));
        out
    }

    /// Explicit bound on the probability that the blocks fail to decouple:
    /// `|F| (2k + 1) Psi exp(-theta (B + 1 - m)) / (1 - exp(-theta))`.
    pub fn p_bad(&self, psi_bound: f64) -> f64 {
        let exponent = -self.theta * (self.grid as f64 + 1.0 - self.m as f64);
        self.f_size as f64 * (2 * self.k + 1) as f64 * psi_bound * exponent.exp()
            / (1.0 - (-self.theta).exp())
    }
}
