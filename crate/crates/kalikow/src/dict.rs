//! Dictionaries of cylindrical regressors on the observation window.
//!
//! All four families read only `F x {-m, ..., -1}` relative to the
//! evaluation time. The function order is canonical and serialized with
//! every result: optional constant first, then neurons in increasing
//! order, then bins (or lags) from most recent to deepest.

use crate::decomp::Neuron;
use crate::sim::SpikeSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictFamily {
    /// One indicator per neuron: a spike anywhere in the window.
    ShortMemory,
    /// Spike counts over `bins` pieces of length `eta` (`m = eta * bins`).
    Cumulative,
    /// The raw window bits (`eta = 1`, `bins = m`).
    Hawkes,
}

impl DictFamily {
    fn label(self) -> &'static str {
        match self {
            DictFamily::ShortMemory => "short_memory",
            DictFamily::Cumulative => "cumulative",
            DictFamily::Hawkes => "hawkes",
        }
    }
}

/// An ordered finite set of named window functions.
#[derive(Debug, Clone)]
pub struct Dictionary {
    family: DictFamily,
    neurons: Vec<Neuron>,
    m: usize,
    eta: usize,
    bins: usize,
    spontaneous: bool,
    sup_norm: f64,
}

/// Indicator dictionary: did neuron `j` spike in the last `m` steps.
pub fn short_memory(f: &[Neuron], m: usize) -> Result<Dictionary> {
    Dictionary::build(DictFamily::ShortMemory, f, m, m, 1, false)
}

/// Counting dictionary over `bins` bins of width `eta`.
pub fn cumulative(f: &[Neuron], eta: usize, bins: usize) -> Result<Dictionary> {
    Dictionary::build(DictFamily::Cumulative, f, eta * bins, eta, bins, false)
}

/// Bit dictionary `phi_{j,s}(x) = x_{j,s}`, optionally with the constant.
pub fn hawkes_dict(f: &[Neuron], m: usize, spontaneous: bool) -> Result<Dictionary> {
    Dictionary::build(DictFamily::Hawkes, f, m, 1, m, spontaneous)
}

/// Build a dictionary from its configuration name: `short_memory`,
/// `cumulative`, `cumulative_spont`, `hawkes` or `hawkes_spont`. The
/// counting families take `eta` (and derive the bin count from `m`).
pub fn from_name(
    kind: &str,
    f: &[Neuron],
    m: usize,
    eta: Option<usize>,
) -> Result<Dictionary> {
    match kind {
        "short_memory" => short_memory(f, m),
        "cumulative" | "cumulative_spont" => {
            let eta = eta.ok_or_else(|| {
                Error::Contract("cumulative dictionaries need `eta`".into())
            })?;
            if eta == 0 || !m.is_multiple_of(eta) {
                return Err(Error::Contract(format!(
                    "eta = {eta} must divide the window m = {m}"
                )));
            }
            let d = cumulative(f, eta, m / eta)?;
            Ok(if kind == "cumulative_spont" {
                with_spontaneous(d)
            } else {
                d
            })
        }
        "hawkes" => hawkes_dict(f, m, false),
        "hawkes_spont" => hawkes_dict(f, m, true),
        other => Err(Error::Contract(format!("unknown dictionary `{other}`"))),
    }
}

/// Prepend the constant function to a dictionary (no-op when already
/// present).
pub fn with_spontaneous(base: Dictionary) -> Dictionary {
    let mut d = base;
    if !d.spontaneous {
        d.spontaneous = true;
        d.sup_norm = d.sup_norm.max(1.0);
    }
    d
}

impl Dictionary {
    fn build(
        family: DictFamily,
        f: &[Neuron],
        m: usize,
        eta: usize,
        bins: usize,
        spontaneous: bool,
    ) -> Result<Dictionary> {
        if f.is_empty() {
            return Err(Error::Contract("dictionary needs a non-empty neuron set".into()));
        }
        let mut neurons = f.to_vec();
        neurons.sort_unstable();
        neurons.dedup();
        if neurons.len() != f.len() {
            return Err(Error::Contract("duplicate neurons in dictionary F".into()));
        }
        if m < 1 || eta < 1 || bins < 1 {
            return Err(Error::Contract(format!(
                "dictionary needs m, eta, bins >= 1 (m = {m}, eta = {eta}, bins = {bins})"
            )));
        }
        if eta * bins != m {
            return Err(Error::Contract(format!(
                "window mismatch: eta * bins = {} but m = {m}",
                eta * bins
            )));
        }
        let base_norm = match family {
            DictFamily::ShortMemory | DictFamily::Hawkes => 1.0,
            DictFamily::Cumulative => eta as f64,
        };
        Ok(Dictionary {
            family,
            neurons,
            m,
            eta,
            bins,
            spontaneous,
            sup_norm: if spontaneous {
                base_norm.max(1.0)
            } else {
                base_norm
            },
        })
    }

    pub fn family(&self) -> DictFamily {
        self.family
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn past_depth(&self) -> usize {
        self.m
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn has_spontaneous(&self) -> bool {
        self.spontaneous
    }

    /// True maximum absolute value over the window domain.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Bound of one function: 1 for the constant and the indicator and bit
    /// families, the bin width for counting functions.
    pub fn function_bound(&self, idx: usize) -> f64 {
        debug_assert!(idx < self.len());
        if self.spontaneous && idx == 0 {
            1.0
        } else {
            match self.family {
                DictFamily::ShortMemory | DictFamily::Hawkes => 1.0,
                DictFamily::Cumulative => self.eta as f64,
            }
        }
    }

    fn per_neuron(&self) -> usize {
        match self.family {
            DictFamily::ShortMemory => 1,
            DictFamily::Cumulative | DictFamily::Hawkes => self.bins,
        }
    }

    /// Number of functions.
    pub fn len(&self) -> usize {
        usize::from(self.spontaneous) + self.neurons.len() * self.per_neuron()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Canonical function names, in dictionary order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        if self.spontaneous {
            out.push("const".to_string());
        }
        for &j in &self.neurons {
            match self.family {
                DictFamily::ShortMemory => out.push(format!("n{j}")),
                DictFamily::Cumulative => {
                    out.extend((1..=self.bins).map(|l| format!("n{j}b{l}")))
                }
                DictFamily::Hawkes => {
                    out.extend((1..=self.bins).map(|l| format!("n{j}lag{l}")))
                }
            }
        }
        out
    }

    /// Canonical descriptor serialized with every result; coefficients are
    /// meaningless without it.
    pub fn fingerprint(&self) -> String {
        let neurons: Vec<String> = self.neurons.iter().map(|n| n.to_string()).collect();
        format!(
            "{}:m={}:eta={}:bins={}:spont={}:F=[{}]",
            self.family.label(),
            self.m,
            self.eta,
            self.bins,
            u8::from(self.spontaneous),
            neurons.join(",")
        )
    }

    fn check_sample(&self, sample: &SpikeSample) -> Result<Vec<usize>> {
        if sample.past_depth() < self.m {
            return Err(Error::WindowUnderrun(format!(
                "dictionary depth {} exceeds sample past depth {}",
                self.m,
                sample.past_depth()
            )));
        }
        self.neurons
            .iter()
            .map(|&j| {
                sample.neuron_index(j).ok_or_else(|| {
                    Error::Contract(format!("dictionary neuron {j} not observed in sample"))
                })
            })
            .collect()
    }

    /// Evaluate every function on the window ending just before `t`.
    pub fn evaluate(&self, sample: &SpikeSample, t: i64) -> Result<Vec<f64>> {
        if t < 1 || t > sample.horizon() {
            return Err(Error::WindowUnderrun(format!(
                "evaluation time {t} outside 1..={}",
                sample.horizon()
            )));
        }
        let cols = self.check_sample(sample)?;
        let mut out = Vec::with_capacity(self.len());
        if self.spontaneous {
            out.push(1.0);
        }
        for &col in &cols {
            match self.family {
                DictFamily::ShortMemory => {
                    let mut any = 0.0;
                    for s in 1..=self.m as i64 {
                        if sample.bit(col, t - s) != 0 {
                            any = 1.0;
                            break;
                        }
                    }
                    out.push(any);
                }
                DictFamily::Cumulative | DictFamily::Hawkes => {
                    for l in 1..=self.bins {
                        let mut count = 0u32;
                        let lo = t - (self.eta * l) as i64;
                        let hi = t - (self.eta * (l - 1)) as i64 - 1;
                        for s in lo..=hi {
                            count += sample.bit(col, s) as u32;
                        }
                        out.push(count as f64);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Visit `(t, phi(window_t))` for every `t = 1..=T`, sliding the
    /// per-bin counts incrementally so a full pass is `O(T |Phi|)`.
    pub fn for_each_window<F>(&self, sample: &SpikeSample, mut visit: F) -> Result<()>
    where
        F: FnMut(i64, &[f64]),
    {
        let cols = self.check_sample(sample)?;
        let nf = cols.len();
        let per = self.per_neuron();
        let mut values = vec![0.0f64; self.len()];
        if self.spontaneous {
            values[0] = 1.0;
        }
        let base = usize::from(self.spontaneous);

        // counts[c * bins + (l - 1)] = spikes of neuron column c in bin l.
        let mut counts = vec![0u32; nf * per];
        let init = self.evaluate(sample, 1)?;
        for (slot, v) in counts.iter_mut().zip(init[base..].iter()) {
            *slot = if self.family == DictFamily::ShortMemory {
                0 // recomputed below
            } else {
                *v as u32
            };
        }
        // Short memory slides on the raw window count, not the indicator.
        if self.family == DictFamily::ShortMemory {
            for (c, &col) in cols.iter().enumerate() {
                let mut total = 0u32;
                for s in 1..=self.m as i64 {
                    total += sample.bit(col, 1 - s) as u32;
                }
                counts[c] = total;
            }
        }

        let eta = self.eta as i64;
        for t in 1..=sample.horizon() {
            if t > 1 {
                // Slide every bin from window(t-1) to window(t).
                for (c, &col) in cols.iter().enumerate() {
                    match self.family {
                        DictFamily::ShortMemory => {
                            let gained = sample.bit(col, t - 1) as u32;
                            let lost = sample.bit(col, t - 1 - self.m as i64) as u32;
                            counts[c] = counts[c] + gained - lost;
                        }
                        DictFamily::Cumulative | DictFamily::Hawkes => {
                            for l in 1..=self.bins as i64 {
                                let gained = sample.bit(col, t - eta * (l - 1) - 1) as u32;
                                let lost = sample.bit(col, t - 1 - eta * l) as u32;
                                let slot = c * per + (l - 1) as usize;
                                counts[slot] = counts[slot] + gained - lost;
                            }
                        }
                    }
                }
            }
            for (slot, &count) in values[base..].iter_mut().zip(counts.iter()) {
                *slot = if self.family == DictFamily::ShortMemory {
                    f64::from(count > 0)
                } else {
                    count as f64
                };
            }
            visit(t, &values);
        }
        Ok(())
    }
}
