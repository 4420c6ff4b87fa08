//! File formats.
//!
//! * Model files: a TOML document with exactly one family section
//!   (`[markov]`, `[infinite_order]`, `[hawkes]`, `[hawkes_chain]`,
//!   `[gl_linear]`), or an explicit atom list (`atoms v1` header) with one
//!   line per atom: `neuron, weight, [(j,s),...], kernel`. Parsing and
//!   serialization round-trip exactly.
//! * Spike samples: CSV (`time` column + one column per neuron id) and a
//!   compact binary layout (magic `KSPK`, header, row-major LSB-first bit
//!   packing).
//! * Gram systems and Lasso solutions: versioned JSON with the dictionary
//!   fingerprint embedded, since coefficients are meaningless without the
//!   function order.

use crate::decomp::{Kernel, Neuron, Site};
use crate::lasso::LassoSolution;
use crate::linalg::SymMat;
use crate::models::{
    gl_chain_model, gl_linear_model, hawkes_chain_model, hawkes_model, infinite_order_model,
    markov_model, GlChainRule, GlLinearSpec, HawkesChainRule, HawkesSpec, Interaction,
    LagSequence, MarkovSpec, TransitionModel,
};
use crate::sim::SpikeSample;
use crate::{Error, KalikowModel, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Parsed model file: a named family or an explicit atom list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markov: Option<MarkovSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infinite_order: Option<InfiniteOrderSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hawkes: Option<HawkesSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hawkes_chain: Option<HawkesChainSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gl_linear: Option<GlLinearSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gl_chain: Option<GlChainSection>,
    /// Set when the source was the explicit atoms format.
    #[serde(skip)]
    pub atoms: Option<AtomsModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MarkovSection {
    pub p1: f64,
    pub p0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InfiniteOrderSection {
    /// "geometric" | "poisson" | "explicit".
    pub law: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub p_empty: f64,
    /// "majority" | "const".
    pub kernel: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HawkesSection {
    pub neurons: Vec<i64>,
    pub nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<InteractionRow>,
    /// Optional CSV file `j,i,lag,weight` merged into `interactions`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interactions_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InteractionRow {
    pub from: i64,
    pub to: i64,
    pub lag: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HawkesChainSection {
    pub nu: f64,
    pub weights: Vec<ChainWeightRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainWeightRow {
    pub offset: i64,
    pub lag: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GlLinearSection {
    pub neurons: Vec<i64>,
    pub nu: Vec<f64>,
    pub weights: Vec<GlWeightRow>,
    /// Shared lag sequence for every source neuron.
    pub g: LagSequenceSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag_cutoff: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GlWeightRow {
    pub from: i64,
    pub to: i64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GlChainSection {
    pub nu: f64,
    /// `(source offset relative to target, weight)` rows.
    pub weights: Vec<ChainGlWeightRow>,
    pub g: LagSequenceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainGlWeightRow {
    pub offset: i64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LagSequenceSection {
    /// "geometric" | "finite".
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl LagSequenceSection {
    fn to_lag_sequence(&self) -> Result<LagSequence> {
        match self.kind.as_str() {
            "geometric" => Ok(LagSequence::Geometric {
                first: self
                    .first
                    .ok_or_else(|| Error::Parse("geometric lag sequence needs `first`".into()))?,
                ratio: self
                    .ratio
                    .ok_or_else(|| Error::Parse("geometric lag sequence needs `ratio`".into()))?,
            }),
            "finite" => Ok(LagSequence::Finite(self.values.clone().ok_or_else(
                || Error::Parse("finite lag sequence needs `values`".into()),
            )?)),
            other => Err(Error::Parse(format!("unknown lag sequence kind `{other}`"))),
        }
    }
}

impl ModelFile {
    /// Parse either format (atoms text when the first line is `atoms v1`,
    /// TOML otherwise).
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with("atoms v1") {
            return Ok(ModelFile {
                markov: None,
                infinite_order: None,
                hawkes: None,
                hawkes_chain: None,
                gl_linear: None,
                gl_chain: None,
                atoms: Some(AtomsModel::parse(text)?),
            });
        }
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("model TOML: {e}")))?;
        let sections = usize::from(file.markov.is_some())
            + usize::from(file.infinite_order.is_some())
            + usize::from(file.hawkes.is_some())
            + usize::from(file.hawkes_chain.is_some())
            + usize::from(file.gl_linear.is_some())
            + usize::from(file.gl_chain.is_some());
        if sections != 1 {
            return Err(Error::Parse(format!(
                "model file must declare exactly one family section, found {sections}"
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the source format.
    pub fn serialize(&self) -> Result<String> {
        if let Some(atoms) = &self.atoms {
            return Ok(atoms.serialize());
        }
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("model TOML: {e}")))
    }

    /// Build the executable model. `base_dir` resolves relative CSV paths.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<KalikowModel> {
        if let Some(atoms) = &self.atoms {
            return atoms.build();
        }
        if let Some(s) = &self.markov {
            return markov_model(s.p1, s.p0);
        }
        if let Some(s) = &self.infinite_order {
            let tol = s.tail_tolerance.unwrap_or(crate::models::DEFAULT_TAIL_TOLERANCE);
            let weights = match s.law.as_str() {
                "geometric" => crate::models::geometric_range_weights(
                    s.p.ok_or_else(|| Error::Parse("geometric law needs `p`".into()))?,
                    tol,
                )?,
                "poisson" => crate::models::poisson_range_weights(
                    s.rate
                        .ok_or_else(|| Error::Parse("poisson law needs `rate`".into()))?,
                    tol,
                )?,
                "explicit" => s
                    .weights
                    .clone()
                    .ok_or_else(|| Error::Parse("explicit law needs `weights`".into()))?,
                other => return Err(Error::Parse(format!("unknown range law `{other}`"))),
            };
            let kernels: Vec<Kernel> = (1..weights.len())
                .map(|_| match s.kernel.as_str() {
                    "majority" => Ok(Kernel::Majority {
                        hi: s.kernel_hi
                            .ok_or_else(|| Error::Parse("majority kernel needs `kernel_hi`".into()))?,
                        lo: s.kernel_lo
                            .ok_or_else(|| Error::Parse("majority kernel needs `kernel_lo`".into()))?,
                    }),
                    "const" => Ok(Kernel::Const(s.kernel_p.ok_or_else(|| {
                        Error::Parse("const kernel needs `kernel_p`".into())
                    })?)),
                    other => Err(Error::Parse(format!("unknown kernel rule `{other}`"))),
                })
                .collect::<Result<_>>()?;
            return infinite_order_model(&weights, s.p_empty, kernels, tol);
        }
        if let Some(s) = &self.hawkes {
            return hawkes_model(&self.hawkes_spec(s, base_dir)?);
        }
        if let Some(s) = &self.hawkes_chain {
            return hawkes_chain_model(
                s.nu,
                s.weights.iter().map(|w| (w.offset, w.lag, w.weight)).collect(),
            );
        }
        if let Some(s) = &self.gl_linear {
            let spec = self.gl_spec(s)?;
            return gl_linear_model(&spec, s.lag_cutoff);
        }
        if let Some(s) = &self.gl_chain {
            return gl_chain_model(
                s.nu,
                s.weights.iter().map(|w| (w.offset, w.weight)).collect(),
                s.g.to_lag_sequence()?,
            );
        }
        Err(Error::Parse("empty model file".into()))
    }

    fn hawkes_spec(&self, s: &HawkesSection, base_dir: Option<&Path>) -> Result<HawkesSpec> {
        if s.neurons.len() != s.nu.len() {
            return Err(Error::Parse("`neurons` and `nu` lengths disagree".into()));
        }
        let mut interactions: Vec<Interaction> = s
            .interactions
            .iter()
            .map(|r| Interaction {
                from: Neuron(r.from),
                to: Neuron(r.to),
                lag: r.lag,
                weight: r.weight,
            })
            .collect();
        if let Some(csv) = &s.interactions_csv {
            let path = match base_dir {
                Some(dir) => dir.join(csv),
                None => std::path::PathBuf::from(csv),
            };
            interactions.extend(read_interactions_csv(&path)?);
        }
        HawkesSpec::new(
            s.neurons
                .iter()
                .zip(&s.nu)
                .map(|(&n, &v)| (Neuron(n), v))
                .collect(),
            interactions,
        )
    }

    fn gl_spec(&self, s: &GlLinearSection) -> Result<GlLinearSpec> {
        if s.neurons.len() != s.nu.len() {
            return Err(Error::Parse("`neurons` and `nu` lengths disagree".into()));
        }
        let seq = s.g.to_lag_sequence()?;
        GlLinearSpec::new(
            s.neurons
                .iter()
                .zip(&s.nu)
                .map(|(&n, &v)| (Neuron(n), v))
                .collect(),
            s.weights
                .iter()
                .map(|w| (Neuron(w.from), Neuron(w.to), w.weight))
                .collect(),
            s.neurons.iter().map(|&n| (Neuron(n), seq.clone())).collect(),
        )
    }

    /// The closed-form transition oracle, when the family has one.
    pub fn transition_model(&self, base_dir: Option<&Path>) -> Result<Option<TransitionModel>> {
        if let Some(s) = &self.markov {
            return Ok(Some(TransitionModel::Markov(MarkovSpec::new(s.p1, s.p0)?)));
        }
        if let Some(s) = &self.hawkes {
            return Ok(Some(TransitionModel::Hawkes(self.hawkes_spec(s, base_dir)?)));
        }
        if let Some(s) = &self.hawkes_chain {
            return Ok(Some(TransitionModel::HawkesChain(HawkesChainRule::new(
                s.nu,
                s.weights.iter().map(|w| (w.offset, w.lag, w.weight)).collect(),
            )?)));
        }
        if let Some(s) = &self.gl_linear {
            return Ok(Some(TransitionModel::gl(self.gl_spec(s)?, s.lag_cutoff)));
        }
        if let Some(s) = &self.gl_chain {
            return Ok(Some(TransitionModel::GlChain(
                GlChainRule::new(
                    s.nu,
                    s.weights.iter().map(|w| (w.offset, w.weight)).collect(),
                    s.g.to_lag_sequence()?,
                )?,
            )));
        }
        Ok(None)
    }
}

/// `j,i,lag,weight` rows (header line optional).
pub fn read_interactions_csv(path: &Path) -> Result<Vec<Interaction>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if lineno == 0 && trimmed.chars().next().is_some_and(|c| c.is_alphabetic()) {
            continue; // header
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "interaction CSV line {}: expected `j,i,lag,weight`",
                lineno + 1
            )));
        }
        out.push(Interaction {
            from: Neuron(parse_num(fields[0], lineno)?),
            to: Neuron(parse_num(fields[1], lineno)?),
            lag: parse_num::<u32>(fields[2], lineno)?,
            weight: parse_num(fields[3], lineno)?,
        });
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {}: cannot parse `{s}`", lineno + 1)))
}

// ---------------------------------------------------------------------------
// Explicit atoms format
// ---------------------------------------------------------------------------

/// Explicit per-neuron atom list. Each neuron needs exactly one
/// empty-neighborhood line carrying `lambda(empty)` and `const:p_empty`;
/// atom order in the file is the CDF order.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomsModel {
    pub lines: Vec<AtomLine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomLine {
    pub neuron: Neuron,
    pub weight: f64,
    pub sites: Vec<Site>,
    pub kernel: Kernel,
}

impl AtomsModel {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().map(str::trim).unwrap_or_default();
        if header != "atoms v1" {
            return Err(Error::Parse(format!(
                "expected `atoms v1` header, found `{header}`"
            )));
        }
        let mut out = Vec::new();
        for (lineno, raw) in lines.enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push(parse_atom_line(line, lineno + 2)?);
        }
        Ok(AtomsModel { lines: out })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("atoms v1\n# neuron, weight, [(j,s),...], kernel\n");
        for l in &self.lines {
            let sites: Vec<String> = l
                .sites
                .iter()
                .map(|s| format!("({},{})", s.neuron.0, s.time))
                .collect();
            out.push_str(&format!(
                "{}, {:?}, [{}], {}\n",
                l.neuron.0,
                l.weight,
                sites.join(","),
                serialize_kernel(&l.kernel)
            ));
        }
        out
    }

    pub fn build(&self) -> Result<KalikowModel> {
        use crate::decomp::{Atom, Neighborhood, NeighborhoodDistribution, NeuronLaw};
        // (empty-line weight and p_empty, atoms, kernels) per neuron.
        type PerNeuron = (Option<(f64, f64)>, Vec<Atom>, Vec<Kernel>);
        let mut per_neuron: BTreeMap<Neuron, PerNeuron> = BTreeMap::new();
        for l in &self.lines {
            let entry = per_neuron.entry(l.neuron).or_default();
            if l.sites.is_empty() {
                let p_empty = match l.kernel {
                    Kernel::Const(p) => p,
                    _ => {
                        return Err(Error::Parse(format!(
                            "neuron {}: the empty-neighborhood line needs a const kernel",
                            l.neuron
                        )))
                    }
                };
                if entry.0.replace((l.weight, p_empty)).is_some() {
                    return Err(Error::Parse(format!(
                        "neuron {}: duplicate empty-neighborhood line",
                        l.neuron
                    )));
                }
            } else {
                entry.1.push(Atom {
                    neighborhood: Neighborhood::new(l.sites.clone())?,
                    weight: l.weight,
                });
                entry.2.push(l.kernel.clone());
            }
        }
        let mut laws = BTreeMap::new();
        for (neuron, (empty, atoms, kernels)) in per_neuron {
            let (empty_weight, p_empty) = empty.ok_or_else(|| {
                Error::Parse(format!("neuron {neuron}: missing empty-neighborhood line"))
            })?;
            let dist = NeighborhoodDistribution::new(empty_weight, atoms)?;
            laws.insert(neuron, NeuronLaw::new(dist, p_empty, kernels)?);
        }
        KalikowModel::explicit(laws)
    }
}

fn parse_atom_line(line: &str, lineno: usize) -> Result<AtomLine> {
    // neuron, weight, [(j,s),...], kernel
    let open = line
        .find('[')
        .ok_or_else(|| Error::Parse(format!("line {lineno}: missing `[`")))?;
    let close = line
        .rfind(']')
        .ok_or_else(|| Error::Parse(format!("line {lineno}: missing `]`")))?;
    let head: Vec<&str> = line[..open].trim_end_matches([',', ' ']).split(',').collect();
    if head.len() != 2 {
        return Err(Error::Parse(format!(
            "line {lineno}: expected `neuron, weight` before the site list"
        )));
    }
    let neuron = Neuron(parse_num(head[0].trim(), lineno - 1)?);
    let weight: f64 = parse_num(head[1].trim(), lineno - 1)?;
    let mut sites = Vec::new();
    let body = &line[open + 1..close];
    if !body.trim().is_empty() {
        for pair in body.split("),") {
            let pair = pair.trim().trim_start_matches('(').trim_end_matches(')');
            let mut it = pair.split(',');
            let j: i64 = parse_num(it.next().unwrap_or("").trim(), lineno - 1)?;
            let s: i64 = parse_num(it.next().unwrap_or("").trim(), lineno - 1)?;
            sites.push(Site::new(Neuron(j), s));
        }
    }
    let kernel_text = line[close + 1..].trim_start_matches([',', ' ']).trim();
    Ok(AtomLine {
        neuron,
        weight,
        sites,
        kernel: parse_kernel(kernel_text, lineno)?,
    })
}

fn serialize_kernel(k: &Kernel) -> String {
    match k {
        Kernel::Const(p) => format!("const:{p:?}"),
        Kernel::Bit { bit } => format!("bit:{bit}"),
        Kernel::NotBit { bit } => format!("notbit:{bit}"),
        Kernel::GatedBit { bit, gate } => format!("gated:{bit};{}", join_usize(gate)),
        Kernel::GatedBitComplement { bit, gate } => {
            format!("gatedc:{bit};{}", join_usize(gate))
        }
        Kernel::Majority { hi, lo } => format!("majority:{hi:?}|{lo:?}"),
        Kernel::Table(probs) => {
            let cells: Vec<String> = probs.iter().map(|p| format!("{p:?}")).collect();
            format!("table:{}", cells.join("|"))
        }
    }
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|u| u.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_kernel(text: &str, lineno: usize) -> Result<Kernel> {
    let (tag, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("line {lineno}: kernel `{text}` missing `:`")))?;
    let parse_idx_list = |s: &str| -> Result<Vec<usize>> {
        if s.trim().is_empty() {
            return Ok(vec![]);
        }
        s.split(',').map(|u| parse_num(u.trim(), lineno - 1)).collect()
    };
    match tag {
        "const" => Ok(Kernel::Const(parse_num(rest.trim(), lineno - 1)?)),
        "bit" => Ok(Kernel::Bit {
            bit: parse_num(rest.trim(), lineno - 1)?,
        }),
        "notbit" => Ok(Kernel::NotBit {
            bit: parse_num(rest.trim(), lineno - 1)?,
        }),
        "gated" | "gatedc" => {
            let (bit, gate) = rest
                .split_once(';')
                .ok_or_else(|| Error::Parse(format!("line {lineno}: gated kernel needs `;`")))?;
            let bit = parse_num(bit.trim(), lineno - 1)?;
            let gate = parse_idx_list(gate)?;
            Ok(if tag == "gated" {
                Kernel::GatedBit { bit, gate }
            } else {
                Kernel::GatedBitComplement { bit, gate }
            })
        }
        "majority" => {
            let (hi, lo) = rest
                .split_once('|')
                .ok_or_else(|| Error::Parse(format!("line {lineno}: majority kernel needs `|`")))?;
            Ok(Kernel::Majority {
                hi: parse_num(hi.trim(), lineno - 1)?,
                lo: parse_num(lo.trim(), lineno - 1)?,
            })
        }
        "table" => Ok(Kernel::Table(
            rest.split('|')
                .map(|p| parse_num(p.trim(), lineno - 1))
                .collect::<Result<_>>()?,
        )),
        other => Err(Error::Parse(format!("line {lineno}: unknown kernel `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// Spike sample formats
// ---------------------------------------------------------------------------

/// CSV: header `time,<id>,<id>,...`, one row per retained time step.
pub fn write_sample_csv<W: Write>(sample: &SpikeSample, mut w: W) -> Result<()> {
    let ids: Vec<String> = sample.neurons().iter().map(|n| n.to_string()).collect();
    writeln!(w, "time,{}", ids.join(","))?;
    for t in sample.min_time()..=sample.horizon() {
        write!(w, "{t}")?;
        for j in 0..sample.neurons().len() {
            write!(w, ",{}", sample.bit(j, t))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parse the CSV sample format; the past depth is recovered from the
/// earliest time row.
pub fn read_sample_csv<R: Read>(r: R) -> Result<SpikeSample> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sample CSV".into()))??;
    let mut cols = header.split(',');
    if cols.next().map(str::trim) != Some("time") {
        return Err(Error::Parse("sample CSV must start with a `time` column".into()));
    }
    let neurons: Vec<Neuron> = cols
        .map(|c| c.trim().parse::<i64>().map(Neuron))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse("sample CSV header must list neuron ids".into()))?;
    let mut times = Vec::new();
    let mut bits = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: i64 = parse_num(fields.next().unwrap_or("").trim(), lineno + 1)?;
        times.push(t);
        for field in fields {
            bits.push(parse_num::<u8>(field.trim(), lineno + 1)?);
        }
    }
    if times.is_empty() {
        return Err(Error::Parse("sample CSV has no rows".into()));
    }
    let t_min = times[0];
    let t_max = *times.last().unwrap();
    if times.len() as i64 != t_max - t_min + 1
        || times.windows(2).any(|w| w[1] != w[0] + 1)
    {
        return Err(Error::Parse("sample CSV times must be consecutive".into()));
    }
    let m = (1 - t_min) as usize;
    SpikeSample::from_bits(neurons, m, t_max, bits, 0)
}

const SAMPLE_MAGIC: &[u8; 4] = b"KSPK";
const SAMPLE_VERSION: u16 = 1;

/// Binary layout: magic `KSPK`, version u16 LE, reserved u16, seed u64,
/// m u32, T i64, neuron count u32, neuron ids i64 each; then one row per
/// time step from `-(m-1)` to `T`, each `ceil(|F| / 8)` bytes, neuron `j`
/// of the row at bit `j % 8` of byte `j / 8` (LSB first).
pub fn write_sample_binary<W: Write>(sample: &SpikeSample, mut w: W) -> Result<()> {
    w.write_all(SAMPLE_MAGIC)?;
    w.write_all(&SAMPLE_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&sample.seed().to_le_bytes())?;
    w.write_all(&(sample.past_depth() as u32).to_le_bytes())?;
    w.write_all(&sample.horizon().to_le_bytes())?;
    w.write_all(&(sample.neurons().len() as u32).to_le_bytes())?;
    for n in sample.neurons() {
        w.write_all(&n.0.to_le_bytes())?;
    }
    let row_bytes = sample.neurons().len().div_ceil(8);
    let mut row = vec![0u8; row_bytes];
    for t in sample.min_time()..=sample.horizon() {
        row.fill(0);
        for j in 0..sample.neurons().len() {
            if sample.bit(j, t) != 0 {
                row[j / 8] |= 1 << (j % 8);
            }
        }
        w.write_all(&row)?;
    }
    Ok(())
}

pub fn read_sample_binary<R: Read>(mut r: R) -> Result<SpikeSample> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SAMPLE_MAGIC {
        return Err(Error::Parse("bad sample magic".into()));
    }
    let version = read_u16(&mut r)?;
    if version != SAMPLE_VERSION {
        return Err(Error::Parse(format!("unsupported sample version {version}")));
    }
    let _reserved = read_u16(&mut r)?;
    let seed = read_u64(&mut r)?;
    let m = read_u32(&mut r)? as usize;
    let t_horizon = read_i64(&mut r)?;
    let n = read_u32(&mut r)? as usize;
    let mut neurons = Vec::with_capacity(n);
    for _ in 0..n {
        neurons.push(Neuron(read_i64(&mut r)?));
    }
    let rows = (t_horizon + m as i64) as usize;
    let row_bytes = n.div_ceil(8);
    let mut bits = Vec::with_capacity(rows * n);
    let mut row = vec![0u8; row_bytes];
    for _ in 0..rows {
        r.read_exact(&mut row)?;
        for j in 0..n {
            bits.push((row[j / 8] >> (j % 8)) & 1);
        }
    }
    SpikeSample::from_bits(neurons, m, t_horizon, bits, seed)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}
fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

// ---------------------------------------------------------------------------
// Gram and solution JSON
// ---------------------------------------------------------------------------

/// Versioned JSON mirror of [`crate::gram::GramSystem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramJson {
    pub schema: u32,
    pub dict: String,
    pub t: i64,
    pub target: i64,
    pub size: usize,
    /// Row-major `size x size`.
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub b_bar: Option<Vec<f64>>,
    /// Provenance, set by the experiment pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

impl GramJson {
    pub fn from_system(sys: &crate::gram::GramSystem) -> Self {
        GramJson {
            schema: 1,
            dict: sys.dict_fingerprint.clone(),
            t: sys.t_horizon,
            target: sys.target.0,
            size: sys.g.n(),
            g: sys.g.rows().to_vec(),
            b: sys.b.clone(),
            b_bar: sys.b_bar.clone(),
            seed: None,
            config_fingerprint: None,
        }
    }

    pub fn with_provenance(mut self, seed: u64, config_fingerprint: &str) -> Self {
        self.seed = Some(seed);
        self.config_fingerprint = Some(config_fingerprint.to_string());
        self
    }

    pub fn into_system(self) -> Result<crate::gram::GramSystem> {
        if self.schema != 1 {
            return Err(Error::Parse(format!("unsupported gram schema {}", self.schema)));
        }
        if self.b.len() != self.size
            || self.b_bar.as_ref().is_some_and(|bb| bb.len() != self.size)
        {
            return Err(Error::Parse(format!(
                "gram vectors disagree with the declared size {}",
                self.size
            )));
        }
        Ok(crate::gram::GramSystem {
            g: SymMat::from_rows(self.size, self.g)?,
            b: self.b,
            b_bar: self.b_bar,
            target: Neuron(self.target),
            t_horizon: self.t,
            dict_fingerprint: self.dict,
        })
    }
}

/// Versioned JSON for a Lasso solution; records the dictionary
/// fingerprint and the penalty actually used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionJson {
    pub schema: u32,
    pub dict: String,
    pub gamma: f64,
    pub d: f64,
    pub coefficients: Vec<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: Vec<usize>,
    /// Provenance, set by the experiment pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

impl SolutionJson {
    pub fn new(dict_fingerprint: &str, gamma: f64, d: f64, sol: &LassoSolution) -> Self {
        SolutionJson {
            schema: 1,
            dict: dict_fingerprint.to_string(),
            gamma,
            d,
            coefficients: sol.coefficients.clone(),
            active_set: sol.active_set.clone(),
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            converged: sol.converged,
            degenerate: sol.degenerate.clone(),
            seed: None,
            config_fingerprint: None,
        }
    }

    pub fn with_provenance(mut self, seed: u64, config_fingerprint: &str) -> Self {
        self.seed = Some(seed);
        self.config_fingerprint = Some(config_fingerprint.to_string());
        self
    }
}

/// Serialize any value as pretty JSON with a trailing newline
/// (deterministic: struct field order, shortest float representation).
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}
