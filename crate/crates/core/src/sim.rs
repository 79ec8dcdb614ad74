//! Synthetic corpora by ancestral sampling from a known network, followed by
//! a measurement noise model.
//!
//! Every sequence draws from its own ChaCha8 stream seeded from
//! `(seed, subject, sequence)`, so output does not depend on scheduling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{Corpus, FrameRecord, FrameSequence, PhoneAlphabet};
use crate::error::{Error, Result};
use crate::model::{config_index, measurement_name, Cpt, NetworkSpec, Role, PHONE};
use crate::presets;

pub const RNG_NAME: &str = "chacha8";
pub const CONFIG_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuNoise {
    #[serde(rename = "fp")]
    pub false_positive: f64,
    #[serde(rename = "fn")]
    pub false_negative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneConfusion {
    /// Correct with probability `1 - ε`, otherwise uniform over other states.
    Symmetric(f64),
    /// Row-stochastic `P(reported | produced)`.
    Table(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub au_default: AuNoise,
    #[serde(default)]
    pub au: BTreeMap<String, AuNoise>,
    pub phone: PhoneConfusion,
    #[serde(default)]
    pub au_missing_rate: f64,
    #[serde(default)]
    pub phone_missing_rate: f64,
}

impl NoiseModel {
    pub fn noise_free() -> Self {
        Self::symmetric(0.0, 0.0, 0.0)
    }

    pub fn symmetric(fp: f64, fn_: f64, eps: f64) -> Self {
        NoiseModel {
            au_default: AuNoise {
                false_positive: fp,
                false_negative: fn_,
            },
            au: BTreeMap::new(),
            phone: PhoneConfusion::Symmetric(eps),
            au_missing_rate: 0.0,
            phone_missing_rate: 0.0,
        }
    }

    /// ε = 0.02, FP = 0.10, FN = 0.25.
    pub fn clean_like() -> Self {
        Self::symmetric(0.10, 0.25, 0.02)
    }

    /// ε = 0.05, FP = 0.20, FN = 0.40.
    pub fn challenging_like() -> Self {
        Self::symmetric(0.20, 0.40, 0.05)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "clean-like" => Ok(Self::clean_like()),
            "challenging-like" => Ok(Self::challenging_like()),
            "noise-free" => Ok(Self::noise_free()),
            _ => Err(Error::InvalidArgument(format!("unknown noise preset `{name}`"))),
        }
    }

    pub fn for_au(&self, au: &str) -> AuNoise {
        self.au.get(au).copied().unwrap_or(self.au_default)
    }

    pub fn validate(&self, phone_card: Option<usize>) -> Result<()> {
        let rate = |what: &str, r: f64, upper_open: bool| -> Result<()> {
            let ok = r >= 0.0 && if upper_open { r < 1.0 } else { r <= 1.0 };
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} = {r} out of range")))
            }
        };
        for n in std::iter::once(&self.au_default).chain(self.au.values()) {
            rate("false positive rate", n.false_positive, false)?;
            rate("false negative rate", n.false_negative, false)?;
        }
        rate("au_missing_rate", self.au_missing_rate, true)?;
        rate("phone_missing_rate", self.phone_missing_rate, true)?;
        match &self.phone {
            PhoneConfusion::Symmetric(e) => rate("phone confusion", *e, false)?,
            PhoneConfusion::Table(rows) => {
                if let Some(p) = phone_card {
                    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                        return Err(Error::InvalidArgument(format!("phone confusion table must be {p}x{p}")));
                    }
                }
                for r in rows {
                    let s: f64 = r.iter().sum();
                    if r.iter().any(|v| !(0.0..=1.0).contains(v)) || (s - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidArgument("phone confusion rows must be distributions".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceLength {
    Fixed(usize),
    Uniform { min: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub generator: NetworkSpec,
    pub alphabet: PhoneAlphabet,
    pub fps: f64,
    pub subjects: usize,
    pub sequences_per_subject: usize,
    pub frames_per_sequence: SequenceLength,
    pub seed: u64,
    pub noise: NoiseModel,
    /// Dirichlet concentration of the per-subject perturbation of hidden
    /// CPT rows; `None` disables subject variation.
    pub subject_concentration: Option<f64>,
}

impl SimConfig {
    /// The bundled generator with the given corpus size.
    pub fn paper_instance(subjects: usize, sequences_per_subject: usize, frames: SequenceLength, seed: u64) -> Self {
        SimConfig {
            generator: presets::generator(),
            alphabet: presets::alphabet(),
            fps: 60.0,
            subjects,
            sequences_per_subject,
            frames_per_sequence: frames,
            seed,
            noise: NoiseModel::clean_like(),
            subject_concentration: Some(50.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.sequences_per_subject == 0 {
            return Err(Error::InvalidArgument("subject and sequence counts must be at least 1".into()));
        }
        match self.frames_per_sequence {
            SequenceLength::Fixed(0) => return Err(Error::InvalidArgument("sequences need frames".into())),
            SequenceLength::Uniform { min, max } if min == 0 || min > max => {
                return Err(Error::InvalidArgument("bad frame length range".into()))
            }
            _ => {}
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidArgument("fps must be positive".into()));
        }
        if let Some(c) = self.subject_concentration {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument("subject concentration must be positive".into()));
            }
        }
        if let Some(v) = self.generator.validate().first() {
            return Err(Error::InvalidModel(v.to_string()));
        }
        if !self.generator.is_dynamic() {
            return Err(Error::InvalidModel("generator needs transition CPTs".into()));
        }
        let phone = self.generator.phone().map(|p| p.cardinality);
        if phone.is_some_and(|p| p != self.alphabet.len()) {
            return Err(Error::InvalidArgument("alphabet size differs from phone cardinality".into()));
        }
        for h in self.generator.hidden() {
            if self.generator.variable(&measurement_name(&h.name)).is_err() {
                return Err(Error::InvalidModel(format!("`{}` has no measurement node", h.name)));
            }
        }
        self.noise.validate(phone)
    }
}

/// Configuration file form of [`SimConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfigFile {
    pub format_version: String,
    /// `"paper-instance"` or a path to a model file (relative to the config).
    pub generator: String,
    #[serde(default)]
    pub alphabet: Option<Vec<String>>,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub subjects: usize,
    pub sequences_per_subject: usize,
    pub frames_per_sequence: SequenceLength,
    #[serde(default)]
    pub seed: Option<u64>,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub subject_concentration: Option<f64>,
}

fn default_fps() -> f64 {
    60.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Preset { preset: String },
    Explicit(NoiseModel),
}

impl SimConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }

    /// Resolves the generator and noise; `seed` overrides the file's seed.
    pub fn resolve(&self, base: &Path, seed: Option<u64>) -> Result<SimConfig> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported config format_version `{}`",
                self.format_version
            )));
        }
        let generator = match self.generator.as_str() {
            "paper-instance" => presets::generator(),
            path => NetworkSpec::load(&base.join(path))?,
        };
        let alphabet = match &self.alphabet {
            Some(labels) => PhoneAlphabet::new(labels.iter().cloned())?,
            None => match generator.phone().map(|p| p.cardinality) {
                Some(29) | None => presets::alphabet(),
                Some(p) => PhoneAlphabet::new((1..p).map(|i| format!("PH{i}")))?,
            },
        };
        let noise = match &self.noise {
            NoiseSpec::Preset { preset } => NoiseModel::preset(preset)?,
            NoiseSpec::Explicit(n) => n.clone(),
        };
        let seed = seed
            .or(self.seed)
            .ok_or_else(|| Error::InvalidArgument("no seed given".into()))?;
        Ok(SimConfig {
            generator,
            alphabet,
            fps: self.fps,
            subjects: self.subjects,
            sequences_per_subject: self.sequences_per_subject,
            frames_per_sequence: self.frames_per_sequence,
            seed,
            noise,
            subject_concentration: self.subject_concentration,
        })
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, subject: u64, stream: u64) -> u64 {
    mix(mix(mix(seed) ^ subject) ^ stream)
}

fn categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Resamples each hidden CPT row from `Dirichlet(c · row)`; zero cells stay zero.
fn jitter(spec: &NetworkSpec, concentration: f64, rng: &mut ChaCha8Rng) -> NetworkSpec {
    let mut out = spec.clone();
    let hidden: Vec<(String, usize)> = spec.hidden().map(|v| (v.name.clone(), v.cardinality)).collect();
    let perturb = |cpt: &mut Cpt, k: usize, rng: &mut ChaCha8Rng| {
        for row in cpt.table.chunks_mut(k) {
            let draws: Vec<f64> = row
                .iter()
                .map(|&p| {
                    if p > 0.0 {
                        Gamma::new(concentration * p, 1.0).map_or(p, |g| g.sample(rng))
                    } else {
                        0.0
                    }
                })
                .collect();
            let z: f64 = draws.iter().sum();
            if z > 0.0 {
                for (cell, d) in row.iter_mut().zip(draws) {
                    *cell = d / z;
                }
            }
        }
    };
    for (name, k) in &hidden {
        if let Some(c) = out.cpts.iter_mut().find(|c| &c.child == name) {
            perturb(c, *k, rng);
        }
        if let Some(c) = out.transition_cpts.iter_mut().flatten().find(|c| &c.child == name) {
            perturb(c, *k, rng);
        }
    }
    out
}

struct Sampler<'a> {
    spec: &'a NetworkSpec,
    order: Vec<usize>,
    aus: Vec<(usize, usize, AuNoise)>,
    phone: Option<(usize, usize)>,
    noise: &'a NoiseModel,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a NetworkSpec, noise: &'a NoiseModel) -> Result<Self> {
        let order = spec
            .topological_order()?
            .iter()
            .map(|n| spec.index_of(n).unwrap())
            .collect();
        let idx = |n: &str| spec.index_of(n).unwrap();
        let aus = spec
            .hidden()
            .filter(|v| v.role == Role::HiddenAu)
            .map(|v| (idx(&v.name), idx(&measurement_name(&v.name)), noise.for_au(&v.name)))
            .collect();
        let phone = spec.phone().map(|p| (idx(&p.name), idx(&measurement_name(&p.name))));
        Ok(Sampler {
            spec,
            order,
            aus,
            phone,
            noise,
        })
    }

    fn draw_slice(&self, rng: &mut ChaCha8Rng, prev: Option<&[usize]>) -> Vec<usize> {
        let n = self.spec.variables.len();
        let mut cur = vec![0usize; n];
        for &i in &self.order {
            let v = &self.spec.variables[i];
            let cpt = match prev {
                None => self.spec.cpt(&v.name),
                Some(_) => self.spec.transition_cpt(&v.name),
            }
            .expect("validated");
            let mut states = Vec::with_capacity(cpt.parents.len());
            let mut cards = Vec::with_capacity(cpt.parents.len());
            for p in &cpt.parents {
                let j = self.spec.index_of(&p.name).expect("validated");
                states.push(if p.prev { prev.expect("transition")[j] } else { cur[j] });
                cards.push(self.spec.variables[j].cardinality);
            }
            cur[i] = categorical(rng, cpt.row(config_index(&states, &cards), v.cardinality));
        }
        cur
    }

    fn frame(&self, rng: &mut ChaCha8Rng, slice: &[usize]) -> FrameRecord {
        let mut au_truth = Vec::with_capacity(self.aus.len());
        let mut au_meas = Vec::with_capacity(self.aus.len());
        for &(h, m, noise) in &self.aus {
            au_truth.push(slice[h] as u8);
            let mut value = slice[m] as u8;
            let flip: f64 = rng.random();
            let rate = if value == 0 { noise.false_positive } else { noise.false_negative };
            if flip < rate {
                value = 1 - value;
            }
            let miss: f64 = rng.random();
            au_meas.push((miss >= self.noise.au_missing_rate).then_some(value));
        }
        let (phone_truth, phone_meas) = match self.phone {
            None => (0, None),
            Some((h, m)) => {
                let card = self.spec.variables[h].cardinality;
                let produced = slice[m];
                let reported = match &self.noise.phone {
                    PhoneConfusion::Symmetric(eps) => {
                        let u: f64 = rng.random();
                        let k: usize = rng.random_range(0..card - 1);
                        if u < *eps {
                            if k >= produced {
                                k + 1
                            } else {
                                k
                            }
                        } else {
                            produced
                        }
                    }
                    PhoneConfusion::Table(rows) => categorical(rng, &rows[produced]),
                };
                let miss: f64 = rng.random();
                (slice[h], (miss >= self.noise.phone_missing_rate).then_some(reported))
            }
        };
        FrameRecord {
            au_truth,
            phone_truth,
            au_meas,
            phone_meas,
        }
    }
}

/// Samples the corpus described by `config`; deterministic given the seed.
pub fn sample_corpus(config: &SimConfig) -> Result<Corpus> {
    config.validate()?;
    let aus: Vec<String> = config
        .generator
        .hidden()
        .filter(|v| v.role == Role::HiddenAu)
        .map(|v| v.name.clone())
        .collect();
    let subjects: Vec<NetworkSpec> = (0..config.subjects as u64)
        .map(|s| match config.subject_concentration {
            Some(c) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, s, u64::MAX));
                jitter(&config.generator, c, &mut rng)
            }
            None => config.generator.clone(),
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..config.subjects)
        .flat_map(|s| (0..config.sequences_per_subject).map(move |q| (s, q)))
        .collect();
    let sequences = jobs
        .par_iter()
        .map(|&(s, q)| {
            let spec = &subjects[s];
            let sampler = Sampler::new(spec, &config.noise)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, s as u64, q as u64));
            let len = match config.frames_per_sequence {
                SequenceLength::Fixed(n) => n,
                SequenceLength::Uniform { min, max } => rng.random_range(min..=max),
            };
            let mut frames = Vec::with_capacity(len);
            let mut prev: Option<Vec<usize>> = None;
            for _ in 0..len {
                let slice = sampler.draw_slice(&mut rng, prev.as_deref());
                frames.push(sampler.frame(&mut rng, &slice));
                prev = Some(slice);
            }
            Ok(FrameSequence {
                subject_id: format!("s{:02}", s + 1),
                word: format!("utt{:03}", q + 1),
                fps: config.fps,
                frames,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = Corpus::empty(config.fps, aus, config.alphabet.clone());
    corpus.rng = Some(RNG_NAME.to_string());
    corpus.sequences = sequences;
    if config.generator.phone().is_none() {
        // phone-less generators still need a valid alphabet header
        corpus.alphabet = PhoneAlphabet::new(Vec::<String>::new())?;
    }
    Ok(corpus)
}

/// Activation counts per AU, phone occupancy and frame totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub aus: Vec<String>,
    pub au_counts: Vec<u64>,
    pub phones: Vec<String>,
    pub phone_counts: Vec<u64>,
    pub total_frames: u64,
}

pub fn empirical_stats(corpus: &Corpus) -> CorpusStats {
    let mut au_counts = vec![0u64; corpus.aus.len()];
    let mut phone_counts = vec![0u64; corpus.alphabet.len()];
    let mut total_frames = 0;
    for f in corpus.sequences.iter().flat_map(|s| &s.frames) {
        for (c, &a) in au_counts.iter_mut().zip(&f.au_truth) {
            *c += a as u64;
        }
        phone_counts[f.phone_truth] += 1;
        total_frames += 1;
    }
    CorpusStats {
        aus: corpus.aus.clone(),
        au_counts,
        phones: corpus.alphabet.labels().to_vec(),
        phone_counts,
        total_frames,
    }
}

impl CorpusStats {
    /// Merges counts of two reports over the same AU and phone sets.
    pub fn merge(&self, other: &CorpusStats) -> Result<CorpusStats> {
        if self.aus != other.aus || self.phones != other.phones {
            return Err(Error::InvalidArgument("stats cover different variables".into()));
        }
        let add = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(CorpusStats {
            aus: self.aus.clone(),
            au_counts: add(&self.au_counts, &other.au_counts),
            phones: self.phones.clone(),
            phone_counts: add(&self.phone_counts, &other.phone_counts),
            total_frames: self.total_frames + other.total_frames,
        })
    }

    /// One header row of AU names plus `Total Frames`, one row of counts.
    pub fn table_csv(&self, label: &str) -> String {
        let mut header = vec!["Subset".to_string()];
        header.extend(self.aus.iter().cloned());
        header.push("Total Frames".into());
        let mut row = vec![label.to_string()];
        row.extend(self.au_counts.iter().map(u64::to_string));
        row.push(self.total_frames.to_string());
        format!("{}\n{}\n", header.join(","), row.join(","))
    }

    pub fn phone_csv(&self) -> String {
        let mut out = String::from("phone,frames\n");
        for (p, c) in self.phones.iter().zip(&self.phone_counts) {
            out.push_str(&format!("{p},{c}\n"));
        }
        out
    }
}

/// The phone measurement variable name, when the layout has one.
pub fn phone_measurement() -> String {
    measurement_name(PHONE)
}
