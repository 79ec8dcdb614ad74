//! Leave-one-subject-out evaluation of the method ladder, and the binary
//! detection metrics used to score it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::{Corpus, FrameSequence};
use crate::data::Layout;
use crate::error::{Error, Result};
use crate::infer::{DecodePolicy, Engine, EvidenceFrame};
use crate::io::write_atomic;
use crate::model::{Edge, NetworkSpec, Variable, PHONE};
use crate::params::{fit_all, SmoothingPolicy};
use crate::presets;
use crate::structure::{
    inject_expert_edges, k2_search, transition_search, OrderingPolicy, DEFAULT_MAX_PARENTS, DEFAULT_PARENT_CAP,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Swaps the roles of the two classes.
    pub fn swapped(&self) -> Confusion {
        Confusion {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn f1(&self) -> f64 {
        let tp = self.tp as f64;
        ratio(2.0 * tp, 2.0 * tp + self.fp as f64 + self.fn_ as f64)
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp as f64, (self.fp + self.tn) as f64)
    }

    pub fn mcc(&self) -> f64 {
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        ratio(tp * tn - fp * fn_, den).clamp(-1.0, 1.0)
    }

    /// Metrics whose denominator was zero and were set to 0.
    pub fn zero_division(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if 2 * self.tp + self.fp + self.fn_ == 0 {
            out.push("f1");
        }
        if self.tp + self.fn_ == 0 {
            out.push("tpr");
        }
        if self.fp + self.tn == 0 {
            out.push("fpr");
        }
        if self.tp + self.fp == 0 || self.tp + self.fn_ == 0 || self.tn + self.fp == 0 || self.tn + self.fn_ == 0 {
            out.push("mcc");
        }
        out
    }
}

pub fn confusion(truth: &[u8], pred: &[u8]) -> Result<Confusion> {
    if truth.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "truth has {} frames but prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(pred) {
        match (t != 0, p != 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn f1(c: &Confusion) -> f64 {
    c.f1()
}

pub fn tpr(c: &Confusion) -> f64 {
    c.tpr()
}

pub fn fpr(c: &Confusion) -> f64 {
    c.fpr()
}

pub fn mcc(c: &Confusion) -> f64 {
    c.mcc()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points for the rule `score >= τ`, over τ = +∞, every distinct score
/// in decreasing order, and -∞. Repeated consecutive points are dropped.
pub fn roc(truth: &[u8], scores: &[f64]) -> Result<Vec<RocPoint>> {
    if truth.len() != scores.len() {
        return Err(Error::InvalidArgument(format!(
            "truth has {} frames but scores has {}",
            truth.len(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
    }
    let pos = truth.iter().filter(|&&t| t != 0).count() as f64;
    let neg = truth.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] != 0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: ratio(fp, neg),
            tpr: ratio(tp, pos),
        });
    }
    points.push(RocPoint {
        fpr: ratio(fp, neg),
        tpr: ratio(tp, pos),
    });
    points.dedup();
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodName {
    MeasurementOnly,
    StaticBn,
    DbnVisualOnly,
    DbnLearned,
    DbnExpert,
}

impl MethodName {
    pub const ALL: [MethodName; 5] = [
        MethodName::MeasurementOnly,
        MethodName::StaticBn,
        MethodName::DbnVisualOnly,
        MethodName::DbnLearned,
        MethodName::DbnExpert,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::MeasurementOnly => "measurement-only",
            MethodName::StaticBn => "static-bn",
            MethodName::DbnVisualOnly => "dbn-visual-only",
            MethodName::DbnLearned => "dbn-learned",
            MethodName::DbnExpert => "dbn-expert",
        }
    }

    pub fn needs_phone(self) -> bool {
        matches!(self, MethodName::StaticBn | MethodName::DbnLearned | MethodName::DbnExpert)
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub name: MethodName,
    pub decode: DecodePolicy,
}

impl MethodConfig {
    pub fn new(name: MethodName) -> Self {
        MethodConfig {
            name,
            decode: DecodePolicy::default(),
        }
    }
}

/// Structure and parameter learning options shared by the model-based methods.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub ordering: OrderingPolicy,
    /// Previous-slice parent limit for the transition search.
    pub transition_max_parents: usize,
    /// AUs whose previous state is linked to the current phone by the
    /// expert method; `None` means the lip-shaping AUs present in the
    /// corpus, or every AU when there are none.
    pub expert_sources: Option<Vec<String>>,
    pub parent_cap: usize,
    pub smoothing: SmoothingPolicy,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            ordering: OrderingPolicy::default(),
            transition_max_parents: DEFAULT_MAX_PARENTS,
            expert_sources: None,
            parent_cap: DEFAULT_PARENT_CAP,
            smoothing: SmoothingPolicy::new(EVAL_ALPHA).expect("valid alpha"),
        }
    }
}

/// Pseudo-count used when fitting evaluation models. The expert phone
/// family has thousands of rows; at α = 1 the sparse ones flatten toward
/// uniform.
pub const EVAL_ALPHA: f64 = 0.01;

fn default_expert_sources(aus: &[String]) -> Vec<String> {
    let lips: Vec<String> = aus
        .iter()
        .filter(|a| presets::LIP_SHAPING.contains(&a.as_str()))
        .cloned()
        .collect();
    if lips.is_empty() {
        aus.to_vec()
    } else {
        lips
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Sum confusions over folds, then compute rates.
    #[default]
    Micro,
    /// Compute rates per fold and average them.
    PerFoldMean,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LosoOptions {
    pub train: TrainOptions,
    pub pooling: Pooling,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

/// Models fitted on one training split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub models: BTreeMap<MethodName, NetworkSpec>,
}

fn with_edges(aus: &[String], phone_card: Option<usize>, intra: &[Edge], inter: &[Edge]) -> NetworkSpec {
    let mut spec = presets::skeleton(aus, phone_card);
    spec.intra_edges.extend(intra.iter().cloned());
    spec.inter_edges.extend(inter.iter().cloned());
    spec
}

fn hidden_variables(layout: &Layout) -> Vec<Variable> {
    presets::skeleton(&layout.aus, layout.phone_card)
        .hidden()
        .cloned()
        .collect()
}

/// Learns structure once and fits every requested model on `train`.
pub fn train_models(
    corpus: &Corpus,
    train: &[&FrameSequence],
    methods: &[MethodName],
    options: &TrainOptions,
) -> Result<TrainedModels> {
    let mut models = BTreeMap::new();
    let wanted = |m: MethodName| methods.contains(&m);
    if !methods.iter().any(|&m| m != MethodName::MeasurementOnly) {
        return Ok(TrainedModels { models });
    }
    let layout = Layout::of(corpus);
    let frames = layout.frame_records(train.iter().copied())?;
    let pairs = layout.transition_records(train.iter().copied())?;
    let initial = layout.initial_records(train.iter().copied())?;
    let hidden = hidden_variables(&layout);
    let intra = k2_search(&frames, &hidden, &options.ordering)?;
    let names: Vec<String> = hidden.iter().map(|v| v.name.clone()).collect();
    let needs_dbn = methods
        .iter()
        .any(|m| matches!(m, MethodName::DbnVisualOnly | MethodName::DbnLearned | MethodName::DbnExpert));
    let inter = if needs_dbn {
        transition_search(&pairs, &names, &intra, options.transition_max_parents)?
    } else {
        Vec::new()
    };
    let phone_card = layout.phone_card;

    if wanted(MethodName::StaticBn) {
        let s = with_edges(&layout.aus, phone_card, &intra, &[]);
        models.insert(MethodName::StaticBn, fit_all(&s, &frames, None, options.smoothing)?);
    }
    let learned = with_edges(&layout.aus, phone_card, &intra, &inter);
    if wanted(MethodName::DbnLearned) {
        let spec = fit_all(&learned, &initial, Some(&pairs), options.smoothing)?;
        models.insert(MethodName::DbnLearned, spec);
    }
    if wanted(MethodName::DbnExpert) {
        let sources = options
            .expert_sources
            .clone()
            .unwrap_or_else(|| default_expert_sources(&layout.aus));
        let edges: Vec<Edge> = sources.into_iter().map(|a| Edge::new(a, PHONE)).collect();
        let s = inject_expert_edges(&learned, &edges, options.parent_cap)?;
        models.insert(MethodName::DbnExpert, fit_all(&s, &initial, Some(&pairs), options.smoothing)?);
    }
    if wanted(MethodName::DbnVisualOnly) {
        let visual = layout.clone().without_phone();
        let keep = |e: &&Edge| e.from != PHONE && e.to != PHONE;
        let intra: Vec<Edge> = intra.iter().filter(keep).cloned().collect();
        let inter: Vec<Edge> = inter.iter().filter(keep).cloned().collect();
        let s = with_edges(&visual.aus, None, &intra, &inter);
        let initial = visual.initial_records(train.iter().copied())?;
        let pairs = visual.transition_records(train.iter().copied())?;
        models.insert(MethodName::DbnVisualOnly, fit_all(&s, &initial, Some(&pairs), options.smoothing)?);
    }
    Ok(TrainedModels { models })
}

/// Evidence frames for a sequence; phone measurements are dropped when
/// `with_phone` is false.
pub fn evidence_of(corpus: &Corpus, seq: &FrameSequence, with_phone: bool) -> Vec<EvidenceFrame> {
    seq.frames
        .iter()
        .map(|f| EvidenceFrame {
            au_measurements: corpus.aus.iter().cloned().zip(f.au_meas.iter().copied()).collect(),
            phone_measurement: if with_phone { f.phone_meas } else { None },
        })
        .collect()
}

/// Per-AU truth, prediction and score series.
#[derive(Debug, Clone, Default, PartialEq)]
struct Series {
    truth: Vec<u8>,
    pred: Vec<u8>,
    score: Vec<f64>,
}

fn predict(
    corpus: &Corpus,
    seqs: &[&FrameSequence],
    method: &MethodConfig,
    model: Option<&NetworkSpec>,
) -> Result<Vec<Series>> {
    let mut out = vec![Series::default(); corpus.aus.len()];
    let engine = model.map(Engine::new).transpose()?;
    for seq in seqs {
        for (a, s) in out.iter_mut().enumerate() {
            s.truth.extend(seq.frames.iter().map(|f| f.au_truth[a]));
        }
        match &engine {
            None => {
                for (a, s) in out.iter_mut().enumerate() {
                    for f in &seq.frames {
                        s.pred.push(f.au_meas[a].unwrap_or(0));
                        s.score.push(f.au_meas[a].map_or(0.5, f64::from));
                    }
                }
            }
            Some(engine) => {
                let with_phone = method.name != MethodName::DbnVisualOnly;
                let evidence = evidence_of(corpus, seq, with_phone);
                let beliefs = engine.infer(&evidence, method.decode.provenance())?;
                let decoded = engine.decode(&beliefs, &method.decode)?;
                for (a, s) in out.iter_mut().enumerate() {
                    let au = &corpus.aus[a];
                    let k = decoded
                        .aus
                        .iter()
                        .position(|n| n == au)
                        .ok_or_else(|| Error::UnknownVariable(au.clone()))?;
                    s.pred.extend(decoded.frames.iter().map(|d| d.aus[k]));
                    for t in 0..seq.frames.len() {
                        s.score.push(beliefs.marginal(t, au).expect("AU in model")[1]);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuMetrics {
    pub au: String,
    pub confusion: Confusion,
    pub f1: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub mcc: f64,
    /// Metrics that hit a zero denominator somewhere and were set to 0.
    pub zero_division: Vec<&'static str>,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub aus: Vec<AuMetrics>,
    pub macro_f1: f64,
    pub macro_tpr: f64,
    pub macro_fpr: f64,
    pub macro_mcc: f64,
}

impl MethodMetrics {
    pub fn au(&self, au: &str) -> Option<&AuMetrics> {
        self.aus.iter().find(|m| m.au == au)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub pooling: Pooling,
    pub zero_division_rule: &'static str,
    pub folds: Vec<String>,
    pub methods: Vec<MethodMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl MetricsReport {
    pub fn method(&self, name: MethodName) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == name.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,au,tp,fp,fn,tn,f1,tpr,fpr,mcc,zero_division\n");
        for m in &self.methods {
            for a in &m.aus {
                let c = a.confusion;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    m.method,
                    a.au,
                    c.tp,
                    c.fp,
                    c.fn_,
                    c.tn,
                    a.f1,
                    a.tpr,
                    a.fpr,
                    a.mcc,
                    a.zero_division.join(";")
                ));
            }
            out.push_str(&format!(
                "{},macro,,,,,{},{},{},{},\n",
                m.method, m.macro_f1, m.macro_tpr, m.macro_fpr, m.macro_mcc
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `roc_<method>_<au>.csv` files into `dir`.
    pub fn write_roc(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &self.methods {
            for a in &m.aus {
                let mut text = String::from("fpr,tpr\n");
                for p in &a.roc {
                    text.push_str(&format!("{},{}\n", p.fpr, p.tpr));
                }
                write_atomic(&dir.join(format!("roc_{}_{}.csv", m.method, a.au)), text.as_bytes())?;
            }
        }
        Ok(())
    }
}

/// Held-out subject, its test sequences, and every other subject's sequences.
pub type Fold<'a> = (String, Vec<&'a FrameSequence>, Vec<&'a FrameSequence>);

/// One fold per subject, in order of first appearance.
pub fn folds(corpus: &Corpus) -> Result<Vec<Fold<'_>>> {
    let subjects = corpus.subjects();
    if subjects.len() < 2 {
        return Err(Error::Corpus(format!(
            "leave-one-subject-out needs at least 2 subjects, corpus has {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<&FrameSequence>, Vec<&FrameSequence>) =
                corpus.sequences.iter().partition(|q| q.subject_id == s);
            (s, test, train)
        })
        .collect())
}

fn run_fold(
    corpus: &Corpus,
    test: &[&FrameSequence],
    train: &[&FrameSequence],
    methods: &[MethodConfig],
    options: &TrainOptions,
) -> Result<Vec<Vec<Series>>> {
    let names: Vec<MethodName> = methods.iter().map(|m| m.name).collect();
    let trained = train_models(corpus, train, &names, options)?;
    methods
        .iter()
        .map(|m| predict(corpus, test, m, trained.models.get(&m.name)))
        .collect()
}

pub fn run_loso(corpus: &Corpus, methods: &[MethodConfig], options: &LosoOptions) -> Result<MetricsReport> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    if let Some(m) = methods.iter().find(|m| m.name.needs_phone()) {
        if !corpus.has_phone_evidence() {
            return Err(Error::Corpus(format!("method `{}` needs phone measurements", m.name)));
        }
    }
    let folds = folds(corpus)?;
    let work = || -> Result<Vec<Vec<Vec<Series>>>> {
        folds
            .par_iter()
            .map(|(_, test, train)| run_fold(corpus, test, train, methods, &options.train))
            .collect()
    };
    let per_fold = match options.jobs {
        None => work()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
    };

    let mut report = MetricsReport {
        pooling: options.pooling,
        zero_division_rule: "0/0 -> 0",
        folds: folds.iter().map(|f| f.0.clone()).collect(),
        methods: Vec::new(),
    };
    for (mi, m) in methods.iter().enumerate() {
        let mut aus = Vec::new();
        for (a, au) in corpus.aus.iter().enumerate() {
            let series: Vec<&Series> = per_fold.iter().map(|f| &f[mi][a]).collect();
            let confs: Vec<Confusion> = series
                .iter()
                .map(|s| confusion(&s.truth, &s.pred))
                .collect::<Result<_>>()?;
            let mut pooled = Confusion::default();
            confs.iter().for_each(|c| pooled.add(c));
            let truth: Vec<u8> = series.iter().flat_map(|s| s.truth.iter().copied()).collect();
            let score: Vec<f64> = series.iter().flat_map(|s| s.score.iter().copied()).collect();
            let (f1, tpr, fpr, mcc, mut zero) = match options.pooling {
                Pooling::Micro => (pooled.f1(), pooled.tpr(), pooled.fpr(), pooled.mcc(), pooled.zero_division()),
                Pooling::PerFoldMean => {
                    let mut zero: Vec<&'static str> = confs.iter().flat_map(|c| c.zero_division()).collect();
                    zero.sort_unstable();
                    zero.dedup();
                    (
                        mean(confs.iter().map(Confusion::f1)),
                        mean(confs.iter().map(Confusion::tpr)),
                        mean(confs.iter().map(Confusion::fpr)),
                        mean(confs.iter().map(Confusion::mcc)),
                        zero,
                    )
                }
            };
            zero.sort_unstable();
            aus.push(AuMetrics {
                au: au.clone(),
                confusion: pooled,
                f1,
                tpr,
                fpr,
                mcc,
                zero_division: zero,
                roc: roc(&truth, &score)?,
            });
        }
        report.methods.push(MethodMetrics {
            method: m.name.as_str().to_string(),
            macro_f1: mean(aus.iter().map(|a| a.f1)),
            macro_tpr: mean(aus.iter().map(|a| a.tpr)),
            macro_fpr: mean(aus.iter().map(|a| a.fpr)),
            macro_mcc: mean(aus.iter().map(|a| a.mcc)),
            aus,
        });
    }
    Ok(report)
}
