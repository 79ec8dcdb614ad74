//! Command-line front end. Each subcommand reads files, runs one stage and
//! writes its outputs atomically.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::Corpus;
use crate::data::Layout;
use crate::error::{Error, Result};
use crate::eval::{self, LosoOptions, MethodConfig, MethodName, Pooling, TrainOptions, EVAL_ALPHA};
use crate::infer::{DecodeMode, DecodePolicy, Engine};
use crate::io::write_atomic;
use crate::model::{Edge, NetworkSpec, Role, PHONE};
use crate::params::{fit_all, SmoothingPolicy};
use crate::presets;
use crate::sim::{empirical_stats, sample_corpus, SimConfigFile};
use crate::structure::{
    inject_expert_edges, k2_search, transition_search, OrderingPolicy, DEFAULT_MAX_PARENTS, DEFAULT_PARENT_CAP,
};

#[derive(Debug, Parser)]
#[command(name = "aufusion", version, about = "Audiovisual AU recognition with dynamic Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic corpus from a configuration file.
    Simulate(SimulateArgs),
    /// Learn intra-slice edges among the hidden variables with K2.
    LearnStructure(LearnStructureArgs),
    /// Learn inter-slice edges with BIC hill climbing.
    LearnTransitions(LearnTransitionsArgs),
    /// Add previous-slice AU -> phone edges to a structure or model.
    InjectExpert(InjectExpertArgs),
    /// Fit CPTs of a structure from labeled data.
    FitParams(FitParamsArgs),
    /// Run filtering or smoothing over every sequence of a corpus.
    Infer(InferArgs),
    /// Leave-one-subject-out evaluation of the method ladder.
    Evaluate(EvaluateArgs),
    /// AU activation counts and phone occupancy of a corpus.
    Stats(StatsArgs),
    /// Check a model file and list every violation.
    ValidateModel(ValidateModelArgs),
}

#[derive(Debug, Args)]
struct Jobs {
    /// Worker threads (output does not depend on this).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Frame rate; overrides the config value (which itself defaults to 60).
    #[arg(long, value_parser = positive)]
    fps: Option<f64>,
    #[command(flatten)]
    jobs: Jobs,
}

#[derive(Debug, Args)]
struct LearnStructureArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_PARENTS)]
    max_parents: usize,
    /// Comma-separated variable ordering [default: Phone, then AUs by
    /// descending activation count].
    #[arg(long, value_delimiter = ',')]
    ordering: Option<Vec<String>>,
    /// Leave out the phone variable.
    #[arg(long)]
    no_phone: bool,
}

#[derive(Debug, Args)]
struct LearnTransitionsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_PARENTS)]
    max_parents: usize,
}

#[derive(Debug, Args)]
struct InjectExpertArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated AUs to link to the phone [default: AU18,AU22,AU24
    /// when present, else every AU].
    #[arg(long, value_delimiter = ',')]
    sources: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_PARENT_CAP)]
    parent_cap: usize,
}

#[derive(Debug, Args)]
struct FitParamsArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Additive smoothing pseudo-count.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    alpha: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Filtered,
    Smoothed,
    JointMap,
}

impl From<Mode> for DecodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Filtered => DecodeMode::FilteredMarginal,
            Mode::Smoothed => DecodeMode::SmoothedMarginal,
            Mode::JointMap => DecodeMode::JointMap,
        }
    }
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Filtered)]
    mode: Mode,
    #[arg(long, default_value_t = 0.5, value_parser = open_unit)]
    threshold: f64,
    #[command(flatten)]
    jobs: Jobs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    Micro,
    PerFoldMean,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// CSV report (rows are method x AU plus one macro row per method).
    #[arg(long)]
    out: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "measurement-only,static-bn,dbn-visual-only,dbn-learned,dbn-expert"
    )]
    methods: Vec<String>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Directory for per-method, per-AU ROC point files.
    #[arg(long)]
    roc_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Filtered)]
    mode: Mode,
    #[arg(long, default_value_t = 0.5, value_parser = open_unit)]
    threshold: f64,
    #[arg(long, default_value_t = EVAL_ALPHA, value_parser = non_negative)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_PARENTS)]
    max_parents: usize,
    /// Comma-separated expert AUs [default: AU18,AU22,AU24 when present,
    /// else every AU].
    #[arg(long, value_delimiter = ',')]
    expert_sources: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_PARENT_CAP)]
    parent_cap: usize,
    #[arg(long, value_enum, default_value_t = PoolingArg::Micro)]
    pooling: PoolingArg,
    #[command(flatten)]
    jobs: Jobs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// AU count table (AU columns plus Total Frames).
    #[arg(long)]
    out: PathBuf,
    /// Row label of the table.
    #[arg(long, default_value = "corpus")]
    label: String,
    /// Also write phone occupancy.
    #[arg(long)]
    phones: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateModelArgs {
    #[arg(long)]
    model: PathBuf,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a number >= 0, got `{s}`")),
    }
}

fn open_unit(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number strictly between 0 and 1, got `{s}`")),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 data or model error, 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(Error::InvalidArgument(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::LearnStructure(a) => learn_structure(a),
        Command::LearnTransitions(a) => learn_transitions(a),
        Command::InjectExpert(a) => inject_expert(a),
        Command::FitParams(a) => fit_params(a),
        Command::Infer(a) => infer(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Stats(a) => stats(a),
        Command::ValidateModel(a) => validate_model(a),
    }
}

fn pool(jobs: &Jobs) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.jobs as usize)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn write_json(path: &Path, spec: &NetworkSpec) -> Result<()> {
    let mut text = spec.to_json()?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let file = SimConfigFile::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let mut config = file.resolve(base, Some(a.seed))?;
    if let Some(fps) = a.fps {
        config.fps = fps;
    }
    let corpus = pool(&a.jobs)?.install(|| sample_corpus(&config))?;
    corpus.write(&a.out)
}

/// The layout whose hidden variables are those of `spec`.
fn layout_for(corpus: &Corpus, spec: &NetworkSpec) -> Result<Layout> {
    let layout = Layout::of(corpus);
    let aus: Vec<&str> = spec
        .hidden()
        .filter(|v| v.role == Role::HiddenAu)
        .map(|v| v.name.as_str())
        .collect();
    if aus != layout.aus.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Corpus(format!(
            "corpus AUs {:?} do not match the model's {aus:?}",
            layout.aus
        )));
    }
    match spec.phone() {
        Some(p) if p.cardinality != corpus.alphabet.len() => Err(Error::Corpus(format!(
            "corpus alphabet has {} states but `{PHONE}` has {}",
            corpus.alphabet.len(),
            p.cardinality
        ))),
        Some(_) => Ok(layout),
        None => Ok(layout.without_phone()),
    }
}

fn learn_structure(a: LearnStructureArgs) -> Result<()> {
    let corpus = Corpus::read(&a.corpus)?;
    let mut layout = Layout::of(&corpus);
    if a.no_phone {
        layout = layout.without_phone();
    }
    let frames = layout.frame_records(&corpus.sequences)?;
    let mut spec = presets::skeleton(&layout.aus, layout.phone_card);
    let hidden: Vec<_> = spec.hidden().cloned().collect();
    let policy = match a.ordering {
        Some(order) => OrderingPolicy::explicit(order, a.max_parents),
        None => OrderingPolicy {
            max_parents: a.max_parents,
            ..Default::default()
        },
    };
    spec.intra_edges.extend(k2_search(&frames, &hidden, &policy)?);
    write_json(&a.out, &spec)
}

fn hidden_intra(spec: &NetworkSpec) -> Vec<Edge> {
    spec.intra_edges
        .iter()
        .filter(|e| spec.variable(&e.to).is_ok_and(|v| v.role.is_hidden()))
        .cloned()
        .collect()
}

fn learn_transitions(a: LearnTransitionsArgs) -> Result<()> {
    let corpus = Corpus::read(&a.corpus)?;
    let mut spec = NetworkSpec::load(&a.structure)?;
    let layout = layout_for(&corpus, &spec)?;
    let pairs = layout.transition_records(&corpus.sequences)?;
    let names: Vec<String> = spec.hidden().map(|v| v.name.clone()).collect();
    spec.inter_edges = transition_search(&pairs, &names, &hidden_intra(&spec), a.max_parents)?;
    spec.cpts.clear();
    spec.transition_cpts = None;
    write_json(&a.out, &spec)
}

fn inject_expert(a: InjectExpertArgs) -> Result<()> {
    let spec = NetworkSpec::load(&a.structure)?;
    let aus: Vec<String> = spec
        .hidden()
        .filter(|v| v.role == Role::HiddenAu)
        .map(|v| v.name.clone())
        .collect();
    let sources = a.sources.unwrap_or_else(|| {
        let lips: Vec<String> = aus
            .iter()
            .filter(|n| presets::LIP_SHAPING.contains(&n.as_str()))
            .cloned()
            .collect();
        if lips.is_empty() {
            aus.clone()
        } else {
            lips
        }
    });
    let edges: Vec<Edge> = sources.into_iter().map(|s| Edge::new(s, PHONE)).collect();
    write_json(&a.out, &inject_expert_edges(&spec, &edges, a.parent_cap)?)
}

fn fit_params(a: FitParamsArgs) -> Result<()> {
    let corpus = Corpus::read(&a.corpus)?;
    let structure = NetworkSpec::load(&a.structure)?;
    let layout = layout_for(&corpus, &structure)?;
    let smoothing = SmoothingPolicy::new(a.alpha)?;
    let spec = if structure.inter_edges.is_empty() {
        fit_all(&structure, &layout.frame_records(&corpus.sequences)?, None, smoothing)?
    } else {
        let initial = layout.initial_records(&corpus.sequences)?;
        let pairs = layout.transition_records(&corpus.sequences)?;
        fit_all(&structure, &initial, Some(&pairs), smoothing)?
    };
    write_json(&a.out, &spec)
}

#[derive(Serialize)]
struct BeliefRecord<'a> {
    subject_id: &'a str,
    word: &'a str,
    frame: usize,
    log_evidence: Option<f64>,
    marginals: BTreeMap<&'a str, &'a [f64]>,
    aus: BTreeMap<&'a str, u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phone: Option<&'a str>,
}

fn infer(a: InferArgs) -> Result<()> {
    let spec = NetworkSpec::load(&a.model)?;
    let corpus = Corpus::read(&a.corpus)?;
    layout_for(&corpus, &spec)?;
    let engine = Engine::new(&spec)?;
    let policy = DecodePolicy::new(a.mode.into(), a.threshold)?;
    let with_phone = spec.phone().is_some();
    let chunks = pool(&a.jobs)?.install(|| {
        corpus
            .sequences
            .par_iter()
            .map(|seq| -> Result<String> {
                let evidence = eval::evidence_of(&corpus, seq, with_phone);
                let beliefs = engine.infer(&evidence, policy.provenance())?;
                let decoded = engine.decode(&beliefs, &policy)?;
                let mut out = String::new();
                for (t, (b, d)) in beliefs.frames.iter().zip(&decoded.frames).enumerate() {
                    let record = BeliefRecord {
                        subject_id: &seq.subject_id,
                        word: &seq.word,
                        frame: t,
                        log_evidence: b.joint_log_evidence.is_finite().then_some(b.joint_log_evidence),
                        marginals: beliefs
                            .variables
                            .iter()
                            .map(String::as_str)
                            .zip(b.marginals.iter().map(Vec::as_slice))
                            .collect(),
                        aus: decoded.aus.iter().map(String::as_str).zip(d.aus.iter().copied()).collect(),
                        phone: d.phone.map(|p| corpus.alphabet.label(p)),
                    };
                    out.push_str(&serde_json::to_string(&record)?);
                    out.push('\n');
                }
                Ok(out)
            })
            .collect::<Result<Vec<String>>>()
    })?;
    write_atomic(&a.out, chunks.concat().as_bytes())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let corpus = Corpus::read(&a.corpus)?;
    let decode = DecodePolicy::new(a.mode.into(), a.threshold)?;
    let mut methods = Vec::new();
    for name in &a.methods {
        let name: MethodName = name.parse()?;
        if methods.iter().any(|m: &MethodConfig| m.name == name) {
            return Err(Error::InvalidArgument(format!("method `{name}` listed twice")));
        }
        methods.push(MethodConfig { name, decode });
    }
    let options = LosoOptions {
        train: TrainOptions {
            ordering: OrderingPolicy {
                max_parents: a.max_parents,
                ..Default::default()
            },
            transition_max_parents: a.max_parents,
            expert_sources: a.expert_sources,
            parent_cap: a.parent_cap,
            smoothing: SmoothingPolicy::new(a.alpha)?,
        },
        pooling: match a.pooling {
            PoolingArg::Micro => Pooling::Micro,
            PoolingArg::PerFoldMean => Pooling::PerFoldMean,
        },
        jobs: Some(a.jobs.jobs as usize),
    };
    let report = eval::run_loso(&corpus, &methods, &options)?;
    let json = a.json.as_ref().map(|_| report.to_json()).transpose()?;
    write_atomic(&a.out, report.to_csv().as_bytes())?;
    if let (Some(path), Some(text)) = (&a.json, json) {
        write_atomic(path, text.as_bytes())?;
    }
    if let Some(dir) = &a.roc_dir {
        report.write_roc(dir)?;
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let corpus = Corpus::read(&a.corpus)?;
    let stats = empirical_stats(&corpus);
    write_atomic(&a.out, stats.table_csv(&a.label).as_bytes())?;
    if let Some(path) = &a.phones {
        write_atomic(path, stats.phone_csv().as_bytes())?;
    }
    Ok(())
}

fn validate_model(a: ValidateModelArgs) -> Result<()> {
    let spec = NetworkSpec::load(&a.model)?;
    let violations = spec.validate();
    if violations.is_empty() {
        println!("ok: {} variables", spec.variables.len());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Error::InvalidModel(format!("{} violation(s)", violations.len())))
}
