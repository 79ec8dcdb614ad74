//! Python bindings: networks, exact inference, discretization, metrics,
//! the K2 family score, corpus simulation and LOSO evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use aufusion::alignment::{self, Corpus, PhoneAlphabet, Segment, SegmentTrack};
use aufusion::data::Dataset;
use aufusion::eval::{self, Confusion, LosoOptions, MethodConfig, MethodName};
use aufusion::infer::{DecodeMode, DecodePolicy, EvidenceFrame, Provenance};
use aufusion::model::{NetworkSpec, NodeRef, Role};
use aufusion::sim::{self, NoiseModel, SequenceLength, SimConfig, SimConfigFile};
use aufusion::structure;
use aufusion::{Engine, Error};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A discrete (dynamic) Bayesian network.
#[pyclass(name = "Network", frozen, skip_from_py_object, module = "aufusion_py")]
#[derive(Clone)]
struct PyNetwork {
    spec: NetworkSpec,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            spec: NetworkSpec::from_json(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            spec: NetworkSpec::load(Path::new(path)).map_err(to_py)?,
        })
    }

    /// The bundled 7-AU, 29-phone generator network.
    #[staticmethod]
    fn paper_instance() -> Self {
        PyNetwork {
            spec: aufusion::presets::generator(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        self.spec.to_json().map_err(to_py)
    }

    /// Every invariant violation as `location: message`; empty when valid.
    fn validate(&self) -> Vec<String> {
        self.spec.validate().iter().map(ToString::to_string).collect()
    }

    /// `(name, cardinality, role)` for every variable.
    #[getter]
    fn variables(&self) -> Vec<(String, usize, String)> {
        self.spec
            .variables
            .iter()
            .map(|v| {
                (v.name.clone(), v.cardinality, role_name(v.role).to_string())
            })
            .collect()
    }

    #[getter]
    fn intra_edges(&self) -> Vec<(String, String)> {
        self.spec.intra_edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect()
    }

    #[getter]
    fn inter_edges(&self) -> Vec<(String, String)> {
        self.spec.inter_edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect()
    }

    fn topological_order(&self) -> PyResult<Vec<String>> {
        self.spec.topological_order().map_err(to_py)
    }

    fn joint_log_prob(&self, assignment: BTreeMap<String, usize>) -> PyResult<f64> {
        self.spec.joint_log_prob(&assignment).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(variables={}, intra_edges={}, inter_edges={})",
            self.spec.variables.len(),
            self.spec.intra_edges.len(),
            self.spec.inter_edges.len()
        )
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::HiddenAu => "hidden-au",
        Role::HiddenPhone => "hidden-phone",
        Role::MeasurementAu => "measurement-au",
        Role::MeasurementPhone => "measurement-phone",
    }
}

/// Evidence frames from a list of `{"aus": {name: 0|1|None}, "phone": int|None}`.
fn evidence(frames: &Bound<'_, PyList>) -> PyResult<Vec<EvidenceFrame>> {
    frames
        .iter()
        .map(|item| {
            let d = item.cast::<PyDict>()?;
            let au_measurements = match d.get_item("aus")? {
                Some(a) if !a.is_none() => a.extract::<BTreeMap<String, Option<u8>>>()?,
                _ => BTreeMap::new(),
            };
            let phone_measurement = match d.get_item("phone")? {
                Some(p) => p.extract::<Option<usize>>()?,
                None => None,
            };
            Ok(EvidenceFrame {
                au_measurements,
                phone_measurement,
            })
        })
        .collect()
}

fn decode_mode(mode: &str) -> PyResult<DecodeMode> {
    match mode {
        "filtered" => Ok(DecodeMode::FilteredMarginal),
        "smoothed" => Ok(DecodeMode::SmoothedMarginal),
        "joint-map" => Ok(DecodeMode::JointMap),
        _ => Err(PyValueError::new_err(format!(
            "mode must be filtered, smoothed or joint-map, got `{mode}`"
        ))),
    }
}

/// Exact filtering and smoothing over the joint hidden state.
#[pyclass(name = "Engine", frozen, module = "aufusion_py")]
struct PyEngine {
    engine: Engine,
}

impl PyEngine {
    fn marginals(
        &self,
        py: Python<'_>,
        frames: &Bound<'_, PyList>,
        provenance: Provenance,
    ) -> PyResult<Vec<BTreeMap<String, Vec<f64>>>> {
        let ev = evidence(frames)?;
        let beliefs = py.detach(|| self.engine.infer(&ev, provenance)).map_err(to_py)?;
        Ok(beliefs
            .frames
            .iter()
            .map(|f| beliefs.variables.iter().cloned().zip(f.marginals.iter().cloned()).collect())
            .collect())
    }
}

#[pymethods]
impl PyEngine {
    #[new]
    fn new(network: &PyNetwork) -> PyResult<Self> {
        Ok(PyEngine {
            engine: Engine::new(&network.spec).map_err(to_py)?,
        })
    }

    #[getter]
    fn joint_states(&self) -> usize {
        self.engine.joint_states()
    }

    #[getter]
    fn hidden(&self) -> Vec<String> {
        self.engine.hidden_names().to_vec()
    }

    /// Per-frame marginals given the evidence up to each frame.
    fn filter(&self, py: Python<'_>, frames: &Bound<'_, PyList>) -> PyResult<Vec<BTreeMap<String, Vec<f64>>>> {
        self.marginals(py, frames, Provenance::Filtered)
    }

    /// Per-frame marginals given the whole sequence.
    fn smooth(&self, py: Python<'_>, frames: &Bound<'_, PyList>) -> PyResult<Vec<BTreeMap<String, Vec<f64>>>> {
        self.marginals(py, frames, Provenance::Smoothed)
    }

    fn log_evidence(&self, py: Python<'_>, frames: &Bound<'_, PyList>) -> PyResult<f64> {
        let ev = evidence(frames)?;
        py.detach(|| self.engine.log_evidence(&ev)).map_err(to_py)
    }

    /// Decoded labels per frame: `{"aus": {name: 0|1}, "phone": int|None}`.
    #[pyo3(signature = (frames, mode = "filtered", threshold = 0.5))]
    fn decode<'py>(
        &self,
        py: Python<'py>,
        frames: &Bound<'py, PyList>,
        mode: &str,
        threshold: f64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let policy = DecodePolicy::new(decode_mode(mode)?, threshold).map_err(to_py)?;
        let ev = evidence(frames)?;
        let decoded = py
            .detach(|| {
                let beliefs = self.engine.infer(&ev, policy.provenance())?;
                self.engine.decode(&beliefs, &policy)
            })
            .map_err(to_py)?;
        decoded
            .frames
            .iter()
            .map(|f| {
                let d = PyDict::new(py);
                let aus: BTreeMap<&str, u8> =
                    decoded.aus.iter().map(String::as_str).zip(f.aus.iter().copied()).collect();
                d.set_item("aus", aus)?;
                d.set_item("phone", f.phone)?;
                Ok(d)
            })
            .collect()
    }
}

/// Frame labels by midpoint sampling of `(label, start, end)` segments.
#[pyfunction]
#[pyo3(signature = (segments, alphabet, fps, frame_count, total_duration = None))]
fn discretize(
    segments: Vec<(String, f64, f64)>,
    alphabet: Vec<String>,
    fps: f64,
    frame_count: usize,
    total_duration: Option<f64>,
) -> PyResult<Vec<String>> {
    let alphabet = PhoneAlphabet::new(alphabet).map_err(to_py)?;
    let track = SegmentTrack::new(
        segments
            .into_iter()
            .map(|(label, start, end)| Segment { label, start, end })
            .collect(),
        total_duration,
    )
    .map_err(to_py)?;
    let ids = alignment::discretize(&track, fps, frame_count, &alphabet).map_err(to_py)?;
    Ok(ids.into_iter().map(|i| alphabet.label(i).to_string()).collect())
}

/// `(tp, fp, fn, tn)` of two binary series.
#[pyfunction]
fn confusion(truth: Vec<u8>, pred: Vec<u8>) -> PyResult<(u64, u64, u64, u64)> {
    let c = eval::confusion(&truth, &pred).map_err(to_py)?;
    Ok((c.tp, c.fp, c.fn_, c.tn))
}

/// F1, TPR, FPR and MCC of a confusion; 0/0 is taken as 0.
#[pyfunction]
fn metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> BTreeMap<&'static str, f64> {
    let c = Confusion { tp, fp, fn_, tn };
    BTreeMap::from([("f1", c.f1()), ("tpr", c.tpr()), ("fpr", c.fpr()), ("mcc", c.mcc())])
}

/// ROC points `(fpr, tpr)` for the rule `score >= threshold`.
#[pyfunction]
fn roc(truth: Vec<u8>, scores: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let points = eval::roc(&truth, &scores).map_err(to_py)?;
    Ok(points.into_iter().map(|p| (p.fpr, p.tpr)).collect())
}

/// Log K2 score of one family from raw columns of state indices.
#[pyfunction]
#[pyo3(signature = (child, child_card, parents = Vec::new(), parent_cards = Vec::new()))]
fn k2_family_log_score(
    child: Vec<usize>,
    child_card: usize,
    parents: Vec<Vec<usize>>,
    parent_cards: Vec<usize>,
) -> PyResult<f64> {
    if parents.len() != parent_cards.len() {
        return Err(PyValueError::new_err("parents and parent_cards differ in length"));
    }
    if parents.iter().any(|p| p.len() != child.len()) {
        return Err(PyValueError::new_err("parent columns must match the child column length"));
    }
    let mut cols = vec![(NodeRef::current("child"), child_card)];
    let parent_refs: Vec<NodeRef> = (0..parents.len()).map(|i| NodeRef::current(format!("p{i}"))).collect();
    cols.extend(parent_refs.iter().cloned().zip(parent_cards));
    let rows: Vec<Vec<Option<usize>>> = (0..child.len())
        .map(|r| std::iter::once(child[r]).chain(parents.iter().map(|p| p[r])).map(Some).collect())
        .collect();
    let data = Dataset::from_rows(cols, &rows).map_err(to_py)?;
    let stats = structure::count_stats(&data, &NodeRef::current("child"), &parent_refs).map_err(to_py)?;
    Ok(structure::k2_family_log_score(&stats))
}

/// Corpus JSON lines sampled from a configuration file.
#[pyfunction]
fn simulate(py: Python<'_>, config_path: &str, seed: u64) -> PyResult<String> {
    let path = Path::new(config_path);
    let config = SimConfigFile::load(path)
        .and_then(|f| f.resolve(path.parent().unwrap_or(Path::new(".")), Some(seed)))
        .map_err(to_py)?;
    py.detach(|| sim::sample_corpus(&config)?.to_jsonl()).map_err(to_py)
}

/// Corpus JSON lines from the bundled generator.
#[pyfunction]
#[pyo3(signature = (subjects, sequences_per_subject, frames, seed, noise = "clean-like"))]
fn simulate_paper_instance(
    py: Python<'_>,
    subjects: usize,
    sequences_per_subject: usize,
    frames: usize,
    seed: u64,
    noise: &str,
) -> PyResult<String> {
    let mut config = SimConfig::paper_instance(subjects, sequences_per_subject, SequenceLength::Fixed(frames), seed);
    config.noise = NoiseModel::preset(noise).map_err(to_py)?;
    py.detach(|| sim::sample_corpus(&config)?.to_jsonl()).map_err(to_py)
}

/// Leave-one-subject-out report as a JSON string.
#[pyfunction]
#[pyo3(signature = (corpus_jsonl, methods = None, jobs = 1))]
fn evaluate(py: Python<'_>, corpus_jsonl: &str, methods: Option<Vec<String>>, jobs: usize) -> PyResult<String> {
    let corpus = Corpus::from_jsonl(corpus_jsonl, "<corpus>").map_err(to_py)?;
    let methods: Vec<MethodConfig> = match methods {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<MethodName>().map(MethodConfig::new))
            .collect::<Result<_, _>>()
            .map_err(to_py)?,
        None => MethodName::ALL.into_iter().map(MethodConfig::new).collect(),
    };
    let options = LosoOptions {
        jobs: Some(jobs.max(1)),
        ..Default::default()
    };
    py.detach(|| eval::run_loso(&corpus, &methods, &options)?.to_json())
        .map_err(to_py)
}

#[pymodule]
fn aufusion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(k2_family_log_score, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_paper_instance, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
