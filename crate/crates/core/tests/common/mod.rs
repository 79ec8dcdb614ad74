//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use aufusion::data::Dataset;
use aufusion::infer::EvidenceFrame;
use aufusion::model::{measurement_name, Cpt, Edge, NetworkSpec, NodeRef, Role, Variable, PHONE};
use aufusion::structure::SufficientStats;
use num::{BigInt, One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_row(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn random_cpt(rng: &mut impl Rng, spec: &NetworkSpec, child: &str, parents: Vec<NodeRef>) -> Cpt {
    let k = spec.cardinality(child).unwrap();
    let configs: usize = parents.iter().map(|p| spec.cardinality(&p.name).unwrap()).product();
    let table = (0..configs).flat_map(|_| random_row(rng, k)).collect();
    Cpt::new(child, parents, table)
}

/// A random two-slice network over `binaries` hidden AUs named `A0..` and
/// an optional phone of `phone_card` states, each with a measurement node.
pub fn random_dbn(rng: &mut impl Rng, binaries: usize, phone_card: Option<usize>, dynamic: bool) -> NetworkSpec {
    let mut hidden: Vec<Variable> = (0..binaries)
        .map(|i| Variable::new(format!("A{i}"), 2, Role::HiddenAu))
        .collect();
    if let Some(p) = phone_card {
        hidden.push(Variable::new(PHONE, p, Role::HiddenPhone));
    }
    let mut variables = hidden.clone();
    let mut spec = NetworkSpec::default();
    let mut order: Vec<usize> = (0..hidden.len()).collect();
    order.shuffle(rng);
    for (j, &child) in order.iter().enumerate() {
        let mut parents = 0;
        for &parent in &order[..j] {
            if parents < 2 && rng.random_bool(0.4) {
                spec.intra_edges.push(Edge::new(hidden[parent].name.clone(), hidden[child].name.clone()));
                parents += 1;
            }
        }
    }
    for h in &hidden {
        let role = if h.role == Role::HiddenPhone {
            Role::MeasurementPhone
        } else {
            Role::MeasurementAu
        };
        variables.push(Variable::new(measurement_name(&h.name), h.cardinality, role));
        spec.intra_edges.push(Edge::new(h.name.clone(), measurement_name(&h.name)));
    }
    if dynamic {
        for x in &hidden {
            for y in &hidden {
                let p = if x.name == y.name { 0.7 } else { 0.25 };
                if rng.random_bool(p) {
                    spec.inter_edges.push(Edge::new(x.name.clone(), y.name.clone()));
                }
            }
        }
    }
    spec.variables = variables;
    let names: Vec<String> = spec.variables.iter().map(|v| v.name.clone()).collect();
    spec.cpts = names
        .iter()
        .map(|n| random_cpt(rng, &spec, n, spec.initial_family(n)))
        .collect();
    if dynamic {
        spec.transition_cpts = Some(
            names
                .iter()
                .map(|n| random_cpt(rng, &spec, n, spec.transition_family(n)))
                .collect(),
        );
    }
    spec
}

/// Random evidence: each measurement is observed with probability 0.75;
/// unobserved AUs are randomly either absent or explicit nulls.
pub fn random_evidence(rng: &mut impl Rng, spec: &NetworkSpec, frames: usize) -> Vec<EvidenceFrame> {
    (0..frames)
        .map(|_| {
            let mut f = EvidenceFrame::default();
            for h in spec.hidden() {
                let observed = rng.random_bool(0.75);
                let state = rng.random_range(0..h.cardinality);
                match h.role {
                    Role::HiddenPhone => f.phone_measurement = observed.then_some(state),
                    _ => {
                        if observed {
                            f.au_measurements.insert(h.name.clone(), Some(state as u8));
                        } else if rng.random_bool(0.5) {
                            f.au_measurements.insert(h.name.clone(), None);
                        }
                    }
                }
            }
            f
        })
        .collect()
}

/// Exact posteriors by enumerating every hidden trajectory.
pub struct Enumeration {
    pub hidden: Vec<String>,
    pub cards: Vec<usize>,
    /// `filtered[t][x]`: P(joint hidden state x at t | evidence 1..t).
    pub filtered: Vec<Vec<f64>>,
    /// `smoothed[t][x]`: P(joint hidden state x at t | all evidence).
    pub smoothed: Vec<Vec<f64>>,
    /// ln P(evidence 1..t) per t.
    pub log_evidence: Vec<f64>,
}

impl Enumeration {
    pub fn marginal(&self, joint: &[f64], variable: &str) -> Vec<f64> {
        let v = self.hidden.iter().position(|h| h == variable).unwrap();
        let mut out = vec![0.0; self.cards[v]];
        for (x, p) in joint.iter().enumerate() {
            out[self.decode(x)[v]] += p;
        }
        out
    }

    pub fn decode(&self, mut x: usize) -> Vec<usize> {
        let mut s = vec![0; self.cards.len()];
        for i in (0..self.cards.len()).rev() {
            s[i] = x % self.cards[i];
            x /= self.cards[i];
        }
        s
    }
}

/// CPT entry lookup written independently of the library's indexing.
fn prob(cpt: &Cpt, card: usize, value: usize, lookup: &dyn Fn(&NodeRef) -> (usize, usize)) -> f64 {
    let mut row = 0;
    for p in &cpt.parents {
        let (state, c) = lookup(p);
        row = row * c + state;
    }
    cpt.table[row * card + value]
}

/// Weight of one slice: hidden CPTs times the likelihood of every observed
/// measurement.
fn slice_weight(spec: &NetworkSpec, hidden: &[String], prev: Option<&[usize]>, cur: &[usize], ev: &EvidenceFrame) -> f64 {
    let cpts: &[Cpt] = match (prev, &spec.transition_cpts) {
        (Some(_), Some(t)) => t,
        _ => &spec.cpts,
    };
    let lookup = |n: &NodeRef| -> (usize, usize) {
        let i = hidden.iter().position(|h| *h == n.name).expect("hidden parent");
        let card = spec.cardinality(&n.name).unwrap();
        if n.prev {
            (prev.expect("previous slice")[i], card)
        } else {
            (cur[i], card)
        }
    };
    let mut w = 1.0;
    for cpt in cpts {
        let v = spec.variable(&cpt.child).unwrap();
        let card = v.cardinality;
        if v.role.is_hidden() {
            let i = hidden.iter().position(|h| *h == cpt.child).unwrap();
            w *= prob(cpt, card, cur[i], &lookup);
        } else {
            let owner = cpt.child.trim_start_matches("O_");
            let obs = if v.role.is_phone() {
                ev.phone_measurement
            } else {
                ev.au_measurements.get(owner).copied().flatten().map(usize::from)
            };
            if let Some(o) = obs {
                w *= prob(cpt, card, o, &lookup);
            }
        }
    }
    w
}

pub fn enumerate(spec: &NetworkSpec, evidence: &[EvidenceFrame]) -> Enumeration {
    let hidden: Vec<String> = spec.hidden().map(|v| v.name.clone()).collect();
    let cards: Vec<usize> = spec.hidden().map(|v| v.cardinality).collect();
    let n: usize = cards.iter().product();
    let states: Vec<Vec<usize>> = (0..n)
        .map(|mut x| {
            let mut s = vec![0; cards.len()];
            for i in (0..cards.len()).rev() {
                s[i] = x % cards[i];
                x /= cards[i];
            }
            s
        })
        .collect();
    let t_len = evidence.len();
    let w0: Vec<f64> = states
        .iter()
        .map(|s| slice_weight(spec, &hidden, None, s, &evidence[0]))
        .collect();
    let wt: Vec<Vec<f64>> = (1..t_len)
        .map(|t| {
            let mut m = vec![0.0; n * n];
            for (a, sa) in states.iter().enumerate() {
                for (b, sb) in states.iter().enumerate() {
                    m[a * n + b] = slice_weight(spec, &hidden, Some(sa), sb, &evidence[t]);
                }
            }
            m
        })
        .collect();

    let mut filtered = vec![vec![0.0; n]; t_len];
    let mut smoothed = vec![vec![0.0; n]; t_len];
    let mut path = vec![0usize; t_len];
    fn dfs(
        t: usize,
        weight: f64,
        n: usize,
        w0: &[f64],
        wt: &[Vec<f64>],
        path: &mut Vec<usize>,
        filtered: &mut [Vec<f64>],
        smoothed: &mut [Vec<f64>],
    ) {
        let t_len = path.len();
        for x in 0..n {
            let w = if t == 0 { w0[x] } else { weight * wt[t - 1][path[t - 1] * n + x] };
            path[t] = x;
            filtered[t][x] += w;
            if t + 1 == t_len {
                for (s, &p) in smoothed.iter_mut().zip(path.iter()) {
                    s[p] += w;
                }
            } else {
                dfs(t + 1, w, n, w0, wt, path, filtered, smoothed);
            }
        }
    }
    dfs(0, 1.0, n, &w0, &wt, &mut path, &mut filtered, &mut smoothed);
    let log_evidence = filtered.iter().map(|f| f.iter().sum::<f64>().ln()).collect();
    for row in filtered.iter_mut().chain(smoothed.iter_mut()) {
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= z);
    }
    Enumeration {
        hidden,
        cards,
        filtered,
        smoothed,
        log_evidence,
    }
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// ln of the K2 family score from exact integer factorials.
pub fn k2_exact(stats: &SufficientStats) -> f64 {
    let k = stats.child_card as u64;
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for row in stats.counts.chunks(stats.child_card) {
        let n_ij: u64 = row.iter().sum();
        num *= factorial(k - 1);
        den *= factorial(n_ij + k - 1);
        for &n in row {
            num *= factorial(n);
        }
    }
    num.to_f64().unwrap().ln() - den.to_f64().unwrap().ln()
}

/// Ancestral sample of one slice of a network without measurement nodes.
pub fn sample_slice(rng: &mut impl Rng, spec: &NetworkSpec, prev: Option<&BTreeMap<String, usize>>) -> BTreeMap<String, usize> {
    let mut cur = BTreeMap::new();
    for name in spec.topological_order().unwrap() {
        let cpt = match prev {
            None => spec.cpt(&name).unwrap(),
            Some(_) => spec.transition_cpt(&name).unwrap(),
        };
        let k = spec.cardinality(&name).unwrap();
        let lookup = |p: &NodeRef| -> (usize, usize) {
            let card = spec.cardinality(&p.name).unwrap();
            let s = if p.prev { prev.unwrap()[&p.name] } else { cur[&p.name] };
            (s, card)
        };
        let mut row = 0;
        for p in &cpt.parents {
            let (s, c) = lookup(p);
            row = row * c + s;
        }
        let probs = &cpt.table[row * k..(row + 1) * k];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = k - 1;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        cur.insert(name, pick);
    }
    cur
}

/// Complete current-slice dataset over every variable of `spec`.
pub fn slice_dataset(spec: &NetworkSpec, rows: &[BTreeMap<String, usize>]) -> Dataset {
    let cols: Vec<(NodeRef, usize)> = spec
        .variables
        .iter()
        .map(|v| (NodeRef::current(v.name.clone()), v.cardinality))
        .collect();
    let cells: Vec<Vec<Option<usize>>> = rows
        .iter()
        .map(|r| spec.variables.iter().map(|v| Some(r[&v.name])).collect())
        .collect();
    Dataset::from_rows(cols, &cells).unwrap()
}

/// Slice-pair dataset: previous-slice columns, then current-slice columns.
pub fn pair_dataset(spec: &NetworkSpec, pairs: &[(BTreeMap<String, usize>, BTreeMap<String, usize>)]) -> Dataset {
    let mut cols: Vec<(NodeRef, usize)> = spec
        .variables
        .iter()
        .map(|v| (NodeRef::previous(v.name.clone()), v.cardinality))
        .collect();
    cols.extend(
        spec.variables
            .iter()
            .map(|v| (NodeRef::current(v.name.clone()), v.cardinality)),
    );
    let cells: Vec<Vec<Option<usize>>> = pairs
        .iter()
        .map(|(a, b)| {
            spec.variables
                .iter()
                .map(|v| Some(a[&v.name]))
                .chain(spec.variables.iter().map(|v| Some(b[&v.name])))
                .collect()
        })
        .collect();
    Dataset::from_rows(cols, &cells).unwrap()
}

/// A binary CPT whose row for each parent configuration puts `strong` mass
/// on `rule(parents)`.
pub fn rule_cpt(child: &str, parents: Vec<NodeRef>, strong: f64, rule: impl Fn(&[usize]) -> usize) -> Cpt {
    let n = parents.len();
    let mut table = Vec::new();
    for j in 0..(1usize << n) {
        let states: Vec<usize> = (0..n).map(|i| (j >> (n - 1 - i)) & 1).collect();
        let hot = rule(&states);
        table.extend((0..2).map(|s| if s == hot { strong } else { 1.0 - strong }));
    }
    Cpt::new(child, parents, table)
}

pub fn binary_hidden(names: &[&str]) -> Vec<Variable> {
    names.iter().map(|n| Variable::new(*n, 2, Role::HiddenAu)).collect()
}

/// Planted 4-node network A -> B, {B, C} -> D with strong tables.
pub fn planted_bn() -> NetworkSpec {
    let c = NodeRef::current;
    NetworkSpec {
        variables: binary_hidden(&["A", "B", "C", "D"]),
        intra_edges: vec![Edge::new("A", "B"), Edge::new("B", "D"), Edge::new("C", "D")],
        cpts: vec![
            Cpt::new("A", vec![], vec![0.5, 0.5]),
            rule_cpt("B", vec![c("A")], 0.9, |s| s[0]),
            Cpt::new("C", vec![], vec![0.4, 0.6]),
            rule_cpt("D", vec![c("B"), c("C")], 0.9, |s| s[0] & s[1]),
        ],
        ..Default::default()
    }
}

/// Three persistent binaries with one planted cross edge X@t-1 -> Y.
pub fn planted_transition() -> NetworkSpec {
    let p = NodeRef::previous;
    NetworkSpec {
        variables: binary_hidden(&["X", "Y", "Z"]),
        inter_edges: vec![Edge::new("X", "X"), Edge::new("Y", "Y"), Edge::new("Z", "Z"), Edge::new("X", "Y")],
        cpts: vec![
            Cpt::new("X", vec![], vec![0.5, 0.5]),
            Cpt::new("Y", vec![], vec![0.5, 0.5]),
            Cpt::new("Z", vec![], vec![0.5, 0.5]),
        ],
        transition_cpts: Some(vec![
            rule_cpt("X", vec![p("X")], 0.8, |s| s[0]),
            rule_cpt("Y", vec![p("Y"), p("X")], 0.85, |s| s[0] | s[1]),
            rule_cpt("Z", vec![p("Z")], 0.8, |s| s[0]),
        ]),
        ..Default::default()
    }
}

/// Pearson correlation of two binary series, 0 when either is constant.
pub fn naive_mcc(truth: &[u8], pred: &[u8]) -> f64 {
    let n = truth.len() as f64;
    let mt = truth.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mp = pred.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut cov, mut vt, mut vp) = (0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(pred) {
        let (dt, dp) = (t as f64 - mt, p as f64 - mp);
        cov += dt * dp;
        vt += dt * dt;
        vp += dp * dp;
    }
    if vt == 0.0 || vp == 0.0 {
        0.0
    } else {
        cov / (vt * vp).sqrt()
    }
}

/// Harmonic mean of precision and recall, 0 when undefined.
pub fn naive_f1(truth: &[u8], pred: &[u8]) -> f64 {
    let hits = truth.iter().zip(pred).filter(|(&t, &p)| t == 1 && p == 1).count() as f64;
    let predicted = pred.iter().filter(|&&p| p == 1).count() as f64;
    let actual = truth.iter().filter(|&&t| t == 1).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (hits / predicted, hits / actual);
    2.0 * precision * recall / (precision + recall)
}

/// Series realizing a confusion, interleaved deterministically.
pub fn series_of(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<u8>, Vec<u8>) {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (count, t, p) in [(tp, 1, 1), (fp, 0, 1), (fn_, 1, 0), (tn, 0, 0)] {
        truth.extend(std::iter::repeat_n(t, count));
        pred.extend(std::iter::repeat_n(p, count));
    }
    (truth, pred)
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_aufusion"))
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "aufusion {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn repo_config(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Every stage of the pipeline on `config`, returning each output file's bytes.
pub fn pipeline(dir: &std::path::Path, config: &std::path::Path, seed: u64, jobs: u32) -> BTreeMap<String, Vec<u8>> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let jobs = jobs.to_string();
    let seed = seed.to_string();
    let config = config.to_str().unwrap();
    run_ok(&["simulate", "--config", config, "--seed", &seed, "--out", &p("corpus.jsonl"), "--jobs", &jobs]);
    run_ok(&["stats", "--corpus", &p("corpus.jsonl"), "--out", &p("stats.csv"), "--phones", &p("phones.csv")]);
    run_ok(&["learn-structure", "--corpus", &p("corpus.jsonl"), "--out", &p("intra.json")]);
    run_ok(&[
        "learn-transitions", "--corpus", &p("corpus.jsonl"), "--structure", &p("intra.json"), "--out", &p("dbn.json"),
    ]);
    run_ok(&["inject-expert", "--structure", &p("dbn.json"), "--out", &p("expert.json")]);
    run_ok(&[
        "fit-params", "--structure", &p("expert.json"), "--corpus", &p("corpus.jsonl"), "--out", &p("model.json"),
    ]);
    run_ok(&["validate-model", "--model", &p("model.json")]);
    run_ok(&[
        "infer", "--model", &p("model.json"), "--corpus", &p("corpus.jsonl"), "--out", &p("beliefs.jsonl"),
        "--mode", "smoothed", "--jobs", &jobs,
    ]);
    run_ok(&[
        "evaluate", "--corpus", &p("corpus.jsonl"), "--out", &p("report.csv"), "--json", &p("report.json"),
        "--roc-dir", &p("roc"), "--jobs", &jobs,
    ]);
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().to_str().unwrap().to_string();
                files.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Random valid track: ordered, gapped, no consecutive repeats.
pub fn random_track(rng: &mut impl Rng, alphabet: &aufusion::alignment::PhoneAlphabet) -> aufusion::alignment::SegmentTrack {
    let n = rng.random_range(0..8);
    let mut t = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.1) };
    let mut segments: Vec<aufusion::alignment::Segment> = Vec::new();
    for _ in 0..n {
        let label = loop {
            let l = alphabet.label(rng.random_range(0..alphabet.len())).to_string();
            if segments.last().is_none_or(|s| s.label != l) {
                break l;
            }
        };
        let end = t + rng.random_range(0.005..0.2);
        segments.push(aufusion::alignment::Segment { label, start: t, end });
        t = if rng.random_bool(0.3) { end + rng.random_range(0.0..0.05) } else { end };
    }
    let extra = if rng.random_bool(0.5) { rng.random_range(0.0..0.1) } else { 0.0 };
    aufusion::alignment::SegmentTrack::new(segments, Some(t + extra)).unwrap()
}

/// Linear scan over segments for the midpoint of frame `t`.
pub fn label_by_scan(track: &aufusion::alignment::SegmentTrack, alphabet: &aufusion::alignment::PhoneAlphabet, fps: f64, t: usize) -> usize {
    let mid = (t as f64 + 0.5) / fps;
    if mid >= track.total_duration() {
        return 0;
    }
    track
        .segments()
        .iter()
        .find(|s| s.start <= mid && mid < s.end)
        .map_or(0, |s| alphabet.index_of(&s.label).unwrap())
}

pub fn boundaries(track: &aufusion::alignment::SegmentTrack) -> Vec<f64> {
    let mut b: Vec<f64> = track.segments().iter().flat_map(|s| [s.start, s.end]).collect();
    b.push(track.total_duration());
    b
}
