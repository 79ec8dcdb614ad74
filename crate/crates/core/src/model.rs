//! Discrete Bayesian networks and two-slice dynamic Bayesian networks.
//!
//! A [`NetworkSpec`] holds the variables of one time slice, the directed edges
//! inside a slice, the edges from slice `t-1` into slice `t`, and the
//! conditional probability tables for the initial slice and (optionally) the
//! transition slice. A spec without `transition_cpts` is a static network.
//!
//! CPT layout: rows enumerate parent configurations in row-major order over
//! the declared parent list (last parent varies fastest); each row holds the
//! child distribution. Entry `(j, k)` lives at `j * K + k`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";
pub const PARENT_ORDER: &str = "row-major";

/// Name of the hidden phone variable in the standard layout.
pub const PHONE: &str = "Phone";

const ROW_SUM_TOL: f64 = 1e-12;

/// Name of the measurement node attached to a hidden variable.
pub fn measurement_name(hidden: &str) -> String {
    format!("O_{hidden}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    HiddenAu,
    HiddenPhone,
    MeasurementAu,
    MeasurementPhone,
}

impl Role {
    pub fn is_hidden(self) -> bool {
        matches!(self, Role::HiddenAu | Role::HiddenPhone)
    }

    pub fn is_measurement(self) -> bool {
        !self.is_hidden()
    }

    pub fn is_phone(self) -> bool {
        matches!(self, Role::HiddenPhone | Role::MeasurementPhone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
    pub role: Role,
}

impl Variable {
    pub fn new(name: impl Into<String>, cardinality: usize, role: Role) -> Self {
        Variable {
            name: name.into(),
            cardinality,
            role,
        }
    }
}

/// A reference to a variable in the current slice or in the previous one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub name: String,
    pub prev: bool,
}

impl NodeRef {
    const PREV_SUFFIX: &'static str = "@t-1";

    pub fn current(name: impl Into<String>) -> Self {
        NodeRef {
            name: name.into(),
            prev: false,
        }
    }

    pub fn previous(name: impl Into<String>) -> Self {
        NodeRef {
            name: name.into(),
            prev: true,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.prev {
            write!(f, "{}{}", self.name, Self::PREV_SUFFIX)
        } else {
            f.write_str(&self.name)
        }
    }
}

impl FromStr for NodeRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let node = match s.strip_suffix(Self::PREV_SUFFIX) {
            Some(name) => NodeRef::previous(name),
            None => NodeRef::current(s),
        };
        if node.name.is_empty() {
            return Err(Error::InvalidArgument(format!("empty node reference `{s}`")));
        }
        Ok(node)
    }
}

impl Serialize for NodeRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Directed edge `from -> to`. For inter-slice edges `from` lives in slice `t-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct Edge {
    pub from: String,
    pub to: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl From<(String, String)> for Edge {
    fn from((from, to): (String, String)) -> Self {
        Edge { from, to }
    }
}

impl From<Edge> for (String, String) {
    fn from(e: Edge) -> Self {
        (e.from, e.to)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub child: String,
    pub parents: Vec<NodeRef>,
    #[serde(serialize_with = "serialize_probs")]
    pub table: Vec<f64>,
}

impl Cpt {
    pub fn new(child: impl Into<String>, parents: Vec<NodeRef>, table: Vec<f64>) -> Self {
        Cpt {
            child: child.into(),
            parents,
            table,
        }
    }

    /// Number of parent configurations given the parent cardinalities.
    pub fn rows(&self, child_card: usize) -> usize {
        self.table.len() / child_card.max(1)
    }

    pub fn row(&self, config: usize, child_card: usize) -> &[f64] {
        &self.table[config * child_card..(config + 1) * child_card]
    }
}

/// Row-major index of a parent configuration.
pub fn config_index(states: &[usize], cards: &[usize]) -> usize {
    states
        .iter()
        .zip(cards)
        .fold(0, |acc, (&s, &c)| acc * c + s)
}

/// Inverse of [`config_index`].
pub fn config_states(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut states = vec![0; cards.len()];
    for (slot, &c) in states.iter_mut().zip(cards).rev() {
        *slot = index % c;
        index /= c;
    }
    states
}

// Probabilities go out with 17 significant digits so the file round-trips
// every f64 bit-exactly.
fn serialize_probs<S: Serializer>(table: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::{Error as _, SerializeSeq};
    let mut seq = s.serialize_seq(Some(table.len()))?;
    for &p in table {
        if !p.is_finite() {
            return Err(S::Error::custom(format!("non-finite probability {p}")));
        }
        let raw = serde_json::value::RawValue::from_string(format!("{p:.16e}"))
            .map_err(S::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub variables: Vec<Variable>,
    pub intra_edges: Vec<Edge>,
    pub inter_edges: Vec<Edge>,
    pub cpts: Vec<Cpt>,
    pub transition_cpts: Option<Vec<Cpt>>,
}

/// Mapping from variable name to state index.
pub type Assignment = BTreeMap<String, usize>;

/// One invariant breach found by [`NetworkSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl NetworkSpec {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn cardinality(&self, name: &str) -> Result<usize> {
        Ok(self.variable(name)?.cardinality)
    }

    pub fn hidden(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(|v| v.role.is_hidden())
    }

    pub fn phone(&self) -> Option<&Variable> {
        self.variables.iter().find(|v| v.role == Role::HiddenPhone)
    }

    pub fn is_dynamic(&self) -> bool {
        self.transition_cpts.is_some()
    }

    /// Intra-slice parents of `name`, in edge-list order.
    pub fn intra_parents(&self, name: &str) -> Vec<String> {
        self.intra_edges
            .iter()
            .filter(|e| e.to == name)
            .map(|e| e.from.clone())
            .collect()
    }

    /// Parents of `name` in the initial slice.
    pub fn initial_family(&self, name: &str) -> Vec<NodeRef> {
        self.intra_parents(name)
            .into_iter()
            .map(NodeRef::current)
            .collect()
    }

    /// Parents of `name` in the transition slice: intra parents followed by
    /// previous-slice parents, each in edge-list order.
    pub fn transition_family(&self, name: &str) -> Vec<NodeRef> {
        let mut parents = self.initial_family(name);
        parents.extend(
            self.inter_edges
                .iter()
                .filter(|e| e.to == name)
                .map(|e| NodeRef::previous(e.from.clone())),
        );
        parents
    }

    pub fn cpt(&self, name: &str) -> Result<&Cpt> {
        self.cpts
            .iter()
            .find(|c| c.child == name)
            .ok_or_else(|| Error::MissingCpt(name.to_string()))
    }

    pub fn transition_cpt(&self, name: &str) -> Result<&Cpt> {
        self.transition_cpts
            .as_ref()
            .and_then(|cpts| cpts.iter().find(|c| c.child == name))
            .ok_or_else(|| Error::MissingCpt(name.to_string()))
    }

    pub fn parent_cards(&self, cpt: &Cpt) -> Result<Vec<usize>> {
        cpt.parents.iter().map(|p| self.cardinality(&p.name)).collect()
    }

    /// The measurement node whose parent is `hidden`, if any.
    pub fn measurement_of(&self, hidden: &str) -> Option<&Variable> {
        self.intra_edges
            .iter()
            .filter(|e| e.from == hidden)
            .filter_map(|e| self.variables.iter().find(|v| v.name == e.to))
            .find(|v| v.role.is_measurement())
    }

    /// Every invariant violation, empty when the spec is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |location: String, message: String| out.push(Violation { location, message });

        let mut seen = BTreeMap::new();
        let mut phone_card = None;
        for (i, v) in self.variables.iter().enumerate() {
            let loc = format!("variables[{i}] `{}`", v.name);
            if seen.insert(v.name.as_str(), i).is_some() {
                push(loc.clone(), "duplicate variable name".into());
            }
            if v.cardinality < 2 {
                push(loc.clone(), format!("cardinality {} < 2", v.cardinality));
            }
            if v.role.is_phone() {
                match phone_card {
                    None => phone_card = Some(v.cardinality),
                    Some(p) if p != v.cardinality => push(
                        loc.clone(),
                        format!("phone cardinality {} differs from {p}", v.cardinality),
                    ),
                    _ => {}
                }
            } else if v.cardinality != 2 {
                push(loc, format!("AU variables must be binary, got {}", v.cardinality));
            }
        }

        let lookup = |name: &str| self.variables.iter().find(|v| v.name == name);

        for (i, e) in self.intra_edges.iter().enumerate() {
            let loc = format!("intra_edges[{i}] {e}");
            for end in [&e.from, &e.to] {
                if lookup(end).is_none() {
                    push(loc.clone(), format!("unknown variable `{end}`"));
                }
            }
            if e.from == e.to {
                push(loc.clone(), "self edge within a slice".into());
            }
            if self.intra_edges[..i].contains(e) {
                push(loc, "duplicate edge".into());
            }
        }
        for (i, e) in self.inter_edges.iter().enumerate() {
            let loc = format!("inter_edges[{i}] {e}");
            for end in [&e.from, &e.to] {
                match lookup(end) {
                    None => push(loc.clone(), format!("unknown variable `{end}`")),
                    Some(v) if v.role.is_measurement() => push(
                        loc.clone(),
                        format!("measurement variable `{end}` in an inter-slice edge"),
                    ),
                    _ => {}
                }
            }
            if self.inter_edges[..i].contains(e) {
                push(loc, "duplicate edge".into());
            }
        }

        if let Err(Error::Cycle(nodes)) = self.topological_order() {
            push("intra_edges".into(), format!("cycle among {}", nodes.join(", ")));
        }

        for v in self.variables.iter().filter(|v| v.role.is_measurement()) {
            let loc = format!("measurement `{}`", v.name);
            let parents = self.intra_parents(&v.name);
            match parents.as_slice() {
                [p] => match lookup(p) {
                    Some(h) if h.role.is_hidden() && h.role.is_phone() == v.role.is_phone() => {
                        if h.cardinality != v.cardinality {
                            push(loc.clone(), format!("cardinality differs from parent `{p}`"));
                        }
                    }
                    Some(_) => push(
                        loc.clone(),
                        format!("parent `{p}` is not the matching hidden variable"),
                    ),
                    None => {}
                },
                _ => push(
                    loc.clone(),
                    format!("expected exactly one hidden parent, found {}", parents.len()),
                ),
            }
            if self.intra_edges.iter().any(|e| e.from == v.name) {
                push(loc, "measurement variable has children".into());
            }
        }

        self.check_cpts(&self.cpts, "cpts", false, &mut out);
        match &self.transition_cpts {
            Some(cpts) => self.check_cpts(cpts, "transition_cpts", true, &mut out),
            None if !self.inter_edges.is_empty() => out.push(Violation {
                location: "transition_cpts".into(),
                message: "inter-slice edges present but no transition CPTs".into(),
            }),
            None => {}
        }
        out
    }

    fn check_cpts(&self, cpts: &[Cpt], field: &str, transition: bool, out: &mut Vec<Violation>) {
        for v in &self.variables {
            let n = cpts.iter().filter(|c| c.child == v.name).count();
            if n != 1 {
                out.push(Violation {
                    location: field.to_string(),
                    message: format!("expected one CPT for `{}`, found {n}", v.name),
                });
            }
        }
        for (i, cpt) in cpts.iter().enumerate() {
            let loc = format!("{field}[{i}] `{}`", cpt.child);
            let Some(child) = self.variables.iter().find(|v| v.name == cpt.child) else {
                out.push(Violation {
                    location: loc,
                    message: "CPT for unknown variable".into(),
                });
                continue;
            };
            let expected = if transition {
                self.transition_family(&cpt.child)
            } else {
                self.initial_family(&cpt.child)
            };
            let mut declared = cpt.parents.clone();
            let mut wanted = expected.clone();
            declared.sort();
            wanted.sort();
            if declared != wanted || cpt.parents.len() != expected.len() {
                let show = |ps: &[NodeRef]| {
                    ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
                };
                out.push(Violation {
                    location: loc.clone(),
                    message: format!(
                        "parents [{}] do not match edge set [{}]",
                        show(&cpt.parents),
                        show(&expected)
                    ),
                });
                continue;
            }
            let cards: Option<Vec<usize>> = cpt
                .parents
                .iter()
                .map(|p| self.variables.iter().find(|v| v.name == p.name).map(|v| v.cardinality))
                .collect();
            let Some(cards) = cards else { continue };
            let rows: usize = cards.iter().product();
            let k = child.cardinality;
            if cpt.table.len() != rows * k {
                out.push(Violation {
                    location: loc,
                    message: format!("table length {} != {} x {k}", cpt.table.len(), rows),
                });
                continue;
            }
            for j in 0..rows {
                let row = cpt.row(j, k);
                if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    out.push(Violation {
                        location: format!("{loc} row {j}"),
                        message: format!("entry {p} outside [0, 1]"),
                    });
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(Violation {
                        location: format!("{loc} row {j}"),
                        message: format!("row sums to {sum}"),
                    });
                }
            }
        }
    }

    /// Parents before children over the intra-slice edges; ties go to the
    /// earlier-declared variable.
    pub fn topological_order(&self) -> Result<Vec<String>> {
        let n = self.variables.len();
        let mut indegree = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for e in &self.intra_edges {
            let (Some(a), Some(b)) = (self.index_of(&e.from), self.index_of(&e.to)) else {
                return Err(Error::UnknownVariable(if self.index_of(&e.from).is_none() {
                    e.from.clone()
                } else {
                    e.to.clone()
                }));
            };
            children[a].push(b);
            indegree[b] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n)
                .filter(|i| indegree[*i] > 0)
                .map(|i| self.variables[i].name.clone())
                .collect();
            return Err(Error::Cycle(stuck));
        }
        Ok(order.into_iter().map(|i| self.variables[i].name.clone()).collect())
    }

    /// `Σ_i log P(X_i = x_i | parents)` over the initial-slice CPTs.
    pub fn joint_log_prob(&self, assignment: &Assignment) -> Result<f64> {
        let mut total = 0.0;
        for v in &self.variables {
            let state = *assignment
                .get(&v.name)
                .ok_or_else(|| Error::MissingAssignment(v.name.clone()))?;
            check_state(v, state)?;
            let cpt = self.cpt(&v.name)?;
            let mut parent_states = Vec::with_capacity(cpt.parents.len());
            let mut cards = Vec::with_capacity(cpt.parents.len());
            for p in &cpt.parents {
                let pv = self.variable(&p.name)?;
                let s = *assignment
                    .get(&p.name)
                    .ok_or_else(|| Error::MissingAssignment(p.name.clone()))?;
                check_state(pv, s)?;
                parent_states.push(s);
                cards.push(pv.cardinality);
            }
            let j = config_index(&parent_states, &cards);
            let p = cpt.table[j * v.cardinality + state];
            total += p.ln();
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported format_version `{}`",
                file.format_version
            )));
        }
        if let Some(order) = &file.parent_order {
            if order != PARENT_ORDER {
                return Err(Error::InvalidModel(format!("unsupported parent_order `{order}`")));
            }
        }
        Ok(NetworkSpec {
            variables: file.variables,
            intra_edges: file.intra_edges,
            inter_edges: file.inter_edges,
            cpts: file.cpts,
            transition_cpts: file.transition_cpts,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path.display().to_string(), j.line(), j.to_string()),
            other => other,
        })
    }
}

fn check_state(v: &Variable, state: usize) -> Result<()> {
    if state >= v.cardinality {
        return Err(Error::StateOutOfRange {
            variable: v.name.clone(),
            state,
            cardinality: v.cardinality,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_order: Option<String>,
    variables: Vec<Variable>,
    intra_edges: Vec<Edge>,
    inter_edges: Vec<Edge>,
    cpts: Vec<Cpt>,
    #[serde(default)]
    transition_cpts: Option<Vec<Cpt>>,
}

impl From<&NetworkSpec> for ModelFile {
    fn from(spec: &NetworkSpec) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION.to_string(),
            parent_order: Some(PARENT_ORDER.to_string()),
            variables: spec.variables.clone(),
            intra_edges: spec.intra_edges.clone(),
            inter_edges: spec.inter_edges.clone(),
            cpts: spec.cpts.clone(),
            transition_cpts: spec.transition_cpts.clone(),
        }
    }
}
