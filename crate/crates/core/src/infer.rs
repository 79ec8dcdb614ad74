//! Exact filtering, smoothing and decoding over the two-slice network.
//!
//! The belief state is the full joint over the hidden variables of a slice
//! (row-major in declaration order). The transition is applied one family at
//! a time, summing out previous-slice variables as soon as no remaining
//! family needs them, so the dense joint-to-joint operator is never built.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::model::{config_index, Cpt, NetworkSpec, Role};

/// Largest hidden joint state space accepted.
pub const MAX_JOINT_STATES: usize = 1 << 20;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvidenceFrame {
    /// Hidden AU name to measured state; `None` marks a missing measurement.
    pub au_measurements: BTreeMap<String, Option<u8>>,
    pub phone_measurement: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Filtered,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefFrame {
    /// One distribution per hidden variable, in `Beliefs::variables` order.
    pub marginals: Vec<Vec<f64>>,
    /// `log P(observations up to this frame)`.
    pub joint_log_evidence: f64,
    /// Most probable joint hidden configuration (lowest index on ties).
    pub map_config: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub variables: Vec<String>,
    pub provenance: Provenance,
    pub frames: Vec<BeliefFrame>,
}

impl Beliefs {
    pub fn marginal(&self, frame: usize, variable: &str) -> Option<&[f64]> {
        let i = self.variables.iter().position(|v| v == variable)?;
        Some(&self.frames[frame].marginals[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    FilteredMarginal,
    SmoothedMarginal,
    JointMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodePolicy {
    pub mode: DecodeMode,
    threshold: f64,
}

impl DecodePolicy {
    pub fn new(mode: DecodeMode, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must lie strictly between 0 and 1, got {threshold}"
            )));
        }
        Ok(DecodePolicy { mode, threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn provenance(&self) -> Provenance {
        match self.mode {
            DecodeMode::SmoothedMarginal => Provenance::Smoothed,
            _ => Provenance::Filtered,
        }
    }
}

impl Default for DecodePolicy {
    fn default() -> Self {
        DecodePolicy {
            mode: DecodeMode::FilteredMarginal,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFrame {
    /// Activation per hidden AU, in `Decoding::aus` order.
    pub aus: Vec<u8>,
    pub phone: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoding {
    pub aus: Vec<String>,
    pub frames: Vec<DecodedFrame>,
}

/// Per-hidden-variable likelihood table `P(obs | hidden)`, laid out
/// `[hidden_state * obs_card + obs]`.
#[derive(Debug, Clone)]
struct Channel {
    obs_card: usize,
    table: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Transition {
    families: Vec<(usize, Factor)>,
    forward: Vec<Step>,
}

#[derive(Debug, Clone)]
enum Step {
    Multiply(usize),
    SumOut(usize),
}

/// A network prepared for repeated inference.
#[derive(Debug, Clone)]
pub struct Engine {
    names: Vec<String>,
    roles: Vec<Role>,
    cards: Vec<usize>,
    joint: usize,
    /// `states[x * n + i]` is the state of hidden variable `i` in joint index `x`.
    states: Vec<u16>,
    prior: Vec<f64>,
    init_channels: Vec<Option<Channel>>,
    trans_channels: Vec<Option<Channel>>,
    transition: Option<Transition>,
    topo: Vec<usize>,
}

impl Engine {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        let violations = spec.validate();
        if let Some(v) = violations.first() {
            return Err(Error::InvalidModel(v.to_string()));
        }
        let hidden: Vec<_> = spec.hidden().collect();
        let names: Vec<String> = hidden.iter().map(|v| v.name.clone()).collect();
        let roles = hidden.iter().map(|v| v.role).collect();
        let cards: Vec<usize> = hidden.iter().map(|v| v.cardinality).collect();
        let n = names.len();
        let joint = cards
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c).filter(|&j| j <= MAX_JOINT_STATES))
            .ok_or_else(|| Error::InvalidModel("hidden joint state space too large".into()))?;
        let pos = |name: &str| names.iter().position(|h| h == name);

        let mut states = vec![0u16; joint * n];
        for x in 0..joint {
            let mut rem = x;
            for i in (0..n).rev() {
                states[x * n + i] = (rem % cards[i]) as u16;
                rem /= cards[i];
            }
        }

        let topo: Vec<usize> = spec
            .topological_order()?
            .iter()
            .filter_map(|name| pos(name))
            .collect();

        let mut prior = vec![1.0; joint];
        for &i in &topo {
            let cpt = spec.cpt(&names[i])?;
            let parents: Vec<usize> = cpt
                .parents
                .iter()
                .map(|p| pos(&p.name).ok_or_else(|| Error::InvalidModel(format!("`{}` has a measurement parent", names[i]))))
                .collect::<Result<_>>()?;
            let pcards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
            let mut ps = vec![0; parents.len()];
            for (x, w) in prior.iter_mut().enumerate() {
                let row = &states[x * n..(x + 1) * n];
                for (slot, &p) in ps.iter_mut().zip(&parents) {
                    *slot = row[p] as usize;
                }
                *w *= cpt.table[config_index(&ps, &pcards) * cards[i] + row[i] as usize];
            }
        }

        let channel = |cpt: &Cpt, m_card: usize| Channel {
            obs_card: m_card,
            table: cpt.table.clone(),
        };
        let mut init_channels = vec![None; n];
        let mut trans_channels = vec![None; n];
        for (i, name) in names.iter().enumerate() {
            if let Some(m) = spec.measurement_of(name) {
                init_channels[i] = Some(channel(spec.cpt(&m.name)?, m.cardinality));
                trans_channels[i] = Some(match &spec.transition_cpts {
                    Some(_) => channel(spec.transition_cpt(&m.name)?, m.cardinality),
                    None => channel(spec.cpt(&m.name)?, m.cardinality),
                });
            }
        }

        let transition = match &spec.transition_cpts {
            None => None,
            Some(_) => {
                let mut families = Vec::with_capacity(n);
                for &i in &topo {
                    let cpt = spec.transition_cpt(&names[i])?;
                    let mut scope = Vec::new();
                    let mut fcards = Vec::new();
                    for p in &cpt.parents {
                        let h = pos(&p.name)
                            .ok_or_else(|| Error::InvalidModel(format!("`{}` has a measurement parent", names[i])))?;
                        scope.push(if p.prev { h } else { n + h });
                        fcards.push(cards[h]);
                    }
                    scope.push(n + i);
                    fcards.push(cards[i]);
                    families.push((i, Factor::new(scope, fcards, cpt.table.clone())));
                }
                let forward = plan_forward(n, &families);
                Some(Transition { families, forward })
            }
        };

        Ok(Engine {
            names,
            roles,
            cards,
            joint,
            states,
            prior,
            init_channels,
            trans_channels,
            transition,
            topo,
        })
    }

    pub fn hidden_names(&self) -> &[String] {
        &self.names
    }

    pub fn joint_states(&self) -> usize {
        self.joint
    }

    /// Per-variable likelihood vectors for one frame; `None` when the frame
    /// carries no evidence for that variable.
    fn likelihoods(&self, frame: &EvidenceFrame, first: bool) -> Result<Vec<Option<Vec<f64>>>> {
        let channels = if first { &self.init_channels } else { &self.trans_channels };
        let mut out: Vec<Option<Vec<f64>>> = vec![None; self.names.len()];
        let mut observe = |i: usize, obs: usize, label: &str| -> Result<()> {
            let ch = channels[i]
                .as_ref()
                .ok_or_else(|| Error::UnknownVariable(format!("measurement of `{label}`")))?;
            if obs >= ch.obs_card {
                return Err(Error::StateOutOfRange {
                    variable: label.to_string(),
                    state: obs,
                    cardinality: ch.obs_card,
                });
            }
            out[i] = Some((0..self.cards[i]).map(|s| ch.table[s * ch.obs_card + obs]).collect());
            Ok(())
        };
        for (au, value) in &frame.au_measurements {
            let i = self
                .names
                .iter()
                .position(|n| n == au)
                .filter(|&i| self.roles[i] == Role::HiddenAu)
                .ok_or_else(|| Error::UnknownVariable(au.clone()))?;
            if let Some(v) = value {
                observe(i, *v as usize, au)?;
            }
        }
        if let Some(p) = frame.phone_measurement {
            let i = self
                .roles
                .iter()
                .position(|r| *r == Role::HiddenPhone)
                .ok_or_else(|| Error::UnknownVariable("phone".into()))?;
            let label = self.names[i].clone();
            observe(i, p, &label)?;
        }
        Ok(out)
    }

    fn weigh(&self, belief: &mut [f64], lik: &[Option<Vec<f64>>]) {
        let n = self.names.len();
        for (i, l) in lik.iter().enumerate() {
            if let Some(l) = l {
                for (x, w) in belief.iter_mut().enumerate() {
                    *w *= l[self.states[x * n + i] as usize];
                }
            }
        }
    }

    /// Joint over the current slice given a joint over the previous one.
    fn predict(&self, previous: &[f64]) -> Vec<f64> {
        let Some(tr) = &self.transition else {
            return self.prior.clone();
        };
        let n = self.names.len();
        let mut f = Factor::new((0..n).collect(), self.cards.clone(), previous.to_vec());
        for step in &tr.forward {
            f = match *step {
                Step::Multiply(k) => f.product(&tr.families[k].1),
                Step::SumOut(slot) => f.sum_out(slot),
            };
        }
        f.arrange(&(n..2 * n).collect::<Vec<_>>(), &self.cards)
    }

    /// `Σ_y P(y | x) g(y)` as a function of the previous-slice joint `x`.
    fn pull_back(&self, next: &[f64]) -> Vec<f64> {
        let Some(tr) = &self.transition else {
            return vec![next.iter().zip(&self.prior).map(|(a, b)| a * b).sum(); self.joint];
        };
        let n = self.names.len();
        let mut g = Factor::new((n..2 * n).collect(), self.cards.clone(), next.to_vec());
        for (i, fam) in tr.families.iter().rev() {
            g = g.product(fam).sum_out(n + i);
        }
        g.arrange(&(0..n).collect::<Vec<_>>(), &self.cards)
    }

    /// Normalized filtered joints and per-frame normalizers. Stops at the
    /// first frame whose evidence has zero probability.
    fn forward(&self, evidence: &[EvidenceFrame]) -> Result<(Vec<Vec<f64>>, Vec<f64>, Option<usize>)> {
        let mut alphas: Vec<Vec<f64>> = Vec::with_capacity(evidence.len());
        let mut norms = Vec::with_capacity(evidence.len());
        for (t, frame) in evidence.iter().enumerate() {
            let lik = self.likelihoods(frame, t == 0)?;
            let mut alpha = match alphas.last() {
                None => self.prior.clone(),
                Some(prev) => self.predict(prev),
            };
            self.weigh(&mut alpha, &lik);
            let c: f64 = alpha.iter().sum();
            if !(c > 0.0) {
                return Ok((alphas, norms, Some(t)));
            }
            alpha.iter_mut().for_each(|w| *w /= c);
            alphas.push(alpha);
            norms.push(c);
        }
        Ok((alphas, norms, None))
    }

    fn belief_frame(&self, joint: &[f64], log_evidence: f64) -> BeliefFrame {
        let n = self.names.len();
        let mut marginals: Vec<Vec<f64>> = self.cards.iter().map(|&c| vec![0.0; c]).collect();
        let mut best = 0;
        for (x, &w) in joint.iter().enumerate() {
            for (i, m) in marginals.iter_mut().enumerate() {
                m[self.states[x * n + i] as usize] += w;
            }
            if w > joint[best] {
                best = x;
            }
        }
        for m in &mut marginals {
            let s: f64 = m.iter().sum();
            m.iter_mut().for_each(|p| *p /= s);
        }
        BeliefFrame {
            marginals,
            joint_log_evidence: log_evidence,
            map_config: self.states[best * n..(best + 1) * n].iter().map(|&s| s as usize).collect(),
        }
    }

    pub fn filter(&self, evidence: &[EvidenceFrame]) -> Result<Beliefs> {
        if evidence.is_empty() {
            return Err(Error::InvalidArgument("empty evidence sequence".into()));
        }
        let (alphas, norms, failed) = self.forward(evidence)?;
        if let Some(t) = failed {
            return Err(Error::ImpossibleEvidence(t));
        }
        let mut log_ev = 0.0;
        let frames = alphas
            .iter()
            .zip(&norms)
            .map(|(a, c)| {
                log_ev += c.ln();
                self.belief_frame(a, log_ev)
            })
            .collect();
        Ok(Beliefs {
            variables: self.names.clone(),
            provenance: Provenance::Filtered,
            frames,
        })
    }

    pub fn smooth(&self, evidence: &[EvidenceFrame]) -> Result<Beliefs> {
        if evidence.is_empty() {
            return Err(Error::InvalidArgument("empty evidence sequence".into()));
        }
        let (alphas, norms, failed) = self.forward(evidence)?;
        if let Some(t) = failed {
            return Err(Error::ImpossibleEvidence(t));
        }
        let len = alphas.len();
        let mut gammas = vec![Vec::new(); len];
        gammas[len - 1] = alphas[len - 1].clone();
        let mut beta = vec![1.0; self.joint];
        for t in (0..len - 1).rev() {
            let lik = self.likelihoods(&evidence[t + 1], false)?;
            let mut next = beta.clone();
            self.weigh(&mut next, &lik);
            beta = self.pull_back(&next);
            let c = norms[t + 1];
            beta.iter_mut().for_each(|b| *b /= c);
            let mut g: Vec<f64> = alphas[t].iter().zip(&beta).map(|(a, b)| a * b).collect();
            let s: f64 = g.iter().sum();
            g.iter_mut().for_each(|w| *w /= s);
            gammas[t] = g;
        }
        let mut log_ev = 0.0;
        let frames = gammas
            .iter()
            .zip(&norms)
            .map(|(g, c)| {
                log_ev += c.ln();
                self.belief_frame(g, log_ev)
            })
            .collect();
        Ok(Beliefs {
            variables: self.names.clone(),
            provenance: Provenance::Smoothed,
            frames,
        })
    }

    /// `log P(all observations)`; negative infinity when impossible.
    pub fn log_evidence(&self, evidence: &[EvidenceFrame]) -> Result<f64> {
        let (_, norms, failed) = self.forward(evidence)?;
        if failed.is_some() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(norms.iter().map(|c| c.ln()).sum())
    }

    pub fn decode(&self, beliefs: &Beliefs, policy: &DecodePolicy) -> Result<Decoding> {
        let wanted = match policy.mode {
            DecodeMode::FilteredMarginal => Some(Provenance::Filtered),
            DecodeMode::SmoothedMarginal => Some(Provenance::Smoothed),
            DecodeMode::JointMap => None,
        };
        if wanted.is_some_and(|p| p != beliefs.provenance) {
            return Err(Error::InvalidArgument(format!(
                "decode mode {:?} cannot use {:?} beliefs",
                policy.mode, beliefs.provenance
            )));
        }
        if beliefs.variables != self.names {
            return Err(Error::InvalidArgument("beliefs come from a different network".into()));
        }
        let au_idx: Vec<usize> = (0..self.names.len()).filter(|&i| self.roles[i] == Role::HiddenAu).collect();
        let phone_idx = self.roles.iter().position(|r| *r == Role::HiddenPhone);
        let frames = beliefs
            .frames
            .iter()
            .map(|b| match policy.mode {
                DecodeMode::JointMap => DecodedFrame {
                    aus: au_idx.iter().map(|&i| b.map_config[i] as u8).collect(),
                    phone: phone_idx.map(|i| b.map_config[i]),
                },
                _ => DecodedFrame {
                    aus: au_idx
                        .iter()
                        .map(|&i| (b.marginals[i][1] > policy.threshold) as u8)
                        .collect(),
                    phone: phone_idx.map(|i| argmax(&b.marginals[i])),
                },
            })
            .collect();
        Ok(Decoding {
            aus: au_idx.iter().map(|&i| self.names[i].clone()).collect(),
            frames,
        })
    }

    pub fn infer(&self, evidence: &[EvidenceFrame], provenance: Provenance) -> Result<Beliefs> {
        match provenance {
            Provenance::Filtered => self.filter(evidence),
            Provenance::Smoothed => self.smooth(evidence),
        }
    }

    #[doc(hidden)]
    pub fn topological_hidden(&self) -> Vec<&str> {
        self.topo.iter().map(|&i| self.names[i].as_str()).collect()
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Multiplies families in order, summing out each previous-slice slot right
/// after its last use.
fn plan_forward(n: usize, families: &[(usize, Factor)]) -> Vec<Step> {
    let last_use = |slot: usize| families.iter().rposition(|(_, f)| f.scope.contains(&slot));
    let mut steps = Vec::new();
    for slot in 0..n {
        if last_use(slot).is_none() {
            steps.push(Step::SumOut(slot));
        }
    }
    for (k, _) in families.iter().enumerate() {
        steps.push(Step::Multiply(k));
        for slot in 0..n {
            if last_use(slot) == Some(k) {
                steps.push(Step::SumOut(slot));
            }
        }
    }
    steps
}

pub fn filter(spec: &NetworkSpec, evidence: &[EvidenceFrame]) -> Result<Beliefs> {
    Engine::new(spec)?.filter(evidence)
}

pub fn smooth(spec: &NetworkSpec, evidence: &[EvidenceFrame]) -> Result<Beliefs> {
    Engine::new(spec)?.smooth(evidence)
}

pub fn log_evidence(spec: &NetworkSpec, evidence: &[EvidenceFrame]) -> Result<f64> {
    Engine::new(spec)?.log_evidence(evidence)
}

pub fn decode(beliefs: &Beliefs, policy: &DecodePolicy, spec: &NetworkSpec) -> Result<Decoding> {
    Engine::new(spec)?.decode(beliefs, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, NodeRef, Variable};

    /// Binary hidden chain with persistence and a symmetric sensor.
    pub(crate) fn chain(prior1: f64, stay: f64, acc: f64) -> NetworkSpec {
        NetworkSpec {
            variables: vec![
                Variable::new("X", 2, Role::HiddenAu),
                Variable::new("O_X", 2, Role::MeasurementAu),
            ],
            intra_edges: vec![Edge::new("X", "O_X")],
            inter_edges: vec![Edge::new("X", "X")],
            cpts: vec![
                Cpt::new("X", vec![], vec![1.0 - prior1, prior1]),
                Cpt::new("O_X", vec![NodeRef::current("X")], vec![acc, 1.0 - acc, 1.0 - acc, acc]),
            ],
            transition_cpts: Some(vec![
                Cpt::new("X", vec![NodeRef::previous("X")], vec![stay, 1.0 - stay, 1.0 - stay, stay]),
                Cpt::new("O_X", vec![NodeRef::current("X")], vec![acc, 1.0 - acc, 1.0 - acc, acc]),
            ]),
        }
    }

    fn obs(values: &[Option<u8>]) -> Vec<EvidenceFrame> {
        values
            .iter()
            .map(|v| EvidenceFrame {
                au_measurements: BTreeMap::from([("X".to_string(), *v)]),
                phone_measurement: None,
            })
            .collect()
    }

    #[test]
    fn two_step_chain_posterior() {
        // Trajectories (x1, x2) weighted by prior, persistence and sensor:
        // P(x2 = 1, o) = 0.5*0.1*0.2*0.8 + 0.5*0.9*0.8*0.8 = 0.296
        // P(x2 = 0, o) = 0.5*0.9*0.2*0.2 + 0.5*0.1*0.8*0.2 = 0.026
        let b = filter(&chain(0.5, 0.9, 0.8), &obs(&[Some(1), Some(1)])).unwrap();
        let p = b.frames[1].marginals[0][1];
        assert!((p - 0.296 / 0.322).abs() < 1e-12, "{p}");
        assert!((p - 0.592 / 0.644).abs() < 1e-12);
        assert!((b.frames[1].joint_log_evidence - 0.322f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn vacuous_evidence_propagates_prior() {
        let spec = chain(0.2, 0.9, 0.8);
        let b = filter(&spec, &obs(&[None, None, None])).unwrap();
        let mut p1 = 0.2;
        for f in &b.frames {
            assert!((f.marginals[0][1] - p1).abs() < 1e-12);
            p1 = p1 * 0.9 + (1.0 - p1) * 0.1;
        }
        assert_eq!(log_evidence(&spec, &obs(&[None, None])).unwrap(), 0.0);
    }

    #[test]
    fn noise_free_sensor_pins_state() {
        let spec = chain(0.3, 0.7, 1.0);
        let b = filter(&spec, &obs(&[Some(1), Some(0), Some(0)])).unwrap();
        assert_eq!(b.frames[0].marginals[0], vec![0.0, 1.0]);
        assert_eq!(b.frames[2].marginals[0], vec![1.0, 0.0]);
    }

    #[test]
    fn impossible_evidence() {
        let mut spec = chain(0.0, 0.9, 1.0);
        spec.cpts[0].table = vec![1.0, 0.0];
        let ev = obs(&[Some(1)]);
        assert_eq!(log_evidence(&spec, &ev).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(filter(&spec, &ev), Err(Error::ImpossibleEvidence(0))));
    }

    #[test]
    fn smoothing_boundaries() {
        let spec = chain(0.5, 0.8, 0.7);
        let ev = obs(&[Some(1), None, Some(0), Some(0)]);
        let f = filter(&spec, &ev).unwrap();
        let s = smooth(&spec, &ev).unwrap();
        let last = ev.len() - 1;
        for (a, b) in f.frames[last].marginals[0].iter().zip(&s.frames[last].marginals[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = obs(&[Some(1)]);
        assert_eq!(filter(&spec, &one).unwrap().frames, smooth(&spec, &one).unwrap().frames);
    }

    #[test]
    fn decode_rules() {
        let spec = chain(0.5, 0.9, 0.8);
        let engine = Engine::new(&spec).unwrap();
        let mut b = engine.filter(&obs(&[Some(1), Some(1)])).unwrap();
        let policy = DecodePolicy::default();
        assert_eq!(engine.decode(&b, &policy).unwrap().frames[1].aus, vec![1]);

        b.frames[1].marginals[0] = vec![0.5, 0.5];
        assert_eq!(engine.decode(&b, &policy).unwrap().frames[1].aus, vec![0]);

        let smoothed_policy = DecodePolicy::new(DecodeMode::SmoothedMarginal, 0.5).unwrap();
        assert!(engine.decode(&b, &smoothed_policy).is_err());
        assert!(DecodePolicy::new(DecodeMode::JointMap, 1.0).is_err());
        assert!(DecodePolicy::new(DecodeMode::JointMap, 0.0).is_err());
    }

    #[test]
    fn uniform_joint_map_is_lowest_configuration() {
        let spec = NetworkSpec {
            variables: vec![
                Variable::new("A", 2, Role::HiddenAu),
                Variable::new("B", 2, Role::HiddenAu),
                Variable::new("Phone", 3, Role::HiddenPhone),
            ],
            cpts: vec![
                Cpt::new("A", vec![], vec![0.5, 0.5]),
                Cpt::new("B", vec![], vec![0.5, 0.5]),
                Cpt::new("Phone", vec![], vec![1.0 / 3.0; 3]),
            ],
            ..Default::default()
        };
        let engine = Engine::new(&spec).unwrap();
        let b = engine.filter(&[EvidenceFrame::default()]).unwrap();
        let policy = DecodePolicy::new(DecodeMode::JointMap, 0.5).unwrap();
        let d = engine.decode(&b, &policy).unwrap();
        assert_eq!(d.frames[0].aus, vec![0, 0]);
        assert_eq!(d.frames[0].phone, Some(0));
    }

    #[test]
    fn unknown_evidence_rejected() {
        let spec = chain(0.5, 0.9, 0.8);
        let mut ev = obs(&[Some(1)]);
        ev[0].au_measurements.insert("AU99".into(), Some(1));
        assert!(matches!(filter(&spec, &ev), Err(Error::UnknownVariable(_))));
        let mut ev = obs(&[Some(1)]);
        ev[0].phone_measurement = Some(0);
        assert!(filter(&spec, &ev).is_err());
        assert!(matches!(
            filter(&spec, &obs(&[Some(2)])),
            Err(Error::StateOutOfRange { .. })
        ));
    }
}
