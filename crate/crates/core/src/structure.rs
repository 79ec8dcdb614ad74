//! Structure learning: K2 for the intra-slice graph, BIC hill climbing for
//! the transition graph, and expert edge injection.

use std::collections::{BTreeSet, HashMap};

use statrs::function::factorial::ln_factorial;

use crate::data::{Dataset, MISSING};
use crate::error::{Error, Result};
use crate::model::{Cpt, Edge, NetworkSpec, NodeRef, Role, Variable};

pub const DEFAULT_MAX_PARENTS: usize = 3;
/// Largest transition family `inject_expert_edges` accepts by default.
pub const DEFAULT_PARENT_CAP: usize = 8;

/// Counts `N_ijk` for one family. Row `j` enumerates parent configurations
/// in row-major order over `parents`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub child: NodeRef,
    pub parents: Vec<NodeRef>,
    pub child_card: usize,
    pub parent_cards: Vec<usize>,
    pub counts: Vec<u64>,
    pub row_totals: Vec<u64>,
    pub sample_count: u64,
}

impl SufficientStats {
    pub fn configs(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn count(&self, config: usize, state: usize) -> u64 {
        self.counts[config * self.child_card + state]
    }

    /// Free parameters of the family: `(K - 1) * M`.
    pub fn free_parameters(&self) -> usize {
        (self.child_card - 1) * self.configs()
    }
}

/// Exact family counts. Records with a missing cell in the family are skipped.
pub fn count_stats(data: &Dataset, child: &NodeRef, parents: &[NodeRef]) -> Result<SufficientStats> {
    let c = data.column_index(child)?;
    let cols: Vec<usize> = parents.iter().map(|p| data.column_index(p)).collect::<Result<_>>()?;
    let child_card = data.card(c);
    let parent_cards: Vec<usize> = cols.iter().map(|&p| data.card(p)).collect();
    let configs: usize = parent_cards.iter().product();
    let mut counts = vec![0u64; configs * child_card];
    let child_col = data.column(c);
    let parent_cols: Vec<&[u16]> = cols.iter().map(|&p| data.column(p)).collect();
    'rows: for row in 0..data.len() {
        let k = child_col[row];
        if k == MISSING {
            continue;
        }
        let mut j = 0usize;
        for (col, &card) in parent_cols.iter().zip(&parent_cards) {
            let s = col[row];
            if s == MISSING {
                continue 'rows;
            }
            j = j * card + s as usize;
        }
        counts[j * child_card + k as usize] += 1;
    }
    let row_totals: Vec<u64> = counts.chunks(child_card).map(|r| r.iter().sum()).collect();
    let sample_count = row_totals.iter().sum();
    Ok(SufficientStats {
        child: child.clone(),
        parents: parents.to_vec(),
        child_card,
        parent_cards,
        counts,
        row_totals,
        sample_count,
    })
}

/// Log of the K2 family score
/// `Π_j (K-1)! / (N_ij + K - 1)! · Π_k N_ijk!`.
pub fn k2_family_log_score(stats: &SufficientStats) -> f64 {
    let k = stats.child_card as u64;
    let head = ln_factorial(k - 1);
    stats
        .counts
        .chunks(stats.child_card)
        .zip(&stats.row_totals)
        .map(|(row, &n_ij)| {
            head - ln_factorial(n_ij + k - 1) + row.iter().map(|&n| ln_factorial(n)).sum::<f64>()
        })
        .sum()
}

/// How K2 orders the hidden variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Ordering {
    /// Permutation of the hidden variable names.
    Explicit(Vec<String>),
    /// Phone variables first, then AUs by descending activation count in the
    /// data (ties keep declaration order).
    PhoneFirstByFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingPolicy {
    pub ordering: Ordering,
    pub max_parents: usize,
}

impl Default for OrderingPolicy {
    fn default() -> Self {
        OrderingPolicy {
            ordering: Ordering::PhoneFirstByFrequency,
            max_parents: DEFAULT_MAX_PARENTS,
        }
    }
}

impl OrderingPolicy {
    pub fn explicit(order: Vec<String>, max_parents: usize) -> Self {
        OrderingPolicy {
            ordering: Ordering::Explicit(order),
            max_parents,
        }
    }

    /// Resolves the ordering against the hidden variables and, for the
    /// frequency rule, the current-slice columns of `data`.
    pub fn resolve(&self, hidden: &[Variable], data: &Dataset) -> Result<Vec<String>> {
        match &self.ordering {
            Ordering::Explicit(order) => {
                let want: BTreeSet<&str> = hidden.iter().map(|v| v.name.as_str()).collect();
                let got: BTreeSet<&str> = order.iter().map(String::as_str).collect();
                if got != want || order.len() != hidden.len() {
                    return Err(Error::InvalidArgument(format!(
                        "ordering {order:?} is not a permutation of the hidden variables"
                    )));
                }
                Ok(order.clone())
            }
            Ordering::PhoneFirstByFrequency => {
                let mut phones: Vec<String> = hidden
                    .iter()
                    .filter(|v| v.role == Role::HiddenPhone)
                    .map(|v| v.name.clone())
                    .collect();
                let mut aus = Vec::new();
                for (pos, v) in hidden.iter().enumerate().filter(|(_, v)| v.role == Role::HiddenAu) {
                    let col = data.column_index(&NodeRef::current(v.name.clone()))?;
                    let active = data.column(col).iter().filter(|&&s| s == 1).count();
                    aus.push((std::cmp::Reverse(active), pos, v.name.clone()));
                }
                aus.sort();
                phones.extend(aus.into_iter().map(|(_, _, n)| n));
                Ok(phones)
            }
        }
    }
}

/// Greedy K2 parent selection over `hidden` under `policy`.
///
/// Returns intra-slice edges sorted by (child position, parent position).
pub fn k2_search(data: &Dataset, hidden: &[Variable], policy: &OrderingPolicy) -> Result<Vec<Edge>> {
    let order = policy.resolve(hidden, data)?;
    let nodes: Vec<NodeRef> = order.iter().map(|n| NodeRef::current(n.clone())).collect();
    for n in &nodes {
        data.require_complete(n)?;
    }
    let mut edges = Vec::new();
    for (i, child) in nodes.iter().enumerate() {
        let mut parents: Vec<usize> = Vec::new();
        let refs = |ps: &[usize]| ps.iter().map(|&p| nodes[p].clone()).collect::<Vec<_>>();
        let mut best = k2_family_log_score(&count_stats(data, child, &[])?);
        while parents.len() < policy.max_parents {
            let mut pick: Option<(usize, f64)> = None;
            for cand in 0..i {
                if parents.contains(&cand) {
                    continue;
                }
                let mut trial = parents.clone();
                trial.push(cand);
                let score = k2_family_log_score(&count_stats(data, child, &refs(&trial))?);
                if pick.is_none_or(|(_, s)| score > s) {
                    pick = Some((cand, score));
                }
            }
            match pick {
                Some((cand, score)) if score > best => {
                    parents.push(cand);
                    best = score;
                }
                _ => break,
            }
        }
        parents.sort_unstable();
        edges.extend(parents.iter().map(|&p| Edge::new(order[p].clone(), order[i].clone())));
    }
    Ok(edges)
}

/// One family of a candidate structure.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Family {
    pub child: NodeRef,
    pub parents: Vec<NodeRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureCandidate {
    pub families: Vec<Family>,
    pub family_scores: Vec<f64>,
    pub total_score: f64,
    /// Free parameter count `q`.
    pub parameters: usize,
}

/// Maximized log-likelihood of one family (0·log 0 taken as 0).
pub fn family_log_likelihood(stats: &SufficientStats) -> f64 {
    stats
        .counts
        .chunks(stats.child_card)
        .zip(&stats.row_totals)
        .filter(|(_, &n)| n > 0)
        .map(|(row, &n_ij)| {
            let n_ij = n_ij as f64;
            row.iter()
                .filter(|&&n| n > 0)
                .map(|&n| n as f64 * (n as f64 / n_ij).ln())
                .sum::<f64>()
        })
        .sum()
}

fn family_bic(data: &Dataset, family: &Family, ln_samples: f64) -> Result<f64> {
    let stats = count_stats(data, &family.child, &family.parents)?;
    Ok(family_log_likelihood(&stats) - 0.5 * stats.free_parameters() as f64 * ln_samples)
}

/// `log p(D | θ̂, B) - (q / 2) log S` with a uniform structure prior.
pub fn bic_log_score(families: &[Family], data: &Dataset) -> Result<StructureCandidate> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    check_acyclic(families)?;
    let ln_s = (data.len() as f64).ln();
    let mut family_scores = Vec::with_capacity(families.len());
    let mut parameters = 0;
    for f in families {
        let stats = count_stats(data, &f.child, &f.parents)?;
        parameters += stats.free_parameters();
        family_scores.push(family_log_likelihood(&stats) - 0.5 * stats.free_parameters() as f64 * ln_s);
    }
    Ok(StructureCandidate {
        families: families.to_vec(),
        total_score: family_scores.iter().sum(),
        family_scores,
        parameters,
    })
}

fn check_acyclic(families: &[Family]) -> Result<()> {
    let spec = NetworkSpec {
        variables: families
            .iter()
            .flat_map(|f| std::iter::once(&f.child).chain(&f.parents))
            .filter(|n| !n.prev)
            .map(|n| n.name.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|n| Variable::new(n, 2, Role::HiddenAu))
            .collect(),
        intra_edges: families
            .iter()
            .flat_map(|f| {
                f.parents
                    .iter()
                    .filter(|p| !p.prev)
                    .map(|p| Edge::new(p.name.clone(), f.child.name.clone()))
            })
            .collect(),
        ..Default::default()
    };
    spec.topological_order().map(|_| ())
}

/// Greedy BIC hill climbing over inter-slice edges `X@t-1 -> Y` among
/// `hidden`. Starts from self-loops; each step applies the single add or
/// remove with the largest positive gain, ties going to the
/// lexicographically first edge. `data` holds slice-pair records.
pub fn transition_search(
    data: &Dataset,
    hidden: &[String],
    fixed_intra: &[Edge],
    max_parents: usize,
) -> Result<Vec<Edge>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let intra: Vec<Vec<NodeRef>> = hidden
        .iter()
        .map(|h| {
            fixed_intra
                .iter()
                .filter(|e| &e.to == h)
                .map(|e| NodeRef::current(e.from.clone()))
                .collect()
        })
        .collect();
    check_acyclic(
        &hidden
            .iter()
            .zip(&intra)
            .map(|(h, ps)| Family {
                child: NodeRef::current(h.clone()),
                parents: ps.clone(),
            })
            .collect::<Vec<_>>(),
    )?;

    let ln_s = (data.len() as f64).ln();
    let mut inter: Vec<BTreeSet<usize>> = (0..hidden.len())
        .map(|i| if max_parents > 0 { BTreeSet::from([i]) } else { BTreeSet::new() })
        .collect();
    let mut cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let mut score = |y: usize, sources: &BTreeSet<usize>| -> Result<f64> {
        let key = (y, sources.iter().copied().collect::<Vec<_>>());
        if let Some(&s) = cache.get(&key) {
            return Ok(s);
        }
        let mut parents = intra[y].clone();
        parents.extend(sources.iter().map(|&x| NodeRef::previous(hidden[x].clone())));
        let family = Family {
            child: NodeRef::current(hidden[y].clone()),
            parents,
        };
        let s = family_bic(data, &family, ln_s)?;
        cache.insert(key, s);
        Ok(s)
    };

    let mut candidates: Vec<(usize, usize)> = (0..hidden.len())
        .flat_map(|x| (0..hidden.len()).map(move |y| (x, y)))
        .collect();
    candidates.sort_by(|a, b| (&hidden[a.0], &hidden[a.1]).cmp(&(&hidden[b.0], &hidden[b.1])));

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for &(x, y) in &candidates {
            let current = score(y, &inter[y])?;
            let mut trial = inter[y].clone();
            if !trial.remove(&x) {
                if trial.len() >= max_parents {
                    continue;
                }
                trial.insert(x);
            }
            let gain = score(y, &trial)? - current;
            if gain > 1e-9 && best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, x, y));
            }
        }
        let Some((_, x, y)) = best else { break };
        if !inter[y].remove(&x) {
            inter[y].insert(x);
        }
    }

    let mut edges: Vec<Edge> = inter
        .iter()
        .enumerate()
        .flat_map(|(y, xs)| xs.iter().map(move |&x| Edge::new(hidden[x].clone(), hidden[y].clone())))
        .collect();
    edges.sort();
    Ok(edges)
}

/// Adds previous-slice AU -> current-slice phone edges. Existing transition
/// CPT rows are replicated across the new parent so the result stays a
/// valid model until it is refitted.
pub fn inject_expert_edges(spec: &NetworkSpec, edges: &[Edge], parent_cap: usize) -> Result<NetworkSpec> {
    let mut out = spec.clone();
    for e in edges {
        let reject = |reason: &str| Error::ExpertEdge {
            from: e.from.clone(),
            to: e.to.clone(),
            reason: reason.to_string(),
        };
        let from = spec.variable(&e.from).map_err(|_| reject("unknown source"))?;
        let to = spec.variable(&e.to).map_err(|_| reject("unknown target"))?;
        if from.role != Role::HiddenAu {
            return Err(reject("source must be a hidden AU in slice t-1"));
        }
        if to.role != Role::HiddenPhone {
            return Err(reject("target must be the hidden phone in slice t"));
        }
        if out.inter_edges.contains(e) {
            continue;
        }
        if out.transition_family(&e.to).len() + 1 > parent_cap {
            return Err(reject(&format!("family of `{}` would exceed {parent_cap} parents", e.to)));
        }
        let card = from.cardinality;
        let child_card = to.cardinality;
        out.inter_edges.push(e.clone());
        if let Some(cpts) = out.transition_cpts.as_mut() {
            if let Some(cpt) = cpts.iter_mut().find(|c| c.child == e.to) {
                let mut table = Vec::with_capacity(cpt.table.len() * card);
                for row in cpt.table.chunks(child_card) {
                    for _ in 0..card {
                        table.extend_from_slice(row);
                    }
                }
                let mut parents = cpt.parents.clone();
                parents.push(NodeRef::previous(e.from.clone()));
                *cpt = Cpt::new(cpt.child.clone(), parents, table);
            }
        }
    }
    Ok(out)
}
