//! Maximum-likelihood CPT fitting with optional additive smoothing.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Cpt, NetworkSpec, NodeRef};
use crate::structure::{count_stats, SufficientStats};

/// Additive pseudo-count per cell; zero is plain maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingPolicy {
    alpha: f64,
}

impl SmoothingPolicy {
    pub const MLE: SmoothingPolicy = SmoothingPolicy { alpha: 0.0 };

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing alpha must be >= 0, got {alpha}")));
        }
        Ok(SmoothingPolicy { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for SmoothingPolicy {
    fn default() -> Self {
        SmoothingPolicy { alpha: 1.0 }
    }
}

/// `(N_ijk + α) / (N_ij + α K)`; rows with no mass become uniform.
pub fn fit_cpt(stats: &SufficientStats, smoothing: SmoothingPolicy) -> Cpt {
    let k = stats.child_card;
    let alpha = smoothing.alpha;
    let mut table = Vec::with_capacity(stats.counts.len());
    for (row, &n_ij) in stats.counts.chunks(k).zip(&stats.row_totals) {
        let denom = n_ij as f64 + alpha * k as f64;
        if denom == 0.0 {
            table.extend(std::iter::repeat_n(1.0 / k as f64, k));
        } else {
            table.extend(row.iter().map(|&n| (n as f64 + alpha) / denom));
        }
    }
    Cpt::new(stats.child.name.clone(), stats.parents.clone(), table)
}

fn fit_family(data: &Dataset, child: &str, parents: Vec<NodeRef>, smoothing: SmoothingPolicy) -> Result<Cpt> {
    let child_ref = NodeRef::current(child);
    for node in std::iter::once(&child_ref).chain(&parents) {
        data.column_index(node).map_err(|_| {
            Error::InvalidArgument(format!("data lacks `{node}` required by the family of `{child}`"))
        })?;
    }
    let stats = count_stats(data, &child_ref, &parents)?;
    Ok(fit_cpt(&stats, smoothing))
}

/// Fits every CPT of `structure`. Initial-slice families come from
/// `initial`; when `transition` is given, transition families come from
/// those slice-pair records and the result is a DBN.
pub fn fit_all(
    structure: &NetworkSpec,
    initial: &Dataset,
    transition: Option<&Dataset>,
    smoothing: SmoothingPolicy,
) -> Result<NetworkSpec> {
    let mut spec = structure.clone();
    spec.cpts = structure
        .variables
        .iter()
        .map(|v| fit_family(initial, &v.name, structure.initial_family(&v.name), smoothing))
        .collect::<Result<_>>()?;
    spec.transition_cpts = match transition {
        Some(data) => Some(
            structure
                .variables
                .iter()
                .map(|v| fit_family(data, &v.name, structure.transition_family(&v.name), smoothing))
                .collect::<Result<_>>()?,
        ),
        None => {
            if !structure.inter_edges.is_empty() {
                return Err(Error::InvalidArgument(
                    "structure has inter-slice edges but no transition data".into(),
                ));
            }
            None
        }
    };
    Ok(spec)
}
