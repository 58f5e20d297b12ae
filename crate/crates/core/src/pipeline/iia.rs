//! Leave-one-out check of how far DEA rankings are from satisfying
//! independence of irrelevant alternatives.

use rayon::prelude::*;

use super::describe::pearson;
use super::PanelDataset;
use crate::dea::{cross_section_scores, CrossSection, DeaModel, ScoreStatus};
use crate::error::{Error, Result};
use crate::ranking::{rank_scores, SCORE_TIE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IiaCorrelation {
    /// Pearson correlation of the pooled (original, recomputed) rank pairs.
    #[default]
    PearsonRanks,
    /// Spearman correlation of the pooled (original, recomputed) H scores.
    SpearmanScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IiaRemoval {
    pub period: usize,
    pub removed: usize,
    /// H score of the removed DMU in the full set.
    pub removed_score: f64,
    pub unchanged: bool,
    /// Number of remaining DMUs whose rank changed.
    pub moved: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IiaReport {
    pub unchanged_fraction: f64,
    pub rank_correlation: f64,
    pub correlation: IiaCorrelation,
    /// One entry per (period, removed DMU), period-major.
    pub removals: Vec<IiaRemoval>,
}

impl IiaReport {
    /// Unchanged fraction over the removals selected by `keep`; `None` if
    /// none are selected.
    pub fn unchanged_fraction_where(&self, keep: impl Fn(&IiaRemoval) -> bool) -> Option<f64> {
        let (hits, total) = self
            .removals
            .iter()
            .filter(|r| keep(r))
            .fold((0usize, 0usize), |(h, t), r| {
                (h + usize::from(r.unchanged), t + 1)
            });
        (total > 0).then(|| hits as f64 / total as f64)
    }
}

fn h_scores(cs: &CrossSection) -> Result<Vec<f64>> {
    cross_section_scores(cs, DeaModel::H)
        .into_iter()
        .enumerate()
        .map(|(n, s)| match s.status {
            ScoreStatus::Failed(status) => Err(Error::Model {
                dmu: cs.labels()[n].clone(),
                period: cs.period().to_string(),
                status,
            }),
            _ => Ok(s.value),
        })
        .collect()
}

struct Comparison {
    removal: IiaRemoval,
    rank_pairs: Vec<(f64, f64)>,
    score_pairs: Vec<(f64, f64)>,
}

fn compare(cs: &CrossSection, full: &[f64], period: usize, removed: usize) -> Result<Comparison> {
    let reduced = cs.without(removed)?;
    let scores = h_scores(&reduced)?;
    let original = rank_scores(full, SCORE_TIE_TOL).ranking.without(removed);
    let recomputed = rank_scores(&scores, SCORE_TIE_TOL).ranking;
    let before = original.ranks();
    let after = recomputed.ranks();
    let moved = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    let kept_scores = full
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != removed)
        .map(|(_, s)| *s);
    Ok(Comparison {
        removal: IiaRemoval {
            period,
            removed,
            removed_score: full[removed],
            unchanged: moved == 0,
            moved,
        },
        rank_pairs: before
            .iter()
            .zip(&after)
            .map(|(&a, &b)| (a as f64, b as f64))
            .collect(),
        score_pairs: kept_scores.zip(scores).collect(),
    })
}

/// Average ranks (ties share the mean rank).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Run the experiment on explicit cross-sections (one per period).
pub fn iia_cross_sections(
    sections: &[CrossSection],
    correlation: IiaCorrelation,
) -> Result<IiaReport> {
    if sections.iter().any(|cs| cs.num_dmus() < 3) {
        return Err(Error::invalid(
            "the IIA experiment needs at least three DMUs",
        ));
    }
    let full: Vec<Vec<f64>> = sections.par_iter().map(h_scores).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = sections
        .iter()
        .enumerate()
        .flat_map(|(t, cs)| (0..cs.num_dmus()).map(move |n| (t, n)))
        .collect();
    let comparisons: Vec<Comparison> = jobs
        .par_iter()
        .map(|&(t, n)| compare(&sections[t], &full[t], t, n))
        .collect::<Result<_>>()?;

    let pairs: Vec<(f64, f64)> = match correlation {
        IiaCorrelation::PearsonRanks => comparisons
            .iter()
            .flat_map(|c| c.rank_pairs.iter().copied())
            .collect(),
        IiaCorrelation::SpearmanScores => {
            let raw: Vec<(f64, f64)> = comparisons
                .iter()
                .flat_map(|c| c.score_pairs.iter().copied())
                .collect();
            let a = average_ranks(&raw.iter().map(|p| p.0).collect::<Vec<_>>());
            let b = average_ranks(&raw.iter().map(|p| p.1).collect::<Vec<_>>());
            a.into_iter().zip(b).collect()
        }
    };
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    // identical sequences are perfectly correlated even when constant
    let rank_correlation = pearson(&a, &b).unwrap_or(if a == b { 1.0 } else { f64::NAN });

    let removals: Vec<IiaRemoval> = comparisons.into_iter().map(|c| c.removal).collect();
    let unchanged = removals.iter().filter(|r| r.unchanged).count();
    Ok(IiaReport {
        unchanged_fraction: unchanged as f64 / removals.len() as f64,
        rank_correlation,
        correlation,
        removals,
    })
}

/// Remove each DMU in each period in turn, recompute H scores on the rest and
/// compare the new ranking with the original one restricted to the rest.
pub fn iia_experiment(data: &PanelDataset, correlation: IiaCorrelation) -> Result<IiaReport> {
    let sections = (0..data.num_periods())
        .map(|t| data.cross_section(t))
        .collect::<Result<Vec<_>>>()?;
    iia_cross_sections(&sections, correlation)
}
