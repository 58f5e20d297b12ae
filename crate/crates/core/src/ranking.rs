//! Strict rankings of DMUs.
//!
//! DMUs are indexed `0..N`. Positions are 0-based internally (position 0 is
//! the best DMU); [`Ranking::rank`] and [`Ranking::ranks`] report the usual
//! 1-based ranks.

use crate::error::{Error, Result};

/// A full permutation with its inverse cached.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    ordering: Vec<usize>,
    positions: Vec<usize>,
}

impl Ranking {
    /// From the ordering: `ordering[p]` is the DMU at position `p`.
    pub fn from_ordering(ordering: Vec<usize>) -> Result<Self> {
        let n = ordering.len();
        let mut positions = vec![usize::MAX; n];
        for (p, &dmu) in ordering.iter().enumerate() {
            if dmu >= n || positions[dmu] != usize::MAX {
                return Err(Error::invalid(format!(
                    "ordering {ordering:?} is not a permutation of 0..{n}"
                )));
            }
            positions[dmu] = p;
        }
        Ok(Self {
            ordering,
            positions,
        })
    }

    /// From 1-based ranks: `ranks[n]` is the rank of DMU `n`.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let n = ranks.len();
        let mut ordering = vec![usize::MAX; n];
        for (dmu, &r) in ranks.iter().enumerate() {
            if r == 0 || r > n || ordering[r - 1] != usize::MAX {
                return Err(Error::invalid(format!(
                    "ranks {ranks:?} are not a permutation of 1..={n}"
                )));
            }
            ordering[r - 1] = dmu;
        }
        Self::from_ordering(ordering)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            ordering: (0..n).collect(),
            positions: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// 0-based position of each DMU.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// 1-based rank of `dmu`.
    pub fn rank(&self, dmu: usize) -> usize {
        self.positions[dmu] + 1
    }

    /// 1-based ranks of all DMUs.
    pub fn ranks(&self) -> Vec<usize> {
        self.positions.iter().map(|p| p + 1).collect()
    }

    /// Ranking of the remaining DMUs after `removed` is dropped; DMUs after
    /// `removed` are re-indexed down by one.
    pub fn without(&self, removed: usize) -> Ranking {
        let ordering = self
            .ordering
            .iter()
            .filter(|&&d| d != removed)
            .map(|&d| if d > removed { d - 1 } else { d })
            .collect();
        Ranking::from_ordering(ordering).expect("restriction of a permutation")
    }

    /// Same ranking with DMU indices relabeled: DMU `n` becomes `relabel[n]`.
    pub fn relabeled(&self, relabel: &[usize]) -> Result<Ranking> {
        Ranking::from_ordering(self.ordering.iter().map(|&d| relabel[d]).collect())
    }
}

/// Rankings for consecutive periods, all over the same DMUs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingSeries {
    rankings: Vec<Ranking>,
}

impl RankingSeries {
    pub fn new(rankings: Vec<Ranking>) -> Result<Self> {
        if let Some(first) = rankings.first() {
            let n = first.len();
            if let Some(bad) = rankings.iter().position(|r| r.len() != n) {
                return Err(Error::invalid(format!(
                    "ranking for period {bad} has {} DMUs, expected {n}",
                    rankings[bad].len()
                )));
            }
        }
        Ok(Self { rankings })
    }

    pub fn num_dmus(&self) -> usize {
        self.rankings.first().map_or(0, Ranking::len)
    }

    pub fn num_periods(&self) -> usize {
        self.rankings.len()
    }

    pub fn get(&self, t: usize) -> &Ranking {
        &self.rankings[t]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Ranking> {
        self.rankings.iter()
    }

    pub fn as_slice(&self) -> &[Ranking] {
        &self.rankings
    }
}

/// Result of ranking a vector of scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOutcome {
    pub ranking: Ranking,
    /// Groups of DMUs whose scores were tied and were ordered by index.
    pub ties: Vec<Vec<usize>>,
}

/// Default tolerance under which two efficiency scores count as tied.
pub const SCORE_TIE_TOL: f64 = 1e-9;

/// Rank scores in descending order (rank 1 = highest score).
///
/// Scores within `tol * max(1, |s|)` of the first score of a run are tied;
/// tied DMUs are ordered by ascending index and reported in
/// [`RankOutcome::ties`], and a warning is logged.
pub fn rank_scores(scores: &[f64], tol: f64) -> RankOutcome {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let head = scores[order[start]];
        let band = tol * head.abs().max(1.0);
        let mut end = start + 1;
        while end < order.len() && (head - scores[order[end]]).abs() <= band {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_unstable();
            ties.push(order[start..end].to_vec());
        }
        start = end;
    }
    if !ties.is_empty() {
        log::warn!("tied scores broken by DMU index: {ties:?}");
    }

    RankOutcome {
        ranking: Ranking::from_ordering(order).expect("sorted indices form a permutation"),
        ties,
    }
}
