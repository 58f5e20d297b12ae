//! Plackett–Luce distribution over full rankings.
//!
//! With worths `w` and ordering `O` (best first), the probability of a
//! ranking is `prod_r exp(w_{O(r)}) / sum_{s >= r} exp(w_{O(s)})`. All
//! evaluations work in log space: one backward pass accumulates the suffix
//! log-sum-exp terms, so large worth differences never overflow.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ranking::Ranking;

/// Worth parameters of N DMUs at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct WorthVector(Vec<f64>);

impl WorthVector {
    pub fn new(worths: Vec<f64>) -> Result<Self> {
        if worths.len() < 2 {
            return Err(Error::invalid("a worth vector needs at least two DMUs"));
        }
        if worths.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("worths must be finite"));
        }
        Ok(Self(worths))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for WorthVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `suffix[p] = ln sum_{s >= p} exp(w[ordering[s]])`.
fn suffix_log_sums(w: &[f64], ordering: &[usize], suffix: &mut [f64]) {
    let mut acc = f64::NEG_INFINITY;
    for p in (0..ordering.len()).rev() {
        acc = log_add_exp(acc, w[ordering[p]]);
        suffix[p] = acc;
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn check_lengths(w: &[f64], r: &Ranking) {
    assert_eq!(
        w.len(),
        r.len(),
        "worth vector and ranking cover different numbers of DMUs"
    );
}

/// Log-probability of ranking `r`.
pub fn log_probability(w: &[f64], r: &Ranking) -> f64 {
    check_lengths(w, r);
    let mut suffix = vec![0.0; w.len()];
    suffix_log_sums(w, r.ordering(), &mut suffix);
    w.iter().sum::<f64>() - suffix.iter().sum::<f64>()
}

/// Gradient of [`log_probability`] with respect to the worths.
pub fn score(w: &[f64], r: &Ranking) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    log_probability_and_score(w, r, &mut out);
    out
}

/// Log-probability of `r`, writing the score into `grad`.
///
/// `grad[n] = 1 - sum_{p <= pos(n)} exp(w_n - L_p)` with `L_p` the suffix
/// log-sums. Since `L_p` decreases in `p`, the partial sums are carried as
/// `G_p = sum_{q <= p} exp(L_p - L_q)`, whose terms are all at most one.
pub fn log_probability_and_score(w: &[f64], r: &Ranking, grad: &mut [f64]) -> f64 {
    check_lengths(w, r);
    let n = w.len();
    let ordering = r.ordering();
    let mut suffix = vec![0.0; n];
    suffix_log_sums(w, ordering, &mut suffix);

    let mut carried = 0.0;
    for p in 0..n {
        carried = if p == 0 {
            1.0
        } else {
            carried * (suffix[p] - suffix[p - 1]).exp() + 1.0
        };
        let dmu = ordering[p];
        grad[dmu] = 1.0 - (w[dmu] - suffix[p]).exp() * carried;
    }
    w.iter().sum::<f64>() - suffix.iter().sum::<f64>()
}

/// Draw a ranking by repeatedly picking the next DMU among those left with
/// probability proportional to `exp(worth)`.
pub fn sample<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> Ranking {
    let mut remaining: Vec<usize> = (0..w.len()).collect();
    let mut ordering = Vec::with_capacity(w.len());
    let mut weights = vec![0.0; w.len()];
    while remaining.len() > 1 {
        let max = remaining
            .iter()
            .map(|&d| w[d])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (slot, &d) in weights.iter_mut().zip(&remaining) {
            *slot = (w[d] - max).exp();
            total += *slot;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = remaining.len() - 1;
        for (i, &weight) in weights[..remaining.len()].iter().enumerate() {
            acc += weight;
            if target < acc {
                pick = i;
                break;
            }
        }
        ordering.push(remaining.remove(pick));
    }
    ordering.extend(remaining);
    Ranking::from_ordering(ordering).expect("sampled ordering is a permutation")
}

/// Largest N accepted by [`enumerate_pmf`].
pub const MAX_ENUMERATION: usize = 8;

/// Probability of every one of the N! rankings (N <= 8).
pub fn enumerate_pmf(w: &[f64]) -> Result<Vec<(Ranking, f64)>> {
    let n = w.len();
    if n > MAX_ENUMERATION {
        return Err(Error::invalid(format!(
            "enumeration limited to {MAX_ENUMERATION} DMUs, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut ordering: Vec<usize> = (0..n).collect();
    permute(&mut ordering, 0, &mut |perm| {
        let r = Ranking::from_ordering(perm.to_vec()).expect("permutation");
        // direct product form, independent of the log-space evaluation
        let mut p = 1.0;
        for pos in 0..n {
            let denom: f64 = perm[pos..].iter().map(|&d| w[d].exp()).sum();
            p *= w[perm[pos]].exp() / denom;
        }
        out.push((r, p));
    });
    Ok(out)
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
