use std::fmt;

use crate::ranking::RankingSeries;

/// A split of the DMUs where every DMU in `dominant` outranks every DMU in
/// `rest` in every period, so their worth gap has no finite MLE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifiabilityViolation {
    pub dominant: Vec<usize>,
    pub rest: Vec<usize>,
}

impl fmt::Display for IdentifiabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DMUs {:?} are ranked above DMUs {:?} in every period",
            self.dominant, self.rest
        )
    }
}

impl IdentifiabilityViolation {
    /// The partition with DMU labels instead of indices.
    pub fn labelled(&self, labels: &[String]) -> String {
        let names = |idx: &[usize]| {
            idx.iter()
                .map(|&i| labels[i].as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "{{{}}} ranked above {{{}}} in every period",
            names(&self.dominant),
            names(&self.rest)
        )
    }
}

/// Hunter's condition: the "outranks in some period" graph must be strongly
/// connected. On failure the returned partition is the source component of
/// that graph against everyone else.
pub fn check_identifiability(rankings: &RankingSeries) -> Result<(), IdentifiabilityViolation> {
    let n = rankings.num_dmus();
    if rankings.num_periods() == 0 {
        return Err(IdentifiabilityViolation {
            dominant: vec![0],
            rest: (1..n).collect(),
        });
    }

    // reach[a][b]: a outranks b, directly or through a chain of periods
    let mut reach = vec![vec![false; n]; n];
    for r in rankings.iter() {
        let ord = r.ordering();
        for (p, &a) in ord.iter().enumerate() {
            for &b in &ord[p + 1..] {
                reach[a][b] = true;
            }
        }
    }
    #[allow(clippy::needless_range_loop)]
    for k in 0..n {
        for a in 0..n {
            if reach[a][k] {
                for b in 0..n {
                    if reach[k][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
    }

    // The first-period winner reaches every DMU, so its component has no
    // incoming edges from outside: it is the source component.
    let top = rankings.get(0).ordering()[0];
    let (dominant, rest): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&b| b == top || (reach[top][b] && reach[b][top]));
    if rest.is_empty() {
        Ok(())
    } else {
        Err(IdentifiabilityViolation { dominant, rest })
    }
}
