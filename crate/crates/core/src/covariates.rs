use crate::error::{Error, Result};

/// Contextual variables `z[n, k, t]` for N DMUs, K variables and T periods.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    num_dmus: usize,
    num_periods: usize,
    // index: (t * N + n) * K + k
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(
        names: Vec<String>,
        num_dmus: usize,
        num_periods: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = names.len() * num_dmus * num_periods;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "covariate array has {} values, expected {} (N={num_dmus}, K={}, T={num_periods})",
                values.len(),
                expected,
                names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        Ok(Self {
            names,
            num_dmus,
            num_periods,
            values,
        })
    }

    /// No contextual variables.
    pub fn empty(num_dmus: usize, num_periods: usize) -> Self {
        Self {
            names: Vec::new(),
            num_dmus,
            num_periods,
            values: Vec::new(),
        }
    }

    /// Build from a function of `(n, k, t)`.
    pub fn from_fn(
        names: Vec<String>,
        num_dmus: usize,
        num_periods: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let k_count = names.len();
        let mut values = Vec::with_capacity(k_count * num_dmus * num_periods);
        for t in 0..num_periods {
            for n in 0..num_dmus {
                for k in 0..k_count {
                    values.push(f(n, k, t));
                }
            }
        }
        Self::new(names, num_dmus, num_periods, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_dmus(&self) -> usize {
        self.num_dmus
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, t: usize) -> f64 {
        self.values[(t * self.num_dmus + n) * self.names.len() + k]
    }

    /// The K values of DMU `n` at period `t`.
    #[inline]
    pub fn row(&self, n: usize, t: usize) -> &[f64] {
        let k = self.names.len();
        let start = (t * self.num_dmus + n) * k;
        &self.values[start..start + k]
    }

    /// Keep only the named variables, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|name| {
                self.names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::invalid(format!("unknown covariate '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_fn(
            names.to_vec(),
            self.num_dmus,
            self.num_periods,
            |n, k, t| self.get(n, idx[k], t),
        )
    }

    /// Permute DMUs: new DMU `perm[n]` takes the values of old DMU `n`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut inverse = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        Self::from_fn(
            self.names.clone(),
            self.num_dmus,
            self.num_periods,
            |n, k, t| self.get(inverse[n], k, t),
        )
    }

    /// Add `shift` to every value of variable `k`.
    pub fn shifted(&self, k: usize, shift: f64) -> Self {
        Self::from_fn(
            self.names.clone(),
            self.num_dmus,
            self.num_periods,
            |n, j, t| self.get(n, j, t) + if j == k { shift } else { 0.0 },
        )
        .expect("shift of finite values")
    }
}
