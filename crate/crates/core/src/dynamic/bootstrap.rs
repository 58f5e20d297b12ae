//! Parametric bootstrap for the ranking model.
//!
//! Each replicate simulates a ranking panel from the fitted parameters with
//! the observed covariates and refits it. Replicate `b` draws from a ChaCha
//! stream keyed by `(seed, b)`, so results do not depend on whether the
//! replicates run in parallel or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fit::two_sided_p;
use super::{
    check_identifiability, fit, simulate, DrmData, DrmFit, FitOptions, Inference, InferenceMethod,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    pub parallel: bool,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_rate: f64,
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            parallel: true,
            max_failure_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub requested: usize,
    pub failed: usize,
    /// Replicate estimates of the free parameters, in replicate order.
    pub estimates: Vec<Vec<f64>>,
}

/// RNG for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn replicate(
    data: &DrmData,
    original: &DrmFit,
    options: &FitOptions,
    seed: u64,
    index: usize,
) -> Option<Vec<f64>> {
    let mut rng = replicate_rng(seed, index);
    let rankings = simulate(&original.params, data.covariates(), &mut rng).ok()?;
    if check_identifiability(&rankings).is_err() {
        return None;
    }
    let sim = DrmData::new(rankings, data.covariates().clone()).ok()?;
    fit(&sim, options).ok().map(|f| f.estimates)
}

/// Bootstrap standard errors and p-values for `original`.
///
/// Replicates that cannot be fitted are dropped; more than
/// `max_failure_rate` of them failing is an error. The returned fit carries
/// bootstrap-tagged inference: the standard deviation of the replicate
/// estimates and normal p-values of `estimate / SE`.
pub fn bootstrap(
    data: &DrmData,
    original: &DrmFit,
    fit_options: &FitOptions,
    options: &BootstrapOptions,
) -> Result<(DrmFit, BootstrapSummary)> {
    if options.replications == 0 {
        return Err(Error::invalid("bootstrap needs at least one replication"));
    }
    let replicate_options = FitOptions {
        dynamics: original.dynamics,
        compute_hessian: false,
        initial: Some(original.params.clone()),
        ..fit_options.clone()
    };
    let run = |b: usize| replicate(data, original, &replicate_options, options.seed, b);
    let results: Vec<Option<Vec<f64>>> = if options.parallel {
        (0..options.replications).into_par_iter().map(run).collect()
    } else {
        (0..options.replications).map(run).collect()
    };

    let estimates: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let failed = options.replications - estimates.len();
    if failed as f64 > options.max_failure_rate * options.replications as f64 || estimates.len() < 2
    {
        return Err(Error::Bootstrap {
            failed,
            total: options.replications,
        });
    }

    let p = original.estimates.len();
    let count = estimates.len() as f64;
    let sd = |values: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = values.collect();
        let mean = v.iter().sum::<f64>() / count;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
    };
    let std_errors: Vec<f64> = (0..p)
        .map(|i| sd(&mut estimates.iter().map(|e| e[i])))
        .collect();
    let m = data.num_dmus() - 1;
    let omega_last_std_error = sd(&mut estimates.iter().map(|e| -e[..m].iter().sum::<f64>()));
    let p_values = original
        .estimates
        .iter()
        .zip(&std_errors)
        .map(|(&e, &s)| two_sided_p(e, s))
        .collect();

    let mut boot = original.clone();
    boot.inference = Some(Inference {
        method: InferenceMethod::Bootstrap,
        std_errors,
        p_values,
        omega_last_std_error,
    });
    Ok((
        boot,
        BootstrapSummary {
            requested: options.replications,
            failed,
            estimates,
        },
    ))
}
