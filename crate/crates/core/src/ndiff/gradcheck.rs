//! Finite-difference validation of analytic gradients.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::params::ParamSet;

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative discrepancy over the checked coordinates.
    pub max_rel: f64,
    /// Number of coordinates checked.
    pub checked: usize,
    /// Description of the worst coordinate.
    pub worst: String,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel < self.tolerance
    }
}

fn relative_discrepancy(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= 1e-7 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Compare analytic gradients of `loss` against central finite differences on
/// a stratified random subsample of coordinates: up to `n_per_block` from
/// each parameter block (every weight matrix, bias, and auxiliary vector), so
/// no branch of a model escapes checking.
///
/// `loss` must be deterministic (dropout off).
pub fn grad_check<L, G>(
    loss: L,
    analytic_grad: G,
    params: &ParamSet,
    n_per_block: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport
where
    L: Fn(&ParamSet) -> f64,
    G: Fn(&ParamSet) -> ParamSet,
{
    let analytic = analytic_grad(params).to_flat();
    let mut work = params.clone();
    let mut flat = params.to_flat();
    let mut rng = StdRng::seed_from_u64(seed);

    let mut max_rel = 0.0;
    let mut worst = String::from("none");
    let mut checked = 0;

    for (start, len) in params.block_spans() {
        if len == 0 {
            continue;
        }
        let take = n_per_block.min(len);
        // Sample without replacement within the block.
        let mut picked = std::collections::BTreeSet::new();
        while picked.len() < take {
            picked.insert(start + rng.random_range(0..len));
        }
        for idx in picked {
            let original = flat[idx];
            flat[idx] = original + step;
            work.copy_from_flat(&flat).expect("matching shapes");
            let plus = loss(&work);
            flat[idx] = original - step;
            work.copy_from_flat(&flat).expect("matching shapes");
            let minus = loss(&work);
            flat[idx] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = relative_discrepancy(analytic[idx], numeric);
            if rel > max_rel {
                max_rel = rel;
                worst = format!(
                    "{} analytic={:.6e} numeric={:.6e}",
                    params.describe_index(idx),
                    analytic[idx],
                    numeric
                );
            }
            checked += 1;
        }
    }
    work.copy_from_flat(&flat).expect("matching shapes");

    GradCheckReport {
        max_rel,
        checked,
        worst,
        tolerance,
    }
}
