//! Central finite-difference gradient checking for any tape-built loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::tensor::{GradStore, ParamSet};

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("non-finite value encountered during gradient check")]
    NonFiniteValue,
}

/// Compare analytic gradients with central finite differences for every
/// parameter coordinate, or for a seeded random sample of at least
/// `max_coords` coordinates on large parameter sets. Returns the maximum
/// relative error.
pub fn grad_check<F, G>(
    params: &ParamSet,
    loss_fn: F,
    grad_fn: G,
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64, GradCheckError>
where
    F: Fn(&ParamSet) -> f64,
    G: Fn(&ParamSet, &mut GradStore) -> f64,
{
    let mut analytic = GradStore::zeros_like(params);
    let base = grad_fn(params, &mut analytic);
    if !base.is_finite() {
        return Err(GradCheckError::NonFiniteValue);
    }

    let mut coords: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|p| (0..params.get(p).len()).map(move |i| (p, i)))
        .collect();
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_coords);
    }

    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    for (p, i) in coords {
        let original = work.get(p).data[i];
        work.get_mut(p).data[i] = original + epsilon;
        let plus = loss_fn(&work);
        work.get_mut(p).data[i] = original - epsilon;
        let minus = loss_fn(&work);
        work.get_mut(p).data[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GradCheckError::NonFiniteValue);
        }
        let fd = (plus - minus) / (2.0 * epsilon);
        let ana = analytic.grads[p][i];
        let scale = ana.abs().max(fd.abs()).max(1e-6);
        let rel = (ana - fd).abs() / scale;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
