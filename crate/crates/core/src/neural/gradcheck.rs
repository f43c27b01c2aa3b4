use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Example, Model, NeuralError};

#[derive(Debug, Clone, Serialize)]
pub struct GroupError {
    pub name: &'static str,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_relative_error: f64,
}

/// Gradients smaller than this are compared absolutely; finite differences
/// cannot resolve them relative to their size.
const DENOM_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Compare analytic gradients of the mean loss on `example` with central
/// differences on up to `per_group` random coordinates of every tensor
/// (all of them when a tensor is smaller). Dropout is not applied.
pub fn gradient_check(
    model: &Model<f64>,
    example: &Example,
    epsilon: f64,
    per_group: usize,
    seed: u64,
) -> Result<GradCheckReport, NeuralError> {
    let batch = std::slice::from_ref(example);
    let (loss, grad) = model.loss_and_grad(batch, None)?;
    if !loss.is_finite() {
        return Err(NeuralError::NonFinite);
    }
    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&'static str> = grad.tensors().iter().map(|(n, _)| *n).collect();
    let mut groups = Vec::with_capacity(names.len());
    for (g, name) in names.into_iter().enumerate() {
        let len = grad.tensors()[g].1.len();
        let coords: Vec<usize> = if len <= per_group {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, per_group).into_vec()
        };
        let mut worst = 0.0f64;
        for &k in &coords {
            let orig = probe.params.tensors()[g].1.data[k];
            probe.params.tensors_mut()[g].1.data[k] = orig + epsilon;
            let plus = probe.loss(batch)?;
            probe.params.tensors_mut()[g].1.data[k] = orig - epsilon;
            let minus = probe.loss(batch)?;
            probe.params.tensors_mut()[g].1.data[k] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = grad.tensors()[g].1.data[k];
            worst = worst.max(relative_error(analytic, numeric));
        }
        groups.push(GroupError {
            name,
            coordinates: coords.len(),
            max_relative_error: worst,
        });
    }
    let max_relative_error = groups.iter().map(|g| g.max_relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_relative_error,
    })
}
