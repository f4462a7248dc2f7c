use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factorization::{hooi, hosvd_factors, pca_factorize, TuckerRanks};
use crate::tensor::{fold, frobenius_norm, matricize, DenseTensor, ObservedTensor};

/// Stop once an iteration lowers the observed-entry relative error by less than
/// this fraction of its previous value.
pub const DEFAULT_EM_TOL: f64 = 1e-4;
pub const DEFAULT_EM_MAX_ITER: usize = 1000;

/// HOOI sweeps per M-step when warm-starting from the previous factors.
const WARM_SWEEPS: usize = 2;

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub completed: DenseTensor,
    pub iterations: usize,
    /// Observed-entry relative error of the fit after each iteration.
    pub relative_error_history: Vec<f64>,
    pub converged: bool,
}

/// `||mask .* (truth - pred)||^2 / ||mask .* truth||^2`.
pub fn relative_error(truth: &DenseTensor, pred: &DenseTensor, mask: &DenseTensor) -> Result<f64> {
    if truth.shape() != pred.shape() || truth.shape() != mask.shape() {
        return Err(Error::arg("relative_error: shapes differ"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&t, &p), &m) in truth.values().iter().zip(pred.values()).zip(mask.values()) {
        if m != 0.0 && m != 1.0 {
            return Err(Error::arg("relative_error: mask must be binary"));
        }
        if m == 1.0 {
            num += (t - p) * (t - p);
            den += t * t;
        }
    }
    if den == 0.0 {
        return Err(Error::numerical("relative_error: masked truth has zero energy"));
    }
    Ok(num / den)
}

/// EM completion with a Tucker fit as the M-step.
///
/// Each M-step keeps whichever of two candidates fits the current imputed
/// tensor better: HOOI sweeps warm-started from the previous factors, or a
/// fresh HOSVD. The warm candidate never does worse than the previous fit, so
/// the observed-entry error is nonincreasing.
pub fn em_tucker(t: &ObservedTensor, ranks: &TuckerRanks, max_iter: usize, tol: f64) -> Result<CompletionResult> {
    let ranks = TuckerRanks::new(ranks.as_slice().to_vec(), t.shape().dims())?;
    let mut factors: Option<Vec<DMatrix<f64>>> = None;
    em_loop(t, max_iter, tol, |current| {
        let cold = hooi(current, hosvd_factors(current, &ranks)?, 0, 0.0)?;
        let best = match factors.take() {
            Some(prev) => {
                let warm = hooi(current, prev, WARM_SWEEPS, 0.0)?;
                if cold.1[0] <= *warm.1.last().unwrap() {
                    cold.0
                } else {
                    warm.0
                }
            }
            None => cold.0,
        };
        let fit = best.reconstruct();
        factors = Some(best.factors);
        Ok(fit)
    })
}

/// EM completion of the mode-`mode` matricization with a rank-`rank` PCA fit.
pub fn em_matrix(t: &ObservedTensor, mode: usize, rank: usize, max_iter: usize, tol: f64) -> Result<CompletionResult> {
    let shape = t.shape().clone();
    if mode >= shape.order() {
        return Err(Error::arg(format!("mode {mode} out of range")));
    }
    let (outer, n, inner) = shape.split(mode);
    if rank < 1 || rank > n.min(outer * inner) {
        return Err(Error::arg(format!("rank {rank} outside 1..={}", n.min(outer * inner))));
    }
    em_loop(t, max_iter, tol, |current| {
        let m = matricize(current, mode)?;
        let f = pca_factorize(&m, rank)?;
        fold(&(f.x.transpose() * f.y), mode, &shape)
    })
}

fn em_loop<F>(t: &ObservedTensor, max_iter: usize, tol: f64, mut fit: F) -> Result<CompletionResult>
where
    F: FnMut(&DenseTensor) -> Result<DenseTensor>,
{
    let observed = t.observed_count();
    if observed == 0 {
        return Err(Error::arg("observation mask is empty"));
    }
    if max_iter == 0 {
        return Err(Error::arg("max_iter must be positive"));
    }
    let obs = t.data();
    let mask = t.mask();
    let mean = obs.values().iter().sum::<f64>() / observed as f64;
    let mut current = obs.clone();
    for (v, &m) in current.values_mut().iter_mut().zip(mask.values()) {
        if m == 0.0 {
            *v = mean;
        }
    }
    let obs_norm = frobenius_norm(obs);
    let mut history = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        let pred = fit(&current)?;
        let mut num = 0.0;
        for ((c, &p), (&o, &m)) in current
            .values_mut()
            .iter_mut()
            .zip(pred.values())
            .zip(obs.values().iter().zip(mask.values()))
        {
            if m == 1.0 {
                num += (o - p) * (o - p);
                *c = o;
            } else {
                *c = p;
            }
        }
        let err = if obs_norm > 0.0 { num / (obs_norm * obs_norm) } else { num };
        let prev = history.last().copied();
        history.push(err);
        if err == 0.0 {
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            if prev - err < tol * prev {
                converged = true;
                break;
            }
        }
    }
    Ok(CompletionResult {
        completed: current,
        iterations: history.len(),
        relative_error_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::TuckerFactors;
    use crate::linalg::orthonormalize;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn planted(dims: &[usize], ranks: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(ranks.to_vec()).unwrap();
        let core_vals = (0..shape.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let core = DenseTensor::new(shape, core_vals).unwrap();
        let factors = dims
            .iter()
            .zip(ranks)
            .map(|(&d, &r)| orthonormalize(&DMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng))))
            .collect();
        TuckerFactors { core, factors }.reconstruct()
    }

    fn hide(t: &DenseTensor, ratio: f64, seed: u64) -> ObservedTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<f64> = (0..t.values().len())
            .map(|_| if rng.random::<f64>() < ratio { 0.0 } else { 1.0 })
            .collect();
        ObservedTensor::new(t.clone(), DenseTensor::new(t.shape().clone(), mask).unwrap()).unwrap()
    }

    fn hidden_mask(obs: &ObservedTensor) -> DenseTensor {
        let vals = obs.mask().values().iter().map(|m| 1.0 - m).collect();
        DenseTensor::new(obs.shape().clone(), vals).unwrap()
    }

    #[test]
    fn relative_error_examples() {
        let shape = Shape::new(vec![2, 2]).unwrap();
        let truth = DenseTensor::new(shape.clone(), vec![1., -2., 3., 0.5]).unwrap();
        let ones = DenseTensor::filled(shape.clone(), 1.0);
        assert_eq!(relative_error(&truth, &truth, &ones).unwrap(), 0.0);
        assert_eq!(relative_error(&truth, &DenseTensor::zeros(shape.clone()), &ones).unwrap(), 1.0);
        let zero_mask = DenseTensor::zeros(shape.clone());
        assert!(relative_error(&truth, &truth, &zero_mask).is_err());
    }

    #[test]
    fn relative_error_matches_scalar_loop_and_ignores_unmasked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = Shape::new(vec![4, 5]).unwrap();
        let mk = |rng: &mut ChaCha8Rng| {
            DenseTensor::new(shape.clone(), (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let (truth, pred) = (mk(&mut rng), mk(&mut rng));
        let mask_vals: Vec<f64> = (0..20).map(|i| (i % 3 != 0) as u8 as f64).collect();
        let mask = DenseTensor::new(shape.clone(), mask_vals.clone()).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..20 {
            if mask_vals[i] == 1.0 {
                num += (truth.values()[i] - pred.values()[i]).powi(2);
                den += truth.values()[i].powi(2);
            }
        }
        let got = relative_error(&truth, &pred, &mask).unwrap();
        assert!((got - num / den).abs() < 1e-14);

        let mut pred2 = pred.clone();
        for i in (0..20).step_by(3) {
            pred2.values_mut()[i] = 100.0;
        }
        assert_eq!(relative_error(&truth, &pred2, &mask).unwrap(), got);
    }

    #[test]
    fn fully_observed_is_unchanged() {
        let t = planted(&[5, 4, 3], &[2, 2, 2], 1);
        let obs = ObservedTensor::fully_observed(t.clone());
        let ranks = TuckerRanks::new(vec![1, 1, 1], t.dims()).unwrap();
        let r = em_tucker(&obs, &ranks, 20, 1e-4).unwrap();
        assert_eq!(r.completed, t);
        let r = em_matrix(&obs, 0, 1, 20, 1e-4).unwrap();
        assert_eq!(r.completed, t);
    }

    #[test]
    fn empty_mask_rejected() {
        let shape = Shape::new(vec![3, 3]).unwrap();
        let obs = ObservedTensor::new(DenseTensor::zeros(shape.clone()), DenseTensor::zeros(shape)).unwrap();
        let ranks = TuckerRanks::new(vec![1, 1], &[3, 3]).unwrap();
        assert!(em_tucker(&obs, &ranks, 10, 1e-4).is_err());
        assert!(em_matrix(&obs, 0, 1, 10, 1e-4).is_err());
    }

    #[test]
    fn rank_one_single_hidden_entry_recovered() {
        let a = [1.0, 2.0, -1.0, 0.5];
        let b = [0.3, -1.2, 2.0];
        let c = [1.5, 0.7, -0.4, 1.1, 0.9];
        let shape = Shape::new(vec![4, 3, 5]).unwrap();
        let mut vals = Vec::new();
        for x in a {
            for y in b {
                for z in c {
                    vals.push(x * y * z);
                }
            }
        }
        let truth = DenseTensor::new(shape.clone(), vals).unwrap();
        let mut mask = vec![1.0; 60];
        let hidden = shape.offset(&[2, 1, 3]);
        mask[hidden] = 0.0;
        let obs = ObservedTensor::new(truth.clone(), DenseTensor::new(shape, mask).unwrap()).unwrap();
        let ranks = TuckerRanks::new(vec![1, 1, 1], truth.dims()).unwrap();
        let r = em_tucker(&obs, &ranks, 1000, 0.0).unwrap();
        let got = r.completed.values()[hidden];
        let want = truth.values()[hidden];
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn observed_entries_preserved_bitwise_and_history_monotone() {
        let t = planted(&[8, 5, 4], &[2, 2, 2], 4);
        let obs = hide(&t, 0.3, 5);
        let ranks = TuckerRanks::new(vec![2, 2, 2], t.dims()).unwrap();
        for r in [em_tucker(&obs, &ranks, 200, 1e-6).unwrap(), em_matrix(&obs, 1, 2, 200, 1e-6).unwrap()] {
            for i in 0..t.values().len() {
                if obs.is_observed(i) {
                    assert_eq!(r.completed.values()[i].to_bits(), t.values()[i].to_bits());
                }
            }
            assert!(r
                .relative_error_history
                .windows(2)
                .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-24));
        }
    }

    #[test]
    fn order_two_tucker_equals_matrix_em() {
        for seed in 0..3 {
            let t = planted(&[9, 7], &[3, 3], 20 + seed);
            let obs = hide(&t, 0.25, 30 + seed);
            let ranks = TuckerRanks::new(vec![2, 2], t.dims()).unwrap();
            let a = em_tucker(&obs, &ranks, 50, 0.0).unwrap();
            let b = em_matrix(&obs, 0, 2, 50, 0.0).unwrap();
            let diff = frobenius_norm(&a.completed.sub(&b.completed).unwrap());
            assert!(diff < 1e-8, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn planted_recovery_on_hidden_entries() {
        let t = planted(&[10, 5, 5], &[2, 2, 2], 7);
        let obs = hide(&t, 0.3, 8);
        let ranks = TuckerRanks::new(vec![2, 2, 2], t.dims()).unwrap();
        let r = em_tucker(&obs, &ranks, 500, 1e-6).unwrap();
        let err = relative_error(&t, &r.completed, &hidden_mask(&obs)).unwrap();
        assert!(err < 1e-2, "{err}");
    }
}
