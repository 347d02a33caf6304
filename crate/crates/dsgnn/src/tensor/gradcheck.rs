//! Central finite-difference oracle against the tape gradient.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, VarId};

/// Compares the tape gradient of a scalar-valued forward closure against
/// central finite differences, coordinate by coordinate.
///
/// The closure receives a fresh tape and the parameter vars (registered in
/// the order of `params`) and must return the scalar loss var. It must be
/// deterministic; a dropout mask sampled inside it would make the two
/// baseline evaluations disagree, which is reported as an error rather
/// than silently producing garbage differences.
///
/// At most `max_coords` coordinates per parameter are sampled (`0` checks
/// all of them). Returns the maximum over sampled coordinates of
/// `|g_fd - g_tape| / max(1, |g_fd|)`.
pub fn finite_diff_check<F>(
    f: F,
    params: &[Tensor<f64>],
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[VarId]) -> Result<VarId>,
{
    if eps <= 0.0 {
        return Err(Error::Validation("finite-difference step must be positive".into()));
    }

    let eval = |tensors: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<VarId>, VarId)> {
        let mut tape = Tape::new();
        let vars: Vec<VarId> = tensors.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        if tape.value(loss).shape() != (1, 1) {
            return Err(Error::shape("1x1 loss", format!("{:?}", tape.value(loss).shape())));
        }
        Ok((tape, vars, loss))
    };

    let (tape, vars, loss) = eval(params)?;
    let base = tape.scalar(loss);
    let (tape2, _, loss2) = eval(params)?;
    if tape2.scalar(loss2) != base {
        return Err(Error::NondeterministicForward);
    }
    let grads = tape.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut perturbed: Vec<Tensor<f64>> = params.to_vec();

    for (pi, param) in params.iter().enumerate() {
        let len = param.data().len();
        let coords: Vec<usize> = if max_coords == 0 || len <= max_coords {
            (0..len).collect()
        } else {
            let mut all: Vec<usize> = (0..len).collect();
            all.shuffle(&mut rng);
            all.truncate(max_coords);
            all
        };
        let g_tape = grads
            .get(vars[pi])
            .expect("params are leaves with gradients");
        for ci in coords {
            let orig = perturbed[pi].data()[ci];
            perturbed[pi].data_mut()[ci] = orig + eps;
            let (t_plus, _, l_plus) = eval(&perturbed)?;
            let f_plus = t_plus.scalar(l_plus);
            perturbed[pi].data_mut()[ci] = orig - eps;
            let (t_minus, _, l_minus) = eval(&perturbed)?;
            let f_minus = t_minus.scalar(l_minus);
            perturbed[pi].data_mut()[ci] = orig;

            let g_fd = (f_plus - f_minus) / (2.0 * eps);
            let rel = (g_fd - g_tape.data()[ci]).abs() / g_fd.abs().max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
