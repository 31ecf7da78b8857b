use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_err: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Elements skipped because a kink (ReLU zero, max tie) lies within one step.
    pub excluded: usize,
}

const REL_FLOOR: f64 = 1e-3;
const KINK_TOL: f64 = 1e-3;

/// Compare the analytic gradient of `op` against central differences.
///
/// The op output is contracted with a fixed random cotangent so every
/// Jacobian entry contributes. Elements whose one-sided slopes disagree by
/// more than a smooth function allows straddle a non-differentiable point
/// and are excluded from the report.
pub fn finite_difference_check<F>(
    op: F,
    inputs: &[Tensor<f64>],
    step: f64,
    seed: u64,
) -> Result<FdReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = op(&mut tape, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cotangent = Tensor::<f64>::randn(tape.value(out).shape(), 1.0, &mut rng);
    let grads = tape.backward_with(out, cotangent.clone())?;

    let objective = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|v| t.leaf(v.clone(), false)).collect();
        let o = op(&mut t, &vs)?;
        Ok(t.value(o)
            .data()
            .iter()
            .zip(cotangent.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    let base = objective(inputs)?;
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        excluded: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let zeros = Tensor::zeros(input.shape());
        let analytic = grads.get(vars[i]).unwrap_or(&zeros);
        for j in 0..input.len() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = objective(&work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = objective(&work)?;
            work[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let curvature = (plus - 2.0 * base + minus).abs();
            if curvature > KINK_TOL * step * numeric.abs().max(1.0) {
                report.excluded += 1;
                continue;
            }
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}
