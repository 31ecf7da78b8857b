//! Finite-difference check of the tape gradients, in double precision,
//! on a small convolution → MFM → pool → linear → cross-entropy graph.

use multires::tensor::{finite_difference_check, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> multires::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = vec![
        Tensor::<f64>::randn(&[2, 1, 6, 9], 1.0, &mut rng),
        Tensor::randn(&[4, 1, 3, 3], 0.5, &mut rng),
        Tensor::randn(&[4], 0.1, &mut rng),
        Tensor::randn(&[10, 2 * 3 * 3], 0.3, &mut rng),
    ];
    let report = finite_difference_check(
        |t, v| {
            let x = t.conv2d(v[0], v[1], Some(v[2]), (1, 1), (1, 1))?;
            let x = t.mfm(x)?;
            let x = t.maxpool2d(x, (2, 2), (2, 3))?;
            let x = t.flatten(x)?;
            let x = t.linear(x, v[3], None)?;
            t.softmax_cross_entropy(x, &[0, 7])
        },
        &inputs,
        1e-5,
        0,
    )?;
    println!(
        "checked {} elements, max relative error {:.3e} at {:?}",
        report.checked, report.max_rel_err, report.worst
    );
    Ok(())
}
