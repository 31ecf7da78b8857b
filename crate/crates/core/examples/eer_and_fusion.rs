//! Equal error rate of two toy systems and of their weighted fusion,
//! with weights searched on a simplex grid.

use multires::eval::{compute_eer, fuse_scores, search_fusion_weights, Label, LabelTable, ScoreTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> multires::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut labels = LabelTable::new();
    let (mut a, mut b) = (ScoreTable::new(), ScoreTable::new());
    for i in 0..200 {
        let id = format!("utt{i:03}");
        let bona = i % 4 == 0;
        labels.insert(id.clone(), if bona { Label::Bonafide } else { Label::Spoof("AA".into()) })?;
        let truth = if bona { 1.0 } else { 0.0 };
        // each system sees the truth through independent noise
        a.insert(id.clone(), truth + rng.gen_range(-1.2..1.2))?;
        b.insert(id, truth + rng.gen_range(-1.2..1.2))?;
    }
    let systems = [a, b];
    for (i, s) in systems.iter().enumerate() {
        println!("system {}: EER {:.2}%", i + 1, 100.0 * compute_eer(s, &labels)?.eer);
    }
    let even = fuse_scores(&systems, &[0.5, 0.5])?;
    println!("equal weights: EER {:.2}%", 100.0 * compute_eer(&even, &labels)?.eer);
    let found = search_fusion_weights(&systems, &labels, 0.05)?;
    println!(
        "searched {} grid points: weights {:?}, EER {:.2}%",
        found.evaluated,
        found.weights,
        100.0 * found.dev_eer
    );
    Ok(())
}
