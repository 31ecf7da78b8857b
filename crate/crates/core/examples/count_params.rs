//! Per-layer parameter table for every architecture at 1, 2 and 3 input maps.
//!
//! cargo run --example count_params -- [--verbose]

use multires::model::{count_parameters, Arch, Model, ModelSpec};

fn main() -> multires::Result<()> {
    let verbose = std::env::args().any(|a| a == "--verbose");
    for arch in Arch::ALL {
        for n_c in 1..=3 {
            let model = Model::build(&ModelSpec::new(arch, n_c), 0)?;
            let report = count_parameters(&model)?;
            println!(
                "{arch:<9} n_c={n_c}  total {:>9}  delta vs 1 map {:>5}",
                report.total, report.delta_vs_single_channel
            );
            if verbose && n_c == 1 {
                for (layer, n) in &report.per_layer {
                    println!("    {layer:<28} {n:>8}");
                }
            }
        }
    }
    Ok(())
}
