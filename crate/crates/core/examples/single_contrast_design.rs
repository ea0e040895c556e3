//! Linear optimal contrast, fixed-design power and the sample size needed
//! for 80% power under two anticipated dose-response profiles.

use adaptive_ssr::design::{optimal_contrast, shape_profile, single_power, single_sample_size, Allocation, Rounding, ShapeModel};

fn main() -> adaptive_ssr::Result<()> {
    let doses = [0.0, 1.0, 2.0, 3.0, 4.0];
    let phi = Allocation::equal(5);
    let c = optimal_contrast(&shape_profile(&ShapeModel::Linear, &doses)?, &phi)?;
    println!("contrast {c:.3?}");

    let (sigma, alpha, beta) = (2.0, 0.1, 0.2);
    for (name, mu) in [("optimistic", [0.0, 0.25, 0.5, 0.75, 1.0]), ("under-effect", [0.0, 0.2, 0.4, 0.6, 0.8])] {
        let delta: f64 = c.iter().zip(&mu).map(|(a, b)| a * b).sum();
        let exact = single_sample_size(delta, &c, &phi, sigma, alpha, beta, Rounding::None)?;
        let rounded = Rounding::PerArmEqual.apply(exact, 5);
        println!(
            "{name:<13} delta {delta:.4}  power(N=150) {:.4}  N {exact:.2} -> {rounded}",
            single_power(delta, &c, &phi, sigma, 150.0, alpha)?
        );
    }
    Ok(())
}
