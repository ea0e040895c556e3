//! Orthant probabilities and equicoordinate quantiles of correlated normal
//! vectors, with their randomized quasi-Monte Carlo error estimates.

use adaptive_ssr::gaussian::{mvn_equicoordinate_cdf, mvn_equicoordinate_quantile, mvn_upper_orthant_cdf, MvnSpec, QmcConfig};

fn main() -> adaptive_ssr::Result<()> {
    let cfg = QmcConfig::default();
    let rho = 0.5;
    for m in [2, 4, 8] {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { rho }).collect())
            .collect();
        let spec = MvnSpec::centered(&rows)?;
        let p = mvn_equicoordinate_cdf(&spec, 1.0, &cfg)?;
        let u = mvn_equicoordinate_quantile(&spec, 0.9, &cfg)?;
        println!(
            "m = {m}  Pr(max X <= 1) = {:.5} (se {:.1e})  90% equicoordinate quantile {u:.4}",
            p.estimate, p.std_error
        );
    }

    // a singular covariance: X3 = X1 + X2
    let spec = MvnSpec::new(vec![0.0; 3], vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0])?;
    let p = mvn_upper_orthant_cdf(&spec, &[0.5, 0.5, 0.2], &cfg)?;
    println!("singular case: {:.5} (se {:.1e})", p.estimate, p.std_error);
    Ok(())
}
