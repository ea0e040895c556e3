//! Optimal contrasts for four candidate shapes, the familywise critical
//! value, and power / sample size of the maximum contrast test.

use adaptive_ssr::design::{
    mcp_critical_value, mcp_power, mcp_sample_size, shape_profile, Allocation, ContrastSet,
    Rounding, ShapeModel, TwoStageDesign,
};
use adaptive_ssr::gaussian::QmcConfig;
use std::time::Instant;

fn main() -> adaptive_ssr::Result<()> {
    let doses = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let phi = Allocation::equal(5);
    let shapes = [
        ShapeModel::Linear,
        ShapeModel::Emax { ed50: 0.3 },
        ShapeModel::Exponential { delta: 0.3 },
        ShapeModel::SigmoidEmax { ed50: 1.0, hill: 3.0 },
    ];
    let profiles = shapes
        .iter()
        .map(|m| shape_profile(m, &doses))
        .collect::<adaptive_ssr::Result<Vec<_>>>()?;
    let contrasts = ContrastSet::optimal(&profiles, &phi)?;
    for (m, c) in shapes.iter().zip(contrasts.rows()) {
        let row: Vec<String> = c.iter().map(|v| format!("{v:7.3}")).collect();
        println!("{:<24}{}", m.label(), row.join(" "));
    }

    let design = TwoStageDesign {
        doses,
        sigma: 2.0,
        alloc1: phi.clone(),
        alloc2: phi,
        n1: 70.0,
        n2: 100.0,
        contrasts,
        alpha: 0.1,
        beta: 0.2,
        n_max: 195.0,
        promising_min: 0.3,
    };
    let cfg = QmcConfig::default();
    let start = Instant::now();
    let u = mcp_critical_value(&design, &cfg)?;
    println!("critical value {u:.4} ({:?})", start.elapsed());

    let optimistic = [0.0, 0.25, 0.5, 0.75, 1.0];
    let under = [0.0, 0.2, 0.4, 0.6, 0.8];
    let start = Instant::now();
    println!("power at N=170, optimistic  {:.4}", mcp_power(&optimistic, &design, u, 170.0, &cfg)?);
    println!("power at N=170, under-effect {:.4}", mcp_power(&under, &design, u, 170.0, &cfg)?);
    println!("({:?} for two power evaluations)", start.elapsed());
    let n = mcp_sample_size(&under, &design, u, Rounding::PerArmEqual, &cfg)?;
    println!("sample size for 80% under the under-effect profile: {n}");
    Ok(())
}
