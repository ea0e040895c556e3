//! A heavy-tailed prior handled by the Laplace approximation, compared with
//! the conjugate normal prior of matching centre.

use adaptive_ssr::bayespower::{posterior, predictive_power, Prior};
use adaptive_ssr::design::{optimal_contrast, shape_profile, Allocation, ContrastSet, ShapeModel, TwoStageDesign};
use adaptive_ssr::freqpower::{AnalysisPlan, InterimState};
use adaptive_ssr::gaussian::QmcConfig;

fn main() -> adaptive_ssr::Result<()> {
    let doses = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let phi = Allocation::equal(5);
    let c = optimal_contrast(&shape_profile(&ShapeModel::Linear, &doses)?, &phi)?;
    let design = TwoStageDesign {
        doses,
        sigma: 2.0,
        alloc1: phi.clone(),
        alloc2: phi,
        n1: 60.0,
        n2: 90.0,
        contrasts: ContrastSet::new(vec![c])?,
        alpha: 0.1,
        beta: 0.2,
        n_max: 170.0,
        promising_min: 0.3,
    };
    let plan = AnalysisPlan::new(design, QmcConfig::default())?;
    let interim = InterimState::for_design(&plan.design, vec![0.1, 0.05, 0.5, 0.45, 0.9])?;
    let centre = vec![0.0, 0.25, 0.5, 0.75, 1.0];

    // Student-t with 3 degrees of freedom and unit scale on every arm
    let m0 = centre.clone();
    let student = Prior::general(move |mu: &[f64]| {
        mu.iter().zip(&m0).map(|(m, c)| -2.0 * (1.0 + (m - c).powi(2) / 3.0).ln()).sum()
    });
    for (name, prior) in [("student-t", student), ("normal", Prior::conjugate(centre, 1.0)?)] {
        let post = posterior(&prior, &interim, plan.design.sigma)?;
        let sd: Vec<f64> = post.variances().iter().map(|v| v.sqrt()).collect();
        println!("{name:<10} mean {:.3?}", post.mean());
        println!("{:<10} sd   {sd:.3?}", "");
        println!("{:<10} PP(N2) {:.4}", "", predictive_power(&post, plan.design.n2, &interim, &plan)?);
    }
    Ok(())
}
