//! Posterior predictive power under a flat and a conjugate prior, the
//! stage-1-only limit PP(0), and the resulting interim decisions.

use adaptive_ssr::bayespower::{posterior, pp_at_zero, pp_first_crossing, pp_ssr_decide, predictive_power, Prior};
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
        n1: 105.0,
        n2: 45.0,
        contrasts: ContrastSet::new(vec![c])?,
        alpha: 0.1,
        beta: 0.2,
        n_max: 125.0,
        promising_min: 0.3,
    };
    let plan = AnalysisPlan::new(design, QmcConfig::default())?;
    let interim = InterimState::for_design(&plan.design, vec![0.0, 0.3, 0.2, 0.5, 0.55])?;
    println!("PP(0) = {:.4}", pp_at_zero(&interim, &plan)?);

    let priors = [
        ("flat", Prior::Flat),
        ("optimistic, tau0 = 5", Prior::conjugate(vec![0.0, 0.25, 0.5, 0.75, 1.0], 5.0)?),
        ("optimistic, tau0 = 1e6", Prior::conjugate(vec![0.0, 0.25, 0.5, 0.75, 1.0], 1e6)?),
    ];
    for (name, prior) in &priors {
        let post = posterior(prior, &interim, plan.design.sigma)?;
        let pp: Vec<String> = [20.0, 45.0, 90.0, 125.0]
            .iter()
            .map(|n| predictive_power(&post, *n, &interim, &plan).map(|p| format!("{p:.3}")))
            .collect::<adaptive_ssr::Result<_>>()?;
        let first = pp_first_crossing(&post, &interim, &plan, 0.8)?;
        let decision = pp_ssr_decide(&interim, &plan, prior)?;
        println!(
            "{name:<24} PP(20,45,90,125) = [{}]  first n2 with PP >= 0.8: {first:?}  zone {} n2 {}",
            pp.join(", "),
            decision.zone.as_str(),
            decision.n2_new
        );
    }
    Ok(())
}
