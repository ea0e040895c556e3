//! One interim look with the three conditional power rules: the observed
//! effect, the planned effect, and a second anticipated effect.

use adaptive_ssr::design::{optimal_contrast, shape_profile, Allocation, ContrastSet, ShapeModel, TwoStageDesign};
use adaptive_ssr::freqpower::{conditional_power_single, AnalysisPlan, InterimState};
use adaptive_ssr::gaussian::QmcConfig;
use adaptive_ssr::simengine::SsrMethod;

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
    let interim = InterimState::for_design(&plan.design, vec![0.1, 0.15, 0.3, 0.35, 0.6])?;
    println!("stage-1 statistic {:.4}", interim.t1()[0]);

    let methods = [
        SsrMethod::fq1(),
        SsrMethod::fq2(vec![0.0, 0.25, 0.5, 0.75, 1.0]),
        SsrMethod::fq3(vec![0.0, 0.2, 0.4, 0.6, 0.8]),
    ];
    for m in &methods {
        let d = m.decide(&interim, &plan)?;
        println!(
            "{}  CP(N2) {:.4}  zone {:<11} n2 {:.1}",
            m.label,
            d.metric_at_n2,
            d.zone.as_str(),
            d.n2_new
        );
    }

    println!("CP at the observed effect as stage 2 grows:");
    let delta = plan.design.contrasts.apply(interim.ybar1())[0];
    for n2 in [45.0, 90.0, 130.0, 170.0] {
        println!("  n2 {n2:>5}  {:.4}", conditional_power_single(n2, delta, &interim, &plan.design));
    }
    Ok(())
}
