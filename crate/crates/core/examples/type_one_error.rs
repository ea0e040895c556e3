//! Rejection rate of the adaptive design when every dose is inactive: the
//! combination test keeps it at the nominal level for any interim rule.

use adaptive_ssr::design::{optimal_contrast, shape_profile, Allocation, ContrastSet, ShapeModel, TwoStageDesign};
use adaptive_ssr::freqpower::AnalysisPlan;
use adaptive_ssr::gaussian::QmcConfig;
use adaptive_ssr::simengine::{run_study, Scenario, SsrMethod};
use std::sync::Arc;

fn main() -> adaptive_ssr::Result<()> {
    let doses = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let phi = Allocation::equal(5);
    let c = optimal_contrast(&shape_profile(&ShapeModel::Linear, &doses)?, &phi)?;
    for (timing, n1, n2) in [("early", 60.0, 90.0), ("late", 105.0, 45.0)] {
        let design = TwoStageDesign {
            doses: doses.clone(),
            sigma: 2.0,
            alloc1: phi.clone(),
            alloc2: phi.clone(),
            n1,
            n2,
            contrasts: ContrastSet::new(vec![c.clone()])?,
            alpha: 0.1,
            beta: 0.2,
            n_max: n2 + 80.0,
            promising_min: 0.3,
        };
        let plan = Arc::new(AnalysisPlan::new(design, QmcConfig::default())?);
        for method in [SsrMethod::fq1(), SsrMethod::fq2(vec![0.0, 0.25, 0.5, 0.75, 1.0]), SsrMethod::by1()] {
            let scenario = Scenario::new(plan.clone(), vec![0.0; 5], method, 20_000, 7)?;
            let r = run_study(&scenario)?;
            println!(
                "{timing:<5} {:<4} rejection {:.4} (mc se {:.4})  mean SS {:.1}",
                scenario.method.label, r.power, r.mc_se_power, r.mean_ss
            );
        }
    }
    Ok(())
}
