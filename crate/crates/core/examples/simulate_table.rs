//! Operating characteristics of all six interim rules for one timing, with
//! a reduced replicate count. Pass a replicate count as the first argument.

use adaptive_ssr::design::{optimal_contrast, shape_profile, Allocation, ContrastSet, ShapeModel, TwoStageDesign};
use adaptive_ssr::freqpower::AnalysisPlan;
use adaptive_ssr::gaussian::QmcConfig;
use adaptive_ssr::simengine::{metric_distribution, run_study, Scenario, SsrMethod};
use std::sync::Arc;

fn main() -> adaptive_ssr::Result<()> {
    let replicates: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5_000);
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
    let plan = Arc::new(AnalysisPlan::new(design, QmcConfig::default())?);
    let optimistic = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let under = vec![0.0, 0.2, 0.4, 0.6, 0.8];
    let methods = [
        SsrMethod::fq1(),
        SsrMethod::fq2(optimistic.clone()),
        SsrMethod::fq3(under.clone()),
        SsrMethod::by1(),
        SsrMethod::by2(optimistic, 5.0)?,
        SsrMethod::by3(under.clone(), 5.0)?,
    ];
    println!("method  unfav   fav  prom   mean    sd  power  meanSS  incr   quartiles");
    for m in methods {
        let scenario = Scenario::new(plan.clone(), under.clone(), m, replicates, 20240917)?;
        let r = run_study(&scenario)?;
        let q = metric_distribution(&scenario)?.quartiles;
        println!(
            "{:<6} {:>5.1} {:>5.1} {:>5.1}  {:.3} {:.3}  {:.3}  {:6.1} {:5.1}   {:.2} {:.2} {:.2}",
            scenario.method.label,
            r.pct_unfavorable,
            r.pct_favorable,
            r.pct_promising,
            r.metric_mean,
            r.metric_sd,
            r.power,
            r.mean_ss,
            r.mean_incr,
            q[0],
            q[1],
            q[2]
        );
    }
    Ok(())
}
