mod common;

use adaptive_ssr::bayespower::{posterior, pp_monte_carlo, predictive_power, Prior};
use adaptive_ssr::freqpower::{combine_multi, final_test, stage_statistic, AnalysisPlan, InterimState};
use adaptive_ssr::gaussian::QmcConfig;
use common::{study_plan, Timing, UNDER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random-walk Metropolis over the arm means, thinned.
fn metropolis<F: Fn(&[f64]) -> f64>(
    log_post: F,
    start: &[f64],
    step: &[f64],
    keep: usize,
    thin: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let k = start.len();
    let mut x = start.to_vec();
    let mut lx = log_post(&x);
    let mut out = Vec::with_capacity(keep);
    let burn = 2000;
    for it in 0..burn + keep * thin {
        let prop: Vec<f64> = (0..k)
            .map(|i| x[i] + step[i] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_post(&prop);
        if rng.gen::<f64>().ln() < lp - lx {
            x = prop;
            lx = lp;
        }
        if it >= burn && (it - burn) % thin == 0 {
            out.push(x.clone());
        }
    }
    out
}

/// A heavy-tailed prior: independent Student-t (3 df) on each arm mean.
fn student_log_prior(center: f64, scale: f64) -> impl Fn(&[f64]) -> f64 + Clone + Send + Sync + 'static {
    move |mu: &[f64]| {
        mu.iter()
            .map(|m| {
                let z = (m - center) / scale;
                -2.0 * (1.0 + z * z / 3.0).ln()
            })
            .sum()
    }
}

#[test]
fn laplace_posterior_tracks_a_metropolis_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for timing in [Timing::Early, Timing::Late] {
        let plan = study_plan(false, timing);
        let d = &plan.design;
        let ybar = vec![0.1, 0.05, 0.5, 0.45, 0.9];
        let interim = InterimState::for_design(d, ybar.clone()).unwrap();
        let log_prior = student_log_prior(0.3, 1.0);
        let lap = posterior(&Prior::general(log_prior.clone()), &interim, d.sigma).unwrap();

        let prec: Vec<f64> = d.alloc1.as_slice().iter().map(|p| d.n1 * p / (d.sigma * d.sigma)).collect();
        let log_post = |mu: &[f64]| {
            let ll: f64 = (0..5).map(|i| -0.5 * prec[i] * (mu[i] - ybar[i]).powi(2)).sum();
            ll + log_prior(mu)
        };
        let step: Vec<f64> = prec.iter().map(|p| 1.0 / p.sqrt()).collect();
        let draws = metropolis(log_post, &ybar, &step, 20_000, 10, &mut rng);

        for i in 0..5 {
            let mean = draws.iter().map(|x| x[i]).sum::<f64>() / draws.len() as f64;
            let sd = (lap.cov(i, i)).sqrt();
            assert!((mean - lap.mean()[i]).abs() < 0.1 * sd, "arm {i}: mcmc {mean} vs laplace {}", lap.mean()[i]);
        }
        let n2 = d.n2;
        let approx = predictive_power(&lap, n2, &interim, &plan).unwrap();
        let (mc, se) = pp_monte_carlo(&draws, n2, &interim, &plan).unwrap();
        // Laplace error plus correlated-chain noise
        assert!((approx - mc).abs() < 0.01 + 6.0 * se, "{timing:?}: laplace {approx} vs mcmc {mc} ± {se}");
    }
}

#[test]
fn multi_conditional_power_matches_stage2_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for (timing, n2) in [(Timing::Early, 140.0), (Timing::Late, 70.0)] {
        let plan: AnalysisPlan = study_plan(true, timing);
        let d = &plan.design;
        let ybar1: Vec<f64> = UNDER.iter().map(|m| m + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let interim = InterimState::for_design(d, ybar1).unwrap();
        let mu = UNDER.to_vec();
        let delta = d.contrasts.apply(&mu);
        let closed = plan.conditional_power(n2, &delta, &interim).unwrap();
        let (w1, w2) = (d.w1(), d.w2());
        let draws = 200_000;
        let mut hits = 0usize;
        for _ in 0..draws {
            let ybar2: Vec<f64> = mu
                .iter()
                .zip(d.alloc2.as_slice())
                .map(|(m, p)| m + d.sigma / (n2 * p).sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let t2: Vec<f64> = d
                .contrasts
                .rows()
                .iter()
                .map(|c| stage_statistic(&ybar2, n2, &d.alloc2, c, d.sigma).unwrap())
                .collect();
            if final_test(&combine_multi(interim.t1(), &t2, &w1, &w2), plan.critical) {
                hits += 1;
            }
        }
        let p = hits as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((closed - p).abs() < 3.0 * se + QmcConfig::default().abs_tol, "{timing:?}: {closed} vs {p} ± {se}");
    }
}
