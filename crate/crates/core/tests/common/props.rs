//! Randomized invariants shared by the property tests and the acceptance suite.

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use strcgp::data_io::SimRng;
use strcgp::diagnostics::ewr;
use strcgp::filtering::{run_filter, run_smoother, FilterTrace};
use strcgp::hyperopt::{fd_gradient, FilterObjective, ObjectiveKind, ThetaVector};
use strcgp::linalg::{matrix_exponential, min_eigenvalue};
use strcgp::ssm::{sde_blocks, StateSpaceModel, TemporalFamily, TemporalKernel};
use strcgp::weights::{default_beta, imq_weight, WeightPolicy};

use super::{random_instance, Instance};

pub const CASES: u32 = 100;

const FAMILIES: [TemporalFamily; 4] = [
    TemporalFamily::Exponential,
    TemporalFamily::Matern32,
    TemporalFamily::Matern52,
    TemporalFamily::Wiener,
];

pub type Property = fn(&mut TestRunner) -> Result<(), String>;

pub const ALL: &[(&str, Property)] = &[
    ("covariances stay PSD", covariances_stay_psd),
    ("filter weights bounded, EWR in (0, 1]", filter_weights_are_bounded),
    ("constant policy has unit EWR", constant_policy_has_unit_ewr),
    ("fully masked step keeps prediction", fully_masked_step_keeps_prediction),
    ("update never inflates observed variance", update_never_inflates_observed_variance),
    ("expm semigroup", expm_semigroup),
    ("Lyapunov residual", lyapunov_residual),
    ("IMQ symmetry and bounds", imq_symmetry_and_bounds),
    ("robustness boundary in alpha", robustness_boundary_in_alpha),
    ("FD stencils agree", fd_stencils_agree),
];

pub fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Fixed-seed runner, so acceptance results are reproducible.
pub fn deterministic_runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// Random instance with a couple of gross outliers and an optional missing value.
fn contaminated(seed: u64) -> Instance {
    let mut rng = SimRng::new(seed);
    let family = FAMILIES[(rng.uniform() * 4.0) as usize % 4];
    let mut inst = random_instance(&mut rng, family, 10, 3);
    let (n_t, n_s) = inst.y.shape();
    for _ in 0..2 {
        let k = (rng.uniform() * n_t as f64) as usize % n_t;
        let j = (rng.uniform() * n_s as f64) as usize % n_s;
        inst.y[(k, j)] += 20.0 * (rng.uniform() - 0.5);
    }
    if inst.y.len() > 2 && rng.uniform() < 0.5 {
        inst.y[(n_t - 1, 0)] = f64::NAN;
    }
    inst
}

fn trace_of(inst: &Instance, policy: &WeightPolicy) -> FilterTrace {
    let model = StateSpaceModel::assemble(&inst.spec, &inst.grid).unwrap();
    run_filter(&model, &inst.times, &inst.y, policy).unwrap()
}

fn check_psd(m: &DMatrix<f64>) -> Result<(), TestCaseError> {
    prop_assert_eq!(m, &m.transpose(), "covariance not symmetric");
    let tol = 1e-8 * m.trace().abs().max(f64::MIN_POSITIVE);
    prop_assert!(min_eigenvalue(m) >= -tol, "min eigenvalue {}", min_eigenvalue(m));
    Ok(())
}

pub fn covariances_stay_psd(r: &mut TestRunner) -> Result<(), String> {
    r.run(&any::<u64>(), |seed| {
        let inst = contaminated(seed);
        let trace = trace_of(&inst, &WeightPolicy::adaptive());
        for st in &trace.steps {
            check_psd(&st.predicted.cov)?;
            check_psd(&st.updated.cov)?;
        }
        for s in run_smoother(&trace).unwrap() {
            check_psd(&s.cov)?;
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn filter_weights_are_bounded(r: &mut TestRunner) -> Result<(), String> {
    r.run(&any::<u64>(), |seed| {
        let inst = contaminated(seed);
        let trace = trace_of(&inst, &WeightPolicy::adaptive());
        let beta = default_beta(inst.spec.noise_sd());
        for w in trace.steps.iter().flat_map(|s| s.observed_weights()) {
            prop_assert!(w > 0.0 && w <= beta, "w = {}, beta = {}", w, beta);
        }
        let e = ewr(&trace, inst.spec.noise_sd());
        prop_assert!(e > 0.0 && e <= 1.0, "ewr = {}", e);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn constant_policy_has_unit_ewr(r: &mut TestRunner) -> Result<(), String> {
    r.run(&any::<u64>(), |seed| {
        let inst = contaminated(seed);
        let trace = trace_of(&inst, &WeightPolicy::constant());
        prop_assert!((ewr(&trace, inst.spec.noise_sd()) - 1.0).abs() < 1e-12);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn fully_masked_step_keeps_prediction(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(any::<u64>(), 0.0..1.0f64), |(seed, pick)| {
        let mut inst = contaminated(seed);
        let n_t = inst.y.nrows();
        let k = ((pick * n_t as f64) as usize).min(n_t - 1);
        inst.y.row_mut(k).fill(f64::NAN);
        let trace = trace_of(&inst, &WeightPolicy::adaptive());
        let st = &trace.steps[k];
        prop_assert_eq!(&st.updated.mean, &st.predicted.mean);
        prop_assert_eq!(&st.updated.cov, &st.predicted.cov);
        prop_assert_eq!(st.log_pred_density, 0.0);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn update_never_inflates_observed_variance(r: &mut TestRunner) -> Result<(), String> {
    r.run(&any::<u64>(), |seed| {
        let inst = contaminated(seed);
        let model = StateSpaceModel::assemble(&inst.spec, &inst.grid).unwrap();
        let trace = run_filter(&model, &inst.times, &inst.y, &WeightPolicy::adaptive()).unwrap();
        let h = &model.h;
        for st in &trace.steps {
            let before = (h * &st.predicted.cov * h.transpose()).diagonal();
            let after = (h * &st.updated.cov * h.transpose()).diagonal();
            for j in 0..before.len() {
                prop_assert!(after[j] <= before[j] + 1e-10, "{} > {}", after[j], before[j]);
            }
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn expm_semigroup(r: &mut TestRunner) -> Result<(), String> {
    let s = (0usize..3, 0.1..3.0f64, 0.5..2.0f64, 0.001..2.0f64, 0.001..2.0f64);
    r.run(&s, |(fam, ell, amp, a, b)| {
        let blocks = sde_blocks(&TemporalKernel::new(FAMILIES[fam], ell, amp)).unwrap();
        let ab = matrix_exponential(&blocks.f, a + b).unwrap();
        let split = matrix_exponential(&blocks.f, a).unwrap() * matrix_exponential(&blocks.f, b).unwrap();
        prop_assert!((ab - split).norm() <= 1e-10);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn lyapunov_residual(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(0usize..3, 0.1..3.0f64, 0.5..2.0f64), |(fam, ell, amp)| {
        let blocks = sde_blocks(&TemporalKernel::new(FAMILIES[fam], ell, amp)).unwrap();
        let s = blocks.sigma_inf.clone().unwrap();
        let q = blocks.diffusion();
        let res = &blocks.f * &s + &s * blocks.f.transpose() + &q;
        prop_assert!(res.norm() <= 1e-10 * (q.norm() + 1.0), "residual {}", res.norm());
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn imq_symmetry_and_bounds(r: &mut TestRunner) -> Result<(), String> {
    let s = (-5.0..5.0f64, 0.01..10.0f64, 0.0..1e6f64, 0.01..3.0f64);
    r.run(&s, |(gamma, c, d, sigma)| {
        let beta = default_beta(sigma);
        let (wp, gp) = imq_weight(gamma + d, gamma, c, beta, -0.5).unwrap();
        let (wm, gm) = imq_weight(gamma - d, gamma, c, beta, -0.5).unwrap();
        prop_assert_eq!(wp, wm);
        prop_assert_eq!(gp, -gm);
        prop_assert!(wp > 0.0 && wp <= beta);
        for y in [gamma + d, gamma - d] {
            let (w, _) = imq_weight(y, gamma, c, beta, -0.5).unwrap();
            prop_assert!(y.abs() * w * w <= beta * beta * (gamma.abs() + c) * (1.0 + 1e-12));
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn robustness_boundary_in_alpha(r: &mut TestRunner) -> Result<(), String> {
    let s = (-2.0..2.0f64, 0.1..3.0f64, -1.5..-0.25f64, -0.24..-0.05f64);
    r.run(&s, |(gamma, c, alpha_lo, alpha_hi)| {
        let grid: Vec<f64> = (2..=8).map(|e| 10f64.powi(e)).collect();
        let sup = |alpha: f64| -> Vec<f64> {
            grid.iter()
                .map(|&y| {
                    let (w, _) = imq_weight(y, gamma, c, 1.0, alpha).unwrap();
                    y * w * w
                })
                .collect()
        };
        let bounded = sup(alpha_lo);
        prop_assert!(bounded.iter().all(|v| *v <= (gamma.abs() + c) * (1.0 + 1e-12)));
        let growing = sup(alpha_hi);
        prop_assert!(growing.windows(2).all(|p| p[1] > p[0]));
        // tail behaves like |y|^(1 + 4α) over six decades
        let expected = 10f64.powf(6.0 * (1.0 + 4.0 * alpha_hi));
        prop_assert!(growing[growing.len() - 1] / growing[0] > 0.5 * expected);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn fd_stencils_agree(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(any::<u64>(), any::<bool>()), |(seed, robust)| {
        let inst = contaminated(seed);
        let kind = if robust {
            ObjectiveKind::Robust { summary: Default::default() }
        } else {
            ObjectiveKind::Standard
        };
        let obj = FilterObjective::new(inst.spec, &inst.grid, &inst.times, &inst.y, WeightPolicy::adaptive(), kind);
        let theta = ThetaVector::from_spec(&inst.spec);
        let g2 = fd_gradient(&obj, &theta, 1e-4, false).unwrap();
        let g4 = fd_gradient(&obj, &theta, 1e-4, true).unwrap();
        let scale = g4.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-6);
        for (a, b) in g2.iter().zip(&g4) {
            prop_assert!((a - b).abs() <= 1e-3 * scale, "{} vs {}", a, b);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}
