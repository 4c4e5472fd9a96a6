//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured detail (run with `--nocapture` to see them
//! all). Tolerances and budgets are pinned in the assertions.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use ampse::amp::{self, AmpConfig, SolverStatus};
use ampse::denoiser::{
    cumulant_by_quadrature, Posterior, Prior, TiltedParams,
};
use ampse::evolution::{
    critical_gamma, fd_jacobian, lambda_k, nishimori_trajectory, se_run, se_step,
    stability_profile, QuadratureSpec, Regime, SeParams, SeState, ThresholdKind,
};
use ampse::instance::ProblemInstance;
use ampse::rbp::{self, Schedule};

fn pass(n: usize, name: &str, detail: String, elapsed: Duration, budget: Duration) {
    println!(
        "ACCEPTANCE {n} ({name}): PASS — {detail} [{elapsed:.2?} < budget {budget:?}]"
    );
    assert!(
        elapsed < budget,
        "criterion {n} exceeded its runtime budget: {elapsed:?} >= {budget:?}"
    );
}

fn fig1_params(gamma: f64) -> SeParams {
    SeParams::new(0.3, 1e-10, gamma, Prior::new(0.1).unwrap()).unwrap()
}

#[test]
fn criterion_1_cumulant_oracle_equivalence() {
    let start = Instant::now();
    let sigma2_grid = [1e-6, 1e-3, 0.1, 1.0, 10.0];
    let r_grid = [-5.0, -1.0, -0.1, 0.0, 0.1, 1.0, 5.0];
    let rho_grid = [0.01, 0.1, 0.5, 1.0];

    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for &rho in &rho_grid {
        let prior = Prior::new(rho).unwrap();
        for &s2 in &sigma2_grid {
            for &r in &r_grid {
                let p = TiltedParams::new(s2, r).unwrap();
                let post = Posterior::new(&prior, p);
                let closed = post.cumulants();
                for (k, &got) in closed.iter().enumerate() {
                    let want = cumulant_by_quadrature(&prior, p, k + 1).unwrap();
                    let err = (got - want).abs();
                    let bound = 1e-7 * want.abs().max(got.abs()) + 1e-10;
                    assert!(
                        err <= bound,
                        "rho={rho} s2={s2} r={r} k={}: closed {got} vs oracle {want} (err {err:.3e})",
                        k + 1
                    );
                    worst = worst.max(err / bound.max(1e-300));
                    checked += 1;
                }
            }
        }
    }
    pass(
        1,
        "cumulant oracle equivalence",
        format!("{checked} closed-form values vs quadrature oracle on the 5x7x4 grid; worst error at {:.1}% of bound", 100.0 * worst),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_2_nishimori_preservation() {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let traj = nishimori_trajectory(&fig1_params(0.0), &quad, 400, 1e-13).unwrap();
    let stride = (traj.len() / 10).max(1);
    let points: Vec<f64> = traj.iter().copied().step_by(stride).take(10).collect();
    assert_eq!(points.len(), 10, "trajectory too short for 10 probe points");

    let mut worst = 0.0f64;
    for &gamma in &[0.0, 1.0, 2.5, 3.6] {
        let params = fig1_params(gamma);
        for &v in &points {
            let state = SeState { e: v, v, d: 0.0 };
            let next = se_step(&state, &params, &quad).unwrap();
            let gap = (next.e - next.v).abs().max(next.d.abs());
            assert!(
                gap < 1e-8,
                "gamma={gamma} V={v}: |E'-V'|={:.3e} |D'|={:.3e}",
                (next.e - next.v).abs(),
                next.d.abs()
            );
            worst = worst.max(gap);
        }
    }
    pass(
        2,
        "Nishimori preservation",
        format!("40 on-line steps (4 gammas x 10 points); worst |E'-V'| or |D'| = {worst:.2e} < 1e-8"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_3_critical_thresholds() {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let prior = Prior::new(0.1).unwrap();

    let p03 = SeParams::new(0.3, 0.0, 0.0, prior).unwrap();
    let p06 = SeParams::new(0.6, 0.0, 0.0, prior).unwrap();
    let g1_03 = critical_gamma(&p03, &quad, ThresholdKind::Partial).unwrap();
    let g2_03 = critical_gamma(&p03, &quad, ThresholdKind::Full).unwrap();
    let g1_06 = critical_gamma(&p06, &quad, ThresholdKind::Partial).unwrap();
    let g2_06 = critical_gamma(&p06, &quad, ThresholdKind::Full).unwrap();

    assert!((g1_03 - 2.197).abs() <= 0.05, "gamma_c1 = {g1_03}");
    assert!((g2_03 - 3.162).abs() <= 0.05, "gamma_c2 = {g2_03}");
    assert!((g1_03 - g1_06).abs() <= 1e-2, "alpha dependence of gamma_c1: {g1_03} vs {g1_06}");
    assert!((g2_03 - g2_06).abs() <= 1e-2, "alpha dependence of gamma_c2: {g2_03} vs {g2_06}");

    pass(
        3,
        "critical thresholds",
        format!(
            "gamma_c1 = {g1_03:.4} (2.197 +- 0.05), gamma_c2 = {g2_03:.4} (3.162 +- 0.05); alpha 0.3 vs 0.6 deltas {:.1e}/{:.1e}",
            (g1_03 - g1_06).abs(),
            (g2_03 - g2_06).abs()
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_4_three_regime_classification() {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let expect = [
        (1.9, Regime::Stable),
        (2.5, Regime::PartiallyUnstable),
        (2.9, Regime::PartiallyUnstable),
        (3.6, Regime::FullyUnstable),
    ];
    let mut got = Vec::new();
    for &(gamma, want) in &expect {
        let report = stability_profile(&fig1_params(gamma), &quad).unwrap();
        assert_eq!(
            report.regime, want,
            "gamma={gamma}: sup={} fp={}",
            report.sup_abs_lambda_d, report.fixed_point_abs_lambda_d
        );
        got.push(format!("{gamma}:{:?}", report.regime));
    }
    pass(
        4,
        "three-regime classification",
        got.join(", "),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_5_lambda_k_bound_and_jacobian() {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let traj = nishimori_trajectory(&fig1_params(0.0), &quad, 400, 1e-13).unwrap();

    // |lambda_K| < 1 along the whole trajectory, and exact gamma-independence.
    let mut sup_lk = 0.0f64;
    for &v in &traj {
        let lk0 = lambda_k(v, &fig1_params(0.0), &quad).unwrap();
        let lk3 = lambda_k(v, &fig1_params(3.0), &quad).unwrap();
        assert_eq!(lk0, lk3, "lambda_K must not depend on gamma (V={v})");
        assert!(lk0.abs() < 1.0, "V={v}: |lambda_K| = {}", lk0.abs());
        sup_lk = sup_lk.max(lk0.abs());
    }

    // Finite-difference Jacobian agreement. The step scales with the state
    // so the relative perturbation (and hence truncation error) stays small,
    // clamped to the supported [1e-7, 1e-3] window.
    let mut worst_diag = 0.0f64;
    let mut worst_off = 0.0f64;
    let mut checked = 0usize;
    for &gamma in &[1.0, 2.5] {
        let params = fig1_params(gamma);
        for &v in traj.iter().filter(|&&v| v > 1e-4) {
            let step = (0.01 * v).clamp(1e-7, 1e-3);
            let j = fd_jacobian(v, &params, &quad, step).unwrap();
            let lk = lambda_k(v, &params, &quad).unwrap();
            let ld = ampse::evolution::lambda_d(v, &params, &quad).unwrap();
            assert!((j[0][0] - lk).abs() < 1e-4, "J_KK {} vs lambda_K {lk}", j[0][0]);
            assert!((j[1][1] - ld).abs() < 1e-4, "J_DD {} vs lambda_D {ld}", j[1][1]);
            assert!(j[0][1].abs() < 1e-5 && j[1][0].abs() < 1e-5, "cross terms {:?}", j);
            worst_diag = worst_diag
                .max((j[0][0] - lk).abs())
                .max((j[1][1] - ld).abs());
            worst_off = worst_off.max(j[0][1].abs()).max(j[1][0].abs());
            checked += 1;
        }
    }
    assert!(checked >= 10, "too few Jacobian probe points: {checked}");

    pass(
        5,
        "lambda_K bound and Jacobian oracle",
        format!(
            "sup|lambda_K| = {sup_lk:.4} < 1; {checked} Jacobians: worst diag dev {worst_diag:.1e} (<1e-4), worst cross {worst_off:.1e} (<1e-5)"
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_6_success_rate_transition() {
    let start = Instant::now();
    let prior = Prior::new(0.1).unwrap();
    let cfg = AmpConfig::default();
    let n = 1000usize;
    let m = 300usize;
    let trials = 50u64;

    let fraction = |gamma: f64, block: u64| -> f64 {
        let wins: u64 = (0..trials)
            .into_par_iter()
            .map(|t| {
                let seed = 1 + t + 1_000_003 * block;
                let inst =
                    ProblemInstance::generate(n, m, gamma, 1e-10, &prior, seed).unwrap();
                u64::from(amp::run(&inst, &prior, &cfg).is_success(cfg.success_mse))
            })
            .sum();
        wins as f64 / trials as f64
    };

    let mut lines = Vec::new();
    for (b, gamma) in [(0u64, 1.0), (1, 1.5)] {
        let f = fraction(gamma, b);
        assert!(f >= 0.9, "gamma={gamma}: fraction {f} < 0.9");
        lines.push(format!("gamma={gamma}: {f:.2}"));
    }
    for (b, gamma) in [(2u64, 3.5), (3, 4.0)] {
        let f = fraction(gamma, b);
        assert!(f <= 0.1, "gamma={gamma}: fraction {f} > 0.1");
        lines.push(format!("gamma={gamma}: {f:.2}"));
    }
    let mut intermediate = None;
    for (i, gamma) in [2.0, 2.2, 2.4, 2.6, 2.8, 3.0].iter().enumerate() {
        let f = fraction(*gamma, 4 + i as u64);
        lines.push(format!("gamma={gamma}: {f:.2}"));
        if f > 0.0 && f < 1.0 && intermediate.is_none() {
            intermediate = Some((*gamma, f));
        }
    }
    let (g_mid, f_mid) =
        intermediate.expect("no strictly intermediate success fraction found in [2.0, 3.0]");

    pass(
        6,
        "AMP success-rate transition",
        format!(
            "{}; strictly intermediate at gamma={g_mid} ({f_mid:.2})",
            lines.join(", ")
        ),
        start.elapsed(),
        Duration::from_secs(30 * 60),
    );
}

#[test]
fn criterion_7_schedule_comparison() {
    let start = Instant::now();
    let prior = Prior::new(0.1).unwrap();
    let cfg = AmpConfig {
        max_iter: 500,
        ..AmpConfig::default()
    };
    let n = 2000;
    let m = 600;
    let gamma = 5.0;

    let results: Vec<(bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst = ProblemInstance::generate(n, m, gamma, 1e-10, &prior, 100 + seed).unwrap();
            let seq = rbp::run(&inst, &prior, &Schedule::random_sequential(seed), &cfg);
            let par = amp::run(&inst, &prior, &cfg);
            (
                seq.status == SolverStatus::Converged && seq.final_mse() < 1e-6,
                par.is_success(cfg.success_mse),
            )
        })
        .collect();

    let seq_wins = results.iter().filter(|r| r.0).count();
    let par_wins = results.iter().filter(|r| r.1).count();
    assert_eq!(seq_wins, 20, "sequential r-BP converged on {seq_wins}/20 seeds");
    assert_eq!(par_wins, 0, "plain parallel AMP converged on {par_wins}/20 seeds");

    pass(
        7,
        "schedule comparison at gamma=5",
        format!("random-sequential r-BP {seq_wins}/20 converged (mse < 1e-6); plain AMP {par_wins}/20"),
        start.elapsed(),
        Duration::from_secs(30 * 60),
    );
}

#[test]
fn criterion_8_mean_removal_fix() {
    let start = Instant::now();
    let prior = Prior::new(0.1).unwrap();
    let cfg = AmpConfig::default();

    let wins: usize = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst =
                ProblemInstance::generate(2000, 600, 10.0, 1e-10, &prior, 300 + seed).unwrap();
            let centered = inst.mean_removed();
            usize::from(amp::run(&centered, &prior, &cfg).is_success(cfg.success_mse))
        })
        .sum();
    assert!(wins >= 19, "mean-removed AMP converged on only {wins}/20 seeds");

    pass(
        8,
        "mean-removal fix at gamma=10",
        format!("{wins}/20 seeds converged to mse < 1e-6 after centering"),
        start.elapsed(),
        Duration::from_secs(30 * 60),
    );
}

#[test]
fn criterion_9_se_amp_agreement() {
    let start = Instant::now();
    let prior = Prior::new(0.1).unwrap();
    let n = 8000usize;
    let m = 2400usize;
    let iters = 20usize;
    let seeds = 5u64;

    let params = SeParams::new(0.3, 1e-10, 0.0, prior).unwrap();
    let se = se_run(
        &SeState::uninformed(&prior),
        &params,
        &QuadratureSpec::default(),
        iters,
        0.0, // no early stop: we need all 20 states
    )
    .unwrap();
    assert!(se.states.len() > iters);

    // Instances are large; run the seeds serially and average the traces.
    let mut avg = vec![0.0f64; iters + 1];
    let cfg = AmpConfig {
        max_iter: iters,
        tol: 0.0,
        ..AmpConfig::default()
    };
    for seed in 0..seeds {
        let inst = ProblemInstance::generate(n, m, 0.0, 1e-10, &prior, 500 + seed).unwrap();
        let trace = amp::run(&inst, &prior, &cfg);
        assert!(trace.records.len() > iters, "AMP stopped early: {:?}", trace.status);
        for (acc, rec) in avg.iter_mut().zip(trace.records.iter()) {
            *acc += rec.e / seeds as f64;
        }
    }

    let bound = 5.0 / (n as f64).sqrt();
    let mut worst = 0.0f64;
    for (t, (amp_e, se_state)) in avg.iter().zip(se.states.iter()).enumerate().skip(1) {
        let gap = (amp_e - se_state.e).abs();
        assert!(
            gap <= bound,
            "iteration {t}: |E_amp - E_se| = {gap:.4e} > {bound:.4e}"
        );
        worst = worst.max(gap);
    }

    pass(
        9,
        "SE-AMP trajectory agreement",
        format!(
            "20 iterations, 5 seeds at N=8000: worst |E_amp - E_se| = {worst:.2e} <= 5/sqrt(N) = {bound:.2e}"
        ),
        start.elapsed(),
        Duration::from_secs(30 * 60),
    );
}
