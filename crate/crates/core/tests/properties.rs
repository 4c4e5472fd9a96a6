//! Cross-module behavioral invariants that go beyond single-module unit
//! tests: damping monotonicity, Bayes-optimal balance at finite size, the
//! threshold scaling identity, and regression baselines for the threshold
//! curve.

use rayon::prelude::*;

use ampse::amp::{self, AmpConfig};
use ampse::denoiser::Prior;
use ampse::evolution::{
    critical_gamma, critical_gamma_bisect, se_run, QuadratureSpec, SeParams, SeState,
    ThresholdKind,
};
use ampse::experiment::{run_threshold_curve, ExperimentConfig, ExperimentKind};
use ampse::instance::ProblemInstance;
use ampse::rbp::{self, Schedule};

fn amp_success_count(n: usize, gamma: f64, damping: f64, seeds: std::ops::Range<u64>) -> usize {
    let prior = Prior::new(0.1).unwrap();
    let cfg = AmpConfig {
        damping,
        ..AmpConfig::default()
    };
    let m = (0.3 * n as f64).round() as usize;
    seeds
        .into_par_iter()
        .map(|seed| {
            let inst = ProblemInstance::generate(n, m, gamma, 1e-10, &prior, seed).unwrap();
            usize::from(amp::run(&inst, &prior, &cfg).is_success(cfg.success_mse))
        })
        .sum()
}

#[test]
fn damping_strictly_improves_success_past_the_onset() {
    // Just above the empirical divergence onset, half-damped AMP must win
    // strictly more often than plain AMP on the same instances.
    let plain = amp_success_count(2000, 2.4, 0.0, 0..100);
    let damped = amp_success_count(2000, 2.4, 0.5, 0..100);
    assert!(
        damped > plain,
        "damping did not help: plain {plain}/100 vs damped {damped}/100"
    );
    // Sanity on magnitudes rather than just ordering.
    assert!(plain < 80, "plain AMP unexpectedly robust: {plain}/100");
    assert!(damped >= 90, "damped AMP unexpectedly fragile: {damped}/100");
}

#[test]
fn bayes_optimal_balance_is_restored_at_finite_size() {
    // On matched-prior instances the error E and the mean posterior variance
    // V track each other; the residual imbalance sits at the 1/sqrt(N)
    // scale and shrinks to nothing as the solver converges.
    let n = 8000;
    let prior = Prior::new(0.1).unwrap();
    let inst = ProblemInstance::generate(n, 2400, 0.0, 1e-10, &prior, 42).unwrap();
    let trace = amp::run(&inst, &prior, &AmpConfig::default());
    assert_eq!(trace.status, ampse::SolverStatus::Converged);

    let scale = 5.0 / (n as f64).sqrt();
    for rec in &trace.records[3..] {
        assert!(
            (rec.e - rec.v_bar).abs() <= scale,
            "iter {}: |E - Vbar| = {:.3e} above the finite-size scale {scale:.3e}",
            rec.iter,
            (rec.e - rec.v_bar).abs()
        );
    }
    let first_gap = (trace.records[0].e - trace.records[0].v_bar).abs();
    let last = trace.records.last().unwrap();
    let last_gap = (last.e - last.v_bar).abs();
    assert!(
        last_gap < first_gap / 100.0 && last_gap < 1e-8,
        "imbalance did not shrink: {first_gap:.3e} -> {last_gap:.3e}"
    );
}

#[test]
fn threshold_bisection_matches_scaling_formula() {
    let prior = Prior::new(0.1).unwrap();
    let params = SeParams::new(0.3, 0.0, 0.0, prior).unwrap();
    let quad = QuadratureSpec::default();
    for which in [ThresholdKind::Partial, ThresholdKind::Full] {
        let direct = critical_gamma(&params, &quad, which).unwrap();
        let bisected = critical_gamma_bisect(&params, &quad, which, 1e-8).unwrap();
        assert!(
            (direct - bisected).abs() < 1e-6,
            "{which:?}: scaling formula {direct} vs bisection {bisected}"
        );
    }
}

#[test]
fn threshold_curve_regression_baseline() {
    // Frozen from the first verified run (alpha = 0.3, zero noise). In the
    // recovery regime gamma_c2 equals 1/sqrt(rho); once the uninformed
    // trajectory stops reaching the zero-error fixed point (around rho ~
    // 0.17 at this alpha) both thresholds degenerate to 1/sqrt(alpha).
    let golden = [
        (0.02, 4.25707, 7.07107),
        (0.05, 2.90212, 4.47214),
        (0.1, 2.19497, 3.16228),
        (0.2, 1.82574, 1.82574),
        (0.3, 1.82574, 1.82574),
        (0.5, 1.82574, 1.82574),
        (0.7, 1.82574, 1.82574),
        (0.9, 1.82574, 1.82574),
    ];
    let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::ThresholdCurve);
    cfg.rho_grid = Some(golden.iter().map(|g| g.0).collect());
    cfg.out_dir = std::env::temp_dir().join("ampse_prop_threshold");
    let rows = run_threshold_curve(&cfg).unwrap();

    assert_eq!(rows.len(), golden.len());
    for ((rho, g1, g2), (grho, gg1, gg2)) in rows.iter().zip(golden.iter()) {
        assert_eq!(rho, grho);
        assert!(g1 <= g2, "rho={rho}: gamma_c1 {g1} > gamma_c2 {g2}");
        assert!((g1 - gg1).abs() < 5e-3, "rho={rho}: gamma_c1 {g1} vs frozen {gg1}");
        assert!((g2 - gg2).abs() < 5e-3, "rho={rho}: gamma_c2 {g2} vs frozen {gg2}");
    }

    let csv =
        std::fs::read_to_string(cfg.out_dir.join("threshold_curve.csv")).unwrap();
    assert!(csv.starts_with("rho,gamma_c1,gamma_c2\n"));
}

#[test]
fn success_transition_midpoint_and_sharpening() {
    // The drop through 1/2 sits near the partial-instability threshold
    // (2.0 < midpoint < 2.8), and the high side of the transition is lower
    // at larger N (sharpening toward the asymptotic step).
    let f_1000_22 = amp_success_count(1000, 2.2, 0.0, 1000..1030) as f64 / 30.0;
    let f_1000_28 = amp_success_count(1000, 2.8, 0.0, 1030..1060) as f64 / 30.0;
    assert!(f_1000_22 > 0.5, "fraction at gamma=2.2: {f_1000_22}");
    assert!(f_1000_28 < 0.5, "fraction at gamma=2.8: {f_1000_28}");

    for gamma in [2.4, 2.6] {
        let small = amp_success_count(500, gamma, 0.0, 2000..2030);
        let large = amp_success_count(2000, gamma, 0.0, 2000..2030);
        assert!(
            large <= small,
            "gamma={gamma}: success did not sharpen with N ({small}/30 at N=500 vs {large}/30 at N=2000)"
        );
    }
}

#[test]
fn parallel_rbp_matches_amp_at_zero_mean() {
    let prior = Prior::new(0.1).unwrap();
    let inst = ProblemInstance::generate(2000, 600, 0.0, 1e-10, &prior, 77).unwrap();
    let cfg = AmpConfig {
        max_iter: 500,
        ..AmpConfig::default()
    };
    let amp_trace = amp::run(&inst, &prior, &cfg);
    let rbp_trace = rbp::run(&inst, &prior, &Schedule::parallel(), &cfg);
    assert_eq!(amp_trace.status, ampse::SolverStatus::Converged);
    assert_eq!(rbp_trace.status, ampse::SolverStatus::Converged);
    let gap = (amp_trace.final_mse() - rbp_trace.final_mse()).abs();
    assert!(
        gap < 10.0 / (inst.n() as f64).sqrt(),
        "AMP {} vs parallel r-BP {}",
        amp_trace.final_mse(),
        rbp_trace.final_mse()
    );
}

#[test]
fn rbp_schedule_split_at_large_mean() {
    // Sequential r-BP solves every seed at gamma=5; parallel r-BP none.
    let prior = Prior::new(0.1).unwrap();
    let cfg = AmpConfig {
        max_iter: 500,
        ..AmpConfig::default()
    };
    let outcomes: Vec<(bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst =
                ProblemInstance::generate(2000, 600, 5.0, 1e-10, &prior, 7000 + seed).unwrap();
            let seq = rbp::run(&inst, &prior, &Schedule::random_sequential(seed), &cfg);
            let par = rbp::run(&inst, &prior, &Schedule::parallel(), &cfg);
            (
                seq.is_success(cfg.success_mse),
                par.is_success(cfg.success_mse),
            )
        })
        .collect();
    let seq_rate = outcomes.iter().filter(|o| o.0).count();
    let par_rate = outcomes.iter().filter(|o| o.1).count();
    assert_eq!(seq_rate, 20, "sequential r-BP: {seq_rate}/20");
    assert_eq!(par_rate, 0, "parallel r-BP: {par_rate}/20");
}

#[test]
fn schedule_compare_runner_covers_the_three_regimes() {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::ScheduleCompare);
    cfg.n = Some(1000);
    cfg.gamma_grid = Some(vec![0.0, 3.0, 5.0]);
    cfg.max_iter = 500;
    cfg.out_dir = std::env::temp_dir().join("ampse_prop_schedule");
    let rows = ampse::experiment::run_schedule_compare(&cfg).unwrap();

    let status_of = |gamma: f64, scheme: &str| {
        rows.iter()
            .find(|r| r.gamma == gamma && r.scheme == scheme)
            .map(|r| r.status)
            .unwrap()
    };
    // Sequential r-BP converges across the whole range.
    for gamma in [0.0, 3.0, 5.0] {
        assert_eq!(
            status_of(gamma, "rbp_sequential"),
            ampse::SolverStatus::Converged,
            "sequential at gamma={gamma}"
        );
    }
    // Plain parallel AMP only survives the zero-mean case here.
    assert_eq!(status_of(0.0, "amp"), ampse::SolverStatus::Converged);
    assert_ne!(status_of(3.0, "amp"), ampse::SolverStatus::Converged);
    assert_ne!(status_of(5.0, "amp"), ampse::SolverStatus::Converged);

    // At zero mean every arm lands on the same answer.
    let mses: Vec<f64> = rows
        .iter()
        .filter(|r| r.gamma == 0.0)
        .map(|r| r.final_mse)
        .collect();
    assert_eq!(mses.len(), 3);
    for m in &mses {
        assert!((m - mses[0]).abs() < 10.0 / (1000.0f64).sqrt());
        assert!(*m < 1e-6);
    }
}

#[test]
fn refine_metadata_reports_doubling_residual() {
    let prior = Prior::new(0.1).unwrap();
    let params = SeParams::new(0.3, 1e-10, 2.5, prior).unwrap();
    let quad = QuadratureSpec {
        refine: true,
        ..QuadratureSpec::default()
    };
    let traj = se_run(&SeState::uninformed(&prior), &params, &quad, 60, 1e-13).unwrap();
    let err = traj
        .max_refine_error
        .expect("refine runs must record the doubling residual");
    assert!(err < 1e-9, "doubling residual {err:.3e} exceeds 1e-9");

    let plain = QuadratureSpec::default();
    let traj = se_run(&SeState::uninformed(&prior), &params, &plain, 10, 1e-13).unwrap();
    assert!(traj.max_refine_error.is_none());
}
