mod common;

use causal_moments::causal_solver::{solve_diagonal, DiagonalTrajectory, GridSpec, SolverConfig};
use causal_moments::excitation::{Kernel, KernelFamily, KernelSpec};
use causal_moments::ito_reference::{localization_residual, solve_ou_local};
use causal_moments::oscillator::{central_from_raw, raw_from_central, InitialMoments, MomentSet, OscillatorParams, StabilityClass};
use common::{kernel, linear, linear_stationary_cross, linear_stationary_variance, ou, cubic_case};
use proptest::prelude::*;

fn solve(params: &OscillatorParams, kernel: &Kernel, grid: GridSpec) -> DiagonalTrajectory {
    solve_diagonal(params, kernel, &InitialMoments::default(), &grid, &SolverConfig::default()).unwrap()
}

fn until(t_end: f64) -> GridSpec {
    GridSpec { t_end, ..Default::default() }
}

fn last(v: &[f64]) -> f64 {
    *v.last().unwrap()
}

#[test]
fn linear_long_time_matches_frequency_domain_oracle() {
    let k = ou(1.0, 1.0);
    let var = linear_stationary_variance(-1.0, 1.0, &k);
    let cross = linear_stationary_cross(-1.0, 1.0, &k);
    assert!((var - 0.5).abs() < 1e-9 && (cross - 0.5).abs() < 1e-9);
    let traj = solve(&linear(), &k, until(10.0));
    assert!((last(&traj.c_xx_diag) - var).abs() < 1e-3);
    assert!((last(&traj.c_xy_diag) - cross).abs() < 1e-3);
    assert!(last(&traj.m_x).abs() < 1e-4);
}

#[test]
fn linear_gaussian_filter_input_matches_frequency_domain_oracle() {
    let k = Kernel::with_correlation_time(KernelFamily::GaussianFilter, 1.0, 1.0, 0.0, 0.0).unwrap();
    let traj = solve(&linear(), &k, until(15.0));
    let var = linear_stationary_variance(-1.0, 1.0, &k);
    let cross = linear_stationary_cross(-1.0, 1.0, &k);
    assert!((last(&traj.c_xx_diag) - var).abs() < 1e-5, "{} vs {var}", last(&traj.c_xx_diag));
    assert!((last(&traj.c_xy_diag) - cross).abs() < 1e-5, "{} vs {cross}", last(&traj.c_xy_diag));
}

#[test]
fn localization_residual_shrinks_under_grid_refinement() {
    let (p, k) = (cubic_case(0.4), ou(1.0, 1.0));
    let cfg = SolverConfig::default();
    let local = solve_ou_local(&p, &k, &InitialMoments::default(), 3.0, &cfg).unwrap();
    let residual = |j: usize| {
        let traj = solve(&p, &k, GridSpec { t_end: 3.0, fine_per_coarse: j, ..Default::default() });
        localization_residual(&traj, &local).unwrap().max()
    };
    let (r20, r40, r80) = (residual(20), residual(40), residual(80));
    assert!(r20 <= 1e-4, "{r20}");
    assert!(r40 <= 0.5 * r20, "{r20} -> {r40}");
    assert!(r80 <= 0.5 * r40, "{r40} -> {r80}");
}

/// Largest mismatch of the centered difference of `C_xy(t,t)` against its
/// local right side `(A_x − a)·C_xy + B_y·σ²`, over nodes after `t_skip`.
fn cross_covariance_ode_defect(traj: &DiagonalTrajectory, b_y: f64, a: f64, sigma2: f64, t_skip: f64) -> f64 {
    let mut worst = 0.0f64;
    for k in 1..traj.len() - 1 {
        if traj.times[k] < t_skip {
            continue;
        }
        let (h0, h1) = (traj.times[k] - traj.times[k - 1], traj.times[k + 1] - traj.times[k]);
        if (h0 - h1).abs() > 1e-12 {
            continue;
        }
        let slope = (traj.c_xy_diag[k + 1] - traj.c_xy_diag[k - 1]) / (h0 + h1);
        let rhs = (traj.a_x[k] - a) * traj.c_xy_diag[k] + b_y * sigma2;
        worst = worst.max((slope - rhs).abs());
    }
    worst
}

#[test]
fn diagonal_cross_covariance_obeys_localized_equation() {
    let (p, k) = (cubic_case(0.4), ou(1.0, 1.0));
    let b_y = p.forcing_gain(&k);
    let defect = |j: usize| {
        let traj = solve(&p, &k, GridSpec { t_end: 3.0, fine_per_coarse: j, ..Default::default() });
        cross_covariance_ode_defect(&traj, b_y, k.a(), k.sigma2(), 0.5)
    };
    let (d20, d40) = (defect(20), defect(40));
    assert!(d20 < 1e-3, "{d20}");
    let order = (d20 / d40).log2();
    assert!(order > 1.7, "defects {d20} -> {d40}, observed order {order}");
}

#[test]
fn halving_all_grid_steps_changes_final_moments_little() {
    let gf = Kernel::with_correlation_time(KernelFamily::GaussianFilter, 1.0, 1.0, 0.0, 0.0).unwrap();
    for (p, k) in [(cubic_case(0.4), ou(1.0, 1.0)), (cubic_case(-0.4), ou(1.0, 2.0)), (cubic_case(0.4), gf)] {
        let tau = k.correlation_time().unwrap();
        let coarse = solve(&p, &k, until(3.0));
        let fine = solve(&p, &k, GridSpec { t_end: 3.0, coarse_step: Some(0.5 * tau), ..Default::default() });
        assert_eq!(fine.len(), 2 * coarse.len() - 1);
        for (a, b) in [
            (last(&coarse.m_x), last(&fine.m_x)),
            (last(&coarse.c_xx_diag), last(&fine.c_xx_diag)),
            (last(&coarse.c_xy_diag), last(&fine.c_xy_diag)),
        ] {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1e-12) || (a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn long_time_moments_settle() {
    for k in [ou(1.0, 1.0), Kernel::with_correlation_time(KernelFamily::GaussianFilter, 1.0, 0.5, 0.0, 0.0).unwrap()] {
        let tau = k.correlation_time().unwrap();
        let t_end = 20.0 * tau.max(1.0);
        let traj = solve(&cubic_case(0.4), &k, until(t_end));
        let j = traj.times.iter().position(|&t| t >= 0.9 * t_end).unwrap();
        for v in [&traj.m_x, &traj.c_xx_diag, &traj.c_xy_diag] {
            let drift = v[j..].iter().map(|x| (x - last(v)).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-6, "last-decade drift {drift}");
        }
    }
}

fn monostable() -> impl Strategy<Value = OscillatorParams> {
    (-2.0f64..-0.3, -1.0f64..0.0, 0.3f64..1.5, -0.5f64..0.5)
        .prop_map(|(mu1, mu3, kappa1, kappa3)| OscillatorParams { mu1, mu3, kappa1, kappa3 })
}

fn any_kernel() -> impl Strategy<Value = Kernel> {
    (0usize..4, 0.3f64..1.5, 0.3f64..3.0, 0.0f64..3.0).prop_map(|(f, sigma2, a, w0)| {
        let family = [KernelFamily::Ou, KernelFamily::ShiftedOu, KernelFamily::GaussianFilter, KernelFamily::ShiftedGaussianFilter][f];
        let omega0 = if family.is_shifted() { w0 } else { 0.0 };
        kernel(family, sigma2, a, omega0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn causal_and_local_systems_agree(p in monostable(), sigma2 in 0.3f64..1.5, a in 0.5f64..2.0) {
        let k = ou(sigma2, a);
        let cfg = SolverConfig::default();
        let traj = solve(&p, &k, until(3.0));
        let local = solve_ou_local(&p, &k, &InitialMoments::default(), 3.0, &cfg).unwrap();
        let r = localization_residual(&traj, &local).unwrap();
        prop_assert!(r.max() <= 1e-4, "{:?}", r);
    }

    #[test]
    fn trajectory_invariants(p in monostable(), k in any_kernel(), m0 in -2.0f64..2.0, c0 in 0.0f64..1.5) {
        let init = InitialMoments { m_x0: m0, c_x0x0: c0 };
        let traj = solve_diagonal(&p, &k, &init, &until(2.0), &SolverConfig::default()).unwrap();
        for i in 0..traj.len() {
            prop_assert!(traj.c_xx_diag[i] >= 0.0);
            prop_assert!(traj.a_x[i] < 0.0);
            let bound = (traj.c_xx_diag[i] * k.sigma2()).sqrt();
            prop_assert!(traj.c_xy_diag[i].abs() <= bound * (1.0 + 1e-9) + 1e-12);
        }
        prop_assert!(traj.ia.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(traj.cycles_per_step.iter().all(|&c| c <= 25));
    }

    #[test]
    fn drift_coefficient_is_negative(mu1 in -5.0f64..-1e-3, mu3 in -5.0f64..0.0, m in -50.0f64..50.0, c in 0.0f64..50.0, k3 in -1.0f64..1.0) {
        let p = OscillatorParams { mu1, mu3, kappa1: 1.0, kappa3: k3 };
        let class = p.classify_potential().unwrap();
        prop_assert!(matches!(class, StabilityClass::Monostable | StabilityClass::Linear));
        let coef = p.coefficients(&ou(1.0, 1.0), m, c);
        prop_assert!(coef.a_x < 0.0);
    }

    #[test]
    fn linear_gain_coefficients(kappa1 in 0.1f64..3.0, sigma2 in 0.1f64..3.0, mean in -2.0f64..2.0) {
        let p = OscillatorParams { mu1: -1.0, mu3: -0.5, kappa1, kappa3: 0.0 };
        let k = Kernel::new(KernelSpec { family: KernelFamily::Ou, sigma2, a: 1.0, omega0: 0.0, mean }).unwrap();
        let coef = p.coefficients(&k, 0.3, 0.2);
        prop_assert_eq!(coef.b_y, kappa1);
        prop_assert_eq!(coef.b_tilde_y, kappa1);
    }

    #[test]
    fn central_raw_round_trip(values in proptest::collection::vec(-3.0f64..3.0, 15), mp in -2.0f64..2.0, mq in -2.0f64..2.0) {
        let mut central = MomentSet::new(4);
        let mut it = values.into_iter();
        for j1 in 0..=4 {
            for j2 in 0..=(4 - j1) {
                central.set(j1, j2, it.next().unwrap());
            }
        }
        central.set(0, 0, 1.0);
        central.set(1, 0, 0.0);
        central.set(0, 1, 0.0);
        let raw = raw_from_central(&central, mp, mq).unwrap();
        let back = central_from_raw(&raw, mp, mq).unwrap();
        for j1 in 0..=4 {
            for j2 in 0..=(4 - j1) {
                let (a, b) = (central.get(j1, j2).unwrap(), back.get(j1, j2).unwrap());
                let scale = raw.get(j1, j2).unwrap().abs().max(1.0);
                prop_assert!((a - b).abs() <= 1e-10 * scale, "({}, {}): {} vs {}", j1, j2, a, b);
            }
        }
    }
}
