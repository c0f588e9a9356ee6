mod common;

use causal_moments::causal_solver::{solve_diagonal, DiagonalTrajectory, GridSpec, SolverConfig};
use causal_moments::cli::FieldReport;
use causal_moments::excitation::{Kernel, KernelFamily};
use causal_moments::oscillator::{InitialMoments, OscillatorParams};
use causal_moments::two_time::{build_field, FieldMethod, TwoTimeField};
use common::{kernel, ou, cubic_case};

fn solve(params: &OscillatorParams, kernel: &Kernel, t_end: f64, fine_per_coarse: usize) -> DiagonalTrajectory {
    let grid = GridSpec { t_end, fine_per_coarse, ..Default::default() };
    solve_diagonal(params, kernel, &InitialMoments::default(), &grid, &SolverConfig::default()).unwrap()
}

fn field(traj: &DiagonalTrajectory, k: &Kernel, p: &OscillatorParams, method: FieldMethod) -> TwoTimeField {
    build_field(traj, k, p, &InitialMoments::default(), method, None).unwrap()
}

/// Largest defect of the centered `∂C_xy/∂t` against `A_x(t)·C_xy + B_y·C_yy(t − s)`
/// at rows away from the kink of the input covariance and from the initial transient.
fn cross_field_defect(f: &TwoTimeField, traj: &DiagonalTrajectory, k: &Kernel, b_y: f64) -> f64 {
    let n = f.times.len();
    let mut worst = 0.0f64;
    for l in (0..n).step_by(5) {
        let s = f.times[l];
        for r in 1..n - 1 {
            let t = f.times[r];
            let h = f.times[r + 1] - t;
            if t < 0.5 || (t - s).abs() < 2.5 * h || (h - (t - f.times[r - 1])).abs() > 1e-12 {
                continue;
            }
            let slope = (f.c_xy.get(r + 1, l) - f.c_xy.get(r - 1, l)) / (2.0 * h);
            let rhs = traj.a_x[r] * f.c_xy.get(r, l) + b_y * k.covariance(t - s);
            worst = worst.max((slope - rhs).abs());
        }
    }
    worst
}

#[test]
fn cross_field_defect_is_second_order() {
    let (p, k) = (cubic_case(0.4), ou(1.0, 1.0));
    let b_y = p.forcing_gain(&k);
    let defect = |j: usize| {
        let traj = solve(&p, &k, 2.0, j);
        cross_field_defect(&field(&traj, &k, &p, FieldMethod::Integral), &traj, &k, b_y)
    };
    let (d20, d40, d80) = (defect(20), defect(40), defect(80));
    let (coarse_order, fine_order) = ((d20 / d40).log2(), (d40 / d80).log2());
    assert!(coarse_order > 1.5 && fine_order > 1.85, "{d20} -> {d40} -> {d80}");
}

#[test]
fn routes_and_invariants_across_kernel_families() {
    let gf = Kernel::with_correlation_time(KernelFamily::GaussianFilter, 1.0, 1.0, 0.0, 0.0).unwrap();
    let cases = [
        (cubic_case(0.4), ou(1.0, 1.0)),
        (cubic_case(-0.4), ou(1.0, 2.0)),
        (cubic_case(0.4), gf),
        (cubic_case(0.4), kernel(KernelFamily::ShiftedOu, 1.0, 1.0, 2.0)),
        (OscillatorParams { mu1: -1.0, mu3: -0.1, kappa1: 1.0, kappa3: 0.0 }, kernel(KernelFamily::ShiftedGaussianFilter, 1.0, 1.0, 1.0)),
    ];
    for (p, k) in cases {
        let traj = solve(&p, &k, 2.0, 40);
        let a = field(&traj, &k, &p, FieldMethod::Integral);
        let b = field(&traj, &k, &p, FieldMethod::Ode);
        let routes = a.c_xy.max_abs_diff(&b.c_xy).max(a.c_xx.max_abs_diff(&b.c_xx));
        assert!(routes <= 1e-5, "{:?}: routes differ by {routes}", k.spec());
        for f in [&a, &b] {
            let r = FieldReport::new(f, &traj, k.sigma2());
            assert!(r.symmetry <= 1e-8, "{r:?}");
            assert!(r.diagonal_c_xx <= 1e-6 && r.diagonal_c_xy <= 1e-6, "{:?}: {r:?}", k.spec());
            assert_eq!(r.initial_row, 0.0);
            assert_eq!(r.cauchy_schwarz_excess, 0.0, "{r:?}");
        }
    }
}

#[test]
fn late_field_depends_on_lag_only() {
    let (p, k) = (cubic_case(0.4), ou(1.0, 1.0));
    let traj = solve(&p, &k, 10.0, 20);
    let f = field(&traj, &k, &p, FieldMethod::Integral);
    let n = f.times.len();
    let h = f.times[1] - f.times[0];
    let per_tau = (1.0 / h).round() as usize;
    let lags = 2 * per_tau;
    for shift in [per_tau / 2, per_tau] {
        let (base, moved) = (n - 1, n - 1 - shift);
        for u in 0..=lags {
            // Response lagging and leading the excitation by u steps.
            let behind = (f.c_xy.get(base - u, base) - f.c_xy.get(moved - u, moved)).abs();
            let ahead = (f.c_xy.get(base, base - u) - f.c_xy.get(moved, moved - u)).abs();
            let auto = (f.c_xx.get(base, base - u) - f.c_xx.get(moved, moved - u)).abs();
            assert!(behind.max(ahead).max(auto) < 1e-3, "shift {shift}, lag {u}: {behind} {ahead} {auto}");
        }
    }
}

/// Time span before `s` over which `C_xy(t, s)` stays above 1% of its column peak.
fn anticipation_window(f: &TwoTimeField, l: usize) -> f64 {
    let col: Vec<f64> = (0..f.times.len()).map(|r| f.c_xy.get(r, l)).collect();
    let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let first = (0..=l).rev().take_while(|&r| col[r].abs() > 0.01 * peak).last().unwrap();
    f.times[l] - f.times[first]
}

#[test]
fn excitation_leads_response_over_a_correlation_window() {
    let p = cubic_case(0.4);
    let mut windows = Vec::new();
    for tau in [0.5, 1.0, 2.0] {
        let k = Kernel::with_correlation_time(KernelFamily::Ou, 1.0, tau, 0.0, 0.0).unwrap();
        let traj = solve_diagonal(&p, &k, &InitialMoments::default(), &GridSpec { t_end: 12.0, coarse_step: Some(0.5), fine_per_coarse: 10, ..Default::default() }, &SolverConfig::default()).unwrap();
        let f = field(&traj, &k, &p, FieldMethod::Integral);
        let l = f.times.len() - 1;
        let w = anticipation_window(&f, l);
        assert!(w >= 0.5 * tau, "tau {tau}: window {w}");
        windows.push(w);
    }
    assert!(windows.windows(2).all(|w| w[1] > w[0]), "{windows:?}");
}
