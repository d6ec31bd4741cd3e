use std::f64::consts::PI;

use loggas::dynamics::pde::{mv_solve, PdeParams, PdeState};
use loggas::dynamics::sde::{SdeIntegrator, SdeParams};
use loggas::dynamics::sweep::{modulated_energy_sweep, SweepParams};
use loggas::energy::mean_energy;
use loggas::potential::Potential;
use loggas::{BaseMeasure, Configuration, Domain, Kernel, Seed};

fn free_line() -> Domain {
    Domain::free_space(1, 1e6).unwrap()
}

fn exact_params(dt: f64) -> SdeParams {
    SdeParams {
        dt,
        eps_reg: 0.0,
        force_cap: Some(f64::INFINITY),
    }
}

#[test]
fn pure_diffusion_increment_variance() {
    let n = 1000;
    let dt = 1e-3;
    let k = Kernel::zero(free_line());
    let c = Configuration::new(1, vec![0.0; n]).unwrap();
    let mut integ = SdeIntegrator::new(&k, &Potential::Zero, c, exact_params(dt), Seed(1)).unwrap();
    let (mut s2, mut count) = (0.0, 0.0);
    let mut prev = integ.config().coords.clone();
    for _ in 0..10_000 {
        integ.step().unwrap();
        for (x, p) in integ.config().coords.iter().zip(prev.iter_mut()) {
            s2 += (x - *p) * (x - *p);
            count += 1.0;
            *p = *x;
        }
    }
    let var = s2 / count;
    assert!((var / (2.0 * dt) - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn mirrored_pair_has_opposite_drifts() {
    let k = Kernel::torus_log(1).unwrap();
    let c = Configuration::new(1, vec![0.2, 0.8]).unwrap();
    let mut integ = SdeIntegrator::new(&k, &Potential::Zero, c, SdeParams::new(1e-3), Seed(2)).unwrap();
    let mut f = vec![0.0; 2];
    integ.drift(&mut f).unwrap();
    assert!(f[0] != 0.0);
    assert!((f[0] + f[1]).abs() < 1e-14);
}

#[test]
fn free_log_one_step_map() {
    // drift on particle 1 is (1/N)(x1 - x2)/|x1 - x2|² = (1/2, 0) at unit
    // separation, so the separation grows from 1 to 1 + dt
    let dom = Domain::free_space(2, 10.0).unwrap();
    let k = Kernel::free_log(dom).unwrap();
    let dt = 0.01;
    let c = Configuration::new(2, vec![0.5, 0.0, -0.5, 0.0]).unwrap();
    let mut integ = SdeIntegrator::new(&k, &Potential::Zero, c, exact_params(dt), Seed(3)).unwrap();
    integ.step_with_noise(&[0.0; 4]).unwrap();
    let x = &integ.config().coords;
    assert!((x[0] - (0.5 + dt / 2.0)).abs() < 1e-15);
    assert!((x[2] + 0.5 + dt / 2.0).abs() < 1e-15);
    assert_eq!((x[1], x[3]), (0.0, 0.0));
}

#[test]
fn ornstein_uhlenbeck_terminal_variance() {
    let (s, dt, t) = (1.0, 0.01, 1.0);
    // enough particles that sampling error sits well inside the 3·dt band
    let n = 200_000;
    let k = Kernel::zero(free_line());
    let c = Configuration::new(1, vec![1.0; n]).unwrap();
    let v = Potential::Quadratic { strength: s };
    let mut integ = SdeIntegrator::new(&k, &v, c, exact_params(dt), Seed(4)).unwrap();
    integ.run_until(t).unwrap();
    let xs = &integ.config().coords;
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let exact = (1.0 - (-2.0 * s * t).exp()) / s;
    assert!((var - exact).abs() < 3.0 * dt, "{var} vs {exact}");
    assert!((m - (-s * t).exp()).abs() < 3.0 * dt);
}

#[test]
fn relabelling_particles_relabels_the_trajectory() {
    let k = Kernel::torus_log_with_cutoff(1, 32).unwrap();
    let x0 = vec![0.1, 0.35, 0.5, 0.72, 0.9];
    let perm = [3usize, 0, 4, 1, 2];
    let seed = Seed(5);
    let streams: Vec<_> = (0..5).map(|i| seed.child(i as u64).rng()).collect();
    let permuted_streams = perm.iter().map(|&i| streams[i].clone()).collect();
    let c = Configuration::new(1, x0).unwrap();
    let mut a = SdeIntegrator::with_streams(&k, &Potential::Zero, c.clone(), SdeParams::new(1e-3), streams).unwrap();
    let mut b =
        SdeIntegrator::with_streams(&k, &Potential::Zero, c.permuted(&perm), SdeParams::new(1e-3), permuted_streams)
            .unwrap();
    a.run_until(0.1).unwrap();
    b.run_until(0.1).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        let d = Domain::torus(1).unwrap().distance(a.config().point(i), b.config().point(j));
        assert!(d < 1e-12, "particle {i}: {d}");
    }
}

#[test]
fn uniform_density_is_stationary() {
    let k = Kernel::torus_log(1).unwrap();
    let init = PdeState::from_measure(&BaseMeasure::uniform(Domain::torus(1).unwrap()), 64).unwrap();
    let traj = mv_solve(&init, &k, &Potential::Zero, PdeParams::new(64, 1e-3), 0.2).unwrap();
    for snap in &traj.snapshots {
        assert!(snap.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }
}

#[test]
fn heat_equation_mode_decay() {
    let a = 0.5;
    let t = 0.1;
    let init = PdeState::from_measure(&BaseMeasure::single_mode(1, a).unwrap(), 64).unwrap();
    let k = Kernel::zero(Domain::torus(1).unwrap());
    let traj = mv_solve(&init, &k, &Potential::Zero, PdeParams::new(64, 1e-3), t).unwrap();
    let last = traj.snapshots.last().unwrap();
    // amplitude of cos(2πx) by projection on the nodes
    let amp: f64 = last
        .iter()
        .enumerate()
        .map(|(i, v)| 2.0 * v * (2.0 * PI * i as f64 / 64.0).cos() / 64.0)
        .sum();
    let want = a * (-4.0 * PI * PI * t).exp();
    assert!((amp / want - 1.0).abs() < 1e-6, "{amp} vs {want}");
}

#[test]
fn nonlinear_run_dissipates_free_energy() {
    let k = Kernel::torus_log(1).unwrap();
    let init = PdeState::from_measure(&BaseMeasure::single_mode(1, 0.5).unwrap(), 64).unwrap();
    let traj = mv_solve(&init, &k, &Potential::Zero, PdeParams::new(64, 1e-3), 1.0).unwrap();
    assert!(traj.max_free_energy_increase() <= 1e-12, "{}", traj.max_free_energy_increase());
    assert!(traj.max_mass_correction <= 1e-10);
    let last = traj.snapshots.last().unwrap();
    assert!(last.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

fn sweep_params(replicas: usize, times: Vec<f64>) -> SweepParams {
    SweepParams {
        n_values: vec![4, 8],
        times,
        replicas,
        dt: 1e-3,
        eps_reg: 1e-3,
        pde_cells: 64,
        pde_dt: 1e-3,
    }
}

#[test]
fn sweep_at_time_zero_matches_closed_form() {
    let k = Kernel::torus_log(1).unwrap();
    let mu = BaseMeasure::single_mode(1, 0.6).unwrap();
    let out = modulated_energy_sweep(&k, &Potential::Zero, &mu, &sweep_params(2000, vec![0.0]), Seed(6)).unwrap();
    for row in &out.rows {
        let want = mean_energy(&k, 1e-3, &mu, row.n).unwrap() / row.n as f64;
        assert!((row.raw - want).abs() < 4.0 * row.raw_se, "N={}: {} vs {want}", row.n, row.raw);
        assert!((row.control_mean - want).abs() < 1e-12);
    }
}

#[test]
fn doubling_replicas_shrinks_the_error_bar() {
    let k = Kernel::torus_log(1).unwrap();
    let mu = BaseMeasure::single_mode(1, 0.6).unwrap();
    let a = modulated_energy_sweep(&k, &Potential::Zero, &mu, &sweep_params(400, vec![0.05]), Seed(7)).unwrap();
    let b = modulated_energy_sweep(&k, &Potential::Zero, &mu, &sweep_params(800, vec![0.05]), Seed(8)).unwrap();
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        let ratio = ra.raw_se / rb.raw_se;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.15, "N={}: ratio {ratio}", ra.n);
    }
}
