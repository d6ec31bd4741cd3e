use loggas::energy::mean_energy;
use loggas::partition::{convexity_gap, enumerate_partition, estimate_partition, estimate_partition_multi};
use loggas::{BaseMeasure, Domain, Kernel, Seed};

fn uniform(d: usize) -> BaseMeasure {
    BaseMeasure::uniform(Domain::torus(d).unwrap())
}

/// `I̊` for atoms `a` and `b` occupied by two particles, written out by hand.
fn two_particle_energy(t: &[[f64; 2]; 2], w: [f64; 2], a: usize, b: usize) -> f64 {
    let pair = t[a][b] / 2.0;
    let cross: f64 = [a, b].iter().map(|&i| w[0] * t[i][0] + w[1] * t[i][1]).sum();
    let mean: f64 = (0..2).map(|j| (0..2).map(|l| w[j] * w[l] * t[j][l]).sum::<f64>()).sum();
    pair - cross + mean
}

#[test]
fn trivial_cases_are_exactly_one() {
    let k = Kernel::torus_log(2).unwrap();
    let one = estimate_partition(&k, &uniform(2), 1, 3.0, 0.0, 1000, Seed(1)).unwrap();
    assert_eq!(one.mean, 1.0);
    let zero = estimate_partition(&k, &uniform(2), 16, 0.0, 0.0, 1000, Seed(1)).unwrap();
    assert_eq!(zero.mean, 1.0);
}

#[test]
fn two_atoms_by_hand() {
    let k = Kernel::torus_log(1).unwrap();
    let pts = [0.1, 0.45];
    let mu = BaseMeasure::atomic(Domain::torus(1).unwrap(), pts.to_vec(), vec![0.5, 0.5]).unwrap();
    let mut t = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            t[a][b] = k.eval(&[pts[a]], &[pts[b]]).unwrap();
        }
    }
    for beta in [0.5, 1.0, 2.0] {
        let mut want = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                want += 0.25 * (-beta * two_particle_energy(&t, [0.5, 0.5], a, b)).exp();
            }
        }
        let exact = enumerate_partition(&k, 0.0, &mu, 2, beta).unwrap();
        assert!((exact - want).abs() < 1e-13, "{exact} vs {want}");
        let mc = estimate_partition(&k, &mu, 2, beta, 0.0, 20_000, Seed(2)).unwrap();
        assert!((mc.mean - exact).abs() <= mc.ci_halfwidth.max(3.0 * mc.std_error), "β={beta}");
    }
}

#[test]
fn monte_carlo_matches_enumeration() {
    let k = Kernel::torus_log(1).unwrap();
    let dom = Domain::torus(1).unwrap();
    let cases = [
        (vec![0.1, 0.4, 0.7, 0.85], vec![0.1, 0.2, 0.3, 0.4], 4),
        (vec![0.0, 0.3, 0.6], vec![0.5, 0.25, 0.25], 6),
        (vec![0.2, 0.9], vec![0.7, 0.3], 5),
    ];
    for (i, (pts, w, n)) in cases.into_iter().enumerate() {
        let mu = BaseMeasure::atomic(dom, pts, w).unwrap();
        let exact = enumerate_partition(&k, 0.0, &mu, n, 1.0).unwrap();
        let mc = estimate_partition(&k, &mu, n, 1.0, 0.0, 20_000, Seed(30 + i as u64)).unwrap();
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "case {i}: {} vs {exact}", mc.mean);
    }
}

#[test]
fn jensen_bound_holds() {
    let k = Kernel::torus_log(1).unwrap();
    let mu = BaseMeasure::single_mode(1, 0.6).unwrap();
    for n in [4, 32] {
        let m = mean_energy(&k, 0.0, &mu, n).unwrap();
        for beta in [1.0, 2.0] {
            let z = estimate_partition(&k, &mu, n, beta, 0.0, 10_000, Seed(n as u64)).unwrap();
            assert!(z.mean >= (-beta * m).exp() - z.ci_halfwidth, "N={n} β={beta}");
        }
    }
}

#[test]
fn log_partition_is_convex_in_beta() {
    let k = Kernel::torus_log(2).unwrap();
    let betas = [0.5, 1.0, 2.0];
    let est = estimate_partition_multi(&k, &uniform(2), 16, &betas, 0.0, 5000, Seed(9)).unwrap();
    let pts = [0, 1, 2].map(|i| (betas[i], est[i].log_mean));
    // same draws, so Hölder makes this exact up to rounding
    assert!(convexity_gap(pts) <= 1e-12);
    assert!(est.iter().all(|e| e.mean >= 1.0 - e.ci_halfwidth));
}

#[test]
fn estimates_are_deterministic() {
    let k = Kernel::torus_log(2).unwrap();
    let a = estimate_partition(&k, &uniform(2), 8, 1.0, 0.0, 3000, Seed(4)).unwrap();
    let b = estimate_partition(&k, &uniform(2), 8, 1.0, 0.0, 3000, Seed(4)).unwrap();
    assert_eq!(a, b);
    let c = estimate_partition(&k, &uniform(2), 8, 1.0, 0.0, 3000, Seed(5)).unwrap();
    assert_ne!(a.mean, c.mean);
    assert!(a.ess > 0.0 && a.ess <= 3000.0 + 1e-9);
}

#[test]
fn too_few_samples_is_an_error() {
    let k = Kernel::torus_log(1).unwrap();
    assert!(estimate_partition(&k, &uniform(1), 4, 1.0, 0.0, 999, Seed(0)).is_err());
}
