use std::collections::HashSet;
use std::f64::consts::PI;

use loggas::moments::{
    cardinality_bound, check_vanishing, classify, count_restricted, enumerate_multiindices,
    moment_monte_carlo, moment_oracle, multiindex_count, multiindex_expansion, restricted_counts,
    signed_moment_oracle, verify_corineq_scaling, AtomicPair, CenteredKernel, MultiIndex,
    PairSource,
};
use loggas::{BaseMeasure, Kernel, Seed};
use proptest::prelude::*;

fn two_atom(g: f64) -> AtomicPair {
    AtomicPair::new(vec![vec![g, -g], vec![-g, g]], vec![0.5, 0.5]).unwrap()
}

/// A centered table with dyadic entries, so every product and sum below is
/// exact in binary floating point.
fn dyadic_three_atom() -> AtomicPair {
    let h = vec![
        vec![1.0, -0.5, 0.25],
        vec![-0.5, 0.75, -1.0],
        vec![0.25, -1.0, 0.5],
    ];
    let g = AtomicPair::centered(h, vec![0.25, 0.25, 0.5]).unwrap();
    assert_eq!(g.centering_defect(), 0.0);
    g
}

/// `(1/n) Σ_{i≠j} G(X_i, X_j)` for atoms `idx`.
fn statistic(g: &AtomicPair, idx: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            if i != j {
                s += g.table[a][b];
            }
        }
    }
    s / idx.len() as f64
}

#[test]
fn multiindex_counts() {
    for (n, p, want) in [(2, 1, 2), (2, 2, 3), (3, 2, 21)] {
        assert_eq!(multiindex_count(n, p), want);
        let all: Vec<MultiIndex> = enumerate_multiindices(n, p).unwrap().collect();
        assert_eq!(all.len() as u128, want);
        assert!(all.iter().all(|m| m.p == p));
        assert_eq!(all.iter().cloned().collect::<HashSet<_>>().len(), all.len());
    }
    assert!(enumerate_multiindices(7, 2).is_err());
    assert!(enumerate_multiindices(3, 5).is_err());
}

#[test]
fn classify_examples() {
    let a = classify(&MultiIndex::new(2, vec![((0, 1), 1)]).unwrap());
    assert_eq!((a.m.clone(), a.restricted), (vec![1, 1], false));
    let b = classify(&MultiIndex::new(2, vec![((0, 1), 2)]).unwrap());
    assert_eq!((b.m.clone(), b.restricted, b.act), (vec![2, 2], true, 2));
    let c = classify(&MultiIndex::new(4, vec![((0, 1), 1), ((2, 3), 1)]).unwrap());
    assert_eq!((c.m.clone(), c.restricted), (vec![1, 1, 1, 1], false));
    assert!(MultiIndex::new(3, vec![((1, 1), 1)]).is_err());
}

#[test]
fn restricted_count_examples() {
    let c = count_restricted(2, 2, 2).unwrap();
    assert!((1..=4).contains(&c));
    for (n, p) in [(3, 2), (4, 3), (5, 2)] {
        assert_eq!(count_restricted(n, p, 1).unwrap(), 0);
    }
}

#[test]
fn combinatorial_claims_on_the_acceptance_list() {
    for (n, p) in [(2, 1), (2, 2), (3, 2), (3, 3), (4, 2)] {
        let rc = restricted_counts(n, p).unwrap();
        assert_eq!(rc.total as u128, multiindex_count(n, p));
        assert_eq!(rc.by_active.iter().sum::<u64>(), rc.restricted);
        assert_eq!(rc.boundonmi_violations, 0);
        for (ell, &c) in rc.by_active.iter().enumerate() {
            assert!(c as u128 <= cardinality_bound(n, ell, p), "n={n} p={p} l={ell}");
        }
        let v = check_vanishing(&dyadic_three_atom(), n, p).unwrap();
        assert_eq!(v.nonzero_terms, 0, "n={n} p={p}");
        assert_eq!(v.partition_failures, 0);
        assert_eq!(v.gamma_sum_failures, 0);
    }
}

#[test]
fn two_atom_second_moment_is_g_squared() {
    let g = two_atom(0.75);
    assert_eq!(moment_oracle(&g, 2, 2).unwrap(), 0.5625);
}

#[test]
fn enumeration_equals_restricted_expansion() {
    let g = two_atom(0.75);
    // the eight configurations of three particles on two atoms
    let mut direct = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                direct += 0.125 * statistic(&g, &[a, b, c]).powi(2);
            }
        }
    }
    assert_eq!(moment_oracle(&g, 3, 2).unwrap(), direct);
    assert_eq!(multiindex_expansion(&g, 3, 2, true).unwrap(), direct);
    let g3 = dyadic_three_atom();
    for (n, p) in [(3, 2), (3, 3), (4, 2)] {
        let full = multiindex_expansion(&g3, n, p, false).unwrap();
        let restricted = multiindex_expansion(&g3, n, p, true).unwrap();
        let oracle = signed_moment_oracle(&g3, n, p).unwrap();
        assert_eq!(full, restricted);
        assert!((oracle - restricted).abs() <= 1e-14 * oracle.abs().max(1.0), "n={n} p={p}");
    }
}

#[test]
fn first_moment_of_centered_statistic_is_zero() {
    let g = dyadic_three_atom();
    for n in 2..=5 {
        assert!(signed_moment_oracle(&g, n, 1).unwrap().abs() < 1e-16);
    }
}

#[test]
fn rank_one_second_moment_closed_form() {
    // g(x)g(y) with E g = 0 under weights (0.2, 0.3, 0.5)
    let w = vec![0.2, 0.3, 0.5];
    let gv = [1.5, 1.0, -1.2];
    assert!(w.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-15);
    let eg2: f64 = w.iter().zip(&gv).map(|(a, b)| a * b * b).sum();
    let table: Vec<Vec<f64>> = gv.iter().map(|a| gv.iter().map(|b| a * b).collect()).collect();
    let g = AtomicPair::new(table, w).unwrap();
    for n in [2usize, 4, 6] {
        let want = 2.0 * (n as f64 - 1.0) / n as f64 * eg2 * eg2;
        let exact = moment_oracle(&g, n, 2).unwrap();
        assert!((exact - want).abs() < 1e-12, "n={n}: {exact} vs {want}");
    }
    for n in [8usize, 32] {
        let want = 2.0 * (n as f64 - 1.0) / n as f64 * eg2 * eg2;
        let mc = moment_monte_carlo(PairSource::Atomic(&g), n, 2, true, 100_000, Seed(n as u64)).unwrap();
        assert!((mc.mean - want).abs() < 4.0 * mc.std_error, "n={n}: {} vs {want}", mc.mean);
    }
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let g = dyadic_three_atom();
    for (i, (n, p)) in [(2, 2), (4, 3), (6, 4)].into_iter().enumerate() {
        let exact = moment_oracle(&g, n, p).unwrap();
        let mc = moment_monte_carlo(PairSource::Atomic(&g), n, p, true, 100_000, Seed(40 + i as u64)).unwrap();
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "n={n} p={p}: {} vs {exact}", mc.mean);
    }
}

#[test]
fn gap_kernel_is_symmetric_and_centered() {
    let k = Kernel::torus_log_with_cutoff(1, 16).unwrap();
    let a = 0.5;
    let mu = BaseMeasure::single_mode(1, a).unwrap();
    let g = CenteredKernel::new(&k, 0.01, &mu).unwrap();
    // G(x, ·)ρ is a trigonometric polynomial of degree 17, so 64 nodes
    // integrate it exactly
    let m = 64;
    for x in [0.0, 0.13, 0.5, 0.77] {
        let quad: f64 = (0..m)
            .map(|j| {
                let y = j as f64 / m as f64;
                g.eval(&[x], &[y]) * (1.0 + a * (2.0 * PI * y).cos()) / m as f64
            })
            .sum();
        assert!(quad.abs() < 1e-6, "x={x}: {quad}");
        assert!(g.marginal(&[x]).unwrap().abs() < 1e-6);
        for y in [0.2, 0.9] {
            assert!((g.eval(&[x], &[y]) - g.eval(&[y], &[x])).abs() < 1e-15);
        }
    }
    assert!(CenteredKernel::new(&k, 0.0, &mu).is_err());
}

#[test]
fn corineq_p2_left_side_is_bounded_in_n() {
    // for centered G only matched pairs survive: E S² = 2(N-1)/N · E[G²]
    let g = dyadic_three_atom();
    let mut eg2 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            eg2 += g.weights[a] * g.weights[b] * g.table[a][b] * g.table[a][b];
        }
    }
    let ns = [4, 8, 16, 32];
    let rep = verify_corineq_scaling(PairSource::Atomic(&g), 2, 0.5, &ns, 20_000, Seed(3)).unwrap();
    assert_eq!(rep.rhs_exponent, 0);
    for (i, &n) in ns.iter().enumerate() {
        let want = 2.0 * (n as f64 - 1.0) / n as f64 * eg2;
        assert!((rep.lhs[i] - want).abs() < 4.0 * rep.lhs_se[i], "N={n}: {} vs {want}", rep.lhs[i]);
        assert!(rep.lhs[i] <= 2.0 * eg2 + 4.0 * rep.lhs_se[i]);
    }
    assert!(verify_corineq_scaling(PairSource::Atomic(&g), 1, 0.5, &[4], 1000, Seed(3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn restricted_sets_partition_by_activity(n in 2usize..=4, p in 1usize..=3) {
        let rc = restricted_counts(n, p).unwrap();
        prop_assert_eq!(rc.by_active.iter().sum::<u64>(), rc.restricted);
        prop_assert_eq!(rc.by_active.get(1).copied().unwrap_or(0), 0);
        prop_assert_eq!(rc.boundonmi_violations, 0);
        for idx in enumerate_multiindices(n, p).unwrap() {
            let prof = classify(&idx);
            prop_assert_eq!(prof.m.iter().sum::<u32>() as usize, 2 * p);
            prop_assert!(prof.act <= (2 * p).min(n));
            if prof.restricted {
                prop_assert!(prof.m.iter().all(|&v| v != 1));
            }
        }
    }
}
