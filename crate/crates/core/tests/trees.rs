use coalescence::discrete::{critical_point, ModelFamily};
use coalescence::quad;
use coalescence::scaling::solve_profile;
use coalescence::trees::*;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn two_delta(n: usize, keep: usize) -> QHistory {
    QHistory::compute(&ModelFamily::two_delta(0.2), n, keep).unwrap()
}

/// Brute-force `Q_1` of the two-delta family from the recursion on pairs.
#[test]
fn first_level_no_branch_from_brute_force() {
    let q0 = [0.8, 0.0, 0.2];
    let mut q1 = [0.0; 4];
    for (a, qa) in q0.iter().enumerate() {
        for (b, qb) in q0.iter().enumerate() {
            q1[(a + b).saturating_sub(1)] += qa * qb;
        }
    }
    let h = two_delta(3, 4);
    for (k, v) in q1.iter().enumerate() {
        assert!((h.q(1, k) - v).abs() < 1e-15);
    }
    let s = branch_step_distribution(&h, 1, 1).unwrap();
    assert!((s.no_branch - 2.0 * q0[2] * q0[0] / q1[1]).abs() < 1e-15);
    assert!(s.split.is_empty());
    assert!(branch_step_distribution(&h, 1, 2).is_err());
}

#[test]
fn branch_probabilities_sum_to_one() {
    let p6 = critical_point(&ModelFamily::power_law(1.9, 6.0))
        .unwrap()
        .p_c;
    let p3 = critical_point(&ModelFamily::power_law(1.0, 3.0))
        .unwrap()
        .p_c;
    for fam in [
        ModelFamily::two_delta(0.2),
        ModelFamily::power_law(p6, 6.0),
        ModelFamily::power_law(p3, 3.0),
    ] {
        let h = QHistory::compute(&fam, 80, 82).unwrap();
        let sampler = DiscreteSampler::new(&h, 80, 80).unwrap();
        assert!(
            sampler.max_identity_residual < 1e-12,
            "{fam:?}: {}",
            sampler.max_identity_residual
        );
    }
}

#[test]
fn no_branching_edge_cases() {
    let h = two_delta(30, 32);
    assert!((no_branching_prob(&h, 30, 30, 30).unwrap() - 1.0).abs() < 1e-15);
    assert!(no_branching_prob(&h, 31, 30, 30).is_err());
    // one level: the no-branch probability of a single step
    let s = branch_step_distribution(&h, 30, 12).unwrap();
    assert!((no_branching_prob(&h, 29, 30, 12).unwrap() - s.no_branch).abs() < 1e-14);
    // Q_1(2) = 0
    assert!(matches!(
        no_branching_prob(&h, 0, 1, 2),
        Err(coalescence::Error::Support { .. })
    ));
}

#[test]
fn leaves_carry_the_initial_support() {
    let h = two_delta(30, 32);
    let sampler = DiscreteSampler::new(&h, 30, 30).unwrap();
    fn check(node: &DiscreteTreeNode) {
        match node.children.as_slice() {
            [] => assert_eq!((node.level, node.value), (0, 2)),
            [c] => {
                assert_eq!((c.level, c.value), (node.level - 1, node.value + 1));
                check(c);
            }
            [a, b] => {
                assert!(a.value >= 1 && b.value >= 1);
                assert_eq!(a.value + b.value, node.value + 1);
                assert!(a.level == node.level - 1 && b.level == node.level - 1);
                check(a);
                check(b);
            }
            _ => panic!("more than two children"),
        }
    }
    for i in 0..10_000 {
        check(&sampler.sample(&mut tree_rng(11, i)));
    }
}

#[test]
fn monte_carlo_matches_no_branching_formula() {
    let (m, x) = (40, 40);
    let h = two_delta(m, m + 2);
    let stats = discrete_tree_statistics(&h, m, x, 100_000, 2024).unwrap();
    assert_eq!(stats.trees, 100_000);
    for level in [16, 20, 25, 30, 35, 38] {
        let (p, se) = stats.no_branch_frequency(level as f64);
        let exact = no_branching_prob(&h, level, m, x).unwrap();
        assert!(
            (p - exact).abs() < 3.0 * se,
            "m' = {level}: {p} ± {se} vs {exact}"
        );
    }
}

#[test]
fn statistics_do_not_depend_on_scheduling() {
    let h = two_delta(20, 22);
    let a = discrete_tree_statistics(&h, 20, 20, 500, 9).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| discrete_tree_statistics(&h, 20, 20, 500, 9).unwrap());
    assert_eq!(a, b);
}

#[test]
fn alpha_three_split_law_rescales() {
    // X_m = m; at level m - 1 the masses x₁ and m + 1 - x₁ are read at time m - 1
    let p3 = critical_point(&ModelFamily::power_law(1.0, 3.0))
        .unwrap()
        .p_c;
    let m = 80;
    let h = QHistory::compute(&ModelFamily::power_law(p3, 3.0), m, m + 2).unwrap();
    let profile = solve_profile(1.5, 200.0, 0.01).unwrap();
    let f = |y: f64| profile.value(y).unwrap();
    let (x, t) = ((m + 1) as f64, (m - 1) as f64);
    let norm = quad::adaptive(|y| f(y / t) * f((x - y) / t), 0.0, x, 1e-12, 0.0, 60).value;
    let s = branch_step_distribution(&h, m, m).unwrap();
    for (i, p) in s.split.iter().enumerate() {
        let a = (i + 1) as f64;
        if a < 0.1 * x || a > 0.9 * x {
            continue;
        }
        let density = f(a / t) * f((x - a) / t) / norm;
        assert!(
            (p / density - 1.0).abs() < 0.05,
            "x₁ = {a}: {p} vs {density}"
        );
    }
}

#[test]
fn alpha_three_no_branch_curve() {
    let p3 = critical_point(&ModelFamily::power_law(1.0, 3.0))
        .unwrap()
        .p_c;
    let m = 80;
    let h = QHistory::compute(&ModelFamily::power_law(p3, 3.0), m, m + 2).unwrap();
    let profile = TreeProfile::Scaling(solve_profile(1.5, 200.0, 0.01).unwrap());
    for level in 1..=m {
        let d = no_branching_prob(&h, level, m, m).unwrap();
        let c = continuous_no_branching(&profile, level as f64, m as f64, m as f64).unwrap();
        assert!((d - c).abs() < 0.05, "m' = {level}: {d} vs {c}");
    }
}

#[test]
fn exponential_curves_converge_in_m() {
    // the deviation from the exponential-profile law shrinks steadily with m
    let errors: Vec<f64> = [40, 80, 160]
        .iter()
        .map(|&m| {
            let h = two_delta(m, m + 2);
            (1..=m)
                .map(|level| {
                    let d = no_branching_prob(&h, level, m, m).unwrap();
                    let c = continuous_no_branching(
                        &TreeProfile::Exponential,
                        level as f64,
                        m as f64,
                        m as f64,
                    )
                    .unwrap();
                    (d - c).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(
        errors[1] < 0.7 * errors[0] && errors[2] < 0.7 * errors[1],
        "{errors:?}"
    );
}

#[test]
fn exponential_no_branching_closed_form() {
    let p = TreeProfile::Scaling(solve_profile(4.0, 100.0, 1e-3).unwrap());
    for (tp, t, x) in [(0.5f64, 1.0f64, 0.3f64), (1.0, 3.0, 2.0), (2.5, 3.0, 0.0)] {
        let closed: f64 = (t / tp).powi(2) * (-2.0 * (t - tp) * (x + t) / (t * tp)).exp();
        let a = continuous_no_branching(&TreeProfile::Exponential, tp, t, x).unwrap();
        let b = continuous_no_branching(&p, tp, t, x).unwrap();
        assert!((a - closed).abs() < 1e-14 * closed.max(1e-300));
        assert!((b - closed).abs() < 1e-5 * closed, "{b} vs {closed}");
    }
}

#[test]
fn no_branching_is_scale_invariant() {
    let p = TreeProfile::Scaling(solve_profile(1.5, 200.0, 0.01).unwrap());
    for (tp, t, x) in [(0.3, 1.0, 0.5), (0.8, 1.5, 2.0), (0.1, 0.4, 0.05)] {
        let a = continuous_no_branching(&p, tp, t, x).unwrap();
        let b = continuous_no_branching(&p, 2.0 * tp, 2.0 * t, 2.0 * x).unwrap();
        assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
    }
}

#[test]
fn rates_are_non_negative() {
    for f0 in [1e-3, 1.5, 3.0] {
        let p = TreeProfile::Scaling(solve_profile(f0, 200.0, 0.01).unwrap());
        for i in 1..50 {
            let tp = i as f64 / 50.0;
            for mu in [0.0, 0.5, 2.0, 10.0] {
                let r = branching_rate(&p, tp, mu).unwrap();
                assert!(r >= -1e-9, "F0 = {f0}, t' = {tp}, μ = {mu}: {r}");
            }
        }
    }
}

/// Survival by quadrature of the rate, independent of the closed form used by the sampler.
fn survival(profile: &TreeProfile, tp: f64, t: f64, x: f64) -> f64 {
    let integral = quad::adaptive(
        |s| branching_rate(profile, s, x + t - s).unwrap(),
        tp,
        t,
        1e-12,
        0.0,
        60,
    )
    .value;
    (-integral).exp()
}

#[test]
fn first_branch_times_follow_the_rate() {
    let profiles = [
        TreeProfile::Exponential,
        TreeProfile::Scaling(solve_profile(1.5, 200.0, 0.01).unwrap()),
    ];
    let (t, x, floor) = (1.0, 0.5, 0.05);
    let samples = 100_000;
    for profile in &profiles {
        let times: Vec<Option<f64>> = (0..samples)
            .map(|i| first_branch_time(profile, t, x, floor, &mut tree_rng(5, i)).unwrap())
            .collect();
        for tp in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let expected = survival(profile, tp, t, x);
            let closed = continuous_no_branching(profile, tp, t, x).unwrap();
            assert!((expected - closed).abs() < 1e-6, "{expected} vs {closed}");
            let hits = times.iter().filter(|b| b.is_none_or(|v| v <= tp)).count() as f64;
            let p = hits / samples as f64;
            let se = (expected * (1.0 - expected) / samples as f64).sqrt();
            assert!(
                (p - expected).abs() < 3.0 * se,
                "t' = {tp}: {p} vs {expected} ± {se}"
            );
        }
    }
}

#[test]
fn exponential_splits_are_uniform() {
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|i| {
            split_mass(&TreeProfile::Exponential, 2.0, 0.7, &mut tree_rng(3, i)).unwrap() / 2.0
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 3.0 * (1.0 / 12.0 / n as f64).sqrt());
    // the tabulated sampler with F = 4e^{-2x} is also uniform
    let p = TreeProfile::Scaling(solve_profile(4.0, 50.0, 1e-3).unwrap());
    let below = (0..20_000)
        .filter(|&i| split_mass(&p, 2.0, 0.7, &mut tree_rng(4, i)).unwrap() < 0.5)
        .count() as f64
        / 20_000.0;
    assert!(
        (below - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 20_000.0).sqrt(),
        "{below}"
    );
}

#[test]
fn split_law_matches_the_profile() {
    // F0 = 3/2 at mass 3, time 1: P(x₁ < 1) from the tabulated sampler vs quadrature
    let profile = solve_profile(1.5, 200.0, 0.01).unwrap();
    let f = |y: f64| profile.value(y).unwrap();
    let (mu, t) = (3.0, 1.0);
    let g = |y: f64| f(y / t) * f((mu - y) / t);
    let expected = quad::adaptive(g, 0.0, 1.0, 1e-12, 0.0, 60).value
        / quad::adaptive(g, 0.0, mu, 1e-12, 0.0, 60).value;
    let p = TreeProfile::Scaling(profile.clone());
    let n = 40_000;
    let below = (0..n)
        .filter(|&i| split_mass(&p, mu, t, &mut tree_rng(6, i)).unwrap() < 1.0)
        .count() as f64
        / n as f64;
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!((below - expected).abs() < 3.0 * se, "{below} vs {expected}");
}

#[test]
fn masses_are_conserved_at_branchings() {
    let profiles = [
        TreeProfile::Exponential,
        TreeProfile::Scaling(solve_profile(3.0, 200.0, 0.01).unwrap()),
    ];
    fn check(node: &ContinuousTreeNode, floor: f64) {
        if let [a, b] = node.children.as_slice() {
            assert_eq!(a.time, b.time);
            assert!(a.time < node.time && a.time > floor);
            let parent = node.mass + node.time - a.time;
            assert!((a.mass + b.mass - parent).abs() <= 1e-12 * parent);
            assert!(a.mass >= 0.0 && b.mass >= 0.0);
            check(a, floor);
            check(b, floor);
        } else {
            assert!(node.children.is_empty());
        }
    }
    let cfg = ContinuousConfig::default();
    for profile in &profiles {
        for i in 0..200 {
            let tree = sample_continuous_tree(profile, 1.0, 2.0, cfg, &mut tree_rng(8, i)).unwrap();
            assert!((tree.floor - 2.0 * cfg.floor_fraction).abs() < 1e-15);
            check(&tree.root, tree.floor);
        }
    }
}

#[test]
fn small_f0_gives_straight_lines() {
    let p = TreeProfile::Scaling(solve_profile(1e-3, 200.0, 0.01).unwrap());
    let stats =
        continuous_tree_statistics(&p, 1.0, 1.0, ContinuousConfig::default(), 10_000, 1).unwrap();
    let single = stats.leaf_counts.get(&1).copied().unwrap_or(0) as f64 / stats.trees as f64;
    assert!(single > 0.99, "{single}");
}

/// Two-sample χ² homogeneity test on leaf-count histograms, bins pooled so that every
/// expected count is at least five. Returns the p-value.
fn homogeneity_p_value(a: &TreeStatistics, b: &TreeStatistics) -> f64 {
    let keys: std::collections::BTreeSet<usize> = a
        .leaf_counts
        .keys()
        .chain(b.leaf_counts.keys())
        .copied()
        .collect();
    let (na, nb) = (a.trees as f64, b.trees as f64);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for k in keys {
        cur.0 += a.leaf_counts.get(&k).copied().unwrap_or(0) as f64;
        cur.1 += b.leaf_counts.get(&k).copied().unwrap_or(0) as f64;
        let total = cur.0 + cur.1;
        if total * na.min(nb) / (na + nb) >= 5.0 {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += cur.0;
        last.1 += cur.1;
    }
    let mut chi2 = 0.0;
    for (oa, ob) in &bins {
        let total = oa + ob;
        let (ea, eb) = (total * na / (na + nb), total * nb / (na + nb));
        chi2 += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(chi2)
}

#[test]
fn leaf_counts_are_scale_invariant() {
    let cfg = ContinuousConfig {
        floor_fraction: 0.2,
        ..ContinuousConfig::default()
    };
    let p = TreeProfile::Exponential;
    let a = continuous_tree_statistics(&p, 1.0, 1.0, cfg, 100_000, 21).unwrap();
    let b = continuous_tree_statistics(&p, 2.0, 2.0, cfg, 100_000, 22).unwrap();
    let pv = homogeneity_p_value(&a, &b);
    assert!(pv > 0.01, "p = {pv}");
    // the test has power: a different root mass is detected
    let c = continuous_tree_statistics(&p, 1.5, 1.0, cfg, 100_000, 23).unwrap();
    assert!(homogeneity_p_value(&a, &c) < 0.01);
}

#[test]
fn summaries_of_simple_trees() {
    let leaf = ContinuousTreeNode {
        time: 1.0,
        mass: 0.5,
        children: vec![],
    };
    let s = leaf.summary();
    assert_eq!((s.leaves, s.first_branch), (1, None));
    assert!(s.coalescences.is_empty());
    let tree = ContinuousTreeNode {
        time: 1.0,
        mass: 0.5,
        children: vec![
            leaf.clone(),
            ContinuousTreeNode {
                time: 0.6,
                mass: 0.2,
                children: vec![
                    ContinuousTreeNode {
                        time: 0.3,
                        mass: 0.4,
                        children: vec![],
                    },
                    ContinuousTreeNode {
                        time: 0.3,
                        mass: 0.1,
                        children: vec![],
                    },
                ],
            },
        ],
    };
    let s = tree.summary();
    assert_eq!(s.leaves, 3);
    assert_eq!(s.first_branch, Some(1.0));
    let mut c = s.coalescences.clone();
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(c, vec![(0.3, 1), (1.0, 2)]);
}

#[test]
fn trees_serialize_as_nested_nodes() {
    let h = two_delta(6, 8);
    let t = sample_discrete_tree(&h, 6, 6, &mut tree_rng(1, 0)).unwrap();
    let json = serde_json::to_value(&t.root).unwrap();
    assert_eq!(json["level"], 6);
    assert_eq!(json["value"], 6);
    assert!(json["children"].is_array());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_branching_telescopes(a in 0usize..30, b in 0usize..30, x in 1usize..20) {
        let h = two_delta(30, 32);
        let (lo, mid) = (a.min(b), a.max(b));
        let m = 30;
        prop_assume!(h.q(m, x) > 0.0);
        let whole = no_branching_prob(&h, lo, m, x).unwrap();
        let upper = no_branching_prob(&h, mid, m, x).unwrap();
        let lower = no_branching_prob(&h, lo, mid, x + m - mid).unwrap_or(0.0);
        prop_assert!((whole - upper * lower).abs() <= 1e-12 * whole.max(1e-300));
    }

    #[test]
    fn split_laws_are_symmetric_distributions(m in 2usize..30, x in 1usize..25) {
        let h = two_delta(30, 32);
        prop_assume!(h.q(m, x) > 0.0);
        let s = branch_step_distribution(&h, m, x).unwrap();
        prop_assert!(s.identity_residual() < 1e-12);
        if !s.split.is_empty() {
            prop_assert!((s.split.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (p, q) in s.split.iter().zip(s.split.iter().rev()) {
                prop_assert!((p - q).abs() <= 1e-12 * p.max(*q));
            }
        }
    }

    #[test]
    fn continuous_survival_is_monotone(t in 0.5f64..3.0, x in 0.0f64..3.0, f1 in 0.05f64..1.0, f2 in 0.05f64..1.0) {
        let (lo, hi) = (f1.min(f2) * t, f1.max(f2) * t);
        let a = continuous_no_branching(&TreeProfile::Exponential, lo, t, x).unwrap();
        let b = continuous_no_branching(&TreeProfile::Exponential, hi, t, x).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12) && b <= 1.0 + 1e-12);
    }
}
