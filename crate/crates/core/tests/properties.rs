use std::collections::BTreeMap;

use proptest::prelude::*;
use usrd_core::fixed::{usrdf_fs, FixedSetSolver};
use usrd_core::irs::{evaluate_irs, usrdf_irs};
use usrd_core::mrs::MrsSolver;
use usrd_core::partition::{full_partition, modified_distortion, theta1_partition, theta2_partition};
use usrd_core::rd::{rd_multi, rd_oracle, rd_single, Constraint, RdOptions, RdSource, SingleSolver};
use usrd_core::{instances, validate_model, DistortionTable, RawModel, Setting, SourceModel, TOL_CONVEX, TOL_GAP};

fn pmf(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05f64..1.0, len).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

fn table(rows: usize, cols: usize) -> impl Strategy<Value = DistortionTable> {
    proptest::collection::vec(0.0f64..1.0, rows * cols).prop_map(move |d| DistortionTable::plain(rows, cols, d))
}

/// Two components of sizes 2 or 3, X1 recovered under Hamming distortion, 1 to 3 members.
fn generic_model() -> impl Strategy<Value = SourceModel> {
    (2usize..=3, 2usize..=3, 1usize..=3)
        .prop_flat_map(|(a1, a2, members)| (Just(a1), Just(a2), proptest::collection::vec(pmf(a1 * a2), members)))
        .prop_map(|(a1, a2, pmfs)| {
            let labels: Vec<String> = (1..=pmfs.len()).map(|t| t.to_string()).collect();
            let family: BTreeMap<String, Vec<f64>> = labels.iter().cloned().zip(pmfs).collect();
            let distortion = (0..a1 * a1).map(|i| f64::from(u8::from(i / a1 != i % a1))).collect();
            let raw = RawModel {
                m: 2,
                alphabets: vec![a1, a2],
                recovery_set: vec![1],
                prior: vec![1.0 / labels.len() as f64; labels.len()],
                theta_labels: labels,
                family,
                distortion,
                reproduction_alphabets: vec![a1],
            };
            validate_model(raw).expect("generated model is valid")
        })
}

/// Two-member binary pair with crossover parameters kept away from 0 and 1/2.
fn binary_pair() -> impl Strategy<Value = SourceModel> {
    (proptest::array::uniform2(0.05f64..0.45), proptest::array::uniform2(0.05f64..0.45), 0.2f64..0.8, any::<bool>()).prop_map(
        |(p, q, mu, virtual_channel)| {
            let prior = [mu, 1.0 - mu];
            if virtual_channel {
                instances::virtual_bsc(&p, &q, Some(&prior))
            } else {
                instances::independent_bits(&p, &q, Some(&prior))
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partitions_and_marginals(model in generic_model()) {
        let t2 = theta2_partition(&model, 1);
        for a in model.k_subsets(1) {
            prop_assert!(t2.refines(&theta1_partition(&model, &a)));
        }
        for a in model.k_subsets(2).into_iter().chain(model.k_subsets(1)) {
            for tau in 0..model.num_theta() {
                let total: f64 = model.marginal(tau, &a).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            for cell in &theta1_partition(&model, &a).cells {
                let d = modified_distortion(&model, cell, &a);
                prop_assert!(d.data().iter().all(|&v| (-1e-12..=model.d_max() + 1e-12).contains(&v)));
            }
        }
        if model.num_theta() == 1 {
            prop_assert_eq!(t2.len(), 1);
            prop_assert_eq!(full_partition(&model).len(), 1);
            prop_assert_eq!(theta1_partition(&model, &model.k_subsets(1)[0]).len(), 1);
        }
    }

    #[test]
    fn single_constraint_curve_is_decreasing_and_convex(
        (px, d) in (2usize..=3).prop_flat_map(|n| (pmf(n), table(n, n))),
        u in 0.0f64..1.0,
        v in 0.0f64..1.0,
    ) {
        let src = RdSource::new(px);
        let mut solver = SingleSolver::new(src.clone(), d.clone(), RdOptions::default()).unwrap();
        let (lo, hi) = solver.bounds();
        prop_assume!(hi - lo > 1e-3);
        let (a, b) = (lo + (hi - lo) * u.min(v), lo + (hi - lo) * u.max(v));
        let ra = solver.at_distortion(a).unwrap().rate;
        let rb = solver.at_distortion(b).unwrap().rate;
        let rm = solver.at_distortion(0.5 * (a + b)).unwrap().rate;
        prop_assert!(rb <= ra + TOL_GAP);
        prop_assert!(rm <= 0.5 * (ra + rb) + TOL_CONVEX + TOL_GAP, "{} {} {}", ra, rm, rb);
        prop_assert_eq!(rd_single(&src, &d, hi).unwrap().rate, 0.0);
        prop_assert!(rd_single(&src, &d, hi - 0.05 * (hi - lo)).unwrap().rate > 0.0);
    }

    #[test]
    fn extra_constraint_never_lowers_rate(
        (px, d1, d2) in (2usize..=3).prop_flat_map(|n| (pmf(n), table(n, n), table(n, n))),
        u in 0.3f64..1.0,
        v in 0.3f64..1.0,
    ) {
        let src = RdSource::new(px);
        let level = |d: &DistortionTable, s: f64| {
            let (lo, hi) = SingleSolver::new(src.clone(), d.clone(), RdOptions::default()).unwrap().bounds();
            lo + s * (hi - lo)
        };
        let c1 = Constraint::new(d1.clone(), level(&d1, u));
        let c2 = Constraint::new(d2.clone(), level(&d2, v));
        let one = rd_multi(&src, std::slice::from_ref(&c1)).unwrap().rate;
        if let Ok(both) = rd_multi(&src, &[c1, c2]) {
            prop_assert!(both.rate >= one - TOL_GAP, "{} < {}", both.rate, one);
        }
    }

    #[test]
    fn lattice_oracle_never_beats_solver(px in pmf(2), d in table(2, 2), u in 0.0f64..1.0) {
        let src = RdSource::new(px);
        let (lo, hi) = SingleSolver::new(src.clone(), d.clone(), RdOptions::default()).unwrap().bounds();
        let delta = lo + u * (hi - lo);
        let exact = rd_single(&src, &d, delta).unwrap().rate;
        if let Ok(lattice) = rd_oracle(&src, &[Constraint::new(d, delta)], 16) {
            prop_assert!(lattice >= exact - TOL_GAP, "{} < {}", lattice, exact);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fixed_set_settings_and_certificate(model in binary_pair(), u in 0.05f64..0.95) {
        for a in model.k_subsets(1) {
            let mut bayes = FixedSetSolver::new(&model, &a, Setting::Bayes).unwrap();
            let mut worst = FixedSetSolver::new(&model, &a, Setting::NonBayes).unwrap();
            let (blo, bhi) = bayes.bounds();
            let (nlo, nhi) = worst.bounds();
            prop_assert!(blo <= nlo + 1e-9 && bhi <= nhi + 1e-9);
            let delta = nlo + u * (nhi - nlo);
            let b = bayes.solve(delta).unwrap();
            let n = worst.solve(delta).unwrap();
            prop_assert!(b.rate <= n.rate + TOL_GAP, "{} > {}", b.rate, n.rate);

            let delta = blo + u * (bhi - blo);
            let sol = bayes.solve(delta).unwrap();
            if let Some(alloc) = &sol.allocation {
                prop_assert!(alloc.average_budget() <= delta + 1e-7);
                for cell in &alloc.cells {
                    let at_floor = (cell.delta - cell.min_distortion).abs() < 1e-7;
                    prop_assert!(at_floor || cell.rate >= alloc.rate - 1e-5, "{:?}", alloc);
                }
            }

            let grid: Vec<f64> = (0..=6).map(|i| blo + (bhi - blo) * i as f64 / 6.0).collect();
            let rates: Vec<f64> = grid.iter().map(|&d| bayes.solve(d).unwrap().rate).collect();
            for w in rates.windows(3) {
                prop_assert!(w[1] <= w[0] + TOL_GAP && w[2] <= w[1] + TOL_GAP);
                prop_assert!(w[1] <= 0.5 * (w[0] + w[2]) + TOL_CONVEX + TOL_GAP, "{:?}", rates);
            }
        }
    }

    #[test]
    fn sampler_classes_nest(model in binary_pair(), u in 0.1f64..0.9, bayes in any::<bool>()) {
        let setting = if bayes { Setting::Bayes } else { Setting::NonBayes };
        let (lo, hi) = usrd_core::irs::delta_bounds_irs(&model, 1, setting).unwrap();
        let delta = lo + u * (hi - lo);
        let irs = usrdf_irs(&model, 1, delta, setting).unwrap();
        for a in model.k_subsets(1) {
            if let Ok(fs) = usrdf_fs(&model, &a, delta, setting) {
                prop_assert!(irs.rate <= fs.rate + TOL_GAP, "irs {} fs{} {}", irs.rate, a, fs.rate);
            }
        }
        let again = evaluate_irs(&model, &irs.sampling, delta, setting).unwrap().expect("feasible");
        prop_assert!((again.rate - irs.rate).abs() < 1e-6);

        let mut mrs = MrsSolver::new(&model, 1, setting).unwrap();
        let sol = mrs.solve(delta).unwrap();
        prop_assert!(sol.rate <= irs.rate + TOL_GAP, "mrs {} irs {}", sol.rate, irs.rate);
        prop_assert!(sol.policy.slots.len() <= 2 * model.num_theta() + 1);
        let fresh = sol.policy.reevaluate(&model).unwrap();
        prop_assert!((fresh.rate() - sol.rate).abs() < 1e-6);
    }
}
