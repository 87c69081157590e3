use perpetua::iterator::{op_count_model, run};
use perpetua::lattice::support_q;
use perpetua::model::KnownLaw;
use perpetua::{bounds, kolmogorov_between, kolmogorov_vs, presets, DiscretisationSchedule, IterationPlan, PerpetuitySpec, UMode};
use proptest::prelude::*;

fn arb_spec() -> impl Strategy<Value = PerpetuitySpec> {
    prop_oneof![
        Just(presets::quickselect()),
        Just(presets::interval_splitting()),
        (0.05f64..0.95).prop_map(|q| presets::ax1_uniform(q).unwrap()),
    ]
}

fn arb_sched() -> impl Strategy<Value = DiscretisationSchedule> {
    let base = prop_oneof![(1u32..4).prop_map(DiscretisationSchedule::polynomial), (1.2f64..2.0).prop_map(DiscretisationSchedule::exponential)];
    (base, any::<bool>()).prop_map(|(s, sym)| if sym { s.with_u_mode(UMode::Symmetric) } else { s })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iteration_preserves_mass_and_support(spec in arb_spec(), sched in arb_sched(), n in 1u32..9) {
        let res = run::<f64>(&IterationPlan::new(spec.clone(), sched, n)).unwrap();
        let pmf = &res.final_pmf;
        prop_assert_eq!(pmf.s(), sched.s(n).unwrap());
        prop_assert!(pmf.mass().iter().all(|&m| m >= 0.0));
        prop_assert!((pmf.total_mass() - 1.0).abs() <= 1e-12);
        prop_assert!(res.defects.iter().all(|d| d.abs() <= 1e-12));
        let (lo, hi) = support_q(&spec, n).k_range(pmf.s());
        let (occ_lo, occ_hi) = pmf.occupied_range();
        prop_assert!(lo <= occ_lo && occ_hi <= hi, "{:?} outside {:?}", (occ_lo, occ_hi), (lo, hi));
        prop_assert_eq!(res.op_count, op_count_model(&spec, &sched, n).unwrap());
    }

    #[test]
    fn thread_count_is_invisible(spec in arb_spec(), sched in arb_sched(), n in 1u32..8, threads in 2usize..6) {
        let plan = IterationPlan::new(spec, sched, n);
        let a = run::<f64>(&plan.clone().with_threads(1)).unwrap().final_pmf;
        let b = run::<f64>(&plan.with_threads(threads)).unwrap().final_pmf;
        prop_assert_eq!(a.k_min(), b.k_min());
        prop_assert!(a.mass().iter().zip(b.mass()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn single_precision_tracks_double(spec in arb_spec(), r in 1u32..3, n in 1u32..10) {
        let plan = IterationPlan::new(spec, DiscretisationSchedule::polynomial(r), n);
        let wide = run::<f64>(&plan).unwrap().final_pmf;
        let narrow = run::<f32>(&plan).unwrap().final_pmf;
        prop_assert!(kolmogorov_between(&wide, &narrow) <= 1e-5);
    }

    #[test]
    fn interval_splitting_certificate_is_sound(r in 1u32..4, n in 2u32..14, sym in any::<bool>()) {
        let spec = presets::interval_splitting();
        let base = DiscretisationSchedule::polynomial(r);
        let sched = if sym { base.with_u_mode(UMode::Symmetric) } else { base };
        let pmf = run::<f64>(&IterationPlan::new(spec.clone(), sched, n)).unwrap().final_pmf;
        let cert = bounds::optimize_p(&spec, &sched, n, 1.5, bounds::P_RANGE).unwrap();
        let law = KnownLaw::Beta { alpha: 2, beta: 2 };
        let measured = kolmogorov_vs(&pmf, &|x: f64| law.cdf(x));
        prop_assert!(measured <= cert.bound, "{} > {}", measured, cert.bound);
    }

    #[test]
    fn snapshots_match_shorter_runs(n in 2u32..8, every in 1u32..4) {
        let spec = presets::quickselect();
        let sched = DiscretisationSchedule::polynomial(2);
        let res = run::<f64>(&IterationPlan::new(spec.clone(), sched, n).with_snapshots(every)).unwrap();
        for (step, snap) in &res.snapshots {
            prop_assert_eq!(step % every, 0);
            let direct = run::<f64>(&IterationPlan::new(spec.clone(), sched, *step)).unwrap().final_pmf;
            prop_assert_eq!(snap, &direct);
        }
    }
}

#[test]
fn finer_schedules_approach_the_limit() {
    let spec = presets::interval_splitting();
    let law = KnownLaw::Beta { alpha: 2, beta: 2 };
    let dist = |n| {
        let pmf = run::<f64>(&IterationPlan::new(spec.clone(), DiscretisationSchedule::polynomial(2), n)).unwrap().final_pmf;
        kolmogorov_vs(&pmf, &|x: f64| law.cdf(x))
    };
    let (d10, d40) = (dist(10), dist(40));
    assert!(d40 < d10 / 4.0, "{d10} -> {d40}");
}
