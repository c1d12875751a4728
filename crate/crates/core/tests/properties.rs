use std::sync::Arc;

use hermflow::flow::{exact_ou_flow, simulate_flow};
use hermflow::model::{GaussianModel, OrnsteinUhlenbeck, SdeModel, TrigModel};
use hermflow::report::ReportBuilder;
use hermflow::rng::{stream_id, BrownianPath, StreamPurpose};
use hermflow::solutions::{duality_gap, z_coeffs, InitialCondition, DEFAULT_PSI_NODES};
use hermflow::testfn::HermiteFunction;
use hermflow::CoeffVector;
use proptest::prelude::*;

fn model(tag: usize) -> Arc<dyn SdeModel<f64>> {
    match tag {
        0 => Arc::new(GaussianModel::new(1)),
        1 => Arc::new(OrnsteinUhlenbeck::new(1, 1.0, 1.0)),
        _ => Arc::new(TrigModel::default()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn z_coeffs_are_linear_in_the_bump_amplitude(
        a1 in -2.0f64..2.0,
        a2 in -2.0f64..2.0,
        center in -0.5f64..0.5,
        scale in 0.3f64..1.2,
        tag in 0usize..3,
        id in 0u64..1000,
    ) {
        let d1 = InitialCondition::bump(a1, vec![center], scale).unwrap().discretize(DEFAULT_PSI_NODES).unwrap();
        let d2 = InitialCondition::bump(a2, vec![center], scale).unwrap().discretize(DEFAULT_PSI_NODES).unwrap();
        let sum = InitialCondition::bump(a1 + a2, vec![center], scale).unwrap().discretize(DEFAULT_PSI_NODES).unwrap();
        let ens = simulate_flow(model(tag), d1.nodes(), 0.1, 0.01, 5, id).unwrap();
        let (z1, z2, zs) = (z_coeffs(&d1, &ens, 12).unwrap(), z_coeffs(&d2, &ens, 12).unwrap(), z_coeffs(&sum, &ens, 12).unwrap());
        for n in [0, 5, 10] {
            let combined = z1.at(n).axpy(1.0, z2.at(n)).unwrap();
            let scale_ref = 1.0 + zs.at(n).values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in combined.values().iter().zip(zs.at(n).values()) {
                prop_assert!((x - y).abs() <= 1e-14 * scale_ref);
            }
        }
    }

    #[test]
    fn coefficient_pairing_matches_direct_pairing(
        center in -0.5f64..0.5,
        scale in 0.4f64..1.2,
        k in 0usize..6,
        tag in 0usize..3,
        id in 0u64..1000,
    ) {
        let d = InitialCondition::bump(1.0, vec![center], scale).unwrap().discretize(DEFAULT_PSI_NODES).unwrap();
        let ens = simulate_flow(model(tag), d.nodes(), 0.2, 0.01, 9, id).unwrap();
        let phi_coeffs = CoeffVector::unit(1, 20, k).unwrap();
        for n in [0, 10, 20] {
            let gap = duality_gap(&d, &ens, n, &HermiteFunction::one_d(k), &phi_coeffs).unwrap();
            prop_assert!(gap.abs() < 1e-5, "gap {gap}");
        }
    }

    #[test]
    fn z_coeffs_at_time_n_ignore_later_increments(id in 0u64..1000, cut in 1usize..20) {
        let d = InitialCondition::delta(vec![0.3]).discretize(DEFAULT_PSI_NODES).unwrap();
        let path = BrownianPath::generate(3, stream_id(id, StreamPurpose::Flow), 1, 20, 0.01).unwrap();
        let full = hermflow::flow::simulate_flow_on_path(model(2), d.nodes(), path.clone()).unwrap();
        let short = hermflow::flow::simulate_flow_on_path(model(2), d.nodes(), path.truncated(cut)).unwrap();
        let (zf, zs) = (z_coeffs(&d, &full, 8).unwrap(), z_coeffs(&d, &short, 8).unwrap());
        for n in 0..=cut {
            prop_assert_eq!(zf.at(n).values(), zs.at(n).values());
        }
    }

    #[test]
    fn exact_ou_points_reproduce_ensemble_states(x in -2.0f64..2.0, id in 0u64..1000, n in 0usize..30) {
        let ou = OrnsteinUhlenbeck::new(1, 0.7, 1.3);
        let path = BrownianPath::generate(1, stream_id(id, StreamPurpose::Flow), 1, 30, 0.01).unwrap();
        let ens = exact_ou_flow(&ou, &[x], path).unwrap();
        let (state, jac) = ens.propagate_point(&[x], n).unwrap();
        prop_assert_eq!(state[0], ens.state(n, 0)[0]);
        prop_assert_eq!(jac[0], ens.jacobian(n, 0)[0]);
    }

    #[test]
    fn report_passes_iff_every_residual_is_within_its_bound(
        points in prop::collection::vec((-1.0f64..1.0, 0.0f64..1.0), 1..20),
    ) {
        let mut b = ReportBuilder::new("probe", "none", 0);
        for (i, &(r, bound)) in points.iter().enumerate() {
            b.point(i as f64, r, 0.0, bound);
        }
        let report = b.build();
        let expected = points.iter().all(|&(r, bound)| r.abs() <= bound);
        prop_assert_eq!(report.pass, expected);
    }
}
