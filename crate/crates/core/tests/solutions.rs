use std::sync::Arc;

use hermflow::basis::{gauss_legendre_rule, hermite_derivatives_1d, hermite_eval_1d, MultiIndex};
use hermflow::flow::{exact_ou_flow, simulate_flow, simulate_flow_on_path, FlowEnsemble};
use hermflow::model::{FrozenModel, GaussianModel, OrnsteinUhlenbeck, SdeModel, TrigModel};
use hermflow::operators::monotonicity_weight;
use hermflow::rng::{stream_id, BrownianPath, StreamPurpose};
use hermflow::solutions::*;
use hermflow::testfn::{Ball, Bump, Constant, Coordinate, HermiteFunction, LinearCombination, TestFunction};
use hermflow::{CoeffVector, Error};

// E h_k(B_{1/2}) for k = 0..4 (mpmath quadrature, 30 digits).
const GAUSS_DUAL_HALF: [f64; 5] = [
    0.613_291_438_903_102_2,
    0.0,
    -0.144_554_178_430_679_6,
    0.0,
    0.041_729_196_914_719_03,
];
// E h_0(0.3 + B_{1/2}).
const GAUSS_SEMIGROUP_H0: f64 = 0.595_165_937_647_053_3;

fn gaussian() -> Arc<dyn SdeModel<f64>> {
    Arc::new(GaussianModel::new(1))
}

fn ou_model() -> OrnsteinUhlenbeck<f64> {
    OrnsteinUhlenbeck::new(1, 1.0, 1.0)
}

fn frozen() -> Arc<dyn SdeModel<f64>> {
    Arc::new(FrozenModel::new(1))
}

fn bump_psi() -> InitialCondition<f64> {
    InitialCondition::bump(1.0, vec![0.2], 0.8).unwrap()
}

fn ensemble(model: Arc<dyn SdeModel<f64>>, d: &DiscreteInitial<f64>, t: f64, dt: f64, id: u64) -> FlowEnsemble<f64> {
    simulate_flow(model, d.nodes(), t, dt, 11, id).unwrap()
}

fn exact_ou(d: &DiscreteInitial<f64>, steps: usize, dt: f64, id: u64) -> FlowEnsemble<f64> {
    let path = BrownianPath::generate(11, stream_id(id, StreamPurpose::Flow), 1, steps, dt).unwrap();
    exact_ou_flow(&ou_model(), d.nodes(), path).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn frozen_flow_keeps_the_projection() {
    let psi = bump_psi();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = ensemble(frozen(), &d, 0.1, 0.01, 0);
    let path = z_coeffs(&d, &ens, 30).unwrap();
    let proj = psi.projection(30, DEFAULT_PSI_NODES).unwrap();
    assert_eq!(path.len(), 11);
    for n in 0..path.len() {
        assert!(max_abs_diff(path.at(n).values(), proj.values()) < 1e-15);
    }
}

#[test]
fn delta_under_translation_flow_gives_hermite_values_of_brownian_motion() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let ens = ensemble(gaussian(), &d, 0.5, 0.01, 3);
    let path = z_coeffs(&d, &ens, 20).unwrap();
    for n in [0, 7, 50] {
        let b = ens.path().value(n)[0];
        let expected = hermite_eval_1d(20, b);
        assert!(max_abs_diff(path.at(n).values(), &expected) < 1e-13, "n = {n}");
    }
}

#[test]
fn ou_bump_second_coefficient_matches_refined_quadrature() {
    let psi = bump_psi();
    let InitialCondition::Smooth(b) = &psi else {
        unreachable!()
    };
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = exact_ou(&d, 100, 5e-3, 2);
    let path = z_coeffs(&d, &ens, 4).unwrap();
    let refined = gauss_legendre_rule(4 * DEFAULT_PSI_NODES, 0.2 - 0.8, 0.2 + 0.8).unwrap();
    for n in [25, 100] {
        let a = ou_model().decay(n as f64 * 5e-3);
        let m = ens.state(n, 0)[0] - a * ens.node(0)[0];
        let oracle = refined.integrate(|x| {
            let y = m + a * x[0];
            b.value(x) * hermite_eval_1d(2, y)[2]
        });
        assert!((path.at(n).values()[2] - oracle).abs() < 1e-6, "n = {n}");
    }
}

#[test]
fn derivative_delta_uses_the_chain_rule() {
    let psi = InitialCondition::derivative_delta(vec![0.3], &MultiIndex::new(vec![1])).unwrap();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    assert_eq!(d.kind(), DiscreteKind::DerivativeDelta(0));
    let ens = ensemble(Arc::new(TrigModel::default()), &d, 0.2, 0.01, 5);
    let path = z_coeffs(&d, &ens, 10).unwrap();
    let n = 20;
    let x = ens.state(n, 0)[0];
    let j = ens.jacobian(n, 0)[0];
    let dh = hermite_derivatives_1d(10, x, 1);
    let expected: Vec<f64> = dh.iter().map(|v| -v * j).collect();
    assert!(max_abs_diff(path.at(n).values(), &expected) < 1e-13);
    // At t = 0 this is the derivative-delta projection.
    let proj = psi.projection(10, DEFAULT_PSI_NODES).unwrap();
    assert!(max_abs_diff(path.at(0).values(), proj.values()) < 1e-14);
}

#[test]
fn second_order_derivative_delta_is_unsupported() {
    let err = InitialCondition::derivative_delta(vec![0.0], &MultiIndex::new(vec![2])).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

#[test]
fn mismatched_ensemble_is_rejected() {
    let d = bump_psi().discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = simulate_flow(gaussian(), &[0.0, 0.1], 0.1, 0.01, 1, 0).unwrap();
    assert!(matches!(z_coeffs(&d, &ens, 10), Err(Error::NodeMismatch(_))));
}

#[test]
fn distribution_path_records_provenance_and_writes_csv() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let ens = ensemble(gaussian(), &d, 0.02, 0.01, 9);
    let path = z_coeffs(&d, &ens, 2).unwrap();
    assert_eq!(path.provenance(), (11, stream_id(9, StreamPurpose::Flow)));
    assert_eq!(path.trunc(), 2);
    let mut buf = Vec::new();
    path.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,t,k,value");
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn duality_gap_is_small_for_resolved_test_functions() {
    let psi = bump_psi();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let phi: Arc<dyn TestFunction<f64>> = Arc::new(
        LinearCombination::new(vec![
            (0.7, Arc::new(HermiteFunction::one_d(1)) as Arc<dyn TestFunction<f64>>),
            (-0.4, Arc::new(HermiteFunction::one_d(4))),
        ])
        .unwrap(),
    );
    let mut coeffs = vec![0.0; 21];
    coeffs[1] = 0.7;
    coeffs[4] = -0.4;
    let phi_coeffs = CoeffVector::from_values(1, 20, coeffs).unwrap();
    for model in [gaussian(), Arc::new(TrigModel::default()) as Arc<dyn SdeModel<f64>>] {
        let ens = ensemble(model, &d, 0.3, 0.01, 4);
        for n in [0, 10, 30] {
            assert!(duality_gap(&d, &ens, n, phi.as_ref(), &phi_coeffs).unwrap().abs() < 1e-5);
        }
    }
}

#[test]
fn density_of_frozen_and_translated_bumps() {
    let psi = bump_psi();
    let InitialCondition::Smooth(b) = &psi else {
        unreachable!()
    };
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let grid: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();

    let ens = ensemble(frozen(), &d, 0.1, 0.01, 0);
    let dens = z_density_1d(b, &ens, 10, &grid).unwrap();
    for (y, v) in grid.iter().zip(&dens) {
        assert!((v - b.value(&[*y])).abs() < 1e-12);
    }

    let ens = ensemble(gaussian(), &d, 0.2, 0.01, 6);
    let shift = ens.path().value(20)[0];
    let dens = z_density_1d(b, &ens, 20, &grid).unwrap();
    for (y, v) in grid.iter().zip(&dens) {
        assert!((v - b.value(&[y - shift])).abs() < 1e-10, "y = {y}");
    }
}

#[test]
fn ou_density_matches_closed_form_and_projects_to_coefficients() {
    let psi = bump_psi();
    let InitialCondition::Smooth(b) = &psi else {
        unreachable!()
    };
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = exact_ou(&d, 50, 0.01, 7);
    let n = 50;
    // Exact OU flow is affine: X(t, x) = a x + m with a = e^{-lambda t}.
    let a = ou_model().decay(0.5);
    let m = ens.state(n, 0)[0] - a * ens.node(0)[0];

    let grid: Vec<f64> = (0..81).map(|i| -2.0 + 0.05 * i as f64).collect();
    let dens = z_density_1d(b, &ens, n, &grid).unwrap();
    for (y, v) in grid.iter().zip(&dens) {
        let closed = b.value(&[(y - m) / a]) / a;
        assert!((v - closed).abs() < 1e-6, "y = {y}");
    }

    let (lo, hi) = (m + a * (0.2 - 0.8), m + a * (0.2 + 0.8));
    let rule = gauss_legendre_rule(256, lo, hi).unwrap();
    let nodes: Vec<f64> = rule.nodes().to_vec();
    let values = z_density_1d(b, &ens, n, &nodes).unwrap();
    let z = z_coeffs(&d, &ens, 12).unwrap();
    for k in 0..=12 {
        let proj: f64 = nodes
            .iter()
            .zip(&values)
            .zip(rule.weights())
            .map(|((y, v), w)| w * v * hermite_eval_1d(k, *y)[k])
            .sum();
        assert!((proj - z.at(n).values()[k]).abs() < 1e-5, "k = {k}");
    }
}

#[test]
fn semigroup_of_constant_is_exact() {
    let one = |_: &[f64]| 1.0;
    let e = semigroup_apply(&one, gaussian().as_ref(), 0.5, &[0.4], 0.01, 64, 3).unwrap();
    assert_eq!(e.value, 1.0);
    assert_eq!(e.std_error, 0.0);
}

#[test]
fn semigroup_of_linear_function_under_ou() {
    let ou = ou_model();
    let x = 0.8;
    let e = semigroup_apply(&|y: &[f64]| y[0], &ou, 0.5, &[x], 1e-3, 4000, 21).unwrap();
    let exact = ou.decay(0.5) * x;
    assert!((e.value - exact).abs() < 3.0 * e.std_error, "{e:?} vs {exact}");
}

#[test]
fn semigroup_of_h0_under_brownian_motion() {
    let h0 = HermiteFunction::one_d(0);
    let f = |y: &[f64]| TestFunction::<f64>::value(&h0, y);
    let e = semigroup_apply(&f, gaussian().as_ref(), 0.5, &[0.3], 0.01, 4000, 5).unwrap();
    assert!((e.value - GAUSS_SEMIGROUP_H0).abs() < 3.0 * e.std_error, "{e:?}");
}

#[test]
fn semigroup_needs_two_paths() {
    let r = semigroup_apply(&|_: &[f64]| 0.0, gaussian().as_ref(), 0.5, &[0.0], 0.01, 1, 0);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn dual_coefficients_at_time_zero_are_the_projection() {
    let psi = bump_psi();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let dual = dual_semigroup_coeffs(&d, gaussian(), 0.0, 15, 0.01, 8, 1).unwrap();
    let proj = psi.projection(15, DEFAULT_PSI_NODES).unwrap();
    assert_eq!(dual.mean.values(), proj.values());
    assert!(dual.std_errors.iter().all(|&s| s == 0.0));
}

#[test]
fn dual_coefficients_of_delta_under_brownian_motion() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let dual = dual_semigroup_coeffs(&d, gaussian(), 0.5, 4, 0.01, 4000, 13).unwrap();
    for (k, exact) in GAUSS_DUAL_HALF.iter().enumerate() {
        let (mean, se) = (dual.mean.values()[k], dual.std_errors[k]);
        assert!(
            (mean - exact).abs() <= 3.0 * se + 1e-15,
            "k = {k}: {mean} vs {exact} (se {se})"
        );
    }
}

#[test]
fn dual_semigroup_is_adjoint_to_the_semigroup() {
    let d = InitialCondition::delta(vec![0.4])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let ou: Arc<dyn SdeModel<f64>> = Arc::new(ou_model());
    // phi = h_1, so <S_t* psi, phi> is the first dual coefficient.
    let dual = dual_semigroup_coeffs(&d, ou.clone(), 0.3, 3, 0.01, 3000, 2).unwrap();
    let h1 = HermiteFunction::one_d(1);
    let f = |y: &[f64]| TestFunction::<f64>::value(&h1, y);
    let rhs = semigroup_apply(&f, ou.as_ref(), 0.3, &[0.4], 0.01, 3000, 99).unwrap();
    let sigma = (dual.std_errors[1].powi(2) + rhs.std_error.powi(2)).sqrt();
    assert!((dual.mean.values()[1] - rhs.value).abs() < 3.0 * sigma);
}

#[test]
fn strong_residual_vanishes_for_frozen_flow() {
    let psi = bump_psi();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = ensemble(frozen(), &d, 0.2, 0.01, 0);
    let r = strong_residual_series(&d, &HermiteFunction::one_d(2), &ens).unwrap();
    assert!(r.iter().all(|&v| v == 0.0));
}

#[test]
fn strong_residual_shrinks_when_the_step_halves() {
    let d = InitialCondition::delta(vec![0.5])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let phi = HermiteFunction::one_d(0);
    let ou: Arc<dyn SdeModel<f64>> = Arc::new(ou_model());
    for model in [ou, Arc::new(TrigModel::default()) as Arc<dyn SdeModel<f64>>] {
        let rms = strong_residual_rms(model, &d, &phi, 0.5, &[4e-3, 2e-3, 1e-3], 200, 8).unwrap();
        for w in rms.windows(2) {
            assert!(w[0] / w[1] >= 1.3, "{rms:?}");
        }
    }
}

#[test]
fn strong_residual_report_has_one_point_per_path_time() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let ens = ensemble(gaussian(), &d, 0.1, 0.01, 1);
    let report = strong_residual(&d, &HermiteFunction::one_d(0), &ens, "gaussian", 1.0).unwrap();
    assert_eq!(report.series.len(), 11);
    assert_eq!(report.series[0].residual, 0.0);
    assert!(report.pass);
}

#[test]
fn mild_residual_pathwise_with_closed_form_semigroup() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let ou: Arc<dyn SdeModel<f64>> = Arc::new(ou_model());
    let oracle = OuLinearSemigroup {
        ou: ou_model(),
        axis: 0,
    };
    let phi = Coordinate { dim: 1, axis: 0 };
    let ens = ensemble(ou, &d, 0.2, 0.01, 4);
    let report = mild_residual_pathwise(&d, &phi, &ens, &oracle, "ou", 1.0).unwrap();
    assert_eq!(report.series[0].residual, 0.0);
    assert!(report.pass, "{}", report.headline());
}

#[test]
fn mild_residual_expectation_gaussian() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let phi: Arc<dyn TestFunction<f64>> = Arc::new(HermiteFunction::one_d(0));
    let report =
        mild_residual_expectation(&d, phi, gaussian(), &[0.0, 0.25, 0.5], 0.01, 2000, 6, "gaussian", 0.0).unwrap();
    assert_eq!(report.series[0].residual, 0.0);
    assert!(report.pass, "{}", report.headline());
}

#[test]
fn pathwise_mild_residual_accepts_nested_monte_carlo() {
    let d = InitialCondition::delta(vec![0.1])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let trig: Arc<dyn SdeModel<f64>> = Arc::new(TrigModel::default());
    let phi: Arc<dyn TestFunction<f64>> = Arc::new(HermiteFunction::one_d(0));
    let oracle = MonteCarloSemigroup::new(trig.clone(), phi.clone(), 0.02, 64, 3).unwrap();
    let ens = ensemble(trig.clone(), &d, 0.2, 0.02, 0);
    let report = mild_residual_pathwise(&d, phi.as_ref(), &ens, &oracle, "trig", 1.0).unwrap();
    assert!(report.pass, "{}", report.headline());
    assert!(MonteCarloSemigroup::new(trig, phi, 0.02, 1, 3).is_err());
}

#[test]
fn martingale_representation_of_linear_ou() {
    let ou = ou_model();
    let oracle = OuLinearSemigroup {
        ou: ou.clone(),
        axis: 0,
    };
    for id in 0..5 {
        let path = BrownianPath::generate(4, stream_id(id, StreamPurpose::Flow), 1, 200, 2.5e-3).unwrap();
        let ens = exact_ou_flow(&ou, &[0.7], path).unwrap();
        let e = martingale_repr_residual(&Coordinate { dim: 1, axis: 0 }, &ens, &oracle).unwrap();
        assert!(e.value.abs() < 1e-10);
    }
}

#[test]
fn martingale_representation_of_constant_is_zero() {
    let trig: Arc<dyn SdeModel<f64>> = Arc::new(TrigModel::default());
    let c: Arc<dyn TestFunction<f64>> = Arc::new(Constant { dim: 1, value: 1.0 });
    let oracle = MonteCarloSemigroup::new(trig.clone(), c.clone(), 0.05, 8, 1).unwrap();
    let ens = simulate_flow(trig, &[0.3], 0.2, 0.05, 2, 0).unwrap();
    let e = martingale_repr_residual(c.as_ref(), &ens, &oracle).unwrap();
    assert_eq!(e.value, 0.0);
}

#[test]
fn generator_identity_is_zero_on_a_degenerate_interval() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let e = generator_identity_residual(&d, &HermiteFunction::one_d(0), gaussian(), 0.2, 0.2, 0.01, 10, 1).unwrap();
    assert_eq!(e.value, 0.0);
    let r = generator_identity_residual(&d, &HermiteFunction::one_d(0), gaussian(), 0.3, 0.2, 0.01, 10, 1);
    assert!(r.is_err());
}

#[test]
fn total_variation_of_frozen_flow_is_zero() {
    let d = InitialCondition::delta(vec![0.2])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let tv = semigroup_tv_estimate(&d, frozen(), 0.5, 3, 0.5 / 16.0, 20, 4, 1, 1.0).unwrap();
    assert_eq!(tv.intervals, vec![2, 4, 8]);
    assert!(tv.tv.iter().all(|&v| v == 0.0));
    assert_eq!(tv.integral_bound, 0.0);
}

#[test]
fn total_variation_of_ou_plateaus_below_the_integral_bound() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let ou: Arc<dyn SdeModel<f64>> = Arc::new(ou_model());
    let tv = semigroup_tv_estimate(&d, ou, 0.5, 4, 0.5 / 128.0, 30, 500, 3, 1.0).unwrap();
    assert!(tv.tv.windows(2).all(|w| w[1] >= 0.9 * w[0]), "{tv:?}");
    assert!(*tv.tv.last().unwrap() <= 1.1 * tv.integral_bound, "{tv:?}");
}

#[test]
fn support_containment_for_frozen_flow() {
    let psi = InitialCondition::bump(1.0, vec![0.0], 1.0).unwrap();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = ensemble(frozen(), &d, 0.2, 0.01, 0);
    let out = Bump::centered_1d(1.0, 3.0, 0.9).unwrap();
    let report = support_containment_check(&d, &ens, 2.0, &out, 60, 1e-4, "frozen").unwrap();
    assert!(report.pass, "{}", report.headline());
    assert!(report
        .series
        .iter()
        .filter(|p| p.label.as_deref() == Some("direct"))
        .all(|p| p.residual == 0.0));
    assert_eq!(
        report
            .series
            .iter()
            .filter(|p| p.label.as_deref() == Some("direct"))
            .count(),
        21
    );
}

#[test]
fn support_containment_rejects_overlapping_bumps() {
    let psi = InitialCondition::bump(1.0, vec![0.0], 1.0).unwrap();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = ensemble(frozen(), &d, 0.1, 0.01, 0);
    let out = Bump::centered_1d(1.0, 2.5, 0.9).unwrap();
    let r = support_containment_check(&d, &ens, 2.0, &out, 60, 1e-4, "frozen");
    assert!(matches!(r, Err(Error::OverlappingSupports(_))));
}

#[test]
fn residuals_reject_derivative_delta_data() {
    let psi = InitialCondition::derivative_delta(vec![0.0], &MultiIndex::new(vec![1])).unwrap();
    let d = psi.discretize(DEFAULT_PSI_NODES).unwrap();
    let ens = ensemble(gaussian(), &d, 0.05, 0.01, 0);
    let r = strong_residual_series(&d, &HermiteFunction::one_d(0), &ens);
    assert!(matches!(r, Err(Error::Unsupported(_))));
}

#[test]
fn second_moment_is_stable_under_truncation_doubling() {
    let d = InitialCondition::delta(vec![0.0])
        .discretize(DEFAULT_PSI_NODES)
        .unwrap();
    let sup = |trunc| {
        second_moment_profile(&d, gaussian(), 0.5, 0.01, trunc, 400, 17, 0.5)
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (sup(60), sup(120));
    assert!(((fine - coarse) / fine).abs() < 0.1, "{coarse} vs {fine}");
}

#[test]
fn uniqueness_proxy_holds_for_builtin_models() {
    let psi1 = Bump::centered_1d(1.0, 0.0, 1.0).unwrap();
    let psi2 = Bump::centered_1d(0.6, 0.1, 0.8).unwrap();
    let ou: Arc<dyn SdeModel<f64>> = Arc::new(ou_model());
    let models = [
        ("gaussian", gaussian()),
        ("ou", ou),
        ("trig", Arc::new(TrigModel::default()) as _),
    ];
    for (name, model) in models {
        let ball = Ball {
            center: vec![0.0],
            radius: 4.0,
        };
        let c_k = monotonicity_weight(model.as_ref()).sup_on_ball(&ball);
        let report = uniqueness_proxy(
            &psi1,
            &psi2,
            model.clone(),
            0.5,
            0.01,
            200,
            3,
            c_k,
            0.1,
            DEFAULT_PSI_NODES,
            name,
        )
        .unwrap();
        assert!(report.pass, "{}", report.headline());
    }
}

#[test]
fn flows_driven_by_one_path_share_it() {
    let path = BrownianPath::generate(1, 2, 1, 10, 0.01).unwrap();
    let a = simulate_flow_on_path(gaussian(), &[0.0], path.clone()).unwrap();
    let b = simulate_flow_on_path(gaussian(), &[1.0], path).unwrap();
    assert!((a.state(10, 0)[0] + 1.0 - b.state(10, 0)[0]).abs() < 1e-14);
}
