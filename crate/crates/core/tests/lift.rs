use std::f64::consts::PI;
use std::sync::OnceLock;

use kredux::fixtures::random_field_m;
use kredux::flow::*;
use kredux::lift::*;
use kredux::reduction::reduced_potential;
use kredux::statics::*;
use kredux::*;
use proptest::prelude::*;

fn torus() -> TestbedGrid {
    TestbedGrid::torus(32, 9, -1.0, 1.0).unwrap()
}

fn uniform(n: usize, t_end: f64) -> Vec<f64> {
    (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
}

fn given(times: &[f64], f: impl Fn(f64) -> ScalarFieldM) -> FlowPath {
    FlowPath::from_fn(FlowKind::Given, Form11M::reference(torus()), times, f).unwrap()
}

fn max_second(p: &FlowPath) -> f64 {
    p.time_derivative(2).unwrap().iter().map(|d| d.values.iter().cloned().fold(f64::MIN, f64::max)).fold(f64::MIN, f64::max)
}

fn mid_taus(lift: &LiftResult, count: usize) -> Vec<f64> {
    let (lo, hi) = lift.tau_range;
    (0..count).map(|i| lo + (hi - lo) * (i + 1) as f64 / (count + 1) as f64).collect()
}

#[test]
fn concavity_shift_closed_forms() {
    let g = torus();
    let times = uniform(21, 1.0);
    let u = ScalarFieldM::from_fn(g, |x, _| 0.05 * (2.0 * PI * x).sin());
    for p in [given(&times, |_| ScalarFieldM::constant(g, 0.0)), given(&times, |t| u.map(|v| v * t))] {
        let (shifted, a) = concavity_shift(&p).unwrap();
        for (t, a) in times.iter().zip(&a) {
            assert!((a + t * t).abs() < 1e-12);
        }
        assert!(max_second(&shifted) <= -2.0 + 1e-9);
    }
    // ψ_t = t² v with max v = 1: a'' = −4, shifted ∂² = 2v − 4
    let v = ScalarFieldM::from_fn(g, |x, y| (2.0 * PI * x).cos() * (2.0 * PI * y).cos());
    let short = uniform(21, 0.1);
    let p = given(&short, |t| v.map(|w| w * t * t));
    let (shifted, a) = concavity_shift(&p).unwrap();
    for (t, a) in short.iter().zip(&a) {
        assert!((a + 2.0 * t * t).abs() < 1e-10, "{a}");
    }
    for d in shifted.time_derivative(2).unwrap() {
        assert!(d.zip_map(&v, |s, w| s - (2.0 * w - 4.0)).interior_linf() < 1e-8);
    }
    assert!(concavity_shift(&given(&times[..4], |_| ScalarFieldM::constant(g, 0.0))).is_err());
}

/// `ψ_t = −t²`: `∂_t ψ = ℓ/2` gives `μ = −ℓ/4` and `φ = ℓ²/16`.
#[test]
fn one_dimensional_legendre_oracle() {
    let g = torus();
    let times = uniform(41, 1.0);
    let p = given(&times, |t| ScalarFieldM::constant(g, -t * t));
    let lift = legendre_lift(&p, LiftOptions { nl: 65 }).unwrap();
    let k = &lift.data;
    let mu = ScalarFieldP::from_fn(k.grid(), |_, _, l| -0.25 * l);
    let phi = ScalarFieldP::from_fn(k.grid(), |_, _, l| l * l / 16.0);
    assert!(k.mu.sub(&mu).interior_linf() < 1e-12);
    assert!(k.phi.sub(&phi).interior_linf() < 1e-12);
    let r = roundtrip_check(&p, &lift, &mid_taus(&lift, 4)).unwrap();
    assert!(r.report.linf < 1e-10 && r.omega_gap < 1e-10);
    for tau in mid_taus(&lift, 3) {
        let psi = reduced_potential(k, tau).unwrap().psi_tau;
        assert!(psi.values.iter().all(|v| (v + tau * tau).abs() < 1e-10));
    }
}

/// The shifted `ψ_t = t·u(x)` is recovered at every level up to a constant.
#[test]
fn linear_path_round_trip() {
    let g = torus();
    let u = ScalarFieldM::from_fn(g, |x, _| 0.05 * (2.0 * PI * x).sin());
    let (p, _) = concavity_shift(&given(&uniform(41, 1.0), |t| u.map(|v| v * t))).unwrap();
    let lift = legendre_lift(&p, LiftOptions { nl: 129 }).unwrap();
    let taus = mid_taus(&lift, 5);
    let r = roundtrip_check(&p, &lift, &taus).unwrap();
    assert!(r.report.linf < 1e-6, "{}", r.report.to_json());
    assert!(r.omega_gap < 1e-6);
    assert_eq!(lift.criterion_mismatches, 0);
    assert!(lift.max_concavity < 0.0 && lift.data.positivity_min_eig > 0.0);
    assert!(lift.max_inversion_residual < 1e-10);
    let mu = &lift.data.mu;
    for s in 0..g.spatial_len() {
        assert!(mu.fiber_slice(s).windows(2).all(|w| w[1] < w[0]));
    }
}

/// A constant path lifts to a product: reductions are `σ` and nothing mixes.
#[test]
fn constant_path_lifts_to_a_product() {
    let g = torus();
    let (p, a) = concavity_shift(&given(&uniform(21, 1.0), |_| ScalarFieldM::constant(g, 0.0))).unwrap();
    assert!((a[20] + 1.0).abs() < 1e-12);
    let lift = legendre_lift(&p, LiftOptions::default()).unwrap();
    assert!(lift.data.omega.br.iter().chain(lift.data.omega.bi.iter()).all(|v| v.abs() < 1e-12));
    for tau in mid_taus(&lift, 3) {
        let red = reduced_potential(&lift.data, tau).unwrap();
        assert!(red.omega_tau.h.iter().all(|h| (h - 1.0).abs() < 1e-10));
    }
}

#[test]
fn lift_errors() {
    let g = torus();
    let times = uniform(21, 1.0);
    let convex = given(&times, |t| ScalarFieldM::constant(g, t * t));
    assert!(matches!(legendre_lift(&convex, LiftOptions::default()), Err(KreduxError::NonConcave(_))));
    let short = given(&times[..6], |t| ScalarFieldM::constant(g, -t * t));
    assert!(matches!(legendre_lift(&short, LiftOptions::default()), Err(KreduxError::TooFewSamples { .. })));
    // fibers whose ranges of 2∂tψ do not overlap
    let u = ScalarFieldM::from_fn(g, |x, _| 0.02 * (2.0 * PI * x).sin());
    let steep = given(&uniform(21, 0.01), |t| u.map(|v| v * t - t * t));
    assert!(matches!(legendre_lift(&steep, LiftOptions::default()), Err(KreduxError::InvalidArgument(_))));
    let p = given(&times, |t| ScalarFieldM::constant(g, -t * t));
    let lift = legendre_lift(&p, LiftOptions { nl: 33 }).unwrap();
    assert!(matches!(roundtrip_check(&p, &lift, &[lift.tau_range.1 + 0.01]), Err(KreduxError::OutOfRange { .. })));
}

/// A Calabi path from a small bump, sampled densely enough to lift.
fn calabi_path() -> &'static FlowPath {
    static PATH: OnceLock<FlowPath> = OnceLock::new();
    PATH.get_or_init(|| {
        let g = torus();
        let psi0 = ScalarFieldM::from_fn(g, |x, _| 0.002 * (2.0 * PI * x).cos());
        calabi_integrate(&psi0, &Form11M::reference(g), Schedule::new(0.004, 1e-6, 200)).unwrap()
    })
}

#[test]
fn lifted_calabi_path_satisfies_the_reduced_equation() {
    let (p, _) = concavity_shift_with(calabi_path(), 1000.0).unwrap();
    assert!(max_second(&p) <= -2.0 + 1e-9);
    let lift = legendre_lift(&p, LiftOptions { nl: 129 }).unwrap();
    let taus = mid_taus(&lift, 3);
    assert!(roundtrip_check(&p, &lift, &taus).unwrap().report.linf < 1e-6);
    let r = residual_calabi(&lift.data, &Profile::Constant(0.0), &taus).unwrap();
    assert!(r.reduced_linf() < 1e-5, "{}", r.to_json());
}

#[test]
fn lifted_kr_and_pseudo_calabi_paths() {
    let g = torus();
    let sigma = Form11M::reference(g);
    let psi0 = ScalarFieldM::from_fn(g, |_, y| 0.01 * (2.0 * PI * y).cos());
    let kr = kr_integrate(&psi0, &sigma, Schedule::new(0.01, 1e-3, 100), false, 0.0).unwrap();
    let (p, _) = concavity_shift_with(&kr, 100.0).unwrap();
    let lift = legendre_lift(&p, LiftOptions { nl: 129 }).unwrap();
    let r = residual_kr(&lift.data, &mid_taus(&lift, 3)).unwrap();
    assert!(r.reduced_linf() < 1e-4, "{}", r.to_json());

    let pc = pseudo_calabi_integrate(&psi0, &sigma, Schedule::new(0.01, 1e-3, 100)).unwrap();
    let (p, _) = concavity_shift_with(&pc.rescale_time(2.0).unwrap(), 100.0).unwrap();
    let lift = legendre_lift(&p, LiftOptions { nl: 129 }).unwrap();
    let r = residual_pseudo_calabi(&lift.data, &mid_taus(&lift, 3)).unwrap();
    assert!(r.reduced_linf() < 1e-5, "{}", r.to_json());
}

#[test]
fn converse_w_hypothesis() {
    let g = torus();
    let stationary = given(&uniform(11, 0.01), |_| ScalarFieldM::constant(g, 0.0));
    assert!(matches!(calabi_converse_w(&stationary, &Profile::Constant(0.0), 1.0), Err(KreduxError::HypothesisViolated(_))));

    let psi0 = ScalarFieldM::from_fn(g, |x, _| 0.05 * (2.0 * PI * x).cos());
    let p = calabi_integrate(&psi0, &Form11M::reference(g), Schedule::new(2e-5, 1e-6, 10)).unwrap();
    let scal: Vec<Vec<f64>> = (0..p.len()).map(|k| kredux::curvature::scal_m(&p.omega(k)).unwrap().values.to_vec()).collect();
    let dt = p.uniform_dt().unwrap();
    let steepest = (1..p.len())
        .flat_map(|k| (0..g.spatial_len()).map(move |s| (k, s)))
        .map(|(k, s)| (scal[k][s] - scal[k - 1][s]).abs() / dt)
        .fold(0.0, f64::max);
    let slope = 10.0 * steepest;
    let h = Profile::analytic(move |t| slope * t);
    let w = calabi_converse_w(&p, &h, 1.0).unwrap();
    assert!(w.min_w > 0.0);
    assert!(w.w.iter().all(|f| f.values.iter().all(|v| *v > 0.0)));
    assert!(matches!(calabi_converse_w(&p, &h, -1.0), Err(KreduxError::HypothesisViolated(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn random_linear_paths_round_trip(seed in 0u64..1000) {
        let g = TestbedGrid::torus(16, 9, -1.0, 1.0).unwrap();
        let u = random_field_m(g, seed, 0.004);
        let p = FlowPath::from_fn(FlowKind::Given, Form11M::reference(g), &uniform(31, 1.0), |t| u.map(|v| v * t)).unwrap();
        let (p, _) = concavity_shift(&p).unwrap();
        let lift = legendre_lift(&p, LiftOptions { nl: 65 }).unwrap();
        let r = roundtrip_check(&p, &lift, &mid_taus(&lift, 3)).unwrap();
        prop_assert!(r.report.linf < 1e-6, "{:e}", r.report.linf);
        prop_assert_eq!(lift.criterion_mismatches, 0);
    }
}
